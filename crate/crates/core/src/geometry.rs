//! Rectangular channel meshes, boundary tagging, fluxes, and the
//! divergence-free extension of the boundary data.
//!
//! The domain is the rectangle [0, L] x [0, H] meshed by nx x ny equal
//! quadrilaterals with bilinear velocity nodes.  The left edge carries the
//! inflow (Dirichlet) data, top and bottom are impermeable walls with friction
//! (zero normal velocity, free tangential slip), and the right edge holds one
//! or two outflow openings through which only the net flux is prescribed.
//!
//! The extension field lifts the boundary data into the volume through a
//! discrete stream function: psi is constant along each wall component, jumps
//! by the prescribed flux across each outlet, integrates the inlet profile
//! along the inflow edge, and is blended into the interior.  A final exact
//! least-squares projection enforces, to machine precision, the nodal inlet
//! values, the wall impermeability, the outlet trapezoid fluxes, and a zero
//! centered-difference divergence at every interior node.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Role of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Prescribed velocity (the inflow edge).
    Dirichlet,
    /// Impermeable wall with friction: zero normal velocity, free slip.
    Wall,
    /// Outflow opening, identified by index; only the net flux is prescribed.
    Outflow(u8),
}

/// Where the outflow openings sit on the right edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagLayout {
    /// The whole right edge is a single opening.
    SingleOutlet,
    /// The right edge splits into a lower and an upper opening separated by
    /// one wall edge, so the two closures are disjoint.
    TwoOutlet,
}

/// One straight boundary edge between two consecutive boundary nodes.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    /// Endpoint node ids, ordered along the counter-clockwise boundary walk.
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub len: f64,
}

/// Structured quadrilateral mesh of a straight channel.
#[derive(Debug, Clone)]
pub struct ChannelMesh {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub height: f64,
    pub hx: f64,
    pub hy: f64,
    pub layout: TagLayout,
    coords: Vec<[f64; 2]>,
    cells: Vec<[usize; 4]>,
    boundary: Vec<BoundaryEdge>,
}

/// Builds the nx x ny channel mesh with the requested outlet layout.
pub fn build_rect_channel(
    nx: usize,
    ny: usize,
    length: f64,
    height: f64,
    layout: TagLayout,
) -> Result<ChannelMesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::Geometry(format!(
            "mesh must have at least 2 cells per direction, got {nx} x {ny}"
        )));
    }
    if layout == TagLayout::TwoOutlet && ny < 3 {
        return Err(Error::Geometry(
            "two-outlet layout needs ny >= 3 so a wall edge can separate the openings".into(),
        ));
    }
    if !(length > 0.0) || !(height > 0.0) || !length.is_finite() || !height.is_finite() {
        return Err(Error::Geometry(format!(
            "channel dimensions must be positive and finite, got {length} x {height}"
        )));
    }
    let hx = length / nx as f64;
    let hy = height / ny as f64;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push([i as f64 * hx, j as f64 * hy]);
        }
    }
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // Counter-clockwise: sw, se, ne, nw.
            cells.push([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
        }
    }

    // Boundary edges in one counter-clockwise walk starting at the origin;
    // the walk order is what the stream-function construction integrates
    // along, so it is part of the mesh contract.
    let right_tag = |j: usize| -> BoundaryTag {
        match layout {
            TagLayout::SingleOutlet => BoundaryTag::Outflow(0),
            TagLayout::TwoOutlet => {
                let sep = ny / 2;
                if j < sep {
                    BoundaryTag::Outflow(0)
                } else if j == sep {
                    BoundaryTag::Wall
                } else {
                    BoundaryTag::Outflow(1)
                }
            }
        }
    };
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(BoundaryEdge {
            nodes: [node(i, 0), node(i + 1, 0)],
            tag: BoundaryTag::Wall,
            normal: [0.0, -1.0],
            len: hx,
        });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge {
            nodes: [node(nx, j), node(nx, j + 1)],
            tag: right_tag(j),
            normal: [1.0, 0.0],
            len: hy,
        });
    }
    for i in (0..nx).rev() {
        boundary.push(BoundaryEdge {
            nodes: [node(i + 1, ny), node(i, ny)],
            tag: BoundaryTag::Wall,
            normal: [0.0, 1.0],
            len: hx,
        });
    }
    for j in (0..ny).rev() {
        boundary.push(BoundaryEdge {
            nodes: [node(0, j + 1), node(0, j)],
            tag: BoundaryTag::Dirichlet,
            normal: [-1.0, 0.0],
            len: hy,
        });
    }

    Ok(ChannelMesh {
        nx,
        ny,
        length,
        height,
        hx,
        hy,
        layout,
        coords,
        cells,
        boundary,
    })
}

impl ChannelMesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn area(&self) -> f64 {
        self.length * self.height
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node(&self, id: usize) -> [f64; 2] {
        self.coords[id]
    }

    /// Cell corner nodes, counter-clockwise from the south-west corner.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        self.cells[c]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary.iter().filter(move |e| e.tag == tag)
    }

    pub fn n_outlets(&self) -> usize {
        match self.layout {
            TagLayout::SingleOutlet => 1,
            TagLayout::TwoOutlet => 2,
        }
    }

    /// Same geometry, different boundary roles; nodes and cells are untouched.
    pub fn with_layout(&self, layout: TagLayout) -> Result<Self> {
        build_rect_channel(self.nx, self.ny, self.length, self.height, layout)
    }

    /// Node ids carrying prescribed velocity (both components).
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .edges_with_tag(BoundaryTag::Dirichlet)
            .flat_map(|e| e.nodes)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// (node, component) pairs pinned to zero normal velocity on walls.
    /// Nodes that already carry Dirichlet data are excluded.
    pub fn wall_pins(&self) -> Vec<(usize, usize)> {
        let dir = self.dirichlet_nodes();
        let mut pins: Vec<(usize, usize)> = Vec::new();
        for e in self.edges_with_tag(BoundaryTag::Wall) {
            let comp = if e.normal[0].abs() > 0.5 { 0 } else { 1 };
            for n in e.nodes {
                if dir.binary_search(&n).is_err() {
                    pins.push((n, comp));
                }
            }
        }
        pins.sort_unstable();
        pins.dedup();
        pins
    }

    /// Trapezoid quadrature of v . n over one outlet, as (dof, weight) pairs.
    pub fn outlet_flux_row(&self, outlet: u8) -> Vec<(usize, f64)> {
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for e in self.edges_with_tag(BoundaryTag::Outflow(outlet)) {
            for n in e.nodes {
                for c in 0..2 {
                    if e.normal[c] != 0.0 {
                        weights.push((2 * n + c, e.normal[c] * e.len / 2.0));
                    }
                }
            }
        }
        // Merge duplicate dofs from shared edge endpoints.
        weights.sort_unstable_by_key(|&(d, _)| d);
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (d, w) in weights {
            match merged.last_mut() {
                Some((ld, lw)) if *ld == d => *lw += w,
                _ => merged.push((d, w)),
            }
        }
        merged
    }
}

/// Trapezoid quadrature of the normal flux \int v . n over the edges with
/// the given tag.  Exact for the bilinear interpolant, whose trace on each
/// edge is linear.
pub fn boundary_flux(mesh: &ChannelMesh, field: &[f64], tag: BoundaryTag) -> Result<f64> {
    if field.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} dofs, mesh needs {}",
            field.len(),
            mesh.n_dofs()
        )));
    }
    let mut found = false;
    let mut flux = 0.0;
    for e in mesh.boundary_edges().iter().filter(|e| e.tag == tag) {
        found = true;
        let vn = |n: usize| field[2 * n] * e.normal[0] + field[2 * n + 1] * e.normal[1];
        flux += e.len * 0.5 * (vn(e.nodes[0]) + vn(e.nodes[1]));
    }
    if !found {
        return Err(Error::Geometry(format!("no boundary edges tagged {tag:?}")));
    }
    Ok(flux)
}

/// Centered-difference divergence at the interior nodes, row-major over
/// (i, j) with 1 <= i <= nx-1, 1 <= j <= ny-1.
pub fn nodal_divergence(mesh: &ChannelMesh, field: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity((mesh.nx - 1) * (mesh.ny - 1));
    for j in 1..mesh.ny {
        for i in 1..mesh.nx {
            let e = mesh.node_index(i + 1, j);
            let w = mesh.node_index(i - 1, j);
            let n = mesh.node_index(i, j + 1);
            let s = mesh.node_index(i, j - 1);
            out.push(
                (field[2 * e] - field[2 * w]) / (2.0 * mesh.hx)
                    + (field[2 * n + 1] - field[2 * s + 1]) / (2.0 * mesh.hy),
            );
        }
    }
    out
}

/// One scalar profile along the inflow edge, parameterized by s = y / H.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    /// peak * 4 s (1 - s): vanishes at both walls, maximum `peak` mid-channel.
    Parabolic { peak: f64 },
    Uniform { value: f64 },
    /// Explicit nodal values, bottom to top (ny + 1 entries).
    Nodal(Vec<f64>),
}

impl Profile {
    fn eval(&self, s: f64, j: usize) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Parabolic { peak } => peak * 4.0 * s * (1.0 - s),
            Profile::Uniform { value } => *value,
            Profile::Nodal(vals) => vals[j],
        }
    }

}

/// Inflow data on the Dirichlet edge: `axial` is the x-velocity (positive
/// into the channel), `cross` the y-velocity along the edge.
#[derive(Debug, Clone, PartialEq)]
pub struct InletProfile {
    pub axial: Profile,
    pub cross: Profile,
}

impl InletProfile {
    pub fn zero() -> Self {
        Self {
            axial: Profile::Zero,
            cross: Profile::Zero,
        }
    }

    pub fn parabolic(peak: f64) -> Self {
        Self {
            axial: Profile::Parabolic { peak },
            cross: Profile::Zero,
        }
    }
}

/// Steady lift of the boundary data: prescribed inlet values, impermeable
/// walls, prescribed outlet fluxes, and zero centered divergence at every
/// interior node.  `psi` records the stream-function values the construction
/// integrated on the boundary and blended inward.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    dofs: Vec<f64>,
    /// Stream-function values per node used to seed the construction.
    pub psi: Vec<f64>,
    /// Resolved per-outlet fluxes (index = outlet id).
    pub fluxes: Vec<f64>,
}

impl ExtensionField {
    /// The steady dof vector (vx, vy interleaved per node).
    pub fn value(&self) -> &[f64] {
        &self.dofs
    }

    /// Time-indexed view; the lift is steady, so every index returns the
    /// same dof vector.
    pub fn at(&self, _time_node: usize) -> &[f64] {
        &self.dofs
    }
}

/// Builds the extension field.
///
/// `fluxes` prescribes the outlet fluxes: either one value per outlet (their
/// sum must then balance the discrete inlet influx) or one value per outlet
/// except the first, whose flux is determined by mass conservation.  An empty
/// slice is allowed when the mesh has a single outlet.  When `u0` is given it
/// is used as the construction seed instead of the stream-function blend and
/// must already be close to admissible.
pub fn build_extension_field(
    mesh: &ChannelMesh,
    inlet: &InletProfile,
    fluxes: &[f64],
    u0: Option<&[f64]>,
) -> Result<ExtensionField> {
    let n_out = mesh.n_outlets();
    let nn = mesh.n_nodes();

    // Nodal inlet values on the Dirichlet edge (left column).
    let mut inlet_vals: Vec<Option<[f64; 2]>> = vec![None; nn];
    for j in 0..=mesh.ny {
        let s = j as f64 / mesh.ny as f64;
        let id = mesh.node_index(0, j);
        inlet_vals[id] = Some([inlet.axial.eval(s, j), inlet.cross.eval(s, j)]);
    }
    if let Profile::Nodal(vals) = &inlet.axial {
        if vals.len() != mesh.ny + 1 {
            return Err(Error::DimensionMismatch(format!(
                "nodal inlet profile has {} entries, expected {}",
                vals.len(),
                mesh.ny + 1
            )));
        }
    }
    if let Profile::Nodal(vals) = &inlet.cross {
        if vals.len() != mesh.ny + 1 {
            return Err(Error::DimensionMismatch(format!(
                "nodal inlet cross profile has {} entries, expected {}",
                vals.len(),
                mesh.ny + 1
            )));
        }
    }

    // Discrete influx through the inlet (trapezoid, same rule as
    // `boundary_flux`), used to close the mass balance.
    let mut influx = 0.0;
    for e in mesh.edges_with_tag(BoundaryTag::Dirichlet) {
        let vn = |n: usize| {
            let v = inlet_vals[n].expect("inlet node has a value");
            v[0] * e.normal[0] + v[1] * e.normal[1]
        };
        influx -= e.len * 0.5 * (vn(e.nodes[0]) + vn(e.nodes[1]));
    }

    // Resolve the outlet fluxes.
    let scale = influx
        .abs()
        .max(fluxes.iter().fold(0.0f64, |m, f| m.max(f.abs())))
        .max(1.0);
    let resolved: Vec<f64> = if fluxes.len() == n_out {
        let total: f64 = fluxes.iter().sum();
        if (total - influx).abs() > 1e-10 * scale {
            return Err(Error::IncompatibleFluxes(format!(
                "prescribed outlet fluxes sum to {total:.6e} but the discrete inlet influx is {influx:.6e}"
            )));
        }
        fluxes.to_vec()
    } else if fluxes.len() + 1 == n_out {
        let rest: f64 = fluxes.iter().sum();
        let mut v = vec![influx - rest];
        v.extend_from_slice(fluxes);
        v
    } else if fluxes.is_empty() && n_out == 1 {
        vec![influx]
    } else {
        return Err(Error::IncompatibleFluxes(format!(
            "got {} flux values for {} outlets; give all of them or all but the first",
            fluxes.len(),
            n_out
        )));
    };

    // Boundary stream function: psi accumulates the outward flux along the
    // counter-clockwise walk, so it is constant on walls, integrates the
    // inlet profile on the Dirichlet edge, and jumps by the prescribed flux
    // across each outlet (spread smoothly over the outlet's edges).
    let mut psi = vec![0.0f64; nn];
    let mut outlet_edge_count = vec![0usize; n_out];
    for e in mesh.boundary_edges() {
        if let BoundaryTag::Outflow(i) = e.tag {
            outlet_edge_count[i as usize] += 1;
        }
    }
    let mut outlet_bump_total = vec![0.0f64; n_out];
    let mut outlet_seen = vec![0usize; n_out];
    for i in 0..n_out {
        let m = outlet_edge_count[i] as f64;
        for e in 0..outlet_edge_count[i] {
            let s = (e as f64 + 0.5) / m;
            outlet_bump_total[i] += s * (1.0 - s);
        }
    }
    let mut acc = 0.0f64;
    for e in mesh.boundary_edges() {
        psi[e.nodes[0]] = acc;
        let inc = match e.tag {
            BoundaryTag::Wall => 0.0,
            BoundaryTag::Dirichlet => {
                let vn = |n: usize| {
                    let v = inlet_vals[n].expect("inlet node has a value");
                    v[0] * e.normal[0] + v[1] * e.normal[1]
                };
                e.len * 0.5 * (vn(e.nodes[0]) + vn(e.nodes[1]))
            }
            BoundaryTag::Outflow(i) => {
                let i = i as usize;
                let s = (outlet_seen[i] as f64 + 0.5) / outlet_edge_count[i] as f64;
                outlet_seen[i] += 1;
                resolved[i] * s * (1.0 - s) / outlet_bump_total[i]
            }
        };
        acc += inc;
        psi[e.nodes[1]] = acc;
    }

    // Interior psi: per-row blend between the left and right boundary values;
    // corners agree with the wall constants by the flux balance above.
    for j in 1..mesh.ny {
        let left = psi[mesh.node_index(0, j)];
        let right = psi[mesh.node_index(mesh.nx, j)];
        for i in 1..mesh.nx {
            let a = i as f64 / mesh.nx as f64;
            psi[mesh.node_index(i, j)] = (1.0 - a) * left + a * right;
        }
    }

    // Seed velocity: second-order differences of psi (v = (psi_y, -psi_x)),
    // or the caller-provided field.
    let mut seed = vec![0.0f64; 2 * nn];
    match u0 {
        Some(v) => {
            if v.len() != 2 * nn {
                return Err(Error::DimensionMismatch(format!(
                    "u0 has {} dofs, mesh needs {}",
                    v.len(),
                    2 * nn
                )));
            }
            seed.copy_from_slice(v);
        }
        None => {
            let p = |i: usize, j: usize| psi[mesh.node_index(i, j)];
            for j in 0..=mesh.ny {
                for i in 0..=mesh.nx {
                    let dpy = if j == 0 {
                        (-3.0 * p(i, 0) + 4.0 * p(i, 1) - p(i, 2)) / (2.0 * mesh.hy)
                    } else if j == mesh.ny {
                        (3.0 * p(i, j) - 4.0 * p(i, j - 1) + p(i, j - 2)) / (2.0 * mesh.hy)
                    } else {
                        (p(i, j + 1) - p(i, j - 1)) / (2.0 * mesh.hy)
                    };
                    let dpx = if i == 0 {
                        (-3.0 * p(0, j) + 4.0 * p(1, j) - p(2, j)) / (2.0 * mesh.hx)
                    } else if i == mesh.nx {
                        (3.0 * p(i, j) - 4.0 * p(i - 1, j) + p(i - 2, j)) / (2.0 * mesh.hx)
                    } else {
                        (p(i + 1, j) - p(i - 1, j)) / (2.0 * mesh.hx)
                    };
                    let id = mesh.node_index(i, j);
                    seed[2 * id] = dpy;
                    seed[2 * id + 1] = -dpx;
                }
            }
        }
    }

    // Pin the prescribed values.
    let mut pinned: Vec<Option<f64>> = vec![None; 2 * nn];
    for (id, v) in inlet_vals.iter().enumerate() {
        if let Some(v) = v {
            pinned[2 * id] = Some(v[0]);
            pinned[2 * id + 1] = Some(v[1]);
        }
    }
    for (n, c) in mesh.wall_pins() {
        pinned[2 * n + c] = Some(0.0);
    }
    for (d, v) in pinned.iter().enumerate() {
        if let Some(v) = v {
            seed[d] = *v;
        }
    }

    // Exact projection of the seed onto the remaining linear constraints:
    // zero centered divergence at interior nodes and the outlet fluxes.
    // Min-norm correction via the constraint Gram matrix.
    let free: Vec<usize> = (0..2 * nn).filter(|d| pinned[*d].is_none()).collect();
    let col_of: Vec<Option<usize>> = {
        let mut m = vec![None; 2 * nn];
        for (k, d) in free.iter().enumerate() {
            m[*d] = Some(k);
        }
        m
    };
    struct Row {
        entries: Vec<(usize, f64)>, // free-column index, coefficient
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    let h_ref = mesh.hx.min(mesh.hy);
    for j in 1..mesh.ny {
        for i in 1..mesh.nx {
            // 2 h * div so the row coefficients are O(1).
            let stencil = [
                (2 * mesh.node_index(i + 1, j), h_ref / mesh.hx),
                (2 * mesh.node_index(i - 1, j), -h_ref / mesh.hx),
                (2 * mesh.node_index(i, j + 1) + 1, h_ref / mesh.hy),
                (2 * mesh.node_index(i, j - 1) + 1, -h_ref / mesh.hy),
            ];
            let mut entries = Vec::new();
            let mut rhs = 0.0;
            for (d, w) in stencil {
                match col_of[d] {
                    Some(k) => entries.push((k, w)),
                    None => rhs -= w * pinned[d].unwrap(),
                }
            }
            rows.push(Row { entries, rhs });
        }
    }
    for (i, target) in resolved.iter().enumerate() {
        let mut entries = Vec::new();
        let mut rhs = *target;
        for (d, w) in mesh.outlet_flux_row(i as u8) {
            match col_of[d] {
                Some(k) => entries.push((k, w)),
                None => rhs -= w * pinned[d].unwrap(),
            }
        }
        rows.push(Row { entries, rhs });
    }

    let m = rows.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut resid = DVector::<f64>::zeros(m);
    // Dense Gram assembly; rows are sparse so this stays cheap at the mesh
    // sizes this solver targets.
    let mut dense_rows = vec![vec![0.0f64; free.len()]; m];
    for (r, row) in rows.iter().enumerate() {
        for &(k, w) in &row.entries {
            dense_rows[r][k] = w;
        }
        let dot: f64 = row
            .entries
            .iter()
            .map(|&(k, w)| w * seed[free[k]])
            .sum();
        resid[r] = dot - row.rhs;
    }
    for a in 0..m {
        for b in a..m {
            let mut g = 0.0;
            for &(k, w) in &rows[a].entries {
                g += w * dense_rows[b][k];
            }
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("extension constraint Gram matrix".into()))?;
    let lambda = chol.solve(&resid);
    for (r, row) in rows.iter().enumerate() {
        for &(k, w) in &row.entries {
            seed[free[k]] -= lambda[r] * w;
        }
    }

    // Verify the exact invariants before handing the field out.
    for (r, row) in rows.iter().enumerate() {
        let dot: f64 = row
            .entries
            .iter()
            .map(|&(k, w)| w * seed[free[k]])
            .sum();
        if (dot - row.rhs).abs() > 1e-10 * scale {
            return Err(Error::SingularSystem(format!(
                "extension projection left constraint {r} with residual {:.3e}",
                dot - row.rhs
            )));
        }
    }

    Ok(ExtensionField {
        dofs: seed,
        psi,
        fluxes: resolved,
    })
}

/// Serializes the mesh (and optionally a nodal vector field) as a legacy
/// ASCII VTK unstructured grid.  Quads carry tag -1; each boundary edge is
/// written as a VTK_LINE cell whose `boundary_tag` is 0 for Dirichlet, 1 for
/// wall, and 2 + i for outlet i.
pub fn write_vtk(mesh: &ChannelMesh, point_field: Option<(&str, &[f64])>) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("channel mesh\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    s.push_str(&format!("POINTS {} double\n", mesh.n_nodes()));
    for id in 0..mesh.n_nodes() {
        let [x, y] = mesh.node(id);
        s.push_str(&format!("{:.17e} {:.17e} 0.0\n", x, y));
    }
    let n_edges = mesh.boundary_edges().len();
    let n_cells = mesh.n_cells() + n_edges;
    let list_len = 5 * mesh.n_cells() + 3 * n_edges;
    s.push_str(&format!("CELLS {} {}\n", n_cells, list_len));
    for c in 0..mesh.n_cells() {
        let n = mesh.cell_nodes(c);
        s.push_str(&format!("4 {} {} {} {}\n", n[0], n[1], n[2], n[3]));
    }
    for e in mesh.boundary_edges() {
        s.push_str(&format!("2 {} {}\n", e.nodes[0], e.nodes[1]));
    }
    s.push_str(&format!("CELL_TYPES {}\n", n_cells));
    for _ in 0..mesh.n_cells() {
        s.push_str("9\n");
    }
    for _ in 0..n_edges {
        s.push_str("3\n");
    }
    s.push_str(&format!("CELL_DATA {}\n", n_cells));
    s.push_str("SCALARS boundary_tag int 1\nLOOKUP_TABLE default\n");
    for _ in 0..mesh.n_cells() {
        s.push_str("-1\n");
    }
    for e in mesh.boundary_edges() {
        let code = match e.tag {
            BoundaryTag::Dirichlet => 0,
            BoundaryTag::Wall => 1,
            BoundaryTag::Outflow(i) => 2 + i as i32,
        };
        s.push_str(&format!("{code}\n"));
    }
    if let Some((name, field)) = point_field {
        s.push_str(&format!("POINT_DATA {}\n", mesh.n_nodes()));
        s.push_str(&format!("VECTORS {name} double\n"));
        for id in 0..mesh.n_nodes() {
            s.push_str(&format!(
                "{:.17e} {:.17e} 0.0\n",
                field[2 * id],
                field[2 * id + 1]
            ));
        }
    }
    s
}
