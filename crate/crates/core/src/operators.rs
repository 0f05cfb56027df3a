//! Discrete trajectories, quadrature rules, and differential operators.
//!
//! A trajectory stores one velocity dof vector per time node on a uniform
//! grid.  All space-time integrals use the same small set of rules: a 2x2
//! Gauss rule per quadrilateral, a 2-point Gauss rule per boundary edge,
//! slab-midpoint sampling in time, and an exponentially weighted slab rule
//! whose weights integrate `exp(-t / eps)` exactly over each slab.
//!
//! The differential operators act on a single dof vector and return values
//! at the volume Gauss points, cell by cell in mesh order.  They are written
//! for clarity, not speed; the objective assembly reuses them directly since
//! the meshes this solver targets are small.

use crate::constitutive::SymTensor2;
use crate::error::{Error, Result};
use crate::geometry::ChannelMesh;

/// Velocity trajectory on a uniform time grid: `n_steps + 1` nodes, each a
/// flat dof vector (vx, vy interleaved per mesh node).
#[derive(Debug, Clone)]
pub struct Trajectory {
    n_dofs: usize,
    ht: f64,
    data: Vec<f64>,
}

impl Trajectory {
    /// All-zero trajectory with `n_steps` slabs of length `ht`.
    pub fn zeros(n_dofs: usize, n_steps: usize, ht: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "a trajectory needs at least 2 time slabs, got {n_steps}"
            )));
        }
        if !(ht > 0.0) || !ht.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {ht}"
            )));
        }
        if n_dofs == 0 {
            return Err(Error::InvalidParameter("trajectory with zero dofs".into()));
        }
        Ok(Self {
            n_dofs,
            ht,
            data: vec![0.0; (n_steps + 1) * n_dofs],
        })
    }

    /// Trajectory holding the same dof vector at every time node.
    pub fn from_constant(field: &[f64], n_steps: usize, ht: f64) -> Result<Self> {
        let mut t = Self::zeros(field.len(), n_steps, ht)?;
        for k in 0..=n_steps {
            t.at_mut(k).copy_from_slice(field);
        }
        Ok(t)
    }

    /// Number of time slabs.
    pub fn n_steps(&self) -> usize {
        self.data.len() / self.n_dofs - 1
    }

    /// Number of time nodes (`n_steps + 1`).
    pub fn n_time_nodes(&self) -> usize {
        self.data.len() / self.n_dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    /// Final time `n_steps * ht`.
    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.ht
    }

    /// Time of node `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ht
    }

    /// Dof vector at time node `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_dofs..(k + 1) * self.n_dofs]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_dofs..(k + 1) * self.n_dofs]
    }

    /// The whole flat storage, time-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Midpoint dof vector of slab `k`: `(v_k + v_{k+1}) / 2`.
pub fn slab_midpoint(traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
    if k >= traj.n_steps() {
        return Err(Error::InvalidParameter(format!(
            "slab {k} out of range for {} slabs",
            traj.n_steps()
        )));
    }
    let a = traj.at(k);
    let b = traj.at(k + 1);
    Ok(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// Time-derivative dof vector of slab `k`: `(v_{k+1} - v_k) / ht`.
pub fn slab_rate(traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
    if k >= traj.n_steps() {
        return Err(Error::InvalidParameter(format!(
            "slab {k} out of range for {} slabs",
            traj.n_steps()
        )));
    }
    let a = traj.at(k);
    let b = traj.at(k + 1);
    let ht = traj.ht();
    Ok(a.iter().zip(b).map(|(x, y)| (y - x) / ht).collect())
}

/// Weights of the exponentially weighted slab rule: entry `k` equals
/// `int_{t_k}^{t_{k+1}} exp(-t / eps) dt = eps (e^{-t_k/eps} - e^{-t_{k+1}/eps})`,
/// evaluated through `expm1` so nearby exponentials never cancel.
pub fn exp_weight_quadrature(eps: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "relaxation parameter must be positive and finite, got {eps}"
        )));
    }
    if times.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two time nodes for slab weights".into(),
        ));
    }
    let mut w = Vec::with_capacity(times.len() - 1);
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time nodes must be strictly increasing (slab {k})"
            )));
        }
        w.push(eps * (-times[k] / eps).exp() * (-(-h / eps).exp_m1()));
    }
    Ok(w)
}

/// Reference-cell data for the 2x2 Gauss rule on the bilinear quadrilateral.
/// Shape values and physical derivatives are tabulated per Gauss point in
/// the local node order (sw, se, ne, nw); every cell of the uniform mesh
/// shares them.
#[derive(Debug, Clone)]
pub struct CellQuad {
    /// Reference coordinates (xi, eta) in the unit square.
    pub points: [[f64; 2]; 4],
    /// Physical offsets of the Gauss points from the cell's sw corner.
    pub offsets: [[f64; 2]; 4],
    /// Physical quadrature weights; they sum to the cell area.
    pub weights: [f64; 4],
    pub shape: [[f64; 4]; 4],
    pub dshape_dx: [[f64; 4]; 4],
    pub dshape_dy: [[f64; 4]; 4],
}

/// Builds the shared 2x2 Gauss data for the mesh's uniform cells.
pub fn cell_quadrature(mesh: &ChannelMesh) -> CellQuad {
    let g = 0.5 / 3.0f64.sqrt();
    let lo = 0.5 - g;
    let hi = 0.5 + g;
    let points = [[lo, lo], [hi, lo], [lo, hi], [hi, hi]];
    let mut offsets = [[0.0; 2]; 4];
    let mut shape = [[0.0; 4]; 4];
    let mut dshape_dx = [[0.0; 4]; 4];
    let mut dshape_dy = [[0.0; 4]; 4];
    for (p, &[xi, eta]) in points.iter().enumerate() {
        offsets[p] = [xi * mesh.hx, eta * mesh.hy];
        shape[p] = [
            (1.0 - xi) * (1.0 - eta),
            xi * (1.0 - eta),
            xi * eta,
            (1.0 - xi) * eta,
        ];
        let dxi = [-(1.0 - eta), 1.0 - eta, eta, -eta];
        let deta = [-(1.0 - xi), -xi, xi, 1.0 - xi];
        for k in 0..4 {
            dshape_dx[p][k] = dxi[k] / mesh.hx;
            dshape_dy[p][k] = deta[k] / mesh.hy;
        }
    }
    CellQuad {
        points,
        offsets,
        weights: [mesh.hx * mesh.hy / 4.0; 4],
        shape,
        dshape_dx,
        dshape_dy,
    }
}

/// 2-point Gauss rule on an edge parameterized over [0, 1]: returns
/// (parameter, weight fraction) pairs; multiply the fraction by the edge
/// length for the physical weight.
pub fn edge_gauss() -> [(f64, f64); 2] {
    let g = 0.5 / 3.0f64.sqrt();
    [(0.5 - g, 0.5), (0.5 + g, 0.5)]
}

/// Physical coordinates of all volume Gauss points, cell-major.
pub fn gauss_coords(mesh: &ChannelMesh, quad: &CellQuad) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(4 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let sw = mesh.node(mesh.cell_nodes(c)[0]);
        for p in 0..4 {
            out.push([sw[0] + quad.offsets[p][0], sw[1] + quad.offsets[p][1]]);
        }
    }
    out
}

fn accumulate_l2_sq(
    mesh: &ChannelMesh,
    a: &Trajectory,
    b: Option<&Trajectory>,
    t_end: f64,
) -> Result<f64> {
    check_dofs(mesh, a.at(0))?;
    if let Some(b) = b {
        check_dofs(mesh, b.at(0))?;
        if (a.ht() - b.ht()).abs() > 1e-12 * a.ht() {
            return Err(Error::DimensionMismatch(
                "trajectories use different time steps".into(),
            ));
        }
    }
    let n_steps = b.map_or(a.n_steps(), |b| a.n_steps().min(b.n_steps()));
    let horizon = n_steps as f64 * a.ht();
    if !(t_end > 0.0) || t_end > horizon * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "integration window {t_end} outside (0, {horizon}]"
        )));
    }
    let quad = cell_quadrature(mesh);
    let n_dofs = mesh.n_dofs();
    let mut diff = vec![0.0; n_dofs];
    let mut total = 0.0;
    for k in 0..n_steps {
        let t_mid = (k as f64 + 0.5) * a.ht();
        if t_mid > t_end + 1e-9 * horizon {
            break;
        }
        let (a0, a1) = (a.at(k), a.at(k + 1));
        if let Some(b) = b {
            let (b0, b1) = (b.at(k), b.at(k + 1));
            for d in 0..n_dofs {
                diff[d] = 0.5 * (a0[d] + a1[d]) - 0.5 * (b0[d] + b1[d]);
            }
        } else {
            for d in 0..n_dofs {
                diff[d] = 0.5 * (a0[d] + a1[d]);
            }
        }
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let mut v = [0.0f64; 2];
                for (loc, &id) in nodes.iter().enumerate() {
                    let n = quad.shape[p][loc];
                    v[0] += n * diff[2 * id];
                    v[1] += n * diff[2 * id + 1];
                }
                total += a.ht() * quad.weights[p] * (v[0] * v[0] + v[1] * v[1]);
            }
        }
    }
    Ok(total)
}

/// Space-time L2 distance between two sampled velocity trajectories over
/// `(0, t_end) x domain`, using slab-midpoint sampling in time.  The
/// trajectories must share the mesh and time step; a slab counts when its
/// midpoint lies inside the window.
pub fn trajectory_l2_distance(
    mesh: &ChannelMesh,
    a: &Trajectory,
    b: &Trajectory,
    t_end: f64,
) -> Result<f64> {
    Ok(accumulate_l2_sq(mesh, a, Some(b), t_end)?.sqrt())
}

/// Space-time L2 norm of a sampled velocity trajectory over
/// `(0, t_end) x domain` (same convention as [`trajectory_l2_distance`]).
pub fn trajectory_l2_norm(mesh: &ChannelMesh, a: &Trajectory, t_end: f64) -> Result<f64> {
    Ok(accumulate_l2_sq(mesh, a, None, t_end)?.sqrt())
}

fn check_dofs(mesh: &ChannelMesh, field: &[f64]) -> Result<()> {
    if field.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} dofs, mesh needs {}",
            field.len(),
            mesh.n_dofs()
        )));
    }
    Ok(())
}

/// Velocity values at the volume Gauss points, cell-major.
pub fn velocity_at_gauss(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    field: &[f64],
) -> Result<Vec<[f64; 2]>> {
    check_dofs(mesh, field)?;
    let mut out = Vec::with_capacity(4 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        for p in 0..4 {
            let mut v = [0.0; 2];
            for k in 0..4 {
                let n = quad.shape[p][k];
                v[0] += n * field[2 * nodes[k]];
                v[1] += n * field[2 * nodes[k] + 1];
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Full velocity gradients `[[dv1/dx, dv1/dy], [dv2/dx, dv2/dy]]` at the
/// Gauss points.
pub fn velocity_gradient(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    field: &[f64],
) -> Result<Vec<[[f64; 2]; 2]>> {
    check_dofs(mesh, field)?;
    let mut out = Vec::with_capacity(4 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        for p in 0..4 {
            let mut g = [[0.0; 2]; 2];
            for k in 0..4 {
                let dx = quad.dshape_dx[p][k];
                let dy = quad.dshape_dy[p][k];
                let vx = field[2 * nodes[k]];
                let vy = field[2 * nodes[k] + 1];
                g[0][0] += dx * vx;
                g[0][1] += dy * vx;
                g[1][0] += dx * vy;
                g[1][1] += dy * vy;
            }
            out.push(g);
        }
    }
    Ok(out)
}

/// Symmetric velocity gradients at the Gauss points.
pub fn sym_gradient(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    field: &[f64],
) -> Result<Vec<SymTensor2>> {
    Ok(velocity_gradient(mesh, quad, field)?
        .into_iter()
        .map(SymTensor2::sym_part)
        .collect())
}

/// Divergence at the Gauss points.
pub fn divergence(mesh: &ChannelMesh, quad: &CellQuad, field: &[f64]) -> Result<Vec<f64>> {
    Ok(velocity_gradient(mesh, quad, field)?
        .into_iter()
        .map(|g| g[0][0] + g[1][1])
        .collect())
}

/// Scalar vorticity `dv2/dx - dv1/dy` at the Gauss points.
pub fn vorticity(mesh: &ChannelMesh, quad: &CellQuad, field: &[f64]) -> Result<Vec<f64>> {
    Ok(velocity_gradient(mesh, quad, field)?
        .into_iter()
        .map(|g| g[1][0] - g[0][1])
        .collect())
}

/// Rotational convection `curl(a) x b` at the Gauss points: with the scalar
/// vorticity `w = curl(a)`, the planar cross product is `w (-b2, b1)`.
pub fn curl_cross(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    a: &[f64],
    b: &[f64],
) -> Result<Vec<[f64; 2]>> {
    let w = vorticity(mesh, quad, a)?;
    let bv = velocity_at_gauss(mesh, quad, b)?;
    Ok(w.iter()
        .zip(&bv)
        .map(|(w, b)| [-w * b[1], w * b[0]])
        .collect())
}

/// Directional convection `(grad a) b` at the Gauss points.
pub fn convection(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    a: &[f64],
    b: &[f64],
) -> Result<Vec<[f64; 2]>> {
    let ga = velocity_gradient(mesh, quad, a)?;
    let bv = velocity_at_gauss(mesh, quad, b)?;
    Ok(ga
        .iter()
        .zip(&bv)
        .map(|(g, b)| {
            [
                g[0][0] * b[0] + g[0][1] * b[1],
                g[1][0] * b[0] + g[1][1] * b[1],
            ]
        })
        .collect())
}

/// Gradient of the half speed, `(grad a)^T a`, at the Gauss points; inside
/// each cell this is exactly the pointwise gradient of `|a|^2 / 2`.
pub fn kinetic_gradient(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    a: &[f64],
) -> Result<Vec<[f64; 2]>> {
    let ga = velocity_gradient(mesh, quad, a)?;
    let av = velocity_at_gauss(mesh, quad, a)?;
    Ok(ga
        .iter()
        .zip(&av)
        .map(|(g, v)| {
            [
                g[0][0] * v[0] + g[1][0] * v[1],
                g[0][1] * v[0] + g[1][1] * v[1],
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rect_channel, TagLayout};

    fn mesh(nx: usize, ny: usize) -> ChannelMesh {
        build_rect_channel(nx, ny, 2.0, 1.0, TagLayout::SingleOutlet).unwrap()
    }

    fn nodal(mesh: &ChannelMesh, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            let [x, y] = mesh.node(id);
            let v = f(x, y);
            out[2 * id] = v[0];
            out[2 * id + 1] = v[1];
        }
        out
    }

    #[test]
    fn trajectory_roundtrip_and_validation() {
        let mut t = Trajectory::zeros(6, 3, 0.25).unwrap();
        assert_eq!(t.n_steps(), 3);
        assert_eq!(t.n_time_nodes(), 4);
        assert_eq!(t.horizon(), 0.75);
        t.at_mut(2)[4] = 7.5;
        assert_eq!(t.at(2)[4], 7.5);
        assert_eq!(t.at(1)[4], 0.0);
        assert!(Trajectory::zeros(6, 1, 0.25).is_err());
        assert!(Trajectory::zeros(6, 3, 0.0).is_err());
        let c = Trajectory::from_constant(&[1.0, 2.0], 2, 0.5).unwrap();
        assert_eq!(c.at(0), c.at(2));
    }

    #[test]
    fn slab_midpoint_and_rate() {
        let mut t = Trajectory::zeros(2, 3, 0.5).unwrap();
        for k in 0..=3 {
            t.at_mut(k).copy_from_slice(&[k as f64, 2.0 * k as f64]);
        }
        assert_eq!(slab_midpoint(&t, 1).unwrap(), vec![1.5, 3.0]);
        assert_eq!(slab_rate(&t, 1).unwrap(), vec![2.0, 4.0]);
        assert!(slab_midpoint(&t, 3).is_err());
        assert!(slab_rate(&t, 5).is_err());
    }

    #[test]
    fn exp_weights_telescope_and_match_the_naive_difference() {
        let eps = 0.7;
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let w = exp_weight_quadrature(eps, &times).unwrap();
        let total: f64 = w.iter().sum();
        let exact = eps * (1.0 - (-2.0f64 / eps).exp());
        assert!((total - exact).abs() < 1e-13 * exact);
        for k in 0..w.len() {
            let naive = 0.7 * ((-times[k] / 0.7).exp() - (-times[k + 1] / 0.7).exp());
            assert!((w[k] - naive).abs() < 1e-12 * w[k].max(1e-300));
        }
        // Positive and strictly decreasing on a uniform grid.
        for k in 1..w.len() {
            assert!(w[k] > 0.0 && w[k] < w[k - 1]);
        }
    }

    #[test]
    fn exp_weights_survive_extreme_relaxation_values() {
        // Huge eps: each weight approaches the slab length.
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.01).collect();
        let w = exp_weight_quadrature(1e9, &times).unwrap();
        for wk in &w {
            assert!((wk - 0.01).abs() < 1e-8 * 0.01);
        }
        // Tiny eps: far slabs underflow to zero but never to NaN.
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.5).collect();
        let w = exp_weight_quadrature(1e-3, &times).unwrap();
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(w[0] > 0.0);
        assert!(exp_weight_quadrature(0.0, &times).is_err());
        assert!(exp_weight_quadrature(-1.0, &times).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_the_cell_area() {
        let m = mesh(5, 3);
        let q = cell_quadrature(&m);
        let total: f64 = q.weights.iter().sum();
        assert!((total - m.hx * m.hy).abs() < 1e-15);
        let (e0, e1) = (edge_gauss()[0], edge_gauss()[1]);
        assert!((e0.1 + e1.1 - 1.0).abs() < 1e-15);
        assert!((e0.0 + e1.0 - 1.0).abs() < 1e-15, "symmetric about 1/2");
    }

    #[test]
    fn operators_are_exact_on_affine_fields() {
        let m = mesh(4, 3);
        let q = cell_quadrature(&m);
        // v = A x + b with A = [[1.5, -0.5], [2.0, 0.25]], b = (0.3, -0.7).
        let field = nodal(&m, |x, y| {
            [1.5 * x - 0.5 * y + 0.3, 2.0 * x + 0.25 * y - 0.7]
        });
        let coords = gauss_coords(&m, &q);
        let vals = velocity_at_gauss(&m, &q, &field).unwrap();
        for (v, [x, y]) in vals.iter().zip(&coords) {
            assert!((v[0] - (1.5 * x - 0.5 * y + 0.3)).abs() < 1e-13);
            assert!((v[1] - (2.0 * x + 0.25 * y - 0.7)).abs() < 1e-13);
        }
        for d in sym_gradient(&m, &q, &field).unwrap() {
            assert!((d.xx - 1.5).abs() < 1e-13);
            assert!((d.yy - 0.25).abs() < 1e-13);
            assert!((d.xy - 0.5 * (-0.5 + 2.0)).abs() < 1e-13);
        }
        for dv in divergence(&m, &q, &field).unwrap() {
            assert!((dv - 1.75).abs() < 1e-13);
        }
        for w in vorticity(&m, &q, &field).unwrap() {
            assert!((w - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn shear_field_has_unit_negative_vorticity_and_downward_cross_term() {
        // v = (y, 0): curl v = -1 and curl v x v = (0, -y).
        let m = mesh(6, 4);
        let q = cell_quadrature(&m);
        let field = nodal(&m, |_, y| [y, 0.0]);
        let coords = gauss_coords(&m, &q);
        for w in vorticity(&m, &q, &field).unwrap() {
            assert!((w + 1.0).abs() < 1e-13);
        }
        for (c, [_, y]) in curl_cross(&m, &q, &field, &field)
            .unwrap()
            .iter()
            .zip(&coords)
        {
            assert!(c[0].abs() < 1e-13);
            assert!((c[1] + y).abs() < 1e-13);
        }
    }

    #[test]
    fn rotational_convection_identity_holds_pointwise() {
        // curl(a) x a = (grad a) a - grad(|a|^2 / 2) holds exactly for the
        // bilinear interpolant inside each cell, not just in the limit.
        let m = mesh(7, 5);
        let q = cell_quadrature(&m);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let field: Vec<f64> = (0..m.n_dofs()).map(|_| rng()).collect();
        let lhs = curl_cross(&m, &q, &field, &field).unwrap();
        let conv = convection(&m, &q, &field, &field).unwrap();
        let kin = kinetic_gradient(&m, &q, &field).unwrap();
        for ((l, c), k) in lhs.iter().zip(&conv).zip(&kin) {
            let scale = 1.0 + c[0].abs().max(c[1].abs()) + k[0].abs().max(k[1].abs());
            assert!((l[0] - (c[0] - k[0])).abs() < 1e-13 * scale);
            assert!((l[1] - (c[1] - k[1])).abs() < 1e-13 * scale);
        }
        // And the rotational term never feeds energy: (curl a x a) . a = 0.
        let av = velocity_at_gauss(&m, &q, &field).unwrap();
        for (l, v) in lhs.iter().zip(&av) {
            let dot = l[0] * v[0] + l[1] * v[1];
            let scale = 1.0 + (v[0] * v[0] + v[1] * v[1]);
            assert!(dot.abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn values_and_gradients_converge_at_the_expected_rates() {
        // Interpolate a smooth field and compare values and gradients at
        // the 2x2 Gauss points against the analytic ones under refinement:
        // second order for values, first order for bilinear gradients.
        let f = |x: f64, y: f64| -> [f64; 2] {
            [(1.3 * x).sin() * (0.9 * y).cos(), (0.7 * x * y).cos()]
        };
        let gf = |x: f64, y: f64| -> [[f64; 2]; 2] {
            [
                [
                    1.3 * (1.3 * x).cos() * (0.9 * y).cos(),
                    -0.9 * (1.3 * x).sin() * (0.9 * y).sin(),
                ],
                [
                    -0.7 * y * (0.7 * x * y).sin(),
                    -0.7 * x * (0.7 * x * y).sin(),
                ],
            ]
        };
        let mut grad_errs = Vec::new();
        let mut val_errs = Vec::new();
        for n in [8usize, 16, 32] {
            let m = mesh(2 * n, n);
            let q = cell_quadrature(&m);
            let field = nodal(&m, f);
            let coords = gauss_coords(&m, &q);
            let grads = velocity_gradient(&m, &q, &field).unwrap();
            let vals = velocity_at_gauss(&m, &q, &field).unwrap();
            let wq = m.hx * m.hy / 4.0;
            let mut gsq = 0.0;
            let mut vsq = 0.0;
            for ((g, v), [x, y]) in grads.iter().zip(&vals).zip(&coords) {
                let ge = gf(*x, *y);
                let ve = f(*x, *y);
                for r in 0..2 {
                    vsq += (v[r] - ve[r]).powi(2) * wq;
                    for c in 0..2 {
                        gsq += (g[r][c] - ge[r][c]).powi(2) * wq;
                    }
                }
            }
            grad_errs.push(gsq.sqrt());
            val_errs.push(vsq.sqrt());
        }
        for pair in grad_errs.windows(2) {
            let rate = (pair[0] / pair[1]).log2();
            assert!(rate > 0.9, "gradient rate {rate}");
        }
        for pair in val_errs.windows(2) {
            let rate = (pair[0] / pair[1]).log2();
            assert!(rate > 1.8, "value rate {rate}");
        }
    }

    #[test]
    fn space_time_l2_matches_closed_form_and_scales() {
        let m = build_rect_channel(6, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut field = vec![0.0; m.n_dofs()];
        for id in 0..m.n_nodes() {
            field[2 * id] = m.node(id)[1];
        }
        let a = Trajectory::from_constant(&field, 8, 0.125).unwrap();
        // int_domain y^2 over the 2 x 1 box is 2/3; the field is steady, so
        // the space-time square integral over (0, t) is 2t/3.
        let norm = trajectory_l2_norm(&m, &a, 0.5).unwrap();
        assert!((norm - (0.5 * 2.0 / 3.0f64).sqrt()).abs() < 1e-12);
        for d in field.iter_mut() {
            *d *= 2.0;
        }
        let b = Trajectory::from_constant(&field, 8, 0.125).unwrap();
        let dist = trajectory_l2_distance(&m, &a, &b, 0.5).unwrap();
        assert!((dist - norm).abs() < 1e-13);
        assert_eq!(trajectory_l2_distance(&m, &a, &a, 1.0).unwrap(), 0.0);
        assert!(trajectory_l2_norm(&m, &a, 0.0).is_err());
        assert!(trajectory_l2_norm(&m, &a, 1.5).is_err());
        let c = Trajectory::from_constant(&field, 8, 0.1).unwrap();
        assert!(trajectory_l2_distance(&m, &a, &c, 0.5).is_err());
    }
}
