//! The weighted space-time objective, its gradient, and constraint handling.
//!
//! For a trajectory `v` on the time grid, the objective is
//!
//! ```text
//! I(v) = sum_k W_k [ int_Omega  eps/2 |a_k|^2 - f . m_k
//!                              + potential_bulk(D m_k) + kappa (div m_k)^2
//!        + int_{walls} potential_boundary(m_k) ]
//! ```
//!
//! where `m_k` is the slab midpoint, `a_k` the material rate `(v_{k+1} -
//! v_k)/ht + curl(m_k) x m_k` (or the directional form behind a switch), and
//! `W_k` integrates the weight `exp(-t/eps)` exactly over slab `k`.  The
//! divergence penalty is integrated with the one-point centroid rule, which
//! avoids the overconstraint a bilinear element suffers when the full 2x2
//! rule is used on `div v = 0`.
//!
//! Constraints (inlet values, wall impermeability, the whole initial time
//! node, and the per-outlet flux at every later node) are affine and handled
//! by exact orthogonal projection; the outlet rows have disjoint supports,
//! so the projection needs no linear solve.
//!
//! Stationarity can be tested in two equivalent pairings: the weighted form
//! (`el1_residual`, the literal directional derivative) and the unweighted
//! form (`el2_residual`), obtained by pairing against `exp(t/eps) pi`.  Both
//! are assembled directly from their integrands; unit tests pin them to the
//! gradient to machine precision.

use crate::constitutive::{
    potential_boundary, potential_bulk, stress_boundary, stress_bulk, validate_params,
    ConstitutiveParams, SymTensor2,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, ChannelMesh, ExtensionField};
use crate::operators::{cell_quadrature, edge_gauss, exp_weight_quadrature, CellQuad, Trajectory};

/// Convective part of the material rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionForm {
    /// `curl(v) x v`: pointwise orthogonal to `v`, the default.
    Rotational,
    /// `(grad v) v`: the directional derivative form.
    Material,
}

/// Per-term decomposition of the objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `sum_k W_k int eps/2 |a_k|^2`.
    pub inertia: f64,
    /// `-sum_k W_k int f . m_k`.
    pub forcing: f64,
    pub bulk: f64,
    pub boundary: f64,
    pub penalty: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.inertia + self.forcing + self.bulk + self.boundary + self.penalty
    }
}

/// Objective value with its breakdown; `value` is exactly the sum of the
/// breakdown terms.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalEval {
    pub value: f64,
    pub breakdown: EnergyBreakdown,
}

struct FluxRow {
    /// (space dof, weight) over free dofs only.
    entries: Vec<(usize, f64)>,
    norm_sq: f64,
    /// Row value every admissible trajectory must attain (pinned-dof
    /// contributions already subtracted).
    target: f64,
}

/// Affine constraint set of the minimization: the initial node equals the
/// extension, inlet and wall-normal dofs are pinned at every node, and each
/// outlet's trapezoid flux is prescribed at every node after the first.
pub struct ConstraintHandler {
    n_space_dofs: usize,
    n_steps: usize,
    /// Per-space-dof pinned value, applied at every time node >= 1.
    pinned: Vec<Option<f64>>,
    /// Values of the whole initial time node.
    initial: Vec<f64>,
    flux_rows: Vec<FluxRow>,
    /// Divergence penalty multiplier.
    pub kappa: f64,
}

impl ConstraintHandler {
    pub fn new(
        mesh: &ChannelMesh,
        extension: &ExtensionField,
        n_steps: usize,
        kappa: f64,
    ) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "divergence penalty must be nonnegative and finite, got {kappa}"
            )));
        }
        let ext = extension.value();
        if ext.len() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch(
                "extension field does not match the mesh".into(),
            ));
        }
        let mut pinned: Vec<Option<f64>> = vec![None; mesh.n_dofs()];
        for n in mesh.dirichlet_nodes() {
            pinned[2 * n] = Some(ext[2 * n]);
            pinned[2 * n + 1] = Some(ext[2 * n + 1]);
        }
        for (n, c) in mesh.wall_pins() {
            pinned[2 * n + c] = Some(0.0);
        }
        let mut flux_rows = Vec::new();
        for outlet in 0..mesh.n_outlets() {
            let mut entries = Vec::new();
            // Target from the extension itself, so the pure-extension
            // trajectory is admissible to machine precision.
            let mut target = 0.0;
            for (dof, w) in mesh.outlet_flux_row(outlet as u8) {
                target += w * ext[dof];
                if pinned[dof].is_none() {
                    entries.push((dof, w));
                } else {
                    target -= w * pinned[dof].unwrap();
                }
            }
            let norm_sq: f64 = entries.iter().map(|&(_, w)| w * w).sum();
            if norm_sq <= 0.0 {
                return Err(Error::SingularSystem(format!(
                    "outlet {outlet} flux row has no free dofs"
                )));
            }
            flux_rows.push(FluxRow {
                entries,
                norm_sq,
                target,
            });
        }
        // The projection treats the rows one at a time, which is exact only
        // if they are mutually orthogonal; outlet closures are disjoint by
        // construction, so any overlap is a geometry bug.
        for a in 0..flux_rows.len() {
            for b in a + 1..flux_rows.len() {
                let mut dot = 0.0;
                for &(da, wa) in &flux_rows[a].entries {
                    for &(db, wb) in &flux_rows[b].entries {
                        if da == db {
                            dot += wa * wb;
                        }
                    }
                }
                if dot != 0.0 {
                    return Err(Error::SingularSystem(
                        "outlet flux rows overlap; cannot project independently".into(),
                    ));
                }
            }
        }
        Ok(Self {
            n_space_dofs: mesh.n_dofs(),
            n_steps,
            pinned,
            initial: ext.to_vec(),
            flux_rows,
            kappa,
        })
    }

    pub fn n_space_dofs(&self) -> usize {
        self.n_space_dofs
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of dofs the optimizer can actually move.
    pub fn n_free(&self) -> usize {
        let pinned_per_node = self.pinned.iter().filter(|p| p.is_some()).count();
        self.n_steps * (self.n_space_dofs - pinned_per_node)
    }

    fn check_shape(&self, traj: &Trajectory) -> Result<()> {
        if traj.n_dofs() != self.n_space_dofs || traj.n_steps() != self.n_steps {
            return Err(Error::DimensionMismatch(format!(
                "trajectory is {} dofs x {} slabs, constraints expect {} x {}",
                traj.n_dofs(),
                traj.n_steps(),
                self.n_space_dofs,
                self.n_steps
            )));
        }
        Ok(())
    }

    /// Orthogonal projection onto the admissible affine set; idempotent.
    pub fn project(&self, traj: &mut Trajectory) -> Result<()> {
        self.check_shape(traj)?;
        traj.at_mut(0).copy_from_slice(&self.initial);
        for k in 1..=self.n_steps {
            let node = traj.at_mut(k);
            for (d, p) in self.pinned.iter().enumerate() {
                if let Some(p) = p {
                    node[d] = *p;
                }
            }
            for row in &self.flux_rows {
                let dot: f64 = row.entries.iter().map(|&(d, w)| w * node[d]).sum();
                let corr = (dot - row.target) / row.norm_sq;
                for &(d, w) in &row.entries {
                    node[d] -= corr * w;
                }
            }
        }
        Ok(())
    }

    /// Projects a full-length direction (or gradient) onto the tangent space
    /// of the constraints: zeros the initial node and pinned dofs, removes
    /// flux-row components at every later node.
    pub fn project_tangent(&self, dir: &mut [f64]) {
        let n = self.n_space_dofs;
        dir[..n].fill(0.0);
        for k in 1..=self.n_steps {
            let node = &mut dir[k * n..(k + 1) * n];
            for (d, p) in self.pinned.iter().enumerate() {
                if p.is_some() {
                    node[d] = 0.0;
                }
            }
            for row in &self.flux_rows {
                let dot: f64 = row.entries.iter().map(|&(d, w)| w * node[d]).sum();
                let corr = dot / row.norm_sq;
                for &(d, w) in &row.entries {
                    node[d] -= corr * w;
                }
            }
        }
    }

    /// Largest constraint violation, scaled for comparison against a
    /// relative tolerance.
    pub fn violation(&self, traj: &Trajectory) -> Result<f64> {
        self.check_shape(traj)?;
        let mut worst = 0.0f64;
        for (d, init) in self.initial.iter().enumerate() {
            worst = worst.max((traj.at(0)[d] - init).abs() / (1.0 + init.abs()));
        }
        for k in 1..=self.n_steps {
            let node = traj.at(k);
            for (d, p) in self.pinned.iter().enumerate() {
                if let Some(p) = p {
                    worst = worst.max((node[d] - p).abs() / (1.0 + p.abs()));
                }
            }
            for row in &self.flux_rows {
                let mut dot = 0.0;
                let mut scale = 0.0;
                for &(d, w) in &row.entries {
                    let term = w * node[d];
                    dot += term;
                    scale += term.abs();
                }
                // Scale by the summands too: the residual of an exactly
                // projected point is roundoff relative to the terms of the
                // sum, so a magnitude-blind measure would reject admissible
                // points whose entries are merely large.
                worst = worst.max((dot - row.target).abs() / (1.0 + row.target.abs() + scale));
            }
        }
        Ok(worst)
    }
}

/// Forcing field sampled at a position and time.
pub type ForcingFn<'f> = &'f dyn Fn([f64; 2], f64) -> [f64; 2];

struct EdgePoint {
    nodes: [usize; 2],
    shape: [f64; 2],
    weight: f64,
}

/// The assembled objective for one mesh, extension, and parameter set.
pub struct WideSystem<'a> {
    mesh: &'a ChannelMesh,
    extension: &'a ExtensionField,
    params: ConstitutiveParams,
    handler: ConstraintHandler,
    convection: ConvectionForm,
    n_steps: usize,
    ht: f64,
    quad: CellQuad,
    /// Slab weights `int_slab exp(-t/eps)` for the current `eps`.
    weights: Vec<f64>,
    /// Forcing at every volume Gauss point, per slab midpoint time.
    forcing_mid: Vec<Vec<[f64; 2]>>,
    edge_points: Vec<EdgePoint>,
    centroid_dx: [f64; 4],
    centroid_dy: [f64; 4],
}

impl<'a> WideSystem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a ChannelMesh,
        extension: &'a ExtensionField,
        params: ConstitutiveParams,
        kappa: f64,
        n_steps: usize,
        ht: f64,
        convection: ConvectionForm,
        forcing: ForcingFn,
    ) -> Result<Self> {
        validate_params(&params)?;
        if !(ht > 0.0) || !ht.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {ht}"
            )));
        }
        let handler = ConstraintHandler::new(mesh, extension, n_steps, kappa)?;
        let quad = cell_quadrature(mesh);
        let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * ht).collect();
        let weights = exp_weight_quadrature(params.eps, &times)?;

        let coords = crate::operators::gauss_coords(mesh, &quad);
        let mut forcing_mid = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let t = (k as f64 + 0.5) * ht;
            forcing_mid.push(coords.iter().map(|&x| forcing(x, t)).collect());
        }

        let mut edge_points = Vec::new();
        for e in mesh.boundary_edges() {
            if e.tag != BoundaryTag::Wall {
                continue;
            }
            for (s, frac) in edge_gauss() {
                edge_points.push(EdgePoint {
                    nodes: e.nodes,
                    shape: [1.0 - s, s],
                    weight: frac * e.len,
                });
            }
        }

        // Centroid derivatives for the reduced-integration penalty.
        let centroid_dx = [
            -0.5 / mesh.hx,
            0.5 / mesh.hx,
            0.5 / mesh.hx,
            -0.5 / mesh.hx,
        ];
        let centroid_dy = [
            -0.5 / mesh.hy,
            -0.5 / mesh.hy,
            0.5 / mesh.hy,
            0.5 / mesh.hy,
        ];

        Ok(Self {
            mesh,
            extension,
            params,
            handler,
            convection,
            n_steps,
            ht,
            quad,
            weights,
            forcing_mid,
            edge_points,
            centroid_dx,
            centroid_dy,
        })
    }

    pub fn params(&self) -> &ConstitutiveParams {
        &self.params
    }

    pub fn handler(&self) -> &ConstraintHandler {
        &self.handler
    }

    pub fn mesh(&self) -> &ChannelMesh {
        self.mesh
    }

    pub fn convection(&self) -> ConvectionForm {
        self.convection
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.ht
    }

    /// Switches the relaxation parameter, refreshing the slab weights.
    pub fn set_eps(&mut self, eps: f64) -> Result<()> {
        let times: Vec<f64> = (0..=self.n_steps).map(|k| k as f64 * self.ht).collect();
        self.weights = exp_weight_quadrature(eps, &times)?;
        self.params = self.params.with_eps(eps);
        Ok(())
    }

    /// The pure-extension trajectory; always admissible.
    pub fn initial_trajectory(&self) -> Trajectory {
        Trajectory::from_constant(self.extension.value(), self.n_steps, self.ht)
            .expect("validated dimensions")
    }

    /// Diagonal time-node weights `max(exp(-t_k/eps), 1e-12)` for
    /// metric-aware optimization: gradient entries live in the dual, so the
    /// natural gradient norm divides by these.
    pub fn node_weights(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .map(|k| ((-(k as f64) * self.ht / self.params.eps).exp()).max(1e-12))
            .collect()
    }

    /// Diagonal estimate of the objective's second derivative, one entry
    /// per trajectory dof, built from its quadratic part: slab-weighted
    /// inertia mass over `ht^2` plus viscous, divergence-penalty, and
    /// boundary-friction stiffness at the zero-strain linearization.  Used
    /// as the minimizer's preconditioner and stopping-norm metric.
    pub fn curvature_diagonal(&self) -> Vec<f64> {
        let n = self.mesh.n_dofs();
        let p = &self.params;
        let a_visc = if p.r == 2.0 {
            p.sigma2
        } else {
            p.sigma2.powf((p.r - 2.0) / 2.0)
        };
        let a_bdry = if p.r == 2.0 {
            p.rho2
        } else {
            p.rho2.powf((p.r - 2.0) / 2.0)
        };
        let mut mass = vec![0.0; n];
        let mut stiff = vec![0.0; n];
        for c in 0..self.mesh.n_cells() {
            let nodes = self.mesh.cell_nodes(c);
            let area = self.mesh.hx * self.mesh.hy;
            for (loc, &id) in nodes.iter().enumerate() {
                for pt in 0..4 {
                    let w = self.quad.weights[pt];
                    let nv = self.quad.shape[pt][loc];
                    let dx = self.quad.dshape_dx[pt][loc];
                    let dy = self.quad.dshape_dy[pt][loc];
                    mass[2 * id] += w * nv * nv;
                    mass[2 * id + 1] += w * nv * nv;
                    // |D(N e_x)|^2 and |D(N e_y)|^2 at the volume points.
                    stiff[2 * id] += 0.5 * a_visc * w * (dx * dx + 0.5 * dy * dy);
                    stiff[2 * id + 1] += 0.5 * a_visc * w * (dy * dy + 0.5 * dx * dx);
                }
                // Reduced one-point divergence penalty at the centroid.
                let cdx = self.centroid_dx[loc];
                let cdy = self.centroid_dy[loc];
                stiff[2 * id] += 0.5 * self.handler.kappa * area * cdx * cdx;
                stiff[2 * id + 1] += 0.5 * self.handler.kappa * area * cdy * cdy;
            }
        }
        for ep in &self.edge_points {
            for (loc, &id) in ep.nodes.iter().enumerate() {
                let nv = ep.shape[loc];
                stiff[2 * id] += 0.5 * a_bdry * ep.weight * nv * nv;
                stiff[2 * id + 1] += 0.5 * a_bdry * ep.weight * nv * nv;
            }
        }
        let mut diag = Vec::with_capacity((self.n_steps + 1) * n);
        for k in 0..=self.n_steps {
            let mut w_adj = 0.0;
            if k > 0 {
                w_adj += self.weights[k - 1];
            }
            if k < self.n_steps {
                w_adj += self.weights[k];
            }
            for i in 0..n {
                diag.push(w_adj * (p.eps * mass[i] / (self.ht * self.ht) + stiff[i]));
            }
        }
        diag
    }

    fn check_traj(&self, traj: &Trajectory) -> Result<()> {
        if traj.n_dofs() != self.mesh.n_dofs()
            || traj.n_steps() != self.n_steps
            || (traj.ht() - self.ht).abs() > 1e-14 * self.ht
        {
            return Err(Error::DimensionMismatch(
                "trajectory does not match the system's grid".into(),
            ));
        }
        Ok(())
    }

    fn require_admissible(&self, traj: &Trajectory) -> Result<()> {
        let viol = self.handler.violation(traj)?;
        if viol > 1e-8 {
            return Err(Error::NotAdmissible(format!(
                "trajectory violates constraints by {viol:.3e}; project it first"
            )));
        }
        Ok(())
    }

    /// Objective value with per-term breakdown.
    pub fn evaluate(&self, traj: &Trajectory) -> Result<FunctionalEval> {
        self.check_traj(traj)?;
        self.require_admissible(traj)?;
        let eps = self.params.eps;
        let n_dofs = self.mesh.n_dofs();
        let mut mid = vec![0.0; n_dofs];
        let mut rate = vec![0.0; n_dofs];
        let mut acc = EnergyBreakdown {
            inertia: 0.0,
            forcing: 0.0,
            bulk: 0.0,
            boundary: 0.0,
            penalty: 0.0,
        };
        for k in 0..self.n_steps {
            let wk = self.weights[k];
            if wk == 0.0 {
                continue;
            }
            let (a, b) = (traj.at(k), traj.at(k + 1));
            for d in 0..n_dofs {
                mid[d] = 0.5 * (a[d] + b[d]);
                rate[d] = (b[d] - a[d]) / self.ht;
            }
            let f_at = &self.forcing_mid[k];
            let mut gp_index = 0usize;
            for c in 0..self.mesh.n_cells() {
                let nodes = self.mesh.cell_nodes(c);
                for p in 0..4 {
                    let (m, del, g) = gather(&self.quad, p, &nodes, &mid, &rate);
                    let a_rate = material_rate(self.convection, &m, &del, &g);
                    let w = self.quad.weights[p];
                    acc.inertia +=
                        wk * w * 0.5 * eps * (a_rate[0] * a_rate[0] + a_rate[1] * a_rate[1]);
                    let f = f_at[gp_index];
                    acc.forcing -= wk * w * (f[0] * m[0] + f[1] * m[1]);
                    let d = SymTensor2::new(g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0]));
                    acc.bulk += wk * w * potential_bulk(d, &self.params, true);
                    gp_index += 1;
                }
                // Reduced-integration divergence penalty at the centroid.
                let mut div = 0.0;
                for a in 0..4 {
                    div += self.centroid_dx[a] * mid[2 * nodes[a]]
                        + self.centroid_dy[a] * mid[2 * nodes[a] + 1];
                }
                acc.penalty +=
                    wk * self.handler.kappa * div * div * (self.mesh.hx * self.mesh.hy);
            }
            for ep in &self.edge_points {
                let v = [
                    ep.shape[0] * mid[2 * ep.nodes[0]] + ep.shape[1] * mid[2 * ep.nodes[1]],
                    ep.shape[0] * mid[2 * ep.nodes[0] + 1]
                        + ep.shape[1] * mid[2 * ep.nodes[1] + 1],
                ];
                acc.boundary += wk * ep.weight * potential_boundary(v, &self.params, true);
            }
        }
        Ok(FunctionalEval {
            value: acc.total(),
            breakdown: acc,
        })
    }

    /// Exact gradient of [`Self::evaluate`] with respect to the free dofs:
    /// full trajectory length, identically zero on the initial node and all
    /// pinned dofs, with flux-row components projected out.
    pub fn gradient(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        self.check_traj(traj)?;
        self.require_admissible(traj)?;
        let eps = self.params.eps;
        let n_dofs = self.mesh.n_dofs();
        let mut grad = vec![0.0; (self.n_steps + 1) * n_dofs];
        let mut mid = vec![0.0; n_dofs];
        let mut rate = vec![0.0; n_dofs];
        for k in 0..self.n_steps {
            let wk = self.weights[k];
            if wk == 0.0 {
                continue;
            }
            let (a, b) = (traj.at(k), traj.at(k + 1));
            for d in 0..n_dofs {
                mid[d] = 0.5 * (a[d] + b[d]);
                rate[d] = (b[d] - a[d]) / self.ht;
            }
            let f_at = &self.forcing_mid[k];
            // Split borrows: gradient blocks for nodes k and k+1.
            let (gk, gk1) = {
                let (lo, hi) = grad.split_at_mut((k + 1) * n_dofs);
                (&mut lo[k * n_dofs..], &mut hi[..n_dofs])
            };
            let mut gp_index = 0usize;
            for c in 0..self.mesh.n_cells() {
                let nodes = self.mesh.cell_nodes(c);
                for p in 0..4 {
                    let (m, del, g) = gather(&self.quad, p, &nodes, &mid, &rate);
                    let a_rate = material_rate(self.convection, &m, &del, &g);
                    let w = wk * self.quad.weights[p];
                    // e = weight * eps * material rate.
                    let e = [w * eps * a_rate[0], w * eps * a_rate[1]];
                    let f = f_at[gp_index];
                    let d = SymTensor2::new(g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0]));
                    let s = stress_bulk(d, &self.params, true);
                    let omega = g[1][0] - g[0][1];
                    let cross = e[1] * m[0] - e[0] * m[1];
                    for a_loc in 0..4 {
                        let n = self.quad.shape[p][a_loc];
                        let dx = self.quad.dshape_dx[p][a_loc];
                        let dy = self.quad.dshape_dy[p][a_loc];
                        let dof0 = 2 * nodes[a_loc];
                        let dof1 = dof0 + 1;
                        // Rate part of the inertia term.
                        let r0 = e[0] * n / self.ht;
                        let r1 = e[1] * n / self.ht;
                        gk[dof0] -= r0;
                        gk[dof1] -= r1;
                        gk1[dof0] += r0;
                        gk1[dof1] += r1;
                        // Midpoint-coupled parts, split half/half in time.
                        let (conv0, conv1) = match self.convection {
                            ConvectionForm::Rotational => {
                                (-dy * cross + omega * e[1] * n, dx * cross - omega * e[0] * n)
                            }
                            ConvectionForm::Material => {
                                let adv = dx * m[0] + dy * m[1];
                                let col0 = e[0] * g[0][0] + e[1] * g[1][0];
                                let col1 = e[0] * g[0][1] + e[1] * g[1][1];
                                (e[0] * adv + col0 * n, e[1] * adv + col1 * n)
                            }
                        };
                        let p0 = conv0 - w * f[0] * n + w * (s.xx * dx + s.xy * dy);
                        let p1 = conv1 - w * f[1] * n + w * (s.xy * dx + s.yy * dy);
                        gk[dof0] += 0.5 * p0;
                        gk[dof1] += 0.5 * p1;
                        gk1[dof0] += 0.5 * p0;
                        gk1[dof1] += 0.5 * p1;
                    }
                    gp_index += 1;
                }
                let mut div = 0.0;
                for a_loc in 0..4 {
                    div += self.centroid_dx[a_loc] * mid[2 * nodes[a_loc]]
                        + self.centroid_dy[a_loc] * mid[2 * nodes[a_loc] + 1];
                }
                let pen =
                    wk * 2.0 * self.handler.kappa * div * (self.mesh.hx * self.mesh.hy);
                for a_loc in 0..4 {
                    let c0 = 0.5 * pen * self.centroid_dx[a_loc];
                    let c1 = 0.5 * pen * self.centroid_dy[a_loc];
                    gk[2 * nodes[a_loc]] += c0;
                    gk[2 * nodes[a_loc] + 1] += c1;
                    gk1[2 * nodes[a_loc]] += c0;
                    gk1[2 * nodes[a_loc] + 1] += c1;
                }
            }
            for ep in &self.edge_points {
                let v = [
                    ep.shape[0] * mid[2 * ep.nodes[0]] + ep.shape[1] * mid[2 * ep.nodes[1]],
                    ep.shape[0] * mid[2 * ep.nodes[0] + 1]
                        + ep.shape[1] * mid[2 * ep.nodes[1] + 1],
                ];
                let s = stress_boundary(v, &self.params, true);
                for (i, &node) in ep.nodes.iter().enumerate() {
                    let c0 = 0.5 * wk * ep.weight * s[0] * ep.shape[i];
                    let c1 = 0.5 * wk * ep.weight * s[1] * ep.shape[i];
                    let (gk, gk1) = {
                        let (lo, hi) = grad.split_at_mut((k + 1) * n_dofs);
                        (&mut lo[k * n_dofs..], &mut hi[..n_dofs])
                    };
                    gk[2 * node] += c0;
                    gk[2 * node + 1] += c1;
                    gk1[2 * node] += c0;
                    gk1[2 * node + 1] += c1;
                }
            }
        }
        self.handler.project_tangent(&mut grad);
        Ok(grad)
    }

    /// Weighted stationarity residual: the directional derivative of the
    /// objective along an arbitrary test trajectory `phi`, assembled from
    /// its own integrand rather than through [`Self::gradient`].
    pub fn el1_residual(&self, traj: &Trajectory, test: &Trajectory) -> Result<f64> {
        // The assembly multiplies the whole inertia variation by eps, so the
        // rate coefficients here carry only the slab weight.
        let coeff: Vec<[f64; 4]> = (0..self.n_steps)
            .map(|k| {
                let wk = self.weights[k];
                [-wk / self.ht, wk / self.ht, 0.5 * wk, 0.5 * wk]
            })
            .collect();
        self.pairing_residual(traj, test, &coeff)
    }

    /// Unweighted stationarity residual: the same first variation paired
    /// against `exp(t/eps) pi`, which removes the exponential weight from
    /// the integrals.  `pi` must vanish at both time endpoints.
    pub fn el2_residual(&self, traj: &Trajectory, test: &Trajectory) -> Result<f64> {
        let zero_at = |k: usize| test.at(k).iter().all(|v| *v == 0.0);
        if !zero_at(0) || !zero_at(test.n_steps()) {
            return Err(Error::NotAdmissible(
                "test trajectory must vanish at both time endpoints".into(),
            ));
        }
        let eps = self.params.eps;
        // Per-slab substitution factors: with mu = 1 - exp(-ht/eps) and
        // nu = exp(ht/eps) - 1, pairing the weighted form against
        // exp(t/eps) pi yields the unweighted integrals in the limit
        // ht/eps -> 0 while staying an exact reparameterization discretely.
        let mu = -(-self.ht / eps).exp_m1();
        let nu = (self.ht / eps).exp_m1();
        // One factor of eps is applied by the assembly itself (see
        // el1_residual); these carry the rest of the substitution weights.
        let coeff: Vec<[f64; 4]> = (0..self.n_steps)
            .map(|_| {
                [
                    -eps * mu / self.ht,
                    eps * nu / self.ht,
                    0.5 * eps * mu,
                    0.5 * eps * nu,
                ]
            })
            .collect();
        self.pairing_residual(traj, test, &coeff)
    }

    /// Shared assembly of the first-variation pairings.  Per slab, the test
    /// field enters through a rate-like combination `c0 pi_k + c1 pi_{k+1}`
    /// (paired with the inertia rate) and a midpoint-like combination
    /// `c2 pi_k + c3 pi_{k+1}` (paired with everything else).
    fn pairing_residual(
        &self,
        traj: &Trajectory,
        test: &Trajectory,
        coeff: &[[f64; 4]],
    ) -> Result<f64> {
        self.check_traj(traj)?;
        self.check_traj(test)?;
        let eps = self.params.eps;
        let n_dofs = self.mesh.n_dofs();
        let mut mid = vec![0.0; n_dofs];
        let mut rate = vec![0.0; n_dofs];
        let mut trate = vec![0.0; n_dofs];
        let mut tmid = vec![0.0; n_dofs];
        let mut total = 0.0;
        for k in 0..self.n_steps {
            let [c0, c1, c2, c3] = coeff[k];
            let (a, b) = (traj.at(k), traj.at(k + 1));
            let (pa, pb) = (test.at(k), test.at(k + 1));
            for d in 0..n_dofs {
                mid[d] = 0.5 * (a[d] + b[d]);
                rate[d] = (b[d] - a[d]) / self.ht;
                trate[d] = c0 * pa[d] + c1 * pb[d];
                tmid[d] = c2 * pa[d] + c3 * pb[d];
            }
            let f_at = &self.forcing_mid[k];
            let mut gp_index = 0usize;
            for c in 0..self.mesh.n_cells() {
                let nodes = self.mesh.cell_nodes(c);
                for p in 0..4 {
                    let (m, del, g) = gather(&self.quad, p, &nodes, &mid, &rate);
                    let (q, qr, qg) = gather(&self.quad, p, &nodes, &tmid, &trate);
                    let a_rate = material_rate(self.convection, &m, &del, &g);
                    let w = self.quad.weights[p];
                    // Inertia: eps * a . (trate-part + convective variation).
                    let var = match self.convection {
                        ConvectionForm::Rotational => {
                            let om_v = g[1][0] - g[0][1];
                            let om_q = qg[1][0] - qg[0][1];
                            [
                                qr[0] - om_v * q[1] - om_q * m[1],
                                qr[1] + om_v * q[0] + om_q * m[0],
                            ]
                        }
                        ConvectionForm::Material => [
                            qr[0] + g[0][0] * q[0] + g[0][1] * q[1] + qg[0][0] * m[0]
                                + qg[0][1] * m[1],
                            qr[1] + g[1][0] * q[0] + g[1][1] * q[1] + qg[1][0] * m[0]
                                + qg[1][1] * m[1],
                        ],
                    };
                    total += w * eps * (a_rate[0] * var[0] + a_rate[1] * var[1]);
                    let f = f_at[gp_index];
                    total -= w * (f[0] * q[0] + f[1] * q[1]);
                    let d = SymTensor2::new(g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0]));
                    let s = stress_bulk(d, &self.params, true);
                    let dq = SymTensor2::new(qg[0][0], qg[1][1], 0.5 * (qg[0][1] + qg[1][0]));
                    total += w * s.dot(&dq);
                    gp_index += 1;
                }
                let mut div = 0.0;
                let mut divq = 0.0;
                for a_loc in 0..4 {
                    div += self.centroid_dx[a_loc] * mid[2 * nodes[a_loc]]
                        + self.centroid_dy[a_loc] * mid[2 * nodes[a_loc] + 1];
                    divq += self.centroid_dx[a_loc] * tmid[2 * nodes[a_loc]]
                        + self.centroid_dy[a_loc] * tmid[2 * nodes[a_loc] + 1];
                }
                total += 2.0 * self.handler.kappa * div * divq * (self.mesh.hx * self.mesh.hy);
            }
            for ep in &self.edge_points {
                let v = [
                    ep.shape[0] * mid[2 * ep.nodes[0]] + ep.shape[1] * mid[2 * ep.nodes[1]],
                    ep.shape[0] * mid[2 * ep.nodes[0] + 1]
                        + ep.shape[1] * mid[2 * ep.nodes[1] + 1],
                ];
                let q = [
                    ep.shape[0] * tmid[2 * ep.nodes[0]] + ep.shape[1] * tmid[2 * ep.nodes[1]],
                    ep.shape[0] * tmid[2 * ep.nodes[0] + 1]
                        + ep.shape[1] * tmid[2 * ep.nodes[1] + 1],
                ];
                let s = stress_boundary(v, &self.params, true);
                total += ep.weight * (s[0] * q[0] + s[1] * q[1]);
            }
        }
        Ok(total)
    }
}

/// Hot-loop gather: midpoint value, rate value, and midpoint gradient at one
/// Gauss point.
#[inline]
fn gather(
    quad: &CellQuad,
    p: usize,
    nodes: &[usize; 4],
    mid: &[f64],
    rate: &[f64],
) -> ([f64; 2], [f64; 2], [[f64; 2]; 2]) {
    let mut m = [0.0; 2];
    let mut del = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for a in 0..4 {
        let n = quad.shape[p][a];
        let dx = quad.dshape_dx[p][a];
        let dy = quad.dshape_dy[p][a];
        let vx = mid[2 * nodes[a]];
        let vy = mid[2 * nodes[a] + 1];
        m[0] += n * vx;
        m[1] += n * vy;
        del[0] += n * rate[2 * nodes[a]];
        del[1] += n * rate[2 * nodes[a] + 1];
        g[0][0] += dx * vx;
        g[0][1] += dy * vx;
        g[1][0] += dx * vy;
        g[1][1] += dy * vy;
    }
    (m, del, g)
}

#[inline]
fn material_rate(
    form: ConvectionForm,
    m: &[f64; 2],
    del: &[f64; 2],
    g: &[[f64; 2]; 2],
) -> [f64; 2] {
    match form {
        ConvectionForm::Rotational => {
            let omega = g[1][0] - g[0][1];
            [del[0] - omega * m[1], del[1] + omega * m[0]]
        }
        ConvectionForm::Material => [
            del[0] + g[0][0] * m[0] + g[0][1] * m[1],
            del[1] + g[1][0] * m[0] + g[1][1] * m[1],
        ],
    }
}
