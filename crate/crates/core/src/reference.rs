//! Conventional backward-Euler solver for the constrained channel flow,
//! used as the causal oracle that the continuation ladder should approach.
//!
//! Each implicit step is solved by Picard iteration: the bulk-stress and
//! wall-friction coefficients and the vorticity are frozen at the previous
//! iterate, leaving a linear system in the new velocity.  The frozen
//! convection keeps the rotational form `(curl v) x v` skew in the unknown,
//! so each linear system is energy-neutral in its convective part, and the
//! converged step satisfies the discrete kinetic-energy inequality.
//!
//! The natural boundary conditions are not imposed: on walls only the
//! friction pairing appears, on outlets nothing appears, and everything
//! else is left to the variational formulation.  Divergence is controlled
//! by the same reduced-integration penalty as the space-time objective, so
//! any discrepancy between the two solvers is a time-regularization effect.

use nalgebra::{DMatrix, DVector};

use crate::constitutive::{
    boundary_factor, bulk_factor, stress_boundary, stress_bulk, validate_params,
    ConstitutiveParams, SymTensor2,
};
use crate::error::{Error, Result};
use crate::functional::ForcingFn;
use crate::geometry::{BoundaryTag, ChannelMesh, ExtensionField};
use crate::operators::{cell_quadrature, edge_gauss, CellQuad, Trajectory};

/// State of the implicit time stepper.
#[derive(Debug, Clone)]
pub struct TimeStepperState {
    /// Current velocity dofs; always satisfies the pin and flux constraints.
    pub velocity: Vec<f64>,
    /// Current time.
    pub time: f64,
    /// Step size.
    pub ht: f64,
    /// Picard iterations spent on the most recent step.
    pub picard_iters: usize,
    /// Final Picard update norm of the most recent step.
    pub picard_update: f64,
}

/// Kinetic-energy ledger of one accepted step: the inequality
/// `lhs <= rhs` holds up to roundoff because the convective term cancels
/// against itself and backward Euler only dissipates.
#[derive(Debug, Clone, Copy)]
pub struct EnergyLedger {
    /// Kinetic-energy increment plus step dissipation.
    pub lhs: f64,
    /// Forcing plus inflow-extension work terms.
    pub rhs: f64,
    /// `max(0, lhs - rhs) / max(1, |lhs|, |rhs|)`.
    pub violation: f64,
}

struct EdgePoint {
    nodes: [usize; 2],
    shape: [f64; 2],
    weight: f64,
}

/// Implicit solver over the same mesh, constraints, and penalty as the
/// space-time objective.
pub struct ReferenceSolver<'a> {
    mesh: &'a ChannelMesh,
    extension: &'a ExtensionField,
    params: ConstitutiveParams,
    kappa: f64,
    forcing: ForcingFn<'a>,
    quad: CellQuad,
    edge_points: Vec<EdgePoint>,
    /// Per-dof pin values (inlet components and wall-normal components).
    pins: Vec<Option<f64>>,
    /// Outlet flux rows with their targets, taken from the extension.
    flux_rows: Vec<(Vec<(usize, f64)>, f64)>,
    centroid_dx: [f64; 4],
    centroid_dy: [f64; 4],
}

impl<'a> ReferenceSolver<'a> {
    pub fn new(
        mesh: &'a ChannelMesh,
        extension: &'a ExtensionField,
        params: ConstitutiveParams,
        kappa: f64,
        forcing: ForcingFn<'a>,
    ) -> Result<Self> {
        validate_params(&params)?;
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty coefficient must be finite and nonnegative, got {kappa}"
            )));
        }
        if extension.value().len() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch(
                "extension does not match the mesh".into(),
            ));
        }
        let quad = cell_quadrature(mesh);
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
        let ext = extension.value();
        let mut pins: Vec<Option<f64>> = vec![None; mesh.n_dofs()];
        for id in mesh.dirichlet_nodes() {
            pins[2 * id] = Some(ext[2 * id]);
            pins[2 * id + 1] = Some(ext[2 * id + 1]);
        }
        for (id, comp) in mesh.wall_pins() {
            pins[2 * id + comp] = Some(ext[2 * id + comp]);
        }
        let mut flux_rows = Vec::new();
        for outlet in 0..mesh.n_outlets() {
            let row = mesh.outlet_flux_row(outlet as u8);
            let target: f64 = row.iter().map(|&(dof, w)| w * ext[dof]).sum();
            flux_rows.push((row, target));
        }
        let centroid_dx = [-0.5 / mesh.hx, 0.5 / mesh.hx, 0.5 / mesh.hx, -0.5 / mesh.hx];
        let centroid_dy = [-0.5 / mesh.hy, -0.5 / mesh.hy, 0.5 / mesh.hy, 0.5 / mesh.hy];
        Ok(Self {
            mesh,
            extension,
            params,
            kappa,
            forcing,
            quad,
            edge_points,
            pins,
            flux_rows,
            centroid_dx,
            centroid_dy,
        })
    }

    /// Starting state: the extension field at time zero.
    pub fn initial_state(&self, ht: f64) -> Result<TimeStepperState> {
        if !(ht > 0.0) || !ht.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {ht}"
            )));
        }
        Ok(TimeStepperState {
            velocity: self.extension.value().to_vec(),
            time: 0.0,
            ht,
            picard_iters: 0,
            picard_update: 0.0,
        })
    }

    fn gradient_at(&self, field: &[f64], cell: usize, pt: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let nodes = self.mesh.cell_nodes(cell);
        let mut v = [0.0f64; 2];
        let mut g = [[0.0f64; 2]; 2];
        for (loc, &id) in nodes.iter().enumerate() {
            let n = self.quad.shape[pt][loc];
            let dx = self.quad.dshape_dx[pt][loc];
            let dy = self.quad.dshape_dy[pt][loc];
            let vx = field[2 * id];
            let vy = field[2 * id + 1];
            v[0] += n * vx;
            v[1] += n * vy;
            g[0][0] += dx * vx;
            g[0][1] += dy * vx;
            g[1][0] += dx * vy;
            g[1][1] += dy * vy;
        }
        (v, g)
    }

    /// Assembles the frozen-coefficient linear system.  `mass` adds the
    /// backward-Euler terms `(v - v_old)/ht` with forcing at `t_new`; `None`
    /// assembles the steady problem with forcing at time zero.
    fn assemble(
        &self,
        frozen: &[f64],
        mass: Option<(&[f64], f64, f64)>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.mesh.n_dofs();
        let m = self.flux_rows.len();
        let mut a = DMatrix::<f64>::zeros(n + m, n + m);
        let mut b = DVector::<f64>::zeros(n + m);
        let t_force = mass.map_or(0.0, |(_, _, t)| t);
        let inv_ht = mass.map(|(_, ht, _)| 1.0 / ht);

        for c in 0..self.mesh.n_cells() {
            let nodes = self.mesh.cell_nodes(c);
            let sw = self.mesh.node(nodes[0]);
            for pt in 0..4 {
                let w = self.quad.weights[pt];
                let (_, gf) = self.gradient_at(frozen, c, pt);
                let omega = gf[1][0] - gf[0][1];
                let dtensor = SymTensor2::new(
                    gf[0][0],
                    gf[1][1],
                    0.5 * (gf[0][1] + gf[1][0]),
                );
                let mu = bulk_factor(dtensor.norm_sq(), &self.params, false);
                let x = [
                    sw[0] + self.quad.offsets[pt][0],
                    sw[1] + self.quad.offsets[pt][1],
                ];
                let f = (self.forcing)(x, t_force);
                for (li, &ni) in nodes.iter().enumerate() {
                    let nvi = self.quad.shape[pt][li];
                    let dxi = self.quad.dshape_dx[pt][li];
                    let dyi = self.quad.dshape_dy[pt][li];
                    b[2 * ni] += w * f[0] * nvi;
                    b[2 * ni + 1] += w * f[1] * nvi;
                    for (lj, &nj) in nodes.iter().enumerate() {
                        let nvj = self.quad.shape[pt][lj];
                        let dxj = self.quad.dshape_dx[pt][lj];
                        let dyj = self.quad.dshape_dy[pt][lj];
                        // Viscous pairing: mu * D(phi_j) : D(phi_i) per
                        // (test, trial) component pair (S = mu_frozen * D
                        // with the factor already holding the 2).
                        let xx = dxi * dxj + 0.5 * dyi * dyj;
                        let yy = dyi * dyj + 0.5 * dxi * dxj;
                        let xy = 0.5 * dyi * dxj;
                        let yx = 0.5 * dxi * dyj;
                        a[(2 * ni, 2 * nj)] += w * mu * xx;
                        a[(2 * ni + 1, 2 * nj + 1)] += w * mu * yy;
                        a[(2 * ni, 2 * nj + 1)] += w * mu * xy;
                        a[(2 * ni + 1, 2 * nj)] += w * mu * yx;
                        // Frozen rotational convection: (omega x v) . phi
                        // couples components skew-symmetrically.
                        a[(2 * ni, 2 * nj + 1)] -= w * omega * nvi * nvj;
                        a[(2 * ni + 1, 2 * nj)] += w * omega * nvi * nvj;
                        if let Some(ih) = inv_ht {
                            let mval = ih * w * nvi * nvj;
                            a[(2 * ni, 2 * nj)] += mval;
                            a[(2 * ni + 1, 2 * nj + 1)] += mval;
                        }
                    }
                }
            }
            // Reduced-integration divergence penalty at the centroid.
            let area = self.mesh.hx * self.mesh.hy;
            for (li, &ni) in nodes.iter().enumerate() {
                for (lj, &nj) in nodes.iter().enumerate() {
                    let k = 2.0 * self.kappa * area;
                    a[(2 * ni, 2 * nj)] += k * self.centroid_dx[li] * self.centroid_dx[lj];
                    a[(2 * ni, 2 * nj + 1)] += k * self.centroid_dx[li] * self.centroid_dy[lj];
                    a[(2 * ni + 1, 2 * nj)] += k * self.centroid_dy[li] * self.centroid_dx[lj];
                    a[(2 * ni + 1, 2 * nj + 1)] += k * self.centroid_dy[li] * self.centroid_dy[lj];
                }
            }
        }

        // Wall and outlet friction with the frozen coefficient.
        for ep in &self.edge_points {
            let v = [
                ep.shape[0] * frozen[2 * ep.nodes[0]] + ep.shape[1] * frozen[2 * ep.nodes[1]],
                ep.shape[0] * frozen[2 * ep.nodes[0] + 1]
                    + ep.shape[1] * frozen[2 * ep.nodes[1] + 1],
            ];
            let nu = boundary_factor(v[0] * v[0] + v[1] * v[1], &self.params, false);
            for (li, &ni) in ep.nodes.iter().enumerate() {
                for (lj, &nj) in ep.nodes.iter().enumerate() {
                    let val = ep.weight * nu * ep.shape[li] * ep.shape[lj];
                    a[(2 * ni, 2 * nj)] += val;
                    a[(2 * ni + 1, 2 * nj + 1)] += val;
                }
            }
        }

        if let Some((v_old, ht, _)) = mass {
            let ih = 1.0 / ht;
            for c in 0..self.mesh.n_cells() {
                let nodes = self.mesh.cell_nodes(c);
                for pt in 0..4 {
                    let w = self.quad.weights[pt];
                    let mut vv = [0.0f64; 2];
                    for (loc, &id) in nodes.iter().enumerate() {
                        let nv = self.quad.shape[pt][loc];
                        vv[0] += nv * v_old[2 * id];
                        vv[1] += nv * v_old[2 * id + 1];
                    }
                    for (li, &ni) in nodes.iter().enumerate() {
                        let nvi = self.quad.shape[pt][li];
                        b[2 * ni] += ih * w * vv[0] * nvi;
                        b[2 * ni + 1] += ih * w * vv[1] * nvi;
                    }
                }
            }
        }

        // Flux constraints via symmetric multiplier rows.
        for (i, (row, target)) in self.flux_rows.iter().enumerate() {
            for &(dof, wgt) in row {
                a[(n + i, dof)] = wgt;
                if self.pins[dof].is_none() {
                    a[(dof, n + i)] = wgt;
                }
            }
            b[n + i] = *target;
        }

        // Pinned dofs become identity rows.
        for (dof, pin) in self.pins.iter().enumerate() {
            if let Some(val) = pin {
                for j in 0..n + m {
                    a[(dof, j)] = 0.0;
                }
                a[(dof, dof)] = 1.0;
                b[dof] = *val;
            }
        }
        (a, b)
    }

    fn picard(
        &self,
        start: &[f64],
        mass: Option<(&[f64], f64, f64)>,
    ) -> Result<(Vec<f64>, usize, f64)> {
        let n = self.mesh.n_dofs();
        let mut current = start.to_vec();
        for iter in 1..=200 {
            let (a, b) = self.assemble(&current, mass);
            let lu = a.lu();
            let sol = lu
                .solve(&b)
                .ok_or_else(|| Error::SingularSystem("implicit step matrix".into()))?;
            let next: Vec<f64> = sol.as_slice()[..n].to_vec();
            let mut update = 0.0f64;
            let mut scale = 0.0f64;
            for (a, b) in next.iter().zip(&current) {
                update += (a - b) * (a - b);
                scale += a * a;
            }
            let update = update.sqrt();
            current = next;
            if update <= 1e-10 * (1.0 + scale.sqrt()) {
                return Ok((current, iter, update));
            }
        }
        Err(Error::NoConvergence(
            "Picard iteration exceeded 200 iterations".into(),
        ))
    }

    /// Advances one backward-Euler step.
    pub fn step(&self, state: &TimeStepperState) -> Result<TimeStepperState> {
        if state.velocity.len() != self.mesh.n_dofs() {
            return Err(Error::DimensionMismatch(
                "state does not match the mesh".into(),
            ));
        }
        let t_new = state.time + state.ht;
        let (velocity, picard_iters, picard_update) =
            self.picard(&state.velocity, Some((&state.velocity, state.ht, t_new)))?;
        Ok(TimeStepperState {
            velocity,
            time: t_new,
            ht: state.ht,
            picard_iters,
            picard_update,
        })
    }

    /// Runs the stepper over `[0, t_end]` and samples every time node.
    pub fn solve(&self, t_end: f64, ht: f64) -> Result<Trajectory> {
        let mut state = self.initial_state(ht)?;
        if !(t_end > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "final time must be positive, got {t_end}"
            )));
        }
        let n_steps = (t_end / ht).round() as usize;
        if ((n_steps as f64) * ht - t_end).abs() > 1e-9 * t_end {
            return Err(Error::InvalidParameter(format!(
                "time step {ht} must divide the final time {t_end}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParameter(
                "need at least two time steps".into(),
            ));
        }
        let mut traj = Trajectory::zeros(self.mesh.n_dofs(), n_steps, ht)?;
        traj.at_mut(0).copy_from_slice(&state.velocity);
        for k in 1..=n_steps {
            state = self.step(&state)?;
            traj.at_mut(k).copy_from_slice(&state.velocity);
        }
        Ok(traj)
    }

    /// Solves the steady problem by Picard iteration from the extension.
    pub fn solve_steady(&self) -> Result<(Vec<f64>, usize)> {
        let (v, iters, _) = self.picard(self.extension.value(), None)?;
        Ok((v, iters))
    }

    /// Worst relative constraint violation of a field (pins and fluxes).
    pub fn constraint_violation(&self, field: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (dof, pin) in self.pins.iter().enumerate() {
            if let Some(val) = pin {
                worst = worst.max((field[dof] - val).abs() / (1.0 + val.abs()));
            }
        }
        for (row, target) in &self.flux_rows {
            let got: f64 = row.iter().map(|&(dof, w)| w * field[dof]).sum();
            worst = worst.max((got - target).abs() / (1.0 + target.abs()));
        }
        worst
    }

    /// Kinetic-energy ledger of the step `prev -> next`; see [`EnergyLedger`].
    pub fn energy_ledger(&self, prev: &[f64], next: &[f64], ht: f64, t_new: f64) -> EnergyLedger {
        let ext = self.extension.value();
        let mut ke_next = 0.0;
        let mut ke_prev = 0.0;
        let mut dissipation = 0.0;
        let mut work = 0.0;
        // Mass pairing of the increment against the extension.
        let mut incr_ext = 0.0;
        for c in 0..self.mesh.n_cells() {
            let nodes = self.mesh.cell_nodes(c);
            let sw = self.mesh.node(nodes[0]);
            for pt in 0..4 {
                let w = self.quad.weights[pt];
                let mut vn = [0.0f64; 2];
                let mut vp = [0.0f64; 2];
                let mut ve = [0.0f64; 2];
                let mut gn = [[0.0f64; 2]; 2];
                let mut ge = [[0.0f64; 2]; 2];
                for (loc, &id) in nodes.iter().enumerate() {
                    let nv = self.quad.shape[pt][loc];
                    let dx = self.quad.dshape_dx[pt][loc];
                    let dy = self.quad.dshape_dy[pt][loc];
                    for comp in 0..2 {
                        vn[comp] += nv * next[2 * id + comp];
                        vp[comp] += nv * prev[2 * id + comp];
                        ve[comp] += nv * ext[2 * id + comp];
                    }
                    gn[0][0] += dx * next[2 * id];
                    gn[0][1] += dy * next[2 * id];
                    gn[1][0] += dx * next[2 * id + 1];
                    gn[1][1] += dy * next[2 * id + 1];
                    ge[0][0] += dx * ext[2 * id];
                    ge[0][1] += dy * ext[2 * id];
                    ge[1][0] += dx * ext[2 * id + 1];
                    ge[1][1] += dy * ext[2 * id + 1];
                }
                ke_next += 0.5 * w * (vn[0] * vn[0] + vn[1] * vn[1]);
                ke_prev += 0.5 * w * (vp[0] * vp[0] + vp[1] * vp[1]);
                incr_ext += w * ((vn[0] - vp[0]) * ve[0] + (vn[1] - vp[1]) * ve[1]);
                let dn = SymTensor2::new(gn[0][0], gn[1][1], 0.5 * (gn[0][1] + gn[1][0]));
                let de = SymTensor2::new(ge[0][0], ge[1][1], 0.5 * (ge[0][1] + ge[1][0]));
                let stress = stress_bulk(dn, &self.params, false);
                dissipation += w * stress.dot(&dn);
                work += w * stress.dot(&de);
                // Convection work against the extension (the pairing with
                // the velocity itself cancels pointwise).
                let omega = gn[1][0] - gn[0][1];
                let cx = -omega * vn[1];
                let cy = omega * vn[0];
                work += w * (cx * ve[0] + cy * ve[1]);
                let x = [
                    sw[0] + self.quad.offsets[pt][0],
                    sw[1] + self.quad.offsets[pt][1],
                ];
                let f = (self.forcing)(x, t_new);
                work += w * (f[0] * (vn[0] - ve[0]) + f[1] * (vn[1] - ve[1]));
            }
            // Reduced-integration penalty parts.
            let area = self.mesh.hx * self.mesh.hy;
            let mut div_n = 0.0;
            let mut div_e = 0.0;
            for (loc, &id) in nodes.iter().enumerate() {
                div_n +=
                    self.centroid_dx[loc] * next[2 * id] + self.centroid_dy[loc] * next[2 * id + 1];
                div_e +=
                    self.centroid_dx[loc] * ext[2 * id] + self.centroid_dy[loc] * ext[2 * id + 1];
            }
            dissipation += 2.0 * self.kappa * area * div_n * div_n;
            work += 2.0 * self.kappa * area * div_n * div_e;
        }
        for ep in &self.edge_points {
            let mut vn = [0.0f64; 2];
            let mut ve = [0.0f64; 2];
            for (loc, &id) in ep.nodes.iter().enumerate() {
                for comp in 0..2 {
                    vn[comp] += ep.shape[loc] * next[2 * id + comp];
                    ve[comp] += ep.shape[loc] * ext[2 * id + comp];
                }
            }
            let s = stress_boundary(vn, &self.params, false);
            dissipation += ep.weight * (s[0] * vn[0] + s[1] * vn[1]);
            work += ep.weight * (s[0] * ve[0] + s[1] * ve[1]);
        }
        let lhs = ke_next - ke_prev + ht * dissipation;
        let rhs = ht * work + incr_ext;
        let violation = (lhs - rhs).max(0.0) / lhs.abs().max(rhs.abs()).max(1.0);
        EnergyLedger {
            lhs,
            rhs,
            violation,
        }
    }
}
