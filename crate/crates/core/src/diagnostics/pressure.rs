//! Pressure recovery from a velocity trajectory.
//!
//! The momentum balance determines the pressure only through its pairing
//! with the divergence of admissible test fields.  For each time node `t`
//! the accumulated-momentum functional
//!
//! ```text
//! <g(t), phi> = int (v(t) - v(0)) . phi
//!             + int_0^t [ (curl v x v) . phi - f . phi + S(Dv) . Dphi ]
//!             + int_walls int_0^t s(v) . phi
//! ```
//!
//! vanishes on discretely divergence-free admissible `phi` whenever `v`
//! solves the flow problem, so `g` is representable through the divergence
//! pairing.  Solving the stabilized equal-order mixed problem
//!
//! ```text
//! (grad u, grad phi) + (u, phi) + (q, div phi) = <g, phi>
//! (div u, chi) - beta h^2 (grad q, grad chi)   = 0,      int q = 0
//! ```
//!
//! over the constrained space (pinned inlet and wall-normal components,
//! zero net flux per outlet via multipliers) yields the accumulated
//! multiplier `Q := q` together with an auxiliary field `u` that absorbs
//! whatever part of `g` the divergence pairing cannot express; the norm of
//! `u` is reported as a consistency diagnostic.  The multiplier pairs with
//! the rotational convection, so it accumulates the *dynamic* pressure;
//! the kinetic correction `K(t) = -int_0^t |v|^2/2` converts it to the
//! static one, and
//!
//! ```text
//! P(t) = Q(t) + K(t) - mean(K(t)) + D(t)/|Omega|
//! ```
//!
//! has exact space mean `D(t)`.  `P` accumulates the pressure in time: the
//! physical pressure on slab `k` is the difference quotient returned by
//! [`PressureField::slice`], and shifting `D` by a constant shifts `P` by
//! that constant over the domain area and changes nothing else.

use nalgebra::{DMatrix, DVector};

use crate::constitutive::{
    stress_boundary, stress_bulk, validate_params, ConstitutiveParams, SymTensor2,
};
use crate::error::{Error, Result};
use crate::functional::ForcingFn;
use crate::geometry::{BoundaryTag, ChannelMesh};
use crate::operators::{cell_quadrature, edge_gauss, CellQuad, Trajectory};

/// Stabilization weight of the equal-order mixed solve, scaled by the cell
/// diameter squared.
const STAB_BETA: f64 = 0.05;

/// Scalar pressure trajectory reconstructed from a velocity trajectory.
///
/// All stored fields are nodal scalars per time node.  `accumulated` is the
/// time antiderivative of the physical pressure; `slice` differentiates it.
#[derive(Debug, Clone)]
pub struct PressureField {
    n_nodes: usize,
    ht: f64,
    area: f64,
    /// Zero-mean multiplier of the mixed solve at each time node.
    q: Vec<Vec<f64>>,
    /// Kinetic correction `-int_0^t |v|^2/2` at each time node.
    kinetic: Vec<Vec<f64>>,
    /// Combined accumulated pressure at each time node.
    p: Vec<Vec<f64>>,
    /// Mean targets, one per time node.
    d: Vec<f64>,
    /// `|int_Omega P - D|` per time node, as solved.
    mean_residual: Vec<f64>,
    /// H1 norm of the auxiliary velocity of the mixed solve per time node;
    /// small values mean the momentum functional was expressible through
    /// the divergence pairing alone.
    aux_norm: Vec<f64>,
}

impl PressureField {
    pub fn n_time_nodes(&self) -> usize {
        self.p.len()
    }

    pub fn n_space_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn ht(&self) -> f64 {
        self.ht
    }

    /// Accumulated pressure at time node `k` (nodal scalars).
    pub fn accumulated(&self, k: usize) -> &[f64] {
        &self.p[k]
    }

    /// Zero-mean mixed-solve multiplier at time node `k`.
    pub fn multiplier(&self, k: usize) -> &[f64] {
        &self.q[k]
    }

    /// Kinetic correction at time node `k`.
    pub fn kinetic(&self, k: usize) -> &[f64] {
        &self.kinetic[k]
    }

    /// Mean target at time node `k`.
    pub fn mean_target(&self, k: usize) -> f64 {
        self.d[k]
    }

    /// Physical pressure on slab `k` (between nodes `k-1` and `k`),
    /// `(P_k - P_{k-1}) / ht`.
    pub fn slice(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k >= self.p.len() {
            return Err(Error::InvalidParameter(format!(
                "slab index {k} out of range 1..={}",
                self.p.len() - 1
            )));
        }
        Ok(self.p[k]
            .iter()
            .zip(&self.p[k - 1])
            .map(|(a, b)| (a - b) / self.ht)
            .collect())
    }

    /// Largest `|int_Omega P(t_k) - D(t_k)|` over stored nodes.
    pub fn max_mean_residual(&self) -> f64 {
        self.mean_residual.iter().copied().fold(0.0, f64::max)
    }

    /// H1 norm of the auxiliary field at node `k`; a consistency measure.
    pub fn aux_norm(&self, k: usize) -> f64 {
        self.aux_norm[k]
    }

    pub fn area(&self) -> f64 {
        self.area
    }
}

struct EdgePoint {
    nodes: [usize; 2],
    shape: [f64; 2],
    weight: f64,
}

/// Workspace shared by every per-node assembly.
struct SaddleWorkspace<'a> {
    mesh: &'a ChannelMesh,
    quad: CellQuad,
    edge_points: Vec<EdgePoint>,
    pinned: Vec<bool>,
    /// Integral of each scalar nodal hat; shared by the zero-mean row and
    /// all mean computations so they agree to the bit.
    hat_integral: Vec<f64>,
    dim: usize,
}

impl<'a> SaddleWorkspace<'a> {
    fn new(mesh: &'a ChannelMesh) -> Self {
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
        let mut pinned = vec![false; mesh.n_dofs()];
        for id in mesh.dirichlet_nodes() {
            pinned[2 * id] = true;
            pinned[2 * id + 1] = true;
        }
        for (id, comp) in mesh.wall_pins() {
            pinned[2 * id + comp] = true;
        }
        let mut hat_integral = vec![0.0; mesh.n_nodes()];
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                for i in 0..4 {
                    hat_integral[nodes[i]] += quad.weights[p] * quad.shape[p][i];
                }
            }
        }
        let dim = 3 * mesh.n_nodes() + 1 + mesh.n_outlets();
        Self {
            mesh,
            quad,
            edge_points,
            pinned,
            hat_integral,
            dim,
        }
    }

    /// Assembles the constrained mixed matrix once; it is shared by all
    /// time nodes.
    fn assemble_matrix(&self) -> DMatrix<f64> {
        let mesh = self.mesh;
        let n = mesh.n_nodes();
        let mean_row = 3 * n;
        let stab = STAB_BETA * 0.5 * (mesh.hx * mesh.hx + mesh.hy * mesh.hy);
        let mut m = DMatrix::<f64>::zeros(self.dim, self.dim);
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let w = self.quad.weights[p];
                let nv = &self.quad.shape[p];
                let dx = &self.quad.dshape_dx[p];
                let dy = &self.quad.dshape_dy[p];
                for i in 0..4 {
                    let ni = nodes[i];
                    for j in 0..4 {
                        let nj = nodes[j];
                        let grad = w * (dx[i] * dx[j] + dy[i] * dy[j]);
                        let a = grad + w * nv[i] * nv[j];
                        m[(2 * ni, 2 * nj)] += a;
                        m[(2 * ni + 1, 2 * nj + 1)] += a;
                        // Pressure hat i against div of the velocity hat j.
                        let bx = w * nv[i] * dx[j];
                        let by = w * nv[i] * dy[j];
                        m[(2 * n + ni, 2 * nj)] += bx;
                        m[(2 * n + ni, 2 * nj + 1)] += by;
                        m[(2 * nj, 2 * n + ni)] += bx;
                        m[(2 * nj + 1, 2 * n + ni)] += by;
                        m[(2 * n + ni, 2 * n + nj)] -= stab * grad;
                    }
                }
            }
        }
        for i in 0..n {
            m[(2 * n + i, mean_row)] = self.hat_integral[i];
            m[(mean_row, 2 * n + i)] = self.hat_integral[i];
        }
        for o in 0..mesh.n_outlets() {
            let row = 3 * n + 1 + o;
            for (dof, w) in mesh.outlet_flux_row(o as u8) {
                m[(row, dof)] = w;
                if !self.pinned[dof] {
                    m[(dof, row)] = w;
                }
            }
        }
        for dof in 0..2 * n {
            if self.pinned[dof] {
                for k in 0..self.dim {
                    m[(dof, k)] = 0.0;
                    m[(k, dof)] = 0.0;
                }
                m[(dof, dof)] = 1.0;
            }
        }
        m
    }

    /// Adds the instantaneous load `(curl v x v - f) . phi + S(Dv) . Dphi`
    /// plus the wall friction pairing, evaluated at time `t`, into `out`.
    fn add_instantaneous_load(
        &self,
        v: &[f64],
        t: f64,
        params: &ConstitutiveParams,
        forcing: ForcingFn,
        out: &mut [f64],
    ) {
        let mesh = self.mesh;
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            let sw = mesh.node(nodes[0]);
            for p in 0..4 {
                let w = self.quad.weights[p];
                let nv = &self.quad.shape[p];
                let dx = &self.quad.dshape_dx[p];
                let dy = &self.quad.dshape_dy[p];
                let mut vx = 0.0;
                let mut vy = 0.0;
                let mut g = [[0.0; 2]; 2];
                for i in 0..4 {
                    let vxi = v[2 * nodes[i]];
                    let vyi = v[2 * nodes[i] + 1];
                    vx += nv[i] * vxi;
                    vy += nv[i] * vyi;
                    g[0][0] += dx[i] * vxi;
                    g[0][1] += dy[i] * vxi;
                    g[1][0] += dx[i] * vyi;
                    g[1][1] += dy[i] * vyi;
                }
                let omega = g[1][0] - g[0][1];
                let x = [
                    sw[0] + self.quad.offsets[p][0],
                    sw[1] + self.quad.offsets[p][1],
                ];
                let f = forcing(x, t);
                let s = stress_bulk(SymTensor2::sym_part(g), params, false);
                let load = [-omega * vy - f[0], omega * vx - f[1]];
                for i in 0..4 {
                    out[2 * nodes[i]] += w * (load[0] * nv[i] + s.xx * dx[i] + s.xy * dy[i]);
                    out[2 * nodes[i] + 1] += w * (load[1] * nv[i] + s.yy * dy[i] + s.xy * dx[i]);
                }
            }
        }
        for ep in &self.edge_points {
            let vv = [
                ep.shape[0] * v[2 * ep.nodes[0]] + ep.shape[1] * v[2 * ep.nodes[1]],
                ep.shape[0] * v[2 * ep.nodes[0] + 1] + ep.shape[1] * v[2 * ep.nodes[1] + 1],
            ];
            let s = stress_boundary(vv, params, false);
            for i in 0..2 {
                out[2 * ep.nodes[i]] += ep.weight * ep.shape[i] * s[0];
                out[2 * ep.nodes[i] + 1] += ep.weight * ep.shape[i] * s[1];
            }
        }
    }

    /// Adds the momentum difference `(v - v0) . phi` into `out`.
    fn add_momentum_difference(&self, v: &[f64], v0: &[f64], out: &mut [f64]) {
        let mesh = self.mesh;
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let w = self.quad.weights[p];
                let nv = &self.quad.shape[p];
                let mut dvx = 0.0;
                let mut dvy = 0.0;
                for i in 0..4 {
                    dvx += nv[i] * (v[2 * nodes[i]] - v0[2 * nodes[i]]);
                    dvy += nv[i] * (v[2 * nodes[i] + 1] - v0[2 * nodes[i] + 1]);
                }
                for i in 0..4 {
                    out[2 * nodes[i]] += w * nv[i] * dvx;
                    out[2 * nodes[i] + 1] += w * nv[i] * dvy;
                }
            }
        }
    }

    /// H1 norm of a velocity field, by the same quadrature as the matrix.
    fn h1_norm(&self, u: &[f64]) -> f64 {
        let mesh = self.mesh;
        let mut acc = 0.0;
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let w = self.quad.weights[p];
                let nv = &self.quad.shape[p];
                let dx = &self.quad.dshape_dx[p];
                let dy = &self.quad.dshape_dy[p];
                let mut val = [0.0; 2];
                let mut gx = [0.0; 2];
                let mut gy = [0.0; 2];
                for i in 0..4 {
                    for comp in 0..2 {
                        let ui = u[2 * nodes[i] + comp];
                        val[comp] += nv[i] * ui;
                        gx[comp] += dx[i] * ui;
                        gy[comp] += dy[i] * ui;
                    }
                }
                for comp in 0..2 {
                    acc += w
                        * (val[comp] * val[comp] + gx[comp] * gx[comp] + gy[comp] * gy[comp]);
                }
            }
        }
        acc.sqrt()
    }
}

/// Reconstructs the accumulated pressure at every time node of `traj`.
///
/// `d` supplies the target space means, one sample per time node.  The
/// constitutive law is evaluated without stabilization: the reconstruction
/// targets the limit system the trajectory is expected to approximate.
pub fn reconstruct_pressure(
    mesh: &ChannelMesh,
    traj: &Trajectory,
    params: &ConstitutiveParams,
    forcing: ForcingFn,
    d: &[f64],
) -> Result<PressureField> {
    validate_params(params)?;
    if traj.n_dofs() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(
            "trajectory does not match the mesh".into(),
        ));
    }
    if d.len() != traj.n_time_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} mean targets supplied for {} time nodes",
            d.len(),
            traj.n_time_nodes()
        )));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "mean targets must be finite".into(),
        ));
    }

    let ws = SaddleWorkspace::new(mesh);
    let n = mesh.n_nodes();
    let area = mesh.area();
    let ht = traj.ht();
    let lu = ws.assemble_matrix().lu();

    let n_nodes_t = traj.n_time_nodes();
    let mut q = Vec::with_capacity(n_nodes_t);
    let mut kinetic = Vec::with_capacity(n_nodes_t);
    let mut p = Vec::with_capacity(n_nodes_t);
    let mut mean_residual = Vec::with_capacity(n_nodes_t);
    let mut aux_norm = Vec::with_capacity(n_nodes_t);

    // Node 0: the functional is identically zero.
    let p0 = d[0] / area;
    q.push(vec![0.0; n]);
    kinetic.push(vec![0.0; n]);
    p.push(vec![p0; n]);
    mean_residual.push((area * p0 - d[0]).abs());
    aux_norm.push(0.0);

    let v0 = traj.at(0);
    let mut accum = vec![0.0; mesh.n_dofs()];
    let mut load_prev = vec![0.0; mesh.n_dofs()];
    ws.add_instantaneous_load(v0, 0.0, params, forcing, &mut load_prev);
    let mut kin_prev = vec![0.0; n];

    for k in 1..n_nodes_t {
        let vk = traj.at(k);
        let tk = traj.time(k);
        let mut load_k = vec![0.0; mesh.n_dofs()];
        ws.add_instantaneous_load(vk, tk, params, forcing, &mut load_k);
        for (a, (lp, lk)) in accum.iter_mut().zip(load_prev.iter().zip(&load_k)) {
            *a += 0.5 * ht * (lp + lk);
        }
        load_prev = load_k;

        let mut kin_k = kin_prev.clone();
        for i in 0..n {
            let sq_prev = {
                let (ax, ay) = (traj.at(k - 1)[2 * i], traj.at(k - 1)[2 * i + 1]);
                ax * ax + ay * ay
            };
            let sq_k = vk[2 * i] * vk[2 * i] + vk[2 * i + 1] * vk[2 * i + 1];
            kin_k[i] -= 0.25 * ht * (sq_prev + sq_k);
        }
        kin_prev = kin_k.clone();

        let mut rhs = DVector::<f64>::zeros(ws.dim);
        {
            let rhs_vel = &mut rhs.as_mut_slice()[..2 * n];
            rhs_vel.copy_from_slice(&accum);
            ws.add_momentum_difference(vk, v0, rhs_vel);
            for dof in 0..2 * n {
                if ws.pinned[dof] {
                    rhs_vel[dof] = 0.0;
                }
            }
        }
        let sol = lu.solve(&rhs).ok_or_else(|| {
            Error::SingularSystem("mixed pressure system is singular".into())
        })?;
        let u = &sol.as_slice()[..2 * n];
        let qk: Vec<f64> = sol.as_slice()[2 * n..3 * n].to_vec();

        let mean_kin: f64 = ws
            .hat_integral
            .iter()
            .zip(&kin_k)
            .map(|(m, k)| m * k)
            .sum::<f64>()
            / area;
        let pk: Vec<f64> = qk
            .iter()
            .zip(&kin_k)
            .map(|(qi, ki)| qi + ki - mean_kin + d[k] / area)
            .collect();
        let int_p: f64 = ws
            .hat_integral
            .iter()
            .zip(&pk)
            .map(|(m, pi)| m * pi)
            .sum();
        mean_residual.push((int_p - d[k]).abs());
        aux_norm.push(ws.h1_norm(u));
        q.push(qk);
        kinetic.push(kin_k);
        p.push(pk);
    }

    Ok(PressureField {
        n_nodes: n,
        ht,
        area,
        q,
        kinetic,
        p,
        d: d.to_vec(),
        mean_residual,
        aux_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rect_channel, TagLayout};

    fn zero_forcing(_x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    #[test]
    fn zero_flow_recovers_the_constant_target() {
        let mesh = build_rect_channel(6, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let traj = Trajectory::zeros(mesh.n_dofs(), 3, 0.1).unwrap();
        let d = [3.0, 3.0, 3.0, 3.0];
        let field =
            reconstruct_pressure(&mesh, &traj, &ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1),
                &zero_forcing, &d)
            .unwrap();
        for k in 0..4 {
            for i in 0..mesh.n_nodes() {
                assert!(field.multiplier(k)[i].abs() <= 1e-12);
                assert!(field.kinetic(k)[i].abs() <= 1e-15);
                assert!((field.accumulated(k)[i] - 3.0 / 2.0).abs() <= 1e-12);
            }
            assert!(field.aux_norm(k) <= 1e-12);
        }
        assert!(field.max_mean_residual() <= 1e-10);
    }

    use crate::verification::ManufacturedFlow;

    /// Finite differences of the closures alone confirm the hand-derived
    /// forcing, guarding the algebra the convergence test depends on.
    #[test]
    fn manufactured_forcing_satisfies_the_momentum_balance() {
        let m = ManufacturedFlow::new(2.0, 0.5, 0.25);
        let h = 1e-5;
        for &(x, y) in &[(0.3, 0.2), (1.1, 0.55), (1.7, 0.85), (0.9, 0.4)] {
            let cd = |g: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, dx: bool| {
                if dx {
                    (g(x + h, y) - g(x - h, y)) / (2.0 * h)
                } else {
                    (g(x, y + h) - g(x, y - h)) / (2.0 * h)
                }
            };
            let vx = |x: f64, y: f64| m.velocity(x, y)[0];
            let vy = |x: f64, y: f64| m.velocity(x, y)[1];
            // S entries from finite-difference gradients.
            let sxx = |x: f64, y: f64| 2.0 * m.sigma2 * cd(&vx, x, y, true);
            let syy = |x: f64, y: f64| 2.0 * m.sigma2 * cd(&vy, x, y, false);
            let sxy =
                |x: f64, y: f64| m.sigma2 * (cd(&vx, x, y, false) + cd(&vy, x, y, true));
            let div_s = [
                cd(&sxx, x, y, true) + cd(&sxy, x, y, false),
                cd(&sxy, x, y, true) + cd(&syy, x, y, false),
            ];
            let omega = cd(&vy, x, y, true) - cd(&vx, x, y, false);
            let pi = |x: f64, y: f64| m.dynamic_pressure(x, y);
            let grad_pi = [cd(&pi, x, y, true), cd(&pi, x, y, false)];
            let v = m.velocity(x, y);
            let f_fd = [
                -omega * v[1] - div_s[0] + grad_pi[0],
                omega * v[0] - div_s[1] + grad_pi[1],
            ];
            let f = m.forcing(x, y);
            assert!(
                (f[0] - f_fd[0]).abs() < 2e-4 && (f[1] - f_fd[1]).abs() < 2e-4,
                "forcing mismatch at ({x},{y}): analytic {f:?}, fd {f_fd:?}"
            );
        }
    }

    /// Wall and outlet conditions of the manufactured pair hold pointwise.
    #[test]
    fn manufactured_flow_matches_its_boundary_conditions() {
        let m = ManufacturedFlow::new(2.0, 0.5, 0.25);
        let rho2 = 0.25;
        for &x in &[0.2, 0.9, 1.6] {
            let a = m.stream_x(x);
            for &(y, normal) in &[(0.0, -1.0), (1.0, 1.0)] {
                let b = m.stream_y(y);
                // Tangential traction (S n)_x = normal * sigma2 (A B'' - A'' B).
                let traction = normal * m.sigma2 * (a[0] * b[2] - a[2] * b[0]);
                let slip = 2.0 * rho2 * m.velocity(x, y)[0];
                assert!((traction + slip).abs() < 1e-12, "wall mismatch at {x},{y}");
                assert!(m.velocity(x, y)[1].abs() < 1e-12);
            }
        }
        for &y in &[0.1, 0.5, 0.8] {
            let v = m.velocity(m.length, y);
            assert!(v[0].abs() < 1e-12, "outlet normal flow at {y}");
            // Normal traction balances the dynamic pressure exactly.
            let a = m.stream_x(m.length);
            let b = m.stream_y(y);
            let s_xx = 2.0 * m.sigma2 * a[1] * b[1];
            assert!((s_xx - m.dynamic_pressure(m.length, y)).abs() < 1e-12);
            // Tangential traction vanishes because A''(L) = 0.
            let s_xy = m.sigma2 * (a[0] * b[2] - a[2] * b[0]);
            assert!(s_xy.abs() < 1e-12);
        }
    }

    #[test]
    fn steady_manufactured_flow_recovers_the_pressure_at_first_order() {
        let man = ManufacturedFlow::new(2.0, 0.5, 0.25);
        let params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        let mut params = params;
        params.rho2 = 0.25;
        let forcing_fn = |x: [f64; 2], _t: f64| man.forcing(x[0], x[1]);
        let mut errs = Vec::new();
        for scale in [1usize, 2] {
            let mesh =
                build_rect_channel(16 * scale, 8 * scale, 2.0, 1.0, TagLayout::SingleOutlet)
                    .unwrap();
            let mut field = vec![0.0; mesh.n_dofs()];
            for id in 0..mesh.n_nodes() {
                let [x, y] = mesh.node(id);
                let v = man.velocity(x, y);
                field[2 * id] = v[0];
                field[2 * id + 1] = v[1];
            }
            let n_steps = 2;
            let ht = 0.1;
            let traj = Trajectory::from_constant(&field, n_steps, ht).unwrap();
            let d: Vec<f64> = (0..=n_steps).map(|k| 1.0 + 0.5 * k as f64 * ht).collect();
            let rec =
                reconstruct_pressure(&mesh, &traj, &params, &forcing_fn, &d).unwrap();
            assert!(rec.max_mean_residual() <= 1e-10, "mean constraint violated");

            // Steady data: both slabs carry the same physical pressure.
            let s1 = rec.slice(1).unwrap();
            let s2 = rec.slice(2).unwrap();
            let max_slab_diff = s1
                .iter()
                .zip(&s2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_slab_diff <= 1e-8, "slabs differ by {max_slab_diff}");

            // Compare against the exact pressure up to a constant.
            let ws = SaddleWorkspace::new(&mesh);
            let exact: Vec<f64> = (0..mesh.n_nodes())
                .map(|id| {
                    let [x, y] = mesh.node(id);
                    man.pressure(x, y)
                })
                .collect();
            let diff: Vec<f64> = s1.iter().zip(&exact).map(|(a, b)| a - b).collect();
            let mean_diff: f64 = ws
                .hat_integral
                .iter()
                .zip(&diff)
                .map(|(m, d)| m * d)
                .sum::<f64>()
                / mesh.area();
            let err: f64 = ws
                .hat_integral
                .iter()
                .zip(&diff)
                .map(|(m, d)| m * (d - mean_diff) * (d - mean_diff))
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(
            rate >= 0.8,
            "pressure convergence rate {rate:.3} below 0.8 (errors {errs:?})"
        );
    }

    #[test]
    fn shifting_the_target_shifts_the_pressure_by_a_constant() {
        let man = ManufacturedFlow::new(2.0, 0.5, 0.25);
        let mut params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        params.rho2 = 0.25;
        let forcing_fn = |x: [f64; 2], _t: f64| man.forcing(x[0], x[1]);
        let mesh = build_rect_channel(8, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut field = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            let [x, y] = mesh.node(id);
            let v = man.velocity(x, y);
            field[2 * id] = v[0];
            field[2 * id + 1] = v[1];
        }
        let traj = Trajectory::from_constant(&field, 2, 0.1).unwrap();
        let d1 = [0.4, 0.7, 1.3];
        let shift = 2.5;
        let d2: Vec<f64> = d1.iter().map(|x| x + shift).collect();
        let r1 = reconstruct_pressure(&mesh, &traj, &params, &forcing_fn, &d1).unwrap();
        let r2 = reconstruct_pressure(&mesh, &traj, &params, &forcing_fn, &d2).unwrap();
        for k in 0..3 {
            for i in 0..mesh.n_nodes() {
                let got = r2.accumulated(k)[i] - r1.accumulated(k)[i];
                assert!((got - shift / mesh.area()).abs() <= 1e-12);
                assert_eq!(r1.multiplier(k)[i], r2.multiplier(k)[i]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let mesh = build_rect_channel(4, 2, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        let traj = Trajectory::zeros(mesh.n_dofs(), 2, 0.1).unwrap();
        let bad_d = [0.0, 0.0];
        assert!(reconstruct_pressure(&mesh, &traj, &params, &zero_forcing, &bad_d).is_err());
        let small = Trajectory::zeros(6, 2, 0.1).unwrap();
        let d = [0.0, 0.0, 0.0];
        assert!(reconstruct_pressure(&mesh, &small, &params, &zero_forcing, &d).is_err());
    }
}
