//! Verification of the natural boundary conditions in a time-averaged
//! sense.
//!
//! The solvers never impose wall friction or outflow tractions directly;
//! those conditions are encoded variationally and should emerge in the
//! limit.  This module measures how well a trajectory (with its
//! reconstructed pressure) satisfies them, using time weights
//! `psi in C^1_c((0, t_obs))`:
//!
//! ```text
//! T_psi := int ( P I psi'(t) + S(Dv(t)) psi(t) ) dt
//! ```
//!
//! pairs with boundary test fields `w` through a discrete trace extension
//! `E`:
//!
//! ```text
//! <T_psi n, w> := int_Omega ( R_eq . Ew + T_psi : grad Ew )
//! R_eq := int ( -v psi' + ((grad v) v - f) psi ) dt
//! ```
//!
//! where `R_eq` is the momentum-balance value of `div T_psi` — the only
//! form in which the divergence is computable for piecewise-bilinear
//! fields.  Against that pairing:
//!
//! * wall residual: `sup_w |<T_psi n, w> + int int s(v) psi . w| / |w|`
//!   over a basis of tangential wall fields — the friction condition;
//! * outlet residual: the same with the Bernoulli correction
//!   `- 1/2 int int |v|^2 psi n . w` over outlet fields with zero net
//!   flux — the traction condition up to the unknowable constants;
//! * outlet constants: `(c_i)_psi = <T_psi n, eta_i> - 1/2 int int |v|^2
//!   psi n . eta_i` over unit-flux multiplier fields `eta_i`; several
//!   `eta` shapes are used so their agreement certifies the
//!   identification.
//!
//! All norms are `H^1` norms of the extension, a computable surrogate of
//! the trace dual norm; the sup over the finite basis is a lower bound on
//! the true dual-norm residual.  Shifting the accumulated pressure by a
//! constant cannot change any output: the constant enters only through
//! `int psi' dt`, whose discrete counterpart telescopes to zero.

use nalgebra::{DMatrix, DVector, LU};

use crate::constitutive::{
    stress_boundary, stress_bulk, validate_params, ConstitutiveParams, SymTensor2,
};
use crate::diagnostics::pressure::PressureField;
use crate::error::{Error, Result};
use crate::functional::ForcingFn;
use crate::geometry::{BoundaryTag, ChannelMesh};
use crate::operators::{cell_quadrature, edge_gauss, CellQuad, Trajectory};

/// Smooth time bump `exp(-1/(1-s^2))` supported on `(t_lo, t_hi)`.
#[derive(Debug, Clone, Copy)]
pub struct TimeBump {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl TimeBump {
    pub fn eval(&self, t: f64) -> f64 {
        let s = (2.0 * t - self.t_hi - self.t_lo) / (self.t_hi - self.t_lo);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s * s)).exp()
        }
    }
}

/// The default trio of time weights on `(0, t_obs)`; three distinct
/// supports expose any dependence of the outputs on the weight choice.
pub fn default_bumps(t_obs: f64) -> Vec<TimeBump> {
    vec![
        TimeBump {
            t_lo: 0.20 * t_obs,
            t_hi: 0.80 * t_obs,
        },
        TimeBump {
            t_lo: 0.15 * t_obs,
            t_hi: 0.70 * t_obs,
        },
        TimeBump {
            t_lo: 0.30 * t_obs,
            t_hi: 0.85 * t_obs,
        },
    ]
}

/// Exponent pairs `(a, b)` for the outlet multiplier profiles
/// `s^a (1-s)^b` along each outlet; all exponents must be >= 1 so the
/// profiles vanish at the outlet endpoints.
pub fn default_eta_profiles() -> Vec<(f64, f64)> {
    vec![(1.0, 1.0), (2.0, 2.0), (2.0, 1.0)]
}

/// Residuals of the natural boundary conditions and the identified
/// outlet constants.
#[derive(Debug, Clone)]
pub struct BoundaryReport {
    /// Per time weight: worst normalized wall-friction residual.
    pub wall_residual: Vec<f64>,
    /// Per time weight: worst normalized outlet-traction residual over
    /// zero-net-flux tests.
    pub outlet_residual: Vec<f64>,
    /// `constants[psi][outlet][eta]`: identified constant for each time
    /// weight, outlet, and multiplier shape.
    pub constants: Vec<Vec<Vec<f64>>>,
    /// `eta_fluxes[outlet][eta]`: discrete net flux of each multiplier
    /// after normalization (should be 1 to rounding).
    pub eta_fluxes: Vec<Vec<f64>>,
    /// `etas[outlet][eta]`: the multiplier fields as (node, normal
    /// component) pairs.
    pub etas: Vec<Vec<Vec<(usize, f64)>>>,
    pub n_wall_tests: usize,
    pub n_outlet_tests: usize,
}

/// Discrete trace extension: solves `(-lap + id) E w = 0` inside with all
/// boundary nodes pinned to the test data, the minimizer of
/// `int |grad u|^2 + |u|^2` among fields with trace `w`.
struct ExtensionSolver {
    n: usize,
    /// Unconstrained bilinear form, kept for H1 norms.
    k0: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    is_boundary: Vec<bool>,
}

impl ExtensionSolver {
    fn new(mesh: &ChannelMesh, quad: &CellQuad) -> Self {
        let n = mesh.n_nodes();
        let mut k0 = DMatrix::<f64>::zeros(n, n);
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let w = quad.weights[p];
                let nv = &quad.shape[p];
                let dx = &quad.dshape_dx[p];
                let dy = &quad.dshape_dy[p];
                for i in 0..4 {
                    for j in 0..4 {
                        k0[(nodes[i], nodes[j])] +=
                            w * (dx[i] * dx[j] + dy[i] * dy[j] + nv[i] * nv[j]);
                    }
                }
            }
        }
        let mut is_boundary = vec![false; n];
        for e in mesh.boundary_edges() {
            is_boundary[e.nodes[0]] = true;
            is_boundary[e.nodes[1]] = true;
        }
        let mut pinned = k0.clone();
        for i in 0..n {
            if is_boundary[i] {
                for j in 0..n {
                    pinned[(i, j)] = 0.0;
                }
                pinned[(i, i)] = 1.0;
            }
        }
        Self {
            n,
            k0,
            lu: pinned.lu(),
            is_boundary,
        }
    }

    /// Extends sparse boundary data (zero at unnamed boundary nodes).
    fn extend(&self, data: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut rhs = DVector::<f64>::zeros(self.n);
        for &(node, value) in data {
            if !self.is_boundary[node] {
                return Err(Error::InvalidParameter(format!(
                    "node {node} is not a boundary node"
                )));
            }
            rhs[node] = value;
        }
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("extension system is singular".into()))?;
        Ok(sol.as_slice().to_vec())
    }

    /// H1 norm of a scalar nodal field.
    fn h1(&self, field: &[f64]) -> f64 {
        let v = DVector::from_column_slice(field);
        (&self.k0 * &v).dot(&v).max(0.0).sqrt()
    }
}

/// Nodal weights turning time-node samples into integrals against
/// `psi` and `psi'`: both exact for piecewise-linear integrands and the
/// piecewise-linear interpolant of `psi`, so the `psi'` weights sum to
/// zero by telescoping — constants cannot enter.
fn time_weights(traj: &Trajectory, psi: &TimeBump) -> (Vec<f64>, Vec<f64>) {
    let nt = traj.n_time_nodes();
    let ht = traj.ht();
    let mut wpsi = vec![0.0; nt];
    let mut wdpsi = vec![0.0; nt];
    let mut p_prev = psi.eval(traj.time(0));
    for k in 1..nt {
        let p_k = psi.eval(traj.time(k));
        wpsi[k - 1] += ht / 6.0 * (2.0 * p_prev + p_k);
        wpsi[k] += ht / 6.0 * (p_prev + 2.0 * p_k);
        let d = 0.5 * (p_k - p_prev);
        wdpsi[k - 1] += d;
        wdpsi[k] += d;
        p_prev = p_k;
    }
    (wpsi, wdpsi)
}

/// One outlet's nodes ordered along the edge, with arc parameters in
/// [0, 1], the shared outward normal, and per-node trapezoid weights of
/// the edge integral.
struct OutletChain {
    nodes: Vec<usize>,
    s: Vec<f64>,
    normal: [f64; 2],
    edge_weight: Vec<f64>,
}

fn outlet_chain(mesh: &ChannelMesh, tag: u8) -> Result<OutletChain> {
    let edges: Vec<_> = mesh
        .boundary_edges()
        .iter()
        .filter(|e| e.tag == BoundaryTag::Outflow(tag))
        .collect();
    if edges.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no edges tagged as outlet {tag}"
        )));
    }
    let normal = edges[0].normal;
    let mut nodes: Vec<usize> = edges.iter().flat_map(|e| e.nodes).collect();
    nodes.sort_unstable();
    nodes.dedup();
    // Order along the tangential coordinate.
    let along = |id: usize| {
        let [x, y] = mesh.node(id);
        -normal[1] * x + normal[0] * y
    };
    nodes.sort_by(|&a, &b| along(a).partial_cmp(&along(b)).unwrap());
    let lo = along(nodes[0]);
    let hi = along(*nodes.last().unwrap());
    let s: Vec<f64> = nodes.iter().map(|&id| (along(id) - lo) / (hi - lo)).collect();
    let mut edge_weight = vec![0.0; nodes.len()];
    for e in &edges {
        for &id in &e.nodes {
            let pos = nodes.iter().position(|&m| m == id).unwrap();
            edge_weight[pos] += 0.5 * e.len;
        }
    }
    Ok(OutletChain {
        nodes,
        s,
        normal,
        edge_weight,
    })
}

/// The three assembled load vectors of one time weight, each indexed by
/// velocity dof: the volume pairing (momentum value of `div T_psi` plus
/// `T_psi : grad`), the wall-friction pairing, and the outlet Bernoulli
/// pairing.
struct Loads {
    volume: Vec<f64>,
    wall: Vec<f64>,
    bernoulli: Vec<f64>,
}

fn assemble_loads(
    mesh: &ChannelMesh,
    quad: &CellQuad,
    traj: &Trajectory,
    pressure: &PressureField,
    params: &ConstitutiveParams,
    forcing: ForcingFn,
    wpsi: &[f64],
    wdpsi: &[f64],
) -> Loads {
    let n_dofs = mesh.n_dofs();
    let mut volume = vec![0.0; n_dofs];
    let mut wall = vec![0.0; n_dofs];
    let mut bernoulli = vec![0.0; n_dofs];
    let nt = traj.n_time_nodes();
    let active: Vec<usize> = (0..nt)
        .filter(|&k| wpsi[k] != 0.0 || wdpsi[k] != 0.0)
        .collect();

    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        let sw = mesh.node(nodes[0]);
        for p in 0..4 {
            let w = quad.weights[p];
            let nv = &quad.shape[p];
            let dx = &quad.dshape_dx[p];
            let dy = &quad.dshape_dy[p];
            let x = [sw[0] + quad.offsets[p][0], sw[1] + quad.offsets[p][1]];
            // Accumulated tensor T_psi and vector R_eq at this point.
            let mut t_acc = [0.0f64; 3]; // xx, yy, xy
            let mut r_acc = [0.0f64; 2];
            for &k in &active {
                let v = traj.at(k);
                let pk = pressure.accumulated(k);
                let mut vx = 0.0;
                let mut vy = 0.0;
                let mut pval = 0.0;
                let mut g = [[0.0; 2]; 2];
                for i in 0..4 {
                    let vxi = v[2 * nodes[i]];
                    let vyi = v[2 * nodes[i] + 1];
                    vx += nv[i] * vxi;
                    vy += nv[i] * vyi;
                    pval += nv[i] * pk[nodes[i]];
                    g[0][0] += dx[i] * vxi;
                    g[0][1] += dy[i] * vxi;
                    g[1][0] += dx[i] * vyi;
                    g[1][1] += dy[i] * vyi;
                }
                let (a, b) = (wpsi[k], wdpsi[k]);
                if a != 0.0 {
                    let s = stress_bulk(SymTensor2::sym_part(g), params, false);
                    t_acc[0] += a * s.xx;
                    t_acc[1] += a * s.yy;
                    t_acc[2] += a * s.xy;
                    let f = forcing(x, traj.time(k));
                    let conv = [
                        g[0][0] * vx + g[0][1] * vy,
                        g[1][0] * vx + g[1][1] * vy,
                    ];
                    r_acc[0] += a * (conv[0] - f[0]);
                    r_acc[1] += a * (conv[1] - f[1]);
                }
                if b != 0.0 {
                    t_acc[0] += b * pval;
                    t_acc[1] += b * pval;
                    r_acc[0] -= b * vx;
                    r_acc[1] -= b * vy;
                }
            }
            for i in 0..4 {
                volume[2 * nodes[i]] +=
                    w * (r_acc[0] * nv[i] + t_acc[0] * dx[i] + t_acc[2] * dy[i]);
                volume[2 * nodes[i] + 1] +=
                    w * (r_acc[1] * nv[i] + t_acc[1] * dy[i] + t_acc[2] * dx[i]);
            }
        }
    }

    for e in mesh.boundary_edges() {
        let is_wall = e.tag == BoundaryTag::Wall;
        let is_outlet = matches!(e.tag, BoundaryTag::Outflow(_));
        if !is_wall && !is_outlet {
            continue;
        }
        for (sp, frac) in edge_gauss() {
            let shp = [1.0 - sp, sp];
            let wq = frac * e.len;
            let mut fric = [0.0f64; 2];
            let mut bern = 0.0f64;
            for &k in &active {
                if wpsi[k] == 0.0 {
                    continue;
                }
                let v = traj.at(k);
                let vv = [
                    shp[0] * v[2 * e.nodes[0]] + shp[1] * v[2 * e.nodes[1]],
                    shp[0] * v[2 * e.nodes[0] + 1] + shp[1] * v[2 * e.nodes[1] + 1],
                ];
                if is_wall {
                    let s = stress_boundary(vv, params, false);
                    fric[0] += wpsi[k] * s[0];
                    fric[1] += wpsi[k] * s[1];
                } else {
                    bern += wpsi[k] * 0.5 * (vv[0] * vv[0] + vv[1] * vv[1]);
                }
            }
            for i in 0..2 {
                if is_wall {
                    wall[2 * e.nodes[i]] += wq * shp[i] * fric[0];
                    wall[2 * e.nodes[i] + 1] += wq * shp[i] * fric[1];
                } else {
                    bernoulli[2 * e.nodes[i]] += wq * shp[i] * bern * e.normal[0];
                    bernoulli[2 * e.nodes[i] + 1] += wq * shp[i] * bern * e.normal[1];
                }
            }
        }
    }

    Loads {
        volume,
        wall,
        bernoulli,
    }
}

/// Dot of a scalar extension field placed in one velocity component with
/// a velocity-dof load vector.
fn pair_component(field: &[f64], comp: usize, load: &[f64]) -> f64 {
    field
        .iter()
        .enumerate()
        .map(|(i, fi)| fi * load[2 * i + comp])
        .sum()
}

/// Evaluates the boundary-condition residuals and outlet constants of a
/// trajectory with its reconstructed pressure, averaged in time against
/// each supplied weight.  `t_obs` is the observation horizon; every
/// weight must be compactly supported inside `(0, t_obs)`.
pub fn boundary_report(
    mesh: &ChannelMesh,
    traj: &Trajectory,
    pressure: &PressureField,
    params: &ConstitutiveParams,
    forcing: ForcingFn,
    t_obs: f64,
    psis: &[TimeBump],
    eta_profiles: &[(f64, f64)],
) -> Result<BoundaryReport> {
    validate_params(params)?;
    if traj.n_dofs() != mesh.n_dofs() || pressure.n_space_nodes() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(
            "trajectory or pressure does not match the mesh".into(),
        ));
    }
    if pressure.n_time_nodes() != traj.n_time_nodes() {
        return Err(Error::DimensionMismatch(
            "pressure and trajectory disagree on the number of time nodes".into(),
        ));
    }
    if !(t_obs > 0.0) || t_obs > traj.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "observation horizon {t_obs} outside the trajectory span"
        )));
    }
    if psis.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one time weight is required".into(),
        ));
    }
    for psi in psis {
        if !(psi.t_lo > 0.0) || !(psi.t_hi > psi.t_lo) || !(psi.t_hi < t_obs) {
            return Err(Error::InvalidParameter(format!(
                "time weight support [{}, {}] must lie strictly inside (0, {t_obs})",
                psi.t_lo, psi.t_hi
            )));
        }
    }
    if eta_profiles.is_empty() || eta_profiles.iter().any(|&(a, b)| a < 1.0 || b < 1.0) {
        return Err(Error::InvalidParameter(
            "multiplier profiles need exponents >= 1 to vanish at outlet endpoints".into(),
        ));
    }

    let quad = cell_quadrature(mesh);
    let ext = ExtensionSolver::new(mesh, &quad);

    // Wall test basis: one tangential hat per wall node whose tangential
    // component is free.
    let mut wall_tests: Vec<(usize, usize)> = Vec::new(); // (node, component)
    {
        let dirichlet: Vec<bool> = {
            let mut d = vec![false; mesh.n_nodes()];
            for id in mesh.dirichlet_nodes() {
                d[id] = true;
            }
            d
        };
        for e in mesh.boundary_edges() {
            if e.tag != BoundaryTag::Wall {
                continue;
            }
            let comp = if e.normal[0].abs() < 0.5 { 0 } else { 1 };
            for &id in &e.nodes {
                if !dirichlet[id] && !wall_tests.contains(&(id, comp)) {
                    wall_tests.push((id, comp));
                }
            }
        }
        wall_tests.sort_unstable();
    }

    // Outlet chains, multiplier fields, and zero-net-flux tests.
    let n_out = mesh.n_outlets();
    let mut chains = Vec::with_capacity(n_out);
    for o in 0..n_out {
        chains.push(outlet_chain(mesh, o as u8)?);
    }
    let mut etas: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(n_out);
    let mut eta_fluxes: Vec<Vec<f64>> = Vec::with_capacity(n_out);
    for chain in &chains {
        let mut per_outlet = Vec::new();
        let mut fluxes = Vec::new();
        for &(a, b) in eta_profiles {
            let raw: Vec<f64> = chain
                .s
                .iter()
                .map(|&s| s.powf(a) * (1.0 - s).powf(b))
                .collect();
            let flux: f64 = raw
                .iter()
                .zip(&chain.edge_weight)
                .map(|(g, w)| g * w)
                .sum();
            if flux.abs() < 1e-14 {
                return Err(Error::InvalidParameter(
                    "multiplier profile has zero net flux; cannot normalize".into(),
                ));
            }
            let field: Vec<(usize, f64)> = chain
                .nodes
                .iter()
                .zip(&raw)
                .map(|(&id, &g)| (id, g / flux))
                .collect();
            let check: f64 = field
                .iter()
                .map(|&(id, g)| {
                    let pos = chain.nodes.iter().position(|&m| m == id).unwrap();
                    g * chain.edge_weight[pos]
                })
                .sum();
            fluxes.push(check);
            per_outlet.push(field);
        }
        etas.push(per_outlet);
        eta_fluxes.push(fluxes);
    }

    let mut wall_residual = Vec::with_capacity(psis.len());
    let mut outlet_residual = Vec::with_capacity(psis.len());
    let mut constants = Vec::with_capacity(psis.len());
    let mut n_outlet_tests = 0usize;

    for psi in psis {
        let (wpsi, wdpsi) = time_weights(traj, psi);
        let loads = assemble_loads(
            mesh, &quad, traj, pressure, params, forcing, &wpsi, &wdpsi,
        );

        // Wall-friction residual.
        let mut worst_wall = 0.0f64;
        for &(node, comp) in &wall_tests {
            let e = ext.extend(&[(node, 1.0)])?;
            let norm = ext.h1(&e);
            let r = pair_component(&e, comp, &loads.volume)
                + pair_component(&e, comp, &loads.wall);
            worst_wall = worst_wall.max(r.abs() / norm);
        }
        wall_residual.push(worst_wall);

        // Outlet-traction residual over zero-net-flux fields: tangential
        // hats at interior outlet nodes plus normal-component differences
        // of adjacent interior hats (equal edge weights make their net
        // flux vanish identically).
        let mut worst_out = 0.0f64;
        let mut count = 0usize;
        for chain in &chains {
            let ncomp = if chain.normal[0].abs() > 0.5 { 0 } else { 1 };
            let tcomp = 1 - ncomp;
            let interior: Vec<usize> = (1..chain.nodes.len() - 1).collect();
            for &pos in &interior {
                let e = ext.extend(&[(chain.nodes[pos], 1.0)])?;
                let norm = ext.h1(&e);
                let r = pair_component(&e, tcomp, &loads.volume)
                    - pair_component(&e, tcomp, &loads.bernoulli);
                worst_out = worst_out.max(r.abs() / norm);
                count += 1;
            }
            for win in interior.windows(2) {
                let (pa, pb) = (win[0], win[1]);
                let e = ext.extend(&[(chain.nodes[pa], 1.0), (chain.nodes[pb], -1.0)])?;
                let norm = ext.h1(&e);
                let r = pair_component(&e, ncomp, &loads.volume)
                    - pair_component(&e, ncomp, &loads.bernoulli);
                worst_out = worst_out.max(r.abs() / norm);
                count += 1;
            }
        }
        outlet_residual.push(worst_out);
        n_outlet_tests = count;

        // Outlet constants per multiplier shape.
        let mut per_psi = Vec::with_capacity(n_out);
        for (chain, per_outlet) in chains.iter().zip(&etas) {
            let ncomp = if chain.normal[0].abs() > 0.5 { 0 } else { 1 };
            let sign = chain.normal[ncomp];
            let mut per_eta = Vec::with_capacity(per_outlet.len());
            for field in per_outlet {
                // eta = profile * n: its nodal normal component carries
                // the outward sign.
                let data: Vec<(usize, f64)> =
                    field.iter().map(|&(id, g)| (id, g * sign)).collect();
                let e = ext.extend(&data)?;
                let c = pair_component(&e, ncomp, &loads.volume)
                    - pair_component(&e, ncomp, &loads.bernoulli);
                per_eta.push(c);
            }
            per_psi.push(per_eta);
        }
        constants.push(per_psi);
    }

    Ok(BoundaryReport {
        wall_residual,
        outlet_residual,
        constants,
        eta_fluxes,
        etas,
        n_wall_tests: wall_tests.len(),
        n_outlet_tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::pressure::reconstruct_pressure;
    use crate::geometry::{build_rect_channel, TagLayout};

    fn zero_forcing(_x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    #[test]
    fn zero_flow_has_zero_residuals_and_constants() {
        let mesh = build_rect_channel(6, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        let n_steps = 20;
        let ht = 0.05;
        let traj = Trajectory::zeros(mesh.n_dofs(), n_steps, ht).unwrap();
        let d: Vec<f64> = vec![4.2; n_steps + 1];
        let pf = reconstruct_pressure(&mesh, &traj, &params, &zero_forcing, &d).unwrap();
        let rep = boundary_report(
            &mesh,
            &traj,
            &pf,
            &params,
            &zero_forcing,
            1.0,
            &default_bumps(1.0),
            &default_eta_profiles(),
        )
        .unwrap();
        for (wr, or) in rep.wall_residual.iter().zip(&rep.outlet_residual) {
            assert!(wr.abs() <= 1e-12, "wall residual {wr}");
            assert!(or.abs() <= 1e-12, "outlet residual {or}");
        }
        for per_psi in &rep.constants {
            for per_outlet in per_psi {
                for c in per_outlet {
                    assert!(c.abs() <= 1e-12, "constant {c}");
                }
            }
        }
        for fluxes in &rep.eta_fluxes {
            for f in fluxes {
                assert!((f - 1.0).abs() <= 1e-12);
            }
        }
    }

    /// The manufactured steady flow satisfies the outlet traction balance
    /// with constant zero; offsetting the target mean trajectory by
    /// `gamma * area * t` shifts the recovered slab pressure by `gamma`,
    /// so the identified constant must be `-gamma int psi dt`, the same
    /// for every multiplier shape.
    #[test]
    fn manufactured_constants_match_and_are_eta_independent() {
        let man = crate::verification::ManufacturedFlow::new(2.0, 0.5, 0.25);
        let mut params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        params.rho2 = 0.25;
        let forcing_fn = |x: [f64; 2], _t: f64| man.forcing(x[0], x[1]);
        let mesh = build_rect_channel(32, 16, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let quad = cell_quadrature(&mesh);
        let mut mean_p = 0.0;
        for c in 0..mesh.n_cells() {
            let sw = mesh.node(mesh.cell_nodes(c)[0]);
            for p in 0..4 {
                mean_p += quad.weights[p]
                    * man.pressure(sw[0] + quad.offsets[p][0], sw[1] + quad.offsets[p][1]);
            }
        }
        let gamma = 0.4;
        let n_steps = 20;
        let ht = 0.05;
        let traj = Trajectory::from_constant(&man.nodal_velocity(&mesh), n_steps, ht).unwrap();
        let d: Vec<f64> = (0..=n_steps)
            .map(|k| k as f64 * ht * (mean_p + gamma * mesh.area()))
            .collect();
        let pf = reconstruct_pressure(&mesh, &traj, &params, &forcing_fn, &d).unwrap();
        let bumps = default_bumps(1.0);
        let rep = boundary_report(
            &mesh,
            &traj,
            &pf,
            &params,
            &forcing_fn,
            1.0,
            &bumps,
            &default_eta_profiles(),
        )
        .unwrap();
        for (psi, per_psi) in bumps.iter().zip(&rep.constants) {
            let int_psi: f64 = time_weights(&traj, psi).0.iter().sum();
            let expected = -gamma * int_psi;
            let cs = &per_psi[0];
            let spread = cs.iter().cloned().fold(f64::MIN, f64::max)
                - cs.iter().cloned().fold(f64::MAX, f64::min);
            assert!(
                spread <= 0.01 * expected.abs(),
                "constants {cs:?} spread {spread:.3e} exceeds 1% of {expected:.3e}"
            );
            for c in cs {
                assert!(
                    (c - expected).abs() <= 0.05 * expected.abs(),
                    "constant {c} vs expected {expected}"
                );
            }
        }
    }

    /// Shifting the accumulated pressure by a constant must leave every
    /// output unchanged: the constant only meets `int psi' dt`, whose
    /// discrete form telescopes to zero.
    #[test]
    fn pressure_shift_leaves_all_outputs_unchanged() {
        let man = crate::verification::ManufacturedFlow::new(2.0, 0.5, 0.25);
        let mut params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        params.rho2 = 0.25;
        let forcing_fn = |x: [f64; 2], _t: f64| man.forcing(x[0], x[1]);
        let mesh = build_rect_channel(8, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let n_steps = 10;
        let ht = 0.1;
        let traj = Trajectory::from_constant(&man.nodal_velocity(&mesh), n_steps, ht).unwrap();
        let d1: Vec<f64> = (0..=n_steps).map(|k| 0.3 * k as f64 * ht).collect();
        let d2: Vec<f64> = d1.iter().map(|x| x + 1000.0).collect();
        let run = |d: &[f64]| {
            let pf = reconstruct_pressure(&mesh, &traj, &params, &forcing_fn, d).unwrap();
            boundary_report(
                &mesh,
                &traj,
                &pf,
                &params,
                &forcing_fn,
                1.0,
                &default_bumps(1.0),
                &default_eta_profiles(),
            )
            .unwrap()
        };
        let r1 = run(&d1);
        let r2 = run(&d2);
        for (a, b) in r1.wall_residual.iter().zip(&r2.wall_residual) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "wall {a} vs {b}");
        }
        for (a, b) in r1.outlet_residual.iter().zip(&r2.outlet_residual) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "outlet {a} vs {b}");
        }
        for (pa, pb) in r1.constants.iter().zip(&r2.constants) {
            for (oa, ob) in pa.iter().zip(pb) {
                for (a, b) in oa.iter().zip(ob) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "constant {a} vs {b}");
                }
            }
        }
    }

    /// The implicit reference solver satisfies the friction condition only
    /// variationally; its wall residual must shrink under refinement.
    #[test]
    fn steady_reference_wall_residual_decreases_under_refinement() {
        use crate::geometry::{build_extension_field, InletProfile};
        use crate::reference::ReferenceSolver;

        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.1);
        let mut residuals = Vec::new();
        for scale in [1usize, 2] {
            let mesh =
                build_rect_channel(8 * scale, 4 * scale, 2.0, 1.0, TagLayout::SingleOutlet)
                    .unwrap();
            let inlet = InletProfile::parabolic(1.0);
            let ext = build_extension_field(&mesh, &inlet, &[], None).unwrap();
            let solver =
                ReferenceSolver::new(&mesh, &ext, params.clone(), 1e4, &zero_forcing).unwrap();
            let (steady, _iters) = solver.solve_steady().unwrap();
            let n_steps = 10;
            let ht = 0.1;
            let traj = Trajectory::from_constant(&steady, n_steps, ht).unwrap();
            let d = vec![0.0; n_steps + 1];
            let pf = reconstruct_pressure(&mesh, &traj, &params, &zero_forcing, &d).unwrap();
            let rep = boundary_report(
                &mesh,
                &traj,
                &pf,
                &params,
                &zero_forcing,
                1.0,
                &default_bumps(1.0),
                &default_eta_profiles(),
            )
            .unwrap();
            residuals.push(rep.wall_residual[0]);
        }
        assert!(
            residuals[0] >= 1.5 * residuals[1],
            "wall residuals {residuals:?} did not shrink by 1.5x"
        );
    }

    #[test]
    fn rejects_weights_touching_the_horizon_ends() {
        let mesh = build_rect_channel(4, 2, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.1);
        let traj = Trajectory::zeros(mesh.n_dofs(), 4, 0.25).unwrap();
        let d = vec![0.0; 5];
        let pf = reconstruct_pressure(&mesh, &traj, &params, &zero_forcing, &d).unwrap();
        for bad in [
            TimeBump { t_lo: 0.0, t_hi: 0.5 },
            TimeBump { t_lo: 0.2, t_hi: 1.0 },
            TimeBump { t_lo: 0.6, t_hi: 0.4 },
        ] {
            assert!(boundary_report(
                &mesh,
                &traj,
                &pf,
                &params,
                &zero_forcing,
                1.0,
                &[bad],
                &default_eta_profiles(),
            )
            .is_err());
        }
    }
}
