//! Energy-norm table for one trajectory: the quantities whose uniform
//! boundedness across the relaxation ladder certifies that the continuation
//! is converging rather than degenerating.
//!
//! All space-time integrals run over the observation window `[0, t_obs]`
//! with slab-midpoint sampling; the sup-in-time norm scans the time nodes
//! inside the window.  Exponent conventions: `r` and `q` are the bulk growth
//! exponents, primes denote conjugates `p' = p / (p - 1)`.

use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, ChannelMesh};
use crate::operators::{cell_quadrature, edge_gauss, Trajectory};

/// Named diagnostic norms for one `(trajectory, eps)` pair.
///
/// The first group is expected to stay within a constant factor across a
/// relaxation ladder; the `sqeps_*` group is expected to stay bounded above
/// (each carries a `sqrt(eps)` prefactor, so it may also shrink).
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub eps: f64,
    /// `( int_0^T [ |D v|_2^2 + |v|_{2,walls+outlets}^2 ] )^{1/2}`.
    pub x2_norm: f64,
    /// Same with exponent `r`.
    pub xr_norm: f64,
    /// `eps^{1/4}` times the exponent-4 dissipation norm.
    pub eps14_x4: f64,
    /// `eps^{1/q}` times the exponent-q dissipation norm.
    pub eps1q_xq: f64,
    /// `sup_k |v(t_k)|_{L^2}` over nodes in the window.
    pub linf_l2: f64,
    /// `sqrt(eps) ( int |dv/dt|^2 )^{1/2}` (discrete slab rates).
    pub sqeps_dt: f64,
    /// `sqrt(eps) ( int |curl v x v|^2 )^{1/2}`.
    pub sqeps_curl: f64,
    /// `sqrt(eps) ( int |dv/dt + curl v x v|^2 )^{1/2}`.
    pub sqeps_mat: f64,
    /// `( int |curl v x v|^{r'} )^{1/r'}`.
    pub curl_lr2: f64,
    /// `eps^{2/q} ( int |curl v x v|^{q'} )^{1/q'}`.
    pub eps2q_curl_lq2: f64,
}

impl EnergyReport {
    /// Rows for CSV emission, in a stable order.
    pub fn rows(&self) -> [(&'static str, f64); 10] {
        [
            ("x2_norm", self.x2_norm),
            ("xr_norm", self.xr_norm),
            ("eps14_x4", self.eps14_x4),
            ("eps1q_xq", self.eps1q_xq),
            ("linf_l2", self.linf_l2),
            ("sqeps_dt", self.sqeps_dt),
            ("sqeps_curl", self.sqeps_curl),
            ("sqeps_mat", self.sqeps_mat),
            ("curl_lr2", self.curl_lr2),
            ("eps2q_curl_lq2", self.eps2q_curl_lq2),
        ]
    }

    /// Quantities expected to stay within a two-sided constant factor
    /// across a ladder.
    pub fn bounded_group(&self) -> [(&'static str, f64); 5] {
        [
            ("x2_norm", self.x2_norm),
            ("xr_norm", self.xr_norm),
            ("eps14_x4", self.eps14_x4),
            ("eps1q_xq", self.eps1q_xq),
            ("linf_l2", self.linf_l2),
        ]
    }

    /// Quantities expected to stay bounded above across a ladder.
    pub fn upper_group(&self) -> [(&'static str, f64); 3] {
        [
            ("sqeps_dt", self.sqeps_dt),
            ("sqeps_curl", self.sqeps_curl),
            ("sqeps_mat", self.sqeps_mat),
        ]
    }
}

/// Computes the diagnostic norms of `traj` over `[0, t_obs]`.
pub fn energy_report(
    mesh: &ChannelMesh,
    traj: &Trajectory,
    params: &ConstitutiveParams,
    t_obs: f64,
) -> Result<EnergyReport> {
    if traj.n_dofs() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(
            "trajectory does not match the mesh".into(),
        ));
    }
    let horizon = traj.horizon();
    if !(t_obs > 0.0) || t_obs > horizon * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "observation window {t_obs} outside (0, {horizon}]"
        )));
    }
    let eps = params.eps;
    let r = params.r;
    let q = params.q;
    let rc = r / (r - 1.0);
    let qc = q / (q - 1.0);
    let quad = cell_quadrature(mesh);
    let ht = traj.ht();
    let n_dofs = mesh.n_dofs();

    let mut int_d2 = 0.0;
    let mut int_dr = 0.0;
    let mut int_d4 = 0.0;
    let mut int_dq = 0.0;
    let mut int_rate2 = 0.0;
    let mut int_curl2 = 0.0;
    let mut int_mat2 = 0.0;
    let mut int_curl_rc = 0.0;
    let mut int_curl_qc = 0.0;

    let mut mid = vec![0.0; n_dofs];
    let mut rate = vec![0.0; n_dofs];
    for k in 0..traj.n_steps() {
        let t_mid = (k as f64 + 0.5) * ht;
        if t_mid > t_obs + 1e-9 * horizon {
            break;
        }
        let (a, b) = (traj.at(k), traj.at(k + 1));
        for d in 0..n_dofs {
            mid[d] = 0.5 * (a[d] + b[d]);
            rate[d] = (b[d] - a[d]) / ht;
        }
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let mut m = [0.0f64; 2];
                let mut del = [0.0f64; 2];
                let mut g = [[0.0f64; 2]; 2];
                for a_loc in 0..4 {
                    let n = quad.shape[p][a_loc];
                    let dx = quad.dshape_dx[p][a_loc];
                    let dy = quad.dshape_dy[p][a_loc];
                    let vx = mid[2 * nodes[a_loc]];
                    let vy = mid[2 * nodes[a_loc] + 1];
                    m[0] += n * vx;
                    m[1] += n * vy;
                    del[0] += n * rate[2 * nodes[a_loc]];
                    del[1] += n * rate[2 * nodes[a_loc] + 1];
                    g[0][0] += dx * vx;
                    g[0][1] += dy * vx;
                    g[1][0] += dx * vy;
                    g[1][1] += dy * vy;
                }
                let w = ht * quad.weights[p];
                let dsq = g[0][0] * g[0][0]
                    + g[1][1] * g[1][1]
                    + 0.5 * (g[0][1] + g[1][0]) * (g[0][1] + g[1][0]);
                let dnorm = dsq.sqrt();
                int_d2 += w * dsq;
                int_dr += w * dnorm.powf(r);
                int_d4 += w * dsq * dsq;
                int_dq += w * dnorm.powf(q);
                int_rate2 += w * (del[0] * del[0] + del[1] * del[1]);
                let omega = g[1][0] - g[0][1];
                let cc = [-omega * m[1], omega * m[0]];
                let ccsq = cc[0] * cc[0] + cc[1] * cc[1];
                int_curl2 += w * ccsq;
                let mat = [del[0] + cc[0], del[1] + cc[1]];
                int_mat2 += w * (mat[0] * mat[0] + mat[1] * mat[1]);
                let ccn = ccsq.sqrt();
                int_curl_rc += w * ccn.powf(rc);
                int_curl_qc += w * ccn.powf(qc);
            }
        }
        for e in mesh.boundary_edges() {
            if e.tag != BoundaryTag::Wall {
                continue;
            }
            for (s, frac) in edge_gauss() {
                let v = [
                    (1.0 - s) * mid[2 * e.nodes[0]] + s * mid[2 * e.nodes[1]],
                    (1.0 - s) * mid[2 * e.nodes[0] + 1] + s * mid[2 * e.nodes[1] + 1],
                ];
                let w = ht * frac * e.len;
                let vsq = v[0] * v[0] + v[1] * v[1];
                let vn = vsq.sqrt();
                int_d2 += w * vsq;
                int_dr += w * vn.powf(r);
                int_d4 += w * vsq * vsq;
                int_dq += w * vn.powf(q);
            }
        }
    }

    let mut linf_l2: f64 = 0.0;
    for k in 0..=traj.n_steps() {
        if traj.time(k) > t_obs + 1e-9 * horizon {
            break;
        }
        let v = traj.at(k);
        let mut sq = 0.0;
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for p in 0..4 {
                let mut val = [0.0f64; 2];
                for a_loc in 0..4 {
                    let n = quad.shape[p][a_loc];
                    val[0] += n * v[2 * nodes[a_loc]];
                    val[1] += n * v[2 * nodes[a_loc] + 1];
                }
                sq += quad.weights[p] * (val[0] * val[0] + val[1] * val[1]);
            }
        }
        linf_l2 = linf_l2.max(sq.sqrt());
    }

    Ok(EnergyReport {
        eps,
        x2_norm: int_d2.sqrt(),
        xr_norm: int_dr.powf(1.0 / r),
        eps14_x4: eps.powf(0.25) * int_d4.powf(0.25),
        eps1q_xq: eps.powf(1.0 / q) * int_dq.powf(1.0 / q),
        linf_l2,
        sqeps_dt: eps.sqrt() * int_rate2.sqrt(),
        sqeps_curl: eps.sqrt() * int_curl2.sqrt(),
        sqeps_mat: eps.sqrt() * int_mat2.sqrt(),
        curl_lr2: int_curl_rc.powf(1.0 / rc),
        eps2q_curl_lq2: eps.powf(2.0 / q) * int_curl_qc.powf(1.0 / qc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rect_channel, TagLayout};

    fn params(eps: f64) -> ConstitutiveParams {
        ConstitutiveParams::uniform(2.5, 4.5, 0.5, eps)
    }

    #[test]
    fn zero_trajectory_reports_all_zeros() {
        let mesh = build_rect_channel(4, 3, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let traj = Trajectory::zeros(mesh.n_dofs(), 4, 0.1).unwrap();
        let rep = energy_report(&mesh, &traj, &params(0.3), 0.4).unwrap();
        for (name, v) in rep.rows() {
            assert_eq!(v, 0.0, "{name}");
        }
    }

    #[test]
    fn eps_weighted_entries_scale_exactly() {
        let mesh = build_rect_channel(5, 3, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut traj = Trajectory::zeros(mesh.n_dofs(), 5, 0.08).unwrap();
        let mut state = 123u64;
        for d in traj.data_mut().iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *d = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let p1 = params(0.4);
        let p2 = params(0.2);
        let a = energy_report(&mesh, &traj, &p1, 0.4).unwrap();
        let b = energy_report(&mesh, &traj, &p2, 0.4).unwrap();
        let half: f64 = 0.5;
        assert!((b.eps14_x4 / a.eps14_x4 - half.powf(0.25)).abs() < 1e-12);
        assert!((b.eps1q_xq / a.eps1q_xq - half.powf(1.0 / 4.5)).abs() < 1e-12);
        assert!((b.sqeps_dt / a.sqeps_dt - half.sqrt()).abs() < 1e-12);
        assert!((b.sqeps_curl / a.sqeps_curl - half.sqrt()).abs() < 1e-12);
        assert!((b.sqeps_mat / a.sqeps_mat - half.sqrt()).abs() < 1e-12);
        assert!((b.eps2q_curl_lq2 / a.eps2q_curl_lq2 - half.powf(2.0 / 4.5)).abs() < 1e-12);
        assert_eq!(a.x2_norm, b.x2_norm);
        assert_eq!(a.xr_norm, b.xr_norm);
        assert_eq!(a.linf_l2, b.linf_l2);
        assert_eq!(a.curl_lr2, b.curl_lr2);
    }

    #[test]
    fn steady_shear_flow_matches_closed_forms() {
        // v = (y, 0) on a 2 x 1 channel: D has off-diagonal 1/2 so
        // |D|^2 = 1/2; walls contribute |v|^2 = 1 on top, 0 on bottom, and
        // the outlet edge carries no dissipation.  All integrands are at
        // most quadratic along edges, so the 2-point rule is exact.
        let mesh = build_rect_channel(6, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut field = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            field[2 * id] = mesh.node(id)[1];
        }
        let n_steps = 5;
        let ht = 0.1;
        let traj = Trajectory::from_constant(&field, n_steps, ht).unwrap();
        let t_obs = n_steps as f64 * ht;
        let eps = 0.25;
        let rep = energy_report(&mesh, &traj, &params(eps), t_obs).unwrap();
        let rate_x2 = 2.0 * 0.5 + 2.0 * 1.0;
        assert!((rep.x2_norm - (t_obs * rate_x2).sqrt()).abs() < 1e-12);
        assert_eq!(rep.sqeps_dt, 0.0);
        // curl v x v = (0, -y): integral of y^2 over the box is 2/3.
        let rate_curl = 2.0 / 3.0;
        assert!((rep.sqeps_curl - eps.sqrt() * (t_obs * rate_curl).sqrt()).abs() < 1e-12);
        assert!((rep.sqeps_mat - rep.sqeps_curl).abs() < 1e-14);
        // Steady: sup-in-time L2 equals the L2 norm, int |v|^2 = 2/3.
        assert!((rep.linf_l2 - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn window_restriction_and_validation() {
        let mesh = build_rect_channel(4, 2, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut field = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            field[2 * id] = mesh.node(id)[1];
        }
        let traj = Trajectory::from_constant(&field, 10, 0.1).unwrap();
        let full = energy_report(&mesh, &traj, &params(0.3), 1.0).unwrap();
        let half = energy_report(&mesh, &traj, &params(0.3), 0.5).unwrap();
        // Steady trajectory: time integrals scale linearly with the window.
        assert!((half.x2_norm / full.x2_norm - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(half.linf_l2, full.linf_l2);
        assert!(energy_report(&mesh, &traj, &params(0.3), 0.0).is_err());
        assert!(energy_report(&mesh, &traj, &params(0.3), 1.5).is_err());
    }
}
