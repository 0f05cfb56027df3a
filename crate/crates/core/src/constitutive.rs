//! Shear-dependent stress laws and their dissipation potentials.
//!
//! The bulk law is a power-law (Ladyzhenskaya-type) viscosity acting on the
//! symmetric velocity gradient,
//!
//! ```text
//! S(A) = 2 (sigma2 + sigma_r^(2/(r-2)) |A|^2)^((r-2)/2) A        for r > 2,
//! S(A) = 2 sigma2 A                                              for r = 2,
//! ```
//!
//! and the boundary friction law `s(u)` has the same shape with the `rho_*`
//! coefficients acting on the trace velocity.  Both laws admit an optional
//! stabilization used by the time-weighted functional: an `eps`-scaled quartic
//! term plus an `eps`-scaled q-growth term,
//!
//! ```text
//! S_eps(A) = S(A) + eps sigma4 |A|^2 A + eps sigma_q |A|^(q-2) A.
//! ```
//!
//! Each stress is the exact gradient of a scalar potential obtained by
//! integrating the law along rays, `phi(A) = \int_0^1 S(t A) . A dt`, and the
//! potentials below are closed forms of those ray integrals.  The line
//! quadrature itself survives in the test suite as an independent oracle.

use crate::error::{Error, Result};

/// Coefficients of the bulk and boundary stress laws.
///
/// `r` is the main growth exponent, `q > r` the stabilization exponent, and
/// `eps` the weight of the stabilization terms (the same value the functional
/// uses for its exponential time weight).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveParams {
    pub r: f64,
    pub q: f64,
    /// Bulk: Newtonian floor, power-law coefficient, quartic and q-growth
    /// stabilization weights.
    pub sigma2: f64,
    pub sigma_r: f64,
    pub sigma4: f64,
    pub sigma_q: f64,
    /// Boundary friction analogues of the four bulk coefficients.
    pub rho2: f64,
    pub rho_r: f64,
    pub rho4: f64,
    pub rho_q: f64,
    /// Stabilization weight; also the elliptic-regularization scale.
    pub eps: f64,
}

impl ConstitutiveParams {
    /// Uniform coefficients, handy for tests and small studies.
    pub fn uniform(r: f64, q: f64, coeff: f64, eps: f64) -> Self {
        Self {
            r,
            q,
            sigma2: coeff,
            sigma_r: coeff,
            sigma4: coeff,
            sigma_q: coeff,
            rho2: coeff,
            rho_r: coeff,
            rho4: coeff,
            rho_q: coeff,
            eps,
        }
    }

    /// Same parameters with a different stabilization weight.
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Conjugate exponent r' = r / (r - 1).
    pub fn r_conjugate(&self) -> f64 {
        self.r / (self.r - 1.0)
    }
}

/// Symmetric 2x2 tensor stored as its three independent entries.
///
/// Norm and inner product are the full Frobenius ones, i.e. the off-diagonal
/// entry counts twice: `|A|^2 = xx^2 + yy^2 + 2 xy^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl SymTensor2 {
    pub const ZERO: Self = Self { xx: 0.0, yy: 0.0, xy: 0.0 };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    /// Symmetric part of a full 2x2 gradient `g[i][j] = d u_i / d x_j`.
    pub fn sym_part(g: [[f64; 2]; 2]) -> Self {
        Self {
            xx: g[0][0],
            yy: g[1][1],
            xy: 0.5 * (g[0][1] + g[1][0]),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.xx * self.xx + self.yy * self.yy + 2.0 * self.xy * self.xy
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Full double contraction A : B (off-diagonal counted twice).
    pub fn dot(&self, other: &Self) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    pub fn scale(&self, f: f64) -> Self {
        Self {
            xx: f * self.xx,
            yy: f * self.yy,
            xy: f * self.xy,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            xx: self.xx + other.xx,
            yy: self.yy + other.yy,
            xy: self.xy + other.xy,
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Conjugation R^T A R by the rotation with angle `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        // R = [[c, -s], [s, c]]; components of R^T A R written out.
        let xx = c * c * self.xx + 2.0 * s * c * self.xy + s * s * self.yy;
        let yy = s * s * self.xx - 2.0 * s * c * self.xy + c * c * self.yy;
        let xy = (c * c - s * s) * self.xy + s * c * (self.yy - self.xx);
        Self { xx, yy, xy }
    }
}

/// Scalar coefficient in `S(A) = bulk_factor(|A|^2) A`; freezing it at a
/// previous iterate is the Picard linearization of the bulk stress.
pub fn bulk_factor(norm_sq: f64, p: &ConstitutiveParams, stabilized: bool) -> f64 {
    let mut f = if p.r == 2.0 {
        2.0 * p.sigma2
    } else {
        let c = p.sigma_r.powf(2.0 / (p.r - 2.0));
        2.0 * (p.sigma2 + c * norm_sq).powf((p.r - 2.0) / 2.0)
    };
    if stabilized && norm_sq > 0.0 {
        f += p.eps * p.sigma4 * norm_sq + p.eps * p.sigma_q * norm_sq.powf((p.q - 2.0) / 2.0);
    }
    f
}

/// Scalar coefficient in `s(u) = boundary_factor(|u|^2) u`, the boundary
/// analogue of [`bulk_factor`].
pub fn boundary_factor(norm_sq: f64, p: &ConstitutiveParams, stabilized: bool) -> f64 {
    let mut f = if p.r == 2.0 {
        2.0 * p.rho2
    } else {
        let c = p.rho_r.powf(2.0 / (p.r - 2.0));
        2.0 * (p.rho2 + c * norm_sq).powf((p.r - 2.0) / 2.0)
    };
    if stabilized && norm_sq > 0.0 {
        f += p.eps * p.rho4 * norm_sq + p.eps * p.rho_q * norm_sq.powf((p.q - 2.0) / 2.0);
    }
    f
}

/// Bulk stress S(A), or the stabilized S_eps(A) when `stabilized` is set.
pub fn stress_bulk(a: SymTensor2, p: &ConstitutiveParams, stabilized: bool) -> SymTensor2 {
    a.scale(bulk_factor(a.norm_sq(), p, stabilized))
}

/// Boundary friction s(u), or the stabilized s_eps(u).
pub fn stress_boundary(u: [f64; 2], p: &ConstitutiveParams, stabilized: bool) -> [f64; 2] {
    let n2 = u[0] * u[0] + u[1] * u[1];
    let f = boundary_factor(n2, p, stabilized);
    [f * u[0], f * u[1]]
}

/// Closed form of the ray integral \int_0^1 S(t A) . A dt.
///
/// For r > 2 with c = sigma_r^(2/(r-2)) this is
/// `2 ((sigma2 + c |A|^2)^(r/2) - sigma2^(r/2)) / (r c)`, the r = 2 case
/// degenerates to `sigma2 |A|^2`, and the stabilization terms integrate to
/// `eps sigma4 |A|^4 / 4 + eps sigma_q |A|^q / q`.
pub fn potential_bulk(a: SymTensor2, p: &ConstitutiveParams, stabilized: bool) -> f64 {
    let n2 = a.norm_sq();
    let mut phi = if p.r == 2.0 {
        p.sigma2 * n2
    } else {
        let c = p.sigma_r.powf(2.0 / (p.r - 2.0));
        2.0 * ((p.sigma2 + c * n2).powf(p.r / 2.0) - p.sigma2.powf(p.r / 2.0)) / (p.r * c)
    };
    if stabilized && n2 > 0.0 {
        phi += p.eps * p.sigma4 * n2 * n2 / 4.0 + p.eps * p.sigma_q * n2.powf(p.q / 2.0) / p.q;
    }
    phi
}

/// Closed form of the boundary ray integral \int_0^1 s(t u) . u dt.
pub fn potential_boundary(u: [f64; 2], p: &ConstitutiveParams, stabilized: bool) -> f64 {
    let n2 = u[0] * u[0] + u[1] * u[1];
    let mut phi = if p.r == 2.0 {
        p.rho2 * n2
    } else {
        let c = p.rho_r.powf(2.0 / (p.r - 2.0));
        2.0 * ((p.rho2 + c * n2).powf(p.r / 2.0) - p.rho2.powf(p.r / 2.0)) / (p.r * c)
    };
    if stabilized && n2 > 0.0 {
        phi += p.eps * p.rho4 * n2 * n2 / 4.0 + p.eps * p.rho_q * n2.powf(p.q / 2.0) / p.q;
    }
    phi
}

/// Outcome of a parameter check: hard errors are returned as `Err`, softer
/// analysis-window findings are reported here.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Whether (r, q) sit inside the window the a-priori theory covers:
    /// 11/5 <= r < 4 and 4 < q <= 3 r'.
    pub window_ok: bool,
    /// Human-readable findings that are not fatal.
    pub notes: Vec<String>,
}

/// Checks positivity and exponent ranges.
///
/// Fatal (returned as `Err`): any non-positive coefficient, `eps <= 0`,
/// `r < 2`, or `q <= 1`.  Everything else - exponents outside the theory
/// window, the linear `r = 2` case, growth exponents that demand the
/// sub-critical convective term - ends up as a note in the report.
pub fn validate_params(p: &ConstitutiveParams) -> Result<ValidationReport> {
    let coeffs = [
        ("sigma2", p.sigma2),
        ("sigma_r", p.sigma_r),
        ("sigma4", p.sigma4),
        ("sigma_q", p.sigma_q),
        ("rho2", p.rho2),
        ("rho_r", p.rho_r),
        ("rho4", p.rho4),
        ("rho_q", p.rho_q),
    ];
    for (name, v) in coeffs {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if !(p.eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {}",
            p.eps
        )));
    }
    if !(p.r >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "growth exponent r must be >= 2, got {}",
            p.r
        )));
    }
    if !(p.q > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stabilization exponent q must exceed 1, got {}",
            p.q
        )));
    }

    let mut notes = Vec::new();
    let rp = p.r_conjugate();
    let r_ok = p.r >= 11.0 / 5.0 && p.r < 4.0;
    let q_ok = p.q > 4.0 && p.q <= 3.0 * rp;
    if p.r == 2.0 {
        notes.push("r = 2: linear (Newtonian) stress law".to_string());
    }
    if !r_ok {
        if p.r >= 4.0 {
            notes.push(format!(
                "r = {} >= 4: outside the a-priori window; the convective term is sub-critical there",
                p.r
            ));
        } else {
            notes.push(format!("r = {} below the a-priori window [11/5, 4)", p.r));
        }
    }
    if !q_ok {
        notes.push(format!(
            "q = {} outside the window (4, 3r'] = (4, {}]",
            p.q,
            3.0 * rp
        ));
    }
    notes.push(
        "stabilization margin: the bound min(sigma4, rho4) > c4/4 requires a Korn constant estimate"
            .to_string(),
    );
    Ok(ValidationReport {
        window_ok: r_ok && q_ok,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::gauss_legendre;
    use proptest::prelude::*;

    fn params(r: f64, q: f64, eps: f64) -> ConstitutiveParams {
        ConstitutiveParams {
            r,
            q,
            sigma2: 1.0,
            sigma_r: 1.0,
            sigma4: 0.7,
            sigma_q: 0.4,
            rho2: 0.9,
            rho_r: 1.1,
            rho4: 0.6,
            rho_q: 0.5,
            eps,
        }
    }

    /// 64-node Gauss-Legendre evaluation of \int_0^1 S(t A) . A dt, the
    /// quadrature oracle the closed-form potentials are checked against.
    fn potential_bulk_by_quadrature(
        a: SymTensor2,
        p: &ConstitutiveParams,
        stabilized: bool,
    ) -> f64 {
        gauss_legendre(64)
            .iter()
            .map(|&(x, w)| {
                let t = 0.5 * (x + 1.0);
                0.5 * w * stress_bulk(a.scale(t), p, stabilized).dot(&a)
            })
            .sum()
    }

    fn potential_boundary_by_quadrature(
        u: [f64; 2],
        p: &ConstitutiveParams,
        stabilized: bool,
    ) -> f64 {
        gauss_legendre(64)
            .iter()
            .map(|&(x, w)| {
                let t = 0.5 * (x + 1.0);
                let s = stress_boundary([t * u[0], t * u[1]], p, stabilized);
                0.5 * w * (s[0] * u[0] + s[1] * u[1])
            })
            .sum()
    }

    #[test]
    fn quadratic_case_stress_is_linear() {
        let p = params(4.0, 5.0, 1.0);
        // r = 4, sigma2 = sigma_r = 1, A = diag(1, -1): factor 2(1+2) = 6.
        let a = SymTensor2::new(1.0, -1.0, 0.0);
        let s = stress_bulk(a, &p, false);
        assert_eq!((s.xx, s.yy, s.xy), (6.0, -6.0, 0.0));

        let p2 = params(2.0, 5.0, 1.0);
        let s2 = stress_bulk(a, &p2, false);
        assert_eq!((s2.xx, s2.yy, s2.xy), (2.0, -2.0, 0.0));
        // r = 2 potential is sigma2 |A|^2.
        assert_eq!(potential_bulk(a, &p2, false), 2.0);
    }

    #[test]
    fn zero_strain_gives_zero_stress_and_potential() {
        for r in [2.0, 2.5, 3.0] {
            let p = params(r, 4.5, 0.3);
            for stab in [false, true] {
                let s = stress_bulk(SymTensor2::ZERO, &p, stab);
                assert_eq!((s.xx, s.yy, s.xy), (0.0, 0.0, 0.0));
                assert_eq!(potential_bulk(SymTensor2::ZERO, &p, stab), 0.0);
                assert_eq!(stress_boundary([0.0; 2], &p, stab), [0.0; 2]);
                assert_eq!(potential_boundary([0.0; 2], &p, stab), 0.0);
            }
        }
    }

    #[test]
    fn closed_form_potentials_match_line_quadrature() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            // xorshift is plenty for sampling test tensors.
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        };
        for r in [2.0, 2.5, 3.0] {
            let p = params(r, 4.5, 0.3);
            for _ in 0..200 {
                let a = SymTensor2::new(next(), next(), next());
                let u = [next(), next()];
                for stab in [false, true] {
                    let cf = potential_bulk(a, &p, stab);
                    let gq = potential_bulk_by_quadrature(a, &p, stab);
                    assert!(
                        (cf - gq).abs() <= 1e-10 * gq.abs().max(1e-30),
                        "bulk r={r} stab={stab}: {cf} vs {gq}"
                    );
                    let cfb = potential_boundary(u, &p, stab);
                    let gqb = potential_boundary_by_quadrature(u, &p, stab);
                    assert!(
                        (cfb - gqb).abs() <= 1e-10 * gqb.abs().max(1e-30),
                        "boundary r={r} stab={stab}: {cfb} vs {gqb}"
                    );
                }
            }
        }
    }

    #[test]
    fn stress_is_the_gradient_of_the_potential() {
        // Central finite differences of the potential against the stress.
        let p = params(2.7, 4.8, 0.25);
        let h = 1e-6;
        let samples = [
            SymTensor2::new(0.3, -1.2, 0.4),
            SymTensor2::new(2.0, 1.0, -0.7),
            SymTensor2::new(-0.05, 0.02, 0.01),
        ];
        for a in samples {
            for stab in [false, true] {
                let s = stress_bulk(a, &p, stab);
                let d_xx = (potential_bulk(SymTensor2::new(a.xx + h, a.yy, a.xy), &p, stab)
                    - potential_bulk(SymTensor2::new(a.xx - h, a.yy, a.xy), &p, stab))
                    / (2.0 * h);
                let d_yy = (potential_bulk(SymTensor2::new(a.xx, a.yy + h, a.xy), &p, stab)
                    - potential_bulk(SymTensor2::new(a.xx, a.yy - h, a.xy), &p, stab))
                    / (2.0 * h);
                // The xy slot represents two tensor entries, so the partial
                // derivative in that coordinate is 2 S_xy.
                let d_xy = (potential_bulk(SymTensor2::new(a.xx, a.yy, a.xy + h), &p, stab)
                    - potential_bulk(SymTensor2::new(a.xx, a.yy, a.xy - h), &p, stab))
                    / (2.0 * h);
                assert!((d_xx - s.xx).abs() < 2e-6 * s.norm().max(1.0));
                assert!((d_yy - s.yy).abs() < 2e-6 * s.norm().max(1.0));
                assert!((d_xy - 2.0 * s.xy).abs() < 2e-6 * s.norm().max(1.0));
            }
        }
        // Boundary law likewise.
        for u in [[0.7, -0.3], [-1.5, 2.2]] {
            for stab in [false, true] {
                let s = stress_boundary(u, &p, stab);
                for c in 0..2 {
                    let mut up = u;
                    let mut um = u;
                    up[c] += h;
                    um[c] -= h;
                    let fd = (potential_boundary(up, &p, stab)
                        - potential_boundary(um, &p, stab))
                        / (2.0 * h);
                    assert!((fd - s[c]).abs() < 2e-6 * (s[0].abs() + s[1].abs()).max(1.0));
                }
            }
        }
    }

    #[test]
    fn validate_flags_window_and_rejects_bad_coefficients() {
        let good = params(2.5, 4.5, 0.2);
        let rep = validate_params(&good).unwrap();
        // r' = 5/3, 3r' = 5, so q = 4.5 is inside the window.
        assert!(rep.window_ok);

        let rep2 = validate_params(&params(2.2, 5.5, 0.2)).unwrap();
        // 3r' = 5.5 exactly: q = 5.5 is still admissible.
        assert!(rep2.window_ok);

        let rep3 = validate_params(&params(2.0, 4.5, 0.2)).unwrap();
        assert!(!rep3.window_ok);
        assert!(rep3.notes.iter().any(|n| n.contains("r = 2")));

        assert!(validate_params(&params(1.5, 4.5, 0.2)).is_err());
        let mut bad = params(2.5, 4.5, 0.2);
        bad.sigma4 = 0.0;
        assert!(validate_params(&bad).is_err());
        let mut bad_eps = params(2.5, 4.5, 0.2);
        bad_eps.eps = -1.0;
        assert!(validate_params(&bad_eps).is_err());
    }

    #[test]
    fn korn_margin_note_is_reported() {
        let rep = validate_params(&params(2.5, 4.5, 0.2)).unwrap();
        assert!(rep
            .notes
            .iter()
            .any(|n| n.contains("Korn constant estimate")));
    }

    proptest! {
        /// Monotonicity of the stabilized law: (S_eps(A) - S_eps(B)) : (A - B) >= 0.
        #[test]
        fn stabilized_stress_is_monotone(
            axx in -10.0f64..10.0, ayy in -10.0f64..10.0, axy in -10.0f64..10.0,
            bxx in -10.0f64..10.0, byy in -10.0f64..10.0, bxy in -10.0f64..10.0,
            r in 2.0f64..3.5, eps in 1e-3f64..1.0,
        ) {
            let p = params(r, 4.5, eps);
            let a = SymTensor2::new(axx, ayy, axy);
            let b = SymTensor2::new(bxx, byy, bxy);
            let d = SymTensor2::new(a.xx - b.xx, a.yy - b.yy, a.xy - b.xy);
            let sa = stress_bulk(a, &p, true);
            let sb = stress_bulk(b, &p, true);
            let gap = SymTensor2::new(sa.xx - sb.xx, sa.yy - sb.yy, sa.xy - sb.xy).dot(&d);
            prop_assert!(gap >= -1e-12 * (1.0 + d.norm_sq()));
        }

        /// Coercivity floors: the stabilized stress dominates both the r-growth
        /// and the eps-weighted 4- and q-growth terms.
        #[test]
        fn stabilized_stress_is_coercive(
            axx in -10.0f64..10.0, ayy in -10.0f64..10.0, axy in -10.0f64..10.0,
            r in 2.0f64..3.5, eps in 1e-3f64..1.0,
        ) {
            let p = params(r, 4.5, eps);
            let a = SymTensor2::new(axx, ayy, axy);
            let n = a.norm();
            let work = stress_bulk(a, &p, true).dot(&a);
            // S(A):A >= 2 sigma_r |A|^r for r > 2 (drop the sigma2 floor),
            // and the stabilizers contribute eps sigma4 |A|^4 + eps sigma_q |A|^q.
            let floor = if p.r > 2.0 { 2.0 * p.sigma_r.powf(2.0 / (p.r - 2.0)).powf((p.r - 2.0) / 2.0) * n.powf(p.r) } else { 2.0 * p.sigma2 * n * n }
                + p.eps * p.sigma4 * n.powi(4)
                + p.eps * p.sigma_q * n.powf(p.q);
            prop_assert!(work - floor >= -1e-12 * (1.0 + floor));
        }

        /// Boundary coercivity: s_eps(u) . u >= eps rho4 |u|^4.
        #[test]
        fn boundary_friction_is_coercive(
            u0 in -10.0f64..10.0, u1 in -10.0f64..10.0,
            r in 2.0f64..3.5, eps in 1e-3f64..1.0,
        ) {
            let p = params(r, 4.5, eps);
            let s = stress_boundary([u0, u1], &p, true);
            let work = s[0] * u0 + s[1] * u1;
            let n2 = u0 * u0 + u1 * u1;
            let floor = p.eps * p.rho4 * n2 * n2;
            prop_assert!(work - floor >= -1e-12 * (1.0 + floor));
        }

        /// Frame indifference: conjugating the argument by a rotation
        /// conjugates the stress and leaves the potential unchanged.
        #[test]
        fn stress_is_frame_indifferent(
            axx in -5.0f64..5.0, ayy in -5.0f64..5.0, axy in -5.0f64..5.0,
            theta in 0.0f64..std::f64::consts::TAU,
            r in 2.0f64..3.5,
        ) {
            let p = params(r, 4.5, 0.2);
            let a = SymTensor2::new(axx, ayy, axy);
            let lhs = stress_bulk(a.rotated(theta), &p, true);
            let rhs = stress_bulk(a, &p, true).rotated(theta);
            prop_assert!((lhs.xx - rhs.xx).abs() < 1e-9 * (1.0 + rhs.norm()));
            prop_assert!((lhs.yy - rhs.yy).abs() < 1e-9 * (1.0 + rhs.norm()));
            prop_assert!((lhs.xy - rhs.xy).abs() < 1e-9 * (1.0 + rhs.norm()));
            let dp = potential_bulk(a.rotated(theta), &p, true) - potential_bulk(a, &p, true);
            prop_assert!(dp.abs() < 1e-9 * (1.0 + potential_bulk(a, &p, true).abs()));
        }

        /// Growth: |S_eps(A)| stays below a fixed multiple of
        /// |A| + |A|^(r-1) + eps |A|^3 + eps |A|^(q-1).
        #[test]
        fn stabilized_stress_has_controlled_growth(
            axx in -10.0f64..10.0, ayy in -10.0f64..10.0, axy in -10.0f64..10.0,
            r in 2.0f64..3.5, eps in 1e-3f64..1.0,
        ) {
            let p = params(r, 4.5, eps);
            let a = SymTensor2::new(axx, ayy, axy);
            let n = a.norm();
            prop_assume!(n > 1e-12);
            let s = stress_bulk(a, &p, true).norm();
            let bound = n + n.powf(p.r - 1.0) + p.eps * n.powi(3) + p.eps * n.powf(p.q - 1.0);
            // The fitted constant: 2 max(sigma2, sigma_r-scale, ...) with a
            // comfortable margin; checked over the sampled coefficient ranges.
            prop_assert!(s <= 6.0 * bound);
        }
    }
}
