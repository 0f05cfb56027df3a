//! Closed-form channel flow used to verify the pressure reconstruction
//! and the boundary-condition diagnostics against known answers.
//!
//! The stream function `A(x) B(y)` with `A = sin(pi x / L)` and
//! `B = y(1-y)(a + b y + c y^2)` generates `v = (A B', -A' B)`:
//! divergence-free, impermeable at the walls `y = 0, 1`, and purely
//! tangential at the outlet `x = L`.  The cubic coefficients tie wall
//! shear to wall slip so the friction condition
//! `(S n)_tan + s(v) = 0` holds pointwise on both walls, `A''(L) = 0`
//! removes the tangential outlet traction, and the dynamic pressure
//! `pi(x, y) = 2 sigma2 A'(L) B'(y) x / L` matches the normal outlet
//! traction exactly, with outlet constant zero.  The forcing that makes
//! the pair exactly steady is `f = (grad v) v - div S + grad pi`, and the
//! static pressure is `p = pi - |v|^2 / 2`.
//!
//! Everything is hand-differentiated; the test suites confirm the algebra
//! by finite differences before relying on it.

/// Steady manufactured channel flow on `[0, L] x [0, 1]` for the linear
/// stress law (`r = 2`) with bulk coefficient `sigma2` and wall friction
/// coefficient `rho2`.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedFlow {
    pub length: f64,
    pub sigma2: f64,
    pub rho2: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl ManufacturedFlow {
    pub fn new(length: f64, sigma2: f64, rho2: f64) -> Self {
        let a = 1.0;
        let b = a * (sigma2 + rho2) / sigma2;
        let c = -(a * (sigma2 + rho2) + b * (2.0 * sigma2 + rho2)) / (3.0 * sigma2 + rho2);
        Self {
            length,
            sigma2,
            rho2,
            a,
            b,
            c,
        }
    }

    /// `A` and its first three derivatives at `x`.
    pub fn stream_x(&self, x: f64) -> [f64; 4] {
        let k = std::f64::consts::PI / self.length;
        let (s, c) = (k * x).sin_cos();
        [s, k * c, -k * k * s, -k * k * k * c]
    }

    /// `B` and its first three derivatives at `y`.
    pub fn stream_y(&self, y: f64) -> [f64; 4] {
        let (a, b, c) = (self.a, self.b, self.c);
        let pc = a + b * y + c * y * y;
        let pc1 = b + 2.0 * c * y;
        let pc2 = 2.0 * c;
        let w = y * (1.0 - y);
        let w1 = 1.0 - 2.0 * y;
        [
            w * pc,
            w1 * pc + w * pc1,
            -2.0 * pc + 2.0 * w1 * pc1 + w * pc2,
            -6.0 * pc1 + 3.0 * w1 * pc2,
        ]
    }

    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        let a = self.stream_x(x);
        let b = self.stream_y(y);
        [a[0] * b[1], -a[1] * b[0]]
    }

    /// Dynamic (Bernoulli) pressure `p + |v|^2 / 2`.
    pub fn dynamic_pressure(&self, x: f64, _y: f64) -> f64 {
        let k = std::f64::consts::PI / self.length;
        let a1_l = -k;
        let b = self.stream_y(_y);
        2.0 * self.sigma2 * a1_l * b[1] * x / self.length
    }

    /// Static pressure.
    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        let v = self.velocity(x, y);
        self.dynamic_pressure(x, y) - 0.5 * (v[0] * v[0] + v[1] * v[1])
    }

    /// Steady forcing balancing the momentum equation for this pair.
    pub fn forcing(&self, x: f64, y: f64) -> [f64; 2] {
        let a = self.stream_x(x);
        let b = self.stream_y(y);
        let k = std::f64::consts::PI / self.length;
        let a1_l = -k;
        let omega = -(a[2] * b[0] + a[0] * b[2]);
        let vx = a[0] * b[1];
        let vy = -a[1] * b[0];
        let div_s = [
            self.sigma2 * (a[2] * b[1] + a[0] * b[3]),
            -self.sigma2 * (a[1] * b[2] + a[3] * b[0]),
        ];
        let grad_pi = [
            2.0 * self.sigma2 * a1_l * b[1] / self.length,
            2.0 * self.sigma2 * a1_l * b[2] * x / self.length,
        ];
        [
            -omega * vy - div_s[0] + grad_pi[0],
            omega * vx - div_s[1] + grad_pi[1],
        ]
    }

    /// Nodal interpolation of the velocity on a mesh's dof layout.
    pub fn nodal_velocity(&self, mesh: &crate::geometry::ChannelMesh) -> Vec<f64> {
        let mut field = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            let [x, y] = mesh.node(id);
            let v = self.velocity(x, y);
            field[2 * id] = v[0];
            field[2 * id + 1] = v[1];
        }
        field
    }
}
