//! Limited-memory quasi-Newton minimization of the space-time objective and
//! the continuation driver that walks a decreasing ladder of relaxation
//! scales with warm starts.
//!
//! The minimizer preconditions with the diagonal time-decay metric: the
//! curvature of the objective along a dof at time node `t_k` carries the
//! node's exponential weight, so seeding the inverse Hessian with the
//! reciprocal weights and measuring gradients in the matching dual norm
//! keeps the iteration scale-free across relaxation scales.

use std::cell::RefCell;
use std::collections::VecDeque;

use crate::diagnostics::energy::{energy_report, EnergyReport};
use crate::error::{Error, Result};
use crate::functional::WideSystem;
use crate::operators::{trajectory_l2_distance, Trajectory};

/// Smooth objective over a flat dof vector, with optional affine
/// constraints handled by projection.
///
/// `gradient_into` must return a gradient that already lies in the
/// constraint tangent space.  Preconditioned directions are passed back
/// through `project_tangent`, so the metric need not commute with the
/// projection; with a tangent gradient the projected preconditioned
/// steepest-descent direction is still a strict descent direction.
pub trait Objective {
    /// Number of unknowns.
    fn dim(&self) -> usize;
    /// Objective value at an admissible point.
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// Writes the constraint-tangent gradient at `x` into `g`.
    fn gradient_into(&self, x: &[f64], g: &mut [f64]) -> Result<()>;
    /// Projects a point onto the affine constraint set.
    fn project(&self, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
    /// Projects a direction onto the constraint tangent space.
    fn project_tangent(&self, _d: &mut [f64]) {}
    /// Positive diagonal metric for preconditioning and the stopping norm.
    fn metric(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

/// Options for the quasi-Newton loop.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOpts {
    /// Stop when the dual gradient norm falls below `grad_tol * (1 + |value|)`.
    pub grad_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Backtracking cap per line search.
    pub ls_max: usize,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 20_000,
            memory: 12,
            ls_max: 50,
        }
    }
}

/// How the quasi-Newton loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Dual gradient norm reached the tolerance.
    Converged,
    /// Iteration cap reached.
    MaxIter,
    /// Backtracking exhausted without sufficient decrease; the best iterate
    /// so far is returned.
    LineSearchFailed,
}

/// Outcome of one minimization in flat-vector form.
#[derive(Debug, Clone)]
pub struct FlatResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual-norm gradient; matches a fresh gradient evaluation at `x`.
    pub gnorm: f64,
    pub iterations: usize,
    /// Objective evaluations spent inside line searches.
    pub ls_evals: usize,
    pub status: Status,
}

/// Outcome of one minimization of the space-time objective.
#[derive(Debug, Clone)]
pub struct MinimizerResult {
    pub trajectory: Trajectory,
    pub value: f64,
    /// Dual-norm gradient; matches a fresh gradient evaluation at the
    /// returned trajectory.
    pub gnorm: f64,
    pub iterations: usize,
    /// Objective evaluations spent inside line searches.
    pub ls_evals: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Limited-memory quasi-Newton descent with metric preconditioning and a
/// backtracking sufficient-decrease line search.  Every trial point is
/// re-projected onto the constraints before evaluation.
pub fn lbfgs(
    obj: &dyn Objective,
    x0: &[f64],
    opts: &MinimizeOpts,
    mut progress: Option<&mut dyn FnMut(usize, f64, f64)>,
) -> Result<FlatResult> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "start point has {} dofs, objective has {}",
            x0.len(),
            n
        )));
    }
    if !(opts.grad_tol > 0.0) || opts.memory == 0 || opts.ls_max == 0 {
        return Err(Error::InvalidParameter(
            "grad_tol must be positive and memory/ls_max nonzero".into(),
        ));
    }
    let b = obj.metric();
    if b.len() != n || b.iter().any(|w| !(w > &0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "metric must be a positive finite diagonal of matching length".into(),
        ));
    }
    // Floor the metric at a fixed fraction of its largest entry.  Metric
    // entries more than ~14 decades below the top mark coordinates whose
    // contribution to the objective sits at or below the double-precision
    // noise floor; inverting such entries verbatim would amplify gradient
    // noise into enormous steps along directions the value cannot rank.
    // The floor regularizes only the metric: objective, constraints, and
    // stationary points are untouched, and for well-scaled problems the
    // floor never activates.
    let b_floor = 1e-14 * b.iter().copied().fold(0.0f64, f64::max);
    let binv: Vec<f64> = b.iter().map(|w| 1.0 / w.max(b_floor)).collect();
    let dual_norm = |g: &[f64]| -> f64 {
        g.iter()
            .zip(&binv)
            .map(|(gi, bi)| gi * gi * bi)
            .sum::<f64>()
            .sqrt()
    };

    let mut x = x0.to_vec();
    obj.project(&mut x)?;
    let mut value = obj.value(&x)?;
    let mut g = vec![0.0; n];
    obj.gradient_into(&x, &mut g)?;
    let mut gnorm = dual_norm(&g);

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut gamma = 1.0;
    let mut ls_evals = 0usize;
    let mut iterations = 0usize;
    let mut status = Status::MaxIter;

    if let Some(cb) = progress.as_mut() {
        cb(0, value, gnorm);
    }
    if gnorm <= opts.grad_tol * (1.0 + value.abs()) {
        status = Status::Converged;
        return Ok(FlatResult {
            x,
            value,
            gnorm,
            iterations,
            ls_evals,
            status,
        });
    }

    let mut xt = vec![0.0; n];
    let mut gnew = vec![0.0; n];
    for iter in 1..=opts.max_iter {
        // Two-loop recursion seeded with the scaled inverse metric.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        let mut d: Vec<f64> = q
            .iter()
            .zip(&binv)
            .map(|(qi, bi)| gamma * qi * bi)
            .collect();
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &d);
            axpy(a - beta, s, &mut d);
        }
        for di in d.iter_mut() {
            *di = -*di;
        }
        obj.project_tangent(&mut d);

        let mut gd = dot(&g, &d);
        if gd >= 0.0 {
            // Curvature information turned unreliable: restart from
            // preconditioned steepest descent.
            mem.clear();
            gamma = 1.0;
            for ((di, gi), bi) in d.iter_mut().zip(&g).zip(&binv) {
                *di = -gi * bi;
            }
            obj.project_tangent(&mut d);
            gd = dot(&g, &d);
            if gd >= 0.0 {
                status = Status::Converged;
                iterations = iter - 1;
                break;
            }
        }

        let mut fresh_start = mem.is_empty();
        let mut accepted = false;
        let mut vt = value;
        loop {
            let mut alpha = if fresh_start {
                1.0 / (1.0 + dot(&d, &d).sqrt())
            } else {
                1.0
            };
            for _ in 0..opts.ls_max {
                xt.copy_from_slice(&x);
                axpy(alpha, &d, &mut xt);
                obj.project(&mut xt)?;
                vt = obj.value(&xt)?;
                ls_evals += 1;
                if vt <= value + 1e-4 * alpha * gd {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted || fresh_start {
                break;
            }
            // The quasi-Newton direction stalled the backtracking; the
            // stored curvature no longer describes this neighborhood.  Drop
            // it and retry once along preconditioned steepest descent, which
            // is a strict descent direction whenever the gradient is
            // nonzero.
            mem.clear();
            gamma = 1.0;
            for ((di, gi), bi) in d.iter_mut().zip(&g).zip(&binv) {
                *di = -gi * bi;
            }
            obj.project_tangent(&mut d);
            gd = dot(&g, &d);
            if gd >= 0.0 {
                break;
            }
            fresh_start = true;
        }
        iterations = iter;
        if !accepted {
            status = Status::LineSearchFailed;
            break;
        }

        obj.gradient_into(&xt, &mut gnew)?;
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let ybinvy: f64 = y.iter().zip(&binv).map(|(yi, bi)| yi * yi * bi).sum();
            if ybinvy > 0.0 {
                gamma = sy / ybinvy;
            }
            mem.push_back((s, y, 1.0 / sy));
            if mem.len() > opts.memory {
                mem.pop_front();
            }
        }
        x.copy_from_slice(&xt);
        value = vt;
        g.copy_from_slice(&gnew);
        gnorm = dual_norm(&g);
        if let Some(cb) = progress.as_mut() {
            cb(iter, value, gnorm);
        }
        if gnorm <= opts.grad_tol * (1.0 + value.abs()) {
            status = Status::Converged;
            break;
        }
    }

    Ok(FlatResult {
        x,
        value,
        gnorm,
        iterations,
        ls_evals,
        status,
    })
}

struct SystemObjective<'s, 'a> {
    sys: &'s WideSystem<'a>,
    scratch: RefCell<Trajectory>,
    diag: Vec<f64>,
}

impl<'s, 'a> SystemObjective<'s, 'a> {
    fn new(sys: &'s WideSystem<'a>) -> Self {
        let n_dofs = sys.mesh().n_dofs();
        let diag = sys.curvature_diagonal();
        let scratch = RefCell::new(
            Trajectory::zeros(n_dofs, sys.n_steps(), sys.ht()).expect("valid system shape"),
        );
        Self { sys, scratch, diag }
    }
}

impl Objective for SystemObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let mut t = self.scratch.borrow_mut();
        t.data_mut().copy_from_slice(x);
        Ok(self.sys.evaluate(&t)?.value)
    }

    fn gradient_into(&self, x: &[f64], g: &mut [f64]) -> Result<()> {
        let grad = {
            let mut t = self.scratch.borrow_mut();
            t.data_mut().copy_from_slice(x);
            self.sys.gradient(&t)?
        };
        g.copy_from_slice(&grad);
        Ok(())
    }

    fn project(&self, x: &mut [f64]) -> Result<()> {
        let mut t = self.scratch.borrow_mut();
        t.data_mut().copy_from_slice(x);
        self.sys.handler().project(&mut t)?;
        x.copy_from_slice(t.data());
        Ok(())
    }

    fn project_tangent(&self, d: &mut [f64]) {
        self.sys.handler().project_tangent(d);
    }

    fn metric(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

/// Minimizes the space-time objective from `initial`, which is projected
/// onto the constraints before the first evaluation.  The optional callback
/// receives `(iteration, value, gradient norm)` per accepted step.
pub fn minimize(
    sys: &WideSystem,
    initial: &Trajectory,
    opts: &MinimizeOpts,
    progress: Option<&mut dyn FnMut(usize, f64, f64)>,
) -> Result<MinimizerResult> {
    if initial.n_dofs() != sys.mesh().n_dofs()
        || initial.n_steps() != sys.n_steps()
        || (initial.ht() - sys.ht()).abs() > 1e-12 * sys.ht()
    {
        return Err(Error::DimensionMismatch(
            "initial trajectory does not match the system grid".into(),
        ));
    }
    let obj = SystemObjective::new(sys);
    let flat = lbfgs(&obj, initial.data(), opts, progress)?;
    let mut trajectory = Trajectory::zeros(initial.n_dofs(), initial.n_steps(), initial.ht())?;
    trajectory.data_mut().copy_from_slice(&flat.x);
    Ok(MinimizerResult {
        trajectory,
        value: flat.value,
        gnorm: flat.gnorm,
        iterations: flat.iterations,
        ls_evals: flat.ls_evals,
        status: flat.status,
    })
}

/// One rung of the continuation ladder that reached a minimizer.
#[derive(Debug)]
pub struct RungSuccess {
    /// Objective value at the fresh extension start for this rung's scale.
    pub cold_start_value: f64,
    /// Objective value at the warm start actually used.
    pub warm_start_value: f64,
    /// True when a warm-started rung dropped more than 10% below its warm
    /// start value, i.e. the descent likely moved to a different basin.
    /// Recorded, never acted upon.
    pub branch_switch: bool,
    pub minimizer: MinimizerResult,
    pub energy: EnergyReport,
}

/// One rung of the continuation ladder.
#[derive(Debug)]
pub struct RungReport {
    pub eps: f64,
    /// The rung outcome; a failed rung keeps its error and the ladder
    /// continues from the last successful minimizer.
    pub outcome: Result<RungSuccess>,
}

/// Outcome of a full continuation run.
#[derive(Debug)]
pub struct ContinuationReport {
    pub ladder: Vec<f64>,
    pub rungs: Vec<RungReport>,
    /// Space-time L2 distances between successive rung minimizers over
    /// `(0, t_obs - 5 min(ladder))` (falling back to `(0, t_obs)` when the
    /// trimmed window would be empty); NaN where either side failed.
    pub distances: Vec<f64>,
}

/// Walks `ladder` from the largest scale down, minimizing at each rung and
/// warm-starting from the previous minimizer.  Per-rung failures are
/// recorded and the ladder continues.  The optional callback receives
/// machine-parseable lines `eps=<v> iter=<n> value=<v> gnorm=<v>`.
pub fn epsilon_continuation(
    sys: &mut WideSystem,
    ladder: &[f64],
    opts: &MinimizeOpts,
    t_obs: f64,
    mut progress: Option<&mut dyn FnMut(&str)>,
) -> Result<ContinuationReport> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty continuation ladder".into()));
    }
    if !(ladder[ladder.len() - 1] > 0.0) {
        return Err(Error::InvalidParameter(
            "continuation scales must be positive".into(),
        ));
    }
    for pair in ladder.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::InvalidParameter(
                "continuation ladder must decrease strictly".into(),
            ));
        }
    }
    let eps_min = ladder[ladder.len() - 1];
    if sys.ht() > eps_min / 4.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "time step {} must be at most a quarter of the smallest scale {}",
            sys.ht(),
            eps_min
        )));
    }
    if !(t_obs > 0.0) || t_obs > sys.horizon() * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "observation window {t_obs} outside (0, {}]",
            sys.horizon()
        )));
    }
    // The comparison window stops several relaxation scales short of the
    // observation time so end-of-window relaxation effects do not dominate
    // the distances.
    let window = if t_obs - 5.0 * eps_min > 0.0 {
        t_obs - 5.0 * eps_min
    } else {
        t_obs
    };

    let mut rungs: Vec<RungReport> = Vec::with_capacity(ladder.len());
    let mut distances = Vec::new();
    let mut warm: Option<Trajectory> = None;
    let mut prev_minimizer: Option<Trajectory> = None;
    for (i, &eps) in ladder.iter().enumerate() {
        sys.set_eps(eps)?;
        let outcome = (|| -> Result<RungSuccess> {
            let cold = sys.initial_trajectory();
            let cold_start_value = sys.evaluate(&cold)?.value;
            let start = warm.clone().unwrap_or(cold);
            let warm_start_value = sys.evaluate(&start)?.value;
            let mut cb = |it: usize, v: f64, gn: f64| {
                if let Some(p) = progress.as_mut() {
                    p(&format!("eps={eps:.6e} iter={it} value={v:.9e} gnorm={gn:.6e}"));
                }
            };
            let minimizer = minimize(sys, &start, opts, Some(&mut cb))?;
            let energy = energy_report(sys.mesh(), &minimizer.trajectory, sys.params(), t_obs)?;
            let branch_switch =
                i > 0 && warm_start_value - minimizer.value > 0.1 * warm_start_value.abs();
            Ok(RungSuccess {
                cold_start_value,
                warm_start_value,
                branch_switch,
                minimizer,
                energy,
            })
        })();
        if i > 0 {
            let d = match (&prev_minimizer, &outcome) {
                (Some(p), Ok(s)) => {
                    trajectory_l2_distance(sys.mesh(), p, &s.minimizer.trajectory, window)?
                }
                _ => f64::NAN,
            };
            distances.push(d);
        }
        match &outcome {
            Ok(s) => {
                warm = Some(s.minimizer.trajectory.clone());
                prev_minimizer = Some(s.minimizer.trajectory.clone());
            }
            Err(_) => {
                prev_minimizer = None;
            }
        }
        rungs.push(RungReport { eps, outcome });
    }
    Ok(ContinuationReport {
        ladder: ladder.to_vec(),
        rungs,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::ConstitutiveParams;
    use crate::functional::ConvectionForm;
    use crate::geometry::{build_extension_field, build_rect_channel, InletProfile, TagLayout};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(0.5 * x.iter().zip(&self.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        }
        fn gradient_into(&self, x: &[f64], g: &mut [f64]) -> Result<()> {
            for ((gi, xi), ti) in g.iter_mut().zip(x).zip(&self.target) {
                *gi = xi - ti;
            }
            Ok(())
        }
    }

    #[test]
    fn quadratic_recovered_within_dof_count_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let target: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let obj = Quadratic { target: target.clone() };
        let opts = MinimizeOpts {
            grad_tol: 1e-12,
            ..MinimizeOpts::default()
        };
        let res = lbfgs(&obj, &vec![0.0; 40], &opts, None).unwrap();
        assert_eq!(res.status, Status::Converged);
        assert!(res.iterations <= 40, "took {} iterations", res.iterations);
        for (xi, ti) in res.x.iter().zip(&target) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    fn small_system(
        inlet: InletProfile,
    ) -> (crate::geometry::ChannelMesh, crate::geometry::ExtensionField) {
        let mesh = build_rect_channel(6, 3, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let ext = build_extension_field(&mesh, &inlet, &[], None).unwrap();
        (mesh, ext)
    }

    fn zero_forcing(_x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    #[test]
    fn zero_data_converges_immediately_to_zero() {
        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.3);
        let (mesh, ext) = small_system(InletProfile::zero());
        let sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            6,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let res = minimize(&sys, &sys.initial_trajectory(), &MinimizeOpts::default(), None)
            .unwrap();
        assert_eq!(res.status, Status::Converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.value, 0.0);
        assert!(res.trajectory.data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn descent_is_monotone_and_iterates_stay_admissible() {
        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.3);
        let (mesh, ext) = small_system(InletProfile::parabolic(1.0));
        let sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            8,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let opts = MinimizeOpts {
            grad_tol: 1e-5,
            ..MinimizeOpts::default()
        };
        let mut values = Vec::new();
        let mut cb = |_it: usize, v: f64, _g: f64| values.push(v);
        let res = minimize(&sys, &sys.initial_trajectory(), &opts, Some(&mut cb)).unwrap();
        assert_eq!(res.status, Status::Converged);
        assert!(values.len() >= 2, "expected real descent work");
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()));
        }
        assert!(sys.handler().violation(&res.trajectory).unwrap() <= 1e-12);
        // The reported gradient norm must match a fresh evaluation.
        let g = sys.gradient(&res.trajectory).unwrap();
        let diag = sys.curvature_diagonal();
        let mut sq = 0.0;
        for (gi, bi) in g.iter().zip(&diag) {
            sq += gi * gi / bi;
        }
        assert!((sq.sqrt() - res.gnorm).abs() <= 1e-12 * (1.0 + res.gnorm));
    }

    #[test]
    fn perturbed_restart_reproduces_the_minimum() {
        let params = ConstitutiveParams::uniform(2.0, 4.0, 0.5, 0.2);
        let mesh = build_rect_channel(16, 8, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let ext = build_extension_field(&mesh, &InletProfile::parabolic(1.0), &[], None).unwrap();
        let sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            16,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let opts = MinimizeOpts {
            grad_tol: 5e-7,
            ..MinimizeOpts::default()
        };
        let base = minimize(&sys, &sys.initial_trajectory(), &opts, None).unwrap();
        assert_eq!(
            base.status,
            Status::Converged,
            "iters {} gnorm {} value {} ls {}",
            base.iterations,
            base.gnorm,
            base.value,
            base.ls_evals
        );
        assert!(base.gnorm <= 1e-6);

        let mut start = sys.initial_trajectory();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut noise: Vec<f64> = (0..start.data().len())
            .map(|_| rng.gen_range(-1e-3..1e-3))
            .collect();
        sys.handler().project_tangent(&mut noise);
        for (d, n) in start.data_mut().iter_mut().zip(&noise) {
            *d += n;
        }
        let restart = minimize(&sys, &start, &opts, None).unwrap();
        assert_eq!(restart.status, Status::Converged);
        assert!(
            (restart.value - base.value).abs() <= 1e-6 * (1.0 + base.value.abs()),
            "restart value {} vs base {}",
            restart.value,
            base.value
        );
    }

    #[test]
    fn continuation_single_rung_equals_direct_minimize() {
        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.4);
        let (mesh, ext) = small_system(InletProfile::parabolic(0.5));
        let mut sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            8,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let opts = MinimizeOpts {
            grad_tol: 1e-5,
            ..MinimizeOpts::default()
        };
        let report = epsilon_continuation(&mut sys, &[0.4], &opts, 0.4, None).unwrap();
        assert_eq!(report.rungs.len(), 1);
        assert!(report.distances.is_empty());
        let rung = report.rungs[0].outcome.as_ref().unwrap();
        assert!(!rung.branch_switch);
        assert_eq!(rung.cold_start_value, rung.warm_start_value);

        sys.set_eps(0.4).unwrap();
        let direct = minimize(&sys, &sys.initial_trajectory(), &opts, None).unwrap();
        assert_eq!(direct.value, rung.minimizer.value);
        assert_eq!(direct.iterations, rung.minimizer.iterations);
        assert_eq!(direct.gnorm, rung.minimizer.gnorm);
    }

    #[test]
    fn continuation_warm_start_beats_cold_start() {
        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.4);
        let (mesh, ext) = small_system(InletProfile::parabolic(1.0));
        let mut sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            8,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let opts = MinimizeOpts {
            grad_tol: 1e-5,
            ..MinimizeOpts::default()
        };
        let mut lines = Vec::new();
        let mut log = |l: &str| lines.push(l.to_string());
        let report =
            epsilon_continuation(&mut sys, &[0.4, 0.2], &opts, 0.4, Some(&mut log)).unwrap();
        assert_eq!(report.rungs.len(), 2);
        assert_eq!(report.distances.len(), 1);
        assert!(report.distances[0].is_finite());
        let second = report.rungs[1].outcome.as_ref().unwrap();
        assert!(
            second.warm_start_value <= second.cold_start_value + 1e-12,
            "warm {} cold {}",
            second.warm_start_value,
            second.cold_start_value
        );
        assert!(lines.iter().any(|l| l.starts_with("eps=4.000000e-1 iter=0 ")));
        for rung in &report.rungs {
            let s = rung.outcome.as_ref().unwrap();
            assert!(s.energy.x2_norm.is_finite());
        }
    }

    #[test]
    fn continuation_rejects_bad_ladders() {
        let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.4);
        let (mesh, ext) = small_system(InletProfile::parabolic(1.0));
        let mut sys = WideSystem::new(
            &mesh,
            &ext,
            params,
            1e4,
            8,
            0.05,
            ConvectionForm::Rotational,
            &zero_forcing,
        )
        .unwrap();
        let opts = MinimizeOpts::default();
        assert!(epsilon_continuation(&mut sys, &[], &opts, 0.4, None).is_err());
        assert!(epsilon_continuation(&mut sys, &[0.2, 0.4], &opts, 0.4, None).is_err());
        assert!(epsilon_continuation(&mut sys, &[0.4, -0.1], &opts, 0.4, None).is_err());
        // ht = 0.05 > 0.1 / 4.
        assert!(epsilon_continuation(&mut sys, &[0.4, 0.1], &opts, 0.4, None).is_err());
        assert!(epsilon_continuation(&mut sys, &[0.4], &opts, 0.0, None).is_err());
    }
}
