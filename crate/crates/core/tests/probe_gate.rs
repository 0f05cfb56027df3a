//! Temporary measurement probe for the acceptance scenario. Deleted once
//! the acceptance gate is pinned.

use widechannel::*;

fn zero_forcing(_x: [f64; 2], _t: f64) -> [f64; 2] {
    [0.0, 0.0]
}

fn div_residual(mesh: &ChannelMesh, traj: &Trajectory, t_obs: f64) -> f64 {
    let hx = mesh.hx;
    let hy = mesh.hy;
    let dx = [-0.5 / hx, 0.5 / hx, 0.5 / hx, -0.5 / hx];
    let dy = [-0.5 / hy, -0.5 / hy, 0.5 / hy, 0.5 / hy];
    let ht = traj.ht();
    let mut total = 0.0;
    for k in 0..traj.n_steps() {
        let t_mid = (k as f64 + 0.5) * ht;
        if t_mid > t_obs {
            break;
        }
        let (a, b) = (traj.at(k), traj.at(k + 1));
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            let mut div = 0.0;
            for (loc, &id) in nodes.iter().enumerate() {
                let mx = 0.5 * (a[2 * id] + b[2 * id]);
                let my = 0.5 * (a[2 * id + 1] + b[2 * id + 1]);
                div += dx[loc] * mx + dy[loc] * my;
            }
            total += ht * hx * hy * div * div;
        }
    }
    total.sqrt()
}

#[test]
fn probe() {
    let mesh = build_rect_channel(16, 8, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
    let inlet = InletProfile::parabolic(1.0);
    let ext = build_extension_field(&mesh, &inlet, &[], None).unwrap();
    let params = ConstitutiveParams::uniform(2.5, 4.5, 0.5, 0.4);
    let kappa = 1e4;
    let ht = 0.0125;
    let n_steps = 336; // horizon 4.2 = 1.0 + 8 * 0.4
    let t_obs = 1.0;
    let ladder = [0.4, 0.2, 0.1, 0.05];

    let mut sys = WideSystem::new(
        &mesh,
        &ext,
        params,
        kappa,
        n_steps,
        ht,
        ConvectionForm::Rotational,
        &zero_forcing,
    )
    .unwrap();
    let opts = MinimizeOpts::default();
    let t0 = std::time::Instant::now();
    let report = epsilon_continuation(&mut sys, &ladder, &opts, t_obs, None).unwrap();
    println!("ladder wall time: {:.1}s", t0.elapsed().as_secs_f64());

    // Reference trajectory over the observation window.
    let refsolver = ReferenceSolver::new(&mesh, &ext, params, kappa, &zero_forcing).unwrap();
    let t1 = std::time::Instant::now();
    let ref_traj = refsolver.solve(t_obs, ht).unwrap();
    println!("reference wall time: {:.1}s", t1.elapsed().as_secs_f64());
    let window = t_obs - 5.0 * 0.05;
    let ref_norm = trajectory_l2_norm(&mesh, &ref_traj, window).unwrap();
    println!("ref norm over (0,{window}): {ref_norm:.6e}");

    let mut minimizers = Vec::new();
    for rung in &report.rungs {
        let s = rung.outcome.as_ref().unwrap();
        println!(
            "eps={} iters={} status={:?} value={:.6e} branch_switch={} cold={:.6e} warm={:.6e}",
            rung.eps,
            s.minimizer.iterations,
            s.minimizer.status,
            s.minimizer.value,
            s.branch_switch,
            s.cold_start_value,
            s.warm_start_value
        );
        let d = trajectory_l2_distance(&mesh, &s.minimizer.trajectory, &ref_traj, window).unwrap();
        println!("  dist_to_ref={d:.6e} (ratio to ref norm {:.4})", d / ref_norm);
        let viol = sys.handler().violation(&s.minimizer.trajectory).unwrap();
        println!("  constraint violation={viol:.3e}");
        minimizers.push(s.minimizer.trajectory.clone());
    }

    // Energy groups.
    for rung in &report.rungs {
        let s = rung.outcome.as_ref().unwrap();
        let e = &s.energy;
        print!("eps={} bounded:", rung.eps);
        for (n, v) in e.bounded_group() {
            print!(" {n}={v:.4e}");
        }
        print!(" upper:");
        for (n, v) in e.upper_group() {
            print!(" {n}={v:.4e}");
        }
        println!();
    }

    // Divergence residual at kappa and 10 kappa (eps = 0.1 rung).
    let d1 = div_residual(&mesh, &minimizers[2], t_obs);
    println!("div residual kappa={kappa}: {d1:.6e}");
    let mut sys10 = WideSystem::new(
        &mesh,
        &ext,
        params.with_eps(0.1),
        10.0 * kappa,
        n_steps,
        ht,
        ConvectionForm::Rotational,
        &zero_forcing,
    )
    .unwrap();
    sys10.set_eps(0.1).unwrap();
    let t2 = std::time::Instant::now();
    let res10 = minimize(&sys10, &minimizers[2], &opts, None).unwrap();
    println!(
        "10x kappa minimize: iters={} status={:?} time={:.1}s",
        res10.iterations,
        res10.status,
        t2.elapsed().as_secs_f64()
    );
    let d10 = div_residual(&mesh, &res10.trajectory, t_obs);
    println!("div residual kappa={}: {d10:.6e} ratio={:.2}", 10.0 * kappa, d1 / d10);

    // Energy ledger across the reference run.
    let mut worst = 0.0f64;
    for k in 1..=ref_traj.n_steps() {
        let led = refsolver.energy_ledger(ref_traj.at(k - 1), ref_traj.at(k), ht, k as f64 * ht);
        worst = worst.max(led.violation);
    }
    println!("ledger worst violation: {worst:.3e}");

    // Steady-flow boundary identification on two meshes.
    for (nx, ny) in [(8usize, 4usize), (16, 8)] {
        let m = build_rect_channel(nx, ny, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let e = build_extension_field(&m, &inlet, &[], None).unwrap();
        let rs = ReferenceSolver::new(&m, &e, params, kappa, &zero_forcing).unwrap();
        let (steady, picard_iters) = rs.solve_steady().unwrap();
        let n_bt = 8;
        let bht = 0.125;
        let traj = Trajectory::from_constant(&steady, n_bt, bht).unwrap();
        let dvals = vec![0.0; n_bt + 1];
        let pres = reconstruct_pressure(&m, &traj, &params, &zero_forcing, &dvals).unwrap();
        let bumps = default_bumps(1.0);
        let etas = default_eta_profiles();
        let rep = boundary_report(&m, &traj, &pres, &params, &zero_forcing, 1.0, &bumps, &etas)
            .unwrap();
        println!(
            "steady {nx}x{ny}: picard={picard_iters} wall={:?} outlet={:?}",
            rep.wall_residual, rep.outlet_residual
        );
        for (pi, per_psi) in rep.constants.iter().enumerate() {
            for (oi, per_outlet) in per_psi.iter().enumerate() {
                let cs = per_outlet;
                let max = cs.iter().cloned().fold(f64::MIN, f64::max);
                let min = cs.iter().cloned().fold(f64::MAX, f64::min);
                let scale = cs.iter().map(|c| c.abs()).fold(0.0, f64::max).max(1e-12);
                println!(
                    "  psi={pi} outlet={oi} constants={cs:?} spread={:.3e}",
                    (max - min) / scale
                );
            }
        }
    }
}
