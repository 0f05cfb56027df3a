//! Scenario orchestration: geometry, extension, relaxation ladder,
//! reference solve, pressure reconstruction, boundary identification, and
//! artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use widechannel::{
    boundary_report, build_extension_field, build_rect_channel, default_bumps,
    default_eta_profiles, energy_report, epsilon_continuation, estimate_korn_constant,
    reconstruct_pressure, trajectory_l2_distance, trajectory_l2_norm, write_vtk, BoundaryReport,
    ChannelMesh, ConvectionForm, InletProfile, MinimizeOpts, PressureField, ReferenceSolver,
    Status, Trajectory, WideSystem,
};

use crate::config::{InletSpec, RunConfig};
use crate::io::{fmt_f64, write_table, write_trajectory};

/// Resolves the output directory: the `WIDECHANNEL_OUT_DIR` environment
/// variable overrides the config value.
pub fn out_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var("WIDECHANNEL_OUT_DIR") {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&cfg.out_dir),
    }
}

fn inlet_profile(cfg: &RunConfig) -> InletProfile {
    match cfg.inlet {
        InletSpec::Zero => InletProfile::zero(),
        InletSpec::Parabolic(peak) => InletProfile::parabolic(peak),
    }
}

/// Runs the full scenario, writing artifacts into `dir`.
pub fn run_scenario(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mesh = build_rect_channel(cfg.nx, cfg.ny, cfg.length, cfg.height, cfg.layout)?;
    let inlet = inlet_profile(cfg);
    let ext = build_extension_field(&mesh, &inlet, &cfg.fluxes, None)?;
    let params = cfg.params();
    let forcing_spec = cfg.forcing;
    let forcing = move |x: [f64; 2], t: f64| forcing_spec.eval(x, t);
    let ht = cfg.time_step();
    let n_steps = cfg.n_steps();

    println!(
        "mesh {}x{} ({} nodes), horizon {} steps of {ht}, ladder {:?}",
        cfg.nx,
        cfg.ny,
        mesh.n_nodes(),
        n_steps,
        cfg.ladder
    );

    let mut sys = WideSystem::new(
        &mesh,
        &ext,
        params,
        cfg.kappa,
        n_steps,
        ht,
        ConvectionForm::Rotational,
        &forcing,
    )?;
    let opts = MinimizeOpts {
        grad_tol: cfg.grad_tol,
        max_iter: cfg.max_iter,
        ..MinimizeOpts::default()
    };
    let mut progress = |line: &str| println!("{line}");
    let report = epsilon_continuation(&mut sys, &cfg.ladder, &opts, cfg.t_obs, Some(&mut progress))?;

    // Reference trajectory over the observation window with the same step.
    let refsolver = ReferenceSolver::new(&mesh, &ext, params, cfg.kappa, &forcing)?;
    let ref_traj = refsolver.solve(cfg.t_obs, ht)?;
    let window = if cfg.t_obs - 5.0 * cfg.eps_min() > 0.0 {
        cfg.t_obs - 5.0 * cfg.eps_min()
    } else {
        cfg.t_obs
    };
    let ref_norm = trajectory_l2_norm(&mesh, &ref_traj, window)?;

    // Ladder table.
    let mut ladder_rows = Vec::new();
    let mut energy_rows = Vec::new();
    let mut distance_rows = Vec::new();
    let mut failures = Vec::new();
    let mut final_traj: Option<&Trajectory> = None;
    for (i, rung) in report.rungs.iter().enumerate() {
        let dist_prev = if i == 0 {
            f64::NAN
        } else {
            report.distances[i - 1]
        };
        match &rung.outcome {
            Ok(s) => {
                let dist_ref =
                    trajectory_l2_distance(&mesh, &s.minimizer.trajectory, &ref_traj, window)?;
                let status = match s.minimizer.status {
                    Status::Converged => "converged",
                    Status::MaxIter => "max_iter",
                    Status::LineSearchFailed => "line_search_failed",
                };
                ladder_rows.push(format!(
                    "{},{},{},{},{},{},{},{}",
                    fmt_f64(rung.eps),
                    s.minimizer.iterations,
                    status,
                    fmt_f64(s.minimizer.value),
                    fmt_f64(s.minimizer.gnorm),
                    fmt_f64(s.cold_start_value),
                    fmt_f64(s.warm_start_value),
                    s.branch_switch
                ));
                let mut row = fmt_f64(rung.eps);
                for (_, v) in s.energy.rows() {
                    row.push(',');
                    row.push_str(&fmt_f64(v));
                }
                energy_rows.push(row);
                distance_rows.push(format!(
                    "{},{},{},{}",
                    fmt_f64(rung.eps),
                    fmt_f64(dist_prev),
                    fmt_f64(dist_ref),
                    fmt_f64(ref_norm)
                ));
                final_traj = Some(&s.minimizer.trajectory);
            }
            Err(e) => {
                failures.push(format!("eps={}: {e}", rung.eps));
                ladder_rows.push(format!(
                    "{},0,failed,nan,nan,nan,nan,false",
                    fmt_f64(rung.eps)
                ));
                distance_rows.push(format!(
                    "{},{},nan,{}",
                    fmt_f64(rung.eps),
                    fmt_f64(dist_prev),
                    fmt_f64(ref_norm)
                ));
            }
        }
    }
    write_table(
        dir,
        "ladder.csv",
        "eps,iterations,status,value,gnorm,cold_start,warm_start,branch_switch",
        &ladder_rows,
    )?;
    let energy_header = {
        let mut h = String::from("eps");
        if let Some(Ok(s)) = report.rungs.first().map(|r| r.outcome.as_ref()) {
            for (name, _) in s.energy.rows() {
                h.push(',');
                h.push_str(name);
            }
        } else {
            h.push_str(
                ",x2_norm,xr_norm,eps14_x4,eps1q_xq,linf_l2,sqeps_dt,sqeps_curl,sqeps_mat,curl_lr2,eps2q_curl_lq2",
            );
        }
        h
    };
    write_table(dir, "energy.csv", &energy_header, &energy_rows)?;
    write_table(
        dir,
        "distances.csv",
        "eps,dist_to_previous,dist_to_reference,reference_norm",
        &distance_rows,
    )?;

    write_trajectory(dir, "reference", &mesh, &ref_traj, cfg.t_obs)?;

    let final_traj = final_traj
        .ok_or_else(|| anyhow!("no ladder rung produced a minimizer: {}", failures.join("; ")))?;
    write_trajectory(dir, "trajectory", &mesh, final_traj, cfg.t_obs)?;

    // Pressure reconstruction and boundary identification on the final rung.
    let d_values: Vec<f64> = (0..final_traj.n_time_nodes())
        .map(|k| cfg.d.eval(k as f64 * ht))
        .collect();
    let pressure = reconstruct_pressure(&mesh, final_traj, &params, &forcing, &d_values)?;
    write_pressure(dir, &mesh, &pressure, cfg.t_obs)?;

    let bumps = default_bumps(cfg.t_obs);
    let etas = default_eta_profiles();
    let boundary = boundary_report(
        &mesh,
        final_traj,
        &pressure,
        &params,
        &forcing,
        cfg.t_obs,
        &bumps,
        &etas,
    )?;
    write_boundary(dir, &boundary)?;

    if cfg.vtk {
        write_vtk_frames(dir, &mesh, final_traj, cfg.t_obs)?;
    }

    println!("artifacts written to {}", dir.display());
    if !failures.is_empty() {
        return Err(anyhow!("ladder rung failures: {}", failures.join("; ")));
    }
    Ok(())
}

/// Writes per-slab pressure slices over the observation window.
pub fn write_pressure(
    dir: &Path,
    mesh: &ChannelMesh,
    pressure: &PressureField,
    t_obs: f64,
) -> Result<()> {
    let ht = pressure.ht();
    let mut rows = Vec::new();
    for k in 1..pressure.n_time_nodes() {
        let t_mid = (k as f64 - 0.5) * ht;
        if t_mid > t_obs {
            break;
        }
        let slice = pressure.slice(k)?;
        for (id, p) in slice.iter().enumerate() {
            let [x, y] = mesh.node(id);
            rows.push(format!(
                "{},{},{},{},{}",
                fmt_f64(t_mid),
                id,
                fmt_f64(x),
                fmt_f64(y),
                fmt_f64(*p)
            ));
        }
    }
    write_table(dir, "pressure.csv", "t,node_id,x,y,p", &rows)
}

/// Writes boundary residuals, identified constants, and multiplier fluxes.
pub fn write_boundary(dir: &Path, rep: &BoundaryReport) -> Result<()> {
    let mut rows = Vec::new();
    for (pi, w) in rep.wall_residual.iter().enumerate() {
        rows.push(format!("wall_residual,{pi},,,{}", fmt_f64(*w)));
    }
    for (pi, o) in rep.outlet_residual.iter().enumerate() {
        rows.push(format!("outlet_residual,{pi},,,{}", fmt_f64(*o)));
    }
    for (pi, per_psi) in rep.constants.iter().enumerate() {
        for (oi, per_outlet) in per_psi.iter().enumerate() {
            for (ei, c) in per_outlet.iter().enumerate() {
                rows.push(format!("constant,{pi},{oi},{ei},{}", fmt_f64(*c)));
            }
        }
    }
    for (oi, per_outlet) in rep.eta_fluxes.iter().enumerate() {
        for (ei, f) in per_outlet.iter().enumerate() {
            rows.push(format!("eta_flux,,{oi},{ei},{}", fmt_f64(*f)));
        }
    }
    write_table(dir, "boundary.csv", "kind,psi,outlet,eta,value", &rows)
}

fn write_vtk_frames(dir: &Path, mesh: &ChannelMesh, traj: &Trajectory, t_obs: f64) -> Result<()> {
    let ht = traj.ht();
    for k in 0..traj.n_time_nodes() {
        let t = k as f64 * ht;
        if t > t_obs * (1.0 + 1e-12) {
            break;
        }
        let s = write_vtk(mesh, Some(("velocity", traj.at(k))));
        let path = dir.join(format!("velocity_{k:04}.vtk"));
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Recomputes diagnostics for a stored trajectory under a config's physics.
pub fn diagnose(cfg: &RunConfig, bundle: &crate::io::TrajectoryBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mesh = &bundle.mesh;
    let traj = &bundle.traj;
    let params = cfg.params();
    let forcing_spec = cfg.forcing;
    let forcing = move |x: [f64; 2], t: f64| forcing_spec.eval(x, t);
    let horizon = traj.horizon();
    let t_obs = cfg.t_obs.min(horizon);

    let energy = energy_report(mesh, traj, &params, t_obs)?;
    let mut energy_row = fmt_f64(params.eps);
    let mut header = String::from("eps");
    for (name, v) in energy.rows() {
        header.push(',');
        header.push_str(name);
        energy_row.push(',');
        energy_row.push_str(&fmt_f64(v));
    }
    write_table(dir, "energy.csv", &header, &[energy_row])?;

    let ht = traj.ht();
    let d_values: Vec<f64> = (0..traj.n_time_nodes())
        .map(|k| cfg.d.eval(k as f64 * ht))
        .collect();
    let pressure = reconstruct_pressure(mesh, traj, &params, &forcing, &d_values)?;
    write_pressure(dir, mesh, &pressure, t_obs)?;

    let bumps = default_bumps(t_obs);
    let etas = default_eta_profiles();
    let boundary = boundary_report(mesh, traj, &pressure, &params, &forcing, t_obs, &bumps, &etas)?;
    write_boundary(dir, &boundary)?;

    let korn = estimate_korn_constant(mesh, params.r.max(2.0), cfg.seed)?;
    println!(
        "coercivity-ratio lower bound (p = {}): {}",
        params.r.max(2.0),
        fmt_f64(korn.ratio)
    );
    let wall_max = boundary.wall_residual.iter().cloned().fold(0.0, f64::max);
    let outlet_max = boundary.outlet_residual.iter().cloned().fold(0.0, f64::max);
    println!("wall residual (max over windows): {}", fmt_f64(wall_max));
    println!("outlet residual (max over windows): {}", fmt_f64(outlet_max));
    println!("pressure mean residual: {}", fmt_f64(pressure.max_mean_residual()));
    println!("diagnostics written to {}", dir.display());
    Ok(())
}

/// Compares two stored trajectories on a shared mesh and time grid.
pub fn compare(a: &crate::io::TrajectoryBundle, b: &crate::io::TrajectoryBundle) -> Result<()> {
    let ma = &a.mesh;
    let mb = &b.mesh;
    if ma.nx != mb.nx
        || ma.ny != mb.ny
        || (ma.length - mb.length).abs() > 1e-12
        || (ma.height - mb.height).abs() > 1e-12
        || ma.layout != mb.layout
    {
        return Err(anyhow!("trajectories use different meshes"));
    }
    if (a.traj.ht() - b.traj.ht()).abs() > 1e-12 * a.traj.ht() {
        return Err(anyhow!("trajectories use different time steps"));
    }
    let window = a.traj.horizon().min(b.traj.horizon());
    let dist = trajectory_l2_distance(ma, &a.traj, &b.traj, window)?;
    let norm_a = trajectory_l2_norm(ma, &a.traj, window)?;
    let norm_b = trajectory_l2_norm(mb, &b.traj, window)?;
    let mut max_node = 0.0f64;
    let nodes = a.traj.n_time_nodes().min(b.traj.n_time_nodes());
    for k in 0..nodes {
        for (x, y) in a.traj.at(k).iter().zip(b.traj.at(k)) {
            max_node = max_node.max((x - y).abs());
        }
    }
    println!("window: (0, {})", fmt_f64(window));
    println!("space_time_l2_distance: {}", fmt_f64(dist));
    println!("norm_a: {}", fmt_f64(norm_a));
    println!("norm_b: {}", fmt_f64(norm_b));
    println!("max_nodal_difference: {}", fmt_f64(max_node));
    Ok(())
}
