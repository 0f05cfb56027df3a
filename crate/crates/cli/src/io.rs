//! Artifact files: trajectory CSVs with companion metadata, diagnostic
//! tables, and optional VTK frames.  All floating-point values are printed
//! with 17 significant digits so files round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use widechannel::{build_rect_channel, ChannelMesh, TagLayout, Trajectory};

use crate::config::RawMap;

/// Formats one float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A trajectory together with the mesh description it was sampled on.
pub struct TrajectoryBundle {
    pub mesh: ChannelMesh,
    pub traj: Trajectory,
}

/// Writes `stem.csv` (columns `t,node_id,x,y,vx,vy`, time-major) and
/// `stem.meta` next to it, restricted to time nodes with `t <= t_max`.
pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    mesh: &ChannelMesh,
    traj: &Trajectory,
    t_max: f64,
) -> Result<PathBuf> {
    let ht = traj.ht();
    let n_keep = traj
        .n_time_nodes()
        .min((t_max / ht * (1.0 + 1e-12)).floor() as usize + 1);
    let mut csv = String::from("t,node_id,x,y,vx,vy\n");
    for k in 0..n_keep {
        let t = k as f64 * ht;
        let node = traj.at(k);
        for id in 0..mesh.n_nodes() {
            let [x, y] = mesh.node(id);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_f64(t),
                id,
                fmt_f64(x),
                fmt_f64(y),
                fmt_f64(node[2 * id]),
                fmt_f64(node[2 * id + 1])
            );
        }
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    let mut meta = String::new();
    let _ = writeln!(meta, "geometry.nx = {}", mesh.nx);
    let _ = writeln!(meta, "geometry.ny = {}", mesh.ny);
    let _ = writeln!(meta, "geometry.length = {}", mesh.length);
    let _ = writeln!(meta, "geometry.height = {}", mesh.height);
    let _ = writeln!(
        meta,
        "geometry.layout = {}",
        match mesh.layout {
            TagLayout::SingleOutlet => "single_outlet",
            TagLayout::TwoOutlet => "two_outlet",
        }
    );
    let _ = writeln!(meta, "trajectory.ht = {ht}");
    let _ = writeln!(meta, "trajectory.time_nodes = {n_keep}");
    let meta_path = dir.join(format!("{stem}.meta"));
    fs::write(&meta_path, meta).with_context(|| format!("writing {}", meta_path.display()))?;
    Ok(csv_path)
}

/// Reads a trajectory CSV written by [`write_trajectory`], using the
/// companion `.meta` file to rebuild the mesh.
pub fn read_trajectory(csv_path: &Path) -> Result<TrajectoryBundle> {
    let meta_path = csv_path.with_extension("meta");
    let meta_text = fs::read_to_string(&meta_path)
        .with_context(|| format!("reading {}", meta_path.display()))?;
    let mut raw = RawMap::parse(&meta_text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", meta_path.display()))?;
    let mut errs = Vec::new();
    let nx = raw.take_usize("geometry.nx", None, &mut errs);
    let ny = raw.take_usize("geometry.ny", None, &mut errs);
    let length = raw.take_f64("geometry.length", None, &mut errs);
    let height = raw.take_f64("geometry.height", None, &mut errs);
    let layout_name = raw.take_string("geometry.layout", None, &mut errs);
    let ht = raw.take_f64("trajectory.ht", None, &mut errs);
    let time_nodes = raw.take_usize("trajectory.time_nodes", None, &mut errs);
    if !errs.is_empty() {
        bail!("{}: {}", meta_path.display(), errs.join("; "));
    }
    let layout = match layout_name.as_str() {
        "single_outlet" => TagLayout::SingleOutlet,
        "two_outlet" => TagLayout::TwoOutlet,
        other => bail!("{}: unknown layout '{other}'", meta_path.display()),
    };
    if time_nodes < 2 {
        bail!("{}: trajectory needs at least two time nodes", meta_path.display());
    }
    let mesh = build_rect_channel(nx, ny, length, height, layout)?;

    let text =
        fs::read_to_string(csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("t,node_id,x,y,vx,vy") => {}
        _ => bail!("{}: missing trajectory header", csv_path.display()),
    }
    let mut traj = Trajectory::zeros(mesh.n_dofs(), time_nodes - 1, ht)?;
    let mut count = 0usize;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            bail!("{}: row {} has {} columns", csv_path.display(), idx + 2, cols.len());
        }
        let id: usize = cols[1].parse().with_context(|| format!("row {}", idx + 2))?;
        let vx: f64 = cols[4].parse().with_context(|| format!("row {}", idx + 2))?;
        let vy: f64 = cols[5].parse().with_context(|| format!("row {}", idx + 2))?;
        let k = count / mesh.n_nodes();
        let expect_id = count % mesh.n_nodes();
        if id != expect_id || k >= time_nodes {
            bail!(
                "{}: row {} out of order (node {id}, expected {expect_id})",
                csv_path.display(),
                idx + 2
            );
        }
        let node = traj.at_mut(k);
        node[2 * id] = vx;
        node[2 * id + 1] = vy;
        count += 1;
    }
    if count != time_nodes * mesh.n_nodes() {
        bail!(
            "{}: expected {} rows, found {count}",
            csv_path.display(),
            time_nodes * mesh.n_nodes()
        );
    }
    Ok(TrajectoryBundle { mesh, traj })
}

/// Writes a small named CSV given a header and preformatted rows.
pub fn write_table(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
}
