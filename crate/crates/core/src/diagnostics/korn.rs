//! Coercivity-ratio probe: a lower bound on the constant tying the full
//! gradient to the symmetric gradient plus boundary control.
//!
//! The estimates behind the solver rely on an inequality of the form
//!
//! ```text
//! int |grad w|^p + |w|^p  <=  c_p ( int |Dw|^p + int_walls |w|^p )
//! ```
//!
//! over fields that vanish on the inflow boundary, are impermeable at the
//! walls, and carry no net flux through any outlet.  The best constant is
//! the supremum of the left-to-right ratio; this module evaluates that
//! ratio for given fields and searches for large values by projected
//! gradient ascent from seeded random starts.  The search result is a
//! certified lower bound on `c_p` only — reported as such.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryTag, ChannelMesh};
use crate::operators::{cell_quadrature, edge_gauss, CellQuad};

/// Outcome of the ratio maximization.
#[derive(Debug, Clone)]
pub struct KornEstimate {
    /// Largest ratio found: a lower bound on the coercivity constant.
    pub ratio: f64,
    /// Number of random starts searched.
    pub starts: usize,
    /// Ascent iterations per start.
    pub iterations: usize,
}

struct Workspace {
    quad: CellQuad,
    /// Wall-edge Gauss points as (nodes, shape values, weight).
    wall_points: Vec<([usize; 2], [f64; 2], f64)>,
    pinned: Vec<bool>,
    flux_rows: Vec<Vec<(usize, f64)>>,
}

impl Workspace {
    fn new(mesh: &ChannelMesh) -> Self {
        let quad = cell_quadrature(mesh);
        let mut wall_points = Vec::new();
        for e in mesh.boundary_edges() {
            if e.tag != BoundaryTag::Wall {
                continue;
            }
            for (s, frac) in edge_gauss() {
                wall_points.push((e.nodes, [1.0 - s, s], frac * e.len));
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
        let flux_rows = (0..mesh.n_outlets())
            .map(|o| mesh.outlet_flux_row(o as u8))
            .collect();
        Self {
            quad,
            wall_points,
            pinned,
            flux_rows,
        }
    }

    fn project_tangent(&self, w: &mut [f64]) {
        for (d, p) in self.pinned.iter().enumerate() {
            if *p {
                w[d] = 0.0;
            }
        }
        for row in &self.flux_rows {
            let norm_sq: f64 = row.iter().map(|&(_, c)| c * c).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let dot: f64 = row.iter().map(|&(d, c)| c * w[d]).sum();
            let corr = dot / norm_sq;
            for &(d, c) in row {
                w[d] -= corr * c;
            }
        }
    }
}

/// Numerator, denominator, and their gradients for the ratio at `w`.
fn parts(
    mesh: &ChannelMesh,
    ws: &Workspace,
    w: &[f64],
    p: f64,
    grad: Option<(&mut [f64], &mut [f64])>,
) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut grads = grad;
    for c in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(c);
        for q in 0..4 {
            let wq = ws.quad.weights[q];
            let nv = &ws.quad.shape[q];
            let dx = &ws.quad.dshape_dx[q];
            let dy = &ws.quad.dshape_dy[q];
            let mut val = [0.0f64; 2];
            let mut g = [[0.0f64; 2]; 2];
            for i in 0..4 {
                for comp in 0..2 {
                    let wi = w[2 * nodes[i] + comp];
                    val[comp] += nv[i] * wi;
                    g[comp][0] += dx[i] * wi;
                    g[comp][1] += dy[i] * wi;
                }
            }
            let grad_sq = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0]
                + g[1][1] * g[1][1];
            let val_sq = val[0] * val[0] + val[1] * val[1];
            let dsym = [
                g[0][0],
                g[1][1],
                0.5 * (g[0][1] + g[1][0]),
            ];
            let sym_sq = dsym[0] * dsym[0] + dsym[1] * dsym[1] + 2.0 * dsym[2] * dsym[2];
            num += wq * (grad_sq.powf(0.5 * p) + val_sq.powf(0.5 * p));
            den += wq * sym_sq.powf(0.5 * p);
            if let Some((gn, gd)) = grads.as_mut() {
                // d/dX (|X|^2)^{p/2} = p (|X|^2)^{(p-2)/2} X
                let cg = if grad_sq > 0.0 {
                    p * grad_sq.powf(0.5 * p - 1.0)
                } else {
                    0.0
                };
                let cv = if val_sq > 0.0 {
                    p * val_sq.powf(0.5 * p - 1.0)
                } else {
                    0.0
                };
                let cs = if sym_sq > 0.0 {
                    p * sym_sq.powf(0.5 * p - 1.0)
                } else {
                    0.0
                };
                for i in 0..4 {
                    for comp in 0..2 {
                        let dof = 2 * nodes[i] + comp;
                        let dgrad = g[comp][0] * dx[i] + g[comp][1] * dy[i];
                        gn[dof] += wq * (cg * dgrad + cv * val[comp] * nv[i]);
                        // Variation of 0.5(g01+g10) hits both components.
                        let dsym_pair = dsym[comp] * if comp == 0 { dx[i] } else { dy[i] }
                            + dsym[2] * if comp == 0 { dy[i] } else { dx[i] };
                        gd[dof] += wq * cs * dsym_pair;
                    }
                }
            }
        }
    }
    for (nodes, shape, wq) in &ws.wall_points {
        let mut val = [0.0f64; 2];
        for i in 0..2 {
            val[0] += shape[i] * w[2 * nodes[i]];
            val[1] += shape[i] * w[2 * nodes[i] + 1];
        }
        let val_sq = val[0] * val[0] + val[1] * val[1];
        den += wq * val_sq.powf(0.5 * p);
        if let Some((_, gd)) = grads.as_mut() {
            let cv = if val_sq > 0.0 {
                p * val_sq.powf(0.5 * p - 1.0)
            } else {
                0.0
            };
            for i in 0..2 {
                for comp in 0..2 {
                    gd[2 * nodes[i] + comp] += wq * cv * val[comp] * shape[i];
                }
            }
        }
    }
    (num, den)
}

fn validate_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponent must be finite and > 1, got {p}"
        )));
    }
    Ok(())
}

/// Ratio `(int |grad w|^p + |w|^p) / (int |Dw|^p + int_walls |w|^p)` for a
/// given nodal field; no admissibility filtering is applied.
pub fn korn_ratio(mesh: &ChannelMesh, field: &[f64], p: f64) -> Result<f64> {
    validate_p(p)?;
    if field.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} dofs, mesh has {}",
            field.len(),
            mesh.n_dofs()
        )));
    }
    let ws = Workspace::new(mesh);
    let (num, den) = parts(mesh, &ws, field, p, None);
    if den <= 0.0 {
        return Err(Error::InvalidParameter(
            "denominator vanishes for this field".into(),
        ));
    }
    Ok(num / den)
}

/// Searches for the largest ratio over admissible fields by projected
/// gradient ascent from `starts` seeded random starts; the result is a
/// lower bound on the coercivity constant.
pub fn estimate_korn_constant(mesh: &ChannelMesh, p: f64, seed: u64) -> Result<KornEstimate> {
    validate_p(p)?;
    let ws = Workspace::new(mesh);
    let n = mesh.n_dofs();
    let starts = 20;
    let iterations = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;

    for _ in 0..starts {
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ws.project_tangent(&mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for x in &mut w {
            *x /= norm;
        }
        let mut gn = vec![0.0; n];
        let mut gd = vec![0.0; n];
        let mut step = 0.5;
        let (mut num, mut den) = parts(mesh, &ws, &w, p, None);
        if den <= 0.0 {
            continue;
        }
        let mut ratio = num / den;
        for _ in 0..iterations {
            gn.iter_mut().for_each(|x| *x = 0.0);
            gd.iter_mut().for_each(|x| *x = 0.0);
            let _ = parts(mesh, &ws, &w, p, Some((&mut gn, &mut gd)));
            // Ascent direction of num/den.
            let mut dir: Vec<f64> = gn
                .iter()
                .zip(&gd)
                .map(|(a, b)| (a - ratio * b) / den)
                .collect();
            ws.project_tangent(&mut dir);
            let dir_norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if dir_norm < 1e-14 * (1.0 + ratio) {
                break;
            }
            let mut trial: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let tnorm = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut trial {
                *x /= tnorm;
            }
            let (tn, td) = parts(mesh, &ws, &trial, p, None);
            if td > 0.0 && tn / td > ratio {
                w = trial;
                num = tn;
                den = td;
                ratio = num / den;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
        let _ = num;
        best = best.max(ratio);
    }

    if best <= 0.0 {
        return Err(Error::SingularSystem(
            "no admissible start produced a positive ratio".into(),
        ));
    }
    Ok(KornEstimate {
        ratio: best,
        starts,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rect_channel, TagLayout};

    /// `w = (x, 0)` on the unit square with walls at top and bottom:
    /// numerator `1 + 1/3`, denominator `1 + 2/3`, ratio `4/5`, all terms
    /// integrated exactly by the quadrature.
    #[test]
    fn linear_field_matches_hand_quadrature() {
        let mesh = build_rect_channel(5, 5, 1.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let mut field = vec![0.0; mesh.n_dofs()];
        for id in 0..mesh.n_nodes() {
            let [x, _y] = mesh.node(id);
            field[2 * id] = x;
        }
        let ratio = korn_ratio(&mesh, &field, 2.0).unwrap();
        assert!(
            (ratio - 0.8).abs() <= 1e-12,
            "ratio {ratio} differs from 4/5"
        );
    }

    /// A rigid translation has zero symmetric gradient, but the inflow
    /// pinning makes it inadmissible, so the searched ratio stays finite.
    #[test]
    fn translations_cannot_blow_up_the_estimate() {
        let mesh = build_rect_channel(6, 3, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let est = estimate_korn_constant(&mesh, 2.0, 42).unwrap();
        assert!(est.ratio.is_finite() && est.ratio > 0.0);
        // The estimate dominates any single admissible candidate it could
        // have found, and stays well below the blow-up regime.
        assert!(est.ratio < 1e3, "ratio {} suspiciously large", est.ratio);
    }

    /// Different seeds must land on (nearly) the same discrete maximum,
    /// and dyadic refinement nests the search spaces, so the bound can
    /// only improve — while staying finite.
    #[test]
    fn estimate_is_seed_robust_and_grows_under_refinement() {
        let coarse = build_rect_channel(8, 4, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let fine = build_rect_channel(16, 8, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let a = estimate_korn_constant(&coarse, 2.0, 42).unwrap().ratio;
        let a2 = estimate_korn_constant(&coarse, 2.0, 7).unwrap().ratio;
        assert!(
            (a - a2).abs() <= 0.05 * a.max(a2),
            "seeds disagree: {a} vs {a2}"
        );
        let b = estimate_korn_constant(&fine, 2.0, 42).unwrap().ratio;
        assert!(b >= 0.98 * a, "refinement lost ground: {a} -> {b}");
        assert!(b <= 3.0 * a, "refinement blew up: {a} -> {b}");
    }

    #[test]
    fn rejects_bad_exponents_and_shapes() {
        let mesh = build_rect_channel(4, 2, 2.0, 1.0, TagLayout::SingleOutlet).unwrap();
        let field = vec![0.0; mesh.n_dofs()];
        assert!(korn_ratio(&mesh, &field, 1.0).is_err());
        assert!(korn_ratio(&mesh, &field[..4], 2.0).is_err());
        // Zero field: denominator vanishes.
        assert!(korn_ratio(&mesh, &field, 2.0).is_err());
    }
}
