//! Tile decoupling: the locally centered statistic max (phi - X_{R,-}) over
//! disjoint tiles behaves like independent trials.

use super::{Check, Estimate, ExperimentReport};
use crate::error::{Error, Result};
use crate::harmonic::{circle_kernel, SmoothingWindow};
use crate::lattice::site;
use crate::source::Source;
use crate::stats;

pub struct TileDecoupling {
    pub eta_tile: f64,
    pub tile_side: usize,
    pub n_tiles_total: usize,
    pub n_tiles_used: usize,
    pub threshold: f64,
    pub max_abs_corr_nonadjacent: f64,
    pub corr_3se: f64,
    pub p_max_exceeds: f64,
}

/// Tiles the box with disjoint squares of side ~ N^(1 - eta), computes
/// S_i = max over the concentric half tile of phi(v) - X_{R,-}(v) with
/// R = N^(1-eta)/2, and reports pairwise correlations plus the exceedance
/// frequency of max_i S_i.
pub fn tile_decoupling(
    source: &Source<'_>,
    eta_tile: f64,
    beta: f64,
    g: f64,
    epsilon: f64,
    boot_seed: u64,
) -> Result<(TileDecoupling, ExperimentReport)> {
    let _ = boot_seed;
    if !(eta_tile > 0.0 && eta_tile < 1.0) {
        return Err(Error::Parameter("eta_tile must lie in (0,1)".into()));
    }
    let domain = source.domain();
    let n_half = domain.half_width();
    let side = domain.side() as i32;
    let tile_side = (n_half as f64).powf(1.0 - eta_tile).floor() as i32;
    if tile_side < 16 {
        return Err(Error::Parameter(format!("tiles of side {tile_side} are below 16x16 sites")));
    }
    let tiles_per_axis = side / tile_side;
    if tiles_per_axis < 1 {
        return Err(Error::Parameter("domain smaller than one tile".into()));
    }
    // smoothing window at R_- = (1 - eps^3)(tile_side/2)
    let r_big = 0.5 * tile_side as f64;
    let r_minus = (1.0 - epsilon.powi(3)) * r_big;
    let width = (epsilon.powi(4)).max(1.8 / r_minus).min(0.5);
    let window = SmoothingWindow::raised_cosine(r_minus, width)?;
    let max_q = window.max_ball_param();

    // tile centers and half-size inner boxes, keeping only tiles whose inner
    // box has clearance for the window everywhere
    let mut inner_boxes: Vec<(i32, i32)> = Vec::new(); // center coordinates
    let mut n_total = 0usize;
    let quarter = tile_side / 4;
    for ti in 0..tiles_per_axis {
        for tj in 0..tiles_per_axis {
            n_total += 1;
            let cx = -n_half + ti * tile_side + tile_side / 2;
            let cy = -n_half + tj * tile_side + tile_side / 2;
            let worst_dist = n_half
                - (cx.abs() + quarter).max((cy.abs() + quarter).max(0));
            if worst_dist >= max_q as i32 {
                inner_boxes.push((cx, cy));
            }
        }
    }
    if inner_boxes.is_empty() {
        return Err(Error::Parameter("no usable tiles; lower eta_tile".into()));
    }
    // flattened window kernel (offsets/weights over all radii)
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for (&r, &fw) in window.radii().iter().zip(window.weights()) {
        let k = circle_kernel(r - 1)?;
        for (off, w) in k.offsets.iter().zip(&k.weights) {
            offsets.push((off.x, off.y));
            weights.push(fw * w);
        }
    }

    let log_n = (n_half as f64).ln();
    let threshold = (1.0 - 2.0 * beta) * (1.0 - eta_tile) * 2.0 * g.sqrt() * log_n;
    let boxes = inner_boxes.clone();
    let run = source.run(&|f| {
        let values = f.values();
        boxes
            .iter()
            .map(|&(cx, cy)| {
                let mut best = f64::NEG_INFINITY;
                for dx in -quarter..=quarter {
                    for dy in -quarter..=quarter {
                        let v = site(cx + dx, cy + dy);
                        let mut x = 0.0;
                        for (off, w) in offsets.iter().zip(&weights) {
                            x += w * values[domain.index(site(v.x + off.0, v.y + off.1))];
                        }
                        best = best.max(values[domain.index(v)] - x);
                    }
                }
                best
            })
            .collect()
    })?;
    let n_fields = run.per_field.len();
    let m = inner_boxes.len();
    // pairwise correlations for non-adjacent tiles
    let means: Vec<f64> =
        (0..m).map(|i| stats::mean(&run.per_field.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    let sds: Vec<f64> = (0..m)
        .map(|i| stats::variance(&run.per_field.iter().map(|r| r[i]).collect::<Vec<_>>()).sqrt())
        .collect();
    let mut max_abs_corr = 0.0f64;
    for a in 0..m {
        for b in a + 1..m {
            let (ax, ay) = inner_boxes[a];
            let (bx, by) = inner_boxes[b];
            let adjacent =
                (ax - bx).abs() <= tile_side && (ay - by).abs() <= tile_side;
            if adjacent {
                continue;
            }
            let mut num = 0.0;
            for row in &run.per_field {
                num += (row[a] - means[a]) * (row[b] - means[b]);
            }
            let corr = num / ((n_fields as f64 - 1.0) * sds[a] * sds[b]);
            max_abs_corr = max_abs_corr.max(corr.abs());
        }
    }
    let corr_3se = 3.0 / (run.ess.min(n_fields as f64)).sqrt();
    let p_max = run
        .per_field
        .iter()
        .filter(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= threshold)
        .count() as f64
        / n_fields as f64;

    let out = TileDecoupling {
        eta_tile,
        tile_side: tile_side as usize,
        n_tiles_total: n_total,
        n_tiles_used: m,
        threshold,
        max_abs_corr_nonadjacent: max_abs_corr,
        corr_3se,
        p_max_exceeds: p_max,
    };
    let mut report = ExperimentReport::new(
        "tiles",
        serde_json::json!({
            "eta_tile": eta_tile, "beta": beta, "g": g,
            "tile_side": tile_side, "tiles_used": m, "tiles_total": n_total,
            "threshold": threshold
        }),
    );
    report.estimates.push(Estimate::with_se(
        "max_abs_corr_nonadjacent",
        max_abs_corr,
        corr_3se / 3.0,
    ));
    report.estimates.push(Estimate::with_se(
        "p_max_exceeds_threshold",
        p_max,
        (p_max * (1.0 - p_max) / n_fields as f64).sqrt().max(1.0 / n_fields as f64),
    ));
    report.checks.push(Check::new(
        "nonadjacent_tiles_uncorrelated",
        max_abs_corr <= corr_3se,
        format!("max |corr| {max_abs_corr:.4} vs 3se {corr_3se:.4}"),
    ));
    report.csv_columns = (0..m).map(|i| format!("s_{i}")).collect();
    report.csv_rows = run.per_field.clone();
    Ok((out, report))
}
