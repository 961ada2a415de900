//! Evaluation: independent curve-fitting oracles, rank statistics,
//! MAE reports, and figure-style exports of reconstructed point sets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoenc::AeRecord;
use crate::classes::{ClassSpec, Point2};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mae::{exec_loss, reconstruct, ExecLossConfig, MaeModel};
use crate::nngraph::NetModel;
use crate::par;

/// Least-squares slope of a line through the origin: a = Σxy / Σx².
pub fn fit_line_slope(points: &[Point2]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::contract("cannot fit a line to zero points"));
    }
    let sxx: f64 = points.iter().map(|p| p.x * p.x).sum();
    let sxy: f64 = points.iter().map(|p| p.x * p.y).sum();
    if sxx < 1e-12 {
        return Err(Error::contract("all x near zero; slope is undefined"));
    }
    Ok(sxy / sxx)
}

/// Result of an algebraic circle fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: Point2,
    pub radius: f64,
}

/// Kåsa algebraic circle fit: minimizes Σ(x² + y² + Dx + Ey + F)² and
/// reads the circle off the quadric, solving the 3×3 normal equations
///
///   [Sxx Sxy Sx] [D]   [Sxz]
///   [Sxy Syy Sy] [E] = -[Syz]   with z = x² + y².
///   [Sx  Sy  n ] [F]   [Sz ]
pub fn fit_circle(points: &[Point2]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::contract("need at least 3 points to fit a circle"));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sz, mut sxz, mut syz) = (0.0, 0.0, 0.0);
    for p in points {
        let z = p.x * p.x + p.y * p.y;
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
        sz += z;
        sxz += p.x * z;
        syz += p.y * z;
    }
    let a = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let rhs = [-sxz, -syz, -sz];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&a);
    // scale-aware singularity test: collinear points make the system rank 2
    if det.abs() < 1e-9 * (n * sxx.max(syy).max(1.0)).powi(3).max(1.0) * f64::EPSILON {
        return Err(Error::contract("points are degenerate (collinear?)"));
    }
    let solve_col = |col: usize| {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = rhs[row];
        }
        det3(&m) / det
    };
    let d = solve_col(0);
    let e = solve_col(1);
    let f = solve_col(2);
    let r2 = d * d / 4.0 + e * e / 4.0 - f;
    if !(r2 > 0.0) {
        return Err(Error::contract("fit produced a non-positive radius"));
    }
    Ok(CircleFit {
        center: Point2::new(-d / 2.0, -e / 2.0),
        radius: r2.sqrt(),
    })
}

/// Least-squares radius of a circle whose center is known to be the
/// origin: r = mean‖p‖. For the circle/arc families here the center is
/// part of the family definition, and this estimate stays well-behaved
/// where the free-center fit does not — on a short arc, [`fit_circle`]
/// amplifies point noise by roughly the inverse square of the covered
/// angle fraction.
pub fn fit_radius_origin(points: &[Point2]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::contract("cannot fit a radius to zero points"));
    }
    Ok(points.iter().map(|p| p.x.hypot(p.y)).sum::<f64>() / points.len() as f64)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::contract(
            "spearman needs two equal-length samples of size >= 2",
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the tie; assign their mean
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::contract("constant sample has no rank correlation"));
    }
    Ok(cov / (va * vb).sqrt())
}

/// One test record's evaluation: the execution RMSE of the MAE's
/// reconstruction (square root of the mean squared probe distance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub class_label: String,
    pub class_spec: ClassSpec,
    pub seed: u64,
    pub exec_rmse: f64,
}

/// Per-record rows plus aggregates and a per-class breakdown (classes in
/// first-appearance order, each with its mean exec RMSE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub per_class: Vec<(String, f64)>,
}

/// Evaluates an MAE over a held-out corpus: reconstruct each record,
/// score it with the execution loss, aggregate. Deterministic; rows keep
/// corpus order.
pub fn eval_mae(
    mae: &MaeModel,
    corpus_test: &Corpus,
    cfg: &ExecLossConfig,
    parallel: bool,
) -> Result<EvalReport> {
    if corpus_test.is_empty() {
        return Err(Error::contract("cannot evaluate over an empty corpus"));
    }
    let rows_res = par::map_indexed(
        &corpus_test.records,
        parallel,
        |_, rec| -> Result<EvalRow> {
            let model = reconstruct(mae, rec)?;
            let (loss, _) = exec_loss(rec, &model, cfg)?;
            Ok(EvalRow {
                class_label: rec.class_spec.label(),
                class_spec: rec.class_spec,
                seed: rec.train_stats.seed,
                exec_rmse: loss.sqrt(),
            })
        },
    );
    let rows: Vec<EvalRow> = rows_res.into_iter().collect::<Result<_>>()?;

    let mut sorted: Vec<f64> = rows.iter().map(|r| r.exec_rmse).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let max = sorted[n - 1];

    let mut per_class: Vec<(String, Vec<f64>)> = Vec::new();
    for row in &rows {
        match per_class.iter_mut().find(|(l, _)| *l == row.class_label) {
            Some((_, v)) => v.push(row.exec_rmse),
            None => per_class.push((row.class_label.clone(), vec![row.exec_rmse])),
        }
    }
    let per_class = per_class
        .into_iter()
        .map(|(l, v)| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (l, m)
        })
        .collect();

    Ok(EvalReport {
        rows,
        mean,
        median,
        max,
        per_class,
    })
}

/// Writes a three-panel figure set for one record: the sampled class points,
/// the input AE's reconstructions, and the reconstructed (output) AE's
/// reconstructions, as three CSV files plus one SVG scatter panel.
/// Returns the paths written.
pub fn emit_points_figure(
    rec: &AeRecord,
    output_model: &NetModel,
    n: usize,
    seed: u64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    use rand::SeedableRng;
    if n == 0 {
        return Err(Error::contract("need at least one point to plot"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let original = rec.class_spec.sample_points(n, &mut rng);
    let run = |model: &NetModel| -> Result<Vec<Point2>> {
        original
            .iter()
            .map(|p| {
                let o = model.forward(&[p.x, p.y])?;
                Ok(Point2::new(o[0], o[1]))
            })
            .collect()
    };
    let input_recon = run(&rec.model)?;
    let output_recon = run(output_model)?;

    fs::create_dir_all(dir)?;
    let label = rec.class_spec.label();
    let mut written = Vec::new();
    for (suffix, pts) in [
        ("original", &original),
        ("input_ae", &input_recon),
        ("output_ae", &output_recon),
    ] {
        let path = dir.join(format!("{label}_{suffix}.csv"));
        let mut body = String::from("x,y\n");
        for p in pts {
            body.push_str(&format!("{},{}\n", p.x, p.y));
        }
        fs::write(&path, body)?;
        written.push(path);
    }
    let svg_path = dir.join(format!("{label}_figure.svg"));
    fs::write(
        &svg_path,
        triptych_svg(&[
            ("original", &original),
            ("input AE", &input_recon),
            ("output AE", &output_recon),
        ]),
    )?;
    written.push(svg_path);
    Ok(written)
}

/// Minimal hand-rolled SVG: three 300×300 scatter panels side by side,
/// all sharing one data scale.
fn triptych_svg(panels: &[(&str, &Vec<Point2>)]) -> String {
    let all = panels.iter().flat_map(|(_, pts)| pts.iter());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        lo = lo.min(p.x).min(p.y);
        hi = hi.max(p.x).max(p.y);
    }
    if !lo.is_finite() || !hi.is_finite() || lo == hi {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let scale = 300.0 / (hi - lo);
    let mut svg = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"300\" \
         viewBox=\"0 0 900 300\">\n",
    );
    for (k, (title, pts)) in panels.iter().enumerate() {
        let x0 = k as f64 * 300.0;
        svg.push_str(&format!(
            "<rect x=\"{x0}\" y=\"0\" width=\"300\" height=\"300\" fill=\"white\" \
             stroke=\"#888\"/>\n<text x=\"{}\" y=\"16\" font-size=\"12\" \
             text-anchor=\"middle\">{title}</text>\n",
            x0 + 150.0
        ));
        for p in pts.iter() {
            let cx = x0 + (p.x - lo) * scale;
            let cy = 300.0 - (p.y - lo) * scale;
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2\" fill=\"#1f77b4\" \
                 fill-opacity=\"0.6\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
