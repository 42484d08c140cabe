//! Per-coordinate histograms with the analytic stationary density overlaid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use inert_core::simulate::TrajectoryBatch;
use inert_core::stationary::StationaryMeasure;

use crate::error::{SimError, SimResult};
use crate::io::{write_histogram, write_text, Bin};

pub fn bin_counts(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<Bin> {
    let w = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> =
        (0..bins).map(|i| Bin { lo: lo + w * i as f64, hi: if i + 1 == bins { hi } else { lo + w * (i + 1) as f64 }, count: 0 }).collect();
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let i = (((v - lo) / w) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Static SVG: bars scaled to a density, `curve` drawn as a polyline.
pub fn histogram_svg(title: &str, bins: &[Bin], total: usize, curve: &[(f64, f64)]) -> String {
    let lo = bins.first().map_or(0.0, |b| b.lo);
    let hi = bins.last().map_or(1.0, |b| b.hi);
    let heights: Vec<f64> = bins.iter().map(|b| b.count as f64 / (total.max(1) as f64 * (b.hi - b.lo))).collect();
    let top = heights.iter().chain(curve.iter().map(|(_, y)| y)).fold(0.0f64, |a, &b| a.max(b)).max(1e-12) * 1.1;
    let sx = |x: f64| MARGIN + (x - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / top * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    for (b, h) in bins.iter().zip(&heights) {
        let (x0, x1) = (sx(b.lo), sx(b.hi));
        let y = sy(*h);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#9ab" stroke="#567"/>"##,
            x1 - x0,
            HEIGHT - MARGIN - y
        );
    }
    if !curve.is_empty() {
        let pts: Vec<String> = curve.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#c33" stroke-width="2"/>"##, pts.join(" "));
    }
    let base = HEIGHT - MARGIN;
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base}" stroke="black"/>"#);
    for (x, anchor) in [(lo, "start"), (hi, "end")] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{x:.3}</text>"#, sx(x), base + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{:.3}</text>"#, MARGIN - 4.0, sy(top / 1.1), top / 1.1);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `hist_x{i}` and `hist_k{i}` CSV and SVG files for every coordinate
/// and returns the paths written. X bins span the bounding box of the
/// domain; K bins span `+-4.5` stationary standard deviations.
pub fn emit_histograms<const D: usize>(
    batch: &TrajectoryBatch<D>,
    sm: &StationaryMeasure<D>,
    bins: usize,
    dir: &Path,
) -> SimResult<Vec<PathBuf>> {
    if bins < 2 {
        return Err(SimError::Config { field: "tests.bins".into(), message: "need at least 2 bins".into() });
    }
    if batch.is_empty() {
        return Err(inert_core::Error::EmptyBatch.into());
    }
    let n = batch.len();
    let (blo, bhi) = sm.coefficients().domain().bounding_box();
    let cov = sm.y_covariance();
    let mut written = Vec::new();
    let samples = 200;
    for axis in 0..D {
        let marginal = sm.x_marginal(axis)?;
        let counts = bin_counts(&batch.x_coordinate(axis), blo[axis], bhi[axis], bins);
        let curve: Vec<(f64, f64)> = (0..=samples)
            .map(|i| {
                let t = blo[axis] + (bhi[axis] - blo[axis]) * i as f64 / samples as f64;
                (t, marginal.pdf(t))
            })
            .collect();
        written.extend(emit_one(dir, &format!("x{}", axis + 1), &counts, n, &curve)?);

        let sd = cov[(axis, axis)].sqrt();
        let counts = bin_counts(&batch.k_coordinate(axis), -4.5 * sd, 4.5 * sd, bins);
        let curve: Vec<(f64, f64)> = (0..=samples)
            .map(|i| {
                let t = -4.5 * sd + 9.0 * sd * i as f64 / samples as f64;
                (t, (-0.5 * (t / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()))
            })
            .collect();
        written.extend(emit_one(dir, &format!("k{}", axis + 1), &counts, n, &curve)?);
    }
    Ok(written)
}

fn emit_one(dir: &Path, coord: &str, counts: &[Bin], n: usize, curve: &[(f64, f64)]) -> SimResult<[PathBuf; 2]> {
    let csv = dir.join(format!("hist_{coord}.csv"));
    let svg = dir.join(format!("hist_{coord}.svg"));
    write_histogram(&csv, counts)?;
    write_text(&svg, &histogram_svg(&format!("{coord}: histogram and stationary density"), counts, n, curve))?;
    Ok([csv, svg])
}

#[cfg(test)]
mod tests {
    use super::*;
    use inert_core::coefficients::{CoefficientSet, Gamma};
    use inert_core::geometry::Domain;
    use inert_core::stationary::sample_stationary;

    #[test]
    fn counts_cover_every_sample() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let b = bin_counts(&v, 0.0, 1.0, 20);
        assert_eq!(b.len(), 20);
        assert_eq!(b.iter().map(|b| b.count).sum::<u64>(), 1000);
        assert_eq!(b[19].hi, 1.0);
        assert!(b.iter().all(|b| (45..=55).contains(&b.count)));
    }

    #[test]
    fn uniform_histogram_and_svg() {
        let cs = CoefficientSet::new(Domain::<1>::interval(0.0, 1.0).unwrap(), Gamma::identity());
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        let batch = TrajectoryBatch::from_samples(&sample_stationary(&sm, 20_000, 3).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let files = emit_histograms(&batch, &sm, 20, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("hist_x1.csv")).unwrap();
        let counts: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(counts.len(), 20);
        // Near flat: each bin holds 1000 +- 5 binomial SDs.
        assert!(counts.iter().all(|c| (c - 1000.0).abs() < 5.0 * 1000f64.sqrt()), "{counts:?}");
        let svg = std::fs::read_to_string(dir.path().join("hist_k1.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
        assert_eq!(svg.matches("<rect").count(), 21);
    }

    #[test]
    fn bad_inputs() {
        let cs = CoefficientSet::new(Domain::<1>::interval(0.0, 1.0).unwrap(), Gamma::identity());
        let sm = StationaryMeasure::reflected(&cs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let empty = TrajectoryBatch::<1>::from_samples(&[]);
        assert!(matches!(emit_histograms(&empty, &sm, 20, dir.path()), Err(SimError::Core(inert_core::Error::EmptyBatch))));
        let one = TrajectoryBatch::from_samples(&sample_stationary(&sm, 10, 1).unwrap());
        assert!(matches!(emit_histograms(&one, &sm, 1, dir.path()), Err(SimError::Config { .. })));
    }
}
