//! Comparison and extraction machinery: trace-distance time series between
//! model tiers, moving-window time averages, exponential-decay fits of
//! ⟨σ_z⟩(t), parameter sweeps, and deterministic CSV/SVG emission.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CqedError;
use crate::operators::BlochVector;

// ---------------------------------------------------------------------------
// Trace distance between runs
// ---------------------------------------------------------------------------

/// Pointwise qubit trace distance between two runs on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub max: f64,
}

fn interp_bloch(times: &[f64], bloch: &[BlochVector], t: f64) -> BlochVector {
    // Linear interpolation; t is guaranteed inside [times[0], times[n-1]].
    let idx = match times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => return bloch[i],
        Err(i) => i.clamp(1, times.len() - 1),
    };
    let (t0, t1) = (times[idx - 1], times[idx]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    let (a, b) = (&bloch[idx - 1], &bloch[idx]);
    BlochVector {
        x: a.x + w * (b.x - a.x),
        y: a.y + w * (b.y - a.y),
        z: a.z + w * (b.z - a.z),
    }
}

/// Qubit trace distance ½|r_a − r_b| over time, with its maximum. If the
/// grids differ, the run with the coarser grid defines the sample points and
/// the other run is linearly interpolated; the overlap of the two time
/// ranges must be non-empty.
pub fn trace_distance_series(
    times_a: &[f64],
    bloch_a: &[BlochVector],
    times_b: &[f64],
    bloch_b: &[BlochVector],
) -> Result<DistanceSeries, CqedError> {
    if times_a.len() != bloch_a.len() || times_b.len() != bloch_b.len() {
        return Err(CqedError::InvalidInput(
            "times and Bloch series must have equal length".into(),
        ));
    }
    if times_a.is_empty() || times_b.is_empty() {
        return Err(CqedError::InvalidInput("empty series".into()));
    }
    let lo = times_a[0].max(times_b[0]);
    let hi = times_a[times_a.len() - 1].min(times_b[times_b.len() - 1]);
    if hi < lo {
        return Err(CqedError::InvalidInput(
            "time ranges of the two runs do not overlap".into(),
        ));
    }
    // Grid with the fewer points inside the overlap drives the sampling.
    let count = |ts: &[f64]| ts.iter().filter(|&&t| t >= lo && t <= hi).count();
    let base: Vec<f64> = if count(times_a) <= count(times_b) {
        times_a.iter().copied().filter(|&t| t >= lo && t <= hi).collect()
    } else {
        times_b.iter().copied().filter(|&t| t >= lo && t <= hi).collect()
    };
    let mut distance = Vec::with_capacity(base.len());
    let mut max = 0.0_f64;
    for &t in &base {
        let ra = interp_bloch(times_a, bloch_a, t);
        let rb = interp_bloch(times_b, bloch_b, t);
        let d = 0.5 * ra.distance(&rb);
        max = max.max(d);
        distance.push(d);
    }
    Ok(DistanceSeries {
        times: base,
        distance,
        max,
    })
}

/// Rotate the transverse Bloch components into a frame co-rotating at
/// `omega`: (x + iy) ↦ (x + iy)·e^{iωt}. Used to align runs whose qubit
/// coherences are stored in different rotating frames before comparing.
pub fn rotate_frame(times: &[f64], bloch: &[BlochVector], omega: f64) -> Vec<BlochVector> {
    times
        .iter()
        .zip(bloch)
        .map(|(&t, b)| {
            let (s, c) = (omega * t).sin_cos();
            BlochVector {
                x: b.x * c - b.y * s,
                y: b.x * s + b.y * c,
                z: b.z,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Time averaging
// ---------------------------------------------------------------------------

/// Centered moving average over a window of the given duration; the window
/// shrinks symmetrically near the endpoints. Removes fast small-amplitude
/// oscillations (e.g. at the qubit–resonator detuning) from a series.
pub fn time_average(times: &[f64], values: &[f64], window: f64) -> Result<Vec<f64>, CqedError> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(CqedError::InvalidInput(
            "need matching series with at least two points".into(),
        ));
    }
    let dt = times[1] - times[0];
    if window < dt {
        return Err(CqedError::InvalidInput(format!(
            "window {window} µs smaller than grid spacing {dt} µs"
        )));
    }
    let half = (window / (2.0 * dt)).round() as usize;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let h = half.min(i).min(n - 1 - i);
        let slice = &values[i - h..=i + h];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exponential-decay fit
// ---------------------------------------------------------------------------

/// Least-squares fit of ⟨σ_z⟩(t) = A e^{−γ_eff t} + sz_offset.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub a: f64,
    /// Fitted decay rate, rad/µs.
    pub gamma_eff_fit: f64,
    /// Fitted asymptote (steady-state ⟨σ_z⟩).
    pub sz_offset: f64,
    pub residual_rms: f64,
    /// Parameter covariance for (A, γ_eff, offset).
    pub covariance: [[f64; 3]; 3],
}

/// Fit A e^{−γt} + c starting from `t_min` (use 0.0 to fit the whole
/// series; a positive value skips ramp transients). The offset is seeded
/// from the final-10% tail mean, A and γ from log-linear regression on the
/// residual, then all three are refined by damped Gauss–Newton until the
/// relative parameter step falls below 1e-10.
pub fn fit_exponential_decay_from(
    times: &[f64],
    sz: &[f64],
    t_min: f64,
) -> Result<FitResult, CqedError> {
    if times.len() != sz.len() {
        return Err(CqedError::InvalidInput(
            "times and values must have equal length".into(),
        ));
    }
    let start = times.iter().position(|&t| t >= t_min).unwrap_or(times.len());
    let (t, y) = (&times[start..], &sz[start..]);
    let n = t.len();
    if n < 10 {
        return Err(CqedError::InvalidInput(format!(
            "need at least 10 points in the fit window, got {n}"
        )));
    }

    // Seed: offset from the tail, amplitude/rate from log-linear regression.
    let tail = (n / 10).max(3);
    let c0 = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let sign = (y[0] - c0).signum();
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut m = 0.0;
    let scale = (y[0] - c0).abs().max(1e-12);
    for (&ti, &yi) in t.iter().zip(y) {
        let r = (yi - c0) * sign;
        if r > 1e-3 * scale {
            let l = r.ln();
            sx += ti;
            sy += l;
            sxx += ti * ti;
            sxy += ti * l;
            m += 1.0;
        }
    }
    if m < 3.0 {
        return Err(CqedError::NonConvergence {
            residual: 0.0,
            iterations: 0,
        });
    }
    let det = m * sxx - sx * sx;
    let slope = (m * sxy - sx * sy) / det;
    let intercept = (sy * sxx - sx * sxy) / det;
    let mut p = Vector3::new(sign * intercept.exp(), -slope, c0);

    // Damped Gauss–Newton on (A, γ, c).
    let ssr = |p: &Vector3<f64>| -> f64 {
        t.iter()
            .zip(y)
            .map(|(&ti, &yi)| {
                let r = p[0] * (-p[1] * ti).exp() + p[2] - yi;
                r * r
            })
            .sum()
    };
    let mut current = ssr(&p);
    let mut converged = false;
    let mut jtj = Matrix3::zeros();
    for _ in 0..200 {
        jtj.fill(0.0);
        let mut jtr = Vector3::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let e = (-p[1] * ti).exp();
            let r = p[0] * e + p[2] - yi;
            let j = Vector3::new(e, -p[0] * ti * e, 1.0);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let step = match jtj.try_inverse() {
            Some(inv) => inv * jtr,
            None => {
                return Err(CqedError::NonConvergence {
                    residual: (current / n as f64).sqrt(),
                    iterations: 0,
                })
            }
        };
        // Backtracking line search.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = p - step * alpha;
            let trial_ssr = ssr(&trial);
            if trial_ssr <= current {
                p = trial;
                current = trial_ssr;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        let rel = (0..3)
            .map(|i| (step[i] * alpha).abs() / p[i].abs().max(1e-30))
            .fold(0.0_f64, f64::max);
        if !accepted || rel < 1e-10 {
            converged = true;
            break;
        }
    }
    let residual_rms = (current / n as f64).sqrt();
    if !converged {
        return Err(CqedError::NonConvergence {
            residual: residual_rms,
            iterations: 200,
        });
    }
    // Covariance: s² (JᵀJ)⁻¹ at the solution.
    let s2 = current / (n.max(4) - 3) as f64;
    let cov_m = jtj.try_inverse().unwrap_or_else(Matrix3::zeros) * s2;
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = cov_m[(i, j)];
        }
    }
    Ok(FitResult {
        a: p[0],
        gamma_eff_fit: p[1],
        sz_offset: p[2],
        residual_rms,
        covariance,
    })
}

/// [`fit_exponential_decay_from`] over the full series.
pub fn fit_exponential_decay(times: &[f64], sz: &[f64]) -> Result<FitResult, CqedError> {
    fit_exponential_decay_from(times, sz, f64::NEG_INFINITY)
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

/// Aligned per-point scalar outputs over a swept axis.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Model tier tag (e.g. "full", "reduced_nonlinear").
    pub model: String,
    pub seed: u64,
    pub axis: Vec<f64>,
    /// Column name → values aligned with `axis`; failed points hold NaN.
    pub columns: Vec<(String, Vec<f64>)>,
    /// (axis index, message) for points whose evaluation failed.
    pub failures: Vec<(usize, String)>,
}

/// Evaluate `eval` at every axis point (in parallel; results are ordered and
/// deterministic regardless of worker count). Each evaluation returns one
/// value per column; failures are recorded and the sweep continues.
pub fn sweep<F>(
    model: &str,
    seed: u64,
    axis: &[f64],
    column_names: &[&str],
    eval: F,
) -> Result<SweepResult, CqedError>
where
    F: Fn(f64) -> Result<Vec<f64>, CqedError> + Sync,
{
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CqedError::InvalidInput(
            "sweep axis must be strictly increasing".into(),
        ));
    }
    let points: Vec<Result<Vec<f64>, CqedError>> =
        axis.par_iter().map(|&x| eval(x)).collect();
    let mut columns: Vec<(String, Vec<f64>)> = column_names
        .iter()
        .map(|&c| (c.to_string(), Vec::with_capacity(axis.len())))
        .collect();
    let mut failures = Vec::new();
    for (i, point) in points.into_iter().enumerate() {
        match point {
            Ok(vals) => {
                if vals.len() != columns.len() {
                    return Err(CqedError::InvalidInput(format!(
                        "evaluation returned {} values, expected {}",
                        vals.len(),
                        columns.len()
                    )));
                }
                for (col, v) in columns.iter_mut().zip(vals) {
                    col.1.push(v);
                }
            }
            Err(e) => {
                failures.push((i, e.to_string()));
                for col in columns.iter_mut() {
                    col.1.push(f64::NAN);
                }
            }
        }
    }
    Ok(SweepResult {
        model: model.to_string(),
        seed,
        axis: axis.to_vec(),
        columns,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Deterministic artifact writers
// ---------------------------------------------------------------------------

/// Render one float with a fixed, locale-independent format so golden files
/// are byte-stable across runs.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// Write aligned columns as CSV with a header row and fixed number format.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<(), CqedError> {
    if columns.is_empty() {
        return Err(CqedError::InvalidInput("no columns to write".into()));
    }
    let rows = columns[0].1.len();
    if columns.iter().any(|(_, v)| v.len() != rows) {
        return Err(CqedError::InvalidInput(
            "CSV columns must have equal length".into(),
        ));
    }
    let mut out = String::new();
    out.push_str(&columns.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","));
    out.push('\n');
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|(_, v)| format_value(v[r])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// One labeled line for [`write_svg_lines`].
pub struct SvgSeries<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const SVG_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Minimal line plot as a standalone SVG (fixed 640×480 canvas, linear
/// axes, legend from series labels).
pub fn write_svg_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[SvgSeries<'_>],
) -> Result<(), CqedError> {
    if series.is_empty() || series.iter().any(|s| s.x.len() != s.y.len() || s.x.is_empty()) {
        return Err(CqedError::InvalidInput(
            "SVG needs non-empty series with matching x/y lengths".into(),
        ));
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for v in s.x.iter().copied().filter(|v| v.is_finite()) {
            x_min = x_min.min(v);
            x_max = x_max.max(v);
        }
        for v in s.y.iter().copied().filter(|v| v.is_finite()) {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if !(x_min.is_finite() && y_min.is_finite()) {
        return Err(CqedError::InvalidInput("no finite data to plot".into()));
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 480.0, 70.0, 20.0, 40.0, 50.0);
    let px = |x: f64| ml + (x - x_min) / (x_max - x_min) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y_min) / (y_max - y_min) * (h - mt - mb);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        w / 2.0,
        title
    ));
    // Axes box and tick labels at the corners.
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - ml - mr,
        h - mt - mb
    ));
    for (val, x_pos, anchor) in [(x_min, ml, "start"), (x_max, w - mr, "end")] {
        svg.push_str(&format!(
            "<text x=\"{x_pos}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"11\">{val:.3}</text>\n",
            h - mb + 16.0
        ));
    }
    for (val, y_pos) in [(y_min, h - mb), (y_max, mt + 4.0)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{y_pos}\" text-anchor=\"end\" font-size=\"11\">{val:.3}</text>\n",
            ml - 6.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        w / 2.0,
        h - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        h / 2.0,
        h / 2.0,
        y_label
    ));
    for (k, s) in series.iter().enumerate() {
        let color = SVG_COLORS[k % SVG_COLORS.len()];
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            w - mr - 150.0,
            mt + 18.0 + 16.0 * k as f64,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    let mut f = std::fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bloch(x: f64, y: f64, z: f64) -> BlochVector {
        BlochVector { x, y, z }
    }

    #[test]
    fn identical_runs_have_zero_distance() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let b: Vec<BlochVector> = t.iter().map(|&ti| bloch(ti.cos(), ti.sin(), 0.3)).collect();
        let d = trace_distance_series(&t, &b, &t, &b).unwrap();
        assert_eq!(d.max, 0.0);
        assert!(d.distance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distance_handles_mismatched_grids() {
        // Same continuous trajectory sampled on a fine and a coarse grid.
        let fine: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let coarse: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let f = |t: f64| bloch((0.3 * t).cos(), 0.0, -(0.3 * t).sin());
        let bf: Vec<_> = fine.iter().map(|&t| f(t)).collect();
        let bc: Vec<_> = coarse.iter().map(|&t| f(t)).collect();
        let d = trace_distance_series(&fine, &bf, &coarse, &bc).unwrap();
        assert_eq!(d.times.len(), coarse.len());
        assert!(d.max < 1e-4, "max = {}", d.max);
    }

    #[test]
    fn disjoint_ranges_rejected() {
        let t1 = [0.0, 1.0];
        let t2 = [2.0, 3.0];
        let b = [bloch(0.0, 0.0, 1.0), bloch(0.0, 0.0, 1.0)];
        assert!(trace_distance_series(&t1, &b, &t2, &b).is_err());
    }

    #[test]
    fn distance_is_symmetric_and_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut random_run = || -> Vec<BlochVector> {
            (0..20)
                .map(|_| {
                    let v = bloch(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    let n = v.norm().max(1.0);
                    bloch(v.x / n, v.y / n, v.z / n)
                })
                .collect()
        };
        for _ in 0..20 {
            let (a, b, c) = (random_run(), random_run(), random_run());
            let ab = trace_distance_series(&t, &a, &t, &b).unwrap();
            let ba = trace_distance_series(&t, &b, &t, &a).unwrap();
            let ac = trace_distance_series(&t, &a, &t, &c).unwrap();
            let cb = trace_distance_series(&t, &c, &t, &b).unwrap();
            for i in 0..t.len() {
                assert!((ab.distance[i] - ba.distance[i]).abs() < 1e-12);
                assert!(ab.distance[i] <= ac.distance[i] + cb.distance[i] + 1e-12);
            }
        }
    }

    #[test]
    fn frame_rotation_is_invertible_and_oriented() {
        let times = [0.0, 1.0];
        let b = [bloch(1.0, 0.0, 0.3), bloch(1.0, 0.0, 0.3)];
        let rot = rotate_frame(&times, &b, std::f64::consts::FRAC_PI_2);
        assert!((rot[0].x - 1.0).abs() < 1e-15);
        // At t = 1 a π/2 rotation sends +x to +y.
        assert!(rot[1].x.abs() < 1e-15 && (rot[1].y - 1.0).abs() < 1e-15);
        let back = rotate_frame(&times, &rot, -std::f64::consts::FRAC_PI_2);
        for (orig, b2) in b.iter().zip(&back) {
            assert!(orig.distance(b2) < 1e-14);
        }
    }

    #[test]
    fn averaging_preserves_constants() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.05).collect();
        let v = vec![0.7; 100];
        let avg = time_average(&t, &v, 0.5).unwrap();
        assert!(avg.iter().all(|&x| (x - 0.7).abs() < 1e-14));
    }

    #[test]
    fn averaging_suppresses_window_period_oscillation() {
        let dt = 0.001;
        let window = 0.2;
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * dt).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|&ti| (std::f64::consts::TAU * ti / window).sin())
            .collect();
        let avg = time_average(&t, &v, window).unwrap();
        let interior = &avg[400..1600];
        let peak = interior.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        assert!(peak < 0.01, "residual oscillation {peak}");
    }

    #[test]
    fn averaging_recovers_dc_under_fast_ripple() {
        let dt = 0.001;
        let t: Vec<f64> = (0..3000).map(|i| i as f64 * dt).collect();
        let v: Vec<f64> = t.iter().map(|&ti| -0.4 + 0.3 * (400.0 * ti).sin()).collect();
        let avg = time_average(&t, &v, 0.25).unwrap();
        for &x in &avg[300..2700] {
            assert!((x - (-0.4)).abs() < 0.004, "x = {x}");
        }
    }

    #[test]
    fn fit_recovers_noiseless_exponential() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let sz: Vec<f64> = t.iter().map(|&ti| 2.0 * (-0.1 * ti).exp() - 1.0).collect();
        let fit = fit_exponential_decay(&t, &sz).unwrap();
        assert!((fit.gamma_eff_fit - 0.1).abs() / 0.1 < 1e-6);
        assert!((fit.sz_offset + 1.0).abs() < 1e-8);
        assert!((fit.a - 2.0).abs() < 1e-6);
        assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn fit_window_skips_initial_transient() {
        // Corrupt the early samples; a windowed fit must still recover γ.
        let t: Vec<f64> = (0..500).map(|i| i as f64 * 0.04).collect();
        let sz: Vec<f64> = t
            .iter()
            .map(|&ti| {
                let clean = 1.5 * (-0.4 * ti).exp() + 0.2;
                if ti < 1.0 {
                    clean + 0.3 * (20.0 * ti).sin()
                } else {
                    clean
                }
            })
            .collect();
        let fit = fit_exponential_decay_from(&t, &sz, 1.0).unwrap();
        assert!((fit.gamma_eff_fit - 0.4).abs() / 0.4 < 1e-6);
        assert!((fit.sz_offset - 0.2).abs() < 1e-7);
    }

    #[test]
    fn fit_handles_negative_amplitude() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let sz: Vec<f64> = t.iter().map(|&ti| -0.8 * (-0.25 * ti).exp() + 0.5).collect();
        let fit = fit_exponential_decay(&t, &sz).unwrap();
        assert!((fit.a + 0.8).abs() < 1e-6);
        assert!((fit.gamma_eff_fit - 0.25).abs() < 1e-6);
    }

    #[test]
    fn sweep_is_ordered_and_records_failures() {
        let axis: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let res = sweep("demo", 1, &axis, &["square"], |x| {
            if x == 3.0 {
                Err(CqedError::InvalidInput("poked".into()))
            } else {
                Ok(vec![x * x])
            }
        })
        .unwrap();
        assert_eq!(res.failures.len(), 1);
        assert_eq!(res.failures[0].0, 3);
        assert!(res.columns[0].1[3].is_nan());
        assert_eq!(res.columns[0].1[5], 25.0);
    }

    #[test]
    fn sweep_rejects_unsorted_axis() {
        assert!(sweep("demo", 0, &[0.0, 0.0], &["c"], |x| Ok(vec![x])).is_err());
    }

    #[test]
    fn empty_axis_gives_empty_result() {
        let res = sweep("demo", 0, &[], &["c"], |x| Ok(vec![x])).unwrap();
        assert!(res.axis.is_empty());
        assert!(res.columns[0].1.is_empty());
        assert!(res.failures.is_empty());
    }

    #[test]
    fn csv_output_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&p1, &[("x", &x), ("y", &y)]).unwrap();
        write_csv(&p2, &[("x", &x), ("y", &y)]).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        let text = String::from_utf8(b1).unwrap();
        assert!(text.starts_with("x,y\n"));
        assert_eq!(text.lines().count(), 41);
    }

    #[test]
    fn svg_writer_produces_well_formed_plot() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let path = dir.path().join("plot.svg");
        write_svg_lines(
            &path,
            "demo",
            "time (µs)",
            "signal",
            &[SvgSeries {
                label: "sin",
                x: &x,
                y: &y,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
