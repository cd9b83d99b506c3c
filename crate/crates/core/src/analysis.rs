//! Power-quality and tracking analysis over recorded runs.
//!
//! Everything here is a pure function of sampled series. Harmonic content
//! comes from single-bin Fourier correlation over the largest whole number
//! of fundamental cycles at the tail of the series (steady state); reactive
//! power uses the quarter-period-shifted voltage so that a lagging current
//! yields positive vars; unbalance is the ratio of negative- to
//! positive-sequence fundamental phasors.

use crate::pv::OperatingPoint;
use crate::trace::SimTrace;
use nalgebra::Complex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("window shorter than one fundamental cycle ({got} samples, need {need})")]
    WindowTooShort { got: usize, need: usize },
    #[error("series lengths differ: {0:?}")]
    MisalignedSeries([usize; 2]),
    #[error("series is empty")]
    EmptySeries,
    #[error("no fundamental component in the window")]
    NoFundamental,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("oracle schedule problem: {0}")]
    MissingOracle(String),
}

/// Harmonic content of one series.
#[derive(Debug, Clone)]
pub struct HarmonicReport {
    /// Fundamental amplitude (peak).
    pub fundamental: f64,
    /// Amplitudes by order; index `h-1` holds order `h` (index 0 is the
    /// fundamental). Orders at or above the Nyquist frequency are zero.
    pub amplitudes: Vec<f64>,
    pub thd_percent: f64,
    /// Whole fundamental cycles in the analysis window.
    pub window_cycles: usize,
}

/// Mean active/reactive power and current unbalance of a three-phase pair.
#[derive(Debug, Clone, Copy)]
pub struct PqReport {
    /// Mean instantaneous power, W.
    pub p: f64,
    /// Mean reactive power, var; positive for current lagging voltage.
    pub q: f64,
    /// |negative-sequence| / |positive-sequence| of the current fundamental.
    pub unbalance_factor: f64,
}

/// Tracking quality over one constant-irradiance segment.
#[derive(Debug, Clone, Copy)]
pub struct MpptReport {
    pub segment_start: f64,
    /// Seconds from segment start until the array power enters and stays
    /// within 2% of the true peak; equals the segment length if it never
    /// settles.
    pub time_to_track: f64,
    pub tracking_efficiency_percent: f64,
    /// Peak-to-peak power excursion over the settled tail, percent of mean.
    pub steady_oscillation_percent: f64,
}

/// Descriptive statistics with the sample (n−1) deviation.
#[derive(Debug, Clone, Copy)]
pub struct StatsSummary {
    pub mean: f64,
    pub median: f64,
    pub sample_std: f64,
    /// True when fewer than two values made the deviation a convention.
    pub degenerate: bool,
}

/// One labeled run in a comparison table.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: String,
    pub thd_percent: f64,
    pub tracking_efficiency_percent: f64,
    pub time_to_track: f64,
    pub wall_seconds: f64,
}

/// Comparison rows sorted by label; no ranking beyond the sort.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<RunSummary>,
}

/// Complex amplitude of harmonic `order` over a window of exactly
/// `cycles` fundamental periods.
fn fourier_bin(window: &[f64], cycles: usize, order: usize) -> Complex<f64> {
    let n = window.len() as f64;
    let w = 2.0 * std::f64::consts::PI * (cycles * order) as f64 / n;
    let mut acc = Complex::new(0.0, 0.0);
    for (k, &x) in window.iter().enumerate() {
        let angle = w * k as f64;
        acc += Complex::new(x * angle.cos(), -x * angle.sin());
    }
    acc * Complex::new(2.0 / n, 0.0)
}

/// Tail window covering the largest whole number of cycles.
fn tail_window(len: usize, f0: f64, sample_rate: f64) -> Result<(usize, usize), AnalysisError> {
    let spc = sample_rate / f0;
    let cycles = (len as f64 / spc).floor() as usize;
    if cycles < 1 {
        return Err(AnalysisError::WindowTooShort { got: len, need: spc.ceil() as usize });
    }
    let n = ((cycles as f64 * spc).round() as usize).min(len);
    Ok((len - n, cycles))
}

/// Harmonic analysis of `series` against fundamental `f0`.
///
/// The analysis window is the largest whole number of cycles at the tail of
/// the series. Orders whose frequency reaches the Nyquist limit are
/// reported as zero rather than aliased.
pub fn thd(
    series: &[f64],
    f0: f64,
    sample_rate: f64,
    max_order: usize,
) -> Result<HarmonicReport, AnalysisError> {
    if !(f0 > 0.0 && sample_rate > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "need positive f0 and sample_rate, got {f0}, {sample_rate}"
        )));
    }
    if max_order < 1 {
        return Err(AnalysisError::InvalidArgument("max_order must be at least 1".into()));
    }
    let (start, cycles) = tail_window(series.len(), f0, sample_rate)?;
    let window = &series[start..];
    let mut amplitudes = Vec::with_capacity(max_order);
    for h in 1..=max_order {
        if h as f64 * f0 >= sample_rate / 2.0 {
            amplitudes.push(0.0);
        } else {
            amplitudes.push(fourier_bin(window, cycles, h).norm());
        }
    }
    let fundamental = amplitudes[0];
    if fundamental <= 0.0 {
        return Err(AnalysisError::NoFundamental);
    }
    let distortion: f64 = amplitudes[1..].iter().map(|a| a * a).sum();
    Ok(HarmonicReport {
        fundamental,
        thd_percent: distortion.sqrt() / fundamental * 100.0,
        amplitudes,
        window_cycles: cycles,
    })
}

fn check_aligned(a: usize, b: usize) -> Result<(), AnalysisError> {
    if a != b {
        return Err(AnalysisError::MisalignedSeries([a, b]));
    }
    Ok(())
}

/// Sequence-component unbalance of a three-phase current set: the ratio of
/// the negative- to positive-sequence fundamental magnitudes. A set with no
/// fundamental at all reports zero.
pub fn unbalance_factor(
    i_abc: [&[f64]; 3],
    f0: f64,
    sample_rate: f64,
) -> Result<f64, AnalysisError> {
    check_aligned(i_abc[0].len(), i_abc[1].len())?;
    check_aligned(i_abc[0].len(), i_abc[2].len())?;
    let (start, cycles) = tail_window(i_abc[0].len(), f0, sample_rate)?;
    let phasor = |ph: usize| fourier_bin(&i_abc[ph][start..], cycles, 1);
    let (ia, ib, ic) = (phasor(0), phasor(1), phasor(2));
    let a = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let a2 = a * a;
    let pos = (ia + a * ib + a2 * ic) / 3.0;
    let neg = (ia + a2 * ib + a * ic) / 3.0;
    if pos.norm() < 1.0e-12 {
        return Ok(if neg.norm() < 1.0e-12 { 0.0 } else { f64::INFINITY });
    }
    Ok(neg.norm() / pos.norm())
}

/// Active/reactive power and current unbalance over the steady tail.
///
/// `q` correlates each current with its phase voltage delayed a quarter
/// period, so the series must extend a quarter cycle before the analysis
/// window; the window shrinks accordingly.
pub fn pq(
    v_abc: [&[f64]; 3],
    i_abc: [&[f64]; 3],
    f0: f64,
    sample_rate: f64,
) -> Result<PqReport, AnalysisError> {
    for ph in 0..3 {
        check_aligned(v_abc[0].len(), v_abc[ph].len())?;
        check_aligned(v_abc[0].len(), i_abc[ph].len())?;
    }
    let len = v_abc[0].len();
    let spc = sample_rate / f0;
    let quarter = (spc / 4.0).round() as usize;
    if len <= quarter {
        return Err(AnalysisError::WindowTooShort {
            got: len,
            need: quarter + spc.ceil() as usize,
        });
    }
    let (start, _) = tail_window(len - quarter, f0, sample_rate)?;
    let start = start + quarter;
    let n = (len - start) as f64;

    let mut p = 0.0;
    let mut q = 0.0;
    for k in start..len {
        for ph in 0..3 {
            p += v_abc[ph][k] * i_abc[ph][k];
            q += v_abc[ph][k - quarter] * i_abc[ph][k];
        }
    }
    let unbalance =
        unbalance_factor([&i_abc[0][start..], &i_abc[1][start..], &i_abc[2][start..]], f0, sample_rate)?;
    Ok(PqReport { p: p / n, q: q / n, unbalance_factor: unbalance })
}

/// Tracking metrics per constant-irradiance segment.
///
/// `oracle` lists `(segment start time, true peak operating point)` in
/// ascending order, the first entry covering the start of the trace.
pub fn mppt_metrics(
    trace: &SimTrace,
    oracle: &[(f64, OperatingPoint)],
) -> Result<Vec<MpptReport>, AnalysisError> {
    if oracle.is_empty() {
        return Err(AnalysisError::MissingOracle("empty schedule".into()));
    }
    if trace.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    for w in oracle.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(AnalysisError::MissingOracle(format!(
                "segment times not ascending: {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    if oracle[0].0 > trace.time[0] + 1.0e-12 {
        return Err(AnalysisError::MissingOracle(format!(
            "first segment starts at {} but the trace starts at {}",
            oracle[0].0, trace.time[0]
        )));
    }

    let mut reports = Vec::with_capacity(oracle.len());
    for (seg, &(t_start, mpp)) in oracle.iter().enumerate() {
        if !(mpp.p > 0.0) {
            return Err(AnalysisError::MissingOracle(format!(
                "segment {seg} has non-positive peak power {}",
                mpp.p
            )));
        }
        let t_end = oracle.get(seg + 1).map(|s| s.0).unwrap_or(f64::INFINITY);
        let a = trace.time.partition_point(|&t| t < t_start);
        let b = trace.time.partition_point(|&t| t < t_end);
        if b <= a {
            return Err(AnalysisError::MissingOracle(format!(
                "segment {seg} covers no samples"
            )));
        }

        let band = 0.02 * mpp.p;
        let mut settle = a;
        for k in (a..b).rev() {
            if (trace.p_pv[k] - mpp.p).abs() > band {
                settle = k + 1;
                break;
            }
        }
        let seg_end_time = trace.time[b - 1];
        let time_to_track = if settle >= b {
            seg_end_time - t_start
        } else {
            trace.time[settle] - t_start
        };

        let steady = settle.min(b - 1)..b;
        let mean_pv: f64 =
            trace.p_pv[steady.clone()].iter().sum::<f64>() / steady.len() as f64;
        let efficiency = mean_pv / mpp.p * 100.0;

        let tail_len = ((b - a) / 4).max(1);
        let tail = (b - tail_len)..b;
        let (mut lo, mut hi, mut sum) = (f64::MAX, f64::MIN, 0.0);
        for &x in &trace.p_pv[tail.clone()] {
            lo = lo.min(x);
            hi = hi.max(x);
            sum += x;
        }
        let tail_mean = sum / tail_len as f64;
        let oscillation = if tail_mean.abs() > 0.0 {
            (hi - lo) / tail_mean.abs() * 100.0
        } else {
            0.0
        };

        reports.push(MpptReport {
            segment_start: t_start,
            time_to_track,
            tracking_efficiency_percent: efficiency,
            steady_oscillation_percent: oscillation,
        });
    }
    Ok(reports)
}

/// Mean, median and sample standard deviation.
pub fn stats(values: &[f64]) -> Result<StatsSummary, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let degenerate = values.len() < 2;
    let sample_std = if degenerate {
        0.0
    } else {
        (values.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(StatsSummary { mean, median, sample_std, degenerate })
}

/// Assembles a sorted comparison table from at least two labeled runs.
pub fn compare(mut rows: Vec<RunSummary>) -> Result<ComparisonTable, AnalysisError> {
    if rows.len() < 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "need at least two runs to compare, got {}",
            rows.len()
        )));
    }
    rows.sort_by(|x, y| x.label.cmp(&y.label));
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,thd_percent,tracking_efficiency_percent,time_to_track_s,wall_seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label, r.thd_percent, r.tracking_efficiency_percent, r.time_to_track, r.wall_seconds
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<12} {:>10} {:>12} {:>14} {:>10}\n",
            "controller", "THD %", "MPP eff %", "track time s", "wall s"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>10.3} {:>12.3} {:>14.4} {:>10.2}\n",
                r.label,
                r.thd_percent,
                r.tracking_efficiency_percent,
                r.time_to_track,
                r.wall_seconds
            ));
        }
        out
    }
}

/// Steady-state power bookkeeping over the trace tail: PV input against
/// grid export, load draw, and resistive losses in the converter coupling
/// and ripple filter. Returns the residual as a fraction of PV power.
pub fn power_balance_residual(
    trace: &SimTrace,
    r_vsc: f64,
    r_filter: f64,
    f0: f64,
) -> Result<f64, AnalysisError> {
    let dt = trace.step().ok_or(AnalysisError::EmptySeries)?;
    let sample_rate = 1.0 / dt;
    let spc = sample_rate / f0;
    let want = (5.0 * spc).round() as usize;
    if trace.len() < want {
        return Err(AnalysisError::WindowTooShort { got: trace.len(), need: want });
    }
    let start = trace.len() - want;
    let n = want as f64;
    let (mut p_pv, mut p_g, mut p_load, mut loss) = (0.0, 0.0, 0.0, 0.0);
    for k in start..trace.len() {
        p_pv += trace.p_pv[k];
        for ph in 0..3 {
            let v = trace.v_g[ph][k];
            let ig = trace.i_g[ph][k];
            let il = trace.i_load[ph][k];
            let iv = trace.i_vsc[ph][k];
            p_g += v * ig;
            p_load += v * il;
            let i_f = iv - ig - il;
            loss += r_vsc * iv * iv + r_filter * i_f * i_f;
        }
    }
    let (p_pv, p_g, p_load, loss) = (p_pv / n, p_g / n, p_load / n, loss / n);
    Ok((p_pv - p_g - p_load - loss).abs() / p_pv.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FS: f64 = 100_000.0;
    const F0: f64 = 50.0;

    fn sine(cycles: usize, amp: f64, phase: f64) -> Vec<f64> {
        let n = (cycles as f64 * FS / F0) as usize;
        (0..n)
            .map(|k| amp * (2.0 * PI * F0 * k as f64 / FS + phase).sin())
            .collect()
    }

    // ---- harmonic analysis ----

    #[test]
    fn pure_sine_has_no_distortion() {
        let r = thd(&sine(10, 100.0, 0.3), F0, FS, 50).unwrap();
        assert!(r.thd_percent < 0.01, "THD {}", r.thd_percent);
        assert!((r.fundamental - 100.0).abs() < 0.01);
        assert_eq!(r.window_cycles, 10);
    }

    #[test]
    fn ten_percent_fifth_harmonic_reads_ten_percent() {
        let mut x = sine(10, 100.0, 0.0);
        for (k, v) in x.iter_mut().enumerate() {
            *v += 10.0 * (2.0 * PI * 5.0 * F0 * k as f64 / FS).sin();
        }
        let r = thd(&x, F0, FS, 50).unwrap();
        assert!((r.thd_percent - 10.0).abs() < 0.05, "THD {}", r.thd_percent);
        assert!((r.amplitudes[4] - 10.0).abs() < 0.05);
    }

    #[test]
    fn square_wave_distortion_approaches_the_series_limit() {
        let x: Vec<f64> = sine(10, 1.0, 0.0).iter().map(|v| v.signum()).collect();
        // With enough orders the textbook figure √(π²/8 − 1) ≈ 48.34%
        // appears; truncating at order 50 undershoots it noticeably.
        let wide = thd(&x, F0, FS, 500).unwrap();
        assert!(
            (wide.thd_percent - 48.3).abs() < 0.5,
            "order-500 THD {}",
            wide.thd_percent
        );
        let narrow = thd(&x, F0, FS, 50).unwrap();
        assert!((narrow.thd_percent - 47.3).abs() < 0.3, "order-50 THD {}", narrow.thd_percent);
    }

    #[test]
    fn six_pulse_conduction_matches_its_analytic_distortion() {
        // ±1 for the middle 120° of each half cycle, zero for the rest.
        let n = (10.0 * FS / F0) as usize;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let theta = (2.0 * PI * F0 * k as f64 / FS).rem_euclid(2.0 * PI);
                let deg = theta.to_degrees();
                if (30.0..150.0).contains(&deg) {
                    1.0
                } else if (210.0..330.0).contains(&deg) {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        let expected = (PI * PI / 9.0 - 1.0).sqrt() * 100.0;
        let r = thd(&x, F0, FS, 500).unwrap();
        assert!(
            (r.thd_percent - expected).abs() < 0.4,
            "THD {} vs analytic {expected}",
            r.thd_percent
        );
    }

    #[test]
    fn distortion_is_invariant_under_amplitude_scaling() {
        let mut x = sine(8, 50.0, 0.1);
        for (k, v) in x.iter_mut().enumerate() {
            *v += 5.0 * (2.0 * PI * 7.0 * F0 * k as f64 / FS).sin();
        }
        let a = thd(&x, F0, FS, 50).unwrap();
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = thd(&doubled, F0, FS, 50).unwrap();
        assert!((a.thd_percent - b.thd_percent).abs() < 1.0e-9);
    }

    #[test]
    fn harmonic_power_respects_parseval() {
        let mut x = sine(10, 100.0, 0.0);
        for (k, v) in x.iter_mut().enumerate() {
            *v += 20.0 * (2.0 * PI * 3.0 * F0 * k as f64 / FS).sin();
        }
        let r = thd(&x, F0, FS, 50).unwrap();
        let harmonic_power: f64 = r.amplitudes.iter().map(|a| a * a / 2.0).sum();
        let total: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(harmonic_power <= total * 1.001);
        assert!((harmonic_power - total).abs() / total < 0.001, "leakage beyond the two tones");
    }

    #[test]
    fn short_windows_are_refused() {
        let x = sine(1, 1.0, 0.0);
        assert!(matches!(
            thd(&x[..x.len() / 2], F0, FS, 50),
            Err(AnalysisError::WindowTooShort { .. })
        ));
    }

    // ---- power and sequence components ----

    fn balanced_trio(amp: f64, cycles: usize, shift: f64) -> [Vec<f64>; 3] {
        [
            sine(cycles, amp, shift),
            sine(cycles, amp, shift - 2.0 * PI / 3.0),
            sine(cycles, amp, shift + 2.0 * PI / 3.0),
        ]
    }

    #[test]
    fn unity_power_factor_reads_zero_vars_and_zero_unbalance() {
        let v = balanced_trio(338.85, 10, 0.0);
        let i = balanced_trio(60.0, 10, 0.0);
        let r = pq(
            [&v[0], &v[1], &v[2]],
            [&i[0], &i[1], &i[2]],
            F0,
            FS,
        )
        .unwrap();
        let s = 3.0 * (338.85 / 2.0_f64.sqrt()) * (60.0 / 2.0_f64.sqrt());
        assert!((r.p - s).abs() / s < 0.005, "P {} vs S {s}", r.p);
        assert!(r.q.abs() / s < 0.005, "Q {}", r.q);
        assert!(r.unbalance_factor < 1.0e-6);
    }

    #[test]
    fn quadrature_current_moves_all_power_into_vars() {
        let v = balanced_trio(338.85, 10, 0.0);
        // Current lagging by 90°.
        let i = balanced_trio(60.0, 10, -PI / 2.0);
        let r = pq([&v[0], &v[1], &v[2]], [&i[0], &i[1], &i[2]], F0, FS).unwrap();
        let s = 3.0 * (338.85 / 2.0_f64.sqrt()) * (60.0 / 2.0_f64.sqrt());
        assert!(r.p.abs() / s < 0.005, "P {}", r.p);
        assert!((r.q - s).abs() / s < 0.005, "lagging current must read +Q, got {}", r.q);
    }

    #[test]
    fn single_phase_current_is_fully_unbalanced() {
        let n = sine(10, 1.0, 0.0).len();
        let ia = sine(10, 10.0, 0.0);
        let zeros = vec![0.0; n];
        let f = unbalance_factor([&ia, &zeros, &zeros], F0, FS).unwrap();
        assert!((f - 1.0).abs() < 0.01, "factor {f}");
    }

    #[test]
    fn dead_series_reports_zero_unbalance() {
        let zeros = vec![0.0; 4000];
        let f = unbalance_factor([&zeros, &zeros, &zeros], F0, FS).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn mismatched_series_are_refused() {
        let v = balanced_trio(1.0, 5, 0.0);
        let short = sine(4, 1.0, 0.0);
        assert!(matches!(
            pq([&v[0], &v[1], &v[2]], [&short, &v[1], &v[2]], F0, FS),
            Err(AnalysisError::MisalignedSeries(_))
        ));
    }

    // ---- MPPT metrics ----

    fn power_trace(p: impl Fn(f64) -> f64, duration: f64, dt: f64) -> SimTrace {
        let mut t = SimTrace::default();
        let n = (duration / dt).round() as usize;
        for k in 0..=n {
            let time = k as f64 * dt;
            let mut row = crate::trace::TraceRow { time, p_pv: p(time), ..Default::default() };
            row.v_dc = 700.0;
            t.push(row);
        }
        t
    }

    fn mpp(p: f64) -> OperatingPoint {
        OperatingPoint { v: 473.4, i: p / 473.4, p }
    }

    #[test]
    fn perfect_tracking_scores_perfectly() {
        let t = power_trace(|_| 32500.0, 0.2, 1.0e-4);
        let r = mppt_metrics(&t, &[(0.0, mpp(32500.0))]).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].tracking_efficiency_percent - 100.0).abs() < 1.0e-9);
        assert_eq!(r[0].time_to_track, 0.0);
        assert!(r[0].steady_oscillation_percent < 1.0e-9);
    }

    #[test]
    fn half_power_scores_fifty_percent_and_never_settles() {
        let t = power_trace(|_| 16250.0, 0.2, 1.0e-4);
        let r = mppt_metrics(&t, &[(0.0, mpp(32500.0))]).unwrap();
        assert!((r[0].tracking_efficiency_percent - 50.0).abs() < 0.01);
        assert!((r[0].time_to_track - 0.2).abs() < 1.0e-3, "got {}", r[0].time_to_track);
    }

    #[test]
    fn ramp_entry_time_is_detected() {
        // Climbs linearly, crossing the 98% band at t = 0.098.
        let t = power_trace(|time| 32500.0 * (time / 0.1).min(1.0), 0.4, 1.0e-4);
        let r = mppt_metrics(&t, &[(0.0, mpp(32500.0))]).unwrap();
        assert!((r[0].time_to_track - 0.098).abs() < 0.002, "got {}", r[0].time_to_track);
    }

    #[test]
    fn segments_are_scored_independently() {
        let t = power_trace(|time| if time < 0.1 { 32500.0 } else { 22750.0 }, 0.2, 1.0e-4);
        let r = mppt_metrics(&t, &[(0.0, mpp(32500.0)), (0.1, mpp(22750.0))]).unwrap();
        assert_eq!(r.len(), 2);
        for seg in &r {
            assert!((seg.tracking_efficiency_percent - 100.0).abs() < 1.0e-9);
        }
    }

    #[test]
    fn oracle_must_cover_the_trace_start() {
        let t = power_trace(|_| 1.0, 0.1, 1.0e-4);
        assert!(matches!(
            mppt_metrics(&t, &[(0.05, mpp(1.0))]),
            Err(AnalysisError::MissingOracle(_))
        ));
        assert!(matches!(mppt_metrics(&t, &[]), Err(AnalysisError::MissingOracle(_))));
    }

    // ---- statistics ----

    #[test]
    fn small_example_matches_hand_arithmetic() {
        let s = stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median, s.sample_std), (2.0, 2.0, 1.0));
        assert!(!s.degenerate);
    }

    #[test]
    fn single_value_is_flagged_degenerate() {
        let s = stats(&[7.25]).unwrap();
        assert_eq!((s.mean, s.median, s.sample_std), (7.25, 7.25, 0.0));
        assert!(s.degenerate);
    }

    #[test]
    fn constant_list_has_zero_deviation() {
        let s = stats(&[4.0; 9]).unwrap();
        assert_eq!(s.sample_std, 0.0);
        assert_eq!(s.median, 4.0);
    }

    #[test]
    fn shifting_preserves_deviation_exactly() {
        let base = [1.0, 2.0, 5.0, 9.0, 12.0];
        let shifted: Vec<f64> = base.iter().map(|x| x + 1024.0).collect();
        let a = stats(&base).unwrap();
        let b = stats(&shifted).unwrap();
        assert_eq!(b.mean, a.mean + 1024.0);
        assert_eq!(b.sample_std.to_bits(), a.sample_std.to_bits());
    }

    #[test]
    fn empty_input_is_refused() {
        assert!(matches!(stats(&[]), Err(AnalysisError::EmptySeries)));
    }

    // ---- comparison table ----

    fn row(label: &str) -> RunSummary {
        RunSummary {
            label: label.into(),
            thd_percent: 1.26,
            tracking_efficiency_percent: 99.98,
            time_to_track: 0.355,
            wall_seconds: 12.0,
        }
    }

    #[test]
    fn identical_runs_produce_identical_rows() {
        let t = compare(vec![row("po"), row("proposed")]).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].thd_percent, t.rows[1].thd_percent);
        // Sorted by label.
        assert_eq!(t.rows[0].label, "po");
        let text = t.to_text();
        assert!(text.contains("proposed"));
        assert_eq!(t.to_csv().lines().count(), 3);
    }

    #[test]
    fn single_run_cannot_be_compared() {
        assert!(compare(vec![row("only")]).is_err());
    }

    // ---- power balance ----

    #[test]
    fn consistent_bookkeeping_has_negligible_residual() {
        // Synthetic steady state where PV power exactly feeds grid, load and
        // the resistive losses.
        let (r_vsc, r_f) = (0.05, 5.0);
        let mut t = SimTrace::default();
        let dt = 1.0e-5;
        let n = (0.2 / dt) as usize;
        for k in 0..=n {
            let time = k as f64 * dt;
            let th = 2.0 * PI * F0 * time;
            let v = [th.sin(), (th - 2.0 * PI / 3.0).sin(), (th + 2.0 * PI / 3.0).sin()]
                .map(|s| 338.85 * s);
            let i_g = [th.sin(), (th - 2.0 * PI / 3.0).sin(), (th + 2.0 * PI / 3.0).sin()]
                .map(|s| 40.0 * s);
            let i_load = [th.sin(), (th - 2.0 * PI / 3.0).sin(), (th + 2.0 * PI / 3.0).sin()]
                .map(|s| 20.0 * s);
            let i_vsc = [i_g[0] + i_load[0], i_g[1] + i_load[1], i_g[2] + i_load[2]];
            let mut p_pv = 0.0;
            for ph in 0..3 {
                // i_f is zero by construction here, so only converter loss.
                p_pv += v[ph] * (i_g[ph] + i_load[ph]) + r_vsc * i_vsc[ph] * i_vsc[ph];
            }
            t.push(crate::trace::TraceRow {
                time,
                v_g: v,
                i_g,
                i_load,
                i_vsc,
                p_pv,
                v_dc: 700.0,
                ..Default::default()
            });
        }
        let residual = power_balance_residual(&t, r_vsc, r_f, F0).unwrap();
        assert!(residual < 1.0e-9, "residual {residual}");
    }
}
