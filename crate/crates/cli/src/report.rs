//! Post-run analysis and report assembly: harmonic tables, the plain-text
//! run summary, optimizer cost traces, and comparison rows for multi-case
//! runs.
//!
//! Numbers destined for CSV files are written with the shortest
//! representation that round-trips, so reloading an emitted trace and
//! re-running the same analysis reproduces every table byte for byte.

use std::fmt::Write as _;

use pvgrid_core::analysis::{self, MpptReport, PqReport, RunSummary};
use pvgrid_core::sim::SimFault;
use pvgrid_core::vsc::TunedGains;
use pvgrid_core::{OperatingPoint, Scenario, SimTrace};

/// Highest harmonic order included in distortion figures; covers the
/// rectifier series far past the point where amplitudes still matter at a
/// 10 µs plant step.
pub const THD_MAX_ORDER: usize = 500;

/// Whole fundamental cycles analysed at the end of a run.
pub const STEADY_CYCLES: usize = 5;

/// One line of the harmonic table.
#[derive(Debug, Clone)]
pub struct ThdRow {
    pub signal: String,
    /// Fundamental amplitude, peak amps.
    pub fundamental: f64,
    pub thd_percent: f64,
    pub window_cycles: usize,
}

/// Everything the steady tail of a run yields. Fields are `None` when the
/// trace ended too early for that figure — a faulted run still reports
/// whatever survives.
#[derive(Debug, Clone, Default)]
pub struct SteadyReport {
    pub thd: Vec<ThdRow>,
    /// Grid-side active/reactive power and current unbalance.
    pub grid_pq: Option<PqReport>,
    pub load_unbalance: Option<f64>,
    /// Mean, minimum and maximum link voltage over the tail.
    pub v_dc: Option<(f64, f64, f64)>,
    /// Power bookkeeping residual as a fraction of the array input.
    pub balance_residual: Option<f64>,
    /// Tracking quality per constant-irradiance segment.
    pub mppt: Vec<MpptReport>,
}

/// Index of the first sample inside the last `cycles` whole fundamental
/// cycles, or zero when the trace is shorter than that.
pub fn steady_start(trace: &SimTrace, f0: f64, cycles: usize) -> usize {
    let Some(dt) = trace.step() else { return 0 };
    let per_cycle = (1.0 / (f0 * dt)).round() as usize;
    trace.len().saturating_sub(per_cycle * cycles)
}

/// Harmonic rows for the grid and load currents, one per phase. Signals
/// whose analysis window is too short (or which carry no fundamental at
/// all) are skipped rather than reported as garbage.
pub fn thd_rows(trace: &SimTrace, f0: f64) -> Vec<ThdRow> {
    let Some(dt) = trace.step() else { return Vec::new() };
    let sample_rate = 1.0 / dt;
    let start = steady_start(trace, f0, STEADY_CYCLES);
    let mut rows = Vec::with_capacity(6);
    for (stem, channels) in [("i_g", &trace.i_g), ("i_l", &trace.i_load)] {
        for (ph, suffix) in ["a", "b", "c"].iter().enumerate() {
            let Ok(r) = analysis::thd(&channels[ph][start..], f0, sample_rate, THD_MAX_ORDER)
            else {
                continue;
            };
            rows.push(ThdRow {
                signal: format!("{stem}{suffix}"),
                fundamental: r.fundamental,
                thd_percent: r.thd_percent,
                window_cycles: r.window_cycles,
            });
        }
    }
    rows
}

/// The harmonic table in CSV form; always includes the header so the file
/// exists even when no signal was analysable.
pub fn thd_csv(rows: &[ThdRow]) -> String {
    let mut out = String::from("signal,fundamental_peak_a,thd_percent,window_cycles\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.signal, r.fundamental, r.thd_percent, r.window_cycles);
    }
    out
}

/// Runs every steady-tail analysis that the trace length permits.
pub fn analyze(
    trace: &SimTrace,
    scenario: &Scenario,
    oracle: &[(f64, OperatingPoint)],
) -> SteadyReport {
    let f0 = scenario.grid.freq;
    let mut report = SteadyReport { thd: thd_rows(trace, f0), ..SteadyReport::default() };
    let Some(dt) = trace.step() else { return report };
    let sample_rate = 1.0 / dt;
    let start = steady_start(trace, f0, STEADY_CYCLES);

    // The reactive channel needs a quarter cycle of voltage history ahead of
    // the averaging window, so the power analysis gets the full series and
    // finds its own tail.
    report.grid_pq = analysis::pq(
        [&trace.v_g[0], &trace.v_g[1], &trace.v_g[2]],
        [&trace.i_g[0], &trace.i_g[1], &trace.i_g[2]],
        f0,
        sample_rate,
    )
    .ok();

    report.load_unbalance = analysis::unbalance_factor(
        [&trace.i_load[0][start..], &trace.i_load[1][start..], &trace.i_load[2][start..]],
        f0,
        sample_rate,
    )
    .ok();

    let tail = &trace.v_dc[start..];
    if !tail.is_empty() {
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let min = tail.iter().copied().fold(f64::MAX, f64::min);
        let max = tail.iter().copied().fold(f64::MIN, f64::max);
        report.v_dc = Some((mean, min, max));
    }

    report.balance_residual = analysis::power_balance_residual(
        trace,
        scenario.plant.vsc_resistance,
        scenario.plant.filter_r,
        f0,
    )
    .ok();
    report.mppt = analysis::mppt_metrics(trace, oracle).unwrap_or_default();
    report
}

fn pct(x: f64) -> f64 {
    100.0 * x
}

/// The plain-text run summary. The first line always states the outcome;
/// a faulted run never reads as a success no matter what else was
/// measurable.
#[allow(clippy::too_many_arguments)]
pub fn summary_text(
    scenario_label: &str,
    variant_label: &str,
    scenario: &Scenario,
    gains: (f64, f64, f64),
    tuned: Option<&TunedGains>,
    fault: Option<&SimFault>,
    report: &SteadyReport,
    wall_prepare: f64,
    wall_simulate: f64,
) -> String {
    let mut out = String::with_capacity(2048);
    match fault {
        None => out.push_str("status: ok\n"),
        Some(f) => {
            let _ = writeln!(out, "status: FAULT at t = {:.6} s — {}", f.time, f.what);
            out.push_str("figures below cover the trace up to the fault only\n");
        }
    }
    let _ = writeln!(out, "scenario: {scenario_label}");
    let _ = writeln!(out, "variant: {variant_label}");
    let _ = writeln!(
        out,
        "simulated: {} s at {} µs steps, seed {}",
        scenario.duration,
        scenario.step * 1.0e6,
        scenario.seed
    );
    let (kp, ki, band) = gains;
    match tuned {
        Some(t) if t.search.is_some() => {
            let _ = writeln!(
                out,
                "controller gains: kp = {kp:.4}, ki = {ki:.4}, band = {band:.4} A \
                 (tuned: episode cost {:.4} vs {:.4} with configured gains)",
                t.cost, t.default_cost
            );
        }
        _ => {
            let _ = writeln!(
                out,
                "controller gains: kp = {kp:.4}, ki = {ki:.4}, band = {band:.4} A (configured)"
            );
        }
    }

    let _ = writeln!(out, "\nsteady state, last {STEADY_CYCLES} cycles");
    let mut grid_thd = Vec::new();
    let mut load_thd = Vec::new();
    for r in &report.thd {
        let entry = format!("{} = {:.3}%", &r.signal[r.signal.len() - 1..], r.thd_percent);
        if r.signal.starts_with("i_g") {
            grid_thd.push(entry);
        } else {
            load_thd.push(entry);
        }
    }
    if !grid_thd.is_empty() {
        let _ = writeln!(out, "  grid current THD: {}", grid_thd.join(", "));
    }
    if !load_thd.is_empty() {
        let _ = writeln!(out, "  load current THD: {}", load_thd.join(", "));
    }
    if let Some(pq) = &report.grid_pq {
        let _ = writeln!(out, "  grid P = {:.1} W, Q = {:.1} var", pq.p, pq.q);
        let _ = writeln!(out, "  grid current unbalance: {:.2}%", pct(pq.unbalance_factor));
    }
    if let Some(u) = report.load_unbalance {
        let _ = writeln!(out, "  load current unbalance: {:.2}%", pct(u));
    }
    if let Some((mean, min, max)) = report.v_dc {
        let _ = writeln!(out, "  dc link: mean {mean:.2} V, span [{min:.2}, {max:.2}] V");
    }
    if let Some(res) = report.balance_residual {
        let _ = writeln!(out, "  power bookkeeping residual: {:.2}% of array input", pct(res));
    }

    if !report.mppt.is_empty() {
        out.push_str("\ntracking, per irradiance segment\n");
        for m in &report.mppt {
            let _ = writeln!(
                out,
                "  from {:.3} s: efficiency {:.2}%, time to track {:.3} s, oscillation {:.3}%",
                m.segment_start,
                m.tracking_efficiency_percent,
                m.time_to_track,
                m.steady_oscillation_percent
            );
        }
    }

    let _ = writeln!(
        out,
        "\nwall time: prepare {wall_prepare:.2} s, simulate {wall_simulate:.2} s"
    );
    out
}

/// The optimizer's best-cost-so-far trace in CSV form, when a gain search
/// actually ran.
pub fn tune_trace_csv(tuned: &TunedGains) -> Option<String> {
    let search = tuned.search.as_ref()?;
    let mut out = String::from("iteration,best_cost\n");
    for (k, cost) in search.trace.iter().enumerate() {
        let _ = writeln!(out, "{k},{cost}");
    }
    Some(out)
}

/// A comparison-table row for one finished run; `None` when the run ended
/// before the figures it needs existed. Tracking numbers come from the last
/// irradiance segment — the one that reflects the run's final conditions.
pub fn comparison_row(label: &str, report: &SteadyReport, wall_seconds: f64) -> Option<RunSummary> {
    let thd = report.thd.iter().find(|r| r.signal == "i_ga")?.thd_percent;
    let m = report.mppt.last()?;
    Some(RunSummary {
        label: label.to_string(),
        thd_percent: thd,
        tracking_efficiency_percent: m.tracking_efficiency_percent,
        time_to_track: m.time_to_track,
        wall_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pvgrid_core::TraceRow;
    use std::f64::consts::PI;

    const FS: f64 = 100_000.0;
    const F0: f64 = 50.0;

    /// A balanced trace with clean grid sines and fifth-harmonic-polluted
    /// load currents.
    fn synthetic_trace(cycles: usize) -> SimTrace {
        let n = (cycles as f64 * FS / F0) as usize;
        let mut trace = SimTrace::with_capacity(n);
        for k in 0..n {
            let t = k as f64 / FS;
            let mut row = TraceRow { time: t, v_dc: 700.0, v_dcref: 700.0, ..TraceRow::default() };
            for ph in 0..3 {
                let th = 2.0 * PI * F0 * t - 2.0 * PI * ph as f64 / 3.0;
                row.v_g[ph] = 338.0 * th.sin();
                row.i_g[ph] = 40.0 * th.sin();
                row.i_load[ph] = 20.0 * th.sin() + 3.0 * (5.0 * th).sin();
            }
            row.p_pv = 1000.0;
            trace.push(row);
        }
        trace
    }

    #[test]
    fn steady_start_keeps_only_the_tail_cycles() {
        let trace = synthetic_trace(8);
        let per_cycle = (FS / F0) as usize;
        assert_eq!(steady_start(&trace, F0, 5), trace.len() - 5 * per_cycle);
        assert_eq!(steady_start(&trace, F0, 50), 0, "short traces start at zero");
    }

    #[test]
    fn harmonic_rows_cover_both_current_sets() {
        let rows = thd_rows(&synthetic_trace(8), F0);
        assert_eq!(rows.len(), 6, "three grid and three load phases");
        for r in &rows {
            if r.signal.starts_with("i_g") {
                assert!(r.thd_percent < 0.1, "{}: clean sine read {}%", r.signal, r.thd_percent);
                assert!((r.fundamental - 40.0).abs() < 0.1);
            } else {
                assert!(
                    (r.thd_percent - 15.0).abs() < 0.2,
                    "{}: 3/20 fifth harmonic should read 15%, got {}%",
                    r.signal,
                    r.thd_percent
                );
            }
        }
    }

    #[test]
    fn harmonic_csv_round_trips_through_parse() {
        let rows = thd_rows(&synthetic_trace(8), F0);
        let csv = thd_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("signal,fundamental_peak_a,thd_percent,window_cycles"));
        for (line, row) in lines.zip(&rows) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], row.signal);
            assert_eq!(cells[1].parse::<f64>().unwrap(), row.fundamental, "exact round-trip");
            assert_eq!(cells[2].parse::<f64>().unwrap(), row.thd_percent, "exact round-trip");
        }
    }

    #[test]
    fn faulted_summary_never_reads_as_success() {
        let fault = SimFault { time: 0.0123, what: "dc link collapsed".into() };
        let text = summary_text(
            "case1",
            "proposed",
            &Scenario::default(),
            (4.8, 1.0, 0.25),
            None,
            Some(&fault),
            &SteadyReport::default(),
            1.0,
            2.0,
        );
        assert!(text.starts_with("status: FAULT"), "summary opened with: {}", &text[..30]);
        assert!(text.contains("dc link collapsed"));
        assert!(!text.contains("status: ok"));
    }

    #[test]
    fn clean_summary_reports_the_steady_figures() {
        let trace = synthetic_trace(8);
        let report = analyze(&trace, &Scenario::default(), &[(0.0, OperatingPoint {
            v: 473.0,
            i: 2.11,
            p: 1000.0,
        })]);
        let text = summary_text(
            "case1",
            "as configured",
            &Scenario::default(),
            (4.8, 1.0, 0.25),
            None,
            None,
            &report,
            0.5,
            1.5,
        );
        assert!(text.starts_with("status: ok"));
        for needle in ["grid current THD", "load current THD", "dc link: mean 700.00 V", "efficiency"] {
            assert!(text.contains(needle), "missing '{needle}' in:\n{text}");
        }
    }

    #[test]
    fn tune_trace_needs_an_actual_search() {
        let tuned = TunedGains {
            kp: 4.8,
            ki: 1.0,
            band: 0.25,
            cost: 1.0,
            default_cost: 1.0,
            search: None,
        };
        assert!(tune_trace_csv(&tuned).is_none(), "no search, no trace file");
    }

    #[test]
    fn comparison_row_takes_the_last_segment() {
        let mut report = SteadyReport::default();
        report.thd.push(ThdRow {
            signal: "i_ga".into(),
            fundamental: 40.0,
            thd_percent: 2.5,
            window_cycles: 5,
        });
        report.mppt = vec![
            MpptReport {
                segment_start: 0.0,
                time_to_track: 0.1,
                tracking_efficiency_percent: 99.0,
                steady_oscillation_percent: 0.01,
            },
            MpptReport {
                segment_start: 0.3,
                time_to_track: 0.05,
                tracking_efficiency_percent: 99.5,
                steady_oscillation_percent: 0.02,
            },
        ];
        let row = comparison_row("case3", &report, 12.0).expect("row should assemble");
        assert_eq!(row.time_to_track, 0.05, "second segment wins");
        assert_eq!(row.thd_percent, 2.5);
    }
}
