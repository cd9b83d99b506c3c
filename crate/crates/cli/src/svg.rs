//! Hand-rolled SVG line charts: axes, gridlines, a legend, and one polyline
//! per series. No display stack — the output is a standalone `<svg>`
//! document meant for a browser or image viewer.
//!
//! Long channels are decimated with a per-bucket min/max pass so switching
//! ripple keeps its envelope instead of aliasing into a false clean line.

use std::fmt::Write as _;

use pvgrid_core::trace::SimTrace;
use pvgrid_core::OperatingPoint;

/// Stroke colors used in series order; phases a/b/c take the first three.
pub const PALETTE: [&str; 6] =
    ["#1f6fb4", "#d62728", "#2ca02c", "#9467bd", "#e8850c", "#17becf"];

const WIDTH: f64 = 920.0;
const HEIGHT: f64 = 430.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 26.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 52.0;
/// Decimation budget per series; two points may survive per bucket.
const MAX_BUCKETS: usize = 1100;

/// One labeled polyline.
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), color, points }
    }
}

/// A complete figure: title, axis labels, and the series to draw.
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Keeps at most two points per bucket — the in-bucket minimum and maximum,
/// in sample order — so extremes survive thinning. Short inputs pass
/// through untouched.
pub fn decimate(points: &[(f64, f64)], max_buckets: usize) -> Vec<(f64, f64)> {
    if max_buckets == 0 || points.len() <= 2 * max_buckets {
        return points.to_vec();
    }
    let n = points.len();
    let mut out = Vec::with_capacity(2 * max_buckets);
    for b in 0..max_buckets {
        let lo = b * n / max_buckets;
        let hi = ((b + 1) * n / max_buckets).max(lo + 1).min(n);
        let bucket = &points[lo..hi];
        let (mut k_min, mut k_max) = (0, 0);
        for (k, p) in bucket.iter().enumerate() {
            if p.1 < bucket[k_min].1 {
                k_min = k;
            }
            if p.1 > bucket[k_max].1 {
                k_max = k;
            }
        }
        let (first, second) = if k_min <= k_max { (k_min, k_max) } else { (k_max, k_min) };
        out.push(bucket[first]);
        if second != first {
            out.push(bucket[second]);
        }
    }
    out
}

/// Tick label with enough digits to tell neighbours apart but no float dust.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1.0e-3..1.0e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn of(series: &[Series]) -> Option<Frame> {
        let mut f = Frame { x_lo: f64::MAX, x_hi: f64::MIN, y_lo: f64::MAX, y_hi: f64::MIN };
        let mut any = false;
        for s in series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    any = true;
                    f.x_lo = f.x_lo.min(x);
                    f.x_hi = f.x_hi.max(x);
                    f.y_lo = f.y_lo.min(y);
                    f.y_hi = f.y_hi.max(y);
                }
            }
        }
        if !any {
            return None;
        }
        if f.x_hi <= f.x_lo {
            f.x_hi = f.x_lo + 1.0;
        }
        let pad = 0.05 * (f.y_hi - f.y_lo).max(1.0e-9 + 0.02 * f.y_lo.abs().max(f.y_hi.abs()));
        f.y_lo -= pad;
        f.y_hi += pad;
        Some(f)
    }

    fn x_px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y_px(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

impl Chart {
    /// Renders the figure to a standalone SVG document.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(16 * 1024);
        let _ = write!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        let _ = write!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            WIDTH / 2.0,
            xml_escape(&self.title)
        );

        match Frame::of(&self.series) {
            None => {
                let _ = write!(
                    out,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#777\">no data</text>\n",
                    WIDTH / 2.0,
                    HEIGHT / 2.0
                );
            }
            Some(frame) => self.render_plot(&mut out, &frame),
        }
        out.push_str("</svg>\n");
        out
    }

    fn render_plot(&self, out: &mut String, frame: &Frame) {
        let (px_lo, px_hi) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (py_lo, py_hi) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

        // Gridlines and tick labels, six per axis.
        for k in 0..=5 {
            let t = k as f64 / 5.0;
            let x = frame.x_lo + t * (frame.x_hi - frame.x_lo);
            let y = frame.y_lo + t * (frame.y_hi - frame.y_lo);
            let (xp, yp) = (frame.x_px(x), frame.y_px(y));
            let _ = write!(
                out,
                "<line x1=\"{xp:.1}\" y1=\"{py_lo:.1}\" x2=\"{xp:.1}\" y2=\"{py_hi:.1}\" \
                 stroke=\"#ddd\"/>\n<line x1=\"{px_lo:.1}\" y1=\"{yp:.1}\" x2=\"{px_hi:.1}\" \
                 y2=\"{yp:.1}\" stroke=\"#ddd\"/>\n"
            );
            let _ = write!(
                out,
                "<text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                py_lo + 18.0,
                fmt_tick(x)
            );
            let _ = write!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
                px_lo - 6.0,
                yp + 4.0,
                fmt_tick(y)
            );
        }
        let _ = write!(
            out,
            "<rect x=\"{px_lo}\" y=\"{py_hi}\" width=\"{}\" height=\"{}\" fill=\"none\" \
             stroke=\"#333\"/>\n",
            px_hi - px_lo,
            py_lo - py_hi
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            (px_lo + px_hi) / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        );
        let _ = write!(
            out,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            (py_lo + py_hi) / 2.0,
            (py_lo + py_hi) / 2.0,
            xml_escape(&self.y_label)
        );

        for s in &self.series {
            let pts = decimate(&s.points, MAX_BUCKETS);
            let mut path = String::with_capacity(pts.len() * 12);
            for (x, y) in pts {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(path, "{:.1},{:.1} ", frame.x_px(x), frame.y_px(y));
                }
            }
            let _ = write!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
                path.trim_end(),
                s.color
            );
        }

        // Legend, top-left inside the plot area.
        for (k, s) in self.series.iter().enumerate() {
            let y = py_hi + 16.0 + 16.0 * k as f64;
            let _ = write!(
                out,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" \
                 stroke-width=\"2\"/>\n<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
                px_lo + 8.0,
                px_lo + 30.0,
                s.color,
                px_lo + 36.0,
                y + 4.0,
                xml_escape(&s.label)
            );
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn zipped(time: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    time.iter().copied().zip(values.iter().copied()).collect()
}

fn phase_series(time: &[f64], channels: &[Vec<f64>; 3], stem: &str) -> Vec<Series> {
    ["a", "b", "c"]
        .iter()
        .enumerate()
        .map(|(ph, suffix)| {
            Series::new(&format!("{stem}{suffix}"), PALETTE[ph], zipped(time, &channels[ph]))
        })
        .collect()
}

/// The standard figure set for one run: powers, DC link, tracking against
/// the true peak, and the last-cycles waveforms at the coupling point.
/// Returns `(file name, svg document)` pairs.
pub fn figures(
    trace: &SimTrace,
    oracle: &[(f64, OperatingPoint)],
    f0: f64,
) -> Vec<(&'static str, String)> {
    let tail = crate::report::steady_start(trace, f0, crate::report::STEADY_CYCLES);
    let t = &trace.time;
    let t_tail = &trace.time[tail..];
    let tail_channels = |chans: &[Vec<f64>; 3]| -> [Vec<f64>; 3] {
        [chans[0][tail..].to_vec(), chans[1][tail..].to_vec(), chans[2][tail..].to_vec()]
    };

    let power = Chart {
        title: "Power exchange".into(),
        x_label: "time, s".into(),
        y_label: "W / var".into(),
        series: vec![
            Series::new("array input", PALETTE[0], zipped(t, &trace.p_pv)),
            Series::new("grid active", PALETTE[1], zipped(t, &trace.p_g)),
            Series::new("grid reactive", PALETTE[2], zipped(t, &trace.q_g)),
        ],
    };

    let dclink = Chart {
        title: "DC-link voltage".into(),
        x_label: "time, s".into(),
        y_label: "V".into(),
        series: vec![
            Series::new("v_dc", PALETTE[0], zipped(t, &trace.v_dc)),
            Series::new("reference", PALETTE[1], zipped(t, &trace.v_dcref)),
        ],
    };

    // Step line holding each segment's true peak until the next change.
    let mut peak = Vec::with_capacity(2 * oracle.len());
    for (k, (start, mpp)) in oracle.iter().enumerate() {
        let end = oracle.get(k + 1).map_or_else(|| t.last().copied().unwrap_or(*start), |n| n.0);
        peak.push((*start, mpp.p));
        peak.push((end, mpp.p));
    }
    let tracking = Chart {
        title: "Peak-power tracking".into(),
        x_label: "time, s".into(),
        y_label: "W".into(),
        series: vec![
            Series::new("array power", PALETTE[0], zipped(t, &trace.p_pv)),
            Series::new("available peak", PALETTE[1], peak),
        ],
    };

    let grid_currents = Chart {
        title: "Grid currents, final cycles".into(),
        x_label: "time, s".into(),
        y_label: "A".into(),
        series: phase_series(t_tail, &tail_channels(&trace.i_g), "i_g"),
    };
    let load_currents = Chart {
        title: "Load currents, final cycles".into(),
        x_label: "time, s".into(),
        y_label: "A".into(),
        series: phase_series(t_tail, &tail_channels(&trace.i_load), "i_l"),
    };
    let pcc_voltages = Chart {
        title: "Coupling-point voltages, final cycles".into(),
        x_label: "time, s".into(),
        y_label: "V".into(),
        series: phase_series(t_tail, &tail_channels(&trace.v_g), "v_g"),
    };

    vec![
        ("power.svg", power.render()),
        ("dclink.svg", dclink.render()),
        ("tracking.svg", tracking.render()),
        ("grid_currents.svg", grid_currents.render()),
        ("load_currents.svg", load_currents.render()),
        ("pcc_voltages.svg", pcc_voltages.render()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spiky(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let x = k as f64;
                let y = (x * 0.01).sin() + if k % 97 == 0 { 5.0 } else { 0.0 };
                (x, y)
            })
            .collect()
    }

    #[test]
    fn decimation_keeps_the_envelope() {
        let pts = spiky(50_000);
        let thin = decimate(&pts, 500);
        assert!(thin.len() <= 1000, "expected at most 2 per bucket, got {}", thin.len());
        let max = |v: &[(f64, f64)]| v.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let min = |v: &[(f64, f64)]| v.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        assert_eq!(max(&thin), max(&pts), "peak spike must survive decimation");
        assert_eq!(min(&thin), min(&pts), "trough must survive decimation");
    }

    #[test]
    fn decimation_preserves_sample_order() {
        let pts = spiky(10_000);
        let thin = decimate(&pts, 300);
        assert!(
            thin.windows(2).all(|w| w[0].0 <= w[1].0),
            "decimated abscissae must stay sorted"
        );
    }

    #[test]
    fn short_inputs_pass_through_unchanged() {
        let pts = spiky(100);
        assert_eq!(decimate(&pts, 500), pts);
    }

    #[test]
    fn chart_renders_every_series_and_label() {
        let chart = Chart {
            title: "demo".into(),
            x_label: "time, s".into(),
            y_label: "V".into(),
            series: vec![
                Series::new("one", PALETTE[0], vec![(0.0, 1.0), (1.0, 2.0)]),
                Series::new("two", PALETTE[1], vec![(0.0, -1.0), (1.0, 0.5)]),
            ],
        };
        let doc = chart.render();
        assert!(doc.starts_with("<svg"), "document must open with an svg tag");
        assert!(doc.trim_end().ends_with("</svg>"), "document must close the svg tag");
        assert_eq!(doc.matches("<polyline").count(), 2, "one polyline per series");
        for needle in ["demo", "time, s", ">one<", ">two<"] {
            assert!(doc.contains(needle), "missing {needle} in rendered chart");
        }
    }

    #[test]
    fn flat_series_renders_without_nan_coordinates() {
        let chart = Chart {
            title: "flat".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series::new("level", PALETTE[0], vec![(0.0, 3.0), (1.0, 3.0)])],
        };
        let doc = chart.render();
        assert!(!doc.contains("NaN"), "flat data must not divide by a zero span");
    }

    #[test]
    fn empty_chart_says_so_instead_of_failing() {
        let chart = Chart {
            title: "void".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series::new("none", PALETTE[0], Vec::new())],
        };
        assert!(chart.render().contains("no data"));
    }
}
