//! Uniform-step simulation traces and their CSV form.
//!
//! A trace is a set of equal-length channels sampled on the plant step. Grid
//! current and its reference are recorded export-positive (power flowing
//! into the grid is positive), matching the power channels where positive
//! `p_g` means the system is feeding the grid. Floats are written with the
//! shortest representation that round-trips exactly, so a reloaded trace is
//! bit-identical to the one in memory and identical runs produce identical
//! bytes.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Column order of the CSV form; `time` first, then the channels in the
/// order they appear in [`TraceRow`].
pub const CSV_HEADER: &str = "time,v_ga,v_gb,v_gc,i_ga,i_gb,i_gc,i_la,i_lb,i_lc,\
i_va,i_vb,i_vc,iref_a,iref_b,iref_c,v_dc,v_dcref,p_pv,i_pv,v_pv,p_g,q_g,duty,irradiance";

const COLUMNS: usize = 25;

/// The CSV column names in file order.
pub fn column_names() -> [&'static str; COLUMNS] {
    [
        "time", "v_ga", "v_gb", "v_gc", "i_ga", "i_gb", "i_gc", "i_la", "i_lb", "i_lc",
        "i_va", "i_vb", "i_vc", "iref_a", "iref_b", "iref_c", "v_dc", "v_dcref", "p_pv",
        "i_pv", "v_pv", "p_g", "q_g", "duty", "irradiance",
    ]
}

/// One sample of every channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceRow {
    pub time: f64,
    /// PCC phase voltages, V.
    pub v_g: [f64; 3],
    /// Grid currents, A, export-positive.
    pub i_g: [f64; 3],
    /// Load currents drawn at the PCC, A.
    pub i_load: [f64; 3],
    /// Converter phase currents into the PCC, A.
    pub i_vsc: [f64; 3],
    /// Grid-current references, A, export-positive.
    pub i_gref: [f64; 3],
    pub v_dc: f64,
    pub v_dcref: f64,
    pub p_pv: f64,
    pub i_pv: f64,
    pub v_pv: f64,
    /// Instantaneous three-phase power into the grid, W.
    pub p_g: f64,
    /// Instantaneous reactive power by the quarter-period method, var.
    pub q_g: f64,
    pub duty: f64,
    /// Module-weighted mean irradiance across array sections, W/m².
    pub irradiance: f64,
}

impl TraceRow {
    pub(crate) fn to_array(self) -> [f64; COLUMNS] {
        [
            self.time,
            self.v_g[0],
            self.v_g[1],
            self.v_g[2],
            self.i_g[0],
            self.i_g[1],
            self.i_g[2],
            self.i_load[0],
            self.i_load[1],
            self.i_load[2],
            self.i_vsc[0],
            self.i_vsc[1],
            self.i_vsc[2],
            self.i_gref[0],
            self.i_gref[1],
            self.i_gref[2],
            self.v_dc,
            self.v_dcref,
            self.p_pv,
            self.i_pv,
            self.v_pv,
            self.p_g,
            self.q_g,
            self.duty,
            self.irradiance,
        ]
    }

    fn from_array(a: [f64; COLUMNS]) -> Self {
        TraceRow {
            time: a[0],
            v_g: [a[1], a[2], a[3]],
            i_g: [a[4], a[5], a[6]],
            i_load: [a[7], a[8], a[9]],
            i_vsc: [a[10], a[11], a[12]],
            i_gref: [a[13], a[14], a[15]],
            v_dc: a[16],
            v_dcref: a[17],
            p_pv: a[18],
            i_pv: a[19],
            v_pv: a[20],
            p_g: a[21],
            q_g: a[22],
            duty: a[23],
            irradiance: a[24],
        }
    }
}

/// Column-oriented storage of a complete run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub time: Vec<f64>,
    pub v_g: [Vec<f64>; 3],
    pub i_g: [Vec<f64>; 3],
    pub i_load: [Vec<f64>; 3],
    pub i_vsc: [Vec<f64>; 3],
    pub i_gref: [Vec<f64>; 3],
    pub v_dc: Vec<f64>,
    pub v_dcref: Vec<f64>,
    pub p_pv: Vec<f64>,
    pub i_pv: Vec<f64>,
    pub v_pv: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub duty: Vec<f64>,
    pub irradiance: Vec<f64>,
}

impl SimTrace {
    pub fn with_capacity(samples: usize) -> Self {
        let mut t = SimTrace::default();
        t.reserve(samples);
        t
    }

    fn reserve(&mut self, n: usize) {
        self.time.reserve(n);
        for ph in 0..3 {
            self.v_g[ph].reserve(n);
            self.i_g[ph].reserve(n);
            self.i_load[ph].reserve(n);
            self.i_vsc[ph].reserve(n);
            self.i_gref[ph].reserve(n);
        }
        self.v_dc.reserve(n);
        self.v_dcref.reserve(n);
        self.p_pv.reserve(n);
        self.i_pv.reserve(n);
        self.v_pv.reserve(n);
        self.p_g.reserve(n);
        self.q_g.reserve(n);
        self.duty.reserve(n);
        self.irradiance.reserve(n);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Plant step inferred from the first two samples.
    pub fn step(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.time[1] - self.time[0])
    }

    pub fn push(&mut self, row: TraceRow) {
        self.time.push(row.time);
        for ph in 0..3 {
            self.v_g[ph].push(row.v_g[ph]);
            self.i_g[ph].push(row.i_g[ph]);
            self.i_load[ph].push(row.i_load[ph]);
            self.i_vsc[ph].push(row.i_vsc[ph]);
            self.i_gref[ph].push(row.i_gref[ph]);
        }
        self.v_dc.push(row.v_dc);
        self.v_dcref.push(row.v_dcref);
        self.p_pv.push(row.p_pv);
        self.i_pv.push(row.i_pv);
        self.v_pv.push(row.v_pv);
        self.p_g.push(row.p_g);
        self.q_g.push(row.q_g);
        self.duty.push(row.duty);
        self.irradiance.push(row.irradiance);
    }

    pub fn row(&self, k: usize) -> TraceRow {
        TraceRow {
            time: self.time[k],
            v_g: [self.v_g[0][k], self.v_g[1][k], self.v_g[2][k]],
            i_g: [self.i_g[0][k], self.i_g[1][k], self.i_g[2][k]],
            i_load: [self.i_load[0][k], self.i_load[1][k], self.i_load[2][k]],
            i_vsc: [self.i_vsc[0][k], self.i_vsc[1][k], self.i_vsc[2][k]],
            i_gref: [self.i_gref[0][k], self.i_gref[1][k], self.i_gref[2][k]],
            v_dc: self.v_dc[k],
            v_dcref: self.v_dcref[k],
            p_pv: self.p_pv[k],
            i_pv: self.i_pv[k],
            v_pv: self.v_pv[k],
            p_g: self.p_g[k],
            q_g: self.q_g[k],
            duty: self.duty[k],
            irradiance: self.irradiance[k],
        }
    }

    /// First sample containing a non-finite value, as `(row, column name)`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        let names = column_names();
        for k in 0..self.len() {
            let values = self.row(k).to_array();
            for (c, v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Some((k, names[c]));
                }
            }
        }
        None
    }

    /// Writes the CSV form: header then one row per sample, floats in
    /// shortest round-trip notation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let mut buf = String::with_capacity(256);
        buf.push_str(CSV_HEADER);
        buf.push('\n');
        out.write_all(buf.as_bytes())?;
        for k in 0..self.len() {
            buf.clear();
            let values = self.row(k).to_array();
            for (c, v) in values.iter().enumerate() {
                if c > 0 {
                    buf.push(',');
                }
                let _ = write!(buf, "{v}");
            }
            buf.push('\n');
            out.write_all(buf.as_bytes())?;
        }
        Ok(())
    }

    /// Parses the CSV form produced by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(TraceError::Malformed { line: 1, msg: "empty file".into() });
            }
        };
        if header.trim() != CSV_HEADER {
            return Err(TraceError::Malformed {
                line: 1,
                msg: format!("unexpected header {header:?}"),
            });
        }
        let mut trace = SimTrace::default();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut values = [0.0; COLUMNS];
            let mut fields = line.split(',');
            for (c, slot) in values.iter_mut().enumerate() {
                let field = fields.next().ok_or_else(|| TraceError::Malformed {
                    line: idx + 1,
                    msg: format!("row has fewer than {COLUMNS} columns"),
                })?;
                *slot = field.parse().map_err(|e| TraceError::Malformed {
                    line: idx + 1,
                    msg: format!("column {c}: {e}"),
                })?;
            }
            if fields.next().is_some() {
                return Err(TraceError::Malformed {
                    line: idx + 1,
                    msg: format!("row has more than {COLUMNS} columns"),
                });
            }
            trace.push(TraceRow::from_array(values));
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace(n: usize) -> SimTrace {
        let mut t = SimTrace::with_capacity(n);
        for k in 0..n {
            let x = k as f64;
            t.push(TraceRow {
                time: x * 1.0e-5,
                v_g: [x.sin() * 338.0, (x + 1.0).sin(), (x + 2.0).sin()],
                i_g: [x / 3.0, -x / 3.0, 0.1],
                i_load: [1.0, 2.0, -3.0],
                i_vsc: [0.5, -0.25, -0.25],
                i_gref: [x / 3.0 + 0.1, 0.0, -0.1],
                v_dc: 700.0 + (x * 0.37).sin(),
                v_dcref: 700.0,
                p_pv: 32500.0 - x,
                i_pv: 68.49,
                v_pv: 473.4,
                p_g: 30000.0,
                q_g: -12.5,
                duty: 0.324,
                irradiance: 1000.0,
            });
        }
        t
    }

    #[test]
    fn rows_round_trip_through_the_columns() {
        let t = sample_trace(5);
        assert_eq!(t.len(), 5);
        let r = t.row(3);
        assert_eq!(r.time, 3.0 * 1.0e-5);
        assert_eq!(r.i_load, [1.0, 2.0, -3.0]);
        assert_eq!(r.v_pv, 473.4);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let t = sample_trace(32);
        let mut bytes = Vec::new();
        t.write_csv(&mut bytes).unwrap();
        let back = SimTrace::read_csv(&bytes[..]).unwrap();
        assert_eq!(back.len(), t.len());
        for k in 0..t.len() {
            let (a, b) = (t.row(k).to_array(), back.row(k).to_array());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits(), "row {k} drifted");
            }
        }
    }

    #[test]
    fn identical_traces_serialize_to_identical_bytes() {
        let (a, b) = (sample_trace(16), sample_trace(16));
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn non_finite_samples_are_located_by_row_and_column() {
        let mut t = sample_trace(4);
        assert_eq!(t.first_non_finite(), None);
        t.v_dc[2] = f64::NAN;
        assert_eq!(t.first_non_finite(), Some((2, "v_dc")));
    }

    #[test]
    fn malformed_csv_is_rejected_with_line_numbers() {
        let bad_header = "time,oops\n1,2\n";
        assert!(matches!(
            SimTrace::read_csv(bad_header.as_bytes()),
            Err(TraceError::Malformed { line: 1, .. })
        ));

        let mut bytes = Vec::new();
        sample_trace(2).write_csv(&mut bytes).unwrap();
        let mut text = String::from_utf8(bytes).unwrap();
        text.push_str("1,2,3\n");
        let err = SimTrace::read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 4, .. }), "got {err}");
    }

    #[test]
    fn step_is_inferred_from_the_time_channel() {
        let t = sample_trace(3);
        assert!((t.step().unwrap() - 1.0e-5).abs() < 1.0e-20);
        assert_eq!(SimTrace::default().step(), None);
    }
}
