//! Tracker-network training front end: builds or loads a dataset, runs the
//! hybrid training loop with the same recipe the simulator uses for its
//! default tracker, and saves the parameters next to their error trace.
//!
//! Training is deterministic, so retraining on the emitted `dataset.csv`
//! reproduces the saved error trace exactly — the continuation check in the
//! test suite relies on that.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pvgrid_core::anfis::{AnfisNet, TrainReport, TrainSample};
use pvgrid_core::mppt::teacher_dataset;
use pvgrid_core::pv::{PvArrayConfig, PvModule};

use crate::CliError;

/// Epochs and gradient step of the standard training run.
const EPOCHS: usize = 60;
const LEARNING_RATE: f64 = 0.01;
/// Membership functions per input of the standard network.
const GRID: usize = 5;

/// One training request: a dataset file, or `None` to generate the teacher
/// dataset for the default array.
#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Loads a `x,y,target` CSV. Every cell must be a finite number; failures
/// name the offending line.
pub fn load_dataset(path: &Path) -> Result<Vec<TrainSample>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,y,target" => {}
        _ => {
            return Err(CliError::Invalid(format!(
                "{}: expected header 'x,y,target'",
                path.display()
            )))
        }
    }
    let mut data = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), k + 1)))?;
        if cells.len() != 3 || cells.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Invalid(format!(
                "{}:{}: expected three finite numbers",
                path.display(),
                k + 1
            )));
        }
        data.push(TrainSample { x: cells[0], y: cells[1], target: cells[2] });
    }
    if data.is_empty() {
        return Err(CliError::Invalid(format!("{}: dataset has no samples", path.display())));
    }
    Ok(data)
}

/// The dataset in CSV form, shortest round-trip representation.
pub fn dataset_csv(data: &[TrainSample]) -> String {
    let mut out = String::from("x,y,target\n");
    for s in data {
        let _ = writeln!(out, "{},{},{}", s.x, s.y, s.target);
    }
    out
}

/// Per-epoch errors in CSV form. Epoch 0 is the network as initialised,
/// before any update, so its least-squares cell is empty.
pub fn rmse_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,rmse,rmse_after_lse\n");
    for (epoch, rmse) in report.rmse.iter().enumerate() {
        match epoch.checked_sub(1).and_then(|k| report.post_lse_rmse.get(k)) {
            Some(mid) => {
                let _ = writeln!(out, "{epoch},{rmse},{mid}");
            }
            None => {
                let _ = writeln!(out, "{epoch},{rmse},");
            }
        }
    }
    out
}

/// Final column of an emitted `rmse.csv`: the last epoch's error.
pub fn final_rmse(csv: &str) -> Option<f64> {
    let line = csv.lines().filter(|l| !l.trim().is_empty()).last()?;
    line.split(',').nth(1)?.parse().ok()
}

/// Trains a fresh grid network on the dataset: membership functions spread
/// over the observed input ranges, then the hybrid loop. The recipe matches
/// the simulator's built-in tracker training, so the same dataset always
/// yields the same network.
pub fn train_on(data: &[TrainSample]) -> Result<(AnfisNet, TrainReport), CliError> {
    let (mut x_lo, mut x_hi) = (f64::MAX, f64::MIN);
    let (mut y_lo, mut y_hi) = (f64::MAX, f64::MIN);
    for s in data {
        x_lo = x_lo.min(s.x);
        x_hi = x_hi.max(s.x);
        y_lo = y_lo.min(s.y);
        y_hi = y_hi.max(s.y);
    }
    let mut net = AnfisNet::grid_init(GRID, GRID, (x_lo, x_hi), (y_lo, y_hi))
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = net
        .hybrid_train(data, EPOCHS, LEARNING_RATE)
        .map_err(|e| CliError::Fault(format!("training failed: {e}")))?;
    Ok((net, report))
}

/// Executes a training request end to end; returns the error trace so the
/// caller can print the headline numbers.
pub fn execute(request: &TrainRequest) -> Result<TrainReport, CliError> {
    let (data, generated) = match &request.dataset {
        Some(path) => (load_dataset(path)?, false),
        None => {
            let cfg = PvArrayConfig::default();
            let module =
                PvModule::fit(cfg.module.clone()).map_err(|e| CliError::Invalid(e.to_string()))?;
            let data = teacher_dataset(&module, &cfg)
                .map_err(|e| CliError::Fault(format!("dataset generation failed: {e}")))?;
            (data, true)
        }
    };
    let (net, report) = train_on(&data)?;

    fs::create_dir_all(&request.out_dir).map_err(|e| CliError::io(&request.out_dir, e))?;
    let write = |name: &str, contents: &str| -> Result<(), CliError> {
        let path = request.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    };
    write("anfis.params", &net.to_text())?;
    write("rmse.csv", &rmse_csv(&report))?;
    if generated {
        write("dataset.csv", &dataset_csv(&data))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data() -> Vec<TrainSample> {
        (0..40)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / 39.0;
                let y = (3.0 * x).sin();
                TrainSample { x, y, target: 0.5 * x + 0.1 * y }
            })
            .collect()
    }

    #[test]
    fn dataset_csv_round_trips_exactly() {
        let data = toy_data();
        let dir = std::env::temp_dir().join(format!("pvgrid-train-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dataset.csv");
        fs::write(&path, dataset_csv(&data)).unwrap();
        let back = load_dataset(&path).expect("own output must parse");
        assert_eq!(back.len(), data.len());
        for (a, b) in back.iter().zip(&data) {
            assert_eq!((a.x, a.y, a.target), (b.x, b.y, b.target), "lossless float round-trip");
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = std::env::temp_dir().join(format!("pvgrid-train-bad-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.csv");
        fs::write(&path, "x,y,target\n1.0,2.0,3.0\n1.0,oops,3.0\n").unwrap();
        let err = load_dataset(&path).expect_err("bad cell must fail");
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains(":3:"), "line number missing from: {err}");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = std::env::temp_dir().join(format!("pvgrid-train-hdr-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("wrong.csv");
        fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        let err = load_dataset(&path).expect_err("wrong header must fail");
        assert!(err.to_string().contains("x,y,target"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn rmse_csv_has_one_row_per_epoch_plus_the_start() {
        let report = TrainReport {
            rmse: vec![0.5, 0.3, 0.2],
            post_lse_rmse: vec![0.35, 0.25],
            rank_deficient_epochs: Vec::new(),
        };
        let csv = rmse_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4, "header plus three epochs");
        assert_eq!(lines[1], "0,0.5,", "the starting error has no least-squares cell");
        assert_eq!(lines[2], "1,0.3,0.35");
        assert_eq!(final_rmse(&csv), Some(0.2));
    }

    #[test]
    fn training_on_the_same_data_is_reproducible() {
        let data = toy_data();
        let (net_a, report_a) = train_on(&data).expect("training should succeed");
        let (net_b, report_b) = train_on(&data).expect("training should succeed");
        assert_eq!(net_a.to_text(), net_b.to_text(), "identical recipe, identical network");
        assert_eq!(report_a.rmse, report_b.rmse, "identical error trace");
    }
}
