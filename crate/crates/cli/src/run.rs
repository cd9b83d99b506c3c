//! Run orchestration: resolve a scenario, simulate it, analyse the trace,
//! and write the requested artifacts. The three bundled cases can run
//! concurrently, each into its own subdirectory.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use pvgrid_core::analysis;
use pvgrid_core::sim::{Prepared, SimFault};
use pvgrid_core::{ControllerVariant, Scenario, SimTrace};

use crate::report::{self, SteadyReport};
use crate::{svg, CliError};

/// Where a scenario comes from: a file on disk or one of the bundled cases.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Bundled(String),
    File(PathBuf),
}

impl ScenarioSource {
    /// An existing path wins; otherwise a bundled name; otherwise anything
    /// path-like falls through to the file loader so the caller sees the
    /// underlying "no such file" error.
    pub fn resolve(spec: &str) -> Result<ScenarioSource, CliError> {
        let path = Path::new(spec);
        if path.exists() {
            return Ok(ScenarioSource::File(path.to_path_buf()));
        }
        if Scenario::builtin_toml(spec).is_some() {
            return Ok(ScenarioSource::Bundled(spec.to_string()));
        }
        if spec.contains(std::path::MAIN_SEPARATOR) || spec.ends_with(".toml") {
            return Ok(ScenarioSource::File(path.to_path_buf()));
        }
        Err(CliError::Invalid(format!(
            "no scenario file or bundled case named '{spec}' (bundled: case1, case2, case3)"
        )))
    }

    pub fn load(&self) -> Result<Scenario, CliError> {
        match self {
            ScenarioSource::Bundled(name) => Ok(Scenario::builtin(name)?),
            ScenarioSource::File(path) => Ok(Scenario::from_path(path)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScenarioSource::Bundled(name) => name.clone(),
            ScenarioSource::File(path) => path.display().to_string(),
        }
    }
}

/// Which artifact families to write.
#[derive(Debug, Clone, Copy)]
pub struct EmitFlags {
    pub csv: bool,
    pub svg: bool,
    pub summary: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags { csv: true, svg: true, summary: true }
    }
}

/// One run, fully specified.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub source: ScenarioSource,
    pub out_dir: PathBuf,
    /// Overrides the scenario's seed when set.
    pub seed: Option<u64>,
    /// Controller variant imposed over the scenario file, when set.
    pub variant: Option<ControllerVariant>,
    pub emit: EmitFlags,
}

/// What a finished (possibly faulted) run leaves behind in memory.
#[derive(Debug)]
pub struct RunArtifacts {
    pub label: String,
    pub out_dir: PathBuf,
    pub fault: Option<SimFault>,
    pub report: SteadyReport,
    pub wall_prepare: f64,
    pub wall_simulate: f64,
}

impl RunArtifacts {
    /// One console line; mirrors the summary's status head.
    pub fn console_line(&self) -> String {
        match &self.fault {
            Some(f) => format!(
                "{}: FAULT at t = {:.6} s — {} (artifacts in {})",
                self.label,
                f.time,
                f.what,
                self.out_dir.display()
            ),
            None => {
                let thd = self
                    .report
                    .thd
                    .iter()
                    .find(|r| r.signal == "i_ga")
                    .map_or("n/a".to_string(), |r| format!("{:.2}%", r.thd_percent));
                let vdc = self
                    .report
                    .v_dc
                    .map_or("n/a".to_string(), |(mean, _, _)| format!("{mean:.1} V"));
                format!(
                    "{}: ok — grid THD {thd}, dc link {vdc}, wall {:.1} s ({})",
                    self.label,
                    self.wall_prepare + self.wall_simulate,
                    self.out_dir.display()
                )
            }
        }
    }

    /// Maps a recorded fault to the process-level outcome.
    pub fn exit_result(&self) -> Result<(), CliError> {
        match &self.fault {
            Some(f) => Err(CliError::Fault(format!(
                "{}: simulation fault at t = {:.6} s — {}",
                self.label, f.time, f.what
            ))),
            None => Ok(()),
        }
    }
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Executes one manifest end to end. A simulation fault is not an `Err`:
/// the artifacts (with the fault recorded) still get written, and the
/// caller turns the fault into the exit code.
pub fn execute(manifest: &RunManifest) -> Result<RunArtifacts, CliError> {
    let mut scenario = manifest.source.load()?;
    if let Some(seed) = manifest.seed {
        scenario.seed = seed;
    }
    if let Some(variant) = manifest.variant {
        scenario.apply_variant(variant);
    }
    let variant_label = manifest
        .variant
        .map_or("as configured".to_string(), |v| v.label().to_string());

    let started = Instant::now();
    let prepared = Prepared::new(scenario)?;
    let wall_prepare = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let outcome = prepared.run()?;
    let wall_simulate = started.elapsed().as_secs_f64();

    let scenario = prepared.scenario();
    let steady = report::analyze(&outcome.trace, scenario, &prepared.mpp_oracle());

    fs::create_dir_all(&manifest.out_dir).map_err(|e| CliError::io(&manifest.out_dir, e))?;
    if manifest.emit.csv {
        let path = manifest.out_dir.join("trace.csv");
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        outcome
            .trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| CliError::io(&path, e))?;
        write_text(&manifest.out_dir.join("thd.csv"), &report::thd_csv(&steady.thd))?;
        if let Some(trace) = prepared.tuned().and_then(report::tune_trace_csv) {
            write_text(&manifest.out_dir.join("tune_trace.csv"), &trace)?;
        }
    }
    if manifest.emit.svg {
        for (name, doc) in svg::figures(&outcome.trace, &prepared.mpp_oracle(), scenario.grid.freq)
        {
            write_text(&manifest.out_dir.join(name), &doc)?;
        }
    }
    if manifest.emit.summary {
        let text = report::summary_text(
            &manifest.source.label(),
            &variant_label,
            scenario,
            prepared.gains(),
            prepared.tuned(),
            outcome.fault.as_ref(),
            &steady,
            wall_prepare,
            wall_simulate,
        );
        write_text(&manifest.out_dir.join("summary.txt"), &text)?;
    }

    Ok(RunArtifacts {
        label: manifest.source.label(),
        out_dir: manifest.out_dir.clone(),
        fault: outcome.fault,
        report: steady,
        wall_prepare,
        wall_simulate,
    })
}

/// Runs the three bundled cases concurrently, one isolated simulation each,
/// into disjoint subdirectories of `out_root`. When at least two runs
/// finish cleanly with CSV output enabled, a cross-case comparison table
/// lands next to them.
pub fn execute_all(
    out_root: &Path,
    seed: Option<u64>,
    variant: Option<ControllerVariant>,
    emit: EmitFlags,
) -> Result<(), CliError> {
    const CASES: [&str; 3] = ["case1", "case2", "case3"];
    let results: Vec<Result<RunArtifacts, CliError>> = thread::scope(|scope| {
        let handles: Vec<_> = CASES
            .iter()
            .map(|name| {
                let manifest = RunManifest {
                    source: ScenarioSource::Bundled(name.to_string()),
                    out_dir: out_root.join(name),
                    seed,
                    variant,
                    emit,
                };
                scope.spawn(move || execute(&manifest))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Fault("simulation worker panicked".into())))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut worst: Option<CliError> = None;
    let mut keep_worst = |candidate: CliError| {
        if worst.as_ref().is_none_or(|w| candidate.exit_code() > w.exit_code()) {
            worst = Some(candidate);
        }
    };
    for (name, result) in CASES.iter().zip(results) {
        match result {
            Ok(artifacts) => {
                println!("{}", artifacts.console_line());
                if artifacts.fault.is_none() {
                    let wall = artifacts.wall_prepare + artifacts.wall_simulate;
                    rows.extend(report::comparison_row(name, &artifacts.report, wall));
                }
                if let Err(e) = artifacts.exit_result() {
                    keep_worst(e);
                }
            }
            Err(e) => {
                eprintln!("{name}: error — {e}");
                keep_worst(e);
            }
        }
    }

    if emit.csv && rows.len() >= 2 {
        let table = analysis::compare(rows)
            .map_err(|e| CliError::Invalid(format!("comparison table: {e}")))?;
        write_text(&out_root.join("comparison.csv"), &table.to_csv())?;
        print!("{}", table.to_text());
    }
    match worst {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Reloads an emitted trace, for callers that want to re-analyse artifacts.
pub fn reload_trace(path: &Path) -> Result<SimTrace, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    SimTrace::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_names_resolve_without_touching_the_filesystem() {
        match ScenarioSource::resolve("case2").expect("case2 is bundled") {
            ScenarioSource::Bundled(name) => assert_eq!(name, "case2"),
            other => panic!("expected a bundled source, got {other:?}"),
        }
    }

    #[test]
    fn unknown_bare_names_are_rejected_with_the_candidates() {
        let err = ScenarioSource::resolve("case9").expect_err("case9 is not bundled");
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("case9"), "error should echo the name: {err}");
    }

    #[test]
    fn missing_toml_paths_defer_to_the_file_loader() {
        let source = ScenarioSource::resolve("does-not-exist.toml").expect("path-like spec");
        let err = source.load().expect_err("the file is absent");
        assert_eq!(err.exit_code(), 3, "missing file is an I/O failure: {err}");
    }

    #[test]
    fn faulted_artifacts_carry_the_fault_into_the_exit_code() {
        let artifacts = RunArtifacts {
            label: "case1".into(),
            out_dir: PathBuf::from("out"),
            fault: Some(SimFault { time: 0.01, what: "link collapsed".into() }),
            report: SteadyReport::default(),
            wall_prepare: 0.0,
            wall_simulate: 0.0,
        };
        let err = artifacts.exit_result().expect_err("fault must not exit 0");
        assert_eq!(err.exit_code(), 2);
        assert!(artifacts.console_line().contains("FAULT"));
    }
}
