//! Run configuration: one TOML-loadable description of the array, grid,
//! load, controller, tracker, passives, and irradiance schedule, with
//! defaults matching the reference 32.4 kW plant. An empty file is a valid
//! scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{GridParams, LoadConfig, PlantParams};
use crate::pv::PvArrayConfig;
use crate::vsc::FeedforwardForm;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("could not read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Which maximum-power tracker drives the boost stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MpptVariant {
    /// Neuro-fuzzy step sizing on top of the conductance-balance rules.
    #[default]
    Anfis,
    /// Fixed-step perturb-and-observe baseline.
    Po,
    /// Fixed duty; the tracker perturbs the DC-link reference instead.
    Vdcref,
}

/// Episode-level gain search applied before the main run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneChoice {
    #[default]
    None,
    Roa,
    Pso,
}

/// Named controller bundles selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerVariant {
    /// Neuro-fuzzy tracker with rain-search gain tuning.
    Proposed,
    /// Perturb-and-observe tracker, stock gains.
    Po,
    /// Neuro-fuzzy tracker with particle-swarm gain tuning.
    PsoTuned,
}

impl ControllerVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(ControllerVariant::Proposed),
            "po" => Some(ControllerVariant::Po),
            "pso-tuned" => Some(ControllerVariant::PsoTuned),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerVariant::Proposed => "proposed",
            ControllerVariant::Po => "po",
            ControllerVariant::PsoTuned => "pso-tuned",
        }
    }
}

/// Converter-control settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Proportional gain on the link-voltage error.
    pub kp: f64,
    /// Integral gain on the link-voltage error, per second.
    pub ki: f64,
    /// Hysteresis half-band, A.
    pub band: f64,
    /// Control sampling period, s.
    pub sample_time: f64,
    /// DC-link reference, V (raised to the rectification floor at run time).
    pub v_dcref: f64,
    pub feedforward: FeedforwardForm,
    pub tune: TuneChoice,
    /// Simulated length of one tuning episode, s.
    pub tune_duration: f64,
    pub tune_population: usize,
    pub tune_iters: usize,
    /// Search box for the proportional gain.
    pub kp_range: [f64; 2],
    /// Search box for the integral gain.
    pub ki_range: [f64; 2],
    /// Search box for the hysteresis half-band, A.
    pub band_range: [f64; 2],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kp: 4.8,
            ki: 1.0,
            band: 0.25,
            sample_time: 20.0e-6,
            v_dcref: 700.0,
            feedforward: FeedforwardForm::PerPhase,
            tune: TuneChoice::None,
            tune_duration: 0.1,
            tune_population: 5,
            tune_iters: 6,
            kp_range: [1.0, 10.0],
            ki_range: [0.1, 5.0],
            band_range: [0.1, 1.0],
        }
    }
}

/// Tracker settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpptConfig {
    pub variant: MpptVariant,
    /// Tracker decision period, s.
    pub period: f64,
    /// Conductance-balance dead zone, S.
    pub epsilon: f64,
    /// Fixed duty perturbation of the perturb-and-observe baseline.
    pub delta_d: f64,
    /// Link-reference perturbation of the `vdcref` variant, V.
    pub step_v: f64,
    /// Rectification-floor margin on the link reference.
    pub gamma: f64,
    /// Upper link-reference bound of the `vdcref` variant, V.
    pub v_dcref_max: f64,
    pub initial_duty: f64,
}

impl Default for MpptConfig {
    fn default() -> Self {
        MpptConfig {
            variant: MpptVariant::Anfis,
            period: 1.0e-3,
            epsilon: 1.0e-3,
            delta_d: 0.005,
            step_v: 1.0,
            gamma: 1.1928,
            v_dcref_max: 760.0,
            initial_duty: 0.2,
        }
    }
}

/// One irradiance change: at `time`, every array section jumps to its
/// entry in `irradiance` (one value per configured section).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub time: f64,
    pub irradiance: Vec<f64>,
}

/// Complete description of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Simulated length, s.
    pub duration: f64,
    /// Plant integration step, s.
    pub step: f64,
    pub seed: u64,
    pub array: PvArrayConfig,
    pub grid: GridParams,
    pub load: LoadConfig,
    pub controller: ControllerConfig,
    pub mppt: MpptConfig,
    pub plant: PlantParams,
    pub schedule: Vec<ScheduleEntry>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            duration: 0.6,
            step: 1.0e-5,
            seed: 0,
            array: PvArrayConfig::default(),
            grid: GridParams::default(),
            load: LoadConfig::default(),
            controller: ControllerConfig::default(),
            mppt: MpptConfig::default(),
            plant: PlantParams::default(),
            schedule: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The TOML text of a bundled scenario (`case1`, `case2`, `case3`).
    pub fn builtin_toml(name: &str) -> Option<&'static str> {
        match name {
            "case1" => Some(include_str!("../scenarios/case1.toml")),
            "case2" => Some(include_str!("../scenarios/case2.toml")),
            "case3" => Some(include_str!("../scenarios/case3.toml")),
            _ => None,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let text = Self::builtin_toml(name).ok_or_else(|| {
            ScenarioError::Invalid(format!(
                "unknown bundled scenario '{name}' (have case1, case2, case3)"
            ))
        })?;
        Self::from_toml_str(text)
    }

    /// Applies one of the named controller bundles on top of the file.
    pub fn apply_variant(&mut self, variant: ControllerVariant) {
        match variant {
            ControllerVariant::Proposed => {
                self.mppt.variant = MpptVariant::Anfis;
                self.controller.tune = TuneChoice::Roa;
            }
            ControllerVariant::Po => {
                self.mppt.variant = MpptVariant::Po;
                self.controller.tune = TuneChoice::None;
            }
            ControllerVariant::PsoTuned => {
                self.mppt.variant = MpptVariant::Anfis;
                self.controller.tune = TuneChoice::Pso;
            }
        }
    }

    /// Number of plant integration steps (`duration/step`, rounded).
    pub fn steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    /// Plant steps per controller sample.
    pub fn control_every(&self) -> usize {
        (self.controller.sample_time / self.step).round() as usize
    }

    /// Plant steps per tracker decision.
    pub fn mppt_every(&self) -> usize {
        (self.mppt.period / self.step).round() as usize
    }

    /// Per-section irradiance in force at time `t`: the last schedule entry
    /// at or before `t`, or the section values themselves before any fires.
    pub fn irradiance_at(&self, t: f64) -> Vec<f64> {
        let mut current: Vec<f64> = self.array.sections.iter().map(|s| s.irradiance).collect();
        for entry in &self.schedule {
            if entry.time <= t {
                current.clone_from(&entry.irradiance);
            } else {
                break;
            }
        }
        current
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));

        if !(self.step > 0.0 && self.step <= 20.0e-6 + 1.0e-12) {
            return invalid(format!("step must lie in (0, 20 µs], got {} s", self.step));
        }
        let min_duration = 5.0 / self.grid.freq.max(f64::MIN_POSITIVE);
        if !(self.duration >= min_duration) {
            return invalid(format!(
                "duration must cover at least five fundamental cycles ({min_duration} s), got {} s",
                self.duration
            ));
        }

        self.array
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("array: {e}")))?;
        self.grid.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.load.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.plant.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let c = &self.controller;
        for (name, v) in [
            ("controller.kp", c.kp),
            ("controller.ki", c.ki),
            ("controller.band", c.band),
            ("controller.v_dcref", c.v_dcref),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be finite and positive, got {v}"));
            }
        }
        let ratio = c.sample_time / self.step;
        if !(ratio >= 1.0 - 1.0e-9 && (ratio - ratio.round()).abs() < 1.0e-6) {
            return invalid(format!(
                "controller.sample_time ({} s) must be a whole multiple of step ({} s)",
                c.sample_time, self.step
            ));
        }
        if c.tune != TuneChoice::None {
            if !(c.tune_duration > 0.0 && c.tune_duration < 0.2) {
                return invalid(format!(
                    "controller.tune_duration must lie in (0, 0.2) s, got {}",
                    c.tune_duration
                ));
            }
            if c.tune_population == 0 || c.tune_iters == 0 {
                return invalid(
                    "controller.tune_population and tune_iters must be at least 1".into(),
                );
            }
            for (name, range) in [
                ("controller.kp_range", c.kp_range),
                ("controller.ki_range", c.ki_range),
                ("controller.band_range", c.band_range),
            ] {
                if !(range[0].is_finite() && range[1].is_finite() && range[0] <= range[1]) {
                    return invalid(format!(
                        "{name} must be a finite [low, high] pair, got [{}, {}]",
                        range[0], range[1]
                    ));
                }
                if range[0] <= 0.0 {
                    return invalid(format!("{name} must stay positive, got low {}", range[0]));
                }
            }
        }

        let m = &self.mppt;
        let ratio = m.period / c.sample_time;
        if !(ratio >= 1.0 - 1.0e-9 && (ratio - ratio.round()).abs() < 1.0e-6) {
            return invalid(format!(
                "mppt.period ({} s) must be a whole multiple of controller.sample_time ({} s)",
                m.period, c.sample_time
            ));
        }
        for (name, v) in [
            ("mppt.epsilon", m.epsilon),
            ("mppt.delta_d", m.delta_d),
            ("mppt.step_v", m.step_v),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if !(m.gamma >= 1.0) {
            return invalid(format!("mppt.gamma must be at least 1, got {}", m.gamma));
        }
        if !(0.0..=0.95).contains(&m.initial_duty) {
            return invalid(format!(
                "mppt.initial_duty must lie in [0, 0.95], got {}",
                m.initial_duty
            ));
        }
        if !(m.v_dcref_max > c.v_dcref) {
            return invalid(format!(
                "mppt.v_dcref_max ({}) must exceed controller.v_dcref ({})",
                m.v_dcref_max, c.v_dcref
            ));
        }

        let mut prev = f64::NEG_INFINITY;
        for (k, entry) in self.schedule.iter().enumerate() {
            if !(entry.time > prev) {
                return invalid(format!(
                    "schedule[{k}].time {} must be strictly after the previous entry",
                    entry.time
                ));
            }
            prev = entry.time;
            if !(0.0..=self.duration).contains(&entry.time) {
                return invalid(format!(
                    "schedule[{k}].time {} falls outside the run [0, {}]",
                    entry.time, self.duration
                ));
            }
            if entry.irradiance.len() != self.array.sections.len() {
                return invalid(format!(
                    "schedule[{k}] carries {} irradiance values but the array has {} sections",
                    entry.irradiance.len(),
                    self.array.sections.len()
                ));
            }
            for (s, &g) in entry.irradiance.iter().enumerate() {
                if !(g.is_finite() && (0.0..=1500.0).contains(&g)) {
                    return invalid(format!(
                        "schedule[{k}].irradiance[{s}] {g} outside 0..=1500 W/m²"
                    ));
                }
            }
        }
        Ok(())
    }
}
