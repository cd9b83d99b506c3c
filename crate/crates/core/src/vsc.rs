//! Grid-interface converter control.
//!
//! The control chain works on instantaneous phase quantities: line voltages
//! are mapped to phase voltages, the PCC amplitude normalizes them into
//! in-phase unit templates, a discrete PI on the DC-link error produces the
//! loss component of the grid current, the PV feed-forward term offloads the
//! link, and the resulting amplitude times the templates gives per-phase
//! current references that a hysteresis comparator turns into leg states.
//! Gains can optionally be tuned per episode by the raindrop optimizer,
//! never accepting a result worse than the defaults.

use crate::optim::{roa_minimize, Bounds, OptimError, OptimResult, RoaParams};
use thiserror::Error;

/// Below this PCC amplitude the grid is considered lost and divisions stop.
pub const DEAD_VOLTAGE_FLOOR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum VscError {
    #[error("PCC amplitude {0:.3} V is below the dead-voltage floor")]
    GridLoss(f64),
    #[error("hysteresis band must be positive, got {0}")]
    InvalidBand(f64),
    #[error("invalid gain box: {0}")]
    InvalidGainBox(String),
    #[error("episode objective returned no finite cost, not even for the default gains")]
    TuningFailed,
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// In-phase unit templates, one per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitTemplates {
    pub u_pa: f64,
    pub u_pb: f64,
    pub u_pc: f64,
}

impl UnitTemplates {
    pub fn as_array(&self) -> [f64; 3] {
        [self.u_pa, self.u_pb, self.u_pc]
    }
}

/// Discrete PI state for the DC-link loop, incremental form.
#[derive(Debug, Clone)]
pub struct PiState {
    pub kp: f64,
    pub ki: f64,
    /// Loss-component output, amps; doubles as the integrator memory.
    pub i_loss: f64,
    /// Error at the previous update, volts.
    pub prev_err: f64,
    /// Anti-windup clamp on `i_loss`, amps.
    pub limit: f64,
}

impl PiState {
    pub fn new(kp: f64, ki: f64, limit: f64) -> Self {
        PiState { kp, ki, i_loss: 0.0, prev_err: 0.0, limit }
    }
}

/// Per-phase two-level comparator state.
#[derive(Debug, Clone)]
pub struct HysteresisState {
    /// Half-width of the dead band, amps.
    pub band: f64,
    /// Upper-switch state per leg.
    pub leg_states: [bool; 3],
}

impl HysteresisState {
    pub fn new(band: f64) -> Result<Self, VscError> {
        if !(band > 0.0 && band.is_finite()) {
            return Err(VscError::InvalidBand(band));
        }
        Ok(HysteresisState { band, leg_states: [false; 3] })
    }
}

/// Everything the reference synthesis produces for one control sample.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceFrame {
    /// PCC amplitude, volts.
    pub v_t: f64,
    /// Reference grid-current amplitude, amps. Negative means net export.
    pub i_gp: f64,
    /// Per-phase reference currents, amps.
    pub i_gref: [f64; 3],
}

/// Phase voltages from the two sensed line voltages. The outputs sum to
/// zero and reproduce the line voltages as differences.
pub fn phase_from_line(v_sab: f64, v_sbc: f64) -> (f64, f64, f64) {
    let v_sa = (2.0 * v_sab + v_sbc) / 3.0;
    let v_sb = (-v_sab + v_sbc) / 3.0;
    let v_sc = (-v_sab - 2.0 * v_sbc) / 3.0;
    (v_sa, v_sb, v_sc)
}

/// PCC voltage amplitude `√(2(v²_sa+v²_sb+v²_sc)/3)`. For a balanced
/// sinusoidal set this equals the phase-voltage peak at every instant.
pub fn pcc_amplitude(v_sa: f64, v_sb: f64, v_sc: f64) -> f64 {
    (2.0 * (v_sa * v_sa + v_sb * v_sb + v_sc * v_sc) / 3.0).sqrt()
}

/// Phase voltages normalized by the PCC amplitude. Fails when the grid is
/// effectively dead rather than dividing by a vanishing number.
pub fn unit_templates(
    v_sa: f64,
    v_sb: f64,
    v_sc: f64,
    v_t: f64,
) -> Result<UnitTemplates, VscError> {
    if v_t < DEAD_VOLTAGE_FLOOR {
        return Err(VscError::GridLoss(v_t));
    }
    Ok(UnitTemplates { u_pa: v_sa / v_t, u_pb: v_sb / v_t, u_pc: v_sc / v_t })
}

/// One unity-DC-gain biquad notch section.
#[derive(Debug, Clone)]
struct NotchSection {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
    primed: bool,
}

impl NotchSection {
    /// Notch centered on `center_hz` with quality factor `q`, discretized
    /// at the sampling period `dt`.
    fn new(center_hz: f64, q: f64, dt: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * center_hz * dt;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        NotchSection {
            b0: 1.0 / a0,
            b1: -2.0 * w.cos() / a0,
            b2: 1.0 / a0,
            a1: -2.0 * w.cos() / a0,
            a2: (1.0 - alpha) / a0,
            z1: 0.0,
            z2: 0.0,
            primed: false,
        }
    }

    fn filter(&mut self, x: f64) -> f64 {
        if !self.primed {
            // Start in the steady state of the first sample so a settled
            // input reads through unchanged from sample one.
            self.z2 = (self.b2 - self.a2) * x;
            self.z1 = (self.b1 - self.a1) * x + self.z2;
            self.primed = true;
        }
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }
}

/// Link-voltage measurement conditioning ahead of the PI.
///
/// While the converter sources harmonic and unbalance power, the link
/// inevitably ripples at small multiples of twice the grid frequency. Fed
/// raw into the per-sample PI that ripple comes straight back out as
/// reference-amplitude modulation, so the measurement is notched at twice
/// and six times the fundamental. Narrow notches null those lines exactly
/// while adding phase lead — not the lag of a broadband filter — at the
/// link-loop crossover.
#[derive(Debug, Clone, Default)]
pub struct LinkSense {
    sections: Vec<NotchSection>,
}

impl LinkSense {
    /// No conditioning: the measurement is the raw link voltage.
    pub fn passthrough() -> Self {
        LinkSense::default()
    }

    /// Ripple notches for a grid at `f0`, sampled every `dt` seconds.
    pub fn ripple_notches(f0: f64, dt: f64) -> Self {
        LinkSense {
            sections: vec![
                NotchSection::new(2.0 * f0, 2.0, dt),
                NotchSection::new(6.0 * f0, 2.0, dt),
            ],
        }
    }

    /// Conditions one raw link-voltage sample.
    pub fn measure(&mut self, v_dc: f64) -> f64 {
        self.sections.iter_mut().fold(v_dc, |v, s| s.filter(v))
    }
}

/// One incremental PI update on the DC-link error:
/// `i_loss += kp·(e − e_prev) + ki·e`, clamped to ±limit. Returns the new
/// loss component.
pub fn loss_component(state: &mut PiState, v_dcref: f64, v_dc: f64) -> f64 {
    let err = v_dcref - v_dc;
    let next = state.i_loss + state.kp * (err - state.prev_err) + state.ki * err;
    state.i_loss = next.clamp(-state.limit, state.limit);
    state.prev_err = err;
    state.i_loss
}

/// PV feed-forward current `2·p_pv/(3·v_t)`: the per-phase peak that exports
/// `p_pv` at unity power factor (three phases each carrying
/// `(v_t/√2)·(i/√2)`).
pub fn feedforward(p_pv: f64, v_t: f64) -> Result<f64, VscError> {
    if v_t < DEAD_VOLTAGE_FLOOR {
        return Err(VscError::GridLoss(v_t));
    }
    Ok(2.0 * p_pv / (3.0 * v_t))
}

/// Alternate aggregate feed-forward form `2·p_pv/v_t`, kept selectable for
/// comparison; it books all three phases' power against one amplitude.
pub fn feedforward_aggregate(p_pv: f64, v_t: f64) -> Result<f64, VscError> {
    if v_t < DEAD_VOLTAGE_FLOOR {
        return Err(VscError::GridLoss(v_t));
    }
    Ok(2.0 * p_pv / v_t)
}

/// Which feed-forward formula the controller applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedforwardForm {
    /// `2P/(3V_t)` — per-phase power bookkeeping balances.
    #[default]
    PerPhase,
    /// `2P/V_t` — aggregate variant.
    Aggregate,
}

/// Reference synthesis: amplitude `i_gp = i_loss − i_pvf` (positive draws
/// from the grid, PV export drives it negative), distributed over the
/// in-phase templates.
pub fn reference_currents(
    i_loss: f64,
    i_pvf: f64,
    v_t: f64,
    templates: &UnitTemplates,
) -> ReferenceFrame {
    let i_gp = i_loss - i_pvf;
    ReferenceFrame {
        v_t,
        i_gp,
        i_gref: [i_gp * templates.u_pa, i_gp * templates.u_pb, i_gp * templates.u_pc],
    }
}

/// Per-phase hysteresis comparison: the upper switch turns on when the
/// current falls more than one band below its reference, off when it
/// overshoots by more than one band, and holds otherwise. Returns the leg
/// states after the update.
pub fn hysteresis_gate(
    i_g: [f64; 3],
    i_gref: [f64; 3],
    state: &mut HysteresisState,
) -> [bool; 3] {
    for ph in 0..3 {
        let err = i_gref[ph] - i_g[ph];
        if err > state.band {
            state.leg_states[ph] = true;
        } else if err < -state.band {
            state.leg_states[ph] = false;
        }
    }
    state.leg_states
}

/// The complete per-sample controller: conditioned link measurement, PI,
/// feed-forward, reference synthesis, hysteresis gating.
#[derive(Debug, Clone)]
pub struct VscController {
    pub pi: PiState,
    pub hysteresis: HysteresisState,
    pub feedforward_form: FeedforwardForm,
    pub link_sense: LinkSense,
}

/// Trace-friendly record of one controller sample.
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput {
    pub legs: [bool; 3],
    pub frame: ReferenceFrame,
    pub i_loss: f64,
    pub i_pvf: f64,
}

impl ControlOutput {
    /// Reference currents flipped into the export-positive convention the
    /// plant measures currents in.
    pub fn export_references(&self) -> [f64; 3] {
        self.frame.i_gref.map(|r| -r)
    }
}

impl VscController {
    pub fn new(kp: f64, ki: f64, band: f64, i_loss_limit: f64) -> Result<Self, VscError> {
        Ok(VscController {
            pi: PiState::new(kp, ki, i_loss_limit),
            hysteresis: HysteresisState::new(band)?,
            feedforward_form: FeedforwardForm::PerPhase,
            link_sense: LinkSense::passthrough(),
        })
    }

    /// One control sample. `v_sab`/`v_sbc` are the sensed line voltages and
    /// `i_g` the sensed grid currents, positive flowing into the grid
    /// (export). The internal reference frame carries import-positive
    /// amplitudes, so the references are flipped before gating: a leg turns
    /// on when its exported current falls below the exported reference,
    /// which raises the pole voltage and pushes more current outward.
    pub fn step(
        &mut self,
        v_dcref: f64,
        v_dc: f64,
        v_sab: f64,
        v_sbc: f64,
        p_pv: f64,
        i_g: [f64; 3],
    ) -> Result<ControlOutput, VscError> {
        let (v_sa, v_sb, v_sc) = phase_from_line(v_sab, v_sbc);
        let v_t = pcc_amplitude(v_sa, v_sb, v_sc);
        let templates = unit_templates(v_sa, v_sb, v_sc, v_t)?;
        let v_link = self.link_sense.measure(v_dc);
        let i_loss = loss_component(&mut self.pi, v_dcref, v_link);
        let i_pvf = match self.feedforward_form {
            FeedforwardForm::PerPhase => feedforward(p_pv, v_t)?,
            FeedforwardForm::Aggregate => feedforward_aggregate(p_pv, v_t)?,
        };
        let frame = reference_currents(i_loss, i_pvf, v_t, &templates);
        let out = ControlOutput { legs: self.hysteresis.leg_states, frame, i_loss, i_pvf };
        let legs = hysteresis_gate(i_g, out.export_references(), &mut self.hysteresis);
        Ok(ControlOutput { legs, ..out })
    }

    /// Re-evaluates only the hysteresis comparison against previously issued
    /// export references. The digital half of the controller (PI, templates,
    /// reference synthesis) runs on its sampling grid; the comparator is
    /// analog in hardware and keeps watching the current between samples, so
    /// the simulation re-gates at every plant step.
    pub fn regate(&mut self, i_g: [f64; 3], export_refs: [f64; 3]) -> [bool; 3] {
        hysteresis_gate(i_g, export_refs, &mut self.hysteresis)
    }
}

/// Result of an episode-level gain search.
#[derive(Debug, Clone)]
pub struct TunedGains {
    pub kp: f64,
    pub ki: f64,
    pub band: f64,
    /// Episode cost of the returned gains.
    pub cost: f64,
    /// Episode cost of the default gains, for comparison.
    pub default_cost: f64,
    /// Raw optimizer outcome (evaluation counts, trace), when a search ran.
    pub search: Option<OptimResult>,
}

/// Tunes `(kp, ki, band)` against an episode cost function, typically the
/// tracking-error integral of a short simulated run.
///
/// The search never makes things worse: the default gains are scored first
/// and returned unless the optimizer strictly beats them. Degenerate box
/// edges (`low == high`) pin that gain; if all three are pinned no search
/// runs at all. Episode failures inside the objective surface as non-finite
/// costs and are rejected by the optimizer.
pub fn roa_tune<F: FnMut(f64, f64, f64) -> f64>(
    mut episode_cost: F,
    defaults: (f64, f64, f64),
    gain_box: [(f64, f64); 3],
    params: &RoaParams,
) -> Result<TunedGains, VscError> {
    for (k, &(lo, hi)) in gain_box.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(VscError::InvalidGainBox(format!(
                "gain {k}: need finite low <= high, got ({lo}, {hi})"
            )));
        }
    }
    let raw_default = episode_cost(defaults.0, defaults.1, defaults.2);
    let default_cost = if raw_default.is_finite() { raw_default } else { f64::INFINITY };

    // Pin any variable whose box edge collapsed to a point.
    let free: Vec<usize> = (0..3).filter(|&k| gain_box[k].0 < gain_box[k].1).collect();
    if free.is_empty() {
        let pinned = (gain_box[0].0, gain_box[1].0, gain_box[2].0);
        let cost = if pinned == defaults {
            default_cost
        } else {
            let c = episode_cost(pinned.0, pinned.1, pinned.2);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        };
        if !cost.is_finite() && !default_cost.is_finite() {
            return Err(VscError::TuningFailed);
        }
        let (kp, ki, band, cost) = if cost <= default_cost {
            (pinned.0, pinned.1, pinned.2, cost)
        } else {
            (defaults.0, defaults.1, defaults.2, default_cost)
        };
        return Ok(TunedGains { kp, ki, band, cost, default_cost, search: None });
    }

    let bounds = Bounds::new(free.iter().map(|&k| gain_box[k]).collect())?;
    let assemble = |x: &[f64]| {
        let mut gains = [gain_box[0].0, gain_box[1].0, gain_box[2].0];
        for (slot, &k) in free.iter().enumerate() {
            gains[k] = x[slot];
        }
        gains
    };
    let result = roa_minimize(
        |x| {
            let g = assemble(x);
            episode_cost(g[0], g[1], g[2])
        },
        &bounds,
        params,
    )?;

    if result.cost.is_finite() && result.cost < default_cost {
        let g = assemble(&result.best);
        Ok(TunedGains {
            kp: g[0],
            ki: g[1],
            band: g[2],
            cost: result.cost,
            default_cost,
            search: Some(result),
        })
    } else if default_cost.is_finite() {
        Ok(TunedGains {
            kp: defaults.0,
            ki: defaults.1,
            band: defaults.2,
            cost: default_cost,
            default_cost,
            search: Some(result),
        })
    } else {
        Err(VscError::TuningFailed)
    }
}
