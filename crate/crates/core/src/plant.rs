//! Electrical plant pieces: averaged boost stage, DC link, switched
//! converter legs, ideal-diode bridge load, stiff grid source, and the
//! ripple-filter node algebra.
//!
//! Sign conventions: converter phase currents are positive flowing into the
//! point of common coupling, grid currents are positive flowing from the
//! coupling point into the grid (export), and load currents are positive
//! drawn out of the coupling point. The filter then absorbs
//! `i_vsc − i_g − i_load` per phase.

use thiserror::Error;

/// DC-link voltage below which the simulation is considered faulted.
pub const DC_COLLAPSE_FLOOR: f64 = 50.0;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("DC link collapsed to {0:.2} V")]
    DcLinkCollapse(f64),
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
}

/// Stiff-source grid behind a small inductance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Line-to-line RMS voltage, V.
    pub v_ll_rms: f64,
    /// Fundamental frequency, Hz.
    pub freq: f64,
    /// Per-phase source inductance, H.
    pub source_inductance: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { v_ll_rms: 415.0, freq: 50.0, source_inductance: 50.0e-6 }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.v_ll_rms > 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "grid.v_ll_rms must be positive, got {}",
                self.v_ll_rms
            )));
        }
        if !(self.freq > 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "grid.freq must be positive, got {}",
                self.freq
            )));
        }
        if !(self.source_inductance > 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "grid.source_inductance must be positive, got {}",
                self.source_inductance
            )));
        }
        Ok(())
    }

    /// Phase EMFs at time `t`: peak `√2·v_ll/√3`, phases 120° apart.
    pub fn emf(&self, t: f64) -> [f64; 3] {
        let peak = std::f64::consts::SQRT_2 * self.v_ll_rms / 3.0f64.sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.freq * t;
        [
            peak * theta.sin(),
            peak * (theta - 2.0 * std::f64::consts::PI / 3.0).sin(),
            peak * (theta + 2.0 * std::f64::consts::PI / 3.0).sin(),
        ]
    }
}

/// Removal of one supply phase of the bridge load for a time window.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDisconnect {
    /// Phase index 0..3 (a, b, c).
    pub phase: usize,
    pub t_on: f64,
    pub t_off: f64,
}

/// Diode-bridge rectifier feeding a series RL on its DC side.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub bridge_r: f64,
    pub bridge_l: f64,
    /// Time constant of the line-current hand-off between conduction
    /// pairs, s — the series inductance every real bridge commutates
    /// against. Zero commutates instantly.
    pub commutation_time: f64,
    pub phase_disconnect: Option<PhaseDisconnect>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig {
            bridge_r: 25.0,
            bridge_l: 0.1,
            commutation_time: 8.0e-4,
            phase_disconnect: None,
        }
    }
}

impl LoadConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.bridge_r > 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "load.bridge_r must be positive, got {}",
                self.bridge_r
            )));
        }
        if !(self.bridge_l >= 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "load.bridge_l must be non-negative, got {}",
                self.bridge_l
            )));
        }
        if !(self.commutation_time >= 0.0 && self.commutation_time.is_finite()) {
            return Err(PlantError::InvalidConfig(format!(
                "load.commutation_time must be finite and non-negative, got {}",
                self.commutation_time
            )));
        }
        if let Some(d) = self.phase_disconnect {
            if d.phase >= 3 {
                return Err(PlantError::InvalidConfig(format!(
                    "load.phase_disconnect.phase must be 0, 1 or 2, got {}",
                    d.phase
                )));
            }
            if !(d.t_on < d.t_off) {
                return Err(PlantError::InvalidConfig(format!(
                    "load.phase_disconnect window must have t_on < t_off, got [{}, {}]",
                    d.t_on, d.t_off
                )));
            }
        }
        Ok(())
    }

    /// Which supply phases are wired in at time `t`.
    pub fn connected(&self, t: f64) -> [bool; 3] {
        let mut c = [true; 3];
        if let Some(d) = self.phase_disconnect {
            if t >= d.t_on && t < d.t_off {
                c[d.phase] = false;
            }
        }
        c
    }
}

/// Passive-component values of the conversion chain.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Boost inductor, H.
    pub boost_inductance: f64,
    /// DC-link capacitance, F.
    pub dc_capacitance: f64,
    /// Converter interfacing inductance per phase, H.
    pub vsc_inductance: f64,
    /// Series resistance of the interfacing inductor, Ω.
    pub vsc_resistance: f64,
    /// Ripple-filter series resistance, Ω.
    pub filter_r: f64,
    /// Ripple-filter capacitance per phase, F.
    pub filter_c: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            boost_inductance: 5.0e-3,
            dc_capacitance: 3.0e-3,
            vsc_inductance: 2.5e-3,
            vsc_resistance: 0.05,
            filter_r: 5.0,
            filter_c: 10.0e-6,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("plant.boost_inductance", self.boost_inductance),
            ("plant.dc_capacitance", self.dc_capacitance),
            ("plant.vsc_inductance", self.vsc_inductance),
            ("plant.filter_r", self.filter_r),
            ("plant.filter_c", self.filter_c),
        ] {
            if !(v > 0.0) {
                return Err(PlantError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.vsc_resistance >= 0.0) {
            return Err(PlantError::InvalidConfig(format!(
                "plant.vsc_resistance must be non-negative, got {}",
                self.vsc_resistance
            )));
        }
        Ok(())
    }
}

/// Integrator state of the whole electrical chain.
#[derive(Debug, Clone)]
pub struct PlantState {
    pub v_dc: f64,
    pub boost_inductor_current: f64,
    /// Converter phase currents into the coupling point, A.
    pub vsc_currents: [f64; 3],
    /// Grid currents, export-positive, A.
    pub grid_currents: [f64; 3],
    /// Ripple-filter capacitor voltages, V.
    pub ripple_filter_volts: [f64; 3],
    /// DC-side current of the bridge load, A.
    pub load_bridge_current: f64,
    /// AC line currents of the bridge load, A.
    pub load_line_currents: [f64; 3],
    /// Conducting phase pair of the bridge, `(from, to)`.
    pub bridge_pair: Option<(usize, usize)>,
    pub time: f64,
}

impl PlantState {
    /// Rest state with a pre-charged link and filter capacitors sitting at
    /// the instantaneous grid EMF.
    pub fn at_rest(v_dc: f64, grid: &GridParams) -> Self {
        PlantState {
            v_dc,
            boost_inductor_current: 0.0,
            vsc_currents: [0.0; 3],
            grid_currents: [0.0; 3],
            ripple_filter_volts: grid.emf(0.0),
            load_bridge_current: 0.0,
            load_line_currents: [0.0; 3],
            bridge_pair: None,
            time: 0.0,
        }
    }
}

/// Averaged boost inductor update: `L·di/dt = v_pv − (1−duty)·v_dc`, with a
/// discontinuous-conduction floor at zero. Returns the new current.
pub fn step_boost(
    current: f64,
    duty: f64,
    v_pv: f64,
    v_dc: f64,
    inductance: f64,
    dt: f64,
) -> f64 {
    let di = (v_pv - (1.0 - duty) * v_dc) / inductance;
    (current + dt * di).max(0.0)
}

/// Capacitor power balance `C·dv/dt = (p_in − p_out)/v`. Fails when the
/// link collapses below [`DC_COLLAPSE_FLOOR`].
pub fn step_dclink(
    v_dc: f64,
    p_in: f64,
    p_out: f64,
    capacitance: f64,
    dt: f64,
) -> Result<f64, PlantError> {
    let next = v_dc + dt * (p_in - p_out) / (capacitance * v_dc);
    if !(next >= DC_COLLAPSE_FLOOR) {
        return Err(PlantError::DcLinkCollapse(next));
    }
    Ok(next)
}

/// Pole voltages of the three legs with the common mode removed, so the
/// applied phase voltages are balanced regardless of the switch pattern.
pub fn pole_voltages(legs: [bool; 3], v_dc: f64) -> [f64; 3] {
    let raw = legs.map(|on| if on { 0.5 * v_dc } else { -0.5 * v_dc });
    let common = (raw[0] + raw[1] + raw[2]) / 3.0;
    raw.map(|v| v - common)
}

/// Interfacing-inductor update per phase:
/// `L·di/dt = v_pole − v_pcc − R·i`. Returns the new currents.
pub fn step_vsc_currents(
    currents: [f64; 3],
    legs: [bool; 3],
    v_dc: f64,
    v_pcc: [f64; 3],
    inductance: f64,
    resistance: f64,
    dt: f64,
) -> [f64; 3] {
    let pole = pole_voltages(legs, v_dc);
    let mut next = currents;
    for ph in 0..3 {
        let di = (pole[ph] - v_pcc[ph] - resistance * currents[ph]) / inductance;
        next[ph] = currents[ph] + dt * di;
    }
    next
}

/// Conducting pair of the ideal-diode bridge: the connected phase pair with
/// the largest line-to-line voltage, oriented positive. `None` when fewer
/// than two phases are wired in.
pub fn bridge_conduction(v_pcc: [f64; 3], connected: [bool; 3]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for from in 0..3 {
        for to in 0..3 {
            if from == to || !connected[from] || !connected[to] {
                continue;
            }
            let v = v_pcc[from] - v_pcc[to];
            if best.map(|(_, _, b)| v > b).unwrap_or(true) {
                best = Some((from, to, v));
            }
        }
    }
    best.map(|(f, t, _)| (f, t))
}

/// DC-side RL update of the bridge: `L·di/dt = v_rect − R·i`, ideal diodes
/// keep `i ≥ 0`. A zero-inductance load solves algebraically instead.
pub fn step_bridge_current(i_dc: f64, v_rect: f64, r: f64, l: f64, dt: f64) -> f64 {
    if l <= 0.0 {
        return (v_rect / r).max(0.0);
    }
    (i_dc + dt * (v_rect - r * i_dc) / l).max(0.0)
}

/// AC line currents drawn by the bridge for a given conduction pair.
pub fn bridge_line_currents(pair: Option<(usize, usize)>, i_dc: f64) -> [f64; 3] {
    let mut i = [0.0; 3];
    if let Some((from, to)) = pair {
        i[from] = i_dc;
        i[to] = -i_dc;
    }
    i
}

/// Finite-rate hand-off of the bridge line currents toward the conduction
/// pattern: a first-order approach with time constant `tau`, standing in
/// for the series inductance the current transfer works against. A time
/// constant at or below the step commutates instantly.
pub fn step_commutation(i_line: [f64; 3], target: [f64; 3], tau: f64, dt: f64) -> [f64; 3] {
    if tau <= dt {
        return target;
    }
    let alpha = dt / tau;
    [
        i_line[0] + alpha * (target[0] - i_line[0]),
        i_line[1] + alpha * (target[1] - i_line[1]),
        i_line[2] + alpha * (target[2] - i_line[2]),
    ]
}

/// Per-phase filter current from the coupling-point current balance.
pub fn filter_currents(i_vsc: [f64; 3], i_g: [f64; 3], i_load: [f64; 3]) -> [f64; 3] {
    [
        i_vsc[0] - i_g[0] - i_load[0],
        i_vsc[1] - i_g[1] - i_load[1],
        i_vsc[2] - i_g[2] - i_load[2],
    ]
}

/// Coupling-point voltages: capacitor voltage plus the resistive rise of
/// the filter current.
pub fn pcc_voltages(filter_volts: [f64; 3], i_filter: [f64; 3], filter_r: f64) -> [f64; 3] {
    [
        filter_volts[0] + filter_r * i_filter[0],
        filter_volts[1] + filter_r * i_filter[1],
        filter_volts[2] + filter_r * i_filter[2],
    ]
}
