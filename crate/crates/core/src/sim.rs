//! The fixed-step run engine: wires the array, boost stage, DC link,
//! switched converter, ripple filter, stiff grid, and bridge load to the
//! tracker and converter control, producing a complete signal trace.
//!
//! One run is strictly single-threaded and free of hidden state; RNG is
//! only touched during preparation (network training, gain search), so a
//! prepared engine replays bit-identically.

use thiserror::Error;

use crate::anfis::AnfisNet;
use crate::mppt::{self, MpptError, MpptState};
use crate::optim::{self, Bounds, PsoParams, RoaParams};
use crate::plant::{self, PlantError};
use crate::pv::{OperatingPoint, PvArrayModel, PvError, PvModule};
use crate::scenario::{MpptVariant, Scenario, ScenarioError, TuneChoice};
use crate::trace::{SimTrace, TraceRow};
use crate::vsc::{self, ControlOutput, TunedGains, VscController, VscError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Pv(#[from] PvError),
    #[error(transparent)]
    Mppt(#[from] MpptError),
    #[error(transparent)]
    Vsc(#[from] VscError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Why a run stopped before its configured duration.
#[derive(Debug, Clone)]
pub struct SimFault {
    /// Simulated time of the abort, s.
    pub time: f64,
    pub what: String,
}

impl std::fmt::Display for SimFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "fault at t = {:.6} s: {}", self.time, self.what)
    }
}

/// A finished run: the recorded channels, plus the fault that cut it short
/// if one did. A faulted trace is complete up to the fault instant.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: SimTrace,
    pub fault: Option<SimFault>,
}

/// One constant-irradiance stretch of the run.
struct Segment {
    start: f64,
    array: PvArrayModel,
    mpp: OperatingPoint,
    mean_irradiance: f64,
}

/// A scenario with everything expensive already done: module curve fitted,
/// per-segment array models built, tracker network trained, and gains
/// tuned. Running it is pure arithmetic.
pub struct Prepared {
    cfg: Scenario,
    segments: Vec<Segment>,
    net: Option<AnfisNet>,
    tuned: Option<TunedGains>,
    g_ref: f64,
    /// Link reference after the rectification floor, V.
    v_dcref_base: f64,
    /// Rated grid-current amplitude, A.
    i_rated: f64,
}

impl Prepared {
    /// Validates, fits, trains, and (when configured) tunes. The tracker
    /// network is trained on uniform-irradiance sweeps of the configured
    /// array, so it is shared by every segment.
    pub fn new(cfg: Scenario) -> Result<Self, SimError> {
        let net = match cfg.mppt.variant {
            MpptVariant::Anfis => {
                let module = PvModule::fit(cfg.array.module.clone())?;
                Some(mppt::train_default_tracker(&module, &cfg.array)?.0)
            }
            _ => None,
        };
        Self::with_network(cfg, net)
    }

    /// Like [`Prepared::new`] but reusing an already-trained step-size
    /// network (pass `None` for the baseline variants).
    pub fn with_network(cfg: Scenario, net: Option<AnfisNet>) -> Result<Self, SimError> {
        cfg.validate()?;
        if cfg.mppt.variant == MpptVariant::Anfis && !net.as_ref().is_some_and(|n| n.is_trained())
        {
            return Err(SimError::Mppt(MpptError::UntrainedNetwork));
        }

        let module = PvModule::fit(cfg.array.module.clone())?;
        let mut segments = Vec::new();
        let mut starts = vec![0.0];
        starts.extend(cfg.schedule.iter().map(|e| e.time));
        for &start in &starts {
            let mut section_cfg = cfg.array.clone();
            let levels = cfg.irradiance_at(start);
            for (s, g) in section_cfg.sections.iter_mut().zip(&levels) {
                s.irradiance = *g;
            }
            let array = PvArrayModel::from_module(module.clone(), &section_cfg)?;
            let mpp = array.true_mpp();
            let weight: f64 = section_cfg.sections.iter().map(|s| s.modules_in_series as f64).sum();
            let mean_irradiance = section_cfg
                .sections
                .iter()
                .map(|s| s.irradiance * s.modules_in_series as f64 / weight)
                .sum();
            segments.push(Segment { start, array, mpp, mean_irradiance });
        }

        let g_ref = mppt::reference_conductance(&cfg.array);
        let floor = mppt::dcref_floor(cfg.grid.v_ll_rms, cfg.mppt.gamma)?;
        let v_dcref_base = cfg.controller.v_dcref.max(floor);
        let v_t_nom = std::f64::consts::SQRT_2 * cfg.grid.v_ll_rms / 3.0f64.sqrt();
        let p_rated = cfg.array.n_series as f64
            * cfg.array.n_parallel as f64
            * cfg.array.module.v_mp
            * cfg.array.module.i_mp;
        let i_rated = 2.0 * p_rated / (3.0 * v_t_nom);

        let mut prepared =
            Prepared { cfg, segments, net, tuned: None, g_ref, v_dcref_base, i_rated };
        prepared.tuned = prepared.tune_gains()?;
        Ok(prepared)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.cfg
    }

    /// Gain-search outcome, when the scenario asked for one.
    pub fn tuned(&self) -> Option<&TunedGains> {
        self.tuned.as_ref()
    }

    /// The trained step-size network, when the tracker uses one.
    pub fn network(&self) -> Option<&AnfisNet> {
        self.net.as_ref()
    }

    /// `(segment start time, true peak)` per constant-irradiance stretch —
    /// the oracle the tracking metrics are judged against.
    pub fn mpp_oracle(&self) -> Vec<(f64, OperatingPoint)> {
        self.segments.iter().map(|s| (s.start, s.mpp)).collect()
    }

    /// The gains the main run uses: tuned if a search ran and won, the
    /// scenario's otherwise.
    pub fn gains(&self) -> (f64, f64, f64) {
        match &self.tuned {
            Some(t) => (t.kp, t.ki, t.band),
            None => (self.cfg.controller.kp, self.cfg.controller.ki, self.cfg.controller.band),
        }
    }

    /// Executes the full scenario.
    pub fn run(&self) -> Result<SimOutcome, SimError> {
        let (kp, ki, band) = self.gains();
        self.run_core(kp, ki, band, self.cfg.duration)
    }

    /// Episode cost for the gain search: tracking-error integral of the
    /// gated currents plus one tenth of the link-error integral, over a
    /// short startup window. Faulted episodes cost infinity.
    fn episode_cost(&self, kp: f64, ki: f64, band: f64) -> f64 {
        let outcome = match self.run_core(kp, ki, band, self.cfg.controller.tune_duration) {
            Ok(o) => o,
            Err(_) => return f64::INFINITY,
        };
        if outcome.fault.is_some() {
            return f64::INFINITY;
        }
        let t = &outcome.trace;
        let dt = self.cfg.step;
        let mut j = 0.0;
        for k in 0..t.len() {
            for ph in 0..3 {
                j += (t.i_gref[ph][k] - t.i_g[ph][k]).abs() * dt;
            }
            j += 0.1 * (t.v_dcref[k] - t.v_dc[k]).abs() * dt;
        }
        j
    }

    fn tune_gains(&self) -> Result<Option<TunedGains>, SimError> {
        let c = &self.cfg.controller;
        let defaults = (c.kp, c.ki, c.band);
        match c.tune {
            TuneChoice::None => Ok(None),
            TuneChoice::Roa => {
                let params = RoaParams {
                    population: c.tune_population,
                    max_iters: c.tune_iters,
                    seed: self.cfg.seed,
                    ..RoaParams::default()
                };
                let gain_box = [
                    (c.kp_range[0], c.kp_range[1]),
                    (c.ki_range[0], c.ki_range[1]),
                    (c.band_range[0], c.band_range[1]),
                ];
                let tuned = vsc::roa_tune(
                    |kp, ki, band| self.episode_cost(kp, ki, band),
                    defaults,
                    gain_box,
                    &params,
                )?;
                Ok(Some(tuned))
            }
            TuneChoice::Pso => Ok(Some(self.pso_tune(defaults)?)),
        }
    }

    /// Particle-swarm variant of the gain search, with the same
    /// never-worse-than-default guarantee as the rain search.
    fn pso_tune(&self, defaults: (f64, f64, f64)) -> Result<TunedGains, SimError> {
        let c = &self.cfg.controller;
        let raw_default = self.episode_cost(defaults.0, defaults.1, defaults.2);
        let default_cost = if raw_default.is_finite() { raw_default } else { f64::INFINITY };
        let (kp_r, ki_r, band_r) = (c.kp_range, c.ki_range, c.band_range);
        if kp_r[0] >= kp_r[1] || ki_r[0] >= ki_r[1] || band_r[0] >= band_r[1] {
            // A degenerate box leaves nothing to search.
            return Ok(TunedGains {
                kp: defaults.0,
                ki: defaults.1,
                band: defaults.2,
                cost: default_cost,
                default_cost,
                search: None,
            });
        }
        let bounds = Bounds::new(vec![
            (kp_r[0], kp_r[1]),
            (ki_r[0], ki_r[1]),
            (band_r[0], band_r[1]),
        ])
        .map_err(VscError::Optim)?;
        let params = PsoParams {
            population: c.tune_population,
            max_iters: c.tune_iters,
            seed: self.cfg.seed,
            ..PsoParams::default()
        };
        let result = optim::pso_minimize(
            |x| self.episode_cost(x[0], x[1], x[2]),
            &bounds,
            &params,
        )
        .map_err(VscError::Optim)?;
        if result.cost.is_finite() && result.cost < default_cost {
            Ok(TunedGains {
                kp: result.best[0],
                ki: result.best[1],
                band: result.best[2],
                cost: result.cost,
                default_cost,
                search: Some(result),
            })
        } else {
            Ok(TunedGains {
                kp: defaults.0,
                ki: defaults.1,
                band: defaults.2,
                cost: default_cost,
                default_cost,
                search: Some(result),
            })
        }
    }

    /// The integration loop. Records `duration/step + 1` samples unless a
    /// fault cuts the run short; the trace is finite up to the fault.
    fn run_core(
        &self,
        kp: f64,
        ki: f64,
        band: f64,
        duration: f64,
    ) -> Result<SimOutcome, SimError> {
        let cfg = &self.cfg;
        let dt = cfg.step;
        let n = (duration / dt).round() as usize;
        let control_every = cfg.control_every();
        let mppt_every = cfg.mppt_every();
        let quarter = (1.0 / (cfg.grid.freq * dt) / 4.0).round() as usize;
        let i_fault = 5.0 * self.i_rated;

        let mut trace = SimTrace::with_capacity(n + 1);
        let mut fault: Option<SimFault> = None;

        // Velocity-form discretization: the configured integral gain acts
        // per second of link error, so each control sample integrates its
        // sample_time share of it.
        let ki_sample = ki * cfg.controller.sample_time;
        let mut ctl = VscController::new(kp, ki_sample, band, 1.5 * self.i_rated)?;
        ctl.feedforward_form = cfg.controller.feedforward;
        ctl.link_sense =
            vsc::LinkSense::ripple_notches(cfg.grid.freq, control_every as f64 * dt);
        let mut tracker = MpptState::new(
            cfg.mppt.initial_duty,
            self.v_dcref_base,
            self.v_dcref_base,
            cfg.mppt.v_dcref_max,
            self.g_ref,
        );
        tracker.step = cfg.mppt.step_v;
        tracker.delta_d = cfg.mppt.delta_d;
        let mut v_dcref = self.v_dcref_base;

        // Plant state, everything at rest behind a pre-charged link.
        let mut v_dc = cfg.controller.v_dcref;
        let mut i_lb = 0.0f64;
        let mut i_vsc = [0.0f64; 3];
        let mut i_g = [0.0f64; 3];
        let mut v_cf = cfg.grid.emf(0.0);
        let mut i_bridge = 0.0f64;
        let mut i_load = [0.0f64; 3];
        let mut v_pcc_prev = v_cf;
        let mut refs_export = [0.0f64; 3];
        let mut v_hist = vec![[0.0f64; 3]; quarter.max(1)];

        let mut seg = 0usize;
        for k in 0..=n {
            let t = k as f64 * dt;
            while seg + 1 < self.segments.len() && t + dt / 2.0 >= self.segments[seg + 1].start {
                seg += 1;
            }
            let segment = &self.segments[seg];

            // Sense.
            let v_pv = segment.array.voltage_at_current(i_lb);
            let i_pv = i_lb;
            let p_pv = v_pv * i_pv;
            let connected = cfg.load.connected(t);
            let pair = plant::bridge_conduction(v_pcc_prev, connected);
            i_load = plant::step_commutation(
                i_load,
                plant::bridge_line_currents(pair, i_bridge),
                cfg.load.commutation_time,
                dt,
            );
            let i_f = plant::filter_currents(i_vsc, i_g, i_load);
            let v_pcc = plant::pcc_voltages(v_cf, i_f, cfg.plant.filter_r);

            // Control sample.
            let legs = if k % control_every == 0 {
                let out: ControlOutput = match ctl.step(
                    v_dcref,
                    v_dc,
                    v_pcc[0] - v_pcc[1],
                    v_pcc[1] - v_pcc[2],
                    p_pv,
                    i_g,
                ) {
                    Ok(out) => out,
                    Err(e) => {
                        fault = Some(SimFault { time: t, what: e.to_string() });
                        break;
                    }
                };
                refs_export = out.export_references();
                out.legs
            } else {
                // Between control samples the references hold, but the
                // hysteresis comparator stays live at the plant step — at
                // the control period alone the current would slew amps past
                // the band before the next look.
                ctl.regate(i_g, refs_export)
            };

            // Tracker decision.
            if k % mppt_every == 0 {
                if k == 0 {
                    tracker.record_sample(v_pv, i_pv);
                } else {
                    match cfg.mppt.variant {
                        MpptVariant::Anfis => {
                            let net = self.net.as_ref().expect("checked at preparation");
                            mppt::anfis_duty(net, &mut tracker, v_pv, i_pv, cfg.mppt.epsilon)?;
                        }
                        MpptVariant::Po => {
                            let p_prev = tracker.prev_v * tracker.prev_i;
                            mppt::po_baseline(&mut tracker, v_pv, i_pv, p_prev);
                        }
                        MpptVariant::Vdcref => {
                            let dv = v_pv - tracker.prev_v;
                            let di = i_pv - tracker.prev_i;
                            v_dcref = mppt::perturb_vdcref(
                                &mut tracker,
                                dv,
                                di,
                                v_pv,
                                i_pv,
                                cfg.mppt.epsilon,
                            );
                            tracker.record_sample(v_pv, i_pv);
                        }
                    }
                }
            }

            // Reactive power from the quarter-period-delayed voltage, zero
            // until enough history exists.
            let q_g = if k >= quarter {
                let delayed = v_hist[k % quarter.max(1)];
                (0..3).map(|ph| delayed[ph] * i_g[ph]).sum()
            } else {
                0.0
            };
            v_hist[k % quarter.max(1)] = v_pcc;
            let p_g = (0..3).map(|ph| v_pcc[ph] * i_g[ph]).sum();

            let row = TraceRow {
                time: t,
                v_g: v_pcc,
                i_g,
                i_load,
                i_vsc,
                i_gref: refs_export,
                v_dc,
                v_dcref,
                p_pv,
                i_pv,
                v_pv,
                p_g,
                q_g,
                duty: tracker.duty,
                irradiance: segment.mean_irradiance,
            };
            if let Some(name) = non_finite_channel(&row) {
                fault = Some(SimFault { time: t, what: format!("non-finite sample in {name}") });
                break;
            }
            trace.push(row);

            if let Some(ph) = (0..3).find(|&ph| i_vsc[ph].abs() > i_fault) {
                fault = Some(SimFault {
                    time: t,
                    what: format!(
                        "converter phase {} current {:.1} A exceeds five times the {:.1} A rating",
                        ["a", "b", "c"][ph],
                        i_vsc[ph],
                        self.i_rated
                    ),
                });
                break;
            }
            if k == n {
                break;
            }

            // Integrate one plant step.
            let pole = plant::pole_voltages(legs, v_dc);
            let p_out: f64 = (0..3).map(|ph| pole[ph] * i_vsc[ph]).sum();
            let p_in = (1.0 - tracker.duty) * v_dc * i_lb;
            i_vsc = plant::step_vsc_currents(
                i_vsc,
                legs,
                v_dc,
                v_pcc,
                cfg.plant.vsc_inductance,
                cfg.plant.vsc_resistance,
                dt,
            );
            let e = cfg.grid.emf(t);
            for ph in 0..3 {
                i_g[ph] += dt * (v_pcc[ph] - e[ph]) / cfg.grid.source_inductance;
                v_cf[ph] += dt * i_f[ph] / cfg.plant.filter_c;
            }
            let v_rect = pair.map(|(from, to)| v_pcc[from] - v_pcc[to]).unwrap_or(0.0);
            i_bridge = plant::step_bridge_current(
                i_bridge,
                v_rect,
                cfg.load.bridge_r,
                cfg.load.bridge_l,
                dt,
            );
            i_lb = plant::step_boost(i_lb, tracker.duty, v_pv, v_dc, cfg.plant.boost_inductance, dt);
            v_dc = match plant::step_dclink(v_dc, p_in, p_out, cfg.plant.dc_capacitance, dt) {
                Ok(v) => v,
                Err(e) => {
                    fault = Some(SimFault { time: t, what: e.to_string() });
                    break;
                }
            };
            v_pcc_prev = v_pcc;
        }

        Ok(SimOutcome { trace, fault })
    }
}

/// Validates, prepares, and runs a scenario in one call.
pub fn run_scenario(cfg: Scenario) -> Result<SimOutcome, SimError> {
    Prepared::new(cfg)?.run()
}

fn non_finite_channel(row: &TraceRow) -> Option<&'static str> {
    let values = row.to_array();
    let names = crate::trace::column_names();
    values.iter().position(|v| !v.is_finite()).map(|k| names[k])
}
