//! Photovoltaic source model.
//!
//! A module is described by its datasheet corner points (open circuit, short
//! circuit, maximum power) and realised as a five-parameter single-diode
//! equivalent circuit. The five parameters are fitted once at construction so
//! the modelled curve actually passes through the datasheet points and peaks
//! at the datasheet maximum-power voltage; everything downstream (array
//! scaling, shading, MPP search) works off the fitted curve.
//!
//! Arrays are built from series *sections* — runs of modules that share one
//! irradiance value and one bypass diode — replicated over parallel strings.
//! Uneven section irradiance bends the I–V curve into multiple local maxima,
//! which is exactly the regime the MPP oracle (`true_mpp`) has to survive.

use thiserror::Error;

/// Boltzmann constant, J/K.
const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C.
const CHARGE: f64 = 1.602_176_634e-19;
/// Forward drop of a conducting bypass diode, V.
const BYPASS_DROP: f64 = 0.7;
/// Grid spacing for the exhaustive maximum-power sweep, V.
const MPP_SWEEP_STEP: f64 = 0.01;

/// Errors raised while validating parameters or fitting the diode model.
#[derive(Debug, Error)]
pub enum PvError {
    #[error("invalid module parameters: {0}")]
    InvalidParams(String),
    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),
    #[error("single-diode fit failed: {0}")]
    FitFailed(String),
}

/// Datasheet description of one PV module at reference conditions.
///
/// `ideality` is the diode quality factor lumped over the whole series cell
/// string (cell ideality × number of series cells), so the diode thermal
/// scale is simply `ideality · kT/q` and no separate cell count is needed.
/// `r_series` and `r_shunt` seed the construction-time fit; the fitted values
/// are what the model actually uses.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvModuleParams {
    /// Maximum-power voltage at reference conditions, V.
    pub v_mp: f64,
    /// Maximum-power current at reference conditions, A.
    pub i_mp: f64,
    /// Open-circuit voltage at reference conditions, V.
    pub v_oc: f64,
    /// Short-circuit current at reference conditions, A.
    pub i_sc: f64,
    /// Lumped diode quality factor (dimensionless).
    pub ideality: f64,
    /// Series resistance seed, Ω.
    pub r_series: f64,
    /// Shunt resistance seed, Ω.
    pub r_shunt: f64,
    /// Reference irradiance, W/m².
    pub ref_irradiance: f64,
    /// Reference cell temperature, °C.
    pub ref_temp: f64,
}

impl Default for PvModuleParams {
    /// A 200 W-class 54-cell module (26.3 V / 7.61 A at maximum power).
    fn default() -> Self {
        PvModuleParams {
            v_mp: 26.3,
            i_mp: 7.61,
            v_oc: 32.9,
            i_sc: 8.21,
            ideality: 70.2,
            r_series: 0.22,
            r_shunt: 415.0,
            ref_irradiance: 1000.0,
            ref_temp: 25.0,
        }
    }
}

impl PvModuleParams {
    fn validate(&self) -> Result<(), PvError> {
        let positive = [
            ("v_mp", self.v_mp),
            ("i_mp", self.i_mp),
            ("v_oc", self.v_oc),
            ("i_sc", self.i_sc),
            ("ideality", self.ideality),
            ("r_shunt", self.r_shunt),
            ("ref_irradiance", self.ref_irradiance),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(PvError::InvalidParams(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !(self.r_series.is_finite() && self.r_series >= 0.0) {
            return Err(PvError::InvalidParams(format!(
                "r_series must be finite and non-negative, got {}",
                self.r_series
            )));
        }
        if self.v_mp >= self.v_oc {
            return Err(PvError::InvalidParams(format!(
                "v_mp ({}) must lie below v_oc ({})",
                self.v_mp, self.v_oc
            )));
        }
        if self.i_mp >= self.i_sc {
            return Err(PvError::InvalidParams(format!(
                "i_mp ({}) must lie below i_sc ({})",
                self.i_mp, self.i_sc
            )));
        }
        if !(self.ref_temp.is_finite() && self.ref_temp > -273.15) {
            return Err(PvError::InvalidParams(format!(
                "ref_temp must be above absolute zero, got {}",
                self.ref_temp
            )));
        }
        Ok(())
    }
}

/// Single-diode coefficients at one operating condition (irradiance and
/// temperature folded in). All module-level curve evaluations go through
/// this.
#[derive(Debug, Clone, Copy)]
struct DiodeParams {
    /// Photocurrent, A.
    i_ph: f64,
    /// Diode saturation current, A.
    i_sat: f64,
    /// Diode thermal scale ideality·kT/q, V.
    a: f64,
    r_s: f64,
    r_sh: f64,
}

impl DiodeParams {
    /// Module current at terminal voltage `v`, found by safeguarded bisection
    /// of the implicit diode equation. Valid for `0 ≤ v < v_oc`; the caller
    /// clamps outside that range.
    fn current(&self, v: f64) -> f64 {
        let f = |i: f64| {
            let u = v + i * self.r_s;
            self.i_ph - self.i_sat * exp_m1_clamped(u / self.a) - u / self.r_sh - i
        };
        let mut lo = 0.0;
        let mut hi = self.i_ph + 1.0;
        if f(lo) <= 0.0 {
            return 0.0;
        }
        // Newton from the r_s-free estimate, falling back to bisection
        // whenever a step leaves the bracket.
        let mut x = (self.i_ph - self.i_sat * exp_m1_clamped(v / self.a) - v / self.r_sh)
            .clamp(lo, hi);
        for _ in 0..200 {
            let u = v + x * self.r_s;
            let e = exp_m1_clamped(u / self.a);
            let fx = self.i_ph - self.i_sat * e - u / self.r_sh - x;
            if fx.abs() < 1.0e-12 {
                return x;
            }
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let dfx = -self.i_sat * (e + 1.0) * self.r_s / self.a - self.r_s / self.r_sh - 1.0;
            let newton = x - fx / dfx;
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1.0e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        x
    }

    /// Module terminal voltage at string current `i`. Unlike `current` this
    /// is solved in the junction voltage `u = v + i·r_s`, where the equation
    /// is explicit and strictly decreasing, so no nested iteration is needed.
    /// The result may be negative (reverse-driven module); bypass clamping is
    /// applied at section level.
    fn voltage(&self, i: f64) -> f64 {
        // h(u) = i_ph − i_sat·(e^{u/a} − 1) − u/r_sh − i is strictly
        // decreasing: positive at the deeply reverse end, negative past the
        // forward knee, so a hard bracket exists without searching.
        let mut lo = -(i + self.i_ph + 1.0) * self.r_sh - 1.0;
        let mut hi = self.a * ((self.i_ph + 1.0) / self.i_sat + 1.0).ln() + 1.0;
        let mut u = if self.i_ph - i > 0.0 {
            self.a * ((self.i_ph - i) / self.i_sat + 1.0).ln()
        } else {
            self.r_sh * (self.i_ph - i + self.i_sat)
        }
        .clamp(lo, hi);
        for _ in 0..200 {
            let e = exp_m1_clamped(u / self.a);
            let hu = self.i_ph - self.i_sat * e - u / self.r_sh - i;
            if hu.abs() < 1.0e-12 {
                break;
            }
            if hu > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let dhu = -self.i_sat * (e + 1.0) / self.a - 1.0 / self.r_sh;
            let newton = u - hu / dhu;
            u = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1.0e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        u - i * self.r_s
    }

    /// Open-circuit voltage under these conditions.
    fn open_circuit(&self) -> f64 {
        self.voltage(0.0)
    }
}

/// `exp(x) - 1` with the argument clamped so pathological inputs cannot
/// overflow to infinity and poison the root finders.
fn exp_m1_clamped(x: f64) -> f64 {
    x.min(500.0).exp_m1()
}

/// A fitted PV module: datasheet parameters plus the five diode-model
/// coefficients recovered at construction.
#[derive(Debug, Clone)]
pub struct PvModule {
    params: PvModuleParams,
    /// Fitted coefficients at reference conditions.
    reference: DiodeParams,
}

impl PvModule {
    /// Fits the five-parameter model to the datasheet corner points.
    ///
    /// The series resistance is swept upward from zero; for each trial the
    /// shunt resistance is chosen so the curve passes exactly through the
    /// datasheet maximum-power point, with photocurrent and saturation
    /// current pinned by the short-circuit and open-circuit conditions. The
    /// sweep stops where the curve's own maximum power equals the datasheet
    /// power, which places the model's peak at `v_mp` itself.
    pub fn fit(params: PvModuleParams) -> Result<Self, PvError> {
        params.validate()?;
        let a = params.ideality * BOLTZMANN * (params.ref_temp + 273.15) / CHARGE;
        let p_mp = params.v_mp * params.i_mp;

        // Photocurrent and saturation current that satisfy the short-circuit
        // and open-circuit conditions for a given (r_s, r_sh).
        let pin_currents = |r_s: f64, r_sh: f64| -> (f64, f64) {
            let mut i_sat = 0.0;
            let mut i_ph = params.i_sc;
            for _ in 0..64 {
                i_ph = params.i_sc * (1.0 + r_s / r_sh)
                    + i_sat * exp_m1_clamped(params.i_sc * r_s / a);
                let next = (i_ph - params.v_oc / r_sh) / exp_m1_clamped(params.v_oc / a);
                if (next - i_sat).abs() <= 1.0e-18 + 1.0e-14 * i_sat.abs() {
                    i_sat = next;
                    break;
                }
                i_sat = next;
            }
            (i_ph, i_sat)
        };

        // Shunt resistance that forces the curve through the datasheet MPP,
        // found by fixed-point iteration. `None` marks an infeasible trial:
        // the series drop already keeps the curve below the datasheet point,
        // or the shunt runs away (the point is reachable without one).
        let shunt_for = |r_s: f64| -> Option<DiodeParams> {
            let mut r_sh = params.r_shunt.max(params.v_oc / params.i_sc);
            for _ in 0..300 {
                let (i_ph, i_sat) = pin_currents(r_s, r_sh);
                let u_mp = params.v_mp + params.i_mp * r_s;
                let denom =
                    params.v_mp * i_ph - params.v_mp * i_sat * exp_m1_clamped(u_mp / a) - p_mp;
                if denom <= 0.0 {
                    return None;
                }
                let next = params.v_mp * u_mp / denom;
                if !next.is_finite() || next <= 0.0 || next > 1.0e9 {
                    return None;
                }
                if (next - r_sh).abs() <= 1.0e-12 * r_sh {
                    r_sh = next;
                    break;
                }
                r_sh = next;
            }
            let (i_ph, i_sat) = pin_currents(r_s, r_sh);
            Some(DiodeParams { i_ph, i_sat, a, r_s, r_sh })
        };

        // With the curve pinned through the MPP, the remaining freedom is
        // where it *peaks*. At the true peak dI/dV = −I/V, so bisect the
        // series resistance on that slope residual: too little r_s leaves the
        // curve flat at v_mp (peak to the right), too much tips it over.
        let residual = |d: &DiodeParams| {
            let u = params.v_mp + params.i_mp * d.r_s;
            let sink = d.i_sat / d.a * (u / d.a).min(500.0).exp() + 1.0 / d.r_sh;
            -sink / (1.0 + d.r_s * sink) + params.i_mp / params.v_mp
        };
        let r_s_max = (params.v_oc - params.v_mp) / params.i_mp;
        let d0 = shunt_for(0.0).ok_or_else(|| {
            PvError::FitFailed(
                "datasheet maximum-power point unreachable at zero series resistance".into(),
            )
        })?;
        if residual(&d0) <= 0.0 {
            return Err(PvError::FitFailed(
                "curve already peaks below v_mp with zero series resistance; \
                 the ideality factor is likely too small for this datasheet"
                    .into(),
            ));
        }
        let steps = 256;
        let mut lo = 0.0;
        let mut hi = r_s_max;
        let mut found = false;
        for k in 1..=steps {
            let r_s = r_s_max * k as f64 / steps as f64;
            match shunt_for(r_s) {
                Some(d) if residual(&d) > 0.0 => lo = r_s,
                _ => {
                    hi = r_s;
                    found = true;
                    break;
                }
            }
        }
        if !found {
            return Err(PvError::FitFailed(
                "the curve never peaks at v_mp within the feasible series-resistance range"
                    .into(),
            ));
        }
        let mut best = shunt_for(lo).unwrap_or(d0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            match shunt_for(mid) {
                Some(d) if residual(&d) > 0.0 => {
                    lo = mid;
                    best = d;
                }
                _ => hi = mid,
            }
            if hi - lo < 1.0e-14 * (1.0 + hi) {
                break;
            }
        }

        let module = PvModule { params, reference: best };
        let i_at_vmp = module.current(module.params.v_mp, module.params.ref_irradiance, module.params.ref_temp);
        let rel = (i_at_vmp - module.params.i_mp).abs() / module.params.i_mp;
        if rel > 0.005 {
            return Err(PvError::FitFailed(format!(
                "fitted curve misses the datasheet maximum-power point by {:.3}% (limit 0.5%)",
                rel * 100.0
            )));
        }
        Ok(module)
    }

    /// Diode coefficients at the requested irradiance and temperature.
    ///
    /// Photocurrent scales linearly with irradiance and the diode thermal
    /// scale with absolute temperature; saturation current and resistances
    /// are held at their fitted values (temperature excursions are outside
    /// the simulator's scope and default to 25 °C).
    fn at(&self, irradiance: f64, temp: f64) -> DiodeParams {
        let mut d = self.reference;
        d.i_ph *= irradiance / self.params.ref_irradiance;
        d.a *= (temp + 273.15) / (self.params.ref_temp + 273.15);
        d
    }

    /// Module current at terminal voltage `v` under the given conditions.
    /// Clamped to zero above open circuit and at zero irradiance, so the
    /// result is non-negative and non-increasing in `v`.
    pub fn current(&self, v: f64, irradiance: f64, temp: f64) -> f64 {
        if irradiance <= 0.0 || v < 0.0 {
            return 0.0;
        }
        let d = self.at(irradiance, temp);
        if v >= d.open_circuit() {
            return 0.0;
        }
        d.current(v).max(0.0)
    }

    /// The datasheet parameters this module was fitted to.
    pub fn params(&self) -> &PvModuleParams {
        &self.params
    }

    /// Fitted coefficients `(i_ph, i_sat, a, r_s, r_sh)` at reference
    /// conditions, mainly for inspection and independent verification.
    pub fn fitted_coefficients(&self) -> (f64, f64, f64, f64, f64) {
        let d = &self.reference;
        (d.i_ph, d.i_sat, d.a, d.r_s, d.r_sh)
    }
}

/// A run of series modules sharing one irradiance value and one bypass diode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    /// Number of modules in this section.
    pub modules_in_series: usize,
    /// Irradiance over the section, W/m².
    pub irradiance: f64,
}

/// Array topology: `n_series` modules per string, split into irradiance
/// sections, with `n_parallel` identical strings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvArrayConfig {
    pub module: PvModuleParams,
    pub n_series: usize,
    pub n_parallel: usize,
    pub sections: Vec<ArraySection>,
    /// Cell temperature, °C.
    pub temperature: f64,
}

impl Default for PvArrayConfig {
    /// 18 × 9 array of the default module (≈ 32.4 kW), two bypass sections.
    fn default() -> Self {
        PvArrayConfig {
            module: PvModuleParams::default(),
            n_series: 18,
            n_parallel: 9,
            sections: vec![
                ArraySection { modules_in_series: 9, irradiance: 1000.0 },
                ArraySection { modules_in_series: 9, irradiance: 1000.0 },
            ],
            temperature: 25.0,
        }
    }
}

impl PvArrayConfig {
    pub(crate) fn validate(&self) -> Result<(), PvError> {
        if self.n_series == 0 || self.n_parallel == 0 {
            return Err(PvError::InvalidConfig(
                "n_series and n_parallel must both be at least 1".into(),
            ));
        }
        if self.sections.is_empty() {
            return Err(PvError::InvalidConfig("at least one section is required".into()));
        }
        let total: usize = self.sections.iter().map(|s| s.modules_in_series).sum();
        if total != self.n_series {
            return Err(PvError::InvalidConfig(format!(
                "sections cover {total} modules but n_series is {}",
                self.n_series
            )));
        }
        for (k, s) in self.sections.iter().enumerate() {
            if s.modules_in_series == 0 {
                return Err(PvError::InvalidConfig(format!("section {k} is empty")));
            }
            if !(s.irradiance.is_finite() && (0.0..=1500.0).contains(&s.irradiance)) {
                return Err(PvError::InvalidConfig(format!(
                    "section {k} irradiance {} outside 0..=1500 W/m²",
                    s.irradiance
                )));
            }
        }
        Ok(())
    }
}

/// One point on a power–voltage curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub v: f64,
    pub i: f64,
    pub p: f64,
}

/// A fitted array frozen at one irradiance assignment. Construction fits the
/// module model and precomputes per-section diode coefficients, after which
/// every evaluation is pure and lock-free.
#[derive(Debug, Clone)]
pub struct PvArrayModel {
    module: PvModule,
    n_parallel: f64,
    /// (modules in series, coefficients at the section's conditions)
    sections: Vec<(f64, DiodeParams)>,
    v_oc: f64,
    /// Upper bracket for string-current searches, A.
    i_hi: f64,
}

impl PvArrayModel {
    pub fn new(cfg: &PvArrayConfig) -> Result<Self, PvError> {
        cfg.validate()?;
        let module = PvModule::fit(cfg.module.clone())?;
        Self::from_module(module, cfg)
    }

    /// Builds the array around an already fitted module, avoiding a refit
    /// when only irradiance changes between scenario segments.
    pub fn from_module(module: PvModule, cfg: &PvArrayConfig) -> Result<Self, PvError> {
        cfg.validate()?;
        let sections: Vec<(f64, DiodeParams)> = cfg
            .sections
            .iter()
            .map(|s| {
                (
                    s.modules_in_series as f64,
                    module.at(s.irradiance.max(0.0), cfg.temperature),
                )
            })
            .collect();
        let v_oc = sections
            .iter()
            .map(|(m, d)| (m * d.open_circuit()).max(0.0))
            .sum();
        let i_hi = sections.iter().map(|(_, d)| d.i_ph).fold(0.0, f64::max) + 1.0;
        Ok(PvArrayModel {
            module,
            n_parallel: cfg.n_parallel as f64,
            sections,
            v_oc,
            i_hi,
        })
    }

    /// Array open-circuit voltage at the frozen irradiance assignment, V.
    pub fn open_circuit_voltage(&self) -> f64 {
        self.v_oc
    }

    /// The fitted module shared by every position in the array.
    pub fn module(&self) -> &PvModule {
        &self.module
    }

    /// String voltage at string current `i`: section voltages add, and a
    /// section driven past its deliverable current is clamped by its bypass
    /// diode at −0.7 V.
    fn string_voltage(&self, i: f64) -> f64 {
        self.sections
            .iter()
            .map(|(m, d)| (m * d.voltage(i)).max(-BYPASS_DROP))
            .sum()
    }

    /// Array terminal voltage at array current `i_array` (strings share the
    /// current equally), V.
    pub fn voltage_at_current(&self, i_array: f64) -> f64 {
        self.string_voltage((i_array / self.n_parallel).max(0.0))
    }

    /// Array current at terminal voltage `v`, A. Continuous, non-negative
    /// and non-increasing on `[0, v_oc]`; zero above open circuit.
    pub fn current(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        if v >= self.v_oc {
            return 0.0;
        }
        // String voltage is strictly decreasing in current until every
        // section is bypassed, which for v ≥ 0 never happens — bisection on
        // [0, i_hi] is therefore safe.
        let mut lo = 0.0;
        let mut hi = self.i_hi;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.string_voltage(mid) > v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1.0e-13 * (1.0 + hi) {
                break;
            }
        }
        self.n_parallel * 0.5 * (lo + hi)
    }

    /// Array power at terminal voltage `v`, W.
    pub fn power(&self, v: f64) -> f64 {
        v.max(0.0) * self.current(v)
    }

    /// Global maximum power point, by exhaustive voltage sweep (10 mV grid)
    /// over `[0, v_oc]` followed by golden-section refinement around the best
    /// grid point. The sweep is deliberately brute force so it stays honest
    /// under partial shading, where the curve has several local maxima.
    pub fn true_mpp(&self) -> OperatingPoint {
        if self.v_oc <= 0.0 {
            return OperatingPoint { v: 0.0, i: 0.0, p: 0.0 };
        }
        let n = (self.v_oc / MPP_SWEEP_STEP).ceil() as usize;
        let mut best_k = 0;
        let mut best_p = 0.0;
        for k in 0..=n {
            let v = self.v_oc * k as f64 / n as f64;
            let p = self.power(v);
            if p > best_p {
                best_p = p;
                best_k = k;
            }
        }
        let step = self.v_oc / n as f64;
        let mut lo = (self.v_oc * best_k as f64 / n as f64 - step).max(0.0);
        let mut hi = (self.v_oc * best_k as f64 / n as f64 + step).min(self.v_oc);
        let phi = 0.618_033_988_749_894_9;
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut p1 = self.power(x1);
        let mut p2 = self.power(x2);
        for _ in 0..60 {
            if p1 < p2 {
                lo = x1;
                x1 = x2;
                p1 = p2;
                x2 = lo + phi * (hi - lo);
                p2 = self.power(x2);
            } else {
                hi = x2;
                x2 = x1;
                p2 = p1;
                x1 = hi - phi * (hi - lo);
                p1 = self.power(x1);
            }
        }
        let v = 0.5 * (lo + hi);
        let i = self.current(v);
        OperatingPoint { v, i, p: v * i }
    }
}

/// Convenience wrapper: fit a module and evaluate its current at one point.
/// Fitting is not cheap; hold a [`PvModule`] when evaluating repeatedly.
pub fn module_current(params: &PvModuleParams, v: f64, irradiance: f64, temp: f64) -> Result<f64, PvError> {
    Ok(PvModule::fit(params.clone())?.current(v, irradiance, temp))
}

/// Convenience wrapper: build an array model and evaluate its current.
pub fn array_current(cfg: &PvArrayConfig, v: f64) -> Result<f64, PvError> {
    Ok(PvArrayModel::new(cfg)?.current(v))
}

/// Convenience wrapper: build an array model and locate its global MPP.
pub fn true_mpp(cfg: &PvArrayConfig) -> Result<OperatingPoint, PvError> {
    Ok(PvArrayModel::new(cfg)?.true_mpp())
}
