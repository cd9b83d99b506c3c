//! Shared fixtures for the criterion benches.

use pvgrid_core::scenario::MpptVariant;
use pvgrid_core::Scenario;

/// The shortest scenario the validator accepts: five fundamental cycles
/// under the perturb-and-observe tracker, so preparation involves no
/// network training and no gain search.
pub fn quick_scenario() -> Scenario {
    let mut cfg = Scenario::default();
    cfg.duration = 0.1;
    cfg.mppt.variant = MpptVariant::Po;
    cfg
}
