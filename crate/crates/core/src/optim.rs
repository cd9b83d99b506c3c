//! Derivative-free minimizers used for controller tuning.
//!
//! Two engines share one objective interface:
//!
//! * a raindrop search — a population of drops, each with a coverage radius,
//!   that sweep the endpoints of their radius interval one variable at a
//!   time, merge when they overlap, shrink when they stall (soil
//!   absorption), and vanish once their radius is spent; and
//! * a canonical global-best particle swarm, kept as the comparison
//!   baseline.
//!
//! Radii are dimensionless: a radius of `r` covers `r` times each variable's
//! bound width, which lets one scalar serve every dimension. Both engines
//! are fully deterministic for a fixed seed, count every objective call, and
//! treat a non-finite objective value as a rejected candidate rather than an
//! error.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Box bounds, one `(low, high)` pair per decision variable.
#[derive(Debug, Clone)]
pub struct Bounds {
    lohi: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(lohi: Vec<(f64, f64)>) -> Result<Self, OptimError> {
        if lohi.is_empty() {
            return Err(OptimError::InvalidBounds("no variables".into()));
        }
        for (k, &(lo, hi)) in lohi.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(OptimError::InvalidBounds(format!(
                    "variable {k}: need finite low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Bounds { lohi })
    }

    pub fn dim(&self) -> usize {
        self.lohi.len()
    }

    pub fn low(&self, k: usize) -> f64 {
        self.lohi[k].0
    }

    pub fn high(&self, k: usize) -> f64 {
        self.lohi[k].1
    }

    pub fn width(&self, k: usize) -> f64 {
        self.lohi[k].1 - self.lohi[k].0
    }

    pub fn clamp(&self, k: usize, value: f64) -> f64 {
        value.clamp(self.lohi[k].0, self.lohi[k].1)
    }

    /// Euclidean distance between two points with every coordinate scaled by
    /// its bound width — the same units the radii live in.
    fn normalized_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.lohi
            .iter()
            .zip(a.iter().zip(b))
            .map(|(&(lo, hi), (&x, &y))| {
                let d = (x - y) / (hi - lo);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One member of the raindrop population.
#[derive(Debug, Clone)]
pub struct Raindrop {
    pub position: Vec<f64>,
    /// Coverage radius in units of bound width.
    pub radius: f64,
    pub cost: f64,
}

/// Raindrop-search settings. Radii (`init_radius_frac`, `min_radius`) are in
/// units of bound width.
#[derive(Debug, Clone)]
pub struct RoaParams {
    pub population: usize,
    pub init_radius_frac: f64,
    /// Soil-absorption factor applied to a stalled drop's radius, in (0, 1).
    pub beta: f64,
    /// A drop whose radius falls below this is absorbed (removed).
    pub min_radius: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RoaParams {
    fn default() -> Self {
        RoaParams {
            population: 20,
            init_radius_frac: 0.25,
            beta: 0.8,
            min_radius: 1.0e-6,
            max_iters: 100,
            seed: 0,
        }
    }
}

impl RoaParams {
    fn validate(&self) -> Result<(), OptimError> {
        if self.population < 2 {
            return Err(OptimError::InvalidParams(format!(
                "population must be at least 2, got {}",
                self.population
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(OptimError::InvalidParams(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.max_iters < 1 {
            return Err(OptimError::InvalidParams("max_iters must be at least 1".into()));
        }
        if !(self.init_radius_frac > 0.0 && self.init_radius_frac.is_finite()) {
            return Err(OptimError::InvalidParams(format!(
                "init_radius_frac must be positive, got {}",
                self.init_radius_frac
            )));
        }
        if !(self.min_radius > 0.0 && self.min_radius < self.init_radius_frac) {
            return Err(OptimError::InvalidParams(format!(
                "min_radius must lie in (0, init_radius_frac), got {}",
                self.min_radius
            )));
        }
        Ok(())
    }
}

/// Particle-swarm settings with the standard constriction-free defaults.
#[derive(Debug, Clone)]
pub struct PsoParams {
    pub population: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PsoParams {
    fn default() -> Self {
        PsoParams {
            population: 30,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            max_iters: 200,
            seed: 0,
        }
    }
}

impl PsoParams {
    fn validate(&self) -> Result<(), OptimError> {
        if self.population < 1 {
            return Err(OptimError::InvalidParams("population must be at least 1".into()));
        }
        if self.max_iters < 1 {
            return Err(OptimError::InvalidParams("max_iters must be at least 1".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OptimError::InvalidParams(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a minimizer run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub best: Vec<f64>,
    pub cost: f64,
    /// Best cost seen so far, recorded after seeding and after every
    /// iteration; never increases.
    pub trace: Vec<f64>,
    /// Total objective calls.
    pub evaluations: usize,
    /// Calls that returned a non-finite value and were discarded.
    pub rejected: usize,
}

/// Radius of two merged drops: `(r1ⁿ + r2ⁿ)^(1/n)` for an `n`-variable
/// problem. The merged volume is the sum of the two volumes.
pub fn merge_drops(r1: f64, r2: f64, n: usize) -> f64 {
    match n {
        1 => r1 + r2,
        2 => r1.hypot(r2),
        _ => (r1.powi(n as i32) + r2.powi(n as i32)).powf(1.0 / n as f64),
    }
}

/// Radius left after soil absorption: `(r1ⁿ·β)^(1/n) = r1·β^(1/n)`.
pub fn shrink_radius(r1: f64, beta: f64, n: usize) -> f64 {
    match n {
        1 => r1 * beta,
        _ => r1 * beta.powf(1.0 / n as f64),
    }
}

/// Reporting-only fitness map: `1/(1+raw)` for negative raw values and
/// `1 + |raw|` otherwise. Selection inside the minimizers always ranks by
/// raw cost; this exists so external reports can quote the transformed
/// figure.
pub fn fitness_transform(raw: f64) -> f64 {
    if raw < 0.0 {
        1.0 / (1.0 + raw)
    } else {
        1.0 + raw.abs()
    }
}

struct CountedObjective<F> {
    f: F,
    evaluations: usize,
    rejected: usize,
}

impl<F: FnMut(&[f64]) -> f64> CountedObjective<F> {
    fn new(f: F) -> Self {
        CountedObjective { f, evaluations: 0, rejected: 0 }
    }

    /// Evaluates, mapping non-finite results to +∞ so they can never win.
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let c = (self.f)(x);
        if c.is_finite() {
            c
        } else {
            self.rejected += 1;
            f64::INFINITY
        }
    }
}

/// Raindrop search.
///
/// Seeding scatters the population uniformly with radii drawn from
/// `[½, 1]·init_radius_frac`. Every iteration each drop sweeps its
/// variables in order, evaluating both endpoints `x_k ± r·width_k` (clamped
/// to bounds) and moving whenever the better endpoint beats its current
/// cost. A drop that fails to move anywhere in a sweep is shrunk by the
/// absorption law; overlapping drops (normalized distance below the radius
/// sum) merge onto the better position; drops below `min_radius` are
/// removed. The best position ever evaluated is returned even if its drop
/// has since merged or been absorbed, and the run ends early if the
/// population empties.
pub fn roa_minimize<F: FnMut(&[f64]) -> f64>(
    objective: F,
    bounds: &Bounds,
    params: &RoaParams,
) -> Result<OptimResult, OptimError> {
    params.validate()?;
    let n = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut obj = CountedObjective::new(objective);

    let mut drops: Vec<Raindrop> = (0..params.population)
        .map(|_| {
            let position: Vec<f64> = (0..n)
                .map(|k| bounds.low(k) + rng.gen::<f64>() * bounds.width(k))
                .collect();
            let radius = params.init_radius_frac * (0.5 + 0.5 * rng.gen::<f64>());
            let cost = obj.eval(&position);
            Raindrop { position, radius, cost }
        })
        .collect();

    let mut best = drops[0].clone();
    for d in &drops[1..] {
        if d.cost < best.cost {
            best = d.clone();
        }
    }
    let mut trace = vec![best.cost];

    for _ in 0..params.max_iters {
        // Endpoint sweep, one variable at a time.
        for d in &mut drops {
            let mut moved = false;
            for k in 0..n {
                let step = d.radius * bounds.width(k);
                let here = d.position[k];
                let mut candidate = d.position.clone();
                candidate[k] = bounds.clamp(k, here - step);
                let lo_cost = obj.eval(&candidate);
                candidate[k] = bounds.clamp(k, here + step);
                let hi_cost = obj.eval(&candidate);
                let (better_cost, better_k) = if lo_cost <= hi_cost {
                    (lo_cost, bounds.clamp(k, here - step))
                } else {
                    (hi_cost, bounds.clamp(k, here + step))
                };
                if better_cost < d.cost {
                    d.position[k] = better_k;
                    d.cost = better_cost;
                    moved = true;
                }
            }
            if !moved {
                d.radius = shrink_radius(d.radius, params.beta, n);
            }
            if d.cost < best.cost {
                best = d.clone();
            }
        }

        // Merge overlapping drops onto the better of each pair.
        let mut alive = vec![true; drops.len()];
        for i in 0..drops.len() {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..drops.len() {
                if !alive[j] {
                    continue;
                }
                let dist = bounds.normalized_distance(&drops[i].position, &drops[j].position);
                if dist < drops[i].radius + drops[j].radius {
                    let merged_radius = merge_drops(drops[i].radius, drops[j].radius, n);
                    if drops[j].cost < drops[i].cost {
                        let pos = drops[j].position.clone();
                        drops[i].position = pos;
                        drops[i].cost = drops[j].cost;
                    }
                    drops[i].radius = merged_radius;
                    alive[j] = false;
                }
            }
        }
        let mut keep = alive.iter().copied();
        drops.retain(|_| keep.next().unwrap());

        // Soil absorption floor.
        drops.retain(|d| d.radius >= params.min_radius);

        trace.push(best.cost);
        if drops.is_empty() {
            break;
        }
    }

    Ok(OptimResult {
        best: best.position,
        cost: best.cost,
        trace,
        evaluations: obj.evaluations,
        rejected: obj.rejected,
    })
}

/// Canonical global-best particle swarm.
///
/// Velocities start at zero; each update draws fresh per-coordinate random
/// weights for the cognitive and social pulls, positions are clamped to
/// bounds (with the offending velocity component zeroed), and the global
/// best updates as soon as any particle improves.
pub fn pso_minimize<F: FnMut(&[f64]) -> f64>(
    objective: F,
    bounds: &Bounds,
    params: &PsoParams,
) -> Result<OptimResult, OptimError> {
    params.validate()?;
    let n = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut obj = CountedObjective::new(objective);

    let mut positions: Vec<Vec<f64>> = (0..params.population)
        .map(|_| {
            (0..n)
                .map(|k| bounds.low(k) + rng.gen::<f64>() * bounds.width(k))
                .collect()
        })
        .collect();
    let mut velocities = vec![vec![0.0; n]; params.population];
    let costs: Vec<f64> = positions.iter().map(|p| obj.eval(p)).collect();
    let mut personal_best = positions.clone();
    let mut personal_cost = costs;

    let mut g = 0;
    for (idx, &c) in personal_cost.iter().enumerate() {
        if c < personal_cost[g] {
            g = idx;
        }
    }
    let mut global_best = personal_best[g].clone();
    let mut global_cost = personal_cost[g];
    let mut trace = vec![global_cost];

    for _ in 0..params.max_iters {
        for p in 0..params.population {
            for k in 0..n {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                velocities[p][k] = params.inertia * velocities[p][k]
                    + params.cognitive * r1 * (personal_best[p][k] - positions[p][k])
                    + params.social * r2 * (global_best[k] - positions[p][k]);
                let raw = positions[p][k] + velocities[p][k];
                let clamped = bounds.clamp(k, raw);
                if clamped != raw {
                    velocities[p][k] = 0.0;
                }
                positions[p][k] = clamped;
            }
            let c = obj.eval(&positions[p]);
            if c < personal_cost[p] {
                personal_cost[p] = c;
                personal_best[p] = positions[p].clone();
                if c < global_cost {
                    global_cost = c;
                    global_best = positions[p].clone();
                }
            }
        }
        trace.push(global_cost);
    }

    Ok(OptimResult {
        best: global_best,
        cost: global_cost,
        trace,
        evaluations: obj.evaluations,
        rejected: obj.rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64
            + x.iter()
                .map(|&v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
    }

    fn cube(side: f64, n: usize) -> Bounds {
        Bounds::new(vec![(-side, side); n]).unwrap()
    }

    // ---- merge / shrink / transform arithmetic ----

    #[test]
    fn merging_equal_unit_drops_doubles_the_radius() {
        assert_eq!(merge_drops(1.0, 1.0, 1), 2.0);
    }

    #[test]
    fn two_variable_merge_is_euclidean() {
        assert_eq!(merge_drops(3.0, 4.0, 2), 5.0);
    }

    #[test]
    fn merging_with_a_vanishing_drop_changes_nothing() {
        let r = merge_drops(0.7, 1.0e-13, 3);
        assert!((r - 0.7).abs() < 1.0e-12, "got {r}");
    }

    #[test]
    fn shrink_halves_a_one_variable_drop_at_beta_half() {
        assert_eq!(shrink_radius(2.0, 0.5, 1), 1.0);
    }

    #[test]
    fn shrink_follows_the_root_law_in_higher_dimensions() {
        let r = shrink_radius(2.0, 0.5, 2);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1.0e-15, "got {r}");
    }

    #[test]
    fn repeated_shrinks_match_the_closed_form() {
        let (r0, beta, n, k) = (0.9, 0.63, 3, 7);
        let mut r = r0;
        for _ in 0..k {
            r = shrink_radius(r, beta, n);
        }
        let closed = r0 * beta.powf(k as f64 / n as f64);
        assert!((r - closed).abs() / closed < 1.0e-12, "loop {r} vs closed {closed}");
    }

    #[test]
    fn fitness_transform_evaluates_both_branches() {
        assert_eq!(fitness_transform(-0.5), 2.0);
        assert_eq!(fitness_transform(0.0), 1.0);
        assert_eq!(fitness_transform(3.0), 4.0);
        // On the negative branch the printed formula is decreasing.
        assert!(fitness_transform(-0.5) > fitness_transform(-0.25));
        assert!(fitness_transform(-0.25) > fitness_transform(-0.1));
    }

    // ---- raindrop search ----

    #[test]
    fn raindrops_find_the_sphere_minimum_on_nearly_every_seed() {
        let bounds = cube(5.0, 5);
        let mut hits = 0;
        for seed in 0..100 {
            let params = RoaParams { max_iters: 400, seed, ..RoaParams::default() };
            let r = roa_minimize(sphere, &bounds, &params).unwrap();
            let norm = r.best.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1.0e-3 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 seeds converged");
    }

    #[test]
    fn one_dimensional_vee_is_pinned_to_its_kink() {
        let bounds = Bounds::new(vec![(0.0, 10.0)]).unwrap();
        for seed in 0..10 {
            let params = RoaParams { max_iters: 300, seed, ..RoaParams::default() };
            let r = roa_minimize(|x| (x[0] - 2.0).abs(), &bounds, &params).unwrap();
            assert!((r.best[0] - 2.0).abs() < 1.0e-3, "seed {seed} ended at {}", r.best[0]);
        }
    }

    #[test]
    fn constant_objective_gives_a_flat_trace_and_an_in_bounds_point() {
        let bounds = cube(3.0, 2);
        let params = RoaParams { max_iters: 200, ..RoaParams::default() };
        let r = roa_minimize(|_| 7.5, &bounds, &params).unwrap();
        assert_eq!(r.cost, 7.5);
        assert!(r.trace.iter().all(|&c| c == 7.5));
        for (k, &v) in r.best.iter().enumerate() {
            assert!(v >= bounds.low(k) && v <= bounds.high(k));
        }
        // Nothing ever improves, so every drop shrinks each sweep and is
        // eventually absorbed; the run must stop early instead of spinning.
        assert!(r.trace.len() < 201, "population never emptied");
    }

    #[test]
    fn best_cost_trace_never_increases() {
        let bounds = cube(5.12, 2);
        for seed in 0..5 {
            let params = RoaParams { max_iters: 150, seed, ..RoaParams::default() };
            let r = roa_minimize(rastrigin, &bounds, &params).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0], "trace rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_bit_identical_results() {
        let bounds = cube(5.0, 3);
        let params = RoaParams { max_iters: 120, seed: 42, ..RoaParams::default() };
        let a = roa_minimize(sphere, &bounds, &params).unwrap();
        let b = roa_minimize(sphere, &bounds, &params).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        for (x, y) in a.best.iter().zip(&b.best) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn non_finite_objective_values_are_rejected_not_propagated() {
        let bounds = cube(5.0, 2);
        let params = RoaParams { max_iters: 60, ..RoaParams::default() };
        // Poison a half-plane: candidates there report NaN.
        let r = roa_minimize(
            |x| if x[0] > 1.0 { f64::NAN } else { sphere(x) },
            &bounds,
            &params,
        )
        .unwrap();
        assert!(r.rejected > 0, "the poisoned region was never probed");
        assert!(r.cost.is_finite());
        assert!(r.best[0] <= 1.0);
    }

    #[test]
    fn evaluation_count_is_bounded_by_the_population_budget() {
        let bounds = cube(5.0, 4);
        let params = RoaParams { max_iters: 80, seed: 7, ..RoaParams::default() };
        let r = roa_minimize(sphere, &bounds, &params).unwrap();
        // Seeding plus, per iteration, at most two probes per variable per
        // drop — with the population only ever shrinking.
        let budget = params.population * (1 + 2 * 4 * params.max_iters);
        assert!(r.evaluations <= budget, "{} evaluations > budget {budget}", r.evaluations);
    }

    #[test]
    fn parameter_validation_rejects_nonsense() {
        let bounds = cube(1.0, 1);
        let bad_pop = RoaParams { population: 1, ..RoaParams::default() };
        assert!(roa_minimize(sphere, &bounds, &bad_pop).is_err());
        let bad_beta = RoaParams { beta: 1.0, ..RoaParams::default() };
        assert!(roa_minimize(sphere, &bounds, &bad_beta).is_err());
        assert!(Bounds::new(vec![(2.0, 2.0)]).is_err());
        assert!(Bounds::new(vec![]).is_err());
    }

    // ---- particle swarm ----

    #[test]
    fn swarm_finds_the_sphere_minimum_on_nearly_every_seed() {
        let bounds = cube(5.0, 5);
        let mut hits = 0;
        for seed in 0..100 {
            let params = PsoParams { seed, ..PsoParams::default() };
            let r = pso_minimize(sphere, &bounds, &params).unwrap();
            let norm = r.best.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1.0e-3 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 seeds converged");
    }

    #[test]
    fn swarm_handles_rastrigin_on_most_seeds() {
        let bounds = cube(5.12, 2);
        let mut hits = 0;
        for seed in 0..100 {
            let params = PsoParams { population: 30, max_iters: 200, seed, ..PsoParams::default() };
            let r = pso_minimize(rastrigin, &bounds, &params).unwrap();
            if r.cost < 1.0 {
                hits += 1;
            }
        }
        assert!(hits >= 80, "only {hits}/100 seeds reached the global basin");
    }

    #[test]
    fn lone_particle_without_pulls_never_moves() {
        let bounds = cube(5.0, 3);
        let params = PsoParams {
            population: 1,
            cognitive: 0.0,
            social: 0.0,
            max_iters: 50,
            ..PsoParams::default()
        };
        let mut visited: Vec<Vec<f64>> = Vec::new();
        let r = pso_minimize(
            |x| {
                visited.push(x.to_vec());
                sphere(x)
            },
            &bounds,
            &params,
        )
        .unwrap();
        assert!(r.trace.iter().all(|&c| c == r.trace[0]));
        for v in &visited {
            assert_eq!(v, &visited[0], "the particle drifted");
        }
    }

    #[test]
    fn swarm_trace_never_increases_and_seeds_reproduce() {
        let bounds = cube(5.12, 2);
        let params = PsoParams { seed: 11, ..PsoParams::default() };
        let a = pso_minimize(rastrigin, &bounds, &params).unwrap();
        let b = pso_minimize(rastrigin, &bounds, &params).unwrap();
        for w in a.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    proptest! {
        #[test]
        fn merge_is_symmetric_and_dominates_both_parts(
            r1 in 1.0e-6..10.0f64,
            r2 in 1.0e-6..10.0f64,
            n in 1usize..6,
        ) {
            let a = merge_drops(r1, r2, n);
            let b = merge_drops(r2, r1, n);
            prop_assert!((a - b).abs() <= 1.0e-12 * a.abs());
            prop_assert!(a >= r1.max(r2));
        }

        #[test]
        fn shrink_strictly_decreases_radius(
            r in 1.0e-6..10.0f64,
            beta in 0.01..0.99f64,
            n in 1usize..6,
        ) {
            let s = shrink_radius(r, beta, n);
            prop_assert!(s < r);
            prop_assert!(s > 0.0);
        }
    }
}
