//! Two-input Sugeno-type adaptive neuro-fuzzy network.
//!
//! The premise layer uses two-parameter bell memberships
//! `μ(x) = 1 / (1 + ((x − d)/a)²)` on each input, rules are the full cross
//! product with product T-norm firing strengths, and each rule carries a
//! first-order linear consequent `p·x + q·y + r`. Training is hybrid: a
//! least-squares solve for the consequents with the premises frozen, then
//! batch gradient descent on the bell parameters. Both passes are
//! deterministic given the data order, so a trained network is reproducible
//! bit for bit.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised by network construction, evaluation, and training.
#[derive(Debug, Error)]
pub enum AnfisError {
    #[error("invalid network structure: {0}")]
    InvalidStructure(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("every rule fired at zero strength for input ({x}, {y})")]
    DegenerateInput { x: f64, y: f64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("parameter text malformed at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Two-parameter bell membership function: `width` sets the half-width at
/// μ = 0.5 and `center` the peak location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellMf {
    pub width: f64,
    pub center: f64,
}

impl BellMf {
    /// Membership grade `1 / (1 + ((x − center)/width)²)`.
    pub fn membership(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        1.0 / (1.0 + u * u)
    }
}

/// One supervised sample for training.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample {
    pub x: f64,
    pub y: f64,
    pub target: f64,
}

/// Per-epoch record returned by [`AnfisNet::hybrid_train`].
///
/// `rmse[0]` is the error of the network as received, before any update;
/// `rmse[k]` for `k ≥ 1` is the error at the end of epoch `k`. The
/// least-squares pass inside each epoch is also recorded so callers can
/// confirm it never worsened the fit.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rmse: Vec<f64>,
    pub post_lse_rmse: Vec<f64>,
    /// Epochs (1-based) where the least-squares system was rank deficient
    /// and the minimum-norm solution was taken.
    pub rank_deficient_epochs: Vec<usize>,
}

/// Gradient of the network output with respect to every parameter, in the
/// fixed order (x-bank widths/centers, y-bank widths/centers, consequents).
#[derive(Debug, Clone)]
struct OutputGradient {
    /// d f / d (width, center) per x-side membership.
    mfs_x: Vec<[f64; 2]>,
    mfs_y: Vec<[f64; 2]>,
    /// d f / d (p, q, r) per rule.
    consequents: Vec<[f64; 3]>,
    value: f64,
}

/// Two-input Sugeno network with a full rule grid.
///
/// Rule `j` pairs x-side membership `j / n_y` with y-side membership
/// `j % n_y` (x-major order); consequents are stored in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnfisNet {
    mfs_x: Vec<BellMf>,
    mfs_y: Vec<BellMf>,
    consequents: Vec<[f64; 3]>,
    trained: bool,
}

impl AnfisNet {
    /// Builds an untrained network with membership centers spread evenly
    /// over each input range and zeroed consequents.
    pub fn grid_init(
        n_x: usize,
        n_y: usize,
        x_range: (f64, f64),
        y_range: (f64, f64),
    ) -> Result<Self, AnfisError> {
        let bank = |n: usize, (lo, hi): (f64, f64), name: &str| -> Result<Vec<BellMf>, AnfisError> {
            if n == 0 {
                return Err(AnfisError::InvalidStructure(format!(
                    "{name} needs at least one membership function"
                )));
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(AnfisError::InvalidStructure(format!(
                    "{name} range ({lo}, {hi}) must be finite with lo < hi"
                )));
            }
            let spacing = if n > 1 { (hi - lo) / (n - 1) as f64 } else { hi - lo };
            Ok((0..n)
                .map(|k| BellMf {
                    width: 0.5 * spacing,
                    center: if n > 1 { lo + spacing * k as f64 } else { 0.5 * (lo + hi) },
                })
                .collect())
        };
        let mfs_x = bank(n_x, x_range, "input 1")?;
        let mfs_y = bank(n_y, y_range, "input 2")?;
        let consequents = vec![[0.0; 3]; n_x * n_y];
        Ok(AnfisNet { mfs_x, mfs_y, consequents, trained: false })
    }

    /// Replaces the consequents wholesale and marks the network trained —
    /// the constructor for hand-built teacher networks.
    pub fn with_consequents(mut self, consequents: Vec<[f64; 3]>) -> Result<Self, AnfisError> {
        if consequents.len() != self.rule_count() {
            return Err(AnfisError::InvalidStructure(format!(
                "{} consequents supplied for {} rules",
                consequents.len(),
                self.rule_count()
            )));
        }
        self.consequents = consequents;
        self.trained = true;
        Ok(self)
    }

    pub fn rule_count(&self) -> usize {
        self.mfs_x.len() * self.mfs_y.len()
    }

    /// X- and y-side membership indices feeding rule `j`.
    pub fn rule_inputs(&self, j: usize) -> (usize, usize) {
        (j / self.mfs_y.len(), j % self.mfs_y.len())
    }

    pub fn mfs_x(&self) -> &[BellMf] {
        &self.mfs_x
    }

    pub fn mfs_y(&self) -> &[BellMf] {
        &self.mfs_y
    }

    pub fn consequents(&self) -> &[[f64; 3]] {
        &self.consequents
    }

    /// Whether the consequents have been fitted (directly or by training).
    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Product T-norm firing strength of every rule, in rule order.
    pub fn firing_strengths(&self, x: f64, y: f64) -> Vec<f64> {
        let mu_y: Vec<f64> = self.mfs_y.iter().map(|m| m.membership(y)).collect();
        let mut w = Vec::with_capacity(self.rule_count());
        for mx in &self.mfs_x {
            let mu_x = mx.membership(x);
            for muy in &mu_y {
                w.push(mu_x * muy);
            }
        }
        w
    }

    /// Firing strengths normalised to sum to one.
    pub fn normalized_strengths(&self, x: f64, y: f64) -> Result<Vec<f64>, AnfisError> {
        let mut w = self.firing_strengths(x, y);
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(AnfisError::DegenerateInput { x, y });
        }
        for v in &mut w {
            *v /= total;
        }
        Ok(w)
    }

    /// Network output: normalised strengths blending the rule consequents.
    pub fn forward(&self, x: f64, y: f64) -> Result<f64, AnfisError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(AnfisError::NonFinite("network input".into()));
        }
        let w = self.normalized_strengths(x, y)?;
        Ok(w
            .iter()
            .enumerate()
            .map(|(j, wj)| {
                let [p, q, r] = self.consequents[j];
                wj * (p * x + q * y + r)
            })
            .sum())
    }

    /// Output plus its gradient with respect to every parameter.
    fn output_gradient(&self, x: f64, y: f64) -> Result<OutputGradient, AnfisError> {
        let n_y = self.mfs_y.len();
        let w = self.firing_strengths(x, y);
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(AnfisError::DegenerateInput { x, y });
        }
        let g: Vec<f64> = self
            .consequents
            .iter()
            .map(|[p, q, r]| p * x + q * y + r)
            .collect();
        let value: f64 = w.iter().zip(&g).map(|(wj, gj)| wj * gj / total).sum();

        let mut grad_cons = vec![[0.0; 3]; self.rule_count()];
        for j in 0..self.rule_count() {
            let wn = w[j] / total;
            grad_cons[j] = [wn * x, wn * y, wn];
        }

        // d f / d w_j = (g_j − f) / total; bell parameters reach f through
        // the strengths of every rule using that membership.
        let mut grad_x = vec![[0.0; 2]; self.mfs_x.len()];
        for (m, mf) in self.mfs_x.iter().enumerate() {
            let mu = mf.membership(x);
            let u = (x - mf.center) / mf.width;
            // dμ/dwidth = 2 u² μ² / width, dμ/dcenter = 2 u μ² / width
            let dmu_dw = 2.0 * u * u * mu * mu / mf.width;
            let dmu_dc = 2.0 * u * mu * mu / mf.width;
            let mut df_dmu = 0.0;
            for jy in 0..n_y {
                let j = m * n_y + jy;
                let dw = self.mfs_y[jy].membership(y);
                df_dmu += (g[j] - value) / total * dw;
            }
            grad_x[m] = [df_dmu * dmu_dw, df_dmu * dmu_dc];
        }
        let mut grad_y = vec![[0.0; 2]; self.mfs_y.len()];
        for (m, mf) in self.mfs_y.iter().enumerate() {
            let mu = mf.membership(y);
            let u = (y - mf.center) / mf.width;
            let dmu_dw = 2.0 * u * u * mu * mu / mf.width;
            let dmu_dc = 2.0 * u * mu * mu / mf.width;
            let mut df_dmu = 0.0;
            for jx in 0..self.mfs_x.len() {
                let j = jx * n_y + m;
                let dw = self.mfs_x[jx].membership(x);
                df_dmu += (g[j] - value) / total * dw;
            }
            grad_y[m] = [df_dmu * dmu_dw, df_dmu * dmu_dc];
        }
        Ok(OutputGradient { mfs_x: grad_x, mfs_y: grad_y, consequents: grad_cons, value })
    }

    /// Compares the analytic output gradient against central finite
    /// differences at one input point and returns the worst relative error.
    pub fn gradient_check(&self, x: f64, y: f64) -> Result<f64, AnfisError> {
        let analytic = self.output_gradient(x, y)?;
        let mut worst: f64 = 0.0;
        let mut probe = |analytic_val: f64, perturb: &mut dyn FnMut(&mut AnfisNet, f64)| {
            let scale = analytic_val.abs().max(1.0);
            let h = 1.0e-6 * scale;
            let mut plus = self.clone();
            perturb(&mut plus, h);
            let mut minus = self.clone();
            perturb(&mut minus, -h);
            let numeric = (plus.forward(x, y).unwrap() - minus.forward(x, y).unwrap()) / (2.0 * h);
            let rel = (analytic_val - numeric).abs() / analytic_val.abs().max(numeric.abs()).max(1.0e-9);
            worst = worst.max(rel);
        };
        for m in 0..self.mfs_x.len() {
            probe(analytic.mfs_x[m][0], &mut |net, h| net.mfs_x[m].width += h);
            probe(analytic.mfs_x[m][1], &mut |net, h| net.mfs_x[m].center += h);
        }
        for m in 0..self.mfs_y.len() {
            probe(analytic.mfs_y[m][0], &mut |net, h| net.mfs_y[m].width += h);
            probe(analytic.mfs_y[m][1], &mut |net, h| net.mfs_y[m].center += h);
        }
        for j in 0..self.rule_count() {
            for c in 0..3 {
                probe(analytic.consequents[j][c], &mut |net, h| net.consequents[j][c] += h);
            }
        }
        Ok(worst)
    }

    fn rmse(&self, data: &[TrainSample]) -> Result<f64, AnfisError> {
        let mut sum = 0.0;
        for s in data {
            let e = self.forward(s.x, s.y)? - s.target;
            sum += e * e;
        }
        Ok((sum / data.len() as f64).sqrt())
    }

    fn validate_data(data: &[TrainSample]) -> Result<(), AnfisError> {
        if data.is_empty() {
            return Err(AnfisError::EmptyTrainingSet);
        }
        for (k, s) in data.iter().enumerate() {
            if !(s.x.is_finite() && s.y.is_finite() && s.target.is_finite()) {
                return Err(AnfisError::NonFinite(format!("training sample {k}")));
            }
        }
        Ok(())
    }

    /// One least-squares pass: refit every consequent with the premises
    /// frozen. This is globally optimal for the current premises, so the
    /// training error cannot increase. Returns whether the system was rank
    /// deficient (minimum-norm solution taken).
    pub fn lse_consequents(&mut self, data: &[TrainSample]) -> Result<bool, AnfisError> {
        Self::validate_data(data)?;
        let rules = self.rule_count();
        let cols = 3 * rules;
        let mut a = DMatrix::zeros(data.len(), cols);
        let mut b = DVector::zeros(data.len());
        for (row, s) in data.iter().enumerate() {
            let w = self.normalized_strengths(s.x, s.y)?;
            for (j, wj) in w.iter().enumerate() {
                a[(row, 3 * j)] = wj * s.x;
                a[(row, 3 * j + 1)] = wj * s.y;
                a[(row, 3 * j + 2)] = *wj;
            }
            b[row] = s.target;
        }
        let svd = a.svd(true, true);
        let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let eps = s_max * f64::EPSILON * data.len().max(cols) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        let theta = svd
            .solve(&b, eps)
            .map_err(|e| AnfisError::InvalidStructure(format!("least-squares solve failed: {e}")))?;
        for j in 0..rules {
            self.consequents[j] = [theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]];
        }
        self.trained = true;
        Ok(rank < cols.min(data.len()))
    }

    /// Hybrid training: per epoch, a least-squares refit of the consequents
    /// followed by one batch gradient-descent step on the bell parameters.
    /// The learning rate halves whenever an epoch ends worse than the last,
    /// which keeps the procedure stable without any tuning.
    pub fn hybrid_train(
        &mut self,
        data: &[TrainSample],
        epochs: usize,
        learning_rate: f64,
    ) -> Result<TrainReport, AnfisError> {
        Self::validate_data(data)?;
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(AnfisError::InvalidStructure(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let mut lr = learning_rate;
        let mut report = TrainReport {
            rmse: vec![self.rmse(data)?],
            post_lse_rmse: Vec::with_capacity(epochs),
            rank_deficient_epochs: Vec::new(),
        };
        let n = data.len() as f64;
        for epoch in 1..=epochs {
            if self.lse_consequents(data)? {
                report.rank_deficient_epochs.push(epoch);
            }
            report.post_lse_rmse.push(self.rmse(data)?);

            // Batch mean-squared-error gradient over the premise parameters.
            let mut acc_x = vec![[0.0; 2]; self.mfs_x.len()];
            let mut acc_y = vec![[0.0; 2]; self.mfs_y.len()];
            for s in data {
                let g = self.output_gradient(s.x, s.y)?;
                let e = 2.0 * (g.value - s.target) / n;
                for (m, d) in g.mfs_x.iter().enumerate() {
                    acc_x[m][0] += e * d[0];
                    acc_x[m][1] += e * d[1];
                }
                for (m, d) in g.mfs_y.iter().enumerate() {
                    acc_y[m][0] += e * d[0];
                    acc_y[m][1] += e * d[1];
                }
            }
            for (m, d) in acc_x.iter().enumerate() {
                let mf = &mut self.mfs_x[m];
                mf.width = (mf.width - lr * d[0]).abs().max(1.0e-9);
                mf.center -= lr * d[1];
            }
            for (m, d) in acc_y.iter().enumerate() {
                let mf = &mut self.mfs_y[m];
                mf.width = (mf.width - lr * d[0]).abs().max(1.0e-9);
                mf.center -= lr * d[1];
            }

            let end = self.rmse(data)?;
            if end > *report.rmse.last().unwrap() {
                lr *= 0.5;
            }
            report.rmse.push(end);
        }
        Ok(report)
    }

    /// Serialises every parameter to a line-oriented text block. Numbers use
    /// the shortest representation that round-trips, so save → load is
    /// lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::from("anfis-net v1\n");
        out.push_str(&format!("mfs_x {}\n", self.mfs_x.len()));
        for m in &self.mfs_x {
            out.push_str(&format!("{} {}\n", m.width, m.center));
        }
        out.push_str(&format!("mfs_y {}\n", self.mfs_y.len()));
        for m in &self.mfs_y {
            out.push_str(&format!("{} {}\n", m.width, m.center));
        }
        out.push_str(&format!("consequents {}\n", self.consequents.len()));
        for [p, q, r] in &self.consequents {
            out.push_str(&format!("{p} {q} {r}\n"));
        }
        out.push_str(&format!("trained {}\n", self.trained));
        out
    }

    /// Parses the text produced by [`AnfisNet::to_text`].
    pub fn from_text(text: &str) -> Result<Self, AnfisError> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str), AnfisError> {
            lines
                .next()
                .map(|(k, l)| (k + 1, l.trim()))
                .ok_or_else(|| AnfisError::Parse { line: 0, msg: format!("missing {what}") })
        };
        let floats = |line: usize, s: &str, n: usize| -> Result<Vec<f64>, AnfisError> {
            let vals: Result<Vec<f64>, _> = s.split_whitespace().map(str::parse).collect();
            match vals {
                Ok(v) if v.len() == n && v.iter().all(|f: &f64| f.is_finite()) => Ok(v),
                _ => Err(AnfisError::Parse { line, msg: format!("expected {n} finite numbers") }),
            }
        };

        let (line, header) = next("header")?;
        if header != "anfis-net v1" {
            return Err(AnfisError::Parse { line, msg: "unrecognised header".into() });
        }
        let mut bank = |tag: &str| -> Result<Vec<BellMf>, AnfisError> {
            let (line, decl) = next(tag)?;
            let count: usize = decl
                .strip_prefix(tag)
                .and_then(|rest| rest.trim().parse().ok())
                .ok_or_else(|| AnfisError::Parse { line, msg: format!("expected '{tag} <count>'") })?;
            let mut mfs = Vec::with_capacity(count);
            for _ in 0..count {
                let (line, row) = next("membership row")?;
                let v = floats(line, row, 2)?;
                if v[0] <= 0.0 {
                    return Err(AnfisError::Parse { line, msg: "width must be positive".into() });
                }
                mfs.push(BellMf { width: v[0], center: v[1] });
            }
            Ok(mfs)
        };
        let mfs_x = bank("mfs_x")?;
        let mfs_y = bank("mfs_y")?;

        let (line, decl) = next("consequents")?;
        let count: usize = decl
            .strip_prefix("consequents")
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| AnfisError::Parse { line, msg: "expected 'consequents <count>'".into() })?;
        if count != mfs_x.len() * mfs_y.len() {
            return Err(AnfisError::Parse {
                line,
                msg: format!("{count} consequents for {} rules", mfs_x.len() * mfs_y.len()),
            });
        }
        let mut consequents = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, row) = next("consequent row")?;
            let v = floats(line, row, 3)?;
            consequents.push([v[0], v[1], v[2]]);
        }
        let (line, tail) = next("trained flag")?;
        let trained = match tail.strip_prefix("trained").map(str::trim) {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(AnfisError::Parse { line, msg: "expected 'trained <bool>'".into() }),
        };
        Ok(AnfisNet { mfs_x, mfs_y, consequents, trained })
    }
}
