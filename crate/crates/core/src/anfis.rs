//! Sugeno-type ANFIS: Gaussian membership functions on each input, a
//! grid-partition rule base (every combination of membership functions is a
//! rule), and first-order consequents.
//!
//! Training is the classic hybrid procedure: each epoch the consequent
//! parameters are solved exactly by recursive least squares with the premise
//! held fixed, then the premise centers and widths take one gradient step.
//! The RLS solve consumes rows strictly in dataset order; within the solver
//! rows are absorbed in fixed-size blocks via the matrix inversion lemma,
//! which keeps the arithmetic cache-friendly without changing the order or
//! the result's determinism.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DatasetRecipe, FeatureRow, Prediction, Scaler, Split, SupervisedDataset};
use crate::metrics::{EvalMetrics, MetricsError};
use crate::trace::{TraceEpoch, TrainTrace};

pub const ANFIS_FORMAT_VERSION: &str = "buoycast-anfis/1";

/// Width floor enforced after every premise update.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Total firing strength below this is treated as "no rule fires".
pub const SILENCE_THRESHOLD: f64 = 1e-300;

/// Initial covariance scale for the consequent least-squares solve.
pub const RLS_INITIAL_COVARIANCE: f64 = 1e6;

/// Rows absorbed per solver step. Purely an implementation batch size; the
/// data order stays sequential and the solve stays deterministic.
const RLS_BLOCK: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum AnfisError {
    #[error("input {0} is constant on the training rows; cannot place membership functions")]
    DegenerateColumn(usize),
    #[error("all rules silent at row {row}: total firing strength underflowed")]
    AllRulesSilent { row: usize },
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}; training aborted")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Persistence(String),
    #[error("consequent solve broke down: {0}")]
    Numerical(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Gaussian membership function, mu(x) = exp(-(x-c)^2 / (2 sigma^2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMf {
    pub center: f64,
    pub sigma: f64,
}

impl GaussianMf {
    pub fn evaluate(&self, x: f64) -> f64 {
        let d = x - self.center;
        (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnfisConfig {
    pub inputs: usize,
    pub mfs_per_input: usize,
    /// Initial premise step length (the gradient step moves along the
    /// normalized gradient by this amount).
    pub step_size: f64,
    /// Step-length multiplier after four consecutive error decreases.
    pub step_increase: f64,
    /// Step-length multiplier after two consecutive up-down oscillations.
    pub step_decrease: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for AnfisConfig {
    fn default() -> Self {
        Self {
            inputs: 6,
            mfs_per_input: 3,
            step_size: 0.01,
            step_increase: 1.1,
            step_decrease: 0.9,
            max_epochs: 5,
            patience: 10,
        }
    }
}

impl AnfisConfig {
    /// Grid partition: one rule per combination of membership functions.
    pub fn rule_count(&self) -> usize {
        self.mfs_per_input.pow(self.inputs as u32)
    }

    /// Consequent parameters: (inputs + 1) per rule.
    pub fn consequent_len(&self) -> usize {
        self.rule_count() * (self.inputs + 1)
    }

    fn validate(&self) -> Result<(), AnfisError> {
        if self.inputs == 0 {
            return Err(AnfisError::InvalidConfig("inputs must be >= 1".into()));
        }
        if self.mfs_per_input < 2 {
            return Err(AnfisError::InvalidConfig(
                "mfs_per_input must be >= 2".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(AnfisError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        let rules = (self.mfs_per_input as u128).checked_pow(self.inputs as u32);
        match rules {
            Some(r) if r * (self.inputs as u128 + 1) <= 8192 => Ok(()),
            _ => Err(AnfisError::InvalidConfig(format!(
                "grid partition too large: {}^{} rules",
                self.mfs_per_input, self.inputs
            ))),
        }
    }
}

/// Membership-function index of `input` in rule `rule`, with the rule list
/// in lexicographic order (input 0 most significant).
pub fn rule_mf_index(rule: usize, input: usize, inputs: usize, mfs: usize) -> usize {
    (rule / mfs.pow((inputs - 1 - input) as u32)) % mfs
}

/// A batch of scaled training rows: flat row-major inputs plus targets.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    n_inputs: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingBatch {
    pub fn new(n_inputs: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Self {
        assert_eq!(inputs.len(), targets.len() * n_inputs);
        Self {
            n_inputs,
            inputs,
            targets,
        }
    }

    /// Scaled rows of one split, in dataset order.
    pub fn from_dataset(dataset: &SupervisedDataset, split: Split) -> Self {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for i in 0..dataset.len() {
            if dataset.labels()[i] != split {
                continue;
            }
            inputs.extend_from_slice(&dataset.scaled_features(i));
            targets.push(dataset.scaled_target(i));
        }
        Self {
            n_inputs: crate::features::FEATURE_COUNT,
            inputs,
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_inputs..(i + 1) * self.n_inputs]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

/// Equally spaced Gaussian grid over each input's training range.
///
/// Centers run from the column minimum to the maximum; sigma is
/// (max - min) / (2 (m - 1)), i.e. half the center spacing, which puts the
/// crossing of adjacent functions near mu = 0.6.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated so NaN inputs fail the check
pub fn init_premise(
    config: &AnfisConfig,
    batch: &TrainingBatch,
) -> Result<Vec<GaussianMf>, AnfisError> {
    config.validate()?;
    if batch.n_inputs() != config.inputs {
        return Err(AnfisError::DimensionMismatch {
            expected: config.inputs,
            got: batch.n_inputs(),
        });
    }
    let n = config.inputs;
    let m = config.mfs_per_input;
    let mut premise = Vec::with_capacity(n * m);
    for j in 0..n {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..batch.len() {
            let v = batch.input(i)[j];
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            return Err(AnfisError::DegenerateColumn(j));
        }
        let spacing = (max - min) / (m - 1) as f64;
        let sigma = spacing / 2.0;
        for k in 0..m {
            premise.push(GaussianMf {
                center: min + k as f64 * spacing,
                sigma,
            });
        }
    }
    Ok(premise)
}

/// Rule firing strengths as products of memberships, in lexicographic rule
/// order. `mu` is the n x m membership table, row-major.
fn products_from_memberships(mu: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for j in 0..n {
        let mut next = Vec::with_capacity(w.len() * m);
        for &partial in &w {
            for k in 0..m {
                next.push(partial * mu[j * m + k]);
            }
        }
        w = next;
    }
    w
}

/// Gradients of a batch MSE with respect to every center and sigma,
/// indexed like the premise grid (input j, function k at j*m + k).
#[derive(Debug, Clone, PartialEq)]
pub struct PremiseGradient {
    pub d_center: Vec<f64>,
    pub d_sigma: Vec<f64>,
}

/// Row accounting for one consequent solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOutcome {
    pub rows_used: usize,
    /// Rows skipped because no rule fired on them.
    pub rows_skipped: usize,
}

/// Sequential recursive least squares over the stacked consequent vector.
///
/// Maintains theta and the covariance P (initialized to gamma * I), and
/// absorbs rows in blocks of up to RLS_BLOCK via the matrix inversion lemma:
///   S = I + A P A^T,  theta += P A^T S^-1 (y - A theta),  P -= P A^T S^-1 A P.
struct RlsSolver {
    p: usize,
    cov: Array2<f64>,
    theta: Vec<f64>,
}

impl RlsSolver {
    fn new(p: usize, gamma: f64) -> Self {
        let mut cov = Array2::eye(p);
        cov *= gamma;
        Self {
            p,
            cov,
            theta: vec![0.0; p],
        }
    }

    /// In-place Cholesky factorization, lower triangle of a b x b matrix.
    fn cholesky(s: &mut [f64], b: usize) -> Result<(), AnfisError> {
        for i in 0..b {
            for j in 0..=i {
                let mut sum = s[i * b + j];
                for k in 0..j {
                    sum -= s[i * b + k] * s[j * b + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(AnfisError::Numerical(format!(
                            "non-positive pivot {sum} in block factorization"
                        )));
                    }
                    s[i * b + i] = sum.sqrt();
                } else {
                    s[i * b + j] = sum / s[j * b + j];
                }
            }
        }
        Ok(())
    }

    /// Solve (L L^T) X = B in place, where rows of `x` have length `width`.
    fn cholesky_solve_rows(l: &[f64], b: usize, x: &mut [f64], width: usize) {
        // forward: L W = B
        for i in 0..b {
            let (done, rest) = x.split_at_mut(i * width);
            let row_i = &mut rest[..width];
            for k in 0..i {
                let f = l[i * b + k];
                let row_k = &done[k * width..(k + 1) * width];
                for (xi, xk) in row_i.iter_mut().zip(row_k) {
                    *xi -= f * xk;
                }
            }
            let d = l[i * b + i];
            for xi in row_i.iter_mut() {
                *xi /= d;
            }
        }
        // backward: L^T Z = W
        for i in (0..b).rev() {
            for k in i + 1..b {
                let f = l[k * b + i];
                let (head, tail) = x.split_at_mut(k * width);
                let row_i = &mut head[i * width..(i + 1) * width];
                let row_k = &tail[..width];
                for (xi, xk) in row_i.iter_mut().zip(row_k) {
                    *xi -= f * xk;
                }
            }
            let d = l[i * b + i];
            for xi in x[i * width..(i + 1) * width].iter_mut() {
                *xi /= d;
            }
        }
    }

    /// Absorb `b` rows (design block `a`, row-major b x p, targets `y`).
    fn absorb(&mut self, a: &[f64], y: &[f64], b: usize) -> Result<(), AnfisError> {
        debug_assert_eq!(a.len(), b * self.p);
        debug_assert_eq!(y.len(), b);
        let a_view = ArrayView2::from_shape((b, self.p), a).expect("block shape");

        // V = A P
        let mut v = Array2::zeros((b, self.p));
        general_mat_mul(1.0, &a_view, &self.cov, 0.0, &mut v);

        // S = I + V A^T
        let mut s = Array2::zeros((b, b));
        general_mat_mul(1.0, &v, &a_view.t(), 0.0, &mut s);
        for i in 0..b {
            s[(i, i)] += 1.0;
        }
        let mut l = s.into_raw_vec_and_offset().0;
        Self::cholesky(&mut l, b)?;

        // residuals r = y - A theta
        let mut resid = y.to_vec();
        for (ri, row) in resid.iter_mut().zip(a.chunks_exact(self.p)) {
            let mut dot = 0.0;
            for (ai, ti) in row.iter().zip(&self.theta) {
                dot += ai * ti;
            }
            *ri -= dot;
        }
        Self::cholesky_solve_rows(&l, b, &mut resid, 1);

        // theta += V^T (S^-1 r)
        for (zi, vrow) in resid.iter().zip(v.rows()) {
            let vrow = vrow.as_slice().expect("contiguous row");
            for (t, vj) in self.theta.iter_mut().zip(vrow) {
                *t += zi * vj;
            }
        }

        // P -= V^T (S^-1 V)
        let mut z = v.clone().into_raw_vec_and_offset().0;
        Self::cholesky_solve_rows(&l, b, &mut z, self.p);
        let z_view = ArrayView2::from_shape((b, self.p), &z).expect("z shape");
        general_mat_mul(-1.0, &v.t(), &z_view, 1.0, &mut self.cov);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel {
    format_version: String,
    config: AnfisConfig,
    scaler: Scaler,
    dataset_recipe: Option<DatasetRecipe>,
    /// n x m Gaussian grid, input-major (j*m + k).
    premise: Vec<GaussianMf>,
    /// R x (n+1) first-order consequents, rule-major: p_1..p_n, r.
    consequents: Vec<f64>,
}

impl AnfisModel {
    /// Initialize from a scaled training batch: equal-spacing premise,
    /// zero consequents, identity scaler.
    pub fn init_from_batch(config: AnfisConfig, batch: &TrainingBatch) -> Result<Self, AnfisError> {
        let premise = init_premise(&config, batch)?;
        Ok(Self {
            format_version: ANFIS_FORMAT_VERSION.to_string(),
            config,
            scaler: Scaler::identity(),
            dataset_recipe: None,
            premise,
            consequents: vec![0.0; config.consequent_len()],
        })
    }

    /// Initialize for a supervised dataset, adopting its scaler snapshot.
    pub fn init(config: AnfisConfig, dataset: &SupervisedDataset) -> Result<Self, AnfisError> {
        let batch = TrainingBatch::from_dataset(dataset, Split::Train);
        if batch.is_empty() {
            return Err(AnfisError::EmptySplit("train"));
        }
        let mut model = Self::init_from_batch(config, &batch)?;
        model.scaler = dataset.scaler().clone();
        Ok(model)
    }

    pub fn config(&self) -> &AnfisConfig {
        &self.config
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn dataset_recipe(&self) -> Option<&DatasetRecipe> {
        self.dataset_recipe.as_ref()
    }

    pub fn set_dataset_recipe(&mut self, recipe: DatasetRecipe) {
        self.dataset_recipe = Some(recipe);
    }

    pub fn premise(&self) -> &[GaussianMf] {
        &self.premise
    }

    pub fn consequents(&self) -> &[f64] {
        &self.consequents
    }

    pub fn set_consequents(&mut self, consequents: Vec<f64>) {
        assert_eq!(consequents.len(), self.config.consequent_len());
        self.consequents = consequents;
    }

    fn check_input(&self, x: &[f64]) -> Result<(), AnfisError> {
        if x.len() != self.config.inputs {
            return Err(AnfisError::DimensionMismatch {
                expected: self.config.inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn membership_table(&self, x: &[f64]) -> Vec<f64> {
        let m = self.config.mfs_per_input;
        let mut mu = Vec::with_capacity(self.premise.len());
        for (idx, mf) in self.premise.iter().enumerate() {
            mu.push(mf.evaluate(x[idx / m]));
        }
        mu
    }

    /// Raw and normalized firing strengths for one scaled input vector.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negated so a NaN total is silent
    pub fn firing_strengths(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AnfisError> {
        self.check_input(x)?;
        let mu = self.membership_table(x);
        let w = products_from_memberships(&mu, self.config.inputs, self.config.mfs_per_input);
        let total: f64 = w.iter().sum();
        if !(total > SILENCE_THRESHOLD) {
            return Err(AnfisError::AllRulesSilent { row: 0 });
        }
        let normalized: Vec<f64> = w.iter().map(|wi| wi / total).collect();
        Ok((w, normalized))
    }

    /// Rule output f_r(x) = p_r . x + r_r.
    fn rule_output(&self, rule: usize, x: &[f64]) -> f64 {
        let n = self.config.inputs;
        let block = &self.consequents[rule * (n + 1)..(rule + 1) * (n + 1)];
        let mut f = block[n];
        for (p, xi) in block[..n].iter().zip(x) {
            f += p * xi;
        }
        f
    }

    /// Weighted-average defuzzification: y = sum_r wbar_r f_r(x).
    pub fn forward(&self, x: &[f64]) -> Result<f64, AnfisError> {
        let (_, wbar) = self.firing_strengths(x)?;
        let mut y = 0.0;
        for (rule, wn) in wbar.iter().enumerate() {
            y += wn * self.rule_output(rule, x);
        }
        Ok(y)
    }

    /// Scaled prediction mapped back to m/s.
    pub fn predict_input(&self, x: &[f64]) -> Result<f64, AnfisError> {
        Ok(self.scaler.inverse_target(self.forward(x)?))
    }

    /// Exact least-squares solve of all consequents with the premise fixed.
    ///
    /// Rows whose total firing strength underflows are skipped and counted.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn solve_consequents(&mut self, batch: &TrainingBatch) -> Result<SolveOutcome, AnfisError> {
        if batch.is_empty() {
            return Err(AnfisError::EmptySplit("train"));
        }
        if batch.n_inputs() != self.config.inputs {
            return Err(AnfisError::DimensionMismatch {
                expected: self.config.inputs,
                got: batch.n_inputs(),
            });
        }
        let n = self.config.inputs;
        let p = self.config.consequent_len();
        let mut solver = RlsSolver::new(p, RLS_INITIAL_COVARIANCE);
        let mut block = vec![0.0; RLS_BLOCK * p];
        let mut targets = Vec::with_capacity(RLS_BLOCK);
        let mut filled = 0usize;
        let mut rows_used = 0usize;
        let mut rows_skipped = 0usize;

        for i in 0..batch.len() {
            let x = batch.input(i);
            let mu = self.membership_table(x);
            let w = products_from_memberships(&mu, n, self.config.mfs_per_input);
            let total: f64 = w.iter().sum();
            if !(total > SILENCE_THRESHOLD) {
                rows_skipped += 1;
                continue;
            }
            let row = &mut block[filled * p..(filled + 1) * p];
            for (rule, wi) in w.iter().enumerate() {
                let wn = wi / total;
                let base = rule * (n + 1);
                for (q, xq) in x.iter().enumerate() {
                    row[base + q] = wn * xq;
                }
                row[base + n] = wn;
            }
            targets.push(batch.target(i));
            filled += 1;
            rows_used += 1;
            if filled == RLS_BLOCK {
                solver.absorb(&block, &targets, filled)?;
                filled = 0;
                targets.clear();
                block.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if filled > 0 {
            solver.absorb(&block[..filled * p], &targets, filled)?;
        }
        if rows_used > 0 {
            self.consequents = solver.theta;
        }
        Ok(SolveOutcome {
            rows_used,
            rows_skipped,
        })
    }

    /// Batch MSE in scaled units.
    pub fn batch_mse_scaled(&self, batch: &TrainingBatch) -> Result<f64, AnfisError> {
        if batch.is_empty() {
            return Err(AnfisError::EmptySplit("evaluation"));
        }
        let mut sum = 0.0;
        for i in 0..batch.len() {
            let y = self.forward(batch.input(i)).map_err(|e| match e {
                AnfisError::AllRulesSilent { .. } => AnfisError::AllRulesSilent { row: i },
                other => other,
            })?;
            let d = y - batch.target(i);
            sum += d * d;
        }
        Ok(sum / batch.len() as f64)
    }

    /// Analytic gradient of the batch MSE with respect to every center and
    /// sigma, consequents held fixed.
    ///
    /// With w_r = prod_j mu_{j,r_j}, the chain through the normalized
    /// weights gives, per sample,
    ///   d y / d c_{j,k} = sum_{r : r_j = k} wbar_r (f_r - y) (x_j - c) / sigma^2
    /// and the sigma derivative carries (x_j - c)^2 / sigma^3 instead.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn premise_gradient(&self, batch: &TrainingBatch) -> Result<PremiseGradient, AnfisError> {
        if batch.is_empty() {
            return Err(AnfisError::EmptySplit("train"));
        }
        let n = self.config.inputs;
        let m = self.config.mfs_per_input;
        let mut d_center = vec![0.0; n * m];
        let mut d_sigma = vec![0.0; n * m];
        let inv_batch = 1.0 / batch.len() as f64;
        let mut acc = vec![0.0; n * m];

        for i in 0..batch.len() {
            let x = batch.input(i);
            self.check_input(x)?;
            let mu = self.membership_table(x);
            let w = products_from_memberships(&mu, n, m);
            let total: f64 = w.iter().sum();
            if !(total > SILENCE_THRESHOLD) {
                return Err(AnfisError::AllRulesSilent { row: i });
            }
            let mut y = 0.0;
            let mut outputs = Vec::with_capacity(w.len());
            for (rule, wi) in w.iter().enumerate() {
                let f = self.rule_output(rule, x);
                outputs.push(f);
                y += (wi / total) * f;
            }

            // acc[j*m+k] = sum over rules with r_j = k of wbar_r (f_r - y)
            acc.iter_mut().for_each(|v| *v = 0.0);
            let mut digits = vec![0usize; n];
            for (rule, wi) in w.iter().enumerate() {
                let wf = (wi / total) * (outputs[rule] - y);
                for (j, k) in digits.iter().enumerate() {
                    acc[j * m + k] += wf;
                }
                // lexicographic odometer, last input fastest
                if rule + 1 < w.len() {
                    for j in (0..n).rev() {
                        digits[j] += 1;
                        if digits[j] == m {
                            digits[j] = 0;
                        } else {
                            break;
                        }
                    }
                }
            }

            let err = 2.0 * (y - batch.target(i)) * inv_batch;
            for j in 0..n {
                for k in 0..m {
                    let mf = &self.premise[j * m + k];
                    let d = x[j] - mf.center;
                    let s2 = mf.sigma * mf.sigma;
                    d_center[j * m + k] += err * acc[j * m + k] * d / s2;
                    d_sigma[j * m + k] += err * acc[j * m + k] * d * d / (s2 * mf.sigma);
                }
            }
        }
        Ok(PremiseGradient { d_center, d_sigma })
    }

    /// Premise parameters as one flat vector: all centers, then all sigmas.
    pub fn flatten_premise(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.premise.iter().map(|mf| mf.center).collect();
        out.extend(self.premise.iter().map(|mf| mf.sigma));
        out
    }

    /// Inverse of [`AnfisModel::flatten_premise`].
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn assign_premise(&mut self, params: &[f64]) -> Result<(), AnfisError> {
        let count = self.premise.len();
        if params.len() != 2 * count {
            return Err(AnfisError::DimensionMismatch {
                expected: 2 * count,
                got: params.len(),
            });
        }
        for (i, mf) in self.premise.iter_mut().enumerate() {
            let sigma = params[count + i];
            if !(sigma > 0.0) || !params[i].is_finite() {
                return Err(AnfisError::InvalidConfig(
                    "premise parameters must be finite with sigma > 0".into(),
                ));
            }
            mf.center = params[i];
            mf.sigma = sigma;
        }
        Ok(())
    }

    /// One premise update: move `step` along the normalized gradient and
    /// clamp every sigma to the floor.
    fn premise_step(&mut self, grad: &PremiseGradient, step: f64) {
        let norm = grad
            .d_center
            .iter()
            .chain(&grad.d_sigma)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return;
        }
        for (i, mf) in self.premise.iter_mut().enumerate() {
            mf.center -= step * grad.d_center[i] / norm;
            mf.sigma = (mf.sigma - step * grad.d_sigma[i] / norm).max(SIGMA_FLOOR);
        }
    }

    /// Hybrid training: per epoch, an exact consequent solve followed by one
    /// normalized gradient step on the premise, with the step length adapted
    /// by the usual heuristic (x1.1 after four consecutive error decreases,
    /// x0.9 after two consecutive up-down oscillations).
    ///
    /// The per-epoch trace records the model right after its consequent
    /// solve. With a validation split present the best-validation epoch is
    /// returned and patience applies; without one the last epoch wins (the
    /// trace then carries the train MSE in the validation column).
    pub fn train(
        &self,
        dataset: &SupervisedDataset,
    ) -> Result<(AnfisModel, TrainTrace), AnfisError> {
        let mut model = self.clone();
        model.scaler = dataset.scaler().clone();
        let train = TrainingBatch::from_dataset(dataset, Split::Train);
        if train.is_empty() {
            return Err(AnfisError::EmptySplit("train"));
        }
        let validation = TrainingBatch::from_dataset(dataset, Split::Validation);
        let has_validation = !validation.is_empty();

        let to_physical = model.scaler.target_half_range().powi(2);
        let eval = |m: &AnfisModel, epoch: usize| -> Result<(f64, f64), AnfisError> {
            let train_mse = m.batch_mse_scaled(&train)? * to_physical;
            let val_mse = if has_validation {
                m.batch_mse_scaled(&validation)? * to_physical
            } else {
                train_mse
            };
            if !train_mse.is_finite() || !val_mse.is_finite() {
                return Err(AnfisError::NonFiniteLoss { epoch });
            }
            Ok((train_mse, val_mse))
        };

        let (train_mse, val_mse) = eval(&model, 0)?;
        let mut trace = vec![TraceEpoch {
            epoch: 0,
            train_mse,
            validation_mse: val_mse,
        }];
        let mut best_epoch = 0usize;
        let mut best_val = val_mse;
        let mut best_model = model.clone();
        let mut stale_epochs = 0usize;
        let mut stopped_early = false;

        let mut step = model.config.step_size;
        let mut error_history = vec![train_mse];

        for epoch in 1..=model.config.max_epochs {
            model.solve_consequents(&train)?;
            let (train_mse, val_mse) = eval(&model, epoch)?;
            trace.push(TraceEpoch {
                epoch,
                train_mse,
                validation_mse: val_mse,
            });

            let improved = val_mse < best_val;
            if improved || !has_validation {
                best_val = val_mse;
                best_epoch = epoch;
                best_model = model.clone();
            }
            if has_validation {
                if improved {
                    stale_epochs = 0;
                } else {
                    stale_epochs += 1;
                    if stale_epochs >= model.config.patience {
                        stopped_early = true;
                        break;
                    }
                }
            }

            if epoch == model.config.max_epochs {
                break;
            }

            // premise step along the normalized gradient
            let grad = model.premise_gradient(&train)?;
            model.premise_step(&grad, step);

            // step-length adaptation on the train-error history
            error_history.push(train_mse);
            if error_history.len() >= 5 {
                let tail = &error_history[error_history.len() - 5..];
                let deltas: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
                if deltas.iter().all(|d| *d < 0.0) {
                    step *= model.config.step_increase;
                    error_history = vec![train_mse];
                } else if deltas.iter().enumerate().all(|(i, d)| {
                    if i % 2 == 0 {
                        *d < 0.0
                    } else {
                        *d > 0.0
                    }
                }) || deltas.iter().enumerate().all(|(i, d)| {
                    if i % 2 == 0 {
                        *d > 0.0
                    } else {
                        *d < 0.0
                    }
                }) {
                    step *= model.config.step_decrease;
                    error_history = vec![train_mse];
                }
            }
        }

        Ok((
            best_model,
            TrainTrace {
                epochs: trace,
                best_epoch,
                stopped_early,
            },
        ))
    }

    /// Predict feature rows, skipping the first `lag_depth` rows of every
    /// segment so results line up with delay-line models evaluated on the
    /// same data.
    pub fn predict_rows(
        &self,
        rows: &[FeatureRow],
        labels: &[Split],
        lag_depth: usize,
    ) -> Result<Vec<Prediction>, AnfisError> {
        let mut out = Vec::new();
        let mut segment_start = 0usize;
        for (i, row) in rows.iter().enumerate() {
            if i > 0 && row.segment_id != rows[i - 1].segment_id {
                segment_start = i;
            }
            if i - segment_start < lag_depth {
                continue;
            }
            let x = self.scaler.scale_features(row);
            let y = self.forward(&x).map_err(|e| match e {
                AnfisError::AllRulesSilent { .. } => AnfisError::AllRulesSilent { row: i },
                other => other,
            })?;
            out.push(Prediction {
                row_index: i,
                split: labels[i],
                expected_ms: row.target_wind_speed,
                predicted_ms: self.scaler.inverse_target(y),
            });
        }
        Ok(out)
    }

    /// Per-split metrics over the rows this model predicts.
    pub fn evaluate(
        &self,
        rows: &[FeatureRow],
        labels: &[Split],
        lag_depth: usize,
    ) -> Result<Vec<(Split, EvalMetrics)>, AnfisError> {
        let predictions = self.predict_rows(rows, labels, lag_depth)?;
        let mut out = Vec::new();
        for split in Split::ALL {
            let (expected, predicted): (Vec<f64>, Vec<f64>) = predictions
                .iter()
                .filter(|p| p.split == split)
                .map(|p| (p.expected_ms, p.predicted_ms))
                .unzip();
            if expected.is_empty() {
                continue;
            }
            out.push((split, EvalMetrics::compute(&expected, &predicted)?));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AnfisError> {
        let model: AnfisModel =
            serde_json::from_str(text).map_err(|e| AnfisError::Persistence(e.to_string()))?;
        if model.format_version != ANFIS_FORMAT_VERSION {
            return Err(AnfisError::Persistence(format!(
                "unsupported format version '{}'",
                model.format_version
            )));
        }
        model.config.validate()?;
        if model.premise.len() != model.config.inputs * model.config.mfs_per_input
            || model.consequents.len() != model.config.consequent_len()
        {
            return Err(AnfisError::Persistence(
                "parameter shapes do not match config".into(),
            ));
        }
        if !model.consequents.iter().all(|c| c.is_finite())
            || !model
                .premise
                .iter()
                .all(|mf| mf.center.is_finite() && mf.sigma >= SIGMA_FLOOR)
        {
            return Err(AnfisError::Persistence(
                "invalid parameter values in model file".into(),
            ));
        }
        Ok(model)
    }
}
