//! NARX-type feed-forward network: tanh hidden layer, linear output, tapped
//! delay lines over the six exogenous inputs and the measured target.
//!
//! The network is trained in series-parallel (open-loop) form: the
//! autoregressive taps carry measured past wind speeds, never the model's
//! own predictions, and windows never span a segment boundary. Training is
//! full-batch gradient descent with per-parameter first/second moment
//! accumulators (bias-corrected) and early stopping on validation MSE.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DatasetRecipe, Prediction, Scaler, Split, SupervisedDataset, FEATURE_COUNT};
use crate::metrics::{EvalMetrics, MetricsError};
use crate::rng::SplitMix64;
use crate::trace::{TraceEpoch, TrainTrace};

pub const NARX_FORMAT_VERSION: &str = "buoycast-narx/1";

#[derive(Debug, Error, PartialEq)]
pub enum NarxError {
    #[error("window length {got} does not match input width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} split has no usable windows")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}; training aborted")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Persistence(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Hidden-layer activation. Only tanh is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Tanh,
}

/// Output-layer activation. Only linear is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarxConfig {
    pub hidden_neurons: usize,
    /// Exogenous delay d_x: lags 0..=d_x of each of the six inputs.
    pub exogenous_delay: usize,
    /// Autoregressive delay d_y: lags 1..=d_y of the measured target.
    pub autoregressive_delay: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub step_size: f64,
    pub first_moment_decay: f64,
    pub second_moment_decay: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub rng_seed: u64,
}

impl Default for NarxConfig {
    fn default() -> Self {
        Self {
            hidden_neurons: 50,
            exogenous_delay: 2,
            autoregressive_delay: 2,
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Linear,
            step_size: 1e-2,
            first_moment_decay: 0.9,
            second_moment_decay: 0.999,
            epsilon: 1e-8,
            max_epochs: 2000,
            patience: 25,
            rng_seed: 1,
        }
    }
}

impl NarxConfig {
    /// Effective input width: 6*(d_x+1) exogenous taps plus d_y target taps.
    pub fn input_width(&self) -> usize {
        FEATURE_COUNT * (self.exogenous_delay + 1) + self.autoregressive_delay
    }

    fn validate(&self) -> Result<(), NarxError> {
        if self.hidden_neurons == 0 {
            return Err(NarxError::InvalidConfig(
                "hidden_neurons must be >= 1".into(),
            ));
        }
        if self.max_epochs == 0 {
            return Err(NarxError::InvalidConfig("max_epochs must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(NarxError::InvalidConfig(
                "step_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A batch of supervised windows in scaled units.
///
/// Windows are stored as one flat row-major matrix; each window carries the
/// index and split of the feature row it predicts for.
#[derive(Debug, Clone)]
pub struct WindowSet {
    width: usize,
    inputs: Vec<f64>,
    targets_scaled: Vec<f64>,
    targets_ms: Vec<f64>,
    row_indices: Vec<usize>,
    splits: Vec<Split>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.targets_scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets_scaled.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.width..(i + 1) * self.width]
    }

    pub fn target_scaled(&self, i: usize) -> f64 {
        self.targets_scaled[i]
    }

    pub fn target_ms(&self, i: usize) -> f64 {
        self.targets_ms[i]
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn row_index(&self, i: usize) -> usize {
        self.row_indices[i]
    }

    pub fn indices_for(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// Build a batch directly from (window, scaled target) pairs. Test and
    /// binding helper; physical targets are left equal to the scaled ones.
    pub fn from_pairs(pairs: &[(Vec<f64>, f64)], width: usize) -> Self {
        let mut set = WindowSet {
            width,
            inputs: Vec::with_capacity(pairs.len() * width),
            targets_scaled: Vec::with_capacity(pairs.len()),
            targets_ms: Vec::with_capacity(pairs.len()),
            row_indices: (0..pairs.len()).collect(),
            splits: vec![Split::Train; pairs.len()],
        };
        for (window, target) in pairs {
            assert_eq!(window.len(), width);
            set.inputs.extend_from_slice(window);
            set.targets_scaled.push(*target);
            set.targets_ms.push(*target);
        }
        set
    }
}

fn build_windows(
    rows: &[crate::features::FeatureRow],
    labels: &[Split],
    scaler: &Scaler,
    config: &NarxConfig,
) -> WindowSet {
    let width = config.input_width();
    let dx = config.exogenous_delay;
    let dy = config.autoregressive_delay;
    let depth = dx.max(dy);

    let mut set = WindowSet {
        width,
        inputs: Vec::new(),
        targets_scaled: Vec::new(),
        targets_ms: Vec::new(),
        row_indices: Vec::new(),
        splits: Vec::new(),
    };

    let mut segment_start = 0usize;
    for t in 0..rows.len() {
        if t > 0 && rows[t].segment_id != rows[t - 1].segment_id {
            segment_start = t;
        }
        if t - segment_start < depth {
            continue;
        }
        for lag in 0..=dx {
            set.inputs
                .extend_from_slice(&scaler.scale_features(&rows[t - lag]));
        }
        for lag in 1..=dy {
            // Measured wind speed at the feature time minus (lag-1) steps,
            // i.e. the target of row t-lag, in target scale.
            set.inputs
                .push(scaler.scale_target(rows[t - lag].target_wind_speed));
        }
        set.targets_scaled
            .push(scaler.scale_target(rows[t].target_wind_speed));
        set.targets_ms.push(rows[t].target_wind_speed);
        set.row_indices.push(t);
        set.splits.push(labels[t]);
    }
    set
}

/// Build windows for a dataset using the dataset's own scaler.
///
/// A row contributes a window only when all its lags exist within the same
/// contiguous segment, so windows never cross a segment boundary.
pub fn assemble_windows(dataset: &SupervisedDataset, config: &NarxConfig) -> WindowSet {
    build_windows(dataset.rows(), dataset.labels(), dataset.scaler(), config)
}

/// Parameter-shaped gradient of a batch MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxGradient {
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_output: Vec<f64>,
    pub b_output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxModel {
    format_version: String,
    config: NarxConfig,
    scaler: Scaler,
    dataset_recipe: Option<DatasetRecipe>,
    /// Hidden weights, H x input_width, row-major.
    w_hidden: Vec<f64>,
    b_hidden: Vec<f64>,
    /// Output weights, one per hidden neuron.
    w_output: Vec<f64>,
    b_output: f64,
}

impl NarxModel {
    /// Initialize with seeded uniform weights: hidden layer in
    /// [-1/sqrt(width), +1/sqrt(width)], output layer in
    /// [-1/sqrt(H), +1/sqrt(H)], biases zero.
    pub fn init(config: NarxConfig) -> Result<Self, NarxError> {
        config.validate()?;
        let width = config.input_width();
        let h = config.hidden_neurons;
        let mut rng = SplitMix64::new(config.rng_seed);
        let hidden_bound = 1.0 / (width as f64).sqrt();
        let w_hidden: Vec<f64> = (0..h * width)
            .map(|_| rng.uniform(-hidden_bound, hidden_bound))
            .collect();
        let output_bound = 1.0 / (h as f64).sqrt();
        let w_output: Vec<f64> = (0..h)
            .map(|_| rng.uniform(-output_bound, output_bound))
            .collect();
        Ok(Self {
            format_version: NARX_FORMAT_VERSION.to_string(),
            config,
            scaler: Scaler::identity(),
            dataset_recipe: None,
            w_hidden,
            b_hidden: vec![0.0; h],
            w_output,
            b_output: 0.0,
        })
    }

    pub fn config(&self) -> &NarxConfig {
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

    /// Forward pass on one scaled window: h_i = tanh(sum_j w_ij x_j + b_i),
    /// y = sum_i v_i h_i + b_out.
    pub fn forward(&self, window: &[f64]) -> Result<f64, NarxError> {
        let width = self.config.input_width();
        if window.len() != width {
            return Err(NarxError::DimensionMismatch {
                expected: width,
                got: window.len(),
            });
        }
        let mut y = self.b_output;
        for i in 0..self.config.hidden_neurons {
            let row = &self.w_hidden[i * width..(i + 1) * width];
            let mut pre = self.b_hidden[i];
            for (w, x) in row.iter().zip(window) {
                pre += w * x;
            }
            y += self.w_output[i] * pre.tanh();
        }
        Ok(y)
    }

    /// Scaled prediction mapped back to m/s via the model's scaler.
    pub fn predict_window(&self, window: &[f64]) -> Result<f64, NarxError> {
        Ok(self.scaler.inverse_target(self.forward(window)?))
    }

    /// Gradient of the mean squared error over the given batch indices.
    pub fn gradient(&self, set: &WindowSet, indices: &[usize]) -> Result<NarxGradient, NarxError> {
        let width = self.config.input_width();
        if set.width() != width {
            return Err(NarxError::DimensionMismatch {
                expected: width,
                got: set.width(),
            });
        }
        let h = self.config.hidden_neurons;
        let mut grad = NarxGradient {
            w_hidden: vec![0.0; h * width],
            b_hidden: vec![0.0; h],
            w_output: vec![0.0; h],
            b_output: 0.0,
        };
        let inv_batch = 1.0 / indices.len() as f64;
        let mut hidden = vec![0.0; h];
        for &sample in indices {
            let window = set.window(sample);
            let mut y = self.b_output;
            for i in 0..h {
                let row = &self.w_hidden[i * width..(i + 1) * width];
                let mut pre = self.b_hidden[i];
                for (w, x) in row.iter().zip(window) {
                    pre += w * x;
                }
                hidden[i] = pre.tanh();
                y += self.w_output[i] * hidden[i];
            }
            // d(batch MSE)/dy for this sample
            let dy = 2.0 * (y - set.target_scaled(sample)) * inv_batch;
            grad.b_output += dy;
            for i in 0..h {
                grad.w_output[i] += dy * hidden[i];
                let dpre = dy * self.w_output[i] * (1.0 - hidden[i] * hidden[i]);
                grad.b_hidden[i] += dpre;
                let grow = &mut grad.w_hidden[i * width..(i + 1) * width];
                for (g, x) in grow.iter_mut().zip(window) {
                    *g += dpre * x;
                }
            }
        }
        Ok(grad)
    }

    /// Batch MSE in scaled units over the given window indices.
    pub fn batch_mse_scaled(&self, set: &WindowSet, indices: &[usize]) -> Result<f64, NarxError> {
        let mut sum = 0.0;
        for &i in indices {
            let d = self.forward(set.window(i))? - set.target_scaled(i);
            sum += d * d;
        }
        Ok(sum / indices.len() as f64)
    }

    /// All parameters as one flat vector: hidden weights row-major, hidden
    /// biases, output weights, output bias.
    pub fn flatten_parameters(&self) -> Vec<f64> {
        let mut params = self.w_hidden.clone();
        params.extend_from_slice(&self.b_hidden);
        params.extend_from_slice(&self.w_output);
        params.push(self.b_output);
        params
    }

    /// Inverse of [`NarxModel::flatten_parameters`].
    pub fn assign_parameters(&mut self, params: &[f64]) -> Result<(), NarxError> {
        let h = self.config.hidden_neurons;
        let width = self.config.input_width();
        let expected = h * width + h + h + 1;
        if params.len() != expected {
            return Err(NarxError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        let (wh, rest) = params.split_at(h * width);
        let (bh, rest) = rest.split_at(h);
        let (wo, bo) = rest.split_at(h);
        self.w_hidden.copy_from_slice(wh);
        self.b_hidden.copy_from_slice(bh);
        self.w_output.copy_from_slice(wo);
        self.b_output = bo[0];
        Ok(())
    }

    /// Full-batch adaptive-moment gradient descent with early stopping.
    ///
    /// Returns the weights from the best-validation epoch together with the
    /// per-epoch trace (epoch 0 is the untrained baseline). The returned
    /// model adopts the dataset's scaler as its snapshot.
    pub fn train(&self, dataset: &SupervisedDataset) -> Result<(NarxModel, TrainTrace), NarxError> {
        let mut model = self.clone();
        model.scaler = dataset.scaler().clone();
        let set = assemble_windows(dataset, &model.config);
        let train_idx = set.indices_for(Split::Train);
        let val_idx = set.indices_for(Split::Validation);
        if train_idx.is_empty() {
            return Err(NarxError::EmptySplit("train"));
        }
        if val_idx.is_empty() {
            return Err(NarxError::EmptySplit("validation"));
        }

        // Scaled-to-physical MSE conversion: the inverse target map is
        // affine, so squared errors scale by the squared half-range.
        let to_physical = model.scaler.target_half_range().powi(2);
        let eval = |m: &NarxModel, epoch: usize| -> Result<(f64, f64), NarxError> {
            let train_mse = m.batch_mse_scaled(&set, &train_idx)? * to_physical;
            let val_mse = m.batch_mse_scaled(&set, &val_idx)? * to_physical;
            if !train_mse.is_finite() || !val_mse.is_finite() {
                return Err(NarxError::NonFiniteLoss { epoch });
            }
            Ok((train_mse, val_mse))
        };

        let mut params = model.flatten_parameters();
        let mut m1 = vec![0.0; params.len()];
        let mut m2 = vec![0.0; params.len()];
        let beta1 = model.config.first_moment_decay;
        let beta2 = model.config.second_moment_decay;

        let (train_mse, val_mse) = eval(&model, 0)?;
        let mut trace = vec![TraceEpoch {
            epoch: 0,
            train_mse,
            validation_mse: val_mse,
        }];
        let mut best_epoch = 0usize;
        let mut best_val = val_mse;
        let mut best_params = params.clone();
        let mut stale_epochs = 0usize;
        let mut stopped_early = false;

        for epoch in 1..=model.config.max_epochs {
            let grad = model.gradient(&set, &train_idx)?;
            let mut flat_grad = grad.w_hidden;
            flat_grad.extend_from_slice(&grad.b_hidden);
            flat_grad.extend_from_slice(&grad.w_output);
            flat_grad.push(grad.b_output);

            let bias1 = 1.0 - beta1.powi(epoch as i32);
            let bias2 = 1.0 - beta2.powi(epoch as i32);
            for ((p, g), (m, v)) in params
                .iter_mut()
                .zip(&flat_grad)
                .zip(m1.iter_mut().zip(m2.iter_mut()))
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= model.config.step_size * m_hat / (v_hat.sqrt() + model.config.epsilon);
            }
            model.assign_parameters(&params)?;

            let (train_mse, val_mse) = eval(&model, epoch)?;
            trace.push(TraceEpoch {
                epoch,
                train_mse,
                validation_mse: val_mse,
            });

            if val_mse < best_val {
                best_val = val_mse;
                best_epoch = epoch;
                best_params.copy_from_slice(&params);
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= model.config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }

        model.assign_parameters(&best_params)?;
        Ok((
            model,
            TrainTrace {
                epochs: trace,
                best_epoch,
                stopped_early,
            },
        ))
    }

    /// Predict every row that has full lag coverage, using the model's own
    /// scaler snapshot.
    pub fn predict_rows(
        &self,
        rows: &[crate::features::FeatureRow],
        labels: &[Split],
    ) -> Result<Vec<Prediction>, NarxError> {
        let set = build_windows(rows, labels, &self.scaler, &self.config);
        let mut out = Vec::with_capacity(set.len());
        for i in 0..set.len() {
            out.push(Prediction {
                row_index: set.row_index(i),
                split: set.split(i),
                expected_ms: set.target_ms(i),
                predicted_ms: self.scaler.inverse_target(self.forward(set.window(i))?),
            });
        }
        Ok(out)
    }

    /// Per-split metrics over the rows this model can predict.
    pub fn evaluate(
        &self,
        rows: &[crate::features::FeatureRow],
        labels: &[Split],
    ) -> Result<Vec<(Split, EvalMetrics)>, NarxError> {
        let predictions = self.predict_rows(rows, labels)?;
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

    pub fn from_json(text: &str) -> Result<Self, NarxError> {
        let model: NarxModel =
            serde_json::from_str(text).map_err(|e| NarxError::Persistence(e.to_string()))?;
        if model.format_version != NARX_FORMAT_VERSION {
            return Err(NarxError::Persistence(format!(
                "unsupported format version '{}'",
                model.format_version
            )));
        }
        model.config.validate()?;
        let h = model.config.hidden_neurons;
        let width = model.config.input_width();
        if model.w_hidden.len() != h * width
            || model.b_hidden.len() != h
            || model.w_output.len() != h
        {
            return Err(NarxError::Persistence(
                "weight shapes do not match config".into(),
            ));
        }
        if !model.flatten_parameters().iter().all(|p| p.is_finite()) {
            return Err(NarxError::Persistence(
                "non-finite weight in model file".into(),
            ));
        }
        Ok(model)
    }
}
