//! Supervised feature construction: the six model inputs, the 3-hour-ahead
//! wind-speed target, min-max scaling, and chronological splitting.
//!
//! Each feature row carries the current temperature, pressure, and wind
//! speed plus their one-step changes, and targets the wind speed one cadence
//! step ahead. Deltas and targets are only ever computed inside one
//! contiguous segment, so a segment of length L yields exactly L-2 rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ObservationSeries;
use crate::rng::SplitMix64;

pub const FEATURE_COUNT: usize = 6;

/// Canonical feature order, used everywhere a feature vector appears.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "temperature",
    "pressure",
    "wind_speed",
    "pressure_delta",
    "wind_speed_delta",
    "temperature_delta",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeaturesError {
    #[error("column '{0}' is constant on the training split; cannot fit scaler")]
    DegenerateColumn(String),
    #[error("{0} rows cannot be split into non-empty train/validation/test")]
    TooFewRows(usize),
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("need at least 2 training rows to fit a scaler, got {0}")]
    NotEnoughRows(usize),
}

/// One supervised example: features at time t, target at t + one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// UTC instant of the feature (not target) time, epoch seconds.
    pub timestamp: i64,
    /// Index of the contiguous segment this row came from.
    pub segment_id: usize,
    pub temperature: f64,
    pub pressure: f64,
    pub wind_speed: f64,
    pub pressure_delta: f64,
    pub wind_speed_delta: f64,
    pub temperature_delta: f64,
    /// Wind speed one cadence step ahead, m/s.
    pub target_wind_speed: f64,
}

impl FeatureRow {
    /// Features in canonical order.
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.temperature,
            self.pressure,
            self.wind_speed,
            self.pressure_delta,
            self.wind_speed_delta,
            self.temperature_delta,
        ]
    }
}

/// Build feature rows from contiguous segments.
///
/// For a segment of length L this emits exactly max(0, L-2) rows: one step
/// is consumed by the backward delta, one by the forward target.
pub fn build_rows(segments: &[ObservationSeries]) -> Vec<FeatureRow> {
    let mut rows = Vec::new();
    for (segment_id, segment) in segments.iter().enumerate() {
        let recs = segment.records();
        if recs.len() < 3 {
            continue;
        }
        for i in 1..recs.len() - 1 {
            let cur = &recs[i];
            let prev = &recs[i - 1];
            rows.push(FeatureRow {
                timestamp: cur.timestamp,
                segment_id,
                temperature: cur.air_temperature_c,
                pressure: cur.air_pressure_mbar,
                wind_speed: cur.wind_speed_ms,
                pressure_delta: cur.air_pressure_mbar - prev.air_pressure_mbar,
                wind_speed_delta: cur.wind_speed_ms - prev.wind_speed_ms,
                temperature_delta: cur.air_temperature_c - prev.air_temperature_c,
                target_wind_speed: recs[i + 1].wind_speed_ms,
            });
        }
    }
    rows
}

/// Per-column affine maps onto [-1, 1], fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    /// (min, max) per feature, canonical order.
    pub feature_ranges: [(f64, f64); FEATURE_COUNT],
    /// (min, max) of the target column.
    pub target_range: (f64, f64),
}

fn scale(value: f64, (min, max): (f64, f64)) -> f64 {
    -1.0 + 2.0 * (value - min) / (max - min)
}

fn unscale(value: f64, (min, max): (f64, f64)) -> f64 {
    min + (value + 1.0) * 0.5 * (max - min)
}

impl Scaler {
    /// Fit on training rows. Every column must have max > min.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negated so NaN columns fail the check
    pub fn fit(rows: &[FeatureRow]) -> Result<Self, FeaturesError> {
        if rows.len() < 2 {
            return Err(FeaturesError::NotEnoughRows(rows.len()));
        }
        let mut feature_ranges = [(f64::INFINITY, f64::NEG_INFINITY); FEATURE_COUNT];
        let mut target_range = (f64::INFINITY, f64::NEG_INFINITY);
        for row in rows {
            for (range, value) in feature_ranges.iter_mut().zip(row.features()) {
                range.0 = range.0.min(value);
                range.1 = range.1.max(value);
            }
            target_range.0 = target_range.0.min(row.target_wind_speed);
            target_range.1 = target_range.1.max(row.target_wind_speed);
        }
        for (name, range) in FEATURE_NAMES.iter().zip(feature_ranges) {
            if !(range.1 > range.0) {
                return Err(FeaturesError::DegenerateColumn(name.to_string()));
            }
        }
        if !(target_range.1 > target_range.0) {
            return Err(FeaturesError::DegenerateColumn("target_wind_speed".into()));
        }
        Ok(Self {
            feature_ranges,
            target_range,
        })
    }

    /// Scaler whose transform is the identity (all ranges [-1, 1]).
    pub fn identity() -> Self {
        Self {
            feature_ranges: [(-1.0, 1.0); FEATURE_COUNT],
            target_range: (-1.0, 1.0),
        }
    }

    /// Map a row's features into scaled units. Values outside the training
    /// range map outside [-1, 1]; nothing is clipped.
    pub fn scale_features(&self, row: &FeatureRow) -> [f64; FEATURE_COUNT] {
        let mut out = row.features();
        for (value, range) in out.iter_mut().zip(self.feature_ranges) {
            *value = scale(*value, range);
        }
        out
    }

    pub fn scale_target(&self, wind_speed: f64) -> f64 {
        scale(wind_speed, self.target_range)
    }

    /// Inverse of [`Scaler::scale_target`]; exact up to rounding.
    pub fn inverse_target(&self, scaled: f64) -> f64 {
        unscale(scaled, self.target_range)
    }

    /// Half-width of the target range; squared-error conversion factor
    /// between scaled and physical units.
    pub fn target_half_range(&self) -> f64 {
        (self.target_range.1 - self.target_range.0) * 0.5
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scaler serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Which split a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<(), FeaturesError> {
        let parts = [self.train, self.validation, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|f| *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(FeaturesError::BadFractions(parts));
        }
        Ok(())
    }

    /// Split sizes for n rows: floor(train*n), floor(validation*n), rest.
    fn counts(&self, n: usize) -> (usize, usize, usize) {
        let n_train = (self.train * n as f64).floor() as usize;
        let n_val = (self.validation * n as f64).floor() as usize;
        (n_train, n_val, n - n_train - n_val)
    }
}

/// One model prediction in physical units, tied back to its feature row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub row_index: usize,
    pub split: Split,
    pub expected_ms: f64,
    pub predicted_ms: f64,
}

/// How a supervised dataset was derived from raw observations.
///
/// Persisted inside trained model files so that `evaluate` can rebuild the
/// exact dataset (same segmentation, same split assignment, same evaluation
/// rows) from the raw CSV alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecipe {
    pub cadence_seconds: i64,
    /// Minimum cadence-segment length kept during ingestion.
    pub min_segment_len: usize,
    pub fractions: SplitFractions,
    pub shuffle_seed: Option<u64>,
    /// Leading rows per segment excluded from evaluation because the NARX
    /// delay lines need that much history. Applied to both models so their
    /// reported metrics cover identical rows.
    pub eval_lag_depth: usize,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        Self {
            cadence_seconds: crate::ingest::DEFAULT_CADENCE_SECONDS,
            min_segment_len: 5,
            fractions: SplitFractions::default(),
            shuffle_seed: None,
            eval_lag_depth: 2,
        }
    }
}

/// Feature rows with per-row split labels and the train-fitted scaler.
///
/// Rows stay in chronological order regardless of how labels were assigned;
/// a shuffled split permutes the labels, never the rows, so tapped delay
/// lines over the rows remain valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    rows: Vec<FeatureRow>,
    labels: Vec<Split>,
    scaler: Scaler,
}

fn assign_labels(
    rows: &[FeatureRow],
    fractions: SplitFractions,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Split>, FeaturesError> {
    fractions.validate()?;
    let n = rows.len();
    let (n_train, n_val, n_test) = fractions.counts(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(FeaturesError::TooFewRows(n));
    }
    let order: Vec<usize> = match shuffle_seed {
        None => (0..n).collect(),
        Some(seed) => {
            // Fisher-Yates over the row indices; deterministic for the seed.
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = SplitMix64::new(seed);
            for i in (1..n).rev() {
                order.swap(i, rng.next_index(i + 1));
            }
            order
        }
    };
    let mut labels = vec![Split::Test; n];
    for (rank, &row) in order.iter().enumerate() {
        labels[row] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(labels)
}

impl SupervisedDataset {
    /// Chronological split: the earliest floor(train*N) rows train, the next
    /// floor(validation*N) validate, the remainder test. The scaler is
    /// fitted on the training rows only.
    pub fn split_chronological(
        rows: Vec<FeatureRow>,
        fractions: SplitFractions,
    ) -> Result<Self, FeaturesError> {
        Self::build(rows, fractions, None)
    }

    /// Seeded shuffled split for parity with toolbox behavior. Labels are
    /// permuted; row order is untouched.
    pub fn split_shuffled(
        rows: Vec<FeatureRow>,
        fractions: SplitFractions,
        seed: u64,
    ) -> Result<Self, FeaturesError> {
        Self::build(rows, fractions, Some(seed))
    }

    pub fn build(
        rows: Vec<FeatureRow>,
        fractions: SplitFractions,
        shuffle_seed: Option<u64>,
    ) -> Result<Self, FeaturesError> {
        let labels = assign_labels(&rows, fractions, shuffle_seed)?;
        let train_rows: Vec<FeatureRow> = rows
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == Split::Train)
            .map(|(r, _)| *r)
            .collect();
        let scaler = Scaler::fit(&train_rows)?;
        Ok(Self {
            rows,
            labels,
            scaler,
        })
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[Split] {
        &self.labels
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let count = |s: Split| self.labels.iter().filter(|l| **l == s).count();
        (
            count(Split::Train),
            count(Split::Validation),
            count(Split::Test),
        )
    }

    pub fn scaled_features(&self, index: usize) -> [f64; FEATURE_COUNT] {
        self.scaler.scale_features(&self.rows[index])
    }

    pub fn scaled_target(&self, index: usize) -> f64 {
        self.scaler.scale_target(self.rows[index].target_wind_speed)
    }

    /// FNV-1a over the split labels; identifies a split assignment.
    pub fn split_assignment_hash(&self) -> u64 {
        let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
        for label in &self.labels {
            let byte = match label {
                Split::Train => 0u8,
                Split::Validation => 1,
                Split::Test => 2,
            };
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
        hash
    }

    /// Inspection CSV: one line per row plus its split label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "timestamp,segment_id,temperature,pressure,wind_speed,\
             pressure_delta,wind_speed_delta,temperature_delta,target_wind_speed,split\n",
        );
        for (row, label) in self.rows.iter().zip(&self.labels) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.timestamp,
                row.segment_id,
                row.temperature,
                row.pressure,
                row.wind_speed,
                row.pressure_delta,
                row.wind_speed_delta,
                row.temperature_delta,
                row.target_wind_speed,
                label.name()
            ));
        }
        out
    }
}
