//! Wind speed forecasting from buoy meteorological observations.
//!
//! The crate predicts wind speed one observation step (3 hours by default)
//! ahead from six inputs — air temperature, air pressure, wind speed, and
//! their one-step changes — using two models built from scratch:
//!
//! - a NARX-style feed-forward network (tanh hidden layer, linear output,
//!   tapped delay lines over the exogenous inputs and the measured target),
//! - a Sugeno-type ANFIS (Gaussian membership functions, grid-partition
//!   rule base, first-order consequents, hybrid least-squares + gradient
//!   training).
//!
//! Both models are trained and evaluated on identical chronological splits
//! and compared with MSE and regression R. The [`harness`] module drives the
//! full pipeline and writes a machine-readable comparison report; the
//! `buoycast` binary exposes it as a CLI.

pub mod anfis;
pub mod features;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod narx;
pub mod rng;
pub mod trace;

pub use anfis::{AnfisConfig, AnfisError, AnfisModel, GaussianMf};
pub use features::{
    FeatureRow, FeaturesError, Scaler, Split, SplitFractions, SupervisedDataset, FEATURE_COUNT,
    FEATURE_NAMES,
};
pub use harness::{ComparisonReport, DataSource, ExperimentConfig, HarnessError};
pub use ingest::{
    generate_synthetic, parse_csv, serialize_csv, validate_cadence, CsvSchema, IngestError,
    ObservationRecord, ObservationSeries, ParsedSeries, Regime, Segmentation,
};
pub use metrics::{mse, regression_r, EvalMetrics, MetricsError};
pub use narx::{NarxConfig, NarxError, NarxModel};
pub use trace::{TraceEpoch, TrainTrace};
