//! End-to-end experiment driver: ingest, features, both model trainings on
//! identical splits, evaluation, and the comparison report.
//!
//! Both models always see the same scaled dataset and the same split
//! assignment, and their reported metrics cover the same rows (the first
//! max(d_x, d_y) rows of every segment are excluded for both, since the
//! delay lines cannot predict them). The report records the split hash each
//! model was scored on so this can be audited after the fact.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

use crate::anfis::{AnfisConfig, AnfisError, AnfisModel};
use crate::features::{
    build_rows, DatasetRecipe, FeaturesError, Prediction, Split, SplitFractions, SupervisedDataset,
};
use crate::ingest::{
    generate_synthetic, parse_csv, serialize_csv, validate_cadence, CsvSchema, IngestError, Regime,
    DEFAULT_CADENCE_SECONDS,
};
use crate::metrics::{EvalMetrics, MetricsError};
use crate::narx::{NarxConfig, NarxError, NarxModel};
use crate::trace::TrainTrace;

pub const EXPERIMENT_FORMAT_VERSION: &str = "buoycast-experiment/1";
pub const REPORT_FORMAT_VERSION: &str = "buoycast-report/1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("features: {0}")]
    Features(#[from] FeaturesError),
    #[error("narx: {0}")]
    Narx(#[from] NarxError),
    #[error("anfis: {0}")]
    Anfis(#[from] AnfisError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("config: {0}")]
    Config(String),
    #[error("io ({path}): {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// True when the failure is numerical (divergence, underflow, degenerate
    /// variance) rather than a data or configuration problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HarnessError::Narx(NarxError::NonFiniteLoss { .. })
                | HarnessError::Anfis(
                    AnfisError::NonFiniteLoss { .. }
                        | AnfisError::AllRulesSilent { .. }
                        | AnfisError::Numerical(_),
                )
                | HarnessError::Metrics(MetricsError::ZeroVariance { .. })
        )
    }
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Where the observations come from. Exactly one source per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
    },
    Synthetic {
        seed: u64,
        count: usize,
        regime: Regime,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format_version: String,
    pub data: DataSource,
    pub cadence_seconds: i64,
    pub fractions: SplitFractions,
    pub shuffle_seed: Option<u64>,
    pub narx: NarxConfig,
    pub anfis: AnfisConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: EXPERIMENT_FORMAT_VERSION.to_string(),
            data: DataSource::Synthetic {
                seed: 7,
                count: 5000,
                regime: Regime::Mixed,
            },
            cadence_seconds: DEFAULT_CADENCE_SECONDS,
            fractions: SplitFractions::default(),
            shuffle_seed: None,
            narx: NarxConfig::default(),
            anfis: AnfisConfig::default(),
            output_dir: PathBuf::from("buoycast-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if config.format_version != EXPERIMENT_FORMAT_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported config format version '{}'",
                config.format_version
            )));
        }
        Ok(config)
    }

    /// Rows per segment the delay lines consume before the first window.
    pub fn lag_depth(&self) -> usize {
        self.narx
            .exogenous_delay
            .max(self.narx.autoregressive_delay)
    }

    /// Shortest cadence segment worth keeping: enough records for one
    /// delta, one target, and a full delay window.
    pub fn min_segment_len(&self) -> usize {
        self.lag_depth() + 3
    }

    pub fn recipe(&self) -> DatasetRecipe {
        DatasetRecipe {
            cadence_seconds: self.cadence_seconds,
            min_segment_len: self.min_segment_len(),
            fractions: self.fractions,
            shuffle_seed: self.shuffle_seed,
            eval_lag_depth: self.lag_depth(),
        }
    }
}

/// Row and segment accounting from ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub segments: usize,
    pub segments_discarded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub ingest: IngestStats,
    pub feature_rows: usize,
    pub split_counts: SplitCounts,
    /// FNV-1a hash of the split assignment, hex.
    pub split_hash: String,
}

/// Per-model result: metrics on the shared evaluation rows plus trace info.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub train: EvalMetrics,
    pub validation: EvalMetrics,
    pub test: EvalMetrics,
    /// Hash of the split assignment this model was scored on; equal for
    /// both models by construction.
    pub split_hash: String,
    /// Per-epoch training record (also written as trace_{model}.csv).
    pub trace: TrainTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsSection {
    pub narx: ModelSection,
    pub anfis: ModelSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub narx_train_seconds: f64,
    pub anfis_train_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub models: ModelsSection,
    /// Wall-clock timings; excluded from determinism comparisons.
    pub timing: TimingSection,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// The plain-text comparison table written next to the JSON report.
pub fn render_report_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str("wind speed forecast comparison (one cadence step ahead)\n");
    out.push_str("========================================================\n");
    out.push_str(&format!(
        "{:<6} {:<11} {:>6} {:>12} {:>8}\n",
        "model", "split", "n", "mse", "r"
    ));
    out.push_str("--------------------------------------------------------\n");
    for (name, section) in [
        ("narx", &report.models.narx),
        ("anfis", &report.models.anfis),
    ] {
        for (split, metrics) in [
            ("train", &section.train),
            ("validation", &section.validation),
            ("test", &section.test),
        ] {
            out.push_str(&format!(
                "{:<6} {:<11} {:>6} {:>12.5} {:>8.3}\n",
                name, split, metrics.n, metrics.mse, metrics.r
            ));
        }
    }
    out.push_str("--------------------------------------------------------\n");
    out.push_str("both models scored on identical split assignments\n");
    out.push_str(&format!("split hash: {}\n", report.dataset.split_hash));
    out
}

/// Load or generate the observation series for a data source.
pub fn load_series(
    data: &DataSource,
    cadence_seconds: i64,
) -> Result<(crate::ingest::ObservationSeries, IngestStats), HarnessError> {
    match data {
        DataSource::Csv { path } => {
            let text = read_file(path)?;
            let parsed = parse_csv(&text, &CsvSchema::default(), cadence_seconds)?;
            Ok((
                parsed.series,
                IngestStats {
                    rows_read: parsed.rows_read,
                    rows_dropped: parsed.rows_dropped,
                    segments: 0,
                    segments_discarded: 0,
                },
            ))
        }
        DataSource::Synthetic {
            seed,
            count,
            regime,
        } => {
            let series = generate_synthetic(*seed, *count, *regime)?;
            Ok((
                series,
                IngestStats {
                    rows_read: *count,
                    rows_dropped: 0,
                    segments: 0,
                    segments_discarded: 0,
                },
            ))
        }
    }
}

/// Rebuild the supervised dataset a recipe describes from a raw series.
pub fn build_dataset(
    series: &crate::ingest::ObservationSeries,
    recipe: &DatasetRecipe,
) -> Result<(SupervisedDataset, IngestStats), HarnessError> {
    let segmentation = validate_cadence(series, recipe.min_segment_len);
    let rows = build_rows(&segmentation.segments);
    let dataset = SupervisedDataset::build(rows, recipe.fractions, recipe.shuffle_seed)?;
    Ok((
        dataset,
        IngestStats {
            rows_read: 0,
            rows_dropped: 0,
            segments: segmentation.segments.len(),
            segments_discarded: segmentation.segments_discarded,
        },
    ))
}

fn section_from_eval(
    eval: Vec<(Split, EvalMetrics)>,
    trace: &TrainTrace,
    split_hash: String,
) -> Result<ModelSection, HarnessError> {
    let find = |split: Split| {
        eval.iter()
            .find(|(s, _)| *s == split)
            .map(|(_, m)| *m)
            .ok_or_else(|| {
                HarnessError::Config(format!("{} split empty after lag filtering", split.name()))
            })
    };
    Ok(ModelSection {
        train: find(Split::Train)?,
        validation: find(Split::Validation)?,
        test: find(Split::Test)?,
        split_hash,
        trace: trace.clone(),
    })
}

fn scatter_csv(predictions: &[Prediction], split: Split, model: &str) -> String {
    let mut out = String::from("expected_ms,predicted_ms,split,model\n");
    for p in predictions.iter().filter(|p| p.split == split) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.expected_ms,
            p.predicted_ms,
            split.name(),
            model
        ));
    }
    out
}

/// Everything a finished experiment produced, before it is written out.
pub struct ExperimentArtifacts {
    pub report: ComparisonReport,
    pub narx_model: NarxModel,
    pub anfis_model: AnfisModel,
    pub narx_trace: TrainTrace,
    pub anfis_trace: TrainTrace,
}

/// Run the full pipeline: ingest, features, split, train both models
/// concurrently, evaluate on identical rows, and write every artifact into
/// the config's output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport, HarnessError> {
    let artifacts = run_experiment_in_memory(config)?;
    write_artifacts(config, &artifacts)?;
    Ok(artifacts.report)
}

/// The pipeline without any filesystem output.
pub fn run_experiment_in_memory(
    config: &ExperimentConfig,
) -> Result<ExperimentArtifacts, HarnessError> {
    let started = Instant::now();
    if let DataSource::Csv { path } = &config.data {
        if !path.exists() {
            return Err(HarnessError::Config(format!(
                "input file '{}' does not exist",
                path.display()
            )));
        }
    }

    let (series, mut stats) = load_series(&config.data, config.cadence_seconds)?;
    let recipe = config.recipe();
    let (dataset, seg_stats) = build_dataset(&series, &recipe)?;
    stats.segments = seg_stats.segments;
    stats.segments_discarded = seg_stats.segments_discarded;

    // The two trainings are independent; run them on separate threads with
    // the shared immutable dataset.
    let narx_init = NarxModel::init(config.narx)?;
    let anfis_init = AnfisModel::init(config.anfis, &dataset)?;
    let (narx_result, anfis_result) = std::thread::scope(|scope| {
        let narx_handle = scope.spawn(|| {
            let t = Instant::now();
            narx_init
                .train(&dataset)
                .map(|r| (r, t.elapsed().as_secs_f64()))
        });
        let anfis_handle = scope.spawn(|| {
            let t = Instant::now();
            anfis_init
                .train(&dataset)
                .map(|r| (r, t.elapsed().as_secs_f64()))
        });
        (narx_handle.join(), anfis_handle.join())
    });
    let ((narx_model, narx_trace), narx_seconds) =
        narx_result.expect("narx training thread panicked")?;
    let ((anfis_model, anfis_trace), anfis_seconds) =
        anfis_result.expect("anfis training thread panicked")?;
    let mut narx_model = narx_model;
    let mut anfis_model = anfis_model;
    narx_model.set_dataset_recipe(recipe);
    anfis_model.set_dataset_recipe(recipe);

    let split_hash = format!("{:016x}", dataset.split_assignment_hash());
    let lag_depth = recipe.eval_lag_depth;
    let narx_eval = narx_model.evaluate(dataset.rows(), dataset.labels())?;
    let anfis_eval = anfis_model.evaluate(dataset.rows(), dataset.labels(), lag_depth)?;

    let (train_n, val_n, test_n) = dataset.split_counts();
    let report = ComparisonReport {
        format_version: REPORT_FORMAT_VERSION.to_string(),
        config: config.clone(),
        dataset: DatasetSummary {
            ingest: stats,
            feature_rows: dataset.len(),
            split_counts: SplitCounts {
                train: train_n,
                validation: val_n,
                test: test_n,
            },
            split_hash: split_hash.clone(),
        },
        models: ModelsSection {
            narx: section_from_eval(narx_eval, &narx_trace, split_hash.clone())?,
            anfis: section_from_eval(anfis_eval, &anfis_trace, split_hash)?,
        },
        timing: TimingSection {
            narx_train_seconds: narx_seconds,
            anfis_train_seconds: anfis_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
    };

    Ok(ExperimentArtifacts {
        report,
        narx_model,
        anfis_model,
        narx_trace,
        anfis_trace,
    })
}

/// Write report, models, traces, and scatter data under the output dir.
pub fn write_artifacts(
    config: &ExperimentConfig,
    artifacts: &ExperimentArtifacts,
) -> Result<(), HarnessError> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;

    write_file(&dir.join("report.json"), &artifacts.report.to_json())?;
    write_file(
        &dir.join("report.txt"),
        &render_report_text(&artifacts.report),
    )?;
    write_file(
        &dir.join("narx_model.json"),
        &artifacts.narx_model.to_json(),
    )?;
    write_file(
        &dir.join("anfis_model.json"),
        &artifacts.anfis_model.to_json(),
    )?;
    write_file(&dir.join("trace_narx.csv"), &artifacts.narx_trace.to_csv())?;
    write_file(
        &dir.join("trace_anfis.csv"),
        &artifacts.anfis_trace.to_csv(),
    )?;

    // Synthetic runs persist their data so `evaluate`/`predict` can rebuild
    // the exact dataset from artifacts alone.
    if matches!(config.data, DataSource::Synthetic { .. }) {
        let (series, _) = load_series(&config.data, config.cadence_seconds)?;
        write_file(&dir.join("synthetic_data.csv"), &serialize_csv(&series))?;
    }

    let recipe = config.recipe();
    let (dataset, _) = {
        let (series, _) = load_series(&config.data, config.cadence_seconds)?;
        build_dataset(&series, &recipe)?
    };
    let narx_predictions = artifacts
        .narx_model
        .predict_rows(dataset.rows(), dataset.labels())?;
    let anfis_predictions = artifacts.anfis_model.predict_rows(
        dataset.rows(),
        dataset.labels(),
        recipe.eval_lag_depth,
    )?;
    for split in Split::ALL {
        write_file(
            &dir.join(format!("scatter_narx_{}.csv", split.name())),
            &scatter_csv(&narx_predictions, split, "narx"),
        )?;
        write_file(
            &dir.join(format!("scatter_anfis_{}.csv", split.name())),
            &scatter_csv(&anfis_predictions, split, "anfis"),
        )?;
    }
    Ok(())
}
