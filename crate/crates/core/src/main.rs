//! Command-line driver: ingest, synth, train, evaluate, predict, report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numerical failure. Diagnostics go to standard error; data goes to
//! files or standard output.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use buoycast::anfis::{AnfisConfig, AnfisModel, ANFIS_FORMAT_VERSION};
use buoycast::features::{DatasetRecipe, Split, SplitFractions, SupervisedDataset};
use buoycast::harness::{self, build_dataset, render_report_text, ExperimentConfig, HarnessError};
use buoycast::ingest::{
    format_timestamp, generate_synthetic, parse_csv, serialize_csv, validate_cadence, CsvSchema,
    Regime, DEFAULT_CADENCE_SECONDS,
};
use buoycast::metrics::EvalMetrics;
use buoycast::narx::{NarxConfig, NarxModel, NARX_FORMAT_VERSION};

#[derive(Parser)]
#[command(
    name = "buoycast",
    version,
    about = "3-hour-ahead wind speed forecasting from buoy observations (NARX vs ANFIS)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelChoice {
    Narx,
    Anfis,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Calm,
    Stormy,
    Mixed,
}

impl From<RegimeArg> for Regime {
    fn from(value: RegimeArg) -> Self {
        match value {
            RegimeArg::Calm => Regime::Calm,
            RegimeArg::Stormy => Regime::Stormy,
            RegimeArg::Mixed => Regime::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(value: SplitArg) -> Self {
        match value {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

fn parse_fractions(text: &str) -> Result<SplitFractions, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("fractions must be three numbers: {e}"))?;
    if parts.len() != 3 {
        return Err("fractions must be train,validation,test".into());
    }
    Ok(SplitFractions {
        train: parts[0],
        validation: parts[1],
        test: parts[2],
    })
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CSV, validate cadence, and print the ingest summary JSON.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CADENCE_SECONDS)]
        cadence: i64,
        #[arg(long, default_value_t = 5)]
        min_segment_len: usize,
        /// Also write each validated segment as segment_NNN.csv here.
        #[arg(long)]
        segments_dir: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic observation CSV.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = RegimeArg::Mixed)]
        regime: RegimeArg,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one or both models on a CSV and write model + trace files.
    Train {
        #[arg(long, value_enum)]
        model: ModelChoice,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CADENCE_SECONDS)]
        cadence: i64,
        #[arg(long, value_parser = parse_fractions, default_value = "0.7,0.15,0.15")]
        fractions: SplitFractions,
        /// Assign split labels by seeded shuffle instead of chronologically.
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        hidden_neurons: usize,
        #[arg(long, default_value_t = 2)]
        exogenous_delay: usize,
        #[arg(long, default_value_t = 2)]
        autoregressive_delay: usize,
        #[arg(long, default_value_t = 2000)]
        narx_epochs: usize,
        #[arg(long, default_value_t = 1)]
        rng_seed: u64,
        #[arg(long, default_value_t = 3)]
        mfs_per_input: usize,
        #[arg(long, default_value_t = 5)]
        anfis_epochs: usize,
    },
    /// Recompute per-split metrics for a saved model on a CSV.
    Evaluate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Restrict output to one split.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Override the split fractions stored in the model file.
        #[arg(long, value_parser = parse_fractions)]
        fractions: Option<SplitFractions>,
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
    /// Predict every predictable row of a CSV with a saved model.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment described by a config JSON file.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

type AppError = HarnessError;

fn read_file(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), AppError> {
    match path {
        Some(path) => std::fs::write(path, contents).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

enum AnyModel {
    Narx(NarxModel),
    Anfis(AnfisModel),
}

impl AnyModel {
    fn load(path: &Path) -> Result<Self, AppError> {
        let text = read_file(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("model file: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_str()) {
            Some(NARX_FORMAT_VERSION) => Ok(AnyModel::Narx(NarxModel::from_json(&text)?)),
            Some(ANFIS_FORMAT_VERSION) => Ok(AnyModel::Anfis(AnfisModel::from_json(&text)?)),
            other => Err(HarnessError::Config(format!(
                "unrecognized model format version {other:?}"
            ))),
        }
    }

    fn recipe(&self) -> DatasetRecipe {
        match self {
            AnyModel::Narx(m) => m.dataset_recipe().copied().unwrap_or_default(),
            AnyModel::Anfis(m) => m.dataset_recipe().copied().unwrap_or_default(),
        }
    }
}

fn dataset_for_model(input: &Path, recipe: &DatasetRecipe) -> Result<SupervisedDataset, AppError> {
    let text = read_file(input)?;
    let parsed = parse_csv(&text, &CsvSchema::default(), recipe.cadence_seconds)?;
    let (dataset, _) = build_dataset(&parsed.series, recipe)?;
    Ok(dataset)
}

fn metrics_json(sections: &[(Split, EvalMetrics)], only: Option<Split>) -> String {
    let mut map = serde_json::Map::new();
    for (split, metrics) in sections {
        if only.is_some_and(|s| s != *split) {
            continue;
        }
        map.insert(
            split.name().to_string(),
            serde_json::to_value(metrics).expect("metrics serialize"),
        );
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("json")
}

fn cmd_ingest(
    input: &Path,
    cadence: i64,
    min_segment_len: usize,
    segments_dir: Option<&Path>,
) -> Result<(), AppError> {
    let text = read_file(input)?;
    let parsed = parse_csv(&text, &CsvSchema::default(), cadence)?;
    let segmentation = validate_cadence(&parsed.series, min_segment_len);
    if let Some(dir) = segments_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (i, segment) in segmentation.segments.iter().enumerate() {
            write_output(
                Some(&dir.join(format!("segment_{i:03}.csv"))),
                &serialize_csv(segment),
            )?;
        }
    }
    let summary = serde_json::json!({
        "rows_read": parsed.rows_read,
        "rows_dropped": parsed.rows_dropped,
        "segments": segmentation.segments.len(),
        "segments_discarded": segmentation.segments_discarded,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn cmd_synth(seed: u64, n: usize, regime: Regime, out: Option<&Path>) -> Result<(), AppError> {
    let series = generate_synthetic(seed, n, regime)?;
    write_output(out, &serialize_csv(&series))
}

fn cmd_train(
    model: ModelChoice,
    input: &Path,
    recipe: DatasetRecipe,
    out_dir: &Path,
    narx_config: NarxConfig,
    anfis_config: AnfisConfig,
) -> Result<(), AppError> {
    let dataset = dataset_for_model(input, &recipe)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    if matches!(model, ModelChoice::Narx | ModelChoice::Both) {
        let init = NarxModel::init(narx_config)?;
        let (mut trained, trace) = init.train(&dataset)?;
        trained.set_dataset_recipe(recipe);
        write_output(Some(&out_dir.join("narx_model.json")), &trained.to_json())?;
        write_output(Some(&out_dir.join("trace_narx.csv")), &trace.to_csv())?;
        eprintln!(
            "narx: {} epochs, best validation mse {:.6}",
            trace.epochs.len() - 1,
            trace.best_validation_mse()
        );
    }
    if matches!(model, ModelChoice::Anfis | ModelChoice::Both) {
        let init = AnfisModel::init(anfis_config, &dataset)?;
        let (mut trained, trace) = init.train(&dataset)?;
        trained.set_dataset_recipe(recipe);
        write_output(Some(&out_dir.join("anfis_model.json")), &trained.to_json())?;
        write_output(Some(&out_dir.join("trace_anfis.csv")), &trace.to_csv())?;
        eprintln!(
            "anfis: {} epochs, best validation mse {:.6}",
            trace.epochs.len() - 1,
            trace.best_validation_mse()
        );
    }
    Ok(())
}

fn cmd_evaluate(
    model_file: &Path,
    input: &Path,
    split: Option<Split>,
    fractions: Option<SplitFractions>,
    shuffle_seed: Option<u64>,
) -> Result<(), AppError> {
    let model = AnyModel::load(model_file)?;
    let mut recipe = model.recipe();
    if let Some(fractions) = fractions {
        recipe.fractions = fractions;
    }
    if shuffle_seed.is_some() {
        recipe.shuffle_seed = shuffle_seed;
    }
    let dataset = dataset_for_model(input, &recipe)?;
    let sections = match &model {
        AnyModel::Narx(m) => m.evaluate(dataset.rows(), dataset.labels())?,
        AnyModel::Anfis(m) => {
            m.evaluate(dataset.rows(), dataset.labels(), recipe.eval_lag_depth)?
        }
    };
    println!("{}", metrics_json(&sections, split));
    Ok(())
}

fn cmd_predict(model_file: &Path, input: &Path, out: Option<&Path>) -> Result<(), AppError> {
    let model = AnyModel::load(model_file)?;
    let recipe = model.recipe();
    let dataset = dataset_for_model(input, &recipe)?;
    let predictions = match &model {
        AnyModel::Narx(m) => m.predict_rows(dataset.rows(), dataset.labels())?,
        // Prediction covers every feature row; only `evaluate` applies the
        // lag filter that aligns the two models' metrics.
        AnyModel::Anfis(m) => m.predict_rows(dataset.rows(), dataset.labels(), 0)?,
    };
    let mut csv = String::from("timestamp,split,expected_ms,predicted_ms\n");
    for p in &predictions {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            format_timestamp(dataset.rows()[p.row_index].timestamp),
            p.split.name(),
            p.expected_ms,
            p.predicted_ms
        ));
    }
    write_output(out, &csv)
}

fn cmd_report(config_path: &Path) -> Result<(), AppError> {
    let text = read_file(config_path)?;
    let config = ExperimentConfig::from_json(&text)?;
    let report = harness::run_experiment(&config)?;
    print!("{}", render_report_text(&report));
    eprintln!(
        "artifacts written to {} ({:.1}s total)",
        config.output_dir.display(),
        report.timing.total_seconds
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Ingest {
            input,
            cadence,
            min_segment_len,
            segments_dir,
        } => cmd_ingest(&input, cadence, min_segment_len, segments_dir.as_deref()),
        Command::Synth {
            seed,
            n,
            regime,
            out,
        } => cmd_synth(seed, n, regime.into(), out.as_deref()),
        Command::Train {
            model,
            input,
            cadence,
            fractions,
            shuffle_seed,
            out_dir,
            hidden_neurons,
            exogenous_delay,
            autoregressive_delay,
            narx_epochs,
            rng_seed,
            mfs_per_input,
            anfis_epochs,
        } => {
            let narx_config = NarxConfig {
                hidden_neurons,
                exogenous_delay,
                autoregressive_delay,
                max_epochs: narx_epochs,
                rng_seed,
                ..NarxConfig::default()
            };
            let anfis_config = AnfisConfig {
                mfs_per_input,
                max_epochs: anfis_epochs,
                ..AnfisConfig::default()
            };
            let lag_depth = exogenous_delay.max(autoregressive_delay);
            let recipe = DatasetRecipe {
                cadence_seconds: cadence,
                min_segment_len: lag_depth + 3,
                fractions,
                shuffle_seed,
                eval_lag_depth: lag_depth,
            };
            cmd_train(model, &input, recipe, &out_dir, narx_config, anfis_config)
        }
        Command::Evaluate {
            model_file,
            input,
            split,
            fractions,
            shuffle_seed,
        } => cmd_evaluate(
            &model_file,
            &input,
            split.map(Split::from),
            fractions,
            shuffle_seed,
        ),
        Command::Predict {
            model_file,
            input,
            out,
        } => cmd_predict(&model_file, &input, out.as_deref()),
        Command::Report { config } => cmd_report(&config),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(if err.is_numerical() { 3 } else { 2 });
    }
}
