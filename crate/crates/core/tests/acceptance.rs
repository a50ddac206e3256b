//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured evidence. Run with
//! `cargo test --test acceptance -- --nocapture`.

use std::time::Instant;

use buoycast::anfis::{AnfisConfig, AnfisModel, TrainingBatch};
use buoycast::features::{SplitFractions, SupervisedDataset};
use buoycast::harness::{
    render_report_text, ComparisonReport, DataSource, DatasetSummary, ExperimentConfig,
    IngestStats, ModelSection, ModelsSection, SplitCounts, TimingSection, REPORT_FORMAT_VERSION,
};
use buoycast::ingest::{generate_synthetic, parse_csv, serialize_csv, CsvSchema, Regime};
use buoycast::metrics::{mse, regression_r, EvalMetrics};
use buoycast::narx::{NarxConfig, NarxModel, WindowSet};
use buoycast::rng::SplitMix64;

/// Criterion: the MSE and regression-R implementations agree with
/// independent brute-force reimplementations on 1000 seeded random pairs
/// within 1e-12 relative, and the hand-derived examples hold exactly.
#[test]
fn acceptance_metric_oracle_equivalence() {
    let started = Instant::now();

    fn oracle_mse(e: &[f64], o: &[f64]) -> f64 {
        let squares: Vec<f64> = e.iter().zip(o).map(|(a, b)| (a - b).powi(2)).collect();
        squares.iter().sum::<f64>() / squares.len() as f64
    }
    fn oracle_r(e: &[f64], o: &[f64]) -> f64 {
        let n = e.len() as f64;
        let me = e.iter().sum::<f64>() / n;
        let mo = o.iter().sum::<f64>() / n;
        let cov: f64 = e.iter().zip(o).map(|(a, b)| (a - me) * (b - mo)).sum();
        let ve: f64 = e.iter().map(|a| (a - me) * (a - me)).sum();
        let vo: f64 = o.iter().map(|b| (b - mo) * (b - mo)).sum();
        cov / (ve.sqrt() * vo.sqrt())
    }

    let mut rng = SplitMix64::new(0xACCE97);
    for case in 0..1000 {
        let n = 2 + rng.next_index(199);
        let slope = rng.uniform(-3.0, 3.0);
        let noise = rng.uniform(0.1, 2.0);
        let mut e = Vec::with_capacity(n);
        let mut o = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.uniform(-10.0, 10.0);
            e.push(x);
            o.push(slope * x + noise * rng.centered());
        }
        e[0] += 1.0;
        o[0] += 1.0;

        let got = mse(&e, &o).unwrap();
        let want = oracle_mse(&e, &o);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "case {case}: mse {got} vs oracle {want}"
        );
        let got = regression_r(&e, &o).unwrap();
        let want = oracle_r(&e, &o);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "case {case}: r {got} vs oracle {want}"
        );
    }

    // hand-derived examples, exact
    assert_eq!(mse(&[3.0, 5.0, 7.0], &[2.0, 5.0, 9.0]).unwrap(), 5.0 / 3.0);
    assert_eq!(
        regression_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
        0.8
    );
    assert_eq!(mse(&[4.0, 2.5, -1.0], &[4.0, 2.5, -1.0]).unwrap(), 0.0);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:.2?}");
    println!("PASS: metric oracle equivalence (1000 pairs, exact hand examples, {elapsed:.2?})");
}

fn flatten_narx_gradient(g: buoycast::narx::NarxGradient) -> Vec<f64> {
    let mut flat = g.w_hidden;
    flat.extend_from_slice(&g.b_hidden);
    flat.extend_from_slice(&g.w_output);
    flat.push(g.b_output);
    flat
}

/// Criterion: on at least 20 seeded small configurations every analytic
/// NARX gradient component matches central finite differences within 1e-5
/// relative (denominator max(|a|, |f|, 1e-8)).
#[test]
fn acceptance_narx_gradient_check() {
    let started = Instant::now();
    let mut configurations = 0;
    let mut components = 0usize;
    for seed in 0..7u64 {
        for (h, dy) in [(1usize, 0usize), (2, 1), (4, 2), (5, 2)] {
            let config = NarxConfig {
                hidden_neurons: h,
                exogenous_delay: 0,
                autoregressive_delay: dy,
                rng_seed: 7000 + seed * 31 + h as u64,
                ..NarxConfig::default()
            };
            let width = config.input_width();
            assert!(h <= 5 && width <= 8);
            let model = NarxModel::init(config).unwrap();

            let mut rng = SplitMix64::new(9000 + seed * 17 + dy as u64);
            let pairs: Vec<(Vec<f64>, f64)> = (0..6)
                .map(|_| {
                    let window: Vec<f64> = (0..width).map(|_| rng.centered()).collect();
                    (window, rng.centered())
                })
                .collect();
            let set = WindowSet::from_pairs(&pairs, width);
            let indices: Vec<usize> = (0..set.len()).collect();

            let analytic = flatten_narx_gradient(model.gradient(&set, &indices).unwrap());
            let params = model.flatten_parameters();
            let eps = 1e-6;
            for k in 0..params.len() {
                let mut perturbed = params.clone();
                perturbed[k] = params[k] + eps;
                let mut plus = model.clone();
                plus.assign_parameters(&perturbed).unwrap();
                perturbed[k] = params[k] - eps;
                let mut minus = model.clone();
                minus.assign_parameters(&perturbed).unwrap();
                let numeric = (plus.batch_mse_scaled(&set, &indices).unwrap()
                    - minus.batch_mse_scaled(&set, &indices).unwrap())
                    / (2.0 * eps);
                let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic[k] - numeric) / denom).abs() < 1e-5,
                    "component {k}: analytic {} vs numeric {numeric}",
                    analytic[k]
                );
                components += 1;
            }
            configurations += 1;
        }
    }
    assert!(configurations >= 20, "only {configurations} configurations");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.2?}");
    println!(
        "PASS: narx gradient check ({configurations} configurations, {components} components, {elapsed:.2?})"
    );
}

fn tiny_anfis(seed: u64) -> (AnfisModel, TrainingBatch) {
    let mut rng = SplitMix64::new(seed);
    let rows = 200;
    let mut inputs = Vec::with_capacity(rows * 2);
    let mut targets = Vec::with_capacity(rows);
    for _ in 0..rows {
        inputs.push(rng.centered());
        inputs.push(rng.centered());
        targets.push(rng.centered());
    }
    let batch = TrainingBatch::new(2, inputs, targets);
    let config = AnfisConfig {
        inputs: 2,
        mfs_per_input: 2,
        ..AnfisConfig::default()
    };
    let mut model = AnfisModel::init_from_batch(config, &batch).unwrap();
    let consequents: Vec<f64> = (0..config.consequent_len())
        .map(|_| rng.centered())
        .collect();
    model.set_consequents(consequents);
    (model, batch)
}

/// Criterion: the analytic premise gradient on (n=2, m=2) models matches
/// central finite differences within 1e-5 relative.
#[test]
fn acceptance_anfis_premise_gradient_check() {
    let started = Instant::now();
    let mut configurations = 0;
    for seed in 0..20u64 {
        let (model, _) = tiny_anfis(4000 + seed);
        let mut rng = SplitMix64::new(6000 + seed);
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..10 {
            inputs.push(rng.centered());
            inputs.push(rng.centered());
            targets.push(rng.centered());
        }
        let batch = TrainingBatch::new(2, inputs, targets);

        let analytic = {
            let g = model.premise_gradient(&batch).unwrap();
            let mut flat = g.d_center;
            flat.extend(g.d_sigma);
            flat
        };
        let params = model.flatten_premise();
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut perturbed = params.clone();
            perturbed[k] = params[k] + eps;
            let mut plus = model.clone();
            plus.assign_premise(&perturbed).unwrap();
            perturbed[k] = params[k] - eps;
            let mut minus = model.clone();
            minus.assign_premise(&perturbed).unwrap();
            let numeric = (plus.batch_mse_scaled(&batch).unwrap()
                - minus.batch_mse_scaled(&batch).unwrap())
                / (2.0 * eps);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((analytic[k] - numeric) / denom).abs() < 1e-5,
                "seed {seed} component {k}: analytic {} vs numeric {numeric}",
                analytic[k]
            );
        }
        configurations += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.2?}");
    println!("PASS: anfis premise gradient check ({configurations} models, {elapsed:.2?})");
}

/// Criterion: the consequent least-squares solve recovers known consequents
/// to training MSE < 1e-10 and fits a globally linear target to MSE < 1e-8
/// in one pass.
#[test]
fn acceptance_anfis_lse_optimality_and_exactness() {
    let started = Instant::now();

    // known-consequent recovery
    let (truth, inputs) = tiny_anfis(777);
    let mut gen_inputs = Vec::new();
    let mut gen_targets = Vec::new();
    for i in 0..inputs.len() {
        let x = inputs.input(i);
        gen_inputs.extend_from_slice(x);
        gen_targets.push(truth.forward(x).unwrap());
    }
    let generated = TrainingBatch::new(2, gen_inputs, gen_targets);
    let mut model = truth.clone();
    model.set_consequents(vec![0.0; truth.consequents().len()]);
    model.solve_consequents(&generated).unwrap();
    let recovery_mse = model.batch_mse_scaled(&generated).unwrap();
    assert!(recovery_mse < 1e-10, "recovery MSE {recovery_mse}");

    // globally linear target in one pass
    let mut rng = SplitMix64::new(888);
    let mut lin_inputs = Vec::new();
    let mut lin_targets = Vec::new();
    for _ in 0..200 {
        let a = rng.centered();
        let b = rng.centered();
        lin_inputs.push(a);
        lin_inputs.push(b);
        lin_targets.push(3.0 * a - 2.0 * b + 1.0);
    }
    let linear = TrainingBatch::new(2, lin_inputs, lin_targets);
    let config = AnfisConfig {
        inputs: 2,
        mfs_per_input: 2,
        ..AnfisConfig::default()
    };
    let mut model = AnfisModel::init_from_batch(config, &linear).unwrap();
    model.solve_consequents(&linear).unwrap();
    let linear_mse = model.batch_mse_scaled(&linear).unwrap();
    assert!(linear_mse < 1e-8, "linear-target MSE {linear_mse}");

    // optimality: single-parameter perturbations never decrease SSE
    let base_sse = recovery_mse * generated.len() as f64;
    for k in 0..model.consequents().len() {
        for delta in [1e-4, -1e-4] {
            let mut perturbed = model.clone();
            let mut consequents = model.consequents().to_vec();
            consequents[k] += delta;
            perturbed.set_consequents(consequents);
            let sse = perturbed.batch_mse_scaled(&generated).unwrap() * generated.len() as f64;
            assert!(
                sse >= base_sse - 1e-9 * base_sse.max(1.0),
                "consequent {k} perturbation {delta} decreased SSE"
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:.2?}");
    println!(
        "PASS: anfis lse optimality and exactness (recovery {recovery_mse:.2e}, linear {linear_mse:.2e}, {elapsed:.2?})"
    );
}

/// Criterion: normalized firing strengths sum to 1 within 1e-12 and the
/// output stays inside the rule-output envelope on 10^4 random inputs
/// against a random 729-rule model.
#[test]
fn acceptance_firing_strength_normalization_and_convexity() {
    let started = Instant::now();
    let config = AnfisConfig::default();
    assert_eq!(config.rule_count(), 729);

    let mut rng = SplitMix64::new(0xF1B1);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..64 {
        for _ in 0..6 {
            inputs.push(rng.centered());
        }
        targets.push(rng.centered());
    }
    let batch = TrainingBatch::new(6, inputs, targets);
    let mut model = AnfisModel::init_from_batch(config, &batch).unwrap();
    let consequents: Vec<f64> = (0..config.consequent_len())
        .map(|_| 2.0 * rng.centered())
        .collect();
    model.set_consequents(consequents);

    for case in 0..10_000 {
        let x: Vec<f64> = (0..6).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let (_, wbar) = model.firing_strengths(&x).unwrap();
        let total: f64 = wbar.iter().sum();
        assert!(
            (total - 1.0).abs() <= 1e-12,
            "case {case}: normalized sum {total}"
        );

        let y = model.forward(&x).unwrap();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for rule in 0..729 {
            let block = &model.consequents()[rule * 7..rule * 7 + 7];
            let mut f = block[6];
            for (p, xi) in block[..6].iter().zip(&x) {
                f += p * xi;
            }
            min = min.min(f);
            max = max.max(f);
        }
        let slack = 1e-12 * y.abs().max(max.abs()).max(min.abs()).max(1.0);
        assert!(
            y >= min - slack && y <= max + slack,
            "case {case}: output {y} outside [{min}, {max}]"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.2?}");
    println!("PASS: firing strength normalization and convexity (10000 inputs, {elapsed:.2?})");
}

/// Criterion: on the synthetic dataset (seed 7, n 5000, mixed) with default
/// configs and identical splits, ANFIS beats NARX on test MSE and both
/// reach test R > 0.8, inside a five-minute budget.
#[test]
fn acceptance_qualitative_ranking_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        data: DataSource::Synthetic {
            seed: 7,
            count: 5000,
            regime: Regime::Mixed,
        },
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let started = Instant::now();
    let report = buoycast::harness::run_experiment(&config).unwrap();
    let elapsed = started.elapsed();

    // split identity: equal per-split counts and matching assignment hashes
    assert_eq!(
        report.models.narx.split_hash,
        report.models.anfis.split_hash
    );
    for (narx_n, anfis_n) in [
        (report.models.narx.train.n, report.models.anfis.train.n),
        (
            report.models.narx.validation.n,
            report.models.anfis.validation.n,
        ),
        (report.models.narx.test.n, report.models.anfis.test.n),
    ] {
        assert_eq!(narx_n, anfis_n, "per-split row counts differ across models");
    }

    let narx_test = report.models.narx.test;
    let anfis_test = report.models.anfis.test;
    assert!(
        anfis_test.mse < narx_test.mse,
        "anfis test MSE {} not below narx {}",
        anfis_test.mse,
        narx_test.mse
    );
    assert!(narx_test.r > 0.8, "narx test R {} too low", narx_test.r);
    assert!(anfis_test.r > 0.8, "anfis test R {} too low", anfis_test.r);
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:.2?}");
    println!(
        "PASS: qualitative ranking (anfis test mse {:.4} < narx {:.4}; R {:.3}/{:.3}; {elapsed:.1?})",
        anfis_test.mse, narx_test.mse, anfis_test.r, narx_test.r
    );
}

/// The harness must also complete end to end when the observations come
/// from a CSV file rather than the built-in generator; no numeric target
/// is asserted for file data.
#[test]
fn acceptance_csv_input_completes() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("observations.csv");
    let series = generate_synthetic(19, 500, Regime::Calm).unwrap();
    std::fs::write(&csv_path, serialize_csv(&series)).unwrap();

    let config = ExperimentConfig {
        data: DataSource::Csv { path: csv_path },
        narx: NarxConfig {
            hidden_neurons: 8,
            max_epochs: 40,
            ..NarxConfig::default()
        },
        anfis: AnfisConfig {
            mfs_per_input: 2,
            max_epochs: 2,
            ..AnfisConfig::default()
        },
        output_dir: dir.path().join("out"),
        ..ExperimentConfig::default()
    };
    let report = buoycast::harness::run_experiment(&config).unwrap();
    assert!(report.models.narx.test.n > 0);
    assert!(report.models.anfis.test.n > 0);
    println!("PASS: csv-input harness run completes and reports both models");
}

fn strip_timing(report_json: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(report_json).unwrap();
    value.as_object_mut().unwrap().remove("timing");
    serde_json::to_string(&value).unwrap()
}

/// Criterion: two identical full-pipeline runs produce byte-identical
/// reports (timing excluded) and byte-identical model files.
#[test]
fn acceptance_determinism_of_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        data: DataSource::Synthetic {
            seed: 23,
            count: 600,
            regime: Regime::Stormy,
        },
        narx: NarxConfig {
            hidden_neurons: 10,
            max_epochs: 80,
            ..NarxConfig::default()
        },
        anfis: AnfisConfig {
            mfs_per_input: 2,
            max_epochs: 2,
            ..AnfisConfig::default()
        },
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };

    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    buoycast::harness::run_experiment(&config).unwrap();
    let first_report = read("report.json");
    let first_narx = read("narx_model.json");
    let first_anfis = read("anfis_model.json");
    let first_text = read("report.txt");

    buoycast::harness::run_experiment(&config).unwrap();
    assert_eq!(
        strip_timing(&first_report),
        strip_timing(&read("report.json"))
    );
    assert_eq!(first_narx, read("narx_model.json"));
    assert_eq!(first_anfis, read("anfis_model.json"));
    assert_eq!(first_text, read("report.txt"));
    println!("PASS: determinism (byte-identical reports sans timing, identical model files)");
}

/// Criterion: CSV ingest/serialize identity within 1e-9 relative, model
/// JSON persistence value-exact, scaler inverse identity within 1e-12.
#[test]
fn acceptance_round_trips() {
    // CSV identity
    let series = generate_synthetic(29, 300, Regime::Mixed).unwrap();
    let parsed = parse_csv(&serialize_csv(&series), &CsvSchema::default(), 10_800).unwrap();
    assert_eq!(parsed.rows_dropped, 0);
    assert_eq!(parsed.series.len(), series.len());
    for (a, b) in series.records().iter().zip(parsed.series.records()) {
        assert_eq!(a.timestamp, b.timestamp);
        for (x, y) in [
            (a.air_temperature_c, b.air_temperature_c),
            (a.air_pressure_mbar, b.air_pressure_mbar),
            (a.wind_speed_ms, b.wind_speed_ms),
        ] {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    // model JSON value-exactness, via a quick end-to-end train
    let rows = buoycast::features::build_rows(std::slice::from_ref(&series));
    let dataset = SupervisedDataset::split_chronological(rows, SplitFractions::default()).unwrap();
    let narx_config = NarxConfig {
        hidden_neurons: 6,
        max_epochs: 20,
        ..NarxConfig::default()
    };
    let (narx, _) = NarxModel::init(narx_config)
        .unwrap()
        .train(&dataset)
        .unwrap();
    let narx_restored = NarxModel::from_json(&narx.to_json()).unwrap();
    assert_eq!(narx, narx_restored);
    assert_eq!(narx.to_json(), narx_restored.to_json());

    let anfis_config = AnfisConfig {
        mfs_per_input: 2,
        max_epochs: 2,
        ..AnfisConfig::default()
    };
    let (anfis, _) = AnfisModel::init(anfis_config, &dataset)
        .unwrap()
        .train(&dataset)
        .unwrap();
    let anfis_restored = AnfisModel::from_json(&anfis.to_json()).unwrap();
    assert_eq!(anfis, anfis_restored);
    assert_eq!(anfis.to_json(), anfis_restored.to_json());

    // scaler inverse identity
    let scaler = dataset.scaler();
    let mut rng = SplitMix64::new(31);
    for _ in 0..1000 {
        let value = rng.uniform(-5.0, 25.0);
        let back = scaler.inverse_target(scaler.scale_target(value));
        assert!((back - value).abs() <= 1e-12 * value.abs().max(1.0));
    }
    println!("PASS: round trips (csv 1e-9, model json exact, scaler inverse 1e-12)");
}

/// Criterion: injecting externally published metrics as precomputed values
/// renders the documented report layout exactly.
#[test]
fn acceptance_report_format_golden() {
    let mk = |mse: f64, r: f64| EvalMetrics { mse, r, n: 1200 };
    let section = |train: EvalMetrics, validation: EvalMetrics, test: EvalMetrics| ModelSection {
        train,
        validation,
        test,
        split_hash: "0123456789abcdef".into(),
        trace: buoycast::trace::TrainTrace {
            epochs: vec![],
            best_epoch: 0,
            stopped_early: false,
        },
    };
    let report = ComparisonReport {
        format_version: REPORT_FORMAT_VERSION.to_string(),
        config: ExperimentConfig::default(),
        dataset: DatasetSummary {
            ingest: IngestStats {
                rows_read: 0,
                rows_dropped: 0,
                segments: 1,
                segments_discarded: 0,
            },
            feature_rows: 0,
            split_counts: SplitCounts {
                train: 0,
                validation: 0,
                test: 0,
            },
            split_hash: "0123456789abcdef".into(),
        },
        models: ModelsSection {
            narx: section(mk(2.19, 0.897), mk(2.88, 0.866), mk(2.93, 0.857)),
            anfis: section(mk(0.31634, 0.99), mk(0.31634, 0.99), mk(0.31634, 0.99)),
        },
        timing: TimingSection {
            narx_train_seconds: 0.0,
            anfis_train_seconds: 0.0,
            total_seconds: 0.0,
        },
    };
    let expected = "\
wind speed forecast comparison (one cadence step ahead)
========================================================
model  split            n          mse        r
--------------------------------------------------------
narx   train         1200      2.19000    0.897
narx   validation    1200      2.88000    0.866
narx   test          1200      2.93000    0.857
anfis  train         1200      0.31634    0.990
anfis  validation    1200      0.31634    0.990
anfis  test          1200      0.31634    0.990
--------------------------------------------------------
both models scored on identical split assignments
split hash: 0123456789abcdef
";
    assert_eq!(render_report_text(&report), expected);
    println!("PASS: report format golden fixture renders exactly");
}
