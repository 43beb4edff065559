//! Command implementations shared by the binary and the test suites.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use avgtime_core::checkpoint;
use avgtime_core::cluster::{self, GroupingOutcome};
use avgtime_core::data::{self, Scaler, SeriesMatrix, WindowSet};
use avgtime_core::model::Model;
use avgtime_core::synth::{self, SynthKind, SynthSpec};
use avgtime_core::train::{self, EvalMetrics, MetricsReport};
use avgtime_core::Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Writes via a temp file in the same directory plus rename, so partially
/// written artifacts are never visible under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| runtime(format!("bad artifact path {}", path.display())))?
        .to_string_lossy()
        .to_string();
    let tmp = path.with_file_name(format!(".{}.tmp", file_name));
    {
        let mut f = fs::File::create(&tmp).map_err(runtime)?;
        f.write_all(bytes).map_err(runtime)?;
        f.flush().map_err(runtime)?;
    }
    fs::rename(&tmp, path).map_err(runtime)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Standardized splits ready for windowing.
pub struct PreparedData {
    pub train: SeriesMatrix,
    pub val: SeriesMatrix,
    pub test: SeriesMatrix,
}

impl PreparedData {
    pub fn n_channels(&self) -> usize {
        self.train.n_channels()
    }
}

pub fn prepare(config: &RunConfig) -> Result<PreparedData, CliError> {
    if !Path::new(&config.dataset_path).exists() {
        return Err(usage(format!("dataset file not found: {}", config.dataset_path)));
    }
    let series = data::load_csv(&config.dataset_path).map_err(usage)?;
    let spec = config.split.to_spec()?;
    let min_len = config.lookback + config.horizon;
    let (train_raw, val_raw, test_raw) = data::split(&series, &spec, min_len).map_err(usage)?;
    let scaler = Scaler::fit(&train_raw);
    Ok(PreparedData {
        train: scaler.transform(&train_raw).map_err(runtime)?,
        val: scaler.transform(&val_raw).map_err(runtime)?,
        test: scaler.transform(&test_raw).map_err(runtime)?,
    })
}

/// Everything `train` produces that other commands reuse.
pub struct TrainSummary {
    pub report: MetricsReport,
    pub parameter_count: usize,
    pub group_count: Option<usize>,
    pub seconds_per_epoch: f64,
}

pub fn run_train(config: &RunConfig) -> Result<TrainSummary, CliError> {
    let out_dir = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&out_dir).map_err(runtime)?;
    let prepared = prepare(config)?;

    let grouping_outcome: Option<GroupingOutcome> = match config.threshold {
        Some(threshold) => {
            Some(cluster::build_grouping(&prepared.train, threshold).map_err(runtime)?)
        }
        None => None,
    };
    if let Some(outcome) = &grouping_outcome {
        let doc = grouping_json(config, config.threshold.unwrap(), outcome);
        write_json(&out_dir.join("grouping.json"), &doc)?;
    }

    let model_config = config
        .model_config(prepared.n_channels(), grouping_outcome.as_ref().map(|o| o.grouping.clone()))
        .map_err(usage)?;
    let mut model = Model::new(model_config, &mut Rng::new(config.train.seed)).map_err(usage)?;

    let train_ws = WindowSet::new(&prepared.train, config.lookback, config.horizon, 1);
    let val_ws = WindowSet::new(&prepared.val, config.lookback, config.horizon, 1);
    let test_ws = WindowSet::new(&prepared.test, config.lookback, config.horizon, 1);

    let outcome = train::train(&mut model, &train_ws, &val_ws, &config.train).map_err(runtime)?;
    let test_metrics = train::evaluate(&model, &test_ws, config.train.batch_size).map_err(runtime)?;

    let report = MetricsReport {
        mse: test_metrics.mse,
        mae: test_metrics.mae,
        per_horizon_mse: test_metrics.per_horizon_mse,
        epochs_run: outcome.epochs_run,
        best_epoch: outcome.best_epoch,
        train_seconds_per_epoch: outcome.seconds_per_epoch,
        history: outcome.history.clone(),
    };

    checkpoint::save(&model, out_dir.join("checkpoint.bin")).map_err(runtime)?;
    write_json(&out_dir.join("metrics.json"), &json!({ "config": config, "metrics": report }))?;

    let mut history_csv = String::from("epoch,train_loss,val_loss,seconds\n");
    for e in &outcome.history {
        history_csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.seconds));
    }
    write_atomic(&out_dir.join("history.csv"), history_csv.as_bytes())?;

    Ok(TrainSummary {
        report,
        parameter_count: model.parameter_count(),
        group_count: grouping_outcome.map(|o| o.grouping.group_count),
        seconds_per_epoch: outcome.seconds_per_epoch,
    })
}

fn grouping_json(config: &RunConfig, threshold: f64, outcome: &GroupingOutcome) -> serde_json::Value {
    json!({
        "threshold": threshold,
        "groups": outcome.grouping.groups(),
        "edge_count": outcome.edge_count,
        "group_sizes": outcome.group_sizes,
        "config": config,
    })
}

pub fn run_cluster(config: &RunConfig) -> Result<(), CliError> {
    let prepared = prepare(config)?;
    let threshold = config.threshold.unwrap_or(0.8);
    let outcome = cluster::build_grouping(&prepared.train, threshold).map_err(runtime)?;
    let doc = grouping_json(config, threshold, &outcome);
    let out_dir = PathBuf::from(&config.output_dir);
    write_json(&out_dir.join("grouping.json"), &doc)?;
    println!(
        "{} channels -> {} groups ({} edges) at threshold {}",
        prepared.n_channels(),
        outcome.grouping.group_count,
        outcome.edge_count,
        threshold
    );
    println!("wrote {}", out_dir.join("grouping.json").display());
    Ok(())
}

pub fn run_eval(config: &RunConfig, checkpoint_path: &Path) -> Result<EvalMetrics, CliError> {
    let model = checkpoint::load(checkpoint_path).map_err(usage)?;
    let prepared = prepare(config)?;
    if model.config.n_channels != prepared.n_channels() {
        return Err(usage(format!(
            "checkpoint expects {} channels, dataset has {}",
            model.config.n_channels,
            prepared.n_channels()
        )));
    }
    if model.config.lookback != config.lookback || model.config.horizon != config.horizon {
        return Err(usage(format!(
            "checkpoint was trained with lookback {} / horizon {}, config asks {} / {}",
            model.config.lookback, model.config.horizon, config.lookback, config.horizon
        )));
    }
    let test_ws = WindowSet::new(&prepared.test, config.lookback, config.horizon, 1);
    let metrics = train::evaluate(&model, &test_ws, config.train.batch_size).map_err(runtime)?;
    let doc = json!({ "config": config, "metrics": metrics });
    let out_path = PathBuf::from(&config.output_dir).join("eval_metrics.json");
    write_json(&out_path, &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc).map_err(runtime)?);
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Threshold,
    Lookback,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis, CliError> {
        match s {
            "threshold" => Ok(SweepAxis::Threshold),
            "lookback" => Ok(SweepAxis::Lookback),
            other => Err(usage(format!(
                "unknown sweep axis {:?} (expected threshold or lookback)",
                other
            ))),
        }
    }
}

/// One row of sweep.csv.
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub parameter_count: Option<usize>,
    pub seconds_per_epoch: Option<f64>,
    pub group_count: Option<usize>,
}

pub fn run_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    parallel: bool,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(usage("sweep needs a non-empty value list"));
    }
    let axis_name = match axis {
        SweepAxis::Threshold => "threshold",
        SweepAxis::Lookback => "lookback",
    };
    // Every point gets its own output subdirectory, so points are
    // independent and may run on separate threads when asked to.
    let point = |value: f64| -> SweepRow {
        let mut sub = config.clone();
        match axis {
            SweepAxis::Threshold => sub.threshold = Some(value),
            SweepAxis::Lookback => {
                if value < 1.0 || value.fract() != 0.0 {
                    return failed_row(value, "lookback values must be positive integers");
                }
                sub.lookback = value as usize;
            }
        }
        sub.output_dir = Path::new(&config.output_dir)
            .join(format!("sweep_{}_{}", axis_name, value))
            .display()
            .to_string();
        match run_train(&sub) {
            Ok(summary) => SweepRow {
                value,
                status: "ok".into(),
                mse: Some(summary.report.mse),
                mae: Some(summary.report.mae),
                parameter_count: Some(summary.parameter_count),
                seconds_per_epoch: Some(summary.seconds_per_epoch),
                group_count: summary.group_count,
            },
            Err(e) => failed_row(value, &e.to_string()),
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = values.iter().map(|&v| scope.spawn(move || point(v))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep point panicked")).collect()
        })
    } else {
        values.iter().map(|&v| point(v)).collect()
    };

    let mut csv = String::from("value,mse,mae,parameter_count,seconds_per_epoch,group_count,status\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.value,
            row.mse.map(|v| v.to_string()).unwrap_or_default(),
            row.mae.map(|v| v.to_string()).unwrap_or_default(),
            row.parameter_count.map(|v| v.to_string()).unwrap_or_default(),
            row.seconds_per_epoch.map(|v| v.to_string()).unwrap_or_default(),
            row.group_count.map(|v| v.to_string()).unwrap_or_default(),
            row.status.replace(',', ";"),
        ));
    }
    write_atomic(&PathBuf::from(&config.output_dir).join("sweep.csv"), csv.as_bytes())?;
    for row in &rows {
        println!(
            "{} = {}: {}",
            axis_name,
            row.value,
            if row.status == "ok" {
                format!("mse {:.6}, mae {:.6}", row.mse.unwrap(), row.mae.unwrap())
            } else {
                row.status.clone()
            }
        );
    }
    Ok(rows)
}

fn failed_row(value: f64, message: &str) -> SweepRow {
    SweepRow {
        value,
        status: format!("failed: {}", message),
        mse: None,
        mae: None,
        parameter_count: None,
        seconds_per_epoch: None,
        group_count: None,
    }
}

/// Comparison produced by the ablation command.
pub struct AblationOutcome {
    pub mlp: MetricsReport,
    pub average: MetricsReport,
    pub improvement_mse_pct: f64,
    pub improvement_mae_pct: f64,
}

pub fn run_ablation(config: &RunConfig) -> Result<AblationOutcome, CliError> {
    let mut ablated = config.clone();
    ablated.ablation_disable_embedding = true;
    ablated.output_dir = Path::new(&config.output_dir).join("ablation_mlp").display().to_string();
    let mut full = config.clone();
    full.ablation_disable_embedding = false;
    full.output_dir = Path::new(&config.output_dir).join("ablation_average").display().to_string();

    let mlp = run_train(&ablated)?;
    let avg = run_train(&full)?;
    let improvement_mse_pct = 100.0 * (mlp.report.mse - avg.report.mse) / mlp.report.mse;
    let improvement_mae_pct = 100.0 * (mlp.report.mae - avg.report.mae) / mlp.report.mae;

    let doc = json!({
        "config": config,
        "mlp": { "mse": mlp.report.mse, "mae": mlp.report.mae },
        "average": { "mse": avg.report.mse, "mae": avg.report.mae },
        "improvement_mse_pct": improvement_mse_pct,
        "improvement_mae_pct": improvement_mae_pct,
    });
    write_json(&PathBuf::from(&config.output_dir).join("ablation.json"), &doc)?;

    println!("variant     mse        mae");
    println!("mlp        {:<10.6} {:<10.6}", mlp.report.mse, mlp.report.mae);
    println!("+average   {:<10.6} {:<10.6}", avg.report.mse, avg.report.mae);
    println!("improv.(%) {:<10.2} {:<10.2}", improvement_mse_pct, improvement_mae_pct);

    Ok(AblationOutcome {
        mlp: mlp.report,
        average: avg.report,
        improvement_mse_pct,
        improvement_mae_pct,
    })
}

pub struct SynthArgs {
    pub kind: String,
    pub channels: usize,
    pub length: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub output: PathBuf,
}

pub fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        kind: SynthKind::parse(&args.kind).map_err(usage)?,
        n_channels: args.channels,
        length: args.length,
        noise_std: args.noise_std,
        seed: args.seed,
    };
    let series = synth::generate(&spec).map_err(usage)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    let file_name = args
        .output
        .file_name()
        .ok_or_else(|| usage(format!("bad output path {}", args.output.display())))?
        .to_string_lossy()
        .to_string();
    let tmp = args.output.with_file_name(format!(".{}.tmp", file_name));
    data::write_csv(&series, &tmp).map_err(runtime)?;
    fs::rename(&tmp, &args.output).map_err(runtime)?;
    println!(
        "wrote {} ({} channels × {} steps)",
        args.output.display(),
        series.n_channels(),
        series.n_steps()
    );
    Ok(())
}
