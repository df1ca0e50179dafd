use std::sync::Arc;

use log::info;

use super::report::{
    gain_rows, write_partial, write_report_dir, ChosenHyperparameters, ExperimentReport,
    PositiveRates, SplitSizes, StrategyResult,
};
use super::{sample_validation, split, sub_seed, ExperimentConfig, HarnessError, Split};
use crate::encoding::{
    encode_set, fit_schema_with, EncodedDataset, EncodingOptions, EncodingSchema,
};
use crate::eventlog::{EventLog, Trace};
use crate::forest::{
    train_batch, train_incremental_initial, BatchForest, BatchHyperparameters, BatchOptions,
    BinnedMatrix, IncHyperparameters, IncrementalForest, Matrix, Model,
};
use crate::hyperopt::{batch_from_params, incremental_from_params, optimize, Trial};
use crate::metrics::{accuracy, auc, auc_by_group, f_measure, stopwatch, Strategy, TimeBreakdown};
use crate::outcome::{Labels, OutcomeLabeler};

const SEED_VALIDATION_S0: u64 = 1;
const SEED_VALIDATION_S2: u64 = 2;
const SEED_HYPEROPT_S0: u64 = 3;
const SEED_HYPEROPT_S2: u64 = 4;
const SEED_HYPEROPT_S3: u64 = 5;

/// Everything S1 and S3 reuse from S0.
#[derive(Debug, Clone)]
pub struct S0Artifacts {
    pub fit0: Vec<Trace>,
    pub val0: Vec<Trace>,
    pub schema: Arc<EncodingSchema>,
    pub hp: BatchHyperparameters,
    pub model: Model,
    pub m0_build: f64,
    pub result: StrategyResult,
}

#[derive(Debug, Clone)]
pub struct S3Artifacts {
    /// M0_inc before the update.
    pub baseline: Model,
    pub updated: Model,
    pub result: StrategyResult,
}

fn options(cfg: &ExperimentConfig) -> EncodingOptions {
    EncodingOptions {
        elapsed_time: cfg.elapsed_time,
    }
}

fn concat(a: &[Trace], b: &[Trace]) -> Vec<Trace> {
    a.iter().chain(b).cloned().collect()
}

fn encode(
    traces: &[Trace],
    schema: &Arc<EncodingSchema>,
    labels: &Labels,
) -> Result<EncodedDataset, HarnessError> {
    Ok(encode_set(traces, schema, labels)?)
}

fn fit_schema(
    cfg: &ExperimentConfig,
    traces: &[Trace],
) -> Result<Arc<EncodingSchema>, HarnessError> {
    Ok(Arc::new(fit_schema_with(
        traces,
        cfg.max_prefix_len,
        options(cfg),
    )?))
}

fn metrics_err(context: &str) -> impl FnOnce(crate::metrics::MetricsError) -> HarnessError + '_ {
    move |source| HarnessError::Metrics {
        context: context.to_string(),
        source,
    }
}

struct Evaluation {
    auc: f64,
    f1: f64,
    accuracy: f64,
    by_prefix: std::collections::BTreeMap<usize, Option<f64>>,
    n_test: usize,
}

fn evaluate(
    model: &Model,
    schema: &Arc<EncodingSchema>,
    te: &[Trace],
    labels: &Labels,
) -> Result<Evaluation, HarnessError> {
    let data = encode(te, schema, labels)?;
    let scores = model.predict_matrix(&data.to_matrix())?;
    let y = data.labels();
    Ok(Evaluation {
        auc: auc(&scores, &y).map_err(metrics_err("test set"))?,
        f1: f_measure(&scores, &y),
        accuracy: accuracy(&scores, &y),
        by_prefix: auc_by_group(&scores, &y, &data.prefix_lens()),
        n_test: data.len(),
    })
}

fn validation_auc(model: Model, val: &Matrix) -> Result<f64, String> {
    let scores = model.predict_matrix(val).map_err(|e| e.to_string())?;
    auc(&scores, val.labels()).map_err(|e| e.to_string())
}

struct Tuned<H> {
    hp: H,
    trials: Vec<Trial>,
}

fn tune_batch(
    cfg: &ExperimentConfig,
    fit: &Matrix,
    val: &Matrix,
    seed: u64,
) -> Result<Tuned<BatchHyperparameters>, HarnessError> {
    let binned = BinnedMatrix::new(fit);
    let objective = |p: &crate::hyperopt::Params| {
        let hp = batch_from_params(p);
        let forest = BatchForest::fit_binned(&binned, &hp, cfg.seed, BatchOptions::default())
            .map_err(|e| e.to_string())?;
        validation_auc(Model::Batch(forest), val)
    };
    let h = &cfg.hyperopt;
    let (best, trials) = optimize(objective, &h.batch_space, &h.tpe, h.budget, seed)?;
    Ok(Tuned {
        hp: batch_from_params(&best),
        trials,
    })
}

fn tune_incremental(
    cfg: &ExperimentConfig,
    fit: &Matrix,
    val: &Matrix,
    seed: u64,
) -> Result<Tuned<IncHyperparameters>, HarnessError> {
    let objective = |p: &crate::hyperopt::Params| {
        let hp = incremental_from_params(p);
        let forest = IncrementalForest::fit(fit, &hp, cfg.seed).map_err(|e| e.to_string())?;
        validation_auc(Model::Incremental(forest), val)
    };
    let h = &cfg.hyperopt;
    let (best, trials) = optimize(objective, &h.incremental_space, &h.tpe, h.budget, seed)?;
    Ok(Tuned {
        hp: incremental_from_params(&best),
        trials,
    })
}

/// Validation split, schema, encodings and hyperparameter search for a
/// batch model over `train`.
struct BatchSearch {
    fit: Vec<Trace>,
    val: Vec<Trace>,
    schema: Arc<EncodingSchema>,
    fit_matrix: Matrix,
    tuned: Tuned<BatchHyperparameters>,
    /// Search time only; sampling and encoding are not counted.
    seconds: f64,
}

fn batch_search(
    cfg: &ExperimentConfig,
    train: &[Trace],
    labels: &Labels,
    validation_seed: u64,
    hyperopt_seed: u64,
) -> Result<BatchSearch, HarnessError> {
    let (fit, val) = sample_validation(train, cfg.validation_fraction, validation_seed)?;
    let schema = fit_schema(cfg, &fit)?;
    let fit_matrix = encode(&fit, &schema, labels)?.to_matrix();
    let val_matrix = encode(&val, &schema, labels)?.to_matrix();
    let (tuned, seconds) = stopwatch(|| tune_batch(cfg, &fit_matrix, &val_matrix, hyperopt_seed));
    Ok(BatchSearch {
        fit,
        val,
        schema,
        fit_matrix,
        tuned: tuned?,
        seconds,
    })
}

#[allow(clippy::too_many_arguments)]
fn result(
    strategy: Strategy,
    eval: Evaluation,
    time: TimeBreakdown,
    hyperparameters: ChosenHyperparameters,
    schema: &EncodingSchema,
    n_train_instances: usize,
    trials: Vec<Trial>,
) -> StrategyResult {
    StrategyResult {
        strategy,
        model: strategy.model_name().to_string(),
        description: strategy.description().to_string(),
        auc: eval.auc,
        f1: eval.f1,
        accuracy: eval.accuracy,
        auc_by_prefix_len: eval.by_prefix,
        total_seconds: time.total(),
        time,
        hyperparameters,
        schema_fingerprint: schema.fingerprint(),
        schema_width: schema.width(),
        n_train_instances,
        n_test_instances: eval.n_test,
        trials,
        baseline_auc: None,
    }
}

/// Do nothing: tune and train M0 on TR0 and keep it.
pub fn run_s0(
    cfg: &ExperimentConfig,
    split: &Split,
    labels: &Labels,
) -> Result<S0Artifacts, HarnessError> {
    let search = batch_search(
        cfg,
        &split.tr0,
        labels,
        sub_seed(cfg.seed, SEED_VALIDATION_S0),
        sub_seed(cfg.seed, SEED_HYPEROPT_S0),
    )?;
    let hyperopt_s = search.seconds;
    let hp = search.tuned.hp;
    let (model, train_s) = stopwatch(|| train_batch(&search.fit_matrix, &hp, cfg.seed));
    let model = model?;
    let m0_build = hyperopt_s + train_s;
    info!("S0: hyperopt {hyperopt_s:.1}s, train {train_s:.1}s");
    let eval = evaluate(&model, &search.schema, &split.te, labels)?;
    let result = result(
        Strategy::S0,
        eval,
        TimeBreakdown::do_nothing(m0_build),
        ChosenHyperparameters::Batch(hp),
        &search.schema,
        search.fit_matrix.n_rows(),
        search.tuned.trials,
    );
    Ok(S0Artifacts {
        fit0: search.fit,
        val0: search.val,
        schema: search.schema,
        hp,
        model,
        m0_build,
        result,
    })
}

/// Re-train on TR0's fit set plus TR1 with M0's hyperparameters and a
/// refitted schema.
pub fn run_s1(
    cfg: &ExperimentConfig,
    s0: &S0Artifacts,
    split: &Split,
    labels: &Labels,
) -> Result<(Model, StrategyResult), HarnessError> {
    let train = concat(&s0.fit0, &split.tr1);
    let schema = fit_schema(cfg, &train)?;
    let data = encode(&train, &schema, labels)?.to_matrix();
    let (model, retrain_s) = stopwatch(|| train_batch(&data, &s0.hp, cfg.seed));
    let (model, n_train) = (model?, data.n_rows());
    info!("S1: retrain {retrain_s:.1}s");
    let eval = evaluate(&model, &schema, &split.te, labels)?;
    let res = result(
        Strategy::S1,
        eval,
        TimeBreakdown::retrain(s0.m0_build, retrain_s),
        ChosenHyperparameters::Batch(s0.hp),
        &schema,
        n_train,
        Vec::new(),
    );
    Ok((model, res))
}

/// Full re-train: validation sample, schema, search and training all over
/// TR0 ∪ TR1.
pub fn run_s2(
    cfg: &ExperimentConfig,
    s0: &S0Artifacts,
    split: &Split,
    labels: &Labels,
) -> Result<(Model, StrategyResult), HarnessError> {
    let train = concat(&split.tr0, &split.tr1);
    let search = batch_search(
        cfg,
        &train,
        labels,
        sub_seed(cfg.seed, SEED_VALIDATION_S2),
        sub_seed(cfg.seed, SEED_HYPEROPT_S2),
    )?;
    let hyperopt_s = search.seconds;
    let hp = search.tuned.hp;
    let (model, train_s) = stopwatch(|| train_batch(&search.fit_matrix, &hp, cfg.seed));
    let model = model?;
    info!("S2: hyperopt {hyperopt_s:.1}s, train {train_s:.1}s");
    let eval = evaluate(&model, &search.schema, &split.te, labels)?;
    let res = result(
        Strategy::S2,
        eval,
        TimeBreakdown::full_retrain(s0.m0_build, hyperopt_s, train_s),
        ChosenHyperparameters::Batch(hp),
        &search.schema,
        search.fit_matrix.n_rows(),
        search.tuned.trials,
    );
    Ok((model, res))
}

/// Incremental update: tune and train M0_inc on TR0's fit set under S0's
/// schema, then stream TR1 through it.
pub fn run_s3(
    cfg: &ExperimentConfig,
    s0: &S0Artifacts,
    split: &Split,
    labels: &Labels,
) -> Result<S3Artifacts, HarnessError> {
    let schema = &s0.schema;
    let fit = encode(&s0.fit0, schema, labels)?.to_matrix();
    let val = encode(&s0.val0, schema, labels)?.to_matrix();
    let stream = encode(&split.tr1, schema, labels)?.to_matrix();
    let (built, build_s) = stopwatch(|| -> Result<_, HarnessError> {
        let tuned = tune_incremental(cfg, &fit, &val, sub_seed(cfg.seed, SEED_HYPEROPT_S3))?;
        let model = train_incremental_initial(&fit, &tuned.hp, cfg.seed)?;
        Ok((tuned, model))
    });
    let (tuned, baseline) = built?;
    let mut updated = baseline.clone();
    let (status, update_s) = stopwatch(|| updated.update(&stream));
    status?;
    let (n_fit, n_stream) = (fit.n_rows(), stream.n_rows());
    info!("S3: build {build_s:.1}s, update {update_s:.1}s");
    let baseline_eval = evaluate(&baseline, schema, &split.te, labels)?;
    let eval = evaluate(&updated, schema, &split.te, labels)?;
    let mut res = result(
        Strategy::S3,
        eval,
        TimeBreakdown::incremental(build_s, update_s),
        ChosenHyperparameters::Incremental(tuned.hp),
        schema,
        n_fit + n_stream,
        tuned.trials,
    );
    res.baseline_auc = Some(baseline_eval.auc);
    Ok(S3Artifacts {
        baseline,
        updated,
        result: res,
    })
}

fn rate(traces: &[Trace], labels: &Labels) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    let pos = traces
        .iter()
        .filter(|t| labels.get(&t.case_id) == Some(&true))
        .count();
    pos as f64 / traces.len() as f64
}

/// Reads or generates the log named by `cfg` and runs every strategy on it.
/// Report files are written when `cfg.output_dir` is set; on failure a
/// partial report goes to `report.partial.json` there.
pub fn run_all(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let log = cfg.load_log()?;
    run_on_log(cfg, &log)
}

pub fn run_on_log(
    cfg: &ExperimentConfig,
    log: &EventLog,
) -> Result<ExperimentReport, HarnessError> {
    let sp = split(log.traces(), &cfg.split)?;
    let train = concat(&sp.tr0, &sp.tr1);
    let labeler = OutcomeLabeler::freeze(&cfg.labeler, &train)?;
    let labels = labeler.label_all(log.traces())?;
    let mut report = ExperimentReport::new(
        cfg.clone(),
        log.stats(),
        labeler.threshold_ms().map(|ms| ms / 3_600_000.0),
        PositiveRates {
            tr0: rate(&sp.tr0, &labels),
            tr1: rate(&sp.tr1, &labels),
            te: rate(&sp.te, &labels),
        },
        SplitSizes {
            tr0: sp.tr0.len(),
            tr1: sp.tr1.len(),
            te: sp.te.len(),
            ..Default::default()
        },
    );
    match run_strategies(cfg, &sp, &labels, &mut report) {
        Ok(()) => {
            report.gains = gain_rows(&report.strategies);
            if let Some(dir) = &cfg.output_dir {
                write_report_dir(&report, dir)?;
            }
            Ok(report)
        }
        Err((strategy, e)) => {
            if let Some(dir) = &cfg.output_dir {
                if let Err(w) = write_partial(&report, dir) {
                    log::error!("could not write partial report: {w}");
                }
            }
            Err(HarnessError::Aborted {
                strategy,
                source: Box::new(e),
                partial: Box::new(report),
            })
        }
    }
}

fn run_strategies(
    cfg: &ExperimentConfig,
    sp: &Split,
    labels: &Labels,
    report: &mut ExperimentReport,
) -> Result<(), (Strategy, HarnessError)> {
    let s0 = run_s0(cfg, sp, labels).map_err(|e| (Strategy::S0, e))?;
    report.sizes.fit0 = Some(s0.fit0.len());
    report.sizes.val0 = Some(s0.val0.len());
    report.m0_batch_auc = Some(s0.result.auc);
    report.strategies.push(s0.result.clone());
    let (_, r1) = run_s1(cfg, &s0, sp, labels).map_err(|e| (Strategy::S1, e))?;
    report.strategies.push(r1);
    let (_, r2) = run_s2(cfg, &s0, sp, labels).map_err(|e| (Strategy::S2, e))?;
    report.strategies.push(r2);
    let s3 = run_s3(cfg, &s0, sp, labels).map_err(|e| (Strategy::S3, e))?;
    report.m0_inc_auc = s3.result.baseline_auc;
    report.strategies.push(s3.result);
    Ok(())
}
