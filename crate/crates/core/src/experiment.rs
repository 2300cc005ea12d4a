//! One entry point for every estimator, and the seeded benchmark harness
//! that averages metrics over synthetic trials.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::{em_run, em_star, majority_vote, EmInit, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::extensions::{two_class_opt_with, variable_opt_with};
use crate::filtering::filter_opt;
use crate::metrics::MetricReport;
use crate::model::{
    bucket_log_likelihood, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood, Mapping,
    WorkerClass,
};
use crate::oracle::{
    brute_force_filter_with, brute_force_rating_with, brute_force_two_class, OracleOptions,
    Restriction,
};
use crate::rating::{params_for_values, rating_opt_with};
use crate::search::{SearchOptions, DEFAULT_ENUMERATION_CAP};
use crate::synth::{generate, MatrixMode, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Filter,
    Rating,
    Variable,
    TwoClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Opt,
    Em1,
    Em2,
    Em3,
    EmStar,
    Majority,
    Oracle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Filter => "filter",
            Mode::Rating => "rating",
            Mode::Variable => "variable",
            Mode::TwoClass => "two-class",
        }
    }
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Opt => "opt",
            Algorithm::Em1 => "em1",
            Algorithm::Em2 => "em2",
            Algorithm::Em3 => "em3",
            Algorithm::EmStar => "em-star",
            Algorithm::Majority => "majority",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::Filter, Mode::Rating, Mode::Variable, Mode::TwoClass]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Algorithm::Opt,
            Algorithm::Em1,
            Algorithm::Em2,
            Algorithm::Em3,
            Algorithm::EmStar,
            Algorithm::Majority,
            Algorithm::Oracle,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub cap: u128,
    pub max_iter: usize,
    pub tol: f64,
    pub expert_prior: bool,
    pub execution: Execution,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            expert_prior: false,
            execution: Execution::default(),
        }
    }
}

impl EstimateOptions {
    fn search(&self) -> SearchOptions {
        SearchOptions {
            cap: self.cap,
            execution: self.execution,
        }
    }
}

/// Result of any estimator in a common shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mode: Mode,
    pub algorithm: Algorithm,
    /// Label per item, in dataset order.
    pub labels: Labels,
    /// Response matrix; the expert matrix in two-class mode.
    pub matrix: ConfusionMatrix,
    /// Regular-worker matrix in two-class mode.
    pub regular_matrix: Option<ConfusionMatrix>,
    pub loglik: LogLikelihood,
    /// Mappings scored, for enumerating algorithms.
    pub candidates_evaluated: Option<u128>,
    /// EM rounds, for EM algorithms.
    pub iterations: Option<usize>,
}

/// Closed-form matrix and likelihood of a bucketized labeling.
fn bucketized_fit(dataset: &Dataset, labels: &Labels) -> Result<(ConfusionMatrix, LogLikelihood)> {
    let buckets = Buckets::from_dataset(dataset);
    let mapping = Mapping::from_labels(&buckets, labels)
        .ok_or_else(|| Error::MappingMismatch("labeling is not bucketized".into()))?;
    let values = mapping.values_for(&buckets)?;
    let p = params_for_values(&buckets, &values);
    let ll = bucket_log_likelihood(&buckets, &values, &p);
    Ok((p, ll))
}

/// Runs `algorithm` on `dataset` in `mode`.
pub fn estimate(
    dataset: &Dataset,
    mode: Mode,
    algorithm: Algorithm,
    options: &EstimateOptions,
) -> Result<Estimate> {
    let binary = matches!(mode, Mode::Filter | Mode::Variable | Mode::TwoClass);
    if binary && dataset.ratings() != 2 {
        return Err(Error::InvalidConfig(format!(
            "{mode} mode needs binary responses, got {} rating values",
            dataset.ratings()
        )));
    }
    if matches!(mode, Mode::Filter | Mode::Rating) {
        dataset.fixed_total()?;
    }
    let mut out = Estimate {
        mode,
        algorithm,
        labels: Labels(Vec::new()),
        matrix: ConfusionMatrix::uniform(dataset.ratings()),
        regular_matrix: None,
        loglik: LogLikelihood::CERTAIN,
        candidates_evaluated: None,
        iterations: None,
    };
    let r = dataset.ratings();
    let em = |init: Option<EmInit>| -> Result<_> {
        match init {
            Some(init) => em_run(dataset, &init, options.max_iter, options.tol),
            None => em_star(dataset, &EmInit::presets(r), options.max_iter, options.tol),
        }
    };
    let init = match algorithm {
        Algorithm::Em1 => Some(Some(EmInit::em1(r))),
        Algorithm::Em2 => Some(Some(EmInit::em2(r))),
        Algorithm::Em3 => Some(Some(EmInit::em3(r))),
        Algorithm::EmStar => Some(None),
        _ => None,
    };
    match (mode, algorithm, init) {
        (Mode::TwoClass, Algorithm::Opt, _) => {
            let s = two_class_opt_with(dataset, options.expert_prior, &options.search())?;
            out.labels = s.labels;
            out.matrix = s.expert.matrix();
            out.regular_matrix = Some(s.regular.matrix());
            out.loglik = s.loglik;
            out.candidates_evaluated = Some(s.candidates_evaluated);
        }
        (Mode::TwoClass, Algorithm::Oracle, _) => {
            let oracle = OracleOptions {
                execution: options.execution,
                ..OracleOptions::default()
            };
            let report = brute_force_two_class(dataset, Restriction::Reasonable, &oracle)?;
            out.labels = report.best_mapping;
            out.loglik = report.best_loglik;
            out.candidates_evaluated = Some(report.search_space_size);
        }
        (Mode::TwoClass, _, _) => {
            return Err(Error::InvalidConfig(format!(
                "algorithm {algorithm} is not available in two-class mode"
            )))
        }
        (_, Algorithm::Opt, _) => match mode {
            Mode::Filter => {
                let s = filter_opt(dataset)?;
                out.labels = s.labels;
                out.matrix = s.params.matrix();
                out.loglik = s.loglik;
                out.candidates_evaluated = Some(s.candidates_evaluated);
            }
            Mode::Variable => {
                let s = variable_opt_with(dataset, &options.search())?;
                out.labels = s.labels;
                out.matrix = s.params.matrix();
                out.loglik = s.loglik;
                out.candidates_evaluated = Some(s.candidates_evaluated);
            }
            _ => {
                let s = rating_opt_with(dataset, &options.search())?;
                out.labels = s.labels;
                out.matrix = s.matrix;
                out.loglik = s.loglik;
                out.candidates_evaluated = Some(s.candidates_evaluated);
            }
        },
        (_, Algorithm::Oracle, _) => {
            let oracle = OracleOptions {
                execution: options.execution,
                ..OracleOptions::default()
            };
            let report = if mode == Mode::Rating {
                brute_force_rating_with(dataset, Restriction::DiagonallyDominant, &oracle)?
            } else {
                brute_force_filter_with(dataset, Restriction::Reasonable, &oracle)?
            };
            out.labels = report.best_mapping;
            out.loglik = report.best_loglik;
            out.candidates_evaluated = Some(report.search_space_size);
        }
        (_, Algorithm::Majority, _) => {
            out.labels = majority_vote(dataset);
            (out.matrix, out.loglik) = bucketized_fit(dataset, &out.labels)?;
        }
        (_, _, Some(init)) => {
            let run = em(init)?;
            out.labels = run.labels;
            out.matrix = run.matrix;
            out.loglik = run.loglik;
            out.iterations = Some(run.iterations);
        }
        (_, _, None) => unreachable!("every algorithm is handled"),
    }
    if algorithm == Algorithm::Oracle {
        if mode == Mode::TwoClass {
            out.matrix = item_matrix(dataset, &out.labels, Some(WorkerClass::Expert))?;
            out.regular_matrix = Some(item_matrix(
                dataset,
                &out.labels,
                Some(WorkerClass::Regular),
            )?);
        } else {
            out.matrix = item_matrix(dataset, &out.labels, None)?;
        }
    }
    Ok(out)
}

/// Closed-form matrix of an item-level labeling, from one worker class's
/// raw rows or from all counts; empty columns uniform.
fn item_matrix(
    dataset: &Dataset,
    labels: &Labels,
    class: Option<WorkerClass>,
) -> Result<ConfusionMatrix> {
    let r = dataset.ratings();
    let mut counts = vec![vec![0u64; r]; r];
    if class.is_some() {
        let raw = dataset.raw().unwrap_or_default();
        for row in raw.iter().filter(|row| row.class == class) {
            let j = labels.0[dataset.position(&row.item).expect("known item")] as usize;
            counts[j - 1][row.rating - 1] += 1;
        }
    } else {
        for (item, &j) in dataset.items().iter().zip(&labels.0) {
            for (i, &v) in item.responses.low_to_high().iter().enumerate() {
                counts[j as usize - 1][i] += v as u64;
            }
        }
    }
    let columns = counts
        .iter()
        .map(|c| {
            let total: u64 = c.iter().sum();
            if total == 0 {
                vec![1.0 / r as f64; r]
            } else {
                c.iter().map(|&x| x as f64 / total as f64).collect()
            }
        })
        .collect();
    ConfusionMatrix::from_columns(columns)
}

/// A sweep over response counts with repeated synthetic trials.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// `Filter` or `Rating`.
    pub mode: Mode,
    pub n: usize,
    pub ratings: usize,
    pub ms: Vec<u32>,
    pub selectivity: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub options: EstimateOptions,
}

/// Means over the successful trials of one `(m, algorithm)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub m: u32,
    pub algorithm: Algorithm,
    pub mean_loglik: f64,
    pub mean_fraction_incorrect: f64,
    pub mean_distance_weighted: f64,
    pub mean_emd: f64,
    pub mean_jsd: f64,
    pub trials: usize,
    /// Trials that hit an enumeration cap.
    pub failed: usize,
    pub seed: u64,
}

/// Seed of trial `trial` at response count `m`, independent of scheduling.
pub fn trial_seed(base: u64, m: u32, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((m as u64) << 32) | trial as u64);
    rng.next_u64()
}

impl BenchmarkConfig {
    fn synth(&self, m: u32, trial: usize) -> SynthConfig {
        SynthConfig {
            n: self.n,
            ratings: self.ratings,
            m,
            selectivity: self.selectivity.clone(),
            matrix_mode: if self.mode == Mode::Filter {
                MatrixMode::BetterThanRandom
            } else {
                MatrixMode::DiagonallyDominant
            },
            seed: trial_seed(self.seed, m, trial),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.mode, Mode::Filter | Mode::Rating) {
            return Err(Error::InvalidConfig(format!(
                "benchmarks run in filter or rating mode, not {}",
                self.mode
            )));
        }
        if self.mode == Mode::Filter && self.ratings != 2 {
            return Err(Error::InvalidConfig("filter benchmarks are binary".into()));
        }
        if self.trials == 0 || self.ms.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidConfig(
                "benchmark needs trials, response counts and algorithms".into(),
            ));
        }
        if self.ms.contains(&0) {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        self.synth(self.ms[0], 0).validate()
    }
}

/// Per-algorithm `(log-likelihood, metrics)` of one trial; `None` when capped.
type TrialResults = Vec<Option<(f64, MetricReport)>>;

/// Runs every trial (concurrently when the options allow) and returns rows
/// sorted by `m`, then algorithm.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let inner = EstimateOptions {
        execution: Execution::Sequential,
        ..config.options
    };
    let jobs: Vec<(u32, usize)> = config
        .ms
        .iter()
        .flat_map(|&m| (0..config.trials).map(move |t| (m, t)))
        .collect();
    let results =
        config
            .options
            .execution
            .map(jobs, |(m, t)| -> Result<Vec<Option<(f64, MetricReport)>>> {
                let instance = generate(&config.synth(m, t))?;
                let truth = instance
                    .dataset
                    .truth()
                    .expect("synthetic data has truth")
                    .clone();
                config
                    .algorithms
                    .iter()
                    .map(
                        |&a| match estimate(&instance.dataset, config.mode, a, &inner) {
                            Ok(e) => {
                                let report = MetricReport::evaluate(
                                    &e.labels,
                                    &truth,
                                    &e.matrix,
                                    &instance.matrix,
                                )?;
                                Ok(Some((e.loglik.value(), report)))
                            }
                            Err(Error::CapExceeded { .. }) => Ok(None),
                            Err(e) => Err(e),
                        },
                    )
                    .collect()
            });
    let mut rows = Vec::new();
    let per_m = config.trials;
    let mut results = results.into_iter();
    let mut by_m: Vec<(u32, Vec<TrialResults>)> = Vec::new();
    for &m in &config.ms {
        let chunk: Vec<_> = results.by_ref().take(per_m).collect::<Result<_>>()?;
        by_m.push((m, chunk));
    }
    by_m.sort_by_key(|(m, _)| *m);
    by_m.dedup_by_key(|(m, _)| *m);
    let mut order: Vec<(usize, Algorithm)> =
        config.algorithms.iter().copied().enumerate().collect();
    order.sort_by_key(|&(_, a)| a);
    order.dedup_by_key(|&mut (_, a)| a);
    for (m, trials) in &by_m {
        for &(k, algorithm) in &order {
            let done: Vec<&(f64, MetricReport)> =
                trials.iter().filter_map(|t| t[k].as_ref()).collect();
            let count = done.len();
            let mean = |f: &dyn Fn(&(f64, MetricReport)) -> f64| {
                if count == 0 {
                    f64::NAN
                } else {
                    done.iter().map(|x| f(x)).sum::<f64>() / count as f64
                }
            };
            rows.push(BenchmarkRow {
                m: *m,
                algorithm,
                mean_loglik: mean(&|x| x.0),
                mean_fraction_incorrect: mean(&|x| x.1.fraction_incorrect),
                mean_distance_weighted: mean(&|x| x.1.distance_weighted),
                mean_emd: mean(&|x| x.1.emd_score),
                mean_jsd: mean(&|x| x.1.jsd_score),
                trials: count,
                failed: trials.len() - count,
                seed: config.seed,
            });
        }
    }
    Ok(rows)
}
