//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crowd_mle::experiment::{
    estimate as run_estimate, run_benchmark, Algorithm, BenchmarkConfig, EstimateOptions, Mode,
};
use crowd_mle::extensions::{
    build_two_class_poset, build_variable_poset, count_variable_boundaries,
    two_class_labels_log_likelihood,
};
use crowd_mle::metrics::{distance_weighted_score, fraction_incorrect};
use crowd_mle::oracle::labels_log_likelihood;
use crowd_mle::poset::build_rating_poset;
use crowd_mle::rating::count_dominance_consistent;
use crowd_mle::synth::{generate, subsample_responses, SynthConfig};
use crowd_mle::{
    log_likelihood_given_matrix, Buckets, ConfusionMatrix, Dataset, Execution, Labels,
    LogLikelihood, Mapping, RawResponse, DEFAULT_ENUMERATION_CAP,
};
use serde_json::json;

use crate::io::{self, IoError, MappingEntry, MatrixJson, Metrics, ResultJson, SCHEMA_VERSION};
use crate::{
    BenchmarkArgs, CheckArgs, CliError, EnumerateArgs, EstimateArgs, SampleArgs, SearchArgs,
    SimulateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Agreement required between a reported and a re-scored log-likelihood.
const CHECK_TOLERANCE: f64 = 1e-12;

/// `--cap`, then `CROWD_MLE_CAP`, then the library default.
fn resolve_cap(flag: Option<u64>) -> Result<u128> {
    if let Some(cap) = flag {
        return Ok(cap as u128);
    }
    match std::env::var("CROWD_MLE_CAP") {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Config(format!("CROWD_MLE_CAP=`{v}` is not a non-negative integer"))
        }),
        Err(_) => Ok(DEFAULT_ENUMERATION_CAP),
    }
}

fn options(search: &SearchArgs, expert_prior: bool) -> Result<EstimateOptions> {
    if search.tol.is_nan() || search.tol <= 0.0 {
        return Err(CliError::Config(format!(
            "--tol {} must be positive",
            search.tol
        )));
    }
    Ok(EstimateOptions {
        cap: resolve_cap(search.cap)?,
        max_iter: search.max_iter,
        tol: search.tol,
        expert_prior,
        execution: if search.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_text(p, text).map_err(Into::into),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("--{flag}: cannot parse `{}`", s.trim())))
        })
        .collect()
}

/// Scalar `s` is the share of the top rating in binary mode; a list gives
/// the whole distribution. Defaults to uniform.
fn selectivity(text: Option<&str>, ratings: usize) -> Result<Vec<f64>> {
    let Some(text) = text else {
        return Ok(vec![1.0 / ratings as f64; ratings]);
    };
    let values: Vec<f64> = parse_list("selectivity", text)?;
    match values.as_slice() {
        [s] if ratings == 2 => Ok(vec![1.0 - s, *s]),
        [_] => Err(CliError::Config(format!(
            "a scalar selectivity needs R = 2; give {ratings} comma-separated shares"
        ))),
        _ => Ok(values),
    }
}

fn matrix_rows(p: &ConfusionMatrix) -> Vec<Vec<f64>> {
    p.rows()
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let opts = options(&args.search, args.expert_prior)?;
    if args.mode == Mode::Rating && args.ratings.is_some_and(|r| r < 2) {
        return Err(CliError::Config("--R must be at least 2".into()));
    }
    let dataset = io::read_dataset(&args.input, args.ratings)?;
    let binary = args.mode != Mode::Rating;
    let truth = args
        .truth
        .as_deref()
        .map(|p| io::read_truth(p, &dataset, binary))
        .transpose()?;
    let est = run_estimate(&dataset, args.mode, args.algorithm, &opts)?;
    let metrics = match &truth {
        Some(t) => Some(Metrics {
            fraction_incorrect: fraction_incorrect(&est.labels, t)?,
            distance_weighted: distance_weighted_score(&est.labels, t)?,
        }),
        None => None,
    };
    let mapping = dataset
        .items()
        .iter()
        .zip(&est.labels.0)
        .map(|(item, &v)| MappingEntry {
            item_id: item.id.clone(),
            value: io::display_value(binary, v),
        })
        .collect();
    let result = ResultJson {
        schema_version: SCHEMA_VERSION,
        mode: args.mode.to_string(),
        algorithm: args.algorithm.to_string(),
        ratings: dataset.ratings(),
        mapping,
        matrix: matrix_rows(&est.matrix),
        undefined_columns: est.matrix.undefined_columns(),
        error_rates: io::error_rates(&est.matrix),
        regular_matrix: est.regular_matrix.as_ref().map(matrix_rows),
        regular_error_rates: est.regular_matrix.as_ref().and_then(io::error_rates),
        log_likelihood: io::loglik_json(est.loglik),
        candidates_evaluated: est
            .candidates_evaluated
            .map(|c| c.min(u64::MAX as u128) as u64),
        iterations: est.iterations,
        metrics,
        config: json!({
            "input": args.input.display().to_string(),
            "truth": args.truth.as_ref().map(|p| p.display().to_string()),
            "mode": args.mode.to_string(),
            "algorithm": args.algorithm.to_string(),
            "R": dataset.ratings(),
            "cap": opts.cap.min(u64::MAX as u128) as u64,
            "max_iter": opts.max_iter,
            "tol": opts.tol,
            "expert_prior": opts.expert_prior,
        }),
    };
    emit(args.output.as_deref(), &io::to_json(&result))
}

/// Rows `item,w<k>,rating` expanding each tally, lowest rating first.
fn expand_raw(dataset: &Dataset) -> Vec<RawResponse> {
    let mut rows = Vec::new();
    for item in dataset.items() {
        let mut worker = 0;
        for (i, &v) in item.responses.low_to_high().iter().enumerate() {
            for _ in 0..v {
                worker += 1;
                rows.push(RawResponse {
                    item: item.id.clone(),
                    worker: format!("w{worker}"),
                    rating: i + 1,
                    class: None,
                });
            }
        }
    }
    rows
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let config = match args.mode {
        Mode::Filter => {
            if args.ratings != 2 {
                return Err(CliError::Config("filter mode is binary; use --R 2".into()));
            }
            let sel = selectivity(args.selectivity.as_deref(), 2)?;
            SynthConfig {
                selectivity: sel,
                ..SynthConfig::filtering(args.n, args.m, 0.5, args.seed)
            }
        }
        Mode::Rating => SynthConfig::rating(
            args.n,
            args.ratings,
            args.m,
            selectivity(args.selectivity.as_deref(), args.ratings)?,
            args.seed,
        ),
        other => return Err(CliError::Config(format!("cannot simulate in {other} mode"))),
    };
    if args.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    if args.m == 0 {
        return Err(CliError::Config("--m must be at least 1".into()));
    }
    config.validate()?;
    let instance = generate(&config)?;
    let ds = &instance.dataset;
    let truth = ds.truth().expect("synthetic data has truth");
    let binary = args.mode == Mode::Filter;
    let responses = if args.raw {
        io::raw_csv(&expand_raw(ds))
    } else {
        io::counts_csv(ds)
    };
    let matrix = MatrixJson {
        schema_version: SCHEMA_VERSION,
        ratings: ds.ratings(),
        matrix: instance.matrix.rows(),
    };
    fs::create_dir_all(&args.output).map_err(|source| IoError::File {
        path: args.output.display().to_string(),
        source,
    })?;
    io::write_text(&args.output.join("responses.csv"), &responses)?;
    io::write_text(
        &args.output.join("truth.csv"),
        &io::truth_csv(ds, truth, binary),
    )?;
    io::write_text(&args.output.join("matrix.json"), &io::to_json(&matrix))?;
    Ok(())
}

pub fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let ms: Vec<u32> = parse_list("m", &args.m)?;
    let algorithms: Vec<Algorithm> = parse_list("algorithms", &args.algorithms)?;
    if args.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let config = BenchmarkConfig {
        mode: args.mode,
        n: args.n,
        ratings: args.ratings,
        ms,
        selectivity: selectivity(args.selectivity.as_deref(), args.ratings)?,
        trials: args.trials,
        seed: args.seed,
        algorithms,
        options: options(&args.search, false)?,
    };
    let rows = run_benchmark(&config)?;
    let mut out = String::from(
        "m,algorithm,mean_log_likelihood,mean_fraction_incorrect,mean_distance_weighted,mean_emd,mean_jsd,trials,failed,seed\n",
    );
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.algorithm,
            r.mean_loglik,
            r.mean_fraction_incorrect,
            r.mean_distance_weighted,
            r.mean_emd,
            r.mean_jsd,
            r.trials,
            r.failed,
            r.seed
        )
        .expect("writing to a string");
    }
    emit(args.output.as_deref(), &out)?;
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    if failed > 0 {
        return Err(CliError::Resource(format!(
            "{failed} trial runs exceeded the enumeration cap"
        )));
    }
    Ok(())
}

fn listing_header(keys: impl Iterator<Item = String>) -> String {
    let mut line = keys.collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn listing_rows(out: &mut String, maps: impl Iterator<Item = Vec<u8>>, binary: bool) {
    for values in maps {
        let row: Vec<String> = values
            .iter()
            .map(|&v| io::display_value(binary, v).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

pub fn enumerate(args: EnumerateArgs) -> Result<()> {
    if args.m == 0 && args.mode != Mode::TwoClass {
        return Err(CliError::Config("--m must be at least 1".into()));
    }
    let cap = resolve_cap(args.cap)?;
    let mut listing = String::new();
    match args.mode {
        Mode::Filter | Mode::Rating => {
            let r = if args.mode == Mode::Filter {
                2
            } else {
                args.ratings
            };
            if !(2..=u8::MAX as usize).contains(&r) {
                return Err(CliError::Config(format!("--R {r} out of range")));
            }
            println!("{}", count_dominance_consistent(r, args.m)?);
            if args.list.is_some() {
                let poset = build_rating_poset(r, args.m)?;
                let header = poset.nodes().iter().map(|k| {
                    k.low_to_high()
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(":")
                });
                listing.push_str(&listing_header(header));
                listing_rows(
                    &mut listing,
                    poset.enumerate_monotone_maps(r as u8, cap)?,
                    args.mode == Mode::Filter,
                );
            }
        }
        Mode::Variable => {
            let (formula, exact) = count_variable_boundaries(args.m)?;
            println!("formula {formula}");
            println!("exact {exact}");
            if args.list.is_some() {
                let poset = build_variable_poset(args.m)?;
                let header = poset
                    .nodes()
                    .iter()
                    .map(|b| format!("{}:{}", b.zeros, b.ones));
                listing.push_str(&listing_header(header));
                listing_rows(&mut listing, poset.enumerate_monotone_maps(2, cap)?, true);
            }
        }
        Mode::TwoClass => {
            let poset = build_two_class_poset(args.m, args.m_regular, args.expert_prior)?;
            println!("{}", poset.count_monotone_maps(2)?);
            if args.list.is_some() {
                let header = poset.nodes().iter().map(|b| {
                    format!(
                        "{}:{}:{}:{}",
                        b.no_expert, b.yes_expert, b.no_regular, b.yes_regular
                    )
                });
                listing.push_str(&listing_header(header));
                listing_rows(&mut listing, poset.enumerate_monotone_maps(2, cap)?, true);
            }
        }
    }
    if let Some(path) = &args.list {
        io::write_text(path, &listing)?;
    }
    Ok(())
}

pub fn sample(args: SampleArgs) -> Result<()> {
    if !io::is_raw(&args.input)? {
        return Err(CliError::Config(
            "sampling needs a raw CSV with a worker_id column".into(),
        ));
    }
    let dataset = io::read_raw(&args.input, args.ratings)?;
    let sub = subsample_responses(&dataset, args.m, args.seed)?;
    let rows = sub.raw().expect("subsampled data keeps raw rows");
    io::write_text(&args.output, &io::raw_csv(rows))?;
    Ok(())
}

fn matrix_from_json(rows: &[Vec<f64>]) -> Result<ConfusionMatrix> {
    ConfusionMatrix::new(rows.to_vec()).map_err(Into::into)
}

/// Log-likelihood of `labels` under `p`, bucket by bucket when the labeling
/// is bucketized (as every estimator reports) and item by item otherwise.
fn rescore(dataset: &Dataset, labels: &Labels, p: &ConfusionMatrix) -> Result<LogLikelihood> {
    let buckets = Buckets::from_dataset(dataset);
    match Mapping::from_labels(&buckets, labels) {
        Some(f) => Ok(log_likelihood_given_matrix(dataset, &f, p)?),
        None => Ok(labels_log_likelihood(dataset, labels, p)?),
    }
}

pub fn check(args: CheckArgs) -> Result<()> {
    let result = io::read_result(&args.result)?;
    if result.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {}",
            result.schema_version
        )));
    }
    let mode: Mode = result.mode.parse()?;
    let dataset = io::read_dataset(&args.input, Some(result.ratings))?;
    let binary = mode != Mode::Rating;
    if result.mapping.len() != dataset.len() {
        return Err(crowd_mle::Error::MappingMismatch(format!(
            "result maps {} items, input has {}",
            result.mapping.len(),
            dataset.len()
        ))
        .into());
    }
    let mut labels = vec![0u8; dataset.len()];
    for entry in &result.mapping {
        let k = dataset.position(&entry.item_id).ok_or_else(|| {
            crowd_mle::Error::MappingMismatch(format!("unknown item `{}`", entry.item_id))
        })?;
        let v = if binary { entry.value + 1 } else { entry.value };
        if v < 1 || v as usize > dataset.ratings() {
            return Err(crowd_mle::Error::MappingMismatch(format!(
                "value {} out of range",
                entry.value
            ))
            .into());
        }
        labels[k] = v as u8;
    }
    let labels = Labels(labels);
    let p = matrix_from_json(&result.matrix)?;
    let recomputed = match (&result.regular_matrix, mode) {
        (Some(regular), Mode::TwoClass) => {
            two_class_labels_log_likelihood(&dataset, &labels, &p, &matrix_from_json(regular)?)?
        }
        _ => rescore(&dataset, &labels, &p)?,
    };
    let reported = io::loglik_from_json(&result.log_likelihood).ok_or_else(|| {
        CliError::Config("log_likelihood is neither a number nor \"-inf\"".into())
    })?;
    let agree = if reported.is_finite() || recomputed.is_finite() {
        (reported.value() - recomputed.value()).abs() <= CHECK_TOLERANCE
    } else {
        reported.value() == recomputed.value()
    };
    println!("reported {}", reported.value());
    println!("recomputed {}", recomputed.value());
    if agree {
        println!("ok");
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "log-likelihood mismatch: reported {}, recomputed {}",
            reported.value(),
            recomputed.value()
        )))
    }
}
