//! Exhaustive reference searches for certifying the estimators on small
//! instances. Every item-level labeling is scored with its own closed-form
//! parameters; restrictions are applied to those parameters after the fact.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::extensions::{two_class_counts, two_class_item_table, TwoClassBucket};
use crate::filtering::{params_for_values, FilterParams};
use crate::model::{
    bucket_log_likelihood, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood, Mapping,
};
use crate::rating::{params_for_values as rating_params_for_values, rating_table};
use crate::search::{search, CountTable, Space};

/// Default bound on the number of labelings an oracle will enumerate.
pub const DEFAULT_ORACLE_CAP: u128 = 20_000_000;

/// Which labelings take part in the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// Every item-level labeling.
    All,
    /// Item-level labelings whose error rates are at most 0.5 (binary).
    Reasonable,
    /// One label per bucket, no other constraint.
    Bucketized,
    /// Item-level labelings whose matrix peaks on the diagonal in every
    /// populated column. Coincides with `Reasonable` for two ratings.
    DiagonallyDominant,
    /// Every populated column peaks strictly on the diagonal (error rates
    /// below 0.5 for two ratings).
    StrictlyReasonable,
}

impl Restriction {
    fn admits(self, table: &CountTable, tallies: &[u64]) -> bool {
        match self {
            Restriction::All | Restriction::Bucketized => true,
            Restriction::Reasonable | Restriction::DiagonallyDominant => {
                table.diagonally_dominant(tallies)
            }
            Restriction::StrictlyReasonable => table.strictly_dominant(tallies),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub best_mapping: Labels,
    pub best_loglik: LogLikelihood,
    /// Number of labelings enumerated.
    pub search_space_size: u128,
    /// Number of labelings that passed the restriction.
    pub accepted: u128,
    pub restricted: Restriction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub cap: u128,
    pub execution: Execution,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ORACLE_CAP,
            execution: Execution::default(),
        }
    }
}

fn space_size(labels: usize, units: usize, cap: u128) -> Result<u128> {
    let mut size: u128 = 1;
    for _ in 0..units {
        size = size.saturating_mul(labels as u128);
    }
    if size > cap {
        return Err(Error::CapExceeded {
            what: "brute-force labelings".into(),
            count: size,
            cap,
        });
    }
    Ok(size)
}

/// Best labeling of independent units under `restriction`.
fn exhaustive(
    table: &CountTable,
    labels: u8,
    restriction: Restriction,
    options: &OracleOptions,
) -> Result<Option<(Vec<u8>, u128, u128)>> {
    let units = table.units();
    space_size(labels as usize, units, options.cap)?;
    let order: Vec<usize> = (0..units).collect();
    let parents = vec![Vec::new(); units];
    let space = Space {
        order: &order,
        parents: &parents,
        labels,
    };
    let outcome = search(
        &space,
        table,
        |t| restriction.admits(table, t),
        options.execution,
    );
    Ok(outcome
        .best
        .map(|b| (b.values, outcome.evaluated, outcome.accepted)))
}

/// One row per item: response counts, rating 1 first.
fn item_table(dataset: &Dataset) -> CountTable {
    let r = dataset.ratings();
    let rows = dataset
        .items()
        .iter()
        .map(|it| {
            it.responses
                .low_to_high()
                .iter()
                .map(|&v| v as u64)
                .collect()
        })
        .collect();
    CountTable::new(r, vec![r], rows)
}

/// Closed-form matrix of an item-level labeling; empty columns uniform.
fn item_params(dataset: &Dataset, labels: &Labels) -> ConfusionMatrix {
    let r = dataset.ratings();
    let tallies = item_table(dataset).tallies(&labels.0);
    let mut entries = vec![0.0; r * r];
    let mut defined = vec![true; r];
    for j in 0..r {
        let column = &tallies[j * r..(j + 1) * r];
        let total: u64 = column.iter().sum();
        for i in 0..r {
            entries[i * r + j] = if total == 0 {
                1.0 / r as f64
            } else {
                column[i] as f64 / total as f64
            };
        }
        defined[j] = total > 0;
    }
    ConfusionMatrix::from_parts(r, entries, defined)
}

/// `ln Pr(M | labels, p)` for an arbitrary item-level labeling.
pub fn labels_log_likelihood(
    dataset: &Dataset,
    labels: &Labels,
    p: &ConfusionMatrix,
) -> Result<LogLikelihood> {
    if labels.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            found: labels.len(),
        });
    }
    if p.ratings() != dataset.ratings() {
        return Err(Error::DimensionMismatch {
            expected: dataset.ratings(),
            found: p.ratings(),
        });
    }
    let mut total = 0.0;
    for (item, &j) in dataset.items().iter().zip(&labels.0) {
        for i in 1..=dataset.ratings() {
            let v = item.responses.count(i);
            if v == 0 {
                continue;
            }
            let prob = p.get(i, j as usize);
            if prob == 0.0 {
                return Ok(LogLikelihood::IMPOSSIBLE);
            }
            total += v as f64 * prob.ln();
        }
    }
    Ok(LogLikelihood(total))
}

/// Maximum over binary labelings. Item totals may vary.
pub fn brute_force_filter(dataset: &Dataset, restrict: Restriction) -> Result<OracleReport> {
    brute_force_filter_with(dataset, restrict, &OracleOptions::default())
}

pub fn brute_force_filter_with(
    dataset: &Dataset,
    restrict: Restriction,
    options: &OracleOptions,
) -> Result<OracleReport> {
    if dataset.ratings() != 2 {
        return Err(Error::InvalidConfig(format!(
            "filter oracle needs binary responses, got {} rating values",
            dataset.ratings()
        )));
    }
    brute_force_rating_with(dataset, restrict, options)
}

/// Maximum over all `R^n` labelings (or `R^buckets` when bucketized).
pub fn brute_force_rating(dataset: &Dataset, restrict: Restriction) -> Result<OracleReport> {
    brute_force_rating_with(dataset, restrict, &OracleOptions::default())
}

pub fn brute_force_rating_with(
    dataset: &Dataset,
    restrict: Restriction,
    options: &OracleOptions,
) -> Result<OracleReport> {
    let r = dataset.ratings() as u8;
    if restrict == Restriction::Bucketized {
        let buckets = Buckets::from_dataset(dataset);
        let table = rating_table(&buckets);
        let (values, size, accepted) =
            exhaustive(&table, r, restrict, options)?.expect("unrestricted search has a best");
        let p = rating_params_for_values(&buckets, &values);
        let best_loglik = bucket_log_likelihood(&buckets, &values, &p);
        let best_mapping = Mapping::for_buckets(&buckets, values)?.labels(&buckets)?;
        return Ok(OracleReport {
            best_mapping,
            best_loglik,
            search_space_size: size,
            accepted,
            restricted: restrict,
        });
    }
    let table = item_table(dataset);
    let (values, size, accepted) = exhaustive(&table, r, restrict, options)?
        .ok_or_else(|| Error::InvalidConfig("no labeling satisfies the restriction".into()))?;
    let best_mapping = Labels(values);
    let p = item_params(dataset, &best_mapping);
    let best_loglik = labels_log_likelihood(dataset, &best_mapping, &p)?;
    Ok(OracleReport {
        best_mapping,
        best_loglik,
        search_space_size: size,
        accepted,
        restricted: restrict,
    })
}

/// Maximum over binary labelings of two-class data, scoring each class with
/// its own error rates. Reasonable means both classes are better than random.
pub fn brute_force_two_class(
    dataset: &Dataset,
    restrict: Restriction,
    options: &OracleOptions,
) -> Result<OracleReport> {
    if restrict == Restriction::Bucketized {
        return Err(Error::InvalidConfig(
            "the two-class oracle works at item level".into(),
        ));
    }
    let items = two_class_counts(dataset)?;
    let table = two_class_item_table(&items);
    let found = exhaustive(&table, 2, restrict, options)?;
    let (values, size, accepted) = found.ok_or_else(|| {
        Error::InvalidConfig("no labeling keeps both classes better than random".into())
    })?;
    let class_params = |pick: fn(&TwoClassBucket) -> (u32, u32)| {
        let mut tallies = [[0u64; 2]; 2];
        for (b, &v) in items.iter().zip(&values) {
            let (yes, no) = pick(b);
            tallies[v as usize - 1][0] += no as u64;
            tallies[v as usize - 1][1] += yes as u64;
        }
        FilterParams::from_tallies(tallies)
    };
    let expert = class_params(|b| (b.yes_expert, b.no_expert)).matrix();
    let regular = class_params(|b| (b.yes_regular, b.no_regular)).matrix();
    let mut total = 0.0;
    let mut impossible = false;
    for (b, &j) in items.iter().zip(&values) {
        for (ones, zeros, p) in [
            (b.yes_expert, b.no_expert, &expert),
            (b.yes_regular, b.no_regular, &regular),
        ] {
            for (i, v) in [(1, zeros), (2, ones)] {
                if v == 0 {
                    continue;
                }
                let prob = p.get(i, j as usize);
                if prob == 0.0 {
                    impossible = true;
                } else {
                    total += v as f64 * prob.ln();
                }
            }
        }
    }
    Ok(OracleReport {
        best_mapping: Labels(values),
        best_loglik: if impossible {
            LogLikelihood::IMPOSSIBLE
        } else {
            LogLikelihood(total)
        },
        search_space_size: size,
        accepted,
        restricted: restrict,
    })
}

/// Scans a square grid of `(e0, e1)` pairs in `[0, 1]^2` for binary mapping
/// `f` and returns the best grid likelihood alongside the closed-form one.
pub fn grid_verify_params(
    buckets: &Buckets,
    f: &Mapping,
    grid_step: f64,
) -> Result<(LogLikelihood, LogLikelihood)> {
    if buckets.ratings() != 2 {
        return Err(Error::InvalidConfig("grid check is binary only".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidConfig(format!(
            "grid step must lie in (0, 0.1], got {grid_step}"
        )));
    }
    let values = f.values_for(buckets)?;
    let closed = bucket_log_likelihood(
        buckets,
        &values,
        &params_for_values(buckets, &values).matrix(),
    );
    let steps = (1.0 / grid_step).round() as usize;
    let point = |k: usize| (k as f64 * grid_step).min(1.0);
    let mut best = LogLikelihood::IMPOSSIBLE;
    for a in 0..=steps {
        for b in 0..=steps {
            let p = ConfusionMatrix::from_error_rates(point(a), point(b))?;
            let ll = bucket_log_likelihood(buckets, &values, &p);
            if ll.value() > best.value() {
                best = ll;
            }
        }
    }
    Ok((best, closed))
}
