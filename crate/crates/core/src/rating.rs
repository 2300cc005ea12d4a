//! Rating estimation over the dominance poset of populated buckets.

use crate::error::{Error, Result};
use crate::model::{
    bucket_log_likelihood, bucketize, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood,
    Mapping, ResponseCounts,
};
use crate::poset::{build_rating_poset, dominates, BucketPoset};
use crate::search::{search, CountTable, SearchOptions};

/// One row per bucket: response counts (rating 1 first) times bucket size.
pub(crate) fn rating_table(buckets: &Buckets) -> CountTable {
    let r = buckets.ratings();
    let rows = buckets
        .iter()
        .map(|b| {
            let size = b.members.len() as u64;
            b.key
                .low_to_high()
                .iter()
                .map(|&v| v as u64 * size)
                .collect()
        })
        .collect();
    CountTable::new(r, vec![r], rows)
}

/// Closed-form matrix for mapping `f`: `p(i, j)` is the share of answers
/// `i` among all answers given to items mapped to `j`. Columns with no
/// mapped items are flagged undefined and filled uniformly.
pub fn rating_params(buckets: &Buckets, f: &Mapping) -> Result<ConfusionMatrix> {
    let values = f.values_for(buckets)?;
    if let Some(&v) = values.iter().find(|&&v| v as usize > buckets.ratings()) {
        return Err(Error::MappingMismatch(format!(
            "rating {v} exceeds {}",
            buckets.ratings()
        )));
    }
    Ok(params_for_values(buckets, &values))
}

pub(crate) fn params_for_values(buckets: &Buckets, values: &[u8]) -> ConfusionMatrix {
    let r = buckets.ratings();
    let table = rating_table(buckets);
    let tallies = table.tallies(values);
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

/// Likelihood of `f` under its own closed-form matrix.
pub fn rating_likelihood(buckets: &Buckets, f: &Mapping) -> Result<LogLikelihood> {
    let p = rating_params(buckets, f)?;
    let values = f.values_for(buckets)?;
    Ok(bucket_log_likelihood(buckets, &values, &p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingSolution {
    /// Bucket-level mapping over the populated buckets.
    pub mapping: Mapping,
    pub matrix: ConfusionMatrix,
    pub loglik: LogLikelihood,
    pub candidates_evaluated: u128,
    /// Item-level view of `mapping`.
    pub labels: Labels,
}

/// Dominance poset on the populated buckets, nodes in bucket order.
pub fn dominance_poset(buckets: &Buckets) -> BucketPoset<ResponseCounts> {
    BucketPoset::from_order_predicate(buckets.keys(), |a, b| {
        dominates(a, b).expect("buckets share ratings and total")
    })
    .expect("bucket keys are distinct")
}

/// Exhaustive search over dominance-consistent mappings with default options.
pub fn rating_opt(dataset: &Dataset) -> Result<RatingSolution> {
    rating_opt_with(dataset, &SearchOptions::default())
}

/// Scores every dominance-consistent mapping of the populated buckets and
/// returns the most likely one whose matrix is diagonally dominant (every
/// populated column peaks at its own rating). Ties go to the
/// lexicographically smallest assignment in bucket order.
pub fn rating_opt_with(dataset: &Dataset, options: &SearchOptions) -> Result<RatingSolution> {
    let r = dataset.ratings();
    let buckets = bucketize(dataset)?;
    let poset = dominance_poset(&buckets);
    let count = poset.count_monotone_maps_capped(r as u8, options.cap.max(1))?;
    if count > options.cap {
        return Err(Error::CapExceeded {
            what: "dominance-consistent mappings".into(),
            count,
            cap: options.cap,
        });
    }
    let table = rating_table(&buckets);
    let outcome = search(
        &poset.space(r as u8),
        &table,
        |t| table.diagonally_dominant(t),
        options.execution,
    );
    // The constant mapping onto the most frequent answer is always
    // dominance-consistent and diagonally dominant.
    let values = outcome
        .best
        .expect("a diagonally dominant mapping exists")
        .values;
    let matrix = params_for_values(&buckets, &values);
    let loglik = bucket_log_likelihood(&buckets, &values, &matrix);
    let mapping = Mapping::for_buckets(&buckets, values)?;
    let labels = mapping.labels(&buckets)?;
    Ok(RatingSolution {
        mapping,
        matrix,
        loglik,
        candidates_evaluated: outcome.evaluated,
        labels,
    })
}

/// Number of dominance-consistent mappings when every bucket of `m`
/// responses over `ratings` values is populated.
pub fn count_dominance_consistent(ratings: usize, m: u32) -> Result<u128> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    build_rating_poset(ratings, m)?.count_monotone_maps(ratings as u8)
}
