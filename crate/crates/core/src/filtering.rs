//! Binary filtering: closed-form error rates and the cut-point estimator.
//!
//! With two answers the dominance order on buckets is a chain, from
//! `(m, 0)` (all workers said "1") down to `(0, m)`. Its order-preserving
//! labelings are the `m + 2` cut-point mappings. The best reasonable one
//! among them is the maximum-likelihood mapping among all reasonable
//! mappings. Cut-points themselves need not be reasonable: on
//! `(3,0), (1,2), (2,1), (2,1)` the cut at `c = 1` has `e0 = 5/9`.

use crate::error::{Error, Result};
use crate::model::{
    bucket_log_likelihood, bucketize, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood,
    Mapping, ResponseCounts,
};
use crate::poset::compositions;
use crate::rating::rating_table;
use crate::search::Best;

/// Maximum-likelihood error rates for a fixed mapping.
///
/// `e0` is the share of "1" answers on items mapped to "0"; `e1` the share
/// of "0" answers on items mapped to "1". A rate with no supporting items is
/// flagged undefined and set to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    pub e0: f64,
    pub e1: f64,
    pub defined_e0: bool,
    pub defined_e1: bool,
    // (answers "0", answers "1") summed over items mapped to 0, then to 1.
    tallies: [[u64; 2]; 2],
}

impl FilterParams {
    pub(crate) fn from_tallies(tallies: [[u64; 2]; 2]) -> Self {
        let rate = |wrong: u64, total: u64| {
            if total == 0 {
                (0.0, false)
            } else {
                (wrong as f64 / total as f64, true)
            }
        };
        let [t0, t1] = tallies;
        let (e0, defined_e0) = rate(t0[1], t0[0] + t0[1]);
        let (e1, defined_e1) = rate(t1[0], t1[0] + t1[1]);
        Self {
            e0,
            e1,
            defined_e0,
            defined_e1,
            tallies,
        }
    }

    /// The 2x2 response matrix (rating 1 is "0", rating 2 is "1"). Defined
    /// columns are the empirical answer frequencies.
    pub fn matrix(&self) -> ConfusionMatrix {
        let column = |t: [u64; 2], diag: usize| {
            let total = t[0] + t[1];
            if total == 0 {
                let mut c = [0.0; 2];
                c[diag] = 1.0;
                c
            } else {
                [t[0] as f64 / total as f64, t[1] as f64 / total as f64]
            }
        };
        let c0 = column(self.tallies[0], 0);
        let c1 = column(self.tallies[1], 1);
        ConfusionMatrix::from_parts(
            2,
            vec![c0[0], c1[0], c0[1], c1[1]],
            vec![self.defined_e0, self.defined_e1],
        )
    }

    /// Both rates at most 0.5; undefined rates count as 0.
    pub fn is_reasonable(&self) -> bool {
        self.e0 <= 0.5 && self.e1 <= 0.5
    }
}

fn require_binary(ratings: usize) -> Result<()> {
    if ratings != 2 {
        return Err(Error::InvalidConfig(format!(
            "filtering needs binary responses, got {ratings} rating values"
        )));
    }
    Ok(())
}

/// Closed-form error rates for mapping `f` (ratings 1 = "0", 2 = "1").
pub fn filter_params(buckets: &Buckets, f: &Mapping) -> Result<FilterParams> {
    require_binary(buckets.ratings())?;
    let values = f.values_for(buckets)?;
    Ok(params_for_values(buckets, &values))
}

pub(crate) fn params_for_values(buckets: &Buckets, values: &[u8]) -> FilterParams {
    let mut tallies = [[0u64; 2]; 2];
    for (bucket, &v) in buckets.iter().zip(values) {
        let size = bucket.members.len() as u64;
        let t = &mut tallies[v as usize - 1];
        t[0] += size * bucket.key.zeros() as u64;
        t[1] += size * bucket.key.ones() as u64;
    }
    FilterParams::from_tallies(tallies)
}

/// Whether the error rates induced by `f` are both at most 0.5.
pub fn is_reasonable(f: &Mapping, buckets: &Buckets) -> Result<bool> {
    Ok(filter_params(buckets, f)?.is_reasonable())
}

/// Cut-point mapping `f^c` over the full chain of `m`-response buckets:
/// buckets with at least `m - c + 1` "1" answers map to "1" (rating 2),
/// the rest to "0" (rating 1). Valid for `0 <= c <= m + 1`.
pub fn cut_point_mapping(c: u32, m: u32) -> Result<Mapping> {
    if c > m + 1 {
        return Err(Error::InvalidConfig(format!(
            "cut-point {c} outside 0..={}",
            m + 1
        )));
    }
    let keys = compositions(2, m);
    let values = keys.iter().map(|k| cut_value(k, c, m)).collect();
    Mapping::new(keys, values)
}

fn cut_value(key: &ResponseCounts, c: u32, m: u32) -> u8 {
    if key.ones() + c > m {
        2
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSolution {
    /// Bucket-level mapping over the populated buckets.
    pub mapping: Mapping,
    pub params: FilterParams,
    pub loglik: LogLikelihood,
    /// The winning cut-point `c`.
    pub cut_point: u32,
    pub candidates_evaluated: u128,
    /// Item-level view of `mapping`.
    pub labels: Labels,
}

impl FilterSolution {
    pub fn matrix(&self) -> ConfusionMatrix {
        self.params.matrix()
    }
}

/// Scores all `m + 2` cut-point mappings and returns the most likely
/// reasonable one (both error rates at most 0.5), preferring the smallest
/// cut-point on ties.
pub fn filter_opt(dataset: &Dataset) -> Result<FilterSolution> {
    require_binary(dataset.ratings())?;
    let buckets = bucketize(dataset)?;
    let m = dataset.fixed_total()?.unwrap_or(0);
    let table = rating_table(&buckets);
    let xlx = table.xlogx();
    let mut best: Option<Best> = None;
    let mut cut_point = 0;
    for c in 0..=m + 1 {
        let values: Vec<u8> = buckets.iter().map(|b| cut_value(&b.key, c, m)).collect();
        let tallies = table.tallies(&values);
        let score = table.score(&tallies, &xlx);
        if !table.diagonally_dominant(&tallies) {
            continue;
        }
        let before = best.as_ref().map(|b| b.values.clone());
        Best::offer(&mut best, score, || true, &values);
        if best.as_ref().map(|b| &b.values) != before.as_ref() {
            cut_point = c;
        }
    }
    // One of the two constant mappings always has its only defined rate
    // at most 0.5.
    let values = best.expect("a reasonable cut-point exists").values;
    let params = params_for_values(&buckets, &values);
    let loglik = bucket_log_likelihood(&buckets, &values, &params.matrix());
    let mapping = Mapping::for_buckets(&buckets, values)?;
    let labels = mapping.labels(&buckets)?;
    Ok(FilterSolution {
        mapping,
        params,
        loglik,
        cut_point,
        candidates_evaluated: m as u128 + 2,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_items() -> Dataset {
        Dataset::binary(&[(3, 0), (1, 2), (2, 1), (2, 1)])
    }

    #[test]
    fn four_items_rates() {
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::from_labels(&buckets, &Labels(vec![2, 1, 2, 2])).unwrap();
        let p = filter_params(&buckets, &f).unwrap();
        assert_eq!((p.e0, p.e1), (1.0 / 3.0, 2.0 / 9.0));
        let mut pair = [p.e0, p.e1];
        pair.sort_by(f64::total_cmp);
        assert_eq!(pair, [2.0 / 9.0, 1.0 / 3.0]);
        assert!(is_reasonable(&f, &buckets).unwrap());
    }

    #[test]
    fn unanimous_ones_have_zero_false_negatives() {
        let ds = Dataset::binary(&[(3, 0), (3, 0)]);
        let buckets = bucketize(&ds).unwrap();
        let p = filter_params(&buckets, &Mapping::constant(&buckets, 2)).unwrap();
        assert_eq!(p.e1, 0.0);
        assert!(p.defined_e1);
        assert_eq!(p.e0, 0.0);
        assert!(!p.defined_e0);
        let flipped = Mapping::constant(&buckets, 1);
        assert_eq!(filter_params(&buckets, &flipped).unwrap().e0, 1.0);
        assert!(!is_reasonable(&flipped, &buckets).unwrap());
    }

    #[test]
    fn single_item_rate() {
        let ds = Dataset::binary(&[(1, 2)]);
        let buckets = bucketize(&ds).unwrap();
        let p = filter_params(&buckets, &Mapping::constant(&buckets, 2)).unwrap();
        assert_eq!(p.e1, 2.0 / 3.0);
        // Grid check of (1 - e) e^2.
        let grid_best = (0..=100)
            .map(|k| k as f64 / 100.0)
            .max_by(|a, b| ((1.0 - a) * a * a).total_cmp(&((1.0 - b) * b * b)))
            .unwrap();
        assert!((grid_best - 2.0 / 3.0).abs() <= 0.01);
    }

    #[test]
    fn cut_points() {
        let all_zero = cut_point_mapping(0, 3).unwrap();
        assert_eq!(all_zero.values(), &[1, 1, 1, 1]);
        let two = cut_point_mapping(2, 3).unwrap();
        assert_eq!(two.value_of(&ResponseCounts::binary(3, 0)), Some(2));
        assert_eq!(two.value_of(&ResponseCounts::binary(2, 1)), Some(2));
        assert_eq!(two.value_of(&ResponseCounts::binary(1, 2)), Some(1));
        assert_eq!(two.value_of(&ResponseCounts::binary(0, 3)), Some(1));
        assert_eq!(cut_point_mapping(4, 3).unwrap().values(), &[2, 2, 2, 2]);
        assert!(cut_point_mapping(5, 3).is_err());
    }

    #[test]
    fn opt_on_examples() {
        let sol = filter_opt(&four_items()).unwrap();
        assert_eq!(sol.candidates_evaluated, 5);
        assert_eq!(sol.cut_point, 2);
        assert_eq!(sol.labels, Labels(vec![2, 1, 2, 2]));
        assert!(sol.params.is_reasonable());

        let unanimous = Dataset::binary(&[(4, 0), (4, 0), (4, 0)]);
        let sol = filter_opt(&unanimous).unwrap();
        assert_eq!(sol.labels, Labels(vec![2, 2, 2]));
        assert_eq!(sol.params.e1, 0.0);
        assert_eq!(sol.loglik, LogLikelihood::CERTAIN);
    }

    #[test]
    fn some_cut_points_are_unreasonable() {
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let reasonable: Vec<bool> = (0..=4)
            .map(|c| {
                let f = cut_point_mapping(c, 3).unwrap();
                let f = Mapping::for_buckets(
                    &buckets,
                    buckets
                        .iter()
                        .map(|b| f.value_of(&b.key).unwrap())
                        .collect(),
                )
                .unwrap();
                is_reasonable(&f, &buckets).unwrap()
            })
            .collect();
        assert_eq!(reasonable, vec![false, false, true, true, true]);
    }

    #[test]
    fn rejects_non_binary() {
        let ds = Dataset::new(3, vec![]).unwrap();
        assert!(matches!(filter_opt(&ds), Err(Error::InvalidConfig(_))));
    }
}
