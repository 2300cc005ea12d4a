//! Domain types shared by every estimator: response tallies, datasets,
//! bucket partitions, mappings, confusion matrices and log-likelihoods.
//!
//! Ratings are 1-based everywhere inside the crate. Filtering data is stored
//! as a two-rating problem where rating 1 is the answer "0" and rating 2 is
//! the answer "1"; translation to 0/1 happens only at the I/O boundary.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Per-item tally of worker ratings, stored high-to-low as `(v_R, ..., v_1)`.
///
/// The derived ordering is lexicographic on that tuple, so sorting in
/// descending order puts `(m, 0, ..., 0)` first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResponseCounts {
    counts: Vec<u32>,
}

impl ResponseCounts {
    /// Builds from a high-to-low tuple `(v_R, ..., v_1)`.
    pub fn new(high_to_low: Vec<u32>) -> Self {
        Self {
            counts: high_to_low,
        }
    }

    /// Builds from counts indexed by rating `1..=R`.
    pub fn from_low_to_high(low_to_high: &[u32]) -> Self {
        Self::new(low_to_high.iter().rev().copied().collect())
    }

    /// Binary response set: `ones` answers of "1" and `zeros` answers of "0".
    pub fn binary(ones: u32, zeros: u32) -> Self {
        Self::new(vec![ones, zeros])
    }

    pub fn ratings(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Number of responses equal to `rating` (1-based).
    pub fn count(&self, rating: usize) -> u32 {
        self.counts[self.counts.len() - rating]
    }

    /// The high-to-low tuple.
    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    /// Counts indexed by rating - 1.
    pub fn low_to_high(&self) -> Vec<u32> {
        self.counts.iter().rev().copied().collect()
    }

    /// "1" answers of a binary response set.
    pub fn ones(&self) -> u32 {
        self.count(2)
    }

    /// "0" answers of a binary response set.
    pub fn zeros(&self) -> u32 {
        self.count(1)
    }
}

impl fmt::Display for ResponseCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.counts.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: String,
    pub responses: ResponseCounts,
}

impl Item {
    pub fn new(id: impl Into<String>, responses: ResponseCounts) -> Self {
        Self {
            id: id.into(),
            responses,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkerClass {
    Expert,
    Regular,
}

/// One raw `(item, worker, rating)` observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub item: String,
    pub worker: String,
    pub rating: usize,
    pub class: Option<WorkerClass>,
}

/// Item-level rating assignment, aligned with a dataset's item order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels(pub Vec<u8>);

impl Labels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// Items with their response tallies, plus optional ground truth and raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ratings: usize,
    items: Vec<Item>,
    truth: Option<Labels>,
    raw: Option<Vec<RawResponse>>,
}

impl Dataset {
    pub fn new(ratings: usize, items: Vec<Item>) -> Result<Self> {
        if ratings < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 rating values, got {ratings}"
            )));
        }
        let mut seen = HashMap::with_capacity(items.len());
        for item in &items {
            if item.responses.ratings() != ratings {
                return Err(Error::DimensionMismatch {
                    expected: ratings,
                    found: item.responses.ratings(),
                });
            }
            if seen.insert(item.id.as_str(), ()).is_some() {
                return Err(Error::Malformed(format!("duplicate item id `{}`", item.id)));
            }
        }
        Ok(Self {
            ratings,
            items,
            truth: None,
            raw: None,
        })
    }

    /// Convenience constructor for binary data from `(ones, zeros)` pairs.
    /// Items are named `I1, I2, ...`.
    pub fn binary(pairs: &[(u32, u32)]) -> Self {
        let items = pairs
            .iter()
            .enumerate()
            .map(|(k, &(ones, zeros))| {
                Item::new(format!("I{}", k + 1), ResponseCounts::binary(ones, zeros))
            })
            .collect();
        Self::new(2, items).expect("binary dataset is well-formed")
    }

    /// Aggregates raw rows; items appear in order of first occurrence.
    pub fn from_raw(ratings: usize, rows: Vec<RawResponse>) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut ids: Vec<String> = Vec::new();
        let mut tallies: Vec<Vec<u32>> = Vec::new();
        for row in &rows {
            if row.rating < 1 || row.rating > ratings {
                return Err(Error::RatingOutOfRange {
                    item: row.item.clone(),
                    rating: row.rating,
                    ratings,
                });
            }
            let k = *index.entry(row.item.as_str()).or_insert_with(|| {
                ids.push(row.item.clone());
                tallies.push(vec![0; ratings]);
                ids.len() - 1
            });
            tallies[k][row.rating - 1] += 1;
        }
        let items = ids
            .into_iter()
            .zip(tallies)
            .map(|(id, t)| Item::new(id, ResponseCounts::from_low_to_high(&t)))
            .collect();
        let mut dataset = Self::new(ratings, items)?;
        dataset.raw = Some(rows);
        Ok(dataset)
    }

    pub fn with_truth(mut self, truth: Labels) -> Result<Self> {
        if truth.len() != self.items.len() {
            return Err(Error::Malformed(format!(
                "truth has {} labels for {} items",
                truth.len(),
                self.items.len()
            )));
        }
        for (item, &t) in self.items.iter().zip(&truth.0) {
            if t < 1 || t as usize > self.ratings {
                return Err(Error::RatingOutOfRange {
                    item: item.id.clone(),
                    rating: t as usize,
                    ratings: self.ratings,
                });
            }
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn ratings(&self) -> usize {
        self.ratings
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn truth(&self) -> Option<&Labels> {
        self.truth.as_ref()
    }

    pub fn raw(&self) -> Option<&[RawResponse]> {
        self.raw.as_deref()
    }

    /// Position of an item id.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// The common number of responses per item, `None` for an empty dataset.
    pub fn fixed_total(&self) -> Result<Option<u32>> {
        let Some(first) = self.items.first() else {
            return Ok(None);
        };
        let m = first.responses.total();
        for item in &self.items[1..] {
            let found = item.responses.total();
            if found != m {
                return Err(Error::InconsistentTotal {
                    item: item.id.clone(),
                    expected: m,
                    found,
                });
            }
        }
        Ok(Some(m))
    }

    pub fn max_total(&self) -> u32 {
        self.items
            .iter()
            .map(|it| it.responses.total())
            .max()
            .unwrap_or(0)
    }

    /// Sub-dataset with the given item positions (truth carried along).
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let items = positions.iter().map(|&k| self.items[k].clone()).collect();
        let truth = self
            .truth
            .as_ref()
            .map(|t| Labels(positions.iter().map(|&k| t.0[k]).collect()));
        Dataset {
            ratings: self.ratings,
            items,
            truth,
            raw: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub key: ResponseCounts,
    /// Item positions in the source dataset, ascending.
    pub members: Vec<usize>,
}

/// Partition of a dataset's items by identical response tallies, in
/// descending lexicographic order of `(v_R, ..., v_1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets {
    ratings: usize,
    buckets: Vec<Bucket>,
    item_bucket: Vec<usize>,
}

/// Groups items with identical responses. Requires every item to carry the
/// same number of responses.
pub fn bucketize(dataset: &Dataset) -> Result<Buckets> {
    dataset.fixed_total()?;
    Ok(Buckets::from_dataset(dataset))
}

impl Buckets {
    /// Bucketizes without the fixed-total requirement.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut groups: HashMap<&ResponseCounts, Vec<usize>> = HashMap::new();
        for (k, item) in dataset.items().iter().enumerate() {
            groups.entry(&item.responses).or_default().push(k);
        }
        let mut buckets: Vec<Bucket> = groups
            .into_iter()
            .map(|(key, members)| Bucket {
                key: key.clone(),
                members,
            })
            .collect();
        buckets.sort_by(|a, b| b.key.cmp(&a.key));
        let mut item_bucket = vec![0; dataset.len()];
        for (b, bucket) in buckets.iter().enumerate() {
            for &k in &bucket.members {
                item_bucket[k] = b;
            }
        }
        Self {
            ratings: dataset.ratings(),
            buckets,
            item_bucket,
        }
    }

    pub fn ratings(&self) -> usize {
        self.ratings
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Bucket> {
        self.buckets.iter()
    }

    pub fn get(&self, b: usize) -> &Bucket {
        &self.buckets[b]
    }

    pub fn keys(&self) -> Vec<ResponseCounts> {
        self.buckets.iter().map(|b| b.key.clone()).collect()
    }

    /// Bucket index of the item at `position`.
    pub fn bucket_of(&self, position: usize) -> usize {
        self.item_bucket[position]
    }

    pub fn item_count(&self) -> usize {
        self.item_bucket.len()
    }

    /// Bucket contents as `(key, item ids)` pairs.
    pub fn with_ids<'a>(&'a self, dataset: &'a Dataset) -> Vec<(&'a ResponseCounts, Vec<&'a str>)> {
        self.buckets
            .iter()
            .map(|b| {
                let ids = b
                    .members
                    .iter()
                    .map(|&k| dataset.items()[k].id.as_str())
                    .collect();
                (&b.key, ids)
            })
            .collect()
    }
}

/// Assignment of a rating to every bucket key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    keys: Vec<ResponseCounts>,
    values: Vec<u8>,
}

impl Mapping {
    pub fn new(keys: Vec<ResponseCounts>, values: Vec<u8>) -> Result<Self> {
        if keys.len() != values.len() {
            return Err(Error::MappingMismatch(format!(
                "{} keys but {} values",
                keys.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|&v| v == 0) {
            return Err(Error::MappingMismatch(format!(
                "bucket {} mapped to rating 0",
                keys[k]
            )));
        }
        Ok(Self { keys, values })
    }

    /// Mapping over the buckets of `buckets`, values in bucket order.
    pub fn for_buckets(buckets: &Buckets, values: Vec<u8>) -> Result<Self> {
        let ratings = buckets.ratings();
        if let Some(&v) = values.iter().find(|&&v| v as usize > ratings) {
            return Err(Error::MappingMismatch(format!(
                "rating {v} exceeds {ratings}"
            )));
        }
        Self::new(buckets.keys(), values)
    }

    pub fn constant(buckets: &Buckets, rating: u8) -> Self {
        Self::for_buckets(buckets, vec![rating; buckets.len()]).expect("constant mapping")
    }

    /// Bucket-level mapping induced by an item-level assignment, if the
    /// assignment is constant on every bucket.
    pub fn from_labels(buckets: &Buckets, labels: &Labels) -> Option<Self> {
        let mut values = Vec::with_capacity(buckets.len());
        for b in buckets.iter() {
            let v = labels.0[b.members[0]];
            if b.members.iter().any(|&k| labels.0[k] != v) {
                return None;
            }
            values.push(v);
        }
        Self::for_buckets(buckets, values).ok()
    }

    pub fn keys(&self) -> &[ResponseCounts] {
        &self.keys
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_of(&self, key: &ResponseCounts) -> Option<u8> {
        self.keys
            .iter()
            .position(|k| k == key)
            .map(|p| self.values[p])
    }

    /// Values aligned with `buckets`, failing if some bucket is not covered.
    pub fn values_for(&self, buckets: &Buckets) -> Result<Vec<u8>> {
        if self.keys.len() == buckets.len()
            && self
                .keys
                .iter()
                .zip(buckets.iter())
                .all(|(k, b)| *k == b.key)
        {
            return Ok(self.values.clone());
        }
        let lookup: HashMap<&ResponseCounts, u8> =
            self.keys.iter().zip(self.values.iter().copied()).collect();
        buckets
            .iter()
            .map(|b| {
                lookup.get(&b.key).copied().ok_or_else(|| {
                    Error::MappingMismatch(format!("no rating for bucket {}", b.key))
                })
            })
            .collect()
    }

    /// Expands to an item-level assignment.
    pub fn labels(&self, buckets: &Buckets) -> Result<Labels> {
        let values = self.values_for(buckets)?;
        Ok(Labels(
            (0..buckets.item_count())
                .map(|k| values[buckets.bucket_of(k)])
                .collect(),
        ))
    }
}

/// Column-stochastic response probability matrix: `p(i, j)` is the chance a
/// worker answers `i` for an item whose true rating is `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    ratings: usize,
    entries: Vec<f64>,
    defined: Vec<bool>,
}

const COLUMN_SUM_TOLERANCE: f64 = 1e-12;

impl ConfusionMatrix {
    /// From rows `rows[i-1][j-1] = p(i, j)`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        if r < 2 {
            return Err(Error::InvalidMatrix(format!("{r}x{r} is too small")));
        }
        if let Some(row) = rows.iter().find(|row| row.len() != r) {
            return Err(Error::InvalidMatrix(format!(
                "row of length {} in a {r}x{r} matrix",
                row.len()
            )));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_entries(r, entries)
    }

    fn from_entries(ratings: usize, entries: Vec<f64>) -> Result<Self> {
        for (k, &x) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidMatrix(format!(
                    "p({},{}) = {x} is not a probability",
                    k / ratings + 1,
                    k % ratings + 1
                )));
            }
        }
        for j in 0..ratings {
            let sum: f64 = (0..ratings).map(|i| entries[i * ratings + j]).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(Error::InvalidMatrix(format!(
                    "column {} sums to {sum}",
                    j + 1
                )));
            }
        }
        Ok(Self {
            ratings,
            entries,
            defined: vec![true; ratings],
        })
    }

    /// From columns `columns[j-1][i-1] = p(i, j)`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let r = columns.len();
        let rows = (0..r)
            .map(|i| {
                columns
                    .iter()
                    .map(|c| c.get(i).copied().unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn identity(ratings: usize) -> Self {
        let mut entries = vec![0.0; ratings * ratings];
        for i in 0..ratings {
            entries[i * ratings + i] = 1.0;
        }
        Self {
            ratings,
            entries,
            defined: vec![true; ratings],
        }
    }

    pub fn uniform(ratings: usize) -> Self {
        Self {
            ratings,
            entries: vec![1.0 / ratings as f64; ratings * ratings],
            defined: vec![true; ratings],
        }
    }

    /// Binary matrix from false-positive rate `e0 = p(1|0)` and
    /// false-negative rate `e1 = p(0|1)`.
    pub fn from_error_rates(e0: f64, e1: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - e0, e1], vec![e0, 1.0 - e1]])
    }

    pub(crate) fn from_parts(ratings: usize, entries: Vec<f64>, defined: Vec<bool>) -> Self {
        Self {
            ratings,
            entries,
            defined,
        }
    }

    pub fn ratings(&self) -> usize {
        self.ratings
    }

    /// `p(i, j)`, both 1-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i - 1) * self.ratings + (j - 1)]
    }

    /// Column `j` as a distribution over responses `1..=R`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (1..=self.ratings).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.ratings)
            .map(|c| c.to_vec())
            .collect()
    }

    /// False when no item was assigned rating `j` when the matrix was
    /// estimated, so the column is a conventional filler.
    pub fn is_column_defined(&self, j: usize) -> bool {
        self.defined[j - 1]
    }

    pub fn undefined_columns(&self) -> Vec<bool> {
        self.defined.iter().map(|d| !d).collect()
    }

    /// `(e0, e1)` of a binary matrix.
    pub fn error_rates(&self) -> Option<(f64, f64)> {
        (self.ratings == 2).then(|| (self.get(2, 1), self.get(1, 2)))
    }

    /// Every defined column has its largest entry on the diagonal.
    pub fn is_diagonally_dominant(&self) -> bool {
        (1..=self.ratings).all(|j| {
            !self.is_column_defined(j)
                || (1..=self.ratings).all(|i| self.get(j, j) >= self.get(i, j))
        })
    }
}

/// Natural-log likelihood; `-inf` when some response has probability zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood(pub f64);

impl LogLikelihood {
    pub const CERTAIN: LogLikelihood = LogLikelihood(0.0);
    pub const IMPOSSIBLE: LogLikelihood = LogLikelihood(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn likelihood(self) -> f64 {
        self.0.exp()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl PartialOrd for LogLikelihood {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl fmt::Display for LogLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::NEG_INFINITY {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// `ln Pr(M | f, p)`: sum over items and ratings of `v_i(I) ln p(i, f(I))`,
/// with `0 ln 0 = 0`.
pub fn log_likelihood_given_matrix(
    dataset: &Dataset,
    f: &Mapping,
    p: &ConfusionMatrix,
) -> Result<LogLikelihood> {
    if p.ratings() != dataset.ratings() {
        return Err(Error::DimensionMismatch {
            expected: dataset.ratings(),
            found: p.ratings(),
        });
    }
    let buckets = Buckets::from_dataset(dataset);
    let values = f.values_for(&buckets)?;
    Ok(bucket_log_likelihood(&buckets, &values, p))
}

/// Bucket-level evaluation shared by every estimator so that reported
/// likelihoods are reproducible bit-for-bit from `(mapping, matrix)`.
pub(crate) fn bucket_log_likelihood(
    buckets: &Buckets,
    values: &[u8],
    p: &ConfusionMatrix,
) -> LogLikelihood {
    let mut total = 0.0;
    for (bucket, &j) in buckets.iter().zip(values) {
        let size = bucket.members.len() as f64;
        for i in 1..=buckets.ratings() {
            let v = bucket.key.count(i);
            if v == 0 {
                continue;
            }
            let prob = p.get(i, j as usize);
            if prob == 0.0 {
                return LogLikelihood::IMPOSSIBLE;
            }
            total += size * v as f64 * prob.ln();
        }
    }
    LogLikelihood(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_items() -> Dataset {
        Dataset::binary(&[(3, 0), (1, 2), (2, 1), (2, 1)])
    }

    fn reference_matrix() -> ConfusionMatrix {
        ConfusionMatrix::new(vec![
            vec![0.7, 0.1, 0.2],
            vec![0.2, 0.8, 0.2],
            vec![0.1, 0.1, 0.6],
        ])
        .unwrap()
    }

    #[test]
    fn bucketize_groups_identical_tallies() {
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let listed: Vec<(String, Vec<&str>)> = buckets
            .with_ids(&ds)
            .into_iter()
            .map(|(k, ids)| (k.to_string(), ids))
            .collect();
        assert_eq!(
            listed,
            vec![
                ("(3,0)".to_string(), vec!["I1"]),
                ("(2,1)".to_string(), vec!["I3", "I4"]),
                ("(1,2)".to_string(), vec!["I2"]),
            ]
        );
    }

    #[test]
    fn bucketize_edge_cases() {
        let empty = Dataset::new(2, vec![]).unwrap();
        assert!(bucketize(&empty).unwrap().is_empty());

        let items = (0..500)
            .map(|k| Item::new(format!("x{k}"), ResponseCounts::new(vec![3, 0, 0])))
            .collect();
        let same = Dataset::new(3, items).unwrap();
        let buckets = bucketize(&same).unwrap();
        assert_eq!(buckets.len(), 1);
        assert_eq!(buckets.get(0).members.len(), 500);
    }

    #[test]
    fn bucketize_rejects_mixed_totals() {
        let ds = Dataset::binary(&[(3, 0), (1, 1)]);
        match bucketize(&ds) {
            Err(Error::InconsistentTotal {
                item,
                expected,
                found,
            }) => {
                assert_eq!(item, "I2");
                assert_eq!((expected, found), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worked_likelihood_example() {
        // I1 got one "3" and one "2"; I2 one "3" and one "1"; both mapped to 2.
        let ds = Dataset::new(
            3,
            vec![
                Item::new("I1", ResponseCounts::new(vec![1, 1, 0])),
                Item::new("I2", ResponseCounts::new(vec![1, 0, 1])),
            ],
        )
        .unwrap();
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::constant(&buckets, 2);
        let ll = log_likelihood_given_matrix(&ds, &f, &reference_matrix()).unwrap();
        assert!((ll.value() - 8e-4f64.ln()).abs() < 1e-12);
        assert!((ll.likelihood() - 8e-4).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_has_certain_likelihood() {
        let ds = Dataset::new(3, vec![]).unwrap();
        let f = Mapping::new(vec![], vec![]).unwrap();
        let ll = log_likelihood_given_matrix(&ds, &f, &reference_matrix()).unwrap();
        assert_eq!(ll, LogLikelihood::CERTAIN);
    }

    #[test]
    fn four_items_likelihood_with_fixed_rates() {
        // Filter values (1,0,1,1), i.e. ratings (2,1,2,2), with e0 = 1/3, e1 = 2/9.
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::from_labels(&buckets, &Labels(vec![2, 1, 2, 2])).unwrap();
        let p = ConfusionMatrix::from_error_rates(1.0 / 3.0, 2.0 / 9.0).unwrap();
        let ll = log_likelihood_given_matrix(&ds, &f, &p).unwrap();
        let per_item = [
            (7.0f64 / 9.0).powi(3),
            (1.0 / 3.0) * (2.0f64 / 3.0).powi(2),
            (7.0f64 / 9.0).powi(2) * (2.0 / 9.0),
            (7.0f64 / 9.0).powi(2) * (2.0 / 9.0),
        ];
        let expected: f64 = per_item.iter().map(|x| x.ln()).sum();
        assert!((ll.value() - expected).abs() < 1e-12);
    }

    #[test]
    fn four_items_likelihood_with_swapped_rates() {
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::from_labels(&buckets, &Labels(vec![2, 1, 2, 2])).unwrap();
        let p = ConfusionMatrix::from_error_rates(2.0 / 9.0, 1.0 / 3.0).unwrap();
        let ll = log_likelihood_given_matrix(&ds, &f, &p).unwrap();
        let expected = (8.0 / 27.0) * (98.0 / 729.0) * (4.0 / 27.0) * (4.0 / 27.0);
        assert!((ll.likelihood() - expected).abs() < 1e-15);
        assert!((expected - 8.743e-4).abs() < 1e-7);
    }

    #[test]
    fn zero_probability_response_is_impossible() {
        let ds = Dataset::binary(&[(2, 1)]);
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::constant(&buckets, 2);
        let ll = log_likelihood_given_matrix(&ds, &f, &ConfusionMatrix::identity(2)).unwrap();
        assert_eq!(ll, LogLikelihood::IMPOSSIBLE);
        assert_eq!(ll.to_string(), "-inf");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ds = four_items();
        let buckets = bucketize(&ds).unwrap();
        let f = Mapping::constant(&buckets, 1);
        assert!(matches!(
            log_likelihood_given_matrix(&ds, &f, &reference_matrix()),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn matrix_validation() {
        assert!(ConfusionMatrix::new(vec![vec![0.5, 0.5], vec![0.6, 0.5]]).is_err());
        assert!(ConfusionMatrix::new(vec![vec![1.2, 0.5], vec![-0.2, 0.5]]).is_err());
        let p = reference_matrix();
        assert_eq!(p.column(1), vec![0.7, 0.2, 0.1]);
        assert!(p.is_diagonally_dominant());
    }

    #[test]
    fn raw_rows_aggregate_to_counts() {
        let rows = vec![
            RawResponse {
                item: "a".into(),
                worker: "w1".into(),
                rating: 3,
                class: None,
            },
            RawResponse {
                item: "b".into(),
                worker: "w1".into(),
                rating: 1,
                class: None,
            },
            RawResponse {
                item: "a".into(),
                worker: "w2".into(),
                rating: 2,
                class: None,
            },
        ];
        let ds = Dataset::from_raw(3, rows).unwrap();
        assert_eq!(ds.items()[0].responses, ResponseCounts::new(vec![1, 1, 0]));
        assert_eq!(ds.items()[1].responses, ResponseCounts::new(vec![0, 0, 1]));
        let bad = vec![RawResponse {
            item: "a".into(),
            worker: "w".into(),
            rating: 4,
            class: None,
        }];
        assert!(matches!(
            Dataset::from_raw(3, bad),
            Err(Error::RatingOutOfRange { .. })
        ));
    }
}
