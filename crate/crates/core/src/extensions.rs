//! Binary filtering beyond a fixed response count: items with varying
//! numbers of answers, and answers split between expert and regular
//! workers with separate error rates.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::filtering::{params_for_values, FilterParams};
use crate::model::{
    bucket_log_likelihood, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood, Mapping,
    ResponseCounts, WorkerClass,
};
use crate::poset::{BucketPoset, DEFAULT_NODE_CAP};
use crate::rating::rating_table;
use crate::search::{search, CountTable, SearchOptions};

/// Binary bucket with `ones` answers of "1" and `zeros` answers of "0".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableBucket {
    pub ones: u32,
    pub zeros: u32,
}

impl VariableBucket {
    pub fn new(ones: u32, zeros: u32) -> Self {
        Self { ones, zeros }
    }

    /// More "1" answers and fewer "0" answers (reflexive).
    pub fn dominates(&self, other: &Self) -> bool {
        self.ones >= other.ones && self.zeros <= other.zeros
    }
}

/// All buckets with at most `m_max` answers, ordered by descending
/// `(ones, zeros)`, with covers `(i, j) > (i - 1, j)` and `(i, j) > (i, j + 1)`.
pub fn build_variable_poset(m_max: u32) -> Result<BucketPoset<VariableBucket>> {
    if m_max == 0 {
        return Err(Error::InvalidConfig("m_max must be at least 1".into()));
    }
    let mut nodes = Vec::new();
    for ones in (0..=m_max).rev() {
        for zeros in (0..=m_max - ones).rev() {
            nodes.push(VariableBucket::new(ones, zeros));
        }
    }
    let index: HashMap<VariableBucket, usize> =
        nodes.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut covers = Vec::new();
    for (a, b) in nodes.iter().enumerate() {
        if b.ones > 0 {
            covers.push((a, index[&VariableBucket::new(b.ones - 1, b.zeros)]));
        }
        if let Some(&below) = index.get(&VariableBucket::new(b.ones, b.zeros + 1)) {
            covers.push((a, below));
        }
    }
    BucketPoset::from_relation(nodes, &covers)
}

/// The boundary count `3 * 2^m - 1` alongside the exact number of monotone
/// 0/1 labelings of the variable poset. The former only bounds the latter.
pub fn count_variable_boundaries(m_max: u32) -> Result<(u128, u128)> {
    let formula = 3u128
        .checked_shl(m_max)
        .filter(|_| m_max < 120)
        .ok_or_else(|| Error::InvalidConfig(format!("m_max {m_max} too large")))?
        - 1;
    let exact = build_variable_poset(m_max)?.count_monotone_maps(2)?;
    Ok((formula, exact))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSolution {
    pub mapping: Mapping,
    pub params: FilterParams,
    pub loglik: LogLikelihood,
    pub candidates_evaluated: u128,
    pub labels: Labels,
}

/// Most likely reasonable mapping among those monotone under variable
/// dominance. Error rates pool each item's own answers.
pub fn variable_opt(dataset: &Dataset) -> Result<VariableSolution> {
    variable_opt_with(dataset, &SearchOptions::default())
}

pub fn variable_opt_with(dataset: &Dataset, options: &SearchOptions) -> Result<VariableSolution> {
    if dataset.ratings() != 2 {
        return Err(Error::InvalidConfig(format!(
            "variable-response filtering needs binary responses, got {} rating values",
            dataset.ratings()
        )));
    }
    let buckets = Buckets::from_dataset(dataset);
    let keys: Vec<VariableBucket> = buckets
        .iter()
        .map(|b| VariableBucket::new(b.key.ones(), b.key.zeros()))
        .collect();
    let poset = BucketPoset::from_order_predicate(keys, |a, b| a.dominates(b))?;
    let table = rating_table(&buckets);
    let outcome = run_search(&poset, &table, options)?;
    let values = outcome.0;
    let params = params_for_values(&buckets, &values);
    let loglik = bucket_log_likelihood(&buckets, &values, &params.matrix());
    let mapping = Mapping::for_buckets(&buckets, values)?;
    let labels = mapping.labels(&buckets)?;
    Ok(VariableSolution {
        mapping,
        params,
        loglik,
        candidates_evaluated: outcome.1,
        labels,
    })
}

/// Counts, then searches the reasonable monotone labelings of `poset`.
fn run_search<K: Clone + Eq + std::hash::Hash + std::fmt::Debug>(
    poset: &BucketPoset<K>,
    table: &CountTable,
    options: &SearchOptions,
) -> Result<(Vec<u8>, u128)> {
    let count = poset.count_monotone_maps_capped(2, options.cap.max(1))?;
    if count > options.cap {
        return Err(Error::CapExceeded {
            what: "dominance-consistent mappings".into(),
            count,
            cap: options.cap,
        });
    }
    let outcome = search(
        &poset.space(2),
        table,
        |t| table.diagonally_dominant(t),
        options.execution,
    );
    // All-"0" or all-"1" is reasonable for every class whose pooled
    // answers lean the matching way, but with two classes leaning opposite
    // ways neither need be; report that instead of panicking.
    let best = outcome.best.ok_or_else(|| {
        Error::InvalidConfig("no dominance-consistent mapping has better-than-random rates".into())
    })?;
    Ok((best.values, outcome.evaluated))
}

/// Expert and regular answer counts of one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TwoClassBucket {
    pub yes_expert: u32,
    pub no_expert: u32,
    pub yes_regular: u32,
    pub no_regular: u32,
}

impl TwoClassBucket {
    pub fn new(yes_expert: u32, no_expert: u32, yes_regular: u32, no_regular: u32) -> Self {
        Self {
            yes_expert,
            no_expert,
            yes_regular,
            no_regular,
        }
    }

    /// Both classes say "1" at least as often and "0" at most as often.
    pub fn dominates_componentwise(&self, other: &Self) -> bool {
        self.yes_expert >= other.yes_expert
            && self.yes_regular >= other.yes_regular
            && self.no_expert <= other.no_expert
            && self.no_regular <= other.no_regular
    }

    /// Same overall "1" and "0" totals, with the experts leaning more to "1".
    pub fn dominates_by_expertise(&self, other: &Self) -> bool {
        self.yes_expert + self.yes_regular == other.yes_expert + other.yes_regular
            && self.no_expert + self.no_regular == other.no_expert + other.no_regular
            && self.yes_expert >= other.yes_expert
            && self.no_expert <= other.no_expert
    }

    /// Direct dominance by either rule; the second rule only with
    /// `expert_prior` (experts assumed more accurate). Reflexive.
    pub fn dominates(&self, other: &Self, expert_prior: bool) -> bool {
        self.dominates_componentwise(other) || (expert_prior && self.dominates_by_expertise(other))
    }

    fn expert(&self) -> ResponseCounts {
        ResponseCounts::binary(self.yes_expert, self.no_expert)
    }

    fn regular(&self) -> ResponseCounts {
        ResponseCounts::binary(self.yes_regular, self.no_regular)
    }
}

/// All two-class buckets with at most `m_e` expert and `m_r` regular
/// answers, ordered by descending tuple, with dominance generated by the
/// two rules.
pub fn build_two_class_poset(
    m_e: u32,
    m_r: u32,
    expert_prior: bool,
) -> Result<BucketPoset<TwoClassBucket>> {
    if m_e == 0 && m_r == 0 {
        return Err(Error::InvalidConfig(
            "both classes have zero responses".into(),
        ));
    }
    let size =
        (m_e as u128 + 1) * (m_e as u128 + 2) / 2 * ((m_r as u128 + 1) * (m_r as u128 + 2) / 2);
    if size > DEFAULT_NODE_CAP {
        return Err(Error::CapExceeded {
            what: "poset nodes".into(),
            count: size,
            cap: DEFAULT_NODE_CAP,
        });
    }
    let mut nodes = Vec::new();
    for ye in (0..=m_e).rev() {
        for ne in (0..=m_e - ye).rev() {
            for yr in (0..=m_r).rev() {
                for nr in (0..=m_r - yr).rev() {
                    nodes.push(TwoClassBucket::new(ye, ne, yr, nr));
                }
            }
        }
    }
    let relation: Vec<(usize, usize)> = (0..nodes.len())
        .flat_map(|a| (0..nodes.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && nodes[a].dominates(&nodes[b], expert_prior))
        .collect();
    BucketPoset::from_relation(nodes, &relation)
}

/// Per-item two-class counts, from raw rows with a class on every row.
pub fn two_class_counts(dataset: &Dataset) -> Result<Vec<TwoClassBucket>> {
    if dataset.ratings() != 2 {
        return Err(Error::InvalidConfig(
            "two-class mode needs binary responses".into(),
        ));
    }
    let raw = dataset
        .raw()
        .ok_or_else(|| Error::InvalidConfig("two-class mode needs per-worker rows".into()))?;
    let mut counts = vec![TwoClassBucket::new(0, 0, 0, 0); dataset.len()];
    for row in raw {
        let k = dataset
            .position(&row.item)
            .expect("raw rows aggregate to items");
        let c = &mut counts[k];
        match (row.class, row.rating) {
            (Some(WorkerClass::Expert), 2) => c.yes_expert += 1,
            (Some(WorkerClass::Expert), _) => c.no_expert += 1,
            (Some(WorkerClass::Regular), 2) => c.yes_regular += 1,
            (Some(WorkerClass::Regular), _) => c.no_regular += 1,
            (None, _) => {
                return Err(Error::Malformed(format!(
                    "response of worker `{}` on item `{}` has no class",
                    row.worker, row.item
                )))
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClassSolution {
    /// Rating per populated bucket, buckets in descending tuple order.
    pub assignments: Vec<(TwoClassBucket, u8)>,
    pub expert: FilterParams,
    pub regular: FilterParams,
    pub loglik: LogLikelihood,
    pub candidates_evaluated: u128,
    pub labels: Labels,
}

/// Items grouped by two-class tallies, in descending tuple order.
struct TwoClassBuckets {
    keys: Vec<TwoClassBucket>,
    sizes: Vec<u64>,
    item_bucket: Vec<usize>,
}

impl TwoClassBuckets {
    fn new(items: &[TwoClassBucket]) -> Self {
        let mut groups: BTreeMap<std::cmp::Reverse<TwoClassBucket>, Vec<usize>> = BTreeMap::new();
        for (k, &b) in items.iter().enumerate() {
            groups.entry(std::cmp::Reverse(b)).or_default().push(k);
        }
        let mut item_bucket = vec![0; items.len()];
        let mut keys = Vec::new();
        let mut sizes = Vec::new();
        for (b, (key, members)) in groups.into_iter().enumerate() {
            for &k in &members {
                item_bucket[k] = b;
            }
            keys.push(key.0);
            sizes.push(members.len() as u64);
        }
        Self {
            keys,
            sizes,
            item_bucket,
        }
    }

    /// Rows `[expert "0", expert "1", regular "0", regular "1"]`.
    fn table(&self) -> CountTable {
        let rows = self
            .keys
            .iter()
            .zip(&self.sizes)
            .map(|(k, &s)| {
                vec![
                    s * k.no_expert as u64,
                    s * k.yes_expert as u64,
                    s * k.no_regular as u64,
                    s * k.yes_regular as u64,
                ]
            })
            .collect();
        CountTable::new(2, vec![2, 2], rows)
    }

    fn params(
        &self,
        values: &[u8],
        class: impl Fn(&TwoClassBucket) -> ResponseCounts,
    ) -> FilterParams {
        let mut tallies = [[0u64; 2]; 2];
        for ((key, &size), &v) in self.keys.iter().zip(&self.sizes).zip(values) {
            let c = class(key);
            let t = &mut tallies[v as usize - 1];
            t[0] += size * c.zeros() as u64;
            t[1] += size * c.ones() as u64;
        }
        FilterParams::from_tallies(tallies)
    }
}

/// Most likely labeling that is monotone under two-class dominance and
/// keeps both classes better than random.
pub fn two_class_opt(dataset: &Dataset, expert_prior: bool) -> Result<TwoClassSolution> {
    two_class_opt_with(dataset, expert_prior, &SearchOptions::default())
}

pub fn two_class_opt_with(
    dataset: &Dataset,
    expert_prior: bool,
    options: &SearchOptions,
) -> Result<TwoClassSolution> {
    let items = two_class_counts(dataset)?;
    let buckets = TwoClassBuckets::new(&items);
    let m_e = items
        .iter()
        .map(|b| b.yes_expert + b.no_expert)
        .max()
        .unwrap_or(0);
    let m_r = items
        .iter()
        .map(|b| b.yes_regular + b.no_regular)
        .max()
        .unwrap_or(0);
    let poset = if m_e == 0 && m_r == 0 {
        BucketPoset::from_relation(buckets.keys.clone(), &[])?
    } else {
        let full = build_two_class_poset(m_e, m_r, expert_prior)?;
        let keep: Vec<usize> = buckets
            .keys
            .iter()
            .map(|k| full.index_of(k).expect("bucket within bounds"))
            .collect();
        full.induced(&keep)
    };
    let table = buckets.table();
    let (values, evaluated) = run_search(&poset, &table, options)?;
    let expert = buckets.params(&values, TwoClassBucket::expert);
    let regular = buckets.params(&values, TwoClassBucket::regular);
    let loglik = two_class_log_likelihood(&buckets, &values, &expert.matrix(), &regular.matrix());
    let labels = Labels(buckets.item_bucket.iter().map(|&b| values[b]).collect());
    Ok(TwoClassSolution {
        assignments: buckets.keys.iter().copied().zip(values).collect(),
        expert,
        regular,
        loglik,
        candidates_evaluated: evaluated,
        labels,
    })
}

fn two_class_log_likelihood(
    buckets: &TwoClassBuckets,
    values: &[u8],
    expert: &ConfusionMatrix,
    regular: &ConfusionMatrix,
) -> LogLikelihood {
    let mut total = 0.0;
    for ((key, &size), &j) in buckets.keys.iter().zip(&buckets.sizes).zip(values) {
        let size = size as f64;
        for (counts, p) in [(key.expert(), expert), (key.regular(), regular)] {
            for i in 1..=2 {
                let v = counts.count(i);
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
    }
    LogLikelihood(total)
}

/// `ln Pr(M | labels, expert, regular)` for two-class data. Labels that
/// agree within every bucket are scored bucket by bucket, exactly as
/// [`two_class_opt`] reports; other labelings item by item.
pub fn two_class_labels_log_likelihood(
    dataset: &Dataset,
    labels: &Labels,
    expert: &ConfusionMatrix,
    regular: &ConfusionMatrix,
) -> Result<LogLikelihood> {
    if labels.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            found: labels.len(),
        });
    }
    for p in [expert, regular] {
        if p.ratings() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: p.ratings(),
            });
        }
    }
    if labels.0.iter().any(|&v| !(1..=2).contains(&v)) {
        return Err(Error::MappingMismatch(
            "two-class labels must be 1 or 2".into(),
        ));
    }
    let items = two_class_counts(dataset)?;
    let buckets = TwoClassBuckets::new(&items);
    let mut values = vec![0u8; buckets.keys.len()];
    let mut bucketized = true;
    for (&b, &v) in buckets.item_bucket.iter().zip(&labels.0) {
        if values[b] == 0 {
            values[b] = v;
        } else if values[b] != v {
            bucketized = false;
        }
    }
    if bucketized {
        return Ok(two_class_log_likelihood(&buckets, &values, expert, regular));
    }
    let singles = TwoClassBuckets {
        keys: items,
        sizes: vec![1; labels.len()],
        item_bucket: (0..labels.len()).collect(),
    };
    Ok(two_class_log_likelihood(
        &singles, &labels.0, expert, regular,
    ))
}

/// Per-unit weight table for two-class data at item level, used by the
/// brute-force oracle.
pub(crate) fn two_class_item_table(items: &[TwoClassBucket]) -> CountTable {
    let rows = items
        .iter()
        .map(|k| {
            vec![
                k.no_expert as u64,
                k.yes_expert as u64,
                k.no_regular as u64,
                k.yes_regular as u64,
            ]
        })
        .collect();
    CountTable::new(2, vec![2, 2], rows)
}
