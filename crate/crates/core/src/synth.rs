//! Seeded synthetic data: ground truth, worker matrices, simulated
//! responses, and subsampling of per-worker logs.
//!
//! Every random decision draws from its own ChaCha stream derived from the
//! seed (one for truth, one for the matrix, one per item for responses), so
//! results do not depend on generation order.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{ConfusionMatrix, Dataset, Item, Labels, ResponseCounts};

const STREAM_TRUTH: u64 = 1;
const STREAM_MATRIX: u64 = 2;
const STREAM_RESPONSES: u64 = 3 << 32;
const STREAM_SUBSAMPLE: u64 = 4 << 32;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How the worker matrix of a synthetic instance is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixMode {
    /// Binary only: `e0, e1` uniform on `[0, 0.5]`.
    BetterThanRandom,
    /// Each column is a uniform point on the simplex with its largest entry
    /// moved onto the diagonal.
    DiagonallyDominant,
    Explicit(ConfusionMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub ratings: usize,
    pub m: u32,
    /// Distribution of true ratings over `1..=R`.
    pub selectivity: Vec<f64>,
    pub matrix_mode: MatrixMode,
    pub seed: u64,
}

impl SynthConfig {
    /// Binary instance where each item is a "1" with probability `s`.
    pub fn filtering(n: usize, m: u32, s: f64, seed: u64) -> Self {
        Self {
            n,
            ratings: 2,
            m,
            selectivity: vec![1.0 - s, s],
            matrix_mode: MatrixMode::BetterThanRandom,
            seed,
        }
    }

    /// Rating instance with diagonally dominant workers.
    pub fn rating(n: usize, ratings: usize, m: u32, selectivity: Vec<f64>, seed: u64) -> Self {
        Self {
            n,
            ratings,
            m,
            selectivity,
            matrix_mode: MatrixMode::DiagonallyDominant,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratings < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 rating values, got {}",
                self.ratings
            )));
        }
        if self.selectivity.len() != self.ratings {
            return Err(Error::InvalidConfig(format!(
                "selectivity has {} entries for {} ratings",
                self.selectivity.len(),
                self.ratings
            )));
        }
        let sum: f64 = self.selectivity.iter().sum();
        if self.selectivity.iter().any(|&s| s.is_nan() || s < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "selectivity {:?} is not a probability vector",
                self.selectivity
            )));
        }
        match &self.matrix_mode {
            MatrixMode::BetterThanRandom if self.ratings != 2 => Err(Error::InvalidConfig(
                "better-than-random matrices are binary only".into(),
            )),
            MatrixMode::Explicit(p) if p.ratings() != self.ratings => {
                Err(Error::DimensionMismatch {
                    expected: self.ratings,
                    found: p.ratings(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// I.i.d. true ratings drawn from the selectivity.
pub fn gen_truth(config: &SynthConfig) -> Result<Labels> {
    config.validate()?;
    let dist = WeightedIndex::new(&config.selectivity)
        .map_err(|e| Error::InvalidConfig(format!("selectivity: {e}")))?;
    let mut rng = rng(config.seed, STREAM_TRUTH);
    Ok(Labels(
        (0..config.n)
            .map(|_| dist.sample(&mut rng) as u8 + 1)
            .collect(),
    ))
}

/// Worker matrix according to the configured mode.
pub fn gen_matrix(config: &SynthConfig) -> Result<ConfusionMatrix> {
    config.validate()?;
    let mut rng = rng(config.seed, STREAM_MATRIX);
    match &config.matrix_mode {
        MatrixMode::Explicit(p) => Ok(p.clone()),
        MatrixMode::BetterThanRandom => {
            let e0 = rng.random_range(0.0..=0.5);
            let e1 = rng.random_range(0.0..=0.5);
            ConfusionMatrix::from_error_rates(e0, e1)
        }
        MatrixMode::DiagonallyDominant => {
            let r = config.ratings;
            let columns = (0..r).map(|j| dominant_column(&mut rng, r, j)).collect();
            ConfusionMatrix::from_columns(columns)
        }
    }
}

/// Uniform simplex point (normalized exponentials) whose unique maximum is
/// swapped into position `j`; drawn again on a tie for the maximum.
fn dominant_column(rng: &mut ChaCha8Rng, r: usize, j: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..r).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut column: Vec<f64> = draws.iter().map(|x| x / total).collect();
        let top = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let at: Vec<usize> = (0..r).filter(|&i| column[i] == top).collect();
        if at.len() == 1 && total > 0.0 {
            column.swap(at[0], j);
            return column;
        }
    }
}

/// `m` answers per item, drawn from the matrix column of its true rating.
/// Items are named `I1, I2, ...`.
pub fn simulate_responses(
    truth: &Labels,
    matrix: &ConfusionMatrix,
    m: u32,
    seed: u64,
) -> Result<Dataset> {
    let r = matrix.ratings();
    let columns: Vec<WeightedIndex<f64>> = (1..=r)
        .map(|j| WeightedIndex::new(matrix.column(j)))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidMatrix(format!("{e}")))?;
    let mut items = Vec::with_capacity(truth.len());
    for (k, &t) in truth.0.iter().enumerate() {
        if t < 1 || t as usize > r {
            return Err(Error::RatingOutOfRange {
                item: format!("I{}", k + 1),
                rating: t as usize,
                ratings: r,
            });
        }
        let mut rng = rng(seed, STREAM_RESPONSES + k as u64);
        let mut counts = vec![0u32; r];
        for _ in 0..m {
            counts[columns[t as usize - 1].sample(&mut rng)] += 1;
        }
        items.push(Item::new(
            format!("I{}", k + 1),
            ResponseCounts::from_low_to_high(&counts),
        ));
    }
    Dataset::new(r, items)?.with_truth(truth.clone())
}

/// A generated instance: dataset with truth, and the generating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub dataset: Dataset,
    pub matrix: ConfusionMatrix,
}

pub fn generate(config: &SynthConfig) -> Result<SynthInstance> {
    let truth = gen_truth(config)?;
    let matrix = gen_matrix(config)?;
    let dataset = simulate_responses(&truth, &matrix, config.m, config.seed)?;
    Ok(SynthInstance { dataset, matrix })
}

/// Keeps `m` raw responses per item, sampled uniformly without replacement
/// and independently per item. Requires raw rows.
pub fn subsample_responses(dataset: &Dataset, m: u32, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let raw = dataset
        .raw()
        .ok_or_else(|| Error::InvalidConfig("subsampling needs per-worker rows".into()))?;
    let mut rows_by_item = vec![Vec::new(); dataset.len()];
    for row in raw {
        let k = dataset
            .position(&row.item)
            .expect("raw rows aggregate to items");
        rows_by_item[k].push(row);
    }
    let mut kept = Vec::new();
    for (k, rows) in rows_by_item.iter().enumerate() {
        let need = m as usize;
        if rows.len() < need {
            return Err(Error::InsufficientResponses {
                item: dataset.items()[k].id.clone(),
                have: rows.len(),
                need,
            });
        }
        let mut rng = rng(seed, STREAM_SUBSAMPLE + k as u64);
        let mut picked = rand::seq::index::sample(&mut rng, rows.len(), need).into_vec();
        picked.sort_unstable();
        kept.extend(picked.into_iter().map(|i| rows[i].clone()));
    }
    let sub = Dataset::from_raw(dataset.ratings(), kept)?;
    match dataset.truth() {
        Some(t) => sub.with_truth(t.clone()),
        None => Ok(sub),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawResponse;

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig::filtering(200, 5, 0.5, 42);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn full_selectivity() {
        let cfg = SynthConfig::filtering(50, 3, 1.0, 7);
        assert!(gen_truth(&cfg).unwrap().0.iter().all(|&t| t == 2));
    }

    #[test]
    fn matrices_respect_mode() {
        for seed in 0..200 {
            let (e0, e1) = gen_matrix(&SynthConfig::filtering(1, 1, 0.5, seed))
                .unwrap()
                .error_rates()
                .unwrap();
            assert!(e0 <= 0.5 && e1 <= 0.5);
            let p = gen_matrix(&SynthConfig::rating(1, 4, 1, vec![0.25; 4], seed)).unwrap();
            for j in 1..=4 {
                assert!((1..=4).all(|i| i == j || p.get(j, j) > p.get(i, j)));
            }
        }
    }

    #[test]
    fn noiseless_workers() {
        let truth = Labels(vec![1, 3, 2]);
        let ds = simulate_responses(&truth, &ConfusionMatrix::identity(3), 4, 1).unwrap();
        for (item, &t) in ds.items().iter().zip(&truth.0) {
            assert_eq!(item.responses.count(t as usize), 4);
        }
        let empty = simulate_responses(&truth, &ConfusionMatrix::identity(3), 0, 1).unwrap();
        assert!(empty.items().iter().all(|it| it.responses.total() == 0));
    }

    #[test]
    fn invalid_selectivity() {
        let cfg = SynthConfig::rating(10, 3, 2, vec![0.5, 0.6, 0.1], 0);
        assert!(matches!(gen_truth(&cfg), Err(Error::InvalidConfig(_))));
    }

    fn raw_log(items: usize, workers: usize) -> Dataset {
        let rows = (0..items)
            .flat_map(|i| {
                (0..workers).map(move |w| RawResponse {
                    item: format!("T{i}"),
                    worker: format!("W{w}"),
                    rating: 1 + (i + w) % 2,
                    class: None,
                })
            })
            .collect();
        Dataset::from_raw(2, rows).unwrap()
    }

    #[test]
    fn subsampling() {
        let log = raw_log(5, 19);
        let full = subsample_responses(&log, 19, 3).unwrap();
        assert_eq!(full.items(), log.items());
        let four = subsample_responses(&log, 4, 3).unwrap();
        assert!(four.items().iter().all(|it| it.responses.total() == 4));
        assert_ne!(
            subsample_responses(&log, 4, 3).unwrap().raw(),
            subsample_responses(&log, 4, 4).unwrap().raw()
        );
        match subsample_responses(&log, 20, 3) {
            Err(Error::InsufficientResponses {
                item,
                have: 19,
                need: 20,
            }) => assert_eq!(item, "T0"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
