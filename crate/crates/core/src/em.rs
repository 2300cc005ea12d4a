//! Hard-assignment EM baseline and majority vote.
//!
//! Each round assigns every bucket to its most likely rating under the
//! current matrix, then re-estimates the matrix in closed form for that
//! assignment. The profile log-likelihood never decreases.

use crate::error::{Error, Result};
use crate::model::{
    bucket_log_likelihood, Buckets, ConfusionMatrix, Dataset, Labels, LogLikelihood, Mapping,
};
use crate::rating::params_for_values;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;

/// A named starting matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmInit {
    pub name: String,
    pub matrix: ConfusionMatrix,
}

impl EmInit {
    pub fn custom(name: impl Into<String>, matrix: ConfusionMatrix) -> Self {
        Self {
            name: name.into(),
            matrix,
        }
    }

    /// Workers start out better than random.
    pub fn em1(ratings: usize) -> Self {
        let matrix = match ratings {
            2 => binary(0.25),
            3 => ConfusionMatrix::new(vec![
                vec![0.6, 0.33, 0.07],
                vec![0.33, 0.34, 0.33],
                vec![0.07, 0.33, 0.6],
            ])
            .expect("valid preset"),
            r => peaked(r, |j| j),
        };
        Self::custom("EM1", matrix)
    }

    /// Workers start out answering at random.
    pub fn em2(ratings: usize) -> Self {
        let matrix = match ratings {
            2 => binary(0.5),
            3 => ConfusionMatrix::new(vec![
                vec![0.34, 0.33, 0.33],
                vec![0.33, 0.34, 0.33],
                vec![0.33, 0.33, 0.34],
            ])
            .expect("valid preset"),
            r => ConfusionMatrix::uniform(r),
        };
        Self::custom("EM2", matrix)
    }

    /// Workers start out adversarial.
    pub fn em3(ratings: usize) -> Self {
        let matrix = match ratings {
            2 => binary(0.75),
            3 => ConfusionMatrix::new(vec![
                vec![0.07, 0.33, 0.6],
                vec![0.33, 0.34, 0.33],
                vec![0.6, 0.33, 0.07],
            ])
            .expect("valid preset"),
            r => peaked(r, |j| r - 1 - j),
        };
        Self::custom("EM3", matrix)
    }

    pub fn presets(ratings: usize) -> Vec<EmInit> {
        vec![Self::em1(ratings), Self::em2(ratings), Self::em3(ratings)]
    }
}

fn binary(e: f64) -> ConfusionMatrix {
    ConfusionMatrix::from_error_rates(e, e).expect("valid preset")
}

/// Column `j` puts 0.6 on row `peak(j)` and spreads 0.4 over the rest.
fn peaked(r: usize, peak: impl Fn(usize) -> usize) -> ConfusionMatrix {
    let rest = 0.4 / (r - 1) as f64;
    let rows = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| if peak(j) == i { 0.6 } else { rest })
                .collect()
        })
        .collect();
    ConfusionMatrix::new(rows).expect("valid preset")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub init: String,
    pub mapping: Mapping,
    pub matrix: ConfusionMatrix,
    pub loglik: LogLikelihood,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every round.
    pub trace: Vec<f64>,
    pub labels: Labels,
}

/// Most likely rating for a bucket under `p`; ties go to the lower rating.
fn assign(buckets: &Buckets, p: &ConfusionMatrix) -> Vec<u8> {
    let r = buckets.ratings();
    let logs: Vec<f64> = (1..=r)
        .flat_map(|i| (1..=r).map(move |j| (i, j)))
        .map(|(i, j)| p.get(i, j).ln())
        .collect();
    buckets
        .iter()
        .map(|b| {
            let mut best = (1u8, f64::NEG_INFINITY);
            for j in 1..=r {
                let mut s = 0.0;
                for i in 1..=r {
                    let v = b.key.count(i);
                    if v > 0 {
                        s += v as f64 * logs[(i - 1) * r + (j - 1)];
                    }
                }
                if s > best.1 {
                    best = (j as u8, s);
                }
            }
            best.0
        })
        .collect()
}

/// Runs hard EM from `init` (item totals may vary) until the assignment repeats, the
/// log-likelihood gains less than `tol`, or `max_iter` rounds have run.
pub fn em_run(dataset: &Dataset, init: &EmInit, max_iter: usize, tol: f64) -> Result<EmResult> {
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tol must be positive, got {tol}"
        )));
    }
    if init.matrix.ratings() != dataset.ratings() {
        return Err(Error::DimensionMismatch {
            expected: dataset.ratings(),
            found: init.matrix.ratings(),
        });
    }
    let buckets = Buckets::from_dataset(dataset);
    let mut p = init.matrix.clone();
    let mut values: Vec<u8> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let next = assign(&buckets, &p);
        let repeated = next == values;
        values = next;
        p = params_for_values(&buckets, &values);
        let ll = bucket_log_likelihood(&buckets, &values, &p).value();
        let small_gain = trace.last().is_some_and(|&prev: &f64| ll - prev < tol);
        trace.push(ll);
        if repeated || small_gain {
            converged = true;
            break;
        }
    }
    let mapping = Mapping::for_buckets(&buckets, values.clone())?;
    let labels = mapping.labels(&buckets)?;
    Ok(EmResult {
        init: init.name.clone(),
        loglik: bucket_log_likelihood(&buckets, &values, &p),
        mapping,
        matrix: p,
        iterations: trace.len(),
        converged,
        trace,
        labels,
    })
}

/// Runs every init and keeps the most likely result (earliest on ties).
pub fn em_star(dataset: &Dataset, inits: &[EmInit], max_iter: usize, tol: f64) -> Result<EmResult> {
    let mut best: Option<EmResult> = None;
    for init in inits {
        let run = em_run(dataset, init, max_iter, tol)?;
        if best
            .as_ref()
            .is_none_or(|b| run.loglik.value() > b.loglik.value())
        {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("em_star needs at least one init".into()))
}

/// Per-item most frequent answer; ties go to the lower rating.
pub fn majority_vote(dataset: &Dataset) -> Labels {
    Labels(
        dataset
            .items()
            .iter()
            .map(|item| {
                let mut best = (1u8, 0u32);
                for r in 1..=dataset.ratings() {
                    let c = item.responses.count(r);
                    if c > best.1 {
                        best = (r as u8, c);
                    }
                }
                best.0
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for r in 2..=6 {
            for init in EmInit::presets(r) {
                assert_eq!(init.matrix.ratings(), r);
            }
        }
        assert_eq!(EmInit::em1(2).matrix.error_rates(), Some((0.25, 0.25)));
        assert_eq!(EmInit::em3(2).matrix.error_rates(), Some((0.75, 0.75)));
        assert_eq!(EmInit::em3(3).matrix.column(2), vec![0.33, 0.34, 0.33]);
    }

    #[test]
    fn unanimous_converges_fast() {
        let ds = Dataset::binary(&[(5, 0), (5, 0), (0, 5)]);
        let run = em_run(&ds, &EmInit::em1(2), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(run.converged);
        assert!(run.iterations <= 2);
        assert_eq!(run.labels, Labels(vec![2, 2, 1]));
        assert_eq!(run.matrix.error_rates(), Some((0.0, 0.0)));
    }

    #[test]
    fn trace_is_non_decreasing() {
        let ds = Dataset::binary(&[(3, 0), (1, 2), (2, 1), (2, 1), (0, 3), (1, 2)]);
        for init in EmInit::presets(2) {
            let run = em_run(&ds, &init, 50, 1e-12).unwrap();
            assert!(run.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn star_picks_best() {
        let ds = Dataset::binary(&[(3, 0), (1, 2), (2, 1), (2, 1)]);
        let inits = EmInit::presets(2);
        let star = em_star(&ds, &inits, 100, 1e-9).unwrap();
        for init in &inits {
            let run = em_run(&ds, init, 100, 1e-9).unwrap();
            assert!(star.loglik.value() >= run.loglik.value());
        }
        let single = em_star(&ds, &inits[..1], 100, 1e-9).unwrap();
        assert_eq!(single, em_run(&ds, &inits[0], 100, 1e-9).unwrap());
        assert!(em_star(&ds, &[], 100, 1e-9).is_err());
    }

    #[test]
    fn majority_breaks_ties_low() {
        let ds = Dataset::binary(&[(3, 0), (1, 2), (2, 1), (1, 1)]);
        assert_eq!(majority_vote(&ds), Labels(vec![2, 1, 2, 1]));
    }
}
