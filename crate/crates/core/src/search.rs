//! Exhaustive scoring of labelings against aggregated response tallies.
//!
//! Every estimator in the crate reduces to the same problem: a set of units
//! (buckets or single items), each with a vector of non-negative weights, and
//! a space of labelings `unit -> 1..=L` described by a topological order and
//! upper-bound parents. For a fixed labeling the closed-form parameters are
//! empirical frequencies, so the profile log-likelihood depends only on the
//! per-label weight totals `T`, and equals
//! `sum_label sum_block (sum_f T_f ln T_f - S ln S)` with `S` the block total.

use crate::exec::Execution;

/// Default limit on the number of candidate labelings scored by one search.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Limits and execution strategy for exhaustive searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub cap: u128,
    pub execution: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            execution: Execution::default(),
        }
    }
}

impl SearchOptions {
    pub fn with_cap(cap: u128) -> Self {
        Self {
            cap,
            ..Self::default()
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            execution: Execution::Sequential,
            ..self
        }
    }
}

/// Relative tolerance under which two scores count as tied.
pub(crate) fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Cached `x ln x` for integer tallies.
pub(crate) struct XLogX {
    table: Vec<f64>,
}

const XLOGX_TABLE_LIMIT: u64 = 1 << 22;

impl XLogX {
    pub(crate) fn new(max: u64) -> Self {
        let len = max.min(XLOGX_TABLE_LIMIT) + 1;
        let table = (0..len).map(raw_xlogx).collect();
        Self { table }
    }

    #[inline]
    pub(crate) fn get(&self, x: u64) -> f64 {
        match self.table.get(x as usize) {
            Some(&v) => v,
            None => raw_xlogx(x),
        }
    }
}

#[inline]
fn raw_xlogx(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

/// Weight rows for the units of a search. Features are grouped into blocks
/// that are normalized independently (one block per worker class).
#[derive(Debug, Clone)]
pub(crate) struct CountTable {
    labels: usize,
    blocks: Vec<usize>,
    width: usize,
    rows: Vec<Vec<u64>>,
}

impl CountTable {
    pub(crate) fn new(labels: usize, blocks: Vec<usize>, rows: Vec<Vec<u64>>) -> Self {
        let width = blocks.iter().sum();
        debug_assert!(rows.iter().all(|r| r.len() == width));
        Self {
            labels,
            blocks,
            width,
            rows,
        }
    }

    pub(crate) fn units(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn xlogx(&self) -> XLogX {
        let total: u64 = self.rows.iter().flatten().sum();
        XLogX::new(total)
    }

    pub(crate) fn empty_tallies(&self) -> Vec<u64> {
        vec![0; self.labels * self.width]
    }

    /// Tallies of a full assignment, `values[u]` in `1..=labels`.
    pub(crate) fn tallies(&self, values: &[u8]) -> Vec<u64> {
        let mut t = self.empty_tallies();
        for (u, &v) in values.iter().enumerate() {
            self.add(&mut t, u, v);
        }
        t
    }

    #[inline]
    pub(crate) fn add(&self, tallies: &mut [u64], unit: usize, label: u8) {
        let base = (label as usize - 1) * self.width;
        for (t, &w) in tallies[base..base + self.width]
            .iter_mut()
            .zip(&self.rows[unit])
        {
            *t += w;
        }
    }

    #[inline]
    fn relabel(&self, tallies: &mut [u64], unit: usize, from: u8, to: u8) {
        let a = (from as usize - 1) * self.width;
        let b = (to as usize - 1) * self.width;
        for (f, &w) in self.rows[unit].iter().enumerate() {
            tallies[a + f] -= w;
            tallies[b + f] += w;
        }
    }

    /// Profile log-likelihood of the tallies.
    pub(crate) fn score(&self, tallies: &[u64], xlx: &XLogX) -> f64 {
        let mut total = 0.0;
        for label in 0..self.labels {
            let mut offset = label * self.width;
            for &w in &self.blocks {
                let seg = &tallies[offset..offset + w];
                let mut sum = 0;
                for &x in seg {
                    total += xlx.get(x);
                    sum += x;
                }
                total -= xlx.get(sum);
                offset += w;
            }
        }
        total
    }

    /// Tie-break preference: diagonal dominance when every block has one
    /// feature per label, otherwise always true.
    pub(crate) fn preferred(&self, tallies: &[u64]) -> bool {
        !self.blocks.iter().all(|&w| w == self.labels) || self.diagonally_dominant(tallies)
    }

    /// Within every block of every populated label, the feature matching the
    /// label carries at least as much weight as any other feature. Blocks must
    /// have one feature per label.
    pub(crate) fn diagonally_dominant(&self, tallies: &[u64]) -> bool {
        for label in 0..self.labels {
            let mut offset = label * self.width;
            for &w in &self.blocks {
                let seg = &tallies[offset..offset + w];
                let own = seg[label];
                if seg.iter().any(|&x| x > own) {
                    return false;
                }
                offset += w;
            }
        }
        true
    }

    /// Like [`Self::diagonally_dominant`] but the own feature must carry
    /// strictly more weight in every block that has any weight at all.
    pub(crate) fn strictly_dominant(&self, tallies: &[u64]) -> bool {
        for label in 0..self.labels {
            let mut offset = label * self.width;
            for &w in &self.blocks {
                let seg = &tallies[offset..offset + w];
                let own = seg[label];
                if seg
                    .iter()
                    .enumerate()
                    .any(|(i, &x)| i != label && x >= own && x + own > 0)
                {
                    return false;
                }
                offset += w;
            }
        }
        true
    }
}

/// Labeling space: units visited in `order`; the label of a unit may not
/// exceed the label of any of its `parents` (which precede it in `order`).
/// Roots range over `1..=labels`.
pub(crate) struct Space<'a> {
    pub order: &'a [usize],
    pub parents: &'a [Vec<usize>],
    pub labels: u8,
}

impl Space<'_> {
    #[inline]
    fn upper(&self, values: &[u8], unit: usize) -> u8 {
        self.parents[unit]
            .iter()
            .map(|&p| values[p])
            .min()
            .unwrap_or(self.labels)
    }

    /// Prefix labelings of the first `depth` positions, grown until there are
    /// at least `target` of them or the order is exhausted.
    fn prefixes(&self, target: usize) -> (usize, Vec<Vec<u8>>) {
        let n = self.order.len();
        let mut values = vec![0u8; n];
        let mut prefixes: Vec<Vec<u8>> = vec![Vec::new()];
        let mut depth = 0;
        while prefixes.len() < target && depth < n {
            let unit = self.order[depth];
            let mut next = Vec::new();
            for prefix in &prefixes {
                for (pos, &v) in prefix.iter().enumerate() {
                    values[self.order[pos]] = v;
                }
                for v in 1..=self.upper(&values, unit) {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            prefixes = next;
            depth += 1;
        }
        (depth, prefixes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Best {
    /// Labels indexed by unit.
    pub values: Vec<u8>,
    pub score: f64,
    /// Whether the labeling's parameters are diagonally dominant.
    pub preferred: bool,
}

impl Best {
    fn beats(&self, other: &Best) -> bool {
        wins(self.score, self.preferred, &self.values, other)
    }

    /// Replaces `slot` with the candidate if it wins. `preferred` is only
    /// evaluated when the candidate can win.
    pub(crate) fn offer(
        slot: &mut Option<Best>,
        score: f64,
        preferred: impl FnOnce() -> bool,
        values: &[u8],
    ) {
        let flag = match slot {
            Some(b) if tied(score, b.score) => {
                let flag = preferred();
                if !wins_tie(flag, values, b) {
                    return;
                }
                flag
            }
            Some(b) if score < b.score => return,
            _ => preferred(),
        };
        *slot = Some(Best {
            values: values.to_vec(),
            score,
            preferred: flag,
        });
    }
}

/// Strictly better score; on a tie, preferred labelings first, then the
/// lexicographically smaller labeling in unit order.
#[inline]
fn wins(score: f64, preferred: bool, values: &[u8], other: &Best) -> bool {
    if tied(score, other.score) {
        wins_tie(preferred, values, other)
    } else {
        score > other.score
    }
}

#[inline]
fn wins_tie(preferred: bool, values: &[u8], other: &Best) -> bool {
    if preferred != other.preferred {
        preferred
    } else {
        values < other.values.as_slice()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Outcome {
    pub best: Option<Best>,
    pub evaluated: u128,
    pub accepted: u128,
}

fn merge(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.beats(&a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Scores every labeling of `space` accepted by `accept` and returns the best.
pub(crate) fn search<F>(
    space: &Space<'_>,
    table: &CountTable,
    accept: F,
    execution: Execution,
) -> Outcome
where
    F: Fn(&[u64]) -> bool + Sync,
{
    let xlx = table.xlogx();
    let (depth, prefixes) = space.prefixes(execution.target_partitions());
    let parts = execution.map(prefixes, |prefix| {
        sweep(space, table, &xlx, &accept, depth, &prefix)
    });
    parts.into_iter().fold(
        Outcome {
            best: None,
            evaluated: 0,
            accepted: 0,
        },
        |acc, part| Outcome {
            best: merge(acc.best, part.best),
            evaluated: acc.evaluated + part.evaluated,
            accepted: acc.accepted + part.accepted,
        },
    )
}

/// Visits, in lexicographic order, every labeling that extends `prefix`.
fn sweep<F>(
    space: &Space<'_>,
    table: &CountTable,
    xlx: &XLogX,
    accept: &F,
    fixed: usize,
    prefix: &[u8],
) -> Outcome
where
    F: Fn(&[u64]) -> bool,
{
    let order = space.order;
    let n = order.len();
    let mut values = vec![1u8; table.units()];
    for (pos, &v) in prefix.iter().enumerate() {
        values[order[pos]] = v;
    }
    let mut tallies = table.tallies(&values);
    let mut best: Option<Best> = None;
    let mut evaluated = 0u128;
    let mut accepted = 0u128;
    loop {
        evaluated += 1;
        if accept(&tallies) {
            accepted += 1;
            let score = table.score(&tallies, xlx);
            Best::offer(&mut best, score, || table.preferred(&tallies), &values);
        }
        let Some(k) = (fixed..n)
            .rev()
            .find(|&k| values[order[k]] < space.upper(&values, order[k]))
        else {
            break;
        };
        let unit = order[k];
        table.relabel(&mut tallies, unit, values[unit], values[unit] + 1);
        values[unit] += 1;
        for &later in &order[k + 1..] {
            if values[later] != 1 {
                table.relabel(&mut tallies, later, values[later], 1);
                values[later] = 1;
            }
        }
    }
    Outcome {
        best,
        evaluated,
        accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
        let order = (0..n).collect();
        let parents = (0..n)
            .map(|k| if k == 0 { vec![] } else { vec![k - 1] })
            .collect();
        (order, parents)
    }

    #[test]
    fn chain_of_three_with_three_labels_has_ten_labelings() {
        let (order, parents) = chain(3);
        let space = Space {
            order: &order,
            parents: &parents,
            labels: 3,
        };
        let table = CountTable::new(3, vec![1], vec![vec![1]; 3]);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = search(&space, &table, |_| true, exec);
            assert_eq!(out.evaluated, 10);
        }
    }

    #[test]
    fn antichain_enumerates_product_space() {
        let order: Vec<usize> = (0..4).collect();
        let parents = vec![vec![]; 4];
        let space = Space {
            order: &order,
            parents: &parents,
            labels: 3,
        };
        let table = CountTable::new(3, vec![1], vec![vec![0]; 4]);
        let out = search(&space, &table, |_| true, Execution::Sequential);
        assert_eq!(out.evaluated, 81);
        // All scores are zero, so the tie rule keeps the all-ones labeling.
        assert_eq!(out.best.unwrap().values, vec![1, 1, 1, 1]);
    }

    #[test]
    fn score_matches_direct_profile_likelihood() {
        // Two units with binary weights (zeros, ones) = (1,2) and (3,0).
        let table = CountTable::new(2, vec![2], vec![vec![1, 2], vec![3, 0]]);
        let xlx = table.xlogx();
        let together = table.score(&table.tallies(&[1, 1]), &xlx);
        let p: f64 = 4.0 / 6.0;
        assert!((together - (4.0 * p.ln() + 2.0 * (1.0 - p).ln())).abs() < 1e-12);
        let apart = table.score(&table.tallies(&[2, 1]), &xlx);
        let q: f64 = 1.0 / 3.0;
        assert!((apart - (q.ln() + 2.0 * (1.0 - q).ln())).abs() < 1e-12);
    }

    #[test]
    fn diagonal_dominance_of_tallies() {
        let table = CountTable::new(2, vec![2], vec![vec![1, 2], vec![3, 0]]);
        assert!(table.diagonally_dominant(&table.tallies(&[2, 1])));
        assert!(!table.diagonally_dominant(&table.tallies(&[1, 2])));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let order: Vec<usize> = (0..7).collect();
        let parents = vec![vec![]; 7];
        let space = Space {
            order: &order,
            parents: &parents,
            labels: 2,
        };
        let rows = vec![
            vec![3, 0],
            vec![1, 2],
            vec![2, 1],
            vec![2, 1],
            vec![0, 3],
            vec![3, 0],
            vec![1, 2],
        ];
        let table = CountTable::new(2, vec![2], rows);
        let a = search(&space, &table, |_| true, Execution::Sequential);
        let b = search(&space, &table, |_| true, Execution::Parallel);
        assert_eq!(a, b);
    }
}
