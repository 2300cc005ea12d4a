//! Finite posets over bucket keys: dominance between response tallies,
//! lattice meets, closures, and enumeration / counting of order-preserving
//! labelings.
//!
//! A node `a` dominates `b` when `b` can be reached from `a` by moving votes
//! to lower ratings. Equivalently, for every threshold `r` the number of
//! responses `>= r` in `a` is at least that in `b`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::model::{Mapping, ResponseCounts};
use crate::search::Space;

/// Default limit on the number of nodes of a generated poset.
pub const DEFAULT_NODE_CAP: u128 = 5_000;

/// Default limit on the number of up-sets materialized by the counting DP.
pub const DEFAULT_UPSET_CAP: u128 = 4_000_000;

/// Upper-tail cumulative counts: `cum(r)` is the number of responses `>= r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CumulativeProfile {
    cum: Vec<u32>,
}

impl CumulativeProfile {
    pub fn of(counts: &ResponseCounts) -> Self {
        let r = counts.ratings();
        let mut cum = vec![0; r];
        let mut running = 0;
        for rating in (1..=r).rev() {
            running += counts.count(rating);
            cum[rating - 1] = running;
        }
        Self { cum }
    }

    /// Responses with rating `>= r`, for `r` in `1..=R`.
    pub fn cum(&self, r: usize) -> u32 {
        self.cum[r - 1]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.cum
    }

    /// Pointwise minimum of two profiles of equal length.
    pub fn min(&self, other: &Self) -> Self {
        Self {
            cum: self
                .cum
                .iter()
                .zip(&other.cum)
                .map(|(a, b)| *a.min(b))
                .collect(),
        }
    }

    pub fn to_counts(&self) -> ResponseCounts {
        let r = self.cum.len();
        let low_to_high: Vec<u32> = (0..r)
            .map(|k| self.cum[k] - self.cum.get(k + 1).copied().unwrap_or(0))
            .collect();
        ResponseCounts::from_low_to_high(&low_to_high)
    }
}

fn check_comparable(a: &ResponseCounts, b: &ResponseCounts) -> Result<()> {
    if a.ratings() != b.ratings() {
        return Err(Error::DimensionMismatch {
            expected: a.ratings(),
            found: b.ratings(),
        });
    }
    if a.total() != b.total() {
        return Err(Error::InconsistentTotal {
            item: b.to_string(),
            expected: a.total(),
            found: b.total(),
        });
    }
    Ok(())
}

/// Whether `a` dominates `b` (reflexive).
pub fn dominates(a: &ResponseCounts, b: &ResponseCounts) -> Result<bool> {
    check_comparable(a, b)?;
    let (ca, cb) = (CumulativeProfile::of(a), CumulativeProfile::of(b));
    Ok(ca.cum.iter().zip(&cb.cum).all(|(x, y)| x >= y))
}

/// Greatest lower bound of `a` and `b` under dominance.
pub fn meet(a: &ResponseCounts, b: &ResponseCounts) -> Result<ResponseCounts> {
    check_comparable(a, b)?;
    Ok(CumulativeProfile::of(a)
        .min(&CumulativeProfile::of(b))
        .to_counts())
}

/// Every tally of `m` responses over `ratings` values, in descending
/// lexicographic order of `(v_R, ..., v_1)`.
pub fn compositions(ratings: usize, m: u32) -> Vec<ResponseCounts> {
    fn fill(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<ResponseCounts>) {
        if slots == 1 {
            prefix.push(left);
            out.push(ResponseCounts::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for v in (0..=left).rev() {
            prefix.push(v);
            fill(prefix, left - v, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if ratings > 0 {
        fill(&mut Vec::with_capacity(ratings), m, ratings, &mut out);
    }
    out
}

/// `C(n, k)` in 128-bit arithmetic, `None` on overflow.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// A finite partial order given by its cover edges. Node indices are
/// positions in [`BucketPoset::nodes`].
#[derive(Debug, Clone)]
pub struct BucketPoset<K> {
    nodes: Vec<K>,
    covers: Vec<(usize, usize)>,
    topo: Vec<usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    below: Vec<FixedBitSet>,
}

impl<K: Clone + Eq + Hash + Debug> BucketPoset<K> {
    /// Builds the poset generated by `relation` pairs `(dominating, dominated)`.
    /// The relation need not be transitive or reduced; cycles are rejected.
    pub fn from_relation(nodes: Vec<K>, relation: &[(usize, usize)]) -> Result<Self> {
        let n = nodes.len();
        check_distinct(&nodes)?;
        let mut succ = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for &(a, b) in relation {
            if a >= n || b >= n {
                return Err(Error::InvalidConfig(format!(
                    "edge ({a},{b}) out of range for {n} nodes"
                )));
            }
            if a != b {
                succ[a].push(b);
                indegree[b] += 1;
            }
        }
        let order = kahn(&succ, indegree)
            .ok_or_else(|| Error::InvalidConfig("dominance relation contains a cycle".into()))?;
        let mut below = vec![FixedBitSet::with_capacity(n); n];
        for &a in order.iter().rev() {
            let mut set = FixedBitSet::with_capacity(n);
            set.insert(a);
            for &b in &succ[a] {
                set.union_with(&below[b]);
            }
            below[a] = set;
        }
        Ok(Self::from_closure(nodes, below))
    }

    /// Same as [`BucketPoset::from_relation`]; provided for callers that
    /// already hold a cover relation.
    pub fn from_covers(nodes: Vec<K>, covers: &[(usize, usize)]) -> Result<Self> {
        Self::from_relation(nodes, covers)
    }

    /// Builds the poset whose order is `above(a, b)` on node pairs. The
    /// predicate must be a partial order (reflexive, antisymmetric,
    /// transitive); this is not checked.
    pub fn from_order_predicate<F>(nodes: Vec<K>, above: F) -> Result<Self>
    where
        F: Fn(&K, &K) -> bool,
    {
        check_distinct(&nodes)?;
        let n = nodes.len();
        let below = nodes
            .iter()
            .map(|a| {
                let mut set = FixedBitSet::with_capacity(n);
                for (j, b) in nodes.iter().enumerate() {
                    if above(a, b) {
                        set.insert(j);
                    }
                }
                set
            })
            .collect();
        Ok(Self::from_closure(nodes, below))
    }

    /// `below[a]` must be the reflexive down-set of `a` in a partial order.
    fn from_closure(nodes: Vec<K>, below: Vec<FixedBitSet>) -> Self {
        let n = nodes.len();
        // Dominating nodes have strictly larger down-sets.
        let mut by_size: Vec<usize> = (0..n).collect();
        by_size.sort_by_key(|&a| (Reverse(below[a].count_ones(..)), a));
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for a in 0..n {
            let mut open = below[a].clone();
            open.set(a, false);
            for &c in &by_size {
                if open.contains(c) {
                    children[a].push(c);
                    parents[c].push(a);
                    open.difference_with(&below[c]);
                }
            }
        }
        for list in children.iter_mut().chain(parents.iter_mut()) {
            list.sort_unstable();
        }
        let mut covers: Vec<(usize, usize)> = children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&c| (a, c)))
            .collect();
        covers.sort_unstable();
        let indegree = parents.iter().map(Vec::len).collect();
        let topo = kahn(&children, indegree).expect("closure of a partial order is acyclic");
        Self {
            nodes,
            covers,
            topo,
            parents,
            children,
            below,
        }
    }

    /// The sub-poset on `keep` (indices into this poset), with the order
    /// inherited through the full closure. Nodes keep the given order.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let k = keep.len();
        let nodes = keep.iter().map(|&a| self.nodes[a].clone()).collect();
        let below = keep
            .iter()
            .map(|&a| {
                let mut set = FixedBitSet::with_capacity(k);
                for (j, &b) in keep.iter().enumerate() {
                    if self.below[a].contains(b) {
                        set.insert(j);
                    }
                }
                set
            })
            .collect();
        Self::from_closure(nodes, below)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[K] {
        &self.nodes
    }

    pub fn index_of(&self, key: &K) -> Option<usize> {
        self.nodes.iter().position(|k| k == key)
    }

    /// Cover edges `(dominating, dominated)`, sorted.
    pub fn covers(&self) -> &[(usize, usize)] {
        &self.covers
    }

    /// A linear extension, dominating nodes first; the smallest available
    /// index is taken at every step.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Nodes covering `a`.
    pub fn parents(&self, a: usize) -> &[usize] {
        &self.parents[a]
    }

    /// Nodes covered by `a`.
    pub fn children(&self, a: usize) -> &[usize] {
        &self.children[a]
    }

    /// Whether node `a` dominates node `b` (reflexive).
    pub fn is_above(&self, a: usize, b: usize) -> bool {
        self.below[a].contains(b)
    }

    /// Reflexive-transitive closure as `(dominating, dominated)` pairs.
    pub fn transitive_closure(&self) -> BTreeSet<(usize, usize)> {
        self.below
            .iter()
            .enumerate()
            .flat_map(|(a, set)| set.ones().map(move |b| (a, b)))
            .collect()
    }

    /// Whether `values` (indexed by node) never decreases along dominance.
    pub fn is_monotone(&self, values: &[u8]) -> bool {
        self.covers.iter().all(|&(a, b)| values[a] >= values[b])
    }

    pub(crate) fn space(&self, labels: u8) -> Space<'_> {
        Space {
            order: &self.topo,
            parents: &self.parents,
            labels,
        }
    }

    /// Number of order-preserving maps into `1..=labels`.
    pub fn count_monotone_maps(&self, labels: u8) -> Result<u128> {
        self.count_monotone_maps_capped(labels, DEFAULT_UPSET_CAP)
    }

    /// As [`BucketPoset::count_monotone_maps`], failing when more than
    /// `upset_cap` up-sets would have to be materialized.
    pub fn count_monotone_maps_capped(&self, labels: u8, upset_cap: u128) -> Result<u128> {
        if labels == 0 {
            return Err(Error::InvalidConfig("labels must be at least 1".into()));
        }
        if labels == 1 {
            return Ok(1);
        }
        // A monotone map into 1..=L is a chain U_1 ⊇ ... ⊇ U_{L-1} of
        // up-sets, U_k = {g > k}. Count chains by repeated zeta transforms
        // over the lattice of up-sets.
        let sets = self.up_sets(upset_cap)?;
        let index: HashMap<&FixedBitSet, usize> =
            sets.iter().enumerate().map(|(i, s)| (s, i)).collect();
        // For each node x: the up-sets where x is minimal, paired with U \ {x}.
        let mut steps: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.len()];
        for (u, set) in sets.iter().enumerate() {
            for x in set.ones() {
                if self.children[x].iter().all(|&c| !set.contains(c)) {
                    let mut smaller = set.clone();
                    smaller.set(x, false);
                    steps[x].push((u, index[&smaller]));
                }
            }
        }
        let overflow = || Error::CapExceeded {
            what: "monotone map count".into(),
            count: u128::MAX,
            cap: u128::MAX,
        };
        let mut f = vec![1u128; sets.len()];
        for _ in 2..labels {
            for &x in &self.topo {
                for &(u, v) in &steps[x] {
                    f[u] = f[u].checked_add(f[v]).ok_or_else(overflow)?;
                }
            }
        }
        f.iter()
            .try_fold(0u128, |acc, &x| acc.checked_add(x))
            .ok_or_else(overflow)
    }

    /// All up-sets (sets closed under going up), in a fixed order.
    fn up_sets(&self, cap: u128) -> Result<Vec<FixedBitSet>> {
        let n = self.len();
        let mut out = Vec::new();
        let mut current = FixedBitSet::with_capacity(n);
        let mut stack: Vec<(usize, bool)> = vec![(0, false)];
        // Iterative include/exclude over the topological order.
        while let Some((pos, included)) = stack.pop() {
            if pos > 0 {
                let x = self.topo[pos - 1];
                current.set(x, included);
            }
            for later in pos..n {
                current.set(self.topo[later], false);
            }
            if pos == n {
                out.push(current.clone());
                if out.len() as u128 > cap {
                    return Err(Error::CapExceeded {
                        what: "up-sets".into(),
                        count: out.len() as u128,
                        cap,
                    });
                }
                continue;
            }
            let x = self.topo[pos];
            stack.push((pos + 1, false));
            if self.parents[x].iter().all(|&p| current.contains(p)) {
                stack.push((pos + 1, true));
            }
        }
        Ok(out)
    }

    /// Streams every order-preserving map into `1..=labels`, failing up
    /// front when there are more than `cap` of them.
    pub fn enumerate_monotone_maps(&self, labels: u8, cap: u128) -> Result<MonotoneMaps<'_>> {
        let count = self.count_monotone_maps_capped(labels, cap.max(1))?;
        if count > cap {
            return Err(Error::CapExceeded {
                what: "dominance-consistent mappings".into(),
                count,
                cap,
            });
        }
        Ok(MonotoneMaps {
            order: &self.topo,
            parents: &self.parents,
            labels,
            values: Vec::new(),
            started: false,
        })
    }
}

impl BucketPoset<ResponseCounts> {
    /// Mapping over this poset's nodes.
    pub fn mapping(&self, values: Vec<u8>) -> Result<Mapping> {
        Mapping::new(self.nodes.clone(), values)
    }
}

fn check_distinct<K: Eq + Hash + Debug>(nodes: &[K]) -> Result<()> {
    let mut seen = HashMap::with_capacity(nodes.len());
    for (i, k) in nodes.iter().enumerate() {
        if let Some(j) = seen.insert(k, i) {
            return Err(Error::InvalidConfig(format!(
                "duplicate poset node {k:?} at positions {j} and {i}"
            )));
        }
    }
    Ok(())
}

/// Topological order taking the smallest ready index first.
fn kahn(succ: &[Vec<usize>], mut indegree: Vec<usize>) -> Option<Vec<usize>> {
    let mut ready: BinaryHeap<Reverse<usize>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(a, _)| Reverse(a))
        .collect();
    let mut order = Vec::with_capacity(succ.len());
    while let Some(Reverse(a)) = ready.pop() {
        order.push(a);
        for &b in &succ[a] {
            indegree[b] -= 1;
            if indegree[b] == 0 {
                ready.push(Reverse(b));
            }
        }
    }
    (order.len() == succ.len()).then_some(order)
}

/// Iterator over order-preserving labelings (indexed by node), in
/// lexicographic order along the topological order.
pub struct MonotoneMaps<'a> {
    order: &'a [usize],
    parents: &'a [Vec<usize>],
    labels: u8,
    values: Vec<u8>,
    started: bool,
}

impl Iterator for MonotoneMaps<'_> {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        if !self.started {
            self.started = true;
            self.values = vec![1; self.order.len()];
            return Some(self.values.clone());
        }
        let upper = |values: &[u8], x: usize| {
            self.parents[x]
                .iter()
                .map(|&p| values[p])
                .min()
                .unwrap_or(self.labels)
        };
        let k = (0..self.order.len())
            .rev()
            .find(|&k| self.values[self.order[k]] < upper(&self.values, self.order[k]))?;
        self.values[self.order[k]] += 1;
        for &later in &self.order[k + 1..] {
            self.values[later] = 1;
        }
        Some(self.values.clone())
    }
}

/// The dominance poset on all tallies of `m` responses over `ratings` values.
pub fn build_rating_poset(ratings: usize, m: u32) -> Result<BucketPoset<ResponseCounts>> {
    build_rating_poset_capped(ratings, m, DEFAULT_NODE_CAP)
}

pub fn build_rating_poset_capped(
    ratings: usize,
    m: u32,
    node_cap: u128,
) -> Result<BucketPoset<ResponseCounts>> {
    if ratings < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 rating values, got {ratings}"
        )));
    }
    let size = binomial(ratings as u128 + m as u128 - 1, ratings as u128 - 1).unwrap_or(u128::MAX);
    if size > node_cap {
        return Err(Error::CapExceeded {
            what: "poset nodes".into(),
            count: size,
            cap: node_cap,
        });
    }
    let nodes = compositions(ratings, m);
    let index: HashMap<&ResponseCounts, usize> =
        nodes.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut covers = Vec::new();
    for (b, key) in nodes.iter().enumerate() {
        // Move one response from rating r-1 up to r.
        let high_to_low = key.as_slice();
        for pos in 1..ratings {
            if high_to_low[pos] > 0 {
                let mut up = high_to_low.to_vec();
                up[pos] -= 1;
                up[pos - 1] += 1;
                covers.push((index[&ResponseCounts::new(up)], b));
            }
        }
    }
    BucketPoset::from_relation(nodes, &covers)
}
