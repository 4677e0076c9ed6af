//! Finite nondeterministic transition systems with nonnegative running costs.
//!
//! Transitions are stored in compressed form: one offset per `(state, input)`
//! pair into a flat successor array. The pair index is `state * num_inputs +
//! input`. A reverse adjacency (successor -> pairs) is built once on
//! construction since every solver needs it.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Running-cost value. `f64::INFINITY` is the "forbidden" sentinel; IEEE
/// addition already saturates (`inf + c == inf`) for nonnegative costs.
pub type Cost = f64;

pub const INFINITY: Cost = f64::INFINITY;

/// Fixed-size bitset over state indices.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    len: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for StateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl StateSet {
    pub fn empty(len: usize) -> Self {
        StateSet {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut s = StateSet {
            len,
            words: vec![u64::MAX; len.div_ceil(64)],
        };
        s.clear_tail();
        s
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = StateSet::empty(len);
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Rebuilds a set from raw words, e.g. when loading a persisted file.
    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::usage("bitset word count does not match length"));
        }
        let mut s = StateSet { len, words };
        s.clear_tail();
        Ok(s)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn capacity(&self) -> usize {
        self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "state {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "state {i} out of range {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.difference(other).is_empty()
    }

    fn zip_with(&self, other: &StateSet, op: impl Fn(u64, u64) -> u64) -> StateSet {
        assert_eq!(self.len, other.len, "state sets over different spaces");
        StateSet {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }
}

/// Storage of the running cost `g(x, y, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepCosts {
    /// One value per `(state, input)` pair, used when `g` does not depend on
    /// the successor.
    PerPair(Vec<Cost>),
    /// One value per stored transition, aligned with the successor array.
    PerEdge(Vec<Cost>),
}

#[derive(Debug, Clone)]
pub struct FiniteSystem {
    num_states: usize,
    num_inputs: usize,
    offsets: Vec<usize>,
    successors: Vec<u32>,
    costs: StepCosts,
    pred_offsets: Vec<usize>,
    preds: Vec<u32>,
}

impl FiniteSystem {
    /// Builds a system from compressed adjacency. Successor lists must be
    /// nonempty; they are sorted and deduplicated here (duplicate edges keep
    /// the larger cost).
    pub fn from_csr(
        num_states: usize,
        num_inputs: usize,
        offsets: Vec<usize>,
        successors: Vec<u32>,
        costs: StepCosts,
    ) -> Result<Self> {
        let pairs = num_states
            .checked_mul(num_inputs)
            .ok_or_else(|| Error::usage("state/input product overflows"))?;
        if num_states == 0 || num_inputs == 0 {
            return Err(Error::usage("system needs at least one state and one input"));
        }
        if num_states > u32::MAX as usize || pairs > u32::MAX as usize {
            return Err(Error::usage("system too large for 32-bit indices"));
        }
        if offsets.len() != pairs + 1 || offsets[0] != 0 || *offsets.last().unwrap() != successors.len() {
            return Err(Error::usage("offset table does not match successor array"));
        }
        match &costs {
            StepCosts::PerPair(c) if c.len() != pairs => {
                return Err(Error::usage("per-pair cost table has wrong length"))
            }
            StepCosts::PerEdge(c) if c.len() != successors.len() => {
                return Err(Error::usage("per-edge cost table has wrong length"))
            }
            _ => {}
        }
        let cost_slice = match &costs {
            StepCosts::PerPair(c) | StepCosts::PerEdge(c) => c,
        };
        if let Some(bad) = cost_slice.iter().find(|c| c.is_nan() || **c < 0.0) {
            return Err(Error::usage(format!("step cost {bad} is not in [0, inf]")));
        }
        if let Some(&y) = successors.iter().find(|&&y| y as usize >= num_states) {
            return Err(Error::usage(format!("successor {y} out of range {num_states}")));
        }

        let (offsets, successors, costs) = normalize(offsets, successors, costs)?;
        let (pred_offsets, preds) = reverse(num_states, num_inputs, &offsets, &successors);
        Ok(FiniteSystem {
            num_states,
            num_inputs,
            offsets,
            successors,
            costs,
            pred_offsets,
            preds,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_transitions(&self) -> usize {
        self.successors.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn successor_array(&self) -> &[u32] {
        &self.successors
    }

    pub fn step_costs(&self) -> &StepCosts {
        &self.costs
    }

    fn check(&self, x: usize, u: usize) -> Result<usize> {
        if x >= self.num_states || u >= self.num_inputs {
            return Err(Error::usage(format!(
                "index (state {x}, input {u}) out of range ({}, {})",
                self.num_states, self.num_inputs
            )));
        }
        Ok(x * self.num_inputs + u)
    }

    pub fn successors(&self, x: usize, u: usize) -> Result<&[u32]> {
        let p = self.check(x, u)?;
        Ok(self.pair_successors(p))
    }

    pub fn worst_case_step_cost(&self, x: usize, u: usize) -> Result<Cost> {
        let p = self.check(x, u)?;
        Ok(self.pair_worst_cost(p))
    }

    /// Cost of the `k`-th stored successor of pair `p`.
    pub fn step_cost(&self, x: usize, u: usize, y: usize) -> Result<Cost> {
        let p = self.check(x, u)?;
        let succ = self.pair_successors(p);
        let k = succ
            .binary_search(&(y as u32))
            .map_err(|_| Error::usage(format!("{y} is not a successor of ({x}, {u})")))?;
        Ok(self.edge_cost(p, k))
    }

    #[inline]
    pub(crate) fn pair_successors(&self, p: usize) -> &[u32] {
        &self.successors[self.offsets[p]..self.offsets[p + 1]]
    }

    #[inline]
    pub(crate) fn edge_cost(&self, p: usize, k: usize) -> Cost {
        match &self.costs {
            StepCosts::PerPair(c) => c[p],
            StepCosts::PerEdge(c) => c[self.offsets[p] + k],
        }
    }

    pub(crate) fn pair_worst_cost(&self, p: usize) -> Cost {
        match &self.costs {
            StepCosts::PerPair(c) => c[p],
            StepCosts::PerEdge(c) => c[self.offsets[p]..self.offsets[p + 1]]
                .iter()
                .fold(0.0, |a, &b| a.max(b)),
        }
    }

    /// `max_y g(x, y, u) + values[y]` over the successors of pair `p`.
    #[inline]
    pub(crate) fn pair_q(&self, p: usize, values: &[Cost]) -> Cost {
        let succ = self.pair_successors(p);
        match &self.costs {
            StepCosts::PerPair(c) => {
                let worst = succ.iter().fold(0.0f64, |a, &y| a.max(values[y as usize]));
                c[p] + worst
            }
            StepCosts::PerEdge(c) => {
                let base = self.offsets[p];
                succ.iter()
                    .enumerate()
                    .fold(0.0f64, |a, (k, &y)| a.max(c[base + k] + values[y as usize]))
            }
        }
    }

    /// Pair indices `x * num_inputs + u` having `y` as a successor.
    #[inline]
    pub(crate) fn predecessor_pairs(&self, y: usize) -> &[u32] {
        &self.preds[self.pred_offsets[y]..self.pred_offsets[y + 1]]
    }

    /// True when every finite step cost is strictly positive.
    pub fn finite_costs_positive(&self) -> bool {
        let c = match &self.costs {
            StepCosts::PerPair(c) | StepCosts::PerEdge(c) => c,
        };
        c.iter().all(|&v| v > 0.0)
    }

    /// Parses the plain-text fixture format: a header `states N inputs M`
    /// followed by lines `x u y cost`. `#` starts a comment; `inf` is accepted
    /// as a cost.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "states" || h[2] != "inputs" {
            return Err(Error::Parse {
                line: hline,
                msg: "expected `states N inputs M`".into(),
            });
        }
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad integer {s:?}: {e}"),
            })
        };
        let n = parse_usize(h[1], hline)?;
        let m = parse_usize(h[3], hline)?;
        let mut b = FiniteSystemBuilder::new(n, m);
        for (line, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line,
                    msg: "expected `x u y cost`".into(),
                });
            }
            let cost = f[3].parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad cost {:?}: {e}", f[3]),
            })?;
            b.add_checked(
                parse_usize(f[0], line)?,
                parse_usize(f[1], line)?,
                parse_usize(f[2], line)?,
                cost,
            )
            .map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        b.build()
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("states {} inputs {}\n", self.num_states, self.num_inputs);
        for x in 0..self.num_states {
            for u in 0..self.num_inputs {
                let p = x * self.num_inputs + u;
                for (k, &y) in self.pair_successors(p).iter().enumerate() {
                    let _ = writeln!(s, "{x} {u} {y} {}", self.edge_cost(p, k));
                }
            }
        }
        s
    }
}

fn normalize(
    offsets: Vec<usize>,
    successors: Vec<u32>,
    costs: StepCosts,
) -> Result<(Vec<usize>, Vec<u32>, StepCosts)> {
    let pairs = offsets.len() - 1;
    let already_sorted = (0..pairs).all(|p| {
        let s = &successors[offsets[p]..offsets[p + 1]];
        !s.is_empty() && s.windows(2).all(|w| w[0] < w[1])
    });
    if already_sorted {
        return Ok((offsets, successors, costs));
    }
    let mut new_off = Vec::with_capacity(offsets.len());
    let mut new_succ = Vec::with_capacity(successors.len());
    let mut new_cost = Vec::new();
    new_off.push(0);
    for p in 0..pairs {
        let range = offsets[p]..offsets[p + 1];
        if range.is_empty() {
            return Err(Error::usage(format!(
                "pair {p} has no successor; system must be strict"
            )));
        }
        let mut edges: Vec<(u32, f64)> = range
            .clone()
            .map(|e| {
                let c = match &costs {
                    StepCosts::PerEdge(c) => c[e],
                    StepCosts::PerPair(_) => 0.0,
                };
                (successors[e], c)
            })
            .collect();
        edges.sort_by_key(|e| e.0);
        let mut last: Option<u32> = None;
        for (y, c) in edges {
            if last == Some(y) {
                if let Some(prev) = new_cost.last_mut() {
                    let prev: &mut f64 = prev;
                    *prev = prev.max(c);
                }
                continue;
            }
            last = Some(y);
            new_succ.push(y);
            new_cost.push(c);
        }
        new_off.push(new_succ.len());
    }
    let costs = match costs {
        StepCosts::PerPair(c) => StepCosts::PerPair(c),
        StepCosts::PerEdge(_) => StepCosts::PerEdge(new_cost),
    };
    Ok((new_off, new_succ, costs))
}

fn reverse(
    num_states: usize,
    num_inputs: usize,
    offsets: &[usize],
    successors: &[u32],
) -> (Vec<usize>, Vec<u32>) {
    let mut counts = vec![0usize; num_states + 1];
    for &y in successors {
        counts[y as usize + 1] += 1;
    }
    for i in 0..num_states {
        counts[i + 1] += counts[i];
    }
    let pred_offsets = counts.clone();
    let mut fill = counts;
    let mut preds = vec![0u32; successors.len()];
    for p in 0..num_states * num_inputs {
        for &y in &successors[offsets[p]..offsets[p + 1]] {
            preds[fill[y as usize]] = p as u32;
            fill[y as usize] += 1;
        }
    }
    (pred_offsets, preds)
}

/// Incremental construction of small hand-built systems.
#[derive(Debug, Clone)]
pub struct FiniteSystemBuilder {
    num_states: usize,
    num_inputs: usize,
    edges: Vec<Vec<(u32, Cost)>>,
}

impl FiniteSystemBuilder {
    pub fn new(num_states: usize, num_inputs: usize) -> Self {
        FiniteSystemBuilder {
            num_states,
            num_inputs,
            edges: vec![Vec::new(); num_states * num_inputs],
        }
    }

    /// Adds transition `x --u--> y` with running cost `cost`. Panics on bad
    /// indices; use [`Self::add_checked`] for untrusted input.
    pub fn add(&mut self, x: usize, u: usize, y: usize, cost: Cost) -> &mut Self {
        self.add_checked(x, u, y, cost).expect("invalid transition");
        self
    }

    pub fn add_checked(&mut self, x: usize, u: usize, y: usize, cost: Cost) -> Result<()> {
        if x >= self.num_states || y >= self.num_states || u >= self.num_inputs {
            return Err(Error::usage(format!(
                "transition {x} --{u}--> {y} out of range"
            )));
        }
        if cost.is_nan() || cost < 0.0 {
            return Err(Error::usage(format!("step cost {cost} is not in [0, inf]")));
        }
        self.edges[x * self.num_inputs + u].push((y as u32, cost));
        Ok(())
    }

    pub fn build(&self) -> Result<FiniteSystem> {
        let mut offsets = Vec::with_capacity(self.edges.len() + 1);
        let mut succ = Vec::new();
        let mut costs = Vec::new();
        offsets.push(0);
        for (p, list) in self.edges.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::usage(format!(
                    "pair (state {}, input {}) has no successor; system must be strict",
                    p / self.num_inputs,
                    p % self.num_inputs
                )));
            }
            for &(y, c) in list {
                succ.push(y);
                costs.push(c);
            }
            offsets.push(succ.len());
        }
        FiniteSystem::from_csr(
            self.num_states,
            self.num_inputs,
            offsets,
            succ,
            StepCosts::PerEdge(costs),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> FiniteSystem {
        let mut b = FiniteSystemBuilder::new(3, 1);
        b.add(0, 0, 1, 1.0).add(1, 0, 2, 1.0).add(2, 0, 2, 1.0);
        b.add(1, 0, 1, 1.0);
        b.build().unwrap()
    }

    #[test]
    fn successors_of_chain() {
        let s = chain();
        assert_eq!(s.successors(0, 0).unwrap(), &[1]);
        assert_eq!(s.successors(2, 0).unwrap(), &[2]);
        assert_eq!(s.successors(1, 0).unwrap(), &[1, 2]);
        assert!(matches!(s.successors(3, 0), Err(Error::Usage(_))));
        assert!(matches!(s.successors(0, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn worst_case_cost_takes_max() {
        let mut b = FiniteSystemBuilder::new(3, 1);
        b.add(0, 0, 1, 1.0);
        b.add(1, 0, 0, 1.0).add(1, 0, 2, INFINITY);
        b.add(2, 0, 0, 0.5).add(2, 0, 1, 0.7);
        let s = b.build().unwrap();
        assert_eq!(s.worst_case_step_cost(0, 0).unwrap(), 1.0);
        assert_eq!(s.worst_case_step_cost(1, 0).unwrap(), INFINITY);
        assert_eq!(s.worst_case_step_cost(2, 0).unwrap(), 0.7);
    }

    #[test]
    fn strictness_enforced() {
        let mut b = FiniteSystemBuilder::new(2, 1);
        b.add(0, 0, 1, 1.0);
        assert!(b.build().is_err());
        assert!(b.add_checked(0, 0, 0, -1.0).is_err());
        assert!(b.add_checked(0, 0, 0, f64::NAN).is_err());
    }

    #[test]
    fn duplicate_edges_keep_max_cost() {
        let mut b = FiniteSystemBuilder::new(2, 1);
        b.add(0, 0, 1, 1.0).add(0, 0, 1, 3.0).add(1, 0, 1, 1.0);
        let s = b.build().unwrap();
        assert_eq!(s.successors(0, 0).unwrap(), &[1]);
        assert_eq!(s.step_cost(0, 0, 1).unwrap(), 3.0);
    }

    #[test]
    fn text_format_roundtrip_and_errors() {
        let text = "# chain\nstates 3 inputs 1\n0 0 1 1\n1 0 2 1\n2 0 2 inf\n";
        let s = FiniteSystem::parse_text(text).unwrap();
        assert_eq!(s.worst_case_step_cost(2, 0).unwrap(), INFINITY);
        let again = FiniteSystem::parse_text(&s.to_text()).unwrap();
        assert_eq!(again.to_text(), s.to_text());

        let err = FiniteSystem::parse_text("states 2 inputs 1\n0 0 1 1\n1 0 x 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = FiniteSystem::parse_text("states 2 inputs 1\n0 0 5 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn predecessors_cover_all_edges() {
        let s = chain();
        let preds: Vec<_> = s.predecessor_pairs(2).to_vec();
        assert_eq!(preds, vec![1, 2]);
        assert_eq!(s.predecessor_pairs(0), &[] as &[u32]);
    }

    #[test]
    fn stateset_basics() {
        let mut a = StateSet::empty(130);
        a.insert(0);
        a.insert(64);
        a.insert(129);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        assert_eq!(a.count(), 3);
        a.remove(64);
        assert!(!a.contains(64));
        assert_eq!(StateSet::full(130).count(), 130);
        assert!(StateSet::empty(5).is_empty());
    }

    proptest! {
        #[test]
        fn difference_laws(
            a in proptest::collection::vec(any::<bool>(), 1..300),
            seed in proptest::collection::vec(any::<bool>(), 300),
        ) {
            let n = a.len();
            let sa = StateSet::from_indices(n, a.iter().enumerate().filter(|p| *p.1).map(|p| p.0));
            let sb = StateSet::from_indices(n, seed[..n].iter().enumerate().filter(|p| *p.1).map(|p| p.0));
            let d = sa.difference(&sb);
            prop_assert!(d.is_subset(&sa));
            prop_assert!(d.intersection(&sb).is_empty());
            prop_assert_eq!(d.union(&sa.intersection(&sb)), sa.clone());
            prop_assert!(d.count() <= n);
        }
    }
}
