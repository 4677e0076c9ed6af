//! Classical asymmetric TSP on a cost matrix: exact Held-Karp for small
//! instances and a nearest-neighbor + 2-opt + Or-opt local search otherwise.
//!
//! Cities are 0-based internally; city 0 is the depot. [`Tour`] displays
//! 1-based like the usual `(1, t2, ..., tN, 1)` notation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_EXACT_CITIES: usize = 16;

/// Closed tour `[0, t2, ..., tN, 0]` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tour(Vec<usize>);

impl Tour {
    pub fn new(seq: Vec<usize>) -> Result<Self> {
        let t = Tour(seq);
        t.validate()?;
        Ok(t)
    }

    /// Builds a tour from the visiting order of the non-depot cities.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let mut seq = Vec::with_capacity(order.len() + 2);
        seq.push(0);
        seq.extend_from_slice(order);
        seq.push(0);
        Self::new(seq)
    }

    /// Converts a cyclic permutation (any rotation) to a depot-anchored tour.
    pub fn from_cycle(cycle: &[usize]) -> Result<Self> {
        let pos = cycle
            .iter()
            .position(|&c| c == 0)
            .ok_or_else(|| Error::usage("cycle does not contain the depot"))?;
        let mut seq: Vec<usize> = cycle[pos..].iter().chain(&cycle[..pos]).copied().collect();
        seq.push(0);
        Self::new(seq)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.0;
        if s.len() < 3 || s[0] != 0 || *s.last().unwrap() != 0 {
            return Err(Error::usage("tour must start and end at the depot and have N >= 2"));
        }
        let n = s.len() - 1;
        let mut seen = vec![false; n];
        for &c in &s[1..n] {
            if c == 0 || c >= n || seen[c] {
                return Err(Error::usage(format!("tour {self} is not a permutation")));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn cities(&self) -> &[usize] {
        &self.0
    }

    /// Number of cities `N` (the sequence has `N + 1` entries).
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// City at 1-based tour position `i ∈ [1, N+1]`.
    pub fn at(&self, i: usize) -> usize {
        self.0[i - 1]
    }

    pub fn all_tours(n: usize) -> Vec<Tour> {
        let mut rest: Vec<usize> = (1..n).collect();
        let mut out = Vec::new();
        permute(&mut rest, 0, &mut |p| out.push(Tour::from_order(p).unwrap()));
        out
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

impl fmt::Display for Tour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", c + 1)?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtspInstance {
    n: usize,
    c: Vec<f64>,
}

impl AtspInstance {
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::usage("need at least two cities"));
        }
        if matrix.len() != n * n {
            return Err(Error::usage("cost matrix must be N x N"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = matrix[i * n + j];
                if i != j && !(v.is_finite() && v >= 0.0) {
                    return Err(Error::usage(format!(
                        "off-diagonal cost C[{i}][{j}] = {v} must be finite and nonnegative"
                    )));
                }
            }
        }
        Ok(AtspInstance { n, c: matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.len(), rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.n + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.c
    }

    pub fn tour_cost(&self, t: &Tour) -> Result<f64> {
        if t.len() != self.n {
            return Err(Error::usage(format!(
                "tour of length {} does not match instance of {} cities",
                t.len(),
                self.n
            )));
        }
        Ok(seq_cost(self, t.cities()))
    }
}

fn seq_cost(inst: &AtspInstance, seq: &[usize]) -> f64 {
    seq.windows(2).map(|w| inst.cost(w[0], w[1])).sum()
}

/// Held-Karp dynamic program over subsets of non-depot cities.
pub fn solve_exact(inst: &AtspInstance) -> Result<Tour> {
    let n = inst.n;
    if n > MAX_EXACT_CITIES {
        return Err(Error::Capacity {
            n,
            max: MAX_EXACT_CITIES,
        });
    }
    let k = n - 1;
    let full = (1usize << k) - 1;
    // best[mask * k + last]: cheapest path from the depot through `mask`
    // ending at city `last + 1`.
    let mut best = vec![f64::INFINITY; (1 << k) * k];
    let mut parent = vec![u8::MAX; (1 << k) * k];
    for j in 0..k {
        best[(1 << j) * k + j] = inst.cost(0, j + 1);
    }
    for mask in 1..=full {
        for last in 0..k {
            if mask & (1 << last) == 0 {
                continue;
            }
            let cur = best[mask * k + last];
            if cur == f64::INFINITY {
                continue;
            }
            for next in 0..k {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nm = mask | (1 << next);
                let cand = cur + inst.cost(last + 1, next + 1);
                if cand < best[nm * k + next] {
                    best[nm * k + next] = cand;
                    parent[nm * k + next] = last as u8;
                }
            }
        }
    }
    let mut end = 0;
    let mut end_cost = f64::INFINITY;
    for last in 0..k {
        let c = best[full * k + last] + inst.cost(last + 1, 0);
        if c < end_cost {
            end_cost = c;
            end = last;
        }
    }
    let mut order = Vec::with_capacity(k);
    let mut mask = full;
    let mut cur = end;
    loop {
        order.push(cur + 1);
        let p = parent[mask * k + cur];
        mask &= !(1 << cur);
        if p == u8::MAX {
            break;
        }
        cur = p as usize;
    }
    order.reverse();
    Tour::from_order(&order)
}

/// Nearest neighbor from the depot (ties to the lowest index).
pub fn nearest_neighbor(inst: &AtspInstance) -> Tour {
    let n = inst.n;
    let mut visited = vec![false; n];
    visited[0] = true;
    let mut order = Vec::with_capacity(n - 1);
    let mut cur = 0;
    for _ in 1..n {
        let next = (1..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| inst.cost(cur, a).total_cmp(&inst.cost(cur, b)))
            .unwrap();
        visited[next] = true;
        order.push(next);
        cur = next;
    }
    Tour::from_order(&order).unwrap()
}

const EPS: f64 = 1e-12;

/// Heuristic solver: nearest neighbor improved to a 2-opt/Or-opt local
/// optimum, followed by seeded random restarts that replace the incumbent
/// only on strict improvement.
pub fn solve_heuristic(inst: &AtspInstance, seed: u64) -> Tour {
    let mut best = nearest_neighbor(inst).0;
    local_search(inst, &mut best);
    let mut best_cost = seq_cost(inst, &best);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = 4 * inst.n;
    for _ in 0..restarts {
        let mut order: Vec<usize> = (1..inst.n).collect();
        order.shuffle(&mut rng);
        let mut seq = Vec::with_capacity(inst.n + 1);
        seq.push(0);
        seq.extend(order);
        seq.push(0);
        local_search(inst, &mut seq);
        let c = seq_cost(inst, &seq);
        if c < best_cost - EPS {
            best_cost = c;
            best = seq;
        }
    }
    Tour(best)
}

fn local_search(inst: &AtspInstance, seq: &mut Vec<usize>) {
    loop {
        let improved = two_opt_pass(inst, seq) | or_opt_pass(inst, seq);
        if !improved {
            break;
        }
    }
}

/// Best-improvement 2-opt. Reversing `seq[i..=j]` flips the direction of its
/// internal arcs, so the delta uses forward and backward prefix sums.
fn two_opt_pass(inst: &AtspInstance, seq: &mut [usize]) -> bool {
    let len = seq.len();
    if len < 4 {
        return false;
    }
    let mut improved = false;
    loop {
        let mut fwd = vec![0.0; len];
        let mut bwd = vec![0.0; len];
        for k in 1..len {
            fwd[k] = fwd[k - 1] + inst.cost(seq[k - 1], seq[k]);
            bwd[k] = bwd[k - 1] + inst.cost(seq[k], seq[k - 1]);
        }
        let mut best = (-EPS, 0, 0);
        for i in 1..len - 2 {
            for j in i + 1..len - 1 {
                let before = inst.cost(seq[i - 1], seq[i])
                    + (fwd[j] - fwd[i])
                    + inst.cost(seq[j], seq[j + 1]);
                let after = inst.cost(seq[i - 1], seq[j])
                    + (bwd[j] - bwd[i])
                    + inst.cost(seq[i], seq[j + 1]);
                let delta = after - before;
                if delta < best.0 {
                    best = (delta, i, j);
                }
            }
        }
        if best.1 == 0 {
            return improved;
        }
        let old = seq_cost(inst, seq);
        seq[best.1..=best.2].reverse();
        // Prefix-sum deltas can drift; only accept a real improvement.
        if seq_cost(inst, seq) >= old - EPS {
            seq[best.1..=best.2].reverse();
            return improved;
        }
        improved = true;
    }
}

/// First-improvement Or-opt: relocate segments of 1 to 3 cities.
fn or_opt_pass(inst: &AtspInstance, seq: &mut Vec<usize>) -> bool {
    let mut improved = false;
    let mut again = true;
    while again {
        again = false;
        let cur = seq_cost(inst, seq);
        'search: for seg_len in 1..=3usize {
            let inner = seq.len() - 2;
            if seg_len >= inner {
                break;
            }
            for i in 1..=inner + 1 - seg_len {
                let seg: Vec<usize> = seq[i..i + seg_len].to_vec();
                let mut rest: Vec<usize> = seq[..i].to_vec();
                rest.extend_from_slice(&seq[i + seg_len..]);
                for pos in 1..rest.len() {
                    if pos == i {
                        continue;
                    }
                    let removed = inst.cost(seq[i - 1], seg[0])
                        + inst.cost(seg[seg_len - 1], seq[i + seg_len])
                        - inst.cost(seq[i - 1], seq[i + seg_len]);
                    let added = inst.cost(rest[pos - 1], seg[0])
                        + inst.cost(seg[seg_len - 1], rest[pos])
                        - inst.cost(rest[pos - 1], rest[pos]);
                    if added - removed < -EPS {
                        let mut cand = rest[..pos].to_vec();
                        cand.extend_from_slice(&seg);
                        cand.extend_from_slice(&rest[pos..]);
                        if seq_cost(inst, &cand) < cur - EPS {
                            *seq = cand;
                            improved = true;
                            again = true;
                            break 'search;
                        }
                    }
                }
            }
        }
    }
    improved
}
