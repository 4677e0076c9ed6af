//! Uniform hyper-rectangular grid over the state domain, plus box-union
//! regions evaluated against grid cells.

use crate::dynamics::IntervalBox;
use crate::error::{Error, Result};

/// Slack in cell units when mapping box bounds to indices.
const SNAP: f64 = 1e-9;

/// Uniform grid with half-open cells `[lower + i·eta, lower + (i+1)·eta)`.
/// Cell indices are row-major in declaration order (last dimension fastest).
/// Index `num_cells()` is the sink standing for everything outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    lower: Vec<f64>,
    eta: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    strides: Vec<usize>,
    num_cells: usize,
}

impl UniformGrid {
    pub fn new(lower: Vec<f64>, eta: Vec<f64>, counts: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let n = lower.len();
        if eta.len() != n || counts.len() != n || periodic.len() != n || n == 0 {
            return Err(Error::usage("grid metadata dimensions differ"));
        }
        if eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::usage("grid parameter must be positive"));
        }
        if counts.contains(&0) {
            return Err(Error::usage("every dimension needs at least one cell"));
        }
        let mut strides = vec![1usize; n];
        for d in (0..n - 1).rev() {
            strides[d] = strides[d + 1]
                .checked_mul(counts[d + 1])
                .ok_or_else(|| Error::usage("grid too large"))?;
        }
        let num_cells = strides[0]
            .checked_mul(counts[0])
            .ok_or_else(|| Error::usage("grid too large"))?;
        Ok(UniformGrid {
            lower,
            eta,
            counts,
            periodic,
            strides,
            num_cells,
        })
    }

    /// Grid over `[lower, upper)` with `counts` cells per dimension. Periodic
    /// dimensions have period `upper - lower`.
    pub fn from_bounds(lower: Vec<f64>, upper: &[f64], counts: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        if upper.len() != lower.len() || counts.len() != lower.len() {
            return Err(Error::usage("grid metadata dimensions differ"));
        }
        let eta = lower
            .iter()
            .zip(upper)
            .zip(&counts)
            .map(|((l, u), &c)| (u - l) / c.max(1) as f64)
            .collect();
        Self::new(lower, eta, counts, periodic)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn upper(&self, d: usize) -> f64 {
        self.lower[d] + self.counts[d] as f64 * self.eta[d]
    }

    pub fn period(&self, d: usize) -> f64 {
        self.counts[d] as f64 * self.eta[d]
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn sink(&self) -> usize {
        self.num_cells
    }

    /// Number of abstract states, sink included.
    pub fn num_states(&self) -> usize {
        self.num_cells + 1
    }

    /// Wraps periodic coordinates of `p` into `[lower, lower + period)`.
    pub fn wrap(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(d, &x)| {
                if self.periodic[d] {
                    let per = self.period(d);
                    let w = self.lower[d] + (x - self.lower[d]).rem_euclid(per);
                    if w >= self.lower[d] + per { self.lower[d] } else { w }
                } else {
                    x
                }
            })
            .collect()
    }

    pub fn quantize(&self, p: &[f64]) -> usize {
        let mut idx = 0;
        for d in 0..self.dim() {
            let x = p[d];
            if !x.is_finite() {
                return self.sink();
            }
            let i = if self.periodic[d] {
                let per = self.period(d);
                let off = (x - self.lower[d]).rem_euclid(per);
                ((off / self.eta[d]).floor() as usize).min(self.counts[d] - 1)
            } else {
                let t = ((x - self.lower[d]) / self.eta[d]).floor();
                if t < 0.0 || t >= self.counts[d] as f64 {
                    return self.sink();
                }
                t as usize
            };
            idx += i * self.strides[d];
        }
        idx
    }

    pub fn multi_index(&self, c: usize) -> Vec<usize> {
        (0..self.dim()).map(|d| (c / self.strides[d]) % self.counts[d]).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn cell_box(&self, c: usize) -> Result<IntervalBox> {
        if c >= self.num_cells {
            return Err(Error::usage(format!("cell {c} is the sink or out of range")));
        }
        Ok(self.cell_box_unchecked(c))
    }

    pub(crate) fn cell_box_unchecked(&self, c: usize) -> IntervalBox {
        let mut center = Vec::with_capacity(self.dim());
        let mut radius = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let i = (c / self.strides[d]) % self.counts[d];
            center.push(self.lower[d] + (i as f64 + 0.5) * self.eta[d]);
            radius.push(0.5 * self.eta[d]);
        }
        IntervalBox { center, radius }
    }

    /// All cells intersecting the closed box, periodic dims wrapped. The
    /// second value is true when the box leaves the domain (sink reachable).
    pub fn cells_intersecting(&self, b: &IntervalBox) -> (Vec<u32>, bool) {
        let n = self.dim();
        let mut ranges: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut escapes = false;
        for d in 0..n {
            let lo = b.center[d] - b.radius[d];
            let hi = b.center[d] + b.radius[d];
            // Closed below, open above, up to rounding slack.
            let a = ((lo - self.lower[d]) / self.eta[d] + SNAP).floor();
            let z = (((hi - self.lower[d]) / self.eta[d] - SNAP).ceil() - 1.0).max(a);
            if !a.is_finite() || !z.is_finite() {
                return (Vec::new(), true);
            }
            if self.periodic[d] {
                let count = self.counts[d] as i64;
                let (a, z) = (a as i64, z as i64);
                if z - a + 1 >= count {
                    ranges.push((0..self.counts[d]).collect());
                } else {
                    ranges.push((a..=z).map(|i| i.rem_euclid(count) as usize).collect());
                }
            } else {
                let max = self.counts[d] as f64 - 1.0;
                if a < 0.0 || z > max {
                    escapes = true;
                }
                let a = a.max(0.0);
                let z = z.min(max);
                if a > z {
                    return (Vec::new(), true);
                }
                ranges.push((a as usize..=z as usize).collect());
            }
        }
        let total: usize = ranges.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        let mut pos = vec![0usize; n];
        loop {
            out.push(
                (0..n)
                    .map(|d| ranges[d][pos[d]] * self.strides[d])
                    .sum::<usize>() as u32,
            );
            let mut d = n;
            loop {
                if d == 0 {
                    out.sort_unstable();
                    out.dedup();
                    return (out, escapes);
                }
                d -= 1;
                pos[d] += 1;
                if pos[d] < ranges[d].len() {
                    break;
                }
                pos[d] = 0;
            }
        }
    }
}

/// Finite union of closed axis-aligned boxes in state space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    pub boxes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Region {
    pub fn new(boxes: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        Region { boxes }
    }

    pub fn single(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Region {
            boxes: vec![(lower, upper)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// A region with periodic coordinates mapped into the grid's canonical
/// window `[lower, lower + period]`, so cell tests are plain interval tests.
#[derive(Debug, Clone)]
pub struct GridRegion {
    pieces: Vec<(Vec<f64>, Vec<f64>)>,
    periodic: Vec<Option<(f64, f64)>>,
}

impl GridRegion {
    pub fn new(grid: &UniformGrid, region: &Region) -> Self {
        let periodic: Vec<Option<(f64, f64)>> = (0..grid.dim())
            .map(|d| grid.periodic[d].then(|| (grid.lower[d], grid.period(d))))
            .collect();
        let mut pieces = Vec::new();
        for (lo, hi) in &region.boxes {
            let mut partial: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new())];
            for d in 0..grid.dim() {
                let ivs: Vec<(f64, f64)> = match periodic[d] {
                    None => vec![(lo[d], hi[d])],
                    Some((base, per)) => wrap_interval(lo[d], hi[d], base, per),
                };
                let mut next = Vec::with_capacity(partial.len() * ivs.len());
                for (pl, ph) in &partial {
                    for &(a, b) in &ivs {
                        let mut l = pl.clone();
                        let mut h = ph.clone();
                        l.push(a);
                        h.push(b);
                        next.push((l, h));
                    }
                }
                partial = next;
            }
            pieces.extend(partial);
        }
        GridRegion { pieces, periodic }
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        let q: Vec<f64> = p
            .iter()
            .zip(&self.periodic)
            .map(|(&x, per)| match per {
                Some((base, period)) => base + (x - base).rem_euclid(*period),
                None => x,
            })
            .collect();
        self.pieces.iter().any(|(lo, hi)| {
            q.iter().enumerate().all(|(d, &x)| {
                let inside = lo[d] <= x && x <= hi[d];
                // The wrap point `base + period` is identified with `base`.
                inside
                    || matches!(self.periodic[d], Some((base, per)) if x == base && hi[d] >= base + per)
            })
        })
    }

    /// Intersection test against a cell box, read half-open like the cell
    /// itself. Periodic dims are taken modulo the period.
    pub fn intersects_box(&self, b: &IntervalBox) -> bool {
        let lo = b.lower();
        let hi = b.upper();
        self.pieces.iter().any(|(pl, ph)| {
            (0..lo.len()).all(|d| {
                let hit = |s: f64| lo[d] + s <= ph[d] && pl[d] < hi[d] + s;
                match self.periodic[d] {
                    Some((_, per)) => hit(0.0) || hit(per) || hit(-per),
                    None => hit(0.0),
                }
            })
        })
    }

    /// True when the closed box is covered by the union of pieces. Boxes are
    /// expected in canonical coordinates (as produced by grid cells).
    pub fn contains_box(&self, b: &IntervalBox) -> bool {
        let lo = b.lower();
        let hi = b.upper();
        let n = lo.len();
        let relevant: Vec<&(Vec<f64>, Vec<f64>)> = self
            .pieces
            .iter()
            .filter(|(pl, ph)| (0..n).all(|d| pl[d] < hi[d] && lo[d] < ph[d]))
            .collect();
        if relevant.is_empty() {
            return false;
        }
        // Coordinate compression: every elementary sub-box lies entirely
        // inside or outside each piece.
        let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(n);
        for d in 0..n {
            let mut c = vec![lo[d], hi[d]];
            for (pl, ph) in &relevant {
                for v in [pl[d], ph[d]] {
                    if v > lo[d] && v < hi[d] {
                        c.push(v);
                    }
                }
            }
            c.sort_by(f64::total_cmp);
            c.dedup();
            cuts.push(c);
        }
        let mut pos = vec![0usize; n];
        loop {
            let mid: Vec<f64> = (0..n)
                .map(|d| 0.5 * (cuts[d][pos[d]] + cuts[d][pos[d] + 1]))
                .collect();
            if !relevant
                .iter()
                .any(|(pl, ph)| (0..n).all(|d| pl[d] <= mid[d] && mid[d] <= ph[d]))
            {
                return false;
            }
            let mut d = n;
            loop {
                if d == 0 {
                    return true;
                }
                d -= 1;
                pos[d] += 1;
                if pos[d] + 1 < cuts[d].len() {
                    break;
                }
                pos[d] = 0;
            }
        }
    }
}

fn wrap_interval(a: f64, b: f64, base: f64, per: f64) -> Vec<(f64, f64)> {
    if b - a >= per {
        return vec![(base, base + per)];
    }
    let a2 = base + (a - base).rem_euclid(per);
    let b2 = a2 + (b - a);
    if b2 <= base + per {
        vec![(a2, b2)]
    } else {
        vec![(a2, base + per), (base, b2 - per)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2() -> UniformGrid {
        UniformGrid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![10, 10], vec![false, false]).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let g = grid2();
        assert_eq!(g.quantize(&[0.5, 0.5]), 0);
        assert_eq!(g.multi_index(g.quantize(&[3.2, 7.9])), vec![3, 7]);
        assert_eq!(g.quantize(&[-0.1, 5.0]), g.sink());
        assert_eq!(g.quantize(&[10.0, 5.0]), g.sink());
    }

    #[test]
    fn periodic_quantize() {
        let g = UniformGrid::new(vec![0.0], vec![PI / 2.0], vec![4], vec![true]).unwrap();
        assert_eq!(g.quantize(&[2.0 * PI + 0.1]), g.quantize(&[0.1]));
        assert_eq!(g.quantize(&[-0.1]), 3);
        let b = g.cell_box(0).unwrap();
        assert!((b.center[0] - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn cell_box_examples() {
        let g = grid2();
        let b = g.cell_box(0).unwrap();
        assert_eq!(b.lower(), vec![0.0, 0.0]);
        assert_eq!(b.upper(), vec![1.0, 1.0]);
        assert!(g.cell_box(g.sink()).is_err());
        for c in 0..g.num_cells() {
            assert_eq!(g.quantize(&g.cell_box(c).unwrap().center), c);
        }
    }

    #[test]
    fn intersecting_cells_clamp_and_wrap() {
        let g = UniformGrid::new(vec![0.0], vec![1.0], vec![10], vec![false]).unwrap();
        let b = IntervalBox::from_bounds(&[2.9], &[4.1]).unwrap();
        assert_eq!(g.cells_intersecting(&b), (vec![2, 3, 4], false));
        let b = IntervalBox::from_bounds(&[8.5], &[10.5]).unwrap();
        assert_eq!(g.cells_intersecting(&b), (vec![8, 9], true));
        let b = IntervalBox::from_bounds(&[11.0], &[12.0]).unwrap();
        assert_eq!(g.cells_intersecting(&b), (vec![], true));

        let p = UniformGrid::new(vec![0.0], vec![1.0], vec![4], vec![true]).unwrap();
        let b = IntervalBox::from_bounds(&[3.5], &[4.5]).unwrap();
        assert_eq!(p.cells_intersecting(&b), (vec![0, 3], false));
        let b = IntervalBox::from_bounds(&[-1.0], &[9.0]).unwrap();
        assert_eq!(p.cells_intersecting(&b), (vec![0, 1, 2, 3], false));
    }

    #[test]
    fn region_containment_across_pieces() {
        let g = grid2();
        let r = GridRegion::new(
            &g,
            &Region::new(vec![
                (vec![0.0, 0.0], vec![1.5, 2.0]),
                (vec![1.5, 0.0], vec![3.0, 2.0]),
            ]),
        );
        let cell = g.cell_box(g.flat_index(&[1, 1])).unwrap();
        assert!(r.contains_box(&cell));
        let cell = g.cell_box(g.flat_index(&[1, 2])).unwrap();
        assert!(!r.contains_box(&cell));
        assert!(r.intersects_box(&cell));
        assert!(r.contains_point(&[2.9, 0.1]));
        assert!(!r.contains_point(&[3.1, 0.1]));
    }

    #[test]
    fn periodic_region_wraps() {
        let g = UniformGrid::new(vec![0.0], vec![2.0 * PI / 8.0], vec![8], vec![true]).unwrap();
        // [-50deg, 50deg] covers the cells [0, 45deg) and [315deg, 360deg).
        let r = GridRegion::new(&g, &Region::single(vec![-50f64.to_radians()], vec![50f64.to_radians()]));
        assert!(r.contains_box(&g.cell_box(0).unwrap()));
        assert!(r.contains_box(&g.cell_box(7).unwrap()));
        assert!(!r.contains_box(&g.cell_box(1).unwrap()));
        assert!(r.intersects_box(&g.cell_box(1).unwrap()));
        assert!(!r.intersects_box(&g.cell_box(4).unwrap()));
        assert!(r.contains_point(&[-0.1]));
        assert!(r.contains_point(&[2.0 * PI - 0.1]));
    }
}
