//! Grid-based finite abstraction of a sampled system.
//!
//! For every cell and sampled input, the successors are all cells hit by the
//! growth-bound overapproximation of the cell's one-period reachable set; a
//! box that leaves the (non-periodic) domain also reaches the sink. The sink
//! is absorbing and every transition out of it costs `∞`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::{overapprox_successor, GrowthBoundModel, IntervalBox, VectorFieldSpec};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::system::{Cost, FiniteSystem, StepCosts, INFINITY};

pub const CACHE_MAGIC: &[u8; 8] = b"DTSPABS1";

/// Finite sample of the input set.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSample {
    values: Vec<Vec<f64>>,
}

impl InputSample {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.first().map(Vec::len).ok_or_else(|| Error::usage("input sample is empty"))?;
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::usage("input sample values differ in dimension"));
        }
        if values.len() > u16::MAX as usize {
            return Err(Error::usage("too many input values"));
        }
        Ok(InputSample { values })
    }

    /// Evenly spaced values per dimension, endpoints included (a single
    /// value sits at the midpoint); the sample is their cartesian product.
    pub fn uniform(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() || counts.contains(&0) {
            return Err(Error::usage("input box and sample counts disagree"));
        }
        let axes: Vec<Vec<f64>> = (0..lower.len())
            .map(|d| {
                let k = counts[d];
                if k == 1 {
                    vec![0.5 * (lower[d] + upper[d])]
                } else {
                    (0..k)
                        .map(|i| lower[d] + (upper[d] - lower[d]) * i as f64 / (k - 1) as f64)
                        .collect()
                }
            })
            .collect();
        Self::from_axes(&axes)
    }

    /// Cartesian product of per-dimension value lists.
    pub fn from_axes(axes: &[Vec<f64>]) -> Result<Self> {
        let mut values = vec![Vec::new()];
        for axis in axes {
            values = values
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&a| {
                        let mut v = prefix.clone();
                        v.push(a);
                        v
                    })
                })
                .collect();
        }
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn within(&self, lower: &[f64], upper: &[f64]) -> bool {
        self.values
            .iter()
            .all(|v| v.iter().zip(lower.iter().zip(upper)).all(|(x, (l, u))| l <= x && x <= u))
    }
}

/// Abstract running cost `g'`: infinite on obstacle cells, otherwise an upper
/// bound of the concrete running cost over the cell (and successor cell, for
/// successor-dependent costs).
pub trait AbstractRunningCost: Sync {
    fn is_obstacle(&self, cell: &IntervalBox) -> bool;

    /// Whether [`Self::finite_cost`] needs the successor cell.
    fn successor_dependent(&self) -> bool {
        false
    }

    fn finite_cost(&self, cell: &IntervalBox, input: &[f64], successor: Option<&IntervalBox>) -> Cost;
}

/// A finite abstraction together with the grid and inputs it was built on.
#[derive(Debug, Clone)]
pub struct Abstraction {
    pub grid: UniformGrid,
    pub inputs: InputSample,
    pub system: FiniteSystem,
}

pub fn build_abstraction(
    spec: &VectorFieldSpec,
    model: &GrowthBoundModel,
    grid: &UniformGrid,
    inputs: &InputSample,
    cost: &dyn AbstractRunningCost,
) -> Result<Abstraction> {
    if spec.state_dim() != grid.dim() || model.dim() != grid.dim() || spec.input_dim() != inputs.dim() {
        return Err(Error::usage("dynamics, grid and input dimensions disagree"));
    }
    let m = inputs.len();
    let sink = grid.sink() as u32;
    let per_cell: Vec<Vec<Vec<u32>>> = (0..grid.num_cells())
        .into_par_iter()
        .map(|c| {
            let cell = grid.cell_box_unchecked(c);
            (0..m)
                .map(|k| {
                    let reach = overapprox_successor(spec, model, &cell, inputs.get(k))?;
                    let (mut succ, escapes) = grid.cells_intersecting(&reach);
                    if escapes {
                        succ.push(sink);
                    }
                    assert!(!succ.is_empty(), "empty successor set for cell {c}");
                    Ok(succ)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut offsets = Vec::with_capacity(grid.num_states() * m + 1);
    let total: usize = per_cell.iter().flatten().map(Vec::len).sum::<usize>() + m;
    let mut successors = Vec::with_capacity(total);
    offsets.push(0);
    for lists in per_cell {
        for s in lists {
            successors.extend_from_slice(&s);
            offsets.push(successors.len());
        }
    }
    for _ in 0..m {
        successors.push(sink);
        offsets.push(successors.len());
    }
    assemble(grid.clone(), inputs.clone(), offsets, successors, cost)
}

/// Attaches running costs to a successor structure and builds the system.
fn assemble(
    grid: UniformGrid,
    inputs: InputSample,
    offsets: Vec<usize>,
    successors: Vec<u32>,
    cost: &dyn AbstractRunningCost,
) -> Result<Abstraction> {
    let m = inputs.len();
    let cells = grid.num_cells();
    let costs = if cost.successor_dependent() {
        let mut per_edge = vec![INFINITY; successors.len()];
        // Each cell owns a contiguous edge range.
        let chunks: Vec<(usize, Vec<Cost>)> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let cell = grid.cell_box_unchecked(c);
                let lo = offsets[c * m];
                let hi = offsets[(c + 1) * m];
                if cost.is_obstacle(&cell) {
                    return (lo, vec![INFINITY; hi - lo]);
                }
                let mut out = Vec::with_capacity(hi - lo);
                for k in 0..m {
                    for &y in &successors[offsets[c * m + k]..offsets[c * m + k + 1]] {
                        let y = y as usize;
                        out.push(if y == grid.sink() {
                            INFINITY
                        } else {
                            let yb = grid.cell_box_unchecked(y);
                            cost.finite_cost(&cell, inputs.get(k), Some(&yb))
                        });
                    }
                }
                (lo, out)
            })
            .collect();
        for (lo, vals) in chunks {
            per_edge[lo..lo + vals.len()].copy_from_slice(&vals);
        }
        StepCosts::PerEdge(per_edge)
    } else {
        let mut per_pair: Vec<Cost> = (0..cells)
            .into_par_iter()
            .flat_map_iter(|c| {
                let cell = grid.cell_box_unchecked(c);
                let obstacle = cost.is_obstacle(&cell);
                let inputs = &inputs;
                (0..m).map(move |k| {
                    if obstacle {
                        INFINITY
                    } else {
                        cost.finite_cost(&cell, inputs.get(k), None)
                    }
                })
                .collect::<Vec<_>>()
            })
            .collect();
        per_pair.extend(std::iter::repeat_n(INFINITY, m));
        StepCosts::PerPair(per_pair)
    };
    let system = FiniteSystem::from_csr(grid.num_states(), m, offsets, successors, costs)?;
    Ok(Abstraction {
        grid,
        inputs,
        system,
    })
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Writes the abstraction cache: magic, grid metadata, input values, offset
/// table and flat successor array. Integers are little-endian `u64`, reals
/// IEEE-754 `f64`. Running costs are not stored; they are recomputed from the
/// scenario on load.
pub fn write_cache(abs: &Abstraction, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    let g = &abs.grid;
    put_u64(&mut w, g.dim() as u64).map_err(io)?;
    for &v in g.lower() {
        put_f64(&mut w, v).map_err(io)?;
    }
    for &v in g.eta() {
        put_f64(&mut w, v).map_err(io)?;
    }
    for &v in g.counts() {
        put_u64(&mut w, v as u64).map_err(io)?;
    }
    for &v in g.periodic() {
        put_u64(&mut w, v as u64).map_err(io)?;
    }
    put_u64(&mut w, abs.inputs.len() as u64).map_err(io)?;
    put_u64(&mut w, abs.inputs.dim() as u64).map_err(io)?;
    for v in abs.inputs.values() {
        for &x in v {
            put_f64(&mut w, x).map_err(io)?;
        }
    }
    let offsets = abs.system.offsets();
    put_u64(&mut w, offsets.len() as u64).map_err(io)?;
    for &o in offsets {
        put_u64(&mut w, o as u64).map_err(io)?;
    }
    let succ = abs.system.successor_array();
    put_u64(&mut w, succ.len() as u64).map_err(io)?;
    for &y in succ {
        put_u64(&mut w, y as u64).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Reads a cache written by [`write_cache`] and recomputes running costs.
pub fn read_cache(path: &Path, cost: &dyn AbstractRunningCost) -> Result<Abstraction> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: std::io::BufReader::new(file),
    };
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.inner.read_exact(&mut magic).map_err(io)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::usage(format!("{}: not an abstraction cache", path.display())));
    }
    let n = r.u64().map_err(io)? as usize;
    if n == 0 || n > 64 {
        return Err(Error::usage("corrupt cache: bad dimension"));
    }
    let lower = (0..n).map(|_| r.f64()).collect::<std::io::Result<Vec<_>>>().map_err(io)?;
    let eta = (0..n).map(|_| r.f64()).collect::<std::io::Result<Vec<_>>>().map_err(io)?;
    let counts = (0..n)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let periodic = (0..n)
        .map(|_| r.u64().map(|v| v != 0))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let grid = UniformGrid::new(lower, eta, counts, periodic)?;
    let m = r.u64().map_err(io)? as usize;
    let md = r.u64().map_err(io)? as usize;
    let mut values = Vec::with_capacity(m);
    for _ in 0..m {
        values.push((0..md).map(|_| r.f64()).collect::<std::io::Result<Vec<_>>>().map_err(io)?);
    }
    let inputs = InputSample::new(values)?;
    let no = r.u64().map_err(io)? as usize;
    if no != grid.num_states() * m + 1 {
        return Err(Error::usage("corrupt cache: offset table size"));
    }
    let offsets = (0..no)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let ns = r.u64().map_err(io)? as usize;
    let successors = (0..ns)
        .map(|_| r.u64().map(|v| v as u32))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    assemble(grid, inputs, offsets, successors, cost)
}
