//! Longhand reassembly of the discrete diffusion operator, cell by cell with
//! explicit ghost reflection, for comparison against the production assembly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::CsrMatrix;
use crate::model::DiffusionCoefficient;

/// Largest grid the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 10_000;
/// Entrywise tolerance, relative to the largest entry magnitude of the row.
pub const ORACLE_ENTRY_TOL: f64 = 1e-14;

/// Operator entries keyed by `(row, col)`, zeros omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub n: usize,
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl OperatorMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|(&(i, j), &v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (&(i, j), &v) in &self.entries {
            d[i][j] = v;
        }
        d
    }
}

/// Rebuilds `div(d grad .)` on `grid` at time `t`.
///
/// Each cell looks at its two neighbours per axis; a missing neighbour is a
/// ghost holding the cell's own value, so its flux `w (u_ghost - u_k)` puts
/// `+w` in the cell's own column next to the usual `-w`.
pub fn matrix_oracle(grid: &Grid, d: &DiffusionCoefficient, t: f64) -> Result<OperatorMatrix> {
    let n = grid.total_cells();
    if n > ORACLE_MAX_CELLS {
        return Err(Error::Oracle(format!("matrix oracle is limited to {ORACLE_MAX_CELLS} cells, got {n}")));
    }
    let dim = grid.dim();
    let cells = grid.cells();
    let h = grid.spacing();
    let origin = grid.origin();
    let center = |idx: [usize; 3]| -> Vec<f64> { (0..dim).map(|a| origin[a] + (idx[a] as f64 + 0.5) * h[a]).collect() };
    let flat = |idx: [usize; 3]| -> usize {
        let mut k = 0;
        let mut stride = 1;
        for a in 0..dim {
            k += idx[a] * stride;
            stride *= cells[a];
        }
        k
    };
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let nz = if dim > 2 { cells[2] } else { 1 };
    let ny = if dim > 1 { cells[1] } else { 1 };
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..cells[0] {
                let me = [ix, iy, iz];
                let row = flat(me);
                let d_me = d.value(&center(me), t);
                let mut diag = 0.0;
                for a in 0..dim {
                    let inv_h2 = 1.0 / (h[a] * h[a]);
                    // low side
                    if me[a] == 0 {
                        // the reflected ghost is this cell itself
                        let w = d_me * inv_h2;
                        *entries.entry((row, row)).or_insert(0.0) += w;
                        diag -= w;
                    } else {
                        let mut nb = me;
                        nb[a] -= 1;
                        let d_nb = d.value(&center(nb), t);
                        let w = (2.0 * d_me * d_nb / (d_me + d_nb)) * inv_h2;
                        *entries.entry((row, flat(nb))).or_insert(0.0) += w;
                        diag -= w;
                    }
                    // high side
                    if me[a] + 1 == cells[a] {
                        // the reflected ghost is this cell itself
                        let w = d_me * inv_h2;
                        *entries.entry((row, row)).or_insert(0.0) += w;
                        diag -= w;
                    } else {
                        let mut nb = me;
                        nb[a] += 1;
                        let d_nb = d.value(&center(nb), t);
                        let w = (2.0 * d_me * d_nb / (d_me + d_nb)) * inv_h2;
                        *entries.entry((row, flat(nb))).or_insert(0.0) += w;
                        diag -= w;
                    }
                }
                let total = *entries.entry((row, row)).or_insert(0.0) + diag;
                if total == 0.0 {
                    entries.remove(&(row, row));
                } else {
                    entries.insert((row, row), total);
                }
            }
        }
    }
    Ok(OperatorMatrix { n, entries })
}

/// Largest relative entry mismatch between `m` and the oracle, and its position.
pub fn max_entry_mismatch(m: &CsrMatrix, oracle: &OperatorMatrix) -> Result<(f64, Option<(usize, usize)>)> {
    if m.n() != oracle.n {
        return Err(Error::Oracle(format!("size mismatch: {} vs {}", m.n(), oracle.n)));
    }
    let mut worst = 0.0f64;
    let mut at = None;
    let mut check = |i: usize, j: usize, a: f64, b: f64, scale: f64| {
        let e = (a - b).abs() / scale.max(f64::MIN_POSITIVE);
        if e > worst || (e.is_nan() && !worst.is_nan()) {
            worst = if e.is_nan() { f64::INFINITY } else { e };
            at = Some((i, j));
        }
    };
    for i in 0..m.n() {
        let mut scale = 0.0f64;
        for (_, v) in m.row(i) {
            scale = scale.max(v.abs());
        }
        for (&(r, _), v) in oracle.entries.range((i, 0)..(i + 1, 0)) {
            debug_assert_eq!(r, i);
            scale = scale.max(v.abs());
        }
        for (j, v) in m.row(i) {
            check(i, j, v, oracle.get(i, j), scale);
        }
        for (&(_, j), &v) in oracle.entries.range((i, 0)..(i + 1, 0)) {
            check(i, j, m.get(i, j), v, scale);
        }
    }
    Ok((worst, at))
}

/// Fails with the offending indices when any entry differs by more than [`ORACLE_ENTRY_TOL`].
pub fn compare_with_oracle(m: &CsrMatrix, oracle: &OperatorMatrix) -> Result<()> {
    let (worst, at) = max_entry_mismatch(m, oracle)?;
    if worst > ORACLE_ENTRY_TOL {
        let (i, j) = at.expect("mismatch has a position");
        return Err(Error::Oracle(format!(
            "entry ({i}, {j}): assembled {} vs oracle {} (relative mismatch {worst:e})",
            m.get(i, j),
            oracle.get(i, j)
        )));
    }
    Ok(())
}
