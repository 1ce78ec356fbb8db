//! Dense row-major matrices and rank by Gaussian elimination.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ring::ScalarRing;

/// Default relative pivot threshold for the float policy.
pub const DEFAULT_FLOAT_TAU: f64 = 1e-10;

/// Rows below this count are eliminated on the calling thread.
const PARALLEL_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Field elimination with modular pivot inverses. Prime field only.
    Exact,
    /// Partial pivoting; a column without a pivot of magnitude at least
    /// `tau * max|entry|` is treated as dependent. Float rings only.
    Float { tau: f64 },
}

impl RankPolicy {
    pub fn float_default() -> Self {
        RankPolicy::Float {
            tau: DEFAULT_FLOAT_TAU,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RankPolicy::Exact => "exact",
            RankPolicy::Float { .. } => "float",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<E> {
    rows: usize,
    cols: usize,
    entries: Vec<E>,
}

impl<E: Copy + PartialEq + Send + Sync> DenseMatrix<E> {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<E>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParams("matrix dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(entries.len(), rows * cols));
        }
        Ok(DenseMatrix { rows, cols, entries })
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<E>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch(bad.len(), rows));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            entries.extend(columns.iter().map(|c| c[r]));
        }
        Self::from_row_major(rows, cols, entries)
    }

    pub fn filled(rows: usize, cols: usize, value: E) -> Result<Self> {
        Self::from_row_major(rows, cols, vec![value; rows * cols])
    }

    pub fn identity<R: ScalarRing<Elem = E>>(n: usize, ring: &R) -> Result<Self> {
        let mut m = Self::filled(n, n, ring.zero())?;
        for i in 0..n {
            m.set(i, i, ring.one());
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[E] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> E {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: E) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[E] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<E> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Writes `values` down column `c` starting at row `row0`.
    pub fn write_column(&mut self, c: usize, row0: usize, values: &[E]) {
        for (t, &v) in values.iter().enumerate() {
            self.set(row0 + t, c, v);
        }
    }

    /// Rank under the given policy. Consumes a copy of the entries.
    pub fn rank<R: ScalarRing<Elem = E>>(&self, ring: &R, policy: RankPolicy) -> Result<usize> {
        self.clone().into_rank(ring, policy)
    }

    /// Rank, eliminating in place; avoids a copy for very large matrices.
    pub fn into_rank<R: ScalarRing<Elem = E>>(self, ring: &R, policy: RankPolicy) -> Result<usize> {
        match (policy, ring.is_exact()) {
            (RankPolicy::Exact, true) => Ok(rank_exact(self, ring)),
            (RankPolicy::Float { tau }, false) => Ok(rank_float(self, ring, tau)),
            _ => Err(Error::PolicyMismatch {
                policy: policy.name().to_string(),
                ring: ring.kind().to_string(),
            }),
        }
    }
}

/// Eliminates rows `pivot_row+1..` against the pivot row, from column `col`.
fn eliminate_below<R: ScalarRing>(
    entries: &mut [R::Elem],
    cols: usize,
    pivot_row: usize,
    col: usize,
    pivot_inv: R::Elem,
    ring: &R,
) {
    let (top, bottom) = entries.split_at_mut((pivot_row + 1) * cols);
    let pivot = &top[pivot_row * cols + col..];
    let update = |row: &mut [R::Elem]| {
        let lead = row[col];
        if !ring.is_zero(lead) {
            let factor = ring.mul(lead, pivot_inv);
            ring.sub_scaled(&mut row[col..], factor, pivot);
        }
    };
    if bottom.len() / cols >= PARALLEL_ROWS {
        bottom.par_chunks_mut(cols).for_each(update);
    } else {
        bottom.chunks_mut(cols).for_each(update);
    }
}

fn rank_exact<R: ScalarRing>(mut m: DenseMatrix<R::Elem>, ring: &R) -> usize {
    let cols = m.cols;
    let mut rank = 0;
    for col in 0..cols {
        if rank == m.rows {
            break;
        }
        let Some(found) = (rank..m.rows).find(|&r| !ring.is_zero(m.entries[r * cols + col])) else {
            continue;
        };
        swap_rows(&mut m.entries, cols, rank, found);
        let inv = ring
            .inv(m.entries[rank * cols + col])
            .expect("nonzero pivot is invertible in a field");
        eliminate_below(&mut m.entries, cols, rank, col, inv, ring);
        rank += 1;
    }
    rank
}

fn rank_float<R: ScalarRing>(mut m: DenseMatrix<R::Elem>, ring: &R, tau: f64) -> usize {
    let cols = m.cols;
    let scale = m
        .entries
        .iter()
        .map(|&a| ring.magnitude(a))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let threshold = tau * scale;
    let mut rank = 0;
    for col in 0..cols {
        if rank == m.rows {
            break;
        }
        let (best, best_mag) = (rank..m.rows)
            .map(|r| (r, ring.magnitude(m.entries[r * cols + col])))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_mag < threshold {
            continue;
        }
        swap_rows(&mut m.entries, cols, rank, best);
        let inv = ring
            .inv(m.entries[rank * cols + col])
            .expect("pivot above threshold is nonzero");
        eliminate_below(&mut m.entries, cols, rank, col, inv, ring);
        rank += 1;
    }
    rank
}

fn swap_rows<E>(entries: &mut [E], cols: usize, a: usize, b: usize) {
    if a == b {
        return;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    let (head, tail) = entries.split_at_mut(hi * cols);
    head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
}
