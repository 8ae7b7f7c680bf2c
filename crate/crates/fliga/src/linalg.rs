//! Direct linear solves behind a small facade: dense factorizations for
//! desk-scale systems, sparse LU above a configurable size threshold.

use crate::error::{FligaError, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

/// Free degrees-of-freedom count above which assembly switches to sparse
/// storage and a sparse factorization.
pub const DEFAULT_SPARSE_THRESHOLD: usize = 2000;

/// Square system accumulated as triplets; duplicate entries add up.
#[derive(Clone, Debug)]
pub struct TripletMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Solve `A x = rhs` by a direct factorization.
    ///
    /// `symmetric` selects a symmetric-indefinite (Bunch-Kaufman) dense
    /// factorization; unsymmetric systems use partially pivoted LU. Above
    /// `sparse_threshold` unknowns a sparse LU is used instead.
    pub fn solve(&self, rhs: &[f64], symmetric: bool, sparse_threshold: usize) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = if self.n > sparse_threshold {
            let triplets: Vec<Triplet<usize, usize, f64>> = self
                .entries
                .iter()
                .map(|&(r, c, v)| Triplet::new(r, c, v))
                .collect();
            let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &triplets)
                .map_err(|e| FligaError::LinearSolveFailure(format!("sparse assembly: {e:?}")))?;
            let lu = a
                .sp_lu()
                .map_err(|e| FligaError::LinearSolveFailure(format!("sparse LU: {e:?}")))?;
            lu.solve(&b)
        } else {
            let a = self.to_dense();
            if symmetric {
                a.lblt(faer::Side::Lower).solve(&b)
            } else {
                a.partial_piv_lu().solve(&b)
            }
        };
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FligaError::LinearSolveFailure(
                "factorization produced non-finite values (singular system?)".into(),
            ));
        }
        Ok(out)
    }
}

/// Direct solver that reuses the sparsity pattern and symbolic factorization
/// across calls as long as the triplet pattern is unchanged (it is, between
/// floating updates). Dense systems below the threshold skip the machinery.
pub struct LinearSolver {
    pub sparse_threshold: usize,
    cache: Option<SparseCache>,
}

struct SparseCache {
    key: u64,
    mat: SparseColMat<usize, f64>,
    /// Triplet index -> slot in the CSC value array.
    slots: Vec<u32>,
    symbolic: faer::sparse::linalg::solvers::SymbolicLu<usize>,
}

fn pattern_key(n: usize, entries: &[(usize, usize, f64)]) -> u64 {
    // FNV-1a over the structural part of the triplets.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x100000001b3);
    };
    eat(n as u64);
    eat(entries.len() as u64);
    for &(r, c, _) in entries {
        eat(r as u64);
        eat(c as u64);
    }
    h
}

impl LinearSolver {
    pub fn new(sparse_threshold: usize) -> Self {
        Self {
            sparse_threshold,
            cache: None,
        }
    }

    pub fn solve(&mut self, m: &TripletMatrix, rhs: &[f64], symmetric: bool) -> Result<Vec<f64>> {
        if m.n <= self.sparse_threshold {
            return m.solve(rhs, symmetric, self.sparse_threshold);
        }
        let key = pattern_key(m.n, &m.entries);
        let rebuild = match &self.cache {
            Some(c) => c.key != key,
            None => true,
        };
        if rebuild {
            let triplets: Vec<Triplet<usize, usize, f64>> = m
                .entries
                .iter()
                .map(|&(r, c, v)| Triplet::new(r, c, v))
                .collect();
            let mat = SparseColMat::<usize, f64>::try_new_from_triplets(m.n, m.n, &triplets)
                .map_err(|e| FligaError::LinearSolveFailure(format!("sparse assembly: {e:?}")))?;
            // Map every triplet to its slot in the deduplicated CSC storage.
            let sym_mat = mat.symbolic();
            let col_ptr = sym_mat.col_ptr();
            let row_idx = sym_mat.row_idx();
            let mut slots = Vec::with_capacity(m.entries.len());
            for &(r, c, _) in &m.entries {
                let lo = col_ptr[c];
                let hi = col_ptr[c + 1];
                let off = row_idx[lo..hi]
                    .binary_search(&r)
                    .expect("triplet entry must exist in the assembled pattern");
                slots.push((lo + off) as u32);
            }
            let symbolic = faer::sparse::linalg::solvers::SymbolicLu::try_new(sym_mat)
                .map_err(|e| FligaError::LinearSolveFailure(format!("symbolic LU: {e:?}")))?;
            self.cache = Some(SparseCache {
                key,
                mat,
                slots,
                symbolic,
            });
        } else {
            let cache = self.cache.as_mut().expect("cache exists");
            let vals = cache.mat.val_mut();
            vals.fill(0.0);
            for (&(_, _, v), &slot) in m.entries.iter().zip(&cache.slots) {
                vals[slot as usize] += v;
            }
        }
        let cache = self.cache.as_ref().expect("cache exists");
        let lu = faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(
            cache.symbolic.clone(),
            cache.mat.as_ref(),
        )
        .map_err(|e| FligaError::LinearSolveFailure(format!("numeric LU: {e:?}")))?;
        let b = Mat::from_fn(m.n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..m.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FligaError::LinearSolveFailure(
                "factorization produced non-finite values (singular system?)".into(),
            ));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_saddle_point() {
        let mut m = TripletMatrix::new(3);
        m.push(0, 0, 2.0);
        m.push(1, 1, 3.0);
        m.push(0, 2, 1.0);
        m.push(2, 0, 1.0);
        m.push(1, 2, -1.0);
        m.push(2, 1, -1.0);
        let x = m.solve(&[3.0, 2.0, 1.0], true, 100).unwrap();
        let r0 = 2.0 * x[0] + x[2] - 3.0;
        let r1 = 3.0 * x[1] - x[2] - 2.0;
        let r2 = x[0] - x[1] - 1.0;
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12 && r2.abs() < 1e-12);
    }

    #[test]
    fn sparse_path_matches_dense() {
        let mut m = TripletMatrix::new(4);
        for i in 0..4 {
            m.push(i, i, 4.0 + i as f64);
        }
        m.push(0, 1, 1.0);
        m.push(1, 0, 1.0);
        m.push(2, 3, -2.0);
        m.push(3, 2, -2.0);
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let dense = m.solve(&rhs, true, 100).unwrap();
        let sparse = m.solve(&rhs, true, 2).unwrap();
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_reports_failure() {
        let mut m = TripletMatrix::new(2);
        m.push(0, 0, 1.0);
        m.push(0, 1, 1.0);
        m.push(1, 0, 1.0);
        m.push(1, 1, 1.0);
        assert!(m.solve(&[1.0, 2.0], false, 100).is_err());
    }

    #[test]
    fn cached_solver_reuses_pattern_and_tracks_values() {
        let mut solver = LinearSolver::new(2);
        let build = |scale: f64| {
            let mut m = TripletMatrix::new(4);
            for i in 0..4 {
                m.push(i, i, scale * (3.0 + i as f64));
                // duplicate entries accumulate
                m.push(i, i, scale);
            }
            m.push(0, 2, 0.5);
            m.push(2, 0, 0.5);
            m
        };
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let m1 = build(1.0);
        let x1 = solver.solve(&m1, &rhs, true).unwrap();
        let want1 = m1.solve(&rhs, true, 100).unwrap();
        for (a, b) in x1.iter().zip(&want1) {
            assert!((a - b).abs() < 1e-13);
        }
        // Same pattern, new values: exercises the cached path.
        let m2 = build(2.5);
        let x2 = solver.solve(&m2, &rhs, true).unwrap();
        let want2 = m2.solve(&rhs, true, 100).unwrap();
        for (a, b) in x2.iter().zip(&want2) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
