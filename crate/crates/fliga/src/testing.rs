//! Deterministic sampling helpers shared by unit, property and acceptance
//! tests. Not part of the simulation API.

use crate::patch::{FieldArray, FloatingPatch};
use crate::spline::{KnotVector, RowBasis};

/// SplitMix64: tiny deterministic generator for reproducible test sampling.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Random monotone regulation row anchored at 0 and 1; increments are bounded
/// below so the floating-map Jacobian stays safely positive.
pub fn monotone_h(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let mut inc: Vec<f64> = (0..n - 1).map(|_| 0.25 + rng.uniform()).collect();
    let total: f64 = inc.iter().sum();
    for v in &mut inc {
        *v /= total;
    }
    let mut h = vec![0.0; n];
    for i in 1..n {
        h[i] = h[i - 1] + inc[i - 1];
    }
    h[n - 1] = 1.0;
    h
}

/// Identity-regulation patch on the unit square with possibly ragged rows;
/// controls sit at the tensor Greville grid.
pub fn grid_patch(row_lens: &[usize], degree: usize) -> FloatingPatch {
    let j_count = row_lens.len();
    let normal_kv = KnotVector::open_uniform(j_count - 1, 1).unwrap();
    let gy = normal_kv.greville();
    let rows: Vec<RowBasis> = row_lens
        .iter()
        .map(|&n| RowBasis::Open(KnotVector::open_uniform(n - degree, degree).unwrap()))
        .collect();
    let controls: Vec<Vec<[f64; 2]>> = rows
        .iter()
        .enumerate()
        .map(|(j, r)| r.greville().into_iter().map(|gx| [gx, gy[j]]).collect())
        .collect();
    FloatingPatch::with_greville_regulation(rows, normal_kv, controls).unwrap()
}

/// Random floated patch: monotone random regulation, controls perturbed off
/// the Greville grid while keeping the geometry invertible. Row lengths are
/// uniform so the patch also admits a quadrature point set (ragged rows
/// arise from refinement, not construction).
pub fn random_floated_patch(rng: &mut SplitMix64, degree: usize) -> FloatingPatch {
    let j_count = 3 + rng.index(3); // 3..=5 rows
    let len = degree + 2 + rng.index(4);
    let row_lens: Vec<usize> = (0..j_count).map(|_| len).collect();
    let mut patch = grid_patch(&row_lens, degree);
    for j in 0..j_count {
        let h = monotone_h(rng, row_lens[j]);
        patch.set_h_row(j, h);
        let amp = 0.25 / (row_lens[j].max(j_count)) as f64;
        for i in 0..row_lens[j] {
            let c = patch.control(j, i);
            patch.set_control(
                j,
                i,
                [c[0] + amp * (rng.uniform() - 0.5), c[1] + amp * (rng.uniform() - 0.5)],
            );
        }
    }
    patch
        .insert_field("velocity", FieldArray::zeros(2, &row_lens))
        .unwrap();
    patch.validate().unwrap();
    patch
}
