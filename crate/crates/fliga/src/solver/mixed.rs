//! Mixed velocity-pressure spaces.
//!
//! The pressure basis lives one polynomial degree below the velocity along
//! the characteristic axis with half the spans, and on every other normal
//! row (two velocity spans nest in one pressure span). Pressure rows reuse
//! the floating maps of the even velocity rows, so pressure evaluation at a
//! quadrature point only needs the pullback coordinates already cached for
//! the velocity basis.

use crate::error::{FligaError, Result};
use crate::patch::FloatingPatch;
use crate::quadrature::{QuadPoint, QuadRow};
use crate::spline::{KnotVector, PeriodicBasis, RowBasis};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PressureSpace {
    rows: Vec<RowBasis>,
    /// Normal breakpoints: every other velocity normal break.
    normal_breaks: Vec<f64>,
    offsets: Vec<usize>,
}

impl PressureSpace {
    /// Derive the pressure space from the (unrefined) velocity patch.
    pub fn build(patch: &FloatingPatch) -> Result<Self> {
        let spans: Vec<usize> = (0..patch.num_rows())
            .map(|j| patch.row_basis(j).breaks().len() - 1)
            .collect();
        Self::build_initial(patch, &spans)
    }

    /// Build from explicit initial velocity span counts (the patch itself may
    /// already be refined). The pressure characteristic vectors stay fixed
    /// under velocity refinement: pressure is re-solved every step, so no
    /// pressure history exists to transform.
    pub fn build_initial(patch: &FloatingPatch, initial_spans: &[usize]) -> Result<Self> {
        let j_count = patch.num_rows();
        if j_count < 3 || j_count % 2 == 0 {
            return Err(FligaError::InvalidInput(format!(
                "pressure space needs an odd velocity row count >= 3, got {j_count}"
            )));
        }
        let degree = patch.row_basis(0).degree();
        if degree < 2 {
            return Err(FligaError::InvalidInput(
                "mixed space needs velocity degree >= 2 (pressure runs one lower)".into(),
            ));
        }
        let mut rows = Vec::with_capacity((j_count + 1) / 2);
        for jp in 0..(j_count + 1) / 2 {
            let v = 2 * jp;
            let spans = initial_spans[v];
            if spans % 2 != 0 {
                return Err(FligaError::InvalidInput(format!(
                    "velocity row {v} has {spans} spans; need an even count to nest pressure"
                )));
            }
            let basis = match patch.row_basis(v) {
                RowBasis::Open(_) => RowBasis::Open(KnotVector::open_uniform(spans / 2, degree - 1)?),
                RowBasis::Periodic(_) => {
                    RowBasis::Periodic(PeriodicBasis::new(spans / 2, degree - 1)?)
                }
            };
            rows.push(basis);
        }
        let vb = patch.normal_kv().breaks();
        let normal_breaks: Vec<f64> = vb.iter().copied().step_by(2).collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut acc = 0;
        for r in &rows {
            offsets.push(acc);
            acc += r.num_dofs();
        }
        offsets.push(acc);
        Ok(Self {
            rows,
            normal_breaks,
            offsets,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_dofs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn row_basis(&self, jp: usize) -> &RowBasis {
        &self.rows[jp]
    }

    pub fn row_offset(&self, jp: usize) -> usize {
        self.offsets[jp]
    }

    /// Velocity row whose floating map regulates pressure row `jp`.
    pub fn velocity_row(&self, jp: usize) -> usize {
        2 * jp
    }

    /// Pressure basis values at a quadrature point, as `(global dof, value)`
    /// pairs. At rows with even `s` the point sits on a pressure knot and a
    /// single pressure row is active with unit normal value; at odd `s` the
    /// two adjacent pressure rows contribute with hat-function weights, and
    /// the parent coordinates are exactly the cached neighbor/far pullbacks.
    pub fn eval_at_point(
        &self,
        qrow: &QuadRow,
        pt: &QuadPoint,
    ) -> Result<Vec<(usize, f64)>> {
        let s = qrow.s;
        let mut out = Vec::with_capacity(2 * 4);
        if s % 2 == 0 {
            let jp = s / 2;
            self.accumulate(jp, pt.xt, 1.0, &mut out)?;
        } else {
            let jp_lo = (s - 1) / 2;
            let jp_hi = (s + 1) / 2;
            let span = &self.normal_breaks[jp_lo..=jp_hi];
            let w_hi = (qrow.eta - span[0]) / (span[1] - span[0]);
            let w_lo = 1.0 - w_hi;
            let coord = |row: usize| -> Result<f64> {
                if qrow.n == row {
                    Ok(pt.neighbor_xt)
                } else if qrow.far == Some(row) {
                    Ok(pt.far_xt)
                } else {
                    Err(FligaError::InvalidInput(format!(
                        "no cached pullback for velocity row {row} at a point with s = {s}"
                    )))
                }
            };
            self.accumulate(jp_lo, coord(s - 1)?, w_lo, &mut out)?;
            self.accumulate(jp_hi, coord(s + 1)?, w_hi, &mut out)?;
        }
        Ok(out)
    }

    fn accumulate(
        &self,
        jp: usize,
        coord: f64,
        normal_value: f64,
        out: &mut Vec<(usize, f64)>,
    ) -> Result<()> {
        if normal_value == 0.0 {
            return Ok(());
        }
        let basis = &self.rows[jp];
        let ev = basis.eval(coord, 0)?;
        for (o, a) in ev.indices().enumerate() {
            out.push((self.offsets[jp] + basis.dof_of(a), ev.value[o] * normal_value));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadraturePointSet;
    use crate::testing::{grid_patch, monotone_h, SplitMix64};

    #[test]
    fn build_validates_shape() {
        assert!(PressureSpace::build(&grid_patch(&[6, 6, 6, 6], 2)).is_err()); // even J
        assert!(PressureSpace::build(&grid_patch(&[5, 5, 5], 1)).is_err()); // degree 1
        let patch = grid_patch(&[6, 6, 6], 2); // 4 spans per row
        let ps = PressureSpace::build(&patch).unwrap();
        assert_eq!(ps.num_rows(), 2);
        // 2 spans at degree 1: 3 functions per pressure row.
        assert_eq!(ps.num_dofs(), 6);
    }

    #[test]
    fn partition_of_unity_at_points() {
        let mut rng = SplitMix64::new(7);
        let mut patch = grid_patch(&[6, 6, 6, 6, 6], 2);
        for j in 0..5 {
            patch.set_h_row(j, monotone_h(&mut rng, 6));
        }
        patch.validate().unwrap();
        let ps = PressureSpace::build(&patch).unwrap();
        let set = QuadraturePointSet::build(&patch, 3, &[1; 5]).unwrap();
        for qrow in set.rows() {
            for pt in &qrow.points {
                let vals = ps.eval_at_point(qrow, pt).unwrap();
                let sum: f64 = vals.iter().map(|(_, v)| v).sum();
                assert!((sum - 1.0).abs() < 1e-12, "s={} sum={sum}", qrow.s);
            }
        }
    }

    #[test]
    fn linear_field_reproduced_at_points() {
        // Pressure dofs sampled from an affine function of the Greville grid
        // reproduce that function at the quadrature points (identity patch).
        let patch = grid_patch(&[9, 9, 9, 9, 9], 3);
        let ps = PressureSpace::build(&patch).unwrap();
        let set = QuadraturePointSet::build(&patch, 4, &[1; 5]).unwrap();
        // Identity geometry: physical x = xi. Pressure Greville grid:
        let mut q = vec![0.0; ps.num_dofs()];
        for jp in 0..ps.num_rows() {
            let eta = ps.normal_breaks[jp];
            for (d, gx) in ps.row_basis(jp).greville().into_iter().enumerate() {
                q[ps.row_offset(jp) + d] = 2.0 * gx - 3.0 * eta + 0.25;
            }
        }
        for qrow in set.rows() {
            for pt in &qrow.points {
                let vals = ps.eval_at_point(qrow, pt).unwrap();
                let got: f64 = vals.iter().map(|(z, v)| q[*z] * v).sum();
                let want = 2.0 * pt.phys[0] - 3.0 * pt.phys[1] + 0.25;
                assert!((got - want).abs() < 1e-12, "s={}: {got} vs {want}", qrow.s);
            }
        }
    }
}
