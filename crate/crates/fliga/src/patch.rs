//! The floating tensor-product patch: per-row parent bases, floating maps
//! and their inverses, characteristic/bivariate bases, and the physical map.

use crate::error::{FligaError, Result};
use crate::spline::{BasisEval, KnotVector, RowBasis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Named per-control-point variables (e.g. velocity), stored row-ragged with a
/// fixed component count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldArray {
    pub components: usize,
    /// `rows[j]` holds `I_j * components` values, point-major.
    pub rows: Vec<Vec<f64>>,
}

impl FieldArray {
    pub fn zeros(components: usize, row_lens: &[usize]) -> Self {
        Self {
            components,
            rows: row_lens.iter().map(|&n| vec![0.0; n * components]).collect(),
        }
    }

    pub fn get(&self, j: usize, i: usize, comp: usize) -> f64 {
        self.rows[j][i * self.components + comp]
    }

    pub fn set(&mut self, j: usize, i: usize, comp: usize, v: f64) {
        self.rows[j][i * self.components + comp] = v;
    }
}

/// Tolerance below which a sampled floating-map Jacobian counts as degenerate.
pub const MIN_FLOATING_JACOBIAN: f64 = 1e-8;

/// A floating B-spline patch over the unit parametric square.
///
/// Rows are indexed by the normal direction (`j`), each carrying its own
/// parent basis, regulation points `h`, control points and field variables.
/// Open rows keep `h` anchored at 0 and 1; periodic rows store one `h` value
/// per degree of freedom and unwrap by +1 per winding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloatingPatch {
    rows: Vec<RowBasis>,
    normal_kv: KnotVector,
    h: Vec<Vec<f64>>,
    controls: Vec<Vec<[f64; 2]>>,
    fields: BTreeMap<String, FieldArray>,
}

impl FloatingPatch {
    pub fn new(
        rows: Vec<RowBasis>,
        normal_kv: KnotVector,
        h: Vec<Vec<f64>>,
        controls: Vec<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let patch = Self {
            rows,
            normal_kv,
            h,
            controls,
            fields: BTreeMap::new(),
        };
        patch.validate()?;
        Ok(patch)
    }

    /// Identity-regulation patch: `h` at the Greville abscissae of each row.
    pub fn with_greville_regulation(
        rows: Vec<RowBasis>,
        normal_kv: KnotVector,
        controls: Vec<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let h = rows.iter().map(|r| r.greville()).collect();
        Self::new(rows, normal_kv, h, controls)
    }

    pub fn validate(&self) -> Result<()> {
        if self.normal_kv.degree() != 1 {
            return Err(FligaError::InvalidInput(
                "normal knot vector must have degree 1".into(),
            ));
        }
        let j_count = self.normal_kv.num_basis();
        if self.rows.len() != j_count || self.h.len() != j_count || self.controls.len() != j_count {
            return Err(FligaError::InvalidInput(format!(
                "row count mismatch: normal basis has {j_count} functions, got {} parent rows, {} h rows, {} control rows",
                self.rows.len(),
                self.h.len(),
                self.controls.len()
            )));
        }
        for j in 0..j_count {
            let dofs = self.rows[j].num_dofs();
            if self.h[j].len() != dofs || self.controls[j].len() != dofs {
                return Err(FligaError::InvalidInput(format!(
                    "row {j}: expected {dofs} entries, got {} h and {} controls",
                    self.h[j].len(),
                    self.controls[j].len()
                )));
            }
            for (name, f) in &self.fields {
                if f.rows.len() != j_count || f.rows[j].len() != dofs * f.components {
                    return Err(FligaError::InvalidInput(format!(
                        "field '{name}' row {j} length mismatch"
                    )));
                }
            }
            if !self.rows[j].is_periodic() {
                if self.h[j][0] != 0.0 || self.h[j][dofs - 1] != 1.0 {
                    return Err(FligaError::InvalidInput(format!(
                        "row {j}: open rows require h anchored at 0 and 1, got {} and {}",
                        self.h[j][0],
                        self.h[j][dofs - 1]
                    )));
                }
            }
        }
        self.check_monotone_maps()
    }

    /// Sample every floating-map Jacobian at per-span Gauss points and reject
    /// non-positive values; the regulation solver may transiently propose
    /// near-flat maps which must be caught loudly.
    pub fn check_monotone_maps(&self) -> Result<()> {
        for j in 0..self.num_rows() {
            let p = self.rows[j].degree();
            let breaks = self.rows[j].breaks();
            let stencil = crate::spline::legendre_stencil_on_breaks(&breaks, p + 1)?;
            for pt in &stencil.points {
                let jac = self.floating_jacobian(j, pt.coord)?;
                if jac <= MIN_FLOATING_JACOBIAN {
                    return Err(FligaError::InvalidInput(format!(
                        "row {j}: floating map Jacobian {jac:e} at parent coordinate {} is not positive",
                        pt.coord
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_len(&self, j: usize) -> usize {
        self.rows[j].num_dofs()
    }

    pub fn row_lens(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.num_dofs()).collect()
    }

    pub fn row_basis(&self, j: usize) -> &RowBasis {
        &self.rows[j]
    }

    pub fn normal_kv(&self) -> &KnotVector {
        &self.normal_kv
    }

    pub fn h_row(&self, j: usize) -> &[f64] {
        &self.h[j]
    }

    pub fn controls_row(&self, j: usize) -> &[[f64; 2]] {
        &self.controls[j]
    }

    pub fn control(&self, j: usize, i: usize) -> [f64; 2] {
        self.controls[j][i]
    }

    pub fn set_control(&mut self, j: usize, i: usize, c: [f64; 2]) {
        self.controls[j][i] = c;
    }

    pub fn field(&self, name: &str) -> Option<&FieldArray> {
        self.fields.get(name)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut FieldArray> {
        self.fields.get_mut(name)
    }

    pub fn insert_field(&mut self, name: &str, field: FieldArray) -> Result<()> {
        if field.rows.len() != self.num_rows()
            || field
                .rows
                .iter()
                .zip(&self.rows)
                .any(|(r, b)| r.len() != b.num_dofs() * field.components)
        {
            return Err(FligaError::InvalidInput(format!(
                "field '{name}' shape does not match the patch"
            )));
        }
        self.fields.insert(name.to_string(), field);
        Ok(())
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(|s| s.as_str())
    }

    /// Replace a row's data wholesale (refinement transaction).
    pub(crate) fn replace_row(
        &mut self,
        j: usize,
        basis: RowBasis,
        h: Vec<f64>,
        controls: Vec<[f64; 2]>,
        fields: Vec<(String, Vec<f64>)>,
    ) {
        self.rows[j] = basis;
        self.h[j] = h;
        self.controls[j] = controls;
        for (name, data) in fields {
            self.fields.get_mut(&name).expect("field exists").rows[j] = data;
        }
    }

    /// Replace a row's regulation points. Monotonicity is a validation
    /// concern, not a type constraint: call [`validate`](Self::validate) or
    /// [`check_monotone_maps`](Self::check_monotone_maps) after mutating.
    pub fn set_h_row(&mut self, j: usize, h: Vec<f64>) {
        debug_assert_eq!(h.len(), self.rows[j].num_dofs());
        self.h[j] = h;
    }

    /// Total number of degrees of freedom `M`.
    pub fn total_dofs(&self) -> usize {
        self.rows.iter().map(|r| r.num_dofs()).sum()
    }

    /// Offsets of each row in the running index.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.rows.len() + 1);
        let mut acc = 0;
        for r in &self.rows {
            out.push(acc);
            acc += r.num_dofs();
        }
        out.push(acc);
        out
    }

    /// Running index `m` of the tuple `(i, j)` (0-based).
    pub fn running_index(&self, i: usize, j: usize) -> Result<usize> {
        if j >= self.rows.len() || i >= self.rows[j].num_dofs() {
            return Err(FligaError::InvalidInput(format!("tuple ({i}, {j}) out of range")));
        }
        Ok(self.rows[..j].iter().map(|r| r.num_dofs()).sum::<usize>() + i)
    }

    /// Inverse of [`running_index`](Self::running_index).
    pub fn unpack_index(&self, m: usize) -> Result<(usize, usize)> {
        let mut rest = m;
        for (j, r) in self.rows.iter().enumerate() {
            if rest < r.num_dofs() {
                return Ok((rest, j));
            }
            rest -= r.num_dofs();
        }
        Err(FligaError::InvalidInput(format!("running index {m} out of range")))
    }

    /// Unwrapped regulation value of the absolute function index `abs` in
    /// row `j` (periodic rows gain +1 per winding).
    pub fn h_unwrapped(&self, j: usize, abs: isize) -> f64 {
        let basis = &self.rows[j];
        self.h[j][basis.dof_of(abs)] + basis.winding_of(abs) as f64
    }

    /// The floating map `G_j(xt) = sum_i h_ij N_ij(xt)`.
    pub fn floating_map(&self, j: usize, xt: f64) -> Result<f64> {
        let ev = self.rows[j].eval(xt, 0)?;
        Ok(ev
            .indices()
            .enumerate()
            .map(|(o, a)| self.h_unwrapped(j, a) * ev.value[o])
            .sum())
    }

    /// Scalar Jacobian of the floating map.
    pub fn floating_jacobian(&self, j: usize, xt: f64) -> Result<f64> {
        let ev = self.rows[j].eval(xt, 1)?;
        Ok(ev
            .indices()
            .enumerate()
            .map(|(o, a)| self.h_unwrapped(j, a) * ev.d1[o])
            .sum())
    }

    /// Invert the floating map: find `xt` with `G_j(xt) = xi`.
    ///
    /// Newton iteration warm-started from `guess` (when given), guarded by a
    /// bisection bracket that exploits monotonicity.
    pub fn inverse_floating_map(&self, j: usize, xi: f64, guess: Option<f64>) -> Result<f64> {
        let periodic = self.rows[j].is_periodic();
        let clip = |x: f64| if periodic { x } else { x.clamp(0.0, 1.0) };
        let g = |xt: f64| -> Result<f64> {
            if periodic {
                // G(xt + 1) = G(xt) + 1; evaluate on the fundamental branch.
                let w = xt.floor();
                Ok(self.floating_map(j, xt - w)? + w)
            } else {
                self.floating_map(j, xt)
            }
        };
        let dg = |xt: f64| -> Result<f64> {
            let xf = if periodic { xt - xt.floor() } else { xt };
            self.floating_jacobian(j, xf)
        };

        let tol = 1e-12;
        let (mut lo, mut hi) = if periodic {
            let mut lo = guess.unwrap_or(xi) - 0.75;
            let mut hi = lo + 1.5;
            for _ in 0..64 {
                if g(lo)? <= xi {
                    break;
                }
                lo -= 1.0;
            }
            for _ in 0..64 {
                if g(hi)? >= xi {
                    break;
                }
                hi += 1.0;
            }
            (lo, hi)
        } else {
            if !(-1e-9..=1.0 + 1e-9).contains(&xi) {
                return Err(FligaError::InvalidInput(format!(
                    "parametric coordinate {xi} outside [0, 1]"
                )));
            }
            (0.0, 1.0)
        };
        let xi = if periodic { xi } else { xi.clamp(0.0, 1.0) };

        let mut xt = clip(guess.unwrap_or(xi)).clamp(lo, hi);
        let mut resid = g(xt)? - xi;
        for _ in 0..50 {
            if resid.abs() <= tol {
                return Ok(clip(xt));
            }
            if resid > 0.0 {
                hi = hi.min(xt);
            } else {
                lo = lo.max(xt);
            }
            let jac = dg(xt)?;
            let mut next = if jac > 1e-300 { xt - resid / jac } else { f64::NAN };
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            xt = next;
            resid = g(xt)? - xi;
        }
        // Newton budget exhausted; fall back to pure bisection.
        for _ in 0..200 {
            if resid.abs() <= tol || hi - lo < 1e-16 {
                return Ok(clip(xt));
            }
            if resid > 0.0 {
                hi = xt;
            } else {
                lo = xt;
            }
            xt = 0.5 * (lo + hi);
            resid = g(xt)? - xi;
        }
        if resid.abs() <= 1e-9 {
            // Monotone but nearly flat around the root; accept the bracket midpoint.
            return Ok(clip(xt));
        }
        Err(FligaError::NonConvergence {
            row: j,
            xi,
            residual: resid.abs(),
        })
    }

    /// Characteristic basis value `N̂_ij(xi) = Ñ_ij(G_j^{-1}(xi))` for the
    /// degree of freedom `i` of row `j`.
    pub fn characteristic_basis(&self, i: usize, j: usize, xi: f64) -> Result<f64> {
        let xt = self.inverse_floating_map(j, xi, None)?;
        let ev = self.rows[j].eval(xt, 0)?;
        let mut v = 0.0;
        for (o, a) in ev.indices().enumerate() {
            if self.rows[j].dof_of(a) == i {
                v += ev.value[o];
            }
        }
        Ok(v)
    }

    /// Bivariate basis value `B̂_ij(xi, eta) = N̂_ij(xi) M̂_j(eta)`.
    pub fn bivariate_basis(&self, i: usize, j: usize, xi: [f64; 2]) -> Result<f64> {
        let normal = self.normal_kv.eval(xi[1], 0)?;
        let mut mj = 0.0;
        for (o, a) in normal.indices().enumerate() {
            if a as usize == j {
                mj = normal.value[o];
            }
        }
        if mj == 0.0 {
            return Ok(0.0);
        }
        Ok(self.characteristic_basis(i, j, xi[0])? * mj)
    }

    /// Rows with support at `eta`, with normal values and derivatives.
    fn normal_support(&self, eta: f64) -> Result<(BasisEval, Vec<usize>)> {
        let ev = self.normal_kv.eval(eta, 1)?;
        let rows = ev.indices().map(|a| a as usize).collect();
        Ok((ev, rows))
    }

    /// The physical map `F(xi, eta) = sum c_ij B̂_ij`.
    pub fn physical_map(&self, xi: [f64; 2]) -> Result<[f64; 2]> {
        let (nev, rows) = self.normal_support(xi[1])?;
        let mut x = [0.0; 2];
        for (o, &j) in rows.iter().enumerate() {
            let mj = nev.value[o];
            if mj == 0.0 {
                continue;
            }
            let xt = self.inverse_floating_map(j, xi[0], None)?;
            let ev = self.rows[j].eval(xt, 0)?;
            for (oo, a) in ev.indices().enumerate() {
                let c = self.controls[j][self.rows[j].dof_of(a)];
                x[0] += c[0] * ev.value[oo] * mj;
                x[1] += c[1] * ev.value[oo] * mj;
            }
        }
        Ok(x)
    }

    /// Jacobian of the physical map w.r.t. the parametric coordinates,
    /// evaluated generically (inverse maps solved per row).
    pub fn physical_jacobian_parametric(&self, xi: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let (nev, rows) = self.normal_support(xi[1])?;
        let mut jac = [[0.0; 2]; 2];
        for (o, &j) in rows.iter().enumerate() {
            let mj = nev.value[o];
            let dmj = nev.d1[o];
            let xt = self.inverse_floating_map(j, xi[0], None)?;
            let ev = self.rows[j].eval(xt, 1)?;
            let gj = self.floating_jacobian(j, xt)?;
            for (oo, a) in ev.indices().enumerate() {
                let c = self.controls[j][self.rows[j].dof_of(a)];
                let dxi = ev.d1[oo] / gj * mj; // d(N̂)/dxi via the floating map
                let deta = ev.value[oo] * dmj;
                for d in 0..2 {
                    jac[d][0] += c[d] * dxi;
                    jac[d][1] += c[d] * deta;
                }
            }
        }
        Ok(jac)
    }

    /// Evaluate the parametrization ansatz `sum_m h_m B̂_m(xi, eta)`.
    ///
    /// Reproduces `xi` exactly for any admissible regulation state.
    pub fn xi_ansatz(&self, xi: [f64; 2]) -> Result<f64> {
        let (nev, rows) = self.normal_support(xi[1])?;
        let mut acc = 0.0;
        for (o, &j) in rows.iter().enumerate() {
            let mj = nev.value[o];
            if mj == 0.0 {
                continue;
            }
            let xt = self.inverse_floating_map(j, xi[0], None)?;
            let ev = self.rows[j].eval(xt, 0)?;
            for (oo, a) in ev.indices().enumerate() {
                acc += self.h_unwrapped(j, a) * ev.value[oo] * mj;
            }
        }
        Ok(acc)
    }

    /// Bounding-box diagonal of the control net; used to scale tolerances.
    pub fn diameter(&self) -> f64 {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for row in &self.controls {
            for c in row {
                for d in 0..2 {
                    min[d] = min[d].min(c[d]);
                    max[d] = max[d].max(c[d]);
                }
            }
        }
        ((max[0] - min[0]).powi(2) + (max[1] - min[1]).powi(2)).sqrt()
    }

    /// Serialize to a structured text document (JSON, field per field,
    /// ragged arrays as nested lists).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("patch serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let patch: FloatingPatch = serde_json::from_str(text)
            .map_err(|e| FligaError::InvalidInput(format!("patch parse error: {e}")))?;
        patch.validate()?;
        Ok(patch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::PeriodicBasis;
    use crate::testing::{grid_patch, monotone_h, SplitMix64};

    #[test]
    fn running_index_examples() {
        // Rows of 3, 4, 2 functions; paper tuple (i=2, j=2) -> m = 5 maps to
        // 0-based (1, 1) -> 4.
        let patch = grid_patch(&[3, 4, 2], 1);
        assert_eq!(patch.running_index(1, 1).unwrap(), 4);
        assert_eq!(patch.running_index(0, 0).unwrap(), 0);
        assert_eq!(patch.total_dofs(), 9);
        for m in 0..9 {
            let (i, j) = patch.unpack_index(m).unwrap();
            assert_eq!(patch.running_index(i, j).unwrap(), m);
        }
        assert!(patch.unpack_index(9).is_err());
        assert!(patch.running_index(3, 0).is_err());
    }

    #[test]
    fn greville_identity_map() {
        let patch = grid_patch(&[5, 5, 5, 5], 2);
        for &xt in &[0.0, 0.2, 0.37, 0.5, 0.77, 1.0] {
            for j in 0..patch.num_rows() {
                let xi = patch.floating_map(j, xt).unwrap();
                assert!((xi - xt).abs() < 1e-14, "row {j} at {xt}: {xi}");
            }
        }
    }

    #[test]
    fn floating_map_anchoring_and_oracle() {
        let mut rng = SplitMix64::new(7);
        let mut patch = grid_patch(&[6, 6, 6], 2);
        for j in 0..3 {
            patch.set_h_row(j, monotone_h(&mut rng, 6));
        }
        patch.validate().unwrap();
        for j in 0..3 {
            assert!((patch.floating_map(j, 0.0).unwrap()).abs() < 1e-15);
            assert!((patch.floating_map(j, 1.0).unwrap() - 1.0).abs() < 1e-15);
            // Direct full-sum oracle via the naive recursion.
            let kv = match patch.row_basis(j) {
                RowBasis::Open(kv) => kv.clone(),
                _ => unreachable!(),
            };
            let xt = 0.37;
            let mut direct = 0.0;
            for i in 0..kv.num_basis() {
                direct += patch.h_row(j)[i] * crate::spline::oracle::naive_basis(kv.knots(), i, 2, xt);
            }
            let val = patch.floating_map(j, xt).unwrap();
            assert!((val - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_map_round_trip() {
        let mut rng = SplitMix64::new(42);
        let mut patch = grid_patch(&[7, 7], 3);
        patch.set_h_row(0, monotone_h(&mut rng, 7));
        patch.validate().unwrap();
        assert!((patch.inverse_floating_map(1, 0.6, None).unwrap() - 0.6).abs() < 1e-13);
        for k in 0..100 {
            let xi = (k as f64 + 0.5) / 100.0;
            let xt = patch.inverse_floating_map(0, xi, None).unwrap();
            let back = patch.floating_map(0, xt).unwrap();
            assert!((back - xi).abs() <= 1e-12, "xi={xi}");
        }
    }

    /// Pure-bisection oracle for the inverse map.
    fn bisect_inverse(patch: &FloatingPatch, j: usize, xi: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if patch.floating_map(j, mid).unwrap() < xi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverse_matches_bisection_oracle() {
        let mut rng = SplitMix64::new(3);
        let mut patch = grid_patch(&[6, 6], 2);
        patch.set_h_row(0, monotone_h(&mut rng, 6));
        patch.validate().unwrap();
        let newton = patch.inverse_floating_map(0, 0.25, None).unwrap();
        let oracle = bisect_inverse(&patch, 0, 0.25);
        assert!((newton - oracle).abs() < 1e-10);
    }

    #[test]
    fn characteristic_basis_identity_and_partition() {
        let mut rng = SplitMix64::new(11);
        let mut patch = grid_patch(&[6, 6], 2);
        patch.set_h_row(1, monotone_h(&mut rng, 6));
        patch.validate().unwrap();

        // Identity map: characteristic equals parent.
        let kv = match patch.row_basis(0) {
            RowBasis::Open(kv) => kv.clone(),
            _ => unreachable!(),
        };
        for i in 0..6 {
            let a = patch.characteristic_basis(i, 0, 0.3).unwrap();
            let b = crate::spline::oracle::naive_basis(kv.knots(), i, 2, 0.3);
            assert!((a - b).abs() < 1e-13);
        }

        // Push-forward preserves the partition of unity.
        for &xi in &[0.1, 0.33, 0.5, 0.9] {
            let sum: f64 = (0..6)
                .map(|i| patch.characteristic_basis(i, 1, xi).unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-12, "xi={xi}");
        }

        // Compose-of-oracles value.
        let xt = bisect_inverse(&patch, 1, 0.4);
        let want = crate::spline::oracle::naive_basis(kv.knots(), 2, 2, xt);
        let got = patch.characteristic_basis(2, 1, 0.4).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn bivariate_corner_and_partition() {
        let mut rng = SplitMix64::new(5);
        let mut patch = grid_patch(&[5, 5, 5], 2);
        for j in 0..3 {
            patch.set_h_row(j, monotone_h(&mut rng, 5));
        }
        patch.validate().unwrap();

        assert!((patch.bivariate_basis(0, 0, [0.0, 0.0]).unwrap() - 1.0).abs() < 1e-14);
        for j in 0..3 {
            for i in 0..5 {
                if (i, j) != (0, 0) {
                    assert!(patch.bivariate_basis(i, j, [0.0, 0.0]).unwrap().abs() < 1e-14);
                }
            }
        }
        for k in 0..50 {
            let xi = [(k as f64 * 0.019) % 1.0, (k as f64 * 0.037) % 1.0];
            let mut sum = 0.0;
            for j in 0..3 {
                for i in 0..5 {
                    sum += patch.bivariate_basis(i, j, xi).unwrap();
                }
            }
            assert!((sum - 1.0).abs() < 1e-12, "xi={xi:?}");
        }
        // Factorization oracle at an interior point.
        let v = patch.bivariate_basis(2, 1, [0.42, 0.3]).unwrap();
        let n = patch.characteristic_basis(2, 1, 0.42).unwrap();
        let normal = patch.normal_kv().eval(0.3, 0).unwrap();
        let mut mj = 0.0;
        for (o, a) in normal.indices().enumerate() {
            if a == 1 {
                mj = normal.value[o];
            }
        }
        assert!((v - n * mj).abs() < 1e-14);
    }

    #[test]
    fn physical_map_reproduces_grid() {
        let patch = grid_patch(&[5, 5, 5, 5], 2);
        for &xi in &[[0.0, 0.0], [0.3, 0.7], [1.0, 1.0], [0.5, 0.25]] {
            let x = patch.physical_map(xi).unwrap();
            assert!((x[0] - xi[0]).abs() < 1e-13 && (x[1] - xi[1]).abs() < 1e-13);
        }
        // Corner interpolation.
        let last = patch.control(3, 4);
        let x = patch.physical_map([1.0, 1.0]).unwrap();
        assert!((x[0] - last[0]).abs() < 1e-14 && (x[1] - last[1]).abs() < 1e-14);
    }

    #[test]
    fn physical_map_double_sum_oracle() {
        let mut rng = SplitMix64::new(17);
        let mut patch = grid_patch(&[6, 6, 6], 2);
        for j in 0..3 {
            patch.set_h_row(j, monotone_h(&mut rng, 6));
            for i in 0..6 {
                let c = patch.control(j, i);
                patch.set_control(j, i, [c[0] + 0.05 * rng.uniform(), c[1] + 0.05 * rng.uniform()]);
            }
        }
        patch.validate().unwrap();
        let xi = [0.37, 0.61];
        let x = patch.physical_map(xi).unwrap();
        let mut want = [0.0; 2];
        for j in 0..3 {
            for i in 0..6 {
                let b = patch.bivariate_basis(i, j, xi).unwrap();
                let c = patch.control(j, i);
                want[0] += c[0] * b;
                want[1] += c[1] * b;
            }
        }
        assert!((x[0] - want[0]).abs() < 1e-13 && (x[1] - want[1]).abs() < 1e-13);
    }

    #[test]
    fn parametric_jacobian_identity_scaling_and_fd() {
        let patch = grid_patch(&[5, 5, 5], 2);
        let jac = patch.physical_jacobian_parametric([0.4, 0.6]).unwrap();
        assert!((jac[0][0] - 1.0).abs() < 1e-12 && (jac[1][1] - 1.0).abs() < 1e-12);
        assert!(jac[0][1].abs() < 1e-12 && jac[1][0].abs() < 1e-12);

        let mut scaled = patch.clone();
        for j in 0..3 {
            for i in 0..5 {
                let c = scaled.control(j, i);
                scaled.set_control(j, i, [2.0 * c[0], 2.0 * c[1]]);
            }
        }
        let jac2 = scaled.physical_jacobian_parametric([0.4, 0.6]).unwrap();
        assert!((jac2[0][0] - 2.0).abs() < 1e-12 && (jac2[1][1] - 2.0).abs() < 1e-12);

        // Finite differences on a randomized patch.
        let mut rng = SplitMix64::new(23);
        let mut rnd = patch.clone();
        for j in 0..3 {
            rnd.set_h_row(j, monotone_h(&mut rng, 5));
            for i in 0..5 {
                let c = rnd.control(j, i);
                rnd.set_control(j, i, [c[0] + 0.04 * rng.uniform(), c[1] + 0.04 * rng.uniform()]);
            }
        }
        rnd.validate().unwrap();
        let at = [0.43, 0.57];
        let jr = rnd.physical_jacobian_parametric(at).unwrap();
        let h = 1e-6;
        for dir in 0..2 {
            let mut plus = at;
            let mut minus = at;
            plus[dir] += h;
            minus[dir] -= h;
            let xp = rnd.physical_map(plus).unwrap();
            let xm = rnd.physical_map(minus).unwrap();
            for d in 0..2 {
                let fd = (xp[d] - xm[d]) / (2.0 * h);
                assert!(
                    (fd - jr[d][dir]).abs() < 1e-6 * fd.abs().max(1.0),
                    "d={d} dir={dir}: {fd} vs {}",
                    jr[d][dir]
                );
            }
        }
    }

    #[test]
    fn ansatz_exactness() {
        let mut rng = SplitMix64::new(31);
        let mut patch = grid_patch(&[6, 6, 6, 6], 2);
        for j in 0..4 {
            patch.set_h_row(j, monotone_h(&mut rng, 6));
        }
        patch.validate().unwrap();
        for k in 0..40 {
            let xi = [((k * 7) % 39) as f64 / 39.0, ((k * 11) % 29) as f64 / 29.0];
            let v = patch.xi_ansatz(xi).unwrap();
            assert!((v - xi[0]).abs() < 1e-12, "xi={xi:?} got {v}");
        }
    }

    #[test]
    fn weak_kronecker_delta_at_boundaries() {
        let mut rng = SplitMix64::new(13);
        let mut patch = grid_patch(&[5, 5, 5], 2);
        for j in 0..3 {
            patch.set_h_row(j, monotone_h(&mut rng, 5));
        }
        patch.validate().unwrap();
        // eta = 0: only j = 0 functions nonzero.
        for j in 1..3 {
            for i in 0..5 {
                assert!(patch.bivariate_basis(i, j, [0.44, 0.0]).unwrap().abs() < 1e-14);
            }
        }
        // xi = 0: only i = 0 per row nonzero.
        for j in 0..3 {
            for i in 1..5 {
                assert!(patch.bivariate_basis(i, j, [0.0, 0.37]).unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn floating_changes_connectivity_overlap() {
        // Two control points in different rows connect iff their
        // characteristic functions share xi-support.
        let mut patch = grid_patch(&[6, 6], 2);
        let kv = KnotVector::open_uniform(4, 2).unwrap();
        let sup = |patch: &FloatingPatch, i: usize, j: usize| -> (f64, f64) {
            let lo = patch.floating_map(j, kv.knots()[i]).unwrap();
            let hi = patch.floating_map(j, kv.knots()[i + 3]).unwrap();
            (lo, hi)
        };
        // Identity: function 1 of row 0 ([0, 0.5]) only touches function 4 of
        // row 1 ([0.5, 1]) -- unconnected.
        let (a0, a1) = sup(&patch, 1, 0);
        let (b0, b1) = sup(&patch, 4, 1);
        assert!(!(a0 < b1 && b0 < a1), "[{a0},{a1}] and [{b0},{b1}] overlap");
        // Float row 1 to the left: the supports now overlap -- connected.
        patch.set_h_row(1, vec![0.0, 0.03, 0.1, 0.25, 0.45, 1.0]);
        patch.validate().unwrap();
        let (c0, c1) = sup(&patch, 4, 1);
        assert!(a0 < c1 && c0 < a1, "supports [{a0},{a1}] and [{c0},{c1}] still disjoint");
    }

    #[test]
    fn periodic_floating_map_wraps() {
        let pb = RowBasis::Periodic(PeriodicBasis::new(8, 2).unwrap());
        let normal = KnotVector::open_uniform(1, 1).unwrap();
        let rows = vec![pb.clone(), pb.clone()];
        let h: Vec<Vec<f64>> = rows.iter().map(|r| r.greville()).collect();
        let controls = vec![vec![[0.0; 2]; 8], vec![[0.0; 2]; 8]];
        let mut patch = FloatingPatch::new(rows, normal, h, controls).unwrap();
        for &xt in &[0.0, 0.3, 0.99] {
            assert!((patch.floating_map(0, xt).unwrap() - xt).abs() < 1e-13);
        }
        // Drift the row by 0.3: G(xt) = xt + 0.3, inverse unwinds it.
        let drifted: Vec<f64> = patch.h_row(0).iter().map(|&v| v + 0.3).collect();
        patch.set_h_row(0, drifted);
        let xi = patch.floating_map(0, 0.9).unwrap();
        assert!((xi - 1.2).abs() < 1e-13);
        let back = patch.inverse_floating_map(0, 1.2, Some(0.85)).unwrap();
        assert!((back - 0.9).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = SplitMix64::new(9);
        let mut patch = grid_patch(&[5, 5], 2);
        patch.set_h_row(0, monotone_h(&mut rng, 5));
        patch
            .insert_field("velocity", FieldArray::zeros(2, &[5, 5]))
            .unwrap();
        let json = patch.to_json();
        let back = FloatingPatch::from_json(&json).unwrap();
        assert_eq!(patch, back);
    }
}
