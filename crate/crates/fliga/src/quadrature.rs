//! Boundary-anchored Lagrangian quadrature for floating patches.
//!
//! Normal direction: 2-point Gauss-Lobatto per span of the (degree-1) normal
//! knot vector, so every point row `l` sits at a characteristic element
//! boundary where exactly one normal function is supported (index `s`) and
//! its neighbor (index `n`) contributes only through the eta-gradient.
//! Characteristic direction: per-span Gauss-Legendre points of a pre-sized
//! quadrature knot vector, fixed in the parent domain for the entire
//! analysis. Physical point positions depend on the control points of row
//! `s` alone, never on the regulation state.

use crate::error::{FligaError, Result};
use crate::patch::FloatingPatch;
use crate::spline::{
    legendre_stencil_on_breaks, BasisEval, KnotVector, PeriodicBasis, RowBasis, MAX_DEGREE,
};
use std::io::Write;

/// Supported-row index `s` for the Lobatto row `l`, both 1-based as in the
/// index map `S(l) = 1 + (l - l % 2) / 2`.
pub fn s_of_l(l: usize) -> usize {
    1 + (l - l % 2) / 2
}

/// Neighbor-row index `n` for the Lobatto row `l` (1-based): `s + 1` for odd
/// `l`, `s - 1` for even `l`.
pub fn n_of_l(l: usize) -> usize {
    if l % 2 == 1 {
        s_of_l(l) + 1
    } else {
        s_of_l(l) - 1
    }
}

/// One quadrature point; parent data is immutable after construction, the
/// neighbor pullbacks move with the regulation state, and the physical data
/// follows the control points.
#[derive(Clone, Debug)]
pub struct QuadPoint {
    /// Parent coordinate in the supported row (constant).
    pub xt: f64,
    /// Parent Gauss-Legendre weight (constant).
    pub parent_weight: f64,
    /// Span index within the quadrature knot vector (constant).
    pub span: usize,
    /// Pullback of the parametric position into the neighbor row's parent
    /// domain; updated on floating changes.
    pub neighbor_xt: f64,
    /// Pullback into the adjacent row on the other side of `s` (used by the
    /// mixed pressure space); NaN when that row does not exist.
    pub far_xt: f64,
    /// Cached physical position.
    pub phys: [f64; 2],
    /// Cached physical weight.
    pub phys_weight: f64,
}

/// One Lobatto row of quadrature points at a fixed normal coordinate.
#[derive(Clone, Debug)]
pub struct QuadRow {
    /// Supported row `s` (0-based).
    pub s: usize,
    /// Neighbor row `n` (0-based).
    pub n: usize,
    /// The adjacent row `2s - n` when it exists.
    pub far: Option<usize>,
    /// Normal coordinate of this row.
    pub eta: f64,
    /// Normal Lobatto weight (half the span length).
    pub normal_weight: f64,
    /// Index of the normal span the row belongs to.
    pub normal_span: usize,
    /// d/deta of the supported normal function at `eta` (constant).
    pub m_grad_s: f64,
    /// d/deta of the neighbor normal function at `eta` (constant).
    pub m_grad_n: f64,
    /// Quadrature knot vector, a superset of the parent vector of row `s`.
    pub basis: RowBasis,
    pub points: Vec<QuadPoint>,
}

/// The full set of quadrature points for a patch.
#[derive(Clone, Debug)]
pub struct QuadraturePointSet {
    rows: Vec<QuadRow>,
    points_per_span: usize,
}

/// Values and gradients of every supported basis function at one point,
/// produced by [`QuadraturePointSet::evaluate`].
#[derive(Clone, Debug)]
pub struct PointEval {
    /// Characteristic basis of row `s` at `xt` (values and parent derivative).
    pub sup: BasisEval,
    /// Characteristic basis of row `n` at `neighbor_xt`.
    pub nbr: BasisEval,
    /// Floating-map Jacobians at the respective evaluation coordinates.
    pub j_s: f64,
    pub j_n: f64,
    /// Physical-map Jacobian, its determinant, and inverse.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub jac_inv: [[f64; 2]; 2],
    /// Parametric and physical weights.
    pub w_param: f64,
    pub w_phys: f64,
    /// Physical gradients of the supported-row functions (aligned with `sup`).
    pub grad_s: [[f64; 2]; MAX_DEGREE + 1],
    /// Physical gradients of the neighbor-row functions (aligned with `nbr`).
    pub grad_n: [[f64; 2]; MAX_DEGREE + 1],
    /// Parametric gradients (xi, eta) of the supported-row functions.
    pub pgrad_s: [[f64; 2]; MAX_DEGREE + 1],
    /// Parametric gradients of the neighbor-row functions.
    pub pgrad_n: [[f64; 2]; MAX_DEGREE + 1],
}

/// Connectivity sets of one quadrature point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivitySets {
    /// Degrees of freedom of row `s` supported at the point (p + 1 entries).
    pub supported_row_indices: Vec<usize>,
    /// Degrees of freedom of row `n` supported at the neighbor pullback.
    pub neighbor_row_indices: Vec<usize>,
    /// The two normal indices, ascending.
    pub normal_indices: [usize; 2],
    /// Bivariate tuples `(i, j)`, `(p + 1) * 2` of them.
    pub bivariate_tuples: Vec<(usize, usize)>,
}

fn is_power_of_two(x: usize) -> bool {
    x != 0 && x & (x - 1) == 0
}

/// Size the quadrature knot vector for Lobatto row `l` (0-based) from the
/// initial span counts and the assumed maximum shrinkage factors.
fn quad_span_count(l0: usize, spans: &[usize], rho: &[usize]) -> usize {
    let s = (l0 + 1) / 2;
    let n = if l0 % 2 == 0 { s + 1 } else { s - 1 };
    (rho[s] * spans[s]).max(2 * rho[n] * spans[n])
}

impl QuadraturePointSet {
    /// Build the point set for the patch's current (unrefined) parent rows.
    ///
    /// `rho[j]` is the assumed maximum knot-span shrinkage of row `j` due to
    /// adaptive refinement: a power of two, `>= 1`. The quadrature vectors
    /// are sized as supersets of the parent vectors with a doubled density
    /// toward the neighbor row and stay fixed afterwards.
    pub fn build(patch: &FloatingPatch, points_per_span: usize, rho: &[usize]) -> Result<Self> {
        let spans: Vec<usize> = (0..patch.num_rows())
            .map(|j| patch.row_basis(j).breaks().len() - 1)
            .collect();
        Self::build_from_spans(patch, points_per_span, rho, &spans)
    }

    /// Build against explicit initial span counts; used when restoring a
    /// refined patch, whose current rows are supersets of the initial ones.
    pub fn build_from_spans(
        patch: &FloatingPatch,
        points_per_span: usize,
        rho: &[usize],
        spans: &[usize],
    ) -> Result<Self> {
        let j_count = patch.num_rows();
        if j_count < 2 {
            return Err(FligaError::InvalidInput("need at least two rows".into()));
        }
        if rho.len() != j_count || spans.len() != j_count {
            return Err(FligaError::InvalidInput(format!(
                "rho/spans have {}/{} entries for {} rows",
                rho.len(),
                spans.len(),
                j_count
            )));
        }
        if let Some(bad) = rho.iter().find(|&&r| !is_power_of_two(r)) {
            return Err(FligaError::InvalidInput(format!(
                "density factors must be powers of two >= 1, got {bad}"
            )));
        }
        let normal_breaks = patch.normal_kv().breaks();

        let mut rows = Vec::with_capacity(2 * j_count - 2);
        for l0 in 0..2 * (j_count - 1) {
            let normal_span = l0 / 2;
            let left = normal_breaks[normal_span];
            let right = normal_breaks[normal_span + 1];
            let delta = right - left;
            let s = (l0 + 1) / 2;
            let n = if l0 % 2 == 0 { s + 1 } else { s - 1 };
            let far_candidate = 2 * s as isize - n as isize;
            let far = (0..j_count as isize)
                .contains(&far_candidate)
                .then_some(far_candidate as usize);
            let (eta, m_grad_s, m_grad_n) = if l0 % 2 == 0 {
                (left, -1.0 / delta, 1.0 / delta)
            } else {
                (right, 1.0 / delta, -1.0 / delta)
            };

            let count = quad_span_count(l0, spans, rho);
            let degree = patch.row_basis(s).degree();
            let basis = match patch.row_basis(s) {
                RowBasis::Open(_) => RowBasis::Open(KnotVector::open_uniform(count, degree)?),
                RowBasis::Periodic(_) => RowBasis::Periodic(PeriodicBasis::new(count, degree)?),
            };
            // Superset requirement against the supported parent row.
            let parent_breaks = patch.row_basis(s).breaks();
            let quad_breaks = basis.breaks();
            for pb in &parent_breaks {
                if !quad_breaks.iter().any(|qb| (qb - pb).abs() < 1e-12) {
                    return Err(FligaError::InvalidInput(format!(
                        "quadrature vector for l = {l0} is not a superset of parent row {s}; \
                         initial parent rows must share a uniform span count"
                    )));
                }
            }

            let stencil = legendre_stencil_on_breaks(&quad_breaks, points_per_span)?;
            let points = stencil
                .points
                .iter()
                .map(|sp| QuadPoint {
                    xt: sp.coord,
                    parent_weight: sp.weight,
                    span: sp.span,
                    neighbor_xt: sp.coord,
                    far_xt: f64::NAN,
                    phys: [0.0; 2],
                    phys_weight: 0.0,
                })
                .collect();
            rows.push(QuadRow {
                s,
                n,
                far,
                eta,
                normal_weight: 0.5 * delta,
                normal_span,
                m_grad_s,
                m_grad_n,
                basis,
                points,
            });
        }
        let mut set = Self {
            rows,
            points_per_span,
        };
        set.refresh_neighbor_pullbacks(patch)?;
        set.refresh_physical(patch)?;
        Ok(set)
    }

    pub fn rows(&self) -> &[QuadRow] {
        &self.rows
    }

    pub fn points_per_span(&self) -> usize {
        self.points_per_span
    }

    pub fn num_points(&self) -> usize {
        self.rows.iter().map(|r| r.points.len()).sum()
    }

    pub fn point(&self, g: usize, l0: usize) -> &QuadPoint {
        &self.rows[l0].points[g]
    }

    /// Recompute every neighbor (and far-row) pullback from the current
    /// regulation state, warm-starting from the stored values.
    pub fn refresh_neighbor_pullbacks(&mut self, patch: &FloatingPatch) -> Result<()> {
        for row in &mut self.rows {
            let (s, n, far) = (row.s, row.n, row.far);
            for pt in &mut row.points {
                let xi = patch.floating_map(s, pt.xt)?;
                pt.neighbor_xt = patch.inverse_floating_map(n, xi, Some(pt.neighbor_xt))?;
                if let Some(f) = far {
                    let guess = if pt.far_xt.is_finite() { pt.far_xt } else { pt.xt };
                    pt.far_xt = patch.inverse_floating_map(f, xi, Some(guess))?;
                }
            }
        }
        Ok(())
    }

    /// Recompute only the cached physical positions (a row-local sum over
    /// the supported row's controls); cheap enough to run every step.
    pub fn refresh_positions(&mut self, patch: &FloatingPatch) -> Result<()> {
        for row in &mut self.rows {
            let basis = patch.row_basis(row.s);
            let controls = patch.controls_row(row.s);
            for pt in &mut row.points {
                let ev = basis.eval(pt.xt, 0)?;
                let mut x = [0.0; 2];
                for (o, a) in ev.indices().enumerate() {
                    let c = controls[basis.dof_of(a)];
                    x[0] += c[0] * ev.value[o];
                    x[1] += c[1] * ev.value[o];
                }
                pt.phys = x;
            }
        }
        Ok(())
    }

    /// Recompute cached physical positions and weights from the control
    /// points. Positions involve only the supported row's controls.
    pub fn refresh_physical(&mut self, patch: &FloatingPatch) -> Result<()> {
        for l0 in 0..self.rows.len() {
            for g in 0..self.rows[l0].points.len() {
                let ev = eval_point(patch, &self.rows[l0], &self.rows[l0].points[g], l0, g)?;
                let row = &mut self.rows[l0];
                let basis = patch.row_basis(row.s);
                let mut x = [0.0; 2];
                let sup = &ev.sup;
                for (o, a) in sup.indices().enumerate() {
                    let c = patch.control(row.s, basis.dof_of(a));
                    x[0] += c[0] * sup.value[o];
                    x[1] += c[1] * sup.value[o];
                }
                row.points[g].phys = x;
                row.points[g].phys_weight = ev.w_phys;
            }
        }
        Ok(())
    }

    /// Full basis/gradient/weight evaluation at every point. Rows are
    /// evaluated in parallel when a rayon pool with more than one thread is
    /// active; results are collected in row order, so the output (and
    /// everything assembled from it) is identical for any thread count.
    pub fn evaluate(&self, patch: &FloatingPatch) -> Result<Vec<Vec<PointEval>>> {
        use rayon::prelude::*;
        self.rows
            .par_iter()
            .enumerate()
            .map(|(l0, row)| {
                row.points
                    .iter()
                    .enumerate()
                    .map(|(g, pt)| eval_point(patch, row, pt, l0, g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    }

    /// Sparse basis values at a point: only the supported row contributes;
    /// neighbor-row values are exactly zero.
    pub fn basis_at_point(
        &self,
        g: usize,
        l0: usize,
        patch: &FloatingPatch,
    ) -> Result<Vec<((usize, usize), f64)>> {
        let row = &self.rows[l0];
        let pt = &row.points[g];
        let ev = patch.row_basis(row.s).eval(pt.xt, 0)?;
        let basis = patch.row_basis(row.s);
        let mut out: Vec<((usize, usize), f64)> = ev
            .indices()
            .enumerate()
            .map(|(o, a)| ((basis.dof_of(a), row.s), ev.value[o]))
            .collect();
        let nb = patch.row_basis(row.n).eval(pt.neighbor_xt, 0)?;
        let nbasis = patch.row_basis(row.n);
        out.extend(nb.indices().map(|a| ((nbasis.dof_of(a), row.n), 0.0)));
        Ok(out)
    }

    /// Physical position of a point, from the supported row's controls only.
    pub fn physical_position(&self, g: usize, l0: usize, patch: &FloatingPatch) -> Result<[f64; 2]> {
        let row = &self.rows[l0];
        let pt = &row.points[g];
        let ev = patch.row_basis(row.s).eval(pt.xt, 0)?;
        let basis = patch.row_basis(row.s);
        let mut x = [0.0; 2];
        for (o, a) in ev.indices().enumerate() {
            let c = patch.control(row.s, basis.dof_of(a));
            x[0] += c[0] * ev.value[o];
            x[1] += c[1] * ev.value[o];
        }
        Ok(x)
    }

    /// Parametric and physical weights of a point.
    pub fn weights(&self, g: usize, l0: usize, patch: &FloatingPatch) -> Result<(f64, f64)> {
        let row = &self.rows[l0];
        let ev = eval_point(patch, row, &row.points[g], l0, g)?;
        Ok((ev.w_param, ev.w_phys))
    }

    /// Connectivity sets at a point.
    pub fn connectivities(
        &self,
        g: usize,
        l0: usize,
        patch: &FloatingPatch,
    ) -> Result<ConnectivitySets> {
        let row = &self.rows[l0];
        let pt = &row.points[g];
        let sup = patch.row_basis(row.s).eval(pt.xt, 0)?;
        let nbr = patch.row_basis(row.n).eval(pt.neighbor_xt, 0)?;
        let sb = patch.row_basis(row.s);
        let nb = patch.row_basis(row.n);
        let supported: Vec<usize> = sup.indices().map(|a| sb.dof_of(a)).collect();
        let neighbor: Vec<usize> = nbr.indices().map(|a| nb.dof_of(a)).collect();
        let normal = [row.s.min(row.n), row.s.max(row.n)];
        let mut tuples = Vec::with_capacity(supported.len() + neighbor.len());
        for j in normal {
            let list = if j == row.s { &supported } else { &neighbor };
            tuples.extend(list.iter().map(|&i| (i, j)));
        }
        Ok(ConnectivitySets {
            supported_row_indices: supported,
            neighbor_row_indices: neighbor,
            normal_indices: normal,
            bivariate_tuples: tuples,
        })
    }

    /// Approximate a physical integral from values sampled at the points,
    /// using the cached physical weights.
    pub fn integrate(&self, mut f: impl FnMut(usize, usize, [f64; 2]) -> f64) -> f64 {
        let mut acc = 0.0;
        for (l0, row) in self.rows.iter().enumerate() {
            for (g, pt) in row.points.iter().enumerate() {
                acc += f(g, l0, pt.phys) * pt.phys_weight;
            }
        }
        acc
    }

    /// Total cached physical weight (the current domain area).
    pub fn total_weight(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.points.iter())
            .map(|p| p.phys_weight)
            .sum()
    }

    /// Debug dump of the point cloud as CSV: `x,y,weight,s,n,l`.
    pub fn dump_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "x,y,weight,s,n,l")?;
        for (l0, row) in self.rows.iter().enumerate() {
            for pt in &row.points {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    pt.phys[0],
                    pt.phys[1],
                    pt.phys_weight,
                    row.s + 1,
                    row.n + 1,
                    l0 + 1
                )?;
            }
        }
        Ok(())
    }

    /// Check that every parent row is still a knot-set subset of all
    /// quadrature vectors referring to it (supported or neighbor).
    pub fn validate_supersets(&self, patch: &FloatingPatch) -> Result<()> {
        for (l0, row) in self.rows.iter().enumerate() {
            let quad_breaks = row.basis.breaks();
            for j in [row.s, row.n] {
                for pb in patch.row_basis(j).breaks() {
                    if !quad_breaks.iter().any(|qb| (qb - pb).abs() < 1e-12) {
                        return Err(FligaError::DensityExceeded(format!(
                            "parent row {j} has a knot at {pb} missing from quadrature vector l = {l0}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Evaluate everything needed for assembly at one point.
pub(crate) fn eval_point(
    patch: &FloatingPatch,
    row: &QuadRow,
    pt: &QuadPoint,
    l0: usize,
    g: usize,
) -> Result<PointEval> {
    let sbasis = patch.row_basis(row.s);
    let nbasis = patch.row_basis(row.n);
    let sup = sbasis.eval(pt.xt, 1)?;
    let nbr = nbasis.eval(pt.neighbor_xt, 1)?;

    let mut j_s = 0.0;
    for (o, a) in sup.indices().enumerate() {
        j_s += patch.h_unwrapped(row.s, a) * sup.d1[o];
    }
    let mut j_n = 0.0;
    for (o, a) in nbr.indices().enumerate() {
        j_n += patch.h_unwrapped(row.n, a) * nbr.d1[o];
    }
    if j_s <= 0.0 || j_n <= 0.0 {
        return Err(FligaError::SingularMap {
            det: j_s.min(j_n),
            g,
            l: l0,
        });
    }

    // Parametric gradients: supported row has both components, the neighbor
    // only the eta component (its normal value vanishes at eta^l).
    let mut pgrad_s = [[0.0; 2]; MAX_DEGREE + 1];
    let mut pgrad_n = [[0.0; 2]; MAX_DEGREE + 1];
    for o in 0..sup.count {
        pgrad_s[o] = [sup.d1[o] / j_s, sup.value[o] * row.m_grad_s];
    }
    for o in 0..nbr.count {
        pgrad_n[o] = [0.0, nbr.value[o] * row.m_grad_n];
    }

    // Physical-map Jacobian summed over both supported rows.
    let mut jac = [[0.0; 2]; 2];
    for (o, a) in sup.indices().enumerate() {
        let c = patch.control(row.s, sbasis.dof_of(a));
        for d in 0..2 {
            jac[d][0] += c[d] * pgrad_s[o][0];
            jac[d][1] += c[d] * pgrad_s[o][1];
        }
    }
    for (o, a) in nbr.indices().enumerate() {
        let c = patch.control(row.n, nbasis.dof_of(a));
        for d in 0..2 {
            jac[d][1] += c[d] * pgrad_n[o][1];
        }
    }
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if det < 1e-14 {
        return Err(FligaError::SingularMap { det, g, l: l0 });
    }
    let inv = [
        [jac[1][1] / det, -jac[0][1] / det],
        [-jac[1][0] / det, jac[0][0] / det],
    ];

    let mut grad_s = [[0.0; 2]; MAX_DEGREE + 1];
    let mut grad_n = [[0.0; 2]; MAX_DEGREE + 1];
    for o in 0..sup.count {
        for a in 0..2 {
            grad_s[o][a] = inv[0][a] * pgrad_s[o][0] + inv[1][a] * pgrad_s[o][1];
        }
    }
    for o in 0..nbr.count {
        for a in 0..2 {
            grad_n[o][a] = inv[1][a] * pgrad_n[o][1];
        }
    }

    let w_param = j_s * pt.parent_weight * row.normal_weight;
    let w_phys = det * w_param;

    Ok(PointEval {
        sup,
        nbr,
        j_s,
        j_n,
        jac,
        det,
        jac_inv: inv,
        w_param,
        w_phys,
        grad_s,
        grad_n,
        pgrad_s,
        pgrad_n,
    })
}
