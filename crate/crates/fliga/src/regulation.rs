//! Automated floating regulation.
//!
//! The characteristic coordinate is reparametrized by solving the weak
//! Laplace equation for the ansatz `xi^h = sum_m h_m B_m(x; H)` with the
//! regulation points as unknowns: Dirichlet anchors pin `h` at 0 and 1 on
//! open rows (all-periodic patches pin one gauge value instead), boundary
//! flux conditions hold naturally. Control points are never touched, so the
//! Lagrangian quadrature positions are preserved exactly.

use crate::error::{FligaError, Result};
use crate::linalg::{TripletMatrix, DEFAULT_SPARSE_THRESHOLD};
use crate::patch::FloatingPatch;
use crate::quadrature::{eval_point, PointEval, QuadRow, QuadraturePointSet};

#[derive(Clone, Copy, Debug)]
pub struct RegulationOptions {
    /// Infinity-norm residual tolerance, scaled by the patch diameter.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// Free-DOF count above which the tangent is solved sparsely.
    pub sparse_threshold: usize,
}

impl Default for RegulationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 25,
            max_backtracks: 10,
            sparse_threshold: DEFAULT_SPARSE_THRESHOLD,
        }
    }
}

/// Per-solve diagnostics for the run manifest.
#[derive(Clone, Debug, Default)]
pub struct RegulationReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Map between free regulation unknowns and `(row, dof)` pairs. Anchored
/// entries (`h = 0, 1` on open rows) and the gauge value of an all-periodic
/// patch are excluded from the solution space.
#[derive(Clone, Debug)]
pub struct RegulationSystem {
    ids: Vec<Vec<Option<usize>>>,
    list: Vec<(usize, usize)>,
}

impl RegulationSystem {
    pub fn new(patch: &FloatingPatch) -> Self {
        let all_periodic = (0..patch.num_rows()).all(|j| patch.row_basis(j).is_periodic());
        let mut ids = Vec::with_capacity(patch.num_rows());
        let mut list = Vec::new();
        let mut gauge_pinned = false;
        for j in 0..patch.num_rows() {
            let dofs = patch.row_len(j);
            let mut row_ids = vec![None; dofs];
            for d in 0..dofs {
                let anchored = if patch.row_basis(j).is_periodic() {
                    // Pin a single value to remove the constant-shift kernel.
                    let pin = all_periodic && !gauge_pinned && d == 0;
                    if pin {
                        gauge_pinned = true;
                    }
                    pin
                } else {
                    d == 0 || d == dofs - 1
                };
                if !anchored {
                    row_ids[d] = Some(list.len());
                    list.push((j, d));
                }
            }
            ids.push(row_ids);
        }
        Self { ids, list }
    }

    pub fn num_free(&self) -> usize {
        self.list.len()
    }

    pub fn free_dofs(&self) -> &[(usize, usize)] {
        &self.list
    }

    pub fn id_of(&self, j: usize, dof: usize) -> Option<usize> {
        self.ids[j][dof]
    }

    /// Weak-Laplace residual over the free unknowns. Requires fresh neighbor
    /// pullbacks and evaluates the current weights along the way.
    pub fn residual(&self, patch: &FloatingPatch, point_set: &QuadraturePointSet) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.num_free()];
        self.assemble(patch, point_set, &mut r, None)?;
        Ok(r)
    }

    /// Residual plus the analytic tangent.
    pub fn residual_and_tangent(
        &self,
        patch: &FloatingPatch,
        point_set: &QuadraturePointSet,
    ) -> Result<(Vec<f64>, TripletMatrix)> {
        let mut r = vec![0.0; self.num_free()];
        let mut k = TripletMatrix::new(self.num_free());
        self.assemble(patch, point_set, &mut r, Some(&mut k))?;
        Ok((r, k))
    }

    fn assemble(
        &self,
        patch: &FloatingPatch,
        point_set: &QuadraturePointSet,
        r: &mut [f64],
        mut k: Option<&mut TripletMatrix>,
    ) -> Result<()> {
        for (l0, row) in point_set.rows().iter().enumerate() {
            for (g, pt) in row.points.iter().enumerate() {
                let ev = eval_point(patch, row, pt, l0, g)?;
                self.assemble_point(patch, row, &ev, r, k.as_deref_mut());
            }
        }
        Ok(())
    }

    fn assemble_point(
        &self,
        patch: &FloatingPatch,
        row: &QuadRow,
        ev: &PointEval,
        r: &mut [f64],
        k: Option<&mut TripletMatrix>,
    ) {
        let sbasis = patch.row_basis(row.s);
        let nbasis = patch.row_basis(row.n);
        let ns = ev.sup.count;
        let ntup = ns + ev.nbr.count;

        // Gather the local tuples: physical gradients, parent data, h values
        // and free ids. Supported-row tuples come first.
        let mut grad = [[0.0_f64; 2]; 16];
        let mut pgrad = [[0.0_f64; 2]; 16];
        let mut val = [0.0_f64; 16];
        let mut d1 = [0.0_f64; 16];
        let mut hval = [0.0_f64; 16];
        let mut free_id = [None::<usize>; 16];
        let mut ctrl = [[0.0_f64; 2]; 16];
        for (o, a) in ev.sup.indices().enumerate() {
            let dof = sbasis.dof_of(a);
            grad[o] = ev.grad_s[o];
            pgrad[o] = ev.pgrad_s[o];
            val[o] = ev.sup.value[o];
            d1[o] = ev.sup.d1[o];
            hval[o] = patch.h_unwrapped(row.s, a);
            free_id[o] = self.ids[row.s][dof];
            ctrl[o] = patch.control(row.s, dof);
        }
        for (o, a) in ev.nbr.indices().enumerate() {
            let t = ns + o;
            let dof = nbasis.dof_of(a);
            grad[t] = ev.grad_n[o];
            pgrad[t] = ev.pgrad_n[o];
            val[t] = ev.nbr.value[o];
            d1[t] = ev.nbr.d1[o];
            hval[t] = patch.h_unwrapped(row.n, a);
            free_id[t] = self.ids[row.n][dof];
            ctrl[t] = patch.control(row.n, dof);
        }

        // grad xi^h at the point.
        let mut gxi = [0.0_f64; 2];
        for t in 0..ntup {
            gxi[0] += grad[t][0] * hval[t];
            gxi[1] += grad[t][1] * hval[t];
        }
        let w = ev.w_phys;
        for t in 0..ntup {
            if let Some(fi) = free_id[t] {
                r[fi] += (grad[t][0] * gxi[0] + grad[t][1] * gxi[1]) * w;
            }
        }

        let Some(k) = k else { return };

        // Mixed parametric derivative d^2 B_t / (dh_k dxi): case analysis over
        // which of the two rows each index belongs to. Only the xi component
        // is nonzero for (s, s); only the eta component otherwise.
        let inv = ev.jac_inv;
        let m2 = |t: usize, kk: usize| -> [f64; 2] {
            let t_sup = t < ns;
            let k_sup = kk < ns;
            match (t_sup, k_sup) {
                (true, true) => [-d1[t] * d1[kk] / (ev.j_s * ev.j_s), 0.0],
                (true, false) => [0.0, 0.0],
                (false, true) => [0.0, row.m_grad_n * d1[t] * val[kk] / ev.j_n],
                (false, false) => [0.0, -row.m_grad_n * d1[t] * val[kk] / ev.j_n],
            }
        };

        // Per free k: dJ (physical-map Jacobian derivative), dW, dJinv and
        // the D2 contraction with the current gradient field.
        let base_w = w / ev.det; // = J_s * parent_weight * normal_weight
        for kk in 0..ntup {
            let Some(fk) = free_id[kk] else { continue };

            let mut dj = [[0.0_f64; 2]; 2];
            for t in 0..ntup {
                let m = m2(t, kk);
                if m[0] != 0.0 || m[1] != 0.0 {
                    for dpq in 0..2 {
                        dj[dpq][0] += ctrl[t][dpq] * m[0];
                        dj[dpq][1] += ctrl[t][dpq] * m[1];
                    }
                }
            }
            // d(det)/dh_k = det * tr(J^{-1} dJ)
            let trace = inv[0][0] * dj[0][0] + inv[0][1] * dj[1][0] + inv[1][0] * dj[0][1]
                + inv[1][1] * dj[1][1];
            let djs = if kk < ns { d1[kk] } else { 0.0 };
            // W = det * J_s * wtilde * w_l
            let dw = ev.det * trace * base_w + (w / ev.j_s) * djs;

            // dJinv = -J^{-1} dJ J^{-1}
            let mut dinv = [[0.0_f64; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            acc += inv[a][p] * dj[p][q] * inv[q][b];
                        }
                    }
                    dinv[a][b] = -acc;
                }
            }

            // D2[t] = d/dh_k of the physical gradient of tuple t.
            let mut d2 = [[0.0_f64; 2]; 16];
            let mut gxi_dk = [0.0_f64; 2];
            for t in 0..ntup {
                let m = m2(t, kk);
                for a in 0..2 {
                    d2[t][a] = dinv[0][a] * pgrad[t][0]
                        + dinv[1][a] * pgrad[t][1]
                        + inv[0][a] * m[0]
                        + inv[1][a] * m[1];
                }
                gxi_dk[0] += d2[t][0] * hval[t];
                gxi_dk[1] += d2[t][1] * hval[t];
            }

            for t in 0..ntup {
                let Some(fi) = free_id[t] else { continue };
                let a_term = (d2[t][0] * gxi[0] + d2[t][1] * gxi[1]) * w;
                let b_term = (grad[t][0] * gxi_dk[0] + grad[t][1] * gxi_dk[1]) * w;
                let c_term = (grad[t][0] * grad[kk][0] + grad[t][1] * grad[kk][1]) * w;
                let d_term = (grad[t][0] * gxi[0] + grad[t][1] * gxi[1]) * dw;
                k.push(fi, fk, a_term + b_term + c_term + d_term);
            }
        }
    }
}

/// Newton-Raphson on the regulation residual with step-halving and a
/// monotonicity guard. Control points and field variables are never touched;
/// neighbor pullbacks and cached physical data are refreshed on exit.
pub fn solve_regulation(
    patch: &mut FloatingPatch,
    point_set: &mut QuadraturePointSet,
    opts: &RegulationOptions,
) -> Result<RegulationReport> {
    let system = RegulationSystem::new(patch);
    let mut report = RegulationReport::default();
    if system.num_free() == 0 {
        return Ok(report);
    }
    let tol = opts.tolerance * patch.diameter().max(1e-3);

    point_set.refresh_neighbor_pullbacks(patch)?;
    let mut resid = system.residual(patch, point_set)?;
    let mut norm = inf_norm(&resid);
    report.residual_history.push(norm);

    for _ in 0..opts.max_iterations {
        if norm <= tol {
            point_set.refresh_physical(patch)?;
            return Ok(report);
        }
        report.iterations += 1;
        let (_, tangent) = system.residual_and_tangent(patch, point_set)?;
        let neg: Vec<f64> = resid.iter().map(|v| -v).collect();
        let step = tangent.solve(&neg, false, opts.sparse_threshold)?;

        let backup: Vec<Vec<f64>> = (0..patch.num_rows()).map(|j| patch.h_row(j).to_vec()).collect();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            // Apply h <- backup + alpha * step.
            for j in 0..patch.num_rows() {
                let mut row = backup[j].clone();
                for d in 0..row.len() {
                    if let Some(fid) = system.id_of(j, d) {
                        row[d] += alpha * step[fid];
                    }
                }
                patch.set_h_row(j, row);
            }
            // Monotonicity guard: every sampled Jacobian must stay positive.
            if patch.check_monotone_maps().is_err() {
                alpha *= 0.5;
                continue;
            }
            if point_set.refresh_neighbor_pullbacks(patch).is_err() {
                alpha *= 0.5;
                continue;
            }
            let trial = system.residual(patch, point_set)?;
            let trial_norm = inf_norm(&trial);
            if trial_norm < norm || trial_norm <= tol {
                resid = trial;
                norm = trial_norm;
                report.residual_history.push(norm);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Restore the last good state before reporting failure.
            for (j, row) in backup.into_iter().enumerate() {
                patch.set_h_row(j, row);
            }
            point_set.refresh_neighbor_pullbacks(patch)?;
            return Err(FligaError::RegulationFailure(format!(
                "line search exhausted at residual {norm:e} (tolerance {tol:e})"
            )));
        }
    }
    if norm <= tol {
        point_set.refresh_physical(patch)?;
        return Ok(report);
    }
    Err(FligaError::RegulationFailure(format!(
        "no convergence after {} iterations: residual {norm:e} > {tol:e}",
        opts.max_iterations
    )))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Shear diagnostic: quadrature-weighted mean square of the projection of
/// `grad xi^h` onto the row normal, i.e. how strongly the xi-isolines tilt
/// against the characteristic (row) direction. `band` restricts the measure
/// to parent coordinates inside `[band.0, band.1]`, which excludes the
/// anchored end isolines that cannot realign by construction.
pub fn shear_misalignment(
    patch: &FloatingPatch,
    point_set: &QuadraturePointSet,
    band: (f64, f64),
) -> Result<f64> {
    let mut acc = 0.0;
    let mut total_w = 0.0;
    for (l0, row) in point_set.rows().iter().enumerate() {
        for (g, pt) in row.points.iter().enumerate() {
            if pt.xt < band.0 || pt.xt > band.1 {
                continue;
            }
            let ev = eval_point(patch, row, pt, l0, g)?;
            let mut gxi = [0.0_f64; 2];
            for (o, a) in ev.sup.indices().enumerate() {
                let h = patch.h_unwrapped(row.s, a);
                gxi[0] += ev.grad_s[o][0] * h;
                gxi[1] += ev.grad_s[o][1] * h;
            }
            for (o, a) in ev.nbr.indices().enumerate() {
                let h = patch.h_unwrapped(row.n, a);
                gxi[0] += ev.grad_n[o][0] * h;
                gxi[1] += ev.grad_n[o][1] * h;
            }
            // Tangent along the characteristic (row) direction in physical
            // space: first column of the physical Jacobian.
            let tx = ev.jac[0][0];
            let ty = ev.jac[1][0];
            let norm = (tx * tx + ty * ty).sqrt();
            // Misalignment: grad xi should be parallel to the row tangent,
            // i.e. orthogonal to the row normal (-ty, tx)/|t|.
            let proj = (-ty * gxi[0] + tx * gxi[1]) / norm;
            acc += proj * proj * ev.w_phys;
            total_w += ev.w_phys;
        }
    }
    Ok(acc / total_w)
}
