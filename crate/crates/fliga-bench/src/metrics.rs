//! Error norms and per-run reporting.

use fliga::patch::FloatingPatch;
use fliga::quadrature::QuadraturePointSet;
use fliga::{FligaError, Result};

/// Floor applied to the logarithmic error norm; exact solutions would
/// otherwise produce negative infinity, and machine-precision results sit
/// near this value anyway.
pub const L2_FLOOR: f64 = -16.0;

/// Logarithmic L2 error norm `log10(||v - v_h|| / ||v||)` with both
/// integrals evaluated by the module quadrature rule.
///
/// `numeric` samples the discrete field per point `(g, l)`; `analytic`
/// evaluates the reference at a physical position.
pub fn l2_log_error(
    point_set: &QuadraturePointSet,
    mut numeric: impl FnMut(usize, usize) -> f64,
    mut analytic: impl FnMut([f64; 2]) -> f64,
) -> Result<f64> {
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for (l0, row) in point_set.rows().iter().enumerate() {
        for (g, pt) in row.points.iter().enumerate() {
            let v = analytic(pt.phys);
            let vh = numeric(g, l0);
            err2 += (v - vh) * (v - vh) * pt.phys_weight;
            ref2 += v * v * pt.phys_weight;
        }
    }
    if ref2 < 1e-30 {
        return Err(FligaError::InvalidInput(
            "zero reference field in the denominator".into(),
        ));
    }
    Ok((0.5 * (err2.log10() - ref2.log10())).max(L2_FLOOR))
}

/// Sample the patch's velocity field at a quadrature point (supported-row
/// functions only carry values there).
pub fn velocity_at_points(patch: &FloatingPatch, point_set: &QuadraturePointSet) -> Result<Vec<Vec<[f64; 2]>>> {
    let field = patch
        .field("velocity")
        .ok_or_else(|| FligaError::InvalidInput("patch has no velocity field".into()))?;
    let mut out = Vec::with_capacity(point_set.rows().len());
    for qrow in point_set.rows() {
        let basis = patch.row_basis(qrow.s);
        let mut vals = Vec::with_capacity(qrow.points.len());
        for pt in &qrow.points {
            let ev = basis.eval(pt.xt, 0)?;
            let mut v = [0.0_f64; 2];
            for (o, a) in ev.indices().enumerate() {
                let d = basis.dof_of(a);
                v[0] += field.get(qrow.s, d, 0) * ev.value[o];
                v[1] += field.get(qrow.s, d, 1) * ev.value[o];
            }
            vals.push(v);
        }
        out.push(vals);
    }
    Ok(out)
}

/// Divergence residual of a step normalized by velocity scale times area.
pub fn normalized_divergence(sim: &fliga::solver::Simulation, step: &fliga::solver::StepReport) -> f64 {
    let nv = sim.num_velocity_dofs();
    let u = sim.current_u();
    let vmax = u[..nv]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-30);
    let area = sim.point_set.total_weight().max(1e-30);
    step.max_divergence / (vmax * area)
}

/// One row of the per-step error report.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub step: usize,
    pub time: f64,
    pub l2_vx: f64,
    pub l2_vy: f64,
    pub l2_p: f64,
    pub dofs: usize,
    pub wall_ms: f64,
}

/// Per-run error report with refinement/regulation counters.
#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
    pub refinement_events: usize,
    pub regulation_solves: usize,
    /// Worst divergence residual across all converged steps, normalized by
    /// the velocity scale times the domain area.
    pub max_divergence_normalized: f64,
}

impl ErrorReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("step,time,L2_vx,L2_vy,L2_p,dofs,wall_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.step, r.time, r.l2_vx, r.l2_vy, r.l2_p, r.dofs, r.wall_ms
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&ReportRow> {
        self.rows.last()
    }
}
