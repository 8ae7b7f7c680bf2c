//! Time stepping: quasi-static solves with explicit history transport,
//! control-point advection, and the periodic floating-operations block
//! (regulation, adaptive refinement, pullback/weight refresh).

use crate::error::{FligaError, Result};
use crate::linalg::{LinearSolver, TripletMatrix, DEFAULT_SPARSE_THRESHOLD};
use crate::patch::{FieldArray, FloatingPatch};
use crate::quadrature::QuadraturePointSet;
use crate::refinement::{adapt, RefinementEvent, RefinementPolicy};
use crate::regulation::{solve_regulation, RegulationOptions};
use crate::solver::{
    assembly, oldroyd_b_update, ContactParams, MaterialParams, MaterialState, PressureSpace,
};
use serde::{Deserialize, Serialize};

/// Scenario-supplied boundary data, re-evaluated every step against the
/// current patch (control indices shift under refinement).
pub trait BoundaryModel: Send {
    /// Velocity Dirichlet data as `(global velocity dof, value)` pairs.
    fn dirichlet(&self, patch: &FloatingPatch, time: f64) -> Vec<(usize, f64)>;

    /// Optional pressure gauge: a pressure dof pinned to zero.
    fn pressure_pin(&self, pressure: &PressureSpace) -> Option<usize> {
        let _ = pressure;
        None
    }

    /// Optional geometric maintenance after the explicit position update,
    /// e.g. re-projecting wall-attached control points onto a rigid wall's
    /// exact motion. Returns true when control points were changed.
    fn post_step(&self, patch: &mut FloatingPatch, time: f64, dt: f64) -> bool {
        let _ = (patch, time, dt);
        false
    }
}

#[derive(Clone, Debug)]
pub struct StepConfig {
    pub dt: f64,
    /// Floating-operations interval (steps between regulation/refinement).
    pub n_f: usize,
    pub enable_regulation: bool,
    pub regulation: RegulationOptions,
    pub refinement: Option<RefinementPolicy>,
    pub sparse_threshold: usize,
    /// Contact Newton: infinity-norm tolerance relative to the force scale.
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            n_f: 5,
            enable_regulation: true,
            regulation: RegulationOptions::default(),
            refinement: None,
            sparse_threshold: DEFAULT_SPARSE_THRESHOLD,
            newton_tol: 1e-8,
            newton_max: 30,
        }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub newton_iterations: usize,
    pub max_divergence: f64,
    pub regulation_iterations: Option<usize>,
    pub refinement_events: Vec<RefinementEvent>,
    pub wall_seconds: f64,
}

/// Restartable snapshot: the full patch (with its velocity field), history
/// state and step counter, plus the data needed to rebuild the quadrature
/// vectors exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub patch: FloatingPatch,
    pub state: MaterialState,
    pub step: usize,
    pub time: f64,
    pub initial_spans: Vec<usize>,
    pub rho: Vec<usize>,
    pub points_per_span: usize,
}

pub struct SimulationBuilder {
    pub patch: FloatingPatch,
    pub params: MaterialParams,
    pub config: StepConfig,
    pub rho: Vec<usize>,
    pub points_per_span: usize,
    pub with_pressure: bool,
    pub contact: Option<ContactParams>,
    pub bc: Box<dyn BoundaryModel>,
}

impl SimulationBuilder {
    pub fn build(self) -> Result<Simulation> {
        self.params.validate()?;
        if let Some(c) = &self.contact {
            c.validate()?;
        }
        let mut patch = self.patch;
        if patch.field("velocity").is_none() {
            let lens = patch.row_lens();
            patch.insert_field("velocity", FieldArray::zeros(2, &lens))?;
        }
        let initial_spans: Vec<usize> = (0..patch.num_rows())
            .map(|j| patch.row_basis(j).breaks().len() - 1)
            .collect();
        let point_set = QuadraturePointSet::build(&patch, self.points_per_span, &self.rho)?;
        let state = MaterialState::zeros(&point_set);
        let pressure = if self.with_pressure {
            Some(PressureSpace::build(&patch)?)
        } else {
            None
        };
        let solver = LinearSolver::new(self.config.sparse_threshold);
        Ok(Simulation {
            patch,
            pressure,
            point_set,
            state,
            params: self.params,
            contact: self.contact,
            bc: self.bc,
            config: self.config,
            step: 0,
            time: 0.0,
            initial_spans,
            rho: self.rho,
            points_per_span: self.points_per_span,
            solver,
            last_pressure: Vec::new(),
            pending_events: Vec::new(),
        })
    }
}

pub struct Simulation {
    pub patch: FloatingPatch,
    pub pressure: Option<PressureSpace>,
    pub point_set: QuadraturePointSet,
    pub state: MaterialState,
    pub params: MaterialParams,
    pub contact: Option<ContactParams>,
    pub bc: Box<dyn BoundaryModel>,
    pub config: StepConfig,
    pub step: usize,
    pub time: f64,
    initial_spans: Vec<usize>,
    rho: Vec<usize>,
    points_per_span: usize,
    solver: LinearSolver,
    /// Pressure coefficients from the last solve (their layout is static;
    /// the velocity layout can grow under refinement, so velocities live in
    /// the patch's "velocity" field instead).
    last_pressure: Vec<f64>,
    pending_events: Vec<RefinementEvent>,
}

impl Simulation {
    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.patch.total_dofs()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_velocity_dofs() + self.pressure.as_ref().map_or(0, |p| p.num_dofs())
    }

    /// Solved pressure coefficients from the last step.
    pub fn pressure_coeffs(&self) -> &[f64] {
        &self.last_pressure
    }

    /// Full unknown vector in the current layout, built from the patch's
    /// velocity field and the stored pressure coefficients. Valid across
    /// refinement (the field is transformed with the rows).
    pub fn current_u(&self) -> Vec<f64> {
        let nv = self.num_velocity_dofs();
        let nq = self.pressure.as_ref().map_or(0, |p| p.num_dofs());
        let mut u = vec![0.0; nv + nq];
        if let Some(f) = self.patch.field("velocity") {
            let offsets = self.patch.row_offsets();
            for j in 0..self.patch.num_rows() {
                for i in 0..self.patch.row_len(j) {
                    let m = offsets[j] + i;
                    u[2 * m] = f.get(j, i, 0);
                    u[2 * m + 1] = f.get(j, i, 1);
                }
            }
        }
        if self.last_pressure.len() == nq {
            u[nv..].copy_from_slice(&self.last_pressure);
        }
        u
    }

    /// Solve the quasi-static system on the current geometry and store the
    /// velocity/pressure coefficients without touching history, geometry or
    /// the step counter. Used for measurements at the solve configuration;
    /// the polymeric stress keeps its current value.
    pub fn solve_current(&mut self) -> Result<()> {
        let evals = self.point_set.evaluate(&self.patch)?;
        let sys = assembly::assemble_system(
            &self.patch,
            self.pressure.as_ref(),
            &self.point_set,
            &evals,
            &self.state,
            &self.params,
        )?;
        let mut bc = self.bc.dirichlet(&self.patch, self.time);
        if let (Some(ps), nv) = (self.pressure.as_ref(), self.num_velocity_dofs()) {
            if let Some(z) = self.bc.pressure_pin(ps) {
                bc.push((nv + z, 0.0));
            }
        }
        let u = if self.contact.is_none() {
            assembly::solve_constrained(&sys.k, &sys.b, &bc, &mut self.solver, true)?
        } else {
            let mut report = StepReport::default();
            self.newton_contact(&sys, &bc, &evals, &mut report)?
        };
        self.store_solution(&u);
        Ok(())
    }

    fn store_solution(&mut self, u: &[f64]) {
        let offsets = self.patch.row_offsets();
        for j in 0..self.patch.num_rows() {
            for i in 0..self.patch.row_len(j) {
                let m = offsets[j] + i;
                let (vx, vy) = (u[2 * m], u[2 * m + 1]);
                let f = self.patch.field_mut("velocity").expect("velocity field");
                f.set(j, i, 0, vx);
                f.set(j, i, 1, vy);
            }
        }
        self.last_pressure = u[self.num_velocity_dofs()..].to_vec();
    }

    /// One time step: update the polymeric stress from history, solve the
    /// quasi-static system on the current geometry, capture the velocity
    /// gradient, advect the control points, and run the floating block every
    /// `n_f` steps.
    pub fn advance_step(&mut self) -> Result<StepReport> {
        let started = std::time::Instant::now();
        let step_idx = self.step;
        let mut report = StepReport {
            step: step_idx,
            time: self.time,
            ..Default::default()
        };

        // Polymeric stress from step n-1 data only.
        oldroyd_b_update(&mut self.state, &self.params, self.config.dt);

        let evals = self
            .point_set
            .evaluate(&self.patch)
            .map_err(|e| e.at_step(step_idx))?;
        let sys = assembly::assemble_system(
            &self.patch,
            self.pressure.as_ref(),
            &self.point_set,
            &evals,
            &self.state,
            &self.params,
        )
        .map_err(|e| e.at_step(step_idx))?;

        let mut bc = self.bc.dirichlet(&self.patch, self.time);
        if let (Some(ps), nv) = (self.pressure.as_ref(), self.num_velocity_dofs()) {
            if let Some(z) = self.bc.pressure_pin(ps) {
                bc.push((nv + z, 0.0));
            }
        }

        let u = if self.contact.is_none() {
            assembly::solve_constrained(&sys.k, &sys.b, &bc, &mut self.solver, true)
                .map_err(|e| e.at_step(step_idx))?
        } else {
            self.newton_contact(&sys, &bc, &evals, &mut report)
                .map_err(|e| e.at_step(step_idx))?
        };

        // Divergence residual at the solution (free pressure rows).
        if let Some(ps) = self.pressure.as_ref() {
            let q = assembly::incompressibility_residual(
                &self.patch,
                ps,
                &self.point_set,
                &evals,
                &u,
            )?;
            let pin = self.bc.pressure_pin(ps);
            report.max_divergence = q
                .iter()
                .enumerate()
                .filter(|(z, _)| Some(*z) != pin)
                .fold(0.0, |m, (_, v)| m.max(v.abs()));
        }

        // Capture the velocity gradient at every point for the next stress
        // update, and store the solved coefficients on the patch.
        let offsets = self.patch.row_offsets();
        for (l0, qrow) in self.point_set.rows().iter().enumerate() {
            for (g, _) in qrow.points.iter().enumerate() {
                let ev = &evals[l0][g];
                let mut grad_v = [[0.0_f64; 2]; 2];
                let sb = self.patch.row_basis(qrow.s);
                for (o, a) in ev.sup.indices().enumerate() {
                    let m = offsets[qrow.s] + sb.dof_of(a);
                    for c in 0..2 {
                        grad_v[0][c] += u[2 * m] * ev.grad_s[o][c];
                        grad_v[1][c] += u[2 * m + 1] * ev.grad_s[o][c];
                    }
                }
                let nb = self.patch.row_basis(qrow.n);
                for (o, a) in ev.nbr.indices().enumerate() {
                    let m = offsets[qrow.n] + nb.dof_of(a);
                    for c in 0..2 {
                        grad_v[0][c] += u[2 * m] * ev.grad_n[o][c];
                        grad_v[1][c] += u[2 * m + 1] * ev.grad_n[o][c];
                    }
                }
                self.state.rows[l0][g].velocity_gradient = grad_v;
            }
        }
        self.store_solution(&u);

        // Forward-Euler advection of the control net.
        let dt = self.config.dt;
        for j in 0..self.patch.num_rows() {
            for i in 0..self.patch.row_len(j) {
                let m = offsets[j] + i;
                let c = self.patch.control(j, i);
                self.patch
                    .set_control(j, i, [c[0] + dt * u[2 * m], c[1] + dt * u[2 * m + 1]]);
            }
        }
        self.bc.post_step(&mut self.patch, self.time, dt);
        // Positions are Lagrangian and cheap; weights are refreshed in the
        // floating block and before measurements.
        self.point_set
            .refresh_positions(&self.patch)
            .map_err(|e| e.at_step(step_idx))?;

        self.step += 1;
        self.time += dt;

        if self.step % self.config.n_f == 0 {
            self.floating_block(&mut report)
                .map_err(|e| e.at_step(step_idx))?;
        }
        report.refinement_events = std::mem::take(&mut self.pending_events);
        report.wall_seconds = started.elapsed().as_secs_f64();
        Ok(report)
    }

    /// Newton iteration on the contact-augmented residual with frozen
    /// geometry, matching the assembled tangents.
    fn newton_contact(
        &mut self,
        sys: &assembly::SystemMatrices,
        bc: &[(usize, f64)],
        evals: &[Vec<crate::quadrature::PointEval>],
        report: &mut StepReport,
    ) -> Result<Vec<f64>> {
        let contact = self.contact.as_ref().expect("contact params");
        let ntot = sys.k.n;
        let mut u = self.current_u();
        debug_assert_eq!(u.len(), ntot);
        for &(dof, v) in bc {
            u[dof] = v;
        }
        let mut fixed = vec![false; ntot];
        for &(dof, _) in bc {
            fixed[dof] = true;
        }

        let mut scale: f64 = 1e-30;
        for it in 0..self.config.newton_max {
            let r_phys = assembly::physics_residual(
                &self.patch,
                self.pressure.as_ref(),
                &self.point_set,
                evals,
                &self.state,
                &self.params,
                &u,
            )?;
            let (f_c, k_c) =
                assembly::contact_contributions(&self.patch, &self.point_set, contact, &u)?;
            let mut resid = vec![0.0; ntot];
            for i in 0..ntot {
                // R_C = F_int - F_ext - F_C; F_ext is zero and the tau terms
                // are inside the physics residual.
                resid[i] = r_phys[i] - f_c[i];
                scale = scale.max(r_phys[i].abs()).max(f_c[i].abs());
            }
            let rnorm = resid
                .iter()
                .enumerate()
                .filter(|(i, _)| !fixed[*i])
                .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
            report.newton_iterations = it;
            if rnorm <= self.config.newton_tol * scale {
                return Ok(u);
            }
            // Tangent: constant mechanics matrix plus contact stiffness.
            let mut kt = TripletMatrix::new(ntot);
            kt.entries.reserve(sys.k.entries.len() + k_c.entries.len());
            kt.entries.extend_from_slice(&sys.k.entries);
            kt.entries.extend_from_slice(&k_c.entries);
            let neg: Vec<f64> = resid.iter().map(|v| -v).collect();
            let delta_bc: Vec<(usize, f64)> = bc.iter().map(|&(d, _)| (d, 0.0)).collect();
            let delta =
                assembly::solve_constrained(&kt, &neg, &delta_bc, &mut self.solver, true)?;
            for i in 0..ntot {
                u[i] += delta[i];
            }
        }
        Err(FligaError::NewtonDivergence(format!(
            "contact Newton did not reach {:e} x scale in {} iterations",
            self.config.newton_tol, self.config.newton_max
        )))
    }

    /// Regulation, adaptive refinement, pullback and weight refresh.
    fn floating_block(&mut self, report: &mut StepReport) -> Result<()> {
        if self.config.enable_regulation {
            let reg = solve_regulation(&mut self.patch, &mut self.point_set, &self.config.regulation)?;
            report.regulation_iterations = Some(reg.iterations);
        }
        if let Some(policy) = self.config.refinement.clone() {
            let events = adapt(&mut self.patch, &self.point_set, &policy)?;
            self.pending_events.extend(events);
        }
        self.point_set.refresh_neighbor_pullbacks(&self.patch)?;
        self.point_set.refresh_physical(&self.patch)?;
        Ok(())
    }

    /// Run `n` steps.
    pub fn advance(&mut self, n: usize) -> Result<Vec<StepReport>> {
        let mut reports = Vec::with_capacity(n);
        for _ in 0..n {
            reports.push(self.advance_step()?);
        }
        Ok(reports)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            patch: self.patch.clone(),
            state: self.state.clone(),
            step: self.step,
            time: self.time,
            initial_spans: self.initial_spans.clone(),
            rho: self.rho.clone(),
            points_per_span: self.points_per_span,
        }
    }

    /// Rebuild a simulation from a checkpoint plus the non-serializable run
    /// definition (material, contact, boundary model, step config).
    pub fn restore(
        ck: Checkpoint,
        params: MaterialParams,
        contact: Option<ContactParams>,
        bc: Box<dyn BoundaryModel>,
        config: StepConfig,
        with_pressure: bool,
    ) -> Result<Self> {
        params.validate()?;
        // Rebuild the quadrature vectors from the *initial* span counts; the
        // checkpointed patch may be refined, which the superset check admits.
        let mut point_set = QuadraturePointSet::build_from_spans(
            &ck.patch,
            ck.points_per_span,
            &ck.rho,
            &ck.initial_spans,
        )?;
        point_set.refresh_neighbor_pullbacks(&ck.patch)?;
        point_set.refresh_physical(&ck.patch)?;
        if ck.state.rows.len() != point_set.rows().len() {
            return Err(FligaError::InvalidInput("checkpoint state shape mismatch".into()));
        }
        let pressure = if with_pressure {
            Some(PressureSpace::build_initial(&ck.patch, &ck.initial_spans)?)
        } else {
            None
        };
        let solver = LinearSolver::new(config.sparse_threshold);
        Ok(Self {
            patch: ck.patch,
            pressure,
            point_set,
            state: ck.state,
            params,
            contact,
            bc,
            config,
            step: ck.step,
            time: ck.time,
            initial_spans: ck.initial_spans,
            rho: ck.rho,
            points_per_span: ck.points_per_span,
            solver,
            last_pressure: Vec::new(),
            pending_events: Vec::new(),
        })
    }
}
