//! Planar extrusion from a convergent nozzle (half model, symmetric about
//! the axis): plug inflow drives material through a 4:1 contraction and a
//! straight die into a free strand; wall contact is enforced by penalties
//! with a slip-penalty ramp downstream of the inlet, and the die lip is
//! rounded by a small fillet. The swell ratio is the steady extrudate
//! half-width behind the exit over the exit half-width.

use crate::config::{ContactConfig, ScenarioConfig};
use crate::metrics::{ErrorReport, ReportRow};
use fliga::patch::FloatingPatch;
use fliga::refinement::RefinementPolicy;
use fliga::solver::{
    BoundaryModel, ContactParams, MaterialParams, PatchBoundary, PressureSpace, Simulation,
    SimulationBuilder, SlipRamp, StepConfig, WallChain,
};
use fliga::spline::{KnotVector, RowBasis};
use fliga::{FligaError, Result};

/// Channel half-width at position `x` along the axis.
fn half_width(cfg: &ScenarioConfig, x: f64) -> f64 {
    let e = &cfg.extrusion;
    let w_in = e.contraction * e.exit_halfwidth;
    if x <= 0.0 {
        w_in
    } else if x < e.contraction_length {
        w_in + (e.exit_halfwidth - w_in) * x / e.contraction_length
    } else {
        e.exit_halfwidth
    }
}

/// Total initial length: contraction + straight die + free stub.
fn total_length(cfg: &ScenarioConfig) -> f64 {
    let e = &cfg.extrusion;
    e.contraction_length + e.straight_length + e.stub_length
}

pub fn exit_x(cfg: &ScenarioConfig) -> f64 {
    cfg.extrusion.contraction_length + cfg.extrusion.straight_length
}

/// Material parameters from the Weissenberg number: `Wi = 0` selects the
/// Newtonian model with the full viscosity.
pub fn material(cfg: &ScenarioConfig) -> Result<MaterialParams> {
    let e = &cfg.extrusion;
    let base = cfg.material.to_params()?;
    if e.weissenberg <= 0.0 {
        Ok(MaterialParams::newtonian(
            base.solvent_viscosity + base.polymer_viscosity,
        ))
    } else {
        let lambda = e.weissenberg * e.exit_halfwidth / (12.0 * e.v_in);
        Ok(MaterialParams::oldroyd_b(
            base.solvent_viscosity,
            base.polymer_viscosity,
            lambda,
        ))
    }
}

pub fn build_patch(cfg: &ScenarioConfig) -> Result<FloatingPatch> {
    let d = &cfg.discretization;
    let length = total_length(cfg);
    let rows_count = d.elements[1] + 1;
    let normal_kv = KnotVector::open_uniform(d.elements[1], 1)?;
    let gy = normal_kv.greville();

    let mut rows = Vec::with_capacity(rows_count);
    let mut h = Vec::with_capacity(rows_count);
    let mut controls = Vec::with_capacity(rows_count);
    for j in 0..rows_count {
        let basis = RowBasis::Open(KnotVector::open_uniform(d.elements[0], d.degree)?);
        let gx = basis.greville();
        let row: Vec<[f64; 2]> = gx
            .iter()
            .map(|&g| {
                let x = g * length;
                [x, gy[j] * half_width(cfg, x)]
            })
            .collect();
        h.push(gx);
        controls.push(row);
        rows.push(basis);
    }
    FloatingPatch::new(rows, normal_kv, h, controls)
}

/// Nozzle wall chain: taper, straight die and the exit-lip fillet, oriented
/// so the material side is below.
pub fn wall_chain(cfg: &ScenarioConfig) -> Result<WallChain> {
    let e = &cfg.extrusion;
    let w_in = e.contraction * e.exit_halfwidth;
    let r_e = e.fillet_fraction * e.exit_halfwidth;
    let x_exit = exit_x(cfg);
    let mut points = vec![[-0.2 * e.contraction_length, w_in], [0.0, w_in]];
    points.push([e.contraction_length, e.exit_halfwidth]);
    points.push([x_exit - r_e, e.exit_halfwidth]);
    // Quarter-circle lip fillet, center (x_exit - r_e, r_out + r_e).
    let n_arc = 6;
    for k in 1..=n_arc {
        let th = -std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_2 * k as f64 / n_arc as f64;
        points.push([
            x_exit - r_e + r_e * th.cos(),
            e.exit_halfwidth + r_e + r_e * th.sin(),
        ]);
    }
    WallChain::new(points)
}

pub fn contact_params(cfg: &ScenarioConfig) -> Result<ContactParams> {
    let cc: &ContactConfig = cfg
        .contact
        .as_ref()
        .ok_or_else(|| FligaError::InvalidInput("extrusion requires [contact]".into()))?;
    let e = &cfg.extrusion;
    // The plug inflow conflicts with no-slip at the wall, so the slip
    // penalty ramps in downstream of the inlet (the printed extent of the
    // ramp region is figure-only; this interval is a documented guess).
    let ramp = cc.slip_ramp.unwrap_or([0.1 * e.contraction_length, e.contraction_length]);
    let params = ContactParams {
        kappa_p: cc.kappa_p,
        kappa_r: cc.kappa_r,
        kappa_s: cc.kappa_s,
        walls: vec![wall_chain(cfg)?],
        slip_ramp: Some(SlipRamp {
            axis: 0,
            from: ramp[0],
            to: ramp[1],
        }),
        boundaries: vec![PatchBoundary::EtaOne],
        search_band: Some(0.5 * e.exit_halfwidth),
    };
    params.validate()?;
    Ok(params)
}

struct ExtrusionBoundary {
    v_in: f64,
}

impl BoundaryModel for ExtrusionBoundary {
    fn dirichlet(&self, patch: &FloatingPatch, _time: f64) -> Vec<(usize, f64)> {
        let mut bc = Vec::new();
        // Plug inflow at the inlet edge.
        for j in 0..patch.num_rows() {
            let m = patch.running_index(0, j).unwrap();
            bc.push((2 * m, self.v_in));
            bc.push((2 * m + 1, 0.0));
        }
        // Symmetry axis: no transverse velocity.
        for i in 0..patch.row_len(0) {
            let m = patch.running_index(i, 0).unwrap();
            bc.push((2 * m + 1, 0.0));
        }
        bc
    }

    fn pressure_pin(&self, _pressure: &PressureSpace) -> Option<usize> {
        None // the free surface fixes the pressure level
    }
}

fn step_config(cfg: &ScenarioConfig) -> StepConfig {
    let refinement = cfg.refinement.as_ref().map(|r| {
        let mean = total_length(cfg) / cfg.discretization.elements[0] as f64;
        RefinementPolicy {
            insert_threshold: r.insert_factor * mean,
            remove_threshold: r.remove_factor * mean,
        }
    });
    StepConfig {
        dt: cfg.stepping.dt,
        n_f: cfg.stepping.floating_interval,
        enable_regulation: cfg.stepping.enable_regulation,
        refinement,
        ..Default::default()
    }
}

pub fn build_simulation(cfg: &ScenarioConfig) -> Result<Simulation> {
    let patch = build_patch(cfg)?;
    let rows = patch.num_rows();
    SimulationBuilder {
        patch,
        params: material(cfg)?,
        config: step_config(cfg),
        rho: vec![cfg.discretization.density_factor; rows],
        points_per_span: cfg.discretization.g(),
        with_pressure: true,
        contact: Some(contact_params(cfg)?),
        bc: Box::new(ExtrusionBoundary {
            v_in: cfg.extrusion.v_in,
        }),
    }
    .build()
}

pub fn restore_simulation(
    cfg: &ScenarioConfig,
    ck: fliga::solver::Checkpoint,
) -> Result<Simulation> {
    Simulation::restore(
        ck,
        material(cfg)?,
        Some(contact_params(cfg)?),
        Box::new(ExtrusionBoundary {
            v_in: cfg.extrusion.v_in,
        }),
        step_config(cfg),
        true,
    )
}

/// Extrudate half-width: the maximum boundary-curve height sampled over the
/// measurement window behind the exit.
pub fn extrudate_halfwidth(sim: &Simulation, cfg: &ScenarioConfig) -> Result<f64> {
    let e = &cfg.extrusion;
    let x_lo = exit_x(cfg) + e.swell_margin * e.exit_halfwidth;
    let j = sim.patch.num_rows() - 1;
    let basis = sim.patch.row_basis(j);
    let mut best: f64 = 0.0;
    let samples = 400;
    let mut tip: f64 = 0.0;
    for k in 0..=samples {
        let xt = k as f64 / samples as f64;
        let ev = basis.eval(xt, 0)?;
        let mut x = [0.0_f64; 2];
        for (o, a) in ev.indices().enumerate() {
            let c = sim.patch.control(j, basis.dof_of(a));
            x[0] += c[0] * ev.value[o];
            x[1] += c[1] * ev.value[o];
        }
        tip = tip.max(x[0]);
        if x[0] >= x_lo {
            best = best.max(x[1]);
        }
    }
    if best == 0.0 {
        return Err(FligaError::InvalidInput(format!(
            "no boundary samples beyond x = {x_lo}; strand too short (tip at {tip})"
        )));
    }
    Ok(best)
}

/// Material area beyond the exit plane, from the cached physical weights.
pub fn deposited_area(sim: &Simulation, cfg: &ScenarioConfig) -> f64 {
    let x_exit = exit_x(cfg);
    sim.point_set
        .rows()
        .iter()
        .flat_map(|r| r.points.iter())
        .filter(|p| p.phys[0] > x_exit)
        .map(|p| p.phys_weight)
        .sum()
}

pub struct SwellResult {
    pub swell_ratio: f64,
    pub mass_balance_error: f64,
    pub report: ErrorReport,
}

pub fn run(cfg: &ScenarioConfig) -> Result<(Simulation, SwellResult)> {
    let mut sim = build_simulation(cfg)?;
    let mut report = ErrorReport::default();
    let started = std::time::Instant::now();
    let n = cfg.stepping.n_steps;
    // Mass balance: deposited-area growth over the second half of the run
    // against the inflow flux.
    let half = n / 2;
    let mut area_half = 0.0;
    let mut time_half = 0.0;
    for k in 0..n {
        let step = sim.advance_step()?;
        report.refinement_events += step.refinement_events.len();
        if step.regulation_iterations.is_some() {
            report.regulation_solves += 1;
        }
        report.max_divergence_normalized = report
            .max_divergence_normalized
            .max(crate::metrics::normalized_divergence(&sim, &step));
        if k + 1 == half {
            sim.point_set.refresh_physical(&sim.patch)?;
            area_half = deposited_area(&sim, cfg);
            time_half = sim.time;
        }
    }
    sim.point_set.refresh_physical(&sim.patch)?;
    let area_end = deposited_area(&sim, cfg);
    let flux = cfg.extrusion.v_in * cfg.extrusion.contraction * cfg.extrusion.exit_halfwidth;
    let rate = (area_end - area_half) / (sim.time - time_half);
    let mass_balance_error = (rate - flux).abs() / flux;

    let swell_ratio = extrudate_halfwidth(&sim, cfg)? / cfg.extrusion.exit_halfwidth;
    report.rows.push(ReportRow {
        step: sim.step,
        time: sim.time,
        l2_vx: crate::metrics::L2_FLOOR,
        l2_vy: crate::metrics::L2_FLOOR,
        l2_p: crate::metrics::L2_FLOOR,
        dofs: sim.num_dofs(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    Ok((
        sim,
        SwellResult {
            swell_ratio,
            mass_balance_error,
            report,
        },
    ))
}

/// Coarse desk-scale configuration for a given Weissenberg number.
pub fn reference_config(weissenberg: f64, n_steps: usize) -> ScenarioConfig {
    let kappa_s = if weissenberg <= 0.0 { 250.0 } else { 1.0e3 };
    let text = format!(
        r#"
kind = "planar_extrusion"

[material]
model = "oldroyd_b"
solvent_viscosity = 1000.0
polymer_viscosity = 8000.0
relaxation_time = 1.0

[discretization]
degree = 2
elements = [32, 8]
density_factor = 2

[stepping]
dt = 2.5e-4
n_steps = {n_steps}
floating_interval = 10

[refinement]

[contact]
kappa_p = 7.5e5
kappa_r = 1.5e3
kappa_s = {kappa_s}

[extrusion]
weissenberg = {weissenberg}
"#
    );
    ScenarioConfig::parse(&text).expect("reference config parses")
}
