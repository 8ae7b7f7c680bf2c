//! Extrusion-based deposition: a downward nozzle feeds a strand that bends
//! onto a substrate and is dragged along it. The frame moves with the
//! nozzle: control points touching the substrate get the traverse speed as
//! a horizontal Dirichlet value and a vertical value of zero (or the
//! vibration profile). Four variants differ in substrate shape and nozzle
//! motion: straight, vibrating nozzle, uneven substrate, obstacle.

use crate::config::{AmVariant, ContactConfig, ScenarioConfig};
use crate::metrics::ErrorReport;
use fliga::patch::FloatingPatch;
use fliga::refinement::RefinementPolicy;
use fliga::solver::{
    BoundaryModel, ContactParams, MaterialParams, PatchBoundary, PressureSpace, Simulation,
    SimulationBuilder, StepConfig, WallChain,
};
use fliga::spline::{KnotVector, RowBasis};
use fliga::{FligaError, Result};

struct Centerline {
    /// Nozzle half-width at the inlet down to the exit.
    r: f64,
    bend_radius: f64,
    vertical_len: f64,
    foot_len: f64,
}

impl Centerline {
    fn from_config(cfg: &ScenarioConfig) -> Self {
        let a = &cfg.am;
        Self {
            r: a.exit_halfwidth,
            bend_radius: 2.0 * a.exit_halfwidth,
            vertical_len: a.contraction_length + a.straight_length,
            foot_len: a.foot_length,
        }
    }

    fn arc_len(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 * self.bend_radius
    }

    fn total_len(&self) -> f64 {
        self.vertical_len + self.arc_len() + self.foot_len
    }

    /// Position and unit tangent at arclength `s` from the inlet.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let y_bend = self.r + self.bend_radius; // centerline height where the arc starts
        let y_in = y_bend + self.vertical_len;
        if s <= self.vertical_len {
            ([0.0, y_in - s], [0.0, -1.0])
        } else if s <= self.vertical_len + self.arc_len() {
            let phi = (s - self.vertical_len) / self.bend_radius; // 0..pi/2
            let center = [self.bend_radius, y_bend];
            (
                [
                    center[0] - self.bend_radius * phi.cos(),
                    center[1] - self.bend_radius * phi.sin(),
                ],
                [phi.sin(), -phi.cos()],
            )
        } else {
            let t = s - self.vertical_len - self.arc_len();
            ([self.bend_radius + t, self.r], [1.0, 0.0])
        }
    }
}

/// Full strand width at arclength `s` (tapering in the upper nozzle).
fn width_at(cfg: &ScenarioConfig, s: f64) -> f64 {
    let a = &cfg.am;
    let w_exit = 2.0 * a.exit_halfwidth;
    let w_in = a.contraction * w_exit;
    if s < a.contraction_length {
        w_in + (w_exit - w_in) * s / a.contraction_length
    } else {
        w_exit
    }
}

pub fn build_patch(cfg: &ScenarioConfig) -> Result<FloatingPatch> {
    let d = &cfg.discretization;
    let line = Centerline::from_config(cfg);
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
                let s = g * line.total_len();
                let (c, tangent) = line.at(s);
                // Left normal of the path keeps the Jacobian positive.
                let n = [-tangent[1], tangent[0]];
                let off = (gy[j] - 0.5) * width_at(cfg, s);
                [c[0] + off * n[0], c[1] + off * n[1]]
            })
            .collect();
        h.push(gx);
        controls.push(row);
        rows.push(basis);
    }
    FloatingPatch::new(rows, normal_kv, h, controls)
}

/// Nozzle side walls as two chains covering the vertical channel, oriented
/// so the fluid side does not penetrate.
///
/// The chains are sampled from the initial discrete boundary curves (not
/// the continuous template): the spline boundary cuts template corners by
/// O(span^2 * curvature), and walls hugging the template would start the
/// run penetrated. A small outward clearance keeps the rest state
/// force-free.
pub fn wall_chains(cfg: &ScenarioConfig, patch: &FloatingPatch) -> Result<Vec<WallChain>> {
    let line = Centerline::from_config(cfg);
    let clearance = 0.02 * cfg.am.exit_halfwidth;
    let samples = 48;
    // Nozzle extent as a parent-coordinate fraction of the strand.
    let s_cut = line.vertical_len / line.total_len();
    let curve = |j: usize, xt: f64| -> Result<[f64; 2]> {
        let basis = patch.row_basis(j);
        let ev = basis.eval(xt, 0)?;
        let mut x = [0.0_f64; 2];
        for (o, a) in ev.indices().enumerate() {
            let c = patch.control(j, basis.dof_of(a));
            x[0] += c[0] * ev.value[o];
            x[1] += c[1] * ev.value[o];
        }
        Ok(x)
    };
    let mut left = Vec::with_capacity(samples + 1);
    let mut right = Vec::with_capacity(samples + 1);
    let j_top = patch.num_rows() - 1;
    for k in 0..=samples {
        let xt = s_cut * k as f64 / samples as f64;
        let l = curve(0, xt)?;
        let r = curve(j_top, xt)?;
        left.push([l[0] - clearance, l[1]]);
        right.push([r[0] + clearance, r[1]]);
    }
    // Left wall guards the EtaZero boundary: fluid on the +x side, so the
    // chain runs bottom-to-top (perp points -x, into the wall).
    left.reverse();
    Ok(vec![WallChain::new(left)?, WallChain::new(right)?])
}

pub fn contact_params(cfg: &ScenarioConfig, patch: &FloatingPatch) -> Result<ContactParams> {
    let cc: &ContactConfig = cfg
        .contact
        .as_ref()
        .ok_or_else(|| FligaError::InvalidInput("deposition requires [contact]".into()))?;
    let params = ContactParams {
        kappa_p: cc.kappa_p,
        kappa_r: cc.kappa_r,
        kappa_s: cc.kappa_s,
        walls: wall_chains(cfg, patch)?,
        slip_ramp: None,
        boundaries: vec![PatchBoundary::EtaZero, PatchBoundary::EtaOne],
        search_band: Some(0.5 * cfg.am.exit_halfwidth),
    };
    params.validate()?;
    Ok(params)
}

/// Substrate height at `x`: piecewise-linear samples from the config over a
/// flat base, plus the front step beyond the initial foot.
pub fn substrate_height(cfg: &ScenarioConfig, x: f64) -> f64 {
    let a = &cfg.am;
    let mut base = 0.0;
    if a.substrate.len() >= 2 {
        let pts = &a.substrate;
        if x <= pts[0][0] {
            base = pts[0][1];
        } else if x >= pts[pts.len() - 1][0] {
            base = pts[pts.len() - 1][1];
        } else {
            for w in pts.windows(2) {
                if x >= w[0][0] && x <= w[1][0] {
                    let t = (x - w[0][0]) / (w[1][0] - w[0][0]);
                    base = w[0][1] + t * (w[1][1] - w[0][1]);
                    break;
                }
            }
        }
    }
    let line = Centerline::from_config(cfg);
    let front = line.bend_radius + a.foot_length;
    if x > front {
        base + a.front_step
    } else {
        base
    }
}

struct DepositionBoundary {
    cfg: ScenarioConfig,
    inflow: f64,
}

impl BoundaryModel for DepositionBoundary {
    fn dirichlet(&self, patch: &FloatingPatch, time: f64) -> Vec<(usize, f64)> {
        let a = &self.cfg.am;
        let mut bc = Vec::new();
        // Plug inflow at the top edge, pointing down.
        for j in 0..patch.num_rows() {
            let m = patch.running_index(0, j).unwrap();
            bc.push((2 * m, 0.0));
            bc.push((2 * m + 1, -self.inflow));
        }
        // Substrate constraints: vertical velocity fixed (zero or the
        // vibration profile), horizontal velocity = nozzle traverse speed.
        let (amp, freq) = (a.vibration[0], a.vibration[1]);
        let vy = if amp > 0.0 && freq > 0.0 {
            amp * 2.0 * std::f64::consts::PI * freq * (2.0 * std::f64::consts::PI * freq * time).cos()
        } else {
            0.0
        };
        let tol = 0.25 * a.exit_halfwidth;
        for j in 0..patch.num_rows() {
            for i in 1..patch.row_len(j) {
                let c = patch.control(j, i);
                if c[1] <= substrate_height(&self.cfg, c[0]) + tol {
                    let m = patch.running_index(i, j).unwrap();
                    bc.push((2 * m, a.nozzle_speed));
                    bc.push((2 * m + 1, vy));
                }
            }
        }
        bc
    }

    fn pressure_pin(&self, _pressure: &PressureSpace) -> Option<usize> {
        None
    }
}

pub fn material(cfg: &ScenarioConfig) -> Result<MaterialParams> {
    let a = &cfg.am;
    let base = cfg.material.to_params()?;
    if a.weissenberg <= 0.0 {
        Ok(MaterialParams::newtonian(
            base.solvent_viscosity + base.polymer_viscosity,
        ))
    } else {
        let lambda = a.weissenberg * a.exit_halfwidth / (12.0 * a.v_in);
        Ok(MaterialParams::oldroyd_b(
            base.solvent_viscosity,
            base.polymer_viscosity,
            lambda,
        ))
    }
}

fn step_config(cfg: &ScenarioConfig) -> StepConfig {
    let line = Centerline::from_config(cfg);
    let refinement = cfg.refinement.as_ref().map(|r| {
        let mean = line.total_len() / cfg.discretization.elements[0] as f64;
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
    let contact = contact_params(cfg, &patch)?;
    let rows = patch.num_rows();
    SimulationBuilder {
        patch,
        params: material(cfg)?,
        config: step_config(cfg),
        rho: vec![cfg.discretization.density_factor; rows],
        points_per_span: cfg.discretization.g(),
        with_pressure: true,
        contact: Some(contact),
        bc: Box::new(DepositionBoundary {
            cfg: cfg.clone(),
            inflow: cfg.am.v_in,
        }),
    }
    .build()
}

pub fn restore_simulation(
    cfg: &ScenarioConfig,
    ck: fliga::solver::Checkpoint,
) -> Result<Simulation> {
    // Wall chains are tied to the nozzle frame: rebuild them from a fresh
    // initial patch, not from the deformed checkpointed state.
    let initial = build_patch(cfg)?;
    Simulation::restore(
        ck,
        material(cfg)?,
        Some(contact_params(cfg, &initial)?),
        Box::new(DepositionBoundary {
            cfg: cfg.clone(),
            inflow: cfg.am.v_in,
        }),
        step_config(cfg),
        true,
    )
}

/// Mean angle (degrees) between the characteristic row tangents and the
/// substrate direction, over the deposited region.
pub fn interface_alignment_deg(sim: &Simulation, cfg: &ScenarioConfig) -> Result<f64> {
    let line = Centerline::from_config(cfg);
    let evals = sim.point_set.evaluate(&sim.patch)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (l0, qrow) in sim.point_set.rows().iter().enumerate() {
        for (g, pt) in qrow.points.iter().enumerate() {
            let deposited = pt.phys[0] > line.bend_radius && pt.phys[1] < 3.0 * cfg.am.exit_halfwidth;
            if !deposited {
                continue;
            }
            let ev = &evals[l0][g];
            let t = [ev.jac[0][0], ev.jac[1][0]];
            let norm = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let angle = (t[1].abs() / norm).asin().to_degrees();
            acc += angle;
            count += 1;
        }
    }
    if count == 0 {
        return Err(FligaError::InvalidInput("no deposited region sampled".into()));
    }
    Ok(acc / count as f64)
}

/// Material area past the bend (the deposited strand).
pub fn deposited_area(sim: &Simulation, cfg: &ScenarioConfig) -> f64 {
    let line = Centerline::from_config(cfg);
    sim.point_set
        .rows()
        .iter()
        .flat_map(|r| r.points.iter())
        .filter(|p| p.phys[0] > line.bend_radius)
        .map(|p| p.phys_weight)
        .sum()
}

pub struct DepositionResult {
    pub alignment_deg: f64,
    pub mass_balance_error: f64,
    pub report: ErrorReport,
}

pub fn run(cfg: &ScenarioConfig) -> Result<(Simulation, DepositionResult)> {
    let mut sim = build_simulation(cfg)?;
    let mut report = ErrorReport::default();
    let n = cfg.stepping.n_steps;
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
    let mass_balance_error = if n >= 2 && cfg.am.nozzle_speed > 0.0 {
        let flux = cfg.am.v_in * cfg.am.contraction * 2.0 * cfg.am.exit_halfwidth;
        let rate = (deposited_area(&sim, cfg) - area_half) / (sim.time - time_half);
        (rate - flux).abs() / flux
    } else {
        0.0
    };
    let alignment_deg = interface_alignment_deg(&sim, cfg)?;
    Ok((
        sim,
        DepositionResult {
            alignment_deg,
            mass_balance_error,
            report,
        },
    ))
}

pub fn reference_config(variant: AmVariant, n_steps: usize) -> ScenarioConfig {
    let variant_str = match variant {
        AmVariant::Straight => "straight",
        AmVariant::VibratingNozzle => "vibrating_nozzle",
        AmVariant::UnevenSubstrate => "uneven_substrate",
        AmVariant::Obstacle => "obstacle",
    };
    let extra = match variant {
        AmVariant::VibratingNozzle => "vibration = [0.02, 20.0]\n",
        AmVariant::UnevenSubstrate => {
            "substrate = [[0.0, 0.0], [1.0, 0.0], [1.2, 0.05], [1.4, 0.0], [1.7, 0.06], [2.0, 0.0]]\n"
        }
        AmVariant::Obstacle => {
            "substrate = [[0.0, 0.0], [1.3, 0.0], [1.5, 0.16], [1.7, 0.0], [3.0, 0.0]]\n"
        }
        AmVariant::Straight => "",
    };
    let text = format!(
        r#"
kind = "am_deposition"

[material]
model = "oldroyd_b"
solvent_viscosity = 1000.0
polymer_viscosity = 8000.0
relaxation_time = 1.0

[discretization]
degree = 2
elements = [32, 8]
density_factor = 4

[stepping]
dt = 4e-4
n_steps = {n_steps}
floating_interval = 5

[refinement]

[contact]
kappa_p = 1.0e4
kappa_r = 1.0e3
kappa_s = 100.0

[am]
variant = "{variant_str}"
weissenberg = 1.5
{extra}
"#
    );
    ScenarioConfig::parse(&text).expect("reference config parses")
}
