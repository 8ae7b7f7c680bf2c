//! Run artifacts: error-report CSV, legacy ASCII point-cloud dumps, the run
//! manifest, and checkpoints.

use crate::config::ScenarioConfig;
use crate::metrics::ErrorReport;
use fliga::patch::FloatingPatch;
use fliga::quadrature::QuadraturePointSet;
use fliga::solver::{MaterialState, Simulation};
use fliga::{FligaError, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Point-cloud dump: position, velocity, pressure and stress components per
/// quadrature point, one ASCII row each.
pub fn point_cloud(
    patch: &FloatingPatch,
    point_set: &QuadraturePointSet,
    state: &MaterialState,
    pressure_at_points: Option<&[Vec<f64>]>,
) -> Result<String> {
    let velocity = crate::metrics::velocity_at_points(patch, point_set)?;
    let mut out = String::from("x,y,vx,vy,p,tau_xx,tau_yy,tau_xy,weight,s,n,l\n");
    for (l0, row) in point_set.rows().iter().enumerate() {
        for (g, pt) in row.points.iter().enumerate() {
            let v = velocity[l0][g];
            let tau = state.rows[l0][g].tau;
            let p = pressure_at_points.map_or(0.0, |ps| ps[l0][g]);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                pt.phys[0],
                pt.phys[1],
                v[0],
                v[1],
                p,
                tau[0],
                tau[1],
                tau[2],
                pt.phys_weight,
                row.s + 1,
                row.n + 1,
                l0 + 1
            ));
        }
    }
    Ok(out)
}

/// Pressure sampled at every quadrature point from the last solve.
pub fn pressure_at_points(sim: &Simulation) -> Result<Vec<Vec<f64>>> {
    let Some(ps) = sim.pressure.as_ref() else {
        return Ok(sim
            .point_set
            .rows()
            .iter()
            .map(|r| vec![0.0; r.points.len()])
            .collect());
    };
    let q = sim.pressure_coeffs();
    let mut out = Vec::with_capacity(sim.point_set.rows().len());
    for qrow in sim.point_set.rows() {
        let mut vals = Vec::with_capacity(qrow.points.len());
        for pt in &qrow.points {
            let mut p = 0.0;
            if !q.is_empty() {
                for (z, az) in ps.eval_at_point(qrow, pt)? {
                    p += q[z] * az;
                }
            }
            vals.push(p);
        }
        out.push(vals);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a str,
    config_fingerprint: String,
    crate_version: &'a str,
    steps_completed: usize,
    refinement_events: usize,
    regulation_solves: usize,
    notes: &'a [String],
}

pub struct RunWriter {
    dir: PathBuf,
}

impl RunWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| FligaError::InvalidInput(format!("cannot create {dir:?}: {e}")))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text)
            .map_err(|e| FligaError::InvalidInput(format!("cannot write {name}: {e}")))
    }

    pub fn write_report(&self, report: &ErrorReport) -> Result<()> {
        self.write("report.csv", &report.csv())
    }

    pub fn write_manifest(
        &self,
        cfg: &ScenarioConfig,
        report: &ErrorReport,
        steps: usize,
        notes: &[String],
    ) -> Result<()> {
        let manifest = Manifest {
            scenario: match cfg.kind {
                crate::config::ScenarioKind::PatchTest => "patch_test",
                crate::config::ScenarioKind::TaylorCouette => "taylor_couette",
                crate::config::ScenarioKind::PlanarExtrusion => "planar_extrusion",
                crate::config::ScenarioKind::AmDeposition => "am_deposition",
            },
            config_fingerprint: format!("{:016x}", cfg.fingerprint()),
            crate_version: env!("CARGO_PKG_VERSION"),
            steps_completed: steps,
            refinement_events: report.refinement_events,
            regulation_solves: report.regulation_solves,
            notes,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", &text)
    }
}
