use clap::{Parser, Subcommand};
use fliga::solver::{Checkpoint, Simulation};
use fliga::FligaError;
use fliga_bench::config::{ScenarioConfig, ScenarioKind};
use fliga_bench::metrics::ErrorReport;
use fliga_bench::output::{point_cloud, pressure_at_points, RunWriter};
use fliga_bench::scenarios::{am, extrusion, patch_test, taylor_couette};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fliga-bench", about = "Floating-IGA benchmark driver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario from a TOML run definition.
    Run {
        config: PathBuf,
        /// Directory for reports, dumps, manifest and checkpoints.
        #[arg(long, default_value = "fliga-out")]
        output_dir: PathBuf,
        /// Override the configured step count (0 writes the initial state
        /// dump only).
        #[arg(long)]
        steps: Option<usize>,
        /// Verify assembled tangents against finite differences first.
        #[arg(long)]
        fd_check: bool,
        /// Assembly worker threads (1 = fully serial).
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Resume from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Parse a run definition and check its invariants.
    Validate { config: PathBuf },
    /// Dump the patch and point cloud of a checkpoint.
    Inspect {
        checkpoint: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

/// Machine-readable failure categories and their exit codes.
fn exit_code_for(err: &FligaError) -> (u8, &'static str) {
    match err {
        FligaError::AtStep { source, .. } => exit_code_for(source),
        FligaError::InvalidInput(_) => (2, "config"),
        FligaError::RegulationFailure(_) => (4, "regulation"),
        FligaError::DensityExceeded(_) => (5, "density"),
        _ => (3, "solver"),
    }
}

fn fail(err: FligaError) -> ExitCode {
    let (code, category) = exit_code_for(&err);
    eprintln!("error ({category}): {err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load_config(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Inspect {
            checkpoint,
            output_dir,
        } => match inspect(&checkpoint, &output_dir) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        Command::Run {
            config,
            output_dir,
            steps,
            fd_check,
            threads,
            resume,
        } => {
            // Only affects assembly-level parallelism; results are
            // deterministic for any thread count.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
            match run(&config, &output_dir, steps, fd_check, resume) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, FligaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FligaError::InvalidInput(format!("cannot read {path:?}: {e}")))?;
    ScenarioConfig::parse(&text)
}

fn inspect(path: &PathBuf, output_dir: &PathBuf) -> Result<(), FligaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FligaError::InvalidInput(format!("cannot read {path:?}: {e}")))?;
    let ck: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| FligaError::InvalidInput(format!("checkpoint parse error: {e}")))?;
    let writer = RunWriter::new(output_dir)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "checkpoint".into());
    writer.write(&format!("{stem}.patch.json"), &ck.patch.to_json())?;
    let mut set = fliga::quadrature::QuadraturePointSet::build_from_spans(
        &ck.patch,
        ck.points_per_span,
        &ck.rho,
        &ck.initial_spans,
    )?;
    set.refresh_neighbor_pullbacks(&ck.patch)?;
    set.refresh_physical(&ck.patch)?;
    let mut buf = Vec::new();
    set.dump_csv(&mut buf)
        .map_err(|e| FligaError::InvalidInput(format!("dump failed: {e}")))?;
    writer.write(
        &format!("{stem}.points.csv"),
        &String::from_utf8(buf).expect("csv is utf8"),
    )?;
    println!(
        "step {} at t = {:.6}: {} rows, {} dofs, {} quadrature points",
        ck.step,
        ck.time,
        ck.patch.num_rows(),
        ck.patch.total_dofs(),
        set.num_points()
    );
    Ok(())
}

fn build_or_resume(
    cfg: &ScenarioConfig,
    resume: Option<&PathBuf>,
) -> Result<Simulation, FligaError> {
    if let Some(path) = resume {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FligaError::InvalidInput(format!("cannot read {path:?}: {e}")))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| FligaError::InvalidInput(format!("checkpoint parse error: {e}")))?;
        match cfg.kind {
            ScenarioKind::PatchTest => patch_test::restore_simulation(cfg, ck),
            ScenarioKind::TaylorCouette => taylor_couette::restore_simulation(cfg, ck),
            ScenarioKind::PlanarExtrusion => extrusion::restore_simulation(cfg, ck),
            ScenarioKind::AmDeposition => am::restore_simulation(cfg, ck),
        }
    } else {
        match cfg.kind {
            ScenarioKind::PatchTest => patch_test::build_simulation(cfg),
            ScenarioKind::TaylorCouette => taylor_couette::build_simulation(cfg),
            ScenarioKind::PlanarExtrusion => extrusion::build_simulation(cfg),
            ScenarioKind::AmDeposition => am::build_simulation(cfg),
        }
    }
}

fn fd_check_tangents(sim: &mut Simulation) -> Result<(), FligaError> {
    use fliga::solver::{assemble_system, physics_residual};

    let evals = sim.point_set.evaluate(&sim.patch)?;
    let sys = assemble_system(
        &sim.patch,
        sim.pressure.as_ref(),
        &sim.point_set,
        &evals,
        &sim.state,
        &sim.params,
    )?;
    let mut dense = std::collections::HashMap::new();
    for &(r, c, v) in &sys.k.entries {
        *dense.entry((r, c)).or_insert(0.0) += v;
    }
    let ntot = sys.k.n;
    let mut rng = 123456789u64;
    let mut next = move || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64
    };
    let u0: Vec<f64> = (0..ntot).map(|_| next() - 0.5).collect();
    let eps = 1e-6;
    let mut max_err = 0.0_f64;
    let mut scale = 0.0_f64;
    for col in (0..ntot).step_by((ntot / 24).max(1)) {
        let mut up = u0.clone();
        up[col] += eps;
        let mut um = u0.clone();
        um[col] -= eps;
        let rp = physics_residual(
            &sim.patch,
            sim.pressure.as_ref(),
            &sim.point_set,
            &evals,
            &sim.state,
            &sim.params,
            &up,
        )?;
        let rm = physics_residual(
            &sim.patch,
            sim.pressure.as_ref(),
            &sim.point_set,
            &evals,
            &sim.state,
            &sim.params,
            &um,
        )?;
        for i in 0..ntot {
            let fd = (rp[i] - rm[i]) / (2.0 * eps);
            let an = dense.get(&(i, col)).copied().unwrap_or(0.0);
            max_err = max_err.max((fd - an).abs());
            scale = scale.max(fd.abs());
        }
    }
    if max_err > 1e-6 * scale.max(1.0) {
        return Err(FligaError::LinearSolveFailure(format!(
            "assembly mismatch: tangent vs finite differences {max_err:e} (scale {scale:e})"
        )));
    }
    println!("fd-check: tangent matches finite differences ({max_err:.2e} on scale {scale:.2e})");
    Ok(())
}

fn run(
    config_path: &PathBuf,
    output_dir: &PathBuf,
    steps: Option<usize>,
    fd_check: bool,
    resume: Option<PathBuf>,
) -> Result<(), FligaError> {
    let mut cfg = load_config(config_path)?;
    if let Some(n) = steps {
        cfg.stepping.n_steps = n;
    }
    let writer = RunWriter::new(output_dir)?;
    let mut notes: Vec<String> = Vec::new();

    if cfg.stepping.n_steps == 0 {
        let sim = build_or_resume(&cfg, resume.as_ref())?;
        dump_state(&writer, &sim, "initial")?;
        writer.write_manifest(&cfg, &ErrorReport::default(), 0, &notes)?;
        println!("initial state written to {output_dir:?}");
        return Ok(());
    }

    if fd_check {
        let mut sim = build_or_resume(&cfg, None)?;
        fd_check_tangents(&mut sim)?;
    }

    let (sim, report) = match cfg.kind {
        ScenarioKind::PatchTest => {
            let (s, result) = patch_test::run(&cfg)?;
            notes.push(format!(
                "patch test: L2_vx {:.3}, L2_vy {:.3}",
                result.l2_vx, result.l2_vy
            ));
            (s, result.report)
        }
        ScenarioKind::TaylorCouette => {
            let mut sim = build_or_resume(&cfg, resume.as_ref())?;
            let reference = taylor_couette::CouetteReference::from_config(&cfg);
            let mut report = ErrorReport::default();
            let interval = cfg.taylor_couette.report_interval.max(1);
            let started = std::time::Instant::now();
            for k in 0..cfg.stepping.n_steps {
                let step = sim.advance_step()?;
                if step.regulation_iterations.is_some() {
                    report.regulation_solves += 1;
                }
                if (k + 1) % interval == 0 || k + 1 == cfg.stepping.n_steps {
                    let (vx, vy, p) = taylor_couette::measure(&mut sim, &reference)?;
                    report.rows.push(fliga_bench::metrics::ReportRow {
                        step: sim.step,
                        time: sim.time,
                        l2_vx: vx,
                        l2_vy: vy,
                        l2_p: p,
                        dofs: sim.num_dofs(),
                        wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    });
                }
            }
            (sim, report)
        }
        ScenarioKind::PlanarExtrusion => {
            let (sim, result) = extrusion::run(&cfg)?;
            notes.push(format!(
                "swell ratio {:.4}, mass balance error {:.2}%",
                result.swell_ratio,
                100.0 * result.mass_balance_error
            ));
            (sim, result.report)
        }
        ScenarioKind::AmDeposition => {
            let (sim, result) = am::run(&cfg)?;
            notes.push(format!(
                "interface alignment {:.1} deg, mass balance error {:.2}%",
                result.alignment_deg,
                100.0 * result.mass_balance_error
            ));
            (sim, result.report)
        }
    };

    writer.write_report(&report)?;
    dump_state(&writer, &sim, "final")?;
    if cfg.output.checkpoint {
        let ck = sim.checkpoint();
        let text = serde_json::to_string(&ck).expect("checkpoint serializes");
        writer.write("checkpoint.json", &text)?;
    }
    writer.write_manifest(&cfg, &report, sim.step, &notes)?;
    for n in &notes {
        println!("{n}");
    }
    if let Some(last) = report.last() {
        println!(
            "final: step {} t {:.4} L2_vx {:.3} L2_vy {:.3} L2_p {:.3} dofs {}",
            last.step, last.time, last.l2_vx, last.l2_vy, last.l2_p, last.dofs
        );
    }
    println!("artifacts in {output_dir:?}");
    Ok(())
}

fn dump_state(writer: &RunWriter, sim: &Simulation, tag: &str) -> Result<(), FligaError> {
    let pressures = pressure_at_points(sim)?;
    let cloud = point_cloud(&sim.patch, &sim.point_set, &sim.state, Some(&pressures))?;
    writer.write(&format!("{tag}_points.csv"), &cloud)?;
    writer.write(&format!("{tag}_patch.json"), &sim.patch.to_json())?;
    Ok(())
}
