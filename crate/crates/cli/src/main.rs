//! Batch front end: configuration parsing, run orchestration and file
//! output for the density steering library.
//!
//! Every subcommand reads one TOML configuration (see
//! `densteer::config`), writes its artifacts into the output directory
//! and finishes with a `manifest.toml` echoing the exact configuration,
//! versions, timings and seeds needed to re-run it. Log level comes from
//! `RUST_LOG`.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;

use densteer::actuation::ControlTrajectory;
use densteer::assembly::{assemble_operators, OperatorSet};
use densteer::diagnostics::{
    check_energy, check_gradients, check_structure, check_velocity, DiagnosticsReport, SUP_SAMPLES,
};
use densteer::export;
use densteer::mesh::{Mesh, Side};
use densteer::ocp::{optimize, OptStatus, Problem};
use densteer::particles::{compare, empirical_density, simulate, ParticleEnsemble};
use densteer::solver::{solve_adjoint_discrete, solve_forward};
use densteer::{DensityField, DensitySpec, ProblemConfig};

#[derive(Parser)]
#[command(
    name = "densteer",
    version,
    about = "Density steering of passive particle swarms by boundary actuation"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides [output].dir; default "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Particle RNG seed (overrides [particles].seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for particle sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print mesh statistics and export the node/triangle tables.
    MeshInfo,
    /// Run the full diagnostics suite and write a pass/fail report.
    Verify {
        /// Randomized gradient probes (each costs two forward solves).
        #[arg(long, default_value_t = 5)]
        probes: usize,
        /// Also dump the mass and diffusion matrices in coordinate format.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Solve the state equation forward and export the snapshots.
    Forward {
        /// Control trajectory CSV (step,side,basis,value); zero if absent.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Additionally write each snapshot as a legacy-ASCII VTK file.
        #[arg(long)]
        vtk: bool,
    },
    /// Forward solve plus the discrete adjoint sweep.
    Adjoint {
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Finite-difference and duality cross-checks of the reduced gradient.
    GradCheck {
        #[arg(long, default_value_t = 5)]
        probes: usize,
    },
    /// Solve the box-constrained control problem from a zero initial
    /// guess.
    Optimize {
        /// Additionally write the final and target fields as VTK.
        #[arg(long)]
        vtk: bool,
    },
    /// Simulate the particle ensemble and compare it with the density
    /// solution.
    Particles {
        /// Control trajectory CSV; zero control if absent.
        #[arg(long)]
        control: Option<PathBuf>,
    },
}

struct Run {
    cfg: ProblemConfig,
    out_dir: PathBuf,
    seed: u64,
    started: Instant,
    notes: Vec<(String, String)>,
}

impl Run {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    fn ops(&self) -> Result<OperatorSet> {
        let p = &self.cfg.problem;
        let mesh = Mesh::structured(p.nx, p.ny)?;
        Ok(assemble_operators(
            &mesh,
            &self.cfg.basis(),
            &self.cfg.model(),
            p.mu,
            p.quad_order,
        )?)
    }

    fn load_control(&self, path: &Option<PathBuf>) -> Result<ControlTrajectory> {
        let n = self.cfg.n_steps()?;
        let nb = self.cfg.problem.n_basis;
        match path {
            None => Ok(ControlTrajectory::zeros(n, nb, self.cfg.problem.dt)),
            Some(p) => {
                let ctrl = export::read_control_csv(p, self.cfg.problem.dt)
                    .with_context(|| format!("reading control from {}", p.display()))?;
                if ctrl.n_steps() != n || ctrl.n_basis() != nb {
                    bail!(
                        "control shape ({} steps, {} basis) does not match the configuration ({n} steps, {nb} basis)",
                        ctrl.n_steps(),
                        ctrl.n_basis()
                    );
                }
                Ok(ctrl)
            }
        }
    }

    fn densities(&self, ops: &OperatorSet) -> Result<(DensityField, DensityField)> {
        let q0 = ops.project_density(|x| self.cfg.initial_density.eval(x))?;
        let qt = ops.project_density(|x| self.cfg.target_density.eval(x))?;
        Ok((q0, qt))
    }

    fn problem<'a>(&self, ops: &'a OperatorSet) -> Result<Problem<'a>> {
        let (initial, target) = self.densities(ops)?;
        Ok(Problem {
            ops,
            initial,
            target,
            alpha: self.cfg.problem.alpha,
            u_max: self.cfg.problem.u_max,
        })
    }

    fn finish(&self, command: &str) -> Result<()> {
        let mut text = String::new();
        text.push_str("[run]\n");
        text.push_str(&format!("command = {:?}\n", command));
        text.push_str(&format!("version = {:?}\n", env!("CARGO_PKG_VERSION")));
        text.push_str(&format!("seed = {}\n", self.seed));
        text.push_str(&format!(
            "elapsed_seconds = {:.3}\n",
            self.started.elapsed().as_secs_f64()
        ));
        for (k, v) in &self.notes {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text.push_str("\n# exact configuration of this run\n[config]\n");
        for line in self.cfg.to_toml_string().lines() {
            // nest the config tables under [config]
            if let Some(stripped) = line.strip_prefix('[') {
                text.push_str(&format!("[config.{stripped}\n"));
            } else {
                text.push_str(line);
                text.push('\n');
            }
        }
        std::fs::write(self.out_dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

fn random_samples(nb: usize, u_max: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..4 * nb).map(|_| rng.gen_range(0.0..=u_max)).collect())
        .collect()
}

fn cmd_mesh_info(run: &mut Run) -> Result<()> {
    let p = &run.cfg.problem;
    let mesh = Mesh::structured(p.nx, p.ny)?;
    export::write_mesh_csv(&mesh, &run.out_dir)?;
    println!("nodes: {}", mesh.n_nodes());
    println!("triangles: {}", mesh.triangles.len());
    println!("boundary_edges: {}", mesh.boundary_edges.len());
    println!("total_area: {}", mesh.total_area());
    println!("bandwidth: {}", mesh.bandwidth());
    run.note("nodes", mesh.n_nodes());
    run.note("triangles", mesh.triangles.len());
    Ok(())
}

fn cmd_verify(run: &mut Run, probes: usize, dump_matrices: bool) -> Result<()> {
    let ops = run.ops()?;
    let n = run.cfg.n_steps()?;
    let nb = ops.n_basis();
    let dt = run.cfg.problem.dt;

    // normalized sample controls: the commutation residual is linear in
    // u, and its pass bound is calibrated for the unit box
    let samples = random_samples(nb, 1.0, 20, run.seed);
    let structure = check_structure(&ops, &samples);

    // random feasible control for the trajectory-level monitors
    let ctrl = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.seed ^ 0xC0FF_EE00);
        ControlTrajectory::random_feasible(n, nb, dt, run.cfg.problem.u_max, &mut rng)
    };
    let velocity = check_velocity(&ctrl, &ops, SUP_SAMPLES);
    let problem = run.problem(&ops)?;
    let state = solve_forward(&ops, &ctrl, &problem.initial)?;
    let energy = check_energy(&ops, &ctrl, &state, SUP_SAMPLES);

    // mass conservation along the same run
    let mut mass_drift: f64 = 0.0;
    for i in 0..=n {
        mass_drift = mass_drift.max((ops.integral(state.at(i)) - 1.0).abs());
    }
    let gradients = check_gradients(&problem, &ctrl, probes, run.seed ^ 0xFD)?;

    let report = DiagnosticsReport {
        structure: Some(structure),
        velocity: Some(velocity.clone()),
        energy: Some(energy),
        gradients: Some(gradients),
    };
    let all_pass = report.all_pass() && mass_drift <= 1e-7;

    let mut text = report.to_string();
    text.push_str(&format!("mass_drift: {mass_drift:e}\n"));
    text.push_str(&format!("all_pass: {all_pass}\n"));
    std::fs::write(run.out_dir.join("report.txt"), &text)?;
    export::write_series_csv(
        &velocity.garding_lambda,
        dt,
        "garding_lambda",
        &run.out_dir.join("garding_lambda.csv"),
    )?;
    if dump_matrices {
        export::write_matrix_coo(&ops.mass, &run.out_dir.join("mass.coo.csv"))?;
        export::write_matrix_coo(&ops.diffusion, &run.out_dir.join("diffusion.coo.csv"))?;
    }
    print!("{text}");
    run.note("all_pass", all_pass);
    if !all_pass {
        bail!("diagnostics failed; see report.txt");
    }
    Ok(())
}

fn cmd_forward(run: &mut Run, control: &Option<PathBuf>, vtk: bool) -> Result<()> {
    let ops = run.ops()?;
    let ctrl = run.load_control(control)?;
    let (q0, _) = run.densities(&ops)?;
    let state = solve_forward(&ops, &ctrl, &q0)?;
    export::write_trajectory_csv(&ops.mesh, &state, &run.out_dir, "state")?;
    if vtk {
        for (i, snapshot) in state.steps.iter().enumerate() {
            export::write_field_vtk(
                &ops.mesh,
                snapshot,
                "density",
                &run.out_dir.join(format!("state_{i:04}.vtk")),
            )?;
        }
    }
    let masses: Vec<f64> = state.steps.iter().map(|q| ops.integral(q)).collect();
    export::write_series_csv(&masses, ctrl.dt(), "mass", &run.out_dir.join("mass.csv"))?;
    let drift = masses.iter().map(|m| (m - 1.0).abs()).fold(0.0f64, f64::max);
    println!("steps: {}", state.n_steps());
    println!("mass_drift: {drift:e}");
    run.note("mass_drift", format!("{drift:e}"));
    Ok(())
}

fn cmd_adjoint(run: &mut Run, control: &Option<PathBuf>) -> Result<()> {
    let ops = run.ops()?;
    let ctrl = run.load_control(control)?;
    let (q0, qt) = run.densities(&ops)?;
    let state = solve_forward(&ops, &ctrl, &q0)?;
    let adjoint = solve_adjoint_discrete(&ops, &ctrl, &state, &qt)?;
    export::write_trajectory_csv(&ops.mesh, &state, &run.out_dir, "state")?;
    export::write_adjoint_csv(&ops.mesh, &adjoint, &run.out_dir, "adjoint")?;
    println!("adjoint_instants: {}", adjoint.n_steps());
    run.note("adjoint_instants", adjoint.n_steps());
    Ok(())
}

fn cmd_grad_check(run: &mut Run, probes: usize) -> Result<()> {
    let ops = run.ops()?;
    let n = run.cfg.n_steps()?;
    let problem = run.problem(&ops)?;
    let ctrl = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.seed ^ 0xBEEF);
        ControlTrajectory::random_feasible(
            n,
            ops.n_basis(),
            run.cfg.problem.dt,
            run.cfg.problem.u_max,
            &mut rng,
        )
    };
    let g = check_gradients(&problem, &ctrl, probes, run.seed)?;
    let text = format!(
        "gradient_fd_error: {:e}\ntangent_adjoint_error: {:e}\nprobes: {}\npass: {}\n",
        g.fd_error, g.duality_error, g.probes, g.pass
    );
    std::fs::write(run.out_dir.join("gradcheck.txt"), &text)?;
    print!("{text}");
    run.note("gradient_pass", g.pass);
    if !g.pass {
        bail!("gradient check failed");
    }
    Ok(())
}

fn cmd_optimize(run: &mut Run, vtk: bool) -> Result<()> {
    let ops = run.ops()?;
    let n = run.cfg.n_steps()?;
    let problem = run.problem(&ops)?;
    let guess = ControlTrajectory::zeros(n, ops.n_basis(), run.cfg.problem.dt);
    let result = optimize(&problem, guess, &run.cfg.optimizer_options())?;

    export::write_history_csv(&result.history, &run.out_dir.join("history.csv"))?;
    export::write_control_csv(&result.control, &run.out_dir.join("control.csv"))?;
    for side in Side::ALL {
        export::write_control_intensity_csv(
            &result.control,
            &ops.basis,
            side,
            65,
            &run.out_dir.join(format!("intensity_side{}.csv", side.id())),
        )?;
    }
    let state = solve_forward(&ops, &result.control, &problem.initial)?;
    export::write_field_csv(
        &ops.mesh,
        state.terminal(),
        &run.out_dir.join("final_state.csv"),
    )?;
    export::write_field_csv(
        &ops.mesh,
        &problem.target.nodal,
        &run.out_dir.join("target.csv"),
    )?;
    if vtk {
        export::write_field_vtk(
            &ops.mesh,
            state.terminal(),
            "density",
            &run.out_dir.join("final_state.vtk"),
        )?;
        export::write_field_vtk(
            &ops.mesh,
            &problem.target.nodal,
            "density",
            &run.out_dir.join("target.vtk"),
        )?;
    }

    // well-posedness monitors along the optimized trajectory
    let energy = check_energy(&ops, &result.control, &state, SUP_SAMPLES);

    let first = result.history.first().map(|r| r.total).unwrap_or(0.0);
    let last = result.history.last().map(|r| r.total).unwrap_or(0.0);
    let reduction = if first > 0.0 { 1.0 - last / first } else { 0.0 };
    println!("status: {:?}", result.status);
    println!("iterations: {}", result.iterations);
    println!("initial_cost: {first}");
    println!("final_cost: {last}");
    println!("relative_reduction: {reduction:.4}");
    println!("energy_monitors_pass: {}", energy.all_pass());
    run.note("status", format!("{:?}", result.status));
    run.note("iterations", result.iterations);
    run.note("initial_cost", first);
    run.note("final_cost", last);
    run.note("relative_reduction", reduction);
    run.note("energy_monitors_pass", energy.all_pass());
    if !energy.all_pass() {
        bail!("energy monitors flagged the optimized trajectory");
    }
    if matches!(result.status, OptStatus::MaxIters) {
        log::warn!("optimizer hit the iteration limit");
    }
    Ok(())
}

fn cmd_particles(run: &mut Run, control: &Option<PathBuf>) -> Result<()> {
    let ops = run.ops()?;
    let ctrl = run.load_control(control)?;
    let (q0, _) = run.densities(&ops)?;
    let pc = run.cfg.particles.clone();

    let ensemble = match &run.cfg.initial_density {
        DensitySpec::Uniform => ParticleEnsemble::uniform(pc.count, run.seed),
        spec => {
            let envelope = 1.2 * spec.grid_max(256);
            let spec = spec.clone();
            ParticleEnsemble::from_density(move |x| spec.eval(x), envelope, pc.count, run.seed)
        }
    };
    let finished = simulate(
        &ensemble,
        &ctrl,
        &ops.basis,
        &ops.model,
        run.cfg.problem.mu,
        pc.substeps,
    )?;
    let binned = empirical_density(&finished, pc.bins);
    let state = solve_forward(&ops, &ctrl, &q0)?;
    let field = DensityField {
        nodal: state.terminal().to_vec(),
    };
    let (l1, l2) = compare(&binned, &field, &ops.mesh)?;

    export::write_particles_csv(&finished, &run.out_dir.join("particles.csv"))?;
    export::write_binned_csv(&binned, &run.out_dir.join("binned.csv"))?;
    export::write_field_csv(&ops.mesh, &field.nodal, &run.out_dir.join("pde_final.csv"))?;
    println!("particles: {}", finished.len());
    println!("l1_distance: {l1}");
    println!("l2_distance: {l2}");
    run.note("l1_distance", l1);
    run.note("l2_distance", l2);
    Ok(())
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let config_path = cli
        .config
        .as_ref()
        .context("--config <path> is required")?;
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = ProblemConfig::from_toml_str(&text)?;

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let seed = cli.seed.unwrap_or(cfg.particles.seed);
    let mut run = Run {
        cfg,
        out_dir,
        seed,
        started: Instant::now(),
        notes: Vec::new(),
    };

    let name = match &cli.command {
        Command::MeshInfo => {
            cmd_mesh_info(&mut run)?;
            "mesh-info"
        }
        Command::Verify {
            probes,
            dump_matrices,
        } => {
            cmd_verify(&mut run, *probes, *dump_matrices)?;
            "verify"
        }
        Command::Forward { control } => {
            cmd_forward(&mut run, control)?;
            "forward"
        }
        Command::Adjoint { control } => {
            cmd_adjoint(&mut run, control)?;
            "adjoint"
        }
        Command::GradCheck { probes } => {
            cmd_grad_check(&mut run, *probes)?;
            "grad-check"
        }
        Command::Optimize => {
            cmd_optimize(&mut run)?;
            "optimize"
        }
        Command::Particles { control } => {
            cmd_particles(&mut run, control)?;
            "particles"
        }
    };
    run.finish(name)?;
    Ok(())
}
