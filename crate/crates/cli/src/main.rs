use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lkstopo_core::cases::CaseConfig;
use lkstopo_core::design::DesignField;
use lkstopo_core::manifest::{Mode, RunManifest};
use lkstopo_core::memory::{memory_report, reduction, MemoryModel, ProblemKind, Scheme};
use lkstopo_core::optimizer::{optimize, Observer, TraceRow};
use lkstopo_core::output::{write_snapshot, SnapshotFields};
use lkstopo_core::problem::{Forward, Horizon};
use lkstopo_core::verify::{directional_check, verify_line};
use lkstopo_core::{Error, Lks};
use rand::{Rng, SeedableRng};

/// Thread count for the solver pool; unset means one per core.
const THREADS_ENV: &str = "LKSTOPO_THREADS";

#[derive(Parser)]
#[command(name = "lkstopo", version, about = "Lattice kinetic topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve on the initial design.
    Solve(Args),
    /// Run the design optimization.
    Optimize(Args),
    /// Compare adjoint sensitivities with finite differences.
    Verify(Args),
    /// Print the memory estimate of the adjoint analysis.
    Memreport(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run manifest (TOML).
    config: PathBuf,
    /// Seed for randomized perturbation directions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Core(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Core(Error::Config(_)) => 2,
        Failure::Core(Error::Divergence { .. } | Error::NotConverged { .. }) => 3,
        Failure::Core(_) => 1,
        Failure::Verification(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (mode, args) = match &cli.command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Optimize(a) => (Mode::Optimize, a),
        Command::Verify(a) => (Mode::VerifySensitivity, a),
        Command::Memreport(a) => (Mode::MemoryReport, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(Error::Io { path, source }) if path == &args.config => {
                    eprintln!("error: cannot read config {}: {source}", path.display());
                    return ExitCode::from(2);
                }
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(mode: Mode, args: &Args) -> Result<(), Failure> {
    let mut manifest = RunManifest::load(&args.config)?;
    manifest.check_mode(mode)?;
    if let Some(out) = &args.out {
        manifest.output_dir = out.clone();
    }
    let cfg = manifest.case_config()?;
    match mode {
        Mode::MemoryReport => memreport(&cfg),
        Mode::Solve => solve(&manifest, &cfg),
        Mode::Optimize => run_optimize(&manifest, &cfg),
        Mode::VerifySensitivity => verify(&manifest, &cfg, args.seed),
    }
}

fn memreport(cfg: &CaseConfig) -> Result<(), Failure> {
    let (unsteady, n_t) = match cfg.horizon {
        Horizon::Steady => (false, 0),
        Horizon::Unsteady { steps } => (true, steps),
    };
    let model = |scheme| MemoryModel {
        scheme,
        kind: ProblemKind {
            thermal: cfg.physics.thermal,
            unsteady,
        },
        nx: cfg.nx,
        ny: cfg.ny,
        n_t,
        bytes_per_scalar: 8,
    };
    let alks = memory_report(&model(Scheme::Alks));
    let albm = memory_report(&model(Scheme::Albm));
    println!("{alks}");
    println!("{albm}");
    println!("reduction {:.1}%", 100.0 * reduction(&alks, &albm));
    Ok(())
}

fn write_text(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn solve(manifest: &RunManifest, cfg: &CaseConfig) -> Result<(), Failure> {
    let dir = manifest.prepare_output()?;
    let (problem, raw) = cfg.build()?;
    let design = problem.design(&raw);
    let mat = problem.materials(&design)?;
    let thermal = cfg.physics.thermal;
    let gamma = &design.gamma_projected;
    let snap = |step: usize, s: &lkstopo_core::StateFields| {
        let f = SnapshotFields::new(&problem.grid, gamma, s, thermal);
        write_snapshot(&dir, &cfg.name, 0, step, &f, manifest.vtk).map(|_| ())
    };
    let fwd = match cfg.horizon {
        Horizon::Steady => {
            let fwd = problem.forward(&mat, None)?;
            if let Forward::Steady(s) = &fwd {
                snap(0, s)?;
            }
            fwd
        }
        Horizon::Unsteady { steps } => {
            let lks = Lks::new(&problem.grid, &problem.boundary, &problem.physics, &mat);
            let mut err = None;
            lks.march(steps, |level, s| {
                if err.is_none() && (level % manifest.snapshot_every == 0 || level == steps) {
                    err = snap(level, s).err();
                }
            })?;
            if let Some(e) = err {
                return Err(e.into());
            }
            problem.forward(&mat, None)?
        }
    };
    println!("{}: {:?} = {:.10e}", cfg.name, cfg.objective, problem.value(cfg.objective, &mat, &fwd));
    Ok(())
}

struct RunObserver<'a> {
    manifest: &'a RunManifest,
    cfg: &'a CaseConfig,
    dir: PathBuf,
    trace: BufWriter<File>,
    trace_path: PathBuf,
}

impl Observer for RunObserver<'_> {
    fn iteration(&mut self, row: &TraceRow, design: &DesignField, forward: &Forward) -> lkstopo_core::Result<()> {
        let io = |e| Error::Io {
            path: self.trace_path.clone(),
            source: e,
        };
        let cons: Vec<String> = row.constraints.iter().map(|c| format!("{c:e}")).collect();
        writeln!(
            self.trace,
            "{},{:e},{},{:e},{:e},{}",
            row.iteration,
            row.objective,
            cons.join(";"),
            row.change,
            row.q_alpha,
            row.events.join(";")
        )
        .and_then(|_| self.trace.flush())
        .map_err(io)?;
        println!(
            "it {:4}  J {:.6e}  G [{}]  change {:.3e}{}",
            row.iteration,
            row.objective,
            cons.join(", "),
            row.change,
            if row.events.is_empty() { String::new() } else { format!("  {}", row.events.join(" ")) }
        );
        if row.iteration % self.manifest.snapshot_every == 0 || row.iteration == 1 {
            let grid = lkstopo_core::Grid::new(self.cfg.nx, self.cfg.ny)?;
            let boundary = self.cfg.boundary.resolve(&grid)?;
            let state = forward.final_state(&grid, &boundary);
            let f = SnapshotFields::new(&grid, &design.gamma_projected, &state, self.cfg.physics.thermal);
            let step = match self.cfg.horizon {
                Horizon::Steady => 0,
                Horizon::Unsteady { steps } => steps,
            };
            write_snapshot(&self.dir, &self.cfg.name, row.iteration, step, &f, self.manifest.vtk)?;
        }
        Ok(())
    }
}

fn run_optimize(manifest: &RunManifest, cfg: &CaseConfig) -> Result<(), Failure> {
    let dir = manifest.prepare_output()?;
    let (mut problem, raw) = cfg.build()?;
    let trace_path = dir.join(format!("{}_trace.csv", cfg.name));
    let file = File::create(&trace_path).map_err(|e| Error::Io {
        path: trace_path.clone(),
        source: e,
    })?;
    let mut trace = BufWriter::new(file);
    writeln!(trace, "iteration,objective,constraints,change,q_alpha,events").map_err(|e| Error::Io {
        path: trace_path.clone(),
        source: e,
    })?;
    let mut obs = RunObserver {
        manifest,
        cfg,
        dir: dir.clone(),
        trace,
        trace_path,
    };
    let result = optimize(&mut problem, cfg.objective, &cfg.constraints, &raw, &cfg.optimizer, &mut obs)?;
    let design_path = dir.join(format!("{}_design.csv", cfg.name));
    write_text(&design_path, |w| {
        writeln!(w, "i,j,gamma_raw,gamma")?;
        for n in 0..problem.grid.len() {
            let (i, j) = problem.grid.coords(n);
            writeln!(w, "{i},{j},{:e},{:e}", result.design.gamma_raw[n], result.design.gamma_projected[n])?;
        }
        Ok(())
    })?;
    println!(
        "{} after {} iterations ({})",
        cfg.name,
        result.trace.len(),
        if result.converged { "converged" } else { "iteration limit" }
    );
    Ok(())
}

fn verify(manifest: &RunManifest, cfg: &CaseConfig, seed: u64) -> Result<(), Failure> {
    let dir = manifest.prepare_output()?;
    let (problem, raw) = cfg.build()?;
    let tol = manifest.fd.tolerance;
    match cfg.sampling {
        Some(line) => {
            let report = verify_line(&problem, cfg.objective, &raw, line, &manifest.fd)?;
            let path = dir.join(format!("{}_line.csv", cfg.name));
            write_text(&path, |w| report.write_csv(w))?;
            report.write_csv(std::io::stdout().lock()).ok();
            let verdict = if report.passes(tol) { "PASS" } else { "FAIL" };
            println!(
                "{verdict} {}: relative L2 {:.4e} (bound {tol}) over {} samples",
                cfg.name,
                report.relative_l2,
                report.samples.iter().filter(|s| s.included).count()
            );
            if !report.passes(tol) {
                return Err(Failure::Verification(format!("relative L2 {:.4e} > {tol}", report.relative_l2)));
            }
        }
        None => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dir_vec: Vec<f64> = problem
                .mask
                .iter()
                .map(|&m| if m { rng.random_range(-1.0..1.0) } else { 0.0 })
                .collect();
            let c = directional_check(&problem, cfg.objective, &raw, &dir_vec, manifest.fd.epsilon)?;
            let verdict = if c.relative_error <= tol { "PASS" } else { "FAIL" };
            println!(
                "{verdict} {}: adjoint {:.10e} fd {:.10e} relative error {:.4e} (bound {tol}, seed {seed})",
                cfg.name, c.adjoint, c.fd, c.relative_error
            );
            if c.relative_error > tol {
                return Err(Failure::Verification(format!("relative error {:.4e} > {tol}", c.relative_error)));
            }
        }
    }
    Ok(())
}
