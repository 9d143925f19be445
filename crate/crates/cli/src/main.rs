use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dgife_core::checks::run_checks;
use dgife_core::config::{RunConfig, StudyMode};
use dgife_core::mesh::write_mesh;
use dgife_core::{
    export_error_field, parse_config, run_adaptive_study_with, run_convergence_study_with, Error, ManufacturedSolution,
    Problem, Solved, SolverKind,
};

/// Largest mesh size run at the desk tier.
const DESK_MAX_N: usize = 320;

#[derive(Parser, Debug)]
#[command(name = "dgife", version, about = "DG-IFE solver for 2D elliptic interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(clap::Args, Debug)]
struct Options {
    /// Run configuration (TOML). Defaults reproduce the symmetric scheme on triangles.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Gauss points per direction for all integrals.
    #[arg(long, global = true)]
    quad_order: Option<usize>,
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, global = true, value_enum, default_value_t = Tier::Desk)]
    tier: Tier,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Uniform-refinement convergence study.
    Converge,
    /// Adaptive solve, mark, refine study.
    Adapt,
    /// Write the first mesh with its interface classification.
    DumpMesh,
    /// Solve on the first mesh and write the point-wise error field.
    DumpField {
        /// Raster size per direction when `output.field_resolution` is 0.
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
    /// Run the invariant checks on the configuration.
    Check,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Direct,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Tier {
    Desk,
    Large,
}

fn load(opts: &Options) -> Result<RunConfig, Error> {
    let mut config = match &opts.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(q) = opts.quad_order {
        let d = &mut config.discretization;
        d.volume_order = q;
        d.edge_order = q;
        d.norm_order = q;
    }
    if let Some(s) = opts.solver {
        config.solver.kind = match s {
            SolverArg::Direct => SolverKind::Direct,
            SolverArg::Iterative => SolverKind::Iterative,
        };
    }
    if let Some(out) = &opts.out {
        config.output.dir = out.clone();
    }
    if opts.tier == Tier::Desk {
        let before = config.study.n.len();
        config.study.n.retain(|&n| n <= DESK_MAX_N);
        if config.study.n.len() < before {
            log::warn!("desk tier: dropping mesh sizes above N = {DESK_MAX_N} (use --tier large)");
        }
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn dump_level(config: &RunConfig, sol: &ManufacturedSolution, name: &str, solved: &Solved) -> Result<(), Error> {
    let dir = &config.output.dir;
    if config.output.mesh_dumps {
        let s = &solved.space;
        write_mesh(
            &s.mesh,
            Some(&s.classification),
            create(&dir.join(format!("mesh_{name}.txt")))?,
        )?;
    }
    if config.output.field_resolution > 0 {
        export_error_field(
            &solved.space,
            &solved.uh,
            sol,
            config.output.field_resolution,
            create(&dir.join(format!("field_{name}.txt")))?,
        )?;
    }
    Ok(())
}

fn first_n(config: &RunConfig) -> usize {
    match config.study.mode {
        StudyMode::Uniform => config.study.n[0],
        StudyMode::Adaptive => config.study.initial_n,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let config = load(&cli.opts)?;
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let sol = Problem::from_config(&config).solution;
    match cli.command {
        Command::Converge => {
            let report = run_convergence_study_with(&config, |n, s| dump_level(&config, &sol, &format!("n{n}"), s))?;
            report.write_csv(create(&dir.join("convergence.csv"))?)?;
            print!("{report}");
        }
        Command::Adapt => {
            let (_, report) =
                run_adaptive_study_with(&config, |it, s| dump_level(&config, &sol, &format!("iter{it:02}"), s))?;
            report.write_csv(create(&dir.join("adaptive.csv"))?)?;
            print!("{report}");
        }
        Command::DumpMesh => {
            let problem = Problem::from_config(&config);
            let n = first_n(&config);
            let space = problem.space(problem.uniform_mesh(n)?)?;
            let path = dir.join(format!("mesh_n{n}.txt"));
            write_mesh(&space.mesh, Some(&space.classification), create(&path)?)?;
            println!("{}", path.display());
        }
        Command::DumpField { resolution } => {
            let problem = Problem::from_config(&config);
            let n = first_n(&config);
            let solved = problem.solve(problem.uniform_mesh(n)?, &format!("N = {n}"))?;
            let res = if config.output.field_resolution > 0 {
                config.output.field_resolution
            } else {
                resolution
            };
            let path = dir.join(format!("field_n{n}.txt"));
            let max = export_error_field(&solved.space, &solved.uh, &problem.solution, res, create(&path)?)?;
            println!(
                "{} (max error {max:.4e}, Linf {:.4e})",
                path.display(),
                solved.norms.linf
            );
        }
        Command::Check => {
            let checks = run_checks(&config)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(t) = std::env::var("DGIFE_THREADS") {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("cannot set worker count: {e}");
                }
            }
            _ => log::warn!("ignoring DGIFE_THREADS = {t:?}"),
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
