use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use geomflow::diagnostics::mesh_distance;
use geomflow::geometry::SpaceField;
use geomflow::refmesh::io::read_mesh;
use geomflow::refmesh::{map_initial_geometry, FunctionSpace, Shape};
use geomflow::{Error, Result};
use geomflow_cli::config::{Axis, RunConfig};
use geomflow_cli::{exit_code, run, sweep};

#[derive(Parser)]
#[command(name = "geomflow", version, about = "Structure-preserving mean curvature flow and surface diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March one configured problem and write ledger, snapshots and checkpoints.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print the canonical configuration and its hash, then exit.
        #[arg(long)]
        canonical: bool,
    },
    /// Convergence study over refinement levels in space or time.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Mean closest-point distance between two meshes, both ways.
    Distance {
        a: PathBuf,
        b: PathBuf,
        /// Degree of the sampling rule (default 4 for piecewise-linear meshes).
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Load a mesh file and report its connectivity.
    CheckMesh { mesh: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let mut log = std::io::stderr();
    match cmd {
        Command::Run { config, resume, canonical } => {
            let cfg = RunConfig::load(&config)?;
            if canonical {
                print!("{}", cfg.canonical());
                println!("# sha256 {}", cfg.hash());
                return Ok(0);
            }
            let out = run::cmd_run(&cfg, resume.as_deref(), &mut log)?;
            print!("{}", std::fs::read_to_string(&out.summary)?);
            Ok(run::run_status(&out.record))
        }
        Command::Sweep { config, axis, levels } => {
            let cfg = RunConfig::load(&config)?;
            let section = cfg.sweep.clone();
            let axis: Axis = match axis.or(section.as_ref().map(|s| s.axis.clone())) {
                Some(a) => a.parse()?,
                None => return Err(Error::config("sweep.axis", "give --axis or a [sweep] section")),
            };
            let levels = levels.or(section.map(|s| s.levels)).unwrap_or(3);
            let report = sweep::cmd_sweep(&cfg, axis, levels, &mut log)?;
            println!("{:>12} {:>12} {:>8}", "step", "error", "eoc");
            for (i, (s, e)) in report.errors.iter().enumerate() {
                let slope = if i == 0 { "-".to_string() } else { format!("{:.3}", report.slopes[i - 1]) };
                println!("{s:>12.4e} {e:>12.4e} {slope:>8}");
            }
            Ok(if report.levels.iter().all(|l| l.ok()) { 0 } else { 3 })
        }
        Command::Distance { a, b, degree } => {
            let (xa, xb) = (load_surface(&a)?, load_surface(&b)?);
            let q = degree.unwrap_or(4);
            println!("sampling degree {q}");
            println!("E_M(A, B) = {:e}", mesh_distance(&xa, &xb, Some(q))?);
            println!("E_M(B, A) = {:e}", mesh_distance(&xb, &xa, Some(q))?);
            Ok(0)
        }
        Command::CheckMesh { mesh } => {
            let m = read_mesh(&mesh)?;
            println!("dimension {}", m.dim());
            println!("vertices {}", m.num_vertices());
            println!("edges {}", m.num_edges());
            println!("cells {}", m.num_cells());
            println!("euler characteristic {}", m.euler_characteristic());
            println!("max edge length {:e}", m.max_edge_length());
            Ok(0)
        }
    }
}

/// Piecewise-linear geometry of a mesh file at its own vertex positions.
fn load_surface(path: &Path) -> Result<SpaceField> {
    let mesh = read_mesh(path)?;
    let space = Arc::new(FunctionSpace::new(Arc::new(mesh), 1)?);
    map_initial_geometry(&space, Shape::Identity)
}
