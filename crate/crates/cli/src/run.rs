use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use geomflow::diagnostics::LedgerWriter;
use geomflow::geometry::SpaceField;
use geomflow::refmesh::io::{field_to_text, write_text};
use geomflow::solver::{Checkpoint, RunRecord, Simulation, Termination};
use geomflow::{Error, Result};

use crate::config::RunConfig;

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub record: RunRecord,
    pub ledger: PathBuf,
    pub summary: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub final_x: SpaceField,
}

/// Snapshot file name for slab `step`. Surfaces are OBJ, curves use the
/// polygon text format.
pub fn snapshot_name(dim: usize, step: usize) -> String {
    let ext = if dim == 2 { "obj" } else { "poly" };
    format!("snap_{step:07}.{ext}")
}

pub fn checkpoint_name(step: usize) -> String {
    format!("ckpt_{step:07}.ckpt")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Runs the configured problem from `t = 0`, or from `resume` when given.
pub fn cmd_run(cfg: &RunConfig, resume: Option<&Path>, log: &mut dyn Write) -> Result<RunOutputs> {
    let spec = cfg.flow_spec()?;
    let hash = cfg.hash();
    let x0 = cfg.initial_geometry(0)?;
    let mut sim = match resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let ck = Checkpoint::from_text(&text)?;
            if ck.config_hash != hash {
                return Err(Error::config(
                    "resume",
                    format!("checkpoint was written by config {} but this config is {hash}", ck.config_hash),
                ));
            }
            Simulation::restore(&spec, x0, &ck)?
        }
        None => Simulation::new(&spec, x0)?,
    };

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_text(&dir.join("config.toml"), &cfg.canonical())?;

    let ledger = dir.join("ledger.csv");
    let file = File::create(&ledger).map_err(|e| io_err(&ledger, e))?;
    let mut head = BufWriter::new(file);
    writeln!(head, "# config {hash}").map_err(|e| io_err(&ledger, e))?;
    let mut writer = LedgerWriter::new(head);

    let dim = spec.dim;
    let snap_every = cfg.output.snapshot_interval;
    let ckpt_every = cfg.output.checkpoint_interval;
    let mut snapshots = Vec::new();
    let mut checkpoints = Vec::new();
    let snap = |x: &SpaceField, step: usize, out: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(snapshot_name(dim, step));
        write_text(&path, &field_to_text(x))?;
        out.push(path);
        Ok(())
    };
    let ckpt = |sim: &Simulation, out: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(checkpoint_name(sim.step()));
        write_text(&path, &sim.checkpoint(&hash).to_text())?;
        out.push(path);
        Ok(())
    };
    if resume.is_none() {
        snap(sim.position(), 0, &mut snapshots)?;
    }

    let total = sim.total_steps();
    let record = sim.run(|s, row| {
        writer.write(row)?;
        let step = s.step();
        if snap_every > 0 && step % snap_every == 0 {
            snap(s.position(), step, &mut snapshots)?;
        }
        if ckpt_every > 0 && step % ckpt_every == 0 {
            ckpt(s, &mut checkpoints)?;
        }
        if step % (total / 20).max(1) == 0 {
            let _ = writeln!(
                log,
                "step {step}/{total} t={:.6} S/S0={:.6} dV_rel={:.2e} rh={:.3} its={}",
                row.t, row.s_norm, row.dv_rel, row.rh, row.newton_its
            );
        }
        Ok(())
    })?;
    writer.into_inner()?.flush().map_err(|e| io_err(&ledger, e))?;
    if checkpoints.last().map(|p| !p.ends_with(checkpoint_name(sim.step()))).unwrap_or(true) {
        ckpt(&sim, &mut checkpoints)?;
    }

    let summary = dir.join("summary.txt");
    write_text(&summary, &summary_text(&hash, &record, sim.step()))?;
    let _ = writeln!(log, "{}", record.termination.name());
    Ok(RunOutputs {
        record,
        ledger,
        summary,
        snapshots,
        checkpoints,
        final_x: sim.position().clone(),
    })
}

pub fn summary_text(hash: &str, rec: &RunRecord, steps: usize) -> String {
    let max = |f: fn(&geomflow::diagnostics::LedgerRow) -> f64| rec.rows.iter().map(f).fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(out, "config_hash = {hash}");
    let _ = writeln!(out, "termination = {}", rec.termination.name());
    let _ = writeln!(out, "final_time = {:?}", rec.final_time);
    let _ = writeln!(out, "steps = {steps}");
    let _ = writeln!(out, "initial_area = {:?}", rec.initial_area);
    let _ = writeln!(out, "initial_volume = {:?}", rec.initial_volume);
    let _ = writeln!(out, "max_dV_rel = {:?}", max(|r| r.dv_rel));
    let _ = writeln!(out, "max_rh = {:?}", max(|r| r.rh));
    let _ = writeln!(out, "max_diss_res = {:?}", max(|r| r.diss_res));
    let _ = writeln!(out, "max_orth_res = {:?}", max(|r| r.orth_res));
    if let Some(f) = &rec.failure {
        let _ = writeln!(out, "failure = {f:?}");
    }
    out
}

/// Exit status for a finished run.
pub fn run_status(rec: &RunRecord) -> i32 {
    match rec.termination {
        Termination::ReachedT => 0,
        Termination::NewtonFailure | Termination::DegenerateGeometry => 3,
    }
}
