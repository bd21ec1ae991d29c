use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use geomflow::diagnostics::{eoc, mesh_distance, sphere_distance, LedgerRow};
use geomflow::geometry::SpaceField;
use geomflow::refmesh::io::write_text;
use geomflow::residual::FlowKind;
use geomflow::solver::Termination;
use geomflow::{Error, Result};

use crate::config::{Axis, RunConfig};
use crate::run::cmd_run;

#[derive(Debug, Clone)]
pub struct LevelResult {
    /// Mesh size (space sweeps) or timestep (time sweeps).
    pub step: f64,
    pub tau: f64,
    pub termination: Option<Termination>,
    /// Message of the failure that ended this level, if any.
    pub failure: Option<String>,
    pub rows: Vec<LedgerRow>,
    pub initial_area: f64,
    final_x: Option<SpaceField>,
}

impl LevelResult {
    pub fn ok(&self) -> bool {
        self.termination == Some(Termination::ReachedT)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: Axis,
    pub levels: Vec<LevelResult>,
    /// `(step, error)` pairs; exact-solution errors per level, or
    /// adjacent-level distances attributed to the coarser level.
    pub errors: Vec<(f64, f64)>,
    pub slopes: Vec<f64>,
    /// Whether errors are against the closed-form shrinking sphere.
    pub exact: bool,
    pub dat: PathBuf,
}

/// Radius of the shrinking sphere under mean curvature flow, when the
/// configured problem is one.
pub fn exact_radius(cfg: &RunConfig) -> Option<f64> {
    let round = matches!(cfg.geometry.mesh.as_str(), "icosphere" | "circle");
    if cfg.flow().ok()? != FlowKind::Mcf || cfg.geometry.shape != "sphere" || !round {
        return None;
    }
    let d = cfg.dim() as f64;
    Some((1.0 - 2.0 * d * cfg.problem.t_final).max(0.0).sqrt())
}

/// Runs the configured problem over `levels` refinements along `axis`.
/// Space sweeps halve the mesh size per level and couple the timestep as
/// `τ ~ h^{(k+2)/2}`; time sweeps halve `τ` on the configured mesh.
pub fn cmd_sweep(cfg: &RunConfig, axis: Axis, levels: usize, log: &mut dyn Write) -> Result<SweepReport> {
    if levels < 3 {
        return Err(Error::config("sweep.levels", "a sweep needs at least 3 levels"));
    }
    let base = cfg.flow_spec()?;
    let n0 = base.num_steps()?;
    let h0 = cfg.mesh(0)?.max_edge_length();
    let k = cfg.problem.degree as f64;
    let mut results = Vec::new();
    for level in 0..levels {
        let mut c = cfg.clone();
        let (step, n) = match axis {
            Axis::Space => {
                let n = (n0 as f64 * 2f64.powf(level as f64 * (k + 2.0) / 2.0)).round() as usize;
                (h0 / 2f64.powi(level as i32), n)
            }
            Axis::Time => (base.tau / 2f64.powi(level as i32), n0 << level),
        };
        c.problem.tau = cfg.problem.t_final / n as f64;
        if axis == Axis::Space {
            match c.geometry.mesh.as_str() {
                "icosphere" => c.geometry.level = c.geometry.level.map(|l| l + level),
                "circle" => c.geometry.segments = c.geometry.segments.map(|s| s << level),
                "cuboid" => c.geometry.density = c.geometry.density.map(|s| s << level),
                _ => return Err(Error::Capability("space sweeps need a generated mesh".into())),
            }
        }
        c.output.dir = cfg.output.dir.join(format!("level_{level}"));
        c.output.snapshot_interval = 0;
        c.output.checkpoint_interval = 0;
        c.sweep = None;
        let _ = writeln!(log, "level {level}: step {step:e}, tau {:e}", c.problem.tau);
        let res = match cmd_run(&c, None, &mut std::io::sink()) {
            Ok(out) => {
                let final_x = (out.record.termination == Termination::ReachedT).then(|| out.final_x.clone());
                LevelResult {
                    step,
                    tau: c.problem.tau,
                    termination: Some(out.record.termination),
                    failure: out.record.failure.clone(),
                    rows: out.record.rows.clone(),
                    initial_area: out.record.initial_area,
                    final_x,
                }
            }
            Err(e) => LevelResult {
                step,
                tau: c.problem.tau,
                termination: None,
                failure: Some(e.to_string()),
                rows: Vec::new(),
                initial_area: f64::NAN,
                final_x: None,
            },
        };
        if !res.ok() {
            let _ = writeln!(log, "level {level} failed: {}", res.failure.as_deref().unwrap_or("unknown"));
        }
        results.push(res);
    }

    let radius = exact_radius(cfg);
    let mut errors = Vec::new();
    match radius {
        Some(r) => {
            for l in &results {
                if let Some(x) = &l.final_x {
                    errors.push((l.step, sphere_distance(x, r, None)?));
                }
            }
        }
        None => {
            for w in results.windows(2) {
                if let (Some(a), Some(b)) = (&w[0].final_x, &w[1].final_x) {
                    errors.push((w[0].step, mesh_distance(a, b, None)?));
                }
            }
        }
    }
    let slopes = if errors.len() >= 2 {
        let (s, e): (Vec<f64>, Vec<f64>) = errors.iter().copied().unzip();
        eoc(&e, &s).unwrap_or_default()
    } else {
        Vec::new()
    };

    let name = match axis {
        Axis::Space => "sweep_space.dat",
        Axis::Time => "sweep_time.dat",
    };
    let dat = cfg.output.dir.join(name);
    let mut text = String::from("# step error\n");
    for (s, e) in &errors {
        let _ = writeln!(text, "{s:e} {e:e}");
    }
    std::fs::create_dir_all(&cfg.output.dir)?;
    write_text(&dat, &text)?;

    Ok(SweepReport {
        axis,
        levels: results,
        errors,
        slopes,
        exact: radius.is_some(),
        dat,
    })
}
