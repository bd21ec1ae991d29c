//! Run configuration: a TOML file with fixed sections, parsed strictly and
//! re-emitted in canonical form for hashing.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use geomflow::refmesh::{
    io::read_mesh, make_circle_mesh, make_cuboid_mesh, make_icosphere_mesh, map_initial_geometry, FunctionSpace,
    ReferenceMesh, Shape,
};
use geomflow::residual::{FlowKind, FlowSpec};
use geomflow::solver::NewtonConfig;
use geomflow::timeslab::{policy_with, PolicyOverrides};
use geomflow::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub geometry: Geometry,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub newton: Newton,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    /// `mcf` or `sd`.
    pub flow: String,
    pub degree: usize,
    pub stages: usize,
    pub tau: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// `icosphere`, `circle`, `cuboid` or `file`.
    pub mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub shape: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    /// Slabs between snapshots; 0 writes only the initial one.
    pub snapshot_interval: usize,
    /// Slabs between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: usize,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_interval: 0,
            checkpoint_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quadrature {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_rule_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_elevation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Newton {
    pub atol: f64,
    pub rtol: f64,
    pub max_iterations: usize,
    pub backtrack: f64,
    pub max_halvings: usize,
    pub reuse_jacobian: bool,
    pub reuse_contraction: f64,
    pub fd_jacobian: bool,
}

impl Default for Newton {
    fn default() -> Self {
        let n = NewtonConfig::default();
        Self {
            atol: n.atol,
            rtol: n.rtol,
            max_iterations: n.max_iterations,
            backtrack: n.backtrack,
            max_halvings: n.max_halvings,
            reuse_jacobian: n.reuse_jacobian,
            reuse_contraction: n.reuse_contraction,
            fd_jacobian: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `space` or `time`.
    pub axis: String,
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Space,
    Time,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "space" => Ok(Axis::Space),
            "time" => Ok(Axis::Time),
            other => Err(Error::config("sweep.axis", format!("unknown axis `{other}` (expected space or time)"))),
        }
    }
}

impl RunConfig {
    /// Parses and validates. Unknown keys, missing keys and bad values are
    /// reported as configuration errors naming the key.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(toml_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // mesh files are relative to the config file
        if let (Some(p), Some(base)) = (&cfg.geometry.path, path.parent()) {
            if p.is_relative() {
                cfg.geometry.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow()?;
        self.shape()?;
        let g = &self.geometry;
        let need = |v: bool, key: &str| {
            if v {
                Ok(())
            } else {
                Err(Error::config(format!("geometry.{key}"), format!("required for mesh `{}`", g.mesh)))
            }
        };
        match g.mesh.as_str() {
            "icosphere" => need(g.level.is_some(), "level")?,
            "circle" => need(g.segments.is_some(), "segments")?,
            "cuboid" => need(g.lengths.is_some() && g.density.is_some(), "lengths")?,
            "file" => need(g.path.is_some(), "path")?,
            other => {
                return Err(Error::config(
                    "geometry.mesh",
                    format!("unknown mesh `{other}` (expected icosphere, circle, cuboid or file)"),
                ))
            }
        }
        if let Some(s) = &self.sweep {
            s.axis.parse::<Axis>()?;
            if s.levels < 3 {
                return Err(Error::config("sweep.levels", "a sweep needs at least 3 levels"));
            }
        }
        self.flow_spec()?;
        Ok(())
    }

    pub fn flow(&self) -> Result<FlowKind> {
        self.problem
            .flow
            .parse()
            .map_err(|_| Error::config("problem.flow", format!("unknown flow `{}` (expected mcf or sd)", self.problem.flow)))
    }

    pub fn shape(&self) -> Result<Shape> {
        self.geometry
            .shape
            .parse()
            .map_err(|_| Error::config("geometry.shape", format!("unknown shape `{}`", self.geometry.shape)))
    }

    /// Manifold dimension implied by the mesh.
    pub fn dim(&self) -> usize {
        match self.geometry.mesh.as_str() {
            "circle" => 1,
            "file" => match self.geometry.path.as_deref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("obj") => 2,
                _ => 1,
            },
            _ => 2,
        }
    }

    pub fn flow_spec(&self) -> Result<FlowSpec> {
        let p = &self.problem;
        let d = self.dim();
        let mut spec = FlowSpec::new(self.flow()?, d, p.degree, p.stages, p.tau, p.t_final).map_err(|e| prefixed(e, "problem"))?;
        let q = &self.quadrature;
        let overrides = PolicyOverrides {
            time_rule_points: q.time_rule_points,
            elevation_points: q.elevation_points,
            spatial_degree: q.spatial_degree,
            spatial_elevation: q.spatial_elevation,
        };
        spec.policy = policy_with(d, p.degree, p.stages, overrides).map_err(|e| prefixed(e, "quadrature"))?;
        let n = &self.newton;
        spec.newton = NewtonConfig {
            atol: n.atol,
            rtol: n.rtol,
            max_iterations: n.max_iterations,
            backtrack: n.backtrack,
            max_halvings: n.max_halvings,
            reuse_jacobian: n.reuse_jacobian,
            reuse_contraction: n.reuse_contraction,
        };
        spec.fd_jacobian = n.fd_jacobian;
        spec.geometry = format!("{}:{}", self.geometry.mesh, self.geometry.shape);
        spec.validate()?;
        Ok(spec)
    }

    /// Reference mesh, optionally refined `extra` levels beyond the
    /// configured resolution (icosphere levels, doubled circle segments or
    /// cuboid density).
    pub fn mesh(&self, extra: usize) -> Result<ReferenceMesh> {
        let g = &self.geometry;
        match g.mesh.as_str() {
            "icosphere" => make_icosphere_mesh(g.level.unwrap_or(0) + extra),
            "circle" => make_circle_mesh(g.segments.unwrap_or(0) << extra),
            "cuboid" => {
                let [lx, ly, lz] = g.lengths.unwrap_or([1.0; 3]);
                make_cuboid_mesh(lx, ly, lz, g.density.unwrap_or(1) << extra)
            }
            _ => {
                if extra > 0 {
                    return Err(Error::Capability("mesh files cannot be refined".into()));
                }
                read_mesh(g.path.as_deref().unwrap_or(Path::new("")))
            }
        }
    }

    /// Initial geometry on the mesh refined `extra` levels.
    pub fn initial_geometry(&self, extra: usize) -> Result<geomflow::geometry::SpaceField> {
        let mesh = self.mesh(extra)?;
        let space = Arc::new(FunctionSpace::new(Arc::new(mesh), self.problem.degree)?);
        map_initial_geometry(&space, self.shape()?)
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form, in hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    // serde names the offending key in its messages ("unknown field `x`",
    // "missing field `x`"); fall back to the source span otherwise
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .map(str::to_string)
        .unwrap_or_else(|| "config".into());
    Error::config(key, e.to_string().trim().to_string())
}

fn prefixed(e: Error, section: &str) -> Error {
    match e {
        Error::Config { key, message } if !key.contains('.') => Error::config(format!("{section}.{key}"), message),
        other => other,
    }
}
