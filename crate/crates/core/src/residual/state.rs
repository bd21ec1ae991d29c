use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::SpaceField;
use crate::refmesh::FunctionSpace;
use crate::solver::NewtonConfig;
use crate::timeslab::{self, QuadraturePolicy, TimePolyField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// Mean curvature flow.
    Mcf,
    /// Surface (or curve) diffusion.
    Sd,
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Mcf => "mcf",
            FlowKind::Sd => "sd",
        }
    }
}

impl std::str::FromStr for FlowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcf" => Ok(FlowKind::Mcf),
            "sd" => Ok(FlowKind::Sd),
            other => Err(Error::config("flow", format!("unknown flow `{other}` (expected mcf or sd)"))),
        }
    }
}

/// Problem configuration for one run.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub flow: FlowKind,
    /// Manifold dimension.
    pub dim: usize,
    /// Lagrange degree in space.
    pub degree: usize,
    /// Number of time stages.
    pub stages: usize,
    pub tau: f64,
    pub t_final: f64,
    pub policy: QuadraturePolicy,
    pub newton: NewtonConfig,
    /// Label of the initial geometry (informational).
    pub geometry: String,
    /// Use the colored finite-difference Jacobian instead of the exact one.
    pub fd_jacobian: bool,
}

impl FlowSpec {
    pub fn new(flow: FlowKind, dim: usize, degree: usize, stages: usize, tau: f64, t_final: f64) -> Result<Self> {
        let spec = Self {
            flow,
            dim,
            degree,
            stages,
            tau,
            t_final,
            policy: timeslab::default_policy(dim, degree.max(1), stages.max(1))?,
            newton: NewtonConfig::default(),
            geometry: String::new(),
            fd_jacobian: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::config("dim", format!("{} (expected 1 or 2)", self.dim)));
        }
        if self.degree == 0 {
            return Err(Error::config("degree", "must be at least 1"));
        }
        if self.stages == 0 {
            return Err(Error::config("stages", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Precondition(format!("timestep tau = {} must be positive", self.tau)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", "must be positive"));
        }
        self.num_steps()?;
        self.newton.validate()?;
        Ok(())
    }

    /// Number of slabs `T / tau`; `tau` must divide `T`.
    pub fn num_steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.tau;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(
                "tau",
                format!("timestep {} does not divide the final time {}", self.tau, self.t_final),
            ));
        }
        Ok(n as usize)
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim + 1
    }
}

/// Placement of the slab unknowns in one flat vector: fields `X, p, R, κ`,
/// then time node, then spatial node, then component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlabLayout {
    pub nodes: usize,
    pub ambient: usize,
    pub stages: usize,
}

impl SlabLayout {
    pub fn len(&self) -> usize {
        self.stages * self.nodes * (2 * self.ambient + 2)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trial node `m` in `0..stages` (node 0 of the basis is excluded).
    pub fn x(&self, m: usize, node: usize, c: usize) -> usize {
        (m * self.nodes + node) * self.ambient + c
    }

    pub fn p(&self, j: usize, node: usize) -> usize {
        self.stages * self.nodes * self.ambient + j * self.nodes + node
    }

    pub fn r(&self, j: usize, node: usize, c: usize) -> usize {
        self.stages * self.nodes * (self.ambient + 1) + (j * self.nodes + node) * self.ambient + c
    }

    pub fn kappa(&self, j: usize, node: usize) -> usize {
        self.stages * self.nodes * (2 * self.ambient + 1) + j * self.nodes + node
    }

    /// Row offsets of the equation blocks (a)-(d).
    pub fn row_a(&self, j: usize, node: usize) -> usize {
        j * self.nodes + node
    }

    pub fn row_b(&self, j: usize, node: usize, c: usize) -> usize {
        self.stages * self.nodes + (j * self.nodes + node) * self.ambient + c
    }

    pub fn row_c(&self, j: usize, node: usize) -> usize {
        self.stages * self.nodes * (self.ambient + 1) + j * self.nodes + node
    }

    pub fn row_d(&self, j: usize, node: usize, c: usize) -> usize {
        self.stages * self.nodes * (self.ambient + 2) + (j * self.nodes + node) * self.ambient + c
    }

    /// Ranges of the row blocks (a), (b), (c), (d).
    pub fn row_blocks(&self) -> [std::ops::Range<usize>; 4] {
        let (s, n, a) = (self.stages, self.nodes, self.ambient);
        let b0 = s * n;
        let c0 = b0 + s * n * a;
        let d0 = c0 + s * n;
        [0..b0, b0..c0, c0..d0, d0..d0 + s * n * a]
    }
}

/// All unknowns of one slab plus the incoming state.
///
/// Position unknowns are stored as displacements from the incoming state, so
/// velocities are formed without cancellation; accessors return positions.
#[derive(Debug, Clone)]
pub struct SlabState {
    space: Arc<FunctionSpace>,
    layout: SlabLayout,
    t0: f64,
    tau: f64,
    incoming: SpaceField,
    unknowns: Vec<f64>,
}

impl SlabState {
    /// `X` constant in time at `incoming`; `p, R, κ` zero.
    pub fn stationary(incoming: SpaceField, stages: usize, t0: f64, tau: f64) -> Result<Self> {
        let space = incoming.space().clone();
        if incoming.components() != space.ambient_dim() {
            return Err(Error::InvalidInput("incoming state must be a position field".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Precondition(format!("timestep tau = {tau} must be positive")));
        }
        let layout = SlabLayout {
            nodes: space.num_nodes(),
            ambient: space.ambient_dim(),
            stages,
        };
        Ok(Self {
            space,
            layout,
            t0,
            tau,
            incoming,
            unknowns: vec![0.0; layout.len()],
        })
    }

    pub fn from_unknowns(incoming: SpaceField, stages: usize, t0: f64, tau: f64, unknowns: Vec<f64>) -> Result<Self> {
        let mut s = Self::stationary(incoming, stages, t0, tau)?;
        if unknowns.len() != s.layout.len() {
            return Err(Error::InvalidInput(format!(
                "{} unknowns for a slab of {}",
                unknowns.len(),
                s.layout.len()
            )));
        }
        s.unknowns = unknowns;
        Ok(s)
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn layout(&self) -> SlabLayout {
        self.layout
    }

    pub fn stages(&self) -> usize {
        self.layout.stages
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn incoming(&self) -> &SpaceField {
        &self.incoming
    }

    /// Flat unknown vector (position entries are displacements).
    pub fn unknowns(&self) -> &[f64] {
        &self.unknowns
    }

    pub fn unknowns_mut(&mut self) -> &mut [f64] {
        &mut self.unknowns
    }

    /// Sets the auxiliary fields `p, R, κ` constant in time.
    pub fn set_auxiliary(&mut self, p: &SpaceField, r: &SpaceField, kappa: &SpaceField) {
        let l = self.layout;
        for j in 0..l.stages {
            for i in 0..l.nodes {
                self.unknowns[l.p(j, i)] = p.values()[i];
                self.unknowns[l.kappa(j, i)] = kappa.values()[i];
                for c in 0..l.ambient {
                    self.unknowns[l.r(j, i, c)] = r.values()[i * l.ambient + c];
                }
            }
        }
    }

    fn field(&self, components: usize, index: impl Fn(usize, usize) -> usize) -> SpaceField {
        let values = (0..self.layout.nodes)
            .flat_map(|i| (0..components).map(move |c| (i, c)))
            .map(|(i, c)| self.unknowns[index(i, c)])
            .collect();
        SpaceField::from_values(self.space.clone(), components, values).expect("layout sizes match")
    }

    /// Position coefficient at trial node `m` in `0..=stages` (0 is incoming).
    pub fn x_coeff(&self, m: usize) -> SpaceField {
        if m == 0 {
            return self.incoming.clone();
        }
        let l = self.layout;
        let disp = self.field(l.ambient, |i, c| l.x(m - 1, i, c));
        self.incoming.axpy(1.0, &disp)
    }

    pub fn p_coeff(&self, j: usize) -> SpaceField {
        let l = self.layout;
        self.field(1, |i, _| l.p(j, i))
    }

    pub fn r_coeff(&self, j: usize) -> SpaceField {
        let l = self.layout;
        self.field(l.ambient, |i, c| l.r(j, i, c))
    }

    pub fn kappa_coeff(&self, j: usize) -> SpaceField {
        let l = self.layout;
        self.field(1, |i, _| l.kappa(j, i))
    }

    pub fn x(&self) -> TimePolyField {
        let coeffs = (0..=self.stages()).map(|m| self.x_coeff(m)).collect();
        TimePolyField::new(timeslab::trial_basis(self.stages()), coeffs, self.t0, self.t0 + self.tau)
            .expect("basis size matches")
    }

    fn aux(&self, f: impl Fn(usize) -> SpaceField) -> TimePolyField {
        let coeffs = (0..self.stages()).map(f).collect();
        TimePolyField::new(timeslab::test_basis(self.stages()), coeffs, self.t0, self.t0 + self.tau)
            .expect("basis size matches")
    }

    pub fn p(&self) -> TimePolyField {
        self.aux(|j| self.p_coeff(j))
    }

    pub fn r(&self) -> TimePolyField {
        self.aux(|j| self.r_coeff(j))
    }

    pub fn kappa(&self) -> TimePolyField {
        self.aux(|j| self.kappa_coeff(j))
    }

    /// Position at the end of the slab.
    pub fn terminal_x(&self) -> SpaceField {
        self.x().eval(1.0)
    }

    /// `(p, R, κ)` extrapolated to the end of the slab.
    pub fn terminal_auxiliary(&self) -> (SpaceField, SpaceField, SpaceField) {
        (self.p().eval(1.0), self.r().eval(1.0), self.kappa().eval(1.0))
    }
}
