use std::path::Path;

use kinetic_core::chains::NearDiagonalParams;
use kinetic_core::coefficients::{checkerboard_ensemble, CoefficientField, FieldDescriptor, FieldKind};
use kinetic_core::nash_g::{NashParams, LOG_FLOOR};
use kinetic_core::solver::{DiffusionScheme, Grid, Interpolation, SolverConfig};
use kinetic_core::trajectories::{FamilyKind, OscillationParams, Tolerances};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    VerifyBounds,
    GBound,
    LevelSet,
    Chain,
    Trajectories,
    Adjoint,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyBounds => "verify-bounds",
            Command::GBound => "g-bound",
            Command::LevelSet => "level-set",
            Command::Chain => "chain",
            Command::Trajectories => "trajectories",
            Command::Adjoint => "adjoint",
        }
    }
}

/// A seeded family of two-valued piecewise-constant fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub low: f64,
    pub high: f64,
    pub cell: [f64; 3],
    pub members: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lx: 5.0, lv: 9.0, nx: 192, nv: 192 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// `dt = cfl · Δx / Lv`.
    pub cfl: f64,
    pub w0_cells: f64,
    pub diffusion: DiffusionScheme,
    pub interpolation: Interpolation,
    pub diffusion_tol: f64,
    pub deterministic: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            cfl: 1.0,
            w0_cells: 3.0,
            diffusion: DiffusionScheme::CrankNicolson,
            interpolation: Interpolation::ClippedCubic,
            diffusion_tol: 1e-10,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub source: [f64; 2],
    pub t_end: f64,
    pub mass_tol: f64,
    /// Checked only for constant fields.
    pub oracle_tol: f64,
    pub export: bool,
    /// Times `(t0, t1, t2)` of an optional Chapman–Kolmogorov check.
    pub chapman_kolmogorov: Option<[f64; 3]>,
    pub ck_tol: f64,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            source: [0.0, 0.0],
            t_end: 1.0,
            mass_tol: 1e-6,
            oracle_tol: 0.02,
            export: true,
            chapman_kolmogorov: None,
            ck_tol: 2e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsParams {
    pub e_max: f64,
    pub per_axis: usize,
    pub rho0: f64,
    /// Lattice size per axis of the near-diagonal sample set.
    pub near_diagonal_samples: usize,
    /// Relative slack allowed when checking the fitted envelopes.
    pub rel_tol: f64,
    pub mass_tol: f64,
}

impl Default for BoundsParams {
    fn default() -> Self {
        Self { e_max: 8.0, per_axis: 8, rho0: 0.25, near_diagonal_samples: 9, rel_tol: 1e-9, mass_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GBoundParams {
    pub sources: Vec<[f64; 2]>,
    pub floor: f64,
    /// Largest accepted change of `G(1)` when the log floor halves.
    pub floor_tol: f64,
    pub weight_radius: f64,
    /// Optional expected value, checked for every run.
    pub reference: Option<f64>,
    pub reference_tol: f64,
}

impl Default for GBoundParams {
    fn default() -> Self {
        Self {
            sources: vec![[0.0, 0.0]],
            floor: LOG_FLOOR,
            floor_tol: 1e-3,
            weight_radius: 4.0,
            reference: None,
            reference_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSetParams {
    pub source: [f64; 2],
    pub nash: NashParams,
}

impl Default for LevelSetParams {
    fn default() -> Self {
        Self { source: [0.0, 0.0], nash: NashParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    pub x_bar: Vec<f64>,
    pub v_bar: Vec<f64>,
    pub rho0: f64,
    pub c0: f64,
    /// Defaults to `64 / ρ0²`.
    pub k0: Option<f64>,
    /// Defaults to `ρ0 / 4`.
    pub eta: Option<f64>,
    pub random_per_box: usize,
    pub seed: u64,
    pub write_centres: bool,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            x_bar: vec![0.0],
            v_bar: vec![1.0],
            rho0: 0.25,
            c0: 0.1,
            k0: None,
            eta: None,
            random_per_box: 0,
            seed: 0,
            write_centres: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    pub gap: f64,
    pub dim: usize,
    pub families: Vec<FamilyKind>,
    pub tolerances: Tolerances,
    /// Also fail when a family misses the criticality rates.
    pub require_critical: bool,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            gap: 1.0,
            dim: 1,
            families: vec![FamilyKind::Straight, FamilyKind::LogOscillatory(OscillationParams::default())],
            tolerances: Tolerances::default(),
            require_critical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjointParams {
    pub target: [f64; 2],
    pub points: Vec<[f64; 2]>,
    pub tol: f64,
}

impl Default for AdjointParams {
    fn default() -> Self {
        Self {
            target: [0.0, 0.0],
            points: vec![[0.0, 0.0], [-0.5, 0.3], [0.4, -0.4], [-1.0, 0.8], [0.3, 0.6]],
            tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub field: Option<FieldDescriptor>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub simulate: SimulateParams,
    #[serde(default)]
    pub bounds: BoundsParams,
    #[serde(default)]
    pub g_bound: GBoundParams,
    #[serde(default)]
    pub level_set: LevelSetParams,
    #[serde(default)]
    pub chain: ChainParams,
    #[serde(default)]
    pub trajectories: TrajectoryParams,
    #[serde(default)]
    pub adjoint: AdjointParams,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills in the command and the default field, then checks every
    /// parameter the command will use.
    pub fn resolve(mut self, command: Command, deterministic: bool) -> Result<Self, CliError> {
        match self.command {
            Some(c) if c != command => {
                return invalid(format!("command: config is for '{}' but '{}' was requested", c.name(), command.name()))
            }
            _ => self.command = Some(command),
        }
        if deterministic {
            self.solver.deterministic = true;
        }
        if self.field.is_some() && self.ensemble.is_some() {
            return invalid("field/ensemble: give at most one of the two");
        }
        if self.field.is_none() && self.ensemble.is_none() {
            self.field =
                Some(FieldDescriptor { kind: FieldKind::Constant { value: 1.0 }, seed: 0, map: Default::default() });
        }
        let uses_solver = !matches!(command, Command::Chain | Command::Trajectories);
        if uses_solver {
            self.fields()?;
            let grid = self.grid()?;
            self.solver_config(&grid)?.validate(&grid).map_err(|e| CliError::Config(format!("solver: {e}")))?;
        }
        match command {
            Command::Simulate => {
                let s = &self.simulate;
                if !(s.t_end > 0.0) {
                    return invalid(format!("simulate.t_end: must be positive, got {}", s.t_end));
                }
                if let Some([t0, t1, t2]) = s.chapman_kolmogorov {
                    if !(t0 < t1 && t1 < t2) {
                        return invalid("simulate.chapman_kolmogorov: need t0 < t1 < t2");
                    }
                }
            }
            Command::VerifyBounds => {
                let b = &self.bounds;
                if !(b.e_max > 0.0) || b.per_axis == 0 || b.near_diagonal_samples < 2 {
                    return invalid("bounds: need e_max > 0, per_axis >= 1, near_diagonal_samples >= 2");
                }
                NearDiagonalParams::new(b.rho0, 1.0).map_err(|e| CliError::Config(format!("bounds.rho0: {e}")))?;
            }
            Command::GBound => {
                let g = &self.g_bound;
                if g.sources.is_empty() {
                    return invalid("g_bound.sources: at least one source offset is required");
                }
                if !(g.floor > 0.0) || !(g.weight_radius > 0.0) {
                    return invalid("g_bound: floor and weight_radius must be positive");
                }
            }
            Command::LevelSet => {
                let n = &self.level_set.nash;
                if n.s_grid.is_empty() || n.s_grid.iter().any(|s| !(*s > 0.0)) {
                    return invalid("level_set.nash.s_grid: must be a nonempty list of positive levels");
                }
                if n.stride == 0 {
                    return invalid("level_set.nash.stride: must be at least 1");
                }
                if !(n.weight.radius > 0.0) || !(n.region.hx > 0.0 && n.region.hv > 0.0) {
                    return invalid("level_set.nash: weight radius and region half-widths must be positive");
                }
            }
            Command::Chain => {
                let c = &self.chain;
                if c.x_bar.len() != c.v_bar.len() || c.x_bar.is_empty() {
                    return invalid("chain.x_bar/chain.v_bar: must share a dimension d >= 1");
                }
                let p = NearDiagonalParams::new(c.rho0, c.c0).map_err(|e| CliError::Config(format!("chain: {e}")))?;
                let eta = self.chain.eta.unwrap_or(self.chain.rho0 / 4.0);
                if !(eta > 0.0 && eta <= c.rho0 / 4.0) {
                    return invalid(format!("chain.eta: must lie in (0, rho0/4], got {eta}"));
                }
                let k0 = self.chain.k0.unwrap_or(p.default_k0());
                if !(k0 > 0.0) {
                    return invalid(format!("chain.k0: must be positive, got {k0}"));
                }
                self.chain.eta = Some(eta);
                self.chain.k0 = Some(k0);
            }
            Command::Trajectories => {
                let t = &self.trajectories;
                if t.gap == 0.0 || !t.gap.is_finite() || t.dim == 0 {
                    return invalid("trajectories: need a finite nonzero gap and dim >= 1");
                }
                if t.families.is_empty() {
                    return invalid("trajectories.families: at least one family is required");
                }
            }
            Command::Adjoint => {
                if self.adjoint.points.is_empty() {
                    return invalid("adjoint.points: at least one comparison point is required");
                }
            }
        }
        Ok(self)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let g = self.grid;
        Grid::new(g.lx, g.lv, g.nx, g.nv).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn solver_config(&self, grid: &Grid) -> Result<SolverConfig, CliError> {
        let s = self.solver;
        if !(s.cfl > 0.0) {
            return invalid(format!("solver.cfl: must be positive, got {}", s.cfl));
        }
        let mut cfg = SolverConfig::for_grid(grid, s.cfl);
        cfg.w0_cells = s.w0_cells;
        cfg.diffusion = s.diffusion;
        cfg.interpolation = s.interpolation;
        cfg.diffusion_tol = s.diffusion_tol;
        cfg.deterministic = s.deterministic;
        Ok(cfg)
    }

    /// Labelled coefficient fields: the single field, or every ensemble member.
    pub fn fields(&self) -> Result<Vec<(String, CoefficientField)>, CliError> {
        if let Some(e) = &self.ensemble {
            if e.members == 0 {
                return invalid("ensemble.members: must be at least 1");
            }
            let fields = checkerboard_ensemble(e.low, e.high, e.cell, e.members)
                .map_err(|err| CliError::Config(format!("ensemble: {err}")))?;
            return Ok(fields.into_iter().enumerate().map(|(i, f)| (format!("member-{i}"), f)).collect());
        }
        let d = self.field.clone().expect("resolved config has a field");
        let f = CoefficientField::new(d).map_err(|e| CliError::Config(format!("field: {e}")))?;
        Ok(vec![("field".to_string(), f)])
    }
}
