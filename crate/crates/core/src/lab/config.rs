use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{check_compatibility, check_parabolicity, ModelCoefficients};
use crate::error::{Error, Result};
use crate::field::SpaceTimeGrid;
use crate::norms::PairPolicy;
use crate::pipeline::Domain;
use crate::rng::SeedSpec;
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HalflineLemma,
    Stability,
    Compatibility,
    SchauderRatio,
    Continuity,
    Pipeline,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::HalflineLemma,
        ExperimentKind::Stability,
        ExperimentKind::Compatibility,
        ExperimentKind::SchauderRatio,
        ExperimentKind::Continuity,
        ExperimentKind::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::HalflineLemma => "halfline_lemma",
            ExperimentKind::Stability => "stability",
            ExperimentKind::Compatibility => "compatibility",
            ExperimentKind::SchauderRatio => "schauder_ratio",
            ExperimentKind::Continuity => "continuity",
            ExperimentKind::Pipeline => "pipeline",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Bundled default configuration.
    pub fn builtin(self) -> &'static str {
        match self {
            ExperimentKind::HalflineLemma => include_str!("../../configs/halfline_lemma.toml"),
            ExperimentKind::Stability => include_str!("../../configs/stability.toml"),
            ExperimentKind::Compatibility => include_str!("../../configs/compatibility.toml"),
            ExperimentKind::SchauderRatio => include_str!("../../configs/schauder_ratio.toml"),
            ExperimentKind::Continuity => include_str!("../../configs/continuity.toml"),
            ExperimentKind::Pipeline => include_str!("../../configs/pipeline.toml"),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub x1_max: f64,
    pub x1_cells: usize,
    #[serde(default = "one")]
    pub xp_max: f64,
    #[serde(default = "one_usize")]
    pub xp_cells: usize,
    pub t_final: f64,
    pub steps: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<SpaceTimeGrid<f64>> {
        SpaceTimeGrid::new(self.dim, self.x1_max, self.x1_cells, self.xp_max, self.xp_cells, self.t_final, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    /// Symmetric diffusion matrix `ā`.
    pub a: [[f64; 2]; 2],
    /// One `[σ̄^{1k}, σ̄^{2k}]` row per noise mode.
    pub sigma: Vec<[f64; 2]>,
    pub kappa: f64,
    pub big_k: f64,
}

impl CoefficientsConfig {
    pub fn build(&self, dim: usize) -> Result<ModelCoefficients<f64>> {
        if self.sigma.is_empty() {
            return Err(Error::Config("coefficients.sigma needs at least one mode".into()));
        }
        ModelCoefficients::constant(dim, self.a, self.sigma.clone(), self.kappa, self.big_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Boundary data `h(t) = coef·t^p` (`p = 1 + α/2` in the lemma sweep).
    Power,
    /// `f = (c0 + t/T)(1 + ay·cos 2πx'/L')(1 - x1/L)`, `g^k = g_amp·(x1/L)(1 - x1/L)(1 + ay·sin 2πx'/L')`.
    Ramp,
    /// `f = f_amp·sin(2πk x1/L)`, `g^k = g_amp·cos(2πk x1/L)`; meant for the periodic line.
    Sine,
    /// Seeded draws of the ramp amplitudes, one draw per index.
    RandomRamp,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub family: Family,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "two")]
    pub gamma: f64,
}

impl DataConfig {
    pub fn param(&self, name: &str, default: f64) -> f64 {
        self.params.get(name).copied().unwrap_or(default)
    }

    fn allowed(&self) -> &'static [&'static str] {
        match self.family {
            Family::Power => &["coef"],
            Family::Ramp => &["c0", "ay", "g_amp"],
            Family::Sine => &["f_amp", "g_amp", "k"],
            Family::RandomRamp => &["scale"],
            Family::Zero => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub salt: u64,
}

impl EnsembleConfig {
    pub fn seed_spec(&self) -> SeedSpec {
        SeedSpec::new(self.seed, self.salt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    pub levels: usize,
    #[serde(default = "two_usize")]
    pub space: usize,
    #[serde(default = "four_usize")]
    pub time: usize,
    #[serde(default)]
    pub refine_tangential: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            levels: 1,
            space: 2,
            time: 4,
            refine_tangential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "one_usize")]
    pub substeps: usize,
    #[serde(default = "default_cfl")]
    pub c_cfl: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            substeps: 1,
            c_cfl: default_cfl(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions<f64> {
        SolverOptions::new(self.substeps, self.c_cfl)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalflineConfig {
    /// Largest `y` of the boundary-recovery sweep; halved at each level.
    #[serde(default = "default_y_min")]
    pub recovery_y_min: f64,
    #[serde(default = "four_usize")]
    pub recovery_levels: usize,
    #[serde(default = "default_recovery_times")]
    pub recovery_times: usize,
    #[serde(default = "exhaustive")]
    pub policy: PairPolicy,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl Default for HalflineConfig {
    fn default() -> Self {
        Self {
            recovery_y_min: default_y_min(),
            recovery_levels: 4,
            recovery_times: default_recovery_times(),
            policy: exhaustive(),
            rel_tol: default_rel_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityPair {
    /// `(t², t³)`.
    Deterministic,
    /// `(ξt², 0.9ξt²)` with `ξ ~ N(0, 1)` per path.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub pairs: Vec<StabilityPair>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatibilityConfig {
    /// Noise rows of the variant with `σ̄^{1k} ≠ 0`.
    pub violating_sigma: Vec<[f64; 2]>,
    /// Profile depths `δ = 2^{-k}·x1_max` for `k` in this inclusive range.
    #[serde(default = "default_delta_exponents")]
    pub delta_exponents: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchauderConfig {
    pub draws: usize,
    #[serde(default = "dyadic")]
    pub policy: PairPolicy,
    #[serde(default = "two")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub s: f64,
    pub s0: f64,
    pub iterations: usize,
    #[serde(default = "periodic")]
    pub domain: Domain,
    /// Allowed relative spread `max/min - 1` of the ratios over iterations 2..=6.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: GridConfig,
    pub coefficients: Option<CoefficientsConfig>,
    pub data: DataConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub halfline: Option<HalflineConfig>,
    pub stability: Option<StabilityConfig>,
    pub compatibility: Option<CompatibilityConfig>,
    pub schauder: Option<SchauderConfig>,
    pub continuity: Option<ContinuityConfig>,
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub salt: Option<u64>,
    pub levels: Option<usize>,
    pub paths: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn builtin(kind: ExperimentKind) -> Self {
        Self::from_toml(kind.builtin()).expect("bundled config parses")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.ensemble.seed = seed;
        }
        if let Some(salt) = o.salt {
            self.ensemble.salt = salt;
        }
        if let Some(levels) = o.levels {
            self.refinement.levels = levels;
        }
        if let Some(paths) = o.paths {
            self.ensemble.paths = paths;
        }
    }

    pub fn coefficients(&self) -> Result<ModelCoefficients<f64>> {
        self.coefficients
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} needs a [coefficients] block", self.experiment)))?
            .build(self.grid.dim)
    }

    pub fn halfline(&self) -> HalflineConfig {
        self.halfline.clone().unwrap_or_default()
    }

    /// Grids of the refinement sequence, coarsest first.
    pub fn level_grids(&self) -> Result<Vec<SpaceTimeGrid<f64>>> {
        let base = self.grid.build()?;
        let r = &self.refinement;
        let mut out = vec![base];
        for _ in 1..r.levels {
            let next = out.last().unwrap().refined(r.space, r.time, r.refine_tangential);
            out.push(next);
        }
        Ok(out)
    }

    /// Full check run before any compute.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.grid.build()?;
        if self.refinement.levels == 0 || self.refinement.space == 0 || self.refinement.time == 0 {
            return cfg("refinement levels and factors must be positive".into());
        }
        if self.ensemble.paths == 0 {
            return cfg("ensemble.paths must be positive".into());
        }
        if !(self.data.gamma >= 2.0) {
            return cfg(format!("data.gamma must be >= 2, got {}", self.data.gamma));
        }
        if self.data.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) || self.data.alphas.is_empty() {
            return cfg(format!("data.alphas must lie in (0, 1): {:?}", self.data.alphas));
        }
        let allowed = self.data.allowed();
        if let Some(bad) = self.data.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return cfg(format!("unknown parameter {bad:?} for family {:?} (allowed: {allowed:?})", self.data.family));
        }
        if self.solver.substeps == 0 || !(self.solver.c_cfl > 0.0) {
            return cfg("solver.substeps and solver.c_cfl must be positive".into());
        }
        let families: &[Family] = match self.experiment {
            ExperimentKind::HalflineLemma => &[Family::Power, Family::Zero],
            ExperimentKind::Stability => &[Family::Power, Family::Zero],
            ExperimentKind::Compatibility | ExperimentKind::Pipeline => &[Family::Ramp, Family::Zero],
            ExperimentKind::SchauderRatio => &[Family::RandomRamp, Family::Ramp, Family::Zero],
            ExperimentKind::Continuity => &[Family::Sine, Family::Ramp, Family::Zero],
        };
        if !families.contains(&self.data.family) {
            return cfg(format!("family {:?} not supported by {} (use one of {families:?})", self.data.family, self.experiment));
        }
        let needs_line = matches!(
            self.experiment,
            ExperimentKind::HalflineLemma | ExperimentKind::Stability | ExperimentKind::Continuity
        );
        if needs_line && self.grid.dim != 1 {
            return cfg(format!("{} needs grid.dim = 1", self.experiment));
        }
        if matches!(self.experiment, ExperimentKind::Compatibility | ExperimentKind::Pipeline) && self.grid.dim != 2 {
            return cfg(format!("{} needs grid.dim = 2", self.experiment));
        }
        let spde = !matches!(self.experiment, ExperimentKind::HalflineLemma | ExperimentKind::Stability);
        if spde {
            let c = self.coefficients()?;
            let p = check_parabolicity(&c);
            if !p.pass {
                return cfg(format!(
                    "coefficients fail parabolicity (lower margin {:e}, upper margin {:e})",
                    p.lower_margin, p.upper_margin
                ));
            }
        }
        match self.experiment {
            ExperimentKind::HalflineLemma => {
                let h = self.halfline();
                if !(h.recovery_y_min > 0.0) || h.recovery_levels < 2 || h.recovery_times == 0 {
                    return cfg("halfline recovery needs y_min > 0, >= 2 levels and >= 1 time".into());
                }
            }
            ExperimentKind::Stability => {
                let s = self
                    .stability
                    .as_ref()
                    .ok_or_else(|| Error::Config("stability needs a [stability] block".into()))?;
                if s.pairs.is_empty() {
                    return cfg("stability.pairs is empty".into());
                }
            }
            ExperimentKind::Compatibility => {
                let c = self
                    .compatibility
                    .as_ref()
                    .ok_or_else(|| Error::Config("compatibility needs a [compatibility] block".into()))?;
                if !check_compatibility(&self.coefficients()?).pass {
                    return cfg("the tangential variant has a nonzero normal noise component".into());
                }
                let v = self.violating_coefficients(c)?;
                if check_compatibility(&v).pass {
                    return cfg("the violating variant has no normal noise component".into());
                }
                if !check_parabolicity(&v).pass {
                    return cfg("the violating variant fails parabolicity".into());
                }
                let [lo, hi] = c.delta_exponents;
                if lo == 0 || lo > hi || !self.grid.x1_cells.is_multiple_of(1usize << hi) {
                    return cfg(format!("delta exponents {lo}..={hi} must divide x1_cells = {}", self.grid.x1_cells));
                }
            }
            ExperimentKind::SchauderRatio => {
                let s = self
                    .schauder
                    .as_ref()
                    .ok_or_else(|| Error::Config("schauder_ratio needs a [schauder] block".into()))?;
                if s.draws == 0 {
                    return cfg("schauder.draws must be positive".into());
                }
                if !check_compatibility(&self.coefficients()?).pass {
                    return cfg("schauder_ratio requires tangential noise (σ̄^{1k} = 0)".into());
                }
            }
            ExperimentKind::Continuity => {
                let c = self
                    .continuity
                    .as_ref()
                    .ok_or_else(|| Error::Config("continuity needs a [continuity] block".into()))?;
                if !(0.0..=1.0).contains(&c.s) || !(0.0..=1.0).contains(&c.s0) {
                    return cfg("continuity s and s0 must lie in [0, 1]".into());
                }
                if c.iterations < 2 {
                    return cfg("continuity needs at least 2 iterations".into());
                }
                let blended = self.coefficients()?.blended(c.s0)?;
                if !check_parabolicity(&blended).pass {
                    return cfg(format!("operator at s0 = {} fails parabolicity", c.s0));
                }
            }
            ExperimentKind::Pipeline => {
                if self.data.param("g_amp", 0.0) != 0.0 {
                    return cfg("pipeline requires g = 0 (set data.params.g_amp = 0)".into());
                }
            }
        }
        Ok(())
    }

    pub fn violating_coefficients(&self, c: &CompatibilityConfig) -> Result<ModelCoefficients<f64>> {
        let base = self
            .coefficients
            .as_ref()
            .ok_or_else(|| Error::Config("compatibility needs a [coefficients] block".into()))?;
        CoefficientsConfig {
            sigma: c.violating_sigma.clone(),
            ..base.clone()
        }
        .build(self.grid.dim)
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}
fn two_usize() -> usize {
    2
}
fn four_usize() -> usize {
    4
}
fn default_cfl() -> f64 {
    0.25
}
fn default_alphas() -> Vec<f64> {
    vec![0.5]
}
fn default_y_min() -> f64 {
    0.1
}
fn default_recovery_times() -> usize {
    64
}
fn default_rel_tol() -> f64 {
    1e-10
}
fn default_tolerance() -> f64 {
    1.05
}
fn default_delta_exponents() -> [u32; 2] {
    [3, 7]
}
fn default_spread() -> f64 {
    0.25
}
fn exhaustive() -> PairPolicy {
    PairPolicy::Exhaustive
}
fn dyadic() -> PairPolicy {
    PairPolicy::Dyadic
}
fn periodic() -> Domain {
    Domain::PeriodicLine
}
