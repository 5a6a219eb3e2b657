//! Experiment configuration (one JSON document) and the exponent gates the
//! existence theory imposes on each model family.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crystal::{validate_systems, BurgersPair, SlipSystemSet};
use crate::energy::{ElasticDensity, Model, ModelParams};
use crate::error::{Error, Result};
use crate::grid::{DisplacementField, GridSpec, SlipField};
use crate::io::{read_displacement_csv, read_slip_csv, SystemsDoc};
use crate::linalg::Vec3;
use crate::solve::{Boundary, SolverConfig};

/// `r` with `1/r = 1/p + 1/q`: the integrability of products of an `L^p`
/// and an `L^q` factor.
pub fn holder_exponent(p: f64, q: f64) -> f64 {
    1.0 / (1.0 / p + 1.0 / q)
}

/// Which hypothesis set a model has to satisfy.
fn unreadable(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    /// Nonlinear elasticity: `p > 2` and `q > p/(p−2)`.
    Nonlinear,
    /// Linearised elasticity: `p > 1`.
    Linear,
    /// Evaluation-only functionals: `p ≥ 1`.
    Evaluate,
}

impl Gate {
    pub fn for_model(model: Model) -> Self {
        match model {
            Model::Nonlinear => Gate::Nonlinear,
            Model::Linear | Model::SinglePlaneLinear => Gate::Linear,
            _ => Gate::Evaluate,
        }
    }

    pub fn check(self, p: f64, q: f64) -> Result<()> {
        match self {
            Gate::Nonlinear => {
                if !(p > 2.0) {
                    return Err(Error::Config(format!("nonlinear model requires p > 2 (got p = {p})")));
                }
                let qmin = p / (p - 2.0);
                if !(q > qmin) {
                    return Err(Error::Config(format!("nonlinear model requires q > p/(p-2) = {qmin} (got q = {q})")));
                }
            }
            Gate::Linear => {
                if !(p > 1.0) {
                    return Err(Error::Config(format!("linear model requires p > 1 (got p = {p})")));
                }
            }
            Gate::Evaluate => {
                if !(p >= 1.0) {
                    return Err(Error::Config(format!("requires p >= 1 (got p = {p})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemsSpec {
    Preset(String),
    Inline(SystemsDoc),
}

impl Default for SystemsSpec {
    fn default() -> Self {
        SystemsSpec::Preset("fcc4".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateSection {
    #[serde(default = "defaults::level")]
    pub level: u32,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// Inclusive level range of the convergence study.
    #[serde(default = "defaults::levels")]
    pub levels: [u32; 2],
}

impl Default for LaminateSection {
    fn default() -> Self {
        Self { level: defaults::level(), lambda: defaults::lambda(), levels: defaults::levels() }
    }
}

mod defaults {
    use std::path::PathBuf;
    pub fn level() -> u32 {
        3
    }
    pub fn lambda() -> f64 {
        0.5
    }
    pub fn levels() -> [u32; 2] {
        [3, 7]
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn grid() -> crate::grid::GridSpec<f64> {
        crate::grid::GridSpec { origin: [0.0; 3], extents: [1.0; 3], nodes: [9, 9, 9] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub systems: SystemsSpec,
    #[serde(default = "defaults::grid")]
    pub grid: GridSpec<f64>,
    #[serde(default)]
    pub params: ModelParams<f64>,
    #[serde(default)]
    pub density: ElasticDensity<f64>,
    /// Burgers pair `[b1, b2]` per plane; the first two listed Burgers
    /// vectors of each plane by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[[f64; 3]; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig<f64>>,
    #[serde(default)]
    pub laminate: LaminateSection,
    #[serde(default)]
    pub fields: FieldPaths,
    /// Seed of every randomised step (solver initialisation, oracle suites).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            systems: SystemsSpec::default(),
            grid: defaults::grid(),
            params: ModelParams::default(),
            density: ElasticDensity::default(),
            pairs: None,
            solver: None,
            laminate: LaminateSection::default(),
            fields: FieldPaths::default(),
            seed: 0,
            out: defaults::out(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config; relative field paths are resolved against the
    /// directory of the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.fields.slip, &mut cfg.fields.displacement].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn systems(&self) -> Result<SlipSystemSet<f64>> {
        let set = match &self.systems {
            SystemsSpec::Preset(name) => {
                SlipSystemSet::preset(name).ok_or_else(|| Error::Config(format!("unknown systems preset '{name}'")))?
            }
            SystemsSpec::Inline(doc) => doc.to_systems(),
        };
        if set.is_empty() {
            return Err(Error::Config("no slip planes".into()));
        }
        Ok(set)
    }

    pub fn pairs(&self, set: &SlipSystemSet<f64>) -> Result<Vec<BurgersPair<f64>>> {
        match &self.pairs {
            None => set.default_pairs(),
            Some(ps) => {
                if ps.len() != set.len() {
                    return Err(Error::Config(format!("{} Burgers pairs for {} planes", ps.len(), set.len())));
                }
                ps.iter().map(|[a, b]| BurgersPair::new(Vec3::from_f64(*a), Vec3::from_f64(*b))).collect()
            }
        }
    }

    /// Structural validation plus the exponent gate of `gate`.
    pub fn validate(&self, gate: Gate) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.params.validate()?;
        self.density.validate()?;
        let set = self.systems()?;
        let rep = validate_systems(&set);
        if !rep.non_unit_normals.is_empty() || !rep.non_orthogonal_burgers.is_empty() {
            return Err(Error::Config("slip systems need unit normals and in-plane Burgers vectors".into()));
        }
        self.pairs(&set).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(s) = &self.solver {
            let mut s = s.clone();
            s.params = self.params.clone();
            s.validate()?;
        }
        gate.check(self.params.p, self.density.q)
    }

    pub fn validate_model(&self, model: Model) -> Result<()> {
        self.validate(Gate::for_model(model))?;
        if model == Model::Regularized && !(self.params.eps_reg > 0.0) {
            return Err(Error::Config("regularized model requires eps_reg > 0".into()));
        }
        Ok(())
    }

    /// The solver section with the top-level parameters and seed applied;
    /// zero shear when the section is absent.
    pub fn solver_config(&self) -> SolverConfig<f64> {
        let mut s = self.solver.clone().unwrap_or_else(|| SolverConfig::new(self.params.clone(), Boundary::shear(0.0)));
        s.params = self.params.clone();
        s.seed = self.seed;
        s
    }

    /// The slip field from `fields.slip`, or zero.
    pub fn slip_field(&self) -> Result<SlipField<f64>> {
        let set = self.systems()?;
        match &self.fields.slip {
            None => Ok(SlipField::zeros(&self.grid, &set)),
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| unreadable(p, e))?;
                read_slip_csv(&self.grid, &set, f)
            }
        }
    }

    /// The displacement from `fields.displacement`, or zero.
    pub fn displacement(&self) -> Result<DisplacementField<f64>> {
        match &self.fields.displacement {
            None => Ok(DisplacementField::zeros(&self.grid)),
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| unreadable(p, e))?;
                read_displacement_csv(&self.grid, f)
            }
        }
    }
}
