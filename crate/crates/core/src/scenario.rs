//! Declarative scenario files (TOML) and their translation into model objects.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dde::{History, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::lattice::{LatticeLaw, DEFAULT_LATTICE_STEP};
use crate::rate_policy::{BaseRate, RatePolicy};
use crate::simulator::{HistoryMode, InitialCondition, Sampler, DEFAULT_HISTORY_CELLS};
use crate::strip_measure::{Atom, JumpAtom, JumpMarginal, LinearCoupling, StripMeasure, ThetaAtom, ThetaMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub measure: MeasureSpec,
    pub rate: RateSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: f64,
    pub theta: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaAtomSpec {
    pub weight: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpAtomSpec {
    pub weight: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Atomic { atoms: Vec<AtomSpec> },
    Product { theta: ThetaSpec, jump: JumpSpec },
    /// `z = offset + slope · θ`
    Coupled { theta: ThetaSpec, offset: Vec<f64>, slope: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSpec {
    Dirac { at: f64 },
    Atomic { atoms: Vec<ThetaAtomSpec> },
    Uniform {},
    /// Density `∝ e^{rate·θ}` on `[−1, 0]`.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    Point { z: Vec<f64> },
    Atomic { atoms: Vec<JumpAtomSpec> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// `scale · e^{rate·θ}`
    Exponential { scale: f64, rate: f64 },
}

fn default_beta() -> f64 {
    1.0
}

fn default_dde_step() -> f64 {
    DEFAULT_STEP
}

fn default_history() -> FunctionSpec {
    FunctionSpec::Constant { value: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    ConstantOne {},
    /// `α∞(θ) + M e^{−βt}`
    Separable {
        base: FunctionSpec,
        #[serde(default)]
        m: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// `a e^{−bθ} y(t+θ)/y(t)`, with `η` the delay marginal of the measure.
    Hyperbolic {
        a: f64,
        b: f64,
        #[serde(default = "default_history")]
        history: FunctionSpec,
        #[serde(default = "default_dde_step")]
        dde_step: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySpec {
    #[default]
    Constant,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Law of `U(0)`; the origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<JumpSpec>,
    #[serde(default)]
    pub history: HistorySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerSpec {
    #[default]
    Thinning,
    Inversion,
}

fn default_horizon() -> f64 {
    100.0
}
fn default_n() -> usize {
    1000
}
fn default_workers() -> usize {
    1
}
fn default_lattice_step() -> f64 {
    DEFAULT_LATTICE_STEP
}
fn default_ks_slack() -> f64 {
    1.5
}
fn default_kernel_tol() -> f64 {
    1e-9
}
fn default_tv_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Probe times; `[horizon]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<f64>>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default = "default_lattice_step")]
    pub lattice_step: f64,
    #[serde(default = "default_ks_slack")]
    pub ks_slack: f64,
    #[serde(default = "default_kernel_tol")]
    pub kernel_tol: f64,
    /// Largest admissible total variation against the lattice oracle.
    #[serde(default = "default_tv_tolerance")]
    pub tv_tolerance: f64,
    /// Lattice spacing of `X` for the KS discretisation term; `1` is used
    /// for integer-jump scenarios when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_spacing: Option<f64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            horizon: default_horizon(),
            probes: None,
            n: default_n(),
            seed: 0,
            workers: default_workers(),
            sampler: SamplerSpec::default(),
            lattice_step: default_lattice_step(),
            ks_slack: default_ks_slack(),
            kernel_tol: default_kernel_tol(),
            tv_tolerance: default_tv_tolerance(),
            lattice_spacing: None,
        }
    }
}

/// Command-line overrides of run parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub probes: Option<Vec<f64>>,
    pub workers: Option<usize>,
}

/// Model objects built from a scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub measure: StripMeasure,
    pub policy: RatePolicy,
    pub initial: InitialCondition,
    /// Initial law on `ℤ^N` when the scenario is lattice-admissible.
    pub lattice_initial: Option<LatticeLaw>,
}

fn theta_measure(spec: &ThetaSpec) -> Result<ThetaMeasure> {
    match spec {
        ThetaSpec::Dirac { at } => ThetaMeasure::dirac(*at),
        ThetaSpec::Atomic { atoms } => ThetaMeasure::atomic(
            atoms
                .iter()
                .map(|a| ThetaAtom { weight: a.weight, theta: a.theta })
                .collect(),
        ),
        ThetaSpec::Uniform {} => Ok(ThetaMeasure::uniform()),
        ThetaSpec::Exponential { rate } => ThetaMeasure::exponential(*rate),
    }
}

fn jump_marginal(spec: &JumpSpec) -> Result<JumpMarginal> {
    match spec {
        JumpSpec::Point { z } => JumpMarginal::point(z.clone()),
        JumpSpec::Atomic { atoms } => JumpMarginal::atomic(
            atoms
                .iter()
                .map(|a| JumpAtom { weight: a.weight, z: a.z.clone() })
                .collect(),
        ),
        JumpSpec::UniformBox { lower, upper } => JumpMarginal::uniform_box(lower.clone(), upper.clone()),
        JumpSpec::Gaussian { mean, covariance } => {
            let n = mean.len();
            if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidMeasure(format!("covariance must be {n}×{n}")));
            }
            let flat: Vec<f64> = covariance.iter().flatten().copied().collect();
            JumpMarginal::gaussian(mean.clone(), DMatrix::from_row_slice(n, n, &flat))
        }
    }
}

fn function(spec: &FunctionSpec) -> (f64, f64) {
    match spec {
        FunctionSpec::Constant { value } => (*value, 0.0),
        FunctionSpec::Exponential { scale, rate } => (*scale, *rate),
    }
}

fn lattice_law(law: &JumpMarginal) -> Option<LatticeLaw> {
    let atoms = law.atoms()?;
    if atoms.iter().any(|a| a.z.iter().any(|x| x.fract() != 0.0)) {
        return None;
    }
    LatticeLaw::from_points(law.dim(), atoms.iter().map(|a| (a.z.iter().map(|&x| x as i64).collect(), a.weight))).ok()
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Hex SHA-256 of the canonical JSON form. The worker count is left out
    /// since results do not depend on it.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.run.workers = 1;
        let canonical = serde_json::to_string(&s).expect("scenario serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn probes(&self) -> Vec<f64> {
        self.run.probes.clone().unwrap_or_else(|| vec![self.run.horizon])
    }

    pub fn horizon(&self) -> f64 {
        self.probes().iter().copied().fold(self.run.horizon, f64::max)
    }

    pub fn sampler(&self) -> Sampler {
        match self.run.sampler {
            SamplerSpec::Thinning => Sampler::Thinning,
            SamplerSpec::Inversion => Sampler::Inversion,
        }
    }

    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut s = self.clone();
        if let Some(seed) = o.seed {
            s.run.seed = seed;
        }
        if let Some(n) = o.n {
            s.run.n = n;
        }
        if let Some(w) = o.workers {
            s.run.workers = w;
        }
        if let Some(h) = o.horizon {
            s.run.horizon = h;
            if o.probes.is_none() {
                s.run.probes = None;
            }
        }
        if let Some(p) = &o.probes {
            s.run.horizon = p.iter().copied().fold(0.0, f64::max);
            s.run.probes = Some(p.clone());
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if !(run.horizon > 0.0 && run.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", run.horizon)));
        }
        let probes = self.probes();
        if probes.is_empty() || probes.iter().any(|p| !(*p > 0.0)) || probes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("probes must be positive and increasing, got {probes:?}")));
        }
        if run.n == 0 || run.workers == 0 {
            return Err(Error::Config("n and workers must be at least 1".into()));
        }
        if !(run.ks_slack >= 1.0) || !(run.kernel_tol >= 0.0) || !(run.lattice_step > 0.0) {
            return Err(Error::Config("invalid tolerance or step in [run]".into()));
        }
        Ok(())
    }

    /// Builds measure, rate policy and initial condition; hyperbolic rates
    /// solve their delay equation over the scenario horizon.
    pub fn build(&self) -> Result<Model> {
        let measure = match &self.measure {
            MeasureSpec::Atomic { atoms } => StripMeasure::atomic(
                self.dimension,
                atoms
                    .iter()
                    .map(|a| Atom { weight: a.weight, theta: a.theta, z: a.z.clone() })
                    .collect(),
            )?,
            MeasureSpec::Product { theta, jump } => StripMeasure::product(theta_measure(theta)?, jump_marginal(jump)?)?,
            MeasureSpec::Coupled { theta, offset, slope } => StripMeasure::coupled(
                theta_measure(theta)?,
                LinearCoupling { offset: offset.clone(), slope: slope.clone() },
            )?,
        };
        if measure.dim() != self.dimension {
            return Err(Error::Config(format!(
                "measure is {}-dimensional, scenario declares {}",
                measure.dim(),
                self.dimension
            )));
        }
        let policy = match &self.rate {
            RateSpec::ConstantOne {} => RatePolicy::ConstantOne,
            RateSpec::Separable { base, m, beta } => {
                let base = match function(base) {
                    (c, r) if r == 0.0 => BaseRate::Constant(c),
                    (scale, rate) => BaseRate::Exponential { scale, rate },
                };
                RatePolicy::separable(base, *m, *beta)?
            }
            RateSpec::Hyperbolic { a, b, history, dde_step } => {
                let history = match function(history) {
                    (c, r) if r == 0.0 => History::Constant(c),
                    (scale, rate) => History::Exponential { scale, rate },
                };
                RatePolicy::hyperbolic(*a, *b, measure.theta_marginal(), history, self.horizon(), *dde_step)?
            }
        };
        let law = match &self.initial.law {
            Some(spec) => jump_marginal(spec)?,
            None => JumpMarginal::point(vec![0.0; self.dimension])?,
        };
        if law.dim() != self.dimension {
            return Err(Error::Config(format!(
                "initial law is {}-dimensional, scenario declares {}",
                law.dim(),
                self.dimension
            )));
        }
        let mode = match self.initial.history {
            HistorySpec::Constant => HistoryMode::Constant,
            HistorySpec::Independent => HistoryMode::Independent {
                cells: self.initial.cells.unwrap_or(DEFAULT_HISTORY_CELLS),
            },
        };
        let integer_jumps = measure
            .atoms()
            .is_some_and(|atoms| atoms.iter().all(|a| a.z.iter().all(|x| x.fract() == 0.0)));
        let lattice_initial = if integer_jumps { lattice_law(&law) } else { None };
        Ok(Model {
            measure,
            policy,
            initial: InitialCondition { law, mode },
            lattice_initial,
        })
    }

    /// Lattice spacing used for the KS discretisation allowance.
    pub fn lattice_spacing(&self, model: &Model) -> Option<f64> {
        self.run
            .lattice_spacing
            .or_else(|| model.lattice_initial.as_ref().map(|_| 1.0))
    }
}
