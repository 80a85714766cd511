//! Probability measures on the strip `[-1, 0] × R^N`.
//!
//! A [`StripMeasure`] couples a delay offset `θ` with a jump `z`. It can be
//! given by explicit atoms, as a product of a delay marginal and a jump
//! marginal, or as a delay marginal pushed through a deterministic map
//! `θ ↦ z(θ)`. Moments against `θ`-dependent weights are computed in closed
//! form wherever the delay marginal is atomic, otherwise by Gauss–Legendre
//! quadrature on `[-1, 0]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre};

pub type ThetaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Atomic weights smaller than this are rejected at construction.
pub const MIN_ATOM_WEIGHT: f64 = 1e-15;
/// Tolerance on the total mass of atomic measures.
pub const MASS_TOL: f64 = 1e-12;
/// Default Gauss–Legendre node count for density delay marginals.
pub const DEFAULT_NODES: usize = 64;

fn check_theta(theta: f64) -> Result<()> {
    if !(-1.0..=0.0).contains(&theta) || theta.is_nan() {
        return Err(Error::InvalidMeasure(format!(
            "delay offset {theta} outside [-1, 0]"
        )));
    }
    Ok(())
}

fn check_weights<'a>(weights: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < MIN_ATOM_WEIGHT {
            return Err(Error::InvalidMeasure(format!(
                "atom weight {w} is below {MIN_ATOM_WEIGHT}"
            )));
        }
        total += w;
    }
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidMeasure(format!(
            "atom weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Draws an index from unnormalised weights produced by `weight(i)`.
fn categorical<R: Rng + ?Sized>(rng: &mut R, len: usize, weight: impl Fn(usize) -> f64) -> usize {
    if len == 1 {
        // keep the stream position independent of the atom count
        let _: f64 = rng.random();
        return 0;
    }
    let total: f64 = (0..len).map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    for i in 0..len {
        let w = weight(i);
        if u < w {
            return i;
        }
        u -= w;
    }
    len - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaAtom {
    pub weight: f64,
    pub theta: f64,
}

/// Density delay marginal on `[-1, 0]`, normalised at construction.
#[derive(Clone)]
pub struct ThetaDensity {
    label: String,
    density: ThetaFn,
    rule: GaussLegendre,
    sup: f64,
}

impl fmt::Debug for ThetaDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThetaDensity")
            .field("label", &self.label)
            .field("nodes", &self.rule.len())
            .field("sup", &self.sup)
            .finish()
    }
}

impl ThetaDensity {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        (self.density)(theta)
    }
}

/// Probability measure on the delay interval `[-1, 0]`.
#[derive(Debug, Clone)]
pub enum ThetaMeasure {
    Atomic(Vec<ThetaAtom>),
    Density(ThetaDensity),
}

impl ThetaMeasure {
    pub fn atomic(atoms: Vec<ThetaAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no delay atoms".into()));
        }
        for a in &atoms {
            check_theta(a.theta)?;
        }
        check_weights(atoms.iter().map(|a| &a.weight))?;
        Ok(ThetaMeasure::Atomic(atoms))
    }

    pub fn dirac(theta: f64) -> Result<Self> {
        Self::atomic(vec![ThetaAtom { weight: 1.0, theta }])
    }

    /// Density proportional to `f` on `[-1, 0]`; `f` must be nonnegative and
    /// have positive integral.
    pub fn density(label: impl Into<String>, f: ThetaFn, nodes: usize) -> Result<Self> {
        let nodes = nodes.max(2);
        let mass = quadrature::integrate_adaptive(&*f, nodes)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "delay density has nonpositive mass {mass}"
            )));
        }
        let rule = GaussLegendre::new(nodes);
        if rule.nodes.iter().any(|&x| f(x) < 0.0) {
            return Err(Error::InvalidMeasure("delay density takes negative values".into()));
        }
        let raw = f.clone();
        let density: ThetaFn = Arc::new(move |x| raw(x) / mass);
        let sup = quadrature::maximize(&*density, -1.0, 0.0) * (1.0 + 1e-9);
        Ok(ThetaMeasure::Density(ThetaDensity {
            label: label.into(),
            density,
            rule,
            sup,
        }))
    }

    pub fn uniform() -> Self {
        Self::density("uniform", Arc::new(|_| 1.0), DEFAULT_NODES)
            .expect("uniform density is valid")
    }

    /// Density proportional to `exp(rate·θ)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::density(
            format!("exponential({rate})"),
            Arc::new(move |x: f64| (rate * x).exp()),
            DEFAULT_NODES,
        )
    }

    pub fn atoms(&self) -> Option<&[ThetaAtom]> {
        match self {
            ThetaMeasure::Atomic(a) => Some(a),
            ThetaMeasure::Density(_) => None,
        }
    }

    /// `∫ g dη`, exact for atoms and adaptive quadrature for densities.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            ThetaMeasure::Atomic(atoms) => Ok(atoms.iter().map(|a| a.weight * g(a.theta)).sum()),
            ThetaMeasure::Density(d) => {
                quadrature::integrate_adaptive(|x| d.eval(x) * g(x), d.rule.len())
            }
        }
    }

    /// `∫ g dη` with the stored fixed rule; used on hot paths.
    pub fn integrate_fixed(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            ThetaMeasure::Atomic(atoms) => atoms.iter().map(|a| a.weight * g(a.theta)).sum(),
            ThetaMeasure::Density(d) => d.rule.integrate(|x| d.eval(x) * g(x)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ThetaMeasure::Atomic(atoms) => atoms[categorical(rng, atoms.len(), |i| atoms[i].weight)].theta,
            ThetaMeasure::Density(d) => loop {
                let theta = -rng.random::<f64>();
                if rng.random::<f64>() * d.sup <= d.eval(theta) {
                    return theta;
                }
            },
        }
    }

    /// Normalised `g·η` together with its mass `∫ g dη`.
    pub fn tilted(&self, g: ThetaFn) -> Result<(ThetaMeasure, f64)> {
        match self {
            ThetaMeasure::Atomic(atoms) => {
                let mass: f64 = atoms.iter().map(|a| a.weight * g(a.theta)).sum();
                if !(mass > 0.0) {
                    return Err(Error::InvalidMeasure("tilted measure has no mass".into()));
                }
                let atoms = atoms
                    .iter()
                    .map(|a| ThetaAtom {
                        weight: a.weight * g(a.theta) / mass,
                        theta: a.theta,
                    })
                    .collect();
                Ok((ThetaMeasure::Atomic(atoms), mass))
            }
            ThetaMeasure::Density(d) => {
                let mass = self.integrate(&*g)?;
                let base = d.density.clone();
                let label = format!("tilted {}", d.label);
                let tilted = ThetaMeasure::density(label, Arc::new(move |x| base(x) * g(x)), d.rule.len())?;
                Ok((tilted, mass))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub weight: f64,
    pub z: Vec<f64>,
}

/// Law of the jump `z` in product-form strip measures.
#[derive(Debug, Clone)]
pub enum JumpMarginal {
    Atomic(Vec<JumpAtom>),
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
}

impl JumpMarginal {
    pub fn atomic(atoms: Vec<JumpAtom>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(|a| a.z.len())
            .ok_or_else(|| Error::InvalidMeasure("no jump atoms".into()))?;
        if dim == 0 || atoms.iter().any(|a| a.z.len() != dim) {
            return Err(Error::InvalidMeasure("jump atoms have inconsistent dimension".into()));
        }
        if atoms.iter().flat_map(|a| &a.z).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite jump atom".into()));
        }
        check_weights(atoms.iter().map(|a| &a.weight))?;
        Ok(JumpMarginal::Atomic(atoms))
    }

    pub fn point(z: Vec<f64>) -> Result<Self> {
        Self::atomic(vec![JumpAtom { weight: 1.0, z }])
    }

    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidMeasure("uniform box bounds mismatch".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::InvalidMeasure("uniform box needs lower <= upper".into()));
        }
        Ok(JumpMarginal::UniformBox { lower, upper })
    }

    pub fn gaussian(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || covariance.shape() != (n, n) {
            return Err(Error::InvalidMeasure("gaussian mean/covariance shape mismatch".into()));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 * covariance.abs().max().max(1.0) {
            return Err(Error::InvalidMeasure("gaussian covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(covariance.clone());
        let scale = eig.eigenvalues.abs().max().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::InvalidMeasure("gaussian covariance is not PSD".into()));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt);
        Ok(JumpMarginal::Gaussian {
            mean,
            covariance,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            JumpMarginal::Atomic(a) => a[0].z.len(),
            JumpMarginal::UniformBox { lower, .. } => lower.len(),
            JumpMarginal::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            JumpMarginal::Atomic(atoms) => {
                let mut m = DVector::zeros(self.dim());
                for a in atoms {
                    m += DVector::from_column_slice(&a.z) * a.weight;
                }
                m
            }
            JumpMarginal::UniformBox { lower, upper } => {
                DVector::from_iterator(lower.len(), lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)))
            }
            JumpMarginal::Gaussian { mean, .. } => DVector::from_column_slice(mean),
        }
    }

    /// Raw second moment `E[z zᵀ]`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        match self {
            JumpMarginal::Atomic(atoms) => {
                let n = self.dim();
                let mut m = DMatrix::zeros(n, n);
                for a in atoms {
                    let z = DVector::from_column_slice(&a.z);
                    m += &z * z.transpose() * a.weight;
                }
                m
            }
            JumpMarginal::UniformBox { lower, upper } => {
                let mean = self.mean();
                let mut m = &mean * mean.transpose();
                for i in 0..lower.len() {
                    let (l, u) = (lower[i], upper[i]);
                    m[(i, i)] = (l * l + l * u + u * u) / 3.0;
                }
                m
            }
            JumpMarginal::Gaussian {
                mean, covariance, ..
            } => {
                let mean = DVector::from_column_slice(mean);
                covariance + &mean * mean.transpose()
            }
        }
    }

    pub fn atoms(&self) -> Option<&[JumpAtom]> {
        match self {
            JumpMarginal::Atomic(a) => Some(a),
            _ => None,
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            JumpMarginal::Atomic(atoms) => {
                let i = categorical(rng, atoms.len(), |i| atoms[i].weight);
                out.copy_from_slice(&atoms[i].z);
            }
            JumpMarginal::UniformBox { lower, upper } => {
                for ((o, l), u) in out.iter_mut().zip(lower).zip(upper) {
                    *o = l + (u - l) * rng.random::<f64>();
                }
            }
            JumpMarginal::Gaussian { mean, factor, .. } => {
                let n = mean.len();
                let xi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    out[i] = mean[i] + (0..n).map(|j| factor[(i, j)] * xi[j]).sum::<f64>();
                }
            }
        }
    }
}

/// Deterministic jump as a function of the delay: `z(θ) = offset + slope·θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoupling {
    pub offset: Vec<f64>,
    pub slope: Vec<f64>,
}

impl LinearCoupling {
    pub fn apply(&self, theta: f64, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.offset).zip(&self.slope) {
            *o = a + b * theta;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub theta: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum StripForm {
    Atomic(Vec<Atom>),
    Product {
        theta: ThetaMeasure,
        jump: JumpMarginal,
    },
    Coupled {
        theta: ThetaMeasure,
        map: LinearCoupling,
    },
}

/// The jump measure `Q(dθ, dz)`.
#[derive(Debug, Clone)]
pub struct StripMeasure {
    dim: usize,
    form: StripForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    /// `∫ f(θ) Q`
    Zero,
    /// `∫ f(θ) z Q`
    First,
    /// `∫ f(θ) z zᵀ Q`
    Second,
}

impl FromStr for MomentOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(MomentOrder::Zero),
            "z" | "1" => Ok(MomentOrder::First),
            "zz" | "zzT" | "2" => Ok(MomentOrder::Second),
            other => Err(Error::UnsupportedOrder(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MomentValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

/// Acceptance bookkeeping of tilted sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TiltStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl TiltStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposals as f64
    }
}

impl StripMeasure {
    pub fn atomic(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for a in &atoms {
            check_theta(a.theta)?;
            if a.z.len() != dim || a.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom jump {:?} does not match dimension {dim}",
                    a.z
                )));
            }
        }
        check_weights(atoms.iter().map(|a| &a.weight))?;
        Ok(StripMeasure {
            dim,
            form: StripForm::Atomic(atoms),
        })
    }

    /// Single atom `δ_θ ⊗ δ_z`.
    pub fn dirac(theta: f64, z: Vec<f64>) -> Result<Self> {
        let dim = z.len();
        Self::atomic(dim, vec![Atom { weight: 1.0, theta, z }])
    }

    pub fn product(theta: ThetaMeasure, jump: JumpMarginal) -> Result<Self> {
        let dim = jump.dim();
        Ok(StripMeasure {
            dim,
            form: StripForm::Product { theta, jump },
        })
    }

    pub fn coupled(theta: ThetaMeasure, map: LinearCoupling) -> Result<Self> {
        let dim = map.offset.len();
        if dim == 0 || map.slope.len() != dim {
            return Err(Error::InvalidMeasure("coupling offset/slope mismatch".into()));
        }
        Ok(StripMeasure {
            dim,
            form: StripForm::Coupled { theta, map },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &StripForm {
        &self.form
    }

    /// `∫ g(θ) Q(dθ, dz)`, exact or adaptive.
    pub fn theta_integrate(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        match &self.form {
            StripForm::Atomic(atoms) => Ok(atoms.iter().map(|a| a.weight * g(a.theta)).sum()),
            StripForm::Product { theta, .. } | StripForm::Coupled { theta, .. } => theta.integrate(g),
        }
    }

    /// `∫ g(θ) Q(dθ, dz)` with fixed quadrature.
    pub fn theta_integrate_fixed(&self, g: impl Fn(f64) -> f64) -> f64 {
        match &self.form {
            StripForm::Atomic(atoms) => atoms.iter().map(|a| a.weight * g(a.theta)).sum(),
            StripForm::Product { theta, .. } | StripForm::Coupled { theta, .. } => {
                theta.integrate_fixed(g)
            }
        }
    }

    /// Delay atoms of the `θ`-marginal, merged by offset, if it is atomic.
    pub fn theta_atoms(&self) -> Option<Vec<ThetaAtom>> {
        let mut out: Vec<ThetaAtom> = Vec::new();
        let mut push = |weight: f64, theta: f64| match out.iter_mut().find(|a| a.theta == theta) {
            Some(a) => a.weight += weight,
            None => out.push(ThetaAtom { weight, theta }),
        };
        match &self.form {
            StripForm::Atomic(atoms) => atoms.iter().for_each(|a| push(a.weight, a.theta)),
            StripForm::Product { theta, .. } | StripForm::Coupled { theta, .. } => {
                theta.atoms()?.iter().for_each(|a| push(a.weight, a.theta))
            }
        }
        Some(out)
    }

    /// The `θ`-marginal as a standalone measure.
    pub fn theta_marginal(&self) -> ThetaMeasure {
        match &self.form {
            StripForm::Product { theta, .. } | StripForm::Coupled { theta, .. } => theta.clone(),
            StripForm::Atomic(_) => ThetaMeasure::Atomic(self.theta_atoms().expect("atomic form")),
        }
    }

    /// Full list of atoms when both marginals are atomic.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match &self.form {
            StripForm::Atomic(atoms) => Some(atoms.clone()),
            StripForm::Product { theta, jump } => {
                let ta = theta.atoms()?;
                let ja = jump.atoms()?;
                Some(
                    ta.iter()
                        .flat_map(|t| {
                            ja.iter().map(move |j| Atom {
                                weight: t.weight * j.weight,
                                theta: t.theta,
                                z: j.z.clone(),
                            })
                        })
                        .collect(),
                )
            }
            StripForm::Coupled { theta, map } => {
                let ta = theta.atoms()?;
                Some(
                    ta.iter()
                        .map(|t| {
                            let mut z = vec![0.0; self.dim];
                            map.apply(t.theta, &mut z);
                            Atom {
                                weight: t.weight,
                                theta: t.theta,
                                z,
                            }
                        })
                        .collect(),
                )
            }
        }
    }

    pub fn moment(&self, f: impl Fn(f64) -> f64, order: MomentOrder) -> Result<MomentValue> {
        Ok(match order {
            MomentOrder::Zero => MomentValue::Scalar(self.moment0(f)?),
            MomentOrder::First => MomentValue::Vector(self.moment1(f)?),
            MomentOrder::Second => MomentValue::Matrix(self.moment2(f)?),
        })
    }

    pub fn moment0(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        self.theta_integrate(f)
    }

    pub fn moment1(&self, f: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
        match &self.form {
            StripForm::Atomic(atoms) => {
                let mut m = DVector::zeros(self.dim);
                for a in atoms {
                    m += DVector::from_column_slice(&a.z) * (a.weight * f(a.theta));
                }
                Ok(m)
            }
            StripForm::Product { theta, jump } => Ok(jump.mean() * theta.integrate(f)?),
            StripForm::Coupled { theta, map } => {
                let c0 = theta.integrate(&f)?;
                let c1 = theta.integrate(|x| x * f(x))?;
                Ok(DVector::from_column_slice(&map.offset) * c0 + DVector::from_column_slice(&map.slope) * c1)
            }
        }
    }

    /// Like [`moment1`](Self::moment1) but with fixed-node quadrature.
    pub fn moment1_fixed(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        match &self.form {
            StripForm::Atomic(_) => self.moment1(f).expect("atomic moments are exact"),
            StripForm::Product { theta, jump } => jump.mean() * theta.integrate_fixed(f),
            StripForm::Coupled { theta, map } => {
                let c0 = theta.integrate_fixed(&f);
                let c1 = theta.integrate_fixed(|x| x * f(x));
                DVector::from_column_slice(&map.offset) * c0 + DVector::from_column_slice(&map.slope) * c1
            }
        }
    }

    pub fn moment2(&self, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        match &self.form {
            StripForm::Atomic(atoms) => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for a in atoms {
                    let z = DVector::from_column_slice(&a.z);
                    m += &z * z.transpose() * (a.weight * f(a.theta));
                }
                Ok(m)
            }
            StripForm::Product { theta, jump } => Ok(jump.second_moment() * theta.integrate(f)?),
            StripForm::Coupled { theta, map } => {
                let c0 = theta.integrate(&f)?;
                let c1 = theta.integrate(|x| x * f(x))?;
                let c2 = theta.integrate(|x| x * x * f(x))?;
                let o = DVector::from_column_slice(&map.offset);
                let s = DVector::from_column_slice(&map.slope);
                let cross = &o * s.transpose() + &s * o.transpose();
                Ok(&o * o.transpose() * c0 + cross * c1 + &s * s.transpose() * c2)
            }
        }
    }

    /// Draws `(θ, z)` from `Q`, writing `z` into `z_out` and returning `θ`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z_out: &mut [f64]) -> f64 {
        match &self.form {
            StripForm::Atomic(atoms) => {
                let a = &atoms[categorical(rng, atoms.len(), |i| atoms[i].weight)];
                z_out.copy_from_slice(&a.z);
                a.theta
            }
            StripForm::Product { theta, jump } => {
                let t = theta.sample(rng);
                jump.sample_into(rng, z_out);
                t
            }
            StripForm::Coupled { theta, map } => {
                let t = theta.sample(rng);
                map.apply(t, z_out);
                t
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Vec<f64>) {
        let mut z = vec![0.0; self.dim];
        let t = self.sample_into(rng, &mut z);
        (t, z)
    }

    /// Draws from `w(θ) Q(dθ, dz) / ∫ w dQ`.
    ///
    /// Atomic delay marginals are reweighted exactly; otherwise proposals from
    /// `Q` are accepted with probability `w(θ)/w_sup`.
    pub fn sample_tilted_into<R: Rng + ?Sized>(
        &self,
        w: impl Fn(f64) -> f64,
        w_sup: f64,
        rng: &mut R,
        z_out: &mut [f64],
        stats: &mut TiltStats,
    ) -> Result<f64> {
        let check = |theta: f64, value: f64| -> Result<()> {
            if value > w_sup * (1.0 + 1e-12) || !(value > 0.0) {
                return Err(Error::EnvelopeViolation {
                    t: theta,
                    rate: value,
                    bound: w_sup,
                });
            }
            Ok(())
        };
        let theta = match &self.form {
            StripForm::Atomic(atoms) => {
                let i = categorical(rng, atoms.len(), |i| atoms[i].weight * w(atoms[i].theta));
                z_out.copy_from_slice(&atoms[i].z);
                atoms[i].theta
            }
            StripForm::Product {
                theta: ThetaMeasure::Atomic(ta),
                jump,
            } => {
                let i = categorical(rng, ta.len(), |i| ta[i].weight * w(ta[i].theta));
                jump.sample_into(rng, z_out);
                ta[i].theta
            }
            StripForm::Coupled {
                theta: ThetaMeasure::Atomic(ta),
                map,
            } => {
                let i = categorical(rng, ta.len(), |i| ta[i].weight * w(ta[i].theta));
                map.apply(ta[i].theta, z_out);
                ta[i].theta
            }
            _ => return self.sample_tilted_rejection_into(w, w_sup, rng, z_out, stats),
        };
        check(theta, w(theta))?;
        stats.proposals += 1;
        stats.accepted += 1;
        Ok(theta)
    }

    /// Acceptance–rejection path of tilted sampling, usable for any form.
    pub fn sample_tilted_rejection_into<R: Rng + ?Sized>(
        &self,
        w: impl Fn(f64) -> f64,
        w_sup: f64,
        rng: &mut R,
        z_out: &mut [f64],
        stats: &mut TiltStats,
    ) -> Result<f64> {
        if !(w_sup > 0.0 && w_sup.is_finite()) {
            return Err(Error::Numerical(format!("invalid tilt bound {w_sup}")));
        }
        loop {
            let theta = self.sample_into(rng, z_out);
            let value = w(theta);
            if value > w_sup * (1.0 + 1e-12) {
                return Err(Error::EnvelopeViolation {
                    t: theta,
                    rate: value,
                    bound: w_sup,
                });
            }
            stats.proposals += 1;
            if rng.random::<f64>() * w_sup < value {
                stats.accepted += 1;
                return Ok(theta);
            }
            if stats.proposals > 1_000_000 + 1_000 * stats.accepted {
                return Err(Error::Numerical("tilted rejection sampler stalled".into()));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn delayed_uniform() -> StripMeasure {
        StripMeasure::product(
            ThetaMeasure::dirac(-1.0).unwrap(),
            JumpMarginal::uniform_box(vec![-0.5], vec![0.5]).unwrap(),
        )
        .unwrap()
    }

    fn two_atoms(w0: f64) -> StripMeasure {
        StripMeasure::atomic(
            1,
            vec![
                Atom { weight: w0, theta: 0.0, z: vec![0.0] },
                Atom { weight: 1.0 - w0, theta: -1.0, z: vec![1.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_atom_moments() {
        let q = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
        assert_eq!(q.moment0(|t| -t).unwrap(), 1.0);
        let q = StripMeasure::dirac(0.0, vec![1.0]).unwrap();
        assert_eq!(q.moment1(|_| 1.0).unwrap()[0], 1.0);
    }

    #[test]
    fn uniform_second_moment_and_monte_carlo() {
        let q = delayed_uniform();
        let m = q.moment2(|_| 1.0).unwrap()[(0, 0)];
        assert!((m - 1.0 / 12.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut z = [0.0];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            q.sample_into(&mut rng, &mut z);
            s += z[0] * z[0];
            s2 += z[0].powi(4);
        }
        let mean = s / n as f64;
        let sd = (s2 / n as f64 - mean * mean).sqrt();
        assert!((mean - m).abs() <= 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn moment_order_parsing() {
        assert_eq!("zz".parse::<MomentOrder>().unwrap(), MomentOrder::Second);
        assert!(matches!("zzz".parse::<MomentOrder>(), Err(Error::UnsupportedOrder(_))));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(StripMeasure::dirac(0.5, vec![1.0]).is_err());
        assert!(StripMeasure::atomic(
            1,
            vec![
                Atom { weight: 0.5, theta: 0.0, z: vec![0.0] },
                Atom { weight: 0.4, theta: -1.0, z: vec![1.0] },
            ]
        )
        .is_err());
        assert!(StripMeasure::atomic(
            1,
            vec![
                Atom { weight: 1.0, theta: 0.0, z: vec![0.0] },
                Atom { weight: 1e-16, theta: -1.0, z: vec![1.0] },
            ]
        )
        .is_err());
        assert!(JumpMarginal::gaussian(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn point_mass_sampling() {
        let q = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut stats = TiltStats::default();
        for _ in 0..100 {
            assert_eq!(q.sample(&mut rng), (-1.0, vec![1.0]));
            let mut z = [0.0];
            let t = q.sample_tilted_into(|t| (2.0 * t).exp(), 1.0, &mut rng, &mut z, &mut stats).unwrap();
            assert_eq!((t, z[0]), (-1.0, 1.0));
        }
    }

    #[test]
    fn atomic_frequencies() {
        let q = two_atoms(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| q.sample(&mut rng).0 == -1.0).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn uniform_sample_mean() {
        let q = delayed_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n).map(|_| q.sample(&mut rng).1[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005);
    }

    #[test]
    fn exponential_tilt_on_atoms() {
        let q = two_atoms(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut stats = TiltStats::default();
        let n = 100_000;
        let mut z = [0.0];
        let hits = (0..n)
            .filter(|_| q.sample_tilted_into(f64::exp, 1.0, &mut rng, &mut z, &mut stats).unwrap() == -1.0)
            .count();
        let expected = (-1f64).exp() / (1.0 + (-1f64).exp());
        assert!((hits as f64 / n as f64 - expected).abs() < 0.01);
        assert_eq!(stats.accepted, n as u64);
    }

    #[test]
    fn tilt_bound_violation_is_an_error() {
        let q = two_atoms(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut z = [0.0];
        let mut stats = TiltStats::default();
        let res = (0..50)
            .map(|_| q.sample_tilted_rejection_into(|_| 2.0, 1.0, &mut rng, &mut z, &mut stats))
            .find(|r| r.is_err());
        assert!(matches!(res, Some(Err(Error::EnvelopeViolation { .. }))));
    }

    #[test]
    fn coupled_moments_match_atomic_expansion() {
        let eta = ThetaMeasure::atomic(vec![
            ThetaAtom { weight: 0.3, theta: -1.0 },
            ThetaAtom { weight: 0.7, theta: -0.25 },
        ])
        .unwrap();
        let q = StripMeasure::coupled(
            eta,
            LinearCoupling { offset: vec![0.5], slope: vec![2.0] },
        )
        .unwrap();
        let flat = StripMeasure::atomic(1, q.atoms().unwrap()).unwrap();
        let f = |t: f64| (0.7 * t).exp();
        assert!((q.moment1(f).unwrap()[0] - flat.moment1(f).unwrap()[0]).abs() < 1e-14);
        assert!((q.moment2(f).unwrap()[(0, 0)] - flat.moment2(f).unwrap()[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn density_marginal_quadrature() {
        let q = StripMeasure::product(
            ThetaMeasure::exponential(2.0).unwrap(),
            JumpMarginal::point(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert!((q.moment0(|_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        // E[θ] under density ∝ e^{2θ} on [-1, 0]
        let e2 = (-2f64).exp();
        let exact = (3.0 * e2 - 1.0) / (2.0 * (1.0 - e2));
        let mean_theta = q.moment0(|t| t).unwrap();
        assert!((mean_theta - exact).abs() < 1e-12, "{mean_theta} vs {exact}");
    }
}
