//! Problem generation: Gaussian sensing matrices, signal priors, noise and
//! the linear observation model `y = A x0 + w`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::StreamKey;
use crate::scalar::{pairwise_sum_by, Real};

/// Tolerance on the total mass of a discrete distribution.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// `n x N` matrix with i.i.d. `N(0, 1/n)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix<T> {
    entries: DenseMatrix<T>,
}

impl<T: Real> SensingMatrix<T> {
    /// Wraps an explicit matrix; used for hand-built instances.
    pub fn from_matrix(entries: DenseMatrix<T>) -> Self {
        Self { entries }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        DenseMatrix::from_rows(rows).map(Self::from_matrix)
    }

    /// Number of measurements `n`.
    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    /// Signal dimension `N`.
    pub fn big_n(&self) -> usize {
        self.entries.cols()
    }

    pub fn delta(&self) -> T {
        T::count(self.n()) / T::count(self.big_n())
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.entries
    }

    pub fn get(&self, a: usize, i: usize) -> T {
        self.entries.get(a, i)
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        self.entries.mul_vec(x)
    }

    pub fn mul_transpose_vec(&self, z: &[T]) -> Result<Vec<T>> {
        self.entries.mul_transpose_vec(z)
    }
}

/// Fills `m` with i.i.d. `N(0, variance)` entries, one ChaCha lane per row.
pub(crate) fn fill_gaussian_rows<T: Real>(m: &mut DenseMatrix<T>, variance: f64, key: StreamKey) {
    let sd = variance.sqrt();
    m.par_rows_mut().enumerate().for_each(|(r, row)| {
        let mut rng = key.rng(r as u64);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::lit(sd * z);
        }
    });
}

/// Draws an `n x N` sensing matrix with i.i.d. `N(0, 1/n)` entries.
pub fn sample_sensing_matrix<T: Real>(
    n: usize,
    big_n: usize,
    key: StreamKey,
) -> Result<SensingMatrix<T>> {
    if n == 0 || big_n == 0 {
        return Err(Error::InvalidDimension(format!(
            "sensing matrix must be at least 1x1, got {n}x{big_n}"
        )));
    }
    let mut m = DenseMatrix::zeros(n, big_n);
    fill_gaussian_rows(&mut m, 1.0 / n as f64, key);
    Ok(SensingMatrix::from_matrix(m))
}

/// Distribution of the signal entries `X0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior<T> {
    /// Finite mixture of point masses `(value, probability)`.
    Discrete { atoms: Vec<(T, T)> },
    Gaussian { variance: T },
    /// Uniform on `{+1, -1}`.
    Antipodal,
}

fn validate_atoms<T: Real>(atoms: &[(T, T)], what: &str) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidPrior(format!("{what}: no atoms")));
    }
    let mut total = 0.0;
    for &(v, p) in atoms {
        if !v.is_finite() || !p.is_finite() || p < T::zero() {
            return Err(Error::InvalidPrior(format!(
                "{what}: atom ({v}, {p}) must be finite with nonnegative mass"
            )));
        }
        total += p.to_f64_lossy();
    }
    let tol = PROBABILITY_TOLERANCE.max(16.0 * T::epsilon().to_f64_lossy() * atoms.len() as f64);
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidPrior(format!(
            "{what}: probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn sample_atoms<R: Rng + ?Sized>(atoms: &[(f64, f64)], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(v, p) in atoms {
        acc += p;
        if u < acc {
            return v;
        }
    }
    // Rounding can leave `acc` a hair below 1.
    atoms
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map_or(atoms[atoms.len() - 1].0, |a| a.0)
}

impl<T: Real> Prior<T> {
    pub fn discrete(atoms: Vec<(T, T)>) -> Result<Self> {
        validate_atoms(&atoms, "discrete prior")?;
        Ok(Prior::Discrete { atoms })
    }

    pub fn gaussian(variance: T) -> Result<Self> {
        let p = Prior::Gaussian { variance };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric three-point prior: `+-1` with probability `eps/2` each,
    /// zero otherwise.
    pub fn three_point(eps: T) -> Result<Self> {
        let half = eps / T::lit(2.0);
        Self::discrete(vec![(-T::one(), half), (T::zero(), T::one() - eps), (T::one(), half)])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Discrete { atoms } => validate_atoms(atoms, "discrete prior"),
            Prior::Gaussian { variance } => {
                if *variance > T::zero() && variance.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidPrior(format!(
                        "gaussian prior variance must be positive, got {variance}"
                    )))
                }
            }
            Prior::Antipodal => Ok(()),
        }
    }

    /// Point masses of the prior; `None` for continuous priors.
    pub fn atoms(&self) -> Option<Vec<(T, T)>> {
        match self {
            Prior::Discrete { atoms } => Some(atoms.clone()),
            Prior::Antipodal => Some(vec![(-T::one(), T::lit(0.5)), (T::one(), T::lit(0.5))]),
            Prior::Gaussian { .. } => None,
        }
    }

    /// Absolute moment `E|X0|^p`.
    pub fn abs_moment(&self, p: u32) -> T {
        match self {
            Prior::Gaussian { variance } => {
                // E|Z|^p = (p-1)!! for even p, sqrt(2/pi) 2^{(p-1)/2} ((p-1)/2)! for odd p.
                let sd = variance.sqrt();
                let zm = if p % 2 == 0 {
                    (1..p).step_by(2).fold(1.0, |acc, k| acc * k as f64)
                } else {
                    let h = (p - 1) / 2;
                    let fact = (1..=h).fold(1.0, |acc, k| acc * k as f64);
                    (2.0 / std::f64::consts::PI).sqrt() * 2f64.powi(h as i32) * fact
                };
                T::lit(zm) * sd.powi(p as i32)
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|&(v, w)| w * v.abs().powi(p as i32))
                .sum(),
        }
    }

    pub fn second_moment(&self) -> T {
        self.abs_moment(2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            Prior::Gaussian { variance } => {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(variance.to_f64_lossy().sqrt() * z)
            }
            Prior::Antipodal => {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            Prior::Discrete { atoms } => {
                let a: Vec<(f64, f64)> = atoms
                    .iter()
                    .map(|&(v, p)| (v.to_f64_lossy(), p.to_f64_lossy()))
                    .collect();
                T::lit(sample_atoms(&a, rng))
            }
        }
    }
}

/// Draws `N` i.i.d. samples from the prior.
pub fn sample_signal<T: Real>(prior: &Prior<T>, big_n: usize, key: StreamKey) -> Result<Vec<T>> {
    prior.validate()?;
    let mut rng = key.rng(0);
    Ok((0..big_n).map(|_| prior.sample(&mut rng)).collect())
}

/// Distribution of the noise entries `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec<T> {
    Gaussian { variance: T },
    Discrete { atoms: Vec<(T, T)> },
}

impl<T: Real> NoiseSpec<T> {
    pub fn gaussian(variance: T) -> Result<Self> {
        let s = NoiseSpec::Gaussian { variance };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::Gaussian { variance } => {
                if *variance >= T::zero() && variance.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "noise variance must be >= 0, got {variance}"
                    )))
                }
            }
            NoiseSpec::Discrete { atoms } => validate_atoms(atoms, "discrete noise"),
        }
    }

    /// Second moment `E W^2`, i.e. `sigma^2` for zero-mean noise.
    pub fn variance(&self) -> T {
        match self {
            NoiseSpec::Gaussian { variance } => *variance,
            NoiseSpec::Discrete { atoms } => atoms.iter().map(|&(v, p)| p * v * v).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            NoiseSpec::Gaussian { variance } => {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(variance.to_f64_lossy().sqrt() * z)
            }
            NoiseSpec::Discrete { atoms } => {
                let a: Vec<(f64, f64)> = atoms
                    .iter()
                    .map(|&(v, p)| (v.to_f64_lossy(), p.to_f64_lossy()))
                    .collect();
                T::lit(sample_atoms(&a, rng))
            }
        }
    }
}

/// One draw of the observation model `y = A x0 + w`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    a: SensingMatrix<T>,
    x0: Vec<T>,
    w: Vec<T>,
    y: Vec<T>,
    delta: T,
}

impl<T: Real> ProblemInstance<T> {
    /// Assembles an instance from explicit `A`, `x0`, `w`.
    pub fn from_parts(a: SensingMatrix<T>, x0: Vec<T>, w: Vec<T>) -> Result<Self> {
        check_len("signal length", a.big_n(), x0.len())?;
        check_len("noise length", a.n(), w.len())?;
        let mut y = a.mul_vec(&x0)?;
        for (yi, wi) in y.iter_mut().zip(&w) {
            *yi = *yi + *wi;
        }
        let delta = a.delta();
        Ok(Self { a, x0, w, y, delta })
    }

    pub fn a(&self) -> &SensingMatrix<T> {
        &self.a
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    /// `n / N`, evaluated once from the matrix shape.
    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn big_n(&self) -> usize {
        self.a.big_n()
    }
}

/// Draws noise from `noise` and forms `y = A x0 + w`.
pub fn build_instance<T: Real>(
    a: SensingMatrix<T>,
    x0: Vec<T>,
    noise: &NoiseSpec<T>,
    key: StreamKey,
) -> Result<ProblemInstance<T>> {
    noise.validate()?;
    check_len("signal length", a.big_n(), x0.len())?;
    let mut rng = key.rng(0);
    let w = (0..a.n()).map(|_| noise.sample(&mut rng)).collect();
    ProblemInstance::from_parts(a, x0, w)
}

/// Point-mass-`1/N` distribution of a vector's entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    samples: Vec<T>,
}

impl<T: Real> EmpiricalDistribution<T> {
    pub fn new(samples: Vec<T>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    /// `(1/N) sum |v_i|^p`.
    pub fn abs_moment(&self, p: u32) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        let s = &self.samples;
        pairwise_sum_by(s.len(), &|i| s[i].abs().powi(p as i32)) / T::count(s.len())
    }

    /// Absolute moments of orders `1..=2k-2`.
    pub fn moments_up_to_order(&self, k: u32) -> Vec<T> {
        (1..=2 * k.max(2) - 2).map(|p| self.abs_moment(p)).collect()
    }
}
