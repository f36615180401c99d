//! Expectations over a standard Gaussian `Z` (and over the signal or noise
//! distribution) by fixed-node quadrature, with a Monte Carlo alternative.
//!
//! Smooth integrands use Gauss-Hermite. Integrands with kinks are split at
//! the kinks and integrated with composite Gauss-Legendre panels on
//! `[-Z_CUTOFF, Z_CUTOFF]`. Every quadrature value is recomputed with twice
//! the nodes; the relative disagreement is reported with the value.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NoiseSpec, Prior};
use crate::rng::{Purpose, StreamKey};
use crate::scalar::Real;

/// Relative disagreement between the `n`- and `2n`-node rules above which a
/// value is flagged as imprecise.
pub const PRECISION_TOLERANCE: f64 = 1e-9;
/// Absolute floor below which disagreements are ignored.
const PRECISION_FLOOR: f64 = 1e-21;
/// Gaussian tail beyond this many standard deviations is dropped (mass < 1e-32).
pub const Z_CUTOFF: f64 = 12.0;
const PANEL_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMethod {
    #[default]
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Gauss-Hermite node count; odd and at least 11.
    pub nodes: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub method: ExpectationMethod,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: 61,
            mc_samples: 1_000_000,
            mc_seed: 0x5EED,
            method: ExpectationMethod::Quadrature,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 11 || self.nodes % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "quadrature node count must be odd and >= 11, got {}",
                self.nodes
            )));
        }
        if self.method == ExpectationMethod::MonteCarlo && self.mc_samples < 2 {
            return Err(Error::InvalidParameter("mc_samples must be >= 2".into()));
        }
        Ok(())
    }
}

/// An expectation together with its numerical uncertainty: the relative
/// `n` vs `2n` node disagreement for quadrature, the standard error for
/// Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation<T> {
    pub value: T,
    pub discrepancy: f64,
    pub method: ExpectationMethod,
}

impl<T: Real> Expectation<T> {
    pub fn is_precise(&self) -> bool {
        self.method == ExpectationMethod::MonteCarlo || self.discrepancy < PRECISION_TOLERANCE
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d <= PRECISION_FLOOR {
        0.0
    } else {
        d / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for weight
/// `exp(-x^2)` (Newton iteration on orthonormal Hermite polynomials).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

/// `E g(Z)` rule in standard-normal coordinates.
#[derive(Debug, Clone)]
struct NormalRule<T> {
    z: Vec<T>,
    w: Vec<T>,
}

impl<T: Real> NormalRule<T> {
    fn hermite(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let s = std::f64::consts::PI.sqrt();
        Self {
            z: x.iter().map(|v| T::lit(v * std::f64::consts::SQRT_2)).collect(),
            w: w.iter().map(|v| T::lit(v / s)).collect(),
        }
    }

    fn apply(&self, g: &dyn Fn(T) -> T) -> T {
        let mut acc = T::zero();
        for (z, w) in self.z.iter().zip(&self.w) {
            acc = acc + *w * g(*z);
        }
        acc
    }
}

#[derive(Debug, Clone)]
struct LegendreRule<T> {
    x: Vec<T>,
    w: Vec<T>,
}

impl<T: Real> LegendreRule<T> {
    fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            x: x.into_iter().map(T::lit).collect(),
            w: w.into_iter().map(T::lit).collect(),
        }
    }

    /// `E g(Z)` from piecewise panels between the sorted break points.
    fn apply(&self, g: &dyn Fn(T) -> T, breaks: &[T]) -> T {
        let inv_sqrt_2pi = T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for seg in breaks.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let width = b - a;
            if width <= T::zero() {
                continue;
            }
            let panels = (width.to_f64_lossy() / PANEL_WIDTH).ceil().max(1.0) as usize;
            let h = width / T::count(panels);
            for p in 0..panels {
                let lo = a + h * T::count(p);
                let mid = lo + h * half;
                let mut part = T::zero();
                for (x, w) in self.x.iter().zip(&self.w) {
                    let z = mid + h * half * *x;
                    part = part + *w * (-(z * z) * half).exp() * g(z);
                }
                acc = acc + part * h * half;
            }
        }
        acc * inv_sqrt_2pi
    }
}

/// Reusable Gaussian-expectation engine.
#[derive(Debug, Clone)]
pub struct Integrator<T> {
    config: QuadratureConfig,
    hermite: NormalRule<T>,
    hermite_check: NormalRule<T>,
    legendre: LegendreRule<T>,
    legendre_check: LegendreRule<T>,
}

impl<T: Real> Integrator<T> {
    pub fn new(config: QuadratureConfig) -> Result<Self> {
        config.validate()?;
        let n = config.nodes;
        Ok(Self {
            hermite: NormalRule::hermite(n),
            hermite_check: NormalRule::hermite(2 * n),
            legendre: LegendreRule::new(n),
            legendre_check: LegendreRule::new(2 * n),
            config,
        })
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.config
    }

    fn breakpoints(&self, kinks: &[T]) -> Vec<T> {
        let cut = T::lit(Z_CUTOFF);
        let mut b: Vec<T> = kinks
            .iter()
            .copied()
            .filter(|k| k.is_finite() && k.abs() < cut)
            .collect();
        b.push(-cut);
        b.push(cut);
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup();
        b
    }

    /// `E g(Z)` for `Z ~ N(0, 1)`; `kinks` are the points (in `Z`) where `g`
    /// fails to be smooth.
    pub fn normal(&self, g: &dyn Fn(T) -> T, kinks: &[T]) -> Expectation<T> {
        if self.config.method == ExpectationMethod::MonteCarlo {
            return self.monte_carlo(&|_, z| g(z), &|_| T::zero(), &[(T::zero(), T::one())]);
        }
        if kinks.is_empty() {
            let a = self.hermite.apply(g);
            let b = self.hermite_check.apply(g);
            let gap = relative_gap(a.to_f64_lossy(), b.to_f64_lossy());
            if gap < PRECISION_TOLERANCE {
                return Expectation {
                    value: a,
                    discrepancy: gap,
                    method: ExpectationMethod::Quadrature,
                };
            }
        }
        let breaks = self.breakpoints(kinks);
        let a = self.legendre.apply(g, &breaks);
        let b = self.legendre_check.apply(g, &breaks);
        Expectation {
            value: a,
            discrepancy: relative_gap(a.to_f64_lossy(), b.to_f64_lossy()),
            method: ExpectationMethod::Quadrature,
        }
    }

    /// `E g(X, Z)` with `X` drawn from the atoms or a centred Gaussian of the
    /// given variance, independent of `Z`. `kinks(x)` lists the kinks of
    /// `z -> g(x, z)`.
    fn mixed(
        &self,
        atoms: Option<&[(T, T)]>,
        gaussian_variance: T,
        g: &dyn Fn(T, T) -> T,
        kinks: &dyn Fn(T) -> Vec<T>,
    ) -> Expectation<T> {
        if self.config.method == ExpectationMethod::MonteCarlo {
            return match atoms {
                Some(a) => self.monte_carlo(g, &|_| T::zero(), a),
                None => self.monte_carlo(g, &|u| gaussian_variance.sqrt() * u, &[]),
            };
        }
        match atoms {
            Some(atoms) => {
                let mut value = T::zero();
                let mut disc = 0.0f64;
                for &(x, p) in atoms {
                    if p == T::zero() {
                        continue;
                    }
                    let e = self.normal(&|z| g(x, z), &kinks(x));
                    value = value + p * e.value;
                    disc = disc.max(e.discrepancy);
                }
                Expectation {
                    value,
                    discrepancy: disc,
                    method: ExpectationMethod::Quadrature,
                }
            }
            None => {
                let sd = gaussian_variance.sqrt();
                let mut inner_disc = 0.0f64;
                let mut outer = |rule: &NormalRule<T>| {
                    let mut acc = T::zero();
                    for (u, w) in rule.z.iter().zip(&rule.w) {
                        let x = sd * *u;
                        let e = self.normal(&|z| g(x, z), &kinks(x));
                        inner_disc = inner_disc.max(e.discrepancy);
                        acc = acc + *w * e.value;
                    }
                    acc
                };
                let a = outer(&self.hermite);
                let b = outer(&self.hermite_check);
                Expectation {
                    value: a,
                    discrepancy: inner_disc.max(relative_gap(a.to_f64_lossy(), b.to_f64_lossy())),
                    method: ExpectationMethod::Quadrature,
                }
            }
        }
    }

    /// `E g(X0, Z)` with `X0` from the prior.
    pub fn over_prior(
        &self,
        prior: &Prior<T>,
        g: &dyn Fn(T, T) -> T,
        kinks: &dyn Fn(T) -> Vec<T>,
    ) -> Expectation<T> {
        match prior {
            Prior::Gaussian { variance } => self.mixed(None, *variance, g, kinks),
            _ => {
                let atoms = prior.atoms().unwrap();
                self.mixed(Some(&atoms), T::zero(), g, kinks)
            }
        }
    }

    /// `E g(W, Z)` with `W` from the noise distribution.
    pub fn over_noise(
        &self,
        noise: &NoiseSpec<T>,
        g: &dyn Fn(T, T) -> T,
        kinks: &dyn Fn(T) -> Vec<T>,
    ) -> Expectation<T> {
        match noise {
            NoiseSpec::Gaussian { variance } if *variance > T::zero() => {
                self.mixed(None, *variance, g, kinks)
            }
            NoiseSpec::Gaussian { .. } => self.mixed(Some(&[(T::zero(), T::one())]), T::zero(), g, kinks),
            NoiseSpec::Discrete { atoms } => self.mixed(Some(atoms), T::zero(), g, kinks),
        }
    }

    /// Plain Monte Carlo over `(X, Z)`; `X` is drawn from `atoms` when given,
    /// otherwise as `gauss(U)` for an independent standard normal `U`.
    fn monte_carlo(
        &self,
        g: &dyn Fn(T, T) -> T,
        gauss: &dyn Fn(T) -> T,
        atoms: &[(T, T)],
    ) -> Expectation<T> {
        let mut rng = StreamKey::root(self.config.mc_seed, Purpose::MonteCarlo).rng(0);
        let m = self.config.mc_samples;
        let cdf: Vec<(f64, T)> = atoms
            .iter()
            .scan(0.0, |acc, &(v, p)| {
                *acc += p.to_f64_lossy();
                Some((*acc, v))
            })
            .collect();
        let mut sum = 0.0f64;
        let mut sum2 = 0.0f64;
        for _ in 0..m {
            let x = if cdf.is_empty() {
                let u: f64 = StandardNormal.sample(&mut rng);
                gauss(T::lit(u))
            } else {
                let u: f64 = rand::Rng::random(&mut rng);
                cdf.iter().find(|(c, _)| u < *c).unwrap_or(cdf.last().unwrap()).1
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = g(x, T::lit(z)).to_f64_lossy();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / m as f64;
        let var = (sum2 / m as f64 - mean * mean).max(0.0) * m as f64 / (m as f64 - 1.0);
        Expectation {
            value: T::lit(mean),
            discrepancy: (var / m as f64).sqrt(),
            method: ExpectationMethod::MonteCarlo,
        }
    }
}
