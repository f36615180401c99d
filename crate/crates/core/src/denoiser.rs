//! Scalar denoisers `eta_t` with their almost-everywhere derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::scalar::{pairwise_sum_by, Real};

/// Soft threshold `eta(x; theta)`.
pub fn soft_threshold<T: Real>(x: T, theta: T) -> Result<T> {
    check_positive("soft threshold theta", theta)?;
    Ok(soft_threshold_unchecked(x, theta))
}

#[inline]
fn soft_threshold_unchecked<T: Real>(x: T, theta: T) -> T {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        T::zero()
    }
}

pub fn linear_denoiser<T: Real>(x: T, gain: T) -> T {
    gain * x
}

/// `tanh(x / tau2)`, the posterior mean for a uniform `+-1` signal.
pub fn tanh_denoiser<T: Real>(x: T, tau2: T) -> Result<T> {
    check_positive("tanh denoiser tau^2", tau2)?;
    Ok((x / tau2).tanh())
}

/// Posterior mean `E{X0 | X0 + tau Z = x}`.
pub fn mmse_denoiser<T: Real>(x: T, tau: T, prior: &Prior<T>) -> Result<T> {
    check_positive("mmse denoiser tau", tau)?;
    prior.validate()?;
    Ok(mmse_eval(x, tau, prior).0)
}

/// `v^2 / (v^2 + tau^2)`.
pub fn optimal_linear_gain<T: Real>(v2: T, tau2: T) -> T {
    v2 / (v2 + tau2)
}

fn check_positive<T: Real>(what: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

/// Posterior mean and its derivative `Var(X0 | x) / tau^2`.
fn mmse_eval<T: Real>(x: T, tau: T, prior: &Prior<T>) -> (T, T) {
    let tau2 = tau * tau;
    match prior {
        Prior::Gaussian { variance } => {
            let g = optimal_linear_gain(*variance, tau2);
            (g * x, g)
        }
        _ => {
            let atoms = prior.atoms().expect("discrete prior");
            let two = T::lit(2.0);
            let logw: Vec<T> = atoms
                .iter()
                .map(|&(a, p)| {
                    if p > T::zero() {
                        p.ln() - (x - a) * (x - a) / (two * tau2)
                    } else {
                        T::neg_infinity()
                    }
                })
                .collect();
            let top = logw.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            let mut m1 = T::zero();
            let mut m2 = T::zero();
            for (&(a, _), &lw) in atoms.iter().zip(&logw) {
                let w = (lw - top).exp();
                z = z + w;
                m1 = m1 + w * a;
                m2 = m2 + w * a * a;
            }
            let mean = m1 / z;
            let var = (m2 / z - mean * mean).max(T::zero());
            (mean, var / tau2)
        }
    }
}

type ScalarFn<T> = dyn Fn(T) -> (T, T) + Send + Sync;

/// User-supplied denoiser: a function returning `(value, derivative)`.
#[derive(Clone)]
pub struct CustomDenoiser<T> {
    pub name: String,
    pub lipschitz: T,
    pub kinks: Vec<T>,
    eval: Arc<ScalarFn<T>>,
}

impl<T: Real> CustomDenoiser<T> {
    pub fn new(
        name: impl Into<String>,
        lipschitz: T,
        eval: impl Fn(T) -> (T, T) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            lipschitz,
            kinks: Vec::new(),
            eval: Arc::new(eval),
        }
    }

    pub fn with_kinks(mut self, kinks: Vec<T>) -> Self {
        self.kinks = kinks;
        self
    }
}

impl<T: fmt::Debug> fmt::Debug for CustomDenoiser<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDenoiser")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

/// A fully parameterised scalar nonlinearity for one iteration.
#[derive(Debug, Clone)]
pub enum Denoiser<T> {
    SoftThreshold { theta: T },
    Linear { gain: T },
    Tanh { tau2: T },
    Mmse { prior: Prior<T>, tau: T },
    Custom(CustomDenoiser<T>),
}

impl<T: Real> Denoiser<T> {
    pub fn soft_threshold(theta: T) -> Result<Self> {
        check_positive("soft threshold theta", theta)?;
        Ok(Denoiser::SoftThreshold { theta })
    }

    pub fn linear(gain: T) -> Result<Self> {
        if gain.is_finite() {
            Ok(Denoiser::Linear { gain })
        } else {
            Err(Error::InvalidParameter(format!("linear gain must be finite, got {gain}")))
        }
    }

    pub fn identity() -> Self {
        Denoiser::Linear { gain: T::one() }
    }

    pub fn zero() -> Self {
        Denoiser::Linear { gain: T::zero() }
    }

    pub fn tanh(tau2: T) -> Result<Self> {
        check_positive("tanh denoiser tau^2", tau2)?;
        Ok(Denoiser::Tanh { tau2 })
    }

    pub fn mmse(prior: Prior<T>, tau: T) -> Result<Self> {
        check_positive("mmse denoiser tau", tau)?;
        prior.validate()?;
        Ok(Denoiser::Mmse { prior, tau })
    }

    #[inline]
    pub fn value(&self, x: T) -> T {
        self.eval(x).0
    }

    /// Derivative in `x`; zero at the soft-threshold kinks.
    #[inline]
    pub fn derivative(&self, x: T) -> T {
        self.eval(x).1
    }

    #[inline]
    pub fn eval(&self, x: T) -> (T, T) {
        match self {
            Denoiser::SoftThreshold { theta } => {
                let v = soft_threshold_unchecked(x, *theta);
                let d = if x.abs() > *theta { T::one() } else { T::zero() };
                (v, d)
            }
            Denoiser::Linear { gain } => (*gain * x, *gain),
            Denoiser::Tanh { tau2 } => {
                let t = (x / *tau2).tanh();
                (t, (T::one() - t * t) / *tau2)
            }
            Denoiser::Mmse { prior, tau } => mmse_eval(x, *tau, prior),
            Denoiser::Custom(c) => (c.eval)(x),
        }
    }

    /// Points where the derivative is discontinuous.
    pub fn kinks(&self) -> Vec<T> {
        match self {
            Denoiser::SoftThreshold { theta } => vec![-*theta, *theta],
            Denoiser::Custom(c) => c.kinks.clone(),
            _ => Vec::new(),
        }
    }

    pub fn lipschitz(&self) -> T {
        match self {
            Denoiser::SoftThreshold { .. } => T::one(),
            Denoiser::Linear { gain } => gain.abs(),
            Denoiser::Tanh { tau2 } => T::one() / *tau2,
            Denoiser::Mmse { prior, tau } => {
                let tau2 = *tau * *tau;
                match prior {
                    Prior::Gaussian { variance } => optimal_linear_gain(*variance, tau2),
                    _ => {
                        let atoms = prior.atoms().unwrap();
                        let lo = atoms.iter().map(|a| a.0).fold(T::infinity(), T::min);
                        let hi = atoms.iter().map(|a| a.0).fold(T::neg_infinity(), T::max);
                        (hi - lo) * (hi - lo) / (T::lit(4.0) * tau2)
                    }
                }
            }
            Denoiser::Custom(c) => c.lipschitz,
        }
    }

    /// Applies the denoiser componentwise, returning the values and the
    /// mean derivative `<eta'(v)>`.
    pub fn apply(&self, v: &[T]) -> (Vec<T>, T) {
        let mut out = Vec::with_capacity(v.len());
        let mut deriv = Vec::with_capacity(v.len());
        for &x in v {
            let (a, b) = self.eval(x);
            out.push(a);
            deriv.push(b);
        }
        let avg = if v.is_empty() {
            T::zero()
        } else {
            pairwise_sum_by(deriv.len(), &|i| deriv[i]) / T::count(deriv.len())
        };
        (out, avg)
    }
}

/// How a per-iteration parameter is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamPolicy<T> {
    /// Explicit values indexed by `t`; the last value is reused past the end.
    Fixed(Vec<T>),
    /// `alpha * tau_t` (soft threshold only).
    ScaledTau(T),
    /// Taken from the state-evolution variance `tau_t^2`.
    StateEvolution,
}

impl<T: Real> ParamPolicy<T> {
    fn fixed_at(values: &[T], t: usize) -> Result<T> {
        values
            .get(t)
            .or_else(|| values.last())
            .copied()
            .ok_or_else(|| Error::InvalidParameter("empty fixed schedule".into()))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ParamPolicy::Fixed(_) => "fixed",
            ParamPolicy::ScaledTau(_) => "scaled_tau",
            ParamPolicy::StateEvolution => "state_evolution",
        }
    }
}

/// A sequence of denoisers `eta_0, eta_1, ...`.
#[derive(Debug, Clone)]
pub enum DenoiserSchedule<T> {
    SoftThreshold(ParamPolicy<T>),
    /// Fixed gains, or the optimal gain `v^2 / (v^2 + tau_t^2)` with
    /// `v^2 = E X0^2` under `StateEvolution`.
    Linear(ParamPolicy<T>),
    Tanh(ParamPolicy<T>),
    Mmse { prior: Prior<T>, policy: ParamPolicy<T> },
    /// The same denoiser at every iteration.
    Constant(Denoiser<T>),
}

impl<T: Real> DenoiserSchedule<T> {
    pub fn needs_state_evolution(&self) -> bool {
        match self {
            DenoiserSchedule::SoftThreshold(p)
            | DenoiserSchedule::Linear(p)
            | DenoiserSchedule::Tanh(p)
            | DenoiserSchedule::Mmse { policy: p, .. } => !matches!(p, ParamPolicy::Fixed(_)),
            DenoiserSchedule::Constant(_) => false,
        }
    }

    pub fn policy_label(&self) -> &'static str {
        match self {
            DenoiserSchedule::SoftThreshold(p)
            | DenoiserSchedule::Linear(p)
            | DenoiserSchedule::Tanh(p)
            | DenoiserSchedule::Mmse { policy: p, .. } => p.label(),
            DenoiserSchedule::Constant(_) => "constant",
        }
    }

    /// The denoiser `eta_t`, given the state-evolution variance `tau_t^2`
    /// and the signal prior.
    pub fn resolve(&self, t: usize, tau2: T, prior: &Prior<T>) -> Result<Denoiser<T>> {
        let unsupported =
            |what: &str| Error::InvalidParameter(format!("policy not supported for {what} denoiser"));
        match self {
            DenoiserSchedule::SoftThreshold(p) => match p {
                ParamPolicy::Fixed(v) => Denoiser::soft_threshold(ParamPolicy::fixed_at(v, t)?),
                ParamPolicy::ScaledTau(alpha) => Denoiser::soft_threshold(*alpha * tau2.sqrt()),
                ParamPolicy::StateEvolution => Err(unsupported("soft threshold")),
            },
            DenoiserSchedule::Linear(p) => match p {
                ParamPolicy::Fixed(v) => Denoiser::linear(ParamPolicy::fixed_at(v, t)?),
                ParamPolicy::StateEvolution => {
                    Denoiser::linear(optimal_linear_gain(prior.second_moment(), tau2))
                }
                ParamPolicy::ScaledTau(_) => Err(unsupported("linear")),
            },
            DenoiserSchedule::Tanh(p) => match p {
                ParamPolicy::Fixed(v) => Denoiser::tanh(ParamPolicy::fixed_at(v, t)?),
                ParamPolicy::StateEvolution => Denoiser::tanh(tau2),
                ParamPolicy::ScaledTau(_) => Err(unsupported("tanh")),
            },
            DenoiserSchedule::Mmse { prior, policy } => match policy {
                ParamPolicy::Fixed(v) => Denoiser::mmse(prior.clone(), ParamPolicy::fixed_at(v, t)?),
                ParamPolicy::StateEvolution => Denoiser::mmse(prior.clone(), tau2.sqrt()),
                ParamPolicy::ScaledTau(_) => Err(unsupported("mmse")),
            },
            DenoiserSchedule::Constant(d) => Ok(d.clone()),
        }
    }
}

/// The two function sequences `f_t(h, x0)` and `g_t(b, w)` driving the
/// general recursion. Each returns `(value, derivative in the first argument)`.
pub trait GeneralPair<T: Real>: Send + Sync {
    fn f(&self, t: usize, h: T, x0: T) -> (T, T);
    fn g(&self, t: usize, b: T, w: T) -> (T, T);

    /// Kinks of `h -> f_t(h, x0)`.
    fn f_kinks(&self, _t: usize, _x0: T) -> Vec<T> {
        Vec::new()
    }

    /// Kinks of `b -> g_t(b, w)`.
    fn g_kinks(&self, _t: usize, _w: T) -> Vec<T> {
        Vec::new()
    }
}

/// The substitution that turns the general recursion into AMP:
/// `f_t(s, x0) = eta_{t-1}(x0 - s) - x0` and `g_t(s, w) = s - w`.
#[derive(Debug, Clone)]
pub struct AmpPair<T> {
    /// `eta_0, eta_1, ...`; `f_t` uses entry `t - 1` (the last one past the end).
    pub denoisers: Vec<Denoiser<T>>,
}

impl<T: Real> AmpPair<T> {
    pub fn new(denoisers: Vec<Denoiser<T>>) -> Result<Self> {
        if denoisers.is_empty() {
            return Err(Error::InvalidParameter("AMP pair needs at least one denoiser".into()));
        }
        Ok(Self { denoisers })
    }

    fn eta(&self, t: usize) -> &Denoiser<T> {
        let i = t.saturating_sub(1).min(self.denoisers.len() - 1);
        &self.denoisers[i]
    }
}

impl<T: Real> GeneralPair<T> for AmpPair<T> {
    fn f(&self, t: usize, h: T, x0: T) -> (T, T) {
        let (v, d) = self.eta(t).eval(x0 - h);
        (v - x0, -d)
    }

    fn g(&self, _t: usize, b: T, w: T) -> (T, T) {
        (b - w, T::one())
    }

    fn f_kinks(&self, t: usize, x0: T) -> Vec<T> {
        self.eta(t).kinks().into_iter().map(|k| x0 - k).collect()
    }
}

type PairFn<T> = dyn Fn(usize, T, T) -> (T, T) + Send + Sync;

/// A pair built from closures.
#[derive(Clone)]
pub struct FnPair<T> {
    f: Arc<PairFn<T>>,
    g: Arc<PairFn<T>>,
}

impl<T: Real> FnPair<T> {
    pub fn new(
        f: impl Fn(usize, T, T) -> (T, T) + Send + Sync + 'static,
        g: impl Fn(usize, T, T) -> (T, T) + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            g: Arc::new(g),
        }
    }

    /// `f(h, x0) = h`, `g(b, w) = b`.
    pub fn identity() -> Self {
        Self::new(|_, h, _| (h, T::one()), |_, b, _| (b, T::one()))
    }

    /// `f = g = 0`.
    pub fn zero() -> Self {
        Self::new(|_, _, _| (T::zero(), T::zero()), |_, _, _| (T::zero(), T::zero()))
    }
}

impl<T> fmt::Debug for FnPair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnPair")
    }
}

impl<T: Real> GeneralPair<T> for FnPair<T> {
    fn f(&self, t: usize, h: T, x0: T) -> (T, T) {
        (self.f)(t, h, x0)
    }

    fn g(&self, t: usize, b: T, w: T) -> (T, T) {
        (self.g)(t, b, w)
    }
}
