//! Empirical functionals of the iterates, their state-evolution limits, and
//! finite-size diagnostics of the recursion identities.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::denoiser::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::model::Prior;
use crate::quadrature::{Expectation, Integrator};
use crate::recursion::GeneralHistory;
use crate::rng::StreamKey;
use crate::scalar::{inner, mean, mean_and_stderr, pairwise_sum_by, Real};
use crate::state_evolution::expect_denoised;

/// Box half-width for `pseudo_lipschitz_validate`.
pub const PSEUDO_LIPSCHITZ_BOX: f64 = 20.0;
/// Default number of index tuples drawn by `decoupling_check`.
pub const DEFAULT_DECOUPLING_TUPLES: usize = 100_000;
/// Largest tuple size accepted by `decoupling_check`.
pub const MAX_DECOUPLING_ELL: usize = 8;

type PsiFn<T> = dyn Fn(T, T) -> T + Send + Sync;

/// Programmatic observable `psi(x, x0)` with a declared pseudo-Lipschitz
/// order and constant.
#[derive(Clone)]
pub struct CustomObservable<T> {
    pub name: String,
    pub order: u32,
    pub lipschitz: T,
    /// Whether `psi` is non-smooth on the diagonal `x = x0`.
    pub diagonal_kink: bool,
    psi: Arc<PsiFn<T>>,
}

impl<T: Real> CustomObservable<T> {
    pub fn new(
        name: impl Into<String>,
        order: u32,
        lipschitz: T,
        psi: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            order,
            lipschitz,
            diagonal_kink: false,
            psi: Arc::new(psi),
        }
    }

    pub fn with_diagonal_kink(mut self) -> Self {
        self.diagonal_kink = true;
        self
    }
}

impl<T: fmt::Debug> fmt::Debug for CustomObservable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomObservable")
            .field("name", &self.name)
            .field("order", &self.order)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Observable<T> {
    /// `(x - x0)^2`
    Mse,
    /// `|x - x0|^p`, `p >= 1`
    Lp(T),
    Custom(CustomObservable<T>),
}

impl<T: Real> Observable<T> {
    pub fn lp(p: T) -> Result<Self> {
        if p >= T::one() && p.is_finite() {
            Ok(Observable::Lp(p))
        } else {
            Err(Error::InvalidParameter(format!("lp observable needs finite p >= 1, got {p}")))
        }
    }

    /// Parses `"mse"`, `"l1"` or `"lp:<p>"`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(Observable::Mse),
            "l1" => Ok(Observable::Lp(T::one())),
            "custom" => Err(Error::Config(
                "observable \"custom\" is only available programmatically".into(),
            )),
            _ => {
                let p = name
                    .strip_prefix("lp:")
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown observable \"{name}\"")))?;
                Self::lp(T::lit(p)).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Observable::Mse => "mse".into(),
            Observable::Lp(p) if *p == T::one() => "l1".into(),
            Observable::Lp(p) => format!("lp:{p}"),
            Observable::Custom(c) => c.name.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, x: T, x0: T) -> T {
        match self {
            Observable::Mse => (x - x0) * (x - x0),
            Observable::Lp(p) => (x - x0).abs().powf(*p),
            Observable::Custom(c) => (c.psi)(x, x0),
        }
    }

    /// Pseudo-Lipschitz order `k`.
    pub fn order(&self) -> u32 {
        match self {
            Observable::Mse => 2,
            Observable::Lp(p) => p.to_f64_lossy().ceil() as u32,
            Observable::Custom(c) => c.order,
        }
    }

    /// A constant `L` for which the pseudo-Lipschitz bound of order
    /// `order()` holds on `R^2`.
    pub fn lipschitz(&self) -> T {
        match self {
            Observable::Mse => T::lit(4.0),
            Observable::Lp(p) => {
                // |grad| <= p 2^{p/2} |v|^{p-1} <= p 2^{p/2} (1 + |v|^{k-1})
                let p = p.to_f64_lossy();
                T::lit(p * 2f64.powf(p / 2.0))
            }
            Observable::Custom(c) => c.lipschitz,
        }
    }

    pub(crate) fn diagonal_kink(&self) -> bool {
        match self {
            Observable::Mse => false,
            Observable::Lp(p) => {
                let p = p.to_f64_lossy();
                !(p.fract() == 0.0 && p as u64 % 2 == 0)
            }
            Observable::Custom(c) => c.diagonal_kink,
        }
    }
}

/// `(1/N) sum_i psi(x_i, x0_i)`.
pub fn empirical_functional<T: Real>(x: &[T], x0: &[T], psi: &Observable<T>) -> Result<T> {
    check_len("empirical functional", x0.len(), x.len())?;
    if x.is_empty() {
        return Err(Error::InvalidDimension("empirical functional of an empty vector".into()));
    }
    Ok(pairwise_sum_by(x.len(), &|i| psi.eval(x[i], x0[i])) / T::count(x.len()))
}

/// `E psi(eta(X0 + tau Z), X0)`, the limit of the empirical functional of
/// the iterate produced by `eta` from effective noise level `tau`.
pub fn se_prediction<T: Real>(
    psi: &Observable<T>,
    tau: T,
    prior: &Prior<T>,
    eta: &Denoiser<T>,
    quad: &Integrator<T>,
) -> Result<Expectation<T>> {
    if !(tau >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let f = |x: T, x0: T| psi.eval(x, x0);
    Ok(expect_denoised(&f, psi.diagonal_kink(), tau, prior, eta, quad))
}

/// Inner products of the general recursion and the gaps between the pairs
/// that agree in the large-system limit. All matrices are indexed `[r][s]`
/// for `0 <= r, s < t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticReport {
    /// `<h^{r+1}, h^{s+1}>`
    pub hh: Vec<Vec<f64>>,
    /// `<m^r, m^s>`
    pub mm: Vec<Vec<f64>>,
    /// `<b^r, b^s>`
    pub bb: Vec<Vec<f64>>,
    /// `<q^r, q^s> / delta`
    pub qq_over_delta: Vec<Vec<f64>>,
    /// `|hh - mm|`
    pub h_residual: Vec<Vec<f64>>,
    /// `|bb - qq_over_delta|`
    pub b_residual: Vec<Vec<f64>>,
    pub stein: Vec<SteinResidual>,
    pub decoupling: Vec<DecouplingResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteinResidual {
    pub r: usize,
    pub s: usize,
    pub residual: f64,
}

impl DiagnosticReport {
    pub fn max_h_residual(&self) -> f64 {
        max_entry(&self.h_residual)
    }

    pub fn max_b_residual(&self) -> f64 {
        max_entry(&self.b_residual)
    }

    pub fn all_finite(&self) -> bool {
        [&self.hh, &self.mm, &self.bb, &self.qq_over_delta, &self.h_residual, &self.b_residual]
            .iter()
            .all(|m| m.iter().flatten().all(|v| v.is_finite()))
            && self.stein.iter().all(|s| s.residual.is_finite())
            && self
                .decoupling
                .iter()
                .all(|d| d.joint.is_finite() && d.product.is_finite() && d.exact_residual.is_finite())
    }
}

fn max_entry(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().copied().fold(0.0, f64::max)
}

fn gram<T: Real>(vs: &[Vec<T>], scale: f64) -> Vec<Vec<f64>> {
    vs.iter()
        .map(|u| vs.iter().map(|v| inner(u, v).to_f64_lossy() * scale).collect())
        .collect()
}

fn abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).collect())
        .collect()
}

/// Gram matrices of `h^{r+1}`, `m^r`, `b^r` and `q^r / sqrt(delta)` for
/// every stored step, with their pairwise gaps.
pub fn lemma_inner_product_check<T: Real>(
    history: Option<&GeneralHistory<T>>,
    delta: T,
) -> Result<DiagnosticReport> {
    let hist = history.ok_or_else(|| Error::MissingHistory("general recursion ran without history".into()))?;
    let t = hist.h.len();
    if t == 0 || hist.m.len() < t || hist.b.len() < t || hist.q.len() < t {
        return Err(Error::MissingHistory(format!(
            "need at least one full step, have h: {}, m: {}, b: {}, q: {}",
            hist.h.len(),
            hist.m.len(),
            hist.b.len(),
            hist.q.len()
        )));
    }
    let hh = gram(&hist.h[..t], 1.0);
    let mm = gram(&hist.m[..t], 1.0);
    let bb = gram(&hist.b[..t], 1.0);
    let qq = gram(&hist.q[..t], 1.0 / delta.to_f64_lossy());
    Ok(DiagnosticReport {
        h_residual: abs_diff(&hh, &mm),
        b_residual: abs_diff(&bb, &qq),
        hh,
        mm,
        bb,
        qq_over_delta: qq,
        stein: Vec::new(),
        decoupling: Vec::new(),
    })
}

/// `|<h^{r+1}, phi(h^{s+1}, x0)> - <h^{r+1}, h^{s+1}> <phi'(h^{s+1}, x0)>|`,
/// where `phi` returns its value and its derivative in the first argument.
pub fn stein_identity_check<T: Real>(
    history: Option<&GeneralHistory<T>>,
    x0: &[T],
    phi: &dyn Fn(T, T) -> (T, T),
    r: usize,
    s: usize,
) -> Result<T> {
    let hist = history.ok_or_else(|| Error::MissingHistory("general recursion ran without history".into()))?;
    let (hr, hs) = match (hist.h.get(r), hist.h.get(s)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::MissingHistory(format!(
                "h^{} not stored (have {} steps)",
                r.max(s) + 1,
                hist.h.len()
            )))
        }
    };
    check_len("stein identity x0", hs.len(), x0.len())?;
    let mut vals = Vec::with_capacity(hs.len());
    let mut ders = Vec::with_capacity(hs.len());
    for (&h, &x) in hs.iter().zip(x0) {
        let (v, d) = phi(h, x);
        vals.push(v);
        ders.push(d);
    }
    Ok((inner(hr, &vals) - inner(hr, hs) * mean(&ders)).abs())
}

/// Outcome of a decoupling check for a product-form `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecouplingResult {
    /// Monte Carlo mean of `prod_s psi_s(x_{J(s)}, x0_{J(s)})` over random
    /// tuples of distinct indices.
    pub joint: f64,
    pub joint_stderr: f64,
    /// `prod_s (1/N) sum_i psi_s(x_i, x0_i)`.
    pub product: f64,
    /// `joint - product`.
    pub residual: f64,
    /// Exact mean over all tuples of distinct indices, minus `product`.
    pub exact_residual: f64,
    pub tuples: usize,
}

impl DecouplingResult {
    /// `|residual| / joint_stderr` (infinite when the error is zero but the
    /// residual is not).
    pub fn z_score(&self) -> f64 {
        if self.joint_stderr > 0.0 {
            self.residual.abs() / self.joint_stderr
        } else if self.residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Compares the joint law of `ell` distinct coordinates with the product of
/// the marginal empirical laws, for `psi = prod_s psi_s`.
pub fn decoupling_check<T: Real, R: Rng + ?Sized>(
    x: &[T],
    x0: &[T],
    factors: &[&dyn Fn(T, T) -> T],
    tuples: usize,
    rng: &mut R,
) -> Result<DecouplingResult> {
    check_len("decoupling x0", x.len(), x0.len())?;
    let ell = factors.len();
    let n = x.len();
    if ell < 2 {
        return Err(Error::InvalidParameter(format!("decoupling needs ell >= 2, got {ell}")));
    }
    if ell > n {
        return Err(Error::InvalidParameter(format!("ell = {ell} exceeds N = {n}")));
    }
    if ell > MAX_DECOUPLING_ELL {
        return Err(Error::InvalidParameter(format!(
            "ell = {ell} exceeds the supported maximum {MAX_DECOUPLING_ELL}"
        )));
    }
    if tuples == 0 {
        return Err(Error::InvalidParameter("decoupling needs at least one tuple".into()));
    }
    let values: Vec<Vec<f64>> = factors
        .iter()
        .map(|psi| x.iter().zip(x0).map(|(&a, &b)| psi(a, b).to_f64_lossy()).collect())
        .collect();
    let product: f64 = values.iter().map(|v| mean(v)).product();

    let draws: Vec<f64> = (0..tuples)
        .map(|_| {
            let idx = index::sample(rng, n, ell);
            idx.iter().enumerate().map(|(s, i)| values[s][i]).product()
        })
        .collect();
    let (joint, joint_stderr) = mean_and_stderr(&draws);
    let exact = distinct_tuple_mean(&values);
    Ok(DecouplingResult {
        joint,
        joint_stderr,
        product,
        residual: joint - product,
        exact_residual: exact - product,
        tuples,
    })
}

/// Mean of `prod_s a_s(i_s)` over ordered tuples of distinct indices, by
/// Mobius inversion over set partitions of the factor labels.
fn distinct_tuple_mean(a: &[Vec<f64>]) -> f64 {
    let ell = a.len();
    let n = a[0].len();
    let mut total = 0.0;
    let mut labels = vec![0usize; ell];
    loop {
        let blocks = labels.iter().copied().max().unwrap() + 1;
        let mut term = 1.0;
        for b in 0..blocks {
            let members: Vec<usize> = (0..ell).filter(|&s| labels[s] == b).collect();
            let size = members.len();
            let sum = pairwise_sum_by(n, &|i| members.iter().map(|&s| a[s][i]).product::<f64>());
            let sign = if size % 2 == 1 { 1.0 } else { -1.0 };
            let fact: f64 = (1..size).map(|k| k as f64).product();
            term *= sign * fact * sum;
        }
        total += term;
        if !next_restricted_growth(&mut labels) {
            break;
        }
    }
    let falling: f64 = (0..ell).map(|k| (n - k) as f64).product();
    total / falling
}

/// Advances a restricted growth string; returns false after the last one.
fn next_restricted_growth(labels: &mut [usize]) -> bool {
    for i in (1..labels.len()).rev() {
        let cap = labels[..i].iter().copied().max().unwrap() + 1;
        if labels[i] < cap {
            labels[i] += 1;
            for l in labels[i + 1..].iter_mut() {
                *l = 0;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoLipschitzOutcome {
    pub pass: bool,
    /// Largest `|psi(x) - psi(y)| / (L (1 + |x|^{k-1} + |y|^{k-1}) |x - y|)`.
    pub worst_ratio: f64,
}

/// Samples `trials` pairs uniformly from `[-20, 20]^dim` and checks the
/// pseudo-Lipschitz inequality of order `k` with constant `l`.
pub fn pseudo_lipschitz_validate(
    psi: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    k: u32,
    l: f64,
    trials: usize,
    key: StreamKey,
) -> Result<PseudoLipschitzOutcome> {
    if trials == 0 || dim == 0 {
        return Err(Error::InvalidParameter("need trials >= 1 and dim >= 1".into()));
    }
    let mut rng = key.rng(0);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    let (mut x, mut y) = (vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..trials {
        for j in 0..dim {
            x[j] = rng.random_range(-PSEUDO_LIPSCHITZ_BOX..=PSEUDO_LIPSCHITZ_BOX);
            y[j] = rng.random_range(-PSEUDO_LIPSCHITZ_BOX..=PSEUDO_LIPSCHITZ_BOX);
        }
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let d = norm(&diff);
        let gap = (psi(&x) - psi(&y)).abs();
        if d == 0.0 {
            if gap > 0.0 {
                worst = f64::INFINITY;
            }
            continue;
        }
        let e = k.saturating_sub(1) as i32;
        let bound = l * (1.0 + norm(&x).powi(e) + norm(&y).powi(e)) * d;
        worst = worst.max(gap / bound);
    }
    Ok(PseudoLipschitzOutcome {
        pass: worst <= 1.0,
        worst_ratio: worst,
    })
}
