//! Scalar state-evolution recursions and their closed forms.

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserSchedule, GeneralPair};
use crate::error::{Error, Result};
use crate::model::{NoiseSpec, Prior};
use crate::quadrature::{Expectation, Integrator, QuadratureConfig};
use crate::scalar::Real;

/// Relative tolerance for declaring a fixed point.
pub const DEFAULT_FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Absolute floor used by the fixed-point test when `tau^2` is near zero.
pub const FIXED_POINT_FLOOR: f64 = 1e-14;
/// Below this `tau^2` the multiuser recursion returns its analytic limit.
pub const MULTIUSER_TAU2_FLOOR: f64 = 1e-12;

/// Parameters of the compressed-sensing recursion.
#[derive(Debug, Clone)]
pub struct CsSpec<T> {
    pub prior: Prior<T>,
    pub sigma2: T,
    pub delta: T,
}

impl<T: Real> CsSpec<T> {
    pub fn new(prior: Prior<T>, sigma2: T, delta: T) -> Result<Self> {
        prior.validate()?;
        if !(sigma2 >= T::zero()) || !(delta > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "need sigma^2 >= 0 and delta > 0, got {sigma2} and {delta}"
            )));
        }
        Ok(Self { prior, sigma2, delta })
    }

    /// `tau_0^2 = sigma^2 + E{X0^2} / delta`.
    pub fn initial_tau2(&self) -> T {
        self.sigma2 + self.prior.second_moment() / self.delta
    }
}

/// A quadrature value whose `n` vs `2n` node disagreement exceeded the
/// precision tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionWarning {
    pub t: usize,
    pub discrepancy: f64,
}

fn warn_if_imprecise<T: Real>(e: &Expectation<T>, t: usize, out: &mut Vec<PrecisionWarning>) {
    if !e.is_precise() {
        out.push(PrecisionWarning {
            t,
            discrepancy: e.discrepancy,
        });
    }
}

/// Kinks in `z` of `z -> eta(x0 + tau z)`.
fn kinks_in_z<T: Real>(eta: &Denoiser<T>, x0: T, tau: T) -> Vec<T> {
    if tau <= T::zero() {
        return Vec::new();
    }
    eta.kinks().into_iter().map(|k| (k - x0) / tau).collect()
}

/// `E psi(eta(X0 + tau Z), X0)`. Set `error_kink` when `psi(x, x0)` is
/// non-smooth at `x = x0`; the matching points in `z` are then located by
/// bisection (the denoisers are monotone).
pub fn expect_denoised<T: Real>(
    psi: &dyn Fn(T, T) -> T,
    error_kink: bool,
    tau: T,
    prior: &Prior<T>,
    eta: &Denoiser<T>,
    quad: &Integrator<T>,
) -> Expectation<T> {
    let g = |x0: T, z: T| psi(eta.value(x0 + tau * z), x0);
    let kinks = |x0: T| {
        let mut k = kinks_in_z(eta, x0, tau);
        if error_kink && tau > T::zero() {
            if let Some(z) = crossing(&|z| eta.value(x0 + tau * z) - x0) {
                k.push(z);
            }
        }
        k
    };
    quad.over_prior(prior, &g, &kinks)
}

/// Root of a nondecreasing function on `[-cut, cut]`, if it changes sign
/// strictly inside.
fn crossing<T: Real>(h: &dyn Fn(T) -> T) -> Option<T> {
    let cut = T::lit(crate::quadrature::Z_CUTOFF);
    let (mut lo, mut hi) = (-cut, cut);
    if !(h(lo) < T::zero() && h(hi) > T::zero()) {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if h(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo + hi) / T::lit(2.0))
}

/// `E{[eta(X0 + tau Z) - X0]^2}`.
pub fn denoising_mse<T: Real>(
    tau2: T,
    prior: &Prior<T>,
    eta: &Denoiser<T>,
    quad: &Integrator<T>,
) -> Expectation<T> {
    if let Denoiser::Linear { gain } = eta {
        // Exact: (1 - l)^2 E X0^2 + l^2 tau^2, since Z is centred and independent.
        let one_minus = T::one() - *gain;
        return Expectation {
            value: one_minus * one_minus * prior.second_moment() + *gain * *gain * tau2,
            discrepancy: 0.0,
            method: quad.config().method,
        };
    }
    let tau = tau2.max(T::zero()).sqrt();
    expect_denoised(&|x, x0| (x - x0) * (x - x0), false, tau, prior, eta, quad)
}

/// One step of the compressed-sensing recursion:
/// `tau_{t+1}^2 = sigma^2 + E{[eta_t(X0 + tau_t Z) - X0]^2} / delta`.
pub fn se_step<T: Real>(
    tau2: T,
    spec: &CsSpec<T>,
    eta: &Denoiser<T>,
    quad: &Integrator<T>,
) -> Result<Expectation<T>> {
    if !(tau2 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tau^2 must be >= 0, got {tau2}")));
    }
    let e = denoising_mse(tau2, &spec.prior, eta, quad);
    Ok(Expectation {
        value: spec.sigma2 + e.value / spec.delta,
        discrepancy: e.discrepancy,
        method: e.method,
    })
}

/// Input of a general-recursion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneralSeInput<T> {
    /// `sigma_0^2 = lim ||q^0||^2 / (N delta)`.
    Initial { sigma0_sq: T },
    /// `tau_{t-1}^2` from the previous step.
    Previous { tau2: T },
}

/// `(tau_t^2, sigma_t^2)` of the general recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralSeStep<T> {
    pub tau2: T,
    pub sigma2: T,
    pub discrepancy: f64,
}

/// `sigma_t^2 = E{f_t(tau_{t-1} Z, X0)^2} / delta`, then
/// `tau_t^2 = E{g_t(sigma_t Z, W)^2}`.
#[allow(clippy::too_many_arguments)]
pub fn general_se_step<T: Real>(
    t: usize,
    input: GeneralSeInput<T>,
    pair: &dyn GeneralPair<T>,
    prior: &Prior<T>,
    noise: &NoiseSpec<T>,
    delta: T,
    quad: &Integrator<T>,
) -> Result<GeneralSeStep<T>> {
    let mut disc = 0.0f64;
    let sigma2 = match input {
        GeneralSeInput::Initial { sigma0_sq } => sigma0_sq,
        GeneralSeInput::Previous { tau2 } => {
            if !(tau2 >= T::zero()) {
                return Err(Error::InvalidParameter(format!("tau^2 must be >= 0, got {tau2}")));
            }
            let tau = tau2.sqrt();
            let e = quad.over_prior(
                prior,
                &|x0, z| {
                    let v = pair.f(t, tau * z, x0).0;
                    v * v
                },
                &|x0| {
                    if tau > T::zero() {
                        pair.f_kinks(t, x0).into_iter().map(|k| k / tau).collect()
                    } else {
                        Vec::new()
                    }
                },
            );
            disc = disc.max(e.discrepancy);
            e.value / delta
        }
    };
    let sigma = sigma2.max(T::zero()).sqrt();
    let e = quad.over_noise(
        noise,
        &|w, z| {
            let v = pair.g(t, sigma * z, w).0;
            v * v
        },
        &|w| {
            if sigma > T::zero() {
                pair.g_kinks(t, w).into_iter().map(|k| k / sigma).collect()
            } else {
                Vec::new()
            }
        },
    );
    disc = disc.max(e.discrepancy);
    Ok(GeneralSeStep {
        tau2: e.value,
        sigma2,
        discrepancy: disc,
    })
}

/// Closed-form limit of the linear recursion under the optimal gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFixedPoint<T> {
    pub tau2_inf: T,
    /// `(tau_inf^2 - sigma^2) delta`.
    pub mse_inf: T,
    /// The direct closed-form expression for the limiting MSE.
    pub mse_closed_form: T,
}

pub fn linear_se_fixed_point<T: Real>(v2: T, sigma2: T, delta: T) -> Result<LinearFixedPoint<T>> {
    if !(v2 > T::zero()) || !(sigma2 >= T::zero()) || !(delta > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "need v^2 > 0, sigma^2 >= 0, delta > 0; got {v2}, {sigma2}, {delta}"
        )));
    }
    let c = (T::one() - delta) / delta;
    let half = T::lit(0.5);
    let a = sigma2 + c * v2;
    let root = (a * a + T::lit(4.0) * sigma2 * v2).sqrt();
    let tau2_inf = half * (a + root);
    let mse_inf = (tau2_inf - sigma2) * delta;
    let mse_closed_form = delta * half * ((c * v2 - sigma2) + root);
    Ok(LinearFixedPoint {
        tau2_inf,
        mse_inf,
        mse_closed_form,
    })
}

/// Linear recursion with an arbitrary gain:
/// `tau_{t+1}^2 = sigma^2 + (1 - l)^2 v^2 / delta + l^2 tau_t^2 / delta`.
pub fn linear_se_step<T: Real>(tau2: T, gain: T, v2: T, sigma2: T, delta: T) -> T {
    let om = T::one() - gain;
    sigma2 + om * om * v2 / delta + gain * gain * tau2 / delta
}

/// `tau_{t+1}^2 = sigma^2 + E{[tanh(tau^-2 + tau^-1 Z) - 1]^2} / delta`.
pub fn multiuser_se_step<T: Real>(
    tau2: T,
    sigma2: T,
    delta: T,
    quad: &Integrator<T>,
) -> Result<Expectation<T>> {
    if tau2 < T::lit(MULTIUSER_TAU2_FLOOR) {
        if tau2 < T::zero() {
            return Err(Error::InvalidParameter(format!("tau^2 must be >= 0, got {tau2}")));
        }
        return Ok(Expectation {
            value: sigma2,
            discrepancy: 0.0,
            method: quad.config().method,
        });
    }
    let inv_tau2 = T::one() / tau2;
    let inv_tau = inv_tau2.sqrt();
    let e = quad.normal(
        &|z| {
            let d = (inv_tau2 + inv_tau * z).tanh() - T::one();
            d * d
        },
        &[],
    );
    Ok(Expectation {
        value: sigma2 + e.value / delta,
        discrepancy: e.discrepancy,
        method: e.method,
    })
}

/// `tau_{t+1}^2 = E{f(tau_t Z)^2}`.
pub fn symmetric_se_step<T: Real>(
    tau2: T,
    f: &Denoiser<T>,
    quad: &Integrator<T>,
) -> Result<Expectation<T>> {
    if !(tau2 >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tau^2 must be >= 0, got {tau2}")));
    }
    let tau = tau2.sqrt();
    let kinks = kinks_in_z(f, T::zero(), tau);
    Ok(quad.normal(
        &|z| {
            let v = f.value(tau * z);
            v * v
        },
        &kinks,
    ))
}

/// Which scalar recursion to iterate.
#[derive(Debug, Clone)]
pub enum SeModel<T> {
    CompressedSensing {
        spec: CsSpec<T>,
        schedule: DenoiserSchedule<T>,
    },
    Multiuser {
        sigma2: T,
        delta: T,
    },
    Symmetric {
        f: Denoiser<T>,
        tau1_sq: T,
    },
}

#[derive(Debug, Clone)]
pub struct SeTrajectory<T> {
    /// `tau_t^2` for `t = first_index, first_index + 1, ...`.
    pub tau2: Vec<T>,
    /// `sigma_t^2`, general recursion only.
    pub sigma2_t: Option<Vec<T>>,
    /// 0 for the compressed-sensing and multiuser recursions, 1 for the
    /// symmetric one (which starts from `tau_1^2`).
    pub first_index: usize,
    /// The step at which `|tau_{t+1}^2 - tau_t^2| < tol tau_t^2` first held.
    pub fixed_point: Option<usize>,
    /// Denoisers `eta_t` used by the compressed-sensing recursion.
    pub denoisers: Vec<Denoiser<T>>,
    pub warnings: Vec<PrecisionWarning>,
    pub tolerance: f64,
    pub quadrature: QuadratureConfig,
}

impl<T: Real> SeTrajectory<T> {
    /// `tau_t^2`; past the end of a converged trajectory the fixed point is returned.
    pub fn tau2_at(&self, t: usize) -> T {
        let i = t.saturating_sub(self.first_index).min(self.tau2.len() - 1);
        self.tau2[i]
    }

    pub fn len(&self) -> usize {
        self.tau2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau2.is_empty()
    }
}

fn reached_fixed_point<T: Real>(prev: T, next: T, tol: f64) -> bool {
    let (p, n) = (prev.to_f64_lossy(), next.to_f64_lossy());
    (n - p).abs() < (tol * p.abs()).max(FIXED_POINT_FLOOR)
}

fn is_stationary_from<T: Real>(schedule: &DenoiserSchedule<T>, t: usize) -> bool {
    use crate::denoiser::ParamPolicy;
    match schedule {
        DenoiserSchedule::SoftThreshold(p)
        | DenoiserSchedule::Linear(p)
        | DenoiserSchedule::Tanh(p)
        | DenoiserSchedule::Mmse { policy: p, .. } => match p {
            ParamPolicy::Fixed(v) => v.len() <= t + 1 || v[t..].iter().all(|x| *x == v[t]),
            _ => true,
        },
        DenoiserSchedule::Constant(_) => true,
    }
}

/// Runs `steps` iterations of the chosen recursion, stopping early when a
/// fixed point is reached and the denoiser no longer changes with `t`.
pub fn se_trajectory<T: Real>(
    model: &SeModel<T>,
    steps: usize,
    tol: f64,
    quad: &Integrator<T>,
) -> Result<SeTrajectory<T>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("state evolution needs T >= 1".into()));
    }
    let mut warnings = Vec::new();
    let mut denoisers = Vec::new();
    let mut fixed_point = None;
    let (first_index, mut tau2) = match model {
        SeModel::CompressedSensing { spec, .. } => (0, vec![spec.initial_tau2()]),
        SeModel::Multiuser { sigma2, delta } => (0, vec![*sigma2 + T::one() / *delta]),
        SeModel::Symmetric { tau1_sq, .. } => (1, vec![*tau1_sq]),
    };
    for s in 0..steps {
        let t = first_index + s;
        let cur = *tau2.last().unwrap();
        let e = match model {
            SeModel::CompressedSensing { spec, schedule } => {
                let eta = schedule.resolve(t, cur, &spec.prior)?;
                let e = se_step(cur, spec, &eta, quad)?;
                denoisers.push(eta);
                e
            }
            SeModel::Multiuser { sigma2, delta } => multiuser_se_step(cur, *sigma2, *delta, quad)?,
            SeModel::Symmetric { f, .. } => symmetric_se_step(cur, f, quad)?,
        };
        warn_if_imprecise(&e, t, &mut warnings);
        if !e.value.is_finite() {
            return Err(Error::Diverged { t });
        }
        tau2.push(e.value);
        if fixed_point.is_none() && reached_fixed_point(cur, e.value, tol) {
            fixed_point = Some(t + 1);
            let stationary = match model {
                SeModel::CompressedSensing { schedule, .. } => is_stationary_from(schedule, t + 1),
                _ => true,
            };
            if stationary {
                break;
            }
        }
    }
    Ok(SeTrajectory {
        tau2,
        sigma2_t: None,
        first_index,
        fixed_point,
        denoisers,
        warnings,
        tolerance: tol,
        quadrature: quad.config().clone(),
    })
}

/// Iterates the general recursion from `sigma_0^2` for `steps` steps,
/// returning `tau_0^2, ..., tau_{steps-1}^2` and the matching `sigma_t^2`.
#[allow(clippy::too_many_arguments)]
pub fn general_se_trajectory<T: Real>(
    sigma0_sq: T,
    steps: usize,
    pair: &dyn GeneralPair<T>,
    prior: &Prior<T>,
    noise: &NoiseSpec<T>,
    delta: T,
    quad: &Integrator<T>,
) -> Result<SeTrajectory<T>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("state evolution needs T >= 1".into()));
    }
    let mut tau2 = Vec::with_capacity(steps);
    let mut sigma2 = Vec::with_capacity(steps);
    let mut warnings = Vec::new();
    let mut input = GeneralSeInput::Initial { sigma0_sq };
    for t in 0..steps {
        let s = general_se_step(t, input, pair, prior, noise, delta, quad)?;
        if s.discrepancy >= crate::quadrature::PRECISION_TOLERANCE
            && quad.config().method == crate::quadrature::ExpectationMethod::Quadrature
        {
            warnings.push(PrecisionWarning {
                t,
                discrepancy: s.discrepancy,
            });
        }
        tau2.push(s.tau2);
        sigma2.push(s.sigma2);
        input = GeneralSeInput::Previous { tau2: s.tau2 };
    }
    Ok(SeTrajectory {
        tau2,
        sigma2_t: Some(sigma2),
        first_index: 0,
        fixed_point: None,
        denoisers: Vec::new(),
        warnings,
        tolerance: 0.0,
        quadrature: quad.config().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{AmpPair, FnPair, ParamPolicy};

    fn quad() -> Integrator<f64> {
        Integrator::new(QuadratureConfig::default()).unwrap()
    }

    fn sparse_spec() -> CsSpec<f64> {
        CsSpec::new(Prior::three_point(0.1).unwrap(), 0.2, 0.5).unwrap()
    }

    #[test]
    fn identity_denoiser_propagates_variance() {
        let spec = sparse_spec();
        let e = se_step(0.3, &spec, &Denoiser::identity(), &quad()).unwrap();
        assert!((e.value - (0.2 + 0.3 / 0.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_denoiser_resets_to_tau0() {
        let spec = sparse_spec();
        let e = se_step(0.3, &spec, &Denoiser::zero(), &quad()).unwrap();
        assert!((e.value - spec.initial_tau2()).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_step_is_at_least_sigma2_and_precise() {
        let spec = sparse_spec();
        let q = quad();
        for tau2 in [1e-6, 0.01, 0.3, 2.0, 50.0] {
            let e = se_step(tau2, &spec, &Denoiser::soft_threshold(1.0).unwrap(), &q).unwrap();
            assert!(e.value >= spec.sigma2);
            assert!(e.is_precise(), "tau2 = {tau2}: {}", e.discrepancy);
        }
    }

    #[test]
    fn negative_tau2_is_rejected() {
        assert!(se_step(-1.0, &sparse_spec(), &Denoiser::identity(), &quad()).is_err());
    }

    #[test]
    fn linear_closed_forms() {
        let fp = linear_se_fixed_point(1.0f64, 0.0, 0.5).unwrap();
        assert!((fp.tau2_inf - 1.0).abs() < 1e-15);
        assert!((fp.mse_inf - 0.5).abs() < 1e-15);
        let fp = linear_se_fixed_point(1.0, 1.0, 1.0).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((fp.tau2_inf - phi).abs() < 1e-14);
        assert!((fp.mse_inf - (phi - 1.0)).abs() < 1e-14);
        assert!((fp.mse_inf - fp.mse_closed_form).abs() < 1e-12);
        assert!(linear_se_fixed_point(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn iterated_optimal_linear_recursion_converges() {
        let (v2, s2, d) = (1.3f64, 0.2, 0.7);
        let fp = linear_se_fixed_point(v2, s2, d).unwrap();
        let mut tau2 = s2 + v2 / d;
        for _ in 0..200 {
            let gain = crate::denoiser::optimal_linear_gain(v2, tau2);
            tau2 = linear_se_step(tau2, gain, v2, s2, d);
        }
        assert!(((tau2 - fp.tau2_inf) / fp.tau2_inf).abs() < 1e-10);
    }

    #[test]
    fn trajectory_bookkeeping() {
        let q = quad();
        let model = SeModel::CompressedSensing {
            spec: sparse_spec(),
            schedule: DenoiserSchedule::SoftThreshold(ParamPolicy::ScaledTau(1.5)),
        };
        let tr = se_trajectory(&model, 1, 1e-10, &q).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.tau2[0], sparse_spec().initial_tau2());

        let zero = SeModel::CompressedSensing {
            spec: sparse_spec(),
            schedule: DenoiserSchedule::Constant(Denoiser::zero()),
        };
        let tr = se_trajectory(&zero, 10, 1e-10, &q).unwrap();
        assert!(tr.tau2.iter().all(|&v| v == tr.tau2[0]));
        assert_eq!(tr.fixed_point, Some(1));
        assert_eq!(tr.tau2_at(7), tr.tau2[0]);
    }

    #[test]
    fn trajectory_stays_above_noise_floor() {
        let q = quad();
        let model = SeModel::CompressedSensing {
            spec: sparse_spec(),
            schedule: DenoiserSchedule::SoftThreshold(ParamPolicy::ScaledTau(1.5)),
        };
        let tr = se_trajectory(&model, 30, 1e-10, &q).unwrap();
        assert!(tr.tau2.iter().all(|&v| v >= 0.2));
        assert!(tr.warnings.is_empty());
    }

    #[test]
    fn linear_trajectory_reaches_closed_form() {
        let q = quad();
        let (v2, s2, d) = (1.0, 0.5, 2.0);
        let model = SeModel::CompressedSensing {
            spec: CsSpec::new(Prior::gaussian(v2).unwrap(), s2, d).unwrap(),
            schedule: DenoiserSchedule::Linear(ParamPolicy::StateEvolution),
        };
        let tr = se_trajectory(&model, 500, 1e-14, &q).unwrap();
        let fp = linear_se_fixed_point(v2, s2, d).unwrap();
        let last = *tr.tau2.last().unwrap();
        assert!(((last - fp.tau2_inf) / fp.tau2_inf).abs() < 1e-10);
    }

    #[test]
    fn multiuser_limits() {
        let q = quad();
        let (s2, d) = (0.25, 0.5);
        assert_eq!(multiuser_se_step(0.0, s2, d, &q).unwrap().value, s2);
        assert!((multiuser_se_step(1e-10, s2, d, &q).unwrap().value - s2).abs() < 1e-6);
        assert!((multiuser_se_step(1e10, s2, d, &q).unwrap().value - (s2 + 1.0 / d)).abs() < 1e-6);
    }

    #[test]
    fn multiuser_matches_generic_step_with_tanh() {
        let q = quad();
        let (s2, d) = (0.25, 0.5);
        let spec = CsSpec::new(Prior::Antipodal, s2, d).unwrap();
        for tau2 in [0.05, 0.4, 1.0, 3.0] {
            let a = multiuser_se_step(tau2, s2, d, &q).unwrap();
            let b = se_step(tau2, &spec, &Denoiser::tanh(tau2).unwrap(), &q).unwrap();
            assert!((a.value - b.value).abs() < 1e-12, "tau2 = {tau2}: {} vs {}", a.value, b.value);
            assert!(a.is_precise(), "{}", a.discrepancy);
        }
    }

    #[test]
    fn symmetric_examples() {
        let q = quad();
        assert!((symmetric_se_step(0.7, &Denoiser::identity(), &q).unwrap().value - 0.7).abs() < 1e-13);
        assert_eq!(symmetric_se_step(0.7, &Denoiser::zero(), &q).unwrap().value, 0.0);
    }

    #[test]
    fn general_identity_pair() {
        let q = quad();
        let pair = FnPair::identity();
        let prior = Prior::three_point(0.1).unwrap();
        let noise = NoiseSpec::gaussian(0.3).unwrap();
        let s = general_se_step(2, GeneralSeInput::Previous { tau2: 0.8 }, &pair, &prior, &noise, 0.5, &q).unwrap();
        assert!((s.sigma2 - 1.6).abs() < 1e-13);
        assert!((s.tau2 - s.sigma2).abs() < 1e-13);
    }

    #[test]
    fn general_amp_pair_reproduces_cs_recursion() {
        let q = quad();
        let spec = sparse_spec();
        let noise = NoiseSpec::gaussian(spec.sigma2).unwrap();
        let etas: Vec<_> = [0.9, 0.7, 0.6, 0.5]
            .iter()
            .map(|&th| Denoiser::soft_threshold(th).unwrap())
            .collect();
        let pair = AmpPair::new(etas.clone()).unwrap();
        let sigma0 = spec.prior.second_moment() / spec.delta;
        let gen = general_se_trajectory(sigma0, 5, &pair, &spec.prior, &noise, spec.delta, &q).unwrap();
        assert!((gen.tau2[0] - spec.initial_tau2()).abs() < 1e-12);
        let mut tau2 = spec.initial_tau2();
        for t in 1..5 {
            tau2 = se_step(tau2, &spec, &etas[t - 1], &q).unwrap().value;
            assert!((gen.tau2[t] - tau2).abs() < 1e-12, "t = {t}: {} vs {tau2}", gen.tau2[t]);
            let sig = gen.sigma2_t.as_ref().unwrap()[t];
            assert!((gen.tau2[t] - (spec.sigma2 + sig)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_is_stable_under_node_doubling() {
        let q61 = quad();
        let q121 = Integrator::new(QuadratureConfig { nodes: 121, ..Default::default() }).unwrap();
        let spec = sparse_spec();
        for tau2 in [0.05, 0.3, 1.7] {
            let eta = Denoiser::soft_threshold(0.8).unwrap();
            let a = se_step(tau2, &spec, &eta, &q61).unwrap().value;
            let b = se_step(tau2, &spec, &eta, &q121).unwrap().value;
            assert!(((a - b) / b).abs() < 1e-9);
        }
    }

    #[test]
    fn tau_infinity_increases_with_noise() {
        let mut prev = 0.0;
        for i in 0..20 {
            let s2 = i as f64 * 0.1;
            let fp = linear_se_fixed_point(1.0, s2, 0.6).unwrap();
            assert!(fp.tau2_inf > prev);
            prev = fp.tau2_inf;
        }
    }
}
