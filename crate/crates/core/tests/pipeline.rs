use amp_core::denoiser::{soft_threshold, AmpPair, Denoiser, DenoiserSchedule, ParamPolicy};
use amp_core::model::{build_instance, sample_sensing_matrix, sample_signal, NoiseSpec, Prior, ProblemInstance};
use amp_core::observables::{empirical_functional, lemma_inner_product_check, se_prediction, stein_identity_check, Observable};
use amp_core::quadrature::{Integrator, QuadratureConfig};
use amp_core::recursion::{general_step, run_iterations, GeneralState, Variant};
use amp_core::rng::{Purpose, StreamKey};
use amp_core::scalar::Real;
use amp_core::state_evolution::{se_trajectory, CsSpec, SeModel};
use rand_distr::{Distribution, StandardNormal};

fn instance<T: Real>(n: usize, big_n: usize, seed: u64, r: u64) -> ProblemInstance<T> {
    let a = sample_sensing_matrix(n, big_n, StreamKey::new(seed, r, Purpose::Matrix)).unwrap();
    let prior = Prior::three_point(T::lit(0.1)).unwrap();
    let x0 = sample_signal(&prior, big_n, StreamKey::new(seed, r, Purpose::Signal)).unwrap();
    build_instance(a, x0, &NoiseSpec::gaussian(T::lit(0.01)).unwrap(), StreamKey::new(seed, r, Purpose::Noise)).unwrap()
}

fn thresholds<T: Real>(delta: T, steps: usize) -> Vec<Denoiser<T>> {
    let spec = CsSpec::new(Prior::three_point(T::lit(0.1)).unwrap(), T::lit(0.01), delta).unwrap();
    let model = SeModel::CompressedSensing {
        spec,
        schedule: DenoiserSchedule::SoftThreshold(ParamPolicy::ScaledTau(T::lit(1.5))),
    };
    let quad = Integrator::new(QuadratureConfig::default()).unwrap();
    let mut d = se_trajectory(&model, steps, 1e-10, &quad).unwrap().denoisers;
    while d.len() < steps {
        d.push(d.last().unwrap().clone());
    }
    d
}

#[test]
fn single_precision_tracks_double_precision() {
    let (n, big_n) = (320, 500);
    let x64 = run_iterations(&instance::<f64>(n, big_n, 3, 0), &thresholds(0.64, 6), Variant::Amp, |_| {}).unwrap().x;
    let x32 = run_iterations(&instance::<f32>(n, big_n, 3, 0), &thresholds(0.64f32, 6), Variant::Amp, |_| {}).unwrap().x;
    let worst = x64.iter().zip(&x32).map(|(a, b)| (a - *b as f64).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn ensemble_mse_is_near_prediction() {
    let (n, big_n) = (640, 1000);
    let etas = thresholds(0.64, 5);
    let quad = Integrator::new(QuadratureConfig::default()).unwrap();
    let spec = CsSpec::new(Prior::three_point(0.1).unwrap(), 0.01, 0.64).unwrap();
    let model = SeModel::CompressedSensing {
        spec: spec.clone(),
        schedule: DenoiserSchedule::SoftThreshold(ParamPolicy::ScaledTau(1.5)),
    };
    let traj = se_trajectory(&model, 5, 1e-10, &quad).unwrap();
    let tau = f64::sqrt(traj.tau2_at(4));
    let pred = se_prediction(&Observable::Mse, tau, &spec.prior, &etas[4], &quad).unwrap().value;
    let mut mean = 0.0;
    for r in 0..8 {
        let x = run_iterations(&instance::<f64>(n, big_n, 17, r), &etas, Variant::Amp, |_| {}).unwrap().x;
        let inst = instance::<f64>(n, big_n, 17, r);
        mean += empirical_functional(&x, inst.x0(), &Observable::Mse).unwrap() / 8.0;
    }
    assert!((mean - pred).abs() < 0.15 * pred, "{mean} vs {pred}");
}

#[test]
fn l1_prediction_matches_monte_carlo() {
    let prior = Prior::three_point(0.1).unwrap();
    let (tau, theta) = (0.5f64, 0.7);
    let eta = Denoiser::soft_threshold(theta).unwrap();
    let quad = Integrator::new(QuadratureConfig::default()).unwrap();
    let pred = se_prediction(&Observable::Lp(1.0), tau, &prior, &eta, &quad).unwrap().value;
    let mut rng = StreamKey::root(404, Purpose::Validation).rng(0);
    let m = 10_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..m {
        let x0 = prior.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = (soft_threshold(x0 + tau * z, theta).unwrap() - x0).abs();
        s += v;
        s2 += v * v;
    }
    let mean = s / m as f64;
    let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
    assert!((pred - mean).abs() <= 3.0 * se, "{pred} vs {mean} +- {se}");
}

/// Ensemble-mean inner-product gaps `(h family, b family)` and the
/// constant-phi Stein residual at `r = 0`.
fn lemma_means(big_n: usize, reps: u64) -> (f64, f64, f64, f64) {
    let n = (0.64 * big_n as f64).round() as usize;
    let pair = AmpPair::new(thresholds(0.64, 3)).unwrap();
    let (mut h, mut b, mut b00, mut stein) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..reps {
        let inst = instance::<f64>(n, big_n, 55, r);
        let mut s = GeneralState::new(inst.x0().iter().map(|v| -v).collect(), true);
        for _ in 0..3 {
            s = general_step(s, inst.a(), inst.x0(), inst.w(), &pair).unwrap();
        }
        let rep = lemma_inner_product_check(s.history.as_ref(), inst.delta()).unwrap();
        let cnt = 9.0 * reps as f64;
        h += rep.h_residual.iter().flatten().sum::<f64>() / cnt;
        b += rep.b_residual.iter().flatten().sum::<f64>() / cnt;
        b00 += rep.b_residual[0][0] / reps as f64;
        stein += stein_identity_check(s.history.as_ref(), inst.x0(), &|_, _| (1.0, 0.0), 0, 0).unwrap() / reps as f64;
    }
    (h, b, b00, stein)
}

#[test]
fn inner_product_gaps_shrink_with_n() {
    let small = lemma_means(250, 10);
    let large = lemma_means(2000, 10);
    assert!(large.0 < small.0 && large.1 < small.1, "{small:?} {large:?}");
    assert!(small.2 <= 5.0 / (160f64).sqrt() && large.2 <= 5.0 / (1280f64).sqrt());
    assert!(large.3 < small.3, "{small:?} {large:?}");
}
