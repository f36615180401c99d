use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy};
use crate::model::{ProblemInstance, SensingMatrix};
use crate::scalar::Real;

/// Whether the residual carries the Onsager memory term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Amp,
    /// Iterative soft thresholding: `z^t = y - A x^t`.
    Ist,
}

/// AMP iterate at step `t`: the estimate `x^t`, the residual `z^t`, and the
/// mean derivative `<eta'_{t-1}>` that entered `z^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpState<T> {
    pub x: Vec<T>,
    pub z: Vec<T>,
    pub onsager_avg: T,
    pub t: usize,
}

impl<T: Real> AmpState<T> {
    /// `x^0 = 0`, and `z^0 = y` because `z^{-1} = 0`.
    pub fn new(inst: &ProblemInstance<T>) -> Self {
        Self {
            x: vec![T::zero(); inst.big_n()],
            z: inst.y().to_vec(),
            onsager_avg: T::zero(),
            t: 0,
        }
    }

    fn check(&self, inst: &ProblemInstance<T>) -> Result<()> {
        check_len("AMP estimate", inst.big_n(), self.x.len())?;
        check_len("AMP residual", inst.n(), self.z.len())
    }
}

/// `y - A x + (1/delta) <eta'> z_prev`.
pub fn onsager_residual<T: Real>(
    y: &[T],
    a: &SensingMatrix<T>,
    x: &[T],
    z_prev: &[T],
    onsager_avg: T,
    delta: T,
) -> Result<Vec<T>> {
    check_len("residual", y.len(), z_prev.len())?;
    let mut z = plain_residual(y, a, x)?;
    axpy(&mut z, onsager_avg / delta, z_prev);
    Ok(z)
}

fn plain_residual<T: Real>(y: &[T], a: &SensingMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    let ax = a.mul_vec(x)?;
    check_len("observation", ax.len(), y.len())?;
    Ok(y.iter().zip(&ax).map(|(y, ax)| *y - *ax).collect())
}

fn step<T: Real>(
    state: AmpState<T>,
    inst: &ProblemInstance<T>,
    eta: &Denoiser<T>,
    variant: Variant,
) -> Result<AmpState<T>> {
    state.check(inst)?;
    let a = inst.a();
    let mut pseudo = a.mul_transpose_vec(&state.z)?;
    axpy(&mut pseudo, T::one(), &state.x);
    let (x, avg) = eta.apply(&pseudo);
    let t = state.t + 1;
    let z = match variant {
        Variant::Amp => onsager_residual(inst.y(), a, &x, &state.z, avg, inst.delta())?,
        Variant::Ist => plain_residual(inst.y(), a, &x)?,
    };
    if !all_finite(&x) || !all_finite(&z) || !avg.is_finite() {
        return Err(Error::Diverged { t });
    }
    Ok(AmpState {
        x,
        z,
        onsager_avg: avg,
        t,
    })
}

/// `x^{t+1} = eta_t(A^T z^t + x^t)`, then
/// `z^{t+1} = y - A x^{t+1} + (1/delta) z^t <eta_t'(A^T z^t + x^t)>`.
pub fn amp_step<T: Real>(
    state: AmpState<T>,
    inst: &ProblemInstance<T>,
    eta: &Denoiser<T>,
) -> Result<AmpState<T>> {
    step(state, inst, eta, Variant::Amp)
}

/// As [`amp_step`] without the Onsager term.
pub fn ist_step<T: Real>(
    state: AmpState<T>,
    inst: &ProblemInstance<T>,
    eta: &Denoiser<T>,
) -> Result<AmpState<T>> {
    step(state, inst, eta, Variant::Ist)
}

/// Runs `denoisers.len()` steps from `x^0 = 0`, calling `observe` on every
/// new state `x^1, x^2, ...`.
pub fn run_iterations<T: Real>(
    inst: &ProblemInstance<T>,
    denoisers: &[Denoiser<T>],
    variant: Variant,
    mut observe: impl FnMut(&AmpState<T>),
) -> Result<AmpState<T>> {
    let mut s = AmpState::new(inst);
    for eta in denoisers {
        s = step(s, inst, eta, variant)?;
        observe(&s);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::model::{build_instance, sample_sensing_matrix, sample_signal, NoiseSpec, Prior};
    use crate::rng::{Purpose, StreamKey};

    fn scalar_instance(a: f64, x0: f64, w: f64) -> ProblemInstance<f64> {
        ProblemInstance::from_parts(SensingMatrix::from_rows(&[vec![a]]).unwrap(), vec![x0], vec![w])
            .unwrap()
    }

    fn random_instance(n: usize, big_n: usize, seed: u64) -> ProblemInstance<f64> {
        let a = sample_sensing_matrix(n, big_n, StreamKey::root(seed, Purpose::Matrix)).unwrap();
        let x0 = sample_signal(&Prior::three_point(0.2).unwrap(), big_n, StreamKey::root(seed, Purpose::Signal))
            .unwrap();
        build_instance(a, x0, &NoiseSpec::gaussian(0.01).unwrap(), StreamKey::root(seed, Purpose::Noise)).unwrap()
    }

    #[test]
    fn initial_residual_is_observation() {
        let inst = random_instance(20, 40, 3);
        let s = AmpState::new(&inst);
        assert_eq!(s.z, inst.y());
        assert!(s.x.iter().all(|&v| v == 0.0));
        // The residual rule with z^{-1} = 0 agrees.
        let z0 = onsager_residual(inst.y(), inst.a(), &s.x, &vec![0.0; 20], 0.7, inst.delta()).unwrap();
        assert_eq!(z0, inst.y());
    }

    #[test]
    fn scalar_recursion_by_hand() {
        let inst = scalar_instance(1.0, 2.0, 0.0);
        let s = AmpState::new(&inst);
        assert_eq!(s.z, vec![2.0]);
        let eta = Denoiser::soft_threshold(1.0).unwrap();
        let s = amp_step(s, &inst, &eta).unwrap();
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.onsager_avg, 1.0);
        // z^1 = y - x^1 + (1/delta) z^0 <eta'> = 2 - 1 + 2 = 3
        assert_eq!(s.z, vec![3.0]);
    }

    #[test]
    fn onsager_term_value() {
        let a = SensingMatrix::from_matrix(DenseMatrix::<f64>::zeros(2, 4));
        let z = onsager_residual(&[0.0, 0.0], &a, &[0.0; 4], &[1.0, 1.0], 0.3, 0.5).unwrap();
        assert!((z[0] - 0.6).abs() < 1e-15 && (z[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ist_residual_ignores_onsager_average() {
        let inst = scalar_instance(1.0, 2.0, 0.0);
        let mk = |avg| AmpState {
            x: vec![1.0],
            z: vec![5.0],
            onsager_avg: avg,
            t: 3,
        };
        let eta = Denoiser::identity();
        let a = ist_step(mk(0.3), &inst, &eta).unwrap();
        let b = ist_step(mk(0.9), &inst, &eta).unwrap();
        assert_eq!(a, b);
        assert_eq!(plain_residual(inst.y(), inst.a(), &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn first_step_agrees_between_variants() {
        let inst = random_instance(30, 60, 9);
        let eta = Denoiser::soft_threshold(0.5).unwrap();
        let a = amp_step(AmpState::new(&inst), &inst, &eta).unwrap();
        let b = ist_step(AmpState::new(&inst), &inst, &eta).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn variants_differ_exactly_by_onsager_term() {
        let inst = random_instance(40, 80, 11);
        let eta = Denoiser::soft_threshold(0.4).unwrap();
        let s1 = amp_step(AmpState::new(&inst), &inst, &eta).unwrap();
        let amp = amp_step(s1.clone(), &inst, &eta).unwrap();
        let ist = ist_step(s1.clone(), &inst, &eta).unwrap();
        assert_eq!(amp.x, ist.x);
        let scale = amp.onsager_avg / inst.delta();
        for i in 0..inst.n() {
            let rebuilt = ist.z[i] + scale * s1.z[i];
            assert!((rebuilt - amp.z[i]).abs() <= 1e-14 * (1.0 + amp.z[i].abs()));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = random_instance(10, 20, 1);
        let bad = AmpState {
            x: vec![0.0; 19],
            z: vec![0.0; 10],
            onsager_avg: 0.0,
            t: 0,
        };
        assert!(matches!(
            amp_step(bad, &inst, &Denoiser::identity()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn overflow_reports_iteration() {
        let inst = scalar_instance(1.0, 2.0, 0.0);
        let eta = Denoiser::linear(1e300).unwrap();
        let s = amp_step(AmpState::new(&inst), &inst, &eta).unwrap();
        match amp_step(s, &inst, &eta) {
            Err(Error::Diverged { t }) => assert_eq!(t, 2),
            other => panic!("{other:?}"),
        }
    }
}
