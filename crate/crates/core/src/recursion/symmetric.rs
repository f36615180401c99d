use std::sync::Arc;

use crate::denoiser::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy, DenseMatrix};
use crate::model::fill_gaussian_rows;
use crate::rng::StreamKey;
use crate::scalar::Real;

/// `G = A + A^T` with `A` an `N x N` matrix of i.i.d. `N(0, 1/(2N))` entries.
pub fn sample_symmetric_matrix<T: Real>(big_n: usize, key: StreamKey) -> Result<DenseMatrix<T>> {
    if big_n == 0 {
        return Err(Error::InvalidDimension("symmetric matrix needs N >= 1".into()));
    }
    let mut a = DenseMatrix::<T>::zeros(big_n, big_n);
    fill_gaussian_rows(&mut a, 1.0 / (2.0 * big_n as f64), key);
    let mut g = DenseMatrix::zeros(big_n, big_n);
    for i in 0..big_n {
        for j in 0..big_n {
            g.set(i, j, a.get(i, j) + a.get(j, i));
        }
    }
    Ok(g)
}

/// Constant vector with `<m, m> = tau1_sq`.
pub fn default_initial_vector<T: Real>(big_n: usize, tau1_sq: T) -> Vec<T> {
    vec![tau1_sq.sqrt(); big_n]
}

/// Iterate of `h^{t+1} = G m^t - lambda_t m^{t-1}`, `m^t = f(h^t)`.
/// At `t = 1` the state holds the supplied `m^1`, `m^0 = 0` and no `h`.
#[derive(Debug, Clone)]
pub struct SymmetricState<T> {
    pub g: Arc<DenseMatrix<T>>,
    pub h: Vec<T>,
    pub m: Vec<T>,
    pub m_prev: Vec<T>,
    /// `<f'(h^t)>`.
    pub lambda: T,
    pub t: usize,
}

impl<T: Real> SymmetricState<T> {
    pub fn new(g: Arc<DenseMatrix<T>>, m1: Vec<T>) -> Result<Self> {
        if g.rows() != g.cols() {
            return Err(Error::InvalidDimension("G must be square".into()));
        }
        check_len("m^1", g.rows(), m1.len())?;
        let n = m1.len();
        Ok(Self {
            g,
            h: Vec::new(),
            m: m1,
            m_prev: vec![T::zero(); n],
            lambda: T::zero(),
            t: 1,
        })
    }
}

pub fn symmetric_step<T: Real>(state: SymmetricState<T>, f: &Denoiser<T>) -> Result<SymmetricState<T>> {
    let mut h = state.g.mul_vec(&state.m)?;
    axpy(&mut h, -state.lambda, &state.m_prev);
    let (m, lambda) = f.apply(&h);
    let t = state.t + 1;
    if !all_finite(&h) || !all_finite(&m) || !lambda.is_finite() {
        return Err(Error::Diverged { t });
    }
    Ok(SymmetricState {
        g: state.g,
        h,
        m_prev: state.m,
        m,
        lambda,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    #[test]
    fn g_is_exactly_symmetric() {
        let g = sample_symmetric_matrix::<f64>(50, StreamKey::root(1, Purpose::Symmetric)).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
    }

    #[test]
    fn off_diagonal_variance_is_one_over_n() {
        let n = 400;
        let g = sample_symmetric_matrix::<f64>(n, StreamKey::root(2, Purpose::Symmetric)).unwrap();
        let mut s = 0.0;
        let mut c = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += g.get(i, j).powi(2);
                c += 1.0;
            }
        }
        let v = s / c * n as f64;
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn first_step_is_g_times_m1() {
        let g = Arc::new(sample_symmetric_matrix::<f64>(30, StreamKey::root(3, Purpose::Symmetric)).unwrap());
        let m1: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let s = SymmetricState::new(g.clone(), m1.clone()).unwrap();
        let s = symmetric_step(s, &Denoiser::tanh(1.0).unwrap()).unwrap();
        assert_eq!(s.h, g.mul_vec(&m1).unwrap());
        assert_eq!(s.t, 2);
    }

    #[test]
    fn identity_has_unit_memory_coefficient() {
        let g = Arc::new(sample_symmetric_matrix::<f64>(20, StreamKey::root(4, Purpose::Symmetric)).unwrap());
        let s = SymmetricState::new(g.clone(), default_initial_vector(20, 1.0)).unwrap();
        let f = Denoiser::identity();
        let s = symmetric_step(s, &f).unwrap();
        assert_eq!(s.lambda, 1.0);
        let (m_prev, m) = (s.m_prev.clone(), s.m.clone());
        let s = symmetric_step(s, &f).unwrap();
        let gm = g.mul_vec(&m).unwrap();
        for i in 0..20 {
            assert_eq!(s.h[i], gm[i] - m_prev[i]);
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        let g = Arc::new(DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![-1.0, 2.0]]).unwrap());
        let f = Denoiser::tanh(1.0).unwrap();
        let s = SymmetricState::new(g, vec![1.0, 2.0]).unwrap();
        let s = symmetric_step(s, &f).unwrap();
        assert_eq!(s.h, vec![-1.5, 3.0]);
        let m2 = [(-1.5f64).tanh(), 3.0f64.tanh()];
        let lam = ((1.0 - m2[0] * m2[0]) + (1.0 - m2[1] * m2[1])) / 2.0;
        assert!((s.lambda - lam).abs() < 1e-15);
        let s = symmetric_step(s, &f).unwrap();
        let h3 = [0.5 * m2[0] - m2[1] - lam * 1.0, -m2[0] + 2.0 * m2[1] - lam * 2.0];
        assert!((s.h[0] - h3[0]).abs() < 1e-15 && (s.h[1] - h3[1]).abs() < 1e-15);
    }

    #[test]
    fn default_vector_has_requested_norm() {
        let m = default_initial_vector(10, 0.49f64);
        assert!((crate::scalar::inner(&m, &m) - 0.49).abs() < 1e-15);
    }
}
