use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, DenseMatrix};
use crate::model::ProblemInstance;
use crate::scalar::Real;

use super::amp::{run_iterations, Variant};

/// Default cap on `n * N` for edge message storage.
pub const DEFAULT_EDGE_CAP: usize = 4_000_000;

/// Edge messages on the complete bipartite graph: `z_msgs[a][i] = z_{a->i}`
/// (`n x N`) and `x_msgs[i][a] = x_{i->a}` (`N x n`). After `t` steps
/// `x_msgs` holds `x^t` and `z_msgs` holds `z^{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState<T> {
    pub z_msgs: DenseMatrix<T>,
    pub x_msgs: DenseMatrix<T>,
    pub t: usize,
}

impl<T: Real> MessageState<T> {
    /// All `x_{i->a}^0 = 0`.
    pub fn new(inst: &ProblemInstance<T>, edge_cap: usize) -> Result<Self> {
        let edges = inst.n() * inst.big_n();
        if edges > edge_cap {
            return Err(Error::ResourceLimit {
                edges,
                cap: edge_cap,
            });
        }
        Ok(Self {
            z_msgs: DenseMatrix::zeros(inst.n(), inst.big_n()),
            x_msgs: DenseMatrix::zeros(inst.big_n(), inst.n()),
            t: 0,
        })
    }

    /// Node estimates `eta(sum_b A_bi z_{b->i})` from the stored `z` messages.
    pub fn marginals(&self, inst: &ProblemInstance<T>, eta: &Denoiser<T>) -> Vec<T> {
        let a = inst.a();
        let mut s = vec![T::zero(); inst.big_n()];
        for b in 0..inst.n() {
            let arow = a.matrix().row(b);
            let zrow = self.z_msgs.row(b);
            for i in 0..inst.big_n() {
                s[i] = s[i] + arow[i] * zrow[i];
            }
        }
        s.into_iter().map(|v| eta.value(v)).collect()
    }
}

/// `z_{a->i}^t = y_a - sum_{j != i} A_aj x_{j->a}^t`, then
/// `x_{i->a}^{t+1} = eta_t(sum_{b != a} A_bi z_{b->i}^t)`.
///
/// Each cavity sum is the full sum minus the excluded term.
pub fn mp_step<T: Real>(
    state: MessageState<T>,
    inst: &ProblemInstance<T>,
    eta: &Denoiser<T>,
) -> Result<MessageState<T>> {
    let (n, big_n) = (inst.n(), inst.big_n());
    if state.z_msgs.rows() != n || state.z_msgs.cols() != big_n {
        return Err(Error::DimensionMismatch {
            context: "message state",
            expected: n * big_n,
            found: state.z_msgs.rows() * state.z_msgs.cols(),
        });
    }
    let a = inst.a();
    let y = inst.y();
    let MessageState {
        mut z_msgs,
        mut x_msgs,
        t,
    } = state;

    for (row_a, zrow) in z_msgs.rows_mut().enumerate() {
        let arow = a.matrix().row(row_a);
        let mut full = T::zero();
        for (i, &aij) in arow.iter().enumerate() {
            full = full + aij * x_msgs.get(i, row_a);
        }
        for (i, z) in zrow.iter_mut().enumerate() {
            let cavity = full - arow[i] * x_msgs.get(i, row_a);
            *z = y[row_a] - cavity;
        }
    }

    let mut col_sum = vec![T::zero(); big_n];
    for b in 0..n {
        let arow = a.matrix().row(b);
        let zrow = z_msgs.row(b);
        for i in 0..big_n {
            col_sum[i] = col_sum[i] + arow[i] * zrow[i];
        }
    }
    for (i, xrow) in x_msgs.rows_mut().enumerate() {
        for (row_a, x) in xrow.iter_mut().enumerate() {
            let cavity = col_sum[i] - a.get(row_a, i) * z_msgs.get(row_a, i);
            *x = eta.value(cavity);
        }
    }
    if !all_finite(z_msgs.as_slice()) || !all_finite(x_msgs.as_slice()) {
        return Err(Error::Diverged { t: t + 1 });
    }
    Ok(MessageState {
        z_msgs,
        x_msgs,
        t: t + 1,
    })
}

/// For `t = 1..=denoisers.len()`, the largest coordinate gap between the AMP
/// iterate `x^t` and the message-passing node estimate
/// `eta_{t-1}(sum_b A_bi z_{b->i}^{t-1})`.
pub fn mp_vs_amp_deviation<T: Real>(
    inst: &ProblemInstance<T>,
    denoisers: &[Denoiser<T>],
    edge_cap: usize,
) -> Result<Vec<T>> {
    let mut amp_x = Vec::with_capacity(denoisers.len());
    run_iterations(inst, denoisers, Variant::Amp, |s| amp_x.push(s.x.clone()))?;
    let mut mp = MessageState::new(inst, edge_cap)?;
    let mut out = Vec::with_capacity(denoisers.len());
    for (eta, x) in denoisers.iter().zip(&amp_x) {
        mp = mp_step(mp, inst, eta)?;
        let marg = mp.marginals(inst, eta);
        let dev = marg
            .iter()
            .zip(x)
            .map(|(m, x)| (*m - *x).abs())
            .fold(T::zero(), T::max);
        out.push(dev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, sample_sensing_matrix, sample_signal, NoiseSpec, Prior, SensingMatrix};
    use crate::rng::{Purpose, StreamKey};

    fn instance(n: usize, big_n: usize, seed: u64) -> ProblemInstance<f64> {
        let a = sample_sensing_matrix(n, big_n, StreamKey::root(seed, Purpose::Matrix)).unwrap();
        let x0 = sample_signal(&Prior::three_point(0.2).unwrap(), big_n, StreamKey::root(seed, Purpose::Signal))
            .unwrap();
        build_instance(a, x0, &NoiseSpec::gaussian(0.01).unwrap(), StreamKey::root(seed, Purpose::Noise)).unwrap()
    }

    #[test]
    fn initial_z_messages_equal_observation() {
        let inst = instance(5, 7, 1);
        let s = MessageState::new(&inst, DEFAULT_EDGE_CAP).unwrap();
        assert!(s.x_msgs.as_slice().iter().all(|&v| v == 0.0));
        let s = mp_step(s, &inst, &Denoiser::soft_threshold(0.3).unwrap()).unwrap();
        for a in 0..5 {
            for i in 0..7 {
                assert_eq!(s.z_msgs.get(a, i), inst.y()[a]);
            }
        }
    }

    #[test]
    fn single_column_has_empty_cavity() {
        let a = SensingMatrix::from_rows(&[vec![0.7], vec![-1.2], vec![0.4]]).unwrap();
        let inst = ProblemInstance::from_parts(a, vec![1.5], vec![0.1, -0.2, 0.05]).unwrap();
        let eta = Denoiser::linear(0.8).unwrap();
        let mut s = MessageState::new(&inst, DEFAULT_EDGE_CAP).unwrap();
        for _ in 0..3 {
            s = mp_step(s, &inst, &eta).unwrap();
            for a in 0..3 {
                assert_eq!(s.z_msgs.get(a, 0), inst.y()[a]);
            }
        }
    }

    #[test]
    fn two_by_two_against_explicit_sums() {
        let a = SensingMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let inst = ProblemInstance::from_parts(a.clone(), vec![1.0, -2.0], vec![0.1, 0.3]).unwrap();
        let eta = Denoiser::soft_threshold(0.2).unwrap();
        let y = inst.y().to_vec();
        let e = |v: f64| eta.value(v);
        // Step 1: x^0 = 0 so z^0_{a->i} = y_a; x^1_{i->a} = eta(A_{b i} y_b), b != a.
        let mut x1 = [[0.0; 2]; 2];
        for i in 0..2 {
            for aa in 0..2 {
                let b = 1 - aa;
                x1[i][aa] = e(a.get(b, i) * y[b]);
            }
        }
        // Step 2: z^1_{a->i} = y_a - A_{a j} x^1_{j->a}, j != i.
        let mut z1 = [[0.0; 2]; 2];
        for aa in 0..2 {
            for i in 0..2 {
                let j = 1 - i;
                z1[aa][i] = y[aa] - a.get(aa, j) * x1[j][aa];
            }
        }
        let mut x2 = [[0.0; 2]; 2];
        for i in 0..2 {
            for aa in 0..2 {
                let b = 1 - aa;
                x2[i][aa] = e(a.get(b, i) * z1[b][i]);
            }
        }
        let s = mp_step(MessageState::new(&inst, 100).unwrap(), &inst, &eta).unwrap();
        for i in 0..2 {
            for aa in 0..2 {
                assert!((s.x_msgs.get(i, aa) - x1[i][aa]).abs() < 1e-15);
            }
        }
        let s = mp_step(s, &inst, &eta).unwrap();
        for aa in 0..2 {
            for i in 0..2 {
                assert!((s.z_msgs.get(aa, i) - z1[aa][i]).abs() < 1e-15);
                assert!((s.x_msgs.get(i, aa) - x2[i][aa]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn edge_cap_is_enforced() {
        let inst = instance(10, 20, 1);
        assert!(matches!(
            MessageState::new(&inst, 199),
            Err(Error::ResourceLimit { edges: 200, cap: 199 })
        ));
        assert!(MessageState::new(&inst, 200).is_ok());
    }

    #[test]
    fn zero_matrix_gives_zero_deviation() {
        let a = SensingMatrix::from_matrix(DenseMatrix::zeros(4, 6));
        let inst = ProblemInstance::from_parts(a, vec![1.0; 6], vec![0.3, -0.1, 0.2, 0.0]).unwrap();
        let etas = vec![Denoiser::soft_threshold(0.1).unwrap(); 3];
        let dev = mp_vs_amp_deviation(&inst, &etas, DEFAULT_EDGE_CAP).unwrap();
        assert!(dev.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn first_iterate_matches_amp() {
        let inst = instance(40, 80, 3);
        let etas = vec![Denoiser::soft_threshold(0.4).unwrap(); 3];
        let dev = mp_vs_amp_deviation(&inst, &etas, DEFAULT_EDGE_CAP).unwrap();
        assert!(dev[0] < 1e-12, "{dev:?}");
        assert!(dev[1] > 0.0);
    }
}
