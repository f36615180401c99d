use crate::denoiser::{AmpPair, Denoiser, GeneralPair};
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy};
use crate::model::{ProblemInstance, SensingMatrix};
use crate::scalar::{mean, Real};

use super::amp::{run_iterations, Variant};

/// Stored iterates of the general recursion, used by the diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneralHistory<T> {
    /// `q^0, q^1, ...`
    pub q: Vec<Vec<T>>,
    /// `h^1, h^2, ...` (`h[r]` holds `h^{r+1}`).
    pub h: Vec<Vec<T>>,
    /// `b^0, b^1, ...`
    pub b: Vec<Vec<T>>,
    /// `m^0, m^1, ...`
    pub m: Vec<Vec<T>>,
    pub xi: Vec<T>,
    /// `lambda_1, lambda_2, ...`
    pub lambda: Vec<T>,
}

/// State after `t` steps: `h = h^t`, `q = q^t`, `lambda = lambda_t`, and the
/// previous half-step `b = b^{t-1}`, `m = m^{t-1}`, `xi = xi_{t-1}` (empty
/// and zero at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralState<T> {
    pub h: Vec<T>,
    pub q: Vec<T>,
    pub b: Vec<T>,
    pub m: Vec<T>,
    pub xi: T,
    pub lambda: T,
    pub t: usize,
    pub history: Option<GeneralHistory<T>>,
}

impl<T: Real> GeneralState<T> {
    /// Starts from `q^0`; histories are kept only when `track_history` is set.
    pub fn new(q0: Vec<T>, track_history: bool) -> Self {
        let history = track_history.then(|| GeneralHistory {
            q: vec![q0.clone()],
            ..Default::default()
        });
        Self {
            h: Vec::new(),
            q: q0,
            b: Vec::new(),
            m: Vec::new(),
            xi: T::zero(),
            lambda: T::zero(),
            t: 0,
            history,
        }
    }

    /// Largest gap between the stored `q`, `m`, `xi`, `lambda` and their
    /// recomputation from `h`, `b`.
    pub fn consistency_gap(&self, x0: &[T], w: &[T], pair: &dyn GeneralPair<T>, delta: T) -> T {
        if self.t == 0 {
            return T::zero();
        }
        let mut gap = T::zero();
        let (mut fd, mut gd) = (Vec::new(), Vec::new());
        for (i, (&h, &x)) in self.h.iter().zip(x0).enumerate() {
            let (v, d) = pair.f(self.t, h, x);
            gap = gap.max((v - self.q[i]).abs());
            fd.push(d);
        }
        for (a, (&b, &wa)) in self.b.iter().zip(w).enumerate() {
            let (v, d) = pair.g(self.t - 1, b, wa);
            gap = gap.max((v - self.m[a]).abs());
            gd.push(d);
        }
        gap = gap.max((mean(&gd) - self.xi).abs());
        gap.max((mean(&fd) / delta - self.lambda).abs())
    }
}

/// One step of the general recursion:
/// `b^t = A q^t - lambda_t m^{t-1}`, `m^t = g_t(b^t, w)`,
/// `h^{t+1} = A^T m^t - xi_t q^t`, `q^{t+1} = f_{t+1}(h^{t+1}, x0)`.
pub fn general_step<T: Real>(
    state: GeneralState<T>,
    a: &SensingMatrix<T>,
    x0: &[T],
    w: &[T],
    pair: &dyn GeneralPair<T>,
) -> Result<GeneralState<T>> {
    check_len("general recursion q", a.big_n(), state.q.len())?;
    check_len("general recursion x0", a.big_n(), x0.len())?;
    check_len("general recursion w", a.n(), w.len())?;
    let t = state.t;
    let delta = a.delta();

    let mut b = a.mul_vec(&state.q)?;
    if !state.m.is_empty() {
        axpy(&mut b, -state.lambda, &state.m);
    }
    let mut m = Vec::with_capacity(b.len());
    let mut gd = Vec::with_capacity(b.len());
    for (&bi, &wi) in b.iter().zip(w) {
        let (v, d) = pair.g(t, bi, wi);
        m.push(v);
        gd.push(d);
    }
    let xi = mean(&gd);

    let mut h = a.mul_transpose_vec(&m)?;
    axpy(&mut h, -xi, &state.q);
    let mut q = Vec::with_capacity(h.len());
    let mut fd = Vec::with_capacity(h.len());
    for (&hi, &xi0) in h.iter().zip(x0) {
        let (v, d) = pair.f(t + 1, hi, xi0);
        q.push(v);
        fd.push(d);
    }
    let lambda = mean(&fd) / delta;

    if !all_finite(&q) || !all_finite(&m) || !xi.is_finite() || !lambda.is_finite() {
        return Err(Error::Diverged { t: t + 1 });
    }
    let mut history = state.history;
    if let Some(hist) = history.as_mut() {
        hist.b.push(b.clone());
        hist.m.push(m.clone());
        hist.h.push(h.clone());
        hist.q.push(q.clone());
        hist.xi.push(xi);
        hist.lambda.push(lambda);
    }
    Ok(GeneralState {
        h,
        q,
        b,
        m,
        xi,
        lambda,
        t: t + 1,
        history,
    })
}

/// Runs AMP and the general recursion under the substitution
/// `f_t(s, x0) = eta_{t-1}(x0 - s) - x0`, `g_t(s, w) = s - w`, `q^0 = -x0`,
/// and returns the largest of `|x^t - (q^t + x0)|` and `|-z^t - m^t|` over
/// `t <= steps` and all coordinates.
pub fn mapping_check<T: Real>(
    inst: &ProblemInstance<T>,
    denoisers: &[Denoiser<T>],
    steps: usize,
) -> Result<T> {
    if steps == 0 {
        return Err(Error::InvalidParameter("mapping check needs T >= 1".into()));
    }
    if denoisers.len() < steps {
        return Err(Error::InvalidParameter(format!(
            "need {steps} denoisers, got {}",
            denoisers.len()
        )));
    }
    let etas = &denoisers[..steps];
    let mut amp_x = Vec::with_capacity(steps);
    let mut amp_z = vec![inst.y().to_vec()];
    run_iterations(inst, etas, Variant::Amp, |s| {
        amp_x.push(s.x.clone());
        amp_z.push(s.z.clone());
    })?;

    let pair = AmpPair::new(etas.to_vec())?;
    let q0: Vec<T> = inst.x0().iter().map(|v| -*v).collect();
    let mut g = GeneralState::new(q0, false);
    let mut worst = T::zero();
    for t in 1..=steps {
        g = general_step(g, inst.a(), inst.x0(), inst.w(), &pair)?;
        for ((x, q), x0) in amp_x[t - 1].iter().zip(&g.q).zip(inst.x0()) {
            worst = worst.max((*x - (*q + *x0)).abs());
        }
        for (z, m) in amp_z[t - 1].iter().zip(&g.m) {
            worst = worst.max((-*z - *m).abs());
        }
    }
    Ok(worst)
}
