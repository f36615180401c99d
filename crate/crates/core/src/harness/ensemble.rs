use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode};
use super::report::{DivergedReplicate, EnsembleReport, ReportMetadata, ReportRow, RowFlag, SeSummary, Tolerances};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::model::{build_instance, sample_sensing_matrix, sample_signal, ProblemInstance};
use crate::observables::{decoupling_check, empirical_functional, se_prediction, Observable};
use crate::quadrature::{Integrator, PRECISION_TOLERANCE};
use crate::recursion::{
    default_initial_vector, mp_vs_amp_deviation, run_iterations, sample_symmetric_matrix, symmetric_step,
    SymmetricState, Variant,
};
use crate::rng::{Purpose, StreamKey};
use crate::scalar::mean_and_stderr;
use crate::state_evolution::{se_trajectory, PrecisionWarning, SeModel, SeTrajectory};

/// `|z|` bound of the finite-size comparison.
pub const Z_THRESHOLD: f64 = 3.0;
/// Relative-error floor of the finite-size comparison.
pub const RELATIVE_FLOOR: f64 = 0.02;

/// Runs the experiment described by `cfg`, using `cfg.threads` workers when set.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    match cfg.mode {
        Mode::Se => run_se(cfg),
        Mode::Amp | Mode::Ist | Mode::Ensemble => run_amp(cfg, cfg.variant()),
        Mode::Symmetric => run_symmetric(cfg),
        Mode::MpCompare => run_mp_compare(cfg),
        Mode::Decouple => run_decouple(cfg),
    }
}

/// The state-evolution side of a compressed-sensing experiment.
struct CsPlan {
    trajectory: SeTrajectory<f64>,
    /// `eta_0, ..., eta_{T-1}`.
    denoisers: Vec<Denoiser<f64>>,
    policy: &'static str,
}

fn cs_plan(cfg: &ExperimentConfig, quad: &Integrator<f64>) -> Result<CsPlan> {
    let spec = cfg.cs_spec()?;
    let schedule = cfg.denoiser.schedule(&cfg.prior)?;
    let policy = schedule.policy_label();
    let model = SeModel::CompressedSensing { spec, schedule };
    let trajectory = se_trajectory(&model, cfg.iterations, cfg.fixed_point_tol, quad)?;
    let mut denoisers = trajectory.denoisers.clone();
    // An early stop means the schedule is stationary from there on.
    while denoisers.len() < cfg.iterations {
        denoisers.push(denoisers.last().cloned().expect("at least one SE step"));
    }
    Ok(CsPlan {
        trajectory,
        denoisers,
        policy,
    })
}

/// `E psi(eta_{t-1}(X0 + tau_{t-1} Z), X0)` for `t = 1..=T`.
fn cs_predictions(
    cfg: &ExperimentConfig,
    plan: &CsPlan,
    obs: &[Observable<f64>],
    quad: &Integrator<f64>,
    warnings: &mut Vec<PrecisionWarning>,
) -> Result<Vec<Vec<f64>>> {
    (1..=cfg.iterations)
        .map(|t| {
            let tau = plan.trajectory.tau2_at(t - 1).max(0.0).sqrt();
            let eta = &plan.denoisers[t - 1];
            obs.iter()
                .map(|o| {
                    let e = se_prediction(o, tau, &cfg.prior, eta, quad)?;
                    if !e.is_precise() {
                        warnings.push(PrecisionWarning {
                            t,
                            discrepancy: e.discrepancy,
                        });
                    }
                    Ok(e.value)
                })
                .collect()
        })
        .collect()
}

fn summary(traj: &SeTrajectory<f64>, policy: &str, extra: Vec<PrecisionWarning>) -> SeSummary {
    let mut warnings = traj.warnings.clone();
    warnings.extend(extra);
    SeSummary {
        tau2: traj.tau2.clone(),
        first_index: traj.first_index,
        fixed_point: traj.fixed_point,
        policy: policy.to_string(),
        warnings,
    }
}

fn tolerances(cfg: &ExperimentConfig) -> Tolerances {
    Tolerances {
        fixed_point: cfg.fixed_point_tol,
        quadrature_precision: PRECISION_TOLERANCE,
        z_threshold: Z_THRESHOLD,
        relative_floor: RELATIVE_FLOOR,
    }
}

fn metadata(cfg: &ExperimentConfig, purpose: Purpose, se: Option<SeSummary>) -> ReportMetadata {
    let replicate_seeds = if cfg.mode == Mode::Se {
        Vec::new()
    } else {
        (0..cfg.replicates as u64)
            .map(|r| StreamKey::new(cfg.seed, r, purpose).fingerprint())
            .collect()
    };
    ReportMetadata {
        mode: cfg.mode.as_str().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        tolerances: tolerances(cfg),
        replicate_seeds,
        replicates_used: 0,
        diverged: Vec::new(),
        state_evolution: se,
        row_flags: Vec::new(),
    }
}

fn quadrature(cfg: &ExperimentConfig) -> Result<Integrator<f64>> {
    Integrator::new(cfg.quadrature.clone())
}

/// One draw of `(A, x0, w)` for replicate `r`.
pub fn replicate_instance(cfg: &ExperimentConfig, r: usize) -> Result<ProblemInstance<f64>> {
    let r = r as u64;
    let a = sample_sensing_matrix(cfg.model.n, cfg.model.big_n, StreamKey::new(cfg.seed, r, Purpose::Matrix))?;
    let x0 = sample_signal(&cfg.prior, cfg.model.big_n, StreamKey::new(cfg.seed, r, Purpose::Signal))?;
    build_instance(a, x0, &cfg.noise_spec()?, StreamKey::new(cfg.seed, r, Purpose::Noise))
}

/// Per-replicate values indexed `[t - 1][column]`.
type Values = Vec<Vec<f64>>;

fn check_finite(values: &Values) -> Result<()> {
    match values.iter().position(|row| row.iter().any(|v| !v.is_finite())) {
        Some(i) => Err(Error::Diverged { t: i + 1 }),
        None => Ok(()),
    }
}

/// Runs the replicates in parallel and merges them in replicate order into
/// report rows. Diverged replicates are dropped from every row and recorded.
fn aggregate(
    cfg: &ExperimentConfig,
    names: &[String],
    predictions: &[Vec<f64>],
    meta: &mut ReportMetadata,
    run: impl Fn(usize) -> Result<Values> + Sync,
) -> Result<Vec<ReportRow>> {
    let outcomes: Vec<Result<Values>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run(r).and_then(|v| check_finite(&v).map(|_| v)))
        .collect();
    let mut kept = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => kept.push(v),
            Err(Error::Diverged { t }) => meta.diverged.push(DivergedReplicate { replicate: r, t }),
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::AllReplicatesDiverged(cfg.replicates));
    }
    meta.replicates_used = kept.len();
    let mut rows = Vec::with_capacity(cfg.iterations * names.len());
    for t in 1..=cfg.iterations {
        for (k, name) in names.iter().enumerate() {
            let xs: Vec<f64> = kept.iter().map(|v| v[t - 1][k]).collect();
            let (m, se) = mean_and_stderr(&xs);
            rows.push(ReportRow::new(t, name.clone(), Some(m), Some(se), Some(predictions[t - 1][k])));
            if kept.len() == 1 {
                meta.row_flags.push(RowFlag {
                    t,
                    observable: name.clone(),
                    flag: "single_replicate".into(),
                });
            }
            if !meta.diverged.is_empty() {
                meta.row_flags.push(RowFlag {
                    t,
                    observable: name.clone(),
                    flag: format!("diverged_excluded:{}", meta.diverged.len()),
                });
            }
        }
    }
    Ok(rows)
}

fn observable_names(obs: &[Observable<f64>]) -> Vec<String> {
    obs.iter().map(|o| o.name()).collect()
}

fn run_se(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    let quad = quadrature(cfg)?;
    let plan = cs_plan(cfg, &quad)?;
    let obs = cfg.parsed_observables()?;
    let mut warnings = Vec::new();
    let pred = cs_predictions(cfg, &plan, &obs, &quad, &mut warnings)?;
    let names = observable_names(&obs);
    let mut rows = Vec::with_capacity(cfg.iterations * obs.len());
    for t in 1..=cfg.iterations {
        for (k, name) in names.iter().enumerate() {
            rows.push(ReportRow::new(t, name.clone(), None, None, Some(pred[t - 1][k])));
        }
    }
    let meta = metadata(cfg, Purpose::Matrix, Some(summary(&plan.trajectory, plan.policy, warnings)));
    Ok(EnsembleReport { rows, metadata: meta })
}

fn run_amp(cfg: &ExperimentConfig, variant: Variant) -> Result<EnsembleReport> {
    let quad = quadrature(cfg)?;
    let plan = cs_plan(cfg, &quad)?;
    let obs = cfg.parsed_observables()?;
    let mut warnings = Vec::new();
    let pred = cs_predictions(cfg, &plan, &obs, &quad, &mut warnings)?;
    let names = observable_names(&obs);
    let mut meta = metadata(cfg, Purpose::Matrix, Some(summary(&plan.trajectory, plan.policy, warnings)));
    let rows = aggregate(cfg, &names, &pred, &mut meta, |r| {
        let inst = replicate_instance(cfg, r)?;
        let mut values = Vec::with_capacity(cfg.iterations);
        run_iterations(&inst, &plan.denoisers, variant, |s| {
            values.push(
                obs.iter()
                    .map(|o| empirical_functional(&s.x, inst.x0(), o).unwrap_or(f64::NAN))
                    .collect(),
            );
        })?;
        Ok(values)
    })?;
    Ok(EnsembleReport { rows, metadata: meta })
}

/// Row `t` compares `(1/N) sum_i psi(h_i^{t+1}, 0)` with `E psi(tau_t Z, 0)`.
fn run_symmetric(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    let quad = quadrature(cfg)?;
    let f = cfg.symmetric_denoiser()?;
    let tau1_sq = cfg.symmetric.tau1_sq;
    let model = SeModel::Symmetric { f: f.clone(), tau1_sq };
    let traj = se_trajectory(&model, cfg.iterations, cfg.fixed_point_tol, &quad)?;
    let obs = cfg.parsed_observables()?;
    let mut warnings = Vec::new();
    let pred: Vec<Vec<f64>> = (1..=cfg.iterations)
        .map(|t| {
            let tau = traj.tau2_at(t).max(0.0).sqrt();
            obs.iter()
                .map(|o| {
                    let kinks = if o.diagonal_kink() { vec![0.0] } else { Vec::new() };
                    let e = quad.normal(&|z| o.eval(tau * z, 0.0), &kinks);
                    if !e.is_precise() {
                        warnings.push(PrecisionWarning {
                            t,
                            discrepancy: e.discrepancy,
                        });
                    }
                    e.value
                })
                .collect()
        })
        .collect();
    let names = observable_names(&obs);
    let mut meta = metadata(cfg, Purpose::Symmetric, Some(summary(&traj, "fixed", warnings)));
    let big_n = cfg.model.big_n;
    let zeros = vec![0.0; big_n];
    let rows = aggregate(cfg, &names, &pred, &mut meta, |r| {
        let g = Arc::new(sample_symmetric_matrix(big_n, StreamKey::new(cfg.seed, r as u64, Purpose::Symmetric))?);
        let mut s = SymmetricState::new(g, default_initial_vector(big_n, tau1_sq))?;
        let mut values = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            s = symmetric_step(s, &f)?;
            values.push(
                obs.iter()
                    .map(|o| empirical_functional(&s.h, &zeros, o).unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        Ok(values)
    })?;
    Ok(EnsembleReport { rows, metadata: meta })
}

/// Observable name of the message-passing comparison rows.
pub const MP_OBSERVABLE: &str = "mp_amp_deviation";

fn run_mp_compare(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    let edges = cfg.model.n * cfg.model.big_n;
    if edges > cfg.mp_edge_cap {
        return Err(Error::ResourceLimit {
            edges,
            cap: cfg.mp_edge_cap,
        });
    }
    let quad = quadrature(cfg)?;
    let plan = cs_plan(cfg, &quad)?;
    let names = vec![MP_OBSERVABLE.to_string()];
    let pred = vec![vec![0.0]; cfg.iterations];
    let mut meta = metadata(cfg, Purpose::Matrix, Some(summary(&plan.trajectory, plan.policy, Vec::new())));
    let rows = aggregate(cfg, &names, &pred, &mut meta, |r| {
        let inst = replicate_instance(cfg, r)?;
        let dev = mp_vs_amp_deviation(&inst, &plan.denoisers, cfg.mp_edge_cap)?;
        Ok(dev.into_iter().map(|d| vec![d]).collect())
    })?;
    Ok(EnsembleReport { rows, metadata: meta })
}

/// Observable names of the decoupling rows.
pub const DECOUPLING_OBSERVABLES: [&str; 2] = ["decoupling_residual", "decoupling_exact_residual"];

fn run_decouple(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    let quad = quadrature(cfg)?;
    let plan = cs_plan(cfg, &quad)?;
    let names: Vec<String> = DECOUPLING_OBSERVABLES.iter().map(|s| s.to_string()).collect();
    let pred = vec![vec![0.0, 0.0]; cfg.iterations];
    let mut meta = metadata(cfg, Purpose::Matrix, Some(summary(&plan.trajectory, plan.policy, Vec::new())));
    let factors = &cfg.decouple.factors;
    let closures: Vec<Box<dyn Fn(f64, f64) -> f64 + Sync>> = factors
        .iter()
        .map(|f| {
            let f = f.clone();
            Box::new(move |x, x0| f.eval(x, x0)) as Box<dyn Fn(f64, f64) -> f64 + Sync>
        })
        .collect();
    let rows = aggregate(cfg, &names, &pred, &mut meta, |r| {
        let inst = replicate_instance(cfg, r)?;
        let mut iterates = Vec::with_capacity(cfg.iterations);
        run_iterations(&inst, &plan.denoisers, Variant::Amp, |s| iterates.push(s.x.clone()))?;
        let refs: Vec<&dyn Fn(f64, f64) -> f64> =
            closures.iter().map(|c| c.as_ref() as &dyn Fn(f64, f64) -> f64).collect();
        let mut rng = StreamKey::new(cfg.seed, r as u64, Purpose::Tuples).rng(0);
        iterates
            .iter()
            .map(|x| {
                let d = decoupling_check(x, inst.x0(), &refs, cfg.decouple.tuples, &mut rng)?;
                Ok(vec![d.residual, d.exact_residual])
            })
            .collect()
    })?;
    Ok(EnsembleReport { rows, metadata: meta })
}
