//! Leave-one-out cross-validation scoring and pseudo-Bayes factors.
//!
//! One full-data posterior chain per model is retargeted onto every fold
//! through importance weights, resampled without replacement, and the
//! selected draws score the held-out observation: directly under forward
//! scoring, or through the model's uniform covariate prior under inverse
//! scoring, where each draw is reused for a batch of fresh covariate
//! samples. Folds whose weights degenerate fall back to a dedicated
//! fold-posterior chain. Every log pseudo-Bayes factor is a plain sum of
//! per-fold log density ratios, so reports compose and antisymmetrize
//! exactly.

use crate::data::{
    CvMode, CvReport, DataError, ModelSpec, RegressionForm, ReplicatedDataset, ThetaVector,
};
use crate::likelihood::{
    log_density_eta, log_density_obs, log_likelihood, row_log_density, LikelihoodError,
};
use crate::prior::{
    ar1_row_summary, prior_interval, sample_interval, CovariateAxis, InversePriorSpec,
    PriorError, PriorInterval, PriorKind,
};
use crate::sampler::{
    batch_means_se, normalize_log_weights, resample_without_replacement, substream,
    tmcmc_sample, PosteriorChain, ResamplePlan, SamplerError, TmcmcConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("ZeroDensityFold: fold {0} scored a log density of -inf")]
    ZeroDensityFold(usize),
    #[error("FoldCountMismatch: {left} folds vs {right}")]
    FoldCountMismatch { left: usize, right: usize },
    #[error(
        "PriorIncompatible: fold {fold} had empty covariate-prior support for {skipped} of {selected} draws"
    )]
    PriorIncompatible {
        fold: usize,
        skipped: usize,
        selected: usize,
    },
    #[error("MissingPrior: inverse scoring needs a covariate-prior spec")]
    MissingPrior,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Budgets and stream identity for one cross-validation run. The same
/// config (and data) always reproduces the same report, independently of
/// how folds are scheduled across threads.
#[derive(Debug, Clone)]
pub struct CvConfig {
    pub sampler: TmcmcConfig,
    pub plan: ResamplePlan,
    /// Which replicate column the held-out density is evaluated at.
    pub scored_replicate: usize,
    pub seed: u64,
    /// Top-level substream label, typically the experiment name.
    pub run_label: String,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            sampler: TmcmcConfig::default(),
            plan: ResamplePlan::default(),
            scored_replicate: 0,
            seed: 0,
            run_label: "cv".into(),
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), CvError> {
        self.sampler.validate()?;
        if self.plan.subsample_size == 0 || self.plan.reuse_per_draw == 0 {
            return Err(CvError::Sampler(SamplerError::InvalidConfig(
                "resample plan needs positive subsample and reuse counts".into(),
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub log_density: f64,
    /// Log-scale Monte Carlo standard error from batch means over the
    /// distinct resampled draws; zero for exactly computed folds.
    pub mcse: f64,
    /// Importance-weight effective sample size, absent when a dedicated
    /// fold chain replaced the reweighting.
    pub ess: Option<f64>,
    pub used_fallback_chain: bool,
    /// Draws whose covariate prior had empty support and were skipped.
    pub skipped_draws: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRun {
    pub report: CvReport,
    pub folds: Vec<FoldOutcome>,
    /// Full-data chain acceptance rate; absent for parameter-free models.
    pub chain_acceptance: Option<f64>,
}

fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    substream(seed, labels).random()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Standard error of the log of a mean of densities given per-draw log
/// values: batch means on the max-shifted density scale, delta method back
/// to the log scale. Shift-invariant by construction.
fn log_scale_mcse(per_draw_log: &[f64], target_batches: usize) -> f64 {
    let n = per_draw_log.len();
    let batches = target_batches.min(n);
    if batches < 2 {
        return f64::INFINITY;
    }
    let max = per_draw_log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::INFINITY;
    }
    let d: Vec<f64> = per_draw_log.iter().map(|lv| (lv - max).exp()).collect();
    let mu = d.iter().sum::<f64>() / n as f64;
    batch_means_se(&d, batches) / mu
}

fn ar1_history(ds: &ReplicatedDataset, fold: usize, replicate: usize) -> Vec<f64> {
    if fold == 0 {
        Vec::new()
    } else {
        vec![ds.response(fold - 1, replicate)]
    }
}

/// Exact held-out log density for models with nothing to infer, the
/// no-Monte-Carlo path for pinned or fixed-function specs.
pub fn exact_fold_log_density(
    spec: &ModelSpec,
    ds: &ReplicatedDataset,
    fold: usize,
    scored_replicate: usize,
) -> Result<f64, CvError> {
    let theta = ThetaVector::empty();
    let y = ds.response(fold, scored_replicate);
    let history = if spec.regression == RegressionForm::Ar1 {
        Some(ar1_history(ds, fold, scored_replicate))
    } else {
        None
    };
    let ld = log_density_obs(
        spec,
        &theta,
        &ds.covariate_row(fold),
        y,
        history.as_deref(),
    )?;
    if !ld.is_finite() {
        return Err(CvError::ZeroDensityFold(fold));
    }
    Ok(ld)
}

/// Full-data posterior chain for a model under a flat prior on its free
/// parameters (GP models add their latent prior inside the likelihood).
pub fn posterior_chain(
    spec: &ModelSpec,
    ds: &ReplicatedDataset,
    cfg: &CvConfig,
) -> Result<PosteriorChain, CvError> {
    cfg.validate()?;
    let layout = spec.free_layout(ds.n());
    let template = ThetaVector::new(vec![0.0; layout.len()], layout)?;
    let target = |vals: &[f64]| -> f64 {
        let th = template
            .with_values(vals)
            .expect("sampler preserves dimension");
        log_likelihood(spec, &th, ds, None).unwrap_or(f64::NEG_INFINITY)
    };
    let sampler_cfg = TmcmcConfig {
        seed: derive_seed(cfg.seed, &[&cfg.run_label, &spec.label, "posterior-chain"]),
        ..cfg.sampler.clone()
    };
    let init = vec![0.0; template.len()];
    Ok(tmcmc_sample(target, &init, &sampler_cfg)?)
}

/// The per-evaluation prior axes implied by one prior spec. Models holding
/// both covariates sample a fresh value for each of them: the band for the
/// first conditions on the observed second covariate and vice versa, so
/// the two intervals are built from observed data only and the pair is
/// drawn independently given the parameter draw.
fn expand_inverse_priors(
    prior: &InversePriorSpec,
    spec: &ModelSpec,
) -> Result<Vec<InversePriorSpec>, CvError> {
    match prior.kind {
        PriorKind::TwoCovariate { base, .. } => {
            if spec.covariates.len() != 2 {
                return Err(CvError::Data(DataError::InvalidModel(format!(
                    "a covariate-pair prior needs a two-covariate model, got {} covariates",
                    spec.covariates.len()
                ))));
            }
            let mut x_axis = *prior;
            x_axis.kind = PriorKind::TwoCovariate { which: CovariateAxis::X, base };
            let mut z_axis = *prior;
            z_axis.kind = PriorKind::TwoCovariate { which: CovariateAxis::Z, base };
            Ok(vec![x_axis, z_axis])
        }
        _ => Ok(vec![*prior]),
    }
}

/// The covariate-prior interval for one posterior draw at one fold.
fn build_interval(
    prior: &InversePriorSpec,
    spec: &ModelSpec,
    theta: &ThetaVector,
    ds: &ReplicatedDataset,
    fold: usize,
) -> Result<PriorInterval, CvError> {
    let th = spec.effective_theta(theta);
    let m = ds.m();
    match prior.kind {
        PriorKind::Ar1 => {
            let rho = th.rho().unwrap_or(0.0);
            let (y_bar, prev_bar, s) = ar1_row_summary(ds, fold, rho)?;
            Ok(prior_interval(prior, &th, y_bar, s, m, Some(prev_bar))?)
        }
        PriorKind::Quadratic => {
            let (y_bar, s) = ds.row_summary(fold)?;
            let x_true = ds.covariate(fold, spec.covariates[0]);
            Ok(prior_interval(prior, &th, y_bar, s, m, Some(x_true))?)
        }
        PriorKind::TwoCovariate { which, .. } => {
            let other_col = match which {
                CovariateAxis::X => spec.covariates[1],
                CovariateAxis::Z => spec.covariates[0],
            };
            let (y_bar, s) = ds.row_summary(fold)?;
            let other = ds.covariate(fold, other_col);
            Ok(prior_interval(prior, &th, y_bar, s, m, Some(other))?)
        }
        PriorKind::Link(_) => {
            let (y_bar, s) = ds.row_summary(fold)?;
            Ok(prior_interval(prior, &th, y_bar, s, m, None)?)
        }
    }
}

/// Held-out log density at a sampled covariate value. The sampled value
/// replaces the held-out coordinate; everything else about the row stays
/// observed (companion covariates, quadratic offsets, autoregressive
/// histories).
fn inverse_obs_log_density(
    spec: &ModelSpec,
    kind: PriorKind,
    theta: &ThetaVector,
    ds: &ReplicatedDataset,
    fold: usize,
    x_tilde: f64,
    y: f64,
    replicate: usize,
) -> Result<f64, LikelihoodError> {
    match kind {
        PriorKind::Quadratic => {
            let th = spec.effective_theta(theta);
            let x_true = ds.covariate(fold, spec.covariates[0]);
            let eta = th.intercept()
                + th.slope(0).unwrap_or(0.0) * x_tilde
                + th.slope(1).unwrap_or(0.0) * x_true * x_true;
            log_density_eta(spec, theta, eta, y)
        }
        PriorKind::Ar1 => {
            let mut xrow = ds.covariate_row(fold);
            xrow[spec.covariates[0]] = x_tilde;
            let history = ar1_history(ds, fold, replicate);
            log_density_obs(spec, theta, &xrow, y, Some(&history))
        }
        PriorKind::Link(_) => {
            let mut xrow = ds.covariate_row(fold);
            xrow[spec.covariates[0]] = x_tilde;
            log_density_obs(spec, theta, &xrow, y, None)
        }
        PriorKind::TwoCovariate { which, .. } => {
            let col = match which {
                CovariateAxis::X => spec.covariates[0],
                CovariateAxis::Z => spec.covariates[1],
            };
            let mut xrow = ds.covariate_row(fold);
            xrow[col] = x_tilde;
            log_density_obs(spec, theta, &xrow, y, None)
        }
    }
}

/// Score one fold from a full-data chain.
///
/// Importance weights retarget the chain onto the fold posterior (the log
/// weight is minus the held-out row's data terms); a degenerate effective
/// sample size triggers a dedicated fold chain instead. The weighted draws
/// are thinned by sampling without replacement, and the predictive density
/// is the plain average of the per-evaluation densities.
pub fn fold_log_density(
    spec: &ModelSpec,
    ds: &ReplicatedDataset,
    fold: usize,
    mode: CvMode,
    prior: Option<&InversePriorSpec>,
    chain: &PosteriorChain,
    cfg: &CvConfig,
) -> Result<FoldOutcome, CvError> {
    cfg.validate()?;
    let layout = spec.free_layout(ds.n());
    let template = ThetaVector::new(vec![0.0; layout.len()], layout)?;
    let fold_label = format!("fold-{fold}");
    let labels_base: [&str; 3] = [&cfg.run_label, &spec.label, &fold_label];

    let mut logw = Vec::with_capacity(chain.kept());
    for s in 0..chain.kept() {
        let th = template.with_values(&chain.draw(s))?;
        logw.push(-row_log_density(spec, &th, ds, fold)?);
    }

    let (selected, ess, used_fallback_chain) = match normalize_log_weights(&logw) {
        Ok(iw) => {
            let mut rng = substream(
                cfg.seed,
                &[labels_base[0], labels_base[1], labels_base[2], "resample"],
            );
            let idx =
                resample_without_replacement(&iw.weights, cfg.plan.subsample_size, &mut rng)?;
            let draws: Vec<Vec<f64>> = idx.into_iter().map(|i| chain.draw(i)).collect();
            (draws, Some(iw.ess), false)
        }
        Err(SamplerError::DegenerateWeights { .. }) => {
            let fold_target = |vals: &[f64]| -> f64 {
                let th = template
                    .with_values(vals)
                    .expect("sampler preserves dimension");
                log_likelihood(spec, &th, ds, Some(fold)).unwrap_or(f64::NEG_INFINITY)
            };
            let sampler_cfg = TmcmcConfig {
                seed: derive_seed(
                    cfg.seed,
                    &[labels_base[0], labels_base[1], labels_base[2], "fallback-chain"],
                ),
                ..cfg.sampler.clone()
            };
            let fchain = tmcmc_sample(fold_target, &vec![0.0; template.len()], &sampler_cfg)?;
            let mut rng = substream(
                cfg.seed,
                &[
                    labels_base[0],
                    labels_base[1],
                    labels_base[2],
                    "fallback-resample",
                ],
            );
            let uniform = vec![1.0; fchain.kept()];
            let idx =
                resample_without_replacement(&uniform, cfg.plan.subsample_size, &mut rng)?;
            let draws: Vec<Vec<f64>> = idx.into_iter().map(|i| fchain.draw(i)).collect();
            (draws, None, true)
        }
        Err(e) => return Err(e.into()),
    };

    let y = ds.response(fold, cfg.scored_replicate);
    let mut per_draw_log = Vec::with_capacity(selected.len());
    let mut skipped = 0usize;

    match mode {
        // Forward scoring is deterministic in theta, so reusing a draw
        // repeats the same value and leaves the average untouched; one
        // evaluation per distinct draw is exact.
        CvMode::Forward => {
            let history = if spec.regression == RegressionForm::Ar1 {
                Some(ar1_history(ds, fold, cfg.scored_replicate))
            } else {
                None
            };
            for vals in &selected {
                let th = template.with_values(vals)?;
                per_draw_log.push(log_density_obs(
                    spec,
                    &th,
                    &ds.covariate_row(fold),
                    y,
                    history.as_deref(),
                )?);
            }
        }
        CvMode::Inverse => {
            let prior = prior.ok_or(CvError::MissingPrior)?;
            let axes = expand_inverse_priors(prior, spec)?;
            let mut rng = substream(
                cfg.seed,
                &[
                    labels_base[0],
                    labels_base[1],
                    labels_base[2],
                    "covariate-prior",
                ],
            );
            let mut evals = Vec::with_capacity(cfg.plan.reuse_per_draw);
            let mut intervals = Vec::with_capacity(axes.len());
            for vals in &selected {
                let th = template.with_values(vals)?;
                intervals.clear();
                let mut empty_support = false;
                for axis in &axes {
                    match build_interval(axis, spec, &th, ds, fold) {
                        Ok(iv) => intervals.push(iv),
                        Err(CvError::Prior(PriorError::NonPositiveBandEdge(_))) => {
                            empty_support = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if empty_support {
                    skipped += 1;
                    continue;
                }
                evals.clear();
                for _ in 0..cfg.plan.reuse_per_draw {
                    let ld = if axes.len() == 1 {
                        let x_tilde = sample_interval(&intervals[0], &mut rng);
                        inverse_obs_log_density(
                            spec,
                            axes[0].kind,
                            &th,
                            ds,
                            fold,
                            x_tilde,
                            y,
                            cfg.scored_replicate,
                        )?
                    } else {
                        let mut xrow = ds.covariate_row(fold);
                        for (axis, iv) in axes.iter().zip(&intervals) {
                            let col = match axis.kind {
                                PriorKind::TwoCovariate { which: CovariateAxis::X, .. } => {
                                    spec.covariates[0]
                                }
                                PriorKind::TwoCovariate { which: CovariateAxis::Z, .. } => {
                                    spec.covariates[1]
                                }
                                _ => unreachable!("only covariate pairs expand"),
                            };
                            xrow[col] = sample_interval(iv, &mut rng);
                        }
                        log_density_obs(spec, &th, &xrow, y, None)?
                    };
                    evals.push(ld);
                }
                per_draw_log.push(log_sum_exp(&evals) - (evals.len() as f64).ln());
            }
            if 2 * skipped > selected.len() || per_draw_log.is_empty() {
                return Err(CvError::PriorIncompatible {
                    fold,
                    skipped,
                    selected: selected.len(),
                });
            }
        }
    }

    let log_density = log_sum_exp(&per_draw_log) - (per_draw_log.len() as f64).ln();
    if !log_density.is_finite() {
        return Err(CvError::ZeroDensityFold(fold));
    }
    Ok(FoldOutcome {
        fold,
        log_density,
        mcse: log_scale_mcse(&per_draw_log, 20),
        ess,
        used_fallback_chain,
        skipped_draws: skipped,
    })
}

/// Score every fold of a model and assemble the report. Parameter-free
/// specs bypass sampling entirely; everything else shares one full-data
/// chain across folds, scored in parallel with per-fold substreams so the
/// result does not depend on thread scheduling.
pub fn run_cv(
    spec: &ModelSpec,
    ds: &ReplicatedDataset,
    mode: CvMode,
    prior: Option<&InversePriorSpec>,
    cfg: &CvConfig,
) -> Result<CvRun, CvError> {
    cfg.validate()?;
    spec.validate()?;
    if cfg.scored_replicate >= ds.m() {
        return Err(CvError::Data(DataError::IndexOutOfRange(format!(
            "scored replicate {} of {}",
            cfg.scored_replicate,
            ds.m()
        ))));
    }
    let (folds, chain_acceptance) = if spec.is_parameter_free() {
        let folds = (0..ds.n())
            .map(|i| {
                exact_fold_log_density(spec, ds, i, cfg.scored_replicate).map(|ld| FoldOutcome {
                    fold: i,
                    log_density: ld,
                    mcse: 0.0,
                    ess: None,
                    used_fallback_chain: false,
                    skipped_draws: 0,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        (folds, None)
    } else {
        let chain = posterior_chain(spec, ds, cfg)?;
        let folds = (0..ds.n())
            .into_par_iter()
            .map(|i| fold_log_density(spec, ds, i, mode, prior, &chain, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        (folds, Some(chain.acceptance_rate))
    };
    let report = CvReport::new(
        spec.label.clone(),
        mode,
        cfg.scored_replicate,
        folds.iter().map(|f| f.log_density).collect(),
        folds.iter().map(|f| f.mcse).collect(),
    )?;
    Ok(CvRun { report, folds, chain_acceptance })
}

/// Log pseudo-Bayes factor of the first report's model over the second:
/// the sum over folds of held-out log density differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbfReport {
    pub numerator_label: String,
    pub denominator_label: String,
    pub per_fold_log_ratio: Vec<f64>,
    pub log_pbf: f64,
    /// log_pbf / n, the quantity with a large-n limit.
    pub normalized_log_pbf: f64,
}

pub fn pbf(numerator: &CvReport, denominator: &CvReport) -> Result<PbfReport, CvError> {
    if numerator.n_folds() != denominator.n_folds() {
        return Err(CvError::FoldCountMismatch {
            left: numerator.n_folds(),
            right: denominator.n_folds(),
        });
    }
    let per_fold_log_ratio: Vec<f64> = numerator
        .per_fold_log_density
        .iter()
        .zip(&denominator.per_fold_log_density)
        .map(|(a, b)| a - b)
        .collect();
    let log_pbf: f64 = per_fold_log_ratio.iter().sum();
    Ok(PbfReport {
        numerator_label: numerator.model_label.clone(),
        denominator_label: denominator.model_label.clone(),
        normalized_log_pbf: log_pbf / per_fold_log_ratio.len() as f64,
        per_fold_log_ratio,
        log_pbf,
    })
}

/// Leave-one-out least-squares state for Gaussian models that are linear
/// in their coefficients under a flat coefficient prior. The design
/// closure maps a (row, replicate) cell to its regressor vector, which
/// lets the same machinery cover the plain line, the quadratic design and
/// autoregressive models whose lagged response acts as a regressor.
pub struct ConjugateLooFit {
    theta_hat: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    rss: f64,
    cells: usize,
    dim: usize,
}

pub fn conjugate_loo_fit(
    ds: &ReplicatedDataset,
    fold: usize,
    design: &dyn Fn(usize, usize) -> Vec<f64>,
) -> Result<ConjugateLooFit, CvError> {
    if fold >= ds.n() {
        return Err(CvError::Data(DataError::IndexOutOfRange(format!(
            "fold {} of {}",
            fold,
            ds.n()
        ))));
    }
    let dim = design(if fold == 0 { 1 } else { 0 }, 0).len();
    let mut xtx = DMatrix::zeros(dim, dim);
    let mut xty = DVector::zeros(dim);
    let mut cells = 0usize;
    for i in 0..ds.n() {
        if i == fold {
            continue;
        }
        for j in 0..ds.m() {
            let row = DVector::from_vec(design(i, j));
            xtx += &row * row.transpose();
            xty += &row * ds.response(i, j);
            cells += 1;
        }
    }
    let chol = xtx.clone().cholesky().ok_or_else(|| {
        CvError::Data(DataError::InvalidModel(
            "leave-one-out design is rank deficient".into(),
        ))
    })?;
    let theta_hat = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let mut rss = 0.0;
    for i in 0..ds.n() {
        if i == fold {
            continue;
        }
        for j in 0..ds.m() {
            let row = DVector::from_vec(design(i, j));
            let r = ds.response(i, j) - row.dot(&theta_hat);
            rss += r * r;
        }
    }
    Ok(ConjugateLooFit { theta_hat, xtx_inv, rss, cells, dim })
}

impl ConjugateLooFit {
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    fn mean_and_leverage(&self, x0: &[f64]) -> Result<(f64, f64), CvError> {
        if x0.len() != self.dim {
            return Err(CvError::Data(DataError::DimensionMismatch(format!(
                "{} regressors for a fit of dimension {}",
                x0.len(),
                self.dim
            ))));
        }
        let v = DVector::from_column_slice(x0);
        Ok((v.dot(&self.theta_hat), v.dot(&(&self.xtx_inv * &v))))
    }

    /// Predictive log density at a held-out cell with regressors `x0` when
    /// the noise variance is known: normal with the refit mean and
    /// variance sigma2 * (1 + leverage).
    pub fn log_predictive_known_variance(
        &self,
        x0: &[f64],
        y: f64,
        sigma2: f64,
    ) -> Result<f64, CvError> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(CvError::Data(DataError::InvalidModel(format!(
                "noise variance {sigma2} is not usable"
            ))));
        }
        let (mean, h) = self.mean_and_leverage(x0)?;
        let var = sigma2 * (1.0 + h);
        let r = y - mean;
        Ok(-0.5 * (2.0 * std::f64::consts::PI * var).ln() - r * r / (2.0 * var))
    }

    /// Predictive with the noise variance unknown under the reference
    /// prior 1/sigma2: Student-t with the residual degrees of freedom,
    /// located at the refit mean with squared scale s2 * (1 + leverage).
    pub fn log_predictive_free_variance(&self, x0: &[f64], y: f64) -> Result<f64, CvError> {
        let df = self.cells as f64 - self.dim as f64;
        if df < 1.0 {
            return Err(CvError::Data(DataError::InvalidModel(
                "free-variance predictive needs more training cells than coefficients".into(),
            )));
        }
        let (mean, h) = self.mean_and_leverage(x0)?;
        let s2 = self.rss / df;
        let scale = (s2 * (1.0 + h)).sqrt();
        let t = StudentsT::new(mean, scale, df)
            .map_err(|e| CvError::Data(DataError::InvalidModel(e.to_string())))?;
        Ok(t.ln_pdf(y))
    }
}

fn line_design(ds: &ReplicatedDataset) -> impl Fn(usize, usize) -> Vec<f64> + '_ {
    |i, _j| vec![1.0, ds.covariate(i, 0)]
}

/// Closed-form leave-one-out predictive log density for the Gaussian line
/// with a flat prior on (intercept, slope) and known noise variance.
pub fn conjugate_loo_known_variance(
    ds: &ReplicatedDataset,
    fold: usize,
    sigma2: f64,
    scored_replicate: usize,
) -> Result<f64, CvError> {
    let design = line_design(ds);
    let fit = conjugate_loo_fit(ds, fold, &design)?;
    fit.log_predictive_known_variance(
        &design(fold, scored_replicate),
        ds.response(fold, scored_replicate),
        sigma2,
    )
}

/// The Gaussian line with unknown noise variance under the reference
/// prior 1/sigma2.
pub fn conjugate_loo_free_variance(
    ds: &ReplicatedDataset,
    fold: usize,
    scored_replicate: usize,
) -> Result<f64, CvError> {
    let design = line_design(ds);
    let fit = conjugate_loo_fit(ds, fold, &design)?;
    fit.log_predictive_free_variance(
        &design(fold, scored_replicate),
        ds.response(fold, scored_replicate),
    )
}
