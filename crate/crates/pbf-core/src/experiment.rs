//! Truth-model data generation and the scripted studies built on it:
//! convergence of normalized log pseudo-Bayes factors toward their
//! analytic limits, and the replicated-count model-selection tables.
//!
//! Every random quantity flows from a named substream of the study seed,
//! so a config plus a seed list reproduces a study bit-for-bit no matter
//! how seeds and folds are scheduled across threads.

use crate::crossval::{
    conjugate_loo_fit, fold_log_density, pbf, posterior_chain, CvConfig, CvError,
};
use crate::data::{
    CvMode, CvReport, DataError, Family, LinkFn, ModelRole, ModelSpec, RegressionForm,
    ReplicatedDataset, Slot, ThetaVector, TruthFn,
};
use crate::prior::{ClampPolicy, CovariateAxis, InversePriorSpec, LinkBand, PriorError, PriorKind};
use crate::rate::{
    ar1_pbf_limit, theoretical_pbf_limit, Ar1TheoryInputs, Ar1Theta, CovariateSpace, LinTheta,
    RateError, RateModel,
};
use crate::sampler::{substream, ResamplePlan, TmcmcConfig};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyKind {
    ConvergenceLinear,
    ConvergenceQuadratic,
    ConvergenceAr1,
    Table1,
    Table2,
    Custom,
}

impl StudyKind {
    fn run_label(self) -> &'static str {
        match self {
            StudyKind::ConvergenceLinear => "conv-linear",
            StudyKind::ConvergenceQuadratic => "conv-quadratic",
            StudyKind::ConvergenceAr1 => "conv-ar1",
            StudyKind::Table1 => "table1",
            StudyKind::Table2 => "table2",
            StudyKind::Custom => "custom",
        }
    }
}

/// How the synthetic responses come to be. The count kinds redraw their
/// regression coefficients uniformly on (-1, 1) for every seed, so scores
/// are comparable only within a seed; the recorded draw accompanies each
/// dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruthConfig {
    /// y_ij ~ Poisson(exp(a0 + b0 x_i)) with x_i uniform on (-1, 1).
    PoissonLine,
    /// y_ij ~ Poisson(exp(a0 + b0 x_i + g0 z_i)), x_i uniform on (-1, 1)
    /// and z_i uniform on (0, 2).
    PoissonTwoCovariate,
    /// y_ij = curve(x_i) + noise_sd * e_ij with x_i uniform on the stated
    /// interval. noise_sd = 0 produces noiseless curve values.
    GaussianCurve { curve: TruthFn, noise_sd: f64, lower: f64, upper: f64 },
    /// Replicated autoregressive paths y_tj = rho0 y_{t-1,j}
    /// + beta0 (x_t + z_t) + noise, started at zero, with x_t and z_t
    /// independent centered uniforms scaled to the stated deviations.
    Ar1 { rho0: f64, beta0: f64, noise_sd: f64, sd_x: f64, sd_z: f64 },
}

impl TruthConfig {
    /// Covariate columns the generated dataset carries.
    pub fn covariate_count(&self) -> usize {
        match self {
            TruthConfig::PoissonLine | TruthConfig::GaussianCurve { .. } => 1,
            TruthConfig::PoissonTwoCovariate | TruthConfig::Ar1 { .. } => 2,
        }
    }
}

/// One candidate model in a study roster, in dataset column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub family: Family,
    pub link: LinkFn,
    pub regression: RegressionForm,
    pub covariates: Vec<usize>,
}

impl RosterEntry {
    pub fn new(
        family: Family,
        link: LinkFn,
        regression: RegressionForm,
        covariates: Vec<usize>,
    ) -> Self {
        Self { family, link, regression, covariates }
    }

    /// Stable identifier used for report labels and stream names.
    pub fn label(&self) -> String {
        let fam = match self.family {
            Family::Poisson => "poisson",
            Family::Geometric => "geometric",
            Family::GaussianNoise => "gaussian",
        };
        let link = match self.link {
            LinkFn::Log => "log",
            LinkFn::Logit => "logit",
            LinkFn::Probit => "probit",
            LinkFn::Identity => "identity",
        };
        let reg = match self.regression {
            RegressionForm::Linear => "linear",
            RegressionForm::Quadratic => "quadratic",
            RegressionForm::Gp => "gp",
            RegressionForm::Ar1 => "ar1",
            RegressionForm::FixedFunction => "fixed",
        };
        let covs: Vec<String> = self.covariates.iter().map(|c| c.to_string()).collect();
        format!("{fam}-{link}-{reg}-c{}", covs.join("+"))
    }

    pub fn build_spec(&self) -> Result<ModelSpec, ExperimentError> {
        Ok(ModelSpec::new(
            self.label(),
            self.family,
            self.link,
            self.regression,
            self.covariates.clone(),
        )?)
    }

    /// Human-readable column values for rendered tables.
    pub fn display(&self, names: &[String]) -> RowDisplay {
        let named: Vec<&str> = self
            .covariates
            .iter()
            .map(|&c| names.get(c).map_or("?", |s| s.as_str()))
            .collect();
        let covariates = if named.len() == 1 {
            named[0].to_string()
        } else {
            format!("({})", named.join(","))
        };
        RowDisplay {
            covariates,
            model: match self.family {
                Family::Poisson => "Poisson",
                Family::Geometric => "Geometric",
                Family::GaussianNoise => "Gaussian",
            }
            .into(),
            link: match self.link {
                LinkFn::Log => "log",
                LinkFn::Logit => "logit",
                LinkFn::Probit => "probit",
                LinkFn::Identity => "identity",
            }
            .into(),
            regression: match self.regression {
                RegressionForm::Linear => "linear",
                RegressionForm::Quadratic => "quadratic",
                RegressionForm::Gp => "Gaussian process",
                RegressionForm::Ar1 => "AR(1)",
                RegressionForm::FixedFunction => "fixed",
            }
            .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDisplay {
    pub covariates: String,
    pub model: String,
    pub link: String,
    pub regression: String,
}

/// The uniform covariate-band prior matching a roster entry: the band is
/// inverted through the model's own mean map, pairs of covariates are
/// both sampled, and autoregressive or quadratic forms get their
/// dedicated band statistics.
pub fn inverse_prior_for(
    entry: &RosterEntry,
    c1: f64,
    c2: f64,
    clamp: ClampPolicy,
) -> Result<InversePriorSpec, ExperimentError> {
    let base = match (entry.family, entry.link) {
        (Family::Poisson, LinkFn::Log) => LinkBand::PoissonLog,
        (Family::Geometric, LinkFn::Logit) => LinkBand::GeomLogit,
        (Family::Geometric, LinkFn::Probit) => LinkBand::GeomProbit,
        (Family::GaussianNoise, LinkFn::Identity) => LinkBand::GaussianIdentity,
        (f, l) => {
            return Err(ExperimentError::InvalidConfig(format!(
                "no covariate band for {f:?} with {l:?} link"
            )))
        }
    };
    let kind = match (entry.regression, entry.covariates.len()) {
        (RegressionForm::Ar1, _) => PriorKind::Ar1,
        (RegressionForm::Quadratic, _) => PriorKind::Quadratic,
        (_, 1) => PriorKind::Link(base),
        (_, 2) => PriorKind::TwoCovariate { which: CovariateAxis::X, base },
        (_, k) => {
            return Err(ExperimentError::InvalidConfig(format!(
                "no covariate band for a {k}-covariate model"
            )))
        }
    };
    let prior = InversePriorSpec::new(kind).with_constants(c1, c2).with_clamp(clamp);
    prior.validate()?;
    Ok(prior)
}

/// The six-row count-model roster over a single covariate: Poisson with
/// log link and geometric with logit and probit links, each in linear and
/// Gaussian-process regression forms.
pub fn roster_single_covariate() -> Vec<RosterEntry> {
    let blocks = [
        (Family::Poisson, LinkFn::Log),
        (Family::Geometric, LinkFn::Logit),
        (Family::Geometric, LinkFn::Probit),
    ];
    let mut roster = Vec::new();
    for (family, link) in blocks {
        for regression in [RegressionForm::Linear, RegressionForm::Gp] {
            roster.push(RosterEntry::new(family, link, regression, vec![0]));
        }
    }
    roster
}

/// The eighteen-row variable-selection roster: every single-covariate
/// block expanded over the covariate subsets {x}, {z} and {x, z}.
pub fn roster_two_covariate() -> Vec<RosterEntry> {
    let blocks = [
        (Family::Poisson, LinkFn::Log, RegressionForm::Linear),
        (Family::Poisson, LinkFn::Log, RegressionForm::Gp),
        (Family::Geometric, LinkFn::Logit, RegressionForm::Linear),
        (Family::Geometric, LinkFn::Logit, RegressionForm::Gp),
        (Family::Geometric, LinkFn::Probit, RegressionForm::Linear),
        (Family::Geometric, LinkFn::Probit, RegressionForm::Gp),
    ];
    let mut roster = Vec::new();
    for (family, link, regression) in blocks {
        for covs in [vec![0], vec![1], vec![0, 1]] {
            roster.push(RosterEntry::new(family, link, regression, covs));
        }
    }
    roster
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    /// Row counts, ascending for convergence studies; table studies use
    /// the first entry.
    pub n_schedule: Vec<usize>,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub truth: TruthConfig,
    pub sampler: TmcmcConfig,
    pub plan: ResamplePlan,
    /// Replicate column scored in every report; comparisons across
    /// different columns are meaningless and never produced.
    pub scored_replicate: usize,
    pub c1: f64,
    pub c2: f64,
    pub clamp: ClampPolicy,
    /// Candidate models for Custom studies; the fixed table rosters
    /// ignore it.
    #[serde(default)]
    pub roster: Vec<RosterEntry>,
}

impl ExperimentConfig {
    /// Single-covariate count-model selection at n = m = 10 over twenty
    /// seeds. The band lower edge is clamped rather than fatal because
    /// all-zero count rows are routine at this sample size.
    pub fn table1() -> Self {
        Self {
            study: StudyKind::Table1,
            n_schedule: vec![10],
            m: 10,
            seeds: (0..20).collect(),
            truth: TruthConfig::PoissonLine,
            sampler: TmcmcConfig { total_iterations: 12_000, burn_in: 4_000, ..TmcmcConfig::default() },
            plan: ResamplePlan { subsample_size: 400, reuse_per_draw: 50 },
            scored_replicate: 0,
            c1: 1.0,
            c2: 100.0,
            clamp: ClampPolicy::ClampToEpsilon,
            roster: Vec::new(),
        }
    }

    /// Two-covariate variable selection at n = m = 10.
    pub fn table2() -> Self {
        Self {
            study: StudyKind::Table2,
            truth: TruthConfig::PoissonTwoCovariate,
            ..Self::table1()
        }
    }

    fn convergence_base(study: StudyKind, truth: TruthConfig) -> Self {
        Self {
            study,
            n_schedule: vec![100, 500, 2000, 5000],
            m: 1,
            seeds: (0..10).collect(),
            truth,
            sampler: TmcmcConfig::default(),
            plan: ResamplePlan::default(),
            scored_replicate: 0,
            c1: 1.0,
            c2: 100.0,
            clamp: ClampPolicy::Error,
            roster: Vec::new(),
        }
    }

    /// Gaussian line fit to a curved truth; the normalized log
    /// pseudo-Bayes factor against the truth model approaches minus the
    /// line's divergence rate minimum.
    pub fn convergence_linear() -> Self {
        Self::convergence_base(
            StudyKind::ConvergenceLinear,
            TruthConfig::GaussianCurve {
                curve: TruthFn::Polynomial(vec![0.0, 0.0, 1.0]),
                noise_sd: 1.0,
                lower: -1.0,
                upper: 1.0,
            },
        )
    }

    /// Quadratic fit to a cubic truth.
    pub fn convergence_quadratic() -> Self {
        Self::convergence_base(
            StudyKind::ConvergenceQuadratic,
            TruthConfig::GaussianCurve {
                curve: TruthFn::Polynomial(vec![0.0, 0.0, 0.0, 1.0]),
                noise_sd: 1.0,
                lower: -1.0,
                upper: 1.0,
            },
        )
    }

    /// Autoregressive truth carrying both covariates, compared through
    /// the two single-covariate autoregressive candidates. Symmetric
    /// covariate scales put the limit at zero.
    pub fn convergence_ar1() -> Self {
        Self::convergence_base(
            StudyKind::ConvergenceAr1,
            TruthConfig::Ar1 { rho0: 0.5, beta0: 1.0, noise_sd: 1.0, sd_x: 1.0, sd_z: 1.0 },
        )
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_schedule.is_empty() {
            return Err(ExperimentError::InvalidConfig("empty n schedule".into()));
        }
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidConfig("empty seed list".into()));
        }
        if let Some(&n) = self.n_schedule.iter().find(|&&n| n < 2) {
            return Err(ExperimentError::InvalidConfig(format!(
                "schedule entry {n} below the two-row minimum"
            )));
        }
        if self.m < 1 {
            return Err(ExperimentError::InvalidConfig("m must be at least 1".into()));
        }
        if self.scored_replicate >= self.m {
            return Err(ExperimentError::InvalidConfig(format!(
                "scored replicate {} of {}",
                self.scored_replicate, self.m
            )));
        }
        if !(self.c1 >= 0.0 && self.c2 >= self.c1) {
            return Err(ExperimentError::InvalidConfig(format!(
                "band constants need 0 <= c1 <= c2, got ({}, {})",
                self.c1, self.c2
            )));
        }
        let truth_ok = match self.study {
            StudyKind::Table1 => matches!(self.truth, TruthConfig::PoissonLine),
            StudyKind::Table2 => matches!(self.truth, TruthConfig::PoissonTwoCovariate),
            StudyKind::ConvergenceLinear | StudyKind::ConvergenceQuadratic => {
                matches!(self.truth, TruthConfig::GaussianCurve { .. })
            }
            StudyKind::ConvergenceAr1 => matches!(self.truth, TruthConfig::Ar1 { .. }),
            StudyKind::Custom => true,
        };
        if !truth_ok {
            return Err(ExperimentError::InvalidConfig(format!(
                "{:?} study cannot run on {:?} truth",
                self.study, self.truth
            )));
        }
        match &self.truth {
            TruthConfig::GaussianCurve { noise_sd, lower, upper, .. } => {
                if !(*noise_sd >= 0.0) {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "negative noise deviation {noise_sd}"
                    )));
                }
                if !(lower < upper) {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "covariate interval [{lower}, {upper}] is empty"
                    )));
                }
            }
            TruthConfig::Ar1 { rho0, noise_sd, sd_x, sd_z, .. } => {
                if rho0.abs() >= 1.0 {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "autoregression {rho0} is not stationary"
                    )));
                }
                if !(*noise_sd >= 0.0 && *sd_x >= 0.0 && *sd_z >= 0.0) {
                    return Err(ExperimentError::InvalidConfig(
                        "negative scale in the autoregressive truth".into(),
                    ));
                }
            }
            TruthConfig::PoissonLine | TruthConfig::PoissonTwoCovariate => {}
        }
        if self.study == StudyKind::Custom {
            if self.roster.is_empty() {
                return Err(ExperimentError::InvalidConfig(
                    "custom study needs a nonempty roster".into(),
                ));
            }
            let p = self.truth.covariate_count();
            for entry in &self.roster {
                if entry.covariates.iter().any(|&c| c >= p) {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "roster entry {} indexes past the {p} generated covariates",
                        entry.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A generated dataset together with the realized truth parameters, which
/// oracle computations need and rendered outputs record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub dataset: ReplicatedDataset,
    pub truth_params: Vec<(String, f64)>,
}

fn unit_interval(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

fn centered_unit(rng: &mut impl Rng) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

/// Dataset for the first schedule entry; see [`generate_truth_sized`].
pub fn generate_truth(cfg: &ExperimentConfig, seed: u64) -> Result<GeneratedData, ExperimentError> {
    generate_truth_sized(cfg, seed, cfg.n_schedule[0])
}

/// One synthetic dataset of n rows under the config's truth. The draw
/// order is fixed (parameters, then covariates row by row, then
/// responses), so a (seed, n) pair always produces the same dataset.
pub fn generate_truth_sized(
    cfg: &ExperimentConfig,
    seed: u64,
    n: usize,
) -> Result<GeneratedData, ExperimentError> {
    if n < 2 {
        return Err(ExperimentError::InvalidConfig(format!(
            "cannot generate {n} rows; two is the minimum"
        )));
    }
    let m = cfg.m;
    let size = format!("n-{n}");
    match &cfg.truth {
        TruthConfig::PoissonLine => {
            let mut rng = substream(seed, &["truth", "poisson-line", &size]);
            let a0 = centered_unit(&mut rng);
            let b0 = centered_unit(&mut rng);
            let xs: Vec<f64> = (0..n).map(|_| centered_unit(&mut rng)).collect();
            let mut resp = DMatrix::zeros(n, m);
            for i in 0..n {
                let lam = (a0 + b0 * xs[i]).exp();
                let pois = Poisson::new(lam).expect("a positive finite mean");
                for j in 0..m {
                    resp[(i, j)] = pois.sample(&mut rng);
                }
            }
            let ds = ReplicatedDataset::new(
                DMatrix::from_column_slice(n, 1, &xs),
                resp,
                vec!["x".into()],
            )?;
            Ok(GeneratedData {
                dataset: ds,
                truth_params: vec![("alpha0".into(), a0), ("beta0".into(), b0)],
            })
        }
        TruthConfig::PoissonTwoCovariate => {
            let mut rng = substream(seed, &["truth", "poisson-two-covariate", &size]);
            let a0 = centered_unit(&mut rng);
            let b0 = centered_unit(&mut rng);
            let g0 = centered_unit(&mut rng);
            let mut cov = DMatrix::zeros(n, 2);
            for i in 0..n {
                cov[(i, 0)] = centered_unit(&mut rng);
                cov[(i, 1)] = 2.0 * unit_interval(&mut rng);
            }
            let mut resp = DMatrix::zeros(n, m);
            for i in 0..n {
                let lam = (a0 + b0 * cov[(i, 0)] + g0 * cov[(i, 1)]).exp();
                let pois = Poisson::new(lam).expect("a positive finite mean");
                for j in 0..m {
                    resp[(i, j)] = pois.sample(&mut rng);
                }
            }
            let ds = ReplicatedDataset::new(cov, resp, vec!["x".into(), "z".into()])?;
            Ok(GeneratedData {
                dataset: ds,
                truth_params: vec![
                    ("alpha0".into(), a0),
                    ("beta0".into(), b0),
                    ("gamma0".into(), g0),
                ],
            })
        }
        TruthConfig::GaussianCurve { curve, noise_sd, lower, upper } => {
            let mut rng = substream(seed, &["truth", "gaussian-curve", &size]);
            let xs: Vec<f64> =
                (0..n).map(|_| lower + (upper - lower) * unit_interval(&mut rng)).collect();
            let mut resp = DMatrix::zeros(n, m);
            for i in 0..n {
                let mean = curve.eval(xs[i]);
                for j in 0..m {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    resp[(i, j)] = mean + noise_sd * e;
                }
            }
            let ds = ReplicatedDataset::new(
                DMatrix::from_column_slice(n, 1, &xs),
                resp,
                vec!["x".into()],
            )?;
            Ok(GeneratedData {
                dataset: ds,
                truth_params: vec![("sigma0".into(), *noise_sd)],
            })
        }
        TruthConfig::Ar1 { rho0, beta0, noise_sd, sd_x, sd_z } => {
            let mut rng = substream(seed, &["truth", "ar1", &size]);
            // A centered uniform on (-a, a) has variance a^2 / 3.
            let ax = sd_x * 3.0f64.sqrt();
            let az = sd_z * 3.0f64.sqrt();
            let mut cov = DMatrix::zeros(n, 2);
            for t in 0..n {
                cov[(t, 0)] = ax * centered_unit(&mut rng);
                cov[(t, 1)] = az * centered_unit(&mut rng);
            }
            let mut resp = DMatrix::zeros(n, m);
            for j in 0..m {
                let mut prev = 0.0;
                for t in 0..n {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let y = rho0 * prev + beta0 * (cov[(t, 0)] + cov[(t, 1)]) + noise_sd * e;
                    resp[(t, j)] = y;
                    prev = y;
                }
            }
            let ds = ReplicatedDataset::new(cov, resp, vec!["x".into(), "z".into()])?;
            Ok(GeneratedData {
                dataset: ds,
                truth_params: vec![
                    ("rho0".into(), *rho0),
                    ("beta0".into(), *beta0),
                    ("sigma0".into(), *noise_sd),
                ],
            })
        }
    }
}

/// Empirical second moments (mean x^2, mean z^2, mean xz) of a generated
/// two-covariate design: the quantities whose limits the autoregressive
/// rate formulas assume. Exposed so studies can verify the premise on the
/// data they actually used instead of taking it on faith.
pub fn ar1_covariate_moments(ds: &ReplicatedDataset) -> Result<(f64, f64, f64), ExperimentError> {
    if ds.p() < 2 {
        return Err(ExperimentError::InvalidConfig(
            "covariate moments need two covariate columns".into(),
        ));
    }
    let n = ds.n() as f64;
    let (mut xx, mut zz, mut xz) = (0.0, 0.0, 0.0);
    for t in 0..ds.n() {
        let x = ds.covariate(t, 0);
        let z = ds.covariate(t, 1);
        xx += x * x;
        zz += z * z;
        xz += x * z;
    }
    Ok((xx / n, zz / n, xz / n))
}

/// Average log likelihood ratio (1/n) sum of log f_theta(y_i) minus
/// log f_truth(y_i) on data freshly drawn from the Gaussian-curve truth.
/// Its n-large limit is minus the line's divergence rate at theta.
pub fn simulate_linear_log_ratio_rate(
    th: &LinTheta,
    curve: &TruthFn,
    noise_sd: f64,
    lower: f64,
    upper: f64,
    n: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    if !(th.sigma2.is_finite() && th.sigma2 > 0.0) {
        return Err(ExperimentError::Rate(RateError::NonPositiveVariance(th.sigma2)));
    }
    if !(noise_sd > 0.0) {
        return Err(ExperimentError::Rate(RateError::NonPositiveVariance(
            noise_sd * noise_sd,
        )));
    }
    let mut rng = substream(seed, &["equipartition", "linear"]);
    let s0 = noise_sd * noise_sd;
    let mut total = 0.0;
    for _ in 0..n {
        let x = lower + (upper - lower) * unit_interval(&mut rng);
        let mean0 = curve.eval(x);
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = mean0 + noise_sd * e;
        let r = y - th.alpha - th.beta * x;
        let r0 = y - mean0;
        total += -0.5 * th.sigma2.ln() - r * r / (2.0 * th.sigma2)
            + 0.5 * s0.ln()
            + r0 * r0 / (2.0 * s0);
    }
    Ok(total / n as f64)
}

/// The autoregressive counterpart: one path from the two-covariate truth,
/// scored under the single-covariate model at theta. The limit is minus
/// the autoregressive divergence rate.
pub fn simulate_ar1_log_ratio_rate(
    th: &Ar1Theta,
    inputs: &Ar1TheoryInputs,
    which: CovariateAxis,
    n: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    inputs.validate()?;
    if !(th.sigma2.is_finite() && th.sigma2 > 0.0) {
        return Err(ExperimentError::Rate(RateError::NonPositiveVariance(th.sigma2)));
    }
    let mut rng = substream(seed, &["equipartition", "ar1"]);
    let ax = inputs.sigma_x_sq.sqrt() * 3.0f64.sqrt();
    let az = inputs.sigma_z_sq.sqrt() * 3.0f64.sqrt();
    let s0 = inputs.sigma0_sq;
    let sd0 = s0.sqrt();
    let mut prev = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let x = ax * centered_unit(&mut rng);
        let z = az * centered_unit(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = inputs.rho0 * prev + inputs.beta0 * (x + z) + sd0 * e;
        let own = match which {
            CovariateAxis::X => x,
            CovariateAxis::Z => z,
        };
        let r = y - th.rho * prev - th.beta * own;
        let r0 = y - inputs.rho0 * prev - inputs.beta0 * (x + z);
        total += -0.5 * th.sigma2.ln() - r * r / (2.0 * th.sigma2)
            + 0.5 * s0.ln()
            + r0 * r0 / (2.0 * s0);
        prev = y;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub seed: u64,
    pub n: usize,
    pub normalized_log_pbf: f64,
    pub limit: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub kind: StudyKind,
    pub numerator: String,
    pub denominator: String,
    pub limit: f64,
    /// Seed-major, schedule order within a seed.
    pub points: Vec<ConvergencePoint>,
    /// Seeds whose gap at the last schedule entry is no larger than at
    /// the first.
    pub improving_seeds: usize,
    pub total_seeds: usize,
    /// At least seven in ten seeds improving.
    pub trend_met: bool,
}

fn assemble_convergence(
    kind: StudyKind,
    numerator: String,
    denominator: String,
    limit: f64,
    seeds: &[u64],
    schedule: &[usize],
    points: Vec<ConvergencePoint>,
) -> ConvergenceStudy {
    let per_seed = schedule.len();
    let improving_seeds = seeds
        .iter()
        .enumerate()
        .filter(|(s, _)| {
            let first = &points[s * per_seed];
            let last = &points[s * per_seed + per_seed - 1];
            last.gap <= first.gap
        })
        .count();
    let total_seeds = seeds.len();
    ConvergenceStudy {
        kind,
        numerator,
        denominator,
        limit,
        points,
        improving_seeds,
        total_seeds,
        trend_met: improving_seeds as f64 >= 0.7 * total_seeds as f64,
    }
}

/// Exact conjugate leave-one-out report for a Gaussian design that is
/// linear in its coefficients, with the noise variance integrated out
/// under its reference prior.
fn conjugate_cv_report(
    label: &str,
    ds: &ReplicatedDataset,
    k: usize,
    design: &dyn Fn(usize, usize) -> Vec<f64>,
) -> Result<CvReport, ExperimentError> {
    let mut per_fold = Vec::with_capacity(ds.n());
    for fold in 0..ds.n() {
        let fit = conjugate_loo_fit(ds, fold, design)?;
        per_fold.push(fit.log_predictive_free_variance(&design(fold, k), ds.response(fold, k))?);
    }
    let zeros = vec![0.0; ds.n()];
    Ok(CvReport::new(label, CvMode::Forward, k, per_fold, zeros)?)
}

fn truth_cv_report(
    curve: &TruthFn,
    sigma0_sq: f64,
    ds: &ReplicatedDataset,
    k: usize,
) -> Result<CvReport, ExperimentError> {
    let spec = ModelSpec::new(
        "truth",
        Family::GaussianNoise,
        LinkFn::Identity,
        RegressionForm::FixedFunction,
        vec![0],
    )?
    .with_truth_fn(curve.clone())?
    .with_fixed_params(ThetaVector::new(vec![sigma0_sq.ln()], vec![Slot::LogVariance])?)
    .with_role(ModelRole::Truth);
    let cfg = CvConfig { scored_replicate: k, ..CvConfig::default() };
    Ok(crate::crossval::run_cv(&spec, ds, CvMode::Forward, None, &cfg)?.report)
}

fn gaussian_convergence(
    cfg: &ExperimentConfig,
    model: RateModel,
) -> Result<ConvergenceStudy, ExperimentError> {
    let TruthConfig::GaussianCurve { curve, noise_sd, lower, upper } = &cfg.truth else {
        return Err(ExperimentError::InvalidConfig(
            "Gaussian convergence study needs a Gaussian-curve truth".into(),
        ));
    };
    let sigma0_sq = noise_sd * noise_sd;
    let space = CovariateSpace::new(*lower, *upper)?;
    let eta0 = |x: f64| curve.eval(x);
    let limit = theoretical_pbf_limit(model, RateModel::Truth, eta0, sigma0_sq, &space)?;
    let label = match model {
        RateModel::Linear => "gaussian-line",
        RateModel::Quadratic => "gaussian-quadratic",
        RateModel::Truth => "truth",
    };
    let k = cfg.scored_replicate;
    let pairs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.n_schedule.iter().map(move |&n| (s, n)))
        .collect();
    let points: Vec<ConvergencePoint> = pairs
        .into_par_iter()
        .map(|(seed, n)| -> Result<ConvergencePoint, ExperimentError> {
            let data = generate_truth_sized(cfg, seed, n)?;
            let ds = &data.dataset;
            let candidate = match model {
                RateModel::Linear => conjugate_cv_report(label, ds, k, &|i, _| {
                    vec![1.0, ds.covariate(i, 0)]
                })?,
                RateModel::Quadratic => conjugate_cv_report(label, ds, k, &|i, _| {
                    let x = ds.covariate(i, 0);
                    vec![1.0, x, x * x]
                })?,
                RateModel::Truth => truth_cv_report(curve, sigma0_sq, ds, k)?,
            };
            let truth_report = truth_cv_report(curve, sigma0_sq, ds, k)?;
            let normalized = pbf(&candidate, &truth_report)?.normalized_log_pbf;
            Ok(ConvergencePoint {
                seed,
                n,
                normalized_log_pbf: normalized,
                limit,
                gap: (normalized - limit).abs(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_convergence(
        cfg.study,
        label.into(),
        "truth".into(),
        limit,
        &cfg.seeds,
        &cfg.n_schedule,
        points,
    ))
}

fn ar1_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceStudy, ExperimentError> {
    let TruthConfig::Ar1 { rho0, beta0, noise_sd, sd_x, sd_z } = cfg.truth else {
        return Err(ExperimentError::InvalidConfig(
            "autoregressive convergence study needs an autoregressive truth".into(),
        ));
    };
    let inputs = Ar1TheoryInputs {
        rho0,
        beta0,
        sigma0_sq: noise_sd * noise_sd,
        sigma_x_sq: sd_x * sd_x,
        sigma_z_sq: sd_z * sd_z,
    };
    let limit = ar1_pbf_limit(&inputs, false)?;
    let k = cfg.scored_replicate;
    let pairs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.n_schedule.iter().map(move |&n| (s, n)))
        .collect();
    let points: Vec<ConvergencePoint> = pairs
        .into_par_iter()
        .map(|(seed, n)| -> Result<ConvergencePoint, ExperimentError> {
            let data = generate_truth_sized(cfg, seed, n)?;
            let ds = &data.dataset;
            // The lagged response is a regressor, so each candidate is a
            // two-coefficient Gaussian design and the leave-one-out
            // predictive stays in closed form.
            let lagged = |t: usize, j: usize| -> f64 {
                if t == 0 {
                    0.0
                } else {
                    ds.response(t - 1, j)
                }
            };
            let m1 = conjugate_cv_report("ar1-x", ds, k, &|t, j| {
                vec![lagged(t, j), ds.covariate(t, 0)]
            })?;
            let m2 = conjugate_cv_report("ar1-z", ds, k, &|t, j| {
                vec![lagged(t, j), ds.covariate(t, 1)]
            })?;
            let normalized = pbf(&m1, &m2)?.normalized_log_pbf;
            Ok(ConvergencePoint {
                seed,
                n,
                normalized_log_pbf: normalized,
                limit,
                gap: (normalized - limit).abs(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_convergence(
        cfg.study,
        "ar1-x".into(),
        "ar1-z".into(),
        limit,
        &cfg.seeds,
        &cfg.n_schedule,
        points,
    ))
}

/// Normalized log pseudo-Bayes factors against their analytic limit over
/// the (seed, n) grid, with a per-seed improvement verdict.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceStudy, ExperimentError> {
    cfg.validate()?;
    match cfg.study {
        StudyKind::ConvergenceLinear => gaussian_convergence(cfg, RateModel::Linear),
        StudyKind::ConvergenceQuadratic => gaussian_convergence(cfg, RateModel::Quadratic),
        StudyKind::ConvergenceAr1 => ar1_convergence(cfg),
        other => Err(ExperimentError::InvalidConfig(format!(
            "{other:?} is not a convergence study"
        ))),
    }
}

/// One score cell: the mean held-out log density, or a note explaining
/// why the cell could not be produced. Failed cells are marked, never
/// silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub value: Option<f64>,
    pub note: Option<String>,
}

impl TableCell {
    fn value(v: f64) -> Self {
        Self { value: Some(v), note: None }
    }

    fn failed(note: String) -> Self {
        Self { value: None, note: Some(note) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub entry: RosterEntry,
    pub label: String,
    pub forward: TableCell,
    pub inverse: TableCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTable {
    pub seed: u64,
    pub truth_params: Vec<(String, f64)>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRowSummary {
    pub entry: RosterEntry,
    pub label: String,
    pub mean_forward: Option<f64>,
    pub mean_inverse: Option<f64>,
    /// Seeds where this row's forward score strictly tops the roster.
    pub forward_wins: usize,
    pub forward_seeds: usize,
    pub inverse_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStudy {
    pub kind: StudyKind,
    pub n: usize,
    pub m: usize,
    pub scored_replicate: usize,
    pub covariate_names: Vec<String>,
    pub per_seed: Vec<SeedTable>,
    pub summary: Vec<TableRowSummary>,
}

/// Both scoring modes for one roster row, sharing one full-data chain.
fn scored_row(
    spec: &ModelSpec,
    ds: &ReplicatedDataset,
    prior: Option<&InversePriorSpec>,
    cfg: &CvConfig,
) -> TableRow {
    let label = spec.label.clone();
    let entry_placeholder = RosterEntry::new(spec.family, spec.link, spec.regression, spec.covariates.clone());
    let chain = match posterior_chain(spec, ds, cfg) {
        Ok(c) => c,
        Err(e) => {
            let note = format!("posterior chain failed: {e}");
            return TableRow {
                entry: entry_placeholder,
                label,
                forward: TableCell::failed(note.clone()),
                inverse: TableCell::failed(note),
            };
        }
    };
    let score = |mode: CvMode, prior: Option<&InversePriorSpec>| -> Result<f64, CvError> {
        let folds = (0..ds.n())
            .into_par_iter()
            .map(|i| fold_log_density(spec, ds, i, mode, prior, &chain, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let report = CvReport::new(
            label.clone(),
            mode,
            cfg.scored_replicate,
            folds.iter().map(|f| f.log_density).collect(),
            folds.iter().map(|f| f.mcse).collect(),
        )?;
        Ok(report.mean_log_density)
    };
    let forward = match score(CvMode::Forward, None) {
        Ok(v) => TableCell::value(v),
        Err(e) => TableCell::failed(e.to_string()),
    };
    let inverse = if ds.m() < 2 {
        TableCell::failed("needs at least two replicates for the row scale".into())
    } else {
        match score(CvMode::Inverse, prior) {
            Ok(v) => TableCell::value(v),
            Err(e) => TableCell::failed(e.to_string()),
        }
    };
    TableRow { entry: entry_placeholder, label, forward, inverse }
}

fn summarize_table(roster: &[RosterEntry], per_seed: &[SeedTable]) -> Vec<TableRowSummary> {
    (0..roster.len())
        .map(|r| {
            let mut fwd = Vec::new();
            let mut inv = Vec::new();
            let mut wins = 0usize;
            for seed_table in per_seed {
                let row = &seed_table.rows[r];
                if let Some(v) = row.forward.value {
                    fwd.push(v);
                    let beats_all = seed_table
                        .rows
                        .iter()
                        .enumerate()
                        .filter(|(o, _)| *o != r)
                        .all(|(_, other)| other.forward.value.is_none_or(|w| v > w));
                    if beats_all {
                        wins += 1;
                    }
                }
                if let Some(v) = row.inverse.value {
                    inv.push(v);
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            TableRowSummary {
                entry: roster[r].clone(),
                label: roster[r].label(),
                mean_forward: mean(&fwd),
                mean_inverse: mean(&inv),
                forward_wins: wins,
                forward_seeds: fwd.len(),
                inverse_seeds: inv.len(),
            }
        })
        .collect()
}

/// The model-selection table: every roster row scored forward and
/// inverse on every seed's dataset, aggregated into means and win
/// counts. Failed cells carry notes; a study-level error is reserved for
/// invalid configs.
pub fn run_table_study(cfg: &ExperimentConfig) -> Result<TableStudy, ExperimentError> {
    cfg.validate()?;
    let roster = match cfg.study {
        StudyKind::Table1 => roster_single_covariate(),
        StudyKind::Table2 => roster_two_covariate(),
        StudyKind::Custom => cfg.roster.clone(),
        other => {
            return Err(ExperimentError::InvalidConfig(format!(
                "{other:?} is not a table study"
            )))
        }
    };
    let n = cfg.n_schedule[0];
    let specs = roster
        .iter()
        .map(|e| e.build_spec())
        .collect::<Result<Vec<_>, _>>()?;
    let priors = roster
        .iter()
        .map(|e| inverse_prior_for(e, cfg.c1, cfg.c2, cfg.clamp))
        .collect::<Result<Vec<_>, _>>()?;
    let per_seed: Vec<SeedTable> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedTable, ExperimentError> {
            let data = generate_truth_sized(cfg, seed, n)?;
            let rows: Vec<TableRow> = specs
                .par_iter()
                .zip(&priors)
                .map(|(spec, prior)| {
                    let cv_cfg = CvConfig {
                        sampler: cfg.sampler.clone(),
                        plan: cfg.plan,
                        scored_replicate: cfg.scored_replicate,
                        seed,
                        run_label: cfg.study.run_label().into(),
                    };
                    scored_row(spec, &data.dataset, Some(prior), &cv_cfg)
                })
                .collect();
            Ok(SeedTable { seed, truth_params: data.truth_params, rows })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize_table(&roster, &per_seed);
    let names = match cfg.truth.covariate_count() {
        1 => vec!["x".to_string()],
        _ => vec!["x".to_string(), "z".to_string()],
    };
    Ok(TableStudy {
        kind: cfg.study,
        n,
        m: cfg.m,
        scored_replicate: cfg.scored_replicate,
        covariate_names: names,
        per_seed,
        summary,
    })
}
