//! Kullback-Leibler divergence rates between postulated regression models
//! and a known truth, their minimizers, and the predicted large-n limits
//! of normalized log pseudo-Bayes factors.
//!
//! The Gaussian-regression rates have closed forms built from uniform
//! covariate moments; the autoregressive rates are explicit in the truth's
//! stationary moments. The per-observation log likelihood-ratio of data
//! against model converges to minus these rates, which is what ties the
//! formulas here to the Monte Carlo estimators elsewhere in the crate.

use crate::data::{DataError, RegressionForm, ReplicatedDataset};
use crate::prior::CovariateAxis;
use crate::sampler::substream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("NonFiniteIntegrand: g({0}) is not finite")]
    NonFiniteIntegrand(f64),
    #[error("NonPositiveVariance: {0}")]
    NonPositiveVariance(f64),
    #[error("NonStationaryTruth: |rho0| = {0} is not below 1")]
    NonStationaryTruth(f64),
    #[error("DegenerateCovariateSpace: {0}")]
    DegenerateCovariateSpace(String),
    #[error("SingularMomentMatrix")]
    SingularMomentMatrix,
    #[error("RankDeficientDesign: {0}")]
    RankDeficientDesign(String),
    #[error("NoConvergence: {0}")]
    NoConvergence(String),
    #[error("UnsupportedPair: {0}")]
    UnsupportedPair(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Compact covariate interval with uniform measure; expectations are
/// composite-Simpson integrals divided by the interval length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpace {
    pub lower: f64,
    pub upper: f64,
    pub grid: usize,
}

impl CovariateSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self, RateError> {
        Self { lower, upper, grid: 2001 }.validated()
    }

    pub fn with_grid(mut self, grid: usize) -> Result<Self, RateError> {
        self.grid = grid;
        self.validated()
    }

    fn validated(self) -> Result<Self, RateError> {
        if !(self.lower < self.upper) {
            return Err(RateError::DegenerateCovariateSpace(format!(
                "[{}, {}]",
                self.lower, self.upper
            )));
        }
        if self.grid < 3 || self.grid % 2 == 0 {
            return Err(RateError::DegenerateCovariateSpace(format!(
                "Simpson grid must be odd and at least 3, got {}",
                self.grid
            )));
        }
        Ok(self)
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// E[g(X)] for X uniform on the interval.
    pub fn ex<F>(&self, g: F) -> Result<f64, RateError>
    where
        F: Fn(f64) -> f64,
    {
        let n = self.grid;
        let h = self.length() / (n - 1) as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let x = self.lower + h * k as f64;
            let v = g(x);
            if !v.is_finite() {
                return Err(RateError::NonFiniteIntegrand(x));
            }
            let w = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * v;
        }
        Ok(sum * h / (3.0 * self.length()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinTheta {
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadTheta {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma2: f64,
}

fn check_sigma2(sigma2: f64) -> Result<(), RateError> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(RateError::NonPositiveVariance(sigma2));
    }
    Ok(())
}

/// Divergence rate of a Gaussian line (alpha, beta, sigma2) against the
/// truth y = eta0(x) + noise(sigma0_sq):
/// (1/2) log(sigma2/sigma0_sq) + sigma0_sq/(2 sigma2)
///   + E_X[(eta0 - alpha - beta X)^2] / (2 sigma2) - 1/2.
pub fn h_linear<F>(
    th: &LinTheta,
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<f64, RateError>
where
    F: Fn(f64) -> f64,
{
    check_sigma2(th.sigma2)?;
    check_sigma2(sigma0_sq)?;
    let resid2 = space.ex(|x| {
        let r = eta0(x) - th.alpha - th.beta * x;
        r * r
    })?;
    Ok(0.5 * (th.sigma2 / sigma0_sq).ln() + sigma0_sq / (2.0 * th.sigma2)
        + resid2 / (2.0 * th.sigma2)
        - 0.5)
}

/// Same rate with a quadratic mean alpha + beta1 x + beta2 x^2.
pub fn h_quadratic<F>(
    th: &QuadTheta,
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<f64, RateError>
where
    F: Fn(f64) -> f64,
{
    check_sigma2(th.sigma2)?;
    check_sigma2(sigma0_sq)?;
    let resid2 = space.ex(|x| {
        let r = eta0(x) - th.alpha - th.beta1 * x - th.beta2 * x * x;
        r * r
    })?;
    Ok(0.5 * (th.sigma2 / sigma0_sq).ln() + sigma0_sq / (2.0 * th.sigma2)
        + resid2 / (2.0 * th.sigma2)
        - 0.5)
}

/// Closed-form minimizer of [`h_linear`]: the L2(X) projection of eta0
/// onto lines, with the projection residual inflating the variance.
pub fn minimizer_linear<F>(
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<LinTheta, RateError>
where
    F: Fn(f64) -> f64,
{
    check_sigma2(sigma0_sq)?;
    let ex_x = space.ex(|x| x)?;
    let ex_x2 = space.ex(|x| x * x)?;
    let var_x = ex_x2 - ex_x * ex_x;
    if var_x <= 0.0 {
        return Err(RateError::DegenerateCovariateSpace(
            "covariate variance vanished".into(),
        ));
    }
    let ex_eta = space.ex(&eta0)?;
    let ex_xeta = space.ex(|x| x * eta0(x))?;
    let beta = (ex_xeta - ex_x * ex_eta) / var_x;
    let alpha = ex_eta - beta * ex_x;
    let resid2 = space.ex(|x| {
        let r = eta0(x) - alpha - beta * x;
        r * r
    })?;
    Ok(LinTheta { alpha, beta, sigma2: sigma0_sq + resid2 })
}

/// Closed-form minimizer of [`h_quadratic`] through the 3x3 moment system
/// A theta = b, A the Vandermonde moment matrix of X up to degree 4 and
/// b the moments of eta0 against (1, X, X^2).
pub fn minimizer_quadratic<F>(
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<QuadTheta, RateError>
where
    F: Fn(f64) -> f64,
{
    check_sigma2(sigma0_sq)?;
    let mut mom = [0.0; 5];
    for (k, m) in mom.iter_mut().enumerate() {
        *m = space.ex(|x| x.powi(k as i32))?;
    }
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            mom[0], mom[1], mom[2], mom[1], mom[2], mom[3], mom[2], mom[3], mom[4],
        ],
    );
    let b = DVector::from_row_slice(&[
        space.ex(&eta0)?,
        space.ex(|x| x * eta0(x))?,
        space.ex(|x| x * x * eta0(x))?,
    ]);
    // nalgebra's LU happily divides by a zero pivot, so a singular system
    // can come back as Some(non-finite) rather than None
    let sol = a
        .lu()
        .solve(&b)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(RateError::SingularMomentMatrix)?;
    let (alpha, beta1, beta2) = (sol[0], sol[1], sol[2]);
    let resid2 = space.ex(|x| {
        let r = eta0(x) - alpha - beta1 * x - beta2 * x * x;
        r * r
    })?;
    Ok(QuadTheta { alpha, beta1, beta2, sigma2: sigma0_sq + resid2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFit {
    /// (alpha, beta) or (alpha, beta1, beta2).
    pub coefficients: Vec<f64>,
    pub sigma2: f64,
}

/// Finite-sample counterparts of the rate minimizers, which converge to
/// them as n grows. The variance estimate is the displayed three-term
/// decomposition around the true regression values, so the truth function
/// is a required input; these estimators exist for theory checks, not for
/// data analysis.
///
/// The linear coefficients are the usual least squares on the responses.
/// The quadratic coefficients solve the sample moment system with the
/// *true* regression values on the right-hand side, exactly as displayed.
pub fn empirical_minimizers<F>(
    ds: &ReplicatedDataset,
    form: RegressionForm,
    eta0: F,
) -> Result<EmpiricalFit, RateError>
where
    F: Fn(f64) -> f64,
{
    let n = ds.n();
    let mut xs = Vec::with_capacity(n * ds.m());
    let mut ys = Vec::with_capacity(n * ds.m());
    for i in 0..n {
        for j in 0..ds.m() {
            xs.push(ds.covariate(i, 0));
            ys.push(ds.response(i, j));
        }
    }
    let nn = xs.len() as f64;
    let fitted: Vec<f64>;
    let coefficients: Vec<f64>;
    match form {
        RegressionForm::Linear => {
            let x_bar = xs.iter().sum::<f64>() / nn;
            let y_bar = ys.iter().sum::<f64>() / nn;
            let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
            if sxx <= 0.0 {
                return Err(RateError::RankDeficientDesign(
                    "all covariate values coincide".into(),
                ));
            }
            let sxy: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - y_bar) * (x - x_bar))
                .sum();
            let beta = sxy / sxx;
            let alpha = y_bar - beta * x_bar;
            fitted = xs.iter().map(|x| alpha + beta * x).collect();
            coefficients = vec![alpha, beta];
        }
        RegressionForm::Quadratic => {
            let mut mom = [0.0; 5];
            for x in &xs {
                for (k, m) in mom.iter_mut().enumerate() {
                    *m += x.powi(k as i32);
                }
            }
            for m in &mut mom {
                *m /= nn;
            }
            let a = DMatrix::from_row_slice(
                3,
                3,
                &[
                    mom[0], mom[1], mom[2], mom[1], mom[2], mom[3], mom[2], mom[3], mom[4],
                ],
            );
            let b = DVector::from_row_slice(&[
                xs.iter().map(|&x| eta0(x)).sum::<f64>() / nn,
                xs.iter().map(|&x| x * eta0(x)).sum::<f64>() / nn,
                xs.iter().map(|&x| x * x * eta0(x)).sum::<f64>() / nn,
            ]);
            let distinct = {
                let mut sorted = xs.clone();
                sorted.sort_by(|p, q| p.partial_cmp(q).expect("finite covariates"));
                sorted.dedup();
                sorted.len()
            };
            if distinct < 3 {
                return Err(RateError::RankDeficientDesign(format!(
                    "{distinct} distinct covariate values cannot identify a quadratic"
                )));
            }
            let sol = a
                .lu()
                .solve(&b)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or_else(|| RateError::RankDeficientDesign("singular moment system".into()))?;
            fitted = xs
                .iter()
                .map(|&x| sol[0] + sol[1] * x + sol[2] * x * x)
                .collect();
            coefficients = vec![sol[0], sol[1], sol[2]];
        }
        other => {
            return Err(RateError::UnsupportedPair(format!(
                "empirical minimizers cover linear and quadratic forms, not {other:?}"
            )))
        }
    }
    // three-term variance decomposition around the true regression values
    let mut noise = 0.0;
    let mut gap = 0.0;
    let mut cross = 0.0;
    for k in 0..xs.len() {
        let e = eta0(xs[k]);
        let u = ys[k] - e;
        let v = e - fitted[k];
        noise += u * u;
        gap += v * v;
        cross += u * v;
    }
    let sigma2 = (noise + gap + 2.0 * cross) / nn;
    Ok(EmpiricalFit { coefficients, sigma2 })
}

/// Stationary truth moments for the autoregressive comparison: the truth
/// y_t = rho0 y_{t-1} + beta0 (x_t + z_t) + noise regressed on either
/// covariate alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1TheoryInputs {
    pub rho0: f64,
    pub beta0: f64,
    pub sigma0_sq: f64,
    pub sigma_x_sq: f64,
    pub sigma_z_sq: f64,
}

impl Ar1TheoryInputs {
    pub fn validate(&self) -> Result<(), RateError> {
        if self.rho0.abs() >= 1.0 {
            return Err(RateError::NonStationaryTruth(self.rho0.abs()));
        }
        check_sigma2(self.sigma0_sq)?;
        if self.sigma_x_sq < 0.0 {
            return Err(RateError::NonPositiveVariance(self.sigma_x_sq));
        }
        if self.sigma_z_sq < 0.0 {
            return Err(RateError::NonPositiveVariance(self.sigma_z_sq));
        }
        Ok(())
    }

    pub fn sigma_xz_sq(&self) -> f64 {
        self.sigma_x_sq + self.sigma_z_sq
    }

    /// Stationary second moment of the response path,
    /// (sigma0^2 + beta0^2 sigma_{x+z}^2) / (1 - rho0^2).
    pub fn stationary_second_moment(&self) -> f64 {
        (self.sigma0_sq + self.beta0 * self.beta0 * self.sigma_xz_sq())
            / (1.0 - self.rho0 * self.rho0)
    }

    fn own_other(&self, which: CovariateAxis) -> (f64, f64) {
        match which {
            CovariateAxis::X => (self.sigma_x_sq, self.sigma_z_sq),
            CovariateAxis::Z => (self.sigma_z_sq, self.sigma_x_sq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Theta {
    pub rho: f64,
    pub beta: f64,
    pub sigma2: f64,
}

/// Divergence rate of the single-covariate AR(1) model against the
/// two-covariate truth, evaluated term by term as displayed.
pub fn h_ar1(
    th: &Ar1Theta,
    inputs: &Ar1TheoryInputs,
    which: CovariateAxis,
) -> Result<f64, RateError> {
    inputs.validate()?;
    check_sigma2(th.sigma2)?;
    let (_, other) = inputs.own_other(which);
    let v = inputs.stationary_second_moment();
    let sxz = inputs.sigma_xz_sq();
    let (s2, s02) = (th.sigma2, inputs.sigma0_sq);
    let (rho, beta) = (th.rho, th.beta);
    let (rho0, beta0) = (inputs.rho0, inputs.beta0);
    Ok(0.5 * (s2 / s02).ln()
        + (0.5 / s2 - 0.5 / s02) * v
        + (rho * rho / (2.0 * s2) - rho0 * rho0 / (2.0 * s02)) * v
        + beta * beta * sxz / (2.0 * s2)
        - beta0 * beta0 * sxz / (2.0 * s02)
        - (rho / s2 - rho0 / s02) * rho0 * v
        - (beta / s2 - beta0 / s02) * sxz * beta0
        + other * beta * (2.0 * beta0 - beta) / (2.0 * s2))
}

/// Limiting second moment of the inverse-prior concentration points,
/// own_var * beta0^2 (1 - rho_tilde)^2 / (beta_tilde^2 (1 - rho0^2)).
pub fn ar1_star_variance(
    inputs: &Ar1TheoryInputs,
    tilde: &Ar1Theta,
    which: CovariateAxis,
) -> Result<f64, RateError> {
    inputs.validate()?;
    if tilde.beta == 0.0 {
        return Err(RateError::NonPositiveVariance(0.0));
    }
    let (own, _) = inputs.own_other(which);
    let num = own * inputs.beta0 * inputs.beta0 * (1.0 - tilde.rho) * (1.0 - tilde.rho);
    Ok(num / (tilde.beta * tilde.beta * (1.0 - inputs.rho0 * inputs.rho0)))
}

/// Inverse-setup divergence rate: the forward rate's first seven terms
/// with the final term replaced by the pair
/// other * beta (beta0 - beta) / sigma^2
///   + beta^2/(2 sigma^2) (sigma_{x+z}^2 + sigma_star^2
///                         - 2 beta0 own / beta_tilde),
/// where sigma_star^2 comes from [`ar1_star_variance`] at the forward
/// rate's minimizer.
pub fn h_ar1_star(
    th: &Ar1Theta,
    inputs: &Ar1TheoryInputs,
    tilde: &Ar1Theta,
    which: CovariateAxis,
) -> Result<f64, RateError> {
    inputs.validate()?;
    check_sigma2(th.sigma2)?;
    let (own, other) = inputs.own_other(which);
    let v = inputs.stationary_second_moment();
    let sxz = inputs.sigma_xz_sq();
    let (s2, s02) = (th.sigma2, inputs.sigma0_sq);
    let (rho, beta) = (th.rho, th.beta);
    let (rho0, beta0) = (inputs.rho0, inputs.beta0);
    let star = ar1_star_variance(inputs, tilde, which)?;
    Ok(0.5 * (s2 / s02).ln()
        + (0.5 / s2 - 0.5 / s02) * v
        + (rho * rho / (2.0 * s2) - rho0 * rho0 / (2.0 * s02)) * v
        + beta * beta * sxz / (2.0 * s2)
        - beta0 * beta0 * sxz / (2.0 * s02)
        - (rho / s2 - rho0 / s02) * rho0 * v
        - (beta / s2 - beta0 / s02) * sxz * beta0
        + other * beta * (beta0 - beta) / s2
        + beta * beta / (2.0 * s2) * (sxz + star - 2.0 * beta0 * own / tilde.beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub theta: Vec<f64>,
    pub value: f64,
}

const NM_DIAMETER_TOL: f64 = 1e-9;
const NM_RESTART_TOL: f64 = 1e-6;
const NM_MAX_ITER: usize = 60_000;
const NM_RESTARTS: usize = 5;

/// Derivative-free minimization for the convex rate functions.
///
/// The coordinate at `variance_index` is optimized on the log scale so the
/// simplex can roam without leaving the positive half-line. Convergence
/// means the simplex diameter fell below 1e-9; five deterministic
/// restarts from perturbed starting points must land within 1e-6 of each
/// other or the whole call fails.
pub fn minimize_convex_h<F>(
    h: F,
    init: &[f64],
    variance_index: Option<usize>,
) -> Result<MinimizeResult, RateError>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = init.len();
    let to_internal = |nat: &[f64]| -> Vec<f64> {
        let mut v = nat.to_vec();
        if let Some(k) = variance_index {
            v[k] = v[k].ln();
        }
        v
    };
    let to_natural = |int: &[f64]| -> Vec<f64> {
        let mut v = int.to_vec();
        if let Some(k) = variance_index {
            v[k] = v[k].exp();
        }
        v
    };
    let objective = |int: &[f64]| -> f64 {
        let v = h(&to_natural(int));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let base = to_internal(init);
    let mut rng = substream(0x6d6e, &["nelder-mead-restarts"]);
    let mut results: Vec<MinimizeResult> = Vec::with_capacity(NM_RESTARTS);
    for restart in 0..NM_RESTARTS {
        let mut start = base.clone();
        if restart > 0 {
            for s in &mut start {
                *s += rng.random::<f64>() - 0.5;
            }
        }
        let point = nelder_mead(&objective, &start, dim)?;
        results.push(MinimizeResult {
            value: objective(&point),
            theta: point,
        });
    }
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.partial_cmp(&b.1.value).expect("finite minima"))
        .map(|(i, _)| i)
        .expect("nonempty restarts");
    for (i, r) in results.iter().enumerate() {
        let spread = r
            .theta
            .iter()
            .zip(&results[best].theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if spread > NM_RESTART_TOL {
            return Err(RateError::NoConvergence(format!(
                "restart {i} disagrees with the best point by {spread:.3e}"
            )));
        }
    }
    let theta = to_natural(&results[best].theta);
    Ok(MinimizeResult { theta, value: results[best].value })
}

fn nelder_mead<F>(objective: &F, start: &[f64], dim: usize) -> Result<Vec<f64>, RateError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for k in 0..dim {
        let mut v = start.to_vec();
        v[k] += 0.5;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| objective(v)).collect();

    for _ in 0..NM_MAX_ITER {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN objective"));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let diameter = simplex
            .iter()
            .flat_map(|a| {
                simplex.iter().map(move |b| {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (p - q).abs())
                        .fold(0.0f64, f64::max)
                })
            })
            .fold(0.0f64, f64::max);
        if diameter < NM_DIAMETER_TOL {
            return Ok(simplex[best].clone());
        }

        let mut centroid = vec![0.0; dim];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for k in 0..dim {
                centroid[k] += v[k] / dim as f64;
            }
        }
        let blend = |t: f64| -> Vec<f64> {
            (0..dim)
                .map(|k| centroid[k] + t * (simplex[worst][k] - centroid[k]))
                .collect()
        };
        let reflected = blend(-1.0);
        let fr = objective(&reflected);
        if fr < values[best] {
            let expanded = blend(-2.0);
            let fe = objective(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] { blend(-0.5) } else { blend(0.5) };
            let fc = objective(&contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                let anchor = simplex[best].clone();
                for (i, v) in simplex.iter_mut().enumerate() {
                    if i == best {
                        continue;
                    }
                    for k in 0..dim {
                        v[k] = anchor[k] + 0.5 * (v[k] - anchor[k]);
                    }
                    values[i] = objective(v);
                }
            }
        }
    }
    Err(RateError::NoConvergence(format!(
        "simplex diameter stayed above {NM_DIAMETER_TOL:.0e} after {NM_MAX_ITER} iterations"
    )))
}

/// Models whose divergence-rate minima compose into PBF limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateModel {
    Truth,
    Linear,
    Quadratic,
}

/// Minimum divergence rate of one model class against the truth.
pub fn rate_minimum<F>(
    model: RateModel,
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<f64, RateError>
where
    F: Fn(f64) -> f64,
{
    match model {
        RateModel::Truth => Ok(0.0),
        RateModel::Linear => {
            let th = minimizer_linear(&eta0, sigma0_sq, space)?;
            h_linear(&th, &eta0, sigma0_sq, space)
        }
        RateModel::Quadratic => {
            let th = minimizer_quadratic(&eta0, sigma0_sq, space)?;
            h_quadratic(&th, &eta0, sigma0_sq, space)
        }
    }
}

/// Predicted limit of (1/n) log PBF(a vs b): the rate-minimum difference
/// -[h_a(theta_a) - h_b(theta_b)]. Negative when a diverges faster.
pub fn theoretical_pbf_limit<F>(
    a: RateModel,
    b: RateModel,
    eta0: F,
    sigma0_sq: f64,
    space: &CovariateSpace,
) -> Result<f64, RateError>
where
    F: Fn(f64) -> f64,
{
    let ha = rate_minimum(a, &eta0, sigma0_sq, space)?;
    let hb = rate_minimum(b, &eta0, sigma0_sq, space)?;
    Ok(-(ha - hb))
}

/// Numeric minimizer of the autoregressive forward rate.
pub fn ar1_rate_minimizer(
    inputs: &Ar1TheoryInputs,
    which: CovariateAxis,
) -> Result<Ar1Theta, RateError> {
    inputs.validate()?;
    let init = [inputs.rho0, inputs.beta0, inputs.sigma0_sq];
    let res = minimize_convex_h(
        |t| {
            let th = Ar1Theta { rho: t[0], beta: t[1], sigma2: t[2] };
            h_ar1(&th, inputs, which).unwrap_or(f64::INFINITY)
        },
        &init,
        Some(2),
    )?;
    Ok(Ar1Theta { rho: res.theta[0], beta: res.theta[1], sigma2: res.theta[2] })
}

/// Predicted limit of (1/n) log PBF for the x-model against the z-model,
/// forward (plain rates) or inverse (starred rates at the forward
/// minimizers).
pub fn ar1_pbf_limit(inputs: &Ar1TheoryInputs, inverse: bool) -> Result<f64, RateError> {
    let t1 = ar1_rate_minimizer(inputs, CovariateAxis::X)?;
    let t2 = ar1_rate_minimizer(inputs, CovariateAxis::Z)?;
    let (h1, h2) = if inverse {
        (
            h_ar1_star(&t1, inputs, &t1, CovariateAxis::X)?,
            h_ar1_star(&t2, inputs, &t2, CovariateAxis::Z)?,
        )
    } else {
        (
            h_ar1(&t1, inputs, CovariateAxis::X)?,
            h_ar1(&t2, inputs, CovariateAxis::Z)?,
        )
    };
    Ok(-(h1 - h2))
}
