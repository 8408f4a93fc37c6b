//! Uniform covariate priors for inverse cross-validation.
//!
//! Each prior is the uniform distribution on the set of covariate values
//! whose model mean lands in a band around the row's replicate average,
//! ybar_i - c1 s_i / sqrt(m) to ybar_i + c2 s_i / sqrt(m). The band maps
//! into covariate space through the model's inverse mean function, which
//! is where the per-link formulas below come from. As m grows the band
//! tightens at rate 1/sqrt(m) and the prior concentrates at a point.

use crate::data::{ReplicatedDataset, ThetaVector};
use crate::likelihood::{probit_inverse_mean_band, LikelihoodError};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("SlopeZero: the inverse map needs a nonzero slope")]
    SlopeZero,
    #[error("NonPositiveBandEdge: lower band edge {0} with an error clamp policy")]
    NonPositiveBandEdge(f64),
    #[error("MissingFixedOther: {0} priors need the observed companion value")]
    MissingFixedOther(&'static str),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("Unsupported: {0}")]
    Unsupported(String),
}

impl From<LikelihoodError> for PriorError {
    fn from(e: LikelihoodError) -> Self {
        match e {
            LikelihoodError::NonPositiveLowerBand(l) => PriorError::NonPositiveBandEdge(l),
            other => PriorError::InvalidSpec(other.to_string()),
        }
    }
}

/// Mean-band inversion family shared by the scalar-link kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkBand {
    PoissonLog,
    GeomLogit,
    GeomProbit,
    GaussianIdentity,
}

impl LinkBand {
    /// The log/probit kinds invert through a logarithm or a geometric mean
    /// map; those need a positive lower band edge.
    fn needs_positive_edge(self) -> bool {
        !matches!(self, LinkBand::GaussianIdentity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateAxis {
    X,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    Link(LinkBand),
    /// Mean alpha + beta1 x + beta2 x^2; inverted in the linear coefficient
    /// with the true covariate supplying the quadratic term.
    Quadratic,
    /// Mean rho ybar_{t-1} + beta x; the band statistic depends on rho.
    Ar1,
    /// Two-covariate model where one covariate is held out and the other
    /// enters the effective intercept at its observed value.
    TwoCovariate { which: CovariateAxis, base: LinkBand },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampPolicy {
    /// Surface a nonpositive band edge as an error.
    Error,
    /// Raise the lower edge to 1e-6 (and the upper edge to at least the
    /// lower). Meant for tiny-sample count data where an all-zero row
    /// would otherwise kill the run; the result records that it happened.
    ClampToEpsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversePriorSpec {
    pub kind: PriorKind,
    pub c1: f64,
    pub c2: f64,
    pub clamp: ClampPolicy,
}

impl InversePriorSpec {
    pub fn new(kind: PriorKind) -> Self {
        Self { kind, c1: 1.0, c2: 100.0, clamp: ClampPolicy::Error }
    }

    pub fn symmetric(kind: PriorKind, c: f64) -> Self {
        Self { kind, c1: c, c2: c, clamp: ClampPolicy::Error }
    }

    pub fn with_constants(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    pub fn with_clamp(mut self, clamp: ClampPolicy) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        if !(self.c1 >= 0.0) {
            return Err(PriorError::InvalidSpec(format!(
                "c1 must be nonnegative, got {}",
                self.c1
            )));
        }
        if !(self.c2 >= self.c1) {
            return Err(PriorError::InvalidSpec(format!(
                "c2 {} must be at least c1 {}",
                self.c2, self.c1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorInterval {
    pub a: f64,
    pub b: f64,
    /// Set when ClampToEpsilon actually fired.
    pub clamped: bool,
}

impl PriorInterval {
    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_point(&self) -> bool {
        self.a == self.b
    }
}

fn nonzero_slope(v: Option<f64>) -> Result<f64, PriorError> {
    match v {
        Some(b) if b != 0.0 && b.is_finite() => Ok(b),
        _ => Err(PriorError::SlopeZero),
    }
}

fn sorted(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Clamp a mean band for the kinds that need a positive lower edge.
fn apply_clamp(l: f64, u: f64, policy: ClampPolicy) -> Result<(f64, f64, bool), PriorError> {
    if l > 0.0 {
        return Ok((l, u, false));
    }
    match policy {
        ClampPolicy::Error => Err(PriorError::NonPositiveBandEdge(l)),
        ClampPolicy::ClampToEpsilon => {
            let l = l.max(1e-6);
            let u = u.max(l);
            Ok((l, u, true))
        }
    }
}

/// Map a mean band [l, u] into covariate space for one link kind, around
/// the effective intercept.
fn invert_band(
    band: LinkBand,
    l: f64,
    u: f64,
    alpha: f64,
    beta: f64,
    policy: ClampPolicy,
) -> Result<PriorInterval, PriorError> {
    let (l, u, clamped) = if band.needs_positive_edge() {
        apply_clamp(l, u, policy)?
    } else {
        (l, u, false)
    };
    let (e1, e2) = match band {
        LinkBand::PoissonLog => ((l.ln() - alpha) / beta, (u.ln() - alpha) / beta),
        LinkBand::GeomLogit => (-(l.ln() + alpha) / beta, -(u.ln() + alpha) / beta),
        LinkBand::GeomProbit => {
            let n = Normal::standard();
            if u > l {
                let (p_low, p_high) = probit_inverse_mean_band(l, u)?;
                (
                    (n.inverse_cdf(p_low) - alpha) / beta,
                    (n.inverse_cdf(p_high) - alpha) / beta,
                )
            } else {
                // zero-width band: single mean value, single success
                // probability, single covariate point
                let e = (n.inverse_cdf(1.0 / (l + 1.0)) - alpha) / beta;
                (e, e)
            }
        }
        LinkBand::GaussianIdentity => ((l - alpha) / beta, (u - alpha) / beta),
    };
    let (a, b) = sorted(e1, e2);
    Ok(PriorInterval { a, b, clamped })
}

/// The covariate interval supporting the uniform prior.
///
/// `y_bar` and `s` summarize the row's replicates (for the autoregressive
/// kind, `s` must be the rho-dependent band statistic from
/// [`ar1_row_summary`]). `fixed_other` supplies the true covariate for the
/// quadratic kind, the previous row's replicate mean for the
/// autoregressive kind, and the observed companion covariate for the
/// two-covariate kinds.
pub fn prior_interval(
    spec: &InversePriorSpec,
    theta: &ThetaVector,
    y_bar: f64,
    s: f64,
    m: usize,
    fixed_other: Option<f64>,
) -> Result<PriorInterval, PriorError> {
    spec.validate()?;
    let rm = (m as f64).sqrt();
    let l = y_bar - spec.c1 * s / rm;
    let u = y_bar + spec.c2 * s / rm;
    match spec.kind {
        PriorKind::Link(band) => {
            let beta = nonzero_slope(theta.slope(0))?;
            invert_band(band, l, u, theta.intercept(), beta, spec.clamp)
        }
        PriorKind::TwoCovariate { which, base } => {
            let other =
                fixed_other.ok_or(PriorError::MissingFixedOther("two-covariate"))?;
            let (beta, gamma) = match which {
                CovariateAxis::X => (theta.slope(0), theta.slope(1)),
                CovariateAxis::Z => (theta.slope(1), theta.slope(0)),
            };
            let beta = nonzero_slope(beta)?;
            let alpha_eff = theta.intercept() + gamma.unwrap_or(0.0) * other;
            invert_band(base, l, u, alpha_eff, beta, spec.clamp)
        }
        PriorKind::Quadratic => {
            let x_true = fixed_other.ok_or(PriorError::MissingFixedOther("quadratic"))?;
            let beta1 = nonzero_slope(theta.slope(0))?;
            let beta2 = theta.slope(1).unwrap_or(0.0);
            let shift = theta.intercept() + beta2 * x_true * x_true;
            let (a, b) = sorted((l - shift) / beta1, (u - shift) / beta1);
            Ok(PriorInterval { a, b, clamped: false })
        }
        PriorKind::Ar1 => {
            let prev_bar = fixed_other.ok_or(PriorError::MissingFixedOther("AR(1)"))?;
            let beta = nonzero_slope(theta.slope(0))?;
            let rho = theta.rho().unwrap_or(0.0);
            let center = y_bar - rho * prev_bar;
            let (a, b) = sorted((center - spec.c1 * s / rm) / beta, (center + spec.c2 * s / rm) / beta);
            Ok(PriorInterval { a, b, clamped: false })
        }
    }
}

/// One uniform draw from the interval; a point interval returns its point.
pub fn sample_interval(interval: &PriorInterval, rng: &mut ChaCha12Rng) -> f64 {
    if interval.is_point() {
        interval.a
    } else {
        interval.a + interval.width() * rng.random::<f64>()
    }
}

/// Convenience composition of [`prior_interval`] and [`sample_interval`].
pub fn sample_prior(
    spec: &InversePriorSpec,
    theta: &ThetaVector,
    y_bar: f64,
    s: f64,
    m: usize,
    rng: &mut ChaCha12Rng,
    fixed_other: Option<f64>,
) -> Result<f64, PriorError> {
    let interval = prior_interval(spec, theta, y_bar, s, m, fixed_other)?;
    Ok(sample_interval(&interval, rng))
}

/// The point the prior interval collapses to as m grows, given the pseudo
/// true parameter and the row's limiting mean response `mean_value`.
/// The autoregressive kind needs the whole covariate history instead; see
/// [`ar1_limit_points`].
pub fn limit_point(
    spec: &InversePriorSpec,
    theta: &ThetaVector,
    mean_value: f64,
    fixed_other: Option<f64>,
) -> Result<f64, PriorError> {
    match spec.kind {
        PriorKind::Link(band) => {
            let beta = nonzero_slope(theta.slope(0))?;
            inverse_mean(band, mean_value, theta.intercept(), beta)
        }
        PriorKind::TwoCovariate { which, base } => {
            let other =
                fixed_other.ok_or(PriorError::MissingFixedOther("two-covariate"))?;
            let (beta, gamma) = match which {
                CovariateAxis::X => (theta.slope(0), theta.slope(1)),
                CovariateAxis::Z => (theta.slope(1), theta.slope(0)),
            };
            let beta = nonzero_slope(beta)?;
            inverse_mean(base, mean_value, theta.intercept() + gamma.unwrap_or(0.0) * other, beta)
        }
        PriorKind::Quadratic => {
            let x_true = fixed_other.ok_or(PriorError::MissingFixedOther("quadratic"))?;
            let beta1 = nonzero_slope(theta.slope(0))?;
            let beta2 = theta.slope(1).unwrap_or(0.0);
            Ok((mean_value - theta.intercept() - beta2 * x_true * x_true) / beta1)
        }
        PriorKind::Ar1 => Err(PriorError::Unsupported(
            "the autoregressive limit is a sequence; use ar1_limit_points".into(),
        )),
    }
}

fn inverse_mean(band: LinkBand, mean: f64, alpha: f64, beta: f64) -> Result<f64, PriorError> {
    match band {
        LinkBand::PoissonLog => {
            if mean <= 0.0 {
                return Err(PriorError::NonPositiveBandEdge(mean));
            }
            Ok((mean.ln() - alpha) / beta)
        }
        LinkBand::GeomLogit => {
            if mean <= 0.0 {
                return Err(PriorError::NonPositiveBandEdge(mean));
            }
            Ok(-(mean.ln() + alpha) / beta)
        }
        LinkBand::GeomProbit => {
            if mean <= 0.0 {
                return Err(PriorError::NonPositiveBandEdge(mean));
            }
            let n = Normal::standard();
            Ok((n.inverse_cdf(1.0 / (mean + 1.0)) - alpha) / beta)
        }
        LinkBand::GaussianIdentity => Ok((mean - alpha) / beta),
    }
}

/// Replicate means of rows t and t-1 plus the rho-dependent band spread
/// s_t(rho) = sqrt( (1/m) sum_j [ (y_tj - ybar_t) - rho (y_{t-1,j} -
/// ybar_{t-1}) ]^2 ), divisor m. Row -1 is the zero initial condition.
pub fn ar1_row_summary(
    ds: &ReplicatedDataset,
    t: usize,
    rho: f64,
) -> Result<(f64, f64, f64), PriorError> {
    if t >= ds.n() {
        return Err(PriorError::InvalidSpec(format!(
            "row {} of {}",
            t,
            ds.n()
        )));
    }
    let m = ds.m() as f64;
    let mean_row = |r: usize| (0..ds.m()).map(|j| ds.response(r, j)).sum::<f64>() / m;
    let y_bar = mean_row(t);
    let prev_bar = if t == 0 { 0.0 } else { mean_row(t - 1) };
    let mut ss = 0.0;
    for j in 0..ds.m() {
        let prev = if t == 0 { 0.0 } else { ds.response(t - 1, j) };
        let d = (ds.response(t, j) - y_bar) - rho * (prev - prev_bar);
        ss += d * d;
    }
    Ok((y_bar, prev_bar, (ss / m).sqrt()))
}

/// Concentration points of the autoregressive inverse prior along the
/// covariate history:
/// x*_t = (beta0 / beta_tilde) [ sum_{k<=t} rho0^{t-k} x_k
///                               - rho_tilde sum_{k<t} rho0^{t-k} x_k ].
pub fn ar1_limit_points(
    xs: &[f64],
    rho0: f64,
    beta0: f64,
    rho_tilde: f64,
    beta_tilde: f64,
) -> Result<Vec<f64>, PriorError> {
    if beta_tilde == 0.0 {
        return Err(PriorError::SlopeZero);
    }
    let n = xs.len();
    let mut out = Vec::with_capacity(n);
    // geometric-weight partial sums, updated recursively:
    // g_t = sum_{k=1..t} rho0^{t-k} x_k = rho0 g_{t-1} + x_t
    let mut g = 0.0;
    for t in 0..n {
        let g_prev = g;
        g = rho0 * g + xs[t];
        // the second sum stops at k = t-1 but keeps the same weights
        let trailing = rho0 * g_prev;
        out.push(beta0 * (g - rho_tilde * trailing) / beta_tilde);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Slot;
    use crate::sampler::substream;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn linear_theta(alpha: f64, beta: f64) -> ThetaVector {
        ThetaVector::new(vec![alpha, beta], vec![Slot::Intercept, Slot::Slope(0)]).unwrap()
    }

    #[test]
    fn zero_width_band_is_a_point() {
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog));
        let th = linear_theta(0.0, 1.0);
        let iv = prior_interval(&spec, &th, std::f64::consts::E, 0.0, 100, None).unwrap();
        assert_abs_diff_eq!(iv.a, 1.0, epsilon = 1e-14);
        assert!(iv.is_point());
    }

    #[test]
    fn poisson_log_band_hand_values() {
        // ybar 10, s 2, m 100, c1 1, c2 100: band [9.8, 30] in mean space.
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog));
        let th = linear_theta(0.0, 1.0);
        let iv = prior_interval(&spec, &th, 10.0, 2.0, 100, None).unwrap();
        assert_abs_diff_eq!(iv.a, 9.8f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(iv.b, 30.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(iv.a, 2.2824, epsilon = 1e-4);
        assert_abs_diff_eq!(iv.b, 3.4012, epsilon = 1e-4);
    }

    #[test]
    fn probit_band_hand_values() {
        // Symmetric c = 1 with s/sqrt(m) = 1 around ybar 2: mean band [1, 3],
        // success-probability band [0.25, 0.5], quantiles sorted.
        let spec = InversePriorSpec::symmetric(PriorKind::Link(LinkBand::GeomProbit), 1.0);
        let th = linear_theta(0.0, 1.0);
        let iv = prior_interval(&spec, &th, 2.0, 10.0, 100, None).unwrap();
        assert_abs_diff_eq!(iv.a, -0.6744897501960817, epsilon = 1e-9);
        assert_abs_diff_eq!(iv.b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn band_edges_sort_under_negative_slope() {
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::GaussianIdentity));
        for beta in [2.0, -2.0, 0.5, -0.5] {
            let th = linear_theta(0.3, beta);
            let iv = prior_interval(&spec, &th, 1.0, 3.0, 25, None).unwrap();
            assert!(iv.a <= iv.b, "beta {beta}");
        }
    }

    #[test]
    fn slope_zero_and_band_edge_errors() {
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog));
        assert!(matches!(
            prior_interval(&spec, &linear_theta(0.0, 0.0), 10.0, 2.0, 100, None),
            Err(PriorError::SlopeZero)
        ));
        // all-zero count row: ybar 0, s 0 -> band edge 0
        assert!(matches!(
            prior_interval(&spec, &linear_theta(0.0, 1.0), 0.0, 0.0, 100, None),
            Err(PriorError::NonPositiveBandEdge(_))
        ));
        let clamped_spec = spec.with_clamp(ClampPolicy::ClampToEpsilon);
        let iv =
            prior_interval(&clamped_spec, &linear_theta(0.0, 1.0), 0.0, 0.0, 100, None).unwrap();
        assert!(iv.clamped);
        assert_abs_diff_eq!(iv.a, (1e-6f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn constants_validation() {
        let bad = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog))
            .with_constants(2.0, 1.0);
        assert!(matches!(bad.validate(), Err(PriorError::InvalidSpec(_))));
        let bad = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog))
            .with_constants(-1.0, 1.0);
        assert!(matches!(bad.validate(), Err(PriorError::InvalidSpec(_))));
    }

    #[test]
    fn identity_width_law_is_exact() {
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::GaussianIdentity));
        let th = linear_theta(0.4, -1.7);
        let (s, c1, c2) = (2.3, 1.0, 100.0);
        for m in [100usize, 400, 1600] {
            let iv = prior_interval(&spec, &th, 5.0, s, m, None).unwrap();
            let want = (c1 + c2) * s / ((m as f64).sqrt() * 1.7);
            assert_abs_diff_eq!(iv.width(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn width_shrinks_like_root_m_once_the_band_is_narrow() {
        // Nonlinear inversions only halve the width asymptotically, when
        // the mean band is narrow enough for the local linearization; the
        // default c2 = 100 band is far from that at small m, so this uses
        // symmetric unit constants and checks monotonicity separately.
        let th = linear_theta(0.1, 0.8);
        for kind in [
            PriorKind::Link(LinkBand::PoissonLog),
            PriorKind::Link(LinkBand::GeomLogit),
            PriorKind::Link(LinkBand::GeomProbit),
        ] {
            let spec = InversePriorSpec::symmetric(kind, 1.0);
            let widths: Vec<f64> = [100usize, 400, 10_000, 40_000]
                .iter()
                .map(|&m| {
                    prior_interval(&spec, &th, 6.0, 1.5, m, None)
                        .unwrap()
                        .width()
                })
                .collect();
            for w in widths.windows(2) {
                assert!(w[0] > w[1], "{kind:?}: widths not shrinking {widths:?}");
            }
            let ratio = widths[2] / widths[3];
            assert!((ratio - 2.0).abs() < 0.01, "{kind:?}: ratio {ratio}");
        }
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let iv = PriorInterval { a: 0.0, b: 1.0, clamped: false };
        let mut rng = substream(42, &["prior"]);
        let n = 20_000;
        let mean: f64 =
            (0..n).map(|_| sample_interval(&iv, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 / (12.0 * n as f64).sqrt());

        let point = PriorInterval { a: 2.5, b: 2.5, clamped: false };
        assert_eq!(sample_interval(&point, &mut rng), 2.5);

        let a: Vec<f64> = {
            let mut r = substream(9, &["p"]);
            (0..5).map(|_| sample_interval(&iv, &mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = substream(9, &["p"]);
            (0..5).map(|_| sample_interval(&iv, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn limit_points_match_displayed_forms() {
        // Correct specification: the limit recovers the true covariate.
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::GaussianIdentity));
        let th = linear_theta(0.7, 1.9);
        let xi = 0.4;
        let mean = 0.7 + 1.9 * xi;
        assert_abs_diff_eq!(limit_point(&spec, &th, mean, None).unwrap(), xi, epsilon = 1e-12);

        // Misspecified line under a curved truth: x* = (eta0(x) - alpha)/beta.
        let th = linear_theta(1.0 / 3.0, -0.9);
        let x_star = limit_point(&spec, &th, 0.25, None).unwrap();
        assert_abs_diff_eq!(x_star, (0.25 - 1.0 / 3.0) / (-0.9), epsilon = 1e-12);

        // Quadratic kind with beta2 = 0 reduces to the linear formula.
        let qspec = InversePriorSpec::new(PriorKind::Quadratic);
        let qth = ThetaVector::new(
            vec![1.0 / 3.0, -0.9, 0.0],
            vec![Slot::Intercept, Slot::Slope(0), Slot::Slope(1)],
        )
        .unwrap();
        let q_star = limit_point(&qspec, &qth, 0.25, Some(0.5)).unwrap();
        assert_abs_diff_eq!(q_star, x_star, epsilon = 1e-12);
    }

    #[test]
    fn two_covariate_prior_shifts_by_observed_companion() {
        let spec = InversePriorSpec::new(PriorKind::TwoCovariate {
            which: CovariateAxis::X,
            base: LinkBand::PoissonLog,
        });
        let th = ThetaVector::new(
            vec![0.2, 1.0, 0.5],
            vec![Slot::Intercept, Slot::Slope(0), Slot::Slope(1)],
        )
        .unwrap();
        let z_obs = 2.0;
        let iv = prior_interval(&spec, &th, 10.0, 2.0, 100, Some(z_obs)).unwrap();
        // effective intercept 0.2 + 0.5*2 = 1.2 against the [9.8, 30] band
        assert_abs_diff_eq!(iv.a, 9.8f64.ln() - 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(iv.b, 30.0f64.ln() - 1.2, epsilon = 1e-12);
        assert!(matches!(
            prior_interval(&spec, &th, 10.0, 2.0, 100, None),
            Err(PriorError::MissingFixedOther(_))
        ));

        // Z variant swaps which slope divides and which one shifts.
        let zspec = InversePriorSpec::new(PriorKind::TwoCovariate {
            which: CovariateAxis::Z,
            base: LinkBand::PoissonLog,
        });
        let ivz = prior_interval(&zspec, &th, 10.0, 2.0, 100, Some(1.0)).unwrap();
        assert_abs_diff_eq!(ivz.a, (9.8f64.ln() - 1.2) / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ar1_row_summary_hand_values() {
        let ds = ReplicatedDataset::new(
            DMatrix::from_row_slice(2, 1, &[0.5, -0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 6.0]),
            vec!["x".into()],
        )
        .unwrap();
        // Row 1 with rho = 1: deviations (2-4) - (1-2) = -1 and (6-4) - (3-2)
        // = 1, so s = sqrt((1+1)/2) = 1. Divisor is m, not m-1.
        let (y_bar, prev_bar, s) = ar1_row_summary(&ds, 1, 1.0).unwrap();
        assert_eq!((y_bar, prev_bar), (4.0, 2.0));
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        // Row 0 conditions on the zero initial state.
        let (y0, p0, s0) = ar1_row_summary(&ds, 0, 0.9).unwrap();
        assert_eq!((y0, p0), (2.0, 0.0));
        assert_abs_diff_eq!(s0, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ar1_interval_centers_on_residual_mean() {
        let spec = InversePriorSpec::symmetric(PriorKind::Ar1, 1.0);
        let th = ThetaVector::new(
            vec![0.5, 2.0],
            vec![Slot::Rho, Slot::Slope(0)],
        )
        .unwrap();
        let iv = prior_interval(&spec, &th, 4.0, 1.0, 4, Some(2.0)).unwrap();
        // center (4 - 0.5*2)/2 = 1.5, half width 1/(2*2) = 0.25
        assert_abs_diff_eq!(iv.a, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(iv.b, 1.75, epsilon = 1e-12);
    }

    #[test]
    fn ar1_limit_points_small_cases() {
        let xs = [1.0, 2.0, 3.0];
        let (rho0, beta0, rho_t, beta_t) = (0.5, 2.0, 0.3, 4.0);
        let pts = ar1_limit_points(&xs, rho0, beta0, rho_t, beta_t).unwrap();
        // t=0: beta0 x_0 / beta_t; no trailing sum.
        assert_abs_diff_eq!(pts[0], 2.0 * 1.0 / 4.0, epsilon = 1e-14);
        // t=1: beta0 [(rho0 x0 + x1) - rho_t * (rho0 x0)] / beta_t; the
        // trailing sum keeps the same rho0 exponents as the leading one.
        assert_abs_diff_eq!(
            pts[1],
            2.0 * ((0.5 + 2.0) - 0.3 * 0.5) / 4.0,
            epsilon = 1e-14
        );
        // t=2: leading sum rho0^2 x0 + rho0 x1 + x2, trailing rho0^2 x0 +
        // rho0 x1 evaluated one step earlier then scaled by rho0.
        let lead = 0.25 * 1.0 + 0.5 * 2.0 + 3.0;
        let trail = 0.5 * (0.5 * 1.0 + 2.0);
        assert_abs_diff_eq!(pts[2], 2.0 * (lead - 0.3 * trail) / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn prior_concentrates_at_limit_point_under_replication() {
        // Poisson truth with a misspecified line: draws from the prior at
        // theta-tilde pile up near the limit point as m grows.
        let m = 10_000usize;
        let (alpha_t, beta_t) = (0.3, 1.4);
        let th = linear_theta(alpha_t, beta_t);
        let true_mean = 7.0f64;
        let mut rng = substream(5, &["conc"]);
        // simulate a replicate row at the true mean
        let mut y_sum = 0.0;
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            // inverse-CDF Poisson sampling, adequate for moderate means
            let u: f64 = rng.random();
            let mut p = (-true_mean).exp();
            let mut cdf = p;
            let mut k = 0.0;
            while cdf < u && k < 1e6 {
                k += 1.0;
                p *= true_mean / k;
                cdf += p;
            }
            y_sum += k;
            ys.push(k);
        }
        let y_bar = y_sum / m as f64;
        let s = (ys.iter().map(|y| (y - y_bar) * (y - y_bar)).sum::<f64>()
            / (m as f64 - 1.0))
            .sqrt();
        let spec = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog));
        let iv = prior_interval(&spec, &th, y_bar, s, m, None).unwrap();
        let x_star = limit_point(&spec, &th, true_mean, None).unwrap();
        let mean_draw: f64 = (0..5000)
            .map(|_| sample_interval(&iv, &mut rng))
            .sum::<f64>()
            / 5000.0;
        assert!(
            (mean_draw - x_star).abs() < iv.width(),
            "mean {mean_draw} vs x* {x_star} width {}",
            iv.width()
        );
    }
}
