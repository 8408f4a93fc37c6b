//! Posterior sampling machinery: additive-transformation MCMC, importance
//! reweighting of one full-data chain onto leave-one-out fold targets, and
//! weighted resampling without replacement.
//!
//! Every random decision flows from a named substream so that runs are
//! bit-identical for a given root seed no matter how folds are scheduled
//! across threads.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("NonFiniteInit: log target is {0} at the initial point")]
    NonFiniteInit(f64),
    #[error("AllProposalsRejected: acceptance rate {0} below 0.001")]
    AllProposalsRejected(f64),
    #[error("DegenerateWeights: effective sample size {ess:.3} below 10")]
    DegenerateWeights { ess: f64 },
    #[error("SubsampleTooLarge: requested {requested} from {available} draws")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// Deterministic named RNG stream. The 256-bit ChaCha key is the root seed
/// followed by chained 64-bit mixes of the label path, so distinct
/// (experiment, model, fold, purpose) paths get independent streams and
/// the same path always gets the same stream.
pub fn substream(seed: u64, labels: &[&str]) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for label in labels {
        for &b in label.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        // Separator keeps ["ab","c"] distinct from ["a","bc"].
        h = (h ^ 0x1f).wrapping_mul(0x0100_0000_01b3);
    }
    let mut x = h;
    for chunk in key[8..].chunks_mut(8) {
        // splitmix64 finalizer over the label hash
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        chunk.copy_from_slice(&(z ^ (z >> 31)).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmcmcConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    /// Initial proposal scale; adapted during burn-in when enabled, frozen
    /// afterwards so the kept draws target the exact posterior.
    pub scale: f64,
    pub seed: u64,
    pub adapt_during_burnin: bool,
}

impl Default for TmcmcConfig {
    fn default() -> Self {
        Self {
            total_iterations: 30_000,
            burn_in: 10_000,
            scale: 1.0,
            seed: 0,
            adapt_during_burnin: true,
        }
    }
}

impl TmcmcConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.burn_in >= self.total_iterations {
            return Err(SamplerError::InvalidConfig(format!(
                "burn-in {} must be below total iterations {}",
                self.burn_in, self.total_iterations
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(SamplerError::InvalidConfig(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorChain {
    /// Kept draws, one row per post-burn-in iteration.
    pub draws: DMatrix<f64>,
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
    /// Set when the rate pinned to exactly 0 or 1, which signals a broken
    /// target or scale even when the run technically completed.
    pub degenerate_acceptance: bool,
    pub seed: u64,
}

impl PosteriorChain {
    pub fn kept(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn draw(&self, i: usize) -> Vec<f64> {
        self.draws.row(i).iter().copied().collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.column(k).iter().copied().collect()
    }

    /// Chain dump with header `iter,logpost,theta_0..theta_{d-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,logpost");
        for k in 0..self.dim() {
            out.push_str(&format!(",theta_{k}"));
        }
        out.push('\n');
        for i in 0..self.kept() {
            out.push_str(&format!("{i},{}", self.log_posterior[i]));
            for k in 0..self.dim() {
                out.push_str(&format!(",{}", self.draws[(i, k)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Log of the Metropolis acceptance ratio for an additive move, which has
/// unit Jacobian: exactly the target log difference.
pub fn acceptance_log_ratio(log_target_new: f64, log_target_old: f64) -> f64 {
    log_target_new - log_target_old
}

/// Additive-transformation MCMC.
///
/// Each step draws one half-normal step size and a sign per coordinate,
/// moves every coordinate by the same magnitude, and accepts with the
/// plain Metropolis ratio. During burn-in the log scale is nudged toward
/// 0.3 acceptance by a Robbins-Monro recursion with gain t^-0.6.
pub fn tmcmc_sample<F>(
    log_target: F,
    init: &[f64],
    cfg: &TmcmcConfig,
) -> Result<PosteriorChain, SamplerError>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let dim = init.len();
    if dim == 0 {
        return Err(SamplerError::InvalidConfig(
            "need at least one coordinate".into(),
        ));
    }
    let mut current = init.to_vec();
    let mut current_lt = log_target(&current);
    if !current_lt.is_finite() {
        return Err(SamplerError::NonFiniteInit(current_lt));
    }

    let mut rng = substream(cfg.seed, &["tmcmc"]);
    let kept_rows = cfg.total_iterations - cfg.burn_in;
    let mut draws = DMatrix::zeros(kept_rows, dim);
    let mut log_posterior = Vec::with_capacity(kept_rows);
    let mut log_scale = cfg.scale.ln();
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; dim];

    for iter in 0..cfg.total_iterations {
        let z: f64 = StandardNormal.sample(&mut rng);
        let step = log_scale.exp() * z.abs();
        for (k, p) in proposal.iter_mut().enumerate() {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            *p = current[k] + sign * step;
        }
        let new_lt = log_target(&proposal);
        let delta = if new_lt.is_nan() {
            f64::NEG_INFINITY
        } else {
            acceptance_log_ratio(new_lt, current_lt)
        };
        let accept_prob = delta.min(0.0).exp();
        if rng.random::<f64>() < accept_prob {
            current.copy_from_slice(&proposal);
            current_lt = new_lt;
            accepted += 1;
        }
        if cfg.adapt_during_burnin && iter < cfg.burn_in {
            let gain = ((iter + 1) as f64).powf(-0.6);
            log_scale += gain * (accept_prob - 0.3);
        }
        if iter >= cfg.burn_in {
            let row = iter - cfg.burn_in;
            for k in 0..dim {
                draws[(row, k)] = current[k];
            }
            log_posterior.push(current_lt);
        }
    }

    let acceptance_rate = accepted as f64 / cfg.total_iterations as f64;
    if acceptance_rate < 0.001 {
        return Err(SamplerError::AllProposalsRejected(acceptance_rate));
    }
    Ok(PosteriorChain {
        draws,
        log_posterior,
        acceptance_rate,
        degenerate_acceptance: acceptance_rate == 0.0 || acceptance_rate == 1.0,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone)]
pub struct ImportanceWeights {
    /// Normalized to sum 1.
    pub weights: Vec<f64>,
    /// 1 / sum of squared normalized weights.
    pub ess: f64,
}

/// Normalized importance weights for retargeting chain draws onto a fold
/// posterior: w_i proportional to exp(fold(theta_i) - chain(theta_i)),
/// normalized through log-sum-exp. Fails when the effective sample size
/// drops below 10, the signal to run a dedicated fold chain instead.
pub fn importance_weights<F, G>(
    log_chain_target: F,
    log_fold_target: G,
    chain: &PosteriorChain,
) -> Result<ImportanceWeights, SamplerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let n = chain.kept();
    let mut logw = Vec::with_capacity(n);
    let mut buf = vec![0.0; chain.dim()];
    for i in 0..n {
        for k in 0..chain.dim() {
            buf[k] = chain.draws[(i, k)];
        }
        logw.push(log_fold_target(&buf) - log_chain_target(&buf));
    }
    normalize_log_weights(&logw)
}

/// Log-sum-exp normalization with the ESS guard shared by every caller.
pub fn normalize_log_weights(logw: &[f64]) -> Result<ImportanceWeights, SamplerError> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SamplerError::DegenerateWeights { ess: 0.0 });
    }
    let mut weights: Vec<f64> = logw.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    if ess < 10.0 {
        return Err(SamplerError::DegenerateWeights { ess });
    }
    Ok(ImportanceWeights { weights, ess })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub subsample_size: usize,
    pub reuse_per_draw: usize,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        Self { subsample_size: 1000, reuse_per_draw: 100 }
    }
}

impl ResamplePlan {
    pub fn evaluations(&self) -> usize {
        self.subsample_size * self.reuse_per_draw
    }
}

/// Fenwick tree over nonnegative weights supporting prefix-sum search and
/// point removal, the two operations sequential weighted sampling without
/// replacement needs.
struct WeightTree {
    tree: Vec<f64>,
    leaves: Vec<f64>,
    len: usize,
}

impl WeightTree {
    fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let mut tree = vec![0.0; len + 1];
        let leaves = weights.to_vec();
        for (i, &w) in weights.iter().enumerate() {
            let mut idx = i + 1;
            while idx <= len {
                tree[idx] += w;
                idx += idx & idx.wrapping_neg();
            }
        }
        Self { tree, leaves, len }
    }

    fn total(&self) -> f64 {
        let mut idx = self.len;
        let mut sum = 0.0;
        while idx > 0 {
            sum += self.tree[idx];
            idx -= idx & idx.wrapping_neg();
        }
        sum
    }

    /// Smallest index whose prefix sum reaches `target`.
    fn search(&self, mut target: f64) -> usize {
        let mut pos = 0usize;
        let mut step = self.len.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.len && self.tree[next] < target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(self.len - 1)
    }

    fn remove(&mut self, i: usize) {
        let w = self.leaves[i];
        self.leaves[i] = 0.0;
        let mut idx = i + 1;
        while idx <= self.len {
            self.tree[idx] -= w;
            idx += idx & idx.wrapping_neg();
        }
    }
}

/// Weighted sampling without replacement by sequential draw-and-remove:
/// each pick is proportional to the remaining weights, then its weight is
/// zeroed. A Fenwick tree keeps every pick at O(log n). Deterministic
/// under the caller's rng state. Picks come back in selection order.
pub fn resample_without_replacement(
    weights: &[f64],
    subsample_size: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>, SamplerError> {
    if subsample_size > weights.len() {
        return Err(SamplerError::SubsampleTooLarge {
            requested: subsample_size,
            available: weights.len(),
        });
    }
    let mut tree = WeightTree::new(weights);
    let mut picked = Vec::with_capacity(subsample_size);
    for _ in 0..subsample_size {
        let total = tree.total();
        if !(total > 0.0) {
            return Err(SamplerError::DegenerateWeights { ess: 0.0 });
        }
        let u: f64 = rng.random::<f64>() * total;
        // search wants a strictly positive target so index 0 stays reachable
        let i = tree.search(u.max(f64::MIN_POSITIVE));
        let i = if tree.leaves[i] > 0.0 {
            i
        } else {
            // rounding pushed the search onto an emptied leaf; take the
            // nearest remaining one
            (0..weights.len())
                .filter(|&j| tree.leaves[j] > 0.0)
                .min_by(|&a, &b| {
                    (a as isize - i as isize)
                        .abs()
                        .cmp(&(b as isize - i as isize).abs())
                })
                .expect("positive total implies a remaining leaf")
        };
        tree.remove(i);
        picked.push(i);
    }
    Ok(picked)
}

/// Standard error of the mean of `values` via batch means. The tail that
/// does not fill a complete batch is dropped.
pub fn batch_means_se(values: &[f64], n_batches: usize) -> f64 {
    let batch_len = values.len() / n_batches;
    assert!(batch_len >= 1, "need at least one value per batch");
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            values[b * batch_len..(b + 1) * batch_len]
                .iter()
                .sum::<f64>()
                / batch_len as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>()
        / (n_batches as f64 - 1.0);
    (var / n_batches as f64).sqrt()
}

/// Kolmogorov-Smirnov statistic of `samples` against a reference CDF.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    d
}
