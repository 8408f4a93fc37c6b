//! End-to-end acceptance gate. Each test exercises one headline contract
//! of the crate and prints a single verdict line with the pinned tolerance
//! and the measured runtime; run with `--nocapture` to see the lines for
//! passing tests too.
//!
//! The heavy studies share a mutex so their runtime budgets are measured
//! on a quiet machine rather than against each other.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use pbf_core::crossval::{
    conjugate_loo_known_variance, exact_fold_log_density, fold_log_density, pbf,
    posterior_chain, CvConfig, CvError,
};
use pbf_core::data::{
    CvMode, CvReport, DataError, Family, LinkFn, ModelSpec, ReplicatedDataset, RegressionForm,
    Slot, ThetaVector, TruthFn,
};
use pbf_core::experiment::{
    run_convergence_study, run_table_study, simulate_ar1_log_ratio_rate,
    simulate_linear_log_ratio_rate, ExperimentConfig, ExperimentError,
};
use pbf_core::likelihood::{log_density_obs, log_normal_cdf, probit_inverse_mean_band, LikelihoodError};
use pbf_core::prior::{
    limit_point, prior_interval, sample_interval, ClampPolicy, CovariateAxis, InversePriorSpec,
    LinkBand, PriorError, PriorKind,
};
use pbf_core::rate::{
    empirical_minimizers, h_ar1, h_linear, h_quadratic, minimize_convex_h, minimizer_linear,
    minimizer_quadratic, rate_minimum, Ar1Theta, Ar1TheoryInputs, CovariateSpace, LinTheta,
    QuadTheta, RateError, RateModel,
};
use pbf_core::sampler::{
    batch_means_se, ks_statistic, normalize_log_weights, resample_without_replacement, substream,
    tmcmc_sample, PosteriorChain, ResamplePlan, SamplerError, TmcmcConfig,
};

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    // a panic in one budgeted test must not poison the others
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: &str, ok: bool, elapsed: Duration, detail: &str) {
    println!(
        "acceptance {id}: {} [{elapsed:.2?}] {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{id}: {detail} (elapsed {elapsed:.2?})");
}

#[test]
fn a01_linear_rate_oracle_agrees_with_the_quadrature_optimizer_pipeline() {
    let t0 = Instant::now();
    let space = CovariateSpace::new(-1.0, 1.0).unwrap();
    let eta0 = |x: f64| x * x;
    let rate = rate_minimum(RateModel::Linear, eta0, 1.0, &space).unwrap();
    let exact = 0.5 * (49.0f64 / 45.0).ln();
    let th = minimizer_linear(eta0, 1.0, &space).unwrap();
    let numeric = minimize_convex_h(
        |t| {
            let cand = LinTheta { alpha: t[0], beta: t[1], sigma2: t[2] };
            h_linear(&cand, eta0, 1.0, &space).unwrap_or(f64::INFINITY)
        },
        &[0.2, -0.4, 2.5],
        Some(2),
    )
    .unwrap();
    let d_const = (rate - exact).abs();
    let d_pipeline = (rate - numeric.value).abs();
    let d_minimizer = (th.alpha - 1.0 / 3.0)
        .abs()
        .max(th.beta.abs())
        .max((th.sigma2 - 49.0 / 45.0).abs());
    let elapsed = t0.elapsed();
    let ok = d_const <= 1e-8
        && d_pipeline <= 1e-8
        && d_minimizer <= 1e-8
        && elapsed <= Duration::from_secs(1);
    verdict(
        "01 linear rate vs x^2 truth (tol 1e-8, budget 1s)",
        ok,
        elapsed,
        &format!(
            "rate={rate:.12} |closed-form gap|={d_const:.2e} |optimizer gap|={d_pipeline:.2e} |minimizer gap|={d_minimizer:.2e}"
        ),
    );
}

#[test]
fn a02_quadratic_minimizer_matches_nelder_mead_from_ten_random_starts() {
    let t0 = Instant::now();
    let space = CovariateSpace::new(-1.0, 1.0).unwrap();
    let eta0 = |x: f64| x * x * x;
    let th = minimizer_quadratic(eta0, 1.0, &space).unwrap();
    let d_theta = th
        .alpha
        .abs()
        .max((th.beta1 - 0.6).abs())
        .max(th.beta2.abs())
        .max((th.sigma2 - 179.0 / 175.0).abs());
    let h_at_min = h_quadratic(&th, eta0, 1.0, &space).unwrap();
    let mut rng = substream(42, &["acceptance", "quadratic-starts"]);
    let mut worst_gap = 0.0f64;
    for _ in 0..10 {
        let init = [
            4.0 * rng.random::<f64>() - 2.0,
            4.0 * rng.random::<f64>() - 2.0,
            4.0 * rng.random::<f64>() - 2.0,
            0.3 + 4.0 * rng.random::<f64>(),
        ];
        let res = minimize_convex_h(
            |t| {
                let cand = QuadTheta { alpha: t[0], beta1: t[1], beta2: t[2], sigma2: t[3] };
                h_quadratic(&cand, eta0, 1.0, &space).unwrap_or(f64::INFINITY)
            },
            &init,
            Some(3),
        )
        .unwrap();
        worst_gap = worst_gap.max((res.value - h_at_min).abs());
    }
    let elapsed = t0.elapsed();
    let ok = d_theta <= 1e-8 && worst_gap <= 1e-6 && elapsed <= Duration::from_secs(5);
    verdict(
        "02 quadratic minimizer vs x^3 truth (tol 1e-8 / 1e-6, budget 5s)",
        ok,
        elapsed,
        &format!(
            "minimizer=({:.2e}, {:.10}, {:.2e}, {:.10}) |gap|={d_theta:.2e} worst optimizer gap={worst_gap:.2e}",
            th.alpha, th.beta1, th.beta2, th.sigma2
        ),
    );
}

#[test]
fn a03_normalized_log_ratio_equipartitions_to_minus_the_rate() {
    let t0 = Instant::now();
    let space = CovariateSpace::new(-1.0, 1.0).unwrap();
    let curve = TruthFn::Polynomial(vec![0.0, 0.0, 1.0]);
    let thetas = [
        LinTheta { alpha: 1.0 / 3.0, beta: 0.0, sigma2: 49.0 / 45.0 },
        LinTheta { alpha: 0.0, beta: 0.0, sigma2: 1.0 },
        LinTheta { alpha: 0.5, beta: 0.3, sigma2: 1.5 },
        LinTheta { alpha: -0.2, beta: 0.4, sigma2: 1.2 },
        LinTheta { alpha: 0.3, beta: -0.3, sigma2: 2.0 },
    ];
    let mut ok = true;
    let mut counts = Vec::new();
    for th in &thetas {
        let h = h_linear(th, |x| curve.eval(x), 1.0, &space).unwrap();
        let mut hits = 0;
        for seed in 0..5 {
            let sim =
                simulate_linear_log_ratio_rate(th, &curve, 1.0, -1.0, 1.0, 5000, seed).unwrap();
            if (sim + h).abs() < 0.05 {
                hits += 1;
            }
        }
        if hits < 4 {
            ok = false;
        }
        counts.push(format!("{hits}/5"));
    }
    let elapsed = t0.elapsed();
    let ok = ok && elapsed <= Duration::from_secs(10);
    verdict(
        "03 equipartition at 5 thetas, n=5000 (tol 0.05, need 4/5 seeds each, budget 10s)",
        ok,
        elapsed,
        &format!("seeds within tolerance per theta: [{}]", counts.join(", ")),
    );
}

#[test]
fn a04_forward_pbf_against_truth_converges_at_the_predicted_rate() {
    let _guard = heavy_guard();
    let t0 = Instant::now();
    let mut cfg = ExperimentConfig::convergence_linear();
    cfg.n_schedule = vec![100, 2000];
    let study = run_convergence_study(&cfg).unwrap();
    let per = cfg.n_schedule.len();
    let mut tight = 0;
    let mut improving = 0;
    let seeds = cfg.seeds.len();
    for s in 0..seeds {
        let first = &study.points[s * per];
        let last = &study.points[s * per + per - 1];
        assert_eq!((first.n, last.n), (100, 2000));
        if last.gap < 0.1 {
            tight += 1;
        }
        if last.gap < first.gap {
            improving += 1;
        }
    }
    let elapsed = t0.elapsed();
    let ok = tight >= 7 && improving >= 8 && elapsed <= Duration::from_secs(30);
    verdict(
        "04 forward PBF convergence, n=100 vs 2000 (gap<0.1 for 7/10, shrinking for 8/10, budget 30s)",
        ok,
        elapsed,
        &format!(
            "limit={:+.6} gap<0.1 at n=2000: {tight}/{seeds}, gap shrank: {improving}/{seeds}",
            study.limit
        ),
    );
}

#[test]
fn a05_tmcmc_recovers_two_dimensional_gaussians_reproducibly() {
    let t0 = Instant::now();
    let targets: [(f64, f64); 2] = [(0.0, 0.0), (1.5, -2.0)];
    let mut mean_ok = true;
    let mut ks_seeds = 0;
    let mut worst_ks = 0.0f64;
    for seed in 0..5u64 {
        let mut seed_ks_ok = true;
        for (mx, my) in targets {
            let target =
                move |v: &[f64]| -0.5 * ((v[0] - mx).powi(2) + (v[1] - my).powi(2));
            let cfg = TmcmcConfig {
                total_iterations: 60_000,
                burn_in: 10_000,
                scale: 1.0,
                seed: 900 + seed,
                adapt_during_burnin: true,
            };
            let chain = tmcmc_sample(target, &[0.0, 0.0], &cfg).unwrap();
            for (k, mu) in [(0usize, mx), (1usize, my)] {
                let col = chain.column(k);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let se = batch_means_se(&col, 30);
                if (mean - mu).abs() > 3.0 * se {
                    mean_ok = false;
                }
                let thinned: Vec<f64> = col.iter().copied().step_by(40).collect();
                let stat = ks_statistic(&thinned, |x| log_normal_cdf(x - mu).exp());
                let crit = 1.628 / (thinned.len() as f64).sqrt();
                worst_ks = worst_ks.max(stat / crit);
                if stat >= crit {
                    seed_ks_ok = false;
                }
            }
        }
        if seed_ks_ok {
            ks_seeds += 1;
        }
    }
    let cfg = TmcmcConfig {
        total_iterations: 60_000,
        burn_in: 10_000,
        scale: 1.0,
        seed: 900,
        adapt_during_burnin: true,
    };
    let standard = |v: &[f64]| -0.5 * (v[0].powi(2) + v[1].powi(2));
    let c1 = tmcmc_sample(standard, &[0.0, 0.0], &cfg).unwrap();
    let c2 = tmcmc_sample(standard, &[0.0, 0.0], &cfg).unwrap();
    let identical = c1.draws == c2.draws && c1.log_posterior == c2.log_posterior;
    let elapsed = t0.elapsed();
    let ok = mean_ok && ks_seeds >= 4 && identical && elapsed <= Duration::from_secs(10);
    verdict(
        "05 sampler on 2-d Gaussians (means within 3se, KS alpha=0.01 for 4/5 seeds, budget 10s)",
        ok,
        elapsed,
        &format!(
            "means ok: {mean_ok}, KS seeds: {ks_seeds}/5 (worst stat/crit {worst_ks:.3}), bit-identical rerun: {identical}"
        ),
    );
}

#[test]
fn a06_reused_chain_forward_densities_match_the_conjugate_predictive() {
    let _guard = heavy_guard();
    let t0 = Instant::now();
    let n = 20;
    let mut rng = substream(2026, &["acceptance", "conjugate-gaussian"]);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = 2.0 * rng.random::<f64>() - 1.0;
        let e: f64 = StandardNormal.sample(&mut rng);
        xs.push(x);
        ys.push(0.3 + 0.8 * x + 0.7 * e);
    }
    let ds = ReplicatedDataset::new(
        DMatrix::from_column_slice(n, 1, &xs),
        DMatrix::from_column_slice(n, 1, &ys),
        vec!["x".into()],
    )
    .unwrap();
    let sigma2 = 0.49f64;
    let spec = ModelSpec::new(
        "gaussian-line-known-variance",
        Family::GaussianNoise,
        LinkFn::Identity,
        RegressionForm::Linear,
        vec![0],
    )
    .unwrap()
    .with_fixed_params(ThetaVector::new(vec![sigma2.ln()], vec![Slot::LogVariance]).unwrap());
    let cfg = CvConfig {
        sampler: TmcmcConfig {
            total_iterations: 4_200_000,
            burn_in: 200_000,
            scale: 1.0,
            seed: 0,
            adapt_during_burnin: true,
        },
        plan: ResamplePlan::default(),
        scored_replicate: 0,
        seed: 7,
        run_label: "acceptance-conjugate".into(),
    };
    let chain = posterior_chain(&spec, &ds, &cfg).unwrap();
    let per_fold: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|fold| {
            let out =
                fold_log_density(&spec, &ds, fold, CvMode::Forward, None, &chain, &cfg).unwrap();
            let exact = conjugate_loo_known_variance(&ds, fold, sigma2, 0).unwrap();
            ((out.log_density - exact).abs(), out.mcse)
        })
        .collect();
    let folds_ok = per_fold.iter().all(|(d, m)| *m > 0.0 && *d <= 3.0 * *m);
    let worst = per_fold
        .iter()
        .map(|(d, m)| d / (3.0 * m))
        .fold(0.0f64, f64::max);
    let max_mcse = per_fold.iter().map(|(_, m)| *m).fold(0.0f64, f64::max);
    let elapsed = t0.elapsed();
    let ok = folds_ok && elapsed <= Duration::from_secs(60);
    verdict(
        "06 importance-reuse vs analytic LOO predictive, n=20, 1000x100 evaluations per fold (every fold within 3 mcse, budget 60s)",
        ok,
        elapsed,
        &format!("all 20 folds within band: {folds_ok}, worst |gap|/(3 mcse)={worst:.3}, max mcse={max_mcse:.2e}"),
    );
}

#[test]
fn a07_band_prior_width_halves_per_quadrupled_m_and_collapses_to_the_limit() {
    let t0 = Instant::now();
    let theta =
        ThetaVector::new(vec![0.5, 0.8], vec![Slot::Intercept, Slot::Slope(0)]).unwrap();
    let (y_bar, s) = (10.0, 0.1);
    let mut ratio_ok = true;
    let mut conc_ok = true;
    let mut ratios = Vec::new();
    for band in [LinkBand::PoissonLog, LinkBand::GeomLogit] {
        let spec = InversePriorSpec::new(PriorKind::Link(band))
            .with_constants(1.0, 100.0)
            .with_clamp(ClampPolicy::Error);
        let width = |m: usize| prior_interval(&spec, &theta, y_bar, s, m, None).unwrap().width();
        for m in [100usize, 400, 1600] {
            let r = width(m) / width(4 * m);
            if !(1.9..=2.1).contains(&r) {
                ratio_ok = false;
            }
            ratios.push(format!("{band:?}@m={m}: {r:.3}"));
        }
        let interval = prior_interval(&spec, &theta, y_bar, s, 10_000, None).unwrap();
        let mut rng = substream(5, &["acceptance", "prior-collapse"]);
        let mean =
            (0..2000).map(|_| sample_interval(&interval, &mut rng)).sum::<f64>() / 2000.0;
        let star = limit_point(&spec, &theta, y_bar, None).unwrap();
        if (mean - star).abs() >= interval.width() {
            conc_ok = false;
        }
    }
    let elapsed = t0.elapsed();
    let ok = ratio_ok && conc_ok && elapsed <= Duration::from_secs(5);
    verdict(
        "07 band prior scaling (width ratios in [1.9, 2.1], draws concentrate at m=1e4, budget 5s)",
        ok,
        elapsed,
        &format!("ratios [{}], concentration ok: {conc_ok}", ratios.join(", ")),
    );
}

#[test]
fn a08_autoregressive_rate_matches_long_simulation_and_vanishes_at_truth() {
    let t0 = Instant::now();
    let inputs = Ar1TheoryInputs {
        rho0: 0.5,
        beta0: 1.0,
        sigma0_sq: 1.0,
        sigma_x_sq: 1.0,
        sigma_z_sq: 1.0,
    };
    let thetas = [
        Ar1Theta { rho: 0.3, beta: 0.7, sigma2: 1.3 },
        Ar1Theta { rho: 0.5, beta: 1.0, sigma2: 1.0 },
        Ar1Theta { rho: 0.6, beta: 1.2, sigma2: 0.9 },
    ];
    let mut sim_ok = true;
    let mut gaps = Vec::new();
    for (i, th) in thetas.iter().enumerate() {
        let h = h_ar1(th, &inputs, CovariateAxis::X).unwrap();
        let sim =
            simulate_ar1_log_ratio_rate(th, &inputs, CovariateAxis::X, 100_000, 30 + i as u64)
                .unwrap();
        let gap = (sim + h).abs();
        if gap >= 0.02 {
            sim_ok = false;
        }
        gaps.push(format!("{gap:.4}"));
    }
    let degenerate = Ar1TheoryInputs { sigma_z_sq: 0.0, ..inputs };
    let at_truth = h_ar1(&Ar1Theta { rho: 0.5, beta: 1.0, sigma2: 1.0 }, &degenerate, CovariateAxis::X)
        .unwrap();
    let elapsed = t0.elapsed();
    let ok = sim_ok && at_truth.abs() <= 1e-12 && elapsed <= Duration::from_secs(30);
    verdict(
        "08 autoregressive rate vs n=1e5 simulation (tol 0.02; zero at the truth to 1e-12; budget 30s)",
        ok,
        elapsed,
        &format!("per-theta gaps [{}], |h at truth|={:.2e}", gaps.join(", "), at_truth.abs()),
    );
}

#[test]
fn a09_poisson_log_linear_leads_the_forward_score_table() {
    let _guard = heavy_guard();
    let t0 = Instant::now();
    let cfg = ExperimentConfig::table1();
    let study = run_table_study(&cfg).unwrap();
    let idx = |label: &str| {
        study.per_seed[0]
            .rows
            .iter()
            .position(|r| r.label == label)
            .unwrap_or_else(|| panic!("missing row {label}"))
    };
    let target = idx("poisson-log-linear-c0");
    let geo = [idx("geometric-logit-linear-c0"), idx("geometric-probit-linear-c0")];
    let n_seeds = study.per_seed.len();
    let mut top = 0;
    let mut beats_geo = 0;
    for seed_table in &study.per_seed {
        let Some(v0) = seed_table.rows[target].forward.value else { continue };
        let is_top = seed_table
            .rows
            .iter()
            .enumerate()
            .all(|(k, r)| k == target || r.forward.value.is_none_or(|v| v0 > v));
        if is_top {
            top += 1;
        }
        let beats = geo
            .iter()
            .all(|&g| seed_table.rows[g].forward.value.is_none_or(|v| v0 > v));
        if beats {
            beats_geo += 1;
        }
    }
    let elapsed = t0.elapsed();
    let ok = 2 * top > n_seeds && 10 * beats_geo > 7 * n_seeds && elapsed <= Duration::from_secs(1800);
    verdict(
        "09 forward score ordering over 20 replications (top >50%, beats both geometric lines >70%, budget 30min)",
        ok,
        elapsed,
        &format!("poisson log line: top {top}/{n_seeds}, beats geometric lines {beats_geo}/{n_seeds}"),
    );
}

#[test]
fn a10_report_algebra_round_trips_and_error_surface() {
    let t0 = Instant::now();

    let mut rng = substream(77, &["acceptance", "report-algebra"]);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let folds = 3 + (rng.random::<f64>() * 17.0) as usize;
        let mk = |rng: &mut ChaCha12Rng| -> CvReport {
            let v: Vec<f64> = (0..folds).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            CvReport::new("r", CvMode::Forward, 0, v, vec![0.0; folds]).unwrap()
        };
        let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let ab = pbf(&a, &b).unwrap();
        let ba = pbf(&b, &a).unwrap();
        let ac = pbf(&a, &c).unwrap();
        let bc = pbf(&b, &c).unwrap();
        worst = worst
            .max((ab.log_pbf + ba.log_pbf).abs())
            .max((ac.log_pbf - (ab.log_pbf + bc.log_pbf)).abs())
            .max((ab.normalized_log_pbf + ba.normalized_log_pbf).abs())
            .max((ac.normalized_log_pbf - (ab.normalized_log_pbf + bc.normalized_log_pbf)).abs());
    }
    let algebra_ok = worst <= 1e-12;

    let xs = [1.0 / 3.0, 0.1 + 0.2, -1.0e-300, std::f64::consts::SQRT_2, -7.25];
    let resp: Vec<f64> = (0..15)
        .map(|k| match k % 5 {
            0 => 5e-324,
            1 => -0.0,
            2 => 1.0e300,
            3 => std::f64::consts::PI * (k as f64 + 1.0),
            _ => 2.0f64.powi(-40) + k as f64,
        })
        .collect();
    let ds = ReplicatedDataset::new(
        DMatrix::from_column_slice(5, 1, &xs),
        DMatrix::from_row_slice(5, 3, &resp),
        vec!["x".into()],
    )
    .unwrap();
    let text = ds.to_csv();
    let back = ReplicatedDataset::from_csv(&text, 1).unwrap();
    let mut roundtrip_ok = back.to_csv() == text;
    for i in 0..5 {
        roundtrip_ok &= back.covariate(i, 0).to_bits() == ds.covariate(i, 0).to_bits();
        for j in 0..3 {
            roundtrip_ok &= back.response(i, j).to_bits() == ds.response(i, j).to_bits();
        }
    }

    let mut total = 0usize;
    let mut triggered = 0usize;
    macro_rules! check {
        ($expr:expr, $pat:pat) => {
            total += 1;
            let got = $expr;
            if matches!(got, $pat) {
                triggered += 1;
            } else {
                eprintln!("fixture missed {}: got {got:?}", stringify!($pat));
            }
        };
    }

    check!(
        ThetaVector::new(vec![0.0], vec![]).unwrap_err(),
        DataError::DimensionMismatch(_)
    );
    check!(
        ReplicatedDataset::new(
            DMatrix::from_column_slice(2, 1, &[f64::NAN, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            vec!["x".into()],
        )
        .unwrap_err(),
        DataError::NonFiniteInput(_)
    );
    let tiny = ReplicatedDataset::new(
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
        vec!["x".into()],
    )
    .unwrap();
    check!(tiny.row_summary(0).unwrap_err(), DataError::ReplicateCountTooSmall(1));
    check!(tiny.row_summary(9).unwrap_err(), DataError::IndexOutOfRange(_));
    check!(
        ModelSpec::new("bad", Family::Poisson, LinkFn::Identity, RegressionForm::Linear, vec![0])
            .unwrap_err(),
        DataError::InvalidModel(_)
    );
    check!(
        ReplicatedDataset::from_csv("x,y1\nfoo,1.0\nbar,2.0\n", 1).unwrap_err(),
        DataError::CsvParse(_)
    );
    check!(
        CvReport::new("r", CvMode::Forward, 0, vec![f64::NEG_INFINITY], vec![0.0]).unwrap_err(),
        DataError::NonFiniteReport(0)
    );

    let pois = ModelSpec::new("pois", Family::Poisson, LinkFn::Log, RegressionForm::Linear, vec![0])
        .unwrap();
    let th_pois =
        ThetaVector::new(vec![0.1, 0.2], vec![Slot::Intercept, Slot::Slope(0)]).unwrap();
    let th_huge =
        ThetaVector::new(vec![800.0, 0.0], vec![Slot::Intercept, Slot::Slope(0)]).unwrap();
    check!(
        log_density_obs(&pois, &th_pois, &[0.0], -1.0, None).unwrap_err(),
        LikelihoodError::InvalidCount(_)
    );
    check!(
        log_density_obs(&pois, &th_huge, &[0.0], 1.0, None).unwrap_err(),
        LikelihoodError::LinkOverflow(_)
    );
    check!(
        probit_inverse_mean_band(0.0, 1.0).unwrap_err(),
        LikelihoodError::NonPositiveLowerBand(_)
    );
    check!(
        probit_inverse_mean_band(2.0, 1.0).unwrap_err(),
        LikelihoodError::BandOrder { .. }
    );

    check!(
        tmcmc_sample(|_| f64::NAN, &[0.0], &TmcmcConfig::default()).unwrap_err(),
        SamplerError::NonFiniteInit(_)
    );
    let spiked = |v: &[f64]| if v[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    let short = TmcmcConfig { total_iterations: 2000, burn_in: 500, ..TmcmcConfig::default() };
    check!(
        tmcmc_sample(spiked, &[0.0], &short).unwrap_err(),
        SamplerError::AllProposalsRejected(_)
    );
    let mut degenerate_logw = vec![-1.0e300; 30];
    degenerate_logw[0] = 0.0;
    check!(
        normalize_log_weights(&degenerate_logw).unwrap_err(),
        SamplerError::DegenerateWeights { .. }
    );
    check!(
        resample_without_replacement(&[1.0; 5], 6, &mut substream(1, &["acceptance"]))
            .unwrap_err(),
        SamplerError::SubsampleTooLarge { requested: 6, available: 5 }
    );
    check!(
        TmcmcConfig { total_iterations: 5, burn_in: 10, ..TmcmcConfig::default() }
            .validate()
            .unwrap_err(),
        SamplerError::InvalidConfig(_)
    );

    let pois_prior = InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog))
        .with_constants(1.0, 100.0)
        .with_clamp(ClampPolicy::Error);
    let th_flat = ThetaVector::new(vec![0.5, 0.0], vec![Slot::Intercept, Slot::Slope(0)]).unwrap();
    check!(
        prior_interval(&pois_prior, &th_flat, 5.0, 1.0, 4, None).unwrap_err(),
        PriorError::SlopeZero
    );
    let th_slope = ThetaVector::new(vec![0.5, 0.8], vec![Slot::Intercept, Slot::Slope(0)]).unwrap();
    check!(
        prior_interval(&pois_prior, &th_slope, 0.2, 1.0, 4, None).unwrap_err(),
        PriorError::NonPositiveBandEdge(_)
    );
    let two_cov = InversePriorSpec::new(PriorKind::TwoCovariate {
        which: CovariateAxis::X,
        base: LinkBand::PoissonLog,
    });
    let th_two = ThetaVector::new(
        vec![0.1, 0.5, 0.7],
        vec![Slot::Intercept, Slot::Slope(0), Slot::Slope(1)],
    )
    .unwrap();
    check!(
        prior_interval(&two_cov, &th_two, 5.0, 1.0, 4, None).unwrap_err(),
        PriorError::MissingFixedOther(_)
    );
    check!(
        InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog))
            .with_constants(-1.0, 2.0)
            .validate()
            .unwrap_err(),
        PriorError::InvalidSpec(_)
    );
    let ar1_prior = InversePriorSpec::new(PriorKind::Ar1);
    check!(
        limit_point(&ar1_prior, &th_slope, 1.0, Some(0.5)).unwrap_err(),
        PriorError::Unsupported(_)
    );

    let space = CovariateSpace::new(-1.0, 1.0).unwrap();
    check!(
        space
            .ex(|x| if x > 0.5 { f64::NAN } else { 1.0 })
            .unwrap_err(),
        RateError::NonFiniteIntegrand(_)
    );
    check!(
        h_linear(&LinTheta { alpha: 0.0, beta: 0.0, sigma2: -1.0 }, |x| x, 1.0, &space)
            .unwrap_err(),
        RateError::NonPositiveVariance(_)
    );
    check!(
        Ar1TheoryInputs { rho0: 1.0, beta0: 1.0, sigma0_sq: 1.0, sigma_x_sq: 1.0, sigma_z_sq: 1.0 }
            .validate()
            .unwrap_err(),
        RateError::NonStationaryTruth(_)
    );
    check!(
        CovariateSpace::new(2.0, 2.0).unwrap_err(),
        RateError::DegenerateCovariateSpace(_)
    );
    let point_space = CovariateSpace { lower: 0.5, upper: 0.5, grid: 3 };
    check!(
        minimizer_quadratic(|x| x, 1.0, &point_space).unwrap_err(),
        RateError::SingularMomentMatrix
    );
    let flat_x = ReplicatedDataset::new(
        DMatrix::from_column_slice(4, 1, &[0.5; 4]),
        DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]),
        vec!["x".into()],
    )
    .unwrap();
    check!(
        empirical_minimizers(&flat_x, RegressionForm::Linear, |x| x).unwrap_err(),
        RateError::RankDeficientDesign(_)
    );
    check!(
        minimize_convex_h(|t| (t[0].abs() - 3.0).powi(2), &[0.0], None).unwrap_err(),
        RateError::NoConvergence(_)
    );
    check!(
        empirical_minimizers(&flat_x, RegressionForm::Gp, |x| x).unwrap_err(),
        RateError::UnsupportedPair(_)
    );

    let truth = ModelSpec::new(
        "truth",
        Family::GaussianNoise,
        LinkFn::Identity,
        RegressionForm::FixedFunction,
        vec![0],
    )
    .unwrap()
    .with_truth_fn(TruthFn::Polynomial(vec![0.0]))
    .unwrap()
    .with_fixed_params(ThetaVector::new(vec![0.0], vec![Slot::LogVariance]).unwrap());
    let overflow_ds = ReplicatedDataset::new(
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[1e200, 0.0]),
        vec!["x".into()],
    )
    .unwrap();
    check!(
        exact_fold_log_density(&truth, &overflow_ds, 0, 0).unwrap_err(),
        CvError::ZeroDensityFold(0)
    );
    let r3 = CvReport::new("a", CvMode::Forward, 0, vec![0.0; 3], vec![0.0; 3]).unwrap();
    let r2 = CvReport::new("b", CvMode::Forward, 0, vec![0.0; 2], vec![0.0; 2]).unwrap();
    check!(pbf(&r3, &r2).unwrap_err(), CvError::FoldCountMismatch { left: 3, right: 2 });
    let pois_ds = ReplicatedDataset::new(
        DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]),
        DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 2.0, 3.0, 4.0, 5.0]),
        vec!["x".into()],
    )
    .unwrap();
    let fake_chain = PosteriorChain {
        draws: DMatrix::from_fn(60, 2, |i, k| 0.1 + 0.01 * (i + k) as f64),
        log_posterior: vec![0.0; 60],
        acceptance_rate: 0.3,
        degenerate_acceptance: false,
        seed: 0,
    };
    let cv_cfg = CvConfig {
        sampler: TmcmcConfig::default(),
        plan: ResamplePlan { subsample_size: 40, reuse_per_draw: 3 },
        scored_replicate: 0,
        seed: 1,
        run_label: "acceptance-errors".into(),
    };
    check!(
        fold_log_density(&pois, &pois_ds, 0, CvMode::Inverse, Some(&pois_prior), &fake_chain, &cv_cfg)
            .unwrap_err(),
        CvError::PriorIncompatible { fold: 0, .. }
    );
    check!(
        fold_log_density(&pois, &pois_ds, 0, CvMode::Inverse, None, &fake_chain, &cv_cfg)
            .unwrap_err(),
        CvError::MissingPrior
    );
    let mut bad_cfg = ExperimentConfig::table1();
    bad_cfg.c1 = 5.0;
    bad_cfg.c2 = 1.0;
    check!(bad_cfg.validate().unwrap_err(), ExperimentError::InvalidConfig(_));

    let errors_ok = triggered == total;
    let elapsed = t0.elapsed();
    let ok = algebra_ok && roundtrip_ok && errors_ok;
    verdict(
        "10 report algebra, bit-exact round trips, error fixtures (tol 1e-12)",
        ok,
        elapsed,
        &format!(
            "worst algebra residual={worst:.2e}, csv round trip bit-exact: {roundtrip_ok}, error fixtures {triggered}/{total}"
        ),
    );
}
