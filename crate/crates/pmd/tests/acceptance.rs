//! End-to-end acceptance suite.
//!
//! Each criterion prints exactly one `[PASS]`/`[FAIL]` line (run with
//! `--nocapture` to see them on success) and then asserts, so a red test
//! always names the criterion and the measured value that sank it.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use pmd::density::{normalize_log_weights, BandwidthRule, KdeDensity, ParticleCloud};
use pmd::diagnostics::{
    build_grid_oracle, cloud_to_kde, conjugate_gaussian_posterior, logistic_map,
    predictive_accuracy, rate_fit, GridAxis, GridOracle,
};
use pmd::mirror_descent::{
    kde_prox_step, reweight_particles, run_pmd, smooth_cloud, BandwidthSpec, MinibatchMode,
    PmdConfig, Strategy,
};
use pmd::model::{
    make_logistic, sigmoid, ConjugateGaussian, Dataset, LogisticRegression, Model, TiedMixture,
};
use pmd::schedule::{ParticleSchedule, StepSchedule};
use pmd::sgld::{run_sgld, SgldConfig};

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "[{}] criterion {n} ({name}): {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// d=1 conjugate Gaussian reference problem: prior N(0,1), obs var 1,
/// 20 observations drawn at θ = 1.
fn conjugate_bench() -> (ConjugateGaussian, Dataset, f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(555);
    let rows: Vec<f64> = (0..20)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.0 + z
        })
        .collect();
    let data = Dataset::from_scalar(&rows).unwrap();
    let model = ConjugateGaussian::new(array![0.0], 1.0, 1.0).unwrap();
    let (mean, var) = conjugate_gaussian_posterior(&array![0.0], 1.0, 1.0, data.rows()).unwrap();
    (model, data, mean[0], var)
}

fn one_step_snis_config(m: usize, n: usize, seed: u64) -> PmdConfig {
    PmdConfig {
        strategy: Strategy::WeightedParticles,
        step: StepSchedule::InverseT { eta: 1.0 },
        particles: ParticleSchedule::Fixed { m },
        batch_size: n,
        // an epoch-mode batch of size N is exactly one full pass, so the
        // single γ=1 step is plain self-normalized importance sampling
        minibatch: MinibatchMode::Epochs,
        iterations: 1,
        bandwidth: BandwidthSpec::MedianTrick { beta: 2.0, factor: 0.1 },
        rng_seed: seed,
        record_iterations: Some(vec![1]),
    }
}

#[test]
fn criterion_1_one_step_bayes_equivalence() {
    let start = Instant::now();
    let (model, data, post_mean, _) = conjugate_bench();
    let mut max_z: f64 = 0.0;
    let mut hits = 0;
    for seed in 0..10u64 {
        let config = one_step_snis_config(10_000, data.len(), 100 + seed);
        let result = run_pmd(&model, &data, &config, None).unwrap();
        let cloud = result.density.cloud();
        let (est, se) = cloud.integral_estimate_with_se(|t| t[0]);
        let z = (est - post_mean).abs() / se;
        max_z = max_z.max(z);
        if z <= 3.0 {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "one-step Bayes equivalence",
        hits == 10 && secs < 5.0,
        &format!("{hits}/10 seeds within 3 importance-sampling standard errors of the closed-form mean (max |z| = {max_z:.2}), {secs:.1} s"),
    );
}

#[test]
fn criterion_2_one_step_error_rate() {
    let start = Instant::now();
    let (model, data, post_mean, post_var) = conjugate_bench();
    // bounded test function: indicator of θ ≤ cutoff, truth from the
    // Gaussian CDF of the closed-form posterior
    let cutoff = post_mean + 0.3 * post_var.sqrt();
    let truth = Normal::new(post_mean, post_var.sqrt()).unwrap().cdf(cutoff);
    let sizes = [100usize, 400, 1600, 6400];
    let errors: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let total: f64 = (0..50u64)
                .into_par_iter()
                .map(|seed| {
                    let config = one_step_snis_config(m, data.len(), 40_000 + seed);
                    let result = run_pmd(&model, &data, &config, None).unwrap();
                    let est = result
                        .density
                        .cloud()
                        .integral_estimate(|t| if t[0] <= cutoff { 1.0 } else { 0.0 });
                    (est - truth).abs()
                })
                .sum();
            total / 50.0
        })
        .collect();
    let slope = rate_fit(
        &sizes.iter().map(|&m| m as f64).collect::<Vec<_>>(),
        &errors,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "one-step integration error rate",
        (-0.65..=-0.35).contains(&slope) && secs < 60.0,
        &format!("mean |error| {errors:.4?} over m = {sizes:?} fits log-log slope {slope:.3} (want [-0.65, -0.35]), {secs:.1} s"),
    );
}

fn kl_descent_medians(
    particles: ParticleSchedule,
    bandwidth: BandwidthSpec,
    checkpoints: &[usize],
    seed_base: u64,
) -> Vec<f64> {
    let model = ConjugateGaussian::new(array![0.0], 1.0, 1.0).unwrap();
    let data = Dataset::from_scalar(&[2.0]).unwrap();
    // posterior N(1, 1/2)
    let axes = vec![GridAxis::new(-4.0, 6.0, 1500).unwrap()];
    let oracle = build_grid_oracle(&model, &data, axes).unwrap();
    let kls: Vec<Vec<f64>> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let config = PmdConfig {
                strategy: Strategy::WeightedKde,
                step: StepSchedule::InverseT { eta: 1.0 },
                particles: particles.clone(),
                batch_size: 1,
                minibatch: MinibatchMode::Epochs,
                iterations: *checkpoints.last().unwrap(),
                bandwidth,
                rng_seed: seed_base + seed,
                record_iterations: Some(checkpoints.to_vec()),
            };
            let result = run_pmd(&model, &data, &config, None).unwrap();
            result
                .trace
                .records
                .iter()
                .map(|rec| {
                    let kde = rec.state.as_ref().unwrap().kde().unwrap().clone();
                    oracle.kl_divergence(|t| kde.log_density(t)).unwrap()
                })
                .collect()
        })
        .collect();
    (0..checkpoints.len())
        .map(|i| {
            let mut column: Vec<f64> = kls.iter().map(|row| row[i]).collect();
            median(&mut column)
        })
        .collect()
}

/// KNOWN RED. With a fixed support budget every kernel step re-draws the
/// m particles i.i.d. from the current estimate, injecting ~1/m of fresh
/// KL per iteration, while the 1/t step size removes it at rate γ_t; the
/// two balance at an equilibrium floor near t/(4m) ≈ 0.2 at t = 160,
/// m = 200 — four times the 0.05 gate, for any bandwidth choice (the
/// noise enters through resampling, not smoothing). The gate is asserted
/// as stated anyway; `kl_descent_with_growing_support` below shows the
/// same schedule clears it once the support budget grows with t.
#[test]
fn criterion_3_kde_kl_descent() {
    let start = Instant::now();
    let checkpoints = [10usize, 40, 160];
    let medians = kl_descent_medians(
        ParticleSchedule::Fixed { m: 200 },
        BandwidthSpec::Fixed { beta: 2.0, scale: 0.4 },
        &checkpoints,
        300,
    );
    let descending = medians[0] > medians[1] && medians[1] > medians[2];
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "kernel-strategy KL descent",
        descending && medians[2] < 0.05 && secs < 120.0,
        &format!("median grid-KL at t = {checkpoints:?}: {medians:.4?} (want strictly decreasing, final < 0.05), {secs:.1} s"),
    );
}

/// Companion to criterion 3: the identical 1/t schedule descends through
/// the same KL gate when the support budget grows linearly, so the floor
/// above is a property of the fixed budget, not of the update.
#[test]
fn kl_descent_with_growing_support() {
    let checkpoints = [4usize, 16, 64];
    let medians = kl_descent_medians(
        ParticleSchedule::Linear { m0: 64 },
        BandwidthSpec::Fixed { beta: 2.0, scale: 0.3 },
        &checkpoints,
        300,
    );
    let descending = medians[0] > medians[1] && medians[1] > medians[2];
    println!(
        "[{}] supplement (KL descent, growing support): median grid-KL at t = {checkpoints:?}: {medians:.4?}",
        if descending && medians[2] < 0.05 { "PASS" } else { "FAIL" }
    );
    assert!(
        descending && medians[2] < 0.05,
        "growing-support KL descent medians {medians:.4?}"
    );
}

/// Shared tied-mixture benchmark: 1000 observations drawn at (1, -2) with
/// σx = 2.5, p = 0.5, plus a grid oracle of the resulting bimodal posterior.
struct MixtureBench {
    model: TiedMixture,
    data: Dataset,
    oracle: GridOracle,
    prior_tv: f64,
    modes: [[f64; 2]; 2],
}

static MIXTURE: OnceLock<MixtureBench> = OnceLock::new();

fn mixture_bench() -> &'static MixtureBench {
    MIXTURE.get_or_init(|| {
        let (sigma_x, mix) = (2.5, 0.5);
        let truth = [1.0, -2.0];
        let mut rng = ChaCha20Rng::seed_from_u64(20_260_825);
        let mut rows = Vec::with_capacity(1000);
        for _ in 0..1000 {
            let center = if rng.random_bool(mix) {
                truth[0]
            } else {
                truth[0] + truth[1]
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(center + sigma_x * z);
        }
        let data = Dataset::from_scalar(&rows).unwrap();
        let model = TiedMixture::new(1.0, 1.0, sigma_x, mix).unwrap();
        let axes = vec![
            GridAxis::new(-4.0, 4.0, 80).unwrap(),
            GridAxis::new(-6.0, 6.0, 120).unwrap(),
        ];
        let oracle = build_grid_oracle(&model, &data, axes).unwrap();
        let prior_tv = oracle
            .total_variation(|t| model.log_prior(t))
            .unwrap();
        let argmax_side = |side: f64| {
            (0..oracle.num_cells())
                .filter(|&c| oracle.cell_center(c)[0] * side > 0.0)
                .max_by(|&a, &b| oracle.mass(a).total_cmp(&oracle.mass(b)))
                .map(|c| {
                    let p = oracle.cell_center(c);
                    [p[0], p[1]]
                })
                .unwrap()
        };
        let modes = [argmax_side(1.0), argmax_side(-1.0)];
        MixtureBench {
            model,
            data,
            oracle,
            prior_tv,
            modes,
        }
    })
}

/// Density ratio between the weakest mode region and the global maximum of
/// the estimate, plus its grid-TV to the oracle.
fn mixture_estimate_scores(bench: &MixtureBench, kde: &KdeDensity) -> (f64, f64) {
    let tv = bench
        .oracle
        .total_variation(|t| kde.log_density(t))
        .unwrap();
    let mut global_max = f64::NEG_INFINITY;
    let mut mode_max = [f64::NEG_INFINITY; 2];
    for c in 0..bench.oracle.num_cells() {
        let p = bench.oracle.cell_center(c);
        let ld = kde.log_density(&p);
        global_max = global_max.max(ld);
        for (k, mode) in bench.modes.iter().enumerate() {
            if (p[0] - mode[0]).abs() <= 0.5 && (p[1] - mode[1]).abs() <= 0.5 {
                mode_max[k] = mode_max[k].max(ld);
            }
        }
    }
    let weakest = mode_max[0].min(mode_max[1]);
    ((weakest - global_max).exp(), tv)
}

/// Per-seed (weakest-mode ratio, grid TV) for the criterion-4 PMD runs,
/// shared with criterion 5.
static PMD_MIXTURE_SCORES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();

fn pmd_mixture_scores() -> &'static Vec<(f64, f64)> {
    PMD_MIXTURE_SCORES.get_or_init(|| {
        let bench = mixture_bench();
        (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let config = PmdConfig {
                    strategy: Strategy::WeightedKde,
                    step: StepSchedule::InverseT { eta: 1.0 },
                    particles: ParticleSchedule::Fixed { m: 1500 },
                    batch_size: 10,
                    minibatch: MinibatchMode::Replacement,
                    // 5 passes over the 1000 observations at batch 10
                    iterations: 500,
                    bandwidth: BandwidthSpec::MedianTrick { beta: 2.0, factor: 0.1 },
                    rng_seed: 900 + seed,
                    record_iterations: Some(vec![500]),
                };
                let result = run_pmd(&bench.model, &bench.data, &config, None).unwrap();
                let kde = result.density.kde().unwrap().clone();
                mixture_estimate_scores(bench, &kde)
            })
            .collect()
    })
}

#[test]
fn criterion_4_mixture_bimodality() {
    let start = Instant::now();
    let bench = mixture_bench();
    let scores = pmd_mixture_scores();
    let mut ratios: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let mut tvs: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let med_ratio = median(&mut ratios);
    let med_tv = median(&mut tvs);
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "mixture bimodality",
        med_ratio >= 0.1 && med_tv <= 0.5 * bench.prior_tv && secs < 300.0,
        &format!("median weakest-mode/max density ratio {med_ratio:.2} (want >= 0.1); median TV {med_tv:.3} vs 0.5x prior TV {:.3}, {secs:.0} s", 0.5 * bench.prior_tv),
    );
}

#[test]
fn criterion_5_sgld_mode_coverage() {
    let bench = mixture_bench();
    let mut pmd_tvs: Vec<f64> = pmd_mixture_scores().iter().map(|s| s.1).collect();
    let sgld_results: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let config = SgldConfig {
                step_a: 0.05,
                step_b: 10.0,
                step_kappa: 0.55,
                batch_size: 10,
                minibatch: MinibatchMode::Replacement,
                iterations: 500,
                burn_in: 100,
                thin: 1,
                rng_seed: 1700 + seed,
                record_iterations: Some(vec![500]),
            };
            let result = run_sgld(&bench.model, &bench.data, &config, None).unwrap();
            let kde = cloud_to_kde(&result.density.cloud(), 2.0).unwrap();
            bench
                .oracle
                .total_variation(|t| kde.log_density(t))
                .unwrap()
        })
        .collect();
    let mut sgld_tvs = sgld_results;
    let sgld_med = median(&mut sgld_tvs);
    let pmd_med = median(&mut pmd_tvs);
    report(
        5,
        "single-chain baseline misses a mode",
        sgld_med > pmd_med && sgld_med >= 0.3,
        &format!("median Langevin-chain TV {sgld_med:.3} vs mirror-descent TV {pmd_med:.3} (want baseline larger and >= 0.3)"),
    );
}

fn logistic_rows(rng: &mut ChaCha20Rng, theta: &[f64], n: usize) -> Dataset {
    let d = theta.len();
    let mut rows = Vec::with_capacity(n * (d + 1));
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let margin: f64 = theta.iter().zip(&x).map(|(t, xi)| t * xi).sum();
        let y = if rng.random_bool(sigmoid(margin)) {
            1.0
        } else {
            -1.0
        };
        rows.extend_from_slice(&x);
        rows.push(y);
    }
    Dataset::new(Array2::from_shape_vec((n, d + 1), rows).unwrap()).unwrap()
}

#[test]
fn criterion_6_logistic_predictive_accuracy() {
    let start = Instant::now();
    let theta_true = [1.0, -1.5, 0.5, 2.0, -0.75];
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    let train = logistic_rows(&mut rng, &theta_true, 5000);
    let holdout = logistic_rows(&mut rng, &theta_true, 1000);
    let model = make_logistic(&train, 1.0).unwrap();

    let map = logistic_map(&model, &train, 100, 1e-10).unwrap();
    let map_cloud = ParticleCloud::uniform(map.clone().insert_axis(ndarray::Axis(0))).unwrap();
    let map_acc = predictive_accuracy(&model, &map_cloud, &holdout).unwrap();

    let config = PmdConfig {
        strategy: Strategy::SwitchAt { t_switch: 100 },
        step: StepSchedule::InverseT { eta: 1.0 },
        particles: ParticleSchedule::Fixed { m: 1000 },
        // one pass over the 5000 rows = 100 iterations at batch 50
        batch_size: 50,
        minibatch: MinibatchMode::Replacement,
        iterations: 300,
        bandwidth: BandwidthSpec::MedianTrick { beta: 2.0, factor: 0.1 },
        rng_seed: 66,
        record_iterations: Some(vec![300]),
    };
    let result = run_pmd(&model, &train, &config, None).unwrap();
    let pmd_acc = predictive_accuracy(&model, &result.density.cloud(), &holdout).unwrap();
    let gap = (pmd_acc - map_acc).abs();
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "logistic predictive accuracy",
        gap <= 0.02 && secs < 180.0,
        &format!("posterior-predictive accuracy {pmd_acc:.3} vs deterministic optimum {map_acc:.3} (gap {gap:.3}, want <= 0.02), {secs:.1} s"),
    );
}

#[test]
fn criterion_7_kde_l1_consistency() {
    let model = ConjugateGaussian::new(array![0.0], 1.0, 1.0).unwrap();
    let data = Dataset::from_scalar(&[2.0]).unwrap();
    let axes = vec![GridAxis::new(-4.0, 6.0, 1500).unwrap()];
    let oracle = build_grid_oracle(&model, &data, axes).unwrap();
    let log_vol = oracle.log_cell_volume();
    let grid_l1 = |kde: &KdeDensity| -> f64 {
        (0..oracle.num_cells())
            .map(|c| {
                let q = (kde.log_density(&oracle.cell_center(c)) + log_vol).exp();
                (oracle.mass(c) - q).abs()
            })
            .sum()
    };
    let sizes = [64usize, 256, 1024, 4096];
    let medians: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let mut errs: Vec<f64> = (0..10u64)
                .into_par_iter()
                .map(|seed| {
                    let mut rng = ChaCha20Rng::seed_from_u64(7000 + 13 * seed + m as u64);
                    let cloud = ParticleCloud::uniform(model.sample_prior(&mut rng, m)).unwrap();
                    let full: Vec<usize> = (0..data.len()).collect();
                    let weighted =
                        reweight_particles(&cloud, &model, &data, &full, 1.0).unwrap();
                    let kde =
                        smooth_cloud(&weighted, &BandwidthSpec::MedianTrick { beta: 2.0, factor: 0.1 }).unwrap();
                    grid_l1(&kde)
                })
                .collect();
            median(&mut errs)
        })
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] < w[0]);
    report(
        7,
        "weighted-kernel L1 consistency",
        monotone,
        &format!("median grid-L1 {medians:.3?} over m = {sizes:?} (want strictly decreasing)"),
    );
}

#[test]
fn criterion_8_strong_convexity() {
    // 1-D grid functional: L(q) = <q, -Σ log lik> + KL(q ‖ prior);
    // the Bregman gap of L must dominate KL(q1 ‖ q2)
    let model = ConjugateGaussian::new(array![0.0], 1.0, 1.0).unwrap();
    let data = Dataset::from_scalar(&[1.0, -0.5]).unwrap();
    let cells = 2048usize;
    let (lo, hi) = (-8.0, 8.0);
    let vol = (hi - lo) / cells as f64;
    let centers: Vec<f64> = (0..cells)
        .map(|c| lo + (c as f64 + 0.5) * vol)
        .collect();
    let neg_lik: Vec<f64> = centers
        .iter()
        .map(|&t| {
            -(0..data.len())
                .map(|r| model.log_likelihood(&[t], data.row(r)))
                .sum::<f64>()
        })
        .collect();
    let log_prior_mass: Vec<f64> = centers.iter().map(|&t| model.log_prior(&[t]) + vol.ln()).collect();

    let mut rng = ChaCha20Rng::seed_from_u64(88);
    let random_density = |rng: &mut ChaCha20Rng| -> Vec<f64> {
        let w: f64 = rng.random_range(0.2..0.8);
        let (m1, m2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (s1, s2) = (rng.random_range(0.4..2.0), rng.random_range(0.4..2.0));
        let mut mass: Vec<f64> = centers
            .iter()
            .map(|&t| {
                let g1 = (-0.5 * ((t - m1) / s1).powi(2)).exp() / s1;
                let g2 = (-0.5 * ((t - m2) / s2).powi(2)).exp() / s2;
                w * g1 + (1.0 - w) * g2
            })
            .collect();
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|v| *v /= total);
        mass
    };
    let objective = |q: &[f64]| -> f64 {
        q.iter()
            .enumerate()
            .map(|(c, &qc)| qc * neg_lik[c] + qc * (qc.ln() - log_prior_mass[c]))
            .sum()
    };

    let mut worst_slack = f64::INFINITY;
    for _ in 0..100 {
        let q1 = random_density(&mut rng);
        let q2 = random_density(&mut rng);
        // functional gradient of L at q2, evaluated on the grid
        let grad2: Vec<f64> = (0..cells)
            .map(|c| neg_lik[c] + (q2[c].ln() - log_prior_mass[c]) + 1.0)
            .collect();
        let inner: f64 = (0..cells).map(|c| (q1[c] - q2[c]) * grad2[c]).sum();
        let gap = objective(&q1) - objective(&q2) - inner;
        let kl: f64 = (0..cells).map(|c| q1[c] * (q1[c] / q2[c]).ln()).sum();
        worst_slack = worst_slack.min(gap - kl);
    }
    report(
        8,
        "strong convexity of the objective",
        worst_slack >= -1e-6,
        &format!("min over 100 density pairs of Bregman gap minus KL = {worst_slack:.2e} (want >= -1e-6)"),
    );
}

fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..theta.len())
        .map(|j| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[j] += h;
            minus[j] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_9_exactness_and_invariance() {
    let model = ConjugateGaussian::new(array![0.0], 1.0, 1.0).unwrap();
    let data = Dataset::from_scalar(&[1.0, 2.0]).unwrap();
    let full: Vec<usize> = (0..data.len()).collect();
    let mut failures: Vec<String> = Vec::new();

    // zero-step particle update is the identity, bit for bit
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let cloud = ParticleCloud::new(
        model.sample_prior(&mut rng, 64),
        Array1::linspace(-1.0, 2.0, 64),
    )
    .unwrap();
    let frozen = reweight_particles(&cloud, &model, &data, &full, 0.0).unwrap();
    if frozen.log_weights() != cloud.log_weights() || frozen.points() != cloud.points() {
        failures.push("zero-step particle fixpoint".into());
    }

    // zero-step kernel update: uniform weights, and its grid-L1 to the
    // input density vanishes as the resample count grows
    let kde = KdeDensity::new(array![[0.2], [1.4], [-0.6]], array![0.0, -0.7, -0.2], 0.45).unwrap();
    let l1_at = |m_next: usize| -> f64 {
        let h_next = BandwidthRule::new(2.0, 0.5).unwrap().bandwidth(m_next, 1);
        let mut l1s: Vec<f64> = (0..5u64)
            .map(|seed| {
                let mut rng = ChaCha20Rng::seed_from_u64(500 + seed);
                let next = kde_prox_step(
                    &kde, &model, &data, &full, 0.0, m_next, h_next, &mut rng,
                )
                .unwrap();
                if next
                    .to_cloud()
                    .weights()
                    .iter()
                    .any(|w| (w - 1.0 / m_next as f64).abs() > 1e-12)
                {
                    return f64::INFINITY;
                }
                let (glo, ghi, n) = (-6.0, 8.0, 1400);
                let dv = (ghi - glo) / n as f64;
                (0..n)
                    .map(|i| {
                        let t = [glo + (i as f64 + 0.5) * dv];
                        dv * (kde.density(&t) - next.density(&t)).abs()
                    })
                    .sum()
            })
            .collect();
        median(&mut l1s)
    };
    let (l1_small, l1_large) = (l1_at(256), l1_at(4096));
    if !(l1_large < l1_small && l1_large < 0.1) {
        failures.push(format!(
            "zero-step kernel fixpoint (grid-L1 {l1_small:.3} at m=256 -> {l1_large:.3} at m=4096)"
        ));
    }

    // scaling every per-datum likelihood by a constant cannot move weights
    struct Scaled<'a> {
        inner: &'a ConjugateGaussian,
        log_c: f64,
    }
    impl Model for Scaled<'_> {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn row_dim(&self) -> usize {
            self.inner.row_dim()
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            self.inner.log_prior(theta)
        }
        fn log_likelihood(&self, theta: &[f64], row: &[f64]) -> f64 {
            self.inner.log_likelihood(theta, row) + self.log_c
        }
        fn sample_prior(&self, rng: &mut dyn rand::RngCore, count: usize) -> Array2<f64> {
            self.inner.sample_prior(rng, count)
        }
    }
    let scaled = Scaled {
        inner: &model,
        log_c: 57.3_f64.ln(),
    };
    let base = reweight_particles(&cloud, &model, &data, &full, 0.7).unwrap();
    let tilted = reweight_particles(&cloud, &scaled, &data, &full, 0.7).unwrap();
    let scale_gap = base
        .weights()
        .iter()
        .zip(tilted.weights().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if scale_gap > 1e-12 {
        failures.push(format!("likelihood-scaling invariance (gap {scale_gap:.1e})"));
    }

    // adding a constant to all log-weights cannot move the normalization
    let lw = [-3.0, 0.2, 1.7, -0.4];
    let shifted: Vec<f64> = lw.iter().map(|l| l + 123.456).collect();
    let shift_gap = normalize_log_weights(&lw)
        .unwrap()
        .iter()
        .zip(normalize_log_weights(&shifted).unwrap().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if shift_gap > 1e-12 {
        failures.push(format!("log-weight shift invariance (gap {shift_gap:.1e})"));
    }

    // weights normalize to the simplex
    let simplex_gap = (base.weights().sum() - 1.0).abs();
    if simplex_gap > 1e-12 {
        failures.push(format!("simplex normalization (gap {simplex_gap:.1e})"));
    }

    // a smoothed density integrates to one
    let smoothed = smooth_cloud(&base, &BandwidthSpec::MedianTrick { beta: 2.0, factor: 0.1 }).unwrap();
    let (glo, ghi, n) = (-10.0, 10.0, 4000);
    let dv = (ghi - glo) / n as f64;
    let mass: f64 = (0..n)
        .map(|i| dv * smoothed.density(&[glo + (i as f64 + 0.5) * dv]))
        .sum();
    if (mass - 1.0).abs() > 1e-3 {
        failures.push(format!("kernel density unit mass (mass {mass:.5})"));
    }

    // analytic gradients match central differences
    let mixture = TiedMixture::new(1.0, 1.0, 2.5, 0.5).unwrap();
    let logistic = LogisticRegression::new(2, 1.0).unwrap();
    let models: [(&dyn Model, Vec<f64>, Vec<f64>); 3] = [
        (&model, vec![0.7], vec![1.3]),
        (&mixture, vec![0.9, -1.8], vec![0.4]),
        (&logistic, vec![0.5, -1.1], vec![0.8, -0.3, 1.0]),
    ];
    let mut grad_gap: f64 = 0.0;
    for (m, theta, row) in &models {
        let g_prior = m.grad_log_prior(theta).unwrap();
        let fd_prior = central_difference(|t| m.log_prior(t), theta);
        let g_lik = m.grad_log_likelihood(theta, row).unwrap();
        let fd_lik = central_difference(|t| m.log_likelihood(t, row), theta);
        for j in 0..theta.len() {
            grad_gap = grad_gap
                .max((g_prior[j] - fd_prior[j]).abs())
                .max((g_lik[j] - fd_lik[j]).abs());
        }
    }
    if grad_gap > 1e-4 {
        failures.push(format!("gradient finite-difference match (gap {grad_gap:.1e})"));
    }

    report(
        9,
        "exactness and invariance suite",
        failures.is_empty(),
        &if failures.is_empty() {
            format!(
                "fixpoints, scaling/shift invariance, simplex, unit mass, gradients all hold (kernel fixpoint L1 {l1_small:.3} -> {l1_large:.3})"
            )
        } else {
            format!("failed: {}", failures.join("; "))
        },
    );
}
