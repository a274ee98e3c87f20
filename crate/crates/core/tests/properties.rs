use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twostage_bench::bench_mean::benchmark_raked;
use twostage_bench::bench_var::bayes_spread;
use twostage_bench::instances::{random_problem, LossChoice};
use twostage_bench::weights::LossScheme;
use twostage_bench::{
    benchmark_mean, benchmark_mean_and_variability, default_variability_targets, make_loss_weights, pmse,
    BenchmarkProblem, LossWeights, VariabilityTargets,
};

fn problem(seed: u64, choice: usize) -> BenchmarkProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_problem(&mut rng, 5, 6, LossChoice::ALL[choice]).unwrap()
}

/// Loss weights with `xi = w` and random area terms.
fn unit_weight_loss(p: &BenchmarkProblem, phi_scale: f64) -> LossWeights {
    LossWeights {
        unit_loss: p.constraint.unit_weights.clone(),
        area_loss: (0..p.num_areas()).map(|i| phi_scale * (1.0 + i as f64)).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn benchmarked_estimates_meet_both_constraints(seed in any::<u64>(), choice in 0usize..5) {
        let p = problem(seed, choice);
        let sol = benchmark_mean(&p).unwrap();
        let r = sol.residuals(&p.constraint);
        prop_assert!(r.within(1e-10), "{r:?}");
    }

    #[test]
    fn unit_weight_loss_gives_equal_shifts_within_areas(seed in any::<u64>(), phi in 0.0f64..20.0) {
        let base = problem(seed, 0);
        let p = base.with_loss(unit_weight_loss(&base, phi));
        let sol = benchmark_mean(&p).unwrap();
        for (i, area) in sol.unit_estimates.iter().enumerate() {
            let shift0 = area[0] - p.bayes_estimates[i][0];
            for (e, b) in area.iter().zip(&p.bayes_estimates[i]) {
                prop_assert!(((e - b) - shift0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn raked_loss_reproduces_raking(seed in any::<u64>(), g_extra in 0.01f64..5.0) {
        let base = problem(seed, 0);
        let g = base.constraint.area_weights.iter().map(|e| 1.0 / e).fold(0.0, f64::max) + g_extra;
        let loss = make_loss_weights(
            LossScheme::Raked { g: Some(g) },
            &base.bayes_estimates,
            &base.constraint,
            None,
        ).unwrap();
        let general = benchmark_mean(&base.with_loss(loss)).unwrap();
        let raked = benchmark_raked(&base).unwrap();
        for (a, b) in general.unit_estimates.iter().flatten().zip(raked.unit_estimates.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for (a, b) in general.area_estimates.iter().zip(&raked.area_estimates) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn variability_benchmark_shares_area_estimates(seed in any::<u64>(), phi in 0.0f64..20.0, stretch in 0.0f64..4.0) {
        let base = problem(seed, 0);
        let p = base.with_loss(unit_weight_loss(&base, phi));
        let h: Vec<f64> = bayes_spread(&p.bayes_estimates, &p.constraint).iter().map(|d| stretch * d).collect();
        let targets = VariabilityTargets::new(h.clone(), &p).unwrap();
        let var = benchmark_mean_and_variability(&p, &targets).unwrap();
        let mean = benchmark_mean(&p).unwrap();
        for (a, b) in var.area_estimates.iter().zip(&mean.area_estimates) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(var.residuals(&p.constraint).within(1e-10));
        let spread = bayes_spread(&var.unit_estimates, &p.constraint);
        for (s, h) in spread.iter().zip(&h) {
            prop_assert!((s - h).abs() <= 1e-10);
        }
    }

    #[test]
    fn pmse_is_variance_plus_squared_shift(seed in any::<u64>(), choice in 0usize..5) {
        let p = problem(seed, choice);
        let post = p.posterior.as_ref().unwrap();
        let sol = pmse(&benchmark_mean(&p).unwrap(), post).unwrap();
        let area = sol.area_pmse.as_ref().unwrap();
        for i in 0..p.num_areas() {
            let expected = post.var_area[i] + (sol.area_estimates[i] - post.mean_area[i]).powi(2);
            prop_assert!((area[i] - expected).abs() <= 1e-12);
            prop_assert!(area[i] >= post.var_area[i]);
        }
        let units = sol.unit_pmse.as_ref().unwrap();
        for (i, a) in units.iter().enumerate() {
            for (j, v) in a.iter().enumerate() {
                let expected = post.var_theta[i][j] + (sol.unit_estimates[i][j] - post.mean_theta[i][j]).powi(2);
                prop_assert!((v - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn default_variability_targets_are_nonnegative(seed in any::<u64>()) {
        let p = problem(seed, 0);
        let t = default_variability_targets(p.posterior.as_ref().unwrap(), &p.constraint).unwrap();
        prop_assert!(t.h.iter().all(|h| *h >= 0.0));
        prop_assert!(t.d.iter().all(|d| *d >= 0.0));
    }
}

/// The posterior expectation of the weighted spread equals its brute-force
/// average over draws from a Gaussian with the same moments.
#[test]
fn default_variability_target_matches_monte_carlo() {
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};
    use twostage_bench::{ConstraintWeights, PosteriorSummary};

    let w = vec![0.2, 0.5, 0.3];
    let mean = vec![0.2, 0.35, 0.1];
    let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.02, 0.0, 0.03, 0.08, -0.01, 0.0, 0.02, 0.12]);
    let cov = &a * a.transpose();
    let c = ConstraintWeights {
        unit_weights: vec![w.clone()],
        area_weights: vec![1.0],
        target: 0.2,
    };
    let post = PosteriorSummary::from_moments(vec![mean.clone()], vec![cov], &c.unit_weights, 1);
    let h = default_variability_targets(&post, &c).unwrap().h[0];

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = DVector::from_vec(mean);
    let n = 200_000;
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let z = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let t = &m + &a * z;
            bayes_spread(&[t.iter().copied().collect()], &c)[0]
        })
        .collect();
    let avg = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!((avg - h).abs() < 4.0 * sd / (n as f64).sqrt(), "mc {avg} vs {h}");
}
