use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use twostage_bench::hb_model::{expit, Design, McmcConfig};
use twostage_bench::sim::{run_simulation_study, simulate, SimSpec, StudyOptions};
use twostage_bench::LossScheme;

fn spec() -> SimSpec {
    let x = DMatrix::from_fn(60, 2, |r, c| if c == 0 { 1.0 } else { ((r * 7) % 11) as f64 / 5.0 - 1.0 });
    SimSpec {
        design: Design::new(x, vec![8, 12, 15, 25]).unwrap(),
        beta_true: DVector::from_vec(vec![-0.8, 0.6]),
        sigma2_u_true: 0.3,
        sigma2_e_true: 0.5,
        seed: 21,
        survey_weights: None,
    }
}

fn options() -> StudyOptions {
    StudyOptions::new(
        vec![
            LossScheme::Constant,
            LossScheme::raked(),
            LossScheme::InverseVariance,
            LossScheme::DomainWeighted,
        ],
        McmcConfig {
            iterations: 1500,
            burn_in: 300,
            thin: 3,
            seed: 5,
            chains: 2,
        },
    )
}

/// Mean of `expit(mu + Z)` with `Z ~ N(0, s2)`, by the trapezoid rule.
fn logit_normal_mean(mu: f64, s2: f64) -> f64 {
    let sd = s2.sqrt();
    let n = 40_001;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| {
            let z = lo + k as f64 * h;
            let wt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            wt * expit(mu + sd * z) * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
        / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn simulated_probabilities_have_the_logit_normal_mean() {
    // Replicates of one unit's success probability, drawn the same way the
    // simulator does.
    let s = spec();
    let mu = (s.design.x().row(0) * &s.beta_true)[0];
    let total = s.sigma2_u_true + s.sigma2_e_true;
    let dist = Normal::new(mu, total.sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| expit(dist.sample(&mut rng))).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let exact = logit_normal_mean(mu, total);
    assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt());

    // And the simulator's own probabilities across replicates agree too.
    let reps = 4000;
    let sim_mean = (0..reps)
        .map(|r| simulate(&s, r).unwrap().true_probabilities[0][0])
        .sum::<f64>()
        / reps as f64;
    assert!((sim_mean - exact).abs() < 4.0 * sd / (reps as f64).sqrt());
}

#[test]
fn study_outputs_meet_the_constraints_and_are_deterministic() {
    let s = spec();
    let opts = options();
    let a = run_simulation_study(&s, &opts).unwrap();
    let b = run_simulation_study(&s, &opts).unwrap();
    assert_eq!(a.len(), 1);
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.fit.chains, rb.fit.chains);
        for series in &ra.schemes {
            let r = series.solution.residuals(&ra.fit.constraint);
            assert!(r.within(1e-10), "{}: {r:?}", series.scheme);
            assert_eq!(series.adjustment.len(), 4);
            assert_eq!(series.adjustment, series.difference);
        }
        for (x, y) in ra.schemes.iter().zip(&rb.schemes) {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn zero_correction_gives_zero_differences() {
    let mut opts = options();
    opts.zero_correction = true;
    opts.replicates = 2;
    let reports = run_simulation_study(&spec(), &opts).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        for series in &r.schemes {
            assert!(series.difference.iter().all(|d| d.abs() <= 1e-15), "{}", series.scheme);
        }
    }
}
