use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twostage_bench::instances::{as_multi, random_multi_problem, random_problem, LossChoice};
use twostage_bench::oracle::{encode_theorem1, encode_theorem3, solve_kkt, solve_projected_cg, unstack};
use twostage_bench::{benchmark_mean, benchmark_mean_multi};

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    r.set_stream(stream);
    r
}

#[test]
fn scalar_closed_form_matches_kkt_for_every_loss_choice() {
    let mut worst: f64 = 0.0;
    for k in 0..250 {
        let choice = LossChoice::ALL[k % LossChoice::ALL.len()];
        let problem = random_problem(&mut rng(k as u64), 5, 6, choice).unwrap();
        let closed = benchmark_mean(&problem).unwrap();
        let qp = encode_theorem1(&problem).unwrap();
        let sizes: Vec<usize> = problem.bayes_estimates.iter().map(Vec::len).collect();
        let x = solve_kkt(&qp).unwrap();
        let oracle = unstack(&x, &sizes);
        for (a, b) in closed.unit_estimates.iter().flatten().zip(oracle.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        // Neither solution has a lower objective than the other.
        let closed_x = DVector::from_iterator(x.len(), closed.unit_estimates.iter().flatten().copied());
        assert!((qp.objective(&closed_x) - qp.objective(&x)).abs() <= 1e-9);
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn kkt_agrees_with_projected_conjugate_gradient() {
    for k in 0..40 {
        let choice = LossChoice::ALL[k % LossChoice::ALL.len()];
        let problem = random_problem(&mut rng(1000 + k as u64), 5, 6, choice).unwrap();
        let qp = encode_theorem1(&problem).unwrap();
        let direct = solve_kkt(&qp).unwrap();
        let iterative = solve_projected_cg(&qp, 1e-13, 10_000).unwrap();
        let dev = (&direct - &iterative).amax();
        assert!(dev <= 1e-7, "instance {k}: {dev:e}");
    }
}

#[test]
fn matrix_closed_form_matches_kkt() {
    for dim in 1..=3 {
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let problem = random_multi_problem(&mut rng((dim * 10_000 + k) as u64), dim, 5, 6);
            let closed = benchmark_mean_multi(&problem).unwrap();
            let x = solve_kkt(&encode_theorem3(&problem).unwrap()).unwrap();
            let stacked: Vec<f64> = closed
                .unit_estimates
                .iter()
                .flatten()
                .flat_map(|v| v.iter().copied())
                .collect();
            worst = worst.max((DVector::from_vec(stacked) - x).amax());
        }
        assert!(worst <= 1e-9, "dim {dim}: max deviation {worst:e}");
    }
}

#[test]
fn one_dimensional_matrix_form_reduces_to_scalar() {
    for k in 0..200 {
        let choice = LossChoice::ALL[k % LossChoice::ALL.len()];
        let problem = random_problem(&mut rng(50_000 + k as u64), 5, 6, choice).unwrap();
        let scalar = benchmark_mean(&problem).unwrap();
        let multi = as_multi(&problem);
        let matrix = benchmark_mean_multi(&multi).unwrap();
        for (a, b) in scalar
            .unit_estimates
            .iter()
            .flatten()
            .zip(matrix.unit_estimates.iter().flatten())
        {
            assert!((a - b[0]).abs() <= 1e-10);
        }
        for (a, b) in scalar.area_estimates.iter().zip(&matrix.area_estimates) {
            assert!((a - b[0]).abs() <= 1e-10);
        }
        // The two encodings describe the same QP.
        let q1 = encode_theorem1(&problem).unwrap();
        let q3 = encode_theorem3(&multi).unwrap();
        assert!((&q1.q - &q3.q).amax() <= 1e-15);
        assert!((&q1.constraints - &q3.constraints).amax() <= 1e-15);
    }
}

#[test]
fn target_equal_to_bayes_aggregate_leaves_estimates_alone() {
    for k in 0..20 {
        let mut problem = random_multi_problem(&mut rng(70_000 + k), 2, 4, 4);
        problem.target = problem.bayes_aggregate();
        let x = solve_kkt(&encode_theorem3(&problem).unwrap()).unwrap();
        let center: Vec<f64> = problem
            .bayes_estimates
            .iter()
            .flatten()
            .flat_map(|v| v.iter().copied())
            .collect();
        assert!((x - DVector::from_vec(center)).amax() <= 1e-10);
    }
}
