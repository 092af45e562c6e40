mod common;

use proptest::prelude::*;
use rand::Rng;
use thsq_core::control::{
    build_toy_model, fidelity, fidelity_gradient, lie_rank, optimize, BilinearSystem, ControlProblem, SystemKind,
};
use thsq_core::evolution::TimeGrid;
use thsq_core::field::ControlField;
use thsq_core::linalg::{cvector, diag, mat_exp, real_matrix, sigma_x, sigma_z, CMatrix, CVector, I};

fn qubit_problem(amplitudes: Vec<f64>, t: f64, steps: usize) -> ControlProblem {
    let sys = BilinearSystem::new(SystemKind::Hermitian, sigma_z(), vec![sigma_x()]).unwrap();
    let u = ControlField::new(t, amplitudes).unwrap();
    let e0 = cvector(&[(1.0, 0.0), (0.0, 0.0)]);
    let e1 = cvector(&[(0.0, 0.0), (1.0, 0.0)]);
    ControlProblem::new(sys, None, vec![u], e0, e1, TimeGrid::new(t, steps, 2).unwrap()).unwrap()
}

/// Top-right block of `exp([[A, E], [0, A]])`: the derivative of `exp` at `A` along `E`.
fn exp_derivative(a: &CMatrix, e: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut block = CMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((n, n), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).copy_from(e);
    mat_exp(&block).view((0, n), (n, n)).into_owned()
}

/// Chain-rule gradient through the exact interval propagators.
fn exact_gradient(amplitudes: &[f64], t: f64, psi0: &CVector, target: &CVector) -> Vec<f64> {
    let m = amplitudes.len();
    let dt = t / m as f64;
    let gens: Vec<CMatrix> = amplitudes
        .iter()
        .map(|u| (sigma_z() + sigma_x().scale(*u)) * (-I * dt))
        .collect();
    let props: Vec<CMatrix> = gens.iter().map(mat_exp).collect();
    let direction = sigma_x() * (-I * dt);
    let evolve = |replace: Option<(usize, &CMatrix)>| {
        let mut psi = psi0.clone();
        for (j, u) in props.iter().enumerate() {
            psi = match replace {
                Some((k, d)) if k == j => d * psi,
                _ => u * psi,
            };
        }
        psi
    };
    let psi_t = evolve(None);
    let overlap = target.dotc(&psi_t);
    let denom = target.norm_squared() * psi_t.norm_squared();
    (0..m)
        .map(|j| {
            let d = exp_derivative(&gens[j], &direction);
            let dpsi = evolve(Some((j, &d)));
            2.0 * (overlap.conj() * target.dotc(&dpsi)).re / denom
        })
        .collect()
}

#[test]
fn finite_difference_gradient_matches_chain_rule() {
    let mut rng = common::rng(17);
    let t = 2.0;
    let amplitudes: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let problem = qubit_problem(amplitudes.clone(), t, 800);
    let fd = fidelity_gradient(&problem, &problem.fields).unwrap();
    let exact = exact_gradient(&amplitudes, t, &problem.initial, &problem.target);
    let diff: f64 = fd.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(diff <= 1e-4 * scale, "fd {fd:?}\nexact {exact:?}");
}

#[test]
fn history_never_decreases() {
    for (seed, start) in [(1u64, 0.2), (2, -0.7), (3, 1.3)] {
        let mut rng = common::rng(seed);
        let amps: Vec<f64> = (0..10).map(|_| start + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let mut problem = qubit_problem(amps, 2.5, 300);
        problem.settings.max_iters = 25;
        let result = optimize(&problem).unwrap();
        assert!(result.history.windows(2).all(|w| w[1] >= w[0]), "{:?}", result.history);
    }
}

fn toy(w: ControlField) -> thsq_core::control::ToyModel {
    let h0 = real_matrix(&[&[0.0, 2.0], &[0.5, 0.0]]);
    build_toy_model(&h0, &diag(&[1.0, -1.0]), &diag(&[1.0, 4.0]), w, 1.0, 1.0).unwrap()
}

#[test]
fn w_channel_is_a_gauge() {
    let t = 2.0;
    let mut rng = common::rng(23);
    let u = ControlField::new(t, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let w_a = ControlField::constant(t, 16, 0.2).unwrap();
    let w_b = ControlField::new(t, (0..16).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    let grid = TimeGrid::new(t, 800, 2).unwrap();
    let e1 = cvector(&[(1.0, 0.0), (0.0, 0.0)]);
    let e2 = cvector(&[(0.3, 0.1), (1.0, 0.0)]);

    let a = toy(w_a).problem(u.clone(), e1.clone(), e2.clone(), grid).unwrap();
    let b = toy(w_b).problem(u, e1, e2, grid).unwrap();
    let pa = a.fidelity_profile(&a.fields).unwrap();
    let pb = b.fidelity_profile(&b.fields).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
    }

    // With w released, its gradient components vanish.
    let mut free = a.clone();
    free.free = vec![true, true];
    let grad = fidelity_gradient(&free, &free.fields).unwrap();
    let (du, dw) = grad.split_at(16);
    assert!(du.iter().any(|g| g.abs() > 1e-3));
    assert!(dw.iter().all(|g| g.abs() <= 1e-6), "{dw:?}");
}

fn hermitian_ops() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..=3, 1usize..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fidelity_is_bounded(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = common::rng(seed);
        let theta = common::random_metric(&mut rng, n, 0.05);
        let psi = common::random_vector(&mut rng, n);
        let phi = common::random_vector(&mut rng, n);
        let f = fidelity(&psi, &phi, &theta).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert!((fidelity(&psi, &psi, &theta).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lie_rank_ignores_order_and_scale((seed, n, k) in hermitian_ops(), scales in prop::collection::vec(0.1..5.0f64, 3), flip in any::<bool>()) {
        let mut rng = common::rng(seed);
        let ops: Vec<CMatrix> = (0..k).map(|_| common::random_hermitian(&mut rng, n)).collect();
        let mut transformed: Vec<CMatrix> = ops
            .iter()
            .zip(&scales)
            .map(|(op, c)| op.scale(if flip { -c } else { *c }))
            .collect();
        transformed.reverse();
        prop_assert_eq!(lie_rank(&ops), lie_rank(&transformed));
    }
}
