use gaussdiss::cluster::{
    cluster_covariance, cluster_unitary, expected_nullifier_covariance, nullifier_covariance, ClusterGraph, Method,
};
use gaussdiss::entanglement::{log_negativity, negativity_from_nu, numeric_negativity};
use gaussdiss::gaussian::{
    purity, random_pure_covariance, random_symplectic, random_unitary, sigma, symplectic_eigenvalues,
    symplectic_from_unitary,
};
use gaussdiss::lyapunov::{integrate_covariance, lyapunov_residual, solve_lyapunov, IntegrationPolicy};
use gaussdiss::matrix::{max_abs, symmetrize, RMat};
use gaussdiss::switching::{make_schedule, realize_lasers, run_schedule, StagePolicy};
use gaussdiss::system::{pure_coupling_from_covariance, target_steady_state, EprParams, TargetSystem};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random drift with spectral abscissa at most −0.5.
fn random_hurwitz(r: &mut ChaCha8Rng, dim: usize) -> RMat {
    let m = RMat::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
    let shift = m.norm() + 0.5;
    m - RMat::identity(dim, dim) * shift
}

fn random_graph(r: &mut ChaCha8Rng, n: usize) -> ClusterGraph {
    let m = RMat::from_fn(n, n, |_, _| r.random_range(-2.0..2.0));
    ClusterGraph::new(symmetrize(&m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constructed_symplectics_preserve_sigma(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let s = symplectic_from_unitary(&random_unitary(&mut r, n)).unwrap();
        let sg = sigma(n);
        prop_assert!(max_abs(&(&s * &sg * s.transpose() - &sg)) <= 1e-10);
        prop_assert!(max_abs(&(&s * s.transpose() - RMat::identity(2 * n, 2 * n))) <= 1e-10);
        let t = random_symplectic(&mut r, n, 1.0);
        prop_assert!(max_abs(&(&t * &sg * t.transpose() - &sg)) <= 1e-10);
    }

    #[test]
    fn purity_one_iff_symplectic_spectrum_half(seed in any::<u64>(), n in 1usize..5, heat in 0.0..0.5f64) {
        let mut r = rng(seed);
        let v = random_pure_covariance(&mut r, n, 0.8) * (1.0 + heat);
        let pure_by_det = (purity(&v).unwrap() - 1.0).abs() < 1e-8;
        let pure_by_nu = symplectic_eigenvalues(&v).unwrap().iter().all(|x| (x - 0.5).abs() < 1e-8);
        prop_assert_eq!(pure_by_det, pure_by_nu);
        prop_assert_eq!(pure_by_det, heat < 1e-9);
    }

    #[test]
    fn solver_residual_contract(seed in any::<u64>(), dim in 1usize..17) {
        let mut r = rng(seed);
        let a = random_hurwitz(&mut r, dim);
        let b = RMat::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
        let q = symmetrize(&(&b * b.transpose() * 0.5));
        let v = solve_lyapunov(&a, &q).unwrap();
        prop_assert!(lyapunov_residual(&a, &q, &v) <= 1e-9 * (1.0 + max_abs(&q)));
    }

    #[test]
    fn rescaled_coupling_keeps_steady_state(seed in any::<u64>(), n in 1usize..4, s in 0.1..10.0f64) {
        let mut r = rng(seed);
        let v = random_pure_covariance(&mut r, n, 0.7);
        let c = pure_coupling_from_covariance(&v).unwrap();
        let v1 = target_steady_state(&TargetSystem::dissipative(c.clone()).unwrap()).unwrap();
        let v2 = target_steady_state(&TargetSystem::dissipative(c.scaled(s).unwrap()).unwrap()).unwrap();
        prop_assert!(max_abs(&(&v1 - &v2)) < 1e-8 * (1.0 + max_abs(&v1)));
        prop_assert!((purity(&v1).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn ideal_epr_is_pure_and_maximally_entangled(r in 0.0..0.98f64, kappa in 0.05..5.0f64) {
        let p = EprParams::new(r, kappa, 0.0, 1.0).unwrap();
        let rep = numeric_negativity(&p).unwrap();
        prop_assert!((rep.e_n - 2.0 * r.atanh()).abs() < 1e-7);
        let v = gaussdiss::entanglement::epr_target_covariance(&p).unwrap();
        prop_assert!((purity(&v).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn negativity_is_nonnegative(seed in any::<u64>(), heat in 0.0..2.0f64) {
        let mut r = rng(seed);
        let v = random_pure_covariance(&mut r, 2, 1.0) * (1.0 + heat);
        let rep = log_negativity(&v).unwrap();
        prop_assert!(rep.e_n >= 0.0 && rep.nu > 0.0);
        if rep.nu >= 0.5 {
            prop_assert_eq!(rep.e_n, 0.0);
        }
        prop_assert_eq!(negativity_from_nu(0.5 + heat), 0.0);
    }

    #[test]
    fn cluster_witnesses_and_purity(seed in any::<u64>(), n in 1usize..9, xi in 0.1..2.0f64) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, n);
        for method in [Method::Polar, Method::GramSchmidt] {
            let u = cluster_unitary(&g, method, None).unwrap();
            prop_assert!(u.witness_defect(&g) <= 1e-9);
            prop_assert!(u.unitarity_defect() <= 1e-9);
            match method {
                Method::Polar => {
                    prop_assert!(max_abs(&(&u.r - u.r.transpose())) <= 1e-12);
                    prop_assert!(SymmetricEigen::new(u.r.clone()).eigenvalues.min() >= 1.0 - 1e-12);
                }
                Method::GramSchmidt => {
                    for i in 0..n {
                        prop_assert!(u.r[(i, i)] > 0.0);
                        for j in (i + 1)..n {
                            prop_assert_eq!(u.r[(i, j)], 0.0);
                        }
                    }
                }
            }
            let state = cluster_covariance(&u, xi).unwrap();
            prop_assert!((state.purity().unwrap() - 1.0).abs() <= 1e-10);
            let nu = symplectic_eigenvalues(&state.cov).unwrap();
            prop_assert!(nu.iter().all(|x| (x - 0.5).abs() <= 1e-9));
            let now = max_abs(&nullifier_covariance(&state, &g).unwrap());
            let later = max_abs(&nullifier_covariance(&cluster_covariance(&u, xi + 1.0).unwrap(), &g).unwrap());
            prop_assert!(later < now);
            prop_assert!(max_abs(&(nullifier_covariance(&state, &g).unwrap() - expected_nullifier_covariance(&g, xi))) <= 1e-9);
        }
    }

    #[test]
    fn lasers_reconstruct_unitary(seed in any::<u64>(), n in 1usize..7, omega in 0.1..10.0f64, r in 0.0..0.99f64) {
        let u = random_unitary(&mut rng(seed), n);
        let ls = realize_lasers(&u, omega, r).unwrap();
        prop_assert!(gaussdiss::matrix::max_abs_c(&(ls.reconstruct_unitary() - &u)) <= 1e-12);
        for s in &ls.settings {
            prop_assert!((s.omega_s - r * s.omega_u).abs() <= 1e-12 * omega);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn integration_agrees_with_solver(seed in any::<u64>(), modes in 1usize..9) {
        let mut r = rng(seed);
        let dim = 2 * modes;
        let a = random_hurwitz(&mut r, dim);
        let b = RMat::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
        let q = symmetrize(&(&b * b.transpose() * 0.5));
        let exact = solve_lyapunov(&a, &q).unwrap();
        let policy = IntegrationPolicy {
            step: IntegrationPolicy::max_step_for(&a, 0.05).unwrap(),
            horizon: 200.0,
            ..IntegrationPolicy::default()
        };
        let traj = integrate_covariance(&a, &b, &(RMat::identity(dim, dim) * 0.5), &policy).unwrap();
        prop_assert!(traj.converged);
        prop_assert!(max_abs(&(&traj.final_v - &exact)) <= 1e-6);
    }

    #[test]
    fn steady_state_is_independent_of_start(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let v = random_pure_covariance(&mut r, n, 0.6);
        let sys = TargetSystem::dissipative(pure_coupling_from_covariance(&v).unwrap()).unwrap();
        let (a, b) = gaussdiss::system::build_target_drift(&sys).unwrap();
        let policy = IntegrationPolicy {
            step: IntegrationPolicy::max_step_for(&a, 0.05).unwrap(),
            horizon: 400.0,
            ..IntegrationPolicy::default()
        };
        for _ in 0..5 {
            let v0 = random_pure_covariance(&mut r, n, 0.8) * r.random_range(1.0..2.0);
            let traj = integrate_covariance(&a, &b, &v0, &policy).unwrap();
            prop_assert!(traj.converged);
            prop_assert!(max_abs(&(&traj.final_v - &v)) <= 1e-7);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn switching_reaches_rotated_squeezed_state(seed in any::<u64>(), n in 1usize..6, r in 0.1..0.9f64) {
        let u = random_unitary(&mut rng(seed), n);
        let tol = 1e-6;
        let schedule = make_schedule(&u, r, 1.0).unwrap();
        let policy = StagePolicy { convergence_tol: tol, ..StagePolicy::default() };
        let out = run_schedule(&(RMat::identity(2 * n, 2 * n) * 0.5), &schedule, 1.0, &policy).unwrap();
        prop_assert!(out.target_distance.unwrap() <= n as f64 * 10.0 * tol);
        prop_assert!(out.purity >= 1.0 - 1e-4);
        for log in &out.log {
            prop_assert!(log.spectator_drift < 10.0 * tol);
        }
    }
}
