use nalgebra::DMatrix;
use proptest::prelude::*;

use varx_lowrank::estimators::loss_gradient;
use varx_lowrank::io;
use varx_lowrank::matspec::{self, RealMatrix, Subspace};
use varx_lowrank::rng::{gaussian_matrix, random_orthonormal, seeded};
use varx_lowrank::theory_lab;
use varx_lowrank::varx_sim::{
    collect_repeated, generate_system, simulate_trajectory, subgaussian_param, trajectory_seed, DistFamily, DistSpec,
    RegressionData, SystemSpec, Trajectory,
};

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..8, 2usize..8, any::<u64>())
}

fn family() -> impl Strategy<Value = DistFamily> {
    prop_oneof![
        Just(DistFamily::Gaussian),
        Just(DistFamily::Uniform),
        Just(DistFamily::Rademacher)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svt_satisfies_the_prox_optimality_condition((rows, cols, seed) in dims(), tau in 0.01f64..2.0) {
        let m = gaussian_matrix(rows, cols, &mut seeded(seed));
        let y = matspec::svt(&m, tau).unwrap();
        let g = &m - &y;
        // M − Y ∈ τ ∂‖Y‖nuc: spectral norm at most τ and aligned with Y
        prop_assert!(matspec::operator_norm(&g).unwrap() <= tau * (1.0 + 1e-10));
        let inner = g.dot(&y);
        prop_assert!((inner - tau * matspec::nuclear_norm(&y).unwrap()).abs() <= 1e-9 * (1.0 + inner.abs()));
    }

    #[test]
    fn norms_are_ordered((rows, cols, seed) in dims()) {
        let m = gaussian_matrix(rows, cols, &mut seeded(seed));
        let op = matspec::operator_norm(&m).unwrap();
        let fro = m.norm();
        let nuc = matspec::nuclear_norm(&m).unwrap();
        let rank = matspec::numerical_rank(&m).unwrap() as f64;
        prop_assert!(op <= fro * (1.0 + 1e-12));
        prop_assert!(fro <= nuc * (1.0 + 1e-12));
        prop_assert!(nuc <= rank.sqrt() * fro * (1.0 + 1e-12));
    }

    #[test]
    fn nuclear_norm_decomposes_over_the_model_subspaces((rows, cols, seed) in dims(), r in 1usize..3) {
        let r = r.min(rows).min(cols);
        let mut rng = seeded(seed);
        let theta = random_orthonormal(rows, r, &mut rng) * random_orthonormal(cols, r, &mut rng).transpose();
        let frame = matspec::subspace_frame(&theta, r).unwrap();
        let a = frame.project(&gaussian_matrix(rows, cols, &mut rng), Subspace::M).unwrap();
        let b = frame.project(&gaussian_matrix(rows, cols, &mut rng), Subspace::MBarPerp).unwrap();
        let lhs = matspec::nuclear_norm(&(&a + &b)).unwrap();
        let rhs = matspec::nuclear_norm(&a).unwrap() + matspec::nuclear_norm(&b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8);
    }

    #[test]
    fn projectors_are_complementary_and_idempotent((rows, cols, seed) in dims()) {
        let mut rng = seeded(seed);
        let theta = gaussian_matrix(rows, 1, &mut rng) * gaussian_matrix(1, cols, &mut rng);
        let frame = matspec::subspace_frame(&theta, 1).unwrap();
        let delta = gaussian_matrix(rows, cols, &mut rng);
        let bar = frame.project(&delta, Subspace::MBar).unwrap();
        let perp = frame.project(&delta, Subspace::MBarPerp).unwrap();
        let scale = delta.norm();
        prop_assert!((&bar + &perp - &delta).norm() <= 1e-12 * scale);
        prop_assert!((frame.project(&perp, Subspace::MBarPerp).unwrap() - &perp).norm() <= 1e-12 * scale);
        prop_assert!(frame.project(&bar, Subspace::MBarPerp).unwrap().norm() <= 1e-12 * scale);
        prop_assert!(matspec::numerical_rank(&bar).unwrap() <= 2);
    }

    #[test]
    fn weak_low_rank_split_respects_the_ball(
        (rows, cols, seed) in dims(),
        q in prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..1.0],
        tau in 0.05f64..3.0,
    ) {
        let theta = gaussian_matrix(rows, cols, &mut seeded(seed));
        let split = matspec::lq_threshold_split(&theta, q, tau).unwrap();
        let radius = matspec::lq_radius(&split.singulars, q);
        prop_assert_eq!(split.within_ball_bounds(q, tau, radius), (true, true));
        prop_assert!(split.singulars.iter().skip(split.head_size).all(|&s| s <= tau));
    }

    #[test]
    fn loss_gradient_difference_is_linear(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let data = RegressionData::new(gaussian_matrix(20, 3, &mut rng), gaussian_matrix(20, 5, &mut rng)).unwrap();
        let theta = gaussian_matrix(5, 3, &mut rng);
        let delta = gaussian_matrix(5, 3, &mut rng);
        let diff = loss_gradient(&(&theta + &delta), &data) - loss_gradient(&theta, &data);
        let expected = data.sample_covariance() * &delta;
        prop_assert!((diff - &expected).norm() <= 1e-12 * (1.0 + expected.norm()));
    }

    #[test]
    fn csv_round_trip_preserves_bits(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
        let m = RealMatrix::from_row_slice(2, 3, &values);
        let back = io::matrix_from_csv(&io::matrix_to_csv(&m).unwrap()).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectories_replay_from_their_recorded_streams(seed in any::<u64>(), fam in family(), t0 in 2usize..6) {
        let model = generate_system(&SystemSpec::new(4, 3, 2), seed).unwrap();
        let input = DistSpec::new(fam, 1.0, 3);
        let noise = DistSpec::new(fam, 0.3, 4);
        let a = simulate_trajectory(&model, t0, &input, Some(&noise), seed ^ 1).unwrap();
        let b = simulate_trajectory(&model, t0, &input, Some(&noise), seed ^ 1).unwrap();
        prop_assert_eq!(&a, &b);
        let replayed = Trajectory::replay(&model, a.inputs.clone(), a.noises.clone()).unwrap();
        prop_assert_eq!(replayed, a);
    }

    #[test]
    fn repeated_rows_come_from_independent_trajectories(seed in any::<u64>(), t0 in 2usize..5) {
        let model = generate_system(&SystemSpec::new(3, 2, 1), seed).unwrap();
        let input = DistSpec::gaussian(1.0, 2);
        let noise = DistSpec::gaussian(0.5, 3);
        let data = collect_repeated(&model, 6, t0, &input, Some(&noise), seed).unwrap();
        for i in [0usize, 5] {
            let traj = simulate_trajectory(&model, t0, &input, Some(&noise), trajectory_seed(seed, i)).unwrap();
            prop_assert_eq!(data.z.row(i).transpose(), traj.regressor(t0 - 1));
            prop_assert_eq!(data.x.row(i).transpose(), traj.states[t0].clone());
        }
        let resid = data.model_residual(&model.theta_star());
        prop_assert!(resid.abs().max() <= 1e-12);
    }

    #[test]
    fn state_scale_grows_with_the_horizon(seed in any::<u64>(), t0 in 2usize..8) {
        let model = generate_system(&SystemSpec::new(4, 3, 2), seed).unwrap();
        let short = subgaussian_param(&model, t0, 1.0, 0.5).unwrap();
        let long = subgaussian_param(&model, t0 + 1, 1.0, 0.5).unwrap();
        prop_assert!(long >= short);
        prop_assert!(short >= 1.0);
    }

    #[test]
    fn weak_rip_is_monotone_in_the_order(seed in any::<u64>(), rows in 10usize..60) {
        let z = gaussian_matrix(rows, 6, &mut seeded(seed));
        let prof = theory_lab::weak_rip_profile(&z, 4, &[1, 2, 4], 0.7, 1.3, 100, seed).unwrap();
        for w in prof.windows(2) {
            prop_assert!(w[0].delta_hat.unwrap_or(1.0) <= w[1].delta_hat.unwrap_or(1.0));
        }
        let exact = theory_lab::spectral_weak_rip(&z, 1, 0.7, 1.3).unwrap();
        prop_assert!(prof.iter().all(|e| e.delta_hat.unwrap_or(1.0) <= exact.delta_hat.unwrap_or(1.0) + 1e-12));
    }

    #[test]
    fn curvature_matches_the_smallest_eigenvalue(seed in any::<u64>(), rows in 8usize..40) {
        let z = gaussian_matrix(rows, 5, &mut seeded(seed));
        let c = theory_lab::curvature_estimate(&z, 3, 10, seed).unwrap();
        let sigma_hat: DMatrix<f64> = z.tr_mul(&z) / rows as f64;
        let (lo, _) = theory_lab::extreme_eigenvalues(&sigma_hat);
        prop_assert!((c.value() - lo.max(0.0)).abs() <= 1e-10 * (1.0 + lo.abs()));
        prop_assert!(c.sampled_min >= c.analytic - 1e-10);
    }
}
