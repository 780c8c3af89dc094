use bayesmet::bound::{analyze, symmetric_eigenvalues, Analysis, BoundOptions};
use bayesmet::measurement::{check_compatibility, common_eigenbasis_povm, validate_povm, Povm};
use bayesmet::models::{
    preset_global_imaging, preset_local_imaging, preset_qubit_network, preset_two_phase_imaging,
    EstimationModel, FlatPrior,
};
use bayesmet::operators::{
    c64, common_eigenbasis, diagonalization_defect, frobenius, random_hermitian,
    random_orthonormal_basis, CMatrix, HermitianOperator, SylvesterSolver,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn presets() -> Vec<(&'static str, EstimationModel)> {
    vec![
        ("qubit γ=1", preset_qubit_network(1.0).unwrap()),
        ("qubit γ=0.5", preset_qubit_network(0.5).unwrap()),
        (
            "global d=2",
            preset_global_imaging(2, 4, 1.0, false).unwrap(),
        ),
        (
            "global d=3",
            preset_global_imaging(3, 5, 1.3, false).unwrap(),
        ),
        ("two-phase n̄=2", preset_two_phase_imaging().unwrap()),
        (
            "local d=2 N=8",
            preset_local_imaging(2, 4, 8, false).unwrap(),
        ),
    ]
}

fn run(model: &EstimationModel) -> Analysis {
    analyze(model, &BoundOptions::default()).unwrap()
}

#[test]
fn classical_error_never_beats_the_quantum_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, model) in presets() {
        let a = run(&model);
        for trial in 0..100 {
            let povm = Povm::from_basis(&random_orthonormal_basis(model.dim(), &mut rng)).unwrap();
            let score = a.classical_score(&povm).unwrap();
            assert!(
                score >= a.bound.value - 1e-9,
                "{name} trial {trial}: Tr(WΣc) = {score} below bound {}",
                a.bound.value
            );
        }
    }
}

#[test]
fn classical_matrix_dominates_sigma_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (name, model) in presets() {
        let a = run(&model);
        for _ in 0..20 {
            let povm = Povm::from_basis(&random_orthonormal_basis(model.dim(), &mut rng)).unwrap();
            let sc =
                bayesmet::bound::classical_matrix_error(&a.moments, &a.averaged, &povm).unwrap();
            let gap = symmetric_eigenvalues(&(sc - &a.sigma_q));
            assert!(gap[0] >= -1e-9, "{name}: Σc − Σq has eigenvalue {}", gap[0]);
        }
    }
}

#[test]
fn sigma_q_is_psd_and_estimator_means_match_the_prior() {
    for (name, model) in presets() {
        let a = run(&model);
        let ev = symmetric_eigenvalues(&a.sigma_q);
        assert!(ev[0] >= -1e-10 * ev.last().unwrap().max(1.0), "{name}");
        for (m, c) in a.bound.estimator_means.iter().zip(model.prior().center()) {
            assert!((m - c).abs() < 1e-9, "{name}: Tr(ρS) = {m}");
        }
        assert_eq!(a.k_matrix, a.k_matrix.transpose());
    }
}

#[test]
fn shifted_priors_keep_the_mean_identity() {
    let model = preset_qubit_network(0.7)
        .unwrap()
        .with_prior(FlatPrior::new(vec![0.3, -0.2], vec![0.4, 0.7]).unwrap())
        .unwrap();
    let a = run(&model);
    assert!((a.bound.estimator_means[0] - 0.3).abs() < 1e-9);
    assert!((a.bound.estimator_means[1] + 0.2).abs() < 1e-9);
    assert!((a.bound.value - a.bound.uncertainty_relation).abs() < 1e-9);
}

#[test]
fn compatible_presets_saturate_and_diagonalize() {
    for (name, model) in presets() {
        let a = run(&model);
        let report = check_compatibility(&a.estimators, 1e-10);
        for i in 0..report.pairwise_norms.len() {
            assert_eq!(report.pairwise_norms[i][i], 0.0);
            for j in 0..i {
                assert_eq!(report.pairwise_norms[i][j], report.pairwise_norms[j][i]);
            }
        }
        if !report.compatible {
            assert!(common_eigenbasis_povm(&a.estimators).is_err(), "{name}");
            continue;
        }
        let povm = common_eigenbasis_povm(&a.estimators).unwrap();
        assert!(validate_povm(povm.elements(), model.dim()).valid, "{name}");
        let ops: Vec<&HermitianOperator> = a.estimators.estimators.iter().collect();
        let basis = common_eigenbasis(&ops, 7, 1e-9).unwrap();
        assert!(diagonalization_defect(&ops, &basis) <= 1e-8, "{name}");
        let score = a.classical_score(&povm).unwrap();
        assert!(
            (score - a.bound.value).abs() < 1e-8,
            "{name}: {score} vs {}",
            a.bound.value
        );
    }
}

#[test]
fn rank_deficient_state_gets_a_null_outcome() {
    // γ = 0 leaves ρ supported on span{|00⟩, |11⟩}
    let model = preset_qubit_network(0.0).unwrap();
    let a = run(&model);
    assert_eq!(a.estimators.support_rank, 2);
    let povm = common_eigenbasis_povm(&a.estimators).unwrap();
    assert_eq!(povm.labels().last().map(String::as_str), Some("null"));
    let score = a.classical_score(&povm).unwrap();
    assert!((score - a.bound.value).abs() < 1e-8);
}

#[test]
fn qubit_optimal_projectors_are_sigma_y_products() {
    let a = run(&preset_qubit_network(1.0).unwrap());
    let povm = common_eigenbasis_povm(&a.estimators).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let s = |sign: f64| nalgebra::DVector::from_vec(vec![c64(r, 0.0), c64(0.0, sign * r)]);
    let mut expected = Vec::new();
    for a1 in [1.0, -1.0] {
        for a2 in [1.0, -1.0] {
            expected.push(HermitianOperator::projector(
                &bayesmet::operators::kron_vec(&s(a1), &s(a2)),
            ));
        }
    }
    for e in &expected {
        let hit = povm
            .elements()
            .iter()
            .any(|p| frobenius(&(p.matrix() - e.matrix())) < 1e-10);
        assert!(hit, "missing |s±,s±⟩ projector");
    }
}

#[test]
fn raising_the_prior_width_raises_the_prior_term() {
    let narrow = run(&preset_global_imaging(2, 8, 1.0, false).unwrap());
    let wide = run(&preset_global_imaging(2, 4, 1.0, false).unwrap());
    assert!(wide.bound.prior_term > narrow.bound.prior_term);
}

fn random_density<R: rand::Rng>(dim: usize, rank: usize, rng: &mut R) -> HermitianOperator {
    let basis = random_orthonormal_basis(dim, rng);
    let mut m = CMatrix::zeros(dim, dim);
    let weights: Vec<f64> = (0..rank).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for (k, w) in weights.iter().enumerate() {
        let v = basis.column(k).into_owned();
        m += (&v * v.adjoint()) * c64(w / total, 0.0);
    }
    HermitianOperator::symmetrize(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sylvester_solution_is_hermitian_and_solves(seed in any::<u64>(), dim in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(dim, dim, &mut rng);
        let bar = random_hermitian(dim, &mut rng);
        let solver = SylvesterSolver::new(&rho, 1e-12).unwrap();
        let s = solver.solve(&bar).unwrap();
        let herm = frobenius(&(s.matrix() - s.matrix().adjoint()));
        prop_assert!(herm <= 1e-12 * s.frobenius().max(1.0));
        prop_assert!(solver.projected_residual(&s, &bar) <= 1e-8 * bar.frobenius().max(1.0));
    }

    #[test]
    fn sylvester_is_linear(seed in any::<u64>(), dim in 2usize..7, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(dim, dim, &mut rng);
        let x = random_hermitian(dim, &mut rng);
        let y = random_hermitian(dim, &mut rng);
        let solver = SylvesterSolver::new(&rho, 1e-12).unwrap();
        let combo = HermitianOperator::symmetrize(x.matrix() * c64(a, 0.0) + y.matrix() * c64(b, 0.0));
        let lhs = solver.solve(&combo).unwrap();
        let rhs = solver.solve(&x).unwrap().matrix() * c64(a, 0.0) + solver.solve(&y).unwrap().matrix() * c64(b, 0.0);
        prop_assert!(frobenius(&(lhs.matrix() - rhs)) <= 1e-9 * lhs.frobenius().max(1.0));
    }

    #[test]
    fn rank_deficient_sylvester_respects_the_support(seed in any::<u64>(), dim in 3usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(dim, dim - 1, &mut rng);
        let solver = SylvesterSolver::new(&rho, 1e-12).unwrap();
        prop_assert_eq!(solver.support_rank(), dim - 1);
        // ρ̄ = (ρX + Xρ)/2 lives on the support by construction
        let x = random_hermitian(dim, &mut rng);
        let bar = HermitianOperator::symmetrize((rho.matrix() * x.matrix() + x.matrix() * rho.matrix()) * c64(0.5, 0.0));
        let s = solver.solve(&bar).unwrap();
        prop_assert!(solver.projected_residual(&s, &bar) <= 1e-8);
    }

    #[test]
    fn evolution_is_a_group_action(t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, u1 in -1.0f64..1.0, u2 in -1.0f64..1.0, gamma in 0.0f64..3.0) {
        let model = preset_qubit_network(gamma).unwrap();
        let once = model.evolved_state(&[t1 + u1, t2 + u2]);
        let first = model.evolved_state(&[t1, t2]);
        let shifted = EstimationModel::new(
            model.prior().clone(),
            first,
            model.generators().to_vec(),
            model.weights().to_vec(),
            model.labels().to_vec(),
        )
        .unwrap();
        let twice = shifted.evolved_state(&[u1, u2]);
        prop_assert!((once - twice).norm() < 1e-10);
    }

    #[test]
    fn trace_and_purity_survive_evolution(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let model = preset_global_imaging(2, 4, 0.8, false).unwrap();
        let rho = model.evolve(&[t1, t2]);
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        let eig = rho.eig();
        prop_assert!((eig.eigenvalues.last().unwrap() - 1.0).abs() < 1e-10);
    }
}
