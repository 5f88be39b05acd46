use approx::assert_relative_eq;
use hilbert_gfd::function_space::FactoredBasis;
use hilbert_gfd::optimizer::estimate_gradient;
use hilbert_gfd::oracles::{
    galerkin_gradient, lemma_tail_check, mc_estimator_stats, second_moment_formula, unbiasedness_statistic,
    QuadraticRisk, SurrogateInstance, SurrogateSpace, SURROGATE_DIM,
};
use hilbert_gfd::rng::substream;
use hilbert_gfd::sampler::{direction_from_normals, gamma};
use hilbert_gfd::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 1, 1);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn galerkin_orthonormal_basis_is_identity_map() {
    let space = SurrogateSpace::random(6, 10.0, 3).unwrap();
    let w = space.w().clone();
    let ortho = SurrogateSpace::orthonormal(w.clone()).unwrap();
    let l = w.clone().cholesky().unwrap().l();
    let b1 = ortho.b().column(0).into_owned();
    let a = l.transpose();
    let target = &a * &b1;
    let risk = QuadraticRisk::new(a, target).unwrap();

    let h = PreBasisExpansion::new(ortho.basis_id(), normals(6, 4));
    let got = galerkin_gradient(&risk, &ortho, ortho.gram(), &h, 6).unwrap();
    for (i, (g, c)) in got.iter().zip(h.coeffs()).enumerate() {
        let want = if i == 0 { c - 1.0 } else { *c };
        assert!((g - want).abs() < 1e-10, "index {i}: {g} vs {want}");
    }
}

#[test]
fn galerkin_matches_dense_solve_on_4x4() {
    let space = SurrogateSpace::random(4, 20.0, 8).unwrap();
    let risk = QuadraticRisk::random(&space, 5, 8).unwrap();
    let h = PreBasisExpansion::new(space.basis_id(), normals(4, 9));
    let got = galerkin_gradient(&risk, &space, space.gram(), &h, 4).unwrap();

    let g = DMatrix::from_fn(4, 4, |i, j| space.gram().get(i, j));
    let d = DVector::from_fn(4, |i, _| {
        let mut c = vec![0.0; 4];
        c[i] = 1.0;
        risk.directional_derivative(&space, &h, &PreBasisExpansion::new(space.basis_id(), c)).unwrap()
    });
    let want = g.lu().solve(&d).unwrap();
    for i in 0..4 {
        assert!((got[i] - want[i]).abs() < 1e-10 * want[i].abs().max(1.0));
    }
}

#[test]
fn galerkin_full_dimension_is_exact_gradient() {
    let inst = SurrogateInstance::random(12).unwrap();
    let a = galerkin_gradient(&inst.risk, &inst.space, inst.space.gram(), &inst.h, SURROGATE_DIM).unwrap();
    let e = inst.space.mul_upper(&a).unwrap();
    for (x, y) in e.iter().zip(&inst.g) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn estimator_is_reproducible() {
    let inst = SurrogateInstance::random(5).unwrap();
    let law = DimensionLaw::shifted_poisson(10.0).unwrap();
    let sched = PreconditionSchedule::tail_ceil(1.0).unwrap();
    let a = estimate_gradient(&inst.risk, &inst.space, &inst.h, &law, &sched, 9, 77, 3).unwrap();
    let b = estimate_gradient(&inst.risk, &inst.space, &inst.h, &law, &sched, 9, 77, 3).unwrap();
    assert_eq!(a, b);
    let c = estimate_gradient(&inst.risk, &inst.space, &inst.h, &law, &sched, 9, 77, 4).unwrap();
    assert_ne!(a.ghat, c.ghat);
}

#[test]
fn estimator_matches_hand_assembly() {
    let inst = SurrogateInstance::random(6).unwrap();
    let law = DimensionLaw::geometric(0.5).unwrap();
    let sched = PreconditionSchedule::tail_ceil(0.5).unwrap();
    let k = 5;
    let est = estimate_gradient(&inst.risk, &inst.space, &inst.h, &law, &sched, k, 21, 2).unwrap();
    assert_eq!(est.m, 10);
    assert_relative_eq!(est.lambda, law.tail(k));

    let mut want = vec![0.0; k];
    for j in 0..est.m {
        let mut rng = substream(21, 2, j as u64 + 1);
        let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let v = direction_from_normals(&inst.space, &law, &z).unwrap();
        let d = inst.risk.directional_derivative(&inst.space, &inst.h, &v).unwrap();
        for (w, x) in want.iter_mut().zip(v.coeffs()) {
            *w += est.lambda / est.m as f64 * d * x;
        }
    }
    for (a, b) in est.ghat.coeffs().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn full_dimension_unit_lambda_recovers_plain_gradient() {
    let inst = SurrogateInstance::random(14).unwrap();
    let law = DimensionLaw::deterministic(SURROGATE_DIM).unwrap();
    let m = 2;
    let sched = PreconditionSchedule::new(LambdaKind::Unit, SampleSizeKind::Constant(m)).unwrap();
    assert!(matches!(gamma(&law, &sched, 1), Err(GfdError::Domain(_))));
    let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, &law, &sched, 40_000, 15).unwrap();
    for ((mean, se), g) in stats.mean.iter().zip(&stats.se).zip(&inst.g) {
        assert!((mean - g).abs() <= 4.0 * se, "{mean} vs {g} (se {se})");
    }
    let norm2: f64 = inst.g.iter().map(|x| x * x).sum();
    let want = norm2 * (m + SURROGATE_DIM + 1) as f64 / m as f64;
    assert!((stats.second_moment - want).abs() <= 4.0 * stats.second_moment_se);
}

#[test]
fn unbiased_on_short_run() {
    let inst = SurrogateInstance::random(16).unwrap();
    let law = DimensionLaw::geometric(0.5).unwrap();
    let sched = PreconditionSchedule::tail_ceil(1.0).unwrap();
    let stats = mc_estimator_stats(&inst.space, &inst.risk, &inst.h, &law, &sched, 20_000, 17).unwrap();
    assert!(unbiasedness_statistic(&stats, &inst.g, &law, &sched) <= 4.0);
}

#[test]
fn second_moment_formula_vanishes_at_zero() {
    let law = DimensionLaw::shifted_poisson(10.0).unwrap();
    let sched = PreconditionSchedule::tail_ceil(1.0).unwrap();
    assert_eq!(second_moment_formula(&[0.0; SURROGATE_DIM], &law, &sched).unwrap(), 0.0);
}

fn law_strategy() -> impl Strategy<Value = DimensionLaw> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|q| DimensionLaw::geometric(q).unwrap()),
        (1.0f64..120.0).prop_map(|r| DimensionLaw::shifted_poisson(r).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tails_and_pmf_are_consistent(law in law_strategy(), i in 1usize..60) {
        prop_assert!(law.tail(i) >= law.tail(i + 1));
        prop_assert!((law.tail(i) - law.tail(i + 1) - law.pmf(i)).abs() <= 1e-12);
        prop_assert_eq!(law.tail(1), 1.0);
    }

    #[test]
    fn gamma_sits_between_half_tail_and_tail(law in law_strategy()) {
        let r = lemma_tail_check(&law, 120).unwrap();
        prop_assert!(r.pass, "ratios in [{}, {}]", r.min_ratio, r.max_ratio);
    }

    #[test]
    fn sample_size_covers_k_over_c(k in 1usize..500, c in 0.25f64..4.0) {
        let sched = PreconditionSchedule::tail_ceil(c).unwrap();
        let m = sched.sample_size(k);
        prop_assert!(m >= 1);
        prop_assert!(m as f64 >= k as f64 / c - 1e-9);
        prop_assert!((m as f64) < k as f64 / c + 1.0);
    }

    #[test]
    fn second_moment_is_quadratic_in_g(seed in 0u64..1000, s in 0.1f64..10.0, c in 0.5f64..2.0) {
        let g = normals(SURROGATE_DIM, seed);
        let law = DimensionLaw::geometric(0.5).unwrap();
        let sched = PreconditionSchedule::tail_ceil(c).unwrap();
        let a = second_moment_formula(&g, &law, &sched).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| s * x).collect();
        let b = second_moment_formula(&scaled, &law, &sched).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((b - s * s * a).abs() <= 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn second_moment_respects_variance_bound(seed in 0u64..1000, c in 0.25f64..4.0, rate in 2.0f64..60.0) {
        let g = normals(SURROGATE_DIM, seed);
        let norm2: f64 = g.iter().map(|x| x * x).sum();
        let sched = PreconditionSchedule::tail_ceil(c).unwrap();
        for law in [DimensionLaw::geometric(0.5).unwrap(), DimensionLaw::shifted_poisson(rate).unwrap()] {
            let v = second_moment_formula(&g, &law, &sched).unwrap();
            prop_assert!(v <= 2.0 * (1.0 + 2.0 * c) * norm2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn e_coordinates_round_trip(seed in 0u64..500) {
        let space = SurrogateSpace::random(SURROGATE_DIM, 100.0, seed).unwrap();
        let y = normals(SURROGATE_DIM, seed + 1);
        let h = space.from_e_coords(&y).unwrap();
        let back = space.e_coords(&h).unwrap();
        for (a, b) in back.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let norm2: f64 = y.iter().map(|x| x * x).sum();
        prop_assert!((space.inner(&h, &h).unwrap() - norm2).abs() < 1e-9 * norm2.max(1.0));
    }

    #[test]
    fn direction_e_coordinates_are_scaled_normals(seed in 0u64..500, k in 1usize..SURROGATE_DIM) {
        let space = SurrogateSpace::random(SURROGATE_DIM, 100.0, seed).unwrap();
        let law = DimensionLaw::geometric(0.5).unwrap();
        let z = normals(k, seed + 2);
        let v = direction_from_normals(&space, &law, &z).unwrap();
        let mut padded = v.coeffs().to_vec();
        padded.resize(SURROGATE_DIM, 0.0);
        let y = space.mul_upper(&padded).unwrap();
        for i in 0..k {
            prop_assert!((y[i] * law.tail(i + 1).sqrt() - z[i]).abs() < 1e-9 * z[i].abs().max(1.0));
        }
        for yi in &y[k..] {
            prop_assert!(yi.abs() < 1e-9);
        }
    }
}
