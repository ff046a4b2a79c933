mod common;

use cmseq::cml::{cml_joint_covariance, convert_boundary, Endpoint};
use cmseq::gaussian::{condition, relative_difference, BlockMatrix};
use cmseq::induction::{
    check_markov_condition, check_reciprocal_condition, conditioning_oracle, induce_reciprocal_cml, propagate,
};
use cmseq::markov::markov_joint_covariance;
use cmseq::random;
use cmseq::representation::{construct_cm, decompose_cm, residual_cross_covariance};
use cmseq::structure::{check_corollary, classify, reverse_index};
use cmseq::tolerance::{ALGEBRAIC, STRUCTURE};
use common::max_rel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conditional_covariance_is_spd_and_shrinks(seed in any::<u64>(), d in 1usize..=3, n in 2usize..=8) {
        let mut r = rng(seed);
        let joint = markov_joint_covariance(&random::markov(&mut r, d, n)).unwrap();
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.shuffle(&mut r);
        let small = &idx[..1];
        let large = &idx[..2];
        let a = condition(&joint, small).unwrap();
        let b = condition(&joint, large).unwrap();
        prop_assert!(relative_difference(&a.cov, &a.cov.transpose()) < 1e-10);
        prop_assert!(min_eigenvalue(&a.cov) > 0.0);
        // Restrict the coarser conditional to the blocks still unobserved in the finer one.
        let keep: Vec<usize> = a.unobserved.iter().enumerate()
            .filter(|(_, u)| b.unobserved.contains(u))
            .map(|(i, _)| i)
            .collect();
        let sub = BlockMatrix::new(a.cov.clone(), d).unwrap().select(&keep).into_matrix();
        let diff = sub - &b.cov;
        prop_assert!(min_eigenvalue(&diff) > -1e-10 * b.cov.norm());
    }

    #[test]
    fn markov_precision_is_tridiagonal(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=20) {
        let c = markov_joint_covariance(&random::markov(&mut rng(seed), d, n)).unwrap();
        let r = classify(&c, STRUCTURE).unwrap();
        prop_assert!(r.tri_diagonal, "residual {}", r.residuals.tri_diagonal);
        prop_assert!(check_corollary(&r));
    }

    #[test]
    fn cm_precision_has_cm_form(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=20, last in any::<bool>()) {
        let ep = if last { Endpoint::Last } else { Endpoint::First };
        let c = cml_joint_covariance(&random::cml(&mut rng(seed), d, n, ep)).unwrap();
        let r = classify(&c, STRUCTURE).unwrap();
        if last {
            prop_assert!(r.cml_form, "residual {}", r.residuals.cml_form);
        } else {
            prop_assert!(r.cmf_form, "residual {}", r.residuals.cmf_form);
        }
        prop_assert!(r.cyclic_tri_diagonal <= (r.cml_form && r.cmf_form));
        prop_assert!(r.tri_diagonal <= r.cyclic_tri_diagonal);
        prop_assert!(check_corollary(&r));
    }

    #[test]
    fn boundary_conversion_preserves_covariance(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=10, last in any::<bool>()) {
        let ep = if last { Endpoint::Last } else { Endpoint::First };
        let p = random::cml(&mut rng(seed), d, n, ep);
        let q = convert_boundary(&p).unwrap();
        let a = cml_joint_covariance(&p).unwrap();
        let b = cml_joint_covariance(&q).unwrap();
        prop_assert!(relative_difference(a.as_matrix(), b.as_matrix()) < 1e-10);
        let back = convert_boundary(&q).unwrap();
        prop_assert!(relative_difference(&p.boundary().joint().as_matrix(), &back.boundary().joint().as_matrix()) < 1e-10);
    }

    #[test]
    fn propagated_quantities_invariants(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=20) {
        let p = random::markov(&mut rng(seed), d, n);
        let pq = propagate(&p).unwrap();
        prop_assert_eq!(&pq.gain_to_last[n], &DMatrix::identity(d, d));
        for k in 0..n {
            let chained = &pq.gain_to_last[k + 1] * p.transition(k + 1);
            prop_assert!(max_rel(&pq.gain_to_last[k], &chained) < 1e-14);
        }
        for k in 0..n.saturating_sub(1) {
            let diff = &pq.cov_to_last[k] - &pq.cov_to_last[k + 1];
            prop_assert!(min_eigenvalue(&diff) > -1e-10 * pq.cov_to_last[k].norm());
        }
    }

    #[test]
    fn induction_matches_conditioning(seed in any::<u64>(), d in 1usize..=4, n in 2usize..=20) {
        let p = random::markov(&mut rng(seed), d, n);
        let m = induce_reciprocal_cml(&p).unwrap();
        for k in 1..n {
            let o = conditioning_oracle(&p, k).unwrap();
            let st = m.step(k).unwrap();
            prop_assert!(max_rel(&o.transition, &st.transition) < ALGEBRAIC);
            prop_assert!(max_rel(&o.coupling, &st.coupling) < ALGEBRAIC);
            prop_assert!(max_rel(&o.noise_cov, &st.noise_cov) < ALGEBRAIC);
        }
    }

    #[test]
    fn markov_condition_iff_tridiagonal(seed in any::<u64>(), d in 1usize..=3, n in 2usize..=12, keep_markov in any::<bool>()) {
        let mut r = rng(seed);
        let p = random::markov(&mut r, d, n);
        let mut m = induce_reciprocal_cml(&p).unwrap();
        if !keep_markov {
            m = m.with_boundary(random::boundary(&mut r, d)).unwrap();
        }
        if r.random_bool(0.5) {
            m = convert_boundary(&m).unwrap();
        }
        let markov = check_markov_condition(&m, 1e-6).unwrap().verdict.holds();
        let tri = classify(&cml_joint_covariance(&m).unwrap(), STRUCTURE).unwrap().tri_diagonal;
        prop_assert_eq!(markov, tri);
        prop_assert_eq!(markov, keep_markov);
        prop_assert!(check_reciprocal_condition(&m, ALGEBRAIC).unwrap().verdict.holds());
    }

    #[test]
    fn reversal_swaps_cm_flags(seed in any::<u64>(), d in 1usize..=3, n in 3usize..=12) {
        let p = random::cm_not_reciprocal(&mut rng(seed), d, n, Endpoint::Last).unwrap();
        let c = cml_joint_covariance(&p).unwrap();
        let fwd = classify(&c, STRUCTURE).unwrap();
        let rev = classify(&reverse_index(&c), STRUCTURE).unwrap();
        prop_assert!(fwd.cml_form && !fwd.cmf_form);
        prop_assert!(rev.cmf_form && !rev.cml_form);
        prop_assert_eq!(reverse_index(&reverse_index(&c)), c);
    }

    #[test]
    fn decomposition_invariants(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=15, last in any::<bool>()) {
        let ep = if last { Endpoint::Last } else { Endpoint::First };
        let c = cml_joint_covariance(&random::cml(&mut rng(seed), d, n, ep)).unwrap();
        let spec = decompose_cm(&c, ep, STRUCTURE).unwrap();
        prop_assert!(residual_cross_covariance(&c, &spec) < 1e-12);
        let y = markov_joint_covariance(spec.markov()).unwrap();
        prop_assert!(classify(&y, STRUCTURE).unwrap().tri_diagonal);
        let back = cml_joint_covariance(&construct_cm(&spec).unwrap()).unwrap();
        prop_assert!(relative_difference(back.as_matrix(), c.as_matrix()) < 1e-8);
    }

    #[test]
    fn construct_always_cm(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=15, last in any::<bool>()) {
        let ep = if last { Endpoint::Last } else { Endpoint::First };
        let spec = random::representation(&mut rng(seed), d, n, ep);
        let m = construct_cm(&spec).unwrap();
        let c = cml_joint_covariance(&m).unwrap();
        let direct = cmseq::representation::representation_joint_covariance(&spec).unwrap();
        prop_assert!(relative_difference(c.as_matrix(), direct.as_matrix()) < 1e-10);
        let r = classify(&c, STRUCTURE).unwrap();
        let expected_form = if last { r.cml_form } else { r.cmf_form };
        prop_assert!(expected_form);
        // uncorrelatedness pins the gauge: the recovered Γ are the ones used
        let back = decompose_cm(&c, ep, STRUCTURE).unwrap();
        for (a, b) in back.gammas().iter().zip(spec.gammas()) {
            prop_assert!(relative_difference(a, b) < 1e-8);
        }
        let y_back = markov_joint_covariance(back.markov()).unwrap();
        let y = markov_joint_covariance(spec.markov()).unwrap();
        prop_assert!(relative_difference(y_back.as_matrix(), y.as_matrix()) < 1e-8);
    }
}

#[test]
fn sampling_is_byte_identical_per_seed() {
    let mut r = rng(5);
    let p = random::cml(&mut r, 3, 6, Endpoint::Last);
    let a = cmseq::cml::sample_cml(&p, 200, 77).unwrap();
    let b = cmseq::cml::sample_cml(&p, 200, 77).unwrap();
    let bits = |s: &Vec<Vec<nalgebra::DVector<f64>>>| -> Vec<u64> {
        s.iter().flatten().flat_map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn induced_interior_with_n1_is_empty() {
    let mut r = rng(6);
    let p = random::markov(&mut r, 2, 1);
    let m = induce_reciprocal_cml(&p).unwrap();
    assert!(m.steps().is_empty());
    let a = cml_joint_covariance(&m).unwrap();
    let b = markov_joint_covariance(&p).unwrap();
    assert!(relative_difference(a.as_matrix(), b.as_matrix()) < 1e-12);
}
