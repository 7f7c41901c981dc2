//! The orthonormal basis against exact rational arithmetic, plus two
//! structural laws checked on random measures.

use levy_rbdsde::levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Monic orthogonal polynomials of `μ = y² ν + s² δ₀` by classical
/// Gram-Schmidt in exact arithmetic. Returns `(coefficients, squared norm)`
/// for degrees `0..m`.
fn exact_monic(atoms: &[(BigRational, BigRational)], s2: &BigRational, m: usize) -> Vec<(Vec<BigRational>, BigRational)> {
    let moment = |k: usize| -> BigRational {
        let mut total = if k == 0 { s2.clone() } else { BigRational::zero() };
        for (y, rate) in atoms {
            let mut p = rate.clone();
            for _ in 0..k + 2 {
                p *= y;
            }
            total += p;
        }
        total
    };
    let inner = |a: &[BigRational], b: &[BigRational]| -> BigRational {
        let mut total = BigRational::zero();
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                total += ai * bj * moment(i + j);
            }
        }
        total
    };
    let mut out: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for d in 0..m {
        let mut c = vec![BigRational::zero(); d + 1];
        c[d] = rat(1, 1);
        for (q, norm2) in &out {
            let proj = inner(&c, q) / norm2;
            for (a, b) in c.iter_mut().zip(q) {
                *a -= &proj * b;
            }
        }
        let norm2 = inner(&c, &c);
        out.push((c, norm2));
    }
    out
}

fn check_against_oracle(atoms: &[(i64, i64, i64, i64)], sigma0_sq: (i64, i64), m: usize) {
    let exact: Vec<(BigRational, BigRational)> = atoms
        .iter()
        .map(|&(yn, yd, rn, rd)| (rat(yn, yd), rat(rn, rd)))
        .collect();
    let model = LevyMeasureModel::new(
        atoms
            .iter()
            .map(|&(yn, yd, rn, rd)| JumpAtom::new(yn as f64 / yd as f64, rn as f64 / rd as f64))
            .collect(),
        (sigma0_sq.0 as f64 / sigma0_sq.1 as f64).sqrt(),
        0.0,
    )
    .unwrap();
    let basis = orthonormal_basis(&model, m).unwrap();
    let oracle = exact_monic(&exact, &rat(sigma0_sq.0, sigma0_sq.1), m);
    for (d, (c, norm2)) in oracle.iter().enumerate() {
        let i = d + 1;
        let scale = norm2.to_f64().unwrap().sqrt();
        for (k, ck) in c.iter().enumerate() {
            let want = ck.to_f64().unwrap() / scale;
            let got = basis.coefficient(i, k + 1).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                "c[{i},{}]: {got} vs {want}",
                k + 1
            );
        }
        assert!(basis.coefficient(i, i).unwrap() > 0.0);
    }
}

#[test]
fn two_atom_measure_matches_exact_gram_schmidt() {
    check_against_oracle(&[(1, 1, 1, 1), (-1, 1, 1, 1)], (0, 1), 2);
}

#[test]
fn four_atom_measure_with_gaussian_part_matches_exact_gram_schmidt() {
    check_against_oracle(
        &[(1, 2, 3, 1), (-3, 4, 1, 2), (2, 1, 1, 5), (-7, 5, 2, 3)],
        (1, 4),
        5,
    );
}

#[test]
fn unequal_rates_match_exact_gram_schmidt() {
    check_against_oracle(&[(1, 3, 7, 2), (5, 2, 1, 9), (-1, 1, 4, 3)], (0, 1), 3);
}

#[test]
fn rows_past_the_support_are_zero() {
    let model = LevyMeasureModel::new(vec![JumpAtom::new(0.5, 2.0)], 0.0, 0.0).unwrap();
    let basis = orthonormal_basis(&model, 3).unwrap();
    assert_eq!(basis.effective_dim(), 1);
    assert!(basis.row(2).unwrap().iter().all(|&c| c == 0.0));
    assert!(basis.row(3).unwrap().iter().all(|&c| c == 0.0));
    assert!(basis.is_degenerate(2));
}

fn atoms_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.1f64..2.0, any::<bool>(), 0.2f64..3.0), 2..5).prop_map(|raw| {
        // distinct sizes keep the Gram matrix well conditioned
        raw.into_iter()
            .enumerate()
            .map(|(k, (y, neg, rate))| {
                let size = y + 0.37 * k as f64;
                (if neg { -size } else { size }, rate)
            })
            .collect()
    })
}

fn model_of(atoms: &[(f64, f64)]) -> LevyMeasureModel {
    LevyMeasureModel::new(atoms.iter().map(|&(y, r)| JumpAtom::new(y, r)).collect(), 0.0, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn atom_order_does_not_matter(atoms in atoms_strategy(), shift in 0usize..4) {
        let m = atoms.len().min(3);
        let base = orthonormal_basis(&model_of(&atoms), m).unwrap();
        let mut rotated = atoms.clone();
        rotated.rotate_left(shift % atoms.len());
        rotated.reverse();
        let other = orthonormal_basis(&model_of(&rotated), m).unwrap();
        for i in 1..=m {
            for k in 1..=i {
                let (a, b) = (base.coefficient(i, k).unwrap(), other.coefficient(i, k).unwrap());
                prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "c[{},{}]: {} vs {}", i, k, a, b);
            }
        }
    }

    #[test]
    fn scaling_rates_scales_coefficients(atoms in atoms_strategy(), lambda in 0.1f64..10.0) {
        let m = atoms.len().min(3);
        let model = model_of(&atoms);
        let base = orthonormal_basis(&model, m).unwrap();
        let scaled = orthonormal_basis(&model.with_scaled_rates(lambda).unwrap(), m).unwrap();
        for i in 1..=m {
            for k in 1..=i {
                let want = base.coefficient(i, k).unwrap() / lambda.sqrt();
                let got = scaled.coefficient(i, k).unwrap();
                prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
            }
        }
    }
}
