use std::sync::Arc;

use nilspec::group::*;
use nilspec::semiclassical::{Separable, TorusSymbol};
use nilspec::spectra::{power_spectrum, torus_spectrum, SpectralTable};
use nilspec::variance::{matrix_elements, EigenBasis, PositionObservable};
use proptest::prelude::*;

fn algebras() -> Vec<GradedLieAlgebra> {
    vec![
        GradedLieAlgebra::heisenberg(1).unwrap(),
        GradedLieAlgebra::heisenberg(2).unwrap(),
        GradedLieAlgebra::engel().unwrap(),
        GradedLieAlgebra::abelian(3).unwrap(),
    ]
}

fn element(dim: usize) -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(-3.0f64..3.0, dim).prop_map(GroupElement::new)
}

fn max_gap(a: &GroupElement, b: &GroupElement) -> f64 {
    a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bch_is_associative((which, x, y, z) in (0usize..4).prop_flat_map(|w| {
        let d = algebras()[w].dim();
        (Just(w), element(d), element(d), element(d))
    })) {
        let g = &algebras()[which];
        let left = bch_multiply(g, &bch_multiply(g, &x, &y).unwrap(), &z).unwrap();
        let right = bch_multiply(g, &x, &bch_multiply(g, &y, &z).unwrap()).unwrap();
        prop_assert!(max_gap(&left, &right) <= 1e-12);
        let e = bch_multiply(g, &x, &x.inverse()).unwrap();
        prop_assert!(e.coords.iter().all(|c| c.abs() <= 1e-12));
    }

    #[test]
    fn dilations_are_automorphisms(x in element(3), y in element(3), r in 0.1f64..4.0) {
        let g = GradedLieAlgebra::heisenberg(1).unwrap();
        let lhs = dilate(&g, r, &bch_multiply(&g, &x, &y).unwrap()).unwrap();
        let rhs = bch_multiply(&g, &dilate(&g, r, &x).unwrap(), &dilate(&g, r, &y).unwrap()).unwrap();
        prop_assert!(max_gap(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn quasi_norm_is_homogeneous_and_symmetric(x in element(4), r in 0.1f64..4.0) {
        let g = GradedLieAlgebra::engel().unwrap();
        let n = quasi_norm(&g, &x);
        prop_assert!((quasi_norm(&g, &dilate(&g, r, &x).unwrap()) - r * n).abs() <= 1e-12 * (1.0 + r * n));
        prop_assert!((quasi_norm(&g, &x.inverse()) - n).abs() <= 1e-12 * (1.0 + n));
    }

    #[test]
    fn quasi_triangle_inequality_holds(x in element(3), y in element(3)) {
        let g = GradedLieAlgebra::heisenberg(1).unwrap();
        let c = quasi_triangle_constant(&g);
        let xy = bch_multiply(&g, &x, &y).unwrap();
        prop_assert!(quasi_norm(&g, &xy) <= c * (quasi_norm(&g, &x) + quasi_norm(&g, &y)) * (1.0 + 1e-12));
    }

    #[test]
    fn free_flow_preserves_the_l2_norm(p in -3i64..=3, mu in -1.0f64..1.0, sigma in 0.4f64..1.5, t in -50.0f64..50.0) {
        let a = TorusSymbol::single(&[p], Arc::new(Separable::gaussian(1, mu, sigma))).unwrap();
        let before = a.l2_norm_sq().unwrap();
        let after = a.flow(t).l2_norm_sq().unwrap();
        prop_assert!((after - before).abs() <= 1e-9 * before, "{} vs {}", before, after);
    }

    #[test]
    fn eigenspace_sums_do_not_depend_on_the_basis(seed in any::<u64>(), p1 in -2i64..=2, p2 in -2i64..=2) {
        let lambda = 4.0 * std::f64::consts::PI.powi(2) * 30.0;
        let plane = EigenBasis::torus_exponential(2, lambda).unwrap();
        let mixed = EigenBasis::torus_mixed(2, lambda, seed).unwrap();
        prop_assert!(mixed.orthonormality_defect <= 1e-12);
        let a = PositionObservable::cosine(&[p1, p2]);
        let sums = |b: &EigenBasis| {
            let mut out: Vec<(f64, f64)> = Vec::new();
            for (l, e) in matrix_elements(b, &a, lambda).unwrap() {
                match out.last_mut() {
                    Some(last) if last.0 == l => last.1 += e.re,
                    _ => out.push((l, e.re)),
                }
            }
            out
        };
        for (u, v) in sums(&plane).iter().zip(sums(&mixed)) {
            prop_assert_eq!(u.0, v.0);
            prop_assert!((u.1 - v.1).abs() <= 1e-12);
        }
    }

    #[test]
    fn counting_is_monotone_and_powers_relabel(lambda in 1.0f64..5000.0, l in 1u32..4) {
        let t = torus_spectrum(2, lambda).unwrap();
        let p = power_spectrum(&t, l).unwrap();
        let a = t.counting(lambda / 2.0).unwrap();
        let b = t.counting(lambda).unwrap();
        prop_assert!(a <= b);
        prop_assert_eq!(p.counting(lambda.powi(l as i32)).unwrap(), b);
        let back = SpectralTable::read_csv(t.to_csv_string().as_bytes()).unwrap();
        prop_assert_eq!(back, t);
    }
}
