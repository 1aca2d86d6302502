use proptest::prelude::*;
use schauder_core::extension::{even_extend, odd_extend, ExtendedField};
use schauder_core::field::{finite_diff, linear_combine, FieldEnsemble, MultiIndex, SpaceTimeGrid};
use schauder_core::halfline::{kernel_mass, poisson_kernel, KernelQuadrature};
use schauder_core::norms::{parabolic_seminorm, space_seminorm, sup_norm, NormSpec, PairPolicy};
use schauder_core::rng::{wiener_increments, SeedSpec};

fn grid() -> SpaceTimeGrid<f64> {
    SpaceTimeGrid::slab(1.0, 6, 1.0, 4, 0.5, 4).unwrap()
}

fn values(paths: usize) -> impl Strategy<Value = Vec<f64>> {
    let g = grid();
    prop::collection::vec(-10.0f64..10.0, paths * g.nodes() * g.times())
}

fn field(v: Vec<f64>, paths: usize) -> FieldEnsemble<f64> {
    FieldEnsemble::from_values(grid(), paths, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seminorms_are_homogeneous(v in values(2), lambda in -5.0f64..5.0, m in 0usize..=2) {
        let f = field(v, 2);
        let spec = NormSpec::new(0.5, 2.0, m).unwrap();
        let g = f.scaled(lambda);
        for (a, b) in [
            (sup_norm(&f, &spec).unwrap(), sup_norm(&g, &spec).unwrap()),
            (space_seminorm(&f, &spec).unwrap(), space_seminorm(&g, &spec).unwrap()),
            (parabolic_seminorm(&f, &spec).unwrap(), parabolic_seminorm(&g, &spec).unwrap()),
        ] {
            prop_assert!((b - lambda.abs() * a).abs() <= 1e-12 * (lambda.abs() * a).max(1e-300));
        }
    }

    #[test]
    fn adding_a_constant_keeps_seminorms(v in values(1), c in -100.0f64..100.0) {
        let f = field(v, 1);
        let g = f.map(|x| x + c);
        let spec = NormSpec::new(0.3, 2.0, 0).unwrap();
        let (a, b) = (space_seminorm(&f, &spec).unwrap(), space_seminorm(&g, &spec).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn pair_subsets_bound_below(v in values(2), seed in 0u64..1000) {
        let f = field(v, 2);
        let spec = NormSpec::new(0.7, 2.0, 0).unwrap();
        let full = parabolic_seminorm(&f, &spec.with_policy(PairPolicy::Exhaustive)).unwrap();
        let dyadic = parabolic_seminorm(&f, &spec.with_policy(PairPolicy::Dyadic)).unwrap();
        let random = parabolic_seminorm(&f, &spec.with_policy(PairPolicy::RandomPairs { count: 200, seed })).unwrap();
        prop_assert!(dyadic <= full);
        prop_assert!(random <= full);
    }

    #[test]
    fn parabolic_dominates_space(v in values(1)) {
        let f = field(v, 1);
        let spec = NormSpec::new(0.5, 2.0, 0).unwrap();
        prop_assert!(parabolic_seminorm(&f, &spec).unwrap() >= space_seminorm(&f, &spec).unwrap());
    }

    #[test]
    fn gamma_moments_are_monotone(v in values(3)) {
        let f = field(v, 3);
        let s2 = space_seminorm(&f, &NormSpec::new(0.5, 2.0, 0).unwrap()).unwrap();
        let s4 = space_seminorm(&f, &NormSpec::new(0.5, 4.0, 0).unwrap()).unwrap();
        prop_assert!(s4 >= s2 * (1.0 - 1e-12));
    }

    #[test]
    fn linear_combine_is_pointwise(a in values(1), b in values(1), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let (fa, fb) = (field(a, 1), field(b, 1));
        let c = linear_combine(&[x, y], &[&fa, &fb]).unwrap();
        for k in 0..c.values().len() {
            prop_assert_eq!(c.values()[k], x * fa.values()[k] + y * fb.values()[k]);
        }
    }

    #[test]
    fn finite_differences_are_linear(a in values(1), b in values(1), x in -3.0f64..3.0) {
        let (fa, fb) = (field(a, 1), field(b, 1));
        let sum = linear_combine(&[x, 1.0], &[&fa, &fb]).unwrap();
        for beta in MultiIndex::of_order(1, 2).into_iter().chain(MultiIndex::of_order(2, 2)) {
            let lhs = finite_diff(&sum, beta).unwrap();
            let (da, db) = (finite_diff(&fa, beta).unwrap(), finite_diff(&fb, beta).unwrap());
            for k in 0..lhs.values().len() {
                let rhs = x * da.values()[k] + db.values()[k];
                prop_assert!((lhs.values()[k] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn odd_extension_round_trips(v in values(1)) {
        let mut f = field(v, 1);
        let g = f.grid().clone();
        for n in 0..g.times() {
            for j in 0..g.nxp() {
                f.slice_mut(0, n)[g.node(0, j)] = 0.0;
            }
        }
        let odd = odd_extend(&f).unwrap();
        prop_assert_eq!(&ExtendedField::restrict_half(odd.field(), &g), &f);
        for n in 0..g.times() {
            for k in 1..=(g.x1_cells() as isize) {
                for j in 0..g.nxp() {
                    prop_assert_eq!(odd.at(0, n, -k, j), -odd.at(0, n, k, j));
                }
            }
        }
        let even = even_extend(&f).unwrap();
        prop_assert_eq!(even.at(0, 1, -2, 1), even.at(0, 1, 2, 1));
    }

    #[test]
    fn kernel_mass_is_one(y in 0.05f64..20.0) {
        let m = kernel_mass(y, &KernelQuadrature::default()).unwrap();
        prop_assert!((m.value - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn kernel_is_positive(s in 1e-3f64..10.0, y in 1e-3f64..10.0) {
        prop_assert!(poisson_kernel(s, y).unwrap() > 0.0);
    }

    #[test]
    fn noise_is_keyed_by_path(seed in 0u64..1000, salt in 0u64..1000) {
        let spec = SeedSpec::new(seed, salt);
        let big = wiener_increments::<f64>(spec, 5, 8, 2, 0.01).unwrap();
        let small = wiener_increments::<f64>(spec, 2, 8, 2, 0.01).unwrap();
        let prefix = big.take_paths(2).unwrap();
        prop_assert_eq!(prefix.as_slice(), small.as_slice());
        let coarse = big.coarsen(4).unwrap();
        prop_assert!((coarse.get(3, 1, 1) - (4..8).map(|s| big.get(3, s, 1)).sum::<f64>()).abs() < 1e-15);
    }
}
