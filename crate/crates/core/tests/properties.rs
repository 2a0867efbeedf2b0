use anderson_core::ensemble::ModelSpec;
use anderson_core::estimates::box_seed;
use anderson_core::pointprocess::{local_process, mask_weight, superposition_process_with_box};
use anderson_core::{
    count_at_most, count_in, count_many, eigen_full, eigenpairs_in, eigenvalues_in, DisorderRealization, Interval,
    SiteDistribution, TorusGeometry,
};
use proptest::prelude::*;

fn chain(values: Vec<f64>) -> anderson_core::AssembledOperator {
    let g = TorusGeometry::lattice(1, values.len()).unwrap();
    let d = DisorderRealization::from_values(g.clone(), values).unwrap();
    anderson_core::build_lattice(&g, &d).unwrap()
}

fn square(side: usize, values: Vec<f64>) -> anderson_core::AssembledOperator {
    let g = TorusGeometry::lattice(2, side).unwrap();
    let d = DisorderRealization::from_values(g.clone(), values).unwrap();
    anderson_core::build_lattice(&g, &d).unwrap()
}

fn oracle(h: &anderson_core::AssembledOperator, e: f64) -> usize {
    eigen_full(h, false).unwrap().values.iter().filter(|&&l| l <= e).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_agree_with_dense_spectrum(
        v in prop::collection::vec(0.0f64..6.0, 3..60),
        e in -1.0f64..12.0,
    ) {
        let h = chain(v);
        prop_assert_eq!(count_at_most(&h, e).unwrap(), oracle(&h, e));
    }

    #[test]
    fn square_counts_agree_with_dense_spectrum(
        side in 3usize..8,
        seed in any::<u64>(),
        e in -1.0f64..14.0,
    ) {
        let spec = ModelSpec::lattice(2, SiteDistribution::uniform(1.0).with_coupling(4.0));
        let h = spec.realize(side, seed, 0).unwrap();
        prop_assert_eq!(count_at_most(&h, e).unwrap(), oracle(&h, e));
        // pure Laplacian, heavily degenerate
        let free = square(side, vec![0.0; side * side]);
        prop_assert_eq!(count_at_most(&free, e).unwrap(), oracle(&free, e));
    }

    #[test]
    fn nonnegative_potential_lowers_counts(
        v in prop::collection::vec(0.0f64..4.0, 4..40),
        w in prop::collection::vec(0.0f64..2.0, 40),
        e in 0.0f64..8.0,
    ) {
        let n = v.len();
        let h = chain(v.clone());
        let hw = chain(v.iter().zip(&w).map(|(a, b)| a + b).collect());
        prop_assert!(count_at_most(&hw, e).unwrap() <= count_at_most(&h, e).unwrap());
        prop_assert_eq!(hw.dim(), n);
    }

    #[test]
    fn rank_one_moves_count_by_at_most_one(
        v in prop::collection::vec(0.0f64..4.0, 4..40),
        site in 0usize..40,
        t in 0.0f64..20.0,
        e in -1.0f64..9.0,
    ) {
        let h = chain(v);
        let site = site % h.dim();
        let ht = h.add_rank_one(site, t).unwrap();
        let drop = count_at_most(&h, e).unwrap() as i64 - count_at_most(&ht, e).unwrap() as i64;
        prop_assert!((0..=1).contains(&drop), "drop {}", drop);
    }

    #[test]
    fn counts_are_monotone_in_the_interval(
        v in prop::collection::vec(0.0f64..4.0, 4..40),
        a in -1.0f64..4.0,
        w1 in 0.0f64..2.0,
        extra_lo in 0.0f64..2.0,
        extra_hi in 0.0f64..2.0,
    ) {
        let h = chain(v);
        let inner = Interval::new(a, a + w1).unwrap();
        let outer = Interval::new(a - extra_lo, a + w1 + extra_hi).unwrap();
        prop_assert!(count_in(&h, &inner).unwrap() <= count_in(&h, &outer).unwrap());
    }

    #[test]
    fn translation_leaves_the_spectrum_alone(
        seed in any::<u64>(),
        side in 4usize..40,
        shift in 0usize..40,
    ) {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(3.0));
        let d = spec.sample(side, seed, 0).unwrap();
        let h = spec.assemble(&d).unwrap();
        let ht = spec.assemble(&d.translated(&[shift % side])).unwrap();
        let es: Vec<f64> = (0..25).map(|k| -0.5 + 0.25 * k as f64).collect();
        prop_assert_eq!(count_many(&h, &es).unwrap(), count_many(&ht, &es).unwrap());
    }

    #[test]
    fn sliced_eigenvalues_match_dense(
        v in prop::collection::vec(0.0f64..4.0, 4..50),
        a in 0.0f64..4.0,
        w in 0.01f64..3.0,
    ) {
        let h = chain(v);
        let iv = Interval::new(a, a + w).unwrap();
        let got = eigenvalues_in(&h, &iv).unwrap();
        let want: Vec<f64> = eigen_full(&h, false).unwrap().values.into_iter().filter(|&l| iv.contains(l)).collect();
        prop_assert_eq!(got.len(), want.len());
        for (g, x) in got.iter().zip(&want) {
            prop_assert!((g - x).abs() <= 1e-10, "{} vs {}", g, x);
        }
    }

    #[test]
    fn mask_weights_partition_unity(
        seed in any::<u64>(),
        cut in 1usize..31,
    ) {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(2.0));
        let h = spec.realize(32, seed, 0).unwrap();
        let (_, vecs) = eigenpairs_in(&h, &Interval::new(-1.0, 7.0).unwrap()).unwrap();
        let left: Vec<usize> = (0..cut).collect();
        let right: Vec<usize> = (cut..32).collect();
        for v in &vecs {
            let total = mask_weight(v, &left) + mask_weight(v, &right);
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn rescaled_points_are_the_window_eigenvalues() {
    let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(4.0));
    let (e, w, side, trials, seed) = (3.0, 6.0, 96, 12, 9);
    let ens = local_process(&spec, e, w, side, trials, seed).unwrap();
    let vol = side as f64;
    for s in &ens.samples {
        let h = spec.realize(side, box_seed(seed, side), s.trial).unwrap();
        let ev = eigen_full(&h, false).unwrap().values;
        let want: Vec<f64> = ev.iter().map(|&l| vol * (l - e)).filter(|x| x.abs() <= w).collect();
        assert_eq!(s.points.len(), want.len());
        for (p, x) in s.points.iter().zip(&want) {
            assert!((p - x).abs() < 1e-8, "{p} vs {x}");
            // inverse map
            assert!(((e + p / vol) - (e + x / vol)).abs() < 1e-10);
        }
    }
}

#[test]
fn superposition_pools_sub_box_spectra() {
    let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(6.0));
    let (e, w, side, ell) = (4.0, 8.0, 64, 16);
    let ens = superposition_process_with_box(&spec, e, w, side, ell, 6, 3).unwrap();
    let big_vol = side as f64;
    for s in &ens.samples {
        let d = spec.sample(side, box_seed(3, side), s.trial).unwrap();
        let mut want = Vec::new();
        for k in 0..side / ell {
            let sub = d.restrict(&[k * ell], ell).unwrap();
            let h = spec.assemble(&sub).unwrap();
            want.extend(
                eigen_full(&h, false).unwrap().values.iter().map(|&l| big_vol * (l - e)).filter(|x| x.abs() <= w),
            );
        }
        want.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(s.points.len(), want.len());
        for (p, x) in s.points.iter().zip(&want) {
            assert!((p - x).abs() < 1e-8);
        }
    }
}
