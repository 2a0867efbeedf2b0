//! Worked examples with closed-form answers.

use anderson_core::dos::free_lattice_ids;
use anderson_core::{eigen_full, periodic_laplacian, AssembledOperator, DisorderRealization, SiteDistribution, TorusGeometry};
use nalgebra::DMatrix;

#[test]
fn rank_one_on_a_two_level_toy() {
    let h0 = AssembledOperator::from_dense(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0]))).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let h = h0.add_rank_one_vector(&[r, r], 10.0).unwrap();
    let ev = eigen_full(&h, false).unwrap().values;
    let s = 101f64.sqrt();
    assert!((ev[0] - (11.0 - s) / 2.0).abs() < 1e-12);
    assert!((ev[1] - (11.0 + s) / 2.0).abs() < 1e-12);
    assert!((ev[0] - 0.4750).abs() < 1e-4 && (ev[1] - 10.5250).abs() < 1e-4);
}

#[test]
fn second_eigenvalue_on_a_circle_of_length_two_pi() {
    let n = 64;
    let h = periodic_laplacian(1, n, 2.0 * std::f64::consts::PI / n as f64).unwrap();
    let ev = eigen_full(&h, false).unwrap().values;
    assert!(ev[0].abs() < 1e-10);
    assert!((ev[1] - 0.99920).abs() < 1e-5, "{}", ev[1]);
}

#[test]
fn free_operators_start_at_zero() {
    for (d, side) in [(1, 10), (2, 3), (2, 6), (3, 4)] {
        let g = TorusGeometry::lattice(d, side).unwrap();
        let dis = DisorderRealization::from_values(g.clone(), vec![0.0; g.volume() as usize]).unwrap();
        let h = anderson_core::build_lattice(&g, &dis).unwrap();
        let min = eigen_full(&h, false).unwrap().values[0];
        assert!(min.abs() < 1e-12, "d={d} L={side}: {min}");
    }
}

#[test]
fn quantile_at_zero_is_the_bottom_of_the_support() {
    for dist in [SiteDistribution::uniform(1.0), SiteDistribution::uniform(3.0).with_coupling(2.0)] {
        assert_eq!(dist.quantile(0.0).unwrap(), 0.0);
    }
}

#[test]
fn free_ids_is_one_half_at_the_band_centre() {
    assert_eq!(free_lattice_ids(1, 102, 2.0), 0.5);
}
