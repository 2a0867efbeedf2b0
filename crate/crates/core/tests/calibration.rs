//! Size of the goodness-of-fit tests under the null hypothesis.

use anderson_core::pointprocess::{poisson_counts_test, spacing_test, synthetic_poisson};
use anderson_core::Interval;

const REPS: u64 = 1000;

#[test]
fn tests_reject_true_poisson_at_nominal_rate() {
    let b = [Interval::new(-2.0, 2.0).unwrap()];
    let (rate, window, trials) = (0.3, 6.0, 300);
    let mut chi = 0;
    let mut ks = 0;
    for rep in 0..REPS {
        let ens = synthetic_poisson(rate, window, trials, 1000 + rep).unwrap();
        if poisson_counts_test(&ens, &b, rate).unwrap().reject {
            chi += 1;
        }
        if spacing_test(&ens, rate).unwrap().reject {
            ks += 1;
        }
    }
    let (pc, pk) = (chi as f64 / REPS as f64, ks as f64 / REPS as f64);
    assert!((pc - 0.05).abs() <= 0.02, "chi-square rejection rate {pc}");
    assert!((pk - 0.05).abs() <= 0.02, "KS rejection rate {pk}");
}

#[test]
fn tests_reject_a_lattice() {
    let ens = synthetic_poisson(0.3, 6.0, 300, 1).unwrap();
    let mut rigid = ens.clone();
    for s in &mut rigid.samples {
        // equally spaced points with the same intensity
        let n = s.points.len().max(1);
        s.points = (0..n).map(|k| -6.0 + (k as f64 + 0.5) * 12.0 / n as f64).collect();
        s.successors = vec![Some(12.0 / n as f64); n];
    }
    assert!(spacing_test(&rigid, 0.3).unwrap().reject);
}
