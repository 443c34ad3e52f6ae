use miaeval::eval::{auc, roc_curve};
use proptest::prelude::*;

fn pairwise(m: &[f64], n: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in m {
        for &b in n {
            twice += match a.partial_cmp(&b).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * m.len() * n.len()) as f64
}

/// Scores drawn from a small lattice half the time, so ties are common.
fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-4i32..4).prop_map(|i| f64::from(i) * 0.5), -10.0..10.0f64],
        1..200,
    )
}

/// Trapezoid area under the ROC points.
fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn equals_pairwise_oracle(m in scores(), n in scores()) {
        prop_assert_eq!(auc(&m, &n).unwrap().to_bits(), pairwise(&m, &n).to_bits());
    }

    #[test]
    fn antisymmetric(m in scores(), n in scores()) {
        // Exact in counts; the two quotients may each round by half an ulp.
        prop_assert!((auc(&m, &n).unwrap() + auc(&n, &m).unwrap() - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn invariant_under_increasing_maps(m in scores(), n in scores()) {
        let base = auc(&m, &n).unwrap();
        let maps: [fn(f64) -> f64; 3] = [f64::exp, |x| x.powi(3), |x| x.atan()];
        for f in maps {
            let fm: Vec<f64> = m.iter().map(|&x| f(x)).collect();
            let fnn: Vec<f64> = n.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(auc(&fm, &fnn).unwrap(), base);
        }
    }

    #[test]
    fn decreasing_map_reflects(m in scores(), n in scores()) {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let reflected = auc(&neg(&m), &neg(&n)).unwrap();
        prop_assert_eq!(reflected.to_bits(), pairwise(&n, &m).to_bits());
        prop_assert!((reflected - (1.0 - auc(&m, &n).unwrap())).abs() <= f64::EPSILON);
    }

    #[test]
    fn self_comparison_is_chance(m in scores()) {
        prop_assert_eq!(auc(&m, &m).unwrap(), 0.5);
    }

    #[test]
    fn roc_area_matches_auc(m in scores(), n in scores()) {
        let pts = roc_curve(&m, &n).unwrap();
        prop_assert_eq!(pts.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(pts.last().copied(), Some((1.0, 1.0)));
        prop_assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        prop_assert!((trapezoid(&pts) - auc(&m, &n).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn documented_examples() {
    assert_eq!(auc(&[3.0, 2.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(auc(&[1.0], &[1.0]).unwrap(), 0.5);
    assert_eq!(auc(&[2.0, 0.0], &[1.0]).unwrap(), 0.5);
}

#[test]
fn nan_scores_are_rejected() {
    assert!(auc(&[f64::NAN], &[0.0]).is_err());
}
