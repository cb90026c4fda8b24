use adaqn::adasac::{polyak_update, two_lowest};
use adaqn::evo::duplicate_slots;
use adaqn::harness::{auc, entropy, iqm, percentile, running_max_curve};
use adaqn::{argmax, argmin, LinearSchedule};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..60)
}

proptest! {
    #[test]
    fn iqm_lies_within_the_sample(v in values()) {
        let m = iqm(&v).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
    }

    #[test]
    fn iqm_ignores_order(v in values(), seed in any::<u64>()) {
        let mut w = v.clone();
        let n = w.len();
        w.rotate_left((seed % n as u64) as usize);
        w.reverse();
        prop_assert!((iqm(&v).unwrap() - iqm(&w).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn iqm_is_shift_and_scale_equivariant(v in values(), c in -50.0..50.0f64, s in 0.1..10.0f64) {
        let w: Vec<f64> = v.iter().map(|x| s * x + c).collect();
        prop_assert!((iqm(&w).unwrap() - (s * iqm(&v).unwrap() + c)).abs() < 1e-7);
    }

    #[test]
    fn iqm_is_monotone(v in values(), i in any::<prop::sample::Index>(), d in 0.0..100.0f64) {
        let mut w = v.clone();
        let k = i.index(w.len());
        w[k] += d;
        prop_assert!(iqm(&w).unwrap() >= iqm(&v).unwrap() - 1e-9);
    }

    #[test]
    fn iqm_ignores_extreme_outliers(v in prop::collection::vec(-1.0..1.0f64, 8..40)) {
        let mut w = v.clone();
        let m = iqm(&v).unwrap();
        w.push(1e12);
        w.push(-1e12);
        prop_assert!(iqm(&w).unwrap().abs() < 2.0 + m.abs());
    }

    #[test]
    fn running_max_dominates_and_never_drops(v in values()) {
        let r = running_max_curve(&v);
        prop_assert_eq!(r.len(), v.len());
        prop_assert!(r.iter().zip(&v).all(|(m, x)| m >= x));
        prop_assert!(r.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*r.last().unwrap(), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn percentiles_are_ordered(v in values(), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
    }

    #[test]
    fn auc_of_a_constant_is_the_constant(c in -100.0..100.0f64, gaps in prop::collection::vec(1u32..50, 1..20)) {
        let mut steps = vec![0.0];
        for g in gaps {
            steps.push(steps.last().unwrap() + g as f64);
        }
        let vals = vec![c; steps.len()];
        prop_assert!((auc(&steps, &vals).unwrap() - c).abs() < 1e-9);
    }

    #[test]
    fn entropy_is_bounded_by_log_support(counts in prop::collection::vec(0u64..1000, 1..10)) {
        let h = entropy(&counts);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (counts.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn arg_extrema_are_extreme_and_lowest(v in values()) {
        let (lo, hi) = (argmin(&v), argmax(&v));
        prop_assert!(v.iter().all(|x| *x >= v[lo]) && v[..lo].iter().all(|x| *x > v[lo]));
        prop_assert!(v.iter().all(|x| *x <= v[hi]) && v[..hi].iter().all(|x| *x < v[hi]));
    }

    #[test]
    fn two_lowest_are_the_two_smallest(v in prop::collection::vec(-10i32..10, 2..12)) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let (a, b) = two_lowest(&v);
        prop_assert_ne!(a, b);
        prop_assert!(v[a] <= v[b]);
        let below = v.iter().enumerate().filter(|(i, x)| *i != a && *i != b && **x < v[b]).count();
        prop_assert_eq!(below, 0);
    }

    #[test]
    fn polyak_stays_between_target_and_online(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..30),
        tau in 0.0..=1.0f64,
    ) {
        let (mut target, online): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let before = target.clone();
        polyak_update(&mut target, &online, tau);
        for ((t, o), b) in target.iter().zip(&online).zip(&before) {
            prop_assert!(*t >= b.min(*o) - 1e-12 && *t <= b.max(*o) + 1e-12);
        }
    }

    #[test]
    fn duplicate_slots_spare_the_elite_and_first_copies(parents in prop::collection::vec(0usize..6, 2..10)) {
        let slots = duplicate_slots(&parents);
        let last = parents.len() - 1;
        prop_assert!(slots.iter().all(|&s| s < last));
        let mut kept: Vec<usize> = (0..last).filter(|s| !slots.contains(s)).map(|s| parents[s]).collect();
        kept.push(parents[last]);
        let n = kept.len();
        kept.sort_unstable();
        kept.dedup();
        prop_assert_eq!(kept.len(), n);
    }

    #[test]
    fn linear_schedule_moves_monotonically(start in 0.0..=1.0f64, end in 0.0..=1.0f64, dur in 1u64..1000, t in 0u64..2000) {
        let s = LinearSchedule::new(start, end, dur);
        let v = s.value(t);
        prop_assert!(v >= start.min(end) - 1e-12 && v <= start.max(end) + 1e-12);
        prop_assert!((s.value(dur + t) - end).abs() < 1e-12);
    }
}
