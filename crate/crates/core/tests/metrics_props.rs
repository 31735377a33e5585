//! Metrics against a per-tick recount.

use attune_core::domain::Classification;
use attune_core::eval::{metrics, ConfusionCounts};
use proptest::prelude::*;

/// Recomputes every metric straight from (label, predicted) pairs.
fn recount(ticks: &[(bool, bool)]) -> [f64; 5] {
    let n = ticks.len() as f64;
    let hits = |f: &dyn Fn(&(bool, bool)) -> bool| ticks.iter().filter(|t| f(t)).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let correct = hits(&|(l, p)| l == p);
    let true_pos = hits(&|(l, p)| *l && *p);
    let predicted_pos = hits(&|(_, p)| *p);
    let actual_pos = hits(&|(l, _)| *l);
    let actual_neg = hits(&|(l, _)| !*l);
    let true_neg = hits(&|(l, p)| !*l && !*p);
    let precision = div(true_pos, predicted_pos);
    let recall = div(true_pos, actual_pos);
    let f1 = div(2.0 * precision * recall, precision + recall);
    let balanced = (recall + div(true_neg, actual_neg)) / 2.0;
    [correct / n, precision, recall, f1, balanced]
}

fn class(off: bool) -> Classification {
    if off {
        Classification::OffTask
    } else {
        Classification::OnTask
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn equals_recount(ticks in prop::collection::vec(any::<(bool, bool)>(), 1..=200)) {
        let mut c = ConfusionCounts::default();
        for (l, p) in &ticks {
            c.record(class(*l), class(*p));
        }
        prop_assert_eq!(c.total() as usize, ticks.len());
        let m = metrics(&c).unwrap();
        let got = [m.accuracy, m.precision, m.recall, m.f1, m.balanced_accuracy];
        for (g, w) in got.iter().zip(recount(&ticks)) {
            prop_assert!((g - w).abs() <= 1e-12, "{} vs {}", g, w);
        }
        prop_assert_eq!(m.precision_undefined, c.tp + c.fp == 0);
        prop_assert_eq!(m.recall_undefined, c.tp + c.fn_ == 0);
    }

    #[test]
    fn bounded(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 1u64..1000) {
        let m = metrics(&ConfusionCounts { tp, fp, fn_, tn }).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.balanced_accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn published_full_system_row() {
    // Counts with precision 0.959 and recall 0.755.
    let tp = 755;
    let fn_ = 245;
    let fp = (tp as f64 / 0.959 - tp as f64).round() as u64;
    let m = metrics(&ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: 1000,
    })
    .unwrap();
    assert!((m.precision - 0.959).abs() < 0.0005);
    assert!((m.f1 - 0.845).abs() <= 0.001, "{}", m.f1);
}
