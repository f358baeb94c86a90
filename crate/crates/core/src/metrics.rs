//! Coverage, Overflow and their F-score for a predicted division against
//! ground-truth scenes.
//!
//! Edge scenes count a missing neighbour as zero shots. A scene whose
//! neighbours hold no shots at all (single ground-truth scene) has zero
//! overflow, and per-scene overflow is clamped to 1.

use serde::{Deserialize, Serialize};

use crate::error::{OsgError, Result};
use crate::model::{labels_to_division, Division, SceneLabels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerScene {
    pub c: Vec<f64>,
    pub o: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub coverage: f64,
    pub overflow: f64,
    pub f_score: f64,
    pub per_scene: PerScene,
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi >= lo {
        hi - lo + 1
    } else {
        0
    }
}

/// Inclusive 1-based `(first, last)` shot of each group.
type Spans = Vec<(usize, usize)>;

fn scenes(pred: &Division, gt: &SceneLabels) -> Result<(Spans, Spans)> {
    if pred.n_shots() != gt.len() {
        return Err(OsgError::DimensionMismatch { expected: gt.len(), got: pred.n_shots() });
    }
    Ok((pred.groups().collect(), labels_to_division(gt).groups().collect()))
}

fn weighted(per_scene: &[f64], truth: &[(usize, usize)], n: usize) -> f64 {
    per_scene.iter().zip(truth).map(|(v, &(a, b))| v * (b + 1 - a) as f64).sum::<f64>() / n as f64
}

pub fn coverage(pred: &Division, gt: &SceneLabels) -> Result<(f64, Vec<f64>)> {
    let (pred, truth) = scenes(pred, gt)?;
    let per: Vec<f64> = truth
        .iter()
        .map(|&t| {
            let best = pred.iter().map(|&p| overlap(p, t)).max().unwrap_or(0);
            best as f64 / (t.1 + 1 - t.0) as f64
        })
        .collect();
    Ok((weighted(&per, &truth, gt.len()), per))
}

pub fn overflow(pred: &Division, gt: &SceneLabels) -> Result<(f64, Vec<f64>)> {
    let (pred, truth) = scenes(pred, gt)?;
    let size = |s: (usize, usize)| s.1 + 1 - s.0;
    let per: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(t, &scene)| {
            let spill: usize = pred
                .iter()
                .filter_map(|&p| {
                    let shared = overlap(p, scene);
                    (shared > 0).then(|| size(p) - shared)
                })
                .sum();
            let prev = if t > 0 { size(truth[t - 1]) } else { 0 };
            let next = truth.get(t + 1).map_or(0, |&s| size(s));
            let neighbours = prev + next;
            if neighbours == 0 {
                0.0
            } else {
                (spill as f64 / neighbours as f64).min(1.0)
            }
        })
        .collect();
    Ok((weighted(&per, &truth, gt.len()), per))
}

pub fn harmonic(coverage: f64, overflow: f64) -> f64 {
    let denom = coverage + (1.0 - overflow);
    if denom > 0.0 {
        2.0 * coverage * (1.0 - overflow) / denom
    } else {
        0.0
    }
}

pub fn f_score(pred: &Division, gt: &SceneLabels) -> Result<MetricsReport> {
    let (c, per_c) = coverage(pred, gt)?;
    let (o, per_o) = overflow(pred, gt)?;
    Ok(MetricsReport { coverage: c, overflow: o, f_score: harmonic(c, o), per_scene: PerScene { c: per_c, o: per_o } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::division_to_labels;
    use proptest::prelude::*;

    fn gt(v: &[usize]) -> SceneLabels {
        SceneLabels::new(v.to_vec()).unwrap()
    }

    fn div(b: &[usize], n: usize) -> Division {
        Division::new(b.to_vec(), n).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = gt(&[1, 1, 2, 2, 2, 3]);
        let r = f_score(&labels_to_division(&g), &g).unwrap();
        assert_eq!((r.coverage, r.overflow, r.f_score), (1.0, 0.0, 1.0));
    }

    #[test]
    fn single_predicted_scene() {
        let g = gt(&[1, 1, 2, 2, 2, 3]);
        let (c, _) = coverage(&div(&[6], 6), &g).unwrap();
        assert_eq!(c, 1.0);
        let (o, per) = overflow(&div(&[6], 6), &g).unwrap();
        assert_eq!(per, vec![1.0, 1.0, 1.0]);
        assert_eq!(o, 1.0);
    }

    #[test]
    fn hand_evaluated_example() {
        let g = gt(&[1, 1, 1, 2, 2, 2]);
        let p = div(&[2, 6], 6);
        let r = f_score(&p, &g).unwrap();
        assert!((r.coverage - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.per_scene.o, vec![1.0, 1.0 / 3.0]);
        assert!((r.overflow - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f_score - 10.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn single_gt_scene_has_no_overflow() {
        let g = gt(&[1, 1, 1, 1]);
        assert_eq!(overflow(&div(&[1, 3, 4], 4), &g).unwrap().0, 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(f_score(&div(&[3], 3), &gt(&[1, 1])).is_err());
    }

    #[test]
    fn oversegmenting_only_lowers_coverage() {
        let g = gt(&[1, 1, 1, 1, 2, 2, 2]);
        let r = f_score(&div(&[2, 4, 7], 7), &g).unwrap();
        assert_eq!(r.overflow, 0.0);
        assert!(r.coverage < 1.0);
    }

    fn arb_case() -> impl Strategy<Value = (SceneLabels, Division)> {
        (1usize..25).prop_flat_map(|n| {
            (prop::collection::btree_set(1..n.max(2), 0..n), prop::collection::btree_set(1..n.max(2), 0..n)).prop_map(
                move |(a, b)| {
                    let mk = |s: std::collections::BTreeSet<usize>| {
                        let mut v: Vec<usize> = s.into_iter().filter(|&x| x < n).collect();
                        v.push(n);
                        Division::new(v, n).unwrap()
                    };
                    (division_to_labels(&mk(a)), mk(b))
                },
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_in_unit_range((g, p) in arb_case()) {
            let r = f_score(&p, &g).unwrap();
            for v in [r.coverage, r.overflow, r.f_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(r.coverage > 0.0);
            let expect_f = harmonic(r.coverage, r.overflow);
            prop_assert_eq!(r.f_score, expect_f);
        }

        #[test]
        fn perfect_score_only_for_exact_division((g, p) in arb_case()) {
            prop_assume!(g.len() >= 2 && g.num_scenes() >= 2);
            let r = f_score(&p, &g).unwrap();
            prop_assert_eq!(r.f_score == 1.0, p == labels_to_division(&g));
        }
    }
}
