use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use proptest::prelude::*;

use cuneo_core::corpus::{build_split, CorpusManifest, RawAnnotation, RawClass, RawManifest, RawSurface};
use cuneo_core::evaluator::{build_transfer_matrix, rank_of, top_k_hits};
use cuneo_core::features::cosine_similarity;
use cuneo_core::geometry::{decode_normal, encode_normal, extreme_rect, grid_cell, squarify, Grid, Point};
use cuneo_core::nn::cosine_lr;

fn polygon() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-1.0e4..1.0e4f64, -1.0e4..1.0e4f64), 3..16)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
}

fn manifest(counts: &[usize]) -> CorpusManifest {
    let classes = (0..counts.len())
        .map(|i| RawClass {
            name: format!("K{i}"),
            unicode: None,
        })
        .collect();
    let annotations = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| {
            (0..n).map(move |k| RawAnnotation {
                id: format!("{i}-{k}"),
                tablet_id: "T".into(),
                side: "front".into(),
                class: format!("K{i}"),
                polygon: vec![[0.0, 0.0], [4.0, 0.0], [2.0, 3.0]],
            })
        })
        .collect();
    let raw = RawManifest {
        proveniences: None,
        classes,
        surfaces: vec![RawSurface {
            tablet_id: "T".into(),
            side: "front".into(),
            provenience: "P".into(),
            width_px: 10,
            height_px: 10,
            images: BTreeMap::new(),
        }],
        annotations,
    };
    CorpusManifest::from_raw(Path::new("."), raw, false).unwrap()
}

proptest! {
    #[test]
    fn squarify_covers_extremes_and_is_idempotent(poly in polygon()) {
        let sq = squarify(&poly).unwrap();
        let (x0, y0, x1, y1) = extreme_rect(&poly).unwrap();
        prop_assert_eq!(sq.side, (x1 - x0).max(y1 - y0));
        prop_assert!(sq.x0 <= x0 && sq.y0 <= y0);
        prop_assert!(sq.x0 + sq.side >= x1 && sq.y0 + sq.side >= y1);
        prop_assert_eq!(squarify(&sq.corners()).unwrap(), sq);
    }

    #[test]
    fn split_partitions_included_classes(
        counts in prop::collection::vec(1usize..60, 1..12),
        seed in any::<u64>(),
        min in 1usize..30,
    ) {
        let m = manifest(&counts);
        let split = build_split(&m.full_view(), seed, min);
        let (train, test) = (split.train_set(), split.test_set());
        prop_assert!(train.is_disjoint(&test));
        let expected: BTreeSet<String> = counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n >= min)
            .flat_map(|(i, &n)| (0..n).map(move |k| format!("{i}-{k}")))
            .collect();
        let union: BTreeSet<String> = train.union(&test).cloned().collect();
        prop_assert_eq!(union, expected);
        prop_assert_eq!(
            split.included_classes.len() + split.excluded_classes.len(),
            counts.len()
        );
    }

    #[test]
    fn grid_cells_partition_the_unit_square(u in 0.0..=1.0f64, v in 0.0..=1.0f64) {
        for grid in [Grid::Three, Grid::Five] {
            let k = grid.size() as f64;
            let c = grid_cell(u, v, grid).unwrap();
            prop_assert!(c.row < grid.size() && c.col < grid.size());
            prop_assert!(c.col as f64 / k <= u && (u < (c.col + 1) as f64 / k || c.col == grid.size() - 1));
            prop_assert!(c.row as f64 / k <= v && (v < (c.row + 1) as f64 / k || c.row == grid.size() - 1));
        }
    }

    #[test]
    fn grid_rejects_outside(u in 1.0001..10.0f64) {
        prop_assert!(grid_cell(u, 0.5, Grid::Three).is_err());
        prop_assert!(grid_cell(0.5, -u, Grid::Five).is_err());
    }

    #[test]
    fn top_k_is_monotone_in_k(
        logits in prop::collection::vec(-3i8..3, 1..40),
        pick in any::<prop::sample::Index>(),
    ) {
        let logits: Vec<f32> = logits.into_iter().map(f32::from).collect();
        let target = pick.index(logits.len());
        let rank = rank_of(&logits, target);
        for k in 1..=logits.len() + 1 {
            prop_assert_eq!(top_k_hits(&logits, target, k), rank < k);
            if top_k_hits(&logits, target, k) {
                prop_assert!(top_k_hits(&logits, target, k + 1));
            }
        }
        prop_assert!(top_k_hits(&logits, target, logits.len()));
    }

    #[test]
    fn normal_encoding_round_trips(c in any::<u8>(), v in -1.0..=1.0f64) {
        prop_assert_eq!(encode_normal(decode_normal(c)), c);
        prop_assert!((decode_normal(encode_normal(v)) - v).abs() <= 1.0 / 255.0 + 1e-12);
    }

    #[test]
    fn cosine_similarity_is_symmetric_and_bounded(
        pair in prop::collection::vec((-5.0..5.0f32, -5.0..5.0f32), 1..64),
    ) {
        let (a, b): (Vec<f32>, Vec<f32>) = pair.into_iter().unzip();
        let ab = cosine_similarity(&a, &b);
        prop_assert_eq!(ab, cosine_similarity(&b, &a));
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        if a.iter().any(|&x| x != 0.0) {
            prop_assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_lr_decays_between_endpoints(epochs in 2usize..200, hi in 1e-4..1e-1f64, ratio in 1e-4..1.0f64) {
        let lo = hi * ratio;
        prop_assert!((cosine_lr(0, epochs, hi, lo) - hi).abs() <= 1e-12 * hi);
        prop_assert!((cosine_lr(epochs - 1, epochs, hi, lo) - lo).abs() <= 1e-12 * hi);
        for e in 1..epochs {
            prop_assert!(cosine_lr(e, epochs, hi, lo) <= cosine_lr(e - 1, epochs, hi, lo));
        }
    }

    #[test]
    fn transfer_flags_follow_membership(
        accs in prop::collection::vec(0.0..=1.0f64, 4),
        mask in 1u8..8,
    ) {
        let provs = ["A", "B", "C"];
        let train: BTreeSet<String> = provs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.to_string())
            .collect();
        let per: BTreeMap<String, f64> = provs
            .iter()
            .chain(["H"].iter())
            .zip(&accs)
            .map(|(p, a)| (p.to_string(), *a))
            .collect();
        let held = BTreeSet::from(["H".to_string()]);
        let m = build_transfer_matrix(&held, vec![(train.clone(), per.clone())]).unwrap();
        let row = m.row(&train).unwrap();
        let in_mean = train.iter().map(|p| per[p]).sum::<f64>() / train.len() as f64;
        for cell in &row.cells {
            prop_assert_eq!(cell.in_distribution, train.contains(&cell.test));
            if cell.in_distribution {
                prop_assert!(cell.ood_ratio.is_none());
            } else if in_mean > 0.0 {
                let r = cell.ood_ratio.unwrap();
                prop_assert!((r - per[&cell.test] / in_mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn transfer_rejects_held_out_in_training() {
    let held = BTreeSet::from(["H".to_string()]);
    let bad = BTreeSet::from(["A".to_string(), "H".to_string()]);
    assert!(build_transfer_matrix(&held, vec![(bad, BTreeMap::new())]).is_err());
}
