//! Property tests: every reader/writer pair is an identity on valid data.

use proptest::prelude::*;
use tempfile::tempdir;

use wsgully_core::data::{
    read_feature_store, read_ground_truth, read_label_matrix, read_manifest, read_pseudo_labels,
    write_feature_store, write_ground_truth, write_label_matrix, write_manifest,
    write_pseudo_labels, ClassDistribution, ClassLabel, DatasetManifest, FeatureStore,
    GroundTruthSet, ImageRef, LabelMatrix, LocationId, LocationRecord, PseudoLabelSet, WeakLabel,
};

fn ids(k: usize) -> Vec<LocationId> {
    (0..k)
        .map(|i| LocationId::new(format!("loc-{i:04}")).unwrap())
        .collect()
}

fn vote_strategy() -> impl Strategy<Value = WeakLabel> {
    prop::sample::select(vec![WeakLabel::Abstain, WeakLabel::Negative, WeakLabel::Positive])
}

fn label_strategy() -> impl Strategy<Value = ClassLabel> {
    prop::sample::select(vec![ClassLabel::Negative, ClassLabel::Positive])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn manifest_round_trips(
        k in 1usize..12,
        n in 1usize..4,
        gsd in prop::collection::vec(0.1f64..500.0, 1..4),
        year in 1990i32..2030,
    ) {
        let records = (0..k).map(|i| LocationRecord {
            location_id: LocationId::new(format!("loc {i}")).unwrap(),
            images: (0..n).map(|img| ImageRef {
                path: format!("imgs/{i}/{img}.tif"),
                gsd_cm: gsd[img % gsd.len()],
                year: year + img as i32,
            }).collect(),
        }).collect();
        let manifest = DatasetManifest::new(records).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&manifest, &path).unwrap();
        prop_assert_eq!(read_manifest(&path).unwrap(), manifest);
    }

    #[test]
    fn label_matrix_round_trips(
        k in 0usize..15,
        m in 1usize..5,
        seed_votes in prop::collection::vec(vote_strategy(), 0..75),
    ) {
        let votes: Vec<WeakLabel> = (0..k * m)
            .map(|i| seed_votes.get(i % seed_votes.len().max(1)).copied().unwrap_or(WeakLabel::Abstain))
            .collect();
        let names = (0..m).map(|j| format!("lf {j}")).collect();
        let matrix = LabelMatrix::new(ids(k), names, votes).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_label_matrix(&matrix, &path).unwrap();
        prop_assert_eq!(read_label_matrix(&path).unwrap(), matrix);
    }

    #[test]
    fn feature_store_round_trips_bit_exactly(
        k in 1usize..5,
        n in 1usize..3,
        d in 1usize..4,
        raw in prop::collection::vec(-1e6f32..1e6, 1..64),
    ) {
        let values: Vec<f32> = (0..k * n * d)
            .map(|i| raw[i % raw.len()])
            .collect();
        let store = FeatureStore::new(ids(k), n, d, values).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.egf");
        write_feature_store(&store, &path).unwrap();
        let loaded = read_feature_store(&path).unwrap();
        prop_assert_eq!(loaded.location_ids(), store.location_ids());
        for (a, b) in loaded.values().iter().zip(store.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn ground_truth_round_trips(labels in prop::collection::vec(label_strategy(), 1..30)) {
        let gt = GroundTruthSet::new(ids(labels.len()), labels).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        write_ground_truth(&gt, &path).unwrap();
        prop_assert_eq!(read_ground_truth(&path).unwrap(), gt);
    }

    #[test]
    fn pseudo_labels_round_trip_bit_exactly(ps in prop::collection::vec(0.0f64..=1.0, 1..30)) {
        let dists: Vec<ClassDistribution> = ps
            .iter()
            .map(|&p| ClassDistribution::new(1.0 - p, p).unwrap())
            .collect();
        let set = PseudoLabelSet::new(ids(ps.len()), dists).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_pseudo_labels(&set, &path).unwrap();
        let loaded = read_pseudo_labels(&path).unwrap();
        for (a, b) in loaded.distributions().iter().zip(set.distributions()) {
            prop_assert_eq!(a.p_neg().to_bits(), b.p_neg().to_bits());
            prop_assert_eq!(a.p_pos().to_bits(), b.p_pos().to_bits());
        }
    }
}
