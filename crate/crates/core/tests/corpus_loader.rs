use std::collections::{BTreeMap, BTreeSet};

use cuneo_core::corpus::{build_split, filter, frequency_histogram, load_manifest, VisualizationKind};
use cuneo_core::dataset::load_crops;
use cuneo_core::fixture::{write_fixture, FixtureSpec};
use cuneo_core::geometry::CROP_SIZE;

#[test]
fn loader_counts_match_raw_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        visualizations: vec![VisualizationKind::SketchB, VisualizationKind::NormalMap],
        absent: vec![("East-01:back".into(), VisualizationKind::SketchB)],
        ..FixtureSpec::styles(3, 6, 2)
    };
    write_fixture(dir.path(), &spec).unwrap();

    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let anns = raw["annotations"].as_array().unwrap();
    let surfaces = raw["surfaces"].as_array().unwrap();
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    for a in anns {
        *per_class.entry(a["class"].as_str().unwrap().to_string()).or_default() += 1;
    }
    let tablets: BTreeSet<&str> = surfaces.iter().map(|s| s["tablet_id"].as_str().unwrap()).collect();
    let provs: BTreeSet<&str> = surfaces.iter().map(|s| s["provenience"].as_str().unwrap()).collect();

    let m = load_manifest(dir.path()).unwrap();
    assert_eq!(m.annotations.len(), anns.len());
    assert_eq!(m.surfaces.len(), surfaces.len());
    assert_eq!(m.tablet_ids().len(), tablets.len());
    assert_eq!(m.proveniences.iter().map(String::as_str).collect::<BTreeSet<_>>(), provs);
    assert_eq!(frequency_histogram(&m.full_view()).counts, per_class);

    // One surface lacks SketchB, so the SketchB filter needs a provenience
    // subset that excludes it.
    assert!(filter(&m, None, VisualizationKind::SketchB).is_err());
    let north = BTreeSet::from(["North".to_string()]);
    let view = filter(&m, Some(&north), VisualizationKind::SketchB).unwrap();
    let north_count = anns
        .iter()
        .filter(|a| a["tablet_id"].as_str().unwrap().starts_with("North-"))
        .count();
    assert_eq!(view.len(), north_count);

    let crops = load_crops(&view, VisualizationKind::SketchB).unwrap();
    assert_eq!(crops.len(), north_count);
    assert!(crops
        .iter()
        .all(|c| c.pixels.width == CROP_SIZE && c.pixels.height == CROP_SIZE));
    assert!(crops.iter().all(|c| m.vocabulary.name(c.label) == Some(c.meta.class.as_str())));
}

#[test]
fn split_of_fixture_is_stable_across_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        visualizations: vec![VisualizationKind::SketchB],
        ..FixtureSpec::glyphs(1, 25)
    };
    write_fixture(dir.path(), &spec).unwrap();
    let a = build_split(&load_manifest(dir.path()).unwrap().full_view(), 4, 20);
    let b = build_split(&load_manifest(dir.path()).unwrap().full_view(), 4, 20);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.test.len(), 10 * 5);
    assert!(a.excluded_classes.is_empty());
}
