use cuneo_core::checkpoint::{load_checkpoint, save_checkpoint};
use cuneo_core::corpus::{build_split, load_manifest, VisualizationKind};
use cuneo_core::evaluator::evaluate_samples;
use cuneo_core::features::{cosine_similarity, embed_dataset};
use cuneo_core::fixture::{write_fixture, FixtureSpec};
use cuneo_core::nn::{Architecture, FEATURE_DIM};
use cuneo_core::trainer::{fine_tune_on_samples, load_split, train_on_samples, FineTuneConfig, TrainConfig};

/// One short run on the glyph fixture, shared by several checks to keep the
/// suite fast on a single core.
#[test]
fn short_run_trains_fine_tunes_and_embeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        visualizations: vec![VisualizationKind::SketchB],
        ..FixtureSpec::glyphs(2, 24)
    };
    write_fixture(dir.path(), &spec).unwrap();
    let m = load_manifest(dir.path()).unwrap();
    let split = build_split(&m.full_view(), 0, 20);
    let (train, test) = load_split(&m, &split, VisualizationKind::SketchB, None).unwrap();
    let config = TrainConfig {
        architecture: Architecture::Compact,
        epochs: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, report) = train_on_samples(&m.vocabulary, &train, Some(&test), &config).unwrap();
    assert_eq!(report.epochs.len(), 8);
    assert!(report.epochs[7].loss < report.epochs[0].loss, "{:?}", report.epochs);
    assert_eq!(report.train_size, train.len());
    let base = report.test.unwrap();
    assert!(base.top1 > 0.1, "chance is 0.1, got {}", base.top1);

    // Checkpoint round trip evaluates identically.
    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&model, serde_json::json!({"note": "test"}), &ckpt).unwrap();
    let reloaded = load_checkpoint(&ckpt, Some(&m.vocabulary)).unwrap();
    let (a, b) = (
        evaluate_samples(&model, &test).unwrap(),
        evaluate_samples(&reloaded, &test).unwrap(),
    );
    assert_eq!(a.outcomes, b.outcomes);

    // Trained features separate classes.
    let emb = embed_dataset(&model, &test, "test").unwrap();
    assert_eq!(emb.dim(), FEATURE_DIM);
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let s = cosine_similarity(&emb.rows[i], &emb.rows[j]);
            let acc = if emb.meta[i].class == emb.meta[j].class {
                &mut intra
            } else {
                &mut inter
            };
            acc.0 += s;
            acc.1 += 1;
        }
    }
    let (intra, inter) = (intra.0 / intra.1 as f64, inter.0 / inter.1 as f64);
    assert!(intra > inter, "intra {intra} inter {inter}");

    // Fine-tuning on the full fixture does not cost more than 1 pp.
    let ft = FineTuneConfig {
        seed: 5,
        ..FineTuneConfig::default()
    };
    let (_, ft_report) = fine_tune_on_samples(model, &train, Some(&test), &ft).unwrap();
    let after = ft_report.test.unwrap().top1;
    assert!(after >= base.top1 - 0.01, "fine-tune {} -> {after}", base.top1);
    let lrs = ft_report.lr_trace();
    assert!((lrs[0] - 5e-4).abs() <= 1e-12 * 5e-4);
    assert!((lrs.last().unwrap() - 1e-7).abs() < 1e-18);
}
