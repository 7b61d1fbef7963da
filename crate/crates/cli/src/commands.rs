//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cuneo_core::checkpoint::{load_checkpoint, save_checkpoint};
use cuneo_core::corpus::{
    build_split, filter, frequency_histogram, load_manifest, CorpusManifest, CorpusView, DatasetSplit,
    VisualizationKind,
};
use cuneo_core::dataset::{load_crops, CropSample};
use cuneo_core::evaluator::{
    cell_normals, evaluate, evaluate_samples, frequency_bin_report, grid_report, run_repeats, EvalReport,
    FrequencyBinReport, GridReport, TransferMatrix,
};
use cuneo_core::features::{embed_dataset, nearest_neighbors, project_2d, EmbeddingSet, Projection2D};
use cuneo_core::fixture::{write_fixture, FixtureSpec, FixtureSummary};
use cuneo_core::geometry::Grid;
use cuneo_core::model::Model;
use cuneo_core::trainer::{
    fine_tune_on_samples, load_split, train_on_samples, transfer, FineTuneConfig, TrainReport,
};

use crate::plot;
use crate::spec::{ExperimentSpec, Layout};
use crate::CliError;

/// A validated spec bound to its output directory.
pub struct Ctx {
    pub spec: ExperimentSpec,
    pub hash: String,
    pub layout: Layout,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    spec_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Unstamped<T> {
    #[serde(flatten)]
    body: T,
}

impl Ctx {
    pub fn new(spec: ExperimentSpec) -> Result<Self, CliError> {
        spec.validate()?;
        let layout = Layout::new(&spec.out);
        layout.create()?;
        Ok(Self {
            hash: spec.hash(),
            spec,
            layout,
        })
    }

    fn manifest(&self) -> Result<CorpusManifest, CliError> {
        Ok(load_manifest(&self.spec.corpus)?)
    }

    fn view<'a>(&self, m: &'a CorpusManifest, viz: VisualizationKind) -> Result<CorpusView<'a>, CliError> {
        Ok(filter(m, self.spec.proveniences.as_ref(), viz)?)
    }

    /// Builds the split (a pure function of corpus, filter and seed) and
    /// writes it to `split.json`.
    fn split(&self, m: &CorpusManifest) -> Result<DatasetSplit, CliError> {
        let view = self.view(m, self.spec.visualization)?;
        let split = build_split(&view, self.spec.split_seed, self.spec.min_instances);
        if split.train.is_empty() {
            return Err(CliError::Spec(format!(
                "no class has at least {} annotations",
                self.spec.min_instances
            )));
        }
        self.write_json_at(&self.layout.split(), &split)?;
        Ok(split)
    }

    fn write_json_at<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), CliError> {
        let stamped = Stamped {
            spec_hash: &self.hash,
            body: value,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string_pretty(&stamped).map_err(cuneo_core::Error::from)?)?;
        Ok(())
    }

    fn report<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.layout.reports().join(name);
        self.write_json_at(&path, value)?;
        Ok(path)
    }

    /// Prepends a `# spec_hash=...` comment line to a CSV written by the core
    /// library.
    fn stamp_csv(&self, path: &Path) -> Result<(), CliError> {
        let body = fs::read_to_string(path)?;
        fs::write(path, format!("# spec_hash={}\n{body}", self.hash))?;
        Ok(())
    }

    fn plot(&self, name: &str, svg: String) -> Result<PathBuf, CliError> {
        let path = self.layout.plots().join(name);
        fs::write(&path, svg)?;
        Ok(path)
    }

    fn checkpoint_config(&self) -> serde_json::Value {
        serde_json::json!({ "spec_hash": self.hash, "spec": self.spec })
    }

    /// The explicit checkpoint, else the fine-tuned one, else the base one.
    fn resolve_checkpoint(&self, explicit: Option<&Path>) -> Result<PathBuf, CliError> {
        if let Some(p) = explicit {
            if !p.is_file() {
                return Err(CliError::MissingCheckpoint(p.to_path_buf()));
            }
            return Ok(p.to_path_buf());
        }
        [self.layout.fine_tuned(), self.layout.model()]
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| CliError::MissingCheckpoint(self.layout.model()))
    }

    fn load_model(&self, m: &CorpusManifest, explicit: Option<&Path>) -> Result<(Model, PathBuf), CliError> {
        let path = self.resolve_checkpoint(explicit)?;
        let model = load_checkpoint(&path, Some(&m.vocabulary))?;
        Ok((model, path))
    }

    fn read_report<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Option<T> {
        let text = fs::read_to_string(self.layout.reports().join(name)).ok()?;
        serde_json::from_str::<Unstamped<T>>(&text).ok().map(|u| u.body)
    }
}

fn summary(label: &str, r: &EvalReport) {
    println!("{label}: top1 {:.4} top5 {:.4} n {}", r.top1, r.top5, r.n);
}

pub fn validate(corpus: &Path, min_instances: usize) -> Result<(), CliError> {
    let m = load_manifest(corpus)?;
    let view = m.full_view();
    let hist = frequency_histogram(&view);
    let mut per_viz: BTreeMap<VisualizationKind, usize> = BTreeMap::new();
    for s in &m.surfaces {
        for v in s.images.keys() {
            *per_viz.entry(*v).or_default() += 1;
        }
    }
    println!("corpus {}", corpus.display());
    println!("tablets {}", m.tablet_ids().len());
    println!("surfaces {}", m.surfaces.len());
    println!("annotations {}", m.annotations.len());
    println!("classes {}", m.vocabulary.len());
    println!(
        "proveniences {}",
        m.proveniences.iter().cloned().collect::<Vec<_>>().join(", ")
    );
    for (v, n) in per_viz {
        println!("  {v}: {n}/{} surfaces", m.surfaces.len());
    }
    println!(
        "classes with >= {min_instances} instances: {} covering {:.1}% of annotations",
        hist.classes_at_least(min_instances),
        100.0 * hist.coverage(min_instances)
    );
    Ok(())
}

pub fn split(ctx: &Ctx) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let s = ctx.split(&m)?;
    println!(
        "split: {} train, {} test, {} classes kept, {} excluded -> {}",
        s.train.len(),
        s.test.len(),
        s.included_classes.len(),
        s.excluded_classes.len(),
        ctx.layout.split().display()
    );
    Ok(())
}

fn save(ctx: &Ctx, model: &Model, report: &mut TrainReport, path: PathBuf, name: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    save_checkpoint(model, ctx.checkpoint_config(), &path)?;
    report.checkpoint = Some(path);
    ctx.report(name, report)?;
    Ok(())
}

fn print_train(label: &str, r: &TrainReport) {
    let test = r
        .test
        .map(|t| format!("test top1 {:.4} top5 {:.4}", t.top1, t.top5))
        .unwrap_or_default();
    println!(
        "{label}: {} epochs, train top1 {:.4}, {test}, {:.1}s",
        r.epochs.len(),
        r.final_train_top1,
        r.wall_clock_secs
    );
}

fn fine_tune_stage(
    ctx: &Ctx,
    model: Model,
    m: &CorpusManifest,
    split: &DatasetSplit,
    config: &FineTuneConfig,
) -> Result<Model, CliError> {
    let (train, test) = load_split(
        m,
        split,
        ctx.spec.visualization,
        ctx.spec.fine_tune_proveniences.as_ref().or(ctx.spec.proveniences.as_ref()),
    )?;
    let (model, mut report) = fine_tune_on_samples(model, &train, Some(&test), config)?;
    save(ctx, &model, &mut report, ctx.layout.fine_tuned(), "fine_tune.json")?;
    print_train("fine-tune", &report);
    Ok(model)
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let (train, test) = load_split(&m, &split, ctx.spec.visualization, ctx.spec.proveniences.as_ref())?;
    let (model, mut report) = train_on_samples(&m.vocabulary, &train, Some(&test), &ctx.spec.train)?;
    save(ctx, &model, &mut report, ctx.layout.model(), "train.json")?;
    print_train("train", &report);
    if let Some(ft) = &ctx.spec.fine_tune {
        fine_tune_stage(ctx, model, &m, &split, ft)?;
    }
    Ok(())
}

pub fn fine_tune(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.model());
    if !path.is_file() {
        return Err(CliError::MissingCheckpoint(path));
    }
    let model = load_checkpoint(&path, Some(&m.vocabulary))?;
    let config = ctx.spec.fine_tune.clone().unwrap_or_default();
    fine_tune_stage(ctx, model, &m, &split, &config)?;
    Ok(())
}

fn test_view<'a>(ctx: &Ctx, m: &'a CorpusManifest, split: &DatasetSplit) -> Result<CorpusView<'a>, CliError> {
    Ok(ctx.view(m, ctx.spec.visualization)?.restrict(&split.test_set()))
}

pub fn eval(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let (model, path) = ctx.load_model(&m, checkpoint)?;
    let split = ctx.split(&m)?;
    let report = evaluate(&model, &test_view(ctx, &m, &split)?, ctx.spec.visualization)?;
    let out = ctx.report("eval.json", &report)?;
    let dir = ctx.layout.reports().join("eval");
    report.write_csv(&dir)?;
    for f in ["per_class.csv", "per_provenience.csv", "repeats.csv"] {
        ctx.stamp_csv(&dir.join(f))?;
    }
    summary(&format!("eval {}", path.display()), &report);
    println!("report -> {}", out.display());
    Ok(())
}

pub fn repeats(ctx: &Ctx) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let (train, test) = load_split(&m, &split, ctx.spec.visualization, ctx.spec.proveniences.as_ref())?;
    let base = ctx.spec.train.seed;
    let seeds: Vec<u64> = (0..ctx.spec.repeats as u64).map(|i| base + i).collect();
    let result = run_repeats(&seeds, |seed| {
        let config = cuneo_core::trainer::TrainConfig {
            seed,
            ..ctx.spec.train.clone()
        };
        let (mut model, _) = train_on_samples(&m.vocabulary, &train, None, &config)?;
        if let Some(ft) = &ctx.spec.fine_tune {
            let ft_slice = ctx.spec.fine_tune_proveniences.as_ref();
            let ft_train: Vec<CropSample> = train
                .iter()
                .filter(|s| ft_slice.is_none_or(|p| p.contains(&s.meta.provenience)))
                .cloned()
                .collect();
            let ft = FineTuneConfig { seed, ..ft.clone() };
            model = fine_tune_on_samples(model, &ft_train, None, &ft)?.0;
        }
        let report = evaluate_samples(&model, &test)?;
        println!("repeat seed {seed}: top1 {:.4} top5 {:.4}", report.top1, report.top5);
        Ok(report)
    });
    match result {
        Ok(report) => {
            ctx.report("repeats.json", &report)?;
            let dir = ctx.layout.reports().join("repeats");
            report.write_csv(&dir)?;
            for f in ["per_class.csv", "per_provenience.csv", "repeats.csv"] {
                ctx.stamp_csv(&dir.join(f))?;
            }
            if let (Some(mean), std) = (report.mean, report.std) {
                println!(
                    "repeats: top1 {:.4} ± {} top5 {:.4} ± {}",
                    mean.top1,
                    std.map_or("n/a".into(), |s| format!("{:.4}", s.top1)),
                    mean.top5,
                    std.map_or("n/a".into(), |s| format!("{:.4}", s.top5)),
                );
            }
            Ok(())
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                ctx.report("repeats_partial.json", partial.as_ref())?;
            }
            Err(CliError::Repeat(failure.to_string()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VizSweepEntry {
    pub visualization: VisualizationKind,
    pub top1: f64,
    pub top5: f64,
    pub n: usize,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VizSweepReport {
    pub entries: Vec<VizSweepEntry>,
}

pub fn viz_sweep(ctx: &Ctx, visualizations: &[VisualizationKind]) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let kinds: Vec<VisualizationKind> = if visualizations.is_empty() {
        VisualizationKind::ALL
            .into_iter()
            .filter(|v| ctx.view(&m, *v).is_ok())
            .collect()
    } else {
        visualizations.to_vec()
    };
    let mut entries = Vec::new();
    for viz in kinds {
        let (train, test) = load_split(&m, &split, viz, ctx.spec.proveniences.as_ref())?;
        let (model, _) = train_on_samples(&m.vocabulary, &train, None, &ctx.spec.train)?;
        let path = ctx.layout.viz_model(viz);
        fs::create_dir_all(path.parent().expect("nested path"))?;
        save_checkpoint(&model, ctx.checkpoint_config(), &path)?;
        let r = evaluate_samples(&model, &test)?;
        summary(&format!("viz-sweep {viz}"), &r);
        entries.push(VizSweepEntry {
            visualization: viz,
            top1: r.top1,
            top5: r.top5,
            n: r.n,
            checkpoint: path,
        });
    }
    let report = VizSweepReport { entries };
    ctx.report("viz_sweep.json", &report)?;
    render_viz_sweep(ctx, &report)?;
    Ok(())
}

fn render_viz_sweep(ctx: &Ctx, r: &VizSweepReport) -> Result<(), CliError> {
    let bars: Vec<_> = r
        .entries
        .iter()
        .map(|e| (e.visualization.to_string(), e.top1, None))
        .collect();
    ctx.plot("viz_sweep.svg", plot::bar_chart("top-1 by visualization", &ctx.hash, &bars))?;
    Ok(())
}

/// Accepts a checkpoint path or a visualization tag naming a viz-sweep model.
fn checkpoint_arg(ctx: &Ctx, arg: &str) -> PathBuf {
    match arg.parse::<VisualizationKind>() {
        Ok(v) => ctx.layout.viz_model(v),
        Err(_) => PathBuf::from(arg),
    }
}

pub fn grid(ctx: &Ctx, baseline: &str, compare: &str) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let mut outcomes = Vec::new();
    for arg in [baseline, compare] {
        let path = checkpoint_arg(ctx, arg);
        if !path.is_file() {
            return Err(CliError::MissingCheckpoint(path));
        }
        let model = load_checkpoint(&path, Some(&m.vocabulary))?;
        let viz = model.info.visualization.unwrap_or(ctx.spec.visualization);
        let view = ctx.view(&m, viz)?.restrict(&split.test_set());
        outcomes.push(evaluate(&model, &view, viz)?.outcomes);
    }
    let test = m.full_view().restrict(&split.test_set());
    for grid in [Grid::Three, Grid::Five] {
        let normals = cell_normals(&test, grid)?;
        let report = grid_report(&outcomes[1], &outcomes[0], grid, Some(&normals))?;
        let k = grid.size();
        let name = format!("grid_{k}x{k}");
        ctx.report(&format!("{name}.json"), &report)?;
        let csv = ctx.layout.reports().join(format!("{name}.csv"));
        report.write_csv(&csv)?;
        ctx.stamp_csv(&csv)?;
        render_grid(ctx, &report)?;
        println!(
            "grid {k}x{k}: baseline top1 {:.4}, compared top1 {:.4}",
            report.baseline_top1, report.compared_top1
        );
    }
    Ok(())
}

fn render_grid(ctx: &Ctx, r: &GridReport) -> Result<(), CliError> {
    let k = r.grid.size();
    let mut cells = vec![vec![None; k]; k];
    for c in &r.cells {
        cells[c.row][c.col] = c
            .delta_top1_pp
            .map(|d| (format!("{d:+.1} pp"), d / 20.0));
    }
    let title = format!("top-1 delta vs baseline, {k}x{k}");
    ctx.plot(&format!("grid_{k}x{k}.svg"), plot::heatmap(&title, &ctx.hash, &cells))?;
    Ok(())
}

pub fn freq(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let (model, _) = ctx.load_model(&m, checkpoint)?;
    let split = ctx.split(&m)?;
    let view = ctx.view(&m, ctx.spec.visualization)?;
    let eval = evaluate(&model, &view.restrict(&split.test_set()), ctx.spec.visualization)?;
    let report = frequency_bin_report(&eval, &frequency_histogram(&view), &ctx.spec.bin_edges)?;
    ctx.report("freq.json", &report)?;
    let csv = ctx.layout.reports().join("freq.csv");
    report.write_csv(&csv)?;
    ctx.stamp_csv(&csv)?;
    render_freq(ctx, &report)?;
    for b in &report.bins {
        println!(
            "bin [{}, {}): {} classes, mean top1 {}",
            b.lo,
            b.hi.map_or("inf".into(), |h| h.to_string()),
            b.classes.len(),
            b.mean_top1.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}

fn render_freq(ctx: &Ctx, r: &FrequencyBinReport) -> Result<(), CliError> {
    let cols: Vec<_> = r
        .bins
        .iter()
        .map(|b| {
            let label = match b.hi {
                Some(h) => format!("{}-{}", b.lo, h),
                None => format!("{}+", b.lo),
            };
            (label, b.classes.iter().map(|c| c.top1).collect(), b.mean_top1)
        })
        .collect();
    ctx.plot("freq.svg", plot::strip_plot("top-1 by class frequency", &ctx.hash, &cols))?;
    Ok(())
}

pub fn transfer_cmd(
    ctx: &Ctx,
    combinations: &[BTreeSet<String>],
    held_out: &BTreeSet<String>,
) -> Result<(), CliError> {
    let m = ctx.manifest()?;
    let split = ctx.split(&m)?;
    let held: BTreeSet<String> = if held_out.is_empty() {
        ctx.spec.transfer.held_out.clone()
    } else {
        held_out.clone()
    };
    let mut combos: Vec<BTreeSet<String>> = if combinations.is_empty() {
        ctx.spec.transfer.combinations.clone()
    } else {
        combinations.to_vec()
    };
    if combos.is_empty() {
        let trainable: BTreeSet<String> = m
            .proveniences
            .iter()
            .filter(|p| !held.contains(*p))
            .filter(|p| ctx.spec.proveniences.as_ref().is_none_or(|f| f.contains(*p)))
            .cloned()
            .collect();
        combos = trainable.iter().map(|p| BTreeSet::from([p.clone()])).collect();
        if trainable.len() > 1 {
            combos.push(trainable);
        }
    }
    let matrix = transfer(&m, &split, ctx.spec.visualization, &combos, &held, &ctx.spec.train)?;
    ctx.report("transfer.json", &matrix)?;
    let csv = ctx.layout.reports().join("transfer.csv");
    matrix.write_csv(&csv)?;
    ctx.stamp_csv(&csv)?;
    render_transfer(ctx, &matrix)?;
    for r in &matrix.rows {
        let cells: Vec<String> = r
            .cells
            .iter()
            .map(|c| {
                let ratio = c.ood_ratio.map_or(String::new(), |v| format!(" ood_ratio {v:.3}"));
                format!("{} {:.3}{ratio}", c.test, c.top1)
            })
            .collect();
        let train: Vec<&str> = r.train.iter().map(String::as_str).collect();
        println!("train {}: {}", train.join("+"), cells.join(", "));
    }
    Ok(())
}

fn render_transfer(ctx: &Ctx, t: &TransferMatrix) -> Result<(), CliError> {
    let groups: Vec<_> = t
        .rows
        .iter()
        .map(|r| {
            let label = r.train.iter().cloned().collect::<Vec<_>>().join("+");
            let bars = r
                .cells
                .iter()
                .map(|c| (c.test.clone(), c.top1, c.in_distribution))
                .collect();
            (label, bars)
        })
        .collect();
    ctx.plot("transfer.svg", plot::grouped_bars("top-1 by training set", &ctx.hash, &groups))?;
    Ok(())
}

fn samples_for(
    ctx: &Ctx,
    m: &CorpusManifest,
    split: &DatasetSplit,
    set: &str,
) -> Result<Vec<CropSample>, CliError> {
    let view = ctx.view(m, ctx.spec.visualization)?;
    let view = match set {
        "train" => view.restrict(&split.train_set()),
        "test" => view.restrict(&split.test_set()),
        "all" => view,
        other => return Err(CliError::Spec(format!("unknown set `{other}`, use train, test or all"))),
    };
    Ok(load_crops(&view, ctx.spec.visualization)?)
}

fn embeddings(ctx: &Ctx, checkpoint: Option<&Path>, set: &str) -> Result<EmbeddingSet, CliError> {
    let m = ctx.manifest()?;
    let (model, _) = ctx.load_model(&m, checkpoint)?;
    let split = ctx.split(&m)?;
    let samples = samples_for(ctx, &m, &split, set)?;
    let emb = embed_dataset(&model, &samples, set)?;
    let csv = ctx.layout.reports().join("embeddings.csv");
    emb.write_csv(&csv)?;
    ctx.stamp_csv(&csv)?;
    Ok(emb)
}

pub fn embed(
    ctx: &Ctx,
    checkpoint: Option<&Path>,
    set: &str,
    query: Option<&str>,
    k: usize,
) -> Result<(), CliError> {
    let emb = embeddings(ctx, checkpoint, set)?;
    println!("embedded {} rows x {} features", emb.len(), emb.dim());
    if let Some(q) = query {
        let nn = nearest_neighbors(&emb, q, k)?;
        for n in &nn {
            println!("{} {:.4}", n.id, n.similarity);
        }
        ctx.report("neighbors.json", &serde_json::json!({ "query": q, "neighbors": nn }))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProjectionReport {
    projection: Projection2D,
    classes: Vec<String>,
    proveniences: Vec<String>,
}

pub fn project(ctx: &Ctx, checkpoint: Option<&Path>, set: &str) -> Result<(), CliError> {
    let emb = embeddings(ctx, checkpoint, set)?;
    let projection = project_2d(&emb, &ctx.spec.tsne)?;
    let csv = ctx.layout.reports().join("projection.csv");
    projection.write_csv(&emb, &csv)?;
    ctx.stamp_csv(&csv)?;
    let report = ProjectionReport {
        classes: emb.meta.iter().map(|m| m.class.clone()).collect(),
        proveniences: emb.meta.iter().map(|m| m.provenience.clone()).collect(),
        projection,
    };
    ctx.report("projection.json", &report)?;
    render_projection(ctx, &report)?;
    println!("projected {} points", report.classes.len());
    Ok(())
}

fn render_projection(ctx: &Ctx, r: &ProjectionReport) -> Result<(), CliError> {
    for (name, labels) in [("class", &r.classes), ("provenience", &r.proveniences)] {
        let points: Vec<_> = r
            .projection
            .coords
            .iter()
            .zip(labels)
            .map(|(c, l)| (*c, l.clone()))
            .collect();
        ctx.plot(
            &format!("projection_{name}.svg"),
            plot::scatter(&format!("t-SNE by {name}"), &ctx.hash, &points),
        )?;
    }
    Ok(())
}

/// Re-renders every plot whose report exists.
pub fn plot_all(ctx: &Ctx) -> Result<(), CliError> {
    let mut n = 0;
    if let Some(r) = ctx.read_report::<VizSweepReport>("viz_sweep.json") {
        render_viz_sweep(ctx, &r)?;
        n += 1;
    }
    for k in [3, 5] {
        if let Some(r) = ctx.read_report::<GridReport>(&format!("grid_{k}x{k}.json")) {
            render_grid(ctx, &r)?;
            n += 1;
        }
    }
    if let Some(r) = ctx.read_report::<FrequencyBinReport>("freq.json") {
        render_freq(ctx, &r)?;
        n += 1;
    }
    if let Some(r) = ctx.read_report::<TransferMatrix>("transfer.json") {
        render_transfer(ctx, &r)?;
        n += 1;
    }
    if let Some(r) = ctx.read_report::<ProjectionReport>("projection.json") {
        render_projection(ctx, &r)?;
        n += 1;
    }
    if let Some(r) = ctx.read_report::<EvalReport>("repeats.json") {
        let bars: Vec<_> = r
            .repeats
            .iter()
            .map(|x| (format!("seed {}", x.seed), x.top1, None))
            .collect();
        ctx.plot("repeats.svg", plot::bar_chart("top-1 per repeat", &ctx.hash, &bars))?;
        n += 1;
    }
    println!("rendered {n} plot group(s) into {}", ctx.layout.plots().display());
    Ok(())
}

pub fn make_fixture(out: &Path, spec: &FixtureSpec) -> Result<FixtureSummary, CliError> {
    let s = write_fixture(out, spec)?;
    println!(
        "fixture: {} surfaces, {} annotations, {} classes -> {}",
        s.surfaces,
        s.annotations,
        s.per_class.len(),
        out.display()
    );
    Ok(s)
}
