//! Accuracy analyses: top-k with repeat statistics, provenience transfer,
//! frequency bins and tablet-grid breakdowns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, CorpusView, FrequencyHistogram, VisualizationKind};
use crate::dataset::{load_crops, load_rgb, CropSample};
use crate::error::{Error, Result};
use crate::geometry::{average_normal, grid_cell, AverageNormal, Grid, NormalRegion};
use crate::model::{classify_samples, Classifier};

/// Number of classes ranked strictly ahead of `target`. Equal logits rank
/// the lower class index first.
pub fn rank_of(logits: &[f32], target: usize) -> usize {
    let t = logits[target];
    logits
        .iter()
        .enumerate()
        .filter(|&(j, &l)| l > t || (l == t && j < target))
        .count()
}

/// Whether `target` is among the `k` highest logits.
pub fn top_k_hits(logits: &[f32], target: usize, k: usize) -> bool {
    rank_of(logits, target) < k
}

/// Prediction outcome for one test example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: String,
    pub class: String,
    pub label: usize,
    /// Zero-based rank of the true class among all logits.
    pub rank: usize,
    pub provenience: String,
    pub centroid: (f64, f64),
}

impl Outcome {
    pub fn hit(&self, k: usize) -> bool {
        self.rank < k
    }
}

pub fn outcomes_from_logits(rows: &[Vec<f32>], samples: &[CropSample]) -> Vec<Outcome> {
    rows.iter()
        .zip(samples)
        .map(|(row, s)| Outcome {
            id: s.meta.id.clone(),
            class: s.meta.class.clone(),
            label: s.label,
            rank: rank_of(row, s.label),
            provenience: s.meta.provenience.clone(),
            centroid: s.meta.centroid,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub top1: f64,
    pub top5: f64,
    pub support: usize,
}

impl Accuracy {
    pub fn of<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> Self {
        let (mut n, mut h1, mut h5) = (0usize, 0usize, 0usize);
        for o in outcomes {
            n += 1;
            h1 += o.hit(1) as usize;
            h5 += o.hit(5) as usize;
        }
        let d = n.max(1) as f64;
        Self {
            top1: h1 as f64 / d,
            top5: h5 as f64 / d,
            support: n,
        }
    }
}

pub fn group_accuracy<K: Ord, F: Fn(&Outcome) -> K>(outcomes: &[Outcome], key: F) -> BTreeMap<K, Accuracy> {
    let mut groups: BTreeMap<K, Vec<&Outcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(key(o)).or_default().push(o);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, Accuracy::of(v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub top1: f64,
    pub top5: f64,
}

/// Chance-level accuracies for `n` equally likely classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub n_classes: usize,
    pub top1: f64,
    pub top5: f64,
}

impl RandomBaseline {
    pub fn new(n_classes: usize) -> Self {
        let n = n_classes.max(1) as f64;
        Self {
            n_classes,
            top1: 1.0 / n,
            top5: (5.0f64).min(n) / n,
        }
    }
}

/// Results reported for the real corpus; the synthetic fixtures are not
/// expected to reproduce them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub best_top1: f64,
    pub best_top1_std: f64,
    pub best_top5: f64,
    pub best_top5_std: f64,
    pub sketch_a_top1: f64,
    pub ood_ratio_single_provenience_min: f64,
    pub ood_ratio_all_proveniences: f64,
    pub random_top1_206: f64,
    pub random_top5_206: f64,
}

pub const PUBLISHED_REFERENCE: PublishedReference = PublishedReference {
    best_top1: 0.871,
    best_top1_std: 0.003,
    best_top5: 0.965,
    best_top5_std: 0.001,
    sketch_a_top1: 0.828,
    ood_ratio_single_provenience_min: 0.514,
    ood_ratio_all_proveniences: 0.934,
    random_top1_206: 0.0048,
    random_top5_206: 0.0242,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    pub top5: f64,
    pub n: usize,
    pub per_class: BTreeMap<String, Accuracy>,
    pub per_provenience: BTreeMap<String, Accuracy>,
    pub repeats: Vec<RepeatResult>,
    pub mean: Option<MetricPair>,
    /// Sample standard deviation over repeats; absent with fewer than two.
    pub std: Option<MetricPair>,
    pub random_baseline: RandomBaseline,
    pub published_reference: PublishedReference,
    #[serde(default)]
    pub outcomes: Vec<Outcome>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: Vec<Outcome>, n_classes: usize) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyDataset("evaluation view".into()));
        }
        let overall = Accuracy::of(&outcomes);
        Ok(Self {
            top1: overall.top1,
            top5: overall.top5,
            n: overall.support,
            per_class: group_accuracy(&outcomes, |o| o.class.clone()),
            per_provenience: group_accuracy(&outcomes, |o| o.provenience.clone()),
            repeats: Vec::new(),
            mean: None,
            std: None,
            random_baseline: RandomBaseline::new(n_classes),
            published_reference: PUBLISHED_REFERENCE,
            outcomes,
        })
    }

    pub fn per_cell(&self, grid: Grid) -> Result<BTreeMap<(usize, usize), Accuracy>> {
        per_cell(&self.outcomes, grid)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    /// Writes `per_class.csv`, `per_provenience.csv` and `repeats.csv`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, map) in [
            ("per_class.csv", &self.per_class),
            ("per_provenience.csv", &self.per_provenience),
        ] {
            let mut w = csv::Writer::from_path(dir.join(name))?;
            w.write_record(["key", "top1", "top5", "support"])?;
            for (k, a) in map {
                w.write_record([
                    k.clone(),
                    a.top1.to_string(),
                    a.top5.to_string(),
                    a.support.to_string(),
                ])?;
            }
            w.flush()?;
        }
        let mut w = csv::Writer::from_path(dir.join("repeats.csv"))?;
        w.write_record(["seed", "top1", "top5"])?;
        for r in &self.repeats {
            w.write_record([r.seed.to_string(), r.top1.to_string(), r.top5.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn per_cell(outcomes: &[Outcome], grid: Grid) -> Result<BTreeMap<(usize, usize), Accuracy>> {
    let mut keyed = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let c = grid_cell(o.centroid.0, o.centroid.1, grid)?;
        keyed.push(((c.row, c.col), o));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<&Outcome>> = BTreeMap::new();
    for (k, o) in keyed {
        groups.entry(k).or_default().push(o);
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| (k, Accuracy::of(v)))
        .collect())
}

/// Evaluates already-extracted crops.
pub fn evaluate_samples<C: Classifier + ?Sized>(
    classifier: &C,
    samples: &[CropSample],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("evaluation view".into()));
    }
    let rows = classify_samples(classifier, samples)?;
    EvalReport::from_outcomes(outcomes_from_logits(&rows, samples), classifier.n_classes())
}

/// Evaluates the `viz` crops of every annotation in `view`.
pub fn evaluate<C: Classifier + ?Sized>(
    classifier: &C,
    view: &CorpusView<'_>,
    viz: VisualizationKind,
) -> Result<EvalReport> {
    if view.is_empty() {
        return Err(Error::EmptyDataset("evaluation view".into()));
    }
    if classifier.fingerprint() != view.manifest.vocabulary.fingerprint() {
        return Err(Error::VocabularyMismatch {
            model: classifier.fingerprint(),
            data: view.manifest.vocabulary.fingerprint(),
        });
    }
    evaluate_samples(classifier, &load_crops(view, viz)?)
}

/// Mean and sample standard deviation (`n - 1` denominator, `None` for
/// fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}

/// A repeat run failed; `partial` aggregates the runs that completed.
#[derive(Debug)]
pub struct RepeatFailure {
    pub failed_seed: u64,
    pub error: Error,
    pub partial: Option<Box<EvalReport>>,
}

impl fmt::Display for RepeatFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let done = self.partial.as_ref().map_or(0, |p| p.repeats.len());
        write!(
            f,
            "repeat with seed {} failed after {done} completed run(s): {}",
            self.failed_seed, self.error
        )
    }
}

impl std::error::Error for RepeatFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `run` once per seed and aggregates the reports. Pooled breakdowns use
/// every outcome of every run; `mean`/`std` are over the per-run accuracies.
pub fn run_repeats<F>(seeds: &[u64], mut run: F) -> std::result::Result<EvalReport, RepeatFailure>
where
    F: FnMut(u64) -> Result<EvalReport>,
{
    let mut reports: Vec<(u64, EvalReport)> = Vec::new();
    for &seed in seeds {
        match run(seed) {
            Ok(r) => reports.push((seed, r)),
            Err(error) => {
                return Err(RepeatFailure {
                    failed_seed: seed,
                    error,
                    partial: aggregate(&reports).ok().map(Box::new),
                })
            }
        }
    }
    aggregate(&reports).map_err(|error| RepeatFailure {
        failed_seed: seeds.first().copied().unwrap_or_default(),
        error,
        partial: None,
    })
}

fn aggregate(reports: &[(u64, EvalReport)]) -> Result<EvalReport> {
    let n_classes = reports
        .first()
        .map(|(_, r)| r.random_baseline.n_classes)
        .ok_or_else(|| Error::EmptyDataset("no completed repeats".into()))?;
    let pooled: Vec<Outcome> = reports
        .iter()
        .flat_map(|(_, r)| r.outcomes.iter().cloned())
        .collect();
    let mut out = EvalReport::from_outcomes(pooled, n_classes)?;
    out.repeats = reports
        .iter()
        .map(|(seed, r)| RepeatResult {
            seed: *seed,
            top1: r.top1,
            top5: r.top5,
        })
        .collect();
    let t1: Vec<f64> = out.repeats.iter().map(|r| r.top1).collect();
    let t5: Vec<f64> = out.repeats.iter().map(|r| r.top5).collect();
    let (m1, s1) = mean_std(&t1);
    let (m5, s5) = mean_std(&t5);
    out.mean = Some(MetricPair { top1: m1, top5: m5 });
    out.std = s1.zip(s5).map(|(top1, top5)| MetricPair { top1, top5 });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub test: String,
    pub top1: f64,
    pub in_distribution: bool,
    /// `top1 / in_distribution_mean` for out-of-distribution cells.
    pub ood_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub train: BTreeSet<String>,
    pub in_distribution_mean: Option<f64>,
    pub cells: Vec<TransferCell>,
}

impl TransferRow {
    pub fn cell(&self, test: &str) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.test == test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub held_out: BTreeSet<String>,
    pub rows: Vec<TransferRow>,
}

impl TransferMatrix {
    pub fn row(&self, train: &BTreeSet<String>) -> Option<&TransferRow> {
        self.rows.iter().find(|r| &r.train == train)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["train", "test", "top1", "in_distribution", "ood_ratio"])?;
        for r in &self.rows {
            let train = r.train.iter().cloned().collect::<Vec<_>>().join("+");
            for c in &r.cells {
                w.write_record([
                    train.clone(),
                    c.test.clone(),
                    c.top1.to_string(),
                    c.in_distribution.to_string(),
                    c.ood_ratio.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn check_combinations(
    combinations: &[BTreeSet<String>],
    held_out: &BTreeSet<String>,
) -> Result<()> {
    for c in combinations {
        if c.is_empty() {
            return Err(Error::Config("empty training combination".into()));
        }
        if let Some(p) = c.intersection(held_out).next() {
            return Err(Error::Config(format!(
                "training combination {c:?} contains held-out provenience {p}"
            )));
        }
    }
    Ok(())
}

/// Assembles a matrix from per-combination results (test provenience → top-1).
pub fn build_transfer_matrix(
    held_out: &BTreeSet<String>,
    results: Vec<(BTreeSet<String>, BTreeMap<String, f64>)>,
) -> Result<TransferMatrix> {
    let combos: Vec<BTreeSet<String>> = results.iter().map(|(c, _)| c.clone()).collect();
    check_combinations(&combos, held_out)?;
    let rows = results
        .into_iter()
        .map(|(train, tests)| {
            let in_dist: Vec<f64> = tests
                .iter()
                .filter(|(t, _)| train.contains(*t))
                .map(|(_, v)| *v)
                .collect();
            let mean = (!in_dist.is_empty()).then(|| in_dist.iter().sum::<f64>() / in_dist.len() as f64);
            let cells = tests
                .into_iter()
                .map(|(test, top1)| {
                    let in_distribution = train.contains(&test);
                    let ood_ratio = match mean {
                        Some(m) if !in_distribution && m > 0.0 => Some(top1 / m),
                        _ => None,
                    };
                    TransferCell {
                        test,
                        top1,
                        in_distribution,
                        ood_ratio,
                    }
                })
                .collect();
            TransferRow {
                train,
                in_distribution_mean: mean,
                cells,
            }
        })
        .collect();
    Ok(TransferMatrix {
        held_out: held_out.clone(),
        rows,
    })
}

/// Trains one model per combination via `run`, which returns top-1 per test
/// provenience, and assembles the matrix.
pub fn transfer_matrix<F>(
    combinations: &[BTreeSet<String>],
    held_out: &BTreeSet<String>,
    mut run: F,
) -> Result<TransferMatrix>
where
    F: FnMut(&BTreeSet<String>) -> Result<BTreeMap<String, f64>>,
{
    check_combinations(combinations, held_out)?;
    let mut results = Vec::with_capacity(combinations.len());
    for c in combinations {
        results.push((c.clone(), run(c)?));
    }
    build_transfer_matrix(held_out, results)
}

pub const DEFAULT_BIN_EDGES: [usize; 4] = [20, 40, 100, 250];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDot {
    pub class: String,
    pub count: usize,
    pub top1: f64,
    pub top5: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBin {
    pub lo: usize,
    /// Exclusive upper edge; `None` for the open last bin.
    pub hi: Option<usize>,
    pub classes: Vec<ClassDot>,
    /// Unweighted means over the classes of the bin.
    pub mean_top1: Option<f64>,
    pub mean_top5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBinReport {
    pub edges: Vec<usize>,
    pub bins: Vec<FrequencyBin>,
    pub random_baseline: RandomBaseline,
}

impl FrequencyBinReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_lo", "bin_hi", "class", "count", "top1", "top5", "support"])?;
        for b in &self.bins {
            for c in &b.classes {
                w.write_record([
                    b.lo.to_string(),
                    b.hi.map(|h| h.to_string()).unwrap_or_default(),
                    c.class.clone(),
                    c.count.to_string(),
                    c.top1.to_string(),
                    c.top5.to_string(),
                    c.support.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the bin holding `count`, for ascending `edges`.
pub fn bin_index(count: usize, edges: &[usize]) -> Option<usize> {
    if edges.is_empty() || count < edges[0] {
        return None;
    }
    Some(edges.iter().rposition(|&e| count >= e).expect("count >= edges[0]"))
}

/// Groups the per-class results of `report` by each class's corpus count.
pub fn frequency_bin_report(
    report: &EvalReport,
    histogram: &FrequencyHistogram,
    edges: &[usize],
) -> Result<FrequencyBinReport> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("bin edges must increase strictly: {edges:?}")));
    }
    let mut bins: Vec<FrequencyBin> = edges
        .iter()
        .enumerate()
        .map(|(i, &lo)| FrequencyBin {
            lo,
            hi: edges.get(i + 1).copied(),
            classes: Vec::new(),
            mean_top1: None,
            mean_top5: None,
        })
        .collect();
    for (class, acc) in &report.per_class {
        let count = *histogram
            .counts
            .get(class)
            .ok_or_else(|| Error::Invalid(format!("class {class} missing from histogram")))?;
        let b = bin_index(count, edges).ok_or_else(|| {
            Error::Invalid(format!(
                "class {class} has {count} instances, below the first bin edge {}",
                edges[0]
            ))
        })?;
        bins[b].classes.push(ClassDot {
            class: class.clone(),
            count,
            top1: acc.top1,
            top5: acc.top5,
            support: acc.support,
        });
    }
    for b in &mut bins {
        if !b.classes.is_empty() {
            let n = b.classes.len() as f64;
            b.mean_top1 = Some(b.classes.iter().map(|c| c.top1).sum::<f64>() / n);
            b.mean_top5 = Some(b.classes.iter().map(|c| c.top5).sum::<f64>() / n);
        }
    }
    Ok(FrequencyBinReport {
        edges: edges.to_vec(),
        bins,
        random_baseline: report.random_baseline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellReport {
    pub row: usize,
    pub col: usize,
    pub support: usize,
    pub baseline_top1: Option<f64>,
    pub compared_top1: Option<f64>,
    /// `compared - baseline` in percentage points.
    pub delta_top1_pp: Option<f64>,
    pub average_normal: Option<AverageNormal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid: Grid,
    pub cells: Vec<GridCellReport>,
    pub baseline_top1: f64,
    pub compared_top1: f64,
}

impl GridReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "row", "col", "support", "baseline_top1", "compared_top1", "delta_top1_pp", "nx", "ny",
            "nz",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let n = c.average_normal.map(|n| n.as_array());
            w.write_record([
                c.row.to_string(),
                c.col.to_string(),
                c.support.to_string(),
                opt(c.baseline_top1),
                opt(c.compared_top1),
                opt(c.delta_top1_pp),
                opt(n.map(|a| a[0])),
                opt(n.map(|a| a[1])),
                opt(n.map(|a| a[2])),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-cell accuracy of `compared` relative to `baseline` over the same ids.
pub fn grid_report(
    compared: &[Outcome],
    baseline: &[Outcome],
    grid: Grid,
    normals: Option<&BTreeMap<(usize, usize), AverageNormal>>,
) -> Result<GridReport> {
    let ids = |o: &[Outcome]| o.iter().map(|x| x.id.clone()).collect::<BTreeSet<_>>();
    let (a, b) = (ids(compared), ids(baseline));
    if a != b || a.len() != compared.len() || b.len() != baseline.len() {
        let only: Vec<&String> = a.symmetric_difference(&b).take(5).collect();
        return Err(Error::Invalid(format!(
            "compared and baseline evaluations cover different ids (e.g. {only:?})"
        )));
    }
    let base_cells = per_cell(baseline, grid)?;
    let comp_cells = per_cell(compared, grid)?;
    let k = grid.size();
    let mut cells = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            let b = base_cells.get(&(row, col));
            let c = comp_cells.get(&(row, col));
            let support = b.map_or(0, |x| x.support);
            let (bt, ct) = (b.map(|x| x.top1), c.map(|x| x.top1));
            cells.push(GridCellReport {
                row,
                col,
                support,
                baseline_top1: bt,
                compared_top1: ct,
                delta_top1_pp: bt.zip(ct).map(|(b, c)| 100.0 * (c - b)),
                average_normal: normals.and_then(|n| n.get(&(row, col)).copied()),
            });
        }
    }
    Ok(GridReport {
        grid,
        cells,
        baseline_top1: Accuracy::of(baseline).top1,
        compared_top1: Accuracy::of(compared).top1,
    })
}

/// Average surface normal of the signs in each grid cell, from the NormalMap
/// rendering. Each sign contributes its own unit normal; the cell normal is
/// their renormalized mean. Signs on surfaces without a normal map are skipped.
pub fn cell_normals(
    view: &CorpusView<'_>,
    grid: Grid,
) -> Result<BTreeMap<(usize, usize), AverageNormal>> {
    let manifest: &CorpusManifest = view.manifest;
    let mut images = HashMap::new();
    let mut sums: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
    for ann in view.annotations() {
        let surface = &manifest.surfaces[ann.surface];
        let Some(rel) = surface.images.get(&VisualizationKind::NormalMap) else {
            continue;
        };
        if !images.contains_key(&ann.surface) {
            images.insert(ann.surface, load_rgb(rel)?);
        }
        let img = &images[&ann.surface];
        let n = match average_normal(img, NormalRegion::Polygon(&ann.polygon)) {
            Ok(n) => n,
            Err(crate::error::GeometryError::EmptyRegion) => continue,
            Err(e) => return Err(e.into()),
        };
        let (u, v) = crate::geometry::normalized_centroid(
            &ann.polygon,
            surface.width_px,
            surface.height_px,
        );
        let cell = grid_cell(u, v, grid)?;
        let s = sums.entry((cell.row, cell.col)).or_insert([0.0; 3]);
        for (acc, c) in s.iter_mut().zip(n.as_array()) {
            *acc += c;
        }
    }
    sums.into_iter()
        .map(|(k, s)| Ok((k, AverageNormal::from_sum(s)?)))
        .collect()
}
