//! On-disk corpus format, manifest validation and deterministic train/test splits.
//!
//! A corpus root holds `manifest.json` describing tablet surfaces (one image per
//! visualization kind) and the polygon annotations drawn on them. Loading
//! validates every record and assigns class indices by sorted class name, so the
//! vocabulary does not depend on manifest order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CorpusError, Result};
use crate::geometry::Point;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_MIN_INSTANCES: usize = 20;

/// The twelve renderings prepared for every tablet surface.
///
/// `ColorA`..`ColorH` are directional-light renderings. Some sources name only
/// seven of them (A-G) while showing an eighth; all eight are accepted here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VisualizationKind {
    Color00,
    ColorA,
    ColorB,
    ColorC,
    ColorD,
    ColorE,
    ColorF,
    ColorG,
    ColorH,
    NormalMap,
    SketchA,
    SketchB,
}

impl VisualizationKind {
    pub const ALL: [VisualizationKind; 12] = [
        Self::Color00,
        Self::ColorA,
        Self::ColorB,
        Self::ColorC,
        Self::ColorD,
        Self::ColorE,
        Self::ColorF,
        Self::ColorG,
        Self::ColorH,
        Self::NormalMap,
        Self::SketchA,
        Self::SketchB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Color00 => "Color00",
            Self::ColorA => "ColorA",
            Self::ColorB => "ColorB",
            Self::ColorC => "ColorC",
            Self::ColorD => "ColorD",
            Self::ColorE => "ColorE",
            Self::ColorF => "ColorF",
            Self::ColorG => "ColorG",
            Self::ColorH => "ColorH",
            Self::NormalMap => "NormalMap",
            Self::SketchA => "SketchA",
            Self::SketchB => "SketchB",
        }
    }

    /// Azimuth in degrees of the light for the directional renderings.
    /// ColorA is light from the top, continuing clockwise in 45° steps.
    pub fn light_azimuth(self) -> Option<f64> {
        let step = match self {
            Self::ColorA => 0,
            Self::ColorB => 1,
            Self::ColorC => 2,
            Self::ColorD => 3,
            Self::ColorE => 4,
            Self::ColorF => 5,
            Self::ColorG => 6,
            Self::ColorH => 7,
            _ => return None,
        };
        Some(step as f64 * 45.0)
    }
}

impl fmt::Display for VisualizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VisualizationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown visualization tag `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Front,
    Back,
    Top,
    Bottom,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 6] = [
        Side::Front,
        Side::Back,
        Side::Top,
        Side::Bottom,
        Side::Left,
        Side::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
            Side::Top => "top",
            Side::Bottom => "bottom",
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Side::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown side `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignClass {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unicode_codepoint: Option<String>,
    pub index: usize,
}

/// Class vocabulary with contiguous indices assigned in name order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    classes: Vec<SignClass>,
    by_name: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_codepoints(names.into_iter().map(|n| (n.into(), None)))
    }

    pub fn with_codepoints<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, Option<String>)>,
    {
        let mut sorted: BTreeMap<String, Option<String>> = BTreeMap::new();
        for (name, cp) in entries {
            let slot = sorted.entry(name).or_default();
            if slot.is_none() {
                *slot = cp;
            }
        }
        let classes: Vec<SignClass> = sorted
            .into_iter()
            .enumerate()
            .map(|(index, (name, unicode_codepoint))| SignClass {
                name,
                unicode_codepoint,
                index,
            })
            .collect();
        let by_name = classes.iter().map(|c| (c.name.clone(), c.index)).collect();
        Self { classes, by_name }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[SignClass] {
        &self.classes
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(|c| c.name.as_str())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_names(self.classes.iter().map(|c| c.name.as_str()))
    }
}

/// SHA-256 over the newline-joined class names, hex encoded.
pub fn fingerprint_names<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceRecord {
    pub tablet_id: String,
    pub side: Side,
    pub provenience: String,
    pub width_px: u32,
    pub height_px: u32,
    /// Resolved image paths.
    pub images: BTreeMap<VisualizationKind, PathBuf>,
}

impl SurfaceRecord {
    /// Identifier used by the service: `tablet_id:side`.
    pub fn surface_id(&self) -> String {
        surface_id(&self.tablet_id, self.side)
    }

    pub fn visualizations(&self) -> Vec<VisualizationKind> {
        self.images.keys().copied().collect()
    }
}

pub fn surface_id(tablet_id: &str, side: Side) -> String {
    format!("{tablet_id}:{side}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationRecord {
    pub id: String,
    /// Index into [`CorpusManifest::surfaces`].
    pub surface: usize,
    pub polygon: Vec<Point>,
    pub sign_class: String,
}

#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub surfaces: Vec<SurfaceRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub vocabulary: Vocabulary,
    pub proveniences: BTreeSet<String>,
    by_id: HashMap<String, usize>,
}

// Raw JSON shapes.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proveniences: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<RawClass>,
    #[serde(default)]
    pub surfaces: Vec<RawSurface>,
    #[serde(default)]
    pub annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawClass {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unicode: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSurface {
    pub tablet_id: String,
    pub side: String,
    pub provenience: String,
    pub width_px: u32,
    pub height_px: u32,
    pub images: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub id: String,
    pub tablet_id: String,
    pub side: String,
    pub class: String,
    pub polygon: Vec<[f64; 2]>,
}

/// Reads and validates `root/manifest.json`.
pub fn load_manifest(root: impl AsRef<Path>) -> Result<CorpusManifest> {
    let root = root.as_ref();
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CorpusError::MissingManifest(path).into());
    }
    let text = std::fs::read_to_string(&path)?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    CorpusManifest::from_raw(root, raw, true)
}

impl CorpusManifest {
    /// Validates a parsed manifest. With `check_images` set, every image file must
    /// exist and match the declared surface dimensions.
    pub fn from_raw(root: &Path, raw: RawManifest, check_images: bool) -> Result<Self> {
        let declared: Option<BTreeSet<String>> =
            raw.proveniences.map(|p| p.into_iter().collect());
        let mut surfaces = Vec::with_capacity(raw.surfaces.len());
        let mut surface_index: HashMap<(String, Side), usize> = HashMap::new();

        for rs in raw.surfaces {
            let side: Side = rs.side.parse().map_err(|_| CorpusError::UnknownSide {
                locus: format!("surface {}", rs.tablet_id),
                side: rs.side.clone(),
            })?;
            let sid = surface_id(&rs.tablet_id, side);
            if rs.width_px == 0 || rs.height_px == 0 {
                return Err(CorpusError::InvalidDimensions {
                    surface: sid,
                    width: rs.width_px,
                    height: rs.height_px,
                }
                .into());
            }
            if let Some(decl) = &declared {
                if !decl.contains(&rs.provenience) {
                    return Err(CorpusError::UndeclaredProvenience {
                        surface: sid,
                        provenience: rs.provenience,
                    }
                    .into());
                }
            }
            let mut images = BTreeMap::new();
            for (tag, rel) in &rs.images {
                let viz: VisualizationKind =
                    tag.parse().map_err(|_| CorpusError::UnknownVisualization {
                        locus: format!("surface {sid}"),
                        tag: tag.clone(),
                    })?;
                let full = root.join(rel);
                if check_images {
                    check_image(&sid, viz, &full, rs.width_px, rs.height_px)?;
                }
                images.insert(viz, full);
            }
            if surface_index
                .insert((rs.tablet_id.clone(), side), surfaces.len())
                .is_some()
            {
                return Err(CorpusError::DuplicateSurface(sid).into());
            }
            surfaces.push(SurfaceRecord {
                tablet_id: rs.tablet_id,
                side,
                provenience: rs.provenience,
                width_px: rs.width_px,
                height_px: rs.height_px,
                images,
            });
        }

        let mut annotations = Vec::with_capacity(raw.annotations.len());
        let mut by_id = HashMap::new();
        for ra in raw.annotations {
            if by_id.contains_key(&ra.id) {
                return Err(CorpusError::DuplicateAnnotation(ra.id).into());
            }
            let side: Side = ra.side.parse().map_err(|_| CorpusError::UnknownSide {
                locus: format!("annotation {}", ra.id),
                side: ra.side.clone(),
            })?;
            let si = *surface_index
                .get(&(ra.tablet_id.clone(), side))
                .ok_or_else(|| CorpusError::UnknownSurface {
                    record: ra.id.clone(),
                    surface: surface_id(&ra.tablet_id, side),
                })?;
            let polygon: Vec<Point> = ra.polygon.iter().map(|&[x, y]| Point::new(x, y)).collect();
            validate_polygon(&ra.id, &polygon, &surfaces[si])?;
            by_id.insert(ra.id.clone(), annotations.len());
            annotations.push(AnnotationRecord {
                id: ra.id,
                surface: si,
                polygon,
                sign_class: ra.class,
            });
        }

        let mut codepoints: BTreeMap<String, Option<String>> = raw
            .classes
            .into_iter()
            .map(|c| (c.name, c.unicode))
            .collect();
        for a in &annotations {
            codepoints.entry(a.sign_class.clone()).or_default();
        }
        let vocabulary = Vocabulary::with_codepoints(codepoints);
        let proveniences = declared
            .unwrap_or_else(|| surfaces.iter().map(|s| s.provenience.clone()).collect());

        Ok(Self {
            root: root.to_path_buf(),
            surfaces,
            annotations,
            vocabulary,
            proveniences,
            by_id,
        })
    }

    pub fn annotation(&self, id: &str) -> Option<&AnnotationRecord> {
        self.by_id.get(id).map(|&i| &self.annotations[i])
    }

    pub fn annotation_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn surface_of(&self, annotation: &AnnotationRecord) -> &SurfaceRecord {
        &self.surfaces[annotation.surface]
    }

    pub fn find_surface(&self, surface_id: &str) -> Option<(usize, &SurfaceRecord)> {
        self.surfaces
            .iter()
            .enumerate()
            .find(|(_, s)| s.surface_id() == surface_id)
    }

    pub fn tablet_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.surfaces.iter().map(|s| s.tablet_id.as_str()).collect();
        ids.into_iter().map(str::to_owned).collect()
    }

    /// View over every annotation.
    pub fn full_view(&self) -> CorpusView<'_> {
        CorpusView {
            manifest: self,
            indices: (0..self.annotations.len()).collect(),
        }
    }

    /// View over the given annotation ids, in the given order.
    pub fn view_of_ids<'a, I>(&self, ids: I) -> Result<CorpusView<'_>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut indices = Vec::new();
        for id in ids {
            let idx = self.annotation_index(id).ok_or_else(|| {
                crate::Error::Invalid(format!("annotation {id} not found in manifest"))
            })?;
            indices.push(idx);
        }
        Ok(CorpusView {
            manifest: self,
            indices,
        })
    }
}

fn check_image(sid: &str, viz: VisualizationKind, path: &Path, w: u32, h: u32) -> Result<()> {
    if !path.is_file() {
        return Err(CorpusError::MissingImage {
            surface: sid.to_owned(),
            viz: viz.to_string(),
            path: path.to_path_buf(),
        }
        .into());
    }
    let (aw, ah) = image::image_dimensions(path).map_err(|e| CorpusError::UnreadableImage {
        surface: sid.to_owned(),
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if (aw, ah) != (w, h) {
        return Err(CorpusError::DimensionMismatch {
            surface: sid.to_owned(),
            viz: viz.to_string(),
            expected_w: w,
            expected_h: h,
            actual_w: aw,
            actual_h: ah,
        }
        .into());
    }
    Ok(())
}

fn validate_polygon(id: &str, polygon: &[Point], surface: &SurfaceRecord) -> Result<()> {
    let bad = |reason: String| CorpusError::MalformedPolygon {
        record: id.to_owned(),
        reason,
    };
    if polygon.len() < 3 {
        return Err(bad(format!("{} vertices, need at least 3", polygon.len())).into());
    }
    let (w, h) = (surface.width_px as f64, surface.height_px as f64);
    for p in polygon {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(bad("non-finite vertex".into()).into());
        }
        if p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h {
            return Err(bad(format!(
                "vertex ({}, {}) outside [0, {w}] x [0, {h}]",
                p.x, p.y
            ))
            .into());
        }
    }
    let (x_lo, x_hi) = min_max(polygon.iter().map(|p| p.x));
    let (y_lo, y_hi) = min_max(polygon.iter().map(|p| p.y));
    if x_hi - x_lo <= 0.0 && y_hi - y_lo <= 0.0 {
        return Err(bad("zero extent in both axes".into()).into());
    }
    Ok(())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Subset of a manifest's annotations. Class indices always come from the
/// manifest's global vocabulary.
#[derive(Debug, Clone)]
pub struct CorpusView<'a> {
    pub manifest: &'a CorpusManifest,
    pub indices: Vec<usize>,
}

impl<'a> CorpusView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn annotations(&self) -> impl Iterator<Item = &'a AnnotationRecord> + '_ {
        self.indices.iter().map(move |&i| &self.manifest.annotations[i])
    }

    pub fn ids(&self) -> Vec<String> {
        self.annotations().map(|a| a.id.clone()).collect()
    }

    /// Restricts to annotations whose id is in `ids`.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> CorpusView<'a> {
        CorpusView {
            manifest: self.manifest,
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| ids.contains(&self.manifest.annotations[i].id))
                .collect(),
        }
    }

    /// Restricts to annotations on surfaces of the given proveniences.
    pub fn with_proveniences(&self, proveniences: &BTreeSet<String>) -> CorpusView<'a> {
        CorpusView {
            manifest: self.manifest,
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| {
                    let s = &self.manifest.surfaces[self.manifest.annotations[i].surface];
                    proveniences.contains(&s.provenience)
                })
                .collect(),
        }
    }
}

/// Selects the annotations whose surface belongs to one of `proveniences`
/// (all proveniences when `None`) and checks that every retained surface
/// carries `visualization`.
pub fn filter<'a>(
    manifest: &'a CorpusManifest,
    proveniences: Option<&BTreeSet<String>>,
    visualization: VisualizationKind,
) -> Result<CorpusView<'a>> {
    let keep = |s: &SurfaceRecord| proveniences.is_none_or(|p| p.contains(&s.provenience));
    let missing: Vec<String> = manifest
        .surfaces
        .iter()
        .filter(|s| keep(s) && !s.images.contains_key(&visualization))
        .map(SurfaceRecord::surface_id)
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::VisualizationUnavailable {
            viz: visualization.to_string(),
            surfaces: missing,
        }
        .into());
    }
    let indices = manifest
        .annotations
        .iter()
        .enumerate()
        .filter(|(_, a)| keep(&manifest.surfaces[a.surface]))
        .map(|(i, _)| i)
        .collect();
    Ok(CorpusView { manifest, indices })
}

/// Per-class train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub min_instances: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub excluded_classes: Vec<String>,
    #[serde(default)]
    pub included_classes: Vec<String>,
}

/// Number of test examples for a class with `count` instances:
/// `max(1, round(count / 5))`.
pub fn test_count(count: usize) -> usize {
    ((count + 2) / 5).max(1)
}

fn class_seed(seed: u64, class: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(class.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Splits every class of the view with at least `min_instances` annotations
/// 80/20 into train and test. Each class is shuffled by its own stream derived
/// from `(seed, class name)`, so a class's split does not depend on which other
/// classes are present.
pub fn build_split(view: &CorpusView<'_>, seed: u64, min_instances: usize) -> DatasetSplit {
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in view.annotations() {
        by_class.entry(&a.sign_class).or_default().push(&a.id);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut excluded = Vec::new();
    let mut included = Vec::new();
    for (class, mut ids) in by_class {
        if ids.len() < min_instances {
            excluded.push(class.to_owned());
            continue;
        }
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, class));
        ids.shuffle(&mut rng);
        let n_test = test_count(ids.len());
        test.extend(ids[..n_test].iter().map(|s| s.to_string()));
        train.extend(ids[n_test..].iter().map(|s| s.to_string()));
        included.push(class.to_owned());
    }
    if !excluded.is_empty() {
        tracing::info!(
            "{} classes below {min_instances} instances excluded from split",
            excluded.len()
        );
    }
    train.sort();
    test.sort();
    DatasetSplit {
        seed,
        min_instances,
        train,
        test,
        excluded_classes: excluded,
        included_classes: included,
    }
}

impl DatasetSplit {
    /// Canonical JSON text; equal splits produce identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn train_set(&self) -> BTreeSet<String> {
        self.train.iter().cloned().collect()
    }

    pub fn test_set(&self) -> BTreeSet<String> {
        self.test.iter().cloned().collect()
    }
}

/// Annotation counts per class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    pub counts: BTreeMap<String, usize>,
}

impl FrequencyHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Fraction of annotations belonging to classes with at least
    /// `min_instances` annotations. Zero for an empty histogram.
    pub fn coverage(&self, min_instances: usize) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let covered: usize = self.counts.values().filter(|&&c| c >= min_instances).sum();
        covered as f64 / total as f64
    }

    pub fn classes_at_least(&self, min_instances: usize) -> usize {
        self.counts.values().filter(|&&c| c >= min_instances).count()
    }
}

pub fn frequency_histogram(view: &CorpusView<'_>) -> FrequencyHistogram {
    let mut counts = BTreeMap::new();
    for a in view.annotations() {
        *counts.entry(a.sign_class.clone()).or_insert(0) += 1;
    }
    FrequencyHistogram { counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_surface(tablet: &str, prov: &str) -> RawSurface {
        RawSurface {
            tablet_id: tablet.into(),
            side: "front".into(),
            provenience: prov.into(),
            width_px: 100,
            height_px: 80,
            images: BTreeMap::from([("SketchB".into(), format!("{tablet}.png"))]),
        }
    }

    fn raw_ann(id: &str, tablet: &str, class: &str, poly: Vec<[f64; 2]>) -> RawAnnotation {
        RawAnnotation {
            id: id.into(),
            tablet_id: tablet.into(),
            side: "front".into(),
            class: class.into(),
            polygon: poly,
        }
    }

    fn square() -> Vec<[f64; 2]> {
        vec![[1.0, 1.0], [10.0, 1.0], [10.0, 10.0], [1.0, 10.0]]
    }

    fn build(raw: RawManifest) -> Result<CorpusManifest> {
        CorpusManifest::from_raw(Path::new("/nonexistent"), raw, false)
    }

    fn raw(surfaces: Vec<RawSurface>, annotations: Vec<RawAnnotation>) -> RawManifest {
        RawManifest {
            proveniences: None,
            classes: vec![],
            surfaces,
            annotations,
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_contiguous() {
        let m = build(raw(
            vec![raw_surface("T1", "Nippur")],
            vec![
                raw_ann("a", "T1", "SZU", square()),
                raw_ann("b", "T1", "NA", square()),
                raw_ann("c", "T1", "AN", square()),
                raw_ann("d", "T1", "NA", square()),
            ],
        ))
        .unwrap();
        let names: Vec<_> = m.vocabulary.classes().iter().map(|c| (c.name.as_str(), c.index)).collect();
        assert_eq!(names, vec![("AN", 0), ("NA", 1), ("SZU", 2)]);
    }

    #[test]
    fn empty_annotations_give_empty_vocabulary() {
        let m = build(raw(vec![raw_surface("T1", "Nippur")], vec![])).unwrap();
        assert!(m.vocabulary.is_empty());
        assert!(m.annotations.is_empty());
    }

    #[test]
    fn vertex_out_of_bounds_names_record() {
        let err = build(raw(
            vec![raw_surface("T1", "Nippur")],
            vec![raw_ann("bad-1", "T1", "NA", vec![[-1.0, 5.0], [5.0, 5.0], [5.0, 9.0]])],
        ))
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad-1"), "{msg}");
        assert!(matches!(err, crate::Error::Corpus(CorpusError::MalformedPolygon { .. })));
    }

    #[test]
    fn degenerate_and_short_polygons_rejected() {
        for poly in [
            vec![[1.0, 1.0], [2.0, 2.0]],
            vec![[3.0, 3.0], [3.0, 3.0], [3.0, 3.0]],
        ] {
            let err = build(raw(
                vec![raw_surface("T1", "Nippur")],
                vec![raw_ann("p", "T1", "NA", poly)],
            ))
            .unwrap_err();
            assert!(matches!(err, crate::Error::Corpus(CorpusError::MalformedPolygon { .. })));
        }
    }

    #[test]
    fn duplicate_annotation_and_unknown_tag_rejected() {
        let err = build(raw(
            vec![raw_surface("T1", "Nippur")],
            vec![raw_ann("x", "T1", "NA", square()), raw_ann("x", "T1", "NA", square())],
        ))
        .unwrap_err();
        assert!(matches!(err, crate::Error::Corpus(CorpusError::DuplicateAnnotation(ref id)) if id == "x"));

        let mut s = raw_surface("T1", "Nippur");
        s.images.insert("ColorZ".into(), "z.png".into());
        let err = build(raw(vec![s], vec![])).unwrap_err();
        assert!(err.to_string().contains("ColorZ"));
        assert!(err.to_string().contains("T1:front"));
    }

    #[test]
    fn undeclared_provenience_rejected() {
        let mut r = raw(vec![raw_surface("T1", "Ur")], vec![]);
        r.proveniences = Some(vec!["Nippur".into()]);
        assert!(matches!(
            build(r).unwrap_err(),
            crate::Error::Corpus(CorpusError::UndeclaredProvenience { .. })
        ));
    }

    #[test]
    fn all_twelve_tags_parse() {
        for k in VisualizationKind::ALL {
            assert_eq!(k.as_str().parse::<VisualizationKind>().unwrap(), k);
        }
        assert!("Color01".parse::<VisualizationKind>().is_err());
    }

    #[test]
    fn test_count_rule() {
        assert_eq!(test_count(20), 4);
        assert_eq!(test_count(25), 5);
        assert_eq!(test_count(19), 4);
        assert_eq!(test_count(2), 1);
        assert_eq!(test_count(1), 1);
        for n in 1..=500usize {
            let expected = ((0.2 * n as f64).round() as usize).max(1);
            assert_eq!(test_count(n), expected, "n = {n}");
        }
    }

    fn counts_manifest(counts: &[(&str, usize)]) -> CorpusManifest {
        let mut anns = vec![];
        for (class, n) in counts {
            for i in 0..*n {
                anns.push(raw_ann(&format!("{class}-{i:03}"), "T1", class, square()));
            }
        }
        build(raw(vec![raw_surface("T1", "Nippur")], anns)).unwrap()
    }

    #[test]
    fn split_counts_match_rule() {
        let m = counts_manifest(&[("A", 20), ("B", 19), ("C", 25)]);
        let split = build_split(&m.full_view(), 7, DEFAULT_MIN_INSTANCES);
        let count = |ids: &[String], p: &str| ids.iter().filter(|i| i.starts_with(p)).count();
        assert_eq!((count(&split.train, "A-"), count(&split.test, "A-")), (16, 4));
        assert_eq!((count(&split.train, "C-"), count(&split.test, "C-")), (20, 5));
        assert_eq!(count(&split.train, "B-") + count(&split.test, "B-"), 0);
        assert_eq!(split.excluded_classes, vec!["B".to_string()]);
        assert_eq!(split.included_classes, vec!["A".to_string(), "C".to_string()]);
    }

    #[test]
    fn histogram_and_coverage() {
        let m = counts_manifest(&[("A", 30), ("B", 10)]);
        let h = frequency_histogram(&m.full_view());
        assert_eq!(h.counts, BTreeMap::from([("A".into(), 30), ("B".into(), 10)]));
        assert!((h.coverage(20) - 0.75).abs() < 1e-12);
        assert_eq!(h.total(), 40);
        let empty = counts_manifest(&[]);
        assert!(frequency_histogram(&empty.full_view()).counts.is_empty());
    }
}
