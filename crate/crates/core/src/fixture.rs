//! Procedural corpus of impressed wedge glyphs.
//!
//! Every surface is rendered as a depth field (a gently bulging tablet with
//! kite-shaped wedge impressions). All twelve visualizations are derived from
//! that one field: the normal map from its gradient, the directional-light
//! images by Lambertian shading, and the two sketches from curvature and
//! slope. Styles perturb stroke geometry so that proveniences differ the way
//! scribal hands do.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RawAnnotation, RawClass, RawManifest, RawSurface, Side, VisualizationKind, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::geometry::encode_normal;

/// One wedge of a glyph template in the unit square `[-1, 1]²`: head
/// position, direction in degrees (0 points right, 90 down), tail length and
/// head half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeSpec {
    pub x: f64,
    pub y: f64,
    pub angle: f64,
    pub length: f64,
    pub width: f64,
}

const fn w(x: f64, y: f64, angle: f64, length: f64, width: f64) -> WedgeSpec {
    WedgeSpec {
        x,
        y,
        angle,
        length,
        width,
    }
}

/// Ten templates that stay distinguishable under arbitrary rotation.
pub const TEMPLATES: [&[WedgeSpec]; 10] = [
    &[w(-0.8, 0.0, 0.0, 1.7, 0.34)],
    &[w(-0.8, -0.4, 0.0, 1.6, 0.3), w(-0.8, 0.4, 0.0, 1.6, 0.3)],
    &[
        w(-0.8, -0.6, 0.0, 1.5, 0.25),
        w(-0.8, 0.0, 0.0, 1.5, 0.25),
        w(-0.8, 0.6, 0.0, 1.5, 0.25),
    ],
    &[w(-0.8, 0.0, 0.0, 1.6, 0.3), w(0.0, -0.8, 90.0, 1.6, 0.3)],
    &[w(-0.35, -0.35, 45.0, 0.55, 0.62)],
    &[w(-0.75, -0.2, 45.0, 0.5, 0.5), w(0.15, -0.2, 45.0, 0.5, 0.5)],
    &[
        w(-0.8, 0.0, -35.0, 1.5, 0.25),
        w(-0.8, 0.0, 0.0, 1.5, 0.25),
        w(-0.8, 0.0, 35.0, 1.5, 0.25),
    ],
    &[w(-0.8, 0.45, 0.0, 1.6, 0.3), w(-0.25, -0.65, 45.0, 0.5, 0.5)],
    &[
        w(-0.7, -0.7, 90.0, 1.4, 0.25),
        w(-0.25, -0.7, 90.0, 1.4, 0.25),
        w(0.05, 0.1, 0.0, 0.8, 0.3),
    ],
    &[w(-0.8, -0.8, 90.0, 1.6, 0.3), w(-0.8, 0.7, 0.0, 1.5, 0.3)],
];

/// Hand-specific distortions applied to every glyph of a provenience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphStyle {
    pub length_scale: f64,
    pub width_scale: f64,
    /// Horizontal shear per unit of height.
    pub slant: f64,
    pub angle_jitter_deg: f64,
    /// Head displacement in template units.
    pub position_jitter: f64,
    /// Impression depth in pixels.
    pub depth: f64,
    /// Amplitude of the low-frequency clay relief in pixels.
    pub relief: f64,
}

impl Default for GlyphStyle {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            width_scale: 1.0,
            slant: 0.0,
            angle_jitter_deg: 6.0,
            position_jitter: 0.06,
            depth: 4.0,
            relief: 0.6,
        }
    }
}

impl GlyphStyle {
    /// Component-wise mean of several styles.
    pub fn blend(styles: &[GlyphStyle]) -> GlyphStyle {
        let n = styles.len().max(1) as f64;
        let avg = |f: fn(&GlyphStyle) -> f64| styles.iter().map(f).sum::<f64>() / n;
        GlyphStyle {
            length_scale: avg(|s| s.length_scale),
            width_scale: avg(|s| s.width_scale),
            slant: avg(|s| s.slant),
            angle_jitter_deg: avg(|s| s.angle_jitter_deg),
            position_jitter: avg(|s| s.position_jitter),
            depth: avg(|s| s.depth),
            relief: avg(|s| s.relief),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub provenience: String,
    pub style: GlyphStyle,
    /// Annotations per class; shorter than the class count means zero for
    /// the remaining classes.
    pub per_class: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub n_classes: usize,
    pub groups: Vec<GroupSpec>,
    /// Pixel size of one layout cell (one sign).
    pub cell: u32,
    pub cols: u32,
    pub rows: u32,
    pub visualizations: Vec<VisualizationKind>,
    /// `(surface id, visualization)` pairs listed in the manifest whose image
    /// file is not written.
    pub missing_files: Vec<(String, VisualizationKind)>,
    /// `(surface id, visualization)` pairs neither rendered nor listed.
    pub absent: Vec<(String, VisualizationKind)>,
}

impl FixtureSpec {
    /// Ten classes, `per_class` signs each, one provenience.
    pub fn glyphs(seed: u64, per_class: usize) -> Self {
        Self {
            seed,
            n_classes: TEMPLATES.len(),
            groups: vec![GroupSpec {
                provenience: "North".into(),
                style: GlyphStyle::default(),
                per_class: vec![per_class; TEMPLATES.len()],
            }],
            cell: 64,
            cols: 8,
            rows: 5,
            visualizations: VisualizationKind::ALL.to_vec(),
            missing_files: Vec::new(),
            absent: Vec::new(),
        }
    }

    /// Three distinct hands plus, when `held_out > 0`, a fourth hand between
    /// them.
    pub fn styles(seed: u64, per_class: usize, held_out: usize) -> Self {
        let mut spec = Self::glyphs(seed, per_class);
        let hands = three_hands();
        spec.groups = hands
            .iter()
            .map(|(name, style)| GroupSpec {
                provenience: (*name).into(),
                style: *style,
                per_class: vec![per_class; TEMPLATES.len()],
            })
            .collect();
        if held_out > 0 {
            let styles: Vec<GlyphStyle> = hands.iter().map(|(_, s)| *s).collect();
            spec.groups.push(GroupSpec {
                provenience: "West".into(),
                style: GlyphStyle::blend(&styles),
                per_class: vec![held_out; TEMPLATES.len()],
            });
        }
        spec
    }

    fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.groups.is_empty() || self.cols == 0 || self.rows == 0 {
            return Err(Error::Config("fixture needs classes, groups and a layout".into()));
        }
        if self.cell < 24 {
            return Err(Error::Config("fixture cell must be at least 24 px".into()));
        }
        Ok(())
    }
}

/// The three reference hands used by the style fixtures.
pub fn three_hands() -> [(&'static str, GlyphStyle); 3] {
    [
        (
            "North",
            GlyphStyle {
                length_scale: 1.15,
                width_scale: 0.75,
                slant: 0.3,
                ..GlyphStyle::default()
            },
        ),
        (
            "East",
            GlyphStyle {
                length_scale: 0.8,
                width_scale: 1.3,
                slant: -0.05,
                depth: 5.0,
                ..GlyphStyle::default()
            },
        ),
        (
            "South",
            GlyphStyle {
                length_scale: 1.0,
                width_scale: 0.95,
                slant: -0.35,
                depth: 3.2,
                ..GlyphStyle::default()
            },
        ),
    ]
}

/// Class name of template `i`.
pub fn class_name(i: usize) -> String {
    format!("G{i:02}")
}

fn template(class: usize, seed: u64) -> Vec<WedgeSpec> {
    if let Some(t) = TEMPLATES.get(class) {
        return t.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n = rng.random_range(1..=4);
    (0..n)
        .map(|_| WedgeSpec {
            x: rng.random_range(-0.8..0.2),
            y: rng.random_range(-0.8..0.8),
            angle: rng.random_range(0.0..360.0),
            length: rng.random_range(0.5..1.6),
            width: rng.random_range(0.22..0.55),
        })
        .collect()
}

/// A wedge placed in pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct Wedge {
    head: [f64; 2],
    dir: [f64; 2],
    length: f64,
    width: f64,
    depth: f64,
}

impl Wedge {
    /// Kite outline: back apex, one head corner, tail tip, other head corner.
    fn outline(&self) -> [[f64; 2]; 4] {
        let [hx, hy] = self.head;
        let [dx, dy] = self.dir;
        let (px, py) = (-dy, dx);
        let back = 0.6 * self.width;
        [
            [hx - back * dx, hy - back * dy],
            [hx + self.width * px, hy + self.width * py],
            [hx + self.length * dx, hy + self.length * dy],
            [hx - self.width * px, hy - self.width * py],
        ]
    }

    /// Depth of the impression at `(x, y)`: proportional to the distance to
    /// the nearest kite edge, capped at `depth`.
    fn depth_at(&self, outline: &[[f64; 2]; 4], x: f64, y: f64) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..4 {
            let a = outline[i];
            let b = outline[(i + 1) % 4];
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len = (ex * ex + ey * ey).sqrt();
            if len == 0.0 {
                continue;
            }
            // Outline winds so that the interior lies to the right of each edge.
            let d = (ey * (x - a[0]) - ex * (y - a[1])) / len;
            min = min.min(d);
        }
        if min <= 0.0 {
            0.0
        } else {
            self.depth * (min / (0.45 * self.width)).min(1.0)
        }
    }
}

struct Placed {
    wedges: Vec<Wedge>,
    bounds: [f64; 4],
}

fn place_glyph(
    class: usize,
    seed: u64,
    style: &GlyphStyle,
    center: [f64; 2],
    half: f64,
    rng: &mut ChaCha8Rng,
) -> Placed {
    let mut wedges = Vec::new();
    let mut bounds = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let scale_jitter = 1.0 + rng.random_range(-0.08..0.08);
    for spec in template(class, seed) {
        let jx = rng.random_range(-1.0..1.0) * style.position_jitter;
        let jy = rng.random_range(-1.0..1.0) * style.position_jitter;
        let (ux, uy) = (spec.x + jx, spec.y + jy);
        let hx = center[0] + half * scale_jitter * (ux + style.slant * uy);
        let hy = center[1] + half * scale_jitter * uy;
        let angle = (spec.angle + rng.random_range(-1.0..1.0) * style.angle_jitter_deg) * PI / 180.0;
        // Shear the direction vector like the positions.
        let (mut dx, dy) = (angle.cos(), angle.sin());
        dx += style.slant * dy;
        let norm = (dx * dx + dy * dy).sqrt();
        let wedge = Wedge {
            head: [hx, hy],
            dir: [dx / norm, dy / norm],
            length: half * scale_jitter * spec.length * style.length_scale,
            width: half * scale_jitter * spec.width * style.width_scale,
            depth: style.depth * (1.0 + rng.random_range(-0.1..0.1)),
        };
        for p in wedge.outline() {
            bounds[0] = bounds[0].min(p[0]);
            bounds[1] = bounds[1].min(p[1]);
            bounds[2] = bounds[2].max(p[0]);
            bounds[3] = bounds[3].max(p[1]);
        }
        wedges.push(wedge);
    }
    Placed { wedges, bounds }
}

/// Rendered surface: height field in pixels, row-major.
struct DepthField {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthField {
    fn new(width: usize, height: usize, style: &GlyphStyle, rng: &mut ChaCha8Rng) -> Self {
        let mut z = vec![0.0; width * height];
        let bulge = 0.04 * width.min(height) as f64;
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(0.01..0.05),
                    rng.random_range(0.01..0.05),
                    rng.random_range(0.0..2.0 * PI),
                    style.relief * rng.random_range(0.5..1.0),
                )
            })
            .collect();
        for y in 0..height {
            for x in 0..width {
                let u = 2.0 * x as f64 / width as f64 - 1.0;
                let v = 2.0 * y as f64 / height as f64 - 1.0;
                let mut h = bulge * (1.0 - 0.5 * (u * u + v * v));
                for &(fx, fy, ph, amp) in &waves {
                    h += amp * (fx * x as f64 + fy * y as f64 + ph).sin();
                }
                z[y * width + x] = h;
            }
        }
        Self { width, height, z }
    }

    fn impress(&mut self, wedge: &Wedge, cut: &mut [f64]) {
        let outline = wedge.outline();
        let xs = outline.iter().map(|p| p[0]);
        let ys = outline.iter().map(|p| p[1]);
        let x0 = xs.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (xs.fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(self.width - 1);
        let y0 = ys.clone().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (ys.fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(self.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = wedge.depth_at(&outline, x as f64 + 0.5, y as f64 + 0.5);
                let c = &mut cut[y * self.width + x];
                *c = c.max(d);
            }
        }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.z[y * self.width + x]
    }

    fn gradient(&self, x: usize, y: usize) -> (f64, f64) {
        let (x, y) = (x as isize, y as isize);
        (
            (self.at(x + 1, y) - self.at(x - 1, y)) / 2.0,
            (self.at(x, y + 1) - self.at(x, y - 1)) / 2.0,
        )
    }

    fn normal(&self, x: usize, y: usize) -> [f64; 3] {
        let (gx, gy) = self.gradient(x, y);
        let n = (gx * gx + gy * gy + 1.0).sqrt();
        [-gx / n, -gy / n, 1.0 / n]
    }

    fn laplacian(&self, x: usize, y: usize) -> f64 {
        let (x, y) = (x as isize, y as isize);
        self.at(x + 1, y) + self.at(x - 1, y) + self.at(x, y + 1) + self.at(x, y - 1)
            - 4.0 * self.at(x, y)
    }
}

const CLAY: [f64; 3] = [0.80, 0.64, 0.50];

fn render(field: &DepthField, viz: VisualizationKind, texture: &[f64]) -> RgbImage {
    let (w, h) = (field.width, field.height);
    let mut img = RgbImage::new(w as u32, h as u32);
    let to8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        for x in 0..w {
            let n = field.normal(x, y);
            let t = texture[y * w + x];
            let px = match viz {
                VisualizationKind::NormalMap => {
                    Rgb([encode_normal(n[0]), encode_normal(n[1]), encode_normal(n[2])])
                }
                VisualizationKind::SketchA => {
                    let v = 1.0 - (field.laplacian(x, y).abs() * 0.9).min(1.0);
                    let g = to8(v);
                    Rgb([g, g, g])
                }
                VisualizationKind::SketchB => {
                    let (gx, gy) = field.gradient(x, y);
                    let v = 1.0 - ((gx * gx + gy * gy).sqrt() * 0.8).min(1.0);
                    let g = to8(v);
                    Rgb([g, g, g])
                }
                VisualizationKind::Color00 => {
                    let shade = 0.25 + 0.75 * n[2].powi(6);
                    Rgb(CLAY.map(|c| to8(c * shade * t)))
                }
                kind => {
                    let az = kind.light_azimuth().expect("directional kinds have an azimuth") * PI / 180.0;
                    let el = PI / 4.0;
                    let l = [az.sin() * el.cos(), -az.cos() * el.cos(), el.sin()];
                    let lambert = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
                    let shade = 0.12 + 0.88 * lambert / el.sin();
                    Rgb(CLAY.map(|c| to8(c * shade * t)))
                }
            };
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img
}

fn octagon(bounds: [f64; 4], margin: f64, w: f64, h: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut m = || margin * (1.0 + rng.random_range(-0.3..0.3));
    let (x0, y0, x1, y1) = (bounds[0] - m(), bounds[1] - m(), bounds[2] + m(), bounds[3] + m());
    let cx = 0.25 * (x1 - x0);
    let cy = 0.25 * (y1 - y0);
    [
        [x0 + cx, y0],
        [x1 - cx, y0],
        [x1, y0 + cy],
        [x1, y1 - cy],
        [x1 - cx, y1],
        [x0 + cx, y1],
        [x0, y1 - cy],
        [x0, y0 + cy],
    ]
    .into_iter()
    .map(|[x, y]| [x.clamp(0.0, w).round(), y.clamp(0.0, h).round()])
    .collect()
}

/// Summary of a written fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSummary {
    pub surfaces: usize,
    pub annotations: usize,
    pub per_class: BTreeMap<String, usize>,
}

/// Renders the fixture described by `spec` into `root` (images plus
/// `manifest.json`). Output is a pure function of the spec.
pub fn write_fixture(root: impl AsRef<Path>, spec: &FixtureSpec) -> Result<FixtureSummary> {
    spec.validate()?;
    let root = root.as_ref();
    fs::create_dir_all(root.join("images"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_surface = (spec.cols * spec.rows) as usize;
    let (width, height) = (spec.cols * spec.cell, spec.rows * spec.cell);
    let mut raw = RawManifest {
        proveniences: Some(spec.groups.iter().map(|g| g.provenience.clone()).collect()),
        classes: (0..spec.n_classes)
            .map(|i| RawClass {
                name: class_name(i),
                unicode: None,
            })
            .collect(),
        surfaces: Vec::new(),
        annotations: Vec::new(),
    };
    let mut per_class = BTreeMap::new();
    let sides = [Side::Front, Side::Back];
    for (gi, group) in spec.groups.iter().enumerate() {
        let mut signs: Vec<usize> = group
            .per_class
            .iter()
            .take(spec.n_classes)
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        signs.shuffle(&mut rng);
        for (si, chunk) in signs.chunks(per_surface).enumerate() {
            let tablet_id = format!("{}-{:02}", group.provenience, si / 2 + 1);
            let side = sides[si % 2];
            let surface_id = crate::corpus::surface_id(&tablet_id, side);
            let mut field = DepthField::new(width as usize, height as usize, &group.style, &mut rng);
            let mut cut = vec![0.0; field.z.len()];
            let mut slots: Vec<usize> = (0..per_surface).collect();
            slots.shuffle(&mut rng);
            for (k, (&class, &slot)) in chunk.iter().zip(&slots).enumerate() {
                let cell = spec.cell as f64;
                let (col, row) = ((slot as u32 % spec.cols) as f64, (slot as u32 / spec.cols) as f64);
                let center = [
                    (col + 0.5) * cell + rng.random_range(-0.06..0.06) * cell,
                    (row + 0.5) * cell + rng.random_range(-0.06..0.06) * cell,
                ];
                let half = cell * 0.3;
                let placed = place_glyph(class, spec.seed, &group.style, center, half, &mut rng);
                for wedge in &placed.wedges {
                    field.impress(wedge, &mut cut);
                }
                let polygon = octagon(placed.bounds, 3.0, width as f64, height as f64, &mut rng);
                let name = class_name(class);
                *per_class.entry(name.clone()).or_insert(0) += 1;
                raw.annotations.push(RawAnnotation {
                    id: format!("g{gi}-s{si:03}-{k:02}"),
                    tablet_id: tablet_id.clone(),
                    side: side.to_string(),
                    class: name,
                    polygon,
                });
            }
            for (z, c) in field.z.iter_mut().zip(&cut) {
                *z -= c;
            }
            let texture: Vec<f64> = (0..field.z.len())
                .map(|_| 1.0 + rng.random_range(-0.04..0.04))
                .collect();
            let mut images = BTreeMap::new();
            for &viz in &spec.visualizations {
                let hit = |list: &[(String, VisualizationKind)]| {
                    list.iter().any(|(s, v)| *s == surface_id && *v == viz)
                };
                if hit(&spec.absent) {
                    continue;
                }
                let rel = format!("images/{tablet_id}_{side}_{viz}.png");
                if hit(&spec.missing_files) {
                    images.insert(viz.to_string(), rel);
                    continue;
                }
                render(&field, viz, &texture)
                    .save(root.join(&rel))
                    .map_err(|e| Error::Image {
                        path: root.join(&rel),
                        message: e.to_string(),
                    })?;
                images.insert(viz.to_string(), rel);
            }
            raw.surfaces.push(RawSurface {
                tablet_id,
                side: side.to_string(),
                provenience: group.provenience.clone(),
                width_px: width,
                height_px: height,
                images,
            });
        }
    }
    let summary = FixtureSummary {
        surfaces: raw.surfaces.len(),
        annotations: raw.annotations.len(),
        per_class,
    };
    fs::write(root.join(MANIFEST_FILE), serde_json::to_string_pretty(&raw)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    fn small(seed: u64) -> FixtureSpec {
        FixtureSpec {
            cols: 4,
            rows: 3,
            visualizations: vec![VisualizationKind::SketchB, VisualizationKind::NormalMap],
            ..FixtureSpec::glyphs(seed, 3)
        }
    }

    #[test]
    fn fixture_loads_and_counts_match() {
        let dir = tempfile::tempdir().unwrap();
        let summary = write_fixture(dir.path(), &small(1)).unwrap();
        assert_eq!(summary.annotations, 30);
        assert_eq!(summary.surfaces, 3);
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(m.annotations.len(), 30);
        assert_eq!(m.vocabulary.len(), 10);
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_fixture(a.path(), &small(7)).unwrap();
        write_fixture(b.path(), &small(7)).unwrap();
        let ma = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        let mb = fs::read(b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
        let img = "images/North-01_front_SketchB.png";
        assert_eq!(fs::read(a.path().join(img)).unwrap(), fs::read(b.path().join(img)).unwrap());
    }

    #[test]
    fn omitted_image_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small(2);
        spec.missing_files.push(("North-01:front".into(), VisualizationKind::SketchB));
        write_fixture(dir.path(), &spec).unwrap();
        assert!(load_manifest(dir.path()).is_err());
    }

    #[test]
    fn absent_visualization_is_not_listed() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small(2);
        spec.absent.push(("North-01:back".into(), VisualizationKind::SketchB));
        write_fixture(dir.path(), &spec).unwrap();
        let m = load_manifest(dir.path()).unwrap();
        let (_, s) = m.find_surface("North-01:back").unwrap();
        assert_eq!(s.visualizations(), [VisualizationKind::NormalMap]);
    }

    #[test]
    fn flat_field_normal_points_up() {
        let f = DepthField {
            width: 3,
            height: 3,
            z: vec![1.0; 9],
        };
        assert_eq!(f.normal(1, 1), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn wedge_depth_is_zero_outside_and_positive_inside() {
        let wedge = Wedge {
            head: [10.0, 10.0],
            dir: [1.0, 0.0],
            length: 20.0,
            width: 5.0,
            depth: 4.0,
        };
        let o = wedge.outline();
        assert!(wedge.depth_at(&o, 12.0, 10.0) > 0.0);
        assert_eq!(wedge.depth_at(&o, 0.0, 0.0), 0.0);
        assert_eq!(wedge.depth_at(&o, 40.0, 10.0), 0.0);
    }
}
