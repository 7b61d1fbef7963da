//! Classification of a user-selected region of a surface image.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, VisualizationKind};
use crate::dataset::load_rgb;
use crate::error::{CorpusError, Error, GeometryError, Result};
use crate::geometry::{extract_crop, squarify, Point, SquareBox};
use crate::model::{classify_crops, confidences, Classifier};
use crate::raster::ImageF32;

/// Confidence at or above which an entry is meant to be shown.
pub const DISPLAY_THRESHOLD: f64 = 0.005;
pub const TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Polygon(Vec<[f64; 2]>),
}

impl Region {
    /// Outline handed to `squarify`. Rectangles become their four corners.
    pub fn outline(&self) -> Vec<Point> {
        match self {
            Region::Rect { x0, y0, x1, y1 } => vec![
                Point::new(*x0, *y0),
                Point::new(*x1, *y0),
                Point::new(*x1, *y1),
                Point::new(*x0, *y1),
            ],
            Region::Polygon(pts) => pts.iter().map(|p| Point::new(p[0], p[1])).collect(),
        }
    }

    pub fn square(&self) -> Result<SquareBox, GeometryError> {
        if let Region::Rect { x0, y0, x1, y1 } = self {
            if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            if x1 <= x0 || y1 <= y0 {
                return Err(GeometryError::ZeroExtent);
            }
        }
        let outline = self.outline();
        if outline.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        squarify(&outline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClass {
    pub class: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropEcho {
    pub surface_id: String,
    pub visualization: VisualizationKind,
    pub square: SquareBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Top entries by descending confidence.
    pub top: Vec<RankedClass>,
    /// `confidence >= DISPLAY_THRESHOLD` for each entry of `top`.
    pub display_mask: Vec<bool>,
    /// Sum of the full softmax before truncation.
    pub softmax_sum: f64,
    pub model_fingerprint: String,
    pub crop: CropEcho,
    pub logits: Vec<f32>,
}

/// Ranks a logit row into a prediction. Ties go to the lower class index.
pub fn rank_prediction<C: Classifier + ?Sized>(classifier: &C, logits: Vec<f32>, crop: CropEcho) -> Prediction {
    let probs = confidences(&logits);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let vocab = classifier.vocabulary();
    let top: Vec<RankedClass> = order
        .iter()
        .take(TOP_K)
        .map(|&i| RankedClass {
            class: vocab.name(i).unwrap_or_default().to_owned(),
            confidence: probs[i],
        })
        .collect();
    Prediction {
        display_mask: top.iter().map(|r| r.confidence >= DISPLAY_THRESHOLD).collect(),
        top,
        softmax_sum: probs.iter().sum(),
        model_fingerprint: classifier.fingerprint(),
        crop,
        logits,
    }
}

/// Squarifies the region and cuts the crop from an already loaded image.
pub fn region_crop(image: &RgbImage, region: &Region) -> Result<(SquareBox, ImageF32)> {
    let square = region.square()?;
    let crop = extract_crop(image, &square)?;
    Ok((square, crop))
}

pub fn classify_image_region<C: Classifier + ?Sized>(
    classifier: &C,
    image: &RgbImage,
    region: &Region,
    echo: (String, VisualizationKind),
) -> Result<Prediction> {
    let (square, crop) = region_crop(image, region)?;
    let logits = classify_crops(classifier, &[&crop])?
        .pop()
        .expect("one row per crop");
    Ok(rank_prediction(
        classifier,
        logits,
        CropEcho {
            surface_id: echo.0,
            visualization: echo.1,
            square,
        },
    ))
}

/// Loads the surface rendering and classifies the region.
pub fn classify_region<C: Classifier + ?Sized>(
    classifier: &C,
    manifest: &CorpusManifest,
    surface_id: &str,
    viz: VisualizationKind,
    region: &Region,
) -> Result<Prediction> {
    let (_, surface) = manifest
        .find_surface(surface_id)
        .ok_or_else(|| Error::Invalid(format!("unknown surface {surface_id}")))?;
    let rel = surface.images.get(&viz).ok_or_else(|| CorpusError::VisualizationUnavailable {
        viz: viz.to_string(),
        surfaces: vec![surface_id.to_owned()],
    })?;
    let image = load_rgb(rel)?;
    classify_image_region(classifier, &image, region, (surface_id.to_owned(), viz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::model::{FixedClassifier, UniformClassifier};

    fn echo() -> CropEcho {
        CropEcho {
            surface_id: "t:front".into(),
            visualization: VisualizationKind::SketchB,
            square: SquareBox { x0: 0, y0: 0, side: 4 },
        }
    }

    #[test]
    fn uniform_over_206_masks_everything() {
        let names: Vec<String> = (0..206).map(|i| format!("S{i:03}")).collect();
        let c = UniformClassifier {
            vocabulary: Vocabulary::new(names),
        };
        let p = rank_prediction(&c, vec![0.0; 206], echo());
        assert_eq!(p.top.len(), 5);
        assert!(p.display_mask.iter().all(|m| !m));
        assert!((p.top[0].confidence - 1.0 / 206.0).abs() < 1e-12);
        assert!((p.softmax_sum - 1.0).abs() < 1e-6);
        assert_eq!(p.top[0].class, "S000");
    }

    #[test]
    fn fixed_logits_are_ranked_descending() {
        let c = FixedClassifier {
            vocabulary: Vocabulary::new(["A", "B", "C", "D", "E", "F"]),
            row: vec![0.0, 3.0, 1.0, 5.0, -2.0, 1.0],
        };
        let p = rank_prediction(&c, c.row.clone(), echo());
        let names: Vec<&str> = p.top.iter().map(|r| r.class.as_str()).collect();
        assert_eq!(names, ["D", "B", "C", "F", "A"]);
        assert!(p.top.windows(2).all(|w| w[0].confidence >= w[1].confidence));
        assert_eq!(p.display_mask, [true, true, true, true, true]);
    }

    #[test]
    fn degenerate_rect_is_rejected() {
        let r = Region::Rect {
            x0: 5.0,
            y0: 5.0,
            x1: 5.0,
            y1: 9.0,
        };
        assert!(r.square().is_err());
        let ok = Region::Rect {
            x0: 10.0,
            y0: 20.0,
            x1: 30.0,
            y1: 60.0,
        };
        assert_eq!(ok.square().unwrap(), SquareBox { x0: 0, y0: 20, side: 40 });
    }
}
