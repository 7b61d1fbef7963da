//! Crop extraction for whole corpus views.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusView, Side, VisualizationKind};
use crate::error::{CorpusError, Error, Result};
use crate::geometry::{extract_crop, normalized_centroid, squarify, SquareBox};
use crate::raster::ImageF32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub class: String,
    pub tablet_id: String,
    pub side: Side,
    pub provenience: String,
    pub visualization: VisualizationKind,
    /// Vertex centroid in surface-normalized coordinates.
    pub centroid: (f64, f64),
    pub square: SquareBox,
}

/// One 224×224 crop in `[0, 1]` (normalization happens in `augment`), its
/// class index in the manifest vocabulary and its provenance.
#[derive(Debug, Clone)]
pub struct CropSample {
    pub pixels: ImageF32,
    pub label: usize,
    pub meta: SampleMeta,
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

/// Extracts a crop for every annotation of `view` from the `viz` rendering of
/// its surface. Output order follows the view.
pub fn load_crops(view: &CorpusView<'_>, viz: VisualizationKind) -> Result<Vec<CropSample>> {
    let manifest = view.manifest;
    let mut by_surface: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &idx) in view.indices.iter().enumerate() {
        by_surface
            .entry(manifest.annotations[idx].surface)
            .or_default()
            .push(pos);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_surface.into_iter().collect();
    let loaded: Vec<Vec<(usize, CropSample)>> = groups
        .par_iter()
        .map(|(surface_idx, positions)| {
            let surface = &manifest.surfaces[*surface_idx];
            let rel = surface.images.get(&viz).ok_or_else(|| {
                Error::from(CorpusError::VisualizationUnavailable {
                    viz: viz.to_string(),
                    surfaces: vec![surface.surface_id()],
                })
            })?;
            let image = load_rgb(rel)?;
            positions
                .iter()
                .map(|&pos| {
                    let ann = &manifest.annotations[view.indices[pos]];
                    let square = squarify(&ann.polygon)?;
                    let pixels = extract_crop(&image, &square)?;
                    let label = manifest
                        .vocabulary
                        .index_of(&ann.sign_class)
                        .expect("manifest classes are in its vocabulary");
                    let meta = SampleMeta {
                        id: ann.id.clone(),
                        class: ann.sign_class.clone(),
                        tablet_id: surface.tablet_id.clone(),
                        side: surface.side,
                        provenience: surface.provenience.clone(),
                        visualization: viz,
                        centroid: normalized_centroid(
                            &ann.polygon,
                            surface.width_px,
                            surface.height_px,
                        ),
                        square,
                    };
                    Ok((pos, CropSample { pixels, label, meta }))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Option<CropSample>> = (0..view.len()).map(|_| None).collect();
    for (pos, sample) in loaded.into_iter().flatten() {
        out[pos] = Some(sample);
    }
    Ok(out.into_iter().map(|s| s.expect("every position filled")).collect())
}
