//! PNG + JSON sidecar navigability maps.
//!
//! Pixel `(row r, col c)` covers world x in `[origin_x + c·res, origin_x +
//! (c+1)·res)`. By default the sidecar origin is the image's top-left corner
//! and rows grow toward −y, so row `r` covers y in `[origin_y − (r+1)·res,
//! origin_y − r·res)`. With `"y_up": true` rows grow toward +y from
//! `origin_y`. Gray values ≥ 128 are navigable.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::environment::NavigabilityMap;
use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const NAVIGABLE_THRESHOLD: u8 = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution_m_per_px: f64,
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub y_up: bool,
    /// Optional image size check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

/// Grid row of image row `r`, and the grid origin.
fn layout(sidecar: &MapSidecar, height: usize) -> (Point2, impl Fn(usize) -> usize) {
    let res = sidecar.resolution_m_per_px;
    let y_up = sidecar.y_up;
    let origin = if y_up {
        Point2::new(sidecar.origin_x, sidecar.origin_y)
    } else {
        Point2::new(sidecar.origin_x, sidecar.origin_y - height as f64 * res)
    };
    (origin, move |r: usize| if y_up { r } else { height - 1 - r })
}

pub fn map_from_image(img: &GrayImage, sidecar: &MapSidecar) -> Result<NavigabilityMap> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (origin, grid_row) = layout(sidecar, h);
    let mut cells = vec![false; w * h];
    for (c, r, px) in img.enumerate_pixels() {
        cells[grid_row(r as usize) * w + c as usize] = px.0[0] >= NAVIGABLE_THRESHOLD;
    }
    NavigabilityMap::new(w, h, origin, sidecar.resolution_m_per_px, cells)
}

pub fn load_navigability_map(png: &Path, json: &Path) -> Result<NavigabilityMap> {
    let text = fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
    let sidecar: MapSidecar = serde_json::from_str(&text).map_err(|e| Error::json(json, e))?;
    let img = image::open(png)
        .map_err(|source| Error::Image {
            path: png.to_path_buf(),
            source,
        })?
        .to_luma8();
    for (declared, actual, what) in [
        (sidecar.width, img.width(), "width"),
        (sidecar.height, img.height(), "height"),
    ] {
        if let Some(d) = declared {
            if d != actual {
                return Err(Error::InvalidInput(format!(
                    "{}: sidecar {what} {d} but {} is {actual} px",
                    json.display(),
                    png.display()
                )));
            }
        }
    }
    map_from_image(&img, &sidecar)
}

/// Writes `map` so that [`load_navigability_map`] reproduces it exactly
/// (top-left origin convention).
pub fn save_navigability_map(map: &NavigabilityMap, scene_id: &str, png: &Path, json: &Path) -> Result<()> {
    let (w, h) = (map.width(), map.height());
    let img = GrayImage::from_fn(w as u32, h as u32, |c, r| {
        let navigable = map.cell(c as usize, h - 1 - r as usize);
        Luma([if navigable { 255 } else { 0 }])
    });
    img.save(png).map_err(|source| Error::Image {
        path: png.to_path_buf(),
        source,
    })?;
    let sidecar = MapSidecar {
        origin_x: map.origin().x,
        origin_y: map.origin().y + h as f64 * map.resolution(),
        resolution_m_per_px: map.resolution(),
        scene_id: scene_id.to_string(),
        y_up: false,
        width: Some(w as u32),
        height: Some(h as u32),
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(json, e))?;
    fs::write(json, text).map_err(|e| Error::io(json, e))
}
