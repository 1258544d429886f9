//! RGB rasters and the haze-reduction chain applied before grounding:
//! sRGB to CIELAB, CLAHE on luminance, back to sRGB, then unsharp masking.

mod blur;
pub mod clahe;
mod color;

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::ImagingError;
use crate::geometry::{BBox, Dims};

pub use blur::{gaussian_blur, gaussian_kernel, unsharp_mask};
pub use clahe::clahe_luminance;
pub use color::{lab_to_srgb, pixel_to_lab, srgb_to_lab, LabImage};

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        Dims::new(width, height)?;
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims {
            width: self.width,
            height: self.height,
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies out the region covered by `b`, which must lie within the image.
    pub fn crop(&self, b: &BBox) -> Result<ImageBuffer, ImagingError> {
        if !b.is_within(self.dims()) {
            return Err(ImagingError::Param(format!(
                "crop {b} outside {}x{} image",
                self.width, self.height
            )));
        }
        let (x0, y0) = (b.x_min() as usize, b.y_min() as usize);
        let (w, h) = (b.width() as usize, b.height() as usize);
        let row_bytes = self.width as usize * 3;
        let mut out = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = y * row_bytes + x0 * 3;
            out.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        ImageBuffer::new(w as u32, h as u32, out)
    }

    /// Draws a rectangle outline inside `b`, `stroke` pixels thick. The
    /// outline's tight bounding box equals `b` clipped to the image.
    pub fn draw_outline(&mut self, b: &BBox, rgb: [u8; 3], stroke: u32) {
        let s = stroke.max(1) as i64;
        for y in b.y_min().max(0)..b.y_max().min(self.height as i64) {
            for x in b.x_min().max(0)..b.x_max().min(self.width as i64) {
                let on_edge = x < b.x_min() + s
                    || x >= b.x_max() - s
                    || y < b.y_min() + s
                    || y >= b.y_max() - s;
                if on_edge {
                    self.put(x as u32, y as u32, rgb);
                }
            }
        }
    }

    pub fn fill_rect(&mut self, b: &BBox, rgb: [u8; 3]) {
        for y in b.y_min().max(0)..b.y_max().min(self.height as i64) {
            for x in b.x_min().max(0)..b.x_max().min(self.width as i64) {
                self.put(x as u32, y as u32, rgb);
            }
        }
    }

    pub fn load(path: &Path) -> Result<ImageBuffer, ImagingError> {
        let img = image::open(path).map_err(|source| ImagingError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_rgb_image(img.to_rgb8())
    }

    /// Decodes PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
        let img = image::load_from_memory(bytes)?;
        Self::from_rgb_image(img.to_rgb8())
    }

    fn from_rgb_image(img: RgbImage) -> Result<ImageBuffer, ImagingError> {
        let (w, h) = img.dimensions();
        ImageBuffer::new(w, h, img.into_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImagingError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Parameters of the enhancement chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceParams {
    pub clahe_clip_limit: f64,
    /// (cols, rows)
    pub clahe_tile_grid: (u32, u32),
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            clahe_clip_limit: 2.0,
            clahe_tile_grid: (8, 8),
            unsharp_sigma: 1.5,
            unsharp_amount: 0.5,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.clahe_clip_limit > 0.0) {
            return Err(ImagingError::Param(format!(
                "clahe_clip_limit must be > 0, got {}",
                self.clahe_clip_limit
            )));
        }
        if self.clahe_tile_grid.0 == 0 || self.clahe_tile_grid.1 == 0 {
            return Err(ImagingError::Param("clahe_tile_grid must be positive".into()));
        }
        if !(self.unsharp_sigma > 0.0) {
            return Err(ImagingError::Param(format!(
                "unsharp_sigma must be > 0, got {}",
                self.unsharp_sigma
            )));
        }
        if !(self.unsharp_amount >= 0.0) {
            return Err(ImagingError::Param(format!(
                "unsharp_amount must be >= 0, got {}",
                self.unsharp_amount
            )));
        }
        Ok(())
    }
}

/// Full enhancement chain: CLAHE on the L channel of CIELAB, then unsharp masking.
pub fn preprocess(img: &ImageBuffer, params: &EnhanceParams) -> Result<ImageBuffer, ImagingError> {
    params.validate()?;
    let lab = srgb_to_lab(img);
    let (cols, rows) = params.clahe_tile_grid;
    let enhanced = clahe_luminance(&lab, params.clahe_clip_limit, (cols, rows))?;
    let rgb = lab_to_srgb(&enhanced);
    unsharp_mask(&rgb, params.unsharp_sigma, params.unsharp_amount)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hazy(width: u32, height: u32) -> ImageBuffer {
        // structured content squeezed into a narrow luminance band
        let mut px = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let t = ((x * 7 + y * 3) % 64) as f64 / 63.0;
                let v = (98.0 + t * 38.0) as u8;
                px.extend_from_slice(&[v, v.saturating_add(2), v.saturating_sub(2)]);
            }
        }
        ImageBuffer::new(width, height, px).unwrap()
    }

    fn l_std(img: &ImageBuffer) -> f64 {
        let lab = srgb_to_lab(img);
        let l = lab.l();
        let mean = l.iter().map(|v| *v as f64).sum::<f64>() / l.len() as f64;
        (l.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / l.len() as f64).sqrt()
    }

    #[test]
    fn buffer_length_is_checked() {
        assert!(ImageBuffer::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageBuffer::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn crop_copies_region() {
        let mut img = ImageBuffer::filled(10, 10, [0, 0, 0]).unwrap();
        img.put(3, 4, [9, 8, 7]);
        let c = img.crop(&BBox::new(3, 4, 6, 8).unwrap()).unwrap();
        assert_eq!((c.width(), c.height()), (3, 4));
        assert_eq!(c.get(0, 0), [9, 8, 7]);
        assert!(img.crop(&BBox::new(8, 8, 12, 12).unwrap()).is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = hazy(17, 9);
        let back = ImageBuffer::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn preprocess_preserves_dims_and_is_deterministic() {
        let img = hazy(70, 45);
        let p = EnhanceParams::default();
        let a = preprocess(&img, &p).unwrap();
        let b = preprocess(&img, &p).unwrap();
        assert_eq!(a.dims(), img.dims());
        assert_eq!(a, b);
    }

    #[test]
    fn preprocess_increases_contrast_of_hazy_image() {
        let img = hazy(128, 128);
        let lab = srgb_to_lab(&img);
        let (lo, hi) = lab
            .l()
            .iter()
            .fold((f32::MAX, f32::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        assert!(lo >= 40.0 && hi <= 60.0, "fixture L range {lo}..{hi}");
        let out = preprocess(&img, &EnhanceParams::default()).unwrap();
        assert!(l_std(&out) > l_std(&img));
    }

    #[test]
    fn preprocess_rejects_oversized_grid() {
        let img = hazy(4, 4);
        let p = EnhanceParams {
            clahe_tile_grid: (8, 8),
            ..Default::default()
        };
        assert!(matches!(preprocess(&img, &p), Err(ImagingError::TileGrid { .. })));
    }

    #[test]
    fn outline_bbox_matches_rect() {
        let mut img = ImageBuffer::filled(50, 50, [0, 0, 0]).unwrap();
        let b = BBox::new(5, 7, 30, 41).unwrap();
        img.draw_outline(&b, [255, 0, 0], 3);
        assert_eq!(img.get(5, 7), [255, 0, 0]);
        assert_eq!(img.get(29, 40), [255, 0, 0]);
        assert_eq!(img.get(15, 20), [0, 0, 0]);
        assert_eq!(img.get(30, 41), [0, 0, 0]);
    }
}
