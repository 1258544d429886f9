//! Contrast-limited adaptive histogram equalization on the L plane.
//!
//! The image is split into a `cols x rows` grid. Each tile gets a clipped
//! histogram of quantized luminance and a transfer function built from its
//! cumulative distribution. Every pixel is then mapped through the four
//! nearest tile transfer functions and blended bilinearly; pixels beyond the
//! outermost tile centers reuse the border tile's mapping.

use super::LabImage;
use crate::error::ImagingError;

/// Number of luminance bins used for the tile histograms.
pub const HISTOGRAM_BINS: usize = 256;

const BIN_MAX: f32 = (HISTOGRAM_BINS - 1) as f32;

/// Per-tile transfer functions, row-major over the tile grid. Each table maps
/// a luminance bin to an output level on the `0..=255` bin scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLuts {
    pub cols: u32,
    pub rows: u32,
    pub tables: Vec<[f32; HISTOGRAM_BINS]>,
}

impl TileLuts {
    pub fn table(&self, col: u32, row: u32) -> &[f32; HISTOGRAM_BINS] {
        &self.tables[(row * self.cols + col) as usize]
    }
}

/// Luminance in `[0, 100]` to its histogram bin.
pub fn quantize_l(l: f32) -> usize {
    (l * BIN_MAX / 100.0).round().clamp(0.0, BIN_MAX) as usize
}

fn check_grid(lab: &LabImage, grid: (u32, u32)) -> Result<(), ImagingError> {
    let (cols, rows) = grid;
    if cols == 0 || rows == 0 || cols > lab.width() || rows > lab.height() {
        return Err(ImagingError::TileGrid {
            cols,
            rows,
            width: lab.width(),
            height: lab.height(),
        });
    }
    Ok(())
}

/// Span of tile `i` out of `n` along an axis of length `len`.
fn tile_span(i: u32, n: u32, len: u32) -> (usize, usize) {
    let start = (i as u64 * len as u64 / n as u64) as usize;
    let end = ((i as u64 + 1) * len as u64 / n as u64) as usize;
    (start, end)
}

fn clip_histogram(hist: &mut [u32; HISTOGRAM_BINS], limit: u32) {
    let mut excess = 0u32;
    for bin in hist.iter_mut() {
        if *bin > limit {
            excess += *bin - limit;
            *bin = limit;
        }
    }
    let batch = excess / HISTOGRAM_BINS as u32;
    let mut residual = excess % HISTOGRAM_BINS as u32;
    for bin in hist.iter_mut() {
        *bin += batch;
    }
    if residual > 0 {
        let step = (HISTOGRAM_BINS / residual as usize).max(1);
        let mut i = 0;
        while i < HISTOGRAM_BINS && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
}

/// Builds the clipped-histogram transfer function of every tile.
pub fn tile_luts(lab: &LabImage, clip_limit: f64, grid: (u32, u32)) -> Result<TileLuts, ImagingError> {
    check_grid(lab, grid)?;
    if !(clip_limit > 0.0) {
        return Err(ImagingError::Param(format!("clip limit must be > 0, got {clip_limit}")));
    }
    let (cols, rows) = grid;
    let width = lab.width() as usize;
    let bins: Vec<usize> = lab.l().iter().map(|l| quantize_l(*l)).collect();

    let mut tables = Vec::with_capacity((cols * rows) as usize);
    for ty in 0..rows {
        let (y0, y1) = tile_span(ty, rows, lab.height());
        for tx in 0..cols {
            let (x0, x1) = tile_span(tx, cols, lab.width());
            let mut hist = [0u32; HISTOGRAM_BINS];
            for y in y0..y1 {
                for &bin in &bins[y * width + x0..y * width + x1] {
                    hist[bin] += 1;
                }
            }
            let area = ((x1 - x0) * (y1 - y0)) as u32;
            let limit = ((clip_limit * area as f64 / HISTOGRAM_BINS as f64).floor() as u32).max(1);
            clip_histogram(&mut hist, limit);

            let scale = BIN_MAX / area as f32;
            let mut table = [0f32; HISTOGRAM_BINS];
            let mut cdf = 0u32;
            for (out, count) in table.iter_mut().zip(hist.iter()) {
                cdf += count;
                *out = (cdf as f32 * scale).min(BIN_MAX);
            }
            tables.push(table);
        }
    }
    Ok(TileLuts { cols, rows, tables })
}

/// Neighbouring tile indices and blend weight for a pixel coordinate.
fn neighbours(pos: usize, tiles: u32, len: u32) -> (u32, u32, f32) {
    let tile = len as f32 / tiles as f32;
    let t = (pos as f32 + 0.5) / tile - 0.5;
    let lo = t.floor();
    let frac = t - lo;
    let last = tiles as i64 - 1;
    let a = (lo as i64).clamp(0, last) as u32;
    let b = (lo as i64 + 1).clamp(0, last) as u32;
    (a, b, frac)
}

/// Equalizes the luminance plane; chroma planes are carried over unchanged.
pub fn clahe_luminance(lab: &LabImage, clip_limit: f64, grid: (u32, u32)) -> Result<LabImage, ImagingError> {
    let luts = tile_luts(lab, clip_limit, grid)?;
    let (w, h) = (lab.width() as usize, lab.height() as usize);
    let x_neigh: Vec<_> = (0..w).map(|x| neighbours(x, luts.cols, lab.width())).collect();

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (ty0, ty1, fy) = neighbours(y, luts.rows, lab.height());
        for (x, &(tx0, tx1, fx)) in x_neigh.iter().enumerate() {
            let bin = quantize_l(lab.l()[y * w + x]);
            let top = luts.table(tx0, ty0)[bin] * (1.0 - fx) + luts.table(tx1, ty0)[bin] * fx;
            let bottom = luts.table(tx0, ty1)[bin] * (1.0 - fx) + luts.table(tx1, ty1)[bin] * fx;
            let level = top * (1.0 - fy) + bottom * fy;
            out.push((level * 100.0 / BIN_MAX).clamp(0.0, 100.0));
        }
    }
    Ok(lab.with_l(out))
}
