//! Axis-aligned boxes and binary masks.
//!
//! Boxes use the half-open integer pixel convention: a box covers columns
//! `x_min..x_max` and rows `y_min..y_max`, so its area is
//! `(x_max - x_min) * (y_max - y_min)`. An empty box cannot be constructed;
//! "no box" is expressed as `Option<BBox>::None`.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Image dimensions in pixels. Both sides are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyDims { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// The box covering the whole image.
    pub fn full_box(&self) -> BBox {
        BBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width as i64,
            y_max: self.height as i64,
        }
    }
}

/// Axis-aligned integer box, half-open on the max side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    x_min: i64,
    y_min: i64,
    x_max: i64,
    y_max: i64,
}

impl BBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GeometryError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::EmptyBox([x_min, y_min, x_max, y_max]));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from `[x_min, y_min, x_max, y_max]`.
    pub fn from_array(c: [i64; 4]) -> Result<Self, GeometryError> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(&self) -> [i64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn x_min(&self) -> i64 {
        self.x_min
    }
    pub fn y_min(&self) -> i64 {
        self.y_min
    }
    pub fn x_max(&self) -> i64 {
        self.x_max
    }
    pub fn y_max(&self) -> i64 {
        self.y_max
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    /// Overlap of two boxes, `None` when they do not share a pixel.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_pixel(&self, x: i64, y: i64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// True when the box lies inside the image rectangle of `dims`.
    pub fn is_within(&self, dims: Dims) -> bool {
        dims.full_box().contains(self)
    }

    /// Fraction of `self`'s area that lies inside `outer`.
    pub fn containment_in(&self, outer: &BBox) -> f64 {
        match self.intersection(outer) {
            Some(i) => i.area() as f64 / self.area() as f64,
            None => 0.0,
        }
    }

    pub fn translate(&self, dx: i64, dy: i64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

// Boxes travel as `[x_min, y_min, x_max, y_max]` everywhere on the wire.
impl Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = <[i64; 4]>::deserialize(d)?;
        BBox::from_array(c).map_err(serde::de::Error::custom)
    }
}

/// Per-pixel foreground raster with a confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    score: f64,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>, score: f64) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(GeometryError::MaskLength {
                expected,
                actual: bits.len(),
            });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::Score(score));
        }
        Ok(Self {
            width,
            height,
            bits,
            score,
        })
    }

    pub fn empty(width: u32, height: u32, score: f64) -> Result<Self, GeometryError> {
        Self::new(width, height, vec![false; width as usize * height as usize], score)
    }

    /// Mask whose foreground is exactly the pixels of `rect` (clipped to the raster).
    pub fn from_rect(width: u32, height: u32, rect: &BBox, score: f64) -> Result<Self, GeometryError> {
        let mut m = Self::empty(width, height, score)?;
        for y in 0..height {
            for x in 0..width {
                if rect.contains_pixel(x as i64, y as i64) {
                    m.bits[y as usize * width as usize + x as usize] = true;
                }
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
    pub fn score(&self) -> f64 {
        self.score
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    pub fn foreground_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Clears every pixel outside `rect`.
    pub fn restrict_to(&mut self, rect: &BBox) {
        let w = self.width as usize;
        for (i, bit) in self.bits.iter_mut().enumerate() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            if !rect.contains_pixel(x, y) {
                *bit = false;
            }
        }
    }
}

/// Intersection over union under half-open pixel semantics.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Tightest box around the foreground, `None` for an all-background mask.
pub fn mask_to_bbox(m: &BinaryMask) -> Option<BBox> {
    let w = m.width as usize;
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in m.bits.iter().enumerate().filter(|(_, b)| **b) {
        let (x, y) = (i % w, i / w);
        extent = Some(match extent {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    extent.map(|(x0, y0, x1, y1)| BBox {
        x_min: x0 as i64,
        y_min: y0 as i64,
        x_max: x1 as i64 + 1,
        y_max: y1 as i64 + 1,
    })
}

/// Share of the image covered by `b`, in percent.
pub fn area_ratio_percent(b: &BBox, d: Dims) -> f64 {
    100.0 * b.area() as f64 / d.area() as f64
}

/// Moves a box found inside a crop back into original-image coordinates.
pub fn remap_to_original(b_in_crop: &BBox, crop_origin: (i64, i64)) -> BBox {
    b_in_crop.translate(crop_origin.0, crop_origin.1)
}

pub fn clamp_bbox(b: &BBox, d: Dims) -> Option<BBox> {
    b.intersection(&d.full_box())
}

/// Grows each side by `margin_fraction` of the box's extent along that axis,
/// then clips to the image.
pub fn expand_bbox(b: &BBox, margin_fraction: f64, d: Dims) -> BBox {
    let mx = (margin_fraction * b.width() as f64).round() as i64;
    let my = (margin_fraction * b.height() as f64).round() as i64;
    let grown = BBox {
        x_min: b.x_min - mx,
        y_min: b.y_min - my,
        x_max: b.x_max + mx,
        y_max: b.y_max + my,
    };
    // A box that was outside the image stays as-is rather than vanishing.
    clamp_bbox(&grown, d).unwrap_or(*b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: i64, b: i64, c: i64, d: i64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn dims(w: u32, h: u32) -> Dims {
        Dims::new(w, h).unwrap()
    }

    // Brute-force oracle: count pixels of the bounding rectangle of both boxes.
    fn iou_by_counting(a: &BBox, b: &BBox) -> f64 {
        let (x0, y0) = (a.x_min.min(b.x_min), a.y_min.min(b.y_min));
        let (x1, y1) = (a.x_max.max(b.x_max), a.y_max.max(b.y_max));
        let (mut inter, mut union) = (0u64, 0u64);
        for y in y0..y1 {
            for x in x0..x1 {
                let (ia, ib) = (a.contains_pixel(x, y), b.contains_pixel(x, y));
                inter += (ia && ib) as u64;
                union += (ia || ib) as u64;
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn empty_boxes_are_rejected() {
        assert!(BBox::new(5, 0, 5, 10).is_err());
        assert!(BBox::new(0, 3, 10, 2).is_err());
        assert!(Dims::new(0, 4).is_err());
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bx(0, 0, 10, 10), &bx(0, 0, 10, 10)), 1.0);
        assert_eq!(iou(&bx(0, 0, 10, 10), &bx(20, 20, 30, 30)), 0.0);
        let a = bx(0, 0, 10, 10);
        let b = bx(5, 5, 15, 15);
        let expected = iou_by_counting(&a, &b);
        assert!((expected - 25.0 / 175.0).abs() < 1e-12);
        assert!((iou(&a, &b) - expected).abs() < 1e-12);
        // touching edges share no pixel
        assert_eq!(iou(&bx(0, 0, 10, 10), &bx(10, 0, 20, 10)), 0.0);
    }

    #[test]
    fn mask_to_bbox_examples() {
        let m = BinaryMask::empty(8, 8, 1.0).unwrap();
        assert_eq!(mask_to_bbox(&m), None);

        let mut m = BinaryMask::empty(8, 8, 1.0).unwrap();
        m.set(3, 4, true);
        assert_eq!(mask_to_bbox(&m), Some(bx(3, 4, 4, 5)));

        let pixels = [(1u32, 1u32), (4, 2), (2, 7)];
        let mut m = BinaryMask::empty(8, 8, 1.0).unwrap();
        for &(x, y) in &pixels {
            m.set(x, y, true);
        }
        let oracle = (
            pixels.iter().map(|p| p.0).min().unwrap() as i64,
            pixels.iter().map(|p| p.1).min().unwrap() as i64,
            pixels.iter().map(|p| p.0).max().unwrap() as i64 + 1,
            pixels.iter().map(|p| p.1).max().unwrap() as i64 + 1,
        );
        assert_eq!(oracle, (1, 1, 5, 8));
        assert_eq!(mask_to_bbox(&m), Some(bx(1, 1, 5, 8)));
    }

    #[test]
    fn mask_validation() {
        assert!(BinaryMask::new(2, 2, vec![false; 3], 0.5).is_err());
        assert!(BinaryMask::new(2, 2, vec![false; 4], 1.5).is_err());
        assert!(BinaryMask::new(2, 2, vec![false; 4], -0.1).is_err());
    }

    #[test]
    fn area_ratio_examples() {
        let d = dims(512, 512);
        assert_eq!(area_ratio_percent(&bx(0, 0, 512, 512), d), 100.0);
        let r = area_ratio_percent(&bx(0, 0, 200, 200), d);
        assert!((r - 15.2588).abs() < 1e-4, "{r}");
        let r = area_ratio_percent(&bx(0, 0, 160, 160), d);
        assert!((r - 9.7656).abs() < 1e-4, "{r}");
    }

    #[test]
    fn remap_examples() {
        assert_eq!(remap_to_original(&bx(0, 0, 5, 5), (10, 20)), bx(10, 20, 15, 25));
        assert_eq!(remap_to_original(&bx(2, 3, 4, 9), (0, 0)), bx(2, 3, 4, 9));
    }

    #[test]
    fn clamp_examples() {
        let d = dims(512, 512);
        assert_eq!(clamp_bbox(&bx(-5, -5, 10, 10), d), Some(bx(0, 0, 10, 10)));
        assert_eq!(clamp_bbox(&bx(500, 500, 600, 600), d), Some(bx(500, 500, 512, 512)));
        assert_eq!(clamp_bbox(&bx(600, 600, 700, 700), d), None);
    }

    #[test]
    fn expand_examples() {
        let d = dims(512, 512);
        let b = bx(100, 100, 200, 200);
        assert_eq!(expand_bbox(&b, 0.0, d), b);
        assert_eq!(expand_bbox(&b, 0.1, d), bx(90, 90, 210, 210));
        assert_eq!(expand_bbox(&bx(0, 0, 100, 100), 0.5, d), bx(0, 0, 150, 150));
    }

    #[test]
    fn bbox_serde_is_array() {
        let b = bx(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        let back: BBox = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<BBox>("[3,2,3,4]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_box(lim: i64) -> impl Strategy<Value = BBox> {
            (0..lim, 0..lim, 1..lim, 1..lim)
                .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
        }

        proptest! {
            #[test]
            fn iou_symmetric_and_bounded(a in arb_box(100), b in arb_box(100)) {
                let ab = iou(&a, &b);
                prop_assert_eq!(ab, iou(&b, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(iou(&a, &a), 1.0);
            }

            #[test]
            fn remap_preserves_size_and_iou(a in arb_box(100), b in arb_box(100),
                                            ox in -50i64..500, oy in -50i64..500) {
                let (ra, rb) = (remap_to_original(&a, (ox, oy)), remap_to_original(&b, (ox, oy)));
                prop_assert_eq!((ra.width(), ra.height()), (a.width(), a.height()));
                prop_assert!((iou(&ra, &rb) - iou(&a, &b)).abs() < 1e-12);
            }

            #[test]
            fn clamp_is_contained(a in (-50i64..80, -50i64..80, 1i64..80, 1i64..80)
                                    .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap()),
                                  w in 1u32..64, h in 1u32..64) {
                let d = Dims::new(w, h).unwrap();
                if let Some(c) = clamp_bbox(&a, d) {
                    prop_assert!(a.contains(&c));
                    prop_assert!(c.is_within(d));
                }
            }

            #[test]
            fn mask_bbox_is_tight(pixels in proptest::collection::vec((0u32..24, 0u32..24), 1..30)) {
                let mut m = BinaryMask::empty(24, 24, 1.0).unwrap();
                for &(x, y) in &pixels {
                    m.set(x, y, true);
                }
                let b = mask_to_bbox(&m).unwrap();
                for &(x, y) in &pixels {
                    prop_assert!(b.contains_pixel(x as i64, y as i64));
                }
                // shrinking any side drops a foreground pixel
                let hits = |x0: i64, y0: i64, x1: i64, y1: i64| {
                    pixels.iter().all(|&(x, y)| {
                        let (x, y) = (x as i64, y as i64);
                        x >= x0 && x < x1 && y >= y0 && y < y1
                    })
                };
                prop_assert!(!hits(b.x_min() + 1, b.y_min(), b.x_max(), b.y_max()));
                prop_assert!(!hits(b.x_min(), b.y_min() + 1, b.x_max(), b.y_max()));
                prop_assert!(!hits(b.x_min(), b.y_min(), b.x_max() - 1, b.y_max()));
                prop_assert!(!hits(b.x_min(), b.y_min(), b.x_max(), b.y_max() - 1));
            }
        }
    }

    #[test]
    fn iou_matches_pixel_counting_small_grid() {
        // exhaustive over a coarse sub-grid; the full [0,16) sweep lives in the acceptance suite
        let coords: Vec<i64> = (0..12).step_by(3).collect();
        let mut boxes = Vec::new();
        for &x0 in &coords {
            for &y0 in &coords {
                for &x1 in coords.iter().filter(|&&v| v > x0) {
                    for &y1 in coords.iter().filter(|&&v| v > y0) {
                        boxes.push(bx(x0, y0, x1, y1));
                    }
                }
            }
        }
        for a in &boxes {
            for b in &boxes {
                assert!((iou(a, b) - iou_by_counting(a, b)).abs() < 1e-12);
            }
        }
    }
}
