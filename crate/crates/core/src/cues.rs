//! Decoding red highlight boxes drawn by the image editor into [`BBox`] cues.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{clamp_bbox, BBox, BinaryMask};
use crate::imaging::ImageBuffer;

/// Thresholds for recognizing editor highlights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedCueParams {
    pub r_min: u8,
    pub g_max: u8,
    pub b_max: u8,
    pub min_component_area: usize,
    pub nesting_containment: f64,
}

impl Default for RedCueParams {
    fn default() -> Self {
        Self {
            r_min: 200,
            g_max: 80,
            b_max: 80,
            min_component_area: 25,
            nesting_containment: 0.9,
        }
    }
}

impl RedCueParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_component_area < 1 {
            return Err("min_component_area must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.nesting_containment) {
            return Err(format!(
                "nesting_containment must be in [0, 1], got {}",
                self.nesting_containment
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn is_red(&self, rgb: [u8; 3]) -> bool {
        rgb[0] >= self.r_min && rgb[1] <= self.g_max && rgb[2] <= self.b_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueSource {
    DiffusionEdit,
}

/// Boxes recovered from one edited image, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSet {
    pub boxes: Vec<BBox>,
    pub source: CueSource,
}

impl CueSet {
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixel_count: usize,
    pub bbox: BBox,
}

pub fn red_pixel_mask(img: &ImageBuffer, p: &RedCueParams) -> BinaryMask {
    let bits = img
        .pixels()
        .chunks_exact(3)
        .map(|px| p.is_red([px[0], px[1], px[2]]))
        .collect();
    BinaryMask::new(img.width(), img.height(), bits, 1.0).expect("one flag per pixel")
}

/// 8-connected components, largest first; ties broken by `(y_min, x_min)`.
pub fn connected_components(m: &BinaryMask) -> Vec<Component> {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let bits = m.bits();
    let mut seen = vec![false; bits.len()];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();

    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(Component {
            pixel_count: count,
            bbox: BBox::new(x0 as i64, y0 as i64, x1 as i64 + 1, y1 as i64 + 1)
                .expect("component has at least one pixel"),
        });
    }

    out.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.bbox.y_min().cmp(&b.bbox.y_min()))
            .then(a.bbox.x_min().cmp(&b.bbox.x_min()))
    });
    out
}

/// Red mask -> components -> size filter -> nested-box merge.
pub fn extract_cues(edited: &ImageBuffer, p: &RedCueParams) -> CueSet {
    let mask = red_pixel_mask(edited, p);
    let components: Vec<Component> = connected_components(&mask)
        .into_iter()
        .filter(|c| c.pixel_count >= p.min_component_area)
        .collect();

    // An inner box mostly contained in an outer one is a double stroke.
    let mut keep = vec![true; components.len()];
    for (i, inner) in components.iter().enumerate() {
        for (j, outer) in components.iter().enumerate() {
            if i == j || outer.bbox.area() < inner.bbox.area() {
                continue;
            }
            if outer.bbox.area() == inner.bbox.area() && j > i {
                continue;
            }
            if inner.bbox.containment_in(&outer.bbox) >= p.nesting_containment {
                keep[i] = false;
                break;
            }
        }
    }

    let dims = edited.dims();
    let mut boxes: Vec<BBox> = Vec::new();
    for (c, _) in components.iter().zip(&keep).filter(|(_, k)| **k) {
        if let Some(b) = clamp_bbox(&c.bbox, dims) {
            if !boxes.contains(&b) {
                boxes.push(b);
            }
        }
    }
    CueSet {
        boxes,
        source: CueSource::DiffusionEdit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(a: i64, b: i64, c: i64, d: i64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn canvas(w: u32, h: u32) -> ImageBuffer {
        ImageBuffer::filled(w, h, [90, 110, 95]).unwrap()
    }

    #[test]
    fn predicate_boundaries() {
        let p = RedCueParams::default();
        assert!(p.is_red([255, 0, 0]));
        assert!(p.is_red([200, 80, 80]));
        assert!(!p.is_red([199, 80, 80]));
        assert!(!p.is_red([200, 81, 80]));
        let m = red_pixel_mask(&canvas(8, 8), &p);
        assert_eq!(m.foreground_count(), 0);
    }

    #[test]
    fn components_basic() {
        let m = BinaryMask::empty(10, 10, 1.0).unwrap();
        assert!(connected_components(&m).is_empty());

        let mut m = BinaryMask::empty(10, 10, 1.0).unwrap();
        for (ox, oy) in [(0, 0), (6, 5)] {
            for y in 0..3 {
                for x in 0..3 {
                    m.set(ox + x, oy + y, true);
                }
            }
        }
        let cs = connected_components(&m);
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| c.pixel_count == 9));
        assert_eq!(cs[0].bbox, bx(0, 0, 3, 3));

        let mut m = BinaryMask::empty(4, 4, 1.0).unwrap();
        m.set(0, 0, true);
        m.set(1, 1, true);
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn recovers_single_outline() {
        let mut img = canvas(512, 512);
        img.draw_outline(&bx(100, 120, 300, 280), [255, 0, 0], 3);
        let cues = extract_cues(&img, &RedCueParams::default());
        assert_eq!(cues.boxes, vec![bx(100, 120, 300, 280)]);
    }

    #[test]
    fn no_red_means_no_cues() {
        assert!(extract_cues(&canvas(64, 64), &RedCueParams::default()).is_empty());
    }

    #[test]
    fn orders_by_pixel_count() {
        let mut img = canvas(300, 300);
        img.draw_outline(&bx(10, 10, 40, 40), [255, 0, 0], 2);
        img.draw_outline(&bx(100, 100, 250, 220), [255, 0, 0], 2);
        let cues = extract_cues(&img, &RedCueParams::default());
        assert_eq!(cues.boxes, vec![bx(100, 100, 250, 220), bx(10, 10, 40, 40)]);
    }

    #[test]
    fn double_stroke_keeps_outer() {
        let mut img = canvas(200, 200);
        img.draw_outline(&bx(20, 20, 150, 150), [255, 0, 0], 2);
        img.draw_outline(&bx(24, 24, 146, 146), [230, 30, 30], 2);
        let cues = extract_cues(&img, &RedCueParams::default());
        assert_eq!(cues.boxes, vec![bx(20, 20, 150, 150)]);
    }

    #[test]
    fn filled_region_and_small_specks() {
        let mut img = canvas(100, 100);
        img.fill_rect(&bx(30, 40, 60, 55), [250, 10, 10]);
        img.fill_rect(&bx(80, 80, 84, 84), [250, 10, 10]);
        let cues = extract_cues(&img, &RedCueParams::default());
        assert_eq!(cues.boxes, vec![bx(30, 40, 60, 55)]);
    }

    #[test]
    fn stroke_widths() {
        for stroke in [1u32, 2, 3, 5] {
            let mut img = canvas(256, 256);
            let b = bx(40, 50, 200, 170);
            img.draw_outline(&b, [255, 0, 0], stroke);
            let got = extract_cues(&img, &RedCueParams::default()).boxes;
            assert_eq!(got.len(), 1, "stroke {stroke}");
            let g = got[0].to_array();
            for (a, e) in g.iter().zip(b.to_array()) {
                assert!((a - e).abs() <= stroke as i64);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn non_red_paint_is_ignored(x in 0u32..120, y in 0u32..120, w in 1u32..40, h in 1u32..40,
                                        g in 81u8..=255) {
                let mut img = canvas(160, 160);
                img.draw_outline(&bx(20, 30, 90, 100), [255, 0, 0], 3);
                let before = extract_cues(&img, &RedCueParams::default());
                // green channel above g_max never passes the predicate
                let mut painted = img.clone();
                for yy in y..(y + h).min(160) {
                    for xx in x..(x + w).min(160) {
                        if !RedCueParams::default().is_red(painted.get(xx, yy)) {
                            painted.put(xx, yy, [255, g, 0]);
                        }
                    }
                }
                prop_assert_eq!(extract_cues(&painted, &RedCueParams::default()), before);
            }
        }
    }
}
