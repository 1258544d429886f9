//! sRGB <-> CIELAB under the D65 white point.

use super::ImageBuffer;
use crate::error::ImagingError;

// D65 reference white, Y normalized to 1.
const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Per-pixel CIELAB planes, same dimensions as the source raster.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    l: Vec<f32>,
    a: Vec<f32>,
    b: Vec<f32>,
}

impl LabImage {
    /// Builds an image from planes; L must lie in `[0, 100]`.
    pub fn new(width: u32, height: u32, l: Vec<f32>, a: Vec<f32>, b: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Param("LabImage dimensions must be positive".into()));
        }
        let expected = width as usize * height as usize;
        for plane in [&l, &a, &b] {
            if plane.len() != expected {
                return Err(ImagingError::BufferLength {
                    expected,
                    actual: plane.len(),
                });
            }
        }
        if let Some(v) = l.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(ImagingError::Param(format!("L value {v} outside [0, 100]")));
        }
        Ok(Self::from_planes(width, height, l, a, b))
    }

    pub(crate) fn from_planes(width: u32, height: u32, l: Vec<f32>, a: Vec<f32>, b: Vec<f32>) -> Self {
        debug_assert_eq!(l.len(), width as usize * height as usize);
        debug_assert!(l.len() == a.len() && a.len() == b.len());
        Self {
            width,
            height,
            l,
            a,
            b,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn l(&self) -> &[f32] {
        &self.l
    }
    pub fn a(&self) -> &[f32] {
        &self.a
    }
    pub fn b(&self) -> &[f32] {
        &self.b
    }

    /// Replaces the luminance plane, keeping chroma untouched.
    pub fn with_l(&self, l: Vec<f32>) -> LabImage {
        assert_eq!(l.len(), self.l.len());
        LabImage {
            width: self.width,
            height: self.height,
            l,
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        let i = y as usize * self.width as usize + x as usize;
        [self.l[i], self.a[i], self.b[i]]
    }
}

fn decode_channel(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn encode_channel(v: f64) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let s = if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

fn f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn f_inv(t: f64) -> f64 {
    let t3 = t * t * t;
    if t3 > EPSILON {
        t3
    } else {
        (116.0 * t - 16.0) / KAPPA
    }
}

/// Converts one sRGB pixel to `[L, a, b]`.
pub fn pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let r = decode_channel(rgb[0]);
    let g = decode_channel(rgb[1]);
    let b = decode_channel(rgb[2]);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (f(x / WHITE_X), f(y / WHITE_Y), f(z / WHITE_Z));
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_to_pixel(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let x = WHITE_X * f_inv(fx);
    let y = WHITE_Y * if lab[0] > KAPPA * EPSILON {
        fy * fy * fy
    } else {
        lab[0] / KAPPA
    };
    let z = WHITE_Z * f_inv(fz);
    let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
    let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
    let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;
    [encode_channel(r), encode_channel(g), encode_channel(b)]
}

pub fn srgb_to_lab(img: &ImageBuffer) -> LabImage {
    let n = img.width() as usize * img.height() as usize;
    let (mut l, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.pixels().chunks_exact(3) {
        let lab = pixel_to_lab([px[0], px[1], px[2]]);
        l.push(lab[0] as f32);
        a.push(lab[1] as f32);
        b.push(lab[2] as f32);
    }
    LabImage::from_planes(img.width(), img.height(), l, a, b)
}

/// Inverse conversion; out-of-gamut values are clamped per channel.
pub fn lab_to_srgb(lab: &LabImage) -> ImageBuffer {
    let mut pixels = Vec::with_capacity(lab.l.len() * 3);
    for i in 0..lab.l.len() {
        let px = lab_to_pixel([lab.l[i] as f64, lab.a[i] as f64, lab.b[i] as f64]);
        pixels.extend_from_slice(&px);
    }
    ImageBuffer::new(lab.width, lab.height, pixels).expect("dimensions carried from a valid LabImage")
}
