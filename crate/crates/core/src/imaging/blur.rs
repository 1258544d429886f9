use super::ImageBuffer;
use crate::error::ImagingError;

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn blur_planes(img: &ImageBuffer, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.pixels();

    let mut horiz = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - radius).clamp(0, w - 1);
                    acc += weight * src[((y * w + sx) * 3 + c) as usize] as f64;
                }
                horiz[((y * w + x) * 3 + c) as usize] = acc;
            }
        }
    }

    let mut out = vec![0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sy = (y + k as i64 - radius).clamp(0, h - 1);
                    acc += weight * horiz[((sy * w + x) * 3 + c) as usize];
                }
                out[((y * w + x) * 3 + c) as usize] = acc;
            }
        }
    }
    out
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer, ImagingError> {
    if !(sigma > 0.0) {
        return Err(ImagingError::Param(format!("sigma must be > 0, got {sigma}")));
    }
    let pixels = blur_planes(img, sigma)
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::new(img.width(), img.height(), pixels)
}

/// `out = clamp(in + amount * (in - blur(in)))`, per channel.
pub fn unsharp_mask(img: &ImageBuffer, sigma: f64, amount: f64) -> Result<ImageBuffer, ImagingError> {
    if !(amount >= 0.0) {
        return Err(ImagingError::Param(format!("amount must be >= 0, got {amount}")));
    }
    let blurred = gaussian_blur(img, sigma)?;
    if amount == 0.0 {
        return Ok(img.clone());
    }
    let pixels = img
        .pixels()
        .iter()
        .zip(blurred.pixels())
        .map(|(&v, &b)| {
            let detail = v as f64 - b as f64;
            (v as f64 + amount * detail).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageBuffer::new(img.width(), img.height(), pixels)
}
