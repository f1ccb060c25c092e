//! Log-magnitude grayscale images of a distribution.
//!
//! Pixel value: `p = clamp(20 log10(|W| / max|W|), -dr, 0)`, gray =
//! `round((p + dr) / dr * 255)`. Frequency increases upward, time to the
//! right, so row 0 of the image is the highest frequency bin.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::tfcore::TfMatrix;
use crate::{Error, Result};

pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = 20.0;

/// Row-major 8-bit image, `n x n`.
pub fn render_gray(tfd: &TfMatrix, dynamic_range_db: f64) -> Result<Vec<u8>> {
    if !(dynamic_range_db.is_finite() && dynamic_range_db > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dynamic range must be positive, got {dynamic_range_db}"
        )));
    }
    let n = tfd.n();
    let peak = tfd.max_abs();
    if peak == 0.0 {
        log::warn!("rendering an all-zero distribution; image is black");
        return Ok(vec![0; n * n]);
    }
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        let m = n - 1 - row;
        for t in 0..n {
            let mag = tfd.get(m, t).abs() / peak;
            let p = if mag > 0.0 {
                (20.0 * mag.log10()).clamp(-dynamic_range_db, 0.0)
            } else {
                -dynamic_range_db
            };
            out.push(((p + dynamic_range_db) / dynamic_range_db * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm(tfd: &TfMatrix, path: &Path, dynamic_range_db: f64) -> Result<()> {
    let pixels = render_gray(tfd, dynamic_range_db)?;
    let n = tfd.n();
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    bytes.extend_from_slice(&pixels);
    crate::io::write_bytes(path, &bytes)
}

pub fn write_png(tfd: &TfMatrix, path: &Path, dynamic_range_db: f64) -> Result<()> {
    let pixels = render_gray(tfd, dynamic_range_db)?;
    let n = tfd.n() as u32;
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), n, n);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_is_single_white_pixel() {
        let mut w = TfMatrix::zeros(8);
        w.set(2, 5, 3.0);
        let img = render_gray(&w, 20.0).unwrap();
        // m = 2 sits on row 8 - 1 - 2
        assert_eq!(img[5 * 8 + 5], 255);
        assert_eq!(img.iter().filter(|&&p| p != 0).count(), 1);
    }

    #[test]
    fn clamp_arithmetic() {
        let mut w = TfMatrix::zeros(4);
        w.set(0, 0, 1.0);
        w.set(0, 1, 0.1);
        w.set(0, 2, 0.01);
        w.set(0, 3, -0.316_227_766_016_837_94);
        let img = render_gray(&w, 20.0).unwrap();
        let bottom = &img[12..16];
        assert_eq!(bottom, &[255, 0, 0, 128]);
    }

    #[test]
    fn zero_matrix_is_black() {
        let img = render_gray(&TfMatrix::zeros(4), 20.0).unwrap();
        assert!(img.iter().all(|&p| p == 0));
    }
}
