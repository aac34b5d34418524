//! PNG output: 8-bit grayscale for masks, 8-bit RGB for shaded images.

use image::{GrayImage, ImageReader, RgbImage};
use std::path::Path;

fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_mask_png(path: impl AsRef<Path>, mask: &[f64], w: usize, h: usize) -> std::io::Result<()> {
    let mut img = GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(x as u32, y as u32, image::Luma([quantize(mask[y * w + x])]));
        }
    }
    img.save(path).map_err(std::io::Error::other)
}

pub fn load_mask_png(path: impl AsRef<Path>) -> std::io::Result<(Vec<f64>, usize, usize)> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(std::io::Error::other)?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    Ok((data, w, h))
}

/// `rgb` is pixel-major with 3 channels in [0,1].
pub fn save_rgb_png(path: impl AsRef<Path>, rgb: &[f64], w: usize, h: usize) -> std::io::Result<()> {
    assert_eq!(rgb.len(), w * h * 3);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * 3;
            img.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([quantize(rgb[i]), quantize(rgb[i + 1]), quantize(rgb[i + 2])]),
            );
        }
    }
    img.save(path).map_err(std::io::Error::other)
}

pub fn load_rgb_png(path: impl AsRef<Path>) -> std::io::Result<(Vec<f64>, usize, usize)> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(std::io::Error::other)?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for p in img.pixels() {
        data.push(p.0[0] as f64 / 255.0);
        data.push(p.0[1] as f64 / 255.0);
        data.push(p.0[2] as f64 / 255.0);
    }
    Ok((data, w, h))
}
