//! Raster helpers shared by the detector, the embedder backends and the
//! frame-upload path.

use image::{ImageFormat, ImageReader, Limits};
pub use image::{Rgb, RgbImage};
use std::io::Cursor;
use thiserror::Error;

/// Upper bound on an uploaded frame, in bytes.
pub const MAX_FRAME_BYTES: usize = 8 * 1024 * 1024;
/// Upper bound on either side of a decoded frame.
pub const MAX_FRAME_SIDE: u32 = 8192;

#[derive(Debug, Error)]
pub enum ImageDecodeError {
    #[error("payload is empty")]
    Empty,
    #[error("payload of {0} bytes exceeds the {MAX_FRAME_BYTES} byte limit")]
    TooLarge(usize),
    #[error("unsupported image format (expected JPEG or PNG)")]
    UnsupportedFormat,
    #[error("zero-area image")]
    ZeroArea,
    #[error("could not decode image: {0}")]
    Decode(String),
}

/// Decode an untrusted JPEG or PNG payload into an RGB raster.
pub fn decode_frame(bytes: &[u8]) -> Result<RgbImage, ImageDecodeError> {
    if bytes.is_empty() {
        return Err(ImageDecodeError::Empty);
    }
    if bytes.len() > MAX_FRAME_BYTES {
        return Err(ImageDecodeError::TooLarge(bytes.len()));
    }
    let format = image::guess_format(bytes).map_err(|_| ImageDecodeError::UnsupportedFormat)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(ImageDecodeError::UnsupportedFormat);
    }
    let mut reader = ImageReader::with_format(Cursor::new(bytes), format);
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_FRAME_SIDE);
    limits.max_image_height = Some(MAX_FRAME_SIDE);
    limits.max_alloc = Some(256 * 1024 * 1024);
    reader.limits(limits);
    let img = reader.decode().map_err(|e| ImageDecodeError::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageDecodeError::ZeroArea);
    }
    Ok(img.to_rgb8())
}

/// Encode a raster as PNG bytes.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

/// Bilinear resize with pixel-center alignment. Same-size resizes are exact copies.
pub fn resize_bilinear(src: &RgbImage, width: u32, height: u32) -> RgbImage {
    assert!(width > 0 && height > 0, "resize target must be non-empty");
    let (sw, sh) = src.dimensions();
    if (sw, sh) == (width, height) {
        return src.clone();
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let mut out = RgbImage::new(width, height);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let p00 = src.get_pixel(x0, y0).0;
            let p10 = src.get_pixel(x1, y0).0;
            let p01 = src.get_pixel(x0, y1).0;
            let p11 = src.get_pixel(x1, y1).0;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - wx) + p10[c] as f64 * wx;
                let bottom = p01[c] as f64 * (1.0 - wx) + p11[c] as f64 * wx;
                let v = top * (1.0 - wy) + bottom * wy;
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x, y, Rgb(px));
        }
    }
    out
}

/// ITU-R BT.601 luma of an 8-bit RGB pixel, in `[0, 255]`.
pub fn luma(px: [u8; 3]) -> f64 {
    (299.0 * px[0] as f64 + 587.0 * px[1] as f64 + 114.0 * px[2] as f64) / 1000.0
}

/// Downscale a square RGB buffer to `out_side`² grayscale cells by exact area
/// averaging (fractional pixel coverage is weighted). Output is row-major, in `[0, 255]`.
pub fn area_average_gray(pixels: &[u8], side: u32, out_side: u32) -> Vec<f64> {
    let side_us = side as usize;
    assert_eq!(pixels.len(), side_us * side_us * 3, "buffer does not match side");
    let gray: Vec<f64> = pixels.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    let cell = side as f64 / out_side as f64;
    let mut out = Vec::with_capacity((out_side * out_side) as usize);
    for oy in 0..out_side {
        let y_start = oy as f64 * cell;
        let y_end = y_start + cell;
        for ox in 0..out_side {
            let x_start = ox as f64 * cell;
            let x_end = x_start + cell;
            let mut acc = 0.0;
            let mut area = 0.0;
            let mut y = y_start.floor() as usize;
            while (y as f64) < y_end && y < side_us {
                let wy = (y_end.min(y as f64 + 1.0) - y_start.max(y as f64)).max(0.0);
                let mut x = x_start.floor() as usize;
                while (x as f64) < x_end && x < side_us {
                    let wx = (x_end.min(x as f64 + 1.0) - x_start.max(x as f64)).max(0.0);
                    let w = wx * wy;
                    acc += gray[y * side_us + x] * w;
                    area += w;
                    x += 1;
                }
                y += 1;
            }
            out.push(if area > 0.0 { acc / area } else { 0.0 });
        }
    }
    out
}
