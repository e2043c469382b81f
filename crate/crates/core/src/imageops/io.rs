//! 8-bit PNG codec. Intensities map to levels by round-half-up of `v * 255`
//! and back by division by 255.

use super::Image;
use crate::error::{Error, Result};
use image::{DynamicImage, ImageFormat};
use std::io::Cursor;
use std::path::Path;

pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let is_gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if is_gray {
        let buf = img.to_luma8();
        Image::new(h, w, 1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
    } else {
        let buf = img.to_rgb8();
        Image::new(h, w, 3, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    from_dynamic(image::load_from_memory_with_format(bytes, ImageFormat::Png)?)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?;
    from_dynamic(img)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("buffer sized from shape"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("buffer sized from shape"))
    };
    let mut out = Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.5 / 255.0), 2);
        assert_eq!(quantize(1.49 / 255.0), 1);
    }

    #[test]
    fn png_round_trip_preserves_levels() {
        for c in [1, 3] {
            let img = Image::from_fn(9, 12, c, |y, x, ch| ((y * 12 + x) * 7 + ch * 50) as f64 % 256.0 / 255.0).unwrap();
            let back = decode_png(&encode_png(&img).unwrap()).unwrap();
            assert_eq!(img, back);
        }
    }
}
