//! File boundary: 8-bit PNG, lossless planar f32 rasters, atomic writes.
//!
//! Raw f32 layout (little endian): the 8-byte magic `LSD2F32\n`, then
//! `u32` width, `u32` height, `u32` channel count, then the channel planes
//! one after another, each row-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{imageops, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

pub const RAW_MAGIC: &[u8; 8] = b"LSD2F32\n";
pub const RAW_EXT: &str = "f32";

const IMAGE_EXTS: &[&str] = &["png", "jpg", "jpeg", RAW_EXT];

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no file name", path.display())))?;
    let tmp: PathBuf = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

/// Single-channel PNG of `values` in `[0, 1]`.
pub fn encode_gray_png(values: &[f32], width: usize, height: usize) -> Vec<u8> {
    let bytes: Vec<u8> = values.iter().map(|&v| to_u8(v)).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, bytes).expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + img.data().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    for v in [img.width(), img.height(), CHANNELS] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for c in 0..CHANNELS {
        for px in img.data().chunks_exact(CHANNELS) {
            out.extend_from_slice(&px[c].to_le_bytes());
        }
    }
    out
}

pub fn decode_raw(bytes: &[u8], path: &Path) -> Result<Image> {
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    if bytes.len() < 20 || &bytes[..8] != RAW_MAGIC {
        return Err(bad("not a raw f32 image"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (w, h, c) = (word(0), word(1), word(2));
    if c != CHANNELS {
        return Err(bad("raw image must have 3 channels"));
    }
    let n = w * h;
    if bytes.len() != 20 + n * c * 4 {
        return Err(bad("raw image size does not match its header"));
    }
    let body = &bytes[20..];
    let mut data = vec![0f32; n * c];
    for ch in 0..c {
        for i in 0..n {
            let o = (ch * n + i) * 4;
            data[i * c + ch] = f32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        }
    }
    Image::new(w, h, data)
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == RAW_EXT)
}

/// Loads a PNG/JPEG (values scaled to `[0, 1]`, gamma untouched) or a raw
/// f32 raster.
pub fn read_image(path: &Path) -> Result<Image> {
    if is_raw(path) {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        return decode_raw(&bytes, path);
    }
    let decoded = image::open(path).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Image::new(w as usize, h as usize, data)
}

/// Writes by extension: `.f32` raw, anything else 8-bit PNG.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    if is_raw(path) {
        write_atomic(path, &encode_raw(img))
    } else {
        write_atomic(path, &encode_png(img))
    }
}

/// Sorted names of the image files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let known = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()));
        if known && path.is_file() && !name.starts_with('.') {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Center-crops `img` to the aspect ratio of `width`x`height`, then resamples
/// to exactly that size (triangle filter).
pub fn fit_image(img: &Image, width: usize, height: usize) -> Result<Image> {
    if img.dims() == (width, height) {
        return Ok(img.clone());
    }
    let (sw, sh) = img.dims();
    let target_aspect = width as f64 / height as f64;
    let (cw, ch) = if sw as f64 / sh as f64 > target_aspect {
        (((sh as f64 * target_aspect).round() as usize).clamp(1, sw), sh)
    } else {
        (sw, ((sw as f64 / target_aspect).round() as usize).clamp(1, sh))
    };
    let cropped = img.crop((sw - cw) / 2, (sh - ch) / 2, cw, ch)?;
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_raw(cw as u32, ch as u32, cropped.into_data()).expect("buffer matches");
    let resized = imageops::resize(&buf, width as u32, height as u32, imageops::FilterType::Triangle);
    let data = resized.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Image::new(width, height, data)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, format!("{text}\n").as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        Image::from_fn(7, 5, |x, y, c| (x * 13 + y * 7 + c * 3) as f32 / 120.0)
    }

    #[test]
    fn raw_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f32");
        let img = sample().map(|v, _| v * 1.7 + 1e-7);
        write_image(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
        let bytes = fs::read(&p).unwrap();
        assert!(decode_raw(&bytes[..bytes.len() - 1], &p).is_err());
    }

    #[test]
    fn png_quantizes_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = sample();
        write_image(&p, &img).unwrap();
        let back = read_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6, "{a} {b}");
        }
        // already quantized values survive exactly
        write_image(&p, &back).unwrap();
        assert_eq!(read_image(&p).unwrap(), back);
    }

    #[test]
    fn listing_skips_other_files() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.png", "a.f32", "notes.txt", ".hidden.png"] {
            fs::write(dir.path().join(n), b"x").unwrap();
        }
        assert_eq!(list_images(dir.path()).unwrap(), vec!["a.f32", "b.png"]);
    }

    #[test]
    fn fit_crops_to_aspect() {
        let img = Image::from_fn(40, 20, |x, _, _| if x < 10 || x >= 30 { 1.0 } else { 0.25 });
        let out = fit_image(&img, 10, 10).unwrap();
        assert_eq!(out.dims(), (10, 10));
        // the bright side bands are cropped away
        assert!(out.max_value() < 0.3);
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, &vec![1, 2, 3]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        let v: Vec<i32> = read_json(&p).unwrap();
        assert_eq!(v, vec![1, 2, 3]);
    }
}
