//! Pixel buffers, codecs, resizing and reference-based quality metrics.
//!
//! Images are stored row-major with interleaved channels. Two domains exist:
//! [`ImageU8`] holds bytes exactly as they are read from or written to disk,
//! [`ImageF32`] holds the same samples scaled into the unit interval.

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised by image construction, codecs and metrics.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot decode {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
    #[error("invalid image geometry {height}x{width}x{channels} for {len} samples")]
    Geometry {
        height: usize,
        width: usize,
        channels: usize,
        len: usize,
    },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize, usize), (usize, usize, usize)),
}

fn check_geometry(height: usize, width: usize, channels: usize, len: usize) -> Result<(), ImageError> {
    if height == 0 || width == 0 || !(channels == 1 || channels == 3) || len != height * width * channels {
        return Err(ImageError::Geometry {
            height,
            width,
            channels,
            len,
        });
    }
    Ok(())
}

/// An 8-bit image with one (gray) or three (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_geometry(height, width, channels, data.len())?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// An image where every sample has the same value.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).expect("filled image geometry")
    }

    /// Builds an image by evaluating `f(y, x, c)` for every sample.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data).expect("from_fn image geometry")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Applies `f` to every sample independently.
    pub fn map(&self, mut f: impl FnMut(u8) -> u8) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Grayscale images are replicated into three identical channels.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }
}

/// Unit-interval image; values are finite and nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF32 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageF32 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        check_geometry(height, width, channels, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::Geometry {
                height,
                width,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Decodes a PNG or JPEG file. Gray and gray-alpha sources decode to one
/// channel; everything else to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageU8, ImageError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(ImageError::NotFound(path.to_path_buf()));
    }
    let corrupt = |reason: String| ImageError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| corrupt(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| corrupt(e.to_string()))?;
    let decoded = reader.decode().map_err(|e| corrupt(e.to_string()))?;
    let gray = matches!(
        decoded.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::L16 | image::ColorType::La16
    );
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if gray {
        ImageU8::new(h, w, 1, decoded.into_luma8().into_raw())
    } else {
        ImageU8::new(h, w, 3, decoded.into_rgb8().into_raw())
    }
}

/// Encodes by file extension: `.jpg`/`.jpeg` as JPEG (quality 95), anything
/// else as PNG.
pub fn save_image(img: &ImageU8, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let jpeg = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("jpg") || e.eq_ignore_ascii_case("jpeg"))
        .unwrap_or(false);
    if jpeg {
        save_jpeg(img, path, 95)
    } else {
        write_with(path, |w| {
            let color = color_type(img);
            image::ImageEncoder::write_image(
                image::codecs::png::PngEncoder::new(w),
                img.data(),
                img.width() as u32,
                img.height() as u32,
                color,
            )
        })
    }
}

/// Writes a JPEG at the given quality (1..=100).
pub fn save_jpeg(img: &ImageU8, path: impl AsRef<Path>, quality: u8) -> Result<(), ImageError> {
    write_with(path.as_ref(), |w| {
        let color = color_type(img);
        image::ImageEncoder::write_image(
            image::codecs::jpeg::JpegEncoder::new_with_quality(w, quality),
            img.data(),
            img.width() as u32,
            img.height() as u32,
            color,
        )
    })
}

fn color_type(img: &ImageU8) -> image::ExtendedColorType {
    if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    }
}

fn write_with(
    path: &Path,
    encode: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> image::ImageResult<()>,
) -> Result<(), ImageError> {
    let err = |reason: String| ImageError::Write {
        path: path.to_path_buf(),
        reason,
    };
    let file = std::fs::File::create(path).map_err(|e| err(e.to_string()))?;
    let mut writer = std::io::BufWriter::new(file);
    encode(&mut writer).map_err(|e| err(e.to_string()))?;
    std::io::Write::flush(&mut writer).map_err(|e| err(e.to_string()))
}

/// Scales bytes into the unit interval (`byte / 255`).
pub fn to_unit(img: &ImageU8) -> ImageF32 {
    ImageF32 {
        height: img.height,
        width: img.width,
        channels: img.channels,
        data: img.data.iter().map(|&v| v as f32 / 255.0).collect(),
    }
}

/// Clamps to `[0, 1]`, scales by 255 and rounds half away from zero.
#[inline]
pub fn unit_to_byte(v: f64) -> u8 {
    // NaN clamps to 0 through the comparison chain.
    let v = if v > 1.0 {
        1.0
    } else if v >= 0.0 {
        v
    } else {
        0.0
    };
    (v * 255.0).round() as u8
}

pub fn from_unit(img: &ImageF32) -> ImageU8 {
    ImageU8 {
        height: img.height,
        width: img.width,
        channels: img.channels,
        data: img.data.iter().map(|&v| unit_to_byte(v as f64)).collect(),
    }
}

/// Center-aligned bilinear resampling with edge clamping.
pub fn resize_bilinear(img: &ImageU8, out_h: usize, out_w: usize) -> ImageU8 {
    assert!(out_h >= 1 && out_w >= 1, "resize target must be non-empty");
    if (out_h, out_w) == (img.height, img.width) {
        return img.clone();
    }
    let c = img.channels;
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f32 / out as f32;
        (0..out)
            .map(|i| {
                let pos = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f32);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f32)
            })
            .collect()
    };
    let ys = axis(out_h, img.height);
    let xs = axis(out_w, img.width);
    let mut data = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p = |y: usize, x: usize| img.get(y, x, ch) as f32;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageU8 {
        height: out_h,
        width: out_w,
        channels: c,
        data,
    }
}

fn same_dims(a: &ImageU8, b: &ImageU8) -> Result<(), ImageError> {
    if a.dims() != b.dims() {
        return Err(ImageError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Mean squared byte difference over every sample.
pub fn mse(a: &ImageU8, b: &ImageU8) -> Result<f64, ImageError> {
    same_dims(a, b)?;
    let sum: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB with a fixed peak of 255. Identical
/// images give `f64::INFINITY`.
pub fn psnr(a: &ImageU8, b: &ImageU8) -> Result<f64, ImageError> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Serde helper that writes non-finite PSNR values as the string `"inf"`.
pub mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value {t:?}"))),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}
