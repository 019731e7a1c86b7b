//! Normalized image tensors and PNG I/O.
//!
//! Pixels are stored row-major with interleaved channels:
//! `values[(y * width + x) * channels + c]`, each in `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, PixelRegion};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
}

impl ImageTensor {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "image dimensions {width}x{height}x{channels} must be positive"
            )));
        }
        if values.len() != width * height * channels {
            return Err(Error::shape(
                format!("{} values", width * height * channels),
                format!("{} values", values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(values.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub(crate) fn check_same_dims(&self, other: &ImageTensor) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                format!("{:?}", self.dims()),
                format!("{:?}", other.dims()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_mask(&self, mask: &BinaryMask) -> Result<()> {
        if (mask.width(), mask.height()) != (self.width, self.height) {
            return Err(Error::shape(
                format!("{}x{} mask", self.width, self.height),
                format!("{}x{} mask", mask.width(), mask.height()),
            ));
        }
        Ok(())
    }

    /// Copy of a rectangular sub-image.
    pub fn crop(&self, region: &PixelRegion) -> Result<ImageTensor> {
        if region.is_empty() || region.x1 > self.width || region.y1 > self.height {
            return Err(Error::invalid(format!(
                "crop {region:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut values = Vec::with_capacity(region.area() * c);
        for y in region.y0..region.y1 {
            let row = (y * self.width + region.x0) * c;
            values.extend_from_slice(&self.values[row..row + region.width() * c]);
        }
        Ok(Self::from_raw_unchecked(
            region.width(),
            region.height(),
            c,
            values,
        ))
    }

    /// Reads an 8- or 16-bit PNG, mapping intensities linearly to `[0, 1]`.
    /// Palette images are expanded; alpha channels are dropped.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let png_err = |e: png::DecodingError| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND);
        let mut reader = decoder.read_info().map_err(png_err)?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::Png {
            path: path.to_path_buf(),
            message: "image too large".into(),
        })?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        buf.truncate(info.buffer_size());

        let (stored, keep) = match info.color_type {
            png::ColorType::Grayscale => (1, 1),
            png::ColorType::GrayscaleAlpha => (2, 1),
            png::ColorType::Rgb => (3, 3),
            png::ColorType::Rgba => (4, 3),
            png::ColorType::Indexed => {
                return Err(Error::Png {
                    path: path.to_path_buf(),
                    message: "palette image was not expanded".into(),
                })
            }
        };
        let samples: Vec<f32> = match info.bit_depth {
            png::BitDepth::Sixteen => buf
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
                .collect(),
            png::BitDepth::Eight => buf.iter().map(|&b| b as f32 / 255.0).collect(),
            other => {
                return Err(Error::Png {
                    path: path.to_path_buf(),
                    message: format!("unsupported bit depth {other:?}"),
                })
            }
        };
        let (width, height) = (info.width as usize, info.height as usize);
        let values = if stored == keep {
            samples
        } else {
            samples
                .chunks_exact(stored)
                .flat_map(|px| px[..keep].iter().copied())
                .collect()
        };
        Self::new(width, height, keep, values)
    }

    /// Reads only the PNG header: `(width, height, channels)` after alpha is dropped.
    pub fn probe_png(path: impl AsRef<Path>) -> Result<(usize, usize, usize)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let reader = decoder.read_info().map_err(|e| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let info = reader.info();
        let channels = match info.color_type {
            png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
            _ => 3,
        };
        Ok((info.width as usize, info.height as usize, channels))
    }

    /// Quantizes to 8 or 16 bits (round to nearest) and writes a PNG.
    pub fn save_png(&self, path: impl AsRef<Path>, sixteen_bit: bool) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png(sixteen_bit).map_err(|message| Error::Png {
            path: path.to_path_buf(),
            message,
        })?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// PNG encoding of the image as bytes.
    pub fn encode_png(&self, sixteen_bit: bool) -> std::result::Result<Vec<u8>, String> {
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            c => return Err(format!("cannot encode {c}-channel image")),
        };
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(
                BufWriter::new(&mut out),
                self.width as u32,
                self.height as u32,
            );
            encoder.set_color(color);
            let data: Vec<u8> = if sixteen_bit {
                encoder.set_depth(png::BitDepth::Sixteen);
                self.values
                    .iter()
                    .flat_map(|&v| ((v * 65535.0).round() as u16).to_be_bytes())
                    .collect()
            } else {
                encoder.set_depth(png::BitDepth::Eight);
                self.values
                    .iter()
                    .map(|&v| (v * 255.0).round() as u8)
                    .collect()
            };
            let mut writer = encoder.write_header().map_err(|e| e.to_string())?;
            writer.write_image_data(&data).map_err(|e| e.to_string())?;
            writer.finish().map_err(|e| e.to_string())?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(ImageTensor::new(0, 2, 1, vec![]).is_err());
        assert!(ImageTensor::new(2, 1, 3, vec![0.25; 6]).is_ok());
    }

    #[test]
    fn crop_copies_rows() {
        let values: Vec<f32> = (0..12).map(|v| v as f32 / 12.0).collect();
        let img = ImageTensor::new(4, 3, 1, values).unwrap();
        let c = img
            .crop(&PixelRegion {
                x0: 1,
                y0: 1,
                x1: 3,
                y1: 3,
            })
            .unwrap();
        assert_eq!(c.dims(), (2, 2, 1));
        assert_eq!(
            c.values(),
            &[5.0 / 12.0, 6.0 / 12.0, 9.0 / 12.0, 10.0 / 12.0]
        );
    }

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..5 * 3 * 3).map(|i| (i % 256) as f32 / 255.0).collect();
        let img = ImageTensor::new(5, 3, 3, values).unwrap();
        let p8 = dir.path().join("a.png");
        img.save_png(&p8, false).unwrap();
        assert_eq!(ImageTensor::load_png(&p8).unwrap(), img);
        assert_eq!(ImageTensor::probe_png(&p8).unwrap(), (5, 3, 3));

        let gray = ImageTensor::new(3, 2, 1, vec![0.0, 1.0, 0.5, 0.25, 0.125, 0.75]).unwrap();
        let p16 = dir.path().join("b.png");
        gray.save_png(&p16, true).unwrap();
        let back = ImageTensor::load_png(&p16).unwrap();
        for (a, b) in back.values().iter().zip(gray.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn missing_png_is_io_error() {
        let e = ImageTensor::load_png("/nonexistent/x.png").unwrap_err();
        assert_eq!(e.kind(), "io");
    }
}
