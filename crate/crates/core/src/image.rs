//! Image tensors and portable-anymap (PGM/PPM) reading and writing.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Config(format!(
                "invalid image geometry {height}x{width}x{channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::shape("image", &[height, width, channels], &[pixels.len()]));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
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

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Converts between grayscale and RGB (channel mean / replication).
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (3, 1) => {
                let px = self.pixels.chunks(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
                Self::new(self.height, self.width, 1, px)
            }
            (1, 3) => {
                let px = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
                Self::new(self.height, self.width, 3, px)
            }
            (_, c) => Err(Error::Config(format!("unsupported channel count {c}"))),
        }
    }

    /// Crops the largest centred square, then nearest-neighbour resizes it to `size x size`.
    pub fn center_crop_resize(&self, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("target image size must be positive".into()));
        }
        let side = self.height.min(self.width);
        let y0 = (self.height - side) / 2;
        let x0 = (self.width - side) / 2;
        let c = self.channels;
        let mut px = Vec::with_capacity(size * size * c);
        for y in 0..size {
            let sy = y0 + y * side / size;
            for x in 0..size {
                let sx = x0 + x * side / size;
                for ch in 0..c {
                    px.push(self.get(sy, sx, ch));
                }
            }
        }
        Self::new(size, size, c, px)
    }
}

/// Loads a PGM (P2/P5) or PPM (P3/P6) file.
pub fn load_netpbm(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_netpbm(&bytes)
}

/// Loads an image and normalises it to a `size x size` image with `channels` channels.
pub fn load_image(path: &Path, size: usize, channels: usize) -> Result<ImageTensor> {
    load_netpbm(path)?.center_crop_resize(size)?.with_channels(channels)
}

struct Header {
    ascii: bool,
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
}

pub fn decode_netpbm(bytes: &[u8]) -> Result<ImageTensor> {
    let magic = bytes.get(..2).unwrap_or_default();
    let (ascii, channels) = match magic {
        b"P2" => (true, 1),
        b"P5" => (false, 1),
        b"P3" => (true, 3),
        b"P6" => (false, 3),
        _ => {
            return Err(Error::Format(format!(
                "unsupported image magic {:?}; expected PGM (P2/P5) or PPM (P3/P6)",
                String::from_utf8_lossy(magic)
            )))
        }
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        *f = next_ascii_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "invalid header: {width}x{height} maxval {maxval}"
        )));
    }
    let header = Header {
        ascii,
        channels,
        width,
        height,
        maxval: maxval as u32,
    };
    let count = width * height * channels;
    let raw = if header.ascii {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            v.push(next_ascii_int(bytes, &mut pos)? as u32);
        }
        v
    } else {
        // exactly one whitespace byte separates the header from binary data
        pos += 1;
        let wide = header.maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let data = bytes
            .get(pos..pos + need)
            .ok_or_else(|| Error::Format(format!("truncated raster: need {need} bytes")))?;
        if wide {
            data.chunks(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as u32).collect()
        } else {
            data.iter().map(|&b| b as u32).collect()
        }
    };
    if let Some(v) = raw.iter().find(|&&v| v > header.maxval) {
        return Err(Error::Format(format!("sample {v} exceeds maxval {}", header.maxval)));
    }
    let scale = header.maxval as f64;
    let pixels = raw.into_iter().map(|v| v as f64 / scale).collect();
    ImageTensor::new(header.height, header.width, header.channels, pixels)
}

fn next_ascii_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::Format("unexpected end of file".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("expected integer at byte {start}")))
}

/// Encodes an image as binary 8-bit PGM/PPM.
pub fn encode_binary(image: &ImageTensor) -> Vec<u8> {
    let magic = if image.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|v| (v * 255.0).round() as u8));
    out
}

/// Encodes a grid of non-negative reals as ASCII PGM, scaled so the maximum maps to 255.
pub fn encode_grid_p2(grid: &[Vec<f64>]) -> String {
    let h = grid.len();
    let w = grid.first().map_or(0, Vec::len);
    let max = grid.iter().flatten().cloned().fold(0.0, f64::max);
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in grid {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let s = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
                (s.clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_divides_by_maxval() {
        let img = decode_netpbm(b"P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 1));
        assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn wide_binary_pgm_scales_by_65535() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0x00, 0x01, 0xff, 0xff]);
        let img = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[1.0 / 65535.0, 1.0]);
    }

    #[test]
    fn ppm_p3_and_p6() {
        let a = decode_netpbm(b"P3 1 1 15 15 0 5").unwrap();
        assert_eq!(a.channels(), 3);
        assert_eq!(a.pixels(), &[1.0, 0.0, 5.0 / 15.0]);
        let mut b = b"P6 1 1 255\n".to_vec();
        b.extend_from_slice(&[255, 0, 51]);
        assert_eq!(decode_netpbm(&b).unwrap().pixels(), &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn jpeg_is_a_format_error() {
        let err = decode_netpbm(&[0xff, 0xd8, 0xff, 0xe0, 0, 0]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Format(_)));
        assert!(msg.contains("P2") && msg.contains("P6"), "{msg}");
    }

    #[test]
    fn truncated_and_out_of_range_samples() {
        assert!(decode_netpbm(b"P5 2 2 255\n\x00\x01").is_err());
        assert!(decode_netpbm(b"P2 1 1 10 11").is_err());
        assert!(decode_netpbm(b"P2 1 1").is_err());
    }

    #[test]
    fn binary_round_trip() {
        let px: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let img = ImageTensor::new(2, 2, 3, px).unwrap();
        assert_eq!(decode_netpbm(&encode_binary(&img)).unwrap(), img);
    }

    #[test]
    fn crop_and_resize() {
        // 2x4 image: centre square is columns 1..3
        let img = ImageTensor::new(2, 4, 1, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
        let sq = img.center_crop_resize(2).unwrap();
        assert_eq!(sq.pixels(), &[0.1, 0.2, 0.5, 0.6]);
        let up = sq.center_crop_resize(4).unwrap();
        assert_eq!(up.get(0, 1, 0), 0.1);
        assert_eq!(up.get(3, 3, 0), 0.6);
    }

    #[test]
    fn channel_conversion() {
        let rgb = ImageTensor::new(1, 1, 3, vec![0.3, 0.6, 0.9]).unwrap();
        let g = rgb.with_channels(1).unwrap();
        assert!((g.pixels()[0] - 0.6).abs() < 1e-15);
        assert_eq!(g.with_channels(3).unwrap().channels(), 3);
    }

    #[test]
    fn grid_p2_scales_max_to_255() {
        let s = encode_grid_p2(&[vec![0.25, 0.5], vec![0.0, 0.25]]);
        assert_eq!(s, "P2\n2 2\n255\n128 255\n0 128\n");
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageTensor::new(1, 1, 1, vec![1.5]).is_err());
    }
}
