//! Binary PGM (`P5`) and PPM (`P6`) images with maxval 255.

use super::DataError;
use crate::tensor::Tensor;

/// Decoded 8-bit image, interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, DataError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(magic) if magic[0] == b'P' => {
            return Err(DataError::UnsupportedFormat(format!(
                "netpbm variant {}",
                String::from_utf8_lossy(magic)
            )))
        }
        _ => return Err(DataError::UnsupportedFormat("not a netpbm file".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(DataError::CorruptHeader("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::CorruptHeader(format!(
                "expected a number at byte {start}"
            )));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DataError::CorruptHeader("header number out of range".into()))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(DataError::CorruptHeader("missing raster separator".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(DataError::CorruptHeader("zero image dimension".into()));
    }
    if maxval != 255 {
        return Err(DataError::UnsupportedFormat(format!("maxval {maxval} (only 255)")));
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: pos,
    })
}

pub fn decode(bytes: &[u8]) -> Result<RawImage, DataError> {
    let header = parse_header(bytes)?;
    let len = header.channels * header.width * header.height;
    let raster = &bytes[header.data_start..];
    if raster.len() < len {
        return Err(DataError::TruncatedData {
            expected: len,
            found: raster.len(),
        });
    }
    Ok(RawImage {
        channels: header.channels,
        width: header.width,
        height: header.height,
        pixels: raster[..len].to_vec(),
    })
}

pub fn encode(image: &RawImage) -> Vec<u8> {
    let magic = if image.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

impl RawImage {
    /// `[C, H, W]` tensor scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut data = vec![0.0; c * h * w];
        for (i, &p) in self.pixels.iter().enumerate() {
            let (pixel, ch) = (i / c, i % c);
            data[ch * h * w + pixel] = f64::from(p) / 255.0;
        }
        Tensor::from_vec(&[c, h, w], data).expect("image dimensions are non-zero")
    }
}

/// Resizes each channel of a `[C, H, W]` tensor.
///
/// Integer shrink factors on both axes use block means; anything else uses
/// bilinear interpolation with half-pixel centers.
pub fn resize(image: &Tensor, target_h: usize, target_w: usize) -> Tensor {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let x = image.data();
    let mut out = Vec::with_capacity(c * target_h * target_w);
    if h % target_h == 0 && w % target_w == 0 {
        let (fy, fx) = (h / target_h, w / target_w);
        let area = (fy * fx) as f64;
        for ch in 0..c {
            let plane = &x[ch * h * w..(ch + 1) * h * w];
            for i in 0..target_h {
                for j in 0..target_w {
                    let mut sum = 0.0;
                    for u in 0..fy {
                        let row = (i * fy + u) * w + j * fx;
                        sum += plane[row..row + fx].iter().sum::<f64>();
                    }
                    out.push(sum / area);
                }
            }
        }
    } else {
        let sample = |pos: f64, len: usize| -> (usize, usize, f64) {
            let p = pos.clamp(0.0, (len - 1) as f64);
            let lo = p.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (lo, hi, p - lo as f64)
        };
        let (sy, sx) = (h as f64 / target_h as f64, w as f64 / target_w as f64);
        for ch in 0..c {
            let plane = &x[ch * h * w..(ch + 1) * h * w];
            for i in 0..target_h {
                let (y0, y1, ty) = sample((i as f64 + 0.5) * sy - 0.5, h);
                for j in 0..target_w {
                    let (x0, x1, tx) = sample((j as f64 + 0.5) * sx - 0.5, w);
                    let top = plane[y0 * w + x0] * (1.0 - tx) + plane[y0 * w + x1] * tx;
                    let bottom = plane[y1 * w + x0] * (1.0 - tx) + plane[y1 * w + x1] * tx;
                    out.push(top * (1.0 - ty) + bottom * ty);
                }
            }
        }
    }
    Tensor::from_vec(&[c, target_h, target_w], out).expect("target size is non-zero")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: usize, height: usize, pixels: Vec<u8>) -> RawImage {
        RawImage {
            channels: 1,
            width,
            height,
            pixels,
        }
    }

    #[test]
    fn decodes_small_pgm() {
        let img = decode(b"P5\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(img, gray(2, 2, vec![0, 255, 255, 0]));
        assert_eq!(img.to_tensor().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let img = decode(b"P5 # comment\n 3\t1 # w h\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.pixels, vec![1, 2, 3]);
    }

    #[test]
    fn ppm_channels_are_planar_in_tensor() {
        let img = decode(b"P6\n2 1\n255\n\x00\x33\x66\xff\xcc\x99").unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.get(&[0, 0, 1]), 1.0);
        assert_eq!(t.get(&[2, 0, 0]), 0x66 as f64 / 255.0);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(decode(b"P2\n1 1\n255\n0"), Err(DataError::UnsupportedFormat(_))));
        assert!(matches!(decode(b"\x89PNG"), Err(DataError::UnsupportedFormat(_))));
        assert!(matches!(decode(b"P5\n2 x\n255\n"), Err(DataError::CorruptHeader(_))));
        assert!(matches!(decode(b"P5\n2 2"), Err(DataError::CorruptHeader(_))));
        assert!(matches!(decode(b"P5\n2 2\n65535\n"), Err(DataError::UnsupportedFormat(_))));
        assert!(matches!(
            decode(b"P5\n2 2\n255\n\x00\x00"),
            Err(DataError::TruncatedData { expected: 4, found: 2 })
        ));
    }

    #[test]
    fn encode_round_trips() {
        let img = gray(3, 2, vec![0, 10, 20, 30, 40, 255]);
        assert_eq!(decode(&encode(&img)).unwrap(), img);
        let rgb = RawImage { channels: 3, width: 1, height: 1, pixels: vec![1, 2, 3] };
        assert_eq!(decode(&encode(&rgb)).unwrap(), rgb);
    }

    #[test]
    fn resize_keeps_constants() {
        let t = Tensor::new(&[1, 4, 4], 0.4).unwrap();
        for (h, w) in [(2, 2), (3, 3), (4, 4), (5, 7)] {
            let r = resize(&t, h, w);
            assert_eq!(r.shape(), &[1, h, w]);
            assert!(r.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
        }
    }

    #[test]
    fn ramp_downsample_matches_block_means() {
        let t = Tensor::from_fn(&[1, 8, 8], |ix| (ix[1] * 8 + ix[2]) as f64 / 63.0).unwrap();
        let r = resize(&t, 4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let mean = (0..2)
                    .flat_map(|u| (0..2).map(move |v| (u, v)))
                    .map(|(u, v)| t.get(&[0, 2 * i + u, 2 * j + v]))
                    .sum::<f64>()
                    / 4.0;
                assert!((r.get(&[0, i, j]) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bilinear_upsample_stays_in_range() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = resize(&t, 3, 5);
        assert!(r.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(r.get(&[0, 0, 0]), 0.0);
    }
}
