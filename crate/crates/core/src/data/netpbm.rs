//! Binary PPM (P6) images and PGM (P5) label maps, 8 bits per sample.

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::{Dims, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    /// Offset of the first raster byte.
    data_start: usize,
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(pos) {
                    pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            _ => return pos,
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let pos = skip_ws_and_comments(bytes, pos);
    let end = bytes[pos..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |e| pos + e);
    if end == pos {
        return Err(Error::codec(pos, format!("expected {what}")));
    }
    let v = std::str::from_utf8(&bytes[pos..end])
        .expect("ascii digits")
        .parse::<usize>()
        .map_err(|_| Error::codec(pos, format!("{what} out of range")))?;
    Ok((v, end))
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::codec(
            0,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::codec(pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::codec(pos, format!("unsupported maxval {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::codec(pos, "expected single whitespace after maxval")),
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

fn raster<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h.width * h.height * channels;
    let have = bytes.len() - h.data_start;
    if have < need {
        return Err(Error::codec(
            bytes.len(),
            format!("truncated raster: need {need} bytes, found {have}"),
        ));
    }
    Ok(&bytes[h.data_start..h.data_start + need])
}

/// Encodes a `(1, 3, h, w)` image with values in `[0, 1]` (clamped) as P6.
pub fn write_ppm(image: &Tensor4<f32>) -> Result<Vec<u8>> {
    let d = image.dims();
    if d.n != 1 || d.c != 3 {
        return Err(Error::dim(format!("write_ppm expects (1, 3, h, w), got {d}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", d.w, d.h).into_bytes();
    out.reserve(d.len());
    for y in 0..d.h {
        for x in 0..d.w {
            for c in 0..3 {
                let v = image.at(0, c, y, x).clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

/// Decodes a P6 file into a `(1, 3, h, w)` image scaled to `[0, 1]`.
pub fn read_ppm(bytes: &[u8]) -> Result<Tensor4<f32>> {
    let h = parse_header(bytes, b"P6")?;
    let px = raster(bytes, &h, 3)?;
    let scale = h.maxval as f32;
    for (i, &b) in px.iter().enumerate() {
        if usize::from(b) > h.maxval {
            return Err(Error::codec(h.data_start + i, "sample exceeds maxval"));
        }
    }
    Ok(Tensor4::from_fn(Dims::new(1, 3, h.height, h.width), |_, c, y, x| {
        f32::from(px[(y * h.width + x) * 3 + c]) / scale
    }))
}

/// Encodes class indices (255 = ignore) as P5 with maxval 255.
pub fn write_pgm_labels(labels: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    out.extend_from_slice(labels.data());
    out
}

pub fn read_pgm_labels(bytes: &[u8]) -> Result<LabelMap> {
    let h = parse_header(bytes, b"P5")?;
    let px = raster(bytes, &h, 1)?;
    if let Some(i) = px.iter().position(|&b| usize::from(b) > h.maxval) {
        return Err(Error::codec(
            h.data_start + i,
            format!("label {} exceeds declared maxval {}", px[i], h.maxval),
        ));
    }
    LabelMap::from_vec(h.height, h.width, px.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::IGNORE;
    use proptest::prelude::*;

    #[test]
    fn minimal_white_pixel() {
        let img = Tensor4::full(Dims::new(1, 3, 1, 1), 1.0f32);
        assert_eq!(write_ppm(&img).unwrap(), b"P6\n1 1\n255\n\xff\xff\xff".to_vec());
    }

    #[test]
    fn header_comments_and_whitespace() {
        let plain = b"P6\n2 1\n255\n\x00\x10\x20\x30\x40\x50".to_vec();
        let fancy = b"P6 # magic\n# a comment line\n2\t 1\n# between\n255\n\x00\x10\x20\x30\x40\x50".to_vec();
        assert_eq!(read_ppm(&plain).unwrap(), read_ppm(&fancy).unwrap());
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let err = read_ppm(b"P5\n1 1\n255\n\x00").unwrap_err();
        assert!(matches!(err, Error::Codec { offset: 0, .. }));
        let err = read_ppm(b"P6\n2 2\n255\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Codec { offset: 13, .. }), "{err}");
        let err = read_ppm(b"P6\nx 2\n255\n").unwrap_err();
        assert!(matches!(err, Error::Codec { offset: 3, .. }), "{err}");
    }

    #[test]
    fn pgm_zeros_and_ignore() {
        let m = LabelMap::filled(2, 2, 0);
        assert_eq!(write_pgm_labels(&m), b"P5\n2 2\n255\n\0\0\0\0".to_vec());
        let m = read_pgm_labels(b"P5\n2 1\n255\n\x03\xff").unwrap();
        assert_eq!(m.data(), &[3, IGNORE]);
    }

    #[test]
    fn pgm_value_above_maxval() {
        let err = read_pgm_labels(b"P5\n2 1\n4\n\x03\x05").unwrap_err();
        assert!(matches!(err, Error::Codec { offset: 10, .. }), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ppm_roundtrip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let mut s = seed;
            let bytes: Vec<u8> = (0..h * w * 3).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            }).collect();
            let mut file = format!("P6\n{w} {h}\n255\n").into_bytes();
            file.extend_from_slice(&bytes);
            let img = read_ppm(&file).unwrap();
            prop_assert_eq!(write_ppm(&img).unwrap(), file);
        }

        #[test]
        fn pgm_roundtrip(h in 1usize..12, w in 1usize..12, data in proptest::collection::vec(any::<u8>(), 144)) {
            let m = LabelMap::from_vec(h, w, data[..h * w].to_vec()).unwrap();
            prop_assert_eq!(read_pgm_labels(&write_pgm_labels(&m)).unwrap(), m);
        }
    }
}
