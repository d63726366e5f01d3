//! Binary PGM (P5, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub fn encode_pgm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn write_pgm(img: &ImageBuffer, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Parses a P5 file. Header tokens may be separated by any whitespace and
/// `#` comments; exactly one whitespace byte precedes the raster.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let malformed = |reason: String| Error::Format {
        kind: "PGM",
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = next_token(&mut pos).ok_or_else(|| malformed("empty file".into()))?;
    if magic != "P5" {
        return Err(malformed(format!("expected magic P5, found {magic:?}")));
    }
    let mut field = |name: &str| -> Result<u32> {
        let tok = next_token(&mut pos).ok_or_else(|| malformed(format!("missing {name}")))?;
        tok.parse::<u32>()
            .map_err(|_| malformed(format!("{name} {tok:?} is not a non-negative integer")))
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            path: path.to_path_buf(),
            maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(malformed(format!("zero-sized image {width}x{height}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing whitespace after header".into()));
    }
    let data = &bytes[pos + 1..];
    let need = width * height;
    if data.len() < need {
        return Err(malformed(format!("truncated raster: {} of {need} bytes", data.len())));
    }
    ImageBuffer::new(width, height, data[..need].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout() {
        let img = ImageBuffer::new(2, 2, vec![0, 255, 128, 7]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(bytes.len(), 11 + 4);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 128, 7]);
        assert_eq!(decode_pgm(&bytes, Path::new("x")).unwrap(), img);
    }

    #[test]
    fn accepts_comments() {
        let bytes = b"P5 # c\n# another\n1 2\n255\n\x05\x06";
        let img = decode_pgm(bytes, Path::new("x")).unwrap();
        assert_eq!(img.pixels(), &[5, 6]);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("x");
        assert!(matches!(decode_pgm(b"P5\n1 1\n65535\n\0\0", p), Err(Error::UnsupportedMaxval { maxval: 65535, .. })));
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\0\0\0", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 x\n255\n", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"", p), Err(Error::Format { .. })));
    }
}
