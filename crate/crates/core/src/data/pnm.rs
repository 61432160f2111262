//! Binary netpbm images: P6 (RGB) and P5 (gray), 8 bits per sample.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::group::Image;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                self.pos = start;
                self.err(format!("{what} out of range"))
            })
    }
}

/// Decodes a P5/P6 byte stream; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let c = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(cur.err("expected magic `P6` or `P5`")),
    };
    cur.pos = 2;
    let w = cur.number("width")?;
    let h = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("max value")?;
    if maxval != 255 {
        cur.pos = maxval_at;
        cur.skip_space();
        return Err(cur.err(format!(
            "unsupported max value {maxval}, only 255 is supported"
        )));
    }
    if w == 0 || h == 0 {
        return Err(cur.err("zero image size"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected one whitespace byte before the payload")),
    }
    let need = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| cur.err("image size overflows"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        cur.pos = bytes.len();
        return Err(cur.err(format!(
            "truncated payload: need {need} bytes, found {}",
            payload.len()
        )));
    }
    let data = payload[..need].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(h, w, c, data)
}

/// Quantizes a sample to 8 bits: round half up, clamp to `[0, 255]`.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.c {
        3 => "P6",
        1 => "P5",
        c => {
            return Err(Error::shape(format!(
                "netpbm needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_atomic(path.as_ref(), &encode(img)?)
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> &Path {
        Path::new(s)
    }

    #[test]
    fn minimal_rgb() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend(0u8..12);
        let img = decode(&bytes, p("x")).unwrap();
        assert_eq!((img.h, img.w, img.c), (2, 2, 3));
        assert_eq!(img.get(1, 1, 2), 11.0 / 255.0);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        bytes.push(255);
        assert_eq!(decode(&bytes, p("x")).unwrap().data, vec![1.0]);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = decode(b"P7 1 1 255\n\0", p("x")).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 0, .. }));
        let e = decode(b"P5 1 1 65535\n\0\0", p("x")).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 7, .. }), "{e}");
        let e = decode(b"P6 2 2 255\n\0\0\0", p("x")).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 14, .. }), "{e}");
        let e = decode(b"P6 2 x 255\n", p("x")).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 5, .. }), "{e}");
    }
}
