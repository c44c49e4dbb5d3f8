//! Portable GrayMap reader/writer (P2 ASCII and P5 binary, maxval 255 only).

use std::io::Write;

use thiserror::Error;

use super::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// ASCII samples.
    P2,
    /// Raw 8-bit samples.
    P5,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("malformed PGM at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("truncated PGM payload at byte {offset}: expected {expected} samples, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported PGM: {0}")]
    Unsupported(String),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn parse_err(&self, reason: impl Into<String>) -> PgmError {
        PgmError::Parse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    /// Skip whitespace and `#` comments.
    fn skip_blank(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
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

    fn next_uint(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_blank();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.parse_err(format!("expected {what}")));
        }
        // digits only, so utf8 is guaranteed
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| PgmError::Parse {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Parse a P2 or P5 stream into an 8-bit grid.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let format = match bytes.get(0..2) {
        Some(b"P2") => PgmFormat::P2,
        Some(b"P5") => PgmFormat::P5,
        _ => return Err(cur.parse_err("missing P2/P5 magic number")),
    };
    cur.pos = 2;
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(cur.parse_err("magic number must be followed by whitespace"));
    }
    let width = cur.next_uint("width")?;
    let height = cur.next_uint("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::Parse {
            offset: maxval_at,
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval != 255 {
        return Err(PgmError::Unsupported(format!(
            "maxval {maxval} (only 255 is supported)"
        )));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| cur.parse_err("dimensions overflow"))?;

    let data = match format {
        PgmFormat::P5 => {
            // exactly one whitespace byte separates maxval from the raster
            if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
                return Err(PgmError::Truncated {
                    offset: cur.pos,
                    expected,
                    found: 0,
                });
            }
            cur.pos += 1;
            let payload = &bytes[cur.pos..];
            if payload.len() < expected {
                return Err(PgmError::Truncated {
                    offset: bytes.len(),
                    expected,
                    found: payload.len(),
                });
            }
            payload[..expected].to_vec()
        }
        PgmFormat::P2 => {
            let mut data = Vec::with_capacity(expected);
            for found in 0..expected {
                cur.skip_blank();
                if cur.pos >= bytes.len() {
                    return Err(PgmError::Truncated {
                        offset: cur.pos,
                        expected,
                        found,
                    });
                }
                let at = cur.pos;
                let v = cur.next_uint("sample")?;
                if v > 255 {
                    return Err(PgmError::Parse {
                        offset: at,
                        reason: format!("sample {v} exceeds maxval 255"),
                    });
                }
                data.push(v as u8);
            }
            data
        }
    };
    Ok(GrayImage::new(width, height, data).expect("dimensions checked above"))
}

/// Serialize an 8-bit grid. P2 output wraps at 16 samples per line.
pub fn save_pgm(image: &GrayImage, format: PgmFormat) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.data().len() * 4 + 32);
    let magic = match format {
        PgmFormat::P2 => "P2",
        PgmFormat::P5 => "P5",
    };
    write!(out, "{magic}\n{} {}\n255\n", image.width(), image.height()).unwrap();
    match format {
        PgmFormat::P5 => out.extend_from_slice(image.data()),
        PgmFormat::P2 => {
            for row in image.data().chunks(image.width()) {
                for chunk in row.chunks(16) {
                    let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_p2() {
        let img = load_pgm(b"P2 2 1 255 0 255").unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.data(), &[0, 255]);
    }

    #[test]
    fn comments_are_skipped() {
        let img = load_pgm(b"P2\n# made by hand\n2 1\n# max\n255\n7 8\n").unwrap();
        assert_eq!(img.data(), &[7, 8]);
    }

    #[test]
    fn single_pixel_p5() {
        let img = GrayImage::new(1, 1, vec![128]).unwrap();
        let bytes = save_pgm(&img, PgmFormat::P5);
        assert_eq!(bytes, b"P5\n1 1\n255\n\x80");
        assert_eq!(load_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn p2_output_is_plain_text() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let bytes = save_pgm(&img, PgmFormat::P2);
        assert_eq!(std::str::from_utf8(&bytes).unwrap(), "P2\n2 2\n255\n1 2\n3 4\n");
    }

    #[test]
    fn truncated_payloads() {
        let err = load_pgm(b"P5\n2 2\n255\n\x01\x02\x03").unwrap_err();
        assert_eq!(
            err,
            PgmError::Truncated {
                offset: 14,
                expected: 4,
                found: 3
            }
        );
        assert!(matches!(
            load_pgm(b"P2 2 2 255 1 2 3"),
            Err(PgmError::Truncated { found: 3, .. })
        ));
    }

    #[test]
    fn header_errors_carry_offsets() {
        assert_eq!(
            load_pgm(b"P6 1 1 255 0"),
            Err(PgmError::Parse {
                offset: 0,
                reason: "missing P2/P5 magic number".into()
            })
        );
        match load_pgm(b"P2 3 x 255") {
            Err(PgmError::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_pgm(b"P2 1 1 65535 0"),
            Err(PgmError::Unsupported(_))
        ));
        assert!(matches!(
            load_pgm(b"P2 1 1 255 300"),
            Err(PgmError::Parse { offset: 11, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_both_formats(
            (w, h, data) in (1usize..20, 1usize..20)
                .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h)))
        ) {
            let img = GrayImage::new(w, h, data).unwrap();
            let p5 = load_pgm(&save_pgm(&img, PgmFormat::P5)).unwrap();
            let p2 = load_pgm(&save_pgm(&img, PgmFormat::P2)).unwrap();
            prop_assert_eq!(&p5, &img);
            prop_assert_eq!(&p2, &img);
        }
    }
}
