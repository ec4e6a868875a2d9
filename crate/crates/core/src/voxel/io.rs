//! Netpbm masks: PGM (`P5`, maxval up to 255) and PBM (`P1`, `P4`).
//! Dark pixels are members: PGM values below 128, PBM ones.

use std::path::Path;

use super::VoxelGrid;
use crate::error::{Error, Result};

pub const PGM_THRESHOLD: u8 = 128;

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::Parse("not a netpbm file".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let fields = if magic[1] == b'5' { 3 } else { 2 };
    let mut pos = 2;
    let mut vals = Vec::new();
    while vals.len() < fields {
        match bytes.get(pos) {
            None => return Err(Error::Parse("truncated header".into())),
            Some(b'#') => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => pos += 1,
            Some(c) if c.is_ascii_digit() => {
                let start = pos;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                let s = std::str::from_utf8(&bytes[start..pos]).unwrap();
                vals.push(
                    s.parse::<usize>()
                        .map_err(|e| Error::Parse(format!("header field {s}: {e}")))?,
                );
            }
            Some(c) => return Err(Error::Parse(format!("unexpected byte {c:#x} in header"))),
        }
    }
    // exactly one whitespace byte separates the header from binary data
    let data_start = pos + 1;
    Ok(Header {
        magic,
        width: vals[0],
        height: vals[1],
        maxval: vals.get(2).copied().unwrap_or(1),
        data_start,
    })
}

/// Decode a PGM or PBM image into a row-major membership mask.
pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    let h = header(bytes)?;
    let (w, ht) = (h.width, h.height);
    if w == 0 || ht == 0 {
        return Err(Error::Parse("image has zero size".into()));
    }
    let mask = match &h.magic {
        b"P5" => {
            if h.maxval == 0 || h.maxval > 255 {
                return Err(Error::Parse(format!("unsupported maxval {}", h.maxval)));
            }
            let data = bytes
                .get(h.data_start..h.data_start + w * ht)
                .ok_or_else(|| Error::Parse("truncated PGM data".into()))?;
            data.iter().map(|&v| v < PGM_THRESHOLD).collect()
        }
        b"P4" => {
            let row = w.div_ceil(8);
            let data = bytes
                .get(h.data_start..h.data_start + row * ht)
                .ok_or_else(|| Error::Parse("truncated PBM data".into()))?;
            let mut m = Vec::with_capacity(w * ht);
            for i in 0..ht {
                for j in 0..w {
                    m.push(data[i * row + j / 8] & (0x80 >> (j % 8)) != 0);
                }
            }
            m
        }
        b"P1" => {
            let m: Vec<bool> = bytes[h.data_start.min(bytes.len())..]
                .iter()
                .filter(|c| matches!(c, b'0' | b'1'))
                .map(|&c| c == b'1')
                .take(w * ht)
                .collect();
            if m.len() != w * ht {
                return Err(Error::Parse("truncated PBM data".into()));
            }
            m
        }
        other => {
            return Err(Error::Parse(format!(
                "unsupported netpbm type {}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    Ok((ht, w, mask))
}

/// Load a mask with cell size `1 / max(width, height)`, padded by
/// `padding · max(width, height)` empty cells on every side.
pub fn load_mask(path: &Path, padding: f64) -> Result<VoxelGrid> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (rows, cols, mask) = decode_mask(&bytes)?;
    let side = rows.max(cols);
    let g = VoxelGrid::new(vec![rows, cols], 1.0 / side as f64, mask)?;
    Ok(g.padded((padding * side as f64).ceil() as usize))
}

/// Binary PBM encoding of a 2-D grid.
pub fn encode_pbm(g: &VoxelGrid) -> Result<Vec<u8>> {
    if g.ndim() != 2 {
        return Err(Error::Domain("PBM output needs a 2-D grid".into()));
    }
    let (rows, cols) = (g.dims()[0], g.dims()[1]);
    let mut out = format!("P4\n{cols} {rows}\n").into_bytes();
    let row = cols.div_ceil(8);
    for i in 0..rows {
        let mut buf = vec![0u8; row];
        for j in 0..cols {
            if g.mask()[i * cols + j] {
                buf[j / 8] |= 0x80 >> (j % 8);
            }
        }
        out.extend(buf);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_threshold() {
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend([0, 127, 128, 255, 10, 200]);
        let (r, c, m) = decode_mask(&bytes).unwrap();
        assert_eq!((r, c), (2, 3));
        assert_eq!(m, vec![true, true, false, false, true, false]);
    }

    #[test]
    fn pbm_ascii_and_binary_agree() {
        let ascii = b"P1\n10 2\n1 0 0 0 0 0 0 0 0 1\n0 1 0 0 0 0 0 0 1 0\n";
        let (_, _, a) = decode_mask(ascii).unwrap();
        let g = VoxelGrid::new(vec![2, 10], 1.0, a.clone()).unwrap();
        let bin = encode_pbm(&g).unwrap();
        let (r, c, b) = decode_mask(&bin).unwrap();
        assert_eq!((r, c), (2, 10));
        assert_eq!(a, b);
    }

    #[test]
    fn malformed() {
        assert!(decode_mask(b"P5\n3 2\n255\n\x00").is_err());
        assert!(decode_mask(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
        assert!(decode_mask(b"hello").is_err());
        assert!(decode_mask(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn load_pads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend([0u8; 16]);
        std::fs::write(&p, bytes).unwrap();
        let g = load_mask(&p, 0.5).unwrap();
        assert_eq!(g.dims(), &[8, 8]);
        assert_eq!(g.occupied(), 16);
        assert!((g.margin() - 0.5).abs() < 1e-12);
        assert!(matches!(load_mask(&dir.path().join("missing"), 0.2), Err(Error::Io(_))));
    }
}
