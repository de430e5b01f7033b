//! Region label images and the bundled 128 x 128 phantom.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

static BUNDLED_PGM: &[u8] = include_bytes!("../../assets/shepp_vardi_128.pgm");

/// Voxel counts of regions 1..=5 in the bundled image.
pub const BUNDLED_REGION_SIZES: [usize; 5] = [9614, 5351, 701, 14, 704];

/// Region ids on a 2-D lattice, `x` fastest. Id 0 means "no region".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub nx: usize,
    pub ny: usize,
    pub labels: Vec<u8>,
}

impl LabelImage {
    pub fn new(nx: usize, ny: usize, labels: Vec<u8>) -> Result<Self> {
        if nx * ny != labels.len() || labels.is_empty() {
            return Err(Error::LengthMismatch { expected: nx * ny, found: labels.len() });
        }
        Ok(Self { nx, ny, labels })
    }

    /// 128 x 128 Shepp–Vardi style layout: 1 background, 2 tissue,
    /// 3 ventricles, 4 small lesion, 5 skull ring.
    pub fn bundled() -> Self {
        parse_pgm(BUNDLED_PGM).expect("bundled phantom is a valid PGM")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorted distinct non-zero region ids.
    pub fn regions(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&r| seen[r as usize]).collect()
    }

    pub fn count(&self, region: u8) -> usize {
        self.labels.iter().filter(|&&l| l == region).count()
    }
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

fn parse_number(tok: Option<&[u8]>) -> Result<usize> {
    let tok = tok.ok_or(Error::InvalidParameter("truncated PGM header".into()))?;
    core::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidParameter(format!("bad PGM number {:?}", tok)))
}

/// Read a binary (`P5`) or plain (`P2`) grey map with values up to 255.
pub fn parse_pgm(data: &[u8]) -> Result<LabelImage> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos);
    let binary = match magic {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::InvalidParameter("not a P2/P5 grey map".into())),
    };
    let nx = parse_number(next_token(data, &mut pos))?;
    let ny = parse_number(next_token(data, &mut pos))?;
    let maxval = parse_number(next_token(data, &mut pos))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::InvalidParameter(format!("unsupported PGM maxval {maxval}")));
    }
    let n = nx * ny;
    let labels = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        if data.len() < start + n {
            return Err(Error::LengthMismatch { expected: n, found: data.len().saturating_sub(start) });
        }
        data[start..start + n].to_vec()
    } else {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let x = parse_number(next_token(data, &mut pos))?;
            if x > maxval {
                return Err(Error::InvalidParameter(format!("PGM value {x} exceeds maxval {maxval}")));
            }
            v.push(x as u8);
        }
        v
    };
    LabelImage::new(nx, ny, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sizes() {
        let img = LabelImage::bundled();
        assert_eq!((img.nx, img.ny), (128, 128));
        assert_eq!(img.regions(), alloc::vec![1, 2, 3, 4, 5]);
        for (k, &size) in BUNDLED_REGION_SIZES.iter().enumerate() {
            assert_eq!(img.count(k as u8 + 1), size);
        }
    }

    #[test]
    fn plain_format() {
        let img = parse_pgm(b"P2\n# c\n3 2\n5\n0 1 2\n3 4 5\n").unwrap();
        assert_eq!(img.labels, alloc::vec![0, 1, 2, 3, 4, 5]);
        assert!(parse_pgm(b"P2 2 1 5 1 9").is_err());
    }
}
