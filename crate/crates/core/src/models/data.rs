//! Classification datasets: MNIST-format IDX files and seeded synthetic blobs.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Row-major inputs with one integer class per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDataset {
    pub n_in: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl ClassificationDataset {
    pub fn new(n_in: usize, inputs: Vec<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if n_in == 0 || inputs.len() != n_in * labels.len() {
            return Err(Error::DimensionMismatch { expected: n_in * labels.len(), got: inputs.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= class_count) {
            return Err(Error::Precondition(format!("label {bad} outside 0..{class_count}")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("non-finite input value".into()));
        }
        Ok(Self { n_in, inputs, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.inputs[d * self.n_in..(d + 1) * self.n_in]
    }

    /// Items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut inputs = Vec::with_capacity(indices.len() * self.n_in);
        for &d in indices {
            inputs.extend_from_slice(self.row(d));
        }
        Self {
            n_in: self.n_in,
            inputs,
            labels: indices.iter().map(|&d| self.labels[d]).collect(),
            class_count: self.class_count,
        }
    }

    /// Disjoint (first `n_a`, next `n_b`) items after a seeded shuffle.
    pub fn split(&self, n_a: usize, n_b: usize, seed: u64) -> Result<(Self, Self)> {
        if n_a + n_b > self.len() {
            return Err(Error::Precondition(format!(
                "requested {} items from a dataset of {}",
                n_a + n_b,
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut r = rng::seeded(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        Ok((self.subset(&idx[..n_a]), self.subset(&idx[n_a..n_a + n_b])))
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse("IDX header truncated".into()))
}

/// Images as (count, rows, cols, pixels row-major).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Parse(format!("IDX image magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let (n, rows, cols) = (be_u32(bytes, 4)? as usize, be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(Error::Parse(format!("IDX image body has {} bytes, expected {}", body.len(), n * rows * cols)));
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(Error::Parse(format!("IDX label magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Parse(format!("IDX label body has {} bytes, expected {n}", body.len())));
    }
    Ok(body.to_vec())
}

/// Reads an (uncompressed) IDX image/label pair, pixels scaled to [0, 1].
/// At most `limit` items are kept.
pub fn load_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<ClassificationDataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let lab = parse_idx_labels(&fs::read(labels)?)?;
    if lab.len() != n {
        return Err(Error::Inconsistent(format!("{n} images but {} labels", lab.len())));
    }
    let keep = limit.unwrap_or(n).min(n);
    let n_in = rows * cols;
    let inputs = pixels[..keep * n_in].iter().map(|&p| p as f64 / 255.0).collect();
    let labels = lab[..keep].iter().map(|&l| l as usize).collect();
    ClassificationDataset::new(n_in, inputs, labels, 10)
}

/// Gaussian clusters around uniform random centres in the unit cube, clipped
/// to [0, 1]. Stand-in for image data when no IDX files are available.
pub fn synthetic_blobs(n: usize, n_in: usize, class_count: usize, spread: f64, seed: u64) -> Result<ClassificationDataset> {
    if class_count == 0 || n_in == 0 {
        return Err(Error::Precondition("blobs need at least one class and one input".into()));
    }
    let mut r = rng::seeded(seed);
    let centres: Vec<Vec<f64>> = (0..class_count).map(|_| (0..n_in).map(|_| r.random::<f64>()).collect()).collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut inputs = Vec::with_capacity(n * n_in);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = r.random_range(0..class_count);
        labels.push(c);
        inputs.extend(centres[c].iter().map(|&m| (m + noise.sample(&mut r)).clamp(0.0, 1.0)));
    }
    ClassificationDataset::new(n_in, inputs, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_pair() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        (img, lab)
    }

    #[test]
    fn idx_round_trip_is_bit_exact() {
        let (img, lab) = idx_pair();
        let (n, r, c, px) = parse_idx_images(&img).unwrap();
        assert_eq!((n, r, c), (2, 2, 2));
        assert_eq!(px, vec![0, 255, 51, 102, 1, 2, 3, 4]);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![7, 3]);
        let dir = tempfile::tempdir().unwrap();
        let (pi, pl) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&pi, &img).unwrap();
        fs::write(&pl, &lab).unwrap();
        let ds = load_idx(&pi, &pl, Some(1)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels, vec![7]);
    }

    #[test]
    fn bad_magic_and_truncation_are_parse_errors() {
        let (mut img, lab) = idx_pair();
        assert!(matches!(parse_idx_images(&lab), Err(Error::Parse(_))));
        img.pop();
        assert!(matches!(parse_idx_images(&img), Err(Error::Parse(_))));
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(Error::Parse(_))));
    }

    #[test]
    fn blobs_are_seeded_and_valid() {
        let a = synthetic_blobs(50, 6, 3, 0.1, 4).unwrap();
        assert_eq!(a, synthetic_blobs(50, 6, 3, 0.1, 4).unwrap());
        assert!(a.inputs.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.labels.iter().all(|&c| c < 3));
    }

    #[test]
    fn split_is_disjoint() {
        let a = ClassificationDataset::new(1, (0..10).map(|v| v as f64).collect(), vec![0; 10], 1).unwrap();
        let (x, y) = a.split(4, 6, 1).unwrap();
        let mut all: Vec<f64> = x.inputs.iter().chain(&y.inputs).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, a.inputs);
        assert!(a.split(6, 6, 1).is_err());
    }
}
