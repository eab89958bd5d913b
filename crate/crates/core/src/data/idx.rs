//! IDX container format: big-endian `u32` magic, one big-endian `u32` per
//! dimension, then an unsigned-byte payload.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::core_math::DenseMatrix;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated {
            path: path.to_string(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse(bytes: &[u8], path: &str, magic: u32, ndim: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::IdxMagic {
            path: path.to_string(),
            expected: magic,
            found,
        });
    }
    let dims = (0..ndim)
        .map(|d| be_u32(bytes, 4 + 4 * d, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndim;
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            path: path.to_string(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((dims, bytes[header..expected].to_vec()))
}

/// Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (dims, payload) = parse(&bytes, &path.display().to_string(), IMAGES_MAGIC, 3)?;
    Ok((dims[0], dims[1], dims[2], payload))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Ok(parse(&bytes, &path.display().to_string(), LABELS_MAGIC, 1)?.1)
}

pub fn write_idx_images(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<()> {
    let per = rows * cols;
    if per == 0 || !pixels.len().is_multiple_of(per) {
        return Err(Error::InvalidArgument(format!(
            "{} pixels do not tile {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [pixels.len() / per, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

/// Loads an image/label IDX pair, scaling pixels to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let features = DenseMatrix::new(
        n,
        rows * cols,
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(1, |m| m + 1).max(10);
    Dataset::new(features, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img.idx");
        let lab = dir.join("lab.idx");
        write_idx_images(&img, 2, 2, &[0, 255, 255, 0, 255, 255, 0, 0]).unwrap();
        write_idx_labels(&lab, labels).unwrap();
        (img, lab)
    }

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("pdpsgd-idx-{name}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn two_image_fixture() {
        let d = tmpdir("ok");
        let (img, lab) = fixture(&d, &[3, 7]);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.x(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.x(1), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.class_count(), 10);
    }

    #[test]
    fn count_mismatch() {
        let d = tmpdir("count");
        let (img, lab) = fixture(&d, &[1, 2, 3]);
        assert!(matches!(
            load_idx(&img, &lab),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
    }

    #[test]
    fn magic_and_truncation_are_distinct_errors() {
        let d = tmpdir("bad");
        let (img, lab) = fixture(&d, &[1, 2]);
        // Swapped files: label magic where image magic is expected.
        assert!(matches!(load_idx(&lab, &img), Err(Error::IdxMagic { .. })));

        let mut bytes = std::fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 3);
        let short = d.join("short.idx");
        std::fs::write(&short, bytes).unwrap();
        assert!(matches!(
            load_idx(&short, &lab),
            Err(Error::IdxTruncated { expected: 24, found: 21, .. })
        ));
    }

    #[test]
    fn byte_exact_round_trip() {
        let d = tmpdir("rt");
        let (img, lab) = fixture(&d, &[4, 9]);
        let (n, r, c, px) = read_idx_images(&img).unwrap();
        let copy = d.join("copy.idx");
        write_idx_images(&copy, r, c, &px).unwrap();
        assert_eq!(n, 2);
        assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(&copy).unwrap());
        let l = read_idx_labels(&lab).unwrap();
        assert_eq!(l, vec![4, 9]);
    }

    #[test]
    fn canonical_mnist_test_set_if_present() {
        let Ok(dir) = std::env::var("PDPSGD_MNIST_DIR") else {
            return;
        };
        let dir = Path::new(&dir);
        let ds = load_idx(
            dir.join("t10k-images-idx3-ubyte"),
            dir.join("t10k-labels-idx1-ubyte"),
        )
        .unwrap();
        assert_eq!((ds.len(), ds.feature_dim(), ds.class_count()), (10_000, 784, 10));
    }
}
