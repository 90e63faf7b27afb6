use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Magic number of an unsigned-byte tensor with three dimensions after the count.
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of an unsigned-byte vector.
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what}: wrong magic 0x{magic:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

/// Loads an IDX image/label file pair. Pixels are scaled by 1/255 and each
/// image is flattened row-major.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

pub(crate) fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    check_magic(images, IDX_IMAGES_MAGIC, "images")?;
    check_magic(labels, IDX_LABELS_MAGIC, "labels")?;

    let n = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let n_labels = read_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::Format(format!("{n} images but {n_labels} labels")));
    }

    let d = rows * cols;
    let pixels = &images[16..];
    if pixels.len() < n * d {
        return Err(Error::Format(format!(
            "images: truncated payload, {} of {} bytes",
            pixels.len(),
            n * d
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() < n {
        return Err(Error::Format(format!(
            "labels: truncated payload, {} of {n} bytes",
            label_bytes.len()
        )));
    }

    let data = pixels[..n * d].iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = label_bytes[..n].iter().map(|&y| usize::from(y)).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(RealMatrix::from_vec(n, d, data)?, labels, num_classes)
}

/// Writes raw pixel bytes and labels as an IDX pair.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let n = labels.len();
    if pixels.len() != n * rows * cols {
        return Err(Error::Dimension(format!(
            "{} pixel bytes for {n} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [n, rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    std::fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    std::fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn scales_pixel_endpoints() {
        let mut images = header(IDX_IMAGES_MAGIC, &[2, 2, 2]);
        images.extend_from_slice(&[0, 255, 255, 0, 0, 0, 255, 255]);
        let mut labels = header(IDX_LABELS_MAGIC, &[2]);
        labels.extend_from_slice(&[1, 0]);
        let ds = parse_idx(&images, &labels).unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.n_dims(), 4);
        assert_eq!(ds.features().row(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ds.features().row(1), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn image_magic_passed_as_labels() {
        let mut images = header(IDX_IMAGES_MAGIC, &[1, 1, 1]);
        images.push(7);
        let mut labels = header(IDX_IMAGES_MAGIC, &[1, 1, 1]);
        labels.push(0);
        let err = parse_idx(&images, &labels).unwrap_err();
        assert!(err.to_string().contains("wrong magic"), "{err}");
    }

    #[test]
    fn count_mismatch() {
        let mut images = header(IDX_IMAGES_MAGIC, &[2, 1, 1]);
        images.extend_from_slice(&[1, 2]);
        let mut labels = header(IDX_LABELS_MAGIC, &[3]);
        labels.extend_from_slice(&[0, 1, 1]);
        assert!(parse_idx(&images, &labels).is_err());
    }

    #[test]
    fn truncated_payload() {
        let mut images = header(IDX_IMAGES_MAGIC, &[2, 2, 2]);
        images.extend_from_slice(&[0, 1, 2]);
        let mut labels = header(IDX_LABELS_MAGIC, &[2]);
        labels.extend_from_slice(&[0, 1]);
        let err = parse_idx(&images, &labels).unwrap_err();
        assert!(err.to_string().contains("truncated"));
        assert!(parse_idx(&images[..6], &labels).is_err());
    }
}
