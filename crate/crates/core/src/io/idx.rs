//! IDX (big-endian) image and label files.
//!
//! Images use magic `0x00000803` followed by item count, rows and columns as
//! big-endian `u32`, then one unsigned byte per pixel. Labels use magic
//! `0x00000801`, item count, then one byte per label.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Image, LabeledDataset};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("file truncated inside header at byte {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "magic number {magic:#010x} does not match expected {expected:#010x}"
        )));
    }
    Ok(())
}

/// Decode an image file body. Pixel bytes are scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image<f64>>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let per_image = rows * cols;
    if per_image == 0 {
        return Err(Error::Format("image dimensions must be non-zero".into()));
    }
    if body.len() != count * per_image {
        return Err(Error::Consistency(format!(
            "header declares {count} images of {rows}x{cols} ({} bytes) but body has {} bytes",
            count * per_image,
            body.len()
        )));
    }
    body.chunks_exact(per_image)
        .map(|chunk| Image::new(rows, cols, 1, chunk.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Consistency(format!(
            "header declares {count} labels but body has {} bytes",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Load an image/label file pair. The class count is one past the largest label.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    LabeledDataset::new(images, labels.into_iter().map(usize::from).collect(), num_classes)
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_idx_images(images: &[Image<f64>]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first() {
        Some(im) if im.channels() == 1 => (im.height(), im.width()),
        Some(_) => return Err(Error::Format("IDX image files hold single-channel images".into())),
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for im in images {
        if im.shape() != (rows, cols, 1) {
            return Err(Error::Consistency("images do not share one shape".into()));
        }
        out.extend(im.data().iter().map(|&v| to_byte(v)));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit a byte")))?;
        out.push(b);
    }
    Ok(out)
}

/// Write a dataset as an IDX image/label file pair.
pub fn save_idx(dataset: &LabeledDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    fs::write(images_path, encode_idx_images(dataset.images())?)?;
    fs::write(labels_path, encode_idx_labels(dataset.labels())?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_file(count: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGE_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn scales_bytes_by_255() {
        let body: Vec<u8> = vec![0, 128, 255, 7, 1, 2, 3, 4, 9, 9, 9, 9, 250, 251, 252, 253];
        let images = parse_idx_images(&image_file(4, 2, 2, &body)).unwrap();
        assert_eq!(images.len(), 4);
        assert_eq!(images[0].data()[0], 0.0);
        assert_eq!(images[0].data()[1], 128.0 / 255.0);
        assert_eq!(images[0].data()[2], 1.0);
        assert_eq!(images[0].shape(), (2, 2, 1));
    }

    #[test]
    fn empty_body_with_nonzero_count_is_consistency_error() {
        let err = parse_idx_images(&image_file(3, 2, 2, &[])).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "{err}");
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = image_file(1, 1, 1, &[5]);
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format(_))));
        let labels = [0u8, 0, 8, 3, 0, 0, 0, 0];
        assert!(matches!(parse_idx_labels(&labels), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_header_is_format_error() {
        assert!(matches!(parse_idx_images(&[0, 0, 8, 3, 0]), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        fs::write(&ip, image_file(2, 1, 1, &[1, 2])).unwrap();
        fs::write(&lp, encode_idx_labels(&[0, 1, 1]).unwrap()).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }

    proptest! {
        #[test]
        fn reencode_reproduces_bytes(rows in 1u32..6, cols in 1u32..6, count in 1u32..5, seed in any::<u64>()) {
            let n = (rows * cols * count) as usize;
            let body: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 56) as u8).collect();
            let bytes = image_file(count, rows, cols, &body);
            let images = parse_idx_images(&bytes).unwrap();
            for im in &images {
                for &v in im.data() {
                    let back = v * 255.0;
                    prop_assert!((back - back.round()).abs() < 1e-9);
                }
            }
            prop_assert_eq!(encode_idx_images(&images).unwrap(), bytes);
        }
    }
}
