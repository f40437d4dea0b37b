//! IDX-format dataset files (the MNIST family encoding): big-endian header,
//! u8 payload. Image files carry magic 0x00000803 and three dimensions;
//! label files carry 0x00000801 and one.

use crate::error::{Error, Result};
use crate::fl::data::Dataset;
use ndarray::Array2;
use std::io::Write;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, offset: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::IdxParse { offset: self.offset as u64, reason: reason.into() }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(self.err("truncated file: expected 4 more bytes"));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..end].try_into().unwrap());
        self.offset = end;
        Ok(v)
    }

    fn read_payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.offset + len;
        if end > self.bytes.len() {
            return Err(self.err(format!(
                "truncated payload: need {len} bytes, {} remain",
                self.bytes.len() - self.offset
            )));
        }
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        if self.offset != self.bytes.len() {
            return Err(self.err(format!("{} trailing bytes", self.bytes.len() - self.offset)));
        }
        Ok(slice)
    }
}

/// Parse an IDX image file into an (examples x pixels) matrix scaled to
/// [0, 1].
pub fn load_idx_images(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path)?;
    parse_idx_images(&bytes)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::IdxParse {
            offset: 0,
            reason: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(r.err(format!("degenerate image dimensions {rows}x{cols}")));
    }
    let pixels = rows * cols;
    let payload = r.read_payload(count * pixels)?;
    let mut out = Array2::zeros((count, pixels));
    for (i, chunk) in payload.chunks_exact(pixels).enumerate() {
        for (j, &b) in chunk.iter().enumerate() {
            out[[i, j]] = b as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Parse an IDX label file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path)?;
    parse_idx_labels(&bytes)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32()?;
    if magic != LABELS_MAGIC {
        return Err(Error::IdxParse {
            offset: 0,
            reason: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = r.read_u32()? as usize;
    let payload = r.read_payload(count)?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Load a matching image/label pair as one dataset.
pub fn load_idx_dataset(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.nrows() != y.len() {
        return Err(Error::IdxParse {
            offset: 0,
            reason: format!("{} images but {} labels", x.nrows(), y.len()),
        });
    }
    Dataset::new(x, y, classes)
}

/// Write features in [0, 1] as an IDX image file (values rounded to u8).
pub fn write_idx_images(path: &Path, features: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != features.ncols() {
        return Err(Error::domain(format!(
            "feature width {} does not factor as {rows}x{cols}",
            features.ncols()
        )));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(features.nrows() as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    for row in features.rows() {
        for &v in row {
            f.write_all(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    for &y in labels {
        if y > 255 {
            return Err(Error::domain(format!("label {y} does not fit in a byte")));
        }
        f.write_all(&[y as u8])?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_pixel_image_file() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes()); // count
        bytes.extend_from_slice(&1u32.to_be_bytes()); // rows
        bytes.extend_from_slice(&1u32.to_be_bytes()); // cols
        bytes.push(255);
        bytes
    }

    #[test]
    fn hand_built_single_pixel_image() {
        let x = parse_idx_images(&one_pixel_image_file()).unwrap();
        assert_eq!(x.shape(), &[1, 1]);
        assert_eq!(x[[0, 0]], 1.0);
    }

    #[test]
    fn magic_numbers_enforced_per_kind() {
        let mut label_file = Vec::new();
        label_file.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        label_file.extend_from_slice(&2u32.to_be_bytes());
        label_file.extend_from_slice(&[7, 3]);
        assert_eq!(parse_idx_labels(&label_file).unwrap(), vec![7, 3]);

        // Image magic in a label parse is rejected, and vice versa.
        let err = parse_idx_labels(&one_pixel_image_file()).unwrap_err();
        assert!(err.to_string().contains("bad label magic"));
        let err = parse_idx_images(&label_file).unwrap_err();
        assert!(err.to_string().contains("bad image magic"));
    }

    #[test]
    fn truncation_reports_byte_offset() {
        let mut bytes = one_pixel_image_file();
        bytes.pop();
        let err = parse_idx_images(&bytes).unwrap_err();
        match err {
            Error::IdxParse { offset, .. } => assert_eq!(offset, 16),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        std::fs::write(&img, one_pixel_image_file()).unwrap();
        let mut label_file = Vec::new();
        label_file.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        label_file.extend_from_slice(&2u32.to_be_bytes());
        label_file.extend_from_slice(&[0, 1]);
        std::fs::write(&lab, label_file).unwrap();
        assert!(load_idx_dataset(&img, &lab, 10).is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let x = ndarray::array![[0.0, 1.0, 0.5, 0.25], [1.0, 0.0, 0.1, 0.9]];
        write_idx_images(&img, &x, 2, 2).unwrap();
        write_idx_labels(&lab, &[3, 9]).unwrap();
        let ds = load_idx_dataset(&img, &lab, 10).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 9]);
        for (a, b) in ds.features.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
