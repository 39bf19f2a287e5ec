//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue pixel bytes (row-major 32x32).

use std::fs;
use std::path::Path;

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const RECORD: usize = 3073;
const PIXELS: usize = 3072;

pub fn load_cifar10(files: &[&Path]) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for &path in files {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(Error::format(
                path,
                format!(
                    "{} bytes is not a whole number of {RECORD}-byte records",
                    bytes.len()
                ),
            ));
        }
        for rec in bytes.chunks_exact(RECORD) {
            if rec[0] > 9 {
                return Err(Error::format(path, format!("label byte {} > 9", rec[0])));
            }
            labels.push(rec[0] as usize);
            data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    if labels.is_empty() {
        return Err(Error::config(
            "dataset.files",
            "no CIFAR-10 batch files given",
        ));
    }
    let n = labels.len();
    debug_assert_eq!(data.len(), n * PIXELS);
    Dataset::new(
        Tensor::new(vec![n, 3, 32, 32], data)?,
        labels,
        DatasetMeta {
            name: "cifar10".into(),
            input_shape: vec![3, 32, 32],
            classes: 10,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_records_channel_major() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data_batch_1.bin");
        let mut bytes = Vec::new();
        for label in [3u8, 9] {
            bytes.push(label);
            bytes.extend(std::iter::repeat_n(0u8, 1024));
            bytes.extend(std::iter::repeat_n(255u8, 1024));
            bytes.extend(std::iter::repeat_n(51u8, 1024));
        }
        fs::write(&p, &bytes).unwrap();
        let d = load_cifar10(&[&p]).unwrap();
        assert_eq!(d.labels, vec![3, 9]);
        assert_eq!(d.samples.shape(), &[2, 3, 32, 32]);
        let row = d.samples.row(1);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[1024], 1.0);
        assert!((row[2048] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn partial_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        fs::write(&p, vec![0u8; RECORD + 5]).unwrap();
        assert!(matches!(load_cifar10(&[&p]), Err(Error::Format { .. })));
    }
}
