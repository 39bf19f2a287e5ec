//! IDX container reader/writer (the MNIST file format).
//!
//! Layout: two zero bytes, a type byte (0x08 = unsigned byte), the number of
//! dimensions, then one big-endian `u32` per dimension, then the data.
//! Gzip-compressed files are detected by their magic and inflated first.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Idx {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_idx(path: &Path, bytes: &[u8], expect_ndim: u8) -> Result<Idx> {
    if bytes.len() < 4 {
        return Err(Error::format(
            path,
            format!("truncated header: {} bytes", bytes.len()),
        ));
    }
    let magic = &bytes[..4];
    if magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 || magic[3] != expect_ndim {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:02x} {:02x} {:02x} {:02x}, expected 00 00 08 {expect_ndim:02x}",
                magic[0], magic[1], magic[2], magic[3]
            ),
        ));
    }
    let ndim = expect_ndim as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format(path, "truncated dimension header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let b = &bytes[4 + 4 * i..8 + 4 * i];
            u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
        })
        .collect();
    let n: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != n {
        return Err(Error::format(
            path,
            format!(
                "dimensions {dims:?} need {n} data bytes, file has {}",
                body.len()
            ),
        ));
    }
    Ok(Idx {
        dims,
        data: body.to_vec(),
    })
}

/// Loads an image file (`00 00 08 03`) and a label file (`00 00 08 01`).
/// Pixels are scaled to `[0, 1]`; samples have shape `[1, rows, cols]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_idx(images, &read_bytes(images)?, 3)?;
    let lab = parse_idx(labels, &read_bytes(labels)?, 1)?;
    let (n, rows, cols) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::format(
            labels,
            format!(
                "{} labels for {n} images in {}",
                lab.dims[0],
                images.display()
            ),
        ));
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(images, "empty image file"));
    }
    let data = img.data.iter().map(|&b| b as f64 / 255.0).collect();
    let labels_vec: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let classes = labels_vec.iter().max().map_or(0, |m| m + 1).max(2);
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(
        Tensor::new(vec![n, 1, rows, cols], data)?,
        labels_vec,
        DatasetMeta {
            name,
            input_shape: vec![1, rows, cols],
            classes,
        },
    )
}

fn find(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    for cand in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&cand);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "IDX file not found (also tried .gz)",
        ),
    ))
}

/// Loads `(train, test)` from a directory with the standard MNIST file names.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut train = load_idx(
        &find(dir, "train-images-idx3-ubyte")?,
        &find(dir, "train-labels-idx1-ubyte")?,
    )?;
    let mut test = load_idx(
        &find(dir, "t10k-images-idx3-ubyte")?,
        &find(dir, "t10k-labels-idx1-ubyte")?,
    )?;
    let classes = train.meta.classes.max(test.meta.classes);
    train.meta.classes = classes;
    test.meta.classes = classes;
    train.meta.name = "mnist".into();
    test.meta.name = "mnist".into();
    Ok((train, test))
}

fn encode(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

/// Writes a single-channel image dataset with values on the `k / 255` grid.
pub fn write_idx(data: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let shape = &data.meta.input_shape;
    let (rows, cols) = match shape.as_slice() {
        [1, r, c] => (*r, *c),
        [r, c] => (*r, *c),
        _ => {
            return Err(Error::Shape(format!(
                "IDX images need [1, rows, cols] samples, got {shape:?}"
            )))
        }
    };
    let mut pixels = Vec::with_capacity(data.samples.len());
    for &v in data.samples.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
        }
        pixels.push((v * 255.0).round() as u8);
    }
    let mut labs = Vec::with_capacity(data.len());
    for &y in &data.labels {
        labs.push(u8::try_from(y).map_err(|_| Error::Domain(format!("label {y} > 255")))?);
    }
    write_file(images, &encode(&[data.len(), rows, cols], &pixels))?;
    write_file(labels, &encode(&[data.len()], &labs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(n: usize, seed: u8) -> Dataset {
        let data = (0..n * 12)
            .map(|i| ((i as u32 * 37 + seed as u32) % 256) as f64 / 255.0)
            .collect();
        Dataset::new(
            Tensor::new(vec![n, 1, 3, 4], data).unwrap(),
            (0..n).map(|i| (i + seed as usize) % 10).collect(),
            DatasetMeta {
                name: "synthetic".into(),
                input_shape: vec![1, 3, 4],
                classes: 10,
            },
        )
        .unwrap()
    }

    #[test]
    fn accepts_standard_magic_and_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut pixels = vec![0u8; 4];
        pixels[3] = 255;
        fs::write(&img, encode(&[1, 2, 2], &pixels)).unwrap();
        fs::write(&lab, encode(&[1], &[7])).unwrap();
        assert_eq!(&fs::read(&img).unwrap()[..4], &[0x00, 0x00, 0x08, 0x03]);
        assert_eq!(&fs::read(&lab).unwrap()[..4], &[0x00, 0x00, 0x08, 0x01]);
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.samples.data(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.labels, vec![7]);
    }

    #[test]
    fn wrong_magic_reports_the_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, encode(&[1], &[0])).unwrap(); // label magic in image slot
        fs::write(&lab, encode(&[1], &[0])).unwrap();
        let err = load_idx(&img, &lab).unwrap_err().to_string();
        assert!(err.contains("00 00 08 01"), "{err}");
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut bytes = encode(&[2, 2, 2], &[1; 8]);
        bytes.truncate(bytes.len() - 3);
        fs::write(&img, bytes).unwrap();
        fs::write(&lab, encode(&[2], &[0, 1])).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
        fs::write(&img, [0u8, 0]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn image_label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, encode(&[2, 1, 1], &[1, 2])).unwrap();
        fs::write(&lab, encode(&[3], &[0, 1, 1])).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn bundled_subset_loads() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist5k");
        let (train, test) = load_mnist_dir(&dir).unwrap();
        assert_eq!((train.len(), test.len()), (4000, 1000));
        assert_eq!(train.meta.input_shape, vec![1, 28, 28]);
        assert_eq!(train.class_counts(), vec![400; 10]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_identical(n in 1usize..20, seed in any::<u8>(), gz in any::<bool>()) {
            let d = synthetic(n, seed);
            let dir = tempfile::tempdir().unwrap();
            let ext = if gz { ".gz" } else { "" };
            let img = dir.path().join(format!("i{ext}"));
            let lab = dir.path().join(format!("l{ext}"));
            write_idx(&d, &img, &lab).unwrap();
            let mut back = load_idx(&img, &lab).unwrap();
            back.meta = d.meta.clone();
            let bits = |t: &Dataset| t.samples.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&d));
            prop_assert_eq!(back.labels, d.labels);
        }
    }
}
