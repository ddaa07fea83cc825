//! IDX reader and writer. Files ending in `.gz` are (de)compressed with gzip.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !is_gz(path) {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(raw.as_slice())
        .read_to_end(&mut out)
        .map_err(|e| Error::io(path, e))?;
    Ok(out)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

/// Checks the magic number and returns the header dimensions and payload.
fn parse<'a>(bytes: &'a [u8], path: &Path, magic: u32, ndims: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    let dims = (0..ndims)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    Ok((dims, payload))
}

/// Reads an image/label file pair. Pixels are scaled to [0, 1] by /255 and
/// each image is flattened row-major; the class count is one past the
/// largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_bytes(images_path)?;
    let label_bytes = read_bytes(labels_path)?;
    let (dims, pixels) = parse(&image_bytes, images_path, IMAGES_MAGIC, 3)?;
    let (ldims, raw_labels) = parse(&label_bytes, labels_path, LABELS_MAGIC, 1)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if n != ldims[0] {
        return Err(Error::CountMismatch {
            images: n,
            labels: ldims[0],
        });
    }
    let features = Matrix::from_vec(n, h * w, pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, labels, classes, Split::Train, Some((h, w)))
}

fn encode(path: &Path, bytes: Vec<u8>) -> Result<Vec<u8>> {
    if !is_gz(path) {
        return Ok(bytes);
    }
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    enc.finish().map_err(|e| Error::io(path, e))
}

/// Writes `ds` as an IDX pair; pixels are stored as round(255·v). Inverse of
/// [`load_idx`] for datasets whose features are multiples of 1/255.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (h, w) = ds
        .image_shape
        .ok_or_else(|| Error::Usage("only image datasets can be written as IDX".into()))?;
    if ds.labels.iter().any(|&l| l > 255) {
        return Err(Error::Param("IDX labels must fit in one byte".into()));
    }
    let n = ds.len();
    let mut img = Vec::with_capacity(16 + ds.features.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, h, w] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    img.extend(ds.features.as_slice().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    write_atomic(images_path, &encode(images_path, img)?)?;
    write_atomic(labels_path, &encode(labels_path, lab)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistPart {
    /// The 60000-image training file (or whatever subset is installed).
    Train,
    /// The 10000-image `t10k` file.
    Test,
}

/// Locates `{train,t10k}-{images,labels}-idx?-ubyte[.gz]` under `root`.
pub fn mnist_paths(root: &Path, part: MnistPart) -> Result<(PathBuf, PathBuf)> {
    let prefix = match part {
        MnistPart::Train => "train",
        MnistPart::Test => "t10k",
    };
    let find = |stem: String| -> Result<PathBuf> {
        let plain = root.join(&stem);
        let gz = root.join(format!("{stem}.gz"));
        if plain.is_file() {
            Ok(plain)
        } else if gz.is_file() {
            Ok(gz)
        } else {
            Err(Error::io(
                plain,
                std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (also tried .gz)"),
            ))
        }
    };
    Ok((
        find(format!("{prefix}-images-idx3-ubyte"))?,
        find(format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

pub fn load_mnist(root: &Path, part: MnistPart) -> Result<Dataset> {
    let (images, labels) = mnist_paths(root, part)?;
    let mut ds = load_idx(&images, &labels)?;
    if part == MnistPart::Test {
        ds.split = Split::Test;
    }
    Ok(ds)
}
