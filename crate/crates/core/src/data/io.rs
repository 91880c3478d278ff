//! Dataset file format (integers little-endian):
//!
//! ```text
//! magic        "DCDS"
//! version      u32 = 1
//! num_classes  u32
//! count        u64
//! C, H, W      u32 each
//! per sample:  label u32, then C·H·W f64 values
//! ```

use std::io::Write;
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DATASET_MAGIC: &[u8; 4] = b"DCDS";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 12;

pub fn write_dataset<S: Scalar, W: Write>(ds: &LabeledDataset<S>, mut w: W) -> Result<()> {
    let [c, h, wd] = ds.shape();
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.num_classes as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for d in [c, h, wd] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 + 8 * ds.sample_len());
    for i in 0..ds.len() {
        buf.clear();
        buf.extend_from_slice(&(ds.label(i) as u32).to_le_bytes());
        for v in ds.image(i) {
            buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_dataset<S: Scalar>(ds: &LabeledDataset<S>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(ds, f)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Parse a dataset from its bytes. Either the whole dataset is returned or
/// an error; there is no partial result.
pub fn read_dataset<S: Scalar>(bytes: &[u8], name: &str) -> Result<LabeledDataset<S>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != DATASET_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let num_classes = u32_at(bytes, 8) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let shape = [u32_at(bytes, 20) as usize, u32_at(bytes, 24) as usize, u32_at(bytes, 28) as usize];
    if num_classes == 0 || shape.contains(&0) {
        return Err(Error::MalformedHeader(format!(
            "zero-sized field: num_classes {num_classes}, shape {shape:?}"
        )));
    }
    let per = shape.iter().product::<usize>() as u64;
    let expected = (HEADER_LEN as u64).saturating_add(count.saturating_mul(4 + 8 * per));
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after {count} samples",
            bytes.len() as u64 - expected
        )));
    }
    let mut ds = LabeledDataset::new(name, num_classes, shape);
    let mut pos = HEADER_LEN;
    let mut img = vec![S::zero(); per as usize];
    for id in 0..count {
        let label = u32_at(bytes, pos) as usize;
        pos += 4;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        for v in img.iter_mut() {
            *v = S::of(f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes")));
            pos += 8;
        }
        ds.push(&img, label, id)?;
    }
    Ok(ds)
}

pub fn load_dataset<S: Scalar>(path: impl AsRef<Path>) -> Result<LabeledDataset<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_dataset(&bytes, &name)
}
