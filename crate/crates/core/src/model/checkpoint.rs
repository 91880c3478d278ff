//! Binary checkpoint layout for networks and decoupled models.
//!
//! Network blob (all integers little-endian):
//!
//! ```text
//! magic    "DCNW"
//! version  u32 = 1
//! digest   [u8; 8]   architecture digest (see `layers_digest`)
//! count    u32       number of parameter tensors
//! per tensor:
//!   ndim   u32
//!   dims   u32 × ndim
//!   values f64 × prod(dims)
//! ```
//!
//! Decoupled blob: magic `"DCDM"`, version u32, layout digest `[u8; 8]`,
//! part count u32 (= 4), then four network blobs in the order encoder,
//! cloud, co, control.
//!
//! The byte length of these blobs is what the simulator charges for a model
//! message.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DecoupledModel;
use crate::nn::Network;
use crate::scalar::Scalar;

pub const NETWORK_MAGIC: &[u8; 4] = b"DCNW";
pub const DECOUPLED_MAGIC: &[u8; 4] = b"DCDM";
pub const VERSION: u32 = 1;

/// Exact encoded size of a network without encoding it.
pub fn network_len<S: Scalar>(net: &Network<S>) -> usize {
    20 + net
        .param_shapes()
        .iter()
        .map(|s| 4 + 4 * s.len() + 8 * s.iter().product::<usize>())
        .sum::<usize>()
}

pub fn encode_network<S: Scalar>(net: &Network<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(network_len(net));
    out.extend_from_slice(NETWORK_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&net.digest());
    let params = net.parameters();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

/// Header and parameter shapes of a network blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkHeader {
    pub version: u32,
    pub digest: [u8; 8],
    pub shapes: Vec<Vec<usize>>,
}

impl NetworkHeader {
    pub fn param_count(&self) -> usize {
        self.shapes.iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                expected: (self.pos + n) as u64,
                found: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(u32, [u8; 8])> {
        let m = self.take(4)?;
        if m != magic {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::MalformedHeader(format!("unsupported version {version}")));
        }
        let digest = self.take(8)?.try_into().expect("8 bytes");
        Ok((version, digest))
    }

    /// Parse one network blob, returning its header and raw values.
    fn network(&mut self) -> Result<(NetworkHeader, Vec<f64>)> {
        let (version, digest) = self.header(NETWORK_MAGIC)?;
        let count = self.u32()? as usize;
        let mut shapes = Vec::with_capacity(count.min(1024));
        let mut values = Vec::new();
        for _ in 0..count {
            let ndim = self.u32()? as usize;
            if ndim > 8 {
                return Err(Error::MalformedHeader(format!("tensor rank {ndim} too large")));
            }
            let shape = (0..ndim)
                .map(|_| self.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if self.buf.len() - self.pos < 8 * n {
                return Err(Error::Truncated {
                    expected: (self.pos + 8 * n) as u64,
                    found: self.buf.len() as u64,
                });
            }
            for _ in 0..n {
                values.push(self.f64()?);
            }
            shapes.push(shape);
        }
        Ok((
            NetworkHeader {
                version,
                digest,
                shapes,
            },
            values,
        ))
    }
}

pub fn read_network_header(bytes: &[u8]) -> Result<NetworkHeader> {
    let mut r = Reader { buf: bytes, pos: 0 };
    Ok(r.network()?.0)
}

/// Load parameter values into an already-built network of the same
/// architecture.
pub fn decode_network_into<S: Scalar>(net: &mut Network<S>, bytes: &[u8]) -> Result<()> {
    let mut r = Reader { buf: bytes, pos: 0 };
    load_from_reader(net, &mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after network blob",
            bytes.len() - r.pos
        )));
    }
    Ok(())
}

fn load_from_reader<S: Scalar>(net: &mut Network<S>, r: &mut Reader<'_>) -> Result<()> {
    let (header, values) = r.network()?;
    if header.digest != net.digest() {
        return Err(Error::DigestMismatch);
    }
    if header.shapes != net.param_shapes() {
        return Err(Error::ShapeMismatch {
            op: "checkpoint",
            expected: net.param_shapes().concat(),
            got: header.shapes.concat(),
        });
    }
    let values: Vec<S> = values.into_iter().map(S::of).collect();
    net.set_flat_values(&values)
}

pub fn decoupled_len<S: Scalar>(dm: &DecoupledModel<S>) -> usize {
    20 + [&dm.encoder, &dm.cloud, &dm.co, &dm.control]
        .iter()
        .map(|n| network_len(n))
        .sum::<usize>()
}

pub fn encode_decoupled<S: Scalar>(dm: &DecoupledModel<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(decoupled_len(dm));
    out.extend_from_slice(DECOUPLED_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dm.layout.digest());
    out.extend_from_slice(&4u32.to_le_bytes());
    for part in [&dm.encoder, &dm.cloud, &dm.co, &dm.control] {
        out.extend_from_slice(&encode_network(part));
    }
    out
}

pub fn decode_decoupled_into<S: Scalar>(dm: &mut DecoupledModel<S>, bytes: &[u8]) -> Result<()> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (_, digest) = r.header(DECOUPLED_MAGIC)?;
    if digest != dm.layout.digest() {
        return Err(Error::DigestMismatch);
    }
    let parts = r.u32()?;
    if parts != 4 {
        return Err(Error::MalformedHeader(format!("expected 4 parts, found {parts}")));
    }
    let mut staged = dm.clone();
    for part in [
        &mut staged.encoder,
        &mut staged.cloud,
        &mut staged.co,
        &mut staged.control,
    ] {
        load_from_reader(part, &mut r)?;
    }
    *dm = staged;
    Ok(())
}

/// Parsed summary of any checkpoint file, for `inspect`.
#[derive(Debug, Clone)]
pub enum CheckpointSummary {
    Network(NetworkHeader),
    Decoupled {
        digest: [u8; 8],
        parts: Vec<NetworkHeader>,
    },
}

pub fn summarize(bytes: &[u8]) -> Result<CheckpointSummary> {
    let mut r = Reader { buf: bytes, pos: 0 };
    match bytes.get(..4) {
        Some(m) if m == DECOUPLED_MAGIC => {
            let (_, digest) = r.header(DECOUPLED_MAGIC)?;
            let n = r.u32()?;
            let parts = (0..n).map(|_| r.network().map(|p| p.0)).collect::<Result<_>>()?;
            Ok(CheckpointSummary::Decoupled { digest, parts })
        }
        _ => Ok(CheckpointSummary::Network(r.network()?.0)),
    }
}

pub fn save_network<S: Scalar>(net: &Network<S>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_network(net))?;
    Ok(())
}

pub fn load_network_into<S: Scalar>(net: &mut Network<S>, path: impl AsRef<Path>) -> Result<()> {
    decode_network_into(net, &std::fs::read(path)?)
}

pub fn save_decoupled<S: Scalar>(dm: &DecoupledModel<S>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_decoupled(dm))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, split_model, ModelSpec, SplitConfig};

    #[test]
    fn network_round_trip_and_length() {
        let spec = ModelSpec::desk_base(8, 4, 8, 3);
        let a = build_model::<f64>(&spec, 1).unwrap();
        let mut b = build_model::<f64>(&spec, 2).unwrap();
        let bytes = encode_network(&a);
        assert_eq!(bytes.len(), network_len(&a));
        decode_network_into(&mut b, &bytes).unwrap();
        assert_eq!(a.flat_values(), b.flat_values());
        let h = read_network_header(&bytes).unwrap();
        assert_eq!(h.param_count(), a.param_count());
    }

    #[test]
    fn rejects_truncation_and_wrong_architecture() {
        let spec = ModelSpec::desk_base(8, 4, 8, 3);
        let a = build_model::<f64>(&spec, 1).unwrap();
        let bytes = encode_network(&a);
        let mut b = a.clone();
        assert!(matches!(
            decode_network_into(&mut b, &bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_network_into(&mut b, b"XXXX\x01\0\0\0"),
            Err(Error::MalformedHeader(_))
        ));
        let other = build_model::<f64>(&ModelSpec::desk_base(8, 4, 8, 4), 1).unwrap();
        let mut other = other;
        assert!(matches!(
            decode_network_into(&mut other, &bytes),
            Err(Error::DigestMismatch)
        ));
    }

    #[test]
    fn decoupled_round_trip() {
        let spec = ModelSpec::desk_base(8, 4, 16, 3);
        let a = split_model::<f64>(&spec, &SplitConfig::default(), 1).unwrap();
        let mut b = split_model::<f64>(&spec, &SplitConfig::default(), 2).unwrap();
        let bytes = encode_decoupled(&a);
        assert_eq!(bytes.len(), decoupled_len(&a));
        decode_decoupled_into(&mut b, &bytes).unwrap();
        assert_eq!(a.co.flat_values(), b.co.flat_values());
        assert_eq!(a.cloud.flat_values(), b.cloud.flat_values());
        match summarize(&bytes).unwrap() {
            CheckpointSummary::Decoupled { parts, .. } => assert_eq!(parts.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
