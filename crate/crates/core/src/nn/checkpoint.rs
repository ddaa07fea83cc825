//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HWY1"                      magic
//! u32                         layer count
//! u8 body kind, 3 × u8 (0)    0 plain, 1 highway
//! per layer:
//!   u8  role                  0 first, 1 body, 2 output
//!   u8  kind                  0 plain, 1 highway
//!   u8  activation            0 sigmoid, 1 tanh, 2 relu, 3 identity
//!   u8  reserved (0)
//!   u32 in_dim, u32 out_dim
//!   f64 blocks, row-major:    plain   W (in×out), b (out)
//!                             highway W_H, b_H, W_T, b_T
//! ```

use std::path::Path;

use super::layer::{HighwayLayer, PlainLayer};
use super::network::{Body, Network};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::{Activation, Matrix};

pub const MAGIC: &[u8; 4] = b"HWY1";

const ROLE_FIRST: u8 = 0;
const ROLE_BODY: u8 = 1;
const ROLE_OUTPUT: u8 = 2;
const KIND_PLAIN: u8 = 0;
const KIND_HIGHWAY: u8 = 1;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Sigmoid => 0,
        Activation::Tanh => 1,
        Activation::Relu => 2,
        Activation::Identity => 3,
    }
}

fn activation_from_code(c: u8) -> Result<Activation> {
    Ok(match c {
        0 => Activation::Sigmoid,
        1 => Activation::Tanh,
        2 => Activation::Relu,
        3 => Activation::Identity,
        other => return Err(Error::Checkpoint(format!("unknown activation code {other}"))),
    })
}

fn put_header(buf: &mut Vec<u8>, role: u8, kind: u8, act: Activation, in_dim: usize, out_dim: usize) {
    buf.extend_from_slice(&[role, kind, activation_code(act), 0]);
    buf.extend_from_slice(&(in_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(out_dim as u32).to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_plain(buf: &mut Vec<u8>, role: u8, l: &PlainLayer) {
    put_header(buf, role, KIND_PLAIN, l.activation, l.in_dim(), l.out_dim());
    put_matrix(buf, &l.weight);
    put_matrix(buf, &l.bias);
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * net.param_count() + 12 * net.depth());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(net.depth() as u32).to_le_bytes());
    let body_kind = match net.body {
        Body::Plain(_) => KIND_PLAIN,
        Body::Highway(_) => KIND_HIGHWAY,
    };
    buf.extend_from_slice(&[body_kind, 0, 0, 0]);
    put_plain(&mut buf, ROLE_FIRST, &net.first);
    match &net.body {
        Body::Plain(v) => v.iter().for_each(|l| put_plain(&mut buf, ROLE_BODY, l)),
        Body::Highway(v) => {
            for l in v {
                put_header(&mut buf, ROLE_BODY, KIND_HIGHWAY, l.activation, l.width(), l.width());
                for m in [&l.w_h, &l.b_h, &l.w_t, &l.b_t] {
                    put_matrix(&mut buf, m);
                }
            }
        }
    }
    put_plain(&mut buf, ROLE_OUTPUT, &net.output);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint("dimension overflow".into()))?;
        let raw = self.take(n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

enum Decoded {
    Plain(PlainLayer),
    Highway(HighwayLayer),
}

pub fn decode(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let count = r.u32()?;
    if count < 2 {
        return Err(Error::Checkpoint(format!("{count} layers, need at least 2")));
    }
    let body_kind = r.u8()?;
    r.take(3)?;
    if body_kind > KIND_HIGHWAY {
        return Err(Error::Checkpoint(format!("unknown body kind {body_kind}")));
    }
    let mut layers = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let role = r.u8()?;
        let kind = r.u8()?;
        let act = activation_from_code(r.u8()?)?;
        let _reserved = r.u8()?;
        let in_dim = r.u32()?;
        let out_dim = r.u32()?;
        let expected_role = match i {
            0 => ROLE_FIRST,
            i if i + 1 == count => ROLE_OUTPUT,
            _ => ROLE_BODY,
        };
        if role != expected_role {
            return Err(Error::Checkpoint(format!("layer {i} has role {role}, expected {expected_role}")));
        }
        let layer = match kind {
            k if role == ROLE_BODY && k != body_kind => {
                return Err(Error::Checkpoint(format!("layer {i}: body mixes layer kinds")));
            }
            KIND_PLAIN => {
                let w = r.matrix(in_dim, out_dim)?;
                let b = r.matrix(1, out_dim)?;
                Decoded::Plain(PlainLayer::new(w, b, act)?)
            }
            KIND_HIGHWAY if role == ROLE_BODY && in_dim == out_dim => {
                let d = in_dim;
                let w_h = r.matrix(d, d)?;
                let b_h = r.matrix(1, d)?;
                let w_t = r.matrix(d, d)?;
                let b_t = r.matrix(1, d)?;
                Decoded::Highway(HighwayLayer::new(w_h, b_h, w_t, b_t, act)?)
            }
            other => return Err(Error::Checkpoint(format!("layer {i}: invalid kind {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let output = match layers.pop() {
        Some(Decoded::Plain(l)) => l,
        _ => unreachable!("role checked"),
    };
    let mut iter = layers.into_iter();
    let first = match iter.next() {
        Some(Decoded::Plain(l)) => l,
        _ => unreachable!("role checked"),
    };
    let body = if body_kind == KIND_HIGHWAY {
        Body::Highway(
            iter.map(|l| match l {
                Decoded::Highway(h) => h,
                Decoded::Plain(_) => unreachable!("kind checked"),
            })
            .collect(),
        )
    } else {
        Body::Plain(
            iter.map(|l| match l {
                Decoded::Plain(p) => p,
                Decoded::Highway(_) => unreachable!("kind checked"),
            })
            .collect(),
        )
    };
    Network::new(first, body, output).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    write_atomic(path, &encode(net))
}

pub fn load(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
