//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "LAPW"
//! version u32      currently 1
//! count   u32      number of named tensors
//! per tensor:
//!   name_len u16, name UTF-8,
//!   dtype    u8   (0 = f32),
//!   ndim     u8   (always 4 here),
//!   dims     ndim x u32,
//!   payload  product(dims) x f32
//! snapshot u32 length + UTF-8 text   (net config plus a [state] section
//!                                     with epoch and rng position)
//! ```
//!
//! Values are stored at f32 precision; save -> load -> save round-trips
//! byte-identically because the in-memory copy after a load is exactly the
//! f32 value widened to f64.

use std::fmt;
use std::fs;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lap_core::net::{build_network, LapNet, NetworkConfig};
use lap_core::tensor::Shape;

pub const MAGIC: [u8; 4] = *b"LAPW";
pub const VERSION: u32 = 1;

/// Decode/apply failures, each with its own variant so callers can tell a
/// bad magic from a truncated file from a shape disagreement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    BadName,
    BadDtype(u8),
    BadRank(u8),
    BadSnapshot(String),
    TensorCountMismatch { header: usize, found: usize },
    ShapeMismatch { name: String },
    MissingTensor { name: String },
    UnknownTensor { name: String },
    Io(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "bad checkpoint magic (expected LAPW)"),
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint version {v}")
            }
            CheckpointError::Truncated => write!(f, "checkpoint file is truncated"),
            CheckpointError::BadName => write!(f, "tensor name is not valid UTF-8"),
            CheckpointError::BadDtype(d) => write!(f, "unknown dtype code {d}"),
            CheckpointError::BadRank(r) => write!(f, "unsupported tensor rank {r}"),
            CheckpointError::BadSnapshot(msg) => write!(f, "bad config snapshot: {msg}"),
            CheckpointError::TensorCountMismatch { header, found } => {
                write!(f, "header promises {header} tensors, file carries {found}")
            }
            CheckpointError::ShapeMismatch { name } => {
                write!(f, "tensor `{name}` disagrees with the network shape")
            }
            CheckpointError::MissingTensor { name } => {
                write!(f, "network tensor `{name}` missing from checkpoint")
            }
            CheckpointError::UnknownTensor { name } => {
                write!(f, "checkpoint tensor `{name}` unknown to the network")
            }
            CheckpointError::Io(msg) => write!(f, "checkpoint i/o: {msg}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: [u32; 4],
    pub data: Vec<f32>,
}

/// Serialized training state: every parameter and buffer of the network at
/// f32, the network config text, the epoch count, and the shuffle rng
/// position.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub net_config_text: String,
    pub epoch: u32,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub rng_stream: u64,
}

impl Checkpoint {
    /// Captures a network (visit order fixes the tensor order) and the
    /// shuffle rng position.
    pub fn capture(net: &LapNet, epoch: u32, rng: &ChaCha8Rng) -> Checkpoint {
        let mut tensors = Vec::new();
        net.visit(&mut |name, t, _| {
            let s = t.shape();
            tensors.push(NamedTensor {
                name: name.to_string(),
                dims: [s.n as u32, s.c as u32, s.h as u32, s.w as u32],
                data: t.data().iter().map(|&v| v as f32).collect(),
            });
        });
        Checkpoint {
            tensors,
            net_config_text: net.config.to_text(),
            epoch,
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            rng_stream: rng.get_stream(),
        }
    }

    /// Restores the captured shuffle rng.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    pub fn net_config(&self) -> Result<NetworkConfig, CheckpointError> {
        NetworkConfig::from_text(&self.net_config_text)
            .map_err(|e| CheckpointError::BadSnapshot(e.to_string()))
    }

    /// Builds the network the snapshot describes and loads every tensor.
    pub fn instantiate(&self) -> Result<LapNet, CheckpointError> {
        let cfg = self.net_config()?;
        let mut net =
            build_network(&cfg, 0).map_err(|e| CheckpointError::BadSnapshot(e.to_string()))?;
        self.apply_to(&mut net)?;
        Ok(net)
    }

    /// Writes the tensors into an already-built network; names and shapes
    /// must agree exactly.
    pub fn apply_to(&self, net: &mut LapNet) -> Result<(), CheckpointError> {
        use std::collections::BTreeMap;
        let mut by_name: BTreeMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut error: Option<CheckpointError> = None;
        net.visit_mut(&mut |name, tensor, _| {
            if error.is_some() {
                return;
            }
            match by_name.remove(name) {
                None => {
                    error = Some(CheckpointError::MissingTensor {
                        name: name.to_string(),
                    })
                }
                Some(src) => {
                    let s = tensor.shape();
                    let expect = [s.n as u32, s.c as u32, s.h as u32, s.w as u32];
                    if src.dims != expect || src.data.len() != tensor.len() {
                        error = Some(CheckpointError::ShapeMismatch {
                            name: name.to_string(),
                        });
                        return;
                    }
                    for (dst, &v) in tensor.data_mut().iter_mut().zip(&src.data) {
                        *dst = v as f64;
                    }
                }
            }
        });
        if let Some(e) = error {
            return Err(e);
        }
        if let Some((name, _)) = by_name.into_iter().next() {
            return Err(CheckpointError::UnknownTensor {
                name: name.to_string(),
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(0); // dtype f32
            out.push(4); // ndim
            for d in t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let snapshot = self.snapshot_text();
        out.extend_from_slice(&(snapshot.len() as u32).to_le_bytes());
        out.extend_from_slice(snapshot.as_bytes());
        out
    }

    fn snapshot_text(&self) -> String {
        let mut s = String::from("[net]\n");
        s.push_str(&self.net_config_text);
        s.push_str("[state]\n");
        s.push_str(&format!("epoch = {}\n", self.epoch));
        s.push_str(&format!("rng_seed = {}\n", hex32(&self.rng_seed)));
        s.push_str(&format!("rng_word_pos = {}\n", self.rng_word_pos));
        s.push_str(&format!("rng_stream = {}\n", self.rng_stream));
        s
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for i in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::BadName)?
                .to_string();
            let dtype = r.u8()?;
            if dtype != 0 {
                return Err(CheckpointError::BadDtype(dtype));
            }
            let ndim = r.u8()?;
            if ndim != 4 {
                return Err(CheckpointError::BadRank(ndim));
            }
            let mut dims = [0u32; 4];
            for d in dims.iter_mut() {
                *d = r.u32()?;
            }
            let len = dims.iter().map(|&d| d as usize).product::<usize>();
            let raw = r.take(len * 4).map_err(|_| {
                // distinguish a short payload from a short header
                let _ = i;
                CheckpointError::Truncated
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        let snap_len = r.u32()? as usize;
        let snapshot = std::str::from_utf8(r.take(snap_len)?)
            .map_err(|_| CheckpointError::BadSnapshot("snapshot is not UTF-8".into()))?
            .to_string();
        if r.pos != bytes.len() {
            return Err(CheckpointError::TensorCountMismatch {
                header: count,
                found: count + 1, // trailing bytes imply more data than promised
            });
        }
        let (net_config_text, epoch, rng_seed, rng_word_pos, rng_stream) =
            parse_snapshot(&snapshot)?;
        Ok(Checkpoint {
            tensors,
            net_config_text,
            epoch,
            rng_seed,
            rng_word_pos,
            rng_stream,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.encode()).map_err(|e| CheckpointError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io(e.to_string()))?;
        Checkpoint::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn hex32(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_snapshot(
    text: &str,
) -> Result<(String, u32, [u8; 32], u128, u64), CheckpointError> {
    let state_at = text
        .find("[state]\n")
        .ok_or_else(|| CheckpointError::BadSnapshot("missing [state] section".into()))?;
    let net_part = text
        .strip_prefix("[net]\n")
        .ok_or_else(|| CheckpointError::BadSnapshot("missing [net] section".into()))?;
    let net_config_text = net_part[..state_at - "[net]\n".len()].to_string();

    let mut epoch = None;
    let mut seed = None;
    let mut word_pos = None;
    let mut stream = None;
    for line in text[state_at + "[state]\n".len()..].lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        match k {
            "epoch" => epoch = v.parse::<u32>().ok(),
            "rng_seed" => {
                if v.len() == 64 {
                    let mut s = [0u8; 32];
                    let ok = (0..32).all(|i| {
                        u8::from_str_radix(&v[2 * i..2 * i + 2], 16)
                            .map(|b| s[i] = b)
                            .is_ok()
                    });
                    if ok {
                        seed = Some(s);
                    }
                }
            }
            "rng_word_pos" => word_pos = v.parse::<u128>().ok(),
            "rng_stream" => stream = v.parse::<u64>().ok(),
            _ => {}
        }
    }
    match (epoch, seed, word_pos, stream) {
        (Some(e), Some(s), Some(w), Some(st)) => Ok((net_config_text, e, s, w, st)),
        _ => Err(CheckpointError::BadSnapshot(
            "incomplete [state] section".into(),
        )),
    }
}

/// Shape helper for tests.
pub fn dims_to_shape(d: [u32; 4]) -> Shape {
    Shape::new(d[0] as usize, d[1] as usize, d[2] as usize, d[3] as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lap_core::net::{build_lap_config, Preset};

    fn toy_checkpoint() -> Checkpoint {
        let net = build_network(&build_lap_config(Preset::Toy), 3).unwrap();
        let rng = ChaCha8Rng::from_seed([7u8; 32]);
        Checkpoint::capture(&net, 5, &rng)
    }

    #[test]
    fn encode_decode_round_trip_bitwise() {
        let ck = toy_checkpoint();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ck = toy_checkpoint();
        ck.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn instantiate_restores_f32_values() {
        let ck = toy_checkpoint();
        let net = ck.instantiate().unwrap();
        let again = Checkpoint::capture(&net, ck.epoch, &ck.rng());
        assert_eq!(again.tensors, ck.tensors);
    }

    #[test]
    fn corrupted_magic_is_a_distinct_error() {
        let mut bytes = toy_checkpoint().encode();
        bytes[0] = b'X';
        assert_eq!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic));
    }

    #[test]
    fn truncation_is_a_distinct_error() {
        let bytes = toy_checkpoint().encode();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(
            Checkpoint::decode(cut),
            Err(CheckpointError::Truncated)
        ));
    }

    #[test]
    fn tensor_count_mismatch_detected() {
        let ck = toy_checkpoint();
        let mut bytes = ck.encode();
        // lower the advertised tensor count; the parser will then treat
        // tensor data as the snapshot and trailing bytes remain
        let count = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
        bytes[8..12].copy_from_slice(&(count - 1).to_le_bytes());
        let err = Checkpoint::decode(&bytes).unwrap_err();
        assert!(
            matches!(
                err,
                CheckpointError::TensorCountMismatch { .. }
                    | CheckpointError::BadSnapshot(_)
                    | CheckpointError::Truncated
            ),
            "got {err:?}"
        );
        assert_ne!(err, CheckpointError::BadMagic);
    }

    #[test]
    fn shape_disagreement_reported() {
        let ck = toy_checkpoint();
        let mut other_cfg = build_lap_config(Preset::Toy);
        other_cfg.channels = 32;
        let mut net = build_network(&other_cfg, 0).unwrap();
        let err = ck.apply_to(&mut net).unwrap_err();
        assert!(matches!(err, CheckpointError::ShapeMismatch { .. }));
    }

    #[test]
    fn rng_position_round_trips() {
        let net = build_network(&build_lap_config(Preset::Toy), 3).unwrap();
        let mut rng = ChaCha8Rng::from_seed([9u8; 32]);
        rng.set_stream(5);
        use rand_chacha::rand_core::RngCore;
        for _ in 0..13 {
            rng.next_u64();
        }
        let ck = Checkpoint::capture(&net, 1, &rng);
        let decoded = Checkpoint::decode(&ck.encode()).unwrap();
        let mut restored = decoded.rng();
        let mut original = rng;
        for _ in 0..8 {
            assert_eq!(restored.next_u64(), original.next_u64());
        }
    }
}
