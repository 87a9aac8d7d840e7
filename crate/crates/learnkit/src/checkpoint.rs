//! Versioned binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! | offset      | size  | content                                         |
//! |-------------|-------|-------------------------------------------------|
//! | 0           | 8     | magic `HNAVCKPT`                                |
//! | 8           | 4     | `u32` format version (currently 1)              |
//! | 12          | 4     | `u32` manifest length `M` in bytes              |
//! | 16          | M     | UTF-8 manifest text                             |
//! | 16+M        | 8     | `u64` float count `F`                           |
//! | 24+M        | 4F    | `f32` parameter block                           |
//! | 24+M+4F     | 4     | `u32` CRC-32 (IEEE) of every preceding byte     |
//!
//! The manifest is one entry per line. `key=value` lines carry metadata.
//! Lines of the form
//!
//! ```text
//! block <name> net <s0>x<s1>x...x<sn> <act1>,...,<actn> <count>
//! block <name> raw <count>
//! ```
//!
//! describe consecutive slices of the float block in order. `net` blocks use
//! the [`DenseNet`] parameter layout: per layer an `out x in` row-major
//! weight matrix followed by `out` biases.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::CheckpointError;
use crate::net::{param_count, Activation, DenseNet};

pub const MAGIC: &[u8; 8] = b"HNAVCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockShape {
    Net { sizes: Vec<usize>, activations: Vec<Activation> },
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: BlockShape,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    meta: Vec<(String, String)>,
    blocks: Vec<Block>,
}

type CkResult<T> = std::result::Result<T, CheckpointError>;

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(['=', '\n']) && !key.starts_with("block "), "invalid manifest key {key:?}");
        assert!(!value.contains('\n'), "manifest value may not span lines");
        if let Some(slot) = self.meta.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.meta.push((key.to_string(), value));
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> CkResult<&str> {
        self.meta(key).ok_or_else(|| CheckpointError::Manifest(format!("missing key `{key}`")))
    }

    pub fn parse_meta<T: std::str::FromStr>(&self, key: &str) -> CkResult<T> {
        let raw = self.require_meta(key)?;
        raw.parse().map_err(|_| CheckpointError::Manifest(format!("bad value for `{key}`: {raw:?}")))
    }

    pub fn meta_entries(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn push_net(&mut self, name: &str, net: &DenseNet<f32>) {
        self.blocks.push(Block {
            name: name.to_string(),
            shape: BlockShape::Net { sizes: net.sizes().to_vec(), activations: net.activations().to_vec() },
            data: net.params().to_vec(),
        });
    }

    pub fn push_raw(&mut self, name: &str, data: Vec<f32>) {
        self.blocks.push(Block { name: name.to_string(), shape: BlockShape::Raw, data });
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> CkResult<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| CheckpointError::Manifest(format!("missing block `{name}`")))
    }

    pub fn net(&self, name: &str) -> CkResult<DenseNet<f32>> {
        let block = self.block(name)?;
        match &block.shape {
            BlockShape::Net { sizes, activations } => DenseNet::from_params(sizes, activations, block.data.clone())
                .map_err(|e| CheckpointError::Corrupt(format!("block `{name}`: {e}"))),
            BlockShape::Raw => Err(CheckpointError::Manifest(format!("block `{name}` is not a network"))),
        }
    }

    pub fn raw(&self, name: &str) -> CkResult<&[f32]> {
        Ok(&self.block(name)?.data)
    }

    fn manifest_text(&self) -> String {
        let mut text = String::new();
        for (k, v) in &self.meta {
            text.push_str(&format!("{k}={v}\n"));
        }
        for b in &self.blocks {
            match &b.shape {
                BlockShape::Net { sizes, activations } => {
                    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
                    let acts: Vec<&str> = activations.iter().map(|a| a.as_str()).collect();
                    text.push_str(&format!(
                        "block {} net {} {} {}\n",
                        b.name,
                        sizes.join("x"),
                        acts.join(","),
                        b.data.len()
                    ));
                }
                BlockShape::Raw => text.push_str(&format!("block {} raw {}\n", b.name, b.data.len())),
            }
        }
        text
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = self.manifest_text();
        let floats: usize = self.blocks.iter().map(|b| b.data.len()).sum();
        let mut out = Vec::with_capacity(28 + manifest.len() + 4 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(floats as u64).to_le_bytes());
        for b in &self.blocks {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CkResult<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut cur = Cursor { bytes, at: 8 };
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: VERSION });
        }
        let mlen = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let manifest = std::str::from_utf8(cur.take(mlen)?)
            .map_err(|_| CheckpointError::Corrupt("manifest is not UTF-8".into()))?
            .to_string();
        let floats = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let payload_len = floats
            .checked_mul(4)
            .ok_or_else(|| CheckpointError::Corrupt("float count overflow".into()))?;
        let payload = cur.take(payload_len)?;
        let body_end = cur.at;
        let crc = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if cur.at != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - cur.at)));
        }
        if crc32fast::hash(&bytes[..body_end]) != crc {
            return Err(CheckpointError::Corrupt("checksum mismatch".into()));
        }
        let values: Vec<f32> =
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();

        let mut ck = Checkpoint::new();
        let mut offset = 0usize;
        for line in manifest.lines().filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("block ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let bad = || CheckpointError::Manifest(format!("bad block line {line:?}"));
                let (name, shape, count) = match parts.as_slice() {
                    [name, "raw", count] => (*name, BlockShape::Raw, *count),
                    [name, "net", sizes, acts, count] => {
                        let sizes: Vec<usize> =
                            sizes.split('x').map(|s| s.parse().map_err(|_| bad())).collect::<CkResult<_>>()?;
                        let activations: Vec<Activation> =
                            acts.split(',').map(|a| Activation::parse(a).ok_or_else(bad)).collect::<CkResult<_>>()?;
                        (*name, BlockShape::Net { sizes, activations }, *count)
                    }
                    _ => return Err(bad()),
                };
                let count: usize = count.parse().map_err(|_| bad())?;
                if let BlockShape::Net { sizes, .. } = &shape {
                    if param_count(sizes) != count {
                        return Err(CheckpointError::Manifest(format!("block `{name}` size manifest disagrees with count")));
                    }
                }
                if offset + count > values.len() {
                    return Err(CheckpointError::Corrupt(format!("block `{name}` runs past the parameter block")));
                }
                ck.blocks.push(Block { name: name.to_string(), shape, data: values[offset..offset + count].to_vec() });
                offset += count;
            } else if let Some((k, v)) = line.split_once('=') {
                ck.meta.push((k.to_string(), v.to_string()));
            } else {
                return Err(CheckpointError::Manifest(format!("unparseable line {line:?}")));
            }
        }
        if offset != values.len() {
            return Err(CheckpointError::Corrupt("parameter block longer than manifest".into()));
        }
        Ok(ck)
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> CkResult<()> {
        let path = path.as_ref();
        let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&self.to_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> CkResult<Self> {
        let path = path.as_ref();
        let bytes =
            fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CkResult<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(CheckpointError::Corrupt(format!(
                "truncated: needed {n} bytes at offset {}, {} available",
                self.at,
                self.bytes.len() - self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
}
