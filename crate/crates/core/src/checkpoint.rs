//! Single-file model archive.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, JSON
//! header, `u64` float count, little-endian `f32` state, SHA-256 of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::Normalization;
use crate::corpus::{SignClass, Vocabulary};
use crate::error::{CheckpointError, Result};
use crate::model::{Model, ModelInfo};
use crate::nn::{Architecture, Module};

const MAGIC: &[u8; 8] = b"CUNEOCKP";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub classes: Vec<SignClass>,
    pub fingerprint: String,
    pub normalization: Normalization,
    pub info: ModelInfo,
    /// Echo of the training configuration that produced the weights.
    pub config: serde_json::Value,
    pub param_count: usize,
    pub state_lens: Vec<usize>,
}

pub fn save_checkpoint(model: &Model, config: serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let mut state_lens = Vec::new();
    let mut floats = Vec::new();
    model.net.visit_state(&mut |s| {
        state_lens.push(s.len());
        floats.extend_from_slice(s);
    });
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        architecture: model.architecture(),
        classes: model.vocabulary.classes().to_vec(),
        fingerprint: model.vocabulary.fingerprint(),
        normalization: model.normalization,
        info: model.info.clone(),
        config,
        param_count: floats.len(),
        state_lens,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(header_bytes.len() + floats.len() * 4 + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    buf.extend_from_slice(&(floats.len() as u64).to_le_bytes());
    for v in &floats {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CheckpointError::Io)?;
    }
    fs::write(path, buf).map_err(CheckpointError::Io)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads and verifies a checkpoint without building the network.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<f32>)> {
    let bytes = fs::read(path).map_err(CheckpointError::Io)?;
    Ok(parse(&bytes)?)
}

fn parse(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<f32>), CheckpointError> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let header_len = r.u64()? as usize;
    let header: CheckpointHeader =
        serde_json::from_slice(r.take(header_len)?).map_err(|e| corrupt(format!("header: {e}")))?;
    let n = r.u64()? as usize;
    let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("float count overflow"))?)?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after state"));
    }
    let floats = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, floats))
}

/// Loads a checkpoint. With `expected` set, the stored vocabulary fingerprint
/// must match it.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&Vocabulary>) -> Result<Model> {
    let (header, floats) = read_checkpoint(path)?;
    let vocabulary = Vocabulary::with_codepoints(
        header
            .classes
            .iter()
            .map(|c| (c.name.clone(), c.unicode_codepoint.clone())),
    );
    if vocabulary.fingerprint() != header.fingerprint {
        return Err(corrupt("stored fingerprint does not match stored classes").into());
    }
    if let Some(v) = expected {
        if v.fingerprint() != header.fingerprint {
            return Err(CheckpointError::FingerprintMismatch {
                checkpoint: header.fingerprint,
                expected: v.fingerprint(),
            }
            .into());
        }
    }
    let mut model = Model::new(header.architecture, vocabulary, header.normalization, 0);
    model.info = header.info;
    fill_state(&mut model, &header.state_lens, &floats)?;
    Ok(model)
}

/// Copies the backbone weights of a checkpoint into `model`, leaving its head
/// untouched. Architectures must agree.
pub fn load_backbone(model: &mut Model, path: impl AsRef<Path>) -> Result<()> {
    let (header, floats) = read_checkpoint(path)?;
    if header.architecture != model.architecture() {
        return Err(crate::Error::Config(format!(
            "pretrained weights are for {:?}, model is {:?}",
            header.architecture,
            model.architecture()
        )));
    }
    let mut lens = Vec::new();
    model.net.visit_backbone_state(&mut |s| lens.push(s.len()));
    let backbone_len: usize = lens.iter().sum();
    if header.state_lens.len() < lens.len() || header.state_lens[..lens.len()] != lens[..] {
        return Err(corrupt("backbone layout differs from the model").into());
    }
    let mut off = 0;
    model.net.visit_backbone_state_mut(&mut |s| {
        s.copy_from_slice(&floats[off..off + s.len()]);
        off += s.len();
    });
    debug_assert_eq!(off, backbone_len);
    Ok(())
}

fn fill_state(
    model: &mut Model,
    lens: &[usize],
    floats: &[f32],
) -> Result<(), CheckpointError> {
    let mut actual = Vec::new();
    model.net.visit_state(&mut |s| actual.push(s.len()));
    if actual != lens || lens.iter().sum::<usize>() != floats.len() {
        return Err(corrupt("parameter layout does not match the architecture"));
    }
    let mut off = 0;
    model.net.visit_state_mut(&mut |s| {
        s.copy_from_slice(&floats[off..off + s.len()]);
        off += s.len();
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn model(names: &[&str]) -> Model {
        Model::new(
            Architecture::Compact,
            Vocabulary::new(names.iter().copied()),
            Normalization::default(),
            4,
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model(&["A", "B"]);
        save_checkpoint(&m, serde_json::json!({"k": 1}), &path).unwrap();
        let back = load_checkpoint(&path, Some(&m.vocabulary)).unwrap();
        let mut a = Vec::new();
        m.net.visit_state(&mut |s| a.extend_from_slice(s));
        let mut b = Vec::new();
        back.net.visit_state(&mut |s| b.extend_from_slice(s));
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let probe = Tensor::from_vec(1, 3, 224, 224, vec![0.25; 3 * 224 * 224]).unwrap();
        assert_eq!(
            m.predict_logits(&probe).unwrap().data,
            back.predict_logits(&probe).unwrap().data
        );
    }

    #[test]
    fn other_vocabulary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(&["A", "B"]), serde_json::Value::Null, &path).unwrap();
        let err = load_checkpoint(&path, Some(&Vocabulary::new(["A", "C"]))).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn truncation_and_bit_flips_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(&["A"]), serde_json::Value::Null, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            fs::write(&path, &bytes[..cut]).unwrap();
            let err = load_checkpoint(&path, None).unwrap_err();
            assert!(
                matches!(err, crate::Error::Checkpoint(CheckpointError::Corrupt(_))),
                "cut {cut}: {err}"
            );
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x10;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(
            load_checkpoint(&path, None).unwrap_err(),
            crate::Error::Checkpoint(CheckpointError::Corrupt(_))
        ));
    }

    #[test]
    fn backbone_transfer_keeps_head() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let src = model(&["A", "B"]);
        save_checkpoint(&src, serde_json::Value::Null, &path).unwrap();
        let mut dst = Model::new(
            Architecture::Compact,
            Vocabulary::new(["X", "Y", "Z"]),
            Normalization::default(),
            9,
        );
        let head_before = dst.net.head.weight.value.clone();
        load_backbone(&mut dst, &path).unwrap();
        assert_eq!(dst.net.head.weight.value, head_before);
        let mut a = Vec::new();
        src.net.visit_backbone_state(&mut |s| a.extend_from_slice(s));
        let mut b = Vec::new();
        dst.net.visit_backbone_state(&mut |s| b.extend_from_slice(s));
        assert_eq!(a, b);
    }
}
