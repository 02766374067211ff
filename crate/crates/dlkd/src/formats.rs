//! Binary files: clips (`DLKC`), model checkpoints (`DLKD`) and cached
//! teacher logits (`DLKL`). All integers and floats are little-endian.
//!
//! ```text
//! clip        "DLKC" u16 version, u16 label, u32 C, T, H, W,
//!             u32 id length, id bytes, C*T*H*W f32
//! checkpoint  "DLKD" u16 version, u32 classes, u32 C, T, H, W,
//!             u32 spatial kernel, u32 temporal kernel, u32 block count,
//!             u32 width per block, u64 init seed, u32 parameter count,
//!             then per parameter: u32 name length, name bytes, u32 rank,
//!             u32 extent per axis, f32 values
//! logits      "DLKL" u16 version, u64 teacher fingerprint, u32 entry count,
//!             u32 classes, then per entry: u32 id length, id bytes,
//!             classes f32
//! ```

use std::path::Path;

use dlkd_core::data::VideoClip;
use dlkd_core::model::{Model, ModelConfig, NamedTensor};
use dlkd_core::train::LogitStore;
use dlkd_core::Tensor;

use crate::binio::{read_file, Reader, Writer};
use crate::error::Result;

pub const CLIP_MAGIC: &[u8; 4] = b"DLKC";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DLKD";
pub const LOGITS_MAGIC: &[u8; 4] = b"DLKL";
pub const VERSION: u16 = 1;

/// Bytes before the sample values of a clip file with an id of `id_len` bytes.
pub fn clip_header_len(id_len: usize) -> usize {
    4 + 2 + 2 + 16 + 4 + id_len
}

pub fn encode_clip(clip: &VideoClip) -> Result<Vec<u8>> {
    let mut w = Writer::new(CLIP_MAGIC, VERSION);
    let label = u16::try_from(clip.label())
        .map_err(|_| crate::error::CliError::Usage(format!("label {} does not fit in u16", clip.label())))?;
    w.u16(label);
    for d in clip.dims() {
        w.len_u32(d)?;
    }
    w.str(clip.id())?;
    w.f32s(clip.data());
    Ok(w.into_bytes())
}

pub fn write_clip(clip: &VideoClip, path: &Path) -> Result<()> {
    let bytes = encode_clip(clip)?;
    std::fs::write(path, bytes).map_err(|e| crate::error::CliError::io(path, e))
}

pub fn decode_clip(bytes: &[u8], path: &Path) -> Result<VideoClip> {
    let mut r = Reader::open(bytes, path, CLIP_MAGIC, VERSION)?;
    let label = r.u16()? as usize;
    let dims_at = r.offset();
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let id = r.str()?;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| r.error_at(dims_at, format!("dims {:?} overflow", dims)))?;
    let data = r.f32s(n)?;
    r.finish()?;
    VideoClip::new(dims, data, label, id).map_err(|e| r.error_at(0, e.to_string()))
}

pub fn read_clip(path: &Path) -> Result<VideoClip> {
    decode_clip(&read_file(path)?, path)
}

pub fn encode_checkpoint(model: &Model<f32>) -> Result<Vec<u8>> {
    let c = model.config();
    let mut w = Writer::new(CHECKPOINT_MAGIC, VERSION);
    w.len_u32(c.num_classes)?;
    for d in c.input_dims {
        w.len_u32(d)?;
    }
    w.len_u32(c.spatial_kernel)?;
    w.len_u32(c.temporal_kernel)?;
    w.len_u32(c.widths.len())?;
    for &wd in &c.widths {
        w.len_u32(wd)?;
    }
    w.u64(c.seed);
    w.len_u32(model.params().len())?;
    for p in model.params() {
        w.str(&p.name)?;
        w.len_u32(p.tensor.shape().len())?;
        for &d in p.tensor.shape() {
            w.len_u32(d)?;
        }
        w.f32s(p.tensor.data());
    }
    Ok(w.into_bytes())
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| crate::error::CliError::io(path, e))
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model<f32>> {
    let mut r = Reader::open(bytes, path, CHECKPOINT_MAGIC, VERSION)?;
    let num_classes = r.usize()?;
    let mut input_dims = [0usize; 4];
    for d in &mut input_dims {
        *d = r.usize()?;
    }
    let spatial_kernel = r.usize()?;
    let temporal_kernel = r.usize()?;
    let blocks_at = r.offset();
    let blocks = r.usize()?;
    if blocks > 64 {
        return Err(r.error_at(blocks_at, format!("implausible block count {blocks}")));
    }
    let widths = (0..blocks).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    let config = ModelConfig { num_classes, input_dims, widths, spatial_kernel, temporal_kernel, seed };
    let count = r.usize()?;
    let mut params = Vec::new();
    for _ in 0..count {
        let at = r.offset();
        let name = r.str()?;
        let rank = r.usize()?;
        if rank > 8 {
            return Err(r.error(format!("parameter {name} has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.error_at(at, format!("parameter {name} shape overflows")))?;
        let data = r.f32s(n)?;
        let tensor = Tensor::new(&shape, data).map_err(|e| r.error_at(at, e.to_string()))?;
        params.push(NamedTensor { name, tensor });
    }
    r.finish()?;
    Model::from_parts(config, params).map_err(|e| r.error_at(6, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    decode_checkpoint(&read_file(path)?, path)
}

pub fn encode_logits(store: &LogitStore) -> Result<Vec<u8>> {
    let classes = store.entries.values().next().map_or(0, |v| v.len());
    let mut w = Writer::new(LOGITS_MAGIC, VERSION);
    w.u64(store.teacher_hash);
    w.len_u32(store.len())?;
    w.len_u32(classes)?;
    for (id, logits) in &store.entries {
        if logits.len() != classes {
            return Err(crate::error::CliError::Usage(format!(
                "logits for {id} have {} entries, expected {classes}",
                logits.len()
            )));
        }
        w.str(id)?;
        w.f32s(logits);
    }
    Ok(w.into_bytes())
}

pub fn save_logits(store: &LogitStore, path: &Path) -> Result<()> {
    let bytes = encode_logits(store)?;
    std::fs::write(path, bytes).map_err(|e| crate::error::CliError::io(path, e))
}

pub fn decode_logits(bytes: &[u8], path: &Path) -> Result<LogitStore> {
    let mut r = Reader::open(bytes, path, LOGITS_MAGIC, VERSION)?;
    let mut store = LogitStore::new(r.u64()?);
    let count = r.usize()?;
    let classes = r.usize()?;
    for _ in 0..count {
        let at = r.offset();
        let id = r.str()?;
        let logits = r.f32s(classes)?;
        if store.entries.insert(id.clone(), logits).is_some() {
            return Err(r.error_at(at, format!("duplicate clip id {id}")));
        }
    }
    r.finish()?;
    Ok(store)
}

pub fn load_logits(path: &Path) -> Result<LogitStore> {
    decode_logits(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;
    use dlkd_core::model::build_classifier;

    fn clip() -> VideoClip {
        let data = (0..2 * 4 * 8 * 8).map(|i| (i % 17) as f32 / 16.0).collect();
        VideoClip::new([2, 4, 8, 8], data, 3, "expand-0001").unwrap()
    }

    #[test]
    fn clip_size_matches_header_arithmetic() {
        let c = clip();
        let bytes = encode_clip(&c).unwrap();
        assert_eq!(bytes.len(), clip_header_len(c.id().len()) + 4 * 2 * 4 * 8 * 8);
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let p = Path::new("x");
        let bytes = encode_clip(&clip()).unwrap();
        for cut in [0, 3, 5, 7, 20, 30, bytes.len() - 1] {
            match decode_clip(&bytes[..cut], p) {
                Err(CliError::Format { .. }) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let model = build_classifier::<f32>(&ModelConfig::new(3, [1, 4, 8, 8], &[2], 1)).unwrap();
        let ck = encode_checkpoint(&model).unwrap();
        for cut in [1, 6, 30, ck.len() / 2, ck.len() - 1] {
            assert!(matches!(decode_checkpoint(&ck[..cut], p), Err(CliError::Format { .. })));
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_clip(&clip()).unwrap();
        bytes[0] = b'X';
        match decode_clip(&bytes, Path::new("x")) {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_reports_offset_four() {
        let mut bytes = encode_logits(&LogitStore::new(7)).unwrap();
        bytes[4] = 9;
        match decode_logits(&bytes, Path::new("x")) {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }
}
