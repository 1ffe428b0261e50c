//! Single-file model checkpoints.
//!
//! Layout (little-endian): magic `AFSBNN\0\0`, `u32` version, `u32` byte
//! length + JSON model spec, `u32` byte length + JSON activation (or
//! `null`), `u32` tensor count, then per tensor `u32` rank, `rank × u32`
//! dims, and the `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{Model, ModelSpec};
use super::BnnError;
use crate::expr::{catalog_af, ActivationExpr, ActivationFn, Genome};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"AFSBNN\0\0";

fn af_tag(af: Option<&ActivationFn>) -> String {
    match af {
        None => "null".into(),
        Some(ActivationFn::Expr(e)) => match e.genome() {
            Some(g) => serde_json::to_string(&g.to_string()).unwrap_or_default(),
            None => "null".into(),
        },
        Some(other) => serde_json::to_string(&other.to_string()).unwrap_or_default(),
    }
}

fn first_af(model: &Model) -> Option<&ActivationFn> {
    model.layers.iter().find_map(|l| match l {
        super::Layer::Binary { layer, .. } => layer.af.as_ref(),
        _ => None,
    })
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), BnnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let spec = serde_json::to_vec(model.spec()).map_err(|e| BnnError::Checkpoint(e.to_string()))?;
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(&spec);
    let af = af_tag(first_af(model));
    buf.extend_from_slice(&(af.len() as u32).to_le_bytes());
    buf.extend_from_slice(af.as_bytes());
    let state = model.state();
    buf.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (shape, values) in state {
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], BnnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            BnnError::Checkpoint(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, BnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn parse_af(tag: &str) -> Result<Option<ActivationFn>, BnnError> {
    let bad = |e: String| BnnError::Checkpoint(format!("activation tag: {e}"));
    let v: Option<String> = serde_json::from_str(tag).map_err(|e| bad(e.to_string()))?;
    let Some(s) = v else { return Ok(None) };
    if let Ok(g) = s.parse::<Genome>() {
        return Ok(Some(ActivationFn::Expr(ActivationExpr::decode(&g, 1)?)));
    }
    Ok(Some(catalog_af(&s, 1)?))
}

/// Restores a model saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Model, BnnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(BnnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(BnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let spec: ModelSpec =
        serde_json::from_slice(r.take(n)?).map_err(|e| BnnError::Checkpoint(e.to_string()))?;
    let n = r.u32()? as usize;
    let tag = std::str::from_utf8(r.take(n)?).map_err(|e| BnnError::Checkpoint(e.to_string()))?;
    let af = parse_af(tag)?;
    let mut model = Model::new(spec, 0)?;
    model.set_af(af.as_ref())?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let mut len = 1usize;
        for _ in 0..rank {
            len = len.saturating_mul(r.u32()? as usize);
        }
        let raw = r.take(len.saturating_mul(4))?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect::<Vec<f32>>(),
        );
    }
    if r.pos != bytes.len() {
        return Err(BnnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let slots = model.state_mut();
    if slots.len() != tensors.len() {
        return Err(BnnError::Checkpoint(format!(
            "{} tensors stored, model has {}",
            tensors.len(),
            slots.len()
        )));
    }
    for (i, (slot, t)) in slots.into_iter().zip(tensors).enumerate() {
        if slot.len() != t.len() {
            return Err(BnnError::Checkpoint(format!(
                "tensor {i} has {} values, expected {}",
                t.len(),
                slot.len()
            )));
        }
        *slot = t;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = Model::new(ModelSpec::tiny_bin_net([1, 4, 4], 3, 3), 9).unwrap();
        model.set_af(Some(&catalog_af("AF12", 1).unwrap())).unwrap();
        for v in model.state_mut() {
            for (i, x) in v.iter_mut().enumerate() {
                *x += 0.01 * i as f32;
            }
        }
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let x = Tensor::from_vec(&[2, 1, 4, 4], (0..32).map(|i| (i as f32 * 0.3).sin()).collect()).unwrap();
        assert_eq!(model.forward_eval(&x).unwrap(), back.forward_eval(&x).unwrap());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
