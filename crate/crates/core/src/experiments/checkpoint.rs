//! Binary model checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "RFCK"  u32 version (=1)
//! config: u32 channels, u32 height, u32 width,
//!         u32 stage count, u32 width per stage,
//!         u32 blocks_per_stage, u32 num_classes, u8 stem_pool
//! u32 parameter count, parameter records
//! u32 running-stat count, running-stat records
//! record: u16 name length, UTF-8 name, u32 rank, u32 per dim, f32 payload
//! ```
//!
//! Records follow the model's canonical construction order.

use super::ExperimentError;
use crate::nn::{Model, ModelConfig, RunningStats};
use crate::tensor::Tensor;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"RFCK";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) -> Result<(), ExperimentError> {
        let v = u32::try_from(v)
            .map_err(|_| ExperimentError::Corrupt(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn record(&mut self, name: &str, t: &Tensor) -> Result<(), ExperimentError> {
        let len = u16::try_from(name.len())
            .map_err(|_| ExperimentError::Corrupt(format!("name `{name}` too long")))?;
        self.u16(len);
        self.0.extend_from_slice(name.as_bytes());
        self.u32(t.rank())?;
        for &d in t.shape() {
            self.u32(d)?;
        }
        for &v in t.data() {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ExperimentError> {
        let end = self.pos.checked_add(n).ok_or(ExperimentError::TruncatedFile)?;
        let out = self.bytes.get(self.pos..end).ok_or(ExperimentError::TruncatedFile)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ExperimentError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ExperimentError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<usize, ExperimentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as usize)
    }

    fn record(&mut self) -> Result<(String, Vec<usize>, Vec<f64>), ExperimentError> {
        let len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| ExperimentError::Corrupt("record name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()?;
        if rank == 0 || rank > crate::tensor::MAX_RANK {
            return Err(ExperimentError::Corrupt(format!("record `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| ExperimentError::Corrupt(format!("record `{name}` is too large")))?;
        let payload = self.take(count.checked_mul(4).ok_or(ExperimentError::TruncatedFile)?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("four bytes"))))
            .collect();
        Ok((name, shape, data))
    }
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>, ExperimentError> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize)?;
    let c = model.config();
    for &d in &c.input_shape {
        w.u32(d)?;
    }
    w.u32(c.stage_widths.len())?;
    for &s in &c.stage_widths {
        w.u32(s)?;
    }
    w.u32(c.blocks_per_stage)?;
    w.u32(c.num_classes)?;
    w.u8(u8::from(c.stem_pool));
    for section in [model.named_parameters(), model.named_running_stats()] {
        w.u32(section.len())?;
        for (name, t) in section {
            w.record(&name, t)?;
        }
    }
    Ok(w.0)
}

fn read_section(
    r: &mut Reader<'_>,
    expected: &[(String, &Tensor)],
    what: &str,
) -> Result<Vec<Tensor>, ExperimentError> {
    let count = r.u32()?;
    if count != expected.len() {
        return Err(ExperimentError::ShapeMismatch(format!(
            "checkpoint has {count} {what} records, configuration implies {}",
            expected.len()
        )));
    }
    expected
        .iter()
        .map(|(want_name, want)| {
            let (name, shape, data) = r.record()?;
            if &name != want_name || shape != want.shape() {
                return Err(ExperimentError::ShapeMismatch(format!(
                    "record `{name}` {shape:?}, expected `{want_name}` {:?}",
                    want.shape()
                )));
            }
            Ok(Tensor::from_vec(&shape, data)?)
        })
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, ExperimentError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| ExperimentError::BadMagic)? != MAGIC {
        return Err(ExperimentError::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(ExperimentError::VersionMismatch(version));
    }
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let stages = r.u32()?;
    if stages > 64 {
        return Err(ExperimentError::Corrupt(format!("{stages} stages")));
    }
    let stage_widths = (0..stages).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    let config = ModelConfig {
        input_shape,
        stage_widths,
        blocks_per_stage: r.u32()?,
        num_classes: r.u32()?,
        stem_pool: match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(ExperimentError::Corrupt(format!("stem_pool flag {b}"))),
        },
    };
    config
        .validate()
        .map_err(|e| ExperimentError::Corrupt(e.to_string()))?;
    let mut model = Model::new(config, 0)?;
    let params = read_section(&mut r, &model.named_parameters(), "parameter")?;
    let stats = read_section(&mut r, &model.named_running_stats(), "running-stat")?;
    if r.pos != bytes.len() {
        return Err(ExperimentError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    model.set_parameters(params)?;
    let mut stats = stats.into_iter();
    let mut running = Vec::new();
    while let (Some(mean), Some(var)) = (stats.next(), stats.next()) {
        running.push(RunningStats { mean, var });
    }
    model.set_running_stats(running);
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), ExperimentError> {
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ExperimentError> {
    let bytes = std::fs::read(path).map_err(|e| ExperimentError::io(path, e))?;
    decode_checkpoint(&bytes)
}
