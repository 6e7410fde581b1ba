//! Single-file binary checkpoints that round-trip bitwise.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8 bytes   "GTANCKPT"
//! version          u32       currently 1
//! dim              u32
//! att_dim          u32
//! hidden_dim       u32
//! layers           u32
//! fc_layers        u32
//! normalization    u8        0 = none, 1 = row_l1
//! trainable_words  u8
//! ablation         u8        bit k = flag k of the ablation flag list
//! reserved         u8        0
//! tensor_count     u32
//! per tensor:
//!   name_len       u16, then name bytes (UTF-8)
//!   rows, cols     u32 each
//!   values         rows*cols f64, little-endian
//! ```
//!
//! Tensors appear as `word_table` first, then every parameter in
//! declaration order.

use crate::graph::Normalization;
use crate::model::{AblationConfig, Model, ModelConfig, ModelParams, ABLATION_FLAGS};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"GTANCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint mismatch on {what}: checkpoint has {found}, expected {expected}")]
    Mismatch {
        what: &'static str,
        found: String,
        expected: String,
    },
}

fn ablation_bits(ab: &AblationConfig) -> u8 {
    let active = ab.active_flags();
    let mut bits = 0u8;
    for (k, &(flag, _)) in ABLATION_FLAGS.iter().enumerate() {
        if active.contains(&flag) {
            bits |= 1 << k;
        }
    }
    bits
}

fn ablation_from_bits(bits: u8) -> Result<AblationConfig, CheckpointError> {
    let mut ab = AblationConfig::default();
    for (k, &(flag, _)) in ABLATION_FLAGS.iter().enumerate() {
        if bits & (1 << k) != 0 {
            ab = ab.with_flag(flag).expect("known flag");
        }
    }
    let known = (1u16 << ABLATION_FLAGS.len()) - 1;
    if bits as u16 & !known != 0 {
        return Err(CheckpointError::Corrupt(format!(
            "unknown ablation bits 0x{bits:02x}"
        )));
    }
    Ok(ab)
}

fn write_tensor(out: &mut impl Write, name: &str, t: &Tensor) -> std::io::Result<()> {
    out.write_all(&(name.len() as u16).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(t.rows() as u32).to_le_bytes())?;
    out.write_all(&(t.cols() as u32).to_le_bytes())?;
    for &v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), CheckpointError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let c = &model.config;
    for v in [c.dim, c.att_dim, c.hidden_dim, c.layers, c.fc_layers] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let norm = match c.normalization {
        Normalization::None => 0u8,
        Normalization::RowL1 => 1u8,
    };
    out.write_all(&[
        norm,
        c.trainable_word_embeddings as u8,
        ablation_bits(&c.ablation),
        0u8,
    ])?;

    let entries = model.params.entries();
    out.write_all(&(1 + entries.len() as u32).to_le_bytes())?;
    write_tensor(&mut out, "word_table", &model.word_table)?;
    for (name, t) in entries {
        write_tensor(&mut out, &name, t)?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| CheckpointError::Corrupt("unexpected end of file".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.bytes::<2>()?))
    }

    fn tensor(&mut self) -> Result<(String, Tensor), CheckpointError> {
        let name_len = self.u16()? as usize;
        let mut name_buf = vec![0u8; name_len];
        self.inner
            .read_exact(&mut name_buf)
            .map_err(|_| CheckpointError::Corrupt("unexpected end of file".into()))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(self.bytes::<8>()?));
        }
        let t =
            Tensor::new(rows, cols, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok((name, t))
    }
}

/// Reads a checkpoint back into a full model. The stored config comes with
/// it; use [`ensure_matches`] to validate against an expected one.
pub fn load_checkpoint(path: &Path) -> Result<Model, CheckpointError> {
    let mut r = Reader {
        inner: std::io::BufReader::new(std::fs::File::open(path)?),
    };
    let magic = r.bytes::<8>()?;
    if &magic != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Mismatch {
            what: "version",
            found: version.to_string(),
            expected: VERSION.to_string(),
        });
    }
    let dim = r.u32()? as usize;
    let att_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let fc_layers = r.u32()? as usize;
    let [norm, trainable, ablation_bits, _reserved] = r.bytes::<4>()?;
    let normalization = match norm {
        0 => Normalization::None,
        1 => Normalization::RowL1,
        other => {
            return Err(CheckpointError::Corrupt(format!(
                "unknown normalization tag {other}"
            )))
        }
    };
    let config = ModelConfig {
        dim,
        att_dim,
        hidden_dim,
        layers,
        fc_layers,
        normalization,
        trainable_word_embeddings: trainable != 0,
        ablation: ablation_from_bits(ablation_bits)?,
    };

    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        tensors.push(r.tensor()?);
    }

    rebuild(config, tensors)
}

fn rebuild(config: ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Model, CheckpointError> {
    let mut iter = tensors.into_iter();
    let take = |iter: &mut std::vec::IntoIter<(String, Tensor)>,
                expect: &str|
     -> Result<Tensor, CheckpointError> {
        let (name, t) = iter
            .next()
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {expect}")))?;
        if name != expect {
            return Err(CheckpointError::Corrupt(format!(
                "expected tensor {expect}, found {name}"
            )));
        }
        Ok(t)
    };

    let word_table = take(&mut iter, "word_table")?;
    let mut layer_weights = Vec::with_capacity(config.layers);
    for t in 0..config.layers {
        let mut per_type = Vec::with_capacity(config.type_matrices());
        for tau in 0..config.type_matrices() {
            per_type.push(take(&mut iter, &format!("layer{t}.type{tau}"))?);
        }
        layer_weights.push(per_type);
    }
    let gate_weight = take(&mut iter, "gate.weight")?;
    let gate_bias = take(&mut iter, "gate.bias")?;
    let resp_gate_weight = take(&mut iter, "resp_gate.weight")?;
    let resp_gate_bias = take(&mut iter, "resp_gate.bias")?;
    let respondent_table = take(&mut iter, "respondent_table")?;
    let q_att_weight = take(&mut iter, "q_att.weight")?;
    let q_att_bias = take(&mut iter, "q_att.bias")?;
    let q_att_vector = take(&mut iter, "q_att.vector")?;
    let a_att_weight = take(&mut iter, "a_att.weight")?;
    let a_att_bias = take(&mut iter, "a_att.bias")?;
    let a_att_vector = take(&mut iter, "a_att.vector")?;
    let mut fc = Vec::with_capacity(config.fc_layers);
    for k in 0..config.fc_layers {
        let w = take(&mut iter, &format!("fc{k}.weight"))?;
        let b = take(&mut iter, &format!("fc{k}.bias"))?;
        fc.push((w, b));
    }
    if let Some((name, _)) = iter.next() {
        return Err(CheckpointError::Corrupt(format!(
            "unexpected trailing tensor {name}"
        )));
    }

    let model = Model {
        config,
        word_table,
        params: ModelParams {
            layer_weights,
            gate_weight,
            gate_bias,
            resp_gate_weight,
            resp_gate_bias,
            respondent_table,
            q_att_weight,
            q_att_bias,
            q_att_vector,
            a_att_weight,
            a_att_bias,
            a_att_vector,
            fc,
        },
    };
    // Cheap structural sanity check on the core width.
    if model.params.gate_weight.shape() != (2 * model.config.dim, model.config.dim) {
        return Err(CheckpointError::Corrupt(format!(
            "gate weight shape {} does not match dim {}",
            model.params.gate_weight.shape_str(),
            model.config.dim
        )));
    }
    Ok(model)
}

/// Validates a loaded checkpoint against the configuration a run expects.
pub fn ensure_matches(model: &Model, expected: &ModelConfig) -> Result<(), CheckpointError> {
    let c = &model.config;
    let checks: [(&'static str, usize, usize); 5] = [
        ("dim", c.dim, expected.dim),
        ("att_dim", c.att_dim, expected.att_dim),
        ("hidden_dim", c.hidden_dim, expected.hidden_dim),
        ("layers", c.layers, expected.layers),
        ("fc_layers", c.fc_layers, expected.fc_layers),
    ];
    for (what, found, want) in checks {
        if found != want {
            return Err(CheckpointError::Mismatch {
                what,
                found: found.to_string(),
                expected: want.to_string(),
            });
        }
    }
    if c.normalization != expected.normalization {
        return Err(CheckpointError::Mismatch {
            what: "normalization",
            found: c.normalization.as_str().into(),
            expected: expected.normalization.as_str().into(),
        });
    }
    if c.ablation != expected.ablation {
        return Err(CheckpointError::Mismatch {
            what: "ablation",
            found: c.ablation.to_flags_string(),
            expected: expected.ablation.to_flags_string(),
        });
    }
    Ok(())
}
