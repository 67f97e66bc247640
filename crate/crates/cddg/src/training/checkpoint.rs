//! Self-describing binary checkpoint container.
//!
//! Layout: magic `CDDG`, format version, a JSON manifest (config hash, step,
//! metric snapshot, encoder spec, label-space sizes), then each parameter
//! tensor as name, shape, and little-endian `f64` data. Round trips are
//! bit-exact because values never pass through a decimal representation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::core::LabelSpace;
use crate::networks::{init_bundle, EncoderSpec, ModelBundle, ValueVisitor};
use crate::training::TrainConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CDDG";
const VERSION: u32 = 1;

/// Manifest stored inside every checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub step: usize,
    pub source_val_accuracy: f64,
    pub target_val_accuracy: f64,
    pub encoder: EncoderSpec,
    pub num_classes: usize,
    pub num_domains: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Write `bundle` with its manifest to `path`.
pub fn save_checkpoint(bundle: &ModelBundle, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let manifest =
        serde_json::to_vec(meta).map_err(|e| Error::Serde(format!("manifest encode: {e}")))?;

    struct Dump(Vec<u8>);
    impl ValueVisitor for Dump {
        fn visit(&mut self, name: &str, shape: &[usize], values: &[f64]) {
            let buf = &mut self.0;
            buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(shape.len() as u64).to_le_bytes());
            for &s in shape {
                buf.extend_from_slice(&(s as u64).to_le_bytes());
            }
            buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for &v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    struct Count(u64);
    impl ValueVisitor for Count {
        fn visit(&mut self, _: &str, _: &[usize], _: &[f64]) {
            self.0 += 1;
        }
    }
    let mut count = Count(0);
    bundle.visit_values(&mut count);
    let mut dump = Dump(Vec::new());
    bundle.visit_values(&mut dump);

    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(manifest.len() as u64).to_le_bytes())?;
    file.write_all(&manifest)?;
    file.write_all(&count.0.to_le_bytes())?;
    file.write_all(&dump.0)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| corrupt("truncated checkpoint file"))?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Read a checkpoint back into a freshly built bundle.
pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, CheckpointMeta)> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: std::io::BufReader::new(file),
    };
    if r.bytes(4)? != MAGIC {
        return Err(corrupt("bad magic; not a checkpoint file"));
    }
    let version = u32::from_le_bytes(r.bytes(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(corrupt(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let manifest_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(&r.bytes(manifest_len)?)
        .map_err(|e| corrupt(format!("manifest decode: {e}")))?;

    let space = LabelSpace::new(meta.num_classes, meta.num_domains)?;
    let mut bundle = init_bundle(&meta.encoder, &space, 0)?;

    let tensor_count = r.u64()?;
    struct Count(u64);
    impl ValueVisitor for Count {
        fn visit(&mut self, _: &str, _: &[usize], _: &[f64]) {
            self.0 += 1;
        }
    }
    let mut expected = Count(0);
    bundle.visit_values(&mut expected);
    if tensor_count != expected.0 {
        return Err(corrupt(format!(
            "checkpoint holds {tensor_count} tensors, bundle expects {}",
            expected.0
        )));
    }

    for _ in 0..tensor_count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| corrupt("non-utf8 tensor name"))?;
        let ndims = r.u64()? as usize;
        let mut numel = 1usize;
        for _ in 0..ndims {
            numel = numel.saturating_mul(r.u64()? as usize);
        }
        let count = r.u64()? as usize;
        if count != numel {
            return Err(corrupt(format!(
                "tensor {name}: shape implies {numel} values, data has {count}"
            )));
        }
        let raw = r.bytes(count * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        bundle.load_param(&name, &values)?;
    }
    Ok((bundle, meta))
}

/// Load and verify the file belongs to `config`: matching config hash and
/// encoder spec.
pub fn load_checkpoint_checked(
    path: &Path,
    config: &TrainConfig,
) -> Result<(ModelBundle, CheckpointMeta)> {
    let (bundle, meta) = load_checkpoint(path)?;
    let expected = crate::training::config_hash(config);
    if meta.config_hash != expected {
        return Err(corrupt(format!(
            "config hash mismatch: checkpoint {}, expected {}",
            meta.config_hash, expected
        )));
    }
    if meta.encoder != config.encoder {
        return Err(corrupt("encoder spec mismatch"));
    }
    Ok((bundle, meta))
}
