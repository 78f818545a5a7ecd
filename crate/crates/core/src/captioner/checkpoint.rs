use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaptionModel, CaptionParams, ModelConfig};
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::nncore::{ParamSet, Tensor};
use crate::persist::{write_atomic, Container};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"JSSF1";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
}

pub fn encode_checkpoint(model: &CaptionModel) -> Vec<u8> {
    let meta = serde_json::to_string(&Meta {
        config: model.config().clone(),
    })
    .expect("config serializes");
    Container {
        meta,
        strings: model.vocab().tokens().to_vec(),
        tensors: model
            .params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect(),
        lists: Vec::new(),
    }
    .encode(CHECKPOINT_MAGIC)
}

/// Decodes a checkpoint and checks every tensor against a model built from
/// the stored config and vocabulary.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<CaptionModel> {
    let c = Container::decode(CHECKPOINT_MAGIC, bytes)?;
    let meta: Meta = serde_json::from_str(&c.meta)
        .map_err(|e| Error::Persistence(format!("checkpoint config: {e}")))?;
    meta.config.validate()?;
    let vocab = Vocab::from_tokens(c.strings)
        .map_err(|e| Error::Persistence(format!("checkpoint vocabulary: {e}")))?;
    let mut params = CaptionParams::zeros(&meta.config, vocab.len());
    let expected = params.tensors().len();
    if c.tensors.len() != expected {
        return Err(Error::Shape(format!(
            "checkpoint has {} tensors, config expects {expected}",
            c.tensors.len()
        )));
    }
    for ((name, slot), (got_name, got)) in params.tensors_mut().into_iter().zip(c.tensors) {
        if name != got_name {
            return Err(Error::Shape(format!(
                "checkpoint tensor {got_name:?} where {name:?} was expected"
            )));
        }
        if slot.shape() != got.shape() {
            return Err(Error::Shape(format!(
                "tensor {name}: checkpoint shape {:?}, config expects {:?}",
                got.shape(),
                slot.shape()
            )));
        }
        *slot = Tensor::new(got.shape().to_vec(), got.into_data())?;
    }
    Ok(CaptionModel::from_parts(meta.config, vocab, params))
}

pub fn save_checkpoint(model: &CaptionModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(model))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CaptionModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{toy_config, toy_vocab};
    use super::super::Variant;
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        for v in Variant::ALL {
            let m = CaptionModel::build(toy_config(v), toy_vocab(12), 2).unwrap();
            let bytes = encode_checkpoint(&m);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn bad_magic_names_expected() {
        let m = CaptionModel::build(toy_config(Variant::Single), toy_vocab(12), 2).unwrap();
        let mut bytes = encode_checkpoint(&m);
        bytes[0] = b'X';
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::Persistence(_)));
        assert!(err.to_string().contains("JSSF1"));
    }

    #[test]
    fn vocab_size_mismatch_is_shape_error() {
        let m = CaptionModel::build(toy_config(Variant::Early), toy_vocab(50), 2).unwrap();
        let mut c = Container::decode(CHECKPOINT_MAGIC, &encode_checkpoint(&m)).unwrap();
        c.strings.extend((0..10).map(|i| format!("extra{i}")));
        let err = decode_checkpoint(&c.encode(CHECKPOINT_MAGIC)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn truncation_is_persistence_error() {
        let m = CaptionModel::build(toy_config(Variant::Single), toy_vocab(12), 2).unwrap();
        let bytes = encode_checkpoint(&m);
        for cut in [0, 3, 6, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Persistence(_))));
        }
    }
}
