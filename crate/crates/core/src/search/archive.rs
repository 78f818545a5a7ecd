use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::captioner::{CaptionModel, Example};
use crate::corpus::{Dataset, DatasetItem, TokenId};
use crate::error::{Error, Result};
use crate::nncore::Tensor;
use crate::persist::{write_atomic, Container};

pub const ARCHIVE_MAGIC: &[u8; 5] = b"JSSA1";

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub feature: Vec<f64>,
    pub captions: Vec<Vec<TokenId>>,
    pub source: String,
}

/// Image features of the training set with their gold captions; immutable once built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new(entries: Vec<ArchiveEntry>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let d = first.feature.len();
            for (i, e) in entries.iter().enumerate() {
                if e.feature.len() != d {
                    return Err(Error::Shape(format!(
                        "archive entry {i} has feature dim {}, expected {d}",
                        e.feature.len()
                    )));
                }
                if e.captions.is_empty() {
                    return Err(Error::Data(format!("archive entry {i} has no captions")));
                }
            }
        }
        Ok(Archive { entries })
    }

    pub fn feature_dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.feature.len())
    }
}

/// One entry per item: its image context feature and encoded gold captions.
pub fn build_archive(model: &CaptionModel, ds: &Dataset, items: &[&DatasetItem]) -> Result<Archive> {
    if items.is_empty() {
        return Err(Error::Data("cannot build an archive from an empty split".into()));
    }
    let entries = items
        .iter()
        .map(|item| {
            let ctx = model.encode_image(&ds.load_image(item)?)?;
            Ok(ArchiveEntry {
                feature: ctx.feature(),
                captions: item.captions.iter().map(|c| model.vocab().encode(c)).collect(),
                source: item.filename.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Archive::new(entries)
}

/// Same as [`build_archive`] for already prepared examples.
pub fn build_archive_from_examples(model: &CaptionModel, examples: &[Example], sources: &[String]) -> Result<Archive> {
    if examples.is_empty() {
        return Err(Error::Data("cannot build an archive from an empty split".into()));
    }
    if sources.len() != examples.len() {
        return Err(Error::Shape(format!(
            "{} source ids for {} examples",
            sources.len(),
            examples.len()
        )));
    }
    let entries = examples
        .iter()
        .zip(sources)
        .map(|(ex, src)| {
            Ok(ArchiveEntry {
                feature: model.encode_streams(&ex.streams)?.feature(),
                captions: ex.captions.clone(),
                source: src.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Archive::new(entries)
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Top-`k` entries by cosine similarity as `(index, similarity)`, most
/// similar first; ties go to the lower index.
pub fn knn_retrieve(archive: &Archive, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k > archive.entries.len() {
        return Err(Error::Param(format!(
            "k = {k} exceeds archive size {}",
            archive.entries.len()
        )));
    }
    if k > 0 && query.len() != archive.feature_dim() {
        return Err(Error::Shape(format!(
            "query has dim {}, archive features have {}",
            query.len(),
            archive.feature_dim()
        )));
    }
    let mut sims: Vec<(usize, f64)> = archive
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, cosine_similarity(query, &e.feature)))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    Ok(sims)
}

#[derive(Serialize, Deserialize)]
struct Meta {
    entries: usize,
    feature_dim: usize,
}

/// Features go in one `[n, d]` tensor, source ids in the string block, and
/// the lists block holds per-entry caption counts followed by the captions.
pub fn encode_archive(archive: &Archive) -> Vec<u8> {
    let n = archive.entries.len();
    let d = archive.feature_dim();
    let meta = serde_json::to_string(&Meta { entries: n, feature_dim: d }).expect("meta serializes");
    let features = archive.entries.iter().flat_map(|e| e.feature.iter().copied()).collect();
    let mut lists = vec![archive.entries.iter().map(|e| e.captions.len() as u32).collect::<Vec<_>>()];
    for e in &archive.entries {
        for c in &e.captions {
            lists.push(c.iter().map(|&t| t as u32).collect());
        }
    }
    Container {
        meta,
        strings: archive.entries.iter().map(|e| e.source.clone()).collect(),
        tensors: vec![("features".into(), Tensor::new(vec![n, d], features).expect("consistent dims"))],
        lists,
    }
    .encode(ARCHIVE_MAGIC)
}

pub fn decode_archive(bytes: &[u8]) -> Result<Archive> {
    let c = Container::decode(ARCHIVE_MAGIC, bytes)?;
    let meta: Meta =
        serde_json::from_str(&c.meta).map_err(|e| Error::Persistence(format!("archive metadata: {e}")))?;
    let (n, d) = (meta.entries, meta.feature_dim);
    let feats = match c.tensors.as_slice() {
        [(name, t)] if name == "features" && t.shape() == [n, d] => t,
        _ => {
            return Err(Error::Persistence(format!(
                "archive must hold a single features tensor of shape [{n}, {d}]"
            )))
        }
    };
    if c.strings.len() != n {
        return Err(Error::Persistence(format!("{} source ids for {n} entries", c.strings.len())));
    }
    let counts = c
        .lists
        .first()
        .filter(|l| l.len() == n)
        .ok_or_else(|| Error::Persistence("missing per-entry caption counts".into()))?;
    let total: usize = counts.iter().map(|&x| x as usize).sum();
    if c.lists.len() != 1 + total {
        return Err(Error::Persistence(format!(
            "archive lists {} captions, counts say {total}",
            c.lists.len() - 1
        )));
    }
    let mut caps = c.lists[1..].iter();
    let mut entries = Vec::with_capacity(n);
    for (i, source) in c.strings.into_iter().enumerate() {
        let captions = (0..counts[i])
            .map(|_| caps.next().expect("count checked").iter().map(|&t| t as TokenId).collect())
            .collect();
        entries.push(ArchiveEntry {
            feature: feats.data()[i * d..(i + 1) * d].to_vec(),
            captions,
            source,
        });
    }
    Archive::new(entries).map_err(|e| Error::Persistence(e.to_string()))
}

pub fn save_archive(archive: &Archive, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_archive(archive))
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<Archive> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes)
}
