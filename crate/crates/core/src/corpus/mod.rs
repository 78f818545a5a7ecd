//! Caption datasets in the Karpathy/RSICD JSON layout, vocabularies, and a
//! synthetic scene generator for desk-scale experiments.

mod synth;
mod vocab;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use synth::{gen_synthetic, render_scene, Background, ObjectKind, Scene, SceneObject, MIN_SYNTHETIC};
pub use vocab::{build_vocab, TokenId, Vocab, END, PAD, SPECIALS, START, UNK};

use crate::error::{Error, Result};
use crate::imagecore::{read_netpbm, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    /// File name relative to the dataset's image root.
    pub filename: String,
    pub split: Split,
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub image_root: PathBuf,
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn image_path(&self, item: &DatasetItem) -> PathBuf {
        self.image_root.join(&item.filename)
    }

    pub fn load_image(&self, item: &DatasetItem) -> Result<Image> {
        read_netpbm(self.image_path(item))
    }

    pub fn split(&self, split: Split) -> Vec<&DatasetItem> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    pub fn split_counts(&self) -> [usize; 3] {
        Split::ALL.map(|s| self.items.iter().filter(|i| i.split == s).count())
    }
}

/// Order-preserving train/val/test views. An empty split is allowed.
pub fn split_views(ds: &Dataset) -> (Vec<&DatasetItem>, Vec<&DatasetItem>, Vec<&DatasetItem>) {
    (ds.split(Split::Train), ds.split(Split::Val), ds.split(Split::Test))
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Value, path: &str, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| parse_err(format!("{path}.{name}"), "missing field"))
}

fn string_field<'a>(obj: &'a Value, path: &str, name: &str) -> Result<&'a str> {
    field(obj, path, name)?
        .as_str()
        .ok_or_else(|| parse_err(format!("{path}.{name}"), "expected a string"))
}

/// Parses dataset JSON text. Images are resolved against `image_root`.
pub fn parse_dataset_json(text: &str, image_root: impl Into<PathBuf>) -> Result<Dataset> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err("$", e.to_string()))?;
    let images = field(&root, "$", "images")?
        .as_array()
        .ok_or_else(|| parse_err("images", "expected an array"))?;
    let mut items = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let path = format!("images[{i}]");
        if !img.is_object() {
            return Err(parse_err(path, "expected an object"));
        }
        let filename = string_field(img, &path, "filename")?.to_string();
        let split_raw = string_field(img, &path, "split")?;
        let split = Split::parse(split_raw).ok_or_else(|| {
            parse_err(
                format!("{path}.split"),
                format!("unknown split {split_raw:?}, expected train, val or test"),
            )
        })?;
        let sentences = field(img, &path, "sentences")?
            .as_array()
            .ok_or_else(|| parse_err(format!("{path}.sentences"), "expected an array"))?;
        if sentences.is_empty() {
            return Err(parse_err(format!("{path}.sentences"), "at least one caption required"));
        }
        let mut captions = Vec::with_capacity(sentences.len());
        for (j, s) in sentences.iter().enumerate() {
            let spath = format!("{path}.sentences[{j}]");
            if !s.is_object() {
                return Err(parse_err(spath, "expected an object"));
            }
            captions.push(string_field(s, &spath, "raw")?.to_string());
        }
        items.push(DatasetItem {
            filename,
            split,
            captions,
        });
    }
    Ok(Dataset {
        image_root: image_root.into(),
        items,
    })
}

/// Loads a dataset file; images are expected under `<json dir>/images`.
pub fn load_dataset_json(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_dataset_json(&text, dir.join("images"))
}

#[derive(Serialize)]
struct SentenceOut<'a> {
    raw: &'a str,
}

#[derive(Serialize)]
struct ImageOut<'a> {
    filename: &'a str,
    split: &'static str,
    sentences: Vec<SentenceOut<'a>>,
}

#[derive(Serialize)]
struct DatasetOut<'a> {
    images: Vec<ImageOut<'a>>,
}

pub fn dataset_to_json(ds: &Dataset) -> String {
    let out = DatasetOut {
        images: ds
            .items
            .iter()
            .map(|it| ImageOut {
                filename: &it.filename,
                split: it.split.as_str(),
                sentences: it.captions.iter().map(|raw| SentenceOut { raw }).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&out).expect("dataset serializes");
    s.push('\n');
    s
}

/// Writes the dataset JSON. The image root is not recorded in the file.
pub fn write_dataset_json(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    crate::persist::write_atomic(path.as_ref(), dataset_to_json(ds).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"images":[{"filename":"a.ppm","split":"train","sentences":[
        {"raw":"one"},{"raw":"two"},{"raw":"three"},{"raw":"four"},{"raw":"five"}]}]}"#;

    #[test]
    fn parses_single_item() {
        let ds = parse_dataset_json(ONE, "/tmp/x").unwrap();
        assert_eq!(ds.items.len(), 1);
        assert_eq!(ds.items[0].captions.len(), 5);
        assert_eq!(ds.image_path(&ds.items[0]), PathBuf::from("/tmp/x/a.ppm"));
    }

    #[test]
    fn missing_split_names_field() {
        let text = r#"{"images":[{"filename":"a","split":"train","sentences":[{"raw":"x"}]},
            {"filename":"b","sentences":[{"raw":"y"}]}]}"#;
        match parse_dataset_json(text, ".").unwrap_err() {
            Error::Parse { path, .. } => assert_eq!(path, "images[1].split"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn schema_errors() {
        for (text, want) in [
            ("[]", "$.images"),
            (r#"{"images":3}"#, "images"),
            (r#"{"images":[{"filename":1}]}"#, "images[0].filename"),
            (r#"{"images":[{"filename":"a","split":"dev","sentences":[]}]}"#, "images[0].split"),
            (r#"{"images":[{"filename":"a","split":"val","sentences":[]}]}"#, "images[0].sentences"),
            (r#"{"images":[{"filename":"a","split":"val","sentences":[{}]}]}"#, "images[0].sentences[0].raw"),
            ("{", "$"),
        ] {
            match parse_dataset_json(text, ".").unwrap_err() {
                Error::Parse { path, .. } => assert_eq!(path, want, "{text}"),
                e => panic!("{e}"),
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let ds = Dataset {
            image_root: PathBuf::from("r"),
            items: vec![
                DatasetItem {
                    filename: "a.ppm".into(),
                    split: Split::Train,
                    captions: vec!["x \"quoted\"".into(), "y".into()],
                },
                DatasetItem {
                    filename: "b.ppm".into(),
                    split: Split::Test,
                    captions: vec!["z".into()],
                },
            ],
        };
        let back = parse_dataset_json(&dataset_to_json(&ds), "r").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn views_preserve_order_and_count() {
        let text = r#"{"images":[
            {"filename":"0","split":"test","sentences":[{"raw":"a"}]},
            {"filename":"1","split":"train","sentences":[{"raw":"a"}]},
            {"filename":"2","split":"train","sentences":[{"raw":"a"}]}]}"#;
        let ds = parse_dataset_json(text, ".").unwrap();
        let (tr, va, te) = split_views(&ds);
        assert_eq!(tr.iter().map(|i| i.filename.as_str()).collect::<Vec<_>>(), ["1", "2"]);
        assert!(va.is_empty());
        assert_eq!(tr.len() + va.len() + te.len(), ds.items.len());
    }
}
