//! Experiment plumbing shared by the command-line tool and the acceptance
//! suite: configuration, training runs, split evaluation and report tables.

mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{ReportRow, ReportTable, REFERENCE_FOOTNOTE};

use crate::captioner::{
    prepare_examples, save_checkpoint, train_with, CaptionModel, EdgeKind, EpochStats, Example, ModelConfig,
    TrainingLog, Variant,
};
use crate::corpus::{build_vocab, gen_synthetic, load_dataset_json, Dataset, DatasetItem, Split, TokenId};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_all, tokenize, EvalReport};
use crate::persist::write_atomic;
use crate::search::{
    build_archive_from_examples, decode_caption, save_archive, Archive, CbbsConfig, ConsensusMetric, Strategy,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Greedy,
    Beam,
    Cbbs,
}

impl StrategyKind {
    pub fn parse(s: &str) -> Option<StrategyKind> {
        match s {
            "greedy" => Some(StrategyKind::Greedy),
            "beam" => Some(StrategyKind::Beam),
            "cbbs" => Some(StrategyKind::Cbbs),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub strategy: StrategyKind,
    pub beam_width: usize,
    pub alpha: f64,
    /// Archive neighbours for CBBS.
    pub k: usize,
    pub metric: ConsensusMetric,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        let c = CbbsConfig::default();
        DecodeConfig {
            strategy: StrategyKind::Greedy,
            beam_width: c.beam_width,
            alpha: c.alpha,
            k: c.k,
            metric: c.metric,
        }
    }
}

impl DecodeConfig {
    pub fn strategy(&self) -> Strategy {
        match self.strategy {
            StrategyKind::Greedy => Strategy::Greedy,
            StrategyKind::Beam => Strategy::Beam {
                width: self.beam_width,
                alpha: self.alpha,
            },
            StrategyKind::Cbbs => Strategy::Cbbs(CbbsConfig {
                beam_width: self.beam_width,
                k: self.k,
                alpha: self.alpha,
                metric: self.metric,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy != StrategyKind::Greedy {
            CbbsConfig {
                beam_width: self.beam_width,
                k: self.k,
                alpha: self.alpha,
                metric: self.metric,
            }
            .validate()?;
        }
        Ok(())
    }
}

/// JSON experiment description. Every field is optional; see the README for
/// the schema and defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path to a dataset JSON file; images live in `images/` next to it.
    pub dataset: Option<PathBuf>,
    /// Generated into `<out>/data` when no dataset path is given.
    pub synthetic: Option<SyntheticSpec>,
    pub edges: Vec<EdgeKind>,
    pub fusions: Vec<Variant>,
    /// Base model; `variant` and `edge` are replaced per matrix cell.
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    /// Vocabulary cut-off over the train split.
    pub min_count: usize,
    pub eval_split: Split,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            synthetic: None,
            edges: vec![EdgeKind::Laplacian],
            fusions: Variant::ALL.to_vec(),
            model: ModelConfig::default(),
            decode: DecodeConfig::default(),
            min_count: 1,
            eval_split: Split::Test,
            seed: 0,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() || self.fusions.is_empty() {
            return Err(Error::Config("experiment matrix is empty (edges and fusions need entries)".into()));
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        self.decode.validate()?;
        self.model_config(self.model.variant, self.model.edge).validate()
    }

    /// The base model config with the shared seed and one cell's variant and edge.
    pub fn model_config(&self, variant: Variant, edge: EdgeKind) -> ModelConfig {
        ModelConfig {
            variant,
            edge,
            seed: self.seed,
            ..self.model.clone()
        }
    }

    /// Matrix cells in row order: edges outermost, fusions inner.
    pub fn cells(&self) -> Vec<ModelConfig> {
        self.edges
            .iter()
            .flat_map(|&e| self.fusions.iter().map(move |&v| (v, e)))
            .map(|(v, e)| self.model_config(v, e))
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Loads the configured dataset, generating the synthetic one under
    /// `<out>/data` if that is what the config names.
    pub fn resolve_dataset(&self) -> Result<Dataset> {
        match (&self.dataset, &self.synthetic) {
            (Some(path), _) => {
                if !path.exists() {
                    return Err(Error::Config(format!("dataset not found: {}", path.display())));
                }
                load_dataset_json(path)
            }
            (None, Some(spec)) => gen_synthetic(spec.n, spec.seed, self.out_dir().join("data")),
            (None, None) => Err(Error::Config("no dataset: set `dataset` or `synthetic`".into())),
        }
    }
}

/// A model trained on the train split, with the examples it saw.
pub struct TrainedModel {
    pub model: CaptionModel,
    pub log: TrainingLog,
    pub examples: Vec<Example>,
    pub sources: Vec<String>,
}

/// Builds the vocabulary from the train split and trains `cfg` from its seed.
pub fn train_model(
    cfg: &ModelConfig,
    ds: &Dataset,
    min_count: usize,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel> {
    let items = ds.split(Split::Train);
    if items.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let vocab = build_vocab(ds, min_count)?;
    let mut model = CaptionModel::build(cfg.clone(), vocab, cfg.seed)?;
    let examples = prepare_examples(&model, ds, &items)?;
    let log = train_with(&mut model, &examples, on_epoch)?;
    Ok(TrainedModel {
        model,
        log,
        sources: items.iter().map(|i| i.filename.clone()).collect(),
        examples,
    })
}

impl TrainedModel {
    pub fn archive(&self) -> Result<Archive> {
        build_archive_from_examples(&self.model, &self.examples, &self.sources)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub image: String,
    pub caption: String,
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub references: Vec<String>,
}

/// Decodes every item with `strategy`.
pub fn predict(
    model: &CaptionModel,
    ds: &Dataset,
    items: &[&DatasetItem],
    strategy: &Strategy,
    archive: Option<&Archive>,
) -> Result<Vec<Prediction>> {
    items
        .iter()
        .map(|item| {
            let ctx = model.encode_image(&ds.load_image(item)?)?;
            let h = decode_caption(model, &ctx, strategy, archive)?;
            Ok(Prediction {
                image: item.filename.clone(),
                caption: model.vocab().decode(&h.tokens),
                tokens: h.tokens,
                log_prob: h.log_prob,
                references: item.captions.clone(),
            })
        })
        .collect()
}

/// Scores predicted captions against their references, both tokenized with
/// the metric tokenizer.
pub fn score_predictions(preds: &[Prediction]) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let cands: Vec<Vec<String>> = preds.iter().map(|p| tokenize(&p.caption)).collect();
    let refs: Vec<Vec<Vec<String>>> = preds
        .iter()
        .map(|p| p.references.iter().map(|r| tokenize(r)).collect())
        .collect();
    evaluate_all(&cands, &refs)
}

pub fn predictions_jsonl(preds: &[Prediction]) -> String {
    let mut s = String::new();
    for p in preds {
        s.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        s.push('\n');
    }
    s
}

/// Decodes and scores one split, writing `report.csv`, `report.md` and
/// `predictions.jsonl` into `out`.
pub fn evaluate_split(
    model: &CaptionModel,
    ds: &Dataset,
    split: Split,
    strategy: &Strategy,
    archive: Option<&Archive>,
    out: &Path,
) -> Result<EvalReport> {
    let items = ds.split(split);
    if items.is_empty() {
        return Err(Error::Data(format!("{} split is empty", split.as_str())));
    }
    let preds = predict(model, ds, &items, strategy, archive)?;
    let report = score_predictions(&preds)?;
    let table = ReportTable {
        rows: vec![ReportRow {
            label: model.config().label(),
            result: Ok(report),
        }],
    };
    create_dir(out)?;
    write_atomic(&out.join("predictions.jsonl"), predictions_jsonl(&preds).as_bytes())?;
    write_atomic(&out.join("report.csv"), table.to_csv().as_bytes())?;
    write_atomic(&out.join("report.md"), table.to_markdown().as_bytes())?;
    Ok(report)
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Directory name of a matrix cell, e.g. `laplacian_early`.
pub fn cell_dir_name(cfg: &ModelConfig) -> String {
    cfg.label().replace('/', "_")
}

/// Trains, saves and evaluates one cell into `dir`.
fn run_cell(
    exp: &ExperimentConfig,
    cfg: &ModelConfig,
    ds: &Dataset,
    dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<EvalReport> {
    create_dir(dir)?;
    let label = cfg.label();
    let trained = train_model(cfg, ds, exp.min_count, |e| {
        progress(&format!(
            "{label}: epoch {} loss {:.4} acc {:.4}",
            e.epoch, e.loss, e.token_accuracy
        ))
    })?;
    save_checkpoint(&trained.model, dir.join("model.jssf"))?;
    write_atomic(&dir.join("training_log.csv"), trained.log.to_csv().as_bytes())?;
    let archive = match exp.decode.strategy {
        StrategyKind::Cbbs => {
            let a = trained.archive()?;
            save_archive(&a, dir.join("archive.jssa"))?;
            Some(a)
        }
        _ => None,
    };
    evaluate_split(
        &trained.model,
        ds,
        exp.eval_split,
        &exp.decode.strategy(),
        archive.as_ref(),
        dir,
    )
}

/// Runs every matrix cell with the shared seed. A failing cell becomes a
/// FAILED row; `report.csv` is rewritten after each cell so partial results
/// survive an interrupted run.
pub fn run_compare(exp: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<ReportTable> {
    exp.validate()?;
    let out = exp.out_dir();
    create_dir(&out)?;
    let ds = exp.resolve_dataset()?;
    let mut table = ReportTable::default();
    for cfg in exp.cells() {
        let dir = out.join("cells").join(cell_dir_name(&cfg));
        let result = cfg
            .validate()
            .and_then(|_| run_cell(exp, &cfg, &ds, &dir, &mut progress))
            .map_err(|e| e.to_string());
        match &result {
            Ok(r) => progress(&format!("{}: BLEU-4 {:.4} CIDEr {:.4}", cfg.label(), r.bleu4, r.cider)),
            Err(e) => progress(&format!("{}: FAILED {e}", cfg.label())),
        }
        table.rows.push(ReportRow {
            label: cfg.label(),
            result,
        });
        write_atomic(&out.join("report.csv"), table.to_csv().as_bytes())?;
    }
    write_atomic(&out.join("report.md"), table.to_markdown().as_bytes())?;
    Ok(table)
}
