//! Staged pipeline: ingest, seeds, graph, propagate, select, featurize,
//! train, extract, evaluate.
//!
//! Every stage writes its outputs and a `manifest.json` under the output
//! directory. A manifest records the digests of the stage's inputs (upstream
//! manifests, external files and the relevant parameters) and outputs; a
//! stage whose recorded inputs are unchanged is skipped. `ingest` and
//! `seeds` are shared by all modes, the other stages live under a directory
//! per mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::classify::{self, Example, LinearModel, TrainConfig, TrainingSet, TripleStore};
use crate::corpus::{self, CoordList, Corpus, CorpusKind};
use crate::error::{Error, Result};
use crate::evaluate::{self, EvalReport, GoldSet, Prf, QaScores};
use crate::features::{self, FeatureFilter, FeatureVector};
use crate::graph::{self, EdgeType, ListKey, NodeKey, PropGraph, SectionMap};
use crate::kb::{self, Seed, Triple};
use crate::propagate::{self, PropConfig, ScoreTable, SeedVector};
use crate::simstring::TokenStats;
use crate::Relation;

/// Baselines and ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Distant labels from the target corpus only.
    #[serde(rename = "DS1")]
    Ds1,
    /// Distant labels from both corpora.
    #[serde(rename = "DS2")]
    Ds2,
    /// Propagation over target-corpus lists.
    #[serde(rename = "DS+L")]
    DsL,
    /// Merged graph, list edges only.
    #[serde(rename = "DIEBOLDS-SN")]
    NoSectionNoNeighbor,
    #[serde(rename = "DIEBOLDS-S")]
    NoSection,
    #[serde(rename = "DIEBOLDS-N")]
    NoNeighbor,
    #[serde(rename = "DIEBOLDS")]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeToggles {
    pub use_s: bool,
    pub use_n: bool,
    pub use_structured_lists: bool,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Ds1,
        Mode::Ds2,
        Mode::DsL,
        Mode::NoSectionNoNeighbor,
        Mode::NoSection,
        Mode::NoNeighbor,
        Mode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ds1 => "DS1",
            Mode::Ds2 => "DS2",
            Mode::DsL => "DS+L",
            Mode::NoSectionNoNeighbor => "DIEBOLDS-SN",
            Mode::NoSection => "DIEBOLDS-S",
            Mode::NoNeighbor => "DIEBOLDS-N",
            Mode::Full => "DIEBOLDS",
        }
    }

    /// Directory name of the mode's stages.
    pub fn slug(self) -> &'static str {
        match self {
            Mode::Ds1 => "ds1",
            Mode::Ds2 => "ds2",
            Mode::DsL => "ds-l",
            Mode::NoSectionNoNeighbor => "diebolds-sn",
            Mode::NoSection => "diebolds-s",
            Mode::NoNeighbor => "diebolds-n",
            Mode::Full => "diebolds",
        }
    }

    /// `None` for the distant-supervision baselines, which skip propagation.
    pub fn edges(self) -> Option<EdgeToggles> {
        let t = |use_s, use_n, use_structured_lists| {
            Some(EdgeToggles {
                use_s,
                use_n,
                use_structured_lists,
            })
        };
        match self {
            Mode::Ds1 | Mode::Ds2 => None,
            Mode::DsL => t(false, false, false),
            Mode::NoSectionNoNeighbor => t(false, false, true),
            Mode::NoSection => t(false, true, true),
            Mode::NoNeighbor => t(true, false, true),
            Mode::Full => t(true, true, true),
        }
    }

    /// Whether structured-corpus lists take part in training.
    pub fn uses_structured(self) -> bool {
        match self.edges() {
            Some(e) => e.use_structured_lists,
            None => self == Mode::Ds2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s) || m.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target: PathBuf,
    pub structured: Option<PathBuf>,
    pub kb: PathBuf,
    pub section_map: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub answers: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub mode: Mode,
    pub prop: PropConfig,
    /// Lists kept per relation after propagation.
    pub top_n: usize,
    /// Fraction of seeds in the development split.
    pub seed_ratio: f64,
    pub rng_seed: u64,
    pub window: usize,
    pub drop_top_fraction: f64,
    pub reg_lambda: f64,
    pub epochs: usize,
    /// Per-node degree cap of within-document S-edges.
    pub section_cap: usize,
    pub neighbor_min_sim: f64,
    pub neighbor_cap: usize,
    pub replicates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target: PathBuf::from("target.jsonl"),
            structured: None,
            kb: PathBuf::from("kb.tsv"),
            section_map: None,
            gold: None,
            questions: None,
            answers: None,
            out_dir: PathBuf::from("out"),
            mode: Mode::Full,
            prop: PropConfig::default(),
            top_n: 50,
            seed_ratio: 0.9,
            rng_seed: 0,
            window: features::DEFAULT_WINDOW,
            drop_top_fraction: features::DEFAULT_DROP_TOP,
            reg_lambda: 1e-4,
            epochs: 20,
            section_cap: 10,
            neighbor_min_sim: 0.5,
            neighbor_cap: 10,
            replicates: 3,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths are taken from the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.target);
        fix(&mut self.kb);
        fix(&mut self.out_dir);
        for p in [
            &mut self.structured,
            &mut self.section_map,
            &mut self.gold,
            &mut self.questions,
            &mut self.answers,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.prop.validate()?;
        if !(self.seed_ratio > 0.0 && self.seed_ratio < 1.0) {
            return Err(Error::Config(format!("seed_ratio {} not in (0, 1)", self.seed_ratio)));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.drop_top_fraction) {
            return Err(Error::Config(format!(
                "drop_top_fraction {} not in [0, 1)",
                self.drop_top_fraction
            )));
        }
        if !(self.neighbor_min_sim > 0.0 && self.neighbor_min_sim <= 1.0) {
            return Err(Error::Config(format!(
                "neighbor_min_sim {} not in (0, 1]",
                self.neighbor_min_sim
            )));
        }
        if !(self.reg_lambda > 0.0) {
            return Err(Error::Config("reg_lambda must be positive".into()));
        }
        if self.mode.uses_structured() && self.structured.is_none() {
            return Err(Error::Config(format!("mode {} needs a structured corpus", self.mode)));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            reg_lambda: self.reg_lambda,
            epochs: self.epochs,
            holdout: 0.1,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Seeds,
    Graph,
    Propagate,
    Select,
    Featurize,
    Train,
    Extract,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Seeds,
        Stage::Graph,
        Stage::Propagate,
        Stage::Select,
        Stage::Featurize,
        Stage::Train,
        Stage::Extract,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Seeds => "seeds",
            Stage::Graph => "graph",
            Stage::Propagate => "propagate",
            Stage::Select => "select",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Extract => "extract",
            Stage::Evaluate => "evaluate",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Seeds => &[Stage::Ingest],
            Stage::Graph => &[Stage::Ingest],
            Stage::Propagate => &[Stage::Graph, Stage::Seeds],
            Stage::Select => &[Stage::Propagate, Stage::Seeds, Stage::Ingest],
            Stage::Featurize => &[Stage::Select, Stage::Ingest],
            Stage::Train => &[Stage::Featurize],
            Stage::Extract => &[Stage::Train, Stage::Featurize, Stage::Ingest],
            Stage::Evaluate => &[Stage::Extract],
        }
    }

    fn shared(self) -> bool {
        matches!(self, Stage::Ingest | Stage::Seeds)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Manifest of one completed stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub stage: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl StageArtifact {
    /// Digest over the output digests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.outputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        format!("{:x}", h.finalize())
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub artifact: StageArtifact,
    pub skipped: bool,
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

const TARGET: &str = "target.jsonl";
const STRUCTURED: &str = "structured.jsonl";
const SEEDS_ALL: &str = "seeds.tsv";
const SEEDS_DEV: &str = "development.tsv";
const SEEDS_VAL: &str = "validation.tsv";
const SCORES: &str = "scores.tsv";
const LABELS: &str = "labels.tsv";
const TRAIN_VECTORS: &str = "train.svm";
const FILTER: &str = "filter.txt";
const MODELS: &str = "models.tsv";
const TRIPLES: &str = "triples.tsv";
const REPORT: &str = "report.json";
const PR_CURVE: &str = "pr_curve.csv";
const MANIFEST: &str = "manifest.json";

/// A configured pipeline bound to its output directory.
pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        Ok(Pipeline { config })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        if stage.shared() {
            self.config.out_dir.join(stage.as_str())
        } else {
            self.config.out_dir.join(self.config.mode.slug()).join(stage.as_str())
        }
    }

    pub fn manifest(&self, stage: Stage) -> Option<StageArtifact> {
        let text = fs::read_to_string(self.stage_dir(stage).join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn require(&self, stage: Stage, needed_by: Stage) -> Result<StageArtifact> {
        self.manifest(stage).ok_or_else(|| Error::MissingArtifact {
            stage: needed_by.to_string(),
            run_first: stage.to_string(),
        })
    }

    fn params(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        match stage {
            Stage::Ingest | Stage::Evaluate => json!({}),
            Stage::Seeds => json!({ "seed_ratio": c.seed_ratio, "rng_seed": c.rng_seed }),
            Stage::Graph => json!({
                "mode": c.mode,
                "section_cap": c.section_cap,
                "neighbor_min_sim": c.neighbor_min_sim,
                "neighbor_cap": c.neighbor_cap,
            }),
            Stage::Propagate => json!({ "prop": c.prop }),
            Stage::Select => json!({ "mode": c.mode, "top_n": c.top_n }),
            Stage::Featurize => json!({
                "mode": c.mode,
                "window": c.window,
                "drop_top_fraction": c.drop_top_fraction,
            }),
            Stage::Train => json!({ "reg_lambda": c.reg_lambda, "epochs": c.epochs, "rng_seed": c.rng_seed }),
            Stage::Extract => json!({ "window": c.window }),
        }
    }

    fn external_inputs(&self, stage: Stage) -> Vec<(&'static str, PathBuf)> {
        let c = &self.config;
        let mut out = Vec::new();
        match stage {
            Stage::Ingest => {
                out.push(("file:target", c.target.clone()));
                if let Some(p) = &c.structured {
                    out.push(("file:structured", p.clone()));
                }
            }
            Stage::Seeds => out.push(("file:kb", c.kb.clone())),
            Stage::Graph => {
                if let Some(p) = &c.section_map {
                    out.push(("file:section_map", p.clone()));
                }
            }
            Stage::Evaluate => {
                for (name, p) in [
                    ("file:gold", &c.gold),
                    ("file:questions", &c.questions),
                    ("file:answers", &c.answers),
                ] {
                    if let Some(p) = p {
                        out.push((name, p.clone()));
                    }
                }
            }
            _ => {}
        }
        out
    }

    fn inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        for &up in stage.upstream() {
            inputs.insert(format!("stage:{up}"), self.require(up, stage)?.digest());
        }
        for (name, path) in self.external_inputs(stage) {
            inputs.insert(name.to_string(), digest_file(&path)?);
        }
        inputs.insert("params".into(), digest_bytes(self.params(stage).to_string().as_bytes()));
        Ok(inputs)
    }

    fn up_to_date(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> Option<StageArtifact> {
        let m = self.manifest(stage)?;
        if &m.inputs != inputs {
            return None;
        }
        let dir = self.stage_dir(stage);
        let intact = m
            .outputs
            .iter()
            .all(|(f, d)| digest_file(&dir.join(f)).is_ok_and(|x| &x == d));
        intact.then_some(m)
    }

    /// Runs one stage if its inputs changed (or `force`), recording its
    /// manifest.
    pub fn run_stage(&self, stage: Stage, force: bool) -> Result<StageOutcome> {
        let inputs = self.inputs(stage)?;
        if !force {
            if let Some(artifact) = self.up_to_date(stage, &inputs) {
                log::info!("{stage}: up to date");
                return Ok(StageOutcome {
                    artifact,
                    skipped: true,
                });
            }
        }
        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let files = match stage {
            Stage::Ingest => self.ingest(&dir)?,
            Stage::Seeds => self.seeds(&dir)?,
            Stage::Graph => self.graph(&dir)?,
            Stage::Propagate => self.propagate(&dir)?,
            Stage::Select => self.select(&dir)?,
            Stage::Featurize => self.featurize(&dir)?,
            Stage::Train => self.train(&dir)?,
            Stage::Extract => self.extract(&dir)?,
            Stage::Evaluate => self.evaluate(&dir)?,
        };
        let mut outputs = BTreeMap::new();
        for f in files {
            outputs.insert(f.to_string(), digest_file(&dir.join(f))?);
        }
        let artifact = StageArtifact {
            stage: stage.to_string(),
            inputs,
            outputs,
        };
        let text = serde_json::to_string_pretty(&artifact)?;
        write_file(&dir.join(MANIFEST), text.as_bytes())?;
        log::info!("{stage}: done");
        Ok(StageOutcome {
            artifact,
            skipped: false,
        })
    }

    /// All stages in order, holding the directory lock.
    pub fn run_all(&self, force: bool) -> Result<Vec<StageOutcome>> {
        let _lock = DirLock::acquire(&self.config.out_dir)?;
        Stage::ALL.iter().map(|&s| self.run_stage(s, force)).collect()
    }

    /// Loads the ingested corpora.
    pub fn corpora(&self) -> Result<(Corpus, Corpus)> {
        let dir = self.stage_dir(Stage::Ingest);
        Ok((
            corpus::load_corpus(dir.join(TARGET), CorpusKind::Target)?,
            corpus::load_corpus(dir.join(STRUCTURED), CorpusKind::Structured)?,
        ))
    }

    fn section_map(&self) -> Result<SectionMap> {
        match &self.config.section_map {
            Some(p) => SectionMap::load(p),
            None => Ok(SectionMap::default()),
        }
    }

    pub fn graph_path(&self) -> PathBuf {
        self.stage_dir(Stage::Graph)
    }

    pub fn triples_path(&self) -> PathBuf {
        self.stage_dir(Stage::Extract).join(TRIPLES)
    }

    pub fn report_path(&self) -> PathBuf {
        self.stage_dir(Stage::Evaluate).join(REPORT)
    }

    pub fn report(&self) -> Result<EvalReport> {
        let path = self.report_path();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn ingest(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let target = corpus::load_corpus(&self.config.target, CorpusKind::Target)?;
        let structured = match &self.config.structured {
            Some(p) => corpus::load_corpus(p, CorpusKind::Structured)?,
            None => Corpus {
                documents: Vec::new(),
                kind: CorpusKind::Structured,
            },
        };
        log::info!(
            "ingested {} target and {} structured documents",
            target.documents.len(),
            structured.documents.len()
        );
        write_with(&dir.join(TARGET), |w| corpus::write_corpus(&target, w))?;
        write_with(&dir.join(STRUCTURED), |w| corpus::write_corpus(&structured, w))?;
        Ok(vec![TARGET, STRUCTURED])
    }

    fn seeds(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let (target, structured) = self.corpora()?;
        let triples = kb::load_triples(&self.config.kb)?;
        let stats = name_stats(&[&target, &structured], &triples);
        let mut seeds = kb::generate_seeds(&triples, &target, &stats)?;
        seeds.extend(kb::generate_seeds(&triples, &structured, &stats)?);
        seeds.sort();
        seeds.dedup();
        let split = kb::split_seeds(&seeds, self.config.seed_ratio, self.config.rng_seed)?;
        log::info!(
            "{} seeds: {} development, {} validation",
            seeds.len(),
            split.development.len(),
            split.validation.len()
        );
        write_with(&dir.join(SEEDS_ALL), |w| kb::write_seeds(&seeds, w))?;
        write_with(&dir.join(SEEDS_DEV), |w| kb::write_seeds(&split.development, w))?;
        write_with(&dir.join(SEEDS_VAL), |w| kb::write_seeds(&split.validation, w))?;
        Ok(vec![SEEDS_ALL, SEEDS_DEV, SEEDS_VAL])
    }

    fn development_seeds(&self) -> Result<Vec<Seed>> {
        kb::read_seeds(self.stage_dir(Stage::Seeds).join(SEEDS_DEV))
    }

    fn validation_seeds(&self) -> Result<Vec<Seed>> {
        kb::read_seeds(self.stage_dir(Stage::Seeds).join(SEEDS_VAL))
    }

    fn graph(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let Some(toggles) = self.config.mode.edges() else {
            return Ok(Vec::new());
        };
        let (target, structured) = self.corpora()?;
        let triples = kb::load_triples(&self.config.kb)?;
        let g = build_graph(
            &self.config,
            toggles,
            &target,
            &structured,
            &self.section_map()?,
            &triples,
        )?;
        graph::write_graph(&g, dir)?;
        Ok(vec!["nodes.tsv", "edges.tsv", "aliases.tsv"])
    }

    fn propagate(&self, dir: &Path) -> Result<Vec<&'static str>> {
        if self.config.mode.edges().is_none() {
            return Ok(Vec::new());
        }
        let g = graph::read_graph(&self.graph_path())?;
        let scores = run_mrw(&g, &self.development_seeds()?, &self.config.prop)?;
        write_with(&dir.join(SCORES), |w| propagate::write_scores(&scores, w))?;
        Ok(vec![SCORES])
    }

    fn select(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let labels = match self.config.mode.edges() {
            Some(_) => {
                let g = graph::read_graph(&self.graph_path())?;
                let scores = propagate::read_scores(self.stage_dir(Stage::Propagate).join(SCORES), &g)?;
                select_top_lists(&scores, self.config.top_n)
            }
            None => {
                let (target, structured) = self.corpora()?;
                let corpora: Vec<&Corpus> = if self.config.mode.uses_structured() {
                    vec![&target, &structured]
                } else {
                    vec![&target]
                };
                distant_labels(&corpora, &self.development_seeds()?)
            }
        };
        write_with(&dir.join(LABELS), |w| {
            for (r, keys) in &labels {
                for k in keys {
                    writeln!(w, "{r}\t{k}")?;
                }
            }
            Ok(())
        })?;
        Ok(vec![LABELS])
    }

    fn read_labels(&self) -> Result<BTreeMap<Relation, Vec<NodeKey>>> {
        let path = self.stage_dir(Stage::Select).join(LABELS);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let origin = path.display().to_string();
        let mut out: BTreeMap<Relation, Vec<NodeKey>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let (r, k) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(&origin, i + 1, "columns", line))?;
            let r: Relation = r.parse().map_err(|_| Error::parse(&origin, i + 1, "relation", line))?;
            let k: NodeKey = k.parse().map_err(|_| Error::parse(&origin, i + 1, "node", line))?;
            out.entry(r).or_default().push(k);
        }
        Ok(out)
    }

    fn featurize(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let (target, structured) = self.corpora()?;
        let corpora: Vec<&Corpus> = if self.config.mode.uses_structured() {
            vec![&target, &structured]
        } else {
            vec![&target]
        };
        let labels = self.read_labels()?;
        let (set, filter) = training_set(&labels, &corpora, self.config.window, self.config.drop_top_fraction)?;
        write_with(&dir.join(TRAIN_VECTORS), |w| write_training_set(&set, w))?;
        write_with(&dir.join(FILTER), |w| features::write_filter(&filter, w))?;
        Ok(vec![TRAIN_VECTORS, FILTER])
    }

    fn load_filter(&self) -> Result<FeatureFilter> {
        let path = self.stage_dir(Stage::Featurize).join(FILTER);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        features::parse_filter(&text, &path.display().to_string())
    }

    fn train(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let path = self.stage_dir(Stage::Featurize).join(TRAIN_VECTORS);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let set = parse_training_set(&text, &path.display().to_string())?;
        let models = classify::train(&set, &self.config.train_config())?;
        write_with(&dir.join(MODELS), |w| classify::write_models(&models, w))?;
        Ok(vec![MODELS])
    }

    pub fn models(&self) -> Result<Vec<LinearModel>> {
        let path = self.stage_dir(Stage::Train).join(MODELS);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        classify::parse_models(&text, &path.display().to_string())
    }

    fn extract(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let (target, _) = self.corpora()?;
        let store = classify::extract_triples(&self.models()?, &target, &self.load_filter()?, self.config.window)?;
        log::info!("extracted {} triples", store.len());
        write_with(&dir.join(TRIPLES), |w| store.write(w))?;
        Ok(vec![TRIPLES])
    }

    fn evaluate(&self, dir: &Path) -> Result<Vec<&'static str>> {
        let gold_path = self
            .config
            .gold
            .as_ref()
            .ok_or_else(|| Error::Config("evaluate needs a gold file".into()))?;
        let gold = GoldSet::load(gold_path)?;
        let store = TripleStore::load(self.triples_path())?;
        let mut report = evaluate::ir_eval(&store, &gold);
        if let (Some(q), Some(a)) = (&self.config.questions, &self.config.answers) {
            report.qa = Some(qa_report(&store, q, a)?);
        }
        log::info!(
            "{}: P={:.3} R={:.3} F1={:.3}",
            self.config.mode,
            report.micro.precision,
            report.micro.recall,
            report.micro.f1
        );
        let text = serde_json::to_string_pretty(&report)?;
        write_file(&dir.join(REPORT), text.as_bytes())?;
        write_with(&dir.join(PR_CURVE), |w| write_curve(self.config.mode, &report, w))?;
        Ok(vec![REPORT, PR_CURVE])
    }
}

fn qa_report(store: &TripleStore, questions: &Path, answers: &Path) -> Result<QaScores> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let rules = evaluate::parse_rules(&read(questions)?, &questions.display().to_string())?;
    let gold = evaluate::parse_answers(&read(answers)?, &answers.display().to_string())?;
    let got: BTreeMap<usize, Vec<String>> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                i + 1,
                evaluate::answer_query(r, store).into_iter().map(|(a, _)| a).collect(),
            )
        })
        .collect();
    Ok(evaluate::qa_eval(&got, &gold))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}

/// `mode,recall,precision` rows of the 11-point curve.
pub fn write_curve(mode: Mode, report: &EvalReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "mode,recall,precision")?;
    for (i, p) in report.pr_curve.iter().enumerate() {
        writeln!(out, "{mode},{:.1},{p}", i as f64 / 10.0)?;
    }
    Ok(())
}

/// Name statistics over every NP, subject and knowledge-base string.
pub fn name_stats(corpora: &[&Corpus], kb: &[Triple]) -> TokenStats {
    let mut names = BTreeSet::new();
    for c in corpora {
        for d in &c.documents {
            names.insert(corpus::normalize(&d.subject));
        }
        for m in c.mentions() {
            names.insert(m.normalized);
        }
    }
    for t in kb {
        names.insert(corpus::normalize(&t.subject));
        names.insert(corpus::normalize(&t.object));
    }
    TokenStats::from_texts(names)
}

/// Builds the propagation graph of one mode.
pub fn build_graph(
    config: &PipelineConfig,
    toggles: EdgeToggles,
    target: &Corpus,
    structured: &Corpus,
    sections: &SectionMap,
    kb: &[Triple],
) -> Result<PropGraph> {
    let stats = name_stats(&[target, structured], kb);
    let gt = graph::build_bipartite(target);
    if !toggles.use_structured_lists {
        return graph::merge_graphs(&[&gt], &stats);
    }
    let gs = graph::build_bipartite(structured);
    let mut g = graph::merge_graphs(&[&gt, &gs], &stats)?;
    if toggles.use_s {
        let report = graph::add_section_edges(&mut g, structured, sections, &stats, config.section_cap)?;
        for (title, n) in &report.skipped {
            log::warn!("section `{title}` is not in the section map; skipped {n} times");
        }
        log::info!("{} S-edges", report.added);
    }
    if toggles.use_n {
        let contexts = graph::build_contexts(&g, &[target, structured]);
        let n = graph::add_neighbor_edges(&mut g, &contexts, config.neighbor_min_sim, config.neighbor_cap)?;
        log::info!("{n} N-edges");
    }
    Ok(g)
}

/// MRW from the seeds that resolve to graph nodes.
pub fn run_mrw(g: &PropGraph, seeds: &[Seed], prop: &PropConfig) -> Result<ScoreTable> {
    let mut by_class: BTreeMap<Relation, Vec<NodeKey>> = BTreeMap::new();
    let mut missing = 0;
    for s in seeds {
        match g.resolve(&s.node) {
            Some(k) => by_class.entry(s.relation).or_default().push(k),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::info!("{missing} seeds are not in this graph");
    }
    let vectors: Vec<SeedVector> = by_class
        .into_iter()
        .map(|(r, nodes)| SeedVector::uniform(r, nodes))
        .collect();
    propagate::mrw(g, &vectors, prop)
}

/// The `n` best lists per relation among those whose argmax label is that
/// relation.
pub fn select_top_lists(scores: &ScoreTable, n: usize) -> BTreeMap<Relation, Vec<NodeKey>> {
    let labels = propagate::assign_labels(scores);
    let mut out = BTreeMap::new();
    for (c, &r) in scores.classes.iter().enumerate() {
        let mut ranked: Vec<(f64, &NodeKey)> = scores
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_list() && labels.get(*k) == Some(&r))
            .map(|(i, k)| (scores.scores[c][i], k))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        out.insert(r, ranked.into_iter().take(n).map(|(_, k)| k.clone()).collect());
    }
    out
}

pub fn list_key(corpus: &Corpus, list: &CoordList) -> NodeKey {
    NodeKey::List(ListKey {
        corpus: corpus.kind,
        doc_id: corpus.documents[list.sentence_ref.doc].doc_id.clone(),
        sentence: list.sentence_ref.sentence,
        ordinal: list.ordinal,
    })
}

/// Lists with at least one item that is a seed, labeled with every seed
/// relation among their items.
pub fn distant_labels(corpora: &[&Corpus], seeds: &[Seed]) -> BTreeMap<Relation, Vec<NodeKey>> {
    let mut by_pair: BTreeMap<(&str, &str), BTreeSet<Relation>> = BTreeMap::new();
    for s in seeds {
        by_pair
            .entry((&s.node.subject, &s.node.np))
            .or_default()
            .insert(s.relation);
    }
    let mut out: BTreeMap<Relation, BTreeSet<NodeKey>> = BTreeMap::new();
    for c in corpora {
        for l in c.coord_lists() {
            let subject = corpus::normalize(&c.documents[l.sentence_ref.doc].subject);
            for m in &l.items {
                if let Some(rels) = by_pair.get(&(subject.as_str(), m.normalized.as_str())) {
                    for &r in rels {
                        out.entry(r).or_default().insert(list_key(c, &l));
                    }
                }
            }
        }
    }
    out.into_iter().map(|(r, s)| (r, s.into_iter().collect())).collect()
}

/// Featurizes every list of `corpora`; labeled lists become positives, the
/// rest the unlabeled pool. The filter is fit on all of them.
pub fn training_set(
    labels: &BTreeMap<Relation, Vec<NodeKey>>,
    corpora: &[&Corpus],
    window: usize,
    drop_top_fraction: f64,
) -> Result<(TrainingSet, FeatureFilter)> {
    let mut vectors: BTreeMap<NodeKey, FeatureVector> = BTreeMap::new();
    for c in corpora {
        for l in c.coord_lists() {
            vectors.insert(list_key(c, &l), features::featurize_in(c, &l, window)?);
        }
    }
    let all: Vec<FeatureVector> = vectors.values().cloned().collect();
    let filter = features::fit_filter(&all, drop_top_fraction)?;
    let labeled: BTreeSet<&NodeKey> = labels.values().flatten().collect();
    let mut set = TrainingSet::default();
    for (r, keys) in labels {
        let exs = keys
            .iter()
            .filter_map(|k| {
                vectors.get(k).map(|v| Example {
                    id: k.to_string(),
                    features: features::apply_filter(&filter, v),
                })
            })
            .collect();
        set.positives.insert(*r, exs);
    }
    set.unlabeled = vectors
        .iter()
        .filter(|(k, _)| !labeled.contains(k))
        .map(|(k, v)| Example {
            id: k.to_string(),
            features: features::apply_filter(&filter, v),
        })
        .collect();
    Ok((set, filter))
}

/// Sparse lines labeled `relation|id`, with `other|id` for the pool.
pub fn write_training_set(set: &TrainingSet, out: &mut impl Write) -> std::io::Result<()> {
    for (r, exs) in &set.positives {
        for e in exs {
            let label = format!("{r}|{}", e.id);
            features::write_vectors([(label.as_str(), &e.features)], &mut *out)?;
        }
    }
    for e in &set.unlabeled {
        let label = format!("other|{}", e.id);
        features::write_vectors([(label.as_str(), &e.features)], &mut *out)?;
    }
    Ok(())
}

pub fn parse_training_set(text: &str, origin: &str) -> Result<TrainingSet> {
    let mut set = TrainingSet::default();
    for (i, (label, features)) in features::parse_vectors(text, origin)?.into_iter().enumerate() {
        let (class, id) = label
            .split_once('|')
            .ok_or_else(|| Error::parse(origin, i + 1, "label", &label))?;
        let e = Example {
            id: id.to_string(),
            features,
        };
        if class == "other" {
            set.unlabeled.push(e);
        } else {
            let r: Relation = class
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "label", &label))?;
            set.positives.entry(r).or_default().push(e);
        }
    }
    Ok(set)
}

/// One point of a tuning sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub top_n: usize,
    pub seed_ratio: f64,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub rows: Vec<TuneRow>,
    pub best: TuneRow,
}

/// Lists MRW ranks in the top `n` from the validation seeds serve as
/// pseudo-gold for classifiers trained from development seeds.
pub const VALIDATION_TOP_N: usize = 200;

/// Grid search over `top_n` and the fraction of development seeds used.
/// Needs the ingest, seeds and graph stages of a propagation mode.
pub fn tune(pipeline: &Pipeline, top_n_grid: &[usize], seed_ratio_grid: &[f64]) -> Result<TuneReport> {
    if top_n_grid.is_empty() || seed_ratio_grid.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let config = &pipeline.config;
    if config.mode.edges().is_none() {
        return Err(Error::Config(format!(
            "mode {} has no propagation to tune",
            config.mode
        )));
    }
    for st in [Stage::Ingest, Stage::Seeds, Stage::Graph] {
        pipeline.require(st, Stage::Propagate)?;
    }
    let g = graph::read_graph(&pipeline.graph_path())?;
    let (target, structured) = pipeline.corpora()?;
    let corpora: Vec<&Corpus> = if config.mode.uses_structured() {
        vec![&target, &structured]
    } else {
        vec![&target]
    };
    let dev = pipeline.development_seeds()?;
    let val_scores = run_mrw(&g, &pipeline.validation_seeds()?, &config.prop)?;
    let pseudo_gold = select_top_lists(&val_scores, VALIDATION_TOP_N);

    let mut lists: BTreeMap<NodeKey, (&Corpus, CoordList)> = BTreeMap::new();
    for c in &corpora {
        for l in c.coord_lists() {
            lists.insert(list_key(c, &l), (*c, l));
        }
    }

    let mut rows = Vec::new();
    for &ratio in seed_ratio_grid {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!("seed ratio {ratio} not in (0, 1]")));
        }
        let seeds = if ratio >= 1.0 {
            dev.clone()
        } else {
            kb::subsample_seeds(&dev, ratio, config.rng_seed)
        };
        let scores = run_mrw(&g, &seeds, &config.prop)?;
        for &n in top_n_grid {
            let labels = select_top_lists(&scores, n);
            let (set, filter) = training_set(&labels, &corpora, config.window, config.drop_top_fraction)?;
            let models = classify::train(&set, &config.train_config())?;
            let (mut correct, mut predicted, mut total) = (0, 0, 0);
            for (r, keys) in &pseudo_gold {
                for k in keys {
                    let Some((c, l)) = lists.get(k) else { continue };
                    total += 1;
                    let x = features::apply_filter(&filter, &features::featurize_in(c, l, config.window)?);
                    let p = classify::predict(&models, &x);
                    if let Some(pr) = p.relation {
                        predicted += 1;
                        if pr == *r {
                            correct += 1;
                        }
                    }
                }
            }
            rows.push(TuneRow {
                top_n: n,
                seed_ratio: ratio,
                prf: Prf::from_counts(correct, predicted, total),
            });
        }
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.prf.f1.total_cmp(&b.prf.f1).then_with(|| b.top_n.cmp(&a.top_n)))
        .cloned()
        .expect("non-empty grid");
    Ok(TuneReport { rows, best })
}

/// Runs the whole pipeline `n_runs` times with seeds `rng_seed + k` in
/// `out_dir/run{k}` and averages the aggregate metrics.
pub fn run_replicates(config: &PipelineConfig, n_runs: usize, force: bool) -> Result<(EvalReport, Vec<EvalReport>)> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    let mut reports = Vec::with_capacity(n_runs);
    for k in 0..n_runs {
        let mut c = config.clone();
        c.rng_seed = config.rng_seed + k as u64;
        c.out_dir = config.out_dir.join(format!("run{k}"));
        let p = Pipeline::new(c)?;
        p.run_all(force)?;
        reports.push(p.report()?);
    }
    Ok((mean_report(&reports), reports))
}

/// Mean of the aggregate metrics; per-query rows are dropped.
pub fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len().max(1) as f64;
    let mean_prf = |f: fn(&EvalReport) -> Prf| Prf {
        precision: reports.iter().map(|r| f(r).precision).sum::<f64>() / n,
        recall: reports.iter().map(|r| f(r).recall).sum::<f64>() / n,
        f1: reports.iter().map(|r| f(r).f1).sum::<f64>() / n,
    };
    let levels = reports.iter().map(|r| r.pr_curve.len()).max().unwrap_or(0);
    let pr_curve = (0..levels)
        .map(|i| {
            reports
                .iter()
                .map(|r| r.pr_curve.get(i).copied().unwrap_or(0.0))
                .sum::<f64>()
                / n
        })
        .collect();
    let qa = if reports.iter().all(|r| r.qa.is_some()) && !reports.is_empty() {
        let q: Vec<QaScores> = reports.iter().filter_map(|r| r.qa).collect();
        Some(QaScores {
            mrr: q.iter().map(|x| x.mrr).sum::<f64>() / n,
            map: q.iter().map(|x| x.map).sum::<f64>() / n,
            recall: q.iter().map(|x| x.recall).sum::<f64>() / n,
        })
    } else {
        None
    };
    EvalReport {
        queries: Vec::new(),
        micro: mean_prf(|r| r.micro),
        macro_avg: mean_prf(|r| r.macro_avg),
        pr_curve,
        qa,
    }
}

/// Edge-type counts, for checking a serialized graph against its mode.
pub fn edge_census(g: &PropGraph) -> BTreeMap<EdgeType, usize> {
    [EdgeType::L, EdgeType::S, EdgeType::N]
        .into_iter()
        .map(|t| (t, g.count_edges(t)))
        .collect()
}
