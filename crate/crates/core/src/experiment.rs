//! Experiment configuration and the collect → train → eval → play pipeline.
//!
//! Every stage writes its artifacts under the configured output directory as
//! soon as it finishes, and every random choice is derived from the single
//! configured seed, so reruns produce byte-identical files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentParams;
use crate::harness::{
    self, accuracy, derive_seed, play_eval, write_results_csv, ResultRow, TransitionDataset,
};
use crate::levels::LevelSet;
use crate::models::{self, AnyModel, ExactMatchModel, ForwardModel, ModelKind, StaticModel, TreeModel, TrueModel};
use crate::patterns::{PatternSpec, Shape};
use crate::tuner::{ntbea_run, NtbeaReport, NtbeaSettings, ParamSpace};
use crate::{Error, Result};

/// The three level sets of the protocol, in output order.
pub const LEVEL_SETS: [&str; 3] = ["train", "easy", "hard"];
/// The level sets models are evaluated on.
pub const TEST_SETS: [&str; 2] = ["easy", "hard"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelPaths {
    pub train: String,
    pub easy: String,
    pub hard: String,
}

impl Default for LevelPaths {
    fn default() -> Self {
        LevelPaths {
            train: "bundled:train".into(),
            easy: "bundled:easy".into(),
            hard: "bundled:hard".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Collection {
    pub playouts: usize,
    pub steps: usize,
}

impl Default for Collection {
    fn default() -> Self {
        Collection {
            playouts: 100,
            steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelGrid {
    pub shapes: Vec<Shape>,
    pub spans: Vec<u32>,
    /// Learner kinds only: `exact` and `tree`.
    pub kinds: Vec<ModelKind>,
}

impl Default for ModelGrid {
    fn default() -> Self {
        ModelGrid {
            shapes: vec![Shape::Cross, Shape::Square],
            spans: vec![1, 2, 3],
            kinds: vec![ModelKind::Exact, ModelKind::Tree],
        }
    }
}

impl ModelGrid {
    /// `(kind, spec)` for every learned model, shape-major.
    pub fn entries(&self) -> Result<Vec<(ModelKind, PatternSpec)>> {
        let mut out = Vec::new();
        for &shape in &self.shapes {
            for &span in &self.spans {
                let spec = PatternSpec::new(shape, span)?;
                for &kind in &self.kinds {
                    out.push((kind, spec));
                }
            }
        }
        Ok(out)
    }
}

/// Either explicit agent parameters or the keyword `"tune"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSetting {
    Keyword(String),
    Params(AgentParams),
}

impl Default for AgentSetting {
    fn default() -> Self {
        AgentSetting::Params(AgentParams::default())
    }
}

impl AgentSetting {
    pub fn is_tune(&self) -> bool {
        matches!(self, AgentSetting::Keyword(k) if k == "tune")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    pub iterations: usize,
    pub k: f64,
    pub epsilon: f64,
    pub neighbours: usize,
    pub mutation_prob: f64,
}

impl Default for Tuning {
    fn default() -> Self {
        let s = NtbeaSettings::default();
        Tuning {
            iterations: s.iterations,
            k: s.k,
            epsilon: s.epsilon,
            neighbours: s.neighbours,
            mutation_prob: s.mutation_prob,
        }
    }
}

impl From<Tuning> for NtbeaSettings {
    fn from(t: Tuning) -> Self {
        NtbeaSettings {
            iterations: t.iterations,
            k: t.k,
            epsilon: t.epsilon,
            neighbours: t.neighbours,
            mutation_prob: t.mutation_prob,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    pub repeats: usize,
    pub max_steps: usize,
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation {
            repeats: 20,
            max_steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub levels: LevelPaths,
    pub collection: Collection,
    pub models: ModelGrid,
    pub agent: AgentSetting,
    pub tuning: Tuning,
    pub evaluation: Evaluation,
    pub seed: u64,
    pub out: PathBuf,
    /// Directory that relative level paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            levels: LevelPaths::default(),
            collection: Collection::default(),
            models: ModelGrid::default(),
            agent: AgentSetting::default(),
            tuning: Tuning::default(),
            evaluation: Evaluation::default(),
            seed: 42,
            out: PathBuf::from("out"),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative paths inside it are relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut config = Self::from_json(&text, &base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if config.out.is_relative() {
            config.out = base.join(&config.out);
        }
        Ok(config)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.collection.playouts == 0 || self.collection.steps == 0 {
            return bad("collection.playouts and collection.steps must be positive".into());
        }
        if self.evaluation.repeats == 0 || self.evaluation.max_steps == 0 {
            return bad("evaluation.repeats and evaluation.max_steps must be positive".into());
        }
        if let Some(k) = self.models.kinds.iter().find(|k| !matches!(k, ModelKind::Exact | ModelKind::Tree)) {
            return bad(format!("models.kinds: {k} is a baseline, not a learner"));
        }
        self.models.entries().map_err(|e| Error::Config(format!("models: {e}")))?;
        match &self.agent {
            AgentSetting::Keyword(k) if k != "tune" => {
                return bad(format!("agent: expected parameters or \"tune\", got {k:?}"));
            }
            AgentSetting::Params(p) => p.validate().map_err(|e| Error::Config(format!("agent: {e}")))?,
            _ => {}
        }
        if self.tuning.iterations == 0 {
            return bad("tuning.iterations must be positive".into());
        }
        Ok(())
    }

    pub fn level_source(&self, set: &str) -> Result<&str> {
        match set {
            "train" => Ok(&self.levels.train),
            "easy" => Ok(&self.levels.easy),
            "hard" => Ok(&self.levels.hard),
            other => Err(Error::InvalidArgument(format!("unknown level set {other:?}"))),
        }
    }

    /// Loads one of `train`, `easy`, `hard`, named after its role.
    pub fn level_set(&self, set: &str) -> Result<LevelSet> {
        let mut levels = LevelSet::resolve(self.level_source(set)?, &self.base_dir)?;
        levels.name = set.to_string();
        Ok(levels)
    }

    pub fn dataset_path(&self, set: &str) -> PathBuf {
        self.out.join("datasets").join(format!("{set}.transitions"))
    }

    pub fn model_path(&self, kind: ModelKind, spec: PatternSpec) -> PathBuf {
        self.out.join("models").join(format!("{kind}-{}-{}.lfm", spec.shape, spec.span))
    }

    fn set_index(set: &str) -> u64 {
        LEVEL_SETS.iter().position(|s| *s == set).unwrap_or(LEVEL_SETS.len()) as u64
    }

    pub fn collection_seed(&self, set: &str) -> u64 {
        derive_seed(self.seed, &[0xDA7A, Self::set_index(set)])
    }

    /// Shared by every model, so all agents face the same episode seeds.
    pub fn play_seed(&self, set: &str) -> u64 {
        derive_seed(self.seed, &[0x9A7E, Self::set_index(set)])
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Collects and writes the dataset of every level set.
pub fn cmd_collect(config: &ExperimentConfig) -> Result<Vec<(String, TransitionDataset)>> {
    let mut out = Vec::new();
    for set in LEVEL_SETS {
        let levels = config.level_set(set)?;
        let data = harness::collect(
            &levels,
            config.collection.playouts,
            config.collection.steps,
            config.collection_seed(set),
        )?;
        write_file(&config.dataset_path(set), |w| harness::write_dataset(w, &data))?;
        out.push((set.to_string(), data));
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<TransitionDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    harness::read_dataset(BufReader::new(file), &path.display().to_string())
}

/// A trained or loaded model with its place in the grid.
pub struct NamedModel {
    pub kind: ModelKind,
    pub spec: Option<PatternSpec>,
    pub model: AnyModel,
}

impl NamedModel {
    fn row(&self, level_set: &str, seed: u64) -> ResultRow {
        ResultRow {
            model: self.kind.to_string(),
            shape: self.spec.map(|s| s.shape.to_string()),
            span: self.spec.map(|s| s.span),
            level_set: level_set.to_string(),
            accuracy: None,
            score: None,
            model_size: self.spec.map(|_| self.model.size_statistic()),
            seed,
        }
    }

    pub fn label(&self) -> String {
        self.model.descriptor().to_string()
    }
}

/// The Static and True baselines.
pub fn baselines() -> Vec<NamedModel> {
    vec![
        NamedModel {
            kind: ModelKind::Static,
            spec: None,
            model: AnyModel::Static(StaticModel),
        },
        NamedModel {
            kind: ModelKind::True,
            spec: None,
            model: AnyModel::True(TrueModel),
        },
    ]
}

/// Trains every model of the grid on `train` and writes the model files.
pub fn cmd_train(config: &ExperimentConfig, train: &TransitionDataset) -> Result<Vec<NamedModel>> {
    let mut out = Vec::new();
    let mut last: Option<ExactMatchModel> = None;
    for (kind, spec) in config.models.entries()? {
        // the exact table of a spec is shared by both learners
        let table = match last.take() {
            Some(t) if t.spec() == spec => t,
            _ => ExactMatchModel::from_transitions(train.triples(), spec)?,
        };
        let model = match kind {
            ModelKind::Tree => AnyModel::Tree(TreeModel::from_counts(&table)?),
            _ => AnyModel::Exact(table.clone()),
        };
        last = Some(table);
        let path = config.model_path(kind, spec);
        create_parent(&path)?;
        models::save_model(&path, &model)?;
        out.push(NamedModel {
            kind,
            spec: Some(spec),
            model,
        });
    }
    Ok(out)
}

/// Loads the grid's model files written by [`cmd_train`].
pub fn load_models(config: &ExperimentConfig) -> Result<Vec<NamedModel>> {
    config
        .models
        .entries()?
        .into_iter()
        .map(|(kind, spec)| {
            let path = config.model_path(kind, spec);
            let model = models::load_model(&path)?;
            let d = model.descriptor();
            if d.kind != kind || d.spec != Some(spec) {
                return Err(Error::format(path.display(), format!("expected a {kind}-{spec} model, found {d}")));
            }
            Ok(NamedModel {
                kind,
                spec: Some(spec),
                model,
            })
        })
        .collect()
}

/// One-step accuracy of every model on each test dataset, written to
/// `accuracy.csv`.
pub fn cmd_eval(
    config: &ExperimentConfig,
    models: &[NamedModel],
    datasets: &[(String, TransitionDataset)],
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (set, data) in datasets.iter().filter(|(s, _)| TEST_SETS.contains(&s.as_str())) {
        for m in models {
            let mut row = m.row(set, config.seed);
            row.accuracy = Some(accuracy(&m.model, data));
            rows.push(row);
        }
    }
    write_file(&config.out.join("accuracy.csv"), |w| write_results_csv(w, &rows))?;
    Ok(rows)
}

/// Per-level score line of `play_levels.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRow {
    pub model: String,
    pub level_set: String,
    pub level: String,
    pub mean_score: f64,
    pub wins: usize,
    pub repeats: usize,
}

/// Plays every test set with every model, writing `play.csv` and the
/// per-level breakdown `play_levels.csv`.
pub fn cmd_play(
    config: &ExperimentConfig,
    models: &[NamedModel],
    params: &AgentParams,
) -> Result<(Vec<ResultRow>, Vec<LevelRow>)> {
    let mut rows = Vec::new();
    let mut level_rows = Vec::new();
    for set in TEST_SETS {
        let levels = config.level_set(set)?;
        for m in models {
            let report = play_eval(
                params,
                &m.model,
                &levels,
                config.evaluation.repeats,
                config.evaluation.max_steps,
                config.play_seed(set),
            )?;
            let mut row = m.row(set, config.seed);
            row.score = Some(report.mean_score);
            rows.push(row);
            for l in report.per_level {
                level_rows.push(LevelRow {
                    model: m.label(),
                    level_set: set.to_string(),
                    level: l.name,
                    mean_score: l.mean_score,
                    wins: l.wins,
                    repeats: config.evaluation.repeats,
                });
            }
        }
    }
    write_file(&config.out.join("play.csv"), |w| write_results_csv(w, &rows))?;
    write_file(&config.out.join("play_levels.csv"), |w| {
        writeln!(w, "model,level_set,level,mean_score,wins,repeats")?;
        for r in &level_rows {
            writeln!(
                w,
                "{},{},{},{:.4},{},{}",
                r.model, r.level_set, r.level, r.mean_score, r.wins, r.repeats
            )?;
        }
        Ok(())
    })?;
    Ok((rows, level_rows))
}

/// Tunes the agent with NTBEA against the true engine on the training
/// levels. Each evaluation plays every training level once; writes
/// `tuning.csv` and `agent_params.json`.
pub fn cmd_tune(config: &ExperimentConfig) -> Result<(AgentParams, NtbeaReport)> {
    let space = ParamSpace::agent_default();
    let train = config.level_set("train")?;
    let base = AgentParams::default();
    let mut iteration = 0u64;
    let mut failure = None;
    let objective = |point: &[usize]| {
        let params = space.agent_params(point, base);
        let seed = derive_seed(config.seed, &[0x7E4E, iteration]);
        iteration += 1;
        match play_eval(&params, &TrueModel, &train, 1, config.evaluation.max_steps, seed) {
            Ok(r) => r.mean_score,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x7E4E]));
    let report = ntbea_run(&space, objective, &config.tuning.into(), &mut rng)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let params = space.agent_params(&report.recommendation, base);
    write_file(&config.out.join("tuning.csv"), |w| {
        let names: Vec<&str> = space.dimensions.iter().map(|d| d.name.as_str()).collect();
        writeln!(w, "iteration,{},fitness", names.join(","))?;
        let values = |p: &[usize]| {
            space
                .values(p)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        for (i, (p, f)) in report.log.iter().enumerate() {
            writeln!(w, "{i},{},{f:.4}", values(p))?;
        }
        let best = report
            .landscape
            .full_tuple()
            .get(&report.recommendation)
            .map(|s| s.mean())
            .unwrap_or_default();
        writeln!(w, "recommended,{},{best:.4}", values(&report.recommendation))
    })?;
    write_file(&config.out.join("agent_params.json"), |w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&params).expect("params serialize"))
    })?;
    Ok((params, report))
}

/// The agent parameters to play with: explicit ones, else a previously
/// tuned `agent_params.json`, else a fresh tuning run.
pub fn resolve_agent(config: &ExperimentConfig) -> Result<AgentParams> {
    match &config.agent {
        AgentSetting::Params(p) => Ok(*p),
        AgentSetting::Keyword(_) => {
            let path = config.out.join("agent_params.json");
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let p: AgentParams =
                    serde_json::from_str(&text).map_err(|e| Error::format(path.display(), e.to_string()))?;
                p.validate()?;
                Ok(p)
            } else {
                Ok(cmd_tune(config)?.0)
            }
        }
    }
}

/// Joins accuracy and play rows on (model, shape, span, level set).
pub fn merge_rows(accuracy_rows: &[ResultRow], play_rows: &[ResultRow]) -> Vec<ResultRow> {
    let key = |r: &ResultRow| (r.model.clone(), r.shape.clone(), r.span, r.level_set.clone());
    let mut merged: Vec<ResultRow> = accuracy_rows.to_vec();
    for p in play_rows {
        match merged.iter_mut().find(|r| key(r) == key(p)) {
            Some(r) => r.score = p.score,
            None => merged.push(p.clone()),
        }
    }
    merged
}

/// Everything `run` produced.
pub struct RunOutput {
    pub params: AgentParams,
    pub models: Vec<NamedModel>,
    pub rows: Vec<ResultRow>,
}

/// Full pipeline: collect, train, eval, (tune,) play, then `results.csv`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutput> {
    let datasets = cmd_collect(config)?;
    let train = &datasets.iter().find(|(s, _)| s == "train").expect("train collected").1;
    let mut models = baselines();
    models.extend(cmd_train(config, train)?);
    let acc = cmd_eval(config, &models, &datasets)?;
    let params = resolve_agent(config)?;
    let (play, _) = cmd_play(config, &models, &params)?;
    let rows = merge_rows(&acc, &play);
    write_file(&config.out.join("results.csv"), |w| write_results_csv(w, &rows))?;
    Ok(RunOutput { params, models, rows })
}
