//! Experiment building blocks: random-agent data collection, one-step
//! accuracy, playing performance, rollout divergence, result rows and the
//! engine throughput benchmark.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{random_action, AgentParams, RheaAgent};
use crate::engine::{Action, GameState, Tile};
use crate::levels::{serialize_level, validate, LevelSet};
use crate::models::ForwardModel;
use crate::{Error, Result};

/// Derives an independent seed for a sub-task (splitmix64 over the parts).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

pub fn task_rng(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// One observed step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    /// Index of the level within its set.
    pub level: usize,
    pub prev: GameState,
    pub action: Action,
    pub next: GameState,
}

/// How a dataset was produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub level_set: String,
    pub playouts: usize,
    pub steps: usize,
    pub seed: u64,
    /// Episodes restart from the initial level after a win.
    pub reset_on_win: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionDataset {
    pub records: Vec<Transition>,
    pub provenance: Provenance,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(prev, action, next)` triples, the shape the model trainers take.
    pub fn triples(&self) -> impl Iterator<Item = (&GameState, Action, &GameState)> {
        self.records.iter().map(|r| (&r.prev, r.action, &r.next))
    }
}

/// Plays `playouts` episodes of `steps` uniformly random actions on every
/// level and records each transition. A won episode restarts from the level's
/// initial state and keeps recording.
pub fn collect(levels: &LevelSet, playouts: usize, steps: usize, seed: u64) -> Result<TransitionDataset> {
    if levels.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    let tasks: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|l| (0..playouts).map(move |p| (l, p)))
        .collect();
    let chunks: Vec<Vec<Transition>> = tasks
        .par_iter()
        .map(|&(l, p)| {
            let mut rng = task_rng(seed, &[0xC011EC7, l as u64, p as u64]);
            let initial = &levels.levels[l].state;
            let mut state = initial.clone();
            let mut out = Vec::with_capacity(steps);
            for _ in 0..steps {
                let action = random_action(&mut rng);
                let next = state.step(action);
                let won = next.is_win();
                out.push(Transition {
                    level: l,
                    prev: state,
                    action,
                    next: next.clone(),
                });
                state = if won { initial.clone() } else { next };
            }
            out
        })
        .collect();
    Ok(TransitionDataset {
        records: chunks.into_iter().flatten().collect(),
        provenance: Provenance {
            level_set: levels.name.clone(),
            playouts,
            steps,
            seed,
            reset_on_win: true,
        },
    })
}

/// Mean over records of the fraction of tiles predicted correctly.
/// An empty dataset scores 0.
pub fn accuracy(model: &dyn ForwardModel, data: &TransitionDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let per_record: Vec<f64> = data
        .records
        .par_iter()
        .map(|r| {
            let predicted = model.predict_grid(&r.prev, r.action);
            let wrong = predicted.tile_differences(&r.next);
            (r.next.area() - wrong) as f64 / r.next.area() as f64
        })
        .collect();
    // summed in record order so results do not depend on thread count
    per_record.iter().sum::<f64>() / per_record.len() as f64
}

/// Result of one played episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub level: usize,
    pub repeat: usize,
    pub score: usize,
    pub won: bool,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelScore {
    pub name: String,
    pub mean_score: f64,
    pub wins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlayReport {
    /// Mean final score over all levels and repeats.
    pub mean_score: f64,
    pub per_level: Vec<LevelScore>,
    pub episodes: Vec<Episode>,
}

/// Plays one episode: the agent plans with `model`, the environment always
/// advances with the engine.
pub fn play_episode(
    params: &AgentParams,
    model: &dyn ForwardModel,
    initial: &GameState,
    max_steps: usize,
    seed: u64,
) -> (GameState, Vec<Action>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = RheaAgent::new(model, *params);
    let mut state = initial.clone();
    let mut actions = Vec::new();
    while actions.len() < max_steps && !state.is_win() {
        let a = agent.act(&state, &mut rng);
        state.apply(a);
        actions.push(a);
    }
    (state, actions)
}

/// Plays every level `repeats` times. Episode seeds depend only on `seed`,
/// the level and the repeat, so different models face identical randomness.
pub fn play_eval(
    params: &AgentParams,
    model: &dyn ForwardModel,
    levels: &LevelSet,
    repeats: usize,
    max_steps: usize,
    seed: u64,
) -> Result<PlayReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    if levels.is_empty() {
        return Err(Error::EmptyLevelSet);
    }
    params.validate()?;
    let tasks: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|l| (0..repeats).map(move |r| (l, r)))
        .collect();
    let episodes: Vec<Episode> = tasks
        .par_iter()
        .map(|&(l, r)| {
            let seed = derive_seed(seed, &[0x91A7, l as u64, r as u64]);
            let (fin, actions) = play_episode(params, model, &levels.levels[l].state, max_steps, seed);
            Episode {
                level: l,
                repeat: r,
                score: fin.score(),
                won: fin.is_win(),
                actions,
            }
        })
        .collect();
    let per_level = levels
        .levels
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let eps = &episodes[l * repeats..(l + 1) * repeats];
            LevelScore {
                name: level.name.clone(),
                mean_score: eps.iter().map(|e| e.score as f64).sum::<f64>() / repeats as f64,
                wins: eps.iter().filter(|e| e.won).count(),
            }
        })
        .collect();
    let mean_score = episodes.iter().map(|e| e.score as f64).sum::<f64>() / episodes.len() as f64;
    Ok(PlayReport {
        mean_score,
        per_level,
        episodes,
    })
}

/// Predicted and true trajectories under the same actions, both starting
/// with the initial state.
#[derive(Clone, Debug)]
pub struct Divergence {
    /// 1-based index of the first step whose predicted grid differs.
    pub first: Option<usize>,
    pub predicted: Vec<GameState>,
    pub truth: Vec<GameState>,
}

pub fn divergence(model: &dyn ForwardModel, state: &GameState, actions: &[Action]) -> Divergence {
    let mut predicted = Vec::with_capacity(actions.len() + 1);
    let mut truth = Vec::with_capacity(actions.len() + 1);
    predicted.push(state.clone());
    truth.push(state.clone());
    let mut first = None;
    for (i, &a) in actions.iter().enumerate() {
        let p = model.predict_grid(&predicted[i], a);
        let t = truth[i].step(a);
        if first.is_none() && p != t {
            first = Some(i + 1);
        }
        predicted.push(p);
        truth.push(t);
    }
    Divergence {
        first,
        predicted,
        truth,
    }
}

impl Divergence {
    /// The imperfect-but-useful pattern: the rollout diverges, yet at or
    /// before the divergence step the prediction already registers a score
    /// gain that the true trajectory also has, and after diverging the
    /// prediction reaches a state that breaks the game's invariants.
    ///
    /// Returns `(goal step, divergence step, first invalid step)`.
    pub fn goal_before_invalid(&self) -> Option<(usize, usize, usize)> {
        let k = self.first?;
        let base = self.truth[0].score();
        let goal = (1..=k).find(|&j| {
            let p = self.predicted[j].score();
            p > base && p == self.truth[j].score()
        })?;
        let invalid = (k..self.predicted.len()).find(|&m| !validate(&self.predicted[m]).is_empty())?;
        Some((goal, k, invalid))
    }

    /// Actions as letters with a hyphen before the first diverging step.
    pub fn action_string(&self, actions: &[Action]) -> String {
        let mut s = String::new();
        for (i, a) in actions.iter().enumerate() {
            if self.first == Some(i + 1) {
                s.push('-');
            }
            s.push(a.letter());
        }
        s
    }
}

/// A trajectory on which a model shows the goal-then-invalid pattern.
#[derive(Clone, Debug)]
pub struct DivergenceExample {
    pub level: usize,
    pub actions: Vec<Action>,
    pub goal_step: usize,
    pub divergence_step: usize,
    pub invalid_step: usize,
    pub divergence: Divergence,
}

impl DivergenceExample {
    /// Plain-text account of the example: the actions (hyphen at the
    /// divergence), the three step indices and the grids that matter.
    pub fn report(&self, model: &str, level_name: &str) -> String {
        let d = &self.divergence;
        let grids = |title: &str, step: usize| {
            format!(
                "predicted after step {step} ({title}):\n{}true after step {step}:\n{}",
                serialize_level(&d.predicted[step]),
                serialize_level(&d.truth[step])
            )
        };
        format!(
            "model: {model}\nlevel: {level_name}\nactions: {}\ngoal_step: {}\ndivergence_step: {}\ninvalid_step: {}\ninitial:\n{}{}{}",
            d.action_string(&self.actions),
            self.goal_step,
            self.divergence_step,
            self.invalid_step,
            serialize_level(&d.truth[0]),
            grids("first goal", self.goal_step),
            grids("first invalid", self.invalid_step),
        )
    }
}

/// Scans `(level index, actions)` trajectories for the first one where
/// [`Divergence::goal_before_invalid`] holds under `model`.
pub fn search_divergence(
    model: &dyn ForwardModel,
    levels: &LevelSet,
    trajectories: &[(usize, Vec<Action>)],
) -> Option<DivergenceExample> {
    trajectories.iter().find_map(|(level, actions)| {
        let d = divergence(model, &levels.levels.get(*level)?.state, actions);
        let (goal_step, divergence_step, invalid_step) = d.goal_before_invalid()?;
        Some(DivergenceExample {
            level: *level,
            actions: actions.clone(),
            goal_step,
            divergence_step,
            invalid_step,
            divergence: d,
        })
    })
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub shape: Option<String>,
    pub span: Option<u32>,
    pub level_set: String,
    pub accuracy: Option<f64>,
    pub score: Option<f64>,
    /// Unique patterns for exact models, tree nodes for trees.
    pub model_size: Option<usize>,
    pub seed: u64,
}

pub const RESULTS_HEADER: &str = "model,shape,span,level_set,accuracy,score,model_size,seed";

impl fmt::Display for ResultRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            self.model,
            self.shape.as_deref().unwrap_or(""),
            self.span.map(|s| s.to_string()).unwrap_or_default(),
            self.level_set,
            opt(self.accuracy),
            opt(self.score),
            self.model_size.map(|s| s.to_string()).unwrap_or_default(),
            self.seed
        )
    }
}

pub fn write_results_csv<W: Write>(mut out: W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

/// Engine throughput measurement.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub level: String,
    pub steps: u64,
    pub resets: u64,
    pub seconds: f64,
}

impl BenchReport {
    pub fn ticks_per_second(&self) -> f64 {
        self.steps as f64 / self.seconds.max(1e-9)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "level: {}", self.level)?;
        writeln!(f, "steps: {}", self.steps)?;
        writeln!(f, "resets: {}", self.resets)?;
        writeln!(f, "wall time (s): {:.4}", self.seconds)?;
        writeln!(f, "ticks/s: {:.0}", self.ticks_per_second())
    }
}

/// Steps the engine `steps` times with seeded random actions, restarting on
/// wins, and times it.
pub fn bench(name: &str, initial: &GameState, steps: u64, seed: u64) -> BenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<Action> = (0..steps).map(|_| random_action(&mut rng)).collect();
    let mut state = initial.clone();
    let mut resets = 0;
    let start = Instant::now();
    for &a in &actions {
        state = state.step(a);
        if state.is_win() {
            state = initial.clone();
            resets += 1;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(&state);
    BenchReport {
        level: name.to_string(),
        steps,
        resets,
        seconds,
    }
}

const DATASET_MAGIC: &str = "lfm-transitions";
const DATASET_VERSION: u32 = 1;

/// Writes a dataset as text. Header lines carry the version and provenance;
/// each record is `<level> <action> <width> <height> <prev> <next>` with
/// grids as strings of tile digits.
pub fn write_dataset<W: Write>(mut out: W, data: &TransitionDataset) -> std::io::Result<()> {
    let p = &data.provenance;
    writeln!(out, "{DATASET_MAGIC} v{DATASET_VERSION}")?;
    writeln!(out, "level_set {}", p.level_set)?;
    writeln!(out, "playouts {}", p.playouts)?;
    writeln!(out, "steps {}", p.steps)?;
    writeln!(out, "seed {}", p.seed)?;
    writeln!(out, "reset_on_win {}", p.reset_on_win)?;
    writeln!(out, "records {}", data.records.len())?;
    let digits = |s: &GameState| s.tiles().iter().map(|t| char::from(b'0' + t.index())).collect::<String>();
    for r in &data.records {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            r.level,
            r.action.letter(),
            r.prev.width(),
            r.prev.height(),
            digits(&r.prev),
            digits(&r.next)
        )?;
    }
    Ok(())
}

/// Reads the format produced by [`write_dataset`].
pub fn read_dataset<R: BufRead>(input: R, source: &str) -> Result<TransitionDataset> {
    let mut lines = input.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((_, Err(e))) => Err(Error::io(source, e)),
            None => Err(Error::format(source, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, header) = next_line("header")?;
    let mut h = header.split_whitespace();
    if h.next() != Some(DATASET_MAGIC) {
        return Err(Error::format(source, "not a transition dataset"));
    }
    let version = h.next().unwrap_or("");
    if version != format!("v{DATASET_VERSION}") {
        return Err(Error::format(source, format!("unsupported dataset format version {version:?}")));
    }
    let mut field = |name: &str| -> Result<String> {
        let (n, line) = next_line(name)?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| Error::format(source, format!("line {n}: expected {name}")))
    };
    let num = |s: String, what: &str| -> Result<u64> {
        s.parse().map_err(|_| Error::format(source, format!("bad {what} {s:?}")))
    };
    let level_set = field("level_set")?;
    let playouts = num(field("playouts")?, "playouts")? as usize;
    let steps = num(field("steps")?, "steps")? as usize;
    let seed = num(field("seed")?, "seed")?;
    let reset_on_win = field("reset_on_win")? == "true";
    let count = num(field("records")?, "records")? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 22));
    for _ in 0..count {
        let (n, line) = next_line("record")?;
        let bad = || Error::format(source, format!("line {n}: malformed record"));
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let level: usize = parts[0].parse().map_err(|_| bad())?;
        let mut a = parts[1].chars();
        let action = a.next().and_then(Action::from_letter).ok_or_else(bad)?;
        if a.next().is_some() {
            return Err(bad());
        }
        let w: usize = parts[2].parse().map_err(|_| bad())?;
        let h: usize = parts[3].parse().map_err(|_| bad())?;
        let grid = |s: &str| -> Result<GameState> {
            let tiles = s
                .chars()
                .map(|c| c.to_digit(10).and_then(|d| Tile::from_index(d as u8)))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(bad)?;
            GameState::from_tiles(w, h, tiles).map_err(|_| bad())
        };
        records.push(Transition {
            level,
            prev: grid(parts[4])?,
            action,
            next: grid(parts[5])?,
        });
    }
    Ok(TransitionDataset {
        records,
        provenance: Provenance {
            level_set,
            playouts,
            steps,
            seed,
            reset_on_win,
        },
    })
}
