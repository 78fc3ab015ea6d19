//! Forward models: learned local models and the two baselines.
//!
//! A local model predicts every cell of the next grid independently from the
//! cell's neighbourhood and the action. Predicted grids are not required to
//! obey the game rules.

mod exact;
mod io;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use exact::{train_exact, ExactMatchModel, Outcome};
pub use io::{load_model, read_model, save_model, write_model};
pub use tree::{train_tree, TreeModel};

use crate::engine::{Action, GameState, Tile};
use crate::patterns::{KeyExtractor, PatternSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Exact key lookup with a per-key outcome distribution.
    Exact,
    /// Unpruned categorical decision tree.
    Tree,
    /// Predicts that nothing changes.
    Static,
    /// The game engine itself.
    True,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Exact => "exact",
            ModelKind::Tree => "tree",
            ModelKind::Static => "static",
            ModelKind::True => "true",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(ModelKind::Exact),
            "tree" => Ok(ModelKind::Tree),
            "static" => Ok(ModelKind::Static),
            "true" => Ok(ModelKind::True),
            _ => Err(Error::InvalidArgument(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Model name plus neighbourhood, if the model has one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelDescriptor {
    pub kind: ModelKind,
    pub spec: Option<PatternSpec>,
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.spec {
            Some(spec) => write!(f, "{}-{}", self.kind, spec),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// Anything that can predict the next grid.
pub trait ForwardModel: Send + Sync {
    fn descriptor(&self) -> ModelDescriptor;

    /// Next grid for `action`; dimensions are preserved and `tick` advances.
    fn predict_grid(&self, state: &GameState, action: Action) -> GameState;

    /// True only for the engine adapter, whose predictions obey the rules.
    fn is_true_engine(&self) -> bool {
        false
    }

    /// A stateful roller for repeated multi-step predictions. Its results
    /// must equal chained [`ForwardModel::predict_grid`] calls.
    fn simulator(&self) -> Box<dyn Simulator + '_>;
}

/// Rolls a model forward from a root state.
pub trait Simulator {
    fn reset(&mut self, root: &GameState);
    fn advance(&mut self, action: Action);
    fn state(&self) -> &GameState;
}

/// Free-function form of [`ForwardModel::predict_grid`].
pub fn predict_grid(model: &dyn ForwardModel, state: &GameState, action: Action) -> GameState {
    model.predict_grid(state, action)
}

/// Baseline predicting no change.
#[derive(Clone, Copy, Debug, Default)]
pub struct StaticModel;

impl ForwardModel for StaticModel {
    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: ModelKind::Static,
            spec: None,
        }
    }

    fn predict_grid(&self, state: &GameState, _action: Action) -> GameState {
        let mut next = state.clone();
        next.advance_tick();
        next
    }

    fn simulator(&self) -> Box<dyn Simulator + '_> {
        Box::new(StateSim::new(|s: &mut GameState, _| s.advance_tick()))
    }
}

/// Adapter exposing the engine as a forward model.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrueModel;

impl ForwardModel for TrueModel {
    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: ModelKind::True,
            spec: None,
        }
    }

    fn predict_grid(&self, state: &GameState, action: Action) -> GameState {
        state.step(action)
    }

    fn is_true_engine(&self) -> bool {
        true
    }

    fn simulator(&self) -> Box<dyn Simulator + '_> {
        Box::new(StateSim::new(|s: &mut GameState, a| {
            s.apply(a);
        }))
    }
}

struct StateSim<F> {
    state: Option<GameState>,
    advance: F,
}

impl<F: Fn(&mut GameState, Action)> StateSim<F> {
    fn new(advance: F) -> Self {
        StateSim { state: None, advance }
    }
}

impl<F: Fn(&mut GameState, Action)> Simulator for StateSim<F> {
    fn reset(&mut self, root: &GameState) {
        match &mut self.state {
            Some(s) if s.area() == root.area() => {
                s.clone_from(root);
            }
            _ => self.state = Some(root.clone()),
        }
    }

    fn advance(&mut self, action: Action) {
        let s = self.state.as_mut().expect("simulator used before reset");
        (self.advance)(s, action);
    }

    fn state(&self) -> &GameState {
        self.state.as_ref().expect("simulator used before reset")
    }
}

/// A per-cell predictor over extracted key bytes (`[action, cells...]`).
pub(crate) trait CellPredictor: Send + Sync {
    fn extractor(&self) -> &KeyExtractor;
    fn predict_key(&self, key: &[u8]) -> Tile;
}

pub(crate) fn predict_grid_local<P: CellPredictor + ?Sized>(p: &P, state: &GameState, action: Action) -> GameState {
    let ex = p.extractor();
    let mut buf = Vec::with_capacity(ex.spec().cell_count() + 1);
    let mut next = state.clone();
    for i in 0..state.area() {
        ex.extract_into(state, i, action, &mut buf);
        next.set_index(i, p.predict_key(&buf));
    }
    next.advance_tick();
    next
}

/// Incremental roller for local models.
///
/// A cell's prediction depends only on its key, so it is cached per action
/// and reused until some cell in its neighbourhood changes. Each cell carries
/// an epoch counter that is bumped whenever a neighbour changes; a cached
/// prediction is valid while its recorded epoch matches.
pub(crate) struct LocalSimulator<'a, P: ?Sized> {
    predictor: &'a P,
    state: Option<GameState>,
    epoch: Vec<u32>,
    cache: [Vec<(Tile, u32)>; Action::COUNT],
    next: Vec<Tile>,
    changed: Vec<usize>,
    buf: Vec<u8>,
}

impl<'a, P: CellPredictor + ?Sized> LocalSimulator<'a, P> {
    pub(crate) fn new(predictor: &'a P) -> Self {
        LocalSimulator {
            predictor,
            state: None,
            epoch: Vec::new(),
            cache: Default::default(),
            next: Vec::new(),
            changed: Vec::new(),
            buf: Vec::new(),
        }
    }

    fn invalidate_around(&mut self, changed: &[usize]) {
        let state = self.state.as_ref().expect("state present");
        let (w, h) = (state.width() as i64, state.height() as i64);
        for &c in changed {
            let (x, y) = state.coords_of(c);
            // the shapes are symmetric: cells whose neighbourhood holds c are c + offset
            for &(dx, dy) in self.predictor.extractor().offsets() {
                let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    let j = (ny * w + nx) as usize;
                    self.epoch[j] = self.epoch[j].wrapping_add(1);
                }
            }
        }
    }
}

impl<P: CellPredictor + ?Sized> Simulator for LocalSimulator<'_, P> {
    fn reset(&mut self, root: &GameState) {
        let same_shape = matches!(&self.state, Some(s) if s.width() == root.width() && s.height() == root.height());
        if !same_shape {
            let n = root.area();
            self.epoch = vec![1; n];
            for c in &mut self.cache {
                *c = vec![(Tile::Wall, 0); n];
            }
            self.state = Some(root.clone());
            return;
        }
        let mut changed = std::mem::take(&mut self.changed);
        changed.clear();
        {
            let s = self.state.as_mut().expect("state present");
            changed.extend(
                s.tiles()
                    .iter()
                    .zip(root.tiles())
                    .enumerate()
                    .filter(|(_, (a, b))| a != b)
                    .map(|(i, _)| i),
            );
            s.clone_from(root);
        }
        self.invalidate_around(&changed);
        self.changed = changed;
    }

    fn advance(&mut self, action: Action) {
        let state = self.state.as_ref().expect("simulator used before reset");
        let n = state.area();
        let cache = &mut self.cache[action.index() as usize];
        let ex = self.predictor.extractor();
        self.next.clear();
        for (i, (slot, &epoch)) in cache[..n].iter_mut().zip(&self.epoch).enumerate() {
            if slot.1 != epoch {
                ex.extract_into(state, i, action, &mut self.buf);
                *slot = (self.predictor.predict_key(&self.buf), epoch);
            }
            self.next.push(slot.0);
        }
        let mut changed = std::mem::take(&mut self.changed);
        changed.clear();
        {
            let s = self.state.as_mut().expect("state present");
            for (i, (cur, new)) in s.tiles_mut().iter_mut().zip(&self.next).enumerate() {
                if cur != new {
                    *cur = *new;
                    changed.push(i);
                }
            }
            s.advance_tick();
        }
        self.invalidate_around(&changed);
        self.changed = changed;
    }

    fn state(&self) -> &GameState {
        self.state.as_ref().expect("simulator used before reset")
    }
}

/// Any model the CLI can hold, loaded or built.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Static(StaticModel),
    True(TrueModel),
    Exact(ExactMatchModel),
    Tree(TreeModel),
}

impl AnyModel {
    fn inner(&self) -> &dyn ForwardModel {
        match self {
            AnyModel::Static(m) => m,
            AnyModel::True(m) => m,
            AnyModel::Exact(m) => m,
            AnyModel::Tree(m) => m,
        }
    }

    /// Table entries for exact models, nodes for trees, zero for baselines.
    pub fn size_statistic(&self) -> usize {
        match self {
            AnyModel::Exact(m) => m.unique_pattern_count(),
            AnyModel::Tree(m) => m.node_count(),
            _ => 0,
        }
    }
}

impl ForwardModel for AnyModel {
    fn descriptor(&self) -> ModelDescriptor {
        self.inner().descriptor()
    }

    fn predict_grid(&self, state: &GameState, action: Action) -> GameState {
        self.inner().predict_grid(state, action)
    }

    fn is_true_engine(&self) -> bool {
        self.inner().is_true_engine()
    }

    fn simulator(&self) -> Box<dyn Simulator + '_> {
        self.inner().simulator()
    }
}

impl From<ExactMatchModel> for AnyModel {
    fn from(m: ExactMatchModel) -> Self {
        AnyModel::Exact(m)
    }
}

impl From<TreeModel> for AnyModel {
    fn from(m: TreeModel) -> Self {
        AnyModel::Tree(m)
    }
}
