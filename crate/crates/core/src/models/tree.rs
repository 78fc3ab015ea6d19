use super::exact::ExactMatchModel;
use super::{predict_grid_local, CellPredictor, ForwardModel, LocalSimulator, ModelDescriptor, ModelKind, Simulator};
use crate::engine::{Action, GameState, Tile};
use crate::patterns::{KeyExtractor, PatternKey, PatternSpec, TrainingExample};
use crate::{Error, Result};

pub(crate) const LEAF: u16 = u16::MAX;
pub(crate) const NO_CHILD: u32 = u32::MAX;
/// Branch slots per node; attribute values are action (0..4) or tile (0..7) indices.
pub(crate) const FANOUT: usize = 8;

const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Node {
    /// Split attribute: `0` is the action, `i > 0` is key cell `i - 1`.
    pub(crate) attribute: u16,
    /// Leaf label, or the fallback for attribute values unseen at training.
    pub(crate) label: Tile,
    pub(crate) children: [u32; FANOUT],
}

impl Node {
    pub(crate) fn is_leaf(&self) -> bool {
        self.attribute == LEAF
    }
}

/// Unpruned multiway decision tree from key attributes to the next centre tile.
///
/// Splits maximise information gain; growth stops on pure nodes, exhausted
/// attributes, or zero gain. Every node remembers the label of its earliest
/// training example, which serves as the leaf label and as the answer when a
/// query reaches a value with no branch.
#[derive(Clone, Debug)]
pub struct TreeModel {
    extractor: KeyExtractor,
    nodes: Vec<Node>,
}

/// Induces a tree from examples; the spec fixes the attribute count.
pub fn train_tree(dataset: &[TrainingExample], spec: PatternSpec) -> Result<TreeModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    TreeModel::from_counts(&super::train_exact(dataset, spec)?)
}

/// Deduplicated training rows: one per distinct (key, label) pair.
struct Rows {
    stride: usize,
    keys: Vec<u8>,
    labels: Vec<u8>,
    weights: Vec<u64>,
    first_seen: Vec<u64>,
}

impl Rows {
    fn key(&self, r: usize) -> &[u8] {
        &self.keys[r * self.stride..(r + 1) * self.stride]
    }
}

impl TreeModel {
    /// Induces a tree from the key/outcome counts of an exact-match table.
    /// Equivalent to training on the examples the table was built from.
    pub fn from_counts(counts: &ExactMatchModel) -> Result<Self> {
        if counts.sample_count() == 0 {
            return Err(Error::EmptyDataset);
        }
        let spec = counts.spec();
        let stride = spec.cell_count() + 1;
        let mut rows = Rows {
            stride,
            keys: Vec::new(),
            labels: Vec::new(),
            weights: Vec::new(),
            first_seen: Vec::new(),
        };
        let mut entries: Vec<_> = counts.entries().collect();
        // induction does not depend on row order; sorting keeps it reproducible anyway
        entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (key, outcomes) in entries {
            for o in outcomes {
                rows.keys.extend_from_slice(key);
                rows.labels.push(o.tile.index());
                rows.weights.push(o.count);
                rows.first_seen.push(o.first_seen);
            }
        }
        let mut builder = Builder {
            rows: &rows,
            used: vec![false; stride],
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..rows.labels.len()).collect();
        builder.build(&mut idx);
        Ok(TreeModel {
            extractor: KeyExtractor::new(spec),
            nodes: builder.nodes,
        })
    }

    /// Trains on every cell of every transition.
    pub fn from_transitions<'a, I>(transitions: I, spec: PatternSpec) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a GameState, Action, &'a GameState)>,
    {
        TreeModel::from_counts(&ExactMatchModel::from_transitions(transitions, spec)?)
    }

    pub(crate) fn from_nodes(spec: PatternSpec, nodes: Vec<Node>) -> Self {
        TreeModel {
            extractor: KeyExtractor::new(spec),
            nodes,
        }
    }

    pub(crate) fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn spec(&self) -> PatternSpec {
        self.extractor.spec()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            1 + n
                .children
                .iter()
                .filter(|&&c| c != NO_CHILD)
                .map(|&c| go(nodes, c as usize))
                .max()
                .unwrap_or(0)
        }
        go(&self.nodes, 0)
    }

    /// Attributes tested at the root and below, sorted and deduplicated.
    pub fn split_attributes(&self) -> Vec<u16> {
        let mut out: Vec<u16> = self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.attribute).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn predict_center(&self, key: &PatternKey) -> Result<Tile> {
        if key.cells.len() != self.spec().cell_count() {
            return Err(Error::SpecMismatch {
                expected: self.spec(),
                cells: key.cells.len(),
            });
        }
        Ok(self.predict_key(&key.to_bytes()))
    }
}

impl CellPredictor for TreeModel {
    fn extractor(&self) -> &KeyExtractor {
        &self.extractor
    }

    #[inline]
    fn predict_key(&self, key: &[u8]) -> Tile {
        let mut node = &self.nodes[0];
        loop {
            if node.is_leaf() {
                return node.label;
            }
            let value = key[node.attribute as usize] as usize;
            match node.children.get(value) {
                Some(&c) if c != NO_CHILD => node = &self.nodes[c as usize],
                _ => return node.label,
            }
        }
    }
}

impl ForwardModel for TreeModel {
    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: ModelKind::Tree,
            spec: Some(self.spec()),
        }
    }

    fn predict_grid(&self, state: &GameState, action: Action) -> GameState {
        predict_grid_local(self, state, action)
    }

    fn simulator(&self) -> Box<dyn Simulator + '_> {
        Box::new(LocalSimulator::new(self))
    }
}

struct Builder<'a> {
    rows: &'a Rows,
    used: Vec<bool>,
    nodes: Vec<Node>,
}

/// Weighted Shannon entropy (bits) of a label histogram.
fn entropy(counts: &[u64; Tile::COUNT], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let sum: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * c.log2()
        })
        .sum();
    n.log2() - sum / n
}

impl Builder<'_> {
    fn build(&mut self, idx: &mut [usize]) -> u32 {
        let rows = self.rows;
        let id = self.nodes.len();
        let first = *idx.iter().min_by_key(|&&r| rows.first_seen[r]).expect("non-empty node");
        let label = Tile::from_index(rows.labels[first]).expect("valid label");
        self.nodes.push(Node {
            attribute: LEAF,
            label,
            children: [NO_CHILD; FANOUT],
        });

        let mut counts = [0u64; Tile::COUNT];
        for &r in idx.iter() {
            counts[rows.labels[r] as usize] += rows.weights[r];
        }
        if counts.iter().filter(|&&c| c > 0).count() <= 1 {
            return id as u32;
        }
        let total: u64 = counts.iter().sum();
        let base = entropy(&counts, total);

        let mut best: Option<(usize, f64)> = None;
        for attr in 0..rows.stride {
            if self.used[attr] {
                continue;
            }
            let mut table = [[0u64; Tile::COUNT]; FANOUT];
            for &r in idx.iter() {
                table[rows.key(r)[attr] as usize][rows.labels[r] as usize] += rows.weights[r];
            }
            let conditional: f64 = table
                .iter()
                .map(|c| {
                    let n: u64 = c.iter().sum();
                    n as f64 / total as f64 * entropy(c, n)
                })
                .sum();
            let gain = base - conditional;
            if best.is_none_or(|(_, g)| gain > g + MIN_GAIN) {
                best = Some((attr, gain));
            }
        }
        let Some((attr, gain)) = best else {
            return id as u32;
        };
        if gain <= MIN_GAIN {
            return id as u32;
        }

        self.nodes[id].attribute = attr as u16;
        idx.sort_by_key(|&r| rows.key(r)[attr]);
        self.used[attr] = true;
        let mut start = 0;
        while start < idx.len() {
            let value = rows.key(idx[start])[attr];
            let end = start + idx[start..].iter().take_while(|&&r| rows.key(r)[attr] == value).count();
            let child = self.build(&mut idx[start..end]);
            self.nodes[id].children[value as usize] = child;
            start = end;
        }
        self.used[attr] = false;
        id as u32
    }
}
