use rustc_hash::FxHashMap;

use super::{predict_grid_local, CellPredictor, ForwardModel, LocalSimulator, ModelDescriptor, ModelKind, Simulator};
use crate::engine::{Action, GameState, Tile};
use crate::patterns::{check_dims, KeyExtractor, PatternKey, PatternSpec, TrainingExample};
use crate::{Error, Result};

/// How often one next-tile value followed a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub tile: Tile,
    pub count: u64,
    /// Position of the first example with this key and label in the
    /// ingestion stream.
    pub first_seen: u64,
}

/// Lookup table from observed keys to next-centre distributions.
///
/// Outcomes for a key are kept in first-observed order; prediction takes the
/// most frequent, preferring the earliest on ties. Unseen keys predict the
/// centre tile unchanged.
#[derive(Clone, Debug)]
pub struct ExactMatchModel {
    extractor: KeyExtractor,
    table: FxHashMap<Box<[u8]>, Vec<Outcome>>,
    samples: u64,
}

/// Counts every example; keys must have the spec's cell count.
pub fn train_exact(dataset: &[TrainingExample], spec: PatternSpec) -> Result<ExactMatchModel> {
    let mut model = ExactMatchModel::new(spec);
    let mut buf = Vec::with_capacity(spec.cell_count() + 1);
    for ex in dataset {
        model.check_cells(ex.key.cells.len())?;
        buf.clear();
        buf.push(ex.key.action.index());
        buf.extend(ex.key.cells.iter().map(|t| t.index()));
        model.observe_bytes(&buf, ex.label);
    }
    Ok(model)
}

impl ExactMatchModel {
    /// An empty table; predicts no change everywhere.
    pub fn new(spec: PatternSpec) -> Self {
        ExactMatchModel {
            extractor: KeyExtractor::new(spec),
            table: FxHashMap::default(),
            samples: 0,
        }
    }

    /// Trains on every cell of every transition without materialising the
    /// examples.
    pub fn from_transitions<'a, I>(transitions: I, spec: PatternSpec) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a GameState, Action, &'a GameState)>,
    {
        let mut model = ExactMatchModel::new(spec);
        let mut buf = Vec::with_capacity(spec.cell_count() + 1);
        for (prev, action, next) in transitions {
            check_dims(prev, next)?;
            for i in 0..prev.area() {
                model.extractor.extract_into(prev, i, action, &mut buf);
                model.observe_bytes(&buf, next.tiles()[i]);
            }
        }
        Ok(model)
    }

    pub(crate) fn from_parts(spec: PatternSpec, table: FxHashMap<Box<[u8]>, Vec<Outcome>>, samples: u64) -> Self {
        ExactMatchModel {
            extractor: KeyExtractor::new(spec),
            table,
            samples,
        }
    }

    fn check_cells(&self, cells: usize) -> Result<()> {
        if cells != self.spec().cell_count() {
            return Err(Error::SpecMismatch {
                expected: self.spec(),
                cells,
            });
        }
        Ok(())
    }

    fn observe_bytes(&mut self, key: &[u8], label: Tile) {
        let seq = self.samples;
        self.samples += 1;
        let outcomes = match self.table.get_mut(key) {
            Some(o) => o,
            None => self.table.entry(key.into()).or_default(),
        };
        match outcomes.iter_mut().find(|o| o.tile == label) {
            Some(o) => o.count += 1,
            None => outcomes.push(Outcome {
                tile: label,
                count: 1,
                first_seen: seq,
            }),
        }
    }

    pub fn spec(&self) -> PatternSpec {
        self.extractor.spec()
    }

    /// Number of distinct keys stored.
    pub fn unique_pattern_count(&self) -> usize {
        self.table.len()
    }

    /// True when every observed pattern led to a single next centre tile.
    pub fn is_functionally_consistent(&self) -> bool {
        self.table.values().all(|o| o.len() == 1)
    }

    /// Number of examples ingested.
    pub fn sample_count(&self) -> u64 {
        self.samples
    }

    /// Outcome counts for a key, in first-observed order.
    pub fn distribution(&self, key: &PatternKey) -> Option<&[Outcome]> {
        self.table.get(&key.to_bytes()[..]).map(Vec::as_slice)
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&[u8], &[Outcome])> {
        self.table.iter().map(|(k, v)| (&k[..], &v[..]))
    }

    /// Most frequent next centre tile for `key`, or the centre itself when
    /// the key was never observed.
    pub fn predict_center(&self, key: &PatternKey) -> Result<Tile> {
        self.check_cells(key.cells.len())?;
        Ok(self.predict_key(&key.to_bytes()))
    }
}

pub(super) fn argmax_earliest(outcomes: &[Outcome]) -> Option<Tile> {
    let mut best: Option<&Outcome> = None;
    for o in outcomes {
        match best {
            Some(b) if o.count < b.count || (o.count == b.count && o.first_seen > b.first_seen) => {}
            _ => best = Some(o),
        }
    }
    best.map(|o| o.tile)
}

impl CellPredictor for ExactMatchModel {
    fn extractor(&self) -> &KeyExtractor {
        &self.extractor
    }

    #[inline]
    fn predict_key(&self, key: &[u8]) -> Tile {
        self.table
            .get(key)
            .and_then(|o| argmax_earliest(o))
            .unwrap_or_else(|| Tile::from_index(key[1 + self.spec().centre_index()]).expect("valid tile"))
    }
}

impl ForwardModel for ExactMatchModel {
    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            kind: ModelKind::Exact,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::extract_training;
    use Tile::*;

    fn key(centre: Tile) -> PatternKey {
        PatternKey {
            action: Action::Up,
            cells: vec![Wall, Floor, centre, Floor, Wall],
        }
    }

    fn ex(k: &PatternKey, label: Tile) -> TrainingExample {
        TrainingExample {
            key: k.clone(),
            label,
        }
    }

    #[test]
    fn counts_multiplicities() {
        let k = key(Floor);
        let data = vec![ex(&k, Floor), ex(&k, BoxOnFloor), ex(&k, Floor), ex(&k, Floor)];
        let m = train_exact(&data, PatternSpec::cross(1)).unwrap();
        assert_eq!(m.unique_pattern_count(), 1);
        assert_eq!(m.sample_count(), 4);
        let d = m.distribution(&k).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].tile, d[0].count), (Floor, 3));
        assert_eq!((d[1].tile, d[1].count), (BoxOnFloor, 1));
        assert_eq!(m.predict_center(&k).unwrap(), Floor);
    }

    #[test]
    fn empty_dataset() {
        let m = train_exact(&[], PatternSpec::cross(1)).unwrap();
        assert_eq!(m.unique_pattern_count(), 0);
        assert_eq!(m.sample_count(), 0);
    }

    #[test]
    fn unseen_key_keeps_centre() {
        let m = train_exact(&[ex(&key(Floor), Target)], PatternSpec::cross(1)).unwrap();
        assert_eq!(m.predict_center(&key(Wall)).unwrap(), Wall);
        assert_eq!(m.predict_center(&key(BoxOnFloor)).unwrap(), BoxOnFloor);
    }

    #[test]
    fn ties_go_to_first_observed() {
        // replay: TARGET arrives first, FLOOR catches up to the same count
        let k = key(Floor);
        let data = vec![ex(&k, Target), ex(&k, Floor), ex(&k, Floor), ex(&k, Target)];
        let m = train_exact(&data, PatternSpec::cross(1)).unwrap();
        assert_eq!(m.predict_center(&k).unwrap(), Target);

        let data = vec![ex(&k, Floor), ex(&k, Target), ex(&k, Target), ex(&k, Floor)];
        let m = train_exact(&data, PatternSpec::cross(1)).unwrap();
        assert_eq!(m.predict_center(&k).unwrap(), Floor);
    }

    #[test]
    fn spec_mismatch() {
        let bad = TrainingExample {
            key: PatternKey {
                action: Action::Up,
                cells: vec![Floor; 9],
            },
            label: Floor,
        };
        assert!(matches!(
            train_exact(std::slice::from_ref(&bad), PatternSpec::cross(1)),
            Err(Error::SpecMismatch { cells: 9, .. })
        ));
        let m = ExactMatchModel::new(PatternSpec::cross(1));
        assert!(m.predict_center(&bad.key).is_err());
    }

    #[test]
    fn streaming_equals_batch() {
        let s = crate::levels::parse_level("#######\n#@$ . #\n#     #\n#######").unwrap();
        let spec = PatternSpec::square(1);
        let mut pairs = Vec::new();
        let mut cur = s.clone();
        for a in [Action::Right, Action::Down, Action::Right, Action::Up, Action::Right] {
            let n = cur.step(a);
            pairs.push((cur.clone(), a, n.clone()));
            cur = n;
        }
        let mut data = Vec::new();
        for (p, a, n) in &pairs {
            data.extend(extract_training(p, *a, n, spec).unwrap());
        }
        let batch = train_exact(&data, spec).unwrap();
        let stream = ExactMatchModel::from_transitions(pairs.iter().map(|(p, a, n)| (p, *a, n)), spec).unwrap();
        assert_eq!(batch.unique_pattern_count(), stream.unique_pattern_count());
        assert_eq!(batch.sample_count(), stream.sample_count());
        for e in &data {
            assert_eq!(batch.distribution(&e.key), stream.distribution(&e.key));
        }
        let total: u64 = batch.entries().flat_map(|(_, o)| o.iter().map(|o| o.count)).sum();
        assert_eq!(total, data.len() as u64);
    }
}
