//! N-Tuple Bandit Evolutionary Algorithm over discrete parameter spaces.
//!
//! Fitness samples are recorded in statistics for every 1-tuple, every
//! 2-tuple and the full N-tuple of dimensions. Candidate neighbours are ranked
//! by the mean of their tuple UCB values.

use std::collections::BTreeMap;

use rand::Rng;

use crate::agent::AgentParams;
use crate::{Error, Result};

/// One index per dimension.
pub type ConfigPoint = Vec<usize>;

/// A named dimension and its candidate values.
#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpace {
    pub dimensions: Vec<Dimension>,
}

impl ParamSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(Error::InvalidArgument("parameter space has no dimensions".into()));
        }
        for d in &dimensions {
            if d.values.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "dimension {} needs at least two values",
                    d.name
                )));
            }
        }
        Ok(ParamSpace { dimensions })
    }

    /// sequence_length, evaluations, mutation_rate, shift_buffer (0/1).
    pub fn agent_default() -> Self {
        let dim = |name: &str, values: &[f64]| Dimension {
            name: name.to_string(),
            values: values.to_vec(),
        };
        ParamSpace::new(vec![
            dim("sequence_length", &[5.0, 10.0, 20.0, 40.0, 80.0]),
            dim("evaluations", &[10.0, 20.0, 40.0, 80.0]),
            dim("mutation_rate", &[0.1, 0.2, 0.4, 0.8]),
            dim("shift_buffer", &[0.0, 1.0]),
        ])
        .expect("valid default space")
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    /// Number of points in the space.
    pub fn size(&self) -> usize {
        self.dimensions.iter().map(|d| d.values.len()).product()
    }

    pub fn contains(&self, point: &[usize]) -> bool {
        point.len() == self.len() && point.iter().zip(&self.dimensions).all(|(&i, d)| i < d.values.len())
    }

    pub fn values(&self, point: &[usize]) -> Vec<f64> {
        point.iter().zip(&self.dimensions).map(|(&i, d)| d.values[i]).collect()
    }

    /// Reads an agent configuration from a point of a space whose dimensions
    /// are named after [`AgentParams`] fields; unnamed fields keep `base`.
    pub fn agent_params(&self, point: &[usize], base: AgentParams) -> AgentParams {
        let mut p = base;
        for (d, &i) in self.dimensions.iter().zip(point) {
            let v = d.values[i];
            match d.name.as_str() {
                "sequence_length" => p.sequence_length = v as usize,
                "evaluations" => p.evaluations = v as usize,
                "mutation_rate" => p.mutation_rate = v,
                "shift_buffer" => p.shift_buffer = v != 0.0,
                "resamples" => p.resamples = v as usize,
                _ => {}
            }
        }
        p
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ConfigPoint {
        self.dimensions.iter().map(|d| rng.gen_range(0..d.values.len())).collect()
    }
}

/// Running count and mean of the fitness samples for one projection.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub count: u64,
    pub sum: f64,
}

impl Stat {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    fn add(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
    }
}

/// Upper confidence bound `mean + k * sqrt(ln(total + 1) / (count + epsilon))`.
/// A missing statistic counts as mean 0, count 0.
pub fn ucb(stat: Option<&Stat>, total_evaluations: u64, k: f64, epsilon: f64) -> f64 {
    let (mean, count) = stat.map_or((0.0, 0), |s| (s.mean(), s.count));
    mean + k * (((total_evaluations + 1) as f64).ln() / (count as f64 + epsilon)).sqrt()
}

/// Fitness statistics keyed by tuple and projected point.
#[derive(Clone, Debug)]
pub struct NTupleLandscape {
    tuples: Vec<Vec<usize>>,
    stats: Vec<BTreeMap<Vec<usize>, Stat>>,
    total_evaluations: u64,
}

impl NTupleLandscape {
    /// All 1-tuples, all 2-tuples and the full tuple over `dims` dimensions,
    /// without duplicates.
    pub fn new(dims: usize) -> Self {
        let mut tuples: Vec<Vec<usize>> = (0..dims).map(|i| vec![i]).collect();
        for i in 0..dims {
            for j in i + 1..dims {
                tuples.push(vec![i, j]);
            }
        }
        let full: Vec<usize> = (0..dims).collect();
        if !tuples.contains(&full) {
            tuples.push(full);
        }
        let stats = vec![BTreeMap::new(); tuples.len()];
        NTupleLandscape {
            tuples,
            stats,
            total_evaluations: 0,
        }
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn total_evaluations(&self) -> u64 {
        self.total_evaluations
    }

    fn project(tuple: &[usize], point: &[usize]) -> Vec<usize> {
        tuple.iter().map(|&d| point[d]).collect()
    }

    pub fn add(&mut self, point: &[usize], fitness: f64) {
        for (tuple, stats) in self.tuples.iter().zip(&mut self.stats) {
            stats.entry(Self::project(tuple, point)).or_default().add(fitness);
        }
        self.total_evaluations += 1;
    }

    pub fn stat(&self, tuple_index: usize, projection: &[usize]) -> Option<&Stat> {
        self.stats[tuple_index].get(projection)
    }

    /// Mean of the UCB values of every tuple projection of `point`.
    pub fn mean_ucb(&self, point: &[usize], k: f64, epsilon: f64) -> f64 {
        let sum: f64 = self
            .tuples
            .iter()
            .zip(&self.stats)
            .map(|(t, s)| ucb(s.get(&Self::project(t, point)), self.total_evaluations, k, epsilon))
            .sum();
        sum / self.tuples.len() as f64
    }

    /// Statistics of the full N-tuple, one per evaluated point.
    pub fn full_tuple(&self) -> &BTreeMap<Vec<usize>, Stat> {
        self.stats.last().expect("at least one tuple")
    }

    /// Sum of 1-tuple counts for dimension `d`.
    pub fn dimension_count(&self, d: usize) -> u64 {
        let i = self.tuples.iter().position(|t| t == &[d]).expect("1-tuple exists");
        self.stats[i].values().map(|s| s.count).sum()
    }

    /// Evaluated point with the best full-tuple mean; ties go to the most
    /// visited, then to the lexicographically smallest point.
    pub fn recommendation(&self) -> Option<ConfigPoint> {
        let mut best: Option<(&Vec<usize>, &Stat)> = None;
        for (p, s) in self.full_tuple() {
            let better = match best {
                None => true,
                Some((_, b)) => s.mean() > b.mean() || (s.mean() == b.mean() && s.count > b.count),
            };
            if better {
                best = Some((p, s));
            }
        }
        best.map(|(p, _)| p.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NtbeaSettings {
    pub iterations: usize,
    pub k: f64,
    pub epsilon: f64,
    pub neighbours: usize,
    pub mutation_prob: f64,
}

impl Default for NtbeaSettings {
    fn default() -> Self {
        NtbeaSettings {
            iterations: 200,
            k: 2.0,
            epsilon: 0.5,
            neighbours: 50,
            mutation_prob: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NtbeaReport {
    pub recommendation: ConfigPoint,
    /// Every evaluated point with its fitness, in order.
    pub log: Vec<(ConfigPoint, f64)>,
    pub landscape: NTupleLandscape,
}

/// Tunes over `space`, returning the recommended point.
pub fn ntbea_tune<F, R>(space: &ParamSpace, objective: F, settings: &NtbeaSettings, rng: &mut R) -> Result<ConfigPoint>
where
    F: FnMut(&[usize]) -> f64,
    R: Rng + ?Sized,
{
    Ok(ntbea_run(space, objective, settings, rng)?.recommendation)
}

/// [`ntbea_tune`] with the full iteration log and landscape.
pub fn ntbea_run<F, R>(space: &ParamSpace, mut objective: F, settings: &NtbeaSettings, rng: &mut R) -> Result<NtbeaReport>
where
    F: FnMut(&[usize]) -> f64,
    R: Rng + ?Sized,
{
    if settings.iterations == 0 {
        return Err(Error::InvalidArgument("NTBEA needs at least one iteration".into()));
    }
    if settings.k < 0.0 || !(0.0..=1.0).contains(&settings.mutation_prob) {
        return Err(Error::InvalidArgument("invalid NTBEA settings".into()));
    }
    let mut landscape = NTupleLandscape::new(space.len());
    let mut log = Vec::with_capacity(settings.iterations);
    let mut current = space.random_point(rng);
    for iteration in 0..settings.iterations {
        let fitness = objective(&current);
        landscape.add(&current, fitness);
        log.push((current.clone(), fitness));
        debug_assert!((0..space.len()).all(|d| landscape.dimension_count(d) == iteration as u64 + 1));
        if iteration + 1 == settings.iterations {
            break;
        }
        let mut best: Option<(ConfigPoint, f64)> = None;
        for _ in 0..settings.neighbours.max(1) {
            let candidate = neighbour(space, &current, settings.mutation_prob, rng);
            let value = landscape.mean_ucb(&candidate, settings.k, settings.epsilon);
            if best.as_ref().is_none_or(|(_, v)| value > *v) {
                best = Some((candidate, value));
            }
        }
        current = best.expect("at least one neighbour").0;
    }
    let recommendation = landscape.recommendation().expect("at least one evaluation");
    Ok(NtbeaReport {
        recommendation,
        log,
        landscape,
    })
}

/// Mutates each dimension with probability `p`; at least one always changes.
fn neighbour<R: Rng + ?Sized>(space: &ParamSpace, point: &[usize], p: f64, rng: &mut R) -> ConfigPoint {
    let mut out = point.to_vec();
    let redraw = |i: usize, n: usize, rng: &mut R| (i + rng.gen_range(1..n)) % n;
    let mut changed = false;
    for (d, dim) in space.dimensions.iter().enumerate() {
        if rng.gen_bool(p) {
            out[d] = redraw(out[d], dim.values.len(), rng);
            changed = true;
        }
    }
    if !changed {
        let d = rng.gen_range(0..space.len());
        out[d] = redraw(out[d], space.dimensions[d].values.len(), rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb(None, 0, 2.0, 0.5), 0.0);
        let mut s = Stat::default();
        s.add(1.0);
        s.add(0.0);
        assert_eq!(s.mean(), 0.5);
        assert_eq!(ucb(Some(&s), 10, 0.0, 0.5), 0.5);
        let expected = 0.5 + 2.0 * ((11f64).ln() / 2.5).sqrt();
        assert!((ucb(Some(&s), 10, 2.0, 0.5) - expected).abs() < 1e-12);
    }

    #[test]
    fn tuple_set() {
        let l = NTupleLandscape::new(4);
        assert_eq!(l.tuples().len(), 4 + 6 + 1);
        let l = NTupleLandscape::new(2);
        // the full tuple is also the only 2-tuple
        assert_eq!(l.tuples().len(), 3);
        let l = NTupleLandscape::new(1);
        assert_eq!(l.tuples().len(), 1);
    }

    #[test]
    fn binary_indicator() {
        let space = ParamSpace::new(vec![Dimension {
            name: "x".into(),
            values: vec![0.0, 1.0],
        }])
        .unwrap();
        let settings = NtbeaSettings {
            iterations: 50,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let best = ntbea_tune(&space, |p| p[0] as f64, &settings, &mut rng).unwrap();
        assert_eq!(best, vec![1]);
    }

    #[test]
    fn counts_sum_to_iterations() {
        let space = ParamSpace::agent_default();
        let settings = NtbeaSettings {
            iterations: 37,
            neighbours: 10,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ntbea_run(&space, |p| p.iter().sum::<usize>() as f64, &settings, &mut rng).unwrap();
        assert_eq!(r.log.len(), 37);
        for d in 0..space.len() {
            assert_eq!(r.landscape.dimension_count(d), 37);
        }
        assert!(space.contains(&r.recommendation));
        assert!(r.log.iter().any(|(p, _)| p == &r.recommendation));
    }

    #[test]
    fn seeded_runs_repeat() {
        let space = ParamSpace::agent_default();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            ntbea_tune(&space, |p| (p[0] * 3 + p[2]) as f64, &NtbeaSettings::default(), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn agent_params_from_point() {
        let space = ParamSpace::agent_default();
        let p = space.agent_params(&[3, 2, 2, 1], AgentParams::default());
        assert_eq!(p, AgentParams::default());
        let p = space.agent_params(&[0, 0, 3, 0], AgentParams::default());
        assert_eq!((p.sequence_length, p.evaluations, p.mutation_rate, p.shift_buffer), (5, 10, 0.8, false));
    }

    #[test]
    fn rejects_degenerate_spaces() {
        assert!(ParamSpace::new(vec![]).is_err());
        assert!(ParamSpace::new(vec![Dimension {
            name: "x".into(),
            values: vec![1.0]
        }])
        .is_err());
    }
}
