//! Rolling horizon evolution with a 1+1 EA over fixed-length action sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Action, GameState};
use crate::models::{ForwardModel, Simulator};
use crate::{Error, Result};

/// A plan: the genome evolved by the agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionSequence(Vec<Action>);

impl ActionSequence {
    pub fn new(genes: Vec<Action>) -> Self {
        ActionSequence(genes)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        ActionSequence((0..len).map(|_| random_action(rng)).collect())
    }

    pub fn genes(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Action> {
        self.0.first().copied()
    }
}

impl From<Vec<Action>> for ActionSequence {
    fn from(v: Vec<Action>) -> Self {
        ActionSequence(v)
    }
}

#[inline]
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action::ALL[rng.gen_range(0..Action::COUNT)]
}

/// Agent hyperparameters. Defaults are the tuned values reported for this
/// agent on Sokoban.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub sequence_length: usize,
    /// EA iterations per decision, one challenger evaluation each.
    pub evaluations: usize,
    pub mutation_rate: f64,
    pub shift_buffer: bool,
    /// Rollouts averaged per fitness evaluation.
    pub resamples: usize,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            sequence_length: 40,
            evaluations: 40,
            mutation_rate: 0.4,
            shift_buffer: true,
            resamples: 1,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_length == 0 {
            return Err(Error::InvalidArgument("sequence_length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::InvalidArgument(format!(
                "mutation_rate {} is outside [0, 1]",
                self.mutation_rate
            )));
        }
        if self.resamples == 0 {
            return Err(Error::InvalidArgument("resamples must be positive".into()));
        }
        Ok(())
    }
}

/// Mean final score over `resamples` rollouts of `seq` from `state`.
///
/// Only rollouts through the true engine stop early on a win; predicted
/// states from learned models may be invalid, so only their final score counts.
pub fn evaluate(seq: &ActionSequence, model: &dyn ForwardModel, state: &GameState, resamples: usize) -> f64 {
    let mut sim = model.simulator();
    evaluate_with(sim.as_mut(), model.is_true_engine(), seq, state, resamples)
}

fn evaluate_with(
    sim: &mut dyn Simulator,
    stop_on_win: bool,
    seq: &ActionSequence,
    state: &GameState,
    resamples: usize,
) -> f64 {
    let resamples = resamples.max(1);
    let mut total = 0.0;
    for _ in 0..resamples {
        sim.reset(state);
        for &a in seq.genes() {
            if stop_on_win && sim.state().is_win() {
                break;
            }
            sim.advance(a);
        }
        total += sim.state().score() as f64;
    }
    total / resamples as f64
}

/// Independently redraws each gene with probability `rate`, then redraws one
/// uniformly chosen gene to a different action so the result always differs.
pub fn mutate<R: Rng + ?Sized>(seq: &ActionSequence, rate: f64, rng: &mut R) -> ActionSequence {
    let mut genes = seq.0.clone();
    if genes.is_empty() {
        return ActionSequence(genes);
    }
    for g in genes.iter_mut() {
        if rng.gen_bool(rate) {
            *g = random_action(rng);
        }
    }
    let j = rng.gen_range(0..genes.len());
    let other = rng.gen_range(1..Action::COUNT as u8);
    genes[j] = Action::from_index((genes[j].index() + other) % Action::COUNT as u8).expect("in range");
    if genes == seq.0 {
        // the forced change undid a random one at the same position
        let other = rng.gen_range(1..Action::COUNT as u8);
        genes[j] = Action::from_index((genes[j].index() + other) % Action::COUNT as u8).expect("in range");
    }
    ActionSequence(genes)
}

/// Drops the first gene and appends a random one.
pub fn shift<R: Rng + ?Sized>(seq: &ActionSequence, rng: &mut R) -> ActionSequence {
    if seq.is_empty() {
        return seq.clone();
    }
    let mut genes = seq.0[1..].to_vec();
    genes.push(random_action(rng));
    ActionSequence(genes)
}

/// Outcome of one decision, with the incumbent's fitness after each iteration
/// (the first entry is the initial sequence's fitness).
#[derive(Clone, Debug)]
pub struct Decision {
    pub action: Action,
    pub sequence: ActionSequence,
    pub fitness_trace: Vec<f64>,
}

/// One RHEA decision: evolve a plan for `params.evaluations` iterations and
/// return its first action plus the plan to carry into the next decision.
pub fn decide<R: Rng + ?Sized>(
    state: &GameState,
    model: &dyn ForwardModel,
    params: &AgentParams,
    rng: &mut R,
    carried: Option<&ActionSequence>,
) -> (Action, ActionSequence) {
    let d = decide_traced(state, model, params, rng, carried);
    (d.action, d.sequence)
}

pub fn decide_traced<R: Rng + ?Sized>(
    state: &GameState,
    model: &dyn ForwardModel,
    params: &AgentParams,
    rng: &mut R,
    carried: Option<&ActionSequence>,
) -> Decision {
    let mut sim = model.simulator();
    decide_with(sim.as_mut(), model.is_true_engine(), state, params, rng, carried)
}

fn decide_with<R: Rng + ?Sized>(
    sim: &mut dyn Simulator,
    stop_on_win: bool,
    state: &GameState,
    params: &AgentParams,
    rng: &mut R,
    carried: Option<&ActionSequence>,
) -> Decision {
    let len = params.sequence_length.max(1);
    let mut incumbent = match carried {
        Some(c) if params.shift_buffer && c.len() == len => shift(c, rng),
        _ => ActionSequence::random(len, rng),
    };
    let mut fitness = evaluate_with(sim, stop_on_win, &incumbent, state, params.resamples);
    let mut trace = Vec::with_capacity(params.evaluations + 1);
    trace.push(fitness);
    for _ in 0..params.evaluations {
        let challenger = mutate(&incumbent, params.mutation_rate, rng);
        let f = evaluate_with(sim, stop_on_win, &challenger, state, params.resamples);
        if f >= fitness {
            incumbent = challenger;
            fitness = f;
        }
        trace.push(fitness);
    }
    Decision {
        action: incumbent.first().expect("non-empty sequence"),
        sequence: incumbent,
        fitness_trace: trace,
    }
}

/// A RHEA agent carrying its plan between decisions.
pub struct RheaAgent<'m> {
    params: AgentParams,
    model: &'m dyn ForwardModel,
    sim: Box<dyn Simulator + 'm>,
    carried: Option<ActionSequence>,
}

impl<'m> RheaAgent<'m> {
    pub fn new(model: &'m dyn ForwardModel, params: AgentParams) -> Self {
        RheaAgent {
            params,
            model,
            sim: model.simulator(),
            carried: None,
        }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, state: &GameState, rng: &mut R) -> Action {
        let d = decide_with(
            self.sim.as_mut(),
            self.model.is_true_engine(),
            state,
            &self.params,
            rng,
            self.carried.as_ref(),
        );
        self.carried = Some(d.sequence);
        d.action
    }
}
