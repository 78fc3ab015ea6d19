//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! reach stdout in order.

mod support;

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lfm_core::agent::{decide_traced, ActionSequence, AgentParams};
use lfm_core::engine::{Action, GameState, Tile};
use lfm_core::harness::{
    accuracy, bench, collect, divergence, play_eval, search_divergence, TransitionDataset,
};
use lfm_core::levels::{bundled, bundled_text, LevelSet, BUNDLED_SETS};
use lfm_core::models::{AnyModel, ExactMatchModel, ForwardModel, StaticModel, TreeModel, TrueModel};
use lfm_core::patterns::{PatternSpec, Shape};
use lfm_core::tuner::{ntbea_run, Dimension, NtbeaSettings, ParamSpace};

use support::{bfs_solve, parse_puzzle};

const SEED: u64 = 20_190_408;
const PLAYOUTS: usize = 100;
const STEPS: usize = 100;

const MIN_CONSISTENCY_TRANSITIONS: usize = 100_000;
const MIN_HARD_ACCURACY: f64 = 0.97;
const STATIC_IDENTITY_TOLERANCE: f64 = 1e-12;
const MIN_TRUE_STATIC_GAP: f64 = 1.0;
const PLAY_REPEATS: usize = 20;
const PLAY_MAX_STEPS: usize = 100;
const DECIDE_CALLS: usize = 10_000;
const NTBEA_RUNS: u64 = 100;
const NTBEA_MIN_SUCCESSES: usize = 95;
const NTBEA_ITERATIONS: usize = 200;
const MIN_TICKS_PER_SECOND: f64 = 5_000.0;
const BENCH_STEPS: u64 = 1_000_000;

const LIMIT_SOLVER: Duration = Duration::from_secs(60);
const LIMIT_ACCURACY: Duration = Duration::from_secs(600);
const LIMIT_BASELINES: Duration = Duration::from_secs(300);
const LIMIT_NTBEA: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= limit, format!("took {took:.1?}, limit {limit:?}"))
}

fn all_specs() -> Vec<PatternSpec> {
    let mut specs = Vec::new();
    for shape in [Shape::Cross, Shape::Square] {
        for span in 1..=3 {
            specs.push(PatternSpec::new(shape, span).unwrap());
        }
    }
    specs
}

/// Data shared between criteria, built once.
struct Fixture {
    train_levels: LevelSet,
    easy_levels: LevelSet,
    hard_levels: LevelSet,
    train: TransitionDataset,
    easy: TransitionDataset,
    hard: TransitionDataset,
    /// Exact tables for every spec of the grid, trained on `train`.
    exact: Vec<ExactMatchModel>,
    trees: Vec<TreeModel>,
}

impl Fixture {
    fn build() -> Fixture {
        let train_levels = bundled("train").unwrap();
        let easy_levels = bundled("easy").unwrap();
        let hard_levels = bundled("hard").unwrap();
        let train = collect(&train_levels, PLAYOUTS, STEPS, SEED).unwrap();
        let easy = collect(&easy_levels, PLAYOUTS, STEPS, SEED + 1).unwrap();
        let hard = collect(&hard_levels, PLAYOUTS, STEPS, SEED + 2).unwrap();
        let exact: Vec<_> = all_specs()
            .into_iter()
            .map(|s| ExactMatchModel::from_transitions(train.triples(), s).unwrap())
            .collect();
        let trees = exact.iter().map(|e| TreeModel::from_counts(e).unwrap()).collect();
        Fixture {
            train_levels,
            easy_levels,
            hard_levels,
            train,
            easy,
            hard,
            exact,
            trees,
        }
    }

    fn learned(&self) -> Vec<(String, AnyModel)> {
        let mut out = Vec::new();
        for (e, t) in self.exact.iter().zip(&self.trees) {
            out.push((format!("exact-{}", e.spec()), AnyModel::Exact(e.clone())));
            out.push((format!("tree-{}", t.spec()), AnyModel::Tree(t.clone())));
        }
        out
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut solved = 0;
    let mut longest = 0;
    for set in BUNDLED_SETS {
        let levels = bundled(set).unwrap();
        for (i, level) in levels.levels.iter().enumerate() {
            let text = bundled_text(set, i).unwrap();
            let plan = bfs_solve(&parse_puzzle(text)).ok_or_else(|| format!("{set}/{} has no solution", level.name))?;
            let mut state = level.state.clone();
            for c in plan.chars() {
                state = state.step(Action::from_letter(c).unwrap());
            }
            check(state.is_win(), format!("{set}/{}: replayed solution {plan} does not win", level.name))?;
            solved += 1;
            longest = longest.max(plan.len());
        }
    }
    within(start, LIMIT_SOLVER)?;
    Ok(format!(
        "{solved} levels solved and replayed, longest solution {longest} moves, {:.1?}",
        start.elapsed()
    ))
}

/// Cross neighbourhood of radius 2, read independently of the crate's
/// pattern code; order does not matter for a consistency check.
fn cross2_key(s: &GameState, x: i64, y: i64, a: Action) -> (u8, [u8; 9]) {
    const OFFS: [(i64, i64); 9] = [(0, 0), (1, 0), (2, 0), (-1, 0), (-2, 0), (0, 1), (0, 2), (0, -1), (0, -2)];
    let mut cells = [0u8; 9];
    for (c, (dx, dy)) in cells.iter_mut().zip(OFFS) {
        *c = s.get(x + dx, y + dy).unwrap_or(Tile::Wall).index();
    }
    (a.index(), cells)
}

fn criterion_2(f: &Fixture) -> Outcome {
    let mut seen: HashMap<(u8, [u8; 9]), u8> = HashMap::new();
    let mut transitions = 0;
    let mut conflicts = 0;
    for data in [&f.train, &f.easy, &f.hard] {
        for r in &data.records {
            transitions += 1;
            for y in 0..r.prev.height() as i64 {
                for x in 0..r.prev.width() as i64 {
                    let label = r.next.get(x, y).unwrap().index();
                    let prior = *seen.entry(cross2_key(&r.prev, x, y, r.action)).or_insert(label);
                    conflicts += usize::from(prior != label);
                }
            }
        }
    }
    check(
        transitions >= MIN_CONSISTENCY_TRANSITIONS,
        format!("only {transitions} transitions"),
    )?;
    check(conflicts == 0, format!("{conflicts} conflicting cross-2 observations"))?;
    // the crate's own table must agree
    let e = &f.exact[1];
    check(
        e.is_functionally_consistent(),
        "cross-2 exact table holds a pattern with several outcomes",
    )?;
    Ok(format!(
        "{transitions} transitions, {} distinct keys, 0 conflicts",
        seen.len()
    ))
}

fn criterion_3(f: &Fixture) -> Outcome {
    let cross2 = &f.exact[1];
    let acc = accuracy(cross2, &f.train);
    check(acc == 1.0, format!("exact cross-2 training accuracy {acc}"))?;
    // cross-2 and every wider neighbourhood are functionally consistent
    let mut report = vec![format!("exact-cross-2 {acc:.4}")];
    for (e, t) in f.exact.iter().zip(&f.trees) {
        let spec = e.spec();
        if spec.span < 2 {
            continue;
        }
        check(e.is_functionally_consistent(), format!("{spec} table is not consistent"))?;
        let a = accuracy(t, &f.train);
        check(a == 1.0, format!("tree {spec} training accuracy {a}"))?;
        report.push(format!("tree-{spec} {a:.4}"));
    }
    Ok(report.join(", "))
}

fn criterion_4(f: &Fixture, training_time: Duration) -> Outcome {
    let start = Instant::now();
    let mut best_exact = (String::new(), 0.0f64);
    let mut best_tree = (String::new(), 0.0f64);
    let mut lines = Vec::new();
    for (name, model) in f.learned() {
        let a = accuracy(&model, &f.hard);
        lines.push(format!("{name} {a:.4}"));
        check(a >= MIN_HARD_ACCURACY, format!("{name} hard accuracy {a:.4} < {MIN_HARD_ACCURACY}"))?;
        let best = if name.starts_with("tree") { &mut best_tree } else { &mut best_exact };
        if a > best.1 {
            *best = (name, a);
        }
    }
    check(
        best_tree.1 >= best_exact.1,
        format!("best tree {best_tree:?} below best exact {best_exact:?}"),
    )?;
    let took = training_time + start.elapsed();
    check(took <= LIMIT_ACCURACY, format!("took {took:.1?}"))?;
    Ok(format!(
        "best tree {} {:.4} >= best exact {} {:.4}; {}",
        best_tree.0,
        best_tree.1,
        best_exact.0,
        best_exact.1,
        lines.join(", ")
    ))
}

fn criterion_5(f: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    for data in [&f.train, &f.easy, &f.hard] {
        let mut total = 0.0;
        for r in &data.records {
            let same = r.prev.tiles().iter().zip(r.next.tiles()).filter(|(a, b)| a == b).count();
            total += same as f64 / r.prev.tiles().len() as f64;
        }
        let expected = total / data.records.len() as f64;
        let got = accuracy(&StaticModel, data);
        worst = worst.max((got - expected).abs());
    }
    check(
        worst <= STATIC_IDENTITY_TOLERANCE,
        format!("largest deviation {worst:e}"),
    )?;
    Ok(format!("largest deviation over 3 datasets {worst:e}"))
}

fn criterion_6(f: &Fixture) -> Outcome {
    let start = Instant::now();
    let params = AgentParams::default();
    let score = |m: &dyn ForwardModel| {
        play_eval(&params, m, &f.easy_levels, PLAY_REPEATS, PLAY_MAX_STEPS, SEED)
            .unwrap()
            .mean_score
    };
    let truth = score(&TrueModel);
    let stat = score(&StaticModel);
    let mut best = (String::new(), f64::MIN);
    for (name, m) in f.learned() {
        let s = score(&m);
        if s > best.1 {
            best = (name, s);
        }
    }
    let summary = format!(
        "True {truth:.2} >= best learned {} {:.2} >= Static {stat:.2}, gap {:.2}",
        best.0,
        best.1,
        truth - stat
    );
    check(truth >= best.1 && best.1 >= stat, format!("ordering violated: {summary}"))?;
    check(truth - stat >= MIN_TRUE_STATIC_GAP, format!("gap too small: {summary}"))?;
    within(start, LIMIT_BASELINES)?;
    Ok(format!("{summary}, {:.1?}", start.elapsed()))
}

fn criterion_7(f: &Fixture) -> Outcome {
    let count = |shape: Shape, span: u32| {
        f.exact
            .iter()
            .find(|e| e.spec() == PatternSpec::new(shape, span).unwrap())
            .unwrap()
            .unique_pattern_count()
    };
    let mut lines = Vec::new();
    for shape in [Shape::Cross, Shape::Square] {
        let counts: Vec<usize> = (1..=3).map(|s| count(shape, s)).collect();
        check(
            counts.windows(2).all(|w| w[0] < w[1]),
            format!("{shape} counts not increasing: {counts:?}"),
        )?;
        lines.push(format!("{shape} {counts:?}"));
    }
    for span in 1..=3 {
        check(
            count(Shape::Cross, span) < count(Shape::Square, span),
            format!("cross-{span} not below square-{span}"),
        )?;
    }
    Ok(lines.join(", "))
}

fn criterion_8(f: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let learned: AnyModel = AnyModel::Tree(f.trees[0].clone());
    let models: [&dyn ForwardModel; 3] = [&TrueModel, &StaticModel, &learned];
    let states: Vec<&GameState> = f.train.records.iter().step_by(97).map(|r| &r.prev).collect();
    let mut iterations = 0;
    for call in 0..DECIDE_CALLS {
        let params = AgentParams {
            sequence_length: rng.gen_range(1..=20),
            evaluations: rng.gen_range(0..=30),
            mutation_rate: rng.gen_range(0.0..=1.0),
            shift_buffer: rng.gen_bool(0.5),
            resamples: rng.gen_range(1..=2),
        };
        let state = states[rng.gen_range(0..states.len())];
        let carried = rng
            .gen_bool(0.5)
            .then(|| ActionSequence::random(params.sequence_length, &mut rng));
        let d = decide_traced(state, models[call % 3], &params, &mut rng, carried.as_ref());
        check(
            d.fitness_trace.len() == params.evaluations + 1,
            format!("call {call}: trace length {}", d.fitness_trace.len()),
        )?;
        if let Some(w) = d.fitness_trace.windows(2).find(|w| w[1] < w[0]) {
            return Err(format!("call {call}: fitness fell from {} to {}", w[0], w[1]));
        }
        iterations += params.evaluations;
    }
    Ok(format!("{DECIDE_CALLS} calls, {iterations} EA iterations, all traces non-decreasing"))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dims = [5usize, 4, 4, 2];
    let space = ParamSpace::new(
        dims.iter()
            .enumerate()
            .map(|(d, &n)| Dimension {
                name: format!("d{d}"),
                values: (0..n).map(|v| v as f64).collect(),
            })
            .collect(),
    )
    .unwrap();
    // separable, noiseless, unique optimum away from the corners
    let optimum = [3usize, 1, 2, 1];
    let objective = |p: &[usize]| -> f64 {
        p.iter()
            .zip(optimum)
            .map(|(&i, o)| 1.0 - (i as f64 - o as f64).abs() / 4.0)
            .sum::<f64>()
            / 4.0
    };
    let best = (0..space.size())
        .map(|mut n| {
            dims.iter()
                .map(|&d| {
                    let i = n % d;
                    n /= d;
                    i
                })
                .collect::<Vec<_>>()
        })
        .max_by(|a, b| objective(a).total_cmp(&objective(b)))
        .unwrap();
    check(best == optimum, "objective optimum mislabelled")?;
    let settings = NtbeaSettings {
        iterations: NTBEA_ITERATIONS,
        ..NtbeaSettings::default()
    };
    let mut hits = 0;
    for run in 0..NTBEA_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + run);
        let report = ntbea_run(&space, objective, &settings, &mut rng).unwrap();
        let total = report.landscape.total_evaluations();
        check(total == NTBEA_ITERATIONS as u64, format!("run {run}: {total} evaluations"))?;
        for d in 0..dims.len() {
            let c = report.landscape.dimension_count(d);
            check(c == total, format!("run {run}: dimension {d} counts sum to {c}"))?;
        }
        hits += usize::from(report.recommendation == optimum);
    }
    check(
        hits >= NTBEA_MIN_SUCCESSES,
        format!("optimum found in {hits}/{NTBEA_RUNS} runs"),
    )?;
    within(start, LIMIT_NTBEA)?;
    Ok(format!("optimum in {hits}/{NTBEA_RUNS} runs, {:.1?}", start.elapsed()))
}

fn archive_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn criterion_10(f: &Fixture) -> Outcome {
    let params = AgentParams::default();
    let mut trajectories = Vec::new();
    for (set, levels) in [("easy", &f.easy_levels), ("hard", &f.hard_levels)] {
        let report = play_eval(&params, &TrueModel, levels, PLAY_REPEATS, PLAY_MAX_STEPS, SEED).unwrap();
        trajectories.push((set, levels, report.episodes.into_iter().map(|e| (e.level, e.actions)).collect::<Vec<_>>()));
    }
    // weakest models first: narrow neighbourhoods diverge soonest
    let mut models = f.learned();
    models.sort_by_key(|(name, m)| (m.descriptor().spec.map(|s| s.cell_count()), !name.starts_with("exact")));
    for (name, model) in &models {
        for (set, levels, tr) in &trajectories {
            let Some(found) = search_divergence(model, levels, tr) else { continue };
            let level_name = format!("{set}/{}", levels.levels[found.level].name);
            let text = found.report(name, &level_name);
            let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("divergence_example.txt");
            std::fs::write(&out, &text).map_err(|e| e.to_string())?;
            verify_archive(f)?;
            return Ok(format!(
                "{name} on {level_name}: goal at step {}, divergence at {}, invalid at {}; written to {}",
                found.goal_step,
                found.divergence_step,
                found.invalid_step,
                out.display()
            ));
        }
    }
    Err("no model/trajectory pair shows a goal before an invalid prediction".into())
}

/// Replays the checked-in example and confirms it still shows the pattern.
fn verify_archive(f: &Fixture) -> Result<(), String> {
    let path = archive_dir().join("divergence_example.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let field = |name: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name}: ")))
            .ok_or_else(|| format!("archive lacks {name}"))
    };
    let model_name = field("model")?;
    let level_name = field("level")?;
    let (_, model) = f
        .learned()
        .into_iter()
        .find(|(n, _)| n == model_name)
        .ok_or_else(|| format!("unknown model {model_name}"))?;
    let (set, file) = level_name.split_once('/').ok_or("bad level field")?;
    let levels = bundled(set).map_err(|e| e.to_string())?;
    let level = levels.levels.iter().find(|l| l.name == file).ok_or("unknown level")?;
    let actions: Vec<Action> = field("actions")?.chars().filter_map(Action::from_letter).collect();
    let d = divergence(&model, &level.state, &actions);
    let steps = d.goal_before_invalid().ok_or("archived example no longer reproduces")?;
    let expect = (
        field("goal_step")?.parse().map_err(|_| "bad goal_step")?,
        field("divergence_step")?.parse().map_err(|_| "bad divergence_step")?,
        field("invalid_step")?.parse().map_err(|_| "bad invalid_step")?,
    );
    check(steps == expect, format!("archived steps {expect:?}, replay gives {steps:?}"))
}

fn criterion_11(f: &Fixture) -> Outcome {
    let level = &f.train_levels.levels[0];
    let report = bench(&level.name, &level.state, BENCH_STEPS, SEED);
    let tps = report.ticks_per_second();
    check(tps >= MIN_TICKS_PER_SECOND, format!("{tps:.0} ticks/s"))?;
    Ok(format!("{tps:.0} ticks/s over {} steps on {}", report.steps, report.level))
}

fn run(number: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {number:>2} ({name}): {detail} [{:.1?}]", start.elapsed());
    outcome.is_ok()
}

fn main() -> ExitCode {
    println!("acceptance suite, seed {SEED}");
    let mut ok = run(1, "solver oracle", criterion_1);
    let start = Instant::now();
    let fixture = Fixture::build();
    let training_time = start.elapsed();
    println!(
        "fixture: {} train / {} easy / {} hard transitions, 12 models trained in {training_time:.1?}",
        fixture.train.len(),
        fixture.easy.len(),
        fixture.hard.len()
    );
    let f = &fixture;
    ok &= run(2, "cross-2 locality", || criterion_2(f));
    ok &= run(3, "training-set reproduction", || criterion_3(f));
    ok &= run(4, "held-out accuracy band", || criterion_4(f, training_time));
    ok &= run(5, "static accuracy identity", || criterion_5(f));
    ok &= run(6, "baseline ordering", || criterion_6(f));
    ok &= run(7, "pattern-count monotonicity", || criterion_7(f));
    ok &= run(8, "1+1 EA elitism", || criterion_8(f));
    ok &= run(9, "NTBEA sanity", criterion_9);
    ok &= run(10, "divergence example", || criterion_10(f));
    ok &= run(11, "engine throughput", || criterion_11(f));
    println!("acceptance: {}", if ok { "all criteria PASS" } else { "FAILURES above" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
