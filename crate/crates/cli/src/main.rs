use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lfm_core::experiment::{self, ExperimentConfig, NamedModel, TEST_SETS};
use lfm_core::harness::{self, play_eval, search_divergence};
use lfm_core::models::{load_model, ForwardModel, TrueModel};
use lfm_core::patterns::{extract_training, write_examples, PatternSpec, Shape};

#[derive(Parser)]
#[command(name = "lfm", version, about = "Learn and evaluate local forward models of Sokoban")]
struct Cli {
    /// JSON experiment configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record random-agent transitions on the train, easy and hard sets.
    Collect,
    /// Train every model of the configured grid on the training dataset.
    Train {
        /// Dataset to train on (default: <out>/datasets/train.transitions).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// One-step accuracy of all models on the test datasets.
    Eval,
    /// Playing performance of the RHEA agent with each model.
    Play,
    /// Tune the agent parameters with NTBEA on the training levels.
    Tune,
    /// Engine throughput with random actions.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        /// Level as <set>:<index>, 0-based.
        #[arg(long, default_value = "train:0")]
        level: String,
    },
    /// collect, train, eval, play (tuning first if the agent is "tune").
    Run,
    /// Write the pattern training examples of a dataset.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "cross")]
        shape: Shape,
        #[arg(long, default_value_t = 2)]
        span: u32,
        #[arg(long)]
        output: PathBuf,
    },
    /// Find a test trajectory where a model scores the first goal before
    /// its rollout turns invalid.
    Divergence {
        #[arg(long)]
        model: PathBuf,
    },
    /// Print the effective configuration as JSON.
    Config,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn load_datasets(config: &ExperimentConfig, sets: &[&str]) -> Result<Vec<(String, harness::TransitionDataset)>> {
    sets.iter()
        .map(|set| {
            let path = config.dataset_path(set);
            let data = experiment::load_dataset(&path)
                .context("loading dataset (run `lfm collect` first?)")?;
            Ok((set.to_string(), data))
        })
        .collect()
}

fn all_models(config: &ExperimentConfig) -> Result<Vec<NamedModel>> {
    let mut models = experiment::baselines();
    models.extend(experiment::load_models(config).context("loading models (run `lfm train` first?)")?);
    Ok(models)
}

fn report_rows(rows: &[harness::ResultRow]) {
    eprintln!("{}", harness::RESULTS_HEADER);
    for r in rows {
        eprintln!("{r}");
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Collect => {
            for (set, data) in experiment::cmd_collect(&config)? {
                eprintln!("{set}: {} transitions -> {}", data.len(), config.dataset_path(&set).display());
            }
        }
        Command::Train { dataset } => {
            let path = dataset.clone().unwrap_or_else(|| config.dataset_path("train"));
            let data = experiment::load_dataset(&path)?;
            for m in experiment::cmd_train(&config, &data)? {
                let (kind, spec) = (m.kind, m.spec.expect("learned model"));
                let stat = match &m.model {
                    lfm_core::models::AnyModel::Tree(t) => format!("{} nodes, depth {}", t.node_count(), t.depth()),
                    other => format!("{} unique patterns", other.size_statistic()),
                };
                eprintln!("{}: {stat} -> {}", m.label(), config.model_path(kind, spec).display());
            }
        }
        Command::Eval => {
            let models = all_models(&config)?;
            let datasets = load_datasets(&config, &TEST_SETS)?;
            report_rows(&experiment::cmd_eval(&config, &models, &datasets)?);
        }
        Command::Play => {
            let models = all_models(&config)?;
            let params = experiment::resolve_agent(&config)?;
            report_rows(&experiment::cmd_play(&config, &models, &params)?.0);
        }
        Command::Tune => {
            let (params, report) = experiment::cmd_tune(&config)?;
            eprintln!(
                "recommended after {} evaluations: {}",
                report.log.len(),
                format_params(&params)
            );
        }
        Command::Bench { steps, level } => {
            let (set, index) = level
                .split_once(':')
                .and_then(|(s, i)| Some((s, i.parse::<usize>().ok()?)))
                .with_context(|| format!("--level expects <set>:<index>, got {level:?}"))?;
            let levels = config.level_set(set)?;
            let Some(l) = levels.levels.get(index) else {
                bail!("level set {set} has {} levels, no index {index}", levels.len());
            };
            let report = harness::bench(&format!("{set}/{}", l.name), &l.state, *steps, config.seed);
            print!("{report}");
        }
        Command::Run => {
            let out = experiment::cmd_run(&config)?;
            eprintln!("agent: {}", format_params(&out.params));
            report_rows(&out.rows);
            eprintln!("results -> {}", config.out.join("results.csv").display());
        }
        Command::Extract {
            dataset,
            shape,
            span,
            output,
        } => {
            let spec = PatternSpec::new(*shape, *span)?;
            let data = experiment::load_dataset(dataset)?;
            let mut examples = Vec::new();
            for (prev, action, next) in data.triples() {
                examples.extend(extract_training(prev, action, next, spec)?);
            }
            write_to(output, |w| write_examples(w, spec, &examples))?;
            eprintln!("{} examples -> {}", examples.len(), output.display());
        }
        Command::Divergence { model } => {
            let model = load_model(model)?;
            let label = model.descriptor().to_string();
            let params = experiment::resolve_agent(&config)?;
            for set in TEST_SETS {
                let levels = config.level_set(set)?;
                let report = play_eval(
                    &params,
                    &TrueModel,
                    &levels,
                    config.evaluation.repeats,
                    config.evaluation.max_steps,
                    config.play_seed(set),
                )?;
                let trajectories: Vec<_> = report.episodes.into_iter().map(|e| (e.level, e.actions)).collect();
                if let Some(found) = search_divergence(&model, &levels, &trajectories) {
                    let text = found.report(&label, &format!("{set}/{}", levels.levels[found.level].name));
                    let path = config.out.join("divergence.txt");
                    write_to(&path, |w| w.write_all(text.as_bytes()))?;
                    print!("{text}");
                    eprintln!("example -> {}", path.display());
                    return Ok(());
                }
            }
            bail!("no trajectory shows a goal before an invalid prediction under {label}");
        }
        Command::Config => println!("{}", config.to_json()),
    }
    Ok(())
}

fn format_params(params: &lfm_core::agent::AgentParams) -> String {
    format!(
        "sequence_length={} evaluations={} mutation_rate={} shift_buffer={} resamples={}",
        params.sequence_length, params.evaluations, params.mutation_rate, params.shift_buffer, params.resamples
    )
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
