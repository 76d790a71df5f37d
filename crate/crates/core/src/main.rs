use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use histrecon::corpus::{load_users, read_manifest, read_productivity, write_corpus, Split};
use histrecon::evaluate::{evaluate, write_predictions};
use histrecon::history::{load_productivity_map, parse_histories, UserHistory};
use histrecon::metrics::{aggregate_time, UserTime};
use histrecon::reconstruct::{MostRecentClassifier, Reconstructor, ThresholdPredictor};
use histrecon::simulator::{generate_corpus, PopulationProfile};
use histrecon::training::{train, TrainConfig, TrainedModels};
use histrecon::{Error, Result};

/// Minutes used by `reconstruct --method heuristic`.
const HEURISTIC_MINUTES: u32 = 5;

#[derive(Parser)]
#[command(
    name = "histrecon",
    version,
    about = "Reconstruct browsing activity from browser history"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        users: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Population profile (TOML); the bundled default when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Override the profile's number of days.
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the vocabulary, both forests and the threshold baseline.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// domain,level table; defaults to the corpus's productivity.csv.
        #[arg(long)]
        productivity: Option<PathBuf>,
        /// Cap on training rows per forest.
        #[arg(long, default_value_t = TrainConfig::default().max_rows)]
        max_rows: usize,
        #[arg(long, default_value_t = TrainConfig::default().n_trees)]
        trees: usize,
    },
    /// Predict active seconds and focused domains for a history export.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Forest)]
        method: Method,
    },
    /// Score the model and baselines against ground truth.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Forest,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })
}

fn simulate(
    users: u64,
    seed: u64,
    profile: Option<PathBuf>,
    days: Option<u32>,
    out: &Path,
) -> Result<()> {
    let mut population = match profile {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
            PopulationProfile::from_toml(&text)?
        }
        None => PopulationProfile::default_profile(),
    };
    if let Some(d) = days {
        population.base.days = d;
    }
    let corpus = generate_corpus(users as usize, seed, &population)?;
    ensure_dir(out)?;
    write_corpus(out, &corpus)?;
    log::info!("wrote {} users to {}", corpus.users.len(), out.display());
    Ok(())
}

fn train_cmd(
    data: &Path,
    out: &Path,
    config: TrainConfig,
    productivity: Option<PathBuf>,
) -> Result<()> {
    let manifest = read_manifest(data)?;
    let productivity = match productivity {
        Some(path) => {
            let file = fs::File::open(&path).map_err(|e| Error::Io { path, source: e })?;
            load_productivity_map(file)?
        }
        None => read_productivity(data)?,
    };
    let users = load_users(data, &manifest.train)?;
    let (models, summary) = train(&users, &productivity, &config)?;
    models.save(out)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    let path = out.join("training_summary.json");
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

fn reconstruct_cmd(model: &Path, history: &Path, out: &Path, method: Method) -> Result<()> {
    let models = TrainedModels::load(model)?;
    let file = fs::File::open(history).map_err(|e| Error::Io {
        path: history.to_owned(),
        source: e,
    })?;
    let histories = parse_histories(BufReader::new(file))?;
    let active = models.active_model();
    let domains = models.domain_model();
    let threshold = ThresholdPredictor {
        minutes: HEURISTIC_MINUTES,
    };
    let reconstructor = match method {
        Method::Forest => Reconstructor {
            activity: &active,
            domains: &domains,
        },
        Method::Heuristic => Reconstructor {
            activity: &threshold,
            domains: &MostRecentClassifier,
        },
    };
    let mut grids = Vec::with_capacity(histories.len());
    for (user_id, visits) in histories {
        grids.push(reconstructor.reconstruct(&UserHistory::new(user_id, visits))?);
    }
    ensure_dir(out)?;
    let mut predictions = create(&out.join("predictions.csv"))?;
    write_predictions(&mut predictions, &grids)?;
    predictions.flush().map_err(|e| Error::Io {
        path: out.join("predictions.csv"),
        source: e,
    })?;
    let times: Vec<UserTime> = grids.iter().map(aggregate_time).collect();
    let mut text = serde_json::to_string_pretty(&times)?;
    text.push('\n');
    let path = out.join("times.json");
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    Ok(())
}

fn evaluate_cmd(model: &Path, data: &Path, out: &Path, split: Split) -> Result<()> {
    let models = TrainedModels::load(model)?;
    let manifest = read_manifest(data)?;
    let users = load_users(data, manifest.users_in(split))?;
    let active = models.active_model();
    let domains = models.domain_model();
    let threshold = ThresholdPredictor {
        minutes: models.threshold.best_minutes,
    };
    let forest = Reconstructor {
        activity: &active,
        domains: &domains,
    };
    let heuristic = Reconstructor {
        activity: &threshold,
        domains: &MostRecentClassifier,
    };
    let evaluation = evaluate(&users, &forest, &heuristic, threshold.minutes, split.name())?;
    evaluation.write(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            users,
            seed,
            profile,
            days,
            out,
        } => simulate(users, seed, profile, days, &out),
        Command::Train {
            data,
            out,
            seed,
            productivity,
            max_rows,
            trees,
        } => {
            let config = TrainConfig {
                seed,
                max_rows,
                n_trees: trees,
                ..TrainConfig::default()
            };
            train_cmd(&data, &out, config, productivity)
        }
        Command::Reconstruct {
            model,
            history,
            out,
            method,
        } => reconstruct_cmd(&model, &history, &out, method),
        Command::Evaluate {
            model,
            data,
            out,
            split,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            evaluate_cmd(&model, &data, &out, split)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
