//! Command-line front end. Exit codes: 0 success (including reported
//! non-existence), 1 domain failure, 2 usage, input or I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assumptions::{check_distinct_distances, check_injectivity};
use crate::equilibrium::{verify_on_grid, DeviationGrid};
use crate::error::GameError;
use crate::experiments::{
    deviation_curve, gen_random_game, linear_mc_validate, sweep_critical_temperatures,
    write_curve_csv, write_sweep_csv, LinearSourceSpec,
};
use crate::game::GameSpec;
use crate::probability::{
    find_hetero_candidate, max_hetero_t, threshold_homo_t, DEFAULT_FIXED_POINT_TOL,
    DEFAULT_MAX_ITER,
};
use crate::profile::{ChoiceModel, StrategyProfile, DEFAULT_TIE_TOL};
use crate::proximity::{construct_pne_prox, duopoly_pne, proximity_construction};
use crate::simplex::default_grid_step;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hdgame",
    version,
    about = "Equilibria of the heterogeneous data game"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "HDGAME_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Prox,
    Prob,
}

#[derive(Debug, clap::Args)]
struct Output {
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random game.
    GenGame {
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long = "D", default_value_t = 2)]
        d: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Check the distinct-distance and injectivity assumptions.
    CheckAssumptions {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        trials: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Construct the proximity-model equilibrium.
    FindProx {
        #[arg(long)]
        game: PathBuf,
        #[arg(long = "N")]
        n: usize,
        /// Number of dominant sources; defaults to K (or the duopoly rule when N = 2).
        #[arg(long)]
        k0: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Fixed-point search for a heterogeneous logit equilibrium.
    FindHetero {
        #[arg(long)]
        game: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_FIXED_POINT_TOL)]
        tol: f64,
        #[arg(long)]
        grid_step: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Grid-verify a profile.
    Verify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
        tie_tol: f64,
        #[arg(long)]
        grid_step: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Smallest grid temperature with a homogeneous logit equilibrium.
    ThresholdHomo {
        #[arg(long)]
        game: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0.001)]
        resolution: f64,
        #[arg(long)]
        grid_step: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Largest grid temperature with a verified heterogeneous logit equilibrium.
    MaxHeteroT {
        #[arg(long)]
        game: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0.001)]
        resolution: f64,
        #[arg(long)]
        grid_step: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Critical-temperature sweep over random games (CSV).
    Sweep {
        #[arg(long, default_value_t = 10)]
        games: usize,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long = "D", default_value_t = 2)]
        d: usize,
        /// Game i uses seed + i.
        #[arg(long)]
        seed: u64,
        #[arg(long = "N-min", default_value_t = 2)]
        n_min: usize,
        #[arg(long = "N-max", default_value_t = 30)]
        n_max: usize,
        #[arg(long, default_value_t = 0.001)]
        resolution: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Deviation-utility curve of one player (K = 2, CSV).
    Curve {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 0)]
        player: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.002)]
        alpha_step: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Monte-Carlo check of the linear-model loss identity.
    LinearValidate {
        /// JSON with `beta`, `sigma_x` (rows), `noise_sd` and `beta_hat`.
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LinearSourceFile {
    beta: Vec<f64>,
    sigma_x: Vec<Vec<f64>>,
    noise_sd: f64,
    beta_hat: Vec<f64>,
}

/// Input-side failure (bad flag value, unreadable file); maps to exit 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InputError(String);

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())).into())
}

fn load_game(path: &Path) -> anyhow::Result<GameSpec> {
    let text = read_text(path)?;
    GameSpec::from_json_str(&text).with_context(|| format!("game file {}", path.display()))
}

/// Accepts a bare profile or any object carrying a `profile` field.
fn load_profile(path: &Path) -> anyhow::Result<StrategyProfile> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| InputError(format!("profile file {}: {e}", path.display())))?;
    let inner = match value.get("profile") {
        Some(p) => p.clone(),
        None => value,
    };
    StrategyProfile::from_json_str(&inner.to_string())
        .with_context(|| format!("profile file {}", path.display()))
}

fn emit(out: &Output, bytes: &[u8]) -> anyhow::Result<()> {
    match &out.output {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| InputError(format!("cannot write {}: {e}", path.display())).into()),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: &Output, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn step_or_default(step: Option<f64>, game: &GameSpec) -> f64 {
    step.unwrap_or_else(|| default_grid_step(game.num_sources()))
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenGame { k, d, seed, out } => {
            let game = gen_random_game(k, d, seed)?;
            emit(&out, (game.to_json_string() + "\n").as_bytes())
        }
        Command::CheckAssumptions {
            game,
            seed,
            trials,
            out,
        } => {
            let game = load_game(&game)?;
            let injectivity = check_injectivity(&game, trials, seed);
            emit_json(
                &out,
                &json!({
                    "distinct_distances": check_distinct_distances(&game, 1e-9),
                    "injectivity": injectivity,
                    "injectivity_holds": injectivity.holds(),
                }),
            )
        }
        Command::FindProx { game, n, k0, out } => {
            let game = load_game(&game)?;
            if n == 2 && k0.is_none() {
                return emit_json(&out, &duopoly_pne(&game));
            }
            let k0 = k0.unwrap_or(game.num_sources());
            let construction = proximity_construction(&game, n, k0)?;
            let profile = construct_pne_prox(&game, n, k0)?;
            emit_json(
                &out,
                &json!({ "construction": construction, "profile": profile }),
            )
        }
        Command::FindHetero {
            game,
            n,
            t,
            max_iter,
            tol,
            grid_step,
            out,
        } => {
            let game = load_game(&game)?;
            let outcome = find_hetero_candidate(&game, n, t, max_iter, tol)?;
            let report = match outcome.profile() {
                Some(p) => {
                    let grid = DeviationGrid::new(&game, step_or_default(grid_step, &game))?;
                    Some(verify_on_grid(
                        &grid,
                        p,
                        &game,
                        &ChoiceModel::probability(t)?,
                    )?)
                }
                None => None,
            };
            emit_json(&out, &json!({ "outcome": outcome, "report": report }))
        }
        Command::Verify {
            game,
            profile,
            model,
            t,
            tie_tol,
            grid_step,
            out,
        } => {
            let game = load_game(&game)?;
            let profile = load_profile(&profile)?;
            let model = match (model, t) {
                (ModelKind::Prox, _) => ChoiceModel::Proximity { tie_tol },
                (ModelKind::Prob, Some(t)) => ChoiceModel::probability(t)?,
                (ModelKind::Prob, None) => {
                    bail!(InputError("--t is required with --model prob".into()))
                }
            };
            model.validate()?;
            let grid = DeviationGrid::new(&game, step_or_default(grid_step, &game))?;
            emit_json(&out, &verify_on_grid(&grid, &profile, &game, &model)?)
        }
        Command::ThresholdHomo {
            game,
            n,
            resolution,
            grid_step,
            out,
        } => {
            let game = load_game(&game)?;
            let step = step_or_default(grid_step, &game);
            emit_json(&out, &threshold_homo_t(&game, n, resolution, step)?)
        }
        Command::MaxHeteroT {
            game,
            n,
            resolution,
            grid_step,
            out,
        } => {
            let game = load_game(&game)?;
            let step = step_or_default(grid_step, &game);
            emit_json(&out, &max_hetero_t(&game, n, resolution, step)?)
        }
        Command::Sweep {
            games,
            k,
            d,
            seed,
            n_min,
            n_max,
            resolution,
            out,
        } => {
            if n_min == 0 || n_min > n_max {
                bail!(InputError(format!(
                    "N range [{n_min}, {n_max}] is empty or contains 0"
                )));
            }
            let specs = (0..games as u64)
                .map(|i| gen_random_game(k, d, seed.wrapping_add(i)))
                .collect::<crate::error::Result<Vec<_>>>()?;
            let n_values: Vec<usize> = (n_min..=n_max).collect();
            let rows = sweep_critical_temperatures(&specs, &n_values, resolution);
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            emit(&out, &buf)
        }
        Command::Curve {
            game,
            profile,
            player,
            t,
            alpha_step,
            out,
        } => {
            let game = load_game(&game)?;
            let profile = load_profile(&profile)?;
            let curve = deviation_curve(&game, &profile, player, t, alpha_step)?;
            let mut buf = Vec::new();
            write_curve_csv(&curve, &mut buf)?;
            emit(&out, &buf)
        }
        Command::LinearValidate {
            source,
            samples,
            seed,
            out,
        } => {
            let text = read_text(&source)?;
            let file: LinearSourceFile = serde_json::from_str(&text)
                .map_err(|e| InputError(format!("source file {}: {e}", source.display())))?;
            let d = file.beta.len();
            if file.sigma_x.len() != d || file.sigma_x.iter().any(|r| r.len() != d) {
                bail!(GameError::input("sigma_x", format!("must be {d}x{d}")));
            }
            let sigma = DMatrix::from_fn(d, d, |i, j| file.sigma_x[i][j]);
            let spec = LinearSourceSpec::new(DVector::from_vec(file.beta), sigma, file.noise_sd)?;
            let result =
                linear_mc_validate(&spec, &DVector::from_vec(file.beta_hat), samples, seed)?;
            emit_json(
                &out,
                &json!({
                    "empirical_mse": result.empirical_mse,
                    "predicted": result.predicted,
                    "std_err": result.std_err,
                    "within_3_se": result.within(3.0),
                }),
            )
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(g) = cause.downcast_ref::<GameError>() {
            return if g.is_input() {
                EXIT_INPUT
            } else {
                EXIT_DOMAIN
            };
        }
        if cause.is::<InputError>() || cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_INPUT;
        }
    }
    EXIT_DOMAIN
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_INPUT;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_DOMAIN;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            exit_code(&e)
        }
    }
}
