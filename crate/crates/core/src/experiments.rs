//! Synthetic study: random games, critical-temperature sweeps, deviation
//! curves and a Monte-Carlo check of the linear-model loss identity.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assumptions::{check_distinct_distances, check_injectivity};
use crate::equilibrium::{DeviationGrid, Opponents};
use crate::error::{GameError, Result};
use crate::game::{DataSource, GameSpec};
use crate::loss::{ell_max_estimate, loss_matrix};
use crate::probability::{max_hetero_on, threshold_homo_on, HeteroThreshold, TemperatureGrid};
use crate::profile::{ChoiceModel, StrategyProfile};
use crate::simplex::default_grid_step;

pub const MAX_SAMPLING_ATTEMPTS: usize = 1000;
const MIN_THETA_SEPARATION: f64 = 0.1;
const MIN_EIGENVALUE: f64 = 0.1;
const MIN_SECOND_WEIGHT: f64 = 0.1;
const WEIGHT_GAP: f64 = 1e-6;
const INJECTIVITY_TRIALS: usize = 256;

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // Sign-fix so Q is Haar distributed.
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn random_source_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let q = random_orthogonal(rng, d);
    // (0.1, 1]: the top end is attainable, the floor is not.
    let eig: Vec<f64> = (0..d)
        .map(|_| 1.0 - (1.0 - MIN_EIGENVALUE) * rng.random::<f64>())
        .collect();
    let s = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    (&s + s.transpose()) * 0.5
}

fn random_thetas(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Option<Vec<DVector<f64>>> {
    let mut thetas: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut tries = 0;
    while thetas.len() < k {
        tries += 1;
        if tries > MAX_SAMPLING_ATTEMPTS {
            return None;
        }
        let cand = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
        if thetas
            .iter()
            .all(|t| (t - &cand).norm() >= MIN_THETA_SEPARATION)
        {
            thetas.push(cand);
        }
    }
    Some(thetas)
}

fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Option<Vec<f64>> {
    let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|x| x / total).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let drift = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    if w.windows(2).any(|p| p[0] - p[1] <= WEIGHT_GAP) || w[k - 1] <= 0.0 {
        return None;
    }
    if k == 2 && w[1] < MIN_SECOND_WEIGHT {
        return None;
    }
    Some(w)
}

/// Random game: covariances `QΛQᵀ` with eigenvalues in (0.1, 1], parameters
/// uniform in `[−1, 1]^D` and 0.1 apart, strictly decreasing Dirichlet(1)
/// weights. Resamples until the regularity checks pass.
pub fn gen_random_game(k: usize, d: usize, seed: u64) -> Result<GameSpec> {
    if k < 2 {
        return Err(GameError::input("K", "need at least two sources"));
    }
    if d == 0 {
        return Err(GameError::input("D", "dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let Some(weights) = random_weights(&mut rng, k) else {
            continue;
        };
        let Some(thetas) = random_thetas(&mut rng, k, d) else {
            continue;
        };
        let sources: Result<Vec<DataSource>> = thetas
            .into_iter()
            .zip(&weights)
            .map(|(theta, &w)| DataSource::new(theta, random_source_matrix(&mut rng, d), w))
            .collect();
        let Ok(sources) = sources else { continue };
        let Ok(game) = GameSpec::new(d, sources, Some(seed)) else {
            continue;
        };
        if !check_distinct_distances(&game, 1e-9) {
            continue;
        }
        if !check_injectivity(&game, INJECTIVITY_TRIALS, seed).holds() {
            continue;
        }
        return Ok(game);
    }
    Err(GameError::Infeasible(format!(
        "no admissible game after {MAX_SAMPLING_ATTEMPTS} attempts (K = {k}, D = {d}, seed = {seed})"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub game_id: usize,
    pub n: usize,
    pub ell_max: Option<f64>,
    pub homo_threshold_frac: Option<f64>,
    pub hetero_max_frac: Option<f64>,
    pub hetero_found: bool,
    pub error: Option<String>,
}

struct GameContext {
    tgrid: TemperatureGrid,
    ell_max: f64,
    dev_grid: DeviationGrid,
}

fn game_context(game: &GameSpec, resolution: f64) -> Result<GameContext> {
    let step = default_grid_step(game.num_sources());
    let ell_max = ell_max_estimate(game, step)?;
    Ok(GameContext {
        tgrid: TemperatureGrid::new(resolution, 2.0 * ell_max, step)?,
        ell_max,
        dev_grid: DeviationGrid::new(game, step)?,
    })
}

fn sweep_cell(game: &GameSpec, ctx: &GameContext, game_id: usize, n: usize) -> SweepRow {
    let mut row = SweepRow {
        game_id,
        n,
        ell_max: Some(ctx.ell_max),
        homo_threshold_frac: None,
        hetero_max_frac: None,
        hetero_found: false,
        error: None,
    };
    let mut errors = Vec::new();
    match threshold_homo_on(game, n, &ctx.tgrid, ctx.ell_max, &ctx.dev_grid) {
        Ok(r) => row.homo_threshold_frac = Some(r.fraction()),
        Err(e) => errors.push(format!("homogeneous: {e}")),
    }
    match max_hetero_on(game, n, &ctx.tgrid, ctx.ell_max, &ctx.dev_grid) {
        Ok(HeteroThreshold::Found(r)) => {
            row.hetero_max_frac = Some(r.fraction());
            row.hetero_found = true;
        }
        Ok(HeteroThreshold::NoneFound) => {}
        Err(e) => errors.push(format!("heterogeneous: {e}")),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

/// One row per (game, N); errors are recorded in the row. Rows are sorted by
/// `(game_id, N)`. Verification uses the default grid step for each game's K.
pub fn sweep_critical_temperatures(
    games: &[GameSpec],
    n_values: &[usize],
    resolution: f64,
) -> Vec<SweepRow> {
    let contexts: Vec<Result<GameContext>> = games
        .par_iter()
        .map(|g| game_context(g, resolution))
        .collect();
    let cells: Vec<(usize, usize)> = (0..games.len())
        .flat_map(|g| n_values.iter().map(move |&n| (g, n)))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(g, n)| match &contexts[g] {
            Ok(ctx) => sweep_cell(&games[g], ctx, g, n),
            Err(e) => SweepRow {
                game_id: g,
                n,
                ell_max: None,
                homo_threshold_frac: None,
                hetero_max_frac: None,
                hetero_found: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by_key(|r| (r.game_id, r.n));
    rows
}

fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GameError::input("output", e.to_string());
    w.write_record([
        "game_id",
        "N",
        "ell_max",
        "homo_threshold_frac",
        "hetero_max_frac",
        "hetero_found",
        "error",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.game_id.to_string(),
            r.n.to_string(),
            fmt_opt(r.ell_max),
            fmt_opt(r.homo_threshold_frac),
            fmt_opt(r.hetero_max_frac),
            r.hetero_found.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| GameError::input("output", e.to_string()))
}

/// Utility of `player` when it alone moves to `θ̄((α, 1 − α))`, α ascending.
pub fn deviation_curve(
    game: &GameSpec,
    profile: &StrategyProfile,
    player: usize,
    t: f64,
    alpha_step: f64,
) -> Result<Vec<(f64, f64)>> {
    if game.num_sources() != 2 {
        return Err(GameError::input(
            "game",
            format!(
                "deviation curves need K = 2, got K = {}",
                game.num_sources()
            ),
        ));
    }
    if player >= profile.num_players() {
        return Err(GameError::input(
            "player",
            format!(
                "index {player} out of range for {} players",
                profile.num_players()
            ),
        ));
    }
    let model = ChoiceModel::probability(t)?;
    profile.validate(game)?;
    let grid = DeviationGrid::new(game, alpha_step)?;
    let losses = loss_matrix(profile, game)?;
    let columns: Vec<Vec<f64>> = (0..2).map(|k| losses.column(k)).collect();
    let opp = Opponents::new(&columns, Some(player), &model);
    let weights = game.weights();
    Ok((0..grid.len())
        .map(|i| {
            (
                grid.coords()[i].as_slice()[0],
                opp.utility(grid.loss_row(i), &weights),
            )
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(curve: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GameError::input("output", e.to_string());
    w.write_record(["alpha", "utility"]).map_err(io)?;
    for &(a, u) in curve {
        w.write_record([fmt_float(a), fmt_float(u)]).map_err(io)?;
    }
    w.flush()
        .map_err(|e| GameError::input("output", e.to_string()))
}

/// A linear-regression source: `y | x ~ N(βᵀx, σ²)`, `x ~ N(0, Σ_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSourceSpec {
    beta: DVector<f64>,
    sigma_x: DMatrix<f64>,
    noise_sd: f64,
    chol_l: DMatrix<f64>,
}

impl LinearSourceSpec {
    pub fn new(beta: DVector<f64>, sigma_x: DMatrix<f64>, noise_sd: f64) -> Result<Self> {
        let d = beta.len();
        if d == 0 {
            return Err(GameError::input("beta", "must be non-empty"));
        }
        if sigma_x.shape() != (d, d) {
            return Err(GameError::input("sigma_x", format!("must be {d}x{d}")));
        }
        if (&sigma_x - sigma_x.transpose()).amax() > 1e-9 {
            return Err(GameError::input("sigma_x", "not symmetric"));
        }
        if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
            return Err(GameError::input(
                "noise_sd",
                "must be a finite non-negative number",
            ));
        }
        let chol = sigma_x
            .clone()
            .cholesky()
            .ok_or_else(|| GameError::input("sigma_x", "not positive definite"))?;
        Ok(LinearSourceSpec {
            beta,
            sigma_x,
            noise_sd,
            chol_l: chol.l(),
        })
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma_x(&self) -> &DMatrix<f64> {
        &self.sigma_x
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// `(β̂ − β)ᵀ Σ_x (β̂ − β) + σ²`.
    pub fn predicted_mse(&self, beta_hat: &DVector<f64>) -> f64 {
        let e = beta_hat - &self.beta;
        (e.transpose() * &self.sigma_x * &e)[(0, 0)] + self.noise_sd * self.noise_sd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValidation {
    pub empirical_mse: f64,
    pub predicted: f64,
    pub std_err: f64,
}

impl McValidation {
    pub fn within(&self, n_se: f64) -> bool {
        (self.empirical_mse - self.predicted).abs() <= n_se * self.std_err
    }
}

pub fn linear_mc_validate(
    source: &LinearSourceSpec,
    beta_hat: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<McValidation> {
    if samples < 1000 {
        return Err(GameError::input("samples", "need at least 1000 samples"));
    }
    if beta_hat.len() != source.beta.len() {
        return Err(GameError::input(
            "beta_hat",
            "dimension does not match beta",
        ));
    }
    let l = &source.chol_l;
    let d = source.beta.len();
    let err = beta_hat - &source.beta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = l * z;
        let eps = source.noise_sd * rng.sample::<f64, _>(StandardNormal);
        let r = err.dot(&x) - eps;
        let sq = r * r;
        // Welford update.
        let delta = sq - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (sq - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(McValidation {
        empirical_mse: mean,
        predicted: source.predicted_mse(beta_hat),
        std_err: (var / samples as f64).sqrt(),
    })
}
