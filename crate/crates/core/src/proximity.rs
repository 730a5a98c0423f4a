//! Equilibria under the proximity choice model.
//!
//! Covers the two-provider characterization, the explicit specialization
//! equilibrium for many providers (effective weights, the critical share
//! `z*`, per-source provider counts and the admissible provider range),
//! grid verification, and the no-duplicates-off-ground-truth property.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::assumptions::{check_distinct_distances, check_injectivity};
use crate::equilibrium::{verify_on_grid, DeviationGrid, EquilibriumReport};
use crate::error::{GameError, Result};
use crate::game::GameSpec;
use crate::loss::quad_form;
use crate::profile::{ChoiceModel, MixtureWeights, StrategyProfile};

/// Slack used when flooring or ceiling ratios that are integral in exact arithmetic.
pub const INTEGRALITY_TOL: f64 = 1e-9;

const DISTANCE_TIE_TOL: f64 = 1e-9;
const DUPLICATE_TOL: f64 = 1e-9;
const INJECTIVITY_TRIALS: usize = 256;

fn floor_tol(x: f64) -> usize {
    (x + INTEGRALITY_TOL).floor().max(0.0) as usize
}

fn ceil_tol(x: f64) -> usize {
    (x - INTEGRALITY_TOL).ceil().max(0.0) as usize
}

fn is_integral(x: f64) -> bool {
    (x - x.round()).abs() <= INTEGRALITY_TOL
}

/// Outcome of the two-provider analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DuopolyOutcome {
    Exists {
        profile: StrategyProfile,
        unique: bool,
    },
    NoneExists,
}

/// Inclusive range of provider counts; `hi = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NRange {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl NRange {
    pub fn contains(&self, n: usize) -> bool {
        n >= self.lo && self.hi.is_none_or(|hi| n <= hi)
    }
}

/// Data behind the explicit specialization equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityConstruction {
    pub k0: usize,
    pub effective_weights: Vec<f64>,
    pub z_star: f64,
    pub counts: Vec<usize>,
    pub n_range: NRange,
}

/// Two providers: `(θ_1, θ_1)` is an equilibrium iff `w_1 ≥ 0.5`, unique when `w_1 > 0.5`.
pub fn duopoly_pne(game: &GameSpec) -> DuopolyOutcome {
    if !check_injectivity(game, INJECTIVITY_TRIALS, 0).holds() {
        warn!("injectivity of the weighted-minimizer map fails; duopoly result may not apply");
    }
    let w1 = game.source(0).weight();
    if w1 < 0.5 {
        return DuopolyOutcome::NoneExists;
    }
    let theta1 = game.source(0).theta().clone();
    DuopolyOutcome::Exists {
        profile: StrategyProfile::replicated(
            theta1,
            Some(MixtureWeights::vertex(game.num_sources(), 0)),
            2,
        ),
        unique: w1 > 0.5,
    }
}

fn check_k0(game: &GameSpec, k0: usize) -> Result<()> {
    if k0 == 0 || k0 > game.num_sources() {
        return Err(GameError::input(
            "k0",
            format!("must lie in [1, {}], got {k0}", game.num_sources()),
        ));
    }
    Ok(())
}

fn tail_weight(game: &GameSpec, k0: usize) -> f64 {
    game.sources()[k0..].iter().map(|s| s.weight()).sum()
}

/// `w_{k0} > 3 Σ_{j > k0} w_j`.
pub fn dominance_holds(game: &GameSpec, k0: usize) -> bool {
    k0 >= 1
        && k0 <= game.num_sources()
        && game.source(k0 - 1).weight() > 3.0 * tail_weight(game, k0)
}

/// Weights of the `k0` dominant sources after each tail source hands its
/// weight to the dominant ground truth it is closest to.
pub fn effective_weights(game: &GameSpec, k0: usize) -> Result<Vec<f64>> {
    check_k0(game, k0)?;
    if !dominance_holds(game, k0) {
        warn!("k0 = {k0}: dominant weight does not exceed three times the tail weight");
    }
    let mut w: Vec<f64> = game.sources()[..k0].iter().map(|s| s.weight()).collect();
    for j in k0..game.num_sources() {
        let tail = game.source(j);
        let dist: Vec<f64> = (0..k0)
            .map(|k| quad_form(game.source(k).theta(), tail).sqrt())
            .collect();
        let best = (0..k0)
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .expect("k0 >= 1");
        if (0..k0).any(|k| k != best && (dist[k] - dist[best]).abs() <= DISTANCE_TIE_TOL) {
            return Err(GameError::Assumption(format!(
                "source {} is equidistant from two dominant sources",
                j + 1
            )));
        }
        w[best] += tail.weight();
    }
    Ok(w)
}

fn share_count(w_prime: &[f64], z: f64) -> usize {
    w_prime.iter().map(|&w| floor_tol(w / z)).sum()
}

fn check_weights(w_prime: &[f64], n: usize) -> Result<()> {
    if w_prime.is_empty() {
        return Err(GameError::input("w_prime", "must be non-empty"));
    }
    if w_prime.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(GameError::input("w_prime", "entries must be positive"));
    }
    if n == 0 {
        return Err(GameError::input("N", "need at least one provider"));
    }
    Ok(())
}

/// `sup{z > 0 : Σ_k ⌊w'_k / z⌋ ≥ N}`, attained on the candidates `w'_k / n`.
pub fn z_star(w_prime: &[f64], n: usize) -> Result<f64> {
    check_weights(w_prime, n)?;
    let mut best: Option<f64> = None;
    for &w in w_prime {
        for m in 1..=n {
            let z = w / m as f64;
            if best.is_some_and(|b| z <= b) {
                continue;
            }
            if share_count(w_prime, z) >= n {
                best = Some(z);
            }
        }
    }
    best.ok_or_else(|| GameError::Infeasible(format!("no critical share supports N = {n}")))
}

/// Provider counts `m_k`: floors of `w'_k / z*`, with one provider removed from
/// each of the lowest-index sources whose ratio is integral until they sum to N.
pub fn allocate_counts(w_prime: &[f64], n: usize) -> Result<Vec<usize>> {
    let z = z_star(w_prime, n)?;
    let mut counts: Vec<usize> = w_prime.iter().map(|&w| floor_tol(w / z)).collect();
    let total: usize = counts.iter().sum();
    let excess = total - n;
    if excess > 0 {
        let integral: Vec<usize> = (0..w_prime.len())
            .filter(|&k| is_integral(w_prime[k] / z) && counts[k] > 0)
            .collect();
        if integral.len() < excess {
            return Err(GameError::Infeasible(format!(
                "cannot trim {excess} providers: only {} sources sit exactly on the critical share",
                integral.len()
            )));
        }
        for &k in integral.iter().take(excess) {
            counts[k] -= 1;
        }
    }
    Ok(counts)
}

/// Admissible provider counts for the specialization equilibrium with `k0`
/// dominant sources.
pub fn n_range(game: &GameSpec, k0: usize) -> Result<NRange> {
    check_k0(game, k0)?;
    if !dominance_holds(game, k0) {
        return Err(GameError::Assumption(format!(
            "k0 = {k0}: w_{k0} = {} does not exceed three times the tail weight {}",
            game.source(k0 - 1).weight(),
            tail_weight(game, k0)
        )));
    }
    let w = effective_weights(game, k0)?;
    let anchor = w[k0 - 1];
    let lo = w.iter().map(|&x| floor_tol(3.0 * x / anchor)).sum();
    let hi = if k0 == game.num_sources() {
        None
    } else {
        let tail = tail_weight(game, k0);
        Some(
            w.iter()
                .map(|&x| ceil_tol(x / tail).saturating_sub(1))
                .sum(),
        )
    };
    Ok(NRange { lo, hi })
}

/// Full construction data for `n` providers specializing on the `k0` dominant sources.
pub fn proximity_construction(
    game: &GameSpec,
    n: usize,
    k0: usize,
) -> Result<ProximityConstruction> {
    check_k0(game, k0)?;
    let range = n_range(game, k0)?;
    if n < range.lo {
        return Err(GameError::Infeasible(format!(
            "N = {n} is below the lower bound {} of the admissible provider range",
            range.lo
        )));
    }
    if let Some(hi) = range.hi {
        if n > hi {
            return Err(GameError::Infeasible(format!(
                "N = {n} exceeds the upper bound {hi} of the admissible provider range"
            )));
        }
    }
    let w = effective_weights(game, k0)?;
    let z = z_star(&w, n)?;
    let counts = allocate_counts(&w, n)?;
    Ok(ProximityConstruction {
        k0,
        effective_weights: w,
        z_star: z,
        counts,
        n_range: range,
    })
}

/// Profile with `m_k` providers on each dominant `θ_k`, in ascending source order.
pub fn construct_pne_prox(game: &GameSpec, n: usize, k0: usize) -> Result<StrategyProfile> {
    if !check_distinct_distances(game, DISTANCE_TIE_TOL) {
        return Err(GameError::Assumption(
            "two ground-truth parameters are equidistant from some source".to_string(),
        ));
    }
    if !check_injectivity(game, INJECTIVITY_TRIALS, 0).holds() {
        return Err(GameError::Assumption(
            "the weighted-minimizer map is not injective on the simplex".to_string(),
        ));
    }
    let c = proximity_construction(game, n, k0)?;
    profile_from_counts(game, &c.counts)
}

/// `counts[k]` copies of `θ_k` for each k, with vertex coordinates attached.
pub fn profile_from_counts(game: &GameSpec, counts: &[usize]) -> Result<StrategyProfile> {
    let coords = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &m)| std::iter::repeat_n(MixtureWeights::vertex(game.num_sources(), k), m))
        .collect();
    StrategyProfile::from_coords(game, coords)
}

pub fn verify_pne_prox(
    profile: &StrategyProfile,
    game: &GameSpec,
    grid_step: f64,
    tie_tol: f64,
) -> Result<EquilibriumReport> {
    let grid = DeviationGrid::new(game, grid_step)?;
    verify_on_grid(&grid, profile, game, &ChoiceModel::Proximity { tie_tol })
}

/// True iff every strategy shared by two or more players is a ground-truth parameter.
pub fn check_heterogeneity(profile: &StrategyProfile, game: &GameSpec) -> bool {
    let s = profile.strategies();
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            if (&s[i] - &s[j]).amax() <= DUPLICATE_TOL {
                let on_truth = game
                    .sources()
                    .iter()
                    .any(|src| (&s[i] - src.theta()).amax() <= DUPLICATE_TOL);
                if !on_truth {
                    return false;
                }
            }
        }
    }
    true
}
