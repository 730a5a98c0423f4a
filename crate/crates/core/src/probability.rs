//! Equilibria under the logit (probability) choice model.
//!
//! The heterogeneous search iterates the map `M` on simplex coordinates,
//! starting from the proximity specialization equilibrium. Fixed points of
//! `M` are exactly the profiles where every provider's utility gradient
//! vanishes, so converged candidates are then checked on a deviation grid.

use log::{debug, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{verify_on_grid, Classification, DeviationGrid, EquilibriumReport};
use crate::error::{GameError, Result};
use crate::game::GameSpec;
use crate::loss::{ell_max_estimate, loss_matrix, loss_row, monopoly_strategy, weighted_minimizer};
use crate::profile::{check_temperature, ChoiceModel, MixtureWeights, StrategyProfile};
use crate::proximity::{allocate_counts, dominance_holds, n_range, proximity_construction};
use crate::simplex::{default_grid_step, subdivisions};

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointState {
    pub coords: Vec<MixtureWeights>,
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HeteroOutcome {
    Converged {
        profile: StrategyProfile,
        state: FixedPointState,
        /// Source each provider was seeded on (0-based).
        assignment: Vec<usize>,
    },
    NotConverged {
        state: FixedPointState,
        assignment: Vec<usize>,
    },
}

impl HeteroOutcome {
    pub fn state(&self) -> &FixedPointState {
        match self {
            HeteroOutcome::Converged { state, .. } | HeteroOutcome::NotConverged { state, .. } => {
                state
            }
        }
    }

    pub fn assignment(&self) -> &[usize] {
        match self {
            HeteroOutcome::Converged { assignment, .. }
            | HeteroOutcome::NotConverged { assignment, .. } => assignment,
        }
    }

    pub fn profile(&self) -> Option<&StrategyProfile> {
        match self {
            HeteroOutcome::Converged { profile, .. } => Some(profile),
            HeteroOutcome::NotConverged { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifiedBy {
    GridScan,
    Bisection,
}

/// The scanned temperatures: `{resolution, 2·resolution, …, 1} × scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub resolution: f64,
    pub scale: f64,
    pub points: usize,
    pub verification_step: f64,
}

impl TemperatureGrid {
    pub fn new(resolution: f64, scale: f64, verification_step: f64) -> Result<Self> {
        let points = subdivisions(resolution).map_err(|_| {
            GameError::input("resolution", format!("1/{resolution} is not an integer"))
        })?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GameError::Numeric(format!(
                "temperature scale {scale} is not positive"
            )));
        }
        Ok(TemperatureGrid {
            resolution,
            scale,
            points,
            verification_step,
        })
    }

    /// Temperature at index `i` in `1..=points`.
    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.points as f64 * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold_t: f64,
    pub grid: TemperatureGrid,
    pub certified_by: CertifiedBy,
    /// ℓ_max; the temperature scale is twice this value.
    pub ell_max_ref: f64,
}

impl ThresholdResult {
    /// Threshold as a fraction of `2ℓ_max`.
    pub fn fraction(&self) -> f64 {
        self.threshold_t / (2.0 * self.ell_max_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HeteroThreshold {
    Found(ThresholdResult),
    NoneFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DuopolyProbOutcome {
    Exists { profile: StrategyProfile },
    NoneAtThisT,
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One application of `M` to groups of identical providers: row `g` stands for
/// `mult[g]` providers sharing coordinates `rows[g]`. Computed in log space so
/// that `p(1 − p)` never underflows unless it is exactly zero.
fn map_grouped(
    rows: &[Vec<f64>],
    mult: &[usize],
    game: &GameSpec,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let k = game.num_sources();
    let losses: Vec<Vec<f64>> = rows
        .iter()
        .map(|q| {
            let theta = weighted_minimizer(&MixtureWeights::new_unchecked(q.clone()), game)?;
            Ok(loss_row(&theta, game))
        })
        .collect::<Result<_>>()?;
    let ln_mult: Vec<f64> = mult.iter().map(|&m| (m as f64).ln()).collect();
    let ln_w: Vec<f64> = game.weights().iter().map(|w| w.ln()).collect();
    let g_count = rows.len();
    let mut out = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let mut log_terms = Vec::with_capacity(k);
        for src in 0..k {
            let a = |h: usize| -losses[h][src] / t;
            let all = log_sum_exp((0..g_count).map(|h| ln_mult[h] + a(h)));
            let others = log_sum_exp((0..g_count).filter_map(|h| {
                let m = if h == g { mult[h] - 1 } else { mult[h] };
                (m > 0).then(|| (m as f64).ln() + a(h))
            }));
            let log_p = a(g) - all;
            let log_not_p = others - all;
            log_terms.push(ln_w[src] + log_p + log_not_p);
        }
        let norm = log_sum_exp(log_terms.iter().copied());
        if norm == f64::NEG_INFINITY || !norm.is_finite() {
            return Err(GameError::Numeric(format!(
                "row {g}: every w_k p(1-p) vanishes; no competitor shares any source"
            )));
        }
        out.push(log_terms.iter().map(|x| (x - norm).exp()).collect());
    }
    Ok(out)
}

/// The map `M` on `Δ_K^N`.
pub fn map_m(coords: &[MixtureWeights], game: &GameSpec, t: f64) -> Result<Vec<MixtureWeights>> {
    check_temperature(t)?;
    if coords.is_empty() {
        return Err(GameError::input("coords", "need at least one provider"));
    }
    if let Some(n) = coords.iter().position(|q| q.len() != game.num_sources()) {
        return Err(GameError::input(
            format!("coords[{n}]"),
            format!(
                "length {} does not match K = {}",
                coords[n].len(),
                game.num_sources()
            ),
        ));
    }
    let rows: Vec<Vec<f64>> = coords.iter().map(|q| q.as_slice().to_vec()).collect();
    let mult = vec![1; rows.len()];
    Ok(map_grouped(&rows, &mult, game, t)?
        .into_iter()
        .map(MixtureWeights::new_unchecked)
        .collect())
}

/// N copies of the monopoly strategy, coordinates equal to the market weights.
pub fn homo_candidate(game: &GameSpec, n: usize) -> Result<StrategyProfile> {
    if n == 0 {
        return Err(GameError::input("N", "need at least one provider"));
    }
    Ok(StrategyProfile::replicated(
        monopoly_strategy(game)?,
        Some(MixtureWeights::new_unchecked(game.weights())),
        n,
    ))
}

/// Lower bound on N from which the specialization equilibrium exists for every source.
pub fn specialization_bound(game: &GameSpec) -> usize {
    let w = game.weights();
    let last = w[w.len() - 1];
    w.iter()
        .map(|&x| (3.0 * x / last + 1e-9).floor() as usize)
        .sum()
}

/// Providers per source in the proximity equilibrium used to seed the search.
/// Prefers all K sources, then the largest admissible `k0`; below every
/// admissible range it falls back to the critical-share allocation over all
/// sources (some counts may be zero).
pub fn proximity_seed(game: &GameSpec, n: usize) -> Result<Vec<usize>> {
    let k = game.num_sources();
    for k0 in (1..=k).rev() {
        if !dominance_holds(game, k0) {
            continue;
        }
        let Ok(range) = n_range(game, k0) else {
            continue;
        };
        if !range.contains(n) {
            continue;
        }
        if let Ok(c) = proximity_construction(game, n, k0) {
            let mut counts = c.counts;
            counts.resize(k, 0);
            return Ok(counts);
        }
    }
    warn!(
        "N = {n} is below the provider count that guarantees a specialization equilibrium ({}); \
         seeding from the critical-share allocation",
        specialization_bound(game)
    );
    allocate_counts(&game.weights(), n)
}

/// Fixed-point search for a heterogeneous candidate (seeded one-hot at each
/// provider's proximity source).
pub fn find_hetero_candidate(
    game: &GameSpec,
    n: usize,
    t: f64,
    max_iter: usize,
    tol: f64,
) -> Result<HeteroOutcome> {
    check_temperature(t)?;
    if !(tol >= 0.0) {
        return Err(GameError::input("tol", "must be non-negative"));
    }
    let counts = proximity_seed(game, n)?;
    iterate_from_counts(game, &counts, t, max_iter, tol)
}

fn iterate_from_counts(
    game: &GameSpec,
    counts: &[usize],
    t: f64,
    max_iter: usize,
    tol: f64,
) -> Result<HeteroOutcome> {
    let k = game.num_sources();
    let groups: Vec<usize> = (0..k).filter(|&src| counts[src] > 0).collect();
    let mult: Vec<usize> = groups.iter().map(|&src| counts[src]).collect();
    let mut rows: Vec<Vec<f64>> = groups
        .iter()
        .map(|&src| MixtureWeights::vertex(k, src).as_slice().to_vec())
        .collect();
    let assignment: Vec<usize> = groups
        .iter()
        .flat_map(|&src| std::iter::repeat_n(src, counts[src]))
        .collect();

    let mut residual = f64::INFINITY;
    let mut iteration = 0;
    while iteration < max_iter {
        let next = map_grouped(&rows, &mult, game, t)?;
        residual = rows
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        rows = next;
        iteration += 1;
        if residual <= tol {
            break;
        }
    }
    let coords: Vec<MixtureWeights> = rows
        .iter()
        .zip(&mult)
        .flat_map(|(q, &m)| std::iter::repeat_n(MixtureWeights::new_unchecked(q.clone()), m))
        .collect();
    let state = FixedPointState {
        coords: coords.clone(),
        iteration,
        residual,
    };
    if residual <= tol {
        let profile = StrategyProfile::from_coords(game, coords)?;
        Ok(HeteroOutcome::Converged {
            profile,
            state,
            assignment,
        })
    } else {
        Ok(HeteroOutcome::NotConverged { state, assignment })
    }
}

/// Gradient of player `player`'s utility in its own strategy.
pub fn utility_gradient(
    player: usize,
    profile: &StrategyProfile,
    game: &GameSpec,
    t: f64,
) -> Result<DVector<f64>> {
    check_temperature(t)?;
    if player >= profile.num_players() {
        return Err(GameError::input(
            "player",
            format!(
                "index {player} out of range for {} players",
                profile.num_players()
            ),
        ));
    }
    let losses = loss_matrix(profile, game)?;
    let theta = profile.strategy(player);
    let mut grad = DVector::zeros(game.dimension());
    for (k, src) in game.sources().iter().enumerate() {
        let col = losses.column(k);
        let own = col[player];
        let m = col.iter().copied().fold(f64::INFINITY, f64::min);
        let e_own = (-(own - m) / t).exp();
        let rest: f64 = col
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != player)
            .map(|(_, &l)| (-(l - m) / t).exp())
            .sum();
        let total = e_own + rest;
        let p = e_own / total;
        let not_p = rest / total;
        grad += src.sigma() * (theta - src.theta()) * (src.weight() * p * not_p);
    }
    Ok(grad * (-2.0 / t))
}

pub fn verify_pne_prob(
    profile: &StrategyProfile,
    game: &GameSpec,
    t: f64,
    grid_step: f64,
) -> Result<EquilibriumReport> {
    let grid = DeviationGrid::new(game, grid_step)?;
    verify_on_grid(&grid, profile, game, &ChoiceModel::probability(t)?)
}

fn temperature_grid(
    game: &GameSpec,
    resolution: f64,
    grid_step: f64,
) -> Result<(TemperatureGrid, f64)> {
    let ell_max = ell_max_estimate(game, default_grid_step(game.num_sources()))?;
    Ok((
        TemperatureGrid::new(resolution, 2.0 * ell_max, grid_step)?,
        ell_max,
    ))
}

/// Smallest scanned temperature at which the homogeneous profile verifies.
/// Bisects the grid, relying on verification being monotone in t.
pub fn threshold_homo_t(
    game: &GameSpec,
    n: usize,
    resolution: f64,
    grid_step: f64,
) -> Result<ThresholdResult> {
    let (tgrid, ell_max) = temperature_grid(game, resolution, grid_step)?;
    let dev_grid = DeviationGrid::new(game, grid_step)?;
    threshold_homo_on(game, n, &tgrid, ell_max, &dev_grid)
}

pub(crate) fn threshold_homo_on(
    game: &GameSpec,
    n: usize,
    tgrid: &TemperatureGrid,
    ell_max: f64,
    dev_grid: &DeviationGrid,
) -> Result<ThresholdResult> {
    let profile = homo_candidate(game, n)?;
    let verified = |i: usize| -> Result<bool> {
        let model = ChoiceModel::probability(tgrid.t(i))?;
        Ok(verify_on_grid(dev_grid, &profile, game, &model)?.verified)
    };
    if !verified(tgrid.points)? {
        return Err(GameError::Contradiction(format!(
            "homogeneous profile fails verification at t = 2·ell_max = {}; \
             the verification grid (step {}) is likely too coarse",
            tgrid.t(tgrid.points),
            dev_grid.step()
        )));
    }
    // Invariant: index `hi` verifies, index `lo` fails (index 0 is a virtual failure).
    let (mut lo, mut hi) = (0usize, tgrid.points);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if verified(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdResult {
        threshold_t: tgrid.t(hi),
        grid: *tgrid,
        certified_by: CertifiedBy::Bisection,
        ell_max_ref: ell_max,
    })
}

/// Largest scanned temperature at which the fixed-point search yields a
/// verified heterogeneous equilibrium; a lower bound on the true supremum.
pub fn max_hetero_t(
    game: &GameSpec,
    n: usize,
    resolution: f64,
    grid_step: f64,
) -> Result<HeteroThreshold> {
    let (tgrid, ell_max) = temperature_grid(game, resolution, grid_step)?;
    let dev_grid = DeviationGrid::new(game, grid_step)?;
    max_hetero_on(game, n, &tgrid, ell_max, &dev_grid)
}

pub(crate) fn max_hetero_on(
    game: &GameSpec,
    n: usize,
    tgrid: &TemperatureGrid,
    ell_max: f64,
    dev_grid: &DeviationGrid,
) -> Result<HeteroThreshold> {
    // The seed does not depend on t.
    let counts = match proximity_seed(game, n) {
        Ok(c) => c,
        Err(e) => {
            debug!("no seed for N = {n}: {e}");
            return Ok(HeteroThreshold::NoneFound);
        }
    };
    let hit = |i: usize| -> bool {
        let t = tgrid.t(i);
        let outcome = match iterate_from_counts(
            game,
            &counts,
            t,
            DEFAULT_MAX_ITER,
            DEFAULT_FIXED_POINT_TOL,
        ) {
            Ok(o) => o,
            Err(e) => {
                debug!("t = {t}: search failed: {e}");
                return false;
            }
        };
        let Some(profile) = outcome.profile() else {
            return false;
        };
        let Ok(model) = ChoiceModel::probability(t) else {
            return false;
        };
        match verify_on_grid(dev_grid, profile, game, &model) {
            Ok(r) => r.verified && r.classification == Classification::Heterogeneous,
            Err(e) => {
                debug!("t = {t}: verification failed: {e}");
                false
            }
        }
    };
    // Downward scan in parallel chunks; the first hit in scan order wins.
    let chunk = rayon::current_num_threads().max(1);
    let order: Vec<usize> = (1..=tgrid.points).rev().collect();
    for block in order.chunks(chunk) {
        let hits: Vec<bool> = block.par_iter().map(|&i| hit(i)).collect();
        if let Some(pos) = hits.iter().position(|&h| h) {
            return Ok(HeteroThreshold::Found(ThresholdResult {
                threshold_t: tgrid.t(block[pos]),
                grid: *tgrid,
                certified_by: CertifiedBy::GridScan,
                ell_max_ref: ell_max,
            }));
        }
    }
    Ok(HeteroThreshold::NoneFound)
}

/// Two providers: the only candidate is both at the monopoly strategy.
pub fn duopoly_prob_pne(game: &GameSpec, t: f64, grid_step: f64) -> Result<DuopolyProbOutcome> {
    let profile = homo_candidate(game, 2)?;
    let report = verify_pne_prob(&profile, game, t, grid_step)?;
    Ok(if report.verified {
        DuopolyProbOutcome::Exists { profile }
    } else {
        DuopolyProbOutcome::NoneAtThisT
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::utilities;
    use crate::game::identity_source;

    fn two_sources() -> GameSpec {
        GameSpec::new(
            2,
            vec![
                identity_source(&[1.0, 1.0], 0.53).unwrap(),
                identity_source(&[0.0, 1.0], 0.47).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn market_weights_are_fixed() {
        let game = two_sources();
        let w = MixtureWeights::new(game.weights()).unwrap();
        for n in [2, 3, 8] {
            for t in [0.01, 0.4, 5.0] {
                let out = map_m(&vec![w.clone(); n], &game, t).unwrap();
                for q in out {
                    for (a, b) in q.as_slice().iter().zip(w.as_slice()) {
                        assert!((a - b).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn lone_provider_has_no_update() {
        let game = two_sources();
        let w = MixtureWeights::new(game.weights()).unwrap();
        assert!(matches!(
            map_m(&[w], &game, 0.4),
            Err(GameError::Numeric(_))
        ));
    }

    #[test]
    fn rows_stay_on_simplex_near_vertices() {
        let game = two_sources();
        let coords = vec![
            MixtureWeights::new(vec![0.999, 0.001]).unwrap(),
            MixtureWeights::new(vec![1.0, 0.0]).unwrap(),
            MixtureWeights::new(vec![0.0, 1.0]).unwrap(),
            MixtureWeights::new(vec![0.002, 0.998]).unwrap(),
        ];
        for q in map_m(&coords, &game, 0.4).unwrap() {
            assert!(q.as_slice().iter().all(|&x| x >= 0.0));
            assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn grouped_map_matches_full_map() {
        let game = two_sources();
        let a = MixtureWeights::new(vec![0.8, 0.2]).unwrap();
        let b = MixtureWeights::new(vec![0.3, 0.7]).unwrap();
        let full = map_m(
            &[a.clone(), a.clone(), a.clone(), b.clone(), b.clone()],
            &game,
            0.3,
        )
        .unwrap();
        let grouped = map_grouped(
            &[a.as_slice().to_vec(), b.as_slice().to_vec()],
            &[3, 2],
            &game,
            0.3,
        )
        .unwrap();
        for (x, y) in full[0].as_slice().iter().zip(&grouped[0]) {
            assert!((x - y).abs() < 1e-14);
        }
        for (x, y) in full[4].as_slice().iter().zip(&grouped[1]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn homo_candidate_examples() {
        let game = two_sources();
        let p = homo_candidate(&game, 8).unwrap();
        assert_eq!(p.num_players(), 8);
        assert!(p.is_homogeneous(0.0));
        assert!((p.strategy(0) - DVector::from_vec(vec![0.53, 1.0])).amax() < 1e-12);
        let mono = homo_candidate(&game, 1).unwrap();
        assert_eq!(mono.strategy(0), &monopoly_strategy(&game).unwrap());
    }

    #[test]
    fn two_source_fixed_point() {
        let game = two_sources();
        let out = find_hetero_candidate(&game, 8, 0.4, DEFAULT_MAX_ITER, DEFAULT_FIXED_POINT_TOL)
            .unwrap();
        let profile = out.profile().expect("converges");
        for n in 0..4 {
            assert!((profile.strategy(n)[0] - 0.76).abs() <= 0.01);
        }
        for n in 4..8 {
            assert!((profile.strategy(n)[0] - 0.30).abs() <= 0.01);
        }
        assert_eq!(out.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]);
        for n in 0..8 {
            let g = utility_gradient(n, profile, &game, 0.4).unwrap();
            assert!(g.amax() <= 1e-9, "player {n}: {g}");
        }
    }

    #[test]
    fn gradient_vanishes_at_homogeneous_profile() {
        let game = two_sources();
        let p = homo_candidate(&game, 5).unwrap();
        for t in [0.05, 0.4, 3.0] {
            assert!(utility_gradient(0, &p, &game, t).unwrap().amax() <= 1e-9);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let game = two_sources();
        let p = StrategyProfile::new(vec![
            DVector::from_vec(vec![0.4, 1.1]),
            DVector::from_vec(vec![0.7, 0.9]),
            DVector::from_vec(vec![0.2, 1.0]),
        ])
        .unwrap();
        let t = 0.3;
        let model = ChoiceModel::probability(t).unwrap();
        let g = utility_gradient(0, &p, &game, t).unwrap();
        let h = 1e-5;
        for d in 0..2 {
            let mut plus = p.strategy(0).clone();
            plus[d] += h;
            let mut minus = p.strategy(0).clone();
            minus[d] -= h;
            let up = utilities(&p.with_deviation(0, plus), &game, &model).unwrap()[0];
            let down = utilities(&p.with_deviation(0, minus), &game, &model).unwrap()[0];
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - g[d]).abs() <= 1e-5 * g.amax().max(1e-3),
                "d={d} fd={fd} an={}",
                g[d]
            );
        }
    }

    #[test]
    fn verification_at_and_below_threshold() {
        let game = two_sources();
        let homo = homo_candidate(&game, 8).unwrap();
        assert!(verify_pne_prob(&homo, &game, 0.4, 0.002).unwrap().verified);
        let low = verify_pne_prob(&homo, &game, 0.01, 0.002).unwrap();
        assert!(!low.verified);
        assert_eq!(low.classification, Classification::NotEquilibrium);
    }

    #[test]
    fn duopoly_probability_cases() {
        let game = two_sources();
        let ell = ell_max_estimate(&game, 0.002).unwrap();
        match duopoly_prob_pne(&game, 2.0 * ell, 0.002).unwrap() {
            DuopolyProbOutcome::Exists { profile } => {
                let m = monopoly_strategy(&game).unwrap();
                assert!(profile.strategies().iter().all(|s| s == &m));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            duopoly_prob_pne(&game, 0.005, 0.002).unwrap(),
            DuopolyProbOutcome::NoneAtThisT
        );
    }

    #[test]
    fn tiny_temperature_lands_on_ground_truths() {
        let game = two_sources();
        let t = 1e-4;
        let out =
            find_hetero_candidate(&game, 8, t, DEFAULT_MAX_ITER, DEFAULT_FIXED_POINT_TOL).unwrap();
        let profile = out.profile().expect("converges");
        for (n, &k) in out.assignment().iter().enumerate() {
            assert!((profile.strategy(n) - game.source(k).theta()).norm() <= t * t);
        }
    }

    #[test]
    fn hot_iteration_merges_rows() {
        let game = two_sources();
        let t = 10.0 * 2.0 * ell_max_estimate(&game, 0.002).unwrap();
        let out =
            find_hetero_candidate(&game, 8, t, DEFAULT_MAX_ITER, DEFAULT_FIXED_POINT_TOL).unwrap();
        for q in &out.state().coords {
            assert!((q.as_slice()[0] - 0.53).abs() <= 1e-6, "{q:?}");
        }
    }

    #[test]
    fn two_source_thresholds() {
        let game = two_sources();
        let homo = threshold_homo_t(&game, 8, 0.01, 0.002).unwrap();
        assert!(homo.threshold_t <= 0.4 && homo.threshold_t > 0.0);
        assert_eq!(homo.certified_by, CertifiedBy::Bisection);
        match max_hetero_t(&game, 8, 0.01, 0.002).unwrap() {
            HeteroThreshold::Found(r) => {
                assert!(r.threshold_t >= 0.4 - 1e-12, "{r:?}");
                assert_eq!(r.certified_by, CertifiedBy::GridScan);
            }
            HeteroThreshold::NoneFound => panic!("expected a heterogeneous equilibrium"),
        }
        assert_eq!(
            max_hetero_t(&game, 30, 1.0, 0.002).unwrap(),
            HeteroThreshold::NoneFound
        );
    }

    #[test]
    fn temperature_grid_rejects_bad_resolution() {
        assert!(TemperatureGrid::new(0.3, 1.0, 0.01).is_err());
        let g = TemperatureGrid::new(0.25, 2.0, 0.01).unwrap();
        assert_eq!(g.points, 4);
        assert_eq!(g.t(4), 2.0);
    }
}
