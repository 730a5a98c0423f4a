//! Grid-certified equilibrium verification shared by both choice models.
//!
//! A profile is checked by letting every player deviate to each weighted
//! minimizer on a regular simplex grid. Losses of grid strategies are computed
//! once per grid, so repeated checks (threshold scans) only pay for the
//! choice-model arithmetic.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::choice::utilities;
use crate::error::{GameError, Result};
use crate::game::GameSpec;
use crate::loss::{loss_matrix, weighted_minimizer};
use crate::profile::{ChoiceModel, MixtureWeights, StrategyProfile};
use crate::simplex::simplex_grid;

/// Deviation gains at or below this count as no improvement.
pub const UTILITY_TOL: f64 = 1e-9;

/// Strategies within this sup-norm distance are treated as identical.
pub const HOMOGENEITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Homogeneous,
    Heterogeneous,
    NotEquilibrium,
}

/// The most profitable deviation found on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub player: usize,
    pub q: MixtureWeights,
    pub utility: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub profile: StrategyProfile,
    pub verified: bool,
    pub classification: Classification,
    pub utilities: Vec<f64>,
    pub grid_step: f64,
    pub grid_points: usize,
    pub best_deviation_gain: f64,
    pub best_deviation: Option<Deviation>,
    pub model: ChoiceModel,
    pub certificate: String,
}

/// Weighted minimizers on a simplex grid together with their loss rows.
#[derive(Debug, Clone)]
pub struct DeviationGrid {
    step: f64,
    num_sources: usize,
    coords: Vec<MixtureWeights>,
    strategies: Vec<DVector<f64>>,
    losses: Vec<f64>,
}

impl DeviationGrid {
    pub fn new(game: &GameSpec, step: f64) -> Result<Self> {
        let coords: Vec<MixtureWeights> = simplex_grid(game.num_sources(), step)?.collect();
        let strategies = coords
            .par_iter()
            .map(|q| weighted_minimizer(q, game))
            .collect::<Result<Vec<_>>>()?;
        let k = game.num_sources();
        let mut losses = Vec::with_capacity(strategies.len() * k);
        for theta in &strategies {
            losses.extend(crate::loss::loss_row(theta, game));
        }
        Ok(DeviationGrid {
            step,
            num_sources: k,
            coords,
            strategies,
            losses,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[MixtureWeights] {
        &self.coords
    }

    pub fn strategy(&self, i: usize) -> &DVector<f64> {
        &self.strategies[i]
    }

    /// Loss row of grid point `i` (one entry per source).
    pub fn loss_row(&self, i: usize) -> &[f64] {
        &self.losses[i * self.num_sources..(i + 1) * self.num_sources]
    }
}

/// Utility of a single deviating player against a fixed set of opponents,
/// evaluated from the deviator's loss row alone.
pub(crate) enum Opponents {
    Proximity {
        sorted: Vec<Vec<f64>>,
        tie_tol: f64,
    },
    Probability {
        shift: Vec<f64>,
        mass: Vec<f64>,
        t: f64,
    },
}

impl Opponents {
    /// Opponents are every row of `columns` except `skip`.
    pub(crate) fn new(columns: &[Vec<f64>], skip: Option<usize>, model: &ChoiceModel) -> Self {
        let others = |col: &Vec<f64>| -> Vec<f64> {
            col.iter()
                .enumerate()
                .filter(|(j, _)| Some(*j) != skip)
                .map(|(_, &l)| l)
                .collect()
        };
        match *model {
            ChoiceModel::Proximity { tie_tol } => Opponents::Proximity {
                sorted: columns
                    .iter()
                    .map(|c| {
                        let mut o = others(c);
                        o.sort_by(f64::total_cmp);
                        o
                    })
                    .collect(),
                tie_tol,
            },
            ChoiceModel::Probability { temperature } => {
                let mut shift = Vec::with_capacity(columns.len());
                let mut mass = Vec::with_capacity(columns.len());
                for c in columns {
                    let o = others(c);
                    let m = o.iter().copied().fold(f64::INFINITY, f64::min);
                    shift.push(m);
                    mass.push(o.iter().map(|&l| (-(l - m) / temperature).exp()).sum());
                }
                Opponents::Probability {
                    shift,
                    mass,
                    t: temperature,
                }
            }
        }
    }

    pub(crate) fn utility(&self, row: &[f64], weights: &[f64]) -> f64 {
        match self {
            Opponents::Proximity { sorted, tie_tol } => {
                let mut u = 0.0;
                for ((col, &l), &w) in sorted.iter().zip(row).zip(weights) {
                    let Some(&best_other) = col.first() else {
                        u += w;
                        continue;
                    };
                    let min = l.min(best_other);
                    if l <= min + tie_tol {
                        let tied = col.partition_point(|&x| x <= min + tie_tol);
                        u += w / (tied + 1) as f64;
                    }
                }
                u
            }
            Opponents::Probability { shift, mass, t } => {
                let mut u = 0.0;
                for (((&m, &s), &l), &w) in shift.iter().zip(mass).zip(row).zip(weights) {
                    if s == 0.0 {
                        u += w;
                        continue;
                    }
                    u += w / (1.0 + s * ((l - m) / t).exp());
                }
                u
            }
        }
    }
}

/// Groups players with bitwise-identical strategies; returns one representative each.
fn distinct_players(profile: &StrategyProfile) -> Vec<usize> {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    for (n, s) in profile.strategies().iter().enumerate() {
        let key: Vec<u64> = s.iter().map(|x| x.to_bits()).collect();
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
            e.insert(n);
            reps.push(n);
        }
    }
    reps
}

/// Best grid deviation of every distinct player; deterministic regardless of
/// evaluation order (ties go to the smaller player, then grid index).
pub(crate) fn best_deviation(
    grid: &DeviationGrid,
    profile: &StrategyProfile,
    game: &GameSpec,
    model: &ChoiceModel,
) -> Result<Option<Deviation>> {
    let losses = loss_matrix(profile, game)?;
    let k = game.num_sources();
    let columns: Vec<Vec<f64>> = (0..k).map(|j| losses.column(j)).collect();
    let weights = game.weights();
    let reps = distinct_players(profile);
    let per_player: Vec<(usize, usize, f64, f64)> = reps
        .par_iter()
        .map(|&n| {
            let opp = Opponents::new(&columns, Some(n), model);
            let own = opp.utility(&losses.row(n), &weights);
            let mut best_i = 0;
            let mut best_u = f64::NEG_INFINITY;
            for i in 0..grid.len() {
                let u = opp.utility(grid.loss_row(i), &weights);
                if u > best_u {
                    best_u = u;
                    best_i = i;
                }
            }
            (n, best_i, best_u, best_u - own)
        })
        .collect();
    let best =
        per_player.into_iter().fold(
            None,
            |acc: Option<(usize, usize, f64, f64)>, cur| match acc {
                Some(a) if a.3 >= cur.3 => Some(a),
                _ => Some(cur),
            },
        );
    Ok(best.map(|(player, i, utility, gain)| Deviation {
        player,
        q: grid.coords()[i].clone(),
        utility,
        gain,
    }))
}

/// Verifies `profile` against every grid deviation under `model`.
pub fn verify_on_grid(
    grid: &DeviationGrid,
    profile: &StrategyProfile,
    game: &GameSpec,
    model: &ChoiceModel,
) -> Result<EquilibriumReport> {
    model.validate()?;
    profile.validate(game)?;
    if grid.num_sources != game.num_sources() {
        return Err(GameError::input(
            "grid",
            "deviation grid was built for a different game",
        ));
    }
    let utilities = utilities(profile, game, model)?;
    let dev = best_deviation(grid, profile, game, model)?;
    let gain = dev.as_ref().map_or(0.0, |d| d.gain);
    let verified = gain <= UTILITY_TOL;
    let classification = if !verified {
        Classification::NotEquilibrium
    } else {
        classify(profile, game, model)
    };
    Ok(EquilibriumReport {
        profile: profile.clone(),
        verified,
        classification,
        utilities,
        grid_step: grid.step(),
        grid_points: grid.len(),
        best_deviation_gain: gain,
        best_deviation: dev,
        model: *model,
        certificate: format!(
            "grid-relative: unilateral deviations to {} weighted minimizers on the simplex grid \
             with step {}; gains above {UTILITY_TOL:e} refute",
            grid.len(),
            grid.step()
        ),
    })
}

fn classify(profile: &StrategyProfile, game: &GameSpec, model: &ChoiceModel) -> Classification {
    if !profile.is_homogeneous(HOMOGENEITY_TOL) {
        return Classification::Heterogeneous;
    }
    match model {
        ChoiceModel::Probability { .. } => Classification::Homogeneous,
        ChoiceModel::Proximity { .. } => {
            // Everyone on one ground truth is specialization, not a shared compromise.
            let s = profile.strategy(0);
            let at_source = game
                .sources()
                .iter()
                .any(|src| (s - src.theta()).amax() <= HOMOGENEITY_TOL);
            if at_source {
                Classification::Heterogeneous
            } else {
                Classification::Homogeneous
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::choose;
    use crate::game::identity_source;

    fn game() -> GameSpec {
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
    fn opponent_utility_matches_full_recompute() {
        let game = game();
        let profile = StrategyProfile::new(vec![
            DVector::from_vec(vec![0.2, 1.0]),
            DVector::from_vec(vec![0.7, 1.0]),
            DVector::from_vec(vec![0.7, 1.0]),
        ])
        .unwrap();
        let grid = DeviationGrid::new(&game, 0.1).unwrap();
        for model in [
            ChoiceModel::proximity(),
            ChoiceModel::probability(0.3).unwrap(),
        ] {
            let losses = loss_matrix(&profile, &game).unwrap();
            let cols: Vec<Vec<f64>> = (0..2).map(|k| losses.column(k)).collect();
            let opp = Opponents::new(&cols, Some(0), &model);
            for i in 0..grid.len() {
                let dev = profile.with_deviation(0, grid.strategy(i).clone());
                let direct = utilities(&dev, &game, &model).unwrap()[0];
                let fast = opp.utility(grid.loss_row(i), &game.weights());
                assert!((direct - fast).abs() < 1e-12, "{model:?} grid {i}");
            }
        }
    }

    #[test]
    fn lone_player_keeps_everything() {
        let game = game();
        let profile = StrategyProfile::new(vec![DVector::from_vec(vec![0.4, 1.0])]).unwrap();
        let grid = DeviationGrid::new(&game, 0.05).unwrap();
        let report = verify_on_grid(&grid, &profile, &game, &ChoiceModel::proximity()).unwrap();
        assert!(report.verified);
        assert_eq!(report.utilities, vec![1.0]);
        assert!(report.best_deviation_gain.abs() < 1e-15);
        let g = choose(&[3.0], &ChoiceModel::proximity()).unwrap();
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn report_serializes() {
        let game = game();
        let profile = StrategyProfile::replicated(DVector::from_vec(vec![0.53, 1.0]), None, 2);
        let grid = DeviationGrid::new(&game, 0.01).unwrap();
        let model = ChoiceModel::probability(2.0).unwrap();
        let report = verify_on_grid(&grid, &profile, &game, &model).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: EquilibriumReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
