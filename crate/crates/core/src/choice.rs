//! Choice models: how each source splits its weight among providers.

use crate::error::{GameError, Result};
use crate::game::GameSpec;
use crate::loss::loss_matrix;
use crate::profile::{check_temperature, ChoiceModel, StrategyProfile};

/// Proximity choice: uniform mass on every loss within `tie_tol` of the minimum.
pub fn choose_prox(losses: &[f64], tie_tol: f64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(GameError::input("losses", "empty loss column"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(GameError::input("losses", "losses must be finite"));
    }
    if !(tie_tol >= 0.0) {
        return Err(GameError::input("tie_tol", "must be non-negative"));
    }
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let winners = losses.iter().filter(|&&l| l <= min + tie_tol).count();
    let share = 1.0 / winners as f64;
    Ok(losses
        .iter()
        .map(|&l| if l <= min + tie_tol { share } else { 0.0 })
        .collect())
}

/// Logit choice: softmax of `−losses / t`.
pub fn choose_prob(losses: &[f64], t: f64) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(GameError::input("losses", "empty loss column"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(GameError::input("losses", "losses must be finite"));
    }
    check_temperature(t)?;
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = losses.iter().map(|&l| (-(l - min) / t).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / total).collect())
}

/// Choice probabilities for a single loss column under `model`.
pub fn choose(losses: &[f64], model: &ChoiceModel) -> Result<Vec<f64>> {
    match *model {
        ChoiceModel::Proximity { tie_tol } => choose_prox(losses, tie_tol),
        ChoiceModel::Probability { temperature } => choose_prob(losses, temperature),
    }
}

/// `u_n = Σ_k w_k g_n(ℓ_{·,k})` for every player.
pub fn utilities(
    profile: &StrategyProfile,
    game: &GameSpec,
    model: &ChoiceModel,
) -> Result<Vec<f64>> {
    model.validate()?;
    let losses = loss_matrix(profile, game)?;
    let mut u = vec![0.0; profile.num_players()];
    for (k, src) in game.sources().iter().enumerate() {
        let g = choose(&losses.column(k), model)?;
        for (un, gn) in u.iter_mut().zip(g) {
            *un += src.weight() * gn;
        }
    }
    Ok(u)
}
