//! Mahalanobis losses and the weighted loss minimizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GameError, Result};
use crate::game::{DataSource, GameSpec};
use crate::profile::{LossMatrix, MixtureWeights, StrategyProfile};
use crate::simplex::simplex_grid;

/// Largest condition number accepted for the mixed covariance in a solve.
pub const MAX_CONDITION: f64 = 1e12;

/// `(θ − θ_k)ᵀ Σ_k (θ − θ_k)`.
pub fn mahalanobis_sq(theta: &DVector<f64>, source: &DataSource) -> Result<f64> {
    if theta.len() != source.dimension() {
        return Err(GameError::input(
            "theta",
            format!(
                "length {} does not match source dimension {}",
                theta.len(),
                source.dimension()
            ),
        ));
    }
    Ok(quad_form(theta, source))
}

// Unchecked variant for hot loops where dimensions are already validated.
pub(crate) fn quad_form(theta: &DVector<f64>, source: &DataSource) -> f64 {
    let diff = theta - source.theta();
    let v = diff.dot(&(source.sigma() * &diff));
    v.max(0.0)
}

/// Losses of every source for a single strategy.
pub(crate) fn loss_row(theta: &DVector<f64>, game: &GameSpec) -> Vec<f64> {
    game.sources().iter().map(|s| quad_form(theta, s)).collect()
}

pub fn loss_matrix(profile: &StrategyProfile, game: &GameSpec) -> Result<LossMatrix> {
    if profile.dimension() != game.dimension() {
        return Err(GameError::input(
            "strategies",
            format!(
                "strategy length {} does not match game dimension {}",
                profile.dimension(),
                game.dimension()
            ),
        ));
    }
    let n = profile.num_players();
    let k = game.num_sources();
    let mut m = DMatrix::zeros(n, k);
    for (i, theta) in profile.strategies().iter().enumerate() {
        for (j, s) in game.sources().iter().enumerate() {
            m[(i, j)] = quad_form(theta, s);
        }
    }
    Ok(LossMatrix(m))
}

/// Minimizer of `Σ_k q_k d²(θ, θ_k)`: `(Σ q_k Σ_k)⁻¹ Σ q_k Σ_k θ_k`.
pub fn weighted_minimizer(q: &MixtureWeights, game: &GameSpec) -> Result<DVector<f64>> {
    if q.len() != game.num_sources() {
        return Err(GameError::input(
            "q",
            format!(
                "length {} does not match K = {}",
                q.len(),
                game.num_sources()
            ),
        ));
    }
    if let Some(k) = q.vertex_index() {
        return Ok(game.source(k).theta().clone());
    }
    let d = game.dimension();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (&qk, s) in q.as_slice().iter().zip(game.sources()) {
        if qk == 0.0 {
            continue;
        }
        a += s.sigma() * qk;
        b += s.sigma_theta() * qk;
    }
    if game.mixture_condition_bound() > MAX_CONDITION {
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let cond = eig.max() / eig.min();
        if !(eig.min() > 0.0) || cond > MAX_CONDITION {
            return Err(GameError::Numeric(format!(
                "mixed covariance is ill-conditioned (condition number {cond:e})"
            )));
        }
    }
    let chol = a.cholesky().ok_or_else(|| {
        GameError::Numeric("mixed covariance is not positive definite".to_string())
    })?;
    Ok(chol.solve(&b))
}

/// Stationarity residual `Σ_k q_k Σ_k (θ − θ_k)`.
pub fn stationarity_residual(
    theta: &DVector<f64>,
    q: &MixtureWeights,
    game: &GameSpec,
) -> DVector<f64> {
    let mut r = DVector::zeros(game.dimension());
    for (&qk, s) in q.as_slice().iter().zip(game.sources()) {
        r += s.sigma() * (theta - s.theta()) * qk;
    }
    r
}

/// The monopolist's choice: the weighted minimizer at the market weights.
pub fn monopoly_strategy(game: &GameSpec) -> Result<DVector<f64>> {
    weighted_minimizer(&MixtureWeights::new_unchecked(game.weights()), game)
}

/// Largest loss any weighted minimizer incurs on any source, estimated on a
/// simplex grid. Exact when all covariances coincide.
pub fn ell_max_estimate(game: &GameSpec, grid_step: f64) -> Result<f64> {
    let mut best = 0.0_f64;
    for q in simplex_grid(game.num_sources(), grid_step)? {
        let theta = weighted_minimizer(&q, game)?;
        for s in game.sources() {
            best = best.max(quad_form(&theta, s));
        }
    }
    if game.equal_covariances() {
        // The loss is convex on the hull, so its maximum sits at a vertex.
        for a in game.sources() {
            for s in game.sources() {
                best = best.max(quad_form(a.theta(), s));
            }
        }
    }
    Ok(best)
}
