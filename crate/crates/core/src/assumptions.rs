//! Checks of the regularity assumptions the equilibrium constructions rely on.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::GameSpec;
use crate::loss::{quad_form, weighted_minimizer};
use crate::profile::MixtureWeights;

const COLLISION_TOL: f64 = 1e-8;

/// Outcome of the injectivity check of the weighted-minimizer map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injectivity {
    /// Decided exactly (equal covariances: affine independence).
    Exact(bool),
    /// Sampling result; `true` only means no collision was found.
    Heuristic(bool),
}

impl Injectivity {
    pub fn holds(&self) -> bool {
        match *self {
            Injectivity::Exact(b) | Injectivity::Heuristic(b) => b,
        }
    }
}

/// True iff no source sees two ground-truth parameters at the same distance
/// (beyond `tol`).
pub fn check_distinct_distances(game: &GameSpec, tol: f64) -> bool {
    let k = game.num_sources();
    let dist: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|src| quad_form(game.source(i).theta(), game.source(src)).sqrt())
                .collect()
        })
        .collect();
    for i in 0..k {
        for j in (i + 1)..k {
            if dist[i]
                .iter()
                .zip(&dist[j])
                .any(|(a, b)| (a - b).abs() <= tol)
            {
                return false;
            }
        }
    }
    true
}

/// Whether each strategy is the weighted minimizer of at most one mixture.
pub fn check_injectivity(game: &GameSpec, trials: usize, rng_seed: u64) -> Injectivity {
    let k = game.num_sources();
    if game.equal_covariances() {
        return Injectivity::Exact(affinely_independent(game));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..trials.max(1) {
        let q = random_simplex_point(&mut rng, k);
        let r = random_simplex_point(&mut rng, k);
        if q == r {
            continue;
        }
        let (Ok(a), Ok(b)) = (weighted_minimizer(&q, game), weighted_minimizer(&r, game)) else {
            return Injectivity::Heuristic(false);
        };
        if (a - b).amax() <= COLLISION_TOL {
            return Injectivity::Heuristic(false);
        }
    }
    Injectivity::Heuristic(true)
}

fn affinely_independent(game: &GameSpec) -> bool {
    let k = game.num_sources();
    let d = game.dimension();
    if k - 1 > d {
        return false;
    }
    let base = game.source(0).theta();
    let diffs = DMatrix::from_fn(d, k - 1, |i, j| game.source(j + 1).theta()[i] - base[i]);
    let sv = diffs.singular_values();
    let top = sv.max();
    let cutoff = top * 1e-10 * d.max(k) as f64;
    sv.iter().filter(|&&s| s > cutoff).count() == k - 1
}

/// Uniform draw from the simplex (normalized exponentials).
pub(crate) fn random_simplex_point<R: Rng>(rng: &mut R, k: usize) -> MixtureWeights {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    let mut q: Vec<f64> = e.iter().map(|x| x / total).collect();
    // Push any rounding residue into the largest entry.
    let drift = 1.0 - q.iter().sum::<f64>();
    let imax = (0..k).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
    q[imax] += drift;
    MixtureWeights::new_unchecked(q)
}
