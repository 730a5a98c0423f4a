//! Cross-module invariants on random games.

use hdgame::choice::utilities;
use hdgame::equilibrium::{Classification, HOMOGENEITY_TOL};
use hdgame::experiments::{gen_random_game, sweep_critical_temperatures, write_sweep_csv};
use hdgame::game::identity_source;
use hdgame::loss::{ell_max_estimate, mahalanobis_sq, stationarity_residual, weighted_minimizer};
use hdgame::probability::{
    find_hetero_candidate, homo_candidate, specialization_bound, verify_pne_prob, HeteroOutcome,
    TemperatureGrid, DEFAULT_FIXED_POINT_TOL, DEFAULT_MAX_ITER,
};
use hdgame::proximity::{construct_pne_prox, dominance_holds, n_range, verify_pne_prox};
use hdgame::simplex::simplex_grid;
use hdgame::{ChoiceModel, GameSpec, MixtureWeights, StrategyProfile};
use nalgebra::DVector;
use proptest::prelude::*;

fn simplex_point(k: usize) -> impl Strategy<Value = MixtureWeights> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("degenerate", |raw| {
        let total: f64 = raw.iter().sum();
        if total < 1e-6 {
            return None;
        }
        let mut q: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let drift = 1.0 - q.iter().sum::<f64>();
        q[0] += drift;
        MixtureWeights::new(q).ok()
    })
}

fn game_and_point() -> impl Strategy<Value = (GameSpec, MixtureWeights)> {
    (2usize..5, 1usize..4, 0u64..500).prop_flat_map(|(k, d, seed)| {
        let game = gen_random_game(k, d, seed).unwrap();
        (Just(game), simplex_point(k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimizer_is_stationary((game, q) in game_and_point()) {
        let theta = weighted_minimizer(&q, &game).unwrap();
        prop_assert!(stationarity_residual(&theta, &q, &game).amax() <= 1e-8);
    }

    #[test]
    fn vertices_map_to_ground_truth(k in 2usize..5, d in 1usize..4, seed in 0u64..500) {
        let game = gen_random_game(k, d, seed).unwrap();
        for src in 0..k {
            let theta = weighted_minimizer(&MixtureWeights::vertex(k, src), &game).unwrap();
            prop_assert!((theta - game.source(src).theta()).amax() <= 1e-10);
        }
    }

    #[test]
    fn utilities_sum_to_one(
        seed in 0u64..200,
        n in 1usize..7,
        t in 1e-3f64..5.0,
        offsets in prop::collection::vec(-2.0f64..2.0, 14),
    ) {
        let game = gen_random_game(3, 2, seed).unwrap();
        let strategies = (0..n)
            .map(|i| DVector::from_vec(vec![offsets[2 * i], offsets[2 * i + 1]]))
            .collect();
        let profile = StrategyProfile::new(strategies).unwrap();
        for model in [ChoiceModel::proximity(), ChoiceModel::probability(t).unwrap()] {
            let total: f64 = utilities(&profile, &game, &model).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    /// With Σ = I the reachable set is the convex hull of the θ_k; a point
    /// outside it is beaten on every source by some grid point.
    #[test]
    fn outside_points_are_pareto_dominated(
        thetas in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 3),
        probe in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let sources: Vec<_> = thetas
            .iter()
            .zip([0.5, 0.3, 0.2])
            .map(|(t, w)| identity_source(t, w).unwrap())
            .collect();
        let Ok(game) = GameSpec::new(2, sources, None) else { return Ok(()) };
        let probe = DVector::from_vec(probe);
        let probe_loss: Vec<f64> = game.sources().iter().map(|s| mahalanobis_sq(&probe, s).unwrap()).collect();
        // Probes must sit a margin away from the hull.
        let nearest = simplex_grid(3, 0.01)
            .unwrap()
            .map(|q| (weighted_minimizer(&q, &game).unwrap() - &probe).norm())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(nearest > 0.05);
        let dominated = simplex_grid(3, 0.01).unwrap().any(|q| {
            let x = weighted_minimizer(&q, &game).unwrap();
            game.sources()
                .iter()
                .zip(&probe_loss)
                .all(|(s, &l)| mahalanobis_sq(&x, s).unwrap() < l)
        });
        prop_assert!(dominated);
    }
}

#[test]
fn constructions_verify_on_random_games() {
    let mut built = 0;
    for seed in 0..40 {
        let game = gen_random_game(3, 2, seed).unwrap();
        for k0 in 1..=3 {
            if !dominance_holds(&game, k0) {
                continue;
            }
            let Ok(range) = n_range(&game, k0) else {
                continue;
            };
            let n = range.lo.max(2);
            if !range.contains(n) || n > 40 {
                continue;
            }
            let profile = construct_pne_prox(&game, n, k0).unwrap();
            let report = verify_pne_prox(&profile, &game, 0.01, 1e-9).unwrap();
            assert!(
                report.verified,
                "seed {seed} k0 {k0} N {n}: gain {}",
                report.best_deviation_gain
            );
            built += 1;
        }
    }
    assert!(built >= 10, "only {built} constructions exercised");
}

/// All strategies are grid points; best responses range over the 0.01 grid.
fn exhaustive_grid_pne(game: &GameSpec, n: usize) -> Vec<Vec<usize>> {
    let w = game.weights();
    let rows = |step: f64| -> Vec<Vec<f64>> {
        simplex_grid(2, step)
            .unwrap()
            .map(|q| {
                let x = weighted_minimizer(&q, game).unwrap();
                game.sources()
                    .iter()
                    .map(|s| mahalanobis_sq(&x, s).unwrap())
                    .collect()
            })
            .collect()
    };
    let coarse = rows(0.05);
    let fine = rows(0.01);
    let utility = |own: &[f64], others: &[&[f64]]| -> f64 {
        (0..2)
            .map(|k| {
                let best_other = others.iter().map(|o| o[k]).fold(f64::INFINITY, f64::min);
                if own[k] < best_other - 1e-9 {
                    w[k]
                } else if own[k] <= best_other + 1e-9 {
                    let tied = others
                        .iter()
                        .filter(|o| (o[k] - own[k]).abs() <= 1e-9)
                        .count();
                    w[k] / (tied + 1) as f64
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut found = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let stable = (0..n).all(|p| {
            let others: Vec<&[f64]> = (0..n)
                .filter(|&j| j != p)
                .map(|j| coarse[idx[j]].as_slice())
                .collect();
            let own = utility(&coarse[idx[p]], &others);
            fine.iter().all(|d| utility(d, &others) <= own + 1e-9)
        });
        if stable {
            found.push(idx.clone());
        }
        // Next non-decreasing index tuple.
        let mut pos = n;
        loop {
            if pos == 0 {
                return found;
            }
            pos -= 1;
            if idx[pos] + 1 < coarse.len() {
                idx[pos] += 1;
                for j in pos + 1..n {
                    idx[j] = idx[pos];
                }
                break;
            }
        }
    }
}

#[test]
fn brute_force_agrees_with_predicted_existence() {
    for seed in 0..6 {
        let game = gen_random_game(2, 2, seed).unwrap();
        let last = 20; // index of the vertex θ_1 on the 0.05 grid
        for n in 2..=4 {
            let found = exhaustive_grid_pne(&game, n);
            let predicted = if n == 2 {
                game.weights()[0] >= 0.5
            } else {
                (1..=2).any(|k0| {
                    dominance_holds(&game, k0)
                        && n_range(&game, k0).map(|r| r.contains(n)).unwrap_or(false)
                })
            };
            if predicted {
                assert!(
                    !found.is_empty(),
                    "seed {seed} N {n}: predicted equilibrium not found"
                );
            }
            if n == 2 {
                assert_eq!(
                    found,
                    vec![vec![last, last]],
                    "seed {seed}: duopoly equilibria {found:?}"
                );
            }
            // Every grid equilibrium sits on ground truths only.
            for profile in &found {
                assert!(
                    profile.iter().all(|&i| i == 0 || i == last),
                    "seed {seed} N {n}: {profile:?}"
                );
            }
        }
    }
}

#[test]
fn equilibria_exist_outside_the_sufficient_range() {
    // Two providers on each source is stable once w_1 ≤ 1.5 w_2, while the
    // all-sources range starts at floor(3 w_1/w_2) + 3 ≥ 6 > 4 and source 1
    // alone is not dominant.
    let game = GameSpec::new(
        2,
        vec![
            identity_source(&[1.0, 0.0], 0.55).unwrap(),
            identity_source(&[0.0, 1.0], 0.45).unwrap(),
        ],
        None,
    )
    .unwrap();
    assert!(!n_range(&game, 2).unwrap().contains(4));
    assert!(!dominance_holds(&game, 1));
    let found = exhaustive_grid_pne(&game, 4);
    assert_eq!(found, vec![vec![0, 0, 20, 20]]);
}

#[test]
fn homogeneous_verification_is_upward_closed_in_t() {
    for seed in 0..4 {
        let game = gen_random_game(2, 2, seed).unwrap();
        let ell = ell_max_estimate(&game, 0.002).unwrap();
        let grid = TemperatureGrid::new(0.02, 2.0 * ell, 0.002).unwrap();
        for n in [3, 12] {
            let homo = homo_candidate(&game, n).unwrap();
            let verified: Vec<bool> = (1..=grid.points)
                .map(|i| {
                    verify_pne_prob(&homo, &game, grid.t(i), 0.002)
                        .unwrap()
                        .verified
                })
                .collect();
            let first = verified
                .iter()
                .position(|&v| v)
                .expect("verifies at 2ℓ_max");
            assert!(
                verified[first..].iter().all(|&v| v),
                "seed {seed} N {n}: {verified:?}"
            );
        }
    }
}

#[test]
fn logit_verification_matches_proximity_at_tiny_temperature() {
    for seed in 0..5 {
        let game = gen_random_game(2, 2, seed).unwrap();
        let n = specialization_bound(&game);
        let profile = construct_pne_prox(&game, n, 2).unwrap();
        let prox = verify_pne_prox(&profile, &game, 0.002, 1e-9).unwrap();
        let prob = verify_pne_prob(&profile, &game, 1e-6, 0.002).unwrap();
        assert_eq!(prox.verified, prob.verified, "seed {seed}");
    }
}

#[test]
fn hot_market_has_no_distinct_heterogeneous_equilibrium() {
    for seed in 0..5 {
        let game = gen_random_game(2, 2, seed).unwrap();
        let t = 2.0 * ell_max_estimate(&game, 0.002).unwrap();
        match find_hetero_candidate(&game, 30, t, DEFAULT_MAX_ITER, DEFAULT_FIXED_POINT_TOL)
            .unwrap()
        {
            HeteroOutcome::NotConverged { .. } => {}
            HeteroOutcome::Converged { profile, .. } => {
                let report = verify_pne_prob(&profile, &game, t, 0.002).unwrap();
                assert!(
                    !report.verified
                        || report.classification == Classification::Homogeneous
                        || profile.is_homogeneous(HOMOGENEITY_TOL),
                    "seed {seed}: distinct heterogeneous equilibrium at t = 2ℓ_max"
                );
            }
        }
    }
}

#[test]
fn sweep_output_is_deterministic() {
    let games: Vec<GameSpec> = (0..2).map(|s| gen_random_game(2, 2, s).unwrap()).collect();
    let render = || {
        let rows = sweep_critical_temperatures(&games, &[2, 5, 9], 0.05);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 7);
    for line in text.lines().skip(1) {
        let frac: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(frac > 0.0 && frac <= 1.0, "{line}");
    }
}
