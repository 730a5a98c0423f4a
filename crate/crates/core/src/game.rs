//! Game definition: data sources and their JSON representation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-9;
const THETA_SEPARATION: f64 = 1e-9;

/// One data source: its ground-truth parameter, covariance and market share.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    theta: DVector<f64>,
    sigma: DMatrix<f64>,
    weight: f64,
    // Σθ, reused by every weighted solve.
    sigma_theta: DVector<f64>,
    eig_min: f64,
    eig_max: f64,
}

impl DataSource {
    pub fn new(theta: DVector<f64>, sigma: DMatrix<f64>, weight: f64) -> Result<Self> {
        Self::validated(theta, sigma, weight, "source")
    }

    fn validated(
        theta: DVector<f64>,
        sigma: DMatrix<f64>,
        weight: f64,
        field: &str,
    ) -> Result<Self> {
        let d = theta.len();
        if d == 0 {
            return Err(GameError::input(
                format!("{field}.theta"),
                "must be non-empty",
            ));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(GameError::input(
                format!("{field}.theta"),
                "entries must be finite",
            ));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(GameError::input(
                format!("{field}.sigma"),
                format!(
                    "expected {d}x{d} matrix, got {}x{}",
                    sigma.nrows(),
                    sigma.ncols()
                ),
            ));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(GameError::input(
                format!("{field}.sigma"),
                "entries must be finite",
            ));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(GameError::input(
                        format!("{field}.sigma"),
                        format!("not symmetric at ({i},{j})"),
                    ));
                }
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
        let eig_min = eig.min();
        let eig_max = eig.max();
        if eig_min <= 0.0 {
            return Err(GameError::input(
                format!("{field}.sigma"),
                format!("not positive definite (smallest eigenvalue {eig_min:e})"),
            ));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(GameError::input(
                format!("{field}.weight"),
                format!("must lie in (0, 1], got {weight}"),
            ));
        }
        let sigma_theta = &sigma * &theta;
        Ok(DataSource {
            theta,
            sigma,
            weight,
            sigma_theta,
            eig_min,
            eig_max,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub(crate) fn sigma_theta(&self) -> &DVector<f64> {
        &self.sigma_theta
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    /// Smallest and largest eigenvalue of the covariance.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        (self.eig_min, self.eig_max)
    }
}

/// The K data sources of a game, with weights in strictly decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    dimension: usize,
    sources: Vec<DataSource>,
    seed: Option<u64>,
}

impl GameSpec {
    pub fn new(dimension: usize, sources: Vec<DataSource>, seed: Option<u64>) -> Result<Self> {
        if dimension == 0 {
            return Err(GameError::input("dimension", "must be positive"));
        }
        if sources.len() < 2 {
            return Err(GameError::input(
                "sources",
                format!("need at least 2 sources, got {}", sources.len()),
            ));
        }
        for (k, s) in sources.iter().enumerate() {
            if s.dimension() != dimension {
                return Err(GameError::input(
                    format!("sources[{k}].theta"),
                    format!(
                        "length {} does not match dimension {dimension}",
                        s.dimension()
                    ),
                ));
            }
        }
        for k in 1..sources.len() {
            if !(sources[k - 1].weight > sources[k].weight) {
                return Err(GameError::input(
                    format!("sources[{k}].weight"),
                    format!(
                        "weights must be strictly decreasing ({} then {})",
                        sources[k - 1].weight,
                        sources[k].weight
                    ),
                ));
            }
        }
        let total: f64 = sources.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GameError::input(
                "sources[*].weight",
                format!("weights sum to {total}, expected 1"),
            ));
        }
        for i in 0..sources.len() {
            for j in (i + 1)..sources.len() {
                if (&sources[i].theta - &sources[j].theta).norm() <= THETA_SEPARATION {
                    return Err(GameError::input(
                        format!("sources[{j}].theta"),
                        format!("coincides with sources[{i}].theta; merge identical sources"),
                    ));
                }
            }
        }
        Ok(GameSpec {
            dimension,
            sources,
            seed,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[DataSource] {
        &self.sources
    }

    pub fn source(&self, k: usize) -> &DataSource {
        &self.sources[k]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn weights(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.weight).collect()
    }

    /// True when every source shares the same covariance (to 1e-12).
    pub fn equal_covariances(&self) -> bool {
        let first = &self.sources[0].sigma;
        self.sources[1..]
            .iter()
            .all(|s| (&s.sigma - first).amax() <= 1e-12)
    }

    /// Upper bound on the condition number of any convex mixture of covariances.
    pub(crate) fn mixture_condition_bound(&self) -> f64 {
        let lo = self
            .sources
            .iter()
            .map(|s| s.eig_min)
            .fold(f64::INFINITY, f64::min);
        let hi = self.sources.iter().map(|s| s.eig_max).fold(0.0, f64::max);
        hi / lo
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawGameSpec = serde_json::from_str(text).map_err(|e| {
            GameError::input(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&RawGameSpec::from(self)).expect("game serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    theta: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameSpec {
    dimension: usize,
    #[serde(default)]
    seed: Option<u64>,
    sources: Vec<RawSource>,
}

impl TryFrom<RawGameSpec> for GameSpec {
    type Error = GameError;

    fn try_from(raw: RawGameSpec) -> Result<Self> {
        let mut sources = Vec::with_capacity(raw.sources.len());
        for (k, s) in raw.sources.into_iter().enumerate() {
            let field = format!("sources[{k}]");
            let d = s.theta.len();
            if s.sigma.len() != d || s.sigma.iter().any(|row| row.len() != d) {
                return Err(GameError::input(
                    format!("{field}.sigma"),
                    format!("expected {d}x{d} nested array"),
                ));
            }
            let sigma = DMatrix::from_fn(d, d, |i, j| s.sigma[i][j]);
            sources.push(DataSource::validated(
                DVector::from_vec(s.theta),
                sigma,
                s.weight,
                &field,
            )?);
        }
        GameSpec::new(raw.dimension, sources, raw.seed)
    }
}

impl From<&GameSpec> for RawGameSpec {
    fn from(game: &GameSpec) -> Self {
        RawGameSpec {
            dimension: game.dimension,
            seed: game.seed,
            sources: game
                .sources
                .iter()
                .map(|s| RawSource {
                    theta: s.theta.iter().copied().collect(),
                    sigma: s
                        .sigma
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                    weight: s.weight,
                })
                .collect(),
        }
    }
}

impl Serialize for GameSpec {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        RawGameSpec::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GameSpec {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let raw = RawGameSpec::deserialize(deserializer)?;
        GameSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// Builds a source from plain slices.
pub fn source(theta: &[f64], sigma: &[&[f64]], weight: f64) -> Result<DataSource> {
    let d = theta.len();
    if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
        return Err(GameError::input(
            "sigma",
            format!("expected {d}x{d} matrix"),
        ));
    }
    DataSource::new(
        DVector::from_column_slice(theta),
        DMatrix::from_fn(d, d, |i, j| sigma[i][j]),
        weight,
    )
}

/// Source with identity covariance.
pub fn identity_source(theta: &[f64], weight: f64) -> Result<DataSource> {
    let d = theta.len();
    DataSource::new(
        DVector::from_column_slice(theta),
        DMatrix::identity(d, d),
        weight,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_source_json(w1: f64, w2: f64) -> String {
        format!(
            r#"{{"dimension": 2, "seed": null, "sources": [
                {{"theta": [1, 1], "sigma": [[1, 0], [0, 1]], "weight": {w1}}},
                {{"theta": [0, 1], "sigma": [[1, 0], [0, 1]], "weight": {w2}}}
            ]}}"#
        )
    }

    #[test]
    fn parses_and_round_trips() {
        let game = GameSpec::from_json_str(&two_source_json(0.53, 0.47)).unwrap();
        assert_eq!(game.num_sources(), 2);
        assert!(game.equal_covariances());
        let again = GameSpec::from_json_str(&game.to_json_string()).unwrap();
        assert_eq!(game, again);
    }

    #[test]
    fn rejects_unordered_weights_with_field() {
        let err = GameSpec::from_json_str(&two_source_json(0.47, 0.53)).unwrap_err();
        match err {
            GameError::Input { field, .. } => assert_eq!(field, "sources[1].weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_json_with_position() {
        let err = GameSpec::from_json_str("{\"dimension\": 2,\n \"sources\": [}").unwrap_err();
        match err {
            GameError::Input { field, .. } => assert!(field.starts_with("line 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric_sigma() {
        assert!(source(&[0.0, 0.0], &[&[1.0, 2.0], &[2.0, 1.0]], 0.5).is_err());
        assert!(source(&[0.0, 0.0], &[&[1.0, 0.1], &[0.0, 1.0]], 0.5).is_err());
        assert!(source(&[0.0, 0.0], &[&[1.0, 0.1], &[0.1, 1.0]], 0.5).is_ok());
    }

    #[test]
    fn rejects_duplicate_thetas_and_bad_sums() {
        let a = identity_source(&[0.0, 0.0], 0.6).unwrap();
        let b = identity_source(&[0.0, 0.0], 0.4).unwrap();
        assert!(GameSpec::new(2, vec![a.clone(), b], None).is_err());
        let c = identity_source(&[1.0, 0.0], 0.3).unwrap();
        assert!(GameSpec::new(2, vec![a, c], None).is_err());
    }
}
