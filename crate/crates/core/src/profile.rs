//! Strategy profiles, simplex coordinates and choice-model selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::game::GameSpec;

/// Default tolerance under which two losses count as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Temperatures below this are rejected.
pub const MIN_TEMPERATURE: f64 = 1e-12;

const SIMPLEX_SUM_TOL: f64 = 1e-12;
const COORD_MATCH_TOL: f64 = 1e-8;

/// How a data source picks among competing models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChoiceModel {
    /// Lowest loss wins; ties within `tie_tol` split evenly.
    Proximity {
        #[serde(default = "default_tie_tol")]
        tie_tol: f64,
    },
    /// Logit choice over negative losses at temperature `temperature`.
    Probability { temperature: f64 },
}

fn default_tie_tol() -> f64 {
    DEFAULT_TIE_TOL
}

impl ChoiceModel {
    pub fn proximity() -> Self {
        ChoiceModel::Proximity {
            tie_tol: DEFAULT_TIE_TOL,
        }
    }

    pub fn probability(temperature: f64) -> Result<Self> {
        let model = ChoiceModel::Probability { temperature };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChoiceModel::Proximity { tie_tol } => {
                if !(tie_tol >= 0.0) {
                    return Err(GameError::input("tie_tol", "must be non-negative"));
                }
            }
            ChoiceModel::Probability { temperature } => check_temperature(temperature)?,
        }
        Ok(())
    }
}

pub(crate) fn check_temperature(t: f64) -> Result<()> {
    if !t.is_finite() || t < MIN_TEMPERATURE {
        return Err(GameError::input(
            "t",
            format!("temperature must be finite and at least {MIN_TEMPERATURE:e}, got {t}"),
        ));
    }
    Ok(())
}

/// A point of the probability simplex over the K sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(GameError::input("q", "must be non-empty"));
        }
        if q.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(GameError::input(
                "q",
                "entries must be finite and non-negative",
            ));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(GameError::input(
                "q",
                format!("entries sum to {total}, expected 1"),
            ));
        }
        Ok(MixtureWeights(q))
    }

    /// Builds a simplex point without validation; callers guarantee membership.
    pub(crate) fn new_unchecked(q: Vec<f64>) -> Self {
        MixtureWeights(q)
    }

    /// The k-th unit vector of length `len`.
    pub fn vertex(len: usize, k: usize) -> Self {
        let mut q = vec![0.0; len];
        q[k] = 1.0;
        MixtureWeights(q)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the unit coordinate, when this is a vertex.
    pub fn vertex_index(&self) -> Option<usize> {
        let mut hit = None;
        for (k, &x) in self.0.iter().enumerate() {
            if x == 1.0 {
                hit = Some(k);
            } else if x != 0.0 {
                return None;
            }
        }
        hit
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = GameError;

    fn try_from(q: Vec<f64>) -> Result<Self> {
        MixtureWeights::new(q)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(q: MixtureWeights) -> Self {
        q.0
    }
}

/// The N provider strategies, optionally with their simplex coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    strategies: Vec<DVector<f64>>,
    coords: Option<Vec<MixtureWeights>>,
}

impl StrategyProfile {
    pub fn new(strategies: Vec<DVector<f64>>) -> Result<Self> {
        if strategies.is_empty() {
            return Err(GameError::input("strategies", "need at least one player"));
        }
        let d = strategies[0].len();
        if let Some(n) = strategies.iter().position(|s| s.len() != d) {
            return Err(GameError::input(
                format!("strategies[{n}]"),
                format!("length {} differs from {d}", strategies[n].len()),
            ));
        }
        Ok(StrategyProfile {
            strategies,
            coords: None,
        })
    }

    /// Profile whose strategies are the weighted minimizers of `coords`.
    pub fn from_coords(game: &GameSpec, coords: Vec<MixtureWeights>) -> Result<Self> {
        if coords.is_empty() {
            return Err(GameError::input("coords", "need at least one player"));
        }
        let strategies = coords
            .iter()
            .map(|q| crate::loss::weighted_minimizer(q, game))
            .collect::<Result<Vec<_>>>()?;
        Ok(StrategyProfile {
            strategies,
            coords: Some(coords),
        })
    }

    /// N copies of the same strategy (and coordinate, when given).
    pub fn replicated(strategy: DVector<f64>, coord: Option<MixtureWeights>, n: usize) -> Self {
        StrategyProfile {
            strategies: vec![strategy; n],
            coords: coord.map(|q| vec![q; n]),
        }
    }

    pub fn strategies(&self) -> &[DVector<f64>] {
        &self.strategies
    }

    pub fn strategy(&self, n: usize) -> &DVector<f64> {
        &self.strategies[n]
    }

    pub fn coords(&self) -> Option<&[MixtureWeights]> {
        self.coords.as_deref()
    }

    pub fn num_players(&self) -> usize {
        self.strategies.len()
    }

    pub fn dimension(&self) -> usize {
        self.strategies[0].len()
    }

    /// Copy of this profile with player `n` moved to `strategy`; coordinates are dropped.
    pub fn with_deviation(&self, n: usize, strategy: DVector<f64>) -> Self {
        let mut strategies = self.strategies.clone();
        strategies[n] = strategy;
        StrategyProfile {
            strategies,
            coords: None,
        }
    }

    /// Checks dimensions against `game` and coordinate consistency when present.
    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        if self.dimension() != game.dimension() {
            return Err(GameError::input(
                "strategies",
                format!(
                    "strategy length {} does not match game dimension {}",
                    self.dimension(),
                    game.dimension()
                ),
            ));
        }
        if let Some(coords) = &self.coords {
            if coords.len() != self.strategies.len() {
                return Err(GameError::input(
                    "coords",
                    format!(
                        "{} coords for {} strategies",
                        coords.len(),
                        self.strategies.len()
                    ),
                ));
            }
            for (n, q) in coords.iter().enumerate() {
                if q.len() != game.num_sources() {
                    return Err(GameError::input(
                        format!("coords[{n}]"),
                        format!(
                            "length {} does not match K = {}",
                            q.len(),
                            game.num_sources()
                        ),
                    ));
                }
                let implied = crate::loss::weighted_minimizer(q, game)?;
                if (&implied - &self.strategies[n]).amax() > COORD_MATCH_TOL {
                    return Err(GameError::input(
                        format!("coords[{n}]"),
                        "does not map to the stated strategy",
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when every strategy coincides with the first within `tol` (sup norm).
    pub fn is_homogeneous(&self, tol: f64) -> bool {
        let first = &self.strategies[0];
        self.strategies.iter().all(|s| (s - first).amax() <= tol)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawProfile = serde_json::from_str(text).map_err(|e| {
            GameError::input(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&RawProfile::from(self)).expect("profile serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    strategies: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<MixtureWeights>>,
}

impl TryFrom<RawProfile> for StrategyProfile {
    type Error = GameError;

    fn try_from(raw: RawProfile) -> Result<Self> {
        let mut profile =
            StrategyProfile::new(raw.strategies.into_iter().map(DVector::from_vec).collect())?;
        if let Some(coords) = raw.coords {
            if coords.len() != profile.num_players() {
                return Err(GameError::input(
                    "coords",
                    format!(
                        "{} coords for {} strategies",
                        coords.len(),
                        profile.num_players()
                    ),
                ));
            }
            profile.coords = Some(coords);
        }
        Ok(profile)
    }
}

impl From<&StrategyProfile> for RawProfile {
    fn from(p: &StrategyProfile) -> Self {
        RawProfile {
            strategies: p
                .strategies
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            coords: p.coords.clone(),
        }
    }
}

impl Serialize for StrategyProfile {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        RawProfile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StrategyProfile {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let raw = RawProfile::deserialize(deserializer)?;
        StrategyProfile::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// N×K matrix of losses, entry (n, k) the loss of player n on source k.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix(pub(crate) DMatrix<f64>);

impl LossMatrix {
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.0[(n, k)]
    }

    pub fn num_players(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_sources(&self) -> usize {
        self.0.ncols()
    }

    /// Losses of every player on source `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.0.column(k).iter().copied().collect()
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.0.row(n).iter().copied().collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}
