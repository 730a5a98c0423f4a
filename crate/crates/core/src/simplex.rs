//! Regular grids on the probability simplex.

use crate::error::{GameError, Result};
use crate::profile::MixtureWeights;

/// Number of subdivisions `m = 1/step`, provided `1/step` is an integer within 1e-9.
pub fn subdivisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(GameError::input(
            "step",
            format!("grid step must lie in (0, 1], got {step}"),
        ));
    }
    let inv = 1.0 / step;
    let m = inv.round();
    if (inv - m).abs() > 1e-9 * m.max(1.0) {
        return Err(GameError::input(
            "step",
            format!("1/step = {inv} is not an integer"),
        ));
    }
    Ok(m as usize)
}

/// Number of points in the grid with `m` subdivisions over `k` coordinates.
pub fn grid_len(k: usize, m: usize) -> usize {
    // C(m + k - 1, k - 1), accumulated so every intermediate is an integer.
    let mut acc: u128 = 1;
    for i in 1..k as u128 {
        acc = acc * (m as u128 + i) / i;
    }
    acc as usize
}

/// All compositions of `m` into `K` non-negative parts, scaled by `1/m`,
/// in ascending lexicographic order of the leading coordinates.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    counts: Vec<usize>,
    m: usize,
    done: bool,
}

impl SimplexGrid {
    pub fn subdivisions(&self) -> usize {
        self.m
    }

    fn current(&self) -> MixtureWeights {
        let m = self.m as f64;
        MixtureWeights::new_unchecked(self.counts.iter().map(|&c| c as f64 / m).collect())
    }

    fn advance(&mut self) {
        let k = self.counts.len();
        if k == 1 {
            self.done = true;
            return;
        }
        let mut prefix: Vec<usize> = Vec::with_capacity(k - 1);
        let mut acc = 0;
        for &c in &self.counts[..k - 1] {
            acc += c;
            prefix.push(acc);
        }
        for i in (0..k - 1).rev() {
            if prefix[i] < self.m {
                self.counts[i] += 1;
                for c in &mut self.counts[i + 1..k - 1] {
                    *c = 0;
                }
                self.counts[k - 1] = self.m - (prefix[i] + 1);
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for SimplexGrid {
    type Item = MixtureWeights;

    fn next(&mut self) -> Option<MixtureWeights> {
        if self.done {
            return None;
        }
        let out = self.current();
        self.advance();
        Some(out)
    }
}

/// Streams every point of `Δ_K` whose coordinates are multiples of `step`.
pub fn simplex_grid(k: usize, step: f64) -> Result<SimplexGrid> {
    if k == 0 {
        return Err(GameError::input("K", "need at least one coordinate"));
    }
    let m = subdivisions(step)?;
    let mut counts = vec![0; k];
    counts[k - 1] = m;
    Ok(SimplexGrid {
        counts,
        m,
        done: false,
    })
}

/// Default verification grid step for `k` sources: 0.002 for two sources,
/// 0.01 up to five, and coarser beyond so the grid stays near a million points.
pub fn default_grid_step(k: usize) -> f64 {
    match k {
        0..=2 => 0.002,
        3..=5 => 0.01,
        _ => {
            let mut m = 100;
            while m > 1 && grid_len(k, m) > 1_000_000 {
                m -= 1;
            }
            1.0 / m as f64
        }
    }
}
