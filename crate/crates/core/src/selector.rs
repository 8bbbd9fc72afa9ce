//! Contained-panic regime space.
//!
//! A regime is a subset of at most `K` assets, stored as a bit mask with bit
//! `a` set when asset `a` (0-based) participates in the panic. Regimes are
//! ordered lexicographically by their diagonal written as a bit string with
//! asset 1 first, so regime 1 is always the empty set. Regime indices are
//! 1-based on every public interface.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorSpace {
    d_y: usize,
    max_panic: usize,
    masks: Vec<u64>,
}

impl SelectorSpace {
    /// Enumerate every subset of `d_y` assets with at most `max_panic` members.
    pub fn enumerate(d_y: usize, max_panic: usize) -> Result<Self> {
        if d_y == 0 {
            return Err(Error::Config("asset count must be positive".into()));
        }
        if max_panic >= d_y {
            return Err(Error::Config(format!(
                "maximum panic size K={max_panic} must be below the asset count {d_y}"
            )));
        }
        if d_y > 64 {
            return Err(Error::Config(format!("at most 64 assets are supported, got {d_y}")));
        }
        let mut masks = Vec::with_capacity(state_count(d_y, max_panic));
        push_lexicographic(d_y, max_panic, 0, 0, 0, &mut masks);
        Ok(Self { d_y, max_panic, masks })
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn max_panic(&self) -> usize {
        self.max_panic
    }

    /// Number of regimes, `S_K`.
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Participation mask of the regime at 0-based position `idx`.
    #[inline]
    pub fn mask(&self, idx: usize) -> u64 {
        self.masks[idx]
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    fn check(&self, regime: usize) -> Result<usize> {
        if regime == 0 || regime > self.len() {
            Err(Error::Index {
                index: regime,
                len: self.len(),
            })
        } else {
            Ok(regime - 1)
        }
    }

    /// Diagonal of the selector matrix for a 1-based regime.
    pub fn diagonal(&self, regime: usize) -> Result<Vec<u8>> {
        let mask = self.masks[self.check(regime)?];
        Ok((0..self.d_y).map(|a| ((mask >> a) & 1) as u8).collect())
    }

    /// Dense selector matrix `D(regime)`; meant for diagnostics and tests.
    pub fn selector_matrix(&self, regime: usize) -> Result<DMatrix<f64>> {
        let diag = self.diagonal(regime)?;
        Ok(DMatrix::from_fn(self.d_y, self.d_y, |i, j| {
            if i == j {
                f64::from(diag[i])
            } else {
                0.0
            }
        }))
    }

    pub fn bit_string(&self, idx: usize) -> String {
        let mask = self.masks[idx];
        (0..self.d_y).map(|a| if (mask >> a) & 1 == 1 { '1' } else { '0' }).collect()
    }

    /// `index<TAB>bits` table, one regime per line, 1-based.
    pub fn to_table(&self) -> String {
        let mut out = String::from("regime\tdiagonal\n");
        for idx in 0..self.len() {
            let _ = writeln!(out, "{}\t{}", idx + 1, self.bit_string(idx));
        }
        out
    }
}

/// `sum_{k=0}^{K} C(d_y, k)`.
pub fn state_count(d_y: usize, max_panic: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for k in 0..=max_panic.min(d_y) {
        total += binom;
        binom = binom * (d_y - k) / (k + 1);
    }
    total
}

fn push_lexicographic(d_y: usize, k: usize, pos: usize, ones: usize, mask: u64, out: &mut Vec<u64>) {
    if pos == d_y {
        out.push(mask);
        return;
    }
    push_lexicographic(d_y, k, pos + 1, ones, mask, out);
    if ones < k {
        push_lexicographic(d_y, k, pos + 1, ones + 1, mask | (1u64 << pos), out);
    }
}

/// Symmetric regime kernel `p I + (1-p)/(S-1) (11' - I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeTransition {
    stay: f64,
    n_states: usize,
}

impl RegimeTransition {
    pub fn new(stay: f64, n_states: usize) -> Result<Self> {
        if !(stay > 0.0 && stay < 1.0) {
            return Err(Error::Domain(format!("regime persistence p={stay} must lie in (0, 1)")));
        }
        if n_states == 0 {
            return Err(Error::Config("regime space is empty".into()));
        }
        Ok(Self { stay, n_states })
    }

    pub fn persistence(&self) -> f64 {
        self.stay
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Probability of remaining in the current regime. A single-state chain
    /// never moves.
    #[inline]
    pub fn diagonal(&self) -> f64 {
        if self.n_states == 1 {
            1.0
        } else {
            self.stay
        }
    }

    /// Probability of moving to each specific other regime.
    #[inline]
    pub fn off_diagonal(&self) -> f64 {
        if self.n_states == 1 {
            0.0
        } else {
            (1.0 - self.stay) / (self.n_states - 1) as f64
        }
    }

    /// Row `from` (1-based) of the kernel.
    pub fn row(&self, from: usize) -> Result<Vec<f64>> {
        if from == 0 || from > self.n_states {
            return Err(Error::Index {
                index: from,
                len: self.n_states,
            });
        }
        let mut row = vec![self.off_diagonal(); self.n_states];
        row[from - 1] = self.diagonal();
        Ok(row)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let (d, o) = (self.diagonal(), self.off_diagonal());
        DMatrix::from_fn(self.n_states, self.n_states, |i, j| if i == j { d } else { o })
    }

    /// `out = Pi' v` using the rank-one structure of the kernel.
    #[inline]
    pub fn predict_into(&self, v: &[f64], out: &mut [f64]) {
        let (d, o) = (self.diagonal(), self.off_diagonal());
        let total: f64 = v.iter().sum();
        for (dst, &x) in out.iter_mut().zip(v) {
            *dst = d * x + o * (total - x);
        }
    }

    /// Draw the next 0-based regime from 0-based `from`.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        if self.n_states == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        if u < self.stay {
            from
        } else {
            let other = rng.random_range(0..self.n_states - 1);
            if other >= from {
                other + 1
            } else {
                other
            }
        }
    }
}
