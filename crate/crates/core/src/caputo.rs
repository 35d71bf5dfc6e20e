//! L1 discretization of the Caputo time derivative.
//!
//! With `beta = 1 - alpha`, the L1 weight attached to the increment
//! `U^{j+1} - U^j` when advancing from step `k` is
//! `w_{k,j} = (k+1-j)^beta - (k-j)^beta`. The `j = k` weight is always 1 and
//! is absorbed into the left-hand side of the explicit update; the rest form
//! the memory term that is subtracted from `U^k`.

use crate::error::{Error, Result};
use crate::model::Conserved;
use crate::special::gamma;

fn check_alpha(op: &'static str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// `(m+1)^beta - m^beta`, evaluated without cancellation for large `m`.
#[inline]
pub fn lag_weight(m: usize, beta: f64) -> f64 {
    if m == 0 {
        1.0
    } else {
        let m = m as f64;
        m.powf(beta) * (beta * (1.0 / m).ln_1p()).exp_m1()
    }
}

/// L1 weights for the memory sum at step `k`, indexed by `j = 0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Weights {
    pub alpha: f64,
    pub coefficients: Vec<f64>,
}

impl L1Weights {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

pub fn l1_weights(k: usize, alpha: f64) -> Result<L1Weights> {
    check_alpha("l1_weights", alpha)?;
    if k == 0 {
        return Err(Error::domain("l1_weights", "step index k must be at least 1"));
    }
    let beta = 1.0 - alpha;
    let coefficients = (0..k).map(|j| lag_weight(k - j, beta)).collect();
    Ok(L1Weights {
        alpha,
        coefficients,
    })
}

/// Stored increments `U^{j+1} - U^j`, one per completed step, flat row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    cells: usize,
    increments: Vec<f64>,
    step_count: usize,
}

impl HistoryBuffer {
    pub fn new(cells: usize) -> Self {
        Self {
            cells,
            increments: Vec::new(),
            step_count: 0,
        }
    }

    pub fn with_capacity(cells: usize, steps: usize) -> Self {
        Self {
            cells,
            increments: Vec::with_capacity(cells * 4 * steps),
            step_count: 0,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_empty(&self) -> bool {
        self.step_count == 0
    }

    pub fn push(&mut self, increment: &[Conserved]) -> Result<()> {
        if increment.len() != self.cells {
            return Err(Error::Invariant(format!(
                "history holds {} cells, increment has {}",
                self.cells,
                increment.len()
            )));
        }
        self.increments
            .extend(increment.iter().flat_map(|u| u.iter().copied()));
        self.step_count += 1;
        Ok(())
    }

    /// Increment `U^{j+1} - U^j` as a flat slice of `4 * cells` values.
    pub fn increment(&self, j: usize) -> &[f64] {
        let stride = 4 * self.cells;
        &self.increments[j * stride..(j + 1) * stride]
    }
}

/// Memory term `sum_{j<k} w_{k,j} (U^{j+1} - U^j)` per cell.
///
/// `k` is the history length. Zero for empty history or `alpha = 1`.
pub fn memory_term(history: &HistoryBuffer, alpha: f64) -> Result<Vec<Conserved>> {
    let mut out = vec![[0.0; 4]; history.cells];
    accumulate_memory(history, alpha, &mut out)?;
    Ok(out)
}

/// In-place variant of [`memory_term`]; `out` must have one entry per cell.
pub fn accumulate_memory(history: &HistoryBuffer, alpha: f64, out: &mut [Conserved]) -> Result<()> {
    check_alpha("memory_term", alpha)?;
    if out.len() != history.cells {
        return Err(Error::Invariant(format!(
            "memory output has {} cells, history has {}",
            out.len(),
            history.cells
        )));
    }
    if history.increments.len() != history.step_count * 4 * history.cells {
        return Err(Error::Invariant("history length does not match its step count".into()));
    }
    out.iter_mut().for_each(|u| *u = [0.0; 4]);
    let k = history.step_count;
    if k == 0 || alpha == 1.0 {
        return Ok(());
    }
    let weights = l1_weights(k, alpha)?;
    let flat = out.as_flattened_mut();
    for (j, &w) in weights.coefficients.iter().enumerate() {
        for (acc, &d) in flat.iter_mut().zip(history.increment(j)) {
            *acc += w * d;
        }
    }
    Ok(())
}

/// L1 approximation of the Caputo derivative at the last sample time.
///
/// `samples[j]` is the value at `t_j = j dt`.
pub fn caputo_l1_scalar(samples: &[f64], dt: f64, alpha: f64) -> Result<f64> {
    check_alpha("caputo_l1_scalar", alpha)?;
    if samples.len() < 2 {
        return Err(Error::domain(
            "caputo_l1_scalar",
            format!("need at least 2 samples, got {}", samples.len()),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("caputo_l1_scalar", format!("dt must be positive, got {dt}")));
    }
    let n = samples.len() - 1;
    let beta = 1.0 - alpha;
    let sum: f64 = samples
        .windows(2)
        .enumerate()
        .map(|(j, w)| lag_weight(n - 1 - j, beta) * (w[1] - w[0]))
        .sum();
    Ok(dt.powf(-alpha) / gamma(2.0 - alpha) * sum)
}

/// `b_k^-1 / k^alpha` with `b_k = (k+1)^(1-alpha) - k^(1-alpha)`; tends to `1/(1-alpha)`.
pub fn coefficient_limit_check(k: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(
            "coefficient_limit_check",
            format!("alpha must lie in (0, 1), got {alpha}"),
        ));
    }
    if k == 0 {
        return Err(Error::domain("coefficient_limit_check", "k must be at least 1"));
    }
    let b_k = lag_weight(k, 1.0 - alpha);
    Ok(1.0 / b_k / (k as f64).powf(alpha))
}
