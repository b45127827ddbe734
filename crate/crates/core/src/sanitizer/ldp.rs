//! Randomized-response replacement over a finite surrogate set.

use rand::Rng;

use crate::error::{Error, Result};

/// Privacy loss of keeping the intended surrogate with probability `p` and
/// otherwise choosing uniformly among the other `m - 1`.
pub fn ldp_epsilon(p: f64, m: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidKeepProbability(p));
    }
    if m < 2 {
        return Err(Error::EmptySurrogateSet(format!("size {m}")));
    }
    Ok((p * (m as f64 - 1.0) / (1.0 - p)).ln())
}

/// Sequential composition over independently randomized spans.
pub fn composed_epsilon(eps: &[f64]) -> f64 {
    eps.iter().sum()
}

/// Draws the released surrogate for `intended` from `set`.
pub fn randomized_replace<R: Rng + ?Sized>(intended: &str, set: &[String], p: f64, rng: &mut R) -> Result<String> {
    ldp_epsilon(p, set.len())?;
    let pos = set
        .iter()
        .position(|s| s == intended)
        .ok_or_else(|| Error::SurrogateNotInSet(intended.to_string()))?;
    if rng.gen::<f64>() < p {
        return Ok(intended.to_string());
    }
    let mut k = rng.gen_range(0..set.len() - 1);
    if k >= pos {
        k += 1;
    }
    Ok(set[k].clone())
}
