//! Worst-case softmax output change implied by a stop threshold.
//!
//! With no smoothing, a head neuron at velocity `eps` sees its softmax output
//! move from `p` to `p^(1 - eps)` (after renormalization), a change of
//! `p (p^-eps - 1)`. That is maximized at `p* = (1 - eps)^(1/eps)`, giving
//! `max dy = p* ((1 - eps)^-1 - 1)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonAnalysis {
    pub eps: f64,
    /// Probability that maximizes the output change.
    pub p_star: f64,
    pub max_delta: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("eps = {eps} outside (0, 1)")))
    }
}

pub fn epsilon_analysis(eps: f64) -> Result<EpsilonAnalysis> {
    check_eps(eps)?;
    // ln(1 - eps) / eps, accurate for tiny eps
    let p_star = ((-eps).ln_1p() / eps).exp();
    let max_delta = p_star * (eps / (1.0 - eps));
    Ok(EpsilonAnalysis {
        eps,
        p_star,
        max_delta,
    })
}

/// `p (p^-eps - 1)` for `p` in `(0, 1]`.
pub fn softmax_delta(p: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("p = {p} outside (0, 1]")));
    }
    Ok(p * (p.powf(-eps) - 1.0))
}
