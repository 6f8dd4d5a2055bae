//! Spatial and temporal decay factors and the score products built from them.

use crate::graph::HopDistance;
use crate::transcript::Round;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecayError {
    #[error("decay rate {0} must lie strictly between 0 and 1")]
    InvalidRate(f64),
    #[error("sender cannot reach the receiver; unreachable messages are never scored")]
    Unreachable,
    #[error("message round {tau} is not earlier than current round {t}")]
    NotInPast { tau: u32, t: u32 },
}

pub(crate) fn check_rate(lambda: f64) -> Result<(), DecayError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(DecayError::InvalidRate(lambda))
    }
}

/// `lambda^exponent` by repeated multiplication, which keeps the result
/// monotone in the exponent under rounding.
fn decay_power(lambda: f64, exponent: u64) -> f64 {
    (0..exponent).fold(1.0, |acc, _| acc * lambda)
}

/// Weight for a message whose author sits `d` hops from the receiver.
/// Self (d = 0) and direct neighbors (d = 1) both get exactly 1.
pub fn spatial_decay(d: HopDistance, lambda_s: f64) -> Result<f64, DecayError> {
    check_rate(lambda_s)?;
    match d {
        HopDistance::Unreachable => Err(DecayError::Unreachable),
        HopDistance::Finite(d) if d <= 1 => Ok(1.0),
        HopDistance::Finite(d) => Ok(decay_power(lambda_s, d as u64 - 1)),
    }
}

/// Weight for a message produced at round `tau`, seen at round `t`.
/// The previous round has age zero and weight 1.
pub fn temporal_decay(tau: Round, t: Round, lambda_t: f64) -> Result<f64, DecayError> {
    check_rate(lambda_t)?;
    if tau >= t {
        return Err(DecayError::NotInPast {
            tau: tau.get(),
            t: t.get(),
        });
    }
    let age = t.get() - tau.get() - 1;
    Ok(decay_power(lambda_t, age as u64))
}

/// Per-message spatio-temporal weight.
pub fn message_relevance(phi_s: f64, phi_t: f64) -> f64 {
    phi_s * phi_t
}

/// Sentence score: message weight times semantic similarity. Not clamped.
pub fn sentence_score(r: f64, phi_sem: f64) -> f64 {
    r * phi_sem
}
