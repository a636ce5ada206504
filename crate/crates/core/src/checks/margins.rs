use crate::comparison::{ComparisonFn, KLFn};
use crate::{CoreError, Result};

/// Margin ρ(s) = 1.01·ϑ(4·γ₂(s)) with ϑ(s) = max{β(s, 0), s}: any state
/// dominating ρ of its output decays like the decay envelope, so ρ works as
/// the modulo-output stability margin derived from a plain output-to-state
/// bound.
///
/// When γ₂ is bounded the result is pushed into class K-infinity by a tiny
/// linear floor.
pub fn gasmo_margin_from_uoss(beta: &KLFn, gamma2: &ComparisonFn) -> ComparisonFn {
    let theta = beta.at_zero().premajorize_identity();
    let rho = theta
        .compose(&ComparisonFn::linear(4.0).compose(gamma2))
        .scale(1.01);
    if rho.is_unbounded() {
        rho
    } else {
        rho.max(&ComparisonFn::linear(1e-6))
    }
}

/// Feedback bound φ(r) = 0.99·γ₁⁻¹(¼·α⁻¹(r)) with α(r) = max{β(r, 0), r}:
/// any control smaller in norm than φ(|x|) keeps the closed loop
/// output-to-state stable.
pub fn stability_margin(beta: &KLFn, gamma1: &ComparisonFn) -> Result<ComparisonFn> {
    if !gamma1.is_unbounded() {
        return Err(CoreError::InvalidGain(
            "stability margin needs a class K∞ control gain".into(),
        ));
    }
    let alpha = beta.at_zero().premajorize_identity();
    let alpha_inv = alpha.invert()?;
    let gamma1_inv = gamma1.invert()?;
    Ok(gamma1_inv
        .compose(&ComparisonFn::linear(0.25).compose(&alpha_inv))
        .scale(0.99))
}
