use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFn, KLFn};

/// A trajectory-level stability estimate to test, together with the gains
/// it names. The variant fixes the exact inequality form (max vs sum,
/// sup-norms vs integrals) as displayed in the corresponding definition.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimateSpec {
    /// |x(t)| ≤ max{β(|ξ|,t), γ₁(‖u‖_[0,t]), γ₂(‖y‖_[0,t])}
    Uioss {
        beta: KLFn,
        gamma1: ComparisonFn,
        gamma2: ComparisonFn,
    },
    /// |x(t)| ≤ max{β(|ξ|,t), γ₂(‖y‖_[0,t])}
    Uoss { beta: KLFn, gamma2: ComparisonFn },
    /// while |x| ≥ ρ(|y|) has held since t = 0: |x(t)| ≤ λ(|ξ|,t)
    Gasmo { rho: ComparisonFn, lambda: KLFn },
    /// ∫χ(|x|) ≤ κ(|ξ|) + ∫γ(|y|)
    IiUoss {
        chi: ComparisonFn,
        kappa: ComparisonFn,
        gamma: ComparisonFn,
    },
    /// |y(s)| ≤ ρ₁(|x(s)|) on [0,t] implies |x(t)| ≤ χ₁(t) + χ₂(|ξ|) + c
    Uo {
        rho1: ComparisonFn,
        chi1: ComparisonFn,
        chi2: ComparisonFn,
        c: f64,
    },
    /// |x(t)| ≤ max{β(|ξ|,t), γ(∫γ₁(|u|)), γ(∫γ₂(|y|))}
    IntegralUioss {
        beta: KLFn,
        gamma_outer: ComparisonFn,
        gamma1: ComparisonFn,
        gamma2: ComparisonFn,
    },
    /// α_x(|x(t)|) ≤ β(|ξ|,t) + ∫γ₁(|u|) + γ₂(‖y‖_[0,t])
    MixedIntegralUioss {
        alpha_x: ComparisonFn,
        beta: KLFn,
        gamma1: ComparisonFn,
        gamma2: ComparisonFn,
    },
    /// |x₁(t) − x₂(t)| ≤ max{β(|ξ₁−ξ₂|,t), γ₁(‖u₁−u₂‖), γ₂(‖y₁−y₂‖)}
    IncrementalUioss {
        beta: KLFn,
        gamma1: ComparisonFn,
        gamma2: ComparisonFn,
    },
}

impl EstimateSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EstimateSpec::Uioss { .. } => "uioss",
            EstimateSpec::Uoss { .. } => "uoss",
            EstimateSpec::Gasmo { .. } => "gasmo",
            EstimateSpec::IiUoss { .. } => "ii-uoss",
            EstimateSpec::Uo { .. } => "uo",
            EstimateSpec::IntegralUioss { .. } => "integral-uioss",
            EstimateSpec::MixedIntegralUioss { .. } => "mixed-integral-uioss",
            EstimateSpec::IncrementalUioss { .. } => "incremental-uioss",
        }
    }

    /// Multiply every gain slot pointwise by `factor` (used by the gain
    /// inflation property tests).
    pub fn inflate(&self, factor: f64) -> EstimateSpec {
        let s = |g: &ComparisonFn| g.scale(factor);
        let kl = |b: &KLFn| match b {
            KLFn::Factored { mu1, mu2 } => KLFn::Factored {
                mu1: mu1.scale(factor),
                mu2: mu2.clone(),
            },
            other => other.clone(),
        };
        match self {
            EstimateSpec::Uioss {
                beta,
                gamma1,
                gamma2,
            } => EstimateSpec::Uioss {
                beta: kl(beta),
                gamma1: s(gamma1),
                gamma2: s(gamma2),
            },
            EstimateSpec::Uoss { beta, gamma2 } => EstimateSpec::Uoss {
                beta: kl(beta),
                gamma2: s(gamma2),
            },
            EstimateSpec::Gasmo { rho, lambda } => EstimateSpec::Gasmo {
                rho: rho.clone(),
                lambda: kl(lambda),
            },
            EstimateSpec::IiUoss { chi, kappa, gamma } => EstimateSpec::IiUoss {
                chi: chi.clone(),
                kappa: s(kappa),
                gamma: s(gamma),
            },
            EstimateSpec::Uo {
                rho1,
                chi1,
                chi2,
                c,
            } => EstimateSpec::Uo {
                rho1: rho1.clone(),
                chi1: s(chi1),
                chi2: s(chi2),
                c: *c,
            },
            EstimateSpec::IntegralUioss {
                beta,
                gamma_outer,
                gamma1,
                gamma2,
            } => EstimateSpec::IntegralUioss {
                beta: kl(beta),
                gamma_outer: s(gamma_outer),
                gamma1: gamma1.clone(),
                gamma2: gamma2.clone(),
            },
            EstimateSpec::MixedIntegralUioss {
                alpha_x,
                beta,
                gamma1,
                gamma2,
            } => EstimateSpec::MixedIntegralUioss {
                alpha_x: alpha_x.clone(),
                beta: kl(beta),
                gamma1: s(gamma1),
                gamma2: s(gamma2),
            },
            EstimateSpec::IncrementalUioss {
                beta,
                gamma1,
                gamma2,
            } => EstimateSpec::IncrementalUioss {
                beta: kl(beta),
                gamma1: s(gamma1),
                gamma2: s(gamma2),
            },
        }
    }
}
