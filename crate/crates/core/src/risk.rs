//! Delta-normal VaR, selling probability, haircuts and the interbank
//! risk premium.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::StepVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarParams {
    /// Standard normal quantile of the one-sided confidence level.
    pub confidence_x: f64,
    pub horizon: usize,
    /// Steps of NAV history used to estimate μ and σ.
    pub window: usize,
}

impl Default for VarParams {
    fn default() -> Self {
        VarParams { confidence_x: 1.645, horizon: 1, window: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityParams {
    pub horizon_n: usize,
}

impl Default for LiquidityParams {
    fn default() -> Self {
        LiquidityParams { horizon_n: 3 }
    }
}

/// `VaR = xσ − μ`.
pub fn delta_normal_var(mu: f64, sigma_p: f64, x: f64) -> f64 {
    x * sigma_p - mu
}

/// VaR of a portfolio from its trailing value series (oldest first).
///
/// μ and σ are the sample mean and standard deviation of one-step changes
/// over the last `params.window` changes, scaled to the horizon as `h·μ` and
/// `√h·σ`. Returns `None` with fewer than two changes.
pub fn portfolio_var(values: &[f64], params: &VarParams) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let changes: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let tail = &changes[changes.len().saturating_sub(params.window.max(2))..];
    let n = tail.len() as f64;
    let mu = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / (n - 1.0);
    let h = params.horizon.max(1) as f64;
    Some(delta_normal_var(h * mu, h.sqrt() * var.sqrt(), params.confidence_x))
}

/// `P_sell = 1 − max(0, Σ(O_S − O_B)/n) / (ΣO_S/n)` over the last `n`
/// entries of `history` (oldest first). With no sell volume in the window the
/// asset is taken as fully liquid.
pub fn selling_probability(history: &[StepVolume], n: usize) -> f64 {
    let n = n.max(1);
    let window = &history[history.len().saturating_sub(n)..];
    let sold: f64 = window.iter().map(|v| v.sell).sum();
    if sold <= 0.0 {
        return 1.0;
    }
    let bought: f64 = window.iter().map(|v| v.buy).sum();
    // The 1/n factors cancel.
    let excess = (sold - bought).max(0.0);
    (1.0 - excess / sold).clamp(0.0, 1.0)
}

/// `haircut = 1 − P_sell`.
pub fn compute_haircut(p_sell: f64) -> f64 {
    (1.0 - p_sell).clamp(0.0, 1.0)
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("no liquid assets back {outstanding} of interbank loans")]
pub struct LoanDenied {
    pub outstanding: f64,
}

/// `δ = ΣIL / Σ(A · P_sell(A))`.
pub fn interbank_spread(outstanding_loans: f64, portfolio: &[(f64, f64)]) -> Result<f64, LoanDenied> {
    if outstanding_loans <= 0.0 {
        return Ok(0.0);
    }
    let liquid: f64 = portfolio.iter().map(|(value, p)| value.max(0.0) * p.clamp(0.0, 1.0)).sum();
    if liquid <= 0.0 {
        return Err(LoanDenied { outstanding: outstanding_loans });
    }
    Ok(outstanding_loans / liquid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flows(pairs: &[(f64, f64)]) -> Vec<StepVolume> {
        pairs.iter().map(|&(sell, buy)| StepVolume { sell, buy }).collect()
    }

    #[test]
    fn var_examples() {
        assert_eq!(delta_normal_var(1.645 * 2.0, 2.0, 1.645), 0.0);
        assert!((delta_normal_var(0.0, 2.0, 1.645) - 3.29).abs() < 1e-12);
        assert_eq!(delta_normal_var(5.0, 0.0, 1.645), -5.0);
    }

    #[test]
    fn portfolio_var_hand_value() {
        // Changes +1, −1, +1, −1: μ = 0, sample σ = √(4/3).
        let v = [10.0, 11.0, 10.0, 11.0, 10.0];
        let got = portfolio_var(&v, &VarParams::default()).unwrap();
        assert!((got - 1.645 * (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(portfolio_var(&v[..2], &VarParams::default()).is_none());
    }

    #[test]
    fn selling_probability_examples() {
        assert_eq!(selling_probability(&flows(&[(5.0, 5.0); 3]), 3), 1.0);
        assert_eq!(selling_probability(&flows(&[(5.0, 0.0); 3]), 3), 0.0);
        assert_eq!(selling_probability(&flows(&[(2.0, 1.0); 3]), 3), 0.5);
        assert_eq!(selling_probability(&flows(&[(0.0, 4.0); 3]), 3), 1.0);
        assert_eq!(selling_probability(&[], 3), 1.0);
    }

    #[test]
    fn selling_probability_uses_last_n() {
        let h = flows(&[(9.0, 0.0), (9.0, 0.0), (1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(selling_probability(&h, 3), 1.0);
        assert!(selling_probability(&h, 5) < 0.2);
    }

    #[test]
    fn haircut_examples() {
        assert_eq!(compute_haircut(1.0), 0.0);
        assert_eq!(compute_haircut(0.0), 1.0);
        assert!((compute_haircut(0.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn spread_examples() {
        assert_eq!(interbank_spread(0.0, &[(100.0, 1.0)]), Ok(0.0));
        assert_eq!(interbank_spread(50.0, &[(100.0, 1.0)]), Ok(0.5));
        assert!(interbank_spread(50.0, &[(100.0, 0.0)]).is_err());
        assert_eq!(interbank_spread(100.0, &[(200.0, 1.0)]), Ok(0.5));
    }
}
