//! Trading decision rules and liquidation ordering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetId, Holdings, Prices};

/// Per-asset trading decision ε ∈ {−1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Sell,
    Hold,
    Buy,
}

impl Decision {
    pub fn sign(self) -> i8 {
        match self {
            Decision::Sell => -1,
            Decision::Hold => 0,
            Decision::Buy => 1,
        }
    }

    pub fn from_sign(v: i64) -> Self {
        match v.signum() {
            1 => Decision::Buy,
            -1 => Decision::Sell,
            _ => Decision::Hold,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("indicator needs {needed} prices, history has {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid noise probabilities ({0}, {1}, {2})")]
    InvalidProbabilities(f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p_buy: f64,
    pub p_sell: f64,
    pub p_hold: f64,
}

impl NoiseParams {
    pub fn new(p_buy: f64, p_sell: f64, p_hold: f64) -> Result<Self, StrategyError> {
        let ok = [p_buy, p_sell, p_hold].iter().all(|p| (0.0..=1.0).contains(p))
            && ((p_buy + p_sell + p_hold) - 1.0).abs() < 1e-9;
        if !ok {
            return Err(StrategyError::InvalidProbabilities(p_buy, p_sell, p_hold));
        }
        Ok(NoiseParams { p_buy, p_sell, p_hold })
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams { p_buy: 0.4, p_sell: 0.4, p_hold: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndicatorKind {
    MovingAverage,
    TradingBreakout,
    Filter,
    Volatility,
    Momentum,
    MomentumMa,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 6] = [
        IndicatorKind::MovingAverage,
        IndicatorKind::TradingBreakout,
        IndicatorKind::Filter,
        IndicatorKind::Volatility,
        IndicatorKind::Momentum,
        IndicatorKind::MomentumMa,
    ];

    /// Number of prices (including the current one) needed with window `l`.
    pub fn required_history(self, l: usize) -> usize {
        match self {
            IndicatorKind::MomentumMa => 2 * l + 1,
            _ => l + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRule {
    pub kind: IndicatorKind,
    pub window: usize,
    pub buy_above: f64,
    pub sell_below: f64,
}

/// Fixed decision rule of a technical trader: one vote per indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnicalRuleParams {
    pub rules: Vec<IndicatorRule>,
}

impl TechnicalRuleParams {
    /// All six indicators on a common window with symmetric thresholds.
    pub fn symmetric(window: usize, threshold: f64) -> Self {
        TechnicalRuleParams {
            rules: IndicatorKind::ALL
                .iter()
                .map(|&kind| IndicatorRule { kind, window, buy_above: threshold, sell_below: -threshold })
                .collect(),
        }
    }

    pub fn required_history(&self) -> usize {
        self.rules.iter().map(|r| r.kind.required_history(r.window)).max().unwrap_or(1)
    }
}

impl Default for TechnicalRuleParams {
    fn default() -> Self {
        TechnicalRuleParams::symmetric(10, 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StockTrader {
    Noise(NoiseParams),
    Fundamental { tau: f64 },
    Technical(TechnicalRuleParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyAssignment {
    pub stock_trader: StockTrader,
}

impl Default for StrategyAssignment {
    fn default() -> Self {
        StrategyAssignment { stock_trader: StockTrader::Noise(NoiseParams::default()) }
    }
}

/// Maps a uniform draw `u ∈ [0, 1)` to buy/sell/hold.
pub fn noise_decision(params: &NoiseParams, u: f64) -> Decision {
    if u < params.p_buy {
        Decision::Buy
    } else if u < params.p_buy + params.p_sell {
        Decision::Sell
    } else {
        Decision::Hold
    }
}

/// Value trader against the perpetuity value `dividend / r_f`.
pub fn fundamental_decision(price: f64, dividend: f64, r_f: f64, tau: f64) -> Decision {
    let value = dividend / r_f;
    if price < value * (1.0 - tau) {
        Decision::Buy
    } else if price > value * (1.0 + tau) {
        Decision::Sell
    } else {
        Decision::Hold
    }
}

/// Evaluates one indicator over `history` (oldest first, last entry is the
/// current price `P(t)`).
pub fn compute_indicator(kind: IndicatorKind, l: usize, history: &[f64]) -> Result<f64, StrategyError> {
    let l = l.max(1);
    let needed = kind.required_history(l);
    if history.len() < needed {
        return Err(StrategyError::InsufficientHistory { needed, available: history.len() });
    }
    let t = history.len() - 1;
    let p = |lag: usize| history[t - lag];
    let now = p(0);
    let lagged = || (1..=l).map(p);
    let value = match kind {
        IndicatorKind::MovingAverage => {
            let mean = lagged().sum::<f64>() / l as f64;
            (now - mean) / mean
        }
        IndicatorKind::TradingBreakout => {
            let max = lagged().fold(f64::NEG_INFINITY, f64::max);
            (now - max) / max
        }
        IndicatorKind::Filter => {
            let min = lagged().fold(f64::INFINITY, f64::min);
            (now - min) / min
        }
        IndicatorKind::Volatility => {
            // Dispersion of P(t−1) … P(t−L+1) over the mean of the last L.
            let mean_l = lagged().sum::<f64>() / l as f64;
            let window: Vec<f64> = (1..l).map(p).collect();
            if window.is_empty() {
                0.0
            } else {
                let m = window.iter().sum::<f64>() / window.len() as f64;
                let var = window.iter().map(|x| (x - m).powi(2)).sum::<f64>() / window.len() as f64;
                var.sqrt() / mean_l
            }
        }
        IndicatorKind::Momentum => now - p(l),
        IndicatorKind::MomentumMa => (1..=l).map(|i| p(i) - p(i + l)).sum::<f64>() / l as f64,
    };
    Ok(value)
}

/// Majority vote over `(indicator value, rule)` pairs; ties hold.
pub fn technical_decision<'a>(votes: impl IntoIterator<Item = (f64, &'a IndicatorRule)>) -> Decision {
    let tally: i64 = votes
        .into_iter()
        .map(|(v, r)| {
            if v > r.buy_above {
                1
            } else if v < r.sell_below {
                -1
            } else {
                0
            }
        })
        .sum();
    Decision::from_sign(tally)
}

/// Computes every indicator of `params` on `history` and votes. Holds when
/// the history is too short for any rule.
pub fn technical_decision_from_history(params: &TechnicalRuleParams, history: &[f64]) -> Decision {
    let mut values = Vec::with_capacity(params.rules.len());
    for rule in &params.rules {
        match compute_indicator(rule.kind, rule.window, history) {
            Ok(v) => values.push((v, rule)),
            Err(_) => return Decision::Hold,
        }
    }
    technical_decision(values)
}

/// Why an agent is liquidating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiquidationMode {
    /// Defaulted agent raising cash for due obligations.
    FireSale,
    /// Agent over its risk limits rotating into liquid assets.
    FlyToLiquidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidationOrder {
    pub asset: AssetId,
    pub quantity: f64,
    pub fire_sale: bool,
}

/// Inputs for ordering a liquidation.
#[derive(Debug, Clone, Copy)]
pub struct LiquidationContext<'a> {
    pub prices: &'a Prices,
    pub p_sell: &'a Holdings,
    pub sellable: &'a Holdings,
    /// Cash to raise (fire sales only).
    pub cash_needed: f64,
    /// Fraction of holdings offered per step (fly to liquidity only).
    pub sell_fraction: f64,
}

/// Assets from most illiquid and risky to most liquid.
pub const LIQUIDATION_PRIORITY: [AssetId; 3] = [AssetId::RiskyAsset, AssetId::Stock, AssetId::GovBond];

/// Orders an agent's sales: risky asset, then stock, then government bond.
///
/// Fire sales size each asset to the cash still needed, crediting each sale
/// with its expected proceeds `quantity · price · P_sell`. Fly-to-liquidity
/// offers a fixed fraction of the risky and stock positions and keeps bonds.
pub fn select_liquidation_order(mode: LiquidationMode, ctx: &LiquidationContext<'_>) -> Vec<LiquidationOrder> {
    let mut out = Vec::new();
    match mode {
        LiquidationMode::FireSale => {
            let mut remaining = ctx.cash_needed;
            for asset in LIQUIDATION_PRIORITY {
                if remaining <= 0.0 {
                    break;
                }
                let avail = ctx.sellable[asset];
                let price = ctx.prices[asset];
                if avail <= 0.0 || price <= 0.0 {
                    continue;
                }
                let qty = avail.min(remaining / price);
                out.push(LiquidationOrder { asset, quantity: qty, fire_sale: true });
                remaining -= qty * price * ctx.p_sell[asset];
            }
        }
        LiquidationMode::FlyToLiquidity => {
            for asset in [AssetId::RiskyAsset, AssetId::Stock] {
                let qty = ctx.sellable[asset] * ctx.sell_fraction;
                if qty > 0.0 {
                    out.push(LiquidationOrder { asset, quantity: qty, fire_sale: false });
                }
            }
        }
    }
    out
}
