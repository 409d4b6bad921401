//! Scenario configuration: flat `section.key = value` text files.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pareto {
    pub a: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeverageDist {
    Uniform,
    Pareto,
}

/// Maximum-leverage distribution: `U(a, b)`, or Pareto with shape `a` and
/// scale `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverageLimit {
    pub dist: LeverageDist,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub banks: usize,
    pub hedge_funds: usize,
    pub mmfs: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.banks + self.hedge_funds + self.mmfs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavParams {
    pub bank: Pareto,
    pub hedge_fund: Pareto,
    pub mmf: Pareto,
}

/// Shares of stock traders by strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraderMix {
    pub noise: f64,
    pub fundamental: f64,
    pub technical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProbs {
    pub p_buy: f64,
    pub p_sell: f64,
    pub p_hold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalRange {
    pub tau_min: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnicalConfig {
    pub window: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub var_confidence: f64,
    pub var_window: usize,
    pub var_horizon: usize,
    /// VaR ceiling as a fraction of NAV.
    pub var_limit: f64,
    pub liquidity_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityConfig {
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    pub p: f64,
    pub q: f64,
    /// Step at whose start the shock hits. Defaults to the first step after
    /// warmup.
    pub at_step: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub warmup: u64,
    pub horizon: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub r_f: f64,
    pub r_r: f64,
    pub d_bar: f64,
    pub rho_ar: f64,
    pub sigma_mu: f64,
    pub kappa: f64,
    pub fire_sale_discount: f64,
    pub phi: f64,
    /// Steps per year; annual rates accrue at `rate / periods_per_year`.
    pub periods_per_year: f64,
    pub risky_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradingConfig {
    pub sell_fraction: f64,
    pub buy_fraction: f64,
}

/// Initial bank portfolios and behaviour. Fractions of own funds
/// (NAV plus deposits) unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub cash_fraction: f64,
    pub stock_fraction: f64,
    /// Own-funds risky share is drawn from `U(0, risky_own_max)`.
    pub risky_own_max: f64,
    /// Target leverage as a fraction of the bank's maximum leverage.
    pub repo_target_fraction: f64,
    /// Cash reserve and ceiling as fractions of initial NAV.
    pub cash_reserve: f64,
    pub cash_ceiling: f64,
    pub risky_buy_min_p_sell: f64,
    /// Largest single repo as a fraction of the bank's NAV.
    pub repo_chunk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeFundConfig {
    pub cash_fraction: f64,
    pub stock_fraction: f64,
    pub cash_reserve: f64,
    pub cash_ceiling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmfConfig {
    pub cash_fraction: f64,
    pub cash_reserve: f64,
    pub cash_ceiling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvencyConfig {
    pub insolvency_nav_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub gross_repo_exposure: bool,
    pub infection_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub counts: Counts,
    pub nav: NavParams,
    pub deposits: Pareto,
    pub leverage_limit: LeverageLimit,
    pub traders: TraderMix,
    pub noise: NoiseProbs,
    pub fundamental: FundamentalRange,
    pub technical: TechnicalConfig,
    pub risk: RiskConfig,
    pub liquidity: LiquidityConfig,
    pub shock: ShockConfig,
    pub run: RunConfig,
    pub market: MarketConfig,
    pub trading: TradingConfig,
    pub bank: BankConfig,
    pub hedge_fund: HedgeFundConfig,
    pub mmf: MmfConfig,
    pub solvency: SolvencyConfig,
    pub network: NetworkConfig,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            counts: Counts { banks: 100, hedge_funds: 200, mmfs: 200 },
            nav: NavParams {
                bank: Pareto { a: 3.0, m: 1e8 },
                hedge_fund: Pareto { a: 3.0, m: 1e7 },
                mmf: Pareto { a: 3.0, m: 2e8 },
            },
            deposits: Pareto { a: 3.0, m: 1.0 },
            leverage_limit: LeverageLimit { dist: LeverageDist::Uniform, a: 4.0, b: 7.0 },
            traders: TraderMix { noise: 0.5, fundamental: 0.25, technical: 0.25 },
            noise: NoiseProbs { p_buy: 0.4, p_sell: 0.4, p_hold: 0.2 },
            fundamental: FundamentalRange { tau_min: 0.1, tau_max: 0.5 },
            technical: TechnicalConfig { window: 10, threshold: 0.05 },
            risk: RiskConfig { var_confidence: 1.645, var_window: 20, var_horizon: 1, var_limit: 0.05, liquidity_floor: 0.5 },
            liquidity: LiquidityConfig { horizon: 3 },
            shock: ShockConfig { p: 0.8, q: 0.3, at_step: None },
            run: RunConfig { warmup: 50, horizon: 200 },
            market: MarketConfig {
                r_f: 0.10,
                r_r: 0.11,
                d_bar: 10.0,
                rho_ar: 0.95,
                sigma_mu: 0.5,
                kappa: 1.0,
                fire_sale_discount: 0.3,
                phi: 2e7,
                periods_per_year: 250.0,
                risky_price: 100.0,
            },
            trading: TradingConfig { sell_fraction: 0.1, buy_fraction: 0.1 },
            bank: BankConfig {
                cash_fraction: 0.05,
                stock_fraction: 0.03,
                risky_own_max: 0.5,
                repo_target_fraction: 0.72,
                cash_reserve: 0.05,
                cash_ceiling: 0.1,
                risky_buy_min_p_sell: 0.9,
                repo_chunk: 0.5,
            },
            hedge_fund: HedgeFundConfig { cash_fraction: 0.4, stock_fraction: 0.4, cash_reserve: 0.05, cash_ceiling: 0.8 },
            mmf: MmfConfig { cash_fraction: 0.6, cash_reserve: 0.05, cash_ceiling: 1.0 },
            solvency: SolvencyConfig { insolvency_nav_floor: 0.0 },
            network: NetworkConfig { gross_repo_exposure: false, infection_threshold: 0.9 },
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn shock_step(&self) -> u64 {
        self.shock.at_step.unwrap_or(self.run.warmup + 1)
    }

    pub fn total_steps(&self) -> u64 {
        self.run.warmup + self.run.horizon
    }
}

/// One offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("invalid scenario: {}", join(.0))]
    Validation(Vec<FieldError>),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl ScenarioError {
    /// Keys named by the error, for diagnostics and tests.
    pub fn keys(&self) -> Vec<&str> {
        match self {
            ScenarioError::UnknownKey { key, .. } => vec![key.as_str()],
            ScenarioError::Validation(errs) => errs.iter().map(|e| e.key.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

/// Text form of one configuration value.
trait ConfigValue: Sized {
    fn parse(raw: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(raw: &str) -> Result<Self, String> {
        let v: f64 = raw.parse().map_err(|_| format!("`{raw}` is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("`{raw}` is not finite"))
        }
    }
    fn render(&self) -> String {
        // `{}` on f64 prints the shortest string that parses back exactly.
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse().map_err(|_| format!("`{raw}` is not a non-negative integer"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse().map_err(|_| format!("`{raw}` is not a non-negative integer"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for Option<u64> {
    fn parse(raw: &str) -> Result<Self, String> {
        if raw == "auto" {
            Ok(None)
        } else {
            u64::parse(raw).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.to_string())
    }
}

impl ConfigValue for bool {
    fn parse(raw: &str) -> Result<Self, String> {
        raw.parse().map_err(|_| format!("`{raw}` is not true or false"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for LeverageDist {
    fn parse(raw: &str) -> Result<Self, String> {
        match raw {
            "uniform" => Ok(LeverageDist::Uniform),
            "pareto" => Ok(LeverageDist::Pareto),
            _ => Err(format!("`{raw}` is not uniform or pareto")),
        }
    }
    fn render(&self) -> String {
        match self {
            LeverageDist::Uniform => "uniform".into(),
            LeverageDist::Pareto => "pareto".into(),
        }
    }
}

macro_rules! scenario_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        /// Every recognised key, in file order.
        pub const KEYS: &[&str] = &[$($key),*];

        fn set_key(s: &mut Scenario, key: &str, raw: &str) -> Option<Result<(), String>> {
            match key {
                $($key => Some(ConfigValue::parse(raw).map(|v| s.$($field).+ = v)),)*
                _ => None,
            }
        }

        fn entries(s: &Scenario) -> Vec<(&'static str, String)> {
            vec![$(($key, ConfigValue::render(&s.$($field).+))),*]
        }
    };
}

scenario_keys! {
    "counts.banks" => counts.banks;
    "counts.hedge_funds" => counts.hedge_funds;
    "counts.mmfs" => counts.mmfs;
    "nav.bank.a" => nav.bank.a;
    "nav.bank.m" => nav.bank.m;
    "nav.hedge_fund.a" => nav.hedge_fund.a;
    "nav.hedge_fund.m" => nav.hedge_fund.m;
    "nav.mmf.a" => nav.mmf.a;
    "nav.mmf.m" => nav.mmf.m;
    "deposits.a" => deposits.a;
    "deposits.m" => deposits.m;
    "leverage_limit.dist" => leverage_limit.dist;
    "leverage_limit.a" => leverage_limit.a;
    "leverage_limit.b" => leverage_limit.b;
    "traders.noise" => traders.noise;
    "traders.fundamental" => traders.fundamental;
    "traders.technical" => traders.technical;
    "noise.p_buy" => noise.p_buy;
    "noise.p_sell" => noise.p_sell;
    "noise.p_hold" => noise.p_hold;
    "fundamental.tau_min" => fundamental.tau_min;
    "fundamental.tau_max" => fundamental.tau_max;
    "technical.window" => technical.window;
    "technical.threshold" => technical.threshold;
    "risk.var_confidence" => risk.var_confidence;
    "risk.var_window" => risk.var_window;
    "risk.var_horizon" => risk.var_horizon;
    "risk.var_limit" => risk.var_limit;
    "risk.liquidity_floor" => risk.liquidity_floor;
    "liquidity.horizon" => liquidity.horizon;
    "shock.p" => shock.p;
    "shock.q" => shock.q;
    "shock.at_step" => shock.at_step;
    "run.warmup" => run.warmup;
    "run.horizon" => run.horizon;
    "market.r_f" => market.r_f;
    "market.r_r" => market.r_r;
    "market.d_bar" => market.d_bar;
    "market.rho_ar" => market.rho_ar;
    "market.sigma_mu" => market.sigma_mu;
    "market.kappa" => market.kappa;
    "market.fire_sale_discount" => market.fire_sale_discount;
    "market.phi" => market.phi;
    "market.periods_per_year" => market.periods_per_year;
    "market.risky_price" => market.risky_price;
    "trading.sell_fraction" => trading.sell_fraction;
    "trading.buy_fraction" => trading.buy_fraction;
    "bank.cash_fraction" => bank.cash_fraction;
    "bank.stock_fraction" => bank.stock_fraction;
    "bank.risky_own_max" => bank.risky_own_max;
    "bank.repo_target_fraction" => bank.repo_target_fraction;
    "bank.cash_reserve" => bank.cash_reserve;
    "bank.cash_ceiling" => bank.cash_ceiling;
    "bank.risky_buy_min_p_sell" => bank.risky_buy_min_p_sell;
    "bank.repo_chunk" => bank.repo_chunk;
    "hedge_fund.cash_fraction" => hedge_fund.cash_fraction;
    "hedge_fund.stock_fraction" => hedge_fund.stock_fraction;
    "hedge_fund.cash_reserve" => hedge_fund.cash_reserve;
    "hedge_fund.cash_ceiling" => hedge_fund.cash_ceiling;
    "mmf.cash_fraction" => mmf.cash_fraction;
    "mmf.cash_reserve" => mmf.cash_reserve;
    "mmf.cash_ceiling" => mmf.cash_ceiling;
    "solvency.insolvency_nav_floor" => solvency.insolvency_nav_floor;
    "network.gross_repo_exposure" => network.gross_repo_exposure;
    "network.infection_threshold" => network.infection_threshold;
    "seed" => seed;
}

/// Parses scenario text. Unset keys keep their defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::default();
    let mut lines: HashMap<&'static str, usize> = HashMap::new();
    let mut errors = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ScenarioError::Parse { line: line_no, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ScenarioError::UnknownKey { key: key.to_string(), line: line_no });
        };
        if let Some(prev) = lines.insert(known, line_no) {
            return Err(ScenarioError::Parse { line: line_no, message: format!("`{key}` already set on line {prev}") });
        }
        if let Some(Err(message)) = set_key(&mut s, key, value) {
            errors.push(FieldError { key: key.to_string(), line: Some(line_no), message });
        }
    }
    if !errors.is_empty() {
        return Err(ScenarioError::Validation(errors));
    }
    validate_with_lines(&s, &lines)?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text)
}

/// Renders every key, so the output fully determines the scenario.
pub fn write_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    for (key, value) in entries(s) {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    }
    out
}

/// Sets one key from its text form, as accepted in a scenario file.
pub fn set_scenario_key(s: &mut Scenario, key: &str, value: &str) -> Result<(), ScenarioError> {
    match set_key(s, key, value) {
        None => Err(ScenarioError::UnknownKey { key: key.to_string(), line: 0 }),
        Some(Err(message)) => Err(ScenarioError::Validation(vec![FieldError { key: key.to_string(), line: None, message }])),
        Some(Ok(())) => Ok(()),
    }
}

pub fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    validate_with_lines(s, &HashMap::new())
}

fn validate_with_lines(s: &Scenario, lines: &HashMap<&'static str, usize>) -> Result<(), ScenarioError> {
    let mut errors = Vec::new();
    let mut check = |ok: bool, key: &'static str, message: &str| {
        if !ok {
            errors.push(FieldError { key: key.to_string(), line: lines.get(key).copied(), message: message.to_string() });
        }
    };
    let unit = |v: f64| (0.0..=1.0).contains(&v);

    check(s.counts.banks >= 1, "counts.banks", "need at least one bank");
    for (key, v) in [
        ("nav.bank.a", s.nav.bank.a),
        ("nav.bank.m", s.nav.bank.m),
        ("nav.hedge_fund.a", s.nav.hedge_fund.a),
        ("nav.hedge_fund.m", s.nav.hedge_fund.m),
        ("nav.mmf.a", s.nav.mmf.a),
        ("nav.mmf.m", s.nav.mmf.m),
        ("deposits.a", s.deposits.a),
        ("deposits.m", s.deposits.m),
        ("leverage_limit.a", s.leverage_limit.a),
        ("leverage_limit.b", s.leverage_limit.b),
        ("risk.var_confidence", s.risk.var_confidence),
        ("risk.var_limit", s.risk.var_limit),
        ("market.r_f", s.market.r_f),
        ("market.d_bar", s.market.d_bar),
        ("market.phi", s.market.phi),
        ("market.periods_per_year", s.market.periods_per_year),
        ("market.risky_price", s.market.risky_price),
    ] {
        check(v > 0.0, key, "must be positive");
    }
    if s.leverage_limit.dist == LeverageDist::Uniform {
        check(s.leverage_limit.b >= s.leverage_limit.a, "leverage_limit.b", "must be at least leverage_limit.a");
    }
    check(s.leverage_limit.a > 1.0, "leverage_limit.a", "leverage limits must exceed 1");

    let mix = [s.traders.noise, s.traders.fundamental, s.traders.technical];
    check(mix.iter().all(|&v| v >= 0.0), "traders.noise", "trader fractions must be non-negative");
    check((mix.iter().sum::<f64>() - 1.0).abs() < 1e-9, "traders.noise", "trader fractions must sum to 1");
    let probs = [s.noise.p_buy, s.noise.p_sell, s.noise.p_hold];
    check(probs.iter().all(|&v| unit(v)), "noise.p_buy", "probabilities must lie in [0, 1]");
    check((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9, "noise.p_buy", "noise probabilities must sum to 1");
    check(s.fundamental.tau_min >= 0.0, "fundamental.tau_min", "must be non-negative");
    check(s.fundamental.tau_max >= s.fundamental.tau_min, "fundamental.tau_max", "must be at least tau_min");
    check(s.technical.window >= 1, "technical.window", "must be at least 1");
    check(s.technical.threshold >= 0.0, "technical.threshold", "must be non-negative");

    check(s.risk.var_window >= 2, "risk.var_window", "must be at least 2");
    check(s.risk.var_horizon >= 1, "risk.var_horizon", "must be at least 1");
    check(unit(s.risk.liquidity_floor), "risk.liquidity_floor", "must lie in [0, 1]");
    check(s.liquidity.horizon >= 1, "liquidity.horizon", "must be at least 1");

    check(unit(s.shock.p), "shock.p", "must lie in [0, 1]");
    check(unit(s.shock.q), "shock.q", "must lie in [0, 1]");
    check(s.shock.at_step != Some(0), "shock.at_step", "must be at least 1");

    check(s.market.r_r >= 0.0, "market.r_r", "must be non-negative");
    check((0.0..1.0).contains(&s.market.rho_ar), "market.rho_ar", "must lie in [0, 1)");
    check(s.market.sigma_mu >= 0.0, "market.sigma_mu", "must be non-negative");
    check(s.market.kappa >= 0.0, "market.kappa", "must be non-negative");
    check(unit(s.market.fire_sale_discount), "market.fire_sale_discount", "must lie in [0, 1]");

    for (key, v) in [
        ("trading.sell_fraction", s.trading.sell_fraction),
        ("trading.buy_fraction", s.trading.buy_fraction),
        ("bank.cash_fraction", s.bank.cash_fraction),
        ("bank.stock_fraction", s.bank.stock_fraction),
        ("bank.risky_own_max", s.bank.risky_own_max),
        ("bank.repo_target_fraction", s.bank.repo_target_fraction),
        ("bank.risky_buy_min_p_sell", s.bank.risky_buy_min_p_sell),
        ("bank.repo_chunk", s.bank.repo_chunk),
        ("hedge_fund.cash_fraction", s.hedge_fund.cash_fraction),
        ("hedge_fund.stock_fraction", s.hedge_fund.stock_fraction),
        ("mmf.cash_fraction", s.mmf.cash_fraction),
        ("network.infection_threshold", s.network.infection_threshold),
    ] {
        check(unit(v), key, "must lie in [0, 1]");
    }
    check(
        s.bank.cash_fraction + s.bank.stock_fraction + s.bank.risky_own_max <= 1.0 + 1e-12,
        "bank.risky_own_max",
        "bank cash, stock and risky fractions exceed 1",
    );
    check(
        s.hedge_fund.cash_fraction + s.hedge_fund.stock_fraction <= 1.0 + 1e-12,
        "hedge_fund.stock_fraction",
        "hedge fund cash and stock fractions exceed 1",
    );
    check(s.network.infection_threshold > 0.0, "network.infection_threshold", "must be positive");
    for (key, reserve, ceiling) in [
        ("bank.cash_ceiling", s.bank.cash_reserve, s.bank.cash_ceiling),
        ("hedge_fund.cash_ceiling", s.hedge_fund.cash_reserve, s.hedge_fund.cash_ceiling),
        ("mmf.cash_ceiling", s.mmf.cash_reserve, s.mmf.cash_ceiling),
    ] {
        check(reserve >= 0.0 && ceiling >= reserve, key, "ceiling must be at least the non-negative reserve");
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::Validation(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = parse_scenario("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!((s.counts.banks, s.counts.hedge_funds, s.counts.mmfs), (100, 200, 200));
        assert_eq!((s.shock.p, s.shock.q), (0.8, 0.3));
        assert_eq!(s.shock_step(), 51);
    }

    #[test]
    fn null_shock_file() {
        let s = parse_scenario("# no crisis\nshock.p = 1.0\nshock.q = 0.0  # none\n").unwrap();
        assert_eq!((s.shock.p, s.shock.q), (1.0, 0.0));
    }

    #[test]
    fn negative_count_names_key_and_line() {
        let err = parse_scenario("\ncounts.banks = -5\n").unwrap_err();
        match &err {
            ScenarioError::Validation(errs) => {
                assert_eq!(errs[0].key, "counts.banks");
                assert_eq!(errs[0].line, Some(2));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("counts.banks"));
    }

    #[test]
    fn range_errors_carry_lines() {
        let err = parse_scenario("shock.p = 1.5\n").unwrap_err();
        match err {
            ScenarioError::Validation(errs) => {
                assert_eq!(errs[0].key, "shock.p");
                assert_eq!(errs[0].line, Some(1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_and_malformed_line() {
        assert!(matches!(parse_scenario("a\nshock.z = 1"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_scenario("shock.z = 1"),
            Err(ScenarioError::UnknownKey { ref key, line: 1 }) if key == "shock.z"
        ));
    }

    #[test]
    fn round_trip_defaults() {
        let s = Scenario::default();
        assert_eq!(parse_scenario(&write_scenario(&s)).unwrap(), s);
        assert_eq!(entries(&s).len(), KEYS.len());
    }
}
