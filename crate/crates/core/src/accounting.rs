//! Balance sheets, agent identity and state, and trade settlement.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetId, Holdings, PerAsset, Prices, Settlement, Shortfall};
use crate::strategy::StrategyAssignment;

/// Amounts below this many currency units are treated as settled.
pub const DUST: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId(pub usize);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Bank,
    MoneyMarketFund,
    HedgeFund,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolvencyState {
    Solvent,
    Defaulted,
    Bankrupt,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("invalid price {price} for held asset {}", asset.name())]
    InvalidPrice { asset: AssetId, price: f64 },
    #[error("leverage undefined for non-positive NAV {nav}")]
    InsolventLeverage { nav: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskLimits {
    pub max_leverage: f64,
    /// VaR ceiling as a fraction of NAV.
    pub var_limit: f64,
    /// Minimum liquidity-weighted share of total assets.
    pub liquidity_floor: f64,
}

/// Assets and liabilities of one agent.
///
/// Funding contracts live in the funding registry; the sheet carries their
/// aggregate face values so that NAV can be computed from the sheet alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BalanceSheet {
    pub cash: f64,
    pub holdings: Holdings,
    pub deposits: f64,
    pub repo_borrowed: f64,
    pub loans_borrowed: f64,
    /// Overdue amounts from terminated repos and unpaid loans.
    pub dues_owed: f64,
    pub repo_lent: f64,
    pub loans_lent: f64,
    pub dues_receivable: f64,
    /// Collateral pledged under open repos. Never sold while pledged.
    pub encumbered: Holdings,
    /// Collateral still pledged under terminated repos awaiting repayment.
    pub pledged_due: Holdings,
}

impl BalanceSheet {
    pub fn receivables(&self) -> f64 {
        self.repo_lent + self.loans_lent + self.dues_receivable
    }

    pub fn total_liabilities(&self) -> f64 {
        self.deposits + self.repo_borrowed + self.loans_borrowed + self.dues_owed
    }

    pub fn holdings_value(&self, prices: &Prices) -> Result<f64, AccountingError> {
        let mut total = 0.0;
        for (asset, qty) in self.holdings.iter() {
            if qty == 0.0 {
                continue;
            }
            let p = prices[asset];
            if !(p.is_finite() && p >= 0.0) {
                return Err(AccountingError::InvalidPrice { asset, price: p });
            }
            total += qty * p;
        }
        Ok(total)
    }

    /// Cash plus marked holdings plus funding receivables at face value.
    pub fn total_assets(&self, prices: &Prices) -> Result<f64, AccountingError> {
        Ok(self.cash + self.holdings_value(prices)? + self.receivables())
    }

    /// Quantity that may be placed in a sell order.
    pub fn sellable(&self, asset: AssetId) -> f64 {
        (self.holdings[asset] - self.encumbered[asset]).max(0.0)
    }

    pub fn sellable_holdings(&self) -> Holdings {
        let mut out = PerAsset::splat(0.0);
        for a in AssetId::ALL {
            out[a] = self.sellable(a);
        }
        out
    }

    /// Restores `pledged_due ≤ holdings − encumbered` after sales of
    /// collateral backing terminated repos.
    pub fn reconcile_pledges(&mut self) {
        for a in AssetId::ALL {
            let free = (self.holdings[a] - self.encumbered[a]).max(0.0);
            if self.pledged_due[a] > free {
                self.pledged_due[a] = free;
            }
        }
    }
}

pub fn compute_nav(sheet: &BalanceSheet, prices: &Prices) -> Result<f64, AccountingError> {
    Ok(sheet.total_assets(prices)? - sheet.total_liabilities())
}

pub fn compute_leverage(sheet: &BalanceSheet, prices: &Prices) -> Result<f64, AccountingError> {
    let ta = sheet.total_assets(prices)?;
    let nav = ta - sheet.total_liabilities();
    if nav <= 0.0 {
        return Err(AccountingError::InsolventLeverage { nav });
    }
    Ok(ta / nav)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub sheet: BalanceSheet,
    pub state: SolvencyState,
    pub strategy: StrategyAssignment,
    pub limits: RiskLimits,
    pub fly_to_liquidity: bool,
    pub initial_nav: f64,
    /// Trailing NAV marks used for the portfolio volatility estimate.
    pub nav_history: VecDeque<f64>,
}

impl Agent {
    pub fn new(id: AgentId, kind: AgentKind, sheet: BalanceSheet, strategy: StrategyAssignment, limits: RiskLimits) -> Self {
        Agent {
            id,
            kind,
            sheet,
            state: SolvencyState::Solvent,
            strategy,
            limits,
            fly_to_liquidity: false,
            initial_nav: 0.0,
            nav_history: VecDeque::new(),
        }
    }

    pub fn is_active(&self) -> bool {
        self.state != SolvencyState::Bankrupt
    }

    pub fn nav(&self, prices: &Prices) -> Result<f64, AccountingError> {
        compute_nav(&self.sheet, prices)
    }

    pub fn push_nav(&mut self, nav: f64, capacity: usize) {
        self.nav_history.push_back(nav);
        while self.nav_history.len() > capacity {
            self.nav_history.pop_front();
        }
    }
}

/// Cash and quantities entering (positive) or leaving the agent population.
///
/// Dividends, interest, the government-bond desk and risky-asset issuance
/// are the only counterparties outside the population; every other transfer
/// is between agents and nets to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalFlows {
    pub cash: f64,
    pub quantity: Holdings,
}

impl ExternalFlows {
    pub fn add(&mut self, other: &ExternalFlows) {
        self.cash += other.cash;
        for a in AssetId::ALL {
            self.quantity[a] += other.quantity[a];
        }
    }
}

/// Sells up to `max_value` of unencumbered bonds to the external desk at
/// `bond_price`. Returns the cash raised.
pub fn sell_bonds_at_par(agent: &mut Agent, max_value: f64, bond_price: f64, flows: &mut ExternalFlows) -> f64 {
    if max_value <= 0.0 || bond_price <= 0.0 {
        return 0.0;
    }
    let qty = agent.sheet.sellable(AssetId::GovBond).min(max_value / bond_price);
    if qty <= 0.0 {
        return 0.0;
    }
    let cash = qty * bond_price;
    agent.sheet.holdings[AssetId::GovBond] -= qty;
    agent.sheet.cash += cash;
    agent.sheet.reconcile_pledges();
    flows.cash += cash;
    flows.quantity[AssetId::GovBond] -= qty;
    cash
}

/// Borrows two distinct agents mutably.
pub fn pair_mut(agents: &mut [Agent], a: AgentId, b: AgentId) -> (&mut Agent, &mut Agent) {
    assert_ne!(a, b, "pair_mut needs distinct agents");
    if a.0 < b.0 {
        let (lo, hi) = agents.split_at_mut(b.0);
        (&mut lo[a.0], &mut hi[0])
    } else {
        let (lo, hi) = agents.split_at_mut(a.0);
        (&mut hi[0], &mut lo[b.0])
    }
}

/// Moves `quantity` of `asset` from seller to buyer against cash at `price`.
///
/// The fill is clamped to what the seller can deliver (unencumbered
/// holdings) and what the buyer can pay; the remainder is reported as
/// rejected.
pub fn apply_trade(buyer: &mut Agent, seller: &mut Agent, asset: AssetId, quantity: f64, price: f64) -> Settlement {
    let mut settlement = Settlement {
        buyer: buyer.id,
        seller: seller.id,
        asset,
        price,
        quantity: 0.0,
        rejected: 0.0,
        shortfall: None,
    };
    if quantity <= 0.0 || !quantity.is_finite() {
        return settlement;
    }
    let deliverable = seller.sheet.sellable(asset);
    let affordable = if price > 0.0 { buyer.sheet.cash.max(0.0) / price } else { f64::INFINITY };
    let mut fill = quantity;
    if deliverable < fill {
        fill = deliverable;
        settlement.shortfall = Some(Shortfall::SellerHoldings);
    }
    if affordable < fill {
        fill = affordable;
        settlement.shortfall = Some(Shortfall::BuyerCash);
    }
    let fill = fill.max(0.0);
    let cash = (fill * price).min(buyer.sheet.cash.max(0.0));
    buyer.sheet.cash -= cash;
    seller.sheet.cash += cash;
    buyer.sheet.holdings[asset] += fill;
    seller.sheet.holdings[asset] -= fill;
    if seller.sheet.holdings[asset] < 0.0 {
        seller.sheet.holdings[asset] = 0.0;
    }
    seller.sheet.reconcile_pledges();
    settlement.quantity = fill;
    settlement.rejected = quantity - fill;
    settlement
}

/// Market facts needed to classify an agent's solvency.
#[derive(Debug, Clone, Copy)]
pub struct SolvencyContext<'a> {
    pub prices: &'a Prices,
    pub p_sell: &'a PerAsset<f64>,
    pub nav_floor: f64,
}

/// Summary of an agent's position against its due obligations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvencyInputs {
    pub due: f64,
    pub cash: f64,
    /// Market value of unencumbered holdings whose selling probability is
    /// positive.
    pub liquidatable: f64,
    pub nav: f64,
    pub nav_floor: f64,
}

/// The solvency rule. Bankrupt is absorbing.
pub fn next_solvency(current: SolvencyState, inputs: &SolvencyInputs) -> SolvencyState {
    use SolvencyState::*;
    if current == Bankrupt {
        return Bankrupt;
    }
    if inputs.nav < inputs.nav_floor {
        return Bankrupt;
    }
    if inputs.due > DUST {
        if inputs.cash + DUST >= inputs.due {
            // Payable as it stands; settlement will clear it.
            return current;
        }
        if inputs.cash + inputs.liquidatable < inputs.due {
            return Bankrupt;
        }
        return Defaulted;
    }
    match current {
        Defaulted if inputs.nav > inputs.nav_floor => Solvent,
        other => other,
    }
}

pub fn solvency_inputs(agent: &Agent, ctx: &SolvencyContext<'_>) -> SolvencyInputs {
    let sheet = &agent.sheet;
    let liquidatable = AssetId::ALL
        .iter()
        .filter(|&&a| ctx.p_sell[a] > 0.0)
        .map(|&a| sheet.sellable(a) * ctx.prices[a])
        .sum();
    SolvencyInputs {
        due: sheet.dues_owed,
        cash: sheet.cash,
        liquidatable,
        nav: compute_nav(sheet, ctx.prices).unwrap_or(f64::NEG_INFINITY),
        nav_floor: ctx.nav_floor,
    }
}

/// Applies the solvency rule to `agent` and returns its new state.
pub fn transition_solvency(agent: &mut Agent, ctx: &SolvencyContext<'_>) -> SolvencyState {
    let inputs = solvency_inputs(agent, ctx);
    agent.state = next_solvency(agent.state, &inputs);
    agent.state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::StrategyAssignment;

    fn prices(bond: f64, stock: f64, risky: f64) -> Prices {
        PerAsset([bond, stock, risky])
    }

    fn agent(id: usize, sheet: BalanceSheet) -> Agent {
        Agent::new(
            AgentId(id),
            AgentKind::Bank,
            sheet,
            StrategyAssignment::default(),
            RiskLimits { max_leverage: 7.0, var_limit: 0.05, liquidity_floor: 0.5 },
        )
    }

    #[test]
    fn nav_examples() {
        let p = prices(1.0, 50.0, 100.0);
        let s = BalanceSheet { cash: 100.0, ..Default::default() };
        assert_eq!(compute_nav(&s, &p).unwrap(), 100.0);

        let mut s = BalanceSheet::default();
        s.holdings[AssetId::Stock] = 10.0;
        s.repo_borrowed = 300.0;
        assert_eq!(compute_nav(&s, &p).unwrap(), 200.0);

        let p = prices(1.0, 20.0, 100.0);
        assert_eq!(compute_nav(&s, &p).unwrap(), -100.0);
    }

    #[test]
    fn nav_rejects_bad_price_for_held_asset() {
        let mut s = BalanceSheet::default();
        s.holdings[AssetId::Stock] = 1.0;
        let p = prices(1.0, f64::NAN, 1.0);
        assert!(matches!(compute_nav(&s, &p), Err(AccountingError::InvalidPrice { asset: AssetId::Stock, .. })));
        // Unheld assets are not priced.
        s.holdings[AssetId::Stock] = 0.0;
        assert_eq!(compute_nav(&s, &p).unwrap(), 0.0);
    }

    #[test]
    fn leverage_examples() {
        let p = prices(1.0, 1.0, 1.0);
        let s = BalanceSheet { cash: 250.0, ..Default::default() };
        assert_eq!(compute_leverage(&s, &p).unwrap(), 1.0);

        let s = BalanceSheet { cash: 500.0, deposits: 400.0, ..Default::default() };
        assert_eq!(compute_leverage(&s, &p).unwrap(), 5.0);

        let s = BalanceSheet { cash: 100.0, deposits: 100.0, ..Default::default() };
        assert!(matches!(compute_leverage(&s, &p), Err(AccountingError::InsolventLeverage { .. })));
    }

    #[test]
    fn zero_quantity_trade_is_noop() {
        let mut b = agent(0, BalanceSheet { cash: 100.0, ..Default::default() });
        let mut sh = BalanceSheet::default();
        sh.holdings[AssetId::Stock] = 5.0;
        let mut s = agent(1, sh);
        let (b0, s0) = (b.sheet.clone(), s.sheet.clone());
        let st = apply_trade(&mut b, &mut s, AssetId::Stock, 0.0, 5.0);
        assert_eq!(st.quantity, 0.0);
        assert_eq!(b.sheet, b0);
        assert_eq!(s.sheet, s0);
    }

    #[test]
    fn trade_moves_cash_and_units() {
        let mut b = agent(0, BalanceSheet { cash: 100.0, ..Default::default() });
        let mut sh = BalanceSheet { cash: 10.0, ..Default::default() };
        sh.holdings[AssetId::Stock] = 20.0;
        let mut s = agent(1, sh);
        let st = apply_trade(&mut b, &mut s, AssetId::Stock, 10.0, 5.0);
        assert_eq!(st.quantity, 10.0);
        assert_eq!(b.sheet.cash, 50.0);
        assert_eq!(s.sheet.cash, 60.0);
        assert_eq!(b.sheet.holdings[AssetId::Stock], 10.0);
        assert_eq!(s.sheet.holdings[AssetId::Stock], 10.0);
    }

    #[test]
    fn trade_clamps_to_seller_holdings() {
        let mut b = agent(0, BalanceSheet { cash: 1000.0, ..Default::default() });
        let mut sh = BalanceSheet::default();
        sh.holdings[AssetId::Stock] = 3.0;
        let mut s = agent(1, sh);
        let st = apply_trade(&mut b, &mut s, AssetId::Stock, 10.0, 1.0);
        assert_eq!(st.quantity, 3.0);
        assert_eq!(st.rejected, 7.0);
        assert_eq!(st.shortfall, Some(Shortfall::SellerHoldings));
        // Ledger replay: totals unchanged.
        assert_eq!(b.sheet.cash + s.sheet.cash, 1000.0);
        assert_eq!(b.sheet.holdings[AssetId::Stock] + s.sheet.holdings[AssetId::Stock], 3.0);
    }

    #[test]
    fn trade_never_sells_encumbered_units() {
        let mut b = agent(0, BalanceSheet { cash: 1000.0, ..Default::default() });
        let mut sh = BalanceSheet::default();
        sh.holdings[AssetId::RiskyAsset] = 10.0;
        sh.encumbered[AssetId::RiskyAsset] = 8.0;
        let mut s = agent(1, sh);
        let st = apply_trade(&mut b, &mut s, AssetId::RiskyAsset, 10.0, 1.0);
        assert_eq!(st.quantity, 2.0);
    }

    #[test]
    fn trade_clamps_to_buyer_cash() {
        let mut b = agent(0, BalanceSheet { cash: 20.0, ..Default::default() });
        let mut sh = BalanceSheet::default();
        sh.holdings[AssetId::Stock] = 10.0;
        let mut s = agent(1, sh);
        let st = apply_trade(&mut b, &mut s, AssetId::Stock, 10.0, 5.0);
        assert_eq!(st.quantity, 4.0);
        assert_eq!(st.shortfall, Some(Shortfall::BuyerCash));
        assert!(b.sheet.cash.abs() < 1e-12);
    }

    #[test]
    fn pair_mut_either_order() {
        let mut v = vec![agent(0, BalanceSheet::default()), agent(1, BalanceSheet::default())];
        let (x, y) = pair_mut(&mut v, AgentId(1), AgentId(0));
        assert_eq!((x.id, y.id), (AgentId(1), AgentId(0)));
    }

    fn inputs(due: f64, cash: f64, liquidatable: f64) -> SolvencyInputs {
        SolvencyInputs { due, cash, liquidatable, nav: 1000.0, nav_floor: 0.0 }
    }

    #[test]
    fn solvency_rule_traces() {
        use SolvencyState::*;
        assert_eq!(next_solvency(Solvent, &inputs(0.0, 100.0, 0.0)), Solvent);
        assert_eq!(next_solvency(Solvent, &inputs(100.0, 150.0, 0.0)), Solvent);
        assert_eq!(next_solvency(Solvent, &inputs(100.0, 40.0, 200.0)), Defaulted);
        assert_eq!(next_solvency(Solvent, &inputs(100.0, 40.0, 0.0)), Bankrupt);
        assert_eq!(next_solvency(Defaulted, &inputs(0.0, 10.0, 0.0)), Solvent);
        assert_eq!(next_solvency(Bankrupt, &inputs(0.0, 1e9, 1e9)), Bankrupt);
        let mut neg = inputs(0.0, 1.0, 0.0);
        neg.nav = -1.0;
        assert_eq!(next_solvency(Solvent, &neg), Bankrupt);
    }

    #[test]
    fn transition_uses_selling_probability() {
        let mut sh = BalanceSheet { cash: 40.0, dues_owed: 100.0, ..Default::default() };
        sh.holdings[AssetId::RiskyAsset] = 2.0;
        let p = prices(1.0, 100.0, 100.0);
        let mut a = agent(0, sh.clone());
        let liquid = PerAsset([1.0, 1.0, 0.5]);
        let ctx = SolvencyContext { prices: &p, p_sell: &liquid, nav_floor: -1e12 };
        assert_eq!(transition_solvency(&mut a, &ctx), SolvencyState::Defaulted);

        let mut a = agent(0, sh);
        let frozen = PerAsset([1.0, 1.0, 0.0]);
        let ctx = SolvencyContext { prices: &p, p_sell: &frozen, nav_floor: -1e12 };
        assert_eq!(transition_solvency(&mut a, &ctx), SolvencyState::Bankrupt);
    }
}
