//! The market, its per-step loop, shock injection and the run driver.

mod build;

use std::collections::VecDeque;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{
    apply_trade, compute_leverage, compute_nav, pair_mut, sell_bonds_at_par, solvency_inputs, next_solvency, Agent,
    AgentId, AgentKind, ExternalFlows, SolvencyContext, SolvencyState, DUST,
};
use crate::assets::{
    apply_fire_sale_discount, clear_orders_fifo, order_imbalance, step_dividend, update_stock_price, AssetId,
    DividendState, OrderBook, PerAsset, Prices, Rates, Side, StepVolume,
};
use crate::funding::{FundingRegistry, RepoEvent, SettlementParams};
use crate::risk::{portfolio_var, selling_probability, VarParams};
use crate::rng::{indexed_stream, stream};
use crate::scenario::{validate, Scenario, ScenarioError};
use crate::strategy::{
    fundamental_decision, noise_decision, select_liquidation_order, technical_decision_from_history, Decision,
    LiquidationContext, LiquidationMode, StockTrader,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    /// The risky asset falls to this fraction of its price.
    pub p: f64,
    /// The risky asset's selling probability falls by this fraction.
    pub q: f64,
    pub at_step: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("shock already applied")]
    ShockAlreadyApplied,
    #[error("shock not applied yet")]
    ShockNotApplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskCheck {
    WithinLimits,
    FlyToLiquidity,
}

/// Whole-market state. Owned by a single run.
#[derive(Debug, Clone)]
pub struct Market {
    pub step: u64,
    pub agents: Vec<Agent>,
    pub prices: Prices,
    pub p_sell: Prices,
    pub dividend: DividendState,
    pub last_dividend: f64,
    pub rates: Rates,
    pub books: PerAsset<OrderBook>,
    /// Stock prices, oldest first, ending with the current price.
    pub stock_history: VecDeque<f64>,
    stock_history_len: usize,
    pub funding: FundingRegistry,
    /// Cash each agent keeps on hand, and the level above which it buys bonds.
    pub reserve: Vec<f64>,
    pub ceiling: Vec<f64>,
    pub scenario: Scenario,
    pub shock_applied: bool,
}

impl Market {
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Market {
        build::build_market(scenario, seed)
    }

    pub fn accrual(&self) -> f64 {
        1.0 / self.scenario.market.periods_per_year
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for a in &self.agents {
            match a.state {
                SolvencyState::Solvent => c.0 += 1,
                SolvencyState::Defaulted => c.1 += 1,
                SolvencyState::Bankrupt => c.2 += 1,
            }
        }
        c
    }

    fn push_stock_price(&mut self, price: f64) {
        self.stock_history.push_back(price);
        while self.stock_history.len() > self.stock_history_len + 1 {
            self.stock_history.pop_front();
        }
    }

    /// Mean leverage of banks that are not bankrupt and have positive NAV.
    pub fn average_bank_leverage(&self) -> f64 {
        let levs: Vec<f64> = self
            .agents
            .iter()
            .filter(|a| a.kind == AgentKind::Bank && a.is_active())
            .filter_map(|a| compute_leverage(&a.sheet, &self.prices).ok())
            .collect();
        if levs.is_empty() {
            0.0
        } else {
            levs.iter().sum::<f64>() / levs.len() as f64
        }
    }

    /// Principal-weighted mean haircut required on live risky-backed repos;
    /// with none left, the haircut a new one would require.
    pub fn average_required_haircut(&self) -> f64 {
        let required = (1.0 - self.p_sell[AssetId::RiskyAsset]).clamp(0.0, 1.0);
        let (mut w, mut total) = (0.0, 0.0);
        for r in self.funding.repos().filter(|r| r.collateral_asset == AssetId::RiskyAsset) {
            w += r.principal * required.max(r.haircut);
            total += r.principal;
        }
        if total > 0.0 {
            w / total
        } else {
            required
        }
    }
}

/// Risky price falls to `p` of its value, and the liquidity window is
/// rewritten so the selling probability reads `(1 − q)` of its old value.
pub fn inject_shock(market: &mut Market, shock: &Shock) -> Result<(), EngineError> {
    if market.shock_applied {
        return Err(EngineError::ShockAlreadyApplied);
    }
    market.shock_applied = true;
    let risky = AssetId::RiskyAsset;
    market.prices[risky] *= shock.p;
    let before = market.p_sell[risky];
    let target = ((1.0 - shock.q) * before).clamp(0.0, 1.0);
    let book = &mut market.books[risky];
    let hist = book.history_vec();
    let mean = if hist.is_empty() {
        0.0
    } else {
        hist.iter().map(|v| v.sell.max(v.buy)).sum::<f64>() / hist.len() as f64
    };
    let v = mean.max(1.0);
    let n = book.horizon();
    if shock.q > 0.0 {
        book.replace_history((0..n).map(|_| StepVolume { sell: v, buy: target * v }));
    }
    market.p_sell[risky] = selling_probability(&market.books[risky].history_vec(), n);
    Ok(())
}

/// Loss booked by one holder and margin calls on its repos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkToMarket {
    pub agent: AgentId,
    pub loss: f64,
    pub margin_calls: Vec<(f64, RepoEvent)>,
}

/// Books the shock's write-down and calls `(1 − p)` of every risky-backed
/// repo, raising its haircut by the fraction `q`.
pub fn apply_mark_to_market(market: &mut Market, shock: &Shock) -> Result<Vec<MarkToMarket>, EngineError> {
    if !market.shock_applied {
        return Err(EngineError::ShockNotApplied);
    }
    let risky = AssetId::RiskyAsset;
    let price_now = market.prices[risky];
    let price_before = if shock.p > 0.0 { price_now / shock.p } else { market.scenario.market.risky_price };
    let mut out: Vec<MarkToMarket> = market
        .agents
        .iter()
        .filter(|a| a.sheet.holdings[risky] > 0.0)
        .map(|a| MarkToMarket {
            agent: a.id,
            loss: a.sheet.holdings[risky] * price_before * (1.0 - shock.p),
            margin_calls: Vec::new(),
        })
        .collect();
    let calls: Vec<_> =
        market.funding.repos().filter(|r| r.collateral_asset == risky).map(|r| (r.id, r.borrower, r.principal, r.haircut)).collect();
    let step = market.step;
    for (id, borrower, principal, haircut) in calls {
        let amount = (1.0 - shock.p) * principal;
        let new_haircut = (1.0 - (1.0 - shock.q) * (1.0 - haircut)).min(1.0);
        let event = market.funding.margin_call(&mut market.agents, id, amount, new_haircut, step);
        if let Some(m) = out.iter_mut().find(|m| m.agent == borrower) {
            m.margin_calls.push((amount, event));
        }
    }
    Ok(out)
}

/// Whether a solvent agent is inside its leverage, VaR and liquidity limits.
pub fn check_risk_limits(agent: &Agent, prices: &Prices, p_sell: &Prices, var: &VarParams) -> RiskCheck {
    let sheet = &agent.sheet;
    let Ok(ta) = sheet.total_assets(prices) else {
        return RiskCheck::FlyToLiquidity;
    };
    let nav = ta - sheet.total_liabilities();
    if nav <= 0.0 {
        return RiskCheck::FlyToLiquidity;
    }
    if ta / nav > agent.limits.max_leverage + 1e-12 {
        return RiskCheck::FlyToLiquidity;
    }
    let mut values: Vec<f64> = agent.nav_history.iter().copied().collect();
    values.push(nav);
    if let Some(v) = portfolio_var(&values, var) {
        if v > agent.limits.var_limit * nav {
            return RiskCheck::FlyToLiquidity;
        }
    }
    let liquid: f64 = sheet.cash
        + AssetId::ALL.iter().map(|&a| sheet.holdings[a] * prices[a] * p_sell[a]).sum::<f64>()
        + sheet.receivables();
    if ta > 0.0 && liquid / ta < agent.limits.liquidity_floor {
        return RiskCheck::FlyToLiquidity;
    }
    RiskCheck::WithinLimits
}

/// Per-step totals used to audit conservation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Audit {
    /// `|Δ cash − external cash| / max(total cash, 1)`.
    pub cash_error: f64,
    /// Largest per-asset `|Δ quantity − external quantity| / max(total, 1)`.
    pub quantity_error: f64,
    pub external: ExternalFlows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub n_solvent: usize,
    pub n_defaulted: usize,
    pub n_bankrupt: usize,
    pub avg_leverage: f64,
    pub avg_haircut: f64,
    pub stock_price: f64,
    pub risky_price: f64,
    pub risky_p_sell: f64,
    /// Market value of fire-sale orders submitted this step.
    pub fire_sale_volume: f64,
    /// Solvent agents outside their risk limits this step.
    pub n_above_limits: usize,
    /// Solvency state changes this step.
    pub transitions: usize,
    pub audit: Audit,
}

struct PendingOrder {
    agent: AgentId,
    asset: AssetId,
    side: Side,
    quantity: f64,
    fire_sale: bool,
}

fn totals(agents: &[Agent]) -> (f64, PerAsset<f64>) {
    let mut cash = 0.0;
    let mut qty = PerAsset([0.0; 3]);
    for a in agents {
        cash += a.sheet.cash;
        for asset in AssetId::ALL {
            qty[asset] += a.sheet.holdings[asset];
        }
    }
    (cash, qty)
}

/// A seeded run: the market plus every random stream it draws from.
pub struct Simulation {
    pub market: Market,
    dividend_rng: ChaCha8Rng,
    shuffle_rng: ChaCha8Rng,
    agent_rngs: Vec<ChaCha8Rng>,
    shock: Shock,
    var: VarParams,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Simulation, ScenarioError> {
        validate(scenario)?;
        let market = Market::from_scenario(scenario, seed);
        let mut per_kind = [0u64; 3];
        let agent_rngs = market
            .agents
            .iter()
            .map(|a| {
                let (label, k) = match a.kind {
                    AgentKind::Bank => ("trade.bank", 0),
                    AgentKind::HedgeFund => ("trade.hedge_fund", 1),
                    AgentKind::MoneyMarketFund => ("trade.mmf", 2),
                };
                let rng = indexed_stream(seed, label, per_kind[k]);
                per_kind[k] += 1;
                rng
            })
            .collect();
        Ok(Simulation {
            dividend_rng: stream(seed, "dividend"),
            shuffle_rng: stream(seed, "shuffle"),
            agent_rngs,
            shock: Shock { p: scenario.shock.p, q: scenario.shock.q, at_step: scenario.shock_step() },
            var: VarParams {
                confidence_x: scenario.risk.var_confidence,
                horizon: scenario.risk.var_horizon,
                window: scenario.risk.var_window,
            },
            market,
        })
    }

    /// Report of the current state without advancing.
    pub fn report(&self, fire_sale_volume: f64, n_above_limits: usize, transitions: usize, audit: Audit) -> StepReport {
        let m = &self.market;
        let (n_solvent, n_defaulted, n_bankrupt) = m.counts();
        StepReport {
            step: m.step,
            n_solvent,
            n_defaulted,
            n_bankrupt,
            avg_leverage: m.average_bank_leverage(),
            avg_haircut: m.average_required_haircut(),
            stock_price: m.prices[AssetId::Stock],
            risky_price: m.prices[AssetId::RiskyAsset],
            risky_p_sell: m.p_sell[AssetId::RiskyAsset],
            fire_sale_volume,
            n_above_limits,
            transitions,
            audit,
        }
    }

    pub fn initial_report(&self) -> StepReport {
        self.report(0.0, 0, 0, Audit::default())
    }

    /// Advances one step through the eight phases and reports.
    pub fn step(&mut self) -> StepReport {
        let (cash0, qty0) = totals(&self.market.agents);
        let states0: Vec<SolvencyState> = self.market.agents.iter().map(|a| a.state).collect();
        let mut flows = ExternalFlows::default();
        self.market.step += 1;
        let t = self.market.step;

        if t == self.shock.at_step && !self.market.shock_applied {
            inject_shock(&mut self.market, &self.shock).expect("first application");
            let mtm = apply_mark_to_market(&mut self.market, &self.shock).expect("shock applied");
            info!(
                "step {t}: shock p={} q={}, {} holders marked down, risky P_sell {:.3}",
                self.shock.p,
                self.shock.q,
                mtm.len(),
                self.market.p_sell[AssetId::RiskyAsset]
            );
        }

        self.accrue(&mut flows);
        let (orders, k) = self.decide();
        let fire_sale_volume: f64 =
            orders.iter().filter(|o| o.fire_sale).map(|o| o.quantity * self.market.prices[o.asset]).sum();
        self.clear(orders, &mut flows);

        let n = self.market.scenario.liquidity.horizon;
        for a in AssetId::ALL {
            self.market.p_sell[a] = selling_probability(&self.market.books[a].history_vec(), n);
        }

        let m = &mut self.market;
        let interest = m.rates.r_f * m.accrual();
        let events = m.funding.renew_repos(&mut m.agents, &m.prices, &m.p_sell, interest, t);
        let terminated = events.iter().filter(|e| matches!(e, RepoEvent::Terminated { .. })).count();
        if terminated > 0 {
            debug!("step {t}: {terminated} repos not renewed");
        }

        let params = SettlementParams { r_f: m.rates.r_f, accrual: m.accrual(), bond_price: m.prices[AssetId::GovBond] };
        let reserve = m.reserve.clone();
        m.funding.settle_overnight_obligations(
            &mut m.agents,
            t,
            &params,
            &m.prices,
            &m.p_sell,
            |a: &Agent| reserve[a.id.0],
            &mut flows,
        );

        self.resolve_solvency();

        let capacity = self.market.scenario.risk.var_window + 1;
        let prices = self.market.prices;
        for a in self.market.agents.iter_mut().filter(|a| a.is_active()) {
            let nav = compute_nav(&a.sheet, &prices).unwrap_or(f64::NEG_INFINITY);
            a.push_nav(nav, capacity);
        }

        let transitions = self.market.agents.iter().zip(&states0).filter(|(a, s)| a.state != **s).count();
        let (cash1, qty1) = totals(&self.market.agents);
        let cash_error = ((cash1 - cash0) - flows.cash).abs() / cash0.abs().max(cash1.abs()).max(1.0);
        let quantity_error = AssetId::ALL
            .iter()
            .map(|&a| ((qty1[a] - qty0[a]) - flows.quantity[a]).abs() / qty0[a].abs().max(qty1[a].abs()).max(1.0))
            .fold(0.0, f64::max);
        debug_assert!(m_check(&self.market));
        self.report(fire_sale_volume, k, transitions, Audit { cash_error, quantity_error, external: flows })
    }

    /// Dividends on stock and interest on bonds and the risky asset, paid in
    /// from outside the agent population.
    fn accrue(&mut self, flows: &mut ExternalFlows) {
        let m = &mut self.market;
        let z: f64 = StandardNormal.sample(&mut self.dividend_rng);
        let mu = m.dividend.innovation(z);
        m.last_dividend = step_dividend(&mut m.dividend, mu);
        let acc = m.accrual();
        let (d, r_f, r_r) = (m.last_dividend, m.rates.r_f, m.rates.r_r);
        let risky_price = m.prices[AssetId::RiskyAsset];
        let bond_price = m.prices[AssetId::GovBond];
        for a in m.agents.iter_mut().filter(|a| a.is_active()) {
            let h = &a.sheet.holdings;
            let income = (h[AssetId::Stock] * d
                + h[AssetId::GovBond] * bond_price * r_f
                + h[AssetId::RiskyAsset] * risky_price * r_r)
                * acc;
            a.sheet.cash += income;
            flows.cash += income;
        }
    }

    /// Orders of every active agent, from a snapshot of the market, in a
    /// shuffled arrival order. Returns the orders and the count of agents
    /// outside their risk limits.
    fn decide(&mut self) -> (Vec<PendingOrder>, usize) {
        let m = &mut self.market;
        let s = &m.scenario;
        let prices = m.prices;
        let p_sell = m.p_sell;
        let history: Vec<f64> = m.stock_history.iter().copied().collect();
        let (sell_f, buy_f) = (s.trading.sell_fraction, s.trading.buy_fraction);
        let stock_price = prices[AssetId::Stock];
        let risky_price = prices[AssetId::RiskyAsset];
        let bond_price = prices[AssetId::GovBond];

        let mut per_agent: Vec<Vec<PendingOrder>> = Vec::with_capacity(m.agents.len());
        let mut above = 0;
        for (i, a) in m.agents.iter_mut().enumerate() {
            // Every agent draws each step so its stream stays aligned.
            let u: f64 = self.agent_rngs[i].random();
            let mut orders = Vec::new();
            if !a.is_active() {
                per_agent.push(orders);
                continue;
            }
            let id = a.id;
            let sheet = &a.sheet;
            let reserve = m.reserve[i];
            let ceiling = m.ceiling[i];
            let sellable = sheet.sellable_holdings();

            if a.state == SolvencyState::Defaulted {
                a.fly_to_liquidity = false;
                let need = sheet.dues_owed - sheet.cash;
                if need > DUST {
                    let ctx = LiquidationContext {
                        prices: &prices,
                        p_sell: &p_sell,
                        sellable: &sellable,
                        cash_needed: need,
                        sell_fraction: sell_f,
                    };
                    for o in select_liquidation_order(LiquidationMode::FireSale, &ctx) {
                        orders.push(PendingOrder { agent: id, asset: o.asset, side: Side::Sell, quantity: o.quantity, fire_sale: true });
                    }
                }
                per_agent.push(orders);
                continue;
            }

            let check = check_risk_limits(a, &prices, &p_sell, &self.var);
            a.fly_to_liquidity = check == RiskCheck::FlyToLiquidity;
            if a.fly_to_liquidity {
                above += 1;
            }
            let sheet = &a.sheet;
            let free = (sheet.cash - reserve).max(0.0);

            if a.fly_to_liquidity {
                let ctx = LiquidationContext {
                    prices: &prices,
                    p_sell: &p_sell,
                    sellable: &sellable,
                    cash_needed: 0.0,
                    sell_fraction: sell_f,
                };
                for o in select_liquidation_order(LiquidationMode::FlyToLiquidity, &ctx) {
                    orders.push(PendingOrder { agent: id, asset: o.asset, side: Side::Sell, quantity: o.quantity, fire_sale: false });
                }
            } else if a.kind != AgentKind::MoneyMarketFund {
                let decision = match &a.strategy.stock_trader {
                    StockTrader::Noise(p) => noise_decision(p, u),
                    StockTrader::Fundamental { tau } => fundamental_decision(stock_price, m.last_dividend, m.rates.r_f, *tau),
                    StockTrader::Technical(rules) => technical_decision_from_history(rules, &history),
                };
                match decision {
                    Decision::Buy if free > 0.0 && stock_price > 0.0 => orders.push(PendingOrder {
                        agent: id,
                        asset: AssetId::Stock,
                        side: Side::Buy,
                        quantity: buy_f * free / stock_price,
                        fire_sale: false,
                    }),
                    Decision::Sell if sellable[AssetId::Stock] > 0.0 => orders.push(PendingOrder {
                        agent: id,
                        asset: AssetId::Stock,
                        side: Side::Sell,
                        quantity: sell_f * sellable[AssetId::Stock],
                        fire_sale: false,
                    }),
                    _ => {}
                }
            }

            // Cash management through the bond desk.
            if sheet.cash < reserve && sellable[AssetId::GovBond] > 0.0 {
                orders.push(PendingOrder {
                    agent: id,
                    asset: AssetId::GovBond,
                    side: Side::Sell,
                    quantity: ((reserve - sheet.cash) / bond_price).min(sellable[AssetId::GovBond]),
                    fire_sale: false,
                });
            } else if sheet.cash > ceiling && !a.fly_to_liquidity {
                // Surplus cash: banks add to the risky asset while it is
                // liquid and they are under their leverage limit.
                let surplus = buy_f * (sheet.cash - ceiling);
                let into_risky = a.kind == AgentKind::Bank
                    && p_sell[AssetId::RiskyAsset] >= s.bank.risky_buy_min_p_sell
                    && risky_price > 0.0
                    && compute_leverage(sheet, &prices).is_ok_and(|l| l < a.limits.max_leverage);
                let (asset, price) =
                    if into_risky { (AssetId::RiskyAsset, risky_price) } else { (AssetId::GovBond, bond_price) };
                orders.push(PendingOrder { agent: id, asset, side: Side::Buy, quantity: surplus / price, fire_sale: false });
            }
            per_agent.push(orders);
        }

        let mut arrival: Vec<usize> = (0..per_agent.len()).collect();
        arrival.shuffle(&mut self.shuffle_rng);
        let mut out = Vec::new();
        for i in arrival {
            out.append(&mut per_agent[i]);
        }
        (out, above)
    }

    fn clear(&mut self, orders: Vec<PendingOrder>, flows: &mut ExternalFlows) {
        let m = &mut self.market;
        let bond_price = m.prices[AssetId::GovBond];
        let (mut bond_sold, mut bond_bought) = (0.0, 0.0);
        let mut fire_sellers: Vec<AgentId> = Vec::new();
        for o in &orders {
            match o.asset {
                AssetId::GovBond => {
                    let agent = &mut m.agents[o.agent.0];
                    match o.side {
                        Side::Sell => {
                            let cash = sell_bonds_at_par(agent, o.quantity * bond_price, bond_price, flows);
                            bond_sold += cash / bond_price;
                        }
                        Side::Buy => {
                            let qty = o.quantity.min(agent.sheet.cash.max(0.0) / bond_price);
                            if qty > 0.0 {
                                agent.sheet.cash -= qty * bond_price;
                                agent.sheet.holdings[AssetId::GovBond] += qty;
                                flows.cash -= qty * bond_price;
                                flows.quantity[AssetId::GovBond] += qty;
                                bond_bought += qty;
                            }
                        }
                    }
                }
                asset => {
                    if asset == AssetId::RiskyAsset && o.fire_sale && !fire_sellers.contains(&o.agent) {
                        fire_sellers.push(o.agent);
                    }
                    m.books[asset].submit(o.agent, o.side, o.quantity, o.fire_sale);
                }
            }
        }
        // The desk takes every bond offered.
        m.books[AssetId::GovBond].record(StepVolume { sell: bond_sold, buy: bond_sold + bond_bought });

        let risky = AssetId::RiskyAsset;
        let active = m.agents.iter().filter(|a| a.is_active()).count().max(1);
        if !fire_sellers.is_empty() {
            let fraction = fire_sellers.len() as f64 / active as f64;
            m.prices[risky] = apply_fire_sale_discount(m.prices[risky], fraction, m.scenario.market.fire_sale_discount);
        }
        let price = m.prices[risky];
        let agents = &mut m.agents;
        let clearing = clear_orders_fifo(&mut m.books[risky], price, |b, s, q, p| {
            let (buyer, seller) = pair_mut(agents, b, s);
            apply_trade(buyer, seller, risky, q, p)
        });
        // Buy interest left over is met by new issuance.
        if price > 0.0 {
            for (id, qty) in clearing.unfilled_buys {
                let a = &mut agents[id.0];
                let qty = qty.min(a.sheet.cash.max(0.0) / price);
                if qty > 0.0 {
                    a.sheet.cash -= qty * price;
                    a.sheet.holdings[risky] += qty;
                    flows.cash -= qty * price;
                    flows.quantity[risky] += qty;
                }
            }
        }

        let stock = AssetId::Stock;
        let q = order_imbalance(m.books[stock].orders(), m.scenario.market.phi);
        let price = m.prices[stock];
        let agents = &mut m.agents;
        clear_orders_fifo(&mut m.books[stock], price, |b, s, q, p| {
            let (buyer, seller) = pair_mut(agents, b, s);
            apply_trade(buyer, seller, stock, q, p)
        });
        m.prices[stock] = update_stock_price(price, q, m.scenario.market.kappa);
        let p = m.prices[stock];
        m.push_stock_price(p);
    }

    /// Applies the solvency rule until no agent changes state, resolving each
    /// new bankruptcy against its creditors.
    fn resolve_solvency(&mut self) {
        let m = &mut self.market;
        let floor = m.scenario.solvency.insolvency_nav_floor;
        for _ in 0..=m.agents.len() {
            let mut newly_bankrupt = Vec::new();
            for i in 0..m.agents.len() {
                let a = &m.agents[i];
                if a.state == SolvencyState::Bankrupt {
                    continue;
                }
                let ctx = SolvencyContext { prices: &m.prices, p_sell: &m.p_sell, nav_floor: floor };
                let next = next_solvency(a.state, &solvency_inputs(a, &ctx));
                if next != a.state {
                    debug!("step {}: {} {:?} -> {:?}", m.step, a.id, a.state, next);
                }
                m.agents[i].state = next;
                if next == SolvencyState::Bankrupt {
                    m.agents[i].fly_to_liquidity = false;
                    newly_bankrupt.push(AgentId(i));
                }
            }
            if newly_bankrupt.is_empty() {
                break;
            }
            for id in newly_bankrupt {
                let res = m.funding.resolve_bankruptcy(&mut m.agents, id, &m.prices);
                debug!("step {}: {} bankrupt, {:.3e} written off", m.step, id, res.written_off);
            }
        }
    }

    pub fn run_to(&mut self, step: u64) -> Vec<StepReport> {
        let mut out = Vec::new();
        while self.market.step < step {
            out.push(self.step());
        }
        out
    }
}

fn m_check(m: &Market) -> bool {
    m.funding.check_consistency(&m.agents).is_ok()
}

/// Builds the market, runs warmup and horizon, and returns one report per
/// step including the initial one.
pub fn run_simulation(scenario: &Scenario, seed: u64) -> Result<Vec<StepReport>, ScenarioError> {
    let mut sim = Simulation::new(scenario, seed)?;
    let total = scenario.total_steps();
    let mut reports = Vec::with_capacity(total as usize + 1);
    reports.push(sim.initial_report());
    reports.extend(sim.run_to(total));
    Ok(reports)
}

/// First step after which no agent changes state for `quiet` steps, or
/// `None` if the run never settles.
pub fn equilibrium_step(reports: &[StepReport], quiet: usize) -> Option<u64> {
    let last_change = reports.iter().rposition(|r| r.transitions > 0);
    let from = last_change.unwrap_or(0);
    if reports.len().saturating_sub(from + 1) >= quiet {
        Some(reports[from].step)
    } else {
        None
    }
}
