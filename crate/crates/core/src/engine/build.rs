//! Initial market from a scenario.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto as ParetoDist, Uniform};

use crate::accounting::{Agent, AgentId, AgentKind, BalanceSheet, RiskLimits, DUST};
use crate::assets::{AssetId, DividendState, OrderBook, PerAsset, Rates};
use crate::funding::FundingRegistry;
use crate::rng::indexed_stream;
use crate::scenario::{LeverageDist, Pareto, Scenario};
use crate::strategy::{NoiseParams, StockTrader, StrategyAssignment, TechnicalRuleParams};

use super::Market;

fn pareto(rng: &mut ChaCha8Rng, p: Pareto) -> f64 {
    ParetoDist::new(p.m, p.a).expect("validated pareto").sample(rng)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        Uniform::new(lo, hi).expect("validated bounds").sample(rng)
    } else {
        lo
    }
}

fn draw_trader(rng: &mut ChaCha8Rng, s: &Scenario) -> StrategyAssignment {
    let u: f64 = rng.random();
    let tau = uniform(rng, s.fundamental.tau_min, s.fundamental.tau_max);
    let stock_trader = if u < s.traders.noise {
        StockTrader::Noise(NoiseParams { p_buy: s.noise.p_buy, p_sell: s.noise.p_sell, p_hold: s.noise.p_hold })
    } else if u < s.traders.noise + s.traders.fundamental {
        StockTrader::Fundamental { tau }
    } else {
        StockTrader::Technical(TechnicalRuleParams::symmetric(s.technical.window, s.technical.threshold))
    };
    StrategyAssignment { stock_trader }
}

fn limits(s: &Scenario, max_leverage: f64) -> RiskLimits {
    RiskLimits { max_leverage, var_limit: s.risk.var_limit, liquidity_floor: s.risk.liquidity_floor }
}

pub(super) fn build_market(s: &Scenario, seed: u64) -> Market {
    let stock_price = s.market.d_bar / s.market.r_f;
    let risky_price = s.market.risky_price;
    let prices = PerAsset([1.0, stock_price, risky_price]);

    let mut agents = Vec::with_capacity(s.counts.total());
    let mut reserve = Vec::with_capacity(s.counts.total());
    let mut ceiling = Vec::with_capacity(s.counts.total());

    for i in 0..s.counts.banks {
        let mut rng = indexed_stream(seed, "build.bank", i as u64);
        let nav = pareto(&mut rng, s.nav.bank);
        let max_leverage = match s.leverage_limit.dist {
            LeverageDist::Uniform => uniform(&mut rng, s.leverage_limit.a, s.leverage_limit.b),
            LeverageDist::Pareto => pareto(&mut rng, Pareto { a: s.leverage_limit.a, m: s.leverage_limit.b }),
        };
        // Deposits alone never push a bank past its own limit.
        let x = pareto(&mut rng, s.deposits).min(max_leverage - 1.0);
        let deposits = x * nav;
        let own = nav + deposits;
        let risky_share = uniform(&mut rng, 0.0, s.bank.risky_own_max);
        let cash = s.bank.cash_fraction * own;
        let stock = s.bank.stock_fraction * own;
        let risky = risky_share * own;
        let bonds = (own - cash - stock - risky).max(0.0);
        let strategy = draw_trader(&mut rng, s);
        let sheet = BalanceSheet {
            cash,
            holdings: PerAsset([bonds, stock / stock_price, risky / risky_price]),
            deposits,
            ..BalanceSheet::default()
        };
        agents.push(Agent::new(AgentId(agents.len()), AgentKind::Bank, sheet, strategy, limits(s, max_leverage)));
        reserve.push(s.bank.cash_reserve * nav);
        ceiling.push(s.bank.cash_ceiling * nav);
    }

    for i in 0..s.counts.hedge_funds {
        let mut rng = indexed_stream(seed, "build.hedge_fund", i as u64);
        let nav = pareto(&mut rng, s.nav.hedge_fund);
        let cash = s.hedge_fund.cash_fraction * nav;
        let stock = s.hedge_fund.stock_fraction * nav;
        let bonds = (nav - cash - stock).max(0.0);
        let strategy = draw_trader(&mut rng, s);
        let sheet = BalanceSheet {
            cash,
            holdings: PerAsset([bonds, stock / stock_price, 0.0]),
            ..BalanceSheet::default()
        };
        agents.push(Agent::new(AgentId(agents.len()), AgentKind::HedgeFund, sheet, strategy, limits(s, 1.0)));
        reserve.push(s.hedge_fund.cash_reserve * nav);
        ceiling.push(s.hedge_fund.cash_ceiling * nav);
    }

    for i in 0..s.counts.mmfs {
        let mut rng = indexed_stream(seed, "build.mmf", i as u64);
        let nav = pareto(&mut rng, s.nav.mmf);
        let cash = s.mmf.cash_fraction * nav;
        let sheet = BalanceSheet {
            cash,
            holdings: PerAsset([nav - cash, 0.0, 0.0]),
            ..BalanceSheet::default()
        };
        agents.push(Agent::new(
            AgentId(agents.len()),
            AgentKind::MoneyMarketFund,
            sheet,
            StrategyAssignment::default(),
            limits(s, 1.0),
        ));
        reserve.push(s.mmf.cash_reserve * nav);
        ceiling.push(s.mmf.cash_ceiling * nav);
    }

    let mut funding = FundingRegistry::new();
    assign_repos(s, seed, &mut agents, &reserve, &mut funding, risky_price);

    let capacity = s.risk.var_window + 1;
    for a in agents.iter_mut() {
        let nav = a.nav(&prices).expect("finite initial prices");
        a.initial_nav = nav;
        a.push_nav(nav, capacity);
    }

    let horizon = s.liquidity.horizon;
    let tech = TechnicalRuleParams::symmetric(s.technical.window, s.technical.threshold).required_history();
    let mut stock_history = VecDeque::with_capacity(tech + 1);
    stock_history.push_back(stock_price);

    Market {
        step: 0,
        agents,
        prices,
        p_sell: PerAsset([1.0, 1.0, 1.0]),
        dividend: DividendState::new(s.market.d_bar, s.market.rho_ar, s.market.sigma_mu),
        last_dividend: s.market.d_bar,
        rates: Rates { r_f: s.market.r_f, r_r: s.market.r_r },
        books: PerAsset([
            OrderBook::new(AssetId::GovBond, horizon),
            OrderBook::new(AssetId::Stock, horizon),
            OrderBook::new(AssetId::RiskyAsset, horizon),
        ]),
        stock_history,
        stock_history_len: tech.max(1),
        funding,
        reserve,
        ceiling,
        scenario: s.clone(),
        shock_applied: false,
    }
}

/// Each bank borrows from uniformly drawn money market funds until it
/// reaches its target leverage, buying the risky asset with the proceeds and
/// pledging it.
fn assign_repos(
    s: &Scenario,
    seed: u64,
    agents: &mut [Agent],
    reserve: &[f64],
    funding: &mut FundingRegistry,
    risky_price: f64,
) {
    let mmfs: Vec<usize> =
        agents.iter().filter(|a| a.kind == AgentKind::MoneyMarketFund).map(|a| a.id.0).collect();
    if mmfs.is_empty() {
        return;
    }
    let mut rng = indexed_stream(seed, "build.repo", 0);
    let banks: Vec<usize> = agents.iter().filter(|a| a.kind == AgentKind::Bank).map(|a| a.id.0).collect();
    for b in banks {
        let nav = agents[b].sheet.cash
            + agents[b].sheet.holdings[AssetId::GovBond]
            + agents[b].sheet.holdings[AssetId::Stock] * s.market.d_bar / s.market.r_f
            + agents[b].sheet.holdings[AssetId::RiskyAsset] * risky_price
            - agents[b].sheet.deposits;
        let own = nav + agents[b].sheet.deposits;
        let target = s.bank.repo_target_fraction * agents[b].limits.max_leverage * nav;
        let mut need = target - own;
        let chunk = s.bank.repo_chunk * nav;
        while need > DUST {
            let lenders: Vec<usize> =
                mmfs.iter().copied().filter(|&m| agents[m].sheet.cash - reserve[m] > DUST).collect();
            if lenders.is_empty() {
                return;
            }
            let m = lenders[rng.random_range(0..lenders.len())];
            let amount = need.min(chunk).min(agents[m].sheet.cash - reserve[m]);
            let qty = amount / risky_price;
            // Bought from issuance and pledged in the same instant.
            agents[b].sheet.holdings[AssetId::RiskyAsset] += qty;
            agents[b].sheet.cash -= amount;
            funding
                .open_repo(agents, AgentId(m), AgentId(b), AssetId::RiskyAsset, qty, risky_price, 0.0, 0)
                .expect("lender cash and collateral checked");
            need -= amount;
        }
    }
}
