//! Asset processes, order books and price formation.
//!
//! Three assets trade in the market: a government bond that always fills at
//! par against an outside desk, a dividend-paying stock whose price moves with
//! normalized order imbalance, and a risky fixed-income asset that trades
//! over the counter and can only be sold when another agent buys it.

use std::collections::VecDeque;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::accounting::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssetId {
    GovBond,
    Stock,
    RiskyAsset,
}

impl AssetId {
    pub const ALL: [AssetId; 3] = [AssetId::GovBond, AssetId::Stock, AssetId::RiskyAsset];

    pub const fn index(self) -> usize {
        match self {
            AssetId::GovBond => 0,
            AssetId::Stock => 1,
            AssetId::RiskyAsset => 2,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            AssetId::GovBond => "gov_bond",
            AssetId::Stock => "stock",
            AssetId::RiskyAsset => "risky_asset",
        }
    }
}

/// One value per asset, indexed by [`AssetId`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerAsset<T>(pub [T; 3]);

impl<T: Copy> PerAsset<T> {
    pub fn splat(value: T) -> Self {
        PerAsset([value; 3])
    }

    pub fn iter(&self) -> impl Iterator<Item = (AssetId, T)> + '_ {
        AssetId::ALL.into_iter().map(move |a| (a, self[a]))
    }
}

impl<T> Index<AssetId> for PerAsset<T> {
    type Output = T;
    fn index(&self, asset: AssetId) -> &T {
        &self.0[asset.index()]
    }
}

impl<T> IndexMut<AssetId> for PerAsset<T> {
    fn index_mut(&mut self, asset: AssetId) -> &mut T {
        &mut self.0[asset.index()]
    }
}

pub type Prices = PerAsset<f64>;
pub type Holdings = PerAsset<f64>;

/// Per-period interest rates of the two fixed-income assets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r_f: f64,
    pub r_r: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { r_f: 0.10, r_r: 0.11 }
    }
}

/// AR(1) dividend process `d_t = d̄ + ρ(d_{t-1} − d̄) + μ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DividendState {
    pub d_prev: f64,
    pub d_bar: f64,
    pub rho_ar: f64,
    pub sigma_mu: f64,
}

impl DividendState {
    pub fn new(d_bar: f64, rho_ar: f64, sigma_mu: f64) -> Self {
        DividendState { d_prev: d_bar, d_bar, rho_ar, sigma_mu }
    }

    /// Scales a standard normal draw into the innovation `μ_t`.
    pub fn innovation(&self, standard_normal: f64) -> f64 {
        self.sigma_mu * standard_normal
    }
}

/// Advances the dividend process with innovation `mu_t`. Dividends are
/// floored at zero.
pub fn step_dividend(state: &mut DividendState, mu_t: f64) -> f64 {
    let d = state.d_bar + state.rho_ar * (state.d_prev - state.d_bar) + mu_t;
    let d = d.max(0.0);
    state.d_prev = d;
    d
}

pub fn accrue_interest(holding_value: f64, rate: f64) -> f64 {
    holding_value * rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub agent: AgentId,
    pub asset: AssetId,
    pub side: Side,
    pub quantity: f64,
    pub arrival_seq: u64,
    /// Forced liquidation by a defaulted agent.
    pub fire_sale: bool,
}

/// Submitted volume on each side of one cleared step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepVolume {
    pub sell: f64,
    pub buy: f64,
}

/// Market-order book for one asset. Orders live for a single step; the
/// per-step volume totals of the last `horizon` steps are retained for the
/// liquidity metric.
#[derive(Debug, Clone)]
pub struct OrderBook {
    pub asset: AssetId,
    orders: Vec<Order>,
    next_seq: u64,
    history: VecDeque<StepVolume>,
    horizon: usize,
}

impl OrderBook {
    pub fn new(asset: AssetId, horizon: usize) -> Self {
        OrderBook {
            asset,
            orders: Vec::new(),
            next_seq: 0,
            history: VecDeque::with_capacity(horizon + 1),
            horizon: horizon.max(1),
        }
    }

    /// Appends a market order and returns its arrival sequence number.
    pub fn submit(&mut self, agent: AgentId, side: Side, quantity: f64, fire_sale: bool) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        if quantity > 0.0 && quantity.is_finite() {
            self.orders.push(Order {
                agent,
                asset: self.asset,
                side,
                quantity,
                arrival_seq: seq,
                fire_sale,
            });
        }
        seq
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &StepVolume> {
        self.history.iter()
    }

    pub fn history_vec(&self) -> Vec<StepVolume> {
        self.history.iter().copied().collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn buy_volume(&self) -> f64 {
        self.side_volume(Side::Buy)
    }

    pub fn sell_volume(&self) -> f64 {
        self.side_volume(Side::Sell)
    }

    fn side_volume(&self, side: Side) -> f64 {
        self.orders.iter().filter(|o| o.side == side).map(|o| o.quantity).sum()
    }

    pub fn record(&mut self, volume: StepVolume) {
        self.history.push_back(volume);
        while self.history.len() > self.horizon {
            self.history.pop_front();
        }
    }

    /// Replaces the whole retained window, keeping at most `horizon` entries.
    pub fn replace_history(&mut self, entries: impl IntoIterator<Item = StepVolume>) {
        self.history.clear();
        for e in entries {
            self.record(e);
        }
    }

    fn take_orders(&mut self) -> Vec<Order> {
        std::mem::take(&mut self.orders)
    }
}

/// Normalized order imbalance `Q = (buy volume − sell volume) / φ`.
pub fn total_order_imbalance(book: &OrderBook, phi: f64) -> f64 {
    order_imbalance(book.orders(), phi)
}

pub fn order_imbalance(orders: &[Order], phi: f64) -> f64 {
    let net: f64 = orders
        .iter()
        .map(|o| match o.side {
            Side::Buy => o.quantity,
            Side::Sell => -o.quantity,
        })
        .sum();
    net / phi
}

/// Multiplicative price impact `p · exp(κQ)`.
pub fn update_stock_price(price: f64, q: f64, kappa: f64) -> f64 {
    price * (kappa * q).exp()
}

/// Linear fire-sale discount in the fraction of agents fire selling, floored
/// at zero.
pub fn apply_fire_sale_discount(price: f64, fire_selling_fraction: f64, d: f64) -> f64 {
    let f = fire_selling_fraction.clamp(0.0, 1.0);
    (price * (1.0 - d * f)).max(0.0)
}

/// Why a proposed match could not fill completely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shortfall {
    BuyerCash,
    SellerHoldings,
}

/// Outcome of settling one proposed match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub buyer: AgentId,
    pub seller: AgentId,
    pub asset: AssetId,
    pub price: f64,
    pub quantity: f64,
    pub rejected: f64,
    pub shortfall: Option<Shortfall>,
}

impl Settlement {
    pub fn value(&self) -> f64 {
        self.quantity * self.price
    }
}

/// Result of one clearing round.
#[derive(Debug, Clone, Default)]
pub struct Clearing {
    pub settlements: Vec<Settlement>,
    /// Buy orders (agent, residual quantity) left unmatched.
    pub unfilled_buys: Vec<(AgentId, f64)>,
    pub unfilled_sells: Vec<(AgentId, f64)>,
    pub volume: StepVolume,
}

impl Clearing {
    pub fn traded_quantity(&self) -> f64 {
        self.settlements.iter().map(|s| s.quantity).sum()
    }
}

/// Matches buys against sells in arrival order at a single price. Each
/// proposed match goes through `settle`, which may fill it only partially;
/// the side that ran short has its remaining order dropped. Submitted volumes
/// are recorded in the book history and the book is emptied.
pub fn clear_orders_fifo<F>(book: &mut OrderBook, price: f64, mut settle: F) -> Clearing
where
    F: FnMut(AgentId, AgentId, f64, f64) -> Settlement,
{
    let mut orders = book.take_orders();
    orders.sort_by_key(|o| o.arrival_seq);
    let volume = StepVolume {
        sell: orders.iter().filter(|o| o.side == Side::Sell).map(|o| o.quantity).sum(),
        buy: orders.iter().filter(|o| o.side == Side::Buy).map(|o| o.quantity).sum(),
    };
    let mut buys: VecDeque<(AgentId, f64)> =
        orders.iter().filter(|o| o.side == Side::Buy).map(|o| (o.agent, o.quantity)).collect();
    let mut sells: VecDeque<(AgentId, f64)> =
        orders.iter().filter(|o| o.side == Side::Sell).map(|o| (o.agent, o.quantity)).collect();

    let mut settlements = Vec::new();
    while let (Some(&(buyer, bq)), Some(&(seller, sq))) = (buys.front(), sells.front()) {
        let proposed = bq.min(sq);
        let s = if buyer == seller {
            // Self-matches cancel without moving anything.
            Settlement {
                buyer,
                seller,
                asset: book.asset,
                price,
                quantity: 0.0,
                rejected: 0.0,
                shortfall: None,
            }
        } else {
            settle(buyer, seller, proposed, price)
        };
        let filled = s.quantity.min(proposed).max(0.0);
        if filled > 0.0 {
            settlements.push(s);
        }
        let bq_left = bq - filled;
        let sq_left = sq - filled;
        let buyer_done = bq_left <= 0.0 || buyer == seller || s.shortfall == Some(Shortfall::BuyerCash);
        let seller_done = sq_left <= 0.0 || s.shortfall == Some(Shortfall::SellerHoldings);
        if buyer_done {
            buys.pop_front();
        } else {
            buys.front_mut().expect("front exists").1 = bq_left;
        }
        if seller_done {
            sells.pop_front();
        } else {
            sells.front_mut().expect("front exists").1 = sq_left;
        }
    }
    book.record(volume);
    Clearing {
        settlements,
        unfilled_buys: buys.into_iter().filter(|(_, q)| *q > 0.0).collect(),
        unfilled_sells: sells.into_iter().filter(|(_, q)| *q > 0.0).collect(),
        volume,
    }
}
