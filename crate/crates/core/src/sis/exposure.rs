//! Exposure network of a running market.

use crate::accounting::{compute_nav, SolvencyState};
use crate::engine::Market;

use super::WeightedNetwork;

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureNetwork {
    pub network: WeightedNetwork,
    /// Nodes whose non-positive NAV was replaced by a small positive floor.
    pub flagged: Vec<usize>,
}

/// One node per agent; `Ω_ij` is what agent `i` stands to lose if `j`
/// fails, as a fraction of `i`'s NAV.
///
/// Exposures are interbank loan principals, repo principals and overdue
/// amounts owed by `j` to `i`. Secured amounts are netted against the
/// current collateral value unless `gross` is set.
pub fn extract_exposure_network(market: &Market, gross: bool) -> ExposureNetwork {
    let n = market.agents.len();
    let mut exposure = vec![0.0; n * n];
    let prices = &market.prices;
    for r in market.funding.repos() {
        let collateral = if gross { 0.0 } else { r.collateral_quantity * prices[r.collateral_asset] };
        exposure[r.lender.0 * n + r.borrower.0] += (r.principal - collateral).max(0.0);
    }
    for l in market.funding.loans() {
        exposure[l.lender.0 * n + l.borrower.0] += l.principal;
    }
    for d in market.funding.dues() {
        let collateral = match d.collateral {
            Some((asset, qty)) if !gross => qty * prices[asset],
            _ => 0.0,
        };
        exposure[d.creditor.0 * n + d.debtor.0] += (d.amount - collateral).max(0.0);
    }

    let navs: Vec<f64> =
        market.agents.iter().map(|a| compute_nav(&a.sheet, prices).unwrap_or(f64::NEG_INFINITY)).collect();
    let finite: Vec<f64> = navs.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if finite.is_empty() { 0.0 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let eps = if mean > 0.0 { 1e-6 * mean } else { 1e-6 };
    let mut flagged = Vec::new();
    let mut omega = vec![0.0; n * n];
    for i in 0..n {
        let nav = if navs[i] > 0.0 {
            navs[i]
        } else {
            flagged.push(i);
            eps
        };
        for j in 0..n {
            if i != j {
                omega[i * n + j] = (exposure[i * n + j] / nav).max(0.0);
            }
        }
    }
    let network = WeightedNetwork::from_dense(n, omega).expect("finite non-negative weights");
    ExposureNetwork { network, flagged }
}

/// Marks agents as infected (`1.0`) when their NAV has fallen below
/// `threshold` of its initial value, or they are bankrupt.
pub fn initial_infection(market: &Market, threshold: f64) -> Vec<f64> {
    market
        .agents
        .iter()
        .map(|a| {
            let nav = compute_nav(&a.sheet, &market.prices).unwrap_or(f64::NEG_INFINITY);
            let infected = a.state == SolvencyState::Bankrupt || nav < threshold * a.initial_nav;
            if infected {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::AgentId;
    use crate::assets::AssetId;
    use crate::scenario::Scenario;

    fn market(banks: usize, mmfs: usize, repo: f64) -> Market {
        let mut s = Scenario::default();
        s.counts.banks = banks;
        s.counts.hedge_funds = 0;
        s.counts.mmfs = mmfs;
        s.bank.repo_target_fraction = repo;
        Market::from_scenario(&s, 1)
    }

    #[test]
    fn no_contracts_no_edges() {
        let m = market(3, 2, 0.0);
        assert!(m.funding.is_empty());
        let net = extract_exposure_network(&m, false).network;
        assert_eq!(net.edges().count(), 0);
    }

    #[test]
    fn netted_repo_weight() {
        let mut m = market(1, 1, 0.0);
        let (mmf, bank) = (AgentId(1), AgentId(0));
        // Lender NAV 1000; repo of 80 secured by collateral now worth 70.
        for a in m.agents.iter_mut() {
            a.sheet = Default::default();
        }
        m.agents[1].sheet.cash = 1000.0;
        m.agents[0].sheet.holdings[AssetId::RiskyAsset] = 1.0;
        m.funding.open_repo(&mut m.agents, mmf, bank, AssetId::RiskyAsset, 1.0, 80.0, 0.0, 0).unwrap();
        m.prices[AssetId::RiskyAsset] = 70.0;
        let net = extract_exposure_network(&m, false).network;
        assert!((net.get(1, 0) - 0.01).abs() < 1e-15);
        let gross = extract_exposure_network(&m, true).network;
        assert!((gross.get(1, 0) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn mutual_loans_give_symmetric_weights() {
        let mut m = market(2, 0, 0.0);
        for a in m.agents.iter_mut() {
            a.sheet = Default::default();
            a.sheet.cash = 500.0;
        }
        let p = m.prices;
        m.funding.request_interbank_loan(&mut m.agents, AgentId(0), 100.0, 0.1, &p, &p, |_| 0.0, 0).unwrap();
        m.funding.request_interbank_loan(&mut m.agents, AgentId(1), 100.0, 0.1, &p, &p, |_| 0.0, 0).unwrap();
        let net = extract_exposure_network(&m, false).network;
        assert!(net.get(0, 1) > 0.0);
        assert_eq!(net.get(0, 1), net.get(1, 0));
    }

    #[test]
    fn non_positive_nav_is_flagged() {
        let mut m = market(2, 1, 0.0);
        m.agents[0].sheet.deposits *= 1e6;
        let out = extract_exposure_network(&m, false);
        assert_eq!(out.flagged, vec![0]);
    }

    #[test]
    fn infection_threshold() {
        let mut m = market(2, 1, 0.0);
        assert!(initial_infection(&m, 0.9).iter().all(|v| *v == 0.0));
        m.agents[1].sheet.cash = -1e12;
        assert_eq!(initial_infection(&m, 0.9)[1], 1.0);
    }
}
