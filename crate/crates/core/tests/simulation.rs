use rayon::prelude::*;

use repo_contagion::accounting::{compute_nav, AgentKind, SolvencyState};
use repo_contagion::assets::AssetId;
use repo_contagion::engine::{run_simulation, Simulation};
use repo_contagion::output::timeseries_csv;
use repo_contagion::scenario::Scenario;

fn small() -> Scenario {
    let mut s = Scenario::default();
    s.counts.banks = 20;
    s.counts.hedge_funds = 40;
    s.counts.mmfs = 40;
    s.run.warmup = 20;
    s.run.horizon = 60;
    s
}

#[test]
fn identical_seed_identical_csv() {
    let s = small();
    let a = timeseries_csv(&run_simulation(&s, 9).unwrap());
    let b = timeseries_csv(&run_simulation(&s, 9).unwrap());
    assert_eq!(a, b);
    let c = timeseries_csv(&run_simulation(&s, 10).unwrap());
    assert_ne!(a, c);
}

#[test]
fn null_shock_no_transitions_500_steps() {
    let mut s = Scenario::default();
    s.shock.p = 1.0;
    s.shock.q = 0.0;
    s.run.horizon = 500 - s.run.warmup;
    let failures: Vec<(u64, usize, usize)> = (0..10u64)
        .into_par_iter()
        .filter_map(|seed| {
            let r = run_simulation(&s, seed).unwrap();
            let last = r.last().unwrap();
            (last.n_defaulted + last.n_bankrupt > 0 || r.iter().any(|x| x.transitions > 0))
                .then_some((seed, last.n_defaulted, last.n_bankrupt))
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn per_step_invariants_through_a_crisis() {
    let s = small();
    let mut sim = Simulation::new(&s, 5).unwrap();
    let mut bankrupt_before: Vec<bool> = vec![false; sim.market.agents.len()];
    let mut last_bankrupt = 0;
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..s.total_steps() {
        let r = sim.step();
        let m = &sim.market;

        assert!(r.audit.cash_error <= 1e-9, "step {}: cash {}", r.step, r.audit.cash_error);
        assert!(r.audit.quantity_error <= 1e-9, "step {}: quantity {}", r.step, r.audit.quantity_error);
        assert!(r.n_bankrupt >= last_bankrupt);
        last_bankrupt = r.n_bankrupt;
        assert_eq!(r.n_solvent + r.n_defaulted + r.n_bankrupt, m.agents.len());

        for (i, a) in m.agents.iter().enumerate() {
            if bankrupt_before[i] {
                assert_eq!(a.state, SolvencyState::Bankrupt, "agent {i} left bankruptcy");
            }
            bankrupt_before[i] = a.state == SolvencyState::Bankrupt;

            let ta = a.sheet.total_assets(&m.prices).unwrap();
            let nav = compute_nav(&a.sheet, &m.prices).unwrap();
            assert!((ta - nav - a.sheet.total_liabilities()).abs() <= 1e-9 * ta.abs().max(1.0));
            for asset in AssetId::ALL {
                assert!(a.sheet.encumbered[asset] <= a.sheet.holdings[asset] * (1.0 + 1e-12) + 1e-9);
            }
        }
        for l in m.funding.loans() {
            assert_eq!(l.opened_at, m.step, "loan {:?} outlived its night", l.id);
        }
        m.funding.check_consistency(&m.agents).unwrap();

        // After the shock, a non-rising selling probability never lowers the haircut.
        if r.step >= s.shock_step() {
            if let Some((p_prev, h_prev)) = prev {
                if r.risky_p_sell <= p_prev {
                    assert!(r.avg_haircut >= h_prev - 1e-12, "step {}", r.step);
                }
            }
            prev = Some((r.risky_p_sell, r.avg_haircut));
        }
    }
}

#[test]
fn shock_deleverages_banks() {
    let s = small();
    let r = run_simulation(&s, 2).unwrap();
    let before = r[s.shock_step() as usize - 1].avg_leverage;
    let after = r.last().unwrap().avg_leverage;
    assert!(after < before, "{before} -> {after}");
    assert!(r.iter().any(|x| x.avg_haircut >= 1.0 - 1e-9));
}

#[test]
fn only_banks_borrow_in_repo() {
    let s = small();
    let sim = Simulation::new(&s, 3).unwrap();
    let m = &sim.market;
    assert!(m.funding.repos().count() > 0);
    for r in m.funding.repos() {
        assert_eq!(m.agents[r.borrower.0].kind, AgentKind::Bank);
        assert_eq!(m.agents[r.lender.0].kind, AgentKind::MoneyMarketFund);
        assert_eq!(r.collateral_asset, AssetId::RiskyAsset);
    }
}
