//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use repo_contagion::accounting::AgentId;
use repo_contagion::assets::{step_dividend, AssetId, DividendState, StepVolume};
use repo_contagion::engine::{run_simulation, StepReport};
use repo_contagion::funding::{evaluate_repo_renewal, RenewalOutcome, RepoContract, RepoId};
use repo_contagion::output::{aggregate, timeseries_csv};
use repo_contagion::risk::{compute_haircut, delta_normal_var, selling_probability};
use repo_contagion::scenario::Scenario;
use repo_contagion::sis::{epidemic_threshold, integrate_sis, ring_lattice, star, steady_state_density};
use repo_contagion::strategy::{compute_indicator, IndicatorKind};

const SEEDS: u64 = 20;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

#[derive(Clone)]
struct Run {
    seed: u64,
    reports: Vec<StepReport>,
    elapsed: Duration,
}

fn runs(s: &Scenario) -> Vec<Run> {
    (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let t = Instant::now();
            let reports = run_simulation(s, seed).expect("valid scenario");
            Run { seed, reports, elapsed: t.elapsed() }
        })
        .collect()
}

fn with_shock(p: f64, q: f64) -> Scenario {
    let mut s = Scenario::default();
    s.shock.p = p;
    s.shock.q = q;
    s
}

fn final_bankrupt(r: &Run) -> f64 {
    r.reports.last().map_or(0, |x| x.n_bankrupt) as f64
}

fn repo_freeze(rep: &mut Report, s: &Scenario, base: &[Run]) {
    let shock = s.shock_step();
    let frozen = base
        .iter()
        .filter(|r| {
            r.reports
                .iter()
                .filter(|x| x.step >= shock && x.step <= shock + 200)
                .any(|x| x.avg_haircut >= 1.0 - 1e-12)
        })
        .count();
    let slowest = base.iter().map(|r| r.elapsed).max().unwrap_or_default();
    rep.check(
        "repo freeze",
        frozen >= 18 && slowest < Duration::from_secs(10),
        format!("haircut reached 1.0 in {frozen}/{SEEDS} seeds (need >= 18); slowest run {slowest:.2?} (limit 10s)"),
    );
}

fn deleverage(rep: &mut Report, s: &Scenario, base: &[Run]) {
    let before_idx = s.shock_step() as usize - 1;
    let pre: Vec<f64> = base.iter().map(|r| r.reports[before_idx].avg_leverage).collect();
    let post: Vec<f64> = base.iter().map(|r| r.reports.last().unwrap().avg_leverage).collect();
    let lower = pre.iter().zip(&post).filter(|(a, b)| b < a).count();
    let mean_pre = pre.iter().sum::<f64>() / pre.len() as f64;
    let mean_post = post.iter().sum::<f64>() / post.len() as f64;
    rep.check(
        "deleverage direction",
        lower == SEEDS as usize && (3.0..=4.5).contains(&mean_pre),
        format!(
            "leverage fell in {lower}/{SEEDS} seeds; mean {mean_pre:.3} -> {mean_post:.3} (pre-shock must lie in [3.0, 4.5])"
        ),
    );
}

fn cascade(rep: &mut Report, s: &Scenario, base: &[Run], null: &[Run]) {
    let banks = s.counts.banks as f64;
    let mean = base.iter().map(|r| final_bankrupt(r) / banks).sum::<f64>() / base.len() as f64;
    let clean = null.iter().filter(|r| r.reports.last().unwrap().n_bankrupt == 0).count();
    rep.check(
        "cascade magnitude",
        (0.20..=0.60).contains(&mean) && clean == SEEDS as usize,
        format!("mean bankrupt fraction {mean:.3} (need [0.20, 0.60]); null shock clean in {clean}/{SEEDS} seeds"),
    );
}

fn monotonicity(rep: &mut Report, sweeps: &[(f64, Vec<Run>)]) {
    let points: Vec<_> = sweeps
        .iter()
        .map(|(p, runs)| aggregate(*p, &runs.iter().map(final_bankrupt).collect::<Vec<_>>()))
        .collect();
    let mut inversions = Vec::new();
    for w in points.windows(2) {
        let drop = w[0].mean_final_bankrupt - w[1].mean_final_bankrupt;
        if drop > 0.0 {
            let se = w[0].stderr_final_bankrupt.max(w[1].stderr_final_bankrupt);
            inversions.push((w[1].param_value, drop, se));
        }
    }
    let ok = inversions.iter().all(|(_, drop, se)| drop <= se);
    let means: Vec<String> =
        points.iter().map(|p| format!("p={:.1}:{:.2}±{:.2}", p.param_value, p.mean_final_bankrupt, p.stderr_final_bankrupt)).collect();
    rep.check(
        "shock-severity monotonicity",
        ok,
        format!("mean final bankrupt {}; {} inversion(s), all within one standard error: {ok}", means.join(" "), inversions.len()),
    );
}

fn sis_analytic(rep: &mut Report) {
    let t = Instant::now();
    let k = 4.0;
    let net = ring_lattice(100, 4).unwrap();
    let mut worst: f64 = 0.0;
    for lk in [1.5, 2.0, 4.0] {
        let rho = steady_state_density(lk / k, &net, 1e-12).unwrap();
        let expect = 1.0 - 1.0 / lk;
        worst = rho.iter().map(|r| (r - expect).abs()).fold(worst, f64::max);
    }
    let sub = steady_state_density(0.9 / k, &net, 1e-12).unwrap();
    let sub_max = sub.iter().copied().fold(0.0, f64::max);
    let lc_err = (epidemic_threshold(&net).unwrap() - 1.0 / k).abs();
    let mut star_err: f64 = 0.0;
    for n in [4usize, 16, 50, 100] {
        let lc = epidemic_threshold(&star(n)).unwrap();
        star_err = star_err.max((lc - 1.0 / (n as f64).sqrt()).abs());
    }
    let elapsed = t.elapsed();
    rep.check(
        "SIS analytic oracle",
        worst <= 1e-6 && sub_max <= 1e-8 && lc_err <= 1e-10 && star_err <= 1e-8 && elapsed < Duration::from_secs(1),
        format!(
            "endemic error {worst:.1e} (1e-6); sub-threshold max {sub_max:.1e} (1e-8); λ_c error {lc_err:.1e} (1e-10); \
             star λ_c error {star_err:.1e} (1e-8); {elapsed:.2?} (limit 1s)"
        ),
    );
}

fn sis_decay(rep: &mut Report) {
    let net = ring_lattice(100, 4).unwrap();
    let rho0 = 0.5;
    let traj = integrate_sis(&vec![rho0; 100], 0.0, &net, 0.01, 10.0, 1).unwrap();
    let mut worst: f64 = 0.0;
    for t in [1.0, 5.0, 10.0] {
        let i = traj.times.iter().position(|x| (x - t).abs() < 1e-9).expect("sample stored");
        let expect = rho0 * (-t).exp();
        worst = traj.rho[i].iter().map(|r| (r - expect).abs()).fold(worst, f64::max);
    }
    rep.check("SIS decay oracle", worst <= 1e-6, format!("max error at t = 1, 5, 10: {worst:.1e} (1e-6)"));
}

fn formula_suite(rep: &mut Report) {
    let mut failed = Vec::new();
    let mut case = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    case("haircut P_sell=1", compute_haircut(1.0) == 0.0);
    case("haircut P_sell=0", compute_haircut(0.0) == 1.0);
    case("haircut P_sell=0.7", (compute_haircut(0.7) - 0.3).abs() < 1e-15);

    let repo = RepoContract {
        id: RepoId(0),
        lender: AgentId(1),
        borrower: AgentId(0),
        collateral_asset: AssetId::RiskyAsset,
        collateral_quantity: 1.0,
        principal: 80.0,
        haircut: 0.0,
        opened_at: 0,
    };
    case("renewal unchanged", evaluate_repo_renewal(&repo, 80.0, 0.0, 0.0) == RenewalOutcome::Renewed);
    case(
        "margin call (1-p)n",
        matches!(evaluate_repo_renewal(&repo, 0.8 * 80.0, 0.0, 100.0), RenewalOutcome::MarginCall(c) if (c - 16.0).abs() < 1e-12),
    );
    case("margin call unaffordable", evaluate_repo_renewal(&repo, 0.8 * 80.0, 0.0, 0.0) == RenewalOutcome::Terminated);
    case("haircut one terminates", evaluate_repo_renewal(&repo, 80.0, 1.0, 1e9) == RenewalOutcome::Terminated);

    case("VaR boundary", delta_normal_var(1.645 * 2.0, 2.0, 1.645) == 0.0);
    case("VaR 3.29", (delta_normal_var(0.0, 2.0, 1.645) - 3.29).abs() < 1e-12);
    case("VaR sigma 0", delta_normal_var(5.0, 0.0, 1.645) == -5.0);

    let v = |sell, buy| StepVolume { sell, buy };
    case("P_sell balanced", selling_probability(&[v(5.0, 5.0); 3], 3) == 1.0);
    case("P_sell no buyers", selling_probability(&[v(5.0, 0.0); 3], 3) == 0.0);
    case("P_sell sell=2buy", (selling_probability(&[v(4.0, 2.0); 3], 3) - 0.5).abs() < 1e-15);

    let flat = vec![100.0; 40];
    for kind in IndicatorKind::ALL {
        case(&format!("flat {kind:?}"), compute_indicator(kind, 5, &flat).unwrap() == 0.0);
    }

    let mut d = DividendState::new(10.0, 0.95, 0.5);
    case("dividend fixed point", step_dividend(&mut d, 0.0) == 10.0);
    d.d_prev = 20.0;
    case("dividend from 20", (step_dividend(&mut d, 0.0) - 19.5).abs() < 1e-12);
    d.d_prev = 0.0;
    case("dividend from 0", (step_dividend(&mut d, 0.0) - 0.5).abs() < 1e-12);

    rep.check(
        "formula unit suite",
        failed.is_empty(),
        if failed.is_empty() { "all worked examples hold".into() } else { format!("failed: {}", failed.join(", ")) },
    );
}

fn conservation_and_determinism(rep: &mut Report, s: &Scenario, base: &[Run]) {
    let run = &base[0];
    let worst = run.reports.iter().map(|r| r.audit.cash_error.max(r.audit.quantity_error)).fold(0.0, f64::max);
    let again = run_simulation(s, run.seed).unwrap();
    let identical = timeseries_csv(&again) == timeseries_csv(&run.reports);
    let steps = run.reports.len() - 1;
    rep.check(
        "conservation and determinism",
        worst <= 1e-9 && identical && steps >= 250,
        format!("max relative conservation error {worst:.1e} over {steps} steps (1e-9); repeated CSV byte-identical: {identical}"),
    );
}

fn main() {
    let mut rep = Report { failures: 0 };

    formula_suite(&mut rep);
    sis_analytic(&mut rep);
    sis_decay(&mut rep);

    let s = Scenario::default();
    let base = runs(&s);
    repo_freeze(&mut rep, &s, &base);
    deleverage(&mut rep, &s, &base);
    let null = runs(&with_shock(1.0, 0.0));
    cascade(&mut rep, &s, &base, &null);
    conservation_and_determinism(&mut rep, &s, &base);

    let q = s.shock.q;
    let sweeps: Vec<(f64, Vec<Run>)> = [1.0, 0.9, 0.8, 0.7, 0.6]
        .into_iter()
        .map(|p| (p, if p == s.shock.p { base.clone() } else { runs(&with_shock(p, q)) }))
        .collect();
    monotonicity(&mut rep, &sweeps);

    if rep.failures > 0 {
        println!("{} criterion(s) failed", rep.failures);
        std::process::exit(1);
    }
}
