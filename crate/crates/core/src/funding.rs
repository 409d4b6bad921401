//! Overnight repos and interbank loans.
//!
//! The registry owns every live contract. Each operation also updates the
//! aggregate funding lines on the affected balance sheets, so that
//! [`FundingRegistry::check_consistency`] holds after every call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{
    pair_mut, sell_bonds_at_par, Agent, AgentId, AgentKind, ExternalFlows, SolvencyState, DUST,
};
use crate::assets::{AssetId, Prices};
use crate::risk::{compute_haircut, interbank_spread};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoanId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DueId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepoContract {
    pub id: RepoId,
    pub lender: AgentId,
    pub borrower: AgentId,
    pub collateral_asset: AssetId,
    pub collateral_quantity: f64,
    pub principal: f64,
    pub haircut: f64,
    pub opened_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoanContract {
    pub id: LoanId,
    pub lender: AgentId,
    pub borrower: AgentId,
    pub principal: f64,
    pub rate: f64,
    pub opened_at: u64,
}

/// An amount past its overnight tenor: a repo that was not renewed or a
/// loan that was not repaid in full.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DueObligation {
    pub id: DueId,
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub amount: f64,
    /// Collateral still pledged to the creditor, for terminated repos.
    pub collateral: Option<(AssetId, f64)>,
    pub since: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FundingError {
    #[error("haircut {0} makes the collateral unacceptable")]
    CollateralUnacceptable(f64),
    #[error("lender {lender} has {cash} cash, principal is {principal}")]
    Rejected { lender: AgentId, cash: f64, principal: f64 },
    #[error("borrower {borrower} can pledge {available}, needs {needed}")]
    MissingCollateral { borrower: AgentId, available: f64, needed: f64 },
    #[error("invalid collateral asset {}", .0.name())]
    InvalidCollateral(AssetId),
    #[error("registry out of sync with balance sheet of {agent}: {line} is {sheet}, contracts sum to {contracts}")]
    Inconsistent { agent: AgentId, line: &'static str, sheet: f64, contracts: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RenewalOutcome {
    Renewed,
    MarginCall(f64),
    Terminated,
}

/// Why an interbank loan request failed.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoanDenial {
    #[error("no solvent bank has spare cash for the request")]
    NoLender,
    #[error("borrower has no liquid assets against outstanding loans")]
    NoLiquidity,
}

/// Decides whether an overnight repo rolls.
///
/// The required collateral value is `principal / (1 − haircut)`; any gap
/// against the current value is called in cash. A haircut of one, or a call
/// larger than `borrower_cash`, ends the repo.
pub fn evaluate_repo_renewal(repo: &RepoContract, price: f64, haircut: f64, borrower_cash: f64) -> RenewalOutcome {
    if haircut >= 1.0 {
        return RenewalOutcome::Terminated;
    }
    let lendable = repo.collateral_quantity * price.max(0.0) * (1.0 - haircut);
    let call = (repo.principal - lendable).max(0.0);
    if call <= DUST {
        RenewalOutcome::Renewed
    } else if borrower_cash + DUST >= call {
        RenewalOutcome::MarginCall(call.min(repo.principal))
    } else {
        RenewalOutcome::Terminated
    }
}

/// `principal · (1 + rate · accrual)`.
pub fn loan_repayment(loan: &LoanContract, accrual: f64) -> f64 {
    loan.principal * (1.0 + loan.rate * accrual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RepoEvent {
    Renewed { repo: RepoId, haircut: f64 },
    MarginCallPaid { repo: RepoId, amount: f64 },
    Terminated { repo: RepoId, due: DueId, amount: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObligationKind {
    Loan(LoanId),
    Due(DueId),
}

/// Outcome of one obligation in overnight settlement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObligationOutcome {
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub obligation: ObligationKind,
    pub amount: f64,
    pub paid: f64,
    /// Set when an unpaid loan remainder was booked as a due.
    pub rolled_to: Option<DueId>,
}

/// Parameters of the nightly settlement pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlementParams {
    pub r_f: f64,
    /// Fraction of a year per step.
    pub accrual: f64,
    pub bond_price: f64,
}

/// What happened to a bankrupt agent's contracts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub agent: Option<AgentId>,
    pub seized: Vec<(AgentId, AssetId, f64)>,
    pub paid_unsecured: f64,
    pub written_off: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FundingRegistry {
    repos: BTreeMap<RepoId, RepoContract>,
    loans: BTreeMap<LoanId, LoanContract>,
    dues: BTreeMap<DueId, DueObligation>,
    next_id: u64,
}

impl FundingRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn repos(&self) -> impl Iterator<Item = &RepoContract> {
        self.repos.values()
    }

    pub fn loans(&self) -> impl Iterator<Item = &LoanContract> {
        self.loans.values()
    }

    pub fn dues(&self) -> impl Iterator<Item = &DueObligation> {
        self.dues.values()
    }

    pub fn repo(&self, id: RepoId) -> Option<&RepoContract> {
        self.repos.get(&id)
    }

    pub fn due(&self, id: DueId) -> Option<&DueObligation> {
        self.dues.get(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.repos.is_empty() && self.loans.is_empty() && self.dues.is_empty()
    }

    /// Opens a repo of `quantity` units of `asset` valued at `price`.
    #[allow(clippy::too_many_arguments)]
    pub fn open_repo(
        &mut self,
        agents: &mut [Agent],
        lender: AgentId,
        borrower: AgentId,
        asset: AssetId,
        quantity: f64,
        price: f64,
        haircut: f64,
        step: u64,
    ) -> Result<RepoId, FundingError> {
        if asset == AssetId::Stock {
            return Err(FundingError::InvalidCollateral(asset));
        }
        if haircut >= 1.0 {
            return Err(FundingError::CollateralUnacceptable(haircut));
        }
        let haircut = haircut.max(0.0);
        let principal = quantity * price * (1.0 - haircut);
        let (l, b) = pair_mut(agents, lender, borrower);
        let available = b.sheet.sellable(asset);
        if available + 1e-9 * quantity.abs() < quantity {
            return Err(FundingError::MissingCollateral { borrower, available, needed: quantity });
        }
        if l.sheet.cash < principal {
            return Err(FundingError::Rejected { lender, cash: l.sheet.cash, principal });
        }
        l.sheet.cash -= principal;
        l.sheet.repo_lent += principal;
        b.sheet.cash += principal;
        b.sheet.repo_borrowed += principal;
        b.sheet.encumbered[asset] += quantity.min(b.sheet.holdings[asset]);
        let id = RepoId(self.fresh());
        self.repos.insert(
            id,
            RepoContract {
                id,
                lender,
                borrower,
                collateral_asset: asset,
                collateral_quantity: quantity,
                principal,
                haircut,
                opened_at: step,
            },
        );
        Ok(id)
    }

    /// Pays `amount` of the principal back in cash and records the new
    /// haircut.
    fn pay_margin(&mut self, agents: &mut [Agent], id: RepoId, amount: f64, haircut: f64) {
        let repo = self.repos.get_mut(&id).expect("live repo");
        let amount = amount.min(repo.principal);
        let (l, b) = pair_mut(agents, repo.lender, repo.borrower);
        b.sheet.cash -= amount;
        b.sheet.repo_borrowed -= amount;
        l.sheet.cash += amount;
        l.sheet.repo_lent -= amount;
        repo.principal -= amount;
        repo.haircut = haircut;
    }

    /// Ends a repo; the principal becomes a due secured by the same
    /// collateral.
    pub fn terminate_repo(&mut self, agents: &mut [Agent], id: RepoId, step: u64) -> Option<DueId> {
        let repo = self.repos.remove(&id)?;
        let (l, b) = pair_mut(agents, repo.lender, repo.borrower);
        let asset = repo.collateral_asset;
        b.sheet.repo_borrowed -= repo.principal;
        b.sheet.dues_owed += repo.principal;
        let qty = repo.collateral_quantity.min(b.sheet.encumbered[asset]);
        b.sheet.encumbered[asset] -= qty;
        b.sheet.pledged_due[asset] += qty;
        l.sheet.repo_lent -= repo.principal;
        l.sheet.dues_receivable += repo.principal;
        let due = DueId(self.fresh());
        self.dues.insert(
            due,
            DueObligation {
                id: due,
                debtor: repo.borrower,
                creditor: repo.lender,
                amount: repo.principal,
                collateral: Some((asset, qty)),
                since: step,
            },
        );
        Some(due)
    }

    /// Margin call from a collateral write-down. Pays it if the borrower can,
    /// otherwise terminates the repo.
    pub fn margin_call(
        &mut self,
        agents: &mut [Agent],
        id: RepoId,
        amount: f64,
        new_haircut: f64,
        step: u64,
    ) -> RepoEvent {
        let repo = self.repos[&id];
        let cash = agents[repo.borrower.0].sheet.cash;
        if new_haircut < 1.0 && cash + DUST >= amount {
            self.pay_margin(agents, id, amount, new_haircut);
            RepoEvent::MarginCallPaid { repo: id, amount }
        } else {
            let due = self.terminate_repo(agents, id, step).expect("live repo");
            RepoEvent::Terminated { repo: id, due, amount: repo.principal }
        }
    }

    /// Rolls every repo for one more night at the haircut implied by the
    /// collateral's current selling probability. Interest for the night just
    /// ended is paid from cash, or added to the principal when cash is short.
    pub fn renew_repos(
        &mut self,
        agents: &mut [Agent],
        prices: &Prices,
        p_sell: &Prices,
        interest_rate: f64,
        step: u64,
    ) -> Vec<RepoEvent> {
        let ids: Vec<RepoId> = self.repos.keys().copied().collect();
        let mut events = Vec::with_capacity(ids.len());
        for id in ids {
            let repo = self.repos[&id];
            if agents[repo.borrower.0].state == SolvencyState::Bankrupt {
                continue;
            }
            let interest = repo.principal * interest_rate;
            if interest > 0.0 {
                let (l, b) = pair_mut(agents, repo.lender, repo.borrower);
                if b.sheet.cash >= interest {
                    b.sheet.cash -= interest;
                    l.sheet.cash += interest;
                } else {
                    b.sheet.repo_borrowed += interest;
                    l.sheet.repo_lent += interest;
                    self.repos.get_mut(&id).expect("live repo").principal += interest;
                }
            }
            let repo = self.repos[&id];
            let asset = repo.collateral_asset;
            let haircut = compute_haircut(p_sell[asset]);
            let cash = agents[repo.borrower.0].sheet.cash;
            match evaluate_repo_renewal(&repo, prices[asset], haircut, cash) {
                RenewalOutcome::Renewed => {
                    self.repos.get_mut(&id).expect("live repo").haircut = haircut;
                    events.push(RepoEvent::Renewed { repo: id, haircut });
                }
                RenewalOutcome::MarginCall(amount) => {
                    self.pay_margin(agents, id, amount, haircut);
                    events.push(RepoEvent::MarginCallPaid { repo: id, amount });
                }
                RenewalOutcome::Terminated => {
                    let due = self.terminate_repo(agents, id, step).expect("live repo");
                    events.push(RepoEvent::Terminated { repo: id, due, amount: repo.principal });
                }
            }
        }
        events
    }

    /// Overnight loan from the solvent bank with the most spare cash.
    ///
    /// `reserve` gives each bank's cash reserve; spare cash is cash above it.
    /// The rate is `r_f + δ` with δ from the borrower's loans already
    /// outstanding and its liquidity-weighted holdings.
    #[allow(clippy::too_many_arguments)]
    pub fn request_interbank_loan(
        &mut self,
        agents: &mut [Agent],
        borrower: AgentId,
        amount: f64,
        r_f: f64,
        prices: &Prices,
        p_sell: &Prices,
        reserve: impl Fn(&Agent) -> f64,
        step: u64,
    ) -> Result<LoanId, LoanDenial> {
        if amount <= 0.0 {
            return Err(LoanDenial::NoLender);
        }
        let b = &agents[borrower.0];
        let portfolio: Vec<(f64, f64)> =
            AssetId::ALL.iter().map(|&a| (b.sheet.sellable(a) * prices[a], p_sell[a])).collect();
        let delta = interbank_spread(b.sheet.loans_borrowed, &portfolio).map_err(|_| LoanDenial::NoLiquidity)?;
        let mut best: Option<(AgentId, f64)> = None;
        for a in agents.iter() {
            if a.id == borrower || a.kind != AgentKind::Bank || a.state != SolvencyState::Solvent {
                continue;
            }
            let spare = a.sheet.cash - reserve(a);
            if spare + DUST < amount {
                continue;
            }
            // Strictly greater keeps the lowest id on ties.
            if best.is_none_or(|(_, s)| spare > s) {
                best = Some((a.id, spare));
            }
        }
        let (lender, _) = best.ok_or(LoanDenial::NoLender)?;
        let (l, b) = pair_mut(agents, lender, borrower);
        l.sheet.cash -= amount;
        l.sheet.loans_lent += amount;
        b.sheet.cash += amount;
        b.sheet.loans_borrowed += amount;
        let id = LoanId(self.fresh());
        self.loans.insert(id, LoanContract { id, lender, borrower, principal: amount, rate: r_f + delta, opened_at: step });
        Ok(id)
    }

    /// Nightly settlement: loans opened on earlier steps fall due with
    /// interest, and overdue amounts are paid where possible.
    ///
    /// Each debtor pays from cash, then from bonds sold to the external desk
    /// at par, then from one new interbank loan for the remaining shortfall.
    /// Unpaid loan remainders become unsecured dues. A due paid in full
    /// releases its collateral.
    #[allow(clippy::too_many_arguments)]
    pub fn settle_overnight_obligations(
        &mut self,
        agents: &mut [Agent],
        step: u64,
        params: &SettlementParams,
        prices: &Prices,
        p_sell: &Prices,
        reserve: impl Fn(&Agent) -> f64 + Copy,
        flows: &mut ExternalFlows,
    ) -> Vec<ObligationOutcome> {
        let mut per_debtor: BTreeMap<AgentId, Vec<(ObligationKind, f64)>> = BTreeMap::new();
        for loan in self.loans.values().filter(|l| l.opened_at < step) {
            per_debtor
                .entry(loan.borrower)
                .or_default()
                .push((ObligationKind::Loan(loan.id), loan_repayment(loan, params.accrual)));
        }
        for due in self.dues.values() {
            per_debtor.entry(due.debtor).or_default().push((ObligationKind::Due(due.id), due.amount));
        }

        let mut outcomes = Vec::new();
        for (debtor, obligations) in per_debtor {
            if agents[debtor.0].state == SolvencyState::Bankrupt {
                continue;
            }
            let need: f64 = obligations.iter().map(|(_, a)| a).sum();
            let cash = agents[debtor.0].sheet.cash;
            if cash < need {
                sell_bonds_at_par(&mut agents[debtor.0], need - cash, params.bond_price, flows);
            }
            let cash = agents[debtor.0].sheet.cash;
            if cash + DUST < need && agents[debtor.0].kind == AgentKind::Bank {
                let _ = self.request_interbank_loan(
                    agents,
                    debtor,
                    need - cash,
                    params.r_f,
                    prices,
                    p_sell,
                    reserve,
                    step,
                );
            }
            for (kind, amount) in obligations {
                outcomes.push(self.pay_obligation(agents, debtor, kind, amount, step));
            }
        }
        outcomes
    }

    fn pay_obligation(
        &mut self,
        agents: &mut [Agent],
        debtor: AgentId,
        kind: ObligationKind,
        amount: f64,
        step: u64,
    ) -> ObligationOutcome {
        let paid = agents[debtor.0].sheet.cash.max(0.0).min(amount);
        match kind {
            ObligationKind::Loan(id) => {
                let loan = self.loans.remove(&id).expect("live loan");
                let (l, b) = pair_mut(agents, loan.lender, loan.borrower);
                b.sheet.cash -= paid;
                l.sheet.cash += paid;
                b.sheet.loans_borrowed -= loan.principal;
                l.sheet.loans_lent -= loan.principal;
                let unpaid = amount - paid;
                let rolled_to = if unpaid > DUST {
                    b.sheet.dues_owed += unpaid;
                    l.sheet.dues_receivable += unpaid;
                    let due = DueId(self.fresh());
                    self.dues.insert(
                        due,
                        DueObligation {
                            id: due,
                            debtor,
                            creditor: loan.lender,
                            amount: unpaid,
                            collateral: None,
                            since: step,
                        },
                    );
                    Some(due)
                } else {
                    None
                };
                ObligationOutcome { debtor, creditor: loan.lender, obligation: kind, amount, paid, rolled_to }
            }
            ObligationKind::Due(id) => {
                let due = self.dues[&id];
                let (c, d) = pair_mut(agents, due.creditor, due.debtor);
                d.sheet.cash -= paid;
                c.sheet.cash += paid;
                d.sheet.dues_owed -= paid;
                c.sheet.dues_receivable -= paid;
                let remaining = due.amount - paid;
                if remaining <= DUST {
                    // Book the dust too so the sheets match the registry.
                    d.sheet.dues_owed -= remaining;
                    c.sheet.dues_receivable -= remaining;
                    if let Some((asset, qty)) = due.collateral {
                        d.sheet.pledged_due[asset] = (d.sheet.pledged_due[asset] - qty).max(0.0);
                    }
                    self.dues.remove(&id);
                } else {
                    self.dues.get_mut(&id).expect("live due").amount = remaining;
                }
                ObligationOutcome { debtor, creditor: due.creditor, obligation: kind, amount, paid, rolled_to: None }
            }
        }
    }

    /// Closes out every contract owed by a bankrupt agent.
    ///
    /// Secured creditors seize collateral up to the value of their claim.
    /// What remains, together with unsecured loans and dues, is paid pro rata
    /// from the bankrupt's cash and the rest is written off. Contracts in
    /// which the bankrupt is the creditor stay open.
    pub fn resolve_bankruptcy(&mut self, agents: &mut [Agent], bankrupt: AgentId, prices: &Prices) -> Resolution {
        let mut res = Resolution { agent: Some(bankrupt), ..Resolution::default() };
        // (creditor, claim) after collateral.
        let mut claims: Vec<(AgentId, f64)> = Vec::new();

        let repo_ids: Vec<RepoId> = self.repos.values().filter(|r| r.borrower == bankrupt).map(|r| r.id).collect();
        for id in repo_ids {
            let repo = self.repos.remove(&id).expect("live repo");
            let (l, b) = pair_mut(agents, repo.lender, bankrupt);
            b.sheet.repo_borrowed -= repo.principal;
            l.sheet.repo_lent -= repo.principal;
            let asset = repo.collateral_asset;
            let pledged = repo.collateral_quantity.min(b.sheet.encumbered[asset]);
            b.sheet.encumbered[asset] -= pledged;
            let residual = seize(l, b, asset, pledged, repo.principal, prices[asset], &mut res);
            claims.push((repo.lender, residual));
        }

        let due_ids: Vec<DueId> = self.dues.values().filter(|d| d.debtor == bankrupt).map(|d| d.id).collect();
        for id in due_ids {
            let due = self.dues.remove(&id).expect("live due");
            let (c, d) = pair_mut(agents, due.creditor, bankrupt);
            d.sheet.dues_owed -= due.amount;
            c.sheet.dues_receivable -= due.amount;
            let residual = match due.collateral {
                Some((asset, qty)) => {
                    let pledged = qty.min(d.sheet.pledged_due[asset]);
                    d.sheet.pledged_due[asset] -= pledged;
                    seize(c, d, asset, pledged, due.amount, prices[asset], &mut res)
                }
                None => due.amount,
            };
            claims.push((due.creditor, residual));
        }

        let loan_ids: Vec<LoanId> = self.loans.values().filter(|l| l.borrower == bankrupt).map(|l| l.id).collect();
        for id in loan_ids {
            let loan = self.loans.remove(&id).expect("live loan");
            let (l, b) = pair_mut(agents, loan.lender, bankrupt);
            b.sheet.loans_borrowed -= loan.principal;
            l.sheet.loans_lent -= loan.principal;
            claims.push((loan.lender, loan.principal));
        }

        let total: f64 = claims.iter().map(|(_, c)| c).sum();
        if total > 0.0 {
            let pool = agents[bankrupt.0].sheet.cash.max(0.0).min(total);
            for (creditor, claim) in &claims {
                let share = pool * claim / total;
                agents[bankrupt.0].sheet.cash -= share;
                agents[creditor.0].sheet.cash += share;
                res.paid_unsecured += share;
            }
            res.written_off = total - pool;
        }
        res
    }

    /// Verifies the sheets' funding lines against the contracts.
    pub fn check_consistency(&self, agents: &[Agent]) -> Result<(), FundingError> {
        let n = agents.len();
        let mut lines = vec![[0.0f64; 6]; n];
        for r in self.repos.values() {
            lines[r.borrower.0][0] += r.principal;
            lines[r.lender.0][1] += r.principal;
        }
        for l in self.loans.values() {
            lines[l.borrower.0][2] += l.principal;
            lines[l.lender.0][3] += l.principal;
        }
        for d in self.dues.values() {
            lines[d.debtor.0][4] += d.amount;
            lines[d.creditor.0][5] += d.amount;
        }
        const NAMES: [&str; 6] =
            ["repo_borrowed", "repo_lent", "loans_borrowed", "loans_lent", "dues_owed", "dues_receivable"];
        for (agent, sums) in agents.iter().zip(&lines) {
            let s = &agent.sheet;
            let sheet = [s.repo_borrowed, s.repo_lent, s.loans_borrowed, s.loans_lent, s.dues_owed, s.dues_receivable];
            for k in 0..6 {
                let tol = 1e-9 * sums[k].abs().max(sheet[k].abs()).max(1.0) + 1e-6;
                if (sheet[k] - sums[k]).abs() > tol {
                    return Err(FundingError::Inconsistent {
                        agent: agent.id,
                        line: NAMES[k],
                        sheet: sheet[k],
                        contracts: sums[k],
                    });
                }
            }
        }
        Ok(())
    }
}

/// Moves collateral worth up to `claim` from debtor to creditor and returns
/// the claim left unsecured.
fn seize(
    creditor: &mut Agent,
    debtor: &mut Agent,
    asset: AssetId,
    pledged: f64,
    claim: f64,
    price: f64,
    res: &mut Resolution,
) -> f64 {
    let pledged = pledged.min(debtor.sheet.holdings[asset]).max(0.0);
    let qty = if price > 0.0 { pledged.min(claim / price) } else { pledged };
    debtor.sheet.holdings[asset] -= qty;
    creditor.sheet.holdings[asset] += qty;
    if qty > 0.0 {
        res.seized.push((creditor.id, asset, qty));
    }
    (claim - qty * price.max(0.0)).max(0.0)
}
