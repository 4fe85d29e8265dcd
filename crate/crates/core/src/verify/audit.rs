use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{expected_utility, MechOutcome, MechanismHandle, VerifyError};
use crate::instance::{aggregate_chain_curves, build_market_curves, own_curve, AgentId, MarketRole, SupplyChainInstance};
use crate::parallel;
use crate::price::Price;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub agent: Option<AgentId>,
    pub deviation: Option<Price>,
    /// Utility gained by deviating, or the size of the discrepancy.
    pub delta: Option<Price>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub audit: &'static str,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    fn new(audit: &'static str) -> Self {
        AuditReport {
            audit,
            checks: 0,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.checks += other.checks;
        self.violations.extend(other.violations);
    }

    fn check(&mut self, ok: bool, violation: impl FnOnce() -> Violation) {
        self.checks += 1;
        if !ok {
            self.violations.push(violation());
        }
    }
}

fn agents(instance: &SupplyChainInstance) -> Vec<AgentId> {
    instance.bids().map(|b| b.agent.clone()).collect()
}

fn is_buyer(instance: &SupplyChainInstance, agent: &AgentId) -> bool {
    instance.role(agent.market()) == MarketRole::Demand
}

/// Candidate deviations: every bid, every aggregated curve entry, every
/// payment and zero, plus the midpoints between consecutive values and one
/// point past the largest. Negative values are dropped.
pub fn deviation_grid(instance: &SupplyChainInstance, outcomes: &[MechOutcome]) -> Vec<Price> {
    let mut points: BTreeSet<Price> = instance.bids().map(|b| b.amount).collect();
    points.insert(Price::ZERO);
    let chain = aggregate_chain_curves(&build_market_curves(instance));
    for curve in chain.supply.iter().chain(&chain.demand).chain(&chain.conversion_demand) {
        points.extend(curve.prices());
    }
    for o in outcomes {
        points.extend(o.transfers.values().map(Price::abs));
    }
    let sorted: Vec<Price> = points.into_iter().filter(|p| !p.is_negative()).collect();
    let mut grid = sorted.clone();
    grid.extend(sorted.windows(2).map(|w| Price::midpoint(w[0], w[1])));
    if let Some(&top) = sorted.last() {
        grid.push(top + Price::ONE);
    }
    grid.sort();
    grid.dedup();
    grid
}

/// Checks that no agent gains (in expectation over the handle's coin mode)
/// by reporting any grid value instead of its true bid, and that truthful
/// utility is never negative.
pub fn ic_audit(mech: &MechanismHandle, instance: &SupplyChainInstance, grid: Option<&[Price]>) -> Result<AuditReport, VerifyError> {
    let truthful = mech.lottery(instance)?;
    let outcomes: Vec<MechOutcome> = truthful.iter().map(|(_, o)| o.clone()).collect();
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = deviation_grid(instance, &outcomes);
            &default_grid
        }
    };
    let parts = parallel::map_slice(&agents(instance), |agent| -> Result<AuditReport, VerifyError> {
        let mut report = AuditReport::new("ic");
        let truth_bid = instance.bid(agent).expect("agent in instance");
        let honest = expected_utility(instance, agent, &truthful);
        report.check(!honest.is_negative(), || Violation {
            check: "individual_rationality",
            agent: Some(agent.clone()),
            deviation: None,
            delta: Some(honest),
            detail: format!("truthful utility {honest}"),
        });
        for &d in grid.iter().filter(|&&d| d != truth_bid) {
            let lottery = mech.lottery(&instance.with_bid(agent, d))?;
            let deviant = expected_utility(instance, agent, &lottery);
            report.check(deviant <= honest, || Violation {
                check: "incentive_compatibility",
                agent: Some(agent.clone()),
                deviation: Some(d),
                delta: Some(deviant - honest),
                detail: format!("bidding {d} instead of {truth_bid} raises utility from {honest} to {deviant}"),
            });
        }
        Ok(report)
    });
    let mut report = AuditReport::new("ic");
    for part in parts {
        report.merge(part?);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CriticalValue {
    pub value: Price,
    /// The agent won (or lost) across the whole search interval, so `value`
    /// is just the interval end.
    pub at_edge: bool,
}

/// Locates the bid at which `agent` switches between losing and winning.
///
/// The search scans the deviation grid first (to catch non-monotonic
/// allocations), then bisects until the bracket is narrower than any gap
/// between two rationals whose denominator divides twice the common
/// denominator of all bids and rule parameters, and snaps to the simplest
/// rational in the bracket. The result is therefore exact for mechanisms
/// whose thresholds are such rationals.
pub fn critical_value_probe(
    mech: &MechanismHandle,
    instance: &SupplyChainInstance,
    agent: &AgentId,
    interval: Option<(Price, Price)>,
) -> Result<CriticalValue, VerifyError> {
    instance.bid(agent).ok_or_else(|| VerifyError::UnknownAgent(agent.clone()))?;
    let buyer = is_buyer(instance, agent);
    let wins = |b: Price| -> Result<bool, VerifyError> { Ok(mech.run(&instance.with_bid(agent, b))?.wins(agent)) };

    let max_bid = instance.bids().map(|b| b.amount).max().unwrap_or(Price::ZERO).max(Price::ONE);
    let (lo, mut hi) = interval.unwrap_or((Price::ZERO, max_bid + max_bid));
    // A buyer that still loses (or a seller that still wins) at the top may
    // have a threshold further out.
    for _ in 0..16 {
        if wins(hi)? != buyer {
            hi = hi + hi;
        } else {
            break;
        }
    }

    let truthful = mech.run(instance)?;
    let mut points: Vec<Price> = deviation_grid(instance, &[truthful])
        .into_iter()
        .filter(|&p| lo <= p && p <= hi)
        .chain([lo, hi])
        .collect();
    points.sort();
    points.dedup();
    if !buyer {
        points.reverse();
    }
    // Walk from the worst bid to the best; the agent must never stop winning.
    let mut last_lose = None;
    let mut first_win = None;
    for &p in &points {
        if wins(p)? {
            first_win.get_or_insert(p);
        } else if first_win.is_some() {
            return Err(VerifyError::NotMonotonic(agent.clone()));
        } else {
            last_lose = Some(p);
        }
    }
    let (mut lose, mut win) = match (last_lose, first_win) {
        (None, _) => {
            return Ok(CriticalValue {
                value: points[0],
                at_edge: true,
            })
        }
        (Some(_), None) => {
            return Ok(CriticalValue {
                value: *points.last().unwrap(),
                at_edge: true,
            })
        }
        (Some(l), Some(w)) => (l, w),
    };

    let mut prices: Vec<Price> = instance.bids().map(|b| b.amount).collect();
    prices.extend(mech.rule.alpha());
    if let crate::rules::DaRule::Kda(k) = mech.rule {
        prices.push(k);
    }
    let d = Price::common_denominator(&prices) * 2;
    let width = Price::new(1, 2 * d * d);
    while (win - lose).abs() >= width {
        let mid = Price::midpoint(win, lose);
        if wins(mid)? {
            win = mid;
        } else {
            lose = mid;
        }
    }
    Ok(CriticalValue {
        value: Price::simplest_between(win.min(lose), win.max(lose)),
        at_edge: false,
    })
}

/// Every winner's payment (buyers) or receipt (sellers) equals its probed
/// critical value.
pub fn critical_value_audit(mech: &MechanismHandle, instance: &SupplyChainInstance) -> Result<AuditReport, VerifyError> {
    let outcome = mech.run(instance)?;
    let winners: Vec<AgentId> = outcome.allocation.winners.iter().flatten().cloned().collect();
    let parts = parallel::map_slice(&winners, |agent| critical_value_probe(mech, instance, agent, None));
    let mut report = AuditReport::new("critical_value");
    for (agent, probe) in winners.iter().zip(parts) {
        let probe = probe?;
        let paid = outcome.transfer(agent).abs();
        report.check(paid == probe.value, || Violation {
            check: "payment_equals_critical_value",
            agent: Some(agent.clone()),
            deviation: None,
            delta: Some(paid - probe.value),
            detail: format!("transfer {paid}, critical value {}", probe.value),
        });
    }
    Ok(report)
}

/// Uniform prices per market, winners chosen in bid order, and no loser
/// whose bid strictly beats its market's price.
pub fn nd_audit(outcome: &MechOutcome, instance: &SupplyChainInstance) -> AuditReport {
    let mut report = AuditReport::new("nd");
    for (m, winners) in outcome.allocation.winners.iter().enumerate() {
        if winners.is_empty() {
            continue;
        }
        let prices: Vec<Price> = winners.iter().map(|a| outcome.transfer(a).abs()).collect();
        let uniform = prices.iter().all(|&p| p == prices[0]);
        report.check(uniform, || Violation {
            check: "uniform_price",
            agent: None,
            deviation: None,
            delta: None,
            detail: format!("market {m} prices {prices:?}"),
        });
        let curve = own_curve(instance, m);
        let best: BTreeSet<&AgentId> = curve.top_agents(winners.len()).collect();
        let chosen: BTreeSet<&AgentId> = winners.iter().collect();
        report.check(best == chosen, || Violation {
            check: "bid_order",
            agent: None,
            deviation: None,
            delta: None,
            detail: format!("market {m} winners {winners:?} are not its best bids"),
        });
        let buyer = instance.role(m) == MarketRole::Demand;
        // The most favourable price any winner got.
        let price = if buyer {
            *prices.iter().min().unwrap()
        } else {
            *prices.iter().max().unwrap()
        };
        for bid in instance.market(m).iter().filter(|b| !chosen.contains(&b.agent)) {
            let envies = if buyer { bid.amount > price } else { bid.amount < price };
            report.check(!envies, || Violation {
                check: "envy_free",
                agent: Some(bid.agent.clone()),
                deviation: None,
                delta: Some((bid.amount - price).abs()),
                detail: format!("loser bid {} beats market price {price}", bid.amount),
            });
        }
    }
    report
}

/// Equal winner counts in every market.
pub fn balance_audit(outcome: &MechOutcome) -> AuditReport {
    let mut report = AuditReport::new("material_balance");
    let sizes: Vec<usize> = outcome.allocation.winners.iter().map(Vec::len).collect();
    report.check(outcome.consistent, || Violation {
        check: "consistent_trade_size",
        agent: None,
        deviation: None,
        delta: None,
        detail: "markets disagreed on the trade size".to_string(),
    });
    report.check(outcome.allocation.is_materially_balanced(), || Violation {
        check: "equal_winner_counts",
        agent: None,
        deviation: None,
        delta: None,
        detail: format!("winners per market {sizes:?}"),
    });
    for (agent, amount) in &outcome.transfers {
        if !outcome.wins(agent) {
            report.check(amount.is_zero(), || Violation {
                check: "losers_pay_nothing",
                agent: Some(agent.clone()),
                deviation: None,
                delta: Some(*amount),
                detail: format!("loser transfer {amount}"),
            });
        }
    }
    report
}

/// Improving a winner's bid keeps it winning; worsening a loser's bid keeps
/// it losing; re-running unchanged bids reproduces the outcome.
pub fn monotonicity_audit(
    mech: &MechanismHandle,
    instance: &SupplyChainInstance,
    samples: usize,
    seed: u64,
) -> Result<AuditReport, VerifyError> {
    let base = mech.run(instance)?;
    let mut report = AuditReport::new("monotonicity");
    let again = mech.run(instance)?;
    report.check(again == base, || Violation {
        check: "deterministic",
        agent: None,
        deviation: None,
        delta: None,
        detail: "identical bids gave different outcomes".to_string(),
    });
    let max_bid = instance.bids().map(|b| b.amount).max().unwrap_or(Price::ZERO);
    let steps = 4 * (max_bid.to_f64().ceil() as i64 + 1);
    let all = agents(instance);
    let parts = parallel::map_range(all.len(), |i| -> Result<AuditReport, VerifyError> {
        let agent = &all[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut report = AuditReport::new("monotonicity");
        let bid = instance.bid(agent).expect("agent in instance");
        let won = base.wins(agent);
        let buyer = is_buyer(instance, agent);
        for _ in 0..samples {
            let delta = Price::new(rng.random_range(1..=steps) as i128, 4);
            // Buyers improve upward, sellers downward; bids stay non-negative.
            let up = won == buyer;
            let moved = if up { bid + delta } else { (bid - delta).max(Price::ZERO) };
            if moved == bid {
                continue;
            }
            let now = mech.run(&instance.with_bid(agent, moved))?.wins(agent);
            report.check(now == won, || Violation {
                check: if won { "winner_keeps_winning" } else { "loser_keeps_losing" },
                agent: Some(agent.clone()),
                deviation: Some(moved),
                delta: None,
                detail: format!("bid {bid} -> {moved} flipped the allocation"),
            });
        }
        Ok(report)
    });
    for part in parts {
        report.merge(part?);
    }
    Ok(report)
}
