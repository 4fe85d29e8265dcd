//! Black-box checks of mechanism properties: incentive compatibility,
//! critical-value payments, non-discrimination, monotonicity, efficiency.

mod audit;

use serde::Serialize;
use thiserror::Error;

pub use audit::{
    balance_audit, critical_value_audit, critical_value_probe, deviation_grid, ic_audit, monotonicity_audit, nd_audit,
    AuditReport, CriticalValue, Violation,
};

use crate::auction::{run_auction, AuctionOutcome};
use crate::curve::trade_size;
use crate::error::ProtocolError;
use crate::instance::{aggregate_chain_curves, build_market_curves, AgentId, Allocation, SupplyChainInstance, Transfers};
use crate::price::Price;
use crate::protocol::{run_protocol, ChainOutcome, CoinSource, Protocol, RunOptions};
use crate::rules::DaRule;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("allocation of {0} is not monotonic in its bid")]
    NotMonotonic(AgentId),
    #[error("agent {0} is not in the instance")]
    UnknownAgent(AgentId),
    #[error("this check needs a fixed coin")]
    NeedsFixedCoin,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// One double auction on an instance with a single good.
    Auction,
    Chain(Protocol),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinMode {
    Fixed(bool),
    /// Both coin branches, weighted `α` and `1 − α`.
    Expectation,
}

/// Allocation and payments of one mechanism run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MechOutcome {
    pub allocation: Allocation,
    pub transfers: Transfers,
    pub consistent: bool,
}

impl MechOutcome {
    pub fn wins(&self, agent: &AgentId) -> bool {
        self.allocation.wins(agent)
    }

    pub fn transfer(&self, agent: &AgentId) -> Price {
        self.transfers.get(agent).copied().unwrap_or(Price::ZERO)
    }

    pub fn revenue(&self) -> Price {
        self.transfers.values().copied().sum()
    }
}

impl From<ChainOutcome> for MechOutcome {
    fn from(o: ChainOutcome) -> Self {
        MechOutcome {
            allocation: o.allocation,
            transfers: o.transfers,
            consistent: o.consistent,
        }
    }
}

impl From<AuctionOutcome> for MechOutcome {
    fn from(o: AuctionOutcome) -> Self {
        MechOutcome {
            allocation: o.allocation,
            transfers: o.transfers,
            consistent: true,
        }
    }
}

/// A mechanism as a function from bid profiles to outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MechanismHandle {
    pub mechanism: Mechanism,
    pub rule: DaRule,
    pub coin: CoinMode,
    pub allow_non_ic: bool,
}

impl MechanismHandle {
    pub fn new(mechanism: Mechanism, rule: DaRule) -> Self {
        MechanismHandle {
            mechanism,
            rule,
            coin: CoinMode::Fixed(false),
            allow_non_ic: false,
        }
    }

    pub fn chain(protocol: Protocol, rule: DaRule) -> Self {
        Self::new(Mechanism::Chain(protocol), rule)
    }

    pub fn auction(rule: DaRule) -> Self {
        Self::new(Mechanism::Auction, rule)
    }

    pub fn with_coin(self, coin: CoinMode) -> Self {
        MechanismHandle { coin, ..self }
    }

    pub fn allowing_non_ic(self) -> Self {
        MechanismHandle {
            allow_non_ic: true,
            ..self
        }
    }

    pub fn run_with_coin(&self, instance: &SupplyChainInstance, coin: bool) -> Result<MechOutcome, ProtocolError> {
        match self.mechanism {
            Mechanism::Auction => Ok(run_auction(instance, &self.rule, coin)?.into()),
            Mechanism::Chain(protocol) => {
                let opts = RunOptions {
                    allow_non_ic: self.allow_non_ic,
                    ..RunOptions::default()
                };
                Ok(run_protocol(protocol, instance, &self.rule, CoinSource::Fixed(coin), &opts)?.into())
            }
        }
    }

    /// The outcome under a fixed coin.
    pub fn run(&self, instance: &SupplyChainInstance) -> Result<MechOutcome, VerifyError> {
        match self.coin {
            CoinMode::Fixed(c) => Ok(self.run_with_coin(instance, c)?),
            CoinMode::Expectation if !self.rule.flags().randomized => Ok(self.run_with_coin(instance, false)?),
            CoinMode::Expectation => Err(VerifyError::NeedsFixedCoin),
        }
    }

    /// Outcomes with their probabilities.
    pub fn lottery(&self, instance: &SupplyChainInstance) -> Result<Vec<(Price, MechOutcome)>, ProtocolError> {
        match (self.coin, self.rule.alpha()) {
            (CoinMode::Expectation, Some(alpha)) => Ok(vec![
                (alpha, self.run_with_coin(instance, true)?),
                (Price::ONE - alpha, self.run_with_coin(instance, false)?),
            ]),
            (CoinMode::Fixed(c), _) => Ok(vec![(Price::ONE, self.run_with_coin(instance, c)?)]),
            (CoinMode::Expectation, None) => Ok(vec![(Price::ONE, self.run_with_coin(instance, false)?)]),
        }
    }
}

/// Utility of `agent`, whose true bid is read from `truth`, in `outcome`.
pub fn utility(truth: &SupplyChainInstance, agent: &AgentId, outcome: &MechOutcome) -> Price {
    let value = if outcome.wins(agent) {
        truth.value_of(agent, truth.bid(agent).expect("agent in instance"))
    } else {
        Price::ZERO
    };
    value - outcome.transfer(agent)
}

pub fn expected_utility(truth: &SupplyChainInstance, agent: &AgentId, lottery: &[(Price, MechOutcome)]) -> Price {
    lottery.iter().map(|(w, o)| *w * utility(truth, agent, o)).sum()
}

/// Optimal trade size and the total gain of trading it.
pub fn optimal_gain(instance: &SupplyChainInstance) -> (usize, Price) {
    let markets = build_market_curves(instance);
    let chain = aggregate_chain_curves(&markets);
    let t = instance.goods();
    let (s, d) = (&chain.supply[t - 1], &chain.demand[t - 1]);
    let l = trade_size(s, d);
    let gain = (1..=l).map(|i| d.at(i).unwrap() - s.at(i).unwrap()).sum();
    (l, gain)
}

/// Sum of winners' values (consumer values minus all costs).
pub fn realized_gain(allocation: &Allocation, instance: &SupplyChainInstance) -> Price {
    allocation
        .winners
        .iter()
        .flatten()
        .map(|a| instance.value_of(a, instance.bid(a).expect("winner in instance")))
        .sum()
}

/// Realized over optimal gain; 1 when nothing could be gained.
pub fn efficiency_ratio(allocation: &Allocation, instance: &SupplyChainInstance) -> Price {
    let (_, best) = optimal_gain(instance);
    if best.is_zero() {
        return Price::ONE;
    }
    realized_gain(allocation, instance) / best
}
