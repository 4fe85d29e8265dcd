//! Distributed clearing of a supply chain over a line of market nodes.

mod local;
mod logn;
pub mod message;
pub mod network;
mod pivot;
mod symmetric;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub use message::{Direction, Message};
pub use network::{MarketReport, Node, Schedule, Trace, TraceRecord};

use crate::error::{InstanceError, ProtocolError};
use crate::instance::{Allocation, SupplyChainInstance, Transfers};
use crate::price::Price;
use crate::rules::DaRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Symmetric,
    Pivot,
    PivotLogn,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Symmetric, Protocol::Pivot, Protocol::PivotLogn];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Symmetric => "symmetric",
            Protocol::Pivot => "pivot",
            Protocol::PivotLogn => "pivot-logn",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(Protocol::Symmetric),
            "pivot" => Ok(Protocol::Pivot),
            "pivot-logn" | "logn" => Ok(Protocol::PivotLogn),
            _ => Err(format!("unknown protocol `{s}` (expected symmetric, pivot, pivot-logn)")),
        }
    }
}

/// Where the demand node gets its public coin from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinSource {
    Fixed(bool),
    /// One draw from a generator seeded with this value; `χ = 1` with
    /// probability exactly `α`.
    Seeded(u64),
}

impl CoinSource {
    pub fn draw(&self, rule: &DaRule) -> bool {
        let Some(alpha) = rule.alpha() else {
            return false;
        };
        match *self {
            CoinSource::Fixed(coin) => coin,
            CoinSource::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.random_range(0..alpha.denom()) < alpha.numer()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub schedule: Schedule,
    /// Lets non-IC rules (the k-DA) run in a chain.
    pub allow_non_ic: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            schedule: Schedule::Fifo,
            allow_non_ic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainOutcome {
    pub protocol: Protocol,
    pub rule: DaRule,
    /// The demand node's coin, for randomized rules.
    pub coin: Option<bool>,
    /// Common market size after truncation.
    pub n: usize,
    /// Empty when the markets disagreed on the trade size.
    pub allocation: Allocation,
    /// Every agent in the instance, zero for losers.
    pub transfers: Transfers,
    pub per_market_q: Vec<usize>,
    pub revenue: Price,
    pub consistent: bool,
    pub trace: Trace,
}

impl ChainOutcome {
    pub fn to_json(&self) -> Value {
        let winners: Map<String, Value> = self
            .allocation
            .winners
            .iter()
            .enumerate()
            .map(|(m, w)| (m.to_string(), json!(w)))
            .collect();
        let transfers: Map<String, Value> = self
            .transfers
            .iter()
            .map(|(a, p)| (a.to_string(), json!(p)))
            .collect();
        json!({
            "protocol": self.protocol,
            "rule": self.rule,
            "coin": self.coin,
            "n": self.n,
            "q": self.allocation.trade_size,
            "consistent": self.consistent,
            "per_market_q": self.per_market_q,
            "winners": winners,
            "transfers": transfers,
            "revenue": self.revenue,
        })
    }
}

fn check_rule(protocol: Protocol, rule: &DaRule, opts: &RunOptions) -> Result<(), ProtocolError> {
    rule.validate()?;
    let flags = rule.flags();
    if !flags.ic && !opts.allow_non_ic {
        return Err(ProtocolError::RuleNotIc(rule.to_string()));
    }
    match protocol {
        Protocol::Symmetric => Ok(()),
        Protocol::Pivot if !flags.nd => Err(ProtocolError::RuleNotNd(rule.to_string())),
        Protocol::PivotLogn if !flags.nd => Err(ProtocolError::RuleNotProbeFriendly(rule.to_string())),
        _ => Ok(()),
    }
}

fn validate_instance(instance: &SupplyChainInstance) -> Result<(), ProtocolError> {
    for (m, bids) in instance.markets().iter().enumerate() {
        if bids.is_empty() {
            return Err(InstanceError::EmptyMarket(m).into());
        }
    }
    Ok(())
}

fn execute<N: Node>(mut nodes: Vec<N>, goods: usize, schedule: Schedule) -> Result<(Vec<MarketReport>, Trace), ProtocolError> {
    let trace = network::run_nodes(&mut nodes, goods, schedule)?;
    Ok((nodes.iter().map(Node::report).collect(), trace))
}

/// Runs one protocol end to end.
pub fn run_protocol(
    protocol: Protocol,
    instance: &SupplyChainInstance,
    rule: &DaRule,
    coin: CoinSource,
    opts: &RunOptions,
) -> Result<ChainOutcome, ProtocolError> {
    check_rule(protocol, rule, opts)?;
    validate_instance(instance)?;
    let markets = 0..instance.market_count();
    let goods = instance.goods();
    let (reports, trace) = match protocol {
        Protocol::Symmetric => execute(
            markets.map(|m| symmetric::SymmetricNode::new(instance, m, *rule, coin)).collect(),
            goods,
            opts.schedule,
        )?,
        Protocol::Pivot => execute(
            markets.map(|m| pivot::PivotNode::new(instance, m, *rule, coin)).collect(),
            goods,
            opts.schedule,
        )?,
        Protocol::PivotLogn => execute(
            markets.map(|m| logn::LognNode::new(instance, m, *rule, coin)).collect(),
            goods,
            opts.schedule,
        )?,
    };
    Ok(assemble(protocol, instance, rule, reports, trace))
}

fn assemble(
    protocol: Protocol,
    instance: &SupplyChainInstance,
    rule: &DaRule,
    reports: Vec<MarketReport>,
    trace: Trace,
) -> ChainOutcome {
    let per_market_q: Vec<usize> = reports.iter().map(|r| r.trade_size).collect();
    let consistent = per_market_q.windows(2).all(|w| w[0] == w[1]);
    let n = instance.markets().iter().map(Vec::len).min().unwrap_or(0);
    let coin = reports.last().and_then(|r| r.coin);
    let mut transfers: Transfers = instance.bids().map(|b| (b.agent.clone(), Price::ZERO)).collect();
    let allocation = if consistent {
        for r in &reports {
            for (agent, amount) in &r.transfers {
                transfers.insert(agent.clone(), *amount);
            }
        }
        Allocation {
            trade_size: per_market_q[0],
            winners: reports.into_iter().map(|r| r.winners).collect(),
        }
    } else {
        Allocation {
            trade_size: 0,
            winners: vec![Vec::new(); per_market_q.len()],
        }
    };
    let revenue = transfers.values().copied().sum();
    ChainOutcome {
        protocol,
        rule: *rule,
        coin,
        n,
        allocation,
        transfers,
        per_market_q,
        revenue,
        consistent,
        trace,
    }
}

pub fn run_symmetric(instance: &SupplyChainInstance, rule: &DaRule, coin: CoinSource) -> Result<ChainOutcome, ProtocolError> {
    run_protocol(Protocol::Symmetric, instance, rule, coin, &RunOptions::default())
}

pub fn run_pivot(instance: &SupplyChainInstance, rule: &DaRule, coin: CoinSource) -> Result<ChainOutcome, ProtocolError> {
    run_protocol(Protocol::Pivot, instance, rule, coin, &RunOptions::default())
}

pub fn run_pivot_logn(instance: &SupplyChainInstance, rule: &DaRule, coin: CoinSource) -> Result<ChainOutcome, ProtocolError> {
    run_protocol(Protocol::PivotLogn, instance, rule, coin, &RunOptions::default())
}
