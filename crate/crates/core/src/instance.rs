//! Bids, supply-chain instances and the per-market curves built from them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::curve::{curve_add, curve_sub, CurveKind, PriceCurve};
use crate::error::InstanceError;
use crate::price::Price;

/// Identifies an agent by the market it bids in and its position in the
/// input. Orders by `(market, index)`, which is the tie-break order used
/// when sorting equal bids.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    market: u32,
    index: u32,
}

impl AgentId {
    pub fn new(market: usize, index: usize) -> Self {
        AgentId {
            market: market as u32,
            index: index as u32,
        }
    }

    pub fn market(&self) -> usize {
        self.market as usize
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}-{}", self.market, self.index)
    }
}

impl fmt::Debug for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bid {
    pub agent: AgentId,
    pub amount: Price,
}

/// Which side of the trade a market's own bidders are on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketRole {
    /// Initial suppliers (market 0).
    Supply,
    /// Converters of good `r` into good `r + 1` (markets `1..t`).
    Conversion,
    /// Consumers of the final good (market `t`).
    Demand,
}

/// `t` goods and `t + 1` markets: supply, `t − 1` conversions, demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupplyChainInstance {
    markets: Vec<Vec<Bid>>,
}

impl SupplyChainInstance {
    pub fn new(supply: Vec<Price>, conversions: Vec<Vec<Price>>, demand: Vec<Price>) -> Result<Self, InstanceError> {
        let mut raw = Vec::with_capacity(conversions.len() + 2);
        raw.push(supply);
        raw.extend(conversions);
        raw.push(demand);
        Self::from_markets(raw)
    }

    /// Markets in chain order; the first is supply and the last demand.
    pub fn from_markets(raw: Vec<Vec<Price>>) -> Result<Self, InstanceError> {
        if raw.len() < 2 {
            return Err(InstanceError::NoGoods);
        }
        let mut markets = Vec::with_capacity(raw.len());
        for (m, amounts) in raw.into_iter().enumerate() {
            if amounts.is_empty() {
                return Err(InstanceError::EmptyMarket(m));
            }
            if let Some(&amount) = amounts.iter().find(|a| a.is_negative()) {
                return Err(InstanceError::NegativeBid { market: m, amount });
            }
            markets.push(
                amounts
                    .into_iter()
                    .enumerate()
                    .map(|(i, amount)| Bid {
                        agent: AgentId::new(m, i),
                        amount,
                    })
                    .collect(),
            );
        }
        Ok(SupplyChainInstance { markets })
    }

    pub fn from_ints(supply: &[i64], conversions: &[&[i64]], demand: &[i64]) -> Result<Self, InstanceError> {
        let conv = |v: &[i64]| v.iter().map(|&x| Price::from_int(x)).collect::<Vec<_>>();
        Self::new(conv(supply), conversions.iter().map(|c| conv(c)).collect(), conv(demand))
    }

    /// Number of goods `t`.
    pub fn goods(&self) -> usize {
        self.markets.len() - 1
    }

    pub fn market_count(&self) -> usize {
        self.markets.len()
    }

    pub fn market(&self, m: usize) -> &[Bid] {
        &self.markets[m]
    }

    pub fn markets(&self) -> &[Vec<Bid>] {
        &self.markets
    }

    pub fn role(&self, m: usize) -> MarketRole {
        if m == 0 {
            MarketRole::Supply
        } else if m == self.goods() {
            MarketRole::Demand
        } else {
            MarketRole::Conversion
        }
    }

    pub fn bids(&self) -> impl Iterator<Item = &Bid> {
        self.markets.iter().flatten()
    }

    pub fn bid(&self, agent: &AgentId) -> Option<Price> {
        self.markets
            .get(agent.market())
            .and_then(|m| m.get(agent.index()))
            .map(|b| b.amount)
    }

    /// The same instance with one agent's bid replaced.
    pub fn with_bid(&self, agent: &AgentId, amount: Price) -> Self {
        let mut next = self.clone();
        next.markets[agent.market()][agent.index()].amount = amount;
        next
    }

    /// The agent's value for winning: bid for consumers, minus cost for
    /// suppliers and converters.
    pub fn value_of(&self, agent: &AgentId, amount: Price) -> Price {
        match self.role(agent.market()) {
            MarketRole::Demand => amount,
            _ => -amount,
        }
    }

    /// Parses the instance file format:
    /// `{"goods": t, "supply": [..], "conversions": [[..], ..], "demand": [..]}`.
    /// Numbers are read as exact decimals; strings such as `"1/3"` are also
    /// accepted.
    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let root: Value = serde_json::from_str(text).map_err(|e| InstanceError::Format(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| InstanceError::Format("top level must be an object".into()))?;
        let prices = |v: &Value, what: &str| -> Result<Vec<Price>, InstanceError> {
            v.as_array()
                .ok_or_else(|| InstanceError::Format(format!("`{what}` must be an array")))?
                .iter()
                .map(|x| match x {
                    Value::Number(n) => Ok(n.to_string().parse()?),
                    Value::String(s) => Ok(s.parse()?),
                    _ => Err(InstanceError::Format(format!("`{what}` holds a non-number"))),
                })
                .collect()
        };
        let supply = prices(obj.get("supply").ok_or_else(|| InstanceError::Format("missing `supply`".into()))?, "supply")?;
        let demand = prices(obj.get("demand").ok_or_else(|| InstanceError::Format("missing `demand`".into()))?, "demand")?;
        let conversions = match obj.get("conversions") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(a)) => a.iter().map(|c| prices(c, "conversions")).collect::<Result<_, _>>()?,
            Some(_) => return Err(InstanceError::Format("`conversions` must be an array of arrays".into())),
        };
        if let Some(g) = obj.get("goods") {
            let goods = g
                .as_u64()
                .ok_or_else(|| InstanceError::Format("`goods` must be a positive integer".into()))? as usize;
            if goods == 0 {
                return Err(InstanceError::NoGoods);
            }
            if conversions.len() != goods - 1 {
                return Err(InstanceError::ConversionCount {
                    expected: goods - 1,
                    found: conversions.len(),
                });
            }
        }
        Self::new(supply, conversions, demand)
    }

    pub fn to_json(&self) -> Value {
        let list = |m: &[Bid]| Value::Array(m.iter().map(|b| Value::String(b.amount.to_string())).collect());
        let t = self.goods();
        serde_json::json!({
            "goods": t,
            "supply": list(&self.markets[0]),
            "conversions": self.markets[1..t].iter().map(|m| list(m)).collect::<Vec<_>>(),
            "demand": list(&self.markets[t]),
        })
    }
}

/// Every market's own bids sorted into a curve and truncated to the common
/// size `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketCurves {
    pub n: usize,
    /// One curve per market: supply kind for markets `0..t`, demand kind for
    /// market `t`.
    pub curves: Vec<PriceCurve>,
    /// Bidders beyond the `n` best of their market; they always lose.
    pub dropped: Vec<AgentId>,
}

pub fn own_curve(instance: &SupplyChainInstance, m: usize) -> PriceCurve {
    let kind = match instance.role(m) {
        MarketRole::Demand => CurveKind::Demand,
        _ => CurveKind::Supply,
    };
    PriceCurve::from_bids(kind, instance.market(m).iter().map(|b| (b.amount, b.agent.clone())))
}

pub fn build_market_curves(instance: &SupplyChainInstance) -> MarketCurves {
    let n = instance.markets().iter().map(Vec::len).min().unwrap_or(0);
    let mut dropped = Vec::new();
    let curves = (0..instance.market_count())
        .map(|m| {
            let mut c = own_curve(instance, m);
            dropped.extend(c.truncate(n).into_iter().filter_map(|e| e.agent));
            c
        })
        .collect();
    MarketCurves { n, curves, dropped }
}

/// Curves every market ends up holding once supply has been propagated
/// forward and demand backward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainCurves {
    /// `supply[r - 1] = S^r`, aggregated cost of producing good `r`.
    pub supply: Vec<PriceCurve>,
    /// `demand[r - 1] = D^r`, aggregated demand for good `r`.
    pub demand: Vec<PriceCurve>,
    /// `conversion_demand[r - 1] = D^{r→r+1} = D^{r+1} − S^r`.
    pub conversion_demand: Vec<PriceCurve>,
}

impl ChainCurves {
    /// The (supply, demand) pair a market runs its double auction on.
    pub fn market_pair<'a>(&'a self, markets: &'a MarketCurves, m: usize) -> (&'a PriceCurve, &'a PriceCurve) {
        let t = self.supply.len();
        if m == 0 {
            (&self.supply[0], &self.demand[0])
        } else if m == t {
            (&self.supply[t - 1], &self.demand[t - 1])
        } else {
            (&markets.curves[m], &self.conversion_demand[m - 1])
        }
    }
}

pub fn aggregate_chain_curves(markets: &MarketCurves) -> ChainCurves {
    let t = markets.curves.len() - 1;
    let mut supply = Vec::with_capacity(t);
    supply.push(markets.curves[0].clone());
    for r in 1..t {
        let next = curve_add(&supply[r - 1], &markets.curves[r]).expect("curves share length n");
        supply.push(next);
    }
    let mut demand = vec![markets.curves[t].clone()];
    for r in (1..t).rev() {
        let next = curve_sub(&demand[0], &markets.curves[r]).expect("curves share length n");
        demand.insert(0, next);
    }
    let conversion_demand = (1..t)
        .map(|r| curve_sub(&demand[r], &supply[r - 1]).expect("curves share length n"))
        .collect();
    ChainCurves {
        supply,
        demand,
        conversion_demand,
    }
}

/// Trade size and per-market winners.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Allocation {
    pub trade_size: usize,
    pub winners: Vec<Vec<AgentId>>,
}

impl Allocation {
    pub fn wins(&self, agent: &AgentId) -> bool {
        self.winners
            .get(agent.market())
            .is_some_and(|w| w.contains(agent))
    }

    pub fn is_materially_balanced(&self) -> bool {
        self.winners.iter().all(|w| w.len() == self.trade_size)
    }
}

/// Per-agent transfers. Positive amounts are paid by the agent to the
/// mechanism, negative amounts are paid out to the agent.
pub type Transfers = BTreeMap<AgentId, Price>;
