//! Reference implementations used as oracles. They work on plain sorted
//! vectors and never call the curve or protocol code under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chainmkt::{AgentId, DaRule, Price, SupplyChainInstance};
use proptest::prelude::*;

pub fn p(v: i64) -> Price {
    Price::from_int(v)
}

/// Prices a double auction from the textbook formulas. `s` ascending, `d`
/// descending, possibly of different lengths. Returns the trade size, what
/// each winning buyer pays and what each winning seller receives.
pub fn formula_clear(rule: &DaRule, s: &[Price], d: &[Price], coin: bool) -> (usize, Vec<Price>, Vec<Price>) {
    let l = s.iter().zip(d).take_while(|(a, b)| b >= a).count();
    if l == 0 {
        return (0, vec![], vec![]);
    }
    let (s_l, b_l) = (s[l - 1], d[l - 1]);
    let s_next = s.get(l).copied();
    let b_next = d.get(l).copied();
    // max(S_l, B_{l+1}) and min(S_{l+1}, B_l) with missing entries ignored.
    let vcg_b = b_next.map_or(s_l, |b| b.max(s_l));
    let vcg_s = s_next.map_or(b_l, |s| s.min(b_l));
    let uniform = |q: usize, pb: Price, ps: Price| (q, vec![pb; q], vec![ps; q]);
    match *rule {
        DaRule::Kda(k) => {
            let price = k * s_l + (Price::ONE - k) * b_l;
            uniform(l, price, price)
        }
        DaRule::Vcg => uniform(l, vcg_b, vcg_s),
        DaRule::TradeReduction => uniform(l - 1, b_l, s_l),
        DaRule::McAfee => match (s_next, b_next) {
            (Some(a), Some(b)) if s_l + s_l <= a + b && a + b <= b_l + b_l => {
                let mid = (a + b) / p(2);
                uniform(l, mid, mid)
            }
            _ => uniform(l - 1, b_l, s_l),
        },
        DaRule::AlphaReduction(_) if coin => uniform(l - 1, b_l, s_l),
        DaRule::AlphaReduction(_) => uniform(l, vcg_b, vcg_s),
        DaRule::AlphaPayment(a) => {
            let mixed_b = a * b_l + (Price::ONE - a) * vcg_b;
            let mixed_s = a * s_l + (Price::ONE - a) * vcg_s;
            let mut pb = vec![mixed_b; l - 1];
            let mut ps = vec![mixed_s; l - 1];
            if !coin {
                pb.push(vcg_b);
                ps.push(vcg_s);
            }
            (pb.len(), pb, ps)
        }
    }
}

/// Each market's bids sorted best-first (ascending costs, descending
/// values; ties by bidder index) and cut to the smallest market size.
pub fn sorted_markets(inst: &SupplyChainInstance) -> Vec<Vec<(Price, AgentId)>> {
    let t = inst.goods();
    let mut markets: Vec<Vec<(Price, AgentId)>> = inst
        .markets()
        .iter()
        .map(|m| m.iter().map(|b| (b.amount, b.agent.clone())).collect())
        .collect();
    let n = markets.iter().map(Vec::len).min().unwrap();
    for (m, bids) in markets.iter_mut().enumerate() {
        if m == t {
            bids.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        } else {
            bids.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        bids.truncate(n);
    }
    markets
}

fn prices(bids: &[(Price, AgentId)]) -> Vec<Price> {
    bids.iter().map(|b| b.0).collect()
}

fn add(a: &[Price], b: &[Price]) -> Vec<Price> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

fn sub(a: &[Price], b: &[Price]) -> Vec<Price> {
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// Cost of producing good `r` (1-based), summed position by position.
pub fn chain_supply(markets: &[Vec<(Price, AgentId)>], r: usize) -> Vec<Price> {
    let mut acc = prices(&markets[0]);
    for m in &markets[1..r] {
        acc = add(&acc, &prices(m));
    }
    acc
}

/// Demand for good `r` (1-based): consumer values minus later conversions.
pub fn chain_demand(markets: &[Vec<(Price, AgentId)>], r: usize) -> Vec<Price> {
    let t = markets.len() - 1;
    let mut acc = prices(&markets[t]);
    for m in &markets[r..t] {
        acc = sub(&acc, &prices(m));
    }
    acc
}

pub struct OracleOutcome {
    pub per_market_q: Vec<usize>,
    pub transfers: BTreeMap<AgentId, Price>,
    pub winners: Vec<Vec<AgentId>>,
}

impl OracleOutcome {
    pub fn consistent(&self) -> bool {
        self.per_market_q.windows(2).all(|w| w[0] == w[1])
    }

    pub fn revenue(&self) -> Price {
        self.transfers.values().copied().sum()
    }
}

/// The symmetric chain computed centrally: every market runs the rule on
/// its own curve against the residual demand it faces.
pub fn centralized_symmetric(inst: &SupplyChainInstance, rule: &DaRule, coin: bool) -> OracleOutcome {
    let markets = sorted_markets(inst);
    let t = inst.goods();
    let mut per_market_q = Vec::new();
    let mut transfers = BTreeMap::new();
    let mut winners = Vec::new();
    for (m, bids) in markets.iter().enumerate() {
        let (s, d) = if m == 0 {
            (chain_supply(&markets, 1), chain_demand(&markets, 1))
        } else if m == t {
            (chain_supply(&markets, t), chain_demand(&markets, t))
        } else {
            (prices(bids), sub(&chain_demand(&markets, m + 1), &chain_supply(&markets, m)))
        };
        let (q, pb, ps) = formula_clear(rule, &s, &d, coin);
        per_market_q.push(q);
        winners.push(bids[..q].iter().map(|b| b.1.clone()).collect());
        for (i, (_, agent)) in bids.iter().enumerate() {
            let amount = match (i < q, m == t) {
                (false, _) => Price::ZERO,
                (true, true) => pb[i],
                (true, false) => -ps[i],
            };
            transfers.insert(agent.clone(), amount);
        }
    }
    OracleOutcome {
        per_market_q,
        transfers,
        winners,
    }
}

/// Best total gain over every trade size, by direct summation.
pub fn best_gain(inst: &SupplyChainInstance) -> Price {
    let markets = sorted_markets(inst);
    let n = markets[0].len();
    (0..=n)
        .map(|k| {
            let value: Price = markets.last().unwrap()[..k].iter().map(|b| b.0).sum();
            let cost: Price = markets[..markets.len() - 1].iter().flat_map(|m| &m[..k]).map(|b| b.0).sum();
            value - cost
        })
        .max()
        .unwrap()
}

/// Efficient trade size by direct summation (smallest size reaching the
/// best gain is not needed; ties at the margin add zero).
pub fn efficient_size(inst: &SupplyChainInstance) -> usize {
    let s = chain_supply(&sorted_markets(inst), inst.goods());
    let d = chain_demand(&sorted_markets(inst), inst.goods());
    s.iter().zip(&d).take_while(|(a, b)| b >= a).count()
}

/// Value minus transfer for `agent` under truthful bids.
pub fn utility(inst: &SupplyChainInstance, agent: &AgentId, wins: bool, transfer: Price) -> Price {
    let bid = inst.bid(agent).unwrap();
    let value = if !wins {
        Price::ZERO
    } else if agent.market() == inst.goods() {
        bid
    } else {
        -bid
    };
    value - transfer
}

/// Integer or quarter-step price in `[0, hi]`.
pub fn price_strategy(hi: i64, fractional: bool) -> BoxedStrategy<Price> {
    if fractional {
        (0..=hi * 4).prop_map(|k| Price::new(k as i128, 4)).boxed()
    } else {
        (0..=hi).prop_map(p).boxed()
    }
}

/// Chains of `goods` goods with `n` bidders per market (plus up to `extra`
/// more in some markets).
pub fn instance_strategy(
    goods: std::ops::RangeInclusive<usize>,
    n: std::ops::RangeInclusive<usize>,
    extra: usize,
    hi: i64,
) -> impl Strategy<Value = SupplyChainInstance> {
    (goods, n, any::<bool>())
        .prop_flat_map(move |(t, n, frac)| {
            let market = (0..=extra).prop_flat_map(move |e| prop::collection::vec(price_strategy(hi, frac), n + e));
            prop::collection::vec(market, t + 1)
        })
        .prop_map(|raw| SupplyChainInstance::from_markets(raw).unwrap())
}

pub fn equal_size_instance(
    goods: std::ops::RangeInclusive<usize>,
    n: std::ops::RangeInclusive<usize>,
    hi: i64,
) -> impl Strategy<Value = SupplyChainInstance> {
    instance_strategy(goods, n, 0, hi)
}

pub fn alpha_strategy() -> impl Strategy<Value = Price> {
    (0i128..=8).prop_map(|k| Price::new(k, 8))
}
