//! Double-auction rules.
//!
//! Each rule maps a (supply, demand) curve pair to a trade size and prices.
//! The pricing step only reads the curves around the optimal trade size `l`,
//! which is what lets the logarithmic pivot protocol clear a market from a
//! handful of probed entries (see [`DaRule::clear`]).
//!
//! Randomized rules never draw their own coin. The caller passes the bit
//! `χ`, where `χ = 1` (probability `α`) selects the trade-reduction branch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::curve::{trade_size, PriceLookup};
use crate::error::RuleError;
use crate::price::{Bound, Price};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DaRule {
    /// Uniform price `k·S_l + (1−k)·B_l` on `l` units. Not incentive compatible.
    Kda(Price),
    Vcg,
    TradeReduction,
    McAfee,
    /// Trade reduction with probability `α`, VCG otherwise.
    AlphaReduction(Price),
    /// Same allocation lottery as `AlphaReduction`, but the first `l − 1`
    /// pairs pay the expected price of that rule.
    AlphaPayment(Price),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RuleFlags {
    pub ic: bool,
    pub universally_ic: bool,
    pub nd: bool,
    /// Trade size depends only on `l` (given a shared coin for the
    /// randomized rules), so every market of a chain agrees on it.
    pub consistent: bool,
    pub randomized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct UniformPrices {
    pub buyer: Price,
    pub seller: Price,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DaResult {
    pub trade_size: usize,
    /// Optimal trade size of the curves the rule ran on.
    pub optimal_trade_size: usize,
    /// What each winning buyer pays, in curve order.
    pub buyer_prices: Vec<Price>,
    /// What each winning seller receives, in curve order.
    pub seller_prices: Vec<Price>,
    pub uniform_prices: Option<UniformPrices>,
    pub coin_used: Option<bool>,
}

impl DaResult {
    fn empty(l: usize, coin_used: Option<bool>) -> Self {
        DaResult {
            trade_size: 0,
            optimal_trade_size: l,
            buyer_prices: Vec::new(),
            seller_prices: Vec::new(),
            uniform_prices: None,
            coin_used,
        }
    }

    fn uniform(q: usize, l: usize, buyer: Price, seller: Price, coin_used: Option<bool>) -> Self {
        if q == 0 {
            return Self::empty(l, coin_used);
        }
        DaResult {
            trade_size: q,
            optimal_trade_size: l,
            buyer_prices: vec![buyer; q],
            seller_prices: vec![seller; q],
            uniform_prices: Some(UniformPrices { buyer, seller }),
            coin_used,
        }
    }

    /// Buyer payments minus seller receipts.
    pub fn revenue(&self) -> Price {
        self.buyer_prices.iter().sum::<Price>() - self.seller_prices.iter().sum::<Price>()
    }
}

fn finite(b: Bound) -> Price {
    b.finite().expect("price formula resolved to a sentinel")
}

impl DaRule {
    pub fn flags(&self) -> RuleFlags {
        let (ic, universally_ic, nd, consistent, randomized) = match self {
            DaRule::Kda(_) => (false, false, true, true, false),
            DaRule::Vcg | DaRule::TradeReduction => (true, true, true, true, false),
            DaRule::McAfee => (true, true, true, false, false),
            DaRule::AlphaReduction(_) => (true, true, true, true, true),
            DaRule::AlphaPayment(_) => (true, false, false, true, true),
        };
        RuleFlags {
            ic,
            universally_ic,
            nd,
            consistent,
            randomized,
        }
    }

    /// Probability of the trade-reduction branch, for randomized rules.
    pub fn alpha(&self) -> Option<Price> {
        match self {
            DaRule::AlphaReduction(a) | DaRule::AlphaPayment(a) => Some(*a),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let (name, value) = match self {
            DaRule::Kda(k) => ("k", *k),
            DaRule::AlphaReduction(a) | DaRule::AlphaPayment(a) => ("alpha", *a),
            _ => return Ok(()),
        };
        if value < Price::ZERO || value > Price::ONE {
            return Err(RuleError::BadParameter { name, value });
        }
        Ok(())
    }

    /// Runs the rule on a curve pair. Curves may differ in length; positions
    /// past the end of a curve act as the `±∞` sentinels.
    pub fn apply(&self, supply: &impl PriceLookup, demand: &impl PriceLookup, coin: bool) -> Result<DaResult, RuleError> {
        self.validate()?;
        let l = trade_size(supply, demand);
        Ok(self.clear(l, supply, demand, coin))
    }

    /// Supply-curve positions [`DaRule::clear`] reads for a given `l`.
    pub fn supply_positions(&self, l: usize) -> Vec<usize> {
        if l == 0 {
            return Vec::new();
        }
        match self {
            DaRule::Kda(_) => vec![l],
            _ => vec![l, l + 1],
        }
    }

    /// Prices a market whose optimal trade size `l` is already known.
    /// Only positions `l` and `l + 1` of either curve are read.
    pub fn clear(&self, l: usize, s: &impl PriceLookup, d: &impl PriceLookup, coin: bool) -> DaResult {
        let coin_used = self.flags().randomized.then_some(coin);
        if l == 0 {
            return DaResult::empty(0, coin_used);
        }
        let s_l = finite(s.bound(l));
        let b_l = finite(d.bound(l));
        let vcg_buyer = || finite(s.bound(l).max(d.bound(l + 1)));
        let vcg_seller = || finite(s.bound(l + 1).min(d.bound(l)));
        match *self {
            DaRule::Kda(k) => {
                let p = k * s_l + (Price::ONE - k) * b_l;
                DaResult::uniform(l, l, p, p, None)
            }
            DaRule::Vcg => DaResult::uniform(l, l, vcg_buyer(), vcg_seller(), None),
            DaRule::TradeReduction => DaResult::uniform(l - 1, l, b_l, s_l, None),
            DaRule::McAfee => {
                let suggested = match (s.bound(l + 1), d.bound(l + 1)) {
                    (Bound::Finite(a), Bound::Finite(b)) => Some(Price::midpoint(a, b)),
                    _ => None,
                };
                match suggested {
                    Some(p) if s_l <= p && p <= b_l => DaResult::uniform(l, l, p, p, None),
                    _ => DaResult::uniform(l - 1, l, b_l, s_l, None),
                }
            }
            DaRule::AlphaReduction(_) => {
                let branch = if coin { DaRule::TradeReduction } else { DaRule::Vcg };
                DaResult {
                    coin_used,
                    ..branch.clear(l, s, d, false)
                }
            }
            DaRule::AlphaPayment(alpha) => {
                let (pb, ps) = (vcg_buyer(), vcg_seller());
                let rest = Price::ONE - alpha;
                let mixed_buyer = alpha * b_l + rest * pb;
                let mixed_seller = alpha * s_l + rest * ps;
                let mut buyer_prices = vec![mixed_buyer; l - 1];
                let mut seller_prices = vec![mixed_seller; l - 1];
                if !coin {
                    buyer_prices.push(pb);
                    seller_prices.push(ps);
                }
                let q = buyer_prices.len();
                let uniform_prices = (q > 0
                    && buyer_prices.iter().all(|&p| p == buyer_prices[0])
                    && seller_prices.iter().all(|&p| p == seller_prices[0]))
                .then(|| UniformPrices {
                    buyer: buyer_prices[0],
                    seller: seller_prices[0],
                });
                DaResult {
                    trade_size: q,
                    optimal_trade_size: l,
                    buyer_prices,
                    seller_prices,
                    uniform_prices,
                    coin_used,
                }
            }
        }
    }
}

impl fmt::Display for DaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DaRule::Kda(k) => write!(f, "kda:{k}"),
            DaRule::Vcg => write!(f, "vcg"),
            DaRule::TradeReduction => write!(f, "tr"),
            DaRule::McAfee => write!(f, "mcafee"),
            DaRule::AlphaReduction(a) => write!(f, "alphared:{a}"),
            DaRule::AlphaPayment(a) => write!(f, "alphapay:{a}"),
        }
    }
}

impl FromStr for DaRule {
    type Err = RuleError;

    /// `kda:<k>`, `vcg`, `tr`, `mcafee`, `alphared:<α>`, `alphapay:<α>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.trim(), None),
        };
        let parse_arg = || -> Result<Price, RuleError> {
            arg.ok_or_else(|| RuleError::Unknown(s.to_string()))?.parse().map_err(RuleError::from)
        };
        let rule = match name {
            "vcg" if arg.is_none() => DaRule::Vcg,
            "tr" if arg.is_none() => DaRule::TradeReduction,
            "mcafee" if arg.is_none() => DaRule::McAfee,
            "kda" => DaRule::Kda(parse_arg()?),
            "alphared" => DaRule::AlphaReduction(parse_arg()?),
            "alphapay" => DaRule::AlphaPayment(parse_arg()?),
            _ => return Err(RuleError::Unknown(s.to_string())),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl<'de> Deserialize<'de> for DaRule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for DaRule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{CurveKind, PriceCurve};

    fn s(v: &[i64]) -> PriceCurve {
        PriceCurve::synthetic(CurveKind::Supply, v.iter().map(|&x| Price::from_int(x))).unwrap()
    }

    fn d(v: &[i64]) -> PriceCurve {
        PriceCurve::synthetic(CurveKind::Demand, v.iter().map(|&x| Price::from_int(x))).unwrap()
    }

    fn p(x: i64) -> Price {
        Price::from_int(x)
    }

    fn half() -> Price {
        Price::new(1, 2)
    }

    fn uniform(r: &DaResult) -> (Price, Price) {
        let u = r.uniform_prices.expect("uniform");
        (u.buyer, u.seller)
    }

    #[test]
    fn kda_prices() {
        let r = DaRule::Kda(half()).apply(&s(&[4, 9, 13]), &d(&[12, 11, 7]), false).unwrap();
        assert_eq!(r.trade_size, 2);
        assert_eq!(uniform(&r), (p(10), p(10)));
        let r = DaRule::Kda(Price::ZERO).apply(&s(&[4, 9, 13]), &d(&[12, 11, 7]), false).unwrap();
        assert_eq!(uniform(&r), (p(11), p(11)));
        let r = DaRule::Kda(half()).apply(&s(&[5]), &d(&[3]), false).unwrap();
        assert_eq!(r.trade_size, 0);
        assert!(r.buyer_prices.is_empty() && r.uniform_prices.is_none());
        assert!(matches!(
            DaRule::Kda(p(2)).apply(&s(&[1]), &d(&[2]), false),
            Err(RuleError::BadParameter { name: "k", .. })
        ));
    }

    #[test]
    fn vcg_prices() {
        let r = DaRule::Vcg.apply(&s(&[4, 9, 13]), &d(&[12, 11, 7]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (2, (p(9), p(11))));
        let r = DaRule::Vcg.apply(&s(&[3, 6, 7]), &d(&[11, 8, 1]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r).1), (2, p(7)));
        // l = n: both sentinels kick in.
        let r = DaRule::Vcg.apply(&s(&[2]), &d(&[10]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(2), p(10))));
    }

    #[test]
    fn trade_reduction_prices() {
        let r = DaRule::TradeReduction.apply(&s(&[4, 9, 13]), &d(&[12, 11, 7]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(11), p(9))));
        assert_eq!(r.revenue(), p(2));
        let r = DaRule::TradeReduction.apply(&s(&[3, 8]), &d(&[5, 1]), false).unwrap();
        assert_eq!(r.trade_size, 0);
        let r = DaRule::TradeReduction.apply(&s(&[1, 3]), &d(&[5, 4]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(4), p(3))));
    }

    #[test]
    fn mcafee_prices() {
        let r = DaRule::McAfee.apply(&s(&[15, 27]), &d(&[25, 17]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(22), p(22))));
        let r = DaRule::McAfee.apply(&s(&[5, 7]), &d(&[15, -3]), false).unwrap();
        assert_eq!(r.trade_size, 0);
        // l = n = 2: no suggested price, so the reduction branch applies.
        let r = DaRule::McAfee.apply(&s(&[1, 3]), &d(&[5, 4]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(4), p(3))));
        // With a third pair the suggested price (3.5) is accepted.
        let r = DaRule::McAfee.apply(&s(&[1, 3, 5]), &d(&[5, 4, 2]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (2, (Price::new(7, 2), Price::new(7, 2))));
    }

    #[test]
    fn alpha_reduction_follows_the_coin() {
        let (sc, dc) = (s(&[4, 9, 13]), d(&[12, 11, 7]));
        let a = DaRule::AlphaReduction(half());
        let tr = a.apply(&sc, &dc, true).unwrap();
        assert_eq!((tr.trade_size, uniform(&tr)), (1, (p(11), p(9))));
        assert_eq!(tr.coin_used, Some(true));
        let vcg = a.apply(&sc, &dc, false).unwrap();
        assert_eq!((vcg.trade_size, uniform(&vcg)), (2, (p(9), p(11))));
        for coin in [false, true] {
            let one = DaRule::AlphaReduction(Price::ONE).apply(&sc, &dc, coin).unwrap();
            let zero = DaRule::AlphaReduction(Price::ZERO).apply(&sc, &dc, coin).unwrap();
            assert_eq!(one.trade_size, if coin { 1 } else { 2 });
            assert_eq!(zero.buyer_prices.len(), if coin { 1 } else { 2 });
        }
    }

    #[test]
    fn alpha_payment_prices() {
        let (sc, dc) = (s(&[4, 9, 13]), d(&[12, 11, 7]));
        let a = DaRule::AlphaPayment(half());
        let r = a.apply(&sc, &dc, false).unwrap();
        assert_eq!(r.trade_size, 2);
        assert_eq!(r.buyer_prices, vec![p(10), p(9)]);
        assert_eq!(r.seller_prices, vec![p(10), p(11)]);
        assert!(r.uniform_prices.is_none());
        let r = a.apply(&sc, &dc, true).unwrap();
        assert_eq!((r.buyer_prices.clone(), r.seller_prices.clone()), (vec![p(10)], vec![p(10)]));
        let zero = DaRule::AlphaPayment(Price::ZERO).apply(&sc, &dc, false).unwrap();
        let vcg = DaRule::Vcg.apply(&sc, &dc, false).unwrap();
        assert_eq!((zero.buyer_prices, zero.seller_prices), (vcg.buyer_prices, vcg.seller_prices));
    }

    #[test]
    fn unequal_lengths_use_sentinels() {
        // Five buyers, two sellers: l = 2 and S_3 = +∞.
        let r = DaRule::Vcg.apply(&s(&[1, 2]), &d(&[9, 8, 7, 6, 5]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (2, (p(7), p(8))));
        let r = DaRule::McAfee.apply(&s(&[1, 2]), &d(&[9, 8, 7]), false).unwrap();
        assert_eq!((r.trade_size, uniform(&r)), (1, (p(8), p(2))));
    }

    #[test]
    fn rule_grammar() {
        for (text, rule) in [
            ("vcg", DaRule::Vcg),
            ("tr", DaRule::TradeReduction),
            ("mcafee", DaRule::McAfee),
            ("kda:0.5", DaRule::Kda(half())),
            ("alphared:0.25", DaRule::AlphaReduction(Price::new(1, 4))),
            ("alphapay:1", DaRule::AlphaPayment(Price::ONE)),
        ] {
            assert_eq!(text.parse::<DaRule>().unwrap(), rule);
            assert_eq!(rule.to_string().parse::<DaRule>().unwrap(), rule);
        }
        assert!(matches!("alphared:1.5".parse::<DaRule>(), Err(RuleError::BadParameter { .. })));
        assert!(matches!("kda".parse::<DaRule>(), Err(RuleError::Unknown(_))));
        assert!(matches!("vcg:1".parse::<DaRule>(), Err(RuleError::Unknown(_))));
        assert!(matches!("second-price".parse::<DaRule>(), Err(RuleError::Unknown(_))));
        assert!("kda:x".parse::<DaRule>().is_err());
    }

    #[test]
    fn flags_table() {
        let f = |r: DaRule| {
            let x = r.flags();
            (x.ic, x.universally_ic, x.nd, x.consistent, x.randomized)
        };
        assert_eq!(f(DaRule::Kda(half())), (false, false, true, true, false));
        assert_eq!(f(DaRule::Vcg), (true, true, true, true, false));
        assert_eq!(f(DaRule::TradeReduction), (true, true, true, true, false));
        assert_eq!(f(DaRule::McAfee), (true, true, true, false, false));
        assert_eq!(f(DaRule::AlphaReduction(half())), (true, true, true, true, true));
        assert_eq!(f(DaRule::AlphaPayment(half())), (true, false, false, true, true));
    }
}
