//! A single double auction run directly on an instance with one good.
//!
//! Unlike the chain protocols, market sizes are not truncated: a rule sees
//! every bid, so with 50 buyers and 5 sellers the VCG buyer price can be set
//! by the sixth-best buyer.

use serde_json::{json, Map, Value};

use crate::curve::CurveKind;
use crate::error::{InstanceError, ProtocolError};
use crate::instance::{own_curve, Allocation, SupplyChainInstance, Transfers};
use crate::price::Price;
use crate::rules::{DaResult, DaRule};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuctionOutcome {
    pub rule: DaRule,
    pub result: DaResult,
    /// `winners[0]` are sellers, `winners[1]` buyers.
    pub allocation: Allocation,
    pub transfers: Transfers,
    pub revenue: Price,
}

pub fn run_auction(instance: &SupplyChainInstance, rule: &DaRule, coin: bool) -> Result<AuctionOutcome, ProtocolError> {
    if instance.goods() != 1 {
        return Err(InstanceError::ConversionCount {
            expected: 0,
            found: instance.goods() - 1,
        }
        .into());
    }
    rule.validate()?;
    let sellers = own_curve(instance, 0);
    let buyers = own_curve(instance, 1);
    debug_assert_eq!(buyers.kind(), CurveKind::Demand);
    let result = rule.apply(&sellers, &buyers, coin)?;
    let q = result.trade_size;
    let mut transfers: Transfers = instance.bids().map(|b| (b.agent.clone(), Price::ZERO)).collect();
    let seller_winners: Vec<_> = sellers.top_agents(q).cloned().collect();
    let buyer_winners: Vec<_> = buyers.top_agents(q).cloned().collect();
    for (a, p) in seller_winners.iter().zip(&result.seller_prices) {
        transfers.insert(a.clone(), -*p);
    }
    for (a, p) in buyer_winners.iter().zip(&result.buyer_prices) {
        transfers.insert(a.clone(), *p);
    }
    let revenue = result.revenue();
    Ok(AuctionOutcome {
        rule: *rule,
        result,
        allocation: Allocation {
            trade_size: q,
            winners: vec![seller_winners, buyer_winners],
        },
        transfers,
        revenue,
    })
}

impl AuctionOutcome {
    pub fn to_json(&self) -> Value {
        let transfers: Map<String, Value> = self
            .transfers
            .iter()
            .map(|(a, p)| (a.to_string(), json!(p)))
            .collect();
        json!({
            "rule": self.rule,
            "l": self.result.optimal_trade_size,
            "q": self.result.trade_size,
            "consistent": true,
            "coin": self.result.coin_used,
            "buyer_price": self.result.uniform_prices.map(|u| u.buyer),
            "seller_price": self.result.uniform_prices.map(|u| u.seller),
            "buyer_prices": self.result.buyer_prices,
            "seller_prices": self.result.seller_prices,
            "winners": {"0": self.allocation.winners[0], "1": self.allocation.winners[1]},
            "transfers": transfers,
            "revenue": self.revenue,
        })
    }
}
