//! The demand market alone runs the rule on `(S^t, D^t)` and sends the
//! seller price back upstream; each hop peels off its own cost share.

use super::local::{add, synthetic, LocalMarket};
use super::message::{Direction, Message};
use super::network::{MarketReport, Node, Outbox};
use super::CoinSource;
use crate::curve::{trade_size, CurveKind};
use crate::instance::{MarketRole, SupplyChainInstance};
use crate::price::{Bound, Price};
use crate::rules::{DaResult, DaRule};

pub(crate) struct PivotNode {
    pub(crate) local: LocalMarket,
    rule: DaRule,
    coin_source: CoinSource,
    /// Aggregated cost of this market's input good (conversion markets).
    supply_in: Option<Vec<Price>>,
    report: Option<MarketReport>,
}

impl PivotNode {
    pub fn new(instance: &SupplyChainInstance, market: usize, rule: DaRule, coin_source: CoinSource) -> Self {
        PivotNode {
            local: LocalMarket::new(instance, market),
            rule,
            coin_source,
            supply_in: None,
            report: None,
        }
    }
}

/// What the pivot sends upstream after clearing: `V = P_S`, or 0 when
/// nothing trades.
pub(crate) fn decision(result: &DaResult) -> Message {
    let bound = match result.uniform_prices {
        Some(u) if result.trade_size > 0 => u.seller,
        _ => Price::ZERO,
    };
    Message::PivotDecision {
        bound,
        trade_size: result.trade_size,
    }
}

/// Price paid to each of an upstream market's `q` winners, given the bound
/// `V` that reached it and the aggregated input cost `input_q` (zero for the
/// supply market). Also returns the bound to forward further upstream.
pub(crate) fn settle_upstream(local: &LocalMarket, bound: Price, q: usize, input_q: Price) -> (MarketReport, Price) {
    if q == 0 {
        return (local.report(&[], None), bound);
    }
    let cap = Bound::Finite(bound - input_q).min(local.own_bound(q + 1));
    let price = cap.finite().expect("bound is finite");
    let own_q = local.own.at(q).expect("q within n");
    (local.report(&vec![price; q], None), bound - own_q)
}

impl Node for PivotNode {
    fn start(&mut self, out: &mut Outbox) {
        self.local.start(out);
    }

    fn receive(&mut self, travel: Direction, msg: Message, out: &mut Outbox) {
        let role = self.local.role();
        match msg {
            Message::SizeAnnounce(k) => {
                if self.local.on_size(travel, k, out) && role == MarketRole::Supply {
                    out.down(Message::CurveForward(self.local.own_prices()));
                }
            }
            Message::CurveForward(s) => match role {
                MarketRole::Conversion => {
                    out.down(Message::CurveForward(add(&s, &self.local.own_prices())));
                    self.supply_in = Some(s);
                }
                _ => {
                    let s = synthetic(CurveKind::Supply, s);
                    let d = &self.local.own;
                    let coin = self.coin_source.draw(&self.rule);
                    let result = self.rule.clear(trade_size(&s, d), &s, d, coin);
                    out.up(decision(&result));
                    self.report = Some(self.local.report_from(&result));
                }
            },
            Message::PivotDecision { bound, trade_size: q } => {
                let input_q = match role {
                    MarketRole::Conversion if q > 0 => self.supply_in.as_ref().expect("forward phase done")[q - 1],
                    _ => Price::ZERO,
                };
                let (report, next) = settle_upstream(&self.local, bound, q, input_q);
                if role == MarketRole::Conversion {
                    out.up(Message::PivotDecision { bound: next, trade_size: q });
                }
                self.report = Some(report);
            }
            other => panic!("pivot node got unexpected {}", other.variant()),
        }
    }

    fn is_done(&self) -> bool {
        self.report.is_some()
    }

    fn report(&self) -> MarketReport {
        self.report.clone().expect("node finished")
    }
}
