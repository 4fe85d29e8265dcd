//! Every market learns its full (supply, demand) pair and runs the rule
//! itself. Supply curves flow downstream, demand curves upstream.

use super::local::{add, sub, synthetic, LocalMarket};
use super::message::{Direction, Message};
use super::network::{MarketReport, Node, Outbox};
use super::CoinSource;
use crate::curve::{trade_size, CurveKind};
use crate::instance::{MarketRole, SupplyChainInstance};
use crate::price::Price;
use crate::rules::DaRule;

pub(crate) struct SymmetricNode {
    local: LocalMarket,
    rule: DaRule,
    coin_source: CoinSource,
    coin: Option<bool>,
    /// Aggregated cost of this market's input good.
    supply_in: Option<Vec<Price>>,
    /// Aggregated demand for this market's output good.
    demand_in: Option<Vec<Price>>,
    report: Option<MarketReport>,
}

impl SymmetricNode {
    pub fn new(instance: &SupplyChainInstance, market: usize, rule: DaRule, coin_source: CoinSource) -> Self {
        SymmetricNode {
            local: LocalMarket::new(instance, market),
            rule,
            coin_source,
            coin: None,
            supply_in: None,
            demand_in: None,
            report: None,
        }
    }

    fn try_finish(&mut self) {
        if self.report.is_some() {
            return;
        }
        let randomized = self.rule.flags().randomized;
        if randomized && self.coin.is_none() {
            return;
        }
        let own = self.local.own_prices();
        let (s, d) = match self.local.role() {
            MarketRole::Supply => match &self.demand_in {
                Some(d) => (own, d.clone()),
                None => return,
            },
            MarketRole::Demand => match &self.supply_in {
                Some(s) => (s.clone(), own),
                None => return,
            },
            MarketRole::Conversion => match (&self.supply_in, &self.demand_in) {
                (Some(s), Some(d)) => (own, sub(d, s)),
                _ => return,
            },
        };
        let s = synthetic(CurveKind::Supply, s);
        let d = synthetic(CurveKind::Demand, d);
        let result = self.rule.clear(trade_size(&s, &d), &s, &d, self.coin.unwrap_or(false));
        self.report = Some(self.local.report_from(&result));
    }
}

impl Node for SymmetricNode {
    fn start(&mut self, out: &mut Outbox) {
        self.local.start(out);
    }

    fn receive(&mut self, travel: Direction, msg: Message, out: &mut Outbox) {
        let role = self.local.role();
        match msg {
            Message::SizeAnnounce(k) => {
                if !self.local.on_size(travel, k, out) {
                    return;
                }
                match role {
                    MarketRole::Supply => out.down(Message::CurveForward(self.local.own_prices())),
                    MarketRole::Demand => {
                        if self.rule.flags().randomized {
                            let coin = self.coin_source.draw(&self.rule);
                            self.coin = Some(coin);
                            out.up(Message::CoinShare(coin));
                        }
                        out.up(Message::CurveBackward(self.local.own_prices()));
                    }
                    MarketRole::Conversion => {}
                }
            }
            Message::CoinShare(coin) => {
                self.coin = Some(coin);
                if role == MarketRole::Conversion {
                    out.up(Message::CoinShare(coin));
                }
            }
            Message::CurveForward(s) => {
                if role == MarketRole::Conversion {
                    out.down(Message::CurveForward(add(&s, &self.local.own_prices())));
                }
                self.supply_in = Some(s);
            }
            Message::CurveBackward(d) => {
                if role == MarketRole::Conversion {
                    out.up(Message::CurveBackward(sub(&d, &self.local.own_prices())));
                }
                self.demand_in = Some(d);
            }
            other => panic!("symmetric node got unexpected {}", other.variant()),
        }
        self.try_finish();
    }

    fn is_done(&self) -> bool {
        self.report.is_some()
    }

    fn report(&self) -> MarketReport {
        self.report.clone().expect("node finished")
    }
}
