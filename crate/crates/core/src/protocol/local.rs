//! State every market node keeps regardless of protocol: its own bids and
//! the size-agreement phase.

use super::message::{Direction, Message};
use super::network::{MarketReport, Outbox};
use crate::curve::{CurveKind, PriceCurve};
use crate::instance::{own_curve, MarketRole, SupplyChainInstance};
use crate::price::{Bound, Price};
use crate::rules::DaResult;

pub(crate) struct LocalMarket {
    pub market: usize,
    pub t: usize,
    pub own: PriceCurve,
    pub n: Option<usize>,
}

impl LocalMarket {
    pub fn new(instance: &SupplyChainInstance, market: usize) -> Self {
        LocalMarket {
            market,
            t: instance.goods(),
            own: own_curve(instance, market),
            n: None,
        }
    }

    pub fn role(&self) -> MarketRole {
        if self.market == 0 {
            MarketRole::Supply
        } else if self.market == self.t {
            MarketRole::Demand
        } else {
            MarketRole::Conversion
        }
    }

    /// The supply node opens the size phase.
    pub fn start(&mut self, out: &mut Outbox) {
        if self.market == 0 {
            out.down(Message::SizeAnnounce(self.own.len()));
        }
    }

    /// Handles a `SizeAnnounce`. Returns `true` when this node has just
    /// learned the final `n` (and truncated its bids to it).
    pub fn on_size(&mut self, travel: Direction, k: usize, out: &mut Outbox) -> bool {
        match travel {
            Direction::Downstream => {
                let m = k.min(self.own.len());
                if self.role() == MarketRole::Demand {
                    self.settle(m);
                    out.up(Message::SizeAnnounce(m));
                    true
                } else {
                    out.down(Message::SizeAnnounce(m));
                    false
                }
            }
            Direction::Upstream => {
                self.settle(k);
                if self.role() != MarketRole::Supply {
                    out.up(Message::SizeAnnounce(k));
                }
                true
            }
        }
    }

    fn settle(&mut self, n: usize) {
        self.own.truncate(n);
        self.n = Some(n);
    }

    pub fn own_prices(&self) -> Vec<Price> {
        self.own.to_prices()
    }

    pub fn own_bound(&self, i: usize) -> Bound {
        match self.own.at(i) {
            Some(p) => Bound::Finite(p),
            None => match self.own.kind() {
                CurveKind::Supply => Bound::PosInf,
                CurveKind::Demand => Bound::NegInf,
            },
        }
    }

    /// Report for a market whose winners are the top `q` of its own curve,
    /// each settling at the given (unsigned) price.
    pub fn report(&self, prices: &[Price], coin: Option<bool>) -> MarketReport {
        let sign = match self.role() {
            MarketRole::Demand => Price::ONE,
            _ => -Price::ONE,
        };
        let winners: Vec<_> = self.own.top_agents(prices.len()).cloned().collect();
        let transfers = winners.iter().cloned().zip(prices.iter().map(|&p| sign * p)).collect();
        MarketReport {
            trade_size: prices.len(),
            winners,
            transfers,
            coin,
        }
    }

    /// Report built from a rule result run on this market's own pair.
    pub fn report_from(&self, result: &DaResult) -> MarketReport {
        let prices = match self.role() {
            MarketRole::Demand => &result.buyer_prices,
            _ => &result.seller_prices,
        };
        self.report(prices, result.coin_used)
    }
}

pub(crate) fn synthetic(kind: CurveKind, prices: Vec<Price>) -> PriceCurve {
    PriceCurve::synthetic(kind, prices).expect("aggregated curves stay sorted")
}

pub(crate) fn add(a: &[Price], b: &[Price]) -> Vec<Price> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub(crate) fn sub(a: &[Price], b: &[Price]) -> Vec<Price> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}
