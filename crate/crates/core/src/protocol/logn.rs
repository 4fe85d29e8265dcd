//! Pivot protocol without curve transfers. The demand market binary-searches
//! `l` by probing single entries of `S^t`; each probe reply picks up one
//! addend per hop on its way down, and every hop caches the partial sum it
//! saw so it can settle later.

use std::collections::BTreeMap;

use super::local::LocalMarket;
use super::message::{Direction, Message};
use super::network::{MarketReport, Node, Outbox};
use super::pivot::{decision, settle_upstream};
use super::CoinSource;
use crate::curve::{CurveKind, PriceLookup};
use crate::instance::{MarketRole, SupplyChainInstance};
use crate::price::Price;
use crate::rules::{DaResult, DaRule};

/// A supply curve of known length of which only probed entries are held.
struct SparseCurve<'a> {
    n: usize,
    known: &'a BTreeMap<usize, Price>,
}

impl PriceLookup for SparseCurve<'_> {
    fn kind(&self) -> CurveKind {
        CurveKind::Supply
    }

    fn len(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize) -> Option<Price> {
        if i == 0 || i > self.n {
            return None;
        }
        Some(*self.known.get(&i).unwrap_or_else(|| panic!("entry {i} was never probed")))
    }
}

enum Phase {
    Sizing,
    /// `D_lo >= S_lo` and `D_hi < S_hi` (with `0` and `n + 1` as sentinels).
    Search { lo: usize, hi: usize },
    /// `l` found; waiting for the listed entries before clearing.
    Fetch { l: usize },
    /// Cleared; waiting for `S_q` so upstream hops can settle.
    Confirm { result: DaResult },
    Done,
}

pub(crate) struct LognNode {
    local: LocalMarket,
    rule: DaRule,
    coin_source: CoinSource,
    /// Demand node: probed `S^t` entries. Conversion node: probed entries of
    /// its input supply curve.
    cache: BTreeMap<usize, Price>,
    phase: Phase,
    report: Option<MarketReport>,
}

impl LognNode {
    pub fn new(instance: &SupplyChainInstance, market: usize, rule: DaRule, coin_source: CoinSource) -> Self {
        LognNode {
            local: LocalMarket::new(instance, market),
            rule,
            coin_source,
            cache: BTreeMap::new(),
            phase: Phase::Sizing,
            report: None,
        }
    }

    fn n(&self) -> usize {
        self.local.n.expect("size phase done")
    }

    fn missing(&self, positions: impl IntoIterator<Item = usize>) -> Option<usize> {
        let n = self.n();
        positions
            .into_iter()
            .find(|&i| i >= 1 && i <= n && !self.cache.contains_key(&i))
    }

    /// Demand-node driver: sends the next probe or the final decision.
    fn advance(&mut self, out: &mut Outbox) {
        loop {
            match std::mem::replace(&mut self.phase, Phase::Done) {
                Phase::Sizing => {
                    self.phase = Phase::Search { lo: 0, hi: self.n() + 1 };
                }
                Phase::Search { lo, hi } => {
                    if hi - lo > 1 {
                        let mid = lo + (hi - lo) / 2;
                        match self.cache.get(&mid) {
                            Some(&s) => {
                                let d = self.local.own.at(mid).expect("mid within n");
                                self.phase = if d >= s { Phase::Search { lo: mid, hi } } else { Phase::Search { lo, hi: mid } };
                            }
                            None => {
                                self.phase = Phase::Search { lo, hi };
                                out.up(Message::ProbeRequest(mid));
                                return;
                            }
                        }
                    } else {
                        self.phase = Phase::Fetch { l: lo };
                    }
                }
                Phase::Fetch { l } => {
                    if let Some(i) = self.missing(self.rule.supply_positions(l)) {
                        self.phase = Phase::Fetch { l };
                        out.up(Message::ProbeRequest(i));
                        return;
                    }
                    let s = SparseCurve {
                        n: self.n(),
                        known: &self.cache,
                    };
                    let coin = self.coin_source.draw(&self.rule);
                    let result = self.rule.clear(l, &s, &self.local.own, coin);
                    self.phase = Phase::Confirm { result };
                }
                Phase::Confirm { result } => {
                    if let Some(i) = self.missing([result.trade_size]) {
                        self.phase = Phase::Confirm { result };
                        out.up(Message::ProbeRequest(i));
                        return;
                    }
                    out.up(decision(&result));
                    self.report = Some(self.local.report_from(&result));
                    return;
                }
                Phase::Done => return,
            }
        }
    }
}

impl Node for LognNode {
    fn start(&mut self, out: &mut Outbox) {
        self.local.start(out);
    }

    fn receive(&mut self, travel: Direction, msg: Message, out: &mut Outbox) {
        let role = self.local.role();
        match msg {
            Message::SizeAnnounce(k) => {
                if self.local.on_size(travel, k, out) && role == MarketRole::Demand {
                    self.advance(out);
                }
            }
            Message::ProbeRequest(i) => match role {
                MarketRole::Supply => {
                    let v = self.local.own.at(i).expect("probe within n");
                    out.down(Message::ProbeReply(i, v));
                }
                _ => out.up(Message::ProbeRequest(i)),
            },
            Message::ProbeReply(i, v) => {
                self.cache.insert(i, v);
                match role {
                    MarketRole::Conversion => {
                        let own = self.local.own.at(i).expect("probe within n");
                        out.down(Message::ProbeReply(i, v + own));
                    }
                    _ => self.advance(out),
                }
            }
            Message::PivotDecision { bound, trade_size: q } => {
                let input_q = match role {
                    MarketRole::Conversion if q > 0 => *self.cache.get(&q).expect("S_q probed before the decision"),
                    _ => Price::ZERO,
                };
                let (report, next) = settle_upstream(&self.local, bound, q, input_q);
                if role == MarketRole::Conversion {
                    out.up(Message::PivotDecision { bound: next, trade_size: q });
                }
                self.report = Some(report);
            }
            other => panic!("logn node got unexpected {}", other.variant()),
        }
    }

    fn is_done(&self) -> bool {
        self.report.is_some()
    }

    fn report(&self) -> MarketReport {
        self.report.clone().expect("node finished")
    }
}
