use serde::Serialize;

use crate::price::Price;

/// Direction a message travels along the chain. Upstream is toward the
/// supply market (lower node index).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upstream,
    Downstream,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    /// Minimum market size seen so far (downstream), then the final `n`
    /// (upstream).
    SizeAnnounce(usize),
    /// Aggregated supply curve `S^r` for the good the receiver converts or
    /// sells.
    CurveForward(Vec<Price>),
    /// Aggregated demand curve `D^r` for the good the receiver produces.
    CurveBackward(Vec<Price>),
    CoinShare(bool),
    /// Highest price the downstream chain pays per unit of the receiver's
    /// output good, and the trade size.
    PivotDecision { bound: Price, trade_size: usize },
    ProbeRequest(usize),
    ProbeReply(usize, Price),
}

/// Bytes of framing per message, including any small integer fields.
pub const HEADER_BYTES: usize = 8;
/// Width of one price field before per-chain headroom.
pub const PRICE_BITS: usize = 64;

impl Message {
    pub fn variant(&self) -> &'static str {
        match self {
            Message::SizeAnnounce(_) => "size_announce",
            Message::CurveForward(_) => "curve_forward",
            Message::CurveBackward(_) => "curve_backward",
            Message::CoinShare(_) => "coin_share",
            Message::PivotDecision { .. } => "pivot_decision",
            Message::ProbeRequest(_) => "probe_request",
            Message::ProbeReply(..) => "probe_reply",
        }
    }

    /// Number of price fields carried.
    pub fn entries(&self) -> usize {
        match self {
            Message::CurveForward(c) | Message::CurveBackward(c) => c.len(),
            Message::PivotDecision { .. } | Message::ProbeReply(..) => 1,
            Message::SizeAnnounce(_) | Message::CoinShare(_) | Message::ProbeRequest(_) => 0,
        }
    }

    /// Wire size on a chain of `goods` goods: sums of up to `goods` bids
    /// need `goods` extra bits per price.
    pub fn byte_size(&self, goods: usize) -> usize {
        HEADER_BYTES + (self.entries() * (PRICE_BITS + goods)).div_ceil(8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_accounting() {
        let curve = Message::CurveForward(vec![Price::ZERO; 4]);
        assert_eq!(curve.entries(), 4);
        assert_eq!(curve.byte_size(2), HEADER_BYTES + (4 * 66usize).div_ceil(8));
        assert_eq!(Message::CoinShare(true).byte_size(3), HEADER_BYTES);
        assert_eq!(Message::ProbeReply(3, Price::ONE).byte_size(8), HEADER_BYTES + 9);
    }
}
