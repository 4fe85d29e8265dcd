//! Supply and demand curves and the pointwise algebra the chain protocols
//! use to synthesize curves for markets that only see one side of the trade.

use serde::Serialize;

use crate::error::CurveError;
use crate::instance::AgentId;
use crate::price::{Bound, Price};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Supply,
    Demand,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurveEntry {
    pub price: Price,
    /// `None` for synthetic entries produced by curve arithmetic.
    pub agent: Option<AgentId>,
}

/// A sorted price sequence. Supply curves are non-decreasing, demand curves
/// non-increasing; equal prices are ordered by ascending agent id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PriceCurve {
    kind: CurveKind,
    entries: Vec<CurveEntry>,
}

/// Read access to the `i`-th (1-based) price of a curve, with out-of-range
/// indices mapped to the curve's sentinel.
pub trait PriceLookup {
    fn kind(&self) -> CurveKind;
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> Option<Price>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S_{n+1} = +∞` on supply curves, `B_{n+1} = −∞` on demand curves.
    fn bound(&self, i: usize) -> Bound {
        match self.get(i) {
            Some(p) => Bound::Finite(p),
            None => match self.kind() {
                CurveKind::Supply => Bound::PosInf,
                CurveKind::Demand => Bound::NegInf,
            },
        }
    }
}

impl PriceCurve {
    /// Sorts `(price, agent)` pairs into a curve of the given kind.
    pub fn from_bids(kind: CurveKind, bids: impl IntoIterator<Item = (Price, AgentId)>) -> Self {
        let mut entries: Vec<CurveEntry> = bids
            .into_iter()
            .map(|(price, agent)| CurveEntry {
                price,
                agent: Some(agent),
            })
            .collect();
        entries.sort_by(|a, b| {
            let by_price = match kind {
                CurveKind::Supply => a.price.cmp(&b.price),
                CurveKind::Demand => b.price.cmp(&a.price),
            };
            by_price.then_with(|| a.agent.cmp(&b.agent))
        });
        PriceCurve { kind, entries }
    }

    /// Builds a synthetic curve from already-ordered prices. Ordering is
    /// checked; a violation returns [`CurveError::NotSorted`].
    pub fn synthetic(kind: CurveKind, prices: impl IntoIterator<Item = Price>) -> Result<Self, CurveError> {
        let entries: Vec<CurveEntry> = prices
            .into_iter()
            .map(|price| CurveEntry { price, agent: None })
            .collect();
        let curve = PriceCurve { kind, entries };
        if !curve.is_sorted() {
            return Err(CurveError::NotSorted(kind));
        }
        Ok(curve)
    }

    pub fn zeros(kind: CurveKind, n: usize) -> Self {
        PriceCurve {
            kind,
            entries: vec![
                CurveEntry {
                    price: Price::ZERO,
                    agent: None
                };
                n
            ],
        }
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CurveEntry] {
        &self.entries
    }

    pub fn prices(&self) -> impl Iterator<Item = Price> + '_ {
        self.entries.iter().map(|e| e.price)
    }

    pub fn to_prices(&self) -> Vec<Price> {
        self.prices().collect()
    }

    /// 1-based access.
    pub fn at(&self, i: usize) -> Option<Price> {
        if i == 0 {
            return None;
        }
        self.entries.get(i - 1).map(|e| e.price)
    }

    /// Agents of the first `q` entries, in curve order.
    pub fn top_agents(&self, q: usize) -> impl Iterator<Item = &AgentId> {
        self.entries.iter().take(q).filter_map(|e| e.agent.as_ref())
    }

    /// Keeps the best `n` entries and returns the dropped tail.
    pub fn truncate(&mut self, n: usize) -> Vec<CurveEntry> {
        if n >= self.entries.len() {
            return Vec::new();
        }
        self.entries.split_off(n)
    }

    pub fn is_sorted(&self) -> bool {
        self.entries.windows(2).all(|w| match self.kind {
            CurveKind::Supply => w[0].price <= w[1].price,
            CurveKind::Demand => w[0].price >= w[1].price,
        })
    }

    fn zip_with(&self, other: &PriceCurve, kind: CurveKind, f: impl Fn(Price, Price) -> Price) -> Result<PriceCurve, CurveError> {
        if self.len() != other.len() {
            return Err(CurveError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| CurveEntry {
                price: f(a.price, b.price),
                agent: None,
            })
            .collect();
        Ok(PriceCurve { kind, entries })
    }
}

impl PriceLookup for PriceCurve {
    fn kind(&self) -> CurveKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn get(&self, i: usize) -> Option<Price> {
        self.at(i)
    }
}

/// Pointwise sum of two supply curves (`S^{r+1} = S^r + S^{r→r+1}`).
pub fn curve_add(a: &PriceCurve, b: &PriceCurve) -> Result<PriceCurve, CurveError> {
    if a.kind != CurveKind::Supply || b.kind != CurveKind::Supply {
        return Err(CurveError::KindMismatch);
    }
    a.zip_with(b, CurveKind::Supply, |x, y| x + y)
}

/// Pointwise demand minus supply (`D^r = D^{r+1} − S^{r→r+1}`). Entries may go
/// negative.
pub fn curve_sub(a: &PriceCurve, b: &PriceCurve) -> Result<PriceCurve, CurveError> {
    if a.kind != CurveKind::Demand || b.kind != CurveKind::Supply {
        return Err(CurveError::KindMismatch);
    }
    a.zip_with(b, CurveKind::Demand, |x, y| x - y)
}

/// Largest `l` in `[0, n]` with `D_l >= S_l`.
pub fn optimal_trade_size(supply: &PriceCurve, demand: &PriceCurve) -> Result<usize, CurveError> {
    if supply.len() != demand.len() {
        return Err(CurveError::LengthMismatch {
            left: supply.len(),
            right: demand.len(),
        });
    }
    if supply.kind != CurveKind::Supply || demand.kind != CurveKind::Demand {
        return Err(CurveError::KindMismatch);
    }
    Ok(trade_size(supply, demand))
}

/// Same as [`optimal_trade_size`] but tolerates unequal lengths (a single
/// double auction with more buyers than sellers, say): only the first
/// `min(|S|, |D|)` positions can trade.
pub fn trade_size(supply: &impl PriceLookup, demand: &impl PriceLookup) -> usize {
    let m = supply.len().min(demand.len());
    // D − S is non-increasing, so the profitable positions form a prefix.
    let (mut lo, mut hi) = (0usize, m + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if demand.get(mid) >= supply.get(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
