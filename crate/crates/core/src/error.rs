use thiserror::Error;

use crate::curve::CurveKind;
use crate::price::{ParsePriceError, Price};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CurveError {
    #[error("curve lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("incompatible curve kinds")]
    KindMismatch,
    #[error("{0:?} curve is not sorted")]
    NotSorted(CurveKind),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("market {0} has no bids")]
    EmptyMarket(usize),
    #[error("negative bid {amount} in market {market}")]
    NegativeBid { market: usize, amount: Price },
    #[error("an instance needs at least one good")]
    NoGoods,
    #[error("expected {expected} conversion markets, found {found}")]
    ConversionCount { expected: usize, found: usize },
    #[error("invalid instance file: {0}")]
    Format(String),
    #[error(transparent)]
    Price(#[from] ParsePriceError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("parameter {name} = {value} is outside [0, 1]")]
    BadParameter { name: &'static str, value: Price },
    #[error("unknown rule `{0}` (expected kda:<k>, vcg, tr, mcafee, alphared:<a>, alphapay:<a>)")]
    Unknown(String),
    #[error(transparent)]
    Price(#[from] ParsePriceError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("rule `{0}` is discriminating; the pivot protocol needs uniform prices")]
    RuleNotNd(String),
    #[error("rule `{0}` cannot be cleared from O(1) probed supply entries")]
    RuleNotProbeFriendly(String),
    #[error("rule `{0}` is not incentive compatible; pass the non-IC override to run it in a chain")]
    RuleNotIc(String),
    #[error("markets chose different trade sizes {0:?}")]
    InconsistentTrade(Vec<usize>),
    #[error("node {0} stopped before the protocol finished")]
    Stalled(usize),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

impl From<CurveError> for ProtocolError {
    fn from(e: CurveError) -> Self {
        ProtocolError::Instance(InstanceError::Curve(e))
    }
}
