//! Double-auction rules and distributed supply-chain market protocols.
//!
//! Prices are exact rationals throughout; only Monte-Carlo aggregates in
//! [`experiments`] use floating point.

pub mod auction;
pub mod curve;
pub mod error;
pub mod experiments;
pub mod instance;
pub mod parallel;
pub mod price;
pub mod protocol;
pub mod rules;
pub mod verify;

pub use auction::{run_auction, AuctionOutcome};
pub use curve::{curve_add, curve_sub, optimal_trade_size, trade_size, CurveEntry, CurveKind, PriceCurve, PriceLookup};
pub use error::{CurveError, InstanceError, ProtocolError, RuleError};
pub use instance::{
    aggregate_chain_curves, build_market_curves, AgentId, Allocation, Bid, ChainCurves, MarketCurves, MarketRole,
    SupplyChainInstance, Transfers,
};
pub use price::{Bound, Price};
pub use protocol::{
    run_pivot, run_pivot_logn, run_protocol, run_symmetric, ChainOutcome, CoinSource, Protocol, RunOptions, Schedule,
};
pub use rules::{DaResult, DaRule, RuleFlags, UniformPrices};
