//! Monte-Carlo evaluation of double-auction rules on random markets.
//!
//! Every random value comes from a ChaCha8 stream keyed by
//! `(seed, run, rule slot, market)`, so adding a rule or a market never
//! shifts the draws of another. Per-run quantities are computed exactly and
//! only converted to `f64` for averaging.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ProtocolError;
use crate::instance::SupplyChainInstance;
use crate::parallel;
use crate::price::Price;
use crate::protocol::{CoinSource, Protocol};
use crate::rules::DaRule;
use crate::verify::{optimal_gain, realized_gain, CoinMode, Mechanism, MechanismHandle};

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("expected revenue does not change sign on [0, 1] (vcg {vcg}, tr {tr})")]
    NoSignChange { vcg: f64, tr: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleDa,
    Chain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    /// Uniform on `[lo, hi]` at a resolution of `(hi − lo) / 2^32`.
    Uniform { lo: Price, hi: Price },
}

impl ValueDistribution {
    fn validate(&self) -> Result<(), ExperimentError> {
        match *self {
            ValueDistribution::Uniform { lo, hi } if lo.is_negative() || hi < lo => Err(ExperimentError::Config(
                format!("uniform bounds must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"),
            )),
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Price {
        match *self {
            ValueDistribution::Uniform { lo, hi } => {
                let k = rng.next_u32() as i128;
                lo + (hi - lo) * Price::new(k, 1 << 32)
            }
        }
    }
}

fn unit_uniform() -> ValueDistribution {
    ValueDistribution::Uniform {
        lo: Price::ZERO,
        hi: Price::ONE,
    }
}

fn default_goods() -> usize {
    2
}

fn default_true() -> bool {
    true
}

fn default_protocol() -> Protocol {
    Protocol::Pivot
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSearch {
    pub samples: usize,
    /// Stop once `|mean revenue|` is at most this.
    pub tol: f64,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch {
            samples: 10_000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Single-DA market sizes.
    #[serde(default)]
    pub buyers: usize,
    #[serde(default)]
    pub sellers: usize,
    /// Chain length `t` and bidders per market.
    #[serde(default = "default_goods")]
    pub goods: usize,
    #[serde(default)]
    pub market_size: usize,
    /// Buyer values, and seller / converter costs unless `cost_distribution`
    /// is set.
    #[serde(default = "unit_uniform")]
    pub distribution: ValueDistribution,
    #[serde(default)]
    pub cost_distribution: Option<ValueDistribution>,
    pub runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub rules: Vec<DaRule>,
    /// Feed every rule the same instances.
    #[serde(default = "default_true")]
    pub common_random_numbers: bool,
    /// Average randomized rules over both coin outcomes instead of drawing.
    #[serde(default)]
    pub exact_expectation: bool,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default)]
    pub alpha_search: Option<AlphaSearch>,
}

impl ExperimentConfig {
    pub fn single_da(buyers: usize, sellers: usize, runs: usize, seed: u64) -> Self {
        ExperimentConfig {
            mode: Mode::SingleDa,
            buyers,
            sellers,
            goods: 1,
            market_size: 0,
            distribution: unit_uniform(),
            cost_distribution: None,
            runs,
            seed,
            rules: Vec::new(),
            common_random_numbers: true,
            exact_expectation: false,
            protocol: default_protocol(),
            alpha_search: None,
        }
    }

    pub fn chain(goods: usize, market_size: usize, runs: usize, seed: u64) -> Self {
        ExperimentConfig {
            mode: Mode::Chain,
            goods,
            market_size,
            ..Self::single_da(0, 0, runs, seed)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        match self.mode {
            Mode::SingleDa if self.buyers == 0 || self.sellers == 0 => return bad("single_da needs buyers and sellers >= 1"),
            Mode::Chain if self.goods == 0 || self.market_size == 0 => return bad("chain needs goods and market_size >= 1"),
            Mode::Chain if self.goods > 200 => return bad("chain length is limited to 200 goods"),
            _ => {}
        }
        if self.rules.len() > 250 {
            return bad("at most 250 rules per experiment");
        }
        self.distribution.validate()?;
        if let Some(c) = &self.cost_distribution {
            c.validate()?;
        }
        for rule in &self.rules {
            rule.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn mechanism(&self, rule: DaRule) -> MechanismHandle {
        let mechanism = match self.mode {
            Mode::SingleDa => Mechanism::Auction,
            Mode::Chain => Mechanism::Chain(self.protocol),
        };
        MechanismHandle::new(mechanism, rule).allowing_non_ic()
    }
}

fn stream(seed: u64, run: usize, slot: usize, market: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((run as u64) << 16) | ((slot as u64) << 8) | market as u64);
    rng
}

/// splitmix64 finalizer, for deriving coin seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The instance of run `run`, as seen by every rule when common random
/// numbers are on.
pub fn gen_instance(config: &ExperimentConfig, run: usize) -> SupplyChainInstance {
    gen_instance_slot(config, run, 0)
}

fn gen_instance_slot(config: &ExperimentConfig, run: usize, slot: usize) -> SupplyChainInstance {
    let sizes: Vec<usize> = match config.mode {
        Mode::SingleDa => vec![config.sellers, config.buyers],
        Mode::Chain => vec![config.market_size; config.goods + 1],
    };
    let last = sizes.len() - 1;
    let costs = config.cost_distribution.unwrap_or(config.distribution);
    let markets = sizes
        .iter()
        .enumerate()
        .map(|(m, &size)| {
            let dist = if m == last { config.distribution } else { costs };
            let mut rng = stream(config.seed, run, slot, m);
            (0..size).map(|_| dist.draw(&mut rng)).collect()
        })
        .collect();
    SupplyChainInstance::from_markets(markets).expect("generated markets are valid")
}

/// Exact per-run measurements, already averaged over the coin where the
/// rule is randomized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSample {
    pub efficiency: f64,
    pub revenue: f64,
    pub optimal_gain: f64,
}

pub fn evaluate_run(config: &ExperimentConfig, rule: DaRule, rule_index: usize, run: usize) -> Result<RunSample, ExperimentError> {
    let slot = if config.common_random_numbers { 0 } else { rule_index + 1 };
    let instance = gen_instance_slot(config, run, slot);
    let mech = config.mechanism(rule);
    let lottery = if config.exact_expectation {
        mech.with_coin(CoinMode::Expectation).lottery(&instance)?
    } else {
        let coin_seed = mix(config.seed ^ mix(((run as u64) << 8) | rule_index as u64));
        let coin = CoinSource::Seeded(coin_seed).draw(&rule);
        mech.with_coin(CoinMode::Fixed(coin)).lottery(&instance)?
    };
    // E[gain] / optimum rather than E[gain / optimum]: same value, but the
    // dyadic draws keep every intermediate denominator small.
    let (_, best) = optimal_gain(&instance);
    let gain: Price = lottery.iter().map(|(w, o)| *w * realized_gain(&o.allocation, &instance)).sum();
    let efficiency = if best.is_zero() { Price::ONE } else { gain / best };
    let revenue: Price = lottery.iter().map(|(w, o)| *w * o.revenue()).sum();
    Ok(RunSample {
        efficiency: efficiency.to_f64(),
        revenue: revenue.to_f64(),
        optimal_gain: best.to_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub rule: String,
    pub mean_efficiency: f64,
    pub sd_efficiency: f64,
    pub mean_revenue: f64,
    pub sd_revenue: f64,
    pub runs: usize,
    pub seed: u64,
    pub mean_optimal_gain: f64,
}

impl MetricsRow {
    pub fn revenue_std_error(&self) -> f64 {
        self.sd_revenue / (self.runs as f64).sqrt()
    }
}

/// Mean and sample standard deviation (0 for a single sample).
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn evaluate_rule(config: &ExperimentConfig, rule: DaRule, rule_index: usize, label: String) -> Result<MetricsRow, ExperimentError> {
    let samples = parallel::map_range(config.runs, |run| evaluate_run(config, rule, rule_index, run))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let eff: Vec<f64> = samples.iter().map(|s| s.efficiency).collect();
    let rev: Vec<f64> = samples.iter().map(|s| s.revenue).collect();
    let gain: Vec<f64> = samples.iter().map(|s| s.optimal_gain).collect();
    let (mean_efficiency, sd_efficiency) = mean_sd(&eff);
    let (mean_revenue, sd_revenue) = mean_sd(&rev);
    Ok(MetricsRow {
        rule: label,
        mean_efficiency,
        sd_efficiency,
        mean_revenue,
        sd_revenue,
        runs: config.runs,
        seed: config.seed,
        mean_optimal_gain: mean_sd(&gain).0,
    })
}

/// One row per configured rule.
pub fn evaluate(config: &ExperimentConfig) -> Result<Vec<MetricsRow>, ExperimentError> {
    config.validate()?;
    config
        .rules
        .iter()
        .enumerate()
        .map(|(i, rule)| evaluate_rule(config, *rule, i, rule.to_string()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaStar {
    pub alpha: f64,
    /// `alpha` rounded to a dyadic rational, usable as a rule parameter.
    pub rule_alpha: Price,
    /// Range of `α` whose mean revenue is within 1.96 standard errors of 0.
    pub ci: (f64, f64),
    pub mean_revenue: f64,
    pub std_error: f64,
    pub mean_revenue_tr: f64,
    pub mean_revenue_vcg: f64,
    pub samples: usize,
}

/// Bisects for the `α` at which the α-reduction rule's expected revenue is
/// zero, using exact per-instance expectations over `samples` instances.
pub fn alpha_star_search(config: &ExperimentConfig, search: AlphaSearch) -> Result<AlphaStar, ExperimentError> {
    let cfg = ExperimentConfig {
        runs: search.samples.max(1),
        ..config.clone()
    };
    cfg.validate()?;
    // Branch revenues of the α-reduction rule: coin 1 is trade reduction,
    // coin 0 is VCG. The parameter itself does not affect either branch.
    let mech = cfg.mechanism(DaRule::AlphaReduction(Price::new(1, 2)));
    let branches = parallel::map_range(cfg.runs, |run| -> Result<(f64, f64), ExperimentError> {
        let instance = gen_instance(&cfg, run);
        let tr = mech.run_with_coin(&instance, true)?.revenue().to_f64();
        let vcg = mech.run_with_coin(&instance, false)?.revenue().to_f64();
        Ok((tr, vcg))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let n = branches.len() as f64;
    let tr = branches.iter().map(|b| b.0).sum::<f64>() / n;
    let vcg = branches.iter().map(|b| b.1).sum::<f64>() / n;
    if !(vcg <= 0.0 && tr >= 0.0 && tr > vcg) {
        return Err(ExperimentError::NoSignChange { vcg, tr });
    }
    let mean_at = |a: f64| a * tr + (1.0 - a) * vcg;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut alpha = 0.5;
    for _ in 0..200 {
        alpha = 0.5 * (lo + hi);
        let m = mean_at(alpha);
        if m.abs() <= search.tol {
            break;
        }
        if m < 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
    }
    let per_instance: Vec<f64> = branches.iter().map(|&(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    let (mean_revenue, sd) = mean_sd(&per_instance);
    let std_error = sd / n.sqrt();
    let half = 1.96 * std_error / (tr - vcg);
    Ok(AlphaStar {
        alpha,
        rule_alpha: Price::from_f64_dyadic(alpha, 24),
        ci: ((alpha - half).max(0.0), (alpha + half).min(1.0)),
        mean_revenue,
        std_error,
        mean_revenue_tr: tr,
        mean_revenue_vcg: vcg,
        samples: cfg.runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tradeoff {
    /// tr, α ∈ {0.25, 0.5, 0.75}, α*, vcg, mcafee.
    pub rows: Vec<MetricsRow>,
    pub alpha_star: AlphaStar,
    /// Distance of each α-family point from the tr–vcg line.
    pub residuals: Vec<(String, f64)>,
    /// McAfee's revenue minus the tr–vcg line's revenue at McAfee's
    /// efficiency; positive means above the line.
    pub mcafee_offset: f64,
}

impl Tradeoff {
    pub fn row(&self, prefix: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.rule == prefix)
    }

    pub fn alpha_star_row(&self) -> &MetricsRow {
        &self.rows[4]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

pub fn tradeoff_table(config: &ExperimentConfig) -> Result<Tradeoff, ExperimentError> {
    config.validate()?;
    let alpha_star = alpha_star_search(config, config.alpha_search.unwrap_or_default())?;
    let quarter = |k| DaRule::AlphaReduction(Price::new(k, 4));
    let rules = [
        DaRule::TradeReduction,
        quarter(1),
        quarter(2),
        quarter(3),
        DaRule::AlphaReduction(alpha_star.rule_alpha),
        DaRule::Vcg,
        DaRule::McAfee,
    ];
    let rows = rules
        .iter()
        .enumerate()
        .map(|(i, rule)| evaluate_rule(config, *rule, i, rule.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let (tr, vcg) = (&rows[0], &rows[5]);
    let (de, dr) = (vcg.mean_efficiency - tr.mean_efficiency, vcg.mean_revenue - tr.mean_revenue);
    let len = (de * de + dr * dr).sqrt();
    let residuals = rows[1..5]
        .iter()
        .map(|r| {
            let (e, v) = (r.mean_efficiency - tr.mean_efficiency, r.mean_revenue - tr.mean_revenue);
            let dist = if len == 0.0 { (e * e + v * v).sqrt() } else { (de * v - dr * e).abs() / len };
            (r.rule.clone(), dist)
        })
        .collect();
    let mc = &rows[6];
    let line_at = if de == 0.0 {
        tr.mean_revenue
    } else {
        tr.mean_revenue + (mc.mean_efficiency - tr.mean_efficiency) * dr / de
    };
    let mcafee_offset = mc.mean_revenue - line_at;
    Ok(Tradeoff {
        rows,
        alpha_star,
        residuals,
        mcafee_offset,
    })
}

/// `rule,mean_efficiency,sd_efficiency,mean_revenue,sd_revenue,runs,seed`.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rule", "mean_efficiency", "sd_efficiency", "mean_revenue", "sd_revenue", "runs", "seed"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.rule.clone(),
            r.mean_efficiency.to_string(),
            r.sd_efficiency.to_string(),
            r.mean_revenue.to_string(),
            r.sd_revenue.to_string(),
            r.runs.to_string(),
            r.seed.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Whitespace-separated `efficiency revenue "rule"` points for gnuplot.
pub fn gnuplot_data(rows: &[MetricsRow]) -> String {
    let mut out = String::from("# mean_efficiency mean_revenue rule\n");
    for r in rows {
        let _ = writeln!(out, "{} {} \"{}\"", r.mean_efficiency, r.mean_revenue, r.rule);
    }
    out
}
