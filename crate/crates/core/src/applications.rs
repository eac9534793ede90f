//! Demonstrations built on the estimator: classical Monte Carlo baselines,
//! Grover-style detection and Hellinger-distance distinguishing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::grover;
use crate::maintask::{main_task, Route, Verdict};
use crate::prob_core::{FiniteProbSpace, QueryLedger, RandVar, Transform};
use crate::reductions::ReductionConfig;

/// `n = max(N0, ⌈HELLINGER_FACTOR/H⌉)` makes the σ/n error at most `H²/4`.
pub const HELLINGER_FACTOR: f64 = 4.0;
/// Samples per group of the classical median-of-three-means distinguisher,
/// in units of `1/H²`. Chebyshev gives each group failure ≤ 1/4.
pub const CLASSICAL_GROUP_FACTOR: f64 = 16.0;
/// Classical detection draws `⌈N·ln 3⌉` samples, missing a `1/N` event
/// with probability ≤ 1/3.
pub const CLASSICAL_DETECT_FACTOR: f64 = 1.098_612_288_668_109_8;

/// Sample mean of `n_samples` draws.
pub fn classical_estimate<R: Rng + ?Sized>(
    rv: &RandVar,
    n_samples: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let mut total = 0.0;
    for _ in 0..n_samples {
        total += rv.draw(rng, ledger)?;
    }
    Ok(total / n_samples as f64)
}

/// Two candidate distributions over the same outcomes `0..D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistPair {
    q: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Q,
    R,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Hypothesis::Q => "q",
            Hypothesis::R => "r",
        })
    }
}

impl DistPair {
    pub fn new(q: &[f64], r: &[f64]) -> Result<Self> {
        if q.len() != r.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), got: r.len() });
        }
        FiniteProbSpace::new(q)?;
        FiniteProbSpace::new(r)?;
        Ok(DistPair { q: q.to_vec(), r: r.to_vec() })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn weights(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::Q => &self.q,
            Hypothesis::R => &self.r,
        }
    }

    /// `BC = Σ √(q_i r_i)`.
    pub fn bhattacharyya(&self) -> f64 {
        self.q.iter().zip(&self.r).map(|(a, b)| (a * b).sqrt()).sum()
    }

    /// `H² = Σ (√q_i − √r_i)²`, in `[0, 2]`.
    pub fn hellinger_sq(&self) -> f64 {
        self.q.iter().zip(&self.r).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum()
    }

    pub fn hellinger(&self) -> f64 {
        self.hellinger_sq().sqrt()
    }

    /// `y(i) = (√q_i − √r_i)/(√q_i + √r_i)`, with `0/0 = 0`.
    pub fn hellinger_values(&self) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.r)
            .map(|(a, b)| {
                let den = a.sqrt() + b.sqrt();
                if den == 0.0 {
                    0.0
                } else {
                    (a.sqrt() - b.sqrt()) / den
                }
            })
            .collect()
    }

    /// The pair `(q ⊗ q′, r ⊗ r′)` over `D·D′` outcomes.
    pub fn tensor(&self, other: &DistPair) -> DistPair {
        let prod = |a: &[f64], b: &[f64]| a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        DistPair { q: prod(&self.q, &other.q), r: prod(&self.r, &other.r) }
    }

    /// Mean of the Hellinger variable under `h`.
    pub fn hellinger_mean(&self, h: Hypothesis) -> f64 {
        self.weights(h).iter().zip(self.hellinger_values()).map(|(w, y)| w * y).sum()
    }
}

/// The Hellinger variable on the space of the hypothesis `under`. Its means
/// satisfy `μ_q − μ_r = H²` and `E_q[y²] + E_r[y²] ≤ H²`.
pub fn hellinger_rv(pair: &DistPair, under: Hypothesis) -> Result<RandVar> {
    RandVar::new(pair.weights(under), &pair.hellinger_values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishOutcome {
    pub verdict: Hypothesis,
    pub estimate: f64,
    pub queries: u64,
}

fn closer(pair: &DistPair, estimate: f64) -> Hypothesis {
    let (mq, mr) = (pair.hellinger_mean(Hypothesis::Q), pair.hellinger_mean(Hypothesis::R));
    if (estimate - mq).abs() <= (estimate - mr).abs() {
        Hypothesis::Q
    } else {
        Hypothesis::R
    }
}

fn require_distinct(pair: &DistPair) -> Result<f64> {
    let h = pair.hellinger();
    if h <= 0.0 {
        return Err(Error::Precondition("q and r coincide (H = 0)".into()));
    }
    Ok(h)
}

/// Sample size handed to the quantum estimator for a pair at distance `h`.
pub fn quantum_distinguish_n(h: f64) -> u64 {
    ((HELLINGER_FACTOR / h).ceil() as u64).max(crate::reductions::N0)
}

/// Estimates `E_p[y]` to `σ_p/n ≤ H/n ≤ H²/4` and picks the closer mean.
pub fn distinguish_distributions<R: Rng + ?Sized>(
    pair: &DistPair,
    truth: Hypothesis,
    cfg: &ReductionConfig,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<DistinguishOutcome> {
    let h = require_distinct(pair)?;
    let rv = hellinger_rv(pair, truth)?;
    let res = cfg.estimate_mean(&rv, quantum_distinguish_n(h), rng, ledger)?;
    Ok(DistinguishOutcome { verdict: closer(pair, res.estimate), estimate: res.estimate, queries: res.queries })
}

/// Samples per group for the classical distinguisher.
pub fn classical_group_size(h: f64) -> u64 {
    (CLASSICAL_GROUP_FACTOR / (h * h)).ceil() as u64
}

/// Median of three sample means, each over [`classical_group_size`] draws.
pub fn classical_distinguish<R: Rng + ?Sized>(
    pair: &DistPair,
    truth: Hypothesis,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<DistinguishOutcome> {
    let h = require_distinct(pair)?;
    let rv = hellinger_rv(pair, truth)?;
    let before = ledger.count();
    let m = classical_group_size(h);
    let mut means = [0.0; 3];
    for slot in &mut means {
        *slot = classical_estimate(&rv, m, rng, ledger)?;
    }
    means.sort_by(f64::total_cmp);
    Ok(DistinguishOutcome { verdict: closer(pair, means[1]), estimate: means[1], queries: ledger.count() - before })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Whether the nonzero hypothesis was reported.
    pub found: bool,
    pub queries: u64,
}

/// Distinguishes `μ = 0` from `μ = p_alt` for a variable with `s² ≤ p_alt`,
/// via the Main Task on `y/√p_alt` at `ε = √p_alt`.
pub fn quantum_detect<R: Rng + ?Sized>(
    rv: &RandVar,
    p_alt: f64,
    route: Route,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Detection> {
    if !(p_alt > 0.0 && p_alt <= 1.0) {
        return Err(Error::OutOfRange { what: "alternative mean", value: p_alt });
    }
    let scaled = rv.transform(Transform::Scale(1.0 / p_alt.sqrt()))?;
    let out = main_task(&scaled, p_alt.sqrt(), route, rng, ledger)?;
    Ok(Detection { found: out.verdict == Verdict::Large, queries: out.queries })
}

/// Draws up to `⌈N·ln 3⌉` samples and reports whether a nonzero value showed up.
pub fn classical_detect<R: Rng + ?Sized>(
    rv: &RandVar,
    n_items: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Detection> {
    let limit = (CLASSICAL_DETECT_FACTOR * n_items as f64).ceil() as u64;
    for k in 1..=limit {
        if rv.draw(rng, ledger)? != 0.0 {
            return Ok(Detection { found: true, queries: k });
        }
    }
    Ok(Detection { found: false, queries: limit })
}

/// Grover distinguishing through the Main Task at `ε = 1/√N`.
pub fn grover_demo<R: Rng + ?Sized>(
    n_items: u64,
    marked: bool,
    route: Route,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Detection> {
    if n_items < 4 || !n_items.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("N = {n_items} must be a power of two ≥ 4")));
    }
    let rv = grover(n_items, marked)?;
    let out = main_task(&rv, 1.0 / (n_items as f64).sqrt(), route, rng, ledger)?;
    Ok(Detection { found: out.verdict == Verdict::Large, queries: out.queries })
}

/// Classical baseline for [`grover_demo`].
pub fn grover_classical<R: Rng + ?Sized>(
    n_items: u64,
    marked: bool,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<Detection> {
    classical_detect(&grover(n_items, marked)?, n_items, rng, ledger)
}
