//! Simulated measurements: idealized and kernel-exact phase estimation,
//! the Hadamard test, and repetition-based confidence boosting.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::prob_core::QueryLedger;
use crate::spectral::{wrap_phase, ThetaDistribution};
use crate::state_space::{inner, CState, PhasedGroverUnitary, QUERIES_PER_U};

/// Phase estimation parameters.
///
/// The register has `M` outcomes `2πk/M` (QFT over ℤ_M). An outcome more
/// than `e` grid steps from θ has total probability at most `1/(2(e−1))`,
/// and within `e` steps the error is below `2π(e+1)/M`. Choosing
/// `e = ⌈1 + 1/(2δ)⌉` and `M = ⌈2π(e+1)/ε⌉` gives `Pr[|θ′ − θ| > ε] ≤ δ`.
/// The controls `t ∈ [0, M)` use `M − 1` controlled-𝒰 applications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpeConfig {
    accuracy: f64,
    confidence: f64,
    register: u64,
}

impl QpeConfig {
    pub fn new(accuracy: f64, confidence: f64) -> Result<Self> {
        if !(accuracy > 0.0 && accuracy.is_finite()) {
            return Err(Error::InvalidParameter(format!("QPE accuracy {accuracy} must be positive")));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidParameter(format!("QPE confidence {confidence} must lie in (0,1)")));
        }
        let spread = (1.0 + 1.0 / (2.0 * confidence)).ceil();
        let register = ((2.0 * PI * (spread + 1.0) / accuracy).ceil() as u64).max(2);
        Ok(QpeConfig { accuracy, confidence, register })
    }

    /// A config with an explicit register size; accuracy is one grid step.
    pub fn with_register(register: u64) -> Result<Self> {
        if register < 2 {
            return Err(Error::InvalidParameter("QPE register needs at least 2 outcomes".into()));
        }
        Ok(QpeConfig { accuracy: 2.0 * PI / register as f64, confidence: 0.5, register })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Number of outcomes M.
    pub fn register(&self) -> u64 {
        self.register
    }

    /// Ledger cost of one run: `4·(M − 1)`.
    pub fn queries(&self) -> u64 {
        QUERIES_PER_U * (self.register - 1)
    }
}

/// Pr[k | θ] = |(1/M) Σ_{t<M} e^{it(θ − 2πk/M)}|² as a function of
/// `x = Mθ/2π − k`: sin²(πx) / (M² sin²(πx/M)).
pub fn qpe_kernel(register: u64, x: f64) -> f64 {
    let m = register as f64;
    let den = (PI * x / m).sin();
    if den.abs() < 1e-300 {
        return 1.0;
    }
    let num = (PI * x).sin();
    (num * num) / (m * m * den * den)
}

/// Pr[outcome k | θ].
pub fn qpe_outcome_probability(theta: f64, register: u64, k: i64) -> f64 {
    qpe_kernel(register, register as f64 * theta / (2.0 * PI) - k as f64)
}

/// Idealized phase estimation: θ_j with probability q_j. No ledger cost.
pub fn sample_ideal_phase<R: Rng + ?Sized>(td: &ThetaDistribution, rng: &mut R) -> f64 {
    td.pairs()[td.sample_index(rng)].0
}

/// Kernel-exact phase estimation: draw the eigenphase, then the register
/// outcome. Outcomes are visited outward from the nearest grid point, where
/// almost all the mass sits.
pub fn sample_qpe<R: Rng + ?Sized>(
    td: &ThetaDistribution,
    cfg: &QpeConfig,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    ledger.charge(cfg.queries())?;
    let theta = sample_ideal_phase(td, rng);
    let m = cfg.register;
    let centre = (m as f64 * theta / (2.0 * PI)).round() as i64;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = centre;
    for step in 0..m as i64 {
        let offset = if step % 2 == 0 { -(step / 2) } else { step / 2 + 1 };
        k = centre + offset;
        acc += qpe_outcome_probability(theta, m, k);
        if acc > u {
            break;
        }
    }
    Ok(wrap_phase(2.0 * PI * k as f64 / m as f64))
}

/// Pr[|θ′| < threshold] for a single eigenphase, summed over the register.
pub fn qpe_window_probability(theta: f64, register: u64, threshold: f64) -> f64 {
    if threshold >= PI {
        return 1.0;
    }
    let m = register as f64;
    let reach = (threshold * m / (2.0 * PI)).floor() as i64 + 1;
    if 2 * reach + 1 >= register as i64 {
        return (0..register as i64)
            .filter(|&k| wrap_phase(2.0 * PI * k as f64 / m).abs() < threshold)
            .map(|k| qpe_outcome_probability(theta, register, k))
            .sum();
    }
    (-reach..=reach)
        .filter(|&k| (2.0 * PI * k as f64 / m).abs() < threshold)
        .map(|k| qpe_outcome_probability(theta, register, k))
        .sum()
}

/// Re⟨s|𝒰^T s⟩ by `T` sequential applications.
pub fn hadamard_overlap(u: &PhasedGroverUnitary, s: &CState, t: u64) -> Result<f64> {
    let mut cur = s.clone();
    for _ in 0..t {
        cur = u.apply_unmetered(&cur)?;
    }
    Ok(inner(u.space(), s, &cur)?.re)
}

/// Re⟨s|𝒰^T s⟩ = Σ q_j cos(Tθ_j) from the eigenphase distribution of `s`.
pub fn hadamard_overlap_spectral(td: &ThetaDistribution, t: u64) -> f64 {
    td.expect(|theta| (t as f64 * theta).cos())
}

/// Probability of outcome +1: ½ + ½·Re⟨s|𝒰^T s⟩.
pub fn acceptance_from_overlap(overlap: f64) -> f64 {
    (0.5 + 0.5 * overlap).clamp(0.0, 1.0)
}

/// The Hadamard test on `|+⟩|s⟩` with controlled-𝒰^T, charged `4T`.
pub fn hadamard_test<R: Rng + ?Sized>(
    u: &PhasedGroverUnitary,
    s: &CState,
    t: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<i8> {
    ledger.charge(QUERIES_PER_U * t)?;
    let p = acceptance_from_overlap(hadamard_overlap(u, s, t)?);
    Ok(if rng.random::<f64>() < p { 1 } else { -1 })
}

/// Median of `reps` runs.
pub fn boost_median<R: Rng + ?Sized>(mut run: impl FnMut(&mut R) -> f64, reps: usize, rng: &mut R) -> f64 {
    assert!(reps % 2 == 1, "reps must be odd");
    let mut xs: Vec<f64> = (0..reps).map(|_| run(rng)).collect();
    xs.sort_by(f64::total_cmp);
    xs[reps / 2]
}

/// Majority of `reps` boolean runs.
pub fn boost_majority<R: Rng + ?Sized>(mut run: impl FnMut(&mut R) -> bool, reps: usize, rng: &mut R) -> bool {
    assert!(reps % 2 == 1, "reps must be odd");
    let yes = (0..reps).filter(|_| run(rng)).count();
    2 * yes > reps
}

/// Pr[Bin(n, p) ≤ k], summed upward from 0. Accurate when `(1−p)^n` does
/// not underflow, i.e. when the mass below `k` is the small side.
pub fn binomial_cdf(n: u64, p: f64, k: u64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    let q = 1.0 - p;
    let mut pmf = q.powf(n as f64);
    let mut total = 0.0;
    for i in 0..=k.min(n) {
        total += pmf;
        pmf *= (n - i) as f64 / (i + 1) as f64 * p / q;
    }
    total.min(1.0)
}

/// Pr[Bin(reps, p) ≤ (reps−1)/2], the failure probability of a majority
/// vote over runs that are each right with probability `p`.
pub fn majority_failure(reps: usize, p: f64) -> f64 {
    binomial_cdf(reps as u64, p, (reps as u64 - 1) / 2)
}

const EXACT_REPS_LIMIT: usize = 301;

/// Smallest odd repetition count whose majority fails with probability at
/// most `delta` when each run is right with probability `p > 1/2`: exact
/// binomial tails up to 301 runs, the Chernoff bound
/// `exp(−r·KL(½‖p))` beyond.
pub fn reps_for(p: f64, delta: f64) -> usize {
    assert!(p > 0.5 && p < 1.0 && delta > 0.0);
    if p == 2.0 / 3.0 {
        return majority_reps(delta);
    }
    reps_uncached(p, delta)
}

fn reps_uncached(p: f64, delta: f64) -> usize {
    let mut r = 1;
    while r <= EXACT_REPS_LIMIT {
        if majority_failure(r, p) <= delta * (1.0 + 1e-12) {
            return r;
        }
        r += 2;
    }
    chernoff_reps(p, delta)
}

fn chernoff_reps(p: f64, delta: f64) -> usize {
    chernoff_reps_ln(p, -delta.ln())
}

fn chernoff_reps_ln(p: f64, ln_inv_delta: f64) -> usize {
    let kl = 0.5 * (0.5 / p).ln() + 0.5 * (0.5 / (1.0 - p)).ln();
    let r = (ln_inv_delta / kl).ceil() as usize;
    r | 1
}

/// [`reps_for`] at the Main Task's guaranteed success rate 2/3.
pub fn majority_reps(delta: f64) -> usize {
    majority_reps_ln(-delta.ln())
}

/// [`majority_reps`] for `δ = exp(−ln_inv_delta)`, usable where δ underflows.
pub fn majority_reps_ln(ln_inv_delta: f64) -> usize {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=EXACT_REPS_LIMIT / 2).map(|i| majority_failure(2 * i + 1, 2.0 / 3.0)).collect());
    let delta = (-ln_inv_delta).exp();
    match table.iter().position(|&f| f <= delta * (1.0 + 1e-12)) {
        Some(i) => 2 * i + 1,
        None => chernoff_reps_ln(2.0 / 3.0, ln_inv_delta),
    }
}
