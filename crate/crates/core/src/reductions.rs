//! The classical ladder from the Main Task to σ/n mean estimation.
//!
//! Every estimator takes an overall failure budget δ and splits it among its
//! sub-calls. Stages whose accuracy shrinks geometrically share their budget
//! through a [`LogLogSchedule`], so the total cost stays linear in 1/ε.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maintask::{shifted_distinguisher_unchecked, Route, Verdict};
use crate::measurement::{majority_reps_ln, reps_for};
use crate::prob_core::{QueryLedger, RandVar, Transform};

/// Tail constant `C` in `Pr[|y| > B] ≤ C/n²` for the simulated quantile.
pub const C_HAM: f64 = 64.0;
/// Smallest `n` handed to the quantile step.
pub const N0: u64 = 4;
/// Each simulated quantile climb has a budget of `⌈K_HAM·n⌉` queries.
pub const K_HAM: f64 = 2.0;
/// A simulated quantile run reports the median of this many climbs.
pub const QUANTILE_CLIMBS: usize = 5;
/// Assumed per-run failure of the simulated quantile; checked by calibration.
pub const QUANTILE_RUN_FAILURE: f64 = 0.1;
/// Interval shrink per binary-search stage is at least 4/3.
pub const BINARY_SEARCH_RATIO: f64 = 4.0 / 3.0;
/// Ratio of the geometric failure series shared by the halving stages.
pub const HALVING_FORWARD_RATIO: f64 = 0.9;
/// Calibrated bound on `queries / n` for [`estimate_mean`] with the QPE route.
pub const K_TOTAL: f64 = 1.5e10;

const S_SLACK: f64 = 1e-12;
const QUANTILE_TOL: f64 = 1e-12;

/// Confidence schedule `δ(η) = exp(−C·√(η/η*))`. The constant is the
/// smallest (to 1e-6) with `Σ_{j≥0} exp(−C·R^{j/2}) ≤ target`, which bounds
/// the total failure of any stage sequence whose accuracies shrink by at
/// least `R` per stage and end at or above `η*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogSchedule {
    pub eta_start: f64,
    pub eta_final: f64,
    pub ratio: f64,
    pub target: f64,
    pub c: f64,
}

impl LogLogSchedule {
    pub fn new(eta_start: f64, eta_final: f64, ratio: f64, target: f64) -> Result<Self> {
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("schedule ratio {ratio} must exceed 1")));
        }
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::InvalidParameter(format!("schedule target {target} must lie in (0,1)")));
        }
        if !(eta_final > 0.0) {
            return Err(Error::InvalidParameter(format!("final accuracy {eta_final} must be positive")));
        }
        Ok(LogLogSchedule { eta_start, eta_final, ratio, target, c: Self::constant_for(ratio, target) })
    }

    /// Upper bound on `Σ_{j≥0} exp(−c·R^{j/2})`, including the tail.
    pub fn series(c: f64, ratio: f64) -> f64 {
        let step = ratio.sqrt();
        let mut total = 0.0;
        let mut growth = 1.0;
        for _ in 0..100_000 {
            let term = (-c * growth).exp();
            let next_ratio = (-c * growth * (step - 1.0)).exp();
            total += term;
            if next_ratio < 0.5 && term < 1e-17 * total.max(1e-300) {
                // Consecutive ratios only shrink, so the rest is geometric-dominated.
                return total + term * next_ratio / (1.0 - next_ratio);
            }
            growth *= step;
        }
        f64::INFINITY
    }

    pub fn constant_for(ratio: f64, target: f64) -> f64 {
        let mut hi = 1.0;
        while Self::series(hi, ratio) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if Self::series(mid, ratio) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Failure budget for a stage run at accuracy `eta ≥ η*`.
    pub fn delta(&self, eta: f64) -> f64 {
        (-self.ln_inv_delta(eta)).exp()
    }

    /// `ln(1/δ(η))`, which stays finite where δ underflows.
    pub fn ln_inv_delta(&self, eta: f64) -> f64 {
        self.c * (eta / self.eta_final).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMode {
    /// Amplitude-amplification search for successively larger values.
    Simulated,
    /// Exact quantile from the known distribution.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub route: Route,
    pub quantile: QuantileMode,
    pub k_ham: f64,
    pub c_ham: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { route: Route::Qpe, quantile: QuantileMode::Simulated, k_ham: K_HAM, c_ham: C_HAM }
    }
}

impl ReductionConfig {
    /// The `C` in `Pr[|y| > B] ≤ C/n²` that the quantile mode guarantees.
    pub fn tail_constant(&self) -> f64 {
        match self.quantile {
            QuantileMode::Simulated => self.c_ham,
            QuantileMode::Oracle => 1.0,
        }
    }

    /// Oversampling factor `⌈(1 + √C)·n⌉ / n` that absorbs the truncation bias.
    pub fn truncation_factor(&self) -> f64 {
        1.0 + self.tail_constant().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub eta: f64,
    pub delta: f64,
    pub outcome: String,
    /// Queries spent by this stage, sub-calls included.
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub queries: u64,
    pub trace: Vec<TraceEntry>,
}

struct Runner<'a, R: Rng + ?Sized> {
    cfg: &'a ReductionConfig,
    rng: &'a mut R,
    ledger: &'a mut QueryLedger,
    trace: Vec<TraceEntry>,
}

impl<'a, R: Rng + ?Sized> Runner<'a, R> {
    fn note(&mut self, stage: &str, eta: f64, delta: f64, outcome: String, since: u64) {
        let queries = self.ledger.count() - since;
        self.trace.push(TraceEntry { stage: stage.to_string(), eta, delta, outcome, queries });
    }

    /// Binary search for μ when `s ≤ 1`, failing with probability ≤ `delta`.
    fn s1(&mut self, rv: &RandVar, eps: f64, delta: f64) -> Result<f64> {
        let schedule = LogLogSchedule::new(1.0, eps / 2.0, BINARY_SEARCH_RATIO, delta)?;
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        while b - a > eps {
            let width = b - a;
            let eps_j = width / 2.0;
            let mu_hat = a + eps_j / 2.0;
            let mark = self.ledger.count();
            let delta_j = schedule.delta(eps_j);
            let reps = majority_reps_ln(schedule.ln_inv_delta(eps_j)) as u64;
            let verdict =
                shifted_distinguisher_unchecked(rv, eps_j, mu_hat, self.cfg.route)?.vote(reps, self.rng, self.ledger)?;
            match verdict {
                Verdict::Large => a += width / 2.0,
                Verdict::Small => b = a + 0.75 * width,
            }
            self.note("binary_search", eps_j, delta_j, format!("{verdict} x{reps}"), mark);
        }
        Ok(0.5 * (a + b))
    }

    /// Successive halving for `{0,1}` values: error ≤ σ/n w.p. ≥ 1 − delta.
    fn bernoulli(&mut self, rv: &RandVar, n: u64, delta: f64) -> Result<f64> {
        let part = delta / 3.0;
        let mark = self.ledger.count();
        let first = self.s1(rv, 0.25, part)?;
        let flipped = first >= 0.5;
        self.note("bernoulli_flip", 0.25, part, flipped.to_string(), mark);
        let y = if flipped { rv.map(|v| 1.0 - v)? } else { rv.clone() };

        let nf = n as f64;
        let floor = 1.0 / (4.0 * nf * nf);
        // Half the budget follows the log log schedule, half a geometric series
        // in the stage index; each stage takes the larger of its two shares.
        let schedule = LogLogSchedule::new(0.25 * 0.75f64.sqrt(), 1.0 / (8.0 * nf), BINARY_SEARCH_RATIO.sqrt(), part / 2.0)?;
        let forward = |j: i32| (2.0 / part).ln() - (1.0 - HALVING_FORWARD_RATIO).ln() - j as f64 * HALVING_FORWARD_RATIO.ln();
        let mut pbar = 0.75;
        let mut stage = 0;
        let p_hat = loop {
            if pbar <= floor {
                break None;
            }
            let mark = self.ledger.count();
            let eta = 0.25 * pbar.sqrt();
            let delta_j = (-schedule.ln_inv_delta(eta).min(forward(stage))).exp();
            stage += 1;
            let p_prime = self.s1(&y.transform(Transform::Scale(1.0 / pbar.sqrt()))?, eta, delta_j)? * pbar.sqrt();
            let lowered = p_prime < 0.5 * pbar;
            self.note("halving", eta, delta_j, format!("pbar={pbar} p'={p_prime}"), mark);
            if lowered {
                pbar *= 0.75;
            } else {
                break Some(0.5 * pbar);
            }
        };
        let p = match p_hat {
            None => 0.0,
            Some(p_hat) => {
                let c = (2.0 * p_hat).sqrt();
                let mark = self.ledger.count();
                // σ ≥ √p/2 when p ≤ 3/4, so the final accuracy is 1/(4n).
                let p = self.s1(&y.transform(Transform::Scale(1.0 / c))?, 1.0 / (4.0 * nf), part)? * c;
                self.note("bernoulli_final", 1.0 / (4.0 * nf), part, format!("p={p}"), mark);
                p
            }
        };
        Ok(if flipped { 1.0 - p } else { p })
    }

    fn bounded01(&mut self, rv: &RandVar, n: u64, delta: f64) -> Result<f64> {
        self.bernoulli(&rv.bernoullize()?, n, delta)
    }

    fn sigma_bound(&mut self, rv: &RandVar, n: u64, sigma_bound: f64) -> Result<f64> {
        if sigma_bound == 0.0 {
            return rv.draw(self.rng, self.ledger);
        }
        let scale = 1.0 / (4.0 * sigma_bound);
        let scaled = rv.transform(Transform::Scale(scale))?;
        let m = scaled.draw(self.rng, self.ledger)?;
        // Chebyshev leaves 1/4 of the budget for |m − μ| > 2σ.
        let est = self.s1(&scaled.transform(Transform::Shift(-m))?, 1.0 / (4.0 * n as f64), 1.0 / 12.0)?;
        Ok((est + m) / scale)
    }

    fn quantile(&mut self, rv_abs: &RandVar, n: u64) -> Result<f64> {
        match self.cfg.quantile {
            QuantileMode::Oracle => {
                // Charged like a simulated run so query counts stay comparable.
                self.ledger.charge(QUANTILE_CLIMBS as u64 * (self.cfg.k_ham * n as f64).ceil() as u64)?;
                Ok(quantile_oracle(rv_abs, n))
            }
            QuantileMode::Simulated => quantile_simulated(rv_abs, n, self.cfg.k_ham, self.rng, self.ledger),
        }
    }

    fn secondmoment(&mut self, rv: &RandVar, n: u64, delta: f64) -> Result<f64> {
        let n = n.max(N0);
        let n_eff = (self.cfg.truncation_factor() * n as f64).ceil() as u64;
        let part = delta / 3.0;
        let mark = self.ledger.count();
        let abs = rv.transform(Transform::Abs)?;
        let b = match self.cfg.quantile {
            QuantileMode::Oracle => self.quantile(&abs, n_eff)?,
            QuantileMode::Simulated => {
                let reps = reps_for(1.0 - QUANTILE_RUN_FAILURE, part);
                let mut bs = (0..reps).map(|_| self.quantile(&abs, n_eff)).collect::<Result<Vec<f64>>>()?;
                bs.sort_by(f64::total_cmp);
                bs[reps / 2]
            }
        };
        self.note("quantile", 1.0 / n_eff as f64, part, format!("B={b}"), mark);
        if b == 0.0 {
            return Ok(0.0);
        }
        let capped = rv.transform(Transform::Truncate(b))?.transform(Transform::Scale(1.0 / b))?;
        let nf = n_eff as f64;
        let mark = self.ledger.count();
        let s2 = self.bounded01(&capped.transform(Transform::Square)?, 2 * n_eff, part)?.max(1.0 / (2.0 * nf * nf));
        let two_s = 2.0 * s2.sqrt();
        self.note("second_moment", 1.0 / (2.0 * nf), part, format!("s2={s2}"), mark);
        let mark = self.ledger.count();
        let est = self.s1(&capped.transform(Transform::Scale(1.0 / two_s))?, 1.0 / (4.0 * nf), part)? * two_s * b;
        self.note("capped_mean", 1.0 / (4.0 * nf), part, format!("mu={est}"), mark);
        Ok(est)
    }

    fn mean(&mut self, rv: &RandVar, n: u64) -> Result<f64> {
        let n1 = (10f64.sqrt() * n as f64).ceil() as u64;
        let mark = self.ledger.count();
        let m = rv.draw(self.rng, self.ledger)?;
        self.note("montanaro", 0.0, 0.25, format!("m={m}"), mark);
        Ok(self.secondmoment(&rv.transform(Transform::Shift(-m))?, n1, 1.0 / 12.0)? + m)
    }
}

/// Largest outcome `B` with `Pr[x ≥ B] ≥ 1/n²`.
pub fn quantile_oracle(rv_abs: &RandVar, n: u64) -> f64 {
    let c = rv_abs.collapsed();
    let target = 1.0 / (n as f64 * n as f64) - QUANTILE_TOL;
    let mut acc = 0.0;
    for (&w, &v) in c.weights().iter().zip(c.values()).rev() {
        acc += w;
        if acc >= target {
            return v;
        }
    }
    c.values()[0]
}

/// One climb through draws of `x | x > x_t`, each found by amplitude
/// amplification with `T` iterations uniform in `[0, ⌈1.2^j⌉ − 1]` on the
/// `j`-th attempt since the last success. An attempt costs `4T + 2` queries
/// and succeeds with probability `sin²((2T+1)·asin√τ)`, `τ = Pr[x > x_t]`.
/// Halts at the budget and returns the last value found.
pub fn quantile_climb<R: Rng + ?Sized>(
    rv_abs: &RandVar,
    budget: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    let c = rv_abs.collapsed();
    let (w, v) = (c.weights(), c.values());
    // tails[i] = Pr[x > v[i]]
    let mut tails = vec![0.0; w.len()];
    for i in (0..w.len().saturating_sub(1)).rev() {
        tails[i] = tails[i + 1] + w[i + 1];
    }
    let mut current: Option<usize> = None;
    let mut spent = 0u64;
    let mut j = 1i32;
    loop {
        let range = (1.2f64.powi(j).ceil() as u64).max(1);
        let t = rng.random_range(0..range);
        let cost = 4 * t + 2;
        if spent + cost > budget {
            break;
        }
        ledger.charge(cost)?;
        spent += cost;
        let tau = current.map_or(1.0, |i| tails[i]);
        let p = if tau <= 0.0 { 0.0 } else { ((2 * t + 1) as f64 * tau.min(1.0).sqrt().asin()).sin().powi(2) };
        if rng.random::<f64>() < p {
            let start = current.map_or(0, |i| i + 1);
            let mut u = rng.random::<f64>() * tau;
            let mut next = w.len() - 1;
            for (k, &wk) in w.iter().enumerate().skip(start) {
                if u < wk {
                    next = k;
                    break;
                }
                u -= wk;
            }
            current = Some(next);
            j = 1;
        } else {
            j += 1;
        }
    }
    current.map(|i| v[i]).ok_or(Error::BudgetExhausted { count: ledger.count(), budget, requested: 2 })
}

/// Median of [`QUANTILE_CLIMBS`] climbs, each with budget `⌈k_ham·n⌉`.
pub fn quantile_simulated<R: Rng + ?Sized>(
    rv_abs: &RandVar,
    n: u64,
    k_ham: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<f64> {
    let budget = (k_ham * n as f64).ceil() as u64;
    let mut bs = (0..QUANTILE_CLIMBS).map(|_| quantile_climb(rv_abs, budget, rng, ledger)).collect::<Result<Vec<f64>>>()?;
    bs.sort_by(f64::total_cmp);
    Ok(bs[QUANTILE_CLIMBS / 2])
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    Ok(())
}

fn check_values(rv: &RandVar, ok: impl Fn(f64) -> bool, what: &'static str) -> Result<()> {
    match rv.values().iter().find(|&&y| !ok(y)) {
        Some(&y) => Err(Error::OutOfRange { what, value: y }),
        None => Ok(()),
    }
}

impl ReductionConfig {
    fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        ledger: &mut QueryLedger,
        body: impl FnOnce(&mut Runner<'_, R>) -> Result<f64>,
    ) -> Result<EstimateResult> {
        let before = ledger.count();
        let mut runner = Runner { cfg: self, rng, ledger, trace: Vec::new() };
        let estimate = body(&mut runner)?;
        let trace = runner.trace;
        Ok(EstimateResult { estimate, queries: ledger.count() - before, trace })
    }

    /// `|μ̂ − μ| ≤ ε` w.p. ≥ 1 − δ, for `s ≤ 1`.
    pub fn estimate_mean_s1<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        eps: f64,
        delta: f64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::OutOfRange { what: "epsilon", value: eps });
        }
        if rv.rms() > 1.0 + S_SLACK {
            return Err(Error::Precondition(format!("s = {} exceeds 1", rv.rms())));
        }
        self.run(rng, ledger, |r| r.s1(rv, eps, delta))
    }

    /// `|μ̂ − μ| ≤ σ/n` for `{0,1}` values.
    pub fn estimate_bernoulli<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        n: u64,
        delta: f64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        check_n(n)?;
        check_values(rv, |y| y == 0.0 || y == 1.0, "bernoulli value")?;
        self.run(rng, ledger, |r| r.bernoulli(rv, n, delta))
    }

    /// `|μ̂ − μ| ≤ √μ/n` for values in `[0,1]`.
    pub fn estimate_bounded01<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        n: u64,
        delta: f64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        check_n(n)?;
        check_values(rv, |y| (0.0..=1.0).contains(&y), "bounded value")?;
        self.run(rng, ledger, |r| r.bounded01(rv, n, delta))
    }

    /// `|μ̂ − μ| ≤ σ_bound/n`, assuming `σ ≤ σ_bound`.
    pub fn estimate_with_sigma_bound<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        n: u64,
        sigma_bound: f64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        check_n(n)?;
        if !(sigma_bound >= 0.0 && sigma_bound.is_finite()) {
            return Err(Error::OutOfRange { what: "sigma bound", value: sigma_bound });
        }
        self.run(rng, ledger, |r| r.sigma_bound(rv, n, sigma_bound))
    }

    /// A cap `B` with `Pr[x ≥ B] ≥ 1/n²` and `Pr[x > B] ≤ C/n²`.
    pub fn estimate_quantile<R: Rng + ?Sized>(
        &self,
        rv_abs: &RandVar,
        n: u64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<f64> {
        if n < N0 {
            return Err(Error::InvalidParameter(format!("quantile needs n ≥ {N0}")));
        }
        check_values(rv_abs, |y| y >= 0.0, "quantile value")?;
        let mut runner = Runner { cfg: self, rng, ledger, trace: Vec::new() };
        runner.quantile(rv_abs, n)
    }

    /// `|μ̂ − μ| ≤ s/n`.
    pub fn estimate_mean_secondmoment<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        n: u64,
        delta: f64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        check_n(n)?;
        self.run(rng, ledger, |r| r.secondmoment(rv, n, delta))
    }

    /// `|μ̂ − μ| ≤ σ/n` with probability ≥ 2/3.
    pub fn estimate_mean<R: Rng + ?Sized>(
        &self,
        rv: &RandVar,
        n: u64,
        rng: &mut R,
        ledger: &mut QueryLedger,
    ) -> Result<EstimateResult> {
        check_n(n)?;
        self.run(rng, ledger, |r| r.mean(rv, n))
    }
}

pub fn estimate_mean_s1<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_mean_s1(rv, eps, 1.0 / 3.0, rng, ledger)
}

pub fn estimate_bernoulli<R: Rng + ?Sized>(
    rv: &RandVar,
    n: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_bernoulli(rv, n, 1.0 / 3.0, rng, ledger)
}

pub fn estimate_bounded01<R: Rng + ?Sized>(
    rv: &RandVar,
    n: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_bounded01(rv, n, 1.0 / 3.0, rng, ledger)
}

pub fn estimate_with_sigma_bound<R: Rng + ?Sized>(
    rv: &RandVar,
    n: u64,
    sigma_bound: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_with_sigma_bound(rv, n, sigma_bound, rng, ledger)
}

pub fn estimate_mean_secondmoment<R: Rng + ?Sized>(
    rv: &RandVar,
    n: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_mean_secondmoment(rv, n, 1.0 / 3.0, rng, ledger)
}

pub fn estimate_mean<R: Rng + ?Sized>(
    rv: &RandVar,
    n: u64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<EstimateResult> {
    ReductionConfig::default().estimate_mean(rv, n, rng, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{bernoulli, fig_aa, heavy_tail};
    use crate::rng::trial_rng;
    use proptest::prelude::*;

    const PASS: f64 = 0.567;

    fn rate(trials: u64, seed: u64, mut hit: impl FnMut(&mut crate::rng::SimRng) -> bool) -> f64 {
        let ok = (0..trials).filter(|&t| hit(&mut trial_rng(seed, t))).count();
        ok as f64 / trials as f64
    }

    fn uniform(values: &[f64]) -> RandVar {
        RandVar::new(&vec![1.0 / values.len() as f64; values.len()], values).unwrap()
    }

    #[test]
    fn schedule_constant_is_sound_and_tight() {
        for ratio in [(4.0f64 / 3.0).sqrt(), 2f64.sqrt(), 2.0] {
            let c = LogLogSchedule::constant_for(ratio, 1.0 / 3.0);
            let partial: f64 = (0..2000).map(|j| (-c * ratio.powf(j as f64 / 2.0)).exp()).sum();
            assert!(partial <= 1.0 / 3.0, "R={ratio}: {partial}");
            assert!(LogLogSchedule::series(c, ratio) <= 1.0 / 3.0);
            assert!(LogLogSchedule::series(c - 2e-6, ratio) > 1.0 / 3.0);
        }
    }

    #[test]
    fn schedule_rejects_bad_parameters() {
        assert!(LogLogSchedule::new(1.0, 0.1, 1.0, 0.3).is_err());
        assert!(LogLogSchedule::new(1.0, 0.1, 2.0, 0.0).is_err());
        assert!(LogLogSchedule::new(1.0, 0.0, 2.0, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn schedule_sums_within_target(
            ratio in 1.05f64..4.0,
            target in 0.01f64..0.5,
            shrinks in proptest::collection::vec(0.0f64..1.0, 1..60),
        ) {
            let sched = LogLogSchedule::new(1.0, 1e-4, ratio, target).unwrap();
            let mut eta = 1.0f64;
            let mut total = 0.0;
            for extra in shrinks {
                if eta < 1e-4 {
                    break;
                }
                total += sched.delta(eta);
                eta /= ratio * (1.0 + extra);
            }
            prop_assert!(total <= target * (1.0 + 1e-9));
        }
    }

    #[test]
    fn s1_constant() {
        let rv = RandVar::constant(0.3).unwrap();
        let r = rate(20, 1, |rng| {
            let est = estimate_mean_s1(&rv, 0.01, rng, &mut QueryLedger::new()).unwrap().estimate;
            (est - 0.3).abs() <= 0.01
        });
        assert_eq!(r, 1.0);
    }

    #[test]
    fn s1_fig_aa_and_interval_shrink() {
        let rv = fig_aa();
        let mu = rv.mean();
        let r = rate(200, 2, |rng| {
            let res = estimate_mean_s1(&rv, 0.02, rng, &mut QueryLedger::new()).unwrap();
            let widths: Vec<f64> = res.trace.iter().map(|e| e.eta).collect();
            assert!(widths.windows(2).all(|w| w[1] <= 0.75 * w[0] + 1e-12));
            (res.estimate - mu).abs() <= 0.02
        });
        assert!(r >= PASS, "{r}");
    }

    #[test]
    fn s1_preconditions() {
        let mut rng = trial_rng(0, 0);
        let mut l = QueryLedger::new();
        assert!(estimate_mean_s1(&fig_aa(), 0.0, &mut rng, &mut l).is_err());
        assert!(estimate_mean_s1(&fig_aa(), 1.5, &mut rng, &mut l).is_err());
        let big = RandVar::constant(2.0).unwrap();
        assert!(estimate_mean_s1(&big, 0.1, &mut rng, &mut l).is_err());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = trial_rng(3, 0);
        let zero = estimate_bernoulli(&bernoulli(0.0).unwrap(), 16, &mut rng, &mut QueryLedger::new()).unwrap();
        assert_eq!(zero.estimate, 0.0);
        assert!(zero.trace.iter().all(|e| e.stage != "bernoulli_final"));
        let one = estimate_bernoulli(&bernoulli(1.0).unwrap(), 16, &mut rng, &mut QueryLedger::new()).unwrap();
        assert_eq!(one.estimate, 1.0);
        assert_eq!(one.trace.iter().find(|e| e.stage == "bernoulli_flip").unwrap().outcome, "true");
    }

    #[test]
    fn bernoulli_small_p() {
        let p = 1.0 / 64.0;
        let rv = bernoulli(p).unwrap();
        let tol = (p * (1.0 - p)).sqrt() / 32.0;
        let r = rate(200, 4, |rng| {
            (estimate_bernoulli(&rv, 32, rng, &mut QueryLedger::new()).unwrap().estimate - p).abs() <= tol
        });
        assert!(r >= PASS, "{r}");
        let mut rng = trial_rng(0, 0);
        assert!(estimate_bernoulli(&fig_aa(), 4, &mut rng, &mut QueryLedger::new()).is_err());
    }

    #[test]
    fn bounded01_examples() {
        let half = RandVar::constant(0.5).unwrap();
        let r = rate(50, 5, |rng| {
            (estimate_bounded01(&half, 8, rng, &mut QueryLedger::new()).unwrap().estimate - 0.5).abs()
                <= 0.5f64.sqrt() / 8.0
        });
        assert!(r >= PASS);
        let tenths = uniform(&(0..10).map(|k| k as f64 / 10.0).collect::<Vec<_>>());
        assert!((tenths.mean() - 0.45).abs() < 1e-12);
        let r = rate(200, 6, |rng| {
            (estimate_bounded01(&tenths, 16, rng, &mut QueryLedger::new()).unwrap().estimate - 0.45).abs()
                <= 0.45f64.sqrt() / 16.0
        });
        assert!(r >= PASS, "{r}");
        let mut rng = trial_rng(0, 0);
        assert!(estimate_bounded01(&RandVar::constant(1.5).unwrap(), 4, &mut rng, &mut QueryLedger::new()).is_err());
    }

    #[test]
    fn sigma_bound_examples() {
        let c = RandVar::constant(7.25).unwrap();
        let mut l = QueryLedger::new();
        let r = estimate_with_sigma_bound(&c, 10, 0.0, &mut trial_rng(0, 0), &mut l).unwrap();
        assert_eq!((r.estimate, r.queries, l.count()), (7.25, 1, 1));

        // Binomial(4, 1/2) scaled by 0.1 and centred: σ = 0.1.
        let rv = RandVar::new(&[1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0], &[-0.2, -0.1, 0.0, 0.1, 0.2])
            .unwrap()
            .transform(Transform::Shift(3.0))
            .unwrap();
        assert!((rv.std_dev() - 0.1).abs() < 1e-12);
        let r = rate(200, 7, |rng| {
            (estimate_with_sigma_bound(&rv, 16, 0.2, rng, &mut QueryLedger::new()).unwrap().estimate - 3.0).abs()
                <= 0.0125
        });
        assert!(r >= PASS, "{r}");
        assert!(estimate_with_sigma_bound(&rv, 16, -1.0, &mut trial_rng(0, 0), &mut QueryLedger::new()).is_err());
    }

    #[test]
    fn quantile_examples() {
        let cfg = ReductionConfig::default();
        let oracle = ReductionConfig { quantile: QuantileMode::Oracle, ..cfg.clone() };
        let c = RandVar::constant(2.5).unwrap();
        let u100 = uniform(&(1..=100).map(f64::from).collect::<Vec<_>>());
        let mut rng = trial_rng(8, 0);
        let mut l = QueryLedger::new();
        assert_eq!(oracle.estimate_quantile(&c, 5, &mut rng, &mut l).unwrap(), 2.5);
        assert_eq!(cfg.estimate_quantile(&c, 5, &mut rng, &mut l).unwrap(), 2.5);
        assert_eq!(quantile_oracle(&u100, 5), 97.0);
        assert_eq!(oracle.estimate_quantile(&u100, 5, &mut rng, &mut l).unwrap(), 97.0);
        assert!(cfg.estimate_quantile(&u100, 3, &mut rng, &mut l).is_err());
        assert!(cfg.estimate_quantile(&fig_aa().transform(Transform::Shift(-1.0)).unwrap(), 5, &mut rng, &mut l).is_err());
    }

    #[test]
    fn simulated_quantile_meets_both_tails() {
        let n = 5u64;
        let n2 = (n * n) as f64;
        for rv in [uniform(&(1..=100).map(f64::from).collect::<Vec<_>>()), heavy_tail()] {
            let good = (0..50)
                .filter(|&t| {
                    let b = quantile_simulated(&rv, n, K_HAM, &mut trial_rng(9, t), &mut QueryLedger::new()).unwrap();
                    rv.tail_at_least(b) >= 1.0 / n2 - 1e-12 && rv.tail_above(b) <= C_HAM / n2
                })
                .count();
            assert!(good >= 45, "{good}/50");
        }
    }

    #[test]
    fn oracle_quantile_is_exact() {
        for rv in [fig_aa(), heavy_tail(), bernoulli(1.0 / 256.0).unwrap()] {
            for n in [4u64, 10, 40, 300] {
                let b = quantile_oracle(&rv, n);
                let n2 = (n * n) as f64;
                assert!(rv.tail_at_least(b) >= 1.0 / n2 - 1e-12);
                assert!(rv.tail_above(b) < 1.0 / n2);
            }
        }
    }

    #[test]
    fn secondmoment_examples() {
        let c = RandVar::constant(-4.0).unwrap();
        let r = estimate_mean_secondmoment(&c, 8, &mut trial_rng(10, 0), &mut QueryLedger::new()).unwrap();
        assert!((r.estimate + 4.0).abs() <= 4.0 / 8.0);

        for (rv, seed) in [(heavy_tail(), 11), (fig_aa(), 12)] {
            let (mu, s) = (rv.mean(), rv.rms());
            let r = rate(200, seed, |rng| {
                (estimate_mean_secondmoment(&rv, 32, rng, &mut QueryLedger::new()).unwrap().estimate - mu).abs()
                    <= s / 32.0
            });
            assert!(r >= PASS, "{r}");
        }
        let zero = RandVar::constant(0.0).unwrap();
        assert_eq!(estimate_mean_secondmoment(&zero, 8, &mut trial_rng(0, 0), &mut QueryLedger::new()).unwrap().estimate, 0.0);
    }

    #[test]
    fn mean_examples() {
        let c = RandVar::constant(42.0).unwrap();
        let r = estimate_mean(&c, 8, &mut trial_rng(13, 0), &mut QueryLedger::new()).unwrap();
        assert_eq!(r.estimate, 42.0);

        let shifted = fig_aa().transform(Transform::Shift(100.0)).unwrap();
        let sigma = shifted.std_dev();
        assert!((sigma - 0.248).abs() < 0.001);
        let r = rate(200, 14, |rng| {
            (estimate_mean(&shifted, 32, rng, &mut QueryLedger::new()).unwrap().estimate - shifted.mean()).abs()
                <= sigma / 32.0
        });
        assert!(r >= PASS, "{r}");

        let p = 1.0 / 256.0;
        let rv = bernoulli(p).unwrap();
        let r = rate(200, 15, |rng| {
            (estimate_mean(&rv, 64, rng, &mut QueryLedger::new()).unwrap().estimate - p).abs()
                <= (p * (1.0 - p)).sqrt() / 64.0
        });
        assert!(r >= PASS, "{r}");
        assert!(estimate_mean(&rv, 0, &mut trial_rng(0, 0), &mut QueryLedger::new()).is_err());
    }

    #[test]
    fn result_queries_match_ledger() {
        let mut l = QueryLedger::new();
        l.charge(17).unwrap();
        let r = estimate_mean(&heavy_tail(), 16, &mut trial_rng(16, 0), &mut l).unwrap();
        assert_eq!(r.queries, l.count() - 17);
        assert!(r.queries as f64 <= K_TOTAL * 16.0);
        assert!(r.trace.iter().all(|e| e.queries <= r.queries));
        let top: u64 = r.trace.iter().filter(|e| ["montanaro", "quantile", "second_moment", "capped_mean"].contains(&e.stage.as_str())).map(|e| e.queries).sum();
        assert_eq!(top, r.queries);
        let text = serde_json::to_string(&r).unwrap();
        let back: EstimateResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.queries, r.queries);
        assert_eq!(back.trace.len(), r.trace.len());
        assert!((back.estimate - r.estimate).abs() <= 1e-15 * r.estimate.abs());
    }

    #[test]
    fn budget_exhaustion_propagates() {
        let mut l = QueryLedger::with_budget(1000);
        assert!(matches!(
            estimate_mean(&fig_aa(), 8, &mut trial_rng(17, 0), &mut l),
            Err(Error::BudgetExhausted { .. })
        ));
    }
}
