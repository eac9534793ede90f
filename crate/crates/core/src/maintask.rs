//! The Main Task: decide `|μ| ≤ ε/2` (small) versus `|μ| ≥ ε` (large) with
//! confidence 2/3 using O(1/ε) queries.
//!
//! A [`Distinguisher`] eigendecomposes 𝒰 once and can then be run many times.
//! Its acceptance probability is known in closed form, so a majority over
//! `r` runs is sampled as one binomial draw with the same distribution as `r`
//! independent runs, charged `r` times the per-run cost.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    acceptance_from_overlap, binomial_cdf, hadamard_overlap_spectral, qpe_window_probability, sample_qpe, QpeConfig,
};
use crate::prob_core::{QueryLedger, RandVar, Transform};
use crate::spectral::{ket_one_distribution, ThetaDistribution};
use crate::state_space::{PhasedGroverUnitary, QUERIES_PER_U};

/// QPE accuracy is `ε / QPE_EPS_DIVISOR`.
pub const QPE_EPS_DIVISOR: f64 = 6.0;
pub const QPE_CONFIDENCE: f64 = 1.0 / 9.0;
/// Verdict threshold on `|θ′|`, in units of ε.
pub const QPE_THRESHOLD: f64 = 1.42;
pub const QPE_S_MAX: f64 = 1.0 / 16.0;
/// One QPE run costs `4(M−1) ≤ QPE_QUERY_CONSTANT/ε` with `M = ⌈84π/ε⌉`.
pub const QPE_QUERY_CONSTANT: f64 = 1056.0;

pub const ELEMENTARY_S_MAX: f64 = 1.0 / 4000.0;
pub const ELEMENTARY_EPS_MAX: f64 = 0.0003;
pub const ELEMENTARY_VOTES: u64 = 15;

pub const ELEVEN_S_MAX: f64 = 0.001;
/// Flips per coin and the heads needed to call a coin fair-ish. With 150
/// flips, a .98 coin falls below 144 heads with probability ≤ .0319 (all 11
/// pass w.p. ≥ .699) and a .94 coin reaches 144 with probability ≤ .199.
pub const ELEVEN_FLIPS: u64 = 150;
pub const ELEVEN_HEADS: u64 = 144;
pub const ELEVEN_COINS: usize = 11;

const S_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// `|μ| ≤ ε/2`.
    Small,
    /// `|μ| ≥ ε`.
    Large,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Small => "small",
            Verdict::Large => "large",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Qpe,
    Elementary,
    Eleven,
}

impl Route {
    /// Power-of-two factor bringing `s ≤ 1` within the route's hypothesis.
    pub fn rescale(self) -> f64 {
        match self {
            Route::Qpe => 1.0 / 16.0,
            Route::Elementary => 1.0 / 4096.0,
            Route::Eleven => 1.0 / 1024.0,
        }
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qpe" => Ok(Route::Qpe),
            "elementary" => Ok(Route::Elementary),
            "eleven" => Ok(Route::Eleven),
            _ => Err(Error::InvalidParameter(format!("unknown route {s:?}"))),
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Qpe => "qpe",
            Route::Elementary => "elementary",
            Route::Eleven => "eleven",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTaskVerdict {
    pub verdict: Verdict,
    pub queries: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<f64>,
    /// Heads counts per Hadamard-test coin (elementary routes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub votes: Vec<u64>,
}

#[derive(Debug, Clone)]
enum Kind {
    Qpe { cfg: QpeConfig, threshold: f64 },
    Elementary { t: u64, accept: f64 },
    Eleven { ts: Vec<u64>, accepts: Vec<f64> },
}

/// A Main Task instance prepared for repeated runs.
#[derive(Debug, Clone)]
pub struct Distinguisher {
    td: ThetaDistribution,
    eps: f64,
    kind: Kind,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::OutOfRange { what: "epsilon", value: eps });
    }
    Ok(())
}

fn check_s(rv: &RandVar, s_max: f64) -> Result<()> {
    let s = rv.rms();
    if s > s_max * (1.0 + S_SLACK) {
        return Err(Error::Precondition(format!("s = {s} exceeds {s_max}")));
    }
    Ok(())
}

/// Hadamard-test lengths mapping `[a_k, 2a_k]`, `a_k = .1ε·2^k`, onto `[2π/3, 4π/3]`.
pub fn eleven_lengths(eps: f64) -> Vec<u64> {
    (0..ELEVEN_COINS)
        .map(|k| {
            let a = 0.1 * eps * 2f64.powi(k as i32);
            ((2.0 * std::f64::consts::PI / (3.0 * a)).round() as u64).max(1)
        })
        .collect()
}

/// Θ_𝒰(|𝟏⟩) computed on the distribution of `y`: |𝟏⟩ lies in the
/// 𝒰-invariant span of functions of `y`, so merging equal values leaves the
/// eigenphase distribution unchanged and shrinks the eigenproblem.
fn ket_one_phases(rv: &RandVar) -> Result<ThetaDistribution> {
    ket_one_distribution(&PhasedGroverUnitary::new(&rv.collapsed())?)
}

impl Distinguisher {
    /// QPE route: requires `s ≤ 1/16`.
    pub fn qpe(rv: &RandVar, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        check_s(rv, QPE_S_MAX)?;
        Self::build(rv, eps, Route::Qpe)
    }

    /// Single Hadamard test with `T = ⌊π/(3ε)⌋`: requires `s ≤ 1/4000`, `ε ≤ .0003`.
    pub fn elementary(rv: &RandVar, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        check_s(rv, ELEMENTARY_S_MAX)?;
        if eps > ELEMENTARY_EPS_MAX {
            return Err(Error::Precondition(format!("epsilon {eps} exceeds {ELEMENTARY_EPS_MAX}")));
        }
        Self::build(rv, eps, Route::Elementary)
    }

    /// Eleven Hadamard-test coins: requires `s ≤ .001`.
    pub fn eleven(rv: &RandVar, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        check_s(rv, ELEVEN_S_MAX)?;
        Self::build(rv, eps, Route::Eleven)
    }

    /// Any `s ≤ 1` variable: multiplies `y` and `ε` by the route's rescale.
    pub fn problem1(rv: &RandVar, eps: f64, route: Route) -> Result<Self> {
        check_eps(eps)?;
        check_s(rv, 1.0)?;
        Self::problem1_unchecked(rv, eps, route)
    }

    /// [`Distinguisher::problem1`] without the second-moment check. The
    /// circuit is well defined either way; only the guarantee is lost.
    /// Reductions use this so that an earlier failed stage propagates as a
    /// wrong answer rather than an error.
    pub fn problem1_unchecked(rv: &RandVar, eps: f64, route: Route) -> Result<Self> {
        check_eps(eps)?;
        let c = route.rescale();
        Self::build(&rv.transform(Transform::Scale(c))?, eps * c, route)
    }

    fn build(rv: &RandVar, eps: f64, route: Route) -> Result<Self> {
        let td = ket_one_phases(rv)?;
        let kind = match route {
            Route::Qpe => Kind::Qpe {
                cfg: QpeConfig::new(eps / QPE_EPS_DIVISOR, QPE_CONFIDENCE)?,
                threshold: QPE_THRESHOLD * eps,
            },
            Route::Elementary => {
                let t = (std::f64::consts::PI / (3.0 * eps)).floor() as u64;
                Kind::Elementary { t, accept: acceptance_from_overlap(hadamard_overlap_spectral(&td, t)) }
            }
            Route::Eleven => {
                let ts = eleven_lengths(eps);
                let accepts =
                    ts.iter().map(|&t| acceptance_from_overlap(hadamard_overlap_spectral(&td, t))).collect();
                Kind::Eleven { ts, accepts }
            }
        };
        Ok(Distinguisher { td, eps, kind })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn theta_distribution(&self) -> &ThetaDistribution {
        &self.td
    }

    pub fn queries_per_run(&self) -> u64 {
        match &self.kind {
            Kind::Qpe { cfg, .. } => cfg.queries(),
            Kind::Elementary { t, .. } => ELEMENTARY_VOTES * QUERIES_PER_U * t,
            Kind::Eleven { ts, .. } => ELEVEN_FLIPS * QUERIES_PER_U * ts.iter().sum::<u64>(),
        }
    }

    /// Exact probability that one run answers small.
    pub fn prob_small(&self) -> f64 {
        match &self.kind {
            Kind::Qpe { cfg, threshold } => {
                self.td.expect(|theta| qpe_window_probability(theta, cfg.register(), *threshold)).clamp(0.0, 1.0)
            }
            Kind::Elementary { accept, .. } => 1.0 - binomial_cdf(ELEMENTARY_VOTES, *accept, ELEMENTARY_VOTES / 2),
            Kind::Eleven { accepts, .. } => accepts
                .iter()
                .map(|&a| binomial_cdf(ELEVEN_FLIPS, 1.0 - a, ELEVEN_FLIPS - ELEVEN_HEADS))
                .product(),
        }
    }

    /// One run of the distinguisher.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R, ledger: &mut QueryLedger) -> Result<MainTaskVerdict> {
        let queries = self.queries_per_run();
        match &self.kind {
            Kind::Qpe { cfg, threshold } => {
                let theta = sample_qpe(&self.td, cfg, rng, ledger)?;
                let verdict = if theta.abs() < *threshold { Verdict::Small } else { Verdict::Large };
                Ok(MainTaskVerdict { verdict, queries, theta_prime: Some(theta), votes: Vec::new() })
            }
            Kind::Elementary { accept, .. } => {
                ledger.charge(queries)?;
                let heads = Binomial::new(ELEMENTARY_VOTES, *accept).expect("probability in [0,1]").sample(rng);
                let verdict = if 2 * heads > ELEMENTARY_VOTES { Verdict::Small } else { Verdict::Large };
                Ok(MainTaskVerdict { verdict, queries, theta_prime: None, votes: vec![heads] })
            }
            Kind::Eleven { accepts, .. } => {
                ledger.charge(queries)?;
                let votes: Vec<u64> = accepts
                    .iter()
                    .map(|&a| Binomial::new(ELEVEN_FLIPS, a).expect("probability in [0,1]").sample(rng))
                    .collect();
                let verdict =
                    if votes.iter().all(|&h| h >= ELEVEN_HEADS) { Verdict::Small } else { Verdict::Large };
                Ok(MainTaskVerdict { verdict, queries, theta_prime: None, votes })
            }
        }
    }

    /// Majority verdict over `reps` (odd) independent runs.
    pub fn vote<R: Rng + ?Sized>(&self, reps: u64, rng: &mut R, ledger: &mut QueryLedger) -> Result<Verdict> {
        assert!(reps % 2 == 1, "reps must be odd");
        if reps == 1 {
            return Ok(self.run(rng, ledger)?.verdict);
        }
        ledger.charge(reps * self.queries_per_run())?;
        let small = Binomial::new(reps, self.prob_small()).expect("probability in [0,1]").sample(rng);
        Ok(if 2 * small > reps { Verdict::Small } else { Verdict::Large })
    }
}

/// QPE route on a variable with `s ≤ 1/16`.
pub fn main_task_qpe<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<MainTaskVerdict> {
    Distinguisher::qpe(rv, eps)?.run(rng, ledger)
}

/// Majority of 15 Hadamard tests with `T = ⌊π/(3ε)⌋`.
pub fn main_task_elementary<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<MainTaskVerdict> {
    Distinguisher::elementary(rv, eps)?.run(rng, ledger)
}

/// Eleven coins; small iff every coin shows at least 144 heads in 150 flips.
pub fn main_task_eleven_intervals<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<MainTaskVerdict> {
    Distinguisher::eleven(rv, eps)?.run(rng, ledger)
}

/// The Main Task for any `s ≤ 1`, through the chosen route.
pub fn main_task<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    route: Route,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<MainTaskVerdict> {
    Distinguisher::problem1(rv, eps, route)?.run(rng, ledger)
}

/// `y″ = (y − μ̂)/2`, which has `E[y″²] ≤ 1` when `s ≤ 1` and `|μ̂| ≤ 1`.
pub fn shifted_variable(rv: &RandVar, mu_hat: f64) -> Result<RandVar> {
    if !(-1.0..=1.0).contains(&mu_hat) {
        return Err(Error::OutOfRange { what: "mu_hat", value: mu_hat });
    }
    rv.map(|y| (y - mu_hat) / 2.0)
}

/// Distinguishes `|μ̂ − μ| ≤ ε/2` (small) from `|μ̂ − μ| ≥ ε` (large).
pub fn shifted_distinguisher(rv: &RandVar, eps: f64, mu_hat: f64, route: Route) -> Result<Distinguisher> {
    check_eps(eps)?;
    check_s(rv, 1.0)?;
    Distinguisher::problem1(&shifted_variable(rv, mu_hat)?, eps / 2.0, route)
}

/// [`shifted_distinguisher`] without the second-moment check.
pub fn shifted_distinguisher_unchecked(rv: &RandVar, eps: f64, mu_hat: f64, route: Route) -> Result<Distinguisher> {
    Distinguisher::problem1_unchecked(&shifted_variable(rv, mu_hat)?, eps / 2.0, route)
}

pub fn main_task_shifted<R: Rng + ?Sized>(
    rv: &RandVar,
    eps: f64,
    mu_hat: f64,
    route: Route,
    rng: &mut R,
    ledger: &mut QueryLedger,
) -> Result<MainTaskVerdict> {
    shifted_distinguisher(rv, eps, mu_hat, route)?.run(rng, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{fig_aa, grover};
    use crate::rng::trial_rng;

    fn success_rate(d: &Distinguisher, want: Verdict, trials: u64, seed: u64) -> f64 {
        let mut ok = 0;
        for i in 0..trials {
            let mut rng = trial_rng(seed, i);
            if d.run(&mut rng, &mut QueryLedger::new()).unwrap().verdict == want {
                ok += 1;
            }
        }
        ok as f64 / trials as f64
    }

    #[test]
    fn eleven_constants() {
        let tail_i = binomial_cdf(ELEVEN_FLIPS, 0.02, ELEVEN_FLIPS - ELEVEN_HEADS);
        assert!(tail_i.powi(11) >= 2.0 / 3.0);
        let pass_ii = 1.0 - binomial_cdf(ELEVEN_FLIPS, 0.94, ELEVEN_HEADS - 1);
        assert!(pass_ii <= 1.0 / 3.0);
        let ts = eleven_lengths(1e-3);
        assert!(ts.iter().all(|&t| (t as f64) <= 22.0 / 1e-3));
        for (k, &t) in ts.iter().enumerate() {
            let a = 0.1e-3 * 2f64.powi(k as i32);
            assert!((t as f64 * a - 2.0 * std::f64::consts::PI / 3.0).abs() < a);
        }
    }

    #[test]
    fn qpe_grover_examples() {
        let marked = grover(64, true).unwrap().transform(Transform::Scale(1.0 / 16.0)).unwrap();
        let eps = (1.0 / 8.0) / 16.0;
        let d = Distinguisher::qpe(&marked, eps).unwrap();
        assert!(d.prob_small() <= 1.0 / 3.0);
        assert!(success_rate(&d, Verdict::Large, 200, 1) >= 2.0 / 3.0 - 0.1);

        let empty = grover(64, false).unwrap();
        let d = Distinguisher::qpe(&empty, eps).unwrap();
        assert!(d.prob_small() >= 2.0 / 3.0);
        assert!(success_rate(&d, Verdict::Small, 200, 2) >= 2.0 / 3.0 - 0.1);
    }

    #[test]
    fn qpe_fig_aa_large() {
        let rv = fig_aa().transform(Transform::Scale(1.0 / 16.0)).unwrap();
        let eps = fig_aa().mean() / 16.0;
        let d = Distinguisher::qpe(&rv, eps).unwrap();
        assert!(d.prob_small() <= 1.0 / 3.0);
        assert!(success_rate(&d, Verdict::Large, 200, 3) >= 2.0 / 3.0 - 0.1);
    }

    #[test]
    fn qpe_preconditions_and_cost() {
        let mut rng = trial_rng(0, 0);
        let mut ledger = QueryLedger::new();
        assert!(main_task_qpe(&fig_aa(), 0.1, &mut rng, &mut ledger).is_err());
        let rv = fig_aa().transform(Transform::Scale(0.1)).unwrap();
        assert!(main_task_qpe(&rv, 0.0, &mut rng, &mut ledger).is_err());
        assert!(main_task_qpe(&rv, 1.5, &mut rng, &mut ledger).is_err());
        for &eps in &[0.1, 0.01, 0.001] {
            let v = main_task_qpe(&rv, eps, &mut rng, &mut ledger).unwrap();
            assert!(v.queries as f64 <= QPE_QUERY_CONSTANT / eps);
            assert!(v.theta_prime.is_some());
        }
    }

    #[test]
    fn verdict_json() {
        let v = MainTaskVerdict { verdict: Verdict::Small, queries: 12, theta_prime: Some(0.5), votes: vec![] };
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"verdict":"small","queries":12,"theta_prime":0.5}"#);
    }

    fn scaled_fig_aa(target_mu: f64) -> RandVar {
        let base = fig_aa();
        base.transform(Transform::Scale(target_mu / base.mean())).unwrap()
    }

    #[test]
    fn elementary_examples() {
        let eps = 0.00005;
        let zero = RandVar::constant(0.0).unwrap();
        let d = Distinguisher::elementary(&zero, eps).unwrap();
        assert!(d.prob_small() > 0.999);
        for mult in [1.0, 2.0] {
            let rv = scaled_fig_aa(mult * eps);
            assert!(rv.rms() <= ELEMENTARY_S_MAX);
            let d = Distinguisher::elementary(&rv, eps).unwrap();
            let Kind::Elementary { accept, .. } = d.kind else { unreachable!() };
            assert!(accept <= 0.5 + 0.5 * -0.46 + 0.003, "mult {mult}: {accept}");
            assert!(d.prob_small() <= 1.0 / 3.0);
        }
        assert!(Distinguisher::elementary(&zero, 0.001).is_err());
        assert!(Distinguisher::elementary(&scaled_fig_aa(0.01), 0.0002).is_err());
        assert!(Distinguisher::elementary(&zero, 0.0002).is_ok());
    }

    #[test]
    fn eleven_examples() {
        let eps = 0.0003;
        let zero = RandVar::constant(0.0).unwrap();
        let d = Distinguisher::eleven(&zero, eps).unwrap();
        let Kind::Eleven { accepts, .. } = &d.kind else { unreachable!() };
        assert!(accepts.iter().all(|&a| a >= 0.98));
        assert!(d.prob_small() >= 2.0 / 3.0);

        let tiny = scaled_fig_aa(0.0001 * eps);
        let d = Distinguisher::eleven(&tiny, eps).unwrap();
        assert!(d.prob_small() >= 2.0 / 3.0);

        let rv = scaled_fig_aa(eps);
        assert!(rv.rms() <= ELEVEN_S_MAX);
        let d = Distinguisher::eleven(&rv, eps).unwrap();
        let Kind::Eleven { accepts, .. } = &d.kind else { unreachable!() };
        assert!(accepts.iter().any(|&a| a <= 0.94));
        assert!(d.prob_small() <= 1.0 / 3.0);
    }

    #[test]
    fn problem1_routes_agree() {
        let mut ledger = QueryLedger::new();
        let eps = 0.05;
        for route in [Route::Qpe, Route::Elementary] {
            for (mu, want) in [(0.0, Verdict::Small), (eps, Verdict::Large), (-1.5 * eps, Verdict::Large)] {
                let rv = if mu == 0.0 { RandVar::new(&[0.5, 0.5], &[-0.5, 0.5]).unwrap() } else { scaled_fig_aa(mu) };
                let d = Distinguisher::problem1(&rv, eps, route).unwrap();
                let p = if want == Verdict::Small { d.prob_small() } else { 1.0 - d.prob_small() };
                assert!(p >= 2.0 / 3.0, "{route} mu={mu} p={p}");
                let mut rng = trial_rng(9, 0);
                d.run(&mut rng, &mut ledger).unwrap();
            }
        }
    }

    #[test]
    fn vote_charges_every_run() {
        let rv = fig_aa();
        let d = Distinguisher::problem1(&rv, 0.1, Route::Qpe).unwrap();
        let mut ledger = QueryLedger::new();
        let mut rng = trial_rng(1, 1);
        let v = d.vote(31, &mut rng, &mut ledger).unwrap();
        assert_eq!(ledger.count(), 31 * d.queries_per_run());
        assert_eq!(v, Verdict::Large);
        let mut tight = QueryLedger::with_budget(d.queries_per_run());
        assert!(d.vote(3, &mut rng, &mut tight).is_err());
        assert_eq!(tight.count(), 0);
    }

    #[test]
    fn shifted_examples() {
        let rv = fig_aa();
        let mu = rv.mean();
        let eps = 0.02;
        let d = shifted_distinguisher(&rv, eps, mu, Route::Qpe).unwrap();
        assert!(d.prob_small() >= 2.0 / 3.0);
        let d = shifted_distinguisher(&rv, eps, mu - 1.5 * eps, Route::Qpe).unwrap();
        assert!(d.prob_small() <= 1.0 / 3.0);
        assert!(shifted_distinguisher(&rv, eps, 1.5, Route::Qpe).is_err());

        // Second moment of y″ stays ≤ 1 for extreme s = 1 and |μ̂| = 1.
        let extreme = RandVar::new(&[0.5, 0.5], &[-1.0, 1.0]).unwrap();
        for mu_hat in [-1.0, 1.0] {
            let shifted = shifted_variable(&extreme, mu_hat).unwrap();
            assert!(shifted.second_moment() <= 1.0 + 1e-15);
        }
    }
}
