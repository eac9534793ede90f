//! Built-in named instances.

use crate::error::{Error, Result};
use crate::prob_core::{RandVar, Transform};

/// Values of the seven-point uniform example with μ ≈ .196, s² ≈ .1.
pub const FIG_AA_VALUES: [f64; 7] = [-0.169, -0.032, 0.101, 0.148, 0.258, 0.511, 0.557];

/// Values of the seven-point uniform example used for the eigenvector figure.
pub const FIG_EIGS_VALUES: [f64; 7] = [0.560, 0.258, 0.057, -0.045, -0.088, -0.250, -0.494];

pub fn fig_aa() -> RandVar {
    RandVar::new(&[1.0 / 7.0; 7], &FIG_AA_VALUES).expect("valid built-in")
}

pub fn fig_eigs() -> RandVar {
    RandVar::new(&[1.0 / 7.0; 7], &FIG_EIGS_VALUES).expect("valid built-in")
}

/// `{0,1}`-valued variable with mean `p`.
pub fn bernoulli(p: f64) -> Result<RandVar> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { what: "bernoulli p", value: p });
    }
    RandVar::new(&[1.0 - p, p], &[0.0, 1.0])
}

/// Grover variable over `N` items: `√N` on the marked item (if any), 0 elsewhere.
/// Unmarked items share a value, so they are merged into one outcome.
pub fn grover(n: u64, marked: bool) -> Result<RandVar> {
    if n < 1 {
        return Err(Error::InvalidParameter("grover N must be positive".into()));
    }
    if !marked {
        return RandVar::constant(0.0);
    }
    let nf = n as f64;
    RandVar::new(&[1.0 - 1.0 / nf, 1.0 / nf], &[0.0, nf.sqrt()])
}

/// Values `2^k` with weights proportional to `4^{-k}`, `k = 0..=12`.
pub fn heavy_tail() -> RandVar {
    let raw: Vec<f64> = (0..=12).map(|k| 0.25f64.powi(k)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let values: Vec<f64> = (0..=12).map(|k| 2f64.powi(k)).collect();
    RandVar::new(&weights, &values).expect("valid built-in")
}

/// Resolves a built-in name: `fig-aa`, `fig-eigs`, `heavy-tail`,
/// `grover-N` (one marked item), `grover0-N` (none), `bernoulli-p` with
/// `p` decimal or `a/b`. A suffix `+c` shifts the variable by `c`.
pub fn by_name(name: &str) -> Result<RandVar> {
    if let Some((base, shift)) = name.rsplit_once('+') {
        let c: f64 = shift.parse().map_err(|_| Error::Instance(format!("bad shift in {name:?}")))?;
        return by_name(base)?.transform(Transform::Shift(c));
    }
    match name {
        "fig-aa" => return Ok(fig_aa()),
        "fig-eigs" => return Ok(fig_eigs()),
        "heavy-tail" => return Ok(heavy_tail()),
        _ => {}
    }
    if let Some(n) = name.strip_prefix("grover0-") {
        return grover(parse_count(n, name)?, false);
    }
    if let Some(n) = name.strip_prefix("grover-") {
        return grover(parse_count(n, name)?, true);
    }
    if let Some(p) = name.strip_prefix("bernoulli-") {
        return bernoulli(parse_fraction(p).ok_or_else(|| Error::Instance(format!("bad probability in {name:?}")))?);
    }
    Err(Error::Instance(format!("unknown instance {name:?}")))
}

fn parse_count(s: &str, name: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::Instance(format!("bad item count in {name:?}")))
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.parse().ok()?, b.parse().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => s.parse().ok(),
    }
}
