//! Spectral analysis of 𝒰: eigendecomposition, eigenphase distributions,
//! the haversine moment identities, tail bounds and the rotating-lines
//! construction of the eigenvectors.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state_space::{inner, norm_sq, normalized, CState, PhasedGroverUnitary};

/// Eigenphases closer than this are treated as one eigenspace.
pub const MERGE_TOL: f64 = 1e-10;
/// Accepted eigenpair residual.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Spacing used to separate duplicate values before the geometric construction.
pub const DUPLICATE_PERTURBATION: f64 = 1e-9;

/// Representative of θ in (−π, π].
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// hav θ = (1 − cos θ)/2 = sin²(θ/2).
pub fn haversine(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Eigenphases (ascending, in (−π, π]) and weighted-orthonormal eigenvectors of 𝒰.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenphases: Vec<f64>,
    eigenvectors: Vec<CState>,
    weights: Vec<f64>,
}

impl SpectralData {
    pub fn eigenphases(&self) -> &[f64] {
        &self.eigenphases
    }

    pub fn eigenvectors(&self) -> &[CState] {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenphases.len()
    }

    fn space(&self) -> crate::prob_core::FiniteProbSpace {
        crate::prob_core::FiniteProbSpace::new(&self.weights).expect("weights came from a valid space")
    }

    /// `|⟨u_j|s⟩|²` for every eigenvector, without merging eigenspaces.
    pub fn overlaps(&self, s: &CState) -> Result<Vec<f64>> {
        let space = self.space();
        check_unit(norm_sq(&space, s)?)?;
        self.eigenvectors.iter().map(|u| Ok(inner(&space, u, s)?.norm_sqr())).collect()
    }

    /// Largest ‖𝒰u_j − e^{iθ_j}u_j‖ in the weighted norm.
    pub fn max_residual(&self, u: &PhasedGroverUnitary) -> Result<f64> {
        let mut worst = 0.0f64;
        for (theta, v) in self.eigenphases.iter().zip(&self.eigenvectors) {
            let uv = u.apply_unmetered(v)?;
            let e = Complex64::from_polar(1.0, *theta);
            let diff = CState::new(uv.coeffs().iter().zip(v.coeffs()).map(|(a, b)| a - b * e).collect());
            worst = worst.max(norm_sq(u.space(), &diff)?.sqrt());
        }
        Ok(worst)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> Result<f64> {
        let space = self.space();
        let mut worst = 0.0f64;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate() {
                let g = inner(&space, a, b)?;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - Complex64::new(target, 0.0)).norm());
            }
        }
        Ok(worst)
    }
}

fn check_unit(n2: f64) -> Result<()> {
    if (n2 - 1.0).abs() > 1e-9 {
        Err(Error::NotUnit(n2))
    } else {
        Ok(())
    }
}

/// 𝒰 in the orthonormal basis `√p(ℓ)|ℓ⟩`: `(2vvᵀ − I)·diag(e^{iα})` with `v = √p`.
pub fn orthonormal_matrix(u: &PhasedGroverUnitary) -> DMatrix<Complex64> {
    let v: Vec<f64> = u.space().weights().iter().map(|p| p.sqrt()).collect();
    let d = v.len();
    DMatrix::from_fn(d, d, |i, j| {
        let r = 2.0 * v[i] * v[j] - if i == j { 1.0 } else { 0.0 };
        u.phases()[j] * r
    })
}

/// Dense eigendecomposition via a complex Schur factorization in the
/// orthonormal basis. 𝒰 is normal, so the triangular factor is diagonal up
/// to rounding and the Schur vectors are eigenvectors.
pub fn eigendecompose(u: &PhasedGroverUnitary) -> Result<SpectralData> {
    let d = u.dim();
    let m = orthonormal_matrix(u);
    let schur = Schur::try_new(m, f64::EPSILON, 1000 * d.max(10))
        .ok_or_else(|| Error::Eigensolver(format!("Schur iteration did not converge for {:?}", u.rv().values())))?;
    let (q, t) = schur.unpack();
    let sqrt_p: Vec<f64> = u.space().weights().iter().map(|p| p.sqrt()).collect();
    let mut pairs: Vec<(f64, CState)> = (0..d)
        .map(|j| {
            let theta = wrap_phase(t[(j, j)].arg());
            let coeffs = (0..d).map(|i| q[(i, j)] / sqrt_p[i]).collect();
            (theta, CState::new(coeffs))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (eigenphases, eigenvectors) = pairs.into_iter().unzip();
    let sd = SpectralData { eigenphases, eigenvectors, weights: u.space().weights().to_vec() };
    let res = sd.max_residual(u)?;
    if res > RESIDUAL_TOL {
        return Err(Error::Eigensolver(format!("residual {res:e} for {:?}", u.rv().values())));
    }
    Ok(sd)
}

/// The distribution Θ_𝒰(|σ⟩) of eigenphases, with degenerate eigenphases merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaDistribution {
    pairs: Vec<(f64, f64)>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl ThetaDistribution {
    /// Builds a distribution from `(θ, q)` pairs, merging eigenphases that
    /// agree to [`MERGE_TOL`] on the circle.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = pairs.into_iter().map(|(t, q)| (wrap_phase(t), q)).collect();
        if raw.is_empty() {
            return Err(Error::Empty);
        }
        if raw.iter().any(|&(t, q)| !t.is_finite() || !q.is_finite() || q < -1e-12) {
            return Err(Error::InvalidParameter("eigenphase weights must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::WeightSum(total));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (t, q) in raw {
            match merged.last_mut() {
                Some(last) if t - last.0 < MERGE_TOL => last.1 += q.max(0.0),
                _ => merged.push((t, q.max(0.0))),
            }
        }
        if merged.len() > 1 && circular_distance(merged[0].0, merged[merged.len() - 1].0) < MERGE_TOL {
            let first = merged.remove(0);
            merged.last_mut().unwrap().1 += first.1;
        }
        let mut acc = 0.0;
        let cumulative = merged
            .iter()
            .map(|p| {
                acc += p.1;
                acc
            })
            .collect();
        Ok(ThetaDistribution { pairs: merged, cumulative })
    }

    pub fn point_mass(theta: f64) -> Self {
        Self::new([(theta, 1.0)]).expect("point mass is valid")
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// E[f(θ)].
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.pairs.iter().map(|&(t, q)| q * f(t)).sum()
    }

    /// Mass of eigenphases where `pred` holds.
    pub fn mass(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.pairs.iter().filter(|p| pred(p.0)).map(|p| p.1).sum()
    }

    /// Draws an eigenphase index with probability q_j.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.pairs.len() - 1)
    }

    /// CSV rows `(theta, q)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,q")?;
        for (t, q) in &self.pairs {
            writeln!(out, "{t},{q}")?;
        }
        Ok(())
    }
}

/// Θ_𝒰(|s⟩) for a unit state `s`.
pub fn theta_distribution(sd: &SpectralData, s: &CState) -> Result<ThetaDistribution> {
    let q = sd.overlaps(s)?;
    ThetaDistribution::new(sd.eigenphases.iter().copied().zip(q))
}

/// Θ_𝒰(|𝟏⟩), the distribution the Main Task measures.
pub fn ket_one_distribution(u: &PhasedGroverUnitary) -> Result<ThetaDistribution> {
    theta_distribution(&eigendecompose(u)?, &CState::ket_one(u.dim()))
}

/// Comparison of the two haversine expectations with their closed forms.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub mu: f64,
    pub s2: f64,
    /// E[hav θ̃] for θ̃ ~ Θ(|𝟏+iy⟩/√(1+s²)).
    pub forward: f64,
    pub forward_expected: f64,
    pub forward_abs_dev: f64,
    /// E[1/hav θ] for θ ~ Θ(|𝟏⟩), absent when the check is skipped.
    pub inverse: Option<f64>,
    pub inverse_expected: Option<f64>,
    pub inverse_rel_dev: Option<f64>,
    pub inverse_skipped: Option<String>,
}

impl MomentReport {
    /// Forward identity to `tol` absolutely, reciprocal identity to `tol`
    /// relative to its (possibly large) value; a skipped check passes.
    pub fn passes(&self, tol: f64) -> bool {
        self.forward_abs_dev <= tol && self.inverse_rel_dev.is_none_or(|d| d <= tol)
    }
}

/// E[hav θ̃] = μ²/(1+s²) and E[(hav θ)⁻¹] = (1+s²)/μ² from exact distributions.
pub fn verify_moment_identities(u: &PhasedGroverUnitary) -> Result<MomentReport> {
    let rv = u.rv();
    let (mu, s2) = (rv.mean(), rv.second_moment());
    let sd = eigendecompose(u)?;
    let tilde = normalized(u.space(), &CState::one_plus_iy(rv))?;
    let forward = theta_distribution(&sd, &tilde)?.expect(haversine);
    let forward_expected = mu * mu / (1.0 + s2);

    let one = theta_distribution(&sd, &CState::ket_one(u.dim()))?;
    let fixed_mass = one.mass(|t| t.abs() < MERGE_TOL);
    let skipped = if mu == 0.0 {
        Some("mu = 0".to_string())
    } else if fixed_mass > 1e-12 {
        Some(format!("|1> has weight {fixed_mass:e} on eigenphase 0"))
    } else {
        None
    };
    let (inverse, inverse_expected, inverse_rel_dev) = if skipped.is_none() {
        let got = one.expect(|t| 1.0 / haversine(t));
        let want = (1.0 + s2) / (mu * mu);
        (Some(got), Some(want), Some(((got - want) / want).abs()))
    } else {
        (None, None, None)
    };
    Ok(MomentReport {
        mu,
        s2,
        forward,
        forward_expected,
        forward_abs_dev: (forward - forward_expected).abs(),
        inverse,
        inverse_expected,
        inverse_rel_dev,
        inverse_skipped: skipped,
    })
}

/// Exact eigenphase mass outside the concentration windows.
#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub c: f64,
    pub mu: f64,
    pub s: f64,
    /// Mass where |sin(θ/2)| leaves |μ|/√(1+s²)·[1/(1+Cs), 1/(1−Cs)].
    pub mass_outside: f64,
    pub bound: f64,
    /// Mass where |θ| leaves [⅘·2|μ|, 5/4·2|μ|], computed when s ≤ 1/16.
    pub window_mass_outside: Option<f64>,
    pub mu_zero: bool,
}

impl TailReport {
    pub fn holds(&self) -> bool {
        self.mu_zero
            || (self.mass_outside <= self.bound + 1e-12
                && self.window_mass_outside.is_none_or(|m| m <= 2.0 / 9.0 + 1e-12))
    }
}

/// Checks Pr[|sin(θ/2)| ∉ |μ|/√(1+s²)·[1/(1+Cs), 1/(1−Cs)]] ≤ 2/C² for θ ~ Θ(|𝟏⟩).
pub fn tail_bound_check(u: &PhasedGroverUnitary, c: f64) -> Result<TailReport> {
    let rv = u.rv();
    let (mu, s) = (rv.mean(), rv.rms());
    if !(c >= 1.0) {
        return Err(Error::InvalidParameter(format!("C = {c} must be at least 1")));
    }
    if s > (1.0 / c) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("s = {s} exceeds 1/C = {}", 1.0 / c)));
    }
    let bound = 2.0 / (c * c);
    if mu == 0.0 {
        return Ok(TailReport { c, mu, s, mass_outside: 0.0, bound, window_mass_outside: None, mu_zero: true });
    }
    let one = ket_one_distribution(u)?;
    let center = mu.abs() / (1.0 + s * s).sqrt();
    let lo = center / (1.0 + c * s);
    let hi = if c * s < 1.0 { center / (1.0 - c * s) } else { f64::INFINITY };
    let slack = 1e-12;
    let mass_outside = one.mass(|t| {
        let v = (t / 2.0).sin().abs();
        v < lo * (1.0 - slack) || v > hi * (1.0 + slack)
    });
    let window_mass_outside = (s <= 1.0 / 16.0 * (1.0 + 1e-12)).then(|| {
        let (a, b) = (0.8 * 2.0 * mu.abs(), 1.25 * 2.0 * mu.abs());
        one.mass(|t| t.abs() < a * (1.0 - slack) || t.abs() > b * (1.0 + slack))
    });
    Ok(TailReport { c, mu, s, mass_outside, bound, window_mass_outside, mu_zero: false })
}

/// Result of the rotating-lines construction.
#[derive(Debug, Clone)]
pub struct GeometricEigens {
    pub spectral: SpectralData,
    /// Rotation angles φ* ∈ [0, π) where the mean height vanishes.
    pub roots: Vec<f64>,
    /// Number of values that were shifted to break ties.
    pub perturbed: usize,
}

/// Separates duplicate values by multiples of [`DUPLICATE_PERTURBATION`].
fn separate_duplicates(values: &[f64]) -> (Vec<f64>, usize) {
    let mut out = values.to_vec();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut perturbed = 0;
    let mut run = 0;
    for w in 1..order.len() {
        if values[order[w]] == values[order[w - 1]] {
            run += 1;
            out[order[w]] += run as f64 * DUPLICATE_PERTURBATION;
            perturbed += 1;
        } else {
            run = 0;
        }
    }
    (out, perturbed)
}

/// Mean height Σ p tan(arctan y_ℓ − φ) of the rotated lines on Re = 1.
pub fn mean_height(weights: &[f64], angles: &[f64], phi: f64) -> f64 {
    weights.iter().zip(angles).map(|(p, b)| p * (b - phi).tan()).sum()
}

/// Eigenpairs of 𝒰 from the rotating-lines picture.
///
/// Rotating the line through the origin and `1 + iy_ℓ` clockwise by φ
/// meets Re = 1 at height `tan(arctan y_ℓ − φ)`. When the weighted mean of
/// these heights is zero, the points `1 + i·h_ℓ` form an eigenvector of 𝒰
/// with eigenvalue `e^{−2iφ}`. The mean height decreases between its poles
/// at φ = arctan y_ℓ + π/2, so each inter-pole gap holds exactly one root.
pub fn geometric_eigens(u: &PhasedGroverUnitary) -> Result<GeometricEigens> {
    let weights = u.space().weights();
    let (values, perturbed) = separate_duplicates(u.rv().values());
    let angles: Vec<f64> = values.iter().map(|y| y.atan()).collect();
    let mut poles: Vec<f64> = angles.iter().map(|b| b + FRAC_PI_2).collect();
    poles.sort_by(f64::total_cmp);
    if poles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::RootFinder("values still coincide after perturbation".into()));
    }
    let d = poles.len();
    let mut roots = Vec::with_capacity(d);
    for k in 0..d {
        let lo = poles[k];
        let hi = if k + 1 < d { poles[k + 1] } else { poles[0] + PI };
        roots.push(bisect_decreasing(|phi| mean_height(weights, &angles, phi), lo, hi)?.rem_euclid(PI));
    }
    roots.sort_by(f64::total_cmp);

    let mut pairs: Vec<(f64, CState)> = Vec::with_capacity(d);
    for &phi in &roots {
        let coeffs = angles.iter().map(|b| Complex64::new(1.0, (b - phi).tan())).collect();
        pairs.push((wrap_phase(-2.0 * phi), normalized(u.space(), &CState::new(coeffs))?));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (eigenphases, eigenvectors) = pairs.into_iter().unzip();
    Ok(GeometricEigens {
        spectral: SpectralData { eigenphases, eigenvectors, weights: weights.to_vec() },
        roots,
        perturbed,
    })
}

/// Root of a function decreasing from +∞ to −∞ on the open interval (lo, hi).
fn bisect_decreasing(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a < 1e-13 {
            break;
        }
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mid = 0.5 * (a + b);
    if !mid.is_finite() || mid <= lo || mid >= hi {
        return Err(Error::RootFinder(format!("no bracketed root in ({lo}, {hi})")));
    }
    Ok(mid)
}

/// Samples `(φ, mean height)` on a uniform grid of `[0, π)`.
pub fn eigenscan(u: &PhasedGroverUnitary, steps: usize) -> Vec<(f64, f64)> {
    let angles: Vec<f64> = u.rv().values().iter().map(|y| y.atan()).collect();
    (0..steps)
        .map(|i| {
            let phi = PI * i as f64 / steps as f64;
            (phi, mean_height(u.space().weights(), &angles, phi))
        })
        .collect()
}

/// Smallest largest-circular-distance over cyclic alignments of two sorted phase lists.
pub fn phase_set_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len();
    (0..n.max(1))
        .map(|shift| (0..n).map(|i| circular_distance(a[i], b[(i + shift) % n])).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Second singular value of 𝒰 + ROT_y in the orthonormal basis, which is
/// the rank-one matrix `2|𝟏⟩⟨𝟏|·ROT_y`.
pub fn rank_one_residual(u: &PhasedGroverUnitary) -> f64 {
    let mut m = orthonormal_matrix(u);
    for (i, e) in u.phases().iter().enumerate() {
        m[(i, i)] += e;
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.get(1).copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct BhattacharyyaReport {
    pub bc: f64,
    pub overlap: f64,
    pub holds: bool,
}

/// BC(q, r) = Σ √(q_j r_j) over a common eigenbasis versus |⟨s|t⟩|.
pub fn bhattacharyya_bound_check(sd: &SpectralData, s: &CState, t: &CState) -> Result<BhattacharyyaReport> {
    let q = sd.overlaps(s)?;
    let r = sd.overlaps(t)?;
    let bc: f64 = q.iter().zip(&r).map(|(a, b)| (a * b).sqrt()).sum();
    let overlap = inner(&sd.space(), s, t)?.norm();
    Ok(BhattacharyyaReport { bc, overlap, holds: bc >= overlap - 1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{fig_aa, fig_eigs};
    use crate::prob_core::{RandVar, Transform};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;

    fn unitary(rv: &RandVar) -> PhasedGroverUnitary {
        PhasedGroverUnitary::new(rv).unwrap()
    }

    #[test]
    fn wrap_and_haversine() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(haversine(0.0), 0.0);
        assert!((haversine(PI) - 1.0).abs() < 1e-15);
        assert!((haversine(PI / 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_variable_spectrum() {
        let rv = RandVar::new(&[0.1, 0.2, 0.3, 0.4], &[0.0; 4]).unwrap();
        let u = unitary(&rv);
        let sd = eigendecompose(&u).unwrap();
        let zeros = sd.eigenphases().iter().filter(|t| t.abs() < 1e-9).count();
        let pis = sd.eigenphases().iter().filter(|t| (t.abs() - PI).abs() < 1e-9).count();
        assert_eq!((zeros, pis), (1, 3));
        let td = theta_distribution(&sd, &CState::ket_one(4)).unwrap();
        assert!((td.mass(|t| t.abs() < 1e-9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let c = 0.7f64;
        let sd = eigendecompose(&unitary(&RandVar::constant(c).unwrap())).unwrap();
        assert!(circular_distance(sd.eigenphases()[0], -2.0 * c.atan()) < 1e-12);
        let g = geometric_eigens(&unitary(&RandVar::constant(c).unwrap())).unwrap();
        assert!(circular_distance(g.spectral.eigenphases()[0], -2.0 * c.atan()) < 1e-12);
    }

    #[test]
    fn fig_eigs_geometric_matches_dense() {
        let u = unitary(&fig_eigs());
        let dense = eigendecompose(&u).unwrap();
        let geo = geometric_eigens(&u).unwrap();
        assert_eq!(geo.perturbed, 0);
        assert!(phase_set_distance(dense.eigenphases(), geo.spectral.eigenphases()) < 1e-6);
        assert!(geo.spectral.max_residual(&u).unwrap() < 1e-9);
        // The smallest rotation is a slight one: |μ| is small for this instance.
        assert!(geo.roots[0] < 0.1 || geo.roots[geo.roots.len() - 1] > PI - 0.1);
        assert!(rank_one_residual(&u) < 1e-9);
    }

    #[test]
    fn geometric_centered_instance_has_fixed_vector() {
        let rv = fig_aa();
        let centered = rv.transform(Transform::Shift(-rv.mean())).unwrap();
        let u = unitary(&centered);
        let geo = geometric_eigens(&u).unwrap();
        let k = geo.spectral.eigenphases().iter().position(|t| t.abs() < 1e-9).expect("eigenphase 0");
        let v = &geo.spectral.eigenvectors()[k];
        let ratio = v.coeffs()[0] / Complex64::new(1.0, centered.values()[0]);
        for (z, y) in v.coeffs().iter().zip(centered.values()) {
            assert!((z / Complex64::new(1.0, *y) - ratio).norm() < 1e-9);
        }
    }

    #[test]
    fn geometric_handles_duplicates() {
        let rv = RandVar::new(&[0.25; 4], &[0.0; 4]).unwrap();
        let u = unitary(&rv);
        let geo = geometric_eigens(&u).unwrap();
        assert_eq!(geo.perturbed, 3);
        let dense = eigendecompose(&u).unwrap();
        assert!(phase_set_distance(dense.eigenphases(), geo.spectral.eigenphases()) < 1e-6);
    }

    #[test]
    fn fig_aa_moment_identities() {
        let rv = fig_aa();
        let rep = verify_moment_identities(&unitary(&rv)).unwrap();
        let (mu, s2) = (rv.mean(), rv.second_moment());
        assert!((rep.forward - mu * mu / (1.0 + s2)).abs() < 1e-8);
        assert!((rep.inverse.unwrap() - (1.0 + s2) / (mu * mu)).abs() < 1e-8 * (1.0 + s2) / (mu * mu));
        assert!(rep.passes(1e-8));
    }

    #[test]
    fn centered_instance_skips_reciprocal() {
        let values: Vec<f64> = (0..16).map(|i| (i as f64 - 7.5) / 10.0).collect();
        let rv = RandVar::new(&[1.0 / 16.0; 16], &values).unwrap();
        assert!(rv.mean().abs() < 1e-15);
        let rv = rv.transform(Transform::Shift(-rv.mean())).unwrap();
        let rep = verify_moment_identities(&unitary(&rv)).unwrap();
        assert!(rep.forward.abs() < 1e-12);
        assert!(rep.inverse_skipped.is_some());
    }

    #[test]
    fn fig_aa_tail_bound() {
        let rv = fig_aa();
        let scaled = rv.transform(Transform::Scale(1.0 / (16.0 * rv.rms()))).unwrap();
        let rep = tail_bound_check(&unitary(&scaled), 3.0).unwrap();
        assert!(rep.holds());
        assert!(rep.window_mass_outside.unwrap() <= 2.0 / 9.0);
        assert!(tail_bound_check(&unitary(&rv), 8.0).is_err());
        let zero = RandVar::new(&[0.5, 0.5], &[-0.01, 0.01]).unwrap();
        assert!(tail_bound_check(&unitary(&zero), 2.0).unwrap().mu_zero);
    }

    #[test]
    fn bhattacharyya_examples() {
        let rv = fig_aa();
        let u = unitary(&rv);
        let sd = eigendecompose(&u).unwrap();
        let one = CState::ket_one(7);
        let r = bhattacharyya_bound_check(&sd, &one, &one).unwrap();
        assert!((r.bc - 1.0).abs() < 1e-9 && r.holds);
        let (a, b) = (&sd.eigenvectors()[0], &sd.eigenvectors()[1]);
        let r = bhattacharyya_bound_check(&sd, a, b).unwrap();
        assert!(r.bc < 1e-9 && r.overlap < 1e-9);
        let tilde = normalized(u.space(), &CState::one_plus_iy(&rv)).unwrap();
        let r = bhattacharyya_bound_check(&sd, &one, &tilde).unwrap();
        let mu = rv.mean();
        assert!(r.bc >= (1.0 + mu * mu).sqrt() / (1.0 + rv.second_moment()).sqrt() - 1e-9);
        assert!(bhattacharyya_bound_check(&sd, &CState::one_plus_iy(&rv), &one).is_err());
    }

    #[test]
    fn theta_distribution_point_mass_on_eigenvector() {
        let u = unitary(&fig_aa());
        let sd = eigendecompose(&u).unwrap();
        let td = theta_distribution(&sd, &sd.eigenvectors()[3]).unwrap();
        assert!((td.mass(|t| (t - sd.eigenphases()[3]).abs() < 1e-9) - 1.0).abs() < 1e-9);
        let mut buf = Vec::new();
        td.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("theta,q\n"));
    }

    #[test]
    fn qpe_grid_off_lattice() {
        for i in 1..=200 {
            let h = i as f64 * 0.05;
            for k in 0..=400 {
                let l = -10.0 + k as f64 * 0.05;
                let lhs = (1.0 - 1.0 / h).powi(2);
                let rhs = (1.0 - l).powi(2) + (l * h - 1.0 / h).powi(2);
                assert!(lhs <= rhs + 1e-12, "h={h} lambda={l}");
            }
        }
    }

    fn instance(max_d: usize, max_y: f64) -> impl Strategy<Value = RandVar> {
        (1usize..=max_d).prop_flat_map(move |d| {
            (prop::collection::vec(0.05f64..1.0, d), prop::collection::vec(-max_y..max_y, d)).prop_map(|(w, y)| {
                let t: f64 = w.iter().sum();
                let w: Vec<f64> = w.iter().map(|x| x / t).collect();
                RandVar::new(&w, &y).unwrap()
            })
        })
    }

    /// ‖((Id−𝒰)/2)^{±1} s‖² in the orthonormal basis, via a dense solve for −1.
    fn resolvent_norms(u: &PhasedGroverUnitary, s: &CState) -> (f64, Option<f64>) {
        let d = u.dim();
        let m = orthonormal_matrix(u);
        let a = (DMatrix::<Complex64>::identity(d, d) - m) * Complex64::new(0.5, 0.0);
        let sp: Vec<f64> = u.space().weights().iter().map(|p| p.sqrt()).collect();
        let v = DVector::from_iterator(d, s.coeffs().iter().zip(&sp).map(|(z, q)| z * q));
        let fwd = (&a * &v).norm_squared();
        let inv = a.lu().solve(&v).map(|x| x.norm_squared());
        (fwd, inv)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dense_eigensolver_invariants(rv in instance(64, 2.0)) {
            let u = unitary(&rv);
            let sd = eigendecompose(&u).unwrap();
            prop_assert!(sd.max_residual(&u).unwrap() <= 1e-9);
            prop_assert!(sd.orthonormality_error().unwrap() <= 1e-9);
            prop_assert!(sd.eigenphases().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(sd.eigenphases().iter().all(|t| *t > -PI && *t <= PI));
            let td = theta_distribution(&sd, &CState::ket_one(rv.dim())).unwrap();
            prop_assert!((td.pairs().iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(rank_one_residual(&u) <= 1e-9);
        }

        #[test]
        fn haversine_moments_match_resolvent_norms(rv in instance(24, 1.0), seed in 0u64..1000) {
            let u = unitary(&rv);
            let sd = eigendecompose(&u).unwrap();
            let mut rng = crate::rng::trial_rng(seed, 0);
            let raw = CState::new((0..rv.dim()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
            let s = normalized(u.space(), &raw).unwrap();
            let td = theta_distribution(&sd, &s).unwrap();
            let (fwd, inv) = resolvent_norms(&u, &s);
            prop_assert!((fwd - td.expect(haversine)).abs() < 1e-8);
            let min_hav = td.pairs().iter().map(|p| haversine(p.0)).fold(f64::INFINITY, f64::min);
            if min_hav > 1e-3 {
                let e_inv = td.expect(|t| 1.0 / haversine(t));
                prop_assert!((inv.unwrap() - e_inv).abs() < 1e-8 * e_inv);
            }
        }

        #[test]
        fn geometric_matches_dense(rv in instance(32, 3.0)) {
            let u = unitary(&rv);
            let dense = eigendecompose(&u).unwrap();
            let geo = geometric_eigens(&u).unwrap();
            prop_assert!(phase_set_distance(dense.eigenphases(), geo.spectral.eigenphases()) < 1e-6);
        }

        #[test]
        fn bhattacharyya_dominates_overlap(rv in instance(16, 1.0), seed in 0u64..1000) {
            let u = unitary(&rv);
            let sd = eigendecompose(&u).unwrap();
            let mut rng = crate::rng::trial_rng(seed, 1);
            let mut rand_state = || {
                let raw = CState::new((0..rv.dim()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
                normalized(u.space(), &raw).unwrap()
            };
            let (s, t) = (rand_state(), rand_state());
            prop_assert!(bhattacharyya_bound_check(&sd, &s, &t).unwrap().holds);
        }
    }
}
