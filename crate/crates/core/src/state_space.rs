//! The p-weighted coefficient space and the unitary 𝒰 = REFL_p · ROT_y.
//!
//! A state is stored as coefficients `z_ℓ`, standing for
//! `Σ z_ℓ √p(ℓ) |ℓ⟩|garbage_ℓ⟩`. Garbage registers are never materialized
//! because both factors of 𝒰 act inside that span.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::prob_core::{FiniteProbSpace, QueryLedger, RandVar};

/// Queries charged per application of 𝒰 or controlled-𝒰.
pub const QUERIES_PER_U: u64 = 4;

/// Coefficient vector of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct CState {
    coeffs: Vec<Complex64>,
}

impl CState {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        CState { coeffs }
    }

    /// |𝟏⟩, the synthesizer's output state.
    pub fn ket_one(dim: usize) -> Self {
        CState { coeffs: vec![Complex64::new(1.0, 0.0); dim] }
    }

    /// |𝟏 + iy⟩ for the variable's values.
    pub fn one_plus_iy(rv: &RandVar) -> Self {
        CState { coeffs: rv.values().iter().map(|&y| Complex64::new(1.0, y)).collect() }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn scale(&self, c: Complex64) -> CState {
        CState { coeffs: self.coeffs.iter().map(|z| z * c).collect() }
    }

    /// Barycenter `E_p[z]`.
    pub fn barycenter(&self, space: &FiniteProbSpace) -> Complex64 {
        space.weights().iter().zip(&self.coeffs).map(|(p, z)| z * p).sum()
    }
}

/// ⟨w|z⟩ = Σ p(ℓ) conj(w_ℓ) z_ℓ.
pub fn inner(space: &FiniteProbSpace, w: &CState, z: &CState) -> Result<Complex64> {
    check_dim(space.dim(), w.dim())?;
    check_dim(space.dim(), z.dim())?;
    Ok(space.weights().iter().zip(w.coeffs.iter().zip(&z.coeffs)).map(|(p, (a, b))| a.conj() * b * p).sum())
}

pub fn norm_sq(space: &FiniteProbSpace, z: &CState) -> Result<f64> {
    Ok(inner(space, z, z)?.re)
}

/// Returns `z/‖z‖`.
pub fn normalized(space: &FiniteProbSpace, z: &CState) -> Result<CState> {
    let n = norm_sq(space, z)?.sqrt();
    if n == 0.0 {
        return Err(Error::InvalidParameter("cannot normalize the zero state".into()));
    }
    Ok(z.scale(Complex64::new(1.0 / n, 0.0)))
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// 𝒰 = REFL_p · ROT_y for a fixed random variable.
#[derive(Debug, Clone)]
pub struct PhasedGroverUnitary {
    rv: RandVar,
    alphas: Vec<f64>,
    phases: Vec<Complex64>,
}

impl PhasedGroverUnitary {
    /// Builds 𝒰 with `α_ℓ = −2 arctan y_ℓ`, checking `e^{iα}(1+iy) = 1−iy`.
    pub fn new(rv: &RandVar) -> Result<Self> {
        let alphas: Vec<f64> = rv.values().iter().map(|&y| -2.0 * y.atan()).collect();
        let phases: Vec<Complex64> = alphas.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        for (&y, e) in rv.values().iter().zip(&phases) {
            let lhs = e * Complex64::new(1.0, y);
            let err = (lhs - Complex64::new(1.0, -y)).norm();
            if err > 1e-12 * (1.0 + y.abs()) {
                return Err(Error::Precondition(format!("rotation identity fails for y = {y} (error {err:e})")));
            }
        }
        Ok(PhasedGroverUnitary { rv: rv.clone(), alphas, phases })
    }

    pub fn rv(&self) -> &RandVar {
        &self.rv
    }

    pub fn space(&self) -> &FiniteProbSpace {
        self.rv.space()
    }

    pub fn dim(&self) -> usize {
        self.rv.dim()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `e^{iα_ℓ}` per outcome.
    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }

    /// REFL_p: z ↦ 2E_p[z] − z.
    pub fn reflect(&self, s: &CState) -> Result<CState> {
        check_dim(self.dim(), s.dim())?;
        let bary = s.barycenter(self.space()) * 2.0;
        Ok(CState { coeffs: s.coeffs.iter().map(|z| bary - z).collect() })
    }

    /// ROT_y: multiplies coefficient ℓ by e^{iα_ℓ}.
    pub fn rotate(&self, s: &CState) -> Result<CState> {
        check_dim(self.dim(), s.dim())?;
        Ok(CState { coeffs: s.coeffs.iter().zip(&self.phases).map(|(z, e)| z * e).collect() })
    }

    pub fn rotate_inverse(&self, s: &CState) -> Result<CState> {
        check_dim(self.dim(), s.dim())?;
        Ok(CState { coeffs: s.coeffs.iter().zip(&self.phases).map(|(z, e)| z * e.conj()).collect() })
    }

    /// 𝒰 without query accounting, for analysis code that is not part of
    /// an algorithm run.
    pub fn apply_unmetered(&self, s: &CState) -> Result<CState> {
        self.reflect(&self.rotate(s)?)
    }

    /// 𝒰† = ROT_y† · REFL_p.
    pub fn apply_adjoint_unmetered(&self, s: &CState) -> Result<CState> {
        self.rotate_inverse(&self.reflect(s)?)
    }

    /// One application of 𝒰, charged at four uses of the code.
    pub fn apply_u(&self, s: &CState, ledger: &mut QueryLedger) -> Result<CState> {
        check_dim(self.dim(), s.dim())?;
        ledger.charge(QUERIES_PER_U)?;
        self.apply_unmetered(s)
    }

    /// `𝒰^t s` for `t = 0..=steps`.
    pub fn trajectory(&self, s: &CState, steps: usize, ledger: &mut QueryLedger) -> Result<Vec<CState>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(s.clone());
        for _ in 0..steps {
            let next = self.apply_u(out.last().unwrap(), ledger)?;
            out.push(next);
        }
        Ok(out)
    }

    /// CSV rows `(t, l, re, im, bary_re, bary_im)` for a trajectory.
    pub fn write_trajectory_csv<W: Write>(&self, states: &[CState], mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,l,re,im,bary_re,bary_im")?;
        for (t, s) in states.iter().enumerate() {
            let b = s.barycenter(self.space());
            for (l, z) in s.coeffs.iter().enumerate() {
                writeln!(out, "{t},{l},{},{},{},{}", z.re, z.im, b.re, b.im)?;
            }
        }
        Ok(())
    }
}
