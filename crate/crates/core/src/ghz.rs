//! `m`-register GHZ readout.
//!
//! The probe `|psi_0> = d^{-1/2} sum_i |i>^{(x)m}` evolves under `U^{(x)m}`
//! for noninteracting registers. Its overlap with the unperturbed probe and
//! its populations on the diagonal strings `|i>^{(x)m}` reduce to element
//! powers of the single-register propagator:
//!
//! ```text
//! <psi_0| U^{(x)m} |psi_0> = (1/d) sum_{i,j} U_ij^m
//! p_i                      = (1/d) |sum_j U_ij^m|^2
//! ```
//!
//! which costs `O(d^2)` regardless of `m`. A brute-force tensor-state path is
//! kept for cross-validation at small `d^m`.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{check_ascending, FloquetSolution};
use crate::linalg::CMatrix;
use crate::scalar::Real;

/// Largest `d^m` the brute-force path will build.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 16;

/// Default stopping threshold on the L1 statistic.
pub const DEFAULT_L1_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GhzReadout<T: Real> {
    pub amplitude: Complex<T>,
    /// `1 - |amplitude|^2`, clamped to `[0, 1]`.
    pub p_det: T,
    pub diag_populations: Vec<T>,
    /// `sum_i |p_i - 1/d|`.
    pub l1_statistic: T,
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::param("m", "register count must be at least 1"));
    }
    Ok(())
}

fn powu<T: Real>(z: Complex<T>, m: usize) -> Complex<T> {
    z.powu(m as u32)
}

pub fn ghz_amplitude_fast<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<Complex<T>> {
    check_m(m)?;
    let d = T::from_usize_exact(u_int.nrows());
    let sum = u_int
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, &z| acc + powu(z, m));
    Ok(sum / Complex::new(d, T::zero()))
}

pub fn ghz_diag_populations<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<Vec<T>> {
    check_m(m)?;
    let d = T::from_usize_exact(u_int.nrows());
    Ok(u_int
        .row_iter()
        .map(|row| {
            let s = row
                .iter()
                .fold(Complex::new(T::zero(), T::zero()), |acc, &z| acc + powu(z, m));
            s.norm_sqr() / d
        })
        .collect())
}

/// Evolved GHZ state in the full `d^m` space, built by applying `U` to each
/// tensor factor of a general state vector in turn.
pub fn ghz_state_bruteforce<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<Vec<Complex<T>>> {
    check_m(m)?;
    let d = u_int.nrows();
    let dim = (d as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if dim > BRUTE_FORCE_LIMIT {
        return Err(Error::DimensionGuard {
            dim,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let dim = dim as usize;
    let zero = Complex::new(T::zero(), T::zero());
    let norm = Complex::new(T::one() / T::from_usize_exact(d).sqrt(), T::zero());
    let mut state = vec![zero; dim];
    let stride_all: usize = (0..m).map(|l| d.pow(l as u32)).sum();
    for i in 0..d {
        state[i * stride_all] = norm;
    }
    // apply U on register l: index = hi * (d * s) + a * s + lo with s = d^l
    for l in 0..m {
        let s = d.pow(l as u32);
        let mut next = vec![zero; dim];
        for hi in 0..dim / (d * s) {
            for lo in 0..s {
                let base = hi * d * s + lo;
                for a in 0..d {
                    let mut acc = zero;
                    for b in 0..d {
                        acc += u_int[(a, b)] * state[base + b * s];
                    }
                    next[base + a * s] = acc;
                }
            }
        }
        state = next;
    }
    Ok(state)
}

pub fn ghz_amplitude_bruteforce<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<Complex<T>> {
    let state = ghz_state_bruteforce(u_int, m)?;
    let d = u_int.nrows();
    let stride_all: usize = (0..m).map(|l| d.pow(l as u32)).sum();
    let norm = Complex::new(T::one() / T::from_usize_exact(d).sqrt(), T::zero());
    Ok((0..d).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
        acc + norm * state[i * stride_all]
    }))
}

/// Diagonal-string populations read off the brute-force state.
pub fn ghz_diag_populations_bruteforce<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<Vec<T>> {
    let state = ghz_state_bruteforce(u_int, m)?;
    let d = u_int.nrows();
    let stride_all: usize = (0..m).map(|l| d.pow(l as u32)).sum();
    Ok((0..d).map(|i| state[i * stride_all].norm_sqr()).collect())
}

/// `sum_i |p_i - 1/d|`.
pub fn l1_from_uniform<T: Real>(populations: &[T]) -> T {
    let uniform = T::one() / T::from_usize_exact(populations.len());
    populations.iter().fold(T::zero(), |acc, &p| acc + (p - uniform).abs())
}

/// Full readout through the fast element-power identities.
pub fn readout<T: Real>(u_int: &CMatrix<T>, m: usize) -> Result<GhzReadout<T>> {
    let amplitude = ghz_amplitude_fast(u_int, m)?;
    let raw = T::one() - amplitude.norm_sqr();
    let p_det = clamp_probability(raw);
    let diag_populations = ghz_diag_populations(u_int, m)?;
    let l1_statistic = l1_from_uniform(&diag_populations);
    Ok(GhzReadout {
        amplitude,
        p_det,
        diag_populations,
        l1_statistic,
    })
}

fn clamp_probability<T: Real>(p: T) -> T {
    let clamped = p.max(T::zero()).min(T::one());
    if (clamped - p).abs().as_f64() > 1e-9 {
        log::warn!(
            "detection probability {:.3e} outside [0, 1]; truncation error suspected",
            p.as_f64()
        );
    }
    clamped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrace<T> {
    pub t_grid: Vec<T>,
    pub p_det_series: Vec<T>,
    pub l1_series: Vec<T>,
    /// First grid time with `l1 >= threshold`.
    pub stop_time: Option<T>,
    pub threshold: T,
}

impl<T: Real> DetectionTrace<T> {
    /// No crossing on the grid; the caller should extend it.
    pub fn grid_exhausted(&self) -> bool {
        self.stop_time.is_none()
    }
}

fn check_threshold<T: Real>(threshold: T) -> Result<()> {
    if !(threshold >= T::zero()) {
        return Err(Error::param("threshold", "must be non-negative"));
    }
    Ok(())
}

/// Readout at every grid time.
pub fn detection_trace<T: Real>(
    sol: &FloquetSolution<T>,
    m: usize,
    t_grid: &[T],
    threshold: T,
) -> Result<DetectionTrace<T>> {
    check_m(m)?;
    check_threshold(threshold)?;
    let props = sol.interaction_grid(t_grid)?;
    let mut p_det_series = Vec::with_capacity(t_grid.len());
    let mut l1_series = Vec::with_capacity(t_grid.len());
    for u in &props {
        let r = readout(u, m)?;
        p_det_series.push(r.p_det);
        l1_series.push(r.l1_statistic);
    }
    let stop_time = t_grid
        .iter()
        .zip(&l1_series)
        .find(|(_, &l1)| l1 >= threshold)
        .map(|(&t, _)| t);
    Ok(DetectionTrace {
        t_grid: t_grid.to_vec(),
        p_det_series,
        l1_series,
        stop_time,
        threshold,
    })
}

/// First crossing of the L1 threshold, walking the grid in order and stopping
/// at the crossing. Returns `(grid index, time, l1)` or the last `l1` seen.
pub fn first_crossing<T: Real>(
    sol: &FloquetSolution<T>,
    m: usize,
    t_grid: &[T],
    threshold: T,
) -> Result<std::result::Result<(usize, T, T), T>> {
    check_m(m)?;
    check_threshold(threshold)?;
    check_ascending(t_grid)?;
    let mut last = T::zero();
    for (i, &t) in t_grid.iter().enumerate() {
        let pops = ghz_diag_populations(&sol.interaction_propagator(t), m)?;
        last = l1_from_uniform(&pops);
        if last >= threshold {
            return Ok(Ok((i, t, last)));
        }
    }
    Ok(Err(last))
}

/// `(mB)^2 / ((mB)^2 + delta^2)`.
pub fn lorentzian_envelope<T: Real>(detuning: T, m_b: T) -> Result<T> {
    if !(m_b > T::zero()) {
        return Err(Error::param("mB", "must be positive"));
    }
    let w2 = m_b * m_b;
    Ok(w2 / (w2 + detuning * detuning))
}

/// `sum_{n=1}^{n_terms} eta(n mB) / eta(0) = sum 1 / (1 + n^2)`, summed from
/// the smallest terms first.
pub fn crowding_sum(n_terms: usize) -> f64 {
    (1..=n_terms)
        .rev()
        .map(|n| {
            let n = n as f64;
            1.0 / (1.0 + n * n)
        })
        .sum()
}

/// Geometric grid `t_min * growth^k` up to and including the first point at
/// or beyond `t_max`.
pub fn geometric_grid(t_min: f64, t_max: f64, growth: f64) -> Result<Vec<f64>> {
    if !(t_min > 0.0) || !(t_max >= t_min) || !(growth > 1.0) {
        return Err(Error::param(
            "t_grid",
            format!("need 0 < t_min <= t_max and growth > 1, got ({t_min}, {t_max}, {growth})"),
        ));
    }
    let mut grid = vec![t_min];
    let mut k = 1i32;
    while *grid.last().unwrap() < t_max {
        grid.push(t_min * growth.powi(k));
        k += 1;
    }
    Ok(grid)
}
