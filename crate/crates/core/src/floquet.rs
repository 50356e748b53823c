//! Single-register propagation under `G + b cos(omega t) Z`.
//!
//! The drive is handled with a three-harmonic Floquet ladder (Fourier sectors
//! `k = +1, 0, -1`): the `(3d) x (3d)` matrix
//!
//! ```text
//! F = [ G + omega    b/2 Z       0        ]
//!     [ b/2 Z        G           b/2 Z    ]
//!     [ 0            b/2 Z       G - omega ]
//! ```
//!
//! is diagonalized once, the block right-hand side `[0; I; 0]` is evolved with
//! `exp(-i F t)`, and the physical propagator is reassembled as
//! `U(t) = e^{+i omega t} Y_{+1} + Y_0 + e^{-i omega t} Y_{-1}`.
//!
//! A first-order product formula is provided for Trotter-error studies.

use nalgebra::{Complex, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlInstance;
use crate::error::{Error, Result};
use crate::linalg::{evolve_from_eigen, hermitian_eigh, is_diagonal, operator_norm, CMatrix};
use crate::scalar::{cis, cplx, Real};

/// Default ceiling on `b_eff / omega` for the three-harmonic truncation.
pub const DEFAULT_MAX_DRIVE_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams<T> {
    /// Amplitude seen by one register, rad/s.
    pub b_eff: T,
    /// Carrier, rad/s.
    pub omega: T,
    /// Always zero; a phase is a shift of the time origin for static `G`.
    pub phase: T,
}

impl<T: Real> DriveParams<T> {
    pub fn new(b_eff: T, omega: T) -> Result<Self> {
        let d = DriveParams {
            b_eff,
            omega,
            phase: T::zero(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_eff >= T::zero()) {
            return Err(Error::param("b_eff", "must be non-negative"));
        }
        if !(self.omega > T::zero()) {
            return Err(Error::param("omega", "must be positive"));
        }
        Ok(())
    }
}

/// Diagonalized three-harmonic Floquet matrix of one `(instance, drive)` pair.
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct FloquetSolution<T: Real> {
    pub f_matrix: CMatrix<T>,
    pub eigvals: DVector<T>,
    pub eigvecs: CMatrix<T>,
    pub d: usize,
    pub drive: DriveParams<T>,
    /// Seed of the control instance this solution was built from.
    pub instance_seed: u64,
    g_eigvecs: CMatrix<T>,
    /// `E_a + s_k omega` per sector.
    shifted: [Vec<T>; 3],
    /// Row blocks `W_k` of the eigenvectors of `F` in the eigenbasis of `G`.
    w_rows: [CMatrix<T>; 3],
    /// `W_0^dagger`, the projection of `[0; I; 0]`.
    w_rhs: CMatrix<T>,
}

/// Propagator at one time.
#[derive(Debug, Clone)]
pub struct PropagatorSample<T: Real> {
    pub t: T,
    pub y_plus: CMatrix<T>,
    pub y_zero: CMatrix<T>,
    pub y_minus: CMatrix<T>,
    pub u_phys: CMatrix<T>,
    pub u_int: CMatrix<T>,
}

/// `F(omega, b_eff)` with the block layout above.
pub fn floquet_matrix<T: Real>(instance: &ControlInstance<T>, drive: &DriveParams<T>) -> CMatrix<T> {
    let d = instance.d;
    let mut f = CMatrix::<T>::zeros(3 * d, 3 * d);
    let shift = [drive.omega, T::zero(), -drive.omega];
    let coupling = instance.z_single.map(|z| z * cplx(T::lit(0.5) * drive.b_eff));
    for (k, s) in shift.iter().enumerate() {
        let mut block = f.view_mut((k * d, k * d), (d, d));
        block.copy_from(&instance.g_single);
        for i in 0..d {
            block[(i, i)] += cplx(*s);
        }
    }
    for k in 0..2 {
        f.view_mut((k * d, (k + 1) * d), (d, d)).copy_from(&coupling);
        f.view_mut(((k + 1) * d, k * d), (d, d)).copy_from(&coupling);
    }
    f
}

/// Assembles and diagonalizes `F`, rejecting drives with
/// `b_eff / omega > DEFAULT_MAX_DRIVE_RATIO`.
pub fn assemble_floquet<T: Real>(instance: &ControlInstance<T>, drive: &DriveParams<T>) -> Result<FloquetSolution<T>> {
    assemble_floquet_with(instance, drive, DEFAULT_MAX_DRIVE_RATIO)
}

/// `F` written in the eigenbasis of `G`: diagonal entries `E_a + s_k omega`
/// and couplings `(b/2) Q^dagger Z Q`. Same spectrum as [`floquet_matrix`].
fn eigenbasis_floquet_matrix<T: Real>(
    instance: &ControlInstance<T>,
    drive: &DriveParams<T>,
    shifted: &[Vec<T>; 3],
) -> CMatrix<T> {
    let d = instance.d;
    let mut f = CMatrix::<T>::zeros(3 * d, 3 * d);
    for (k, diag) in shifted.iter().enumerate() {
        for (a, &e) in diag.iter().enumerate() {
            f[(k * d + a, k * d + a)] = cplx(e);
        }
    }
    if drive.b_eff > T::zero() {
        let coupling = instance.z_in_eigenbasis().map(|z| z * cplx(T::lit(0.5) * drive.b_eff));
        for k in 0..2 {
            f.view_mut((k * d, (k + 1) * d), (d, d)).copy_from(&coupling);
            f.view_mut(((k + 1) * d, k * d), (d, d)).copy_from(&coupling);
        }
    }
    f
}

pub fn assemble_floquet_with<T: Real>(
    instance: &ControlInstance<T>,
    drive: &DriveParams<T>,
    max_drive_ratio: f64,
) -> Result<FloquetSolution<T>> {
    drive.validate()?;
    let ratio = (drive.b_eff / drive.omega).as_f64();
    if ratio > max_drive_ratio {
        return Err(Error::DriveOutsideValidity {
            ratio,
            limit: max_drive_ratio,
        });
    }
    let d = instance.d;
    let shifted = SECTOR_SIGNS.map(|s| {
        instance
            .eigvals
            .iter()
            .map(|&e| e + drive.omega * T::lit(s))
            .collect::<Vec<T>>()
    });
    let (eigvals, w) = hermitian_eigh(&eigenbasis_floquet_matrix(instance, drive, &shifted))?;
    let q = &instance.eigvecs;
    let mut eigvecs = CMatrix::<T>::zeros(3 * d, 3 * d);
    for k in 0..3 {
        eigvecs.rows_mut(k * d, d).copy_from(&(q * w.rows(k * d, d)));
    }
    Ok(FloquetSolution {
        f_matrix: floquet_matrix(instance, drive),
        eigvals,
        eigvecs,
        d,
        drive: *drive,
        instance_seed: instance.seed,
        g_eigvecs: q.clone(),
        shifted,
        w_rows: [0, 1, 2].map(|k| w.rows(k * d, d).into_owned()),
        w_rhs: w.rows(d, d).adjoint(),
    })
}

/// Sector `k` carries the phase `e^{i s_k omega t}`.
const SECTOR_SIGNS: [f64; 3] = [1.0, 0.0, -1.0];

impl<T: Real> FloquetSolution<T> {
    /// `M(t)` with `U_int = Q M Q^dagger`:
    /// `M_ab = sum_{k,j} W_k[a,j] conj(W_0[b,j]) e^{i (E_a + s_k omega - lambda_j) t}`.
    /// Each phase is taken from a single combined exponent so the undriven
    /// case cancels exactly.
    fn interaction_inner(&self, t: T) -> CMatrix<T> {
        let d = self.d;
        let mut c = CMatrix::<T>::zeros(d, 3 * d);
        for (k, w) in self.w_rows.iter().enumerate() {
            for j in 0..3 * d {
                let lam = self.eigvals[j];
                for a in 0..d {
                    let x = w[(a, j)];
                    if x != Complex::new(T::zero(), T::zero()) {
                        c[(a, j)] += x * cis((self.shifted[k][a] - lam) * t);
                    }
                }
            }
        }
        c * &self.w_rhs
    }

    /// Floquet blocks in the eigenbasis of `G`, `W_k e^{-i Lambda t} W_0^dagger`.
    fn eigenbasis_blocks(&self, t: T) -> [CMatrix<T>; 3] {
        let mut right = self.w_rhs.clone();
        for (j, mut row) in right.row_iter_mut().enumerate() {
            row *= cis(-self.eigvals[j] * t);
        }
        [0, 1, 2].map(|k| &self.w_rows[k] * &right)
    }

    fn leave_eigenbasis(&self, m: &CMatrix<T>) -> CMatrix<T> {
        &self.g_eigvecs * m * self.g_eigvecs.adjoint()
    }

    pub fn propagate(&self, t: T) -> PropagatorSample<T> {
        let [yp, y0, ym] = self.eigenbasis_blocks(t).map(|b| self.leave_eigenbasis(&b));
        let u_phys = assemble_physical(&yp, &y0, &ym, self.drive.omega, t);
        let u_int = self.interaction_propagator(t);
        PropagatorSample {
            t,
            y_plus: yp,
            y_zero: y0,
            y_minus: ym,
            u_phys,
            u_int,
        }
    }

    /// Interaction-picture propagator `e^{iGt} U_phys(t)` only.
    pub fn interaction_propagator(&self, t: T) -> CMatrix<T> {
        self.leave_eigenbasis(&self.interaction_inner(t))
    }

    /// One sample per grid time; results are identical to calling
    /// [`propagate`](Self::propagate) per time.
    pub fn propagate_grid(&self, t_grid: &[T]) -> Result<Vec<PropagatorSample<T>>> {
        check_ascending(t_grid)?;
        Ok(t_grid.par_iter().map(|&t| self.propagate(t)).collect())
    }

    pub fn interaction_grid(&self, t_grid: &[T]) -> Result<Vec<CMatrix<T>>> {
        check_ascending(t_grid)?;
        Ok(t_grid.par_iter().map(|&t| self.interaction_propagator(t)).collect())
    }
}

/// `e^{+i omega t} Y_{+1} + Y_0 + e^{-i omega t} Y_{-1}`.
pub fn assemble_physical<T: Real>(
    y_plus: &CMatrix<T>,
    y_zero: &CMatrix<T>,
    y_minus: &CMatrix<T>,
    omega: T,
    t: T,
) -> CMatrix<T> {
    let wt = omega * t;
    y_plus * cis(wt) + y_zero + y_minus * cis(-wt)
}

pub(crate) fn check_ascending<T: Real>(grid: &[T]) -> Result<()> {
    if let Some(t) = grid.first() {
        if *t < T::zero() {
            return Err(Error::param("t_grid", "times must be non-negative"));
        }
    }
    for (i, w) in grid.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::UnsortedGrid { index: i + 1 });
        }
    }
    Ok(())
}

/// First-order product formula
/// `prod_k exp(-i G dt_k) exp(-i a_k Z)`, later steps on the left, where
/// `a_k = b int_{t_k}^{t_k + dt_k} cos(omega s) ds` is the drive area of the
/// step. A final step shorter than `dt` lands exactly on `t_final`.
pub fn trotter_propagator<T: Real>(
    instance: &ControlInstance<T>,
    drive: &DriveParams<T>,
    t_final: T,
    dt: T,
) -> Result<CMatrix<T>> {
    drive.validate()?;
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if t_final < dt {
        return Err(Error::param("t_final", "must be at least one step"));
    }
    let d = instance.d;
    let ratio = (t_final / dt).as_f64();
    let mut full_steps = ratio.floor() as usize;
    let mut remainder = t_final - dt * T::from_usize_exact(full_steps);
    // absorb rounding noise instead of taking a vanishing extra step
    if remainder.as_f64() <= 1e-9 * dt.as_f64() {
        remainder = T::zero();
    } else if (dt - remainder).as_f64() <= 1e-9 * dt.as_f64() {
        full_steps += 1;
        remainder = T::zero();
    }

    let z_eig = if is_diagonal(&instance.z_single) {
        None
    } else {
        Some(hermitian_eigh(&instance.z_single)?)
    };
    let step_g = evolve_from_eigen(&instance.eigvals, &instance.eigvecs, dt);
    let area = |t0: T, h: T| -> T {
        if drive.omega > T::zero() {
            drive.b_eff * ((drive.omega * (t0 + h)).sin() - (drive.omega * t0).sin()) / drive.omega
        } else {
            drive.b_eff * h
        }
    };
    let apply_drive = |u: &mut CMatrix<T>, a: T| match &z_eig {
        None => {
            for (i, mut row) in u.row_iter_mut().enumerate() {
                row *= cis(-a * instance.z_single[(i, i)].re);
            }
        }
        Some((vals, vecs)) => {
            *u = evolve_from_eigen(vals, vecs, a) * &*u;
        }
    };

    let mut u = CMatrix::<T>::identity(d, d);
    for k in 0..full_steps {
        let t0 = dt * T::from_usize_exact(k);
        apply_drive(&mut u, area(t0, dt));
        u = &step_g * u;
    }
    if remainder > T::zero() {
        let t0 = dt * T::from_usize_exact(full_steps);
        apply_drive(&mut u, area(t0, remainder));
        u = evolve_from_eigen(&instance.eigvals, &instance.eigvecs, remainder) * u;
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterScan {
    pub t_final: f64,
    pub b_eff: f64,
    pub reference_dt: f64,
    /// `(dt, ||U(dt) - U_ref||)`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `ln error` against `ln dt`.
    pub slope: Option<f64>,
    /// All errors at the round-off floor (commuting control and signal).
    pub degenerate: bool,
}

/// Errors below this are treated as round-off.
pub const TROTTER_ERROR_FLOOR: f64 = 1e-10;

/// Operator-norm distance of the product formula at each `dt` from the same
/// formula at `min(dt_list) / 32`.
pub fn trotter_error_scan<T: Real>(
    instance: &ControlInstance<T>,
    drive: &DriveParams<T>,
    t_final: T,
    dt_list: &[T],
) -> Result<TrotterScan> {
    if dt_list.len() < 3 {
        return Err(Error::TooFewSamples {
            got: dt_list.len(),
            need: 3,
        });
    }
    check_ascending(dt_list)?;
    let ref_dt = dt_list[0] / T::lit(32.0);
    let reference = trotter_propagator(instance, drive, t_final, ref_dt)?;
    let errors: Vec<T> = dt_list
        .par_iter()
        .map(|&dt| trotter_propagator(instance, drive, t_final, dt).map(|u| operator_norm(&(u - &reference))))
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = dt_list
        .iter()
        .zip(&errors)
        .map(|(dt, e)| (dt.as_f64(), e.as_f64()))
        .collect();
    let degenerate = points.iter().all(|(_, e)| *e <= TROTTER_ERROR_FLOOR);
    let slope = if degenerate {
        None
    } else {
        let logs: Vec<(f64, f64)> = points
            .iter()
            .filter(|(_, e)| *e > TROTTER_ERROR_FLOOR)
            .map(|(dt, e)| (dt.ln(), e.ln()))
            .collect();
        crate::witness::least_squares(&logs).map(|fit| fit.slope)
    };
    Ok(TrotterScan {
        t_final: t_final.as_f64(),
        b_eff: drive.b_eff.as_f64(),
        reference_dt: ref_dt.as_f64(),
        points,
        slope,
        degenerate,
    })
}

/// Real diagonal matrix as a complex one.
pub fn diag_complex<T: Real>(v: &[T]) -> CMatrix<T> {
    CMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|&x| cplx(x))))
}
