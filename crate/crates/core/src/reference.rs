//! Independent time-stepping reference for the driven single register.
//!
//! The exponential midpoint rule `U <- exp(-i H(t + h/2) h) U` is applied
//! with a fixed small step across one carrier period `tau = 2 pi / omega`.
//! Because `H(t + tau) = H(t)` exactly, the propagator at any time
//! `t = n tau + s` is `U(s) U(tau)^n`, with the period power taken by binary
//! exponentiation. Nothing here shares code with the harmonic truncation.

use nalgebra::DVector;

use crate::control::ControlInstance;
use crate::error::{Error, Result};
use crate::floquet::DriveParams;
use crate::linalg::{evolve_from_eigen, hermitian_eigh, CMatrix};
use crate::scalar::{cplx, Real};

#[derive(Debug, Clone)]
pub struct ReferencePropagator<T: Real> {
    drive: DriveParams<T>,
    g: CMatrix<T>,
    z: CMatrix<T>,
    g_eigvals: DVector<T>,
    g_eigvecs: CMatrix<T>,
    period: T,
    step: T,
    /// `U(k h)` for `k = 0..=steps`.
    within_period: Vec<CMatrix<T>>,
}

impl<T: Real> ReferencePropagator<T> {
    pub fn new(instance: &ControlInstance<T>, drive: &DriveParams<T>, steps_per_period: usize) -> Result<Self> {
        drive.validate()?;
        if steps_per_period < 16 {
            return Err(Error::param("steps_per_period", "need at least 16 steps per period"));
        }
        let period = T::two_pi() / drive.omega;
        let step = period / T::from_usize_exact(steps_per_period);
        let mut this = ReferencePropagator {
            drive: *drive,
            g: instance.g_single.clone(),
            z: instance.z_single.clone(),
            g_eigvals: instance.eigvals.clone(),
            g_eigvecs: instance.eigvecs.clone(),
            period,
            step,
            within_period: Vec::with_capacity(steps_per_period + 1),
        };
        let d = instance.d;
        let mut u = CMatrix::<T>::identity(d, d);
        this.within_period.push(u.clone());
        for k in 0..steps_per_period {
            u = this.midpoint_step(step * T::from_usize_exact(k), step)? * u;
            this.within_period.push(u.clone());
        }
        Ok(this)
    }

    fn hamiltonian(&self, t: T) -> CMatrix<T> {
        let amp = self.drive.b_eff * (self.drive.omega * t).cos();
        &self.g + &self.z * cplx(amp)
    }

    fn midpoint_step(&self, t0: T, h: T) -> Result<CMatrix<T>> {
        let (vals, vecs) = hermitian_eigh(&self.hamiltonian(t0 + T::lit(0.5) * h))?;
        Ok(evolve_from_eigen(&vals, &vecs, h))
    }

    pub fn period(&self) -> T {
        self.period
    }

    /// Lab-frame propagator `U(t)`.
    pub fn propagate(&self, t: T) -> Result<CMatrix<T>> {
        if t < T::zero() {
            return Err(Error::param("t", "must be non-negative"));
        }
        let cycles = (t / self.period).floor();
        let s = t - cycles * self.period;
        let n = cycles.as_f64() as u64;
        let steps = self.within_period.len() - 1;
        let k = ((s / self.step).floor().as_f64() as usize).min(steps);
        let s_k = self.step * T::from_usize_exact(k);
        let mut within = self.within_period[k].clone();
        let rest = s - s_k;
        if rest > T::zero() {
            within = self.midpoint_step(s_k, rest)? * within;
        }
        let full = &self.within_period[steps];
        Ok(within * matrix_power(full, n))
    }

    /// `e^{+iGt} U(t)`.
    pub fn interaction(&self, t: T) -> Result<CMatrix<T>> {
        let u = self.propagate(t)?;
        Ok(evolve_from_eigen(&self.g_eigvals, &self.g_eigvecs, -t) * u)
    }
}

fn matrix_power<T: Real>(m: &CMatrix<T>, mut n: u64) -> CMatrix<T> {
    let d = m.nrows();
    let mut result = CMatrix::<T>::identity(d, d);
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::diag_complex;
    use crate::linalg::unitarity_defect;
    use crate::scalar::cis;

    #[test]
    fn power_by_squaring() {
        let mut m = diag_complex(&[0.0, 0.0]);
        m[(0, 0)] = cis(0.3);
        m[(1, 1)] = cis(-0.7);
        let p = matrix_power(&m, 13);
        assert!((p[(0, 0)] - cis(3.9)).norm() < 1e-14);
        assert!((p[(1, 1)] - cis(-9.1)).norm() < 1e-14);
    }

    #[test]
    fn commuting_drive_matches_closed_form() {
        let inst = ControlInstance::custom(diag_complex(&[-1.0, 1.0]), diag_complex(&[1.0, -1.0])).unwrap();
        let drive = DriveParams::new(0.4, 3.0).unwrap();
        let r = ReferencePropagator::new(&inst, &drive, 400).unwrap();
        let t = 17.3;
        let area = 0.4 * (3.0f64 * t).sin() / 3.0;
        let u = r.propagate(t).unwrap();
        // midpoint quadrature of the drive area is second order
        assert!((u[(0, 0)] - cis(t - area)).norm() < 1e-4);
        assert!((u[(1, 1)] - cis(-t + area)).norm() < 1e-4);
        assert!(unitarity_defect(&u) < 1e-12);
    }
}
