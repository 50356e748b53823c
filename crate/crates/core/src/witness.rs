//! Metrological witnesses.
//!
//! Pure-state QFI by finite differences, the Bures angle of a detection
//! probability, integrated-QFI quadrature and its `C B T^2` ceiling, the
//! finite-displacement witness with its flatness certificate, and the
//! two-time log-log slope test that separates linear from quadratic IQFI
//! growth.

use nalgebra::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::BandSpec;
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from_seed};

const PROB_TOL: f64 = 1e-12;

/// `arcsin(sqrt(p_det))`.
pub fn bures_angle<T: Real>(p_det: T) -> Result<T> {
    let p = p_det.as_f64();
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
        return Err(Error::OutOfRange {
            value: p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(p_det.max(T::zero()).min(T::one()).sqrt().asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint<T> {
    pub omega: T,
    pub p_det: T,
    pub theta: T,
    /// `theta^2`.
    pub s_density: T,
}

impl<T: Real> WitnessPoint<T> {
    pub fn new(omega: T, p_det: T) -> Result<Self> {
        let theta = bures_angle(p_det)?;
        Ok(WitnessPoint {
            omega,
            p_det,
            theta,
            s_density: theta * theta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiEstimate<T> {
    /// Central difference at `db`.
    pub j: T,
    /// Central difference at `db / 2`.
    pub j_half_step: T,
    /// `|j - j_half_step| <= 0.01 max(|j|, |j_half_step|)`, or both below 1e-12.
    pub richardson_ok: bool,
}

fn check_normalized<T: Real>(psi: &CVector<T>) -> Result<()> {
    let defect = (psi.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) - T::one())
        .abs()
        .as_f64();
    if defect > 1e-8 {
        return Err(Error::NotNormalized { defect });
    }
    Ok(())
}

fn qfi_central<T: Real, F>(states_at: &F, b: T, db: T) -> Result<T>
where
    F: Fn(T) -> CVector<T>,
{
    let psi = states_at(b);
    let plus = states_at(b + db);
    let minus = states_at(b - db);
    for s in [&psi, &plus, &minus] {
        check_normalized(s)?;
    }
    let two_db = Complex::new(db + db, T::zero());
    let dpsi = (plus - minus).map(|z| z / two_db);
    let dd = dpsi.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
    let overlap = psi.dotc(&dpsi);
    Ok(T::lit(4.0) * (dd - overlap.norm_sqr()))
}

/// `J = 4 (<d psi|d psi> - |<psi|d psi>|^2)` with central differences.
pub fn qfi_pure<T: Real, F>(states_at: F, b: T, db: T) -> Result<QfiEstimate<T>>
where
    F: Fn(T) -> CVector<T>,
{
    if !(db > T::zero()) {
        return Err(Error::param("db", "must be positive"));
    }
    let j = qfi_central(&states_at, b, db)?;
    let j_half_step = qfi_central(&states_at, b, db * T::lit(0.5))?;
    let scale = j.abs().max(j_half_step.abs()).as_f64();
    let gap = (j - j_half_step).abs().as_f64();
    Ok(QfiEstimate {
        j,
        j_half_step,
        richardson_ok: scale < 1e-12 || gap <= 0.01 * scale,
    })
}

/// Trapezoid rule on an ascending grid of `(omega, value)`.
pub fn iqfi_quadrature<T: Real>(points: &[(T, T)]) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            got: points.len(),
            need: 2,
        });
    }
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for (i, w) in points.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(Error::UnsortedGrid { index: i + 1 });
        }
        acc += half * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    Ok(acc)
}

/// Protocol-dependent constants of the discretized IQFI bound. None of them
/// is universal; they are calibration inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingParams<T> {
    pub c1: T,
    pub c2: T,
    pub c_ceiling: T,
}

impl<T: Real> CeilingParams<T> {
    pub fn new(c1: T, c2: T, c_ceiling: T) -> Result<Self> {
        if !(c1 > T::zero() && c2 > T::zero() && c_ceiling > T::zero()) {
            return Err(Error::param("ceiling", "constants must be positive"));
        }
        Ok(CeilingParams { c1, c2, c_ceiling })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeilingEvaluation<T> {
    /// `C1 T^2 / dt + C2 B^2 T^2 dt` at the requested step.
    pub k_bound_at_dt: Option<T>,
    /// `sqrt(C1 / C2) / B`.
    pub dt_star: T,
    /// Bound at `dt_star`, `2 sqrt(C1 C2) B T^2`.
    pub k_bound_at_optimum: T,
    /// `c_ceiling B T^2`.
    pub k_ceiling: T,
}

pub fn discretized_bound<T: Real>(params: &CeilingParams<T>, b: T, t_total: T, dt: T) -> T {
    let t2 = t_total * t_total;
    params.c1 * t2 / dt + params.c2 * b * b * t2 * dt
}

pub fn iqfi_ceiling<T: Real>(
    params: &CeilingParams<T>,
    b: T,
    t_total: T,
    dt: Option<T>,
) -> Result<CeilingEvaluation<T>> {
    if !(b > T::zero() && t_total > T::zero()) {
        return Err(Error::param("b, t_total", "must be positive"));
    }
    if let Some(dt) = dt {
        if !(dt > T::zero()) {
            return Err(Error::param("dt", "must be positive"));
        }
    }
    let dt_star = (params.c1 / params.c2).sqrt() / b;
    Ok(CeilingEvaluation {
        k_bound_at_dt: dt.map(|dt| discretized_bound(params, b, t_total, dt)),
        dt_star,
        k_bound_at_optimum: discretized_bound(params, b, t_total, dt_star),
        k_ceiling: params.c_ceiling * b * t_total * t_total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport<T> {
    /// Trapezoid integral of `s_omega` over the grid.
    pub band_integral_s: T,
    /// `band_integral_s / span`.
    pub mean_s: T,
    /// `max |s_omega / mean_s - 1|`; 1 when degenerate.
    pub epsilon_t: T,
    /// `min s_omega / mean_s`; 0 when degenerate.
    pub min_ratio: T,
    /// `(4 / B^2) band_integral_s`; `None` at `B = 0`.
    pub kfd: Option<T>,
    /// Grid span used as `|delta_omega|`.
    pub span: T,
    /// `epsilon_t < 1`.
    pub certified: bool,
    /// No drive, or `mean_s` at or below [`S_ROUNDOFF`] (no response on the grid).
    pub degenerate: bool,
    /// Pointwise check of `span s/(1+eps) <= S <= span s/(1-eps)`; `None`
    /// unless certified.
    pub transfer_bounds_hold: Option<bool>,
    /// `(4 theta_0^2 / B^2) span` for a supplied floor `p_0`.
    pub kfd_floor: Option<T>,
    pub kfd_floor_ok: Option<bool>,
}

/// Mean Bures density indistinguishable from the round-off of `p_det`.
pub const S_ROUNDOFF: f64 = 1e-14;

/// Flatness certificate over a frequency grid. The grid must hold at least 8
/// ascending points inside the band.
pub fn flatness_report<T: Real>(
    points: &[WitnessPoint<T>],
    band: &BandSpec<T>,
    b: T,
    p_floor: Option<T>,
) -> Result<FlatnessReport<T>> {
    if points.len() < 8 {
        return Err(Error::TooFewSamples {
            got: points.len(),
            need: 8,
        });
    }
    if !(b >= T::zero()) {
        return Err(Error::param("b", "must be non-negative"));
    }
    let slack = band.delta_omega * T::lit(1e-9);
    for p in points {
        if p.omega < band.omega_min - slack || p.omega > band.omega_max() + slack {
            return Err(Error::param("points", "frequency outside the band"));
        }
    }
    let curve: Vec<(T, T)> = points.iter().map(|p| (p.omega, p.s_density)).collect();
    let integral = iqfi_quadrature(&curve)?;
    let span = points[points.len() - 1].omega - points[0].omega;
    let mean_s = integral / span;
    let kfd = (b > T::zero()).then(|| T::lit(4.0) / (b * b) * integral);
    let kfd_floor = match (p_floor, b > T::zero()) {
        (Some(p0), true) => {
            let th = bures_angle(p0)?;
            Some(T::lit(4.0) * th * th / (b * b) * span)
        }
        _ => None,
    };
    let kfd_floor_ok = kfd.zip(kfd_floor).map(|(k, f)| k >= f * (T::one() - T::lit(1e-12)));

    if b == T::zero() || !(mean_s > T::lit(S_ROUNDOFF)) {
        return Ok(FlatnessReport {
            band_integral_s: integral,
            mean_s,
            epsilon_t: T::one(),
            min_ratio: T::zero(),
            kfd,
            span,
            certified: false,
            degenerate: true,
            transfer_bounds_hold: None,
            kfd_floor,
            kfd_floor_ok,
        });
    }
    let ratios: Vec<T> = points.iter().map(|p| p.s_density / mean_s).collect();
    let epsilon_t = ratios.iter().fold(T::zero(), |a, &r| a.max((r - T::one()).abs()));
    let min_ratio = ratios.iter().fold(ratios[0], |a, &r| a.min(r));
    let certified = epsilon_t < T::one();
    let transfer_bounds_hold = certified.then(|| transfer_bounds_hold(points, integral, span, epsilon_t));
    Ok(FlatnessReport {
        band_integral_s: integral,
        mean_s,
        epsilon_t,
        min_ratio,
        kfd,
        span,
        certified,
        degenerate: false,
        transfer_bounds_hold,
        kfd_floor,
        kfd_floor_ok,
    })
}

/// `span s/(1+eps) <= S <= span s/(1-eps)` at every point, with a relative
/// rounding allowance of 1e-12.
pub fn transfer_bounds_hold<T: Real>(points: &[WitnessPoint<T>], integral: T, span: T, epsilon_t: T) -> bool {
    let tol = T::lit(1e-12);
    points.iter().all(|p| {
        let lower = span * p.s_density / (T::one() + epsilon_t);
        let upper = span * p.s_density / (T::one() - epsilon_t);
        lower <= integral * (T::one() + tol) && integral <= upper * (T::one() + tol) + tol * integral.abs()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Linear IQFI growth (perturbative / no signal).
    H0,
    /// Quadratic IQFI growth (signal present).
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeTestResult {
    pub alpha_hat: f64,
    pub decision: Hypothesis,
    pub q: f64,
    pub n_shots: usize,
    /// `2 exp(-C n_shots ln^2 q)`.
    pub error_bound: f64,
}

/// Decision threshold on the estimated slope. Inclusive: `alpha >= 3/2` is H1.
pub const SLOPE_THRESHOLD: f64 = 1.5;

/// `alpha = ln(K(qT) / K(T)) / ln q`, thresholded at 3/2.
pub fn two_time_test(k_hat_t: f64, k_hat_qt: f64, q: f64, n_shots: usize, c_test: f64) -> Result<SlopeTestResult> {
    if !(q > 1.0) {
        return Err(Error::param("q", format!("time ratio must exceed 1, got {q}")));
    }
    if !(k_hat_t > 0.0 && k_hat_qt > 0.0) {
        return Err(Error::param("k_hat", "IQFI estimates must be positive"));
    }
    let alpha_hat = (k_hat_qt / k_hat_t).ln() / q.ln();
    // ln 8 / ln 4 lands one ulp below 1.5; keep the boundary inclusive
    let decision = if alpha_hat >= SLOPE_THRESHOLD - 4.0 * f64::EPSILON {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    };
    let lq = q.ln();
    Ok(SlopeTestResult {
        alpha_hat,
        decision,
        q,
        n_shots,
        error_bound: 2.0 * (-c_test * n_shots as f64 * lq * lq).exp(),
    })
}

/// `ceil(ln(1/delta) / (c ln^2 q))`, at least one shot.
pub fn shot_budget(q: f64, delta_err: f64, c_test: f64) -> Result<usize> {
    if !(q > 1.0) {
        return Err(Error::param("q", "must exceed 1"));
    }
    if !(delta_err > 0.0 && delta_err < 1.0) {
        return Err(Error::param("delta", "must lie in (0, 1)"));
    }
    if !(c_test > 0.0) {
        return Err(Error::param("c_test", "must be positive"));
    }
    let lq = q.ln();
    let raw = (1.0 / delta_err).ln() / (c_test * lq * lq);
    // tolerate rounding just above an integer
    Ok(((raw - 1e-9).ceil() as usize).max(1))
}

/// Bounded multiplicative per-shot noise: each shot returns
/// `K_true (1 + u)` with `u ~ Uniform(-relative_amplitude, relative_amplitude)`.
/// A surrogate for lab estimation of the IQFI, not a physical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoise {
    pub relative_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub truth: Hypothesis,
    pub n_shots: usize,
    pub q: f64,
    pub trials: usize,
    pub errors: usize,
    pub error_rate: f64,
}

/// Empirical error rate of [`two_time_test`] when `K(T) = T` (H0) or
/// `K(T) = T^2` (H1) at base time 1 is estimated from `n_shots` noisy shots
/// at each of the two times.
pub fn slope_test_montecarlo(
    noise: ShotNoise,
    truth: Hypothesis,
    n_shots: usize,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    if trials < 100 {
        return Err(Error::TooFewSamples { got: trials, need: 100 });
    }
    if n_shots == 0 {
        return Err(Error::param("n_shots", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&noise.relative_amplitude) {
        return Err(Error::param("relative_amplitude", "must lie in [0, 1)"));
    }
    if !(q > 1.0) {
        return Err(Error::param("q", "must exceed 1"));
    }
    let power = match truth {
        Hypothesis::H0 => 1,
        Hypothesis::H1 => 2,
    };
    let k_true_t = 1.0f64;
    let k_true_qt = q.powi(power);
    let a = noise.relative_amplitude;
    let errors = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_from_seed(derive_seed(seed, &[n_shots as u64, trial as u64]));
            let mut estimate = |k: f64| {
                let total: f64 = (0..n_shots)
                    .map(|_| {
                        let u = if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
                        k * (1.0 + u)
                    })
                    .sum();
                total / n_shots as f64
            };
            let kt = estimate(k_true_t);
            let kqt = estimate(k_true_qt);
            let res = two_time_test(kt, kqt, q, n_shots, 1.0).expect("positive estimates");
            usize::from(res.decision != truth)
        })
        .sum::<usize>();
    Ok(MonteCarloOutcome {
        truth,
        n_shots,
        q,
        trials,
        errors,
        error_rate: errors as f64 / trials as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    /// Standard error of the slope; `None` with fewer than three points.
    pub slope_std_error: Option<f64>,
    pub n_points: usize,
}

/// Ordinary least squares `y = slope x + intercept`. Needs two distinct `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Some(LinearFit {
        slope,
        intercept,
        residual: (sse / nf).sqrt(),
        slope_std_error: (n > 2).then(|| (sse / (nf - 2.0) / sxx).sqrt()),
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cis;
    use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn bures_angle_values() {
        assert_eq!(bures_angle(0.0).unwrap(), 0.0);
        assert!((bures_angle(1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((bures_angle(0.5).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(bures_angle(1.0 + 1e-13).is_ok());
        assert!(bures_angle(1.1).is_err());
        assert!(bures_angle(-1e-6).is_err());
    }

    #[test]
    fn global_phase_has_no_qfi() {
        let t = 1.3;
        let states = |b: f64| CVector::from_vec(vec![cis(-b * t), Complex::new(0.0, 0.0)]);
        let est = qfi_pure(states, 0.7, 1e-4).unwrap();
        assert!(est.j.abs() < 1e-8);
        assert!(est.richardson_ok);
    }

    #[test]
    fn rotation_qfi_is_four_t_squared() {
        let t = 1.0;
        let states =
            |b: f64| CVector::from_vec(vec![Complex::new((b * t).cos(), 0.0), Complex::new((b * t).sin(), 0.0)]);
        let est = qfi_pure(states, 0.3, 1e-4).unwrap();
        assert!((est.j - 4.0 * t * t).abs() < 1e-6);
        assert!(est.richardson_ok);
        assert!((est.j - est.j_half_step).abs() <= 0.01 * est.j);
    }

    #[test]
    fn qfi_refuses_unnormalized() {
        let states = |b: f64| CVector::from_vec(vec![Complex::new(1.0 + b, 0.0)]);
        assert!(matches!(qfi_pure(states, 0.5, 1e-3), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn trapezoid_cases() {
        let flat: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 0.3, 2.5)).collect();
        assert!((iqfi_quadrature(&flat).unwrap() - 2.5 * 3.0).abs() < 1e-12);
        assert_eq!(iqfi_quadrature(&[(0.0, 1.0), (2.0, 3.0)]).unwrap(), 4.0);
        assert!(matches!(
            iqfi_quadrature(&[(1.0, 1.0), (0.0, 1.0)]),
            Err(Error::UnsortedGrid { .. })
        ));
        assert!(iqfi_quadrature(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn lorentzian_quadrature_matches_arctan() {
        let (w0, gamma, lo, hi) = (5.0, 0.4, 0.0, 10.0);
        let pts: Vec<(f64, f64)> = (0..512)
            .map(|i| {
                let w = lo + (hi - lo) * i as f64 / 511.0;
                (w, gamma * gamma / (gamma * gamma + (w - w0) * (w - w0)))
            })
            .collect();
        let exact = gamma * (((hi - w0) / gamma).atan() - ((lo - w0) / gamma).atan());
        let approx = iqfi_quadrature(&pts).unwrap();
        assert!((approx - exact).abs() / exact < 0.01);
    }

    #[test]
    fn ceiling_examples() {
        let p = CeilingParams::new(1.0, 1.0, 2.0).unwrap();
        let ev = iqfi_ceiling(&p, 1.0, 3.0, None).unwrap();
        assert_eq!(ev.dt_star, 1.0);
        assert_eq!(ev.k_bound_at_optimum, 2.0 * 9.0);
        let p = CeilingParams::new(4.0, 1.0, 1.0).unwrap();
        assert_eq!(iqfi_ceiling(&p, 2.0, 1.0, None).unwrap().dt_star, 1.0);
        assert!(CeilingParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn slope_examples() {
        let r = two_time_test(1.0, 2.0, 2.0, 10, 1.0).unwrap();
        assert!((r.alpha_hat - 1.0).abs() < 1e-15);
        assert_eq!(r.decision, Hypothesis::H0);
        let r = two_time_test(1.0, 4.0, 2.0, 10, 1.0).unwrap();
        assert!((r.alpha_hat - 2.0).abs() < 1e-15);
        assert_eq!(r.decision, Hypothesis::H1);
        let r = two_time_test(1.0, 8.0, 4.0, 10, 1.0).unwrap();
        assert!((r.alpha_hat - 1.5).abs() < 1e-15);
        assert_eq!(r.decision, Hypothesis::H1);
        assert!(two_time_test(1.0, 2.0, 1.0, 10, 1.0).is_err());
        let r = two_time_test(1.0, 2.0, 2.0, 3, 0.5).unwrap();
        let l2 = 2f64.ln();
        assert!((r.error_bound - 2.0 * (-0.5 * 3.0 * l2 * l2).exp()).abs() < 1e-15);
    }

    #[test]
    fn shot_budget_examples() {
        assert_eq!(shot_budget(E, 1.0 / E, 1.0).unwrap(), 1);
        assert_eq!(shot_budget(2.0, 1e-6, 1.0).unwrap(), 29);
        assert_eq!(shot_budget(1e12, 0.5, 1.0).unwrap(), 1);
        assert!(shot_budget(2.0, 1e-6, 2.0).unwrap() <= shot_budget(2.0, 1e-6, 1.0).unwrap());
        assert!(shot_budget(3.0, 1e-6, 1.0).unwrap() <= shot_budget(2.0, 1e-6, 1.0).unwrap());
    }

    #[test]
    fn noiseless_montecarlo_never_errs() {
        let quiet = ShotNoise {
            relative_amplitude: 0.0,
        };
        for truth in [Hypothesis::H0, Hypothesis::H1] {
            let out = slope_test_montecarlo(quiet, truth, 4, 4.0, 200, 1).unwrap();
            assert_eq!(out.errors, 0);
        }
        assert!(slope_test_montecarlo(quiet, Hypothesis::H0, 4, 4.0, 99, 1).is_err());
    }

    #[test]
    fn heavy_noise_error_rate_decays() {
        let noise = ShotNoise {
            relative_amplitude: 0.9,
        };
        let rates: Vec<f64> = [1usize, 4, 16]
            .iter()
            .map(|&n| {
                slope_test_montecarlo(noise, Hypothesis::H0, n, 1.5, 4000, 7)
                    .unwrap()
                    .error_rate
            })
            .collect();
        assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
        let logs: Vec<(f64, f64)> = [1.0, 4.0, 16.0]
            .iter()
            .zip(&rates)
            .filter(|(_, r)| **r > 0.0)
            .map(|(n, r)| (*n, r.ln()))
            .collect();
        assert!(least_squares(&logs).unwrap().slope < 0.0);
    }

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let f = least_squares(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(least_squares(&[(1.0, 1.0), (1.0, 2.0)]).is_none());
    }

    fn band() -> BandSpec<f64> {
        BandSpec::new(100.0, 40.0, 1.0, 1).unwrap()
    }

    fn grid(s: impl Fn(usize) -> f64) -> Vec<WitnessPoint<f64>> {
        (0..16)
            .map(|i| {
                let theta: f64 = s(i).sqrt();
                let p = theta.sin().powi(2);
                WitnessPoint::new(100.0 + 40.0 * i as f64 / 15.0, p).unwrap()
            })
            .collect()
    }

    #[test]
    fn perfectly_flat_response() {
        let rep = flatness_report(&grid(|_| 0.3), &band(), 0.5, None).unwrap();
        assert!(rep.epsilon_t < 1e-12);
        assert!((rep.min_ratio - 1.0).abs() < 1e-12);
        assert!(rep.certified);
        assert_eq!(rep.transfer_bounds_hold, Some(true));
        assert!((rep.kfd.unwrap() - 4.0 / 0.25 * rep.band_integral_s).abs() < 1e-12);
    }

    #[test]
    fn deep_hole_hits_boundary() {
        let rep = flatness_report(&grid(|i| if i == 7 { 0.0 } else { 0.3 }), &band(), 0.5, None).unwrap();
        assert_eq!(rep.min_ratio, 0.0);
        assert!((rep.epsilon_t - 1.0).abs() < 1e-12);
        assert!(!rep.certified);
        assert_eq!(rep.transfer_bounds_hold, None);
    }

    #[test]
    fn silent_response_is_degenerate() {
        let rep = flatness_report(&grid(|_| 0.0), &band(), 0.5, None).unwrap();
        assert!(rep.degenerate && !rep.certified);
        let rep = flatness_report(&grid(|_| 0.0), &band(), 0.0, None).unwrap();
        assert!(rep.degenerate && rep.kfd.is_none());
    }

    #[test]
    fn floor_lower_bound() {
        let rep = flatness_report(
            &grid(|i| 0.2 + 0.01 * i as f64),
            &band(),
            0.5,
            Some(0.19f64.sin().powi(2)),
        )
        .unwrap();
        assert_eq!(rep.kfd_floor_ok, Some(true));
        let rep = flatness_report(&grid(|i| 0.2 + 0.01 * i as f64), &band(), 0.5, Some(0.9)).unwrap();
        assert_eq!(rep.kfd_floor_ok, Some(false));
    }

    #[test]
    fn flatness_needs_eight_points() {
        let pts = grid(|_| 0.3);
        assert!(flatness_report(&pts[..7], &band(), 0.5, None).is_err());
    }
}
