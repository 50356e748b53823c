//! Oracle and property checks shared by `validate` and the acceptance suite.

use std::fmt;
use std::time::Instant;

use bbsense::control::{
    make_control_instance, sample_haar_unitary, transversality_stats, BandSpec, ControlInstance, Observable,
};
use bbsense::floquet::{assemble_floquet, trotter_error_scan, DriveParams, TrotterScan};
use bbsense::ghz::{
    crowding_sum, first_crossing, geometric_grid, ghz_amplitude_bruteforce, ghz_amplitude_fast, ghz_diag_populations,
    ghz_diag_populations_bruteforce, lorentzian_envelope, readout, DEFAULT_L1_THRESHOLD,
};
use bbsense::harness::{draw_sample, run_sweep, CellSpec, SweepConfig, SweepOutput};
use bbsense::linalg::{operator_norm, unitarity_defect, CMatrix};
use bbsense::reference::ReferencePropagator;
use bbsense::scalar::cplx;
use bbsense::seed::derive_seed;
use bbsense::witness::{flatness_report, shot_budget, slope_test_montecarlo, Hypothesis, ShotNoise, WitnessPoint};
use bbsense::Result;

use crate::config::TrotterConfig;

const ORACLE_SEED: u64 = 0x6f72_6163_6c65;
const OMEGA_MIN: f64 = std::f64::consts::TAU * 1e8;

/// Outcome of one check: a headline value against a bound, plus detail rows.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
    pub rows: Vec<String>,
}

impl Check {
    fn new(name: &str, value: f64, bound: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.to_string(),
            value,
            bound: bound.into(),
            pass,
            rows: Vec::new(),
        }
    }

    pub fn status(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {} value={:.4e} bound={}",
            self.name,
            self.status(),
            self.value,
            self.bound
        )?;
        for r in &self.rows {
            write!(f, "\n    {r}")?;
        }
        Ok(())
    }
}

/// Fault injected into the fast GHZ amplitude, to prove the oracle bites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Raise the fast amplitude to `m + 1` instead of `m`.
    GhzExponent,
}

/// Fast against brute-force GHZ amplitudes and populations on Haar unitaries.
pub fn ghz_oracle(fault: Fault) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for d in [2usize, 4, 8] {
        for m in [1usize, 2, 3] {
            let mut cell = 0.0f64;
            for s in 0..50u64 {
                let u: CMatrix<f64> = sample_haar_unitary(d, derive_seed(ORACLE_SEED, &[d as u64, m as u64, s]))?;
                let m_fast = if fault == Fault::GhzExponent { m + 1 } else { m };
                let a = ghz_amplitude_fast(&u, m_fast)?;
                let b = ghz_amplitude_bruteforce(&u, m)?;
                cell = cell.max((a - b).norm());
                let pf = ghz_diag_populations(&u, m)?;
                let pb = ghz_diag_populations_bruteforce(&u, m)?;
                for (x, y) in pf.iter().zip(&pb) {
                    cell = cell.max((x - y).abs());
                }
            }
            rows.push(format!("d={d} m={m} max|fast-brute|={cell:.3e}"));
            worst = worst.max(cell);
        }
    }
    let mut c = Check::new("ghz_fast_vs_brute", worst, "<= 1e-10", worst <= 1e-10);
    c.rows = rows;
    Ok(c)
}

/// Floquet propagator against the dense-step integrator over each sample's
/// stopping grid, up to the stop (or the whole grid when none).
pub fn floquet_vs_reference() -> Result<Check> {
    let config = SweepConfig::default();
    let mut worst = 0.0f64;
    let mut full_grid = 0.0f64;
    let mut rows = Vec::new();
    for d in [2usize, 4, 8] {
        for m in [1usize, 2] {
            let cell = CellSpec::new(m, d as f64, 1e-3);
            let band = config.band(&cell)?;
            let grid = config.time_grid_for(&cell)?;
            let mut cell_worst = 0.0f64;
            for s in 0..2 {
                let (_, omega, inst) = draw_sample(&config, &cell, s)?;
                let drive = DriveParams::new(band.b_min, omega)?;
                let sol = assemble_floquet(&inst, &drive)?;
                let reference = ReferencePropagator::new(&inst, &drive, 1024)?;
                let stop = match first_crossing(&sol, m, &grid, DEFAULT_L1_THRESHOLD)? {
                    Ok((i, _, _)) => i,
                    Err(_) => grid.len() - 1,
                };
                for (i, &t) in grid.iter().enumerate() {
                    let err = operator_norm(&(sol.interaction_propagator(t) - reference.interaction(t)?));
                    if i <= stop {
                        cell_worst = cell_worst.max(err);
                    }
                    full_grid = full_grid.max(err);
                }
            }
            rows.push(format!("d={d} m={m} max||u_int-u_ref|| to stop={cell_worst:.3e}"));
            worst = worst.max(cell_worst);
        }
    }
    rows.push(format!("whole grid to 20X (information): {full_grid:.3e}"));
    let mut c = Check::new("floquet_vs_reference", worst, "<= 1e-3", worst <= 1e-3);
    c.rows = rows;
    Ok(c)
}

/// `B = 0`: detection probability and L1 statistic along whole grids.
pub fn null_calibration() -> Result<Check> {
    let mut config = SweepConfig::default();
    let mut worst = 0.0f64;
    for m in [1usize, 2, 3] {
        for r in [8.0, 16.0, 64.0] {
            let mut cell = CellSpec::new(m, r, 1e-3);
            cell.signal_scale = 0.0;
            config.cells = vec![cell];
            let grid = config.time_grid_for(&cell)?;
            for s in 0..2 {
                let (_, omega, inst) = draw_sample(&config, &cell, s)?;
                let sol = assemble_floquet(&inst, &DriveParams::new(0.0, omega)?)?;
                for &t in &grid {
                    let r = readout(&sol.interaction_propagator(t), m)?;
                    worst = worst.max(r.p_det).max(r.l1_statistic);
                }
            }
        }
    }
    Ok(Check::new("null_calibration", worst, "<= 1e-10", worst <= 1e-10))
}

/// Variance of `<psi|D|psi>` over Haar eigenvectors against `n/(d+1)`.
pub fn transversality(n_eigvecs: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for d in [8usize, 16, 64] {
        let band = BandSpec::from_ratio(OMEGA_MIN, d as f64, 1e-3 * OMEGA_MIN, 1)?;
        let st = transversality_stats(
            &band,
            derive_seed(ORACLE_SEED, &[d as u64]),
            n_eigvecs,
            Observable::SignalGenerator,
            &[],
        )?;
        let z = st.variance_z_score();
        rows.push(format!(
            "d={d} var={:.5} predicted={:.5} z={z:+.2} samples={}",
            st.sample_var, st.predicted_var, st.n_samples
        ));
        worst = worst.max(z.abs());
    }
    let mut c = Check::new("transversality", worst, "|z| <= 3", worst <= 3.0);
    c.rows = rows;
    Ok(c)
}

/// Unitarity of sampled unitaries and Floquet eigenvectors, and quadratic
/// shrinkage of the truncation defect of `u_int` with the drive.
pub fn unitarity_defects() -> Result<Check> {
    let mut exact = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for d in [2usize, 8, 32] {
        let u: CMatrix<f64> = sample_haar_unitary(d, derive_seed(ORACLE_SEED, &[7, d as u64]))?;
        exact = exact.max(unitarity_defect(&u));
    }
    let config = SweepConfig::default();
    for r in [8.0, 16.0] {
        let cell = CellSpec::new(1, r, 1e-3);
        let band = config.band(&cell)?;
        let x = config.time_scale(&cell)?;
        for s in 0..2 {
            let (_, omega, inst) = draw_sample(&config, &cell, s)?;
            let full = assemble_floquet(&inst, &DriveParams::new(band.b_min, omega)?)?;
            let half = assemble_floquet(&inst, &DriveParams::new(band.b_min / 2.0, omega)?)?;
            exact = exact.max(unitarity_defect(&full.eigvecs));
            for f in [0.05, 0.2] {
                let t = f * x;
                let ratio = unitarity_defect(&full.interaction_propagator(t))
                    / unitarity_defect(&half.interaction_propagator(t));
                min_ratio = min_ratio.min(ratio);
            }
        }
    }
    let pass = exact <= 1e-10 && min_ratio >= 3.0;
    let mut c = Check::new("unitarity_defects", exact, "<= 1e-10, halving-b ratio >= 3", pass);
    c.rows = vec![format!(
        "truncation defect shrink on halving b (min over samples): {min_ratio:.2}"
    )];
    Ok(c)
}

/// The oracle table printed by `validate`.
pub fn validation_suite(fault: Fault) -> Result<Vec<Check>> {
    Ok(vec![
        ghz_oracle(fault)?,
        floquet_vs_reference()?,
        null_calibration()?,
        transversality(2000)?,
        unitarity_defects()?,
    ])
}

/// Scans of `trotter-check`: configured drive and doubled drive.
#[derive(Debug, Clone)]
pub struct TrotterReport {
    pub scan: TrotterScan,
    pub doubled: TrotterScan,
    /// `error(2B) / error(B)` per step.
    pub ratios: Vec<f64>,
}

pub fn trotter_instance(cfg: &TrotterConfig) -> Result<(ControlInstance<f64>, BandSpec<f64>)> {
    let b = cfg.b_rel * cfg.omega_min;
    let band = BandSpec::from_ratio(cfg.omega_min, cfg.r, b, 1)?;
    let inst = make_control_instance(&band, cfg.seed_root)?;
    if cfg.commuting {
        let g = CMatrix::<f64>::from_diagonal(&inst.eigvals.map(cplx));
        return Ok((ControlInstance::custom(g, inst.z_single.clone())?, band));
    }
    Ok((inst, band))
}

pub fn trotter_report(cfg: &TrotterConfig) -> Result<TrotterReport> {
    let (inst, band) = trotter_instance(cfg)?;
    let omega = band.omega_min + cfg.carrier_fraction * band.delta_omega;
    let scan = trotter_error_scan(&inst, &DriveParams::new(band.b_min, omega)?, cfg.t_final, &cfg.dts)?;
    let doubled = trotter_error_scan(
        &inst,
        &DriveParams::new(2.0 * band.b_min, omega)?,
        cfg.t_final,
        &cfg.dts,
    )?;
    let ratios = scan
        .points
        .iter()
        .zip(&doubled.points)
        .map(|(a, b)| b.1 / a.1)
        .collect();
    Ok(TrotterReport { scan, doubled, ratios })
}

pub fn trotter_check(cfg: &TrotterConfig) -> Result<Check> {
    let rep = trotter_report(cfg)?;
    let slope = rep.scan.slope.unwrap_or(f64::NAN);
    let ratios_ok = rep.ratios.iter().all(|r| (1.5..=2.5).contains(r));
    let pass = !rep.scan.degenerate && (0.7..=1.3).contains(&slope) && ratios_ok;
    let mut c = Check::new("trotter", slope, "slope in [0.7, 1.3], 2B ratio in [1.5, 2.5]", pass);
    c.rows = rep
        .scan
        .points
        .iter()
        .zip(&rep.ratios)
        .map(|((dt, e), r)| format!("dt={dt} error={e:.4e} error(2B)/error(B)={r:.3}"))
        .collect();
    Ok(c)
}

/// Seed-averaged `p_det(delta) / p_det(0)` on single-gap registers against
/// the Lorentzian, with `T` each register's own on-resonance stopping time.
pub fn lineshape(m: usize, n_seeds: usize) -> Result<Check> {
    let b = 1e-3 * OMEGA_MIN;
    let mb = m as f64 * b;
    let band = BandSpec::new(OMEGA_MIN, 2.0 * mb, b, m)?;
    let deltas: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.5 * mb).collect();
    let grid = geometric_grid(0.02 / mb, 20.0 / mb, 1.05)?;
    let mut sums = vec![0.0; deltas.len()];
    let mut used = 0usize;
    let mut dark = 0usize;
    let mut s = 0u64;
    while used < n_seeds {
        let inst = make_control_instance(&band, derive_seed(11, &[s]))?;
        s += 1;
        let gap = inst.eigvals[1] - inst.eigvals[0];
        let on = assemble_floquet(&inst, &DriveParams::new(b, gap)?)?;
        let Ok((_, t, _)) = first_crossing(&on, m, &grid, DEFAULT_L1_THRESHOLD)? else {
            dark += 1;
            continue;
        };
        for (k, &dl) in deltas.iter().enumerate() {
            let sol = assemble_floquet(&inst, &DriveParams::new(b, gap + dl)?)?;
            sums[k] += readout(&sol.interaction_propagator(t), m)?.p_det;
        }
        used += 1;
    }
    let centre = sums[deltas.len() / 2];
    let mut worst = 1.0f64;
    let mut rows = Vec::new();
    for (k, &dl) in deltas.iter().enumerate() {
        let eta = lorentzian_envelope(dl, mb)?;
        let q = sums[k] / centre / eta;
        worst = worst.max(q).max(1.0 / q);
        rows.push(format!("delta/mB={:+.1} ratio/eta={q:.3}", dl / mb));
    }
    rows.push(format!(
        "{used} seeds averaged, {dark} without an on-resonance crossing skipped"
    ));
    let mut c = Check::new(&format!("lineshape_m{m}"), worst, "within factor 2", worst <= 2.0);
    c.rows = rows;
    Ok(c)
}

/// `sum_{n>=1} 1/(1+n^2)` summed directly against `(pi coth pi - 1)/2`.
pub fn crowding() -> Check {
    let pi = std::f64::consts::PI;
    let s = crowding_sum(1_000_000);
    let exact = (pi / pi.tanh() - 1.0) / 2.0;
    let dev = (s - exact).abs();
    let mut c = Check::new("crowding_sum", s, "(pi coth pi - 1)/2 +- 1e-3", dev <= 1e-3);
    c.rows = vec![
        format!("closed form {exact:.6}"),
        format!("tail from n=2: {:.6}", s - 0.5),
    ];
    c
}

/// Monte Carlo error rates of the two-time test and the shot budget.
pub fn slope_test_checks(trials: usize) -> Result<Check> {
    let noise = ShotNoise {
        relative_amplitude: 0.2,
    };
    let mut rows = Vec::new();
    let mut ok = true;
    let mut final_rate = 0.0f64;
    for truth in [Hypothesis::H0, Hypothesis::H1] {
        let mut prev = f64::INFINITY;
        for n in [4usize, 16, 64] {
            let out = slope_test_montecarlo(noise, truth, n, 4.0, trials, ORACLE_SEED)?;
            ok &= out.error_rate <= prev;
            prev = out.error_rate;
            rows.push(format!("truth={truth:?} n_shots={n} error_rate={:.4}", out.error_rate));
        }
        final_rate = final_rate.max(prev);
    }
    let budget = shot_budget(2.0, 1e-6, 1.0)?;
    let hand = ((1e6f64).ln() / 2f64.ln().powi(2)).ceil() as usize;
    rows.push(format!("shot_budget(q=2, delta=1e-6, c=1)={budget} hand={hand}"));
    let pass = ok && final_rate <= 0.05 && budget == 29 && hand == 29;
    let mut c = Check::new(
        "slope_test",
        final_rate,
        "non-increasing, final <= 0.05, budget 29",
        pass,
    );
    c.rows = rows;
    Ok(c)
}

/// Transfer bounds on every certified grid of the supplied reports, plus the
/// synthetic flat input.
pub fn flatness_checks(reports: &[(String, bbsense::FlatnessReport)]) -> Result<Check> {
    let band = BandSpec::from_ratio(OMEGA_MIN, 8.0, 1e-3 * OMEGA_MIN, 1)?;
    let flat: Vec<WitnessPoint<f64>> = (0..16)
        .map(|k| WitnessPoint::new(band.omega_min + band.delta_omega * k as f64 / 15.0, 0.3))
        .collect::<Result<_>>()?;
    let fr = flatness_report(&flat, &band, band.b_min, None)?;
    let flat_ok = fr.epsilon_t.abs() <= 1e-12 && (fr.min_ratio - 1.0).abs() <= 1e-12;
    let mut rows = vec![format!(
        "synthetic flat: epsilon_t={:.1e} min_ratio-1={:.1e} (round-off tolerance 1e-12)",
        fr.epsilon_t,
        fr.min_ratio - 1.0
    )];
    let mut certified = 0usize;
    let mut bounds_ok = true;
    for (label, r) in reports {
        if r.certified {
            certified += 1;
            bounds_ok &= r.transfer_bounds_hold == Some(true);
        }
        rows.push(format!(
            "{label}: epsilon_t={:.4} min_ratio={:.4} certified={} bounds={:?}",
            r.epsilon_t, r.min_ratio, r.certified, r.transfer_bounds_hold
        ));
    }
    rows.push(format!("{certified} of {} grids certified", reports.len()));
    let mut c = Check::new(
        "flatness",
        certified as f64,
        "bounds hold on every certified grid",
        flat_ok && bounds_ok,
    );
    c.rows = rows;
    Ok(c)
}

/// Runs the sweep and checks the fitted slope and the wall clock.
pub fn scaling_slope(config: &SweepConfig, jobs: Option<usize>) -> Result<(Check, SweepOutput)> {
    let start = Instant::now();
    let out = run_sweep(config, jobs)?;
    let secs = start.elapsed().as_secs_f64();
    let slope = out.dataset.fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN);
    let pass = (0.8..=1.2).contains(&slope) && secs <= 900.0;
    let mut c = Check::new("scaling_slope", slope, "[0.8, 1.2] within 900 s", pass);
    for r in &out.dataset.rows {
        c.rows.push(format!(
            "{} x={:.4e} t_mean={} n_valid={}/{}",
            r.cell_id,
            r.x_value,
            r.t_mean.map(|t| format!("{t:.4e}")).unwrap_or_else(|| "-".into()),
            r.n_valid,
            r.n_samples
        ));
    }
    if let Some(f) = &out.dataset.fit {
        c.rows.push(format!(
            "ci95={:?} residual={:.4} cells={}",
            f.slope_ci95, f.residual, f.n_cells
        ));
    }
    c.rows.push(format!("wall clock {secs:.1} s"));
    Ok((c, out))
}
