use bbsense::control::{make_control_instance, sample_haar_unitary, BandSpec, ControlInstance};
use bbsense::floquet::{assemble_floquet, DriveParams};
use bbsense::ghz::{
    first_crossing, geometric_grid, ghz_amplitude_bruteforce, ghz_amplitude_fast, ghz_diag_populations,
    ghz_diag_populations_bruteforce, lorentzian_envelope, readout,
};
use bbsense::linalg::CMatrix;
use bbsense::scalar::{cis, cplx};
use nalgebra::Complex;
use proptest::prelude::*;

fn close(a: Complex<f64>, b: Complex<f64>) -> bool {
    (a - b).norm() <= 1e-10
}

#[test]
fn fast_readout_matches_tensor_product_on_floquet_propagators() {
    let band = BandSpec::from_ratio(1.0, 4.0, 1e-3, 1).unwrap();
    let inst = make_control_instance(&band, 12).unwrap();
    let sol = assemble_floquet(&inst, &DriveParams::new(1e-3, 1.0015).unwrap()).unwrap();
    for t in [10.0, 300.0, 2000.0] {
        let u = sol.interaction_propagator(t);
        for m in 1..=3 {
            assert!(close(
                ghz_amplitude_fast(&u, m).unwrap(),
                ghz_amplitude_bruteforce(&u, m).unwrap()
            ));
            let fast = ghz_diag_populations(&u, m).unwrap();
            let brute = ghz_diag_populations_bruteforce(&u, m).unwrap();
            for (a, b) in fast.iter().zip(&brute) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn global_phase_winds_m_times() {
    let u: CMatrix<f64> = sample_haar_unitary(8, 3).unwrap();
    let phi = 0.37;
    let shifted = u.map(|z| z * cis(phi));
    for m in 1..=4 {
        let a = ghz_amplitude_fast(&u, m).unwrap();
        let b = ghz_amplitude_fast(&shifted, m).unwrap();
        assert!(close(b, a * cis(m as f64 * phi)));
        let r0 = readout(&u, m).unwrap();
        let r1 = readout(&shifted, m).unwrap();
        assert!((r0.p_det - r1.p_det).abs() < 1e-12);
        assert!((r0.l1_statistic - r1.l1_statistic).abs() < 1e-12);
    }
}

/// Transverse two-level register on resonance; the GHZ phase accumulates
/// `m` times faster.
fn half_time(m: usize) -> f64 {
    let half = cplx(0.5);
    let zero = cplx(0.0);
    let g = CMatrix::from_row_slice(2, 2, &[zero, half, half, zero]);
    let z = CMatrix::from_row_slice(2, 2, &[cplx(1.0), zero, zero, cplx(-1.0)]);
    let inst = ControlInstance::custom(g, z).unwrap();
    let b = 1e-3;
    let sol = assemble_floquet(&inst, &DriveParams::new(b, 1.0).unwrap()).unwrap();
    let grid = geometric_grid(1.0 / (m as f64 * b), 5.0 / (m as f64 * b), 1.002).unwrap();
    let t = grid
        .iter()
        .copied()
        .find(|&t| readout(&sol.interaction_propagator(t), m).unwrap().p_det >= 0.5)
        .expect("p_det reaches 1/2");
    m as f64 * b * t
}

#[test]
fn ghz_probe_speeds_up_by_m() {
    let base = half_time(1);
    for m in [2, 4] {
        let scaled = half_time(m);
        assert!((scaled / base - 1.0).abs() < 0.2, "m={m}: {scaled} vs {base}");
    }
}

#[test]
fn zero_threshold_stops_at_first_point() {
    let band = BandSpec::from_ratio(1.0, 8.0, 1e-3, 1).unwrap();
    let inst = make_control_instance(&band, 1).unwrap();
    let sol = assemble_floquet(&inst, &DriveParams::new(1e-3, 1.004).unwrap()).unwrap();
    let grid = geometric_grid(1.0, 100.0, 1.05).unwrap();
    let (i, t, _) = first_crossing(&sol, 2, &grid, 0.0).unwrap().unwrap();
    assert_eq!(i, 0);
    assert_eq!(t, grid[0]);
}

#[test]
fn unsorted_grid_refused() {
    let band = BandSpec::from_ratio(1.0, 8.0, 1e-3, 1).unwrap();
    let inst = make_control_instance(&band, 1).unwrap();
    let sol = assemble_floquet(&inst, &DriveParams::new(1e-3, 1.004).unwrap()).unwrap();
    assert!(first_crossing(&sol, 1, &[2.0, 1.0, 3.0], 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fast_matches_brute_on_haar(seed in any::<u64>(), k in 1usize..4, m in 1usize..4) {
        let u: CMatrix<f64> = sample_haar_unitary(1 << k, seed).unwrap();
        let fast = ghz_amplitude_fast(&u, m).unwrap();
        let brute = ghz_amplitude_bruteforce(&u, m).unwrap();
        prop_assert!((fast - brute).norm() <= 1e-10);
        let pops = ghz_diag_populations(&u, m).unwrap();
        prop_assert!(pops.iter().all(|&p| (-1e-12..=1.0 + 1e-10).contains(&p)));
    }

    #[test]
    fn lorentzian_is_even_and_bounded(delta in -1e3f64..1e3, mb in 1e-3f64..10.0) {
        let a = lorentzian_envelope(delta, mb).unwrap();
        let b = lorentzian_envelope(-delta, mb).unwrap();
        prop_assert!(a == b);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!((lorentzian_envelope(mb, mb).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn geometric_grid_is_ascending_and_spans(t0 in 1e-3f64..1.0, span in 2.0f64..100.0, g in 1.01f64..1.5) {
        let grid = geometric_grid(t0, t0 * span, g).unwrap();
        prop_assert!((grid[0] - t0).abs() <= 1e-12 * t0);
        prop_assert!(grid.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(*grid.last().unwrap() >= t0 * span * (1.0 - 1e-12));
    }
}
