use bbsense::control::{make_control_instance, BandSpec, ControlInstance};
use bbsense::floquet::{assemble_floquet, assemble_floquet_with, trotter_error_scan, DriveParams};
use bbsense::ghz::{first_crossing, geometric_grid, ghz_diag_populations, l1_from_uniform, DEFAULT_L1_THRESHOLD};
use bbsense::linalg::{identity, operator_norm, unitarity_defect, CMatrix};
use bbsense::reference::ReferencePropagator;
use bbsense::scalar::cplx;

const OMEGA: f64 = 1.0;
const B: f64 = 1e-3;

fn instance(r: f64, seed: u64) -> (BandSpec<f64>, ControlInstance<f64>) {
    let band = BandSpec::from_ratio(OMEGA, r, B, 1).unwrap();
    let inst = make_control_instance(&band, seed).unwrap();
    (band, inst)
}

fn grid(band: &BandSpec<f64>) -> Vec<f64> {
    let x = (band.n_buckets() as f64).sqrt() / (band.m as f64 * band.b_min);
    geometric_grid(0.01 * x, 20.0 * x, 1.05).unwrap()
}

fn carrier(band: &BandSpec<f64>, f: f64) -> f64 {
    band.omega_min + f * band.delta_omega
}

#[test]
fn matches_dense_integrator_up_to_the_stop() {
    for (r, seed) in [(2.0, 1), (4.0, 2), (8.0, 3)] {
        let (band, inst) = instance(r, seed);
        let drive = DriveParams::new(B, carrier(&band, 0.37)).unwrap();
        let sol = assemble_floquet(&inst, &drive).unwrap();
        let reference = ReferencePropagator::new(&inst, &drive, 1024).unwrap();
        let ts = grid(&band);
        let stop = match first_crossing(&sol, 1, &ts, DEFAULT_L1_THRESHOLD).unwrap() {
            Ok((i, _, _)) => i,
            Err(_) => ts.len() - 1,
        };
        for &t in &ts[..=stop] {
            let err = operator_norm(&(sol.interaction_propagator(t) - reference.interaction(t).unwrap()));
            assert!(err <= 1e-3, "d={} t={t:.3e} err={err:.3e}", inst.d);
        }
    }
}

#[test]
fn stop_index_agrees_with_integrator() {
    let (band, inst) = instance(2.0, 7);
    assert_eq!(inst.d, 2);
    // on resonance with the single gap
    let gap = inst.eigvals[1] - inst.eigvals[0];
    let drive = DriveParams::new(B, gap).unwrap();
    let sol = assemble_floquet(&inst, &drive).unwrap();
    let reference = ReferencePropagator::new(&inst, &drive, 1024).unwrap();
    let ts = grid(&band);
    let (i_floquet, _, _) = first_crossing(&sol, 1, &ts, DEFAULT_L1_THRESHOLD).unwrap().unwrap();
    let i_ref = ts
        .iter()
        .position(|&t| {
            let pops = ghz_diag_populations(&reference.interaction(t).unwrap(), 1).unwrap();
            l1_from_uniform(&pops) >= DEFAULT_L1_THRESHOLD
        })
        .unwrap();
    assert!(i_floquet.abs_diff(i_ref) <= 1, "floquet {i_floquet} reference {i_ref}");
}

#[test]
fn zero_drive_is_identity_in_interaction_picture() {
    let (band, inst) = instance(16.0, 4);
    let sol = assemble_floquet(&inst, &DriveParams::new(0.0, carrier(&band, 0.5)).unwrap()).unwrap();
    for &t in grid(&band).iter().step_by(25) {
        let dev = operator_norm(&(sol.interaction_propagator(t) - identity::<f64>(inst.d)));
        assert!(dev < 1e-10, "t={t} dev={dev}");
    }
}

#[test]
fn floquet_eigenvectors_are_unitary() {
    let (band, inst) = instance(16.0, 5);
    let sol = assemble_floquet(&inst, &DriveParams::new(B, carrier(&band, 0.2)).unwrap()).unwrap();
    assert!(unitarity_defect(&sol.eigvecs) < 1e-10);
}

#[test]
fn truncation_defect_is_quadratic_in_drive() {
    let (band, inst) = instance(8.0, 6);
    let x = (band.n_buckets() as f64).sqrt() / B;
    let w = carrier(&band, 0.6);
    let full = assemble_floquet(&inst, &DriveParams::new(B, w).unwrap()).unwrap();
    let half = assemble_floquet(&inst, &DriveParams::new(B / 2.0, w).unwrap()).unwrap();
    let quarter = assemble_floquet(&inst, &DriveParams::new(B / 4.0, w).unwrap()).unwrap();
    for f in [0.05, 0.1, 0.2] {
        let t = f * x;
        let d1 = unitarity_defect(&full.interaction_propagator(t));
        let d2 = unitarity_defect(&half.interaction_propagator(t));
        let d4 = unitarity_defect(&quarter.interaction_propagator(t));
        assert!(
            d1 / d2 >= 3.0 && d2 / d4 >= 3.0,
            "t={f}X defects {d1:.2e} {d2:.2e} {d4:.2e}"
        );
        assert!(d4 <= 1e-4, "t={f}X defect at B/4 {d4:.2e}");
    }
}

#[test]
fn strong_drive_is_refused() {
    let (band, inst) = instance(8.0, 1);
    let drive = DriveParams::new(0.2, carrier(&band, 0.5)).unwrap();
    assert!(assemble_floquet_with(&inst, &drive, 0.05).is_err());
}

fn trotter_setup() -> (ControlInstance<f64>, f64) {
    let band = BandSpec::from_ratio(1.0, 8.0, 0.01, 1).unwrap();
    let inst = make_control_instance(&band, 2024).unwrap();
    (inst, carrier(&band, 0.5))
}

const DTS: [f64; 5] = [0.01, 0.02, 0.04, 0.08, 0.16];

#[test]
fn trotter_error_is_first_order_and_linear_in_drive() {
    let (inst, w) = trotter_setup();
    let scan = trotter_error_scan(&inst, &DriveParams::new(0.01, w).unwrap(), 40.0, &DTS).unwrap();
    let doubled = trotter_error_scan(&inst, &DriveParams::new(0.02, w).unwrap(), 40.0, &DTS).unwrap();
    assert!(!scan.degenerate);
    let slope = scan.slope.unwrap();
    assert!((0.7..=1.3).contains(&slope), "slope {slope}");
    for (a, b) in scan.points.iter().zip(&doubled.points) {
        let ratio = b.1 / a.1;
        assert!((1.5..=2.5).contains(&ratio), "dt={} ratio {ratio}", a.0);
    }
}

#[test]
fn commuting_control_makes_trotter_exact() {
    let (inst, w) = trotter_setup();
    let g = CMatrix::<f64>::from_diagonal(&inst.eigvals.map(cplx));
    let diag = ControlInstance::custom(g, inst.z_single.clone()).unwrap();
    let scan = trotter_error_scan(&diag, &DriveParams::new(0.01, w).unwrap(), 40.0, &DTS).unwrap();
    assert!(scan.degenerate);
    assert!(scan.slope.is_none());
}

#[test]
fn resonant_pi_pulse_flips_two_level_register() {
    let zero = cplx(0.0);
    let one = cplx(1.0);
    let sx = CMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
    let inst = ControlInstance::two_level(OMEGA, sx).unwrap();
    let drive = DriveParams::new(B, OMEGA).unwrap();
    let t = std::f64::consts::PI / B;
    let sol = assemble_floquet(&inst, &drive).unwrap();
    let reference = ReferencePropagator::new(&inst, &drive, 1024).unwrap();
    for u in [sol.interaction_propagator(t), reference.interaction(t).unwrap()] {
        let flip = u[(0, 1)].norm_sqr();
        assert!(flip >= 0.95, "transition probability {flip}");
    }
}
