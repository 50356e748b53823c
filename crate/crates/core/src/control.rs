//! Randomized SSH control Hamiltonian for a single register.
//!
//! A search band `[omega_min, omega_min + delta_omega]` is mapped onto a
//! periodic two-band SSH chain whose bands sit at `±[A, B]` with
//! `A = omega_min / 2` and `B = (omega_min + delta_omega) / 2`, so that the
//! interband gaps `E_j - E_i` fill the band. The chain is conjugated by a
//! Haar-random unitary to make the control transverse to the signal
//! generator `D = sum_k Z_k`.

use nalgebra::{Complex, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigh, symmetric_eigh, to_complex, CMatrix};
use crate::scalar::{cplx, Real};
use crate::seed::{derive_seed, rng_from_seed};

/// Search band and problem parameters. All frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec<T> {
    pub omega_min: T,
    pub delta_omega: T,
    pub b_min: T,
    pub m: usize,
}

impl<T: Real> BandSpec<T> {
    pub fn new(omega_min: T, delta_omega: T, b_min: T, m: usize) -> Result<Self> {
        let band = BandSpec {
            omega_min,
            delta_omega,
            b_min,
            m,
        };
        band.validate()?;
        Ok(band)
    }

    /// Band with `delta_omega = r * m * b_min`.
    pub fn from_ratio(omega_min: T, r: T, b_min: T, m: usize) -> Result<Self> {
        Self::new(omega_min, r * T::from_usize_exact(m) * b_min, b_min, m)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.omega_min > zero) {
            return Err(Error::InvalidBand("omega_min must be positive".into()));
        }
        if !(self.delta_omega > zero) {
            return Err(Error::InvalidBand("delta_omega must be positive".into()));
        }
        if !(self.b_min > zero) {
            return Err(Error::InvalidBand("b_min must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidBand("register count m must be at least 1".into()));
        }
        if self.omega_min < self.b_min {
            return Err(Error::InvalidBand(format!(
                "quasi-static regime: omega_min = {} < b_min = {}",
                self.omega_min.as_f64(),
                self.b_min.as_f64()
            )));
        }
        Ok(())
    }

    pub fn omega_max(&self) -> T {
        self.omega_min + self.delta_omega
    }

    /// `delta_omega / (m b_min)`.
    pub fn r(&self) -> T {
        self.delta_omega / self.bucket_width()
    }

    /// `m b_min`.
    pub fn bucket_width(&self) -> T {
        T::from_usize_exact(self.m) * self.b_min
    }

    /// Bucket count `ceil(r)`.
    pub fn n_buckets(&self) -> usize {
        let r = self.r().as_f64();
        // guard against r = 8 being represented as 8.000000000000002
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-9 * r.max(1.0) {
            nearest as usize
        } else {
            r.ceil() as usize
        }
        .max(1)
    }

    pub fn contains(&self, omega: T) -> bool {
        omega >= self.omega_min && omega <= self.omega_max()
    }
}

/// Hopping parameters of the periodic SSH chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SshParams<T> {
    /// Number of unit cells `L`; the register dimension is `2L`.
    pub cells: usize,
    pub t1: T,
    pub t2: T,
    pub a_half: T,
    pub b_half: T,
    pub periodic: bool,
}

impl<T: Real> SshParams<T> {
    /// Parameters whose bands sit at `±[a_half, b_half]`.
    pub fn from_band_edges(cells: usize, a_half: T, b_half: T) -> Self {
        let half = T::lit(0.5);
        SshParams {
            cells,
            t1: half * (a_half + b_half),
            t2: half * (b_half - a_half),
            a_half,
            b_half,
            periodic: true,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.cells
    }
}

/// Nearest power of two to `r`, ties broken upward, at least 2.
pub fn nearest_power_of_two(r: f64) -> usize {
    if !(r > 2.0) {
        return 2;
    }
    let lower = 1usize << (r.log2().floor() as u32);
    let upper = lower * 2;
    if r - (lower as f64) < (upper as f64) - r {
        lower
    } else {
        upper
    }
}

pub fn band_to_ssh_params<T: Real>(band: &BandSpec<T>) -> Result<SshParams<T>> {
    band.validate()?;
    let r = band.r().as_f64();
    if r < 1.0 {
        return Err(Error::BandTooNarrow { r });
    }
    let d = nearest_power_of_two(r);
    let half = T::lit(0.5);
    let a_half = half * band.omega_min;
    let b_half = half * band.omega_max();
    Ok(SshParams::from_band_edges(d / 2, a_half, b_half))
}

/// Single-particle hopping matrix on sites `(cell, sublattice)` with site
/// index `2 * cell + sublattice`.
pub fn build_ssh_matrix<T: Real>(params: &SshParams<T>) -> DMatrix<T> {
    let l = params.cells;
    let d = 2 * l;
    let mut h = DMatrix::<T>::zeros(d, d);
    for n in 0..l {
        let a = 2 * n;
        let b = 2 * n + 1;
        h[(a, b)] += params.t1;
        h[(b, a)] += params.t1;
        if n + 1 < l || params.periodic {
            let a_next = 2 * ((n + 1) % l);
            h[(a_next, b)] += params.t2;
            h[(b, a_next)] += params.t2;
        }
    }
    h
}

/// Haar-distributed unitary: complex Ginibre matrix, QR, and the phases of
/// `diag(R)` folded into `Q` so the distribution is exactly Haar.
pub fn sample_haar_unitary<T: Real>(d: usize, seed: u64) -> Result<CMatrix<T>> {
    if d < 2 {
        return Err(Error::param("d", format!("dimension must be at least 2, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // column-major fill keeps the draw order tied to the matrix layout
    let ginibre = CMatrix::<T>::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex::new(T::lit(re * scale), T::lit(im * scale))
    });
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let rkk = r[(k, k)];
        let modulus = rkk.norm_sqr().sqrt();
        if modulus > T::zero() {
            col *= rkk / cplx(modulus);
        }
    }
    Ok(q)
}

/// `D = sum_k Z_k` on `n` qubits, returned as its diagonal.
pub fn signal_generator_diagonal<T: Real>(d: usize) -> DVector<T> {
    let n = d.trailing_zeros() as i64;
    DVector::from_fn(d, |i, _| T::lit((n - 2 * i.count_ones() as i64) as f64))
}

/// One register's engineered Hamiltonian together with its eigensystem and
/// the signal generator.
#[derive(Debug, Clone)]
pub struct ControlInstance<T: Real> {
    pub d: usize,
    pub n: usize,
    pub g_ssh: DMatrix<T>,
    pub u_conj: CMatrix<T>,
    pub g_single: CMatrix<T>,
    /// Ascending.
    pub eigvals: DVector<T>,
    pub eigvecs: CMatrix<T>,
    pub z_single: CMatrix<T>,
    pub seed: u64,
}

impl<T: Real> ControlInstance<T> {
    /// Conjugates `g_ssh` by `u_conj`. The eigensystem is taken from the real
    /// SSH matrix and rotated, so every eigenvector is `u_conj` applied to a
    /// fixed vector.
    pub fn from_parts(g_ssh: DMatrix<T>, u_conj: CMatrix<T>, seed: u64) -> Result<Self> {
        let d = g_ssh.nrows();
        if !d.is_power_of_two() || d < 2 {
            return Err(Error::param(
                "d",
                format!("register dimension {d} is not a power of two >= 2"),
            ));
        }
        if u_conj.nrows() != d || u_conj.ncols() != d {
            return Err(Error::param("u_conj", "shape does not match g_ssh"));
        }
        let (eigvals, w) = symmetric_eigh(&g_ssh)?;
        let g_c = to_complex(&g_ssh);
        let mut g_single = &u_conj * g_c * u_conj.adjoint();
        symmetrize(&mut g_single);
        let eigvecs = &u_conj * to_complex(&w);
        let z_single = CMatrix::from_diagonal(&signal_generator_diagonal::<T>(d).map(cplx));
        Ok(ControlInstance {
            d,
            n: d.trailing_zeros() as usize,
            g_ssh,
            u_conj,
            g_single,
            eigvals,
            eigvecs,
            z_single,
            seed,
        })
    }

    /// Instance with an arbitrary Hermitian control and signal generator,
    /// used for few-level reductions. `g_ssh` is left empty and `u_conj` is
    /// the identity.
    pub fn custom(g_single: CMatrix<T>, z_single: CMatrix<T>) -> Result<Self> {
        let d = g_single.nrows();
        if d == 0 || z_single.shape() != g_single.shape() {
            return Err(Error::param("z_single", "shape does not match g_single"));
        }
        let (eigvals, eigvecs) = hermitian_eigh(&g_single)?;
        Ok(ControlInstance {
            d,
            n: if d.is_power_of_two() {
                d.trailing_zeros() as usize
            } else {
                0
            },
            g_ssh: DMatrix::zeros(0, 0),
            u_conj: CMatrix::identity(d, d),
            g_single,
            eigvals,
            eigvecs,
            z_single,
            seed: 0,
        })
    }

    /// Two-level reduction: `G = (gap/2) diag(-1, 1)` with signal generator `z`.
    pub fn two_level(gap: T, z: CMatrix<T>) -> Result<Self> {
        let half = T::lit(0.5) * gap;
        let g = CMatrix::from_diagonal(&DVector::from_vec(vec![cplx(-half), cplx(half)]));
        Self::custom(g, z)
    }

    /// Fresh instance with the same `g_ssh` but `u_conj = I`.
    pub fn unconjugated(&self) -> Result<Self> {
        Self::from_parts(self.g_ssh.clone(), CMatrix::identity(self.d, self.d), self.seed)
    }

    /// `max |(V diag(E) V^dagger - G)_ij|`, relative to `max |G_ij|`.
    pub fn reconstruction_error(&self) -> T {
        let mut scaled = self.eigvecs.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= cplx(self.eigvals[k]);
        }
        let diff = scaled * self.eigvecs.adjoint() - &self.g_single;
        let scale = self.g_single.iter().fold(T::zero(), |a, z| a.max(z.norm_sqr().sqrt()));
        let err = diff.iter().fold(T::zero(), |a, z| a.max(z.norm_sqr().sqrt()));
        if scale > T::zero() {
            err / scale
        } else {
            err
        }
    }

    /// Signal generator in the eigenbasis, `V^dagger Z V`.
    pub fn z_in_eigenbasis(&self) -> CMatrix<T> {
        self.eigvecs.adjoint() * &self.z_single * &self.eigvecs
    }
}

fn symmetrize<T: Real>(m: &mut CMatrix<T>) {
    let half = cplx(T::lit(0.5));
    let adj = m.adjoint();
    *m = (&*m + adj) * half;
}

pub fn make_control_instance<T: Real>(band: &BandSpec<T>, seed: u64) -> Result<ControlInstance<T>> {
    let params = band_to_ssh_params(band)?;
    let g_ssh = build_ssh_matrix(&params);
    let u = sample_haar_unitary(params.dim(), seed)?;
    ControlInstance::from_parts(g_ssh, u, seed)
}

/// Operator whose eigenbasis diagonal is sampled by [`transversality_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    SignalGenerator,
    Identity,
}

/// `X_i = <psi_i| O |psi_i>` for every eigenvector of the instance.
pub fn diagonal_expectations<T: Real>(instance: &ControlInstance<T>, observable: Observable) -> Vec<T> {
    match observable {
        Observable::Identity => instance
            .eigvecs
            .column_iter()
            .map(|c| c.iter().fold(T::zero(), |a, z| a + z.norm_sqr()))
            .collect(),
        Observable::SignalGenerator => {
            let z = instance.z_in_eigenbasis();
            (0..instance.d).map(|i| z[(i, i)].re).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityStats {
    pub d: usize,
    pub n_qubits: usize,
    pub n_samples: usize,
    pub sample_mean: f64,
    pub sample_var: f64,
    /// Standard error of `sample_var` from the sample fourth moment.
    pub var_std_error: f64,
    /// `n / (d + 1)`.
    pub predicted_var: f64,
    /// `(t, fraction with |X_i| >= t)`.
    pub tail_exceedances: Vec<(f64, f64)>,
}

impl TransversalityStats {
    /// Largest `c` with `fraction(t) <= 2 exp(-c d t^2 / n^2)` at every
    /// tabulated `t`; `None` if no tail events were observed.
    pub fn fitted_levy_constant(&self) -> Option<f64> {
        let n2 = (self.n_qubits * self.n_qubits) as f64;
        self.tail_exceedances
            .iter()
            .filter(|(t, frac)| *frac > 0.0 && *t > 0.0)
            .map(|(t, frac)| -(frac / 2.0).ln() * n2 / (self.d as f64 * t * t))
            .reduce(f64::min)
    }

    /// Distance of `sample_var` from `n/(d+1)` in standard errors.
    pub fn variance_z_score(&self) -> f64 {
        (self.sample_var - self.predicted_var) / self.var_std_error
    }
}

/// Statistics of `X_i = <psi_i|D|psi_i>` over eigenvectors of independent
/// instances drawn with seeds derived from `seed`.
pub fn transversality_stats<T: Real>(
    band: &BandSpec<T>,
    seed: u64,
    n_eigvecs: usize,
    observable: Observable,
    tail_thresholds: &[f64],
) -> Result<TransversalityStats> {
    if n_eigvecs < 30 {
        return Err(Error::TooFewSamples {
            got: n_eigvecs,
            need: 30,
        });
    }
    let mut xs: Vec<f64> = Vec::with_capacity(n_eigvecs);
    let mut draw = 0u64;
    let mut d = 0;
    let mut n = 0;
    while xs.len() < n_eigvecs {
        let inst = make_control_instance(band, derive_seed(seed, &[draw]))?;
        d = inst.d;
        n = inst.n;
        xs.extend(
            diagonal_expectations(&inst, observable)
                .into_iter()
                .map(Real::as_f64)
                .take(n_eigvecs - xs.len()),
        );
        draw += 1;
    }
    let count = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / count;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / count;
    let var = m2 / (count - 1.0);
    let var_std_error = ((m4 - var * var).max(0.0) / count).sqrt();
    let tail_exceedances = tail_thresholds
        .iter()
        .map(|&t| (t, xs.iter().filter(|x| x.abs() >= t).count() as f64 / count))
        .collect();
    Ok(TransversalityStats {
        d,
        n_qubits: n,
        n_samples: xs.len(),
        sample_mean: mean,
        sample_var: var,
        var_std_error,
        predicted_var: n as f64 / (d as f64 + 1.0),
        tail_exceedances,
    })
}

/// A transition of the control Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap<T> {
    pub frequency: T,
    /// `|<psi_j| Z |psi_i>|^2`.
    pub weight: T,
    pub lower: usize,
    pub upper: usize,
    /// Lower level in the negative band and upper level in the positive band.
    pub interband: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSpectrum<T> {
    /// Sorted by frequency.
    pub gaps: Vec<Gap<T>>,
}

/// Every pair `i < j` of the ascending spectrum. Exactly degenerate pairs of
/// the periodic chain appear at (numerically) zero frequency.
pub fn gap_spectrum<T: Real>(instance: &ControlInstance<T>) -> GapSpectrum<T> {
    let z = instance.z_in_eigenbasis();
    let e = &instance.eigvals;
    let d = instance.d;
    let mut gaps = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            gaps.push(Gap {
                frequency: (e[j] - e[i]).max(T::zero()),
                weight: z[(j, i)].norm_sqr(),
                lower: i,
                upper: j,
                interband: e[i] < T::zero() && e[j] > T::zero(),
            });
        }
    }
    gaps.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).expect("finite gaps"));
    GapSpectrum { gaps }
}

impl<T: Real> GapSpectrum<T> {
    /// Median interband weight times 0.1 (all pairs if none are interband).
    pub fn default_weight_floor(&self) -> T {
        let mut w: Vec<T> = self.gaps.iter().filter(|g| g.interband).map(|g| g.weight).collect();
        if w.is_empty() {
            w = self.gaps.iter().map(|g| g.weight).collect();
        }
        if w.is_empty() {
            return T::zero();
        }
        w.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        let mid = w.len() / 2;
        let median = if w.len().is_multiple_of(2) {
            T::lit(0.5) * (w[mid - 1] + w[mid])
        } else {
            w[mid]
        };
        median * T::lit(0.1)
    }

    /// Strongest gap inside `[lo, hi]`.
    pub fn strongest_in(&self, lo: T, hi: T) -> Option<Gap<T>> {
        self.gaps
            .iter()
            .filter(|g| g.frequency >= lo && g.frequency <= hi)
            .copied()
            .reduce(|a, b| if b.weight > a.weight { b } else { a })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport<T> {
    pub n_buckets: usize,
    pub covered_fraction: T,
    pub max_detuning: T,
    pub weight_floor: T,
}

/// Tiles the band into `ceil(r)` equal buckets and checks which contain a gap
/// of weight at least `weight_floor`.
pub fn bucket_coverage<T: Real>(
    spec: &GapSpectrum<T>,
    band: &BandSpec<T>,
    weight_floor: T,
) -> Result<CoverageReport<T>> {
    if weight_floor < T::zero() {
        return Err(Error::param("weight_floor", "must be non-negative"));
    }
    let freqs: Vec<T> = spec
        .gaps
        .iter()
        .filter(|g| g.weight >= weight_floor)
        .map(|g| g.frequency)
        .collect();
    Ok(coverage_of_frequencies(&freqs, band, weight_floor))
}

/// Coverage of an explicit sorted list of qualifying gap frequencies.
pub fn coverage_of_frequencies<T: Real>(freqs: &[T], band: &BandSpec<T>, weight_floor: T) -> CoverageReport<T> {
    let n = band.n_buckets();
    let lo = band.omega_min;
    let hi = band.omega_max();
    if freqs.is_empty() {
        return CoverageReport {
            n_buckets: n,
            covered_fraction: T::zero(),
            max_detuning: band.delta_omega,
            weight_floor,
        };
    }
    let width = band.delta_omega / T::from_usize_exact(n);
    let mut covered = vec![false; n];
    for &f in freqs.iter().filter(|&&f| f >= lo && f <= hi) {
        let k = ((f - lo) / width).floor().as_f64() as usize;
        covered[k.min(n - 1)] = true;
    }
    let covered_fraction = T::from_usize_exact(covered.iter().filter(|&&c| c).count()) / T::from_usize_exact(n);

    // distance to the nearest gap is piecewise linear; its maximum over the
    // band sits at an endpoint or at a midpoint between consecutive gaps
    let nearest = |w: T| {
        freqs
            .iter()
            .map(|&f| (w - f).abs())
            .fold((w - freqs[0]).abs(), |acc, x| acc.min(x))
    };
    let mut max_detuning = nearest(lo).max(nearest(hi));
    for pair in freqs.windows(2) {
        let mid = T::lit(0.5) * (pair[0] + pair[1]);
        if mid > lo && mid < hi {
            max_detuning = max_detuning.max(nearest(mid));
        }
    }
    CoverageReport {
        n_buckets: n,
        covered_fraction,
        max_detuning,
        weight_floor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;

    fn band(r: f64) -> BandSpec<f64> {
        BandSpec::from_ratio(2.0 * std::f64::consts::PI * 1e8, r, 2.0 * std::f64::consts::PI * 1e5, 1).unwrap()
    }

    #[test]
    fn band_validation() {
        assert!(BandSpec::new(1.0, 1.0, 0.0, 1).is_err());
        assert!(BandSpec::new(1.0, 1.0, 0.1, 0).is_err());
        assert!(BandSpec::new(0.05, 1.0, 0.1, 1).is_err());
        let b = BandSpec::new(100.0, 40.0, 5.0, 2).unwrap();
        assert_eq!(b.r(), 4.0);
        assert_eq!(b.bucket_width(), 10.0);
        assert_eq!(b.n_buckets(), 4);
    }

    #[test]
    fn hopping_formulas() {
        let b = BandSpec::new(2.0, 2.0, 0.25, 1).unwrap();
        let p = band_to_ssh_params(&b).unwrap();
        assert_eq!((p.a_half, p.b_half, p.t1, p.t2), (1.0, 2.0, 1.5, 0.5));
        assert_eq!(p.dim(), 8);
    }

    #[test]
    fn ratio_eight_gives_four_cells() {
        let b = BandSpec::new(2.0 * std::f64::consts::PI * 1e8, 100.0, 12.5, 1).unwrap();
        let p = band_to_ssh_params(&b).unwrap();
        assert_eq!(p.cells, 4);
        assert_eq!(p.a_half, b.omega_min / 2.0);
        assert_eq!(p.b_half, (b.omega_min + 100.0) / 2.0);
    }

    #[test]
    fn narrow_band_rejected() {
        let b = BandSpec::new(10.0, 0.5, 1.0, 1).unwrap();
        assert!(matches!(band_to_ssh_params(&b), Err(Error::BandTooNarrow { .. })));
    }

    #[test]
    fn power_of_two_rounding() {
        assert_eq!(nearest_power_of_two(1.0), 2);
        assert_eq!(nearest_power_of_two(3.0), 4);
        assert_eq!(nearest_power_of_two(5.0), 4);
        assert_eq!(nearest_power_of_two(6.0), 8);
        assert_eq!(nearest_power_of_two(12.0), 16);
        assert_eq!(nearest_power_of_two(11.9), 8);
        for k in 1..10 {
            let p = 1usize << k;
            assert_eq!(nearest_power_of_two(p as f64), p.max(2));
        }
    }

    #[test]
    fn single_cell_periodic_dimer() {
        let p = SshParams::<f64>::from_band_edges(1, 1.0, 2.0);
        let h = build_ssh_matrix(&p);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        let (vals, _) = symmetric_eigh(&h).unwrap();
        assert!((vals[0] + 2.0).abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled_dimers() {
        let p = SshParams::<f64> {
            cells: 2,
            t1: 1.5,
            t2: 0.0,
            a_half: 1.5,
            b_half: 1.5,
            periodic: true,
        };
        let (vals, _) = symmetric_eigh(&build_ssh_matrix(&p)).unwrap();
        let expect = [-1.5, -1.5, 1.5, 1.5];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn long_chain_confined_to_bands() {
        let p = SshParams::<f64>::from_band_edges(32, 1.0, 2.0);
        let h = build_ssh_matrix(&p);
        assert_eq!(h, h.transpose());
        assert!((0..64).all(|i| h[(i, i)] == 0.0));
        let (vals, _) = symmetric_eigh(&h).unwrap();
        for v in vals.iter() {
            assert!(v.abs() >= 1.0 - 1e-9 && v.abs() <= 2.0 + 1e-9, "{v}");
        }
        // analytic dispersion |t1 + t2 e^{ik}| on k = 2 pi j / L
        let mut analytic: Vec<f64> = (0..32)
            .flat_map(|j| {
                let k = 2.0 * std::f64::consts::PI * j as f64 / 32.0;
                let e = (1.5f64 * 1.5 + 0.25 + 2.0 * 1.5 * 0.5 * k.cos()).sqrt();
                [e, -e]
            })
            .collect();
        analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, a) in vals.iter().zip(analytic) {
            assert!((v - a).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_unitary_and_deterministic() {
        let u = sample_haar_unitary::<f64>(2, 11).unwrap();
        assert!(unitarity_defect(&u) < 1e-12);
        let a = sample_haar_unitary::<f64>(16, 3).unwrap();
        let b = sample_haar_unitary::<f64>(16, 3).unwrap();
        assert_eq!(a, b);
        assert!(unitarity_defect(&a) < 1e-12);
        assert!(sample_haar_unitary::<f64>(1, 3).is_err());
    }

    #[test]
    fn haar_second_moment() {
        let samples = 2000;
        let vals: Vec<f64> = (0..samples)
            .map(|s| sample_haar_unitary::<f64>(16, derive_seed(99, &[s])).unwrap()[(0, 0)].norm_sqr())
            .collect();
        let mean = vals.iter().sum::<f64>() / samples as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        assert!((mean - 1.0 / 16.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn popcount_generator() {
        let z = signal_generator_diagonal::<f64>(16);
        let expect = [
            4.0, 2.0, 2.0, 0.0, 2.0, 0.0, 0.0, -2.0, 2.0, 0.0, 0.0, -2.0, 0.0, -2.0, -2.0, -4.0,
        ];
        assert_eq!(z.as_slice(), &expect);
        let inst = make_control_instance(&band(16.0), 5).unwrap();
        assert_eq!((inst.d, inst.n), (16, 4));
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(inst.z_single[(i, i)].re, *e);
        }
    }

    #[test]
    fn conjugation_preserves_spectrum() {
        let b = band(32.0);
        let inst = make_control_instance(&b, 1234).unwrap();
        let (direct, _) = hermitian_eigh(&inst.g_single).unwrap();
        let scale = inst.eigvals.amax();
        for (a, e) in direct.iter().zip(inst.eigvals.iter()) {
            assert!((a - e).abs() <= 1e-10 * scale);
        }
        assert!(inst.reconstruction_error() < 1e-10);
        assert!(crate::linalg::hermiticity_defect(&inst.g_single) <= 1e-12 * inst.g_single.norm());
    }

    #[test]
    fn identity_conjugation_is_exact() {
        let inst = make_control_instance(&band(8.0), 3).unwrap().unconjugated().unwrap();
        assert_eq!(inst.g_single, to_complex(&inst.g_ssh));
    }

    #[test]
    fn instance_determinism() {
        let a = make_control_instance(&band(16.0), 77).unwrap();
        let b = make_control_instance(&band(16.0), 77).unwrap();
        assert_eq!(a.g_single, b.g_single);
        assert_eq!(a.eigvals, b.eigvals);
        assert_eq!(a.eigvecs, b.eigvecs);
    }

    #[test]
    fn identity_observable_has_zero_variance() {
        let s = transversality_stats(&band(16.0), 1, 64, Observable::Identity, &[]).unwrap();
        assert!((s.sample_mean - 1.0).abs() < 1e-12);
        assert!(s.sample_var < 1e-24);
    }

    #[test]
    fn too_few_eigenvectors_refused() {
        assert!(matches!(
            transversality_stats(&band(16.0), 1, 29, Observable::SignalGenerator, &[]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn two_level_gap() {
        let z = CMatrix::<f64>::from_row_slice(2, 2, &[cplx(0.0), cplx(0.3), cplx(0.3), cplx(0.0)]);
        let inst = ControlInstance::<f64>::two_level(2.0, z).unwrap();
        let spec = gap_spectrum(&inst);
        assert_eq!(spec.gaps.len(), 1);
        assert!((spec.gaps[0].frequency - 2.0).abs() < 1e-15);
        assert!((spec.gaps[0].weight - 0.09).abs() < 1e-15);
    }

    #[test]
    fn pair_count_and_ordering() {
        let inst = make_control_instance(&band(16.0), 8).unwrap();
        let spec = gap_spectrum(&inst);
        assert_eq!(spec.gaps.len(), 120);
        assert!(spec.gaps.windows(2).all(|w| w[0].frequency <= w[1].frequency));
        assert!(spec.gaps.iter().all(|g| g.frequency >= 0.0 && g.weight >= 0.0));
    }

    #[test]
    fn conjugation_activates_interband_weights() {
        let inst = make_control_instance(&band(16.0), 21).unwrap();
        let bare = gap_spectrum(&inst.unconjugated().unwrap());
        let dressed = gap_spectrum(&inst);
        let active = |s: &GapSpectrum<f64>| s.gaps.iter().filter(|g| g.interband && g.weight > 1e-12).count();
        let interband = dressed.gaps.iter().filter(|g| g.interband).count();
        assert!(active(&bare) <= interband);
        assert_eq!(active(&dressed), interband);
    }

    #[test]
    fn perfect_tiling() {
        let b = BandSpec::new(100.0, 40.0, 10.0, 1).unwrap();
        let gaps: Vec<Gap<f64>> = (0..4)
            .map(|k| Gap {
                frequency: 105.0 + 10.0 * k as f64,
                weight: 1.0,
                lower: 0,
                upper: 1,
                interband: true,
            })
            .collect();
        let rep = bucket_coverage(&GapSpectrum { gaps }, &b, 0.0).unwrap();
        assert_eq!(rep.n_buckets, 4);
        assert_eq!(rep.covered_fraction, 1.0);
        assert!((rep.max_detuning - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_coverage() {
        let b = BandSpec::new(100.0, 40.0, 10.0, 1).unwrap();
        let rep = bucket_coverage(&GapSpectrum { gaps: vec![] }, &b, 0.0).unwrap();
        assert_eq!(rep.covered_fraction, 0.0);
        assert_eq!(rep.max_detuning, 40.0);
        let out_of_band = GapSpectrum {
            gaps: vec![Gap {
                frequency: 10.0,
                weight: 1.0,
                lower: 0,
                upper: 1,
                interband: true,
            }],
        };
        assert_eq!(bucket_coverage(&out_of_band, &b, 0.0).unwrap().covered_fraction, 0.0);
        assert!(bucket_coverage(&out_of_band, &b, -1.0).is_err());
    }
}
