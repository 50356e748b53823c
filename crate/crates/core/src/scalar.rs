//! Scalar abstraction shared by every numerical module.
//!
//! The simulation math is written once against [`Real`] and instantiated for
//! `f64` (the production precision) and `f32` (smoke-level checks only; the
//! default frequency scales of the harness need double precision).

use nalgebra::{Complex, RealField};
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the simulation kernels.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal or computed constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{i theta}`.
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

pub fn cplx<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}
