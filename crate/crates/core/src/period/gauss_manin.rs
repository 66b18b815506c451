use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{hermitian_metric, HolomorphicLatticeFamily};
use crate::error::Result;
use crate::lattice::{lattice_frame_coefficients, FiberTwoForm, SkewForm};
use crate::linalg::{max_abs, RMat};

/// Outcome of sampling the frame coefficients `P(y)` of a fiberwise 2-form.
#[derive(Debug, Clone, Serialize)]
pub struct GaussManinReport {
    /// `max_y ‖P(y) − P̄‖_max`.
    pub max_deviation: f64,
    /// Grid mean `P̄`, row-major.
    #[serde(serialize_with = "crate::io::ser_rmat")]
    pub mean: RMat,
    pub tolerance: f64,
    pub constant: bool,
    pub samples: usize,
}

/// Evaluates `P(y) = ω_y(v_i(y), v_j(y))` at every grid point and measures
/// how far it moves. A nonconstant result is a report outcome, not an error.
pub fn gauss_manin_constancy<F>(
    family: &dyn HolomorphicLatticeFamily,
    form_family: F,
    grid: &[Vec<Complex64>],
    tolerance: f64,
) -> Result<GaussManinReport>
where
    F: Fn(&[Complex64]) -> Result<FiberTwoForm> + Sync,
{
    let samples: Vec<RMat> = grid
        .par_iter()
        .map(|y| {
            let t = family.basis(y)?;
            let form = form_family(y)?;
            Ok(lattice_frame_coefficients(&form, &t))
        })
        .collect::<Result<_>>()?;
    let dim = 2 * family.n();
    // sequential reduction keeps the mean independent of the thread count
    let mut mean = DMatrix::zeros(dim, dim);
    for p in &samples {
        mean += p;
    }
    mean /= samples.len().max(1) as f64;
    let max_deviation = samples.iter().map(|p| max_abs(&(p - &mean))).fold(0.0, f64::max);
    Ok(GaussManinReport {
        max_deviation,
        mean,
        tolerance,
        constant: max_deviation <= tolerance,
        samples: samples.len(),
    })
}

/// Fiber restrictions of the semi-flat form of `(family, Q)`: the flat
/// metric `H(y)` from the period map at each base point.
pub fn semiflat_fiber_forms<'a>(
    family: &'a dyn HolomorphicLatticeFamily,
    q: &'a SkewForm,
) -> impl Fn(&[Complex64]) -> Result<FiberTwoForm> + Sync + 'a {
    move |y| {
        let t = family.basis(y)?;
        Ok(FiberTwoForm::from_hermitian(hermitian_metric(&t, q)?.h))
    }
}
