use super::image::ComplexImage;
use crate::error::{MolError, Result};

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: ComplexImage,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a Hermitian positive definite operator given as a
/// closure. Stops when `||rhs - A x|| <= tol * ||rhs||`.
pub fn conjugate_gradient<F>(apply: F, rhs: &ComplexImage, tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: Fn(&ComplexImage) -> ComplexImage,
{
    let (h, w) = rhs.shape();
    let rhs_norm = rhs.norm();
    let mut x = ComplexImage::zeros(h, w);
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs_old = r.norm_sqr();
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.real_inner(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(MolError::Solver {
                iterations: it,
                residual: rs_old.sqrt() / rhs_norm,
            });
        }
        let step = rs_old / pap;
        x.axpy(step, &p);
        r.axpy(-step, &ap);
        let rs_new = r.norm_sqr();
        let rel = rs_new.sqrt() / rhs_norm;
        if rel <= tol {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = rs_new / rs_old;
        p.scale(beta);
        p.axpy(1.0, &r);
        rs_old = rs_new;
    }
    Err(MolError::Solver {
        iterations: max_iter,
        residual: rs_old.sqrt() / rhs_norm,
    })
}
