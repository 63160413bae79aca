//! Preconditioned conjugate gradients on full-grid node vectors.

use crate::error::{BestIterate, Error, Result};
use crate::fields::Field;

/// Matrix-free operator on node vectors, with the structural flags the solver
/// relies on.
pub struct LinearOperator<'a> {
    apply: Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'a>,
    pub symmetric: bool,
    pub definite: bool,
}

impl<'a> LinearOperator<'a> {
    pub fn new(
        apply: impl Fn(&[f64], &mut [f64]) + Sync + 'a,
        symmetric: bool,
        definite: bool,
    ) -> Self {
        LinearOperator {
            apply: Box::new(apply),
            symmetric,
            definite,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.apply)(x, out)
    }
}

impl std::fmt::Debug for LinearOperator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearOperator")
            .field("symmetric", &self.symmetric)
            .field("definite", &self.definite)
            .finish_non_exhaustive()
    }
}

/// Converged iterate of [`cg_solve`].
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Field,
    pub iterations: usize,
    /// Relative residual `‖b − Ax‖/‖b‖`, recomputed with an explicit apply.
    pub residual: f64,
}

/// Solves `A x = rhs` (Euclidean pairing on node values) by plain CG.
pub fn cg_solve(op: &LinearOperator<'_>, rhs: &Field, tol: f64, max_iter: usize) -> Result<CgSolution> {
    if !(op.symmetric && op.definite) {
        return Err(Error::usage("conjugate gradients need a symmetric definite operator"));
    }
    let mut x = vec![0.0; rhs.values().len()];
    let stats = pcg(
        |v, out| op.apply(v, out),
        |r, z| z.copy_from_slice(r),
        rhs.values(),
        &mut x,
        tol,
        max_iter,
    )?;
    Ok(CgSolution {
        x: Field::from_raw(rhs.region(), x),
        iterations: stats.iterations,
        residual: stats.residual,
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG starting from the content of `x`. Convergence is declared
/// on the true residual `‖b − Ax‖₂ ≤ tol·‖b‖₂`.
pub(crate) fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let len = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = tol * bnorm;
    let mut r = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut ap = vec![0.0; len];

    let true_residual = |apply: &mut dyn FnMut(&[f64], &mut [f64]), x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        apply(x, ap);
        for i in 0..len {
            r[i] = b[i] - ap[i];
        }
        dot(r, r).sqrt()
    };

    let mut rnorm = true_residual(&mut apply, x, &mut r, &mut ap);
    let mut iterations = 0;
    let mut best = rnorm;
    // Each pass restarts from the true residual; restarts only happen when the
    // recursive residual drifts below the target before the true one does.
    while rnorm > target {
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            if iterations >= max_iter {
                return Err(Error::Solver {
                    iterations,
                    residual: best / bnorm,
                    target: tol,
                    best: BestIterate(x.to_vec()),
                });
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            iterations += 1;
            if !(pap > 0.0) {
                // Breakdown: the operator is not definite on this direction.
                return Err(Error::Solver {
                    iterations,
                    residual: rnorm / bnorm,
                    target: tol,
                    best: BestIterate(x.to_vec()),
                });
            }
            let alpha = rz / pap;
            for i in 0..len {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rec = dot(&r, &r).sqrt();
            if rec <= target {
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..len {
                p[i] = z[i] + beta * p[i];
            }
        }
        let prev = rnorm;
        rnorm = true_residual(&mut apply, x, &mut r, &mut ap);
        best = best.min(rnorm);
        if rnorm > target && rnorm >= 0.5 * prev {
            // No progress between restarts: round-off floor reached.
            return Err(Error::Solver {
                iterations,
                residual: rnorm / bnorm,
                target: tol,
                best: BestIterate(x.to_vec()),
            });
        }
    }
    Ok(CgStats {
        iterations,
        residual: rnorm / bnorm,
    })
}
