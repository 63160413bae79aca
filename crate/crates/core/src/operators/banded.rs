//! Banded Cholesky factorization of 5-point operators restricted to a node
//! subset.

use crate::domain::Domain;
use crate::error::{Error, Result};

/// `LLᵀ` factor of a symmetric positive definite 5-point operator, with the
/// unknowns numbered row-major so the half-bandwidth is at most `n + 1`.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    /// Grid index of each unknown.
    nodes: Vec<usize>,
    bw: usize,
    /// Row `r` holds `L[r][r−bw..=r]`.
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Assembles the matrix by probing `apply` with five colorings of the grid
    /// (`(i + 2j) mod 5`), which separates every 5-point column, then factors.
    pub(crate) fn from_stencil(
        d: &Domain,
        unknown: impl Fn(usize) -> bool,
        mut apply: impl FnMut(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let len = d.len();
        let s = d.n() + 1;
        let mut slot = vec![usize::MAX; len];
        let nodes: Vec<usize> = (0..len).filter(|&k| unknown(k)).collect();
        for (r, &k) in nodes.iter().enumerate() {
            slot[k] = r;
        }
        let mut bw = 0;
        for (r, &k) in nodes.iter().enumerate() {
            let below = [(k % s > 0).then(|| k - 1), k.checked_sub(s)];
            for nb in below.into_iter().flatten() {
                if slot[nb] != usize::MAX {
                    bw = bw.max(r - slot[nb]);
                }
            }
        }
        let width = bw + 1;
        let m = nodes.len();
        let mut band = vec![0.0; m * width];
        let mut probe = vec![0.0; len];
        let mut out = vec![0.0; len];
        for color in 0..5 {
            for (k, p) in probe.iter_mut().enumerate() {
                let (i, j) = (k % s, k / s);
                *p = if slot[k] != usize::MAX && (i + 2 * j) % 5 == color { 1.0 } else { 0.0 };
            }
            apply(&probe, &mut out);
            for &k in &nodes {
                if probe[k] == 0.0 {
                    continue;
                }
                let c = slot[k];
                let (i, j) = (k % s, k / s);
                let neighbors = [
                    Some(k),
                    (i > 0).then(|| k - 1),
                    (j > 0).then(|| k - s),
                    (i + 1 < s).then(|| k + 1),
                    (j + 1 < s).then(|| k + s),
                ];
                for nb in neighbors.into_iter().flatten() {
                    if slot[nb] != usize::MAX && slot[nb] >= c {
                        let r = slot[nb];
                        band[r * width + (c + bw - r)] = out[nb];
                    }
                }
            }
        }
        // In-place band Cholesky.
        for r in 0..m {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                let clo = c.saturating_sub(bw).max(lo);
                let mut sum = band[r * width + (c + bw - r)];
                for t in clo..c {
                    sum -= band[r * width + (t + bw - r)] * band[c * width + (t + bw - c)];
                }
                if c == r {
                    if !(sum > 0.0) {
                        return Err(Error::usage("banded factorization: operator is not positive definite"));
                    }
                    band[r * width + bw] = sum.sqrt();
                } else {
                    band[r * width + (c + bw - r)] = sum / band[c * width + bw];
                }
            }
        }
        Ok(BandedCholesky { nodes, bw, band })
    }

    /// Solves `A x = b` on the unknowns; `x` is zero elsewhere.
    pub(crate) fn solve(&self, b: &[f64], x: &mut [f64]) {
        let m = self.nodes.len();
        let bw = self.bw;
        let width = bw + 1;
        let mut y: Vec<f64> = self.nodes.iter().map(|&k| b[k]).collect();
        for r in 0..m {
            let lo = r.saturating_sub(bw);
            let row = &self.band[r * width..(r + 1) * width];
            let mut sum = y[r];
            for c in lo..r {
                sum -= row[c + bw - r] * y[c];
            }
            y[r] = sum / row[bw];
        }
        for r in (0..m).rev() {
            y[r] /= self.band[r * width + bw];
            let yr = y[r];
            let lo = r.saturating_sub(bw);
            let row = &self.band[r * width..(r + 1) * width];
            for c in lo..r {
                y[c] -= row[c + bw - r] * yr;
            }
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &k) in self.nodes.iter().enumerate() {
            x[k] = y[r];
        }
    }
}
