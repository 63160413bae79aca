//! Two-dimensional DST-I on the interior nodes, used to build fast
//! preconditioners diagonal in the eigenbasis of the Dirichlet 5-point Laplacian.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::domain::Domain;

/// Sine transform over the `(n−1)²` interior nodes of a domain.
#[derive(Clone)]
pub(crate) struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    /// Eigenvalues of `−Δ_h` with Dirichlet data, `Λ_ij = λ_i + λ_j`.
    lambda: Vec<f64>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub(crate) fn new(domain: &Domain) -> Self {
        let n = domain.n();
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        let h = domain.h();
        let l1: Vec<f64> = (1..n)
            .map(|i| 4.0 / (h * h) * (i as f64 * PI * h / 2.0).sin().powi(2))
            .collect();
        let m = n - 1;
        let mut lambda = vec![0.0; m * m];
        for b in 0..m {
            for a in 0..m {
                lambda[b * m + a] = l1[a] + l1[b];
            }
        }
        SineTransform { n, fft, lambda }
    }

    /// Dirichlet Laplacian eigenvalues in transform order.
    pub(crate) fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Unnormalized DST-I along both axes, in place on a packed `(n−1)²` array.
    /// Applying it twice multiplies by `(n/2)²`.
    fn transform(&self, data: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        let m = n - 1;
        let mut line = vec![0.0; m];
        // rows
        for r in 0..m {
            self.dst1(&mut data[r * m..(r + 1) * m], buf, scratch);
        }
        // columns
        for c in 0..m {
            for r in 0..m {
                line[r] = data[r * m + c];
            }
            self.dst1(&mut line, buf, scratch);
            for r in 0..m {
                data[r * m + c] = line[r];
            }
        }
    }

    fn dst1(&self, x: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        buf[0] = Complex64::new(0.0, 0.0);
        buf[n] = Complex64::new(0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1] = Complex64::new(v, 0.0);
            buf[2 * n - 1 - j] = Complex64::new(-v, 0.0);
        }
        self.fft.process_with_scratch(buf, scratch);
        for (k, v) in x.iter_mut().enumerate() {
            *v = -0.5 * buf[k + 1].im;
        }
    }

    /// Solves `Σ(Λ) x = r` on interior nodes, where `Σ(Λ)` is the diagonal
    /// symbol `symbol(Λ_ij)`; node vectors are full-grid, boundary entries are
    /// left zero.
    pub(crate) fn apply_inverse_symbol(&self, symbol: &[f64], r: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = n - 1;
        let s = n + 1;
        let mut packed = vec![0.0; m * m];
        for j in 1..n {
            packed[(j - 1) * m..j * m].copy_from_slice(&r[j * s + 1..j * s + n]);
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        self.transform(&mut packed, &mut buf, &mut scratch);
        let norm = (2.0 / n as f64).powi(2);
        for (p, sym) in packed.iter_mut().zip(symbol) {
            *p *= norm / sym;
        }
        self.transform(&mut packed, &mut buf, &mut scratch);
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 1..n {
            out[j * s + 1..j * s + n].copy_from_slice(&packed[(j - 1) * m..j * m]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainConfig};
    use crate::operators::dirichlet_stiffness_apply;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverts_dirichlet_stiffness() {
        let d = build_domain(&DomainConfig {
            n_cells: 16,
            ..Default::default()
        })
        .unwrap();
        let st = SineTransform::new(&d);
        let h2 = d.h() * d.h();
        let symbol: Vec<f64> = st.eigenvalues().iter().map(|l| h2 * l).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![0.0; d.len()];
        for k in 0..d.len() {
            if d.is_mech_unknown(k) {
                x[k] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut b = vec![0.0; d.len()];
        dirichlet_stiffness_apply(&d, &x, &mut b);
        let mut y = vec![0.0; d.len()];
        st.apply_inverse_symbol(&symbol, &b, &mut y);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}
