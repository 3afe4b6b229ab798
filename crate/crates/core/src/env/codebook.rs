//! Oversampled 2-D DFT beam codebooks.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Rows of `(1/√N)·(B_v ⊗ B_h)`. Element index is `nv·N_h + nh`; beam index
/// is `rv·(N_h ϑ_h) + rh`.
pub fn dft_codebook(n_h: usize, n_v: usize, os_h: usize, os_v: usize) -> Vec<Vec<Complex64>> {
    assert!(n_h >= 1 && n_v >= 1 && os_h >= 1 && os_v >= 1, "codebook parameters must be positive");
    let n = n_h * n_v;
    let (mh, mv) = (n_h * os_h, n_v * os_v);
    let norm = 1.0 / (n as f64).sqrt();
    let mut beams = Vec::with_capacity(mh * mv);
    for rv in 0..mv {
        for rh in 0..mh {
            let mut b = Vec::with_capacity(n);
            for nv in 0..n_v {
                for nh in 0..n_h {
                    let ph = 2.0 * PI * (rh * nh) as f64 / mh as f64 + 2.0 * PI * (rv * nv) as f64 / mv as f64;
                    b.push(Complex64::from_polar(norm, ph));
                }
            }
            beams.push(b);
        }
    }
    beams
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_element_rows() {
        let cb = dft_codebook(2, 1, 1, 1);
        assert_eq!(cb.len(), 2);
        let s = 2f64.sqrt();
        assert!((cb[0][0] * s - 1.0).norm() < 1e-15 && (cb[0][1] * s - 1.0).norm() < 1e-15);
        assert!((cb[1][0] * s - 1.0).norm() < 1e-15 && (cb[1][1] * s + 1.0).norm() < 1e-15);
    }

    #[test]
    fn unit_norm_and_size() {
        let cb = dft_codebook(4, 2, 2, 1);
        assert_eq!(cb.len(), 4 * 2 * 2);
        for b in &cb {
            let n: f64 = b.iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let one = dft_codebook(1, 1, 1, 1);
        assert_eq!(one, vec![vec![Complex64::new(1.0, 0.0)]]);
    }

    #[test]
    fn non_oversampled_beams_are_orthogonal() {
        let cb = dft_codebook(4, 2, 1, 1);
        for i in 0..cb.len() {
            for j in 0..cb.len() {
                let ip: Complex64 = cb[i].iter().zip(&cb[j]).map(|(a, b)| a.conj() * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip.norm() - want).abs() < 1e-12);
            }
        }
    }
}
