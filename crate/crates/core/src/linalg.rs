//! Complex matrix helpers shared by the beamforming and beampattern modules.
//!
//! Thin layer over `nalgebra`: Hermitian cleanup, PSD projection, Cholesky
//! with the jitter rule, log-determinants of Hermitian positive definite
//! matrices, and a deterministic full SVD (phase-normalized singular vectors
//! plus completion of the left basis to a square unitary).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub type C64 = nalgebra::Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO_C: C64 = C64::new(0.0, 0.0);
pub const ONE_C: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// (A + A^H) / 2.
pub fn hermitize(a: &CMat) -> CMat {
    let mut h = a.adjoint();
    h += a;
    h *= cx(0.5, 0.0);
    h
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Returns `(eigenvalues, eigenvectors)` with columns matching the values.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(a).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitize(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}

/// Projects a matrix onto the Hermitian PSD cone (negative eigenvalues clipped).
pub fn psd_project(a: &CMat) -> CMat {
    let (values, vectors) = hermitian_eigen(a);
    let n = values.len();
    let clipped = CMat::from_fn(n, n, |r, c| {
        if r == c {
            cx(values[r].max(0.0), 0.0)
        } else {
            ZERO_C
        }
    });
    &vectors * clipped * vectors.adjoint()
}

/// Cholesky factor `Q` with `A_jittered = Q Q^H`, applying the jitter rule:
/// when the smallest eigenvalue is below `eps = 1e-10 * trace(A) / n`, add
/// `eps * I` before factoring. Escalates the jitter tenfold if the factor
/// still fails (at most a few rounds; never observed past the first).
///
/// Returns `(Q, jitter_used)`.
pub fn cholesky_with_jitter(a: &CMat) -> crate::Result<(CMat, f64)> {
    let n = a.nrows();
    let h = hermitize(a);
    let trace: f64 = (0..n).map(|i| h[(i, i)].re).sum();
    let eps = 1e-10 * trace / n as f64;
    let mut jitter = if min_eigenvalue(&h) < eps { eps } else { 0.0 };
    for _ in 0..8 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += cx(jitter, 0.0);
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol.l(), jitter));
        }
        jitter = if jitter == 0.0 { eps.max(1e-300) } else { jitter * 10.0 };
    }
    Err(crate::Error::Numeric(format!(
        "cholesky failed even with jitter {jitter:.3e}"
    )))
}

/// Cholesky of a Hermitian positive definite matrix (no jitter).
pub fn hpd_cholesky(a: &CMat) -> crate::Result<Cholesky<C64, Dyn>> {
    Cholesky::new(hermitize(a))
        .ok_or_else(|| crate::Error::Numeric("matrix is not positive definite".into()))
}

/// log det of a Hermitian positive definite matrix via Cholesky.
pub fn logdet_hpd(a: &CMat) -> crate::Result<f64> {
    let chol = hpd_cholesky(a)?;
    let l = chol.l();
    Ok(2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Deterministic full SVD of `t` (m x n, n <= m).
///
/// `u_full` is m x m unitary whose first `n` columns are the left singular
/// vectors in descending singular-value order; `v` is n x n with matching
/// right singular vectors, so `t = u_full[:, :n] * diag(sigma) * v^H`.
/// Each singular-vector pair is phase-normalized so the first component of
/// the left vector above a small threshold is real positive; completion
/// columns are built from identity candidates by Gram-Schmidt.
pub struct FullSvd {
    pub u_full: CMat,
    pub sigma: Vec<f64>,
    pub v: CMat,
}

pub fn full_svd(t: &CMat) -> crate::Result<FullSvd> {
    let (m, n) = (t.nrows(), t.ncols());
    assert!(n <= m, "full_svd expects a tall matrix, got {m}x{n}");
    if n == 0 {
        return Ok(FullSvd {
            u_full: complete_unitary(&CMat::zeros(m, 0)),
            sigma: vec![],
            v: CMat::zeros(0, 0),
        });
    }
    let svd = t.clone().svd(true, true);
    let mut u = svd
        .u
        .ok_or_else(|| crate::Error::Numeric("svd did not return u".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| crate::Error::Numeric("svd did not return v_t".into()))?;
    let mut v = v_t.adjoint();
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();

    // Phase convention: first significant component of each left vector made
    // real positive; the matching right vector absorbs the same phase.
    for j in 0..n {
        let mut phase = ONE_C;
        for i in 0..m {
            let z = u[(i, j)];
            if z.norm() > 1e-12 {
                phase = z / cx(z.norm(), 0.0);
                break;
            }
        }
        let rot = phase.conj();
        for i in 0..m {
            u[(i, j)] *= rot;
        }
        for i in 0..n {
            v[(i, j)] *= rot;
        }
    }
    let u_full = complete_unitary(&u);
    Ok(FullSvd { u_full, sigma, v })
}

/// Completes a matrix with orthonormal columns to a square unitary by
/// Gram-Schmidt over identity candidate vectors (deterministic).
pub fn complete_unitary(thin: &CMat) -> CMat {
    let m = thin.nrows();
    let k = thin.ncols();
    let mut cols: Vec<CVec> = (0..k).map(|j| thin.column(j).into_owned()).collect();
    let mut candidate = 0usize;
    while cols.len() < m {
        assert!(candidate < m, "failed to complete orthonormal basis");
        let mut w = CVec::zeros(m);
        w[candidate] = ONE_C;
        candidate += 1;
        // Two rounds of classical Gram-Schmidt for numerical orthogonality.
        for _ in 0..2 {
            for c in &cols {
                let coef = c.dotc(&w);
                w -= c * coef;
            }
        }
        let norm = w.norm();
        if norm > 1e-8 {
            w /= cx(norm, 0.0);
            // Phase-normalize the completion column as well.
            for i in 0..m {
                let z = w[i];
                if z.norm() > 1e-12 {
                    let rot = z.conj() / cx(z.norm(), 0.0);
                    w *= rot;
                    break;
                }
            }
            cols.push(w);
        }
    }
    CMat::from_fn(m, m, |r, c| cols[c][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_cmat(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMat {
        let mut a = CMat::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                a[(i, j)] = cx(re, im);
            }
        }
        a
    }

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_cmat(&mut rng, 6, 6);
        let mut h = hermitize(&g);
        // Make it indefinite.
        for i in 0..6 {
            h[(i, i)] -= cx(3.0, 0.0);
        }
        let p = psd_project(&h);
        assert!(min_eigenvalue(&p) >= -1e-10);
        // Projection of a PSD matrix is (numerically) itself.
        let p2 = psd_project(&p);
        assert_relative_eq!((&p2 - &p).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn jittered_cholesky_reproduces_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_cmat(&mut rng, 8, 8);
        let h = &g * g.adjoint();
        let (q, jitter) = cholesky_with_jitter(&h).unwrap();
        assert_eq!(jitter, 0.0);
        assert!(((&q * q.adjoint()) - &h).norm() / h.norm() < 1e-12);

        // Rank-deficient: needs jitter but still factors.
        let thin = random_cmat(&mut rng, 8, 3);
        let low = &thin * thin.adjoint();
        let (q, jitter) = cholesky_with_jitter(&low).unwrap();
        assert!(jitter > 0.0);
        assert!(((&q * q.adjoint()) - &low).norm() / low.norm() < 1e-8);
    }

    #[test]
    fn logdet_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_cmat(&mut rng, 5, 5);
        let h = &g * g.adjoint() + CMat::identity(5, 5);
        let (vals, _) = hermitian_eigen(&h);
        let expect: f64 = vals.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(logdet_hpd(&h).unwrap(), expect, max_relative = 1e-10);
    }

    #[test]
    fn full_svd_reconstructs_and_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(m, n) in &[(8usize, 2usize), (8, 8), (5, 3), (4, 0)] {
            let t = random_cmat(&mut rng, m, n);
            let f = full_svd(&t).unwrap();
            assert_eq!(f.u_full.nrows(), m);
            assert_eq!(f.u_full.ncols(), m);
            let eye = (f.u_full.adjoint() * &f.u_full) - CMat::identity(m, m);
            assert!(eye.norm() < 1e-10, "u not unitary: {}", eye.norm());
            if n > 0 {
                let sig = CMat::from_fn(n, n, |i, j| {
                    if i == j {
                        cx(f.sigma[i], 0.0)
                    } else {
                        ZERO_C
                    }
                });
                let rec = f.u_full.columns(0, n) * sig * f.v.adjoint();
                assert!((rec - &t).norm() / t.norm() < 1e-12);
                // Descending order.
                for w in f.sigma.windows(2) {
                    assert!(w[0] >= w[1] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_svd_phase_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_cmat(&mut rng, 6, 2);
        let a = full_svd(&t).unwrap();
        let b = full_svd(&t).unwrap();
        assert_eq!(a.u_full, b.u_full);
        for j in 0..6 {
            // First significant entry of every column is real positive.
            let col = a.u_full.column(j);
            let first = col.iter().find(|z| z.norm() > 1e-12).unwrap();
            assert!(first.im.abs() < 1e-10 && first.re > 0.0);
        }
    }
}
