//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::scalar::Scalar;

/// `‖v‖∞`, zero for an empty vector.
pub fn norm_inf<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Largest absolute entry of a matrix, zero when empty.
pub fn mat_norm_max<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Induced ∞-norm (max row sum).
pub fn mat_norm_inf<T: Scalar>(m: &DMatrix<T>) -> T {
    (0..m.nrows()).fold(T::zero(), |acc, i| {
        acc.max(m.row(i).iter().fold(T::zero(), |s, x| s + x.abs()))
    })
}

/// Largest entry, `-inf` for an empty vector.
pub fn max_entry<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(-T::infinity(), |acc, x| acc.max(*x))
}

pub fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite_value())
}

/// Stacks the rows of `blocks` (all with `ncols` columns) into one matrix.
pub fn vstack<T: Scalar>(blocks: &[&DMatrix<T>], ncols: usize) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        if b.nrows() > 0 {
            out.rows_mut(r, b.nrows()).copy_from(*b);
            r += b.nrows();
        }
    }
    out
}

pub fn vcat<T: Scalar>(parts: &[&DVector<T>]) -> DVector<T> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

/// Selects the given rows of `m`.
pub fn select_rows<T: Scalar>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (k, &i) in rows.iter().enumerate() {
        out.row_mut(k).copy_from(&m.row(i));
    }
    out
}

/// Singular-value summary of a matrix.
#[derive(Clone, Debug)]
pub struct RankInfo<T> {
    pub rank: usize,
    pub sigma_max: T,
    /// Smallest singular value among `min(rows, cols)`; zero for an empty matrix.
    pub sigma_min: T,
}

/// Numerical rank with relative threshold `rel_tol · σ_max`.
pub fn rank_info<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> RankInfo<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankInfo { rank: 0, sigma_max: T::zero(), sigma_min: T::zero() };
    }
    let sv = m.clone().svd(false, false).singular_values;
    let sigma_max = sv.iter().fold(T::zero(), |a, s| a.max(*s));
    let sigma_min = sv.iter().fold(T::infinity(), |a, s| a.min(*s));
    let thresh = rel_tol * sigma_max;
    let rank = if sigma_max > T::zero() { sv.iter().filter(|s| **s > thresh).count() } else { 0 };
    RankInfo { rank, sigma_max, sigma_min }
}

/// Moore–Penrose pseudoinverse, discarding singular values `≤ rel_tol · σ_max`.
/// Returns the pseudoinverse together with the numerical rank.
pub fn pinv<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> (DMatrix<T>, usize) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), 0);
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, s| a.max(*s));
    let thresh = rel_tol * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > thresh && sigma_max > T::zero() {
            rank += 1;
            let inv = T::one() / *s;
            // out += v_k * inv * u_kᵀ
            for i in 0..c {
                let vik = vt[(k, i)] * inv;
                for j in 0..r {
                    out[(i, j)] += vik * u[(j, k)];
                }
            }
        }
    }
    (out, rank)
}

/// Least-squares solution of minimal norm, `A⁺ b`.
pub fn lstsq<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>, rel_tol: T) -> DVector<T> {
    let (p, _) = pinv(a, rel_tol);
    p * b
}

/// Eigenvalues of a general real square matrix (real Schur form).
pub fn eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().complex_eigenvalues().iter().cloned().collect()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * T::lit(0.5);
    let mut ev: Vec<T> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Orthonormal basis (columns) of the range of a symmetric projector `p`.
pub fn projector_range_basis<T: Scalar>(p: &DMatrix<T>) -> DMatrix<T> {
    let n = p.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (p + p.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let keep: Vec<usize> =
        (0..n).filter(|&i| eig.eigenvalues[i] > T::lit(0.5)).collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.column_mut(c).copy_from(&eig.eigenvectors.column(i));
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Roots of a monic polynomial via Durand–Kerner, used as an oracle
    /// independent of the Schur-based eigenvalue routine.
    fn durand_kerner(coeffs: &[f64]) -> Vec<Complex<f64>> {
        // p(z) = z^n + c[n-1] z^{n-1} + ... + c[0]
        let n = coeffs.len();
        let eval = |z: Complex<f64>| {
            let mut acc = Complex::new(1.0, 0.0);
            for k in (0..n).rev() {
                acc = acc * z + coeffs[k];
            }
            acc
        };
        let seed = Complex::new(0.4, 0.9);
        let mut roots: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32)).collect();
        for _ in 0..2000 {
            let prev = roots.clone();
            for i in 0..n {
                let mut denom = Complex::new(1.0, 0.0);
                for j in 0..n {
                    if i != j {
                        denom *= roots[i] - roots[j];
                    }
                }
                let ri = roots[i];
                roots[i] = ri - eval(ri) / denom;
            }
            let delta: f64 =
                roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if delta < 1e-15 {
                break;
            }
        }
        roots
    }

    fn companion(coeffs: &[f64]) -> DMatrix<f64> {
        let n = coeffs.len();
        let mut c = DMatrix::zeros(n, n);
        for i in 1..n {
            c[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            c[(i, n - 1)] = -coeffs[i];
        }
        c
    }

    fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
        // monic coefficients, low order first, leading 1 implicit
        let mut p = vec![1.0];
        for r in roots {
            let mut next = vec![0.0; p.len() + 1];
            for (k, c) in p.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= r * c;
            }
            p = next;
        }
        p.pop();
        p
    }

    #[test]
    fn eigenvalues_match_companion_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // well-separated real roots so the polynomial is well conditioned
            let n = 10;
            let mut roots: Vec<f64> =
                (0..n).map(|k| k as f64 * 0.7 - 3.0 + rng.random_range(-0.1..0.1)).collect();
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let coeffs = poly_from_roots(&roots);
            let mut ev: Vec<f64> = eigenvalues(&companion(&coeffs)).iter().map(|z| z.re).collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in ev.iter().zip(&roots) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn complex_eigenvalues_match_durand_kerner() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dk = durand_kerner(&coeffs);
            let ev = eigenvalues(&companion(&coeffs));
            for z in &dk {
                let best = ev.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-7, "root {z} unmatched (best {best})");
            }
        }
    }

    #[test]
    fn pinv_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let (p, rank) = pinv(&m, 1e-10);
        assert_eq!(rank, 1);
        let back = &m * &p * &m;
        assert!((back - &m).abs().max() < 1e-12);
    }

    #[test]
    fn projector_basis_dimension() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
        assert_eq!(projector_range_basis(&p).ncols(), 2);
    }
}
