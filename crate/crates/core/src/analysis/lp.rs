//! Dense tableau simplex for `max cᵀy s.t. Ay ≤ b, y ≥ 0` with `b ≥ 0`, so
//! the slack basis is feasible from the start. Bland's rule throughout.

use nalgebra::{DMatrix, DVector};

use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    IterLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T: Scalar> {
    pub y: DVector<T>,
    pub objective: T,
    pub status: LpStatus,
}

pub fn maximize<T: Scalar>(c: &DVector<T>, a: &DMatrix<T>, b: &DVector<T>) -> LpSolution<T> {
    let (m, nv) = a.shape();
    debug_assert!(b.iter().all(|bi| *bi >= T::zero()));
    let width = nv + m + 1;
    let mut tab = DMatrix::zeros(m + 1, width);
    for i in 0..m {
        for j in 0..nv {
            tab[(i, j)] = a[(i, j)];
        }
        tab[(i, nv + i)] = T::one();
        tab[(i, width - 1)] = b[i];
    }
    // Objective row holds reduced costs `c_j − z_j`.
    for j in 0..nv {
        tab[(m, j)] = c[j];
    }
    let mut basis: Vec<usize> = (nv..nv + m).collect();
    let tol = T::tol(1e-12, 64.0);
    let cap = 50 * (m + nv + 1);
    let mut status = LpStatus::IterLimit;
    for _ in 0..cap {
        let Some(enter) = (0..nv + m).find(|&j| tab[(m, j)] > tol) else {
            status = LpStatus::Optimal;
            break;
        };
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let aij = tab[(i, enter)];
            if aij > tol {
                let ratio = tab[(i, width - 1)] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - tol || (ratio <= lr + tol && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            status = LpStatus::Unbounded;
            break;
        };
        let piv = tab[(row, enter)];
        for j in 0..width {
            tab[(row, j)] /= piv;
        }
        for i in 0..=m {
            if i != row {
                let factor = tab[(i, enter)];
                if factor != T::zero() {
                    for j in 0..width {
                        let t = tab[(row, j)];
                        tab[(i, j)] -= factor * t;
                    }
                }
            }
        }
        basis[row] = enter;
    }
    let mut y = DVector::zeros(nv);
    for (i, &bv) in basis.iter().enumerate() {
        if bv < nv {
            y[bv] = tab[(i, width - 1)];
        }
    }
    let objective = c.dot(&y);
    LpSolution { y, objective, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0]);
        let sol = maximize(&DVector::<f64>::from_vec(vec![3.0, 5.0]), &a, &DVector::from_vec(vec![4.0, 12.0, 18.0]));
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.y - DVector::from_vec(vec![2.0, 6.0])).amax() < 1e-12);
    }

    #[test]
    fn degenerate_lp_terminates() {
        // Classic cycling example (Beale) under the largest-coefficient rule.
        let a = DMatrix::from_row_slice(
            3,
            4,
            &[0.25, -60.0, -1.0 / 25.0, 9.0, 0.5, -90.0, -1.0 / 50.0, 3.0, 0.0, 0.0, 1.0, 0.0],
        );
        let c = DVector::<f64>::from_vec(vec![0.75, -150.0, 1.0 / 50.0, -6.0]);
        let sol = maximize(&c, &a, &DVector::from_vec(vec![0.0, 0.0, 1.0]));
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 0.05).abs() < 1e-12);
    }

    #[test]
    fn unbounded_lp() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let sol = maximize(&DVector::from_vec(vec![0.0, 1.0]), &a, &DVector::from_vec(vec![1.0]));
        assert_eq!(sol.status, LpStatus::Unbounded);
    }
}
