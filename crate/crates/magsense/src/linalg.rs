//! Minimal dense linear algebra: a pivoted Gaussian solver for the small
//! normal-equation systems and a cyclic Jacobi eigensolver for symmetric
//! matrices (sphere fits, PCA). Matrices are row-major `Vec<T>` buffers.

use crate::error::{MagsenseError, Result};
use crate::scalar::{real, Real};

/// Solves `a x = b` in place for a dense n x n system with partial pivoting.
pub fn solve<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Result<Vec<T>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        // Pivot on the largest magnitude in this column.
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < real(1e-12) {
            return Err(MagsenseError::Calibration(
                "singular system in least-squares solve".into(),
            ));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            let bv = b[col];
            b[row] = b[row] - factor * bv;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue;
/// eigenvectors are the columns, returned row-major as `vecs[i * n + j]`
/// giving component `i` of eigenvector `j`. Each eigenvector's sign is fixed
/// so its largest-magnitude component is positive.
pub fn jacobi_eigen_sym<T: Real>(mat: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(mat.len(), n * n);
    let mut a = mat.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }

    // Off-diagonal mass is compared against the diagonal in squared terms,
    // so the convergence tolerance is epsilon^2.
    let tol = T::epsilon() * T::epsilon();
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + a[i * n + j] * a[i * n + j];
            }
        }
        let mut diag = T::zero();
        for i in 0..n {
            diag = diag + a[i * n + i] * a[i * n + i];
        }
        if off <= tol * (diag + T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= T::epsilon() * (a[p * n + p].abs() + a[q * n + q].abs()) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (real::<T>(2.0) * apq);
                // Stable tangent of the rotation angle.
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut vals = Vec::with_capacity(n);
    let mut vecs = vec![T::zero(); n * n];
    for (out_col, &src_col) in order.iter().enumerate() {
        vals.push(a[src_col * n + src_col]);
        // Sign convention: largest-magnitude component positive.
        let mut best_i = 0;
        let mut best_mag = T::zero();
        for i in 0..n {
            let m = v[i * n + src_col].abs();
            if m > best_mag {
                best_mag = m;
                best_i = i;
            }
        }
        let flip = v[best_i * n + src_col] < T::zero();
        for i in 0..n {
            let val = v[i * n + src_col];
            vecs[i * n + out_col] = if flip { -val } else { val };
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn solve_matches_nalgebra() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 4;
            let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let na = DMatrix::from_row_slice(n, n, &a);
            if na.clone().determinant().abs() < 1e-3 {
                continue;
            }
            let nb = DVector::from_column_slice(&b);
            let expected = na.lu().solve(&nb).unwrap();
            let got = solve(&mut a.clone(), &mut b.clone(), n).unwrap();
            for i in 0..n {
                assert_relative_eq!(got[i], expected[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(solve(&mut a, &mut b, 2).is_err());
    }

    #[test]
    fn jacobi_matches_nalgebra_symmetric_eigen() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 6, 12] {
            // Random symmetric matrix.
            let mut m = vec![0.0f64; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-1.0..1.0);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            let (vals, vecs) = jacobi_eigen_sym(&m, n);
            let na = DMatrix::from_row_slice(n, n, &m);
            let eig = na.symmetric_eigen();
            let mut expected: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (got, want) in vals.iter().zip(expected.iter()) {
                assert_relative_eq!(got, want, epsilon = 1e-9);
            }
            // Residual check: A v = lambda v for every pair.
            for col in 0..n {
                for i in 0..n {
                    let mut av = 0.0;
                    for j in 0..n {
                        av += m[i * n + j] * vecs[j * n + col];
                    }
                    assert_relative_eq!(av, vals[col] * vecs[i * n + col], epsilon = 1e-8);
                }
            }
        }
    }
}
