//! Printed `N = 2` reference matrices: two-projector products, the left
//! and right joint singular bases, and the nonzero `|Λ|` entries.

use alloc::vec::Vec;

use nalgebra::DMatrix;

/// Nonzero `(row, col, |amp|)` of `|Λ₀₀|`.
pub const LAMBDA00_ABS: [(u32, u32, f64); 2] = [(0, 0, 1.0), (1, 1, 0.5)];
/// Nonzero `(row, col, |amp|)` of `|Λ₂₂|`.
pub const LAMBDA22_ABS: [(u32, u32, f64); 1] = [(3, 7, 0.5)];

pub fn t00() -> DMatrix<f64> {
    let rows: [[f64; 9]; 9] = [
        [3., 0., 0., 0., 2., 0., 0., 0., 3.],
        [0.; 9],
        [-1., 0., 0., 0., 2., 0., 0., 0., -1.],
        [0.; 9],
        [2., 0., 0., 0., 4., 0., 0., 0., 2.],
        [0.; 9],
        [-1., 0., 0., 0., 2., 0., 0., 0., -1.],
        [0.; 9],
        [3., 0., 0., 0., 2., 0., 0., 0., 3.],
    ];
    DMatrix::from_fn(9, 9, |r, c| rows[r][c] / 8.0)
}

pub fn t22() -> DMatrix<f64> {
    let mut m = DMatrix::zeros(9, 9);
    for (r, w) in [(0, 1.0), (2, 1.0), (4, -2.0), (6, 1.0), (8, 1.0)] {
        m[(r, 2)] = w / 8.0;
        m[(r, 6)] = w / 8.0;
    }
    m
}

pub fn u_n2() -> DMatrix<f64> {
    let (s2, s3, s6) = (libm::sqrt(2.0), libm::sqrt(3.0), libm::sqrt(6.0));
    let a = 1.0 / s3;
    let b = 1.0 / (2.0 * s6);
    let c = 1.0 / s2;
    let e = 1.0 / (2.0 * s2);
    let f = libm::sqrt(1.5) / 2.0;
    let g = 1.0 / s6;
    #[rustfmt::skip]
    let rows: [[f64; 9]; 9] = [
        [a, b, -c, e, 0., 0., 0., 0., 0.],
        [0., 0., 0., 0., 0.5, -c, 0., 0.5, 0.],
        [0., -f, 0., e, 0., 0., 0., 0., -c],
        [0., 0., 0., 0., 0.5, 0., -c, -0.5, 0.],
        [a, -g, 0., -c, 0., 0., 0., 0., 0.],
        [0., 0., 0., 0., 0.5, 0., c, -0.5, 0.],
        [0., -f, 0., e, 0., 0., 0., 0., c],
        [0., 0., 0., 0., 0.5, c, 0., 0.5, 0.],
        [a, b, c, e, 0., 0., 0., 0., 0.],
    ];
    DMatrix::from_fn(9, 9, |r, col| rows[r][col])
}

pub fn v_n2() -> DMatrix<f64> {
    let (s2, s3, s6) = (libm::sqrt(2.0), libm::sqrt(3.0), libm::sqrt(6.0));
    let a = 1.0 / s3;
    let b = 1.0 / s6;
    let c = 1.0 / s2;
    let f = libm::sqrt(2.0 / 3.0);
    #[rustfmt::skip]
    let rows: [[f64; 9]; 9] = [
        [a, b, -c, 0., 0., 0., 0., 0., 0.],
        [0., 0., 0., 0.5, -c, 0., 0.5, 0., 0.],
        [0., 0., 0., 0., 0., 0., 0., c, -c],
        [0., 0., 0., 0.5, 0., -c, -0.5, 0., 0.],
        [a, -f, 0., 0., 0., 0., 0., 0., 0.],
        [0., 0., 0., 0.5, 0., c, -0.5, 0., 0.],
        [0., 0., 0., 0., 0., 0., 0., c, c],
        [0., 0., 0., 0.5, c, 0., 0.5, 0., 0.],
        [a, b, c, 0., 0., 0., 0., 0., 0.],
    ];
    DMatrix::from_fn(9, 9, |r, col| rows[r][col])
}

/// Sorted multiset of |column| vectors, rounded for comparison.
pub fn abs_columns(m: &DMatrix<f64>) -> Vec<Vec<i64>> {
    let mut cols: Vec<Vec<i64>> = m
        .column_iter()
        .map(|c| c.iter().map(|x| libm::round(x.abs() * 1e10) as i64).collect())
        .collect();
    cols.sort();
    cols
}


/// Compares two matrices up to a signed column permutation: sorts the
/// columns of `|a|` and `|b|` lexicographically (within `tol`) and returns
/// the largest entrywise difference.
pub fn signed_permutation_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let sorted = |m: &DMatrix<f64>| {
        let mut cols: Vec<Vec<f64>> = m.column_iter().map(|c| c.iter().map(|x| x.abs()).collect()).collect();
        cols.sort_by(|x, y| {
            for (p, q) in x.iter().zip(y) {
                if (p - q).abs() > tol {
                    return p.total_cmp(q);
                }
            }
            core::cmp::Ordering::Equal
        });
        cols
    };
    let (sa, sb) = (sorted(a), sorted(b));
    sa.iter().zip(&sb).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsvd::compute_joint_svd;
    use crate::ensemble::EnsembleSize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_ignores_sign_and_order() {
        let v = v_n2();
        let mut w = v.clone();
        w.swap_columns(0, 5);
        w.column_mut(3).neg_mut();
        assert!(signed_permutation_distance(&v, &w, 1e-9) < 1e-15);
        assert!(signed_permutation_distance(&v, &u_n2(), 1e-9) > 0.1);
    }

    #[test]
    fn computed_bases_match_printed_ones() {
        let j = compute_joint_svd(EnsembleSize::new(2).unwrap(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(signed_permutation_distance(j.u(), &u_n2(), 1e-9) < 1e-10);
        assert!(signed_permutation_distance(j.v(), &v_n2(), 1e-9) < 1e-10);
    }
}
