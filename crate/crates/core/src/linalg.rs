//! Small fixed-size linear algebra used by the variational propagation and
//! the defect Jacobian assembly. Seven is the augmented state dimension
//! (position, velocity, mass).

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

/// 3-vector in the rotating frame.
pub type Vec3 = [f64; 3];
/// Augmented state vector (r, v, m).
pub type Vec7 = [f64; 7];
/// State-transition matrix block.
pub type Mat7 = [[f64; 7]; 7];
/// Control-sensitivity matrix block (state by throttle/alpha/beta).
pub type Mat7x3 = [[f64; 3]; 7];

pub const STATE_DIM: usize = 7;
pub const CONTROL_DIM: usize = 3;

pub fn vec3_add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn vec3_sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn vec3_scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn vec3_dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn vec3_norm(a: &Vec3) -> f64 {
    vec3_dot(a, a).sqrt()
}

pub fn mat7_identity() -> Mat7 {
    let mut m = [[0.0; 7]; 7];
    for i in 0..7 {
        m[i][i] = 1.0;
    }
    m
}

pub fn mat7_zero() -> Mat7 {
    [[0.0; 7]; 7]
}

pub fn mat7x3_zero() -> Mat7x3 {
    [[0.0; 3]; 7]
}

/// `a * b` for 7x7 blocks.
pub fn mat7_mul(a: &Mat7, b: &Mat7) -> Mat7 {
    let mut out = [[0.0; 7]; 7];
    for i in 0..7 {
        for k in 0..7 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..7 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// `a * b` for a 7x7 block against a 7x3 block.
pub fn mat7_mul_7x3(a: &Mat7, b: &Mat7x3) -> Mat7x3 {
    let mut out = [[0.0; 3]; 7];
    for i in 0..7 {
        for k in 0..7 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..3 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mat7_mul_vec(a: &Mat7, x: &Vec7) -> Vec7 {
    let mut out = [0.0; 7];
    for i in 0..7 {
        let mut acc = 0.0;
        for j in 0..7 {
            acc += a[i][j] * x[j];
        }
        out[i] = acc;
    }
    out
}

/// Extracts column `j` of a 7x7 block.
pub fn mat7_col(a: &Mat7, j: usize) -> Vec7 {
    let mut out = [0.0; 7];
    for i in 0..7 {
        out[i] = a[i][j];
    }
    out
}

/// Extracts column `j` of a 7x3 block.
pub fn mat7x3_col(a: &Mat7x3, j: usize) -> Vec7 {
    let mut out = [0.0; 7];
    for i in 0..7 {
        out[i] = a[i][j];
    }
    out
}

/// Solves the dense square system `a x = b` in place by partial-pivot LU.
///
/// Used for the least-squares multiplier estimate (systems of order at most
/// a few tens). Returns `None` when the matrix is numerically singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col][col].abs();
        for row in (col + 1)..n {
            let v = m[row][col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] * inv;
            if factor == 0.0 {
                continue;
            }
            m[row][col] = 0.0;
            for j in (col + 1)..n {
                let mcj = m[col][j];
                m[row][j] -= factor * mcj;
            }
            x[row] -= factor * x[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = x[row];
        for j in (row + 1)..n {
            acc -= m[row][j] * out[j];
        }
        out[row] = acc / m[row][row];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mat7_mul_against_identity() {
        let mut a = mat7_zero();
        for i in 0..7 {
            for j in 0..7 {
                a[i][j] = (i * 7 + j) as f64 * 0.1 - 2.0;
            }
        }
        let id = mat7_identity();
        assert_eq!(mat7_mul(&a, &id), a);
        assert_eq!(mat7_mul(&id, &a), a);
    }

    #[test]
    fn dense_solve_roundtrip() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| a[i][0] * x_true[0] + a[i][1] * x_true[1] + a[i][2] * x_true[2])
            .collect();
        let x = solve_dense(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_singular_is_none() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(&a, &[1.0, 2.0]).is_none());
    }
}
