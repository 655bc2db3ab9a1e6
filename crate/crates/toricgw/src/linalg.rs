//! Small exact linear algebra over the integers and rationals.
//!
//! Matrices here are tiny (the ambient lattice rank or the Picard rank), so
//! plain Gaussian elimination over `BigRational` is both exact and fast
//! enough. Integer outputs are recovered by clearing denominators.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::rat::{rat, Rat};

/// Determinant of a square integer matrix, exact.
pub fn det(rows: &[Vec<i64>]) -> BigInt {
    let n = rows.len();
    let mut m: Vec<Vec<Rat>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| rat(x)).collect())
        .collect();
    let mut d = Rat::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !m[r][c].is_zero()) else {
            return BigInt::zero();
        };
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c].clone();
        let inv = m[c][c].clone().recip();
        for x in m[c].iter_mut() {
            *x *= inv.clone();
        }
        for r in c + 1..n {
            if !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in c..n {
                    let s = m[c][k].clone() * f.clone();
                    m[r][k] -= s;
                }
            }
        }
    }
    debug_assert!(d.denom().is_one());
    d.numer().clone()
}

/// Solves `A x = b` for square integer `A`. Returns `None` when singular.
pub fn solve_square(a: &[Vec<i64>], b: &[i64]) -> Option<Vec<Rat>> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            row.iter()
                .map(|&x| rat(x))
                .chain(std::iter::once(rat(bi)))
                .collect()
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !m[r][c].is_zero())?;
        m.swap(p, c);
        let inv = m[c][c].clone().recip();
        for x in m[c].iter_mut() {
            *x *= inv.clone();
        }
        for r in 0..n {
            if r != c && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in c..=n {
                    let s = m[c][k].clone() * f.clone();
                    m[r][k] -= s;
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n].clone()).collect())
}

/// Rank of an integer matrix.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut m: Vec<Vec<Rat>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| rat(x)).collect())
        .collect();
    let mut rk = 0;
    for c in 0..cols {
        let Some(p) = (rk..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(p, rk);
        let inv = m[rk][c].clone().recip();
        for x in m[rk].iter_mut() {
            *x *= inv.clone();
        }
        for r in 0..m.len() {
            if r != rk && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in c..cols {
                    let s = m[rk][k].clone() * f.clone();
                    m[r][k] -= s;
                }
            }
        }
        rk += 1;
        if rk == m.len() {
            break;
        }
    }
    rk
}

/// One-dimensional kernel of a rank `dim - 1` integer matrix acting on
/// `Z^dim` by row-vector dot products. Returns a primitive integer generator,
/// or `None` when the kernel is not one-dimensional.
pub fn kernel_vector(rows: &[Vec<i64>], dim: usize) -> Option<Vec<i64>> {
    let mut m: Vec<Vec<Rat>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| rat(x)).collect())
        .collect();
    let mut pivots: Vec<usize> = Vec::new();
    let mut rk = 0;
    for c in 0..dim {
        let Some(p) = (rk..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(p, rk);
        let inv = m[rk][c].clone().recip();
        for x in m[rk].iter_mut() {
            *x *= inv.clone();
        }
        for r in 0..m.len() {
            if r != rk && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in c..dim {
                    let s = m[rk][k].clone() * f.clone();
                    m[r][k] -= s;
                }
            }
        }
        pivots.push(c);
        rk += 1;
    }
    if rk != dim.checked_sub(1)? && !(dim == 1 && rk == 0) {
        return None;
    }
    let free = (0..dim).find(|c| !pivots.contains(c))?;
    let mut v = vec![Rat::zero(); dim];
    v[free] = Rat::one();
    for (row, &pc) in pivots.iter().enumerate() {
        v[pc] = -m[row][free].clone();
    }
    Some(primitive(&v))
}

/// Clears denominators and divides by the content, preserving sign.
pub fn primitive(v: &[Rat]) -> Vec<i64> {
    let mut lcm = BigInt::one();
    for x in v {
        lcm = lcm.lcm(x.denom());
    }
    let ints: Vec<BigInt> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
    let mut g = BigInt::zero();
    for x in &ints {
        g = g.gcd(x);
    }
    if g.is_zero() {
        g = BigInt::one();
    }
    ints.iter()
        .map(|x| {
            let q = x / &g;
            i64::try_from(&q).expect("primitive vector entry exceeds i64")
        })
        .collect()
}

/// gcd of the absolute values of a slice.
pub fn content(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |acc, &x| acc.gcd(&x.abs()))
}
