//! Smith normal form over arbitrary-precision integers, with the unimodular
//! transforms and their inverses tracked. Used for integral homology bases.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Dense matrix of big integers, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct IMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigInt>,
}

impl IMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IMat { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut m = IMat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = BigInt::from(v);
            }
        }
        m
    }

    pub fn mul(&self, other: &IMat) -> IMat {
        assert_eq!(self.cols, other.rows);
        let mut out = IMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self[(i, k)].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let add = &self[(i, k)] * &other[(k, j)];
                    out[(i, j)] += add;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> IMat {
        let mut out = IMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_i64(&self) -> Option<Vec<Vec<i64>>> {
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut row = Vec::with_capacity(self.cols);
            for j in 0..self.cols {
                row.push(i64::try_from(&self[(i, j)]).ok()?);
            }
            out.push(row);
        }
        Some(out)
    }
}

impl std::ops::Index<(usize, usize)> for IMat {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        let c = self.cols;
        &mut self.data[i * c + j]
    }
}

/// U * A * V = S with S diagonal satisfying the divisibility chain,
/// U and V unimodular. `u_inv` and `v_inv` are the exact inverses.
#[derive(Clone, Debug)]
pub struct Snf {
    pub s: IMat,
    pub u: IMat,
    pub u_inv: IMat,
    pub v: IMat,
    pub v_inv: IMat,
    pub rank: usize,
}

pub fn smith_normal_form(a: &IMat) -> Snf {
    let mut s = a.clone();
    let (m, n) = (s.rows, s.cols);
    let mut u = IMat::identity(m);
    let mut u_inv = IMat::identity(m);
    let mut v = IMat::identity(n);
    let mut v_inv = IMat::identity(n);

    let mut t = 0usize;
    while t < m.min(n) {
        // locate a pivot: smallest nonzero magnitude in the trailing block
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..m {
            for j in t..n {
                if !s[(i, j)].is_zero()
                    && pivot.map_or(true, |(pi, pj)| s[(i, j)].abs() < s[(pi, pj)].abs())
                {
                    pivot = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = pivot else { break };
        swap_rows(&mut s, &mut u, &mut u_inv, t, pi);
        swap_cols(&mut s, &mut v, &mut v_inv, t, pj);

        let mut again = true;
        while again {
            again = false;
            // clear column t
            for i in t + 1..m {
                if !s[(i, t)].is_zero() {
                    let q = div_round(&s[(i, t)], &s[(t, t)]);
                    if !q.is_zero() {
                        add_row(&mut s, &mut u, &mut u_inv, i, t, &-&q);
                    }
                    if !s[(i, t)].is_zero() {
                        // remainder smaller than pivot: swap up and restart
                        swap_rows(&mut s, &mut u, &mut u_inv, t, i);
                        again = true;
                    }
                }
            }
            // clear row t
            for j in t + 1..n {
                if !s[(t, j)].is_zero() {
                    let q = div_round(&s[(t, j)], &s[(t, t)]);
                    if !q.is_zero() {
                        add_col(&mut s, &mut v, &mut v_inv, j, t, &-&q);
                    }
                    if !s[(t, j)].is_zero() {
                        swap_cols(&mut s, &mut v, &mut v_inv, t, j);
                        again = true;
                    }
                }
            }
        }

        // divisibility fix-up: pivot must divide the trailing block
        let mut fixed = false;
        'scan: for i in t + 1..m {
            for j in t + 1..n {
                if !(&s[(i, j)] % &s[(t, t)]).is_zero() {
                    let one = BigInt::one();
                    add_row(&mut s, &mut u, &mut u_inv, t, i, &one);
                    fixed = true;
                    break 'scan;
                }
            }
        }
        if fixed {
            continue; // redo this pivot with the new row content
        }

        if s[(t, t)].is_negative() {
            negate_row(&mut s, &mut u, &mut u_inv, t);
        }
        t += 1;
    }

    let rank = (0..m.min(n)).take_while(|&i| !s[(i, i)].is_zero()).count();
    Snf { s, u, u_inv, v, v_inv, rank }
}

/// Integer basis of the kernel lattice of `a` (saturated by construction):
/// the trailing columns of V beyond the rank.
pub fn integer_kernel(a: &IMat) -> Vec<Vec<BigInt>> {
    let snf = smith_normal_form(a);
    (snf.rank..a.cols).map(|j| snf.v.column(j)).collect()
}

fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    // round-to-nearest quotient keeps remainders small
    let two = BigInt::from(2);
    let (q, r) = num_integer::Integer::div_rem(a, b);
    if &r.abs() * &two > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q + BigInt::one()
        } else {
            q - BigInt::one()
        }
    } else {
        q
    }
}

fn swap_rows(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, r1: usize, r2: usize) {
    if r1 == r2 {
        return;
    }
    for j in 0..s.cols {
        let tmp = s[(r1, j)].clone();
        s[(r1, j)] = s[(r2, j)].clone();
        s[(r2, j)] = tmp;
    }
    for j in 0..u.cols {
        let tmp = u[(r1, j)].clone();
        u[(r1, j)] = u[(r2, j)].clone();
        u[(r2, j)] = tmp;
    }
    for i in 0..u_inv.rows {
        let tmp = u_inv[(i, r1)].clone();
        u_inv[(i, r1)] = u_inv[(i, r2)].clone();
        u_inv[(i, r2)] = tmp;
    }
}

fn swap_cols(s: &mut IMat, v: &mut IMat, v_inv: &mut IMat, c1: usize, c2: usize) {
    if c1 == c2 {
        return;
    }
    for i in 0..s.rows {
        let tmp = s[(i, c1)].clone();
        s[(i, c1)] = s[(i, c2)].clone();
        s[(i, c2)] = tmp;
    }
    for i in 0..v.rows {
        let tmp = v[(i, c1)].clone();
        v[(i, c1)] = v[(i, c2)].clone();
        v[(i, c2)] = tmp;
    }
    for j in 0..v_inv.cols {
        let tmp = v_inv[(c1, j)].clone();
        v_inv[(c1, j)] = v_inv[(c2, j)].clone();
        v_inv[(c2, j)] = tmp;
    }
}

fn negate_row(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, r: usize) {
    for j in 0..s.cols {
        let v = -s[(r, j)].clone();
        s[(r, j)] = v;
    }
    for j in 0..u.cols {
        let v = -u[(r, j)].clone();
        u[(r, j)] = v;
    }
    for i in 0..u_inv.rows {
        let v = -u_inv[(i, r)].clone();
        u_inv[(i, r)] = v;
    }
}

/// row r1 += c * row r2  (S <- E S, U <- E U, U_inv <- U_inv E^{-1})
fn add_row(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, r1: usize, r2: usize, c: &BigInt) {
    for j in 0..s.cols {
        let add = c * &s[(r2, j)];
        s[(r1, j)] += add;
    }
    for j in 0..u.cols {
        let add = c * &u[(r2, j)];
        u[(r1, j)] += add;
    }
    for i in 0..u_inv.rows {
        let sub = c * &u_inv[(i, r1)];
        u_inv[(i, r2)] -= sub;
    }
}

/// col c1 += c * col c2  (S <- S E, V <- V E, V_inv <- E^{-1} V_inv)
fn add_col(s: &mut IMat, v: &mut IMat, v_inv: &mut IMat, c1: usize, c2: usize, c: &BigInt) {
    for i in 0..s.rows {
        let add = c * &s[(i, c2)];
        s[(i, c1)] += add;
    }
    for i in 0..v.rows {
        let add = c * &v[(i, c2)];
        v[(i, c1)] += add;
    }
    for j in 0..v_inv.cols {
        let sub = c * &v_inv[(c1, j)];
        v_inv[(c2, j)] -= sub;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_transforms(a: &IMat, snf: &Snf) {
        assert_eq!(snf.u.mul(a).mul(&snf.v), snf.s);
        assert_eq!(snf.u.mul(&snf.u_inv), IMat::identity(a.rows));
        assert_eq!(snf.v.mul(&snf.v_inv), IMat::identity(a.cols));
        // off-diagonal zero
        for i in 0..snf.s.rows {
            for j in 0..snf.s.cols {
                if i != j {
                    assert!(snf.s[(i, j)].is_zero());
                }
            }
        }
    }

    #[test]
    fn snf_small() {
        let a = IMat::from_i64_rows(&[vec![2, 4, 4], vec![-6, 6, 12], vec![10, 4, 16]]);
        let snf = smith_normal_form(&a);
        check_transforms(&a, &snf);
        // known invariant factors 2, 2, 156 (divisibility chain)
        let d: Vec<i64> = (0..3).map(|i| i64::try_from(&snf.s[(i, i)]).unwrap()).collect();
        assert_eq!(d, vec![2, 2, 156]);
    }

    #[test]
    fn snf_rank_deficient_kernel() {
        let a = IMat::from_i64_rows(&[vec![1, 2, 3], vec![2, 4, 6]]);
        let snf = smith_normal_form(&a);
        check_transforms(&a, &snf);
        assert_eq!(snf.rank, 1);
        let kernel = integer_kernel(&a);
        assert_eq!(kernel.len(), 2);
        for k in kernel {
            let mut acc = [BigInt::zero(), BigInt::zero()];
            for i in 0..2 {
                for j in 0..3 {
                    acc[i] += &a[(i, j)] * &k[j];
                }
            }
            assert!(acc[0].is_zero() && acc[1].is_zero());
        }
    }
}
