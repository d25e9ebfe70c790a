//! Dense linear algebra over a table field. Matrices are row-major
//! `Vec<Vec<u32>>` of field codes.

use crate::gf::Gf;

pub type Mat = Vec<Vec<u32>>;

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0; cols]; rows]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1;
    }
    m
}

pub fn mul(f: &Gf, a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    (0..inner).fold(0, |acc, t| f.add(acc, f.mul(row[t], b[t][j])))
                })
                .collect()
        })
        .collect()
}

pub fn mat_vec(f: &Gf, a: &Mat, v: &[u32]) -> Vec<u32> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .fold(0, |acc, (&x, &y)| f.add(acc, f.mul(x, y)))
        })
        .collect()
}

pub fn add(f: &Gf, a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| f.add(x, y)).collect())
        .collect()
}

pub fn sub(f: &Gf, a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| f.sub(x, y)).collect())
        .collect()
}

/// In-place reduced row echelon form; returns the pivot columns.
pub fn rref(f: &Gf, m: &mut Mat) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, p);
        let inv = f.inv(m[r][c]).expect("pivot is nonzero");
        for x in m[r].iter_mut() {
            *x = f.mul(*x, inv);
        }
        for i in 0..rows {
            if i != r && m[i][c] != 0 {
                let factor = m[i][c];
                for j in 0..cols {
                    let t = f.mul(factor, m[r][j]);
                    m[i][j] = f.sub(m[i][j], t);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(f: &Gf, m: &Mat) -> usize {
    let mut c = m.clone();
    rref(f, &mut c).len()
}

pub fn inverse(f: &Gf, m: &Mat) -> Option<Mat> {
    let n = m.len();
    let mut aug: Mat = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| u32::from(i == j)));
            r
        })
        .collect();
    let piv = rref(f, &mut aug);
    if piv.len() < n || piv[n - 1] >= n {
        return None;
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Solves A x = b. Returns a particular solution and a basis of the kernel,
/// or None when inconsistent.
pub fn solve(f: &Gf, a: &Mat, b: &[u32]) -> Option<(Vec<u32>, Vec<Vec<u32>>)> {
    let cols = a.first().map_or(0, |r| r.len());
    let mut aug: Mat = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let piv = rref(f, &mut aug);
    if piv.last() == Some(&cols) {
        return None;
    }
    let mut x = vec![0; cols];
    for (i, &c) in piv.iter().enumerate() {
        x[c] = aug[i][cols];
    }
    let free: Vec<usize> = (0..cols).filter(|c| !piv.contains(c)).collect();
    let kernel = free
        .iter()
        .map(|&fc| {
            let mut v = vec![0; cols];
            v[fc] = 1;
            for (i, &c) in piv.iter().enumerate() {
                v[c] = f.neg(aug[i][fc]);
            }
            v
        })
        .collect();
    Some((x, kernel))
}

pub fn transpose(m: &Mat) -> Mat {
    let cols = m.first().map_or(0, |r| r.len());
    (0..cols).map(|j| m.iter().map(|r| r[j]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::Gf;

    #[test]
    fn inverse_roundtrip_f9() {
        let f = Gf::new(3, 2).unwrap();
        let a = vec![vec![1, 2, 3], vec![4, 0, 5], vec![6, 7, 1]];
        if let Some(inv) = inverse(&f, &a) {
            assert_eq!(mul(&f, &a, &inv), identity(3));
        } else {
            assert!(rank(&f, &a) < 3);
        }
    }

    #[test]
    fn singular_has_no_inverse() {
        let f = Gf::new(2, 1).unwrap();
        let a = vec![vec![1, 1], vec![1, 1]];
        assert!(inverse(&f, &a).is_none());
        assert_eq!(rank(&f, &a), 1);
    }

    #[test]
    fn solve_reports_kernel() {
        let f = Gf::new(2, 2).unwrap();
        let a = vec![vec![1, 2, 0]];
        let (x, ker) = solve(&f, &a, &[3]).unwrap();
        assert_eq!(mat_vec(&f, &a, &x), vec![3]);
        assert_eq!(ker.len(), 2);
        for k in ker {
            assert_eq!(mat_vec(&f, &a, &k), vec![0]);
        }
        assert!(solve(&f, &vec![vec![0, 0]], &[1]).is_none());
    }
}
