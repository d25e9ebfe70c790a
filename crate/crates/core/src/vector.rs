//! Packed vectors over F_q.
//!
//! A vector in F_q^n is stored as the base-q integer whose most significant
//! digit is coordinate 0, so integer order is lexicographic order. Digits are
//! the field codes of `gf::field(q)`.

use crate::error::{Error, Result};
use crate::gf::Gf;

/// Largest n such that every vector of F_q^n packs into a u64.
pub fn max_len(q: u32) -> u32 {
    let mut n = 0;
    let mut acc: u128 = 1;
    while acc * q as u128 <= u64::MAX as u128 + 1 {
        acc *= q as u128;
        n += 1;
    }
    n
}

pub fn check_len(q: u32, n: u32) -> Result<()> {
    if n > max_len(q) {
        return Err(Error::budget(
            format!("packed vectors over F_{}", q),
            format!("n = {}", n),
            format!("n <= {}", max_len(q)),
        ));
    }
    Ok(())
}

pub fn pack(q: u32, digits: &[u32]) -> u64 {
    if q == 2 {
        return digits.iter().fold(0u64, |acc, &d| (acc << 1) | d as u64);
    }
    digits.iter().fold(0u64, |acc, &d| acc * q as u64 + d as u64)
}

pub fn unpack(q: u32, n: u32, mut v: u64) -> Vec<u32> {
    let mut out = vec![0u32; n as usize];
    if q == 2 {
        for i in (0..n as usize).rev() {
            out[i] = (v & 1) as u32;
            v >>= 1;
        }
        return out;
    }
    for i in (0..n as usize).rev() {
        out[i] = (v % q as u64) as u32;
        v /= q as u64;
    }
    out
}

/// Number of vectors q^n.
pub fn count(q: u32, n: u32) -> u64 {
    (q as u64).pow(n)
}

pub fn add(f: &Gf, n: u32, a: u64, b: u64) -> u64 {
    if f.order() == 2 {
        return a ^ b;
    }
    let q = f.order();
    let da = unpack(q, n, a);
    let db = unpack(q, n, b);
    let s: Vec<u32> = da.iter().zip(&db).map(|(&x, &y)| f.add(x, y)).collect();
    pack(q, &s)
}

pub fn scale(f: &Gf, n: u32, c: u32, a: u64) -> u64 {
    if c == 1 {
        return a;
    }
    if c == 0 {
        return 0;
    }
    let q = f.order();
    let da = unpack(q, n, a);
    let s: Vec<u32> = da.iter().map(|&x| f.mul(c, x)).collect();
    pack(q, &s)
}

/// Linear combination sum_i c_i v_i.
pub fn combine(f: &Gf, n: u32, coeffs: &[u32], vecs: &[u64]) -> u64 {
    let q = f.order();
    if q == 2 {
        return coeffs
            .iter()
            .zip(vecs)
            .filter(|(c, _)| **c == 1)
            .fold(0, |acc, (_, v)| acc ^ v);
    }
    let mut acc = vec![0u32; n as usize];
    for (&c, &v) in coeffs.iter().zip(vecs) {
        if c == 0 {
            continue;
        }
        for (a, d) in acc.iter_mut().zip(unpack(q, n, v)) {
            *a = f.add(*a, f.mul(c, d));
        }
    }
    pack(q, &acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::field;

    #[test]
    fn pack_roundtrip_and_order() {
        let v = pack(3, &[2, 0, 1]);
        assert_eq!(v, 19);
        assert_eq!(unpack(3, 3, v), vec![2, 0, 1]);
        assert!(pack(2, &[1, 0, 0]) > pack(2, &[0, 1, 1]));
    }

    #[test]
    fn add_is_coordinatewise() {
        let f = field(3).unwrap();
        let a = pack(3, &[1, 2, 0]);
        let b = pack(3, &[2, 2, 1]);
        assert_eq!(unpack(3, 3, add(&f, 3, a, b)), vec![0, 1, 1]);
        assert_eq!(unpack(3, 3, scale(&f, 3, 2, a)), vec![2, 1, 0]);
    }

    #[test]
    fn max_len_values() {
        assert_eq!(max_len(2), 64);
        assert_eq!(max_len(3), 40);
    }
}
