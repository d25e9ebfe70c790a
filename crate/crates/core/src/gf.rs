//! Prime-power fields F_{p^k} with exp/log tables.
//!
//! Elements are encoded as integers whose base-p digits are the polynomial
//! coefficients (digit i is the coefficient of x^i). The defining polynomial
//! is the first primitive monic polynomial in the order of its low
//! coefficients read as a base-p integer, so the same field always gets the
//! same tables.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest field order handled by the table representation.
pub const MAX_FIELD_ORDER: u64 = 1 << 22;

const NONE: u32 = u32::MAX;

#[derive(Debug)]
pub struct Gf {
    p: u32,
    k: u32,
    size: u32,
    poly: Vec<u32>,
    exp: Vec<u32>,
    log: Vec<u32>,
    zech: Vec<u32>,
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn checked_pow(p: u64, k: u32) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..k {
        acc = acc.checked_mul(p)?;
    }
    Some(acc)
}

impl Gf {
    pub fn new(p: u32, k: u32) -> Result<Gf> {
        if !is_prime(p as u64) {
            return Err(Error::NotPrime(p as u64));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("field degree must be >= 1".into()));
        }
        let size = match checked_pow(p as u64, k) {
            Some(s) if s <= MAX_FIELD_ORDER => s as u32,
            _ => {
                return Err(Error::budget(
                    format!("field F_{}^{}", p, k),
                    format!("{}^{}", p, k),
                    MAX_FIELD_ORDER,
                ))
            }
        };
        for c in 0..size {
            let poly = digits(c, p, k);
            if poly[0] == 0 {
                continue;
            }
            if let Some(exp) = primitive_powers(p, k, size, &poly) {
                return Ok(Self::from_exp(p, k, size, poly, exp));
            }
        }
        unreachable!("every finite field has a primitive polynomial")
    }

    fn from_exp(p: u32, k: u32, size: u32, poly: Vec<u32>, exp1: Vec<u32>) -> Gf {
        let ord = (size - 1) as usize;
        let mut log = vec![NONE; size as usize];
        for (i, &v) in exp1.iter().enumerate() {
            log[v as usize] = i as u32;
        }
        let mut exp = exp1.clone();
        exp.extend_from_slice(&exp1);
        let mut gf = Gf {
            p,
            k,
            size,
            poly,
            exp,
            log,
            zech: Vec::new(),
        };
        if p != 2 {
            let mut zech = vec![NONE; ord];
            for (i, z) in zech.iter_mut().enumerate() {
                let s = gf.add_digits(1, gf.exp[i]);
                if s != 0 {
                    *z = gf.log[s as usize];
                }
            }
            gf.zech = zech;
        }
        gf
    }

    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn degree(&self) -> u32 {
        self.k
    }
    pub fn order(&self) -> u32 {
        self.size
    }
    /// Low coefficients c_0..c_{k-1} of the monic defining polynomial.
    pub fn poly(&self) -> &[u32] {
        &self.poly
    }
    /// The primitive element x.
    pub fn alpha(&self) -> u32 {
        self.exp[1 % self.exp.len().max(1)]
    }

    fn add_digits(&self, mut a: u32, mut b: u32) -> u32 {
        let p = self.p;
        let mut out = 0;
        let mut place = 1;
        while a > 0 || b > 0 {
            out += ((a % p + b % p) % p) * place;
            a /= p;
            b /= p;
            place *= p;
        }
        out
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        if self.p == 2 {
            return a ^ b;
        }
        if a == 0 {
            return b;
        }
        if b == 0 {
            return a;
        }
        let ord = self.size - 1;
        let la = self.log[a as usize];
        let lb = self.log[b as usize];
        let d = (lb + ord - la) % ord;
        let z = self.zech[d as usize];
        if z == NONE {
            0
        } else {
            self.exp[(la + z) as usize]
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        if self.p == 2 || a == 0 {
            return a;
        }
        let ord = self.size - 1;
        self.exp[(self.log[a as usize] + ord / 2) as usize % ord as usize]
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
    }

    pub fn inv(&self, a: u32) -> Result<u32> {
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        let ord = self.size - 1;
        Ok(self.exp[((ord - self.log[a as usize]) % ord) as usize])
    }

    pub fn div(&self, a: u32, b: u32) -> Result<u32> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: u32, e: u64) -> u32 {
        if e == 0 {
            return 1;
        }
        if a == 0 {
            return 0;
        }
        let ord = (self.size - 1) as u64;
        let l = (self.log[a as usize] as u64 * (e % ord)) % ord;
        self.exp[l as usize]
    }

    /// alpha^e for any exponent, reduced mod the group order.
    pub fn exp(&self, e: u64) -> u32 {
        let ord = (self.size - 1) as u64;
        self.exp[(e % ord) as usize]
    }

    /// Discrete log base alpha; `None` for zero.
    pub fn log(&self, a: u32) -> Option<u32> {
        match self.log[a as usize] {
            NONE => None,
            l => Some(l),
        }
    }

    /// Multiplicative order of a nonzero element.
    pub fn mult_order(&self, a: u32) -> Option<u64> {
        let l = self.log(a)? as u64;
        let ord = (self.size - 1) as u64;
        Some(ord / num_integer::gcd(l, ord))
    }

    /// Evaluate a polynomial with coefficients in the prime field (given as
    /// base-p digits, low degree first) at `a`.
    pub fn eval_prime_poly(&self, coeffs: &[u32], a: u32) -> u32 {
        let mut acc = 0;
        for &c in coeffs.iter().rev() {
            acc = self.add(self.mul(acc, a), c);
        }
        acc
    }
}

fn digits(mut c: u32, p: u32, k: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(k as usize);
    for _ in 0..k {
        out.push(c % p);
        c /= p;
    }
    out
}

/// Returns the table x^0, x^1, ... if x has order p^k - 1 modulo the monic
/// polynomial x^k + sum poly[i] x^i.
fn primitive_powers(p: u32, k: u32, size: u32, poly: &[u32]) -> Option<Vec<u32>> {
    let ord = size - 1;
    let top = size / p;
    let mut exp = Vec::with_capacity(ord as usize);
    let mut v: u32 = 1;
    let mut reduce = vec![0u32; k as usize];
    for (i, c) in poly.iter().enumerate() {
        reduce[i] = (p - c) % p;
    }
    let reduce_code: u32 = reduce
        .iter()
        .rev()
        .fold(0, |acc, &d| acc * p + d);
    for i in 0..ord {
        if i > 0 && v == 1 {
            return None;
        }
        exp.push(v);
        let t = v / top;
        let shifted = (v % top) * p;
        v = if t == 0 {
            shifted
        } else if p == 2 {
            shifted ^ reduce_code
        } else {
            let mut out = 0;
            let mut place = 1;
            let mut a = shifted;
            for &r in &reduce {
                out += ((a % p + t * r) % p) * place;
                a /= p;
                place *= p;
            }
            out
        };
        if v == 0 {
            return None;
        }
    }
    if v == 1 {
        Some(exp)
    } else {
        None
    }
}

/// Shared field of order q, built once per process.
pub fn field(q: u32) -> Result<Arc<Gf>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Gf>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(f) = cache.lock().unwrap().get(&q) {
        return Ok(f.clone());
    }
    let (p, k) = prime_power(q as u64)
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a prime power", q)))?;
    let f = Arc::new(Gf::new(p as u32, k)?);
    cache.lock().unwrap().insert(q, f.clone());
    Ok(f)
}

/// Splits q = p^k, returning None when q is not a prime power.
pub fn prime_power(q: u64) -> Option<(u64, u32)> {
    if q < 2 {
        return None;
    }
    let mut p = 2;
    while q % p != 0 {
        p += 1;
    }
    let mut k = 0;
    let mut r = q;
    while r % p == 0 {
        r /= p;
        k += 1;
    }
    if r == 1 {
        Some((p, k))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_field_axioms(f: &Gf) {
        let n = f.order();
        for a in 0..n {
            assert_eq!(f.add(a, 0), a);
            assert_eq!(f.mul(a, 1), a);
            assert_eq!(f.add(a, f.neg(a)), 0);
            if a != 0 {
                assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            }
            for b in 0..n {
                assert_eq!(f.add(a, b), f.add(b, a));
                assert_eq!(f.mul(a, b), f.mul(b, a));
            }
        }
    }

    #[test]
    fn small_fields_satisfy_axioms() {
        for (p, k) in [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (5, 1), (5, 2), (7, 1)] {
            let f = Gf::new(p, k).unwrap();
            brute_field_axioms(&f);
            assert_eq!(f.mult_order(f.alpha()), Some((f.order() - 1) as u64));
        }
    }

    #[test]
    fn distributivity_exhaustive_f16_f27() {
        for (p, k) in [(2, 4), (3, 3)] {
            let f = Gf::new(p, k).unwrap();
            let n = f.order();
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn addition_matches_digitwise_definition() {
        let f = Gf::new(3, 2).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                let want = ((a % 3 + b % 3) % 3) + 3 * ((a / 3 + b / 3) % 3);
                assert_eq!(f.add(a, b), want);
            }
        }
    }

    #[test]
    fn f4_polynomial_is_x2_x_1() {
        let f = Gf::new(2, 2).unwrap();
        assert_eq!(f.poly(), &[1, 1]);
        let a = f.alpha();
        assert_eq!(f.mul(a, a), f.add(a, 1));
    }

    #[test]
    fn non_prime_rejected() {
        assert_eq!(Gf::new(4, 1).unwrap_err(), Error::NotPrime(4));
        assert!(Gf::new(2, 40).is_err());
    }

    #[test]
    fn prime_power_split() {
        assert_eq!(prime_power(8), Some((2, 3)));
        assert_eq!(prime_power(9), Some((3, 2)));
        assert_eq!(prime_power(6), None);
        assert_eq!(prime_power(1), None);
    }
}
