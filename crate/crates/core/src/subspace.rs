//! Canonical subspaces of F_q^n, Grassmannians, Gaussian binomials and the
//! reduced echelon profiles Red_q^{r x s}.

use crate::error::{Error, Result};
use crate::gf::{field, Gf};
use crate::linalg;
use crate::vector::{self, check_len};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest Grassmannian the enumerators will materialize.
pub const GRASSMANNIAN_BUDGET: u64 = 4_000_000;

/// A subspace of F_q^n stored by its reduced row echelon basis.
///
/// Rows are packed vectors (see [`crate::vector`]) sorted by increasing
/// pivot column. The derived order compares bases row by row, which is the
/// lexicographic order on basis matrices used to index Grassmannians.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Subspace {
    q: u32,
    n: u32,
    rows: Vec<u64>,
}

/// An element of Red_q^{r x s}; stored as the r-dimensional subspace of
/// F_q^s whose RREF basis is the profile matrix.
pub type RrefProfile = Subspace;

impl Subspace {
    pub fn zero(q: u32, n: u32) -> Subspace {
        Subspace { q, n, rows: Vec::new() }
    }

    pub fn full(q: u32, n: u32) -> Subspace {
        let rows = (0..n).map(|i| unit(q, n, i)).collect();
        Subspace { q, n, rows }
    }

    /// Span of the unit vectors e_i for i in `coords`.
    pub fn coordinate(q: u32, n: u32, coords: &[u32]) -> Subspace {
        let v: Vec<u64> = coords.iter().map(|&i| unit(q, n, i)).collect();
        Subspace::span(q, n, &v)
    }

    /// Canonical subspace spanned by packed vectors.
    pub fn span(q: u32, n: u32, vecs: &[u64]) -> Subspace {
        let rows = if q == 2 {
            rref_bits(vecs)
        } else {
            let f = field(q).expect("q is a prime power");
            rref_generic(&f, n, vecs)
        };
        Subspace { q, n, rows }
    }

    /// Span of digit vectors.
    pub fn span_digits(q: u32, n: u32, rows: &[Vec<u32>]) -> Subspace {
        let v: Vec<u64> = rows.iter().map(|r| vector::pack(q, r)).collect();
        Subspace::span(q, n, &v)
    }

    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.rows.len()
    }
    pub fn rows(&self) -> &[u64] {
        &self.rows
    }
    pub fn row_digits(&self) -> Vec<Vec<u32>> {
        self.rows
            .iter()
            .map(|&r| vector::unpack(self.q, self.n, r))
            .collect()
    }

    pub fn pivots(&self) -> Vec<u32> {
        self.row_digits()
            .iter()
            .map(|r| r.iter().position(|&d| d != 0).unwrap() as u32)
            .collect()
    }

    /// Reduces v modulo the subspace; zero iff v lies in it.
    pub fn reduce(&self, v: u64) -> u64 {
        if self.q == 2 {
            let mut v = v;
            for &r in &self.rows {
                if v & top_bit(r) != 0 {
                    v ^= r;
                }
            }
            return v;
        }
        let f = field(self.q).unwrap();
        let mut d = vector::unpack(self.q, self.n, v);
        for (row, p) in self.row_digits().iter().zip(self.pivots()) {
            let c = d[p as usize];
            if c != 0 {
                for (x, &y) in d.iter_mut().zip(row) {
                    *x = f.sub(*x, f.mul(c, y));
                }
            }
        }
        vector::pack(self.q, &d)
    }

    pub fn contains_vec(&self, v: u64) -> bool {
        self.reduce(v) == 0
    }

    pub fn contains(&self, other: &Subspace) -> bool {
        other.rows.iter().all(|&v| self.contains_vec(v))
    }

    pub fn join(&self, other: &Subspace) -> Subspace {
        let mut v = self.rows.clone();
        v.extend_from_slice(&other.rows);
        Subspace::span(self.q, self.n, &v)
    }

    pub fn meet(&self, other: &Subspace) -> Subspace {
        let q = self.q;
        let n = self.n as usize;
        if q == 2 && 2 * n <= 64 {
            let mut v: Vec<u64> = self.rows.iter().map(|&a| (a << n) | a).collect();
            v.extend(other.rows.iter().map(|&b| b << n));
            let red = rref_bits(&v);
            let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            let inter: Vec<u64> = red.iter().filter(|&&r| r >> n == 0).map(|&r| r & mask).collect();
            return Subspace::span(q, self.n, &inter);
        }
        let f = field(q).unwrap();
        let mut m: linalg::Mat = Vec::new();
        for a in self.row_digits() {
            let mut r = a.clone();
            r.extend(a);
            m.push(r);
        }
        for b in other.row_digits() {
            let mut r = b;
            r.extend(std::iter::repeat(0).take(n));
            m.push(r);
        }
        linalg::rref(&f, &mut m);
        let inter: Vec<Vec<u32>> = m
            .into_iter()
            .filter(|r| r[..n].iter().all(|&x| x == 0) && r[n..].iter().any(|&x| x != 0))
            .map(|r| r[n..].to_vec())
            .collect();
        Subspace::span_digits(q, self.n, &inter)
    }

    /// All r-dimensional subspaces, obtained by applying each profile in
    /// Red_q^{r x dim} to the canonical basis.
    pub fn subspaces(&self, r: usize) -> Vec<Subspace> {
        if r > self.dim() {
            return Vec::new();
        }
        let profiles = red_profiles(self.q, r as u32, self.dim() as u32)
            .expect("profile enumeration fits the budget");
        let f = field(self.q).unwrap();
        profiles
            .iter()
            .map(|p| Subspace::span(self.q, self.n, &apply_profile(&f, p, &self.rows, self.n)))
            .collect()
    }

    /// All t-dimensional subspaces containing this one.
    pub fn supersets(&self, t: usize) -> Result<Vec<Subspace>> {
        let k = self.dim();
        if t < k || t > self.n as usize {
            return Ok(Vec::new());
        }
        let piv = self.pivots();
        let free: Vec<u32> = (0..self.n).filter(|c| !piv.contains(c)).collect();
        let quotient = enumerate_grassmannian(free.len() as u32, (t - k) as u32, self.q)?;
        Ok(quotient
            .iter()
            .map(|w| {
                let mut v = self.rows.clone();
                for row in w.row_digits() {
                    let mut d = vec![0u32; self.n as usize];
                    for (j, &x) in row.iter().enumerate() {
                        d[free[j] as usize] = x;
                    }
                    v.push(vector::pack(self.q, &d));
                }
                Subspace::span(self.q, self.n, &v)
            })
            .collect())
    }

    /// Image under the linear map sending e_j to images[j], into F_q^{n_out}.
    pub fn map_linear(&self, images: &[u64], n_out: u32) -> Subspace {
        let f = field(self.q).unwrap();
        let v: Vec<u64> = self
            .row_digits()
            .iter()
            .map(|row| vector::combine(&f, n_out, row, images))
            .collect();
        Subspace::span(self.q, n_out, &v)
    }

    /// Pads every vector with zeros on the right to live in F_q^{n_out}.
    pub fn embed_prefix(&self, n_out: u32) -> Subspace {
        let images: Vec<u64> = (0..self.n).map(|i| unit(self.q, n_out, i)).collect();
        self.map_linear(&images, n_out)
    }

    /// Textual literal: rows as base-q digit strings joined by ';', or "~"
    /// for the zero subspace.
    pub fn literal(&self) -> String {
        if self.rows.is_empty() {
            return "~".into();
        }
        self.row_digits()
            .iter()
            .map(|r| r.iter().map(|&d| digit_char(d)).collect::<String>())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_literal(q: u32, n: u32, s: &str) -> std::result::Result<Subspace, String> {
        if s == "~" {
            return Ok(Subspace::zero(q, n));
        }
        let mut rows = Vec::new();
        for part in s.split(';') {
            if part.chars().count() != n as usize {
                return Err(format!("row '{}' does not have length {}", part, n));
            }
            let mut d = Vec::with_capacity(n as usize);
            for ch in part.chars() {
                let v = ch
                    .to_digit(36)
                    .filter(|&v| v < q)
                    .ok_or_else(|| format!("bad digit '{}' for q={}", ch, q))?;
                d.push(v);
            }
            rows.push(d);
        }
        let sub = Subspace::span_digits(q, n, &rows);
        if sub.dim() != rows.len() {
            return Err(format!("rows of '{}' are linearly dependent", s));
        }
        Ok(sub)
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

fn digit_char(d: u32) -> char {
    std::char::from_digit(d, 36).expect("digit below 36")
}

pub fn unit(q: u32, n: u32, i: u32) -> u64 {
    (q as u64).pow(n - 1 - i)
}

fn top_bit(v: u64) -> u64 {
    1u64 << (63 - v.leading_zeros())
}

fn rref_bits(vecs: &[u64]) -> Vec<u64> {
    let mut rows: Vec<u64> = Vec::new();
    for &v0 in vecs {
        let mut v = v0;
        for &r in &rows {
            if v & top_bit(r) != 0 {
                v ^= r;
            }
        }
        if v == 0 {
            continue;
        }
        let p = top_bit(v);
        for r in rows.iter_mut() {
            if *r & p != 0 {
                *r ^= v;
            }
        }
        rows.push(v);
    }
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows
}

fn rref_generic(f: &Gf, n: u32, vecs: &[u64]) -> Vec<u64> {
    let q = f.order();
    let mut m: linalg::Mat = vecs.iter().map(|&v| vector::unpack(q, n, v)).collect();
    let piv = linalg::rref(f, &mut m);
    let mut rows: Vec<u64> = m[..piv.len()].iter().map(|r| vector::pack(q, r)).collect();
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows
}

/// Rows of Pi * b for a profile Pi and an ordered basis b.
pub fn apply_profile(f: &Gf, profile: &RrefProfile, basis: &[u64], n: u32) -> Vec<u64> {
    profile
        .row_digits()
        .iter()
        .map(|coeffs| vector::combine(f, n, coeffs, basis))
        .collect()
}

/// Exact Gaussian binomial [n k]_q.
pub fn gaussian_binomial(n: u64, k: u64, q: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let qb = BigUint::from(q);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= qb.pow((n - i) as u32) - 1u32;
        den *= qb.pow((i + 1) as u32) - 1u32;
    }
    num / den
}

pub fn gaussian_binomial_u64(n: u64, k: u64, q: u64) -> Option<u64> {
    u64::try_from(gaussian_binomial(n, k, q)).ok()
}

fn combinations(n: u32, k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k as i64 - 1;
        while i >= 0 && cur[i as usize] == n - k + i as u32 {
            i -= 1;
        }
        if i < 0 {
            return out;
        }
        cur[i as usize] += 1;
        for j in (i as usize + 1)..k as usize {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// All k-dimensional subspaces of F_q^n in canonical order.
pub fn enumerate_grassmannian(n: u32, k: u32, q: u32) -> Result<Vec<Subspace>> {
    check_len(q, n)?;
    field(q)?;
    let size = gaussian_binomial(n as u64, k as u64, q as u64);
    if size > BigUint::from(GRASSMANNIAN_BUDGET) {
        return Err(Error::budget(
            format!("Gr_{}({},{})", q, n, k),
            size,
            GRASSMANNIAN_BUDGET,
        ));
    }
    let mut out = Vec::new();
    for piv in combinations(n, k) {
        let mut free: Vec<(usize, usize)> = Vec::new();
        for (i, &p) in piv.iter().enumerate() {
            for c in (p + 1)..n {
                if !piv.contains(&c) {
                    free.push((i, c as usize));
                }
            }
        }
        let mut assign = vec![0u32; free.len()];
        loop {
            let mut rows = vec![vec![0u32; n as usize]; k as usize];
            for (i, &p) in piv.iter().enumerate() {
                rows[i][p as usize] = 1;
            }
            for (&(i, c), &a) in free.iter().zip(&assign) {
                rows[i][c] = a;
            }
            out.push(Subspace {
                q,
                n,
                rows: rows.iter().map(|r| vector::pack(q, r)).collect(),
            });
            let mut t = 0;
            while t < assign.len() {
                assign[t] += 1;
                if assign[t] < q {
                    break;
                }
                assign[t] = 0;
                t += 1;
            }
            if t == assign.len() {
                break;
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Red_q^{r x s} in canonical order, cached.
pub fn red_profiles(q: u32, r: u32, s: u32) -> Result<Arc<Vec<RrefProfile>>> {
    if r > s {
        return Err(Error::InvalidParameter(format!("profile rank {} exceeds {}", r, s)));
    }
    static CACHE: OnceLock<Mutex<HashMap<(u32, u32, u32), Arc<Vec<RrefProfile>>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&(q, r, s)) {
        return Ok(v.clone());
    }
    let v = Arc::new(enumerate_grassmannian(s, r, q)?);
    cache.lock().unwrap().insert((q, r, s), v.clone());
    Ok(v)
}

/// All r-subspaces of S (exposed under the name used in the docs).
pub fn r_subspaces_of(s: &Subspace, r: usize) -> Vec<Subspace> {
    s.subspaces(r)
}

/// Intersection, sum and their dimensions.
pub fn meet_join(a: &Subspace, b: &Subspace) -> Result<(Subspace, Subspace, (usize, usize))> {
    if a.q != b.q || a.n != b.n {
        return Err(Error::InvalidParameter("subspaces live in different ambient spaces".into()));
    }
    let m = a.meet(b);
    let j = a.join(b);
    let dims = (m.dim(), j.dim());
    Ok((m, j, dims))
}

/// Number of ordered bases of F_q^r, |GL_r(F_q)|.
pub fn gl_order(r: u32, q: u64) -> BigUint {
    let qb = BigUint::from(q);
    let qr = qb.pow(r);
    (0..r).fold(BigUint::one(), |acc, i| acc * (&qr - qb.pow(i)))
}

/// A uniformly random ordered basis of `s` followed by `extra` vectors chosen
/// uniformly so that the whole list stays linearly independent.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, s: &Subspace, extra: usize) -> Vec<u64> {
    assert!(s.dim() + extra <= s.n as usize, "frame longer than the ambient dimension");
    let f = field(s.q).unwrap();
    let mut out: Vec<u64> = Vec::with_capacity(s.dim() + extra);
    while out.len() < s.dim() {
        let coeffs: Vec<u32> = (0..s.dim()).map(|_| rng.gen_range(0..s.q)).collect();
        let v = vector::combine(&f, s.n, &coeffs, &s.rows);
        if !Subspace::span(s.q, s.n, &out).contains_vec(v) {
            out.push(v);
        }
    }
    let total = vector::count(s.q, s.n);
    while out.len() < s.dim() + extra {
        let v = rng.gen_range(0..total);
        if !Subspace::span(s.q, s.n, &out).contains_vec(v) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_count(n: u32, k: u32, q: u32) -> usize {
        // Distinct spans of all k-tuples of vectors.
        let total = vector::count(q, n);
        let mut seen = std::collections::HashSet::new();
        let mut idx = vec![0u64; k as usize];
        loop {
            let s = Subspace::span(q, n, &idx);
            if s.dim() == k as usize {
                seen.insert(s);
            }
            let mut t = 0;
            while t < idx.len() {
                idx[t] += 1;
                if idx[t] < total {
                    break;
                }
                idx[t] = 0;
                t += 1;
            }
            if t == idx.len() {
                break;
            }
        }
        seen.len()
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(gaussian_binomial(5, 0, 2), BigUint::one());
        assert_eq!(gaussian_binomial(2, 1, 2), BigUint::from(3u32));
        assert_eq!(gaussian_binomial(4, 2, 2), BigUint::from(35u32));
        assert_eq!(gaussian_binomial(2, 3, 2), BigUint::zero());
    }

    #[test]
    fn gaussian_matches_brute_force() {
        for (n, k, q) in [(4, 2, 2), (3, 1, 3), (3, 2, 3), (2, 1, 4), (4, 1, 2)] {
            assert_eq!(
                gaussian_binomial(n as u64, k as u64, q as u64),
                BigUint::from(brute_count(n, k, q))
            );
        }
    }

    #[test]
    fn grassmannian_sizes_and_symmetry() {
        for q in [2u32, 3, 4] {
            for n in 0..=5u32 {
                if q == 4 && n > 4 {
                    continue;
                }
                for k in 0..=n {
                    let g = enumerate_grassmannian(n, k, q).unwrap();
                    let want = gaussian_binomial(n as u64, k as u64, q as u64);
                    assert_eq!(BigUint::from(g.len()), want);
                    assert_eq!(want, gaussian_binomial(n as u64, (n - k) as u64, q as u64));
                    assert!(g.windows(2).all(|w| w[0] < w[1]));
                    for s in &g {
                        assert_eq!(s.dim(), k as usize);
                        assert_eq!(&Subspace::span(q, n, s.rows()), s);
                    }
                }
            }
        }
    }

    #[test]
    fn grassmannian_edge_cases() {
        assert_eq!(enumerate_grassmannian(2, 1, 2).unwrap().len(), 3);
        let full = enumerate_grassmannian(3, 3, 2).unwrap();
        assert_eq!(full, vec![Subspace::full(2, 3)]);
    }

    #[test]
    fn profiles() {
        let p = red_profiles(2, 1, 2).unwrap();
        let lits: Vec<String> = p.iter().map(|s| s.literal()).collect();
        assert_eq!(lits, vec!["01", "10", "11"]);
        assert_eq!(red_profiles(2, 2, 2).unwrap().len(), 1);
        assert_eq!(red_profiles(2, 1, 3).unwrap().len(), 7);
        assert!(red_profiles(2, 3, 2).is_err());
    }

    #[test]
    fn canonicalize_examples() {
        let s = Subspace::span_digits(2, 2, &[vec![1, 1], vec![0, 1]]);
        assert_eq!(s, Subspace::full(2, 2));
        assert_eq!(s.row_digits(), vec![vec![1, 0], vec![0, 1]]);
        let l = Subspace::span_digits(2, 3, &[vec![1, 1, 0]]);
        assert_eq!(l.row_digits(), vec![vec![1, 1, 0]]);
        let d = Subspace::span_digits(2, 3, &[vec![1, 1, 0], vec![1, 1, 0]]);
        assert_eq!(d.dim(), 1);
        assert_eq!(Subspace::span(2, 0, &[]).dim(), 0);
    }

    #[test]
    fn r_subspaces_examples() {
        let plane = Subspace::full(2, 2);
        let lines = r_subspaces_of(&plane, 1);
        assert_eq!(lines.len(), 3);
        let s = Subspace::span_digits(2, 4, &[vec![1, 0, 1, 0], vec![0, 1, 1, 1]]);
        let ls = r_subspaces_of(&s, 1);
        assert_eq!(ls.len(), 3);
        assert!(ls.iter().all(|l| s.contains(l)));
        assert_eq!(r_subspaces_of(&s, 2), vec![s.clone()]);
        let q3 = Subspace::full(3, 3);
        let planes = q3.subspaces(2);
        assert_eq!(planes.len(), 13);
        let set: std::collections::BTreeSet<_> = planes.iter().cloned().collect();
        assert_eq!(set.len(), 13);
    }

    #[test]
    fn meet_join_examples() {
        let a = Subspace::span_digits(2, 2, &[vec![1, 0]]);
        let b = Subspace::span_digits(2, 2, &[vec![0, 1]]);
        let (m, j, d) = meet_join(&a, &b).unwrap();
        assert_eq!(m.dim(), 0);
        assert_eq!(j, Subspace::full(2, 2));
        assert_eq!(d, (0, 2));
        let (m, j, _) = meet_join(&a, &a).unwrap();
        assert_eq!((m, j), (a.clone(), a));
    }

    #[test]
    fn supersets_count() {
        let l = Subspace::span_digits(2, 4, &[vec![0, 1, 1, 0]]);
        let planes = l.supersets(2).unwrap();
        assert_eq!(planes.len(), 7);
        assert!(planes.iter().all(|p| p.contains(&l) && p.dim() == 2));
        let l3 = Subspace::span_digits(3, 3, &[vec![1, 2, 0]]);
        assert_eq!(l3.supersets(2).unwrap().len(), 4);
    }

    #[test]
    fn literal_roundtrip() {
        let s = Subspace::span_digits(2, 4, &[vec![1, 0, 0, 0], vec![0, 1, 1, 0]]);
        assert_eq!(s.literal(), "1000;0110");
        assert_eq!(Subspace::parse_literal(2, 4, "1000;0110").unwrap(), s);
        assert_eq!(Subspace::parse_literal(2, 4, "~").unwrap(), Subspace::zero(2, 4));
        assert!(Subspace::parse_literal(2, 4, "1000;1000").is_err());
        assert!(Subspace::parse_literal(2, 4, "1200").is_err());
    }

    #[test]
    fn gl_orders() {
        assert_eq!(gl_order(2, 2), BigUint::from(6u32));
        assert_eq!(gl_order(3, 2), BigUint::from(168u32));
        assert_eq!(gl_order(0, 2), BigUint::one());
    }

    fn arb_vecs(q: u32, n: u32) -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0..vector::count(q, n), 0..6)
    }

    proptest! {
        #[test]
        fn modular_law_q2(a in arb_vecs(2, 5), b in arb_vecs(2, 5)) {
            let sa = Subspace::span(2, 5, &a);
            let sb = Subspace::span(2, 5, &b);
            let (m, j, (dm, dj)) = meet_join(&sa, &sb).unwrap();
            prop_assert_eq!(dm + dj, sa.dim() + sb.dim());
            prop_assert!(sa.contains(&m) && sb.contains(&m));
            prop_assert!(j.contains(&sa) && j.contains(&sb));
        }

        #[test]
        fn modular_law_q3(a in arb_vecs(3, 4), b in arb_vecs(3, 4)) {
            let sa = Subspace::span(3, 4, &a);
            let sb = Subspace::span(3, 4, &b);
            let (m, _, (dm, dj)) = meet_join(&sa, &sb).unwrap();
            prop_assert_eq!(dm + dj, sa.dim() + sb.dim());
            prop_assert!(sa.contains(&m) && sb.contains(&m));
        }

        #[test]
        fn canonicalize_idempotent_and_order_free(mut a in arb_vecs(3, 4)) {
            let s = Subspace::span(3, 4, &a);
            prop_assert_eq!(&Subspace::span(3, 4, s.rows()), &s);
            a.reverse();
            prop_assert_eq!(&Subspace::span(3, 4, &a), &s);
            for &v in &a {
                prop_assert!(s.contains_vec(v));
            }
        }

        #[test]
        fn subspaces_distinct_and_contained(a in arb_vecs(2, 5), r in 0usize..4) {
            let s = Subspace::span(2, 5, &a);
            let subs = s.subspaces(r);
            let set: std::collections::BTreeSet<_> = subs.iter().cloned().collect();
            prop_assert_eq!(set.len(), subs.len());
            prop_assert!(subs.iter().all(|t| s.contains(t) && t.dim() == r));
            let want = gaussian_binomial(s.dim() as u64, r as u64, 2);
            prop_assert_eq!(BigUint::from(subs.len()), want);
        }
    }
}
