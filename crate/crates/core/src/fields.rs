//! The field tower F_q ⊂ L = F_{q^ℓ} ⊂ K = F_{q^{ℓm}} and F_q-linear
//! injections of K into F_q^n.

use crate::error::{Error, Result};
use crate::gf::{self, Gf};
use crate::linalg::{self, Mat};
use crate::subspace::Subspace;
use crate::vector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Parameters of a tower, written "p^e:ell:m" on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TowerSpec {
    pub p: u32,
    pub e: u32,
    pub ell: u32,
    pub m: u32,
}

impl fmt::Display for TowerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}:{}:{}", self.p, self.e, self.ell, self.m)
    }
}

impl FromStr for TowerSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("tower spec '{}' is not p^e:ell:m", s));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (p, e) = parts[0].split_once('^').ok_or_else(bad)?;
        let num = |x: &str| x.trim().parse::<u32>().map_err(|_| bad());
        Ok(TowerSpec {
            p: num(p)?,
            e: num(e)?,
            ell: num(parts[1])?,
            m: num(parts[2])?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Base,
    L,
    K,
}

/// An element of one level of a tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElem {
    pub level: Level,
    pub code: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Mul,
    Inv,
    Pow(u64),
}

#[derive(Debug)]
pub struct FieldTower {
    spec: TowerSpec,
    q: u32,
    base: Arc<Gf>,
    l: Arc<Gf>,
    k: Arc<Gf>,
    base_to_l: Vec<u32>,
    l_to_k: Vec<u32>,
    base_to_k: Vec<u32>,
    /// F_q coordinates of each K element in the basis 1, α, ..., α^{ℓm-1},
    /// packed with coordinate j at place q^j.
    k_coords: Vec<u64>,
    k_from_coords: Vec<u32>,
}

/// Embedding of `small` into `big` as a table, sending the defining root of
/// `small` to the first root of its polynomial among generators of the
/// subfield of `big` of the same order.
fn embedding(small: &Gf, big: &Gf) -> Result<Vec<u32>> {
    let so = small.order() as u64 - 1;
    let bo = big.order() as u64 - 1;
    if so == 0 {
        return Ok(vec![0, 1]);
    }
    if bo % so != 0 {
        return Err(Error::InvalidParameter("field does not embed".into()));
    }
    let step = bo / so;
    let mut poly = small.poly().to_vec();
    poly.push(1);
    for j in 1..=so {
        if num_integer::gcd(j, so) != 1 {
            continue;
        }
        let beta = big.exp(step * j);
        if big.eval_prime_poly(&poly, beta) == 0 {
            let mut t = vec![0u32; small.order() as usize];
            for (a, slot) in t.iter_mut().enumerate().skip(1) {
                let la = small.log(a as u32).unwrap() as u64;
                *slot = big.exp(la * step * j);
            }
            return Ok(t);
        }
    }
    Err(Error::Degenerate("no root of the subfield polynomial found".into()))
}

pub fn build_tower(p: u32, e: u32, ell: u32, m: u32) -> Result<FieldTower> {
    FieldTower::new(TowerSpec { p, e, ell, m })
}

impl FieldTower {
    pub fn new(spec: TowerSpec) -> Result<FieldTower> {
        let TowerSpec { p, e, ell, m } = spec;
        if !gf::is_prime(p as u64) {
            return Err(Error::NotPrime(p as u64));
        }
        if e == 0 || ell == 0 || m == 0 {
            return Err(Error::InvalidParameter("e, ell, m must be >= 1".into()));
        }
        let deg_k = e
            .checked_mul(ell)
            .and_then(|x| x.checked_mul(m))
            .ok_or_else(|| Error::budget("tower degree", "overflow", gf::MAX_FIELD_ORDER))?;
        let q = (p as u64)
            .checked_pow(e)
            .filter(|&q| q <= u32::MAX as u64)
            .ok_or_else(|| Error::budget("base field", format!("{}^{}", p, e), gf::MAX_FIELD_ORDER))?
            as u32;
        // Reject before building any table.
        let kk = Gf::new(p, deg_k)?;
        let base = gf::field(q)?;
        let l = Gf::new(p, e * ell)?;
        let k = Arc::new(kk);
        let l = Arc::new(l);
        let base_to_l = embedding(&base, &l)?;
        let l_to_k = embedding(&l, &k)?;
        let base_to_k: Vec<u32> = base_to_l.iter().map(|&x| l_to_k[x as usize]).collect();
        let dim = (ell * m) as usize;
        let size = k.order() as usize;
        let alpha = k.alpha();
        let powers: Vec<u32> = (0..dim as u64).map(|j| k.pow(alpha, j)).collect();
        let mut k_from_coords = vec![0u32; size];
        let mut k_coords = vec![u64::MAX; size];
        let qq = q as u64;
        for (packed, slot) in k_from_coords.iter_mut().enumerate() {
            let mut c = packed as u64;
            let mut x = 0;
            for pw in &powers {
                let d = (c % qq) as usize;
                c /= qq;
                x = k.add(x, k.mul(base_to_k[d], *pw));
            }
            *slot = x;
            if k_coords[x as usize] != u64::MAX {
                return Err(Error::Degenerate("power basis is not a basis".into()));
            }
            k_coords[x as usize] = packed as u64;
        }
        Ok(FieldTower {
            spec,
            q,
            base,
            l,
            k,
            base_to_l,
            l_to_k,
            base_to_k,
            k_coords,
            k_from_coords,
        })
    }

    pub fn spec(&self) -> TowerSpec {
        self.spec
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn ell(&self) -> u32 {
        self.spec.ell
    }
    pub fn m(&self) -> u32 {
        self.spec.m
    }
    /// F_q-dimension ℓm of K.
    pub fn k_dim(&self) -> u32 {
        self.spec.ell * self.spec.m
    }
    pub fn field(&self, level: Level) -> &Gf {
        match level {
            Level::Base => &self.base,
            Level::L => &self.l,
            Level::K => &self.k,
        }
    }
    pub fn base(&self) -> &Gf {
        &self.base
    }
    pub fn lfield(&self) -> &Gf {
        &self.l
    }
    pub fn kfield(&self) -> &Gf {
        &self.k
    }
    /// The primitive element α of K.
    pub fn alpha(&self) -> FieldElem {
        FieldElem { level: Level::K, code: self.k.alpha() }
    }

    pub fn elem(&self, level: Level, code: u32) -> Result<FieldElem> {
        if code >= self.field(level).order() {
            return Err(Error::InvalidParameter(format!("code {} outside {:?}", code, level)));
        }
        Ok(FieldElem { level, code })
    }

    pub fn arith(&self, a: FieldElem, b: FieldElem, op: FieldOp) -> Result<FieldElem> {
        let f = self.field(a.level);
        let code = match op {
            FieldOp::Inv => f.inv(a.code)?,
            FieldOp::Pow(e) => f.pow(a.code, e),
            FieldOp::Add | FieldOp::Mul => {
                if a.level != b.level {
                    return Err(Error::LevelMismatch(format!("{:?} vs {:?}", a.level, b.level)));
                }
                if op == FieldOp::Add {
                    f.add(a.code, b.code)
                } else {
                    f.mul(a.code, b.code)
                }
            }
        };
        Ok(FieldElem { level: a.level, code })
    }

    /// Image of an L element in K under the stored embedding.
    pub fn embed_subfield(&self, x: FieldElem) -> Result<FieldElem> {
        match x.level {
            Level::L => Ok(FieldElem { level: Level::K, code: self.l_to_k[x.code as usize] }),
            Level::Base => Ok(FieldElem { level: Level::L, code: self.base_to_l[x.code as usize] }),
            Level::K => Err(Error::LevelMismatch("K has no larger level".into())),
        }
    }

    pub fn l_to_k(&self, x: u32) -> u32 {
        self.l_to_k[x as usize]
    }
    pub fn base_to_k(&self, x: u32) -> u32 {
        self.base_to_k[x as usize]
    }
    pub fn base_to_l(&self, x: u32) -> u32 {
        self.base_to_l[x as usize]
    }
    /// Whether a K element lies in the image of F_q.
    pub fn k_in_base(&self, x: u32) -> bool {
        self.base_to_k.contains(&x)
    }
    pub fn l_in_base(&self, x: u32) -> bool {
        self.base_to_l.contains(&x)
    }

    /// F_q coordinates (c_0, ..., c_{ℓm-1}) of x = Σ c_j α^j.
    pub fn coords(&self, x: u32) -> Vec<u32> {
        let mut c = self.k_coords[x as usize];
        let q = self.q as u64;
        (0..self.k_dim())
            .map(|_| {
                let d = (c % q) as u32;
                c /= q;
                d
            })
            .collect()
    }

    pub fn from_coords(&self, c: &[u32]) -> u32 {
        let q = self.q as u64;
        let packed = c.iter().rev().fold(0u64, |acc, &d| acc * q + d as u64);
        self.k_from_coords[packed as usize]
    }

    /// K coordinates as a packed vector of F_q^{ℓm} (coordinate 0 first).
    pub fn coord_vec(&self, x: u32) -> u64 {
        vector::pack(self.q, &self.coords(x))
    }

    pub fn from_coord_vec(&self, v: u64) -> u32 {
        self.from_coords(&vector::unpack(self.q, self.k_dim(), v))
    }

    /// F_q-span of K elements as a subspace of F_q^{ℓm}.
    pub fn fq_span(&self, xs: &[u32]) -> Subspace {
        let v: Vec<u64> = xs.iter().map(|&x| self.coord_vec(x)).collect();
        Subspace::span(self.q, self.k_dim(), &v)
    }

    /// L-span of K elements, as an F_q-subspace of F_q^{ℓm}.
    pub fn l_span(&self, xs: &[u32]) -> Subspace {
        let beta = self.l_to_k[self.l.alpha() as usize];
        let mut v = Vec::with_capacity(xs.len() * self.ell() as usize);
        for &x in xs {
            let mut y = x;
            for _ in 0..self.ell() {
                v.push(self.coord_vec(y));
                y = self.k.mul(y, beta);
            }
        }
        Subspace::span(self.q, self.k_dim(), &v)
    }

    /// dim_L span_L(xs).
    pub fn l_dim(&self, xs: &[u32]) -> usize {
        self.l_span(xs).dim() / self.ell() as usize
    }

    /// All K elements as codes.
    pub fn k_elements(&self) -> std::ops::Range<u32> {
        0..self.k.order()
    }

    /// L elements as codes inside K.
    pub fn l_elements_in_k(&self) -> Vec<u32> {
        self.l_to_k.clone()
    }
}

/// ι: K → F_q^n given by a full-rank n × ℓm matrix W over F_q.
#[derive(Clone, Debug)]
pub struct LinearInjection {
    q: u32,
    n: u32,
    k_dim: u32,
    w: Mat,
    image: Vec<u64>,
    preimage: HashMap<u64, u32>,
    image_space: Subspace,
}

pub const INJECTION_RETRY_CAP: usize = 64;

impl LinearInjection {
    pub fn from_matrix(tower: &FieldTower, n: u32, w: Mat) -> Result<LinearInjection> {
        let kd = tower.k_dim();
        vector::check_len(tower.q(), n)?;
        if n < kd {
            return Err(Error::InvalidParameter(format!(
                "ambient dimension {} below ℓm = {}",
                n, kd
            )));
        }
        if w.len() != n as usize || w.iter().any(|r| r.len() != kd as usize) {
            return Err(Error::InvalidParameter("W has the wrong shape".into()));
        }
        if linalg::rank(tower.base(), &w) != kd as usize {
            return Err(Error::Degenerate("W is not of full column rank".into()));
        }
        let f = tower.base();
        let q = tower.q();
        let mut image = Vec::with_capacity(tower.kfield().order() as usize);
        let mut preimage = HashMap::new();
        for x in tower.k_elements() {
            let c = tower.coords(x);
            let v = vector::pack(q, &linalg::mat_vec(f, &w, &c));
            image.push(v);
            preimage.insert(v, x);
        }
        let cols: Vec<u64> = (0..kd as usize)
            .map(|j| vector::pack(q, &w.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        let image_space = Subspace::span(q, n, &cols);
        Ok(LinearInjection { q, n, k_dim: kd, w, image, preimage, image_space })
    }

    /// The coordinate map, valid when n = ℓm.
    pub fn identity(tower: &FieldTower) -> Result<LinearInjection> {
        let kd = tower.k_dim() as usize;
        Self::from_matrix(tower, kd as u32, linalg::identity(kd))
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn matrix(&self) -> &Mat {
        &self.w
    }
    pub fn image_space(&self) -> &Subspace {
        &self.image_space
    }

    pub fn inject(&self, x: u32) -> u64 {
        self.image[x as usize]
    }

    pub fn inject_inverse(&self, v: u64) -> Option<u32> {
        self.preimage.get(&v).copied()
    }

    /// Preimages of all basis rows of S, or None when S ⊄ ι(K).
    pub fn pull_back(&self, s: &Subspace) -> Option<Vec<u32>> {
        s.rows().iter().map(|&v| self.inject_inverse(v)).collect()
    }

    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn k_dim(&self) -> u32 {
        self.k_dim
    }
}

/// Uniform full-rank W by rejection sampling.
pub fn sample_injection<R: Rng>(tower: &FieldTower, n: u32, rng: &mut R) -> Result<LinearInjection> {
    let kd = tower.k_dim();
    if n < kd {
        return Err(Error::InvalidParameter(format!(
            "ambient dimension {} below ℓm = {}",
            n, kd
        )));
    }
    let q = tower.q();
    for _ in 0..INJECTION_RETRY_CAP {
        let w: Mat = (0..n)
            .map(|_| (0..kd).map(|_| rng.gen_range(0..q)).collect())
            .collect();
        if linalg::rank(tower.base(), &w) == kd as usize {
            return LinearInjection::from_matrix(tower, n, w);
        }
    }
    Err(Error::Process(format!(
        "no full-rank W after {} draws",
        INJECTION_RETRY_CAP
    )))
}

/// dim_L span_L(ι^{-1}(S)), or None when S is not inside ι(K).
pub fn span_dim_over_l(tower: &FieldTower, iota: &LinearInjection, s: &Subspace) -> Option<usize> {
    let xs = iota.pull_back(s)?;
    Some(tower.l_dim(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_tower() {
        let t = build_tower(2, 1, 1, 1).unwrap();
        assert_eq!(t.kfield().order(), 2);
        assert_eq!(t.alpha().code, 1);
    }

    #[test]
    fn f16_alpha_order_by_repeated_multiplication() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        assert_eq!(t.lfield().order(), 4);
        let k = t.kfield();
        let a = t.alpha().code;
        let mut x = 1;
        for i in 1..=15 {
            x = k.mul(x, a);
            assert_eq!(x == 1, i == 15, "alpha^{} = {}", i, x);
        }
    }

    #[test]
    fn f9_exhaustive_axioms() {
        let t = build_tower(3, 1, 2, 1).unwrap();
        let k = t.kfield();
        assert_eq!((t.lfield().order(), k.order()), (9, 9));
        for a in 0..9 {
            for b in 0..9 {
                for c in 0..9 {
                    assert_eq!(k.mul(k.mul(a, b), c), k.mul(a, k.mul(b, c)));
                    assert_eq!(k.add(k.add(a, b), c), k.add(a, k.add(b, c)));
                }
            }
        }
    }

    #[test]
    fn arith_examples() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        let a = t.alpha();
        let one = t.elem(Level::K, 1).unwrap();
        let a14 = t.arith(a, a, FieldOp::Pow(14)).unwrap();
        assert_eq!(t.arith(a, a14, FieldOp::Mul).unwrap(), one);
        assert_eq!(t.arith(a, a, FieldOp::Inv).unwrap(), a14);
        let b = t.elem(Level::Base, 1).unwrap();
        assert_eq!(t.arith(b, b, FieldOp::Add).unwrap().code, 0);
        let zero = t.elem(Level::K, 0).unwrap();
        assert_eq!(t.arith(zero, zero, FieldOp::Inv).unwrap_err(), Error::ZeroInverse);
        let l = t.elem(Level::L, 1).unwrap();
        assert!(matches!(t.arith(l, a, FieldOp::Mul), Err(Error::LevelMismatch(_))));
    }

    #[test]
    fn embedding_is_ring_hom() {
        for spec in [(2, 1, 2, 2), (3, 1, 2, 2), (2, 2, 2, 1), (2, 1, 3, 2)] {
            let t = build_tower(spec.0, spec.1, spec.2, spec.3).unwrap();
            let l = t.lfield();
            let k = t.kfield();
            assert_eq!(t.l_to_k(0), 0);
            assert_eq!(t.l_to_k(1), 1);
            for a in 0..l.order() {
                for b in 0..l.order() {
                    assert_eq!(t.l_to_k(l.mul(a, b)), k.mul(t.l_to_k(a), t.l_to_k(b)));
                    assert_eq!(t.l_to_k(l.add(a, b)), k.add(t.l_to_k(a), t.l_to_k(b)));
                }
            }
            let b = t.base();
            for a in 0..b.order() {
                assert_eq!(t.base_to_k(a), t.l_to_k(t.base_to_l(a)));
            }
        }
    }

    #[test]
    fn coordinates_are_linear_and_bijective() {
        let t = build_tower(2, 2, 1, 2).unwrap();
        let k = t.kfield();
        for x in t.k_elements() {
            assert_eq!(t.from_coords(&t.coords(x)), x);
        }
        let a = t.alpha().code;
        assert_eq!(t.coords(a), vec![0, 1]);
        for x in 0..k.order() {
            for y in 0..k.order() {
                let s = t.coords(k.add(x, y));
                let cx = t.coords(x);
                let cy = t.coords(y);
                let want: Vec<u32> = cx.iter().zip(&cy).map(|(&u, &v)| t.base().add(u, v)).collect();
                assert_eq!(s, want);
            }
        }
    }

    #[test]
    fn bad_towers() {
        assert_eq!(build_tower(4, 1, 1, 1).unwrap_err(), Error::NotPrime(4));
        assert!(matches!(build_tower(2, 1, 23, 1), Err(Error::Budget { .. })));
        assert!("2^1:2".parse::<TowerSpec>().is_err());
        let s: TowerSpec = "2^1:2:2".parse().unwrap();
        assert_eq!(s.to_string(), "2^1:2:2");
    }

    #[test]
    fn injection_roundtrip_and_rank() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let iota = sample_injection(&t, 4, &mut rng).unwrap();
        assert_eq!(linalg::rank(t.base(), iota.matrix()), 4);
        assert_eq!(iota.inject(0), 0);
        let mut seen = std::collections::HashSet::new();
        for x in t.k_elements() {
            let v = iota.inject(x);
            assert!(seen.insert(v));
            assert_eq!(iota.inject_inverse(v), Some(x));
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let again = sample_injection(&t, 4, &mut rng2).unwrap();
        assert_eq!(again.matrix(), iota.matrix());
        assert!(sample_injection(&t, 3, &mut rng).is_err());
    }

    #[test]
    fn injection_is_additive() {
        let t = build_tower(3, 1, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iota = sample_injection(&t, 3, &mut rng).unwrap();
        let k = t.kfield();
        let f = t.base();
        for x in t.k_elements() {
            for y in t.k_elements() {
                let lhs = iota.inject(k.add(x, y));
                let rhs = vector::add(f, 3, iota.inject(x), iota.inject(y));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn vectors_outside_image() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let iota = sample_injection(&t, 5, &mut rng).unwrap();
        let img = iota.image_space().clone();
        let outside = (0..32u64).find(|&v| !img.contains_vec(v)).unwrap();
        assert_eq!(iota.inject_inverse(outside), None);
        let inside = (0..32u64).filter(|&v| img.contains_vec(v)).count();
        assert_eq!(inside, 16);
    }

    #[test]
    fn l_span_dimensions() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        let iota = LinearInjection::identity(&t).unwrap();
        let k = t.kfield();
        let x = 5u32;
        let beta = t.l_to_k(t.lfield().alpha());
        let line: Vec<u64> = [x, k.mul(x, beta)].iter().map(|&y| iota.inject(y)).collect();
        let s = Subspace::span(2, 4, &line);
        assert_eq!(span_dim_over_l(&t, &iota, &s), Some(1));
        let a = t.alpha().code;
        let s2 = Subspace::span(2, 4, &[iota.inject(x), iota.inject(k.mul(x, a))]);
        // α ∉ L when m > 1, so x and αx span two L-dimensions.
        assert_eq!(span_dim_over_l(&t, &iota, &s2), Some(2));
        let iota5 = sample_injection(&t, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let outside = (0..32u64).find(|&v| !iota5.image_space().contains_vec(v)).unwrap();
        let s3 = Subspace::span(2, 5, &[outside]);
        assert_eq!(span_dim_over_l(&t, &iota5, &s3), None);
    }
}
