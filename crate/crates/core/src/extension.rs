//! q-extensions: counting embeddings of small patterns into a q-system,
//! typicality and boundedness with respect to a host.

use crate::error::{Error, Result};
use crate::gf::field;
use crate::linalg;
use crate::qsystem::SignedQSystem;
use crate::subspace::{enumerate_grassmannian, gaussian_binomial, Subspace};
use crate::vector;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

/// Largest dimension of Vec(H) accepted by the extension counter.
pub const MAX_PATTERN_DIM: u32 = 6;
/// Budget on leaves visited by one extension count.
pub const EXTENSION_BUDGET: u64 = 50_000_000;
/// Budget on (pattern subsets × stabilizer elements) during class enumeration.
pub const CLASS_BUDGET: u64 = 200_000_000;

/// E = (φ, F, H): H is a set of r-subspaces of Vec(H) = F_q^h, F ≤ F_q^h,
/// and φ sends the RREF basis of F injectively into F_q^n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QExtension {
    pub q: u32,
    pub h: u32,
    pub r: u32,
    pub pattern: Vec<Subspace>,
    pub base: Subspace,
    pub phi: Vec<u64>,
    pub n: u32,
}

impl QExtension {
    pub fn new(n: u32, pattern: Vec<Subspace>, base: Subspace, phi: Vec<u64>, r: u32) -> Result<Self> {
        let q = base.q();
        let h = base.n();
        if h > MAX_PATTERN_DIM {
            return Err(Error::budget("dim Vec(H)", h, MAX_PATTERN_DIM));
        }
        if pattern.iter().any(|p| p.q() != q || p.n() != h || p.dim() != r as usize) {
            return Err(Error::InvalidParameter("pattern spaces must be r-subspaces of Vec(H)".into()));
        }
        if phi.len() != base.dim() || Subspace::span(q, n, &phi).dim() != base.dim() {
            return Err(Error::InvalidParameter("φ must be injective on F".into()));
        }
        Ok(QExtension { q, h, r, pattern, base, phi, n })
    }

    /// Members of H not contained in F.
    pub fn outside(&self) -> Vec<&Subspace> {
        self.pattern.iter().filter(|p| !self.base.contains(p)).collect()
    }

    pub fn e_e(&self) -> usize {
        self.outside().len()
    }

    pub fn v_e(&self) -> u32 {
        self.h - self.base.dim() as u32
    }
}

/// Walks all injective completions of φ to Vec(H), pruning on the
/// `required` spaces (which must land in `host`'s positive support).
struct Walker<'a> {
    q: u32,
    n: u32,
    a: usize,
    v: usize,
    /// For each required space: rows as coordinates in the basis (F rows,
    /// complement units), and the number of complement vectors it needs.
    required: Vec<(Vec<Vec<u32>>, usize)>,
    host: &'a SignedQSystem,
    budget: u64,
    visited: u64,
}

fn coordinates_in_basis(q: u32, h: u32, base: &Subspace, space: &Subspace) -> Vec<Vec<u32>> {
    let f = field(q).unwrap();
    let piv = base.pivots();
    let mut basis: Vec<Vec<u32>> = base.row_digits();
    for c in (0..h).filter(|c| !piv.contains(c)) {
        let mut e = vec![0u32; h as usize];
        e[c as usize] = 1;
        basis.push(e);
    }
    let bt = linalg::transpose(&basis);
    space
        .row_digits()
        .iter()
        .map(|row| linalg::solve(&f, &bt, row).expect("basis spans Vec(H)").0)
        .collect()
}

fn image(q: u32, n: u32, coords: &[Vec<u32>], images: &[u64]) -> Subspace {
    let f = field(q).unwrap();
    let rows: Vec<u64> = coords
        .iter()
        .map(|c| vector::combine(&f, n, &c[..images.len()], images))
        .collect();
    Subspace::span(q, n, &rows)
}

impl<'a> Walker<'a> {
    fn new(e: &QExtension, required: &[&Subspace], host: &'a SignedQSystem) -> Self {
        let a = e.base.dim();
        let req = required
            .iter()
            .map(|s| {
                let c = coordinates_in_basis(e.q, e.h, &e.base, s);
                let need = c
                    .iter()
                    .map(|row| row[a..].iter().rposition(|&x| x != 0).map_or(0, |p| p + 1))
                    .max()
                    .unwrap_or(0);
                (c, need)
            })
            .collect();
        Walker {
            q: e.q,
            n: e.n,
            a,
            v: e.v_e() as usize,
            required: req,
            host,
            budget: EXTENSION_BUDGET,
            visited: 0,
        }
    }

    fn ok_at(&self, level: usize, images: &[u64]) -> bool {
        self.required.iter().filter(|(_, need)| *need == level).all(|(c, _)| {
            let full: Vec<Vec<u32>> = c.iter().map(|row| row[..images.len()].to_vec()).collect();
            self.host.has(&image(self.q, self.n, &full, images))
        })
    }

    fn walk(&mut self, images: &mut Vec<u64>, leaf: &mut dyn FnMut(&[u64])) -> Result<()> {
        let level = images.len() - self.a;
        if !self.ok_at(level, images) {
            return Ok(());
        }
        if level == self.v {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(Error::budget("extension leaves", self.visited, self.budget));
            }
            leaf(images);
            return Ok(());
        }
        let span = Subspace::span(self.q, self.n, images);
        for y in 0..vector::count(self.q, self.n) {
            if span.contains_vec(y) {
                continue;
            }
            images.push(y);
            self.walk(images, leaf)?;
            images.pop();
        }
        Ok(())
    }
}

/// |X_E(G)|: injective linear maps Vec(H) → F_q^n extending φ with every
/// member of H outside F landing in the positive support of G.
pub fn count_extensions(e: &QExtension, g: &SignedQSystem) -> Result<BigUint> {
    if g.q() != e.q || g.n() != e.n || g.k() != e.r {
        return Err(Error::InvalidParameter("extension and system live in different spaces".into()));
    }
    let outside = e.outside();
    let mut w = Walker::new(e, &outside, g);
    let mut count = BigUint::zero();
    let mut images = e.phi.clone();
    w.walk(&mut images, &mut |_| count += 1u32)?;
    Ok(count)
}

/// X^R_E(L, J) = Σ over extensions φ* of E = (φ, F, H \ {R}) into L of |J_{φ*(R)}|.
pub fn weighted_extensions(e: &QExtension, designated: &Subspace, host: &SignedQSystem, j: &SignedQSystem) -> Result<BigInt> {
    let outside: Vec<&Subspace> = e.outside().into_iter().filter(|s| *s != designated).collect();
    let coords = coordinates_in_basis(e.q, e.h, &e.base, designated);
    let mut w = Walker::new(e, &outside, host);
    let mut total = BigInt::zero();
    let mut images = e.phi.clone();
    let (q, n) = (e.q, e.n);
    w.walk(&mut images, &mut |im| {
        total += j.get(&image(q, n, &coords, im)).abs();
    })?;
    Ok(total)
}

/// A representative (H, F) up to the stabilizer of F in GL(Vec(H)),
/// optionally with a designated member R ∈ H \ H[F].
#[derive(Clone, Debug)]
pub struct PatternClass {
    pub base: Subspace,
    pub pattern: Vec<Subspace>,
    pub designated: Option<Subspace>,
}

fn all_matrices(q: u32, t: u32) -> Result<Vec<Vec<u64>>> {
    let total = (q as u64).checked_pow(t * t).filter(|&x| x <= 1 << 22).ok_or_else(|| {
        Error::budget("GL enumeration", format!("{}^{}", q, t * t), 1u64 << 22)
    })?;
    let per_row = vector::count(q, t);
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let rows: Vec<u64> = (0..t)
            .map(|_| {
                let r = c % per_row;
                c /= per_row;
                r
            })
            .collect();
        if Subspace::span(q, t, &rows).dim() == t as usize {
            out.push(rows);
        }
    }
    Ok(out)
}

/// Enumerates pattern classes with dim Vec(H) ≤ h.
pub fn pattern_classes(q: u32, r: u32, h: u32, designated: bool) -> Result<Vec<PatternClass>> {
    if h > MAX_PATTERN_DIM {
        return Err(Error::budget("dim Vec(H)", h, MAX_PATTERN_DIM));
    }
    let mut out = Vec::new();
    for t in r.max(1)..=h {
        let gl = all_matrices(q, t)?;
        let spaces = enumerate_grassmannian(t, r, q)?;
        for a in 0..t {
            let base = Subspace::coordinate(q, t, &((t - a)..t).collect::<Vec<_>>());
            let free: Vec<Subspace> = spaces.iter().filter(|s| !base.contains(s)).cloned().collect();
            let m = free.len();
            if m > 24 {
                return Err(Error::budget("pattern subsets", format!("2^{}", m), "2^24"));
            }
            let stab: Vec<Vec<usize>> = gl
                .iter()
                .filter(|g| base.map_linear(g, t) == base)
                .map(|g| {
                    free.iter()
                        .map(|s| free.binary_search(&s.map_linear(g, t)).expect("stabilizer preserves the complement"))
                        .collect()
                })
                .collect();
            let work = (1u64 << m) * stab.len() as u64;
            if work > CLASS_BUDGET {
                return Err(Error::budget("pattern class enumeration", work, CLASS_BUDGET));
            }
            let slots = if designated { m.max(1) } else { 1 };
            let mut seen = vec![false; (1usize << m) * slots];
            for mask in 0..(1u64 << m) {
                let picks: Vec<Option<usize>> = if designated {
                    (0..m).filter(|i| mask >> i & 1 == 1).map(Some).collect()
                } else {
                    vec![None]
                };
                for pick in picks {
                    let key = mask as usize * slots + pick.unwrap_or(0);
                    if seen[key] {
                        continue;
                    }
                    for perm in &stab {
                        let img = (0..m)
                            .filter(|i| mask >> i & 1 == 1)
                            .fold(0usize, |acc, i| acc | 1 << perm[i]);
                        let ip = pick.map_or(0, |p| perm[p]);
                        seen[img * slots + ip] = true;
                    }
                    out.push(PatternClass {
                        base: base.clone(),
                        pattern: (0..m).filter(|i| mask >> i & 1 == 1).map(|i| free[i].clone()).collect(),
                        designated: pick.map(|p| free[p].clone()),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// All injective images of a basis of F (ordered bases of a-dim subspaces).
fn injective_bases(q: u32, n: u32, a: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(q: u32, n: u32, a: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == a {
            out.push(cur.clone());
            return;
        }
        let span = Subspace::span(q, n, cur);
        for y in 0..vector::count(q, n) {
            if !span.contains_vec(y) {
                cur.push(y);
                rec(q, n, a, cur, out);
                cur.pop();
            }
        }
    }
    rec(q, n, a, &mut cur, &mut out);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionWitness {
    pub base: String,
    pub pattern: Vec<String>,
    pub designated: Option<String>,
    pub phi: Vec<String>,
    pub observed: String,
    pub expected: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TypicalityReport {
    pub pass: bool,
    pub extensions_checked: usize,
    /// Worst relative deviation |X_E/expected − 1|; None means infinite.
    pub worst_deviation: Option<String>,
    pub worst: Option<ExtensionWitness>,
}

fn density(g: &SignedQSystem) -> BigRational {
    let size = BigInt::from(gaussian_binomial(g.n() as u64, g.k() as u64, g.q() as u64));
    let support = g.iter().filter(|(_, c)| c.is_positive()).count();
    BigRational::new(BigInt::from(support), size)
}

fn witness(e: &QExtension, designated: Option<&Subspace>, observed: String, expected: String) -> ExtensionWitness {
    ExtensionWitness {
        base: e.base.literal(),
        pattern: e.pattern.iter().map(|p| p.literal()).collect(),
        designated: designated.map(|d| d.literal()),
        phi: e.phi.iter().map(|&v| vector::unpack(e.q, e.n, v).iter().map(|d| d.to_string()).collect()).collect(),
        observed,
        expected,
    }
}

fn qpow(q: u32, e: u64) -> BigInt {
    num_traits::pow(BigInt::from(q), e as usize)
}

/// Checks X_E(G) = (1 ± c) d(G)^{e_E} q^{v_E n} over all extension classes
/// with dim Vec(H) ≤ h.
pub fn typicality_check(g: &SignedQSystem, c: &BigRational, h: u32) -> Result<TypicalityReport> {
    let (q, n, r) = (g.q(), g.n(), g.k());
    let d = density(g);
    let mut checked = 0;
    let mut worst: Option<(Option<BigRational>, ExtensionWitness)> = None;
    for class in pattern_classes(q, r, h, false)? {
        let a = class.base.dim();
        for phi in injective_bases(q, n, a) {
            let e = QExtension::new(n, class.pattern.clone(), class.base.clone(), phi, r)?;
            let x = BigInt::from(count_extensions(&e, g)?);
            let expected = num_traits::pow(d.clone(), e.e_e()) * BigRational::from(qpow(q, e.v_e() as u64 * n as u64));
            let dev = if expected.is_zero() {
                None
            } else {
                Some((BigRational::from(x.clone()) / &expected - BigRational::one()).abs())
            };
            checked += 1;
            let worse = match &worst {
                None => true,
                Some((None, _)) => false,
                Some((Some(w), _)) => dev.as_ref().is_none_or(|dv| dv > w),
            };
            if worse {
                worst = Some((dev, witness(&e, None, x.to_string(), expected.to_string())));
            }
        }
    }
    let (pass, worst_deviation, worst) = match worst {
        None => (true, Some("0".to_string()), None),
        Some((dev, w)) => (dev.as_ref().is_some_and(|dv| dv <= c), dev.map(|d| d.to_string()), Some(w)),
    };
    Ok(TypicalityReport { pass, extensions_checked: checked, worst_deviation, worst })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessReport {
    pub pass: bool,
    pub extensions_checked: usize,
    /// Largest observed X^R_E(L,J) / (d(L)^{e_E} q^{v_E n}).
    pub worst_ratio: String,
    pub worst: Option<ExtensionWitness>,
}

/// Checks X^R_E(L, J) ≤ θ d(L)^{e_E} q^{v_E n} for every class (H, F, R)
/// with dim Vec(H) ≤ h, where e_E counts H \ H[F] without R.
pub fn bounded_wrt(j: &SignedQSystem, host: &SignedQSystem, theta: &BigRational, h: u32) -> Result<BoundednessReport> {
    if (j.q(), j.n(), j.k()) != (host.q(), host.n(), host.k()) {
        return Err(Error::InvalidParameter("J and L live in different Grassmannians".into()));
    }
    let (q, n, r) = (j.q(), j.n(), j.k());
    let d = density(host);
    let mut checked = 0;
    let mut worst: Option<(BigRational, ExtensionWitness)> = None;
    let mut pass = true;
    for class in pattern_classes(q, r, h, true)? {
        let designated = class.designated.clone().expect("designated class");
        for phi in injective_bases(q, n, class.base.dim()) {
            let e = QExtension::new(n, class.pattern.clone(), class.base.clone(), phi, r)?;
            let x = BigRational::from(weighted_extensions(&e, &designated, host, j)?);
            let scale = num_traits::pow(d.clone(), e.e_e() - 1) * BigRational::from(qpow(q, e.v_e() as u64 * n as u64));
            checked += 1;
            if x > theta * &scale {
                pass = false;
            }
            let ratio = if scale.is_zero() {
                if x.is_zero() { BigRational::zero() } else { x.clone() }
            } else {
                &x / &scale
            };
            if worst.as_ref().is_none_or(|(w, _)| &ratio > w) {
                worst = Some((ratio, witness(&e, Some(&designated), x.to_string(), scale.to_string())));
            }
        }
    }
    let (worst_ratio, worst) = match worst {
        None => ("0".into(), None),
        Some((r, w)) => (r.to_string(), Some(w)),
    };
    Ok(BoundednessReport { pass, extensions_checked: checked, worst_ratio, worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: u32, k: u32) -> SignedQSystem {
        SignedQSystem::indicator(2, n, k, &enumerate_grassmannian(n, k, 2).unwrap())
    }

    fn brute_completions(q: u32, n: u32, a: u32, v: u32) -> u64 {
        (0..v).map(|i| (q as u64).pow(n) - (q as u64).pow(a + i)).product()
    }

    #[test]
    fn empty_pattern_counts_all_completions() {
        let base = Subspace::coordinate(2, 2, &[1]);
        let e = QExtension::new(3, vec![], base, vec![0b001], 1).unwrap();
        assert_eq!(count_extensions(&e, &full(3, 1)).unwrap(), BigUint::from(8u32 - 2));
        let e2 = QExtension::new(3, vec![], Subspace::zero(2, 2), vec![], 1).unwrap();
        assert_eq!(count_extensions(&e2, &full(3, 1)).unwrap(), BigUint::from(brute_completions(2, 3, 0, 2)));
    }

    #[test]
    fn point_to_line_extension() {
        // H = the three points of F_2^2, F = one of them.
        let h = enumerate_grassmannian(2, 1, 2).unwrap();
        let base = Subspace::coordinate(2, 2, &[1]);
        let e = QExtension::new(3, h, base, vec![0b100], 1).unwrap();
        assert_eq!(e.e_e(), 2);
        assert_eq!(count_extensions(&e, &full(3, 1)).unwrap(), BigUint::from(6u32));
        assert_eq!(count_extensions(&e, &SignedQSystem::new(2, 3, 1)).unwrap(), BigUint::zero());
    }

    #[test]
    fn full_grassmannian_matches_closed_form() {
        for n in 3..=5u32 {
            let g = full(n, 1);
            for class in pattern_classes(2, 1, 2, false).unwrap() {
                let a = class.base.dim() as u32;
                let phi = injective_bases(2, n, a as usize).into_iter().next().unwrap();
                let e = QExtension::new(n, class.pattern, class.base, phi, 1).unwrap();
                let want = brute_completions(2, n, a, e.v_e());
                assert_eq!(count_extensions(&e, &g).unwrap(), BigUint::from(want));
            }
        }
    }

    #[test]
    fn class_counts() {
        // t=1: F=0 with H ∈ {∅, {line}}; t=2: F=0 gives 4 classes by size,
        // F a point gives 3 classes (0, 1 or 2 of the other points).
        let c = pattern_classes(2, 1, 2, false).unwrap();
        assert_eq!(c.len(), 2 + 4 + 3);
    }

    #[test]
    fn typicality_examples() {
        let eps = BigRational::new(1.into(), 2.into());
        let rep = typicality_check(&full(6, 1), &eps, 2).unwrap();
        assert!(rep.pass, "{:?}", rep);
        let rep = typicality_check(&SignedQSystem::new(2, 4, 1), &BigRational::from(BigInt::from(1000)), 2).unwrap();
        assert!(!rep.pass);
        assert!(rep.worst_deviation.is_none());
    }

    #[test]
    fn boundedness_examples() {
        let host = full(4, 1);
        let zero = SignedQSystem::new(2, 4, 1);
        assert!(bounded_wrt(&zero, &host, &BigRational::zero(), 2).unwrap().pass);
        assert!(bounded_wrt(&host, &host, &BigRational::one(), 2).unwrap().pass);
        let theta = BigRational::new(1.into(), 4.into());
        let mut spike = SignedQSystem::new(2, 4, 1);
        spike.add_term(Subspace::coordinate(2, 4, &[0]), 16 / 4 + 1);
        let rep = bounded_wrt(&spike, &host, &theta, 1).unwrap();
        assert!(!rep.pass);
    }
}
