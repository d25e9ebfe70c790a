//! Signed multi-q-systems: sparse integer vectors over a Grassmannian.

use crate::error::{Error, Result};
use crate::subspace::Subspace;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

/// An element of Z^{Gr_q(n,k)} with no stored zeros.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignedQSystem {
    q: u32,
    n: u32,
    k: u32,
    entries: BTreeMap<Subspace, BigInt>,
}

impl SignedQSystem {
    pub fn new(q: u32, n: u32, k: u32) -> Self {
        SignedQSystem { q, n, k, entries: BTreeMap::new() }
    }

    /// Multiset indicator: each occurrence adds 1.
    pub fn indicator<'a, I>(q: u32, n: u32, k: u32, spaces: I) -> Self
    where
        I: IntoIterator<Item = &'a Subspace>,
    {
        let mut s = Self::new(q, n, k);
        for x in spaces {
            s.add_term(x.clone(), 1);
        }
        s
    }

    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_key(&self, s: &Subspace) {
        assert!(
            s.q() == self.q && s.n() == self.n && s.dim() == self.k as usize,
            "subspace {} does not belong to Gr_{}({},{})",
            s,
            self.q,
            self.n,
            self.k
        );
    }

    pub fn add_term(&mut self, s: Subspace, c: impl Into<BigInt>) {
        self.check_key(&s);
        let c = c.into();
        if c.is_zero() {
            return;
        }
        match self.entries.entry(s) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn set(&mut self, s: Subspace, c: BigInt) {
        self.check_key(&s);
        if c.is_zero() {
            self.entries.remove(&s);
        } else {
            self.entries.insert(s, c);
        }
    }

    pub fn get(&self, s: &Subspace) -> BigInt {
        self.entries.get(s).cloned().unwrap_or_default()
    }

    /// Whether the coefficient at s is positive.
    pub fn has(&self, s: &Subspace) -> bool {
        self.entries.get(s).is_some_and(|c| c.is_positive())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Subspace, &BigInt)> {
        self.entries.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Subspace> {
        self.entries.keys()
    }

    pub fn positive_part(&self) -> Self {
        self.filtered(|c| c.is_positive())
    }

    pub fn negative_part(&self) -> Self {
        self.filtered(|c| c.is_negative())
    }

    fn filtered(&self, keep: impl Fn(&BigInt) -> bool) -> Self {
        SignedQSystem {
            q: self.q,
            n: self.n,
            k: self.k,
            entries: self
                .entries
                .iter()
                .filter(|(_, c)| keep(c))
                .map(|(s, c)| (s.clone(), c.clone()))
                .collect(),
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.q, self.n, self.k) != (other.q, other.n, other.k) {
            return Err(Error::InvalidParameter(format!(
                "q-systems over Gr_{}({},{}) and Gr_{}({},{})",
                self.q, self.n, self.k, other.q, other.n, other.k
            )));
        }
        Ok(())
    }

    /// a·self + b·other.
    pub fn combine(&self, a: &BigInt, other: &Self, b: &BigInt) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = Self::new(self.q, self.n, self.k);
        for (s, c) in &self.entries {
            out.add_term(s.clone(), a * c);
        }
        for (s, c) in &other.entries {
            out.add_term(s.clone(), b * c);
        }
        Ok(out)
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.combine(&BigInt::one(), other, &BigInt::one())
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.combine(&BigInt::one(), other, &-BigInt::one())
    }

    pub fn scaled(&self, a: &BigInt) -> Self {
        let mut out = Self::new(self.q, self.n, self.k);
        for (s, c) in &self.entries {
            out.add_term(s.clone(), a * c);
        }
        out
    }

    pub fn max_abs(&self) -> BigInt {
        self.entries.values().map(|c| c.abs()).max().unwrap_or_default()
    }

    pub fn total(&self) -> BigInt {
        self.entries.values().sum()
    }

    /// Sum of |coefficients|.
    pub fn mass(&self) -> BigInt {
        self.entries.values().map(|c| c.abs()).sum()
    }

    /// Whether every coefficient is 1 (a set of subspaces).
    pub fn is_set(&self) -> bool {
        self.entries.values().all(|c| c.is_one())
    }

    /// ∂_{k,r}: each k-space maps to the sum of its r-subspaces.
    pub fn boundary(&self, r: u32) -> Result<Self> {
        boundary(self, r)
    }

    pub fn to_text(&self) -> String {
        serialize(self)
    }
}

/// ∂_{s,r} Φ = Σ_S Φ_S Σ_{R ≤ S, dim R = r} e_R.
pub fn boundary(phi: &SignedQSystem, r: u32) -> Result<SignedQSystem> {
    if r > phi.k {
        return Err(Error::InvalidParameter(format!(
            "boundary to dimension {} from {}",
            r, phi.k
        )));
    }
    let mut acc: HashMap<Subspace, BigInt> = HashMap::new();
    for (s, c) in &phi.entries {
        for sub in s.subspaces(r as usize) {
            *acc.entry(sub).or_default() += c;
        }
    }
    let mut out = SignedQSystem::new(phi.q, phi.n, r);
    for (s, c) in acc {
        out.set(s, c);
    }
    Ok(out)
}

/// Maxima over (r-1)-spaces Q of Σ_{R ≥ Q} |J⁺_R| and Σ_{R ≥ Q} |J⁻_R|.
pub fn codegree_profile(j: &SignedQSystem) -> Result<(BigInt, BigInt)> {
    if j.k == 0 {
        return Err(Error::InvalidParameter("codegree needs dimension >= 1".into()));
    }
    let mut pos: HashMap<Subspace, BigInt> = HashMap::new();
    let mut neg: HashMap<Subspace, BigInt> = HashMap::new();
    for (r, c) in &j.entries {
        let target = if c.is_positive() { &mut pos } else { &mut neg };
        for qs in r.subspaces(j.k as usize - 1) {
            *target.entry(qs).or_default() += c.abs();
        }
    }
    let max = |m: &HashMap<Subspace, BigInt>| m.values().max().cloned().unwrap_or_default();
    Ok((max(&pos), max(&neg)))
}

pub fn serialize(phi: &SignedQSystem) -> String {
    let mut out = format!("qsystem q={} n={} k={}\n", phi.q, phi.n, phi.k);
    for (s, c) in &phi.entries {
        writeln!(out, "{} {}", c, s.literal()).unwrap();
    }
    out
}

pub fn parse(text: &str) -> Result<SignedQSystem> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut fields = header.split_whitespace();
    if fields.next() != Some("qsystem") {
        return Err(perr(1, "header must start with 'qsystem'".into()));
    }
    let mut vals = [None; 3];
    for f in fields {
        let (key, v) = f
            .split_once('=')
            .ok_or_else(|| perr(1, format!("bad header field '{}'", f)))?;
        let v: u32 = v.parse().map_err(|_| perr(1, format!("bad number in '{}'", f)))?;
        let slot = match key {
            "q" => 0,
            "n" => 1,
            "k" => 2,
            _ => return Err(perr(1, format!("unknown header field '{}'", key))),
        };
        vals[slot] = Some(v);
    }
    let [Some(q), Some(n), Some(k)] = vals else {
        return Err(perr(1, "header needs q, n and k".into()));
    };
    if crate::gf::prime_power(q as u64).is_none() || q > 36 {
        return Err(perr(1, format!("q={} is not a supported prime power", q)));
    }
    if k > n {
        return Err(perr(1, format!("k={} exceeds n={}", k, n)));
    }
    let mut sys = SignedQSystem::new(q, n, k);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (c, lit) = line
            .trim()
            .split_once(' ')
            .ok_or_else(|| perr(lineno, "expected '<coefficient> <subspace>'".into()))?;
        let c: BigInt = c
            .parse()
            .map_err(|_| perr(lineno, format!("bad coefficient '{}'", c)))?;
        if c.is_zero() {
            return Err(perr(lineno, "zero coefficients are not stored".into()));
        }
        let s = Subspace::parse_literal(q, n, lit.trim()).map_err(|m| perr(lineno, m))?;
        if s.dim() != k as usize {
            return Err(perr(lineno, format!("subspace has dimension {} not {}", s.dim(), k)));
        }
        if sys.entries.contains_key(&s) {
            return Err(perr(lineno, format!("duplicate subspace {}", s)));
        }
        sys.entries.insert(s, c);
    }
    Ok(sys)
}
