//! The design lattice ∂_{s,r} Z^{Gr_q(n,s)}: divisibility, the inclusion
//! matrix and its determinant, local decoding, exact membership, flattening
//! and sparse bases.

use crate::error::{Error, Result};
use crate::qsystem::{codegree_profile, SignedQSystem};
use crate::selfcheck::{check_boundary, maybe_corrupt};
use crate::subspace::{enumerate_grassmannian, gaussian_binomial, random_frame, Subspace};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Largest inclusion matrix side handled by the dense determinant.
pub const KANTOR_BUDGET: usize = 2000;
/// Largest boundary matrix (rows × columns) handled by the Smith form.
pub const MEMBERSHIP_BUDGET: usize = 50_000;
/// Largest Δ for the machine-word mod-Δ basis.
pub const GREEDY_DELTA_LIMIT: i128 = 1 << 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivisibilityReport {
    pub pass: bool,
    pub failing: Vec<u32>,
}

fn check_order(n: u32, s: u32, r: u32) -> Result<()> {
    if !(n >= s && s > r && r >= 1) {
        return Err(Error::InvalidParameter(format!(
            "need n >= s > r >= 1, got n={}, s={}, r={}",
            n, s, r
        )));
    }
    Ok(())
}

/// Checks [s−i, r−i]_q | λ [n−i, r−i]_q for 0 ≤ i < r.
pub fn divisibility_check(n: u32, s: u32, r: u32, lambda: u64, q: u32) -> Result<DivisibilityReport> {
    check_order(n, s, r)?;
    if lambda == 0 {
        return Err(Error::InvalidParameter("λ must be positive".into()));
    }
    let failing: Vec<u32> = (0..r)
        .filter(|&i| {
            let d = gaussian_binomial((s - i) as u64, (r - i) as u64, q as u64);
            let num = gaussian_binomial((n - i) as u64, (r - i) as u64, q as u64) * lambda;
            !(num % d).is_zero()
        })
        .collect();
    Ok(DivisibilityReport { pass: failing.is_empty(), failing })
}

/// Inclusion matrix of r-spaces against s-spaces of F_q^{r+s}.
#[derive(Clone, Debug)]
pub struct InclusionMatrix {
    pub q: u32,
    pub r: u32,
    pub s: u32,
    pub rows: Vec<Subspace>,
    pub cols: Vec<Subspace>,
    pub a: Vec<Vec<u8>>,
}

impl InclusionMatrix {
    pub fn side(&self) -> usize {
        self.rows.len()
    }

    fn bigint(&self) -> Vec<Vec<BigInt>> {
        self.a.iter().map(|row| row.iter().map(|&x| BigInt::from(x)).collect()).collect()
    }
}

fn check_kantor(q: u32, r: u32, s: u32) -> Result<()> {
    if r == 0 || s <= r {
        return Err(Error::InvalidParameter(format!("need s > r >= 1, got r={}, s={}", r, s)));
    }
    let side = gaussian_binomial((r + s) as u64, r as u64, q as u64);
    if side > KANTOR_BUDGET.into() {
        return Err(Error::budget("inclusion matrix side", side, KANTOR_BUDGET));
    }
    Ok(())
}

/// |det| of an integer matrix by fraction-free (Bareiss) elimination.
pub fn abs_det(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut prev = BigInt::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return BigInt::zero();
        };
        a.swap(k, p);
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    if n == 0 {
        BigInt::one()
    } else {
        a[n - 1][n - 1].abs()
    }
}

/// Builds A and Δ = |det A|.
pub fn kantor(q: u32, r: u32, s: u32) -> Result<(InclusionMatrix, BigInt)> {
    check_kantor(q, r, s)?;
    let h = r + s;
    let rows = enumerate_grassmannian(h, r, q)?;
    let cols = enumerate_grassmannian(h, s, q)?;
    let a = rows
        .iter()
        .map(|rr| cols.iter().map(|c| c.contains(rr) as u8).collect())
        .collect();
    let m = InclusionMatrix { q, r, s, rows, cols, a };
    let delta = abs_det(&m.bigint());
    if delta.is_zero() {
        return Err(Error::Degenerate(format!("singular inclusion matrix for q={}, r={}, s={}", q, r, s)));
    }
    Ok((m, delta))
}

/// Solves a square rational system; None when singular.
fn solve_rational(a: Vec<Vec<BigRational>>, b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .into_iter()
        .zip(b)
        .map(|(mut row, x)| {
            row.push(x);
            row
        })
        .collect();
    for k in 0..n {
        let p = (k..n).find(|&i| !m[i][k].is_zero())?;
        m.swap(k, p);
        let inv = m[k][k].recip();
        for j in k..=n {
            m[k][j] = &m[k][j] * &inv;
        }
        for i in 0..n {
            if i != k && !m[i][k].is_zero() {
                let c = m[i][k].clone();
                for j in k..=n {
                    let t = &c * &m[k][j];
                    m[i][j] -= t;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Δ e_{R₀} = Σ_S a_S ∂ e_S inside T₀ = F_q^{r+s}, R₀ = span(e_0..e_{r−1}).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeGadget {
    pub q: u32,
    pub r: u32,
    pub s: u32,
    pub r0: Subspace,
    pub t0: Subspace,
    pub coeffs: Vec<(Subspace, BigInt)>,
    pub delta: BigInt,
}

#[derive(Serialize, Deserialize)]
struct GadgetHeader {
    q: u32,
    r: u32,
    s: u32,
    delta: String,
}

impl DecodeGadget {
    pub fn as_qsystem(&self) -> SignedQSystem {
        let mut out = SignedQSystem::new(self.q, self.r + self.s, self.s);
        for (s, c) in &self.coeffs {
            out.add_term(s.clone(), c.clone());
        }
        out
    }

    /// Image of the gadget under the injective map e_j ↦ frame[j] into F_q^n.
    pub fn transport(&self, frame: &[u64], n: u32) -> SignedQSystem {
        let mut out = SignedQSystem::new(self.q, n, self.s);
        for (s, c) in &self.coeffs {
            out.add_term(s.map_linear(frame, n), c.clone());
        }
        out
    }

    /// Image of R₀ under the same map.
    pub fn transported_root(&self, frame: &[u64], n: u32) -> Subspace {
        self.r0.map_linear(frame, n)
    }

    pub fn verify(&self) -> Result<()> {
        let mut target = SignedQSystem::new(self.q, self.r + self.s, self.r);
        target.add_term(self.r0.clone(), self.delta.clone());
        check_boundary(&self.as_qsystem(), &target, "local decode gadget")
    }

    /// JSON header line followed by the q-system text.
    pub fn to_text(&self) -> String {
        let h = GadgetHeader { q: self.q, r: self.r, s: self.s, delta: self.delta.to_string() };
        format!("{}\n{}", serde_json::to_string(&h).unwrap(), self.as_qsystem().to_text())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text.split_once('\n').ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let h: GadgetHeader =
            serde_json::from_str(head).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        let delta: BigInt = h.delta.parse().map_err(|_| Error::Parse { line: 1, msg: "bad delta".into() })?;
        let sys = crate::qsystem::parse(body).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Parse { line: line + 1, msg },
            other => other,
        })?;
        if (sys.q(), sys.n(), sys.k()) != (h.q, h.r + h.s, h.s) {
            return Err(Error::Parse { line: 2, msg: "q-system shape disagrees with header".into() });
        }
        let g = DecodeGadget {
            q: h.q,
            r: h.r,
            s: h.s,
            r0: Subspace::coordinate(h.q, h.r + h.s, &(0..h.r).collect::<Vec<_>>()),
            t0: Subspace::full(h.q, h.r + h.s),
            coeffs: sys.iter().map(|(s, c)| (s.clone(), c.clone())).collect(),
            delta,
        };
        g.verify()?;
        Ok(g)
    }
}

/// Cramer solution of A a = Δ e_{R₀}, verified by substitution.
pub fn local_decode(q: u32, r: u32, s: u32) -> Result<DecodeGadget> {
    let (m, delta) = kantor(q, r, s)?;
    let h = r + s;
    let r0 = Subspace::coordinate(q, h, &(0..r).collect::<Vec<_>>());
    let i0 = m.rows.binary_search(&r0).expect("R0 is an r-space");
    let a: Vec<Vec<BigRational>> = m
        .a
        .iter()
        .map(|row| row.iter().map(|&x| BigRational::from(BigInt::from(x))).collect())
        .collect();
    let mut b = vec![BigRational::zero(); m.side()];
    b[i0] = BigRational::from(delta.clone());
    let sol = solve_rational(a, b).ok_or_else(|| Error::Degenerate("singular inclusion matrix".into()))?;
    let mut coeffs = Vec::new();
    for (col, x) in m.cols.iter().zip(sol) {
        if !x.is_integer() {
            return Err(Error::Verification("Cramer solution is not integral".into()));
        }
        if !x.is_zero() {
            coeffs.push((col.clone(), x.to_integer()));
        }
    }
    let mut g = DecodeGadget { q, r, s, r0, t0: Subspace::full(q, h), coeffs, delta };
    let mut phi = g.as_qsystem();
    maybe_corrupt(&mut phi);
    g.coeffs = phi.iter().map(|(x, c)| (x.clone(), c.clone())).collect();
    g.verify()?;
    Ok(g)
}

/// f with e_R = Σ_{S ≤ T} f(dim(S∩R)) ∂ e_S for r-spaces R of an (r+s)-space T.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AveragedCoeffs {
    pub q: u32,
    pub r: u32,
    pub s: u32,
    pub f: Vec<BigRational>,
}

impl AveragedCoeffs {
    /// Σ_S f(dim(S∩R)) ∂ e_S over s-spaces of F_q^{r+s}.
    pub fn expand(&self, rr: &Subspace) -> Result<HashMap<Subspace, BigRational>> {
        let h = self.r + self.s;
        let mut acc: HashMap<Subspace, BigRational> = HashMap::new();
        for s in enumerate_grassmannian(h, self.s, self.q)? {
            let c = &self.f[s.meet(rr).dim()];
            if c.is_zero() {
                continue;
            }
            for sub in s.subspaces(self.r as usize) {
                *acc.entry(sub).or_insert_with(BigRational::zero) += c;
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Ok(acc)
    }

    pub fn verify_at(&self, rr: &Subspace) -> Result<()> {
        let acc = self.expand(rr)?;
        if acc.len() != 1 || acc.get(rr) != Some(&BigRational::one()) {
            return Err(Error::Verification(format!("averaged identity fails at {}", rr)));
        }
        Ok(())
    }
}

/// Reads f off the decode gadget and cross-checks it against the grouped
/// (r+1)-unknown system.
pub fn averaged_coeffs(q: u32, r: u32, s: u32) -> Result<AveragedCoeffs> {
    let g = local_decode(q, r, s)?;
    let h = r + s;
    let cols = enumerate_grassmannian(h, s, q)?;
    let coeff: HashMap<&Subspace, &BigInt> = g.coeffs.iter().map(|(s, c)| (s, c)).collect();
    let mut f: Vec<Option<BigRational>> = vec![None; r as usize + 1];
    for col in &cols {
        let d = col.meet(&g.r0).dim();
        let v = BigRational::new(coeff.get(col).map(|c| (*c).clone()).unwrap_or_default(), g.delta.clone());
        match &f[d] {
            None => f[d] = Some(v),
            Some(w) if *w != v => {
                return Err(Error::Verification(format!("gadget coefficients differ within orbit d={}", d)))
            }
            _ => {}
        }
    }
    let f: Vec<BigRational> = f.into_iter().map(|x| x.expect("every intersection dimension occurs")).collect();

    // Grouped system: one equation per orbit of r-spaces R_j with dim(R_j ∩ R₀) = j.
    let rows = enumerate_grassmannian(h, r, q)?;
    let mut reps: Vec<Option<&Subspace>> = vec![None; r as usize + 1];
    for rr in &rows {
        let j = rr.meet(&g.r0).dim();
        reps[j].get_or_insert(rr);
    }
    let mut a = vec![vec![BigRational::zero(); r as usize + 1]; r as usize + 1];
    for (j, rep) in reps.iter().enumerate() {
        let rep = rep.expect("every intersection dimension occurs");
        for col in cols.iter().filter(|c| c.contains(rep)) {
            a[j][col.meet(&g.r0).dim()] += BigRational::one();
        }
    }
    let mut b = vec![BigRational::zero(); r as usize + 1];
    b[r as usize] = BigRational::one();
    for (row, rhs) in a.iter().zip(&b) {
        let lhs: BigRational = row.iter().zip(&f).map(|(x, y)| x * y).sum();
        if lhs != *rhs {
            return Err(Error::Verification("grouped system disagrees with the gadget".into()));
        }
    }
    if let Some(sol) = solve_rational(a, b) {
        if sol != f {
            return Err(Error::Verification("grouped system has a different solution".into()));
        }
    }
    let out = AveragedCoeffs { q, r, s, f };
    if rows.len() <= 200 {
        for rr in &rows {
            out.verify_at(rr)?;
        }
    } else {
        out.verify_at(&g.r0)?;
    }
    Ok(out)
}

/// U·M·V = D with U, V unimodular and D diagonal with d_0 | d_1 | …
#[derive(Clone, Debug)]
pub struct Smith {
    pub d: Vec<BigInt>,
    pub u: Vec<Vec<BigInt>>,
    pub v: Vec<Vec<BigInt>>,
}

impl Smith {
    pub fn rank(&self) -> usize {
        self.d.iter().take_while(|x| !x.is_zero()).count()
    }
}

fn ident(n: usize) -> Vec<Vec<BigInt>> {
    (0..n).map(|i| (0..n).map(|j| BigInt::from((i == j) as u8)).collect()).collect()
}

fn row_axpy(m: &mut [Vec<BigInt>], dst: usize, c: &BigInt, src: usize) {
    let (a, b) = if dst < src {
        let (lo, hi) = m.split_at_mut(src);
        (&mut lo[dst], &hi[0])
    } else {
        let (lo, hi) = m.split_at_mut(dst);
        (&mut hi[0], &lo[src])
    };
    for (x, y) in a.iter_mut().zip(b.iter()) {
        if !y.is_zero() {
            *x += c * y;
        }
    }
}

fn col_axpy(m: &mut [Vec<BigInt>], dst: usize, c: &BigInt, src: usize) {
    for row in m.iter_mut() {
        if !row[src].is_zero() {
            let t = c * &row[src];
            row[dst] += t;
        }
    }
}

fn swap_cols(m: &mut [Vec<BigInt>], a: usize, b: usize) {
    for row in m.iter_mut() {
        row.swap(a, b);
    }
}

/// Smith normal form with transforms, in exact integer arithmetic.
pub fn smith(m: &[Vec<BigInt>]) -> Smith {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut a = m.to_vec();
    let mut u = ident(rows);
    let mut v = ident(cols);
    let mut d = Vec::new();
    for t in 0..rows.min(cols) {
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !a[i][j].is_zero() && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        a.swap(t, pi);
        u.swap(t, pi);
        swap_cols(&mut a, t, pj);
        swap_cols(&mut v, t, pj);
        loop {
            let mut clean = true;
            for i in t + 1..rows {
                if a[i][t].is_zero() {
                    continue;
                }
                let c = -(&a[i][t] / &a[t][t]);
                row_axpy(&mut a, i, &c, t);
                row_axpy(&mut u, i, &c, t);
                clean &= a[i][t].is_zero();
            }
            for j in t + 1..cols {
                if a[t][j].is_zero() {
                    continue;
                }
                let c = -(&a[t][j] / &a[t][t]);
                col_axpy(&mut a, j, &c, t);
                col_axpy(&mut v, j, &c, t);
                clean &= a[t][j].is_zero();
            }
            if !clean {
                // Move the smallest remainder into the pivot and repeat.
                let mut best = (t, t);
                for i in t + 1..rows {
                    if !a[i][t].is_zero() && a[i][t].abs() < a[best.0][best.1].abs() {
                        best = (i, t);
                    }
                }
                for j in t + 1..cols {
                    if !a[t][j].is_zero() && a[t][j].abs() < a[best.0][best.1].abs() {
                        best = (t, j);
                    }
                }
                if best.0 != t {
                    a.swap(t, best.0);
                    u.swap(t, best.0);
                } else if best.1 != t {
                    swap_cols(&mut a, t, best.1);
                    swap_cols(&mut v, t, best.1);
                }
                continue;
            }
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !(&a[i][j] % &a[t][t]).is_zero()));
            match bad {
                Some(i) => {
                    let one = BigInt::one();
                    row_axpy(&mut a, t, &one, i);
                    row_axpy(&mut u, t, &one, i);
                }
                None => break,
            }
        }
        if a[t][t].is_negative() {
            for x in a[t].iter_mut() {
                *x = -&*x;
            }
            for x in u[t].iter_mut() {
                *x = -&*x;
            }
        }
        d.push(a[t][t].clone());
    }
    d.resize(rows.min(cols), BigInt::zero());
    Smith { d, u, v }
}

/// Non-membership witness: y·∂ ≡ 0 and y·J ≢ 0 modulo `modulus`
/// (modulus 0 means exact integer equality).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub dual: SignedQSystem,
    pub modulus: BigInt,
    pub pairing: BigInt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Membership {
    Member(SignedQSystem),
    NonMember(Certificate),
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member(_))
    }
}

fn reduces_to_zero(x: &BigInt, m: &BigInt) -> bool {
    if m.is_zero() {
        x.is_zero()
    } else {
        (x % m).is_zero()
    }
}

/// Decides J ∈ ∂_{s,r} Z^{Gr_q(n,s)} exactly; returns a verified preimage or
/// a verified certificate.
pub fn lattice_membership(j: &SignedQSystem, s: u32) -> Result<Membership> {
    let (q, n, r) = (j.q(), j.n(), j.k());
    check_order(n, s, r)?;
    let rows_n = gaussian_binomial(n as u64, r as u64, q as u64);
    let cols_n = gaussian_binomial(n as u64, s as u64, q as u64);
    let size = &rows_n * &cols_n;
    if size > MEMBERSHIP_BUDGET.into() {
        return Err(Error::budget("boundary matrix entries", size, MEMBERSHIP_BUDGET));
    }
    let rs = enumerate_grassmannian(n, r, q)?;
    let ss = enumerate_grassmannian(n, s, q)?;
    let index: HashMap<&Subspace, usize> = rs.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut m = vec![vec![BigInt::zero(); ss.len()]; rs.len()];
    for (c, sp) in ss.iter().enumerate() {
        for sub in sp.subspaces(r as usize) {
            m[index[&sub]][c] = BigInt::one();
        }
    }
    let sm = smith(&m);
    let jv: Vec<BigInt> = rs.iter().map(|x| j.get(x)).collect();
    let z: Vec<BigInt> = sm.u.iter().map(|row| row.iter().zip(&jv).map(|(a, b)| a * b).sum()).collect();
    let rank = sm.rank();
    let failing = (0..rs.len()).find(|&i| {
        let modulus = if i < rank { sm.d[i].clone() } else { BigInt::zero() };
        !reduces_to_zero(&z[i], &modulus)
    });
    match failing {
        None => {
            let y: Vec<BigInt> = (0..ss.len())
                .map(|i| if i < rank { &z[i] / &sm.d[i] } else { BigInt::zero() })
                .collect();
            let mut phi = SignedQSystem::new(q, n, s);
            for (row, sp) in sm.v.iter().zip(&ss) {
                let c: BigInt = row.iter().zip(&y).map(|(a, b)| a * b).sum();
                phi.add_term(sp.clone(), c);
            }
            maybe_corrupt(&mut phi);
            check_boundary(&phi, j, "lattice preimage")?;
            Ok(Membership::Member(phi))
        }
        Some(i) => {
            let modulus = if i < rank { sm.d[i].clone() } else { BigInt::zero() };
            let mut dual = SignedQSystem::new(q, n, r);
            for (c, x) in sm.u[i].iter().zip(&rs) {
                dual.add_term(x.clone(), c.clone());
            }
            let cert = Certificate { dual, modulus, pairing: z[i].clone() };
            verify_certificate(&cert, j, s)?;
            Ok(Membership::NonMember(cert))
        }
    }
}

/// Re-checks a certificate against the boundary of every s-space.
pub fn verify_certificate(cert: &Certificate, j: &SignedQSystem, s: u32) -> Result<()> {
    let (q, n, r) = (j.q(), j.n(), j.k());
    for sp in enumerate_grassmannian(n, s, q)? {
        let v: BigInt = sp.subspaces(r as usize).iter().map(|x| cert.dual.get(x)).sum();
        if !reduces_to_zero(&v, &cert.modulus) {
            return Err(Error::Verification(format!("certificate does not annihilate ∂e_{}", sp)));
        }
    }
    let pairing: BigInt = j.iter().map(|(x, c)| c * cert.dual.get(x)).sum();
    if pairing != cert.pairing || reduces_to_zero(&pairing, &cert.modulus) {
        return Err(Error::Verification("certificate does not separate J".into()));
    }
    Ok(())
}

/// Rounds every coefficient toward zero to a multiple of Δ: J = J0 + Jp.
pub fn flatten(j: &SignedQSystem, delta: &BigInt) -> Result<(SignedQSystem, SignedQSystem)> {
    if *delta < BigInt::one() {
        return Err(Error::InvalidParameter("Δ must be at least 1".into()));
    }
    let mut j0 = SignedQSystem::new(j.q(), j.n(), j.k());
    let mut jp = SignedQSystem::new(j.q(), j.n(), j.k());
    for (x, c) in j.iter() {
        let base = (c / delta) * delta;
        jp.add_term(x.clone(), c - &base);
        j0.add_term(x.clone(), base);
    }
    debug_assert!(jp.iter().all(|(_, c)| c.abs() < *delta));
    Ok((j0, jp))
}

/// Triangular basis of ΔZ^N + span(rows), with entries kept in [0, Δ).
struct ModDeltaSpan {
    delta: i128,
    b: Vec<Vec<i128>>,
}

impl ModDeltaSpan {
    fn new(n: usize, delta: i128) -> Self {
        let b = (0..n)
            .map(|i| {
                let mut row = vec![0; n];
                row[i] = delta;
                row
            })
            .collect();
        ModDeltaSpan { delta, b }
    }

    fn reduce_row(&self, v: &mut [i128], from: usize) {
        for x in v[from..].iter_mut() {
            *x = x.rem_euclid(self.delta);
        }
    }

    fn contains(&self, v: &[i128]) -> bool {
        let mut v = v.to_vec();
        self.reduce_row(&mut v, 0);
        for j in 0..v.len() {
            if v[j] == 0 {
                continue;
            }
            let p = self.b[j][j];
            if v[j] % p != 0 {
                return false;
            }
            let c = v[j] / p;
            for k in j..v.len() {
                v[k] -= c * self.b[j][k];
            }
            self.reduce_row(&mut v, j + 1);
        }
        true
    }

    fn insert(&mut self, v: &[i128]) {
        let mut v = v.to_vec();
        self.reduce_row(&mut v, 0);
        for j in 0..v.len() {
            if v[j] == 0 {
                continue;
            }
            let p = self.b[j][j];
            let e = p.extended_gcd(&v[j]);
            let (g, x, y) = (e.gcd, e.x, e.y);
            let (pg, vg) = (p / g, v[j] / g);
            let bj = self.b[j].clone();
            for k in j..v.len() {
                let nb = x * bj[k] + y * v[k];
                let nv = pg * v[k] - vg * bj[k];
                self.b[j][k] = nb;
                v[k] = nv;
            }
            self.b[j][j] = g;
            for k in j + 1..v.len() {
                self.b[j][k] = self.b[j][k].rem_euclid(self.delta);
            }
            self.reduce_row(&mut v, j + 1);
            v[j] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseBasis {
    pub s_set: Vec<Subspace>,
    pub saturated: Vec<Subspace>,
}

/// Single lexicographic pass over the s-spaces supported on `host`, keeping
/// S when ∂e_S is new modulo Δ and no (r−1)-space of S is saturated.
pub fn greedy_sparse_basis(host: &SignedQSystem, s: u32, delta: &BigInt, cap: usize) -> Result<SparseBasis> {
    let (q, n, r) = (host.q(), host.n(), host.k());
    check_order(n, s, r)?;
    if !host.iter().all(|(_, c)| c.is_one()) {
        return Err(Error::InvalidParameter("host must be a {0,1} q-system".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidParameter("cap must be positive".into()));
    }
    let d = delta
        .to_i128()
        .filter(|&d| (1..=GREEDY_DELTA_LIMIT).contains(&d))
        .ok_or_else(|| Error::budget("Δ for the word-size mod-Δ basis", delta, GREEDY_DELTA_LIMIT))?;
    let index: HashMap<&Subspace, usize> = host.support().enumerate().map(|(i, x)| (x, i)).collect();
    let mut span = ModDeltaSpan::new(index.len(), d);
    let mut counts: HashMap<Subspace, usize> = HashMap::new();
    let mut s_set = Vec::new();
    let mut checked = Vec::new();
    if !index.is_empty() {
        for sp in enumerate_grassmannian(n, s, q)? {
            let subs = sp.subspaces(r as usize);
            if !subs.iter().all(|x| index.contains_key(x)) {
                continue;
            }
            let lower = sp.subspaces(r as usize - 1);
            let mut v = vec![0i128; index.len()];
            for x in &subs {
                v[index[x]] += 1;
            }
            let blocked = lower.iter().any(|x| counts.get(x).copied().unwrap_or(0) >= cap);
            if !blocked && !span.contains(&v) {
                span.insert(&v);
                for x in lower {
                    *counts.entry(x).or_default() += 1;
                }
                s_set.push(sp.clone());
            }
            checked.push((sp, v));
        }
    }
    let mut saturated: Vec<Subspace> = counts.into_iter().filter(|(_, c)| *c >= cap).map(|(x, _)| x).collect();
    saturated.sort();
    // Postconditions.
    for (sp, v) in &checked {
        if !span.contains(v) && !sp.subspaces(r as usize - 1).iter().any(|x| saturated.binary_search(x).is_ok()) {
            return Err(Error::Verification(format!("{} is independent but unblocked", sp)));
        }
    }
    if BigInt::from(s_set.len()) > delta * BigInt::from(index.len()) {
        return Err(Error::Verification("chain-length bound exceeded".into()));
    }
    Ok(SparseBasis { s_set, saturated })
}

#[derive(Clone, Debug)]
pub struct DecodeOutcome {
    pub phi: SignedQSystem,
    pub delta: BigInt,
    pub copies: usize,
    /// Max (r−1)-codegree of ∂Φ⁺ and of ∂Φ⁻.
    pub codegree_pos: BigInt,
    pub codegree_neg: BigInt,
}

/// Writes J = Δ Σ ±e_R and replaces every copy by a randomly transported
/// decode gadget.
pub fn decode_delta_multiple<R: Rng + ?Sized>(j: &SignedQSystem, s: u32, rng: &mut R) -> Result<DecodeOutcome> {
    let (q, n, r) = (j.q(), j.n(), j.k());
    if n < r + s {
        return Err(Error::InvalidParameter(format!("need n >= r + s, got n={}", n)));
    }
    let gadget = local_decode(q, r, s)?;
    let delta = gadget.delta.clone();
    let mut phi = SignedQSystem::new(q, n, s);
    let mut copies = 0;
    for (rr, c) in j.iter() {
        let (mult, rem) = c.div_rem(&delta);
        if !rem.is_zero() {
            return Err(Error::InvalidParameter(format!("coefficient {} at {} is not a multiple of Δ = {}", c, rr, delta)));
        }
        let sign = BigInt::from(mult.signum());
        let times = mult.abs().to_usize().ok_or_else(|| Error::budget("copies", &mult, usize::MAX))?;
        for _ in 0..times {
            let frame = random_frame(rng, rr, s as usize);
            for (sp, a) in &gadget.coeffs {
                phi.add_term(sp.map_linear(&frame, n), &sign * a);
            }
            copies += 1;
        }
    }
    maybe_corrupt(&mut phi);
    check_boundary(&phi, j, "Δ-multiple decode")?;
    let codegree_pos = codegree_profile(&phi.positive_part().boundary(r)?)?.0;
    let codegree_neg = codegree_profile(&phi.negative_part().boundary(r)?)?.1;
    Ok(DecodeOutcome { phi, delta, copies, codegree_pos, codegree_neg })
}
