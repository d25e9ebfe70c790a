//! Desk-scale end-to-end machinery: boosting weights, the greedy nibble,
//! covering the leave into the template, absorber search, spill absorption,
//! exact design verification and the staged pipeline with its JSON report.

use crate::error::{Error, Result};
use crate::fields::Level;
use crate::gadgets::{build_absorber, find_partner, generic_bullet1, generic_matrix, verify_absorber, AbsorberFlip, GenericMatrix};
use crate::lattice::{averaged_coeffs, divisibility_check, lattice_membership, Membership};
use crate::linalg::{self, Mat};
use crate::qsystem::{codegree_profile, SignedQSystem};
use crate::selfcheck::{check_boundary, maybe_corrupt};
use crate::subspace::{enumerate_grassmannian, gaussian_binomial, gaussian_binomial_u64, Subspace};
use crate::template::{
    config_compatible, field_bounded_check, field_disjoint_witness, ind_chi, plain_design, ratio_str, sample_template, tower_str,
    verify_template, TemplateParams, TemplateState,
};
use crate::fields::TowerSpec;
use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Budget on (T, S) incidences examined by boost_weights.
pub const BOOST_BUDGET: u64 = 20_000_000;

fn to_int(x: BigUint) -> BigInt {
    BigInt::from(x)
}

fn gauss(n: u32, k: u32, q: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    to_int(gaussian_binomial(n as u64, k as u64, q as u64))
}

// ---------------------------------------------------------------- boosting

#[derive(Clone, Debug)]
pub struct BoostWeights {
    /// ψ(S) for every unobstructed s-space S.
    pub psi: BTreeMap<Subspace, BigRational>,
    /// c_R for every r-space outside G_tem.
    pub c: BTreeMap<Subspace, BigRational>,
    /// Number of r-spaces at which the degree identity was checked.
    pub checked: usize,
    pub identity_holds: bool,
    /// First r-space where the identity fails, with its degree.
    pub identity_witness: Option<(String, String)>,
    pub max_deviation: BigRational,
    pub deviation_bound: BigRational,
    /// Set when some c_R has an empty denominator; ψ and c are then empty.
    pub skipped: Option<String>,
}

impl BoostWeights {
    pub fn bound_holds(&self) -> bool {
        self.max_deviation <= self.deviation_bound
    }
}

/// Regularity-boosting weights on the unobstructed s-spaces, with the exact
/// degree identity Σ_{S ∋ R} ψ(S) = [n−r s−r]_q checked at every
/// unobstructed R.
pub fn boost_weights(st: &TemplateState) -> Result<BoostWeights> {
    let (q, n, s, r) = (st.q(), st.n(), st.s(), st.r());
    let ru = r as usize;
    let target = gauss(n - r, s - r, q);
    let qq = q as u64;
    let big_t = if r + s <= n { gaussian_binomial_u64(n as u64, (r + s) as u64, qq) } else { Some(0) };
    let work = big_t
        .zip(gaussian_binomial_u64((r + s) as u64, s as u64, qq))
        .and_then(|(a, b)| a.checked_mul(b))
        .zip(gaussian_binomial_u64(n as u64, s as u64, qq))
        .and_then(|(a, b)| a.checked_add(b));
    if work.is_none_or(|w| w > BOOST_BUDGET) {
        return Err(Error::budget("boost enumeration", work.map_or("overflow".into(), |w| w.to_string()), BOOST_BUDGET));
    }
    let obstacles: HashSet<Subspace> = st.g_tem.support().cloned().collect();
    let free = |x: &Subspace| x.subspaces(ru).iter().all(|y| !obstacles.contains(y));

    let t_s: Vec<Subspace> = enumerate_grassmannian(n, s, q)?.into_iter().filter(|x| free(x)).collect();
    let mut ts_count: HashMap<Subspace, u64> = HashMap::new();
    for x in &t_s {
        for y in x.subspaces(ru) {
            *ts_count.entry(y).or_default() += 1;
        }
    }
    let t_rs: Vec<Subspace> = if r + s <= n {
        enumerate_grassmannian(n, r + s, q)?.into_iter().filter(|x| free(x)).collect()
    } else {
        Vec::new()
    };
    let mut trs_count: HashMap<Subspace, u64> = HashMap::new();
    for t in &t_rs {
        for y in t.subspaces(ru) {
            *trs_count.entry(y).or_default() += 1;
        }
    }
    let t_r: Vec<Subspace> = enumerate_grassmannian(n, r, q)?.into_iter().filter(|x| !obstacles.contains(x)).collect();

    let mut c = BTreeMap::new();
    for rr in &t_r {
        let num = &target - BigInt::from(ts_count.get(rr).copied().unwrap_or(0));
        let den = trs_count.get(rr).copied().unwrap_or(0);
        let val = if num.is_zero() {
            BigRational::zero()
        } else if den == 0 {
            return Ok(BoostWeights {
                psi: BTreeMap::new(),
                c: BTreeMap::new(),
                checked: 0,
                identity_holds: false,
                identity_witness: None,
                max_deviation: BigRational::zero(),
                deviation_bound: BigRational::zero(),
                skipped: Some(format!("no unobstructed (r+s)-space contains {}", rr)),
            });
        } else {
            BigRational::new(num, BigInt::from(den))
        };
        c.insert(rr.clone(), val);
    }

    let f = averaged_coeffs(q, r, s)?.f;
    let mut psi: HashMap<Subspace, BigRational> = t_s.iter().map(|x| (x.clone(), BigRational::one())).collect();
    for t in &t_rs {
        let active: Vec<(Subspace, &BigRational)> =
            t.subspaces(ru).into_iter().filter_map(|y| c.get(&y).filter(|v| !v.is_zero()).map(|v| (y, v))).collect();
        if active.is_empty() {
            continue;
        }
        for sp in t.subspaces(s as usize) {
            let mut acc = BigRational::zero();
            for (y, cv) in &active {
                acc += *cv * &f[sp.meet(y).dim()];
            }
            if let Some(v) = psi.get_mut(&sp) {
                *v += acc;
            }
        }
    }

    let mut sums: HashMap<Subspace, BigRational> = HashMap::new();
    for x in &t_s {
        for y in x.subspaces(ru) {
            *sums.entry(y).or_insert_with(BigRational::zero) += &psi[x];
        }
    }
    let target_q = BigRational::from_integer(target);
    let mut identity_witness = None;
    for rr in &t_r {
        let got = sums.get(rr).cloned().unwrap_or_else(BigRational::zero);
        if got != target_q {
            identity_witness = Some((rr.literal(), got.to_string()));
            break;
        }
    }
    let max_c = c.values().map(|v| v.abs()).max().unwrap_or_else(BigRational::zero);
    let max_f = f.iter().map(|v| v.abs()).max().unwrap_or_else(BigRational::zero);
    let count = gauss(n - s, r, q) * gauss(r + s, r, q);
    let deviation_bound = max_c * max_f * BigRational::from_integer(count);
    let max_deviation = psi.values().map(|v| (v - BigRational::one()).abs()).max().unwrap_or_else(BigRational::zero);
    Ok(BoostWeights {
        psi: psi.into_iter().collect(),
        c,
        checked: t_r.len(),
        identity_holds: identity_witness.is_none(),
        identity_witness,
        max_deviation,
        deviation_bound,
        skipped: None,
    })
}

// ------------------------------------------------------------------ nibble

#[derive(Clone, Debug, PartialEq)]
pub struct NibbleRun {
    pub matching: Vec<Subspace>,
    pub leave: SignedQSystem,
    pub vertices: usize,
    /// Edges whose weight was negative and was clamped to zero.
    pub clamped: usize,
    /// Steps where every remaining edge had weight zero and a uniform pick was made.
    pub fallbacks: usize,
}

impl NibbleRun {
    pub fn leave_fraction(&self) -> BigRational {
        if self.vertices == 0 {
            return BigRational::zero();
        }
        BigRational::new(BigInt::from(self.leave.len()), BigInt::from(self.vertices))
    }

    /// Whether ∂(matching) is {0,1}-valued.
    pub fn is_matching(&self) -> Result<bool> {
        let q = self.leave.q();
        let m = SignedQSystem::indicator(q, self.leave.n(), self.matching.first().map_or(self.leave.k(), |x| x.dim() as u32), &self.matching);
        Ok(m.boundary(self.leave.k())?.max_abs() <= BigInt::one())
    }
}

/// Random greedy matching: repeatedly picks an edge all of whose r-spaces are
/// still uncovered, uniformly or proportionally to the given weights, until
/// none remains.
pub fn greedy_nibble<R: Rng + ?Sized>(
    vertices: &SignedQSystem,
    edges: &[Subspace],
    weights: Option<&[BigRational]>,
    rng: &mut R,
) -> Result<NibbleRun> {
    let r = vertices.k() as usize;
    let vs: Vec<&Subspace> = vertices.support().collect();
    let index: HashMap<&Subspace, usize> = vs.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let edge_vs = edges
        .iter()
        .map(|e| {
            e.subspaces(r)
                .iter()
                .map(|x| index.get(x).copied().ok_or_else(|| Error::InvalidParameter(format!("edge {} has r-space {} outside the vertices", e, x))))
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if weights.is_some_and(|w| w.len() != edges.len()) {
        return Err(Error::InvalidParameter("one weight per edge is required".into()));
    }
    let mut covered = vec![false; vs.len()];
    let is_free = |covered: &[bool], e: usize| edge_vs[e].iter().all(|&v| !covered[v]);
    let mut picked = Vec::new();
    let (mut clamped, mut fallbacks) = (0, 0);
    match weights {
        None => {
            let mut pool: Vec<usize> = (0..edges.len()).collect();
            while !pool.is_empty() {
                let e = pool.swap_remove(rng.gen_range(0..pool.len()));
                if is_free(&covered, e) {
                    edge_vs[e].iter().for_each(|&v| covered[v] = true);
                    picked.push(e);
                }
            }
        }
        Some(w) => {
            let lcm = w.iter().fold(BigInt::one(), |a, x| a.lcm(x.denom()));
            let iw: Vec<BigUint> = w
                .iter()
                .map(|x| {
                    let v = (x * BigRational::from_integer(lcm.clone())).to_integer();
                    if v.is_negative() {
                        clamped += 1;
                        BigUint::zero()
                    } else {
                        v.to_biguint().expect("nonnegative")
                    }
                })
                .collect();
            let mut live: Vec<usize> = (0..edges.len()).collect();
            loop {
                live.retain(|&e| is_free(&covered, e));
                if live.is_empty() {
                    break;
                }
                let total: BigUint = live.iter().map(|&e| &iw[e]).sum();
                let e = if total.is_zero() {
                    fallbacks += 1;
                    live[rng.gen_range(0..live.len())]
                } else {
                    let mut t = rng.gen_biguint_below(&total);
                    let mut chosen = live[live.len() - 1];
                    for &e in &live {
                        if t < iw[e] {
                            chosen = e;
                            break;
                        }
                        t -= &iw[e];
                    }
                    chosen
                };
                edge_vs[e].iter().for_each(|&v| covered[v] = true);
                picked.push(e);
            }
        }
    }
    let leave = SignedQSystem::indicator(
        vertices.q(),
        vertices.n(),
        vertices.k(),
        vs.iter().zip(&covered).filter(|(_, &c)| !c).map(|(v, _)| *v),
    );
    Ok(NibbleRun { matching: picked.into_iter().map(|e| edges[e].clone()).collect(), leave, vertices: vs.len(), clamped, fallbacks })
}

// ------------------------------------------------------------- cover leave

#[derive(Clone, Debug)]
pub struct SpillState {
    pub s_cover: Vec<Subspace>,
    /// Template r-spaces covered a second time, {0,1}-valued.
    pub spill: SignedQSystem,
    pub field_disjoint: bool,
    /// Measured max of the field-boundedness statistic of the spill.
    pub field_bound_max: String,
    /// Number of candidates available at each covered leave r-space.
    pub candidates: Vec<usize>,
    /// Leave r-space with no admissible s-space, when the process got stuck.
    pub stuck: Option<Subspace>,
}

impl SpillState {
    pub fn succeeded(&self) -> bool {
        self.stuck.is_none()
    }
}

/// Covers each leave r-space R, in order, by a uniformly chosen s-space S ⊇ R
/// whose other r-subspaces are unused template r-spaces, mutually field
/// disjoint and field disjoint from everything used so far, with S inside the
/// image of each of their colors. With `rainbow` and z > 1 the colors must be
/// distinct.
pub fn cover_leave<R: Rng + ?Sized>(st: &TemplateState, leave: &SignedQSystem, rainbow: bool, rng: &mut R) -> Result<SpillState> {
    let (q, n, s, r) = (st.q(), st.n(), st.s() as usize, st.r());
    if leave.k() != r || leave.q() != q || leave.n() != n || !leave.is_set() {
        return Err(Error::InvalidParameter("the leave must be a {0,1} system of r-spaces of V".into()));
    }
    if let Some(x) = leave.support().find(|x| st.color_of(x).is_some()) {
        return Err(Error::InvalidParameter(format!("leave r-space {} lies in G_tem", x)));
    }
    let mut chi: HashMap<Subspace, HashSet<Subspace>> = HashMap::new();
    let mut chi_of = |x: &Subspace| -> HashSet<Subspace> { chi.entry(x.clone()).or_insert_with(|| ind_chi(st, x).1.into_iter().collect()).clone() };
    let mut used: HashSet<Subspace> = HashSet::new();
    let mut chi_used: HashSet<Subspace> = HashSet::new();
    let mut s_cover = Vec::new();
    let mut candidates = Vec::new();
    let mut stuck = None;
    for rr in leave.support() {
        let mut cands = Vec::new();
        for sp in rr.supersets(s)? {
            let others: Vec<Subspace> = sp.subspaces(r as usize).into_iter().filter(|x| x != rr).collect();
            let colors: Option<Vec<u32>> = others.iter().map(|x| st.color_of(x)).collect();
            let Some(colors) = colors else { continue };
            if others.iter().any(|x| used.contains(x) || chi_used.contains(x)) {
                continue;
            }
            if colors.iter().any(|&c| !st.injections[c as usize].image_space().contains(&sp)) {
                continue;
            }
            if rainbow && st.z() > 1 && colors.iter().collect::<HashSet<_>>().len() != colors.len() {
                continue;
            }
            let chis: Vec<HashSet<Subspace>> = others.iter().map(&mut chi_of).collect();
            let clash = chis.iter().enumerate().any(|(a, ca)| {
                ca.iter().any(|x| used.contains(x)) || others.iter().enumerate().any(|(b, ob)| a != b && ca.contains(ob))
            });
            if !clash {
                cands.push((sp, others, chis));
            }
        }
        candidates.push(cands.len());
        if cands.is_empty() {
            stuck = Some(rr.clone());
            break;
        }
        let (sp, others, chis) = cands.swap_remove(rng.gen_range(0..cands.len()));
        used.extend(others);
        chis.into_iter().for_each(|c| chi_used.extend(c));
        s_cover.push(sp);
    }
    let mut spill_list: Vec<Subspace> = used.into_iter().collect();
    spill_list.sort();
    let spill = SignedQSystem::indicator(q, n, r, &spill_list);
    let field_disjoint = field_disjoint_witness(st, &spill_list).is_none();
    let field_bound_max = field_bounded_check(&spill, st, &BigRational::zero())?.max;
    Ok(SpillState { s_cover, spill, field_disjoint, field_bound_max, candidates, stuck })
}

// ---------------------------------------------------------------- absorbers

/// span(ι_i(T)) for an F_q-subspace T of K given in coordinates.
fn push_forward(st: &TemplateState, i: u32, t: &Subspace) -> Subspace {
    let vecs: Vec<u64> = t.rows().iter().map(|&v| st.injections[i as usize].inject(st.tower().from_coord_vec(v))).collect();
    Subspace::span(st.q(), st.n(), &vecs)
}

#[derive(Clone, Debug)]
pub struct AbsorberSearch {
    /// The compatibility witness b′ = ι_i^{-1}(b), in K.
    pub witness: Vec<u32>,
    /// Solutions (w′, w) of the root equation.
    pub candidates: u64,
    /// Solutions whose coordinates are L-dependent.
    pub degenerate: u64,
    /// Valid absorbers, with their in-flips pushed into V.
    pub valid: Vec<(AbsorberFlip, Vec<Subspace>)>,
}

/// Every absorber valid for color i rooted at ι_i^{-1}(S): solves
/// [N | x*](w′; w) = b′ over K for the compatibility witness b′, keeps
/// L-independent solutions, and keeps those whose in-flip lies in S_tem,i.
pub fn find_valid_absorbers(st: &TemplateState, space: &Subspace, i: u32, xstar: &GenericMatrix, budget: u64) -> Result<AbsorberSearch> {
    let (s, r, u) = (st.s() as usize, st.r() as usize, xstar.cols);
    if xstar.rows != s || xstar.level != Level::L {
        return Err(Error::InvalidParameter("x* must be an s-row matrix over L".into()));
    }
    let rep = config_compatible(st, space, i)?;
    if !rep.pass {
        return Err(Error::InvalidParameter(format!(
            "{} is not configuration compatible for color {} (in K: {}, full L-dimension: {}, basis: {:?})",
            space, i, rep.in_k, rep.full_l_dim, rep.basis_found
        )));
    }
    let tower = st.tower();
    let kf = tower.kfield();
    let witness: Vec<u32> = rep
        .witness
        .expect("compatible spaces carry a witness")
        .iter()
        .map(|&v| st.injections[i as usize].inject_inverse(v).expect("S lies in K_i"))
        .collect();
    let a: Mat = (0..s)
        .map(|row| {
            st.n_mat.entries[row].iter().chain(&xstar.entries[row]).map(|&c| tower.l_to_k(c)).collect()
        })
        .collect();
    let mut out = AbsorberSearch { witness: witness.clone(), candidates: 0, degenerate: 0, valid: Vec::new() };
    let Some((part, kernel)) = linalg::solve(kf, &a, &witness) else {
        return Ok(out);
    };
    let ksize = kf.order() as u64;
    let total = ksize.checked_pow(kernel.len() as u32).filter(|&t| t <= budget);
    let Some(total) = total else {
        return Err(Error::budget("absorber parameters", format!("|K|^{}", kernel.len()), budget));
    };
    let tem: HashSet<&Subspace> = st.members_of(i).map(|m| &m.space).collect();
    for code in 0..total {
        let mut sol = part.clone();
        for (k, kv) in kernel.iter().enumerate() {
            let c = ((code / ksize.pow(k as u32)) % ksize) as u32;
            for (x, &y) in sol.iter_mut().zip(kv) {
                *x = kf.add(*x, kf.mul(c, y));
            }
        }
        out.candidates += 1;
        if tower.l_dim(&sol) != r + u {
            out.degenerate += 1;
            continue;
        }
        let ab = build_absorber(tower, &st.n_mat, xstar, &sol[..r], &sol[r..])?;
        let pushed: Vec<Subspace> = ab.p_in.iter().map(|t| push_forward(st, i, t)).collect();
        if !pushed.iter().all(|t| tem.contains(t)) {
            continue;
        }
        let check = verify_absorber(tower, &ab)?;
        if !check.pass || push_forward(st, i, &ab.root) != *space {
            return Err(Error::Verification(format!("absorber for {} failed re-verification", space)));
        }
        out.valid.push((ab, pushed));
    }
    Ok(out)
}

/// Outcome of the disjoint-choice search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Choice {
    /// One option index per item.
    Found(Vec<usize>),
    /// `item` had every option blocked by the in-flips chosen for `blockers`.
    Conflict { item: usize, blockers: Vec<usize> },
    Budget(u64),
}

/// Picks one option per item so that all chosen sets are pairwise disjoint,
/// by backtracking over items with the fewest options first.
pub fn choose_disjoint(options: &[Vec<Vec<Subspace>>], budget: u64) -> Choice {
    let mut order: Vec<usize> = (0..options.len()).collect();
    order.sort_by_key(|&k| (options[k].len(), k));
    let mut pick = vec![usize::MAX; options.len()];
    let mut owner: HashMap<Subspace, usize> = HashMap::new();
    let mut nodes = 0u64;
    let mut worst: Option<(usize, usize, Vec<usize>)> = None;

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        depth: usize,
        order: &[usize],
        options: &[Vec<Vec<Subspace>>],
        pick: &mut Vec<usize>,
        owner: &mut HashMap<Subspace, usize>,
        nodes: &mut u64,
        budget: u64,
        worst: &mut Option<(usize, usize, Vec<usize>)>,
    ) -> Option<bool> {
        if depth == order.len() {
            return Some(true);
        }
        let item = order[depth];
        let mut blockers = Vec::new();
        for (k, opt) in options[item].iter().enumerate() {
            *nodes += 1;
            if *nodes > budget {
                return None;
            }
            let hits: Vec<usize> = opt.iter().filter_map(|x| owner.get(x).copied()).collect();
            if !hits.is_empty() {
                blockers.extend(hits);
                continue;
            }
            for x in opt {
                owner.insert(x.clone(), item);
            }
            pick[item] = k;
            if dfs(depth + 1, order, options, pick, owner, nodes, budget, worst)? {
                return Some(true);
            }
            for x in opt {
                owner.remove(x);
            }
        }
        if worst.as_ref().is_none_or(|w| depth >= w.0) {
            blockers.sort_unstable();
            blockers.dedup();
            *worst = Some((depth, item, blockers));
        }
        Some(false)
    }

    match dfs(0, &order, options, &mut pick, &mut owner, &mut nodes, budget, &mut worst) {
        None => Choice::Budget(nodes),
        Some(true) => Choice::Found(pick),
        Some(false) => {
            let (_, item, blockers) = worst.expect("a failed search records its deepest conflict");
            Choice::Conflict { item, blockers }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsorbBudget {
    /// Cap on root-equation solutions enumerated per S.
    pub candidates: u64,
    /// Cap on backtracking nodes.
    pub nodes: u64,
}

impl Default for AbsorbBudget {
    fn default() -> Self {
        AbsorbBudget { candidates: 1_000_000, nodes: 1_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct Absorption {
    pub phi2: SignedQSystem,
    pub phi1: SignedQSystem,
    /// (S, color, chosen absorber) per member of supp(Φ₃).
    pub assignments: Vec<(Subspace, u32, AbsorberFlip)>,
}

#[derive(Clone, Debug)]
pub enum AbsorbOutcome {
    Absorbed(Absorption),
    Failed { reason: String, witness: String },
}

/// Checks the absorption hypotheses on Φ₃ and returns the color found for
/// each support member together with every violation.
pub fn absorb_hypotheses(st: &TemplateState, phi3: &SignedQSystem) -> Result<(Vec<(Subspace, u32)>, Vec<String>)> {
    let (s, r) = (st.s(), st.r());
    if phi3.k() != s || phi3.q() != st.q() || phi3.n() != st.n() {
        return Err(Error::InvalidParameter("Φ₃ must be a system of s-spaces of V".into()));
    }
    let mut violations = Vec::new();
    for (x, c) in phi3.iter() {
        if c != &BigInt::one() {
            violations.push(format!("coefficient {} on {}", c, x));
        }
    }
    let bmax = phi3.boundary(r)?.max_abs();
    if bmax > BigInt::one() {
        violations.push(format!("‖∂Φ₃‖∞ = {} > 1", bmax));
    }
    let mut colored = Vec::new();
    for x in phi3.support() {
        let mut found = None;
        for i in 0..st.z() {
            if config_compatible(st, x, i)?.pass {
                found = Some(i);
                break;
            }
        }
        match found {
            Some(i) => colored.push((x.clone(), i)),
            None => violations.push(format!("{} is not configuration compatible for any color", x)),
        }
    }
    let ell = st.tower().ell() as usize;
    let lspans: Vec<Subspace> = colored.iter().map(|(x, i)| st.l_span_of(*i, x).expect("compatible spaces lie in K_i")).collect();
    for a in 0..colored.len() {
        for b in a + 1..colored.len() {
            if colored[a].1 == colored[b].1 && lspans[a].meet(&lspans[b]).dim() / ell >= r as usize {
                violations.push(format!("{} and {} share an L-subspace of dimension >= r", colored[a].0, colored[b].0));
            }
        }
    }
    Ok((colored, violations))
}

/// Assigns each member of supp(Φ₃) a valid absorber with pairwise disjoint
/// in-flips. Returns Φ₂ (the in-flips, a subset of S_tem) and Φ₁ (the
/// out-flips minus roots) after checking ∂(Φ₂ − Φ₁) = ∂Φ₃ exactly.
pub fn absorb_spill(st: &TemplateState, phi3: &SignedQSystem, xstar: &GenericMatrix, budget: AbsorbBudget) -> Result<AbsorbOutcome> {
    let (q, n, s, r) = (st.q(), st.n(), st.s(), st.r());
    let (colored, violations) = absorb_hypotheses(st, phi3)?;
    if let Some(v) = violations.first() {
        return Ok(AbsorbOutcome::Failed { reason: format!("{} hypothesis violations", violations.len()), witness: v.clone() });
    }
    let mut searches = Vec::with_capacity(colored.len());
    for (x, i) in &colored {
        let found = find_valid_absorbers(st, x, *i, xstar, budget.candidates)?;
        if found.valid.is_empty() {
            return Ok(AbsorbOutcome::Failed { reason: "no valid absorber".into(), witness: format!("{} (color {})", x, i) });
        }
        searches.push(found);
    }
    let options: Vec<Vec<Vec<Subspace>>> = searches.iter().map(|f| f.valid.iter().map(|(_, p)| p.clone()).collect()).collect();
    let pick = match choose_disjoint(&options, budget.nodes) {
        Choice::Found(p) => p,
        Choice::Conflict { item, blockers } => {
            let names: Vec<String> = blockers.iter().map(|&b| colored[b].0.to_string()).collect();
            return Ok(AbsorbOutcome::Failed {
                reason: "in-flips cannot be chosen disjoint".into(),
                witness: format!("every absorber of {} meets in-flips chosen for [{}]", colored[item].0, names.join(", ")),
            });
        }
        Choice::Budget(nodes) => {
            return Ok(AbsorbOutcome::Failed { reason: "backtracking budget exhausted".into(), witness: format!("{} nodes", nodes) });
        }
    };
    let mut phi2 = SignedQSystem::new(q, n, s);
    let mut phi1 = SignedQSystem::new(q, n, s);
    let mut assignments = Vec::new();
    for (k, ((x, i), found)) in colored.iter().zip(&searches).enumerate() {
        let (ab, pushed) = &found.valid[pick[k]];
        for t in pushed {
            phi2.add_term(t.clone(), 1);
        }
        for t in ab.p_out.iter().filter(|t| **t != ab.root) {
            phi1.add_term(push_forward(st, *i, t), 1);
        }
        assignments.push((x.clone(), *i, ab.clone()));
    }
    if !phi2.is_set() {
        return Err(Error::Verification("Φ₂ repeats a template s-space".into()));
    }
    let tem: HashSet<&Subspace> = st.members.iter().map(|m| &m.space).collect();
    if phi2.support().any(|t| !tem.contains(t)) {
        return Err(Error::Verification("Φ₂ leaves S_tem".into()));
    }
    maybe_corrupt(&mut phi2);
    check_boundary(&phi2.minus(&phi1)?, &phi3.boundary(r)?, "absorb_spill")?;
    Ok(AbsorbOutcome::Absorbed(Absorption { phi2, phi1, assignments }))
}

// ------------------------------------------------------------ verification

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignReport {
    pub pass: bool,
    pub lambda: u64,
    pub blocks: usize,
    /// Multiplicity → number of r-spaces covered that many times.
    pub histogram: BTreeMap<u64, u64>,
    /// Whether no block repeats, when simplicity was requested.
    pub simple: Option<bool>,
    pub repeated: Option<String>,
    /// First r-space (canonical order) with multiplicity ≠ λ.
    pub first_bad: Option<(String, u64)>,
}

/// Exact multiplicity of every r-space under the block multiset.
pub fn verify_design(blocks: &[Subspace], q: u32, n: u32, s: u32, r: u32, lambda: u64, simple: bool) -> Result<DesignReport> {
    if let Some(b) = blocks.iter().find(|b| b.q() != q || b.n() != n || b.dim() != s as usize) {
        return Err(Error::InvalidParameter(format!("block {} is not an {}-space of F_{}^{}", b, s, q, n)));
    }
    let mut mult: HashMap<Subspace, u64> = HashMap::new();
    let mut seen: HashSet<&Subspace> = HashSet::new();
    let mut repeated = None;
    for b in blocks {
        if !seen.insert(b) && repeated.is_none() {
            repeated = Some(b.literal());
        }
        for x in b.subspaces(r as usize) {
            *mult.entry(x).or_default() += 1;
        }
    }
    let mut histogram = BTreeMap::new();
    let mut first_bad = None;
    for x in enumerate_grassmannian(n, r, q)? {
        let m = mult.get(&x).copied().unwrap_or(0);
        *histogram.entry(m).or_default() += 1;
        if m != lambda && first_bad.is_none() {
            first_bad = Some((x.literal(), m));
        }
    }
    let simple_ok = simple.then_some(repeated.is_none());
    Ok(DesignReport {
        pass: first_bad.is_none() && simple_ok != Some(false),
        lambda,
        blocks: blocks.len(),
        histogram,
        simple: simple_ok,
        repeated,
        first_bad,
    })
}

/// Expands a nonnegative system into a block list with repetitions.
pub fn blocks_from_qsystem(phi: &SignedQSystem) -> Result<Vec<Subspace>> {
    let mut out = Vec::new();
    for (x, c) in phi.iter() {
        let k = c.to_usize().ok_or_else(|| Error::InvalidParameter(format!("block {} has coefficient {}", x, c)))?;
        out.extend(std::iter::repeat_n(x.clone(), k));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub blocks: String,
    pub block_term: String,
    pub deficit: String,
    pub excess: String,
    pub target: String,
    pub holds: bool,
}

/// |blocks|·[s r]_q + deficit − excess against λ·[n r]_q, where deficit and
/// excess sum max(0, λ − m_R) and max(0, m_R − λ) over all r-spaces.
pub fn accounting(blocks: &SignedQSystem, lambda: u64, r: u32) -> Result<Accounting> {
    if blocks.iter().any(|(_, c)| c.is_negative()) {
        return Err(Error::InvalidParameter("accounting needs a nonnegative block multiset".into()));
    }
    let (q, n, s) = (blocks.q(), blocks.n(), blocks.k());
    let m = blocks.boundary(r)?;
    let lam = BigInt::from(lambda);
    let (mut deficit, mut excess) = (BigInt::zero(), BigInt::zero());
    for x in enumerate_grassmannian(n, r, q)? {
        let c = m.get(&x);
        if c < lam {
            deficit += &lam - &c;
        } else {
            excess += &c - &lam;
        }
    }
    let block_term = blocks.total() * gauss(s, r, q);
    let target = &lam * gauss(n, r, q);
    Ok(Accounting {
        blocks: blocks.total().to_string(),
        holds: &block_term + &deficit - &excess == target,
        block_term: block_term.to_string(),
        deficit: deficit.to_string(),
        excess: excess.to_string(),
        target: target.to_string(),
    })
}

// ----------------------------------------------------------------- pipeline

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub absorber_candidates: u64,
    pub backtrack_nodes: u64,
    /// Require distinct colors when covering the leave (only binds for z > 1).
    pub rainbow: bool,
    /// Weight nibble edges by ψ when boosting succeeded.
    pub weighted_nibble: bool,
    /// Use the plain design when ℓm = n and λ is a multiple of its λ.
    pub plain_shortcut: bool,
    /// Stop after the named stage.
    pub stop_after: Option<String>,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            absorber_candidates: 1_000_000,
            backtrack_nodes: 1_000_000,
            rainbow: true,
            weighted_nibble: true,
            plain_shortcut: true,
            stop_after: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub q: u32,
    pub n: u32,
    pub s: u32,
    pub r: u32,
    pub lambda: u64,
    #[serde(with = "tower_str")]
    pub tower: TowerSpec,
    pub z: u32,
    #[serde(with = "ratio_str")]
    pub tau: BigRational,
    pub d: u32,
    #[serde(default)]
    pub budgets: Budgets,
}

impl PipelineConfig {
    pub fn template_params(&self, seed: u64) -> TemplateParams {
        TemplateParams { q: self.q, n: self.n, s: self.s, r: self.r, tower: self.tower, z: self.z, tau: self.tau.clone(), d: self.d, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub seed: Option<u64>,
    /// "pass", "fail" or "skipped".
    pub status: String,
    pub metrics: Value,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub seed: u64,
    /// "plain" or "general".
    pub path: String,
    pub stages: Vec<StageReport>,
    /// Name of the last stage run.
    pub frontier: String,
    pub success: bool,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }

    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|x| x.name == name)
    }
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of a named stage, derived from the master seed.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a(label))
}

struct Run {
    report: PipelineReport,
}

impl Run {
    fn push(&mut self, name: &str, seed: Option<u64>, status: &str, metrics: Value, witness: Option<String>) -> bool {
        self.report.frontier = name.into();
        self.report.stages.push(StageReport { name: name.into(), seed, status: status.into(), metrics, witness });
        status != "fail" && self.report.config.budgets.stop_after.as_deref() != Some(name)
    }
}

fn acct_json(a: &Accounting) -> Value {
    serde_json::to_value(a).expect("accounting serializes")
}

fn stage_err(run: &mut Run, name: &str, seed: Option<u64>, e: Error) -> Result<PipelineReport> {
    run.push(name, seed, "fail", json!({}), Some(e.to_string()));
    Ok(run.report.clone())
}

/// Runs the staged construction from one master seed. Stage failures are
/// recorded in the report; only an invalid config is an error.
pub fn run_pipeline(config: &PipelineConfig, seed: u64) -> Result<PipelineReport> {
    let (q, n, s, r, lambda) = (config.q, config.n, config.s, config.r, config.lambda);
    let mut run = Run {
        report: PipelineReport { config: config.clone(), seed, path: "general".into(), stages: Vec::new(), frontier: String::new(), success: false },
    };

    // Stage 0: necessary divisibility conditions.
    let div = divisibility_check(n, s, r, lambda, q)?;
    let witness = div.failing.first().map(|&i| {
        format!("[{} {}]_{} does not divide {}·[{} {}]_{} at i = {}", s - i, r - i, q, lambda, n - i, r - i, q, i)
    });
    if !run.push("divisibility", None, if div.pass { "pass" } else { "fail" }, json!({ "failing": div.failing }), witness) {
        return Ok(run.report);
    }
    config.template_params(0).validate()?;

    let tower = crate::fields::FieldTower::new(config.tower)?;
    if config.budgets.plain_shortcut && config.tower.ell * config.tower.m == n {
        let plain = generic_matrix(&tower, Level::L, s as usize, r as usize, config.d, 0)
            .and_then(|nm| {
                if generic_bullet1(&tower, &nm, r, s)?.pass {
                    Ok(Some(nm))
                } else {
                    Ok(None)
                }
            })
            .and_then(|nm| nm.map(|nm| plain_design(&tower, &nm)).transpose());
        match plain {
            Ok(Some(pd)) => {
                let lp = pd.lambda.to_u64().unwrap_or(u64::MAX);
                if lp > 0 && lambda % lp == 0 {
                    run.report.path = "plain".into();
                    let copies = (lambda / lp) as usize;
                    let metrics = json!({ "blocks": pd.blocks.len(), "lambda": lp, "copies": copies });
                    if !run.push("plain_template", None, "pass", metrics, None) {
                        return Ok(run.report);
                    }
                    let blocks: Vec<Subspace> = (0..copies).flat_map(|_| pd.blocks.iter().cloned()).collect();
                    let rep = verify_design(&blocks, q, n, s, r, lambda, copies == 1)?;
                    let mut multiset = SignedQSystem::new(q, n, s);
                    blocks.iter().for_each(|b| multiset.add_term(b.clone(), 1));
                    let acct = accounting(&multiset, lambda, r)?;
                    let pass = rep.multiplicities_ok() && acct.holds;
                    let witness = rep.first_bad.as_ref().map(|(x, m)| format!("{} covered {} times", x, m));
                    run.report.success = pass;
                    run.push("verify_design", None, if pass { "pass" } else { "fail" }, json!({ "design": rep, "accounting": acct_json(&acct) }), witness);
                    return Ok(run.report);
                }
                let m = json!({ "lambda": lp });
                run.push("plain_template", None, "skipped", m, Some(format!("λ = {} is not a multiple of {}", lambda, lp)));
            }
            Ok(None) => {
                run.push("plain_template", None, "skipped", json!({}), Some(format!("N of degree {} fails invertibility", config.d)));
            }
            Err(e) => {
                run.push("plain_template", None, "skipped", json!({}), Some(e.to_string()));
            }
        }
    }

    // Stage 1: template.
    let tseed = stage_seed(seed, "template");
    if lambda != 1 {
        return stage_err(&mut run, "template", Some(tseed), Error::InvalidParameter("the general path builds λ = 1 designs".into()));
    }
    let st = match sample_template(&config.template_params(tseed)) {
        Ok(st) => st,
        Err(e) => return stage_err(&mut run, "template", Some(tseed), e),
    };
    let trep = verify_template(&st)?;
    let s_tem = st.s_tem();
    let acct = accounting(&s_tem, lambda, r)?;
    let metrics = json!({
        "members": trep.members,
        "g_tem": trep.g_tem_size,
        "obstruction_s": trep.obstruction_s,
        "obstruction_rs": trep.obstruction_rs,
        "accounting": acct_json(&acct),
    });
    let ok = trep.pass && acct.holds;
    if !run.push("template", Some(tseed), if ok { "pass" } else { "fail" }, metrics, None) {
        return Ok(run.report);
    }

    // Stage 2: boosting weights.
    let boost = match boost_weights(&st) {
        Ok(b) => b,
        Err(e) => return stage_err(&mut run, "boost", None, e),
    };
    let weights_ok = boost.skipped.is_none() && boost.identity_holds;
    let metrics = json!({
        "unobstructed_s": boost.psi.len(),
        "checked": boost.checked,
        "identity_holds": boost.identity_holds,
        "max_deviation": boost.max_deviation.to_string(),
        "deviation_bound": boost.deviation_bound.to_string(),
    });
    let (status, witness) = match (&boost.skipped, &boost.identity_witness) {
        (Some(why), _) => ("skipped", Some(why.clone())),
        (None, Some((x, got))) => ("fail", Some(format!("degree of {} is {}", x, got))),
        _ => ("pass", None),
    };
    if !run.push("boost", None, status, metrics, witness) {
        return Ok(run.report);
    }

    // Stage 3: nibble on the r-spaces outside G_tem.
    let nseed = stage_seed(seed, "nibble");
    let mut rng = ChaCha8Rng::seed_from_u64(nseed);
    let vertices = SignedQSystem::indicator(q, n, r, enumerate_grassmannian(n, r, q)?.iter().filter(|x| st.color_of(x).is_none()));
    let (edges, weights): (Vec<Subspace>, Vec<BigRational>) = if boost.skipped.is_none() {
        boost.psi.iter().map(|(k, v)| (k.clone(), v.clone())).unzip()
    } else {
        let free: Vec<Subspace> = enumerate_grassmannian(n, s, q)?
            .into_iter()
            .filter(|x| x.subspaces(r as usize).iter().all(|y| st.color_of(y).is_none()))
            .collect();
        let w = vec![BigRational::one(); free.len()];
        (free, w)
    };
    let use_w = weights_ok && config.budgets.weighted_nibble;
    let nib = greedy_nibble(&vertices, &edges, use_w.then_some(&weights[..]), &mut rng)?;
    let mut blocks = s_tem.clone();
    nib.matching.iter().for_each(|b| blocks.add_term(b.clone(), 1));
    let acct = accounting(&blocks, lambda, r)?;
    let (cpos, cneg) = if nib.leave.k() > 0 { codegree_profile(&nib.leave)? } else { (BigInt::zero(), BigInt::zero()) };
    let disjoint = nib.is_matching()?;
    let metrics = json!({
        "vertices": nib.vertices,
        "edges": edges.len(),
        "weighted": use_w,
        "matching": nib.matching.len(),
        "leave": nib.leave.len(),
        "leave_fraction": nib.leave_fraction().to_string(),
        "leave_codegree": [cpos.to_string(), cneg.to_string()],
        "clamped": nib.clamped,
        "fallbacks": nib.fallbacks,
        "disjoint": disjoint,
        "accounting": acct_json(&acct),
    });
    let ok = disjoint && acct.holds;
    if !run.push("nibble", Some(nseed), if ok { "pass" } else { "fail" }, metrics, None) {
        return Ok(run.report);
    }

    // Stage 4: cover the leave into the template.
    let cseed = stage_seed(seed, "cover_leave");
    let mut rng = ChaCha8Rng::seed_from_u64(cseed);
    let spill = cover_leave(&st, &nib.leave, config.budgets.rainbow, &mut rng)?;
    spill.s_cover.iter().for_each(|b| blocks.add_term(b.clone(), 1));
    let acct = accounting(&blocks, lambda, r)?;
    let metrics = json!({
        "s_cover": spill.s_cover.len(),
        "spill": spill.spill.len(),
        "field_disjoint": spill.field_disjoint,
        "field_bound_max": spill.field_bound_max,
        "accounting": acct_json(&acct),
    });
    let witness = spill.stuck.as_ref().map(|x| format!("no admissible s-space through {}", x));
    let ok = spill.succeeded() && spill.field_disjoint && acct.holds;
    if !run.push("cover_leave", Some(cseed), if ok { "pass" } else { "fail" }, metrics, witness) {
        return Ok(run.report);
    }

    // Stage 5: integral decomposition of the spill.
    let phi3 = if spill.spill.is_empty() {
        SignedQSystem::new(q, n, s)
    } else {
        match lattice_membership(&spill.spill, s) {
            Ok(Membership::Member(phi)) => phi,
            Ok(Membership::NonMember(cert)) => {
                let w = format!("dual pairing {} is nonzero modulo {}", cert.pairing, cert.modulus);
                run.push("spill_decomposition", None, "fail", json!({ "spill": spill.spill.len() }), Some(w));
                return Ok(run.report);
            }
            Err(e) => return stage_err(&mut run, "spill_decomposition", None, e),
        }
    };
    let metrics = json!({
        "support": phi3.len(),
        "max_abs": phi3.max_abs().to_string(),
        "nonnegative_set": phi3.is_set(),
    });
    if !run.push("spill_decomposition", None, "pass", metrics, None) {
        return Ok(run.report);
    }

    // Stage 6: absorption.
    let (_, violations) = absorb_hypotheses(&st, &phi3)?;
    if !violations.is_empty() {
        let metrics = json!({ "violations": violations.len() });
        run.push("absorb", None, "fail", metrics, violations.first().cloned());
        return Ok(run.report);
    }
    let absorbed = if phi3.is_empty() {
        Absorption { phi2: SignedQSystem::new(q, n, s), phi1: SignedQSystem::new(q, n, s), assignments: Vec::new() }
    } else {
        let m = config.tower.m;
        if m <= r {
            return stage_err(&mut run, "absorb", None, Error::InvalidParameter("absorbers need m > r".into()));
        }
        let u = s.min(m - r);
        let xstar = find_partner(&tower, &st.n_mat, u, config.d, true).or_else(|_| find_partner(&tower, &st.n_mat, u, config.d, false));
        let xstar = match xstar {
            Ok(x) => x,
            Err(e) => return stage_err(&mut run, "absorb", None, e),
        };
        let budget = AbsorbBudget { candidates: config.budgets.absorber_candidates, nodes: config.budgets.backtrack_nodes };
        match absorb_spill(&st, &phi3, &xstar, budget) {
            Ok(AbsorbOutcome::Absorbed(a)) => a,
            Ok(AbsorbOutcome::Failed { reason, witness }) => {
                run.push("absorb", None, "fail", json!({ "reason": reason }), Some(witness));
                return Ok(run.report);
            }
            Err(e) => return stage_err(&mut run, "absorb", None, e),
        }
    };
    let metrics = json!({ "phi2": absorbed.phi2.len(), "phi1": absorbed.phi1.len(), "absorbers": absorbed.assignments.len() });
    if !run.push("absorb", None, "pass", metrics, None) {
        return Ok(run.report);
    }

    // Stage 7: assemble and verify.
    let assembled = blocks.minus(&absorbed.phi2)?.plus(&absorbed.phi1)?;
    if let Some((x, c)) = assembled.iter().find(|(_, c)| c.is_negative()) {
        run.push("verify_design", None, "fail", json!({}), Some(format!("assembled multiset has coefficient {} on {}", c, x)));
        return Ok(run.report);
    }
    let list = blocks_from_qsystem(&assembled)?;
    let rep = verify_design(&list, q, n, s, r, lambda, true)?;
    let acct = accounting(&assembled, lambda, r)?;
    let pass = rep.multiplicities_ok() && acct.holds;
    let witness = rep.first_bad.as_ref().map(|(x, m)| format!("{} covered {} times", x, m));
    run.report.success = pass;
    run.push("verify_design", None, if pass { "pass" } else { "fail" }, json!({ "design": rep, "accounting": acct_json(&acct) }), witness);
    Ok(run.report)
}

impl DesignReport {
    /// Every r-space has multiplicity exactly λ (simplicity aside).
    pub fn multiplicities_ok(&self) -> bool {
        self.first_bad.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfcheck::inject_faults;
    use proptest::prelude::*;

    fn params(n: u32, seed: u64, tau: (i64, i64)) -> TemplateParams {
        TemplateParams {
            q: 2,
            n,
            s: 2,
            r: 1,
            tower: "2^1:2:2".parse().unwrap(),
            z: 1,
            tau: BigRational::new(tau.0.into(), tau.1.into()),
            d: 1,
            seed,
        }
    }

    fn empty_template(n: u32) -> TemplateState {
        let mut st = sample_template(&params(n, 1, (1, 2))).unwrap();
        st.config.values_mut().for_each(|c| c.y = false);
        st.rebuild().unwrap();
        assert!(st.members.is_empty());
        st
    }

    /// Representatives x of the L-lines x·L of K, one per line.
    fn line_reps(st: &TemplateState) -> Vec<u32> {
        let tower = st.tower();
        let mut seen = HashSet::new();
        tower.k_elements().skip(1).filter(|&x| seen.insert(tower.l_span(&[x]))).collect()
    }

    /// Plants every L-line block of color 0 that does not meet G_tem.
    fn plant_free_lines(st: &mut TemplateState) {
        for x in line_reps(st) {
            let b = st.block(0, &[x]);
            if b.subspaces(1).iter().all(|y| st.color_of(y).is_none()) {
                st.plant(0, &[x]).unwrap();
            }
        }
    }

    fn non_l(st: &TemplateState) -> u32 {
        let l: HashSet<u32> = st.tower().l_elements_in_k().into_iter().collect();
        st.tower().k_elements().find(|x| !l.contains(x)).unwrap()
    }

    /// P0 with one compatible root S and all five L-lines planted.
    fn absorbable() -> (TemplateState, Subspace, GenericMatrix) {
        let mut st = empty_template(4);
        let root = st.plant_compatible(0, &[1, non_l(&st)]).unwrap();
        plant_free_lines(&mut st);
        assert_eq!(st.members.len(), 5);
        assert!(config_compatible(&st, &root, 0).unwrap().pass);
        let xstar = find_partner(st.tower(), &st.n_mat, 1, 1, false).unwrap();
        (st, root, xstar)
    }

    #[test]
    fn boost_on_empty_template_is_trivial() {
        let st = empty_template(5);
        let b = boost_weights(&st).unwrap();
        assert!(b.skipped.is_none());
        assert!(b.c.values().all(|c| c.is_zero()));
        assert_eq!(b.psi.len(), 155);
        assert!(b.psi.values().all(|p| p.is_one()));
        assert!(b.identity_holds);
    }

    #[test]
    fn boost_identity_on_planted_template() {
        let mut st = sample_template(&params(5, 2, (1, 2))).unwrap();
        st.plant(0, &[1]).unwrap();
        st.plant(0, &[non_l(&st)]).unwrap();
        let b = boost_weights(&st).unwrap();
        assert!(b.skipped.is_none());
        assert!(b.c.values().any(|c| !c.is_zero()));
        assert!(b.identity_holds, "{:?}", b.identity_witness);
        assert_eq!(b.checked, 31 - st.g_tem.len());
        assert!(b.bound_holds(), "{} > {}", b.max_deviation, b.deviation_bound);
    }

    #[test]
    fn boost_skips_when_template_is_too_dense() {
        let mut st = empty_template(4);
        let reps = line_reps(&st);
        for &x in &reps[..4] {
            st.plant(0, &[x]).unwrap();
        }
        assert_eq!(st.g_tem.len(), 12);
        let b = boost_weights(&st).unwrap();
        assert!(b.skipped.is_some());
    }

    fn points(n: u32) -> SignedQSystem {
        SignedQSystem::indicator(2, n, 1, &enumerate_grassmannian(n, 1, 2).unwrap())
    }

    #[test]
    fn nibble_without_edges_leaves_everything() {
        let v = points(4);
        let run = greedy_nibble(&v, &[], None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(run.matching.is_empty());
        assert_eq!(run.leave, v);
    }

    #[test]
    fn nibble_on_lines_of_pg3() {
        let v = points(4);
        let lines = enumerate_grassmannian(4, 2, 2).unwrap();
        for seed in 0..10 {
            let run = greedy_nibble(&v, &lines, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(run.is_matching().unwrap());
            assert_eq!(run.leave.len(), 15 - 3 * run.matching.len());
            let again = greedy_nibble(&v, &lines, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(run, again);
        }
    }

    #[test]
    fn weighted_nibble_clamps_negative_weights() {
        let v = points(4);
        let lines = enumerate_grassmannian(4, 2, 2).unwrap();
        let w: Vec<BigRational> =
            (0..lines.len()).map(|k| BigRational::new(BigInt::from(k as i64 - 3), BigInt::from(2))).collect();
        let run = greedy_nibble(&v, &lines, Some(&w), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(run.clamped, 3);
        assert!(run.is_matching().unwrap());
        assert_eq!(run.leave.len(), 15 - 3 * run.matching.len());
    }

    #[test]
    fn nibble_rejects_foreign_edges() {
        let v = SignedQSystem::indicator(2, 4, 1, [&Subspace::coordinate(2, 4, &[0])]);
        let e = [Subspace::coordinate(2, 4, &[0, 1])];
        assert!(greedy_nibble(&v, &e, None, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn cover_leave_of_nothing_spills_nothing() {
        let st = sample_template(&params(4, 3, (1, 1))).unwrap();
        let leave = SignedQSystem::new(2, 4, 1);
        let sp = cover_leave(&st, &leave, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(sp.succeeded() && sp.spill.is_empty() && sp.s_cover.is_empty());
    }

    #[test]
    fn cover_leave_single_point_with_dense_template() {
        let mut st = empty_template(4);
        let reps = line_reps(&st);
        for &x in &reps[..4] {
            st.plant(0, &[x]).unwrap();
        }
        let target = st.block(0, &[reps[4]]).subspaces(1)[0].clone();
        let leave = SignedQSystem::indicator(2, 4, 1, [&target]);
        for seed in 0..5 {
            let sp = cover_leave(&st, &leave, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(sp.succeeded());
            assert_eq!(sp.candidates, vec![6]);
            assert_eq!(sp.spill.len(), 2);
            assert!(sp.field_disjoint);
            assert!(sp.spill.support().all(|x| st.color_of(x).is_some()));
            let cover = SignedQSystem::indicator(2, 4, 2, &sp.s_cover).boundary(1).unwrap();
            assert_eq!(cover, leave.plus(&sp.spill).unwrap());
        }
    }

    #[test]
    fn cover_leave_reports_stuck_space() {
        let st = empty_template(4);
        let r0 = Subspace::coordinate(2, 4, &[0]);
        let leave = SignedQSystem::indicator(2, 4, 1, [&r0]);
        let sp = cover_leave(&st, &leave, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(sp.stuck, Some(r0));
        assert!(sp.s_cover.is_empty());
    }

    #[test]
    fn cover_leave_rejects_template_points() {
        let mut st = empty_template(4);
        let b = st.plant(0, &[1]).unwrap();
        let leave = SignedQSystem::indicator(2, 4, 1, [&b.subspaces(1)[0]]);
        assert!(cover_leave(&st, &leave, true, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn valid_absorbers_at_p0() {
        let (st, root, xstar) = absorbable();
        let found = find_valid_absorbers(&st, &root, 0, &xstar, 1000).unwrap();
        // r + u − s = 0: the root equation has exactly one solution.
        assert_eq!(found.candidates, 1);
        assert_eq!(found.degenerate, 0);
        assert_eq!(found.valid.len(), 1);
        let (ab, pushed) = &found.valid[0];
        assert!(verify_absorber(st.tower(), ab).unwrap().pass);
        assert_eq!(push_forward(&st, 0, &ab.root), root);
        assert_eq!(pushed.len(), 4);
    }

    #[test]
    fn absorbers_need_compatibility() {
        let (st, _, xstar) = absorbable();
        let block = st.members[0].space.clone();
        assert!(find_valid_absorbers(&st, &block, 0, &xstar, 1000).is_err());
    }

    #[test]
    fn absorb_empty_and_single() {
        let (st, root, xstar) = absorbable();
        let empty = SignedQSystem::new(2, 4, 2);
        match absorb_spill(&st, &empty, &xstar, AbsorbBudget::default()).unwrap() {
            AbsorbOutcome::Absorbed(a) => assert!(a.phi1.is_empty() && a.phi2.is_empty()),
            f => panic!("{:?}", f),
        }
        let phi3 = SignedQSystem::indicator(2, 4, 2, [&root]);
        match absorb_spill(&st, &phi3, &xstar, AbsorbBudget::default()).unwrap() {
            AbsorbOutcome::Absorbed(a) => {
                assert_eq!(a.phi2.len(), 4);
                assert!(a.phi2.is_set());
                assert_eq!(a.phi2.minus(&a.phi1).unwrap().boundary(1).unwrap(), phi3.boundary(1).unwrap());
            }
            f => panic!("{:?}", f),
        }
    }

    #[test]
    fn absorb_check_fires_under_faults() {
        let (st, root, xstar) = absorbable();
        let phi3 = SignedQSystem::indicator(2, 4, 2, [&root]);
        let _g = inject_faults();
        assert!(matches!(absorb_spill(&st, &phi3, &xstar, AbsorbBudget::default()), Err(Error::Verification(_))));
    }

    #[test]
    fn absorb_reports_hypothesis_violations() {
        let (st, root, xstar) = absorbable();
        let mut phi3 = SignedQSystem::new(2, 4, 2);
        phi3.add_term(root, 2);
        assert!(matches!(absorb_spill(&st, &phi3, &xstar, AbsorbBudget::default()).unwrap(), AbsorbOutcome::Failed { .. }));
    }

    #[test]
    fn disjoint_choice_conflicts_and_successes() {
        let a = Subspace::coordinate(2, 4, &[0, 1]);
        let b = Subspace::coordinate(2, 4, &[2, 3]);
        let c = Subspace::coordinate(2, 4, &[0, 2]);
        let shared = vec![vec![vec![a.clone(), b.clone()], vec![a.clone(), c.clone()]], vec![vec![a.clone()]]];
        assert_eq!(choose_disjoint(&shared, 100), Choice::Conflict { item: 0, blockers: vec![1] });
        let ok = vec![vec![vec![a.clone(), b.clone()], vec![c.clone()]], vec![vec![a.clone()]]];
        assert_eq!(choose_disjoint(&ok, 100), Choice::Found(vec![1, 0]));
        assert!(matches!(choose_disjoint(&ok, 1), Choice::Budget(_)));
    }

    fn spread() -> Vec<Subspace> {
        let tower = crate::fields::build_tower(2, 1, 2, 2).unwrap();
        let mut v: Vec<Subspace> = tower.k_elements().skip(1).map(|x| tower.l_span(&[x])).collect::<HashSet<_>>().into_iter().collect();
        v.sort();
        v
    }

    #[test]
    fn verify_design_examples() {
        let pd = crate::template::plain_design_params(2, 4, 2, 1, 2, 2).unwrap();
        let rep = verify_design(&pd.blocks, 2, 4, 2, 1, 3, false).unwrap();
        assert!(rep.pass && rep.blocks == 15);
        assert_eq!(rep.histogram, BTreeMap::from([(3, 15)]));

        let sp = spread();
        assert_eq!(sp.len(), 5);
        let rep = verify_design(&sp, 2, 4, 2, 1, 1, true).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.simple, Some(true));
        let rep = verify_design(&sp[1..], 2, 4, 2, 1, 1, true).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.histogram, BTreeMap::from([(0, 3), (1, 12)]));
        let doubled: Vec<Subspace> = sp.iter().chain(&sp).cloned().collect();
        let rep = verify_design(&doubled, 2, 4, 2, 1, 2, true).unwrap();
        assert!(!rep.pass && rep.multiplicities_ok() && rep.repeated.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn accounting_identity_holds(picks in proptest::collection::vec((0usize..35, 1i64..3), 0..12), lambda in 0u64..3) {
            let all = enumerate_grassmannian(5, 2, 2).unwrap();
            let mut m = SignedQSystem::new(2, 5, 2);
            for (k, c) in picks {
                m.add_term(all[k * 4].clone(), c);
            }
            prop_assert!(accounting(&m, lambda, 1).unwrap().holds);
        }
    }

    fn config(n: u32, lambda: u64, tau: &str) -> PipelineConfig {
        let text = format!(r#"{{"q":2,"n":{},"s":2,"r":1,"lambda":{},"tower":"2^1:2:2","z":1,"tau":"{}","d":1}}"#, n, lambda, tau);
        serde_json::from_str(&text).unwrap()
    }

    #[test]
    fn pipeline_plain_shortcut() {
        let rep = run_pipeline(&config(4, 3, "1"), 7).unwrap();
        assert_eq!(rep.path, "plain");
        assert!(rep.success, "{}", rep.to_json());
        assert_eq!(rep.frontier, "verify_design");
    }

    #[test]
    fn pipeline_rejects_divisibility() {
        let mut c = config(4, 1, "1");
        c.n = 3;
        c.budgets.plain_shortcut = false;
        let rep = run_pipeline(&c, 0).unwrap();
        assert_eq!(rep.frontier, "divisibility");
        assert_eq!(rep.stages[0].witness.as_deref(), Some("[2 1]_2 does not divide 1·[3 1]_2 at i = 0"));
        let mut c = config(5, 1, "1/2");
        c.lambda = 2;
        let rep = run_pipeline(&c, 0).unwrap();
        assert_eq!(rep.stages.len(), 1);
        assert_eq!(rep.stages[0].status, "fail");
        assert!(rep.stages[0].witness.is_some());
    }

    #[test]
    fn pipeline_general_path_reports_and_round_trips() {
        let c = config(6, 1, "1/1000");
        let a = run_pipeline(&c, 11).unwrap();
        let b = run_pipeline(&c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(PipelineReport::from_json(&a.to_json()).unwrap(), a);
        assert_eq!(a.path, "general");
        let nib = a.stage("nibble").unwrap();
        assert_eq!(nib.status, "pass");
        assert!(a.stages.iter().all(|s| s.status != "fail" || s.name == a.frontier));
        let last = a.stages.last().unwrap();
        assert!(last.status != "fail" || last.witness.is_some());
        // Reports carry integers and rational strings only.
        assert!(!a.to_json().contains('.'));
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(stage_seed(1, "nibble"), stage_seed(1, "cover_leave"));
        assert_ne!(stage_seed(1, "nibble"), stage_seed(2, "nibble"));
        assert_eq!(stage_seed(3, "template"), stage_seed(3, "template"));
    }
}
