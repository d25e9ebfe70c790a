//! The randomized algebraic template: per-r-space configurations, the admitted
//! s-spaces span(ι_i(Nx)), and the field-level maps used downstream.

use crate::error::{Error, Result};
use crate::fields::{sample_injection, FieldTower, LinearInjection, TowerSpec};
use crate::gadgets::{generic_bullet1, generic_matrix, invertible_matrices, read_blocks, BulletCheck, GenericMatrix};
use crate::fields::Level;
use crate::linalg::Mat;
use crate::qsystem::SignedQSystem;
use crate::subspace::{enumerate_grassmannian, random_frame, red_profiles, Subspace};
use crate::vector;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

/// Budget on candidate (i, x) pairs examined by one rebuild.
pub const CANDIDATE_BUDGET: u64 = 10_000_000;
/// Budget on (R, T) incidences examined by the obstruction measurement.
pub const OBSTRUCTION_BUDGET: u64 = 5_000_000;
/// Budget on ordered bases examined by the compatibility search.
pub const BASIS_BUDGET: u64 = 1_000_000;

/// Serde helpers writing rationals as "a/b" strings.
pub mod ratio_str {
    use num_rational::BigRational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(x: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        BigRational::from_str(s.trim()).map_err(|e| D::Error::custom(format!("bad rational '{}': {}", s, e)))
    }
}

/// Serde helpers writing tower specs as "p^e:ell:m".
pub mod tower_str {
    use crate::fields::TowerSpec;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &TowerSpec, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TowerSpec, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e| D::Error::custom(format!("{}", e)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateParams {
    pub q: u32,
    pub n: u32,
    pub s: u32,
    pub r: u32,
    #[serde(with = "tower_str")]
    pub tower: TowerSpec,
    pub z: u32,
    #[serde(with = "ratio_str")]
    pub tau: BigRational,
    pub d: u32,
    pub seed: u64,
}

impl TemplateParams {
    pub fn validate(&self) -> Result<()> {
        let tq = (self.tower.p as u64).pow(self.tower.e);
        if tq != self.q as u64 {
            return Err(Error::InvalidParameter(format!("tower {} has base field of order {}, not {}", self.tower, tq, self.q)));
        }
        if self.n < self.tower.ell * self.tower.m {
            return Err(Error::InvalidParameter(format!("n = {} is below ℓm = {}", self.n, self.tower.ell * self.tower.m)));
        }
        if self.r == 0 || self.s <= self.r {
            return Err(Error::InvalidParameter(format!("need s > r >= 1, got s={}, r={}", self.s, self.r)));
        }
        if self.z == 0 {
            return Err(Error::InvalidParameter("z must be positive".into()));
        }
        if !self.tau.is_positive() || self.tau > BigRational::one() {
            return Err(Error::InvalidParameter(format!("τ = {} is outside (0,1]", self.tau)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be positive".into()));
        }
        Ok(())
    }
}

/// Configuration variables (y_R, i_R, b_R, Π_R) of one r-space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RConfig {
    pub y: bool,
    pub color: u32,
    /// Ordered basis of R as packed vectors.
    pub basis: Vec<u64>,
    /// Index into Red_q^{r×s} in canonical order.
    pub profile: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateMember {
    pub space: Subspace,
    pub color: u32,
    pub x: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct TemplateState {
    pub params: TemplateParams,
    tower: Arc<FieldTower>,
    pub injections: Vec<LinearInjection>,
    pub n_mat: GenericMatrix,
    /// Configurations for every r-space of V.
    pub config: BTreeMap<Subspace, RConfig>,
    pub members: Vec<TemplateMember>,
    pub g_tem: SignedQSystem,
    color_of: HashMap<Subspace, u32>,
    lspans: HashMap<Subspace, Subspace>,
}

impl PartialEq for TemplateState {
    fn eq(&self, o: &Self) -> bool {
        self.params == o.params
            && self.injections.iter().map(|w| w.matrix()).eq(o.injections.iter().map(|w| w.matrix()))
            && self.n_mat == o.n_mat
            && self.config == o.config
            && self.members == o.members
            && self.g_tem == o.g_tem
    }
}

fn sample_config<R: Rng>(rng: &mut R, r_space: &Subspace, p: &TemplateParams, n_profiles: usize) -> Result<RConfig> {
    let (num, den) = (
        p.tau.numer().to_u64().ok_or_else(|| Error::InvalidParameter("τ numerator too large".into()))?,
        p.tau.denom().to_u64().ok_or_else(|| Error::InvalidParameter("τ denominator too large".into()))?,
    );
    let y = rng.gen_range(0..den) < num;
    let color = rng.gen_range(0..p.z);
    let basis = random_frame(rng, r_space, 0);
    let profile = rng.gen_range(0..n_profiles);
    Ok(RConfig { y, color, basis, profile })
}

/// Samples ι_1..ι_z, then (y_R, i_R, b_R, Π_R) for every r-space in canonical
/// order, then admits template s-spaces.
pub fn sample_template(params: &TemplateParams) -> Result<TemplateState> {
    params.validate()?;
    let tower = Arc::new(FieldTower::new(params.tower)?);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let injections = (0..params.z)
        .map(|_| sample_injection(&tower, params.n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let n_mat = generic_matrix(&tower, Level::L, params.s as usize, params.r as usize, params.d, 0)?;
    let b1 = generic_bullet1(&tower, &n_mat, params.r, params.s)?;
    if !b1.pass {
        return Err(Error::Degenerate(format!("N fails invertibility: {}", b1.counterexample.unwrap_or_default())));
    }
    let n_profiles = red_profiles(params.q, params.r, params.s)?.len();
    let mut config = BTreeMap::new();
    for r_space in enumerate_grassmannian(params.n, params.r, params.q)? {
        let c = sample_config(&mut rng, &r_space, params, n_profiles)?;
        config.insert(r_space, c);
    }
    let mut st = TemplateState {
        params: params.clone(),
        tower,
        injections,
        n_mat,
        config,
        members: Vec::new(),
        g_tem: SignedQSystem::new(params.q, params.n, params.r),
        color_of: HashMap::new(),
        lspans: HashMap::new(),
    };
    st.rebuild()?;
    Ok(st)
}

impl TemplateState {
    pub fn tower(&self) -> &FieldTower {
        &self.tower
    }

    pub fn tower_arc(&self) -> Arc<FieldTower> {
        self.tower.clone()
    }

    pub fn q(&self) -> u32 {
        self.params.q
    }

    pub fn n(&self) -> u32 {
        self.params.n
    }

    pub fn s(&self) -> u32 {
        self.params.s
    }

    pub fn r(&self) -> u32 {
        self.params.r
    }

    pub fn z(&self) -> u32 {
        self.params.z
    }

    /// The coordinates (Nx)_a ∈ K.
    pub fn nx(&self, x: &[u32]) -> Vec<u32> {
        let kf = self.tower.kfield();
        self.n_mat
            .entries
            .iter()
            .map(|row| row.iter().zip(x).fold(0, |a, (&c, &xj)| kf.add(a, kf.mul(self.tower.l_to_k(c), xj))))
            .collect()
    }

    /// Πv for Π over F_q and v ∈ K^s.
    pub fn apply_profile_k(&self, pi: &Subspace, v: &[u32]) -> Vec<u32> {
        let kf = self.tower.kfield();
        pi.row_digits()
            .iter()
            .map(|row| row.iter().zip(v).fold(0, |a, (&c, &y)| kf.add(a, kf.mul(self.tower.base_to_k(c), y))))
            .collect()
    }

    fn inject_all(&self, i: u32, ks: &[u32]) -> Vec<u64> {
        ks.iter().map(|&k| self.injections[i as usize].inject(k)).collect()
    }

    /// span_{F_q}(ι_i(Nx)).
    pub fn block(&self, i: u32, x: &[u32]) -> Subspace {
        Subspace::span(self.q(), self.n(), &self.inject_all(i, &self.nx(x)))
    }

    /// Whether (i, x) passes the three admission bullets.
    fn admits(&self, i: u32, x: &[u32], profiles: &[Subspace]) -> Result<Option<Subspace>> {
        let (q, n, s, r) = (self.q(), self.n(), self.s(), self.r() as usize);
        let nx = self.nx(x);
        let space = Subspace::span(q, n, &self.inject_all(i, &nx));
        if space.dim() != s as usize {
            return Err(Error::Degenerate(format!("span(ι_{}(Nx)) has dimension {} for x = {:?}", i, space.dim(), x)));
        }
        for pi in profiles {
            let rs = Subspace::span(q, n, &self.inject_all(i, &self.apply_profile_k(pi, &nx)));
            if rs.dim() != r {
                return Err(Error::Degenerate(format!("span(ι_{}(ΠNx)) has dimension {}", i, rs.dim())));
            }
            let c = &self.config[&rs];
            if c.color != i || !c.y {
                return Ok(None);
            }
            if self.inject_all(i, &self.apply_profile_k(&profiles[c.profile], &nx)) != c.basis {
                return Ok(None);
            }
        }
        Ok(Some(space))
    }

    /// Recomputes S_tem, G_tem and the lookup tables from the configurations.
    pub fn rebuild(&mut self) -> Result<()> {
        let (q, r) = (self.q(), self.r());
        let ksize = self.tower.kfield().order() as u64;
        let per = ksize.checked_pow(r).unwrap_or(u64::MAX);
        let total = per.saturating_mul(self.z() as u64);
        if total > CANDIDATE_BUDGET {
            return Err(Error::budget("template candidates", total, CANDIDATE_BUDGET));
        }
        let profiles = red_profiles(q, r, self.s())?;
        let mut members = Vec::new();
        for i in 0..self.z() {
            for code in 0..per {
                let x: Vec<u32> = vector::unpack(ksize as u32, r, code);
                if self.tower.l_dim(&x) != r as usize {
                    continue;
                }
                if let Some(space) = self.admits(i, &x, &profiles)? {
                    members.push(TemplateMember { space, color: i, x });
                }
            }
        }
        self.members = members;
        self.refresh_tables();
        Ok(())
    }

    fn refresh_tables(&mut self) {
        let (q, n, r) = (self.q(), self.n(), self.r());
        let mut g = SignedQSystem::new(q, n, r);
        let mut color_of = HashMap::new();
        let mut lspans = HashMap::new();
        for m in &self.members {
            for rs in m.space.subspaces(r as usize) {
                if let Some(pre) = self.injections[m.color as usize].pull_back(&rs) {
                    lspans.insert(rs.clone(), self.tower.l_span(&pre));
                }
                color_of.insert(rs.clone(), m.color);
                g.add_term(rs, 1);
            }
        }
        self.g_tem = g;
        self.color_of = color_of;
        self.lspans = lspans;
    }

    /// Overrides one configuration and rebuilds.
    pub fn set_config(&mut self, r_space: Subspace, c: RConfig) -> Result<()> {
        if !self.config.contains_key(&r_space) {
            return Err(Error::InvalidParameter(format!("{} is not an r-space of V", r_space)));
        }
        self.config.insert(r_space, c);
        self.rebuild()
    }

    /// Sets the configurations of every r-subspace of span(ι_i(Nx)) so that
    /// (i, x) is admitted, then rebuilds. Returns the planted s-space.
    pub fn plant(&mut self, i: u32, x: &[u32]) -> Result<Subspace> {
        self.plant_many(&[(i, x.to_vec())]).map(|mut v| v.remove(0))
    }

    pub fn plant_many(&mut self, items: &[(u32, Vec<u32>)]) -> Result<Vec<Subspace>> {
        let profiles = red_profiles(self.q(), self.r(), self.s())?;
        let mut out = Vec::new();
        for (i, x) in items {
            if *i >= self.z() || x.len() != self.r() as usize || self.tower.l_dim(x) != self.r() as usize {
                return Err(Error::InvalidParameter(format!("cannot plant color {} with x = {:?}", i, x)));
            }
            let nx = self.nx(x);
            for (k, pi) in profiles.iter().enumerate() {
                let basis = self.inject_all(*i, &self.apply_profile_k(pi, &nx));
                let rs = Subspace::span(self.q(), self.n(), &basis);
                self.config.insert(rs, RConfig { y: true, color: *i, basis, profile: k });
            }
            out.push(self.block(*i, x));
        }
        self.rebuild()?;
        Ok(out)
    }

    /// Plants, for every profile Π, the template block through Πb, so that
    /// S = span(ι_i(b)) becomes configuration compatible for i with witness
    /// ι_i(b). Each block is span(ι_i(Nx')) with x' = (ΠN)^{-1}Πb.
    pub fn plant_compatible(&mut self, i: u32, b: &[u32]) -> Result<Subspace> {
        let (r, s) = (self.r() as usize, self.s() as usize);
        if b.len() != s || i >= self.z() {
            return Err(Error::InvalidParameter("b must have s coordinates and i must be a color".into()));
        }
        let lf = self.tower.lfield();
        let kf = self.tower.kfield();
        let profiles = red_profiles(self.q(), self.r(), self.s())?;
        let mut items = Vec::with_capacity(profiles.len());
        for pi in profiles.iter() {
            let pn: Mat = pi
                .row_digits()
                .iter()
                .map(|row| {
                    (0..r)
                        .map(|j| row.iter().zip(&self.n_mat.entries).fold(0, |a, (&c, nrow)| lf.add(a, lf.mul(self.tower.base_to_l(c), nrow[j]))))
                        .collect()
                })
                .collect();
            let inv = crate::linalg::inverse(lf, &pn).ok_or_else(|| Error::Degenerate("ΠN is singular".into()))?;
            let pb = self.apply_profile_k(pi, b);
            let x: Vec<u32> = inv
                .iter()
                .map(|row| row.iter().zip(&pb).fold(0, |a, (&c, &y)| kf.add(a, kf.mul(self.tower.l_to_k(c), y))))
                .collect();
            if self.tower.l_dim(&x) != r {
                return Err(Error::Degenerate(format!("(ΠN)^{{-1}}Πb is L-dependent for Π = {}", pi)));
            }
            items.push((i, x));
        }
        self.plant_many(&items)?;
        Ok(Subspace::span(self.q(), self.n(), &self.inject_all(i, b)))
    }

    /// Members of color i.
    pub fn members_of(&self, i: u32) -> impl Iterator<Item = &TemplateMember> {
        self.members.iter().filter(move |m| m.color == i)
    }

    pub fn s_tem(&self) -> SignedQSystem {
        SignedQSystem::indicator(self.q(), self.n(), self.s(), self.members.iter().map(|m| &m.space))
    }

    pub fn color_of(&self, r_space: &Subspace) -> Option<u32> {
        self.color_of.get(r_space).copied()
    }

    /// span_L(ι_i^{-1}(T)) as an F_q-subspace of F_q^{ℓm}, or None when T ⊄ K_i.
    pub fn l_span_of(&self, i: u32, t: &Subspace) -> Option<Subspace> {
        if let (Some(&c), Some(ls)) = (self.color_of.get(t), self.lspans.get(t)) {
            if c == i {
                return Some(ls.clone());
            }
        }
        self.injections[i as usize].pull_back(t).map(|pre| self.tower.l_span(&pre))
    }

    pub fn to_text(&self) -> String {
        let profiles = red_profiles(self.q(), self.r(), self.s()).expect("validated parameters");
        let h = TemplateHeader {
            kind: "template".into(),
            params: self.params.clone(),
            injections: self.injections.iter().map(|w| w.matrix().clone()).collect(),
            n_exponents: self.n_mat.exponents.clone(),
            config: self
                .config
                .iter()
                .map(|(k, c)| {
                    let rec = ConfigRecord {
                        y: c.y,
                        i: c.color,
                        b: c.basis.clone(),
                        pi: profiles[c.profile].literal(),
                    };
                    (k.literal(), rec)
                })
                .collect(),
            members: self.members.iter().map(|m| MemberRecord { space: m.space.literal(), color: m.color, x: m.x.clone() }).collect(),
        };
        let mut out = serde_json::to_string(&h).expect("serializable header");
        out.push('\n');
        out.push_str(&self.s_tem().to_text());
        out.push_str(&self.g_tem.to_text());
        out
    }

    /// Parses, rebuilds from the configurations and requires the stored
    /// members and blocks to agree.
    pub fn from_text(text: &str) -> Result<Self> {
        let (head, blocks) = read_blocks(text, 2)?;
        let perr = |msg: String| Error::Parse { line: 1, msg };
        let h: TemplateHeader = serde_json::from_str(&head).map_err(|e| perr(e.to_string()))?;
        if h.kind != "template" {
            return Err(perr(format!("expected a template, found '{}'", h.kind)));
        }
        let p = h.params;
        p.validate()?;
        let tower = Arc::new(FieldTower::new(p.tower)?);
        let injections = h
            .injections
            .into_iter()
            .map(|w| LinearInjection::from_matrix(&tower, p.n, w))
            .collect::<Result<Vec<_>>>()?;
        if injections.len() != p.z as usize {
            return Err(perr(format!("expected {} injections", p.z)));
        }
        let n_mat = GenericMatrix::from_entries(
            &tower,
            Level::L,
            h.n_exponents
                .chunks(p.r as usize)
                .map(|c| c.iter().map(|&e| tower.lfield().exp(e)).collect())
                .collect::<Mat>(),
            p.d,
        )?;
        let profiles = red_profiles(p.q, p.r, p.s)?;
        let mut config = BTreeMap::new();
        for (lit, rec) in h.config {
            let key = Subspace::parse_literal(p.q, p.n, &lit).map_err(perr)?;
            let pi = Subspace::parse_literal(p.q, p.s, &rec.pi).map_err(perr)?;
            let profile = profiles.iter().position(|x| *x == pi).ok_or_else(|| perr(format!("unknown profile {}", rec.pi)))?;
            config.insert(key, RConfig { y: rec.y, color: rec.i, basis: rec.b, profile });
        }
        let mut st = TemplateState {
            g_tem: SignedQSystem::new(p.q, p.n, p.r),
            params: p,
            tower,
            injections,
            n_mat,
            config,
            members: Vec::new(),
            color_of: HashMap::new(),
            lspans: HashMap::new(),
        };
        st.rebuild()?;
        let stored: Vec<(String, u32, Vec<u32>)> = h.members.into_iter().map(|m| (m.space, m.color, m.x)).collect();
        let rebuilt: Vec<(String, u32, Vec<u32>)> = st.members.iter().map(|m| (m.space.literal(), m.color, m.x.clone())).collect();
        if stored != rebuilt || blocks[0] != st.s_tem() || blocks[1] != st.g_tem {
            return Err(Error::Verification("stored template disagrees with its configurations".into()));
        }
        Ok(st)
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    y: bool,
    i: u32,
    b: Vec<u64>,
    pi: String,
}

#[derive(Serialize, Deserialize)]
struct MemberRecord {
    space: String,
    color: u32,
    x: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct TemplateHeader {
    kind: String,
    params: TemplateParams,
    injections: Vec<Mat>,
    n_exponents: Vec<u64>,
    config: BTreeMap<String, ConfigRecord>,
    members: Vec<MemberRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TemplateReport {
    pub pass: bool,
    pub members: usize,
    pub g_tem_size: usize,
    pub bullet1: BulletCheck,
    pub bullet2: BulletCheck,
    pub bullet4: BulletCheck,
    /// Largest obstructed fraction of s- and (r+s)-space extensions over
    /// R ∉ G_tem, as exact rationals; None when skipped.
    pub obstruction_s: Option<String>,
    pub obstruction_rs: Option<String>,
}

fn new_check() -> BulletCheck {
    BulletCheck { pass: true, checked: 0, counterexample: None }
}

fn fail(c: &mut BulletCheck, why: String) {
    if c.pass {
        c.pass = false;
        c.counterexample = Some(why);
    }
}

/// Largest fraction of t-spaces T ⊇ R with an r-subspace in `obstacles`,
/// over r-spaces R outside `obstacles`.
pub fn max_obstruction(q: u32, n: u32, r: u32, t: u32, obstacles: &HashSet<Subspace>) -> Result<Option<BigRational>> {
    if t > n {
        return Ok(None);
    }
    let rs = enumerate_grassmannian(n, r, q)?;
    let per = crate::subspace::gaussian_binomial_u64((n - r) as u64, (t - r) as u64, q as u64);
    let inner = crate::subspace::gaussian_binomial_u64(t as u64, r as u64, q as u64);
    let work = per.zip(inner).and_then(|(a, b)| a.checked_mul(b)?.checked_mul(rs.len() as u64));
    if work.is_none_or(|w| w > OBSTRUCTION_BUDGET) {
        return Ok(None);
    }
    let mut worst = BigRational::zero();
    for r_space in rs.iter().filter(|x| !obstacles.contains(*x)) {
        let sup = r_space.supersets(t as usize)?;
        let bad = sup.iter().filter(|tt| tt.subspaces(r as usize).iter().any(|x| obstacles.contains(x))).count();
        let frac = BigRational::new(BigInt::from(bad), BigInt::from(sup.len()));
        if frac > worst {
            worst = frac;
        }
    }
    Ok(Some(worst))
}

/// Exact checks of well-definedness, uniqueness of r-spaces and L-dimension,
/// plus the measured obstruction fractions.
pub fn verify_template(st: &TemplateState) -> Result<TemplateReport> {
    let (q, n, s, r) = (st.q(), st.n(), st.s(), st.r());
    let profiles = red_profiles(q, r, s)?;
    let mut bullet1 = new_check();
    let mut bullet2 = new_check();
    let mut bullet4 = new_check();
    let mut seen: HashMap<Subspace, usize> = HashMap::new();
    for (k, m) in st.members.iter().enumerate() {
        bullet1.checked += 1;
        let nx = st.nx(&m.x);
        let block = st.block(m.color, &m.x);
        if block.dim() != s as usize || block != m.space {
            fail(&mut bullet1, format!("member {} does not equal an s-dimensional span(ι(Nx))", k));
        }
        for pi in profiles.iter() {
            let rs = Subspace::span(q, n, &st.inject_all(m.color, &st.apply_profile_k(pi, &nx)));
            if rs.dim() != r as usize {
                fail(&mut bullet1, format!("member {} has span(ι(ΠNx)) of dimension {}", k, rs.dim()));
            }
        }
        for rs in m.space.subspaces(r as usize) {
            bullet2.checked += 1;
            if let Some(prev) = seen.insert(rs.clone(), k) {
                fail(&mut bullet2, format!("r-space {} lies in members {} and {}", rs, prev, k));
            }
            bullet4.checked += 1;
            match st.injections[m.color as usize].pull_back(&rs) {
                Some(pre) if st.tower.l_dim(&pre) == r as usize => {}
                _ => fail(&mut bullet4, format!("r-space {} of color {} lacks full L-dimension", rs, m.color)),
            }
        }
    }
    let obstacles: HashSet<Subspace> = seen.keys().cloned().collect();
    let obstruction_s = max_obstruction(q, n, r, s, &obstacles)?.map(|x| x.to_string());
    let obstruction_rs = max_obstruction(q, n, r, r + s, &obstacles)?.map(|x| x.to_string());
    Ok(TemplateReport {
        pass: bullet1.pass && bullet2.pass && bullet4.pass,
        members: st.members.len(),
        g_tem_size: obstacles.len(),
        bullet1,
        bullet2,
        bullet4,
        obstruction_s,
        obstruction_rs,
    })
}

/// ind(R) and χ(R); ind = None stands for ∗.
pub fn ind_chi(st: &TemplateState, r_space: &Subspace) -> (Option<u32>, Vec<Subspace>) {
    let Some(i) = st.color_of(r_space) else {
        return (None, vec![r_space.clone()]);
    };
    let Some(own) = st.lspans.get(r_space) else {
        return (Some(i), vec![r_space.clone()]);
    };
    let mut chi: Vec<Subspace> = st
        .color_of
        .iter()
        .filter(|(other, &c)| c == i && st.lspans.get(*other).is_some_and(|ls| own.contains(ls)))
        .map(|(other, _)| other.clone())
        .collect();
    chi.sort();
    (Some(i), chi)
}

/// First pair of distinct members R1, R2 with R1 ∈ χ(R2), or None when the
/// collection is field disjoint.
pub fn field_disjoint_witness(st: &TemplateState, rs: &[Subspace]) -> Option<(Subspace, Subspace)> {
    let set: HashSet<&Subspace> = rs.iter().collect();
    for r2 in rs {
        let (_, chi) = ind_chi(st, r2);
        if let Some(r1) = chi.into_iter().find(|r1| r1 != r2 && set.contains(r1)) {
            return Some((r1, r2.clone()));
        }
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldBoundReport {
    pub pass: bool,
    pub max: String,
    pub bound: String,
    /// Color and L-subspace Q* (as a literal over F_q^{ℓm}) attaining the maximum.
    pub worst: Option<(u32, String)>,
}

/// L-subspaces of L-dimension k inside the L-space u (an F_q-subspace of K).
fn l_subspaces_within(tower: &FieldTower, u: &Subspace, k: usize) -> Vec<Subspace> {
    if k == 0 {
        return vec![Subspace::zero(u.q(), u.n())];
    }
    let elems: Vec<u32> = (0..vector::count(u.q(), u.dim() as u32))
        .map(|c| {
            let coeffs = vector::unpack(u.q(), u.dim() as u32, c);
            let f = crate::gf::field(u.q()).expect("prime power");
            tower.from_coord_vec(vector::combine(&f, u.n(), &coeffs, u.rows()))
        })
        .collect();
    let mut out: HashSet<Subspace> = HashSet::new();
    let mut idx = vec![0usize; k];
    loop {
        let xs: Vec<u32> = idx.iter().map(|&j| elems[j]).collect();
        let sp = tower.l_span(&xs);
        if sp.dim() == k * tower.ell() as usize {
            out.insert(sp);
        }
        let mut t = 0;
        loop {
            if t == k {
                let mut v: Vec<Subspace> = out.into_iter().collect();
                v.sort();
                return v;
            }
            idx[t] += 1;
            if idx[t] < elems.len() {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
    }
}

/// max over colors i, signs and (r−1)-dimensional L-subspaces Q* of
/// ‖∂^L_{t,r−1} ι_i^*(Φ^±)‖_∞, against θ·q^n.
pub fn field_bounded_check(phi: &SignedQSystem, st: &TemplateState, theta: &BigRational) -> Result<FieldBoundReport> {
    let t = phi.k();
    let r = st.r();
    if t != r && t != st.s() {
        return Err(Error::InvalidParameter(format!("field boundedness needs t ∈ {{r, s}}, got {}", t)));
    }
    let mut best = BigInt::zero();
    let mut worst = None;
    for i in 0..st.z() {
        for part in [phi.positive_part(), phi.negative_part()] {
            let mut counts: BTreeMap<Subspace, BigInt> = BTreeMap::new();
            for (tt, c) in part.iter() {
                let Some(pre) = st.injections[i as usize].pull_back(tt) else { continue };
                if st.tower.l_dim(&pre) != t as usize {
                    continue;
                }
                let u = st.tower.l_span(&pre);
                for qs in l_subspaces_within(&st.tower, &u, (r - 1) as usize) {
                    *counts.entry(qs).or_default() += c.abs();
                }
            }
            for (qs, c) in counts {
                if c > best {
                    best = c;
                    worst = Some((i, qs.literal()));
                }
            }
        }
    }
    let bound = theta * BigRational::from_integer(BigInt::from(st.q()).pow(st.n()));
    Ok(FieldBoundReport {
        pass: BigRational::from_integer(best.clone()) <= bound,
        max: best.to_string(),
        bound: bound.to_string(),
        worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatReport {
    pub pass: bool,
    pub in_k: bool,
    pub full_l_dim: bool,
    /// None when the basis search ran out of budget.
    pub basis_found: Option<bool>,
    pub witness: Option<Vec<u64>>,
}

/// Configuration compatibility of S for color i. The basis condition is
/// decided by exhausting all ordered bases of S and is reported even when
/// the L-dimension condition fails.
pub fn config_compatible(st: &TemplateState, space: &Subspace, i: u32) -> Result<CompatReport> {
    let (q, n, s, r) = (st.q(), st.n(), st.s(), st.r());
    if space.dim() != s as usize || i >= st.z() {
        return Err(Error::InvalidParameter("expected an s-space and a valid color".into()));
    }
    let pre = st.injections[i as usize].pull_back(space);
    let in_k = pre.is_some();
    let full_l_dim = pre.as_ref().is_some_and(|p| st.tower.l_dim(p) == s as usize);
    let mut rep = CompatReport { pass: false, in_k, full_l_dim, basis_found: Some(false), witness: None };
    if !in_k {
        return Ok(rep);
    }
    // Every valid b sends the coordinate profiles to stored bases, so only
    // bases whose vectors sit in template r-spaces of color i need checking.
    if space.subspaces(r as usize).iter().any(|x| st.color_of(x) != Some(i)) {
        return Ok(rep);
    }
    let gl = match invertible_matrices(q, s) {
        Ok(g) if (g.len() as u64) <= BASIS_BUDGET => g,
        _ => {
            rep.basis_found = None;
            return Ok(rep);
        }
    };
    let f = crate::gf::field(q)?;
    let profiles = red_profiles(q, r, s)?;
    for g in gl {
        let b: Vec<u64> = g.iter().map(|row| vector::combine(&f, n, row, space.rows())).collect();
        let ok = profiles.iter().enumerate().all(|(k, pi)| {
            let pb: Vec<u64> = pi.row_digits().iter().map(|row| vector::combine(&f, n, row, &b)).collect();
            let rs = Subspace::span(q, n, &pb);
            st.color_of(&rs) == Some(i) && st.config.get(&rs).is_some_and(|c| c.profile == k && c.basis == pb)
        });
        if ok {
            rep.pass = full_l_dim;
            rep.basis_found = Some(true);
            rep.witness = Some(b);
            return Ok(rep);
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct PlainDesign {
    pub blocks: Vec<Subspace>,
    pub lambda: BigUint,
}

/// The multiset {span(Nx) : x ∈ K^r, dim_L span_L(x) = r} on V = K with its
/// constant cover multiplicity.
pub fn plain_design(tower: &FieldTower, n_mat: &GenericMatrix) -> Result<PlainDesign> {
    let (q, nn) = (tower.q(), tower.k_dim());
    let (s, r) = (n_mat.rows as u32, n_mat.cols as u32);
    let ksize = tower.kfield().order() as u64;
    let total = ksize.checked_pow(r).filter(|&t| t <= CANDIDATE_BUDGET).ok_or_else(|| Error::budget("plain design", format!("|K|^{}", r), CANDIDATE_BUDGET))?;
    let kf = tower.kfield();
    let mut blocks = Vec::new();
    let mut mult: HashMap<Subspace, u64> = HashMap::new();
    for code in 0..total {
        let x = vector::unpack(ksize as u32, r, code);
        if tower.l_dim(&x) != r as usize {
            continue;
        }
        let nx: Vec<u32> = n_mat
            .entries
            .iter()
            .map(|row| row.iter().zip(&x).fold(0, |a, (&c, &xj)| kf.add(a, kf.mul(tower.l_to_k(c), xj))))
            .collect();
        let sp = tower.fq_span(&nx);
        if sp.dim() != s as usize {
            return Err(Error::Degenerate(format!("span(Nx) has dimension {} < {} for x = {:?}", sp.dim(), s, x)));
        }
        for rs in sp.subspaces(r as usize) {
            *mult.entry(rs).or_default() += 1;
        }
        blocks.push(sp);
    }
    let all = enumerate_grassmannian(nn, r, q)?;
    let lambda = mult.get(&all[0]).copied().unwrap_or(0);
    if let Some(bad) = all.iter().find(|x| mult.get(*x).copied().unwrap_or(0) != lambda) {
        return Err(Error::Verification(format!(
            "multiplicity not constant: {} covered {} times, {} covered {} times",
            all[0],
            lambda,
            bad,
            mult.get(bad).copied().unwrap_or(0)
        )));
    }
    Ok(PlainDesign { blocks, lambda: BigUint::from(lambda) })
}

/// plain_design with the first degree d ≤ 8 whose canonical N passes bullet 1.
pub fn plain_design_params(q: u32, n: u32, s: u32, r: u32, ell: u32, m: u32) -> Result<PlainDesign> {
    if ell * m != n {
        return Err(Error::InvalidParameter(format!("plain design needs ℓm = n, got {}·{} ≠ {}", ell, m, n)));
    }
    let (p, e) = crate::gf::prime_power(q as u64).ok_or_else(|| Error::InvalidParameter(format!("{} is not a prime power", q)))?;
    let tower = FieldTower::new(TowerSpec { p: p as u32, e, ell, m })?;
    for d in 1..=8 {
        let Ok(nm) = generic_matrix(&tower, Level::L, s as usize, r as usize, d, 0) else { continue };
        if generic_bullet1(&tower, &nm, r, s)?.pass {
            return plain_design(&tower, &nm);
        }
    }
    Err(Error::Degenerate("no canonical N with d ≤ 8 passes invertibility".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::build_tower;
    use crate::subspace::gaussian_binomial;
    use proptest::prelude::*;

    fn p0(seed: u64, tau: (i64, i64), z: u32) -> TemplateParams {
        TemplateParams {
            q: 2,
            n: 4,
            s: 2,
            r: 1,
            tower: "2^1:2:2".parse().unwrap(),
            z,
            tau: BigRational::new(tau.0.into(), tau.1.into()),
            d: 1,
            seed,
        }
    }

    #[test]
    fn params_validation() {
        let mut p = p0(1, (1, 1), 1);
        p.n = 3;
        assert!(sample_template(&p).is_err());
        let mut p = p0(1, (3, 2), 1);
        assert!(p.validate().is_err());
        p.tau = BigRational::zero();
        assert!(p.validate().is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_well_formed() {
        let a = sample_template(&p0(3, (1, 1), 1)).unwrap();
        let b = sample_template(&p0(3, (1, 1), 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.config.len(), 15);
        let rep = verify_template(&a).unwrap();
        assert!(rep.pass, "{:?}", rep);
    }

    #[test]
    fn some_seed_gives_members() {
        let found = (0..20).map(|seed| sample_template(&p0(seed, (1, 1), 1)).unwrap()).find(|t| !t.members.is_empty());
        let t = found.expect("a nonempty P0 template among 20 seeds");
        let rep = verify_template(&t).unwrap();
        assert!(rep.pass);
        // Each member contributes [2 1]_2 = 3 distinct r-spaces.
        assert_eq!(t.g_tem.len(), 3 * t.members.len());
        assert!(t.g_tem.iter().all(|(_, c)| c.is_one()));
    }

    #[test]
    fn all_y_zero_gives_empty_template() {
        let mut t = sample_template(&p0(5, (1, 1), 1)).unwrap();
        for c in t.config.values_mut() {
            c.y = false;
        }
        t.rebuild().unwrap();
        assert!(t.members.is_empty());
        assert!(t.g_tem.is_empty());
    }

    #[test]
    fn planting_admits_the_block() {
        let mut t = sample_template(&p0(7, (1, 2), 1)).unwrap();
        let x = vec![t.tower().kfield().exp(4)];
        let s = t.plant(0, &x).unwrap();
        assert!(t.members.iter().any(|m| m.space == s && m.x == x));
        let rep = verify_template(&t).unwrap();
        assert!(rep.pass);
        // A template block has L-dimension r < s, so only the basis bullet holds.
        let c = config_compatible(&t, &s, 0).unwrap();
        assert!(c.in_k && !c.full_l_dim && !c.pass);
        assert_eq!(c.basis_found, Some(true));
        let w = c.witness.unwrap();
        assert_eq!(w, t.inject_all(0, &t.nx(&x)));
    }

    fn compatible_root(seed: u64) -> (TemplateState, Subspace, Vec<u32>) {
        let mut t = sample_template(&p0(seed, (1, 2), 1)).unwrap();
        let b = {
            let kf = t.tower().kfield();
            vec![kf.exp(1), kf.exp(2)]
        };
        assert_eq!(t.tower().l_dim(&b), 2);
        let root = t.plant_compatible(0, &b).unwrap();
        (t, root, b)
    }

    #[test]
    fn planted_root_is_compatible() {
        let (t, root, b) = compatible_root(31);
        let rep = config_compatible(&t, &root, 0).unwrap();
        assert!(rep.pass, "{:?}", rep);
        assert_eq!(rep.witness.unwrap(), t.inject_all(0, &b));
        assert!(verify_template(&t).unwrap().pass);
        assert!(t.s_tem().support().all(|m| *m != root));
    }

    #[test]
    fn duplicated_member_fails_bullet2() {
        let mut t = sample_template(&p0(7, (1, 1), 1)).unwrap();
        t.plant(0, &[1]).unwrap();
        let m = t.members[0].clone();
        t.members.push(m);
        let rep = verify_template(&t).unwrap();
        assert!(!rep.bullet2.pass);
        assert!(rep.bullet2.counterexample.is_some());
    }

    #[test]
    fn ind_chi_behaviour() {
        let mut t = sample_template(&p0(11, (1, 1), 1)).unwrap();
        let s = t.plant(0, &[1]).unwrap();
        for rs in s.subspaces(1) {
            let (ind, chi) = ind_chi(&t, &rs);
            assert_eq!(ind, Some(0));
            assert!(chi.contains(&rs));
            // r = 1: the L-line through ι^{-1}(R) is the pullback of S itself.
            for other in &chi {
                assert!(s.contains(other) || t.color_of(other) == Some(0));
                let (_, back) = ind_chi(&t, other);
                assert!(back.contains(&rs));
            }
            // Every template line in the same L-line is in χ.
            let oracle: Vec<Subspace> = t
                .g_tem
                .support()
                .filter(|x| t.l_span_of(0, x) == t.l_span_of(0, &rs))
                .cloned()
                .collect();
            assert_eq!(chi, oracle);
        }
        let outside = enumerate_grassmannian(4, 1, 2).unwrap().into_iter().find(|x| t.color_of(x).is_none()).unwrap();
        assert_eq!(ind_chi(&t, &outside), (None, vec![outside.clone()]));
    }

    #[test]
    fn field_boundedness_examples() {
        let mut t = sample_template(&p0(13, (1, 1), 1)).unwrap();
        let s = t.plant(0, &[1]).unwrap();
        let zero = SignedQSystem::new(2, 4, 1);
        assert!(field_bounded_check(&zero, &t, &BigRational::zero()).unwrap().pass);
        let lines = s.subspaces(1);
        let one = SignedQSystem::indicator(2, 4, 1, [&lines[0]]);
        let rep = field_bounded_check(&one, &t, &BigRational::zero()).unwrap();
        assert_eq!(rep.max, "1");
        assert!(!rep.pass);
        // r = 1: Q* is the zero L-space, so the max counts every full-L-dimension line.
        let three = SignedQSystem::indicator(2, 4, 1, lines.iter());
        assert_eq!(field_bounded_check(&three, &t, &BigRational::zero()).unwrap().max, "3");
        let theta = BigRational::new(3.into(), 16.into());
        assert!(field_bounded_check(&three, &t, &theta).unwrap().pass);
    }

    #[test]
    fn compatibility_failures() {
        let (mut t, root, _) = compatible_root(37);
        // Turning off one r-space drops its block, so the basis bullet fails.
        let rs = root.subspaces(1)[0].clone();
        let mut c = t.config[&rs].clone();
        c.y = false;
        t.set_config(rs, c).unwrap();
        let rep = config_compatible(&t, &root, 0).unwrap();
        assert!(rep.in_k && rep.full_l_dim && !rep.pass);
        assert_eq!(rep.basis_found, Some(false));
    }

    #[test]
    fn other_color_breaks_compatibility() {
        let mut t = sample_template(&p0(41, (1, 2), 2)).unwrap();
        let b = {
            let kf = t.tower().kfield();
            vec![kf.exp(1), kf.exp(2)]
        };
        let root = t.plant_compatible(0, &b).unwrap();
        assert!(config_compatible(&t, &root, 0).unwrap().pass);
        // Recolor one r-space's block to color 1 by planting through ι_1.
        let rs = root.subspaces(1)[0].clone();
        let mut c = t.config[&rs].clone();
        c.color = 1;
        t.set_config(rs, c).unwrap();
        assert!(!config_compatible(&t, &root, 0).unwrap().pass);
    }

    #[test]
    fn compatibility_outside_k() {
        let p = TemplateParams { n: 5, ..p0(19, (1, 1), 1) };
        let t = sample_template(&p).unwrap();
        let img = t.injections[0].image_space().clone();
        let s = enumerate_grassmannian(5, 2, 2).unwrap().into_iter().find(|x| !img.contains(x)).unwrap();
        let rep = config_compatible(&t, &s, 0).unwrap();
        assert!(!rep.in_k && !rep.pass);
    }

    #[test]
    fn plain_design_p0() {
        let d = plain_design_params(2, 4, 2, 1, 2, 2).unwrap();
        assert_eq!(d.blocks.len(), 15);
        assert_eq!(d.lambda, BigUint::from(3u32));
        let lhs = BigUint::from(d.blocks.len()) * gaussian_binomial(2, 1, 2);
        assert_eq!(lhs, &d.lambda * gaussian_binomial(4, 1, 2));
    }

    #[test]
    fn plain_design_rejects_equal_rows() {
        let t = build_tower(2, 1, 2, 2).unwrap();
        let a = t.lfield().alpha();
        let nm = GenericMatrix {
            spec: t.spec(),
            level: Level::L,
            rows: 2,
            cols: 1,
            d: 1,
            exponents: vec![1, 1],
            entries: vec![vec![a], vec![a]],
            warning: None,
        };
        assert!(matches!(plain_design(&t, &nm), Err(Error::Degenerate(_))));
    }

    #[test]
    fn plain_design_family() {
        // ℓm = n ≤ 6, q ∈ {2,3}, r = 1, s ∈ {2,3}, whenever N exists.
        for (q, ell, m) in [(2, 2, 2), (2, 3, 2), (2, 2, 3), (2, 3, 1), (2, 6, 1), (3, 2, 2), (3, 2, 1)] {
            for s in [2u32, 3] {
                let n = ell * m;
                if s >= n {
                    continue;
                }
                match plain_design_params(q, n, s, 1, ell, m) {
                    Ok(d) => {
                        let lhs = BigUint::from(d.blocks.len()) * gaussian_binomial(s as u64, 1, q as u64);
                        assert_eq!(lhs, &d.lambda * gaussian_binomial(n as u64, 1, q as u64), "q={} n={} s={}", q, n, s);
                    }
                    Err(Error::Degenerate(_)) => {}
                    Err(e) => panic!("q={} ℓ={} m={} s={}: {}", q, ell, m, s, e),
                }
            }
        }
    }

    #[test]
    fn text_roundtrip() {
        let mut t = sample_template(&p0(23, (1, 2), 2)).unwrap();
        t.plant(1, &[3]).unwrap();
        let text = t.to_text();
        let back = TemplateState::from_text(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
        let tampered = text.replacen("\"y\":true", "\"y\":false", 1);
        assert!(TemplateState::from_text(&tampered).is_err() || TemplateState::from_text(&tampered).unwrap() != t);
    }

    #[test]
    fn obstruction_fraction_bounded() {
        let mut t = sample_template(&p0(29, (1, 1), 1)).unwrap();
        t.plant(0, &[1]).unwrap();
        let rep = verify_template(&t).unwrap();
        let f: BigRational = rep.obstruction_s.unwrap().parse().unwrap();
        assert!(f <= BigRational::one() && f.is_positive());
        assert!(rep.obstruction_rs.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn template_invariants(seed in 0u64..1000, num in 1i64..=4, z in 1u32..=2) {
            let t = sample_template(&p0(seed, (num, 4), z)).unwrap();
            let rep = verify_template(&t).unwrap();
            prop_assert!(rep.pass);
            // G_tem is the disjoint union of the members' r-subspaces.
            let mut union = SignedQSystem::new(2, 4, 1);
            for m in &t.members {
                for rs in m.space.subspaces(1) {
                    union.add_term(rs, 1);
                }
            }
            prop_assert_eq!(&union, &t.g_tem);
            prop_assert!(t.g_tem.is_set());
            for rs in enumerate_grassmannian(4, 1, 2).unwrap() {
                let (ind, _) = ind_chi(&t, &rs);
                prop_assert_eq!(ind.is_some(), t.g_tem.has(&rs));
            }
            let theta = BigRational::new(BigInt::from(t.g_tem.len()), BigInt::from(16)) + BigRational::one();
            prop_assert!(field_bounded_check(&t.g_tem, &t, &theta).unwrap().pass);
        }
    }
}
