//! Weight families for the two pooling architectures.
//!
//! Both architectures share an anchor bank of `K1 = N(N-1)(D-1)/2 + 1`
//! vectors in general position. LP adds `K2 = N(N-1) + 1` prime coupling
//! coefficients and the rows `e_i - γ_k w_j`; LE instead enumerates the
//! monomial exponents `(q-1) e_i + (p-q+1) e_(D+j)`.
//!
//! Weights are never stored numerically outside the process: a
//! [`WeightHeader`] regenerates them deterministically.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiset::{is_anchor, SetMatrix, ToleranceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Lp,
    Le,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Lp => "lp",
            Arch::Le => "le",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(Arch::Lp),
            "le" => Ok(Arch::Le),
            other => Err(Error::InvalidInput(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BankMode {
    /// `w_j = (1, t_j, ..., t_j^(D-1))` with `t_j = j / K1`.
    #[default]
    MomentCurve,
    /// Standard-normal rows drawn from the seed.
    SeededRandom(u64),
}

impl BankMode {
    pub fn name(&self) -> &'static str {
        match self {
            BankMode::MomentCurve => "moment-curve",
            BankMode::SeededRandom(_) => "seeded-random",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            BankMode::MomentCurve => None,
            BankMode::SeededRandom(s) => Some(*s),
        }
    }

    pub fn parse(name: &str, seed: Option<u64>) -> Result<Self> {
        match name {
            "moment-curve" => Ok(BankMode::MomentCurve),
            "seeded-random" => Ok(BankMode::SeededRandom(seed.unwrap_or(0))),
            other => Err(Error::InvalidInput(format!("unknown bank mode {other:?}"))),
        }
    }
}

/// Everything needed to regenerate a weight set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub arch: Arch,
    pub n: usize,
    pub d: usize,
    pub bank_mode: String,
    pub seed: Option<u64>,
}

impl WeightHeader {
    pub fn new(arch: Arch, n: usize, d: usize, mode: BankMode) -> Self {
        WeightHeader {
            arch,
            n,
            d,
            bank_mode: mode.name().to_string(),
            seed: mode.seed(),
        }
    }

    pub fn mode(&self) -> Result<BankMode> {
        BankMode::parse(&self.bank_mode, self.seed)
    }
}

pub fn anchor_count(n: usize, d: usize) -> usize {
    n * (n - 1) * (d - 1) / 2 + 1
}

pub fn gamma_count(n: usize) -> usize {
    n * (n - 1) + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub n: usize,
    pub d: usize,
    pub arch: Arch,
    pub k1: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    pub lower_bound: usize,
    pub upper_bound: usize,
    /// Whether `lower_bound <= L <= upper_bound` holds for this construction.
    pub within_bounds: bool,
}

/// Widths of the constructed embeddings and the reference interval.
pub fn dims(n: usize, d: usize, arch: Arch) -> Result<DimensionReport> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("dims needs N, D >= 1, got {n}, {d}")));
    }
    let k1 = anchor_count(n, d);
    let (k2, k, l, lower, upper) = match arch {
        Arch::Lp => {
            let k2 = gamma_count(n);
            let k = d + k1 + d * k1 * k2;
            (Some(k2), Some(k), n * k, n * (d + 1), n.pow(5) * d * d)
        }
        Arch::Le => (None, None, d * k1 * n * (n + 3) / 2, n * d, n.pow(4) * d * d),
    };
    Ok(DimensionReport {
        n,
        d,
        arch,
        k1,
        k2,
        k,
        l,
        lower_bound: lower,
        upper_bound: upper,
        within_bounds: lower <= l && l <= upper,
    })
}

/// `K1` linear functionals such that every `D` of them are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBank {
    n: usize,
    d: usize,
    rows: Vec<Vec<f64>>,
    mode: BankMode,
}

const EXHAUSTIVE_SUBSET_LIMIT: usize = 5000;
const SPOT_CHECK_SUBSETS: usize = 1000;
const RANDOM_BANK_ATTEMPTS: u64 = 3;

impl AnchorBank {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k1(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn mode(&self) -> BankMode {
        self.mode
    }

    /// Every `D`-subset independent: exhaustive when there are at most 5000
    /// subsets, otherwise a seeded spot check of 1000.
    pub fn independence_check(&self) -> bool {
        let k1 = self.rows.len();
        let d = self.d;
        let subsets = binomial(k1, d);
        if subsets <= EXHAUSTIVE_SUBSET_LIMIT as u128 {
            (0..k1)
                .combinations(d)
                .all(|s| subset_independent(&self.rows, &s))
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..SPOT_CHECK_SUBSETS).all(|_| {
                let s = rand::seq::index::sample(&mut rng, k1, d).into_vec();
                subset_independent(&self.rows, &s)
            })
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn subset_independent(rows: &[Vec<f64>], subset: &[usize]) -> bool {
    let d = subset.len();
    let m = DMatrix::from_fn(d, d, |r, c| rows[subset[r]][c]);
    let scale: f64 = subset
        .iter()
        .map(|&r| rows[r].iter().map(|v| v * v).sum::<f64>().sqrt())
        .product();
    m.determinant().abs() > 1e-12 * scale
}

pub fn build_anchor_bank(n: usize, d: usize, mode: BankMode) -> Result<AnchorBank> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("anchor bank needs N, D >= 1, got {n}, {d}")));
    }
    let k1 = anchor_count(n, d);
    match mode {
        BankMode::MomentCurve => {
            let rows = (1..=k1)
                .map(|j| {
                    let t = j as f64 / k1 as f64;
                    (0..d).map(|p| t.powi(p as i32)).collect()
                })
                .collect();
            Ok(AnchorBank { n, d, rows, mode })
        }
        BankMode::SeededRandom(seed) => {
            for attempt in 0..RANDOM_BANK_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
                let rows = (0..k1)
                    .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                let bank = AnchorBank { n, d, rows, mode };
                if bank.independence_check() {
                    return Ok(bank);
                }
                log::warn!("random anchor bank attempt {attempt} failed the independence check");
            }
            Err(Error::AnchorSelfCheck {
                attempts: RANDOM_BANK_ATTEMPTS as usize,
            })
        }
    }
}

/// Coupling coefficients: the first `K2` primes.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    gammas: Vec<f64>,
}

impl GammaSet {
    pub fn k2(&self) -> usize {
        self.gammas.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.gammas
    }

    /// Count of 4-tuples with `γi != γj`, `γi != γk` and `γi/γj == γk/γl`,
    /// compared as `γi γl == γj γk`.
    pub fn ratio_violations(&self) -> usize {
        let g = &self.gammas;
        let n = g.len();
        let mut bad = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        if g[i] != g[j] && g[i] != g[k] && g[i] * g[l] == g[j] * g[k] {
                            bad += 1;
                        }
                    }
                }
            }
        }
        bad
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

pub fn build_gammas(k2: usize) -> Result<GammaSet> {
    if k2 == 0 {
        return Err(Error::InvalidInput("K2 must be >= 1".into()));
    }
    Ok(GammaSet {
        gammas: first_primes(k2).into_iter().map(|p| p as f64).collect(),
    })
}

/// Role of one weight row (and of its length-`N` embedding block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockRole {
    Buffer { i: usize },
    Anchor { j: usize },
    Coupling { i: usize, j: usize, k: usize },
}

/// Weights of the linear-layer + power-mapping architecture.
#[derive(Debug, Clone)]
pub struct LPWeightSet {
    n: usize,
    d: usize,
    bank: AnchorBank,
    gammas: GammaSet,
    weights: Vec<Vec<f64>>,
    roles: Vec<BlockRole>,
    lookup: HashMap<BlockRole, usize>,
}

impl LPWeightSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bank(&self) -> &AnchorBank {
        &self.bank
    }

    pub fn gammas(&self) -> &GammaSet {
        &self.gammas
    }

    /// Number of weight rows `K`.
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn embedding_len(&self) -> usize {
        self.n * self.k()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn roles(&self) -> &[BlockRole] {
        &self.roles
    }

    pub fn block_index(&self, role: BlockRole) -> Option<usize> {
        self.lookup.get(&role).copied()
    }

    pub fn header(&self) -> WeightHeader {
        WeightHeader::new(Arch::Lp, self.n, self.d, self.bank.mode)
    }
}

pub fn assemble_lp_weights(n: usize, d: usize, mode: BankMode) -> Result<LPWeightSet> {
    let bank = build_anchor_bank(n, d, mode)?;
    let gammas = build_gammas(gamma_count(n))?;
    let mut weights = Vec::new();
    let mut roles = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        weights.push(e);
        roles.push(BlockRole::Buffer { i });
    }
    for (j, w) in bank.rows.iter().enumerate() {
        weights.push(w.clone());
        roles.push(BlockRole::Anchor { j });
    }
    for i in 0..d {
        for (j, w) in bank.rows.iter().enumerate() {
            for (k, &g) in gammas.gammas.iter().enumerate() {
                let mut row: Vec<f64> = w.iter().map(|v| -g * v).collect();
                row[i] += 1.0;
                weights.push(row);
                roles.push(BlockRole::Coupling { i, j, k });
            }
        }
    }
    let lookup = roles.iter().enumerate().map(|(idx, r)| (*r, idx)).collect();
    Ok(LPWeightSet {
        n,
        d,
        bank,
        gammas,
        weights,
        roles,
        lookup,
    })
}

/// One output coordinate of the LE architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct LeEntry {
    pub i: usize,
    pub j: usize,
    /// Total monomial degree, `1..=N`.
    pub p: usize,
    /// `1..=p+1`.
    pub q: usize,
    /// Effective weight `v = (q-1) e_i + (p-q+1) w_j`.
    pub v: Vec<f64>,
}

impl LeEntry {
    /// Exponent of `exp(x_i)`.
    pub fn channel_degree(&self) -> usize {
        self.q - 1
    }

    /// Exponent of `exp(X w_j)`.
    pub fn anchor_degree(&self) -> usize {
        self.p + 1 - self.q
    }
}

/// Exponents of the linear-layer + exponential-activation architecture.
#[derive(Debug, Clone)]
pub struct LEExponentSet {
    n: usize,
    d: usize,
    bank: AnchorBank,
    omega: Vec<Vec<f64>>,
    entries: Vec<LeEntry>,
    lookup: HashMap<(usize, usize, usize, usize), usize>,
}

impl LEExponentSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bank(&self) -> &AnchorBank {
        &self.bank
    }

    /// `Ω = [I_D | bankᵀ]`, `D x (D + K1)`.
    pub fn omega(&self) -> &[Vec<f64>] {
        &self.omega
    }

    pub fn entries(&self) -> &[LeEntry] {
        &self.entries
    }

    pub fn embedding_len(&self) -> usize {
        self.entries.len()
    }

    pub fn entry_index(&self, i: usize, j: usize, p: usize, q: usize) -> Option<usize> {
        self.lookup.get(&(i, j, p, q)).copied()
    }

    /// Dense `u_{i,j,p,q}` in `R^(D+K1)`.
    pub fn exponent_vector(&self, idx: usize) -> Vec<f64> {
        let e = &self.entries[idx];
        let mut u = vec![0.0; self.d + self.bank.k1()];
        u[e.i] += e.channel_degree() as f64;
        u[self.d + e.j] += e.anchor_degree() as f64;
        u
    }

    pub fn header(&self) -> WeightHeader {
        WeightHeader::new(Arch::Le, self.n, self.d, self.bank.mode)
    }
}

pub fn assemble_le_exponents(n: usize, d: usize, mode: BankMode) -> Result<LEExponentSet> {
    let bank = build_anchor_bank(n, d, mode)?;
    let k1 = bank.k1();
    let omega: Vec<Vec<f64>> = (0..d)
        .map(|r| {
            (0..d + k1)
                .map(|c| {
                    if c < d {
                        f64::from(u8::from(r == c))
                    } else {
                        bank.rows[c - d][r]
                    }
                })
                .collect()
        })
        .collect();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in 0..k1 {
            for p in 1..=n {
                for q in 1..=p + 1 {
                    // v = Ω u with u = (q-1) e_i + (p-q+1) e_(D+j).
                    let v = (0..d)
                        .map(|r| {
                            (q - 1) as f64 * omega[r][i] + (p + 1 - q) as f64 * omega[r][d + j]
                        })
                        .collect();
                    entries.push(LeEntry { i, j, p, q, v });
                }
            }
        }
    }
    let lookup = entries
        .iter()
        .enumerate()
        .map(|(idx, e)| ((e.i, e.j, e.p, e.q), idx))
        .collect();
    Ok(LEExponentSet {
        n,
        d,
        bank,
        omega,
        entries,
        lookup,
    })
}

/// Either weight family.
#[derive(Debug, Clone)]
pub enum Weights {
    Lp(LPWeightSet),
    Le(LEExponentSet),
}

impl Weights {
    pub fn build(arch: Arch, n: usize, d: usize, mode: BankMode) -> Result<Self> {
        match arch {
            Arch::Lp => assemble_lp_weights(n, d, mode).map(Weights::Lp),
            Arch::Le => assemble_le_exponents(n, d, mode).map(Weights::Le),
        }
    }

    pub fn from_header(header: &WeightHeader) -> Result<Self> {
        Self::build(header.arch, header.n, header.d, header.mode()?)
    }

    pub fn header(&self) -> WeightHeader {
        match self {
            Weights::Lp(w) => w.header(),
            Weights::Le(w) => w.header(),
        }
    }

    pub fn arch(&self) -> Arch {
        self.header().arch
    }

    pub fn n(&self) -> usize {
        match self {
            Weights::Lp(w) => w.n,
            Weights::Le(w) => w.n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Weights::Lp(w) => w.d,
            Weights::Le(w) => w.d,
        }
    }

    pub fn bank(&self) -> &AnchorBank {
        match self {
            Weights::Lp(w) => &w.bank,
            Weights::Le(w) => &w.bank,
        }
    }
}

/// Anchor-separation tolerance for a projected column `Xw`.
pub(crate) fn anchor_tolerance(a: &[f64], base: &ToleranceConfig) -> ToleranceConfig {
    let scale = a.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    ToleranceConfig {
        abs_tol: 1e-9 * (1.0 + scale),
        rel_tol: 0.0,
        ..*base
    }
}

/// Smallest `j` such that `X w_j` is an anchor of `X`.
pub fn find_anchor_index(x: &SetMatrix, bank: &AnchorBank, tol: &ToleranceConfig) -> Result<usize> {
    if x.n_cols() != bank.d {
        return Err(Error::ShapeMismatch {
            expected: (x.n_rows(), bank.d),
            found: x.shape(),
        });
    }
    for (j, w) in bank.rows.iter().enumerate() {
        let a = x.project(w);
        if is_anchor(&a, x, &anchor_tolerance(&a, tol))? {
            return Ok(j);
        }
    }
    Err(Error::NoAnchor {
        candidates: bank.k1(),
    })
}
