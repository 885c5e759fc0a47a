//! Executable checks of the injectivity claims, plus empirical tables.

use std::collections::HashMap;
use std::fmt;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::decoder::{decode, decode_embedding};
use crate::encoder::{encode, Embedding};
use crate::error::{Error, Result};
use crate::multiset::{equiv_check, set_distance, PermutationVector, SetMatrix, ToleranceConfig};
use crate::powersum::invert_real_power_sums;
use crate::powersum::sum_of_power_real;
use crate::weights::{binomial, Arch, BankMode, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimId {
    Counterexample,
    LowerBound,
    InjectivitySweep,
    ExactRepresentation,
    Continuity,
    Conditioning,
}

impl ClaimId {
    pub const ALL: [ClaimId; 6] = [
        ClaimId::Counterexample,
        ClaimId::LowerBound,
        ClaimId::InjectivitySweep,
        ClaimId::ExactRepresentation,
        ClaimId::Continuity,
        ClaimId::Conditioning,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimId::Counterexample => "counterexample",
            ClaimId::LowerBound => "lower_bound",
            ClaimId::InjectivitySweep => "injectivity_sweep",
            ClaimId::ExactRepresentation => "exact_representation",
            ClaimId::Continuity => "continuity",
            ClaimId::Conditioning => "conditioning",
        }
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClaimId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClaimId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown claim id '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claim_id: ClaimId,
    pub passed: bool,
    pub details: serde_json::Value,
}

/// The two 4x3 matrices whose column pairs are all equivalent while the
/// matrices themselves are not.
pub fn counterexample_pair() -> (SetMatrix, SetMatrix) {
    let x1 = [1.0, 1.0, 2.0, 2.0];
    let x2 = [1.0, 2.0, 1.0, 2.0];
    let x3 = [1.0, 2.0, 2.0, 1.0];
    let x3p = [2.0, 1.0, 1.0, 2.0];
    let x = SetMatrix::from_columns(&[x1, x2, x3]).expect("static shape");
    let y = SetMatrix::from_columns(&[x1, x2, x3p]).expect("static shape");
    (x, y)
}

pub fn reproduce_counterexample() -> ClaimReport {
    let (x, y) = counterexample_pair();
    let tol = ToleranceConfig::exact();
    let mut pairs = Vec::new();
    let mut all_pairs = true;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let xs = x.select_columns(&[i, j]).expect("columns in range");
        let ys = y.select_columns(&[i, j]).expect("columns in range");
        let witness = equiv_check(&xs, &ys, &tol).expect("4 rows is under the cap");
        all_pairs &= witness.is_some();
        pairs.push(json!({
            "columns": [i + 1, j + 1],
            "equivalent": witness.is_some(),
            "permutation": witness,
        }));
    }
    let global = equiv_check(&x, &y, &tol)
        .expect("4 rows is under the cap")
        .is_some();
    ClaimReport {
        claim_id: ClaimId::Counterexample,
        passed: all_pairs && !global,
        details: json!({
            "x": x,
            "x_prime": y,
            "pairs": pairs,
            "globally_equivalent": global,
        }),
    }
}

/// All `N`-row multisets over `grid`, each in canonical (sorted) form, in
/// lexicographic order.
pub fn canonical_grid_matrices(n: usize, d: usize, grid: &[f64]) -> Result<Vec<SetMatrix>> {
    let classes = class_count(n, d, grid.len());
    if classes > SWEEP_CLASS_GUARD {
        return Err(Error::ClassGuard {
            classes,
            guard: SWEEP_CLASS_GUARD,
        });
    }
    Ok(canonical_iter(n, d, grid).collect())
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("grid values must be finite".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    if g.is_empty() {
        return Err(Error::InvalidInput("grid must not be empty".into()));
    }
    Ok(g)
}

fn canonical_iter<'a>(n: usize, d: usize, grid: &'a [f64]) -> impl Iterator<Item = SetMatrix> + 'a {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|_| grid.iter().copied())
        .multi_cartesian_product()
        .collect();
    let rows = if d == 0 { vec![Vec::new()] } else { rows };
    rows.into_iter()
        .combinations_with_replacement(n)
        .map(|chosen| SetMatrix::from_rows(&chosen).expect("grid rows share a length"))
}

/// Number of size-`n` multisets of `g^d` distinct rows.
pub fn class_count(n: usize, d: usize, g: usize) -> u128 {
    let rows = (g as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if rows > usize::MAX as u128 {
        return u128::MAX;
    }
    binomial(rows as usize + n - 1, n)
}

pub const SWEEP_CLASS_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CollisionOutcome {
    Found {
        x: SetMatrix,
        x_prime: SetMatrix,
        searched: usize,
    },
    /// The whole grid was enumerated without a hit.
    NoneFound { searched: usize },
}

fn channel_signature(x: &SetMatrix, weights: &[Vec<f64>]) -> Vec<i64> {
    let mut sig = Vec::with_capacity(weights.len() * x.n_rows());
    for w in weights {
        let mut proj = x.project(w);
        proj.sort_by(f64::total_cmp);
        sig.extend(proj.iter().map(|v| (v * 1e9).round() as i64));
    }
    sig
}

fn channels_equivalent(x: &SetMatrix, y: &SetMatrix, weights: &[Vec<f64>], tol: &ToleranceConfig) -> bool {
    weights.iter().all(|w| {
        let mut a = x.project(w);
        let mut b = y.project(w);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).all(|(p, q)| tol.close(*p, *q))
    })
}

/// Looks for `X ≁ X'` over the grid with `X w ∼ X' w` for every weight.
///
/// Classes are visited in lexicographic canonical order; the first class
/// whose channel projections repeat those of an earlier class is returned,
/// paired with that earlier class. `budget` caps the number of classes.
pub fn collision_search(
    n: usize,
    d: usize,
    weights: &[Vec<f64>],
    grid: &[f64],
    budget: usize,
) -> Result<CollisionOutcome> {
    if weights.len() > d {
        return Err(Error::InvalidInput(format!(
            "lower-bound search needs K <= D, got K = {} and D = {d}",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != d) {
        return Err(Error::LengthMismatch {
            expected: d,
            found: w.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    let grid = sorted_grid(grid)?;
    let tol = ToleranceConfig::default();
    let mut seen: HashMap<Vec<i64>, Vec<SetMatrix>> = HashMap::new();
    let mut searched = 0;
    for x in canonical_iter(n, d, &grid) {
        if searched == budget {
            return Err(Error::BudgetExhausted { searched });
        }
        searched += 1;
        let bucket = seen.entry(channel_signature(&x, weights)).or_default();
        if let Some(prev) = bucket
            .iter()
            .find(|prev| channels_equivalent(prev, &x, weights, &tol))
        {
            return Ok(CollisionOutcome::Found {
                x: prev.clone(),
                x_prime: x,
                searched,
            });
        }
        bucket.push(x);
    }
    Ok(CollisionOutcome::NoneFound { searched })
}

/// `collision_search` in the configuration of the counterexample: `N = 4`,
/// `D = K = 3`, canonical-basis weights, grid `{1, 2}`.
pub fn lower_bound_demo(budget: usize) -> Result<ClaimReport> {
    let weights = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let outcome = collision_search(4, 3, &weights, &[1.0, 2.0], budget)?;
    let (x, y) = counterexample_pair();
    let tol = ToleranceConfig::default();
    let known_pair_collides = channels_equivalent(&x, &y, &weights, &tol)
        && equiv_check(&x, &y, &tol)?.is_none();
    let witness_ok = match &outcome {
        CollisionOutcome::Found { x, x_prime, .. } => {
            channels_equivalent(x, x_prime, &weights, &tol) && equiv_check(x, x_prime, &tol)?.is_none()
        }
        CollisionOutcome::NoneFound { .. } => false,
    };
    Ok(ClaimReport {
        claim_id: ClaimId::LowerBound,
        passed: witness_ok,
        details: json!({
            "n": 4,
            "d": 3,
            "weights": weights,
            "grid": [1.0, 2.0],
            "search": outcome,
            "witness_verified": witness_ok,
            "counterexample_pair_collides": known_pair_collides,
            "reading": "existential: for the listed weights there exist inequivalent X, X' with equal channel multisets",
        }),
    })
}

fn embedding_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Smallest ∞-distance between any two vectors, with the pair attaining it.
/// Candidates are swept in order of their first coordinate so the search
/// stops as soon as that coordinate alone exceeds the current minimum.
fn min_pairwise(vectors: &[Vec<f64>]) -> Option<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| vectors[a][0].total_cmp(&vectors[b][0]));
    let mut best: Option<(f64, usize, usize)> = None;
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            let bound = vectors[b][0] - vectors[a][0];
            if best.is_some_and(|(m, _, _)| bound >= m) {
                break;
            }
            let gap = embedding_gap(&vectors[a], &vectors[b]);
            if best.is_none_or(|(m, _, _)| gap < m) {
                best = Some((gap, a.min(b), a.max(b)));
            }
        }
    }
    best
}

pub const SEPARATION_TOL: f64 = 1e-6;
pub const WITHIN_CLASS_TOL: f64 = 1e-11;

/// Encodes every equivalence class over the grid and checks that distinct
/// classes land apart while row-permuted representatives land together.
pub fn injectivity_sweep(n: usize, d: usize, grid: &[f64], arch: Arch, mode: BankMode) -> Result<ClaimReport> {
    let grid = sorted_grid(grid)?;
    let classes = canonical_grid_matrices(n, d, &grid)?;
    let weights = Weights::build(arch, n, d, mode)?;
    let mut embeddings = Vec::with_capacity(classes.len());
    let mut within = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for x in &classes {
        let emb = encode(x, &weights)?;
        let scale = emb.max_abs().max(1.0);
        let reversed = PermutationVector::new((0..n).rev().collect())?.apply(x)?;
        let mut shuffle: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            shuffle.swap(i, rng.random_range(0..=i));
        }
        let shuffled = PermutationVector::new(shuffle)?.apply(x)?;
        for px in [reversed, shuffled] {
            let other = encode(&px, &weights)?;
            within = within.max(emb.sup_distance(&other) / scale);
        }
        embeddings.push(emb.values);
    }
    let closest = min_pairwise(&embeddings);
    let min_sep = closest.map_or(f64::INFINITY, |(m, _, _)| m);
    let passed = min_sep > SEPARATION_TOL && within <= WITHIN_CLASS_TOL;
    let closest_pair = closest.map(|(_, a, b)| json!([classes[a], classes[b]]));
    Ok(ClaimReport {
        claim_id: ClaimId::InjectivitySweep,
        passed,
        details: json!({
            "n": n,
            "d": d,
            "arch": arch,
            "grid": grid,
            "classes": classes.len(),
            "embedding_len": embeddings.first().map_or(0, Vec::len),
            "min_separation": if min_sep.is_finite() { json!(min_sep) } else { json!(null) },
            "separation_tol": SEPARATION_TOL,
            "closest_pair": closest_pair,
            "max_within_class_relative": within,
            "within_class_tol": WITHIN_CLASS_TOL,
        }),
    })
}

/// Checks `f(X) = ρ(Σφ(x))` with `ρ = f ∘ decode`.
pub fn exact_representation_check<F>(f: F, x: &SetMatrix, arch: Arch, tol: f64) -> Result<ClaimReport>
where
    F: Fn(&SetMatrix) -> f64,
{
    let fx = f(x);
    let n = x.n_rows();
    let spot = [
        PermutationVector::new((0..n).rev().collect())?,
        PermutationVector::new((0..n).map(|r| (r + 1) % n).collect())?,
    ];
    for p in &spot {
        let fpx = f(&p.apply(x)?);
        if (fpx - fx).abs() > tol * (1.0 + fx.abs()) {
            return Err(Error::NotInvariant {
                original: fx,
                permuted: fpx,
            });
        }
    }
    let weights = Weights::build(arch, n, x.n_cols(), BankMode::MomentCurve)?;
    let z = encode(x, &weights)?;
    let rho = |z: &Embedding| -> Result<f64> {
        Ok(f(&decode(z, &weights, &ToleranceConfig::default())?.recovered))
    };
    let rz = rho(&z)?;
    let err = (rz - fx).abs();
    let bound = tol * (1.0 + fx.abs());
    Ok(ClaimReport {
        claim_id: ClaimId::ExactRepresentation,
        passed: err <= bound,
        details: json!({
            "arch": arch,
            "f_x": fx,
            "rho_of_embedding": rz,
            "abs_error": err,
            "bound": bound,
        }),
    })
}

/// Invariant test functions used by the decomposition check.
pub fn entry_sum(x: &SetMatrix) -> f64 {
    x.as_slice().iter().sum()
}

pub fn max_row_norm(x: &SetMatrix) -> f64 {
    x.rows()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn column_mean_product(x: &SetMatrix) -> f64 {
    let n = x.n_rows() as f64;
    (0..x.n_cols())
        .map(|c| x.column(c).iter().sum::<f64>() / n)
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub epsilon: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_distance: Option<f64>,
    pub max_distance: Option<f64>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    })
}

/// Decodes perturbed embeddings and tabulates how far the result moves.
/// Report only: `passed` just records that the probe ran.
pub fn continuity_probe(
    x: &SetMatrix,
    arch: Arch,
    epsilons: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ClaimReport> {
    let cfg = ToleranceConfig::default();
    let weights = Weights::build(arch, x.n_rows(), x.n_cols(), BankMode::MomentCurve)?;
    let clean = encode(x, &weights)?;
    decode(&clean, &weights, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut dists = Vec::new();
        for _ in 0..trials {
            let mut noise: Vec<f64> = (0..clean.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let peak = noise.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            if peak > 0.0 {
                noise.iter_mut().for_each(|v| *v *= eps / peak);
            }
            let mut noisy = clean.clone();
            noisy.values.iter_mut().zip(&noise).for_each(|(v, e)| *v += e);
            // Verification is what a perturbed embedding breaks first; the
            // probe asks where the decoder lands, so it accepts any residual.
            let loose = ToleranceConfig {
                verify_tol: f64::INFINITY,
                ..cfg
            };
            if let Ok(report) = decode(&noisy, &weights, &loose) {
                if let Ok(dist) = set_distance(x, &report.recovered, &cfg) {
                    dists.push(dist);
                }
            }
        }
        let successes = dists.len();
        let max_distance = dists.iter().copied().reduce(f64::max);
        table.push(ContinuityRow {
            epsilon: eps,
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            median_distance: median(&mut dists),
            max_distance,
        });
    }
    Ok(ClaimReport {
        claim_id: ClaimId::Continuity,
        passed: true,
        details: json!({ "arch": arch, "x": x, "seed": seed, "table": table }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRow {
    pub m: usize,
    pub samples: usize,
    pub failures: usize,
    pub median_amplification: Option<f64>,
    pub max_amplification: Option<f64>,
}

pub const CONDITIONING_NOISE: f64 = 1e-12;

/// Output error of scalar power-sum inversion per unit of relative input
/// noise, for random distinct multisets in `[-1, 1]`.
pub fn conditioning_table(max_m: usize, samples: usize, seed: u64) -> Vec<ConditioningRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ToleranceConfig {
        max_degree: max_m.max(ToleranceConfig::default().max_degree),
        verify_tol: f64::INFINITY,
        ..ToleranceConfig::default()
    };
    (1..=max_m)
        .map(|m| {
            let mut amps = Vec::with_capacity(samples);
            let mut failures = 0;
            for _ in 0..samples {
                let mut xs: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                xs.sort_by(f64::total_cmp);
                let mut p = sum_of_power_real(&xs, m);
                for v in p.iter_mut() {
                    *v += CONDITIONING_NOISE * v.abs().max(1.0) * rng.random_range(-1.0..=1.0);
                }
                match invert_real_power_sums(&p, m, &cfg) {
                    Ok(mut roots) => {
                        roots.sort_by(f64::total_cmp);
                        amps.push(embedding_gap(&roots, &xs) / CONDITIONING_NOISE);
                    }
                    Err(_) => failures += 1,
                }
            }
            let max_amplification = amps.iter().copied().reduce(f64::max);
            ConditioningRow {
                m,
                samples,
                failures,
                median_amplification: median(&mut amps),
                max_amplification,
            }
        })
        .collect()
}

pub fn conditioning_report(max_m: usize, seed: u64) -> ClaimReport {
    let table = conditioning_table(max_m, 100, seed);
    ClaimReport {
        claim_id: ClaimId::Conditioning,
        passed: true,
        details: json!({
            "noise": CONDITIONING_NOISE,
            "default_degree_cap": ToleranceConfig::default().max_degree,
            "seed": seed,
            "table": table,
        }),
    }
}

/// Random matrix with entries uniform in `[-range, range]`.
pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize, range: f64) -> SetMatrix {
    let data = (0..n * d).map(|_| rng.random_range(-range..=range)).collect();
    SetMatrix::new(n, d, data).expect("sizes agree")
}

/// Decodes a serialized embedding and applies `f`: the `ρ` of the
/// decomposition, usable on embeddings that did not come from a known `X`.
pub fn rho<F>(f: F, emb: &Embedding, cfg: &ToleranceConfig) -> Result<f64>
where
    F: Fn(&SetMatrix) -> f64,
{
    Ok(f(&decode_embedding(emb, cfg)?.recovered))
}
