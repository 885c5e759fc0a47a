//! Exact inversion of the pooled embeddings.
//!
//! LP: every length-`N` block is a power-sum vector, so each projected
//! column is recovered as a multiset. For an anchor candidate `j` the coupled
//! blocks `x_i - γ_k X w_j` pin down which value of channel `i` sits next to
//! which anchor value; sharing the anchor order across channels assembles the
//! rows. LE: the bivariate moments of `(exp(X w_j), exp(x_i))` give complex
//! power sums of `exp(X w_j) + exp(x_i) i`, whose roots arrive already paired.
//!
//! Any candidate can produce a plausible alignment, so every candidate is
//! checked by re-encoding; the first verified one wins.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, lp_magnitudes, pool_le, pool_lp, ComplexSetMatrix, Embedding};
use crate::error::{Error, Result};
use crate::matching::capacitated_assignment;
use crate::multiset::{set_distance, PermutationVector, SetMatrix, ToleranceConfig};
use crate::powersum::{
    complex_pair_power_sums, invert_power_sums, invert_real_power_sums, power_sum_residual,
    BivariateMoments, PowerSums,
};
use crate::weights::{Arch, BankMode, BlockRole, GammaSet, LEExponentSet, LPWeightSet, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub recovered: SetMatrix,
    pub anchor_index: usize,
    /// Per channel, the order in which that channel's recovered values are
    /// laid against the shared anchor slots.
    pub alignment: Vec<PermutationVector>,
    pub residual: f64,
    pub verified: bool,
    pub candidates_tried: usize,
}

/// Everything known about a decode that found no verified candidate.
#[derive(Debug, Clone)]
pub struct DecodeFailure {
    pub candidates_tried: usize,
    pub best_residual: f64,
    pub best: Option<DecodeReport>,
    /// Largest power-sum residual over the inverted blocks, and where.
    pub worst_block_residual: f64,
    pub worst_block: Option<usize>,
    pub notes: Vec<String>,
}

impl fmt::Display for DecodeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no anchor candidate verified after {} tries (best re-encoding residual {:.3e}); \
             worst block inversion residual {:.3e}",
            self.candidates_tried, self.best_residual, self.worst_block_residual
        )?;
        if let Some(b) = self.worst_block {
            write!(f, " at block {b}")?;
        }
        if self.worst_block_residual > 1e-12 || self.best_residual.is_infinite() {
            write!(
                f,
                "; degree-N power sums are ill-conditioned here, inputs are likely outside the documented range"
            )?;
        }
        if let Some(first) = self.notes.first() {
            write!(f, "; first rejection: {first}")?;
        }
        Ok(())
    }
}

/// Recovered scalar multisets of every LP block, indexed like the weights.
/// Blocks whose inversion failed are kept as `None` with the reason.
#[derive(Debug)]
pub struct ChannelMultisets {
    sets: Vec<Option<Vec<f64>>>,
    residuals: Vec<f64>,
    failures: Vec<(usize, Error)>,
}

impl ChannelMultisets {
    pub fn block(&self, idx: usize) -> Option<&[f64]> {
        self.sets[idx].as_deref()
    }

    pub fn get(&self, w: &LPWeightSet, role: BlockRole) -> Option<&[f64]> {
        w.block_index(role).and_then(|idx| self.block(idx))
    }

    /// Power-sum residual per block; infinite where inversion failed.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn failures(&self) -> &[(usize, Error)] {
        &self.failures
    }

    fn worst(&self) -> (f64, Option<usize>) {
        self.residuals
            .iter()
            .enumerate()
            .fold((0.0, None), |(m, at), (idx, &r)| {
                if r > m {
                    (r, Some(idx))
                } else {
                    (m, at)
                }
            })
    }
}

fn check_embedding(emb: &Embedding, arch: Arch, n: usize, d: usize, len: usize) -> Result<usize> {
    if emb.arch != arch {
        return Err(Error::InvalidInput(format!(
            "expected an {arch} embedding, got {}",
            emb.arch
        )));
    }
    if (emb.n, emb.d) != (n, d) {
        return Err(Error::ShapeMismatch {
            expected: (n, d),
            found: (emb.n, emb.d),
        });
    }
    if emb.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: emb.len(),
        });
    }
    let m = emb.set_size();
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!("set size {m} not in 1..={n}")));
    }
    Ok(m)
}

fn invert_blocks(emb: &Embedding, w: &LPWeightSet, m: usize, cfg: &ToleranceConfig) -> ChannelMultisets {
    let n = w.n();
    let mut out = ChannelMultisets {
        sets: Vec::with_capacity(w.k()),
        residuals: Vec::with_capacity(w.k()),
        failures: Vec::new(),
    };
    for (block, p) in emb.values.chunks_exact(n).enumerate() {
        match invert_real_power_sums(p, m, cfg) {
            Ok(roots) => {
                let as_complex: Vec<Complex64> = roots.iter().map(|&r| Complex64::new(r, 0.0)).collect();
                out.residuals
                    .push(power_sum_residual(&as_complex, PowerSums::real(p).values()));
                out.sets.push(Some(roots));
            }
            Err(e) => {
                out.residuals.push(match e {
                    Error::InversionResidual { residual, .. } => residual,
                    _ => f64::INFINITY,
                });
                out.failures.push((block, e));
                out.sets.push(None);
            }
        }
    }
    out
}

/// Inverts every length-`N` block of an LP embedding to an `M`-element
/// multiset (sorted ascending). Fails on the first block that does not
/// invert.
pub fn decode_channel_multisets(
    emb: &Embedding,
    w: &LPWeightSet,
    m: usize,
    cfg: &ToleranceConfig,
) -> Result<ChannelMultisets> {
    check_embedding(emb, Arch::Lp, w.n(), w.d(), w.embedding_len())?;
    let mut sets = invert_blocks(emb, w, m, cfg);
    if !sets.failures.is_empty() {
        let (block, source) = sets.failures.swap_remove(0);
        return Err(Error::BlockInversion {
            block,
            source: Box::new(source),
        });
    }
    Ok(sets)
}

/// Groups a sorted sequence into runs of tolerance-equal values.
fn runs(sorted: &[f64], tol: &ToleranceConfig) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for idx in 1..=sorted.len() {
        if idx == sorted.len() || !tol.close(sorted[idx - 1], sorted[idx]) {
            out.push(start..idx);
            start = idx;
        }
    }
    out
}

fn scale_tol(values: &[f64], cfg: &ToleranceConfig) -> f64 {
    let scale = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    cfg.abs_tol + cfg.rel_tol * (1.0 + scale)
}

fn contains_close(sorted: &[f64], target: f64, tol: f64) -> bool {
    let at = sorted.partition_point(|&v| v < target - tol);
    at < sorted.len() && (sorted[at] - target).abs() <= tol
}

/// Lays the values of one channel against anchor slots so that every
/// coupled multiset `x - γ_k a` is reproduced.
///
/// `x_vals`, `anchor_ref` and each `coupled[k]` are multisets of equal size;
/// `anchor_ref` must be sorted. Returns `P` with `x_vals[P[n]]` sitting at
/// anchor slot `n`.
pub fn pair_match(
    x_vals: &[f64],
    anchor_ref: &[f64],
    coupled: &[&[f64]],
    gammas: &GammaSet,
    cfg: &ToleranceConfig,
) -> Result<PermutationVector> {
    let m = x_vals.len();
    if anchor_ref.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: anchor_ref.len(),
        });
    }
    if coupled.len() != gammas.k2() {
        return Err(Error::LengthMismatch {
            expected: gammas.k2(),
            found: coupled.len(),
        });
    }
    if let Some(bad) = coupled.iter().find(|c| c.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            found: bad.len(),
        });
    }
    if anchor_ref.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("anchor reference must be sorted".into()));
    }

    let mut x_order: Vec<usize> = (0..m).collect();
    x_order.sort_by(|&a, &b| x_vals[a].total_cmp(&x_vals[b]));
    let x_sorted: Vec<f64> = x_order.iter().map(|&i| x_vals[i]).collect();
    let x_groups = runs(&x_sorted, cfg);
    let a_groups = runs(anchor_ref, cfg);

    let coupled_sorted: Vec<Vec<f64>> = coupled
        .iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let tols: Vec<f64> = coupled_sorted.iter().map(|c| scale_tol(c, cfg)).collect();
    let gs = gammas.values();

    let feasible = |xg: usize, ag: usize| {
        let u = x_sorted[x_groups[xg].start];
        let a = anchor_ref[a_groups[ag].start];
        (0..gs.len()).all(|k| contains_close(&coupled_sorted[k], u - gs[k] * a, tols[k]))
    };
    let supply: Vec<usize> = x_groups.iter().map(|g| g.len()).collect();
    let capacity: Vec<usize> = a_groups.iter().map(|g| g.len()).collect();
    let flow = capacitated_assignment(&supply, &capacity, feasible).ok_or(Error::NoMatching)?;

    let mut next_in_group: Vec<usize> = x_groups.iter().map(|g| g.start).collect();
    let mut mapping = Vec::with_capacity(m);
    for (ag, group) in a_groups.iter().enumerate() {
        let mut filled = 0;
        for (xg, row) in flow.iter().enumerate() {
            for _ in 0..row[ag] {
                mapping.push(x_order[next_in_group[xg]]);
                next_in_group[xg] += 1;
                filled += 1;
            }
        }
        debug_assert_eq!(filled, group.len());
    }
    let perm = PermutationVector::new(mapping)?;

    // Multiplicity bookkeeping: the matched pairing must reproduce every
    // coupled multiset, not merely hit each value once.
    let placed = perm.apply_slice(x_vals);
    for (k, &g) in gs.iter().enumerate() {
        let mut predicted: Vec<f64> = placed.iter().zip(anchor_ref).map(|(u, a)| u - g * a).collect();
        predicted.sort_by(f64::total_cmp);
        let ok = predicted
            .iter()
            .zip(&coupled_sorted[k])
            .all(|(p, c)| (p - c).abs() <= tols[k]);
        if !ok {
            return Err(Error::NoMatching);
        }
    }
    Ok(perm)
}

fn lp_residual(recovered: &SetMatrix, w: &LPWeightSet, emb: &Embedding) -> Result<f64> {
    let hat = pool_lp(recovered, w)?;
    let mags = lp_magnitudes(recovered, w);
    Ok(hat
        .iter()
        .zip(&emb.values)
        .zip(&mags)
        .map(|((h, e), m)| (h - e).abs() / (1.0 + m))
        .fold(0.0, f64::max))
}

fn le_residual(recovered: &SetMatrix, e: &LEExponentSet, emb: &Embedding) -> Result<f64> {
    let hat = pool_le(recovered, e)?;
    Ok(hat
        .iter()
        .zip(&emb.values)
        .map(|(h, v)| (h - v).abs() / (1.0 + h.abs()))
        .fold(0.0, f64::max))
}

struct CandidateTracker {
    best: Option<DecodeReport>,
    notes: Vec<String>,
}

impl CandidateTracker {
    fn new() -> Self {
        CandidateTracker {
            best: None,
            notes: Vec::new(),
        }
    }

    fn offer(&mut self, report: DecodeReport) {
        if self.best.as_ref().is_none_or(|b| report.residual < b.residual) {
            self.best = Some(report);
        }
    }

    fn fail(self, tried: usize, worst: (f64, Option<usize>)) -> Error {
        let best_residual = self.best.as_ref().map_or(f64::INFINITY, |b| b.residual);
        Error::Decode(Box::new(DecodeFailure {
            candidates_tried: tried,
            best_residual,
            best: self.best,
            worst_block_residual: worst.0,
            worst_block: worst.1,
            notes: self.notes,
        }))
    }
}

pub fn decode_lp(emb: &Embedding, w: &LPWeightSet, cfg: &ToleranceConfig) -> Result<DecodeReport> {
    let m = check_embedding(emb, Arch::Lp, w.n(), w.d(), w.embedding_len())?;
    let sets = invert_blocks(emb, w, m, cfg);
    let d = w.d();
    let k1 = w.bank().k1();
    let k2 = w.gammas().k2();
    let mut tracker = CandidateTracker::new();
    tracker.notes.extend(
        sets.failures()
            .iter()
            .map(|(block, e)| format!("block {block} ({:?}): {e}", w.roles()[*block])),
    );

    let mut tried = 0;
    'candidates: for j in 0..k1 {
        tried += 1;
        let Some(anchors) = sets.get(w, BlockRole::Anchor { j }) else {
            continue;
        };
        let mut columns = Vec::with_capacity(d);
        let mut alignment = Vec::with_capacity(d);
        for i in 0..d {
            let Some(x) = sets.get(w, BlockRole::Buffer { i }) else {
                break 'candidates;
            };
            let coupled: Option<Vec<&[f64]>> = (0..k2)
                .map(|k| sets.get(w, BlockRole::Coupling { i, j, k }))
                .collect();
            let Some(coupled) = coupled else {
                continue 'candidates;
            };
            match pair_match(x, anchors, &coupled, w.gammas(), cfg) {
                Ok(p) => {
                    columns.push(p.apply_slice(x));
                    alignment.push(p);
                }
                Err(e) => {
                    tracker.notes.push(format!("anchor {j}, channel {i}: {e}"));
                    continue 'candidates;
                }
            }
        }
        let recovered = SetMatrix::from_columns(&columns)?;
        let residual = lp_residual(&recovered, w, emb)?;
        let report = DecodeReport {
            recovered,
            anchor_index: j,
            alignment,
            residual,
            verified: residual <= cfg.verify_tol,
            candidates_tried: j + 1,
        };
        if report.verified {
            return Ok(report);
        }
        tracker
            .notes
            .push(format!("anchor {j}: re-encoding residual {residual:.3e}"));
        tracker.offer(report);
    }
    Err(tracker.fail(tried, sets.worst()))
}

/// The complex roots `exp(X w_j) + exp(x_i) i` for one `(i, j)` pair.
fn le_pair_roots(
    emb: &Embedding,
    e: &LEExponentSet,
    i: usize,
    j: usize,
    m: usize,
    cfg: &ToleranceConfig,
) -> Result<(Vec<Complex64>, f64)> {
    let mut moments = BivariateMoments::new();
    for p in 1..=m {
        for q in 1..=p + 1 {
            let idx = e.entry_index(i, j, p, q).expect("entry in grid");
            moments.insert((p + 1 - q, q - 1), emb.values[idx]);
        }
    }
    let ps = complex_pair_power_sums(&moments, m)?;
    let roots = invert_power_sums(&ps, m, cfg)?;
    let residual = power_sum_residual(&roots, ps.values());
    Ok((roots, residual))
}

/// Orders roots by anchor value (real part); within a cluster of equal
/// anchor values by channel value.
fn anchor_order(roots: &[Complex64], radius: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| roots[a].re.total_cmp(&roots[b].re));
    let mut start = 0;
    for idx in 1..=order.len() {
        let split = idx == order.len() || {
            let (p, q) = (roots[order[idx - 1]].re, roots[order[idx]].re);
            (q - p).abs() > radius * (1.0 + p.abs().max(q.abs()))
        };
        if split {
            order[start..idx].sort_by(|&a, &b| roots[a].im.total_cmp(&roots[b].im));
            start = idx;
        }
    }
    order
}

/// Relative radius for treating two recovered anchor values as equal.
const LE_ANCHOR_RADIUS: f64 = 1e-6;

pub fn decode_le(emb: &Embedding, e: &LEExponentSet, cfg: &ToleranceConfig) -> Result<DecodeReport> {
    let m = check_embedding(emb, Arch::Le, e.n(), e.d(), e.embedding_len())?;
    let d = e.d();
    let k1 = e.bank().k1();
    let mut tracker = CandidateTracker::new();
    let mut worst = (0.0, None);

    'candidates: for j in 0..k1 {
        let mut reference: Option<Vec<f64>> = None;
        let mut columns = Vec::with_capacity(d);
        let mut alignment = Vec::with_capacity(d);
        for i in 0..d {
            let (roots, res) = match le_pair_roots(emb, e, i, j, m, cfg) {
                Ok(r) => r,
                Err(err) => {
                    tracker.notes.push(format!("anchor {j}, channel {i}: {err}"));
                    continue 'candidates;
                }
            };
            if res > worst.0 {
                worst = (res, Some(i * k1 + j));
            }
            let order = anchor_order(&roots, LE_ANCHOR_RADIUS);
            let anchors: Vec<f64> = order.iter().map(|&o| roots[o].re).collect();
            if let Some(bad) = order
                .iter()
                .map(|&o| roots[o])
                .find(|z| !(z.re > 0.0 && z.im > 0.0))
            {
                let value = if bad.re <= 0.0 { bad.re } else { bad.im };
                tracker.notes.push(format!(
                    "anchor {j}, channel {i}: {}",
                    Error::NonPositive { value }
                ));
                continue 'candidates;
            }
            match &reference {
                None => reference = Some(anchors),
                Some(r) => {
                    let agree = r.iter().zip(&anchors).all(|(p, q)| {
                        (p - q).abs() <= LE_ANCHOR_RADIUS * (1.0 + p.abs().max(q.abs()))
                    });
                    if !agree {
                        tracker
                            .notes
                            .push(format!("anchor {j}, channel {i}: anchor values disagree"));
                        continue 'candidates;
                    }
                }
            }
            columns.push(order.iter().map(|&o| roots[o].im.ln()).collect::<Vec<f64>>());
            alignment.push(PermutationVector::new(order)?);
        }
        let recovered = SetMatrix::from_columns(&columns)?;
        let residual = match le_residual(&recovered, e, emb) {
            Ok(r) => r,
            Err(err) => {
                tracker.notes.push(format!("anchor {j}: {err}"));
                continue;
            }
        };
        let report = DecodeReport {
            recovered,
            anchor_index: j,
            alignment,
            residual,
            verified: residual <= cfg.verify_tol,
            candidates_tried: j + 1,
        };
        if report.verified {
            return Ok(report);
        }
        tracker
            .notes
            .push(format!("anchor {j}: re-encoding residual {residual:.3e}"));
        tracker.offer(report);
    }
    Err(tracker.fail(k1, worst))
}

pub fn decode(emb: &Embedding, weights: &Weights, cfg: &ToleranceConfig) -> Result<DecodeReport> {
    match weights {
        Weights::Lp(w) => decode_lp(emb, w, cfg),
        Weights::Le(e) => decode_le(emb, e, cfg),
    }
}

/// Decodes using weights regenerated from the embedding's own header.
pub fn decode_embedding(emb: &Embedding, cfg: &ToleranceConfig) -> Result<DecodeReport> {
    decode(emb, &Weights::from_header(&emb.weights)?, cfg)
}

/// Inverse of [`crate::encoder::encode_complex`].
pub fn decode_complex(emb: &Embedding, cfg: &ToleranceConfig) -> Result<ComplexSetMatrix> {
    let report = decode_embedding(emb, cfg)?;
    ComplexSetMatrix::join(&report.recovered)
}

/// Encode, decode and measure `d_Π` against the input.
pub fn roundtrip_with(
    x: &SetMatrix,
    weights: &Weights,
    cfg: &ToleranceConfig,
) -> Result<(DecodeReport, f64)> {
    let emb = encode(x, weights)?;
    let report = decode(&emb, weights, cfg)?;
    let dist = set_distance(x, &report.recovered, cfg)?;
    Ok((report, dist))
}

/// [`roundtrip_with`] on the default moment-curve weights.
pub fn roundtrip(x: &SetMatrix, arch: Arch, cfg: &ToleranceConfig) -> Result<(DecodeReport, f64)> {
    let weights = Weights::build(arch, x.n_rows(), x.n_cols(), BankMode::MomentCurve)?;
    roundtrip_with(x, &weights, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_complex, encode_lp, equivariant_context};
    use crate::weights::{assemble_le_exponents, assemble_lp_weights, build_gammas};
    use itertools::Itertools;

    fn mc() -> BankMode {
        BankMode::MomentCurve
    }

    #[test]
    fn channel_multisets_examples() {
        let w = assemble_lp_weights(2, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[2.0], [1.0]]).unwrap();
        let emb = encode_lp(&x, &w).unwrap();
        let sets = decode_channel_multisets(&emb, &w, 2, &Default::default()).unwrap();
        let got = sets.get(&w, BlockRole::Buffer { i: 0 }).unwrap();
        assert!((got[0] - 1.0).abs() < 1e-12 && (got[1] - 2.0).abs() < 1e-12, "{got:?}");

        let zero = Embedding {
            values: vec![0.0; emb.len()],
            ..emb.clone()
        };
        let sets = decode_channel_multisets(&zero, &w, 2, &Default::default()).unwrap();
        for b in 0..w.k() {
            assert_eq!(sets.block(b).unwrap(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn channel_multisets_flag_corruption() {
        let w = assemble_lp_weights(2, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[2.0], [1.0]]).unwrap();
        let mut emb = encode_lp(&x, &w).unwrap();
        // p = [2, 0] is not the power-sum vector of any real pair.
        emb.values[0] = 2.0;
        emb.values[1] = 0.0;
        assert!(matches!(
            decode_channel_multisets(&emb, &w, 2, &Default::default()),
            Err(Error::BlockInversion { block: 0, .. })
        ));
    }

    #[test]
    fn pair_match_constant_channel() {
        let g = build_gammas(3).unwrap();
        let anchors = [1.0, 2.0];
        let x = [5.0, 5.0];
        let coupled: Vec<Vec<f64>> = g
            .values()
            .iter()
            .map(|&gk| anchors.iter().map(|a| 5.0 - gk * a).collect())
            .collect();
        let refs: Vec<&[f64]> = coupled.iter().map(Vec::as_slice).collect();
        let p = pair_match(&x, &anchors, &refs, &g, &Default::default()).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn pair_match_generated_from_intended_pairing() {
        let g = build_gammas(3).unwrap();
        let anchors = [1.0, 2.0];
        // intended: 10 <-> 1, 20 <-> 2; hand the values over in reverse order
        let x = [20.0, 10.0];
        let coupled: Vec<Vec<f64>> = g
            .values()
            .iter()
            .map(|&gk| vec![20.0 - gk * 2.0, 10.0 - gk * 1.0])
            .collect();
        let refs: Vec<&[f64]> = coupled.iter().map(Vec::as_slice).collect();
        let p = pair_match(&x, &anchors, &refs, &g, &Default::default()).unwrap();
        assert_eq!(p.apply_slice(&x), vec![10.0, 20.0]);
    }

    #[test]
    fn pair_match_rejects_inconsistent_couplings() {
        let g = build_gammas(3).unwrap();
        let coupled = vec![vec![100.0, 200.0]; 3];
        let refs: Vec<&[f64]> = coupled.iter().map(Vec::as_slice).collect();
        assert!(matches!(
            pair_match(&[1.0, 2.0], &[0.0, 1.0], &refs, &g, &Default::default()),
            Err(Error::NoMatching)
        ));
        assert!(pair_match(&[1.0], &[0.0, 1.0], &refs, &g, &Default::default()).is_err());
    }

    #[test]
    fn pair_match_agrees_with_exhaustive_alignment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cfg = ToleranceConfig::default();
        for m in 1..=5 {
            let g = build_gammas(m * (m - 1) + 1).unwrap();
            for _ in 0..20 {
                let mut anchors: Vec<f64> =
                    (0..m).map(|_| (rng.random_range(-4..=4) as f64) * 0.5).collect();
                anchors.sort_by(f64::total_cmp);
                // equal anchor values carry equal channel values
                let mut x: Vec<f64> = Vec::new();
                for n in 0..m {
                    if n > 0 && anchors[n] == anchors[n - 1] {
                        x.push(x[n - 1]);
                    } else {
                        x.push(rng.random_range(-2.0..2.0));
                    }
                }
                let coupled: Vec<Vec<f64>> = g
                    .values()
                    .iter()
                    .map(|&gk| x.iter().zip(&anchors).map(|(u, a)| u - gk * a).collect())
                    .collect();
                let refs: Vec<&[f64]> = coupled.iter().map(Vec::as_slice).collect();
                let mut shuffled = x.clone();
                shuffled.reverse();
                let p = pair_match(&shuffled, &anchors, &refs, &g, &cfg).unwrap();
                let got = p.apply_slice(&shuffled);

                // Oracle: every alignment that reproduces all coupled multisets.
                let valid: Vec<Vec<f64>> = (0..m)
                    .permutations(m)
                    .map(|perm| perm.iter().map(|&i| shuffled[i]).collect::<Vec<f64>>())
                    .filter(|cand| {
                        g.values().iter().zip(&coupled).all(|(&gk, c)| {
                            let mut pred: Vec<f64> =
                                cand.iter().zip(&anchors).map(|(u, a)| u - gk * a).collect();
                            let mut want = c.clone();
                            pred.sort_by(f64::total_cmp);
                            want.sort_by(f64::total_cmp);
                            pred.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-9)
                        })
                    })
                    .collect();
                assert!(valid.contains(&got), "m={m} got {got:?} valid {valid:?}");
                assert!(valid.iter().all(|v| v == &x), "alignment should be unique up to ties");
            }
        }
    }

    #[test]
    fn lp_single_row_exact() {
        let x = SetMatrix::from_rows(&[[0.25, -1.5, 1.75]]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Lp, &Default::default()).unwrap();
        assert_eq!(report.recovered, x);
        assert_eq!(dist, 0.0);
        assert!(report.verified);
    }

    #[test]
    fn lp_identical_rows() {
        let x = SetMatrix::from_rows(&[[0.6, -1.2]; 4]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Lp, &Default::default()).unwrap();
        assert!(report.verified);
        assert!(dist <= 1e-9, "{dist}");
        assert_eq!(report.anchor_index, 0);
    }

    #[test]
    fn lp_recovers_grid_matrix_with_ties() {
        let x = SetMatrix::from_rows(&[[1., 0.], [1., 0.], [0., 2.], [2., 2.]]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Lp, &Default::default()).unwrap();
        assert!(report.verified);
        assert!(dist <= 1e-6, "{dist}");
    }

    #[test]
    fn lp_example_matrices_are_separated() {
        let tol = ToleranceConfig::default();
        let x = SetMatrix::from_rows(&[[1., 1., 1.], [1., 2., 2.], [2., 1., 2.], [2., 2., 1.]]).unwrap();
        let y = SetMatrix::from_rows(&[[1., 1., 2.], [1., 2., 1.], [2., 1., 1.], [2., 2., 2.]]).unwrap();
        for m in [&x, &y] {
            let (report, dist) = roundtrip(m, Arch::Lp, &tol).unwrap();
            assert!(report.verified && dist <= 1e-6, "{dist}");
        }
    }

    #[test]
    fn le_zero_matrix() {
        let x = SetMatrix::from_rows(&[[0.0, 0.0]; 3]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Le, &Default::default()).unwrap();
        assert!(report.verified);
        assert!(dist <= 1e-9, "{dist}");
    }

    #[test]
    fn le_single_row() {
        let x = SetMatrix::from_rows(&[[0.3, -0.7]]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Le, &Default::default()).unwrap();
        assert!(report.verified);
        assert!(dist <= 1e-12, "{dist}");
    }

    #[test]
    fn le_distinct_rows() {
        let x = SetMatrix::from_rows(&[[0.3, -0.7], [1.1, 0.2], [-1.4, 0.9]]).unwrap();
        let (report, dist) = roundtrip(&x, Arch::Le, &Default::default()).unwrap();
        assert!(report.verified);
        assert!(dist <= 1e-6, "{dist}");
    }

    #[test]
    fn permuted_input_gives_same_report_modulo_alignment() {
        let x = SetMatrix::from_rows(&[[0.3, -0.7], [1.1, 0.2], [-1.4, 0.9]]).unwrap();
        let px = PermutationVector::new(vec![2, 0, 1]).unwrap().apply(&x).unwrap();
        for arch in [Arch::Lp, Arch::Le] {
            let (a, _) = roundtrip(&x, arch, &Default::default()).unwrap();
            let (b, _) = roundtrip(&px, arch, &Default::default()).unwrap();
            assert_eq!(a.recovered, b.recovered);
            assert_eq!(a.anchor_index, b.anchor_index);
            assert_eq!(a.residual, b.residual);
        }
    }

    #[test]
    fn complex_roundtrip() {
        let c = Complex64::new;
        let xc = ComplexSetMatrix::from_rows(&[[c(0.5, -0.25)], [c(-1.0, 0.75)], [c(0.1, 0.2)]]).unwrap();
        for arch in [Arch::Lp, Arch::Le] {
            let emb = encode_complex(&xc, arch, mc()).unwrap();
            let back = decode_complex(&emb, &Default::default()).unwrap();
            let d = set_distance(&xc.split().unwrap(), &back.split().unwrap(), &Default::default())
                .unwrap();
            assert!(d <= 1e-6, "{arch}: {d}");
        }
    }

    #[test]
    fn leave_one_out_decodes_remaining_rows() {
        let x = SetMatrix::from_rows(&[[0.3, -0.7], [1.1, 0.2], [-1.4, 0.9]]).unwrap();
        for arch in [Arch::Lp, Arch::Le] {
            let weights = Weights::build(arch, 3, 2, mc()).unwrap();
            for (j, (row, emb)) in equivariant_context(&x, &weights).unwrap().into_iter().enumerate() {
                assert_eq!(row, x.row(j));
                let report = decode(&emb, &weights, &Default::default()).unwrap();
                let rest = x.without_row(j).unwrap();
                let d = set_distance(&rest, &report.recovered, &Default::default()).unwrap();
                assert!(d <= 1e-6, "{arch} row {j}: {d}");
            }
        }
    }

    #[test]
    fn wrong_architecture_is_rejected() {
        let x = SetMatrix::from_rows(&[[0.3], [0.1]]).unwrap();
        let lp = Weights::build(Arch::Lp, 2, 1, mc()).unwrap();
        let le = assemble_le_exponents(2, 1, mc()).unwrap();
        let emb = encode(&x, &lp).unwrap();
        assert!(decode_le(&emb, &le, &Default::default()).is_err());
    }

    #[test]
    fn out_of_range_lp_input_fails_with_diagnosis() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|r| vec![50.0 * if r % 2 == 0 { 1.0 } else { -1.0 }, 50.0 - r as f64 * 1e-3])
            .collect();
        let x = SetMatrix::from_rows(&rows).unwrap();
        let err = roundtrip(&x, Arch::Lp, &Default::default()).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }
}
