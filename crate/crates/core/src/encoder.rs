//! Sum-pooled embeddings `Σ_n φ(x^(n))` for both architectures.
//!
//! Rows are sorted canonically before any summation, so permuting the input
//! reproduces the embedding bit for bit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiset::{canonicalize, dot, SetMatrix};
use crate::powersum::{sum_of_power_real, CompensatedSum};
use crate::weights::{Arch, BankMode, LEExponentSet, LPWeightSet, WeightHeader, Weights};

/// Entries beyond this magnitude are outside the documented LP range.
pub const LP_SAFE_RANGE: f64 = 3.0;
/// Entries beyond this magnitude are outside the documented LE range.
pub const LE_SAFE_RANGE: f64 = 2.0;
/// Largest `|v·x|` the LE encoder will exponentiate.
pub const LE_EXPONENT_GUARD: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub arch: Arch,
    pub n: usize,
    pub d: usize,
    /// Number of pooled rows when it differs from `n` (leave-one-out sums).
    #[serde(rename = "m", default, skip_serializing_if = "Option::is_none")]
    pub set_size: Option<usize>,
    pub values: Vec<f64>,
    pub weights: WeightHeader,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows pooled into this embedding.
    pub fn set_size(&self) -> usize {
        self.set_size.unwrap_or(self.n)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_columns(x: &SetMatrix, d: usize) -> Result<()> {
    if x.n_cols() != d {
        return Err(Error::ShapeMismatch {
            expected: (x.n_rows(), d),
            found: x.shape(),
        });
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::Overflow(format!(
            "{what} entry {idx} is not finite; inputs are outside the documented range"
        ))),
        None => Ok(()),
    }
}

/// LP pooling over any number of rows; blocks have length `w.n()`.
pub(crate) fn pool_lp(x: &SetMatrix, w: &LPWeightSet) -> Result<Vec<f64>> {
    check_columns(x, w.d())?;
    let x = canonicalize(x);
    let mut out = Vec::with_capacity(w.embedding_len());
    for row in w.weights() {
        out.extend(sum_of_power_real(&x.project(row), w.n()));
    }
    check_finite(&out, "LP embedding")?;
    Ok(out)
}

/// `Σ_n |w·x_n|^l` per LP coordinate; the natural scale of each entry.
pub(crate) fn lp_magnitudes(x: &SetMatrix, w: &LPWeightSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.embedding_len());
    for row in w.weights() {
        let col: Vec<f64> = x.project(row).iter().map(|v| v.abs()).collect();
        out.extend(sum_of_power_real(&col, w.n()));
    }
    out
}

pub(crate) fn pool_le(x: &SetMatrix, e: &LEExponentSet) -> Result<Vec<f64>> {
    check_columns(x, e.d())?;
    let x = canonicalize(x);
    let mut out = Vec::with_capacity(e.embedding_len());
    for entry in e.entries() {
        let mut acc = CompensatedSum::default();
        for row in x.rows() {
            let t = dot(&entry.v, row);
            if t.abs() > LE_EXPONENT_GUARD {
                return Err(Error::Overflow(format!(
                    "|v·x| = {:.3} exceeds the exponent guard {LE_EXPONENT_GUARD}",
                    t.abs()
                )));
            }
            acc.add(t.exp());
        }
        out.push(acc.value());
    }
    check_finite(&out, "LE embedding")?;
    Ok(out)
}

fn check_rows(x: &SetMatrix, n: usize, d: usize) -> Result<()> {
    if x.shape() != (n, d) {
        return Err(Error::ShapeMismatch {
            expected: (n, d),
            found: x.shape(),
        });
    }
    Ok(())
}

pub fn encode_lp(x: &SetMatrix, w: &LPWeightSet) -> Result<Embedding> {
    check_rows(x, w.n(), w.d())?;
    if x.max_abs() > LP_SAFE_RANGE {
        log::warn!(
            "max |x| = {} is outside the documented LP range of {LP_SAFE_RANGE}",
            x.max_abs()
        );
    }
    Ok(Embedding {
        arch: Arch::Lp,
        n: w.n(),
        d: w.d(),
        set_size: None,
        values: pool_lp(x, w)?,
        weights: w.header(),
    })
}

pub fn encode_le(x: &SetMatrix, e: &LEExponentSet) -> Result<Embedding> {
    check_rows(x, e.n(), e.d())?;
    if x.max_abs() > LE_SAFE_RANGE {
        log::warn!(
            "max |x| = {} is outside the documented LE range of {LE_SAFE_RANGE}",
            x.max_abs()
        );
    }
    Ok(Embedding {
        arch: Arch::Le,
        n: e.n(),
        d: e.d(),
        set_size: None,
        values: pool_le(x, e)?,
        weights: e.header(),
    })
}

pub fn encode(x: &SetMatrix, weights: &Weights) -> Result<Embedding> {
    match weights {
        Weights::Lp(w) => encode_lp(x, w),
        Weights::Le(e) => encode_le(x, e),
    }
}

/// Pools a set of `m <= n` rows with weights built for `n`.
pub(crate) fn encode_subset(x: &SetMatrix, weights: &Weights) -> Result<Embedding> {
    let values = match weights {
        Weights::Lp(w) => pool_lp(x, w)?,
        Weights::Le(e) => pool_le(x, e)?,
    };
    let n = weights.n();
    Ok(Embedding {
        arch: weights.arch(),
        n,
        d: weights.d(),
        set_size: (x.n_rows() != n).then_some(x.n_rows()),
        values,
        weights: weights.header(),
    })
}

/// A multiset of complex feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSetMatrix {
    n: usize,
    d: usize,
    data: Vec<Complex64>,
}

impl ComplexSetMatrix {
    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("complex set matrix needs N, D >= 1".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(ComplexSetMatrix { n, d, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.d..(r + 1) * self.d]
    }

    /// Real `N x 2D` matrix `[Re | Im]`.
    pub fn split(&self) -> Result<SetMatrix> {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|r| {
                let row = self.row(r);
                row.iter().map(|z| z.re).chain(row.iter().map(|z| z.im)).collect()
            })
            .collect();
        SetMatrix::from_rows(&rows)
    }

    /// Inverse of [`ComplexSetMatrix::split`].
    pub fn join(x: &SetMatrix) -> Result<Self> {
        if !x.n_cols().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "cannot join {} real columns into complex pairs",
                x.n_cols()
            )));
        }
        let d = x.n_cols() / 2;
        let rows: Vec<Vec<Complex64>> = x
            .rows()
            .map(|r| (0..d).map(|c| Complex64::new(r[c], r[d + c])).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

/// Encodes complex rows by treating real and imaginary parts as separate
/// channels of an `(N, 2D)` real problem.
pub fn encode_complex(xc: &ComplexSetMatrix, arch: Arch, mode: BankMode) -> Result<Embedding> {
    let (n, d) = xc.shape();
    let weights = Weights::build(arch, n, 2 * d, mode)?;
    encode(&xc.split()?, &weights)
}

/// For each row `x^(j)`, the pair `(x^(j), z - φ(x^(j)))` where `z` is the
/// pooled embedding of all rows. The second component pools the other
/// `N - 1` rows.
pub fn equivariant_context(x: &SetMatrix, weights: &Weights) -> Result<Vec<(Vec<f64>, Embedding)>> {
    if x.n_rows() < 2 {
        return Err(Error::InvalidInput(
            "equivariant context needs at least two rows".into(),
        ));
    }
    let z = encode(x, weights)?;
    x.rows()
        .map(|row| {
            let single = SetMatrix::from_rows(&[row])?;
            let phi = encode_subset(&single, weights)?;
            let values = z.values.iter().zip(&phi.values).map(|(a, b)| a - b).collect();
            Ok((
                row.to_vec(),
                Embedding {
                    set_size: Some(x.n_rows() - 1),
                    values,
                    ..z.clone()
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiset::PermutationVector;
    use crate::weights::{assemble_le_exponents, assemble_lp_weights, dims, BlockRole};

    fn mc() -> BankMode {
        BankMode::MomentCurve
    }

    #[test]
    fn lp_single_row_is_phi_of_row() {
        let w = assemble_lp_weights(1, 2, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.7, -1.1]]).unwrap();
        let e = encode_lp(&x, &w).unwrap();
        let direct: Vec<f64> = w.weights().iter().map(|r| dot(r, x.row(0))).collect();
        assert_eq!(e.values, direct);
    }

    #[test]
    fn lp_buffer_block_matches_power_sums() {
        let w = assemble_lp_weights(2, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let e = encode_lp(&x, &w).unwrap();
        assert_eq!(&e.values[..2], &[3.0, 5.0]);
        assert_eq!(e.len(), dims(2, 1, Arch::Lp).unwrap().l);
    }

    #[test]
    fn lp_invariant_under_permutation() {
        let w = assemble_lp_weights(3, 2, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.1, 1.9], [-1.3, 0.4], [0.8, -0.2]]).unwrap();
        let px = PermutationVector::new(vec![2, 0, 1]).unwrap().apply(&x).unwrap();
        assert_eq!(encode_lp(&x, &w).unwrap(), encode_lp(&px, &w).unwrap());
    }

    #[test]
    fn lp_shape_mismatch() {
        let w = assemble_lp_weights(3, 2, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.1, 1.9]]).unwrap();
        assert!(matches!(encode_lp(&x, &w), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn lp_overflow_is_reported() {
        let w = assemble_lp_weights(2, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[1e200], [1.0]]).unwrap();
        assert!(matches!(encode_lp(&x, &w), Err(Error::Overflow(_))));
    }

    #[test]
    fn le_zero_input_is_all_ones() {
        let e = assemble_le_exponents(1, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.0]]).unwrap();
        let emb = encode_le(&x, &e).unwrap();
        assert!(emb.values.iter().all(|&v| v == 1.0));
        assert_eq!(emb.len(), 2);
    }

    #[test]
    fn le_single_row_monomial() {
        let e = assemble_le_exponents(1, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.37]]).unwrap();
        let emb = encode_le(&x, &e).unwrap();
        // N = 1: the grid is q in {1, 2} with p = 1, so the largest channel
        // degree is 1; check N = 2 for the squared channel entry below.
        let idx = e.entry_index(0, 0, 1, 2).unwrap();
        assert!((emb.values[idx] - 0.37f64.exp()).abs() < 1e-15);

        let e2 = assemble_le_exponents(2, 1, mc()).unwrap();
        let x2 = SetMatrix::from_rows(&[[0.37], [0.37]]).unwrap();
        let emb2 = encode_le(&x2, &e2).unwrap();
        let idx = e2.entry_index(0, 0, 2, 3).unwrap();
        assert!((emb2.values[idx] - 2.0 * 0.37f64.exp().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn le_invariant_under_permutation() {
        let e = assemble_le_exponents(3, 2, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[0.1, 1.2], [-1.3, 0.4], [0.8, -0.2]]).unwrap();
        let px = PermutationVector::new(vec![1, 2, 0]).unwrap().apply(&x).unwrap();
        assert_eq!(encode_le(&x, &e).unwrap(), encode_le(&px, &e).unwrap());
    }

    #[test]
    fn le_guard() {
        let e = assemble_le_exponents(2, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[40.0], [0.0]]).unwrap();
        assert!(matches!(encode_le(&x, &e), Err(Error::Overflow(_))));
    }

    #[test]
    fn complex_examples() {
        let c = Complex64::new;
        let real = ComplexSetMatrix::from_rows(&[[c(1.0, 0.0)], [c(-0.5, 0.0)]]).unwrap();
        let emb = encode_complex(&real, Arch::Lp, mc()).unwrap();
        assert_eq!(emb.len(), 32);
        assert_eq!(emb.len(), dims(2, 2, Arch::Lp).unwrap().l);
        let w = assemble_lp_weights(2, 2, mc()).unwrap();
        let im_block = w.block_index(BlockRole::Buffer { i: 1 }).unwrap();
        assert_eq!(&emb.values[2 * im_block..2 * im_block + 2], &[0.0, 0.0]);

        let a = ComplexSetMatrix::from_rows(&[[c(1.0, 0.5)], [c(-0.5, 0.2)]]).unwrap();
        let b = ComplexSetMatrix::from_rows(&[[c(-0.5, 0.2)], [c(1.0, 0.5)]]).unwrap();
        for arch in [Arch::Lp, Arch::Le] {
            assert_eq!(
                encode_complex(&a, arch, mc()).unwrap(),
                encode_complex(&b, arch, mc()).unwrap()
            );
        }
        assert_eq!(ComplexSetMatrix::join(&a.split().unwrap()).unwrap(), a);
    }

    #[test]
    fn equivariant_context_examples() {
        let x = SetMatrix::from_rows(&[[0.5, -1.0], [1.5, 0.25]]).unwrap();
        for arch in [Arch::Lp, Arch::Le] {
            let weights = Weights::build(arch, 2, 2, mc()).unwrap();
            let ctx = equivariant_context(&x, &weights).unwrap();
            let rest = SetMatrix::from_rows(&[x.row(1)]).unwrap();
            let direct = encode_subset(&rest, &weights).unwrap();
            assert_eq!(ctx[0].0, x.row(0));
            assert_eq!(ctx[0].1.set_size(), 1);
            let scale = 1.0 + direct.max_abs();
            assert!(ctx[0].1.sup_distance(&direct) <= 1e-13 * scale);

            // Σ_j (z - φ(x_j)) = (N - 1) z
            let z = encode(&x, &weights).unwrap();
            for (idx, zv) in z.values.iter().enumerate() {
                let s: f64 = ctx.iter().map(|(_, e)| e.values[idx]).sum();
                assert!((s - zv).abs() <= 1e-12 * (1.0 + zv.abs()));
            }

            let px = PermutationVector::new(vec![1, 0]).unwrap().apply(&x).unwrap();
            let pctx = equivariant_context(&px, &weights).unwrap();
            assert_eq!(pctx[0], ctx[1]);
            assert_eq!(pctx[1], ctx[0]);
        }
        let single = SetMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let weights = Weights::build(Arch::Lp, 1, 2, mc()).unwrap();
        assert!(equivariant_context(&single, &weights).is_err());
    }

    #[test]
    fn json_shape() {
        let w = assemble_lp_weights(1, 1, mc()).unwrap();
        let x = SetMatrix::from_rows(&[[2.0]]).unwrap();
        let e = encode_lp(&x, &w).unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"arch":"lp","n":1,"d":1,"values":[2.0,2.0,-2.0],"weights":{"arch":"lp","n":1,"d":1,"bank_mode":"moment-curve","seed":null}}"#
        );
    }
}
