//! Sets represented as matrices modulo row permutation.
//!
//! A [`SetMatrix`] holds `N` rows of `D` features. Two matrices describe the
//! same multiset when some row permutation maps one onto the other; that
//! relation, the induced distance `d_Π` and the anchor predicate all live here.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `N x D` real matrix standing for a multiset of `N` feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetMatrixJson", into = "SetMatrixJson")]
pub struct SetMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SetMatrixJson {
    n: usize,
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<SetMatrixJson> for SetMatrix {
    type Error = Error;

    fn try_from(json: SetMatrixJson) -> Result<Self> {
        if json.rows.len() != json.n {
            return Err(Error::LengthMismatch {
                expected: json.n,
                found: json.rows.len(),
            });
        }
        let m = SetMatrix::from_rows(&json.rows)?;
        if m.d != json.d {
            return Err(Error::ShapeMismatch {
                expected: (json.n, json.d),
                found: m.shape(),
            });
        }
        Ok(m)
    }
}

impl From<SetMatrix> for SetMatrixJson {
    fn from(m: SetMatrix) -> Self {
        SetMatrixJson {
            n: m.n,
            d: m.d,
            rows: m.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl SetMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "set matrix needs N >= 1 and D >= 1, got {n} x {d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::LengthMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry {bad}")));
        }
        Ok(SetMatrix { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
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
        Self::new(n, d, data)
    }

    /// Builds a matrix from its columns.
    pub fn from_columns<C: AsRef<[f64]>>(cols: &[C]) -> Result<Self> {
        let d = cols.len();
        let n = cols.first().map_or(0, |c| c.as_ref().len());
        let mut data = vec![0.0; n * d];
        for (i, col) in cols.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            for (r, v) in col.iter().enumerate() {
                data[r * d + i] = *v;
            }
        }
        Self::new(n, d, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.d + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.d..(row + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows().map(|r| r[col]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `X w` for a weight vector of length `D`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.d);
        self.rows().map(|r| dot(r, w)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Keeps every row except `skip`.
    pub fn without_row(&self, skip: usize) -> Result<SetMatrix> {
        let rows: Vec<&[f64]> = self
            .rows()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, r)| r)
            .collect();
        SetMatrix::from_rows(&rows)
    }

    /// Selects columns `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<SetMatrix> {
        let picked: Vec<Vec<f64>> = cols.iter().map(|&c| self.column(c)).collect();
        SetMatrix::from_columns(&picked)
    }

    fn check_same_shape(&self, other: &SetMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lexicographic total order on rows (`f64::total_cmp` per entry).
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// A bijection on row indices. Applying it to `X` yields the matrix whose
/// row `r` is `X[mapping[r]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PermutationVector(Vec<usize>);

impl TryFrom<Vec<usize>> for PermutationVector {
    type Error = Error;

    fn try_from(mapping: Vec<usize>) -> Result<Self> {
        PermutationVector::new(mapping)
    }
}

impl From<PermutationVector> for Vec<usize> {
    fn from(p: PermutationVector) -> Self {
        p.0
    }
}

impl PermutationVector {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidInput(format!(
                    "{mapping:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(PermutationVector(mapping))
    }

    pub fn identity(n: usize) -> Self {
        PermutationVector((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (r, &m) in self.0.iter().enumerate() {
            inv[m] = r;
        }
        PermutationVector(inv)
    }

    pub fn apply(&self, x: &SetMatrix) -> Result<SetMatrix> {
        if self.len() != x.n_rows() {
            return Err(Error::LengthMismatch {
                expected: x.n_rows(),
                found: self.len(),
            });
        }
        let rows: Vec<&[f64]> = self.0.iter().map(|&m| x.row(m)).collect();
        SetMatrix::from_rows(&rows)
    }

    pub fn apply_slice<T: Clone>(&self, xs: &[T]) -> Vec<T> {
        self.0.iter().map(|&m| xs[m].clone()).collect()
    }
}

/// Float comparison knobs shared by every numeric routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Iteration cap for the simultaneous root finder.
    pub root_iters: usize,
    /// Largest `N` for which permutation search is attempted.
    pub perm_search_cap: usize,
    /// Largest polynomial degree the power-sum inverter accepts.
    pub max_degree: usize,
    /// Acceptance threshold on the normalized re-encoding residual.
    pub verify_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            root_iters: 200,
            perm_search_cap: 8,
            max_degree: 12,
            verify_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    /// Tolerance that only accepts bitwise-equal entries.
    pub fn exact() -> Self {
        ToleranceConfig {
            abs_tol: 0.0,
            rel_tol: 0.0,
            ..Self::default()
        }
    }

    pub fn with_abs(abs_tol: f64) -> Self {
        ToleranceConfig {
            abs_tol,
            rel_tol: 0.0,
            ..Self::default()
        }
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }

    pub fn rows_close(&self, a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| self.close(*x, *y))
    }
}

/// Rows sorted lexicographically. Invariant under any row permutation.
pub fn canonicalize(x: &SetMatrix) -> SetMatrix {
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| lex_cmp(x.row(a), x.row(b)).then(a.cmp(&b)));
    PermutationVector(order)
        .apply(x)
        .expect("sort order is a permutation of the rows")
}

/// Row indices in canonical order together with a group id per index; rows
/// in the same group are exactly equal.
fn sorted_groups(x: &SetMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| lex_cmp(x.row(a), x.row(b)).then(a.cmp(&b)));
    let mut group = vec![0; x.n_rows()];
    let mut gid = 0;
    for w in 1..order.len() {
        if lex_cmp(x.row(order[w - 1]), x.row(order[w])).is_ne() {
            gid += 1;
        }
        group[order[w]] = gid;
    }
    (order, group)
}

fn check_cap(n: usize, tol: &ToleranceConfig) -> Result<()> {
    if n > tol.perm_search_cap {
        return Err(Error::PermSearchCap {
            n,
            cap: tol.perm_search_cap,
        });
    }
    Ok(())
}

/// Finds `P` with `PX ≈ Y` entrywise, if any.
///
/// Rows of `Y` are matched in order against candidate rows of `X` by
/// backtracking; exactly equal rows of `X` are interchangeable, so only one
/// representative per group is tried at each level.
pub fn equiv_check(
    x: &SetMatrix,
    y: &SetMatrix,
    tol: &ToleranceConfig,
) -> Result<Option<PermutationVector>> {
    x.check_same_shape(y)?;
    check_cap(x.n_rows(), tol)?;
    let (order, group) = sorted_groups(x);
    let n = x.n_rows();
    let mut used = vec![false; n];
    let mut mapping = Vec::with_capacity(n);

    #[allow(clippy::too_many_arguments)]
    fn search(
        r: usize,
        x: &SetMatrix,
        y: &SetMatrix,
        tol: &ToleranceConfig,
        order: &[usize],
        group: &[usize],
        used: &mut [bool],
        mapping: &mut Vec<usize>,
    ) -> bool {
        if r == y.n_rows() {
            return true;
        }
        let mut tried_group = None;
        for &i in order {
            if used[i] || tried_group == Some(group[i]) {
                continue;
            }
            if !tol.rows_close(x.row(i), y.row(r)) {
                continue;
            }
            tried_group = Some(group[i]);
            used[i] = true;
            mapping.push(i);
            if search(r + 1, x, y, tol, order, group, used, mapping) {
                return true;
            }
            mapping.pop();
            used[i] = false;
        }
        false
    }

    if search(0, x, y, tol, &order, &group, &mut used, &mut mapping) {
        Ok(Some(PermutationVector(mapping)))
    } else {
        Ok(None)
    }
}

/// `d_Π(X, Y) = min_P max |PX - Y|`, computed exactly by branch and bound.
pub fn set_distance(x: &SetMatrix, y: &SetMatrix, tol: &ToleranceConfig) -> Result<f64> {
    x.check_same_shape(y)?;
    check_cap(x.n_rows(), tol)?;
    let (order, group) = sorted_groups(x);
    let n = x.n_rows();
    let mut used = vec![false; n];
    let mut best = f64::INFINITY;

    fn row_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        r: usize,
        current: f64,
        x: &SetMatrix,
        y: &SetMatrix,
        order: &[usize],
        group: &[usize],
        used: &mut [bool],
        best: &mut f64,
    ) {
        if current >= *best {
            return;
        }
        if r == y.n_rows() {
            *best = current;
            return;
        }
        let mut tried = Vec::new();
        for &i in order {
            if used[i] || tried.contains(&group[i]) {
                continue;
            }
            tried.push(group[i]);
            used[i] = true;
            let gap = current.max(row_gap(x.row(i), y.row(r)));
            search(r + 1, gap, x, y, order, group, used, best);
            used[i] = false;
        }
    }

    search(0, 0.0, x, y, &order, &group, &mut used, &mut best);
    Ok(best)
}

/// True iff `a` separates every pair of rows of `X` that differ.
pub fn is_anchor(a: &[f64], x: &SetMatrix, tol: &ToleranceConfig) -> Result<bool> {
    if a.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            expected: x.n_rows(),
            found: a.len(),
        });
    }
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if tol.close(a[i], a[j]) && !tol.rows_close(x.row(i), x.row(j)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    fn m(rows: &[&[f64]]) -> SetMatrix {
        SetMatrix::from_rows(rows).unwrap()
    }

    fn example_pair() -> (SetMatrix, SetMatrix) {
        (
            m(&[&[1., 1., 1.], &[1., 2., 2.], &[2., 1., 2.], &[2., 2., 1.]]),
            m(&[&[1., 1., 2.], &[1., 2., 1.], &[2., 1., 1.], &[2., 2., 2.]]),
        )
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(SetMatrix::new(0, 1, vec![]).is_err());
        assert!(SetMatrix::new(1, 2, vec![1.0]).is_err());
        assert!(SetMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(SetMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PermutationVector::new(vec![0, 0]).is_err());
        assert!(PermutationVector::new(vec![0, 2]).is_err());
    }

    #[test]
    fn json_form() {
        let x = m(&[&[1.0, 2.5], &[3.0, -4.0]]);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"n":2,"d":2,"rows":[[1.0,2.5],[3.0,-4.0]]}"#);
        let back: SetMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<SetMatrix>(r#"{"n":3,"d":2,"rows":[[1,2]]}"#).is_err());
        assert!(serde_json::from_str::<SetMatrix>(r#"{"n":1,"d":3,"rows":[[1,2]]}"#).is_err());
    }

    #[test]
    fn equiv_two_element_swap() {
        let p = equiv_check(&m(&[&[0.], &[1.]]), &m(&[&[1.], &[0.]]), &Default::default())
            .unwrap()
            .unwrap();
        assert_eq!(p.as_slice(), &[1, 0]);
    }

    #[test]
    fn equiv_identity() {
        let x = m(&[&[1., 2.], &[3., 4.]]);
        let p = equiv_check(&x, &x, &Default::default()).unwrap().unwrap();
        assert_eq!(p, PermutationVector::identity(2));
    }

    #[test]
    fn equiv_rejects_example_pair() {
        let (x, y) = example_pair();
        assert_eq!(equiv_check(&x, &y, &Default::default()).unwrap(), None);
    }

    #[test]
    fn equiv_errors() {
        let tol = ToleranceConfig::default();
        assert!(matches!(
            equiv_check(&m(&[&[0.]]), &m(&[&[0., 1.]]), &tol),
            Err(Error::ShapeMismatch { .. })
        ));
        let big = SetMatrix::new(9, 1, (0..9).map(f64::from).collect()).unwrap();
        assert!(matches!(
            equiv_check(&big, &big, &tol),
            Err(Error::PermSearchCap { n: 9, cap: 8 })
        ));
    }

    #[test]
    fn equiv_with_tolerance_and_ties() {
        let x = m(&[&[1.0, 0.0], &[1.0, 0.0], &[2.0, 5.0]]);
        let y = m(&[&[2.0, 5.0 + 1e-12], &[1.0, 0.0], &[1.0, 0.0]]);
        let p = equiv_check(&x, &y, &Default::default()).unwrap().unwrap();
        assert_eq!(p.as_slice()[0], 2);
        assert!(equiv_check(&x, &y, &ToleranceConfig::exact()).unwrap().is_none());
    }

    #[test]
    fn distance_examples() {
        let tol = ToleranceConfig::default();
        assert_eq!(set_distance(&m(&[&[0.], &[1.]]), &m(&[&[1.], &[0.]]), &tol).unwrap(), 0.0);
        assert_eq!(set_distance(&m(&[&[0.], &[1.]]), &m(&[&[0.], &[2.]]), &tol).unwrap(), 1.0);
    }

    #[test]
    fn distance_example_pair_matches_exhaustive_minimum() {
        let (x, y) = example_pair();
        let (xr, yr) = (&x, &y);
        // Independent oracle: all 24 permutations.
        let oracle = (0..4)
            .permutations(4)
            .map(|p| {
                p.iter()
                    .enumerate()
                    .flat_map(|(r, &src)| {
                        (0..3).map(move |c| (xr.get(src, c) - yr.get(r, c)).abs())
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(oracle, 1.0);
        let d = set_distance(&x, &y, &Default::default()).unwrap();
        assert_eq!(d, oracle);
        assert!(d > 0.0);
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&m(&[&[2.], &[1.]])), m(&[&[1.], &[2.]]));
        let sorted = m(&[&[0., 1.], &[0., 2.], &[1., 1.]]);
        assert_eq!(canonicalize(&sorted), sorted);
        assert_eq!(canonicalize(&m(&[&[1., 1.], &[0., 2.], &[0., 1.]])), sorted);
    }

    #[test]
    fn anchor_examples() {
        let tol = ToleranceConfig::default();
        let x = m(&[&[1., 0.], &[0., 1.], &[1., 1.]]);
        assert!(is_anchor(&[1., 2., 3.], &x, &tol).unwrap());
        assert!(is_anchor(&[1., 1.], &m(&[&[0.], &[0.]]), &tol).unwrap());
        assert!(!is_anchor(&[1., 1.], &m(&[&[0.], &[5.]]), &tol).unwrap());
        assert!(matches!(
            is_anchor(&[1.], &x, &tol),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn tolerance_needs_a_nonzero_component_for_inexact_match() {
        let t = ToleranceConfig::exact();
        assert!(t.close(1.0, 1.0));
        assert!(!t.close(1.0, 1.0 + f64::EPSILON));
    }
}
