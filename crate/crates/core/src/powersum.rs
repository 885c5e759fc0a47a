//! Power mapping, sum-of-power pooling and its inverse.
//!
//! The inverse runs Newton–Girard to get the elementary symmetric
//! polynomials, then recovers the roots of the resulting monic polynomial with
//! Durand–Kerner. Roots that land in a tight cluster are merged to a single
//! value with multiplicity, since repeated set elements show up as clusters
//! whose spread grows like `eps^(1/m)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::multiset::ToleranceConfig;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct CompensatedComplex {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl CompensatedComplex {
    fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    Complex,
}

/// Power sums `p_1 .. p_K` of a scalar multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    values: Vec<Complex64>,
    domain: Domain,
}

impl PowerSums {
    /// Real power sums; the imaginary parts are exactly zero.
    pub fn real(values: &[f64]) -> Self {
        PowerSums {
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            domain: Domain::Real,
        }
    }

    pub fn complex(values: Vec<Complex64>) -> Self {
        PowerSums {
            values,
            domain: Domain::Complex,
        }
    }

    pub fn degree(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }
}

/// `z^M - e_1 z^(M-1) + e_2 z^(M-2) - ... + (-1)^M e_M`, stored as `e_1..e_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonicPolynomial {
    elementary: Vec<Complex64>,
}

impl MonicPolynomial {
    pub fn from_elementary(elementary: Vec<Complex64>) -> Self {
        MonicPolynomial { elementary }
    }

    pub fn from_real_elementary(elementary: &[f64]) -> Self {
        Self::from_elementary(elementary.iter().map(|&e| Complex64::new(e, 0.0)).collect())
    }

    pub fn degree(&self) -> usize {
        self.elementary.len()
    }

    pub fn elementary(&self) -> &[Complex64] {
        &self.elementary
    }

    /// Coefficients highest degree first, leading 1 included.
    pub fn coefficients(&self) -> Vec<Complex64> {
        std::iter::once(Complex64::new(1.0, 0.0))
            .chain(self.elementary.iter().enumerate().map(|(n, &e)| {
                if n % 2 == 0 {
                    -e
                } else {
                    e
                }
            }))
            .collect()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coefficients(), z)
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// `[z, z^2, ..., z^K]`.
pub fn power_map(z: Complex64, k: usize) -> Result<Vec<Complex64>> {
    if k == 0 {
        return Err(Error::InvalidInput("power map degree must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(k);
    let mut acc = z;
    out.push(acc);
    for _ in 1..k {
        acc *= z;
        out.push(acc);
    }
    Ok(out)
}

/// `p_l = Σ xs_i^l` for `l = 1..K`, with compensated summation.
pub fn sum_of_power(xs: &[Complex64], k: usize) -> Result<PowerSums> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("sum of power over an empty multiset".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("power map degree must be >= 1".into()));
    }
    let mut acc = vec![CompensatedComplex::default(); k];
    for &x in xs {
        let mut pow = x;
        for slot in acc.iter_mut() {
            slot.add(pow);
            pow *= x;
        }
    }
    let values = acc.iter().map(CompensatedComplex::value).collect();
    let domain = if xs.iter().all(|x| x.im == 0.0) {
        Domain::Real
    } else {
        Domain::Complex
    };
    Ok(PowerSums { values, domain })
}

/// Real fast path of [`sum_of_power`].
pub fn sum_of_power_real(xs: &[f64], k: usize) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::default(); k];
    for &x in xs {
        let mut pow = x;
        for slot in acc.iter_mut() {
            slot.add(pow);
            pow *= x;
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

/// Elementary symmetric polynomials `e_1..e_M` from power sums via
/// `n e_n = Σ_{k=1..n} (-1)^(k-1) e_(n-k) p_k`.
pub fn newton_girard(p: &PowerSums, m: usize) -> Result<MonicPolynomial> {
    if p.degree() < m {
        return Err(Error::InsufficientDegree {
            have: p.degree(),
            need: m,
        });
    }
    let mut e = vec![Complex64::new(1.0, 0.0)];
    for n in 1..=m {
        let mut acc = CompensatedComplex::default();
        for k in 1..=n {
            let term = e[n - k] * p.values[k - 1];
            acc.add(if k % 2 == 1 { term } else { -term });
        }
        e.push(acc.value() / n as f64);
    }
    e.remove(0);
    Ok(MonicPolynomial::from_elementary(e))
}

/// Normwise backward error of `z` as a root of the polynomial.
fn backward_error(coeffs: &[Complex64], z: Complex64) -> f64 {
    let cmax = coeffs.iter().fold(0.0, |m: f64, c| m.max(c.norm()));
    let r = z.norm();
    let mut scale = 0.0;
    let mut pow = 1.0;
    for _ in coeffs {
        scale += pow;
        pow *= r;
    }
    horner(coeffs, z).norm() / (cmax * scale)
}

/// Componentwise backward error `|P(z)| / Σ|c_k||z|^k`.
fn componentwise_error(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let scale = coeffs.iter().fold(0.0, |acc, c| acc * r + c.norm());
    horner(coeffs, z).norm() / scale
}

/// Initial guesses sit on a circle rotated off the real axis by this many
/// radians (the golden-ratio conjugate).
const START_ROTATION: f64 = 0.618_033_988_749_894_9;
const TIGHT_BACKWARD_ERROR: f64 = 16.0 * f64::EPSILON;
const LOOSE_BACKWARD_ERROR: f64 = 1e-10;
/// Spread budgets for merging an `s`-fold cluster are `eps^(1/s)` relative
/// to the root scale, tried from tight to loose.
const MERGE_LADDER: [f64; 3] = [1e-12, 1e-9, 1e-6];

/// Raw Durand–Kerner roots, before any cluster merging.
pub(crate) fn durand_kerner(poly: &MonicPolynomial, cfg: &ToleranceConfig) -> Result<Vec<Complex64>> {
    let m = poly.degree();
    if m == 0 {
        return Err(Error::InvalidInput("polynomial degree must be >= 1".into()));
    }
    if m > cfg.max_degree {
        return Err(Error::DegreeCap {
            degree: m,
            cap: cfg.max_degree,
        });
    }
    if let Some(bad) = poly.elementary.iter().find(|e| !(e.re.is_finite() && e.im.is_finite())) {
        return Err(Error::Overflow(format!("non-finite polynomial coefficient {bad}")));
    }
    if m == 1 {
        return Ok(vec![poly.elementary[0]]);
    }
    let coeffs = poly.coefficients();
    let radius = 1.0
        + poly
            .elementary
            .iter()
            .enumerate()
            .map(|(n, e)| e.norm().powf(1.0 / (n + 1) as f64))
            .fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| Complex64::from_polar(radius, TAU * k as f64 / m as f64 + START_ROTATION))
        .collect();

    for _ in 0..cfg.root_iters {
        for k in 0..m {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..m {
                if j != k {
                    denom *= z[k] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(f64::EPSILON * radius, 0.0);
            }
            let step = horner(&coeffs, z[k]) / denom;
            z[k] -= step;
        }
        let tight = z
            .iter()
            .map(|&r| componentwise_error(&coeffs, r))
            .fold(0.0, f64::max);
        if tight <= TIGHT_BACKWARD_ERROR * m as f64 {
            return Ok(z);
        }
    }
    let worst = z
        .iter()
        .map(|&r| backward_error(&coeffs, r))
        .fold(0.0, f64::max);
    if worst.is_finite() && worst <= LOOSE_BACKWARD_ERROR {
        Ok(z)
    } else {
        Err(Error::NonConvergence {
            degree: m,
            iterations: cfg.root_iters,
            backward_error: worst,
        })
    }
}

/// Groups roots into clusters, largest first: a root and its `s - 1`
/// nearest unassigned neighbours form a cluster when their diameter is
/// within `merge_eps^(1/s) * scale`. Each cluster is replaced by its
/// centroid, polished as a simple root of the `(s-1)`-th derivative,
/// repeated `s` times.
pub(crate) fn merge_clusters(roots: &[Complex64], coeffs: &[Complex64], merge_eps: f64) -> Vec<Complex64> {
    let m = roots.len();
    let scale = roots.iter().fold(1.0, |s: f64, z| s.max(z.norm()));
    let mut assigned = vec![false; m];
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    for size in (2..=m).rev() {
        let limit = merge_eps.powf(1.0 / size as f64) * scale;
        for seed in 0..m {
            if assigned[seed] {
                continue;
            }
            let mut near: Vec<usize> = (0..m).filter(|&k| !assigned[k] && k != seed).collect();
            if near.len() + 1 < size {
                break;
            }
            near.sort_by(|&a, &b| (roots[a] - roots[seed]).norm().total_cmp(&(roots[b] - roots[seed]).norm()));
            near.truncate(size - 1);
            near.push(seed);
            let members: Vec<Complex64> = near.iter().map(|&k| roots[k]).collect();
            if diameter(&members).fold(0.0, f64::max) <= limit {
                clusters.push((members.iter().sum::<Complex64>() / size as f64, size));
                near.iter().for_each(|&k| assigned[k] = true);
            }
        }
    }
    clusters.extend((0..m).filter(|&k| !assigned[k]).map(|k| (roots[k], 1)));

    let centres: Vec<Complex64> = clusters.iter().map(|c| c.0).collect();
    let mut out = Vec::with_capacity(m);
    for (idx, &(centre, size)) in clusters.iter().enumerate() {
        let gap = centres
            .iter()
            .enumerate()
            .filter(|&(o, _)| o != idx)
            .map(|(_, c)| (c - centre).norm())
            .fold(f64::INFINITY, f64::min);
        let polished = polish_multiple_root(coeffs, centre, size);
        let keep = if (polished - centre).norm() < 0.25 * gap { polished } else { centre };
        out.extend(std::iter::repeat_n(keep, size));
    }
    out
}

/// Coefficients (highest first) of the `order`-th derivative.
fn derivative(coeffs: &[Complex64], order: usize) -> Vec<Complex64> {
    let mut c = coeffs.to_vec();
    for _ in 0..order {
        let deg = c.len() - 1;
        c = c[..deg]
            .iter()
            .enumerate()
            .map(|(k, &a)| a * (deg - k) as f64)
            .collect();
    }
    c
}

/// Newton steps on `P^(s-1)`, where an `s`-fold root of `P` is simple.
fn polish_multiple_root(coeffs: &[Complex64], start: Complex64, s: usize) -> Complex64 {
    let f = derivative(coeffs, s - 1);
    let df = derivative(&f, 1);
    let mut z = start;
    for _ in 0..8 {
        let d = horner(&df, z);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(&f, z) / d;
        if !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        z -= step;
        if step.norm() <= f64::EPSILON * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn diameter(c: &[Complex64]) -> impl Iterator<Item = f64> + '_ {
    c.iter()
        .enumerate()
        .flat_map(move |(i, p)| c[i + 1..].iter().map(move |q| (p - q).norm()))
}

/// First merge of the ladder that `accept`s, falling back to the raw roots.
fn clustered(
    raw: &[Complex64],
    coeffs: &[Complex64],
    score: impl Fn(&[Complex64]) -> f64,
    tol: f64,
) -> std::result::Result<Vec<Complex64>, f64> {
    let mut best = f64::INFINITY;
    for eps in MERGE_LADDER {
        let merged = merge_clusters(raw, coeffs, eps);
        let res = score(&merged);
        if res <= tol {
            return Ok(merged);
        }
        best = best.min(res);
    }
    let res = score(raw);
    if res <= tol {
        return Ok(raw.to_vec());
    }
    Err(best.min(res))
}

/// `max_k |ê_k - e_k| / (1 + max|r|)^k` for the polynomial rebuilt from
/// `roots`.
fn elementary_residual(roots: &[Complex64], poly: &MonicPolynomial) -> f64 {
    let mut e = vec![Complex64::new(0.0, 0.0); roots.len() + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (n, &r) in roots.iter().enumerate() {
        for k in (1..=n + 1).rev() {
            let prev = e[k - 1];
            e[k] += prev * r;
        }
    }
    let base = 1.0 + roots.iter().fold(0.0, |m: f64, z| m.max(z.norm()));
    poly.elementary
        .iter()
        .zip(&e[1..])
        .enumerate()
        .map(|(k, (want, got))| (want - got).norm() / base.powi(k as i32 + 1))
        .fold(0.0, f64::max)
}

/// Roots of a monic polynomial with multiplicity; tight clusters are merged.
pub fn poly_roots(poly: &MonicPolynomial, cfg: &ToleranceConfig) -> Result<Vec<Complex64>> {
    let raw = durand_kerner(poly, cfg)?;
    let coeffs = poly.coefficients();
    let mut roots = clustered(&raw, &coeffs, |r| elementary_residual(r, poly), cfg.verify_tol)
        .unwrap_or(raw);
    sort_complex(&mut roots);
    Ok(roots)
}

/// `max_l |Σ r^l - p_l| / (1 + Σ |r|^l)`.
pub fn power_sum_residual(roots: &[Complex64], p: &[Complex64]) -> f64 {
    let k = p.len();
    let mut sums = vec![CompensatedComplex::default(); k];
    let mut mags = vec![CompensatedSum::default(); k];
    for &r in roots {
        let mut pow = r;
        for l in 0..k {
            sums[l].add(pow);
            mags[l].add(pow.norm());
            pow *= r;
        }
    }
    (0..k)
        .map(|l| (sums[l].value() - p[l]).norm() / (1.0 + mags[l].value()))
        .fold(0.0, f64::max)
}

fn sort_complex(zs: &mut [Complex64]) {
    zs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Recovers the `M`-element multiset whose power sums are `p`.
///
/// Real-domain input must produce real roots: an imaginary part above
/// `abs_tol + rel_tol * scale` is an error. The result is sorted by real
/// part, then imaginary part.
pub fn invert_power_sums(p: &PowerSums, m: usize, cfg: &ToleranceConfig) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::InvalidInput("multiset size must be >= 1".into()));
    }
    let poly = newton_girard(p, m)?;
    let raw = durand_kerner(&poly, cfg)?;
    let mut roots = clustered(
        &raw,
        &poly.coefficients(),
        |r| power_sum_residual(r, &p.values),
        cfg.verify_tol,
    )
    .map_err(|residual| Error::InversionResidual {
        residual,
        tol: cfg.verify_tol,
    })?;
    if p.domain == Domain::Real {
        let scale = roots.iter().fold(1.0, |s: f64, z| s.max(z.norm()));
        let tol = cfg.abs_tol + cfg.rel_tol * scale;
        let imag = roots.iter().fold(0.0, |s: f64, z| s.max(z.im.abs()));
        if imag > tol {
            return Err(Error::ImaginaryResidue { imag, tol });
        }
        roots.iter_mut().for_each(|z| z.im = 0.0);
    }
    sort_complex(&mut roots);
    Ok(roots)
}

/// Real convenience wrapper: sorted real roots of real power sums.
pub fn invert_real_power_sums(p: &[f64], m: usize, cfg: &ToleranceConfig) -> Result<Vec<f64>> {
    invert_power_sums(&PowerSums::real(p), m, cfg).map(|r| r.iter().map(|z| z.re).collect())
}

/// Bivariate moments `S(a, b) = Σ_n u_n^a v_n^b`, keyed by `(a, b)`.
pub type BivariateMoments = BTreeMap<(usize, usize), f64>;

/// Power sums of `{u_n + v_n i}` assembled from bivariate moments:
/// `p_l = Σ_{k=0..l} C(l, k) i^k S(l-k, k)`.
pub fn complex_pair_power_sums(moments: &BivariateMoments, m: usize) -> Result<PowerSums> {
    let unit_powers = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut values = Vec::with_capacity(m);
    let mut binom = vec![1.0];
    for l in 1..=m {
        binom = std::iter::once(1.0)
            .chain(binom.windows(2).map(|w| w[0] + w[1]))
            .chain(std::iter::once(1.0))
            .collect();
        let mut acc = CompensatedComplex::default();
        for k in 0..=l {
            let s = *moments.get(&(l - k, k)).ok_or(Error::MissingMoment {
                deg_real: l - k,
                deg_imag: k,
            })?;
            acc.add(unit_powers[k % 4] * (binom[k] * s));
        }
        values.push(acc.value());
    }
    Ok(PowerSums::complex(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reals(xs: &[f64]) -> Vec<Complex64> {
        xs.iter().map(|&x| c(x, 0.0)).collect()
    }

    fn assert_multiset_close(got: &[Complex64], want: &[Complex64], tol: f64) {
        let mut got = got.to_vec();
        let mut want = want.to_vec();
        sort_complex(&mut got);
        sort_complex(&mut want);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() <= tol, "got {got:?}, want {want:?}");
        }
    }

    /// Coefficients of Π (z - r) by repeated multiplication, highest first.
    fn expand_roots(roots: &[f64]) -> Vec<f64> {
        let mut poly = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, &a) in poly.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            poly = next;
        }
        poly
    }

    #[test]
    fn power_map_examples() {
        assert_eq!(power_map(c(2., 0.), 3).unwrap(), reals(&[2., 4., 8.]));
        assert_eq!(power_map(c(0., 0.), 4).unwrap(), reals(&[0.; 4]));
        assert_eq!(
            power_map(c(0., 1.), 4).unwrap(),
            vec![c(0., 1.), c(-1., 0.), c(0., -1.), c(1., 0.)]
        );
        assert!(power_map(c(1., 0.), 0).is_err());
    }

    #[test]
    fn sum_of_power_examples() {
        let p = sum_of_power(&reals(&[1., 2.]), 2).unwrap();
        assert_eq!(p.real_values(), vec![3., 5.]);
        assert_eq!(p.domain(), Domain::Real);
        let p = sum_of_power(&reals(&[1., 2., 3.]), 3).unwrap();
        assert_eq!(p.real_values(), vec![6., 14., 36.]);
        let z = c(0.3, -1.2);
        let p = sum_of_power(&[z, z], 1).unwrap();
        assert_eq!(p.values(), &[z * 2.0]);
        assert_eq!(p.domain(), Domain::Complex);
        assert!(sum_of_power(&[], 2).is_err());
    }

    #[test]
    fn newton_girard_examples() {
        let e = newton_girard(&PowerSums::real(&[3., 5.]), 2).unwrap();
        assert_eq!(e.elementary(), &reals(&[3., 2.])[..]);

        // Oracle: expand (z-1)(z-2)(z-3) = z^3 - 6z^2 + 11z - 6.
        let expanded = expand_roots(&[1., 2., 3.]);
        assert_eq!(expanded, vec![1., -6., 11., -6.]);
        let e = newton_girard(&PowerSums::real(&[6., 14., 36.]), 3).unwrap();
        let coeffs: Vec<f64> = e.coefficients().iter().map(|z| z.re).collect();
        assert_eq!(coeffs, expanded);

        let e = newton_girard(&PowerSums::real(&[0.; 4]), 4).unwrap();
        assert!(e.elementary().iter().all(|z| z.norm() == 0.0));

        assert!(matches!(
            newton_girard(&PowerSums::real(&[1.]), 2),
            Err(Error::InsufficientDegree { have: 1, need: 2 })
        ));
    }

    #[test]
    fn roots_examples() {
        let cfg = ToleranceConfig::default();
        let r = poly_roots(&MonicPolynomial::from_real_elementary(&[3., 2.]), &cfg).unwrap();
        assert_multiset_close(&r, &reals(&[1., 2.]), 1e-12);

        let r = poly_roots(&MonicPolynomial::from_real_elementary(&[0., 0., 0.]), &cfg).unwrap();
        assert_multiset_close(&r, &reals(&[0., 0., 0.]), 1e-9);

        let poly = MonicPolynomial::from_real_elementary(&[6., 11., 6.]);
        let r = poly_roots(&poly, &cfg).unwrap();
        // Oracle: each candidate root substitutes to zero.
        for cand in [1., 2., 3.] {
            assert_eq!(poly.eval(c(cand, 0.)).norm(), 0.0);
        }
        assert_multiset_close(&r, &reals(&[1., 2., 3.]), 1e-12);
    }

    #[test]
    fn roots_refuses_over_degree_cap() {
        let cfg = ToleranceConfig {
            max_degree: 3,
            ..Default::default()
        };
        let poly = MonicPolynomial::from_real_elementary(&[1., 1., 1., 1.]);
        assert!(matches!(
            poly_roots(&poly, &cfg),
            Err(Error::DegreeCap { degree: 4, cap: 3 })
        ));
    }

    #[test]
    fn roots_non_convergence_is_reported() {
        let cfg = ToleranceConfig {
            root_iters: 1,
            ..Default::default()
        };
        let poly = MonicPolynomial::from_real_elementary(&[0.4, -3.1, 0.7, 2.2, -0.5, 0.9]);
        assert!(matches!(
            poly_roots(&poly, &cfg),
            Err(Error::NonConvergence { degree: 6, .. })
        ));
    }

    #[test]
    fn invert_examples() {
        let cfg = ToleranceConfig::default();
        let r = invert_real_power_sums(&[3., 5.], 2, &cfg).unwrap();
        assert!((r[0] - 1.).abs() < 1e-12 && (r[1] - 2.).abs() < 1e-12);

        let cc = 1.7_f64;
        let r = invert_real_power_sums(&[2. * cc, 2. * cc * cc], 2, &cfg).unwrap();
        assert!((r[0] - cc).abs() < 1e-12 && (r[1] - cc).abs() < 1e-12, "{r:?}");

        // (1+i)+(1-i) = 2 and (1+i)^2+(1-i)^2 = 2i - 2i = 0.
        let p = sum_of_power(&[c(1., 1.), c(1., -1.)], 2).unwrap();
        assert_eq!(p.values(), &[c(2., 0.), c(0., 0.)]);
        let r = invert_power_sums(&PowerSums::complex(p.values().to_vec()), 2, &cfg).unwrap();
        assert_multiset_close(&r, &[c(1., 1.), c(1., -1.)], 1e-12);
    }

    #[test]
    fn invert_rejects_non_real_power_sums_in_real_mode() {
        // p = [2, 0] is the power-sum vector of {1+i, 1-i}; no real pair has it.
        let r = invert_real_power_sums(&[2., 0.], 2, &ToleranceConfig::default());
        assert!(matches!(r, Err(Error::ImaginaryResidue { .. })), "{r:?}");
    }

    #[test]
    fn invert_high_multiplicity() {
        let cfg = ToleranceConfig::default();
        for m in 1..=6 {
            for v in [-2.0, 0.0, 0.5, 2.0] {
                let xs = vec![v; m];
                let p = sum_of_power_real(&xs, m);
                let r = invert_real_power_sums(&p, m, &cfg).unwrap();
                for got in r {
                    assert!((got - v).abs() < 1e-10, "m={m} v={v} got {got}");
                }
            }
        }
    }

    #[test]
    fn invert_mixed_multiplicities() {
        let cfg = ToleranceConfig::default();
        let xs = [1.0, 1.0, 1.0, -0.5, -0.5, 2.0];
        let p = sum_of_power_real(&xs, 6);
        let r = invert_real_power_sums(&p, 6, &cfg).unwrap();
        let mut want = xs.to_vec();
        want.sort_by(f64::total_cmp);
        for (g, w) in r.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn complex_pair_examples() {
        let mut s = BivariateMoments::new();
        s.insert((1, 0), 3.0);
        s.insert((0, 1), 7.0);
        let p = complex_pair_power_sums(&s, 1).unwrap();
        assert_eq!(p.values(), &[c(3., 7.)]);

        // u = [1, 2], v = [0, 0]: plain power sums of u.
        let mut s = BivariateMoments::new();
        for l in 1..=2usize {
            for k in 0..=l {
                let val = if k == 0 { 1f64 + 2f64.powi(l as i32) } else { 0.0 };
                s.insert((l - k, k), val);
            }
        }
        let p = complex_pair_power_sums(&s, 2).unwrap();
        assert_eq!(p.values(), &reals(&[3., 5.])[..]);

        // u = [1], v = [1]: every moment is 1, so p2 = 1 + 2i - 1 = (1+i)^2 = 2i.
        let mut s = BivariateMoments::new();
        for l in 1..=2usize {
            for k in 0..=l {
                s.insert((l - k, k), 1.0);
            }
        }
        let p = complex_pair_power_sums(&s, 2).unwrap();
        assert_eq!(p.values()[0], c(1., 1.));
        assert_eq!(p.values()[1], c(1., 1.) * c(1., 1.));
        assert_eq!(p.values()[1], c(0., 2.));

        s.remove(&(1, 1));
        assert!(matches!(
            complex_pair_power_sums(&s, 2),
            Err(Error::MissingMoment { deg_real: 1, deg_imag: 1 })
        ));
    }
}
