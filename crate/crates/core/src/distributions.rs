//! Exact distributions over `{0,1}^n`, finite mixtures of uniform
//! distributions over affine subspaces, and the Walsh–Fourier transform.
//!
//! Fourier coefficients use the convention `f̂(a) = 2^{-n} Σ_x f(x) (-1)^{a·x}`,
//! so the uniform distribution has `Û(0) = 2^{-n}` and the inverse transform
//! is the unscaled butterfly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::gf2::{bits_to_string, parity, AffineSubspace, MAX_DIM};

/// Validity tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-9;

/// Largest `n` for which exact `2^n` tables are built.
pub const MAX_TABLE_DIM: usize = 16;

fn check_table_dim(n: usize) -> Result<()> {
    if n > MAX_TABLE_DIM {
        Err(Error::parameter(format!("exact tables limited to n <= {MAX_TABLE_DIM}, got {n}")))
    } else {
        Ok(())
    }
}

/// Probability vector over `{0,1}^n`, indexed by the packed word of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    n: usize,
    weights: Vec<f64>,
}

impl ExactDistribution {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        check_table_dim(n)?;
        check_dim(1 << n, weights.len())?;
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::parameter("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::parameter(format!("weights sum to {total}, not 1")));
        }
        Ok(ExactDistribution { n, weights })
    }

    pub(crate) fn from_raw(n: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), 1 << n);
        ExactDistribution { n, weights }
    }

    /// `U_n`.
    pub fn uniform(n: usize) -> Result<Self> {
        check_table_dim(n)?;
        let size = 1usize << n;
        Ok(Self::from_raw(n, vec![1.0 / size as f64; size]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: u32) -> f64 {
        self.weights[x as usize]
    }

    /// CSV with header `x,weight`; weights carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,weight\n");
        for (x, &w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "{},{}", bits_to_string(self.n, x as u32), format_sig17(w));
        }
        out
    }
}

/// Plain decimal rendering with 17 significant digits.
pub fn format_sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.16}", v);
    }
    let exp = v.abs().log10().floor() as i32;
    let prec = (16 - exp).max(0) as usize;
    format!("{:.*}", prec, v)
}

/// `U_w`, the uniform distribution over a non-empty affine subspace.
pub fn uniform_over(w: &AffineSubspace) -> Result<ExactDistribution> {
    if w.is_empty() {
        return Err(Error::Domain("uniform distribution over the empty subspace"));
    }
    let n = w.n();
    check_table_dim(n)?;
    let mut weights = vec![0.0; 1 << n];
    let p = 1.0 / w.len() as f64;
    for x in w.point_words() {
        weights[x as usize] = p;
    }
    Ok(ExactDistribution::from_raw(n, weights))
}

/// `|P - Q|_1`.
pub fn l1_distance(p: &ExactDistribution, q: &ExactDistribution) -> Result<f64> {
    check_dim(p.n, q.n)?;
    Ok(l1(&p.weights, &q.weights))
}

pub(crate) fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

// ---------------------------------------------------------------------------
// Mixtures
// ---------------------------------------------------------------------------

/// A finite-support random variable over non-empty affine subspaces.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceMixture {
    n: usize,
    support: Vec<(AffineSubspace, f64)>,
}

impl SubspaceMixture {
    /// Validates distinctness, positivity and normalisation.
    pub fn new(n: usize, support: Vec<(AffineSubspace, f64)>) -> Result<Self> {
        if n > MAX_DIM {
            return Err(Error::AmbientTooLarge(n));
        }
        if support.is_empty() {
            return Err(Error::parameter("mixture has empty support"));
        }
        let mut seen = std::collections::HashSet::with_capacity(support.len());
        let mut total = 0.0;
        for (w, p) in &support {
            check_dim(n, w.n())?;
            if w.is_empty() {
                return Err(Error::parameter("mixture support contains the empty subspace"));
            }
            if !(*p > 0.0) || !p.is_finite() {
                return Err(Error::parameter(format!("non-positive probability {p}")));
            }
            if !seen.insert(w) {
                return Err(Error::parameter(format!("duplicate support element {w}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::parameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(SubspaceMixture { n, support })
    }

    /// Merges duplicates, drops zero weights and normalises. Support order
    /// follows the canonical order of the subspaces.
    pub fn from_weights<I>(n: usize, weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (AffineSubspace, f64)>,
    {
        let mut acc: BTreeMap<AffineSubspace, f64> = BTreeMap::new();
        for (w, p) in weights {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::parameter(format!("invalid weight {p}")));
            }
            if p > 0.0 {
                *acc.entry(w).or_insert(0.0) += p;
            }
        }
        let total: f64 = acc.values().sum();
        if !(total > 0.0) {
            return Err(Error::parameter("mixture has no positive weight"));
        }
        Self::new(n, acc.into_iter().map(|(w, p)| (w, p / total)).collect())
    }

    pub fn point_mass(w: AffineSubspace) -> Result<Self> {
        let n = w.n();
        Self::new(n, vec![(w, 1.0)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[(AffineSubspace, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `Pr_W[pred(W)]`.
    pub fn mass_where<F: Fn(&AffineSubspace) -> bool>(&self, pred: F) -> f64 {
        self.support.iter().filter(|(w, _)| pred(w)).map(|(_, p)| p).sum()
    }

    /// `W | pred(W)` together with `Pr[pred(W)]`; `None` when that mass is zero.
    pub fn condition<F: Fn(&AffineSubspace) -> bool>(&self, pred: F) -> Option<(SubspaceMixture, f64)> {
        let kept: Vec<(AffineSubspace, f64)> = self.support.iter().filter(|(w, _)| pred(w)).cloned().collect();
        let mass: f64 = kept.iter().map(|(_, p)| p).sum();
        if kept.is_empty() || !(mass > 0.0) {
            return None;
        }
        let support = kept.into_iter().map(|(w, p)| (w, p / mass)).collect();
        Some((SubspaceMixture { n: self.n, support }, mass))
    }

    /// For every `a`, the masses `Pr[W ⊆ {a·x = 0}]` and `Pr[W ⊆ {a·x = 1}]`.
    ///
    /// `W ⊆ {a·x = b}` exactly when `a` lies in the orthogonal space of `W` and
    /// `b = a·offset`, so each element only touches `2^{n - dim}` entries.
    pub fn hyperplane_masses(&self) -> Vec<[f64; 2]> {
        let mut table = vec![[0.0f64; 2]; 1 << self.n];
        for (w, p) in &self.support {
            let s = w.orthogonal_space().expect("mixture support is non-empty");
            let off = w.offset_word().expect("mixture support is non-empty");
            for a in s.elements() {
                let a = a.bits();
                table[a as usize][parity(a & off) as usize] += p;
            }
        }
        table
    }

    /// `max_{a≠0, b} Pr[W ⊆ {a·x = b}]`; zero when `n = 0`.
    pub fn max_concentration(&self) -> f64 {
        self.hyperplane_masses().iter().skip(1).flat_map(|m| m.iter().copied()).fold(0.0, f64::max)
    }
}

/// `E_W[U_W]`.
pub fn mixture_distribution(mixture: &SubspaceMixture) -> Result<ExactDistribution> {
    let n = mixture.n;
    check_table_dim(n)?;
    let mut weights = vec![0.0; 1 << n];
    for (w, p) in &mixture.support {
        let each = p / w.len() as f64;
        for x in w.point_words() {
            weights[x as usize] += each;
        }
    }
    Ok(ExactDistribution::from_raw(n, weights))
}

// ---------------------------------------------------------------------------
// Fourier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct FourierTable {
    n: usize,
    coefficients: Vec<f64>,
}

impl FourierTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, a: u32) -> f64 {
        self.coefficients[a as usize]
    }

    /// Recovers the function values: `f(x) = Σ_a f̂(a) (-1)^{a·x}`.
    pub fn inverse(&self) -> Vec<f64> {
        let mut v = self.coefficients.clone();
        butterfly(&mut v);
        v
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }
}

fn butterfly(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

/// Transform of an arbitrary real function on `{0,1}^n`.
pub fn walsh_transform_values(n: usize, values: &[f64]) -> Result<FourierTable> {
    check_dim(1 << n, values.len())?;
    let mut v = values.to_vec();
    butterfly(&mut v);
    let scale = 1.0 / (1u64 << n) as f64;
    v.iter_mut().for_each(|c| *c *= scale);
    Ok(FourierTable { n, coefficients: v })
}

pub fn walsh_transform(p: &ExactDistribution) -> FourierTable {
    walsh_transform_values(p.n, &p.weights).expect("table length matches n")
}

// ---------------------------------------------------------------------------
// Closeness check
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierCheck {
    pub hypothesis_holds: bool,
    pub max_concentration: f64,
    pub distance: f64,
    pub bound: f64,
}

impl FourierCheck {
    /// Whether the conclusion `distance < bound` holds (up to `slack`).
    pub fn conclusion_holds(&self, slack: f64) -> bool {
        self.distance < self.bound + slack
    }
}

/// Relative slack when comparing a concentration against `2^{-r}`.
const CONCENTRATION_SLACK: f64 = 1e-12;

/// If every nontrivial hyperplane captures `W` with probability at most
/// `2^{-r}`, the mixture is within `2^{-(r - n/2)}` of uniform.
pub fn check_fourier_lemma(mixture: &SubspaceMixture, r: f64) -> Result<FourierCheck> {
    let n = mixture.n();
    if !(r >= n as f64 / 2.0) {
        return Err(Error::parameter(format!("r = {r} is below n/2 = {}", n as f64 / 2.0)));
    }
    let max_concentration = mixture.max_concentration();
    let threshold = (-r).exp2();
    let dist = mixture_distribution(mixture)?;
    let distance = l1_distance(&dist, &ExactDistribution::uniform(n)?)?;
    Ok(FourierCheck {
        hypothesis_holds: max_concentration <= threshold * (1.0 + CONCENTRATION_SLACK),
        max_concentration,
        distance,
        bound: (-(r - n as f64 / 2.0)).exp2(),
    })
}

/// Random mixtures for the verification suites.
pub mod gen {
    use rand::Rng;

    use super::*;
    use crate::gf2::gen::random_affine;

    /// A mixture with `size` random components of assorted dimensions.
    pub fn random_mixture<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> SubspaceMixture {
        let items = (0..size.max(1)).map(|_| {
            let dim = rng.random_range(0..=n);
            (random_affine(n, dim, rng), rng.random_range(0.05..1.0))
        });
        SubspaceMixture::from_weights(n, items.collect::<Vec<_>>()).expect("positive weights")
    }

    /// A mixture that satisfies the concentration hypothesis at level `r`:
    /// the full space carries most of the mass and the remaining components
    /// are scaled so no hyperplane captures more than `2^{-r}`.
    pub fn hypothesis_mixture<R: Rng + ?Sized>(n: usize, r: f64, size: usize, rng: &mut R) -> SubspaceMixture {
        let full = AffineSubspace::full(n).expect("n within range");
        if n == 0 || size == 0 {
            return SubspaceMixture::point_mass(full).expect("valid");
        }
        let rest = random_mixture(n, size, rng);
        let conc = rest.max_concentration();
        let cap = if conc > 0.0 { ((-r).exp2() / conc).min(1.0) } else { 1.0 };
        // Occasionally sit exactly on the boundary of the hypothesis.
        let scale = if rng.random_bool(0.25) { 1.0 } else { rng.random_range(0.0..1.0) };
        let delta = cap * scale;
        let mut items: Vec<(AffineSubspace, f64)> = rest.support().iter().map(|(w, p)| (w.clone(), p * delta)).collect();
        items.push((full, 1.0 - delta));
        SubspaceMixture::from_weights(n, items).expect("positive weights")
    }
}
