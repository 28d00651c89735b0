//! Grouping affine subspaces under near-uniform representatives.
//!
//! [`find_representative_subspace`] descends through hyperplanes that capture
//! too much of the mixture, identifying each hyperplane with `{0,1}^{n-1}` by
//! deleting its pivot coordinate. [`build_partition`] applies it repeatedly
//! to the not-yet-assigned part of the mixture, producing the partial map σ.

use std::collections::HashMap;

use serde::Serialize;

use crate::distributions::{l1_distance, mixture_distribution, uniform_over, SubspaceMixture};
use crate::error::{Error, Result};
use crate::gf2::{mask, parity, AffineSubspace, BitVector};

/// Slack on strict inequalities that compare floating-point distances.
pub const STRICT_SLACK: f64 = 1e-12;

/// Ties within this margin are broken lexicographically.
const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperplaneChoice {
    #[serde(serialize_with = "crate::report::ser_display")]
    pub a: BitVector,
    pub b: bool,
    pub p: f64,
}

/// The hyperplane `{a·x = b}`, `a ≠ 0`, most likely to contain `W`.
///
/// Ties go to the smallest `a` (as a packed word), then `b = 0`. Returns
/// `None` for `n = 0`, where no nonzero `a` exists.
pub fn hyperplane_concentration(mixture: &SubspaceMixture) -> Option<HyperplaneChoice> {
    let n = mixture.n();
    if n == 0 {
        return None;
    }
    let table = mixture.hyperplane_masses();
    let mut best: Option<(u32, bool, f64)> = None;
    for (a, masses) in table.iter().enumerate().skip(1) {
        for (b, &p) in masses.iter().enumerate() {
            if best.is_none_or(|(_, _, q)| p > q + TIE_EPS) {
                best = Some((a as u32, b == 1, p));
            }
        }
    }
    best.map(|(a, b, p)| HyperplaneChoice { a: BitVector::from_raw(n, a), b, p })
}

/// Affine identification of `{a·x = b}` with `{0,1}^{n-1}` that deletes the
/// pivot coordinate (lowest set coordinate of `a`).
#[derive(Clone, Copy, Debug)]
struct HyperplaneChart {
    a: u32,
    b: bool,
    pivot: u32,
}

impl HyperplaneChart {
    fn new(a: u32, b: bool) -> Self {
        debug_assert!(a != 0);
        HyperplaneChart { a, b, pivot: a.trailing_zeros() }
    }

    #[inline]
    fn project_word(&self, x: u32) -> u32 {
        let low = x & mask(self.pivot as usize);
        let high = (x >> (self.pivot + 1)) << self.pivot;
        low | high
    }

    #[inline]
    fn insert_zero(&self, y: u32) -> u32 {
        let low = y & mask(self.pivot as usize);
        let high = (y >> self.pivot) << (self.pivot + 1);
        low | high
    }

    /// Point lift (affine): the pivot coordinate is solved from `a·x = b`.
    #[inline]
    fn lift_point(&self, y: u32) -> u32 {
        let z = self.insert_zero(y);
        z | (((self.b ^ parity(self.a & z)) as u32) << self.pivot)
    }

    /// Direction lift (linear): solves `a·x = 0`.
    #[inline]
    fn lift_direction(&self, y: u32) -> u32 {
        let z = self.insert_zero(y);
        z | ((parity(self.a & z) as u32) << self.pivot)
    }

    fn project(&self, w: &AffineSubspace, n: usize) -> AffineSubspace {
        let dir = w.direction().expect("projected subspaces are non-empty");
        let rows: Vec<u32> = dir.rows().iter().map(|&r| self.project_word(r)).collect();
        let off = self.project_word(w.offset_word().expect("non-empty"));
        AffineSubspace::from_words(n - 1, off, &rows)
    }

    fn lift(&self, s: &AffineSubspace, n: usize) -> AffineSubspace {
        let dir = s.direction().expect("representatives are non-empty");
        let rows: Vec<u32> = dir.rows().iter().map(|&r| self.lift_direction(r)).collect();
        let off = self.lift_point(s.offset_word().expect("non-empty"));
        AffineSubspace::from_words(n, off, &rows)
    }
}

#[derive(Clone, Debug)]
pub struct Representative {
    pub subspace: AffineSubspace,
    /// `W | (W ⊆ s)`.
    pub conditioned: SubspaceMixture,
    /// `Pr_W[W ⊆ s]`.
    pub mass: f64,
    /// Number of hyperplane restrictions taken, i.e. `n - dim(s)`.
    pub depth: usize,
}

fn check_r(n: usize, r: f64) -> Result<()> {
    if !(r >= n as f64 / 2.0) {
        return Err(Error::parameter(format!("r = {r} is below n/2 = {}", n as f64 / 2.0)));
    }
    Ok(())
}

fn representative_rec(mixture: &SubspaceMixture, r: f64) -> AffineSubspace {
    let n = mixture.n();
    let full = AffineSubspace::full(n).expect("n within range");
    let Some(choice) = hyperplane_concentration(mixture) else {
        return full;
    };
    if choice.p <= (-r).exp2() {
        return full;
    }
    let chart = HyperplaneChart::new(choice.a.bits(), choice.b);
    let (inside, _) = mixture
        .condition(|w| w.offset_word().is_some_and(|o| parity(o & chart.a) == chart.b) && {
            let s = w.orthogonal_space().expect("non-empty");
            s.contains_word(chart.a)
        })
        .expect("chosen hyperplane has positive mass");
    let projected = SubspaceMixture::from_weights(
        n - 1,
        inside.support().iter().map(|(w, p)| (chart.project(w, n), *p)).collect::<Vec<_>>(),
    )
    .expect("projection is injective on the hyperplane");
    let sub = representative_rec(&projected, r - 0.5);
    chart.lift(&sub, n)
}

/// Finds `s` with `Pr[W ⊆ s] ≥ 2^{-Σ_{i<n-dim s}(r - i/2)}` and
/// `|E_{W|W⊆s}[U_W] - U_s|_1 < 2^{-(r - n/2)}`.
pub fn find_representative_subspace(mixture: &SubspaceMixture, r: f64) -> Result<Representative> {
    let n = mixture.n();
    check_r(n, r)?;
    let subspace = representative_rec(mixture, r);
    let (conditioned, mass) = mixture
        .condition(|w| w.is_subset_unchecked(&subspace))
        .ok_or_else(|| Error::Internal("representative captures no mass".into()))?;
    let depth = n - subspace.dim().expect("non-empty");
    Ok(Representative { subspace, conditioned, mass, depth })
}

/// `Σ_{i=0}^{count-1} (r - i/2)`.
pub fn descent_exponent(r: f64, count: usize) -> f64 {
    let c = count as f64;
    c * r - c * (c - 1.0) / 4.0
}

/// `log2` of `4n · 2^{Σ_{i=0}^{n-k-1}(r - i/2)}`, the group-count bound for dimension ≥ k.
pub fn log2_group_bound(n: usize, r: f64, k: usize) -> f64 {
    let count = n.saturating_sub(k);
    (4.0 * n as f64).log2() + descent_exponent(r, count)
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PartitionGroup {
    #[serde(serialize_with = "crate::report::ser_display")]
    pub representative: AffineSubspace,
    pub dim: usize,
    #[serde(serialize_with = "crate::report::ser_members")]
    pub members: Vec<(AffineSubspace, f64)>,
    /// Probability (under the original mixture) of landing in this group.
    pub mass: f64,
    /// `|E[U_W | σ(W) = s] - U_s|_1`.
    pub l1_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspacePartition {
    pub n: usize,
    pub r: f64,
    pub groups: Vec<PartitionGroup>,
    pub residual_mass: f64,
    #[serde(skip)]
    index: HashMap<AffineSubspace, usize>,
    #[serde(skip)]
    residual: Vec<AffineSubspace>,
}

impl SubspacePartition {
    /// σ(w) for support members: the group index, or `None` for the `*` value.
    pub fn sigma(&self, w: &AffineSubspace) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// σ extended to zero-probability subspaces: the first group whose
    /// representative contains `w`. Unassigned support members stay `None`.
    pub fn representative_for(&self, w: &AffineSubspace) -> Option<usize> {
        if let Some(&g) = self.index.get(w) {
            return Some(g);
        }
        if self.is_support_residual(w) {
            return None;
        }
        self.groups.iter().position(|g| w.is_subset_unchecked(&g.representative))
    }

    fn is_support_residual(&self, w: &AffineSubspace) -> bool {
        self.residual.iter().any(|r| r == w)
    }

    pub fn residual_members(&self) -> &[AffineSubspace] {
        &self.residual
    }
}

impl SubspacePartition {
    fn assemble(
        n: usize,
        r: f64,
        groups: Vec<PartitionGroup>,
        residual_mass: f64,
        residual: Vec<AffineSubspace>,
    ) -> Self {
        let mut index = HashMap::new();
        for (g, group) in groups.iter().enumerate() {
            for (w, _) in &group.members {
                index.insert(w.clone(), g);
            }
        }
        SubspacePartition { n, r, groups, residual_mass, index, residual }
    }
}

/// Hard cap on rounds, `4n · 2^{Σ_{i<n}(r - i/2)}`, clamped to something finite.
fn round_cap(n: usize, r: f64) -> usize {
    let log = log2_group_bound(n, r, 0);
    if log >= 40.0 {
        1 << 40
    } else {
        log.exp2().ceil().max(1.0) as usize
    }
}

/// Builds σ: repeated representatives on the unassigned part of `W` until
/// at most `2^{-2n}` of the mass remains unassigned.
pub fn build_partition(mixture: &SubspaceMixture, r: f64) -> Result<SubspacePartition> {
    let n = mixture.n();
    check_r(n, r)?;
    let support = mixture.support();
    let threshold = (-2.0 * n as f64).exp2();
    let cap = round_cap(n, r);
    let mut assigned: Vec<bool> = vec![false; support.len()];
    let mut groups: Vec<PartitionGroup> = Vec::new();
    loop {
        let residual_mass: f64 = support.iter().zip(&assigned).filter(|(_, &a)| !a).map(|((_, p), _)| p).sum();
        if residual_mass <= threshold || assigned.iter().all(|&a| a) {
            let residual = support.iter().zip(&assigned).filter(|(_, &a)| !a).map(|((w, _), _)| w.clone()).collect();
            return Ok(SubspacePartition::assemble(n, r, groups, residual_mass, residual));
        }
        if groups.len() >= cap {
            return Err(Error::Internal(format!("partition exceeded {cap} rounds")));
        }
        let remaining = SubspaceMixture::from_weights(
            n,
            support.iter().zip(&assigned).filter(|(_, &a)| !a).map(|((w, p), _)| (w.clone(), *p)).collect::<Vec<_>>(),
        )?;
        let rep = find_representative_subspace(&remaining, r)?;
        let s = rep.subspace;
        let mut members = Vec::new();
        for (i, (w, p)) in support.iter().enumerate() {
            if !assigned[i] && w.is_subset_unchecked(&s) {
                assigned[i] = true;
                members.push((w.clone(), *p));
            }
        }
        if members.is_empty() {
            return Err(Error::Internal(format!("round {} assigned nothing", groups.len())));
        }
        let mass: f64 = members.iter().map(|(_, p)| p).sum();
        let l1 = group_distance(n, &members, &s)?;
        groups.push(PartitionGroup { dim: s.dim().expect("non-empty"), representative: s, members, mass, l1_distance: l1 });
    }
}

fn group_distance(n: usize, members: &[(AffineSubspace, f64)], s: &AffineSubspace) -> Result<f64> {
    let conditioned = SubspaceMixture::from_weights(n, members.to_vec())?;
    l1_distance(&mixture_distribution(&conditioned)?, &uniform_over(s)?)
}

// ---------------------------------------------------------------------------
// Property verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CountCheck {
    pub k: usize,
    pub count: usize,
    pub log2_bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionCheck {
    pub residual_ok: bool,
    pub containment_ok: bool,
    pub closeness_ok: bool,
    pub max_group_distance: f64,
    pub distance_bound: f64,
    pub counts: Vec<CountCheck>,
    pub representatives_distinct: bool,
    pub covers_support: bool,
}

impl PartitionCheck {
    pub fn all_ok(&self) -> bool {
        self.residual_ok
            && self.containment_ok
            && self.closeness_ok
            && self.counts.iter().all(|c| c.ok)
            && self.representatives_distinct
            && self.covers_support
    }
}

/// Recomputes the four partition properties from the mixture and the groups.
pub fn check_partition(mixture: &SubspaceMixture, partition: &SubspacePartition) -> Result<PartitionCheck> {
    let n = mixture.n();
    let r = partition.r;
    let mut residual = 0.0;
    let mut covers_support = true;
    let mut containment_ok = true;
    for (w, p) in mixture.support() {
        match partition.sigma(w) {
            Some(g) => containment_ok &= w.is_subset_unchecked(&partition.groups[g].representative),
            None => {
                residual += p;
                covers_support &= partition.residual_members().contains(w);
            }
        }
    }
    let distance_bound = (-(r - n as f64 / 2.0)).exp2();
    let mut max_group_distance: f64 = 0.0;
    for g in &partition.groups {
        for (w, _) in &g.members {
            containment_ok &= w.is_subset_unchecked(&g.representative);
        }
        max_group_distance = max_group_distance.max(group_distance(n, &g.members, &g.representative)?);
    }
    let counts = (0..=n)
        .map(|k| {
            let count = partition.groups.iter().filter(|g| g.dim >= k).count();
            let log2_bound = log2_group_bound(n, r, k);
            let ok = count == 0 || (count as f64).log2() <= log2_bound + 1e-12;
            CountCheck { k, count, log2_bound, ok }
        })
        .collect();
    let mut reps: Vec<&AffineSubspace> = partition.groups.iter().map(|g| &g.representative).collect();
    reps.sort();
    reps.dedup();
    Ok(PartitionCheck {
        residual_ok: residual <= (-2.0 * n as f64).exp2() + 1e-15,
        containment_ok,
        closeness_ok: max_group_distance < distance_bound + STRICT_SLACK,
        max_group_distance,
        distance_bound,
        counts,
        representatives_distinct: reps.len() == partition.groups.len(),
        covers_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::gen::random_mixture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    fn hp(a: &str, b: bool) -> AffineSubspace {
        AffineSubspace::hyperplane(bv(a), b).unwrap()
    }

    /// Brute-force hyperplane search over all (a, b) by point enumeration.
    fn brute_concentration(m: &SubspaceMixture) -> (u32, bool, f64) {
        let n = m.n();
        let mut best = (0, false, -1.0);
        for a in 1..1u32 << n {
            for b in [false, true] {
                let p: f64 = m
                    .support()
                    .iter()
                    .filter(|(w, _)| w.point_words().iter().all(|&x| parity(a & x) == b))
                    .map(|(_, p)| p)
                    .sum();
                if p > best.2 + 1e-12 {
                    best = (a, b, p);
                }
            }
        }
        best
    }

    #[test]
    fn concentration_examples() {
        let m = SubspaceMixture::point_mass(hp("100", true)).unwrap();
        let c = hyperplane_concentration(&m).unwrap();
        assert_eq!((c.a, c.b, c.p), (bv("100"), true, 1.0));

        let m = SubspaceMixture::point_mass(AffineSubspace::full(3).unwrap()).unwrap();
        let c = hyperplane_concentration(&m).unwrap();
        assert_eq!((c.a, c.b, c.p), (bv("100"), false, 0.0));

        let m = SubspaceMixture::new(2, vec![(hp("10", false), 0.5), (hp("11", false), 0.5)]).unwrap();
        let c = hyperplane_concentration(&m).unwrap();
        assert_eq!((c.a, c.b, c.p), (bv("10"), false, 0.5));
        assert_eq!(brute_concentration(&m), (1, false, 0.5));
    }

    #[test]
    fn concentration_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..=4);
            let m = random_mixture(n, rng.random_range(1..6), &mut rng);
            let c = hyperplane_concentration(&m).unwrap();
            let (a, b, p) = brute_concentration(&m);
            assert_eq!((c.a.bits(), c.b), (a, b));
            assert!((c.p - p).abs() < 1e-12);
        }
    }

    #[test]
    fn chart_round_trips() {
        for a in 1..16u32 {
            for b in [false, true] {
                let chart = HyperplaneChart::new(a, b);
                for x in 0..16u32 {
                    if parity(a & x) == b {
                        assert_eq!(chart.lift_point(chart.project_word(x)), x);
                    }
                }
                for y in 0..8u32 {
                    assert_eq!(parity(a & chart.lift_point(y)), b);
                    assert_eq!(chart.project_word(chart.lift_point(y)), y);
                }
            }
        }
    }

    #[test]
    fn representative_of_point_mass_is_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=4 {
            for dim in 0..=n {
                let w = crate::gf2::gen::random_affine(n, dim, &mut rng);
                let rep = find_representative_subspace(&SubspaceMixture::point_mass(w.clone()).unwrap(), n as f64).unwrap();
                assert_eq!(rep.subspace, w);
                assert_eq!(rep.mass, 1.0);
                assert_eq!(rep.conditioned.support(), &[(w, 1.0)]);
            }
        }
    }

    #[test]
    fn representative_of_all_points_descends_to_a_point() {
        let n = 3;
        let r = 3.0;
        let pts: Vec<(AffineSubspace, f64)> =
            (0..8u32).map(|x| (AffineSubspace::point(BitVector::from_raw(n, x)), 0.125)).collect();
        let m = SubspaceMixture::new(n, pts).unwrap();
        let rep = find_representative_subspace(&m, r).unwrap();
        // Every level sees concentration ½ above its threshold, so the descent
        // bottoms out at a single point carrying mass 1/8.
        assert!(rep.subspace.is_point());
        assert_eq!(rep.subspace, AffineSubspace::point(bv("000")));
        assert_eq!(rep.mass, 0.125);
        assert!(rep.mass >= (-descent_exponent(r, 3)).exp2());
        let d = l1_distance(&mixture_distribution(&rep.conditioned).unwrap(), &uniform_over(&rep.subspace).unwrap()).unwrap();
        assert!(d < (-(r - 1.5)).exp2());
    }

    #[test]
    fn representative_in_dimension_zero() {
        let m = SubspaceMixture::point_mass(AffineSubspace::full(0).unwrap()).unwrap();
        let rep = find_representative_subspace(&m, 0.0).unwrap();
        assert_eq!(rep.subspace, AffineSubspace::full(0).unwrap());
        assert_eq!(rep.mass, 1.0);
    }

    #[test]
    fn representative_rejects_small_r() {
        let m = SubspaceMixture::point_mass(AffineSubspace::full(4).unwrap()).unwrap();
        assert!(find_representative_subspace(&m, 1.5).is_err());
        assert!(build_partition(&m, 1.9).is_err());
    }

    #[test]
    fn representative_inequalities_on_random_mixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.random_range(1..=5);
            let r = [n as f64 / 2.0, 0.75 * n as f64, n as f64][rng.random_range(0..3)];
            let m = random_mixture(n, rng.random_range(1..10), &mut rng);
            let rep = find_representative_subspace(&m, r).unwrap();
            let dim = rep.subspace.dim().unwrap();
            assert!(rep.mass >= (-descent_exponent(r, n - dim)).exp2() - 1e-15);
            let d = l1_distance(&mixture_distribution(&rep.conditioned).unwrap(), &uniform_over(&rep.subspace).unwrap())
                .unwrap();
            assert!(d < (-(r - n as f64 / 2.0)).exp2() + STRICT_SLACK, "d={d}");
        }
    }

    #[test]
    fn partition_of_point_mass() {
        let w = hp("0110", true);
        let m = SubspaceMixture::point_mass(w.clone()).unwrap();
        let p = build_partition(&m, 4.0).unwrap();
        assert_eq!(p.groups.len(), 1);
        assert_eq!(p.groups[0].representative, w);
        assert_eq!(p.residual_mass, 0.0);
        assert!(check_partition(&m, &p).unwrap().all_ok());
    }

    #[test]
    fn partition_of_two_halves_takes_two_rounds() {
        // concentration ½ does not exceed 2^{-1}: the whole line is one group
        let m = SubspaceMixture::new(1, vec![(hp("1", false), 0.5), (hp("1", true), 0.5)]).unwrap();
        let p = build_partition(&m, 1.0).unwrap();
        assert_eq!(p.groups.len(), 1);
        assert!(p.groups[0].representative.is_full());
        assert_eq!(p.groups[0].l1_distance, 0.0);
        assert!(check_partition(&m, &p).unwrap().all_ok());

        let m = SubspaceMixture::new(3, vec![(hp("100", false), 0.5), (hp("100", true), 0.5)]).unwrap();
        let p = build_partition(&m, 3.0).unwrap();
        assert_eq!(p.groups.len(), 2);
        assert_eq!(p.residual_mass, 0.0);
        let check = check_partition(&m, &p).unwrap();
        assert!(check.all_ok(), "{check:?}");
    }

    #[test]
    fn partition_properties_on_random_mixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.random_range(1..=5);
            let r = [n as f64 / 2.0, 0.75 * n as f64, n as f64][rng.random_range(0..3)];
            let m = random_mixture(n, rng.random_range(1..12), &mut rng);
            let p = build_partition(&m, r).unwrap();
            let check = check_partition(&m, &p).unwrap();
            assert!(check.all_ok(), "{check:?}");
            // determinism
            let again = build_partition(&m, r).unwrap();
            assert_eq!(
                p.groups.iter().map(|g| &g.representative).collect::<Vec<_>>(),
                again.groups.iter().map(|g| &g.representative).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn zero_probability_subspaces_map_to_containing_representative() {
        let m = SubspaceMixture::point_mass(hp("100", false)).unwrap();
        let p = build_partition(&m, 3.0).unwrap();
        let inside = AffineSubspace::point(bv("010"));
        assert_eq!(p.representative_for(&inside), Some(0));
        assert_eq!(p.representative_for(&AffineSubspace::empty(3).unwrap()), Some(0));
        assert_eq!(p.representative_for(&hp("100", true)), None);
    }
}
