//! Bit-packed linear algebra over GF(2).
//!
//! Vectors live in a single `u32` word: bit `i` of the word is coordinate
//! `i + 1`, so coordinate 1 is the least significant bit. Every subspace is
//! kept in reduced row echelon form where the pivot of a row is its lowest
//! set coordinate, rows are sorted by pivot, and each pivot column holds a
//! single 1. Affine subspaces additionally reduce their offset against the
//! direction basis, so two cosets are equal exactly when their fields are.
//!
//! Textual form (used by golden files and program JSON): `offset|row1,row2`
//! with every vector written as an `n`-character 0/1 string, coordinate 1
//! leftmost. The empty subspace prints as `EMPTY`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 24;

#[inline]
pub(crate) fn parity(w: u32) -> bool {
    w.count_ones() & 1 == 1
}

#[inline]
fn lowest_bit(w: u32) -> u32 {
    w & w.wrapping_neg()
}

#[inline]
pub(crate) fn mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

fn check_ambient(n: usize) -> Result<()> {
    if n > MAX_DIM {
        Err(Error::AmbientTooLarge(n))
    } else {
        Ok(())
    }
}

/// Gauss-Jordan reduction of raw rows in place; the result is the RREF basis.
pub(crate) fn reduce_words(rows: &[u32]) -> Vec<u32> {
    let mut basis: Vec<u32> = Vec::with_capacity(rows.len());
    for &row in rows {
        let v = reduce_against(&basis, row);
        if v == 0 {
            continue;
        }
        let p = lowest_bit(v);
        for b in basis.iter_mut() {
            if *b & p != 0 {
                *b ^= v;
            }
        }
        basis.push(v);
    }
    basis.sort_unstable_by_key(|b| b.trailing_zeros());
    basis
}

#[inline]
fn reduce_against(basis: &[u32], mut v: u32) -> u32 {
    for &b in basis {
        if v & lowest_bit(b) != 0 {
            v ^= b;
        }
    }
    v
}

// ---------------------------------------------------------------------------
// BitVector
// ---------------------------------------------------------------------------

/// A vector in `{0,1}^n`, `n <= 24`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    n: u8,
    bits: u32,
}

impl BitVector {
    pub fn new(n: usize, bits: u32) -> Result<Self> {
        check_ambient(n)?;
        if bits & !mask(n) != 0 {
            return Err(Error::parameter(format!("bits {bits:#x} exceed dimension {n}")));
        }
        Ok(BitVector { n: n as u8, bits })
    }

    /// Builds a vector without validation; callers guarantee `bits < 2^n`.
    #[inline]
    pub(crate) fn from_raw(n: usize, bits: u32) -> Self {
        debug_assert!(n <= MAX_DIM && bits & !mask(n) == 0);
        BitVector { n: n as u8, bits }
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(n, 0)
    }

    /// Unit vector with a 1 at 0-based coordinate `i` (coordinate `i + 1`).
    pub fn unit(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::parameter(format!("coordinate {i} outside dimension {n}")));
        }
        Self::new(n, 1 << i)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::from_raw(n, rng.random::<u32>() & mask(n))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.n() && (self.bits >> i) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector> {
        check_dim(self.n(), other.n())?;
        Ok(Self::from_raw(self.n(), self.bits ^ other.bits))
    }

    /// Inner product modulo 2.
    pub fn dot(&self, other: &BitVector) -> Result<bool> {
        check_dim(self.n(), other.n())?;
        Ok(parity(self.bits & other.bits))
    }
}

/// `a · x mod 2`.
pub fn inner_product(a: &BitVector, x: &BitVector) -> Result<bool> {
    a.dot(x)
}

pub(crate) fn write_bits(f: &mut impl fmt::Write, n: usize, bits: u32) -> fmt::Result {
    for i in 0..n {
        f.write_char(if (bits >> i) & 1 == 1 { '1' } else { '0' })?;
    }
    Ok(())
}

pub(crate) fn bits_to_string(n: usize, bits: u32) -> String {
    let mut s = String::with_capacity(n);
    write_bits(&mut s, n, bits).expect("writing to a String cannot fail");
    s
}

fn parse_bits(s: &str) -> Result<(usize, u32)> {
    let n = s.len();
    check_ambient(n)?;
    let mut bits = 0u32;
    for (i, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => bits |= 1 << i,
            _ => return Err(Error::parameter(format!("invalid bit character {c:?} in {s:?}"))),
        }
    }
    Ok((n, bits))
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bits(f, self.n(), self.bits)
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, bits) = parse_bits(s.trim())?;
        Ok(Self::from_raw(n, bits))
    }
}

// ---------------------------------------------------------------------------
// VectorSubspace
// ---------------------------------------------------------------------------

/// A linear subspace of `{0,1}^n` stored as its RREF basis.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VectorSubspace {
    n: u8,
    rows: Vec<u32>,
}

impl VectorSubspace {
    pub fn zero(n: usize) -> Result<Self> {
        check_ambient(n)?;
        Ok(Self::from_rref(n, Vec::new()))
    }

    pub fn full(n: usize) -> Result<Self> {
        check_ambient(n)?;
        Ok(Self::from_rref(n, (0..n).map(|i| 1u32 << i).collect()))
    }

    pub fn span(n: usize, vectors: &[BitVector]) -> Result<Self> {
        rref(n, vectors).map(|(basis, _)| basis)
    }

    #[inline]
    pub(crate) fn from_rref(n: usize, rows: Vec<u32>) -> Self {
        VectorSubspace { n: n as u8, rows }
    }

    pub(crate) fn from_words(n: usize, words: &[u32]) -> Self {
        Self::from_rref(n, reduce_words(words))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn basis(&self) -> Vec<BitVector> {
        self.rows.iter().map(|&r| BitVector::from_raw(self.n(), r)).collect()
    }

    #[inline]
    pub(crate) fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub(crate) fn pivot_mask(&self) -> u32 {
        self.rows.iter().fold(0, |m, &r| m | lowest_bit(r))
    }

    /// Reduces `v` modulo the subspace; zero iff `v` is in it.
    #[inline]
    pub(crate) fn reduce(&self, v: u32) -> u32 {
        reduce_against(&self.rows, v)
    }

    #[inline]
    pub(crate) fn contains_word(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }

    pub fn contains(&self, v: &BitVector) -> Result<bool> {
        check_dim(self.n(), v.n())?;
        Ok(self.contains_word(v.bits))
    }

    pub fn is_subspace_of(&self, other: &VectorSubspace) -> Result<bool> {
        check_dim(other.n(), self.n())?;
        Ok(self.rows.iter().all(|&r| other.contains_word(r)))
    }

    pub fn sum(&self, other: &VectorSubspace) -> Result<VectorSubspace> {
        check_dim(self.n(), other.n())?;
        let mut words = self.rows.clone();
        words.extend_from_slice(&other.rows);
        Ok(Self::from_words(self.n(), &words))
    }

    /// `{a : a · v = 0 for every v in self}`.
    pub fn annihilator(&self) -> VectorSubspace {
        let n = self.n();
        let pivots = self.pivot_mask();
        let mut out = Vec::with_capacity(n - self.dim());
        for f in 0..n {
            let fb = 1u32 << f;
            if pivots & fb != 0 {
                continue;
            }
            let mut v = fb;
            for &r in &self.rows {
                if r & fb != 0 {
                    v |= lowest_bit(r);
                }
            }
            out.push(v);
        }
        Self::from_words(n, &out)
    }

    pub fn intersection(&self, other: &VectorSubspace) -> Result<VectorSubspace> {
        Ok(self.annihilator().sum(&other.annihilator())?.annihilator())
    }

    /// All `2^dim` elements, in the order of the binary counter over the basis.
    pub fn elements(&self) -> impl Iterator<Item = BitVector> + '_ {
        let n = self.n();
        (0u64..(1u64 << self.dim())).map(move |c| BitVector::from_raw(n, self.combine(0, c)))
    }

    #[inline]
    pub(crate) fn combine(&self, start: u32, coeffs: u64) -> u32 {
        let mut v = start;
        let mut c = coeffs;
        let mut i = 0;
        while c != 0 {
            if c & 1 == 1 {
                v ^= self.rows[i];
            }
            c >>= 1;
            i += 1;
        }
        v
    }
}

impl fmt::Debug for VectorSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("span{")?;
        for (i, &r) in self.rows.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write_bits(f, self.n(), r)?;
        }
        f.write_str("}")
    }
}

/// Row reduction of `rows` (all of dimension `n`); returns the RREF basis and the rank.
pub fn rref(n: usize, rows: &[BitVector]) -> Result<(VectorSubspace, usize)> {
    check_ambient(n)?;
    for r in rows {
        check_dim(n, r.n())?;
    }
    let words: Vec<u32> = rows.iter().map(|r| r.bits).collect();
    let basis = VectorSubspace::from_words(n, &words);
    let rank = basis.dim();
    Ok((basis, rank))
}

// ---------------------------------------------------------------------------
// AffineSubspace
// ---------------------------------------------------------------------------

/// An affine subspace (coset) of `{0,1}^n`, or the empty set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AffineSubspace {
    Empty { n: u8 },
    Coset { direction: VectorSubspace, offset: u32 },
}

impl AffineSubspace {
    pub fn empty(n: usize) -> Result<Self> {
        check_ambient(n)?;
        Ok(AffineSubspace::Empty { n: n as u8 })
    }

    /// The whole space `{0,1}^n`.
    pub fn full(n: usize) -> Result<Self> {
        Ok(Self::from_canonical(VectorSubspace::full(n)?, 0))
    }

    pub fn point(x: BitVector) -> Self {
        Self::from_canonical(VectorSubspace::from_rref(x.n(), Vec::new()), x.bits)
    }

    /// `offset + span(generators)` in canonical form.
    pub fn coset(offset: BitVector, generators: &[BitVector]) -> Result<Self> {
        let dir = VectorSubspace::span(offset.n(), generators)?;
        Ok(Self::from_direction(dir, offset.bits))
    }

    pub fn from_parts(direction: VectorSubspace, offset: BitVector) -> Result<Self> {
        check_dim(direction.n(), offset.n())?;
        Ok(Self::from_direction(direction, offset.bits))
    }

    /// `{x : a · x = b}`; `a = 0` gives the whole space or the empty set.
    pub fn hyperplane(a: BitVector, b: bool) -> Result<Self> {
        Self::full(a.n())?.intersect_hyperplane(&a, b)
    }

    /// Solution set of the linear system `a_i · x = b_i`.
    pub fn from_equations(n: usize, equations: &[(BitVector, bool)]) -> Result<Self> {
        let mut w = Self::full(n)?;
        for (a, b) in equations {
            check_dim(n, a.n())?;
            w = w.intersect_word(a.bits, *b);
        }
        Ok(w)
    }

    #[inline]
    pub(crate) fn from_canonical(direction: VectorSubspace, offset: u32) -> Self {
        AffineSubspace::Coset { direction, offset }
    }

    #[inline]
    pub(crate) fn from_direction(direction: VectorSubspace, offset: u32) -> Self {
        let offset = direction.reduce(offset);
        AffineSubspace::Coset { direction, offset }
    }

    pub(crate) fn from_words(n: usize, offset: u32, generators: &[u32]) -> Self {
        Self::from_direction(VectorSubspace::from_words(n, generators), offset)
    }

    pub fn n(&self) -> usize {
        match self {
            AffineSubspace::Empty { n } => *n as usize,
            AffineSubspace::Coset { direction, .. } => direction.n(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, AffineSubspace::Empty { .. })
    }

    /// Dimension; `None` for the empty set.
    pub fn dim(&self) -> Option<usize> {
        match self {
            AffineSubspace::Empty { .. } => None,
            AffineSubspace::Coset { direction, .. } => Some(direction.dim()),
        }
    }

    pub fn direction(&self) -> Option<&VectorSubspace> {
        match self {
            AffineSubspace::Empty { .. } => None,
            AffineSubspace::Coset { direction, .. } => Some(direction),
        }
    }

    pub fn offset(&self) -> Option<BitVector> {
        match self {
            AffineSubspace::Empty { .. } => None,
            AffineSubspace::Coset { direction, offset } => Some(BitVector::from_raw(direction.n(), *offset)),
        }
    }

    pub(crate) fn offset_word(&self) -> Option<u32> {
        match self {
            AffineSubspace::Empty { .. } => None,
            AffineSubspace::Coset { offset, .. } => Some(*offset),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, AffineSubspace::Coset { direction, .. } if direction.dim() == direction.n())
    }

    pub fn is_point(&self) -> bool {
        self.dim() == Some(0)
    }

    pub fn len(&self) -> u64 {
        match self.dim() {
            None => 0,
            Some(d) => 1u64 << d,
        }
    }

    #[inline]
    pub(crate) fn contains_word(&self, x: u32) -> bool {
        match self {
            AffineSubspace::Empty { .. } => false,
            AffineSubspace::Coset { direction, offset } => direction.contains_word(x ^ offset),
        }
    }

    pub fn contains(&self, x: &BitVector) -> Result<bool> {
        check_dim(self.n(), x.n())?;
        Ok(self.contains_word(x.bits))
    }

    /// `self ⊆ other` as point sets.
    pub fn is_subset(&self, other: &AffineSubspace) -> Result<bool> {
        check_dim(self.n(), other.n())?;
        Ok(self.is_subset_unchecked(other))
    }

    pub(crate) fn is_subset_unchecked(&self, other: &AffineSubspace) -> bool {
        match (self, other) {
            (AffineSubspace::Empty { .. }, _) => true,
            (_, AffineSubspace::Empty { .. }) => false,
            (
                AffineSubspace::Coset { direction: d1, offset: o1 },
                AffineSubspace::Coset { direction: d2, offset: o2 },
            ) => {
                d1.dim() <= d2.dim()
                    && d2.contains_word(o1 ^ o2)
                    && d1.rows().iter().all(|&r| d2.contains_word(r))
            }
        }
    }

    /// `self ∩ {x : a · x = b}` in canonical form.
    pub fn intersect_hyperplane(&self, a: &BitVector, b: bool) -> Result<AffineSubspace> {
        check_dim(self.n(), a.n())?;
        Ok(self.intersect_word(a.bits, b))
    }

    pub(crate) fn intersect_word(&self, a: u32, b: bool) -> AffineSubspace {
        match self {
            AffineSubspace::Empty { .. } => self.clone(),
            AffineSubspace::Coset { direction, offset } => {
                let rows = direction.rows();
                match rows.iter().rposition(|&r| parity(r & a)) {
                    None => {
                        if parity(a & offset) == b {
                            self.clone()
                        } else {
                            AffineSubspace::Empty { n: direction.n }
                        }
                    }
                    Some(j) => {
                        let pj = rows[j];
                        let rest: Vec<u32> = rows
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != j)
                            .map(|(_, &r)| if parity(r & a) { r ^ pj } else { r })
                            .collect();
                        let off = if parity(a & offset) != b { offset ^ pj } else { *offset };
                        AffineSubspace::from_words(direction.n(), off, &rest)
                    }
                }
            }
        }
    }

    /// The vector space of all `a` that are constant on `self`.
    pub fn orthogonal_space(&self) -> Result<VectorSubspace> {
        match self {
            AffineSubspace::Empty { .. } => Err(Error::Domain("orthogonal space of the empty subspace")),
            AffineSubspace::Coset { direction, .. } => Ok(direction.annihilator()),
        }
    }

    /// Uniform point of the subspace.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BitVector> {
        match self {
            AffineSubspace::Empty { .. } => Err(Error::Domain("sampling from the empty subspace")),
            AffineSubspace::Coset { direction, offset } => {
                let coeffs = if direction.dim() == 0 { 0 } else { rng.random::<u64>() & ((1u64 << direction.dim()) - 1) };
                Ok(BitVector::from_raw(direction.n(), direction.combine(*offset, coeffs)))
            }
        }
    }

    /// Points as raw words, in basis-counter order.
    pub(crate) fn point_words(&self) -> Vec<u32> {
        match self {
            AffineSubspace::Empty { .. } => Vec::new(),
            AffineSubspace::Coset { direction, offset } => {
                (0u64..(1u64 << direction.dim())).map(|c| direction.combine(*offset, c)).collect()
            }
        }
    }

    pub fn points(&self) -> Vec<BitVector> {
        let n = self.n();
        self.point_words().into_iter().map(|w| BitVector::from_raw(n, w)).collect()
    }
}

impl fmt::Display for AffineSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AffineSubspace::Empty { .. } => f.write_str("EMPTY"),
            AffineSubspace::Coset { direction, offset } => {
                write_bits(f, direction.n(), *offset)?;
                f.write_str("|")?;
                for (i, &r) in direction.rows().iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write_bits(f, direction.n(), r)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for AffineSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Affine({self})")
    }
}

impl AffineSubspace {
    /// Parses the textual form. `EMPTY` carries no dimension, so the caller supplies `n`.
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let s = s.trim();
        if s == "EMPTY" {
            return Self::empty(n);
        }
        let (off, rows) = s
            .split_once('|')
            .ok_or_else(|| Error::parameter(format!("missing '|' in affine subspace {s:?}")))?;
        let (on, offset) = parse_bits(off)?;
        check_dim(n, on)?;
        let mut gens = Vec::new();
        if !rows.is_empty() {
            for r in rows.split(',') {
                let (rn, bits) = parse_bits(r)?;
                check_dim(n, rn)?;
                gens.push(bits);
            }
        }
        Ok(Self::from_words(n, offset, &gens))
    }
}

/// Random generators used by tests, benches and the verification suites.
pub mod gen {
    use super::*;

    /// A uniformly random linear subspace of exact dimension `dim` is not
    /// required anywhere; this draws random vectors until the span has `dim`.
    pub fn random_subspace<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> VectorSubspace {
        assert!(dim <= n && n <= MAX_DIM);
        let mut words: Vec<u32> = Vec::new();
        while words.len() < dim {
            let v = rng.random::<u32>() & mask(n);
            let mut candidate = words.clone();
            candidate.push(v);
            let reduced = reduce_words(&candidate);
            if reduced.len() > words.len() {
                words = reduced;
            }
        }
        VectorSubspace::from_rref(n, words)
    }

    pub fn random_affine<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> AffineSubspace {
        let dir = random_subspace(n, dim, rng);
        let off = rng.random::<u32>() & mask(n);
        AffineSubspace::from_direction(dir, off)
    }

    /// Every non-empty affine subspace of `{0,1}^n`, in a deterministic order.
    pub fn all_affine(n: usize) -> Vec<AffineSubspace> {
        assert!(n <= 5, "exhaustive enumeration only for tiny n");
        let mut out = std::collections::BTreeSet::new();
        let size = 1u32 << n;
        // Every linear subspace is the span of at most n vectors; enumerate
        // them incrementally to avoid the 2^(n^2) blow-up.
        let mut spaces: std::collections::BTreeSet<Vec<u32>> = std::collections::BTreeSet::new();
        spaces.insert(Vec::new());
        let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
        while let Some(rows) = frontier.pop() {
            for v in 1..size {
                let mut words = rows.clone();
                words.push(v);
                let r = reduce_words(&words);
                if r.len() > rows.len() && spaces.insert(r.clone()) {
                    frontier.push(r);
                }
            }
        }
        for rows in spaces {
            let dir = VectorSubspace::from_rref(n, rows);
            for off in 0..size {
                out.insert(AffineSubspace::from_direction(dir.clone(), off));
            }
        }
        out.into_iter().collect()
    }
}
