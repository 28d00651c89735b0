//! Streaming parity learners with bounded state, their conversion to
//! explicit branching programs, and sample-complexity estimation.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use rand::Rng;
use serde::Serialize;

use crate::branching::{AffineLabels, BranchingProgram, Node};
use crate::error::{Error, Result};
use crate::gf2::{mask, parity, reduce_words, AffineSubspace, BitVector, MAX_DIM};
use crate::par::{self, Execution};
use crate::seeding::{derive, streams, trial_rng};
use crate::stats::{Proportion, Z95};

/// A deterministic learner reading samples `(a, b)`; `a` is a packed word.
pub trait Learner: Sync {
    type State: Clone + Eq + Hash + Send + Sync + fmt::Debug;

    fn id(&self) -> String;
    fn n(&self) -> usize;
    /// Declared bound on the encoded state size.
    fn memory_bits(&self) -> usize;
    fn initial(&self) -> Self::State;
    fn step(&self, state: &Self::State, a: u32, b: bool) -> Self::State;
    fn output(&self, state: &Self::State) -> AffineSubspace;
    /// The state as a bit string.
    fn encode(&self, state: &Self::State) -> Vec<bool>;

    fn encoded_bits(&self, state: &Self::State) -> usize {
        self.encode(state).len()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n >= MAX_DIM {
        return Err(Error::parameter(format!("learner dimension {n} outside 1..{MAX_DIM}")));
    }
    Ok(())
}

fn push_bits(out: &mut Vec<bool>, word: u64, len: usize) {
    out.extend((0..len).map(|i| word >> i & 1 == 1));
}

// ---------------------------------------------------------------------------
// Gaussian elimination
// ---------------------------------------------------------------------------

/// Keeps the reduced system of all equations seen; rows are `a | b << n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussianLearner {
    n: usize,
}

impl GaussianLearner {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(GaussianLearner { n })
    }

    fn inconsistent(&self, rows: &[u32]) -> bool {
        rows.first() == Some(&(1 << self.n))
    }
}

impl Learner for GaussianLearner {
    type State = Vec<u32>;

    fn id(&self) -> String {
        "gaussian".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn memory_bits(&self) -> usize {
        self.n * (self.n + 1)
    }

    fn initial(&self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&self, rows: &Vec<u32>, a: u32, b: bool) -> Vec<u32> {
        if self.inconsistent(rows) {
            return rows.clone();
        }
        let mut all = rows.clone();
        all.push(a | (b as u32) << self.n);
        let reduced = reduce_words(&all);
        if reduced.iter().any(|&r| r == 1 << self.n) {
            vec![1 << self.n]
        } else {
            reduced
        }
    }

    fn output(&self, rows: &Vec<u32>) -> AffineSubspace {
        if self.inconsistent(rows) {
            return AffineSubspace::empty(self.n).expect("n in range");
        }
        let eqs: Vec<(BitVector, bool)> =
            rows.iter().map(|&r| (BitVector::from_raw(self.n, r & mask(self.n)), r >> self.n & 1 == 1)).collect();
        AffineSubspace::from_equations(self.n, &eqs).expect("dimensions agree")
    }

    fn encode(&self, rows: &Vec<u32>) -> Vec<bool> {
        let mut out = Vec::with_capacity(rows.len() * (self.n + 1));
        for &r in rows {
            push_bits(&mut out, r as u64, self.n + 1);
        }
        out
    }

    fn encoded_bits(&self, rows: &Vec<u32>) -> usize {
        rows.len() * (self.n + 1)
    }
}

// ---------------------------------------------------------------------------
// Prefix pivots
// ---------------------------------------------------------------------------

/// Keeps `k` equations whose first `k` columns form the identity. A sample
/// is reduced by the stored rows and kept only if its first nonzero column is
/// exactly column `k + 1`; anything else is discarded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixPivotLearner {
    n: usize,
}

impl PrefixPivotLearner {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(PrefixPivotLearner { n })
    }

    fn counter_bits(&self) -> usize {
        crate::ceil_log2(self.n as u64 + 1)
    }
}

impl Learner for PrefixPivotLearner {
    /// Row `i` has its pivot at column `i`; words are `a | b << n`.
    type State = Vec<u32>;

    fn id(&self) -> String {
        "prefix_pivot".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn memory_bits(&self) -> usize {
        self.n * self.n / 4 + self.n + self.counter_bits()
    }

    fn initial(&self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&self, rows: &Vec<u32>, a: u32, b: bool) -> Vec<u32> {
        let k = rows.len();
        let mut v = a | (b as u32) << self.n;
        for (i, &r) in rows.iter().enumerate() {
            if v >> i & 1 == 1 {
                v ^= r;
            }
        }
        let a_part = v & mask(self.n);
        if k == self.n || a_part.trailing_zeros() as usize != k {
            return rows.clone();
        }
        let mut next: Vec<u32> = rows.iter().map(|&r| if r >> k & 1 == 1 { r ^ v } else { r }).collect();
        next.push(v);
        next
    }

    fn output(&self, rows: &Vec<u32>) -> AffineSubspace {
        let eqs: Vec<(BitVector, bool)> =
            rows.iter().map(|&r| (BitVector::from_raw(self.n, r & mask(self.n)), r >> self.n & 1 == 1)).collect();
        AffineSubspace::from_equations(self.n, &eqs).expect("dimensions agree")
    }

    /// `k`, then per row the `n - k` non-identity columns and `b`.
    fn encode(&self, rows: &Vec<u32>) -> Vec<bool> {
        let k = rows.len();
        let mut out = Vec::new();
        push_bits(&mut out, k as u64, self.counter_bits());
        for &r in rows {
            push_bits(&mut out, (r >> k) as u64, self.n - k);
            out.push(r >> self.n & 1 == 1);
        }
        out
    }

    fn encoded_bits(&self, rows: &Vec<u32>) -> usize {
        let k = rows.len();
        self.counter_bits() + k * (self.n - k + 1)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive search
// ---------------------------------------------------------------------------

/// Tries candidates `0, 1, 2, …` (wrapping); commits to the current one after
/// `T` consecutive consistent samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExhaustiveLearner {
    n: usize,
    cap: u32,
}

impl ExhaustiveLearner {
    pub fn new(n: usize, cap: u32) -> Result<Self> {
        check_n(n)?;
        if cap == 0 {
            return Err(Error::parameter("the counter cap must be positive"));
        }
        Ok(ExhaustiveLearner { n, cap })
    }

    /// `T = 3n`.
    pub fn with_default_cap(n: usize) -> Result<Self> {
        Self::new(n, 3 * n as u32)
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    fn counter_bits(&self) -> usize {
        crate::ceil_log2(self.cap as u64 + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candidate {
    pub guess: u32,
    pub passes: u32,
}

impl Learner for ExhaustiveLearner {
    type State = Candidate;

    fn id(&self) -> String {
        format!("exhaustive_t{}", self.cap)
    }

    fn n(&self) -> usize {
        self.n
    }

    fn memory_bits(&self) -> usize {
        self.n + self.counter_bits()
    }

    fn initial(&self) -> Candidate {
        Candidate { guess: 0, passes: 0 }
    }

    fn step(&self, s: &Candidate, a: u32, b: bool) -> Candidate {
        if parity(a & s.guess) != b {
            Candidate { guess: (s.guess + 1) & mask(self.n), passes: 0 }
        } else {
            Candidate { guess: s.guess, passes: (s.passes + 1).min(self.cap) }
        }
    }

    fn output(&self, s: &Candidate) -> AffineSubspace {
        if s.passes >= self.cap {
            AffineSubspace::point(BitVector::from_raw(self.n, s.guess))
        } else {
            AffineSubspace::full(self.n).expect("n in range")
        }
    }

    fn encode(&self, s: &Candidate) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.memory_bits());
        push_bits(&mut out, s.guess as u64, self.n);
        push_bits(&mut out, s.passes as u64, self.counter_bits());
        out
    }

    fn encoded_bits(&self, _: &Candidate) -> usize {
        self.n + self.counter_bits()
    }
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

fn checked<L: Learner>(learner: &L, state: &L::State) -> Result<()> {
    let used = learner.encoded_bits(state);
    let bound = learner.memory_bits();
    if used > bound {
        return Err(Error::MemoryBound { used, bound });
    }
    Ok(())
}

/// Runs `m` noiseless samples for key `x`; every state is checked against
/// the memory bound.
pub fn run_learner<L: Learner, R: Rng + ?Sized>(learner: &L, x: u32, m: usize, rng: &mut R) -> Result<L::State> {
    let n = learner.n();
    let mut state = learner.initial();
    checked(learner, &state)?;
    for _ in 0..m {
        let a = rng.random::<u32>() & mask(n);
        state = learner.step(&state, a, parity(a & x));
        checked(learner, &state)?;
    }
    Ok(state)
}

/// Monte Carlo estimate of `Pr[output = {x}]` after `m` samples.
pub fn simulate_recovery<L: Learner>(learner: &L, m: usize, trials: u64, seed: u64, exec: Execution) -> Result<Proportion> {
    if trials == 0 {
        return Err(Error::parameter("trials must be positive"));
    }
    let n = learner.n();
    let outcomes: Vec<Result<bool>> = par::map_indices(exec, trials as usize, |i| {
        let mut rng = trial_rng(seed, streams::LEARNER, i as u64);
        let x = rng.random::<u32>() & mask(n);
        let state = run_learner(learner, x, m, &mut rng)?;
        let out = learner.output(&state);
        Ok(out.is_point() && out.contains_word(x))
    });
    let mut hits = 0;
    for o in outcomes {
        hits += o? as u64;
    }
    Ok(Proportion::wilson(hits, trials, Z95))
}

/// The branching program whose layer-`t` vertices are the states reachable
/// after `t` arbitrary samples, in breadth-first discovery order.
pub struct LearnerProgram<S> {
    pub program: BranchingProgram,
    pub states: Vec<Vec<S>>,
}

pub fn learner_to_bp<L: Learner>(learner: &L, m: usize, budget: u128) -> Result<LearnerProgram<L::State>> {
    let n = learner.n();
    if n > crate::distributions::MAX_TABLE_DIM {
        return Err(Error::AmbientTooLarge(n));
    }
    let fan_out = 1usize << (n + 1);
    let mut states: Vec<Vec<L::State>> = vec![vec![learner.initial()]];
    let mut layers: Vec<Vec<Node>> = Vec::with_capacity(m + 1);
    let mut work: u128 = 0;
    for t in 0..m {
        work += (states[t].len() * fan_out) as u128;
        if work > budget {
            return Err(Error::Budget { what: "learner state enumeration", needed: work, budget });
        }
        let mut index: HashMap<L::State, u32> = HashMap::new();
        let mut next: Vec<L::State> = Vec::new();
        let mut layer = Vec::with_capacity(states[t].len());
        for s in &states[t] {
            checked(learner, s)?;
            let mut targets = Vec::with_capacity(fan_out);
            for e in 0..fan_out {
                let ns = learner.step(s, (e >> 1) as u32, e & 1 == 1);
                let id = *index.entry(ns.clone()).or_insert_with(|| {
                    next.push(ns);
                    (next.len() - 1) as u32
                });
                targets.push(id);
            }
            layer.push(Node::Inner(targets));
        }
        layers.push(layer);
        states.push(next);
    }
    for s in &states[m] {
        checked(learner, s)?;
    }
    layers.push(states[m].iter().map(|s| Node::Leaf(learner.output(s))).collect());
    let width = layers.iter().map(Vec::len).max().unwrap_or(1);
    Ok(LearnerProgram { program: BranchingProgram::new(n, width, layers)?, states })
}

impl<S> LearnerProgram<S> {
    /// Labels every vertex with the learner's output in that state.
    pub fn output_labels<L: Learner<State = S>>(&self, learner: &L) -> Result<AffineLabels> {
        AffineLabels::new(
            &self.program,
            self.states.iter().map(|layer| layer.iter().map(|s| learner.output(s)).collect()).collect(),
        )
    }
}

/// `Π_{i=0}^{n-1} (1 - 2^{i-m})`: the probability that `m` uniform vectors span `{0,1}^n`.
pub fn full_rank_probability(n: usize, m: usize) -> f64 {
    (0..n).map(|i| 1.0 - (i as f64 - m as f64).exp2()).product::<f64>().max(0.0)
}

// ---------------------------------------------------------------------------
// Sample complexity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub learner: String,
    pub n: usize,
    pub memory_bits: usize,
    /// Smallest `m` found; when `capped`, the search stopped at this cap
    /// without reaching the target.
    pub m: u64,
    pub capped: bool,
    pub success: f64,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

impl TradeoffPoint {
    pub const CSV_HEADER: &'static str = "learner,n,memory_bits,m,success,ci_halfwidth,seed";

    pub fn csv_row(&self) -> String {
        let m = if self.capped { format!(">={}", self.m) } else { self.m.to_string() };
        format!(
            "{},{},{},{},{},{},{}",
            self.learner, self.n, self.memory_bits, m, self.success, self.ci_halfwidth, self.seed
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub target: f64,
    pub trials: u64,
    pub cap: u64,
    pub seed: u64,
    pub execution: Execution,
}

/// Doubling then bisection for the smallest `m` whose Wilson lower bound
/// reaches the target. Every `m` uses its own derived seed.
pub fn estimate_sample_complexity<L: Learner>(learner: &L, cfg: &SearchConfig) -> Result<TradeoffPoint> {
    if !(cfg.target > 0.0 && cfg.target < 1.0) {
        return Err(Error::parameter("target must lie in (0, 1)"));
    }
    if cfg.cap == 0 || cfg.trials == 0 {
        return Err(Error::parameter("cap and trials must be positive"));
    }
    let mut cache: HashMap<u64, Proportion> = HashMap::new();
    let mut eval = |m: u64| -> Result<Proportion> {
        if let Some(p) = cache.get(&m) {
            return Ok(*p);
        }
        let seed = derive(cfg.seed, streams::LEARNER, m);
        let p = simulate_recovery(learner, m as usize, cfg.trials, seed, cfg.execution)?;
        cache.insert(m, p);
        Ok(p)
    };
    let point = |m: u64, p: &Proportion, capped: bool| TradeoffPoint {
        learner: learner.id(),
        n: learner.n(),
        memory_bits: learner.memory_bits(),
        m,
        capped,
        success: p.estimate,
        ci_halfwidth: p.half_width(),
        seed: cfg.seed,
    };
    let mut lo = 0u64;
    let mut hi = 1u64.min(cfg.cap);
    loop {
        let p = eval(hi)?;
        if p.lower >= cfg.target {
            break;
        }
        if hi >= cfg.cap {
            return Ok(point(cfg.cap, &p, true));
        }
        lo = hi;
        hi = (hi * 2).min(cfg.cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)?.lower >= cfg.target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = eval(hi)?;
    Ok(point(hi, &p, false))
}
