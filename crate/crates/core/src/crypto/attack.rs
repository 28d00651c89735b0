//! Memory-bounded attackers against the bit cipher, and the harness that
//! measures them.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf2::{mask, parity, reduce_words, AffineSubspace, MAX_DIM};
use crate::par::{self, Execution};
use crate::seeding::{streams, trial_rng};
use crate::stats::{Proportion, Z95};

/// What the attacker sees for each frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreatModel {
    /// The plaintext is known, so each frame reveals `(a, a·x)`.
    #[default]
    KnownPlaintext,
    /// Only `(a, M ⊕ a·x)` with uniform unknown `M`.
    CiphertextOnly,
}

pub trait Attacker: Sync {
    type State: Clone + Send;

    fn id(&self) -> String;
    fn n(&self) -> usize;
    fn memory_bits(&self) -> usize;
    fn initial(&self) -> Self::State;
    fn observe(&self, state: &mut Self::State, a: u32, c: bool);
    /// Bits needed to encode `state`; the harness rejects anything above `memory_bits`.
    fn state_bits(&self, state: &Self::State) -> usize;
    fn guess_key<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> u32;
    fn predict_bit<R: Rng + ?Sized>(&self, state: &Self::State, a: u32, rng: &mut R) -> bool;
}

/// Keeps the most recent `⌊s/(n+1)⌋` frames and guesses a uniform key
/// consistent with them.
#[derive(Clone, Debug)]
pub struct WindowAttacker {
    n: usize,
    s: usize,
}

impl WindowAttacker {
    pub fn new(n: usize, s: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::AmbientTooLarge(n));
        }
        Ok(WindowAttacker { n, s })
    }

    pub fn window(&self) -> usize {
        self.s / (self.n + 1)
    }

    fn solution_space(&self, rows: &VecDeque<u32>) -> Option<AffineSubspace> {
        let n = self.n;
        let words: Vec<u32> = rows.iter().copied().collect();
        let reduced = reduce_words(&words);
        if reduced.iter().any(|&r| r == 1 << n) {
            return None;
        }
        // Each reduced row is `a | b<<n` with a distinct pivot among the low n bits.
        let mut generators = Vec::new();
        let mut offset = 0u32;
        let pivots: u32 = reduced.iter().map(|&r| r & r.wrapping_neg()).fold(0, |acc, p| acc | p);
        for &r in &reduced {
            if r >> n & 1 == 1 {
                offset |= r & r.wrapping_neg();
            }
        }
        for free in (0..n).map(|i| 1u32 << i).filter(|f| pivots & f == 0) {
            let mut g = free;
            for &r in &reduced {
                if r & free != 0 {
                    g |= r & r.wrapping_neg();
                }
            }
            generators.push(g);
        }
        Some(AffineSubspace::from_words(n, offset, &generators))
    }
}

impl Attacker for WindowAttacker {
    type State = VecDeque<u32>;

    fn id(&self) -> String {
        format!("window_s{}", self.s)
    }

    fn n(&self) -> usize {
        self.n
    }

    fn memory_bits(&self) -> usize {
        self.s
    }

    fn initial(&self) -> Self::State {
        VecDeque::with_capacity(self.window())
    }

    fn observe(&self, state: &mut Self::State, a: u32, c: bool) {
        if self.window() == 0 {
            return;
        }
        if state.len() == self.window() {
            state.pop_front();
        }
        state.push_back(a | (c as u32) << self.n);
    }

    fn state_bits(&self, state: &Self::State) -> usize {
        state.len() * (self.n + 1)
    }

    fn guess_key<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> u32 {
        match self.solution_space(state) {
            Some(space) => space.sample_point(rng).map(|p| p.bits()).unwrap_or(0),
            None => rng.random::<u32>() & mask(self.n),
        }
    }

    fn predict_bit<R: Rng + ?Sized>(&self, state: &Self::State, a: u32, rng: &mut R) -> bool {
        parity(a & self.guess_key(state, rng))
    }
}

/// Stores nothing and always answers with the same key.
#[derive(Clone, Debug)]
pub struct FixedGuessAttacker {
    n: usize,
    guess: u32,
}

impl FixedGuessAttacker {
    pub fn new(n: usize, guess: u32) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::AmbientTooLarge(n));
        }
        Ok(FixedGuessAttacker { n, guess: guess & mask(n) })
    }
}

impl Attacker for FixedGuessAttacker {
    type State = ();

    fn id(&self) -> String {
        "fixed_guess".into()
    }

    fn n(&self) -> usize {
        self.n
    }

    fn memory_bits(&self) -> usize {
        0
    }

    fn initial(&self) {}

    fn observe(&self, _: &mut (), _: u32, _: bool) {}

    fn state_bits(&self, _: &()) -> usize {
        0
    }

    fn guess_key<R: Rng + ?Sized>(&self, _: &(), _: &mut R) -> u32 {
        self.guess
    }

    fn predict_bit<R: Rng + ?Sized>(&self, _: &(), a: u32, _: &mut R) -> bool {
        parity(a & self.guess)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttackConfig {
    /// Frames observed before the attacker's state is frozen.
    pub frames: usize,
    pub trials: u64,
    pub seed: u64,
    pub threat: ThreatModel,
    pub execution: Execution,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub attacker: String,
    pub n: usize,
    pub memory_bits: usize,
    pub frames: usize,
    pub trials: u64,
    pub seed: u64,
    pub threat_model: ThreatModel,
    pub key_guess: Proportion,
    pub key_guess_rate: f64,
    /// `Pr[prediction = a·x] − ½` for a fresh `a` revealed after the state is frozen.
    pub next_bit_advantage: f64,
    pub next_bit_advantage_ci: f64,
    pub max_state_bits: usize,
}

struct TrialOutcome {
    key_hit: bool,
    bit_hit: bool,
    max_bits: usize,
}

/// Runs independent trials: fresh key, `frames` observed frames, then a key
/// guess and a prediction of the pad bit of one more frame.
pub fn run_attack<A: Attacker>(attacker: &A, cfg: &AttackConfig) -> Result<AttackReport> {
    if cfg.trials == 0 {
        return Err(Error::parameter("trials must be positive"));
    }
    let n = attacker.n();
    let bound = attacker.memory_bits();
    let outcomes: Vec<Result<TrialOutcome>> = par::map_indices(cfg.execution, cfg.trials as usize, |i| {
        let mut rng = trial_rng(cfg.seed, streams::ATTACK, i as u64);
        let x = rng.random::<u32>() & mask(n);
        let mut state = attacker.initial();
        let mut max_bits = attacker.state_bits(&state);
        for _ in 0..cfg.frames {
            let a = rng.random::<u32>() & mask(n);
            let pad = parity(a & x);
            let c = match cfg.threat {
                ThreatModel::KnownPlaintext => pad,
                ThreatModel::CiphertextOnly => pad ^ rng.random::<bool>(),
            };
            attacker.observe(&mut state, a, c);
            let used = attacker.state_bits(&state);
            if used > bound {
                return Err(Error::MemoryBound { used, bound });
            }
            max_bits = max_bits.max(used);
        }
        let key_hit = attacker.guess_key(&state, &mut rng) == x;
        let a = rng.random::<u32>() & mask(n);
        let bit_hit = attacker.predict_bit(&state, a, &mut rng) == parity(a & x);
        Ok(TrialOutcome { key_hit, bit_hit, max_bits })
    });
    let (mut keys, mut bits, mut max_state_bits) = (0u64, 0u64, 0usize);
    for o in outcomes {
        let o = o?;
        keys += o.key_hit as u64;
        bits += o.bit_hit as u64;
        max_state_bits = max_state_bits.max(o.max_bits);
    }
    let key_guess = Proportion::wilson(keys, cfg.trials, Z95);
    let next_bit = Proportion::wilson(bits, cfg.trials, Z95);
    Ok(AttackReport {
        attacker: attacker.id(),
        n,
        memory_bits: bound,
        frames: cfg.frames,
        trials: cfg.trials,
        seed: cfg.seed,
        threat_model: cfg.threat,
        key_guess_rate: key_guess.estimate,
        key_guess,
        next_bit_advantage: next_bit.estimate - 0.5,
        next_bit_advantage_ci: next_bit.half_width(),
        max_state_bits,
    })
}

/// `Pr[rank = r]` for `w` independent uniform vectors in `F_2^n`, `r = 0..=min(n, w)`.
pub fn rank_distribution(n: usize, w: usize) -> Vec<f64> {
    let top = n.min(w);
    (0..=top)
        .map(|r| {
            let mut p = (-(((w - r) * (n - r)) as f64)).exp2();
            for i in 0..r {
                let i = i as f64;
                p *= (1.0 - (i - w as f64).exp2()) * (1.0 - (i - n as f64).exp2()) / (1.0 - (i - r as f64).exp2());
            }
            p
        })
        .collect()
}

/// Exact key-guess rate of a window attacker holding `w` known-plaintext
/// frames: a uniform point of a solution space of dimension `n − rank`.
pub fn expected_window_guess_rate(n: usize, w: usize) -> f64 {
    rank_distribution(n, w).iter().enumerate().map(|(r, p)| p * (r as f64 - n as f64).exp2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(frames: usize, trials: u64, seed: u64) -> AttackConfig {
        AttackConfig { frames, trials, seed, threat: ThreatModel::KnownPlaintext, execution: Execution::default() }
    }

    fn brute_rank_counts(n: usize, w: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n.min(w) + 1];
        for m in 0..1u64 << (n * w) {
            let rows: Vec<u32> = (0..w).map(|j| (m >> (j * n)) as u32 & mask(n)).collect();
            counts[reduce_words(&rows).len()] += 1;
        }
        counts
    }

    #[test]
    fn rank_distribution_matches_enumeration() {
        for (n, w) in [(1, 1), (2, 2), (2, 3), (3, 2), (3, 3), (3, 4), (4, 3)] {
            let total = (1u64 << (n * w)) as f64;
            let exact = brute_rank_counts(n, w);
            let formula = rank_distribution(n, w);
            for (c, p) in exact.iter().zip(&formula) {
                assert!((*c as f64 / total - p).abs() < 1e-12, "n={n} w={w}");
            }
        }
        let full: f64 = (0..6).map(|i| 1.0 - (i as f64 - 10.0).exp2()).product();
        assert!((rank_distribution(6, 10)[6] - full).abs() < 1e-12);
    }

    #[test]
    fn solution_space_contains_the_key() {
        let att = WindowAttacker::new(6, 7 * 4).unwrap();
        let mut rng = trial_rng(1, 0, 0);
        for _ in 0..200 {
            let x = rng.random::<u32>() & mask(6);
            let mut st = att.initial();
            for _ in 0..4 {
                let a = rng.random::<u32>() & mask(6);
                att.observe(&mut st, a, parity(a & x));
            }
            let space = att.solution_space(&st).unwrap();
            assert!(space.contains_word(x));
            let rank = reduce_words(&st.iter().map(|r| r & mask(6)).collect::<Vec<_>>()).len();
            assert_eq!(space.dim(), Some(6 - rank));
            for p in space.points() {
                assert!(st.iter().all(|&r| parity(r & mask(6) & p.bits()) == (r >> 6 & 1 == 1)));
            }
        }
        let mut bad = att.initial();
        att.observe(&mut bad, 1, false);
        att.observe(&mut bad, 1, true);
        assert!(att.solution_space(&bad).is_none());
    }

    #[test]
    fn zero_memory_guesses_uniformly() {
        let n = 6;
        let rep = run_attack(&WindowAttacker::new(n, 0).unwrap(), &cfg(20, 100_000, 11)).unwrap();
        assert_eq!(rep.max_state_bits, 0);
        assert!(rep.key_guess.within_sigmas(1.0 / 64.0, 3.0), "{rep:?}");
        assert!(rep.next_bit_advantage.abs() < 4.0 * Proportion::sigma_at(0.5, 100_000));
        let fixed = run_attack(&FixedGuessAttacker::new(n, 5).unwrap(), &cfg(20, 100_000, 12)).unwrap();
        assert!(fixed.key_guess.within_sigmas(1.0 / 64.0, 3.0));
    }

    #[test]
    fn window_rate_matches_rank_formula() {
        let n = 6;
        for w in [0, 1, 3, 6, 10] {
            let att = WindowAttacker::new(n, w * (n + 1)).unwrap();
            let rep = run_attack(&att, &cfg(12, 40_000, 13 + w as u64)).unwrap();
            assert!(rep.max_state_bits <= att.memory_bits());
            let expect = expected_window_guess_rate(n, w);
            assert!(rep.key_guess.within_sigmas(expect, 3.5), "w={w} {} vs {expect}", rep.key_guess_rate);
        }
    }

    #[test]
    fn rates_grow_with_memory() {
        let n = 6;
        let rates: Vec<f64> = [0, 7, 21, 42, 70]
            .iter()
            .map(|&s| run_attack(&WindowAttacker::new(n, s).unwrap(), &cfg(30, 20_000, 99)).unwrap().key_guess_rate)
            .collect();
        for pair in rates.windows(2) {
            assert!(pair[0] <= pair[1] + 3.0 * Proportion::sigma_at(0.5, 20_000), "{rates:?}");
        }
        assert!(rates[4] > 0.9);
    }

    #[test]
    fn ciphertext_only_gives_nothing() {
        let att = WindowAttacker::new(5, 60).unwrap();
        let mut c = cfg(30, 50_000, 5);
        c.threat = ThreatModel::CiphertextOnly;
        let rep = run_attack(&att, &c).unwrap();
        assert!(rep.key_guess.within_sigmas(1.0 / 32.0, 4.0), "{rep:?}");
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let att = WindowAttacker::new(5, 30).unwrap();
        let mut c = cfg(10, 2_000, 3);
        c.execution = Execution::Sequential;
        let a = run_attack(&att, &c).unwrap();
        c.execution = Execution::Parallel;
        let b = run_attack(&att, &c).unwrap();
        assert_eq!(a.key_guess, b.key_guess);
        assert_eq!(a.next_bit_advantage, b.next_bit_advantage);
    }

    struct Greedy;
    impl Attacker for Greedy {
        type State = Vec<u32>;
        fn id(&self) -> String {
            "greedy".into()
        }
        fn n(&self) -> usize {
            4
        }
        fn memory_bits(&self) -> usize {
            10
        }
        fn initial(&self) -> Vec<u32> {
            Vec::new()
        }
        fn observe(&self, s: &mut Vec<u32>, a: u32, _: bool) {
            s.push(a);
        }
        fn state_bits(&self, s: &Vec<u32>) -> usize {
            s.len() * 5
        }
        fn guess_key<R: Rng + ?Sized>(&self, _: &Vec<u32>, _: &mut R) -> u32 {
            0
        }
        fn predict_bit<R: Rng + ?Sized>(&self, _: &Vec<u32>, _: u32, _: &mut R) -> bool {
            false
        }
    }

    #[test]
    fn memory_overrun_is_a_hard_error() {
        assert_eq!(run_attack(&Greedy, &cfg(3, 5, 1)).unwrap_err(), Error::MemoryBound { used: 15, bound: 10 });
        assert!(run_attack(&Greedy, &cfg(2, 5, 1)).is_ok());
    }
}
