//! Randomized property suites over the lemma checkers, shared by the CLI and
//! the acceptance tests. Every case draws from its own derived generator.

use rand::Rng;
use serde::Serialize;

use crate::branching::{exhaustive_soundness, gen as bp_gen, validate_affine, DpConfig};
use crate::distributions::gen::{hypothesis_mixture, random_mixture};
use crate::distributions::check_fourier_lemma;
use crate::error::{Error, Result};
use crate::learners::{learner_to_bp, GaussianLearner, Learner, PrefixPivotLearner};
use crate::lowerbound::verify_reach_bounds;
use crate::par::{self, Execution};
use crate::partition::{build_partition, check_partition};
use crate::reduction::{reduce_to_affine, ReductionParams};
use crate::seeding::{streams, trial_rng};
use crate::{AffineLabels, AffineSubspace, BranchingProgram};

/// Largest `n` each suite accepts; larger cases are counted as skipped.
pub const FOURIER_MAX_N: usize = 10;
pub const PARTITION_MAX_N: usize = 5;
pub const REDUCTION_MAX_N: usize = 4;
pub const PROBAFFINE_MAX_N: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub passed: usize,
    pub skipped: usize,
    /// Smallest `bound − measured` over all checked inequalities.
    pub min_margin: f64,
    /// Up to ten failing cases.
    pub failures: Vec<String>,
    pub ok: bool,
}

impl SuiteReport {
    fn collect(suite: &str, outcomes: Vec<CaseOutcome>) -> Self {
        let mut report = SuiteReport {
            suite: suite.into(),
            cases: 0,
            passed: 0,
            skipped: 0,
            min_margin: f64::INFINITY,
            failures: Vec::new(),
            ok: true,
        };
        for o in outcomes {
            match o {
                CaseOutcome::Skipped => report.skipped += 1,
                CaseOutcome::Checked { pass, margin, detail } => {
                    report.cases += 1;
                    report.min_margin = report.min_margin.min(margin);
                    if pass {
                        report.passed += 1;
                    } else if report.failures.len() < 10 {
                        report.failures.push(detail);
                    }
                }
            }
        }
        report.ok = report.passed == report.cases;
        if report.cases == 0 {
            report.min_margin = 0.0;
        }
        report
    }
}

enum CaseOutcome {
    Skipped,
    Checked { pass: bool, margin: f64, detail: String },
}

impl CaseOutcome {
    fn from_result(r: Result<(bool, f64)>, label: impl FnOnce() -> String) -> Self {
        match r {
            Ok((pass, margin)) => CaseOutcome::Checked { pass, margin, detail: label() },
            Err(e) => CaseOutcome::Checked { pass: false, margin: f64::NEG_INFINITY, detail: format!("{}: {e}", label()) },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    /// `(n, r)` pairs; case `i` uses entry `i mod len`.
    pub grid: Vec<(usize, f64)>,
    pub trials: usize,
    pub seed: u64,
    pub dp: DpConfig,
}

impl SuiteConfig {
    fn case(&self, i: usize) -> (usize, f64) {
        self.grid[i % self.grid.len()]
    }

    fn execution(&self) -> Execution {
        self.dp.execution
    }

    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::parameter("empty (n, r) grid"));
        }
        for &(n, r) in &self.grid {
            if n == 0 || !(r >= n as f64 / 2.0 && r <= n as f64) {
                return Err(Error::parameter(format!("need n ≥ 1 and n/2 ≤ r ≤ n, got n = {n}, r = {r}")));
            }
        }
        Ok(())
    }
}

/// `r ∈ {n/2, 3n/4, n}` for each `n` in `ns`.
pub fn standard_grid(ns: impl IntoIterator<Item = usize>) -> Vec<(usize, f64)> {
    ns.into_iter()
        .flat_map(|n| {
            let n_f = n as f64;
            [(n, n_f / 2.0), (n, 3.0 * n_f / 4.0), (n, n_f)]
        })
        .collect()
}

/// Hypothesis-satisfying mixtures: distance from uniform below `2^{-(r-n/2)}`.
pub fn fourier_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let outcomes = par::map_indices(cfg.execution(), cfg.trials, |i| {
        let (n, r) = cfg.case(i);
        if n > FOURIER_MAX_N {
            return CaseOutcome::Skipped;
        }
        let mut rng = trial_rng(cfg.seed, streams::FOURIER, i as u64);
        let size = rng.random_range(1..=8);
        let mixture = hypothesis_mixture(n, r, size, &mut rng);
        CaseOutcome::from_result(
            check_fourier_lemma(&mixture, r)
                .map(|c| (c.hypothesis_holds && c.conclusion_holds(1e-12), c.bound - c.distance)),
            || format!("case {i}: n = {n}, r = {r}"),
        )
    });
    Ok(SuiteReport::collect("fourier", outcomes))
}

/// Random mixtures: the four partition properties.
pub fn partition_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let outcomes = par::map_indices(cfg.execution(), cfg.trials, |i| {
        let (n, r) = cfg.case(i);
        if n > PARTITION_MAX_N {
            return CaseOutcome::Skipped;
        }
        let mut rng = trial_rng(cfg.seed, streams::PARTITION, i as u64);
        let size = rng.random_range(1..=12);
        let mixture = random_mixture(n, size, &mut rng);
        let result = build_partition(&mixture, r).and_then(|p| check_partition(&mixture, &p)).map(|c| {
            let count_margin = c.counts.iter().map(|k| k.log2_bound - (k.count.max(1) as f64).log2()).fold(f64::INFINITY, f64::min);
            (c.all_ok(), (c.distance_bound - c.max_group_distance).min(count_margin))
        });
        CaseOutcome::from_result(result, || format!("case {i}: n = {n}, r = {r}, {size} components"))
    });
    Ok(SuiteReport::collect("partition", outcomes))
}

/// Random programs (`m ≤ 3`, width ≤ 8) through the affine reduction.
pub fn reduction_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let inner = DpConfig { execution: Execution::Sequential, ..cfg.dp };
    let outcomes = par::map_indices(cfg.execution(), cfg.trials, |i| {
        let (n, r) = cfg.case(i);
        if n > REDUCTION_MAX_N {
            return CaseOutcome::Skipped;
        }
        let mut rng = trial_rng(cfg.seed, streams::REDUCTION, i as u64);
        let m = rng.random_range(1..=3);
        let width = rng.random_range(1..=8);
        let source = bp_gen::random_program(n, m, width, &mut rng);
        let result = ReductionParams::new(n, r).and_then(|p| reduce_to_affine(&source, p, &inner)).map(|red| {
            let rep = &red.report;
            let margin = rep
                .accuracy
                .iter()
                .map(|c| c.bound - c.value)
                .chain(rep.inductive.iter().map(|c| c.bound - c.value))
                .fold(f64::INFINITY, f64::min);
            (rep.ok, margin)
        });
        CaseOutcome::from_result(result, || format!("case {i}: n = {n}, r = {r}, m = {m}, width = {width}"))
    });
    Ok(SuiteReport::collect("reduction", outcomes))
}

/// A named affine program with its labels.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub program: BranchingProgram,
    pub labels: AffineLabels,
}

fn learner_entry<L: Learner>(learner: &L, m: usize, budget: u128) -> Result<CorpusEntry> {
    let lp = learner_to_bp(learner, m, budget)?;
    let labels = lp.output_labels(learner)?;
    Ok(CorpusEntry { name: format!("{}_m{m}", learner.id()), program: lp.program, labels })
}

/// Affine programs of length `m` over `{0,1}^n`: the Gaussian and prefix-pivot
/// learners, a sample-ignoring chain, and `reduced` affine reductions of random
/// programs.
pub fn affine_corpus(n: usize, m: usize, reduced: usize, seed: u64, dp: &DpConfig) -> Result<Vec<CorpusEntry>> {
    let mut out = vec![
        learner_entry(&GaussianLearner::new(n)?, m, dp.budget)?,
        learner_entry(&PrefixPivotLearner::new(n)?, m, dp.budget)?,
    ];
    let full = AffineSubspace::full(n)?;
    let chain = bp_gen::chain(n, m, full);
    out.push(CorpusEntry { name: format!("chain_m{m}"), labels: AffineLabels::full(&chain), program: chain });
    let inner = DpConfig { execution: Execution::Sequential, ..*dp };
    let reductions: Vec<Result<CorpusEntry>> = par::map_indices(dp.execution, reduced, |i| {
        let mut rng = trial_rng(seed, streams::CORPUS, i as u64);
        let width = rng.random_range(1..=6);
        let r = n as f64 / 2.0 + rng.random_range(0..=2) as f64 * n as f64 / 4.0;
        let source = bp_gen::random_program(n, m, width, &mut rng);
        let red = reduce_to_affine(&source, ReductionParams::new(n, r)?, &inner)?;
        Ok(CorpusEntry { name: format!("reduced_{i}_w{width}_r{r}"), program: red.program, labels: red.labels })
    });
    for r in reductions {
        out.push(r?);
    }
    Ok(out)
}

/// Reach probability of every dimension-`k` vertex against the bound, for
/// every `k < n`, over a corpus of affine programs (trimmed where needed).
pub fn probaffine_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let inner = DpConfig { execution: Execution::Sequential, ..cfg.dp };
    let outcomes = par::map_indices(cfg.execution(), cfg.trials, |i| {
        let (n, r) = cfg.case(i);
        if n > PROBAFFINE_MAX_N {
            return CaseOutcome::Skipped;
        }
        let mut rng = trial_rng(cfg.seed, streams::PROBAFFINE, i as u64);
        let m = rng.random_range(1..=3);
        let width = rng.random_range(1..=6);
        let source = bp_gen::random_program(n, m, width, &mut rng);
        let result = ReductionParams::new(n, r).and_then(|p| reduce_to_affine(&source, p, &inner)).and_then(|red| {
            let (mut pass, mut margin) = (true, f64::INFINITY);
            for k in 0..n {
                for rep in verify_reach_bounds(&red.program, &red.labels, k, true, &inner)? {
                    pass &= rep.ok;
                    margin = margin.min(rep.margin);
                }
            }
            Ok((pass, margin))
        });
        CaseOutcome::from_result(result, || format!("case {i}: n = {n}, r = {r}, m = {m}, width = {width}"))
    });
    Ok(SuiteReport::collect("probaffine", outcomes))
}

#[derive(Clone, Debug, Serialize)]
pub struct SoundnessEntry {
    pub name: String,
    pub valid: bool,
    pub paths: u64,
    pub violations: u64,
    pub success_probability: f64,
    pub ok: bool,
}

/// Validation, exhaustive pathwise containment, and `Pr[x ∈ output] = 1`.
pub fn soundness_suite(corpus: &[CorpusEntry], dp: &DpConfig) -> Result<Vec<SoundnessEntry>> {
    corpus
        .iter()
        .map(|e| {
            let valid = validate_affine(&e.program, &e.labels).ok;
            let sound = exhaustive_soundness(&e.program, &e.labels)?;
            let success_probability = e.program.success_probability_with(dp)?;
            Ok(SoundnessEntry {
                name: e.name.clone(),
                valid,
                paths: sound.paths,
                violations: sound.violations,
                success_probability,
                ok: valid && sound.violations == 0 && success_probability == 1.0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub trials: usize,
    pub grid: Vec<(usize, f64)>,
    pub suites: Vec<SuiteReport>,
    pub ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Fourier,
    Partition,
    Reduction,
    Probaffine,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Fourier, Suite::Partition, Suite::Reduction, Suite::Probaffine];

    pub fn run(self, cfg: &SuiteConfig) -> Result<SuiteReport> {
        match self {
            Suite::Fourier => fourier_suite(cfg),
            Suite::Partition => partition_suite(cfg),
            Suite::Reduction => reduction_suite(cfg),
            Suite::Probaffine => probaffine_suite(cfg),
        }
    }
}

pub fn verify_lemmas(suites: &[Suite], cfg: &SuiteConfig) -> Result<LemmaReport> {
    let reports = suites.iter().map(|s| s.run(cfg)).collect::<Result<Vec<_>>>()?;
    Ok(LemmaReport {
        seed: cfg.seed,
        trials: cfg.trials,
        grid: cfg.grid.clone(),
        ok: reports.iter().all(|r| r.ok),
        suites: reports,
    })
}
