use std::fmt;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use paritylab::branching::{DpConfig, ProgramFile, DEFAULT_DP_BUDGET};
use paritylab::crypto::{
    decode_stream, encode_stream, expected_window_guess_rate, keygen, run_attack, AttackConfig, AttackReport, Attacker,
    FixedGuessAttacker, SecretKey, ThreatModel, WindowAttacker,
};
use paritylab::learners::{
    estimate_sample_complexity, ExhaustiveLearner, GaussianLearner, Learner, PrefixPivotLearner, SearchConfig,
    TradeoffPoint,
};
use paritylab::lowerbound::{log2_probaffine_bound, probaffine_bound, theorem_exponent};
use paritylab::reduction::{reduce_to_affine, ReductionParams};
use paritylab::report::to_json_string;
use paritylab::seeding::{streams, trial_rng};
use paritylab::suites::{standard_grid, verify_lemmas, Suite, SuiteConfig};
use paritylab::Execution;

use crate::args::*;
use crate::output::{emit, read_bytes, read_text, render, write_text};

pub const BUDGET_ENV: &str = "PARITYLAB_DP_BUDGET";

/// Bad flag values detected after parsing; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Runs the command; `Ok(false)` means a check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let execution = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let dp = DpConfig { execution, budget: dp_budget()? };
    match cli.command {
        Command::VerifyLemmas(a) => verify(a, dp),
        Command::Reduce(a) => reduce(a, dp),
        Command::Tradeoff(a) => tradeoff(a, execution),
        Command::Crypto { command } => crypto(command, execution),
        Command::Bounds(a) => bounds(a),
    }
}

fn dp_budget() -> Result<u128> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => match v.trim().parse::<u128>() {
            Ok(b) if b > 0 => Ok(b),
            _ => Err(usage(format!("{BUDGET_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(DEFAULT_DP_BUDGET),
    }
}

fn check_r(n: usize, r: f64) -> Result<()> {
    if r >= n as f64 / 2.0 && r <= n as f64 {
        Ok(())
    } else {
        Err(usage(format!("--r must lie in [n/2, n] = [{}, {n}], got {r}", n as f64 / 2.0)))
    }
}

fn verify(a: VerifyArgs, dp: DpConfig) -> Result<bool> {
    let grid = match (a.n.map(|n| n as usize), a.r) {
        (Some(n), Some(r)) => {
            check_r(n, r)?;
            vec![(n, r)]
        }
        (Some(n), None) => standard_grid([n]),
        (None, _) => standard_grid(2..=4),
    };
    let suites: Vec<Suite> = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites
            .iter()
            .map(|s| match s {
                SuiteName::Fourier => Suite::Fourier,
                SuiteName::Partition => Suite::Partition,
                SuiteName::Reduction => Suite::Reduction,
                SuiteName::Probaffine => Suite::Probaffine,
            })
            .collect()
    };
    let cfg = SuiteConfig { grid, trials: a.trials as usize, seed: a.seed, dp };
    let report = verify_lemmas(&suites, &cfg)?;
    emit(&report, &a.output, Format::Json)?;
    Ok(report.ok)
}

fn reduce(a: ReduceArgs, dp: DpConfig) -> Result<bool> {
    let text = read_text(&a.input)?;
    let file = ProgramFile::from_json(&text).map_err(|e| anyhow!("{} is not a valid program file: {e}", a.input.display()))?;
    let (program, _) = file.to_program().map_err(|e| anyhow!("{} is not a valid program: {e}", a.input.display()))?;
    // Early leaves are padded into pass-through chains so every path has length m.
    let program = if program.has_early_leaves() { program.pad_early_leaves(None)?.0 } else { program };
    let n = program.n();
    let r = a.r.unwrap_or(n as f64);
    check_r(n, r)?;
    let red = reduce_to_affine(&program, ReductionParams::new(n, r)?, &dp)?;
    if let Some(path) = &a.program_out {
        write_text(Some(path), &to_json_string(&red.to_file()))?;
    }
    emit(&red.report, &a.output, Format::Json)?;
    Ok(red.report.ok)
}

fn sweep_point<L: Learner>(learner: L, cfg: &SearchConfig) -> Result<TradeoffPoint> {
    Ok(estimate_sample_complexity(&learner, cfg)?)
}

fn tradeoff(a: TradeoffArgs, execution: Execution) -> Result<bool> {
    if !(a.target > 0.0 && a.target < 1.0) {
        return Err(usage(format!("--target must lie in (0, 1), got {}", a.target)));
    }
    let learners = if a.learners.is_empty() {
        vec![LearnerName::Gaussian, LearnerName::PrefixPivot, LearnerName::Exhaustive]
    } else {
        a.learners.clone()
    };
    let cfg = SearchConfig { target: a.target, trials: a.trials, cap: a.cap, seed: a.seed, execution };
    let mut points = Vec::new();
    for &n in &a.n {
        let n = n as usize;
        for l in &learners {
            points.push(match l {
                LearnerName::Gaussian => sweep_point(GaussianLearner::new(n)?, &cfg)?,
                LearnerName::PrefixPivot => sweep_point(PrefixPivotLearner::new(n)?, &cfg)?,
                LearnerName::Exhaustive => match a.pass_cap {
                    Some(t) => sweep_point(ExhaustiveLearner::new(n, t)?, &cfg)?,
                    None => sweep_point(ExhaustiveLearner::with_default_cap(n)?, &cfg)?,
                },
            });
        }
    }
    let text = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = format!("{}\n", TradeoffPoint::CSV_HEADER);
            for p in &points {
                s.push_str(&p.csv_row());
                s.push('\n');
            }
            s
        }
        Format::Json => to_json_string(&points),
    };
    write_text(a.output.out.as_deref(), &text)?;
    Ok(true)
}

fn load_key(k: &KeyArgs) -> Result<SecretKey> {
    let (text, source) = match (&k.key, &k.key_file) {
        (Some(hex), _) => (hex.clone(), "--key".to_string()),
        (None, Some(path)) => (read_text(path)?, path.display().to_string()),
        (None, None) => return Err(usage("one of --key or --key-file is required")),
    };
    SecretKey::from_hex(&text).map_err(|e| usage(format!("invalid key in {source}: {e}")))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct AttackSummary {
    #[serde(flatten)]
    report: AttackReport,
    /// Exact key-guess rate for this attacker, when known in closed form.
    expected_key_guess_rate: Option<f64>,
    note: &'static str,
}

const ATTACK_NOTE: &str = "measures one concrete attacker; it is not evidence about every attacker with this memory";

fn attack_with<A: Attacker>(attacker: &A, cfg: &AttackConfig, expected: Option<f64>, out: &OutputArgs) -> Result<bool> {
    let report = run_attack(attacker, cfg)?;
    emit(&AttackSummary { report, expected_key_guess_rate: expected, note: ATTACK_NOTE }, out, Format::Json)?;
    Ok(true)
}

fn crypto(command: CryptoCommand, execution: Execution) -> Result<bool> {
    match command {
        CryptoCommand::Keygen { n, seed, out } => {
            let key = keygen(n as usize, &mut trial_rng(seed, streams::KEYGEN, 0))?;
            write_text(out.as_deref(), &format!("{}\n", key.to_hex()))?;
        }
        CryptoCommand::Encrypt { key, input, out, seed } => {
            let key = load_key(&key)?;
            let plaintext = read_bytes(&input)?;
            let stream = encode_stream(&key, &plaintext, &mut trial_rng(seed, streams::ENCRYPT, 0));
            write_bytes(&out, &stream)?;
        }
        CryptoCommand::Decrypt { key, input, out } => {
            let key = load_key(&key)?;
            let stream = read_bytes(&input)?;
            let plaintext = decode_stream(&key, &stream).map_err(|e| anyhow!("cannot decrypt {}: {e}", input.display()))?;
            write_bytes(&out, &plaintext)?;
        }
        CryptoCommand::Attack(a) => {
            let n = a.n as usize;
            let threat = if a.ciphertext_only { ThreatModel::CiphertextOnly } else { ThreatModel::KnownPlaintext };
            let frames = a.frames.unwrap_or(2 * n as u64) as usize;
            let cfg = AttackConfig { frames, trials: a.trials, seed: a.seed, threat, execution };
            let uniform = (-(n as f64)).exp2();
            return match a.attacker {
                AttackerName::Window => {
                    let att = WindowAttacker::new(n, a.memory as usize)?;
                    let expected = match threat {
                        ThreatModel::KnownPlaintext => expected_window_guess_rate(n, frames.min(att.window())),
                        // The observations are independent of the key.
                        ThreatModel::CiphertextOnly => uniform,
                    };
                    attack_with(&att, &cfg, Some(expected), &a.output)
                }
                AttackerName::Fixed => {
                    if a.memory != 0 {
                        return Err(usage("the fixed attacker stores nothing; --memory must be 0"));
                    }
                    attack_with(&FixedGuessAttacker::new(n, a.guess)?, &cfg, Some(uniform), &a.output)
                }
            };
        }
    }
    Ok(true)
}

#[derive(Serialize)]
struct BoundRow {
    n: usize,
    m: u64,
    k: u64,
    log2_bound: f64,
    bound: f64,
}

fn bound_row(n: usize, m: u64, k: u64) -> Result<BoundRow> {
    let (mu, ku) = (m as usize, k as usize);
    let bound = probaffine_bound(n, mu, ku).map_err(|e| usage(e.to_string()))?;
    Ok(BoundRow { n, m, k, log2_bound: log2_probaffine_bound(n, mu, ku)?, bound })
}

fn bounds(a: BoundsArgs) -> Result<bool> {
    if let (Some(c), Some(alpha)) = (a.c, a.alpha) {
        let report = theorem_exponent(c, alpha, a.n, a.log2_m, a.log2_d).map_err(|e| usage(e.to_string()))?;
        emit(&report, &a.output, Format::Json)?;
        return Ok(true);
    }
    let m = a.m.ok_or_else(|| usage("bounds needs --m (reach bound) or --c and --alpha (exponent report)"))?;
    if !(a.n >= 1.0 && a.n.fract() == 0.0 && a.n <= 64.0) {
        return Err(usage(format!("--n must be an integer in 1..=64 for reach bounds, got {}", a.n)));
    }
    let n = a.n as usize;
    let text = match a.k {
        Some(k) => {
            let row = bound_row(n, m, k)?;
            match a.output.format {
                None => format!("{}\n", row.bound),
                Some(f) => render(&row, f)?,
            }
        }
        None => {
            let rows = (0..n as u64).map(|k| bound_row(n, m, k)).collect::<Result<Vec<_>>>()?;
            match a.output.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut s = String::from("n,m,k,log2_bound,bound\n");
                    for r in &rows {
                        s.push_str(&format!("{},{},{},{},{}\n", r.n, r.m, r.k, r.log2_bound, r.bound));
                    }
                    s
                }
                Format::Json => to_json_string(&rows),
            }
        }
    };
    write_text(a.output.out.as_deref(), &text)?;
    Ok(true)
}
