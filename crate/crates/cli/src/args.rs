use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "paritylab", version, about = "Memory-bounded parity learning: lemma checks, reductions, tradeoffs, and the bit cipher")]
pub struct Cli {
    /// Run every kernel on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Randomized property suites for the Fourier, partition, reduction and reach-bound lemmas.
    VerifyLemmas(VerifyArgs),
    /// Affine reduction of a branching program read from JSON.
    Reduce(ReduceArgs),
    /// Sample-complexity sweep over learners.
    Tradeoff(TradeoffArgs),
    /// Bit cipher: key generation, streams, and attack measurements.
    Crypto {
        #[command(subcommand)]
        command: CryptoCommand,
    },
    /// Reach-probability bounds and the proof-chain exponent.
    Bounds(BoundsArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteName {
    Fourier,
    Partition,
    Reduction,
    Probaffine,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Ambient dimension; without it the suites sweep n = 2..=4.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=10))]
    pub n: Option<u32>,
    /// Concentration level in [n/2, n]; without it r ∈ {n/2, 3n/4, n}.
    #[arg(long, requires = "n")]
    pub r: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    /// Cases per suite.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Suites to run (repeatable); all by default.
    #[arg(long = "suite", value_enum)]
    pub suites: Vec<SuiteName>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    /// Program JSON.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Concentration level in [n/2, n]; defaults to n.
    #[arg(long)]
    pub r: Option<f64>,
    /// Where to write the affine program (with its vertex map).
    #[arg(long = "program-out")]
    pub program_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LearnerName {
    Gaussian,
    PrefixPivot,
    Exhaustive,
}

#[derive(Args, Debug)]
pub struct TradeoffArgs {
    /// Ambient dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8", value_parser = clap::value_parser!(u32).range(1..=24))]
    pub n: Vec<u32>,
    /// Learners, comma separated; all by default.
    #[arg(long = "learner", value_delimiter = ',', value_enum)]
    pub learners: Vec<LearnerName>,
    #[arg(long, default_value_t = 0.9)]
    pub target: f64,
    /// Monte Carlo trials per sample count.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Largest sample count searched.
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: u64,
    /// Consecutive-pass threshold of the exhaustive learner; defaults to 3n.
    #[arg(long = "pass-cap", value_parser = clap::value_parser!(u32).range(1..))]
    pub pass_cap: Option<u32>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand, Debug)]
pub enum CryptoCommand {
    /// Random key, printed as hex (length prefix, then packed bits).
    Keygen {
        /// Key length in bits.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=65535))]
        n: u32,
        #[arg(long)]
        seed: u64,
        /// Write the key here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encrypt a file into the framed stream format.
    Encrypt {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Decrypt a framed stream.
    Decrypt {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure a memory-bounded attacker.
    Attack(AttackArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("key_source").required(true).args(["key", "key_file"])))]
pub struct KeyArgs {
    /// Key as hex.
    #[arg(long)]
    pub key: Option<String>,
    /// File holding the hex key.
    #[arg(long = "key-file")]
    pub key_file: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackerName {
    Window,
    Fixed,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=24))]
    pub n: u32,
    #[arg(long, value_enum, default_value = "window")]
    pub attacker: AttackerName,
    /// Attacker memory in bits.
    #[arg(long, default_value_t = 0)]
    pub memory: u64,
    /// Frames observed before the state is frozen; defaults to 2n.
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Key guessed by the fixed attacker, as an integer whose bit i is coordinate i+1.
    #[arg(long, default_value_t = 0)]
    pub guess: u32,
    /// Hide the plaintext: the attacker sees a ⊕-masked pad bit.
    #[arg(long = "ciphertext-only")]
    pub ciphertext_only: bool,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// `--n N --m M --k K`: one reach bound. `--n N --m M`: the table over k < n.
/// `--n N --c C --alpha A`: the proof-chain exponent report.
#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// Ambient dimension (may be real-valued in exponent mode).
    #[arg(long)]
    pub n: f64,
    /// Program length.
    #[arg(long, conflicts_with = "c")]
    pub m: Option<u64>,
    /// Target dimension.
    #[arg(long, requires = "m")]
    pub k: Option<u64>,
    /// Memory coefficient.
    #[arg(long, requires = "alpha")]
    pub c: Option<f64>,
    #[arg(long, requires = "c")]
    pub alpha: Option<f64>,
    /// log2 of the program length; defaults to αn.
    #[arg(long = "log2-m", requires = "c")]
    pub log2_m: Option<f64>,
    /// log2 of the width; defaults to cn².
    #[arg(long = "log2-d", requires = "c")]
    pub log2_d: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
