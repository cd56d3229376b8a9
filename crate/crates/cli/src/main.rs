mod commands;
mod config;
mod error;
mod report;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use escrowsim::cryptofile::CorpusProfile;

use crate::commands::{CorpusShape, Outcome};
use crate::config::{ExperimentConfig, Settings};
use crate::error::{CliError, EXIT_OK, EXIT_REFUSED, EXIT_VALIDATION};
use crate::workspace::Workspace;

/// Simulator for escrow-style key release on a simulated blockchain.
#[derive(Parser)]
#[command(name = "escrowsim", version)]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Required by every command that encrypts files.
    #[arg(long = "i-understand-this-is-a-simulator", global = true)]
    simulator_ack: bool,

    #[command(flatten)]
    keys: KeyFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct KeyFlags {
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Compact difficulty target, hex (0x...) or decimal.
    #[arg(long, global = true)]
    bits: Option<String>,
    #[arg(long, global = true)]
    work: Option<String>,
    /// Corpus root; must contain the `.escrowsim-corpus` sentinel.
    #[arg(long, global = true)]
    corpus: Option<String>,
    /// Operator escrow file written at keygen.
    #[arg(long, global = true)]
    escrow: Option<String>,
    /// reactive or proactive.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// signed, spv or explorer.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    min_confirmations: Option<String>,
    #[arg(long, global = true)]
    n_extra_blocks: Option<String>,
    /// Explorer answers must also pass the SPV check.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    combined: Option<String>,
    #[arg(long, global = true)]
    transition_cost_us: Option<String>,
    /// in-process, local or tcp (loopback only).
    #[arg(long, global = true)]
    wiring: Option<String>,
    /// Remove originals once their envelope is written.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    replace: Option<String>,
    /// honest or unavailable.
    #[arg(long, global = true)]
    peer: Option<String>,
    /// honest, untrusted or unavailable.
    #[arg(long, global = true)]
    explorer: Option<String>,
}

impl KeyFlags {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        let pairs = [
            ("seed", &self.seed),
            ("bits", &self.bits),
            ("work", &self.work),
            ("corpus", &self.corpus),
            ("escrow", &self.escrow),
            ("mode", &self.mode),
            ("scheme", &self.scheme),
            ("min_confirmations", &self.min_confirmations),
            ("n_extra_blocks", &self.n_extra_blocks),
            ("combined", &self.combined),
            ("transition_cost_us", &self.transition_cost_us),
            ("wiring", &self.wiring),
            ("replace", &self.replace),
            ("peer", &self.peer),
            ("explorer", &self.explorer),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                s.set(k, v.clone())?;
            }
        }
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Chain maintenance.
    Chain {
        #[command(subcommand)]
        action: ChainAction,
    },
    /// Generate attacker, device and explorer keys and provision the victim enclave.
    Keygen,
    /// Encrypt every file under the corpus root.
    Encrypt,
    /// Mine a ransom payment carrying the release metadata.
    Pay {
        #[arg(long, default_value_t = 50_000)]
        amount: u64,
    },
    /// Attacker: sign the metadata of every payment found on chain.
    Sign,
    /// Attacker: publish pending signatures on chain.
    Publish,
    /// Victim: ask the enclave to release the key.
    Release {
        /// Payment txid; defaults to the recorded one.
        #[arg(long)]
        txid: Option<String>,
    },
    /// Decrypt the corpus with the released key.
    Decrypt {
        #[arg(long)]
        remove_envelopes: bool,
    },
    /// Operator recovery through the escrow file.
    Recover {
        #[arg(long)]
        decrypt: bool,
        #[arg(long)]
        remove_envelopes: bool,
    },
    /// Time reactive and proactive engines over a synthetic corpus.
    Bench {
        #[arg(long, default_value = "mixed")]
        profile: CorpusProfile,
        #[arg(long, default_value_t = 10)]
        scale: u64,
        #[arg(long, default_value_t = 8)]
        files: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Memory-capture experiment for both engine modes.
    Capture {
        #[arg(long, default_value_t = 20)]
        files: usize,
        #[arg(long, default_value_t = 262_144)]
        max_bytes: u64,
    },
    /// Cost of forging a header chain against SPV release.
    FakeChainCost {
        #[arg(long, default_value = "0x1f100000")]
        target_bits: String,
        #[arg(long, value_delimiter = ',', default_value = "0,2,4,6")]
        n: Vec<u64>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        policy_min_confirmations: u64,
    },
    /// Write a synthetic corpus with its sentinel.
    CorpusGen {
        #[arg(long, conflicts_with_all = ["files", "min_bytes", "max_bytes"])]
        profile: Option<CorpusProfile>,
        /// Divisor for profile file sizes.
        #[arg(long, default_value_t = 1000)]
        scale: u64,
        #[arg(long)]
        files: Option<usize>,
        #[arg(long, default_value_t = 1024)]
        min_bytes: u64,
        #[arg(long, default_value_t = 65_536)]
        max_bytes: u64,
    },
    /// Full run: keygen, encrypt, pay, release, decrypt and verify.
    Lifecycle {
        /// Blocks including the payment block; defaults to min_confirmations.
        #[arg(long)]
        depth: Option<u64>,
        #[arg(long, default_value_t = 50_000)]
        amount: u64,
    },
}

#[derive(Subcommand)]
enum ChainAction {
    /// Mine empty blocks, creating the chain if needed.
    Mine {
        #[arg(long, default_value_t = 1)]
        blocks: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Chain { .. } => "chain-mine",
            Command::Keygen => "keygen",
            Command::Encrypt => "encrypt",
            Command::Pay { .. } => "pay",
            Command::Sign => "sign",
            Command::Publish => "publish",
            Command::Release { .. } => "release",
            Command::Decrypt { .. } => "decrypt",
            Command::Recover { .. } => "recover",
            Command::Bench { .. } => "bench",
            Command::Capture { .. } => "capture",
            Command::FakeChainCost { .. } => "fake-chain-cost",
            Command::CorpusGen { .. } => "corpus-gen",
            Command::Lifecycle { .. } => "lifecycle",
        }
    }

    fn encrypts(&self) -> bool {
        matches!(self, Command::Encrypt | Command::Lifecycle { .. })
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let file = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let cfg: ExperimentConfig = file.overlay(cli.keys.settings()?).resolve()?;
    if cli.command.encrypts() && !cli.simulator_ack {
        return Err(CliError::Validation(
            "refusing to encrypt files without --i-understand-this-is-a-simulator".into(),
        ));
    }
    let ws = Workspace::open(&cfg)?;
    let outcome = match cli.command {
        Command::Chain { action: ChainAction::Mine { blocks } } => commands::chain_mine(&cfg, &ws, blocks),
        Command::Keygen => commands::keygen(&cfg, &ws),
        Command::Encrypt => commands::encrypt(&cfg, &ws),
        Command::Pay { amount } => commands::pay(&cfg, &ws, amount),
        Command::Sign => commands::sign(&ws),
        Command::Publish => commands::publish(&ws),
        Command::Release { ref txid } => commands::release(&cfg, &ws, txid.as_deref()),
        Command::Decrypt { remove_envelopes } => commands::decrypt(&cfg, &ws, remove_envelopes),
        Command::Recover { decrypt, remove_envelopes } => commands::recover(&cfg, &ws, decrypt, remove_envelopes),
        Command::Bench { profile, scale, files, repeats } => commands::bench_cmd(&cfg, profile, scale, files, repeats),
        Command::Capture { files, max_bytes } => commands::capture(&cfg, files, max_bytes),
        Command::FakeChainCost { ref target_bits, ref n, trials, policy_min_confirmations } => {
            let bits = config::parse_bits(target_bits)?;
            commands::fake_chain_cost_cmd(&cfg, bits, n, trials, policy_min_confirmations)
        }
        Command::CorpusGen { profile, scale, files, min_bytes, max_bytes } => {
            let shape = match (profile, files) {
                (Some(profile), _) => CorpusShape::Profile { profile, scale },
                (None, files) => CorpusShape::Uniform { files: files.unwrap_or(16), min_bytes, max_bytes },
            };
            commands::corpus_gen(&cfg, shape)
        }
        Command::Lifecycle { depth, amount } => commands::lifecycle(&cfg, &ws, depth, amount),
    }?;
    outcome.report.write(&ws.path(&format!("reports/{}.txt", cli.command.name())))?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.report.to_text());
            ExitCode::from(if outcome.refused { EXIT_REFUSED } else { EXIT_OK })
        }
        Err(e) => {
            eprintln!("escrowsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
