//! The `vdg` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use vdg_core::control::ControlLease;
use vdg_core::crypto::{AgentId, Hash32};
use vdg_core::ledger::{Account, AppendVerdict, Chain, Debt, LedgerState, MarketRecord, ProofOfFlow};
use vdg_core::market::ImbalanceRecord;
use vdg_core::scenario::Scenario;
use vdg_core::sim::{self, audit_chain, RunOptions, RunOutput};
use vdg_core::auction::TradeContract;
use vdg_core::tokens::EnergyToken;

use crate::{io, load_scenario, report};

/// Default parent directory for run output.
pub const OUT_ENV: &str = "VDG_OUT";

#[derive(Parser, Debug)]
#[command(name = "vdg", version, about = "Residential virtual distribution grid market simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory. Defaults to $VDG_OUT/<scenario name>, or runs/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write messages.csv with every network message.
        #[arg(long)]
        trace_messages: bool,
        #[arg(long)]
        ticks_per_sim_day: Option<u64>,
    },
    /// Per-day tables of a finished run; also writes report.json.
    Report { run_dir: PathBuf },
    /// Inspect chain files.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Check a scenario file against the schema.
    Validate { scenario: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum LedgerCommand {
    /// Replay a chain and print the folded state as JSON.
    Dump {
        /// A run directory or a .chain file.
        path: PathBuf,
        /// Chain to dump from a run directory; the summary's reference chain by default.
        #[arg(long)]
        chain: Option<String>,
    },
}

/// Applies command-line overrides to a loaded scenario.
pub fn apply_overrides(mut sc: Scenario, seed: Option<u64>, ticks_per_day: Option<u64>) -> Result<Scenario> {
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(t) = ticks_per_day {
        sc.calendar.ticks_per_day = t;
    }
    sc.validated().map_err(|v| {
        let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        anyhow::anyhow!("after overrides:\n{}", lines.join("\n"))
    })
}

pub fn default_out(sc: &Scenario) -> PathBuf {
    let base = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    base.join(&sc.name)
}

/// Runs `sc` and writes its artifacts to `dir`.
pub fn run_to(sc: &Scenario, dir: &Path, opts: RunOptions) -> Result<RunOutput> {
    let out = sim::run(sc, opts);
    io::write_run(dir, sc, &out)?;
    Ok(out)
}

#[derive(Serialize)]
struct AccountDump<'a> {
    agent: AgentId,
    #[serde(flatten)]
    account: &'a Account,
}

#[derive(Serialize)]
struct StateDump<'a> {
    chain_id: &'a str,
    height: u64,
    tip_hash: Hash32,
    transactions: u64,
    market_fund: u64,
    accounts: Vec<AccountDump<'a>>,
    tokens: Vec<&'a EnergyToken>,
    contracts: Vec<&'a TradeContract>,
    proofs_of_flow: Vec<&'a ProofOfFlow>,
    debts: &'a [Debt],
    imbalances: &'a [ImbalanceRecord],
    market_records: &'a [MarketRecord],
    leases: Vec<&'a ControlLease>,
}

/// Replays a chain file and returns the folded state as JSON.
pub fn dump(path: &Path) -> Result<String> {
    let blocks = io::read_chain(path)?;
    if let Err(f) = audit_chain(&blocks) {
        bail!("{}: {} failed: {}", path.display(), f.check, f.detail);
    }
    let mut chain = Chain::new(blocks[0].clone()).map_err(anyhow::Error::msg)?;
    for b in &blocks[1..] {
        if !matches!(chain.append(b.clone()), AppendVerdict::Accepted { .. }) {
            bail!("{}: block {} does not replay", path.display(), b.height);
        }
    }
    let state: std::rc::Rc<LedgerState> = chain.tip_state();
    let d = StateDump {
        chain_id: &state.chain_id,
        height: chain.height(),
        tip_hash: chain.tip_hash(),
        transactions: state.tx_count,
        market_fund: state.market_fund,
        accounts: state.accounts.iter().map(|(a, account)| AccountDump { agent: *a, account }).collect(),
        tokens: state.tokens.iter().collect(),
        contracts: state.contracts.values().collect(),
        proofs_of_flow: state.pofs.values().collect(),
        debts: &state.debts,
        imbalances: &state.imbalances,
        market_records: &state.market_records,
        leases: state.leases.leases.values().collect(),
    };
    let mut s = serde_json::to_string_pretty(&d)?;
    s.push('\n');
    Ok(s)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            println!("{}: ok ({} households, {} days)", scenario.display(), sc.households.len(), sc.days);
            Ok(0)
        }
        Command::Run { scenario, seed, out, trace_messages, ticks_per_sim_day } => {
            let sc = apply_overrides(load_scenario(&scenario)?, seed, ticks_per_sim_day)?;
            let dir = out.unwrap_or_else(|| default_out(&sc));
            let run = run_to(&sc, &dir, RunOptions { trace_messages })?;
            let s = &run.summary;
            println!(
                "{}: {} blocks, {} txs, local {} Wh, import {} Wh, export {} Wh, ratio {:.4} -> {}",
                sc.name,
                s.chain_height,
                s.transactions,
                s.local_delivered,
                s.import,
                s.export,
                s.local_balancing_ratio,
                dir.display()
            );
            if run.ok() {
                Ok(0)
            } else {
                for f in &run.failures {
                    eprintln!("invariant violated: {}: {}", f.check, f.detail);
                }
                Ok(2)
            }
        }
        Command::Report { run_dir } => {
            let r = report::report(&run_dir)?;
            io::write_json(&run_dir.join("report.json"), &r)?;
            io::print(&report::render(&r));
            Ok(0)
        }
        Command::Ledger { command: LedgerCommand::Dump { path, chain } } => {
            let file = if path.is_dir() {
                let name = match chain {
                    Some(c) => c,
                    None => {
                        let s: sim::Summary = io::read_json(&path.join(io::SUMMARY))?;
                        s.reference_chain
                    }
                };
                io::chain_file(&path, &name)
            } else {
                path
            };
            let text = dump(&file).with_context(|| format!("dumping {}", file.display()))?;
            io::print(&text);
            Ok(0)
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
