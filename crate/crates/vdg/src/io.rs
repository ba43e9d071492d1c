//! Run artifacts on disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use vdg_core::codec::{Decode, Encode};
use vdg_core::ledger::LedgerBlock;
use vdg_core::scenario::Scenario;
use vdg_core::sim::RunOutput;

pub const SUMMARY: &str = "summary.json";
pub const SCENARIO: &str = "scenario.json";
pub const METRICS: &str = "metrics.csv";
pub const ROUNDS: &str = "rounds.csv";
pub const TOKENS: &str = "tokens.csv";
pub const DECISIONS: &str = "decisions.csv";
pub const HOUSEHOLDS: &str = "households.csv";
pub const CONTROL: &str = "control.csv";
pub const METERS: &str = "meters.csv";
pub const NODES: &str = "nodes.csv";
pub const MESSAGES: &str = "messages.csv";
pub const CHAINS: &str = "chains";

pub fn chain_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(CHAINS).join(format!("{}.chain", name.replace('/', ".")))
}

/// One hex-encoded canonical block per line.
pub fn write_chain(path: &Path, blocks: &[LedgerBlock]) -> Result<()> {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&b.to_hex());
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_chain(path: &Path) -> Result<Vec<LedgerBlock>> {
    let text = fs::read_to_string(path).with_context(|| format!("missing artifact: {}", path.display()))?;
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        match LedgerBlock::from_hex(line) {
            Ok(b) => blocks.push(b),
            Err(e) => bail!("{}:{}: undecodable block: {e:?}", path.display(), i + 1),
        }
    }
    Ok(blocks)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct MeterRow<'a> {
    household: &'a str,
    tick_index: usize,
    slot: usize,
    net_consumption: i64,
}

#[derive(Serialize)]
struct NodeRow<'a> {
    node: usize,
    name: &'a str,
}

/// Writes everything a run produced into `dir`.
pub fn write_run(dir: &Path, sc: &Scenario, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir.join(CHAINS)).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join(SCENARIO), sc)?;
    write_json(&dir.join(SUMMARY), &out.summary)?;
    write_csv(&dir.join(METRICS), &out.metrics)?;
    write_csv(&dir.join(ROUNDS), &out.rounds)?;
    write_csv(&dir.join(TOKENS), &out.tokens)?;
    write_csv(&dir.join(DECISIONS), &out.decisions)?;
    write_csv(&dir.join(HOUSEHOLDS), &out.households)?;
    write_csv(&dir.join(CONTROL), &out.control)?;
    let per = vdg_core::market::calendar::RT_TICKS_PER_SLOT as usize;
    let meters: Vec<MeterRow> = out
        .meters
        .iter()
        .flat_map(|(name, series)| {
            series.iter().enumerate().map(move |(k, &v)| MeterRow {
                household: name,
                tick_index: k,
                slot: k / per,
                net_consumption: v,
            })
        })
        .collect();
    write_csv(&dir.join(METERS), &meters)?;
    let nodes: Vec<NodeRow> = out.node_names.iter().enumerate().map(|(node, name)| NodeRow { node, name }).collect();
    write_csv(&dir.join(NODES), &nodes)?;
    let messages = dir.join(MESSAGES);
    if out.messages.is_empty() {
        if messages.exists() {
            fs::remove_file(&messages)?;
        }
    } else {
        write_csv(&messages, &out.messages)?;
    }
    for c in &out.chains {
        write_chain(&chain_file(dir, &c.name), &c.blocks)?;
    }
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("missing artifact: {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed", path.display()))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        bail!("missing artifact: {}", path.display());
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row.with_context(|| format!("{}: malformed row", path.display()))?);
    }
    Ok(rows)
}

pub fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}
