use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::asset_manager::AuditEntry;
use crate::Tick;

pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub tick: Tick,
    pub asset: String,
    pub predicted_class: String,
    pub confidence: f64,
    pub outcome: String,
    pub identity_id: String,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset: String,
    pub identity_id: String,
    pub owner: Option<String>,
    pub events: usize,
    pub bundle_valid: bool,
    pub sequence_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateError {
    pub name: String,
    pub rms_error: f64,
    pub certified_stddev: Option<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRecord {
    pub asset: String,
    pub period: u32,
    pub active_channels: Vec<String>,
    pub samples: u64,
    pub steps: u64,
    pub states: Vec<StateError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node: String,
    pub transactions: usize,
    pub confirmed: usize,
    pub confirmed_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub nodes: Vec<NodeRecord>,
    pub converged: bool,
    pub quiescence_rounds: u64,
    pub frames_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub fraction: f64,
    pub runs: u64,
    pub reversions: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub rounds: u64,
    pub honest_nodes: usize,
    pub rows: Vec<AttackRow>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub ticks: Tick,
    pub scans: Vec<ScanRecord>,
    pub assets: Vec<AssetRecord>,
    pub proxies: Vec<ProxyRecord>,
    pub ledger: LedgerRecord,
    pub attack: Option<AttackRecord>,
    /// Chronological, human-readable log of what the run did.
    pub events: Vec<String>,
    pub audit: Vec<AuditEntry>,
}

fn opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}", self.scenario);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "ticks {}", self.ticks);

        let _ = writeln!(s, "\n[scans]");
        for r in &self.scans {
            let _ = writeln!(
                s,
                "t={} {} class={} p={:.4} {} {} distance={}",
                r.tick,
                r.asset,
                r.predicted_class,
                r.confidence,
                r.outcome,
                r.identity_id,
                opt_f(r.distance)
            );
        }

        let _ = writeln!(s, "\n[assets]");
        for a in &self.assets {
            let _ = writeln!(
                s,
                "{} id={} owner={} events={} bundle={} sequence={}",
                a.asset,
                a.identity_id,
                a.owner.as_deref().unwrap_or("-"),
                a.events,
                if a.bundle_valid { "valid" } else { "BROKEN" },
                a.sequence_digest
            );
        }

        let _ = writeln!(s, "\n[proxies]");
        for p in &self.proxies {
            let _ = writeln!(
                s,
                "{} period={} channels=[{}] samples={}/{}",
                p.asset,
                p.period,
                p.active_channels.join(","),
                p.samples,
                p.steps
            );
            for e in &p.states {
                let _ = writeln!(
                    s,
                    "  {} rms={:.6} certified={} bound={:.6}",
                    e.name,
                    e.rms_error,
                    opt_f(e.certified_stddev),
                    e.bound
                );
            }
        }

        let _ = writeln!(s, "\n[ledger]");
        let _ = writeln!(
            s,
            "converged={} quiescence_rounds={} frames_sent={}",
            self.ledger.converged, self.ledger.quiescence_rounds, self.ledger.frames_sent
        );
        for n in &self.ledger.nodes {
            let _ = writeln!(
                s,
                "{} txs={} confirmed={} digest={}",
                n.node, n.transactions, n.confirmed, n.confirmed_digest
            );
        }

        if let Some(a) = &self.attack {
            let _ = writeln!(s, "\n[attack]");
            let _ = writeln!(s, "rounds={} honest_nodes={} monotone={}", a.rounds, a.honest_nodes, a.monotone);
            let _ = writeln!(s, "fraction  reversions  rate");
            for r in &a.rows {
                let _ = writeln!(s, "{:<8.2}  {:>4}/{:<5}  {:.2}", r.fraction, r.reversions, r.runs, r.rate);
            }
        }

        let _ = writeln!(s, "\n[events]");
        for e in &self.events {
            let _ = writeln!(s, "{e}");
        }

        let _ = writeln!(s, "\n[audit]");
        for a in &self.audit {
            let _ = writeln!(s, "t={} {} {} {} {}", a.tick, a.actor, a.verb, a.identity_id, a.outcome);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Runtime(format!("writing {}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(REPORT_FILE), self.to_text()).map_err(io)?;
        std::fs::write(dir.join(SUMMARY_FILE), self.to_json() + "\n").map_err(io)?;
        Ok(())
    }

    /// Loads the summary written by [`RunReport::write`].
    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))
    }
}
