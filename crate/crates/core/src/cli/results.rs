use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client_opt::ClientKind;
use crate::error::{Error, Result};
use crate::federation::{nullable, RoundRecord};
use crate::server_opt::ServerKind;

/// Identifies one grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub scheme: String,
    pub client_opt: ClientKind,
    pub server_opt: ServerKind,
}

impl CellKey {
    /// File-name friendly label, e.g. `P2_adam_fedavg`.
    pub fn slug(&self) -> String {
        format!("{}_{}_{}", self.scheme, self.client_opt, self.server_opt)
    }
}

/// Final outcome of one cell. Failed cells keep their key and carry the
/// error text; their metrics are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(flatten)]
    pub cell: CellKey,
    pub rounds: usize,
    pub mean_test_mase: Option<f64>,
    #[serde(deserialize_with = "nullable::vec")]
    pub test_mase: Vec<f64>,
    pub final_val_mase: Option<f64>,
    /// Mean bytes per round per client, both directions.
    pub bytes_per_round_per_client: f64,
    pub total_bytes: usize,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn failed(cell: CellKey, rounds: usize, error: String) -> Self {
        ResultRow {
            cell,
            rounds,
            mean_test_mase: None,
            test_mase: Vec::new(),
            final_val_mase: None,
            bytes_per_round_per_client: 0.0,
            total_bytes: 0,
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResultRecord {
    Round { cell: CellKey, record: RoundRecord },
    Summary(ResultRow),
}

pub fn write_jsonl(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parse a results file; errors name the file and the 1-based line.
pub fn read_jsonl(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::File {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows of a grid, in the order the cells were attempted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const TABLE_HEADER: [&str; 10] = [
    "scheme",
    "client_opt",
    "server_opt",
    "status",
    "rounds",
    "mean_test_mase",
    "test_mase",
    "final_val_mase",
    "bytes_per_round_per_client",
    "error",
];

impl ResultTable {
    /// CSV with [`TABLE_HEADER`]; per-client MASE values are `;`-joined.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            let per_client: Vec<String> = r.test_mase.iter().map(|v| v.to_string()).collect();
            w.write_record([
                r.cell.scheme.clone(),
                r.cell.client_opt.to_string(),
                r.cell.server_opt.to_string(),
                if r.is_ok() { "ok" } else { "failed" }.to_string(),
                r.rounds.to_string(),
                fmt_opt(r.mean_test_mase),
                per_client.join(";"),
                fmt_opt(r.final_val_mase),
                r.bytes_per_round_per_client.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Plain-text matrices: per scheme, client optimizers down, server
    /// optimizers across, mean test MASE in each cell; then bytes per scheme.
    pub fn render_matrix(&self) -> String {
        let mut out = String::new();
        let mut schemes: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !schemes.contains(&r.cell.scheme.as_str()) {
                schemes.push(&r.cell.scheme);
            }
        }
        for s in &schemes {
            let rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.cell.scheme == *s).collect();
            let mut servers: Vec<ServerKind> = Vec::new();
            let mut clients: Vec<ClientKind> = Vec::new();
            for r in &rows {
                if !servers.contains(&r.cell.server_opt) {
                    servers.push(r.cell.server_opt);
                }
                if !clients.contains(&r.cell.client_opt) {
                    clients.push(r.cell.client_opt);
                }
            }
            out.push_str(&format!("mean test MASE, scheme {s}\n{:<10}", ""));
            for sv in &servers {
                out.push_str(&format!("{:>16}", sv.name()));
            }
            out.push('\n');
            for c in &clients {
                out.push_str(&format!("{:<10}", c.name()));
                for sv in &servers {
                    let cell = rows.iter().find(|r| r.cell.client_opt == *c && r.cell.server_opt == *sv);
                    let text = match cell {
                        Some(r) if r.is_ok() => r.mean_test_mase.map(|v| format!("{v:.4}")).unwrap_or("-".into()),
                        Some(_) => "failed".into(),
                        None => "".into(),
                    };
                    out.push_str(&format!("{text:>16}"));
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str("bytes per round per client\n");
        for s in &schemes {
            let b = self
                .rows
                .iter()
                .find(|r| r.cell.scheme == *s && r.is_ok())
                .map(|r| r.bytes_per_round_per_client);
            out.push_str(&format!("{s:<10}{:>16}\n", b.map(|v| v.to_string()).unwrap_or("-".into())));
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
