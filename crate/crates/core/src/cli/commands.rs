use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::checkpoint;
use super::config::{DataSource, ExperimentConfig};
use super::results::{read_jsonl, write_jsonl, write_text, CellKey, ResultRecord, ResultRow, ResultTable};
use crate::client_opt::ClientKind;
use crate::data::{generate_synthetic, load_csv_dir, split_and_window, write_csv, ClientSeries, ClientSplits};
use crate::error::{Error, Result};
use crate::federation::{evaluate_round, run_pl_fl, FederationConfig, FlOutcome};
use crate::metrics;
use crate::model::{LstmForecaster, PartitionScheme};
use crate::numerics::SimRng;
use crate::server_opt::ServerKind;

const DATA_STREAM: u64 = u64::MAX;
const INIT_STREAM: u64 = u64::MAX - 1;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

/// Client series named by the config: read from disk or generated.
pub fn load_series(cfg: &ExperimentConfig) -> Result<Vec<ClientSeries>> {
    match &cfg.data {
        DataSource::Csv { dir } => {
            let series = load_csv_dir(dir)?;
            if series.is_empty() {
                return Err(Error::File {
                    path: dir.clone(),
                    message: "no CSV files".into(),
                });
            }
            Ok(series)
        }
        DataSource::Synthetic(spec) => {
            let mut rng = SimRng::derive(cfg.seed, &[DATA_STREAM]);
            generate_synthetic(spec.clients, spec.length, &spec.heterogeneity, &mut rng)
        }
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Vec<ClientSplits>> {
    load_series(cfg)?
        .iter()
        .map(|s| {
            split_and_window(s, &cfg.split, cfg.model.lookback, cfg.model.horizon).map_err(|e| Error::Data {
                source_name: s.name.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Coefficient of variation of the client means.
pub fn mean_cv(stats: &[ClientStats]) -> f64 {
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64;
    var.sqrt() / mu.abs()
}

pub fn render_stats(stats: &[ClientStats]) -> String {
    let mut out = format!("{:<12}{:>12}{:>12}\n", "client", "mean", "std");
    for s in stats {
        out.push_str(&format!("{:<12}{:>12.3}{:>12.3}\n", s.name, s.mean, s.std));
    }
    out
}

/// Write one CSV per client into the output directory.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<ClientStats>> {
    let spec = match &cfg.data {
        DataSource::Synthetic(s) => s,
        DataSource::Csv { .. } => return Err(Error::invalid("generate needs a synthetic data source")),
    };
    spec.heterogeneity.validate()?;
    create_dir(&cfg.out_dir)?;
    let mut rng = SimRng::derive(cfg.seed, &[DATA_STREAM]);
    let series = generate_synthetic(spec.clients, spec.length, &spec.heterogeneity, &mut rng)?;
    let mut stats = Vec::with_capacity(series.len());
    for s in &series {
        let path = cfg.out_dir.join(format!("{}.csv", s.name));
        write_csv(s, &path).map_err(|e| Error::File {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let (mean, std) = s.mean_std();
        stats.push(ClientStats {
            name: s.name.clone(),
            mean,
            std,
        });
    }
    Ok(stats)
}

/// Run one cell on prepared data and turn it into results records.
fn run_cell(
    cfg: &ExperimentConfig,
    fed: &FederationConfig,
    model: &LstmForecaster,
    data: &[ClientSplits],
) -> Result<(Vec<ResultRecord>, ResultRow, FlOutcome)> {
    let cell = CellKey {
        scheme: fed.scheme.label(),
        client_opt: fed.client_kind,
        server_opt: fed.server_kind,
    };
    let init = model.init_params(&mut SimRng::derive(fed.seed, &[INIT_STREAM]))?;
    let outcome = run_pl_fl(fed, model, &init, data)?;
    let test = evaluate_round(model, &outcome.clients, data, cfg.eval.final_split)?;
    let n = data.len();
    let total = outcome.ledger.total_bytes();
    let row = ResultRow {
        cell: cell.clone(),
        rounds: fed.rounds,
        mean_test_mase: metrics::mean(&test),
        test_mase: test,
        final_val_mase: outcome.rounds.last().and_then(|r| r.mean_val_mase),
        bytes_per_round_per_client: total as f64 / (fed.rounds * n) as f64,
        total_bytes: total,
        error: None,
    };
    let mut records: Vec<ResultRecord> = outcome
        .rounds
        .iter()
        .map(|r| ResultRecord::Round {
            cell: cell.clone(),
            record: r.clone(),
        })
        .collect();
    records.push(ResultRecord::Summary(row.clone()));
    Ok((records, row, outcome))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub row: ResultRow,
    pub results: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// Train the cell named in `[federation]`; writes `results.jsonl` and one
/// checkpoint per client (plus the server's shared groups, if any).
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let model = LstmForecaster::new(cfg.model.dims())?;
    let data = prepare_data(cfg)?;
    let fed = cfg.federation_config();
    info!("training {} clients, {} rounds", data.len(), fed.rounds);
    let (records, row, outcome) = run_cell(cfg, &fed, &model, &data)?;

    create_dir(&cfg.out_dir)?;
    let results = cfg.out_dir.join("results.jsonl");
    write_jsonl(&results, &records)?;
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut checkpoints = Vec::new();
    for (c, p) in outcome.clients.iter().enumerate() {
        let path = ckpt_dir.join(format!("client_{c:02}.ckpt"));
        checkpoint::save(p, &path)?;
        checkpoints.push(path);
    }
    if !outcome.server.is_empty() {
        let path = ckpt_dir.join("server.ckpt");
        checkpoint::save(&outcome.server, &path)?;
        checkpoints.push(path);
    }
    Ok(TrainOutput {
        row,
        results,
        checkpoints,
    })
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Every cell of the grid. Each cell's records go to `cells/<slug>.jsonl`;
/// the table goes to `grid.csv` and `grid.txt`. A failing cell is recorded
/// in its row and the grid continues.
pub fn cmd_grid(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let model = LstmForecaster::new(cfg.model.dims())?;
    let data = prepare_data(cfg)?;
    let cells_dir = cfg.out_dir.join("cells");
    create_dir(&cells_dir)?;

    let mut cells: Vec<(PartitionScheme, ClientKind, ServerKind)> = Vec::new();
    for s in &cfg.grid.schemes {
        for &c in &cfg.grid.client_opts {
            for &v in &cfg.grid.server_opts {
                cells.push((s.clone(), c, v));
            }
        }
    }
    let run = |(scheme, ck, sk): &(PartitionScheme, ClientKind, ServerKind)| -> ResultRow {
        let fed = FederationConfig {
            scheme: scheme.clone(),
            client_kind: *ck,
            server_kind: *sk,
            parallel: 1,
            ..cfg.federation_config()
        };
        let key = CellKey {
            scheme: scheme.label(),
            client_opt: *ck,
            server_opt: *sk,
        };
        let attempt = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_cell(cfg, &fed, &model, &data)));
        let outcome = match attempt {
            Ok(r) => r.map_err(|e| e.to_string()),
            Err(p) => Err(panic_text(p)),
        };
        let (records, row) = match outcome {
            Ok((records, row, _)) => (records, row),
            Err(e) => {
                warn!("cell {} failed: {e}", key.slug());
                let row = ResultRow::failed(key.clone(), fed.rounds, e);
                (vec![ResultRecord::Summary(row.clone())], row)
            }
        };
        if let Err(e) = write_jsonl(&cells_dir.join(format!("{}.jsonl", key.slug())), &records) {
            warn!("{e}");
        }
        info!("cell {} done", key.slug());
        row
    };

    let rows: Vec<ResultRow> = if cfg.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };
    let table = ResultTable { rows };
    write_text(&cfg.out_dir.join("grid.csv"), &table.to_csv()?)?;
    write_text(&cfg.out_dir.join("grid.txt"), &table.render_matrix())?;
    Ok(table)
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: usize,
    pub summaries: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

fn collect_jsonl(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::File {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries: Vec<PathBuf> = read.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_jsonl(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

/// Collate every `*.jsonl` under `dir` into `mase.csv`, `bytes.csv` and
/// `loss.csv` in `out`.
pub fn cmd_report(dir: &Path, out: &Path) -> Result<Report> {
    let mut files = Vec::new();
    collect_jsonl(dir, &mut files)?;
    let mut report = Report {
        files: files.len(),
        ..Report::default()
    };
    if files.is_empty() {
        let msg = format!("no results files under {}", dir.display());
        warn!("{msg}");
        report.warnings.push(msg);
    }

    let mut mase = csv::Writer::from_writer(Vec::new());
    mase.write_record(["file", "scheme", "client_opt", "server_opt", "status", "mean_test_mase", "final_val_mase"])?;
    let mut bytes = csv::Writer::from_writer(Vec::new());
    bytes.write_record(["file", "scheme", "client_opt", "server_opt", "bytes_per_round_per_client", "total_bytes"])?;
    let mut loss = csv::Writer::from_writer(Vec::new());
    loss.write_record(["file", "scheme", "client_opt", "server_opt", "round", "mean_train_loss", "mean_val_mase"])?;

    for f in &files {
        let name = f.strip_prefix(dir).unwrap_or(f).display().to_string();
        for rec in read_jsonl(f)? {
            match rec {
                ResultRecord::Round { cell, record } => {
                    let mean_loss = metrics::mean(&record.train_loss);
                    loss.write_record([
                        name.clone(),
                        cell.scheme,
                        cell.client_opt.to_string(),
                        cell.server_opt.to_string(),
                        record.round.to_string(),
                        mean_loss.map(|v| v.to_string()).unwrap_or_default(),
                        record.mean_val_mase.map(|v| v.to_string()).unwrap_or_default(),
                    ])?;
                }
                ResultRecord::Summary(row) => {
                    let (c, o) = (&row.cell, |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default());
                    mase.write_record([
                        name.clone(),
                        c.scheme.clone(),
                        c.client_opt.to_string(),
                        c.server_opt.to_string(),
                        if row.is_ok() { "ok" } else { "failed" }.to_string(),
                        o(row.mean_test_mase),
                        o(row.final_val_mase),
                    ])?;
                    if row.is_ok() {
                        bytes.write_record([
                            name.clone(),
                            c.scheme.clone(),
                            c.client_opt.to_string(),
                            c.server_opt.to_string(),
                            row.bytes_per_round_per_client.to_string(),
                            row.total_bytes.to_string(),
                        ])?;
                    }
                    report.summaries.push(row);
                }
            }
        }
    }

    create_dir(out)?;
    for (w, file) in [(mase, "mase.csv"), (bytes, "bytes.csv"), (loss, "loss.csv")] {
        let buf = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        write_text(&out.join(file), std::str::from_utf8(&buf).expect("csv output is UTF-8"))?;
    }
    Ok(report)
}
