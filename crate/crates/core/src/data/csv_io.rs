use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{ClientSeries, CALENDAR_CHANNELS, FEATURES};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "timestamp",
    "load",
    "temperature",
    "windspeed",
    "floor_area",
    "wall_area",
    "window_area",
];

const TS_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];

fn parse_ts(s: &str) -> Option<NaiveDateTime> {
    TS_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

/// Read one client's series. The header must name exactly the columns of
/// [`CSV_HEADER`] (any order); hour and day-of-week are derived from the
/// timestamp, giving `d = 7` feature channels.
pub fn load_csv(path: &Path) -> Result<ClientSeries> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let src = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();

    let mut col = [0usize; 7];
    for (k, want) in CSV_HEADER.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == *want)
            .ok_or_else(|| Error::data(&src, format!("missing column `{want}`")))?;
    }
    let extra: Vec<&str> = headers.iter().filter(|h| !CSV_HEADER.contains(h)).collect();
    if !extra.is_empty() {
        return Err(Error::data(
            &src,
            format!(
                "schema error: unexpected columns {extra:?} would give d = {} feature channels, expected {FEATURES}",
                FEATURES + extra.len()
            ),
        ));
    }

    let mut timestamps = Vec::new();
    let mut load = Vec::new();
    let mut physical = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let line = k + 2;
        let field = |c: usize| rec.get(col[c]).unwrap_or("");
        let ts = parse_ts(field(0))
            .ok_or_else(|| Error::data(&src, format!("line {line}: bad timestamp `{}`", field(0))))?;
        let num = |c: usize| -> Result<f64> {
            let raw = field(c);
            let v: f64 = raw.parse().map_err(|_| {
                Error::data(&src, format!("line {line}: `{}` is not a number: `{raw}`", CSV_HEADER[c]))
            })?;
            if v.is_nan() {
                return Err(Error::data(&src, format!("line {line}: `{}` is NaN", CSV_HEADER[c])));
            }
            Ok(v)
        };
        timestamps.push(ts);
        load.push(num(1)?);
        let mut p = [0.0; FEATURES - CALENDAR_CHANNELS];
        for (j, slot) in p.iter_mut().enumerate() {
            *slot = num(2 + j)?;
        }
        physical.push(p);
    }
    if load.is_empty() {
        return Err(Error::data(&src, "no data rows"));
    }
    ClientSeries::from_parts(name, timestamps, load, physical).map_err(|e| match e {
        Error::Data { message, .. } => Error::data(&src, message),
        other => other,
    })
}

/// Load every `*.csv` in `dir`, sorted by file name (one client per file).
pub fn load_csv_dir(dir: &Path) -> Result<Vec<ClientSeries>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(dir.display().to_string(), "no .csv files found"));
    }
    paths.iter().map(|p| load_csv(p)).collect()
}

pub fn write_csv(series: &ClientSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for t in 0..series.len() {
        let mut row = vec![
            series.timestamps[t].format("%Y-%m-%dT%H:%M:%S").to_string(),
            series.load[t].to_string(),
        ];
        row.extend(series.physical(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
