//! Result persistence: benchmark CSV/JSON exports and the trajectory dump
//! format.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentResult;
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Aggregate cell of the JSON export: `tables.<kind>.<system>.<controller>.<level>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub mean: f64,
    pub std: f64,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub tables: BTreeMap<String, BTreeMap<String, BTreeMap<String, BTreeMap<String, AggregateCell>>>>,
}

impl BenchReport {
    pub fn from_results(results: &[ExperimentResult]) -> Self {
        let mut tables: BTreeMap<String, BTreeMap<String, BTreeMap<String, BTreeMap<String, AggregateCell>>>> =
            BTreeMap::new();
        for result in results {
            let by_system = tables.entry(result.kind.label().to_string()).or_default();
            let by_controller = by_system.entry(result.system.clone()).or_default();
            for stat in &result.stats {
                let by_level = by_controller.entry(stat.controller.label().to_string()).or_default();
                by_level.insert(
                    result.level.label().to_string(),
                    AggregateCell {
                        mean: stat.mean_normalized,
                        std: stat.std_normalized,
                        n_excluded: stat.excluded,
                    },
                );
            }
        }
        BenchReport { schema_version: 1, tables }
    }
}

/// CSV with one row per run of every non-dropped seed.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "system",
        "controller",
        "disturbance_kind",
        "level",
        "seed",
        "raw_cost",
        "normalized_cost",
        "diverged",
    ])
    .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    for result in results {
        for record in &result.records {
            let raw = record.raw_cost.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let norm = record
                .normalized_cost
                .map(|v| format!("{v:.17e}"))
                .unwrap_or_default();
            w.write_record([
                result.system.as_str(),
                record.controller.label(),
                result.kind.label(),
                result.level.label(),
                &record.seed.to_string(),
                &raw,
                &norm,
                if record.diverged { "true" } else { "false" },
            ])
            .map_err(|e| Error::Config(format!("csv write: {e}")))?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("csv flush: {e}")))?;
    Ok(())
}

/// Serializes results to `path` in the requested format.
pub fn export_results(results: &[ExperimentResult], path: &Path, format: ExportFormat) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    match format {
        ExportFormat::Csv => {
            let file = std::fs::File::create(path).map_err(io_err)?;
            write_results_csv(results, file)
        }
        ExportFormat::Json => {
            let report = BenchReport::from_results(results);
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Config(format!("json encode: {e}")))?;
            std::fs::write(path, json).map_err(io_err)
        }
    }
}

/// Header of a trajectory dump file.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub system: String,
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub dt: f64,
}

/// Writes the trajectory dump: a `# key=value` header line, a CSV column
/// line, then one row per step with state, control (empty past the horizon),
/// and optional per-dimension marginal standard deviations.
pub fn write_trajectory_dump<W: Write>(
    mut w: W,
    header: &DumpHeader,
    traj: &Trajectory,
    stds: Option<&[DVector<f64>]>,
) -> Result<()> {
    let fmt_err = |e: std::io::Error| Error::io("<trajectory dump>".to_string(), e);
    if let Some(stds) = stds {
        if stds.len() != traj.states.len() {
            return Err(Error::dimension(
                "write_trajectory_dump",
                format!("{} std rows", traj.states.len()),
                format!("{}", stds.len()),
            ));
        }
    }
    writeln!(
        w,
        "# system={} nx={} nu={} T={} dt={}",
        header.system, header.nx, header.nu, header.horizon, header.dt
    )
    .map_err(fmt_err)?;
    let mut cols = vec!["t".to_string()];
    cols.extend((0..header.nx).map(|i| format!("x{i}")));
    cols.extend((0..header.nu).map(|i| format!("u{i}")));
    if stds.is_some() {
        cols.extend((0..header.nx).map(|i| format!("s{i}")));
    }
    writeln!(w, "{}", cols.join(",")).map_err(fmt_err)?;
    for (t, x) in traj.states.iter().enumerate() {
        let mut fields = vec![t.to_string()];
        fields.extend(x.iter().map(|v| format!("{v:.17e}")));
        if t < traj.controls.len() {
            fields.extend(traj.controls[t].iter().map(|v| format!("{v:.17e}")));
        } else {
            fields.extend(std::iter::repeat_n(String::new(), header.nu));
        }
        if let Some(stds) = stds {
            fields.extend(stds[t].iter().map(|v| format!("{v:.17e}")));
        }
        writeln!(w, "{}", fields.join(",")).map_err(fmt_err)?;
    }
    Ok(())
}

/// Parses a trajectory dump produced by [`write_trajectory_dump`].
pub fn read_trajectory_dump(content: &str) -> Result<(DumpHeader, Trajectory, Option<Vec<DVector<f64>>>)> {
    let mut lines = content.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Config("empty trajectory dump".into()))?;
    let header_line = header_line
        .strip_prefix("# ")
        .ok_or_else(|| Error::Config("trajectory dump missing '# ' header".into()))?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for kv in header_line.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed header entry '{kv}'")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| -> Result<&str> {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Config(format!("header missing '{k}'")))
    };
    let header = DumpHeader {
        system: get("system")?.to_string(),
        nx: get("nx")?.parse().map_err(|_| Error::Config("bad nx".into()))?,
        nu: get("nu")?.parse().map_err(|_| Error::Config("bad nu".into()))?,
        horizon: get("T")?.parse().map_err(|_| Error::Config("bad T".into()))?,
        dt: get("dt")?.parse().map_err(|_| Error::Config("bad dt".into()))?,
    };
    let columns_line = lines
        .next()
        .ok_or_else(|| Error::Config("trajectory dump missing column line".into()))?;
    let has_stds = columns_line.split(',').any(|c| c.starts_with('s'));

    let mut states = Vec::with_capacity(header.horizon + 1);
    let mut controls = Vec::with_capacity(header.horizon);
    let mut stds = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = 1 + header.nx + header.nu + if has_stds { header.nx } else { 0 };
        if fields.len() != expect {
            return Err(Error::Config(format!(
                "row {row}: expected {expect} fields, got {}",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("row {row}: bad number '{s}'")))
        };
        let x: Result<Vec<f64>> = fields[1..1 + header.nx].iter().map(|s| parse(s)).collect();
        states.push(DVector::from_vec(x?));
        let u_fields = &fields[1 + header.nx..1 + header.nx + header.nu];
        if !u_fields.iter().all(|s| s.is_empty()) {
            let u: Result<Vec<f64>> = u_fields.iter().map(|s| parse(s)).collect();
            controls.push(DVector::from_vec(u?));
        }
        if has_stds {
            let s: Result<Vec<f64>> = fields[1 + header.nx + header.nu..].iter().map(|s| parse(s)).collect();
            stds.push(DVector::from_vec(s?));
        }
    }
    let traj = Trajectory::new(states, controls)?;
    Ok((header, traj, if has_stds { Some(stds) } else { None }))
}
