//! Long-format CSV panels: one row per `(unit, time)` cell with columns
//! `unit`, `time`, `y`, treatment columns `x:<name>` and covariate columns
//! `z:<name>`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use qte_core::PanelDataset;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Column mapping for [`ingest_csv`].
#[derive(Debug, Clone)]
pub struct Schema {
    pub unit: String,
    pub time: String,
    pub y: String,
    pub x_prefix: String,
    pub z_prefix: String,
    /// Prepend a constant covariate named `intercept`.
    pub intercept: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            y: "y".into(),
            x_prefix: "x:".into(),
            z_prefix: "z:".into(),
            intercept: true,
        }
    }
}

/// A parsed panel and the SHA-256 of the bytes it came from.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: PanelDataset,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Ingested> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    let data = parse_csv(&bytes, schema)?;
    Ok(Ingested {
        data,
        sha256: sha256_hex(&bytes),
        bytes: bytes.len(),
    })
}

struct Row {
    y: f64,
    x: Vec<f64>,
    z: Vec<f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::MissingColumn(name.to_string()))
}

fn prefixed(headers: &csv::StringRecord, prefix: &str) -> Vec<(usize, String)> {
    headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(prefix).map(|n| (i, n.to_string())))
        .collect()
}

/// Pivots long-format rows into a balanced panel. Units keep their order of
/// first appearance; times are sorted numerically and relabelled `1..T` in
/// position while their original text is kept as the period label.
pub fn parse_csv(bytes: &[u8], schema: &Schema) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let (ui, ti, yi) = (
        column(&headers, &schema.unit)?,
        column(&headers, &schema.time)?,
        column(&headers, &schema.y)?,
    );
    let x_cols = prefixed(&headers, &schema.x_prefix);
    if x_cols.is_empty() {
        return Err(CliError::MissingColumn(format!("{}*", schema.x_prefix)));
    }
    let z_cols = prefixed(&headers, &schema.z_prefix);
    if z_cols.is_empty() && !schema.intercept {
        return Err(CliError::MissingColumn(format!("{}*", schema.z_prefix)));
    }

    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    // keyed by the bit pattern of the parsed time, with -0 folded into 0
    let mut times: Vec<(f64, String)> = Vec::new();
    let mut time_index: HashMap<u64, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, Row)> = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |idx: usize| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|_| CliError::NonNumericCell {
                    row: line,
                    col: headers[idx].to_string(),
                })
        };
        let time = num(ti)? + 0.0;
        let unit = record[ui].to_string();
        let u = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_ids.push(unit);
            unit_ids.len() - 1
        });
        let t = *time_index.entry(time.to_bits()).or_insert_with(|| {
            times.push((time, record[ti].to_string()));
            times.len() - 1
        });
        let mut z = Vec::with_capacity(z_cols.len() + 1);
        if schema.intercept {
            z.push(1.0);
        }
        for &(c, _) in &z_cols {
            z.push(num(c)?);
        }
        let x = x_cols.iter().map(|&(c, _)| num(c)).collect::<Result<_>>()?;
        cells.push((u, t, Row { y: num(yi)?, x, z }));
    }

    let n = unit_ids.len();
    let periods = times.len();
    let mut order: Vec<usize> = (0..periods).collect();
    order.sort_by(|&a, &b| times[a].0.total_cmp(&times[b].0));
    let mut rank = vec![0; periods];
    for (r, &t) in order.iter().enumerate() {
        rank[t] = r;
    }

    let mut grid: Vec<Option<Row>> = (0..n * periods).map(|_| None).collect();
    for (u, t, row) in cells {
        let slot = &mut grid[u * periods + rank[t]];
        if slot.is_some() {
            return Err(CliError::DuplicateCell {
                unit: unit_ids[u].clone(),
                time: times[t].1.clone(),
            });
        }
        *slot = Some(row);
    }
    let missing: Vec<String> = (0..n)
        .filter(|&u| (0..periods).any(|t| grid[u * periods + t].is_none()))
        .map(|u| unit_ids[u].clone())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::UnbalancedPanel(missing));
    }

    let dx = x_cols.len();
    let dz = z_cols.len() + usize::from(schema.intercept);
    let (mut y, mut x, mut z) = (
        Vec::with_capacity(n * periods),
        Vec::with_capacity(n * periods * dx),
        Vec::with_capacity(n * periods * dz),
    );
    for row in grid.into_iter().flatten() {
        y.push(row.y);
        x.extend(row.x);
        z.extend(row.z);
    }
    let mut z_names: Vec<String> = Vec::with_capacity(dz);
    if schema.intercept {
        z_names.push("intercept".into());
    }
    z_names.extend(z_cols.into_iter().map(|(_, name)| name));
    Ok(PanelDataset::new(n, periods, dx, dz, y, x, z)?
        .with_unit_ids(unit_ids)?
        .with_period_labels(order.iter().map(|&t| times[t].1.clone()).collect())?
        .with_names(x_cols.into_iter().map(|(_, name)| name).collect(), z_names)?)
}

/// Writes `data` in the format read by [`parse_csv`]. With `schema.intercept`
/// the first covariate is dropped and must be identically 1.
pub fn write_csv<W: Write>(data: &PanelDataset, schema: &Schema, out: W) -> Result<()> {
    let skip = usize::from(schema.intercept);
    if schema.intercept
        && (0..data.n()).any(|i| (0..data.periods()).any(|t| data.z(i, t)[0] != 1.0))
    {
        return Err(CliError::Usage(
            "first covariate is not an intercept; write with intercept=false".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.unit.clone(), schema.time.clone(), schema.y.clone()];
    header.extend(
        data.x_names()
            .iter()
            .map(|n| format!("{}{n}", schema.x_prefix)),
    );
    header.extend(
        data.z_names()[skip..]
            .iter()
            .map(|n| format!("{}{n}", schema.z_prefix)),
    );
    w.write_record(&header)?;
    for i in 0..data.n() {
        for t in 0..data.periods() {
            let mut rec = vec![
                data.unit_ids()[i].clone(),
                data.period_labels()[t].clone(),
                data.y(i, t).to_string(),
            ];
            rec.extend(data.x(i, t).iter().map(f64::to_string));
            rec.extend(data.z(i, t)[skip..].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io("csv output", e))?;
    Ok(())
}
