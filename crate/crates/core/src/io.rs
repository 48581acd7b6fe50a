//! Long-format panel files: one row per `(unit, time)` with columns
//! `unit, time, y, x1, ..., xp`, as CSV or as a JSON array of objects.
//!
//! Rows may come in any order but must cover the full unit x time grid.
//! Identifiers sort numerically when every one parses as a number and
//! lexicographically otherwise.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::panel::PanelData;

#[derive(Debug, Clone)]
pub struct PanelInput {
    pub data: PanelData,
    /// Unit identifiers in row order of `data`.
    pub units: Vec<String>,
    pub times: Vec<String>,
}

struct Row {
    line: usize,
    unit: String,
    time: String,
    y: f64,
    x: Vec<f64>,
}

fn sort_ids(ids: &mut [String]) {
    let numeric: Option<Vec<f64>> = ids.iter().map(|s| s.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => ids.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        }),
        None => ids.sort(),
    }
}

/// Maps header names to positions; covariates must be `x1..xp` with no gaps.
struct Layout {
    unit: usize,
    time: usize,
    y: usize,
    x: Vec<usize>,
}

fn layout<'a>(names: impl Iterator<Item = &'a str>) -> Result<Layout> {
    let mut unit = None;
    let mut time = None;
    let mut y = None;
    let mut xs = BTreeMap::new();
    for (pos, name) in names.enumerate() {
        let name = name.trim();
        match name {
            "unit" => unit = Some(pos),
            "time" => time = Some(pos),
            "y" => y = Some(pos),
            _ => {
                if let Some(j) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()).filter(|&j| j >= 1) {
                    if xs.insert(j, pos).is_some() {
                        return Err(Error::Input { line: 1, message: format!("duplicate column '{name}'") });
                    }
                }
            }
        }
    }
    let missing = |col: &str| Error::Input { line: 1, message: format!("missing column '{col}'") };
    let (unit, time, y) = (unit.ok_or_else(|| missing("unit"))?, time.ok_or_else(|| missing("time"))?, y.ok_or_else(|| missing("y"))?);
    let p = xs.keys().next_back().copied().unwrap_or(0);
    if p == 0 {
        return Err(Error::Input { line: 1, message: "missing covariate column 'x1'".into() });
    }
    let x = (1..=p)
        .map(|j| xs.get(&j).copied().ok_or_else(|| Error::Input { line: 1, message: format!("missing covariate column 'x{j}'") }))
        .collect::<Result<_>>()?;
    Ok(Layout { unit, time, y, x })
}

fn parse_number(field: &str, column: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Input {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Input { line, message: format!("column '{column}': non-finite value") });
    }
    Ok(v)
}

fn assemble(rows: Vec<Row>) -> Result<PanelInput> {
    if rows.is_empty() {
        return Err(Error::Input { line: 1, message: "no data rows".into() });
    }
    let p = rows[0].x.len();
    let mut units: Vec<String> = rows.iter().map(|r| r.unit.clone()).collect();
    let mut times: Vec<String> = rows.iter().map(|r| r.time.clone()).collect();
    units.sort();
    units.dedup();
    times.sort();
    times.dedup();
    sort_ids(&mut units);
    sort_ids(&mut times);
    let unit_pos: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let time_pos: HashMap<&str, usize> = times.iter().enumerate().map(|(s, t)| (t.as_str(), s)).collect();
    let (n, t) = (units.len(), times.len());
    let mut seen: Vec<Option<usize>> = vec![None; n * t];
    let mut y = vec![0.0; n * t];
    let mut x = vec![0.0; n * t * p];
    for row in &rows {
        let cell = unit_pos[row.unit.as_str()] * t + time_pos[row.time.as_str()];
        if let Some(first) = seen[cell] {
            return Err(Error::Input {
                line: row.line,
                message: format!("duplicate observation for unit '{}' time '{}' (first at line {first})", row.unit, row.time),
            });
        }
        seen[cell] = Some(row.line);
        y[cell] = row.y;
        x[cell * p..(cell + 1) * p].copy_from_slice(&row.x);
    }
    if let Some(cell) = seen.iter().position(Option::is_none) {
        return Err(Error::IncompletePanel(format!(
            "unit '{}' has no observation for time '{}' ({} of {} cells present)",
            units[cell / t],
            times[cell % t],
            rows.len(),
            n * t
        )));
    }
    Ok(PanelInput { data: PanelData::new(n, t, p, y, x)?, units, times })
}

pub fn read_csv<R: Read>(reader: R) -> Result<PanelInput> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let lay = layout(headers.iter())?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Input { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |pos: usize, col: &str| {
            record
                .get(pos)
                .ok_or_else(|| Error::Input { line, message: format!("missing field '{col}'") })
        };
        let x = lay
            .x
            .iter()
            .enumerate()
            .map(|(j, &pos)| {
                let col = format!("x{}", j + 1);
                parse_number(get(pos, &col)?, &col, line)
            })
            .collect::<Result<_>>()?;
        rows.push(Row {
            line,
            unit: get(lay.unit, "unit")?.to_string(),
            time: get(lay.time, "time")?.to_string(),
            y: parse_number(get(lay.y, "y")?, "y", line)?,
            x,
        });
    }
    assemble(rows)
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads `[{"unit": .., "time": .., "y": .., "x1": .., ...}, ...]`. Errors
/// report the 1-based record number as the line.
pub fn read_json<R: Read>(reader: R) -> Result<PanelInput> {
    let records: Vec<serde_json::Map<String, Value>> = serde_json::from_reader(reader).map_err(|e| Error::Input {
        line: e.line(),
        message: format!("invalid JSON: {e}"),
    })?;
    let first = records.first().ok_or(Error::Input { line: 1, message: "no data rows".into() })?;
    let names: Vec<&str> = first.keys().map(String::as_str).collect();
    let lay = layout(names.iter().copied())?;
    let x_names: Vec<&str> = lay.x.iter().map(|&pos| names[pos]).collect();
    let mut rows = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let line = r + 1;
        let field = |name: &str| rec.get(name).ok_or_else(|| Error::Input { line, message: format!("record {line}: missing field '{name}'") });
        let number = |name: &str| -> Result<f64> {
            let v = field(name)?
                .as_f64()
                .ok_or_else(|| Error::Input { line, message: format!("record {line}: '{name}' is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Input { line, message: format!("record {line}: '{name}' is not finite") });
            }
            Ok(v)
        };
        let id = |name: &str| -> Result<String> {
            id_string(field(name)?).ok_or_else(|| Error::Input { line, message: format!("record {line}: '{name}' must be a string or number") })
        };
        rows.push(Row {
            line,
            unit: id("unit")?,
            time: id("time")?,
            y: number("y")?,
            x: x_names.iter().map(|name| number(name)).collect::<Result<_>>()?,
        });
    }
    assemble(rows)
}

/// Dispatches on the file extension: `.json` is JSON, anything else CSV.
pub fn read_panel(path: &Path) -> Result<PanelInput> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => read_json(reader),
        _ => read_csv(reader),
    }
}

/// Writes `data` in long CSV format with 1-based unit and time ids.
pub fn write_csv<W: Write>(data: &PanelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string(), "time".into(), "y".into()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..data.n() {
        for s in 0..data.t() {
            let mut rec = vec![(i + 1).to_string(), (s + 1).to_string(), data.response(i, s).to_string()];
            rec.extend(data.covariates(i, s).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
