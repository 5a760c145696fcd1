//! CSV ingestion and emission for datasets, simulation truth and per-unit
//! results. Header required; a blank cell is a missing value.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{validate_dataset, Dataset, Observation, OutcomeKind, Setting};
use crate::error::{Error, Result};
use crate::pipeline::{CategoricalResult, ConformalResult};
use crate::simgen::SimTruth;

/// Column positions of a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    x: Vec<usize>,
    s: Vec<usize>,
    a: usize,
    y: Option<usize>,
    d: usize,
    group: Option<usize>,
}

/// Collects `prefix1, prefix2, ...` in order; a gap or a stray suffix is an error.
fn numbered(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                found.push((k, col));
            }
        }
    }
    found.sort_unstable();
    for (pos, &(k, col)) in found.iter().enumerate() {
        if k != pos + 1 {
            return Err(Error::Csv(format!("column {}: expected {prefix}{} in the {prefix}-block", col + 1, pos + 1)));
        }
    }
    Ok(found.into_iter().map(|(_, c)| c).collect())
}

impl Layout {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let require =
            |name: &str| find(name).ok_or_else(|| Error::Csv(format!("header: missing required column `{name}`")));
        let x = numbered(header, "x")?;
        if x.is_empty() {
            return Err(Error::Csv("header: no covariate columns x1..".into()));
        }
        Ok(Layout {
            x,
            s: numbered(header, "s")?,
            a: require("a")?,
            y: find("y"),
            d: require("d")?,
            group: find("group"),
        })
    }
}

fn cell(rec: &csv::StringRecord, col: usize, line: usize) -> Result<&str> {
    rec.get(col).map(str::trim).ok_or_else(|| Error::Csv(format!("line {line}, column {}: row is too short", col + 1)))
}

fn real(rec: &csv::StringRecord, col: usize, line: usize, name: &str) -> Result<Option<f64>> {
    let v = cell(rec, col, line)?;
    if v.is_empty() || v.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let parsed: f64 =
        v.parse().map_err(|_| Error::Csv(format!("line {line}, column {} ({name}): cannot parse `{v}`", col + 1)))?;
    if !parsed.is_finite() {
        return Err(Error::Csv(format!("line {line}, column {} ({name}): non-finite value", col + 1)));
    }
    Ok(Some(parsed))
}

fn required(rec: &csv::StringRecord, col: usize, line: usize, name: &str) -> Result<f64> {
    real(rec, col, line, name)?
        .ok_or_else(|| Error::Csv(format!("line {line}, column {} ({name}): missing value", col + 1)))
}

fn binary(rec: &csv::StringRecord, col: usize, line: usize, name: &str) -> Result<u8> {
    match required(rec, col, line, name)? {
        0.0 => Ok(0),
        1.0 => Ok(1),
        v => Err(Error::Csv(format!("line {line}, column {} ({name}): expected 0 or 1, got {v}", col + 1))),
    }
}

fn infer_setting(obs: &[Observation]) -> Setting {
    if obs.iter().all(|o| o.s.is_none()) {
        Setting::S1
    } else if obs.iter().all(|o| o.s.is_some()) {
        Setting::S2
    } else {
        Setting::S3
    }
}

/// Parses a dataset; `setting` defaults to the one implied by which rows
/// carry surrogates.
pub fn read_dataset_from<R: Read>(reader: R, setting: Option<Setting>, kind: OutcomeKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let layout = Layout::from_header(&header)?;
    let mut obs = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // line 1 is the header
        let line = r + 2;
        let x = layout.x.iter().map(|&c| required(&rec, c, line, "x")).collect::<Result<Vec<f64>>>()?;
        let s_cells = layout.s.iter().map(|&c| real(&rec, c, line, "s")).collect::<Result<Vec<Option<f64>>>>()?;
        let s = match s_cells.iter().filter(|v| v.is_some()).count() {
            0 => None,
            k if k == s_cells.len() => Some(s_cells.into_iter().flatten().collect()),
            _ => return Err(Error::Csv(format!("line {line}: surrogate columns partially missing"))),
        };
        let y = match layout.y {
            Some(c) => real(&rec, c, line, "y")?,
            None => None,
        };
        let d = binary(&rec, layout.d, line, "d")?;
        if d == 0 && y.is_some() {
            return Err(Error::MissingnessViolation(format!(
                "line {line}, column {} (y): outcome present on a target row (d=0)",
                layout.y.map_or(0, |c| c + 1)
            )));
        }
        if d == 1 && y.is_none() {
            return Err(Error::MissingnessViolation(format!("line {line}: outcome missing on a source row (d=1)")));
        }
        let group = match layout.group {
            Some(c) => match real(&rec, c, line, "group")? {
                Some(g) if g >= 0.0 && g.fract() == 0.0 => Some(g as u32),
                Some(g) => {
                    return Err(Error::Csv(format!("line {line}, column {} (group): invalid label {g}", c + 1)));
                }
                None => None,
            },
            None => None,
        };
        obs.push(Observation { x, a: binary(&rec, layout.a, line, "a")?, s, y, d, group });
    }
    if obs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let setting = setting.unwrap_or_else(|| infer_setting(&obs));
    validate_dataset(obs, setting, kind)
}

pub fn read_dataset(path: &Path, setting: Option<Setting>, kind: OutcomeKind) -> Result<Dataset> {
    read_dataset_from(File::open(path)?, setting, kind)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a dataset in the ingestion schema.
pub fn write_dataset_to<W: Write>(writer: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let has_group = ds.n_groups().is_some();
    let mut header: Vec<String> = (1..=ds.dim_x()).map(|j| format!("x{j}")).collect();
    header.push("a".into());
    header.extend((1..=ds.dim_s()).map(|j| format!("s{j}")));
    header.extend(["y".to_string(), "d".to_string()]);
    if has_group {
        header.push("group".into());
    }
    w.write_record(&header)?;
    for o in ds.observations() {
        let mut row: Vec<String> = o.x.iter().map(f64::to_string).collect();
        row.push(o.a.to_string());
        match &o.s {
            Some(s) => row.extend(s.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), ds.dim_s())),
        }
        row.push(fmt_opt(o.y));
        row.push(o.d.to_string());
        if has_group {
            row.push(o.group.map(|g| g.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_dataset_to(File::create(path)?, ds)
}

const TRUTH_HEADER: [&str; 9] = ["unit_id", "y0", "y1", "theta", "s0_1", "s0_2", "s1_1", "s1_2", "e_a"];

/// Writes the potential outcomes and surrogates of every unit.
pub fn write_truth_to<W: Write>(writer: W, truth: &SimTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRUTH_HEADER)?;
    for i in 0..truth.len() {
        let row = [
            i as f64,
            truth.y0[i],
            truth.y1[i],
            truth.theta[i],
            truth.s0[i][0],
            truth.s0[i][1],
            truth.s1[i][0],
            truth.s1[i][1],
            truth.e_a[i],
        ];
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth(path: &Path, truth: &SimTruth) -> Result<()> {
    write_truth_to(File::create(path)?, truth)
}

/// Reads a truth table; rows must be ordered by `unit_id` from 0.
pub fn read_truth_from<R: Read>(reader: R) -> Result<SimTruth> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = TRUTH_HEADER
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Csv(format!("truth header: missing column `{name}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut t = SimTruth::default();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let v = cols
            .iter()
            .zip(TRUTH_HEADER)
            .map(|(&c, name)| required(&rec, c, line, name))
            .collect::<Result<Vec<f64>>>()?;
        if v[0] != r as f64 {
            return Err(Error::AlignmentError(format!("line {line}: unit_id {} out of order", v[0])));
        }
        t.y0.push(v[1]);
        t.y1.push(v[2]);
        t.theta.push(v[3]);
        t.s0.push([v[4], v[5]]);
        t.s1.push([v[6], v[7]]);
        t.e_a.push(v[8]);
    }
    Ok(t)
}

pub fn read_truth(path: &Path) -> Result<SimTruth> {
    read_truth_from(File::open(path)?)
}

fn check_alignment(id: usize, truth: Option<&SimTruth>) -> Result<()> {
    match truth {
        Some(t) if id >= t.len() => {
            Err(Error::AlignmentError(format!("unit {id} beyond truth table of {} rows", t.len())))
        }
        _ => Ok(()),
    }
}

/// Per-unit interval rows: `unit_id, d, a, group, theta_truth, lower, upper,
/// covered, method`. Truth columns are blank without a truth table; an
/// empty interval has blank endpoints.
pub fn write_results_to<W: Write>(writer: W, results: &[ConformalResult], truth: Option<&SimTruth>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit_id", "d", "a", "group", "theta_truth", "lower", "upper", "covered", "method"])?;
    for res in results {
        for u in &res.units {
            check_alignment(u.id, truth)?;
            let theta = truth.map(|t| t.theta[u.id]);
            let covered = theta.map(|th| u.ite.is_some_and(|iv| iv.contains(th)));
            w.write_record([
                u.id.to_string(),
                u.d.to_string(),
                u.a.to_string(),
                u.group.map(|g| g.to_string()).unwrap_or_default(),
                fmt_opt(theta),
                fmt_opt(u.ite.map(|iv| iv.lower)),
                fmt_opt(u.ite.map(|iv| iv.upper)),
                covered.map(|c| (c as u8).to_string()).unwrap_or_default(),
                res.method.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_results(path: &Path, results: &[ConformalResult], truth: Option<&SimTruth>) -> Result<()> {
    write_results_to(File::create(path)?, results, truth)
}

/// Per-unit prediction sets: `unit_id, d, a, group, y_truth, set, size,
/// covered, method`, with labels joined by `|`.
pub fn write_set_results_to<W: Write>(
    writer: W,
    results: &[CategoricalResult],
    truth: Option<&SimTruth>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit_id", "d", "a", "group", "y_truth", "set", "size", "covered", "method"])?;
    for res in results {
        for u in &res.units {
            check_alignment(u.id, truth)?;
            let label = truth.map(|t| t.outcome(u.id, u.a));
            let set = u.set.labels().iter().map(u32::to_string).collect::<Vec<_>>().join("|");
            w.write_record([
                u.id.to_string(),
                u.d.to_string(),
                u.a.to_string(),
                u.group.map(|g| g.to_string()).unwrap_or_default(),
                fmt_opt(label),
                set,
                u.set.len().to_string(),
                label.map(|y| (u.set.contains(y as u32) as u8).to_string()).unwrap_or_default(),
                res.method.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_set_results(path: &Path, results: &[CategoricalResult], truth: Option<&SimTruth>) -> Result<()> {
    write_set_results_to(File::create(path)?, results, truth)
}
