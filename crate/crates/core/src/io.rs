//! CSV and JSON file formats.
//!
//! CSV files are comma-separated with a header row; an empty field means missing. States
//! are written 1-based.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::check::DwellComparison;
use crate::dwell::DwellPmf;
use crate::error::{Error, Result};
use crate::estimate::Bands;
use crate::hmm::{ObservationSeries, Simulation};
use crate::link::cycle_position;
use crate::stationary::PeriodicDistribution;

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

/// Reads observation series from columns `id, phase, count` and an optional `condition`.
///
/// Rows are grouped by `id` in order of first appearance. Within a series, phases must
/// advance by one step per row (wrapping after `period` when it is given). Other columns,
/// such as the `state` column written by [`write_simulation_csv`], are ignored.
pub fn read_series_csv(
    path: impl AsRef<Path>,
    period: Option<usize>,
) -> Result<Vec<ObservationSeries>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(phase_col), Some(count_col)) =
        (column("id"), column("phase"), column("count"))
    else {
        return Err(parse_err(
            path,
            1,
            "header must contain id, phase and count",
        ));
    };
    let cond_col = column("condition");

    let mut series: Vec<ObservationSeries> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut last_phase: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = &record[id_col];
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        let phase: usize = record[phase_col].parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("invalid phase {:?}", &record[phase_col]),
            )
        })?;
        if phase < 1 || period.is_some_and(|l| phase > l) {
            return Err(parse_err(path, line, format!("phase {phase} out of range")));
        }
        let count = match &record[count_col] {
            "" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|_| parse_err(path, line, format!("invalid count {s:?}")))?,
            ),
        };
        let condition = cond_col
            .map(|c| record[c].to_string())
            .filter(|c| !c.is_empty());
        match index.get(id) {
            Some(&k) => {
                let expected = match period {
                    Some(l) => cycle_position(last_phase[k] as i64 + 1, l),
                    None => last_phase[k] + 1,
                };
                if phase != expected {
                    return Err(parse_err(
                        path,
                        line,
                        format!(
                            "series {id}: phase {phase} does not follow {}",
                            last_phase[k]
                        ),
                    ));
                }
                if series[k].condition != condition {
                    return Err(parse_err(
                        path,
                        line,
                        format!("series {id}: condition changes"),
                    ));
                }
                series[k].values.push(count);
                last_phase[k] = phase;
            }
            None => {
                index.insert(id.to_string(), series.len());
                let mut s = ObservationSeries::new(id, phase, vec![count]);
                s.condition = condition;
                series.push(s);
                last_phase.push(phase);
            }
        }
    }
    if series.is_empty() {
        return Err(parse_err(path, 1, "no observations"));
    }
    Ok(series)
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn row<I, S>(path: &Path, w: &mut csv::Writer<BufWriter<File>>, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| csv_err(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `id, phase, count[, condition]`.
pub fn write_series_csv(
    path: impl AsRef<Path>,
    series: &[ObservationSeries],
    period: usize,
) -> Result<()> {
    write_rows(path.as_ref(), series, None, period)
}

/// Writes `id, phase, count, state[, condition]`; readable by [`read_series_csv`].
pub fn write_simulation_csv(
    path: impl AsRef<Path>,
    sims: &[Simulation],
    period: usize,
) -> Result<()> {
    let series: Vec<ObservationSeries> = sims.iter().map(|s| s.series.clone()).collect();
    let states: Vec<&[usize]> = sims.iter().map(|s| s.states.as_slice()).collect();
    write_rows(path.as_ref(), &series, Some(&states), period)
}

fn write_rows(
    path: &Path,
    series: &[ObservationSeries],
    states: Option<&[&[usize]]>,
    period: usize,
) -> Result<()> {
    let with_condition = series.iter().any(|s| s.condition.is_some());
    let mut w = writer(path)?;
    let mut header = vec!["id", "phase", "count"];
    if states.is_some() {
        header.push("state");
    }
    if with_condition {
        header.push("condition");
    }
    row(path, &mut w, &header)?;
    for (k, s) in series.iter().enumerate() {
        for (j, v) in s.values.iter().enumerate() {
            let mut fields = vec![s.id.clone(), s.phase_of(j, period).to_string(), opt(*v)];
            if let Some(states) = states {
                fields.push((states[k][j] + 1).to_string());
            }
            if with_condition {
                fields.push(s.condition.clone().unwrap_or_default());
            }
            row(path, &mut w, &fields)?;
        }
    }
    finish(path, w)
}

/// Writes `t, state, probability, kind` for each distribution in turn.
pub fn write_distribution_csv(
    path: impl AsRef<Path>,
    dists: &[&PeriodicDistribution],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    row(path, &mut w, ["t", "state", "probability", "kind"])?;
    for d in dists {
        for (t, probs) in d.probs().iter().enumerate() {
            for (i, p) in probs.iter().enumerate() {
                row(
                    path,
                    &mut w,
                    [
                        (t + 1).to_string(),
                        (i + 1).to_string(),
                        p.to_string(),
                        d.kind.to_string(),
                    ],
                )?;
            }
        }
    }
    finish(path, w)
}

/// Writes `state, start_time, r, probability`; `start_time` is empty for overall pmfs.
pub fn write_dwell_csv(path: impl AsRef<Path>, pmfs: &[DwellPmf]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    row(path, &mut w, ["state", "start_time", "r", "probability"])?;
    for d in pmfs {
        for (k, p) in d.pmf.iter().enumerate() {
            row(
                path,
                &mut w,
                [
                    (d.state + 1).to_string(),
                    opt(d.start_time),
                    (k + 1).to_string(),
                    p.to_string(),
                ],
            )?;
        }
    }
    finish(path, w)
}

/// One row of a dwell-mean table; `t` is `None` for the overall mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRow {
    pub state: usize,
    pub t: Option<usize>,
    pub mean: f64,
}

/// Writes `state, t, mean`.
pub fn write_means_csv(path: impl AsRef<Path>, rows: &[MeanRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    row(path, &mut w, ["state", "t", "mean"])?;
    for r in rows {
        row(
            path,
            &mut w,
            [(r.state + 1).to_string(), opt(r.t), r.mean.to_string()],
        )?;
    }
    finish(path, w)
}

/// Writes `state, r, analytic, empirical`.
pub fn write_comparison_csv(path: impl AsRef<Path>, reports: &[DwellComparison]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    row(path, &mut w, ["state", "r", "analytic", "empirical"])?;
    for c in reports {
        for r in &c.rows {
            row(
                path,
                &mut w,
                [
                    (c.state + 1).to_string(),
                    r.r.to_string(),
                    r.analytic.to_string(),
                    r.empirical.to_string(),
                ],
            )?;
        }
    }
    finish(path, w)
}

/// Writes `quantity, state, index, estimate, lower, upper, level`.
pub fn write_bands_csv(path: impl AsRef<Path>, bands: &[(String, usize, Bands)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    row(
        path,
        &mut w,
        [
            "quantity", "state", "index", "estimate", "lower", "upper", "level",
        ],
    )?;
    for (name, state, b) in bands {
        for k in 0..b.estimate.len() {
            row(
                path,
                &mut w,
                [
                    name.clone(),
                    (state + 1).to_string(),
                    (k + 1).to_string(),
                    b.estimate[k].to_string(),
                    b.lower[k].to_string(),
                    b.upper[k].to_string(),
                    b.level.to_string(),
                ],
            )?;
        }
    }
    finish(path, w)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
