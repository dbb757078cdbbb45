//! Reader for the text MATPOWER case format (`mpc.baseMVA`, `mpc.bus`,
//! `mpc.branch`, `mpc.gen`, `mpc.gencost`). Only the DC fields are used.

use std::collections::HashMap;

use super::{
    BranchSpec, Bus, BusType, ControlScheme, CostModel, GeneratorSpec, GridCase, Horizon,
    DEFAULT_PWL_SEGMENTS,
};
use crate::error::{Error, Result};
use crate::uncertainty::ConcentrationModel;

struct Row {
    line: usize,
    values: Vec<f64>,
}

enum Value {
    Scalar(f64),
    Matrix(Vec<Row>),
    Other,
}

/// Parses a MATPOWER case into a single-period network.
pub fn parse_matpower_case(text: &str) -> Result<GridCase> {
    let fields = read_fields(text)?;
    let base_mva = match fields.get("baseMVA") {
        Some(Value::Scalar(v)) => *v,
        Some(_) => return Err(Error::Validation("mpc.baseMVA must be a scalar".into())),
        None => return Err(Error::Validation("missing mpc.baseMVA".into())),
    };
    let table = |name: &str| -> Result<&Vec<Row>> {
        match fields.get(name) {
            Some(Value::Matrix(rows)) => Ok(rows),
            Some(_) => Err(Error::Validation(format!("mpc.{name} must be a matrix"))),
            None => Err(Error::Validation(format!("missing mpc.{name}"))),
        }
    };
    let mut warnings = Vec::new();
    for name in fields.keys() {
        if !matches!(
            name.as_str(),
            "baseMVA" | "bus" | "branch" | "gen" | "gencost" | "version"
        ) {
            warnings.push(format!("ignored field mpc.{name}"));
        }
    }

    // Buses.
    let mut buses = Vec::new();
    let mut base_load = Vec::new();
    let mut isolated = Vec::new();
    let mut shunts = 0;
    for row in table("bus")? {
        need(row, 3)?;
        let id = bus_id(row, 0)?;
        let kind = match row.values[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            4 => {
                isolated.push(id);
                continue;
            }
            k => return Err(Error::parse(row.line, format!("unknown bus type {k}"))),
        };
        if row.values.len() > 5 && (row.values[4] != 0.0 || row.values[5] != 0.0) {
            shunts += 1;
        }
        buses.push(Bus { id, kind });
        base_load.push(row.values[2] / base_mva);
    }
    if !isolated.is_empty() {
        warnings.push(format!("dropped {} isolated buses", isolated.len()));
    }
    if shunts > 0 {
        warnings.push(format!("ignored shunts at {shunts} buses"));
    }

    // Branches.
    let mut branches = Vec::new();
    let (mut taps, mut shifts, mut out_of_service) = (0, 0, 0);
    for row in table("branch")? {
        need(row, 4)?;
        let status = row.values.get(10).copied().unwrap_or(1.0);
        if status <= 0.0 {
            out_of_service += 1;
            continue;
        }
        let x = row.values[3];
        if x == 0.0 || !x.is_finite() {
            return Err(Error::parse(row.line, "branch reactance must be nonzero"));
        }
        let rate = row.values.get(5).copied().unwrap_or(0.0);
        if let Some(&tap) = row.values.get(8) {
            if tap != 0.0 && tap != 1.0 {
                taps += 1;
            }
        }
        if let Some(&shift) = row.values.get(9) {
            if shift != 0.0 {
                shifts += 1;
            }
        }
        branches.push(BranchSpec {
            from_bus: bus_id(row, 0)?,
            to_bus: bus_id(row, 1)?,
            susceptance: 1.0 / x.abs(),
            limit: (rate > 0.0).then(|| rate / base_mva),
        });
    }
    if taps > 0 {
        warnings.push(format!("ignored off-nominal tap ratios on {taps} branches"));
    }
    if shifts > 0 {
        warnings.push(format!("ignored phase shifts on {shifts} branches"));
    }
    if out_of_service > 0 {
        warnings.push(format!("dropped {out_of_service} out-of-service branches"));
    }

    // Generators and their costs, matched by row order.
    let gens = table("gen")?;
    let costs = table("gencost")?;
    if costs.len() < gens.len() {
        return Err(Error::Validation(format!(
            "{} generators but {} cost rows",
            gens.len(),
            costs.len()
        )));
    }
    let mut generators = Vec::new();
    let mut pmin_ignored = 0;
    for (row, cost_row) in gens.iter().zip(costs) {
        need(row, 10)?;
        if row.values[7] <= 0.0 {
            warnings.push(format!("dropped out-of-service generator at bus {}", row.values[0]));
            continue;
        }
        let pmax = row.values[8];
        if pmax < 0.0 {
            return Err(Error::parse(row.line, "negative Pmax"));
        }
        if row.values[9] != 0.0 {
            pmin_ignored += 1;
        }
        generators.push(GeneratorSpec {
            bus: bus_id(row, 0)?,
            pmax: vec![pmax / base_mva],
            cost: parse_cost(cost_row)?,
        });
    }
    if pmin_ignored > 0 {
        warnings.push(format!(
            "ignored nonzero Pmin on {pmin_ignored} generators; outputs range over [0, Pmax]"
        ));
    }

    for w in &warnings {
        log::warn!("{w}");
    }

    let case = GridCase {
        base_mva,
        buses,
        branches,
        generators,
        loads: vec![base_load],
        horizon: Horizon {
            periods: 1,
            delta_hours: 1.0,
        },
        renewables: Vec::new(),
        batteries: Vec::new(),
        uncertainty: ConcentrationModel::zero(0),
        load_scale: vec![1.0],
        control_scheme: ControlScheme::Aggregated,
        cost_pwl_segments: DEFAULT_PWL_SEGMENTS,
        warnings,
    };
    case.validate()?;
    Ok(case)
}

fn need(row: &Row, columns: usize) -> Result<()> {
    if row.values.len() < columns {
        return Err(Error::parse(
            row.line,
            format!("expected at least {columns} columns, found {}", row.values.len()),
        ));
    }
    Ok(())
}

fn bus_id(row: &Row, col: usize) -> Result<usize> {
    let v = row.values[col];
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::parse(row.line, format!("invalid bus number {v}")));
    }
    Ok(v as usize)
}

fn parse_cost(row: &Row) -> Result<CostModel> {
    need(row, 4)?;
    let model = row.values[0] as i64;
    let n = row.values[3];
    if n < 1.0 || n.fract() != 0.0 {
        return Err(Error::parse(row.line, format!("invalid NCOST {n}")));
    }
    let n = n as usize;
    let coeffs = &row.values[4..];
    match model {
        1 => {
            if coeffs.len() < 2 * n || n < 2 {
                return Err(Error::parse(row.line, "piecewise cost needs NCOST >= 2 points"));
            }
            let points = (0..n).map(|k| (coeffs[2 * k], coeffs[2 * k + 1])).collect();
            Ok(CostModel::Piecewise { points })
        }
        2 => {
            if coeffs.len() < n {
                return Err(Error::parse(row.line, "too few polynomial coefficients"));
            }
            let c = &coeffs[..n];
            // Highest order first; anything above quadratic must vanish.
            if n > 3 && c[..n - 3].iter().any(|v| *v != 0.0) {
                return Err(Error::parse(
                    row.line,
                    "polynomial costs above degree two are not supported",
                ));
            }
            let at = |power: usize| if power < n { c[n - 1 - power] } else { 0.0 };
            Ok(CostModel::Polynomial {
                c2: at(2),
                c1: at(1),
                c0: at(0),
            })
        }
        m => Err(Error::parse(row.line, format!("unknown cost model {m}"))),
    }
}

fn read_fields(text: &str) -> Result<HashMap<String, Value>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut fields = HashMap::new();
    let mut i = 0;
    while i < lines.len() {
        let line = strip_comment(lines[i]).trim();
        let Some(rest) = line.strip_prefix("mpc.") else {
            i += 1;
            continue;
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(Error::parse(i + 1, "expected an assignment"));
        };
        let name = name.trim().to_string();
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let (rows, next) = read_matrix(&lines, i, body)?;
            fields.insert(name, Value::Matrix(rows));
            i = next;
        } else if rhs.starts_with('{') {
            // Cell arrays (bus names and the like) are skipped.
            let mut j = i;
            while !strip_comment(lines[j]).contains('}') {
                j += 1;
                if j == lines.len() {
                    return Err(Error::parse(i + 1, "unterminated cell array"));
                }
            }
            fields.insert(name, Value::Other);
            i = j + 1;
        } else {
            let value = rhs.trim_end_matches(';').trim();
            let parsed = if value.starts_with('\'') {
                Value::Other
            } else {
                Value::Scalar(number(value).ok_or_else(|| {
                    Error::parse(i + 1, format!("cannot parse value '{value}'"))
                })?)
            };
            fields.insert(name, parsed);
            i += 1;
        }
    }
    Ok(fields)
}

/// Reads matrix rows starting with `first` (the text after `[` on line
/// `start`). Returns the rows and the index of the line after `]`.
fn read_matrix(lines: &[&str], start: usize, first: &str) -> Result<(Vec<Row>, usize)> {
    let mut rows = Vec::new();
    let mut i = start;
    let mut chunk = first.to_string();
    loop {
        let (body, closed) = match chunk.find(']') {
            Some(k) => (&chunk[..k], true),
            None => (chunk.as_str(), false),
        };
        for piece in body.split(';') {
            let tokens: Vec<&str> = piece
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let values = tokens
                .iter()
                .map(|t| {
                    number(t).ok_or_else(|| Error::parse(i + 1, format!("bad number '{t}'")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(Row { line: i + 1, values });
        }
        if closed {
            return Ok((rows, i + 1));
        }
        i += 1;
        if i == lines.len() {
            return Err(Error::parse(start + 1, "unterminated matrix"));
        }
        chunk = strip_comment(lines[i]).to_string();
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn number(token: &str) -> Option<f64> {
    match token.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}
