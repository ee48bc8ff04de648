//! File formats: numeric CSV matrices with an optional header row, 1-based
//! edge lists and JSON reports. Floats are written with 12 significant
//! digits so reruns produce byte-identical files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::EdgeSet;
use crate::penalty::{DistanceInfo, LookupTable};
use crate::simulation::SimulatedInstance;

pub const SCHEMA_VERSION: u32 = 1;
pub const SIGNIFICANT_DIGITS: usize = 12;

/// `%.12g`-style formatting.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// `x` rounded to [`SIGNIFICANT_DIGITS`].
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn is_numeric(token: &str) -> bool {
    token.trim().parse::<f64>().is_ok()
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|t| t.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if let Some(first) = rows.first() {
        if first.first().map_or(false, |t| !is_numeric(t)) {
            rows.remove(0);
        }
    }
    Ok(rows)
}

/// Numeric matrix from CSV. A first row whose first token is not a number
/// is treated as a header.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let rows = read_records(path)?;
    let cols = rows.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(rows.len() * cols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has {} fields, expected {cols}",
                path.display(),
                r + 1,
                row.len()
            )));
        }
        for t in row {
            let v: f64 = t.parse().map_err(|_| {
                Error::InvalidInput(format!("{}: non-numeric value '{t}' in row {}", path.display(), r + 1))
            })?;
            values.push(v);
        }
    }
    Array2::from_shape_vec((rows.len(), cols), values).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// 1-based edge list, optional header.
pub fn read_edges(path: &Path, p: usize) -> Result<EdgeSet> {
    let rows = read_records(path)?;
    let mut pairs = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let parse = |t: &String| -> Result<usize> {
            match t.parse::<usize>() {
                Ok(v) if v >= 1 && v <= p => Ok(v - 1),
                _ => Err(Error::InvalidInput(format!(
                    "{}: row {} has node '{t}' outside 1..={p}",
                    path.display(),
                    r + 1
                ))),
            }
        };
        if row.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "{}: row {} is not a pair",
                path.display(),
                r + 1
            )));
        }
        pairs.push((parse(&row[0])?, parse(&row[1])?));
    }
    EdgeSet::from_pairs(p, pairs)
}

/// Writes `i,j` rows (1-based, `i < j`, sorted) under an `i,j` header.
pub fn write_edges(path: &Path, edges: &EdgeSet) -> Result<()> {
    let mut out = String::from("i,j\n");
    for (i, j) in edges.iter() {
        out.push_str(&format!("{},{}\n", i + 1, j + 1));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_coordinates(path: &Path) -> Result<DistanceInfo> {
    let m = read_matrix(path)?;
    if m.ncols() != 3 {
        return Err(Error::DimensionMismatch {
            what: "coordinate columns",
            expected: 3,
            found: m.ncols(),
        });
    }
    DistanceInfo::from_coordinates(m)
}

pub fn read_distances(path: &Path) -> Result<DistanceInfo> {
    DistanceInfo::from_matrix(read_matrix(path)?)
}

/// Link lookup table: two columns `x,f(x)`.
pub fn read_link_table(path: &Path) -> Result<LookupTable> {
    let m = read_matrix(path)?;
    if m.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            what: "link table columns",
            expected: 2,
            found: m.ncols(),
        });
    }
    LookupTable::new(m.rows().into_iter().map(|r| (r[0], r[1])).collect())
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if !(n.is_i64() || n.is_u64()) {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_significant(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `body` with a `schema_version` field added and every float
/// rounded to [`SIGNIFICANT_DIGITS`]. Keys come out sorted; non-finite
/// floats become `null`.
pub fn to_report(body: &impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(body)?;
    round_value(&mut v);
    let mut map = serde_json::Map::new();
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    match v {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    Ok(Value::Object(map))
}

pub fn write_json(path: &Path, body: &impl Serialize) -> Result<()> {
    let v = to_report(body)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Writes `data.csv`, `truth.edges`, `precision.csv`, `coords.csv` (when
/// the instance has coordinates) and `provenance.json` into `dir`.
pub fn write_instance(dir: &Path, inst: &SimulatedInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    let p = inst.data.n_nodes();
    let header: Vec<String> = (1..=p).map(|k| format!("x{k}")).collect();
    write_matrix(&dir.join("data.csv"), inst.data.as_array(), Some(&header))?;
    write_edges(&dir.join("truth.edges"), &inst.truth)?;
    write_matrix(&dir.join("precision.csv"), inst.precision.as_array(), None)?;
    if let Some(c) = inst.coordinates.as_ref().and_then(|d| d.coordinates()) {
        let h = ["x".to_string(), "y".to_string(), "z".to_string()];
        write_matrix(&dir.join("coords.csv"), c, Some(&h))?;
    }
    write_json(&dir.join("provenance.json"), &inst.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::distance_bernoulli_instance;
    use ndarray::array;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456.0), "123456");
        assert_eq!(format_number(1e-7), "1e-07");
        assert_eq!(format_number(1.5e20), "1.5e+20");
        assert_eq!(format_number(0.0001), "0.0001");
        assert_eq!(format_number(f64::NAN), "nan");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
    }

    #[test]
    fn rounding_to_significant_digits() {
        assert_eq!(round_significant(0.1 + 0.2), 0.3);
        assert_eq!(round_significant(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_significant(0.0), 0.0);
    }

    #[test]
    fn matrix_round_trip_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let m = array![[1.0, -2.5], [0.125, 1e-9]];
        let a = dir.path().join("a.csv");
        write_matrix(&a, &m, None).unwrap();
        assert_eq!(read_matrix(&a).unwrap(), m);
        let b = dir.path().join("b.csv");
        write_matrix(&b, &m, Some(&["u".into(), "v".into()])).unwrap();
        assert_eq!(read_matrix(&b).unwrap(), m);
    }

    #[test]
    fn ragged_or_non_numeric_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.csv");
        fs::write(&f, "1,2\n3\n").unwrap();
        assert!(read_matrix(&f).is_err());
        fs::write(&f, "1,2\n3,x\n").unwrap();
        assert!(read_matrix(&f).is_err());
    }

    #[test]
    fn edge_files_are_one_based_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("e.csv");
        let e = EdgeSet::from_pairs(4, [(2, 3), (0, 1), (1, 3)]).unwrap();
        write_edges(&f, &e).unwrap();
        assert_eq!(fs::read_to_string(&f).unwrap(), "i,j\n1,2\n2,4\n3,4\n");
        assert_eq!(read_edges(&f, 4).unwrap(), e);
        fs::write(&f, "1,5\n").unwrap();
        assert!(read_edges(&f, 4).is_err());
        fs::write(&f, "2,1\n").unwrap();
        assert!(read_edges(&f, 4).unwrap().contains(0, 1));
    }

    #[test]
    fn reports_carry_schema_version_and_rounded_floats() {
        #[derive(Serialize)]
        struct R {
            x: f64,
            k: usize,
            v: Vec<f64>,
        }
        let v = to_report(&R {
            x: 0.1 + 0.2,
            k: 3,
            v: vec![1.0 / 3.0],
        })
        .unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["x"], 0.3);
        assert_eq!(v["k"], 3);
        assert_eq!(v["v"][0], 0.333333333333);
    }

    #[test]
    fn instance_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let inst = distance_bernoulli_instance(12, 30, 1, None).unwrap();
        write_instance(dir.path(), &inst).unwrap();
        for f in [
            "data.csv",
            "truth.edges",
            "precision.csv",
            "coords.csv",
            "provenance.json",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let data = read_matrix(&dir.path().join("data.csv")).unwrap();
        assert_eq!(data.dim(), (30, 12));
        assert_eq!(read_edges(&dir.path().join("truth.edges"), 12).unwrap(), inst.truth);
        let coords = read_coordinates(&dir.path().join("coords.csv")).unwrap();
        let d = inst.coordinates.as_ref().unwrap();
        assert!((coords.get(0, 5) - d.get(0, 5)).abs() < 1e-8);
    }
}
