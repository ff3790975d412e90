//! Evaluating a stored surrogate at points read from CSV.

use std::io::{Read, Write};

use mlas::MlasSurrogate;
use nalgebra::DVector;

use crate::error::{CliError, CliResult};

/// Parses headerless CSV rows of `dim` numbers each.
pub fn read_points<R: Read>(reader: R, dim: usize) -> CliResult<Vec<DVector<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(CliError::Input(format!("point {i} has {} coordinates, the surrogate expects {dim}", rec.len())));
        }
        let values = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Input(format!("point {i}: `{s}`: {e}"))))
            .collect::<CliResult<Vec<_>>>()?;
        points.push(DVector::from_vec(values));
    }
    Ok(points)
}

/// Writes `index,value` rows; the header is always present.
pub fn write_values<W: Write>(writer: W, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io("writing values", e))?;
    Ok(())
}

pub fn evaluate_surrogate<R: Read, W: Write>(surrogate_json: &str, points: R, out: W) -> CliResult<usize> {
    let s = MlasSurrogate::<f64>::from_json(surrogate_json)?;
    let pts = read_points(points, s.dim)?;
    let values = s.evaluate_many(&pts)?;
    write_values(out, &values)?;
    Ok(values.len())
}
