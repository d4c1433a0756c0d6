//! File formats.
//!
//! Paths are CSV with header `t,x` and one row per observation time. Floats
//! are written with 17 significant digits so that a re-read is bit-exact.
//! Noise level is not part of the file; it is supplied separately.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::rng::NoiseKey;
use crate::simulate::{GridLayout, ObservedPath};
use crate::statistic::TestCurve;
use crate::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_path_csv<W: Write>(path: &ObservedPath, out: W) -> Result<()> {
    write_two_columns(("t", "x"), path.times(), &path.values, out)
}

pub fn write_curve_csv<W: Write>(curve: &TestCurve, out: W) -> Result<()> {
    write_two_columns(("u", "value"), &curve.u_grid, &curve.values, out)
}

fn write_two_columns<W: Write>(header: (&str, &str), a: &[f64], b: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([header.0, header.1]).map_err(csv_err)?;
    for (x, y) in a.iter().zip(b) {
        w.write_record([fmt_f64(*x), fmt_f64(*y)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Parsed observations plus any sampling-scheme warnings.
#[derive(Debug, Clone)]
pub struct ParsedPath {
    pub path: ObservedPath,
    pub warnings: Vec<String>,
}

/// Reads a `t,x` CSV. Times must start at 0 and increase strictly.
pub fn parse_path_csv<R: Read>(input: R, eps: f64) -> Result<ParsedPath> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() != 2 || &header[0] != "t" || &header[1] != "x" {
        return Err(Error::Data {
            line: 1,
            message: format!(
                "expected header `t,x`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Data {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            match record[i].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Data {
                    line,
                    message: format!("{name} = `{}` is not a finite decimal number", &record[i]),
                }),
            }
        };
        let t = field(0, "t")?;
        let x = field(1, "x")?;
        if times.is_empty() && t != 0.0 {
            return Err(Error::Data {
                line,
                message: format!("first time must be 0, found {t}"),
            });
        }
        if let Some(&last) = times.last() {
            if t <= last {
                return Err(Error::Data {
                    line,
                    message: format!("time {t} does not exceed the previous time {last}"),
                });
            }
        }
        times.push(t);
        values.push(x);
    }
    if times.len() < 2 {
        return Err(Error::Data {
            line: 0,
            message: format!("need at least 2 observations, found {}", times.len()),
        });
    }
    let path = ObservedPath::from_observations(times, values, eps)?;
    let warnings = path.grid.warnings().to_vec();
    Ok(ParsedPath { path, warnings })
}

/// Sidecar metadata written next to a simulated path CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMeta {
    pub seed: u64,
    pub replication: u64,
    pub eps: f64,
    pub drift: String,
    pub sigma: String,
    pub x0: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub substeps: usize,
    pub layout: GridLayout,
    pub n_obs: usize,
    pub mesh: f64,
    pub scheme_ok: bool,
}

impl SimulationMeta {
    pub fn key(&self) -> NoiseKey {
        NoiseKey::new(self.seed, self.replication)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_example() {
        let parsed = parse_path_csv("t,x\n0,1\n0.5,1.2\n1,0.9".as_bytes(), 0.1).unwrap();
        assert_eq!(parsed.path.len(), 3);
        assert_eq!(parsed.path.grid.mesh(), 0.5);
        assert_eq!(parsed.path.values, vec![1.0, 1.2, 0.9]);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("0.5"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_path_csv("t,x\n0,1\n0.5,1.2\n0.4,0.9\n".as_bytes(), 0.1) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match parse_path_csv("t,x\n0,1\n0.5,abc\n".as_bytes(), 0.1) {
            Err(Error::Data { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        match parse_path_csv("t,x\n0,1\n0.5\n".as_bytes(), 0.1) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_path_csv("t,x\n0.1,1\n0.5,2\n".as_bytes(), 0.1),
            Err(Error::Data { line: 2, .. })
        ));
        assert!(parse_path_csv("t,x\n0,1\n".as_bytes(), 0.1).is_err());
        assert!(parse_path_csv("time,value\n0,1\n1,2\n".as_bytes(), 0.1).is_err());
        assert!(parse_path_csv("t,x\n0,1\n1,nan\n".as_bytes(), 0.1).is_err());
    }

    #[test]
    fn fixed_width_formatting() {
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
}
