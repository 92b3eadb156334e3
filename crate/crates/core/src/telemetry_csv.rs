//! Telemetry as CSV: `t_s`, then five columns per ordered pair in sorted pair
//! order, `q_i_j_m, r_hat_i_j_m, v_hat_i_j_mps, I_i_j_A, F_hat_i_j_N`, with
//! satellites numbered from 1. Numbers carry 9 significant digits.

use std::io::{Read, Write};

use thiserror::Error;

use crate::sim::{PairSeries, Telemetry};

const SUFFIXES: [(&str, &str); 5] = [("q", "m"), ("r_hat", "m"), ("v_hat", "mps"), ("I", "A"), ("F_hat", "N")];

#[derive(Debug, Error)]
pub enum CsvFormatError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("telemetry has no data rows")]
    Empty,
}

/// Shortest rendering of `x` with 9 significant digits, in plain or
/// exponent notation like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn header(pairs: &[(usize, usize)]) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for &(i, j) in pairs {
        for (name, unit) in SUFFIXES {
            h.push(format!("{name}_{}_{}_{unit}", i + 1, j + 1));
        }
    }
    h
}

pub fn write_csv<W: Write>(tel: &Telemetry, out: W) -> Result<(), CsvFormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&tel.pairs))?;
    for row in &tel.rows {
        let mut rec = vec![format_sig9(row.t)];
        for p in &row.pairs {
            rec.extend([p.q, p.r_hat, p.v_hat, p.current, p.force].map(format_sig9));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Telemetry read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTelemetry {
    /// 0-based ordered pairs, in column order.
    pub pairs: Vec<(usize, usize)>,
    pub series: Vec<PairSeries>,
}

impl CsvTelemetry {
    pub fn series(&self, i: usize, j: usize) -> Option<&PairSeries> {
        self.pairs.iter().position(|&p| p == (i, j)).map(|k| &self.series[k])
    }
}

fn parse_pair(col: &str, name: &str, unit: &str) -> Option<(usize, usize)> {
    let rest = col.strip_prefix(name)?.strip_prefix('_')?.strip_suffix(unit)?.strip_suffix('_')?;
    let (a, b) = rest.split_once('_')?;
    let (a, b): (usize, usize) = (a.parse().ok()?, b.parse().ok()?);
    (a >= 1 && b >= 1 && a != b).then(|| (a - 1, b - 1))
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvTelemetry, CsvFormatError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if head.first().map(String::as_str) != Some("t_s") {
        return Err(CsvFormatError::Header("first column must be t_s".into()));
    }
    if head.len() < 6 || !(head.len() - 1).is_multiple_of(5) {
        return Err(CsvFormatError::Header(format!(
            "expected t_s plus five columns per pair, found {} columns",
            head.len()
        )));
    }
    let mut pairs = Vec::new();
    for chunk in head[1..].chunks(5) {
        let mut pair = None;
        for (col, (name, unit)) in chunk.iter().zip(SUFFIXES) {
            let p = parse_pair(col, name, unit)
                .ok_or_else(|| CsvFormatError::Header(format!("unexpected column `{col}`")))?;
            if pair.is_some_and(|q| q != p) {
                return Err(CsvFormatError::Header(format!("column `{col}` breaks its pair group")));
            }
            pair = Some(p);
        }
        pairs.push(pair.expect("five columns"));
    }
    let mut series = vec![PairSeries::default(); pairs.len()];
    let mut last_t = f64::NEG_INFINITY;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = n + 1;
        if rec.len() != head.len() {
            return Err(CsvFormatError::Row {
                row,
                message: format!("{} fields, expected {}", rec.len(), head.len()),
            });
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| CsvFormatError::Row {
                    row,
                    message: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let t = vals[0];
        if !(t > last_t) {
            return Err(CsvFormatError::Row {
                row,
                message: format!("time {t} does not increase"),
            });
        }
        last_t = t;
        for (k, s) in series.iter_mut().enumerate() {
            let v = &vals[1 + 5 * k..6 + 5 * k];
            s.t.push(t);
            s.q.push(v[0]);
            s.r_hat.push(v[1]);
            s.v_hat.push(v[2]);
            s.current.push(v[3]);
            s.force.push(v[4]);
        }
    }
    if series[0].t.is_empty() {
        return Err(CsvFormatError::Empty);
    }
    Ok(CsvTelemetry { pairs, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(0.45), "0.45");
        assert_eq!(format_sig9(-0.406123456789), "-0.406123457");
        assert_eq!(format_sig9(18.3), "18.3");
        assert_eq!(format_sig9(2.6e-3), "0.0026");
        assert_eq!(format_sig9(1.43e-7), "1.43e-7");
        assert_eq!(format_sig9(123456789012.0), "1.23456789e11");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(100.0), "100");
        for x in [1.0 / 3.0, -7.123456789e-9, 42.0, 3.8e12] {
            let back: f64 = format_sig9(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-9 * x.abs());
        }
    }

    #[test]
    fn header_parsing_errors() {
        assert!(read_csv("".as_bytes()).is_err());
        assert!(matches!(read_csv("x,y\n1,2\n".as_bytes()), Err(CsvFormatError::Header(_))));
        let head = "t_s,q_1_2_m,r_hat_1_2_m,v_hat_1_2_mps,I_1_2_A,F_hat_1_2_N\n";
        assert!(matches!(read_csv(head.as_bytes()), Err(CsvFormatError::Empty)));
        let ok = read_csv(format!("{head}0,0.4,0.4,0,0,0\n0.1,0.41,0.4,0.01,1,0.002\n").as_bytes()).unwrap();
        assert_eq!(ok.pairs, vec![(0, 1)]);
        assert_eq!(ok.series[0].force, vec![0.0, 0.002]);
        assert!(matches!(
            read_csv(format!("{head}0,0.4,0.4,0,0,zz\n").as_bytes()),
            Err(CsvFormatError::Row { .. })
        ));
        assert!(matches!(
            read_csv(format!("{head}0.1,0.4,0.4,0,0,0\n0.1,0.4,0.4,0,0,0\n").as_bytes()),
            Err(CsvFormatError::Row { .. })
        ));
        let mixed = "t_s,q_1_2_m,r_hat_1_2_m,v_hat_1_2_mps,I_1_2_A,F_hat_2_1_N\n0,1,1,1,1,1\n";
        assert!(matches!(read_csv(mixed.as_bytes()), Err(CsvFormatError::Header(_))));
    }
}
