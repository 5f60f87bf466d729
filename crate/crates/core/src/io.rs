//! CSV ingestion and export.
//!
//! Curve files: the first row holds the grid points, every later row one
//! curve evaluated on that grid. Response files: one value per row, with an
//! optional non-numeric header.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::curves::{Curve, DomainDataset, Grid};
use crate::error::{Error, Result};
use crate::fpca::BasisSystem;

fn parse_field(field: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("'{}' is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column,
            message: format!("non-finite value '{}'", field.trim()),
        });
    }
    Ok(v)
}

fn records<R: Read>(reader: R) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader)
        .into_records()
        .filter_map(|r| match r {
            Ok(rec) if rec.iter().all(|f| f.trim().is_empty()) => None,
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                Some(Ok((line, rec)))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Some(Err(Error::Parse {
                    line,
                    column: 0,
                    message: e.to_string(),
                }))
            }
        })
}

/// Grid and an `N × m` matrix of curve values.
pub fn read_curves<R: Read>(reader: R) -> Result<(Arc<Grid>, DMatrix<f64>)> {
    let mut rows = records(reader);
    let (line, header) = rows.next().ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "empty curve file".into(),
    })??;
    let points = header
        .iter()
        .enumerate()
        .map(|(c, f)| parse_field(f, line, c + 1))
        .collect::<Result<Vec<f64>>>()?;
    let grid = Grid::from_points(points).map_err(|e| Error::Parse {
        line,
        column: 1,
        message: e.to_string(),
    })?;
    let m = grid.len();
    let mut values = Vec::new();
    let mut n = 0;
    for row in rows {
        let (line, rec) = row?;
        if rec.len() != m {
            return Err(Error::Parse {
                line,
                column: rec.len().min(m) + 1,
                message: format!("expected {m} values, found {}", rec.len()),
            });
        }
        for (c, f) in rec.iter().enumerate() {
            values.push(parse_field(f, line, c + 1)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            line: line + 1,
            column: 1,
            message: "no curves after the grid row".into(),
        });
    }
    Ok((grid, DMatrix::from_row_slice(n, m, &values)))
}

pub fn read_responses<R: Read>(reader: R) -> Result<DVector<f64>> {
    let mut values = Vec::new();
    for (i, row) in records(reader).enumerate() {
        let (line, rec) = row?;
        if rec.len() != 1 {
            return Err(Error::Parse {
                line,
                column: 2,
                message: format!("expected a single column, found {}", rec.len()),
            });
        }
        match parse_field(&rec[0], line, 1) {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => {}
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "no responses".into(),
        });
    }
    Ok(DVector::from_vec(values))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Load a domain from a curve file and a response file.
pub fn load_domain(domain_id: usize, curves: &Path, responses: &Path) -> Result<DomainDataset> {
    let (grid, x) = read_curves(open(curves)?)?;
    let y = read_responses(open(responses)?)?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} has {} curves but {} has {} responses",
            curves.display(),
            x.nrows(),
            responses.display(),
            y.len()
        )));
    }
    DomainDataset::new(domain_id, grid, x, y)
}

pub fn curves_csv(data: &DomainDataset) -> String {
    let mut out = join(data.grid().points());
    for row in data.curve_matrix().row_iter() {
        out.push_str(&join(row.transpose().as_slice()));
    }
    out
}

pub fn responses_csv(y: &DVector<f64>) -> String {
    let mut out = String::from("y\n");
    for v in y.iter() {
        out.push_str(&format!("{v}\n"));
    }
    out
}

fn join(v: &[f64]) -> String {
    let mut s = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// `t,beta` rows.
pub fn coefficient_csv(beta: &Curve) -> String {
    let mut out = String::from("t,beta\n");
    for (t, v) in beta.grid().points().iter().zip(beta.values()) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

/// One column per basis function, headed `t,phi1,phi2,…`.
pub fn basis_csv(basis: &BasisSystem) -> String {
    let d = basis.d_max();
    let mut out = String::from("t");
    for k in 1..=d {
        out.push_str(&format!(",phi{k}"));
    }
    out.push('\n');
    let f = basis.function_matrix();
    for (a, t) in basis.grid().points().iter().enumerate() {
        out.push_str(&t.to_string());
        for k in 0..d {
            out.push_str(&format!(",{}", f[(k, a)]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_curves_and_responses() {
        let (g, x) = read_curves("0,0.5,1\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0]);
        assert_eq!(x.nrows(), 2);
        assert_eq!(x[(1, 2)], 6.0);
        let y = read_responses("y\n1.5\n-2\n".as_bytes()).unwrap();
        assert_eq!(y.as_slice(), &[1.5, -2.0]);
        let y = read_responses("1.5\n-2\n".as_bytes()).unwrap();
        assert_eq!(y.len(), 2);
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = read_curves("0,0.5,1\n1,2,3\n4,x,6\n".as_bytes()).unwrap_err();
        assert_eq!(
            e,
            Error::Parse {
                line: 3,
                column: 2,
                message: "'x' is not a number".into()
            }
        );
        let e = read_curves("0,0.5,1\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = read_responses("y\n1\nfoo\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, column: 1, .. }));
        assert!(read_curves("".as_bytes()).is_err());
        assert!(read_curves("0,1\n".as_bytes()).is_err());
        assert!(read_curves("1,0\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn roundtrip() {
        let g = Grid::uniform(5).unwrap();
        let x = DMatrix::from_fn(3, 5, |i, a| (i * 5 + a) as f64 / 7.0);
        let y = DVector::from_vec(vec![0.1, -0.2, 1.0 / 3.0]);
        let d = DomainDataset::new(0, g, x.clone(), y.clone()).unwrap();
        let (g2, x2) = read_curves(curves_csv(&d).as_bytes()).unwrap();
        assert_eq!(g2.points(), d.grid().points());
        assert_eq!(x2, x);
        assert_eq!(read_responses(responses_csv(&y).as_bytes()).unwrap(), y);
    }
}
