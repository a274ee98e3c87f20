//! Draw dumps: one CSV row per retained draw.
//!
//! Header: `chain,iteration,beta[0],...,beta[p-1],u[0],...,u[m-1],sigma2_e,sigma2_u,theta[0],...,theta[N-1]`.
//! Indices are 0-based, units are stacked area by area and values are
//! written in shortest round-trip form, so reading a dump back is exact.

use std::io::{Read, Write};

use nalgebra::DVector;

use super::diagnostics::ParamName;
use super::gibbs::RetainedDraw;
use super::GibbsState;
use crate::error::{BenchError, Result};

/// A retained draw tagged with its chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRecord {
    pub chain: usize,
    pub iteration: usize,
    pub state: GibbsState,
}

fn io_error(e: impl std::fmt::Display) -> BenchError {
    BenchError::InvalidInput(format!("draw dump i/o: {e}"))
}

/// Writes every chain's retained draws, chains in order.
pub fn write_draws<W: Write>(writer: W, chains: &[Vec<RetainedDraw>]) -> Result<()> {
    let Some(first) = chains.iter().flatten().next() else {
        return Err(BenchError::InsufficientSample { needed: 1, got: 0 });
    };
    let (p, m, n) = (
        first.state.beta.len(),
        first.state.u.len(),
        first.state.theta.len(),
    );
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend((0..p).map(|k| ParamName::Beta(k).to_string()));
    header.extend((0..m).map(|i| ParamName::U(i).to_string()));
    header.push(ParamName::Sigma2E.to_string());
    header.push(ParamName::Sigma2U.to_string());
    header.extend((0..n).map(|j| ParamName::Theta(j).to_string()));
    out.write_record(&header).map_err(io_error)?;

    for (c, chain) in chains.iter().enumerate() {
        for d in chain {
            let s = &d.state;
            if (s.beta.len(), s.u.len(), s.theta.len()) != (p, m, n) {
                return Err(BenchError::InvalidInput(
                    "draws have inconsistent dimensions".into(),
                ));
            }
            let mut row = vec![c.to_string(), d.iteration.to_string()];
            row.extend(s.beta.iter().map(f64::to_string));
            row.extend(s.u.iter().map(f64::to_string));
            row.push(s.sigma2_e.to_string());
            row.push(s.sigma2_u.to_string());
            row.extend(s.theta.iter().map(f64::to_string));
            out.write_record(&row).map_err(io_error)?;
        }
    }
    out.flush().map_err(io_error)
}

/// Reads a dump written by [`write_draws`]; dimensions come from the header.
pub fn read_draws<R: Read>(reader: R) -> Result<Vec<DrawRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| BenchError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let bad_header = |message: String| BenchError::Parse { line: 1, message };
    if header.len() < 4 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(bad_header("header must start with chain,iteration".into()));
    }
    let names = header
        .iter()
        .skip(2)
        .map(|h| h.parse::<ParamName>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| bad_header(e.to_string()))?;
    let count = |f: fn(&ParamName) -> bool| names.iter().filter(|n| f(n)).count();
    let p = count(|n| matches!(n, ParamName::Beta(_)));
    let m = count(|n| matches!(n, ParamName::U(_)));
    let n = count(|n| matches!(n, ParamName::Theta(_)));
    let expected: Vec<ParamName> = (0..p)
        .map(ParamName::Beta)
        .chain((0..m).map(ParamName::U))
        .chain([ParamName::Sigma2E, ParamName::Sigma2U])
        .chain((0..n).map(ParamName::Theta))
        .collect();
    if names != expected {
        return Err(bad_header("columns are not in dump order".into()));
    }

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| BenchError::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() != header.len() {
            return Err(BenchError::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            row[i].trim().parse::<f64>().map_err(|_| BenchError::Parse {
                line,
                message: format!("column {} is not a number: '{}'", &header[i], &row[i]),
            })
        };
        let int = |i: usize| -> Result<usize> {
            row[i].trim().parse::<usize>().map_err(|_| BenchError::Parse {
                line,
                message: format!("column {} is not a count: '{}'", &header[i], &row[i]),
            })
        };
        let values = (2..row.len()).map(field).collect::<Result<Vec<f64>>>()?;
        records.push(DrawRecord {
            chain: int(0)?,
            iteration: int(1)?,
            state: GibbsState {
                beta: DVector::from_column_slice(&values[..p]),
                u: DVector::from_column_slice(&values[p..p + m]),
                sigma2_e: values[p + m],
                sigma2_u: values[p + m + 1],
                theta: DVector::from_column_slice(&values[p + m + 2..]),
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(iteration: usize, x: f64) -> RetainedDraw {
        RetainedDraw {
            iteration,
            state: GibbsState {
                beta: DVector::from_vec(vec![x, -x / 3.0]),
                u: DVector::from_vec(vec![0.1 * x]),
                theta: DVector::from_vec(vec![1.0 / 7.0, x.exp(), -2.5]),
                sigma2_e: 0.3,
                sigma2_u: 1e-17 + x * x,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let chains = vec![vec![draw(10, 0.7), draw(20, -1.3)], vec![draw(10, 2.2), draw(20, 0.0)]];
        let mut buf = Vec::new();
        write_draws(&mut buf, &chains).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "chain,iteration,beta[0],beta[1],u[0],sigma2_e,sigma2_u,theta[0],theta[1],theta[2]\n"
        ));
        let back = read_draws(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        for (rec, (c, d)) in back.iter().zip(
            chains
                .iter()
                .enumerate()
                .flat_map(|(c, ch)| ch.iter().map(move |d| (c, d))),
        ) {
            assert_eq!(rec.chain, c);
            assert_eq!(rec.iteration, d.iteration);
            assert_eq!(rec.state, d.state);
        }
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = "chain,iteration,beta[0],sigma2_e,sigma2_u,theta[0]\n0,1,0.5,1,1,0\n0,2,abc,1,1,0\n";
        match read_draws(text.as_bytes()) {
            Err(BenchError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("beta[0]"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_shuffled_header() {
        let text = "chain,iteration,sigma2_e,beta[0],sigma2_u,theta[0]\n";
        assert!(read_draws(text.as_bytes()).is_err());
    }
}
