//! Plain-text dump of a [`QuadraticProgram`].
//!
//! ```text
//! # robsvm quadratic program v1
//! n <n> eq <p> ineq <q>
//! Q
//! <n rows of n values>
//! c
//! <n values>
//! A_eq
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a dump
//! reads back to the identical instance. Infinite bounds are `inf` / `-inf`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::{QpError, QuadraticProgram};

const HEADER: &str = "# robsvm quadratic program v1";

fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn write_row<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> std::io::Result<()> {
    let line: Vec<String> = vals.map(fmt).collect();
    writeln!(w, "{}", line.join(" "))
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    for i in 0..m.nrows() {
        write_row(w, m.row(i).iter().copied())?;
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, name: &str, v: &DVector<f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    write_row(w, v.iter().copied())
}

pub fn write_qp<W: Write>(qp: &QuadraticProgram, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    writeln!(
        w,
        "n {} eq {} ineq {}",
        qp.n(),
        qp.a_eq.nrows(),
        qp.a_in.nrows()
    )?;
    write_matrix(&mut w, "Q", &qp.q)?;
    write_vector(&mut w, "c", &qp.c)?;
    write_matrix(&mut w, "A_eq", &qp.a_eq)?;
    write_vector(&mut w, "b_eq", &qp.b_eq)?;
    write_matrix(&mut w, "A_in", &qp.a_in)?;
    write_vector(&mut w, "b_in", &qp.b_in)?;
    write_vector(&mut w, "lower", &qp.lower)?;
    write_vector(&mut w, "upper", &qp.upper)?;
    w.flush()
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String, QpError> {
        self.line_no += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l.trim().to_owned()),
            Some(Err(e)) => Err(QpError::Parse(e.to_string())),
            None => Err(QpError::Parse(format!(
                "unexpected end of input at line {}",
                self.line_no
            ))),
        }
    }

    fn expect(&mut self, tag: &str) -> Result<(), QpError> {
        let l = self.next_line()?;
        if l != tag {
            return Err(QpError::Parse(format!(
                "line {}: expected `{tag}`, found `{l}`",
                self.line_no
            )));
        }
        Ok(())
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>, QpError> {
        let l = self.next_line()?;
        let vals = l
            .split_whitespace()
            .map(|t| match t {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>().map_err(|_| {
                    QpError::Parse(format!("line {}: bad number `{t}`", self.line_no))
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != count {
            return Err(QpError::Parse(format!(
                "line {}: expected {count} values, found {}",
                self.line_no,
                vals.len()
            )));
        }
        Ok(vals)
    }

    fn matrix(&mut self, tag: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, QpError> {
        self.expect(tag)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.values(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, tag: &str, len: usize) -> Result<DVector<f64>, QpError> {
        self.expect(tag)?;
        Ok(DVector::from_vec(self.values(len)?))
    }
}

pub fn read_qp<R: BufRead>(r: R) -> Result<QuadraticProgram, QpError> {
    let mut lines = Lines {
        inner: r.lines(),
        line_no: 0,
    };
    lines.expect(HEADER)?;
    let dims = lines.next_line()?;
    let toks: Vec<&str> = dims.split_whitespace().collect();
    let parse = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| QpError::Parse(format!("bad dimension `{t}`")))
    };
    let (n, p, q) = match toks.as_slice() {
        ["n", n, "eq", p, "ineq", q] => (parse(n)?, parse(p)?, parse(q)?),
        _ => return Err(QpError::Parse(format!("bad dimension line `{dims}`"))),
    };
    let qm = lines.matrix("Q", n, n)?;
    let c = lines.vector("c", n)?;
    let a_eq = lines.matrix("A_eq", p, n)?;
    let b_eq = lines.vector("b_eq", p)?;
    let a_in = lines.matrix("A_in", q, n)?;
    let b_in = lines.vector("b_in", q)?;
    let lower = lines.vector("lower", n)?;
    let upper = lines.vector("upper", n)?;
    Ok(QuadraticProgram {
        q: qm,
        c,
        a_eq,
        b_eq,
        a_in,
        b_in,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let qp = QuadraticProgram::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0 / 3.0]),
            DVector::from_vec(vec![-1.0, 1e-300]),
        )
        .with_equalities(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            DVector::zeros(1),
        )
        .with_bounds(
            DVector::from_vec(vec![0.0, f64::NEG_INFINITY]),
            DVector::from_vec(vec![f64::INFINITY, 0.7]),
        );
        let mut buf = Vec::new();
        write_qp(&qp, &mut buf).unwrap();
        let back = read_qp(buf.as_slice()).unwrap();
        assert_eq!(back, qp);
    }

    #[test]
    fn rejects_truncated() {
        assert!(matches!(
            read_qp("# robsvm quadratic program v1\nn 2 eq 0 ineq 0\nQ\n1 0\n".as_bytes()),
            Err(QpError::Parse(_))
        ));
        assert!(read_qp("garbage".as_bytes()).is_err());
    }
}
