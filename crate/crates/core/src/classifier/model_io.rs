//! Line-oriented text serialization of fitted classifiers.
//!
//! ```text
//! kernreg-model 1
//! loss hinge <theta>        | loss logistic | loss squared
//! penalty rkhs              | penalty l1
//! mu <value>
//! objective <value>
//! n <count>
//! labeled <0|1> ...
//! coefficients
//! <one value per line>
//! source points gaussian <width> <dim>   | source points linear <dim> | source gram
//! <n rows of point coordinates or Gram entries>
//! ```
//!
//! Every float is written with 17 significant digits so parsing restores the
//! exact bits.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{ClassifierModel, FitReport, GeometrySource, Penalty};
use crate::error::{Error, Result};
use crate::kernel::{fmt_f64, gram, GramMatrix, Kernel};
use crate::loss::MarginLoss;

const MAGIC: &str = "kernreg-model 1";

pub fn serialize_model(model: &ClassifierModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    match model.loss {
        MarginLoss::Hinge { theta } => {
            let _ = writeln!(out, "loss hinge {}", fmt_f64(theta));
        }
        other => {
            let _ = writeln!(out, "loss {}", other.name());
        }
    }
    let penalty = match model.penalty {
        Penalty::Rkhs => "rkhs",
        Penalty::L1 => "l1",
    };
    let _ = writeln!(out, "penalty {penalty}");
    let _ = writeln!(out, "mu {}", fmt_f64(model.mu));
    let _ = writeln!(out, "objective {}", fmt_f64(model.report.objective));
    let _ = writeln!(out, "n {}", model.n());
    let mask: Vec<&str> = model.labeled_mask.iter().map(|&b| if b { "1" } else { "0" }).collect();
    let _ = writeln!(out, "labeled {}", mask.join(" "));
    let _ = writeln!(out, "coefficients");
    for c in model.coefficients.iter() {
        let _ = writeln!(out, "{}", fmt_f64(*c));
    }
    match &model.source {
        GeometrySource::Points { kernel, points } => {
            let dim = points.first().map(Vec::len).unwrap_or(0);
            match kernel {
                Kernel::Gaussian { width } => {
                    let _ = writeln!(out, "source points gaussian {} {dim}", fmt_f64(*width));
                }
                Kernel::Linear => {
                    let _ = writeln!(out, "source points linear {dim}");
                }
            }
            for p in points {
                let row: Vec<String> = p.iter().map(|&v| fmt_f64(v)).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        GeometrySource::Gram => {
            let _ = writeln!(out, "source gram");
            let g = model.gram.matrix();
            for i in 0..g.nrows() {
                let row: Vec<String> = g.row(i).iter().map(|&v| fmt_f64(v)).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(t);
            }
        }
        Err(Error::parse(self.last + 1, "unexpected end of model"))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.last, msg)
    }

    fn num(&self, tok: &str) -> Result<f64> {
        tok.parse::<f64>().map_err(|e| self.err(format!("bad number {tok:?}: {e}")))
    }

    fn count(&self, tok: &str) -> Result<usize> {
        tok.parse::<usize>().map_err(|e| self.err(format!("bad count {tok:?}: {e}")))
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let row = line.split_whitespace().map(|t| self.num(t)).collect::<Result<Vec<f64>>>()?;
        if row.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", row.len())));
        }
        Ok(row)
    }
}

pub fn parse_model(text: &str) -> Result<ClassifierModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err(format!("missing `{MAGIC}` header")));
    }
    let loss_toks = lines.keyed("loss")?;
    let loss = match loss_toks.as_slice() {
        ["hinge", theta] => MarginLoss::Hinge { theta: lines.num(theta)? },
        ["logistic"] => MarginLoss::Logistic,
        ["squared"] => MarginLoss::Squared,
        _ => return Err(lines.err("unknown loss")),
    };
    let penalty = match lines.keyed("penalty")?.as_slice() {
        ["rkhs"] => Penalty::Rkhs,
        ["l1"] => Penalty::L1,
        _ => return Err(lines.err("unknown penalty")),
    };
    let mu = match lines.keyed("mu")?.as_slice() {
        [v] => lines.num(v)?,
        _ => return Err(lines.err("bad mu")),
    };
    let objective = match lines.keyed("objective")?.as_slice() {
        [v] => lines.num(v)?,
        _ => return Err(lines.err("bad objective")),
    };
    let n = match lines.keyed("n")?.as_slice() {
        [v] => lines.count(v)?,
        _ => return Err(lines.err("bad n")),
    };
    let mask_toks = lines.keyed("labeled")?;
    if mask_toks.len() != n {
        return Err(lines.err(format!("expected {n} label flags")));
    }
    let labeled_mask = mask_toks
        .iter()
        .map(|t| match *t {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(lines.err("label flags must be 0 or 1")),
        })
        .collect::<Result<Vec<bool>>>()?;
    lines.keyed("coefficients")?;
    let coefficients = (0..n)
        .map(|_| lines.row(1).map(|r| r[0]))
        .collect::<Result<Vec<f64>>>()?;
    let source_toks = lines.keyed("source")?;
    let (source, gram_matrix) = match source_toks.as_slice() {
        ["points", "gaussian", width, dim] => {
            let kernel = Kernel::gaussian(lines.num(width)?)?;
            points_source(&mut lines, kernel, dim, n)?
        }
        ["points", "linear", dim] => points_source(&mut lines, Kernel::Linear, dim, n)?,
        ["gram"] => {
            let rows = (0..n).map(|_| lines.row(n)).collect::<Result<Vec<_>>>()?;
            let g = GramMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?;
            (GeometrySource::Gram, g)
        }
        _ => return Err(lines.err("unknown source")),
    };
    Ok(ClassifierModel {
        coefficients: DVector::from_vec(coefficients),
        gram: gram_matrix,
        source,
        mu,
        loss,
        penalty,
        labeled_mask,
        report: FitReport {
            objective,
            ..FitReport::default()
        },
    })
}

fn points_source(
    lines: &mut Lines<'_>,
    kernel: Kernel,
    dim: &str,
    n: usize,
) -> Result<(GeometrySource, GramMatrix)> {
    let d = lines.count(dim)?;
    let points = (0..n).map(|_| lines.row(d)).collect::<Result<Vec<_>>>()?;
    let g = gram(&kernel, &points)?;
    Ok((GeometrySource::Points { kernel, points }, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{fit, FitOptions, Label, Query, TrainingSet};

    #[test]
    fn points_model_round_trips_bit_exactly() {
        let points: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.37 - 1.1, (i * i) as f64 / 9.0]).collect();
        let labels = (0..7).map(|i| if i % 3 == 0 { Label::Negative } else { Label::Positive }).collect();
        let ts = TrainingSet::from_points(Kernel::gaussian(0.7).unwrap(), points, labels).unwrap();
        let model = fit(&ts, MarginLoss::Logistic, 0.05, &FitOptions::default()).unwrap();
        let back = parse_model(&serialize_model(&model)).unwrap();
        for q in [[0.3, -0.2], [1.7, 2.2]] {
            let a = model.decision_value(Query::Point(&q)).unwrap();
            let b = back.decision_value(Query::Point(&q)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(serialize_model(&back), serialize_model(&model));
    }

    #[test]
    fn truncated_model_reports_line() {
        let err = parse_model("kernreg-model 1\nloss squared\npenalty rkhs\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse_model("kernreg-model 1\nloss cubic\n").unwrap_err();
        assert_eq!(err, Error::parse(2, "unknown loss"));
    }
}
