//! CSV and matrix-text input and output.
//!
//! Readers skip `#` comment lines and report the 1-based line number of the
//! first malformed record. Writers emit every float with 17 significant
//! digits so files are byte-identical across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kernreg::classifier::Label;
use kernreg::kernel::{fmt_f64, parse_matrix};
use kernreg::rke::Pair;
use nalgebra::DMatrix;

use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Creates `dir` and returns a closure joining file names onto it.
pub fn output_dir(dir: &Path) -> Result<impl Fn(&str) -> PathBuf + '_, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(move |name: &str| dir.join(name))
}

struct Table {
    header: Vec<String>,
    header_line: usize,
    /// `(line, fields)` per data record.
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = read_text(path)?;
    // the reader numbers records but not file lines once comments and blank
    // lines are skipped, so record k is mapped back through this list
    let content_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, _)| i + 1)
        .collect();
    let line_of = |record: u64| content_lines.get(record as usize).copied().unwrap_or(content_lines.len() + 1);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let malformed = |line: usize, message: String| CliError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| malformed(e.position().map_or(1, |p| line_of(p.record())), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(malformed(1, "missing header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| malformed(e.position().map_or(0, |p| line_of(p.record())), e.to_string()))?;
        let line = rec.position().map_or(0, |p| line_of(p.record()));
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table {
        header,
        header_line: line_of(0),
        rows,
    })
}

fn expect_header(path: &Path, table: &Table, want: &[&str]) -> Result<(), CliError> {
    if table.header != want {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: table.header_line,
            message: format!("expected header {:?}, found {:?}", want.join(","), table.header.join(",")),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        line,
        message: format!("bad {name} {raw:?}: {e}"),
    })
}

/// Points CSV with header `x1,...,xd`.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let table = read_table(path)?;
    let d = table.header.len();
    let want: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    if table.header != want {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: table.header_line,
            message: format!("expected header x1,...,x{d}, found {:?}", table.header.join(",")),
        });
    }
    let mut points = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let p = row
            .iter()
            .map(|v| field::<f64>(path, *line, "coordinate", v))
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Malformed {
                path: path.to_path_buf(),
                line: *line,
                message: format!("non-finite coordinate {bad}"),
            });
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "no points".into(),
        });
    }
    Ok(points)
}

/// Dissimilarity CSV with header `i,j,d`; `d` holds squared dissimilarities.
pub fn read_dissimilarities(path: &Path) -> Result<Vec<Pair>, CliError> {
    let table = read_table(path)?;
    expect_header(path, &table, &["i", "j", "d"])?;
    let mut pairs = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let i = field::<usize>(path, *line, "index i", &row[0])?;
        let j = field::<usize>(path, *line, "index j", &row[1])?;
        let d = field::<f64>(path, *line, "dissimilarity", &row[2])?;
        if !(d >= 0.0) || !d.is_finite() {
            return Err(CliError::Malformed {
                path: path.to_path_buf(),
                line: *line,
                message: format!("dissimilarity {d} must be finite and nonnegative"),
            });
        }
        pairs.push(Pair { i, j, d });
    }
    Ok(pairs)
}

/// Newbie dissimilarity CSV with header `i,d`.
pub fn read_newbie_dissimilarities(path: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    let table = read_table(path)?;
    expect_header(path, &table, &["i", "d"])?;
    table
        .rows
        .iter()
        .map(|(line, row)| {
            Ok((
                field::<usize>(path, *line, "index", &row[0])?,
                field::<f64>(path, *line, "dissimilarity", &row[1])?,
            ))
        })
        .collect()
}

/// Labels CSV with header `i,y`, `y ∈ {-1, 0, 1}`. Objects not listed are
/// unlabeled.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<Label>, CliError> {
    let table = read_table(path)?;
    expect_header(path, &table, &["i", "y"])?;
    let mut labels = vec![Label::Unlabeled; n];
    let mut seen = vec![false; n];
    for (line, row) in &table.rows {
        let malformed = |message: String| CliError::Malformed {
            path: path.to_path_buf(),
            line: *line,
            message,
        };
        let i = field::<usize>(path, *line, "index", &row[0])?;
        let code = field::<i64>(path, *line, "label", &row[1])?;
        if i >= n {
            return Err(malformed(format!("index {i} out of range for {n} objects")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(malformed(format!("duplicate label for object {i}")));
        }
        labels[i] = Label::from_code(code).map_err(|e| malformed(e.to_string()))?;
    }
    Ok(labels)
}

/// Whitespace-separated matrix text.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = read_text(path)?;
    parse_matrix(&text).map_err(|e| match e {
        kernreg::Error::Parse { line, message } => CliError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => CliError::Input(other),
    })
}

pub fn read_model_text(path: &Path) -> Result<String, CliError> {
    read_text(path)
}

/// Builds a CSV document from a header and rows of already formatted cells.
pub fn csv_document(comments: &[String], header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn num(v: f64) -> String {
    fmt_f64(v)
}

/// Rows `i,u1,...,up` of a coordinate matrix.
pub fn embedding_csv(x: &DMatrix<f64>, comments: &[String]) -> String {
    let names: Vec<String> = (1..=x.ncols()).map(|k| format!("u{k}")).collect();
    let mut header = vec!["i"];
    header.extend(names.iter().map(String::as_str));
    csv_document(
        comments,
        &header,
        (0..x.nrows()).map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(x.row(i).iter().map(|&v| num(v)));
            row
        }),
    )
}

/// Rows `nu,eigenvalue,cumulative_fraction`.
pub fn spectrum_csv(eigenvalues: &[f64], total: f64) -> String {
    let mut cum = 0.0;
    csv_document(
        &[],
        &["nu", "eigenvalue", "cumulative_fraction"],
        eigenvalues.iter().enumerate().map(|(nu, &v)| {
            cum += v;
            let frac = if total > 0.0 { cum / total } else { 0.0 };
            vec![(nu + 1).to_string(), num(v), num(frac)]
        }),
    )
}
