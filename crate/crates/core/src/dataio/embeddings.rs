use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::format::fmt_f64;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Writes `id<TAB>v1..v_d` per row after a header line. Values carry 17
/// significant digits and read back bit-exactly.
pub fn write_embeddings<S: AsRef<str>>(path: impl AsRef<Path>, f: &Matrix, ids: &[S]) -> Result<()> {
    if ids.len() != f.rows() {
        return Err(Error::Dimension {
            op: "write_embeddings",
            lhs: f.shape(),
            rhs: (ids.len(), 1),
        });
    }
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    write!(out, "id")?;
    for j in 0..f.cols() {
        write!(out, "\td{j}")?;
    }
    writeln!(out)?;
    for (i, id) in ids.iter().enumerate() {
        write!(out, "{}", id.as_ref())?;
        for &x in f.row(i) {
            write!(out, "\t{}", fmt_f64(x))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(Vec<String>, Matrix)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let cols = match lines.next() {
        Some((_, header)) => header.split('\t').count() - 1,
        None => return Err(Error::load(path, 1, "missing header")),
    };
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split('\t');
        ids.push(fields.next().unwrap_or_default().to_string());
        let before = data.len();
        for field in fields {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::load(path, i + 1, e.to_string()))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::load(path, i + 1, format!("expected {cols} values")));
        }
    }
    let m = Matrix::from_vec(ids.len(), cols, data)?;
    Ok((ids, m))
}
