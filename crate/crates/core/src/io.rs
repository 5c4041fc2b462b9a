//! CSV input helpers.

use std::path::Path;

use crate::{Error, Result};

/// Read a headered CSV of numeric columns. The header must match
/// `expected` exactly (after trimming).
pub fn read_numeric_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_numeric_csv_from(file, expected).map_err(|reason| Error::Parse { path: path.to_path_buf(), reason })
}

pub fn read_numeric_csv_from<R: std::io::Read>(reader: R, expected: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(str::to_owned).collect();
    if header != expected {
        return Err(format!("expected header {:?}, found {:?}", expected.join(","), header.join(",")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| format!("row {}: {s:?}: {e}", line + 1)))
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Two-column `(x, y)` pairs.
pub fn read_pairs(path: &Path, expected: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    Ok(read_numeric_csv(path, &expected)?.into_iter().map(|r| (r[0], r[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_checked() {
        let ok = read_numeric_csv_from("a,b\n1,2\n3.5, 4\n".as_bytes(), &["a", "b"]).unwrap();
        assert_eq!(ok, vec![vec![1.0, 2.0], vec![3.5, 4.0]]);
        assert!(read_numeric_csv_from("x,b\n1,2\n".as_bytes(), &["a", "b"]).is_err());
        assert!(read_numeric_csv_from("a,b\n1,zz\n".as_bytes(), &["a", "b"]).unwrap_err().contains("row 1"));
    }
}
