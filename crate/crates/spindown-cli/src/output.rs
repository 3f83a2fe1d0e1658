//! Result-file plumbing: lossless float formatting, CSV assembly with
//! proper quoting, and atomic writes (temp file in the target directory,
//! then rename), so readers never observe a half-written table.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::AppError;

/// 17 significant digits: enough to reproduce the exact binary double.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_bool(b: bool) -> String {
    if b { "true" } else { "false" }.into()
}

fn quote_csv(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// A CSV table with a fixed header, rendered row-major with `\n` endings.
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Csv {
        Csv {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: Vec<S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(
            row.len(),
            self.header.len(),
            "CSV row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |fields: &[String]| -> String {
            fields
                .iter()
                .map(|f| quote_csv(f))
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push_str(&line(&self.header));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

/// Write `content` to `dir/name` atomically: the bytes land under a
/// temporary name first and are renamed into place in one step.
pub fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir)
        .map_err(|e| AppError::Schema(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| AppError::Schema(format!("cannot write {}: {e}", tmp.display())))?;
        f.write_all(content.as_bytes())
            .map_err(|e| AppError::Schema(format!("cannot write {}: {e}", tmp.display())))?;
        f.sync_all()
            .map_err(|e| AppError::Schema(format!("cannot flush {}: {e}", tmp.display())))?;
    }
    fs::rename(&tmp, &path)
        .map_err(|e| AppError::Schema(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(path)
}
