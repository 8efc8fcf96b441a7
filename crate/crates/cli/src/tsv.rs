//! Tab-separated corpus files: no quoting, one utterance per line.

use std::path::{Path, PathBuf};

use diacritize::model::Example;
use diacritize::text::{strip_diacritics, validate_diacritized};

use crate::CliError;

/// Rows of a TSV file. Every row must have the same number of fields. A
/// final newline is optional; a trailing `\r` is removed from each line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub path: PathBuf,
    pub columns: usize,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_tsv(path: &Path, text: &str) -> Result<Table, CliError> {
    let mut rows = Vec::new();
    let mut columns = 0;
    let body = text.strip_suffix('\n').unwrap_or(text);
    if !text.is_empty() {
        for (i, line) in body.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let fields: Vec<String> = line.split('\t').map(str::to_owned).collect();
            if i == 0 {
                columns = fields.len();
                if columns > 3 {
                    return Err(CliError::Malformed {
                        path: path.to_owned(),
                        line: 1,
                        reason: format!("{columns} fields; expected at most 3"),
                    });
                }
            } else if fields.len() != columns {
                return Err(CliError::Malformed {
                    path: path.to_owned(),
                    line: i + 1,
                    reason: format!("{} fields; line 1 has {columns}", fields.len()),
                });
            }
            rows.push(fields);
        }
    }
    Ok(Table { path: path.to_owned(), columns, rows })
}

pub fn read_tsv(path: &Path) -> Result<Table, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e })?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Malformed {
        path: path.to_owned(),
        line: 0,
        reason: "file is not valid UTF-8".into(),
    })?;
    parse_tsv(path, &text)
}

/// Renders rows as TSV, refusing fields that contain a tab or newline.
pub fn format_tsv<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<String, CliError> {
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, field) in row.iter().enumerate() {
            let f = field.as_ref();
            if f.contains(['\t', '\n', '\r']) {
                return Err(CliError::BadField { row: i + 1, field: j + 1 });
            }
            if j > 0 {
                out.push('\t');
            }
            out.push_str(f);
        }
        out.push('\n');
    }
    Ok(out)
}

impl Table {
    fn invalid_gold(&self, line: usize, gold: &str) -> Option<CliError> {
        let violations = validate_diacritized(gold);
        (!violations.is_empty()).then(|| CliError::InvalidGold {
            path: self.path.clone(),
            line,
            violations: violations.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
        })
    }

    /// Training / evaluation examples. One column is gold only (raw is
    /// derived by stripping), two are `raw, gold`, three are
    /// `raw, asr, gold`. With `need_asr` a missing ASR column is an error.
    pub fn examples(&self, need_asr: bool) -> Result<Vec<Example>, CliError> {
        if need_asr && self.columns < 3 && !self.rows.is_empty() {
            return Err(CliError::MissingAsrColumn { path: self.path.clone() });
        }
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let line = i + 1;
                let gold = row.last().expect("at least one field").clone();
                if let Some(e) = self.invalid_gold(line, &gold) {
                    return Err(e);
                }
                let stripped = strip_diacritics(&gold).expect("validated").base_string();
                let raw = if self.columns == 1 { stripped.clone() } else { row[0].clone() };
                if raw != stripped {
                    return Err(CliError::Malformed {
                        path: self.path.clone(),
                        line,
                        reason: "raw text is not the gold text without diacritics".into(),
                    });
                }
                let asr = if self.columns == 3 { row[1].clone() } else { String::new() };
                Ok(Example { raw, asr, gold })
            })
            .collect()
    }

    /// Gold strings: the last column of every row, validated.
    pub fn gold_column(&self) -> Result<Vec<String>, CliError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let gold = row.last().expect("at least one field").clone();
                match self.invalid_gold(i + 1, &gold) {
                    Some(e) => Err(e),
                    None => Ok(gold),
                }
            })
            .collect()
    }

    /// Prediction input: `raw`, `raw, asr` or `raw, asr, gold` (gold ignored).
    pub fn prediction_inputs(&self, need_asr: bool) -> Result<Vec<(String, Option<String>)>, CliError> {
        if need_asr && self.columns < 2 && !self.rows.is_empty() {
            return Err(CliError::MissingAsrColumn { path: self.path.clone() });
        }
        Ok(self.rows.iter().map(|row| (row[0].clone(), row.get(1).cloned())).collect())
    }
}
