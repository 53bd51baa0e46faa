//! Minimal RFC-4180 tables with `# key=value` metadata lines on top.

use std::io::Write;

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}={v}\n"));
        }
        push_record(&mut s, &self.columns);
        for row in &self.rows {
            push_record(&mut s, row);
        }
        s
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Table> {
        let mut table = Table::default();
        let mut header = false;
        let mut lines = text.split_inclusive('\n').enumerate().peekable();
        while let Some((i, line)) = lines.next() {
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if !header {
                if let Some(rest) = trimmed.strip_prefix('#') {
                    let (k, v) = rest.trim_start().split_once('=').ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: "metadata line without `=`".into(),
                    })?;
                    table.meta.push((k.to_string(), v.to_string()));
                    continue;
                }
            }
            if trimmed.is_empty() && lines.peek().is_none() {
                break;
            }
            // quoted fields may span lines
            let mut record = trimmed.to_string();
            while unbalanced(&record) {
                let (_, more) = lines.next().ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: "unterminated quoted field".into(),
                })?;
                record.push('\n');
                record.push_str(more.trim_end_matches(['\n', '\r']));
            }
            let fields = split_record(&record).map_err(|message| Error::Parse { line: i + 1, message })?;
            if !header {
                table.columns = fields;
                header = true;
            } else {
                if fields.len() != table.columns.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected {} fields, found {}", table.columns.len(), fields.len()),
                    });
                }
                table.rows.push(fields);
            }
        }
        if !header {
            return Err(Error::Parse {
                line: 0,
                message: "missing header row".into(),
            });
        }
        Ok(table)
    }
}

fn unbalanced(s: &str) -> bool {
    s.bytes().filter(|&b| b == b'"').count() % 2 == 1
}

fn push_record(s: &mut String, fields: &[String]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        // a lone empty field would read back as a blank line
        let lone_empty = fields.len() == 1 && f.is_empty();
        if lone_empty || f.starts_with('#') || f.contains([',', '"', '\n', '\r']) {
            s.push('"');
            s.push_str(&f.replace('"', "\"\""));
            s.push('"');
        } else {
            s.push_str(f);
        }
    }
    s.push('\n');
}

fn split_record(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    let mut at_start = true;
    while let Some(c) = chars.next() {
        if quoted {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    quoted = false;
                    if !matches!(chars.peek(), None | Some(',')) {
                        return Err("text after closing quote".into());
                    }
                }
            } else {
                cur.push(c);
            }
            continue;
        }
        match c {
            ',' => {
                out.push(std::mem::take(&mut cur));
                at_start = true;
                continue;
            }
            '"' if at_start => quoted = true,
            '"' => return Err("quote inside unquoted field".into()),
            c => cur.push(c),
        }
        at_start = false;
    }
    if quoted {
        return Err("unterminated quoted field".into());
    }
    out.push(cur);
    Ok(out)
}
