//! Output files.
//!
//! CSV files start with two comment lines: the schema version and kind, then
//! the resolved configuration as JSON. JSON files wrap the result in an
//! envelope carrying the same information.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const JSON_SCHEMA: &str = "qmem-json/1";

/// A named table of string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Table {
            kind: kind.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table `{}`",
            self.kind
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let mut out = csv_preamble(&self.kind, config).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns).expect("in-memory write");
            for row in &self.rows {
                w.write_record(row).expect("in-memory write");
            }
            w.flush().expect("in-memory flush");
        }
        String::from_utf8(out).expect("utf-8 csv")
    }
}

pub fn csv_preamble(kind: &str, config: &ExperimentConfig) -> String {
    format!(
        "# qmem-csv v{CSV_SCHEMA_VERSION} kind={kind}\n# config={}\n",
        config.to_json()
    )
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: String,
    config: &'a ExperimentConfig,
    result: &'a T,
}

pub fn to_json<T: Serialize>(config: &ExperimentConfig, result: &T) -> String {
    let env = Envelope {
        schema: JSON_SCHEMA,
        command: config.command.to_string(),
        config,
        result,
    };
    serde_json::to_string_pretty(&env).expect("result serializes") + "\n"
}

/// Writes via a temporary file in the same directory and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name")
    })?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Reads a CSV written by [`Table::to_csv`], skipping the comment preamble.
pub fn read_csv_rows(text: &str) -> Vec<Vec<String>> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records()
        .map(|rec| rec.expect("valid csv").iter().map(str::to_string).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Command, Settings};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::resolve(Command::Simulate, Settings::default()).unwrap()
    }

    #[test]
    fn csv_has_versioned_preamble() {
        let mut t = Table::new("hitting", &["t", "p_hat"]);
        t.push([0.to_string(), 0.5.to_string()]);
        let text = t.to_csv(&cfg());
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# qmem-csv v1 kind=hitting");
        let conf = lines.next().unwrap().strip_prefix("# config=").unwrap();
        assert_eq!(ExperimentConfig::from_json(conf).unwrap(), cfg());
        assert_eq!(lines.next().unwrap(), "t,p_hat");
        assert_eq!(
            read_csv_rows(&text),
            vec![vec!["0".to_string(), "0.5".to_string()]]
        );
    }

    #[test]
    fn json_envelope_echoes_config() {
        let text = to_json(&cfg(), &vec![1, 2]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], JSON_SCHEMA);
        assert_eq!(v["command"], "simulate");
        assert_eq!(v["result"][1], 2);
        let back = ExperimentConfig::from_json(&v["config"].to_string()).unwrap();
        assert_eq!(back, cfg());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let leftovers = fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
