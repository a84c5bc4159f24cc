//! Result bundles and their CSV / JSON encodings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            columns: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, unit: &str, values: Vec<f64>) -> Self {
        self.columns.push(Column {
            name: name.into(),
            unit: unit.into(),
            values,
        });
        self
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    /// Header line plus one line per row, shortest round-trip float text.
    pub fn to_csv(&self) -> String {
        let mut s = self
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for r in 0..self.rows() {
            let line: Vec<String> = self
                .columns
                .iter()
                .map(|c| format!("{:?}", c.values[r]))
                .collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scalar {
    pub value: f64,
    pub unit: &'static str,
}

pub fn scalar(value: f64, unit: &'static str) -> Scalar {
    Scalar { value, unit }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub mode: String,
    /// SHA-256 of the canonical config text.
    pub config_sha256: String,
    pub wall_time_s: f64,
    /// Key inputs, frequencies echoed in Hz and rad/s.
    pub parameters: BTreeMap<String, Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultBundle {
    pub metadata: Metadata,
    pub summary: BTreeMap<String, Scalar>,
    pub tables: Vec<Table>,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).map(|s| s.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct ColumnInfo<'a> {
    name: &'a str,
    unit: &'a str,
}

#[derive(Serialize)]
struct TableInfo<'a> {
    name: &'a str,
    file: String,
    rows: usize,
    columns: Vec<ColumnInfo<'a>>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    metadata: &'a Metadata,
    summary: &'a BTreeMap<String, Scalar>,
    tables: Vec<TableInfo<'a>>,
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
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

/// Writes the bundle into `dir`. CSV: one `<table>.csv` per table plus
/// `manifest.json` (metadata, summary, column units). JSON: `results.json`.
pub fn emit_results(
    bundle: &ResultBundle,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, (PathBuf, std::io::Error)> {
    fs::create_dir_all(dir).map_err(|e| (dir.to_path_buf(), e))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| {
        let path = dir.join(name);
        write_atomic(&path, &bytes).map_err(|e| (path.clone(), e))?;
        written.push(path);
        Ok::<_, (PathBuf, std::io::Error)>(())
    };
    match format {
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(bundle).expect("bundle serializes");
            text.push('\n');
            put("results.json".into(), text.into_bytes())?;
        }
        OutputFormat::Csv => {
            let mut infos = Vec::new();
            for t in &bundle.tables {
                let file = format!("{}.csv", t.name);
                put(file.clone(), t.to_csv().into_bytes())?;
                infos.push(TableInfo {
                    name: &t.name,
                    file,
                    rows: t.rows(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnInfo {
                            name: &c.name,
                            unit: &c.unit,
                        })
                        .collect(),
                });
            }
            let manifest = Manifest {
                metadata: &bundle.metadata,
                summary: &bundle.summary,
                tables: infos,
            };
            let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            text.push('\n');
            put("manifest.json".into(), text.into_bytes())?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("trajectory")
            .column("time_s", "s", vec![])
            .column("site_1_re", "a.u.", vec![]);
        assert_eq!(t.to_csv(), "time_s,site_1_re\n");
    }

    #[test]
    fn floats_round_trip_through_csv() {
        let v = vec![0.1, 1e-7, -2.5e300, 1.0 / 3.0];
        let t = Table::new("x").column("v", "1", v.clone());
        let csv = t.to_csv();
        let back: Vec<f64> = csv.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, v);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
