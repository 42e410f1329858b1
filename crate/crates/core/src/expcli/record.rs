//! Run records: manifest, summary and data tables, written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value as Json;

use crate::error::{Error, Result};

/// One CSV file. Cells are preformatted so output is byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = Cell>>(&mut self, cells: I) {
        self.rows.push(cells.into_iter().map(|c| c.0).collect());
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// A formatted CSV cell.
pub struct Cell(pub String);

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell(if v.is_nan() { String::new() } else { format!("{v:?}") })
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell(String::new()), Cell::from)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell(v.to_string())
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell(v)
    }
}

#[macro_export]
#[doc(hidden)]
macro_rules! cells {
    ($($x:expr),* $(,)?) => { vec![$($crate::expcli::record::Cell::from($x)),*] };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: String,
    pub overrides: Vec<String>,
    /// every configuration key in internal units; feeding these lines back
    /// as a config file reproduces the run
    pub resolved: Vec<(String, String)>,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub manifest: Manifest,
    pub summary: Json,
    pub tables: Vec<Table>,
    /// additional JSON documents, e.g. plot-ready maps
    pub documents: Vec<(String, Json)>,
}

fn pretty(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

impl RunRecord {
    fn file_names(&self) -> Vec<String> {
        let mut names = vec!["manifest.json".to_string(), "summary.json".to_string(), "resolved.cfg".to_string()];
        names.extend(self.tables.iter().map(|t| format!("{}.csv", t.name)));
        names.extend(self.documents.iter().map(|(n, _)| format!("{n}.json")));
        names
    }

    /// Write every file into a sibling temporary directory, then rename it
    /// to `out`. An existing `out` is replaced only with `force`.
    pub fn write(&mut self, out: &Path, force: bool) -> Result<PathBuf> {
        let name = out
            .file_name()
            .ok_or_else(|| Error::InvalidConfig(format!("output path {} has no final component", out.display())))?
            .to_string_lossy()
            .to_string();
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let exists = out.exists();
        if exists && !force {
            return Err(Error::InvalidConfig(format!(
                "output directory {} exists (pass --force to replace it)",
                out.display()
            )));
        }
        self.manifest.files = self.file_names();
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        let written = (|| -> Result<()> {
            fs::write(tmp.join("manifest.json"), pretty(&self.manifest)?)?;
            fs::write(tmp.join("summary.json"), pretty(&self.summary)?)?;
            let cfg: String = self
                .manifest
                .resolved
                .iter()
                .map(|(k, v)| format!("{k} = {v}\n"))
                .collect();
            fs::write(tmp.join("resolved.cfg"), cfg)?;
            for t in &self.tables {
                fs::write(tmp.join(format!("{}.csv", t.name)), t.to_csv()?)?;
            }
            for (n, doc) in &self.documents {
                fs::write(tmp.join(format!("{n}.json")), pretty(doc)?)?;
            }
            Ok(())
        })();
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e);
        }
        if exists {
            let old = parent.join(format!(".{name}.old-{}", std::process::id()));
            fs::rename(out, &old)?;
            fs::rename(&tmp, out)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&tmp, out)?;
        }
        Ok(out.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> RunRecord {
        let mut t = Table::new("data", &["x", "label"]);
        t.push(crate::cells![0.1, "a,b"]);
        t.push(crate::cells![f64::NAN, "c"]);
        RunRecord {
            manifest: Manifest {
                tool: "dicke-sim".into(),
                version: "0".into(),
                subcommand: "params".into(),
                config_path: "x.cfg".into(),
                overrides: vec![],
                resolved: vec![("g".into(), "1 rad/us".into())],
                started_at: String::new(),
                finished_at: String::new(),
                files: vec![],
            },
            summary: serde_json::json!({"ok": true}),
            tables: vec![t],
            documents: vec![],
        }
    }

    #[test]
    fn csv_quotes_and_blanks() {
        let bytes = record().tables[0].to_csv().unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "x,label\n0.1,\"a,b\"\n,c\n");
    }

    #[test]
    fn atomic_write_and_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        record().write(&out, false).unwrap();
        assert!(out.join("data.csv").exists());
        assert!(out.join("resolved.cfg").exists());
        assert!(record().write(&out, false).is_err());
        record().write(&out, true).unwrap();
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
