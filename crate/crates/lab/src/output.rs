//! Run directory bookkeeping: CSV/plot-data writers, the key=value summary
//! and the SHA-256 manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::LabError;

pub const MANIFEST: &str = "manifest.txt";
pub const SUMMARY: &str = "summary.txt";

/// Rendering of summary values; floats use the shortest round-trip form,
/// switching to exponent notation for very small or large magnitudes.
pub trait SummaryValue {
    fn render(&self) -> String;
}

impl SummaryValue for f64 {
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl SummaryValue for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_value!(bool, i32, usize, u64, i64, str, String, hemivar::solver::ConstraintMode);

impl<T: SummaryValue + ?Sized> SummaryValue for &T {
    fn render(&self) -> String {
        (**self).render()
    }
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl SummaryValue) -> &mut Self {
        self.entries.push((key.to_string(), value.render()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses the rendered form back.
    pub fn parse(text: &str) -> Summary {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Summary { entries }
    }
}

/// Output directory plus the list of artifacts written so far.
#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
    files: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, LabError> {
        fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file some other writer produced.
    pub fn register(&mut self, name: impl AsRef<Path>) {
        self.files.push(name.as_ref().to_path_buf());
    }

    /// Writes a CSV table; every row has the header's width.
    pub fn csv<R, I, S>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), LabError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| LabError::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    /// Whitespace-separated columns with a `#` header, for gnuplot and friends.
    pub fn plot_data(&mut self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), LabError> {
        let mut text = format!("# {}\n", columns.join(" "));
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        self.text(name, &text)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), LabError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| LabError::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    /// Writes the manifest: a header with the (nondeterministic) run
    /// metadata, then `sha256  bytes  file` per artifact in write order.
    pub fn finish(self, header: &[(&str, String)]) -> Result<Vec<PathBuf>, LabError> {
        let mut text = String::from("# hemivar-lab manifest\n");
        for (k, v) in header {
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str("# sha256  bytes  file\n");
        for f in &self.files {
            let path = self.root.join(f);
            let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            text.push_str(&format!("{digest}  {}  {}\n", bytes.len(), f.display()));
        }
        let path = self.path(MANIFEST);
        fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
        Ok(self.files)
    }
}

/// Parses the artifact lines of a manifest into `(sha256, bytes, file)`.
pub fn read_manifest(text: &str) -> Vec<(String, u64, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.contains('='))
        .filter_map(|l| {
            let mut it = l.split("  ");
            Some((it.next()?.to_string(), it.next()?.parse().ok()?, it.next()?.to_string()))
        })
        .collect()
}
