use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};

use crate::config::RunConfig;

/// Floats at 17 significant digits so that files round-trip exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Csv {
    w: BufWriter<File>,
    path: PathBuf,
}

impl Csv {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{}", header.join(","))?;
        Ok(Csv { w, path })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        let line: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
        writeln!(self.w, "{}", line.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Two-column key,value table.
pub fn write_table(dir: &Path, name: &str, rows: &[(&str, String)]) -> Result<PathBuf> {
    let mut csv = Csv::create(dir, name, &["key", "value"])?;
    for (k, v) in rows {
        csv.row(&[*k, v.as_str()])?;
    }
    csv.finish()
}

/// key=value record of a run. Wall time lives here and not in any CSV.
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut lines = vec![("command".to_string(), command.to_string())];
        for (k, v) in cfg.entries() {
            lines.push((format!("config.{k}"), v.clone()));
        }
        Manifest { lines }
    }

    pub fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn write(&self, dir: &Path, command: &str, elapsed: Duration) -> Result<()> {
        let path = dir.join(format!("manifest_{command}.txt"));
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        for (k, v) in &self.lines {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "wall_time_s={:.3}", elapsed.as_secs_f64())?;
        w.flush()?;
        Ok(())
    }
}
