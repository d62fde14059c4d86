use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use credit_hjb::hjb::{fmt17, write_grid_csv};
use credit_hjb::GridSpec;

/// Output directory plus the comment header every file starts with.
pub struct Output {
    dir: PathBuf,
    header: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path, command: &str, echo: Vec<String>) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut header = vec![format!("credit-hjb {command}")];
        header.extend(echo);
        Ok(Self { dir: dir.to_path_buf(), header })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn open(&self, name: &str) -> io::Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// A `#`-commented header followed by `body`.
    pub fn text(&self, name: &str, body: &str) -> io::Result<()> {
        let mut w = self.open(name)?;
        for line in &self.header {
            writeln!(w, "# {line}")?;
        }
        w.write_all(body.as_bytes())?;
        w.flush()
    }

    /// Grid layout: a row of x nodes, then one row per time node.
    pub fn grid(&self, name: &str, grid: &GridSpec, a: &Array2<f64>) -> io::Result<()> {
        let mut w = self.open(name)?;
        write_grid_csv(&mut w, grid, a, &self.header)?;
        w.flush()
    }

    /// Numeric columns, one row per entry of `rows`.
    pub fn table(&self, name: &str, columns: &[String], rows: &[Vec<f64>]) -> io::Result<()> {
        let mut body = columns.join(",");
        body.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|&v| fmt17(v)).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.text(name, &body)
    }
}

/// File-name fragment for a notional, e.g. `1`, `2.5`.
pub fn q_tag(q: f64) -> String {
    format!("{q}").replace('.', "p")
}
