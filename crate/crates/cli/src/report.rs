//! Report assembly. A report is a banner (version + full config + seed)
//! followed by rows; identical configs must serialize to identical
//! bytes, so nothing time- or host-dependent belongs here.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use mirrorball_core::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

/// 17 significant digits, enough to round-trip an f64 exactly.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Row {
    pub quantity: String,
    pub value: Complex64,
    pub stderr: f64,
    pub samples: usize,
}

impl Row {
    pub fn real(quantity: &str, value: f64) -> Self {
        Row {
            quantity: quantity.into(),
            value: Complex64::new(value, 0.0),
            stderr: 0.0,
            samples: 0,
        }
    }

    pub fn complex(quantity: &str, value: Complex64, stderr: f64, samples: usize) -> Self {
        Row { quantity: quantity.into(), value, stderr, samples }
    }
}

pub struct Report {
    pub command: String,
    /// key=value pairs, in declaration order.
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub rows: Vec<Row>,
    /// Free-form JSON summary attached to the end of a jsonl report and
    /// to the `summary` file for csv ones.
    pub summary: Option<serde_json::Value>,
}

impl Report {
    pub fn new(command: &str, seed: u64) -> Self {
        Report { command: command.into(), config: Vec::new(), seed, rows: Vec::new(), summary: None }
    }

    pub fn cfg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    fn config_string(&self) -> String {
        let mut s = format!("command={}", self.command);
        for (k, v) in &self.config {
            let _ = write!(s, " {k}={v}");
        }
        let _ = write!(s, " seed={}", self.seed);
        s
    }

    fn config_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("command".into(), self.command.clone().into());
        for (k, v) in &self.config {
            map.insert(k.clone(), v.clone().into());
        }
        map.insert("seed".into(), self.seed.into());
        map.into()
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                let _ = writeln!(out, "# mirrorball {VERSION}");
                let _ = writeln!(out, "# {}", self.config_string());
                let _ = writeln!(out, "quantity,estimate_re,estimate_im,stderr,samples,seed");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.quantity,
                        f17(r.value.re),
                        f17(r.value.im),
                        f17(r.stderr),
                        r.samples,
                        self.seed
                    );
                }
            }
            Format::Jsonl => {
                let banner = serde_json::json!({
                    "version": VERSION,
                    "config": self.config_json(),
                });
                let _ = writeln!(out, "{banner}");
                for r in &self.rows {
                    let line = serde_json::json!({
                        "quantity": r.quantity,
                        "estimate_re": f17(r.value.re),
                        "estimate_im": f17(r.value.im),
                        "stderr": f17(r.stderr),
                        "samples": r.samples,
                        "seed": self.seed,
                    });
                    let _ = writeln!(out, "{line}");
                }
                if let Some(s) = &self.summary {
                    let _ = writeln!(out, "{}", serde_json::json!({ "summary": s }));
                }
            }
        }
        out
    }

    /// Writes to the path when given, stdout otherwise. `append` is for
    /// streaming sweeps; a fresh path still gets the banner.
    pub fn emit(&self, output: Option<&Path>, format: Format, append: bool) -> std::io::Result<()> {
        let body = self.render(format);
        match output {
            None => {
                print!("{body}");
                Ok(())
            }
            Some(path) => {
                if append && path.exists() {
                    let mut f = fs::OpenOptions::new().append(true).open(path)?;
                    // Banner already present from the run that created
                    // the file; append rows only.
                    let rows_only: String = body
                        .lines()
                        .skip(self.banner_lines(format))
                        .map(|l| format!("{l}\n"))
                        .collect();
                    f.write_all(rows_only.as_bytes())
                } else {
                    fs::write(path, body)
                }
            }
        }
    }

    fn banner_lines(&self, format: Format) -> usize {
        match format {
            Format::Csv => 3,
            Format::Jsonl => 1,
        }
    }
}

pub fn complex_str(z: Complex64) -> String {
    format!("({}, {})", f17(z.re), f17(z.im))
}
