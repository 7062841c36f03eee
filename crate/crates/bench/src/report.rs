//! CSV output. Every file starts with `#` comment lines carrying the command,
//! the seed and the resolved configuration, followed by a header row.

use std::path::Path;

use crate::error::{BenchError, Result};

/// CSV text built fully in memory, so a failing run never leaves a partial file.
pub struct CsvDoc {
    comments: Vec<String>,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvDoc {
    pub fn new(command: &str, seed: u64, config_json: &str, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self {
            comments: Self::with_comments(command, seed, config_json, "")
                .lines()
                .map(str::to_string)
                .collect(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> Result<String> {
        let body = self
            .writer
            .into_inner()
            .map_err(|e| BenchError::Runtime(e.to_string()))?;
        let mut out = self.comments.join("\n");
        out.push('\n');
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    /// Prefixes an already formatted CSV body with the standard comments.
    pub fn with_comments(command: &str, seed: u64, config_json: &str, body: &str) -> String {
        format!("# regagent {command}\n# seed: {seed}\n# config: {config_json}\n{body}")
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        let text = self.finish()?;
        write_file(path, &text)
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
