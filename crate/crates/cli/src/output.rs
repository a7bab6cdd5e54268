//! Writes a command's artifacts to standard output and the output directory.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::Format;
use crate::Failure;

pub struct Artifacts {
    pub name: &'static str,
    pub json: String,
    pub text: String,
    /// file name and contents; the first table is the one printed for `--format csv`
    pub tables: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(name: &'static str, report: &impl Serialize, text: String) -> Result<Artifacts, Failure> {
        let json = serde_json::to_string_pretty(report).map_err(|e| Failure::Domain(e.into()))?;
        Ok(Artifacts { name, json, text, tables: Vec::new() })
    }

    pub fn table(
        &mut self,
        file: &str,
        write: impl FnOnce(&mut Vec<u8>) -> ems_core::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(Failure::Domain)?;
        self.tables.push((file.to_string(), buf));
        Ok(())
    }

    pub fn emit(&self, format: Format, out_dir: Option<&Path>) -> Result<(), Failure> {
        let mut stdout = std::io::stdout().lock();
        let io = |e: std::io::Error| Failure::Domain(e.into());
        match format {
            Format::Text => stdout.write_all(self.text.as_bytes()).map_err(io)?,
            Format::Json => writeln!(stdout, "{}", self.json).map_err(io)?,
            Format::Csv => {
                if let Some((_, t)) = self.tables.first() {
                    stdout.write_all(t).map_err(io)?;
                }
            }
        }
        if let Some(dir) = out_dir {
            let usage = |e: std::io::Error| Failure::Usage(format!("cannot write to {}: {e}", dir.display()));
            std::fs::create_dir_all(dir).map_err(usage)?;
            std::fs::write(dir.join(format!("{}.json", self.name)), format!("{}\n", self.json)).map_err(usage)?;
            std::fs::write(dir.join(format!("{}.txt", self.name)), &self.text).map_err(usage)?;
            for (file, bytes) in &self.tables {
                std::fs::write(dir.join(file), bytes).map_err(usage)?;
            }
        }
        Ok(())
    }
}
