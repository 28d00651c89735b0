use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use paritylab::report::{to_flat_csv, to_json_string};
use serde::Serialize;

use crate::args::{Format, OutputArgs};

/// Writes `text` to `path`, or to standard output when no path is given.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).context("cannot write to standard output")?;
            out.flush().context("cannot write to standard output")
        }
    }
}

pub fn render<T: Serialize>(report: &T, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => to_json_string(report),
        Format::Csv => to_flat_csv(&serde_json::to_value(report).context("report does not serialize")?),
    })
}

pub fn emit<T: Serialize>(report: &T, output: &OutputArgs, default: Format) -> Result<()> {
    let text = render(report, output.format.unwrap_or(default))?;
    write_text(output.out.as_deref(), &text)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
