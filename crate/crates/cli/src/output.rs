use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// A named output file, fully rendered before anything touches disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: &str, contents: impl Into<String>) -> Self {
        Artifact { name: name.to_string(), contents: contents.into() }
    }
}

/// What a command produced: files to write, a human summary, and the
/// verification failure to report after the files are written, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    pub failure: Option<String>,
}

/// Writes each artifact to a hidden temp file in `dir`, then renames it into
/// place, so readers never observe a truncated file.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> CliResult<()> {
    let io = |what: &str, p: &Path, e: std::io::Error| CliError::Io(format!("{what} {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io("creating", dir, e))?;
    for a in artifacts {
        let dest = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        if let Err(e) = fs::write(&tmp, &a.contents) {
            let _ = fs::remove_file(&tmp);
            return Err(io("writing", &tmp, e));
        }
        if let Err(e) = fs::rename(&tmp, &dest) {
            let _ = fs::remove_file(&tmp);
            return Err(io("renaming into", &dest, e));
        }
    }
    Ok(())
}
