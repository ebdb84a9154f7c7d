//! Output files are written to a temporary file next to the target and
//! renamed into place, so readers never see a partial file.

use std::io::Write;
use std::path::Path;

use crate::Failure;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: crate::EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

/// Write through `fill` into a temp file, then rename it to `path`.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".tailgraph-")
        .tempfile_in(dir)
        .map_err(|e| io_failure(path, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush().map_err(|e| io_failure(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| io_failure(path, e))?;
        writeln!(w).map_err(|e| io_failure(path, e))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| io_failure(path, e)))
}

pub fn open(path: &Path) -> Result<std::fs::File, Failure> {
    std::fs::File::open(path).map_err(|e| io_failure(path, e))
}
