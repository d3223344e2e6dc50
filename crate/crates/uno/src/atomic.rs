//! Write-to-temporary-then-rename output helpers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{io_err, Error, Result};

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Runs `fill` against a temporary file next to `path` and renames it into
/// place only if `fill` succeeds.
pub fn write_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = parent_dir(path);
    let tmp = NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_with(path, |w| w.write_all(bytes).map_err(io_err(path)))
}

/// Fills a fresh directory and moves it to `path`, which must not exist or
/// be an empty directory.
pub fn write_dir<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    if path.exists() {
        let empty = fs::read_dir(path)
            .map_err(io_err(path))?
            .next()
            .is_none();
        if !empty {
            return Err(Error::Invalid {
                what: "output directory",
                reason: format!("{} exists and is not empty", path.display()),
            });
        }
    }
    let parent = parent_dir(path);
    let tmp = tempfile::Builder::new()
        .prefix(".uno-")
        .tempdir_in(&parent)
        .map_err(io_err(&parent))?;
    fill(tmp.path())?;
    if path.exists() {
        fs::remove_dir(path).map_err(io_err(path))?;
    }
    let staged = tmp.keep();
    fs::rename(&staged, path).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    })
}
