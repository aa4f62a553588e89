//! Writing results either to stdout or atomically to a file.

use std::io::{self, Write};
use std::path::Path;

use tempfile::NamedTempFile;

/// Runs `body` against the destination. For a file the bytes go to a
/// temporary sibling that is renamed into place only on success, so a
/// failed run never leaves a partial file behind.
pub fn emit<F>(out: Option<&Path>, body: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match out {
        None => {
            let stdout = io::stdout();
            let mut lock = io::BufWriter::new(stdout.lock());
            body(&mut lock)?;
            lock.flush()
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = NamedTempFile::new_in(dir)?;
            {
                let mut w = io::BufWriter::new(tmp.as_file_mut());
                body(&mut w)?;
                w.flush()?;
            }
            tmp.persist(path).map_err(|e| e.error)?;
            Ok(())
        }
    }
}
