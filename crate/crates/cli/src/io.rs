use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::exit::{CliError, CliResult};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Creates `dir/name` and hands it to `f`; I/O errors name the file.
pub fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> photodyn_core::Result<()>,
) -> CliResult<()> {
    let path = dir.join(name);
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    f(&mut w).map_err(|e| match e {
        photodyn_core::Error::Io(e) => io(e),
        other => CliError::from(other),
    })?;
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    write_with(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Opens an input of a run directory; a missing file is a usage error.
pub fn open_input(dir: &Path, name: &str) -> CliResult<File> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(CliError::Usage(format!("missing input {}", path.display())));
    }
    File::open(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> CliResult<T> {
    let f = open_input(dir, name)?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| CliError::Usage(format!("malformed {}: {e}", dir.join(name).display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}
