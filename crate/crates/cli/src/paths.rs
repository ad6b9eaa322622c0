//! Relative paths between output and input directories, so that emitted
//! files do not depend on where a run was placed.

use std::path::{Component, Path};

use crate::{CliError, CliResult};

/// Canonical absolute form of an existing path.
pub fn canonical(path: &Path) -> CliResult<std::path::PathBuf> {
    path.canonicalize()
        .map_err(|e| CliError::Core(palmdeid::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }))
}

/// `to` relative to directory `from`, both absolute, `/`-separated.
pub fn relative(from: &Path, to: &Path) -> String {
    let a: Vec<Component> = from.components().collect();
    let b: Vec<Component> = to.components().collect();
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut parts: Vec<String> = vec!["..".to_string(); a.len() - common];
    parts.extend(b[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    if parts.is_empty() {
        ".".to_string()
    } else {
        parts.join("/")
    }
}

/// Joins a relative directory and a relative file path.
pub fn join(dir: &str, file: &str) -> String {
    if dir == "." {
        file.to_string()
    } else {
        format!("{dir}/{file}")
    }
}
