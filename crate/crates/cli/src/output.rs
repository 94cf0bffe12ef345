//! Writing outputs and reporting errors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smallbody::export::to_json;
use smallbody::{Error, ErrorClass};

/// Exit status for a failure class.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Input => 2,
        ErrorClass::Physics => 3,
        ErrorClass::Solver => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub class: String,
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        let class = e.class();
        Self {
            class: format!("{class:?}").to_lowercase(),
            kind: e.kind().to_string(),
            exit_code: exit_code(class),
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        to_json("error", self).unwrap_or_else(|_| format!("{{\"message\": {:?}}}\n", self.message))
    }
}

/// Writes every file through a temporary name and renames it into place, so
/// a file either appears complete or not at all.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.partial"));
        fs::write(&tmp, contents)?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(tmp, dest)?;
    }
    Ok(())
}
