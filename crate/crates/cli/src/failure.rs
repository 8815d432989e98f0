use std::fmt::Display;
use std::path::Path;

use featsig::Error;

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const PROTOCOL: u8 = 4;
pub const INTERNAL: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Display) -> Self {
        Failure { code: CONFIG, message: message.to_string() }
    }

    pub fn data(message: impl Display) -> Self {
        Failure { code: DATA, message: message.to_string() }
    }

    pub fn internal(message: impl Display) -> Self {
        Failure { code: INTERNAL, message: message.to_string() }
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Capability(_) => CONFIG,
            Error::Hierarchy(_) | Error::Data(_) | Error::Arity { .. } | Error::Json(_) | Error::Csv(_) => DATA,
            Error::Protocol { .. } => PROTOCOL,
            Error::Internal(_) | Error::Io(_) => INTERNAL,
        };
        Failure { code, message: e.to_string() }
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}
