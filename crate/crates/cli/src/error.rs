use std::fmt;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const RUNTIME: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: USAGE, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: DATA, msg: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self { code: RUNTIME, msg: msg.into() }
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.msg = format!("{what}: {}", self.msg);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<sigfuse::Error> for CliError {
    fn from(e: sigfuse::Error) -> Self {
        use sigfuse::Error as E;
        let code = match &e {
            E::Config(_) | E::UnknownGroup(_) => USAGE,
            E::Io(_) | E::Status(_) | E::Wire(_) | E::NoTrainableGroup => RUNTIME,
            other if other.is_data_error() => DATA,
            E::Empty(_) | E::NoPositives => DATA,
            _ => RUNTIME,
        };
        Self { code, msg: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reading an input file: a missing or unreadable input is a data error.
pub fn read_input(path: &std::path::Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

pub fn io_out(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::runtime(format!("cannot write {}: {e}", path.display()))
}
