use thiserror::Error;

/// Rejected configuration value, tagged with the dotted path of the field
/// (for example `node.2.controller.alpha`) and, when loaded from a file, the
/// line it was found on.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
            line: None,
        }
    }

    /// Prepends `prefix` to the field path.
    pub fn within(mut self, prefix: &str) -> Self {
        self.field = if self.field.is_empty() {
            prefix.to_string()
        } else {
            format!("{prefix}.{}", self.field)
        };
        self
    }

    pub fn at_line(mut self, line: Option<usize>) -> Self {
        self.line = line;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(
        "cycle {cycle}, node {node_id}: correction spills into the next cycle \
         (kappa {kappa} s + eta {eta} s >= period {period} s)"
    )]
    Spillover {
        cycle: u64,
        node_id: u32,
        kappa: f64,
        eta: f64,
        period: f64,
    },
    #[error("cycle {cycle} is past the configured run length of {num_cycles} cycles")]
    PastEnd { cycle: u64, num_cycles: u64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("trace header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no records to analyse")]
    Empty,
    #[error("records span more than one node ({0} and {1})")]
    MixedNodes(u32, u32),
    #[error("window of {window} exceeds the {available} available records")]
    WindowTooLarge { window: usize, available: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
}
