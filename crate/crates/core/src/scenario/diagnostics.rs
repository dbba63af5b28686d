use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    Syntax,
    UnknownSection,
    UnknownKey,
    MissingKey,
    InvalidValue,
    UnknownEdgeKind,
    UnknownDriver,
    UnknownDimension,
    DanglingReference,
    IncompleteComponent,
    NegativeModulus,
    DuplicateComponent,
    JumpSelfLoop,
    DriverMismatch,
    MissingStop,
    DeadEdgeNrule4,
    Unreachable,
    StopNeverMet,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        use DiagnosticCode::*;
        match self {
            Syntax => "SYNTAX",
            UnknownSection => "UNKNOWN_SECTION",
            UnknownKey => "UNKNOWN_KEY",
            MissingKey => "MISSING_KEY",
            InvalidValue => "INVALID_VALUE",
            UnknownEdgeKind => "UNKNOWN_EDGE_KIND",
            UnknownDriver => "UNKNOWN_DRIVER",
            UnknownDimension => "UNKNOWN_DIMENSION",
            DanglingReference => "DANGLING_REFERENCE",
            IncompleteComponent => "INCOMPLETE_COMPONENT",
            NegativeModulus => "NEGATIVE_MODULUS",
            DuplicateComponent => "DUPLICATE_COMPONENT",
            JumpSelfLoop => "JUMP_SELF_LOOP",
            DriverMismatch => "DRIVER_MISMATCH",
            MissingStop => "MISSING_STOP",
            DeadEdgeNrule4 => "DEAD_EDGE_NRULE4",
            Unreachable => "UNREACHABLE",
            StopNeverMet => "STOP_NEVER_MET",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// A positioned finding. `line` and `column` are 1-based; 0 means "no position".
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagnosticCode, line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            line,
            column,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagnosticCode, line: usize, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Warning,
            line,
            column: 0,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if self.line > 0 {
            write!(f, "{}:{}: ", self.line, self.column.max(1))?;
        }
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}
