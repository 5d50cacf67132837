//! Config-driven runner: parses JSON run configs, dispatches to the
//! `vpconvex-core` solvers and writes CSV/JSON artifacts with a hashed
//! manifest.

pub mod appendix;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod svg;

use serde_json::{json, Value};

pub use commands::{run_config, run_file, RunOptions, RunSummary};
pub use config::{ConfigError, RunConfig};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Solver = 3,
    Io = 4,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn name(self) -> &'static str {
        match self {
            ExitKind::Config => "config",
            ExitKind::Solver => "solver",
            ExitKind::Io => "io",
        }
    }
}

/// Exit class and machine-readable description of a failed run. The first
/// recognised cause in the error chain decides the class.
pub fn classify(err: &anyhow::Error) -> (ExitKind, Value) {
    let message = format!("{err:#}");
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<ConfigError>() {
            let body = json!({ "kind": "config", "code": "ConfigInvalid", "key": c.key, "line": c.line,
                               "message": message, "exit_code": ExitKind::Config.code() });
            return (ExitKind::Config, json!({ "error": body }));
        }
        if let Some(c) = cause.downcast_ref::<vpconvex_core::Error>() {
            let kind = if matches!(c, vpconvex_core::Error::InvalidInput(_)) {
                ExitKind::Config
            } else {
                ExitKind::Solver
            };
            let body = json!({ "kind": kind.name(), "code": c.code(), "message": message, "exit_code": kind.code() });
            return (kind, json!({ "error": body }));
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            let body = json!({ "kind": "io", "code": "Io", "message": message, "exit_code": ExitKind::Io.code() });
            return (ExitKind::Io, json!({ "error": body }));
        }
    }
    let body = json!({ "kind": "solver", "code": "Internal", "message": message, "exit_code": ExitKind::Solver.code() });
    (ExitKind::Solver, json!({ "error": body }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification_follows_the_chain() {
        let e = anyhow::Error::from(ConfigError::key("field.h", "bad")).context("loading");
        let (k, v) = classify(&e);
        assert_eq!(k, ExitKind::Config);
        assert_eq!(v["error"]["key"], "field.h");

        let e = anyhow::Error::from(vpconvex_core::Error::StepLimitExceeded { steps: 3 });
        assert_eq!(classify(&e).0, ExitKind::Solver);

        let io: std::result::Result<(), _> = Err(std::io::Error::other("disk full"));
        let e = io.context("writing").unwrap_err();
        let (k, v) = classify(&e);
        assert_eq!(k, ExitKind::Io);
        assert_eq!(v["error"]["exit_code"], 4);
    }
}
