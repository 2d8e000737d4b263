use thiserror::Error;

/// Everything a run can fail with, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] thinobs::Error),

    /// A computed check came out the wrong way.
    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for solver non-convergence, 3 for certificate disagreement, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use thinobs::Error as E;
        match self {
            CliError::Core(E::NotStabilized { .. } | E::LinearSolve { .. } | E::Collapse) => 2,
            CliError::Core(E::Disagreement { .. } | E::Calibration { .. } | E::DominationViolated { .. }) => 3,
            CliError::Check(_) => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let core = |e| CliError::Core(e);
        assert_eq!(core(thinobs::Error::NotStabilized { iterations: 3, oscillating: vec![] }).exit_code(), 2);
        assert_eq!(core(thinobs::Error::LinearSolve { iterations: 9, residual: 1.0 }).exit_code(), 2);
        assert_eq!(core(thinobs::Error::Disagreement { closed_form: 1.0, quadrature: 2.0 }).exit_code(), 3);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(core(thinobs::Error::InvalidParameter("x".into())).exit_code(), 1);
    }
}
