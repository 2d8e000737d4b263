use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem constants: weight exponent `a = 1 - 2s` and the two thin-space
/// reaction coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    a: f64,
    lambda_plus: f64,
    lambda_minus: f64,
}

impl Params {
    pub fn new(a: f64, lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight exponent a = {a} must lie in (-1, 1)"
            )));
        }
        if !(lambda_plus >= 0.0 && lambda_plus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda_plus = {lambda_plus} must be finite and >= 0"
            )));
        }
        if !(lambda_minus >= 0.0 && lambda_minus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda_minus = {lambda_minus} must be finite and >= 0"
            )));
        }
        Ok(Self {
            a,
            lambda_plus,
            lambda_minus,
        })
    }

    /// Both phases with unit coefficient: `J = ∫|∇v|² x_n^a − 2∫|v|`.
    pub fn symmetric(a: f64) -> Result<Self> {
        Self::new(a, 1.0, 1.0)
    }

    /// The one-sided normalization `J = ∫|∇v|² x_n^a − 2∫v⁻`.
    pub fn one_phase(a: f64) -> Result<Self> {
        Self::new(a, 0.0, 1.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Fractional order `s = (1 - a)/2`.
    pub fn s(&self) -> f64 {
        (1.0 - self.a) / 2.0
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    /// Natural homogeneity `1 - a = 2s` of blow-ups.
    pub fn homogeneity(&self) -> f64 {
        1.0 - self.a
    }

    /// Thin flux `λ+χ{u>0} − λ−χ{u<0}`; zero on the zero set.
    pub fn flux(&self, u: f64) -> f64 {
        if u > 0.0 {
            self.lambda_plus
        } else if u < 0.0 {
            -self.lambda_minus
        } else {
            0.0
        }
    }

    /// Thin integrand `λ+u⁺ + λ−u⁻`.
    pub fn thin_density(&self, u: f64) -> f64 {
        if u > 0.0 {
            self.lambda_plus * u
        } else {
            -self.lambda_minus * u
        }
    }

    pub(crate) fn with_lambdas(&self, lambda_plus: f64, lambda_minus: f64) -> Self {
        Self {
            a: self.a,
            lambda_plus,
            lambda_minus,
        }
    }
}
