//! Beta function through log-Gamma.

use statrs::function::gamma::ln_gamma;

/// `B(x, y) = Γ(x)Γ(y)/Γ(x+y)` for `x, y > 0`.
pub fn beta(x: f64, y: f64) -> f64 {
    (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp()
}
