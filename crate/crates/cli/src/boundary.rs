//! Boundary data expressions: sums and products of numbers and powers of
//! `x1`, `x2`, `x3`, plus `random` (a seeded low-degree polynomial).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thinobs::Point;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, k) => a.eval(x).powi(*k),
        }
    }

    fn max_coord(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Coord(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_coord().max(b.max_coord()),
            Expr::Neg(a) | Expr::Pow(a, _) => a.max_coord(),
        }
    }
}

/// Parses `spec` for a grid of dimension `dim`.
pub fn parse(spec: &str, dim: usize, seed: u64) -> Result<Expr, CliError> {
    let spec = spec.trim();
    if spec == "random" {
        return Ok(random(dim, seed));
    }
    let mut p = Parser { s: spec.as_bytes(), i: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.i != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    if e.max_coord() > dim {
        return Err(CliError::Config(format!("boundary `{spec}` uses a coordinate beyond x{dim}")));
    }
    Ok(e)
}

/// `c0 + c1 x1 + c2 x1² + c3 x1 x_n (+ c4 x2 in 3D)` with ChaCha-drawn
/// coefficients in [−1, 1].
fn random(dim: usize, seed: u64) -> Expr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = || Box::new(Expr::Num(rng.gen_range(-1.0..=1.0)));
    let x1 = || Box::new(Expr::Coord(0));
    let xn = || Box::new(Expr::Coord(dim - 1));
    let mut e = Expr::Add(c(), Box::new(Expr::Mul(c(), x1())));
    e = Expr::Add(Box::new(e), Box::new(Expr::Mul(c(), Box::new(Expr::Pow(x1(), 2)))));
    e = Expr::Add(Box::new(e), Box::new(Expr::Mul(c(), Box::new(Expr::Mul(x1(), xn())))));
    if dim == 3 {
        e = Expr::Add(Box::new(e), Box::new(Expr::Mul(c(), Box::new(Expr::Coord(1)))));
    }
    e
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> CliError {
        CliError::Config(format!(
            "boundary `{}`: {msg} at offset {}",
            String::from_utf8_lossy(self.s),
            self.i
        ))
    }

    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }

    fn expr(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let rhs = self.term()?;
            lhs = if op == b'+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(b'*') {
            self.i += 1;
            lhs = Expr::Mul(lhs.into(), self.unary()?.into());
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, CliError> {
        if self.peek() == Some(b'-') {
            self.i += 1;
            return Ok(Expr::Neg(self.unary()?.into()));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.i += 1;
            self.skip_ws();
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            let k: i32 = std::str::from_utf8(&self.s[start..self.i])
                .ok()
                .and_then(|t| t.parse().ok())
                .filter(|k| *k <= 16)
                .ok_or_else(|| self.err("expected a small integer exponent"))?;
            return Ok(Expr::Pow(base.into(), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, CliError> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.i += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.i += 1;
                match self.s.get(self.i) {
                    Some(d @ b'1'..=b'3') => {
                        self.i += 1;
                        Ok(Expr::Coord((d - b'1') as usize))
                    }
                    _ => Err(self.err("expected x1, x2 or x3")),
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() {
                    let c = self.s[self.i];
                    let exp_sign = (c == b'-' || c == b'+') && matches!(self.s[self.i - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.i += 1;
                    } else {
                        break;
                    }
                }
                std::str::from_utf8(&self.s[start..self.i])
                    .ok()
                    .and_then(|t| t.parse().ok())
                    .map(Expr::Num)
                    .ok_or_else(|| self.err("bad number"))
            }
            _ => Err(self.err("expected a number, coordinate or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(spec: &str, x: Point) -> f64 {
        parse(spec, 3, 0).unwrap().eval(&x)
    }

    #[test]
    fn examples() {
        let x = [0.5, -0.25, 0.125];
        assert_eq!(at("x1", x), 0.5);
        assert_eq!(at("x1 + 0.2", x), 0.7);
        assert_eq!(at("-0.3", x), -0.3);
        assert_eq!(at("x1^3", x), 0.125);
        assert_eq!(at("x1*x2 - 2*x3", x), -0.375);
        assert_eq!(at("x1^2 - x2^2", x), 0.1875);
        assert_eq!(at("-(x1 - 1)", x), 0.5);
        assert_eq!(at("1e-2*x1", x), 0.005);
    }

    #[test]
    fn rejects() {
        for bad in ["", "x4", "x1 +", "y", "x1^a", "(x1", "x1 x2"] {
            assert!(parse(bad, 3, 0).is_err(), "{bad}");
        }
        assert!(parse("x3", 2, 0).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let x = [0.3, 0.1, 0.2];
        assert_eq!(parse("random", 3, 7).unwrap(), parse("random", 3, 7).unwrap());
        assert_ne!(parse("random", 3, 7).unwrap().eval(&x), parse("random", 3, 8).unwrap().eval(&x));
    }
}
