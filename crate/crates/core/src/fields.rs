//! Closed-form catalog of the scalar coefficient functions appearing in a
//! problem instance: polynomials in the state with time-dependent
//! coefficients obtained through sums and products, plus the bounded smooth
//! forms `a*x/(b+|x|)`, `a*sin(x)` and `a*atan(x)`. Every catalog member is a
//! total function on `[0,T] x R`, so evaluation never fails.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::Cursor;
use crate::ordered_space::Grid;

/// Polynomial in `t` alone; used for the coefficient `b(t)` and as a building
/// block inside [`ScalarField2`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TimePoly {
    coeffs: Vec<f64>,
}

impl TimePoly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, FieldError> {
        if coeffs.is_empty() {
            return Err(FieldError::Invalid("a polynomial needs at least one coefficient".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::Invalid("polynomial coefficients must be finite".into()));
        }
        Ok(TimePoly { coeffs })
    }

    pub fn constant(c: f64) -> Result<Self, FieldError> {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        // Horner form.
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `max_i |p(t_i)|` over the grid nodes.
    pub fn sup_on_grid(&self, grid: &Grid) -> f64 {
        grid.nodes().fold(0.0, |m, t| m.max(self.eval(t).abs()))
    }
}

impl fmt::Display for TimePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.len() == 1 {
            return write!(f, "{}", self.coeffs[0]);
        }
        write!(f, "tpoly(")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for TimePoly {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        let out = parse_time_poly(&mut cur)?;
        cur.expect_end()?;
        Ok(out)
    }
}

fn parse_time_poly(cur: &mut Cursor<'_>) -> Result<TimePoly, FieldError> {
    match cur.peek() {
        Some(c) if c.is_ascii_alphabetic() => {
            let name = cur.ident()?;
            match name {
                "t" => TimePoly::new(vec![0.0, 1.0]),
                "tpoly" | "const" => {
                    cur.eat('(')?;
                    let coeffs = parse_number_list(cur)?;
                    cur.eat(')')?;
                    TimePoly::new(coeffs)
                }
                other => Err(FieldError::Parse(
                    cur.error(format!("unknown time-function form '{other}'")),
                )),
            }
        }
        _ => TimePoly::constant(cur.number()?),
    }
}

fn parse_number_list(cur: &mut Cursor<'_>) -> Result<Vec<f64>, FieldError> {
    let mut out = vec![cur.number()?];
    while cur.eat_opt(',') {
        out.push(cur.number()?);
    }
    Ok(out)
}

/// Scalar function of `(t, x)` from the closed-form catalog.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum ScalarField2 {
    Const(f64),
    /// Polynomial in `x` with constant coefficients.
    PolyX(Vec<f64>),
    /// Polynomial in `t`, constant in `x`.
    PolyT(TimePoly),
    /// `amp * x / (scale + |x|)`: bounded, smooth, nondecreasing for `amp >= 0`.
    Bounded { amp: f64, scale: f64 },
    /// `amp * sin(x)`.
    Sin { amp: f64 },
    /// `amp * atan(x)`.
    Atan { amp: f64 },
    Sum(Arc<ScalarField2>, Arc<ScalarField2>),
    Prod(Arc<ScalarField2>, Arc<ScalarField2>),
}

impl ScalarField2 {
    pub fn constant(c: f64) -> Result<Self, FieldError> {
        if !c.is_finite() {
            return Err(FieldError::Invalid(format!("constant must be finite, got {c}")));
        }
        Ok(ScalarField2::Const(c))
    }

    pub fn zero() -> Self {
        ScalarField2::Const(0.0)
    }

    pub fn poly_x(coeffs: Vec<f64>) -> Result<Self, FieldError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::Invalid("polynomial coefficients must be nonempty and finite".into()));
        }
        Ok(ScalarField2::PolyX(coeffs))
    }

    pub fn bounded(amp: f64, scale: f64) -> Result<Self, FieldError> {
        if !(amp.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(FieldError::Invalid(format!(
                "bounded form needs finite amp and positive scale, got amp = {amp}, scale = {scale}"
            )));
        }
        Ok(ScalarField2::Bounded { amp, scale })
    }

    pub fn sin(amp: f64) -> Result<Self, FieldError> {
        if !amp.is_finite() {
            return Err(FieldError::Invalid("sin amplitude must be finite".into()));
        }
        Ok(ScalarField2::Sin { amp })
    }

    pub fn atan(amp: f64) -> Result<Self, FieldError> {
        if !amp.is_finite() {
            return Err(FieldError::Invalid("atan amplitude must be finite".into()));
        }
        Ok(ScalarField2::Atan { amp })
    }

    pub fn sum(a: ScalarField2, b: ScalarField2) -> Self {
        ScalarField2::Sum(Arc::new(a), Arc::new(b))
    }

    pub fn prod(a: ScalarField2, b: ScalarField2) -> Self {
        ScalarField2::Prod(Arc::new(a), Arc::new(b))
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            ScalarField2::Const(c) => *c,
            ScalarField2::PolyX(coeffs) => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            ScalarField2::PolyT(p) => p.eval(t),
            ScalarField2::Bounded { amp, scale } => amp * x / (scale + x.abs()),
            ScalarField2::Sin { amp } => amp * x.sin(),
            ScalarField2::Atan { amp } => amp * x.atan(),
            ScalarField2::Sum(a, b) => a.eval(t, x) + b.eval(t, x),
            ScalarField2::Prod(a, b) => a.eval(t, x) * b.eval(t, x),
        }
    }
}

impl fmt::Display for ScalarField2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField2::Const(c) => write!(f, "const({c})"),
            ScalarField2::PolyX(coeffs) => {
                write!(f, "poly(")?;
                for (i, c) in coeffs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            ScalarField2::PolyT(p) => {
                write!(f, "tpoly(")?;
                for (i, c) in p.coeffs().iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            ScalarField2::Bounded { amp, scale } => write!(f, "hyp({amp},{scale})"),
            ScalarField2::Sin { amp } => write!(f, "sin({amp})"),
            ScalarField2::Atan { amp } => write!(f, "atan({amp})"),
            ScalarField2::Sum(a, b) => write!(f, "sum({a},{b})"),
            ScalarField2::Prod(a, b) => write!(f, "prod({a},{b})"),
        }
    }
}

impl FromStr for ScalarField2 {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        let out = parse_field(&mut cur)?;
        cur.expect_end()?;
        Ok(out)
    }
}

fn parse_field(cur: &mut Cursor<'_>) -> Result<ScalarField2, FieldError> {
    match cur.peek() {
        Some(c) if c.is_ascii_alphabetic() => {
            let name = cur.ident()?;
            match name {
                "x" => ScalarField2::poly_x(vec![0.0, 1.0]),
                "t" => Ok(ScalarField2::PolyT(TimePoly::new(vec![0.0, 1.0])?)),
                "const" => {
                    cur.eat('(')?;
                    let c = cur.number()?;
                    cur.eat(')')?;
                    ScalarField2::constant(c)
                }
                "poly" => {
                    cur.eat('(')?;
                    let coeffs = parse_number_list(cur)?;
                    cur.eat(')')?;
                    ScalarField2::poly_x(coeffs)
                }
                "tpoly" => {
                    cur.eat('(')?;
                    let coeffs = parse_number_list(cur)?;
                    cur.eat(')')?;
                    Ok(ScalarField2::PolyT(TimePoly::new(coeffs)?))
                }
                "hyp" => {
                    cur.eat('(')?;
                    let amp = cur.number()?;
                    cur.eat(',')?;
                    let scale = cur.number()?;
                    cur.eat(')')?;
                    ScalarField2::bounded(amp, scale)
                }
                "sin" => {
                    cur.eat('(')?;
                    let amp = cur.number()?;
                    cur.eat(')')?;
                    ScalarField2::sin(amp)
                }
                "atan" => {
                    cur.eat('(')?;
                    let amp = cur.number()?;
                    cur.eat(')')?;
                    ScalarField2::atan(amp)
                }
                "sum" | "prod" => {
                    cur.eat('(')?;
                    let a = parse_field(cur)?;
                    cur.eat(',')?;
                    let b = parse_field(cur)?;
                    cur.eat(')')?;
                    Ok(if name == "sum" {
                        ScalarField2::sum(a, b)
                    } else {
                        ScalarField2::prod(a, b)
                    })
                }
                other => Err(FieldError::Parse(
                    cur.error(format!("unknown field form '{other}'")),
                )),
            }
        }
        _ => ScalarField2::constant(cur.number()?),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("{0}")]
    Invalid(String),
    #[error("parse error {0}")]
    Parse(#[from] crate::grammar::GrammarError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_poly_eval_and_sup() {
        let p = TimePoly::new(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 2.0);
        let g = Grid::new(1.0, 101).unwrap();
        let ramp = TimePoly::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(ramp.sup_on_grid(&g), 1.0);
    }

    #[test]
    fn bounded_form_matches_formula() {
        let f = ScalarField2::bounded(1.0, 1.0).unwrap();
        assert_eq!(f.eval(0.3, 1.0), 0.5);
        assert_eq!(f.eval(0.0, -1.0), -0.5);
        assert_eq!(f.eval(0.9, 0.0), 0.0);
    }

    #[test]
    fn composite_field_eval() {
        // f(t, x) = 1 + t * x
        let f = ScalarField2::sum(
            ScalarField2::constant(1.0).unwrap(),
            ScalarField2::prod(
                ScalarField2::PolyT(TimePoly::new(vec![0.0, 1.0]).unwrap()),
                ScalarField2::poly_x(vec![0.0, 1.0]).unwrap(),
            ),
        );
        assert_eq!(f.eval(2.0, 3.0), 7.0);
    }

    #[test]
    fn grammar_round_trips() {
        for text in [
            "const(0)",
            "poly(0,1)",
            "tpoly(0.1,0,0.2)",
            "hyp(0.3,1)",
            "sin(0.25)",
            "atan(2)",
            "sum(const(1),hyp(0.25,1))",
            "prod(tpoly(0,1),poly(0,0,1))",
        ] {
            let f: ScalarField2 = text.parse().unwrap();
            assert_eq!(f.to_string(), text, "canonical form of {text}");
            let again: ScalarField2 = f.to_string().parse().unwrap();
            assert_eq!(again, f);
        }
    }

    #[test]
    fn grammar_accepts_bare_numbers_and_names() {
        let f: ScalarField2 = "2.5".parse().unwrap();
        assert_eq!(f, ScalarField2::Const(2.5));
        let x: ScalarField2 = "x".parse().unwrap();
        assert_eq!(x.eval(0.0, 4.0), 4.0);
        let b: TimePoly = "0.5".parse().unwrap();
        assert_eq!(b.eval(3.0), 0.5);
        let ramp: TimePoly = "t".parse().unwrap();
        assert_eq!(ramp.eval(0.25), 0.25);
    }

    #[test]
    fn grammar_rejects_poles_and_junk() {
        assert!("hyp(1,0)".parse::<ScalarField2>().is_err());
        assert!("frob(1)".parse::<ScalarField2>().is_err());
        assert!("poly()".parse::<ScalarField2>().is_err());
        assert!("sin(1) trailing".parse::<ScalarField2>().is_err());
    }
}
