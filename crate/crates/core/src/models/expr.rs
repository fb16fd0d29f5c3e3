//! A small arithmetic expression language with symbolic differentiation.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, variables,
//! named constants, and the functions `exp`, `ln`, `sqrt`. Exponents must
//! be constant.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
}

use Expr::*;

impl Expr {
    /// Parses `src`; identifiers resolve first to `variables` (by position),
    /// then to `constants`.
    pub fn parse(
        src: &str,
        variables: &[String],
        constants: &HashMap<String, f64>,
    ) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            variables,
            constants,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e.simplify())
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Const(c) => *c,
            Var(i) => z[*i],
            Neg(a) => -a.eval(z),
            Add(a, b) => a.eval(z) + b.eval(z),
            Sub(a, b) => a.eval(z) - b.eval(z),
            Mul(a, b) => a.eval(z) * b.eval(z),
            Div(a, b) => a.eval(z) / b.eval(z),
            Pow(a, p) => {
                let x = a.eval(z);
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    x.powi(*p as i32)
                } else {
                    x.powf(*p)
                }
            }
            Exp(a) => a.eval(z).exp(),
            Ln(a) => a.eval(z).ln(),
            Sqrt(a) => a.eval(z).sqrt(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Const(c) if *c == 0.0)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Const(c) => Some(*c),
            _ => None,
        }
    }

    /// `∂/∂z_var`, simplified.
    pub fn diff(&self, var: usize) -> Expr {
        let d = match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => Neg(Box::new(a.diff(var))),
            Add(a, b) => Add(Box::new(a.diff(var)), Box::new(b.diff(var))),
            Sub(a, b) => Sub(Box::new(a.diff(var)), Box::new(b.diff(var))),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.diff(var)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.diff(var)))),
            ),
            Div(a, b) => Sub(
                Box::new(Div(Box::new(a.diff(var)), b.clone())),
                Box::new(Div(
                    Box::new(Mul(a.clone(), Box::new(b.diff(var)))),
                    Box::new(Pow(b.clone(), 2.0)),
                )),
            ),
            Pow(a, p) => Mul(
                Box::new(Mul(Box::new(Const(*p)), Box::new(Pow(a.clone(), p - 1.0)))),
                Box::new(a.diff(var)),
            ),
            Exp(a) => Mul(Box::new(Exp(a.clone())), Box::new(a.diff(var))),
            Ln(a) => Div(Box::new(a.diff(var)), a.clone()),
            Sqrt(a) => Div(
                Box::new(a.diff(var)),
                Box::new(Mul(Box::new(Const(2.0)), Box::new(Sqrt(a.clone())))),
            ),
        };
        d.simplify()
    }

    /// Constant folding and the identities `0 + a`, `1·a`, `0·a`, `a^1`, `a^0`.
    pub fn simplify(&self) -> Expr {
        match self {
            Const(_) | Var(_) => self.clone(),
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                s => Neg(Box::new(s)),
            },
            Add(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Const(x + y),
                    (Some(0.0), _) => b,
                    (_, Some(0.0)) => a,
                    _ => Add(Box::new(a), Box::new(b)),
                }
            }
            Sub(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Const(x - y),
                    (Some(0.0), _) => Neg(Box::new(b)).simplify(),
                    (_, Some(0.0)) => a,
                    _ => Sub(Box::new(a), Box::new(b)),
                }
            }
            Mul(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Const(x * y),
                    (Some(0.0), _) | (_, Some(0.0)) => Const(0.0),
                    (Some(1.0), _) => b,
                    (_, Some(1.0)) => a,
                    _ => Mul(Box::new(a), Box::new(b)),
                }
            }
            Div(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Const(x / y),
                    (Some(0.0), _) => Const(0.0),
                    (_, Some(1.0)) => a,
                    _ => Div(Box::new(a), Box::new(b)),
                }
            }
            Pow(a, p) => {
                let a = a.simplify();
                if *p == 0.0 {
                    Const(1.0)
                } else if *p == 1.0 {
                    a
                } else if let Some(x) = a.as_const() {
                    Const(Pow(Box::new(Const(x)), *p).eval(&[]))
                } else {
                    Pow(Box::new(a), *p)
                }
            }
            Exp(a) => match a.simplify() {
                Const(c) => Const(c.exp()),
                s => Exp(Box::new(s)),
            },
            Ln(a) => match a.simplify() {
                Const(c) => Const(c.ln()),
                s => Ln(Box::new(s)),
            },
            Sqrt(a) => match a.simplify() {
                Const(c) => Const(c.sqrt()),
                s => Sqrt(Box::new(s)),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{c}"),
            Var(i) => write!(f, "z{i}"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, p) => write!(f, "({a}^{p})"),
            Exp(a) => write!(f, "exp({a})"),
            Ln(a) => write!(f, "ln({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse()
                .map_err(|_| Error::ModelDefinition(format!("bad number `{text}` in `{src}`")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::ModelDefinition(format!(
                "unexpected character `{c}` in `{src}`"
            )));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    variables: &'a [String],
    constants: &'a HashMap<String, f64>,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::ModelDefinition(format!("{msg} in `{}` at token {}", self.src, self.pos))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat_op('^') {
            let exponent = self.unary()?.simplify();
            let Some(p) = exponent.as_const() else {
                return Err(self.error("exponent must be constant"));
            };
            return Ok(Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return Err(self.error("missing `)`"));
                }
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if matches!(name.as_str(), "exp" | "ln" | "sqrt") {
                    if !self.eat_op('(') {
                        return Err(self.error(&format!("`{name}` needs parentheses")));
                    }
                    let arg = Box::new(self.expr()?);
                    if !self.eat_op(')') {
                        return Err(self.error("missing `)`"));
                    }
                    return Ok(match name.as_str() {
                        "exp" => Exp(arg),
                        "ln" => Ln(arg),
                        _ => Sqrt(arg),
                    });
                }
                if let Some(i) = self.variables.iter().position(|v| *v == name) {
                    return Ok(Var(i));
                }
                if let Some(v) = self.constants.get(&name) {
                    return Ok(Const(*v));
                }
                if name == "pi" {
                    return Ok(Const(std::f64::consts::PI));
                }
                Err(self.error(&format!("unknown identifier `{name}`")))
            }
            _ => Err(self.error("expected a number, name, or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expr {
        let vars = vec!["x".to_string(), "y".to_string()];
        let mut k = HashMap::new();
        k.insert("a".to_string(), 3.0);
        Expr::parse(s, &vars, &k).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(parse("1 + 2 * 3").eval(&[]), 7.0);
        assert_eq!(parse("-2^2").eval(&[]), -4.0);
        assert_eq!(parse("2^3^2").eval(&[]), 512.0);
        assert_eq!(parse("a * x - y / 2").eval(&[1.0, 4.0]), 1.0);
        assert_eq!(parse("1e-3 * 2").eval(&[]), 2e-3);
    }

    #[test]
    fn derivative_of_rational() {
        // d/dz 1/(1+z^2) = -2z/(1+z^2)^2
        let e = parse("1/(1 + x^2)");
        let d = e.diff(0);
        let x = 0.7;
        assert!((d.eval(&[x, 0.0]) + 2.0 * x / (1.0 + x * x).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn derivative_of_transcendentals() {
        let e = parse("exp(x*y) + ln(x) + sqrt(y)");
        let (x, y) = (1.3, 0.4);
        let dx = e.diff(0).eval(&[x, y]);
        let dy = e.diff(1).eval(&[x, y]);
        assert!((dx - (y * (x * y).exp() + 1.0 / x)).abs() < 1e-13);
        assert!((dy - (x * (x * y).exp() + 0.5 / y.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn simplification_removes_dead_terms() {
        assert_eq!(parse("x*y + 2").diff(0).diff(0), Const(0.0));
        assert_eq!(parse("3*x").diff(0), Const(3.0));
    }

    #[test]
    fn errors() {
        let vars = vec!["x".to_string()];
        let k = HashMap::new();
        assert!(Expr::parse("x +", &vars, &k).is_err());
        assert!(Expr::parse("q", &vars, &k).is_err());
        assert!(Expr::parse("x^x", &vars, &k).is_err());
        assert!(Expr::parse("(x", &vars, &k).is_err());
        assert!(Expr::parse("x $ 1", &vars, &k).is_err());
    }
}
