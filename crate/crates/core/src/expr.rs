//! Arithmetic mini-language for time functions and forcing fields.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are the variables `t`, `x`, `y` and the constant `pi`;
//! functions are `sin`, `cos`, `exp`. `^` is right associative.
//! Derivatives are taken symbolically so the hot path never differentiates
//! numerically.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// Natural log; produced only by differentiation, not by the parser.
    Ln(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at column {}", self.msg, self.pos + 1)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E4
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                pos: start,
                msg: format!("malformed number '{text}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ParseError {
                pos: i,
                msg: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat_op(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" => {
                        if !self.eat_op('(') {
                            return self.err(format!("expected '(' after {name}"));
                        }
                        let arg = Box::new(self.expr()?);
                        if !self.eat_op(')') {
                            return self.err("expected ')'");
                        }
                        Ok(match name.as_str() {
                            "sin" => Expr::Sin(arg),
                            "cos" => Expr::Cos(arg),
                            _ => Expr::Exp(arg),
                        })
                    }
                    other => {
                        self.at -= 1;
                        self.err(format!("unknown identifier '{other}'"))
                    }
                }
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of expression"),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let toks = lex(src)?;
        let mut p = Parser {
            toks,
            at: 0,
            len: src.len(),
        };
        let e = p.expr()?;
        if p.at != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        use Expr::*;
        match self {
            Num(v) => *v,
            Var(self::Var::T) => t,
            Var(self::Var::X) => x,
            Var(self::Var::Y) => y,
            Neg(a) => -a.eval(t, x, y),
            Add(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            Sub(a, b) => a.eval(t, x, y) - b.eval(t, x, y),
            Mul(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            Div(a, b) => a.eval(t, x, y) / b.eval(t, x, y),
            Pow(a, b) => {
                let base = a.eval(t, x, y);
                match **b {
                    Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(n as i32),
                    _ => base.powf(b.eval(t, x, y)),
                }
            }
            Sin(a) => a.eval(t, x, y).sin(),
            Cos(a) => a.eval(t, x, y).cos(),
            Exp(a) => a.eval(t, x, y).exp(),
            Ln(a) => a.eval(t, x, y).ln(),
        }
    }

    pub fn eval_t(&self, t: f64) -> f64 {
        self.eval(t, 0.0, 0.0)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        use Expr::*;
        match self {
            Num(_) => false,
            Var(w) => *w == v,
            Neg(a) | Sin(a) | Cos(a) | Exp(a) | Ln(a) => a.depends_on(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
        }
    }

    /// Symbolic derivative with respect to `v`, lightly simplified.
    pub fn derivative(&self, v: Var) -> Expr {
        use Expr::*;
        let b = |e: Expr| Box::new(e);
        let d = match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => Neg(b(a.derivative(v))),
            Add(l, r) => Add(b(l.derivative(v)), b(r.derivative(v))),
            Sub(l, r) => Sub(b(l.derivative(v)), b(r.derivative(v))),
            Mul(l, r) => Add(
                b(Mul(b(l.derivative(v)), r.clone())),
                b(Mul(l.clone(), b(r.derivative(v)))),
            ),
            Div(l, r) => Div(
                b(Sub(
                    b(Mul(b(l.derivative(v)), r.clone())),
                    b(Mul(l.clone(), b(r.derivative(v)))),
                )),
                b(Mul(r.clone(), r.clone())),
            ),
            Pow(base, ex) => {
                if !ex.depends_on(v) {
                    // n * base^(n-1) * base'
                    Mul(
                        b(Mul(ex.clone(), b(Pow(base.clone(), b(Sub(ex.clone(), b(Num(1.0)))))))),
                        b(base.derivative(v)),
                    )
                } else {
                    // base^ex = exp(ex ln base)
                    Mul(
                        b(Pow(base.clone(), ex.clone())),
                        b(Add(
                            b(Mul(b(ex.derivative(v)), b(Ln(base.clone())))),
                            b(Mul(ex.clone(), b(Div(b(base.derivative(v)), base.clone())))),
                        )),
                    )
                }
            }
            Sin(a) => Mul(b(Cos(a.clone())), b(a.derivative(v))),
            Cos(a) => Neg(b(Mul(b(Sin(a.clone())), b(a.derivative(v))))),
            Exp(a) => Mul(b(Exp(a.clone())), b(a.derivative(v))),
            Ln(a) => Div(b(a.derivative(v)), a.clone()),
        };
        d.simplify()
    }

    fn simplify(self) -> Expr {
        use Expr::*;
        match self {
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                Neg(inner) => *inner,
                e => Neg(Box::new(e)),
            },
            Add(l, r) => match (l.simplify(), r.simplify()) {
                (Num(a), Num(b)) => Num(a + b),
                (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
                (a, b) => Add(Box::new(a), Box::new(b)),
            },
            Sub(l, r) => match (l.simplify(), r.simplify()) {
                (Num(a), Num(b)) => Num(a - b),
                (e, Num(z)) if z == 0.0 => e,
                (Num(z), e) if z == 0.0 => Neg(Box::new(e)),
                (a, b) => Sub(Box::new(a), Box::new(b)),
            },
            Mul(l, r) => match (l.simplify(), r.simplify()) {
                (Num(a), Num(b)) => Num(a * b),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
                (a, b) => Mul(Box::new(a), Box::new(b)),
            },
            Div(l, r) => match (l.simplify(), r.simplify()) {
                (Num(z), _) if z == 0.0 => Num(0.0),
                (e, Num(o)) if o == 1.0 => e,
                (a, b) => Div(Box::new(a), Box::new(b)),
            },
            Pow(l, r) => match (l.simplify(), r.simplify()) {
                (_, Num(z)) if z == 0.0 => Num(1.0),
                (e, Num(o)) if o == 1.0 => e,
                (a, b) => Pow(Box::new(a), Box::new(b)),
            },
            Sin(a) => Sin(Box::new(a.simplify())),
            Cos(a) => Cos(Box::new(a.simplify())),
            Exp(a) => Exp(Box::new(a.simplify())),
            Ln(a) => Ln(Box::new(a.simplify())),
            e => e,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(v) => write!(f, "{v}"),
            Var(self::Var::T) => write!(f, "t"),
            Var(self::Var::X) => write!(f, "x"),
            Var(self::Var::Y) => write!(f, "y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Ln(a) => write!(f, "ln({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("0.2*t + 2^3 - -1").unwrap();
        assert!((e.eval_t(1.0) - (0.2 + 8.0 + 1.0)).abs() < 1e-15);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval_t(0.0), 512.0);
        let e = Expr::parse("sin(pi/2) * exp(0) + cos(0)").unwrap();
        assert!((e.eval_t(0.0) - 2.0).abs() < 1e-15);
        let e = Expr::parse("1e-3*t").unwrap();
        assert!((e.eval_t(2.0) - 2e-3).abs() < 1e-18);
        let e = Expr::parse("-t^2").unwrap();
        assert_eq!(e.eval_t(3.0), -9.0);
    }

    #[test]
    fn reports_errors_with_position() {
        let err = Expr::parse("0.2*q").unwrap_err();
        assert_eq!(err.pos, 4);
        assert!(Expr::parse("sin t").is_err());
        assert!(Expr::parse("(1+2").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("3 $ 4").is_err());
    }

    #[test]
    fn symbolic_derivative_matches_finite_differences() {
        for src in [
            "0.2*t",
            "sin(3*t)*exp(-t)",
            "t^3 - 2/t",
            "cos(t)^2",
            "exp(t)^t",
            "t^t",
            "(1+t)/(2+sin(t))",
        ] {
            let e = Expr::parse(src).unwrap();
            let d = e.derivative(Var::T);
            for &t in &[0.3, 0.7, 1.9] {
                let h = 1e-6;
                let fd = (e.eval_t(t + h) - e.eval_t(t - h)) / (2.0 * h);
                assert!(
                    (d.eval_t(t) - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{src} at {t}: {} vs {fd}",
                    d.eval_t(t)
                );
            }
        }
    }

    #[test]
    fn spatial_variables() {
        let e = Expr::parse("x*y + t").unwrap();
        assert_eq!(e.eval(1.0, 2.0, 3.0), 7.0);
        assert!(e.depends_on(Var::X));
        assert!(!Expr::parse("t").unwrap().depends_on(Var::X));
    }
}
