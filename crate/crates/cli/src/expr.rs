//! Scalar expressions over `x1 … xn` and `u`, used to describe plants on the
//! command line and in config files.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | ident | func '(' expr ')' | '(' expr ')' | '-' factor
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// `x{i+1}`, zero-based.
    X(usize),
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Abs,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Tanh, Func::Exp, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("`{func}` takes 1 argument, got {got} (position {position})")]
    ArityError {
        func: &'static str,
        got: usize,
        position: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
}

impl Expr {
    /// Evaluates with state `x` and input `u`.
    pub fn eval(&self, x: &[f64], u: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::U) => u,
            Expr::Neg(e) => -e.eval(x, u)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(x, u)?;
                let b = b.eval(x, u)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(x, u)?),
        })
    }

    pub fn uses_input(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(Var::X(_)) => false,
            Expr::Var(Var::U) => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_input(),
            Expr::Binary(_, a, b) => a.uses_input() || b.uses_input(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            _ => 3,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::U) => f.write_str("u"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lexeme = &text[start..i];
            let value = lexeme.parse::<f64>().map_err(|_| ParseError::SyntaxError {
                position: start,
                message: format!("malformed number `{lexeme}`"),
            })?;
            out.push((Token::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(text[start..i].to_string()), start));
            continue;
        }
        let token = match c {
            '+' | '-' | '*' | '/' => Token::Op(c),
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            _ => {
                return Err(ParseError::SyntaxError {
                    position: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((token, start));
        i += c.len_utf8();
    }
    out.push((Token::End, text.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn position(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Token, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::SyntaxError {
            position: self.position(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Token::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Token::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let (token, position) = self.bump();
        match token {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Op('-') => Ok(Expr::Neg(Box::new(self.factor()?))),
            Token::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Token::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func, position);
                }
                self.variable(&name, position).map(Expr::Var)
            }
            Token::End => Err(ParseError::SyntaxError {
                position,
                message: "unexpected end of input".into(),
            }),
            other => Err(ParseError::SyntaxError {
                position,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }

    fn call(&mut self, func: Func, position: usize) -> Result<Expr, ParseError> {
        if *self.peek() != Token::LParen {
            return Err(self.syntax(format!("expected `(` after `{}`", func.name())));
        }
        self.bump();
        let mut args = Vec::new();
        if *self.peek() != Token::RParen {
            args.push(self.expr()?);
            while *self.peek() == Token::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.expect_rparen()?;
        if args.len() != 1 {
            return Err(ParseError::ArityError {
                func: func.name(),
                got: args.len(),
                position,
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }

    fn variable(&self, name: &str, position: usize) -> Result<Var, ParseError> {
        if name == "u" {
            return Ok(Var::U);
        }
        let index = name
            .strip_prefix('x')
            .filter(|d| !d.starts_with('0'))
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&i| i >= 1 && i <= self.n);
        match index {
            Some(i) => Ok(Var::X(i - 1)),
            None => Err(ParseError::UnknownIdentifier {
                name: name.to_string(),
                position,
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Token::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected `)`, found {}", describe(self.peek()))))
        }
    }
}

fn describe(t: &Token) -> String {
    match t {
        Token::Num(v) => format!("number {v}"),
        Token::Ident(s) => format!("identifier `{s}`"),
        Token::Op(c) => format!("`{c}`"),
        Token::LParen => "`(`".into(),
        Token::RParen => "`)`".into(),
        Token::Comma => "`,`".into(),
        Token::End => "end of input".into(),
    }
}

/// Parses `text` with state variables `x1 … xn`.
pub fn parse_expr(text: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        n,
    };
    let e = p.expr()?;
    if *p.peek() != Token::End {
        return Err(p.syntax(format!("unexpected {}", describe(p.peek()))));
    }
    Ok(e)
}
