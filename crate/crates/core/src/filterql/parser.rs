use std::collections::BTreeSet;

use super::ast::{BinaryOp, Expr, Literal, UnaryOp};
use super::{FilterError, FUNCTIONS};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    And,
    Or,
    Not,
    Op(BinaryOp),
    Minus,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(v) => format!("number {v}"),
            Tok::Float(v) => format!("number {v:?}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Ident(s) => format!("identifier {s}"),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::Minus => "'-'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>, expected: Vec<String>) -> FilterError {
    FilterError::Syntax { line, column, message: message.into(), expected }
}

fn lex(src: &str) -> Result<Vec<Token>, FilterError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: tl, column: tc });
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    while i < j {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Float(text.parse().map_err(|_| syntax(tl, tc, format!("bad number '{text}'"), vec![]))?)
            } else {
                Tok::Int(text.parse().map_err(|_| syntax(tl, tc, format!("integer '{text}' out of range"), vec![]))?)
            };
            push(&mut out, tok);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.to_ascii_uppercase().as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Ident(word),
            };
            push(&mut out, tok);
            continue;
        }
        if c == '\'' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(syntax(tl, tc, "unterminated string literal", vec!["'".into()]));
                }
                if chars[i] == '\'' {
                    if chars.get(i + 1) == Some(&'\'') {
                        s.push('\'');
                        bump!();
                        bump!();
                        continue;
                    }
                    bump!();
                    break;
                }
                s.push(chars[i]);
                bump!();
            }
            push(&mut out, Tok::Str(s));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, width) = match two.as_str() {
            "<=" => (Tok::Op(BinaryOp::Le), 2),
            ">=" => (Tok::Op(BinaryOp::Ge), 2),
            "!=" | "<>" => (Tok::Op(BinaryOp::Ne), 2),
            _ => match c {
                '+' => (Tok::Op(BinaryOp::Add), 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Op(BinaryOp::Mul), 1),
                '/' => (Tok::Op(BinaryOp::Div), 1),
                '&' => (Tok::Op(BinaryOp::BitAnd), 1),
                '<' => (Tok::Op(BinaryOp::Lt), 1),
                '>' => (Tok::Op(BinaryOp::Gt), 1),
                '=' => (Tok::Op(BinaryOp::Eq), 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                _ => return Err(syntax(tl, tc, format!("unexpected character '{c}'"), vec![])),
            },
        };
        for _ in 0..width {
            bump!();
        }
        push(&mut out, tok);
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    expected: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        self.expected.clear();
        t
    }

    /// Consumes the next token if `want` accepts it; otherwise records `label`
    /// as an alternative for the error message.
    fn accept<T>(&mut self, label: &str, want: impl Fn(&Tok) -> Option<T>) -> Option<T> {
        match want(&self.peek().tok) {
            Some(v) => {
                self.advance();
                Some(v)
            }
            None => {
                self.expected.insert(label.to_string());
                None
            }
        }
    }

    fn error(&self) -> FilterError {
        let t = self.peek();
        syntax(t.line, t.column, format!("unexpected {}", t.tok.describe()), self.expected.iter().cloned().collect())
    }

    fn op(&mut self, ops: &[BinaryOp]) -> Option<BinaryOp> {
        let mut found = None;
        for op in ops {
            let label = match op {
                BinaryOp::And => "AND".to_string(),
                BinaryOp::Or => "OR".to_string(),
                _ => format!("'{}'", op.symbol()),
            };
            let hit = match (&self.peek().tok, op) {
                (Tok::And, BinaryOp::And) | (Tok::Or, BinaryOp::Or) | (Tok::Minus, BinaryOp::Sub) => true,
                (Tok::Op(o), _) => o == op,
                _ => false,
            };
            if hit {
                found = Some(*op);
                break;
            }
            self.expected.insert(label);
        }
        if found.is_some() {
            self.advance();
        }
        found
    }

    fn or(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.and()?;
        while let Some(op) = self.op(&[BinaryOp::Or]) {
            lhs = Expr::binary(op, lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.not()?;
        while let Some(op) = self.op(&[BinaryOp::And]) {
            lhs = Expr::binary(op, lhs, self.not()?);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, FilterError> {
        if self.accept("NOT", |t| (*t == Tok::Not).then_some(())).is_some() {
            return Ok(Expr::unary(UnaryOp::Not, self.not()?));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, FilterError> {
        use BinaryOp::*;
        let mut lhs = self.bitand()?;
        while let Some(op) = self.op(&[Lt, Gt, Le, Ge, Eq, Ne]) {
            lhs = Expr::binary(op, lhs, self.bitand()?);
        }
        Ok(lhs)
    }

    fn bitand(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.additive()?;
        while let Some(op) = self.op(&[BinaryOp::BitAnd]) {
            lhs = Expr::binary(op, lhs, self.additive()?);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.multiplicative()?;
        while let Some(op) = self.op(&[BinaryOp::Add, BinaryOp::Sub]) {
            lhs = Expr::binary(op, lhs, self.multiplicative()?);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, FilterError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.op(&[BinaryOp::Mul, BinaryOp::Div]) {
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FilterError> {
        if self.accept("'-'", |t| (*t == Tok::Minus).then_some(())).is_some() {
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FilterError> {
        let lit = self.accept("number", |t| match t {
            Tok::Int(v) => Some(Literal::Int(*v)),
            Tok::Float(v) => Some(Literal::Float(*v)),
            _ => None,
        });
        if let Some(l) = lit {
            return Ok(Expr::Literal(l));
        }
        if let Some(s) = self.accept("string", |t| match t {
            Tok::Str(s) => Some(s.clone()),
            _ => None,
        }) {
            return Ok(Expr::Literal(Literal::Str(s)));
        }
        let at = self.peek().clone();
        if let Some(name) = self.accept("identifier", |t| match t {
            Tok::Ident(s) => Some(s.clone()),
            _ => None,
        }) {
            if self.accept("'('", |t| (*t == Tok::LParen).then_some(())).is_none() {
                return Ok(Expr::Column(name));
            }
            if !FUNCTIONS.iter().any(|f| f.eq_ignore_ascii_case(&name)) {
                return Err(FilterError::UnknownFunction { name, line: at.line, column: at.column });
            }
            let mut args = Vec::new();
            if self.accept("')'", |t| (*t == Tok::RParen).then_some(())).is_none() {
                loop {
                    args.push(self.or()?);
                    if self.accept("','", |t| (*t == Tok::Comma).then_some(())).is_some() {
                        continue;
                    }
                    if self.accept("')'", |t| (*t == Tok::RParen).then_some(())).is_some() {
                        break;
                    }
                    return Err(self.error());
                }
            }
            return Ok(Expr::Call(name, args));
        }
        if self.accept("'('", |t| (*t == Tok::LParen).then_some(())).is_some() {
            let e = self.or()?;
            if self.accept("')'", |t| (*t == Tok::RParen).then_some(())).is_none() {
                return Err(self.error());
            }
            return Ok(e);
        }
        Err(self.error())
    }
}

pub fn parse(src: &str) -> Result<Expr, FilterError> {
    let mut p = Parser { toks: lex(src)?, pos: 0, expected: BTreeSet::new() };
    let e = p.or()?;
    if p.accept("end of input", |t| (*t == Tok::End).then_some(())).is_none() {
        return Err(p.error());
    }
    Ok(e)
}
