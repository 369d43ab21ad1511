use std::ops::Range;

use super::ast::{BinaryOp, Expr, Literal, UnaryOp};
use super::{f_photo_flags, FilterError};
use crate::store::{ColumnData, ColumnType, EnumKind, Table, TableSchema, Timestamp, Value};

/// Static type of a checked subexpression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Int,
    Float,
    Bool,
    Text,
    Enum(EnumKind),
    Timestamp,
}

impl Type {
    fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Float)
    }

    fn name(self) -> &'static str {
        match self {
            Type::Int => "integer",
            Type::Float => "float",
            Type::Bool => "boolean",
            Type::Text => "text",
            Type::Enum(EnumKind::ObjType) => "objType enum",
            Type::Enum(EnumKind::SpecClass) => "specClass enum",
            Type::Timestamp => "timestamp",
        }
    }
}

impl From<ColumnType> for Type {
    fn from(c: ColumnType) -> Self {
        match c {
            ColumnType::Int => Type::Int,
            ColumnType::Float => Type::Float,
            ColumnType::Bool => Type::Bool,
            ColumnType::Text => Type::Text,
            ColumnType::Enum(k) => Type::Enum(k),
            ColumnType::Timestamp => Type::Timestamp,
        }
    }
}

/// Runtime scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Scalar {
    pub fn truthy(&self) -> bool {
        match self {
            Scalar::Bool(b) => *b,
            Scalar::Int(v) => *v != 0,
            Scalar::Float(v) => *v != 0.0,
            Scalar::Text(s) => !s.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    fn apply<T: PartialOrd + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Gt => a > b,
            Cmp::Le => a <= b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }
}

/// Typed, column-resolved tree. Integer-like values (ints, enum codes,
/// timestamps) share the `I` representation.
#[derive(Debug, Clone)]
enum Node {
    ConstI(i64),
    ConstF(f64),
    ConstS(String),
    ColI(usize),
    ColF(usize),
    ColB(usize),
    ColS(usize),
    ColE(usize),
    ColT(usize),
    ToFloat(Box<Node>),
    NegI(Box<Node>),
    NegF(Box<Node>),
    Not(Box<Node>),
    ArithI(Arith, Box<Node>, Box<Node>),
    ArithF(Arith, Box<Node>, Box<Node>),
    BitAnd(Box<Node>, Box<Node>),
    CmpI(Cmp, Box<Node>, Box<Node>),
    CmpF(Cmp, Box<Node>, Box<Node>),
    CmpB(Cmp, Box<Node>, Box<Node>),
    CmpS(Cmp, Box<Node>, Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    NonZero(Box<Node>),
}

/// A predicate or expression bound to one table schema.
#[derive(Debug, Clone)]
pub struct Checked {
    expr: Expr,
    root: Node,
    ty: Type,
    schema: &'static TableSchema,
    columns: Vec<usize>,
}

fn type_err(e: &Expr, message: impl Into<String>) -> FilterError {
    FilterError::Type { expr: e.to_string(), message: message.into() }
}

struct Checker {
    schema: &'static TableSchema,
    used: Vec<usize>,
}

impl Checker {
    fn to_float(n: Node, ty: Type) -> Node {
        match (ty, n) {
            (Type::Int, Node::ConstI(v)) => Node::ConstF(v as f64),
            (Type::Int, n) => Node::ToFloat(Box::new(n)),
            (_, n) => n,
        }
    }

    fn check(&mut self, e: &Expr) -> Result<(Node, Type), FilterError> {
        match e {
            Expr::Literal(Literal::Int(v)) => Ok((Node::ConstI(*v), Type::Int)),
            Expr::Literal(Literal::Float(v)) => Ok((Node::ConstF(*v), Type::Float)),
            Expr::Literal(Literal::Str(s)) => Ok((Node::ConstS(s.clone()), Type::Text)),
            Expr::Column(name) => {
                let idx = self.schema.resolve_column(name)
                    .ok_or_else(|| FilterError::UnknownColumn { name: name.clone(), table: self.schema.table.to_string() })?;
                if !self.used.contains(&idx) {
                    self.used.push(idx);
                }
                let ty = self.schema.columns[idx].ty.into();
                let node = match ty {
                    Type::Int => Node::ColI(idx),
                    Type::Float => Node::ColF(idx),
                    Type::Bool => Node::ColB(idx),
                    Type::Text => Node::ColS(idx),
                    Type::Enum(_) => Node::ColE(idx),
                    Type::Timestamp => Node::ColT(idx),
                };
                Ok((node, ty))
            }
            Expr::Call(name, args) => {
                // FUNCTIONS currently holds only fPhotoFlags.
                match args.as_slice() {
                    [Expr::Literal(Literal::Str(flag))] => Ok((Node::ConstI(f_photo_flags(flag)?), Type::Int)),
                    _ => Err(type_err(e, format!("{name} takes one quoted flag name"))),
                }
            }
            Expr::Unary(UnaryOp::Neg, inner) => {
                let (n, ty) = self.check(inner)?;
                match ty {
                    Type::Int => Ok((Node::NegI(Box::new(n)), Type::Int)),
                    Type::Float => Ok((Node::NegF(Box::new(n)), Type::Float)),
                    t => Err(type_err(e, format!("cannot negate {}", t.name()))),
                }
            }
            Expr::Unary(UnaryOp::Not, inner) => {
                let (n, ty) = self.check(inner)?;
                if ty != Type::Bool {
                    return Err(type_err(e, format!("NOT needs a boolean operand, found {}", ty.name())));
                }
                Ok((Node::Not(Box::new(n)), Type::Bool))
            }
            Expr::Binary(op, l, r) => self.binary(e, *op, l, r),
        }
    }

    fn binary(&mut self, e: &Expr, op: BinaryOp, l: &Expr, r: &Expr) -> Result<(Node, Type), FilterError> {
        let (ln, lt) = self.check(l)?;
        let (rn, rt) = self.check(r)?;
        let bx = Box::new;
        if op.is_arithmetic() {
            if !lt.is_numeric() || !rt.is_numeric() {
                return Err(type_err(e, format!("'{}' needs numeric operands, found {} and {}", op.symbol(), lt.name(), rt.name())));
            }
            let a = match op {
                BinaryOp::Add => Arith::Add,
                BinaryOp::Sub => Arith::Sub,
                BinaryOp::Mul => Arith::Mul,
                _ => Arith::Div,
            };
            if lt == Type::Int && rt == Type::Int && a != Arith::Div {
                return Ok((Node::ArithI(a, bx(ln), bx(rn)), Type::Int));
            }
            return Ok((Node::ArithF(a, bx(Self::to_float(ln, lt)), bx(Self::to_float(rn, rt))), Type::Float));
        }
        match op {
            BinaryOp::BitAnd => {
                if lt != Type::Int || rt != Type::Int {
                    return Err(type_err(e, format!("'&' needs integer operands, found {} and {}", lt.name(), rt.name())));
                }
                Ok((Node::BitAnd(bx(ln), bx(rn)), Type::Int))
            }
            BinaryOp::And | BinaryOp::Or => {
                if lt != Type::Bool || rt != Type::Bool {
                    return Err(type_err(e, format!("{} needs boolean operands, found {} and {}", op.symbol(), lt.name(), rt.name())));
                }
                let n = if op == BinaryOp::And { Node::And(bx(ln), bx(rn)) } else { Node::Or(bx(ln), bx(rn)) };
                Ok((n, Type::Bool))
            }
            _ => self.comparison(e, op, (ln, lt), (rn, rt)),
        }
    }

    fn comparison(&mut self, e: &Expr, op: BinaryOp, (ln, lt): (Node, Type), (rn, rt): (Node, Type)) -> Result<(Node, Type), FilterError> {
        let c = match op {
            BinaryOp::Lt => Cmp::Lt,
            BinaryOp::Gt => Cmp::Gt,
            BinaryOp::Le => Cmp::Le,
            BinaryOp::Ge => Cmp::Ge,
            BinaryOp::Eq => Cmp::Eq,
            _ => Cmp::Ne,
        };
        let bx = Box::new;
        let mismatch = || type_err(e, format!("cannot compare {} with {}", lt.name(), rt.name()));
        let n = match (lt, rt) {
            (Type::Int, Type::Int) => Node::CmpI(c, bx(ln), bx(rn)),
            (a, b) if a.is_numeric() && b.is_numeric() => Node::CmpF(c, bx(Self::to_float(ln, a)), bx(Self::to_float(rn, b))),
            (Type::Text, Type::Text) => Node::CmpS(c, bx(ln), bx(rn)),
            (Type::Bool, Type::Bool) if matches!(c, Cmp::Eq | Cmp::Ne) => Node::CmpB(c, bx(ln), bx(rn)),
            (Type::Enum(a), Type::Enum(b)) if a == b && matches!(c, Cmp::Eq | Cmp::Ne) => Node::CmpI(c, bx(ln), bx(rn)),
            (Type::Enum(k), Type::Text) | (Type::Text, Type::Enum(k)) => {
                if !matches!(c, Cmp::Eq | Cmp::Ne) {
                    return Err(type_err(e, "enum values only support = and !="));
                }
                let enum_on_left = matches!(lt, Type::Enum(_));
                let (col, lit) = if enum_on_left { (ln, rn) } else { (rn, ln) };
                let Node::ConstS(name) = lit else {
                    return Err(type_err(e, "enum columns compare only with quoted names"));
                };
                let code = k.code(&name).ok_or_else(|| {
                    type_err(e, format!("'{name}' is not one of: {}", k.names().join(", ")))
                })?;
                Node::CmpI(c, bx(col), bx(Node::ConstI(code as i64)))
            }
            (Type::Timestamp, Type::Timestamp) => Node::CmpI(c, bx(ln), bx(rn)),
            (Type::Timestamp, Type::Text) | (Type::Text, Type::Timestamp) => {
                let ts_left = lt == Type::Timestamp;
                let (col, lit) = if ts_left { (ln, rn) } else { (rn, ln) };
                let Node::ConstS(text) = lit else { return Err(mismatch()) };
                let ts = Timestamp::parse_iso(&text)
                    .ok_or_else(|| type_err(e, format!("'{text}' is not an RFC 3339 timestamp")))?;
                let lit = bx(Node::ConstI(ts.micros()));
                if ts_left { Node::CmpI(c, bx(col), lit) } else { Node::CmpI(c, lit, bx(col)) }
            }
            _ => return Err(mismatch()),
        };
        Ok((n, Type::Bool))
    }
}

impl Checked {
    /// Binds `expr` to `schema`. Predicates must be boolean, except that a
    /// bare top-level `&` is read as "!= 0".
    pub fn predicate(expr: &Expr, schema: &'static TableSchema) -> Result<Checked, FilterError> {
        let c = Self::expression(expr, schema)?;
        match (c.ty, expr) {
            (Type::Bool, _) => Ok(c),
            (Type::Int, Expr::Binary(BinaryOp::BitAnd, ..)) => {
                Ok(Checked { root: Node::NonZero(Box::new(c.root)), ty: Type::Bool, ..c })
            }
            (t, _) => Err(type_err(expr, format!("predicate must be boolean, found {}", t.name()))),
        }
    }

    /// Binds `expr` to `schema` without requiring a boolean result.
    pub fn expression(expr: &Expr, schema: &'static TableSchema) -> Result<Checked, FilterError> {
        let mut ck = Checker { schema, used: Vec::new() };
        let (root, ty) = ck.check(expr)?;
        Ok(Checked { expr: expr.clone(), root, ty, schema, columns: ck.used })
    }

    pub fn ty(&self) -> Type {
        self.ty
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn schema(&self) -> &'static TableSchema {
        self.schema
    }

    /// Schema indices of the columns the expression reads.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Row-at-a-time evaluation over a full row of values in schema order.
    pub fn eval_values(&self, row: &[Value]) -> Scalar {
        eval_row(&self.root, &|i| row[i].clone())
    }

    /// Row-at-a-time evaluation against a stored row.
    pub fn eval_row(&self, t: &Table, row: usize) -> Scalar {
        debug_assert_eq!(t.name(), self.schema.table);
        eval_row(&self.root, &|i| t.get(row, i))
    }

    pub fn matches_row(&self, t: &Table, row: usize) -> bool {
        self.eval_row(t, row).truthy()
    }

    /// Predicate over the contiguous rows `range`, evaluated a column block at a time.
    pub fn eval_range(&self, t: &Table, range: Range<usize>) -> Vec<bool> {
        let mut out = Vec::with_capacity(range.len());
        let mut start = range.start;
        while start < range.end {
            let end = (start + BLOCK).min(range.end);
            out.extend(self.block(t, &Sel::Range(start, end)));
            start = end;
        }
        out
    }

    /// Predicate over the listed rows.
    pub fn eval_rows(&self, t: &Table, rows: &[usize]) -> Vec<bool> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(BLOCK) {
            out.extend(self.block(t, &Sel::Rows(chunk)));
        }
        out
    }

    /// Number of rows in `range` satisfying the predicate.
    pub fn count_range(&self, t: &Table, range: Range<usize>) -> usize {
        let mut n = 0;
        let mut start = range.start;
        while start < range.end {
            let end = (start + BLOCK).min(range.end);
            n += self.block(t, &Sel::Range(start, end)).iter().filter(|b| **b).count();
            start = end;
        }
        n
    }

    fn block(&self, t: &Table, sel: &Sel) -> Vec<bool> {
        debug_assert_eq!(t.name(), self.schema.table);
        match eval_block(&self.root, t, sel) {
            Vector::B(v) => v,
            other => other.truthy(),
        }
    }
}

const BLOCK: usize = 4096;

fn arith_i(a: Arith, x: i64, y: i64) -> i64 {
    match a {
        Arith::Add => x.wrapping_add(y),
        Arith::Sub => x.wrapping_sub(y),
        Arith::Mul => x.wrapping_mul(y),
        Arith::Div => unreachable!("integer division is promoted to float"),
    }
}

fn arith_f(a: Arith, x: f64, y: f64) -> f64 {
    match a {
        Arith::Add => x + y,
        Arith::Sub => x - y,
        Arith::Mul => x * y,
        Arith::Div => x / y,
    }
}

fn eval_row(n: &Node, get: &dyn Fn(usize) -> Value) -> Scalar {
    let i = |n: &Node| match eval_row(n, get) {
        Scalar::Int(v) => v,
        s => unreachable!("expected integer, got {s:?}"),
    };
    let f = |n: &Node| match eval_row(n, get) {
        Scalar::Float(v) => v,
        s => unreachable!("expected float, got {s:?}"),
    };
    let b = |n: &Node| eval_row(n, get).truthy();
    match n {
        Node::ConstI(v) => Scalar::Int(*v),
        Node::ConstF(v) => Scalar::Float(*v),
        Node::ConstS(s) => Scalar::Text(s.clone()),
        Node::ColI(c) | Node::ColE(c) | Node::ColT(c) => Scalar::Int(match get(*c) {
            Value::Int(v) => v,
            Value::Enum(_, code) => code as i64,
            Value::Timestamp(ts) => ts.micros(),
            v => unreachable!("column {c} holds {v:?}"),
        }),
        Node::ColF(c) => Scalar::Float(get(*c).as_f64().expect("float column")),
        Node::ColB(c) => Scalar::Bool(matches!(get(*c), Value::Bool(true))),
        Node::ColS(c) => match get(*c) {
            Value::Text(s) => Scalar::Text(s),
            v => unreachable!("column {c} holds {v:?}"),
        },
        Node::ToFloat(x) => Scalar::Float(i(x) as f64),
        Node::NegI(x) => Scalar::Int(i(x).wrapping_neg()),
        Node::NegF(x) => Scalar::Float(-f(x)),
        Node::Not(x) => Scalar::Bool(!b(x)),
        Node::ArithI(a, x, y) => Scalar::Int(arith_i(*a, i(x), i(y))),
        Node::ArithF(a, x, y) => Scalar::Float(arith_f(*a, f(x), f(y))),
        Node::BitAnd(x, y) => Scalar::Int(i(x) & i(y)),
        Node::CmpI(c, x, y) => Scalar::Bool(c.apply(&i(x), &i(y))),
        Node::CmpF(c, x, y) => Scalar::Bool(c.apply(&f(x), &f(y))),
        Node::CmpB(c, x, y) => Scalar::Bool(c.apply(&b(x), &b(y))),
        Node::CmpS(c, x, y) => match (eval_row(x, get), eval_row(y, get)) {
            (Scalar::Text(p), Scalar::Text(q)) => Scalar::Bool(c.apply(p.as_str(), q.as_str())),
            s => unreachable!("expected text operands, got {s:?}"),
        },
        Node::And(x, y) => Scalar::Bool(b(x) && b(y)),
        Node::Or(x, y) => Scalar::Bool(b(x) || b(y)),
        Node::NonZero(x) => Scalar::Bool(i(x) != 0),
    }
}

enum Sel<'a> {
    Range(usize, usize),
    Rows(&'a [usize]),
}

impl Sel<'_> {
    fn len(&self) -> usize {
        match self {
            Sel::Range(a, b) => b - a,
            Sel::Rows(r) => r.len(),
        }
    }

    fn gather<T: Clone>(&self, v: &[T]) -> Vec<T> {
        match self {
            Sel::Range(a, b) => v[*a..*b].to_vec(),
            Sel::Rows(r) => r.iter().map(|i| v[*i].clone()).collect(),
        }
    }
}

enum Vector<'t> {
    I(Vec<i64>),
    F(Vec<f64>),
    B(Vec<bool>),
    S(Vec<&'t str>),
}

impl Vector<'_> {
    fn truthy(self) -> Vec<bool> {
        match self {
            Vector::B(v) => v,
            Vector::I(v) => v.into_iter().map(|x| x != 0).collect(),
            Vector::F(v) => v.into_iter().map(|x| x != 0.0).collect(),
            Vector::S(v) => v.into_iter().map(|x| !x.is_empty()).collect(),
        }
    }

    fn ints(self) -> Vec<i64> {
        match self {
            Vector::I(v) => v,
            _ => unreachable!("expected integer block"),
        }
    }

    fn floats(self) -> Vec<f64> {
        match self {
            Vector::F(v) => v,
            _ => unreachable!("expected float block"),
        }
    }
}

fn zip<A: Copy, B: Copy, R>(x: Vec<A>, y: Vec<B>, f: impl Fn(A, B) -> R) -> Vec<R> {
    x.into_iter().zip(y).map(|(a, b)| f(a, b)).collect()
}

fn eval_block<'t>(n: &Node, t: &'t Table, sel: &Sel) -> Vector<'t> {
    let len = sel.len();
    let i = |n: &Node| eval_block(n, t, sel).ints();
    let f = |n: &Node| eval_block(n, t, sel).floats();
    let b = |n: &Node| eval_block(n, t, sel).truthy();
    match n {
        Node::ConstI(v) => Vector::I(vec![*v; len]),
        Node::ConstF(v) => Vector::F(vec![*v; len]),
        Node::ConstS(_) => unreachable!("string constants are only compared"),
        Node::ColI(c) | Node::ColT(c) => match t.column(*c) {
            ColumnData::Int(v) | ColumnData::Timestamp(v) => Vector::I(sel.gather(v)),
            _ => unreachable!("column {c} is not integer"),
        },
        Node::ColE(c) => match t.column(*c) {
            ColumnData::Enum(_, v) => Vector::I(sel.gather(v).into_iter().map(i64::from).collect()),
            _ => unreachable!("column {c} is not an enum"),
        },
        Node::ColF(c) => match t.column(*c) {
            ColumnData::Float(v) => Vector::F(sel.gather(v)),
            _ => unreachable!("column {c} is not float"),
        },
        Node::ColB(c) => match t.column(*c) {
            ColumnData::Bool(v) => Vector::B(sel.gather(v)),
            _ => unreachable!("column {c} is not boolean"),
        },
        Node::ColS(c) => match t.column(*c) {
            ColumnData::Text(v) => Vector::S(match sel {
                Sel::Range(a, z) => v[*a..*z].iter().map(String::as_str).collect(),
                Sel::Rows(r) => r.iter().map(|i| v[*i].as_str()).collect(),
            }),
            _ => unreachable!("column {c} is not text"),
        },
        Node::ToFloat(x) => Vector::F(i(x).into_iter().map(|v| v as f64).collect()),
        Node::NegI(x) => Vector::I(i(x).into_iter().map(i64::wrapping_neg).collect()),
        Node::NegF(x) => Vector::F(f(x).into_iter().map(|v| -v).collect()),
        Node::Not(x) => Vector::B(b(x).into_iter().map(|v| !v).collect()),
        Node::ArithI(a, x, y) => Vector::I(zip(i(x), i(y), |p, q| arith_i(*a, p, q))),
        Node::ArithF(a, x, y) => Vector::F(binary_f(*a, x, y, t, sel)),
        Node::BitAnd(x, y) => Vector::I(zip(i(x), i(y), |p, q| p & q)),
        Node::CmpI(c, x, y) => Vector::B(match &**y {
            Node::ConstI(k) => i(x).into_iter().map(|p| c.apply(&p, k)).collect(),
            _ => zip(i(x), i(y), |p, q| c.apply(&p, &q)),
        }),
        Node::CmpF(c, x, y) => Vector::B(match &**y {
            Node::ConstF(k) => f(x).into_iter().map(|p| c.apply(&p, k)).collect(),
            _ => zip(f(x), f(y), |p, q| c.apply(&p, &q)),
        }),
        Node::CmpB(c, x, y) => Vector::B(zip(b(x), b(y), |p, q| c.apply(&p, &q))),
        Node::CmpS(c, x, y) => Vector::B(compare_text(*c, x, y, t, sel)),
        Node::And(x, y) => Vector::B(zip(b(x), b(y), |p, q| p && q)),
        Node::Or(x, y) => Vector::B(zip(b(x), b(y), |p, q| p || q)),
        Node::NonZero(x) => Vector::B(i(x).into_iter().map(|v| v != 0).collect()),
    }
}

fn binary_f(a: Arith, x: &Node, y: &Node, t: &Table, sel: &Sel) -> Vec<f64> {
    let mut lhs = eval_block(x, t, sel).floats();
    match y {
        Node::ConstF(k) => lhs.iter_mut().for_each(|p| *p = arith_f(a, *p, *k)),
        _ => {
            let rhs = eval_block(y, t, sel).floats();
            lhs.iter_mut().zip(rhs).for_each(|(p, q)| *p = arith_f(a, *p, q));
        }
    }
    lhs
}

fn text_side<'t>(n: &Node, t: &'t Table, sel: &Sel) -> Result<Vec<&'t str>, String> {
    match n {
        Node::ConstS(s) => Err(s.clone()),
        _ => match eval_block(n, t, sel) {
            Vector::S(v) => Ok(v),
            _ => unreachable!("expected text block"),
        },
    }
}

fn compare_text(c: Cmp, x: &Node, y: &Node, t: &Table, sel: &Sel) -> Vec<bool> {
    let len = sel.len();
    match (text_side(x, t, sel), text_side(y, t, sel)) {
        (Ok(p), Ok(q)) => p.iter().zip(&q).map(|(a, b)| c.apply(*a, *b)).collect(),
        (Ok(p), Err(k)) => p.iter().map(|a| c.apply(*a, k.as_str())).collect(),
        (Err(k), Ok(q)) => q.iter().map(|b| c.apply(k.as_str(), *b)).collect(),
        (Err(k), Err(m)) => vec![c.apply(k.as_str(), m.as_str()); len],
    }
}
