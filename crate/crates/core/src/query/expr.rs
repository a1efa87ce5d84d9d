use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::batch::{Column, ColumnBuilder, RecordBatch};
use super::types::{ScalarType, Schema, Value};
use super::QueryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    And,
    Or,
}

impl BinaryOp {
    fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::NotEq | BinaryOp::Lt | BinaryOp::LtEq | BinaryOp::Gt | BinaryOp::GtEq
        )
    }

    fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Plus | BinaryOp::Minus | BinaryOp::Multiply | BinaryOp::Divide | BinaryOp::Modulo
        )
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Plus => "+",
            BinaryOp::Minus => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
            BinaryOp::Modulo => "%",
            BinaryOp::Eq => "=",
            BinaryOp::NotEq => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::LtEq => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::GtEq => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }
}

/// Scalar expression over the columns of one row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Column(String),
    Literal(Value),
    Binary {
        left: Box<Expr>,
        op: BinaryOp,
        right: Box<Expr>,
    },
    Not(Box<Expr>),
    /// Inclusive on both ends.
    Between {
        expr: Box<Expr>,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    InList {
        expr: Box<Expr>,
        list: Vec<Value>,
    },
}

pub fn col(name: impl Into<String>) -> Expr {
    Expr::Column(name.into())
}

pub fn lit(value: impl Into<Value>) -> Expr {
    Expr::Literal(value.into())
}

macro_rules! binary_builders {
    ($($name:ident => $op:ident),* $(,)?) => {
        $(
            pub fn $name(self, other: Expr) -> Expr {
                Expr::Binary { left: Box::new(self), op: BinaryOp::$op, right: Box::new(other) }
            }
        )*
    };
}

// Builder names mirror the SQL operators; these build trees, not values.
#[allow(clippy::should_implement_trait)]
impl Expr {
    binary_builders! {
        add => Plus, sub => Minus, mul => Multiply, div => Divide, modulo => Modulo,
        eq => Eq, not_eq => NotEq, lt => Lt, lt_eq => LtEq, gt => Gt, gt_eq => GtEq,
        and => And, or => Or,
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Not(Box::new(self))
    }

    pub fn between(self, low: Expr, high: Expr) -> Expr {
        Expr::Between {
            expr: Box::new(self),
            low: Box::new(low),
            high: Box::new(high),
        }
    }

    pub fn in_list(self, list: Vec<Value>) -> Expr {
        Expr::InList {
            expr: Box::new(self),
            list,
        }
    }

    /// Columns referenced anywhere in the expression, in first-seen order.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(c) => {
                if !out.contains(&c.as_str()) {
                    out.push(c);
                }
            }
            Expr::Literal(_) => {}
            Expr::Binary { left, right, .. } => {
                left.collect_columns(out);
                right.collect_columns(out);
            }
            Expr::Not(e) => e.collect_columns(out),
            Expr::Between { expr, low, high } => {
                expr.collect_columns(out);
                low.collect_columns(out);
                high.collect_columns(out);
            }
            Expr::InList { expr, .. } => expr.collect_columns(out),
        }
    }

    /// Infer the output type against `schema`, type-checking the whole tree.
    pub fn data_type(&self, schema: &Schema) -> Result<ScalarType, QueryError> {
        match self {
            Expr::Column(c) => Ok(schema.field_with_name(c)?.data_type),
            Expr::Literal(v) => v
                .data_type()
                .ok_or_else(|| QueryError::TypeMismatch("untyped NULL literal".into())),
            Expr::Binary { left, op, right } => {
                let l = left.data_type(schema)?;
                let r = right.data_type(schema)?;
                binary_type(l, *op, r)
            }
            Expr::Not(e) => match e.data_type(schema)? {
                ScalarType::Boolean => Ok(ScalarType::Boolean),
                t => Err(QueryError::TypeMismatch(format!("NOT applied to {t}"))),
            },
            Expr::Between { expr, low, high } => {
                let t = expr.data_type(schema)?;
                binary_type(t, BinaryOp::GtEq, low.data_type(schema)?)?;
                binary_type(t, BinaryOp::LtEq, high.data_type(schema)?)?;
                Ok(ScalarType::Boolean)
            }
            Expr::InList { expr, list } => {
                let t = expr.data_type(schema)?;
                for v in list {
                    if let Some(vt) = v.data_type() {
                        binary_type(t, BinaryOp::Eq, vt)?;
                    }
                }
                Ok(ScalarType::Boolean)
            }
        }
    }

    /// Whether the expression may produce nulls under `schema`.
    pub fn nullable(&self, schema: &Schema) -> Result<bool, QueryError> {
        Ok(match self {
            Expr::Column(c) => schema.field_with_name(c)?.nullable,
            Expr::Literal(v) => v.is_null(),
            // Division and modulo by zero yield NULL.
            Expr::Binary { left, op, right } => {
                matches!(op, BinaryOp::Divide | BinaryOp::Modulo)
                    || left.nullable(schema)?
                    || right.nullable(schema)?
            }
            Expr::Not(e) => e.nullable(schema)?,
            Expr::Between { expr, low, high } => {
                expr.nullable(schema)? || low.nullable(schema)? || high.nullable(schema)?
            }
            Expr::InList { expr, .. } => expr.nullable(schema)?,
        })
    }

    /// Resolve column names to indices after type-checking.
    pub fn bind(&self, schema: &Schema) -> Result<BoundExpr, QueryError> {
        let ty = self.data_type(schema)?;
        Ok(BoundExpr {
            node: bind_node(self, schema)?,
            data_type: ty,
        })
    }

    /// Evaluate over every row of `batch`.
    pub fn evaluate(&self, batch: &RecordBatch) -> Result<Column, QueryError> {
        self.bind(batch.schema())?.evaluate(batch)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(c) => f.write_str(c),
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Binary { left, op, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::Not(e) => write!(f, "NOT {e}"),
            Expr::Between { expr, low, high } => write!(f, "{expr} BETWEEN {low} AND {high}"),
            Expr::InList { expr, list } => {
                write!(f, "{expr} IN (")?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn binary_type(l: ScalarType, op: BinaryOp, r: ScalarType) -> Result<ScalarType, QueryError> {
    use ScalarType::*;
    let mismatch = || QueryError::TypeMismatch(format!("{l} {} {r}", op.symbol()));
    if op.is_comparison() {
        let comparable = l == r || (l.is_numeric() && r.is_numeric());
        return if comparable { Ok(Boolean) } else { Err(mismatch()) };
    }
    if matches!(op, BinaryOp::And | BinaryOp::Or) {
        return if l == Boolean && r == Boolean {
            Ok(Boolean)
        } else {
            Err(mismatch())
        };
    }
    debug_assert!(op.is_arithmetic());
    match (l, r) {
        (Int64, Int64) => Ok(Int64),
        (Float64, Float64) | (Int64, Float64) | (Float64, Int64) => Ok(Float64),
        (Timestamp, Int64) if matches!(op, BinaryOp::Plus | BinaryOp::Minus) => Ok(Timestamp),
        (Timestamp, Timestamp) if op == BinaryOp::Minus => Ok(Int64),
        // Window arithmetic on event time: ts / size, ts % size.
        (Timestamp, Int64) if matches!(op, BinaryOp::Divide | BinaryOp::Modulo) => Ok(Int64),
        _ => Err(mismatch()),
    }
}

#[derive(Debug, Clone)]
enum Node {
    Column(usize),
    Literal(Value),
    Binary(Box<Node>, BinaryOp, Box<Node>),
    Not(Box<Node>),
    Between(Box<Node>, Box<Node>, Box<Node>),
    InList(Box<Node>, Vec<Value>),
}

fn bind_node(e: &Expr, schema: &Schema) -> Result<Node, QueryError> {
    Ok(match e {
        Expr::Column(c) => Node::Column(schema.index_of(c)?),
        Expr::Literal(v) => Node::Literal(v.clone()),
        Expr::Binary { left, op, right } => Node::Binary(
            Box::new(bind_node(left, schema)?),
            *op,
            Box::new(bind_node(right, schema)?),
        ),
        Expr::Not(e) => Node::Not(Box::new(bind_node(e, schema)?)),
        Expr::Between { expr, low, high } => Node::Between(
            Box::new(bind_node(expr, schema)?),
            Box::new(bind_node(low, schema)?),
            Box::new(bind_node(high, schema)?),
        ),
        Expr::InList { expr, list } => Node::InList(Box::new(bind_node(expr, schema)?), list.clone()),
    })
}

/// An expression with resolved column indices and a known output type.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    node: Node,
    data_type: ScalarType,
}

impl BoundExpr {
    pub fn data_type(&self) -> ScalarType {
        self.data_type
    }

    pub fn eval_row(&self, batch: &RecordBatch, row: usize) -> Value {
        eval(&self.node, batch, row)
    }

    pub fn evaluate(&self, batch: &RecordBatch) -> Result<Column, QueryError> {
        if let Node::Column(i) = self.node {
            return Ok(batch.column(i).clone());
        }
        let mut b = ColumnBuilder::new(self.data_type, batch.num_rows());
        for row in 0..batch.num_rows() {
            b.push(&eval(&self.node, batch, row))?;
        }
        Ok(b.finish())
    }
}

fn eval(node: &Node, batch: &RecordBatch, row: usize) -> Value {
    match node {
        Node::Column(i) => batch.column(*i).value(row),
        Node::Literal(v) => v.clone(),
        Node::Binary(l, op, r) => {
            let lv = eval(l, batch, row);
            match op {
                BinaryOp::And => {
                    if lv == Value::Boolean(false) {
                        return lv;
                    }
                    let rv = eval(r, batch, row);
                    match (lv, rv) {
                        (_, Value::Boolean(false)) => Value::Boolean(false),
                        (Value::Boolean(true), Value::Boolean(true)) => Value::Boolean(true),
                        _ => Value::Null,
                    }
                }
                BinaryOp::Or => {
                    if lv == Value::Boolean(true) {
                        return lv;
                    }
                    let rv = eval(r, batch, row);
                    match (lv, rv) {
                        (_, Value::Boolean(true)) => Value::Boolean(true),
                        (Value::Boolean(false), Value::Boolean(false)) => Value::Boolean(false),
                        _ => Value::Null,
                    }
                }
                _ => {
                    let rv = eval(r, batch, row);
                    apply_binary(&lv, *op, &rv)
                }
            }
        }
        Node::Not(e) => match eval(e, batch, row) {
            Value::Boolean(b) => Value::Boolean(!b),
            _ => Value::Null,
        },
        Node::Between(e, lo, hi) => {
            let v = eval(e, batch, row);
            let lo = eval(lo, batch, row);
            let hi = eval(hi, batch, row);
            match (v.sql_cmp(&lo), v.sql_cmp(&hi)) {
                (Some(a), Some(b)) => Value::Boolean(a != Ordering::Less && b != Ordering::Greater),
                _ => Value::Null,
            }
        }
        Node::InList(e, list) => {
            let v = eval(e, batch, row);
            if v.is_null() {
                return Value::Null;
            }
            Value::Boolean(list.iter().any(|x| v.sql_cmp(x) == Some(Ordering::Equal)))
        }
    }
}

fn apply_binary(l: &Value, op: BinaryOp, r: &Value) -> Value {
    if l.is_null() || r.is_null() {
        return Value::Null;
    }
    if op.is_comparison() {
        let Some(ord) = l.sql_cmp(r) else {
            return Value::Null;
        };
        let b = match op {
            BinaryOp::Eq => ord == Ordering::Equal,
            BinaryOp::NotEq => ord != Ordering::Equal,
            BinaryOp::Lt => ord == Ordering::Less,
            BinaryOp::LtEq => ord != Ordering::Greater,
            BinaryOp::Gt => ord == Ordering::Greater,
            BinaryOp::GtEq => ord != Ordering::Less,
            _ => unreachable!(),
        };
        return Value::Boolean(b);
    }
    match (l, r) {
        (Value::Int64(a), Value::Int64(b)) => int_arith(*a, op, *b).map_or(Value::Null, Value::Int64),
        (Value::Timestamp(a), Value::Int64(b)) => match op {
            BinaryOp::Plus | BinaryOp::Minus => {
                int_arith(*a, op, *b).map_or(Value::Null, Value::Timestamp)
            }
            _ => int_arith(*a, op, *b).map_or(Value::Null, Value::Int64),
        },
        (Value::Timestamp(a), Value::Timestamp(b)) => {
            int_arith(*a, op, *b).map_or(Value::Null, Value::Int64)
        }
        _ => match (l.as_f64(), r.as_f64()) {
            (Some(a), Some(b)) => {
                let v = match op {
                    BinaryOp::Plus => a + b,
                    BinaryOp::Minus => a - b,
                    BinaryOp::Multiply => a * b,
                    BinaryOp::Divide => a / b,
                    BinaryOp::Modulo => a % b,
                    _ => return Value::Null,
                };
                Value::Float64(v)
            }
            _ => Value::Null,
        },
    }
}

fn int_arith(a: i64, op: BinaryOp, b: i64) -> Option<i64> {
    match op {
        BinaryOp::Plus => Some(a.wrapping_add(b)),
        BinaryOp::Minus => Some(a.wrapping_sub(b)),
        BinaryOp::Multiply => Some(a.wrapping_mul(b)),
        BinaryOp::Divide => a.checked_div(b),
        BinaryOp::Modulo => a.checked_rem(b),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::query::types::Field;

    fn batch() -> RecordBatch {
        let schema = Arc::new(
            Schema::new(vec![
                Field::new("price", ScalarType::Int64, false),
                Field::new("ts", ScalarType::Timestamp, false),
                Field::new("name", ScalarType::Utf8, true),
            ])
            .unwrap(),
        );
        RecordBatch::from_rows(
            schema,
            &[
                vec![5.into(), Value::Timestamp(1000), "a".into()],
                vec![15.into(), Value::Timestamp(2000), Value::Null],
                vec![0.into(), Value::Timestamp(3000), "c".into()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn arithmetic_and_comparison() {
        let b = batch();
        let c = col("price").mul(lit(2)).evaluate(&b).unwrap();
        assert_eq!(c.value(1), Value::Int64(30));
        let c = col("price").gt(lit(10)).evaluate(&b).unwrap();
        assert_eq!(c.value(0), Value::Boolean(false));
        assert_eq!(c.value(1), Value::Boolean(true));
    }

    #[test]
    fn division_by_zero_is_null() {
        let b = batch();
        let c = lit(10).div(col("price")).evaluate(&b).unwrap();
        assert_eq!(c.value(2), Value::Null);
        assert_eq!(c.value(0), Value::Int64(2));
    }

    #[test]
    fn between_is_inclusive() {
        let b = batch();
        let e = col("ts").between(lit(Value::Timestamp(1000)), lit(Value::Timestamp(2000)));
        let c = e.evaluate(&b).unwrap();
        let got: Vec<Value> = (0..3).map(|i| c.value(i)).collect();
        assert_eq!(
            got,
            vec![Value::Boolean(true), Value::Boolean(true), Value::Boolean(false)]
        );
    }

    #[test]
    fn three_valued_logic() {
        let b = batch();
        let e = col("name").eq(lit("a")).or(col("price").gt(lit(10)));
        let c = e.evaluate(&b).unwrap();
        assert_eq!(c.value(1), Value::Boolean(true));
        let e = col("name").eq(lit("a")).and(lit(false));
        assert_eq!(e.evaluate(&b).unwrap().value(1), Value::Boolean(false));
    }

    #[test]
    fn type_errors() {
        let s = batch().schema().clone();
        assert!(matches!(
            col("name").add(lit(1)).data_type(&s),
            Err(QueryError::TypeMismatch(_))
        ));
        assert!(matches!(
            col("nope").data_type(&s),
            Err(QueryError::UnknownColumn(_))
        ));
        assert_eq!(
            col("ts").div(lit(10_000)).data_type(&s).unwrap(),
            ScalarType::Int64
        );
    }
}
