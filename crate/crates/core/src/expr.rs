//! Expression trees for scalar observables.
//!
//! Polynomials cover the vector fields themselves; the functions we probe
//! for convexity additionally need `abs`, `max`, `min` and `sqrt`. The wire
//! form is a nested array: a bare number is a constant, `["coord", i]` is
//! the i-th coordinate (0-based), and every other node is
//! `["op", child, ...]`.

use serde::de::Error as DeError;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Const(f64),
    Coord(usize),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    /// Integer power with a non-negative exponent.
    Pow(Box<Expression>, u32),
    Abs(Box<Expression>),
    Max(Box<Expression>, Box<Expression>),
    Min(Box<Expression>, Box<Expression>),
    Sqrt(Box<Expression>),
}

impl Expression {
    pub fn coord(i: usize) -> Self {
        Expression::Coord(i)
    }

    pub fn constant(c: f64) -> Self {
        Expression::Const(c)
    }

    pub fn add(self, rhs: Self) -> Self {
        Expression::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Self) -> Self {
        Expression::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Self) -> Self {
        Expression::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn pow(self, k: u32) -> Self {
        Expression::Pow(Box::new(self), k)
    }

    pub fn abs(self) -> Self {
        Expression::Abs(Box::new(self))
    }

    pub fn max(self, rhs: Self) -> Self {
        Expression::Max(Box::new(self), Box::new(rhs))
    }

    pub fn min(self, rhs: Self) -> Self {
        Expression::Min(Box::new(self), Box::new(rhs))
    }

    pub fn sqrt(self) -> Self {
        Expression::Sqrt(Box::new(self))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expression::Const(c) => *c,
            Expression::Coord(i) => {
                if *i >= x.len() {
                    return Err(Error::IndexOutOfRange {
                        index: *i + 1,
                        len: x.len(),
                    });
                }
                x[*i]
            }
            Expression::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expression::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expression::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expression::Pow(a, k) => a.eval(x)?.powi(*k as i32),
            Expression::Abs(a) => a.eval(x)?.abs(),
            Expression::Max(a, b) => a.eval(x)?.max(b.eval(x)?),
            Expression::Min(a, b) => a.eval(x)?.min(b.eval(x)?),
            Expression::Sqrt(a) => {
                let v = a.eval(x)?;
                if v < 0.0 {
                    return Err(Error::NegativeSqrt(v));
                }
                v.sqrt()
            }
        })
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expression::Const(_) => None,
            Expression::Coord(i) => Some(*i),
            Expression::Add(a, b)
            | Expression::Sub(a, b)
            | Expression::Mul(a, b)
            | Expression::Max(a, b)
            | Expression::Min(a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
            Expression::Pow(a, _) | Expression::Abs(a) | Expression::Sqrt(a) => a.max_coord(),
        }
    }

    /// True if the tree contains a kink or a branch point (`abs`, `max`,
    /// `min`, `sqrt`); difference quotients of such functions get averaged
    /// over several scales downstream.
    pub fn has_nonsmooth_ops(&self) -> bool {
        match self {
            Expression::Const(_) | Expression::Coord(_) => false,
            Expression::Add(a, b) | Expression::Sub(a, b) | Expression::Mul(a, b) => {
                a.has_nonsmooth_ops() || b.has_nonsmooth_ops()
            }
            Expression::Pow(a, _) => a.has_nonsmooth_ops(),
            Expression::Abs(_)
            | Expression::Max(_, _)
            | Expression::Min(_, _)
            | Expression::Sqrt(_) => true,
        }
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        fn pair<S: Serializer>(
            serializer: S,
            op: &str,
            a: &Expression,
            b: &Expression,
        ) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = serializer.serialize_seq(Some(3))?;
            seq.serialize_element(op)?;
            seq.serialize_element(a)?;
            seq.serialize_element(b)?;
            seq.end()
        }
        fn single<S: Serializer>(
            serializer: S,
            op: &str,
            a: &Expression,
        ) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = serializer.serialize_seq(Some(2))?;
            seq.serialize_element(op)?;
            seq.serialize_element(a)?;
            seq.end()
        }
        match self {
            Expression::Const(c) => serializer.serialize_f64(*c),
            Expression::Coord(i) => {
                let mut seq = serializer.serialize_seq(Some(2))?;
                seq.serialize_element("coord")?;
                seq.serialize_element(i)?;
                seq.end()
            }
            Expression::Add(a, b) => pair(serializer, "add", a, b),
            Expression::Sub(a, b) => pair(serializer, "sub", a, b),
            Expression::Mul(a, b) => pair(serializer, "mul", a, b),
            Expression::Pow(a, k) => {
                let mut seq = serializer.serialize_seq(Some(3))?;
                seq.serialize_element("pow")?;
                seq.serialize_element(a)?;
                seq.serialize_element(k)?;
                seq.end()
            }
            Expression::Abs(a) => single(serializer, "abs", a),
            Expression::Max(a, b) => pair(serializer, "max", a, b),
            Expression::Min(a, b) => pair(serializer, "min", a, b),
            Expression::Sqrt(a) => single(serializer, "sqrt", a),
        }
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        from_value(&value).map_err(D::Error::custom)
    }
}

fn from_value(v: &serde_json::Value) -> std::result::Result<Expression, String> {
    use serde_json::Value;
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(Expression::Const)
            .ok_or_else(|| format!("non-finite constant {n}")),
        Value::Array(items) => {
            let op = items
                .first()
                .and_then(Value::as_str)
                .ok_or_else(|| "expression node must start with an operator string".to_string())?;
            let arity = items.len() - 1;
            let expect = |want: usize| -> std::result::Result<(), String> {
                if arity == want {
                    Ok(())
                } else {
                    Err(format!("`{op}` takes {want} argument(s), got {arity}"))
                }
            };
            let child = |k: usize| from_value(&items[k]);
            match op {
                "coord" => {
                    expect(1)?;
                    let i = items[1]
                        .as_u64()
                        .ok_or_else(|| "`coord` index must be a non-negative integer".to_string())?;
                    Ok(Expression::Coord(i as usize))
                }
                "add" => {
                    expect(2)?;
                    Ok(child(1)?.add(child(2)?))
                }
                "sub" => {
                    expect(2)?;
                    Ok(child(1)?.sub(child(2)?))
                }
                "mul" => {
                    expect(2)?;
                    Ok(child(1)?.mul(child(2)?))
                }
                "pow" => {
                    expect(2)?;
                    let k = items[2]
                        .as_u64()
                        .ok_or_else(|| "`pow` exponent must be a non-negative integer".to_string())?;
                    Ok(child(1)?.pow(k as u32))
                }
                "abs" => {
                    expect(1)?;
                    Ok(child(1)?.abs())
                }
                "max" => {
                    expect(2)?;
                    Ok(child(1)?.max(child(2)?))
                }
                "min" => {
                    expect(2)?;
                    Ok(child(1)?.min(child(2)?))
                }
                "sqrt" => {
                    expect(1)?;
                    Ok(child(1)?.sqrt())
                }
                other => Err(format!("unknown expression operator `{other}`")),
            }
        }
        other => Err(format!("expected number or array, got {other}")),
    }
}
