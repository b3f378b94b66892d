//! Flat evaluation program for a batch of expressions.
//!
//! Compilation deduplicates structurally identical subtrees, so a form whose
//! coefficients share work (as pullbacks and derivatives do) evaluates each
//! distinct subexpression once per point.

use std::collections::HashMap;

use num_rational::Rational64;
use thiserror::Error;

use super::{Expr, Node, SymError};
use crate::forms::CoordinateDomain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("power {base}^({exponent}) is undefined over the reals")]
    PowerDomain { base: f64, exponent: String },
    #[error("non-finite value produced")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Add(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Powi(u32, i32),
    Sqrt(u32),
    Powr(u32, i64, i64),
    Sin(u32),
    Cos(u32),
    Exp(u32),
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Const(u64),
    Var(usize),
    Add(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Pow(u32, i64, i64),
    Sin(u32),
    Cos(u32),
    Exp(u32),
}

/// Compiled batch of expressions over an ordered variable list.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    nvars: usize,
}

pub(crate) fn pow_value(base: f64, exponent: Rational64) -> Result<f64, EvalError> {
    let (p, q) = (*exponent.numer(), *exponent.denom());
    let err = || EvalError::PowerDomain {
        base,
        exponent: format!("{p}/{q}"),
    };
    if q == 1 {
        if base == 0.0 && p < 0 {
            return Err(err());
        }
        return Ok(base.powi(p as i32));
    }
    if base < 0.0 || (base == 0.0 && p < 0) {
        return Err(err());
    }
    if p == 1 && q == 2 {
        return Ok(base.sqrt());
    }
    Ok(base.powf(p as f64 / q as f64))
}

struct Builder<'a> {
    vars: &'a HashMap<&'a str, usize>,
    ops: Vec<Op>,
    by_ptr: HashMap<usize, u32>,
    by_key: HashMap<Key, u32>,
}

impl Builder<'_> {
    fn push(&mut self, key: Key, op: Op) -> u32 {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.by_key.insert(key, slot);
        slot
    }

    fn emit(&mut self, e: &Expr) -> Result<u32, SymError> {
        if let Some(&slot) = self.by_ptr.get(&e.ptr()) {
            return Ok(slot);
        }
        let slot = match e.node() {
            Node::Const(c) => self.push(Key::Const(c.to_bits()), Op::Const(*c)),
            Node::Var(v) => {
                let idx = *self
                    .vars
                    .get(&**v)
                    .ok_or_else(|| SymError::UnknownCoordinate(v.to_string()))?;
                self.push(Key::Var(idx), Op::Var(idx))
            }
            Node::Add(a, b) => {
                let (a, b) = (self.emit(a)?, self.emit(b)?);
                let (lo, hi) = (a.min(b), a.max(b));
                self.push(Key::Add(lo, hi), Op::Add(lo, hi))
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.emit(a)?, self.emit(b)?);
                let (lo, hi) = (a.min(b), a.max(b));
                self.push(Key::Mul(lo, hi), Op::Mul(lo, hi))
            }
            Node::Neg(a) => {
                let a = self.emit(a)?;
                self.push(Key::Neg(a), Op::Neg(a))
            }
            Node::Pow(a, r) => {
                let a = self.emit(a)?;
                let (p, q) = (*r.numer(), *r.denom());
                let op = if q == 1 && p.abs() < i32::MAX as i64 {
                    Op::Powi(a, p as i32)
                } else if p == 1 && q == 2 {
                    Op::Sqrt(a)
                } else {
                    Op::Powr(a, p, q)
                };
                self.push(Key::Pow(a, p, q), op)
            }
            Node::Sin(a) => {
                let a = self.emit(a)?;
                self.push(Key::Sin(a), Op::Sin(a))
            }
            Node::Cos(a) => {
                let a = self.emit(a)?;
                self.push(Key::Cos(a), Op::Cos(a))
            }
            Node::Exp(a) => {
                let a = self.emit(a)?;
                self.push(Key::Exp(a), Op::Exp(a))
            }
        };
        self.by_ptr.insert(e.ptr(), slot);
        Ok(slot)
    }
}

impl Tape {
    /// Compiles `exprs` against the ordered variable list `vars`.
    pub fn compile(exprs: &[Expr], vars: &[&str]) -> Result<Tape, SymError> {
        let map: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut b = Builder {
            vars: &map,
            ops: Vec::new(),
            by_ptr: HashMap::new(),
            by_key: HashMap::new(),
        };
        let outputs = exprs
            .iter()
            .map(|e| b.emit(e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tape {
            ops: b.ops,
            outputs,
            nvars: vars.len(),
        })
    }

    /// Compiles against the coordinates of `domain`.
    pub fn compile_in(exprs: &[Expr], domain: &CoordinateDomain) -> Result<Tape, SymError> {
        let names = domain.names();
        Tape::compile(exprs, &names)
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluates all outputs at `point` (one value per compiled variable).
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::with_capacity(self.ops.len());
        self.eval_into(point, &mut scratch)?;
        Ok(self.outputs.iter().map(|&o| scratch[o as usize]).collect())
    }

    fn eval_into(&self, point: &[f64], s: &mut Vec<f64>) -> Result<(), EvalError> {
        debug_assert!(point.len() >= self.nvars);
        s.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => point[i],
                Op::Add(a, b) => s[a as usize] + s[b as usize],
                Op::Mul(a, b) => s[a as usize] * s[b as usize],
                Op::Neg(a) => -s[a as usize],
                Op::Powi(a, p) => {
                    let base = s[a as usize];
                    if base == 0.0 && p < 0 {
                        return Err(EvalError::PowerDomain {
                            base,
                            exponent: p.to_string(),
                        });
                    }
                    base.powi(p)
                }
                Op::Sqrt(a) => {
                    let base = s[a as usize];
                    if base < 0.0 {
                        return Err(EvalError::PowerDomain {
                            base,
                            exponent: "1/2".into(),
                        });
                    }
                    base.sqrt()
                }
                Op::Powr(a, p, q) => pow_value(s[a as usize], Rational64::new(p, q))?,
                Op::Sin(a) => s[a as usize].sin(),
                Op::Cos(a) => s[a as usize].cos(),
                Op::Exp(a) => s[a as usize].exp(),
            };
            if !v.is_finite() {
                return Err(EvalError::NonFinite);
            }
            s.push(v);
        }
        Ok(())
    }
}
