//! A small computer-algebra kernel.
//!
//! Expressions are immutable, reference-counted trees over named coordinates.
//! Differentiation is exact and symbolic; identities are certified by seeded
//! multi-point numeric evaluation rather than by canonical simplification.

mod parse;
mod tape;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_rational::Rational64;
use thiserror::Error;

use crate::forms::CoordinateDomain;

pub use parse::{parse, ParseError};
pub use tape::{EvalError, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymError {
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("{source} at point {point}")]
    Eval { source: EvalError, point: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Const(f64),
    Var(Arc<str>),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Neg(Expr),
    Pow(Expr, Rational64),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
}

/// Symbolic scalar expression. Cloning is cheap (shared tree).
#[derive(Clone)]
pub struct Expr(pub(crate) Arc<Node>);

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr(Arc::new(Node::Const(value)))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(name: &str) -> Self {
        Expr(Arc::new(Node::Var(Arc::from(name))))
    }

    pub(crate) fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as *const () as usize
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_const_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr(Arc::new(Node::Add(self.clone(), other.clone()))),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => other.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr(Arc::new(Node::Mul(self.clone(), other.clone()))),
        }
    }

    pub fn div(&self, other: &Expr) -> Expr {
        self.mul(&other.powr(Rational64::from_integer(-1)))
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Neg(self.clone()))),
        }
    }

    pub fn scale(&self, c: f64) -> Expr {
        self.mul(&Expr::constant(c))
    }

    /// Rational power. Constant bases are folded only where the result is real.
    pub fn powr(&self, exponent: Rational64) -> Expr {
        if *exponent.numer() == 0 {
            return Expr::one();
        }
        if exponent == Rational64::from_integer(1) {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            if let Ok(v) = tape::pow_value(c, exponent) {
                return Expr::constant(v);
            }
        }
        if let Node::Pow(base, inner) = self.node() {
            // (b^p)^q = b^(pq) is only safe when p is an odd integer or q integer
            // with p integer; keep it to integer inner exponents.
            if inner.is_integer() && exponent.is_integer() {
                return base.powr(inner * exponent);
            }
        }
        Expr(Arc::new(Node::Pow(self.clone(), exponent)))
    }

    pub fn powi(&self, n: i64) -> Expr {
        self.powr(Rational64::from_integer(n))
    }

    pub fn sqrt(&self) -> Expr {
        self.powr(Rational64::new(1, 2))
    }

    pub fn sin(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.sin()),
            None => Expr(Arc::new(Node::Sin(self.clone()))),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.cos()),
            None => Expr(Arc::new(Node::Cos(self.clone()))),
        }
    }

    pub fn exp(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.exp()),
            None => Expr(Arc::new(Node::Exp(self.clone()))),
        }
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| acc.add(t))
    }

    /// Names of all variables occurring in the expression.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !visited.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::Var(v) => {
                    seen.insert(v.to_string());
                }
                Node::Add(a, b) | Node::Mul(a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                Node::Neg(a) | Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => {
                    stack.push(a.clone())
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Symbolic partial derivative with respect to the variable `name`.
    ///
    /// No check is made that `name` is a declared coordinate; see [`diff`]
    /// for the checked form.
    pub fn derivative(&self, name: &str) -> Expr {
        let mut memo = HashMap::new();
        self.derivative_memo(name, &mut memo)
    }

    fn derivative_memo(&self, name: &str, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.ptr()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(v) => {
                if &**v == name {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => a
                .derivative_memo(name, memo)
                .add(&b.derivative_memo(name, memo)),
            Node::Mul(a, b) => {
                let da = a.derivative_memo(name, memo);
                let db = b.derivative_memo(name, memo);
                da.mul(b).add(&a.mul(&db))
            }
            Node::Neg(a) => a.derivative_memo(name, memo).neg(),
            Node::Pow(a, r) => {
                let da = a.derivative_memo(name, memo);
                if da.is_const_zero() {
                    Expr::zero()
                } else {
                    let coeff = *r.numer() as f64 / *r.denom() as f64;
                    a.powr(r - Rational64::from_integer(1))
                        .scale(coeff)
                        .mul(&da)
                }
            }
            Node::Sin(a) => {
                let da = a.derivative_memo(name, memo);
                a.cos().mul(&da)
            }
            Node::Cos(a) => {
                let da = a.derivative_memo(name, memo);
                a.sin().neg().mul(&da)
            }
            Node::Exp(a) => {
                let da = a.derivative_memo(name, memo);
                self.mul(&da)
            }
        };
        memo.insert(self.ptr(), d.clone());
        d
    }

    /// Replaces variables by expressions. Variables absent from the map are kept.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        let mut memo = HashMap::new();
        self.substitute_memo(map, &mut memo)
    }

    pub(crate) fn substitute_memo(
        &self,
        map: &HashMap<String, Expr>,
        memo: &mut HashMap<usize, Expr>,
    ) -> Expr {
        if let Some(e) = memo.get(&self.ptr()) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(v) => map.get(&**v).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(a, b) => a
                .substitute_memo(map, memo)
                .add(&b.substitute_memo(map, memo)),
            Node::Mul(a, b) => a
                .substitute_memo(map, memo)
                .mul(&b.substitute_memo(map, memo)),
            Node::Neg(a) => a.substitute_memo(map, memo).neg(),
            Node::Pow(a, r) => a.substitute_memo(map, memo).powr(*r),
            Node::Sin(a) => a.substitute_memo(map, memo).sin(),
            Node::Cos(a) => a.substitute_memo(map, memo).cos(),
            Node::Exp(a) => a.substitute_memo(map, memo).exp(),
        };
        memo.insert(self.ptr(), out.clone());
        out
    }

    /// Evaluates at named values. Convenience for tests and one-off use;
    /// hot loops should compile a [`Tape`].
    pub fn eval(&self, values: &[(&str, f64)]) -> Result<f64, SymError> {
        let names: Vec<&str> = values.iter().map(|(n, _)| *n).collect();
        let tape = Tape::compile(std::slice::from_ref(self), &names)?;
        let point: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        tape.eval(&point).map(|v| v[0]).map_err(|source| SymError::Eval {
            source,
            point: format!("{values:?}"),
        })
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Pow(a, r) => {
                if *r == Rational64::new(1, 2) {
                    write!(f, "sqrt({a})")
                } else if r.is_integer() {
                    write!(f, "({a}^({}))", r.numer())
                } else {
                    write!(f, "({a}^({}/{}))", r.numer(), r.denom())
                }
            }
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $impl:ident) => {
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$impl(&self, &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$impl(self, rhs)
            }
        }
        impl std::ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$impl(&self, &Expr::constant(rhs))
            }
        }
        impl std::ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$impl(&Expr::constant(self), &rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);
binop!(Div, div, div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

/// Checked partial derivative: `x` must be a coordinate of `domain`.
pub fn diff(e: &Expr, x: &str, domain: &CoordinateDomain) -> Result<Expr, SymError> {
    if domain.index_of(x).is_none() {
        return Err(SymError::UnknownCoordinate(x.to_string()));
    }
    Ok(e.derivative(x))
}

/// Outcome of a probabilistic zero test.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCertificate {
    pub passed: bool,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

/// Seeded multi-point zero test of `e` over `domain`.
///
/// Deterministic in `seed`; thread count does not affect the result.
pub fn is_zero(
    e: &Expr,
    domain: &CoordinateDomain,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ZeroCertificate, SymError> {
    if samples == 0 || !(tol > 0.0) {
        return Err(SymError::Invalid(
            "is_zero needs samples >= 1 and tol > 0".into(),
        ));
    }
    let tape = Tape::compile_in(std::slice::from_ref(e), domain)?;
    let points = domain.sample_points(samples, seed);
    let (max_residual, worst_point) = crate::sampling::max_abs_over(&tape, domain, &points)?;
    Ok(ZeroCertificate {
        passed: max_residual < tol,
        max_residual,
        worst_point,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::Coordinate;

    fn box_domain(names: &[&str], lo: f64, hi: f64) -> CoordinateDomain {
        CoordinateDomain::new(
            "box",
            names.iter().map(|n| Coordinate::linear(n, lo, hi)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn polynomial_rule() {
        let x = Expr::var("x");
        let d = x.powi(2).derivative("x");
        assert_eq!(d.eval(&[("x", 3.0)]).unwrap(), 6.0);
    }

    #[test]
    fn constant_rule() {
        let c = Expr::constant(4.2);
        assert!(c.derivative("x").is_const_zero());
    }

    #[test]
    fn product_of_transcendentals_against_central_difference() {
        let e = parse("sin(x)*exp(y)").unwrap();
        let d = e.derivative("x");
        let (x, y) = (0.7, 0.2);
        let exact = d.eval(&[("x", x), ("y", y)]).unwrap();
        assert!((exact - x.cos() * y.exp()).abs() < 1e-15);
        let h = 1e-6;
        let f = |x: f64| x.sin() * y.exp();
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        assert!((exact - fd).abs() < 1e-8);
    }

    #[test]
    fn diff_rejects_unknown_coordinate() {
        let dom = box_domain(&["x"], -1.0, 1.0);
        let e = Expr::var("x");
        assert!(matches!(
            diff(&e, "z", &dom),
            Err(SymError::UnknownCoordinate(_))
        ));
    }

    #[test]
    fn pythagorean_identity_is_zero() {
        let dom = box_domain(&["x"], -3.0, 3.0);
        let e = parse("sin(x)^2 + cos(x)^2 - 1").unwrap();
        let cert = is_zero(&e, &dom, 100, 1e-12, 7).unwrap();
        assert!(cert.passed, "{cert:?}");
    }

    #[test]
    fn nonzero_function_fails() {
        let dom = box_domain(&["x"], -1.0, 1.0);
        let cert = is_zero(&Expr::var("x"), &dom, 100, 1e-12, 7).unwrap();
        assert!(!cert.passed);
    }

    #[test]
    fn sqrt_derivative_at_zero_is_an_error() {
        let e = Expr::var("x").sqrt().derivative("x");
        let err = e.eval(&[("x", 0.0)]).unwrap_err();
        assert!(matches!(err, SymError::Eval { .. }));
        assert_eq!(Expr::var("x").sqrt().eval(&[("x", 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn light_rewrites_bound_growth() {
        let x = Expr::var("x");
        assert!((&x * &Expr::zero()).is_const_zero());
        assert!(matches!((&x + &Expr::zero()).node(), Node::Var(_)));
        assert_eq!((Expr::constant(2.0) * Expr::constant(3.0)).as_const(), Some(6.0));
        assert!(matches!(x.neg().neg().node(), Node::Var(_)));
    }

    #[test]
    fn is_zero_is_deterministic() {
        let dom = box_domain(&["x", "y"], -1.0, 1.0);
        let e = parse("x*y - 0.1").unwrap();
        let a = is_zero(&e, &dom, 50, 1e-3, 11).unwrap();
        let b = is_zero(&e, &dom, 50, 1e-3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn is_zero_reports_domain_violation() {
        let dom = box_domain(&["x"], -1.0, 1.0);
        let e = parse("sqrt(x)").unwrap();
        assert!(matches!(
            is_zero(&e, &dom, 20, 1e-9, 1),
            Err(SymError::Eval { .. })
        ));
    }

    #[test]
    fn substitution_composes() {
        let e = parse("x^2 + y").unwrap();
        let mut map = HashMap::new();
        map.insert("x".to_string(), parse("sin(t)").unwrap());
        let s = e.substitute(&map);
        let v = s.eval(&[("t", 0.3), ("y", 2.0)]).unwrap();
        assert!((v - (0.3f64.sin().powi(2) + 2.0)).abs() < 1e-15);
    }
}
