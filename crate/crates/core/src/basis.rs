//! Basis-function libraries `Φ(x)` with analytic Jacobians.
//!
//! A [`BasisSet`] is an ordered list of scalar terms over an `n`-dimensional
//! state. The first `n` terms are always the linear monomials `x1..xn`, which
//! is what lets the state cost be embedded on the leading block of the
//! basis-space cost matrix.
//!
//! Libraries are usually built from a comma-separated description:
//!
//! | token     | expands to                           |
//! |-----------|--------------------------------------|
//! | `1`       | constant                             |
//! | `x`       | `x1, .., xn`                         |
//! | `x^2`     | `x1^2, .., xn^2` (also `x^3`)        |
//! | `xi*xj`   | `xi*xj` for all `i < j`              |
//! | `sin(x)`  | `sin(x1), .., sin(xn)` (also `cos`)  |
//! | `x3`, `x2^3`, `x1*x4`, `sin(x2)` | a single explicit term (1-based) |
//!
//! After parsing, linear terms come first, then the constant (when present),
//! then everything else in the order it was written.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// One scalar basis function. State indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisTerm {
    Constant,
    /// `x_index^power`, `power` in `1..=3`.
    Monomial { index: usize, power: u8 },
    /// `x_i * x_j` with `i < j`.
    Cross { i: usize, j: usize },
    Sin(usize),
    Cos(usize),
}

impl BasisTerm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisTerm::Constant => 1.0,
            BasisTerm::Monomial { index, power } => x[index].powi(power as i32),
            BasisTerm::Cross { i, j } => x[i] * x[j],
            BasisTerm::Sin(k) => x[k].sin(),
            BasisTerm::Cos(k) => x[k].cos(),
        }
    }

    /// Writes `∂φ/∂x` into `row` (length n). Entries not touched by the term
    /// are left at zero.
    fn gradient_into(&self, x: &[f64], row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            BasisTerm::Constant => {}
            BasisTerm::Monomial { index, power } => {
                row[index] = match power {
                    1 => 1.0,
                    2 => 2.0 * x[index],
                    _ => 3.0 * x[index] * x[index],
                };
            }
            BasisTerm::Cross { i, j } => {
                row[i] = x[j];
                row[j] = x[i];
            }
            BasisTerm::Sin(k) => row[k] = x[k].cos(),
            BasisTerm::Cos(k) => row[k] = -x[k].sin(),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            BasisTerm::Constant => None,
            BasisTerm::Monomial { index, .. } => Some(index),
            BasisTerm::Cross { j, .. } => Some(j),
            BasisTerm::Sin(k) | BasisTerm::Cos(k) => Some(k),
        }
    }

    fn is_linear(&self) -> bool {
        matches!(self, BasisTerm::Monomial { power: 1, .. })
    }
}

impl fmt::Display for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BasisTerm::Constant => write!(f, "1"),
            BasisTerm::Monomial { index, power: 1 } => write!(f, "x{}", index + 1),
            BasisTerm::Monomial { index, power } => write!(f, "x{}^{}", index + 1, power),
            BasisTerm::Cross { i, j } => write!(f, "x{}*x{}", i + 1, j + 1),
            BasisTerm::Sin(k) => write!(f, "sin(x{})", k + 1),
            BasisTerm::Cos(k) => write!(f, "cos(x{})", k + 1),
        }
    }
}

/// Immutable, ordered basis library over an `n`-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    n: usize,
    terms: Vec<BasisTerm>,
}

impl BasisSet {
    /// Validates and orders `terms`: linear monomials first (by state index),
    /// then the constant, then the rest in the given order.
    pub fn new(n: usize, terms: Vec<BasisTerm>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidBasis("state dimension must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for term in &terms {
            if let BasisTerm::Monomial { power, .. } = term {
                if !(1..=3).contains(power) {
                    return Err(Error::InvalidBasis(format!("{term}: exponent must be 1, 2 or 3")));
                }
            }
            if let BasisTerm::Cross { i, j } = term {
                if i >= j {
                    return Err(Error::InvalidBasis(format!("{term}: cross terms need i < j")));
                }
            }
            if term.max_index().is_some_and(|k| k >= n) {
                return Err(Error::InvalidBasis(format!("{term}: index exceeds state dimension {n}")));
            }
            if !seen.insert(*term) {
                return Err(Error::InvalidBasis(format!("duplicate term {term}")));
            }
        }
        for k in 0..n {
            if !seen.contains(&BasisTerm::Monomial { index: k, power: 1 }) {
                return Err(Error::InvalidBasis(format!("missing linear term x{}", k + 1)));
            }
        }

        let mut ordered: Vec<BasisTerm> = (0..n)
            .map(|index| BasisTerm::Monomial { index, power: 1 })
            .collect();
        if seen.contains(&BasisTerm::Constant) {
            ordered.push(BasisTerm::Constant);
        }
        ordered.extend(
            terms
                .into_iter()
                .filter(|t| !t.is_linear() && *t != BasisTerm::Constant),
        );
        Ok(BasisSet { n, terms: ordered })
    }

    /// Parses a comma-separated library description for an `n`-dimensional
    /// state. See the module docs for the grammar.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidBasis("state dimension must be positive".into()));
        }
        let mut terms = Vec::new();
        for raw in spec.split(',') {
            let token: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
            if token.is_empty() {
                return Err(parse_error(raw, "empty token"));
            }
            let before = terms.len();
            expand_token(&token, n, &mut terms)?;
            debug_assert!(terms.len() > before);
        }

        let mut seen = std::collections::HashSet::new();
        for term in &terms {
            if !seen.insert(*term) {
                return Err(parse_error(&term.to_string(), "duplicate term"));
            }
        }
        for k in 0..n {
            let linear = BasisTerm::Monomial { index: k, power: 1 };
            if !seen.contains(&linear) {
                return Err(parse_error(&linear.to_string(), "missing linear term"));
            }
        }
        BasisSet::new(n, terms)
    }

    /// The library `{x1, .., xn, 1}`, which reduces the value function to
    /// an LQR-style quadratic form.
    pub fn linear_with_constant(n: usize) -> Self {
        let mut terms: Vec<BasisTerm> = (0..n)
            .map(|index| BasisTerm::Monomial { index, power: 1 })
            .collect();
        terms.push(BasisTerm::Constant);
        BasisSet { n, terms }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Number of basis terms `p`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn constant_index(&self) -> Option<usize> {
        self.terms.iter().position(|t| *t == BasisTerm::Constant)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("basis eval", self.n, x.len())?;
        let xs = x.as_slice();
        Ok(DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.eval(xs)),
        ))
    }

    /// `∂Φ/∂x` as a `p × n` matrix.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("basis jacobian", self.n, x.len())?;
        let xs = x.as_slice();
        let p = self.terms.len();
        let mut jac = DMatrix::zeros(p, self.n);
        let mut row = vec![0.0; self.n];
        for (i, term) in self.terms.iter().enumerate() {
            term.gradient_into(xs, &mut row);
            for (j, v) in row.iter().enumerate() {
                jac[(i, j)] = *v;
            }
        }
        Ok(jac)
    }
}

impl fmt::Display for BasisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", names.join(","))
    }
}

fn parse_error(token: &str, reason: &str) -> Error {
    Error::BasisParse {
        token: token.trim().to_string(),
        reason: reason.to_string(),
    }
}

fn expand_token(token: &str, n: usize, out: &mut Vec<BasisTerm>) -> Result<()> {
    match token {
        "1" => out.push(BasisTerm::Constant),
        "x" | "x^1" => out.extend((0..n).map(|index| BasisTerm::Monomial { index, power: 1 })),
        "x^2" => out.extend((0..n).map(|index| BasisTerm::Monomial { index, power: 2 })),
        "x^3" => out.extend((0..n).map(|index| BasisTerm::Monomial { index, power: 3 })),
        "xi*xj" => {
            for i in 0..n {
                for j in i + 1..n {
                    out.push(BasisTerm::Cross { i, j });
                }
            }
        }
        "sin(x)" => out.extend((0..n).map(BasisTerm::Sin)),
        "cos(x)" => out.extend((0..n).map(BasisTerm::Cos)),
        _ => out.push(parse_explicit(token, n)?),
    }
    Ok(())
}

/// Parses a single explicit term such as `x2`, `x1^3`, `x1*x3` or `cos(x2)`.
fn parse_explicit(token: &str, n: usize) -> Result<BasisTerm> {
    let index = |s: &str| -> Result<usize> {
        let k: usize = s
            .strip_prefix('x')
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| parse_error(token, "unknown token"))?;
        if k == 0 || k > n {
            return Err(parse_error(token, &format!("state index out of range 1..={n}")));
        }
        Ok(k - 1)
    };

    if let Some(inner) = token.strip_prefix("sin(").and_then(|s| s.strip_suffix(')')) {
        return Ok(BasisTerm::Sin(index(inner)?));
    }
    if let Some(inner) = token.strip_prefix("cos(").and_then(|s| s.strip_suffix(')')) {
        return Ok(BasisTerm::Cos(index(inner)?));
    }
    if let Some((a, b)) = token.split_once('*') {
        let (i, j) = (index(a)?, index(b)?);
        if i == j {
            return Err(parse_error(token, "cross term needs two distinct indices"));
        }
        return Ok(BasisTerm::Cross { i: i.min(j), j: i.max(j) });
    }
    if let Some((base, exp)) = token.split_once('^') {
        let power: u8 = exp.parse().map_err(|_| parse_error(token, "unknown token"))?;
        if !(1..=3).contains(&power) {
            return Err(parse_error(token, "exponent must be 1, 2 or 3"));
        }
        return Ok(BasisTerm::Monomial { index: index(base)?, power });
    }
    Ok(BasisTerm::Monomial { index: index(token)?, power: 1 })
}
