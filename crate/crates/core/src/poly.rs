//! Sparse multivariate polynomials with `f64` coefficients.
//!
//! Terms are kept sorted by exponent tuple and merged on construction, so
//! two polynomials are equal iff they are structurally equal. Coefficient
//! arithmetic introduces no rounding of its own beyond the `f64` operations
//! `+`, `-`, `*`; in particular sums and products of small integer
//! coefficients stay exact, which the bracket identities in the test suite
//! rely on.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// A single monomial `coeff * x_1^e_1 ... x_n^e_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

/// Wire form of a term: `{"c": coefficient, "e": [exponents...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawTerm {
    pub c: f64,
    pub e: Vec<u32>,
}

/// Sparse polynomial in `num_vars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    num_vars: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial {
            num_vars,
            terms: Vec::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        Polynomial {
            num_vars,
            terms: vec![Term {
                coeff: c,
                exps: vec![0; num_vars],
            }],
        }
        .normalized()
    }

    /// The coordinate function `x_i` (0-based variable index).
    pub fn coordinate(num_vars: usize, i: usize) -> Result<Self> {
        if i >= num_vars {
            return Err(Error::IndexOutOfRange {
                index: i + 1,
                len: num_vars,
            });
        }
        let mut exps = vec![0; num_vars];
        exps[i] = 1;
        Ok(Polynomial {
            num_vars,
            terms: vec![Term { coeff: 1.0, exps }],
        })
    }

    /// Single monomial `c * x^exps`.
    pub fn monomial(num_vars: usize, c: f64, exps: Vec<u32>) -> Result<Self> {
        Self::from_terms(num_vars, vec![(c, exps)])
    }

    pub fn from_terms(num_vars: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self> {
        for (_, e) in &terms {
            if e.len() != num_vars {
                return Err(Error::DimensionMismatch {
                    expected: num_vars,
                    got: e.len(),
                });
            }
        }
        Ok(Polynomial {
            num_vars,
            terms: terms
                .into_iter()
                .map(|(coeff, exps)| Term { coeff, exps })
                .collect(),
        }
        .normalized())
    }

    pub fn from_raw(num_vars: usize, raw: Vec<RawTerm>) -> Result<Self> {
        Self::from_terms(num_vars, raw.into_iter().map(|t| (t.c, t.e)).collect())
    }

    /// Sort by exponent tuple, merge duplicates, drop zero coefficients.
    fn normalized(mut self) -> Self {
        self.terms.sort_by(|a, b| a.exps.cmp(&b.exps));
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.exps == t.exps => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exps.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(
            x.len(),
            self.num_vars,
            "polynomial in {} variables evaluated at a point of dimension {}",
            self.num_vars,
            x.len()
        );
        let mut acc = 0.0;
        for t in &self.terms {
            let mut m = t.coeff;
            for (xi, &e) in x.iter().zip(&t.exps) {
                if e > 0 {
                    m *= xi.powi(e as i32);
                }
            }
            acc += m;
        }
        acc
    }

    fn check_same_vars(&self, other: &Self) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Polynomial {
            num_vars: self.num_vars,
            terms,
        }
        .normalized())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, a: f64) -> Self {
        Polynomial {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: a * t.coeff,
                    exps: t.exps.clone(),
                })
                .collect(),
        }
        .normalized()
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other)?;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let exps: Vec<u32> = a
                    .exps
                    .iter()
                    .zip(&b.exps)
                    .map(|(&p, &q)| p + q)
                    .collect();
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    exps,
                });
            }
        }
        Ok(Polynomial {
            num_vars: self.num_vars,
            terms,
        }
        .normalized())
    }

    /// Partial derivative with respect to variable `i` (0-based).
    pub fn partial(&self, i: usize) -> Result<Self> {
        if i >= self.num_vars {
            return Err(Error::IndexOutOfRange {
                index: i + 1,
                len: self.num_vars,
            });
        }
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps[i] > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                let e = exps[i];
                exps[i] = e - 1;
                Term {
                    coeff: t.coeff * e as f64,
                    exps,
                }
            })
            .collect();
        Ok(Polynomial {
            num_vars: self.num_vars,
            terms,
        }
        .normalized())
    }

    /// Upper bound for `sup |p|` over the axis box `[lo, hi]` via term-wise
    /// interval bounds. Cheap and crude, only used to size search regions.
    pub fn sup_abs_on_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        assert_eq!(lo.len(), self.num_vars);
        assert_eq!(hi.len(), self.num_vars);
        let mut acc = 0.0;
        for t in &self.terms {
            let mut m = t.coeff.abs();
            for ((&l, &h), &e) in lo.iter().zip(hi).zip(&t.exps) {
                if e > 0 {
                    m *= l.abs().max(h.abs()).powi(e as i32);
                }
            }
            acc += m;
        }
        acc
    }

    pub fn to_raw(&self) -> Vec<RawTerm> {
        self.terms
            .iter()
            .map(|t| RawTerm {
                c: t.coeff,
                e: t.exps.clone(),
            })
            .collect()
    }
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.terms.len()))?;
        for t in self.to_raw() {
            seq.serialize_element(&t)?;
        }
        seq.end()
    }
}
