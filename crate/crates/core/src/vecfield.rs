//! Polynomial vector fields, iterated commutators, and the builtin model
//! systems.
//!
//! A `VectorField` on R^n is n polynomials in n variables; a
//! `VectorFieldSystem` is an ordered family X_1..X_m of them. Field indices
//! in multi-indices, flow programs and error messages are 1-based to match
//! the usual X_1, X_2, ... naming; Rust-side accessors take those 1-based
//! indices and check them.

use serde::de::Error as DeError;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, RawTerm};

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Polynomial>,
}

impl VectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        for c in &components {
            if c.num_vars() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.num_vars(),
                });
            }
        }
        Ok(VectorField { components })
    }

    pub fn zero(dim: usize) -> Self {
        VectorField {
            components: vec![Polynomial::zero(dim); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Polynomial {
        &self.components[k]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Euclidean norm of the field at `x`.
    pub fn norm_at(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let v = c.eval(x);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(VectorField { components })
    }

    pub fn scale(&self, a: f64) -> Self {
        VectorField {
            components: self.components.iter().map(|c| c.scale(a)).collect(),
        }
    }

    /// Partial-derivative matrix as polynomials: entry `[k][j]` is
    /// d(component k)/d(x_j). Used by the variational flow integrator.
    pub fn partial_matrix(&self) -> Vec<Vec<Polynomial>> {
        let n = self.dim();
        self.components
            .iter()
            .map(|c| (0..n).map(|j| c.partial(j).expect("j < dim")).collect())
            .collect()
    }

    /// Divergence sum_k d(component k)/d(x_k).
    pub fn divergence(&self) -> Polynomial {
        let n = self.dim();
        let mut acc = Polynomial::zero(n);
        for (k, c) in self.components.iter().enumerate() {
            acc = acc.add(&c.partial(k).expect("k < dim")).expect("same vars");
        }
        acc
    }

    /// Component-wise interval bound `sup_box |component_i|`.
    pub fn component_bounds(&self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.sup_abs_on_box(lo, hi))
            .collect()
    }
}

/// Lie bracket `[X, Y]_k = sum_j (X_j dY_k/dx_j - Y_j dX_k/dx_j)`, computed
/// exactly in the polynomial ring.
pub fn commutator(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let n = x.dim();
    let mut components = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Polynomial::zero(n);
        for j in 0..n {
            let forward = x.component(j).mul(&y.component(k).partial(j)?)?;
            let backward = y.component(j).mul(&x.component(k).partial(j)?)?;
            acc = acc.add(&forward)?.sub(&backward)?;
        }
        components.push(acc);
    }
    VectorField::new(components)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSystem {
    dim: usize,
    fields: Vec<VectorField>,
}

impl VectorFieldSystem {
    pub fn new(dim: usize, fields: Vec<VectorField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Degenerate("system with no fields".into()));
        }
        for f in &fields {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                });
            }
        }
        Ok(VectorFieldSystem { dim, fields })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    /// 1-based field access: `field(1)` is X_1.
    pub fn field(&self, i: usize) -> Result<&VectorField> {
        if i == 0 || i > self.fields.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.fields.len(),
            });
        }
        Ok(&self.fields[i - 1])
    }

    /// Right-nested commutator `[X_{s_1},[X_{s_2},[...,X_{s_p}]...]]` for a
    /// 1-based index word `s`.
    pub fn nested_commutator(&self, s: &[usize]) -> Result<VectorField> {
        match s {
            [] => Err(Error::EmptyMultiIndex),
            [i] => Ok(self.field(*i)?.clone()),
            [i, rest @ ..] => commutator(self.field(*i)?, &self.nested_commutator(rest)?),
        }
    }

    /// Constant-coefficient combination `sum_i coeffs_i X_i`.
    pub fn combination(&self, coeffs: &[f64]) -> Result<VectorField> {
        if coeffs.len() != self.fields.len() {
            return Err(Error::DimensionMismatch {
                expected: self.fields.len(),
                got: coeffs.len(),
            });
        }
        let mut acc = VectorField::zero(self.dim);
        for (a, f) in coeffs.iter().zip(&self.fields) {
            if *a != 0.0 {
                acc = acc.add(&f.scale(*a))?;
            }
        }
        Ok(acc)
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["heisenberg1", "grushin", "engel", "martinet", "euclidean2"]
    }

    /// The model systems used throughout the tests and the CLI.
    pub fn builtin(name: &str) -> Result<Self> {
        let coord = |n: usize, i: usize| Polynomial::coordinate(n, i).expect("valid index");
        let one = |n: usize| Polynomial::constant(n, 1.0);
        let zero = Polynomial::zero;
        match name {
            // X1 = (1, 0, -y/2), X2 = (0, 1, x/2)
            "heisenberg1" => {
                let n = 3;
                let x1 = VectorField::new(vec![one(n), zero(n), coord(n, 1).scale(-0.5)])?;
                let x2 = VectorField::new(vec![zero(n), one(n), coord(n, 0).scale(0.5)])?;
                VectorFieldSystem::new(n, vec![x1, x2])
            }
            // X1 = (1, 0), X2 = (0, x)
            "grushin" => {
                let n = 2;
                let x1 = VectorField::new(vec![one(n), zero(n)])?;
                let x2 = VectorField::new(vec![zero(n), coord(n, 0)])?;
                VectorFieldSystem::new(n, vec![x1, x2])
            }
            // X1 = (1, 0, 0, 0), X2 = (0, 1, x, x^2/2)
            "engel" => {
                let n = 4;
                let x1 = VectorField::new(vec![one(n), zero(n), zero(n), zero(n)])?;
                let xsq = Polynomial::monomial(n, 0.5, vec![2, 0, 0, 0])?;
                let x2 = VectorField::new(vec![zero(n), one(n), coord(n, 0), xsq])?;
                VectorFieldSystem::new(n, vec![x1, x2])
            }
            // X1 = (1, 0, 0), X2 = (0, 1, x^2/2)
            "martinet" => {
                let n = 3;
                let x1 = VectorField::new(vec![one(n), zero(n), zero(n)])?;
                let xsq = Polynomial::monomial(n, 0.5, vec![2, 0, 0])?;
                let x2 = VectorField::new(vec![zero(n), one(n), xsq])?;
                VectorFieldSystem::new(n, vec![x1, x2])
            }
            // X1 = (1, 0), X2 = (0, 1)
            "euclidean2" => {
                let n = 2;
                let x1 = VectorField::new(vec![one(n), zero(n)])?;
                let x2 = VectorField::new(vec![zero(n), one(n)])?;
                VectorFieldSystem::new(n, vec![x1, x2])
            }
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }
}

impl Serialize for VectorFieldSystem {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("VectorFieldSystem", 2)?;
        st.serialize_field("n", &self.dim)?;
        let fields: Vec<Vec<&Polynomial>> = self
            .fields
            .iter()
            .map(|f| f.components().iter().collect())
            .collect();
        st.serialize_field("fields", &fields)?;
        st.end()
    }
}

#[derive(Deserialize)]
struct RawSystem {
    n: usize,
    fields: Vec<Vec<Vec<RawTerm>>>,
}

impl<'de> Deserialize<'de> for VectorFieldSystem {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSystem::deserialize(deserializer)?;
        let mut fields = Vec::with_capacity(raw.fields.len());
        for f in raw.fields {
            if f.len() != raw.n {
                return Err(D::Error::custom(format!(
                    "field has {} components, system dimension is {}",
                    f.len(),
                    raw.n
                )));
            }
            let components = f
                .into_iter()
                .map(|terms| Polynomial::from_raw(raw.n, terms))
                .collect::<Result<Vec<_>>>()
                .map_err(D::Error::custom)?;
            fields.push(VectorField::new(components).map_err(D::Error::custom)?);
        }
        VectorFieldSystem::new(raw.n, fields).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_bracket_is_vertical() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let b = commutator(sys.field(1).unwrap(), sys.field(2).unwrap()).unwrap();
        let expected = VectorField::new(vec![
            Polynomial::zero(3),
            Polynomial::zero(3),
            Polynomial::constant(3, 1.0),
        ])
        .unwrap();
        assert_eq!(b, expected);
    }

    #[test]
    fn antisymmetry_cancels_exactly() {
        let sys = VectorFieldSystem::builtin("engel").unwrap();
        let xy = commutator(sys.field(1).unwrap(), sys.field(2).unwrap()).unwrap();
        let yx = commutator(sys.field(2).unwrap(), sys.field(1).unwrap()).unwrap();
        assert!(xy.add(&yx).unwrap().is_zero());
    }

    #[test]
    fn nested_commutator_is_right_nested() {
        let sys = VectorFieldSystem::builtin("engel").unwrap();
        // [X1,[X1,X2]] = d/dw
        let w = sys.nested_commutator(&[1, 1, 2]).unwrap();
        let expected = VectorField::new(vec![
            Polynomial::zero(4),
            Polynomial::zero(4),
            Polynomial::zero(4),
            Polynomial::constant(4, 1.0),
        ])
        .unwrap();
        assert_eq!(w, expected);
        // while on the Heisenberg group the same word vanishes
        let h = VectorFieldSystem::builtin("heisenberg1").unwrap();
        assert!(h.nested_commutator(&[1, 1, 2]).unwrap().is_zero());
    }

    #[test]
    fn nested_commutator_rejects_bad_words() {
        let sys = VectorFieldSystem::builtin("grushin").unwrap();
        assert!(matches!(
            sys.nested_commutator(&[]),
            Err(Error::EmptyMultiIndex)
        ));
        assert!(matches!(
            sys.nested_commutator(&[1, 3]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn divergence_examples() {
        let grushin = VectorFieldSystem::builtin("grushin").unwrap();
        assert!(grushin.field(2).unwrap().divergence().is_zero());
        // div(x d/dx) = 1
        let f = VectorField::new(vec![Polynomial::coordinate(1, 0).unwrap()]).unwrap();
        assert_eq!(f.divergence(), Polynomial::constant(1, 1.0));
        // the Heisenberg frame is divergence free
        let h = VectorFieldSystem::builtin("heisenberg1").unwrap();
        assert!(h.field(1).unwrap().divergence().is_zero());
        assert!(h.field(2).unwrap().divergence().is_zero());
    }

    #[test]
    fn combination_evaluates() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let f = sys.combination(&[2.0, -1.0]).unwrap();
        assert_eq!(f.eval(&[1.0, 3.0, 0.0]), vec![2.0, -1.0, -3.5]);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            VectorFieldSystem::builtin("heisenberg9"),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn system_json_roundtrip() {
        for name in VectorFieldSystem::builtin_names() {
            let sys = VectorFieldSystem::builtin(name).unwrap();
            let json = serde_json::to_string(&sys).unwrap();
            let back: VectorFieldSystem = serde_json::from_str(&json).unwrap();
            assert_eq!(sys, back, "roundtrip failed for {name}");
        }
    }

    #[test]
    fn system_json_shape() {
        let sys = VectorFieldSystem::builtin("grushin").unwrap();
        let json = serde_json::to_string(&sys).unwrap();
        assert_eq!(
            json,
            r#"{"n":2,"fields":[[[{"c":1.0,"e":[0,0]}],[]],[[],[{"c":1.0,"e":[1,0]}]]]}"#
        );
    }

    #[test]
    fn ragged_system_rejected() {
        let bad = r#"{"n":2,"fields":[[[{"c":1.0,"e":[0,0]}]]]}"#;
        assert!(serde_json::from_str::<VectorFieldSystem>(bad).is_err());
    }
}
