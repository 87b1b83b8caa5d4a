//! JSON encoding of complex matrices and vectors as nested `[re, im]` pairs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{ComplexMatrix, ComplexVector};

/// Row-major list of rows, each entry an `[re, im]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WireMatrix(pub Vec<Vec<[f64; 2]>>);

impl From<&ComplexMatrix> for WireMatrix {
    fn from(a: &ComplexMatrix) -> Self {
        WireMatrix(
            (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| pair(a[(i, j)])).collect())
                .collect(),
        )
    }
}

impl WireMatrix {
    /// Rebuilds the matrix. Rows must be of equal length; an empty row list
    /// gives a 0x0 matrix.
    pub fn into_matrix(self) -> Result<ComplexMatrix, String> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if self.0.iter().any(|r| r.len() != cols) {
            return Err("ragged matrix rows".into());
        }
        let data: Vec<Complex64> = self
            .0
            .into_iter()
            .flatten()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err("non-finite matrix entry".into());
        }
        Ok(ComplexMatrix::from_row_slice(rows, cols, &data))
    }
}

/// A vector as a flat list of `[re, im]` pairs.
pub fn vector_pairs(v: &ComplexVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| pair(*z)).collect()
}

/// Exact rationals as `"p/q"` strings (`"p"` when integral).
pub mod ratio_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use crate::dof::Rational;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).ok_or_else(|| D::Error::custom(format!("invalid rational {text:?}")))
    }

    /// Parses `"p"` or `"p/q"` with a nonzero denominator.
    pub fn parse(text: &str) -> Option<Rational> {
        let text = text.trim();
        match text.split_once('/') {
            None => text.parse().ok().map(Rational::from_integer),
            Some((p, q)) => {
                let (p, q): (i64, i64) = (p.trim().parse().ok()?, q.trim().parse().ok()?);
                (q != 0).then(|| Rational::new(p, q))
            }
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
            match r {
                Some(r) => super::serialize(r, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
            let text: Option<String> = Option::deserialize(d)?;
            text.map(|t| parse(&t).ok_or_else(|| D::Error::custom(format!("invalid rational {t:?}"))))
                .transpose()
        }
    }
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}
