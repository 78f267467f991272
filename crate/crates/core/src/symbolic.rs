//! The library of named univariate functions that edges can be locked to.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::KanError;

/// A named library function `f` usable in `c * f(a * x + b) + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SymbolicFn {
    Zero,
    Identity,
    Square,
    Cube,
    Quartic,
    Reciprocal,
    Sqrt,
    Exp,
    Log,
    Abs,
    Sin,
    Cos,
    Tan,
    Tanh,
    Arcsin,
    Arctan,
    Arctanh,
    Sigmoid,
    Gaussian,
    Cosh,
}

/// Where a library function may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    All,
    /// `u > 0`
    Positive,
    /// `u >= 0`
    NonNegative,
    /// `u != 0`
    NonZero,
    /// `|u| < 1`
    OpenUnit,
    /// `|u| < pi/2`
    HalfPeriod,
}

impl Domain {
    /// True when `u` lies inside the domain with at least `margin` to spare.
    pub fn contains(self, u: f64, margin: f64) -> bool {
        match self {
            Domain::All => u.is_finite(),
            Domain::Positive | Domain::NonNegative => u > margin,
            Domain::NonZero => u.abs() > margin,
            Domain::OpenUnit => u.abs() < 1.0 - margin,
            Domain::HalfPeriod => u.abs() < FRAC_PI_2 - margin,
        }
    }
}

impl SymbolicFn {
    pub const ALL: [SymbolicFn; 20] = [
        SymbolicFn::Zero,
        SymbolicFn::Identity,
        SymbolicFn::Square,
        SymbolicFn::Cube,
        SymbolicFn::Quartic,
        SymbolicFn::Reciprocal,
        SymbolicFn::Sqrt,
        SymbolicFn::Exp,
        SymbolicFn::Log,
        SymbolicFn::Abs,
        SymbolicFn::Sin,
        SymbolicFn::Cos,
        SymbolicFn::Tan,
        SymbolicFn::Tanh,
        SymbolicFn::Arcsin,
        SymbolicFn::Arctan,
        SymbolicFn::Arctanh,
        SymbolicFn::Sigmoid,
        SymbolicFn::Gaussian,
        SymbolicFn::Cosh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SymbolicFn::Zero => "0",
            SymbolicFn::Identity => "x",
            SymbolicFn::Square => "x^2",
            SymbolicFn::Cube => "x^3",
            SymbolicFn::Quartic => "x^4",
            SymbolicFn::Reciprocal => "1/x",
            SymbolicFn::Sqrt => "sqrt",
            SymbolicFn::Exp => "exp",
            SymbolicFn::Log => "log",
            SymbolicFn::Abs => "abs",
            SymbolicFn::Sin => "sin",
            SymbolicFn::Cos => "cos",
            SymbolicFn::Tan => "tan",
            SymbolicFn::Tanh => "tanh",
            SymbolicFn::Arcsin => "arcsin",
            SymbolicFn::Arctan => "arctan",
            SymbolicFn::Arctanh => "arctanh",
            SymbolicFn::Sigmoid => "sigmoid",
            SymbolicFn::Gaussian => "gaussian",
            SymbolicFn::Cosh => "cosh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, KanError> {
        let alias = match name {
            "x^1" | "id" | "identity" => "x",
            "x2" | "x**2" => "x^2",
            "x3" | "x**3" => "x^3",
            "x4" | "x**4" => "x^4",
            "|x|" => "abs",
            "ln" => "log",
            "asin" => "arcsin",
            "atan" => "arctan",
            "atanh" => "arctanh",
            "gauss" => "gaussian",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|f| f.name() == alias)
            .ok_or_else(|| KanError::UnknownFunction(name.to_string()))
    }

    /// Lower ranks are simpler; used to break ties between equally good fits.
    pub fn complexity(self) -> u8 {
        use SymbolicFn::*;
        match self {
            Identity => 0,
            Square => 1,
            Abs => 2,
            Sin | Cos => 3,
            Exp | Log | Tanh | Sigmoid => 4,
            Cube | Quartic | Sqrt | Reciprocal => 5,
            Tan | Arcsin | Arctan | Arctanh | Cosh | Gaussian => 6,
            Zero => 7,
        }
    }

    pub fn domain(self) -> Domain {
        use SymbolicFn::*;
        match self {
            Log => Domain::Positive,
            Sqrt => Domain::NonNegative,
            Reciprocal => Domain::NonZero,
            Arcsin | Arctanh => Domain::OpenUnit,
            Tan => Domain::HalfPeriod,
            _ => Domain::All,
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        use SymbolicFn::*;
        match self {
            Zero => 0.0,
            Identity => u,
            Square => u * u,
            Cube => u * u * u,
            Quartic => (u * u) * (u * u),
            Reciprocal => 1.0 / u,
            Sqrt => u.sqrt(),
            Exp => u.exp(),
            Log => u.ln(),
            Abs => u.abs(),
            Sin => u.sin(),
            Cos => u.cos(),
            Tan => u.tan(),
            Tanh => u.tanh(),
            Arcsin => u.asin(),
            Arctan => u.atan(),
            Arctanh => u.atanh(),
            Sigmoid => sigmoid(u),
            Gaussian => (-u * u).exp(),
            Cosh => u.cosh(),
        }
    }

    /// First derivative `f'(u)`.
    #[inline]
    pub fn deriv(self, u: f64) -> f64 {
        use SymbolicFn::*;
        match self {
            Zero => 0.0,
            Identity => 1.0,
            Square => 2.0 * u,
            Cube => 3.0 * u * u,
            Quartic => 4.0 * u * u * u,
            Reciprocal => -1.0 / (u * u),
            Sqrt => 0.5 / u.sqrt(),
            Exp => u.exp(),
            Log => 1.0 / u,
            Abs => {
                if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Sin => u.cos(),
            Cos => -u.sin(),
            Tan => {
                let c = u.cos();
                1.0 / (c * c)
            }
            Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Arcsin => 1.0 / (1.0 - u * u).sqrt(),
            Arctan => 1.0 / (1.0 + u * u),
            Arctanh => 1.0 / (1.0 - u * u),
            Sigmoid => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
            Gaussian => -2.0 * u * (-u * u).exp(),
            Cosh => u.sinh(),
        }
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for SymbolicFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for SymbolicFn {
    type Error = KanError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        SymbolicFn::from_name(&s)
    }
}

impl From<SymbolicFn> for String {
    fn from(f: SymbolicFn) -> String {
        f.name().to_string()
    }
}

/// An ordered set of candidate functions for symbolic snapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicLibrary {
    entries: Vec<SymbolicFn>,
}

impl SymbolicLibrary {
    /// The full shipped library.
    pub fn standard() -> Self {
        Self {
            entries: SymbolicFn::ALL.to_vec(),
        }
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Library restricted to the named functions; duplicates are dropped.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, KanError> {
        let mut entries: Vec<SymbolicFn> = Vec::new();
        for n in names {
            let f = SymbolicFn::from_name(n.as_ref())?;
            if !entries.contains(&f) {
                entries.push(f);
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SymbolicFn] {
        &self.entries
    }

    pub fn contains(&self, f: SymbolicFn) -> bool {
        self.entries.contains(&f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for SymbolicLibrary {
    fn default() -> Self {
        Self::standard()
    }
}
