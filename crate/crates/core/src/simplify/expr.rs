use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::network::KanNetwork;
use crate::symbolic::SymbolicFn;

/// Expression tree.
///
/// Ops: `var` (`params = [index]`), `const` (`[value]`), `sum` (children
/// added), `lin` (`[k_1 .. k_n, c]`, `sum k_q child_q + c`), and library
/// function names. A function node with four params is the affine form
/// `c f(a x + b) + d`; with no params it is `f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expression {
    pub op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Expression>,
}

impl Expression {
    pub fn var(i: usize) -> Self {
        Self::leaf("var", i as f64)
    }

    pub fn constant(v: f64) -> Self {
        Self::leaf("const", v)
    }

    fn leaf(op: &str, v: f64) -> Self {
        Self {
            op: op.into(),
            params: vec![v],
            children: Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let child = |q: usize| -> Result<f64> {
            self.children
                .get(q)
                .ok_or_else(|| KanError::Malformed(format!("{} node without argument", self.op)))?
                .eval(x)
        };
        let param = |q: usize| -> Result<f64> {
            self.params
                .get(q)
                .copied()
                .ok_or_else(|| KanError::Malformed(format!("{} node missing parameter", self.op)))
        };
        match self.op.as_str() {
            "var" => {
                let i = param(0)? as usize;
                x.get(i).copied().ok_or(KanError::Dimension {
                    expected: i + 1,
                    got: x.len(),
                })
            }
            "const" => param(0),
            "sum" => self.children.iter().map(|c| c.eval(x)).sum(),
            "lin" => {
                if self.params.len() != self.children.len() + 1 {
                    return Err(KanError::Malformed("lin node needs one weight per child plus a constant".into()));
                }
                let mut acc = *self.params.last().unwrap();
                for (k, c) in self.params.iter().zip(&self.children) {
                    acc += k * c.eval(x)?;
                }
                Ok(acc)
            }
            name => {
                let f = SymbolicFn::from_name(name)?;
                let u = child(0)?;
                match self.params.len() {
                    0 => Ok(f.eval(u)),
                    4 => Ok(self.params[2] * f.eval(self.params[0] * u + self.params[1]) + self.params[3]),
                    n => Err(KanError::Malformed(format!("{name} node with {n} parameters"))),
                }
            }
        }
    }

    /// Simplified tree built from `lin`, `var` and parameterless function
    /// nodes. Terms and constants below half a unit in the last of
    /// `decimals` places are dropped.
    pub fn canonical(&self, decimals: usize) -> Result<Expression> {
        let tol = 0.5 * 10f64.powi(-(decimals as i32));
        Ok(to_lin(self, tol)?.prune(tol).to_expr())
    }

    /// Human-readable formula, e.g. `1.0·exp(1.0·sin(3.14·x₁) + 1.0·x₂²)`.
    pub fn render(&self, decimals: usize) -> Result<String> {
        let tol = 0.5 * 10f64.powi(-(decimals as i32));
        Ok(to_lin(self, tol)?.prune(tol).render(decimals))
    }
}

/// One formula per network output. Every edge must be locked.
pub fn symbolic_formula(net: &KanNetwork) -> Result<Vec<Expression>> {
    if let Some(((l, i, j), _)) = net.iter_edges().find(|(_, e)| !e.is_locked()) {
        return Err(KanError::UnlockedEdge { l, i, j });
    }
    let mut nodes: Vec<Expression> = (0..net.n_inputs()).map(Expression::var).collect();
    for layer in net.layers() {
        nodes = (0..layer.n_out())
            .map(|j| Expression {
                op: "sum".into(),
                params: Vec::new(),
                children: (0..layer.n_in())
                    .map(|i| {
                        let lock = layer.edge(i, j).lock.expect("checked above");
                        Expression {
                            op: lock.function.name().into(),
                            params: lock.params().to_vec(),
                            children: vec![nodes[i].clone()],
                        }
                    })
                    .collect(),
            })
            .collect();
    }
    Ok(nodes)
}

#[derive(Debug, Clone, PartialEq)]
enum Atom {
    Var(usize),
    Apply(SymbolicFn, Box<Lin>),
}

/// `sum k_q atom_q + c`
#[derive(Debug, Clone, PartialEq)]
struct Lin {
    terms: Vec<(f64, Atom)>,
    c: f64,
}

impl Lin {
    fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), c }
    }

    fn atom(k: f64, a: Atom) -> Self {
        Self {
            terms: vec![(k, a)],
            c: 0.0,
        }
    }

    fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.0 *= k;
        }
        self.c *= k;
        self
    }

    fn add(mut self, other: Lin) -> Self {
        for (k, a) in other.terms {
            match self.terms.iter_mut().find(|(_, b)| *b == a) {
                Some(t) => t.0 += k,
                None => self.terms.push((k, a)),
            }
        }
        self.c += other.c;
        self
    }

    fn prune(mut self, tol: f64) -> Self {
        self.terms.retain(|(k, _)| k.abs() >= tol);
        if self.c.abs() < tol {
            self.c = 0.0;
        }
        self
    }

    fn leading(&self) -> f64 {
        self.terms.first().map_or(0.0, |t| t.0)
    }

    fn to_expr(&self) -> Expression {
        let mut params: Vec<f64> = self.terms.iter().map(|t| t.0).collect();
        params.push(self.c);
        Expression {
            op: "lin".into(),
            params,
            children: self
                .terms
                .iter()
                .map(|(_, a)| match a {
                    Atom::Var(i) => Expression::var(*i),
                    Atom::Apply(f, inner) => Expression {
                        op: f.name().into(),
                        params: Vec::new(),
                        children: vec![inner.to_expr()],
                    },
                })
                .collect(),
        }
    }

    fn render(&self, decimals: usize) -> String {
        let mut out = String::new();
        for (q, (k, a)) in self.terms.iter().enumerate() {
            let body = format!("{}·{}", number(k.abs(), decimals), render_atom(a, decimals));
            push_signed(&mut out, q == 0, *k < 0.0, &body);
        }
        if self.c != 0.0 || self.terms.is_empty() {
            push_signed(&mut out, self.terms.is_empty(), self.c < 0.0, &number(self.c.abs(), decimals));
        }
        out
    }

    /// True for `1·atom` with no constant.
    fn bare_atom(&self) -> Option<&Atom> {
        match self.terms.as_slice() {
            [(k, a)] if *k == 1.0 && self.c == 0.0 => Some(a),
            _ => None,
        }
    }
}

fn push_signed(out: &mut String, first: bool, negative: bool, body: &str) {
    match (first, negative) {
        (true, false) => out.push_str(body),
        (true, true) => {
            out.push('-');
            out.push_str(body);
        }
        (false, false) => {
            out.push_str(" + ");
            out.push_str(body);
        }
        (false, true) => {
            out.push_str(" - ");
            out.push_str(body);
        }
    }
}

/// Fixed decimals with trailing zeros trimmed, keeping one decimal.
fn number(v: f64, decimals: usize) -> String {
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') && !s.ends_with(".0") {
            s.pop();
        }
    } else {
        s.push_str(".0");
    }
    s
}

fn subscript(n: usize) -> String {
    n.to_string()
        .chars()
        .map(|c| char::from_u32(0x2080 + c.to_digit(10).unwrap()).unwrap())
        .collect()
}

fn render_atom(a: &Atom, decimals: usize) -> String {
    match a {
        Atom::Var(i) => format!("x{}", subscript(i + 1)),
        Atom::Apply(f, inner) => {
            let arg = inner.render(decimals);
            let base = match inner.bare_atom() {
                Some(Atom::Var(i)) => format!("x{}", subscript(i + 1)),
                _ => format!("({arg})"),
            };
            match f {
                SymbolicFn::Square => format!("{base}²"),
                SymbolicFn::Cube => format!("{base}³"),
                SymbolicFn::Quartic => format!("{base}⁴"),
                SymbolicFn::Reciprocal => format!("1/{base}"),
                SymbolicFn::Abs => format!("|{arg}|"),
                SymbolicFn::Gaussian => format!("exp(-{base}²)"),
                f => format!("{}({arg})", f.name()),
            }
        }
    }
}

fn to_lin(e: &Expression, tol: f64) -> Result<Lin> {
    let p = |q: usize| -> Result<f64> {
        e.params
            .get(q)
            .copied()
            .ok_or_else(|| KanError::Malformed(format!("{} node missing parameter", e.op)))
    };
    let arg = || -> Result<Lin> {
        to_lin(
            e.children
                .first()
                .ok_or_else(|| KanError::Malformed(format!("{} node without argument", e.op)))?,
            tol,
        )
    };
    match e.op.as_str() {
        "var" => Ok(Lin::atom(1.0, Atom::Var(p(0)? as usize))),
        "const" => Ok(Lin::constant(p(0)?)),
        "sum" => e
            .children
            .iter()
            .try_fold(Lin::constant(0.0), |acc, c| Ok(acc.add(to_lin(c, tol)?))),
        "lin" => {
            if e.params.len() != e.children.len() + 1 {
                return Err(KanError::Malformed("lin node needs one weight per child plus a constant".into()));
            }
            let mut acc = Lin::constant(*e.params.last().unwrap());
            for (k, c) in e.params.iter().zip(&e.children) {
                acc = acc.add(to_lin(c, tol)?.scale(*k));
            }
            Ok(acc)
        }
        name => {
            let f = SymbolicFn::from_name(name)?;
            let (a, b, c, d) = match e.params.len() {
                0 => (1.0, 0.0, 1.0, 0.0),
                4 => (p(0)?, p(1)?, p(2)?, p(3)?),
                n => return Err(KanError::Malformed(format!("{name} node with {n} parameters"))),
            };
            let mut inner = arg()?.scale(a);
            inner.c += b;
            Ok(apply(f, inner.prune(tol), tol).scale(c).add(Lin::constant(d)))
        }
    }
}

/// `f(inner)` as a linear combination, pulling scalars out where the
/// function allows it.
fn apply(f: SymbolicFn, mut inner: Lin, tol: f64) -> Lin {
    use SymbolicFn::*;
    match f {
        Zero => return Lin::constant(0.0),
        Identity => return inner,
        _ => {}
    }
    if inner.terms.is_empty() {
        return Lin::constant(f.eval(inner.c));
    }
    let mut outer = 1.0;
    let single = inner.terms.len() == 1 && inner.c == 0.0;
    match f {
        Square | Cube | Quartic | Reciprocal | Abs | Sqrt if single => {
            let k = inner.terms[0].0;
            let pulled = match f {
                Square => Some(k * k),
                Cube => Some(k * k * k),
                Quartic => Some((k * k) * (k * k)),
                Reciprocal => Some(1.0 / k),
                Abs => Some(k.abs()),
                _ if k > 0.0 => Some(k.sqrt()),
                _ => None,
            };
            if let Some(m) = pulled {
                outer = m;
                inner.terms[0].0 = 1.0;
            }
        }
        Exp => {
            outer = inner.c.exp();
            inner.c = 0.0;
        }
        Sin | Cos => {
            let mut phase = (inner.c + PI).rem_euclid(TAU) - PI;
            if inner.leading() < 0.0 {
                inner = inner.scale(-1.0);
                phase = -phase;
                if f == Sin {
                    outer = -outer;
                }
            }
            if phase > PI / 2.0 {
                phase -= PI;
                outer = -outer;
            } else if phase <= -PI / 2.0 {
                phase += PI;
                outer = -outer;
            }
            inner.c = if phase.abs() < tol { 0.0 } else { phase };
        }
        Tan | Tanh | Arcsin | Arctan | Arctanh | Cube if inner.leading() < 0.0 => {
            inner = inner.scale(-1.0);
            outer = -1.0;
        }
        Square | Quartic | Abs | Cosh | Gaussian if inner.leading() < 0.0 => {
            inner = inner.scale(-1.0);
        }
        _ => {}
    }
    Lin::atom(outer, Atom::Apply(f, Box::new(inner)))
}
