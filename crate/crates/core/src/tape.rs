//! Minimal scalar reverse-mode differentiation.
//!
//! Each node stores its value and the local partials with respect to its
//! parents. Nodes are appended in evaluation order, so a single backward
//! sweep over the node list yields every adjoint.

use crate::lif::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Default)]
pub struct Tape {
    values: Vec<f64>,
    /// `edges[starts[i]..starts[i + 1]]` are node `i`'s (parent, partial).
    starts: Vec<usize>,
    edges: Vec<(usize, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            starts: vec![0],
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: f64, parents: impl IntoIterator<Item = (Var, f64)>) -> Var {
        self.edges
            .extend(parents.into_iter().map(|(v, d)| (v.0, d)));
        self.values.push(value);
        self.starts.push(self.edges.len());
        Var(self.values.len() - 1)
    }

    /// Independent input.
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, [])
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, [])
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    /// Node with caller-supplied value and local partials.
    pub fn custom(&mut self, value: f64, partials: &[(Var, f64)]) -> Var {
        self.push(value, partials.iter().copied())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, [(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, [(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, [(a, y), (b, x)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.push(v, [(a, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, [(a, 1.0)])
    }

    /// `c + sum_i w_i x_i` with constant weights.
    pub fn linear(&mut self, c: f64, terms: &[(Var, f64)]) -> Var {
        let v = terms.iter().fold(c, |acc, &(x, w)| acc + w * self.value(x));
        self.push(v, terms.iter().copied())
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.value(x)).sum();
        self.push(v, xs.iter().map(|&x| (x, 1.0)))
    }

    /// `sum_i a_i b_i` over variables.
    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot operands differ in length");
        let v = a.iter().zip(b).map(|(&x, &y)| self.value(x) * self.value(y)).sum();
        let parents: Vec<(Var, f64)> = a
            .iter()
            .zip(b)
            .flat_map(|(&x, &y)| [(x, self.value(y)), (y, self.value(x))])
            .collect();
        self.push(v, parents)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x.sin(), [(a, x.cos())])
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x.cos(), [(a, -x.sin())])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.push(e, [(a, e)])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x.ln(), [(a, 1.0 / x)])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        self.push(s, [(a, s * (1.0 - s))])
    }

    /// Subgradient 0 at the kink.
    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let d = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.push(x.abs(), [(a, d)])
    }

    /// Numerically stable `ln sum_i exp(x_i)`; partials are the softmax.
    pub fn logsumexp(&mut self, xs: &[Var]) -> Var {
        let vals: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
        let lse = m + s.ln();
        let parents: Vec<(Var, f64)> = xs
            .iter()
            .zip(&vals)
            .map(|(&x, v)| (x, (v - m).exp() / s))
            .collect();
        self.push(lse, parents)
    }

    /// Adjoints `d out / d node` for every node on the tape.
    pub fn gradient(&self, out: Var) -> Vec<f64> {
        let mut adj = vec![0.0; out.0 + 1];
        adj[out.0] = 1.0;
        for i in (0..=out.0).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            for &(p, d) in &self.edges[self.starts[i]..self.starts[i + 1]] {
                adj[p] += g * d;
            }
        }
        adj.resize(self.values.len(), 0.0);
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        let x0 = 0.37;
        type Op = fn(&mut Tape, Var) -> Var;
        let cases: [(Op, fn(f64) -> f64); 6] = [
            (Tape::sin, f64::sin),
            (Tape::cos, f64::cos),
            (Tape::exp, f64::exp),
            (Tape::ln, f64::ln),
            (Tape::sigmoid, sigmoid),
            (Tape::abs, f64::abs),
        ];
        for (op, f) in cases {
            let mut t = Tape::new();
            let x = t.leaf(x0);
            let y = op(&mut t, x);
            assert_eq!(t.value(y), f(x0));
            let g = t.gradient(y)[x.index()];
            assert!((g - fd(f, x0)).abs() < 1e-8);
        }
    }

    #[test]
    fn composite_expression() {
        // f(a, b) = a*b + sin(a) - 3b + lse(a, b)
        let f = |a: f64, b: f64| a * b + a.sin() - 3.0 * b + (a.exp() + b.exp()).ln();
        let (a0, b0) = (0.8, -1.3);
        let mut t = Tape::new();
        let a = t.leaf(a0);
        let b = t.leaf(b0);
        let ab = t.mul(a, b);
        let s = t.sin(a);
        let l = t.logsumexp(&[a, b]);
        let lin = t.linear(0.0, &[(ab, 1.0), (s, 1.0), (b, -3.0)]);
        let y = t.add(lin, l);
        assert!((t.value(y) - f(a0, b0)).abs() < 1e-14);
        let g = t.gradient(y);
        assert!((g[a.index()] - fd(|x| f(x, b0), a0)).abs() < 1e-7);
        assert!((g[b.index()] - fd(|x| f(a0, x), b0)).abs() < 1e-7);
    }

    #[test]
    fn dot_and_sum() {
        let mut t = Tape::new();
        let a: Vec<Var> = [1.0, 2.0, 3.0].iter().map(|&v| t.leaf(v)).collect();
        let b: Vec<Var> = [4.0, -5.0, 6.0].iter().map(|&v| t.leaf(v)).collect();
        let d = t.dot(&a, &b);
        let s = t.sum(&a);
        let y = t.sub(d, s);
        assert_eq!(t.value(y), 12.0 - 6.0);
        let g = t.gradient(y);
        assert_eq!(g[a[1].index()], -5.0 - 1.0);
        assert_eq!(g[b[2].index()], 3.0);
    }

    #[test]
    fn logsumexp_is_stable() {
        let mut t = Tape::new();
        let xs: Vec<Var> = [1000.0, 1000.0].iter().map(|&v| t.leaf(v)).collect();
        let y = t.logsumexp(&xs);
        assert!((t.value(y) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let g = t.gradient(y);
        assert!((g[xs[0].index()] - 0.5).abs() < 1e-15);
    }
}
