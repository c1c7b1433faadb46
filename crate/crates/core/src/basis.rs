//! One-dimensional Gauss-Legendre quadrature and nodal Lagrange bases.
//!
//! The solution in each element is a tensor product of Lagrange polynomials
//! anchored at Gauss-Legendre points, so volume quadrature collocates with
//! the solution nodes and the mass matrix is diagonal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("quadrature rule needs at least one point, got {0}")]
    InvalidPointCount(usize),
    #[error("node index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights by Newton iteration from Chebyshev guesses.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule1D, BasisError> {
    if n < 1 {
        return Err(BasisError::InvalidPointCount(n));
    }
    if n == 1 {
        return Ok(QuadratureRule1D {
            nodes: vec![0.0],
            weights: vec![2.0],
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;
    for i in 0..half {
        // Chebyshev-like initial guess for the i-th root (descending in x).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Store symmetric pair; nodes ascending.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre_and_deriv(n, 0.0);
        nodes[half] = 0.0;
        weights[half] = 2.0 / (dp * dp);
    }
    Ok(QuadratureRule1D { nodes, weights })
}

/// Nodal Lagrange basis of degree N on the (N+1)-point Gauss-Legendre rule.
///
/// Carries the differentiation matrix and the edge interpolation vectors
/// used to evaluate traces at r = -1 and r = +1.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    pub degree: usize,
    pub rule: QuadratureRule1D,
    /// Barycentric weights of the nodes.
    bary: Vec<f64>,
    /// diff_matrix[i][j] = P'_j(node_i), row-major (N+1)x(N+1).
    pub diff_matrix: Vec<f64>,
    /// edge_left[j] = P_j(-1), edge_right[j] = P_j(+1).
    pub edge_left: Vec<f64>,
    pub edge_right: Vec<f64>,
}

impl NodalBasis {
    pub fn new(degree: usize) -> Result<Self, BasisError> {
        let rule = gauss_legendre(degree + 1)?;
        let n = degree + 1;
        let nodes = &rule.nodes;

        let mut bary = vec![0.0; n];
        for (i, b) in bary.iter_mut().enumerate() {
            let mut w = 1.0;
            for j in 0..n {
                if j != i {
                    w *= nodes[i] - nodes[j];
                }
            }
            *b = 1.0 / w;
        }

        // D[i][j] = bary[j]/bary[i] / (x_i - x_j) for i != j; rows sum to zero.
        let mut diff = vec![0.0; n * n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let d = bary[j] / bary[i] / (nodes[i] - nodes[j]);
                    diff[i * n + j] = d;
                    diag -= d;
                }
            }
            diff[i * n + i] = diag;
        }

        let basis = Self {
            degree,
            rule,
            bary,
            diff_matrix: diff,
            edge_left: Vec::new(),
            edge_right: Vec::new(),
        };
        let edge_left = (0..n).map(|j| basis.lagrange_eval_unchecked(j, -1.0)).collect();
        let edge_right = (0..n).map(|j| basis.lagrange_eval_unchecked(j, 1.0)).collect();
        Ok(Self {
            edge_left,
            edge_right,
            ..basis
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.degree + 1
    }

    /// Value of the i-th cardinal polynomial at x in [-1, 1].
    pub fn lagrange_eval(&self, i: usize, x: f64) -> Result<f64, BasisError> {
        if i > self.degree {
            return Err(BasisError::IndexOutOfRange {
                index: i,
                degree: self.degree,
            });
        }
        Ok(self.lagrange_eval_unchecked(i, x))
    }

    fn lagrange_eval_unchecked(&self, i: usize, x: f64) -> f64 {
        let nodes = &self.rule.nodes;
        // Exact cardinality at the nodes.
        for (j, &xj) in nodes.iter().enumerate() {
            if x == xj {
                return if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut num = 1.0;
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i {
                num *= x - xj;
            }
        }
        num * self.bary[i]
    }

    /// All N+1 cardinal values at x, written into `out`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        let n = self.num_nodes();
        debug_assert_eq!(out.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.lagrange_eval_unchecked(i, x);
        }
    }

    /// Derivative values P'_j(x) for all j, written into `out`.
    pub fn eval_deriv_all(&self, x: f64, out: &mut [f64]) {
        let n = self.num_nodes();
        let nodes = &self.rule.nodes;
        // d/dx prod_{k!=j}(x-x_k) * bary_j = sum_m prod_{k!=j,m}(x-x_k) * bary_j
        for j in 0..n {
            let mut acc = 0.0;
            for m in 0..n {
                if m == j {
                    continue;
                }
                let mut prod = 1.0;
                for (k, &xk) in nodes.iter().enumerate() {
                    if k != j && k != m {
                        prod *= x - xk;
                    }
                }
                acc += prod;
            }
            out[j] = acc * self.bary[j];
        }
    }

    /// Apply the differentiation matrix to nodal values: out_i = sum_j D[i][j] v_j.
    pub fn apply_diff(&self, values: &[f64], out: &mut [f64]) {
        let n = self.num_nodes();
        for i in 0..n {
            let row = &self.diff_matrix[i * n..(i + 1) * n];
            out[i] = row.iter().zip(values).map(|(d, v)| d * v).sum();
        }
    }

    /// Interpolation matrix to arbitrary points: out[k*(N+1)+i] = P_i(pts[k]).
    pub fn interp_matrix(&self, pts: &[f64]) -> Vec<f64> {
        let n = self.num_nodes();
        let mut out = vec![0.0; pts.len() * n];
        for (k, &x) in pts.iter().enumerate() {
            self.eval_all(x, &mut out[k * n..(k + 1) * n]);
        }
        out
    }

    /// Derivative matrix at arbitrary points: out[k*(N+1)+i] = P'_i(pts[k]).
    pub fn deriv_matrix_at(&self, pts: &[f64]) -> Vec<f64> {
        let n = self.num_nodes();
        let mut out = vec![0.0; pts.len() * n];
        for (k, &x) in pts.iter().enumerate() {
            self.eval_deriv_all(x, &mut out[k * n..(k + 1) * n]);
        }
        out
    }
}

/// Shared cache of bases per degree; construction is pure so sharing is safe.
pub fn cached_basis(degree: usize) -> Arc<NodalBasis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NodalBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(degree)
        .or_insert_with(|| Arc::new(NodalBasis::new(degree).expect("degree is valid")))
        .clone()
}
