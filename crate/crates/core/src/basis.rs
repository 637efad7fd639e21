//! Multi-index enumeration and orthonormal polynomial bases: continuous
//! product bases w.r.t. a reference density on [-1,1]^d, and discrete bases
//! orthonormal w.r.t. the normalized empirical measure of a dataset.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;
use nalgebra::DMatrix;

/// Largest per-dimension polynomial degree the recurrence machinery accepts.
/// Past this the quadrature-backed Stieltjes loop is no longer trustworthy
/// in double precision.
pub const MAX_RECURRENCE_DEGREE: usize = 300;

/// Ordered multi-indices in graded lexical order: total degree first, ties
/// broken lexicographically with the first coordinate most significant.
/// Always a downward-closed prefix of that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub indices: Vec<Vec<u32>>,
    pub d: usize,
}

impl MultiIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Largest degree appearing in coordinate `j`.
    pub fn max_degree(&self, j: usize) -> u32 {
        self.indices.iter().map(|k| k[j]).max().unwrap_or(0)
    }
}

/// First `m` multi-indices of dimension `d` in graded lexical order.
pub fn graded_multiindices(d: usize, m: usize) -> MultiIndexSet {
    assert!(d >= 1 && m >= 1);
    let mut indices = Vec::with_capacity(m);
    let mut degree = 0u32;
    'outer: loop {
        let mut buf = vec![0u32; d];
        if !push_compositions(degree, 0, &mut buf, &mut indices, m) {
            break 'outer;
        }
        degree += 1;
    }
    MultiIndexSet { indices, d }
}

// Emits the weak compositions of `remaining` into positions pos..d in
// ascending lexical order; returns false once `m` indices were collected.
fn push_compositions(
    remaining: u32,
    pos: usize,
    buf: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
    m: usize,
) -> bool {
    if out.len() == m {
        return false;
    }
    if pos == buf.len() - 1 {
        buf[pos] = remaining;
        out.push(buf.clone());
        return out.len() < m;
    }
    for head in 0..=remaining {
        buf[pos] = head;
        if !push_compositions(remaining - head, pos + 1, buf, out, m) {
            return false;
        }
    }
    true
}

/// Three-term recurrence for polynomials orthonormal w.r.t. a univariate
/// positive weight on [-1,1]:
///
/// sqrt_b[k+1] * p_{k+1}(x) = (x - a[k]) * p_k(x) - sqrt_b[k] * p_{k-1}(x)
///
/// with p_0 = 1/sqrt_b[0]^... precisely p_0(x) = 1/sqrt(total mass).
#[derive(Debug, Clone)]
pub struct Recurrence1d {
    pub a: Vec<f64>,
    pub sqrt_b: Vec<f64>,
}

impl Recurrence1d {
    pub fn degree_max(&self) -> usize {
        self.a.len()
    }

    /// Evaluate p_0..p_deg at `x` into `out` (length deg+1).
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        let deg = out.len() - 1;
        debug_assert!(deg <= self.degree_max());
        out[0] = 1.0 / self.sqrt_b[0];
        if deg == 0 {
            return;
        }
        let mut prev = 0.0;
        let mut cur = out[0];
        for k in 0..deg {
            let next = ((x - self.a[k]) * cur - self.sqrt_b[k] * prev) / self.sqrt_b[k + 1];
            out[k + 1] = next;
            prev = cur;
            cur = next;
        }
    }
}

/// Stieltjes procedure: recurrence coefficients for the polynomials
/// orthonormal w.r.t. `weight(x) dx` on [-1,1], computed against a
/// Gauss-Legendre rule sized to the requested degree.
pub fn stieltjes_recurrence<F: Fn(f64) -> f64>(
    weight: F,
    degree_max: usize,
) -> Result<Recurrence1d> {
    if degree_max > MAX_RECURRENCE_DEGREE {
        return Err(Error::Instability(format!(
            "degree {degree_max} exceeds the recurrence cap {MAX_RECURRENCE_DEGREE}"
        )));
    }
    let n_nodes = (degree_max + 101).max(200);
    let (nodes, gl_weights) = gauss_legendre(n_nodes);
    let wq: Vec<f64> = nodes
        .iter()
        .zip(&gl_weights)
        .map(|(&x, &w)| w * weight(x))
        .collect();
    if wq.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Instability(
            "weight function is negative or non-finite on the quadrature grid".into(),
        ));
    }
    let mass: f64 = wq.iter().sum();
    if mass <= 0.0 {
        return Err(Error::Instability("weight has zero total mass".into()));
    }

    let mut a = Vec::with_capacity(degree_max);
    let mut sqrt_b = Vec::with_capacity(degree_max + 1);
    sqrt_b.push(mass.sqrt());

    // Monic recurrence on the quadrature grid.
    let mut pi_prev = vec![0.0; n_nodes];
    let mut pi_cur = vec![1.0; n_nodes];
    let mut norm_prev = 0.0f64;
    let mut norm_cur = mass;
    for k in 0..degree_max {
        let ak = nodes
            .iter()
            .zip(&wq)
            .zip(&pi_cur)
            .map(|((&x, &w), &p)| w * x * p * p)
            .sum::<f64>()
            / norm_cur;
        let bk = if k == 0 { 0.0 } else { norm_cur / norm_prev };
        let mut pi_next = vec![0.0; n_nodes];
        for i in 0..n_nodes {
            pi_next[i] = (nodes[i] - ak) * pi_cur[i] - bk * pi_prev[i];
        }
        let norm_next: f64 = wq
            .iter()
            .zip(&pi_next)
            .map(|(&w, &p)| w * p * p)
            .sum();
        if !(norm_next.is_finite() && norm_next > 0.0) {
            return Err(Error::Instability(format!(
                "lost positivity at degree {}",
                k + 1
            )));
        }
        a.push(ak);
        sqrt_b.push((norm_next / norm_cur).sqrt());
        pi_prev = pi_cur;
        pi_cur = pi_next;
        norm_prev = norm_cur;
        norm_cur = norm_next;
    }
    Ok(Recurrence1d { a, sqrt_b })
}

/// Closed-form recurrence for polynomials orthonormal w.r.t. the Beta(a, b)
/// pdf transported to [-1,1]. These are Jacobi-weight coefficients, exact to
/// machine precision at any degree, with the mass normalized to 1 so that
/// p_0 = 1.
pub fn beta_recurrence(alpha: f64, beta: f64, degree_max: usize) -> Result<Recurrence1d> {
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::Instability(format!(
            "beta parameters must be positive, got ({alpha}, {beta})"
        )));
    }
    if degree_max > MAX_RECURRENCE_DEGREE {
        return Err(Error::Instability(format!(
            "degree {degree_max} exceeds the recurrence cap {MAX_RECURRENCE_DEGREE}"
        )));
    }
    // Weight (1-x)^a (1+x)^b with a = beta-1, b = alpha-1.
    let a = beta - 1.0;
    let b = alpha - 1.0;
    let mut rec_a = Vec::with_capacity(degree_max);
    let mut sqrt_b = Vec::with_capacity(degree_max + 1);
    sqrt_b.push(1.0);
    for k in 0..degree_max {
        let kf = k as f64;
        let denom = (2.0 * kf + a + b) * (2.0 * kf + a + b + 2.0);
        let ak = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / denom
        };
        rec_a.push(ak);
        let bk1 = if k == 0 {
            4.0 * (a + 1.0) * (b + 1.0) / ((a + b + 2.0).powi(2) * (a + b + 3.0))
        } else {
            let j = kf + 1.0;
            4.0 * j * (j + a) * (j + b) * (j + a + b)
                / ((2.0 * j + a + b).powi(2) * (2.0 * j + a + b + 1.0) * (2.0 * j + a + b - 1.0))
        };
        sqrt_b.push(bk1.sqrt());
    }
    Ok(Recurrence1d { a: rec_a, sqrt_b })
}

/// An orthonormal basis indexed by a [`MultiIndexSet`].
#[derive(Debug, Clone)]
pub enum OrthoBasis {
    /// Product of univariate orthonormal polynomials, one recurrence per
    /// dimension; orthonormal w.r.t. a product reference density.
    ContinuousProduct { recurrences: Vec<Recurrence1d> },
    /// Basis values on the dataset itself, orthonormal w.r.t. the normalized
    /// empirical measure: (1/n) Q^T Q = I.
    DiscreteGs { values: DMatrix<f64> },
}

impl OrthoBasis {
    /// Serialize to a small CSV dump (kind header + row-major matrix).
    pub fn to_csv(&self) -> String {
        match self {
            OrthoBasis::ContinuousProduct { recurrences } => {
                let mut s = String::from("continuous-product\n");
                for rec in recurrences {
                    s.push_str(&format!("{},{}\n", rec.a.len(), rec.sqrt_b.len()));
                    let fields: Vec<String> = rec
                        .a
                        .iter()
                        .chain(rec.sqrt_b.iter())
                        .map(|v| format!("{v:.17e}"))
                        .collect();
                    s.push_str(&fields.join(","));
                    s.push('\n');
                }
                s
            }
            OrthoBasis::DiscreteGs { values } => {
                let mut s = String::from("discrete-gs\n");
                s.push_str(&format!("{},{}\n", values.nrows(), values.ncols()));
                for i in 0..values.nrows() {
                    let fields: Vec<String> = (0..values.ncols())
                        .map(|j| format!("{:.17e}", values[(i, j)]))
                        .collect();
                    s.push_str(&fields.join(","));
                    s.push('\n');
                }
                s
            }
        }
    }

    pub fn from_csv(text: &str) -> Result<OrthoBasis> {
        let mut lines = text.lines();
        let kind = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty basis dump".into(),
        })?;
        let parse_row = |line: &str, lineno: usize| -> Result<Vec<f64>> {
            line.split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad float {f:?}"),
                    })
                })
                .collect()
        };
        match kind {
            "continuous-product" => {
                let mut recurrences = Vec::new();
                let mut lineno = 1;
                loop {
                    let Some(header) = lines.next() else { break };
                    lineno += 1;
                    let dims = parse_row(header, lineno)?;
                    let (na, nb) = (dims[0] as usize, dims[1] as usize);
                    let row = lines.next().ok_or(Error::Parse {
                        line: lineno,
                        message: "truncated dump".into(),
                    })?;
                    lineno += 1;
                    let vals = parse_row(row, lineno)?;
                    if vals.len() != na + nb {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "coefficient count mismatch".into(),
                        });
                    }
                    recurrences.push(Recurrence1d {
                        a: vals[..na].to_vec(),
                        sqrt_b: vals[na..].to_vec(),
                    });
                }
                Ok(OrthoBasis::ContinuousProduct { recurrences })
            }
            "discrete-gs" => {
                let header = lines.next().ok_or(Error::Parse {
                    line: 2,
                    message: "missing shape header".into(),
                })?;
                let dims = parse_row(header, 2)?;
                let (rows, cols) = (dims[0] as usize, dims[1] as usize);
                let mut values = DMatrix::zeros(rows, cols);
                for i in 0..rows {
                    let line = lines.next().ok_or(Error::Parse {
                        line: 3 + i,
                        message: "truncated matrix".into(),
                    })?;
                    let vals = parse_row(line, 3 + i)?;
                    for j in 0..cols {
                        values[(i, j)] = vals[j];
                    }
                }
                Ok(OrthoBasis::DiscreteGs { values })
            }
            other => Err(Error::Parse {
                line: 1,
                message: format!("unknown basis kind {other:?}"),
            }),
        }
    }
}

/// Feature matrix F with F[i][k] = p_{idx[k]}(x_i).
///
/// For product bases p_k(x) = prod_j p_{j,k_j}(x_j); for discrete bases the
/// stored values are returned (they exist only on the training points).
pub fn eval_feature_matrix(
    basis: &OrthoBasis,
    idx: &MultiIndexSet,
    data: &Dataset,
) -> Result<DMatrix<f64>> {
    let n = data.len();
    let d = data.dim();
    if idx.d != d {
        return Err(Error::Dimension {
            expected: d,
            found: idx.d,
        });
    }
    match basis {
        OrthoBasis::ContinuousProduct { recurrences } => {
            if recurrences.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: recurrences.len(),
                });
            }
            let m = idx.len();
            let max_deg: Vec<usize> = (0..d).map(|j| idx.max_degree(j) as usize).collect();
            let mut f = DMatrix::zeros(n, m);
            let mut tables: Vec<Vec<f64>> = max_deg.iter().map(|&deg| vec![0.0; deg + 1]).collect();
            for i in 0..n {
                for j in 0..d {
                    let x = data.points[(i, j)];
                    if !(-1.0..=1.0).contains(&x) {
                        return Err(Error::Domain(format!(
                            "point {i} coordinate {j} = {x} outside [-1,1]"
                        )));
                    }
                    recurrences[j].eval_all(x, &mut tables[j]);
                }
                for (k, index) in idx.indices.iter().enumerate() {
                    let mut prod = 1.0;
                    for j in 0..d {
                        prod *= tables[j][index[j] as usize];
                    }
                    f[(i, k)] = prod;
                }
            }
            Ok(f)
        }
        OrthoBasis::DiscreteGs { values } => {
            if values.nrows() != n {
                return Err(Error::Dimension {
                    expected: values.nrows(),
                    found: n,
                });
            }
            Ok(values.columns(0, idx.len().min(values.ncols())).into_owned())
        }
    }
}

/// Orthonormalize the graded polynomial family against the normalized
/// empirical measure of the dataset: returns Q (n x m) with (1/n) Q^T Q = I
/// and columns spanning the same space as the monomials of `idx`, taken in
/// graded lexical order.
///
/// The QR runs on a Chebyshev-product Vandermonde matrix: the change of
/// basis from monomials is graded-triangular with positive diagonal, so the
/// orthonormal factor is identical to the monomial one while conditioning
/// stays manageable at high degree.
pub fn discrete_gram_schmidt(data: &Dataset, idx: &MultiIndexSet) -> Result<OrthoBasis> {
    let n = data.len();
    let m = idx.len();
    if m > n {
        return Err(Error::Cardinality {
            requested: m,
            available: n,
        });
    }
    let v = chebyshev_vandermonde(data, idx)?;
    let col_norms: Vec<f64> = (0..m).map(|k| v.column(k).norm()).collect();
    let qr = v.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..m {
        let diag = r[(k, k)];
        if diag.abs() <= 1e-10 * col_norms[k].max(1e-300) {
            return Err(Error::RankDeficient { column: k });
        }
        if diag < 0.0 {
            for i in 0..n {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    let scale = (n as f64).sqrt();
    Ok(OrthoBasis::DiscreteGs { values: q * scale })
}

// Vandermonde-style matrix whose column for multi-index k is
// prod_j T_{k_j}(x_j), Chebyshev polynomials of the first kind.
fn chebyshev_vandermonde(data: &Dataset, idx: &MultiIndexSet) -> Result<DMatrix<f64>> {
    let n = data.len();
    let d = data.dim();
    if idx.d != d {
        return Err(Error::Dimension {
            expected: d,
            found: idx.d,
        });
    }
    let max_deg: Vec<usize> = (0..d).map(|j| idx.max_degree(j) as usize).collect();
    let mut v = DMatrix::zeros(n, idx.len());
    let mut tables: Vec<Vec<f64>> = max_deg.iter().map(|&deg| vec![0.0; deg + 1]).collect();
    for i in 0..n {
        for j in 0..d {
            let x = data.points[(i, j)];
            let t = &mut tables[j];
            t[0] = 1.0;
            if t.len() > 1 {
                t[1] = x;
            }
            for k in 2..t.len() {
                t[k] = 2.0 * x * t[k - 1] - t[k - 2];
            }
        }
        for (k, index) in idx.indices.iter().enumerate() {
            let mut prod = 1.0;
            for j in 0..d {
                prod *= tables[j][index[j] as usize];
            }
            v[(i, k)] = prod;
        }
    }
    Ok(v)
}
