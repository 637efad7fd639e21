//! Exact small-n distribution oracle for determinantal processes, matrix
//! identities for moments/cumulants/Laplace transforms of linear
//! statistics, tail-bound calculators, and the randomized batteries that
//! validate them.

mod bounds;
pub use bounds::*;
mod battery;
pub use battery::*;

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use nalgebra::{DMatrix, DVector};

/// Largest ground-set size the exhaustive oracle accepts (2^12 atoms).
pub const MAX_ORACLE_SIZE: usize = 12;

/// Exact probability table over all 2^n subsets, indexed by bitmask.
#[derive(Debug, Clone)]
pub struct SubsetDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

/// Invert the marginal identity P(T subset of S) = det K_T by
/// inclusion-exclusion: P(S = T) = sum_{U >= T} (-1)^{|U \ T|} det K_U.
/// Works for non-symmetric kernels; validity is certified by nonnegativity
/// of every atom (within -1e-10 of roundoff, clipped and renormalized).
pub fn exact_distribution(kernel: &KernelMatrix) -> Result<SubsetDistribution> {
    let n = kernel.n();
    if n > MAX_ORACLE_SIZE {
        return Err(Error::Cardinality {
            requested: n,
            available: MAX_ORACLE_SIZE,
        });
    }
    let size = 1usize << n;
    let mut probs = vec![0.0; size];
    let mut index_buf = Vec::with_capacity(n);
    for (mask, slot) in probs.iter_mut().enumerate() {
        index_buf.clear();
        for i in 0..n {
            if mask >> i & 1 == 1 {
                index_buf.push(i);
            }
        }
        *slot = principal_minor(&kernel.entries, &index_buf);
    }
    // Signed superset transform, one bit at a time.
    for bit in 0..n {
        let b = 1usize << bit;
        for mask in 0..size {
            if mask & b == 0 {
                probs[mask] -= probs[mask | b];
            }
        }
    }
    let mut total = 0.0;
    for p in probs.iter_mut() {
        if *p < -1e-10 {
            return Err(Error::InvalidKernel(format!(
                "negative subset mass {p:.3e}"
            )));
        }
        *p = p.max(0.0);
        total += *p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidKernel(format!(
            "subset masses sum to {total}"
        )));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(SubsetDistribution { n, probs })
}

fn principal_minor(k: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        1 => k[(idx[0], idx[0])],
        2 => {
            k[(idx[0], idx[0])] * k[(idx[1], idx[1])] - k[(idx[0], idx[1])] * k[(idx[1], idx[0])]
        }
        _ => k.select_rows(idx).select_columns(idx).determinant(),
    }
}

impl SubsetDistribution {
    /// P(T subset of S) recomputed from the table.
    pub fn inclusion_probability(&self, t: &[usize]) -> f64 {
        let tmask: usize = t.iter().map(|&i| 1usize << i).sum();
        self.probs
            .iter()
            .enumerate()
            .filter(|&(mask, _)| mask & tmask == tmask)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Values of the linear statistic sum_{i in T} phi_i for every subset.
    pub fn linstat_values(&self, phi: &[f64]) -> Vec<f64> {
        let size = 1usize << self.n;
        let mut lam = vec![0.0; size];
        for mask in 1..size {
            let low = mask.trailing_zeros() as usize;
            lam[mask] = lam[mask & (mask - 1)] + phi[low];
        }
        lam
    }

    /// Raw mean of a linear statistic.
    pub fn linstat_mean(&self, phi: &[f64]) -> f64 {
        let lam = self.linstat_values(phi);
        lam.iter().zip(&self.probs).map(|(&l, &p)| l * p).sum()
    }

    /// Central moment of order `order` of a linear statistic.
    pub fn linstat_central_moment(&self, phi: &[f64], order: u32) -> f64 {
        let lam = self.linstat_values(phi);
        let mean = lam.iter().zip(&self.probs).map(|(&l, &p)| l * p).sum::<f64>();
        lam.iter()
            .zip(&self.probs)
            .map(|(&l, &p)| (l - mean).powi(order as i32) * p)
            .sum()
    }

    /// Cumulant of order 1..4 from the raw central moments.
    pub fn linstat_cumulant(&self, phi: &[f64], order: u32) -> f64 {
        match order {
            1 => self.linstat_mean(phi),
            2 => self.linstat_central_moment(phi, 2),
            3 => self.linstat_central_moment(phi, 3),
            4 => {
                let m2 = self.linstat_central_moment(phi, 2);
                self.linstat_central_moment(phi, 4) - 3.0 * m2 * m2
            }
            _ => panic!("oracle cumulants implemented for orders 1..4"),
        }
    }

    /// Moment generating function E[e^{t Lambda}].
    pub fn linstat_mgf(&self, phi: &[f64], t: f64) -> f64 {
        let lam = self.linstat_values(phi);
        lam.iter()
            .zip(&self.probs)
            .map(|(&l, &p)| p * (t * l).exp())
            .sum()
    }

    /// Exact two-sided tail P(|Lambda - E Lambda| >= eps).
    pub fn linstat_two_sided_tail(&self, phi: &[f64], eps: f64) -> f64 {
        let lam = self.linstat_values(phi);
        let mean = lam.iter().zip(&self.probs).map(|(&l, &p)| l * p).sum::<f64>();
        lam.iter()
            .zip(&self.probs)
            .filter(|&(&l, _)| (l - mean).abs() >= eps)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Exact law of the cardinality |S|.
    pub fn cardinality_law(&self) -> Vec<f64> {
        let mut law = vec![0.0; self.n + 1];
        for (mask, &p) in self.probs.iter().enumerate() {
            law[mask.count_ones() as usize] += p;
        }
        law
    }
}

/// Mean and variance of a linear statistic from the matrix identities
/// mean = Tr[Phi K] and var = Tr[Phi^2 K] - Tr[Phi K Phi K]
/// (the latter equals Tr[Phi (I - K) Phi K] for any square K).
pub fn linstat_moments(kernel: &KernelMatrix, phi: &[f64]) -> (f64, f64) {
    let n = kernel.n();
    assert_eq!(phi.len(), n);
    let k = &kernel.entries;
    let mut mean = 0.0;
    let mut tr_phi2_k = 0.0;
    for i in 0..n {
        mean += phi[i] * k[(i, i)];
        tr_phi2_k += phi[i] * phi[i] * k[(i, i)];
    }
    let mut tr_kphikphi = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr_kphikphi += phi[i] * k[(i, j)] * phi[j] * k[(j, i)];
        }
    }
    (mean, tr_phi2_k - tr_kphikphi)
}

/// Moments computed from an exact subset table instead of the kernel.
pub fn linstat_moments_from_distribution(dist: &SubsetDistribution, phi: &[f64]) -> (f64, f64) {
    (dist.linstat_mean(phi), dist.linstat_central_moment(phi, 2))
}

/// Cumulant of the linear statistic by the composition-sum trace formula:
///
/// C_k = sum_{q=1}^k ((-1)^{q+1}/q) sum_{k_1+..+k_q=k, k_j>=1}
///       (k!/(k_1!..k_q!)) Tr[Phi^{k_1} K .. Phi^{k_q} K].
pub fn cumulant(kernel: &KernelMatrix, phi: &[f64], order: usize) -> f64 {
    assert!((1..=5).contains(&order), "orders 1..5 supported");
    let n = kernel.n();
    // powers[p] = Phi^{p+1} K
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(order);
    for p in 1..=order {
        let mut m = kernel.entries.clone();
        for i in 0..n {
            let f = phi[i].powi(p as i32);
            for j in 0..n {
                m[(i, j)] *= f;
            }
        }
        powers.push(m);
    }
    let mut total = 0.0;
    let mut composition = Vec::new();
    compose(order, &mut composition, &mut |parts: &[usize]| {
        let q = parts.len();
        let sign = if q % 2 == 1 { 1.0 } else { -1.0 };
        let mut coeff = factorial(order);
        for &p in parts {
            coeff /= factorial(p);
        }
        let mut prod = powers[parts[0] - 1].clone();
        for &p in &parts[1..] {
            prod *= &powers[p - 1];
        }
        total += sign / q as f64 * coeff * prod.trace();
    });
    total
}

fn compose(remaining: usize, acc: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if remaining == 0 {
        visit(acc);
        return;
    }
    for part in 1..=remaining {
        acc.push(part);
        compose(remaining - part, acc, visit);
        acc.pop();
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Laplace transform of the linear statistic:
/// E[e^{t Lambda}] = det(I - (I - e^{t Phi}) K).
pub fn laplace_transform(kernel: &KernelMatrix, phi: &[f64], t: f64) -> f64 {
    let n = kernel.n();
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        let g = 1.0 - (t * phi[i]).exp();
        for j in 0..n {
            m[(i, j)] -= g * kernel.entries[(i, j)];
        }
    }
    m.determinant()
}

/// Law of |S| from the kernel eigenvalues: the cardinality is distributed
/// as a sum of independent Bernoulli(lambda_i), computed by convolution.
pub fn cardinality_law_from_eigenvalues(lambdas: &DVector<f64>) -> Vec<f64> {
    let mut law = vec![1.0];
    for &lam in lambdas.iter() {
        let lam = lam.clamp(0.0, 1.0);
        let mut next = vec![0.0; law.len() + 1];
        for (c, &p) in law.iter().enumerate() {
            next[c] += p * (1.0 - lam);
            next[c + 1] += p * lam;
        }
        law = next;
    }
    law
}

/// Symmetric PSD square root through the spectral decomposition, eigenvalues
/// clipped at zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = crate::numerics::symmetric_eigen_desc(m);
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam.max(0.0).sqrt());
    }
    scaled * vectors.transpose()
}

/// Left and right sides of the Hilbert-Schmidt power inequality
/// |sqrt(I-K) Phi^k sqrt(K)|_HS <= k |phi|_inf^{k-1} |sqrt(I-K) Phi sqrt(K)|_HS.
pub fn hs_power_inequality(kernel: &KernelMatrix, phi: &[f64], k: u32) -> (f64, f64) {
    let n = kernel.n();
    let eye = DMatrix::identity(n, n);
    let sk = sqrt_psd(&kernel.entries);
    let sik = sqrt_psd(&(eye - &kernel.entries));
    let hs = |power: i32| -> f64 {
        let mut m = sik.clone();
        for j in 0..n {
            let f = phi[j].powi(power);
            m.column_mut(j).scale_mut(f);
        }
        (m * &sk).norm()
    };
    let sup = phi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let lhs = hs(k as i32);
    let rhs = k as f64 * sup.powi(k as i32 - 1) * hs(1);
    (lhs, rhs)
}
