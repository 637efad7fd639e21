//! Correlation-kernel construction: Gaussian L-ensembles, discretized
//! orthogonal-polynomial projection kernels, empirical-measure projection
//! kernels, fixed-size marginals via elementary symmetric polynomials, and
//! oracle-certified non-symmetric kernels.

use crate::basis::{discrete_gram_schmidt, eval_feature_matrix, graded_multiindices, OrthoBasis};
use crate::data::{Dataset, DensityModel};
use crate::error::{Error, Result};
use crate::numerics::symmetric_eigen_desc;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{Read, Write};
use std::path::Path;

/// Symmetry tolerance for hermitian kernels.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Spectrum slack: eigenvalues within this of [0,1] are clipped, beyond it
/// the kernel is rejected.
pub const SPECTRUM_TOL: f64 = 1e-8;

/// Eigenvalue/eigenvector cache. `vectors` holds `r <= n` orthonormal
/// columns; eigenvalues not listed are zero, so `K = V diag(values) V^T`
/// always reconstructs the kernel.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    /// Sorted descending.
    pub values: DVector<f64>,
    /// n x r, orthonormal columns.
    pub vectors: DMatrix<f64>,
}

impl SpectralForm {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = {
            let mut v = self.vectors.clone();
            for (j, &lam) in self.values.iter().enumerate() {
                v.column_mut(j).scale_mut(lam);
            }
            v
        };
        scaled * self.vectors.transpose()
    }
}

/// An n x n correlation kernel over a finite ground set, background counting
/// measure. Marginals are principal minors: P(T in S) = det K_T.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub hermitian: bool,
    pub projection: bool,
    pub spectrum: Option<SpectralForm>,
    /// Projection rank when known.
    pub rank: Option<usize>,
    /// Set when a projection kernel could not reach the requested rank:
    /// (requested, achieved).
    pub rank_warning: Option<(usize, usize)>,
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Inclusion probability of point `i`.
    pub fn marginal(&self, i: usize) -> f64 {
        self.entries[(i, i)]
    }

    /// Spectral decomposition, computing and caching it on a copy if absent.
    pub fn spectrum(&self) -> SpectralForm {
        if let Some(s) = &self.spectrum {
            return s.clone();
        }
        assert!(self.hermitian, "only hermitian kernels are diagonalized");
        let (values, vectors) = symmetric_eigen_desc(&self.entries);
        SpectralForm { values, vectors }
    }

    /// Row-major binary dump: four little-endian u64 header fields
    /// (n, hermitian, projection, rank) followed by n*n f64 entries.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let n = self.n() as u64;
        let rank = self.rank.map_or(u64::MAX, |r| r as u64);
        for field in [n, self.hermitian as u64, self.projection as u64, rank] {
            f.write_all(&field.to_le_bytes())?;
        }
        for i in 0..self.n() {
            for j in 0..self.n() {
                f.write_all(&self.entries[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<KernelMatrix> {
        let mut f = std::fs::File::open(path)?;
        let mut buf8 = [0u8; 8];
        let mut header = [0u64; 4];
        for h in &mut header {
            f.read_exact(&mut buf8)?;
            *h = u64::from_le_bytes(buf8);
        }
        let n = header[0] as usize;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                f.read_exact(&mut buf8)?;
                entries[(i, j)] = f64::from_le_bytes(buf8);
            }
        }
        Ok(KernelMatrix {
            entries,
            hermitian: header[1] != 0,
            projection: header[2] != 0,
            spectrum: None,
            rank: (header[3] != u64::MAX).then_some(header[3] as usize),
            rank_warning: None,
        })
    }
}

/// Gaussian likelihood matrix L_ij = exp(-|x_i - x_j|^2 / (2 h^2)).
pub fn gaussian_lensemble(data: &Dataset, h: f64) -> DMatrix<f64> {
    assert!(h > 0.0);
    let n = data.len();
    let inv = 1.0 / (2.0 * h * h);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = 1.0;
        let xi = data.points.row(i);
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for (a, b) in xi.iter().zip(data.points.row(j).iter()) {
                d2 += (a - b) * (a - b);
            }
            let v = (-d2 * inv).exp();
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    l
}

/// Correlation kernel of the L-ensemble: K = L (I + L)^{-1}, computed through
/// the eigendecomposition of L so the spectrum comes out for free.
pub fn lensemble_to_correlation(l: &DMatrix<f64>) -> Result<KernelMatrix> {
    let asym = (l - l.transpose()).abs().max();
    if asym >= SYMMETRY_TOL {
        return Err(Error::Admissibility(format!(
            "likelihood matrix is not symmetric (max deviation {asym:.3e})"
        )));
    }
    let (mut values, vectors) = symmetric_eigen_desc(l);
    for lam in values.iter_mut() {
        if *lam < -SPECTRUM_TOL {
            return Err(Error::Admissibility(format!(
                "likelihood matrix has negative eigenvalue {lam:.3e}"
            )));
        }
        *lam = lam.max(0.0) / (1.0 + lam.max(0.0));
    }
    let spectrum = SpectralForm {
        values: values.clone(),
        vectors: vectors.clone(),
    };
    let entries = spectrum.reconstruct();
    Ok(KernelMatrix {
        entries,
        hermitian: true,
        projection: false,
        spectrum: Some(spectrum),
        rank: None,
        rank_warning: None,
    })
}

/// Rank-m projection kernel from a continuous product basis, reweighted by
/// sqrt(q/gamma) and discretized on the dataset: the thresholding of the
/// reweighted kernel is done through a reduced SVD of the n x m feature
/// matrix, and the returned entries carry the counting-measure
/// normalization, so trace = rank.
pub fn build_discretized_ope_kernel(
    data: &Dataset,
    q: &DensityModel,
    gamma: &DensityModel,
    m: usize,
) -> Result<KernelMatrix> {
    let n = data.len();
    let d = data.dim();
    if m > n {
        return Err(Error::Cardinality {
            requested: m,
            available: n,
        });
    }
    let idx = graded_multiindices(d, m);
    // Beta-product references get exact closed-form coefficients; anything
    // else goes through the quadrature-backed procedure on its marginals.
    let recurrences = (0..d)
        .map(|j| {
            let deg = idx.max_degree(j) as usize;
            match q {
                DensityModel::BetaProduct { params, .. } => {
                    crate::basis::beta_recurrence(params[j].0, params[j].1, deg)
                }
                _ => {
                    let marginal = q.marginal(j);
                    crate::basis::stieltjes_recurrence(move |x| marginal(x), deg)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let basis = OrthoBasis::ContinuousProduct { recurrences };
    let mut f = eval_feature_matrix(&basis, &idx, data)?;
    for i in 0..n {
        let x = data.point(i);
        let gx = gamma.eval(&x);
        if gx <= 0.0 {
            return Err(Error::Domain(format!(
                "density estimate vanishes at point {i}"
            )));
        }
        let scale = (q.eval(&x) / gx).sqrt();
        for k in 0..m {
            f[(i, k)] *= scale;
        }
    }
    projection_from_columns(f, m)
}

// Orthonormalize the column space of `f` (n x m) through a reduced SVD and
// return the projection onto it. Rank below `m` is recorded, not fatal.
fn projection_from_columns(f: DMatrix<f64>, m: usize) -> Result<KernelMatrix> {
    let n = f.nrows();
    let svd = f.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let smax = svd.singular_values[order[0]].max(f64::MIN_POSITIVE);
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > 1e-12 * smax)
        .count()
        .min(m);
    let mut vectors = DMatrix::zeros(n, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        vectors.set_column(dst, &u.column(src));
    }
    let spectrum = SpectralForm {
        values: DVector::from_element(rank, 1.0),
        vectors,
    };
    let entries = spectrum.reconstruct();
    Ok(KernelMatrix {
        entries,
        hermitian: true,
        projection: true,
        spectrum: Some(spectrum),
        rank: Some(rank),
        rank_warning: (rank < m).then_some((m, rank)),
    })
}

/// Rank-m projection kernel orthonormal against the empirical measure:
/// K = (1/n) Q Q^T with Q from [`discrete_gram_schmidt`]. When the dataset
/// cannot support all m polynomials, the achievable rank is used and the
/// shortfall recorded.
pub fn vdm_projection_kernel(data: &Dataset, m: usize) -> Result<KernelMatrix> {
    let n = data.len();
    if m > n {
        return Err(Error::Cardinality {
            requested: m,
            available: n,
        });
    }
    let mut take = m;
    loop {
        let idx = graded_multiindices(data.dim(), take);
        match discrete_gram_schmidt(data, &idx) {
            Ok(OrthoBasis::DiscreteGs { values }) => {
                let scale = 1.0 / (n as f64).sqrt();
                let vectors = values * scale;
                let spectrum = SpectralForm {
                    values: DVector::from_element(take, 1.0),
                    vectors,
                };
                let entries = spectrum.reconstruct();
                return Ok(KernelMatrix {
                    entries,
                    hermitian: true,
                    projection: true,
                    spectrum: Some(spectrum),
                    rank: Some(take),
                    rank_warning: (take < m).then_some((m, take)),
                });
            }
            Ok(_) => unreachable!(),
            Err(Error::RankDeficient { column }) if column > 0 => {
                take = column;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Elementary symmetric polynomials e_0..e_k of `lambda` via the column
/// recurrence e_k^(j) = e_k^(j-1) + lambda_j e_{k-1}^(j-1).
pub fn elementary_symmetric(lambda: &[f64], k_max: usize) -> Vec<f64> {
    assert!(k_max <= lambda.len());
    let mut e = vec![0.0; k_max + 1];
    e[0] = 1.0;
    for (j, &lam) in lambda.iter().enumerate() {
        let top = k_max.min(j + 1);
        for k in (1..=top).rev() {
            e[k] += lam * e[k - 1];
        }
    }
    e
}

/// Nonnegative float with an extended binary exponent. Elementary symmetric
/// polynomials of hundreds of eigenvalues spanning many orders of magnitude
/// overflow or underflow f64 even after rescaling by the largest eigenvalue;
/// every quantity we consume is a ratio of such terms, so the recurrences
/// run on (mantissa, exponent) pairs and only the final ratios collapse
/// back to f64.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExtFloat {
    mantissa: f64,
    exp2: i64,
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat {
        mantissa: 0.0,
        exp2: 0,
    };
    pub const ONE: ExtFloat = ExtFloat {
        mantissa: 1.0,
        exp2: 0,
    };

    fn normalize(mut self) -> ExtFloat {
        if self.mantissa == 0.0 {
            return ExtFloat::ZERO;
        }
        if !(1e-150..=1e150).contains(&self.mantissa) {
            let shift = self.mantissa.log2().floor() as i64;
            self.mantissa *= (2.0f64).powi(-shift as i32);
            self.exp2 += shift;
        }
        self
    }

    pub fn scale(self, x: f64) -> ExtFloat {
        ExtFloat {
            mantissa: self.mantissa * x,
            exp2: self.exp2,
        }
        .normalize()
    }

    pub fn add(self, other: ExtFloat) -> ExtFloat {
        if self.mantissa == 0.0 {
            return other;
        }
        if other.mantissa == 0.0 {
            return self;
        }
        // rescale the smaller term onto the larger so nothing overflows
        let (big, small) = if self.exp2 >= other.exp2 {
            (self, other)
        } else {
            (other, self)
        };
        let diff = big.exp2 - small.exp2;
        if diff > 1100 {
            return big;
        }
        ExtFloat {
            mantissa: big.mantissa + small.mantissa * (2.0f64).powi(-(diff as i32)),
            exp2: big.exp2,
        }
        .normalize()
    }

    pub fn mul(self, other: ExtFloat) -> ExtFloat {
        ExtFloat {
            mantissa: self.mantissa * other.mantissa,
            exp2: self.exp2 + other.exp2,
        }
        .normalize()
    }

    /// self / other as f64; 0/0 yields 0.
    pub fn ratio(self, other: ExtFloat) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        (self.mantissa / other.mantissa) * (2.0f64).powi((self.exp2 - other.exp2) as i32)
    }
}

/// Prefix table E[k][j] = e_k(lambda_1..lambda_j) for k <= k_max, laid out
/// row-major as E[k * (n+1) + j]. Used by the fixed-size sampler, whose
/// selection probabilities are ratios of adjacent entries.
pub(crate) fn esp_prefix_table(lambda: &[f64], k_max: usize) -> Vec<ExtFloat> {
    let n = lambda.len();
    let mut table = vec![ExtFloat::ZERO; (k_max + 1) * (n + 1)];
    for j in 0..=n {
        table[j] = ExtFloat::ONE;
    }
    for k in 1..=k_max {
        for j in 1..=n {
            table[k * (n + 1) + j] = table[k * (n + 1) + j - 1]
                .add(table[(k - 1) * (n + 1) + j - 1].scale(lambda[j - 1]));
        }
    }
    table
}

// Suffix table S[k][j] = e_k(lambda_j..lambda_n), j in 0..=n+1 (row-major
// width n + 2); S[k][n+1] is the empty-set column.
fn esp_suffix_table(lambda: &[f64], k_max: usize) -> Vec<ExtFloat> {
    let n = lambda.len();
    let width = n + 2;
    let mut table = vec![ExtFloat::ZERO; (k_max + 1) * width];
    for j in 0..width {
        table[j] = ExtFloat::ONE;
    }
    for k in 1..=k_max {
        for j in (1..=n).rev() {
            table[k * width + j] =
                table[k * width + j + 1].add(table[(k - 1) * width + j + 1].scale(lambda[j - 1]));
        }
    }
    table
}

/// Exact inclusion probabilities of the size-m process obtained by
/// conditioning the L-ensemble on cardinality m:
///
/// P(x_i in S) = sum_r [lambda_r e_{m-1}(lambda_{-r}) / e_m(lambda)] v_r(i)^2.
///
/// The deflated values come from prefix/suffix elementary-symmetric tables
/// (e_{m-1} of the spectrum without mode r splits over the two sides), in
/// extended-exponent arithmetic so only well-scaled ratios reach f64.
pub fn mdpp_marginals(l_spectrum: &SpectralForm, m: usize) -> Result<DVector<f64>> {
    let lambda: Vec<f64> = l_spectrum.values.iter().copied().collect();
    let positive = lambda.iter().filter(|&&l| l > 0.0).count();
    if m > positive {
        return Err(Error::Cardinality {
            requested: m,
            available: positive,
        });
    }
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    let scaled: Vec<f64> = lambda.iter().map(|&l| (l / lmax).max(0.0)).collect();
    let r_modes = scaled.len();
    let prefix = esp_prefix_table(&scaled, m);
    let suffix = esp_suffix_table(&scaled, m);
    let pw = r_modes + 1;
    let sw = r_modes + 2;
    let em = prefix[m * pw + r_modes];
    let mut coef = vec![0.0; r_modes];
    for r in 0..r_modes {
        if scaled[r] == 0.0 {
            continue;
        }
        // e_{m-1}(lambda without r) = sum_a e_a(prefix) e_{m-1-a}(suffix)
        let mut deflated = ExtFloat::ZERO;
        for a in 0..m {
            deflated = deflated.add(prefix[a * pw + r].mul(suffix[(m - 1 - a) * sw + r + 2]));
        }
        coef[r] = deflated.scale(scaled[r]).ratio(em).clamp(0.0, f64::MAX);
    }
    let n = l_spectrum.vectors.nrows();
    let mut marginals = DVector::zeros(n);
    for i in 0..n {
        let mut p = 0.0;
        for (r, &c) in coef.iter().enumerate() {
            if c > 0.0 {
                let v = l_spectrum.vectors[(i, r)];
                p += c * v * v;
            }
        }
        marginals[i] = p.clamp(0.0, 1.0);
    }
    Ok(marginals)
}

/// Operator and nuclear norms of a kernel, from its singular values.
#[derive(Debug, Clone, Copy)]
pub struct KernelNorms {
    pub operator: f64,
    pub nuclear: f64,
}

pub fn kernel_norms(k: &DMatrix<f64>) -> KernelNorms {
    let svd = k.clone().svd(false, false);
    let operator = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let nuclear = svd.singular_values.iter().sum();
    KernelNorms { operator, nuclear }
}

/// Correlation kernel with a genuinely non-symmetric likelihood:
/// L = G G^T / n + tau (H - H^T)/2 with standard normal G, H, and
/// K = L (I + L)^{-1}. Validity is certified post hoc by the exact
/// distribution oracle; a negative atom rejects the draw.
pub fn build_nonsymmetric_kernel(
    n: usize,
    tau: f64,
    seed: u64,
) -> Result<(KernelMatrix, KernelNorms)> {
    if n > crate::concentration::MAX_ORACLE_SIZE {
        return Err(Error::Cardinality {
            requested: n,
            available: crate::concentration::MAX_ORACLE_SIZE,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
    let h = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
    let sym = &g * g.transpose() / n as f64;
    let skew = (&h - h.transpose()) * (0.5 * tau);
    let l = sym + skew;
    let i_plus_l = DMatrix::identity(n, n) + &l;
    let inv = i_plus_l
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidKernel("I + L is singular".into()))?;
    let entries = l * inv;
    let norms = kernel_norms(&entries);
    let kernel = KernelMatrix {
        entries,
        hermitian: false,
        projection: false,
        spectrum: None,
        rank: None,
        rank_warning: None,
    };
    // Certification: every subset must carry nonnegative mass.
    crate::concentration::exact_distribution(&kernel)?;
    Ok((kernel, norms))
}

/// Random PSD matrix G G^T * scale / n with standard normal G.
pub fn random_psd_matrix(n: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
    &g * g.transpose() * (scale / n as f64)
}

/// Random hermitian kernel with spectrum drawn uniformly in [0.05, 0.95]
/// and a random orthonormal eigenbasis; always admissible.
pub fn random_admissible_kernel(n: usize, seed: u64) -> KernelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng));
    let (_, vectors) = symmetric_eigen_desc(&(&g + g.transpose()));
    let mut values = DVector::zeros(n);
    for v in values.iter_mut() {
        *v = rand::Rng::random::<f64>(&mut rng) * 0.9 + 0.05;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let spectrum = SpectralForm { values, vectors };
    KernelMatrix {
        entries: spectrum.reconstruct(),
        hermitian: true,
        projection: false,
        spectrum: Some(spectrum),
        rank: None,
        rank_warning: None,
    }
}

/// Random rank-r projection kernel: K = V V^T with V from the QR of a
/// Gaussian matrix.
pub fn random_projection_kernel(n: usize, rank: usize, seed: u64) -> KernelMatrix {
    assert!(rank >= 1 && rank <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g = DMatrix::from_fn(n, rank, |_, _| normal.sample(&mut rng));
    let qr = g.qr();
    let vectors = qr.q();
    let spectrum = SpectralForm {
        values: DVector::from_element(rank, 1.0),
        vectors,
    };
    KernelMatrix {
        entries: spectrum.reconstruct(),
        hermitian: true,
        projection: true,
        spectrum: Some(spectrum),
        rank: Some(rank),
        rank_warning: None,
    }
}

/// Check the admissibility invariants of a hermitian kernel: symmetry and
/// spectrum inside [0,1] up to tolerance.
pub fn check_hermitian_admissible(k: &KernelMatrix) -> Result<()> {
    let asym = (&k.entries - k.entries.transpose()).abs().max();
    if asym >= SYMMETRY_TOL {
        return Err(Error::Admissibility(format!(
            "kernel not symmetric: {asym:.3e}"
        )));
    }
    let spectrum = k.spectrum();
    for &lam in spectrum.values.iter() {
        if !( -SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(&lam) {
            return Err(Error::Admissibility(format!(
                "eigenvalue {lam} outside [0,1]"
            )));
        }
    }
    Ok(())
}
