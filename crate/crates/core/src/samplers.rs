//! Coreset samplers: exact determinantal sampling through the two-phase
//! spectral method, fixed-size determinantal sampling, and the independent
//! baselines (uniform, sensitivity, stratified). Every sampler is a pure
//! function of (inputs, seed).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{esp_prefix_table, mdpp_marginals, KernelMatrix, SpectralForm};
use crate::numerics::cumsum_invert;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A sampled index set with inclusion weights omega = 1 / P(x in S).
#[derive(Debug, Clone)]
pub struct Coreset {
    /// Sorted distinct dataset indices.
    pub indices: Vec<usize>,
    /// Positive weights, parallel to `indices`.
    pub weights: Vec<f64>,
    pub sampler: String,
    pub seed: u64,
}

impl Coreset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// CSV dump: comment header carrying sampler tag, seed and size, then
    /// (index, weight) rows.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# sampler={} seed={} m={}\nindex,weight\n",
            self.sampler,
            self.seed,
            self.len()
        );
        for (i, w) in self.indices.iter().zip(&self.weights) {
            s.push_str(&format!("{i},{w:.17e}\n"));
        }
        s
    }

    fn from_parts(mut picked: Vec<(usize, f64)>, sampler: &str, seed: u64) -> Coreset {
        picked.sort_unstable_by_key(|&(i, _)| i);
        Coreset {
            indices: picked.iter().map(|&(i, _)| i).collect(),
            weights: picked.iter().map(|&(_, w)| w).collect(),
            sampler: sampler.to_string(),
            seed,
        }
    }
}

/// Sequential conditional sampling of the projection process K = V V^T from
/// orthonormal columns V. Each step draws a point from the residual
/// diagonal by cumulative-sum inversion (ties to the lowest index), then
/// extends the Gram-Schmidt factor of the selected columns and downdates
/// the residuals. A second orthogonalization pass guards steps whose
/// conditional mass nearly vanished.
pub fn sample_projection(vectors: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = vectors.nrows();
    let r = vectors.ncols();
    if r == 0 {
        return Vec::new();
    }
    let mut cond = DMatrix::<f64>::zeros(n, r);
    let mut resid: Vec<f64> = (0..n).map(|i| vectors.row(i).norm_squared()).collect();
    let mut sample = Vec::with_capacity(r);
    for t in 0..r {
        let total: f64 = resid.iter().sum();
        let u = rng.random::<f64>() * total;
        let j = cumsum_invert(&resid, u);
        sample.push(j);
        let pj = resid[j];
        let vj = vectors.row(j).transpose();
        let mut col = vectors * vj;
        if t > 0 {
            let prev = cond.columns(0, t);
            let coeffs = prev.transpose() * &col;
            col -= prev * &coeffs;
            if pj < 1e-10 {
                // residual nearly vanished: re-orthogonalize once more
                let coeffs = prev.transpose() * &col;
                col -= prev * coeffs;
            }
        }
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        for i in 0..n {
            let c = col[i];
            resid[i] = (resid[i] - c * c).max(0.0);
        }
        for &s in &sample {
            resid[s] = 0.0;
        }
        cond.set_column(t, &col);
    }
    sample
}

/// Exact sample of the determinantal process with hermitian kernel K:
/// phase one keeps eigenvector r independently with probability lambda_r,
/// phase two samples the induced projection process. Weights are 1/K_ii.
pub fn sample_dpp(kernel: &KernelMatrix, seed: u64) -> Result<Coreset> {
    if !kernel.hermitian {
        return Err(Error::Admissibility(
            "spectral sampling needs a hermitian kernel".into(),
        ));
    }
    let spectrum = kernel.spectrum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (r, &lam) in spectrum.values.iter().enumerate() {
        if rng.random::<f64>() < lam.clamp(0.0, 1.0) {
            keep.push(r);
        }
    }
    let mut selected = DMatrix::zeros(kernel.n(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        selected.set_column(dst, &spectrum.vectors.column(src));
    }
    let picked = sample_projection(&selected, &mut rng)
        .into_iter()
        .map(|i| (i, 1.0 / kernel.marginal(i)))
        .collect();
    Ok(Coreset::from_parts(picked, "dpp", seed))
}

/// Fixed-size determinantal sampler prepared from the spectrum of a
/// likelihood matrix L: mode selection uses the elementary-symmetric prefix
/// table, inclusion weights come from the exact size-m marginals.
pub struct MdppSampler {
    spectrum: SpectralForm,
    m: usize,
    scaled: Vec<f64>,
    esp: Vec<crate::kernels::ExtFloat>,
    /// Exact inclusion probabilities of the size-m process.
    pub marginals: DVector<f64>,
}

impl MdppSampler {
    pub fn new(l_spectrum: SpectralForm, m: usize) -> Result<Self> {
        let positive = l_spectrum.values.iter().filter(|&&l| l > 0.0).count();
        if m > positive {
            return Err(Error::Cardinality {
                requested: m,
                available: positive,
            });
        }
        let lmax = l_spectrum.values.iter().cloned().fold(0.0, f64::max);
        let scaled: Vec<f64> = l_spectrum
            .values
            .iter()
            .map(|&l| (l / lmax).max(0.0))
            .collect();
        let esp = esp_prefix_table(&scaled, m);
        let marginals = mdpp_marginals(&l_spectrum, m)?;
        Ok(MdppSampler {
            spectrum: l_spectrum,
            m,
            scaled,
            esp,
            marginals,
        })
    }

    pub fn sample(&self, seed: u64) -> Coreset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_modes = self.scaled.len();
        let width = n_modes + 1;
        let mut keep = Vec::with_capacity(self.m);
        let mut k = self.m;
        for j in (1..=n_modes).rev() {
            if k == 0 {
                break;
            }
            // P(mode j-1 selected | k of the first j still needed)
            let p = self.esp[(k - 1) * width + (j - 1)]
                .scale(self.scaled[j - 1])
                .ratio(self.esp[k * width + j]);
            if rng.random::<f64>() < p {
                keep.push(j - 1);
                k -= 1;
            }
        }
        debug_assert_eq!(keep.len(), self.m);
        let mut selected = DMatrix::zeros(self.spectrum.vectors.nrows(), keep.len());
        for (dst, &src) in keep.iter().enumerate() {
            selected.set_column(dst, &self.spectrum.vectors.column(src));
        }
        let picked = sample_projection(&selected, &mut rng)
            .into_iter()
            .map(|i| (i, 1.0 / self.marginals[i]))
            .collect();
        Coreset::from_parts(picked, "mdpp", seed)
    }
}

/// One-shot fixed-size determinantal draw; prefer [`MdppSampler`] when many
/// draws share a spectrum.
pub fn sample_mdpp(l_spectrum: &SpectralForm, m: usize, seed: u64) -> Result<Coreset> {
    Ok(MdppSampler::new(l_spectrum.clone(), m)?.sample(seed))
}

/// Uniform m-subset without replacement; weights n/m.
pub fn sample_iid_uniform(data: &Dataset, m: usize, seed: u64) -> Result<Coreset> {
    let n = data.len();
    if m > n {
        return Err(Error::Cardinality {
            requested: m,
            available: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.random_range(0..n - i);
        idx.swap(i, j);
    }
    let w = n as f64 / m as f64;
    let picked = idx[..m].iter().map(|&i| (i, w)).collect();
    Ok(Coreset::from_parts(picked, "uniform", seed))
}

/// Importance distribution of the sensitivity sampler: half uniform, half
/// proportional to the squared distance to the bicriteria centers.
pub fn sensitivity_distribution(data: &Dataset, centers: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let costs: Vec<f64> = (0..n)
        .map(|i| {
            centers
                .iter()
                .map(|c| data.dist_sq(i, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let total: f64 = costs.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    costs
        .iter()
        .map(|&c| 0.5 / n as f64 + 0.5 * c / total)
        .collect()
}

/// Greedy seeding pass: first center uniform, each next center drawn with
/// probability proportional to the current squared distance to the chosen
/// set. No refinement iterations.
pub fn kmeans_pp_centers(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centers = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.push(data.point(first));
    let mut best: Vec<f64> = (0..n).map(|i| data.dist_sq(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let u = rng.random::<f64>() * total;
            cumsum_invert(&best, u)
        };
        centers.push(data.point(next));
        for i in 0..n {
            best[i] = best[i].min(data.dist_sq(i, centers.last().unwrap()));
        }
    }
    centers
}

/// Sensitivity-based importance sampler for squared-distance objectives:
/// m i.i.d. draws from the mixture distribution, duplicates collapsed, and
/// weights set to the inverse inclusion probability 1 - (1-q)^m.
pub fn sample_sensitivity(data: &Dataset, m: usize, k: usize, seed: u64) -> Result<Coreset> {
    if m < 1 || k < 1 {
        return Err(Error::Cardinality {
            requested: m.min(k),
            available: 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp_centers(data, k.min(data.len()), &mut rng);
    let q = sensitivity_distribution(data, &centers);
    let mut chosen = std::collections::BTreeSet::new();
    for _ in 0..m {
        let u = rng.random::<f64>();
        chosen.insert(cumsum_invert(&q, u));
    }
    let picked = chosen
        .into_iter()
        .map(|i| {
            // P(i in S) = 1 - (1 - q_i)^m, evaluated without cancellation.
            let p = -f64::exp_m1(m as f64 * f64::ln_1p(-q[i]));
            (i, 1.0 / p)
        })
        .collect();
    Ok(Coreset::from_parts(picked, "sensitivity", seed))
}

/// Grid dimensions for a stratified draw of size m = g^d, if m is a perfect
/// d-th power.
pub fn stratified_grid(m: usize, d: usize) -> Option<usize> {
    let g = (m as f64).powf(1.0 / d as f64).round() as usize;
    for cand in [g.saturating_sub(1), g, g + 1] {
        if cand >= 1 && cand.pow(d as u32) == m {
            return Some(cand);
        }
    }
    None
}

/// Bin index of a point in the g^d partition of [-1,1]^d.
fn bin_of(point: &[f64], g: usize) -> usize {
    let mut flat = 0;
    for &x in point {
        let c = (((x + 1.0) * 0.5) * g as f64).floor() as isize;
        let c = c.clamp(0, g as isize - 1) as usize;
        flat = flat * g + c;
    }
    flat
}

/// One uniform point per cell of a g^d grid over [-1,1]^d; weight of a
/// point is the population of its cell (inverse inclusion probability).
pub fn sample_stratified(data: &Dataset, m: usize, seed: u64) -> Result<Coreset> {
    let d = data.dim();
    let g = stratified_grid(m, d).ok_or(Error::NotDthPower { m, d })?;
    let cells = m;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for i in 0..data.len() {
        members[bin_of(&data.point(i), g)].push(i);
    }
    let empty: Vec<usize> = (0..cells).filter(|&b| members[b].is_empty()).collect();
    if !empty.is_empty() {
        return Err(Error::EmptyBins(empty));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = members
        .iter()
        .map(|bin| {
            let pick = bin[rng.random_range(0..bin.len())];
            (pick, bin.len() as f64)
        })
        .collect();
    Ok(Coreset::from_parts(picked, "stratified", seed))
}

/// Inverse-marginal weights plus the inclusion floor report
/// rho_hat = n min marginal / m. Points that can never be sampled get an
/// infinite sentinel weight; they never enter any estimator.
pub fn inclusion_weights(marginals: &[f64], m: f64) -> (Vec<f64>, f64) {
    let n = marginals.len();
    let weights: Vec<f64> = marginals
        .iter()
        .map(|&p| if p > 0.0 { 1.0 / p } else { f64::INFINITY })
        .collect();
    let min_pos = marginals
        .iter()
        .cloned()
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    (weights, n as f64 * min_pos / m)
}
