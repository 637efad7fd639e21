//! Randomized validation batteries: Monte Carlo and exhaustive-oracle checks
//! of the sampling, marginal, moment, and tail-bound machinery on small
//! ground sets. Shared by the CLI `verify` subcommand and the acceptance
//! suite.

use super::*;
use crate::kernels::{
    build_nonsymmetric_kernel, mdpp_marginals, random_admissible_kernel, random_projection_kernel,
    random_psd_matrix,
};
use crate::numerics::{derive_seed, symmetric_eigen_desc};
use crate::samplers::{sample_dpp, MdppSampler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Aggregated outcome of one battery.
#[derive(Debug, Clone)]
pub struct BatterySummary {
    pub name: String,
    pub checks: usize,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl BatterySummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "[{}] {}: {} checks, {} failures\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.failures.len()
        );
        for f in &self.failures {
            s.push_str(&format!("  failure: {f}\n"));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

fn band(p: f64, draws: usize) -> f64 {
    4.0 * (p * (1.0 - p) / draws as f64).sqrt() + 1.0 / draws as f64
}

/// Monte Carlo marginals and pair probabilities of the spectral sampler
/// against principal minors, plus oracle self-consistency per kernel.
pub fn dpp_battery(kernels: usize, max_n: usize, draws: usize, seed: u64) -> BatterySummary {
    assert!(max_n <= MAX_ORACLE_SIZE);
    let results: Vec<(usize, Vec<String>)> = (0..kernels)
        .into_par_iter()
        .map(|case| {
            let mut checks = 0;
            let mut failures = Vec::new();
            let kseed = derive_seed(seed, &[b"dpp-kernel", &case.to_le_bytes()]);
            let n = 4 + (kseed % (max_n as u64 - 3)) as usize;
            let kernel = random_admissible_kernel(n, kseed);

            let mut single = vec![0u32; n];
            let mut pair = vec![0u32; n * n];
            for rep in 0..draws {
                let s = sample_dpp(
                    &kernel,
                    derive_seed(seed, &[b"dpp-draw", &case.to_le_bytes(), &rep.to_le_bytes()]),
                )
                .expect("hermitian kernel");
                for (a, &i) in s.indices.iter().enumerate() {
                    single[i] += 1;
                    for &j in &s.indices[a + 1..] {
                        pair[i * n + j] += 1;
                    }
                }
            }
            let df = draws as f64;
            for i in 0..n {
                let p = kernel.entries[(i, i)];
                let emp = single[i] as f64 / df;
                checks += 1;
                if (emp - p).abs() > band(p, draws) {
                    failures.push(format!(
                        "case {case}: marginal {i} empirical {emp:.5} vs {p:.5}"
                    ));
                }
                for j in (i + 1)..n {
                    let p = kernel.entries[(i, i)] * kernel.entries[(j, j)]
                        - kernel.entries[(i, j)] * kernel.entries[(j, i)];
                    let emp = pair[i * n + j] as f64 / df;
                    checks += 1;
                    if (emp - p).abs() > band(p, draws) {
                        failures.push(format!(
                            "case {case}: pair ({i},{j}) empirical {emp:.5} vs {p:.5}"
                        ));
                    }
                }
            }

            // Exhaustive-table consistency with the defining minors.
            let dist = exact_distribution(&kernel).expect("admissible kernel");
            for i in 0..n {
                checks += 1;
                if (dist.inclusion_probability(&[i]) - kernel.entries[(i, i)]).abs() > 1e-8 {
                    failures.push(format!("case {case}: oracle singleton {i} mismatch"));
                }
                for j in (i + 1)..n {
                    let det = kernel.entries[(i, i)] * kernel.entries[(j, j)]
                        - kernel.entries[(i, j)] * kernel.entries[(j, i)];
                    checks += 1;
                    if (dist.inclusion_probability(&[i, j]) - det).abs() > 1e-8 {
                        failures.push(format!("case {case}: oracle pair ({i},{j}) mismatch"));
                    }
                }
            }
            (checks, failures)
        })
        .collect();

    let mut summary = BatterySummary {
        name: "dpp".into(),
        checks: 0,
        failures: Vec::new(),
        notes: vec![format!("{kernels} kernels x {draws} draws, n <= {max_n}")],
    };
    for (c, f) in results {
        summary.checks += c;
        summary.failures.extend(f);
    }
    summary
}

/// Fixed-size marginals against exhaustive subset enumeration and against
/// Monte Carlo draws of the fixed-size sampler.
pub fn mdpp_battery(cases: usize, max_n: usize, draws: usize, seed: u64) -> BatterySummary {
    let results: Vec<(usize, Vec<String>)> = (0..cases)
        .into_par_iter()
        .map(|case| {
            let mut checks = 0;
            let mut failures = Vec::new();
            let cseed = derive_seed(seed, &[b"mdpp", &case.to_le_bytes()]);
            let n = 5 + (cseed % (max_n as u64 - 4)) as usize;
            let m = 1 + (cseed / 7 % 5.min(n as u64 - 1)) as usize;
            let l = random_psd_matrix(n, cseed, 1.5);
            let (values, vectors) = symmetric_eigen_desc(&l);
            let spectrum = crate::kernels::SpectralForm { values, vectors };
            let marginals = mdpp_marginals(&spectrum, m).expect("valid cardinality");

            // Exhaustive oracle over all m-subsets: P(S=T) prop. det L_T.
            let mut total = 0.0;
            let mut incl = vec![0.0; n];
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != m {
                    continue;
                }
                let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
                let det = l
                    .select_rows(idx.as_slice())
                    .select_columns(idx.as_slice())
                    .determinant();
                total += det;
                for &i in &idx {
                    incl[i] += det;
                }
            }
            for i in 0..n {
                checks += 1;
                if (marginals[i] - incl[i] / total).abs() > 1e-9 {
                    failures.push(format!(
                        "case {case}: enumeration marginal {i}: {} vs {}",
                        marginals[i],
                        incl[i] / total
                    ));
                }
            }

            let sampler = MdppSampler::new(spectrum, m).unwrap();
            let mut counts = vec![0u32; n];
            for rep in 0..draws {
                let s = sampler.sample(derive_seed(
                    seed,
                    &[b"mdpp-draw", &case.to_le_bytes(), &rep.to_le_bytes()],
                ));
                checks += 1;
                if s.len() != m {
                    failures.push(format!("case {case}: cardinality {} != {m}", s.len()));
                }
                for &i in &s.indices {
                    counts[i] += 1;
                }
            }
            for i in 0..n {
                let p = marginals[i];
                let emp = counts[i] as f64 / draws as f64;
                checks += 1;
                if (emp - p).abs() > band(p, draws) {
                    failures.push(format!(
                        "case {case}: sampler marginal {i}: {emp:.5} vs {p:.5}"
                    ));
                }
            }
            (checks, failures)
        })
        .collect();

    let mut summary = BatterySummary {
        name: "mdpp".into(),
        checks: 0,
        failures: Vec::new(),
        notes: vec![format!("{cases} spectra x {draws} draws, n <= {max_n}")],
    };
    for (c, f) in results {
        summary.checks += c;
        summary.failures.extend(f);
    }
    summary
}

/// Variance, cumulant, and Laplace-transform identities against the
/// exhaustive table.
pub fn identity_battery(cases: usize, max_n: usize, seed: u64) -> BatterySummary {
    let mut summary = BatterySummary {
        name: "identities".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    for case in 0..cases {
        let cseed = derive_seed(seed, &[b"ident", &case.to_le_bytes()]);
        let n = 4 + (cseed % (max_n as u64 - 3)) as usize;
        let kernel = random_admissible_kernel(n, cseed);
        let mut rng = ChaCha8Rng::seed_from_u64(cseed ^ 0xabcd);
        let phi: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let dist = exact_distribution(&kernel).unwrap();

        let (mean, var) = linstat_moments(&kernel, &phi);
        let (omean, ovar) = linstat_moments_from_distribution(&dist, &phi);
        summary.checks += 2;
        if (mean - omean).abs() > 1e-9 {
            summary
                .failures
                .push(format!("case {case}: mean {mean} vs oracle {omean}"));
        }
        if (var - ovar).abs() > 1e-9 {
            summary
                .failures
                .push(format!("case {case}: variance {var} vs oracle {ovar}"));
        }
        for order in 1..=3u32 {
            summary.checks += 1;
            let formula = cumulant(&kernel, &phi, order as usize);
            let oracle = dist.linstat_cumulant(&phi, order);
            if (formula - oracle).abs() > 1e-8 {
                summary.failures.push(format!(
                    "case {case}: cumulant {order}: {formula} vs {oracle}"
                ));
            }
        }
        for t in [-0.2, 0.3] {
            summary.checks += 1;
            let det = laplace_transform(&kernel, &phi, t);
            let oracle = dist.linstat_mgf(&phi, t);
            if ((det - oracle) / oracle).abs() > 1e-9 {
                summary.failures.push(format!(
                    "case {case}: laplace t={t}: {det} vs {oracle}"
                ));
            }
        }
    }
    summary
}

fn interior_eps_grid(eps_max: f64, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|i| eps_max * i as f64 / points as f64)
        .collect()
}

/// Exact two-sided tails of random hermitian instances against the
/// variance bound at a = 1. Returns the battery outcome and the minimal
/// restoring constant per instance.
pub fn hermitian_tail_battery(cases: usize, seed: u64) -> (BatterySummary, Vec<f64>) {
    let mut summary = BatterySummary {
        name: "hermitian-tails".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    let mut min_a = Vec::with_capacity(cases);
    for case in 0..cases {
        let cseed = derive_seed(seed, &[b"tail1", &case.to_le_bytes()]);
        let n = 5 + (cseed % 4) as usize;
        let kernel = if case % 2 == 0 {
            random_projection_kernel(n, 1 + (cseed / 5 % (n as u64 - 1)) as usize, cseed)
        } else {
            random_admissible_kernel(n, cseed)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cseed ^ 0x5eed);
        let phi: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let (_, var) = linstat_moments(&kernel, &phi);
        if var <= 1e-12 {
            continue;
        }
        let sup = phi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let dist = exact_distribution(&kernel).unwrap();
        let report = tail_report(
            &interior_eps_grid(hermitian_tail_bound(var, sup, 1.0, 0.0).eps_max, 8),
            |eps| hermitian_tail_bound(var, sup, 1.0, eps),
            Some(|eps: f64| dist.linstat_two_sided_tail(&phi, eps)),
        );
        summary.checks += report.entries.len();
        for e in &report.entries {
            if e.verdict == Some(TailVerdict::Violated) {
                summary.failures.push(format!(
                    "case {case}: tail {} > bound {} at eps {}",
                    e.empirical.unwrap(),
                    e.bound,
                    e.eps
                ));
            }
        }
        let points: Vec<(f64, f64)> = report
            .entries
            .iter()
            .filter(|e| e.in_range)
            .map(|e| (e.eps, e.empirical.unwrap()))
            .collect();
        min_a.push(minimal_restoring_a(&points, var));
    }
    let frac_ok = min_a.iter().filter(|&&a| a <= 1.0).count() as f64 / min_a.len().max(1) as f64;
    summary
        .notes
        .push(format!("minimal restoring a <= 1 on {:.1}% of instances", 100.0 * frac_ok));
    (summary, min_a)
}

/// Exact tails of oracle-certified non-symmetric kernels against the
/// norm-restricted bound.
pub fn nonsymmetric_tail_battery(cases: usize, seed: u64) -> BatterySummary {
    let mut summary = BatterySummary {
        name: "nonsymmetric-tails".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    let mut certified = 0usize;
    let mut attempts = 0usize;
    for case in 0..cases {
        // resample until the oracle certifies the kernel
        let mut sub_seed = 0u64;
        let (kernel, norms) = loop {
            attempts += 1;
            let s = derive_seed(seed, &[b"tail2", &case.to_le_bytes(), &sub_seed.to_le_bytes()]);
            match build_nonsymmetric_kernel(6, 0.5, s) {
                Ok(pair) => break pair,
                Err(_) => sub_seed += 1,
            }
        };
        certified += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"tail2phi", &case.to_le_bytes()]));
        let phi: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let (_, var) = linstat_moments(&kernel, &phi);
        if var <= 1e-12 {
            continue;
        }
        let sup = phi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let dist = exact_distribution(&kernel).unwrap();
        let report = tail_report(
            &interior_eps_grid(
                nonsymmetric_tail_bound(var, sup, norms, 0.0).eps_max,
                6,
            ),
            |eps| nonsymmetric_tail_bound(var, sup, norms, eps),
            Some(|eps: f64| dist.linstat_two_sided_tail(&phi, eps)),
        );
        summary.checks += report.entries.len();
        for e in &report.entries {
            if e.verdict == Some(TailVerdict::Violated) {
                summary.failures.push(format!(
                    "case {case}: tail {} > bound {} at eps {}",
                    e.empirical.unwrap(),
                    e.bound,
                    e.eps
                ));
            }
        }
    }
    summary.notes.push(format!(
        "{certified} certified non-symmetric kernels in {attempts} attempts"
    ));
    summary
}

/// Exact joint tails of p = 2 weighted-norm deviations against the vector
/// bound at a = 1.
pub fn vector_tail_battery(cases: usize, seed: u64) -> BatterySummary {
    let mut summary = BatterySummary {
        name: "vector-tails".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    for case in 0..cases {
        let cseed = derive_seed(seed, &[b"tail3", &case.to_le_bytes()]);
        let n = 5 + (cseed % 2) as usize;
        let kernel = random_admissible_kernel(n, cseed);
        let mut rng = ChaCha8Rng::seed_from_u64(cseed ^ 0x33);
        let phi1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let phi2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let omega = [0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>()];
        let (m1, v1) = linstat_moments(&kernel, &phi1);
        let (m2, v2) = linstat_moments(&kernel, &phi2);
        if v1 <= 1e-12 || v2 <= 1e-12 {
            continue;
        }
        let sups = [
            phi1.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
            phi2.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
        ];
        let dist = exact_distribution(&kernel).unwrap();
        let l1 = dist.linstat_values(&phi1);
        let l2 = dist.linstat_values(&phi2);
        let joint_tail = |eps: f64| -> f64 {
            dist.probs
                .iter()
                .enumerate()
                .filter(|&(mask, _)| {
                    let d1 = omega[0] * (l1[mask] - m1);
                    let d2 = omega[1] * (l2[mask] - m2);
                    (d1 * d1 + d2 * d2).sqrt() >= eps
                })
                .map(|(_, &p)| p)
                .sum()
        };
        let report = tail_report(
            &interior_eps_grid(
                vector_tail_bound(&[v1, v2], &sups, &omega, 1.0, 0.0).eps_max,
                6,
            ),
            |eps| vector_tail_bound(&[v1, v2], &sups, &omega, 1.0, eps),
            Some(joint_tail),
        );
        summary.checks += report.entries.len();
        for e in &report.entries {
            if e.verdict == Some(TailVerdict::Violated) {
                summary.failures.push(format!(
                    "case {case}: joint tail {} > bound {} at eps {}",
                    e.empirical.unwrap(),
                    e.bound,
                    e.eps
                ));
            }
        }
    }
    summary
}

/// Hilbert-Schmidt power inequality on random admissible pairs (K, phi).
pub fn lemma_battery(cases: usize, seed: u64) -> BatterySummary {
    let mut summary = BatterySummary {
        name: "hs-inequality".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    for case in 0..cases {
        let cseed = derive_seed(seed, &[b"lemma", &case.to_le_bytes()]);
        let n = 4 + (cseed % 7) as usize;
        let kernel = random_admissible_kernel(n, cseed);
        let mut rng = ChaCha8Rng::seed_from_u64(cseed ^ 0x11);
        let phi: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        for k in [2u32, 3, 4] {
            summary.checks += 1;
            let (lhs, rhs) = hs_power_inequality(&kernel, &phi, k);
            if lhs > rhs + 1e-10 {
                summary.failures.push(format!(
                    "case {case} k={k}: lhs {lhs:.12e} > rhs {rhs:.12e}"
                ));
            }
        }
    }
    summary
}

/// Cardinality Chernoff bound against the exact law of |S| derived from
/// the kernel eigenvalues.
pub fn cardinality_battery(cases: usize, seed: u64) -> BatterySummary {
    let mut summary = BatterySummary {
        name: "cardinality-tail".into(),
        checks: 0,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    for case in 0..cases {
        let cseed = derive_seed(seed, &[b"card", &case.to_le_bytes()]);
        let kernel = random_admissible_kernel(12, cseed);
        let values = &kernel.spectrum.as_ref().unwrap().values;
        let law = cardinality_law_from_eigenvalues(values);
        let mean: f64 = values.iter().sum();
        for b in [0.5, 1.0, 2.0] {
            summary.checks += 1;
            let threshold = (b + 1.0) * mean;
            let tail: f64 = law
                .iter()
                .enumerate()
                .filter(|&(c, _)| c as f64 > threshold)
                .map(|(_, &p)| p)
                .sum();
            let bound = cardinality_tail_bound(mean, b);
            if tail > bound + 1e-12 {
                summary.failures.push(format!(
                    "case {case} b={b}: tail {tail:.3e} > bound {bound:.3e}"
                ));
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dpp_battery_passes() {
        let s = dpp_battery(4, 8, 20_000, 11);
        assert!(s.passed(), "{}", s.render());
    }

    #[test]
    fn small_mdpp_battery_passes() {
        let s = mdpp_battery(3, 8, 20_000, 13);
        assert!(s.passed(), "{}", s.render());
    }

    #[test]
    fn identity_battery_passes() {
        let s = identity_battery(10, 8, 17);
        assert!(s.passed(), "{}", s.render());
    }

    #[test]
    fn tail_batteries_pass_at_unit_constant() {
        let (s, min_a) = hermitian_tail_battery(20, 19);
        assert!(s.passed(), "{}", s.render());
        let ok = min_a.iter().filter(|&&a| a <= 1.0).count();
        assert!(
            ok as f64 >= 0.95 * min_a.len() as f64,
            "only {ok}/{} restored at a=1",
            min_a.len()
        );
        let s = nonsymmetric_tail_battery(5, 23);
        assert!(s.passed(), "{}", s.render());
        let s = vector_tail_battery(10, 29);
        assert!(s.passed(), "{}", s.render());
    }

    #[test]
    fn lemma_and_cardinality_batteries_pass() {
        let s = lemma_battery(30, 31);
        assert!(s.passed(), "{}", s.render());
        let s = cardinality_battery(10, 37);
        assert!(s.passed(), "{}", s.render());
    }
}
