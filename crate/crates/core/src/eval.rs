//! Query families, total and coreset losses, and relative-error reports.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::samplers::Coreset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Queries with |L(f)|/n below this are excluded from multiplicative
/// metrics and flagged; near-zero denominators would corrupt the curves.
pub const MULTIPLICATIVE_FLOOR: f64 = 1e-12;

/// A nonnegative query evaluated pointwise on the dataset.
#[derive(Debug, Clone)]
pub enum Query {
    /// Squared distance to the nearest of k centers.
    KMeans { centers: Vec<Vec<f64>> },
    /// Squared residual (a' y + b - z)^2 on points x = (y, z).
    LinReg { a: Vec<f64>, b: f64 },
    /// Explicit per-point values.
    Table(Vec<f64>),
}

impl Query {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        match self {
            Query::KMeans { centers } => {
                for c in centers {
                    if c.len() != data.dim() {
                        return Err(Error::Dimension {
                            expected: data.dim(),
                            found: c.len(),
                        });
                    }
                }
            }
            Query::LinReg { a, .. } => {
                if a.len() + 1 != data.dim() {
                    return Err(Error::Dimension {
                        expected: data.dim(),
                        found: a.len() + 1,
                    });
                }
            }
            Query::Table(values) => {
                if values.len() != data.len() {
                    return Err(Error::Dimension {
                        expected: data.len(),
                        found: values.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Value at dataset point `i`.
    pub fn eval(&self, data: &Dataset, i: usize) -> f64 {
        match self {
            Query::KMeans { centers } => centers
                .iter()
                .map(|c| data.dist_sq(i, c))
                .fold(f64::INFINITY, f64::min),
            Query::LinReg { a, b } => {
                let row = data.points.row(i);
                let d = a.len();
                let mut pred = *b;
                for (j, &aj) in a.iter().enumerate() {
                    pred += aj * row[j];
                }
                let r = pred - row[d];
                r * r
            }
            Query::Table(values) => values[i],
        }
    }
}

/// Full weighted loss L(f) = sum_x mu(x) f(x).
pub fn loss_total(data: &Dataset, query: &Query) -> f64 {
    (0..data.len())
        .map(|i| data.weights[i] * query.eval(data, i))
        .sum()
}

/// Coreset estimate L_S(f) = sum_{x in S} omega(x) mu(x) f(x). The data
/// weight is folded in so the estimator stays unbiased under the
/// inverse-inclusion weight rule for non-uniform mu.
pub fn loss_coreset(coreset: &Coreset, data: &Dataset, query: &Query) -> f64 {
    coreset
        .indices
        .iter()
        .zip(&coreset.weights)
        .map(|(&i, &w)| w * data.weights[i] * query.eval(data, i))
        .sum()
}

/// Per-query multiplicative/additive errors and their batch maxima.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// (multiplicative, additive) per query; multiplicative is None for
    /// excluded near-zero-loss queries.
    pub per_query: Vec<(Option<f64>, f64)>,
    pub sup_multiplicative: f64,
    pub sup_additive: f64,
    /// Index of the query attaining the multiplicative sup.
    pub argmax: usize,
    /// Queries excluded from the multiplicative metric.
    pub excluded: Vec<usize>,
}

/// Worst-case relative and additive error of a coreset over a query batch:
/// per query |L_S/L - 1| and |L_S - L|/n, with the batch maxima.
pub fn sup_relative_error(coreset: &Coreset, data: &Dataset, batch: &[Query]) -> ErrorReport {
    let n = data.len() as f64;
    let mut per_query = Vec::with_capacity(batch.len());
    let mut excluded = Vec::new();
    let mut sup_mult = 0.0f64;
    let mut sup_add = 0.0f64;
    let mut argmax = 0;
    for (qid, query) in batch.iter().enumerate() {
        let total = loss_total(data, query);
        let est = loss_coreset(coreset, data, query);
        let additive = (est - total).abs() / n;
        sup_add = sup_add.max(additive);
        let mult = if total.abs() / n < MULTIPLICATIVE_FLOOR {
            excluded.push(qid);
            None
        } else {
            let m = (est / total - 1.0).abs();
            if m > sup_mult {
                sup_mult = m;
                argmax = qid;
            }
            Some(m)
        };
        per_query.push((mult, additive));
    }
    ErrorReport {
        per_query,
        sup_multiplicative: sup_mult,
        sup_additive: sup_add,
        argmax,
        excluded,
    }
}

/// `count` k-means queries whose centers are uniform k-subsets of the data.
pub fn sample_query_batch(data: &Dataset, k: usize, count: usize, seed: u64) -> Vec<Query> {
    assert!(k <= data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    (0..count)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = i + rng.random_range(0..n - i);
                idx.swap(i, j);
            }
            Query::KMeans {
                centers: idx[..k].iter().map(|&i| data.point(i)).collect(),
            }
        })
        .collect()
}

/// Per-coordinate losses of a vector of scalar queries and the weighted-norm
/// deviation (1/n) * sqrt(sum_i omega_i^2 (L_S(f_i) - L(f_i))^2).
pub fn vector_loss(
    coreset: &Coreset,
    data: &Dataset,
    queries: &[Query],
    omega: &[f64],
) -> (Vec<f64>, Vec<f64>, f64) {
    assert_eq!(queries.len(), omega.len());
    let estimates: Vec<f64> = queries.iter().map(|q| loss_coreset(coreset, data, q)).collect();
    let totals: Vec<f64> = queries.iter().map(|q| loss_total(data, q)).collect();
    let dev_sq: f64 = estimates
        .iter()
        .zip(&totals)
        .zip(omega)
        .map(|((&e, &t), &w)| {
            let d = w * (e - t);
            d * d
        })
        .sum();
    (estimates, totals, dev_sq.sqrt() / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_uniform;
    use crate::kernels::random_admissible_kernel;
    use crate::samplers::sample_dpp;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn full_coreset(n: usize) -> Coreset {
        Coreset {
            indices: (0..n).collect(),
            weights: vec![1.0; n],
            sampler: "full".into(),
            seed: 0,
        }
    }

    #[test]
    fn query_eval_hand_cases() {
        let data = Dataset::from_points(
            DMatrix::from_row_slice(2, 1, &[0.0, 0.3]),
            "t",
        );
        let q = Query::KMeans {
            centers: vec![vec![-1.0], vec![1.0]],
        };
        assert_abs_diff_eq!(q.eval(&data, 0), 1.0, epsilon = 1e-15);
        let at_center = Query::KMeans {
            centers: vec![vec![0.3]],
        };
        assert_abs_diff_eq!(at_center.eval(&data, 1), 0.0, epsilon = 1e-15);

        let reg_data = Dataset::from_points(
            DMatrix::from_row_slice(1, 2, &[2.0, 2.0]),
            "r",
        );
        let q = Query::LinReg {
            a: vec![1.0],
            b: 0.0,
        };
        assert_abs_diff_eq!(q.eval(&reg_data, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn query_validate_dimensions() {
        let data = gen_uniform(10, 2, 0);
        let bad = Query::KMeans {
            centers: vec![vec![0.0; 3]],
        };
        assert!(bad.validate(&data).is_err());
        let bad = Query::Table(vec![0.0; 9]);
        assert!(bad.validate(&data).is_err());
    }

    #[test]
    fn loss_total_cases() {
        let data = gen_uniform(25, 2, 1);
        assert_abs_diff_eq!(
            loss_total(&data, &Query::Table(vec![0.0; 25])),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            loss_total(&data, &Query::Table(vec![1.0; 25])),
            25.0,
            epsilon = 1e-12
        );

        // double-loop oracle for a k-means query
        let q = Query::KMeans {
            centers: vec![data.point(3), data.point(17)],
        };
        let mut oracle = 0.0;
        for i in 0..25 {
            let mut best = f64::INFINITY;
            for c in [data.point(3), data.point(17)] {
                let mut d2 = 0.0;
                for j in 0..2 {
                    let diff = data.points[(i, j)] - c[j];
                    d2 += diff * diff;
                }
                best = best.min(d2);
            }
            oracle += data.weights[i] * best;
        }
        assert!((loss_total(&data, &q) - oracle).abs() < 1e-10);
    }

    #[test]
    fn loss_coreset_cases() {
        let data = gen_uniform(12, 2, 2);
        let q = Query::KMeans {
            centers: vec![data.point(0)],
        };
        let full = full_coreset(12);
        assert_abs_diff_eq!(
            loss_coreset(&full, &data, &q),
            loss_total(&data, &q),
            epsilon = 1e-12
        );
        let empty = Coreset {
            indices: vec![],
            weights: vec![],
            sampler: "empty".into(),
            seed: 0,
        };
        assert_eq!(loss_coreset(&empty, &data, &q), 0.0);
    }

    #[test]
    fn coreset_loss_is_unbiased_under_exact_marginals() {
        // E[L_S(f)] computed from the exhaustive subset table must equal
        // the full loss when weights are inverse marginals.
        let kernel = random_admissible_kernel(6, 44);
        let data = gen_uniform(6, 2, 3);
        let q = Query::KMeans {
            centers: vec![data.point(1)],
        };
        let dist = crate::concentration::exact_distribution(&kernel).unwrap();
        let mut expectation = 0.0;
        for (mask, &p) in dist.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let indices: Vec<usize> = (0..6).filter(|&i| mask >> i & 1 == 1).collect();
            let weights: Vec<f64> = indices
                .iter()
                .map(|&i| 1.0 / kernel.entries[(i, i)])
                .collect();
            let s = Coreset {
                indices,
                weights,
                sampler: "oracle".into(),
                seed: 0,
            };
            expectation += p * loss_coreset(&s, &data, &q);
        }
        assert!((expectation - loss_total(&data, &q)).abs() < 1e-9);
    }

    #[test]
    fn coreset_loss_unbiased_monte_carlo() {
        let kernel = random_admissible_kernel(6, 45);
        let data = gen_uniform(6, 2, 4);
        let q = Query::KMeans {
            centers: vec![data.point(2)],
        };
        let total = loss_total(&data, &q);
        let draws = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..draws {
            let s = sample_dpp(&kernel, rep as u64).unwrap();
            let v = loss_coreset(&s, &data, &q);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let var = (sumsq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - total).abs() < 4.0 * se + 1e-9,
            "mean {mean} vs {total} (se {se})"
        );
    }

    #[test]
    fn sup_relative_error_cases() {
        let data = gen_uniform(10, 2, 5);
        let batch = sample_query_batch(&data, 2, 5, 0);
        let report = sup_relative_error(&full_coreset(10), &data, &batch);
        assert_abs_diff_eq!(report.sup_multiplicative, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.sup_additive, 0.0, epsilon = 1e-12);

        // single query with L_S = 1.1 L
        let q = Query::Table(vec![1.0; 10]);
        let inflated = Coreset {
            indices: (0..10).collect(),
            weights: vec![1.1; 10],
            sampler: "inflated".into(),
            seed: 0,
        };
        let report = sup_relative_error(&inflated, &data, &[q]);
        assert_abs_diff_eq!(report.sup_multiplicative, 0.1, epsilon = 1e-12);

        // zero-loss query is excluded from the multiplicative sup
        let zero = Query::Table(vec![0.0; 10]);
        let one = Query::Table(vec![1.0; 10]);
        let report = sup_relative_error(&inflated, &data, &[zero, one]);
        assert_eq!(report.excluded, vec![0]);
        assert!(report.per_query[0].0.is_none());
    }

    #[test]
    fn sup_relative_error_matches_scalar_recomputation() {
        let data = gen_uniform(30, 2, 6);
        let batch = sample_query_batch(&data, 3, 7, 1);
        let s = crate::samplers::sample_iid_uniform(&data, 10, 9).unwrap();
        let report = sup_relative_error(&s, &data, &batch);
        for (qid, q) in batch.iter().enumerate() {
            let total = loss_total(&data, q);
            let est = loss_coreset(&s, &data, q);
            let mult = (est / total - 1.0).abs();
            let add = (est - total).abs() / 30.0;
            assert!((report.per_query[qid].0.unwrap() - mult).abs() < 1e-12);
            assert!((report.per_query[qid].1 - add).abs() < 1e-12);
        }
    }

    #[test]
    fn query_batch_shape_and_determinism() {
        let data = gen_uniform(50, 2, 7);
        let batch = sample_query_batch(&data, 3, 100, 9);
        assert_eq!(batch.len(), 100);
        for q in &batch {
            let Query::KMeans { centers } = q else { panic!() };
            assert_eq!(centers.len(), 3);
            // centers are distinct dataset points
            assert!(centers[0] != centers[1] && centers[1] != centers[2]);
        }
        let again = sample_query_batch(&data, 3, 100, 9);
        for (a, b) in batch.iter().zip(&again) {
            let (Query::KMeans { centers: ca }, Query::KMeans { centers: cb }) = (a, b) else {
                panic!()
            };
            assert_eq!(ca, cb);
        }

        // k = n: every query has the same center set
        let small = gen_uniform(4, 1, 8);
        let batch = sample_query_batch(&small, 4, 3, 0);
        for q in &batch {
            let Query::KMeans { centers } = q else { panic!() };
            let mut sorted: Vec<f64> = centers.iter().map(|c| c[0]).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut all: Vec<f64> = (0..4).map(|i| small.points[(i, 0)]).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(sorted, all);
        }
    }

    #[test]
    fn vector_loss_cases() {
        let data = gen_uniform(8, 2, 10);
        let s = crate::samplers::sample_iid_uniform(&data, 4, 3).unwrap();
        let q = Query::KMeans {
            centers: vec![data.point(0)],
        };
        // identical coordinates: deviation = additive error * |omega|_2
        let queries = vec![q.clone(), q.clone(), q.clone()];
        let omega = [0.5, 1.0, 2.0];
        let (est, tot, dev) = vector_loss(&s, &data, &queries, &omega);
        let additive = (est[0] - tot[0]).abs() / 8.0;
        let norm = (omega.iter().map(|w| w * w).sum::<f64>()).sqrt();
        assert_abs_diff_eq!(dev, additive * norm, epsilon = 1e-12);

        // zero weights annihilate the deviation
        let (_, _, dev) = vector_loss(&s, &data, &queries, &[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(dev, 0.0, epsilon = 1e-15);

        // p = 2 matches scalar recomputation
        let batch = sample_query_batch(&data, 2, 2, 11);
        let omega = [1.3, 0.7];
        let (est, tot, dev) = vector_loss(&s, &data, &batch, &omega);
        let expect = ((omega[0] * (est[0] - tot[0])).powi(2)
            + (omega[1] * (est[1] - tot[1])).powi(2))
        .sqrt()
            / 8.0;
        assert_abs_diff_eq!(dev, expect, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn scaling_queries_scales_errors(c in 0.01f64..100.0, seed in 0u64..50) {
            let data = gen_uniform(12, 2, seed);
            let s = crate::samplers::sample_iid_uniform(&data, 5, seed).unwrap();
            let base: Vec<f64> = (0..12).map(|i| 0.1 + (i as f64 * 0.37).fract()).collect();
            let scaled: Vec<f64> = base.iter().map(|v| c * v).collect();
            let r1 = sup_relative_error(&s, &data, &[Query::Table(base)]);
            let r2 = sup_relative_error(&s, &data, &[Query::Table(scaled)]);
            // multiplicative error is scale-invariant, additive scales by c
            prop_assert!((r1.sup_multiplicative - r2.sup_multiplicative).abs() < 1e-9);
            prop_assert!((c * r1.sup_additive - r2.sup_additive).abs() < 1e-9 * c.max(1.0));
        }

        #[test]
        fn sup_is_monotone_in_batch(seed in 0u64..50) {
            let data = gen_uniform(15, 2, seed);
            let s = crate::samplers::sample_iid_uniform(&data, 6, seed).unwrap();
            let batch = sample_query_batch(&data, 2, 8, seed);
            let small = sup_relative_error(&s, &data, &batch[..4]);
            let big = sup_relative_error(&s, &data, &batch);
            prop_assert!(big.sup_multiplicative >= small.sup_multiplicative - 1e-15);
            prop_assert!(big.sup_additive >= small.sup_additive - 1e-15);
        }
    }
}
