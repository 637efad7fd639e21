//! The benchmark pipeline: build a dataset, run every configured sampler
//! over the m-grid, score coresets by worst-case relative error over
//! random query batches, estimate quantile curves, and fit log-log slopes.

mod config;
pub use config::*;

use crate::data::{
    fit_beta_reference, gen_trimodal, gen_uniform, kde_fit, load_csv, pca_project,
    rescale_to_cube, subsample, Dataset, DensityModel,
};
use crate::error::{Error, Result};
use crate::eval::{sample_query_batch, sup_relative_error, Query};
use crate::kernels::{
    build_discretized_ope_kernel, gaussian_lensemble, vdm_projection_kernel, KernelMatrix,
    SpectralForm,
};
use crate::numerics::{derive_seed, ols_line, symmetric_eigen_desc};
use crate::samplers::{
    sample_dpp, sample_iid_uniform, sample_sensitivity, sample_stratified, Coreset, MdppSampler,
};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// One estimated quantile at one coreset size.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub m: usize,
    pub quantile: f64,
    pub ci_half: f64,
}

/// Quantile-vs-size curve of one sampler with its fitted log-log slope.
#[derive(Debug, Clone)]
pub struct QuantileCurve {
    pub tag: String,
    pub points: Vec<CurvePoint>,
    /// (slope, stderr); None when fewer than 3 usable points.
    pub slope: Option<(f64, f64)>,
    /// Grid cells this sampler could not serve, with the reason.
    pub unavailable: Vec<(usize, String)>,
}

impl QuantileCurve {
    pub fn point_at(&self, m: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.m == m)
    }
}

/// Per-repeat worst-case scores.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub sampler: String,
    pub m: usize,
    pub repeat: usize,
    /// Query attaining the sup.
    pub query_id: usize,
    pub multiplicative: f64,
    pub additive: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub curves: Vec<QuantileCurve>,
    pub raw: Vec<RawRow>,
    pub dataset_label: String,
    pub n: usize,
}

impl BenchmarkResult {
    pub fn curve(&self, tag: &str) -> Option<&QuantileCurve> {
        self.curves.iter().find(|c| c.tag == tag)
    }
}

/// Materialize the configured dataset: generate or load, subsample, project,
/// rescale.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let gen_seed = derive_seed(cfg.seed, &[b"dataset"]);
    let mut data = match &cfg.dataset {
        DatasetSpec::Uniform { n, d } => gen_uniform(*n, *d, gen_seed),
        DatasetSpec::Trimodal { n, d } => gen_trimodal(*n, *d, gen_seed),
        DatasetSpec::Csv { path, has_weights } => load_csv(path, *has_weights)?,
    };
    if let Some(m) = cfg.subsample {
        if m < data.len() {
            data = subsample(&data, m, derive_seed(cfg.seed, &[b"subsample"]));
        }
    }
    if let Some(d_out) = cfg.pca_dim {
        data = pca_project(&data, d_out)?;
    }
    if cfg.rescale {
        data = rescale_to_cube(&data, cfg.rescale_margin);
    }
    Ok(data)
}

// Per-sampler state reused across the m-grid.
enum Prepared {
    Uniform,
    Sensitivity,
    Gaussian { spectrum: SpectralForm },
    Ope { q: DensityModel, gamma: DensityModel },
    Vdm,
    Stratified,
}

// Per-(sampler, m) state reused across repeats.
enum Cell {
    Uniform,
    Sensitivity,
    Mdpp(Box<MdppSampler>),
    Projection(Box<KernelMatrix>),
    Stratified,
}

impl Cell {
    fn draw(&self, data: &Dataset, m: usize, k: usize, seed: u64) -> Result<Coreset> {
        match self {
            Cell::Uniform => sample_iid_uniform(data, m, seed),
            Cell::Sensitivity => sample_sensitivity(data, m, k, seed),
            Cell::Mdpp(sampler) => Ok(sampler.sample(seed)),
            Cell::Projection(kernel) => sample_dpp(kernel, seed),
            Cell::Stratified => sample_stratified(data, m, seed),
        }
    }
}

fn prepare(spec: &SamplerSpec, data: &Dataset) -> Result<Prepared> {
    Ok(match spec.kind {
        SamplerKind::Uniform => Prepared::Uniform,
        SamplerKind::Sensitivity => Prepared::Sensitivity,
        SamplerKind::GaussianMdpp => {
            let h = spec.bandwidth.ok_or_else(|| {
                Error::Config("Gaussian fixed-size sampler needs a bandwidth".into())
            })?;
            let l = gaussian_lensemble(data, h);
            let (values, vectors) = symmetric_eigen_desc(&l);
            Prepared::Gaussian {
                spectrum: SpectralForm { values, vectors },
            }
        }
        SamplerKind::Ope => Prepared::Ope {
            q: fit_beta_reference(data)?,
            gamma: kde_fit(data)?,
        },
        SamplerKind::Vdm => Prepared::Vdm,
        SamplerKind::Stratified => Prepared::Stratified,
    })
}

fn build_cell(prepared: &Prepared, data: &Dataset, m: usize) -> Result<Cell> {
    Ok(match prepared {
        Prepared::Uniform => {
            if m > data.len() {
                return Err(Error::Cardinality {
                    requested: m,
                    available: data.len(),
                });
            }
            Cell::Uniform
        }
        Prepared::Sensitivity => Cell::Sensitivity,
        Prepared::Gaussian { spectrum } => {
            Cell::Mdpp(Box::new(MdppSampler::new(spectrum.clone(), m)?))
        }
        Prepared::Ope { q, gamma } => Cell::Projection(Box::new(build_discretized_ope_kernel(
            data, q, gamma, m,
        )?)),
        Prepared::Vdm => Cell::Projection(Box::new(vdm_projection_kernel(data, m)?)),
        Prepared::Stratified => {
            // probe one draw so empty bins or a bad grid surface now
            sample_stratified(data, m, 0)?;
            Cell::Stratified
        }
    })
}

/// Run the full experiment described by the config. Deterministic given the
/// master seed, independent of thread count: every repeat derives its own
/// seed and results aggregate by index.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let data = build_dataset(cfg)?;
    let n = data.len();
    for &m in &cfg.m_grid {
        if m > n {
            return Err(Error::Config(format!("m = {m} exceeds dataset size {n}")));
        }
    }
    if cfg.k > n {
        return Err(Error::Config(format!("k = {} exceeds dataset size {n}", cfg.k)));
    }

    let fixed_batch = cfg.fixed_query_batch.then(|| {
        sample_query_batch(
            &data,
            cfg.k,
            cfg.query_batch,
            derive_seed(cfg.seed, &[b"query-fixed"]),
        )
    });

    let mut curves = Vec::new();
    let mut raw = Vec::new();
    for spec in &cfg.samplers {
        let tag = spec.tag();
        let start = std::time::Instant::now();
        let prepared = prepare(spec, &data)?;
        let mut curve = QuantileCurve {
            tag: tag.clone(),
            points: Vec::new(),
            slope: None,
            unavailable: Vec::new(),
        };
        for &m in &cfg.m_grid {
            let cell = match build_cell(&prepared, &data, m) {
                Ok(cell) => cell,
                Err(e) => {
                    curve.unavailable.push((m, e.to_string()));
                    continue;
                }
            };
            let scores: Vec<Result<(f64, f64, usize)>> = (0..cfg.repeats)
                .into_par_iter()
                .map(|rep| {
                    let draw_seed = derive_seed(
                        cfg.seed,
                        &[
                            b"draw",
                            tag.as_bytes(),
                            &m.to_le_bytes(),
                            &rep.to_le_bytes(),
                        ],
                    );
                    let coreset = cell.draw(&data, m, cfg.k, draw_seed)?;
                    let report = match &fixed_batch {
                        Some(batch) => sup_relative_error(&coreset, &data, batch),
                        None => {
                            let batch = sample_query_batch(
                                &data,
                                cfg.k,
                                cfg.query_batch,
                                derive_seed(
                                    cfg.seed,
                                    &[b"query", &m.to_le_bytes(), &rep.to_le_bytes()],
                                ),
                            );
                            sup_relative_error(&coreset, &data, &batch)
                        }
                    };
                    Ok((
                        report.sup_multiplicative,
                        report.sup_additive,
                        report.argmax,
                    ))
                })
                .collect();
            let mut values = Vec::with_capacity(cfg.repeats);
            let mut cell_error = None;
            for (rep, score) in scores.into_iter().enumerate() {
                match score {
                    Ok((mult, add, qid)) => {
                        raw.push(RawRow {
                            sampler: tag.clone(),
                            m,
                            repeat: rep,
                            query_id: qid,
                            multiplicative: mult,
                            additive: add,
                        });
                        values.push(mult);
                    }
                    Err(e) => cell_error = Some(e.to_string()),
                }
            }
            if let Some(e) = cell_error {
                curve.unavailable.push((m, e));
                raw.retain(|r| !(r.sampler == tag && r.m == m));
                continue;
            }
            let (quantile, ci_half) = estimate_quantile(
                &values,
                cfg.quantile,
                derive_seed(cfg.seed, &[b"bootstrap", tag.as_bytes(), &m.to_le_bytes()]),
            );
            curve.points.push(CurvePoint {
                m,
                quantile,
                ci_half,
            });
        }
        let fit_points: Vec<(f64, f64)> = curve
            .points
            .iter()
            .map(|p| (p.m as f64, p.quantile))
            .collect();
        if let Ok((slope, stderr, _)) = fit_loglog_slope(&fit_points) {
            curve.slope = Some((slope, stderr));
        }
        if cfg.progress {
            eprintln!(
                "  {tag}: {} points, slope {:?} ({:.1}s)",
                curve.points.len(),
                curve.slope.map(|(s, _)| (s * 1000.0).round() / 1000.0),
                start.elapsed().as_secs_f64()
            );
        }
        curves.push(curve);
    }
    Ok(BenchmarkResult {
        curves,
        raw,
        dataset_label: data.label.clone(),
        n,
    })
}

/// Draw a single coreset with a configured sampler on a prepared dataset.
pub fn draw_coreset(
    data: &Dataset,
    spec: &SamplerSpec,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<Coreset> {
    let prepared = prepare(spec, data)?;
    let cell = build_cell(&prepared, data, m)?;
    cell.draw(data, m, k, seed)
}

/// Variance-scaling experiment: empirical Var[n^{-1} L_S(f)] of a fixed
/// query under one sampler across an m-grid, with the log-log slope fit.
/// Kernels are prepared once per grid point and shared across repeats.
pub fn variance_experiment(
    data: &Dataset,
    spec: &SamplerSpec,
    query: &Query,
    m_grid: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<crate::concentration::VarianceScaling> {
    query.validate(data)?;
    let prepared = prepare(spec, data)?;
    let mut cells = std::collections::HashMap::new();
    for &m in m_grid {
        cells.insert(m, build_cell(&prepared, data, m)?);
    }
    let n = data.len() as f64;
    let tag = spec.tag();
    let estimator = |m: usize, rep: usize| {
        let draw_seed = derive_seed(
            seed,
            &[
                b"variance",
                tag.as_bytes(),
                &m.to_le_bytes(),
                &rep.to_le_bytes(),
            ],
        );
        let coreset = cells[&m]
            .draw(data, m, 3, draw_seed)
            .expect("cell construction already validated");
        crate::eval::loss_coreset(&coreset, data, query) / n
    };
    crate::concentration::variance_scaling_fit(estimator, m_grid, repeats)
}

/// Order-statistic quantile at the 1-based index ceil(level * N), with a
/// 500-resample bootstrap half-width of its central 95% spread.
pub fn estimate_quantile(values: &[f64], level: f64, bootstrap_seed: u64) -> (f64, f64) {
    assert!(values.len() >= 2 && 0.0 < level && level < 1.0);
    use rand::{Rng, SeedableRng};
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let pick = |s: &[f64]| {
        let idx = (level * n as f64).ceil() as usize;
        s[idx.clamp(1, n) - 1]
    };
    let quantile = pick(&sorted);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(bootstrap_seed);
    let mut resampled = Vec::with_capacity(500);
    let mut buf = vec![0.0; n];
    for _ in 0..500 {
        for slot in buf.iter_mut() {
            *slot = sorted[rng.random_range(0..n)];
        }
        buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        resampled.push(pick(&buf));
    }
    resampled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = resampled[(0.025 * 500.0) as usize];
    let hi = resampled[(0.975 * 500.0) as usize - 1];
    (quantile, 0.5 * (hi - lo))
}

/// Ordinary least squares of log(quantile) on log(m). Nonpositive values
/// are dropped and reported; at least 3 usable points are required.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64, Vec<usize>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for (i, &(m, q)) in points.iter().enumerate() {
        if q > 0.0 && m > 0.0 {
            xs.push(m.ln());
            ys.push(q.ln());
        } else {
            dropped.push(i);
        }
    }
    if xs.len() < 3 {
        return Err(Error::Config(format!(
            "log-log fit needs at least 3 positive points, got {}",
            xs.len()
        )));
    }
    let (slope, _, stderr) = ols_line(&xs, &ys);
    Ok((slope, stderr, dropped))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Render the curve table: sampler,m,quantile,ci,slope,slope_err.
pub fn curves_csv(result: &BenchmarkResult) -> String {
    let mut s = String::from("sampler,m,quantile,ci,slope,slope_err\n");
    for curve in &result.curves {
        let (slope, err) = curve.slope.unwrap_or((f64::NAN, f64::NAN));
        for p in &curve.points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                curve.tag,
                p.m,
                fmt(p.quantile),
                fmt(p.ci_half),
                fmt(slope),
                fmt(err)
            ));
        }
    }
    s
}

/// Render the per-repeat table: sampler,m,repeat,query_id,multiplicative,additive.
pub fn raw_csv(result: &BenchmarkResult) -> String {
    let mut s = String::from("sampler,m,repeat,query_id,multiplicative,additive\n");
    for r in &result.raw {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sampler,
            r.m,
            r.repeat,
            r.query_id,
            fmt(r.multiplicative),
            fmt(r.additive)
        ));
    }
    s
}

/// One parsed row of `curves.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub sampler: String,
    pub m: usize,
    pub quantile: f64,
    pub ci: f64,
    pub slope: f64,
    pub slope_err: f64,
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad float {s:?}"),
            })
        };
        rows.push(CurveRow {
            sampler: fields[0].to_string(),
            m: fields[1].parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad integer {:?}", fields[1]),
            })?,
            quantile: num(fields[2])?,
            ci: num(fields[3])?,
            slope: num(fields[4])?,
            slope_err: num(fields[5])?,
        });
    }
    Ok(rows)
}

fn sanitize(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Write curves.csv, raw.csv, per-sampler .dat series, and a gnuplot script
/// with log-log axes (one series per sampler). Returns the written paths.
pub fn emit_outputs(result: &BenchmarkResult, outdir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();

    let curves_path = outdir.join("curves.csv");
    std::fs::write(&curves_path, curves_csv(result))?;
    written.push(curves_path);

    let raw_path = outdir.join("raw.csv");
    std::fs::write(&raw_path, raw_csv(result))?;
    written.push(raw_path);

    let mut plot = String::from(
        "set logscale xy\nset xlabel 'coreset size m'\nset ylabel 'quantile of worst-case relative error'\nset key outside\nset term pngcairo size 800,600\nset output 'curves.png'\nplot \\\n",
    );
    let mut series = Vec::new();
    for curve in &result.curves {
        if curve.points.is_empty() {
            continue;
        }
        let dat_path = outdir.join(format!("curve_{}.dat", sanitize(&curve.tag)));
        let mut dat = String::from("# m quantile ci\n");
        for p in &curve.points {
            dat.push_str(&format!("{} {} {}\n", p.m, fmt(p.quantile), fmt(p.ci_half)));
        }
        std::fs::write(&dat_path, dat)?;
        series.push(format!(
            "  'curve_{}.dat' using 1:2:3 with yerrorlines title '{}'",
            sanitize(&curve.tag),
            curve.tag
        ));
        written.push(dat_path);
    }
    plot.push_str(&series.join(", \\\n"));
    plot.push('\n');
    let plot_path = outdir.join("plot.gp");
    std::fs::write(&plot_path, plot)?;
    written.push(plot_path);
    Ok(written)
}
