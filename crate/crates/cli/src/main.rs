//! Command-line surface: run the quantile-curve benchmark, the oracle
//! verification suites, single coreset draws, tail-bound evaluations, and
//! variance-scaling fits.

use clap::{Parser, Subcommand};
use dppcore::bench::{
    draw_coreset, emit_outputs, run_benchmark, variance_experiment, ExperimentConfig, SamplerKind,
    SamplerSpec,
};
use dppcore::concentration::{
    cardinality_battery, coreset_tail_bound, dpp_battery, hermitian_tail_battery,
    identity_battery, lemma_battery, mdpp_battery, nonsymmetric_tail_battery,
    vector_coreset_tail_bound, vector_tail_bound, hermitian_tail_bound, nonsymmetric_tail_bound,
    vector_tail_battery, BoundParams, CoresetRegime, TailEntry,
};
use dppcore::data::{gen_trimodal, gen_uniform, Dataset};
use dppcore::eval::Query;
use dppcore::kernels::KernelNorms;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dppcore",
    about = "Determinantal coreset sampling benchmark and verification suite",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the quantile-curve benchmark described by a config file.
    Bench {
        /// Line-oriented `key = value` config with [sampler.NAME] sections.
        #[arg(long)]
        config: PathBuf,
        /// Print per-sampler progress to stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Run an oracle verification suite.
    Verify {
        /// One of: dpp, mdpp, concentration, lemmas.
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw one coreset and emit it as CSV.
    Sample {
        /// uniform, sensitivity, G-mDPP, OPE, Vdm-DPP, or stratified.
        #[arg(long)]
        sampler: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// uniform or trimodal.
        #[arg(long, default_value = "uniform")]
        dataset: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Gaussian bandwidth (G-mDPP only).
        #[arg(long)]
        h: Option<f64>,
        /// Query size for the sensitivity sampler.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a tail bound at one epsilon.
    Bounds {
        /// 1 = hermitian, 2 = non-symmetric, 3 = vector statistic,
        /// 4 = uniform coreset, 5 = vector coreset.
        #[arg(long)]
        theorem: u8,
        #[arg(long)]
        eps: f64,
        /// Variance (theorems 1, 2) or comma-separated variances (3).
        #[arg(long)]
        var: Option<String>,
        /// Sup norm (1, 2) or comma-separated sup norms (3).
        #[arg(long)]
        supnorm: Option<String>,
        /// Universal-constant stand-in.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Spectral norm of the kernel (theorem 2).
        #[arg(long)]
        op_norm: Option<f64>,
        /// Nuclear norm of the kernel (theorem 2).
        #[arg(long)]
        nuclear: Option<f64>,
        /// Comma-separated norm weights (theorem 3).
        #[arg(long)]
        omega: Option<String>,
        /// finite or parametrized (theorem 4).
        #[arg(long, default_value = "finite")]
        regime: String,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Dimension D of the query span or parameter space.
        #[arg(long, default_value_t = 1.0)]
        d_dim: f64,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
        #[arg(long, default_value_t = 1.0)]
        b_card: f64,
        #[arg(long, default_value_t = 1.0)]
        theta_diam: f64,
        /// Variance proxy V.
        #[arg(long)]
        v: Option<f64>,
        /// Expected coreset size m.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        sup_query: f64,
        /// Constant of the parametrized regime.
        #[arg(long, default_value_t = 1.0)]
        c_param: f64,
        /// Number of coordinates (theorem 5).
        #[arg(long, default_value_t = 1)]
        p: usize,
    },
    /// Fit the variance-vs-size scaling of one sampler.
    Variance {
        /// uniform, OPE, Vdm-DPP, or G-mDPP.
        #[arg(long)]
        sampler: String,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        m_grid: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DPPCORE_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .ok();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failure: {msg}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Usage(String),
    Validation(String),
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Bench { config, progress } => cmd_bench(config, progress),
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
        Command::Sample {
            sampler,
            m,
            seed,
            dataset,
            n,
            d,
            h,
            k,
            out,
        } => cmd_sample(&sampler, m, seed, &dataset, n, d, h, k, out),
        Command::Bounds {
            theorem,
            eps,
            var,
            supnorm,
            a,
            op_norm,
            nuclear,
            omega,
            regime,
            rho,
            c,
            d_dim,
            ell,
            b_card,
            theta_diam,
            v,
            m,
            sup_query,
            c_param,
            p,
        } => {
            let entry = eval_bound(BoundsArgs {
                theorem,
                eps,
                var,
                supnorm,
                a,
                op_norm,
                nuclear,
                omega,
                regime,
                rho,
                c,
                d_dim,
                ell,
                b_card,
                theta_diam,
                v,
                m,
                sup_query,
                c_param,
                p,
            })?;
            println!(
                "theorem {theorem}: eps = {:.12} bound = {:.12} range_limit = {:.12} in_range = {}",
                entry.eps, entry.bound, entry.eps_max, entry.in_range
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Variance {
            sampler,
            n,
            d,
            h,
            m_grid,
            repeats,
            seed,
        } => cmd_variance(&sampler, n, d, h, m_grid, repeats, seed),
    }
}

fn cmd_bench(config: PathBuf, progress: bool) -> Result<ExitCode, Failure> {
    if !config.exists() {
        return Err(Failure::Usage(format!(
            "config file {} does not exist",
            config.display()
        )));
    }
    let mut cfg = ExperimentConfig::from_file(&config)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.progress = progress;
    eprintln!(
        "running benchmark: {} samplers, m-grid {:?}, {} repeats, seed {}",
        cfg.samplers.len(),
        cfg.m_grid,
        cfg.repeats,
        cfg.seed
    );
    let result = run_benchmark(&cfg).map_err(|e| Failure::Validation(e.to_string()))?;
    for curve in &result.curves {
        match curve.slope {
            Some((slope, err)) => println!(
                "{}: slope {:.4} +- {:.4} over {} points",
                curve.tag,
                slope,
                err,
                curve.points.len()
            ),
            None => println!("{}: no slope ({} points)", curve.tag, curve.points.len()),
        }
        for (m, why) in &curve.unavailable {
            println!("{}: m = {m} unavailable ({why})", curve.tag);
        }
    }
    if let Some(outdir) = &cfg.outdir {
        let files =
            emit_outputs(&result, outdir).map_err(|e| Failure::Validation(e.to_string()))?;
        for f in files {
            println!("wrote {}", f.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str, seed: u64) -> Result<ExitCode, Failure> {
    let summaries = match suite {
        "dpp" => vec![dpp_battery(8, 8, 20_000, seed)],
        "mdpp" => vec![mdpp_battery(6, 8, 20_000, seed)],
        "concentration" => {
            let (tails, min_a) = hermitian_tail_battery(40, seed);
            let mut all = vec![
                identity_battery(30, 8, seed),
                tails,
                nonsymmetric_tail_battery(8, seed),
                vector_tail_battery(20, seed),
                cardinality_battery(10, seed),
            ];
            let ok = min_a.iter().filter(|&&a| a <= 1.0).count();
            all[1]
                .notes
                .push(format!("instances restored at unit constant: {ok}/{}", min_a.len()));
            all
        }
        "lemmas" => vec![lemma_battery(100, seed)],
        other => {
            return Err(Failure::Usage(format!(
                "unknown suite {other:?}; valid suites: dpp, mdpp, concentration, lemmas"
            )))
        }
    };
    let mut all_passed = true;
    for s in &summaries {
        print!("{}", s.render());
        all_passed &= s.passed();
    }
    if all_passed {
        println!("all suites passed");
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Failure::Validation(format!("suite {suite} failed")))
    }
}

fn build_cli_dataset(dataset: &str, n: usize, d: usize, seed: u64) -> Result<Dataset, Failure> {
    match dataset {
        "uniform" => Ok(gen_uniform(n, d, seed)),
        "trimodal" => Ok(gen_trimodal(n, d, seed)),
        other => Err(Failure::Usage(format!(
            "unknown dataset {other:?}; valid: uniform, trimodal"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    sampler: &str,
    m: usize,
    seed: u64,
    dataset: &str,
    n: usize,
    d: usize,
    h: Option<f64>,
    k: usize,
    out: Option<PathBuf>,
) -> Result<ExitCode, Failure> {
    let kind = SamplerKind::parse(sampler).map_err(|e| Failure::Usage(e.to_string()))?;
    let data = build_cli_dataset(dataset, n, d, seed)?;
    let spec = SamplerSpec {
        kind,
        bandwidth: h.or(match kind {
            SamplerKind::GaussianMdpp => Some(0.2),
            _ => None,
        }),
    };
    let coreset = draw_coreset(&data, &spec, m, k, seed)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let csv = coreset.to_csv();
    match out {
        Some(path) => {
            std::fs::write(&path, csv).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

struct BoundsArgs {
    theorem: u8,
    eps: f64,
    var: Option<String>,
    supnorm: Option<String>,
    a: f64,
    op_norm: Option<f64>,
    nuclear: Option<f64>,
    omega: Option<String>,
    regime: String,
    rho: f64,
    c: f64,
    d_dim: f64,
    ell: f64,
    b_card: f64,
    theta_diam: f64,
    v: Option<f64>,
    m: f64,
    sup_query: f64,
    c_param: f64,
    p: usize,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad {what} entry {f:?}")))
        })
        .collect()
}

fn eval_bound(args: BoundsArgs) -> Result<TailEntry, Failure> {
    let scalar = |opt: &Option<String>, name: &str| -> Result<f64, Failure> {
        opt.as_ref()
            .ok_or_else(|| Failure::Usage(format!("theorem {} requires --{name}", args.theorem)))?
            .parse()
            .map_err(|_| Failure::Usage(format!("bad --{name} value")))
    };
    match args.theorem {
        1 => Ok(hermitian_tail_bound(
            scalar(&args.var, "var")?,
            scalar(&args.supnorm, "supnorm")?,
            args.a,
            args.eps,
        )),
        2 => {
            let norms = KernelNorms {
                operator: args
                    .op_norm
                    .ok_or_else(|| Failure::Usage("theorem 2 requires --op-norm".into()))?,
                nuclear: args
                    .nuclear
                    .ok_or_else(|| Failure::Usage("theorem 2 requires --nuclear".into()))?,
            };
            Ok(nonsymmetric_tail_bound(
                scalar(&args.var, "var")?,
                scalar(&args.supnorm, "supnorm")?,
                norms,
                args.eps,
            ))
        }
        3 => {
            let vars = parse_list(
                args.var
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("theorem 3 requires --var".into()))?,
                "var",
            )?;
            let sups = parse_list(
                args.supnorm
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("theorem 3 requires --supnorm".into()))?,
                "supnorm",
            )?;
            let omega = match &args.omega {
                Some(s) => parse_list(s, "omega")?,
                None => vec![1.0; vars.len()],
            };
            if sups.len() != vars.len() || omega.len() != vars.len() {
                return Err(Failure::Usage(
                    "theorem 3 lists --var, --supnorm, --omega must have equal length".into(),
                ));
            }
            Ok(vector_tail_bound(&vars, &sups, &omega, args.a, args.eps))
        }
        4 | 5 => {
            let params = BoundParams {
                a: args.a,
                rho: args.rho,
                c: args.c,
                span_dim: args.d_dim,
                lipschitz: args.ell,
                cardinality_factor: args.b_card,
                theta_diameter: args.theta_diam,
                variance_proxy: args
                    .v
                    .ok_or_else(|| Failure::Usage("theorems 4 and 5 require --v".into()))?,
                expected_size: args.m,
                sup_query: args.sup_query,
                param_constant: args.c_param,
            };
            if args.theorem == 4 {
                let regime = match args.regime.as_str() {
                    "finite" => CoresetRegime::FiniteDimensional,
                    "parametrized" => CoresetRegime::Parametrized,
                    other => {
                        return Err(Failure::Usage(format!(
                            "unknown regime {other:?}; valid: finite, parametrized"
                        )))
                    }
                };
                Ok(coreset_tail_bound(&params, regime, args.eps))
            } else {
                Ok(vector_coreset_tail_bound(&params, args.p, args.eps))
            }
        }
        other => Err(Failure::Usage(format!(
            "unknown theorem {other}; valid: 1, 2, 3, 4, 5"
        ))),
    }
}

fn cmd_variance(
    sampler: &str,
    n: usize,
    d: usize,
    h: Option<f64>,
    m_grid: Option<Vec<usize>>,
    repeats: usize,
    seed: u64,
) -> Result<ExitCode, Failure> {
    let kind = SamplerKind::parse(sampler).map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = SamplerSpec {
        kind,
        bandwidth: h.or(match kind {
            SamplerKind::GaussianMdpp => Some(0.2),
            _ => None,
        }),
    };
    let data = gen_uniform(n, d, seed);
    let m_grid = m_grid.unwrap_or_else(|| vec![8, 16, 32, 64, 128, 256]);
    // smooth fixed query
    let values: Vec<f64> = (0..data.len())
        .map(|i| {
            let norm_sq: f64 = data.points.row(i).iter().map(|x| x * x).sum();
            (-norm_sq).exp()
        })
        .collect();
    let query = Query::Table(values);
    let fit = variance_experiment(&data, &spec, &query, &m_grid, repeats, seed)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    for p in &fit.points {
        println!(
            "m = {:4}  variance = {:.6e}  (mc error {:.1e})",
            p.m, p.variance, p.std_error
        );
    }
    for m in &fit.dropped {
        println!("m = {m}: dropped (nonpositive variance estimate)");
    }
    println!("slope = {:.4} +- {:.4}", fit.slope, fit.stderr);
    Ok(ExitCode::SUCCESS)
}
