use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hosfem::bench::{self, BenchConfig, Format};
use hosfem::roofline::{self, Bandwidth, HardwareProfile, ModelOptions, Toggle};
use hosfem::solver::{self, NekboneConfig};
use hosfem::verify::{self, VerifyScope};
use hosfem::{Equation, FactorSource, Result};

#[derive(Parser)]
#[command(name = "hosfem", version, about = "Matrix-free spectral element operators: verification, benchmarks and roofline bounds")]
struct Cli {
    /// Worker threads for kernel batches (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format: text, csv or json.
    #[arg(long, global = true, default_value = "text")]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the oracle and equivalence suites; exits nonzero on any failure.
    Verify(VerifyArgs),
    /// Time batched kernel applications and compare against the roofline.
    Bench(BenchArgs),
    /// Print roofline bounds for a sweep of kernel variants.
    Roofline(RooflineArgs),
    /// Solve the manufactured CG benchmark once per variant.
    Nekbone(NekboneArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict element-level suites to these orders.
    #[arg(long, value_delimiter = ',')]
    order: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    equation: Vec<Equation>,
    #[arg(long, value_delimiter = ',')]
    ncol: Vec<usize>,
    /// Suites to run (basis, operator, routes, jacobian, workload, roofline, nullspace).
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    /// Random elements per (order, equation) case.
    #[arg(long, default_value_t = 20)]
    elements_per_case: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    /// Hardware profile: a preset name (a100, k100) or a profile file.
    #[arg(long, default_value = "a100")]
    profile: String,
    /// Put the r/s contractions on matrix units: auto, on, off.
    #[arg(long, default_value = "auto")]
    tensor_cores: Toggle,
    /// Exclude the differentiation matrix from memory traffic: auto, on, off.
    #[arg(long, default_value = "auto")]
    diff_in_cache: Toggle,
    /// Overlap matrix-unit and general-core time instead of adding them.
    #[arg(long)]
    overlap: bool,
    /// Bandwidth used for T_mem: measured or theoretical.
    #[arg(long, default_value = "measured")]
    bandwidth: Bandwidth,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(HardwareProfile, ModelOptions)> {
        Ok((
            HardwareProfile::resolve(&self.profile)?,
            ModelOptions {
                tensor_cores: self.tensor_cores,
                diff_in_cache: self.diff_in_cache,
                overlap: self.overlap,
                bandwidth: self.bandwidth,
            },
        ))
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "poisson")]
    equation: Vec<Equation>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ncol: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "7")]
    order: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "stored")]
    variant: Vec<FactorSource>,
    /// Batch size: an element count E, or ExEyEz (product is used).
    #[arg(long, default_value = "4096")]
    elements: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Vertex jitter as a fraction of element size (default: 0 for parallelepiped, 0.1 otherwise).
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct RooflineArgs {
    #[arg(long, value_delimiter = ',', default_value = "poisson,helmholtz")]
    equation: Vec<Equation>,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    ncol: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "7")]
    order: Vec<usize>,
    /// Variants to include (default: all).
    #[arg(long, value_delimiter = ',')]
    variant: Vec<FactorSource>,
    /// List the built-in hardware presets and exit.
    #[arg(long)]
    list_presets: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct NekboneArgs {
    /// Key-value config file; flags given explicitly override it.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    /// Elements per axis: INT or ExEyEz.
    #[arg(long)]
    elements: Option<String>,
    #[arg(long)]
    equation: Option<Equation>,
    #[arg(long)]
    ncol: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    variant: Vec<FactorSource>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn emit_with<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    emit(&String::from_utf8_lossy(&buf))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let threads = cli.threads;
    let format = cli.format;
    match cli.command {
        Command::Verify(a) => {
            let defaults = VerifyScope::default();
            let scope = VerifyScope {
                orders: (!a.order.is_empty()).then_some(a.order),
                equations: if a.equation.is_empty() { defaults.equations } else { a.equation },
                n_cols: if a.ncol.is_empty() { defaults.n_cols } else { a.ncol },
                suites: (!a.suite.is_empty()).then_some(a.suite),
                elements_per_case: a.elements_per_case,
                seed: a.seed,
            };
            if let Some(s) = scope.suites.iter().flatten().find(|s| !verify::SUITES.contains(&s.as_str())) {
                return Err(hosfem::HosfemError::InvalidModel(format!("unknown suite '{s}'")));
            }
            let report = bench::with_threads(threads, || verify::run(&scope))?;
            match format {
                Format::Text => emit(&format!("{report}\n"))?,
                Format::Json => emit_with(|b| bench::write_json(&report, b))?,
                Format::Csv => emit_with(|b| {
                    let rows: Vec<_> = report
                        .suites
                        .iter()
                        .map(|s| (s.name.clone(), s.passed(), s.checks, s.worst_ratio, s.failures.len()))
                        .collect();
                    let mut w = Vec::new();
                    writeln!(w, "suite,passed,checks,worst_ratio,failures")?;
                    for (n, p, c, r, f) in rows {
                        writeln!(w, "{n},{p},{c},{r:e},{f}")?;
                    }
                    b.extend_from_slice(&w);
                    Ok(())
                })?,
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Bench(a) => {
            let (profile, model) = a.model.resolve()?;
            // A bare integer is the batch size itself, not a per-axis count.
            let elements = match a.elements.trim().parse::<usize>() {
                Ok(e) => e,
                Err(_) => solver::parse_elements(&a.elements)?.iter().product(),
            };
            let mut runs = Vec::new();
            for &equation in &a.equation {
                for &n_col in &a.ncol {
                    for &order in &a.order {
                        for &variant in &a.variant {
                            let cfg = BenchConfig {
                                equation,
                                n_col,
                                order,
                                variant,
                                elements,
                                repeats: a.repeats,
                                profile: profile.clone(),
                                model,
                                perturbation: a.perturbation,
                                seed: a.seed,
                            };
                            runs.push(bench::with_threads(threads, || bench::cmd_bench(&cfg))??);
                        }
                    }
                }
            }
            match format {
                Format::Text => emit(&bench::bench_text(&runs))?,
                Format::Csv => {
                    let recs: Vec<_> = runs.into_iter().map(|r| r.record).collect();
                    emit_with(|b| bench::write_csv(&recs, b))?
                }
                Format::Json => {
                    let recs: Vec<_> = runs.into_iter().map(|r| r.record).collect();
                    emit_with(|b| bench::write_json(&recs, b))?
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Roofline(a) => {
            if a.list_presets {
                let mut s = String::new();
                for name in HardwareProfile::PRESETS {
                    let p = HardwareProfile::preset(name).expect("preset");
                    s += &format!("# preset {name}\n{}\n", p.to_text());
                }
                emit(&s)?;
                return Ok(ExitCode::SUCCESS);
            }
            let (profile, model) = a.model.resolve()?;
            let variants = if a.variant.is_empty() { FactorSource::ALL.to_vec() } else { a.variant };
            let rows = roofline::roofline_sweep(&profile, &a.equation, &a.ncol, &a.order, &variants, &model)?;
            match format {
                Format::Text => emit(&bench::roofline_text(&rows))?,
                Format::Csv => emit_with(|b| bench::write_csv(&rows, b))?,
                Format::Json => emit_with(|b| bench::write_json(&rows, b))?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Nekbone(a) => {
            let mut cfg = match &a.config {
                Some(path) => NekboneConfig::parse(&std::fs::read_to_string(path)?)?,
                None => NekboneConfig::default(),
            };
            if let Some(v) = a.order {
                cfg.order = v;
            }
            if let Some(v) = &a.elements {
                cfg.elements = solver::parse_elements(v)?;
            }
            if let Some(v) = a.equation {
                cfg.equation = v;
            }
            if let Some(v) = a.ncol {
                cfg.n_col = v;
            }
            if !a.variant.is_empty() {
                cfg.variants = a.variant;
            }
            if let Some(v) = a.tol {
                cfg.tol = v;
            }
            if let Some(v) = a.max_iter {
                cfg.max_iter = v;
            }
            if let Some(v) = a.perturbation {
                cfg.perturbation = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            let report = bench::with_threads(threads, || solver::nekbone_benchmark(&cfg))??;
            match format {
                Format::Text => emit(&bench::nekbone_text(&report))?,
                Format::Csv => emit_with(|b| bench::write_csv(&report.rows, b))?,
                Format::Json => emit_with(|b| bench::write_json(&report, b))?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
