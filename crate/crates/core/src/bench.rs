//! Kernel micro-benchmarks, report formatting and thread-pool control for
//! the command-line tool.

use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axlocal::workload::workload_count;
use crate::axlocal::{Equation, FactorSource, HelmholtzCoefficients, KernelSpec, PreparedOperator};
use crate::error::{HosfemError, Result};
use crate::mesh::{reference_vertices, Element, LocalField, Vertices};
use crate::roofline::{measured_performance, roofline_bounds_with, HardwareProfile, KernelModel, ModelOptions, RooflineRow};
use crate::solver::NekboneReport;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(HosfemError::InvalidModel("thread count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HosfemError::InvalidModel(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// One benchmark measurement. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub equation: Equation,
    pub n_col: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub variant: String,
    #[serde(rename = "E")]
    pub elements: usize,
    pub repeats: usize,
    pub best_time_s: f64,
    #[serde(rename = "P_eff")]
    pub p_eff: f64,
    #[serde(rename = "P_tot")]
    pub p_tot: f64,
    #[serde(rename = "roofline_R_eff")]
    pub roofline_r_eff: f64,
    pub efficiency_pct: f64,
}

impl BenchRecord {
    /// Efficiencies above this are treated as measurement artefacts.
    pub const EFFICIENCY_FLAG_PCT: f64 = 110.0;

    pub fn efficiency_suspicious(&self) -> bool {
        self.efficiency_pct > Self::EFFICIENCY_FLAG_PCT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub equation: Equation,
    pub n_col: usize,
    pub order: usize,
    pub variant: FactorSource,
    pub elements: usize,
    pub repeats: usize,
    pub profile: HardwareProfile,
    pub model: ModelOptions,
    /// Vertex jitter as a fraction of the element size. `None`: zero for the
    /// parallelepiped variant, 0.1 otherwise.
    pub perturbation: Option<f64>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            equation: Equation::Poisson,
            n_col: 1,
            order: 7,
            variant: FactorSource::Stored,
            elements: 4096,
            repeats: 5,
            profile: HardwareProfile::a100(),
            model: ModelOptions::default(),
            perturbation: None,
            seed: 7,
        }
    }
}

/// Result of one benchmark: the record plus a hash of the kernel output,
/// which is independent of timing and of the worker count.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub record: BenchRecord,
    pub output_hash: u64,
}

/// `count` unit-size elements with every vertex jittered by up to
/// `perturbation` per axis. Zero jitter yields translated cubes.
pub fn bench_elements(count: usize, perturbation: f64, seed: u64) -> Result<Vec<Element>> {
    if !(0.0..0.5).contains(&perturbation) {
        return Err(HosfemError::InvalidMesh(format!("perturbation must be in [0, 0.5), got {perturbation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|e| {
            let shift = [(e % 16) as f64, ((e / 16) % 16) as f64, (e / 256) as f64];
            let v: Vertices = reference_vertices().map(|p| {
                std::array::from_fn(|d| {
                    let jitter = if perturbation > 0.0 { rng.gen_range(-1.0..=1.0) * perturbation } else { 0.0 };
                    shift[d] + 0.5 * p[d] + jitter
                })
            });
            Element::classify(v)
        })
        .collect())
}

fn hash_values(values: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Times the batched kernel `repeats` times (setup excluded) and reports the
/// fastest run against the roofline of `cfg.profile`.
pub fn cmd_bench(cfg: &BenchConfig) -> Result<BenchRun> {
    if cfg.repeats == 0 || cfg.elements == 0 {
        return Err(HosfemError::InvalidModel("repeats and elements must be at least 1".into()));
    }
    let spec = KernelSpec::new(cfg.equation, cfg.n_col, cfg.variant, cfg.order)?;
    let perturbation = cfg.perturbation.unwrap_or(match cfg.variant {
        FactorSource::ParallelepipedRecompute => 0.0,
        _ => 0.1,
    });
    let elements = bench_elements(cfg.elements, perturbation, cfg.seed)?;
    let coeffs = HelmholtzCoefficients::constant(cfg.elements, cfg.order, 1.0, 1.0);
    let op = PreparedOperator::new(spec, &elements, Some(&coeffs))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xbe7c);
    let n = (cfg.order + 1).pow(3) * cfg.n_col * cfg.elements;
    let x = LocalField::from_vec(cfg.elements, cfg.order, cfg.n_col, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let mut y = LocalField::zeros(cfg.elements, cfg.order, cfg.n_col);

    let mut best = f64::INFINITY;
    for _ in 0..cfg.repeats {
        let start = Instant::now();
        op.apply(&x, &mut y)?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    // Guard against a zero reading on coarse clocks.
    let best = best.max(1e-9);

    let w = workload_count(&spec);
    let e = cfg.elements as f64;
    let (p_eff, p_tot) = measured_performance(e * w.f_ax as f64, e * w.f_geo as f64, best)?;
    let model = KernelModel::from_spec(&spec, &cfg.profile, &cfg.model)?;
    let bound = roofline_bounds_with(&model, &cfg.profile, &cfg.model)?;
    Ok(BenchRun {
        record: BenchRecord {
            equation: cfg.equation,
            n_col: cfg.n_col,
            order: cfg.order,
            variant: cfg.variant.name().to_string(),
            elements: cfg.elements,
            repeats: cfg.repeats,
            best_time_s: best,
            p_eff,
            p_tot,
            roofline_r_eff: bound.r_eff,
            efficiency_pct: 100.0 * p_eff / bound.r_eff,
        },
        output_hash: hash_values(y.as_slice()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = HosfemError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(HosfemError::InvalidModel(format!("unknown format '{s}'"))),
        }
    }
}

fn csv_error(e: csv::Error) -> HosfemError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HosfemError::Io(io),
        other => HosfemError::Parse { line: 0, msg: format!("{other:?}") },
    }
}

/// Writes `rows` as CSV with one header row.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bench_csv(input: impl Read) -> Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| HosfemError::Parse { line: 0, msg: e.to_string() })?;
    writeln!(out)?;
    Ok(())
}

pub fn read_bench_json(input: impl Read) -> Result<Vec<BenchRecord>> {
    serde_json::from_reader(input).map_err(|e| HosfemError::Parse { line: e.line(), msg: e.to_string() })
}

pub fn bench_text(runs: &[BenchRun]) -> String {
    let mut s = format!(
        "{:<10} {:>5} {:>3} {:<18} {:>8} {:>7} {:>12} {:>12} {:>12} {:>12} {:>8}  {}\n",
        "equation", "n_col", "N", "variant", "E", "repeats", "best_time_s", "P_eff", "P_tot", "R_eff", "eff_%", "output_hash"
    );
    for run in runs {
        let r = &run.record;
        s += &format!(
            "{:<10} {:>5} {:>3} {:<18} {:>8} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3}  {:016x}{}\n",
            r.equation.name(),
            r.n_col,
            r.order,
            r.variant,
            r.elements,
            r.repeats,
            r.best_time_s,
            r.p_eff,
            r.p_tot,
            r.roofline_r_eff,
            r.efficiency_pct,
            run.output_hash,
            if r.efficiency_suspicious() { "  (efficiency above 110%, suspect timing)" } else { "" }
        );
    }
    s
}

pub fn roofline_text(rows: &[RooflineRow]) -> String {
    let mut s = format!(
        "{:<6} {:<10} {:>5} {:>3} {:<18} {:>9} {:>9} {:>9} {:>9} {:>8} {:>11} {:>11} {:>11} {:>11}  {}\n",
        "hw", "equation", "n_col", "N", "variant", "F_ax", "F_geo", "M_bytes", "F_matrix", "I", "T_cmp", "T_mem", "R_eff", "R_tot", "bound"
    );
    for r in rows {
        s += &format!(
            "{:<6} {:<10} {:>5} {:>3} {:<18} {:>9} {:>9} {:>9} {:>9} {:>8.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}  {}\n",
            r.profile,
            r.equation.name(),
            r.n_col,
            r.order,
            r.variant,
            r.f_ax,
            r.f_geo,
            r.m_bytes,
            r.matrix_unit_flops,
            r.intensity,
            r.t_cmp,
            r.t_mem,
            r.r_eff,
            r.r_tot,
            r.bound
        );
    }
    s
}

pub fn nekbone_text(report: &NekboneReport) -> String {
    let c = &report.config;
    let mut s = format!(
        "mesh {}x{}x{} N={} global_nodes={} equation={} n_col={} perturbation={} tol={:e}\n",
        c.elements[0], c.elements[1], c.elements[2], c.order, report.global_nodes, c.equation, c.n_col, c.perturbation, c.tol
    );
    s += &format!(
        "{:<18} {:>6} {:>9} {:>14} {:>14} {:>12} {:>10} {:>8}\n",
        "variant", "iter", "converged", "rel_residual", "error", "wall_time_s", "GFLOP/s", "ax_share"
    );
    for r in &report.rows {
        s += &format!(
            "{:<18} {:>6} {:>9} {:>14.6e} {:>14.6e} {:>12.4e} {:>10.3} {:>8.3}\n",
            r.variant, r.iterations, r.converged, r.final_relative_residual, r.error, r.wall_time_s, r.gflops_eff, r.axlocal_share
        );
    }
    for (v, why) in &report.skipped {
        s += &format!("skipped {v}: {why}\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(variant: FactorSource, eq: Equation) -> BenchConfig {
        BenchConfig { equation: eq, order: 3, variant, elements: 16, repeats: 2, ..Default::default() }
    }

    #[test]
    fn accounting_identity() {
        let run = cmd_bench(&quick(FactorSource::TrilinearRecompute, Equation::Helmholtz)).unwrap();
        let r = &run.record;
        let spec = KernelSpec::new(Equation::Helmholtz, 1, FactorSource::TrilinearRecompute, 3).unwrap();
        let f_ax = workload_count(&spec).f_ax as f64;
        assert!((r.p_eff * r.best_time_s - 16.0 * f_ax).abs() <= 1e-9 * 16.0 * f_ax);
        assert!(r.p_eff <= r.p_tot);
        assert!(r.efficiency_pct > 0.0);
    }

    #[test]
    fn parallelepiped_bench_defaults_to_cubes() {
        assert!(cmd_bench(&quick(FactorSource::ParallelepipedRecompute, Equation::Poisson)).is_ok());
        let cfg = BenchConfig { perturbation: Some(0.2), ..quick(FactorSource::ParallelepipedRecompute, Equation::Poisson) };
        assert!(cmd_bench(&cfg).is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let runs: Vec<_> = [FactorSource::Stored, FactorSource::TrilinearPartial]
            .into_iter()
            .map(|v| cmd_bench(&quick(v, Equation::Poisson)).unwrap().record)
            .collect();
        let mut buf = Vec::new();
        write_csv(&runs, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with(
            "equation,n_col,N,variant,E,repeats,best_time_s,P_eff,P_tot,roofline_R_eff,efficiency_pct\n"
        ));
        assert_eq!(read_bench_csv(&buf[..]).unwrap(), runs);
        let mut js = Vec::new();
        write_json(&runs, &mut js).unwrap();
        assert_eq!(read_bench_json(&js[..]).unwrap(), runs);
    }

    #[test]
    fn output_hash_is_thread_independent() {
        let cfg = quick(FactorSource::TrilinearRecompute, Equation::Poisson);
        let a = with_threads(Some(1), || cmd_bench(&cfg)).unwrap().unwrap();
        let b = with_threads(Some(4), || cmd_bench(&cfg)).unwrap().unwrap();
        assert_eq!(a.output_hash, b.output_hash);
    }
}
