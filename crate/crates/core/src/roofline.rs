//! Time-based roofline model.
//!
//! A kernel is described by its effective FLOPs `F_ax`, the recomputation
//! FLOPs `F_geo`, its memory traffic `M` and the share of `F_ax` that runs on
//! matrix-multiply units. The bound is
//!
//! ```text
//! T_mem = M / B
//! T_cmp = F_mat / P_mat + (F_ax + F_geo - F_mat) / P_gen
//! R_eff = F_ax / max(T_cmp, T_mem),  R_tot = (F_ax + F_geo) / max(T_cmp, T_mem)
//! ```
//!
//! With no recomputation and no matrix units this is the classical
//! `min(P, I * B)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::axlocal::workload::workload_count;
use crate::axlocal::{Equation, FactorSource, KernelSpec};
use crate::error::{HosfemError, Result};
use crate::FP_SIZE;

/// Throughput and bandwidth of one platform, in FLOP/s and bytes/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub peak_general: f64,
    pub peak_matrix: Option<f64>,
    pub bandwidth_measured: f64,
    pub bandwidth_theoretical: f64,
}

impl HardwareProfile {
    /// NVIDIA A100: 9.7 TFLOP/s FP64 cores, 19.5 TFLOP/s FP64 tensor cores,
    /// 1360 GB/s measured and 1555 GB/s nominal bandwidth.
    pub fn a100() -> Self {
        Self {
            name: "a100".into(),
            peak_general: 9.7e12,
            peak_matrix: Some(19.5e12),
            bandwidth_measured: 1.36e12,
            bandwidth_theoretical: 1.555e12,
        }
    }

    /// Hygon K100: 24.5 TFLOP/s FP64, no FP64 matrix units, 520 GB/s
    /// measured and 768 GB/s nominal bandwidth.
    pub fn k100() -> Self {
        Self {
            name: "k100".into(),
            peak_general: 24.5e12,
            peak_matrix: None,
            bandwidth_measured: 5.2e11,
            bandwidth_theoretical: 7.68e11,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["a100", "k100"];

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a100" => Some(Self::a100()),
            "k100" => Some(Self::k100()),
            _ => None,
        }
    }

    /// A preset name or a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::preset(name_or_path) {
            Some(p) => Ok(p),
            None => Self::from_file(name_or_path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HosfemError::InvalidProfile(format!("{}: {msg}", self.name)));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.peak_general) {
            return bad(format!("peak_general must be positive, got {}", self.peak_general));
        }
        if let Some(p) = self.peak_matrix {
            if !positive(p) {
                return bad(format!("peak_matrix must be positive, got {p}"));
            }
        }
        if !positive(self.bandwidth_measured) || !positive(self.bandwidth_theoretical) {
            return bad("bandwidths must be positive".into());
        }
        if self.bandwidth_measured > self.bandwidth_theoretical {
            return bad(format!(
                "measured bandwidth {} exceeds theoretical {}",
                self.bandwidth_measured, self.bandwidth_theoretical
            ));
        }
        Ok(())
    }

    /// Parses `key = value` lines. Keys: `name`, `peak_general`,
    /// `peak_matrix` (optional; `none` allowed), `bandwidth_measured`,
    /// `bandwidth_theoretical`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut peak_general = None;
        let mut peak_matrix = None;
        let mut bw_meas = None;
        let mut bw_theo = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| HosfemError::Parse { line: n + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|_| err(format!("invalid number '{value}' for {key}")));
            match key {
                "name" => name = Some(value.to_string()),
                "peak_general" => peak_general = Some(num()?),
                "peak_matrix" => {
                    peak_matrix = if value.eq_ignore_ascii_case("none") { None } else { Some(num()?) }
                }
                "bandwidth_measured" => bw_meas = Some(num()?),
                "bandwidth_theoretical" => bw_theo = Some(num()?),
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        let missing = |k: &str| HosfemError::InvalidProfile(format!("missing key '{k}'"));
        let profile = Self {
            name: name.unwrap_or_else(|| "custom".into()),
            peak_general: peak_general.ok_or_else(|| missing("peak_general"))?,
            peak_matrix,
            bandwidth_measured: bw_meas.ok_or_else(|| missing("bandwidth_measured"))?,
            bandwidth_theoretical: bw_theo.ok_or_else(|| missing("bandwidth_theoretical"))?,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`HardwareProfile::parse`].
    pub fn to_text(&self) -> String {
        let matrix = self.peak_matrix.map_or("none".to_string(), |p| format!("{p:e}"));
        format!(
            "name = {}\npeak_general = {:e}\npeak_matrix = {}\nbandwidth_measured = {:e}\nbandwidth_theoretical = {:e}\n",
            self.name, self.peak_general, matrix, self.bandwidth_measured, self.bandwidth_theoretical
        )
    }

    pub fn bandwidth(&self, which: Bandwidth) -> f64 {
        match which {
            Bandwidth::Measured => self.bandwidth_measured,
            Bandwidth::Theoretical => self.bandwidth_theoretical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Measured,
    Theoretical,
}

impl FromStr for Bandwidth {
    type Err = HosfemError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "measured" => Ok(Self::Measured),
            "theoretical" | "nominal" => Ok(Self::Theoretical),
            _ => Err(HosfemError::InvalidModel(format!("unknown bandwidth '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Peak {
    General,
    Matrix,
}

/// Three-way switch for model options whose default depends on the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    #[default]
    Auto,
    On,
    Off,
}

impl FromStr for Toggle {
    type Err = HosfemError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "on" | "yes" | "true" => Ok(Self::On),
            "off" | "no" | "false" => Ok(Self::Off),
            _ => Err(HosfemError::InvalidModel(format!("expected auto, on or off, got '{s}'"))),
        }
    }
}

/// How a [`KernelSpec`] is turned into a [`KernelModel`] and timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Run the `r`/`s` contractions (`8 N1^4` per column) on matrix units.
    /// `Auto`: only when the profile has them, `N1 = 8`, and factors are
    /// recomputed.
    pub tensor_cores: Toggle,
    /// Keep the differentiation matrix out of DRAM traffic (constant memory
    /// or cache). `Auto`: on for every recomputing variant.
    pub diff_in_cache: Toggle,
    /// Matrix-unit and general-core time overlap (`max`) instead of adding.
    pub overlap: bool,
    pub bandwidth: Bandwidth,
}

/// Per-element workload fed to the roofline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub f_ax: f64,
    pub f_geo: f64,
    pub m_bytes: f64,
    pub matrix_unit_flops: f64,
}

impl KernelModel {
    pub fn new(f_ax: f64, f_geo: f64, m_bytes: f64, matrix_unit_flops: f64) -> Result<Self> {
        let m = Self { f_ax, f_geo, m_bytes, matrix_unit_flops };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.f_ax) && ok(self.f_geo) && ok(self.matrix_unit_flops)) || !(self.m_bytes > 0.0) {
            return Err(HosfemError::InvalidModel(format!("invalid kernel model {self:?}")));
        }
        if self.matrix_unit_flops > self.f_ax + self.f_geo {
            return Err(HosfemError::InvalidModel(format!(
                "matrix-unit FLOPs {} exceed total {}",
                self.matrix_unit_flops,
                self.f_ax + self.f_geo
            )));
        }
        Ok(())
    }

    /// Builds the model of a kernel variant under `opts` for `hw`.
    pub fn from_spec(spec: &KernelSpec, hw: &HardwareProfile, opts: &ModelOptions) -> Result<Self> {
        let w = workload_count(spec);
        let n1 = spec.n1() as u64;
        let recomputes = spec.factor_source != FactorSource::Stored;
        let matrix = match opts.tensor_cores {
            Toggle::Off => false,
            Toggle::On => true,
            Toggle::Auto => hw.peak_matrix.is_some() && n1 == 8 && recomputes,
        };
        let cache_d = match opts.diff_in_cache {
            Toggle::Off => false,
            Toggle::On => true,
            Toggle::Auto => recomputes,
        };
        let m_bytes = w.m_bytes - if cache_d { n1 * n1 * FP_SIZE } else { 0 };
        let matrix_unit_flops = if matrix { 8 * n1.pow(4) * spec.n_col as u64 } else { 0 };
        Self::new(w.f_ax as f64, w.f_geo as f64, m_bytes as f64, matrix_unit_flops as f64)
    }

    pub fn intensity(&self) -> f64 {
        self.f_ax / self.m_bytes
    }
}

/// `I = F / M` in FLOP/byte.
pub fn operational_intensity(flops: f64, bytes: f64) -> Result<f64> {
    if !(bytes > 0.0) {
        return Err(HosfemError::InvalidModel(format!("memory traffic must be positive, got {bytes}")));
    }
    Ok(flops / bytes)
}

/// Machine balance `P / B`.
pub fn machine_balance(hw: &HardwareProfile, peak: Peak, bandwidth: Bandwidth) -> Result<f64> {
    let p = match peak {
        Peak::General => hw.peak_general,
        Peak::Matrix => hw
            .peak_matrix
            .ok_or_else(|| HosfemError::InvalidProfile(format!("{} has no matrix units", hw.name)))?,
    };
    Ok(p / hw.bandwidth(bandwidth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Memory,
    Compute,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Memory => "memory",
            Self::Compute => "compute",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflineBounds {
    pub t_cmp: f64,
    pub t_mem: f64,
    pub r_eff: f64,
    pub r_tot: f64,
    pub bound: BoundKind,
}

/// Bounds with measured bandwidth and additive compute times.
pub fn roofline_bounds(model: &KernelModel, hw: &HardwareProfile) -> Result<RooflineBounds> {
    roofline_bounds_with(model, hw, &ModelOptions::default())
}

/// Bounds using the bandwidth and overlap choices of `opts`.
pub fn roofline_bounds_with(model: &KernelModel, hw: &HardwareProfile, opts: &ModelOptions) -> Result<RooflineBounds> {
    model.validate()?;
    let general = (model.f_ax + model.f_geo - model.matrix_unit_flops) / hw.peak_general;
    let matrix = if model.matrix_unit_flops > 0.0 {
        let p = hw.peak_matrix.ok_or_else(|| {
            HosfemError::InvalidModel(format!("matrix-unit FLOPs requested but {} has no matrix units", hw.name))
        })?;
        model.matrix_unit_flops / p
    } else {
        0.0
    };
    let t_cmp = if opts.overlap { general.max(matrix) } else { general + matrix };
    let t_mem = model.m_bytes / hw.bandwidth(opts.bandwidth);
    let t = t_cmp.max(t_mem);
    Ok(RooflineBounds {
        t_cmp,
        t_mem,
        r_eff: model.f_ax / t,
        r_tot: (model.f_ax + model.f_geo) / t,
        bound: if t_mem >= t_cmp { BoundKind::Memory } else { BoundKind::Compute },
    })
}

/// `(P_eff, P_tot)` from a measured time per element (or per batch, with
/// batch FLOP counts).
pub fn measured_performance(f_ax: f64, f_geo: f64, t_meas: f64) -> Result<(f64, f64)> {
    if !(t_meas > 0.0) || !t_meas.is_finite() {
        return Err(HosfemError::InvalidModel(format!("measured time must be positive, got {t_meas}")));
    }
    Ok((f_ax / t_meas, (f_ax + f_geo) / t_meas))
}

pub const CROSSING_SCAN: std::ops::RangeInclusive<usize> = 2..=64;

/// Intensity `F_ax / M` of the full-access kernel, from the workload table.
pub fn full_access_intensity(equation: Equation, n_col: usize, n1: usize) -> f64 {
    let spec = KernelSpec { equation, n_col, factor_source: FactorSource::Stored, order: n1 - 1 };
    let w = workload_count(&spec);
    w.f_ax as f64 / w.m_bytes as f64
}

/// Smallest `N1` in [`CROSSING_SCAN`] whose full-access intensity reaches
/// `mbp`.
pub fn mbp_crossing_at(equation: Equation, n_col: usize, mbp: f64) -> Result<usize> {
    CROSSING_SCAN
        .clone()
        .find(|&n1| full_access_intensity(equation, n_col, n1) >= mbp)
        .ok_or(HosfemError::NoCrossing { lo: *CROSSING_SCAN.start(), hi: *CROSSING_SCAN.end() })
}

/// Crossing against the general-core balance of `hw`.
pub fn mbp_crossing(equation: Equation, n_col: usize, hw: &HardwareProfile, bandwidth: Bandwidth) -> Result<usize> {
    mbp_crossing_at(equation, n_col, machine_balance(hw, Peak::General, bandwidth)?)
}

/// One row of a roofline sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RooflineRow {
    pub profile: String,
    pub equation: Equation,
    pub n_col: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub variant: String,
    pub f_ax: f64,
    pub f_geo: f64,
    pub m_bytes: f64,
    pub matrix_unit_flops: f64,
    pub intensity: f64,
    pub t_cmp: f64,
    pub t_mem: f64,
    pub r_eff: f64,
    pub r_tot: f64,
    pub bound: BoundKind,
}

/// Bounds for every supported (equation, n_col, order, variant)
/// combination, in the given nesting order.
pub fn roofline_sweep(
    hw: &HardwareProfile,
    equations: &[Equation],
    n_cols: &[usize],
    orders: &[usize],
    variants: &[FactorSource],
    opts: &ModelOptions,
) -> Result<Vec<RooflineRow>> {
    hw.validate()?;
    let mut rows = Vec::new();
    for &equation in equations {
        for &n_col in n_cols {
            for &order in orders {
                for &variant in variants {
                    if !variant.supports(equation) {
                        continue;
                    }
                    let spec = KernelSpec::new(equation, n_col, variant, order)?;
                    let model = KernelModel::from_spec(&spec, hw, opts)?;
                    let b = roofline_bounds_with(&model, hw, opts)?;
                    rows.push(RooflineRow {
                        profile: hw.name.clone(),
                        equation,
                        n_col,
                        order,
                        variant: variant.name().to_string(),
                        f_ax: model.f_ax,
                        f_geo: model.f_geo,
                        m_bytes: model.m_bytes,
                        matrix_unit_flops: model.matrix_unit_flops,
                        intensity: model.intensity(),
                        t_cmp: b.t_cmp,
                        t_mem: b.t_mem,
                        r_eff: b.r_eff,
                        r_tot: b.r_tot,
                        bound: b.bound,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn intensity_examples() {
        assert!((operational_intensity(56832.0, 33280.0).unwrap() - 1.7077).abs() < 1e-4);
        assert_eq!(operational_intensity(5.0, 5.0).unwrap(), 1.0);
        assert!(operational_intensity(1.0, 0.0).is_err());
        assert!((full_access_intensity(Equation::Poisson, 3, 18) - 7.186).abs() < 1e-3);
    }

    #[test]
    fn balance_examples() {
        let a = machine_balance(&HardwareProfile::a100(), Peak::General, Bandwidth::Measured).unwrap();
        assert!((a - 7.132).abs() < 1e-3);
        let k = machine_balance(&HardwareProfile::k100(), Peak::General, Bandwidth::Measured).unwrap();
        assert!((k - 47.115).abs() < 1e-3);
        assert!(machine_balance(&HardwareProfile::k100(), Peak::Matrix, Bandwidth::Measured).is_err());
    }

    #[test]
    fn a100_helmholtz_trilinear_example() {
        let hw = HardwareProfile::a100();
        let spec = KernelSpec::new(Equation::Helmholtz, 1, FactorSource::TrilinearRecompute, 7).unwrap();
        let m = KernelModel::from_spec(&spec, &hw, &ModelOptions::default()).unwrap();
        assert_eq!(m.m_bytes, 16576.0);
        assert_eq!(m.matrix_unit_flops, 32768.0);
        let b = roofline_bounds(&m, &hw).unwrap();
        assert!(rel(b.t_mem, 1.2188e-8) < 1e-3);
        assert_eq!(b.bound, BoundKind::Memory);
        assert!(rel(b.r_eff, 4.873e12) < 1e-3);
    }

    #[test]
    fn classical_roofline_limit() {
        let hw = HardwareProfile::a100();
        for (f, m) in [(1e4, 1e5), (1e6, 1e4), (7.0e4, 1e4)] {
            let b = roofline_bounds(&KernelModel::new(f, 0.0, m, 0.0).unwrap(), &hw).unwrap();
            let classical = hw.peak_general.min(f / m * hw.bandwidth_measured);
            assert!(rel(b.r_eff, classical) < 1e-14);
        }
    }

    #[test]
    fn matrix_split_needs_matrix_units() {
        let m = KernelModel::new(100.0, 0.0, 10.0, 50.0).unwrap();
        assert!(roofline_bounds(&m, &HardwareProfile::k100()).is_err());
        assert!(KernelModel::new(100.0, 0.0, 10.0, 150.0).is_err());
    }

    #[test]
    fn crossing_examples() {
        let a = HardwareProfile::a100();
        assert_eq!(mbp_crossing(Equation::Poisson, 3, &a, Bandwidth::Measured).unwrap(), 18);
        let k = HardwareProfile::k100();
        assert!(matches!(
            mbp_crossing(Equation::Poisson, 3, &k, Bandwidth::Measured),
            Err(HosfemError::NoCrossing { .. })
        ));
        assert_eq!(mbp_crossing_at(Equation::Poisson, 3, 0.0).unwrap(), 2);
    }

    #[test]
    fn measured_performance_examples() {
        let (pe, pt) = measured_performance(56832.0, 0.0, 1e-8).unwrap();
        assert!(rel(pe, 5.6832e12) < 1e-14);
        assert_eq!(pe, pt);
        assert!(measured_performance(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn profile_text_round_trip() {
        for hw in [HardwareProfile::a100(), HardwareProfile::k100()] {
            assert_eq!(HardwareProfile::parse(&hw.to_text()).unwrap(), hw);
        }
        assert!(HardwareProfile::parse("peak_general = 1e12\n").is_err());
        assert!(HardwareProfile::parse(
            "peak_general = 1\nbandwidth_measured = 2\nbandwidth_theoretical = 1\n"
        )
        .is_err());
    }
}
