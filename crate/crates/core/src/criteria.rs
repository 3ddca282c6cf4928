//! Integral criteria for the semimartingale property of moving averages
//! `X_t = ∫ [f(t-s, v) - f0(-s, v)] Λ(ds, dv)` and the resulting verdict.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use thiserror::Error;

use crate::kernels::{KernelError, KernelFamily, KernelSpec};
use crate::levy::{b_kernel, LevyError, LevyFamily, LevyMeasure1D, ModelSpec, Moment, Region};
use crate::quadrature::{integrate, Interval, QuadError, QuadResult, QuadStatus, QuadratureConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("kernel has no declared derivative")]
    NoDerivative,
    #[error("criteria need a moving-average kernel (f, f0)")]
    UnsupportedKernel,
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Settings for criteria evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CriteriaConfig {
    pub quadrature: QuadratureConfig,
    pub ratio_grid: RatioGrid,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self { quadrature: QuadratureConfig::default(), ratio_grid: RatioGrid::default() }
    }
}

/// Log-spaced grid `u = 10^e` for the ratio profile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatioGrid {
    pub log10_min: f64,
    pub log10_max: f64,
    pub points: usize,
}

impl Default for RatioGrid {
    fn default() -> Self {
        Self { log10_min: -4.0, log10_max: 4.0, points: 33 }
    }
}

impl RatioGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| {
                let e = self.log10_min + (self.log10_max - self.log10_min) * i as f64 / (n - 1) as f64;
                libm::pow(10.0, e)
            })
            .collect()
    }
}

/// A scalar condition: numeric value (possibly infinite) and whether it is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionValue {
    pub value: f64,
    /// `None` when quadrature could neither confirm convergence nor divergence.
    pub finite: Option<bool>,
    pub growth_exponent: Option<f64>,
    /// Per-label contributions before weighting, when the condition is a sum over `V`.
    pub per_v: Vec<f64>,
}

impl ConditionValue {
    fn exact(value: f64) -> Self {
        Self { value, finite: Some(value.is_finite()), growth_exponent: None, per_v: Vec::new() }
    }

    fn from_quad(r: &QuadResult) -> Self {
        let finite = match r.status {
            QuadStatus::Converged => Some(true),
            QuadStatus::Diverged { .. } => Some(false),
            QuadStatus::MaxRefinement => None,
        };
        let value = if finite == Some(false) { f64::INFINITY } else { r.value };
        Self { value, finite, growth_exponent: r.growth_exponent(), per_v: Vec::new() }
    }

    fn from_moment(m: Moment) -> Self {
        Self { value: m.value(), finite: m.is_finite(), growth_exponent: None, per_v: Vec::new() }
    }

    /// `Σ_v w_v c_v` with the combined finiteness flag.
    fn weighted_sum(parts: Vec<(f64, ConditionValue)>) -> Self {
        let mut value = 0.0;
        let mut finite = Some(true);
        let mut growth = None;
        let mut per_v = Vec::with_capacity(parts.len());
        for (w, c) in parts {
            per_v.push(c.value);
            match c.finite {
                Some(true) => value += w * c.value,
                Some(false) => {
                    finite = Some(false);
                    growth = growth.or(c.growth_exponent);
                }
                None => {
                    if finite == Some(true) {
                        finite = None;
                    }
                }
            }
        }
        if finite == Some(false) {
            value = f64::INFINITY;
        } else if finite.is_none() {
            value = f64::NAN;
        }
        Self { value, finite, growth_exponent: growth, per_v }
    }
}

/// Three-valued answer to the necessity gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GateAnswer {
    True,
    False,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioMode {
    /// `limsup_{u→∞} r(u)`, probed over the top decade of the grid.
    U0Limsup,
    /// `sup_{u>0} r(u)` over the whole grid.
    U00Sup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatioPoint {
    pub u: f64,
    /// `u ∫_{|x|>u} |x| ρ(dx) / ∫_{|x|≤u} x² ρ(dx)`; `None` when infinite or unknown.
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioProfile {
    pub points: Vec<RatioPoint>,
    pub finite: Option<bool>,
    /// Largest ratio over the inspected part of the grid.
    pub bound: f64,
    pub analytic: bool,
}

/// `C = γ^(1/(1-γ)) (1/γ + 1/(1-2γ))`, so that
/// `∫_0^∞ (|x ḟ| ∧ |x ḟ|²) dt = C |x|^(1/(1-γ))` for `ḟ(t) = γ t^(γ-1)`.
pub fn fractional_constant(gamma: f64) -> f64 {
    libm::pow(gamma, 1.0 / (1.0 - gamma)) * (1.0 / gamma + 1.0 / (1.0 - 2.0 * gamma))
}

/// `C = 2c (1/(2-α) + 1/(α-1))`, so that `∫ (|xy| ∧ |xy|²) ρ(dx) = C |y|^α`
/// for the stable density `c|x|^(-α-1)` with `α ∈ (1, 2)`.
pub fn stable_cf_constant(alpha: f64, c: f64) -> f64 {
    2.0 * c * (1.0 / (2.0 - alpha) + 1.0 / (alpha - 1.0))
}

fn cf_weight(xy: f64) -> f64 {
    let a = xy.abs();
    a.min(a * a)
}

/// `∫ (|xy| ∧ |xy|²) ρ(dx)` by quadrature for any family.
pub fn cf_inner_quadrature(rho: &LevyMeasure1D, y: f64, cfg: &QuadratureConfig) -> Result<Moment, CriteriaError> {
    if y == 0.0 {
        return Ok(Moment::Finite(0.0));
    }
    let k = 1.0 / y.abs();
    let r = rho.integrate(|x| cf_weight(x * y), &[k, -k], cfg)?;
    Ok(moment_of(&r))
}

/// `∫ (|xy| ∧ |xy|²) ρ(dx)`, closed form for stable `α ∈ (1, 2)` and point
/// masses, quadrature otherwise.
pub fn cf_inner(rho: &LevyMeasure1D, y: f64, cfg: &QuadratureConfig) -> Result<Moment, CriteriaError> {
    if y == 0.0 {
        return Ok(Moment::Finite(0.0));
    }
    match rho.family() {
        LevyFamily::Zero => Ok(Moment::Finite(0.0)),
        LevyFamily::Stable { alpha, c } if *alpha > 1.0 => {
            Ok(Moment::Finite(stable_cf_constant(*alpha, *c) * libm::pow(y.abs(), *alpha)))
        }
        // The large-x part ∫|xy| ρ(dx) diverges for α <= 1.
        LevyFamily::Stable { .. } => Ok(Moment::Infinite),
        LevyFamily::PointMass { position, mass, mirrored } => {
            let n = if *mirrored { 2.0 } else { 1.0 };
            Ok(Moment::Finite(n * mass * cf_weight(position * y)))
        }
        _ => cf_inner_quadrature(rho, y, cfg),
    }
}

/// `∫ (|xy| ∧ |xy|²)(1 ∧ x⁻²) ρ(dx)`.
pub fn trunc_inner(rho: &LevyMeasure1D, y: f64, cfg: &QuadratureConfig) -> Result<Moment, CriteriaError> {
    if y == 0.0 {
        return Ok(Moment::Finite(0.0));
    }
    let k = 1.0 / y.abs();
    let r = rho.integrate(|x| cf_weight(x * y) * (1.0f64).min(1.0 / (x * x)), &[k, -k, 1.0, -1.0], cfg)?;
    Ok(moment_of(&r))
}

fn moment_of(r: &QuadResult) -> Moment {
    match r.status {
        QuadStatus::Converged => Moment::Finite(r.value),
        QuadStatus::Diverged { .. } => Moment::Infinite,
        QuadStatus::MaxRefinement => Moment::Unknown,
    }
}

/// Times `t > 0` where `|ḟ(t, v)| = level`: closed form when the family has
/// one, otherwise a log-grid scan refined by bisection.
pub fn fdot_level_crossings(kernel: &KernelSpec, v: usize, level: f64) -> Result<Vec<f64>, CriteriaError> {
    if let Some(ts) = kernel.fdot_level_crossings(v, level) {
        return Ok(ts);
    }
    let h = |t: f64| kernel.fdot(t, v).map(|d| d.abs() - level);
    let n = 400;
    let grid: Vec<f64> = (0..=n).map(|i| libm::pow(10.0, -10.0 + 20.0 * i as f64 / n as f64)).collect();
    let mut out = Vec::new();
    let mut prev = h(grid[0])?;
    for w in grid.windows(2) {
        let next = h(w[1])?;
        if prev.is_finite() && next.is_finite() && (prev > 0.0) != (next > 0.0) {
            let (mut a, mut b, mut fa) = (w[0], w[1], prev);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = h(m)?;
                if (fm > 0.0) == (fa > 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
                if b - a <= 1e-15 * b {
                    break;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = next;
    }
    Ok(out)
}

/// `∫_0^∞ h(ḟ(t, v)) dt` with kinks of `h ∘ ḟ` at the given levels of `|ḟ|`.
fn time_integral(
    kernel: &KernelSpec,
    v: usize,
    levels: &[f64],
    cfg: &QuadratureConfig,
    h: impl Fn(f64) -> f64,
) -> Result<QuadResult, CriteriaError> {
    if !kernel.has_derivative() {
        return Err(CriteriaError::NoDerivative);
    }
    let mut splits = kernel.lag_breakpoints().to_vec();
    for &l in levels {
        splits.extend(fdot_level_crossings(kernel, v, l)?);
    }
    let c = cfg.with_splits(&splits);
    Ok(integrate(|t| h(kernel.fdot(t, v).unwrap_or(f64::NAN)), Interval::positive_half_line(), &c)?)
}

/// `∫_0^∞ (|x ḟ(t)| ∧ |x ḟ(t)|²) dt` for the fractional derivative `ḟ(t) = γ t^(γ-1)`.
pub fn fractional_time_integral(gamma: f64, x: f64, cfg: &QuadratureConfig) -> Result<ConditionValue, CriteriaError> {
    let k = KernelSpec::fractional(vec![gamma])?;
    if x == 0.0 {
        return Ok(ConditionValue::exact(0.0));
    }
    let r = time_integral(&k, 0, &[1.0 / x.abs()], cfg, |d| cf_weight(x * d))?;
    Ok(ConditionValue::from_quad(&r))
}

fn simma_only(kernel: &KernelSpec) -> Result<(), CriteriaError> {
    if kernel.is_simma() {
        Ok(())
    } else {
        Err(CriteriaError::UnsupportedKernel)
    }
}

/// `Σ_v m(v) |B(f(0, v), v)|`.
pub fn check_drift(model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> Result<ConditionValue, CriteriaError> {
    simma_only(kernel)?;
    let mut parts = Vec::new();
    for (v, comp) in model.components().iter().enumerate() {
        let x = kernel.jump_height(v)?;
        let c = match b_kernel(x, v, model, cfg) {
            Ok(b) => ConditionValue::exact(b.abs()),
            Err(LevyError::Diverged { growth_exponent }) => ConditionValue {
                value: f64::INFINITY,
                finite: Some(false),
                growth_exponent: Some(growth_exponent),
                per_v: Vec::new(),
            },
            Err(LevyError::NotConverged { estimate, .. }) => {
                ConditionValue { value: estimate.abs(), finite: None, growth_exponent: None, per_v: Vec::new() }
            }
            Err(e) => return Err(e.into()),
        };
        parts.push((comp.weight, c));
    }
    Ok(ConditionValue::weighted_sum(parts))
}

/// `Σ_v m(v) σ²(v) ∫_0^∞ ḟ(s, v)² ds`.
pub fn check_int1(model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> Result<ConditionValue, CriteriaError> {
    simma_only(kernel)?;
    if !kernel.has_derivative() {
        return Err(CriteriaError::NoDerivative);
    }
    let mut parts = Vec::new();
    for (v, comp) in model.components().iter().enumerate() {
        let c = if comp.gaussian_var == 0.0 {
            ConditionValue::exact(0.0)
        } else {
            let r = time_integral(kernel, v, &[], cfg, |d| d * d)?;
            let mut c = ConditionValue::from_quad(&r);
            if c.finite == Some(true) {
                c.value *= comp.gaussian_var;
            }
            c
        };
        parts.push((comp.weight, c));
    }
    Ok(ConditionValue::weighted_sum(parts))
}

/// Per-label `∫_0^∞ ∫ inner(x, ḟ(s, v)) ρ_v(dx) ds`, weighted by `m(v)`.
fn nested_condition(
    model: &ModelSpec,
    kernel: &KernelSpec,
    cfg: &QuadratureConfig,
    inner: impl Fn(&LevyMeasure1D, f64, &QuadratureConfig) -> Result<Moment, CriteriaError>,
) -> Result<ConditionValue, CriteriaError> {
    simma_only(kernel)?;
    if !kernel.has_derivative() {
        return Err(CriteriaError::NoDerivative);
    }
    let inner_cfg = cfg.loosened(1e-11);
    let mut parts = Vec::new();
    for (v, comp) in model.components().iter().enumerate() {
        if comp.levy.is_zero() {
            parts.push((comp.weight, ConditionValue::exact(0.0)));
            continue;
        }
        let state: RefCell<(bool, bool, Option<CriteriaError>)> = RefCell::new((false, false, None));
        let r = time_integral(kernel, v, &[], cfg, |d| match inner(&comp.levy, d, &inner_cfg) {
            Ok(Moment::Finite(x)) => x,
            Ok(Moment::Infinite) => {
                state.borrow_mut().0 = true;
                0.0
            }
            Ok(Moment::Unknown) => {
                state.borrow_mut().1 = true;
                0.0
            }
            Err(e) => {
                state.borrow_mut().2.get_or_insert(e);
                0.0
            }
        })?;
        let (infinite, unknown, err) = state.into_inner();
        if let Some(e) = err {
            return Err(e);
        }
        let c = if infinite {
            ConditionValue { value: f64::INFINITY, finite: Some(false), growth_exponent: None, per_v: Vec::new() }
        } else if unknown {
            ConditionValue { value: f64::NAN, finite: None, growth_exponent: None, per_v: Vec::new() }
        } else {
            ConditionValue::from_quad(&r)
        };
        parts.push((comp.weight, c));
    }
    Ok(ConditionValue::weighted_sum(parts))
}

/// `Σ_v m(v) ∫_0^∞ ∫ (|x ḟ| ∧ |x ḟ|²) ρ_v(dx) ds`.
pub fn check_cf(model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> Result<ConditionValue, CriteriaError> {
    nested_condition(model, kernel, cfg, cf_inner)
}

/// Whether every `v` has `σ²(v) > 0` or `∫_{|x|≤1} |x| ρ_v(dx) = ∞`.
pub fn check_necessity_gate(model: &ModelSpec) -> GateAnswer {
    let mut answer = GateAnswer::True;
    for comp in model.components() {
        if comp.gaussian_var > 0.0 {
            continue;
        }
        match comp.levy.has_infinite_variation() {
            Some(true) => {}
            Some(false) => return GateAnswer::False,
            None => answer = GateAnswer::Unknown,
        }
    }
    answer
}

/// Per-label `∫_0^∞ ∫ (|xḟ| ∧ |xḟ|²)(1 ∧ x⁻²) ρ_v(dx) ds` (weights in `per_v` are not applied).
pub fn check_trunc_case(model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> Result<ConditionValue, CriteriaError> {
    if let KernelFamily::Fractional { .. } = kernel.family() {
        let mut parts = Vec::new();
        for (v, comp) in model.components().iter().enumerate() {
            let g = kernel.gamma(v).unwrap_or(1.0);
            parts.push((comp.weight, fractional_trunc_case(&comp.levy, g, cfg)));
        }
        return Ok(ConditionValue::weighted_sum(parts));
    }
    nested_condition(model, kernel, cfg, trunc_inner)
}

/// `C_γ ∫ |x|^p (1 ∧ x⁻²) ρ(dx)` with `p = 1/(1-γ)`.
fn fractional_trunc_case(rho: &LevyMeasure1D, gamma: f64, cfg: &QuadratureConfig) -> ConditionValue {
    if gamma >= 1.0 {
        return ConditionValue { value: f64::INFINITY, finite: Some(false), growth_exponent: None, per_v: Vec::new() };
    }
    let p = 1.0 / (1.0 - gamma);
    let small = rho.abs_power_moment(p, Region::Small, cfg);
    let large = rho.abs_power_moment(p - 2.0, Region::Large, cfg);
    let mut c = ConditionValue::from_moment(add_moments(small, large));
    if c.finite == Some(true) {
        c.value *= fractional_constant(gamma);
    }
    c
}

fn add_moments(a: Moment, b: Moment) -> Moment {
    match (a, b) {
        (Moment::Finite(x), Moment::Finite(y)) => Moment::Finite(x + y),
        (Moment::Infinite, _) | (_, Moment::Infinite) => Moment::Infinite,
        _ => Moment::Unknown,
    }
}

/// `∫ |x|^p ρ(dx)` over the whole line.
fn full_moment(rho: &LevyMeasure1D, p: f64, cfg: &QuadratureConfig) -> Moment {
    add_moments(rho.abs_power_moment(p, Region::Small, cfg), rho.abs_power_moment(p, Region::Large, cfg))
}

/// `r(u)` for one `u`; `Ok(None)` when the numerator is infinite, `Err`
/// when a moment is unknown.
fn ratio_at(rho: &LevyMeasure1D, u: f64, cfg: &QuadratureConfig) -> Result<Option<f64>, CriteriaError> {
    let num = match rho.tail_abs_moment(u, cfg) {
        Moment::Finite(v) => v,
        Moment::Infinite => return Ok(None),
        Moment::Unknown => return Err(LevyError::NotConverged { estimate: f64::NAN, error_estimate: f64::NAN }.into()),
    };
    let den = rho.truncated_second_moment(u, cfg)?;
    if num == 0.0 {
        return Ok(Some(0.0));
    }
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(u * num / den))
}

/// Ratio `r(u)` computed with quadrature for every family, for cross-checks.
pub fn ratio_quadrature(rho: &LevyMeasure1D, u: f64, cfg: &QuadratureConfig) -> Result<Option<f64>, CriteriaError> {
    let num = rho.integrate(|x| if x.abs() > u { x.abs() } else { 0.0 }, &[u, -u], cfg)?;
    if num.is_diverged() {
        return Ok(None);
    }
    let den = rho.integrate(|x| if x.abs() <= u { x * x } else { 0.0 }, &[u, -u], cfg)?;
    if den.value == 0.0 {
        return Ok(if num.value == 0.0 { Some(0.0) } else { None });
    }
    Ok(Some(u * num.value / den.value))
}

/// Profile of `r(u) = u ∫_{|x|>u} |x| ρ(dx) / ∫_{|x|≤u} x² ρ(dx)`.
///
/// The limsup in `U0Limsup` mode is approximated by the maximum over the
/// top decade of the grid, and is reported finite only when `r` is not
/// increasing there. `U00Sup` additionally requires no growth at the
/// bottom end of the grid.
pub fn check_ratio(rho: &LevyMeasure1D, mode: RatioMode, grid: &RatioGrid, cfg: &QuadratureConfig) -> Result<RatioProfile, CriteriaError> {
    let us = grid.values();
    if let LevyFamily::Stable { alpha, .. } = rho.family() {
        let r = (*alpha > 1.0).then(|| (2.0 - alpha) / (alpha - 1.0));
        return Ok(RatioProfile {
            points: us.iter().map(|&u| RatioPoint { u, r }).collect(),
            finite: Some(r.is_some()),
            bound: r.unwrap_or(f64::INFINITY),
            analytic: true,
        });
    }
    let mut points = Vec::with_capacity(us.len());
    let mut unknown = false;
    for &u in &us {
        match ratio_at(rho, u, cfg) {
            Ok(r) => points.push(RatioPoint { u, r }),
            Err(_) => {
                unknown = true;
                points.push(RatioPoint { u, r: None });
            }
        }
    }
    let top = libm::pow(10.0, grid.log10_max - 1.0);
    let inspected: Vec<&RatioPoint> = match mode {
        RatioMode::U0Limsup => points.iter().filter(|p| p.u >= top * (1.0 - 1e-12)).collect(),
        RatioMode::U00Sup => points.iter().collect(),
    };
    let any_infinite = inspected.iter().any(|p| p.r.is_none());
    let bound = inspected.iter().filter_map(|p| p.r).fold(0.0, f64::max);
    let rising = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => b > a * (1.0 + 1e-6) + 1e-300,
        _ => false,
    };
    let n = points.len();
    let top_rising = inspected.len() >= 2 && rising(inspected[inspected.len() - 2].r, inspected[inspected.len() - 1].r);
    let bottom_rising = mode == RatioMode::U00Sup && n >= 2 && rising(points[1].r, points[0].r);
    let finite = if unknown {
        None
    } else if any_infinite {
        Some(false)
    } else if top_rising || bottom_rising {
        None
    } else {
        Some(true)
    };
    Ok(RatioProfile { points, finite, bound: if any_infinite { f64::INFINITY } else { bound }, analytic: false })
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    Semimartingale,
    NotSemimartingale,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ConditionId {
    #[cfg_attr(feature = "serde", serde(rename = "drift4"))]
    Drift4,
    #[cfg_attr(feature = "serde", serde(rename = "int1"))]
    Int1,
    #[cfg_attr(feature = "serde", serde(rename = "Cf"))]
    Cf,
    #[cfg_attr(feature = "serde", serde(rename = "invar_con"))]
    InvarCon,
    #[cfg_attr(feature = "serde", serde(rename = "trunc_case"))]
    TruncCase,
    #[cfg_attr(feature = "serde", serde(rename = "u0"))]
    U0,
    #[cfg_attr(feature = "serde", serde(rename = "u00"))]
    U00,
    #[cfg_attr(feature = "serde", serde(rename = "fdot_int"))]
    FdotInt,
    #[cfg_attr(feature = "serde", serde(rename = "special_semimartingale"))]
    SpecialSemimartingale,
}

impl ConditionId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Drift4 => "drift4",
            Self::Int1 => "int1",
            Self::Cf => "Cf",
            Self::InvarCon => "invar_con",
            Self::TruncCase => "trunc_case",
            Self::U0 => "u0",
            Self::U00 => "u00",
            Self::FdotInt => "fdot_int",
            Self::SpecialSemimartingale => "special_semimartingale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Role {
    Sufficient,
    Necessary,
    Gate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Condition {
    pub id: ConditionId,
    pub role: Role,
    /// Numeric value; `None` when infinite or undetermined.
    pub value: Option<f64>,
    /// `None` when undetermined.
    pub finite: Option<bool>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub growth_exponent: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub per_v: Vec<Option<f64>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub profile: Option<Vec<RatioPoint>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub note: Option<String>,
}

impl Condition {
    fn new(id: ConditionId, role: Role, c: &ConditionValue) -> Self {
        Self {
            id,
            role,
            value: c.value.is_finite().then_some(c.value),
            finite: c.finite,
            growth_exponent: c.growth_exponent,
            per_v: c.per_v.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            profile: None,
            note: None,
        }
    }

    fn flag(id: ConditionId, role: Role, finite: Option<bool>, note: impl Into<String>) -> Self {
        Self {
            id,
            role,
            value: None,
            finite,
            growth_exponent: None,
            per_v: Vec::new(),
            profile: None,
            note: Some(note.into()),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpecialReport {
    /// Whether the special-semimartingale test was run (only for semimartingales).
    pub applies: bool,
    /// `∫ |x f(0, v)| 1{|x f(0, v)| > 1} ρ_v(dx) m(dv) < ∞`, i.e. `E|M_t| < ∞`.
    pub first_moment_finite: Option<bool>,
    /// `Σ_v m(v) f(0, v) (b(v) + ∫ (x - [[x]]) ρ_v(dx))`, the drift rate of `E M_t`.
    pub expected_drift_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub conditions: Vec<Condition>,
    pub reasons: Vec<String>,
    pub special: SpecialReport,
}

impl VerdictReport {
    pub fn condition(&self, id: ConditionId) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// A `Semimartingale` verdict must not coexist with a violated necessary
    /// condition under a true gate.
    pub fn is_consistent(&self) -> bool {
        if self.verdict != Verdict::Semimartingale {
            return true;
        }
        let gate = self.condition(ConditionId::InvarCon).and_then(|c| c.finite) == Some(true);
        !(gate && self.conditions.iter().any(|c| c.role == Role::Necessary && c.finite == Some(false)))
    }
}

struct Builder {
    conditions: Vec<Condition>,
    reasons: Vec<String>,
}

impl Builder {
    fn push(&mut self, c: Condition) {
        if let Some(old) = self.conditions.iter_mut().find(|o| o.id == c.id) {
            *old = c;
        } else {
            self.conditions.push(c);
        }
    }

    fn reason(&mut self, r: impl Into<String>) {
        self.reasons.push(r.into());
    }

    fn finish(mut self, verdict: Verdict, model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> VerdictReport {
        let special = if verdict == Verdict::Semimartingale {
            special_report(model, kernel, cfg)
        } else {
            SpecialReport::default()
        };
        if special.applies {
            let note = match special.first_moment_finite {
                Some(true) => "E|M_t| finite: special semimartingale",
                Some(false) => "E|M_t| infinite: not special",
                None => "first moment of M undetermined",
            };
            self.push(Condition::flag(ConditionId::SpecialSemimartingale, Role::Gate, special.first_moment_finite, note));
        }
        let mut report = VerdictReport { verdict, conditions: self.conditions, reasons: self.reasons, special };
        if !report.is_consistent() {
            report.verdict = Verdict::Inconclusive;
            report.reasons.push("downgraded: a necessary condition fails under a true gate".into());
        }
        report
    }
}

fn gate_flag(g: GateAnswer) -> Option<bool> {
    match g {
        GateAnswer::True => Some(true),
        GateAnswer::False => Some(false),
        GateAnswer::Unknown => None,
    }
}

fn special_report(model: &ModelSpec, kernel: &KernelSpec, cfg: &QuadratureConfig) -> SpecialReport {
    let mut finite = Some(true);
    let mut rate = 0.0;
    let mut rate_known = true;
    for (v, comp) in model.components().iter().enumerate() {
        let f0 = kernel.jump_height(v).unwrap_or(0.0);
        if f0 == 0.0 {
            continue;
        }
        match comp.levy.tail_abs_moment(1.0 / f0.abs(), cfg).is_finite() {
            Some(true) => {}
            Some(false) => finite = Some(false),
            None => {
                if finite == Some(true) {
                    finite = None;
                }
            }
        }
        match comp.levy.large_jump_mean(cfg) {
            Moment::Finite(mean) => rate += comp.weight * f0 * (comp.drift + mean),
            _ => rate_known = false,
        }
    }
    SpecialReport {
        applies: true,
        first_moment_finite: finite,
        expected_drift_rate: (finite == Some(true) && rate_known).then_some(rate),
    }
}

/// Decides whether `X` is a semimartingale: closed-form family rules first,
/// then the general sufficiency and necessity conditions.
pub fn verdict(model: &ModelSpec, kernel: &KernelSpec, cfg: &CriteriaConfig) -> Result<VerdictReport, CriteriaError> {
    let q = &cfg.quadrature;
    let mut b = Builder { conditions: Vec::new(), reasons: Vec::new() };
    if !kernel.is_simma() {
        b.reason("kernel is a general phi; the criteria are stated for moving-average kernels");
        return Ok(b.finish(Verdict::Inconclusive, model, kernel, q));
    }
    kernel.validate_labels(model.len())?;
    for w in kernel.warnings() {
        b.reason(w.clone());
    }
    if let Some(v) = fractional_rule(model, kernel, cfg, &mut b)? {
        return Ok(b.finish(v, model, kernel, q));
    }
    if let Some(v) = stable_family_rule(model, kernel, cfg, &mut b)? {
        return Ok(b.finish(v, model, kernel, q));
    }
    let v = general_path(model, kernel, cfg, &mut b)?;
    Ok(b.finish(v, model, kernel, q))
}

/// The general sufficiency/necessity procedure, without family rules.
pub fn verdict_general(model: &ModelSpec, kernel: &KernelSpec, cfg: &CriteriaConfig) -> Result<VerdictReport, CriteriaError> {
    let mut b = Builder { conditions: Vec::new(), reasons: Vec::new() };
    if !kernel.is_simma() {
        b.reason("kernel is a general phi; the criteria are stated for moving-average kernels");
        return Ok(b.finish(Verdict::Inconclusive, model, kernel, &cfg.quadrature));
    }
    kernel.validate_labels(model.len())?;
    let v = general_path(model, kernel, cfg, &mut b)?;
    Ok(b.finish(v, model, kernel, &cfg.quadrature))
}

fn fractional_rule(
    model: &ModelSpec,
    kernel: &KernelSpec,
    cfg: &CriteriaConfig,
    b: &mut Builder,
) -> Result<Option<Verdict>, CriteriaError> {
    if !matches!(kernel.family(), KernelFamily::Fractional { .. }) {
        return Ok(None);
    }
    let q = &cfg.quadrature;
    let gate = check_necessity_gate(model);
    b.push(Condition::flag(ConditionId::InvarCon, Role::Gate, gate_flag(gate), "sigma2(v) > 0 or infinite small-jump variation"));
    b.push(Condition::new(ConditionId::Drift4, Role::Gate, &ConditionValue::exact(0.0)).with_note("f(0, v) = 0"));
    if model.components().iter().all(|c| c.gaussian_var == 0.0 && c.levy.is_zero()) {
        b.reason("the driving measure is deterministic; the fractional characterization assumes a non-deterministic driver");
        return Ok(Some(Verdict::Inconclusive));
    }

    // Well-definedness: γ < 1/2 and ∫_{|x|>1} |x|^(1/(1-γ)) ρ(dx) < ∞ for every v that carries noise.
    for (v, comp) in model.components().iter().enumerate() {
        let g = kernel.gamma(v).unwrap_or(1.0);
        if g >= 0.5 {
            b.reason(format!(
                "gamma = {g} at v = {} lies outside (0, 1/2), where the fractional characterization requires it",
                comp.label
            ));
            b.reason("fractional rule: gamma must lie in (0, 1/2)");
            return Ok(Some(Verdict::NotSemimartingale));
        }
        let p = 1.0 / (1.0 - g);
        if comp.levy.abs_power_moment(p, Region::Large, q) == Moment::Infinite {
            b.reason(format!(
                "large-jump moment of order 1/(1-gamma) = {p:.4} is infinite at v = {}; the process is not well defined",
                comp.label
            ));
            return Ok(Some(Verdict::NotSemimartingale));
        }
    }

    let int1 = check_int1(model, kernel, q)?;
    b.push(Condition::new(ConditionId::Int1, Role::Sufficient, &int1));
    let trunc = check_trunc_case(model, kernel, q)?;
    b.push(Condition::new(ConditionId::TruncCase, Role::Necessary, &trunc));

    let mut moments = Vec::new();
    let mut weighted = Vec::new();
    for (v, comp) in model.components().iter().enumerate() {
        let g = kernel.gamma(v).unwrap_or(1.0);
        let m = ConditionValue::from_moment(full_moment(&comp.levy, 1.0 / (1.0 - g), q));
        let mut cf = m.clone();
        if cf.finite == Some(true) {
            cf.value *= fractional_constant(g);
        }
        let mut w = m.clone();
        if w.finite == Some(true) {
            w.value /= 0.5 - g;
        }
        moments.push((comp.weight, cf));
        weighted.push((comp.weight, w));
    }
    let cf = ConditionValue::weighted_sum(moments);
    b.push(
        Condition::new(ConditionId::Cf, Role::Sufficient, &cf)
            .with_note("C_gamma * integral of |x|^(1/(1-gamma)) rho_v(dx), per label"),
    );

    let noisy_gauss = model.components().iter().any(|c| c.gaussian_var > 0.0);
    if model.len() == 1 {
        let comp = &model.components()[0];
        let g = kernel.gamma(0).unwrap_or(1.0);
        if noisy_gauss {
            b.reason("fractional rule: sigma2 > 0 (the squared derivative is not integrable)");
            return Ok(Some(Verdict::NotSemimartingale));
        }
        return Ok(Some(match cf.finite {
            Some(true) => {
                b.reason(format!(
                    "fractional rule: sigma2 = 0, gamma = {g} in (0, 1/2) and the moment of order {:.4} is finite",
                    1.0 / (1.0 - g)
                ));
                Verdict::Semimartingale
            }
            Some(false) => {
                b.reason(format!(
                    "fractional rule: the moment of order 1/(1-gamma) = {:.4} of rho ({}) is infinite",
                    1.0 / (1.0 - g),
                    comp.label
                ));
                Verdict::NotSemimartingale
            }
            None => {
                b.reason("fractional rule: the moment of order 1/(1-gamma) could not be decided");
                Verdict::Inconclusive
            }
        }));
    }

    // Superposition of fractional processes.
    let suff = ConditionValue::weighted_sum(weighted);
    if !noisy_gauss && suff.finite == Some(true) {
        b.reason("superposition rule: sigma2 = 0, every gamma in (0, 1/2) and the weighted moment sum is finite");
        return Ok(Some(Verdict::Semimartingale));
    }
    if gate == GateAnswer::True && model.components().iter().all(|c| c.levy.has_infinite_variation() == Some(true)) {
        if noisy_gauss {
            b.reason("superposition rule: jumps of infinite variation everywhere and sigma2 > 0 somewhere");
            return Ok(Some(Verdict::NotSemimartingale));
        }
        if cf.finite == Some(false) {
            b.reason("superposition rule: a moment of order 1/(1-gamma(v)) is infinite");
            return Ok(Some(Verdict::NotSemimartingale));
        }
        let u00 = ratio_all(model, RatioMode::U00Sup, cfg)?;
        b.push(ratio_condition(ConditionId::U00, &u00));
        if u00.0 == Some(true) && suff.finite == Some(false) {
            b.reason("superposition rule: ratio condition u00 holds but the weighted moment sum is infinite");
            return Ok(Some(Verdict::NotSemimartingale));
        }
    }
    b.reason("superposition rules are not decisive; continuing with the general conditions");
    Ok(None)
}

fn stable_family_rule(
    model: &ModelSpec,
    kernel: &KernelSpec,
    cfg: &CriteriaConfig,
    b: &mut Builder,
) -> Result<Option<Verdict>, CriteriaError> {
    let q = &cfg.quadrature;
    if model.components().iter().any(|c| c.gaussian_var > 0.0) {
        return Ok(None);
    }
    let stable: Option<Vec<(f64, f64)>> = model
        .components()
        .iter()
        .map(|c| match c.levy.family() {
            LevyFamily::Stable { alpha, c } => Some((*alpha, *c)),
            _ => None,
        })
        .collect();
    if let Some(params) = &stable {
        if params.iter().any(|(a, _)| *a < 1.0) {
            b.reason("stable index below 1: the driver has finite variation, so X is a semimartingale iff it has finite variation");
            return Ok(None);
        }
        if params.iter().all(|(a, _)| *a > 1.0) {
            b.push(Condition::flag(ConditionId::InvarCon, Role::Gate, Some(true), "stable jumps with alpha >= 1 have infinite variation"));
            b.push(Condition::new(ConditionId::Drift4, Role::Gate, &check_drift(model, kernel, q)?));
            let u00 = ratio_all(model, RatioMode::U00Sup, cfg)?;
            b.push(ratio_condition(ConditionId::U00, &u00));
            if !kernel.has_derivative() {
                b.reason("stable rule: f has no declared derivative, but absolute continuity is necessary");
                return Ok(Some(Verdict::NotSemimartingale));
            }
            let mut parts = Vec::new();
            for (v, comp) in model.components().iter().enumerate() {
                let (alpha, c) = params[v];
                let r = time_integral(kernel, v, &[], q, |d| libm::pow(d.abs(), alpha))?;
                let mut cv = ConditionValue::from_quad(&r);
                if model.len() > 1 && cv.finite == Some(true) {
                    cv.value *= c / (2.0 - alpha);
                }
                parts.push((comp.weight, cv));
            }
            let rule = ConditionValue::weighted_sum(parts);
            let label = if model.len() == 1 { "integral of |f'|^alpha" } else { "sum of c(v)/(2-alpha(v)) * integral of |f'|^alpha(v)" };
            b.push(Condition::new(ConditionId::Cf, Role::Sufficient, &rule).with_note(label));
            return Ok(Some(match rule.finite {
                Some(true) => {
                    b.reason(format!("stable rule: {label} is finite"));
                    Verdict::Semimartingale
                }
                Some(false) => {
                    b.reason(format!("stable rule: {label} diverges"));
                    Verdict::NotSemimartingale
                }
                None => {
                    b.reason(format!("stable rule: {label} could not be decided"));
                    Verdict::Inconclusive
                }
            }));
        }
        return Ok(None);
    }

    if model.len() != 1 {
        return Ok(None);
    }
    let comp = &model.components()[0];
    let LevyFamily::TemperedStable { alpha, .. } = comp.levy.family() else { return Ok(None) };
    let alpha = *alpha;
    if alpha < 1.0 {
        return Ok(None);
    }
    b.push(Condition::flag(ConditionId::InvarCon, Role::Gate, Some(true), "tempered stable jumps with alpha >= 1 have infinite variation"));
    b.push(Condition::new(ConditionId::Drift4, Role::Gate, &check_drift(model, kernel, q)?));
    if !kernel.has_derivative() {
        b.reason("tempered stable rule: f has no declared derivative, but absolute continuity is necessary");
        return Ok(Some(Verdict::NotSemimartingale));
    }
    let r = time_integral(kernel, 0, &[1.0], q, |d| {
        let a = d.abs();
        libm::pow(a, alpha).min(a * a)
    })?;
    let rule = ConditionValue::from_quad(&r);
    b.push(Condition::new(ConditionId::Cf, Role::Sufficient, &rule).with_note("integral of |f'|^alpha ∧ |f'|^2"));
    Ok(Some(match rule.finite {
        Some(true) => {
            b.reason("tempered stable rule: the integral of |f'|^alpha ∧ |f'|^2 is finite");
            Verdict::Semimartingale
        }
        Some(false) => {
            b.reason("tempered stable rule: the integral of |f'|^alpha ∧ |f'|^2 diverges");
            Verdict::NotSemimartingale
        }
        None => {
            b.reason("tempered stable rule: the integral could not be decided");
            Verdict::Inconclusive
        }
    }))
}

/// Ratio condition over all labels: `(finite, profiles)`.
fn ratio_all(model: &ModelSpec, mode: RatioMode, cfg: &CriteriaConfig) -> Result<(Option<bool>, Vec<RatioProfile>), CriteriaError> {
    let mut finite = Some(true);
    let mut profiles = Vec::new();
    for comp in model.components() {
        if comp.levy.is_zero() {
            continue;
        }
        let p = check_ratio(&comp.levy, mode, &cfg.ratio_grid, &cfg.quadrature)?;
        match p.finite {
            Some(true) => {}
            Some(false) => finite = Some(false),
            None => {
                if finite == Some(true) {
                    finite = None;
                }
            }
        }
        profiles.push(p);
    }
    Ok((finite, profiles))
}

fn ratio_condition(id: ConditionId, r: &(Option<bool>, Vec<RatioProfile>)) -> Condition {
    let bound = r.1.iter().map(|p| p.bound).fold(0.0, f64::max);
    let mut c = Condition::flag(id, Role::Gate, r.0, if r.1.iter().all(|p| p.analytic) { "analytic" } else { "numeric profile" });
    c.value = bound.is_finite().then_some(bound);
    c.profile = r.1.first().map(|p| p.points.clone());
    c
}

fn general_path(model: &ModelSpec, kernel: &KernelSpec, cfg: &CriteriaConfig, b: &mut Builder) -> Result<Verdict, CriteriaError> {
    let q = &cfg.quadrature;
    let drift = check_drift(model, kernel, q)?;
    b.push(Condition::new(ConditionId::Drift4, Role::Gate, &drift));
    let gate = check_necessity_gate(model);
    b.push(Condition::flag(ConditionId::InvarCon, Role::Gate, gate_flag(gate), "sigma2(v) > 0 or infinite small-jump variation"));
    match drift.finite {
        Some(true) => {}
        Some(false) => {
            b.reason("drift condition fails: B(f(0, v), v) is not integrable");
            return Ok(Verdict::Inconclusive);
        }
        None => {
            b.reason("drift condition could not be decided");
            return Ok(Verdict::Inconclusive);
        }
    }
    if !kernel.has_derivative() {
        return Ok(match gate {
            GateAnswer::True => {
                b.reason("necessity: under the gate f must be absolutely continuous, and no derivative is declared");
                Verdict::NotSemimartingale
            }
            _ => {
                b.reason("no declared derivative and the necessity gate does not hold");
                Verdict::Inconclusive
            }
        });
    }

    let int1 = check_int1(model, kernel, q)?;
    b.push(Condition::new(ConditionId::Int1, Role::Sufficient, &int1));
    let cf = check_cf(model, kernel, q)?;
    b.push(Condition::new(ConditionId::Cf, Role::Sufficient, &cf));
    if int1.finite == Some(true) && cf.finite == Some(true) {
        b.reason("sufficiency: drift, int1 and Cf are finite");
        return Ok(Verdict::Semimartingale);
    }
    match gate {
        GateAnswer::True => {}
        GateAnswer::False => {
            b.reason("sufficiency fails and the necessity gate does not hold");
            return Ok(Verdict::Inconclusive);
        }
        GateAnswer::Unknown => {
            b.reason("necessity gate unknown (custom measure without a declared small-jump exponent)");
            return Ok(Verdict::Inconclusive);
        }
    }
    if int1.finite == Some(false) {
        b.reason("necessity: int1 diverges under the gate");
        return Ok(Verdict::NotSemimartingale);
    }
    let trunc = check_trunc_case(model, kernel, q)?;
    b.push(Condition::new(ConditionId::TruncCase, Role::Necessary, &trunc));
    if trunc.finite == Some(false) {
        b.reason("necessity: trunc_case diverges under the gate");
        return Ok(Verdict::NotSemimartingale);
    }
    let u0 = ratio_all(model, RatioMode::U0Limsup, cfg)?;
    b.push(ratio_condition(ConditionId::U0, &u0));
    let u00 = ratio_all(model, RatioMode::U00Sup, cfg)?;
    b.push(ratio_condition(ConditionId::U00, &u00));
    if u0.0 == Some(true) || u00.0 == Some(true) {
        let mut fdot = cf.clone();
        fdot.value = if cf.finite == Some(true) { cf.value } else { f64::INFINITY };
        b.push(Condition::new(ConditionId::FdotInt, Role::Necessary, &fdot));
        if cf.finite == Some(false) {
            b.reason(if u00.0 == Some(true) {
                "necessity: u00 holds and Cf diverges"
            } else {
                "necessity: u0 holds and the per-label integral fdot_int diverges"
            });
            return Ok(Verdict::NotSemimartingale);
        }
    }
    if int1.finite.is_none() || cf.finite.is_none() || trunc.finite.is_none() {
        b.reason("some conditions could not be decided numerically");
    } else {
        b.reason("sufficiency fails, necessity conditions hold: the gap between the theorems");
    }
    Ok(Verdict::Inconclusive)
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Verdict::Semimartingale => "Semimartingale",
            Verdict::NotSemimartingale => "NotSemimartingale",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

impl ToString for ConditionId {
    fn to_string(&self) -> String {
        self.as_str().into()
    }
}
