//! Lévy measures, model specification and the characteristic integrands
//! `B` and `K` of an infinitely divisible random measure.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use thiserror::Error;

use crate::kernels::KernelSpec;
use crate::quadrature::{integrate, Interval, QuadError, QuadResult, QuadStatus, QuadratureConfig};
use crate::special::{lower_gamma, upper_gamma};

/// The truncation function `[[x]] = x / max(|x|, 1)`.
pub fn truncate(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        x.signum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} = {value} violates {constraint}")]
    InvalidParameter { name: &'static str, value: f64, constraint: &'static str },
    #[error("mixing space V is empty")]
    EmptyMixing,
    #[error("weight m({label}) = {weight} must be positive and finite")]
    NonPositiveWeight { label: String, weight: f64 },
    #[error("label {0} appears more than once in V")]
    DuplicateLabel(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    #[error("tail_quantile requires a nonzero argument")]
    ZeroArgument,
    #[error("integral diverges (growth exponent {growth_exponent:.4})")]
    Diverged { growth_exponent: f64 },
    #[error("quadrature did not converge: estimate {estimate}, error estimate {error_estimate}")]
    NotConverged { estimate: f64, error_estimate: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("label index {0} is not in V")]
    UnknownLabel(usize),
}

impl LevyError {
    pub(crate) fn from_result(r: &QuadResult) -> Option<Self> {
        match r.status {
            QuadStatus::Converged => None,
            QuadStatus::Diverged { growth_exponent, .. } => Some(Self::Diverged { growth_exponent }),
            QuadStatus::MaxRefinement => {
                Some(Self::NotConverged { estimate: r.value, error_estimate: r.error_estimate })
            }
        }
    }
}

/// Declared power-law exponents of a custom density.
///
/// `small = β` means the density behaves like `|x|^(-1-β)` near zero, so
/// `∫_{|x|≤1} |x|^p ρ(dx) < ∞` exactly when `p > β`. `large` plays the same
/// role at infinity, with `f64::INFINITY` for faster-than-power decay.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TailExponents {
    pub small: Option<f64>,
    pub large: Option<f64>,
}

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomDensity {
    pub density: DensityFn,
    pub symmetric: bool,
    pub exponents: TailExponents,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("symmetric", &self.symmetric)
            .field("exponents", &self.exponents)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum LevyFamily {
    /// No jumps at all; used for purely Gaussian components.
    Zero,
    /// Density `c |x|^(-α-1)` on both half-lines.
    Stable { alpha: f64, c: f64 },
    /// Density `c |x|^(-α-1) e^(-λ|x|)` on both half-lines.
    TemperedStable { alpha: f64, c: f64, lambda: f64 },
    /// Mass `w` at `x₀`, and also at `-x₀` when `mirrored`.
    PointMass { position: f64, mass: f64, mirrored: bool },
    Custom(CustomDensity),
}

/// A one-dimensional Lévy measure `ρ`.
#[derive(Debug, Clone)]
pub struct LevyMeasure1D {
    family: LevyFamily,
}

/// Value of a moment integral that may be infinite or undecidable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
    Unknown,
}

impl Moment {
    pub fn is_finite(self) -> Option<bool> {
        match self {
            Moment::Finite(_) => Some(true),
            Moment::Infinite => Some(false),
            Moment::Unknown => None,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Moment::Finite(v) => v,
            Moment::Infinite => f64::INFINITY,
            Moment::Unknown => f64::NAN,
        }
    }

    fn from_quad(r: &QuadResult) -> Self {
        match r.status {
            QuadStatus::Converged => Moment::Finite(r.value),
            QuadStatus::Diverged { .. } => Moment::Infinite,
            QuadStatus::MaxRefinement => Moment::Unknown,
        }
    }
}

/// Part of the real line a moment is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `|x| <= 1`
    Small,
    /// `|x| > 1`
    Large,
}

fn check(cond: bool, name: &'static str, value: f64, constraint: &'static str) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, constraint })
    }
}

/// Product that treats `0 · ∞` as zero, for integrands multiplying a
/// vanishing weight into a singular density.
fn mul0(weight: f64, density: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * density
    }
}

impl LevyMeasure1D {
    pub fn zero() -> Self {
        Self { family: LevyFamily::Zero }
    }

    pub fn stable(alpha: f64, c: f64) -> Result<Self, ModelError> {
        check(alpha > 0.0 && alpha < 2.0, "alpha", alpha, "0 < alpha < 2")?;
        check(c > 0.0 && c.is_finite(), "c", c, "c > 0")?;
        Ok(Self { family: LevyFamily::Stable { alpha, c } })
    }

    pub fn tempered_stable(alpha: f64, c: f64, lambda: f64) -> Result<Self, ModelError> {
        check(alpha > 0.0 && alpha < 2.0, "alpha", alpha, "0 < alpha < 2")?;
        check(c > 0.0 && c.is_finite(), "c", c, "c > 0")?;
        check(lambda > 0.0 && lambda.is_finite(), "lambda", lambda, "lambda > 0")?;
        Ok(Self { family: LevyFamily::TemperedStable { alpha, c, lambda } })
    }

    /// One-sided point mass `w δ_{x₀}`.
    pub fn point_mass(position: f64, mass: f64) -> Result<Self, ModelError> {
        Self::point_mass_impl(position, mass, false)
    }

    /// Symmetric point masses `w (δ_{x₀} + δ_{-x₀})`.
    pub fn symmetric_point_mass(position: f64, mass: f64) -> Result<Self, ModelError> {
        Self::point_mass_impl(position.abs(), mass, true)
    }

    fn point_mass_impl(position: f64, mass: f64, mirrored: bool) -> Result<Self, ModelError> {
        check(position != 0.0 && position.is_finite(), "position", position, "x0 != 0")?;
        check(mass > 0.0 && mass.is_finite(), "mass", mass, "w > 0")?;
        Ok(Self { family: LevyFamily::PointMass { position, mass, mirrored } })
    }

    /// Measure with a user-supplied density. Symmetry and tail exponents are
    /// taken as declared.
    pub fn custom(density: DensityFn, symmetric: bool, exponents: TailExponents) -> Self {
        Self { family: LevyFamily::Custom(CustomDensity { density, symmetric, exponents }) }
    }

    pub fn family(&self) -> &LevyFamily {
        &self.family
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.family {
            LevyFamily::Zero | LevyFamily::Stable { .. } | LevyFamily::TemperedStable { .. } => true,
            LevyFamily::PointMass { mirrored, .. } => *mirrored,
            LevyFamily::Custom(c) => c.symmetric,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, LevyFamily::Zero)
    }

    /// Density at `x`, if the measure has one.
    pub fn density(&self, x: f64) -> Option<f64> {
        match &self.family {
            LevyFamily::Zero => Some(0.0),
            LevyFamily::Stable { alpha, c } => Some(c * libm::pow(x.abs(), -alpha - 1.0)),
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                let a = x.abs();
                Some(c * libm::exp(-(alpha + 1.0) * libm::log(a) - lambda * a))
            }
            LevyFamily::PointMass { .. } => None,
            LevyFamily::Custom(c) => Some((c.density)(x)),
        }
    }

    /// `ρ((x, ∞))` for `x > 0`.
    pub fn tail_plus(&self, x: f64, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
        match &self.family {
            LevyFamily::Zero => Ok(0.0),
            LevyFamily::Stable { alpha, c } => Ok(c / alpha * libm::pow(x, -alpha)),
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                Ok(c * libm::pow(*lambda, *alpha) * upper_gamma(-alpha, lambda * x))
            }
            LevyFamily::PointMass { position, mass, mirrored } => {
                let p = if *mirrored { position.abs() } else { *position };
                Ok(if p > x { *mass } else { 0.0 })
            }
            LevyFamily::Custom(c) => {
                let r = integrate(|y| (c.density)(y), Interval::new(x, f64::INFINITY), cfg)?;
                LevyError::from_result(&r).map_or(Ok(r.value), Err)
            }
        }
    }

    /// `ρ((-∞, -x))` for `x > 0`.
    pub fn tail_minus(&self, x: f64, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
        match &self.family {
            LevyFamily::PointMass { position, mass, mirrored } => {
                let p = if *mirrored { -position.abs() } else { *position };
                Ok(if p < -x { *mass } else { 0.0 })
            }
            LevyFamily::Custom(c) if !c.symmetric => {
                let r = integrate(|y| (c.density)(y), Interval::new(f64::NEG_INFINITY, -x), cfg)?;
                LevyError::from_result(&r).map_or(Ok(r.value), Err)
            }
            _ => self.tail_plus(x, cfg),
        }
    }

    /// Generalized inverse of the tails.
    ///
    /// For `s > 0` this is `inf{x > 0 : ρ((x, ∞)) <= s}` and for `s < 0` it is
    /// `sup{x < 0 : ρ((-∞, x)) <= -s}`. When the tail mass never exceeds
    /// `|s|` the result is `0`, so exhausted finite-activity series terms
    /// contribute nothing.
    pub fn tail_quantile(&self, s: f64, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
        if s == 0.0 || s.is_nan() {
            return Err(LevyError::ZeroArgument);
        }
        let target = s.abs();
        let sign = s.signum();
        match &self.family {
            LevyFamily::Zero => Ok(0.0),
            LevyFamily::Stable { alpha, c } => Ok(sign * libm::pow(c / (alpha * target), 1.0 / alpha)),
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                Ok(sign * tempered_quantile(*alpha, *c, *lambda, target))
            }
            LevyFamily::PointMass { position, mass, mirrored } => {
                let p = if *mirrored { sign * position.abs() } else { *position };
                Ok(if p * sign > 0.0 && *mass > target { p } else { 0.0 })
            }
            LevyFamily::Custom(_) => {
                let tail = |x: f64| {
                    if sign > 0.0 {
                        self.tail_plus(x, cfg)
                    } else {
                        self.tail_minus(x, cfg)
                    }
                };
                Ok(sign * bisect_quantile(tail, target)?)
            }
        }
    }

    /// `∫ g dρ`. `splits` lists kinks of `g`; for symmetric measures only
    /// their absolute values matter.
    pub fn integrate<G: Fn(f64) -> f64>(
        &self,
        g: G,
        splits: &[f64],
        cfg: &QuadratureConfig,
    ) -> Result<QuadResult, QuadError> {
        let done = |value: f64| QuadResult { value, error_estimate: 0.0, status: QuadStatus::Converged, evaluations: 1 };
        match &self.family {
            LevyFamily::Zero => Ok(done(0.0)),
            LevyFamily::PointMass { position, mass, mirrored } => {
                let mut v = mass * g(*position);
                if *mirrored {
                    v += mass * g(-*position);
                }
                Ok(done(v))
            }
            _ if self.is_symmetric() => {
                let mut pts: Vec<f64> = splits.iter().map(|p| p.abs()).filter(|p| *p > 0.0).collect();
                pts.push(1.0);
                let c = cfg.with_splits(&pts);
                integrate(
                    |x| {
                        let w = g(x) + g(-x);
                        mul0(w, self.density(x).unwrap_or(0.0))
                    },
                    Interval::positive_half_line(),
                    &c,
                )
            }
            _ => {
                let mut pts: Vec<f64> = splits.to_vec();
                pts.extend_from_slice(&[-1.0, 0.0, 1.0]);
                let c = cfg.with_splits(&pts);
                integrate(|x| mul0(g(x), self.density(x).unwrap_or(0.0)), Interval::real_line(), &c)
            }
        }
    }

    /// `∫_region |x|^p ρ(dx)`.
    pub fn abs_power_moment(&self, p: f64, region: Region, cfg: &QuadratureConfig) -> Moment {
        match &self.family {
            LevyFamily::Zero => Moment::Finite(0.0),
            LevyFamily::Stable { alpha, c } => match region {
                Region::Small if p > *alpha => Moment::Finite(2.0 * c / (p - alpha)),
                Region::Large if p < *alpha => Moment::Finite(2.0 * c / (alpha - p)),
                _ => Moment::Infinite,
            },
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                let k = 2.0 * c * libm::pow(*lambda, alpha - p);
                match region {
                    Region::Small if p > *alpha => Moment::Finite(k * lower_gamma(p - alpha, *lambda)),
                    Region::Small => Moment::Infinite,
                    Region::Large => Moment::Finite(k * upper_gamma(p - alpha, *lambda)),
                }
            }
            LevyFamily::PointMass { position, mass, mirrored } => {
                let a = position.abs();
                let inside = match region {
                    Region::Small => a <= 1.0,
                    Region::Large => a > 1.0,
                };
                let n = if *mirrored { 2.0 } else { 1.0 };
                Moment::Finite(if inside { n * mass * libm::pow(a, p) } else { 0.0 })
            }
            LevyFamily::Custom(cd) => {
                let declared = match region {
                    Region::Small => cd.exponents.small.map(|b| p > b),
                    Region::Large => cd.exponents.large.map(|b| p < b),
                };
                if declared == Some(false) {
                    return Moment::Infinite;
                }
                let dom = match region {
                    Region::Small => Interval::new(0.0, 1.0),
                    Region::Large => Interval::new(1.0, f64::INFINITY),
                };
                let f = |x: f64| {
                    let w = libm::pow(x, p);
                    if cd.symmetric {
                        mul0(2.0 * w, (cd.density)(x))
                    } else {
                        mul0(w, (cd.density)(x) + (cd.density)(-x))
                    }
                };
                match integrate(f, dom, cfg) {
                    Ok(r) => Moment::from_quad(&r),
                    Err(_) => Moment::Unknown,
                }
            }
        }
    }

    /// Whether `∫_{|x|≤1} |x| ρ(dx) = ∞`, i.e. jumps of infinite variation.
    /// `None` for custom densities without a declared small-jump exponent.
    pub fn has_infinite_variation(&self) -> Option<bool> {
        match &self.family {
            LevyFamily::Zero | LevyFamily::PointMass { .. } => Some(false),
            LevyFamily::Stable { alpha, .. } | LevyFamily::TemperedStable { alpha, .. } => Some(*alpha >= 1.0),
            LevyFamily::Custom(c) => c.exponents.small.map(|b| b >= 1.0),
        }
    }

    /// `∫_{|x|≤u} x² ρ(dx)`.
    pub fn truncated_second_moment(&self, u: f64, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
        match &self.family {
            LevyFamily::Zero => Ok(0.0),
            LevyFamily::Stable { alpha, c } => Ok(2.0 * c * libm::pow(u, 2.0 - alpha) / (2.0 - alpha)),
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                Ok(2.0 * c * libm::pow(*lambda, alpha - 2.0) * lower_gamma(2.0 - alpha, lambda * u))
            }
            LevyFamily::PointMass { position, mass, mirrored } => {
                let n = if *mirrored { 2.0 } else { 1.0 };
                Ok(if position.abs() <= u { n * mass * position * position } else { 0.0 })
            }
            LevyFamily::Custom(_) => {
                let r = self.integrate(|x| if x.abs() <= u { x * x } else { 0.0 }, &[u, -u], cfg)?;
                LevyError::from_result(&r).map_or(Ok(r.value), Err)
            }
        }
    }

    /// `∫_{|x|>u} |x| ρ(dx)`.
    pub fn tail_abs_moment(&self, u: f64, cfg: &QuadratureConfig) -> Moment {
        match &self.family {
            LevyFamily::Zero => Moment::Finite(0.0),
            LevyFamily::Stable { alpha, c } => {
                if *alpha > 1.0 {
                    Moment::Finite(2.0 * c * libm::pow(u, 1.0 - alpha) / (alpha - 1.0))
                } else {
                    Moment::Infinite
                }
            }
            LevyFamily::TemperedStable { alpha, c, lambda } => {
                Moment::Finite(2.0 * c * libm::pow(*lambda, alpha - 1.0) * upper_gamma(1.0 - alpha, lambda * u))
            }
            LevyFamily::PointMass { position, mass, mirrored } => {
                let n = if *mirrored { 2.0 } else { 1.0 };
                let a = position.abs();
                Moment::Finite(if a > u { n * mass * a } else { 0.0 })
            }
            LevyFamily::Custom(cd) => {
                if cd.exponents.large.is_some_and(|b| b <= 1.0) {
                    return Moment::Infinite;
                }
                match self.integrate(|x| if x.abs() > u { x.abs() } else { 0.0 }, &[u, -u], cfg) {
                    Ok(r) => Moment::from_quad(&r),
                    Err(_) => Moment::Unknown,
                }
            }
        }
    }

    /// `∫ (1 ∧ x²) ρ(dx)`, finite for every Lévy measure.
    pub fn levy_integral(&self, cfg: &QuadratureConfig) -> Moment {
        match self.integrate(|x| (x * x).min(1.0), &[], cfg) {
            Ok(r) => Moment::from_quad(&r),
            Err(_) => Moment::Unknown,
        }
    }

    /// `∫ (x - [[x]]) ρ(dx)`, the compensator shift of the large jumps.
    pub fn large_jump_mean(&self, cfg: &QuadratureConfig) -> Moment {
        if self.is_symmetric() {
            return match self.tail_abs_moment(1.0, cfg) {
                Moment::Finite(_) => Moment::Finite(0.0),
                other => other,
            };
        }
        match self.integrate(|x| x - truncate(x), &[], cfg) {
            Ok(r) => Moment::from_quad(&r),
            Err(_) => Moment::Unknown,
        }
    }
}

fn tempered_quantile(alpha: f64, c: f64, lambda: f64, s: f64) -> f64 {
    let scale = c * libm::pow(lambda, alpha);
    let log_tail = |x: f64| libm::log(scale * upper_gamma(-alpha, lambda * x));
    let target = libm::log(s);
    // The stable tail dominates the tempered one, so its quantile is an upper bracket.
    let mut hi = libm::pow(c / (alpha * s), 1.0 / alpha);
    let mut lo = hi;
    while log_tail(lo) < target {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return 0.0;
        }
    }
    if lo == hi {
        return lo;
    }
    // Safeguarded Newton iteration in y = ln x; ln ρ(e^y, ∞) is concave in y
    // for this family, which keeps the steps inside the bracket.
    let (mut ylo, mut yhi) = (libm::log(lo), libm::log(hi));
    let mut y = 0.5 * (ylo + yhi);
    for _ in 0..200 {
        let x = libm::exp(y);
        let ft = log_tail(x) - target;
        if ft > 0.0 {
            ylo = y;
        } else {
            yhi = y;
        }
        let tail = libm::exp(log_tail(x));
        let dens = c * libm::exp(-(alpha + 1.0) * y - lambda * x);
        let slope = -x * dens / tail;
        let mut next = y - ft / slope;
        if !(next > ylo && next < yhi) || !next.is_finite() {
            next = 0.5 * (ylo + yhi);
        }
        if (next - y).abs() <= 1e-15 * y.abs().max(1.0) || yhi - ylo <= 1e-15 * y.abs().max(1.0) {
            return libm::exp(next);
        }
        y = next;
    }
    libm::exp(y)
}

/// Quantile of a nonincreasing tail by log-scale bisection.
fn bisect_quantile(tail: impl Fn(f64) -> Result<f64, LevyError>, s: f64) -> Result<f64, LevyError> {
    let mut hi = 1.0;
    while tail(hi)? > s {
        hi *= 2.0;
        if hi > 1e300 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = hi;
    loop {
        if tail(lo)? > s {
            break;
        }
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    for _ in 0..200 {
        let mid = libm::sqrt(lo * hi);
        if tail(mid)? > s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

/// One point `v` of the mixing space with its characteristics.
#[derive(Debug, Clone)]
pub struct Component {
    pub label: String,
    /// Mixing weight `m({v})`.
    pub weight: f64,
    /// Drift `b(v)`.
    pub drift: f64,
    /// Gaussian variance `σ²(v)`.
    pub gaussian_var: f64,
    pub levy: LevyMeasure1D,
}

/// Characteristics of `Λ` with `κ(ds, dv) = ds m(dv)` on a finite `V`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    components: Vec<Component>,
}

impl ModelSpec {
    pub fn new(components: Vec<Component>) -> Result<Self, ModelError> {
        if components.is_empty() {
            return Err(ModelError::EmptyMixing);
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(ModelError::NonPositiveWeight { label: c.label.clone(), weight: c.weight });
            }
            check(c.drift.is_finite(), "drift", c.drift, "b finite")?;
            check(c.gaussian_var >= 0.0 && c.gaussian_var.is_finite(), "gaussian_var", c.gaussian_var, "sigma2 >= 0")?;
            if components[..i].iter().any(|o| o.label == c.label) {
                return Err(ModelError::DuplicateLabel(c.label.clone()));
            }
        }
        Ok(Self { components })
    }

    /// Model with a single point in `V` of unit weight.
    pub fn single(drift: f64, gaussian_var: f64, levy: LevyMeasure1D) -> Result<Self, ModelError> {
        Self::new(alloc::vec![Component { label: "v0".into(), weight: 1.0, drift, gaussian_var, levy }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, v: usize) -> Result<&Component, LevyError> {
        self.components.get(v).ok_or(LevyError::UnknownLabel(v))
    }

    /// `m(V)`
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.components.iter().all(|c| c.levy.is_symmetric())
    }

    pub fn has_gaussian(&self) -> bool {
        self.components.iter().any(|c| c.gaussian_var > 0.0)
    }

    pub fn has_drift(&self) -> bool {
        self.components.iter().any(|c| c.drift != 0.0)
    }
}

/// `B(x, v) = x b(v) + ∫ ([[xy]] - x[[y]]) ρ_v(dy)`.
pub fn b_kernel(x: f64, v: usize, model: &ModelSpec, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
    let comp = model.component(v)?;
    let linear = x * comp.drift;
    if x == 0.0 || comp.levy.is_symmetric() {
        return Ok(linear);
    }
    let g = |y: f64| truncate(x * y) - x * truncate(y);
    if let LevyFamily::PointMass { position, mass, .. } = comp.levy.family() {
        return Ok(linear + mass * g(*position));
    }
    let k = 1.0 / x.abs();
    let r = comp.levy.integrate(g, &[k, -k], cfg)?;
    match LevyError::from_result(&r) {
        None => Ok(linear + r.value),
        Some(e) => Err(e),
    }
}

/// `K(x, v) = x² σ²(v) + ∫ [[xy]]² ρ_v(dy)`.
///
/// Stable and tempered stable measures use closed forms (power laws and
/// incomplete gamma functions); custom densities use quadrature.
pub fn k_kernel(x: f64, v: usize, model: &ModelSpec, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
    let comp = model.component(v)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let gauss = x * x * comp.gaussian_var;
    let a = x.abs();
    match comp.levy.family() {
        LevyFamily::Zero => Ok(gauss),
        LevyFamily::PointMass { position, mass, mirrored } => {
            let n = if *mirrored { 2.0 } else { 1.0 };
            Ok(gauss + n * mass * (x * position * x * position).min(1.0))
        }
        LevyFamily::Stable { alpha, c } => {
            Ok(gauss + 2.0 * c * libm::pow(a, *alpha) * (1.0 / (2.0 - alpha) + 1.0 / alpha))
        }
        LevyFamily::TemperedStable { alpha, c, lambda } => {
            let z = lambda / a;
            let small = a * a * libm::pow(*lambda, alpha - 2.0) * lower_gamma(2.0 - alpha, z);
            let large = libm::pow(*lambda, *alpha) * upper_gamma(-alpha, z);
            Ok(gauss + 2.0 * c * (small + large))
        }
        LevyFamily::Custom(_) => Ok(gauss + k_jump_quadrature(x, &comp.levy, cfg)?),
    }
}

/// Jump part of `K` by quadrature, `∫ [[xy]]² ρ(dy)`, for any family.
pub fn k_jump_quadrature(x: f64, levy: &LevyMeasure1D, cfg: &QuadratureConfig) -> Result<f64, LevyError> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let k = 1.0 / x.abs();
    let r = levy.integrate(|y| (x * y * x * y).min(1.0), &[k, -k], cfg)?;
    match LevyError::from_result(&r) {
        None => Ok(r.value),
        Some(e) => Err(e),
    }
}

/// Outcome of the existence conditions for `X_t = ∫ φ(t, s, v) Λ(ds, dv)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Existence {
    Exists,
    Diverges { growth_exponent: f64 },
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralSummary {
    pub value: f64,
    pub error_estimate: f64,
    pub finite: Option<bool>,
    pub growth_exponent: Option<f64>,
}

impl IntegralSummary {
    fn from_result(r: &QuadResult) -> Self {
        Self {
            value: r.value,
            error_estimate: r.error_estimate,
            finite: match r.status {
                QuadStatus::Converged => Some(true),
                QuadStatus::Diverged { .. } => Some(false),
                QuadStatus::MaxRefinement => None,
            },
            growth_exponent: r.growth_exponent(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistenceReport {
    pub t: f64,
    /// `∫ |B(φ(t, s, v), v)| ds m(dv)`
    pub b_integral: IntegralSummary,
    /// `∫ K(φ(t, s, v), v) ds m(dv)`
    pub k_integral: IntegralSummary,
    pub verdict: Existence,
}

/// Evaluates the existence conditions of the stochastic integral at time `t`
/// over `s ∈ (-∞, t]`.
pub fn check_existence(
    kernel: &KernelSpec,
    model: &ModelSpec,
    t: f64,
    cfg: &QuadratureConfig,
) -> Result<ExistenceReport, LevyError> {
    let inner = cfg.loosened(1e-11);
    let outer = cfg.with_splits(&kernel.s_breakpoints(t));
    let failure: RefCell<Option<LevyError>> = RefCell::new(None);
    let record = |e: LevyError| {
        failure.borrow_mut().get_or_insert(e);
        0.0
    };

    let b_int = integrate(
        |s| {
            let mut acc = 0.0;
            for (v, comp) in model.components().iter().enumerate() {
                let x = kernel.phi(t, s, v);
                match b_kernel(x, v, model, &inner) {
                    Ok(b) => acc += comp.weight * b.abs(),
                    Err(e) => return record(e),
                }
            }
            acc
        },
        Interval::new(f64::NEG_INFINITY, t),
        &outer,
    )?;
    let k_int = integrate(
        |s| {
            let mut acc = 0.0;
            for (v, comp) in model.components().iter().enumerate() {
                let x = kernel.phi(t, s, v);
                match k_kernel(x, v, model, &inner) {
                    Ok(k) => acc += comp.weight * k,
                    Err(e) => return record(e),
                }
            }
            acc
        },
        Interval::new(f64::NEG_INFINITY, t),
        &outer,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let b_integral = IntegralSummary::from_result(&b_int);
    let k_integral = IntegralSummary::from_result(&k_int);
    let verdict = match (b_int.status, k_int.status) {
        (QuadStatus::Diverged { growth_exponent, .. }, _) | (_, QuadStatus::Diverged { growth_exponent, .. }) => {
            Existence::Diverges { growth_exponent }
        }
        (QuadStatus::Converged, QuadStatus::Converged) => Existence::Exists,
        _ => Existence::Undetermined,
    };
    Ok(ExistenceReport { t, b_integral, k_integral, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn truncation_branches() {
        assert_eq!(truncate(0.5), 0.5);
        assert_eq!(truncate(2.0), 1.0);
        assert_eq!(truncate(-3.0), -1.0);
    }

    #[test]
    fn stable_quantile_inverts_tail() {
        let rho = LevyMeasure1D::stable(1.0, 1.0).unwrap();
        assert!((rho.tail_quantile(0.5, &cfg()).unwrap() - 2.0).abs() < 1e-14);
        assert!((rho.tail_quantile(-0.5, &cfg()).unwrap() + 2.0).abs() < 1e-14);
        assert_eq!(rho.tail_quantile(0.0, &cfg()), Err(LevyError::ZeroArgument));
    }

    #[test]
    fn point_mass_quantile_is_a_step() {
        let rho = LevyMeasure1D::point_mass(1.0, 1.0).unwrap();
        assert_eq!(rho.tail_quantile(0.5, &cfg()).unwrap(), 1.0);
        assert_eq!(rho.tail_quantile(2.0, &cfg()).unwrap(), 0.0);
        assert_eq!(rho.tail_quantile(-0.5, &cfg()).unwrap(), 0.0);
        let sym = LevyMeasure1D::symmetric_point_mass(1.0, 1.0).unwrap();
        assert_eq!(sym.tail_quantile(-0.5, &cfg()).unwrap(), -1.0);
    }

    #[test]
    fn tempered_quantile_inverts_tail() {
        let rho = LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap();
        for s in [1e-6, 1e-3, 0.1, 1.0, 10.0, 1e4] {
            let x = rho.tail_quantile(s, &cfg()).unwrap();
            let back = rho.tail_plus(x, &cfg()).unwrap();
            assert!((back - s).abs() < 1e-10 * s, "s={s} x={x} back={back}");
        }
    }

    #[test]
    fn custom_quantile_uses_numeric_tail() {
        let rho = LevyMeasure1D::custom(
            Arc::new(|x: f64| libm::pow(x.abs(), -2.5)),
            true,
            TailExponents { small: Some(1.5), large: Some(1.5) },
        );
        let x = rho.tail_quantile(0.3, &cfg()).unwrap();
        let exact = libm::pow(1.0 / (1.5 * 0.3), 1.0 / 1.5);
        assert!((x - exact).abs() < 1e-8 * exact, "{x} vs {exact}");
    }

    #[test]
    fn b_kernel_examples() {
        let model = ModelSpec::single(1.0, 0.0, LevyMeasure1D::point_mass(1.0, 1.0).unwrap()).unwrap();
        assert!((b_kernel(2.0, 0, &model, &cfg()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(b_kernel(0.0, 0, &model, &cfg()).unwrap(), 0.0);
        let sym = ModelSpec::single(0.0, 0.0, LevyMeasure1D::stable(1.5, 1.0).unwrap()).unwrap();
        assert_eq!(b_kernel(3.7, 0, &sym, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn b_kernel_custom_matches_point_mass_limit() {
        // Narrow bump around 2 approximates 0.5 δ_2.
        let w = 1e-3;
        let dens = move |y: f64| if (y - 2.0).abs() < w { 0.5 / (2.0 * w) } else { 0.0 };
        let rho = LevyMeasure1D::custom(Arc::new(dens), false, TailExponents::default());
        let model = ModelSpec::single(0.0, 0.0, rho).unwrap();
        let c = cfg().with_splits(&[2.0 - w, 2.0 + w]);
        let got = b_kernel(0.25, 0, &model, &c).unwrap();
        let expect = 0.5 * (truncate(0.5) - 0.25 * truncate(2.0));
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn k_kernel_examples() {
        let model = ModelSpec::single(0.0, 0.0, LevyMeasure1D::point_mass(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(k_kernel(3.0, 0, &model, &cfg()).unwrap(), 1.0);
        assert_eq!(k_kernel(0.0, 0, &model, &cfg()).unwrap(), 0.0);
        let st = ModelSpec::single(0.0, 0.0, LevyMeasure1D::stable(1.5, 1.0).unwrap()).unwrap();
        let exact = 2.0 * (1.0 / 0.5 + 1.0 / 1.5);
        assert!((k_kernel(1.0, 0, &st, &cfg()).unwrap() - exact).abs() < 1e-12 * exact);
        let quad = k_jump_quadrature(1.0, &st.components()[0].levy, &cfg()).unwrap();
        assert!((quad - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn tempered_k_closed_form_matches_quadrature() {
        let ts = ModelSpec::single(0.0, 0.5, LevyMeasure1D::tempered_stable(1.3, 0.8, 2.0).unwrap()).unwrap();
        for x in [1e-3, 0.2, 1.0, 7.0, 300.0] {
            let closed = k_kernel(x, 0, &ts, &cfg()).unwrap();
            let fine = QuadratureConfig { abs_tol: 1e-300, ..cfg() };
            let quad = 0.5 * x * x + k_jump_quadrature(x, &ts.components()[0].levy, &fine).unwrap();
            assert!((closed - quad).abs() < 1e-8 * quad, "x={x}: {closed} vs {quad}");
        }
    }

    #[test]
    fn moments_of_tempered_stable_match_quadrature() {
        let rho = LevyMeasure1D::tempered_stable(1.2, 1.3, 0.7).unwrap();
        let dens = |x: f64| rho.density(x).unwrap();
        let c = QuadratureConfig { rel_tol: 1e-11, ..cfg() };
        let num_small = integrate(|x| 2.0 * libm::pow(x, 1.25) * dens(x), Interval::new(0.0, 1.0), &c).unwrap().value;
        let num_large =
            integrate(|x| 2.0 * libm::pow(x, 1.25) * dens(x), Interval::new(1.0, f64::INFINITY), &c).unwrap().value;
        assert!((rho.abs_power_moment(1.25, Region::Small, &c).value() - num_small).abs() < 1e-9 * num_small);
        assert!((rho.abs_power_moment(1.25, Region::Large, &c).value() - num_large).abs() < 1e-9 * num_large);
        let u = 0.37;
        let m2 = integrate(|x| 2.0 * x * x * dens(x), Interval::new(0.0, u), &c).unwrap().value;
        assert!((rho.truncated_second_moment(u, &c).unwrap() - m2).abs() < 1e-9 * m2);
        let m1 = integrate(|x| 2.0 * x * dens(x), Interval::new(u, f64::INFINITY), &c).unwrap().value;
        assert!((rho.tail_abs_moment(u, &c).value() - m1).abs() < 1e-9 * m1);
    }

    #[test]
    fn existence_examples() {
        use crate::kernels::KernelSpec;
        let zero = KernelSpec::general_phi(Arc::new(|_, _, _| 0.0), Arc::new(|_, _| 0.0));
        let st = ModelSpec::single(0.0, 0.0, LevyMeasure1D::stable(1.5, 1.0).unwrap()).unwrap();
        let r = check_existence(&zero, &st, 1.0, &cfg()).unwrap();
        assert_eq!(r.verdict, Existence::Exists);
        assert_eq!(r.k_integral.value, 0.0);

        let frac = KernelSpec::fractional(alloc::vec![0.6]).unwrap();
        let r = check_existence(&frac, &st, 1.0, &cfg()).unwrap();
        assert!(matches!(r.verdict, Existence::Diverges { .. }), "{r:?}");

        let ts = ModelSpec::single(0.0, 0.0, LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap()).unwrap();
        let frac = KernelSpec::fractional(alloc::vec![0.25]).unwrap();
        let r = check_existence(&frac, &ts, 1.0, &cfg()).unwrap();
        assert_eq!(r.verdict, Existence::Exists, "{r:?}");
    }

    #[test]
    fn constructor_validation() {
        assert!(LevyMeasure1D::stable(2.0, 1.0).is_err());
        assert!(LevyMeasure1D::tempered_stable(1.0, 1.0, 0.0).is_err());
        assert!(LevyMeasure1D::point_mass(0.0, 1.0).is_err());
        assert!(ModelSpec::new(Vec::new()).is_err());
        let bad = Component { label: "a".into(), weight: 0.0, drift: 0.0, gaussian_var: 0.0, levy: LevyMeasure1D::zero() };
        assert!(matches!(ModelSpec::new(alloc::vec![bad]), Err(ModelError::NonPositiveWeight { .. })));
    }
}
