//! Deterministic kernels `φ(t, s, v)` of moving-average type.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::quadrature::{integrate, Interval, QuadError, QuadratureConfig};

/// Function of a lag (or time) and a label index.
pub type KernelFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;
/// Function `(t, s, v) ↦ φ(t, s, v)`.
pub type PhiFn = Arc<dyn Fn(f64, f64, usize) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel has no declared derivative")]
    NoDerivative,
    #[error("operation needs a moving-average kernel (f, f0); general phi has no canonical split")]
    Unsupported,
    #[error("{name} = {value} violates {constraint}")]
    InvalidParameter { name: &'static str, value: f64, constraint: &'static str },
    #[error("kernel defines {got} exponents but V has {expected} points")]
    LabelMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Clone)]
pub enum KernelFamily {
    /// `φ(t, s, v) = f(t-s, v) - f0(-s, v)` with user functions that the
    /// kernel forces to vanish on negative arguments.
    Simma {
        f: KernelFn,
        f0: KernelFn,
        fdot: Option<KernelFn>,
        /// Lags where `f` or `f0` jump or have kinks.
        lag_breakpoints: Vec<f64>,
    },
    /// `f(t, v) = f0(t, v) = t_+^γ(v)`. A single exponent applies to every `v`.
    Fractional { gamma: Vec<f64> },
    /// `f(t) = e^(-θ t)` for `t >= 0`, `f0 = 0`.
    ExpMa { theta: f64 },
    GeneralPhi { phi: PhiFn, diag: KernelFn },
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Simma { fdot, lag_breakpoints, .. } => f
                .debug_struct("Simma")
                .field("has_fdot", &fdot.is_some())
                .field("lag_breakpoints", lag_breakpoints)
                .finish_non_exhaustive(),
            Self::Fractional { gamma } => f.debug_struct("Fractional").field("gamma", gamma).finish(),
            Self::ExpMa { theta } => f.debug_struct("ExpMa").field("theta", theta).finish(),
            Self::GeneralPhi { .. } => f.debug_struct("GeneralPhi").finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    warnings: Vec<String>,
}

impl KernelSpec {
    pub fn simma(f: KernelFn, f0: KernelFn, fdot: Option<KernelFn>, lag_breakpoints: Vec<f64>) -> Self {
        let lag_breakpoints = lag_breakpoints.into_iter().filter(|b| b.is_finite() && *b > 0.0).collect();
        Self { family: KernelFamily::Simma { f, f0, fdot, lag_breakpoints }, warnings: Vec::new() }
    }

    /// Fractional kernel with one exponent for all of `V` or one per label.
    /// Exponents `>= 1` are accepted with a warning.
    pub fn fractional(gamma: Vec<f64>) -> Result<Self, KernelError> {
        if gamma.is_empty() {
            return Err(KernelError::InvalidParameter { name: "gamma", value: f64::NAN, constraint: "at least one exponent" });
        }
        let mut warnings = Vec::new();
        for &g in &gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(KernelError::InvalidParameter { name: "gamma", value: g, constraint: "gamma > 0" });
            }
            if g >= 1.0 {
                warnings.push(format!("fractional exponent gamma = {g} >= 1; the process is not well defined"));
            }
        }
        Ok(Self { family: KernelFamily::Fractional { gamma }, warnings })
    }

    pub fn exp_ma(theta: f64) -> Result<Self, KernelError> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(KernelError::InvalidParameter { name: "theta", value: theta, constraint: "theta > 0" });
        }
        Ok(Self { family: KernelFamily::ExpMa { theta }, warnings: Vec::new() })
    }

    pub fn general_phi(phi: PhiFn, diag: KernelFn) -> Self {
        Self { family: KernelFamily::GeneralPhi { phi, diag }, warnings: Vec::new() }
    }

    /// `f = 1_[0, width)`, `f0 = 0`: a moving-window kernel with no derivative.
    pub fn indicator(width: f64) -> Result<Self, KernelError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(KernelError::InvalidParameter { name: "width", value: width, constraint: "width > 0" });
        }
        let f: KernelFn = Arc::new(move |x, _| if (0.0..width).contains(&x) { 1.0 } else { 0.0 });
        let f0: KernelFn = Arc::new(|_, _| 0.0);
        Ok(Self::simma(f, f0, None, vec![width]))
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Construction-time notes such as fractional exponents `>= 1`.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Checks that per-label parameters match a mixing space with `n` points.
    pub fn validate_labels(&self, n: usize) -> Result<(), KernelError> {
        if let KernelFamily::Fractional { gamma } = &self.family {
            if gamma.len() != 1 && gamma.len() != n {
                return Err(KernelError::LabelMismatch { expected: n, got: gamma.len() });
            }
        }
        Ok(())
    }

    pub fn is_simma(&self) -> bool {
        !matches!(self.family, KernelFamily::GeneralPhi { .. })
    }

    /// Fractional exponent for label `v`.
    pub fn gamma(&self, v: usize) -> Option<f64> {
        match &self.family {
            KernelFamily::Fractional { gamma } => Some(if gamma.len() == 1 { gamma[0] } else { gamma[v] }),
            _ => None,
        }
    }

    /// `f(x, v)`, zero for `x < 0`.
    pub fn f(&self, x: f64, v: usize) -> Result<f64, KernelError> {
        if x < 0.0 {
            return Ok(0.0);
        }
        match &self.family {
            KernelFamily::Simma { f, .. } => Ok(f(x, v)),
            KernelFamily::Fractional { .. } => Ok(frac_pow(x, self.gamma(v).unwrap_or(1.0))),
            KernelFamily::ExpMa { theta } => Ok(libm::exp(-theta * x)),
            KernelFamily::GeneralPhi { .. } => Err(KernelError::Unsupported),
        }
    }

    /// `f0(x, v)`, zero for `x < 0`.
    pub fn f0(&self, x: f64, v: usize) -> Result<f64, KernelError> {
        if x < 0.0 {
            return Ok(0.0);
        }
        match &self.family {
            KernelFamily::Simma { f0, .. } => Ok(f0(x, v)),
            KernelFamily::Fractional { .. } => Ok(frac_pow(x, self.gamma(v).unwrap_or(1.0))),
            KernelFamily::ExpMa { .. } => Ok(0.0),
            KernelFamily::GeneralPhi { .. } => Err(KernelError::Unsupported),
        }
    }

    /// `φ(t, s, v)`; zero whenever `s > t`.
    pub fn phi(&self, t: f64, s: f64, v: usize) -> f64 {
        if s > t {
            return 0.0;
        }
        match &self.family {
            KernelFamily::GeneralPhi { phi, .. } => phi(t, s, v),
            KernelFamily::ExpMa { theta } => libm::exp(-theta * (t - s)),
            KernelFamily::Fractional { .. } => {
                let g = self.gamma(v).unwrap_or(1.0);
                frac_pow(t - s, g) - frac_pow(-s, g)
            }
            KernelFamily::Simma { f, f0, .. } => {
                let a = f(t - s, v);
                let b = if s <= 0.0 { f0(-s, v) } else { 0.0 };
                a - b
            }
        }
    }

    /// Diagonal value `φ(s, s, v)`; equals `f(0, v)` for `s > 0` on
    /// moving-average kernels.
    pub fn diag(&self, s: f64, v: usize) -> f64 {
        match &self.family {
            KernelFamily::GeneralPhi { diag, .. } => diag(s, v),
            _ => self.phi(s, s, v),
        }
    }

    /// `f(0, v)`, the height of the jump `X` inherits from an atom of `Λ`.
    pub fn jump_height(&self, v: usize) -> Result<f64, KernelError> {
        self.f(0.0, v)
    }

    pub fn has_derivative(&self) -> bool {
        match &self.family {
            KernelFamily::Simma { fdot, .. } => fdot.is_some(),
            KernelFamily::Fractional { .. } | KernelFamily::ExpMa { .. } => true,
            KernelFamily::GeneralPhi { .. } => false,
        }
    }

    /// Declared derivative `ḟ(t, v)` for `t > 0`.
    pub fn fdot(&self, t: f64, v: usize) -> Result<f64, KernelError> {
        match &self.family {
            KernelFamily::Simma { fdot: Some(d), .. } => Ok(d(t, v)),
            KernelFamily::Simma { fdot: None, .. } => Err(KernelError::NoDerivative),
            KernelFamily::Fractional { .. } => {
                let g = self.gamma(v).unwrap_or(1.0);
                Ok(g * libm::pow(t, g - 1.0))
            }
            KernelFamily::ExpMa { theta } => Ok(-theta * libm::exp(-theta * t)),
            KernelFamily::GeneralPhi { .. } => Err(KernelError::NoDerivative),
        }
    }

    /// The split `g(s, v) = f(s, v) - f(0, v) 1{s >= 0}` with its jump heights.
    pub fn g_split(&self) -> Result<GSplit<'_>, KernelError> {
        if self.is_simma() {
            Ok(GSplit { kernel: self })
        } else {
            Err(KernelError::Unsupported)
        }
    }

    /// Lags where `f` or `f0` are not smooth, excluding zero.
    pub fn lag_breakpoints(&self) -> &[f64] {
        match &self.family {
            KernelFamily::Simma { lag_breakpoints, .. } => lag_breakpoints,
            _ => &[],
        }
    }

    /// Values of `s` where `φ(t, ·, v)` is not smooth.
    pub fn s_breakpoints(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0, t];
        for &b in self.lag_breakpoints() {
            out.push(t - b);
            out.push(-b);
        }
        out
    }

    /// Times `t > 0` with `|ḟ(t, v)| = level`, when known in closed form.
    pub fn fdot_level_crossings(&self, v: usize, level: f64) -> Option<Vec<f64>> {
        match &self.family {
            KernelFamily::Fractional { .. } => {
                let g = self.gamma(v)?;
                if g == 1.0 {
                    return Some(Vec::new());
                }
                let t = libm::pow(level / g, 1.0 / (g - 1.0));
                Some(if t.is_finite() && t > 0.0 { vec![t] } else { Vec::new() })
            }
            KernelFamily::ExpMa { theta } => {
                let t = libm::log(theta / level) / theta;
                Some(if t > 0.0 { vec![t] } else { Vec::new() })
            }
            _ => None,
        }
    }

    /// Largest discrepancy between `f(b) - f(a)` and `∫_a^b ḟ` over
    /// consecutive pairs of `points` (all positive).
    pub fn fundamental_theorem_defect(&self, v: usize, points: &[f64], cfg: &QuadratureConfig) -> Result<f64, KernelError> {
        if !self.has_derivative() {
            return Err(KernelError::NoDerivative);
        }
        let mut worst: f64 = 0.0;
        let splits = self.lag_breakpoints().to_vec();
        let c = cfg.with_splits(&splits);
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let r = integrate(|t| self.fdot(t, v).unwrap_or(f64::NAN), Interval::new(a, b), &c)?;
            let diff = self.f(b, v)? - self.f(a, v)?;
            worst = worst.max((diff - r.value).abs());
        }
        Ok(worst)
    }

    /// Largest gap `|f(x + δ) - f(x)|` at the sample points for a tiny `δ`;
    /// a right-continuous `f` gives values near zero.
    pub fn right_continuity_defect(&self, v: usize, points: &[f64]) -> Result<f64, KernelError> {
        let mut worst: f64 = 0.0;
        for &x in points {
            let d = 1e-12 * (1.0 + x.abs());
            worst = worst.max((self.f(x + d, v)? - self.f(x, v)?).abs());
        }
        Ok(worst)
    }
}

fn frac_pow(x: f64, g: f64) -> f64 {
    if x > 0.0 {
        libm::pow(x, g)
    } else {
        0.0
    }
}

/// `g(s, v) = f(s, v) - f(0, v) 1{s >= 0}` for a moving-average kernel.
#[derive(Debug, Clone, Copy)]
pub struct GSplit<'a> {
    kernel: &'a KernelSpec,
}

impl GSplit<'_> {
    pub fn g(&self, s: f64, v: usize) -> f64 {
        let f = self.kernel.f(s, v).unwrap_or(0.0);
        if s >= 0.0 {
            f - self.jump_height(v)
        } else {
            f
        }
    }

    pub fn jump_height(&self, v: usize) -> f64 {
        self.kernel.jump_height(v).unwrap_or(0.0)
    }
}
