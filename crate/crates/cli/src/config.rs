//! TOML run configuration.
//!
//! ```toml
//! seed = 42
//!
//! [[model.components]]
//! label = "v0"
//! weight = 1.0
//! family = "tempered_stable"
//! alpha = 1.2
//! c = 1.0
//! lambda = 1.0
//!
//! [kernel]
//! family = "exp_ma"
//! theta = 1.0
//!
//! [series]
//! window_past = 10.0
//! gamma_cap = 1000.0
//! grid_points = 257
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use semimart_core::criteria::CriteriaConfig;
use semimart_core::kernels::KernelSpec;
use semimart_core::levy::{Component, LevyMeasure1D, ModelSpec};
use semimart_core::quadrature::QuadratureConfig;
use semimart_core::simulation::SeriesConfig;

/// A configuration error anchored to a line of the document when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub kernel: KernelSection,
    #[serde(default)]
    pub series: SeriesSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub components: Vec<ComponentSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub label: Option<String>,
    pub weight: Option<Spanned<f64>>,
    #[serde(default)]
    pub drift: f64,
    pub sigma2: Option<Spanned<f64>>,
    pub family: Spanned<String>,
    pub alpha: Option<Spanned<f64>>,
    pub c: Option<Spanned<f64>>,
    pub lambda: Option<Spanned<f64>>,
    pub position: Option<Spanned<f64>>,
    pub mass: Option<Spanned<f64>>,
    /// Point masses: mirror the atom to `-position`.
    #[serde(default)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum GammaValue {
    One(f64),
    PerLabel(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: Spanned<String>,
    pub gamma: Option<Spanned<GammaValue>>,
    pub theta: Option<Spanned<f64>>,
    pub width: Option<Spanned<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesSection {
    pub window_past: f64,
    pub horizon: f64,
    pub gamma_cap: f64,
    pub max_terms: usize,
    pub grid_points: usize,
    /// Largest accepted ratio of the past-truncation bound to the in-window scale.
    pub max_truncation_ratio: f64,
    pub check_truncation: bool,
}

impl Default for SeriesSection {
    fn default() -> Self {
        Self {
            window_past: 10.0,
            horizon: 1.0,
            gamma_cap: 1000.0,
            max_terms: 2_000_000,
            grid_points: 257,
            max_truncation_ratio: 1e-3,
            check_truncation: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadratureConfig::default();
        Self { rel_tol: q.rel_tol, abs_tol: q.abs_tol }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

/// A parsed and validated configuration together with its source text.
#[derive(Clone)]
pub struct Loaded {
    pub source: String,
    pub raw: RunConfig,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
}

impl Loaded {
    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig { rel_tol: self.raw.quadrature.rel_tol, abs_tol: self.raw.quadrature.abs_tol, ..QuadratureConfig::default() }
    }

    pub fn criteria(&self) -> CriteriaConfig {
        CriteriaConfig { quadrature: self.quadrature(), ..CriteriaConfig::default() }
    }

    pub fn series(&self, seed: u64) -> SeriesConfig {
        let s = &self.raw.series;
        let mut c = SeriesConfig::new(self.model.clone(), self.kernel.clone());
        c.window_past = s.window_past;
        c.horizon = s.horizon;
        c.gamma_cap = s.gamma_cap;
        c.max_terms = s.max_terms;
        c.grid_points = s.grid_points;
        c.seed = seed;
        c.max_truncation_ratio = s.check_truncation.then_some(s.max_truncation_ratio);
        // Simulation needs less accuracy than the criteria; cap the effort.
        c.quadrature = self.quadrature().loosened(1e-8);
        c
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn err<T>(&self, span: Option<std::ops::Range<usize>>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError { line: span.map(|s| line_of(self.src, s.start)), message: message.into() })
    }

    fn need(&self, v: &Option<Spanned<f64>>, anchor: &Spanned<String>, name: &str) -> Result<Spanned<f64>, ConfigError> {
        match v {
            Some(s) => Ok(s.clone()),
            None => self.err(Some(anchor.span()), format!("family '{}' requires '{name}'", anchor.get_ref())),
        }
    }
}

/// Parses and validates a TOML document.
pub fn parse(src: &str) -> Result<Loaded, ConfigError> {
    let raw: RunConfig = toml::from_str(src).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(src, s.start)),
        message: e.message().to_string(),
    })?;
    let ctx = Ctx { src };
    let model = build_model(&ctx, &raw.model)?;
    let kernel = build_kernel(&ctx, &raw.kernel, model.len())?;
    validate_sections(&raw)?;
    Ok(Loaded { source: src.to_string(), raw, model, kernel })
}

fn build_model(ctx: &Ctx<'_>, m: &ModelSection) -> Result<ModelSpec, ConfigError> {
    if m.components.is_empty() {
        return ctx.err(None, "model.components must not be empty: the mixing space V needs at least one point");
    }
    let mut comps = Vec::new();
    for (i, c) in m.components.iter().enumerate() {
        let label = c.label.clone().unwrap_or_else(|| format!("v{i}"));
        let weight = c.weight.clone().map(|w| (w.get_ref().to_owned(), Some(w.span()))).unwrap_or((1.0, None));
        if !(weight.0 > 0.0 && weight.0.is_finite()) {
            return ctx.err(weight.1, format!("weight of '{label}' is {}; constraint: m(v) > 0", weight.0));
        }
        let sigma2 = c.sigma2.clone().map(|s| (*s.get_ref(), Some(s.span()))).unwrap_or((0.0, None));
        if !(sigma2.0 >= 0.0 && sigma2.0.is_finite()) {
            return ctx.err(sigma2.1, format!("sigma2 of '{label}' is {}; constraint: sigma2 >= 0", sigma2.0));
        }
        let levy = build_levy(ctx, c)?;
        comps.push(Component { label, weight: weight.0, drift: c.drift, gaussian_var: sigma2.0, levy });
    }
    ModelSpec::new(comps).map_err(|e| ConfigError { line: None, message: e.to_string() })
}

fn check_alpha(ctx: &Ctx<'_>, a: &Spanned<f64>) -> Result<f64, ConfigError> {
    let v = *a.get_ref();
    if !(v > 0.0 && v < 2.0) {
        return ctx.err(Some(a.span()), format!("alpha = {v}; constraint: 0 < alpha < 2"));
    }
    if v == 1.0 {
        return ctx.err(Some(a.span()), "alpha = 1 is a boundary case and is rejected; constraint: alpha != 1");
    }
    Ok(v)
}

fn positive(ctx: &Ctx<'_>, v: &Spanned<f64>, name: &str) -> Result<f64, ConfigError> {
    let x = *v.get_ref();
    if !(x > 0.0 && x.is_finite()) {
        return ctx.err(Some(v.span()), format!("{name} = {x}; constraint: {name} > 0"));
    }
    Ok(x)
}

fn build_levy(ctx: &Ctx<'_>, c: &ComponentSection) -> Result<LevyMeasure1D, ConfigError> {
    let fam = &c.family;
    let wrap = |r: Result<LevyMeasure1D, semimart_core::levy::ModelError>| {
        r.map_err(|e| ConfigError { line: Some(line_of(ctx.src, fam.span().start)), message: e.to_string() })
    };
    match fam.get_ref().as_str() {
        "zero" => Ok(LevyMeasure1D::zero()),
        "stable" => {
            let a = check_alpha(ctx, &ctx.need(&c.alpha, fam, "alpha")?)?;
            let s = positive(ctx, &ctx.need(&c.c, fam, "c")?, "c")?;
            wrap(LevyMeasure1D::stable(a, s))
        }
        "tempered_stable" => {
            let a = check_alpha(ctx, &ctx.need(&c.alpha, fam, "alpha")?)?;
            let s = positive(ctx, &ctx.need(&c.c, fam, "c")?, "c")?;
            let l = positive(ctx, &ctx.need(&c.lambda, fam, "lambda")?, "lambda")?;
            wrap(LevyMeasure1D::tempered_stable(a, s, l))
        }
        "point_mass" => {
            let p = ctx.need(&c.position, fam, "position")?;
            if *p.get_ref() == 0.0 || !p.get_ref().is_finite() {
                return ctx.err(Some(p.span()), "position must be finite and nonzero");
            }
            let w = positive(ctx, &ctx.need(&c.mass, fam, "mass")?, "mass")?;
            if c.symmetric {
                wrap(LevyMeasure1D::symmetric_point_mass(*p.get_ref(), w))
            } else {
                wrap(LevyMeasure1D::point_mass(*p.get_ref(), w))
            }
        }
        other => ctx.err(
            Some(fam.span()),
            format!("unknown model family '{other}'; expected zero, stable, tempered_stable or point_mass"),
        ),
    }
}

fn build_kernel(ctx: &Ctx<'_>, k: &KernelSection, labels: usize) -> Result<KernelSpec, ConfigError> {
    let fam = &k.family;
    let kerr = |e: semimart_core::kernels::KernelError| ConfigError { line: Some(line_of(ctx.src, fam.span().start)), message: e.to_string() };
    match fam.get_ref().as_str() {
        "fractional" => {
            let Some(g) = &k.gamma else {
                return ctx.err(Some(fam.span()), "family 'fractional' requires 'gamma'");
            };
            let gs = match g.get_ref() {
                GammaValue::One(x) => vec![*x; labels],
                GammaValue::PerLabel(v) => v.clone(),
            };
            if gs.len() != labels {
                return ctx.err(Some(g.span()), format!("gamma has {} entries but V has {labels} points", gs.len()));
            }
            for &x in &gs {
                if !(x > 0.0 && x.is_finite()) {
                    return ctx.err(Some(g.span()), format!("gamma = {x}; constraint: gamma > 0"));
                }
                if x == 0.5 {
                    return ctx.err(Some(g.span()), "gamma = 1/2 is a boundary case and is rejected; constraint: gamma != 1/2");
                }
            }
            KernelSpec::fractional(gs).map_err(kerr)
        }
        "exp_ma" => {
            let t = positive(ctx, &ctx.need(&k.theta, fam, "theta")?, "theta")?;
            KernelSpec::exp_ma(t).map_err(kerr)
        }
        "indicator" => {
            let w = positive(ctx, &ctx.need(&k.width, fam, "width")?, "width")?;
            KernelSpec::indicator(w).map_err(kerr)
        }
        other => ctx.err(Some(fam.span()), format!("unknown kernel family '{other}'; expected fractional, exp_ma or indicator")),
    }
}

fn validate_sections(raw: &RunConfig) -> Result<(), ConfigError> {
    let bad = |m: String| Err(ConfigError { line: None, message: m });
    let s = &raw.series;
    if !(s.window_past > 0.0 && s.window_past.is_finite()) {
        return bad(format!("series.window_past = {}; constraint: window_past > 0", s.window_past));
    }
    if !(s.horizon > 0.0 && s.horizon.is_finite()) {
        return bad(format!("series.horizon = {}; constraint: horizon > 0", s.horizon));
    }
    if !(s.gamma_cap > 0.0 && s.gamma_cap.is_finite()) {
        return bad(format!("series.gamma_cap = {}; constraint: gamma_cap > 0", s.gamma_cap));
    }
    if s.grid_points < 2 {
        return bad(format!("series.grid_points = {}; constraint: grid_points >= 2", s.grid_points));
    }
    if s.max_terms == 0 {
        return bad("series.max_terms = 0; constraint: max_terms > 0".into());
    }
    if !(s.max_truncation_ratio > 0.0) {
        return bad(format!("series.max_truncation_ratio = {}; constraint: > 0", s.max_truncation_ratio));
    }
    let q = &raw.quadrature;
    if !(q.rel_tol > 0.0 && q.rel_tol < 1.0) {
        return bad(format!("quadrature.rel_tol = {}; constraint: 0 < rel_tol < 1", q.rel_tol));
    }
    if !(q.abs_tol >= 0.0) {
        return bad(format!("quadrature.abs_tol = {}; constraint: abs_tol >= 0", q.abs_tol));
    }
    for f in &raw.output.formats {
        if f != "csv" && f != "json" {
            return bad(format!("output.formats contains '{f}'; expected csv or json"));
        }
    }
    Ok(())
}
