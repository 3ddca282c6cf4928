//! Series simulation of `X_t = ∫ φ(t, s, v) Λ(ds, dv)` on a finite window and
//! the decomposition `X = X_0 + M + A`.
//!
//! Atoms of `Λ` on `[-S⁻, T] × V` are generated from Poisson arrivals `Γ_j`,
//! signs `ε_j` and uniform locations `T_j = (T¹_j, T²_j)`; the size is the
//! tail quantile `R_j = R(ε_j Γ_j h, T_j)` with the constant
//! `h = 1 / (2 (S⁻ + T) m(V))`. Only symmetric jump measures are supported,
//! so no centering terms are needed.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use thiserror::Error;

use crate::kernels::KernelSpec;
use crate::levy::{k_kernel, LevyError, ModelSpec};
use crate::quadrature::{integrate, Interval, QuadError, QuadratureConfig};

/// Largest grid for which the Gaussian part is simulated from its exact covariance.
pub const GAUSSIAN_GRID_LIMIT: usize = 513;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid series config: {0}")]
    InvalidConfig(&'static str),
    #[error("jump measure at v = {label} is not symmetric; simulation is restricted to symmetric measures")]
    Asymmetric { label: alloc::string::String },
    #[error("gamma_cap = {cap} needs more than max_terms = {max_terms} series terms; reduce gamma_cap")]
    TooManyTerms { cap: f64, max_terms: usize },
    #[error("window_past too short: truncation bound {bound:e} exceeds {limit:e} times the path scale {scale:e}")]
    WindowTooShort { bound: f64, scale: f64, limit: f64 },
    #[error("grid with {points} points exceeds the Gaussian limit of {GAUSSIAN_GRID_LIMIT}")]
    GaussianGridTooLarge { points: usize },
    #[error("refinement level {level} does not divide a grid of {intervals} intervals")]
    Refinement { level: u32, intervals: usize },
    #[error("state does not match the config: {0}")]
    StateMismatch(&'static str),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone)]
pub struct SeriesConfig {
    /// `S⁻`: atoms are simulated for `s ∈ [-S⁻, T]`.
    pub window_past: f64,
    /// `T`
    pub horizon: f64,
    /// Terms with `Γ_j > gamma_cap` are dropped.
    pub gamma_cap: f64,
    pub max_terms: usize,
    /// Output grid `t_k = k T / (grid_points - 1)`.
    pub grid_points: usize,
    pub seed: u64,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    /// Reject windows whose past-truncation bound exceeds this multiple of
    /// the in-window scale. `None` disables the check.
    pub max_truncation_ratio: Option<f64>,
    pub quadrature: QuadratureConfig,
}

impl SeriesConfig {
    pub fn new(model: ModelSpec, kernel: KernelSpec) -> Self {
        Self {
            window_past: 10.0,
            horizon: 1.0,
            gamma_cap: 1000.0,
            max_terms: 2_000_000,
            grid_points: 257,
            seed: 0,
            model,
            kernel,
            max_truncation_ratio: None,
            quadrature: QuadratureConfig { rel_tol: 1e-8, ..QuadratureConfig::default() },
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = SimulationError::InvalidConfig;
        if !(self.window_past > 0.0 && self.window_past.is_finite()) {
            return Err(bad("window_past must be positive and finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad("horizon must be positive and finite"));
        }
        if !(self.gamma_cap > 0.0 && self.gamma_cap.is_finite()) {
            return Err(bad("gamma_cap must be positive and finite"));
        }
        if self.grid_points < 2 {
            return Err(bad("grid_points must be at least 2"));
        }
        if self.max_terms == 0 {
            return Err(bad("max_terms must be positive"));
        }
        if self.kernel.validate_labels(self.model.len()).is_err() {
            return Err(bad("kernel parameters do not match the labels of V"));
        }
        for c in self.model.components() {
            if !c.levy.is_symmetric() {
                return Err(SimulationError::Asymmetric { label: c.label.clone() });
            }
        }
        self.quadrature.validate()?;
        Ok(())
    }

    /// `h = ½ dκ̃/dκ` for the uniform `κ̃` on the window.
    pub fn h(&self) -> f64 {
        1.0 / (2.0 * (self.window_past + self.horizon) * self.model.total_weight())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        (0..=n).map(|k| if k == n { self.horizon } else { self.horizon * k as f64 / n as f64 }).collect()
    }

    fn probe_times(&self) -> [f64; 5] {
        let t = self.horizon;
        [0.0, 0.25 * t, 0.5 * t, 0.75 * t, t]
    }
}

/// Independent, reproducible stream seed for path `index` under `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeriesState {
    pub h: f64,
    pub gamma: Vec<f64>,
    pub eps: Vec<i8>,
    /// `T¹_j`
    pub time: Vec<f64>,
    /// `T²_j`, as an index into the components of the model.
    pub label: Vec<usize>,
    pub size: Vec<f64>,
    /// Standard normals driving the Gaussian part; empty without one.
    pub normals: Vec<f64>,
}

impl SeriesState {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Checks that `Γ` increases strictly and that `|R_j|` is nonincreasing
    /// along each label's subsequence.
    pub fn check_invariants(&self) -> bool {
        if self.gamma.windows(2).any(|w| w[1] <= w[0]) || self.gamma.first().is_some_and(|g| *g <= 0.0) {
            return false;
        }
        let labels = self.label.iter().copied().max().map_or(0, |m| m + 1);
        (0..labels).all(|v| {
            let mut prev = f64::INFINITY;
            self.label.iter().zip(&self.size).filter(|(l, _)| **l == v).all(|(_, r)| {
                let ok = r.abs() <= prev;
                prev = r.abs();
                ok
            })
        })
    }
}

/// Draws the atoms with `Γ_j <= gamma_cap`, plus the Gaussian normals.
pub fn sample_series<R: Rng + ?Sized>(cfg: &SeriesConfig, rng: &mut R) -> Result<SeriesState, SimulationError> {
    cfg.validate()?;
    let h = cfg.h();
    let total = cfg.model.total_weight();
    let weights: Vec<f64> = cfg.model.components().iter().map(|c| c.weight / total).collect();
    let width = cfg.window_past + cfg.horizon;
    let mut st = SeriesState {
        h,
        gamma: Vec::new(),
        eps: Vec::new(),
        time: Vec::new(),
        label: Vec::new(),
        size: Vec::new(),
        normals: Vec::new(),
    };
    let mut g = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        g += e;
        if g > cfg.gamma_cap {
            break;
        }
        if st.len() == cfg.max_terms {
            return Err(SimulationError::TooManyTerms { cap: cfg.gamma_cap, max_terms: cfg.max_terms });
        }
        let eps: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let t1 = -cfg.window_past + width * rng.random::<f64>();
        let v = pick(&weights, rng.random::<f64>());
        let r = cfg.model.components()[v].levy.tail_quantile(eps as f64 * g * h, &cfg.quadrature)?;
        st.gamma.push(g);
        st.eps.push(eps);
        st.time.push(t1);
        st.label.push(v);
        st.size.push(r);
    }
    if cfg.model.has_gaussian() {
        if cfg.grid_points > GAUSSIAN_GRID_LIMIT {
            return Err(SimulationError::GaussianGridTooLarge { points: cfg.grid_points });
        }
        let dim = 2 * cfg.grid_points - 1;
        st.normals = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    }
    Ok(st)
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathBundle {
    pub grid: Vec<f64>,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    /// `A = X - X_0 - M`.
    pub a: Vec<f64>,
    /// `A` from its own series, for cross-validation.
    pub a_direct: Vec<f64>,
    pub gaussian: Option<Vec<f64>>,
    pub jumps: Vec<Jump>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecompositionCheck {
    pub max_decomposition_residual: f64,
    pub a_route_disagreement: f64,
    pub path_scale: f64,
}

impl PathBundle {
    pub fn path_scale(&self) -> f64 {
        self.x.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn decomposition_check(&self) -> DecompositionCheck {
        let x0 = self.x.first().copied().unwrap_or(0.0);
        let mut residual: f64 = 0.0;
        let mut disagreement: f64 = 0.0;
        for k in 0..self.x.len() {
            residual = residual.max((self.x[k] - x0 - self.m[k] - self.a[k]).abs());
            disagreement = disagreement.max((self.a[k] - self.a_direct[k]).abs());
        }
        DecompositionCheck { max_decomposition_residual: residual, a_route_disagreement: disagreement, path_scale: self.path_scale() }
    }
}

/// Predicted jumps `R_j φ(T¹_j, T¹_j, T²_j)` for atoms in `(0, T]`, sorted by
/// time. Atoms whose predicted jump is exactly zero are left out.
pub fn extract_jumps(state: &SeriesState, cfg: &SeriesConfig) -> Vec<Jump> {
    let mut out: Vec<Jump> = (0..state.len())
        .filter(|&j| state.time[j] > 0.0 && state.time[j] <= cfg.horizon)
        .map(|j| {
            let (t, v) = (state.time[j], state.label[j]);
            Jump { time: t, size: state.size[j] * cfg.kernel.diag(t, v), v }
        })
        .filter(|j| j.size != 0.0)
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

/// `∫_{lo}^{hi} g(s) ds` with kernel kinks registered.
fn time_quad(g: impl Fn(f64) -> f64, lo: f64, hi: f64, splits: &[f64], cfg: &QuadratureConfig) -> Result<f64, SimulationError> {
    if hi <= lo {
        return Ok(0.0);
    }
    let c = cfg.with_splits(splits);
    let r = integrate(g, Interval::new(lo, hi), &c)?;
    match LevyError::from_result(&r) {
        None => Ok(r.value),
        Some(e) => Err(e.into()),
    }
}

/// Drift of `X` inside the window, `β(t) = Σ_v m(v) b(v) ∫_{-S⁻}^t φ(t, s, v) ds`.
fn drift_beta(cfg: &SeriesConfig, t: f64) -> Result<f64, SimulationError> {
    let mut out = 0.0;
    for (v, c) in cfg.model.components().iter().enumerate() {
        if c.drift == 0.0 {
            continue;
        }
        let i = time_quad(|s| cfg.kernel.phi(t, s, v), -cfg.window_past, t, &cfg.kernel.s_breakpoints(t), &cfg.quadrature)?;
        out += c.weight * c.drift * i;
    }
    Ok(out)
}

/// Shift of `M`, `ζ(t) = Σ_v m(v) b(v) ∫_0^t φ(s, s, v) ds` (symmetric jumps).
fn drift_zeta(cfg: &SeriesConfig, t: f64) -> Result<f64, SimulationError> {
    let mut out = 0.0;
    for (v, c) in cfg.model.components().iter().enumerate() {
        if c.drift == 0.0 {
            continue;
        }
        let i = time_quad(|s| cfg.kernel.diag(s, v), 0.0, t, &[], &cfg.quadrature)?;
        out += c.weight * c.drift * i;
    }
    Ok(out)
}

/// Builds `X`, `M` and both routes to `A` on the grid.
pub fn build_paths(state: &SeriesState, cfg: &SeriesConfig) -> Result<PathBundle, SimulationError> {
    cfg.validate()?;
    let grid = cfg.grid();
    let n = grid.len();
    let k = &cfg.kernel;
    let mut x = vec![0.0; n];
    let mut a_direct = vec![0.0; n];
    for j in 0..state.len() {
        let (r, t1, v) = (state.size[j], state.time[j], state.label[j]);
        if r == 0.0 {
            continue;
        }
        let base = if t1 <= 0.0 { k.phi(0.0, t1, v) } else { k.diag(t1, v) };
        for (i, &t) in grid.iter().enumerate() {
            if t1 > t {
                continue;
            }
            let p = k.phi(t, t1, v);
            x[i] += r * p;
            a_direct[i] += r * (p - base);
        }
    }

    let jumps = extract_jumps(state, cfg);
    let mut m = vec![0.0; n];
    let mut acc = 0.0;
    let mut next = 0;
    for (i, &t) in grid.iter().enumerate() {
        while next < jumps.len() && jumps[next].time <= t {
            acc += jumps[next].size;
            next += 1;
        }
        m[i] = acc;
    }

    if cfg.model.has_drift() {
        let b0 = drift_beta(cfg, 0.0)?;
        for (i, &t) in grid.iter().enumerate() {
            let b = drift_beta(cfg, t)?;
            let z = drift_zeta(cfg, t)?;
            x[i] += b;
            m[i] += z;
            a_direct[i] += b - b0 - z;
        }
    }

    let gaussian = if cfg.model.has_gaussian() {
        let (g, mg) = gaussian_part(state, cfg, &grid)?;
        for i in 0..n {
            x[i] += g[i];
            m[i] += mg[i];
            a_direct[i] += g[i] - g[0] - mg[i];
        }
        Some(g)
    } else {
        None
    };

    let x0 = x[0];
    let a: Vec<f64> = (0..n).map(|i| x[i] - x0 - m[i]).collect();
    Ok(PathBundle { grid, x, m, a, a_direct, gaussian, jumps })
}

/// Exact joint draw of `G(t_k) = Σ_v ∫_{-S⁻}^{t_k} φ(t_k, s, v) σ(v) W_v(ds)` and
/// its martingale part `M_G(t_k) = Σ_v ∫_0^{t_k} φ(s, s, v) σ(v) W_v(ds)`.
fn gaussian_part(state: &SeriesState, cfg: &SeriesConfig, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SimulationError> {
    let n = grid.len();
    let dim = 2 * n - 1;
    if state.normals.len() != dim {
        return Err(SimulationError::StateMismatch("number of Gaussian normals"));
    }
    let cov = gaussian_covariance(cfg, grid)?;
    let l = pivoted_cholesky(&cov, dim);
    let mut y = vec![0.0; dim];
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = l.row(i).iter().zip(&state.normals).map(|(a, z)| a * z).sum();
    }
    let g = y[..n].to_vec();
    let mut mg = vec![0.0; n];
    mg[1..].copy_from_slice(&y[n..]);
    Ok((g, mg))
}

/// Covariance of `(G(t_0..t_n), M_G(t_1..t_n))`, row-major.
pub fn gaussian_covariance(cfg: &SeriesConfig, grid: &[f64]) -> Result<Vec<f64>, SimulationError> {
    let n = grid.len();
    let dim = 2 * n - 1;
    let k = &cfg.kernel;
    let q = &cfg.quadrature;
    let mut c = vec![0.0; dim * dim];
    let comps: Vec<(usize, f64)> = cfg
        .model
        .components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.gaussian_var > 0.0)
        .map(|(v, c)| (v, c.weight * c.gaussian_var))
        .collect();
    let mut set = |i: usize, j: usize, val: f64| {
        c[i * dim + j] = val;
        c[j * dim + i] = val;
    };
    for i in 0..n {
        for j in i..n {
            let (ti, tj) = (grid[i], grid[j]);
            let mut splits = k.s_breakpoints(ti);
            splits.extend(k.s_breakpoints(tj));
            let mut gg = 0.0;
            let mut gm_ij = 0.0;
            let mut gm_ji = 0.0;
            let mut mm = 0.0;
            for &(v, w) in &comps {
                gg += w * time_quad(|s| k.phi(ti, s, v) * k.phi(tj, s, v), -cfg.window_past, ti, &splits, q)?;
                if j > 0 {
                    gm_ij += w * time_quad(|s| k.phi(ti, s, v) * k.diag(s, v), 0.0, ti.min(tj), &splits, q)?;
                }
                if i > 0 {
                    gm_ji += w * time_quad(|s| k.phi(tj, s, v) * k.diag(s, v), 0.0, ti, &splits, q)?;
                    let d = |s: f64| k.diag(s, v);
                    mm += w * time_quad(|s| d(s) * d(s), 0.0, ti, &splits, q)?;
                }
            }
            set(i, j, gg);
            if j > 0 {
                set(i, n + j - 1, gm_ij);
            }
            if i > 0 {
                set(j, n + i - 1, gm_ji);
                set(n + i - 1, n + j - 1, mm);
            }
        }
    }
    Ok(c)
}

/// Lower factor `L` with `L Lᵀ = C` (up to the dropped tail), rows indexed
/// like `C`.
pub struct CholeskyFactor {
    dim: usize,
    rank: usize,
    /// Row-major `dim × rank`.
    data: Vec<f64>,
}

impl CholeskyFactor {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.rank..(i + 1) * self.rank]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Pivoted Cholesky of a positive semidefinite matrix; stops when the
/// largest remaining diagonal drops below `1e-13` times the largest diagonal.
pub fn pivoted_cholesky(c: &[f64], dim: usize) -> CholeskyFactor {
    let mut diag: Vec<f64> = (0..dim).map(|i| c[i * dim + i]).collect();
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(*d));
    let tol = 1e-13 * scale;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; dim];
    while cols.len() < dim {
        let (p, &dp) = match diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
        {
            Some(x) => x,
            None => break,
        };
        if !(dp > tol) {
            break;
        }
        used[p] = true;
        let root = libm::sqrt(dp);
        let mut col = vec![0.0; dim];
        for i in 0..dim {
            if used[i] && i != p {
                continue;
            }
            let mut s = c[i * dim + p];
            for prev in &cols {
                s -= prev[i] * prev[p];
            }
            col[i] = s / root;
        }
        col[p] = root;
        for i in 0..dim {
            if !used[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        cols.push(col);
    }
    let rank = cols.len();
    let mut data = vec![0.0; dim * rank];
    for (r, col) in cols.iter().enumerate() {
        for i in 0..dim {
            data[i * rank + r] = col[i];
        }
    }
    CholeskyFactor { dim, rank, data }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncationBounds {
    /// `sqrt(sup_t Σ_v m(v) ∫_{-∞}^{-S⁻} K(φ(t, s, v), v) ds)`, the omitted past.
    pub past: f64,
    /// `sqrt(sup_t Σ_v m(v) ∫_{-S⁻}^t K(φ(t, s, v), v) ds)`, the same scale inside the window.
    pub in_window: f64,
    /// Standard deviation bound for the dropped terms `Γ_j > gamma_cap`.
    pub series_tail: f64,
}

impl TruncationBounds {
    pub fn past_ratio(&self) -> f64 {
        if self.in_window > 0.0 {
            self.past / self.in_window
        } else if self.past > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    pub fn total(&self) -> f64 {
        self.past + self.series_tail
    }
}

/// Sup over `t` is taken over five equally spaced times in `[0, T]`.
pub fn truncation_bounds(cfg: &SeriesConfig) -> Result<TruncationBounds, SimulationError> {
    cfg.validate()?;
    let k = &cfg.kernel;
    let q = &cfg.quadrature;
    let h = cfg.h();
    let mut caps = Vec::new();
    for c in cfg.model.components() {
        let x_cap = c.levy.tail_quantile(cfg.gamma_cap * h, q)?.abs();
        let m2 = if x_cap > 0.0 { c.levy.truncated_second_moment(x_cap, q)? } else { 0.0 };
        caps.push(m2);
    }
    let (mut past, mut inside, mut tail) = (0.0f64, 0.0f64, 0.0f64);
    for t in cfg.probe_times() {
        let splits = k.s_breakpoints(t);
        let (mut p, mut w, mut s2) = (0.0, 0.0, 0.0);
        for (v, c) in cfg.model.components().iter().enumerate() {
            let kk = |s: f64| k_kernel(k.phi(t, s, v), v, &cfg.model, q).unwrap_or(f64::NAN);
            let r = integrate(kk, Interval::new(f64::NEG_INFINITY, -cfg.window_past), &q.with_splits(&splits))?;
            p += c.weight * if r.is_diverged() { f64::INFINITY } else { r.value };
            w += c.weight * time_quad(kk, -cfg.window_past, t, &splits, q)?;
            if caps[v] > 0.0 {
                s2 += c.weight * caps[v] * time_quad(|s| { let p = k.phi(t, s, v); p * p }, -cfg.window_past, t, &splits, q)?;
            }
        }
        past = past.max(p);
        inside = inside.max(w);
        tail = tail.max(s2);
    }
    Ok(TruncationBounds { past: libm::sqrt(past), in_window: libm::sqrt(inside), series_tail: libm::sqrt(tail) })
}

/// Computes the bounds and rejects the window when the past truncation is
/// too large relative to the in-window scale.
pub fn check_window(cfg: &SeriesConfig) -> Result<TruncationBounds, SimulationError> {
    let b = truncation_bounds(cfg)?;
    if let Some(limit) = cfg.max_truncation_ratio {
        if !(b.past <= limit * b.in_window) {
            return Err(SimulationError::WindowTooShort { bound: b.past, scale: b.in_window, limit });
        }
    }
    Ok(b)
}

/// Sum of `|R_i| |φ(t_k, T_i) - φ(t_{k-1}, T_i)|` over all other atoms, plus
/// the continuous change of atom `j` itself and of the deterministic and
/// Gaussian parts: how far the grid increment of `X` over the cell
/// containing `T_j` may differ from the jump `R_j f(0, v)`.
pub fn interference_bound(state: &SeriesState, bundle: &PathBundle, cfg: &SeriesConfig, j: usize) -> f64 {
    let grid = &bundle.grid;
    let t = state.time[j];
    let Some(hi) = grid.iter().position(|&g| g >= t) else { return f64::INFINITY };
    if hi == 0 {
        return f64::INFINITY;
    }
    let (a, b) = (grid[hi - 1], grid[hi]);
    let k = &cfg.kernel;
    let mut bound = 0.0;
    for i in 0..state.len() {
        let (r, ti, v) = (state.size[i], state.time[i], state.label[i]);
        bound += if i == j {
            (r * (k.phi(b, ti, v) - k.diag(ti, v))).abs()
        } else {
            (r * (k.phi(b, ti, v) - k.phi(a, ti, v))).abs()
        };
    }
    let x_cont = |idx: usize| {
        bundle.x[idx] - state.time.iter().enumerate().map(|(i, &ti)| state.size[i] * k.phi(grid[idx], ti, state.label[i])).sum::<f64>()
    };
    bound + (x_cont(hi) - x_cont(hi - 1)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathComponent {
    X,
    M,
    A,
}

/// `Σ |ΔY|^order` over the dyadic sub-grid with `2^level` intervals.
pub fn realized_variation(path: &PathBundle, which: PathComponent, order: u32, level: u32) -> Result<f64, SimulationError> {
    let y = match which {
        PathComponent::X => &path.x,
        PathComponent::M => &path.m,
        PathComponent::A => &path.a,
    };
    let intervals = y.len().saturating_sub(1);
    let cells = 1usize.checked_shl(level).unwrap_or(0);
    if cells == 0 || intervals == 0 || intervals % cells != 0 {
        return Err(SimulationError::Refinement { level, intervals });
    }
    let step = intervals / cells;
    let mut s = 0.0;
    for c in 0..cells {
        let d = (y[(c + 1) * step] - y[c * step]).abs();
        s += if order == 1 { d } else { libm::pow(d, order as f64) };
    }
    Ok(s)
}

/// `Σ_j R_j² φ(T¹_j, T¹_j, T²_j)² 1{0 < T¹_j <= T}`.
pub fn jump_quadratic_variation(state: &SeriesState, cfg: &SeriesConfig) -> f64 {
    extract_jumps(state, cfg).iter().map(|j| j.size * j.size).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure1D;

    fn cfg(levy: LevyMeasure1D, kernel: KernelSpec) -> SeriesConfig {
        let mut c = SeriesConfig::new(ModelSpec::single(0.0, 0.0, levy).unwrap(), kernel);
        c.window_past = 5.0;
        c.horizon = 1.0;
        c.grid_points = 65;
        c
    }

    #[test]
    fn stable_first_term_by_hand() {
        let mut c = cfg(LevyMeasure1D::stable(1.5, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        c.gamma_cap = 50.0;
        let st = sample_series(&c, &mut rng_from_seed(42)).unwrap();
        assert!(!st.is_empty());
        let h = 1.0 / 12.0;
        let expect = st.eps[0] as f64 * libm::pow(1.0 / (1.5 * st.gamma[0] * h), 1.0 / 1.5);
        assert!((st.size[0] - expect).abs() < 1e-14 * expect.abs());
        assert!(st.check_invariants());
    }

    #[test]
    fn point_mass_sizes() {
        let mut c = cfg(LevyMeasure1D::symmetric_point_mass(1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        c.gamma_cap = 40.0;
        let st = sample_series(&c, &mut rng_from_seed(7)).unwrap();
        for j in 0..st.len() {
            let expect = if st.gamma[j] * st.h < 1.0 { st.eps[j] as f64 } else { 0.0 };
            assert_eq!(st.size[j], expect);
        }
    }

    #[test]
    fn cap_below_first_arrival_is_empty() {
        let mut c = cfg(LevyMeasure1D::stable(1.5, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        c.gamma_cap = 1e-12;
        let st = sample_series(&c, &mut rng_from_seed(1)).unwrap();
        assert!(st.is_empty());
        let b = build_paths(&st, &c).unwrap();
        assert!(b.x.iter().chain(&b.m).chain(&b.a).all(|v| *v == 0.0));
    }

    #[test]
    fn too_many_terms() {
        let mut c = cfg(LevyMeasure1D::stable(1.5, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        c.gamma_cap = 1e4;
        c.max_terms = 100;
        assert!(matches!(sample_series(&c, &mut rng_from_seed(1)), Err(SimulationError::TooManyTerms { .. })));
    }

    #[test]
    fn single_term_exp_ma() {
        let c = cfg(LevyMeasure1D::stable(1.5, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        let st = SeriesState {
            h: c.h(),
            gamma: vec![1.0],
            eps: vec![1],
            time: vec![0.3],
            label: vec![0],
            size: vec![2.0],
            normals: vec![],
        };
        let b = build_paths(&st, &c).unwrap();
        let k = b.grid.iter().position(|&t| t >= 0.3).unwrap();
        assert_eq!(b.m[k - 1], 0.0);
        assert_eq!(b.m[k], 2.0);
        assert!((b.x[k] - 2.0 * libm::exp(-(b.grid[k] - 0.3))).abs() < 1e-15);
        assert!((b.a[k] - b.a[k - 1]).abs() < 0.05);
        assert_eq!(b.jumps, vec![Jump { time: 0.3, size: 2.0, v: 0 }]);
    }

    #[test]
    fn drift_enters_m_and_a() {
        let mut c = cfg(LevyMeasure1D::zero(), KernelSpec::exp_ma(1.0).unwrap());
        c.model = ModelSpec::single(1.0, 0.0, LevyMeasure1D::zero()).unwrap();
        let st = sample_series(&c, &mut rng_from_seed(3)).unwrap();
        let b = build_paths(&st, &c).unwrap();
        // X_t = ∫_{-5}^t e^{-(t-s)} ds, M_t = t.
        for (i, &t) in b.grid.iter().enumerate() {
            assert!((b.x[i] - (1.0 - libm::exp(-(t + 5.0)))).abs() < 1e-8);
            assert!((b.m[i] - t).abs() < 1e-12);
        }
        let d = b.decomposition_check();
        assert!(d.a_route_disagreement < 1e-12);
    }

    #[test]
    fn pivoted_cholesky_reconstructs() {
        // Rank-2 matrix in dimension 3.
        let u = [1.0, 2.0, 3.0];
        let w = [0.5, -1.0, 0.25];
        let mut c = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                c[i * 3 + j] = u[i] * u[j] + w[i] * w[j];
            }
        }
        let l = pivoted_cholesky(&c, 3);
        assert_eq!(l.rank(), 2);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = l.row(i).iter().zip(l.row(j)).map(|(a, b)| a * b).sum();
                assert!((s - c[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_variance_matches() {
        let mut c = cfg(LevyMeasure1D::zero(), KernelSpec::exp_ma(1.0).unwrap());
        c.model = ModelSpec::single(0.0, 1.0, LevyMeasure1D::zero()).unwrap();
        c.grid_points = 5;
        let grid = c.grid();
        let cov = gaussian_covariance(&c, &grid).unwrap();
        let dim = 9;
        // Var G(1) = ∫_{-5}^1 e^{-2(1-s)} ds, Var M_G(1) = 1, Cov = ∫_0^1 e^{-(1-s)} ds.
        assert!((cov[4 * dim + 4] - 0.5 * (1.0 - libm::exp(-12.0))).abs() < 1e-10);
        assert!((cov[8 * dim + 8] - 1.0).abs() < 1e-12);
        assert!((cov[4 * dim + 8] - (1.0 - libm::exp(-1.0))).abs() < 1e-10);
        let st = sample_series(&c, &mut rng_from_seed(11)).unwrap();
        let b = build_paths(&st, &c).unwrap();
        assert!(b.gaussian.is_some());
        assert!(b.decomposition_check().a_route_disagreement < 1e-12);
    }

    #[test]
    fn realized_variation_examples() {
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let b = PathBundle {
            x: vec![3.0; 9],
            m: (0..9).map(|k| if k >= 4 { 2.0 } else { 0.0 }).collect(),
            a: grid.clone(),
            a_direct: grid.clone(),
            grid,
            gaussian: None,
            jumps: vec![],
        };
        for l in 0..=3 {
            assert_eq!(realized_variation(&b, PathComponent::X, 1, l).unwrap(), 0.0);
            assert!((realized_variation(&b, PathComponent::A, 1, l).unwrap() - 1.0).abs() < 1e-15);
            assert!((realized_variation(&b, PathComponent::A, 2, l).unwrap() - libm::pow(2.0, -(l as f64))).abs() < 1e-15);
        }
        assert_eq!(realized_variation(&b, PathComponent::M, 2, 3).unwrap(), 4.0);
        assert!(realized_variation(&b, PathComponent::M, 2, 4).is_err());
    }

    #[test]
    fn truncation_bounds_exp_ma() {
        let c = cfg(LevyMeasure1D::tempered_stable(1.2, 1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        let b = truncation_bounds(&c).unwrap();
        assert!(b.past > 0.0 && b.past < b.in_window);
        assert!(b.series_tail > 0.0);
        let mut longer = c.clone();
        longer.window_past = 10.0;
        assert!(truncation_bounds(&longer).unwrap().past < b.past);
    }

    #[test]
    fn asymmetric_is_refused() {
        let c = cfg(LevyMeasure1D::point_mass(1.0, 1.0).unwrap(), KernelSpec::exp_ma(1.0).unwrap());
        assert!(matches!(sample_series(&c, &mut rng_from_seed(1)), Err(SimulationError::Asymmetric { .. })));
    }
}
