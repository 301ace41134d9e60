//! The interpolating Ornstein-Uhlenbeck flow that preserves the joint second
//! moments of a correlated pair while injecting independent Gaussian noise.
//!
//! The flow decouples into one 2-dimensional linear SDE per real coordinate
//! `x = (w1_ab, w2_ab)` (real and imaginary parts separately):
//!
//! `dx = -(kappa/2) S x dt + sqrt(kappa) dB`, `S = C^{-1}`,
//!
//! where `C` is the 2x2 covariance of the coordinate and `kappa` is the
//! variance the coordinate has in the invariant Gaussian ensemble (`1/N` off
//! the diagonal and `2/N` on it for real matrices). With this normalization
//! the drift is exactly `-(beta N Sigma)^{-1}[W]` and the stationary
//! covariance is `C`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::HMatrix;
use crate::model::{Component, ComponentLayout, CorrelationProfile, SymmetryClass};

type M2 = [[f64; 2]; 2];

/// Per-coordinate flow data.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryFlow {
    pub comp: Component,
    pub cov: M2,
    pub s: M2,
    /// Columns are the eigenvectors of `s`.
    pub o: M2,
    pub lambda: [f64; 2],
    pub kappa: f64,
}

impl EntryFlow {
    /// Relaxation rates `kappa * lambda / 2` of the two eigendirections.
    pub fn rates(&self) -> [f64; 2] {
        [0.5 * self.kappa * self.lambda[0], 0.5 * self.kappa * self.lambda[1]]
    }

    fn rotate_in(&self, x: [f64; 2]) -> [f64; 2] {
        let o = &self.o;
        [o[0][0] * x[0] + o[1][0] * x[1], o[0][1] * x[0] + o[1][1] * x[1]]
    }

    fn rotate_out(&self, xi: [f64; 2]) -> [f64; 2] {
        let o = &self.o;
        [o[0][0] * xi[0] + o[0][1] * xi[1], o[1][0] * xi[0] + o[1][1] * xi[1]]
    }

    /// Variance of the injected Gaussian part of eigendirection `j` after
    /// time `t`: `(1 - exp(-kappa lambda_j t)) / lambda_j`.
    pub fn gaussian_variance(&self, j: usize, t: f64) -> f64 {
        -(-self.kappa * self.lambda[j] * t).exp_m1() / self.lambda[j]
    }

    fn drift(&self, x: [f64; 2]) -> [f64; 2] {
        let h = 0.5 * self.kappa;
        [
            -h * (self.s[0][0] * x[0] + self.s[0][1] * x[1]),
            -h * (self.s[1][0] * x[0] + self.s[1][1] * x[1]),
        ]
    }
}

/// Flow data for every real coordinate of `Sym_beta(N)`.
#[derive(Clone, Debug)]
pub struct EntryFlowData {
    pub layout: ComponentLayout,
    pub entries: Vec<EntryFlow>,
    pub alpha: f64,
}

/// Eigendecomposition of a symmetric 2x2 matrix: `m = O diag(l) O^T`.
pub fn sym2_eigen(m: &M2) -> (M2, [f64; 2]) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    if b == 0.0 {
        return ([[1.0, 0.0], [0.0, 1.0]], [a, d]);
    }
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (s, c) = theta.sin_cos();
    let l1 = a * c * c + 2.0 * b * s * c + d * s * s;
    let l2 = a * s * s - 2.0 * b * s * c + d * c * c;
    ([[c, -s], [s, c]], [l1, l2])
}

pub fn build_entry_data(profile: &CorrelationProfile, n: usize, symmetry: SymmetryClass) -> Result<EntryFlowData> {
    if !(profile.alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("flow needs alpha > 0, got {}", profile.alpha)));
    }
    let layout = ComponentLayout::new(n, symmetry);
    let entries = layout
        .comps
        .iter()
        .map(|c| {
            let cov = layout.covariance(profile, c).matrix();
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            if !(det > 1e-12 * cov[0][0] * cov[1][1]) {
                return Err(Error::DegenerateCovariance { a: c.a, b: c.b, det });
            }
            let s = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
            let (o, lambda) = sym2_eigen(&s);
            Ok(EntryFlow { comp: *c, cov, s, o, lambda, kappa: layout.invariant_variance(c) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EntryFlowData { layout, entries, alpha: profile.alpha })
}

impl EntryFlowData {
    pub fn n(&self) -> usize {
        self.layout.n
    }

    /// Largest `||O Lambda O^T - S||_max`.
    pub fn reconstruction_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for e in &self.entries {
            for i in 0..2 {
                for j in 0..2 {
                    let r = e.o[i][0] * e.lambda[0] * e.o[j][0] + e.o[i][1] * e.lambda[1] * e.o[j][1];
                    worst = worst.max((r - e.s[i][j]).abs());
                }
            }
        }
        worst
    }

    /// `max ||S^ab|| * alpha / N`; bounded by a model constant.
    pub fn s_bound_ratio(&self) -> f64 {
        let n = self.n() as f64;
        self.entries
            .iter()
            .map(|e| e.lambda[0].abs().max(e.lambda[1].abs()))
            .fold(0.0, f64::max)
            * self.alpha
            / n
    }

    pub fn max_rate(&self) -> f64 {
        self.entries.iter().flat_map(|e| e.rates()).fold(0.0, f64::max)
    }
}

/// A pair `(W1_t, W2_t)` in coordinates, together with its initial value.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w1_initial: Vec<f64>,
    pub w2_initial: Vec<f64>,
    pub data: Arc<EntryFlowData>,
}

impl FlowState {
    pub fn new(data: Arc<EntryFlowData>, w1: &HMatrix, w2: &HMatrix) -> Result<Self> {
        let n = data.n();
        for w in [w1, w2] {
            if w.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.n() });
            }
        }
        let x1 = data.layout.extract(w1);
        let x2 = data.layout.extract(w2);
        Ok(Self::from_coords(data, x1, x2))
    }

    pub fn from_coords(data: Arc<EntryFlowData>, w1: Vec<f64>, w2: Vec<f64>) -> Self {
        FlowState { t: 0.0, w1_initial: w1.clone(), w2_initial: w2.clone(), w1, w2, data }
    }

    pub fn matrices(&self) -> (HMatrix, HMatrix) {
        (self.data.layout.assemble(&self.w1), self.data.layout.assemble(&self.w2))
    }

    fn check_target(&self, t_target: f64) -> Result<f64> {
        if !(t_target >= self.t) {
            return Err(Error::InvalidArgument(format!("t_target = {t_target} precedes current t = {}", self.t)));
        }
        let cap = self.data.alpha * (1.0 + 1e-12);
        if t_target > cap {
            return Err(Error::TimeCapExceeded { t: t_target, alpha: self.data.alpha });
        }
        Ok(t_target - self.t)
    }
}

/// Exact transition of the flow from `state.t` to `t_target` (at most alpha).
pub fn evolve_exact<R: Rng + ?Sized>(state: &FlowState, t_target: f64, rng: &mut R) -> Result<FlowState> {
    let dt = state.check_target(t_target)?;
    let mut next = state.clone();
    if dt == 0.0 {
        return Ok(next);
    }
    for (i, e) in state.data.entries.iter().enumerate() {
        let mut xi = e.rotate_in([state.w1[i], state.w2[i]]);
        let rates = e.rates();
        for j in 0..2 {
            let g: f64 = rng.sample(StandardNormal);
            xi[j] = (-rates[j] * dt).exp() * xi[j] + e.gaussian_variance(j, dt).sqrt() * g;
        }
        let x = e.rotate_out(xi);
        next.w1[i] = x[0];
        next.w2[i] = x[1];
    }
    next.t = t_target;
    Ok(next)
}

/// Largest step for which Euler-Maruyama is linearly stable.
pub fn em_step_limit(data: &EntryFlowData) -> f64 {
    2.0 / data.max_rate()
}

fn em_steps(dt_total: f64, dt: f64) -> usize {
    ((dt_total / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Euler-Maruyama integration with fresh Brownian increments; with
/// `diffusion = false` the noise term is dropped.
pub fn evolve_em<R: Rng + ?Sized>(state: &FlowState, t_target: f64, dt: f64, diffusion: bool, rng: &mut R) -> Result<FlowState> {
    let total = state.check_target(t_target)?;
    let limit = em_step_limit(&state.data);
    if !(dt > 0.0) || dt >= limit {
        return Err(Error::StepSizeUnstable { dt, limit });
    }
    let steps = em_steps(total, dt);
    let mut next = state.clone();
    let mut t = state.t;
    for k in 0..steps {
        let h = if k + 1 == steps { t_target - t } else { dt };
        let sh = h.sqrt();
        for (i, e) in state.data.entries.iter().enumerate() {
            let x = [next.w1[i], next.w2[i]];
            let d = e.drift(x);
            let (mut n1, mut n2) = (0.0, 0.0);
            if diffusion {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                n1 = e.kappa.sqrt() * sh * g1;
                n2 = e.kappa.sqrt() * sh * g2;
            }
            next.w1[i] = x[0] + h * d[0] + n1;
            next.w2[i] = x[1] + h * d[1] + n2;
        }
        t += h;
    }
    next.t = t_target;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmLevel {
    pub dt: f64,
    pub max_deviation: f64,
}

/// Strong self-convergence of Euler-Maruyama on one Brownian path.
///
/// A fine path with step `min(dts) / fine_per_coarse` drives a reference
/// solution (exponential integrator on the fine grid) and Euler-Maruyama at
/// each coarse `dt` (increments summed over the fine steps). Returns the
/// largest coordinate deviation from the reference over the coarse time grid.
pub fn em_self_convergence<R: Rng + ?Sized>(
    state: &FlowState,
    t_end: f64,
    dts: &[f64],
    fine_per_coarse: usize,
    rng: &mut R,
) -> Result<Vec<EmLevel>> {
    let total = state.check_target(t_end)?;
    let limit = em_step_limit(&state.data);
    let dt_min = dts.iter().copied().fold(f64::INFINITY, f64::min);
    for &dt in dts {
        if !(dt > 0.0) || dt >= limit {
            return Err(Error::StepSizeUnstable { dt, limit });
        }
        let ratio = dt / dt_min;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument("coarse steps must be integer multiples of the smallest".into()));
        }
    }
    let h = dt_min / fine_per_coarse as f64;
    let fine_steps = (total / h).round() as usize;
    if ((fine_steps as f64) * h - total).abs() > 1e-9 * total.max(1.0) {
        return Err(Error::InvalidArgument("t_end must be a multiple of the smallest step".into()));
    }
    let entries = &state.data.entries;
    let m = entries.len();
    let sh = h.sqrt();
    let increments: Vec<Vec<[f64; 2]>> = (0..fine_steps)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let g1: f64 = rng.sample(StandardNormal);
                    let g2: f64 = rng.sample(StandardNormal);
                    [sh * g1, sh * g2]
                })
                .collect()
        })
        .collect();

    let x0: Vec<[f64; 2]> = (0..m).map(|i| [state.w1[i], state.w2[i]]).collect();
    let mut reference = vec![x0.clone()];
    let mut x = x0.clone();
    for inc in &increments {
        for (i, e) in entries.iter().enumerate() {
            let rates = e.rates();
            let sk = e.kappa.sqrt();
            let mut xi = e.rotate_in(x[i]);
            let db = e.rotate_in(inc[i]);
            for j in 0..2 {
                let decay = (-rates[j] * h).exp();
                xi[j] = decay * (xi[j] + sk * db[j]);
            }
            x[i] = e.rotate_out(xi);
        }
        reference.push(x.clone());
    }

    dts.iter()
        .map(|&dt| {
            let per = (dt / h).round() as usize;
            let mut y = x0.clone();
            let mut worst = 0.0f64;
            let mut k = 0;
            while k + per <= fine_steps {
                for (i, e) in entries.iter().enumerate() {
                    let mut db = [0.0, 0.0];
                    for inc in &increments[k..k + per] {
                        db[0] += inc[i][0];
                        db[1] += inc[i][1];
                    }
                    let d = e.drift(y[i]);
                    let sk = e.kappa.sqrt();
                    y[i] = [y[i][0] + dt * d[0] + sk * db[0], y[i][1] + dt * d[1] + sk * db[1]];
                }
                k += per;
                for (yi, ri) in y.iter().zip(&reference[k]) {
                    worst = worst.max((yi[0] - ri[0]).abs()).max((yi[1] - ri[1]).abs());
                }
            }
            Ok(EmLevel { dt, max_deviation: worst })
        })
        .collect()
}

/// `W_t = W^ + sqrt(s) W_G` in law, with `W_G` an invariant Gaussian pair
/// independent of `W^`.
#[derive(Clone, Debug)]
pub struct GaussianDivisibleDecomposition {
    pub s: f64,
    pub t: f64,
    pub c_star: f64,
    pub what1: HMatrix,
    pub what2: HMatrix,
    pub wg1: HMatrix,
    pub wg2: HMatrix,
    /// Standard normals behind `wg1`, `wg2`, in coordinate order.
    pub normals1: Vec<f64>,
    pub normals2: Vec<f64>,
}

impl GaussianDivisibleDecomposition {
    pub fn reconstruct(&self) -> Result<(HMatrix, HMatrix)> {
        let r = self.s.sqrt();
        Ok((self.what1.add_scaled(r, &self.wg1)?, self.what2.add_scaled(r, &self.wg2)?))
    }
}

/// The largest `s` such that every eigendirection's Gaussian variance at
/// time `t` is at least `s * kappa`.
pub fn divisible_weight(data: &EntryFlowData, t: f64) -> f64 {
    data.entries
        .iter()
        .flat_map(|e| (0..2).map(move |j| e.gaussian_variance(j, t) / e.kappa))
        .fold(f64::INFINITY, f64::min)
}

/// Draws a Gaussian-divisible representation of the flow at `state.t`
/// started from `state`'s initial pair.
pub fn gaussian_divisible_split<R: Rng + ?Sized>(state: &FlowState, rng: &mut R) -> Result<GaussianDivisibleDecomposition> {
    let data = &state.data;
    let t = state.t;
    if !(t > 0.0) || t > data.alpha * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("split needs 0 < t <= alpha, got t = {t}")));
    }
    let s = divisible_weight(data, t);
    let m = data.entries.len();
    let (mut h1, mut h2) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let (mut g1, mut g2) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let (mut n1, mut n2) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for (i, e) in data.entries.iter().enumerate() {
        let mut xi = e.rotate_in([state.w1_initial[i], state.w2_initial[i]]);
        let rates = e.rates();
        for j in 0..2 {
            let surplus = (e.gaussian_variance(j, t) - s * e.kappa).max(0.0);
            let g: f64 = rng.sample(StandardNormal);
            xi[j] = (-rates[j] * t).exp() * xi[j] + surplus.sqrt() * g;
        }
        let x = e.rotate_out(xi);
        h1.push(x[0]);
        h2.push(x[1]);
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        n1.push(a);
        n2.push(b);
        g1.push(e.kappa.sqrt() * a);
        g2.push(e.kappa.sqrt() * b);
    }
    let layout = &data.layout;
    Ok(GaussianDivisibleDecomposition {
        s,
        t,
        c_star: s / t,
        what1: layout.assemble(&h1),
        what2: layout.assemble(&h2),
        wg1: layout.assemble(&g1),
        wg2: layout.assemble(&g2),
        normals1: n1,
        normals2: n2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDiagnostic {
    pub naive_bound: f64,
    pub improved_bound: f64,
    pub measured: f64,
}

/// `<|Sigma^{-1}[W]|^2>` of the block pair `diag(W1, W2)`, next to the
/// naive `N^2/alpha^2` and improved `N^2/alpha` scales.
pub fn drift_norm_diagnostic(state: &FlowState) -> DriftDiagnostic {
    let data = &state.data;
    let n = data.n() as f64;
    let mut total = 0.0;
    for (i, e) in data.entries.iter().enumerate() {
        let w = data.layout.trace_weight(&e.comp);
        let (x1, x2) = (state.w1[i], state.w2[i]);
        // Sigma^{-1}[W] has coordinates S x / Tr(B^2)
        let y1 = (e.s[0][0] * x1 + e.s[0][1] * x2) / w;
        let y2 = (e.s[1][0] * x1 + e.s[1][1] * x2) / w;
        total += w * (y1 * y1 + y2 * y2);
    }
    let alpha = data.alpha;
    DriftDiagnostic {
        naive_bound: n * n / (alpha * alpha),
        improved_bound: n * n / alpha,
        measured: total / (2.0 * n),
    }
}

/// One row of a flow trajectory export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummaryRow {
    pub t: f64,
    /// Averages over coordinates of `N x^2` and `N x1 x2`.
    pub mean_var1: f64,
    pub mean_var2: f64,
    pub mean_cross: f64,
    pub drift_measured: f64,
    pub drift_naive_bound: f64,
    pub drift_improved_bound: f64,
}

pub fn flow_summary(state: &FlowState) -> FlowSummaryRow {
    let n = state.data.n() as f64;
    let m = state.w1.len().max(1) as f64;
    let avg = |f: &dyn Fn(usize) -> f64| (0..state.w1.len()).map(f).sum::<f64>() * n / m;
    let d = drift_norm_diagnostic(state);
    FlowSummaryRow {
        t: state.t,
        mean_var1: avg(&|i| state.w1[i] * state.w1[i]),
        mean_var2: avg(&|i| state.w2[i] * state.w2[i]),
        mean_cross: avg(&|i| state.w1[i] * state.w2[i]),
        drift_measured: d.measured,
        drift_naive_bound: d.naive_bound,
        drift_improved_bound: d.improved_bound,
    }
}

pub fn write_flow_csv<W: Write>(rows: &[FlowSummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "t,mean_var1,mean_var2,mean_cross,drift_measured,drift_naive_bound,drift_improved_bound")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t, r.mean_var1, r.mean_var2, r.mean_cross, r.drift_measured, r.drift_naive_bound, r.drift_improved_bound
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_gaussian_invariant, ProfileField};
    use crate::{rng, stats};

    fn const_profile(rho: f64, alpha: f64) -> CorrelationProfile {
        let mut p = CorrelationProfile::wigner(SymmetryClass::RealSymmetric, rho, alpha);
        p.variance1 = ProfileField::constant(1.0);
        p.variance2 = ProfileField::constant(1.0);
        p
    }

    #[test]
    fn identity_covariance_gives_scalar_s() {
        let n = 5;
        let data = build_entry_data(&const_profile(0.0, 1.0), n, SymmetryClass::RealSymmetric).unwrap();
        let e = &data.entries[1];
        assert!((e.s[0][0] - n as f64).abs() < 1e-12 && e.s[0][1] == 0.0);
        assert!((e.lambda[0] - n as f64).abs() < 1e-12 && (e.lambda[1] - n as f64).abs() < 1e-12);
        assert_eq!(e.o, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn half_correlation_closed_form() {
        let n = 4;
        let nf = n as f64;
        let data = build_entry_data(&const_profile(0.5, 0.5), n, SymmetryClass::RealSymmetric).unwrap();
        let e = &data.entries[1];
        let expect = [[nf / 0.75, -0.5 * nf / 0.75], [-0.5 * nf / 0.75, nf / 0.75]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((e.s[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
        let mut l = e.lambda;
        l.sort_by(f64::total_cmp);
        assert!((l[0] - 2.0 * nf / 3.0).abs() < 1e-12 && (l[1] - 2.0 * nf).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.o[0][0].abs() - r).abs() < 1e-12 && (e.o[1][0].abs() - r).abs() < 1e-12);
        assert!(data.reconstruction_error() < 1e-12);
    }

    #[test]
    fn fully_correlated_is_degenerate() {
        let r = build_entry_data(&const_profile(1.0, 0.5), 3, SymmetryClass::RealSymmetric);
        assert!(matches!(r, Err(Error::DegenerateCovariance { .. })));
    }

    #[test]
    fn sym2_eigen_reconstructs() {
        for m in [[[2.0, 0.3], [0.3, -1.0]], [[1.0, -4.0], [-4.0, 1.0]], [[5.0, 1e-9], [1e-9, 5.0]]] {
            let (o, l) = sym2_eigen(&m);
            for i in 0..2 {
                for j in 0..2 {
                    let r = o[i][0] * l[0] * o[j][0] + o[i][1] * l[1] * o[j][1];
                    assert!((r - m[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    fn initial_state(n: usize, profile: &CorrelationProfile, sym: SymmetryClass, seed: u64) -> FlowState {
        let data = Arc::new(build_entry_data(profile, n, sym).unwrap());
        let mut r = rng::seeded(seed);
        let w1 = sample_gaussian_invariant(n, sym, &mut r);
        let w2 = sample_gaussian_invariant(n, sym, &mut r);
        FlowState::new(data, &w1, &w2).unwrap()
    }

    #[test]
    fn zero_time_step_is_identity() {
        let st = initial_state(6, &CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.3), SymmetryClass::RealSymmetric, 1);
        let next = evolve_exact(&st, 0.0, &mut rng::seeded(2)).unwrap();
        assert_eq!(next.w1, st.w1);
        assert_eq!(next.w2, st.w2);
    }

    #[test]
    fn time_cap_and_backwards_time_rejected() {
        let st = initial_state(4, &CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.2), SymmetryClass::RealSymmetric, 1);
        assert!(matches!(evolve_exact(&st, 0.3, &mut rng::seeded(1)), Err(Error::TimeCapExceeded { .. })));
        let mid = evolve_exact(&st, 0.1, &mut rng::seeded(1)).unwrap();
        assert!(matches!(evolve_exact(&mid, 0.05, &mut rng::seeded(1)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn independent_case_is_stationary() {
        // Lambda = 1/kappa everywhere: variance e^{-t} kappa + (1 - e^{-t}) kappa = kappa
        let n = 3;
        let profile = CorrelationProfile::wigner(SymmetryClass::RealSymmetric, 0.0, 1.0);
        let data = Arc::new(build_entry_data(&profile, n, SymmetryClass::RealSymmetric).unwrap());
        for e in &data.entries {
            let v = (-e.rates()[0] * 0.7).exp().powi(2) * e.kappa + e.gaussian_variance(0, 0.7);
            assert!((v - e.kappa).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_em_matches_exponential_decay() {
        let n = 4;
        let profile = const_profile(0.0, 1.0);
        let data = Arc::new(build_entry_data(&profile, n, SymmetryClass::RealSymmetric).unwrap());
        let m = data.entries.len();
        let st = FlowState::from_coords(data, vec![1.0; m], vec![0.5; m]);
        let t = 1.0;
        for dt in [1e-2, 5e-3] {
            let out = evolve_em(&st, t, dt, false, &mut rng::seeded(0)).unwrap();
            // off-diagonal coordinate: S = N, kappa = 1/N, rate 1/2
            let exact = (-0.5f64 * t).exp();
            assert!((out.w1[1] - exact).abs() < 0.5 * dt);
        }
    }

    #[test]
    fn em_rejects_unstable_step() {
        let st = initial_state(5, &CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.1), SymmetryClass::RealSymmetric, 3);
        let limit = em_step_limit(&st.data);
        assert!(matches!(evolve_em(&st, 0.1, 1.5 * limit, true, &mut rng::seeded(1)), Err(Error::StepSizeUnstable { .. })));
    }

    #[test]
    fn independent_split_weight() {
        let n = 6;
        let profile = CorrelationProfile::wigner(SymmetryClass::ComplexHermitian, 0.0, 1.0);
        let st = initial_state(n, &profile, SymmetryClass::ComplexHermitian, 4);
        let t = 0.3;
        let st = evolve_exact(&st, t, &mut rng::seeded(5)).unwrap();
        let split = gaussian_divisible_split(&st, &mut rng::seeded(6)).unwrap();
        assert!((split.s - (1.0 - (-t).exp())).abs() < 1e-12);
        // the Gaussian component is exactly the injected normals times sqrt(kappa)
        let gx = st.data.layout.extract(&split.wg1);
        for ((x, z), e) in gx.iter().zip(&split.normals1).zip(&st.data.entries) {
            assert_eq!(*x, e.kappa.sqrt() * z);
        }
        assert!(split.wg1.is_hermitian() && split.what2.is_hermitian());
    }

    #[test]
    fn drift_of_zero_is_zero_and_independent_scale() {
        let n = 10;
        let profile = CorrelationProfile::wigner(SymmetryClass::RealSymmetric, 0.0, 1.0);
        let data = Arc::new(build_entry_data(&profile, n, SymmetryClass::RealSymmetric).unwrap());
        let m = data.entries.len();
        let zero = FlowState::from_coords(data.clone(), vec![0.0; m], vec![0.0; m]);
        assert_eq!(drift_norm_diagnostic(&zero).measured, 0.0);
        let d = drift_norm_diagnostic(&initial_state(n, &profile, SymmetryClass::RealSymmetric, 1));
        assert_eq!(d.naive_bound, d.improved_bound);
        // GOE: Sigma^{-1}[W] = (N/2) W, so <|.|^2> = N^2/4 <W^2> ~ N^2/4
        assert!(d.measured > 0.1 * d.improved_bound && d.measured < d.improved_bound);
    }

    #[test]
    fn split_rejects_time_zero() {
        let st = initial_state(3, &CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.5), SymmetryClass::RealSymmetric, 1);
        assert!(gaussian_divisible_split(&st, &mut rng::seeded(1)).is_err());
    }

    #[test]
    fn flow_csv_header() {
        let st = initial_state(4, &CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.5), SymmetryClass::RealSymmetric, 1);
        let mut buf = Vec::new();
        write_flow_csv(&[flow_summary(&st)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mean_var1"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn second_moments_preserved_small_mc() {
        let n = 3;
        let sym = SymmetryClass::ComplexHermitian;
        let profile = CorrelationProfile::generic(sym, 0.2);
        let spec = crate::model::PairModelSpec { profile: profile.clone(), ..crate::model::PairModelSpec::wigner(n, sym, 0.0, 1.0) };
        let sampler = crate::model::PairSampler::new(&spec).unwrap();
        let data = Arc::new(build_entry_data(&profile, n, sym).unwrap());
        let mut r = rng::seeded(77);
        let paths = 20_000;
        let m = data.entries.len();
        let mut prods = vec![Vec::with_capacity(paths); m];
        for _ in 0..paths {
            let (x1, x2) = sampler.sample_signal(&mut r);
            let st = FlowState::from_coords(data.clone(), x1, x2);
            let st = evolve_exact(&st, 0.1, &mut r).unwrap();
            for i in 0..m {
                prods[i].push(st.w1[i] * st.w2[i]);
            }
        }
        for (i, e) in data.entries.iter().enumerate() {
            let dev = stats::mean(&prods[i]) - e.cov[0][1];
            assert!(dev.abs() < 4.5 * stats::std_err(&prods[i]), "entry {i}");
        }
    }
}
