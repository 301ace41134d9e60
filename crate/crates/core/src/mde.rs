//! Matrix Dyson Equation `-M(z)^{-1} = z - A + S[M(z)]`, the self-consistent
//! density of states, its bulk intervals and the free-convolution relation.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{component_variances, BasisImages};
use crate::linalg::{inverse, min_eig_imag_part, normalized_trace, HMatrix, C64};
use crate::model::{PairModelSpec, SymmetryClass};

/// The self-energy operator `S[R] = E[W R W]` of a (filtered) Wigner-type
/// matrix.
#[derive(Clone, Debug)]
pub enum SelfEnergy {
    /// `S[R] = <R> I`.
    Flat { n: usize },
    /// Independent entries with variances `sigma2[a*n + b] = E|w_ab|^2`.
    WignerType { n: usize, symmetry: SymmetryClass, sigma2: Vec<f64> },
    /// `sum_beta v_beta Phi[B_beta] R Phi[B_beta]`.
    Filtered { images: BasisImages, weights: Vec<f64> },
}

impl SelfEnergy {
    pub fn flat(n: usize) -> Self {
        SelfEnergy::Flat { n }
    }

    /// Self-energy of `H_j` in `spec`, computed analytically.
    pub fn from_spec(spec: &PairModelSpec, j: usize) -> Result<Self> {
        let n = spec.n;
        if spec.filter(j).is_identity() {
            let sigma2 = (0..n * n).map(|i| spec.profile.variance(j, i / n, i % n, n)).collect();
            Ok(SelfEnergy::WignerType { n, symmetry: spec.symmetry, sigma2 })
        } else {
            let images = BasisImages::new(spec.filter(j), n, spec.symmetry)?;
            let weights = component_variances(&spec.profile, &images.layout, j);
            Ok(SelfEnergy::Filtered { images, weights })
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SelfEnergy::Flat { n } | SelfEnergy::WignerType { n, .. } => *n,
            SelfEnergy::Filtered { images, .. } => images.n(),
        }
    }

    /// True when `S` maps diagonal matrices to diagonal matrices.
    pub fn preserves_diagonal(&self) -> bool {
        !matches!(self, SelfEnergy::Filtered { .. })
    }

    pub fn apply(&self, r: &Mat<C64>) -> Mat<C64> {
        let n = self.n();
        match self {
            SelfEnergy::Flat { .. } => {
                let t = normalized_trace(r);
                Mat::from_fn(n, n, |i, j| if i == j { t } else { C64::new(0.0, 0.0) })
            }
            SelfEnergy::WignerType { symmetry, sigma2, .. } => {
                let d: Vec<C64> = (0..n).map(|i| r[(i, i)]).collect();
                let diag = self.apply_diagonal(&d);
                let real = *symmetry == SymmetryClass::RealSymmetric;
                Mat::from_fn(n, n, |a, b| {
                    if a == b {
                        diag[a]
                    } else if real {
                        r[(b, a)] * sigma2[a * n + b]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
            SelfEnergy::Filtered { images, weights } => {
                let mut out = Mat::<C64>::zeros(n, n);
                for (img, &v) in images.images.iter().zip(weights) {
                    if v == 0.0 {
                        continue;
                    }
                    for &(a, b, x) in img {
                        for &(c, d, y) in img {
                            out[(a, d)] += x * r[(b, c)] * y * v;
                        }
                    }
                }
                out
            }
        }
    }

    /// Diagonal of `S[diag(d)]`; only valid when [`Self::preserves_diagonal`].
    pub fn apply_diagonal(&self, d: &[C64]) -> Vec<C64> {
        let n = d.len();
        match self {
            SelfEnergy::Flat { .. } => {
                let t: C64 = d.iter().sum::<C64>() / n as f64;
                vec![t; n]
            }
            SelfEnergy::WignerType { sigma2, .. } => (0..n)
                .map(|a| (0..n).map(|c| d[c] * sigma2[a * n + c]).sum())
                .collect(),
            SelfEnergy::Filtered { .. } => {
                let m = Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) });
                let s = self.apply(&m);
                (0..n).map(|i| s[(i, i)]).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdeOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub theta_start: f64,
    pub theta_min: f64,
}

impl Default for MdeOptions {
    fn default() -> Self {
        MdeOptions { tolerance: 1e-10, max_iterations: 10_000, theta_start: 0.5, theta_min: 0.05 }
    }
}

#[derive(Clone, Debug)]
pub struct MdeSolution {
    pub z: C64,
    pub m: Mat<C64>,
    pub iterations: usize,
    pub residual: f64,
}

impl MdeSolution {
    pub fn mean(&self) -> C64 {
        normalized_trace(&self.m)
    }
}

/// Solves the MDE at `z` by the damped fixed-point map
/// `M <- (1-theta) M + theta (-(z - A + S[M])^{-1})`.
///
/// The damping starts at `theta_start`, halves whenever the residual grows
/// and never drops below `theta_min`.
pub fn solve_mde(a: &HMatrix, s: &SelfEnergy, z: C64, init: Option<&Mat<C64>>, opts: &MdeOptions) -> Result<MdeSolution> {
    let n = a.n();
    if s.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s.n() });
    }
    if z.im == 0.0 {
        return Err(Error::InvalidArgument("solve_mde needs Im z != 0".into()));
    }
    let init_is_diag = init.is_none_or(is_diagonal);
    let sol = if a.is_diagonal() && s.preserves_diagonal() && init_is_diag {
        solve_diagonal(a, s, z, init, opts)?
    } else {
        solve_dense(a, s, z, init, opts)?
    };
    let sign = z.im.signum();
    let min_im = if is_diagonal(&sol.m) {
        (0..n).map(|i| sign * sol.m[(i, i)].im).fold(f64::INFINITY, f64::min)
    } else {
        let flipped = Mat::from_fn(n, n, |i, j| sol.m[(i, j)] * sign);
        min_eig_imag_part(&flipped)?
    };
    if !(min_im > 0.0) {
        return Err(Error::WrongBranch(min_im));
    }
    Ok(sol)
}

fn is_diagonal(m: &Mat<C64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)].norm() == 0.0))
}

struct Damping {
    theta: f64,
    prev: f64,
    opts: MdeOptions,
}

impl Damping {
    fn new(opts: &MdeOptions) -> Self {
        Damping { theta: opts.theta_start, prev: f64::INFINITY, opts: *opts }
    }

    fn step(&mut self, residual: f64) -> f64 {
        if residual > self.prev {
            self.theta = (self.theta * 0.5).max(self.opts.theta_min);
        } else {
            self.theta = (self.theta * 1.05).min(self.opts.theta_start);
        }
        self.prev = residual;
        self.theta
    }
}

fn solve_diagonal(a: &HMatrix, s: &SelfEnergy, z: C64, init: Option<&Mat<C64>>, opts: &MdeOptions) -> Result<MdeSolution> {
    let n = a.n();
    let diag_a = a.diagonal();
    let start = C64::new(0.0, z.im.signum());
    let mut m: Vec<C64> = match init {
        Some(mi) => (0..n).map(|i| mi[(i, i)]).collect(),
        None => vec![start; n],
    };
    let mut damping = Damping::new(opts);
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let sm = s.apply_diagonal(&m);
        let f: Vec<C64> = (0..n).map(|i| -1.0 / (z - diag_a[i] + sm[i])).collect();
        residual = m.iter().zip(&f).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        if residual < opts.tolerance {
            let mat = Mat::from_fn(n, n, |i, j| if i == j { m[i] } else { C64::new(0.0, 0.0) });
            return Ok(MdeSolution { z, m: mat, iterations: it, residual });
        }
        let theta = damping.step(residual);
        for (x, y) in m.iter_mut().zip(&f) {
            *x = *x * (1.0 - theta) + y * theta;
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iterations, residual })
}

fn solve_dense(a: &HMatrix, s: &SelfEnergy, z: C64, init: Option<&Mat<C64>>, opts: &MdeOptions) -> Result<MdeSolution> {
    let n = a.n();
    let ac = a.to_complex();
    let mut m = match init {
        Some(mi) => mi.clone(),
        None => Mat::from_fn(n, n, |i, j| if i == j { C64::new(0.0, z.im.signum()) } else { C64::new(0.0, 0.0) }),
    };
    let mut damping = Damping::new(opts);
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let sm = s.apply(&m);
        let d = Mat::from_fn(n, n, |i, j| {
            let zi = if i == j { z } else { C64::new(0.0, 0.0) };
            zi - ac[(i, j)] + sm[(i, j)]
        });
        let inv = inverse(&d);
        let f = Mat::from_fn(n, n, |i, j| -inv[(i, j)]);
        residual = 0.0;
        for i in 0..n {
            for j in 0..n {
                residual = residual.max((m[(i, j)] - f[(i, j)]).norm());
            }
        }
        if residual < opts.tolerance {
            return Ok(MdeSolution { z, m, iterations: it, residual });
        }
        let theta = damping.step(residual);
        m = Mat::from_fn(n, n, |i, j| m[(i, j)] * (1.0 - theta) + f[(i, j)] * theta);
    }
    Err(Error::NonConvergence { iterations: opts.max_iterations, residual })
}

/// Stieltjes transform of the semicircle law, `m_sc(z) = (-z + sqrt(z^2 - 4))/2`
/// on the branch with `Im m_sc * Im z > 0`.
pub fn m_sc(z: C64) -> C64 {
    let two = C64::new(2.0, 0.0);
    let root = (z - two).sqrt() * (z + two).sqrt();
    let m = (-z + root) * 0.5;
    if m.im * z.im >= 0.0 {
        m
    } else {
        (-z - root) * 0.5
    }
}

pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// The density `rho(E)` and `<M>` along an energy grid at fixed `eta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub energies: Vec<f64>,
    pub eta: f64,
    pub rho: Vec<f64>,
    pub mean_m: Vec<C64>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub bulk: Vec<(f64, f64)>,
}

impl SpectralSolution {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "E,eta,rho,iterations,residual")?;
        for i in 0..self.energies.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.energies[i], self.eta, self.rho[i], self.iterations[i], self.residuals[i]
            )?;
        }
        Ok(())
    }

    /// Linear interpolation of `rho` at `e`; zero outside the grid.
    pub fn rho_at(&self, e: f64) -> f64 {
        interpolate(&self.energies, &self.rho, e)
    }

    pub fn with_bulk(mut self, kappa: f64) -> Self {
        self.bulk = kappa_bulk(&self.energies, &self.rho, kappa);
        self
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[i - 1] * (1.0 - w) + ys[i] * w
}

/// Evenly spaced grid with `count` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// Default energy grid: 2001 points on `[-||A|| - 3, ||A|| + 3]`.
pub fn default_grid(a: &HMatrix) -> Result<Vec<f64>> {
    let r = a.operator_norm()? + 3.0;
    Ok(linspace(-r, r, 2001))
}

/// `rho(E) = |<Im M(E + i eta)>| / pi` along `energies`, warm-starting each
/// point from its left neighbour.
pub fn scdos(a: &HMatrix, s: &SelfEnergy, energies: &[f64], eta: f64, opts: &MdeOptions) -> Result<SpectralSolution> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let mut out = SpectralSolution {
        energies: energies.to_vec(),
        eta,
        rho: Vec::with_capacity(energies.len()),
        mean_m: Vec::with_capacity(energies.len()),
        iterations: Vec::with_capacity(energies.len()),
        residuals: Vec::with_capacity(energies.len()),
        bulk: Vec::new(),
    };
    let mut warm: Option<Mat<C64>> = None;
    for &e in energies {
        let z = C64::new(e, eta);
        let sol = match solve_mde(a, s, z, warm.as_ref(), opts) {
            Ok(sol) => sol,
            // a warm start can sit on the wrong side of a gap edge
            Err(_) if warm.is_some() => solve_mde(a, s, z, None, opts)?,
            Err(err) => return Err(err),
        };
        let mean = sol.mean();
        out.rho.push(mean.im.abs() / std::f64::consts::PI);
        out.mean_m.push(mean);
        out.iterations.push(sol.iterations);
        out.residuals.push(sol.residual);
        warm = Some(sol.m);
    }
    Ok(out)
}

/// Maximal intervals where `rho >= kappa`, endpoints linearly interpolated.
pub fn kappa_bulk(energies: &[f64], rho: &[f64], kappa: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let cross = |i: usize| {
        let (x0, x1, y0, y1) = (energies[i - 1], energies[i], rho[i - 1], rho[i]);
        if y1 == y0 {
            x0
        } else {
            x0 + (kappa - y0) * (x1 - x0) / (y1 - y0)
        }
    };
    for (i, &r) in rho.iter().enumerate().take(energies.len()) {
        let inside = r >= kappa;
        match (inside, start) {
            (true, None) => start = Some(if i == 0 { energies[0] } else { cross(i) }),
            (false, Some(s)) => {
                out.push((s, cross(i)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, energies[energies.len() - 1]));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeConvolutionPoint {
    pub z: C64,
    pub m_c: C64,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `m_c(z) = mhat(z + t m_c(z))` at each `z` by damped iteration and
/// reports the defining residual.
pub fn free_convolution_check<F>(mhat: F, t: f64, zs: &[C64], opts: &MdeOptions) -> Result<Vec<FreeConvolutionPoint>>
where
    F: Fn(C64) -> Result<C64>,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be nonnegative, got {t}")));
    }
    zs.iter()
        .map(|&z| {
            let mut m = mhat(z)?;
            let mut damping = Damping::new(opts);
            for it in 0..opts.max_iterations {
                let f = mhat(z + m * t)?;
                let residual = (f - m).norm();
                if residual < opts.tolerance {
                    return Ok(FreeConvolutionPoint { z, m_c: m, residual, iterations: it });
                }
                let theta = damping.step(residual);
                m = m * (1.0 - theta) + f * theta;
            }
            let residual = (mhat(z + m * t)? - m).norm();
            Err(Error::NonConvergence { iterations: opts.max_iterations, residual })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CorrelationProfile, DeformationSpec};
    use crate::filtering::{FilterSpec, KernelSpec};

    fn zero(n: usize) -> HMatrix {
        HMatrix::zeros(n, SymmetryClass::RealSymmetric)
    }

    #[test]
    fn flat_wigner_at_i_is_golden_ratio() {
        let sol = solve_mde(&zero(4), &SelfEnergy::flat(4), C64::new(0.0, 1.0), None, &MdeOptions::default()).unwrap();
        let expect = (5f64.sqrt() - 1.0) / 2.0;
        for i in 0..4 {
            assert!((sol.m[(i, i)] - C64::new(0.0, expect)).norm() < 1e-10);
        }
    }

    #[test]
    fn m_sc_branch() {
        for z in [C64::new(0.3, 1e-3), C64::new(-2.5, 0.1), C64::new(3.0, -0.2), C64::new(0.0, -1.0)] {
            let m = m_sc(z);
            assert!(m.im * z.im > 0.0);
            assert!((m * m + z * m + 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_matches_semicircle_in_bulk_small_eta() {
        let opts = MdeOptions::default();
        for e in [-1.7, -0.5, 0.0, 0.9, 1.5] {
            let z = C64::new(e, 1e-3);
            let sol = solve_mde(&zero(2), &SelfEnergy::flat(2), z, None, &opts).unwrap();
            let rel = (sol.mean() - m_sc(z)).norm() / m_sc(z).norm();
            assert!(rel < 1e-8, "E = {e}: {rel}");
        }
    }

    fn quartic_oracle(y: f64) -> f64 {
        // m = i v solves v (1 + (y + v)^2) = y + v for v > 0
        let g = |v: f64| v * (1.0 + (y + v).powi(2)) - (y + v);
        let (mut lo, mut hi) = (1e-12, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn deformed_halves_matches_quartic_root() {
        let n = 10;
        let a = DeformationSpec::Halves { value: 1.0 }.materialize(n, SymmetryClass::RealSymmetric).unwrap();
        for y in [1.0, 0.3] {
            let sol = solve_mde(&a, &SelfEnergy::flat(n), C64::new(0.0, y), None, &MdeOptions::default()).unwrap();
            let v = quartic_oracle(y);
            assert!((sol.mean() - C64::new(0.0, v)).norm() < 1e-9, "y = {y}");
        }
    }

    #[test]
    fn dense_path_agrees_with_diagonal_path() {
        let n = 6;
        let a = DeformationSpec::Halves { value: 0.7 }.materialize(n, SymmetryClass::RealSymmetric).unwrap();
        let z = C64::new(0.4, 0.2);
        let s = SelfEnergy::flat(n);
        let opts = MdeOptions::default();
        let diag = solve_mde(&a, &s, z, None, &opts).unwrap();
        let mut init = Mat::<C64>::zeros(n, n);
        for i in 0..n {
            init[(i, i)] = C64::new(0.0, 1.0);
        }
        init[(0, 1)] = C64::new(1e-3, 0.0);
        init[(1, 0)] = C64::new(1e-3, 0.0);
        let dense = solve_mde(&a, &s, z, Some(&init), &opts).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((diag.m[(i, j)] - dense.m[(i, j)]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn stieltjes_conjugation_symmetry() {
        let n = 8;
        let mut spec = PairModelSpec::wigner(n, SymmetryClass::RealSymmetric, 0.0, 1.0);
        spec.profile = CorrelationProfile::generic(SymmetryClass::RealSymmetric, 0.5);
        let s = SelfEnergy::from_spec(&spec, 1).unwrap();
        let a = DeformationSpec::Halves { value: 0.5 }.materialize(n, spec.symmetry).unwrap();
        let z = C64::new(0.3, 0.05);
        let up = solve_mde(&a, &s, z, None, &MdeOptions::default()).unwrap().mean();
        let down = solve_mde(&a, &s, z.conj(), None, &MdeOptions::default()).unwrap().mean();
        assert!((up - down.conj()).norm() < 1e-9);
    }

    #[test]
    fn wigner_type_self_energy_matches_expectation_formula() {
        // direct E[W R W] with independent entries, summed over index pairs
        let n = 4;
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            let mut spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
            spec.profile = CorrelationProfile::generic(sym, 0.5);
            let s = SelfEnergy::from_spec(&spec, 2).unwrap();
            let r = Mat::from_fn(n, n, |i, j| C64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
            let got = s.apply(&r);
            let var = |a: usize, b: usize| spec.profile.variance(2, a, b, n);
            for a in 0..n {
                for b in 0..n {
                    let mut e = C64::new(0.0, 0.0);
                    for c in 0..n {
                        for d in 0..n {
                            // E[w_ac w_db]
                            let mut cov = 0.0;
                            if a == b && c == d {
                                cov += var(a, c);
                            }
                            if sym == SymmetryClass::RealSymmetric && a == d && c == b && !(a == b && c == d) {
                                cov += var(a, c);
                            }
                            e += r[(c, d)] * cov;
                        }
                    }
                    assert!((got[(a, b)] - e).norm() < 1e-14, "{sym:?} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn identity_filtered_self_energy_equals_wigner_type() {
        let n = 5;
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            let mut spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
            spec.profile = CorrelationProfile::generic(sym, 0.5);
            let wt = SelfEnergy::from_spec(&spec, 1).unwrap();
            let images = BasisImages::new(&FilterSpec::identity(), n, sym).unwrap();
            let weights = component_variances(&spec.profile, &images.layout, 1);
            let filt = SelfEnergy::Filtered { images, weights };
            let r = Mat::from_fn(n, n, |i, j| C64::new((i * j) as f64 * 0.1 + 1.0, (i as f64 - j as f64) * 0.2));
            let (x, y) = (wt.apply(&r), filt.apply(&r));
            for i in 0..n {
                for j in 0..n {
                    assert!((x[(i, j)] - y[(i, j)]).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn filtered_self_energy_preserves_positivity() {
        let n = 5;
        let sym = SymmetryClass::ComplexHermitian;
        let mut spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
        spec.filter1 = FilterSpec::convolution(KernelSpec::Preset("stencil5(0.2)".into()), 3.0, 1.0);
        let s = SelfEnergy::from_spec(&spec, 1).unwrap();
        // R = v v^* is PSD
        let v: Vec<C64> = (0..n).map(|i| C64::new(i as f64 - 1.5, 0.3 * i as f64)).collect();
        let r = Mat::from_fn(n, n, |i, j| v[i] * v[j].conj());
        let out = s.apply(&r);
        let herm = HMatrix::Complex(Mat::from_fn(n, n, |i, j| 0.5 * (out[(i, j)] + out[(j, i)].conj())));
        assert!(herm.eigenvalues().unwrap()[0] > -1e-12);
        let sol = solve_mde(&HMatrix::zeros(n, sym), &s, C64::new(0.2, 0.1), None, &MdeOptions::default()).unwrap();
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn scdos_semicircle_values() {
        let s = SelfEnergy::flat(1);
        let a = zero(1);
        let sol = scdos(&a, &s, &[0.0], 1e-5, &MdeOptions::default()).unwrap();
        assert!((sol.rho[0] - 1.0 / std::f64::consts::PI).abs() < 1e-4);
        let out = scdos(&a, &s, &[-3.0, 3.0], 1e-3, &MdeOptions::default()).unwrap();
        assert!(out.rho.iter().all(|r| *r < 1e-3));
    }

    #[test]
    fn scdos_integrates_to_one() {
        let a = zero(1);
        let grid = linspace(-6.0, 6.0, 2401);
        let sol = scdos(&a, &SelfEnergy::flat(1), &grid, 1e-3, &MdeOptions::default()).unwrap();
        let h = grid[1] - grid[0];
        let total: f64 = sol.rho.iter().sum::<f64>() * h;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("E,eta,rho,iterations,residual\n"));
    }

    #[test]
    fn kappa_bulk_semicircle_and_empty() {
        let grid = linspace(-3.0, 3.0, 6001);
        let rho: Vec<f64> = grid.iter().map(|&x| semicircle_density(x)).collect();
        let b = kappa_bulk(&grid, &rho, 0.1);
        assert_eq!(b.len(), 1);
        let edge = (4.0 - (0.2 * std::f64::consts::PI).powi(2)).sqrt();
        assert!((b[0].0 + edge).abs() < 1e-3 && (b[0].1 - edge).abs() < 1e-3);
        assert!((edge - 1.8987).abs() < 1e-4);
        assert!(kappa_bulk(&grid, &rho, 1.0).is_empty());
    }

    #[test]
    fn two_bump_density_has_two_bulk_intervals() {
        let n = 2;
        let a = DeformationSpec::Halves { value: 2.5 }.materialize(n, SymmetryClass::RealSymmetric).unwrap();
        let grid = linspace(-5.0, 5.0, 1001);
        let sol = scdos(&a, &SelfEnergy::flat(n), &grid, 1e-3, &MdeOptions::default()).unwrap().with_bulk(0.1);
        assert_eq!(sol.bulk.len(), 2, "{:?}", sol.bulk);
        assert!(sol.bulk[0].1 < 0.0 && sol.bulk[1].0 > 0.0);
    }

    #[test]
    fn free_convolution_of_semicircle_rescales() {
        let zs: Vec<C64> = [-1.5, 0.0, 0.7, 2.5].iter().map(|&e| C64::new(e, 0.05)).collect();
        let opts = MdeOptions::default();
        for t in [0.0, 0.3, 1.0] {
            let pts = free_convolution_check(|w| Ok(m_sc(w)), t, &zs, &opts).unwrap();
            for p in pts {
                let s = (1.0 + t).sqrt();
                let expect = m_sc(p.z / s) / s;
                assert!((p.m_c - expect).norm() < 1e-8, "t = {t}, z = {}", p.z);
                assert!(p.residual < 1e-10);
                if t == 0.0 {
                    assert_eq!(p.m_c, m_sc(p.z));
                }
            }
        }
    }
}
