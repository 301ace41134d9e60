//! Linear filtering maps `Phi` on `Sym_beta(N)`.
//!
//! Filters act on the raw signal before the deformation is added. The
//! translation-invariant kind is a circular convolution on the discrete
//! torus; arbitrary linear maps can be given by their action on the real
//! basis of `Sym_beta(N)`.

use std::sync::Arc;

use faer::Mat;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HMatrix, C64};
use crate::model::{ComponentLayout, CorrelationProfile, Part, SymmetryClass};

/// Convolution kernels at or below this size are applied by direct summation.
pub const DIRECT_CONVOLUTION_MAX_N: usize = 64;

/// A real kernel `F` on the torus, given as a named preset or as explicit
/// `(x, y, value)` triples (coordinates taken mod N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Preset(String),
    Triples(Vec<(i64, i64, f64)>),
}

impl KernelSpec {
    pub fn materialize(&self, n: usize) -> Result<Kernel> {
        let mut dense = vec![0.0; n * n];
        let wrap = |v: i64| v.rem_euclid(n as i64) as usize;
        match self {
            KernelSpec::Triples(items) => {
                for &(x, y, v) in items {
                    dense[wrap(x) * n + wrap(y)] += v;
                }
            }
            KernelSpec::Preset(name) => {
                let (head, args) = parse_preset(name)?;
                match (head.as_str(), args.as_slice()) {
                    ("identity", []) => dense[0] = 1.0,
                    ("power_decay", [s, c]) => {
                        for x in 0..n {
                            for y in 0..n {
                                let d = (torus_dist(x, 0, n) + torus_dist(y, 0, n)) as f64;
                                dense[x * n + y] = if d == 0.0 { 1.0 } else { c / (1.0 + d.powf(*s)) };
                            }
                        }
                    }
                    ("stencil5", [eps]) => {
                        dense[0] += 1.0;
                        for (x, y) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                            dense[wrap(x) * n + wrap(y)] += eps;
                        }
                    }
                    _ => return Err(Error::InvalidArgument(format!("unknown kernel preset '{name}'"))),
                }
            }
        }
        Ok(Kernel::from_dense(n, dense))
    }
}

fn parse_preset(name: &str) -> Result<(String, Vec<f64>)> {
    let name = name.trim();
    let Some(open) = name.find('(') else {
        return Ok((name.to_string(), Vec::new()));
    };
    let close = name
        .rfind(')')
        .ok_or_else(|| Error::InvalidArgument(format!("malformed kernel preset '{name}'")))?;
    let args = name[open + 1..close]
        .split(',')
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad argument '{a}' in kernel preset '{name}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((name[..open].trim().to_string(), args))
}

pub fn torus_dist(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// A kernel materialized at a fixed N: dense table plus its nonzero support.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub n: usize,
    pub dense: Vec<f64>,
    pub support: Vec<(usize, usize, f64)>,
}

impl Kernel {
    fn from_dense(n: usize, dense: Vec<f64>) -> Self {
        let support = (0..n * n)
            .filter(|&i| dense[i] != 0.0)
            .map(|i| (i / n, i % n, dense[i]))
            .collect();
        Kernel { n, dense, support }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.dense[(x % self.n) * self.n + (y % self.n)]
    }

    /// `F(a - c, b - d)` with torus wrap.
    #[inline]
    pub fn shifted(&self, a: usize, c: usize, b: usize, d: usize) -> f64 {
        let n = self.n;
        self.dense[((a + n - c) % n) * n + (b + n - d) % n]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n;
        (0..n).all(|x| (0..n).all(|y| self.dense[x * n + y] == self.dense[y * n + x]))
    }

    /// `F^(k/N, l/N) = sum_{x,y} F(x,y) e^{2 pi i (x k - y l)/N}` on the full grid.
    pub fn fourier_grid(&self) -> Vec<C64> {
        let n = self.n;
        let mut grid: Vec<C64> = self.dense.iter().map(|&v| C64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(n);
        let fwd = planner.plan_fft_forward(n);
        // rows carry x with the + sign, columns carry y with the - sign
        fft_axis(&mut grid, n, &inv, true);
        fft_axis(&mut grid, n, &fwd, false);
        grid
    }
}

/// In-place 1-D FFTs along columns (`by_column`) or rows of an `n x n`
/// row-major grid.
fn fft_axis(grid: &mut [C64], n: usize, plan: &Arc<dyn Fft<f64>>, by_column: bool) {
    if by_column {
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for col in 0..n {
            for r in 0..n {
                buf[r] = grid[r * n + col];
            }
            plan.process(&mut buf);
            for r in 0..n {
                grid[r * n + col] = buf[r];
            }
        }
    } else {
        for row in grid.chunks_mut(n) {
            plan.process(row);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FilterKind {
    Identity,
    Convolution { kernel: KernelSpec },
    /// Column `beta` holds the coordinates of `Phi[B_beta]` in the
    /// [`ComponentLayout`] order; row-major `d x d`.
    ExplicitOperator { n: usize, matrix: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub decay_exponent: f64,
    pub decay_constant: f64,
}

impl FilterSpec {
    pub fn identity() -> Self {
        FilterSpec { kind: FilterKind::Identity, decay_exponent: 3.0, decay_constant: 1.0 }
    }

    pub fn convolution(kernel: KernelSpec, decay_exponent: f64, decay_constant: f64) -> Self {
        FilterSpec { kind: FilterKind::Convolution { kernel }, decay_exponent, decay_constant }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == FilterKind::Identity
    }

    /// Structural checks: decay parameters, kernel symmetry, dimensions.
    pub fn validate(&self, n: usize, symmetry: SymmetryClass) -> Result<()> {
        if !(self.decay_exponent > 2.0) {
            return Err(Error::InvalidArgument(format!("decay exponent must exceed 2, got {}", self.decay_exponent)));
        }
        if !(self.decay_constant > 0.0) {
            return Err(Error::InvalidArgument("decay constant must be positive".into()));
        }
        match &self.kind {
            FilterKind::Identity => Ok(()),
            FilterKind::Convolution { kernel } => {
                let k = kernel.materialize(n)?;
                if !k.is_symmetric() {
                    return Err(Error::InvalidArgument("kernel must satisfy F(x,y) = F(y,x)".into()));
                }
                Ok(())
            }
            FilterKind::ExplicitOperator { n: m, matrix } => {
                let d = ComponentLayout::new(n, symmetry).len();
                if *m != n || matrix.len() != d * d {
                    return Err(Error::DimensionMismatch { expected: d * d, got: matrix.len() });
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, w: &HMatrix) -> Result<HMatrix> {
        apply_filter(self, w)
    }
}

/// `Phi[W]`; identity returns a copy, convolutions use a direct sum for
/// `N <= 64` and a 2-D FFT above.
pub fn apply_filter(phi: &FilterSpec, w: &HMatrix) -> Result<HMatrix> {
    let n = w.n();
    match &phi.kind {
        FilterKind::Identity => Ok(w.clone()),
        FilterKind::Convolution { kernel } => {
            let k = kernel.materialize(n)?;
            if n <= DIRECT_CONVOLUTION_MAX_N {
                Ok(convolve_direct(&k, w))
            } else {
                Ok(convolve_fft(&k, w))
            }
        }
        FilterKind::ExplicitOperator { n: m, matrix } => {
            let layout = ComponentLayout::new(n, w.symmetry());
            let d = layout.len();
            if *m != n || matrix.len() != d * d {
                return Err(Error::DimensionMismatch { expected: d * d, got: matrix.len() });
            }
            let x = layout.extract(w);
            let y: Vec<f64> = (0..d).map(|r| (0..d).map(|c| matrix[r * d + c] * x[c]).sum()).collect();
            Ok(layout.assemble(&y))
        }
    }
}

/// Direct circular convolution over the kernel support.
pub fn convolve_direct(k: &Kernel, w: &HMatrix) -> HMatrix {
    let n = w.n();
    let mut out = HMatrix::zeros(n, w.symmetry());
    for a in 0..n {
        for b in a..n {
            let mut acc = C64::new(0.0, 0.0);
            for &(x, y, f) in &k.support {
                acc += w.get((a + n - x) % n, (b + n - y) % n) * f;
            }
            out.set_sym(a, b, acc);
        }
    }
    out
}

/// Circular convolution through the 2-D FFT.
pub fn convolve_fft(k: &Kernel, w: &HMatrix) -> HMatrix {
    let n = w.n();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut kf: Vec<C64> = k.dense.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut wf: Vec<C64> = (0..n * n).map(|i| w.get(i / n, i % n)).collect();
    for g in [&mut kf, &mut wf] {
        fft_axis(g, n, &fwd, false);
        fft_axis(g, n, &fwd, true);
    }
    for (a, b) in wf.iter_mut().zip(&kf) {
        *a *= *b;
    }
    fft_axis(&mut wf, n, &inv, true);
    fft_axis(&mut wf, n, &inv, false);
    let scale = 1.0 / (n * n) as f64;
    let mut out = HMatrix::zeros(n, w.symmetry());
    for a in 0..n {
        for b in a..n {
            out.set_sym(a, b, wf[a * n + b] * scale);
        }
    }
    out
}

/// `E_ik` (real variant) or `E_ik^Im` (imaginary variant, `i < k`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisMatrix {
    pub i: usize,
    pub k: usize,
    pub imaginary: bool,
}

impl BasisMatrix {
    pub fn real(i: usize, k: usize) -> Self {
        BasisMatrix { i: i.min(k), k: i.max(k), imaginary: false }
    }

    pub fn imag(i: usize, k: usize) -> Self {
        BasisMatrix { i: i.min(k), k: i.max(k), imaginary: true }
    }

    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        let (i, k) = (self.i, self.k);
        if i == k {
            vec![(i, i, C64::new(1.0, 0.0))]
        } else if self.imaginary {
            vec![(i, k, C64::new(0.0, 1.0)), (k, i, C64::new(0.0, -1.0))]
        } else {
            vec![(i, k, C64::new(1.0, 0.0)), (k, i, C64::new(1.0, 0.0))]
        }
    }

    pub fn to_matrix(&self, n: usize, symmetry: SymmetryClass) -> Result<HMatrix> {
        if self.imaginary && symmetry == SymmetryClass::RealSymmetric {
            return Err(Error::ImagBasisInRealClass);
        }
        if self.k >= n {
            return Err(Error::InvalidArgument(format!("basis index ({}, {}) out of range for N = {n}", self.i, self.k)));
        }
        if self.imaginary && self.i == self.k {
            return Err(Error::InvalidArgument("imaginary basis matrix needs i < k".into()));
        }
        let mut m = HMatrix::zeros(n, symmetry);
        let (i, k, v) = self.entries()[0];
        m.set_sym(i, k, v);
        Ok(m)
    }
}

/// `Phi[E_ik]` or `Phi[E_ik^Im]` as a dense matrix.
pub fn basis_image(phi: &FilterSpec, basis: BasisMatrix, n: usize, symmetry: SymmetryClass) -> Result<HMatrix> {
    apply_filter(phi, &basis.to_matrix(n, symmetry)?)
}

/// Images `Phi[B_beta]` of all basis matrices, stored sparsely as full
/// `(row, col, value)` lists, in [`ComponentLayout`] order.
#[derive(Clone, Debug)]
pub struct BasisImages {
    pub layout: ComponentLayout,
    pub images: Vec<Vec<(usize, usize, C64)>>,
}

impl BasisImages {
    pub fn new(phi: &FilterSpec, n: usize, symmetry: SymmetryClass) -> Result<Self> {
        let layout = ComponentLayout::new(n, symmetry);
        let basis: Vec<BasisMatrix> = layout
            .comps
            .iter()
            .map(|c| BasisMatrix { i: c.a, k: c.b, imaginary: c.part == Part::Im })
            .collect();
        let images = match &phi.kind {
            FilterKind::Identity => basis.iter().map(|b| b.entries()).collect(),
            FilterKind::Convolution { kernel } => {
                let k = kernel.materialize(n)?;
                basis.iter().map(|b| convolve_sparse(&k, &b.entries())).collect()
            }
            FilterKind::ExplicitOperator { .. } => basis
                .iter()
                .map(|b| {
                    let img = apply_filter(phi, &b.to_matrix(n, symmetry)?)?;
                    Ok(dense_entries(&img))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(BasisImages { layout, images })
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }
}

fn convolve_sparse(k: &Kernel, entries: &[(usize, usize, C64)]) -> Vec<(usize, usize, C64)> {
    let n = k.n;
    let mut acc: std::collections::BTreeMap<(usize, usize), C64> = Default::default();
    for &(c, d, v) in entries {
        for &(x, y, f) in &k.support {
            *acc.entry(((c + x) % n, (d + y) % n)).or_default() += v * f;
        }
    }
    acc.into_iter().filter(|(_, v)| v.norm() != 0.0).map(|((a, b), v)| (a, b, v)).collect()
}

fn dense_entries(m: &HMatrix) -> Vec<(usize, usize, C64)> {
    let n = m.n();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let v = m.get(a, b);
            if v.norm() != 0.0 {
                out.push((a, b, v));
            }
        }
    }
    out
}

/// Outcome of a decay sweep. `worst_ratio` is the largest
/// `|Phi[B]_ab| (1 + d^s) / C0`; the bound holds iff it is at most 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub passed: bool,
    pub worst_ratio: f64,
    pub witness: Option<DecayWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayWitness {
    pub basis: BasisMatrix,
    pub a: usize,
    pub b: usize,
    pub distance: usize,
    pub value: f64,
}

/// Sweeps all basis images against `C0 / (1 + (|i-a| + |k-b|)^s)`. For
/// convolution filters the distance is taken on the torus between the
/// unordered index pairs.
pub fn check_decay(phi: &FilterSpec, n: usize, symmetry: SymmetryClass, s: f64, c0: f64) -> Result<DecayReport> {
    let images = BasisImages::new(phi, n, symmetry)?;
    let torus = matches!(phi.kind, FilterKind::Convolution { .. });
    let dist = |x: usize, y: usize| if torus { torus_dist(x, y, n) } else { x.abs_diff(y) };
    let mut worst = 0.0f64;
    let mut witness = None;
    for (c, img) in images.layout.comps.iter().zip(&images.images) {
        for &(a, b, v) in img {
            if a > b {
                continue;
            }
            let mut d = dist(c.a, a) + dist(c.b, b);
            if torus {
                // on the torus the mirrored entry (k, i) can wrap next to (a, b)
                d = d.min(dist(c.b, a) + dist(c.a, b));
            }
            let ratio = v.norm() * (1.0 + (d as f64).powf(s)) / c0;
            if ratio > worst {
                worst = ratio;
                witness = Some(DecayWitness {
                    basis: BasisMatrix { i: c.a, k: c.b, imaginary: c.part == Part::Im },
                    a,
                    b,
                    distance: d,
                    value: v.norm(),
                });
            }
        }
    }
    Ok(DecayReport { passed: worst <= 1.0, worst_ratio: worst, witness })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub passed: bool,
    pub min_value: f64,
}

/// Explicit operators are only assembled up to this size.
pub const EXPLICIT_LOWER_BOUND_MAX_N: usize = 32;

/// Checks `Phi >= c0`: via the Fourier symbol on the `N x N` frequency grid
/// for convolutions, via the spectrum of the assembled operator otherwise.
pub fn check_lower_bound(phi: &FilterSpec, n: usize, symmetry: SymmetryClass, c0: f64) -> Result<LowerBoundReport> {
    let min_value = match &phi.kind {
        FilterKind::Identity => 1.0,
        FilterKind::Convolution { kernel } => {
            let k = kernel.materialize(n)?;
            k.fourier_grid().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
        }
        FilterKind::ExplicitOperator { .. } => {
            if n > EXPLICIT_LOWER_BOUND_MAX_N {
                return Err(Error::ResourceGuard(format!(
                    "explicit operator lower bound limited to N <= {EXPLICIT_LOWER_BOUND_MAX_N}"
                )));
            }
            let op = operator_matrix(n, symmetry, |r| apply_filter(phi, r))?;
            min_symmetric_eigenvalue(&op)?
        }
    };
    Ok(LowerBoundReport { passed: min_value >= c0, min_value })
}

/// Matrix of a linear map on `Sym_beta(N)` in the orthonormal basis
/// `B_beta / sqrt(Tr B_beta^2)` of the trace inner product.
pub fn operator_matrix<F>(n: usize, symmetry: SymmetryClass, mut op: F) -> Result<Mat<f64>>
where
    F: FnMut(&HMatrix) -> Result<HMatrix>,
{
    let layout = ComponentLayout::new(n, symmetry);
    let d = layout.len();
    let norms: Vec<f64> = layout.comps.iter().map(|c| layout.trace_weight(c).sqrt()).collect();
    let mut m = Mat::<f64>::zeros(d, d);
    for (col, c) in layout.comps.iter().enumerate() {
        let basis = BasisMatrix { i: c.a, k: c.b, imaginary: c.part == Part::Im }.to_matrix(n, symmetry)?;
        let img = op(&basis.scaled(1.0 / norms[col]))?;
        let coords = layout.extract(&img);
        for row in 0..d {
            // coordinate x_beta of B_beta becomes x_beta * |B_beta| in the orthonormal basis
            m[(row, col)] = coords[row] * norms[row];
        }
    }
    Ok(m)
}

fn min_symmetric_eigenvalue(m: &Mat<f64>) -> Result<f64> {
    let d = m.nrows();
    let sym = Mat::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let ev = HMatrix::Real(sym).eigenvalues()?;
    Ok(ev.first().copied().unwrap_or(f64::INFINITY))
}

/// Per-coordinate variances of the raw signal `W_j`.
pub fn component_variances(profile: &CorrelationProfile, layout: &ComponentLayout, j: usize) -> Vec<f64> {
    layout
        .comps
        .iter()
        .map(|c| {
            let cov = layout.covariance(profile, c);
            if j == 1 {
                cov.v1
            } else {
                cov.v2
            }
        })
        .collect()
}

/// Per-coordinate cross-covariances `E[x1_beta x2_beta]`.
pub fn component_cross(profile: &CorrelationProfile, layout: &ComponentLayout) -> Vec<f64> {
    layout.comps.iter().map(|c| layout.covariance(profile, c).cross()).collect()
}

fn trace_with(r: &HMatrix, img: &[(usize, usize, C64)]) -> C64 {
    img.iter().map(|&(a, b, v)| r.get(b, a) * v).sum()
}

fn accumulate(out: &mut Mat<C64>, img: &[(usize, usize, C64)], scale: C64) {
    for &(a, b, v) in img {
        out[(a, b)] += v * scale;
    }
}

fn to_hmatrix(m: Mat<C64>, symmetry: SymmetryClass) -> HMatrix {
    match symmetry {
        SymmetryClass::RealSymmetric => HMatrix::Real(Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)),
        SymmetryClass::ComplexHermitian => HMatrix::Complex(m),
    }
}

/// `sum_beta weight_beta Phi1[B_beta] Tr(R Phi2[B_beta])`.
pub fn weighted_tensor_apply(img1: &BasisImages, img2: &BasisImages, weights: &[f64], r: &HMatrix) -> Result<HMatrix> {
    let n = img1.n();
    if r.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: r.n() });
    }
    let mut out = Mat::<C64>::zeros(n, n);
    for ((i1, i2), &w) in img1.images.iter().zip(&img2.images).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let t = trace_with(r, i2);
        if t.norm() != 0.0 {
            accumulate(&mut out, i1, t * w);
        }
    }
    Ok(to_hmatrix(out, img1.layout.symmetry))
}

/// `Sigma_{W~_j}[R] = E[W~_j Tr(R W~_j)]`, computed from the profile and filter.
pub fn covariance_tensor_apply(spec: &crate::model::PairModelSpec, j: usize, r: &HMatrix) -> Result<HMatrix> {
    let images = BasisImages::new(spec.filter(j), spec.n, spec.symmetry)?;
    let weights = component_variances(&spec.profile, &images.layout, j);
    weighted_tensor_apply(&images, &images, &weights, r)
}

/// Cross tensor `E[W~_1 Tr(R W~_2)]`, the off-diagonal block of the
/// covariance tensor of the `2N x 2N` block model.
pub fn cross_covariance_apply(spec: &crate::model::PairModelSpec, r: &HMatrix) -> Result<HMatrix> {
    let img1 = BasisImages::new(&spec.filter1, spec.n, spec.symmetry)?;
    let img2 = BasisImages::new(&spec.filter2, spec.n, spec.symmetry)?;
    let weights = component_cross(&spec.profile, &img1.layout);
    weighted_tensor_apply(&img1, &img2, &weights, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_gaussian_invariant, PairModelSpec};
    use crate::rng;

    fn brute_force(k: &Kernel, w: &HMatrix) -> Vec<C64> {
        let n = w.n();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        out[a * n + b] += w.get(c, d) * k.shifted(a, c, b, d);
                    }
                }
            }
        }
        out
    }

    fn generic_kernel() -> KernelSpec {
        KernelSpec::Triples(vec![(0, 0, 1.0), (1, 2, 0.3), (2, 1, 0.3), (-1, 0, -0.2), (0, -1, -0.2), (2, 2, 0.05)])
    }

    #[test]
    fn preset_parsing() {
        let k = KernelSpec::Preset("stencil5(0.1)".into()).materialize(6).unwrap();
        assert_eq!(k.support.len(), 5);
        assert_eq!(k.at(5, 0), 0.1);
        let p = KernelSpec::Preset("power_decay(3, 0.5)".into()).materialize(8).unwrap();
        assert_eq!(p.at(0, 0), 1.0);
        assert!((p.at(1, 1) - 0.5 / 9.0).abs() < 1e-15);
        assert!((p.at(7, 0) - 0.25).abs() < 1e-15);
        assert!(KernelSpec::Preset("gauss(1)".into()).materialize(4).is_err());
    }

    #[test]
    fn identity_and_delta_kernel_are_identity() {
        let mut r = rng::seeded(1);
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            let w = sample_gaussian_invariant(9, sym, &mut r);
            assert_eq!(apply_filter(&FilterSpec::identity(), &w).unwrap().max_abs_diff(&w), 0.0);
            let delta = FilterSpec::convolution(KernelSpec::Preset("identity".into()), 3.0, 1.0);
            assert_eq!(apply_filter(&delta, &w).unwrap().max_abs_diff(&w), 0.0);
        }
    }

    #[test]
    fn direct_convolution_matches_brute_force() {
        let mut r = rng::seeded(2);
        for n in [3, 5, 8] {
            let k = generic_kernel().materialize(n).unwrap();
            for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
                let w = sample_gaussian_invariant(n, sym, &mut r);
                let fast = convolve_direct(&k, &w);
                let slow = brute_force(&k, &w);
                for a in 0..n {
                    for b in 0..n {
                        assert!((fast.get(a, b) - slow[a * n + b]).norm() < 1e-13);
                    }
                }
                assert!(fast.is_hermitian());
            }
        }
    }

    #[test]
    fn fft_path_matches_direct_path() {
        let mut r = rng::seeded(3);
        for n in [7, 16, 70] {
            let k = KernelSpec::Preset("power_decay(3, 0.4)".into()).materialize(n).unwrap();
            for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
                let w = sample_gaussian_invariant(n, sym, &mut r);
                let d = convolve_direct(&k, &w);
                let f = convolve_fft(&k, &w);
                assert!(d.max_abs_diff(&f) < 1e-12, "n = {n}: {}", d.max_abs_diff(&f));
            }
        }
    }

    #[test]
    fn filter_is_linear() {
        let mut r = rng::seeded(4);
        let phi = FilterSpec::convolution(generic_kernel(), 3.0, 1.0);
        let x = sample_gaussian_invariant(6, SymmetryClass::ComplexHermitian, &mut r);
        let y = sample_gaussian_invariant(6, SymmetryClass::ComplexHermitian, &mut r);
        let lhs = phi.apply(&x.scaled(1.5).add_scaled(-0.7, &y).unwrap()).unwrap();
        let rhs = phi.apply(&x).unwrap().scaled(1.5).add_scaled(-0.7, &phi.apply(&y).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
    }

    #[test]
    fn basis_images_match_apply() {
        let n = 5;
        let sym = SymmetryClass::ComplexHermitian;
        let phi = FilterSpec::convolution(generic_kernel(), 3.0, 1.0);
        let images = BasisImages::new(&phi, n, sym).unwrap();
        for (c, img) in images.layout.comps.iter().zip(&images.images) {
            let b = BasisMatrix { i: c.a, k: c.b, imaginary: c.part == Part::Im };
            let dense = basis_image(&phi, b, n, sym).unwrap();
            let mut sparse = HMatrix::zeros(n, sym).to_complex();
            for &(a, bb, v) in img {
                sparse[(a, bb)] += v;
            }
            for a in 0..n {
                for bb in 0..n {
                    assert!((dense.get(a, bb) - sparse[(a, bb)]).norm() < 1e-14);
                }
            }
        }
        assert!(matches!(
            basis_image(&phi, BasisMatrix::imag(0, 1), n, SymmetryClass::RealSymmetric),
            Err(Error::ImagBasisInRealClass)
        ));
    }

    #[test]
    fn decay_checks() {
        let n = 16;
        let sym = SymmetryClass::RealSymmetric;
        assert!(check_decay(&FilterSpec::identity(), n, sym, 7.0, 1.0).unwrap().passed);
        let phi = FilterSpec::convolution(KernelSpec::Preset("power_decay(3, 0.5)".into()), 3.0, 4.0);
        assert!(check_decay(&phi, n, sym, 3.0, 4.0).unwrap().passed);
        let fail = check_decay(&phi, n, sym, 4.0, 4.0).unwrap();
        assert!(!fail.passed);
        assert!(fail.witness.unwrap().distance >= 4);
    }

    #[test]
    fn constant_operator_fails_decay_at_max_distance() {
        let n = 4;
        let sym = SymmetryClass::RealSymmetric;
        let d = ComponentLayout::new(n, sym).len();
        let phi = FilterSpec {
            kind: FilterKind::ExplicitOperator { n, matrix: vec![0.2; d * d] },
            decay_exponent: 3.0,
            decay_constant: 1.0,
        };
        let report = check_decay(&phi, n, sym, 3.0, 1.0).unwrap();
        assert!(!report.passed);
        assert_eq!(report.witness.unwrap().distance, 2 * (n - 1));
    }

    #[test]
    fn stencil_lower_bound_is_point_six() {
        let phi = FilterSpec::convolution(KernelSpec::Preset("stencil5(0.1)".into()), 3.0, 1.0);
        let rep = check_lower_bound(&phi, 16, SymmetryClass::RealSymmetric, 0.5).unwrap();
        assert!((rep.min_value - 0.6).abs() < 1e-12);
        assert!(rep.passed);
        assert!(check_lower_bound(&FilterSpec::identity(), 16, SymmetryClass::RealSymmetric, 1.0).unwrap().passed);
        let neg = FilterSpec::convolution(KernelSpec::Preset("stencil5(0.4)".into()), 3.0, 1.0);
        let rep = check_lower_bound(&neg, 16, SymmetryClass::RealSymmetric, 0.1).unwrap();
        assert!(!rep.passed && rep.min_value < 0.0);
    }

    #[test]
    fn explicit_operator_lower_bound_matches_convolution_symbol() {
        let n = 4;
        let sym = SymmetryClass::RealSymmetric;
        let conv = FilterSpec::convolution(KernelSpec::Preset("stencil5(0.1)".into()), 3.0, 1.0);
        let op = operator_matrix(n, sym, |r| conv.apply(r)).unwrap();
        let layout = ComponentLayout::new(n, sym);
        let d = layout.len();
        let norms: Vec<f64> = layout.comps.iter().map(|c| layout.trace_weight(c).sqrt()).collect();
        // back to raw coordinates: M_raw = D^{-1} op D
        let matrix: Vec<f64> = (0..d * d).map(|i| op[(i / d, i % d)] * norms[i % d] / norms[i / d]).collect();
        let explicit = FilterSpec { kind: FilterKind::ExplicitOperator { n, matrix }, decay_exponent: 3.0, decay_constant: 1.0 };
        let mut r = rng::seeded(9);
        let w = sample_gaussian_invariant(n, sym, &mut r);
        assert!(explicit.apply(&w).unwrap().max_abs_diff(&conv.apply(&w).unwrap()) < 1e-14);
        let rep = check_lower_bound(&explicit, n, sym, 0.5).unwrap();
        // the symmetric subspace sees a subset of the symbol values, all >= 0.6
        assert!(rep.passed && rep.min_value >= 0.6 - 1e-12);
    }

    #[test]
    fn goe_covariance_tensor_is_scaled_identity() {
        let n = 6;
        let mut r = rng::seeded(12);
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            let spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
            let rr = sample_gaussian_invariant(n, sym, &mut r);
            let out = covariance_tensor_apply(&spec, 1, &rr).unwrap();
            let expect = rr.scaled(2.0 / (sym.beta() as f64 * n as f64));
            assert!(out.max_abs_diff(&expect) < 1e-14);
            let zero = covariance_tensor_apply(&spec, 2, &HMatrix::zeros(n, sym)).unwrap();
            assert_eq!(zero.max_abs(), 0.0);
        }
    }

    #[test]
    fn covariance_tensor_is_self_adjoint_psd() {
        for sym in [SymmetryClass::RealSymmetric, SymmetryClass::ComplexHermitian] {
            for n in [3, 5] {
                let mut spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
                spec.profile = CorrelationProfile::generic(sym, 0.3);
                spec.filter1 = FilterSpec::convolution(generic_kernel(), 3.0, 1.0);
                let op = operator_matrix(n, sym, |r| covariance_tensor_apply(&spec, 1, r)).unwrap();
                let d = op.nrows();
                for i in 0..d {
                    for j in 0..d {
                        assert!((op[(i, j)] - op[(j, i)]).abs() < 1e-13);
                    }
                }
                assert!(min_symmetric_eigenvalue(&op).unwrap() > -1e-13);
            }
        }
    }

    #[test]
    fn sparse_tensor_matches_brute_force_expectation_formula() {
        // E[W~ Tr(R W~)] = sum_beta v_beta Phi[B] Tr(R Phi[B]) written out with dense images
        let n = 4;
        let sym = SymmetryClass::ComplexHermitian;
        let mut spec = PairModelSpec::wigner(n, sym, 0.0, 1.0);
        spec.profile = CorrelationProfile::generic(sym, 0.5);
        spec.filter1 = FilterSpec::convolution(generic_kernel(), 3.0, 1.0);
        let mut r = rng::seeded(2);
        let rr = sample_gaussian_invariant(n, sym, &mut r);
        let layout = ComponentLayout::new(n, sym);
        let mut expect = HMatrix::zeros(n, sym);
        for c in &layout.comps {
            let v = layout.covariance(&spec.profile, c).v1;
            let b = BasisMatrix { i: c.a, k: c.b, imaginary: c.part == Part::Im };
            let img = basis_image(&spec.filter1, b, n, sym).unwrap();
            let mut tr = C64::new(0.0, 0.0);
            for a in 0..n {
                for bb in 0..n {
                    tr += rr.get(a, bb) * img.get(bb, a);
                }
            }
            assert!(tr.im.abs() < 1e-13);
            expect = expect.add_scaled(v * tr.re, &img).unwrap();
        }
        let got = covariance_tensor_apply(&spec, 1, &rr).unwrap();
        assert!(got.max_abs_diff(&expect) < 1e-14);
    }
}
