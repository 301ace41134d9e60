//! Spectra, resolvent observables and local eigenvalue statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{HMatrix, C64};
use crate::stats;

/// Sorted eigenvalues of a Hermitian matrix.
pub fn eigen_spectrum(h: &HMatrix) -> Result<Vec<f64>> {
    h.eigenvalues()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPair {
    pub lambdas1: Vec<f64>,
    pub lambdas2: Vec<f64>,
    pub seed: u64,
}

impl SpectrumPair {
    pub fn from_matrices(h1: &HMatrix, h2: &HMatrix, seed: u64) -> Result<Self> {
        Ok(SpectrumPair { lambdas1: eigen_spectrum(h1)?, lambdas2: eigen_spectrum(h2)?, seed })
    }
}

/// `<G(z)> = N^{-1} sum_i 1/(lambda_i - z)`.
pub fn resolvent_trace(lambdas: &[f64], z: C64) -> C64 {
    let s: C64 = lambdas.iter().map(|&l| 1.0 / (C64::new(l, 0.0) - z)).sum();
    s / lambdas.len() as f64
}

/// `<Im G(E + i eta)>`, computed without forming complex numbers.
pub fn im_resolvent_trace(lambdas: &[f64], e: f64, eta: f64) -> f64 {
    lambdas.iter().map(|&l| eta / ((l - e) * (l - e) + eta * eta)).sum::<f64>() / lambdas.len() as f64
}

/// `max_z |<G(z)> - <M(z)>| * N |Im z|` over `(z, <M(z)>)` points.
pub fn local_law_residual(lambdas: &[f64], points: &[(C64, C64)]) -> f64 {
    let n = lambdas.len() as f64;
    points
        .iter()
        .map(|&(z, m)| (resolvent_trace(lambdas, z) - m).norm() * n * z.im.abs())
        .fold(0.0, f64::max)
}

/// Poisson-smoothed empirical density `pi^{-1} <Im G(E + i eta)>`.
pub fn smoothed_density(lambdas: &[f64], energies: &[f64], eta: f64) -> Vec<f64> {
    energies
        .iter()
        .map(|&e| im_resolvent_trace(lambdas, e, eta) / std::f64::consts::PI)
        .collect()
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// An energy in the bulk with the density used for rescaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalWindow {
    pub energy: f64,
    pub rho: f64,
    pub k: usize,
}

impl LocalWindow {
    /// Fails with `NotInBulk` when `rho < kappa`.
    pub fn new(energy: f64, rho: f64, kappa: f64, k: usize) -> Result<Self> {
        if !(rho >= kappa) {
            return Err(Error::NotInBulk { energy, rho, kappa });
        }
        Ok(LocalWindow { energy, rho, k })
    }

    pub fn rescale(&self, lambda: f64, n: usize) -> f64 {
        (lambda - self.energy) * n as f64 * self.rho
    }
}

/// The `k` eigenvalues closest to the window energy, rescaled, in ascending
/// order. Ties go to the smaller index.
pub fn nearest_fluctuations(lambdas: &[f64], window: &LocalWindow) -> Vec<f64> {
    let n = lambdas.len();
    let k = window.k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let da = (lambdas[a] - window.energy).abs();
        let db = (lambdas[b] - window.energy).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| window.rescale(lambdas[i], n)).collect()
}

/// Rescaled eigenvalues with `|x| <= radius`, tagged with their index.
pub fn rescaled_within(lambdas: &[f64], window: &LocalWindow, radius: f64) -> Vec<(usize, f64)> {
    let n = lambdas.len();
    if radius.is_infinite() {
        return lambdas.iter().enumerate().map(|(i, &l)| (i, window.rescale(l, n))).collect();
    }
    let half = radius / (n as f64 * window.rho);
    let lo = lambdas.partition_point(|&l| l < window.energy - half);
    let hi = lambdas.partition_point(|&l| l <= window.energy + half);
    (lo..hi)
        .map(|i| (i, window.rescale(lambdas[i], n)))
        .filter(|(_, x)| x.abs() <= radius)
        .collect()
}

/// One-variable building blocks for product test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile1d {
    /// `(1 - (x/width)^2)^3` on `|x| < width`.
    Bump { width: f64 },
    /// `exp(-x^2 / (2 width^2)) cos(freq x)`.
    GaussCos { width: f64, freq: f64 },
    One,
}

impl Profile1d {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile1d::Bump { width } => {
                let u = x / width;
                if u.abs() < 1.0 {
                    (1.0 - u * u).powi(3)
                } else {
                    0.0
                }
            }
            Profile1d::GaussCos { width, freq } => (-x * x / (2.0 * width * width)).exp() * (freq * x).cos(),
            Profile1d::One => 1.0,
        }
    }

    /// Radius outside which the profile is (numerically) zero.
    pub fn radius(&self) -> f64 {
        match self {
            Profile1d::Bump { width } => *width,
            Profile1d::GaussCos { width, .. } => 9.0 * width,
            Profile1d::One => f64::INFINITY,
        }
    }
}

/// Tabulated `F` on a uniform grid, evaluated by bicubic (Catmull-Rom)
/// interpolation and zero outside the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedF {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub y0: f64,
    pub dy: f64,
    pub ny: usize,
    /// Row-major `nx x ny`.
    pub values: Vec<f64>,
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    let [p0, p1, p2, p3] = p;
    0.5 * (2.0 * p1
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t)
}

impl TabulatedF {
    pub fn from_fn(x0: f64, dx: f64, nx: usize, y0: f64, dy: f64, ny: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                values.push(f(x0 + i as f64 * dx, y0 + j as f64 * dy));
            }
        }
        TabulatedF { x0, dx, nx, y0, dy, ny, values }
    }

    fn at(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.nx as isize - 1) as usize;
        let j = j.clamp(0, self.ny as isize - 1) as usize;
        self.values[i * self.ny + j]
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.x0) / self.dx;
        let v = (y - self.y0) / self.dy;
        if u < 0.0 || v < 0.0 || u > (self.nx - 1) as f64 || v > (self.ny - 1) as f64 {
            return 0.0;
        }
        let (iu, iv) = (u.floor() as isize, v.floor() as isize);
        let (tu, tv) = (u - iu as f64, v - iv as f64);
        let mut col = [0.0; 4];
        for (a, c) in col.iter_mut().enumerate() {
            let i = iu - 1 + a as isize;
            *c = catmull_rom([self.at(i, iv - 1), self.at(i, iv), self.at(i, iv + 1), self.at(i, iv + 2)], tv);
        }
        catmull_rom(col, tu)
    }

    fn radius(&self) -> f64 {
        let xs = [self.x0, self.x0 + (self.nx - 1) as f64 * self.dx];
        let ys = [self.y0, self.y0 + (self.ny - 1) as f64 * self.dy];
        xs.iter().chain(&ys).map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Test function `F(x, y)` for `m = n = 1` statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    Product { f: Profile1d, g: Profile1d },
    Tabulated(TabulatedF),
}

impl TestFunction {
    pub fn bump_product(width: f64) -> Self {
        TestFunction::Product { f: Profile1d::Bump { width }, g: Profile1d::Bump { width } }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Product { f, g } => f.eval(x) * g.eval(y),
            TestFunction::Tabulated(t) => t.eval(x, y),
        }
    }

    /// Radii in `x` and `y` outside which `F` vanishes.
    pub fn radii(&self) -> (f64, f64) {
        match self {
            TestFunction::Zero => (0.0, 0.0),
            TestFunction::Product { f, g } => (f.radius(), g.radius()),
            TestFunction::Tabulated(t) => (t.radius(), t.radius()),
        }
    }

    /// `int F(x, x) dx` by composite Simpson on the support.
    pub fn diagonal_integral(&self) -> f64 {
        let (rx, ry) = self.radii();
        let r = rx.min(ry).min(50.0);
        if r == 0.0 {
            return 0.0;
        }
        let m = 4000;
        let h = 2.0 * r / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let x = -r + i as f64 * h;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.eval(x, x);
        }
        acc * h / 3.0
    }
}

/// `C_k = ((N-k)! N^k / N!) rho^k`.
pub fn normalizer(n: usize, k: usize, rho: f64) -> f64 {
    (0..k).map(|i| n as f64 / (n - i) as f64).product::<f64>() * rho.powi(k as i32)
}

type Tagged = Vec<(usize, f64)>;

fn pair_sum(f: &TestFunction, xs: &[(usize, f64)], ys: &[(usize, f64)]) -> f64 {
    if let TestFunction::Product { f: p, g: q } = f {
        let a: f64 = xs.iter().map(|&(_, x)| p.eval(x)).sum();
        let b: f64 = ys.iter().map(|&(_, y)| q.eval(y)).sum();
        return a * b;
    }
    xs.iter().map(|&(_, x)| ys.iter().map(|&(_, y)| f.eval(x, y)).sum::<f64>()).sum()
}

fn matched_sum(f: &TestFunction, xs: &[(usize, f64)], ys: &[(usize, f64)]) -> f64 {
    let mut acc = 0.0;
    let mut j = 0;
    for &(i, x) in xs {
        while j < ys.len() && ys[j].0 < i {
            j += 1;
        }
        if j < ys.len() && ys[j].0 == i {
            acc += f.eval(x, ys[j].1);
        }
    }
    acc
}

/// Monte Carlo estimate of the left side of the factorization identity for
/// `m = n = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLocalStatistic {
    /// `C_1 C_1 E sum_{i,j} F(x_i, y_j)`.
    pub joint: f64,
    /// Same with `x` and `y` taken from independent samples.
    pub product: f64,
    pub gap: f64,
    pub stderr: f64,
    /// Index-matched part `C_1 C_1 E sum_i F(x_i, y_i)`, with its SE.
    pub matched: f64,
    pub matched_stderr: f64,
    pub pairs: usize,
}

/// Split-half estimator: sample `k` is paired with sample `k + K/2` to form
/// the product term, so the `K/2` paired differences are independent.
pub fn joint_local_statistic(
    samples: &[SpectrumPair],
    f: &TestFunction,
    w1: &LocalWindow,
    w2: &LocalWindow,
    tolerance: Option<f64>,
) -> Result<JointLocalStatistic> {
    let half = samples.len() / 2;
    if half == 0 {
        return Err(Error::InsufficientSamples { stderr: f64::INFINITY, tolerance: tolerance.unwrap_or(0.0) });
    }
    let (rx, ry) = f.radii();
    let n1 = samples[0].lambdas1.len();
    let n2 = samples[0].lambdas2.len();
    let c = normalizer(n1, 1, w1.rho) * normalizer(n2, 1, w2.rho);
    let windows: Vec<(Tagged, Tagged)> = samples
        .iter()
        .map(|s| (rescaled_within(&s.lambdas1, w1, rx), rescaled_within(&s.lambdas2, w2, ry)))
        .collect();
    let (mut joint, mut prod, mut diff, mut matched) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..half {
        let (xa, ya) = &windows[k];
        let (xb, yb) = &windows[k + half];
        let j = 0.5 * (pair_sum(f, xa, ya) + pair_sum(f, xb, yb)) * c;
        let p = 0.5 * (pair_sum(f, xa, yb) + pair_sum(f, xb, ya)) * c;
        joint.push(j);
        prod.push(p);
        diff.push(j - p);
        matched.push(0.5 * (matched_sum(f, xa, ya) + matched_sum(f, xb, yb)) * c);
    }
    let stderr = if half > 1 { stats::std_err(&diff) } else { f64::INFINITY };
    if let Some(tol) = tolerance {
        if !(stderr <= tol) {
            return Err(Error::InsufficientSamples { stderr, tolerance: tol });
        }
    }
    Ok(JointLocalStatistic {
        joint: stats::mean(&joint),
        product: stats::mean(&prod),
        gap: stats::mean(&diff),
        stderr,
        matched: stats::mean(&matched),
        matched_stderr: if half > 1 { stats::std_err(&matched) } else { f64::INFINITY },
        pairs: half,
    })
}

/// The identical-matrix contribution `rho(E) int F(x,x) p_1(E + x/(rho N)) dx`
/// with `p_1` replaced by the self-consistent density, i.e.
/// `rho(E)^2 int F(x,x) dx`.
pub fn diagonal_term(f: &TestFunction, rho: f64) -> f64 {
    rho * rho * f.diagonal_integral()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

/// Pearson correlation of nearest-eigenvalue fluctuations with a 95%
/// percentile bootstrap interval.
pub fn fluctuation_correlation(xs: &[f64], ys: &[f64], bootstrap: usize, seed: u64) -> CorrelationEstimate {
    let value = stats::pearson(xs, ys);
    let (ci_low, ci_high) = if bootstrap > 0 {
        stats::bootstrap_pearson_ci(xs, ys, bootstrap, 0.95, seed)
    } else {
        (f64::NAN, f64::NAN)
    };
    CorrelationEstimate { value, ci_low, ci_high, samples: xs.len() }
}

/// `k = 1` fluctuations of both matrices of a spectrum pair.
pub fn nearest_pair(pair: &SpectrumPair, w1: &LocalWindow, w2: &LocalWindow) -> (f64, f64) {
    let one1 = LocalWindow { k: 1, ..*w1 };
    let one2 = LocalWindow { k: 1, ..*w2 };
    (nearest_fluctuations(&pair.lambdas1, &one1)[0], nearest_fluctuations(&pair.lambdas2, &one2)[0])
}

/// Correlation of `Tr H1^2` and `Tr H2^2` across samples.
pub fn trace_square_correlation(tr1: &[f64], tr2: &[f64], bootstrap: usize, seed: u64) -> CorrelationEstimate {
    fluctuation_correlation(tr1, tr2, bootstrap, seed)
}

/// Mean consecutive-gap ratio over eigenvalues inside `interval`.
pub fn gap_ratio_statistic(lambdas: &[f64], interval: (f64, f64)) -> Result<f64> {
    let inside: Vec<f64> = lambdas.iter().copied().filter(|&l| l >= interval.0 && l <= interval.1).collect();
    if inside.len() < 50 {
        return Err(Error::InvalidArgument(format!("gap ratio needs >= 50 bulk eigenvalues, got {}", inside.len())));
    }
    let gaps: Vec<f64> = inside.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = gaps
        .windows(2)
        .map(|g| {
            let (a, b) = (g[0], g[1]);
            if a.max(b) == 0.0 {
                1.0
            } else {
                a.min(b) / a.max(b)
            }
        })
        .collect();
    Ok(stats::mean(&ratios))
}

/// `R = prod_p <Im G1(z1_p)> prod_q <Im G2(z2_q)>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenObservable {
    pub z1: Vec<(f64, f64)>,
    pub z2: Vec<(f64, f64)>,
    pub factors: Vec<f64>,
    pub value: f64,
}

pub fn green_observable(pair: &SpectrumPair, z1: &[C64], z2: &[C64]) -> GreenObservable {
    let mut factors = Vec::with_capacity(z1.len() + z2.len());
    for z in z1 {
        factors.push(im_resolvent_trace(&pair.lambdas1, z.re, z.im));
    }
    for z in z2 {
        factors.push(im_resolvent_trace(&pair.lambdas2, z.re, z.im));
    }
    GreenObservable {
        z1: z1.iter().map(|z| (z.re, z.im)).collect(),
        z2: z2.iter().map(|z| (z.re, z.im)).collect(),
        value: factors.iter().product(),
        factors,
    }
}
