//! Correlated Wigner-type pairs: model description, assumption checks and
//! samplers.
//!
//! A pair is `H_j = A_j + Phi_j[W_j]` where `W_1, W_2` have independent entries
//! (up to symmetry) and the only cross-correlation is between matching
//! entries `w1_ab`, `w2_ab`. Variance profiles are stored in units of `1/N`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filtering::FilterSpec;
use crate::linalg::{HMatrix, C64};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    RealSymmetric,
    ComplexHermitian,
}

impl SymmetryClass {
    pub fn beta(self) -> u8 {
        match self {
            SymmetryClass::RealSymmetric => 1,
            SymmetryClass::ComplexHermitian => 2,
        }
    }

    pub fn is_complex(self) -> bool {
        self == SymmetryClass::ComplexHermitian
    }
}

/// A symmetric per-entry field on `[N] x [N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileField {
    Constant {
        off_diagonal: f64,
        diagonal: f64,
    },
    /// `base + amplitude * cos(2 pi (a+b)/N) * cos(2 pi (a-b)/N)`, with the
    /// diagonal additionally multiplied by `diagonal_scale`.
    Modulated {
        base: f64,
        amplitude: f64,
        diagonal_scale: f64,
    },
    /// Row-major `n x n` values.
    Explicit {
        n: usize,
        values: Vec<f64>,
    },
}

impl ProfileField {
    pub fn constant(v: f64) -> Self {
        ProfileField::Constant { off_diagonal: v, diagonal: v }
    }

    pub fn value(&self, a: usize, b: usize, n: usize) -> f64 {
        match self {
            ProfileField::Constant { off_diagonal, diagonal } => {
                if a == b {
                    *diagonal
                } else {
                    *off_diagonal
                }
            }
            ProfileField::Modulated { base, amplitude, diagonal_scale } => {
                let tau = std::f64::consts::TAU;
                let s = (tau * (a + b) as f64 / n as f64).cos();
                let d = (tau * (a as f64 - b as f64) / n as f64).cos();
                let v = base + amplitude * s * d;
                if a == b {
                    v * diagonal_scale
                } else {
                    v
                }
            }
            ProfileField::Explicit { n: m, values } => {
                debug_assert_eq!(*m, n);
                values[a * m + b]
            }
        }
    }

    fn explicit_dim(&self) -> Option<usize> {
        match self {
            ProfileField::Explicit { n, .. } => Some(*n),
            _ => None,
        }
    }
}

/// Second-moment description of the initial signal `(W_1, W_2)`.
///
/// `variance1`/`variance2` hold `N * E|w_ab|^2`; `cross` holds the correlation
/// coefficient of `w1_ab` and `w2_ab` (applied separately to the real and
/// imaginary parts in the complex class). `alpha` is stored explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub variance1: ProfileField,
    pub variance2: ProfileField,
    pub cross: ProfileField,
    pub alpha: f64,
}

impl CorrelationProfile {
    /// GOE/GUE-normalised variances with a constant cross-correlation.
    pub fn wigner(symmetry: SymmetryClass, rho: f64, alpha: f64) -> Self {
        let diag = match symmetry {
            SymmetryClass::RealSymmetric => 2.0,
            SymmetryClass::ComplexHermitian => 1.0,
        };
        let var = ProfileField::Constant { off_diagonal: 1.0, diagonal: diag };
        CorrelationProfile { variance1: var.clone(), variance2: var, cross: ProfileField::constant(rho), alpha }
    }

    /// Inhomogeneous variances and a sign-changing cross-correlation that
    /// saturates `|rho| = 1 - alpha` at some entries.
    pub fn generic(symmetry: SymmetryClass, alpha: f64) -> Self {
        let diag = match symmetry {
            SymmetryClass::RealSymmetric => 2.0,
            SymmetryClass::ComplexHermitian => 1.0,
        };
        CorrelationProfile {
            variance1: ProfileField::Modulated { base: 1.0, amplitude: 0.4, diagonal_scale: diag },
            variance2: ProfileField::Modulated { base: 1.2, amplitude: -0.3, diagonal_scale: diag },
            cross: ProfileField::Modulated { base: 0.0, amplitude: 1.0 - alpha, diagonal_scale: 1.0 },
            alpha,
        }
    }

    /// `E|w_j,ab|^2` (already divided by N).
    pub fn variance(&self, j: usize, a: usize, b: usize, n: usize) -> f64 {
        let field = if j == 1 { &self.variance1 } else { &self.variance2 };
        field.value(a.min(b), a.max(b), n) / n as f64
    }

    pub fn rho(&self, a: usize, b: usize, n: usize) -> f64 {
        self.cross.value(a.min(b), a.max(b), n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    Gaussian,
    /// Symmetric two-point law `+-sigma`.
    ShiftedBernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformationSpec {
    Zero,
    Diagonal { values: Vec<f64> },
    /// `+value` on the first half of the diagonal and `-value` on the rest.
    Halves { value: f64 },
    /// Row-major dense matrix; `im` only for the complex class.
    Dense { n: usize, re: Vec<f64>, im: Option<Vec<f64>> },
}

impl DeformationSpec {
    pub fn materialize(&self, n: usize, symmetry: SymmetryClass) -> Result<HMatrix> {
        match self {
            DeformationSpec::Zero => Ok(HMatrix::zeros(n, symmetry)),
            DeformationSpec::Diagonal { values } => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: values.len() });
                }
                Ok(HMatrix::from_diagonal(values, symmetry))
            }
            DeformationSpec::Halves { value } => {
                let values: Vec<f64> = (0..n).map(|i| if i < n / 2 { *value } else { -*value }).collect();
                Ok(HMatrix::from_diagonal(&values, symmetry))
            }
            DeformationSpec::Dense { n: m, re, im } => {
                if *m != n || re.len() != n * n {
                    return Err(Error::DimensionMismatch { expected: n, got: *m });
                }
                Ok(match symmetry {
                    SymmetryClass::RealSymmetric => {
                        HMatrix::Real(faer::Mat::from_fn(n, n, |i, j| re[i * n + j]))
                    }
                    SymmetryClass::ComplexHermitian => {
                        let im = im.clone().unwrap_or_else(|| vec![0.0; n * n]);
                        HMatrix::Complex(faer::Mat::from_fn(n, n, |i, j| C64::new(re[i * n + j], im[i * n + j])))
                    }
                })
            }
        }
    }
}

/// Full description of a correlated pair model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairModelSpec {
    pub n: usize,
    pub symmetry: SymmetryClass,
    pub profile: CorrelationProfile,
    pub deformation1: DeformationSpec,
    pub deformation2: DeformationSpec,
    pub filter1: FilterSpec,
    pub filter2: FilterSpec,
    pub entry_law: EntryLaw,
}

impl PairModelSpec {
    /// Undeformed, unfiltered Wigner pair with constant cross-correlation.
    pub fn wigner(n: usize, symmetry: SymmetryClass, rho: f64, alpha: f64) -> Self {
        PairModelSpec {
            n,
            symmetry,
            profile: CorrelationProfile::wigner(symmetry, rho, alpha),
            deformation1: DeformationSpec::Zero,
            deformation2: DeformationSpec::Zero,
            filter1: FilterSpec::identity(),
            filter2: FilterSpec::identity(),
            entry_law: EntryLaw::Gaussian,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        PairModelSpec { n, ..self.clone() }
    }

    pub fn filter(&self, j: usize) -> &FilterSpec {
        if j == 1 {
            &self.filter1
        } else {
            &self.filter2
        }
    }

    pub fn deformation(&self, j: usize) -> Result<HMatrix> {
        let d = if j == 1 { &self.deformation1 } else { &self.deformation2 };
        d.materialize(self.n, self.symmetry)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        hash_json(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("model types always serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Real or imaginary part of an upper-triangular entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    Re,
    Im,
}

/// One real coordinate of `Sym_beta(N)`: the real or imaginary part of
/// entry `(a, b)` with `a <= b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Component {
    pub a: usize,
    pub b: usize,
    pub part: Part,
}

impl Component {
    pub fn is_diagonal(&self) -> bool {
        self.a == self.b
    }
}

/// The real coordinates of `Sym_beta(N)` in a fixed order: row-major over
/// `a <= b`, real part before imaginary part.
#[derive(Clone, Debug)]
pub struct ComponentLayout {
    pub n: usize,
    pub symmetry: SymmetryClass,
    pub comps: Vec<Component>,
}

impl ComponentLayout {
    pub fn new(n: usize, symmetry: SymmetryClass) -> Self {
        let mut comps = Vec::with_capacity(n * (n + 1) / 2 * symmetry.beta() as usize);
        for a in 0..n {
            for b in a..n {
                comps.push(Component { a, b, part: Part::Re });
                if symmetry.is_complex() && a < b {
                    comps.push(Component { a, b, part: Part::Im });
                }
            }
        }
        ComponentLayout { n, symmetry, comps }
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn assemble(&self, values: &[f64]) -> HMatrix {
        let mut h = HMatrix::zeros(self.n, self.symmetry);
        match &mut h {
            HMatrix::Real(m) => {
                for (c, &v) in self.comps.iter().zip(values) {
                    m[(c.a, c.b)] = v;
                    m[(c.b, c.a)] = v;
                }
            }
            HMatrix::Complex(m) => {
                for (c, &v) in self.comps.iter().zip(values) {
                    match c.part {
                        Part::Re => {
                            m[(c.a, c.b)].re = v;
                            m[(c.b, c.a)].re = v;
                        }
                        Part::Im => {
                            m[(c.a, c.b)].im = v;
                            m[(c.b, c.a)].im = -v;
                        }
                    }
                }
            }
        }
        h
    }

    pub fn extract(&self, h: &HMatrix) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| {
                let v = h.get(c.a, c.b);
                match c.part {
                    Part::Re => v.re,
                    Part::Im => v.im,
                }
            })
            .collect()
    }

    /// Variance of this coordinate for the invariant Gaussian ensemble
    /// (GOE: `(1 + delta_ab)/N`; GUE: `1/(2N)` off the diagonal, `1/N` on it).
    pub fn invariant_variance(&self, c: &Component) -> f64 {
        let n = self.n as f64;
        match (self.symmetry, c.is_diagonal()) {
            (SymmetryClass::RealSymmetric, true) => 2.0 / n,
            (SymmetryClass::RealSymmetric, false) => 1.0 / n,
            (SymmetryClass::ComplexHermitian, true) => 1.0 / n,
            (SymmetryClass::ComplexHermitian, false) => 0.5 / n,
        }
    }

    /// Weight `Tr(E_c E_c)` of the coordinate in the trace inner product.
    pub fn trace_weight(&self, c: &Component) -> f64 {
        if c.is_diagonal() {
            1.0
        } else {
            2.0
        }
    }

    /// Joint 2x2 covariance of this coordinate in `W_1` and `W_2`.
    pub fn covariance(&self, profile: &CorrelationProfile, c: &Component) -> Cov2 {
        let n = self.n;
        let part_share = if self.symmetry.is_complex() && !c.is_diagonal() { 0.5 } else { 1.0 };
        let v1 = profile.variance(1, c.a, c.b, n) * part_share;
        let v2 = profile.variance(2, c.a, c.b, n) * part_share;
        let rho = profile.rho(c.a, c.b, n);
        Cov2 { v1, v2, rho }
    }
}

/// Covariance of a pair of real coordinates: variances and correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cov2 {
    pub v1: f64,
    pub v2: f64,
    pub rho: f64,
}

impl Cov2 {
    pub fn cross(&self) -> f64 {
        self.rho * (self.v1 * self.v2).sqrt()
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let c = self.cross();
        [[self.v1, c], [c, self.v2]]
    }
}

/// Default constants `c0`, `C0` used by [`validate_spec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationConstants {
    pub c0: f64,
    pub c_big: f64,
}

impl Default for ValidationConstants {
    fn default() -> Self {
        ValidationConstants { c0: 0.5, c_big: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub index: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, failure: Option<(String, Option<(usize, usize)>)>) {
        let (passed, detail, index) = match failure {
            None => (true, "ok".to_string(), None),
            Some((d, i)) => (false, d, i),
        };
        self.checks.push(CheckResult { name: name.into(), passed, detail, index });
    }
}

pub const CHECK_DIMENSIONS: &str = "dimensions";
pub const CHECK_ALPHA: &str = "alpha_range";
pub const CHECK_VARIANCE: &str = "variance_bounds";
pub const CHECK_DECORRELATION: &str = "decorrelation";
pub const CHECK_CROSS_SYMMETRY: &str = "cross_symmetry";
pub const CHECK_DEFORMATION_HERMITIAN: &str = "deformation_hermitian";
pub const CHECK_DEFORMATION_NORM: &str = "deformation_norm";
pub const CHECK_FILTERS: &str = "filters";

/// Checks the model assumptions; never fails, the report carries failures.
pub fn validate_spec(spec: &PairModelSpec, constants: ValidationConstants) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = spec.n;
    let p = &spec.profile;

    let mut dim_failure = None;
    if n == 0 {
        dim_failure = Some(("n must be positive".to_string(), None));
    }
    for field in [&p.variance1, &p.variance2, &p.cross] {
        if let Some(m) = field.explicit_dim() {
            if m != n {
                dim_failure = Some((format!("explicit profile has n = {m}, model has n = {n}"), None));
            }
            if let ProfileField::Explicit { values, .. } = field {
                if values.len() != m * m {
                    dim_failure = Some((format!("explicit profile has {} values, expected {}", values.len(), m * m), None));
                }
            }
        }
    }
    let dims_ok = dim_failure.is_none();
    report.push(CHECK_DIMENSIONS, dim_failure);
    if !dims_ok {
        return report;
    }

    let alpha_fail = if p.alpha > 0.0 && p.alpha <= 1.0 {
        None
    } else {
        Some((format!("alpha = {} not in (0, 1]", p.alpha), None))
    };
    report.push(CHECK_ALPHA, alpha_fail);

    let mut var_fail = None;
    'outer: for j in 1..=2 {
        let field = if j == 1 { &p.variance1 } else { &p.variance2 };
        for a in 0..n {
            for b in 0..n {
                let v = field.value(a, b, n);
                if !(v >= constants.c0 && v <= constants.c_big) {
                    var_fail = Some((
                        format!("N*E|w{j}_ab|^2 = {v} outside [{}, {}]", constants.c0, constants.c_big),
                        Some((a, b)),
                    ));
                    break 'outer;
                }
                if field.value(b, a, n) != v {
                    var_fail = Some((format!("variance profile {j} not symmetric"), Some((a, b))));
                    break 'outer;
                }
            }
        }
    }
    report.push(CHECK_VARIANCE, var_fail);

    let bound = 1.0 - p.alpha;
    let mut decorr_fail = None;
    let mut sym_fail = None;
    for a in 0..n {
        for b in 0..n {
            let r = p.cross.value(a, b, n);
            if decorr_fail.is_none() && !(r.abs() <= bound + 1e-15) {
                decorr_fail = Some((format!("|rho_ab| = {} exceeds 1 - alpha = {bound}", r.abs()), Some((a, b))));
            }
            if sym_fail.is_none() && p.cross.value(b, a, n) != r {
                sym_fail = Some(("rho_ab != rho_ba".to_string(), Some((a, b))));
            }
        }
    }
    report.push(CHECK_DECORRELATION, decorr_fail);
    report.push(CHECK_CROSS_SYMMETRY, sym_fail);

    let mut herm_fail = None;
    let mut norm_fail = None;
    for j in 1..=2 {
        match spec.deformation(j) {
            Err(e) => {
                herm_fail = Some((format!("deformation {j}: {e}"), None));
            }
            Ok(a) => {
                if herm_fail.is_none() {
                    if let Some((x, y)) = first_non_hermitian(&a) {
                        herm_fail = Some((format!("deformation {j} is not Hermitian"), Some((x, y))));
                    }
                }
                if norm_fail.is_none() {
                    let norm = a.operator_norm().unwrap_or(f64::INFINITY);
                    if !(norm <= constants.c_big) {
                        norm_fail = Some((format!("||A{j}|| = {norm} exceeds C0 = {}", constants.c_big), None));
                    }
                }
            }
        }
    }
    report.push(CHECK_DEFORMATION_HERMITIAN, herm_fail);
    report.push(CHECK_DEFORMATION_NORM, norm_fail);

    let mut filt_fail = None;
    for j in 1..=2 {
        if let Err(e) = spec.filter(j).validate(n, spec.symmetry) {
            filt_fail = Some((format!("filter {j}: {e}"), None));
        }
    }
    report.push(CHECK_FILTERS, filt_fail);
    report
}

fn first_non_hermitian(a: &HMatrix) -> Option<(usize, usize)> {
    let n = a.n();
    for i in 0..n {
        for j in i..n {
            let d = a.get(i, j) - a.get(j, i).conj();
            if d.norm() > 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// One realization of a pair together with its pre-filter signal.
#[derive(Clone, Debug)]
pub struct MatrixPairSample {
    pub w1: HMatrix,
    pub w2: HMatrix,
    pub h1: HMatrix,
    pub h2: HMatrix,
    pub seed: u64,
    pub spec_hash: String,
}

impl MatrixPairSample {
    pub fn h(&self, j: usize) -> &HMatrix {
        if j == 1 {
            &self.h1
        } else {
            &self.h2
        }
    }
}

/// Validated spec with its deformations and per-coordinate covariances
/// precomputed, for drawing many samples.
#[derive(Clone, Debug)]
pub struct PairSampler {
    spec: PairModelSpec,
    layout: ComponentLayout,
    covs: Vec<Cov2>,
    a1: HMatrix,
    a2: HMatrix,
    hash: String,
}

impl PairSampler {
    pub fn new(spec: &PairModelSpec) -> Result<Self> {
        let report = validate_spec(spec, ValidationConstants::default());
        if !report.passed() {
            let msg: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            return Err(Error::InvalidSpec(msg.join("; ")));
        }
        let layout = ComponentLayout::new(spec.n, spec.symmetry);
        let covs: Vec<Cov2> = layout.comps.iter().map(|c| layout.covariance(&spec.profile, c)).collect();
        if spec.entry_law == EntryLaw::ShiftedBernoulli {
            if let Some((c, cov)) = layout.comps.iter().zip(&covs).find(|(_, cov)| cov.rho < 0.0) {
                return Err(Error::UnrealizableCorrelation { a: c.a, b: c.b, rho: cov.rho });
            }
        }
        Ok(PairSampler {
            a1: spec.deformation(1)?,
            a2: spec.deformation(2)?,
            hash: spec.content_hash(),
            spec: spec.clone(),
            layout,
            covs,
        })
    }

    pub fn spec(&self) -> &PairModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ComponentLayout {
        &self.layout
    }

    /// Raw signal pair `(W_1, W_2)` as coordinate vectors.
    pub fn sample_signal<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut x1 = Vec::with_capacity(self.covs.len());
        let mut x2 = Vec::with_capacity(self.covs.len());
        for cov in &self.covs {
            let (u, v) = draw_pair(cov, self.spec.entry_law, rng);
            x1.push(u);
            x2.push(v);
        }
        (x1, x2)
    }

    /// `H_j = A_j + Phi_j[W_j]`.
    pub fn finish(&self, w1: HMatrix, w2: HMatrix, seed: u64) -> Result<MatrixPairSample> {
        let h1 = self.a1.add_scaled(1.0, &self.spec.filter1.apply(&w1)?)?;
        let h2 = self.a2.add_scaled(1.0, &self.spec.filter2.apply(&w2)?)?;
        Ok(MatrixPairSample { w1, w2, h1, h2, seed, spec_hash: self.hash.clone() })
    }

    pub fn sample(&self, seed: u64) -> Result<MatrixPairSample> {
        let mut rng = rng::seeded(seed);
        let (x1, x2) = self.sample_signal(&mut rng);
        let w1 = self.layout.assemble(&x1);
        let w2 = self.layout.assemble(&x2);
        self.finish(w1, w2, seed)
    }
}

fn draw_pair<R: Rng + ?Sized>(cov: &Cov2, law: EntryLaw, rng: &mut R) -> (f64, f64) {
    let (s1, s2) = (cov.v1.sqrt(), cov.v2.sqrt());
    let rho = cov.rho;
    match law {
        EntryLaw::Gaussian => {
            if rho >= 0.0 {
                let g0: f64 = rng.sample(StandardNormal);
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                (s1 * (a * g0 + b * g1), s2 * (a * g0 + b * g2))
            } else {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                (s1 * g1, s2 * (rho * g1 + (1.0 - rho * rho).sqrt() * g2))
            }
        }
        EntryLaw::ShiftedBernoulli => {
            // shared sign with probability rho, independent signs otherwise
            let u: f64 = rng.random();
            let b0 = sign(rng);
            let b1 = sign(rng);
            let b2 = sign(rng);
            if u < rho {
                (s1 * b0, s2 * b0)
            } else {
                (s1 * b1, s2 * b2)
            }
        }
    }
}

fn sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draws one pair from `spec`; validates first.
pub fn sample_pair(spec: &PairModelSpec, seed: u64) -> Result<MatrixPairSample> {
    PairSampler::new(spec)?.sample(seed)
}

/// GOE (beta = 1) or GUE (beta = 2) with off-diagonal `E|w|^2 = 1/N`.
pub fn sample_gaussian_invariant<R: Rng + ?Sized>(n: usize, symmetry: SymmetryClass, rng: &mut R) -> HMatrix {
    let layout = ComponentLayout::new(n, symmetry);
    let values: Vec<f64> = layout
        .comps
        .iter()
        .map(|c| {
            let g: f64 = rng.sample(StandardNormal);
            g * layout.invariant_variance(c).sqrt()
        })
        .collect();
    layout.assemble(&values)
}

fn descriptor_hash(kind: &str, n: usize, symmetry: SymmetryClass, alpha: f64) -> String {
    hash_json(&(kind, n, symmetry, alpha))
}

/// Pair `W_j = W + sqrt(alpha) W_G^(j)` with `W` a GOE/GUE matrix and
/// independent invariant `W_G^(j)`; the same deformation is added to both.
pub fn sample_example_optimal(
    n: usize,
    symmetry: SymmetryClass,
    alpha: f64,
    deformation: &DeformationSpec,
    seed: u64,
) -> Result<MatrixPairSample> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    let mut rng = rng::seeded(seed);
    let w = sample_gaussian_invariant(n, symmetry, &mut rng);
    let g1 = sample_gaussian_invariant(n, symmetry, &mut rng);
    let g2 = sample_gaussian_invariant(n, symmetry, &mut rng);
    let s = alpha.sqrt();
    let w1 = w.add_scaled(s, &g1)?;
    let w2 = w.add_scaled(s, &g2)?;
    let a = deformation.materialize(n, symmetry)?;
    let h1 = a.add_scaled(1.0, &w1)?;
    let h2 = a.add_scaled(1.0, &w2)?;
    Ok(MatrixPairSample { w1, w2, h1, h2, seed, spec_hash: descriptor_hash("example_optimal", n, symmetry, alpha) })
}

/// Macroscopic example `H_j = sqrt(1 - alpha) W_0 + sqrt(alpha) W_j` built
/// from three independent GOE matrices.
pub fn sample_trace_example(n: usize, alpha: f64, seed: u64) -> Result<MatrixPairSample> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let sym = SymmetryClass::RealSymmetric;
    let mut rng = rng::seeded(seed);
    let w0 = sample_gaussian_invariant(n, sym, &mut rng);
    let wa = sample_gaussian_invariant(n, sym, &mut rng);
    let wb = sample_gaussian_invariant(n, sym, &mut rng);
    let shared = w0.scaled((1.0 - alpha).sqrt());
    let h1 = shared.add_scaled(alpha.sqrt(), &wa)?;
    let h2 = shared.add_scaled(alpha.sqrt(), &wb)?;
    Ok(MatrixPairSample {
        w1: h1.clone(),
        w2: h2.clone(),
        h1,
        h2,
        seed,
        spec_hash: descriptor_hash("trace_example", n, sym, alpha),
    })
}
