use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentKind, ExperimentParams, GridPoint, SCHEMA_VERSION};
use super::record::{ExperimentRecord, SampleRow};
use crate::error::{Error, Result};
use crate::gft_flow::{build_entry_data, evolve_exact, FlowState};
use crate::linalg::C64;
use crate::mde::{linspace, scdos, solve_mde, free_convolution_check, MdeOptions, SelfEnergy};
use crate::model::{
    sample_example_optimal, sample_gaussian_invariant, sample_trace_example, DeformationSpec, PairModelSpec,
    PairSampler,
};
use crate::rng;
use crate::spectral_stats::{
    diagonal_term, eigen_spectrum, fluctuation_correlation, green_observable, joint_local_statistic, nearest_pair,
    resolvent_trace, smoothed_density, sup_distance, trace_square_correlation, LocalWindow, SpectrumPair,
};
use crate::stats;

fn group_seed(master: u64, group: usize) -> u64 {
    rng::derive_seed(master, group as u64)
}

fn header(config: &ExperimentConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(SCHEMA_VERSION));
    m.insert("experiment".into(), json!(config.experiment.label()));
    m.insert("config_hash".into(), json!(config.content_hash()));
    m.insert("master_seed".into(), json!(config.master_seed));
    m.insert("mc_samples".into(), json!(config.mc_samples));
    m
}

/// Validates `config` and runs the experiment it names.
pub fn run_experiment(config: &ExperimentConfig, allow_large: bool) -> Result<ExperimentRecord> {
    config.validate(allow_large)?;
    let start = Instant::now();
    let mut record = match config.experiment {
        ExperimentKind::ThresholdSweep => run_threshold_sweep(config)?,
        ExperimentKind::OptimalityDemo => run_optimality_demo(config)?,
        ExperimentKind::GftContinuity => run_gft_continuity(config)?,
        ExperimentKind::MdeValidation => run_mde_validation(config)?,
        ExperimentKind::TraceCorrIdentity => run_trace_corr_identity(config)?,
    };
    record.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

fn finish(config: &ExperimentConfig, rows: Vec<SampleRow>, summary: Value, tables: Vec<(String, String)>) -> ExperimentRecord {
    ExperimentRecord {
        config: config.clone(),
        config_hash: config.content_hash(),
        rows,
        summary,
        tables,
        wall_clock_seconds: 0.0,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Self-consistent density at `energy` for the unnormalized Example-2
/// matrices `A + W + sqrt(alpha) W_G`, whose entry variance is `(1+alpha)/N`.
pub fn example_rho(n: usize, params: &ExperimentParams, alpha: f64) -> Result<f64> {
    let scale = (1.0 + alpha).sqrt();
    let a = params.deformation.materialize(n, params.symmetry)?.scaled(1.0 / scale);
    let z = C64::new(params.energy / scale, 1e-5);
    let sol = solve_mde(&a, &SelfEnergy::flat(n), z, None, &MdeOptions::default())?;
    Ok(sol.mean().im.abs() / PI / scale)
}

fn example_pairs(point: &GridPoint, params: &ExperimentParams, samples: usize, seed: u64) -> Result<Vec<SpectrumPair>> {
    (0..samples)
        .into_par_iter()
        .map(|k| {
            let s = rng::derive_seed(seed, k as u64);
            let pair = sample_example_optimal(point.n, params.symmetry, point.alpha, &params.deformation, s)?;
            let l1 = eigen_spectrum(&pair.h1)?;
            let l2 = if point.alpha == 0.0 { l1.clone() } else { eigen_spectrum(&pair.h2)? };
            Ok(SpectrumPair { lambdas1: l1, lambdas2: l2, seed: s })
        })
        .collect()
}

fn sum_sq(l: &[f64]) -> f64 {
    l.iter().map(|x| x * x).sum()
}

fn eta_for(n: usize, xi: f64) -> f64 {
    (n as f64).powf(-1.0 - xi)
}

struct LocalGroup {
    summary: serde_json::Map<String, Value>,
    rows: Vec<SampleRow>,
}

fn local_group(config: &ExperimentConfig, g: usize, point: &GridPoint) -> Result<LocalGroup> {
    let p = &config.params;
    let seed = group_seed(config.master_seed, g);
    let rho = example_rho(point.n, p, point.alpha)?;
    let window = LocalWindow::new(p.energy, rho, p.kappa, 1)?;
    let pairs = example_pairs(point, p, config.mc_samples, seed)?;
    let z = C64::new(p.energy, eta_for(point.n, p.xi));
    let label = config.experiment.label();
    let mut rows = Vec::with_capacity(pairs.len());
    let (mut xs, mut ys, mut rs) = (Vec::new(), Vec::new(), Vec::new());
    for (k, pair) in pairs.iter().enumerate() {
        let (x1, x2) = nearest_pair(pair, &window, &window);
        let r = green_observable(pair, &[z], &[z]).value;
        let mut row = SampleRow::empty(label, point.n, point.alpha, k, pair.seed);
        row.e1 = p.energy;
        row.e2 = p.energy;
        row.x1 = x1;
        row.x2 = x2;
        row.r_value = r;
        row.trace_sq1 = sum_sq(&pair.lambdas1);
        row.trace_sq2 = sum_sq(&pair.lambdas2);
        rows.push(row);
        xs.push(x1);
        ys.push(x2);
        rs.push(r);
    }
    let corr = fluctuation_correlation(&xs, &ys, p.bootstrap, seed);
    let joint = joint_local_statistic(&pairs, &p.test_function, &window, &window, p.stderr_tolerance)?;
    let mut s = serde_json::Map::new();
    s.insert("n".into(), json!(point.n));
    s.insert("alpha".into(), json!(point.alpha));
    s.insert("gamma".into(), json!(point.gamma));
    s.insert("rho".into(), json!(rho));
    s.insert("correlation".into(), json!(corr.value));
    s.insert("correlation_ci".into(), json!([corr.ci_low, corr.ci_high]));
    s.insert("mean_R".into(), json!(stats::mean(&rs)));
    s.insert("stderr_R".into(), json!(stats::std_err(&rs)));
    s.insert("joint".into(), json!(joint.joint));
    s.insert("product".into(), json!(joint.product));
    s.insert("gap".into(), json!(joint.gap));
    s.insert("gap_stderr".into(), json!(joint.stderr));
    s.insert("matched".into(), json!(joint.matched));
    s.insert("matched_stderr".into(), json!(joint.matched_stderr));
    Ok(LocalGroup { summary: s, rows })
}

fn spearman_by_n(config: &ExperimentConfig, groups: &[serde_json::Map<String, Value>]) -> Vec<Value> {
    config
        .n_list
        .iter()
        .map(|&n| {
            let (mut g, mut c) = (Vec::new(), Vec::new());
            for s in groups.iter().filter(|s| s["n"] == json!(n)) {
                let alpha = s["alpha"].as_f64().unwrap_or(f64::NAN);
                g.push(-alpha.ln() / (n as f64).ln());
                c.push(s["correlation"].as_f64().unwrap_or(f64::NAN));
            }
            let rho = if g.len() >= 2 { stats::spearman(&g, &c) } else { f64::NAN };
            json!({ "n": n, "spearman": rho })
        })
        .collect()
}

/// Correlation of nearest-eigenvalue fluctuations and the joint local
/// statistic across the `(N, alpha)` grid of Example-2 pairs.
pub fn run_threshold_sweep(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for (g, point) in config.grid().iter().enumerate() {
        let group = local_group(config, g, point)?;
        rows.extend(group.rows);
        groups.push(group.summary);
    }
    let mut summary = header(config);
    summary.insert("trend".into(), Value::Array(spearman_by_n(config, &groups)));
    summary.insert("groups".into(), Value::Array(groups.into_iter().map(Value::Object).collect()));
    Ok(finish(config, rows, Value::Object(summary), Vec::new()))
}

/// Joint statistic of Example-2 pairs next to the identical-matrix diagonal
/// term `rho^2 int F(x, x) dx`. The index-matched part of the joint sum is
/// the Monte Carlo counterpart of that term.
pub fn run_optimality_demo(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let f = &config.params.test_function;
    for (g, point) in config.grid().iter().enumerate() {
        let mut group = local_group(config, g, point)?;
        let rho = group.summary["rho"].as_f64().unwrap_or(f64::NAN);
        let diag = diagonal_term(f, rho);
        let matched = group.summary["matched"].as_f64().unwrap_or(f64::NAN);
        let se = group.summary["matched_stderr"].as_f64().unwrap_or(f64::NAN);
        group.summary.insert("diagonal_term".into(), json!(diag));
        group.summary.insert("matched_z".into(), json!((matched - diag) / se));
        rows.extend(group.rows);
        groups.push(group.summary);
    }
    let mut summary = header(config);
    summary.insert("diagonal_integral".into(), json!(f.diagonal_integral()));
    summary.insert("groups".into(), Value::Array(groups.into_iter().map(Value::Object).collect()));
    Ok(finish(config, rows, Value::Object(summary), Vec::new()))
}

/// Tracks `E R_t` along the exact flow and its increments against
/// `sqrt(N/alpha) t`.
pub fn run_gft_continuity(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let p = &config.params;
    let label = config.experiment.label();
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for (g, &n) in config.n_list.iter().enumerate() {
        let spec = config.model_at(n);
        let alpha = spec.profile.alpha;
        let mut times: Vec<f64> = p.t_fractions.iter().map(|f| f * alpha).collect();
        if !times.contains(&0.0) {
            times.push(0.0);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let sampler = PairSampler::new(&spec)?;
        let data = Arc::new(build_entry_data(&spec.profile, n, spec.symmetry)?);
        let eta = eta_for(n, p.xi);
        let seed = group_seed(config.master_seed, g);
        let paths: Vec<(u64, Vec<f64>)> = (0..config.mc_samples)
            .into_par_iter()
            .map(|k| {
                let s = rng::derive_seed(seed, k as u64);
                let mut r = rng::seeded(s);
                let (x1, x2) = sampler.sample_signal(&mut r);
                let mut state = FlowState::from_coords(data.clone(), x1, x2);
                let mut values = Vec::with_capacity(times.len());
                for &t in &times {
                    state = evolve_exact(&state, t, &mut r)?;
                    let (w1, w2) = state.matrices();
                    let h = sampler.finish(w1, w2, s)?;
                    let l1 = eigen_spectrum(&h.h1)?;
                    let l2 = eigen_spectrum(&h.h2)?;
                    let pair = SpectrumPair { lambdas1: l1, lambdas2: l2, seed: s };
                    let z = C64::new(p.energy, eta);
                    values.push(green_observable(&pair, &[z], &[z]).value);
                }
                Ok((s, values))
            })
            .collect::<Result<_>>()?;
        for (k, (s, values)) in paths.iter().enumerate() {
            for (i, &t) in times.iter().enumerate() {
                let mut row = SampleRow::empty(label, n, alpha, k, *s);
                row.t = t;
                row.e1 = p.energy;
                row.e2 = p.energy;
                row.r_value = values[i];
                rows.push(row);
            }
        }
        let scale = (n as f64 / alpha).sqrt();
        let mut envelope = Vec::with_capacity(times.len());
        let mut points = Vec::with_capacity(times.len());
        let mut c_fit: f64 = 0.0;
        for (i, &t) in times.iter().enumerate() {
            let r_t: Vec<f64> = paths.iter().map(|(_, v)| v[i]).collect();
            let inc: Vec<f64> = paths.iter().map(|(_, v)| v[i] - v[0]).collect();
            let mean = stats::mean(&inc);
            let se = stats::std_err(&inc);
            let u = mean.abs() + 3.0 * se;
            let bound = scale * t;
            let ratio = if t > 0.0 { u / bound } else { 0.0 };
            c_fit = c_fit.max(ratio);
            envelope.push(u);
            points.push(json!({
                "t": t,
                "mean_R": stats::mean(&r_t),
                "mean_increment": mean,
                "stderr_increment": se,
                "envelope": u,
                "bound_scale": bound,
                "ratio": ratio,
            }));
        }
        let mut doubling = Vec::new();
        let mut all_ok = true;
        for i in 0..times.len() {
            if times[i] == 0.0 {
                continue;
            }
            if let Some(j) = times.iter().position(|&t2| (t2 - 2.0 * times[i]).abs() <= 1e-12 * t2) {
                let ratio = envelope[j] / envelope[i];
                let ok = ratio <= 4.0;
                all_ok &= ok;
                doubling.push(json!({ "t": times[i], "t2": times[j], "ratio": ratio, "passed": ok }));
            }
        }
        groups.push(json!({
            "n": n,
            "alpha": alpha,
            "eta": eta,
            "energy": p.energy,
            "points": points,
            "c_fit": c_fit,
            "doubling": doubling,
            "doubling_passed": all_ok,
        }));
    }
    let mut summary = header(config);
    summary.insert("groups".into(), Value::Array(groups));
    Ok(finish(config, rows, Value::Object(summary), Vec::new()))
}

struct DensityOutcome {
    summary: Value,
    rows: Vec<SampleRow>,
    density: String,
    histogram: String,
}

fn histogram(eigs: &[Vec<f64>], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for l in eigs.iter().flatten() {
        total += 1;
        let b = ((l - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    (0..bins)
        .map(|b| (lo + b as f64 * width, lo + (b + 1) as f64 * width, counts[b] as f64 / (total as f64 * width)))
        .collect()
}

fn density_outcome(
    config: &ExperimentConfig,
    name: &str,
    n: usize,
    grid: &[f64],
    rho_theory: &[f64],
    eigs: Vec<(u64, Vec<f64>)>,
) -> DensityOutcome {
    let p = &config.params;
    let label = format!("{}:{name}", config.experiment.label());
    let mut emp = vec![0.0; grid.len()];
    let mut rows = Vec::with_capacity(eigs.len());
    for (k, (seed, l)) in eigs.iter().enumerate() {
        for (e, d) in emp.iter_mut().zip(smoothed_density(l, grid, p.smoothing_eta)) {
            *e += d / eigs.len() as f64;
        }
        let mut row = SampleRow::empty(&label, n, f64::NAN, k, *seed);
        row.trace_sq1 = sum_sq(l);
        rows.push(row);
    }
    let dist = sup_distance(rho_theory, &emp);
    let mut density = String::new();
    for i in 0..grid.len() {
        let _ = writeln!(density, "{n},{name},{},{},{}", grid[i], rho_theory[i], emp[i]);
    }
    let spectra: Vec<Vec<f64>> = eigs.into_iter().map(|(_, l)| l).collect();
    let mut hist = String::new();
    for (lo, hi, d) in histogram(&spectra, grid[0], grid[grid.len() - 1], 80) {
        let _ = writeln!(hist, "{n},{name},{lo},{hi},{d}");
    }
    DensityOutcome { summary: json!({ "model": name, "sup_distance": dist }), rows, density, histogram: hist }
}

fn default_deformed(wigner: &PairModelSpec) -> PairModelSpec {
    let mut d = wigner.clone();
    d.deformation1 = DeformationSpec::Halves { value: 1.0 };
    d.deformation2 = DeformationSpec::Halves { value: 1.0 };
    d
}

/// Smoothed scDoS against averaged empirical spectra, the kappa-bulk, and a
/// free-convolution comparison for `A + sqrt(t) GOE`.
pub fn run_mde_validation(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let p = &config.params;
    let opts = MdeOptions::default();
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut density = String::from("n,model,E,rho_mde,rho_empirical\n");
    let mut hist = String::from("n,model,bin_lo,bin_hi,density\n");
    for (g, &n) in config.n_list.iter().enumerate() {
        let wigner = config.model_at(n);
        let deformed = match &p.deformed_model {
            Some(d) => d.with_n(n),
            None => default_deformed(&wigner),
        };
        let seed = group_seed(config.master_seed, g);
        let mut models = Vec::new();
        for (mi, (name, spec)) in [("wigner", &wigner), ("deformed", &deformed)].into_iter().enumerate() {
            let a = spec.deformation(1)?;
            let s = SelfEnergy::from_spec(spec, 1)?;
            let r = a.operator_norm()? + 2.5;
            let grid = linspace(-r, r, p.grid_points);
            let smooth = scdos(&a, &s, &grid, p.smoothing_eta, &opts)?;
            let sharp = scdos(&a, &s, &linspace(-r, r, 4 * p.grid_points + 1), 1e-3, &opts)?.with_bulk(p.kappa);
            let sampler = PairSampler::new(spec)?;
            let mseed = rng::derive_seed(seed, mi as u64);
            let eigs: Vec<(u64, Vec<f64>)> = (0..config.mc_samples)
                .into_par_iter()
                .map(|k| {
                    let s = rng::derive_seed(mseed, k as u64);
                    Ok((s, eigen_spectrum(&sampler.sample(s)?.h1)?))
                })
                .collect::<Result<_>>()?;
            let out = density_outcome(config, name, n, &grid, &smooth.rho, eigs);
            rows.extend(out.rows);
            density.push_str(&out.density);
            hist.push_str(&out.histogram);
            let mut summary = out.summary;
            summary["kappa_bulk"] = json!(sharp.bulk);
            summary["max_mde_residual"] = json!(smooth.residuals.iter().cloned().fold(0.0, f64::max));
            models.push(summary);
        }

        // free convolution of the deformation with a semicircle of variance t
        let t = p.free_convolution_t;
        let a = deformed.deformation(1)?;
        let a_eigs = eigen_spectrum(&a)?;
        let r = a.operator_norm()? + 2.5;
        let grid = linspace(-r, r, p.grid_points);
        let zs: Vec<C64> = grid.iter().map(|&e| C64::new(e, p.smoothing_eta)).collect();
        let fc = free_convolution_check(|z| Ok(resolvent_trace(&a_eigs, z)), t, &zs, &opts)?;
        let rho_c: Vec<f64> = fc.iter().map(|q| q.m_c.im / PI).collect();
        let fseed = rng::derive_seed(seed, 2);
        let eigs: Vec<(u64, Vec<f64>)> = (0..config.mc_samples)
            .into_par_iter()
            .map(|k| {
                let s = rng::derive_seed(fseed, k as u64);
                let mut r = rng::seeded(s);
                let gauss = sample_gaussian_invariant(n, wigner.symmetry, &mut r);
                Ok((s, eigen_spectrum(&a.add_scaled(t.sqrt(), &gauss)?)?))
            })
            .collect::<Result<_>>()?;
        let out = density_outcome(config, "free_convolution", n, &grid, &rho_c, eigs);
        rows.extend(out.rows);
        density.push_str(&out.density);
        hist.push_str(&out.histogram);
        let mut fc_summary = out.summary;
        fc_summary["t"] = json!(t);
        fc_summary["max_fc_residual"] = json!(fc.iter().map(|q| q.residual).fold(0.0, f64::max));
        models.push(fc_summary);
        groups.push(json!({ "n": n, "smoothing_eta": p.smoothing_eta, "models": models }));
    }
    let mut summary = header(config);
    summary.insert("groups".into(), Value::Array(groups));
    Ok(finish(
        config,
        rows,
        Value::Object(summary),
        vec![("density.csv".into(), density), ("histogram.csv".into(), hist)],
    ))
}

/// `corr(Tr H1^2, Tr H2^2)` for `sqrt(1-alpha) W0 + sqrt(alpha) W_j`
/// against `(1 - alpha)^2`.
pub fn run_trace_corr_identity(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    let p = &config.params;
    let label = config.experiment.label();
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for (g, point) in config.grid().iter().enumerate() {
        if point.alpha > 1.0 {
            return Err(Error::InvalidArgument(format!("alpha = {} outside [0, 1]", point.alpha)));
        }
        let seed = group_seed(config.master_seed, g);
        let traces: Vec<(u64, f64, f64)> = (0..config.mc_samples)
            .into_par_iter()
            .map(|k| {
                let s = rng::derive_seed(seed, k as u64);
                let pair = sample_trace_example(point.n, point.alpha, s)?;
                Ok((s, pair.h1.trace_of_square(), pair.h2.trace_of_square()))
            })
            .collect::<Result<_>>()?;
        let t1: Vec<f64> = traces.iter().map(|x| x.1).collect();
        let t2: Vec<f64> = traces.iter().map(|x| x.2).collect();
        for (k, &(s, a, b)) in traces.iter().enumerate() {
            let mut row = SampleRow::empty(label, point.n, point.alpha, k, s);
            row.trace_sq1 = a;
            row.trace_sq2 = b;
            rows.push(row);
        }
        let c = trace_square_correlation(&t1, &t2, p.bootstrap, seed);
        let target = (1.0 - point.alpha).powi(2);
        groups.push(json!({
            "n": point.n,
            "alpha": point.alpha,
            "correlation": c.value,
            "correlation_ci": [c.ci_low, c.ci_high],
            "target": target,
            "deviation": c.value - target,
            "samples": c.samples,
        }));
    }
    let mut summary = header(config);
    summary.insert("groups".into(), Value::Array(groups));
    Ok(finish(config, rows, Value::Object(summary), Vec::new()))
}
