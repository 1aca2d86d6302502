use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::{finite_diff, FieldEnsemble, ModalField, MultiIndex, SpaceTimeGrid};
use crate::halfline::{dt_v, solve_halfline, solve_halfline_at, stability_gap, BoundaryData, KernelQuadrature};
use crate::norms::{holder_report, schauder_ratio, time_seminorm, NormSpec, RatioKind};
use crate::pipeline::{continuity_iterate, decompose_pipeline};
use crate::rng::{wiener_increments, WienerBatch};
use crate::solver::{solve_model_halfspace, Forcing};

use super::config::{ExperimentConfig, ExperimentKind, Family, StabilityPair};
use super::report::StudyReport;

/// Validates `config` and runs the study it names.
pub fn run_study(config: &ExperimentConfig) -> Result<StudyReport> {
    config.validate()?;
    let start = Instant::now();
    let mut report = match config.experiment {
        ExperimentKind::HalflineLemma => run_halfline_lemma(config),
        ExperimentKind::Stability => run_stability(config),
        ExperimentKind::Compatibility => run_compatibility(config),
        ExperimentKind::SchauderRatio => run_schauder_ratio(config),
        ExperimentKind::Continuity => run_continuity(config),
        ExperimentKind::Pipeline => run_pipeline(config),
    }?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs the study on a dedicated pool of `workers` threads.
pub fn run_with_workers(config: &ExperimentConfig, workers: usize) -> Result<StudyReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_study(config))
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment != kind {
        return Err(Error::Config(format!("config is for {}, not {kind}", config.experiment)));
    }
    config.validate()
}

fn quadrature(config: &ExperimentConfig) -> Result<KernelQuadrature<f64>> {
    KernelQuadrature::new(config.halfline().rel_tol, 1e-14, 400)
}

/// `log(e_k / e_{k+1}) / log(factor)` for consecutive entries.
fn orders(errs: &[f64], factor: f64) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).ln() / factor.ln()).collect()
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn boundary_coef(config: &ExperimentConfig) -> f64 {
    match config.data.family {
        Family::Zero => 0.0,
        _ => config.data.param("coef", 1.0),
    }
}

/// Noise on the finest grid of the study, coarsened per level.
fn level_noise(config: &ExperimentConfig, grids: &[SpaceTimeGrid<f64>], modes: usize) -> Result<Vec<WienerBatch<f64>>> {
    let sub = config.solver.substeps;
    let fine = grids.last().expect("at least one level");
    let fine_noise = wiener_increments(
        config.ensemble.seed_spec(),
        config.ensemble.paths,
        fine.steps() * sub,
        modes,
        fine.dt() / sub as f64,
    )?;
    grids
        .iter()
        .map(|g| {
            if g.steps() == fine.steps() {
                Ok(fine_noise.clone())
            } else {
                fine_noise.coarsen(fine.steps() / g.steps())
            }
        })
        .collect()
}

/// Forcing of the SPDE studies; `draw` selects the amplitudes of `random_ramp`.
pub fn build_forcing(config: &ExperimentConfig, grid: &SpaceTimeGrid<f64>, modes: usize, draw: usize) -> Result<Forcing<f64>> {
    let data = &config.data;
    let (l, lp, t_final) = (grid.x1_max(), grid.xp_max(), grid.t_final());
    let (f, g): (FieldEnsemble<f64>, Vec<FieldEnsemble<f64>>) = match data.family {
        Family::Zero | Family::Power => return Ok(Forcing::zero(grid, modes)),
        Family::Ramp => {
            let (c0, ay, g_amp) = (data.param("c0", 0.0), data.param("ay", 0.5), data.param("g_amp", 0.0));
            let f = FieldEnsemble::from_fn(grid.clone(), 1, move |_, t, x, y| {
                (c0 + t / t_final) * (1.0 + ay * (TAU * y / lp).cos()) * (1.0 - x / l)
            });
            let g = (0..modes)
                .map(|_| {
                    FieldEnsemble::from_fn(grid.clone(), 1, move |_, _, x, y| {
                        g_amp * (x / l) * (1.0 - x / l) * (1.0 + ay * (TAU * y / lp).sin())
                    })
                })
                .collect();
            (f, g)
        }
        Family::Sine => {
            let (fa, ga, k) = (data.param("f_amp", 1.0), data.param("g_amp", 0.0), data.param("k", 1.0));
            let f = FieldEnsemble::from_fn(grid.clone(), 1, move |_, _, x, _| fa * (TAU * k * x / l).sin());
            let g = (0..modes)
                .map(|_| FieldEnsemble::from_fn(grid.clone(), 1, move |_, _, x, _| ga * (TAU * k * x / l).cos()))
                .collect();
            (f, g)
        }
        Family::RandomRamp => {
            let scale = data.param("scale", 1.0);
            let seed = config.ensemble.seed_spec().derive(0x4452_4157_0000 + draw as u64);
            let amp: Vec<f64> = (0..2 + 2 * modes).map(|i| scale * seed.normal(0, 0, i as u64)).collect();
            let (a0, a1) = (amp[0], amp[1]);
            let f = FieldEnsemble::from_fn(grid.clone(), 1, move |_, t, x, y| {
                t * (1.0 + a0 + a1 * (TAU * y / lp).cos()) * (1.0 - x / l) * (1.0 + x / l)
            });
            let g = (0..modes)
                .map(|k| {
                    let (b0, b1) = (amp[2 + 2 * k], amp[3 + 2 * k]);
                    FieldEnsemble::from_fn(grid.clone(), 1, move |_, _, x, y| {
                        (x / l) * (1.0 - x / l) * (b0 + b1 * (TAU * y / lp).sin())
                    })
                })
                .collect();
            (f, g)
        }
    };
    Forcing::new(f, ModalField::new(g)?)
}

pub fn run_halfline_lemma(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::HalflineLemma)?;
    let mut report = StudyReport::new(config);
    let grids = config.level_grids()?;
    let quad = quadrature(config)?;
    let hl = config.halfline();
    let coef = boundary_coef(config);
    let space = config.refinement.space as f64;

    let mut heat = Vec::new();
    for (level, g) in grids.iter().enumerate() {
        let d = BoundaryData::analytic(g, 1, move |_, t: f64| coef * t * t, move |_, t: f64| 2.0 * coef * t)?;
        let v = solve_halfline(&d, g, &quad)?;
        let dv = dt_v(&d, g, &quad)?;
        let d11 = finite_diff(&v, MultiIndex::D11)?;
        let err = d11.values().iter().zip(dv.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        report.row(level, &g.grid_id(), "heat_identity_error", "", err);
        report.point("heat_identity_error", level, g.dx1(), err);
        heat.push(err);
    }
    if heat.len() >= 2 {
        let ord = orders(&heat, space);
        for (k, &o) in ord.iter().enumerate() {
            report.row(k + 1, &grids[k + 1].grid_id(), "heat_identity_order", "", o);
        }
        let trivial = heat.iter().all(|&e| e == 0.0);
        let pass = trivial || ord.iter().all(|&o| o >= 1.8);
        report.verdict("heat_identity_order", pass, trivial, format!("orders {} (need >= 1.8)", fmt_list(&ord)));
    }

    let rec_grid = SpaceTimeGrid::line(1.0, 1, config.grid.t_final, hl.recovery_times)?;
    let d = BoundaryData::analytic(&rec_grid, 1, move |_, t: f64| coef * t * t, move |_, t: f64| 2.0 * coef * t)?;
    let mut rec = Vec::new();
    for k in 0..hl.recovery_levels {
        let y = hl.recovery_y_min / 2f64.powi(k as i32);
        let pts: Vec<(f64, f64)> = (0..rec_grid.times()).map(|n| (rec_grid.t(n), y)).collect();
        let v = solve_halfline_at(&d, &pts, &quad)?;
        let err = v.iter().zip(&pts).fold(0.0f64, |m, (v, p)| m.max((v - coef * p.0 * p.0).abs()));
        report.row(k, &rec_grid.grid_id(), "boundary_recovery_error", y, err);
        report.point("boundary_recovery_error", k, y, err);
        rec.push(err);
    }
    let ord = orders(&rec, 2.0);
    for (k, &o) in ord.iter().enumerate() {
        report.row(k + 1, &rec_grid.grid_id(), "boundary_recovery_order", hl.recovery_y_min / 2f64.powi(k as i32 + 1), o);
    }
    let trivial = rec.iter().all(|&e| e == 0.0);
    let pass = trivial || ord.iter().all(|&o| o >= 0.9);
    report.verdict("boundary_recovery_order", pass, trivial, format!("orders {} (need >= 0.9)", fmt_list(&ord)));

    for &alpha in &config.data.alphas {
        let e = 1.0 + alpha / 2.0;
        let mut ratios = Vec::new();
        for (level, g) in grids.iter().enumerate() {
            let d = BoundaryData::analytic(g, 1, move |_, t: f64| coef * t.powf(e), move |_, t: f64| coef * e * t.powf(alpha / 2.0))?;
            let dv = dt_v(&d, g, &quad)?;
            let spec = NormSpec::new(alpha, config.data.gamma, 0)?.with_policy(hl.policy);
            let h = holder_report(&dv, &spec, &format!("dt_v/alpha={alpha}"))?;
            let hp: Vec<f64> = (0..g.times()).map(|n| d.hp_sample(0, n)).collect();
            let den = time_seminorm(&hp, 1, g.dt(), alpha / 2.0, config.data.gamma)?;
            let num = h.parabolic.value;
            let ratio = num / den;
            report.holder.extend(h.rows());
            report.row(level, &g.grid_id(), "dt_v_parabolic_seminorm", alpha, num);
            report.row(level, &g.grid_id(), "h_prime_time_seminorm", alpha, den);
            report.row(level, &g.grid_id(), "lemma_ratio", alpha, ratio);
            report.point(&format!("lemma_ratio/alpha={alpha}"), level, alpha, ratio);
            ratios.push(ratio);
        }
        let trivial = ratios.iter().all(|r| r.is_nan());
        let s = spread(&ratios);
        let pass = trivial || (ratios.iter().all(|r| r.is_finite()) && s < 2.0);
        report.verdict(
            &format!("lemma_ratio/alpha={alpha}"),
            pass,
            trivial,
            format!("ratios {} max/min {s:.4} (need < 2)", fmt_list(&ratios)),
        );
    }
    Ok(report)
}

pub fn run_stability(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::Stability)?;
    let mut report = StudyReport::new(config);
    let st = config.stability.clone().expect("validated");
    let grids = config.level_grids()?;
    let quad = quadrature(config)?;
    let coef = boundary_coef(config);
    let xi_seed = config.ensemble.seed_spec().derive(0x5849);
    for pair in st.pairs {
        let name = match pair {
            StabilityPair::Deterministic => "deterministic",
            StabilityPair::Random => "random",
        };
        let mut worst = 0.0f64;
        let mut trivial = true;
        for (level, g) in grids.iter().enumerate() {
            let (d1, d2) = match pair {
                StabilityPair::Deterministic => (
                    BoundaryData::analytic(g, 1, move |_, t: f64| coef * t * t, move |_, t: f64| 2.0 * coef * t)?,
                    BoundaryData::analytic(g, 1, move |_, t: f64| coef * t.powi(3), move |_, t: f64| 3.0 * coef * t * t)?,
                ),
                StabilityPair::Random => {
                    let paths = config.ensemble.paths;
                    let xi: Arc<Vec<f64>> = Arc::new((0..paths).map(|p| coef * xi_seed.normal(p as u64, 0, 0)).collect());
                    let (a, b, c, d) = (xi.clone(), xi.clone(), xi.clone(), xi);
                    (
                        BoundaryData::analytic(g, paths, move |p, t: f64| a[p] * t * t, move |p, t: f64| 2.0 * b[p] * t)?,
                        BoundaryData::analytic(g, paths, move |p, t: f64| 0.9 * c[p] * t * t, move |p, t: f64| 1.8 * d[p] * t)?,
                    )
                }
            };
            let gap = stability_gap(&d1, &d2, g, &quad, config.data.gamma)?;
            let id = g.grid_id();
            report.row(level, &id, "stability_lhs", name, gap.lhs);
            report.row(level, &id, "stability_rhs", name, gap.rhs);
            let ratio = gap.lhs / gap.rhs;
            report.row(level, &id, "stability_ratio", name, ratio);
            report.point(&format!("stability_ratio/{name}"), level, g.dt(), ratio);
            if gap.rhs > 0.0 || gap.lhs > 0.0 {
                trivial = false;
                worst = worst.max(ratio);
            }
        }
        let pass = trivial || worst <= st.tolerance;
        report.verdict(
            &format!("stability/{name}"),
            pass,
            trivial,
            format!("max lhs/rhs {worst:.6} (need <= {})", st.tolerance),
        );
    }
    Ok(report)
}

/// `δ ↦ sup_{t,x'} (E|D₁₁u(t, δ, x')|²)^{1/2}` at the node rows `i`.
fn d11_profile(u: &FieldEnsemble<f64>, rows: &[usize]) -> Result<Vec<f64>> {
    let d11 = finite_diff(u, MultiIndex::D11)?;
    let g = u.grid();
    let inv = 1.0 / u.paths() as f64;
    Ok(rows
        .iter()
        .map(|&i| {
            let mut best = 0.0f64;
            for n in 0..g.times() {
                for j in 0..g.nxp() {
                    let k = g.node(i, j);
                    let m = (0..u.paths()).map(|p| d11.get(p, n, k).powi(2)).sum::<f64>() * inv;
                    best = best.max(m);
                }
            }
            best.sqrt()
        })
        .collect())
}

pub fn run_compatibility(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::Compatibility)?;
    let mut report = StudyReport::new(config);
    let cc = config.compatibility.clone().expect("validated");
    let g = config.grid.build()?;
    let tangential = config.coefficients()?;
    let violating = config.violating_coefficients(&cc)?;
    if tangential.modes() != violating.modes() {
        return Err(Error::Config("both variants need the same number of noise modes".into()));
    }
    let modes = tangential.modes();
    let noise = level_noise(config, std::slice::from_ref(&g), modes)?.remove(0);
    let forcing = build_forcing(config, &g, modes, 0)?;
    let opts = config.solver.options();
    let [lo, hi] = cc.delta_exponents;
    let rows: Vec<usize> = (lo..=hi).map(|k| g.x1_cells() >> k).collect();
    let id = g.grid_id();
    for (name, coeffs) in [("tangential", &tangential), ("violating", &violating)] {
        let u = solve_model_halfspace(coeffs, &forcing, &g, &noise, &opts)?;
        let profile = d11_profile(&u, &rows)?;
        for (&i, &p) in rows.iter().zip(&profile) {
            report.row(0, &id, &format!("d11_profile/{name}"), g.x1(i), p);
            report.point(&format!("d11_profile/{name}"), 0, g.x1(i), p);
        }
        let trivial = profile.iter().all(|&p| p == 0.0);
        let (pass, detail) = if name == "tangential" {
            let s = spread(&profile);
            (trivial || s < 2.0, format!("profile {} max/min {s:.4} (need < 2)", fmt_list(&profile)))
        } else {
            let inc = profile.windows(2).all(|w| w[1] > w[0]);
            (trivial || inc, format!("profile {} strictly increasing as δ halves: {inc}", fmt_list(&profile)))
        };
        report.verdict(&format!("compatibility/{name}"), pass, trivial, detail);
    }
    Ok(report)
}

pub fn run_schauder_ratio(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::SchauderRatio)?;
    let mut report = StudyReport::new(config);
    let sc = config.schauder.clone().expect("validated");
    let coeffs = config.coefficients()?;
    let modes = coeffs.modes();
    let grids = config.level_grids()?;
    let noises = level_noise(config, &grids, modes)?;
    let opts = config.solver.options();
    let alpha = config.data.alphas[0];
    let spec = NormSpec::new(alpha, config.data.gamma, 0)?.with_policy(sc.policy);
    let mut level_ok = true;
    let mut all_undefined = true;
    let mut spreads = Vec::new();
    let mut worst_scaling = 0.0f64;
    for draw in 0..sc.draws {
        let mut ratios = Vec::new();
        let mut undefined = false;
        for (level, (g, noise)) in grids.iter().zip(&noises).enumerate() {
            let forcing = build_forcing(config, g, modes, draw)?;
            let u = solve_model_halfspace(&coeffs, &forcing, g, noise, &opts)?;
            let r = schauder_ratio(&u, &forcing.f, &forcing.g, &spec)?;
            let id = g.grid_id();
            report.row(level, &id, "schauder_lhs", draw, r.lhs);
            report.row(level, &id, "schauder_rhs", draw, r.rhs);
            report.row(level, &id, "schauder_ratio", draw, r.ratio);
            report.point(&format!("schauder_ratio/draw={draw}"), level, g.dx1(), r.ratio);
            if draw == 0 {
                let h = holder_report(&u.clone().with_meta("seed", config.ensemble.seed.to_string()), &spec.with_order(2), "u")?;
                report.holder.extend(h.rows());
            }
            match r.kind {
                RatioKind::Undefined => undefined = true,
                RatioKind::Infinite => level_ok = false,
                RatioKind::Finite => {}
            }
            if level == 0 && r.kind == RatioKind::Finite {
                let scaled = forcing.scaled(sc.scale);
                let u2 = solve_model_halfspace(&coeffs, &scaled, g, noise, &opts)?;
                let r2 = schauder_ratio(&u2, &scaled.f, &scaled.g, &spec)?;
                let rel = (r2.ratio - r.ratio).abs() / r.ratio.abs();
                report.row(level, &id, "schauder_scaling_rel", draw, rel);
                worst_scaling = worst_scaling.max(rel);
            }
            ratios.push(r.ratio);
        }
        if undefined {
            continue;
        }
        all_undefined = false;
        let s = spread(&ratios);
        report.row(0, "", "schauder_level_spread", draw, s);
        spreads.push(s);
        level_ok &= ratios.iter().all(|r| r.is_finite()) && s < 2.0;
    }
    report.verdict(
        "schauder/levels",
        all_undefined || level_ok,
        all_undefined,
        format!("per-draw max/min across levels {} (need < 2)", fmt_list(&spreads)),
    );
    report.verdict(
        "schauder/scaling",
        all_undefined || worst_scaling <= 1e-6,
        all_undefined,
        format!("max relative change under (f, g) -> {}(f, g): {worst_scaling:.3e} (need <= 1e-6)", sc.scale),
    );
    Ok(report)
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::Pipeline)?;
    let mut report = StudyReport::new(config);
    let coeffs = config.coefficients()?;
    let modes = coeffs.modes();
    let grids = config.level_grids()?;
    let noises = level_noise(config, &grids, modes)?;
    let opts = config.solver.options();
    let mut residuals = Vec::new();
    let mut h_exact = true;
    for (level, (g, noise)) in grids.iter().zip(&noises).enumerate() {
        let forcing = build_forcing(config, g, modes, 0)?;
        let u = solve_model_halfspace(&coeffs, &forcing, g, noise, &opts)?;
        let out = decompose_pipeline(&coeffs, &forcing.f, g, noise, &u, &opts)?;
        let res = out.boundary_residual();
        let (h0, dh0) = out.h_initial();
        let id = g.grid_id();
        report.row(level, &id, "boundary_residual", "", res);
        report.row(level, &id, "h_initial_max", "", h0);
        report.row(level, &id, "dh_initial_max", "", dh0);
        report.point("boundary_residual", level, g.dx1(), res);
        h_exact &= h0 == 0.0 && dh0 == 0.0;
        residuals.push(res);
    }
    let trivial = residuals.iter().all(|&r| r == 0.0);
    if residuals.len() >= 2 {
        let dec = residuals.windows(2).all(|w| w[1] < w[0]);
        report.verdict(
            "pipeline/residual_decay",
            trivial || dec,
            trivial,
            format!("max E|F(t,0,x')|^2 per level {} strictly decreasing: {dec}", fmt_list(&residuals)),
        );
    }
    report.verdict(
        "pipeline/h_initial",
        h_exact,
        false,
        format!("H(0) = dH(0) = 0 exactly on every level: {h_exact}"),
    );
    Ok(report)
}

pub fn run_continuity(config: &ExperimentConfig) -> Result<StudyReport> {
    expect_kind(config, ExperimentKind::Continuity)?;
    let mut report = StudyReport::new(config);
    let cc = config.continuity.clone().expect("validated");
    let coeffs = config.coefficients()?;
    let modes = coeffs.modes();
    let g = config.grid.build()?;
    let noise = level_noise(config, std::slice::from_ref(&g), modes)?.remove(0);
    let forcing = build_forcing(config, &g, modes, 0)?;
    let opts = config.solver.options();
    let gaps = continuity_iterate(cc.domain, cc.s, cc.s0, &coeffs, &forcing, &g, &noise, &opts, cc.iterations)?;
    let id = g.grid_id();
    for (m, &d) in gaps.iter().enumerate() {
        report.row(0, &id, "successive_difference", m + 1, d);
        report.point("successive_difference", 0, (m + 1) as f64, d);
    }
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    for (m, &r) in ratios.iter().enumerate() {
        report.row(0, &id, "difference_ratio", m + 2, r);
    }
    // ratios for m = 2..=6, where ratio m = gap_m / gap_{m-1}
    let window: Vec<f64> = ratios.iter().copied().skip(1).take(5).collect();
    let trivial = gaps[0] == 0.0 || gaps[1] == 0.0;
    let factor = if window.is_empty() {
        f64::NAN
    } else {
        (window.iter().map(|r| r.ln()).sum::<f64>() / window.len() as f64).exp()
    };
    report.row(0, &id, "contraction_factor", "", factor);
    let s = spread(&window);
    let pass = trivial || (window.len() >= 5 && window.iter().all(|&r| r < 1.0) && s - 1.0 < cc.spread);
    report.verdict(
        "continuity/contraction",
        pass,
        trivial,
        format!(
            "ratios m=2..6 {} max/min {s:.4} (need < 1 and max/min - 1 < {}); factor {factor:.4e}",
            fmt_list(&window),
            cc.spread
        ),
    );
    Ok(report)
}
