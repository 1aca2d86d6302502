use schauder_core::lab::*;
use schauder_core::Error;

fn small_continuity() -> ExperimentConfig {
    let mut c = ExperimentConfig::builtin(ExperimentKind::Continuity);
    c.ensemble.paths = 16;
    c.grid.steps = 16;
    c
}

#[test]
fn builtin_configs_validate() {
    for kind in ExperimentKind::ALL {
        let c = ExperimentConfig::builtin(kind);
        assert_eq!(c.experiment, kind);
        c.validate().unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(ExperimentKind::parse(kind.name()), Some(kind));
    }
}

#[test]
fn infinite_cfl_parses() {
    let c = ExperimentConfig::builtin(ExperimentKind::Compatibility);
    assert!(c.solver.c_cfl.is_infinite());
}

#[test]
fn rejects_non_parabolic_coefficients() {
    let mut c = small_continuity();
    c.coefficients.as_mut().unwrap().sigma = vec![[2.0, 0.0]];
    assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("parabolicity")));
    assert!(run_study(&c).is_err());
}

#[test]
fn rejects_unknown_fields_and_params() {
    let text = ExperimentKind::Pipeline.builtin().replace("[grid]", "[grid]\nbogus = 1");
    assert!(ExperimentConfig::from_toml(&text).is_err());
    let mut c = ExperimentConfig::builtin(ExperimentKind::Pipeline);
    c.data.params.insert("typo".into(), 1.0);
    assert!(c.validate().is_err());
}

#[test]
fn pipeline_rejects_nonzero_g() {
    let mut c = ExperimentConfig::builtin(ExperimentKind::Pipeline);
    c.data.params.insert("g_amp".into(), 0.5);
    assert!(matches!(c.validate(), Err(Error::Config(_))));
}

#[test]
fn schauder_requires_tangential_noise() {
    let mut c = ExperimentConfig::builtin(ExperimentKind::SchauderRatio);
    c.coefficients.as_mut().unwrap().sigma = vec![[0.3, 0.3]];
    assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("tangential")));
}

#[test]
fn compatibility_needs_a_violating_variant() {
    let mut c = ExperimentConfig::builtin(ExperimentKind::Compatibility);
    c.compatibility.as_mut().unwrap().violating_sigma = vec![[0.0, 0.8]];
    assert!(c.validate().is_err());
}

#[test]
fn wrong_runner_is_a_config_error() {
    let c = small_continuity();
    assert!(matches!(run_pipeline(&c), Err(Error::Config(_))));
}

#[test]
fn overrides_apply() {
    let mut c = small_continuity();
    c.apply(&Overrides {
        seed: Some(42),
        salt: Some(5),
        levels: Some(2),
        paths: Some(3),
    });
    assert_eq!((c.ensemble.seed, c.ensemble.salt, c.refinement.levels, c.ensemble.paths), (42, 5, 2, 3));
}

#[test]
fn level_grids_refine() {
    let c = ExperimentConfig::builtin(ExperimentKind::SchauderRatio);
    let g = c.level_grids().unwrap();
    assert_eq!(g.len(), 3);
    assert_eq!((g[2].x1_cells(), g[2].xp_cells(), g[2].steps()), (24, 24, 144));
    let p = ExperimentConfig::builtin(ExperimentKind::Pipeline).level_grids().unwrap();
    assert_eq!(p[2].xp_cells(), 8);
}

#[test]
fn zero_data_is_trivial() {
    let mut c = small_continuity();
    c.data.family = Family::Zero;
    c.data.params.clear();
    let r = run_study(&c).unwrap();
    assert!(r.passed());
    assert!(r.verdicts.iter().all(|v| v.trivial));
    assert!(r.values("successive_difference").iter().all(|&d| d == 0.0));

    let mut h = ExperimentConfig::builtin(ExperimentKind::HalflineLemma);
    h.data.family = Family::Zero;
    h.refinement.levels = 2;
    h.data.alphas = vec![0.5];
    let r = run_study(&h).unwrap();
    assert!(r.passed());
    assert!(r.verdicts.iter().all(|v| v.trivial));
}

#[test]
fn continuity_fixed_point_when_s_equals_s0() {
    let mut c = small_continuity();
    c.continuity.as_mut().unwrap().s0 = 0.1;
    let r = run_study(&c).unwrap();
    let gaps = r.values("successive_difference");
    assert!(gaps[0] > 0.0);
    assert!(gaps[1..].iter().all(|&g| g == 0.0));
    assert!(r.verdicts[0].trivial && r.verdicts[0].passed);
}

#[test]
fn report_csv_layout() {
    let r = run_study(&small_continuity()).unwrap();
    let csv = String::from_utf8(r.results_csv().unwrap()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "level,grid_id,quantity,param,value,seed,salt");
    let verdicts = String::from_utf8(r.verdicts_csv().unwrap()).unwrap();
    assert_eq!(verdicts.lines().next().unwrap(), "criterion,passed,trivial,detail");
    let plot = String::from_utf8(r.plot_csv().unwrap()).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "series,level,x,value");
    assert_eq!(r.values("successive_difference").len(), 7);
}

#[test]
fn write_emits_files() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_study(&small_continuity()).unwrap();
    let files = r.write(dir.path(), true).unwrap();
    assert_eq!(files.len(), 5);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("continuity_report.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "continuity");
    assert_eq!(json["config"]["ensemble"]["paths"], 16);
    assert!(json["code_version"].is_string());
}

#[test]
fn reruns_are_byte_identical() {
    let c = small_continuity();
    let a = run_with_workers(&c, 1).unwrap();
    let b = run_with_workers(&c, 3).unwrap();
    assert_eq!(a.results_csv().unwrap(), b.results_csv().unwrap());
    assert_eq!(a.verdicts_csv().unwrap(), b.verdicts_csv().unwrap());
}

#[test]
fn seeds_matter() {
    let a = run_study(&small_continuity()).unwrap();
    let mut c = small_continuity();
    c.ensemble.seed += 1;
    let b = run_study(&c).unwrap();
    assert_ne!(a.results_csv().unwrap(), b.results_csv().unwrap());
}

#[test]
fn random_draws_differ() {
    let c = ExperimentConfig::builtin(ExperimentKind::SchauderRatio);
    let g = c.grid.build().unwrap();
    let a = build_forcing(&c, &g, 1, 0).unwrap();
    let b = build_forcing(&c, &g, 1, 1).unwrap();
    assert_ne!(a.f.values(), b.f.values());
    assert_eq!(a.f.values(), build_forcing(&c, &g, 1, 0).unwrap().f.values());
}
