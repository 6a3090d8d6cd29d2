use blockg_core::models::PriorSpec;
use blockg_lab::experiments::{
    run_clp_experiment, run_els_experiment, run_info_consistency, sigma2_limit_check, InfoRegime,
    NestedPair,
};
use blockg_lab::scenarios::{clp_default, els_default, run_named, EXPERIMENTS};
use blockg_lab::sequence::log_schedule;
use blockg_lab::ExperimentResult;

fn assert_all_pass(res: &ExperimentResult) {
    for v in &res.verdicts {
        println!("{} | {} | {} | {}", res.name, v.claim, v.pass, v.detail);
    }
    assert!(!res.verdicts.is_empty());
    assert!(res.passed(), "{}: {:#?}", res.name, res.verdicts);
}

#[test]
fn sequence_experiments_pass_with_defaults() {
    for name in EXPERIMENTS.iter().filter(|n| !matches!(**n, "selection" | "prediction")) {
        let res = run_named(name, 11, None).unwrap();
        assert_all_pass(&res);
    }
}

#[test]
fn unknown_experiment_is_rejected() {
    assert_eq!(run_named("nope", 1, None).unwrap_err().tag(), "PreconditionViolated");
}

#[test]
fn fixed_g_prior_has_no_least_squares_limit() {
    let mut spec = els_default(3).unwrap();
    spec.prior = PriorSpec::FixedG { g: 10.0 };
    assert_eq!(run_els_experiment(&spec).unwrap_err().tag(), "PreconditionViolated");
}

#[test]
fn non_increasing_schedule_is_rejected() {
    let mut spec = els_default(3).unwrap();
    spec.schedule = vec![1.0, 1.0, 2.0];
    assert_eq!(run_els_experiment(&spec).unwrap_err().tag(), "PreconditionViolated");
}

#[test]
fn identical_models_give_unit_bayes_factor() {
    let spec = clp_default(5).unwrap();
    let pair = NestedPair { small: vec![0, 1], large: vec![0, 1] };
    let res = run_clp_experiment(&spec, &pair).unwrap();
    assert!(res.series("hyper_g_log_bf").iter().all(|(_, v)| *v == 0.0));
    assert!(res.passed());
}

#[test]
fn nested_pair_must_contain_block_one() {
    let spec = clp_default(5).unwrap();
    let pair = NestedPair { small: vec![1], large: vec![0, 1] };
    assert_eq!(run_clp_experiment(&spec, &pair).unwrap_err().tag(), "PreconditionViolated");
}

#[test]
fn bounded_regime_when_sample_is_small() {
    // n = 5 with k = 2, a = 3, p = 3 is below k(a-2)+p+1 = 6, so the
    // total-R^2 Bayes factor stays bounded.
    let spec = blockg_lab::sequence::SequenceSpec::random(
        5,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.5],
        1.0,
        log_schedule(0, 10, 1),
        PriorSpec::BlockHyperG { a: 3.0 },
        2,
    )
    .unwrap();
    let res = run_info_consistency(&spec, InfoRegime::TotalR2).unwrap();
    assert_all_pass(&res);
    assert!(res.verdicts.iter().any(|v| v.claim.contains("bounded")));
}

#[test]
fn sigma2_check_requires_enough_data() {
    let spec = blockg_lab::sequence::SequenceSpec::random(
        6,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.5],
        1.0,
        log_schedule(0, 4, 1),
        PriorSpec::BlockHyperG { a: 3.0 },
        2,
    )
    .unwrap();
    assert_eq!(sigma2_limit_check(&spec).unwrap_err().tag(), "PreconditionViolated");
}

#[test]
fn experiments_are_deterministic_and_write_outputs() {
    let a = run_named("els", 9, None).unwrap();
    let b = run_named("els", 9, None).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("els.csv");
    let json = dir.path().join("els.json");
    a.write_csv(&csv).unwrap();
    a.write_verdict_json(&json).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().contains("statistic"));
    assert_eq!(text.lines().count(), a.rows.len() + 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["seed"], 9);
}

#[test]
fn overrides_reshape_the_scenario() {
    use blockg_lab::scenarios::{run_named_with, ScenarioOverrides};
    let small = ScenarioOverrides {
        n: Some(4),
        block_sizes: Some(vec![2, 2]),
        prior: Some(PriorSpec::HyperG { a: 3.0 }),
    };
    let err = run_named_with("els", 1, None, &small).unwrap_err();
    assert_eq!(err.tag(), "PreconditionViolated");
    let wide = ScenarioOverrides { n: Some(40), block_sizes: Some(vec![3, 1, 1]), prior: None };
    let res = run_named_with("els", 1, None, &wide).unwrap();
    assert!(res.series("block_t_3").len() > 1);
    assert!(res.passed(), "{:#?}", res.verdicts);
    let err = run_named_with("selection", 1, None, &wide).unwrap_err();
    assert_eq!(err.tag(), "PreconditionViolated");
    assert_eq!(run_named("info", 1, None).unwrap(), run_named("info-total", 1, None).unwrap());
}
