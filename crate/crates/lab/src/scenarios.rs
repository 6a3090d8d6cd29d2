//! Default settings of every experiment and a runner keyed by name.

use blockg_core::models::PriorSpec;
use blockg_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::experiments::{
    run_clp_experiment, run_els_experiment, run_info_consistency, sigma2_limit_check, InfoRegime,
    NestedPair,
};
use crate::result::ExperimentResult;
use crate::sequence::{log_schedule, SequenceSpec};
use crate::simulation::{
    run_prediction_experiment, run_selection_experiment, PredictionConfig, SelectionConfig,
};

/// Names accepted by [`run_named`]; `info` is an alias of `info-total`.
pub const EXPERIMENTS: [&str; 10] = [
    "els",
    "clp",
    "clp-small-n",
    "info",
    "info-total",
    "info-block",
    "info-fixed-g",
    "sigma2",
    "selection",
    "prediction",
];

/// Shrinkage sequence: block hyper-g with `a = 3`, blocks of sizes 2 and 2,
/// `n = 50`, block 1 scaled over `10^0 .. 10^8`.
pub fn els_default(seed: u64) -> Result<SequenceSpec> {
    SequenceSpec::random(
        50,
        &[2, 2],
        1.0,
        vec![1.0, -1.0, 0.5, 0.3],
        1.0,
        log_schedule(0, 8, 2),
        PriorSpec::BlockHyperG { a: 3.0 },
        seed,
    )
}

/// Nested-model sequence with `n = 50`, blocks of sizes 2 and 1.
pub fn clp_default(seed: u64) -> Result<SequenceSpec> {
    SequenceSpec::random(
        50,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.0],
        1.0,
        log_schedule(0, 8, 2),
        PriorSpec::BlockHyperG { a: 3.0 },
        seed,
    )
}

/// Nested-model sequence with `n = 4` and `a = 4`, below the threshold
/// `a + p_1 - 1`.
pub fn clp_small_n(seed: u64) -> Result<SequenceSpec> {
    SequenceSpec::random(
        4,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.3],
        1.0,
        log_schedule(0, 8, 2),
        PriorSpec::BlockHyperG { a: 4.0 },
        seed,
    )
}

/// Information-consistency sequence with `n = 30`, blocks of sizes 2 and 1.
pub fn info_default(prior: PriorSpec, seed: u64) -> Result<SequenceSpec> {
    SequenceSpec::random(
        30,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.5],
        1.0,
        log_schedule(0, 8, 1),
        prior,
        seed,
    )
}

/// `σ^2` limit sequence with `a = 3`, `n = 30`, blocks of sizes 2 and 1.
pub fn sigma2_default(seed: u64) -> Result<SequenceSpec> {
    SequenceSpec::random(
        30,
        &[2, 1],
        1.0,
        vec![1.0, -1.0, 0.5],
        1.0,
        log_schedule(0, 8, 1),
        PriorSpec::BlockHyperG { a: 3.0 },
        seed,
    )
}

/// Changes to the default scenario of a sequence experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    /// Sample size.
    pub n: Option<usize>,
    /// Block sizes; block 1 gets coefficients `1, -1, 1, ...` and later
    /// blocks `0.5, -0.5, ...`.
    pub block_sizes: Option<Vec<usize>>,
    pub prior: Option<PriorSpec>,
}

impl ScenarioOverrides {
    fn apply(&self, mut spec: SequenceSpec) -> Result<SequenceSpec> {
        if self.n.is_none() && self.block_sizes.is_none() && self.prior.is_none() {
            return Ok(spec);
        }
        let n = self.n.unwrap_or(spec.n());
        let sizes = self.block_sizes.clone().unwrap_or_else(|| spec.sizes());
        let prior = self.prior.unwrap_or(spec.prior);
        prior.validate()?;
        let mut beta = Vec::new();
        for (i, &s) in sizes.iter().enumerate() {
            let mag = if i == 0 { 1.0 } else { 0.5 };
            beta.extend((0..s).map(|j| if j % 2 == 0 { mag } else { -mag }));
        }
        if n < 2 || sizes.is_empty() || sizes.contains(&0) || n <= beta.len() {
            return Err(Error::PreconditionViolated(format!(
                "need nonempty blocks and n > p (n = {n}, p = {})",
                beta.len()
            )));
        }
        let scaled = spec.scaled_blocks.clone();
        spec = SequenceSpec::random(n, &sizes, spec.alpha, beta, 1.0, spec.schedule, prior, spec.seed)?;
        spec.scaled_blocks = scaled;
        Ok(spec)
    }
}

/// Run a named experiment with its defaults. `budget` caps `reps * Σ n` in
/// the simulation studies.
pub fn run_named(name: &str, seed: u64, budget: Option<usize>) -> Result<ExperimentResult> {
    run_named_with(name, seed, budget, &ScenarioOverrides::default())
}

/// [`run_named`] with the sequence scenario modified by `over`. Overrides
/// are rejected for the simulation studies.
pub fn run_named_with(
    name: &str,
    seed: u64,
    budget: Option<usize>,
    over: &ScenarioOverrides,
) -> Result<ExperimentResult> {
    let block3 = PriorSpec::BlockHyperG { a: 3.0 };
    match name {
        "els" => run_els_experiment(&over.apply(els_default(seed)?)?),
        "clp" => run_clp_experiment(&over.apply(clp_default(seed)?)?, &NestedPair::first_two()),
        "clp-small-n" => {
            run_clp_experiment(&over.apply(clp_small_n(seed)?)?, &NestedPair::first_two())
        }
        "info" | "info-total" => {
            run_info_consistency(&over.apply(info_default(block3, seed)?)?, InfoRegime::TotalR2)
        }
        "info-block" => {
            run_info_consistency(&over.apply(info_default(block3, seed)?)?, InfoRegime::BlockR2)
        }
        "info-fixed-g" => run_info_consistency(
            &over.apply(info_default(PriorSpec::FixedG { g: 30.0 }, seed)?)?,
            InfoRegime::TotalR2,
        ),
        "sigma2" => sigma2_limit_check(&over.apply(sigma2_default(seed)?)?),
        "selection" | "prediction" if *over != ScenarioOverrides::default() => {
            Err(Error::PreconditionViolated(format!(
                "the {name} study has a fixed design; scenario overrides are not supported"
            )))
        }
        "selection" => {
            let mut cfg = SelectionConfig { seed, ..Default::default() };
            if let Some(b) = budget {
                cfg.budget = b;
            }
            run_selection_experiment(&cfg)
        }
        "prediction" => {
            let mut cfg = PredictionConfig { seed, ..Default::default() };
            if let Some(b) = budget {
                cfg.budget = b;
            }
            run_prediction_experiment(&cfg)
        }
        other => Err(Error::PreconditionViolated(format!(
            "unknown experiment '{other}'; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}
