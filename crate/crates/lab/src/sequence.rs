//! Fixed-design sequences in which chosen coefficient blocks are scaled up
//! while the design, intercept, other coefficients and noise stay fixed.

use blockg_core::design::{
    block_orthogonalize, center_design, fit_least_squares, BlockPartition, CenteredDesign,
    FitSummary,
};
use blockg_core::models::PriorSpec;
use blockg_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Base problem plus a schedule of multipliers for the scaled blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    /// Centered design; its response is ignored.
    pub design: CenteredDesign,
    pub alpha: f64,
    /// True slopes, one per column of the design.
    pub beta: Vec<f64>,
    /// Noise vector, drawn once and shared by every element.
    pub eps: DVector<f64>,
    /// Multipliers `c_N`, non-decreasing.
    pub schedule: Vec<f64>,
    pub prior: PriorSpec,
    /// Blocks whose coefficients are multiplied by `c_N`; block 1 by default.
    pub scaled_blocks: Vec<usize>,
    pub seed: u64,
}

/// One member of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceElement {
    pub scale: f64,
    pub design: CenteredDesign,
    pub fit: FitSummary,
}

/// Draw a standard normal `n x p` design, block-orthogonalize it and use
/// the orthogonalized columns as the design.
pub fn random_orthogonal_design(
    rng: &mut ChaCha8Rng,
    n: usize,
    sizes: &[usize],
) -> Result<CenteredDesign> {
    let p: usize = sizes.iter().sum();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let part = BlockPartition::contiguous(sizes)?;
    let zero = DVector::zeros(n);
    let raw = center_design(&x, &zero, part.clone())?;
    let (q, _) = block_orthogonalize(&raw)?;
    center_design(q.x(), &zero, part)
}

impl SequenceSpec {
    /// Random block-orthogonal base problem with block 1 scaled. The noise
    /// is `sigma` times standard normal draws from the design's stream.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        n: usize,
        sizes: &[usize],
        alpha: f64,
        beta: Vec<f64>,
        sigma: f64,
        schedule: Vec<f64>,
        prior: PriorSpec,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design = random_orthogonal_design(&mut rng, n, sizes)?;
        let eps = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        if beta.len() != design.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} predictors",
                beta.len(),
                design.p()
            )));
        }
        Ok(SequenceSpec {
            design,
            alpha,
            beta,
            eps,
            schedule,
            prior,
            scaled_blocks: vec![0],
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.design.partition().sizes()
    }

    /// Response at multiplier `c`.
    pub fn response(&self, c: f64) -> DVector<f64> {
        let part = self.design.partition();
        let mut coef = self.beta.clone();
        for &b in &self.scaled_blocks {
            for &j in part.block(b) {
                coef[j] *= c;
            }
        }
        let mean = self.design.x() * DVector::from_column_slice(&coef);
        mean.add_scalar(self.alpha) + &self.eps
    }

    /// `a` of a hyper-g type prior; `None` for a fixed g.
    pub fn prior_a(&self) -> Option<f64> {
        match self.prior {
            PriorSpec::HyperG { a } | PriorSpec::BlockHyperG { a } => Some(a),
            PriorSpec::FixedG { .. } => None,
        }
    }

    pub(crate) fn require_increasing(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::PreconditionViolated(
                "the scale schedule must be nonempty and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Responses and least-squares fits along the schedule.
pub fn make_sequence(spec: &SequenceSpec) -> Result<Vec<SequenceElement>> {
    if spec.schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::PreconditionViolated("the scale schedule must not decrease".into()));
    }
    if spec.eps.len() != spec.n() || spec.beta.len() != spec.p() {
        return Err(Error::DimensionMismatch("noise or coefficients do not match the design".into()));
    }
    let k = spec.design.partition().k();
    if spec.scaled_blocks.iter().any(|&b| b >= k) {
        return Err(Error::DimensionMismatch(format!("scaled block index out of range (k={k})")));
    }
    spec.schedule
        .iter()
        .map(|&c| {
            let design = spec.design.with_response(&spec.response(c))?;
            let fit = fit_least_squares(&design)?;
            Ok(SequenceElement { scale: c, design, fit })
        })
        .collect()
}

/// Decades `10^lo, 10^(lo+1/per), ..., 10^hi`.
pub fn log_schedule(lo: i32, hi: i32, per_decade: i32) -> Vec<f64> {
    (lo * per_decade..=hi * per_decade)
        .map(|i| 10f64.powf(i as f64 / per_decade as f64))
        .collect()
}
