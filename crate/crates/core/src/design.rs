//! Centered designs, block partitions, least squares and the `R^2`
//! decomposition consumed by every prior.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a matrix is rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Default relative tolerance for block orthogonality.
pub const ORTHO_TOL: f64 = 1e-8;

/// Ordered partition of the predictor indices `0..p` into disjoint blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    /// Validate and wrap a list of index sets covering `0..p`.
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::DomainError("partition needs at least one nonempty block".into()));
        }
        let p: usize = blocks.iter().map(|b| b.len()).sum();
        let mut seen = vec![false; p];
        for &j in blocks.iter().flatten() {
            if j >= p || seen[j] {
                return Err(Error::DomainError(format!(
                    "partition blocks must be disjoint and cover 0..{p}; bad index {j}"
                )));
            }
            seen[j] = true;
        }
        Ok(BlockPartition { blocks })
    }

    /// A single block holding all `p` predictors.
    pub fn single(p: usize) -> Result<Self> {
        Self::new(vec![(0..p).collect()])
    }

    /// Consecutive blocks with the given sizes.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut blocks = Vec::with_capacity(sizes.len());
        for &s in sizes {
            blocks.push((start..start + s).collect());
            start += s;
        }
        Self::new(blocks)
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// Block index of every predictor.
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.p()];
        for (i, b) in self.blocks.iter().enumerate() {
            for &j in b {
                m[j] = i;
            }
        }
        m
    }
}

/// Column-centered design with centered response.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDesign {
    y: DVector<f64>,
    x: DMatrix<f64>,
    partition: BlockPartition,
    x_means: Vec<f64>,
    y_mean: f64,
}

impl CenteredDesign {
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// Column means removed during centering.
    pub fn x_means(&self) -> &[f64] {
        &self.x_means
    }

    /// Mean of the raw response.
    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Columns of block `i`.
    pub fn block_matrix(&self, i: usize) -> DMatrix<f64> {
        self.x.select_columns(self.partition.block(i))
    }

    /// Same design with a new centered response and raw mean.
    pub fn with_response(&self, y_raw: &DVector<f64>) -> Result<CenteredDesign> {
        if y_raw.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has {}",
                y_raw.len(),
                self.n()
            )));
        }
        let (y, y_mean) = center_vector(y_raw);
        Ok(CenteredDesign { y, y_mean, ..self.clone() })
    }

    /// Sub-design keeping the predictors flagged in `gamma`, with the
    /// partition restricted to them. Returns `None` for the empty model.
    pub fn subdesign(&self, gamma: &[bool]) -> Result<Option<CenteredDesign>> {
        if gamma.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "inclusion vector has length {}, design has {} predictors",
                gamma.len(),
                self.p()
            )));
        }
        let cols: Vec<usize> = (0..self.p()).filter(|&j| gamma[j]).collect();
        if cols.is_empty() {
            return Ok(None);
        }
        let mut pos = vec![usize::MAX; self.p()];
        for (new, &old) in cols.iter().enumerate() {
            pos[old] = new;
        }
        let blocks: Vec<Vec<usize>> = self
            .partition
            .blocks()
            .iter()
            .map(|b| b.iter().filter(|&&j| gamma[j]).map(|&j| pos[j]).collect::<Vec<_>>())
            .filter(|b: &Vec<usize>| !b.is_empty())
            .collect();
        Ok(Some(CenteredDesign {
            y: self.y.clone(),
            x: self.x.select_columns(&cols),
            partition: BlockPartition::new(blocks)?,
            x_means: cols.iter().map(|&j| self.x_means[j]).collect(),
            y_mean: self.y_mean,
        }))
    }
}

fn center_vector(v: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let tol = 1e-10 * n * v.amax();
    if (mean * n).abs() <= tol {
        (v.clone(), mean)
    } else {
        (v.map(|x| x - mean), mean)
    }
}

fn check_rank(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.ncols() == 0 {
        return Ok(());
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min < RANK_TOL * max {
        return Err(Error::RankDeficient(format!(
            "{what}: singular value ratio {:.3e} below {RANK_TOL:e}",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    Ok(())
}

/// Center raw data and validate the partition.
///
/// Columns (and the response) that already sum to zero within
/// `1e-10 * n * max|entry|` are kept bit for bit.
pub fn center_design(
    x_raw: &DMatrix<f64>,
    y_raw: &DVector<f64>,
    partition: BlockPartition,
) -> Result<CenteredDesign> {
    let (n, p) = x_raw.shape();
    if y_raw.len() != n {
        return Err(Error::DimensionMismatch(format!("X has {n} rows but y has {}", y_raw.len())));
    }
    if partition.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} predictors, X has {p} columns",
            partition.p()
        )));
    }
    if n <= p {
        return Err(Error::DimensionMismatch(format!("need n > p, got n={n}, p={p}")));
    }
    let mut x = x_raw.clone();
    let mut x_means = Vec::with_capacity(p);
    for j in 0..p {
        let col = x_raw.column(j).clone_owned();
        let (c, m) = center_vector(&col);
        x.set_column(j, &c);
        x_means.push(m);
    }
    check_rank(&x, "centered design")?;
    let (y, y_mean) = center_vector(y_raw);
    Ok(CenteredDesign { y, x, partition, x_means, y_mean })
}

/// Every statistic the Bayes factor and shrinkage formulas consume.
///
/// `tss`, `rss` and `ss_blocks` are kept alongside the ratios so that
/// `1 - R^2 = rss / tss` retains full precision when `R^2` is close to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub n: usize,
    pub p: usize,
    pub p_blocks: Vec<usize>,
    pub alpha_hat: f64,
    pub beta_hat_ls: Vec<f64>,
    pub sigma2_hat: f64,
    pub r2: f64,
    pub r2_blocks: Vec<f64>,
    /// `y^T y` of the centered response.
    pub tss: f64,
    /// Residual sum of squares.
    pub rss: f64,
    /// `y^T P_{X_i} y` per block.
    pub ss_blocks: Vec<f64>,
    /// Whether the design passed the block orthogonality check.
    pub block_orthogonal: bool,
    /// Partition of the fitted design.
    pub partition: BlockPartition,
}

impl FitSummary {
    /// `1 - R^2` computed as `rss / tss`.
    pub fn one_minus_r2(&self) -> f64 {
        if self.tss > 0.0 {
            self.rss / self.tss
        } else {
            1.0
        }
    }

    /// Summary with no data behind it, parameterized by block sums of
    /// squares and the residual sum of squares (`tss = rss + Σ ss_i`).
    /// Treated as block orthogonal; least-squares coefficients are zero.
    pub fn from_sums(n: usize, p_blocks: &[usize], ss_blocks: &[f64], rss: f64) -> Result<Self> {
        if p_blocks.len() != ss_blocks.len() || p_blocks.is_empty() {
            return Err(Error::DimensionMismatch("one sum of squares per block required".into()));
        }
        if ss_blocks.iter().any(|&s| !(s >= 0.0)) || !(rss >= 0.0) {
            return Err(Error::DomainError("sums of squares must be nonnegative".into()));
        }
        let p: usize = p_blocks.iter().sum();
        let tss = rss + ss_blocks.iter().sum::<f64>();
        if !(tss > 0.0) {
            return Err(Error::DomainError("total sum of squares must be positive".into()));
        }
        let dof = n as f64 - p as f64 - 1.0;
        Ok(FitSummary {
            n,
            p,
            p_blocks: p_blocks.to_vec(),
            alpha_hat: 0.0,
            beta_hat_ls: vec![0.0; p],
            sigma2_hat: if dof > 0.0 { rss / dof } else { 0.0 },
            r2: (tss - rss) / tss,
            r2_blocks: ss_blocks.iter().map(|s| s / tss).collect(),
            tss,
            rss,
            ss_blocks: ss_blocks.to_vec(),
            block_orthogonal: true,
            partition: BlockPartition::contiguous(p_blocks)?,
        })
    }

    /// Summary from block `R_i^2` values with unit total sum of squares.
    pub fn from_r2(n: usize, p_blocks: &[usize], r2_blocks: &[f64]) -> Result<Self> {
        let total: f64 = r2_blocks.iter().sum();
        if total > 1.0 {
            return Err(Error::DomainError(format!("block R^2 values sum to {total} > 1")));
        }
        Self::from_sums(n, p_blocks, r2_blocks, 1.0 - total)
    }

    /// Least-squares coefficients of block `i`.
    pub fn beta_block(&self, i: usize) -> Vec<f64> {
        self.partition.block(i).iter().map(|&j| self.beta_hat_ls[j]).collect()
    }
}

fn projection_ss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let q = x.clone().qr().q();
    (q.transpose() * y).norm_squared()
}

/// Least squares by Householder QR (no normal equations).
pub fn fit_least_squares(d: &CenteredDesign) -> Result<FitSummary> {
    let (n, p) = d.x.shape();
    check_rank(&d.x, "design")?;
    let qr = d.x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &d.y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let fitted = &q * &qty;
    // With n = p + 1 the centered residual space is empty.
    let rss = if n == p + 1 { 0.0 } else { (&d.y - fitted).norm_squared() };
    let ssreg = qty.norm_squared();
    let tss = ssreg + rss;
    let k = d.partition.k();
    let ss_blocks: Vec<f64> = if k == 1 {
        vec![ssreg]
    } else {
        (0..k).map(|i| projection_ss(&d.block_matrix(i), &d.y)).collect()
    };
    let dof = n as f64 - p as f64 - 1.0;
    let ratio = |s: f64| if tss > 0.0 { s / tss } else { 0.0 };
    Ok(FitSummary {
        n,
        p,
        p_blocks: d.partition.sizes(),
        alpha_hat: d.y_mean,
        beta_hat_ls: beta.iter().cloned().collect(),
        sigma2_hat: if dof > 0.0 { rss / dof } else { 0.0 },
        r2: ratio(ssreg),
        r2_blocks: ss_blocks.iter().map(|&s| ratio(s)).collect(),
        tss,
        rss,
        ss_blocks,
        block_orthogonal: check_block_orthogonality(d, ORTHO_TOL),
        partition: d.partition.clone(),
    })
}

/// Largest absolute cross-block Gram entry and the largest squared column norm.
pub fn cross_block_gram(d: &CenteredDesign) -> (f64, f64) {
    let x = &d.x;
    let scale = x.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    let member = d.partition.membership();
    let mut worst: f64 = 0.0;
    for i in 0..x.ncols() {
        for j in (i + 1)..x.ncols() {
            if member[i] != member[j] {
                worst = worst.max(x.column(i).dot(&x.column(j)).abs());
            }
        }
    }
    (worst, scale)
}

/// True iff every cross-block Gram entry is at most `tol` times the largest
/// squared column norm.
pub fn check_block_orthogonality(d: &CenteredDesign, tol: f64) -> bool {
    if d.partition.k() == 1 {
        return true;
    }
    let (worst, scale) = cross_block_gram(d);
    worst <= tol * scale
}

/// Coefficient map of a block orthogonalization: `X β = Q κ` with `κ = T β`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTransform {
    /// `p x p` matrix, identity on diagonal blocks, zero below them.
    pub t: DMatrix<f64>,
}

impl BlockTransform {
    pub fn kappa_from_beta(&self, beta: &[f64]) -> Vec<f64> {
        (&self.t * DVector::from_column_slice(beta)).iter().cloned().collect()
    }

    pub fn beta_from_kappa(&self, kappa: &[f64]) -> Result<Vec<f64>> {
        self.t
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(kappa))
            .map(|v| v.iter().cloned().collect())
            .ok_or_else(|| Error::RankDeficient("singular block transform".into()))
    }
}

/// Successively residualize each block on the span of the preceding ones.
/// Block 1 is returned unchanged.
pub fn block_orthogonalize(d: &CenteredDesign) -> Result<(CenteredDesign, BlockTransform)> {
    let (n, p) = d.x.shape();
    let part = &d.partition;
    let mut out = d.x.clone();
    let mut t = DMatrix::<f64>::identity(p, p);
    let mut basis = DMatrix::<f64>::zeros(n, 0);
    let mut q_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(part.k());
    for (bi, cols) in part.blocks().iter().enumerate() {
        let xj = d.x.select_columns(cols);
        let mut res = xj.clone();
        if basis.ncols() > 0 {
            for _ in 0..2 {
                let proj = &basis * (basis.transpose() * &res);
                res -= proj;
            }
            let sx = xj.clone().svd(false, false).singular_values.max();
            let sr = res.clone().svd(false, false).singular_values;
            if sr.min() < RANK_TOL * sx {
                return Err(Error::RankDeficient(format!(
                    "block {} is (numerically) in the span of earlier blocks",
                    bi + 1
                )));
            }
        }
        for (prev_i, qi) in q_blocks.iter().enumerate() {
            let qr = qi.clone().qr();
            let rhs = qr.q().transpose() * &xj;
            let coef = qr
                .r()
                .solve_upper_triangular(&rhs)
                .ok_or_else(|| Error::RankDeficient("singular block factor".into()))?;
            for (a, &ri) in part.block(prev_i).iter().enumerate() {
                for (b, &cj) in cols.iter().enumerate() {
                    t[(ri, cj)] = coef[(a, b)];
                }
            }
        }
        for (b, &cj) in cols.iter().enumerate() {
            out.set_column(cj, &res.column(b));
        }
        let qthin = res.clone().qr().q();
        let mut nb = DMatrix::<f64>::zeros(n, basis.ncols() + qthin.ncols());
        nb.columns_mut(0, basis.ncols()).copy_from(&basis);
        nb.columns_mut(basis.ncols(), qthin.ncols()).copy_from(&qthin);
        basis = nb;
        q_blocks.push(res);
    }
    let design = CenteredDesign {
        y: d.y.clone(),
        x: out,
        partition: d.partition.clone(),
        x_means: d.x_means.clone(),
        y_mean: d.y_mean,
    };
    Ok((design, BlockTransform { t }))
}
