//! Block-diagonal correlation structures and their precision matrices.
//!
//! Observations of one subject form one block. Within a block, the AR(1)
//! family correlates visits by position (`ρ^{|i−j|}`) and the continuous-time
//! CAR(1) family by elapsed time (`ρ^{|tᵢ−tⱼ|}`). Both are Markov, so the
//! precision of a block is tridiagonal and is written down directly from the
//! successive-lag correlations `aₖ = ρ^{gapₖ}`:
//!
//! ```text
//! P₁₁ = 1/(1−a₁²)            P_gg = 1/(1−a_{g−1}²)
//! Pₖₖ = (1−a_{k−1}²aₖ²) / ((1−a_{k−1}²)(1−aₖ²))
//! P_{k,k+1} = −aₖ/(1−aₖ²)
//! ```
//!
//! with `log det Σ_block = Σₖ log(1−aₖ²)`.

use crate::dataset::Groups;
use crate::error::{Error, Result};
use crate::linalg::{BlockDiag, Cholesky, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Identity,
    Ar1,
    Car1,
}

impl Family {
    /// Open interval of admissible ρ, or `None` when ρ is ignored.
    pub fn rho_bounds(self) -> Option<(f64, f64)> {
        match self {
            Family::Identity => None,
            Family::Ar1 => Some((-1.0, 1.0)),
            Family::Car1 => Some((0.0, 1.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Identity => "identity",
            Family::Ar1 => "ar1",
            Family::Car1 => "car1",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "ols" => Ok(Family::Identity),
            "ar1" => Ok(Family::Ar1),
            "car1" => Ok(Family::Car1),
            other => Err(Error::domain(format!(
                "unknown correlation family {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationModel<T> {
    family: Family,
    rho: T,
}

impl<T: Real> CorrelationModel<T> {
    pub fn new(family: Family, rho: T) -> Result<Self> {
        if let Some((lo, hi)) = family.rho_bounds() {
            let r = rho.to_f64_lossy();
            if !(r > lo && r < hi) {
                return Err(Error::domain(format!(
                    "{family} requires rho in ({lo}, {hi}), got {r}"
                )));
            }
        }
        let rho = if family == Family::Identity {
            T::zero()
        } else {
            rho
        };
        Ok(CorrelationModel { family, rho })
    }

    pub fn identity() -> Self {
        CorrelationModel {
            family: Family::Identity,
            rho: T::zero(),
        }
    }

    pub fn ar1(rho: T) -> Result<Self> {
        Self::new(Family::Ar1, rho)
    }

    pub fn car1(rho: T) -> Result<Self> {
        Self::new(Family::Car1, rho)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn with_rho(&self, rho: T) -> Result<Self> {
        Self::new(self.family, rho)
    }

    /// Correlation between two observations of the same subject.
    fn pair(&self, ti: T, tj: T, pi: usize, pj: usize) -> T {
        match self.family {
            Family::Identity => {
                if pi == pj {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Family::Ar1 => self.rho.powi(pi.abs_diff(pj) as i32),
            Family::Car1 => {
                let gap = (ti - tj).abs();
                if gap == T::zero() {
                    T::one()
                } else {
                    self.rho.powf(gap)
                }
            }
        }
    }
}

/// Block-diagonal correlation matrix Σ.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix<T> {
    blocks: BlockDiag<T>,
    /// Successive-lag correlations per block when the structure is Markov.
    steps: Option<Vec<Vec<T>>>,
}

impl<T: Real> CorrelationMatrix<T> {
    /// Arbitrary symmetric positive-definite blocks; inverted densely.
    pub fn from_blocks(blocks: Vec<Matrix<T>>) -> Self {
        CorrelationMatrix {
            blocks: BlockDiag::new(blocks),
            steps: None,
        }
    }

    pub fn blocks(&self) -> &BlockDiag<T> {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.blocks.get(i, j)
    }

    pub fn to_dense(&self) -> Matrix<T> {
        self.blocks.to_dense()
    }
}

/// Σ for `model` on the layout given by `groups`, with `times` used by CAR(1)
/// and within-subject `positions` used by AR(1).
pub fn build_correlation<T: Real>(
    model: &CorrelationModel<T>,
    groups: &Groups,
    times: &[T],
    positions: &[usize],
) -> Result<CorrelationMatrix<T>> {
    let n = groups.n_obs();
    if times.len() != n || positions.len() != n {
        return Err(Error::data("times/positions length does not match groups"));
    }
    let mut blocks = Vec::with_capacity(groups.len());
    let mut steps = Vec::with_capacity(groups.len());
    for r in groups.ranges() {
        let o = r.start;
        let g = r.len();
        blocks.push(Matrix::from_fn(g, g, |a, b| {
            model.pair(
                times[o + a],
                times[o + b],
                positions[o + a],
                positions[o + b],
            )
        }));
        steps.push(
            (o..r.end - 1)
                .map(|i| model.pair(times[i], times[i + 1], positions[i], positions[i + 1]))
                .collect(),
        );
    }
    Ok(CorrelationMatrix {
        blocks: BlockDiag::new(blocks),
        steps: Some(steps),
    })
}

/// Precision matrix Σ⁻¹ together with `log det Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionMatrix<T> {
    blocks: BlockDiag<T>,
    block_log_det: Vec<T>,
}

impl<T: Real> PrecisionMatrix<T> {
    pub fn blocks(&self) -> &BlockDiag<T> {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.blocks.get(i, j)
    }

    pub fn diag(&self) -> Vec<T> {
        self.blocks.diag()
    }

    /// `log det Σ` (of the correlation matrix, not of the precision).
    pub fn log_det_sigma(&self) -> T {
        self.block_log_det.iter().copied().sum()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.blocks.mul_vec(v)
    }

    pub fn mul_mat(&self, x: &Matrix<T>) -> Matrix<T> {
        self.blocks.mul_mat(x)
    }

    /// Σ^M: the `M × M` block of Σ⁻¹.
    pub fn principal(&self, m: &SubsetIndex) -> Matrix<T> {
        self.blocks.principal(m.indices())
    }

    pub fn to_dense(&self) -> Matrix<T> {
        self.blocks.to_dense()
    }
}

fn markov_block<T: Real>(a: &[T], group: usize) -> Result<(Matrix<T>, T)> {
    let g = a.len() + 1;
    let one = T::one();
    let mut q = Vec::with_capacity(a.len());
    for &ak in a {
        let rc = (one - ak.abs()) / (one + ak.abs());
        if !(rc >= T::rcond_floor()) {
            return Err(Error::Conditioning {
                what: format!("correlation block of group {group}"),
                rcond: rc.to_f64_lossy(),
            });
        }
        q.push(one - ak * ak);
    }
    let mut p = Matrix::zeros(g, g);
    if g == 1 {
        p[(0, 0)] = one;
        return Ok((p, T::zero()));
    }
    p[(0, 0)] = one / q[0];
    p[(g - 1, g - 1)] = one / q[g - 2];
    for k in 1..g - 1 {
        p[(k, k)] = (one - a[k - 1] * a[k - 1] * a[k] * a[k]) / (q[k - 1] * q[k]);
    }
    for k in 0..g - 1 {
        let v = -a[k] / q[k];
        p[(k, k + 1)] = v;
        p[(k + 1, k)] = v;
    }
    let log_det = q.iter().map(|v| v.ln()).sum();
    Ok((p, log_det))
}

fn dense_block<T: Real>(block: &Matrix<T>, group: usize) -> Result<(Matrix<T>, T)> {
    let ch = Cholesky::new(block).map_err(|e| Error::Conditioning {
        what: format!("correlation block of group {group}"),
        rcond: e.rcond,
    })?;
    Ok((ch.inverse(), ch.log_det()))
}

/// Σ⁻¹, blockwise. Markov blocks use the closed-form tridiagonal inverse
/// (entries beyond the first off-diagonal are exactly zero); other blocks are
/// inverted through a Cholesky factor.
pub fn inverse_correlation<T: Real>(sigma: &CorrelationMatrix<T>) -> Result<PrecisionMatrix<T>> {
    let nb = sigma.blocks.blocks().len();
    let mut blocks = Vec::with_capacity(nb);
    let mut logs = Vec::with_capacity(nb);
    for (b, block) in sigma.blocks.blocks().iter().enumerate() {
        let (inv, ld) = match &sigma.steps {
            Some(steps) => markov_block(&steps[b], b)?,
            None => dense_block(block, b)?,
        };
        blocks.push(inv);
        logs.push(ld);
    }
    Ok(PrecisionMatrix {
        blocks: BlockDiag::new(blocks),
        block_log_det: logs,
    })
}

/// Partial-correlation normalisation of a precision matrix:
/// `Sᵢ = 1/Σ^{ii}` and `C = S^{1/2} Σ⁻¹ S^{1/2}` (unit diagonal).
#[derive(Clone, Debug, PartialEq)]
pub struct PartialCorrelation<T> {
    s: Vec<T>,
    c: BlockDiag<T>,
}

impl<T: Real> PartialCorrelation<T> {
    pub fn s(&self) -> &[T] {
        &self.s
    }

    pub fn c(&self) -> &BlockDiag<T> {
        &self.c
    }

    /// C^M, the `M × M` block of C.
    pub fn principal(&self, m: &SubsetIndex) -> Matrix<T> {
        self.c.principal(m.indices())
    }
}

pub fn partial_correlation<T: Real>(prec: &PrecisionMatrix<T>) -> PartialCorrelation<T> {
    let s: Vec<T> = prec.diag().iter().map(|&d| T::one() / d).collect();
    let root: Vec<T> = s.iter().map(|v| v.sqrt()).collect();
    let mut blocks = Vec::with_capacity(prec.blocks.blocks().len());
    for (b, block) in prec.blocks.blocks().iter().enumerate() {
        let o = prec.blocks.offset(b);
        let g = block.nrows();
        blocks.push(Matrix::from_fn(g, g, |i, j| {
            if i == j {
                T::one()
            } else {
                root[o + i] * block[(i, j)] * root[o + j]
            }
        }));
    }
    PartialCorrelation {
        s,
        c: BlockDiag::new(blocks),
    }
}

/// Sorted set of distinct observation indices (0-based) deleted together.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetIndex {
    indices: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("subset contains repeated indices"));
        }
        if indices.is_empty() || indices.len() >= n {
            return Err(Error::domain(format!(
                "subset size must be in 1..{n}, got {}",
                indices.len()
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::domain(format!(
                    "index {} out of range for n = {n}",
                    last + 1
                )));
            }
        }
        Ok(SubsetIndex { indices })
    }

    pub fn single(i: usize, n: usize) -> Result<Self> {
        Self::new(vec![i], n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Indices of `0..n` not in the subset, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n - self.indices.len());
        let mut it = self.indices.iter().peekable();
        for i in 0..n {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

/// (Σ₍M₎)⁻¹, the inverse of Σ with rows and columns `M` removed, obtained from
/// Σ⁻¹ as the complement block of `Σ⁻¹ − Σ^{M cols} (Σ^M)⁻¹ Σ^{M rows}`.
/// Subjects losing every row drop out of the block layout.
pub fn deleted_precision<T: Real>(
    prec: &PrecisionMatrix<T>,
    m: &SubsetIndex,
) -> Result<PrecisionMatrix<T>> {
    let bd = &prec.blocks;
    let mut blocks = Vec::new();
    let mut logs = Vec::new();
    let mut cursor = 0;
    let del = m.indices();
    for (b, block) in bd.blocks().iter().enumerate() {
        let o = bd.offset(b);
        let g = block.nrows();
        let mut local_del = Vec::new();
        while cursor < del.len() && del[cursor] < o + g {
            local_del.push(del[cursor] - o);
            cursor += 1;
        }
        if local_del.is_empty() {
            blocks.push(block.clone());
            logs.push(prec.block_log_det[b]);
            continue;
        }
        if local_del.len() == g {
            continue;
        }
        let keep: Vec<usize> = (0..g).filter(|k| !local_del.contains(k)).collect();
        let p_mm = block.principal(&local_del);
        let ch = Cholesky::new(&p_mm).map_err(|e| Error::Conditioning {
            what: format!("precision block of deleted rows in group {b}"),
            rcond: e.rcond,
        })?;
        let p_km = Matrix::from_fn(keep.len(), local_del.len(), |i, j| {
            block[(keep[i], local_del[j])]
        });
        let mut reduced = block.principal(&keep);
        for j in 0..keep.len() {
            let w = ch.solve(p_km.row(j));
            for i in 0..keep.len() {
                reduced[(i, j)] -= crate::linalg::dot(p_km.row(i), &w);
            }
        }
        // det Σ = det Σ₍M₎ / det Σ^M
        logs.push(prec.block_log_det[b] + ch.log_det());
        blocks.push(reduced);
    }
    Ok(PrecisionMatrix {
        blocks: BlockDiag::new(blocks),
        block_log_det: logs,
    })
}
