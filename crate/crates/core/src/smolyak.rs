//! Deterministic sparse-grid approximation from function values at the
//! centers of all dyadic boxes of measure at least `2^-m`, and the
//! projection of that approximant onto the span of the embedding.

use crate::dyadic::{
    binomial, cell_centers, check_grid, check_point, locate_offset, pow2, Compositions, DyadicBox,
    DyadicInterval,
};
use crate::embedding::{SparseEmbedding, TripleIndex, GRID_LIMIT};
use crate::error::{Error, Result};

/// Upper bound on stored center values.
pub const MAX_PLAN_LEN: usize = 1 << 28;

/// `sum_k (-1)^k C(d-1, k) C(m-k+d-1, d-1)`, which equals 1 for all `d, m >= 1`.
pub fn binomial_identity(d: usize, m: u32) -> Result<i128> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidParameter("d and m must be at least 1".into()));
    }
    let mut total: i128 = 0;
    for k in 0..=(d - 1).min(m as usize) {
        let term = binomial(d as u64 - 1, k as u64)?
            .checked_mul(binomial(m as u64 - k as u64 + d as u64 - 1, d as u64 - 1)?)
            .and_then(|t| i128::try_from(t).ok())
            .ok_or(Error::Overflow("binomial identity"))?;
        total = if k % 2 == 0 {
            total.checked_add(term)
        } else {
            total.checked_sub(term)
        }
        .ok_or(Error::Overflow("binomial identity"))?;
    }
    Ok(total)
}

/// Lexicographic rank of weak compositions with a fixed number of parts.
#[derive(Debug, Clone)]
struct ShapeRanker {
    parts: usize,
    /// `table[n][k] = C(n, k)` for `n <= max_n`, `k <= parts`.
    table: Vec<Vec<usize>>,
}

impl ShapeRanker {
    fn new(parts: usize, max_total: u32) -> Result<Self> {
        let max_n = max_total as usize + parts + 1;
        let mut table = vec![vec![0usize; parts + 1]; max_n + 1];
        for (n, row) in table.iter_mut().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                *c = usize::try_from(binomial(n as u64, k as u64)?)
                    .map_err(|_| Error::Overflow("shape rank table"))?;
            }
        }
        Ok(ShapeRanker { parts, table })
    }

    /// Number of compositions of `levels.iter().sum()` that precede `levels`.
    fn rank(&self, levels: &[u32]) -> usize {
        let mut rem = levels.iter().sum::<u32>() as usize;
        let mut rank = 0;
        for (a, &level) in levels[..self.parts - 1].iter().enumerate() {
            // Compositions of (rem - v) into q + 1 parts, summed over v < level.
            let q = self.parts - 2 - a;
            let level = level as usize;
            rank += self.table[rem + q + 1][q + 1] - self.table[rem - level + q + 1][q + 1];
            rem -= level;
        }
        rank
    }
}

/// Values of a function at the centers of all dyadic boxes of measure
/// `>= 2^-m`, stored by level sum, then shape, then row-major offsets.
#[derive(Debug, Clone)]
pub struct CenterSamplePlan {
    d: usize,
    m: u32,
    /// First index of each level-sum block; `level_starts[m + 1]` is the length.
    level_starts: Vec<usize>,
    /// Shapes per level sum, flattened `d` at a time.
    shapes: Vec<Vec<u32>>,
    ranker: ShapeRanker,
    values: Vec<f64>,
}

impl CenterSamplePlan {
    /// Number of boxes of measure at least `2^-m`.
    pub fn layout_len(d: usize, m: u32) -> Result<usize> {
        let mut total: u128 = 0;
        for j in 0..=m {
            total = total
                .checked_add(crate::dyadic::box_count(d, j)?)
                .ok_or(Error::Overflow("plan size"))?;
        }
        let total = usize::try_from(total).map_err(|_| Error::Overflow("plan size"))?;
        if total > MAX_PLAN_LEN {
            return Err(Error::ResourceLimit(format!(
                "sparse grid with {total} centers exceeds {MAX_PLAN_LEN}"
            )));
        }
        Ok(total)
    }

    fn layout(d: usize, m: u32) -> Result<(Vec<usize>, Vec<Vec<u32>>, ShapeRanker)> {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        Self::layout_len(d, m)?;
        let mut starts = Vec::with_capacity(m as usize + 2);
        let mut shapes = Vec::with_capacity(m as usize + 1);
        let mut next = 0usize;
        for j in 0..=m {
            starts.push(next);
            let flat: Vec<u32> = Compositions::new(j, d).flatten().collect();
            next += (flat.len() / d) << j;
            shapes.push(flat);
        }
        starts.push(next);
        Ok((starts, shapes, ShapeRanker::new(d, m)?))
    }

    /// Samples `f` at every center.
    pub fn build<F>(d: usize, m: u32, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let (level_starts, shapes, ranker) = Self::layout(d, m)?;
        let mut plan = CenterSamplePlan {
            d,
            m,
            values: Vec::new(),
            level_starts,
            shapes,
            ranker,
        };
        let values: Vec<f64> = plan.boxes().map(|bx| f(&bx.center())).collect();
        plan.values = values;
        Ok(plan)
    }

    /// Wraps externally sampled values given in [`CenterSamplePlan::boxes`] order.
    pub fn from_values(d: usize, m: u32, values: Vec<f64>) -> Result<Self> {
        let (level_starts, shapes, ranker) = Self::layout(d, m)?;
        let expected = level_starts[m as usize + 1];
        if values.len() != expected {
            return Err(Error::PlanSizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(CenterSamplePlan {
            d,
            m,
            level_starts,
            shapes,
            ranker,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All boxes in storage order.
    pub fn boxes(&self) -> impl Iterator<Item = DyadicBox> + '_ {
        (0..=self.m).flat_map(move |j| {
            self.shapes[j as usize]
                .chunks_exact(self.d)
                .flat_map(move |shape| {
                    let count = 1u64 << j;
                    (0..count).map(move |mut c| {
                        let mut axes = vec![
                            DyadicInterval {
                                level: 0,
                                offset: 0
                            };
                            shape.len()
                        ];
                        for (a, &level) in shape.iter().enumerate().rev() {
                            axes[a] = DyadicInterval {
                                level,
                                offset: c & ((1u64 << level) - 1),
                            };
                            c >>= level;
                        }
                        DyadicBox::new(axes)
                    })
                })
        })
    }

    fn slot(&self, levels: &[u32], offsets: impl Iterator<Item = u64>) -> usize {
        let j: u32 = levels.iter().sum();
        let mut row_major = 0usize;
        for (&level, offset) in levels.iter().zip(offsets) {
            row_major = (row_major << level) | offset as usize;
        }
        self.level_starts[j as usize] + (self.ranker.rank(levels) << j) + row_major
    }

    /// Stored value for a box, if the box belongs to the plan.
    pub fn value(&self, bx: &DyadicBox) -> Option<f64> {
        if bx.dim() != self.d || bx.level_sum() > self.m {
            return None;
        }
        let levels = bx.levels();
        Some(self.values[self.slot(&levels, bx.axes().iter().map(|a| a.offset))])
    }

    /// Sparse-grid combination at `x` (`smolyak_evaluate`):
    /// `sum_k (-1)^k C(d-1, k) sum_{|i| = m-k} f_i(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.d)?;
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        for k in 0..=(d - 1).min(self.m as usize) {
            let j = self.m as usize - k;
            let coef = binomial(d as u64 - 1, k as u64).expect("small binomial") as f64;
            let block = self.level_starts[j];
            let mut sum = 0.0;
            for (rank, shape) in self.shapes[j].chunks_exact(d).enumerate() {
                let mut row_major = 0usize;
                for (&level, &t) in shape.iter().zip(x) {
                    row_major = (row_major << level) | locate_offset(t, level) as usize;
                }
                sum += self.values[block + (rank << j) + row_major];
            }
            total += if k % 2 == 0 { coef * sum } else { -coef * sum };
        }
        total
    }
}

/// Free-function form of [`CenterSamplePlan::evaluate`].
pub fn smolyak_evaluate(x: &[f64], plan: &CenterSamplePlan) -> Result<f64> {
    plan.evaluate(x)
}

/// Weights on the indicators of all `box_count(d, m)` boxes of measure
/// `2^-m`, in the plan's level-sum-`m` storage order.
#[derive(Debug, Clone)]
pub struct FullEmbeddingWeights {
    d: usize,
    m: u32,
    pub values: Vec<f64>,
    shapes: Vec<u32>,
}

impl FullEmbeddingWeights {
    /// `<Phi', Psi'(x)>`: sum of the weights of the finest boxes containing `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.d)?;
        let per_shape = 1usize << self.m;
        let mut total = 0.0;
        for (rank, shape) in self.shapes.chunks_exact(self.d).enumerate() {
            let mut row_major = 0usize;
            for (&level, &t) in shape.iter().zip(x) {
                row_major = (row_major << level) | locate_offset(t, level) as usize;
            }
            total += self.values[rank * per_shape + row_major];
        }
        Ok(total)
    }
}

/// Spreads the sparse-grid combination over the finest boxes:
/// entry `j` is `sum_k (-1)^k C(d-1,k)/C(k+d-1,d-1) * sum f(c_R)` over the
/// boxes `R` of measure `2^(k-m)` containing box `j`.
pub fn phi_prime(plan: &CenterSamplePlan) -> Result<FullEmbeddingWeights> {
    let (d, m) = (plan.d, plan.m);
    let kmax = (d - 1).min(m as usize);
    let weights: Vec<f64> = (0..=kmax)
        .map(|k| {
            let num = binomial(d as u64 - 1, k as u64)? as f64;
            let den = binomial((k + d - 1) as u64, d as u64 - 1)? as f64;
            Ok(if k % 2 == 0 { num / den } else { -num / den })
        })
        .collect::<Result<_>>()?;
    let finest = &plan.shapes[m as usize];
    let per_shape = 1u64 << m;
    let mut values = Vec::with_capacity(finest.len() / d * per_shape as usize);
    let mut coarse = vec![0u32; d];
    for shape in finest.chunks_exact(d) {
        for c in 0..per_shape {
            let mut offsets = vec![0u64; d];
            let mut rest = c;
            for a in (0..d).rev() {
                offsets[a] = rest & ((1u64 << shape[a]) - 1);
                rest >>= shape[a];
            }
            let mut entry = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                let mut sum = 0.0;
                for drop in Compositions::new(k as u32, d) {
                    if drop.iter().zip(shape).any(|(&dl, &l)| dl > l) {
                        continue;
                    }
                    for a in 0..d {
                        coarse[a] = shape[a] - drop[a];
                    }
                    let slot =
                        plan.slot(&coarse, offsets.iter().zip(&drop).map(|(&o, &dl)| o >> dl));
                    sum += plan.values[slot];
                }
                entry += w * sum;
            }
            values.push(entry);
        }
    }
    Ok(FullEmbeddingWeights {
        d,
        m,
        values,
        shapes: finest.clone(),
    })
}

/// Least-squares weights `w` minimizing `sum_cells (<w, Psi(x_c)> - g(x_c))^2`
/// where `g` is the sparse-grid approximant of `f`. The embedding's columns
/// are orthogonal over the cell grid with norm `2^((d-1) m)`, so the solution
/// is `A^T g / 2^((d-1) m)`.
pub fn best_linear_weights<F>(f: F, d: usize, m: u32) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let plan = CenterSamplePlan::build(d, m, f)?;
    project_plan(&plan)
}

/// [`best_linear_weights`] for an already sampled plan.
pub fn project_plan(plan: &CenterSamplePlan) -> Result<Vec<f64>> {
    let (d, m) = (plan.d, plan.m);
    check_grid(d, m, GRID_LIMIT)?;
    let index = TripleIndex::new(d, m)?;
    let mut w = vec![0.0; index.len()];
    let mut row = SparseEmbedding::with_capacity(index.nnz());
    for x in cell_centers(d, m) {
        let g = plan.evaluate_unchecked(&x);
        index.embed_unchecked(&x, &mut row);
        row.axpy_into(g, &mut w);
    }
    let scale = pow2(-(((d - 1) as u32 * m) as i32));
    for v in &mut w {
        *v *= scale;
    }
    Ok(w)
}
