//! The sparse tensor-Haar embedding of `[0, 1]^d` into `R^p`.
//!
//! Every coordinate is labelled by a [`Triple`] `(k, r, R)`: `r` lists the
//! `k + 1` live axes (always starting with axis 0), and `R` is a dyadic box
//! of measure `2^(k-m)` that is the whole unit interval on every other axis.
//! The coordinate is the indicator of `R` when `k = 0`, and otherwise
//!
//! ```text
//! 2^(-k/2) * prod_{j=1..k} (chi[R right half along r_j] - chi[R left half along r_j])
//! ```
//!
//! Coordinates are laid out in a fixed order: ascending `k`, then `r`
//! lexicographically, then the level vector of the axes `r_1..r_k`
//! lexicographically (the level of axis 0 absorbs the remainder), then the
//! box offsets row-major in the axis order `(0, r_1, ..., r_k)`. For `d = 3`
//! this is the classical three-block layout, e.g. the `(k=1, r=(0,1))` block
//! starts at `2^m` and a box with levels `(m-1-l, l)` and offsets `(j0, j1)`
//! sits at `2^m + l 2^(m-1) + j0 2^l + j1`.
//!
//! Indices are zero-based.

use crate::dyadic::{
    self, binomial, cell_centers, check_grid, check_point, half_sign, locate_offset, pow2,
    Compositions, DyadicBox, DyadicInterval,
};
use crate::error::{Error, Result};

/// Largest `d * m` for which brute-force grid oracles are allowed.
pub const GRID_LIMIT: usize = 24;

/// Label of one embedding coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub k: usize,
    /// Live axes `(r_0, ..., r_k)`, zero-based, `r_0 = 0`, strictly increasing.
    pub live_axes: Vec<usize>,
    pub cell: DyadicBox,
}

impl Triple {
    /// Value of this coordinate at `x`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        if !self.cell.contains(x) {
            return 0.0;
        }
        let signs: f64 = self.live_axes[1..]
            .iter()
            .map(|&a| half_sign(x[a], self.cell.axes()[a].level))
            .product();
        pow2(-(self.k as i32)).sqrt() * signs
    }
}

/// Sparse vector with entries sorted by strictly increasing index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseEmbedding {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseEmbedding {
    pub fn with_capacity(n: usize) -> Self {
        SparseEmbedding {
            indices: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn clear(&mut self) {
        self.indices.clear();
        self.values.clear();
    }

    pub fn push(&mut self, index: usize, value: f64) {
        self.indices.push(index);
        self.values.push(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Inner product with a dense vector.
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| dense[i] * v)
            .sum()
    }

    /// `dense += alpha * self`.
    #[inline]
    pub fn axpy_into(&self, alpha: f64, dense: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            dense[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Coordinates with a given `k`.
#[derive(Debug, Clone)]
struct KBlock {
    k: usize,
    scale: f64,
    /// Live-axis vectors, each of length `k + 1`, in lexicographic order.
    live_sets: Vec<Vec<usize>>,
    /// Shapes flattened `k + 1` at a time, levels in live-axis order.
    shapes: Vec<u32>,
    /// First flat index of each live-axis vector's block.
    starts: Vec<usize>,
    /// Boxes per shape, `2^(m-k)`.
    boxes_per_shape: usize,
}

impl KBlock {
    fn shape_count(&self) -> usize {
        self.shapes.len() / (self.k + 1)
    }

    fn shape(&self, rank: usize) -> &[u32] {
        &self.shapes[rank * (self.k + 1)..(rank + 1) * (self.k + 1)]
    }

    fn len(&self) -> usize {
        self.live_sets.len() * self.shape_count() * self.boxes_per_shape
    }
}

/// Bijection between the triple set and `0..p` for fixed `(d, m)`.
#[derive(Debug, Clone)]
pub struct TripleIndex {
    d: usize,
    m: u32,
    p: usize,
    nnz: usize,
    norm_sq: f64,
    blocks: Vec<KBlock>,
}

/// `p = sum_k 2^(m-k) C(m, k) C(d-1, k)`.
pub fn embedding_dim(d: usize, m: u32) -> Result<u128> {
    check_dm(d, m)?;
    let mut p: u128 = 0;
    for k in 0..=(d - 1).min(m as usize) {
        let term = binomial(m as u64, k as u64)?
            .checked_mul(binomial(d as u64 - 1, k as u64)?)
            .and_then(|t| t.checked_mul(dyadic::checked_pow2(m - k as u32).ok()?))
            .ok_or(Error::Overflow("embedding dimension"))?;
        p = p
            .checked_add(term)
            .ok_or(Error::Overflow("embedding dimension"))?;
    }
    Ok(p)
}

/// Number of nonzero entries of every embedded point: `sum_k C(m, k) C(d-1, k)`.
pub fn embedding_nnz(d: usize, m: u32) -> Result<u128> {
    check_dm(d, m)?;
    let mut total: u128 = 0;
    for k in 0..=(d - 1).min(m as usize) {
        let term = binomial(m as u64, k as u64)?
            .checked_mul(binomial(d as u64 - 1, k as u64)?)
            .ok_or(Error::Overflow("embedding nnz"))?;
        total = total
            .checked_add(term)
            .ok_or(Error::Overflow("embedding nnz"))?;
    }
    Ok(total)
}

/// Squared norm shared by every embedded point: `sum_k 2^-k C(m, k) C(d-1, k)`.
pub fn embedding_norm_sq(d: usize, m: u32) -> f64 {
    (0..=d.saturating_sub(1).min(m as usize))
        .map(|k| {
            let c = binomial(m as u64, k as u64).unwrap_or(u128::MAX) as f64
                * binomial(d as u64 - 1, k as u64).unwrap_or(u128::MAX) as f64;
            pow2(-(k as i32)) * c
        })
        .sum()
}

fn check_dm(d: usize, m: u32) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    if m > dyadic::MAX_LEVEL {
        return Err(Error::InvalidParameter(format!(
            "scale {m} exceeds {}",
            dyadic::MAX_LEVEL
        )));
    }
    Ok(())
}

/// Increasing `size`-subsets of `from..to`, lexicographic.
fn subsets(from: usize, to: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(start: usize, to: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for a in start..to {
            cur.push(a);
            rec(a + 1, to, size, cur, out);
            cur.pop();
        }
    }
    rec(from, to, size, &mut cur, &mut out);
    out
}

impl TripleIndex {
    /// Builds the canonical layout (`enumerate_triples`).
    pub fn new(d: usize, m: u32) -> Result<Self> {
        let p128 = embedding_dim(d, m)?;
        let p = usize::try_from(p128).map_err(|_| Error::Overflow("embedding dimension"))?;
        let mut blocks = Vec::new();
        let mut next = 0usize;
        for k in 0..=(d - 1).min(m as usize) {
            let live_sets: Vec<Vec<usize>> = subsets(1, d, k)
                .into_iter()
                .map(|rest| std::iter::once(0).chain(rest).collect())
                .collect();
            // Compositions of m-k into k+1 parts, lexicographic in the first
            // k parts (levels of r_1..r_k); the last part is axis 0's level.
            let mut shapes = Vec::new();
            for c in Compositions::new(m - k as u32, k + 1) {
                shapes.push(c[k]);
                shapes.extend_from_slice(&c[..k]);
            }
            let boxes_per_shape = 1usize << (m as usize - k);
            let per_set = shapes.len() / (k + 1) * boxes_per_shape;
            let starts = (0..live_sets.len()).map(|i| next + i * per_set).collect();
            let block = KBlock {
                k,
                scale: pow2(-(k as i32)).sqrt(),
                live_sets,
                shapes,
                starts,
                boxes_per_shape,
            };
            next += block.len();
            blocks.push(block);
        }
        debug_assert_eq!(next, p);
        Ok(TripleIndex {
            d,
            m,
            p,
            nnz: embedding_nnz(d, m)? as usize,
            norm_sq: embedding_norm_sq(d, m),
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> u32 {
        self.m
    }

    /// Embedding dimension `p`.
    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Length of the leading `k = 0` block (the level-`m` indicators along axis 0).
    pub fn indicator_block_len(&self) -> usize {
        1usize << self.m
    }

    /// `k` of the coordinate at `index`.
    pub fn k_of(&self, index: usize) -> usize {
        self.blocks
            .iter()
            .rev()
            .find(|b| b.starts[0] <= index)
            .map(|b| b.k)
            .unwrap_or(0)
    }

    /// Decodes a flat index into its triple.
    pub fn triple(&self, index: usize) -> Option<Triple> {
        if index >= self.p {
            return None;
        }
        let block = self.blocks.iter().rev().find(|b| b.starts[0] <= index)?;
        let per_set = block.shape_count() * block.boxes_per_shape;
        let rel = index - block.starts[0];
        let set_rank = rel / per_set;
        let within = rel % per_set;
        let shape = block.shape(within / block.boxes_per_shape);
        let mut row_major = within % block.boxes_per_shape;
        let live = &block.live_sets[set_rank];
        let mut axes = vec![
            DyadicInterval {
                level: 0,
                offset: 0
            };
            self.d
        ];
        for (&axis, &level) in live.iter().zip(shape).rev() {
            axes[axis] = DyadicInterval {
                level,
                offset: (row_major & ((1usize << level) - 1)) as u64,
            };
            row_major >>= level;
        }
        Some(Triple {
            k: block.k,
            live_axes: live.clone(),
            cell: DyadicBox::new(axes),
        })
    }

    /// Flat index of a triple, if it belongs to the index set.
    pub fn index_of(&self, triple: &Triple) -> Option<usize> {
        let block = self.blocks.get(triple.k)?;
        let set_rank = block
            .live_sets
            .iter()
            .position(|s| *s == triple.live_axes)?;
        if triple.cell.dim() != self.d {
            return None;
        }
        let axes = triple.cell.axes();
        if (0..self.d).any(|a| !triple.live_axes.contains(&a) && axes[a].level != 0) {
            return None;
        }
        let levels: Vec<u32> = triple.live_axes.iter().map(|&a| axes[a].level).collect();
        let shape_rank = (0..block.shape_count()).find(|&s| block.shape(s) == levels.as_slice())?;
        let mut row_major = 0usize;
        for &a in &triple.live_axes {
            row_major = (row_major << axes[a].level) | axes[a].offset as usize;
        }
        Some(block.starts[set_rank] + shape_rank * block.boxes_per_shape + row_major)
    }

    /// All triples in layout order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        (0..self.p).filter_map(move |i| self.triple(i))
    }

    /// Embeds `x` (`embed`).
    pub fn embed(&self, x: &[f64]) -> Result<SparseEmbedding> {
        let mut out = SparseEmbedding::with_capacity(self.nnz);
        self.embed_into(x, &mut out)?;
        Ok(out)
    }

    /// Embeds `x` into a reusable buffer.
    pub fn embed_into(&self, x: &[f64], out: &mut SparseEmbedding) -> Result<()> {
        check_point(x, self.d)?;
        self.embed_unchecked(x, out);
        Ok(())
    }

    /// Embedding without validation; `x` must be a point of `[0, 1]^d`.
    pub(crate) fn embed_unchecked(&self, x: &[f64], out: &mut SparseEmbedding) {
        out.clear();
        for block in &self.blocks {
            let width = block.k + 1;
            for (live, &start) in block.live_sets.iter().zip(&block.starts) {
                let mut base = start;
                for shape in block.shapes.chunks_exact(width) {
                    let mut row_major = 0usize;
                    let mut sign = 1.0;
                    for (j, (&axis, &level)) in live.iter().zip(shape).enumerate() {
                        let t = x[axis];
                        row_major = (row_major << level) | locate_offset(t, level) as usize;
                        if j > 0 {
                            sign *= half_sign(t, level);
                        }
                    }
                    out.push(base + row_major, block.scale * sign);
                    base += block.boxes_per_shape;
                }
            }
        }
    }
}

/// Integer sign sums `S_ij = sum over cells of sgn(Psi_i) sgn(Psi_j)`, so that
/// the Gram matrix entry is `2^(-(k_i + k_j)/2) S_ij`.
#[derive(Debug, Clone)]
pub struct SignGram {
    pub p: usize,
    pub ks: Vec<usize>,
    pub counts: Vec<i64>,
}

impl SignGram {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let scale = pow2(-((self.ks[i] + self.ks[j]) as i32)).sqrt();
        scale * self.counts[i * self.p + j] as f64
    }

    /// Exact check of `A^T A = scale * I`: off-diagonal sign sums vanish and
    /// each diagonal sum equals `scale * 2^k_i`.
    pub fn is_scaled_identity(&self, log2_scale: u32) -> bool {
        (0..self.p).all(|i| {
            (0..self.p).all(|j| {
                let c = self.counts[i * self.p + j];
                if i == j {
                    c == 1i64 << (log2_scale as usize + self.ks[i])
                } else {
                    c == 0
                }
            })
        })
    }
}

/// Exact sign-sum Gram matrix over the centers of all `2^(d m)` cells.
pub fn sign_gram(d: usize, m: u32) -> Result<SignGram> {
    check_grid(d, m, GRID_LIMIT)?;
    let index = TripleIndex::new(d, m)?;
    let p = index.len();
    let ks: Vec<usize> = (0..p).map(|i| index.k_of(i)).collect();
    let mut counts = vec![0i64; p * p];
    let mut row = SparseEmbedding::with_capacity(index.nnz());
    for x in cell_centers(d, m) {
        index.embed_unchecked(&x, &mut row);
        for (i, vi) in row.iter() {
            for (j, vj) in row.iter() {
                // Values are +-2^(-k/2); their signs carry all the information.
                counts[i * p + j] += (vi.signum() * vj.signum()) as i64;
            }
        }
    }
    Ok(SignGram { p, ks, counts })
}

/// Dense `A^T A` (row-major, `p x p`) where `A` stacks the embeddings of all
/// cell centers.
pub fn gram_matrix(d: usize, m: u32) -> Result<Vec<f64>> {
    let sg = sign_gram(d, m)?;
    let p = sg.p;
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = sg.entry(i, j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent enumeration of the triple set straight from its definition.
    fn brute_force_triples(d: usize, m: u32) -> Vec<Triple> {
        let mut out = Vec::new();
        for k in 0..d.min(m as usize + 1) {
            for rest in subsets(1, d, k) {
                let live: Vec<usize> = std::iter::once(0).chain(rest).collect();
                // Every level vector on all d axes with sum m-k, zero off the live set.
                for levels in Compositions::new(m - k as u32, d) {
                    if (0..d).any(|a| !live.contains(&a) && levels[a] != 0) {
                        continue;
                    }
                    let counts: Vec<u64> = levels.iter().map(|&l| 1u64 << l).collect();
                    let total: u64 = counts.iter().product();
                    for mut c in 0..total {
                        let mut offsets = vec![0u64; d];
                        for a in 0..d {
                            offsets[a] = c % counts[a];
                            c /= counts[a];
                        }
                        out.push(Triple {
                            k,
                            live_axes: live.clone(),
                            cell: DyadicBox::from_parts(&levels, &offsets).unwrap(),
                        });
                    }
                }
            }
        }
        out
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(embedding_dim(1, 5).unwrap(), 32);
        assert_eq!(embedding_dim(3, 5).unwrap(), 272);
        assert_eq!(embedding_dim(2, 2).unwrap(), 8);
        assert_eq!(embedding_dim(3, 2).unwrap(), 13);
        for (d, m) in [(1, 5), (3, 5), (2, 2), (3, 2), (4, 3), (3, 0)] {
            assert_eq!(
                embedding_dim(d, m).unwrap() as usize,
                brute_force_triples(d, m).len(),
                "d={d} m={m}"
            );
        }
        assert!(embedding_dim(0, 3).is_err());
    }

    #[test]
    fn enumeration_is_a_bijection() {
        for (d, m) in [(1, 2), (2, 3), (3, 2), (3, 4), (4, 3)] {
            let index = TripleIndex::new(d, m).unwrap();
            let mut seen = vec![false; index.len()];
            for t in brute_force_triples(d, m) {
                let i = index.index_of(&t).expect("triple missing from index");
                assert!(!seen[i], "index {i} hit twice");
                seen[i] = true;
                assert_eq!(index.triple(i).unwrap(), t);
                assert_eq!(t.cell.measure(), pow2(t.k as i32 - m as i32));
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn one_dimensional_triples_are_level_m_intervals() {
        let index = TripleIndex::new(1, 2).unwrap();
        let triples: Vec<_> = index.triples().collect();
        assert_eq!(triples.len(), 4);
        for (j, t) in triples.iter().enumerate() {
            assert_eq!(t.k, 0);
            assert_eq!(
                t.cell.axes()[0],
                DyadicInterval {
                    level: 2,
                    offset: j as u64
                }
            );
        }
    }

    #[test]
    fn block_starts_match_three_dimensional_layout() {
        let m = 5;
        let index = TripleIndex::new(3, m).unwrap();
        let t = index.triple(1 << m).unwrap();
        assert_eq!((t.k, t.live_axes.clone()), (1, vec![0, 1]));
        let t = index
            .triple((1 << m) + m as usize * (1 << (m - 1)))
            .unwrap();
        assert_eq!((t.k, t.live_axes.clone()), (1, vec![0, 2]));
        let t = index.triple((m as usize + 1) << m).unwrap();
        assert_eq!((t.k, t.live_axes.clone()), (2, vec![0, 1, 2]));
    }

    #[test]
    fn embed_examples() {
        let index = TripleIndex::new(1, 3).unwrap();
        let e = index.embed(&[0.3]).unwrap();
        assert_eq!(e.indices, vec![2]);
        assert_eq!(e.values, vec![1.0]);

        let index = TripleIndex::new(3, 5).unwrap();
        let e = index.embed(&[0.1, 0.77, 0.5]).unwrap();
        assert_eq!(e.nnz(), 21);
        assert!((e.norm_sq() - 8.5).abs() < 1e-12);
        assert_eq!(embedding_norm_sq(3, 5), 8.5);
        assert_eq!(embedding_norm_sq(1, 9), 1.0);

        assert!(matches!(
            index.embed(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(index.embed(&[0.1, 0.2, 1.2]).is_err());
    }

    #[test]
    fn embed_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, m) in [(2, 3), (3, 3), (4, 2)] {
            let index = TripleIndex::new(d, m).unwrap();
            let triples: Vec<_> = index.triples().collect();
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let dense = index.embed(&x).unwrap().to_dense(index.len());
                for (i, t) in triples.iter().enumerate() {
                    assert_eq!(dense[i], t.value_at(&x), "d={d} m={m} i={i}");
                }
            }
        }
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(2, 2).unwrap();
        let p = 8;
        for i in 0..p {
            for j in 0..p {
                let expected = if i == j { 4.0 } else { 0.0 };
                assert!((g[i * p + j] - expected).abs() < 1e-12);
            }
        }
        assert!(sign_gram(1, 3).unwrap().is_scaled_identity(0));
        assert!(sign_gram(3, 2).unwrap().is_scaled_identity(4));
        assert!(matches!(sign_gram(5, 5), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn gram_is_scaled_identity_small_grids() {
        for d in 1..=3 {
            for m in 0..=4 {
                let sg = sign_gram(d, m).unwrap();
                assert!(sg.is_scaled_identity((d as u32 - 1) * m), "d={d} m={m}");
            }
        }
    }

    /// Direct transcription of the three-dimensional index arithmetic
    /// (one-based formulas shifted to zero-based).
    fn three_dim_reference(x: &[f64], m: u32) -> Vec<(usize, f64)> {
        let fl = |t: f64, l: u32| locate_offset(t, l) as usize;
        let s = |t: f64, l: u32| 2.0 * (fl(t, l + 1) % 2) as f64 - 1.0;
        let m_ = m as usize;
        let mut out = vec![(fl(x[0], m), 1.0)];
        for k2 in 0..m {
            let k1 = m - 1 - k2;
            let i = (1 << m_) + k2 as usize * (1 << (m_ - 1)) + (fl(x[0], k1) << k2) + fl(x[1], k2);
            out.push((i, s(x[1], k2) / 2f64.sqrt()));
        }
        for k3 in 0..m {
            let k1 = m - 1 - k3;
            let i = (1 << m_)
                + m_ * (1 << (m_ - 1))
                + k3 as usize * (1 << (m_ - 1))
                + (fl(x[0], k1) << k3)
                + fl(x[2], k3);
            out.push((i, s(x[2], k3) / 2f64.sqrt()));
        }
        for k2 in 0..m.saturating_sub(1) {
            for k3 in 0..=(m - 2 - k2) {
                let k1 = m - 2 - k2 - k3;
                let (k2u, k3u) = (k2 as usize, k3 as usize);
                let i = (m_ + 1) * (1 << m_)
                    + k2u * (2 * m_ - 1 - k2u) * (1 << m_) / 8
                    + k3u * (1 << (m_ - 2))
                    + (fl(x[0], k1) << (k2 + k3))
                    + (fl(x[1], k2) << k3)
                    + fl(x[2], k3);
                out.push((i, s(x[1], k2) * s(x[2], k3) / 2.0));
            }
        }
        out
    }

    #[test]
    fn three_dimensional_index_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 2..=6 {
            let index = TripleIndex::new(3, m).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                let got: Vec<(usize, f64)> = index.embed(&x).unwrap().iter().collect();
                let expected = three_dim_reference(&x, m);
                assert_eq!(got.len(), expected.len());
                for (g, e) in got.iter().zip(&expected) {
                    assert_eq!(g.0, e.0, "m={m} x={x:?}");
                    assert!((g.1 - e.1).abs() < 1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rows_have_constant_norm_and_sparsity(
            d in 1usize..=4,
            m in 0u32..=8,
            seed in any::<u64>(),
        ) {
            let index = TripleIndex::new(d, m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let e = index.embed(&x).unwrap();
            prop_assert_eq!(e.nnz(), embedding_nnz(d, m).unwrap() as usize);
            prop_assert!((e.norm_sq() - embedding_norm_sq(d, m)).abs() < 1e-12);
            prop_assert!(e.indices.windows(2).all(|w| w[0] < w[1]));
            for (i, v) in e.iter() {
                let k = index.k_of(i) as i32;
                prop_assert_eq!(v.abs(), pow2(-k).sqrt());
            }
        }

        #[test]
        fn reflecting_across_a_midpoint_flips_that_level(
            d in 2usize..=4,
            m in 1u32..=6,
            seed in any::<u64>(),
        ) {
            let index = TripleIndex::new(d, m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let e = index.embed(&x).unwrap();
            // Pick a supported coordinate with k >= 1 and one of its wavelet axes.
            let candidates: Vec<usize> = e.indices.iter().copied().filter(|&i| index.k_of(i) > 0).collect();
            prop_assume!(!candidates.is_empty());
            let t = index.triple(candidates[rng.random_range(0..candidates.len())]).unwrap();
            let axis = t.live_axes[rng.random_range(1..t.live_axes.len())];
            let iv = t.cell.axes()[axis];
            let mut y = x.clone();
            y[axis] = (2.0 * iv.center() - x[axis]).clamp(iv.start(), iv.end());
            prop_assume!(y[axis] < iv.end() && locate_offset(y[axis], iv.level + 1) != locate_offset(x[axis], iv.level + 1));
            let f = index.embed(&y).unwrap();
            let before = e.to_dense(index.len());
            let after = f.to_dense(index.len());
            for i in 0..index.len() {
                let ti = index.triple(i).unwrap();
                let lvl = ti.cell.axes()[axis].level;
                let live = ti.live_axes[1..].contains(&axis);
                if live && lvl == iv.level {
                    prop_assert_eq!(after[i], -before[i]);
                } else if !live || lvl < iv.level {
                    prop_assert_eq!(after[i], before[i]);
                }
            }
        }
    }
}
