//! Dyadic intervals and boxes in the unit cube, discrete mixed differences,
//! and the counting identities for dyadic boxes of a fixed measure.
//!
//! A dyadic interval at `level` k with `offset` j is `[j 2^-k, (j+1) 2^-k)`.
//! The closed right endpoint `1.0` is assigned to the last interval of every
//! level so that samples on the boundary of the cube are never rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest supported level on a single axis. Offsets stay in `u64` and
/// `2^level` is exact in `f64`.
pub const MAX_LEVEL: u32 = 62;

/// A validated point of `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_unit_coords(&coords)?;
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_unit_coords(coords: &[f64]) -> Result<()> {
    for (axis, &value) in coords.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::CoordinateOutOfRange { axis, value });
        }
    }
    Ok(())
}

/// Checks length and range of a raw coordinate slice.
pub(crate) fn check_point(coords: &[f64], d: usize) -> Result<()> {
    if coords.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: coords.len(),
        });
    }
    check_unit_coords(coords)
}

/// `[offset 2^-level, (offset+1) 2^-level)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    pub level: u32,
    pub offset: u64,
}

impl DyadicInterval {
    pub fn new(level: u32, offset: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "level {level} exceeds {MAX_LEVEL}"
            )));
        }
        if offset >= 1u64 << level {
            return Err(Error::InvalidParameter(format!(
                "offset {offset} out of range for level {level}"
            )));
        }
        Ok(DyadicInterval { level, offset })
    }

    pub fn width(&self) -> f64 {
        pow2(-(self.level as i32))
    }

    pub fn start(&self) -> f64 {
        self.offset as f64 * self.width()
    }

    pub fn end(&self) -> f64 {
        (self.offset + 1) as f64 * self.width()
    }

    pub fn center(&self) -> f64 {
        (self.offset as f64 + 0.5) * self.width()
    }

    /// Half-open containment, with `1.0` belonging to the last interval.
    pub fn contains(&self, t: f64) -> bool {
        (0.0..=1.0).contains(&t) && locate_offset(t, self.level) == self.offset
    }
}

/// Offset of the level-`level` dyadic interval containing `t`.
///
/// Scaling by a power of two is exact, so the floor is exact as well.
#[inline]
pub fn locate_offset(t: f64, level: u32) -> u64 {
    let cells = 1u64 << level;
    let j = (t * cells as f64) as u64;
    j.min(cells - 1)
}

/// `+1` if `t` lies in the right half of its level-`level` interval, `-1`
/// for the left half. Consistent with the clamp of `t = 1.0`.
#[inline]
pub fn half_sign(t: f64, level: u32) -> f64 {
    if locate_offset(t, level + 1) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub(crate) fn pow2(e: i32) -> f64 {
    f64::powi(2.0, e)
}

/// Product of per-axis dyadic intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DyadicBox {
    axes: Vec<DyadicInterval>,
}

impl DyadicBox {
    pub fn new(axes: Vec<DyadicInterval>) -> Self {
        DyadicBox { axes }
    }

    pub fn from_parts(levels: &[u32], offsets: &[u64]) -> Result<Self> {
        if levels.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: levels.len(),
                actual: offsets.len(),
            });
        }
        let axes = levels
            .iter()
            .zip(offsets)
            .map(|(&l, &o)| DyadicInterval::new(l, o))
            .collect::<Result<Vec<_>>>()?;
        Ok(DyadicBox { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[DyadicInterval] {
        &self.axes
    }

    pub fn levels(&self) -> Vec<u32> {
        self.axes.iter().map(|a| a.level).collect()
    }

    pub fn offsets(&self) -> Vec<u64> {
        self.axes.iter().map(|a| a.offset).collect()
    }

    pub fn level_sum(&self) -> u32 {
        self.axes.iter().map(|a| a.level).sum()
    }

    pub fn measure(&self) -> f64 {
        pow2(-(self.level_sum() as i32))
    }

    pub fn center(&self) -> Vec<f64> {
        self.axes.iter().map(DyadicInterval::center).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.axes.len() && self.axes.iter().zip(x).all(|(a, &t)| a.contains(t))
    }
}

/// The dyadic box with the given per-axis levels that contains `x`.
pub fn locate_box(x: &[f64], levels: &[u32]) -> Result<DyadicBox> {
    check_point(x, levels.len())?;
    if let Some(&l) = levels.iter().find(|&&l| l > MAX_LEVEL) {
        return Err(Error::InvalidParameter(format!(
            "level {l} exceeds {MAX_LEVEL}"
        )));
    }
    let axes = x
        .iter()
        .zip(levels)
        .map(|(&t, &level)| DyadicInterval {
            level,
            offset: locate_offset(t, level),
        })
        .collect();
    Ok(DyadicBox { axes })
}

/// Exact binomial coefficient with overflow detection.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc = C(n, i) here, and C(n, i+1) = C(n, i) (n - i) / (i + 1) exactly.
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or(Error::Overflow("binomial coefficient"))?
            / (i + 1) as u128;
    }
    Ok(acc)
}

pub(crate) fn checked_pow2(e: u32) -> Result<u128> {
    1u128
        .checked_shl(e)
        .filter(|_| e < 128)
        .ok_or(Error::Overflow("power of two"))
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Number of level vectors `(i_1, ..., i_d)` of nonnegative integers summing to `m`.
pub fn shape_count(d: usize, m: u32) -> Result<u128> {
    check_dim(d)?;
    binomial(m as u64 + d as u64 - 1, d as u64 - 1)
}

/// Number of dyadic boxes of measure `2^-m` in `[0, 1]^d`: `2^m C(m+d-1, d-1)`.
pub fn box_count(d: usize, m: u32) -> Result<u128> {
    shape_count(d, m)?
        .checked_mul(checked_pow2(m)?)
        .ok_or(Error::Overflow("box count"))
}

/// Weak compositions of `total` into `parts` nonnegative integers, in
/// ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<u32>,
    total: u32,
    done: bool,
}

impl Compositions {
    pub fn new(total: u32, parts: usize) -> Self {
        let mut current = vec![0; parts];
        let done = parts == 0;
        if let Some(last) = current.last_mut() {
            *last = total;
        }
        Compositions {
            current,
            total,
            done,
        }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let n = self.current.len();
        // Rightmost non-final position whose suffix still carries mass.
        let mut suffix = self.current[n - 1];
        let mut pos = None;
        for a in (0..n - 1).rev() {
            if suffix > 0 {
                pos = Some(a);
                break;
            }
            suffix += self.current[a];
        }
        match pos {
            None => self.done = true,
            Some(a) => {
                self.current[a] += 1;
                for v in &mut self.current[a + 1..] {
                    *v = 0;
                }
                let prefix: u32 = self.current[..=a].iter().sum();
                self.current[n - 1] = self.total - prefix;
            }
        }
        Some(out)
    }
}

/// Centers of the `2^(d m)` cubes of side `2^-m`, axis 0 slowest.
pub fn cell_centers(d: usize, m: u32) -> impl Iterator<Item = Vec<f64>> {
    let side = 1u64 << m;
    let total = side.pow(d as u32);
    let width = pow2(-(m as i32));
    (0..total).map(move |mut c| {
        let mut x = vec![0.0; d];
        for t in x.iter_mut().rev() {
            *t = ((c % side) as f64 + 0.5) * width;
            c /= side;
        }
        x
    })
}

/// Rejects grids whose `2^(d m)` cells cannot be enumerated.
pub(crate) fn check_grid(d: usize, m: u32, limit: usize) -> Result<()> {
    let dm = d * m as usize;
    if dm > limit {
        return Err(Error::GridTooLarge { dm, limit });
    }
    Ok(())
}

/// One axis of a general box: a half-open interval `[start, start + width)`
/// or a singleton `{at}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisSpan {
    Interval { start: f64, width: f64 },
    Point(f64),
}

/// A box with `r` live (interval) axes and `d - r` singleton axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralBox {
    pub axes: Vec<AxisSpan>,
}

impl GeneralBox {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn live_axes(&self) -> usize {
        self.axes
            .iter()
            .filter(|a| matches!(a, AxisSpan::Interval { .. }))
            .count()
    }

    /// Product of the live side lengths.
    pub fn measure(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| match *a {
                AxisSpan::Interval { width, .. } => width,
                AxisSpan::Point(_) => 1.0,
            })
            .product()
    }
}

/// The discrete mixed difference of `f` over `bx`: the signed sum of `f` at
/// the `2^r` corners spanned by the live axes.
pub fn mixed_difference<F>(f: F, bx: &GeneralBox) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let live: Vec<usize> = bx
        .axes
        .iter()
        .enumerate()
        .filter_map(|(i, a)| matches!(a, AxisSpan::Interval { .. }).then_some(i))
        .collect();
    let base: Vec<f64> = bx
        .axes
        .iter()
        .map(|a| match *a {
            AxisSpan::Interval { start, .. } => start,
            AxisSpan::Point(at) => at,
        })
        .collect();
    let r = live.len();
    let mut corner = base.clone();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << r) {
        for (bit, &axis) in live.iter().enumerate() {
            corner[axis] = match bx.axes[axis] {
                AxisSpan::Interval { start, width } if mask >> bit & 1 == 1 => start + width,
                _ => base[axis],
            };
        }
        let sign = if (r - mask.count_ones() as usize).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += sign * f(&corner);
    }
    total
}

/// Statistical lower bound on the `(c, alpha)` mixed Hölder constant of `f`:
/// the largest `|delta_R f| / |R|^alpha` over `trials` random boxes.
///
/// Boxes have a uniformly random number of live axes. Half of the live
/// widths are drawn log-uniformly down to `2^-12` so that small scales are
/// probed as well as large ones.
pub fn estimate_mixed_holder_constant<F>(
    f: F,
    d: usize,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_dim(d)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut axes = vec![AxisSpan::Point(0.0); d];
    let mut order: Vec<usize> = (0..d).collect();
    for _ in 0..trials {
        let r = rng.random_range(1..=d);
        // Partial Fisher-Yates: the first r entries become the live axes.
        for i in 0..r {
            let j = rng.random_range(i..d);
            order.swap(i, j);
        }
        for (pos, &axis) in order.iter().enumerate() {
            axes[axis] = if pos < r {
                let width = if rng.random_bool(0.5) {
                    let a: f64 = rng.random();
                    let b: f64 = rng.random();
                    (a - b).abs()
                } else {
                    pow2(-12).powf(rng.random::<f64>())
                };
                if width <= 0.0 {
                    AxisSpan::Interval {
                        start: 0.0,
                        width: 1.0,
                    }
                } else {
                    let start = rng.random::<f64>() * (1.0 - width);
                    AxisSpan::Interval { start, width }
                }
            } else {
                AxisSpan::Point(rng.random())
            };
        }
        let bx = GeneralBox { axes: axes.clone() };
        let ratio = mixed_difference(&f, &bx).abs() / bx.measure().powf(alpha);
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}
