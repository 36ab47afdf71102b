//! Two-sided Brownian increments on a fixed time grid.
//!
//! Increment i on side ± is a pure function of (seed, side, i): a ChaCha8
//! stream per side, seeked to word 2i, mapped to a normal variate by the
//! inverse CDF. Paths store materialised increments so views can read them
//! without regeneration.
//!
//! The forward increment over [k·dt, (k+1)·dt] is Δb⁺[k] for k ≥ 0 and
//! −Δb⁻[−k−1] for k < 0, gluing b(t) = b₂(−t) on the negative axis.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn stream(self) -> u64 {
        match self {
            Side::Plus => 0,
            Side::Minus => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

/// Converts a time to a step count, rejecting times more than 1e-12 off the grid.
pub fn grid_steps(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0 (got {t})")));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::OffGrid { t, dt });
    }
    Ok(n as usize)
}

/// Signed variant of [`grid_steps`].
pub fn grid_offset(t: f64, dt: f64) -> Result<i64> {
    let n = grid_steps(t.abs(), dt)? as i64;
    Ok(if t < 0.0 { -n } else { n })
}

fn uniform(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn generator(seed: u64, side: Side, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(side.stream());
    rng.set_word_pos(2 * index as u128);
    rng
}

/// The increment (seed, side, index) at step dt, computed directly.
pub fn draw_increment(seed: u64, side: Side, index: usize, dt: f64) -> f64 {
    dt.sqrt() * normal_quantile(uniform(generator(seed, side, index).next_u64()))
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Seeded(u64),
    /// All increments zero, unlimited horizon.
    Zero,
    /// Caller-provided increments, not extendable.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct NoisePath {
    source: Source,
    dt: f64,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl NoisePath {
    /// An empty seeded path; increments are generated on extension.
    pub fn new(seed: u64, dt: f64) -> Result<Self> {
        Self::check_dt(dt)?;
        Ok(Self {
            source: Source::Seeded(seed),
            dt,
            plus: Vec::new(),
            minus: Vec::new(),
        })
    }

    /// A path with every increment zero, for deterministic checks.
    pub fn zero(dt: f64) -> Result<Self> {
        Self::check_dt(dt)?;
        Ok(Self {
            source: Source::Zero,
            dt,
            plus: Vec::new(),
            minus: Vec::new(),
        })
    }

    /// A path with the given increments on each side.
    pub fn from_increments(dt: f64, plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        Self::check_dt(dt)?;
        Ok(Self {
            source: Source::Fixed,
            dt,
            plus,
            minus,
        })
    }

    fn check_dt(dt: f64) -> Result<()> {
        if dt > 0.0 && dt.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("dt must be positive (got {dt})")))
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> Option<u64> {
        match self.source {
            Source::Seeded(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.source == Source::Zero
    }

    /// Number of available steps on a side (usize::MAX for the zero path).
    pub fn horizon(&self, side: Side) -> usize {
        if self.is_zero() {
            return usize::MAX;
        }
        match side {
            Side::Plus => self.plus.len(),
            Side::Minus => self.minus.len(),
        }
    }

    /// Grows the side to at least `steps` increments; existing values are kept.
    pub fn extend(&mut self, side: Side, steps: usize) -> Result<()> {
        let seed = match self.source {
            Source::Zero => return Ok(()),
            Source::Fixed => {
                let have = self.horizon(side);
                if steps > have {
                    return Err(Error::BeyondHorizon {
                        side: side.label(),
                        needed: steps,
                        available: have,
                    });
                }
                return Ok(());
            }
            Source::Seeded(s) => s,
        };
        let dt = self.dt;
        let v = match side {
            Side::Plus => &mut self.plus,
            Side::Minus => &mut self.minus,
        };
        if steps <= v.len() {
            return Ok(());
        }
        let mut rng = generator(seed, side, v.len());
        let scale = dt.sqrt();
        v.reserve(steps - v.len());
        while v.len() < steps {
            let z = normal_quantile(uniform(rng.next_u64()));
            v.push(scale * z);
        }
        Ok(())
    }

    /// Extends both sides to cover times [−t_minus, t_plus].
    pub fn extend_time(&mut self, t_plus: f64, t_minus: f64) -> Result<()> {
        let np = grid_steps(t_plus, self.dt)?;
        let nm = grid_steps(t_minus, self.dt)?;
        self.extend(Side::Plus, np)?;
        self.extend(Side::Minus, nm)
    }

    /// Δb on a side; panics beyond the horizon.
    #[inline]
    pub fn increment(&self, side: Side, index: usize) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        match side {
            Side::Plus => self.plus[index],
            Side::Minus => self.minus[index],
        }
    }

    pub fn increments(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    /// Forward increment over [k·dt, (k+1)·dt] on the glued two-sided path.
    #[inline]
    pub fn forward(&self, k: i64) -> f64 {
        if k >= 0 {
            self.increment(Side::Plus, k as usize)
        } else {
            -self.increment(Side::Minus, (-k - 1) as usize)
        }
    }

    /// The same Brownian path sampled on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 {
            return Err(Error::InvalidArgument("coarsening factor must be positive".into()));
        }
        let dt = self.dt * factor as f64;
        if self.is_zero() {
            return NoisePath::zero(dt);
        }
        let sum = |v: &[f64]| -> Vec<f64> { v.chunks_exact(factor).map(|c| c.iter().sum()).collect() };
        NoisePath::from_increments(dt, sum(&self.plus), sum(&self.minus))
    }

    /// Identity view.
    pub fn view(&self) -> NoiseView<'_> {
        NoiseView {
            path: self,
            rotated: false,
            offset: 0,
        }
    }

    /// Extends whatever the view needs to read `n` steps starting at view index `start`.
    pub fn ensure(&mut self, rotated: bool, offset: i64, start: i64, n: usize) -> Result<()> {
        let (p, m) = required(rotated, offset, start, n);
        self.extend(Side::Plus, p)?;
        self.extend(Side::Minus, m)
    }
}

/// (plus steps, minus steps) needed to read n view increments from `start`.
fn required(rotated: bool, offset: i64, start: i64, n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let (lo, hi) = if rotated {
        (-(start + n as i64 - 1 + offset) - 1, -(start + offset) - 1)
    } else {
        (start + offset, start + offset + n as i64 - 1)
    };
    let plus = if hi >= 0 { hi as usize + 1 } else { 0 };
    let minus = if lo < 0 { (-lo) as usize } else { 0 };
    (plus, minus)
}

/// A read-only reindexing of a path: shift θ, rotation t ↦ −t, and their compositions.
#[derive(Debug, Clone, Copy)]
pub struct NoiseView<'a> {
    path: &'a NoisePath,
    rotated: bool,
    offset: i64,
}

impl<'a> NoiseView<'a> {
    pub fn path(&self) -> &'a NoisePath {
        self.path
    }

    pub fn dt(&self) -> f64 {
        self.path.dt
    }

    pub fn is_rotated(&self) -> bool {
        self.rotated
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Increment over [k·dt, (k+1)·dt] of the viewed path.
    #[inline]
    pub fn get(&self, k: i64) -> f64 {
        if self.rotated {
            -self.path.forward(-(k + self.offset) - 1)
        } else {
            self.path.forward(k + self.offset)
        }
    }

    /// θ_{steps·dt}: b(· + t₀) − b(t₀).
    pub fn shifted(&self, steps: i64) -> Self {
        Self {
            offset: self.offset + steps,
            ..*self
        }
    }

    /// t ↦ b(−t).
    pub fn rotated(&self) -> Self {
        Self {
            path: self.path,
            rotated: !self.rotated,
            offset: -self.offset,
        }
    }

    /// b↓(t) = b(T − t) − b(T) on [0, T] for T = steps·dt.
    pub fn reversed(&self, steps: usize) -> Self {
        self.shifted(steps as i64).rotated()
    }

    /// Shift by a time, which must lie on the grid.
    pub fn shifted_time(&self, t0: f64) -> Result<Self> {
        Ok(self.shifted(grid_offset(t0, self.dt())?))
    }

    /// Reversal at a time on the grid.
    pub fn reversed_time(&self, t: f64) -> Result<Self> {
        Ok(self.reversed(grid_steps(t, self.dt())?))
    }

    /// Errors unless view indices start..start+n are inside the path's horizons.
    pub fn check(&self, start: i64, n: usize) -> Result<()> {
        let (p, m) = required(self.rotated, self.offset, start, n);
        for (side, need) in [(Side::Plus, p), (Side::Minus, m)] {
            let have = self.path.horizon(side);
            if need > have {
                return Err(Error::BeyondHorizon {
                    side: side.label(),
                    needed: need,
                    available: have,
                });
            }
        }
        Ok(())
    }

    /// Collects n increments from view index `start`.
    pub fn collect(&self, start: i64, n: usize) -> Result<Vec<f64>> {
        self.check(start, n)?;
        Ok((0..n as i64).map(|k| self.get(start + k)).collect())
    }

    /// b(k·dt) of the viewed path, b(0) = 0.
    pub fn b(&self, k: i64) -> f64 {
        if k >= 0 {
            (0..k).map(|j| self.get(j)).sum()
        } else {
            -(k..0).map(|j| self.get(j)).sum::<f64>()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_are_counter_based() {
        let mut p = NoisePath::new(42, 1e-3).unwrap();
        p.extend(Side::Plus, 10).unwrap();
        for i in 0..10 {
            assert_eq!(
                p.increment(Side::Plus, i).to_bits(),
                draw_increment(42, Side::Plus, i, 1e-3).to_bits()
            );
        }
        assert_ne!(
            draw_increment(42, Side::Plus, 0, 1e-3),
            draw_increment(43, Side::Plus, 0, 1e-3)
        );
        assert_ne!(
            draw_increment(42, Side::Plus, 0, 1e-3),
            draw_increment(42, Side::Minus, 0, 1e-3)
        );
    }

    #[test]
    fn extension_keeps_prefix() {
        let mut p = NoisePath::new(42, 1e-3).unwrap();
        p.extend_time(1.0, 0.0).unwrap();
        let before = p.increments(Side::Plus).to_vec();
        p.extend_time(2.0, 0.5).unwrap();
        assert_eq!(p.horizon(Side::Plus), 2000);
        assert_eq!(p.horizon(Side::Minus), 500);
        for (a, b) in before.iter().zip(p.increments(Side::Plus)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reversed_view_examples() {
        let p = NoisePath::from_increments(1.0, vec![1.0, 2.0, 4.0], vec![]).unwrap();
        let r = p.view().reversed(3);
        assert_eq!(r.collect(0, 3).unwrap(), vec![-4.0, -2.0, -1.0]);
        assert_eq!(r.b(3), -p.view().b(3));
        let rr = r.reversed(3);
        assert_eq!(rr.collect(0, 3).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(r.check(0, 4).is_err());
    }

    #[test]
    fn shift_and_rotation_examples() {
        let p = NoisePath::from_increments(1.0, vec![1.0, 2.0], vec![10.0, 20.0]).unwrap();
        let v = p.view();
        assert_eq!(v.shifted(0).get(0), 1.0);
        assert_eq!(v.shifted(1).get(0), 2.0);
        // increment over [−1, 0] is b(0) − b(−1) = −b₂(1)
        assert_eq!(v.shifted(-1).get(0), -10.0);
        let r = v.rotated();
        assert_eq!(r.b(1), v.b(-1));
        assert_eq!(r.get(0), 10.0);
        assert_eq!(r.get(1), 20.0);
        assert_eq!(r.get(-1), -1.0);
        let rr = r.rotated();
        for k in -2..2 {
            assert_eq!(rr.get(k), v.get(k));
        }
    }

    #[test]
    fn coarsening_sums_increments() {
        let p = NoisePath::from_increments(0.5, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0, 1.0]).unwrap();
        let c = p.coarsened(2).unwrap();
        assert_eq!(c.dt(), 1.0);
        assert_eq!(c.increments(Side::Plus), &[3.0, 7.0]);
        assert_eq!(c.increments(Side::Minus), &[2.0]);
    }

    #[test]
    fn off_grid_times_are_rejected() {
        assert_eq!(grid_steps(1.0, 1e-3).unwrap(), 1000);
        assert_eq!(grid_steps(0.1, 1e-3).unwrap(), 100);
        assert!(matches!(grid_steps(0.0015, 1e-3), Err(Error::OffGrid { .. })));
        assert_eq!(grid_offset(-0.002, 1e-3).unwrap(), -2);
    }

    #[test]
    fn sample_variance_matches_dt() {
        let mut p = NoisePath::new(7, 1e-3).unwrap();
        p.extend(Side::Plus, 1_000_000).unwrap();
        let v = p.increments(Side::Plus);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 1e-3 - 1.0).abs() < 0.01, "{var}");
    }
}
