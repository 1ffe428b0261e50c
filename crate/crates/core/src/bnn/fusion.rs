//! Replacing `sign(AF(x))` with threshold comparisons for inference.

use serde::Serialize;

use crate::expr::ChannelActivation;

/// Search interval half-width.
pub const FUSION_BOUND: f64 = 64.0;
const DERIV_SAMPLES: usize = 10_001;
const DERIV_TOL: f64 = 1e-12;
const PERIOD: f64 = std::f64::consts::TAU;
const PERIOD_TOL: f64 = 1e-9;
const SCAN_STEPS: usize = 200_000;

/// How `sign(AF(x))` reduces to comparisons against thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusedThreshold {
    /// `+1` iff `x ≥ tau`.
    Increasing { tau: f64 },
    /// `+1` iff `x ≤ tau`.
    Decreasing { tau: f64 },
    /// Same sign on the whole interval.
    Constant { sign: f32 },
    /// Sign flips at each threshold; `sign_below` holds left of the first.
    Piecewise { thresholds: Vec<f64>, sign_below: f32 },
    /// Neither monotone nor periodic.
    Unfusable { reason: String },
}

impl FusedThreshold {
    /// The fused decision at `x`, or `None` when unfusable.
    pub fn eval(&self, x: f64) -> Option<f32> {
        let pm = |b: bool| if b { 1.0 } else { -1.0 };
        match self {
            FusedThreshold::Increasing { tau } => Some(pm(x >= *tau)),
            FusedThreshold::Decreasing { tau } => Some(pm(x <= *tau)),
            FusedThreshold::Constant { sign } => Some(*sign),
            FusedThreshold::Piecewise { thresholds, sign_below } => {
                let crossed = thresholds.partition_point(|&t| t <= x);
                Some(if crossed % 2 == 0 { *sign_below } else { -*sign_below })
            }
            FusedThreshold::Unfusable { .. } => None,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            FusedThreshold::Increasing { tau } | FusedThreshold::Decreasing { tau } => vec![*tau],
            FusedThreshold::Piecewise { thresholds, .. } => thresholds.clone(),
            _ => Vec::new(),
        }
    }
}

fn pm(v: f64) -> f32 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Bisects `[lo, hi]` where `sign(f(lo)) ≠ sign(f(hi))` down to adjacent
/// floats. Returns the endpoint on the `+1` side, so the sign boundary sits
/// exactly at the returned value.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_pos = f(lo) >= 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) >= 0.0) == lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo_pos {
        lo
    } else {
        hi
    }
}

/// Fuses `sign(af(x))` for one channel's parameters on `[-64, 64]`.
///
/// Monotone functions (derivative of constant sign at 10,001 samples) give
/// one threshold; functions with period 2π give their ordered zero
/// crossings; anything else is reported unfusable.
pub fn fuse_sign_threshold<A: ChannelActivation + ?Sized>(af: &A, channel: usize) -> FusedThreshold {
    let b = FUSION_BOUND;
    let f = |x: f64| af.value(x, channel);
    let mut scratch = vec![0.0; af.param_slots()];
    let (mut nonneg, mut nonpos) = (true, true);
    for i in 0..DERIV_SAMPLES {
        let x = -b + 2.0 * b * i as f64 / (DERIV_SAMPLES - 1) as f64;
        let d = af.grad(x, channel, 1.0, &mut scratch);
        if !(d >= -DERIV_TOL) {
            nonneg = false;
        }
        if !(d <= DERIV_TOL) {
            nonpos = false;
        }
    }
    if nonneg || nonpos {
        let (lo, hi) = (f(-b), f(b));
        if pm(lo) == pm(hi) {
            return FusedThreshold::Constant { sign: pm(lo) };
        }
        let tau = bisect(f, -b, b);
        return if pm(hi) > 0.0 {
            FusedThreshold::Increasing { tau }
        } else {
            FusedThreshold::Decreasing { tau }
        };
    }
    let periodic = (0..DERIV_SAMPLES).all(|i| {
        let x = -b + (2.0 * b - PERIOD) * i as f64 / (DERIV_SAMPLES - 1) as f64;
        (f(x + PERIOD) - f(x)).abs() < PERIOD_TOL
    });
    if !periodic {
        return FusedThreshold::Unfusable {
            reason: "neither monotone nor 2π-periodic on [-64, 64]".into(),
        };
    }
    let step = 2.0 * b / SCAN_STEPS as f64;
    let mut thresholds = Vec::new();
    let mut prev_x = -b;
    let mut prev = pm(f(prev_x));
    let sign_below = prev;
    for i in 1..=SCAN_STEPS {
        let x = -b + step * i as f64;
        let s = pm(f(x));
        if s != prev {
            thresholds.push(bisect(f, prev_x, x));
        }
        prev = s;
        prev_x = x;
    }
    if thresholds.is_empty() {
        FusedThreshold::Constant { sign: sign_below }
    } else {
        FusedThreshold::Piecewise {
            thresholds,
            sign_below,
        }
    }
}

/// Moves a threshold set through an eval-mode batch norm `y = scale·x + shift`
/// placed ahead of the activation, so the comparison applies to the raw
/// pre-norm value.
pub fn fold_batchnorm(fused: &FusedThreshold, scale: f64, shift: f64) -> FusedThreshold {
    let back = |t: f64| (t - shift) / scale;
    if scale == 0.0 {
        return match fused.eval(shift) {
            Some(sign) => FusedThreshold::Constant { sign },
            None => fused.clone(),
        };
    }
    let flip = scale < 0.0;
    match fused {
        FusedThreshold::Increasing { tau } if !flip => FusedThreshold::Increasing { tau: back(*tau) },
        FusedThreshold::Increasing { tau } => FusedThreshold::Decreasing { tau: back(*tau) },
        FusedThreshold::Decreasing { tau } if !flip => FusedThreshold::Decreasing { tau: back(*tau) },
        FusedThreshold::Decreasing { tau } => FusedThreshold::Increasing { tau: back(*tau) },
        FusedThreshold::Piecewise { thresholds, sign_below } => {
            let mut t: Vec<f64> = thresholds.iter().map(|&v| back(v)).collect();
            let mut below = *sign_below;
            if flip {
                t.reverse();
                if thresholds.len() % 2 == 1 {
                    below = -below;
                }
            }
            FusedThreshold::Piecewise {
                thresholds: t,
                sign_below: below,
            }
        }
        other => other.clone(),
    }
}

/// Outcome of comparing `sign(AF(x))` with a fused decision on uniform
/// samples from `[-64, 64]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FusionCheck {
    pub samples: usize,
    /// Disagreements anywhere.
    pub disagreements: usize,
    /// Disagreements farther than `1e-9` from every threshold.
    pub violations: usize,
}

impl FusionCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `fused` against the activation at `samples` seeded uniform points.
/// Returns `None` for unfusable results.
pub fn verify_fusion<A: ChannelActivation + ?Sized>(
    af: &A,
    channel: usize,
    fused: &FusedThreshold,
    samples: usize,
    seed: u64,
) -> Option<FusionCheck> {
    use rand::{Rng, SeedableRng};
    if matches!(fused, FusedThreshold::Unfusable { .. }) {
        return None;
    }
    let thresholds = fused.thresholds();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut check = FusionCheck {
        samples,
        disagreements: 0,
        violations: 0,
    };
    for _ in 0..samples {
        let x = rng.gen_range(-FUSION_BOUND..=FUSION_BOUND);
        if fused.eval(x) != Some(pm(af.value(x, channel))) {
            check.disagreements += 1;
            if thresholds.iter().all(|t| (x - t).abs() > 1e-9) {
                check.violations += 1;
            }
        }
    }
    Some(check)
}
