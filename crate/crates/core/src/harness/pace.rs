use serde::{Deserialize, Serialize};

use super::{run_races, Model};
use crate::error::{Error, Result};
use crate::sim::TrackConfig;
use crate::util::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaceCalibration {
    pub pace_delta: f64,
    pub achieved: f64,
    pub iterations: usize,
    /// The target was out of reach and the fast bound was returned.
    pub clamped: bool,
}

fn mean_finish(
    config: &TrackConfig,
    model: &Model,
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut c = config.clone();
    c.field.controlled_pace_delta = delta;
    let rs = run_races(&c, model, n, seed, false)?;
    Ok(mean(
        &rs.iter().map(|r| r.finish as f64).collect::<Vec<_>>(),
    ))
}

/// Bisects the controlled car's pace offset over `[lo, hi]` (s/lap; lower
/// is faster) until `model`'s mean finish over `n` races is within
/// `tolerance` of `target`.
///
/// A target faster than the `lo` bound can reach returns `lo` with a
/// warning; one slower than `hi` allows is an error.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_pace(
    config: &TrackConfig,
    model: &Model,
    target: f64,
    tolerance: f64,
    (lo, hi): (f64, f64),
    n: usize,
    seed: u64,
    max_iter: usize,
) -> Result<PaceCalibration> {
    let f_lo = mean_finish(config, model, lo, n, seed)?;
    if f_lo > target + tolerance {
        log::warn!(
            "target mean finish {target} is out of reach; clamped to pace {lo} (P{f_lo:.2})"
        );
        return Ok(PaceCalibration {
            pace_delta: lo,
            achieved: f_lo,
            iterations: 1,
            clamped: true,
        });
    }
    let f_hi = mean_finish(config, model, hi, n, seed)?;
    if f_hi < target - tolerance {
        return Err(Error::NotBracketing { lo, hi, target });
    }
    let (mut a, mut b) = (lo, hi);
    let mut best = if (f_lo - target).abs() <= (f_hi - target).abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    let mut iterations = 2;
    while (best.1 - target).abs() > tolerance && iterations < max_iter {
        let mid = 0.5 * (a + b);
        let f = mean_finish(config, model, mid, n, seed)?;
        iterations += 1;
        if (f - target).abs() < (best.1 - target).abs() {
            best = (mid, f);
        }
        if f < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(PaceCalibration {
        pace_delta: best.0,
        achieved: best.1,
        iterations,
        clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slower_car_finishes_no_better() {
        let cfg = TrackConfig::desk();
        let m = Model::fixed();
        let f: Vec<f64> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|&d| mean_finish(&cfg, &m, d, 60, 3).unwrap())
            .collect();
        assert!(f[0] <= f[1] && f[1] <= f[2], "{f:?}");
    }

    #[test]
    fn unreachable_target_clamps() {
        let cfg = TrackConfig::desk();
        let r = calibrate_pace(&cfg, &Model::fixed(), 1.0, 0.01, (-0.05, 2.0), 30, 1, 20).unwrap();
        assert!(r.clamped);
        assert_eq!(r.pace_delta, -0.05);
        let e = calibrate_pace(&cfg, &Model::fixed(), 9.99, 0.001, (-3.0, -2.0), 30, 1, 20);
        assert!(matches!(e, Err(Error::NotBracketing { .. })));
    }
}
