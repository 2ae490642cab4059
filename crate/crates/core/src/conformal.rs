//! Split and K-split conformal prediction with absolute-residual scores.
//!
//! Calibration is always sequential: the training block precedes the
//! calibration block in time. Quantiles are order statistics of the
//! calibration scores; when the required rank exceeds the number of scores
//! the quantile is `f64::INFINITY` and the prediction set is the whole line.

use rayon::prelude::*;

use crate::chains::Trajectory;
use crate::error::{invalid, Result};

/// A fitted point model mapping a covariate to a predicted response.
pub trait PointPredictor {
    fn predict(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> PointPredictor for F {
    fn predict(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Nonnegative, finite nonconformity scores in data order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid(format!("score {i} = {} is not a finite nonnegative value", scores[i])));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `|y_t - model(x_t)|` for every observation.
pub fn residual_scores<M: PointPredictor + ?Sized>(model: &M, data: &Trajectory) -> Result<ScoreVector> {
    if data.is_empty() {
        return Err(invalid("cannot score an empty trajectory"));
    }
    ScoreVector::new(data.pairs().map(|(x, y)| (y - model.predict(x)).abs()).collect())
}

/// `ceil(x)`, except that values within floating-point noise of an integer
/// map to that integer (so `(9 + 1) * (1 - 0.1)` gives 9, not 10).
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Conformal rank `ceil((n + 1)(1 - alpha))` for `n` calibration scores.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    ceil_tol((n as f64 + 1.0) * (1.0 - alpha)).max(1.0) as usize
}

/// `k`-th smallest score (1-based), or `INFINITY` when `k > len`.
pub fn order_statistic(scores: &[f64], k: usize) -> f64 {
    if k == 0 || k > scores.len() {
        return f64::INFINITY;
    }
    let mut sorted = scores.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Split-conformal quantile: the `ceil((n+1)(1-alpha))`-th smallest score.
pub fn empirical_quantile(scores: &ScoreVector, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(invalid("empirical quantile of an empty score vector"));
    }
    Ok(order_statistic(scores.as_slice(), conformal_rank(scores.len(), alpha)))
}

/// Rank achieving the level closest to `1 - alpha` on `m` thinned scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectedRank {
    /// Order statistic to use, in `1..=m+1`; `m + 1` means an infinite quantile.
    pub rank: usize,
    /// Level whose uncorrected rank equals `rank`: `1 - rank / (m + 1)`.
    pub alpha_prime: f64,
}

/// Integer `k` in `[1, m+1]` minimizing `|k/(m+1) - (1-alpha)|`; ties go to
/// the larger `k`, which over-covers.
pub fn corrected_rank(m: usize, alpha: f64) -> Result<CorrectedRank> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("corrected rank needs at least one calibration score"));
    }
    let slots = m as f64 + 1.0;
    let target = slots * (1.0 - alpha);
    let nearest = target.round();
    let rank = if (target - nearest).abs() <= 1e-9 * target.max(1.0) {
        nearest
    } else {
        let below = target.floor();
        let above = target.ceil();
        let d_below = target - below;
        let d_above = above - target;
        if d_above <= d_below + 1e-9 {
            above
        } else {
            below
        }
    };
    let rank = (rank as usize).clamp(1, m + 1);
    Ok(CorrectedRank { rank, alpha_prime: 1.0 - rank as f64 / slots })
}

/// How the order statistic is chosen on the (possibly thinned) scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankRule {
    /// `ceil((m+1)(1-alpha))`.
    Standard,
    /// [`corrected_rank`].
    Corrected,
}

/// Every `k`-th observation starting from the first.
pub fn thin(calib: &Trajectory, k: usize) -> Result<Trajectory> {
    if k == 0 {
        return Err(invalid("thinning step must be at least 1"));
    }
    Ok(Trajectory {
        covariates: calib.covariates.iter().step_by(k).copied().collect(),
        responses: calib.responses.iter().step_by(k).copied().collect(),
        origin_time: calib.origin_time,
    })
}

/// Calibrated quantile for scores thinned by `k` under `rule`: returns the
/// quantile, the rank used and the thinned sample size.
pub fn calibrate_scores(scores: &[f64], alpha: f64, k: usize, rule: RankRule) -> Result<(f64, usize, usize)> {
    check_alpha(alpha)?;
    if k == 0 {
        return Err(invalid("thinning step must be at least 1"));
    }
    if scores.is_empty() {
        return Err(invalid("calibration needs at least one score"));
    }
    let thinned: Vec<f64> = scores.iter().step_by(k).copied().collect();
    let m = thinned.len();
    let rank = match rule {
        RankRule::Standard => conformal_rank(m, alpha),
        RankRule::Corrected => corrected_rank(m, alpha)?.rank,
    };
    Ok((order_statistic(&thinned, rank), rank, m))
}

/// Closed interval `[lower, upper]`; infinite bounds denote the whole line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PredictionInterval {
    pub fn is_full_line(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// A point model together with a calibrated score quantile.
#[derive(Clone, Debug)]
pub struct ConformalPredictor<M> {
    pub model: M,
    /// Calibrated half-width; `INFINITY` when the calibration set is too small.
    pub q_hat: f64,
    pub alpha: f64,
    /// Number of calibration scores the quantile was taken over.
    pub calib_size: usize,
    /// Order statistic used.
    pub rank: usize,
}

impl<M: PointPredictor> ConformalPredictor<M> {
    pub fn predict_interval(&self, x: f64) -> PredictionInterval {
        predict_interval(self, x)
    }

    /// Whether `(x, y)` falls inside the prediction set.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        (y - self.model.predict(x)).abs() <= self.q_hat
    }
}

pub fn predict_interval<M: PointPredictor>(p: &ConformalPredictor<M>, x: f64) -> PredictionInterval {
    if p.q_hat.is_infinite() {
        return PredictionInterval { lower: f64::NEG_INFINITY, upper: f64::INFINITY };
    }
    let center = p.model.predict(x);
    PredictionInterval { lower: center - p.q_hat, upper: center + p.q_hat }
}

/// Split CP: fit on `train`, calibrate on all of `calib`.
pub fn split_cp<M, F>(train: &Trajectory, calib: &Trajectory, alpha: f64, fitter: F) -> Result<ConformalPredictor<M>>
where
    M: PointPredictor,
    F: FnOnce(&Trajectory) -> Result<M>,
{
    check_alpha(alpha)?;
    if train.is_empty() || calib.is_empty() {
        return Err(invalid("training and calibration sets must be nonempty"));
    }
    let model = fitter(train)?;
    let scores = residual_scores(&model, calib)?;
    let q_hat = empirical_quantile(&scores, alpha)?;
    Ok(ConformalPredictor { model, q_hat, alpha, calib_size: calib.len(), rank: conformal_rank(calib.len(), alpha) })
}

/// K-split CP: fit on `train`, calibrate on every `k`-th point of `calib`.
pub fn ksplit_cp<M, F>(
    train: &Trajectory,
    calib: &Trajectory,
    alpha: f64,
    k: usize,
    corrected: bool,
    fitter: F,
) -> Result<ConformalPredictor<M>>
where
    M: PointPredictor,
    F: FnOnce(&Trajectory) -> Result<M>,
{
    check_alpha(alpha)?;
    if train.is_empty() || calib.is_empty() {
        return Err(invalid("training and calibration sets must be nonempty"));
    }
    let thinned = thin(calib, k)?;
    let model = fitter(train)?;
    let scores = residual_scores(&model, &thinned)?;
    let rule = if corrected { RankRule::Corrected } else { RankRule::Standard };
    let (q_hat, rank, m) = calibrate_scores(scores.as_slice(), alpha, 1, rule)?;
    Ok(ConformalPredictor { model, q_hat, alpha, calib_size: m, rank })
}

/// Outcome of one rolling-window step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RollingStep {
    /// Index in the input stream of the point being predicted.
    pub index: usize,
    pub covered: bool,
    pub q_hat: f64,
    pub k: usize,
}

fn check_windows(len: usize, train_len: usize, calib_len: usize) -> Result<()> {
    if calib_len == 0 {
        return Err(invalid("calibration window must be nonempty"));
    }
    if len <= train_len + calib_len {
        return Err(invalid(format!(
            "stream of length {len} is too short for windows {train_len} + {calib_len}"
        )));
    }
    Ok(())
}

/// Rolling CP on a precomputed score stream: for each `t >= train_len +
/// calib_len`, calibrate on `scores[t - calib_len .. t]` thinned by `k` and
/// test whether `scores[t]` is within the quantile.
pub fn rolling_cp(
    scores: &[f64],
    train_len: usize,
    calib_len: usize,
    alpha: f64,
    k: usize,
    rule: RankRule,
) -> Result<Vec<RollingStep>> {
    check_windows(scores.len(), train_len, calib_len)?;
    check_alpha(alpha)?;
    (train_len + calib_len..scores.len())
        .into_par_iter()
        .map(|t| {
            let (q_hat, _, _) = calibrate_scores(&scores[t - calib_len..t], alpha, k, rule)?;
            Ok(RollingStep { index: t, covered: scores[t] <= q_hat, q_hat, k })
        })
        .collect()
}

/// Thinning step used at each window of [`rolling_cp_fitted`].
pub enum WindowK<'a> {
    Fixed(usize),
    /// Chooses `K` from the training window and the calibration length.
    PerWindow(&'a (dyn Fn(&Trajectory, usize) -> Result<usize> + Sync)),
}

/// Rolling CP with refitting: at each step the model is fitted on the
/// `train_len` observations preceding the calibration window, scored on the
/// `calib_len` observations preceding `t`, and tested on observation `t`.
/// Steps are evaluated in parallel and returned in time order.
pub fn rolling_cp_fitted<M, F>(
    data: &Trajectory,
    train_len: usize,
    calib_len: usize,
    alpha: f64,
    k: WindowK<'_>,
    rule: RankRule,
    fitter: F,
) -> Result<Vec<RollingStep>>
where
    M: PointPredictor,
    F: Fn(&Trajectory) -> Result<M> + Sync,
{
    check_windows(data.len(), train_len, calib_len)?;
    check_alpha(alpha)?;
    if let WindowK::Fixed(0) = k {
        return Err(invalid("thinning step must be at least 1"));
    }
    (train_len + calib_len..data.len())
        .into_par_iter()
        .map(|t| {
            let train = data.slice(t - calib_len - train_len..t - calib_len);
            let calib = data.slice(t - calib_len..t);
            let step = match &k {
                WindowK::Fixed(k) => *k,
                WindowK::PerWindow(choose) => choose(&train, calib_len)?.max(1),
            };
            let model = fitter(&train)?;
            let scores = residual_scores(&model, &calib)?;
            let (q_hat, _, _) = calibrate_scores(scores.as_slice(), alpha, step, rule)?;
            let covered = (data.responses[t] - model.predict(data.covariates[t])).abs() <= q_hat;
            Ok(RollingStep { index: t, covered, q_hat, k: step })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(xs: &[f64], ys: &[f64]) -> Trajectory {
        Trajectory::new(xs.to_vec(), ys.to_vec(), 0).unwrap()
    }

    fn zero_model(_: &Trajectory) -> Result<fn(f64) -> f64> {
        Ok(|_| 0.0)
    }

    #[test]
    fn residual_score_examples() {
        let zero = |_: f64| 0.0;
        let s = residual_scores(&zero, &traj(&[0.0, 0.0, 0.0], &[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 2.0, 3.0]);
        let double = |x: f64| 2.0 * x;
        let s = residual_scores(&double, &traj(&[1.0, 2.0], &[3.0, 7.0])).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 3.0]);
        let s = residual_scores(&double, &traj(&[1.0, 2.0], &[2.0, 4.0])).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
        assert!(residual_scores(&double, &traj(&[], &[])).is_err());
    }

    /// Rank oracle: sort, then index.
    fn rank_oracle(scores: &[f64], alpha: f64) -> f64 {
        let n = scores.len();
        let k = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil() as usize;
        if k > n {
            return f64::INFINITY;
        }
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        s[k - 1]
    }

    #[test]
    fn quantile_examples() {
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        let q = empirical_quantile(&ScoreVector::new(nine.clone()).unwrap(), 0.1).unwrap();
        assert_eq!(q, 9.0);
        assert_eq!(q, rank_oracle(&nine, 0.1));
        let q = empirical_quantile(&ScoreVector::new(vec![1.0, 2.0, 3.0]).unwrap(), 0.5).unwrap();
        assert_eq!(q, 2.0);
        let q = empirical_quantile(&ScoreVector::new(vec![5.0, 7.0]).unwrap(), 0.1).unwrap();
        assert_eq!(q, f64::INFINITY);
        assert!(empirical_quantile(&ScoreVector::new(vec![]).unwrap(), 0.1).is_err());
        assert!(ScoreVector::new(vec![-1.0]).is_err());
        assert!(ScoreVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn split_cp_examples() {
        let train = traj(&[0.0; 3], &[0.0; 3]);
        let calib = traj(&[0.0; 20], &[1.5; 20]);
        let p = split_cp(&train, &calib, 0.2, zero_model).unwrap();
        assert_eq!(p.q_hat, 1.5);
        assert_eq!(p.calib_size, 20);
        let p = split_cp(&train, &traj(&[0.0, 0.0], &[1.0, 2.0]), 0.1, zero_model).unwrap();
        assert_eq!(p.q_hat, f64::INFINITY);
        assert!(p.predict_interval(3.0).is_full_line());
        assert!(p.covers(0.0, 1e300));
    }

    #[test]
    fn interval_examples() {
        let p = ConformalPredictor { model: |_: f64| 0.0, q_hat: 2.0, alpha: 0.1, calib_size: 10, rank: 9 };
        assert_eq!(p.predict_interval(5.0), PredictionInterval { lower: -2.0, upper: 2.0 });
        let p = ConformalPredictor { model: |_: f64| 1.5, q_hat: 0.25, alpha: 0.1, calib_size: 10, rank: 9 };
        assert_eq!(p.predict_interval(0.0), PredictionInterval { lower: 1.25, upper: 1.75 });
        let p = ConformalPredictor { model: |x: f64| x, q_hat: 0.0, alpha: 0.1, calib_size: 10, rank: 9 };
        let i = p.predict_interval(4.0);
        assert_eq!((i.lower, i.upper, i.length()), (4.0, 4.0, 0.0));
    }

    #[test]
    fn thinning_examples() {
        let c = traj(&[0., 1., 2., 3., 4., 5.], &[10., 11., 12., 13., 14., 15.]);
        assert_eq!(thin(&c, 1).unwrap(), c);
        let t = thin(&c, 2).unwrap();
        assert_eq!(t.covariates, vec![0., 2., 4.]);
        assert_eq!(t.responses, vec![10., 12., 14.]);
        assert_eq!(thin(&c, 6).unwrap().covariates, vec![0.]);
        assert_eq!(thin(&c, 100).unwrap().covariates, vec![0.]);
        assert_eq!(thin(&traj(&[0.; 7], &[0.; 7]), 3).unwrap().len(), 3);
        assert!(thin(&c, 0).is_err());
    }

    /// Enumerate every rank and pick the closest level, preferring larger k.
    fn corrected_oracle(m: usize, alpha: f64) -> usize {
        let mut best = 1;
        let mut best_d = f64::INFINITY;
        for k in 1..=m + 1 {
            let d = (k as f64 / (m as f64 + 1.0) - (1.0 - alpha)).abs();
            if d <= best_d + 1e-12 {
                best = k;
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn corrected_rank_examples() {
        let c = corrected_rank(9, 0.25).unwrap();
        assert_eq!(c.rank, 8);
        assert!((c.alpha_prime - 0.2).abs() < 1e-15);
        let c = corrected_rank(9, 0.1).unwrap();
        assert_eq!(c.rank, 9);
        assert!((c.alpha_prime - 0.1).abs() < 1e-12);
        assert_eq!(corrected_rank(4, 0.1).unwrap().rank, 5);
        for m in 1..60 {
            for a in [0.01, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.9] {
                assert_eq!(corrected_rank(m, a).unwrap().rank, corrected_oracle(m, a), "m={m} a={a}");
            }
        }
    }

    #[test]
    fn ksplit_examples() {
        let train = traj(&[0.0], &[0.0]);
        let six = traj(&[0.0; 6], &[1., 2., 3., 4., 5., 6.]);
        let p = ksplit_cp(&train, &six, 0.1, 1, false, zero_model).unwrap();
        assert_eq!(p.q_hat, f64::INFINITY);
        let nine = traj(&[0.0; 9], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let p = ksplit_cp(&train, &nine, 0.25, 1, true, zero_model).unwrap();
        assert_eq!(p.q_hat, 8.0);
        // thinning 18 points by 2 keeps the odd values at even positions
        let eighteen: Vec<f64> = (1..=18).map(f64::from).collect();
        let p = ksplit_cp(&train, &traj(&[0.0; 18], &eighteen), 0.25, 2, true, zero_model).unwrap();
        assert_eq!((p.calib_size, p.q_hat), (9, 15.0));
    }

    #[test]
    fn rolling_constant_scores_always_cover() {
        let steps = rolling_cp(&[0.0; 50], 10, 20, 0.1, 1, RankRule::Standard).unwrap();
        assert_eq!(steps.len(), 20);
        assert!(steps.iter().all(|s| s.covered));
        assert_eq!(steps[0].index, 30);
        assert!(rolling_cp(&[0.0; 30], 10, 20, 0.1, 1, RankRule::Standard).is_err());
    }

    #[test]
    fn rolling_single_calibration_point_is_full_line() {
        let scores: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let steps = rolling_cp(&scores, 0, 10, 0.1, 10, RankRule::Standard).unwrap();
        assert!(steps.iter().all(|s| s.covered && s.q_hat.is_infinite()));
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_alpha(scores in prop::collection::vec(0.0f64..100.0, 1..60), a in 0.01f64..0.98, da in 0.0f64..0.5) {
            let b = (a + da).min(0.99);
            let s = ScoreVector::new(scores).unwrap();
            prop_assert!(empirical_quantile(&s, b).unwrap() <= empirical_quantile(&s, a).unwrap());
        }

        #[test]
        fn quantile_grows_with_new_maximum(scores in prop::collection::vec(0.0f64..100.0, 1..60), a in 0.01f64..0.99) {
            let before = empirical_quantile(&ScoreVector::new(scores.clone()).unwrap(), a).unwrap();
            // an infinite quantile can only become finite once the set grows
            prop_assume!(before.is_finite());
            let mut more = scores;
            more.push(1000.0);
            let after = empirical_quantile(&ScoreVector::new(more).unwrap(), a).unwrap();
            prop_assert!(after >= before);
        }

        #[test]
        fn quantile_matches_rank_oracle(scores in prop::collection::vec(0.0f64..10.0, 1..80), a in 0.01f64..0.99) {
            let s = ScoreVector::new(scores.clone()).unwrap();
            prop_assert_eq!(empirical_quantile(&s, a).unwrap(), rank_oracle(&scores, a));
        }

        #[test]
        fn corrected_rank_is_nearest_and_self_consistent(m in 1usize..500, a in 0.001f64..0.999) {
            let c = corrected_rank(m, a).unwrap();
            let slots = m as f64 + 1.0;
            if slots * (1.0 - a) >= 1.0 {
                prop_assert!((c.rank as f64 / slots - (1.0 - a)).abs() <= 0.5 / slots + 1e-9);
            } else {
                prop_assert_eq!(c.rank, 1);
            }
            prop_assert_eq!(conformal_rank(m, c.alpha_prime), c.rank);
        }

        #[test]
        fn finite_intervals_are_centered(center in -50.0f64..50.0, q in 0.0f64..10.0) {
            let p = ConformalPredictor { model: move |_: f64| center, q_hat: q, alpha: 0.1, calib_size: 1, rank: 1 };
            let i = p.predict_interval(0.0);
            prop_assert!(((i.lower + i.upper) / 2.0 - center).abs() < 1e-9);
            prop_assert!((i.length() - 2.0 * q).abs() < 1e-9);
        }
    }
}
