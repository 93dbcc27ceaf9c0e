//! Closed-form change point scores for latent processes whose decoded
//! marginals are Gaussian with diagonal covariance, and a Monte-Carlo
//! cross-check of the sampling scorer against them.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::input_err;
use crate::rng::stream;
use crate::scoring::{cpd_score, ScoreConfig};
use crate::sde::TrajectoryBundle;
use crate::{Result, TimeSeries};

/// Decoded marginals `N(b_v, diag(Λ_v))` per time, observation noise `c·I`
/// and the number of lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct GaussianProcessSpec {
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    obs_variance_c: f64,
    lags: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    obs_variance_c: f64,
    lags: usize,
}

impl TryFrom<RawSpec> for GaussianProcessSpec {
    type Error = crate::Error;

    fn try_from(r: RawSpec) -> Result<Self> {
        Self::new(r.means, r.variances, r.obs_variance_c, r.lags)
    }
}

impl GaussianProcessSpec {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>, obs_variance_c: f64, lags: usize) -> Result<Self> {
        let dim = means.first().map_or(0, Vec::len);
        if dim == 0 || means.len() != variances.len() {
            return Err(input_err!("means and variances must be non-empty T x D tables"));
        }
        if means.iter().chain(&variances).any(|row| row.len() != dim) {
            return Err(input_err!("every row must have {dim} entries"));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(input_err!("means must be finite"));
        }
        if variances.iter().flatten().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(input_err!("variances must be positive"));
        }
        if !(obs_variance_c > 0.0 && obs_variance_c.is_finite()) {
            return Err(input_err!("obs_variance_c must be positive"));
        }
        if lags == 0 {
            return Err(input_err!("lags must be at least 1"));
        }
        Ok(Self {
            means,
            variances,
            obs_variance_c,
            lags,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn obs_variance_c(&self) -> f64 {
        self.obs_variance_c
    }

    pub fn mean(&self, v: usize) -> &[f64] {
        &self.means[v]
    }

    pub fn variance(&self, v: usize) -> &[f64] {
        &self.variances[v]
    }

    /// `ln|C+Λ_v| + (x-b_v)ᵀ(C+Λ_v)⁻¹(x-b_v)`.
    fn log_det_plus_quad(&self, x: &[f64], v: usize) -> f64 {
        self.means[v]
            .iter()
            .zip(&self.variances[v])
            .zip(x)
            .map(|((b, lam), xj)| {
                let s = self.obs_variance_c + lam;
                libm::log(s) + (xj - b) * (xj - b) / s
            })
            .sum()
    }
}

/// `log N(x | b_v, C + Λ_v)`.
pub fn marginal_log_density(x: &[f64], v: usize, spec: &GaussianProcessSpec) -> f64 {
    -0.5 * x.len() as f64 * libm::log(2.0 * PI) - 0.5 * spec.log_det_plus_quad(x, v)
}

/// Analytic lag-window score at time `t`: half the sum over lags of the
/// earlier time's log-det-plus-quadratic minus the current one's.
pub fn analytic_cpd(x: &[f64], t: usize, spec: &GaussianProcessSpec) -> f64 {
    let now = spec.log_det_plus_quad(x, t);
    0.5 * (1..=spec.lags.min(t))
        .map(|l| spec.log_det_plus_quad(x, t - l) - now)
        .sum::<f64>()
}

fn quad(r: impl Iterator<Item = f64>, lambda: &[f64], c: f64) -> f64 {
    r.zip(lambda).map(|(d, lam)| d * d / (c + lam)).sum()
}

/// Score for a jump `Δb` in the mean at the current time, `L` lags back.
pub fn mean_jump_score(x: &[f64], b: &[f64], delta_b: &[f64], lambda: &[f64], c: f64, lags: usize) -> f64 {
    let before = quad(x.iter().zip(b).map(|(x, b)| x - b), lambda, c);
    let after = quad(
        x.iter().zip(b).zip(delta_b).map(|((x, b), d)| x - b - d),
        lambda,
        c,
    );
    0.5 * lags as f64 * (before - after)
}

/// Score for a change `Δ²b` in the slope: the mean-jump form applied to
/// first differences.
pub fn trend_jump_score(
    x_delta: &[f64],
    b_delta: &[f64],
    delta2_b: &[f64],
    lambda_delta: &[f64],
    c: f64,
    lags: usize,
) -> f64 {
    mean_jump_score(x_delta, b_delta, delta2_b, lambda_delta, c, lags)
}

/// Score for the marginal variance changing from `Λ1` to `Λ2`.
pub fn cov_change_score(x: &[f64], b: &[f64], lambda1: &[f64], lambda2: &[f64], c: f64, lags: usize) -> f64 {
    let body: f64 = x
        .iter()
        .zip(b)
        .zip(lambda1.iter().zip(lambda2))
        .map(|((x, b), (l1, l2))| {
            let (s1, s2) = (c + l1, c + l2);
            let r2 = (x - b) * (x - b);
            libm::log(s1) - libm::log(s2) + r2 * (1.0 / s1 - 1.0 / s2)
        })
        .sum();
    0.5 * lags as f64 * body
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCheck {
    pub mc: f64,
    pub analytic: f64,
    pub rel_error: f64,
}

/// Draws `n` decoded samples per time from `N(b_v, Λ_v)`, scores `x` at time
/// `t` (summed over dimensions) with the sampling scorer, and compares with
/// [`analytic_cpd`]. Relative error is absolute when the analytic value is 0.
pub fn mc_vs_analytic_check(spec: &GaussianProcessSpec, x: &[f64], t: usize, n: usize, seed: u64) -> Result<McCheck> {
    if n == 0 {
        return Err(input_err!("need at least one sample"));
    }
    if spec.len() < 2 || t >= spec.len() || x.len() != spec.dim() {
        return Err(input_err!(
            "need a spec of at least two times with t < T and a {}-dimensional x",
            spec.dim()
        ));
    }
    let d = spec.dim();
    // One set of standard draws shared by every time: each marginal is exact
    // and time-constant specs give identical samples at every time. The draws
    // are Latin-hypercube stratified per dimension to tame tail variance.
    let shared = latin_hypercube_normals(n, d, seed);
    let decoded = (0..spec.len())
        .map(|v| {
            let data = shared
                .iter()
                .enumerate()
                .map(|(k, z)| {
                    let j = k % d;
                    spec.means[v][j] + libm::sqrt(spec.variances[v][j]) * z
                })
                .collect();
            Array::from_vec(n, d, data)
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = TrajectoryBundle::from_decoded(decoded, seed)?;

    // Rows other than `t` only need to be finite; use the marginal means.
    let rows: Vec<Vec<f64>> = (0..spec.len())
        .map(|v| if v == t { x.to_vec() } else { spec.means[v].clone() })
        .collect();
    let series = TimeSeries::from_rows(&rows)?;
    let cfg = ScoreConfig {
        lags: spec.lags,
        obs_variance_c: spec.obs_variance_c,
        n_trajectories: n,
        ..ScoreConfig::default()
    };
    let matrix = cpd_score(&series, &bundle, &cfg)?;
    let mc: f64 = matrix.row(t).iter().sum();
    let analytic = analytic_cpd(x, t, spec);
    let rel_error = if analytic == 0.0 {
        libm::fabs(mc)
    } else {
        libm::fabs(mc - analytic) / libm::fabs(analytic)
    };
    Ok(McCheck { mc, analytic, rel_error })
}

/// `n x d` standard normal draws, row-major: for each dimension one draw
/// from each of the `n` equal-probability strata, in shuffled order.
pub fn latin_hypercube_normals(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed);
    let mut out = alloc::vec![0.0; n * d];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        order.shuffle(&mut rng);
        for (i, &stratum) in order.iter().enumerate() {
            let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
            out[i * d + j] = inverse_normal_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
        }
    }
    out
}

/// Standard normal quantile: Acklam's rational approximation polished by
/// one Halley step against `erfc`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < LOW {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - LOW {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * PI) * libm::exp(x * x / 2.0);
    x - u / (1.0 + x * u / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec_1d(means: &[f64], vars: &[f64], lags: usize) -> GaussianProcessSpec {
        GaussianProcessSpec::new(
            means.iter().map(|&m| vec![m]).collect(),
            vars.iter().map(|&v| vec![v]).collect(),
            0.1,
            lags,
        )
        .unwrap()
    }

    #[test]
    fn marginal_examples() {
        let s = GaussianProcessSpec::new(vec![vec![1.0, -2.0]], vec![vec![0.9, 0.9]], 0.1, 1).unwrap();
        let v = marginal_log_density(&[1.0, -2.0], 0, &s);
        assert!((v + libm::log(2.0 * PI)).abs() < 1e-14);

        let s = spec_1d(&[0.5], &[0.9], 1);
        let v = marginal_log_density(&[1.5], 0, &s);
        assert!((v - (-0.5 * libm::log(2.0 * PI) - 0.5)).abs() < 1e-14);
        assert!((v + 1.418_938_533_204_672_7).abs() < 1e-12);

        let narrow = spec_1d(&[0.0], &[0.4], 1);
        let wide = spec_1d(&[0.0], &[0.8], 1);
        let drop = marginal_log_density(&[0.0], 0, &narrow) - marginal_log_density(&[0.0], 0, &wide);
        assert!((drop - 0.5 * libm::log(0.9 / 0.5)).abs() < 1e-14);
    }

    #[test]
    fn constant_spec_scores_zero() {
        let s = spec_1d(&[0.3; 8], &[0.7; 8], 5);
        for x in [-3.0, 0.0, 0.3, 10.0] {
            assert!(analytic_cpd(&[x], 6, &s).abs() < 1e-14);
        }
    }

    #[test]
    fn theorem_matches_marginal_differences() {
        let s = spec_1d(&[0.0, 0.4, -1.0, 2.0, 0.5, 1.0], &[0.2, 1.0, 0.5, 2.0, 0.3, 0.9], 3);
        for t in 1..6 {
            let x = [0.7];
            let direct: f64 = (1..=3usize.min(t))
                .map(|l| marginal_log_density(&x, t, &s) - marginal_log_density(&x, t - l, &s))
                .sum();
            assert!((analytic_cpd(&x, t, &s) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn corollary_hand_values() {
        assert!((mean_jump_score(&[2.0], &[0.0], &[2.0], &[0.9], 0.1, 5) - 10.0).abs() < 1e-12);
        assert_eq!(mean_jump_score(&[1.3], &[0.2], &[0.0], &[0.9], 0.1, 5), 0.0);
        assert!((trend_jump_score(&[1.0], &[0.0], &[1.0], &[0.9], 0.1, 5) - 2.5).abs() < 1e-12);
        let cov = cov_change_score(&[2.0], &[0.0], &[0.9], &[3.9], 0.1, 5);
        assert!((cov - 2.5 * (3.0 - libm::log(4.0))).abs() < 1e-12);
        assert!((cov - 4.034).abs() < 1e-3);
        assert_eq!(cov_change_score(&[2.0], &[0.0], &[0.9], &[0.9], 0.1, 5), 0.0);
    }

    #[test]
    fn mean_jump_is_the_theorem_substituted() {
        let s = spec_1d(&[0.0, 0.0, 0.0, 0.0, 0.0, 2.0], &[0.9; 6], 5);
        assert!((analytic_cpd(&[2.0], 5, &s) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mc_constant_spec_is_exactly_zero() {
        let s = spec_1d(&[0.0; 4], &[1.0; 4], 2);
        let c = mc_vs_analytic_check(&s, &[0.5], 3, 20_000, 3).unwrap();
        assert_eq!(c.analytic, 0.0);
        assert_eq!(c.mc, 0.0);
    }

    #[test]
    fn normal_quantiles() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.001) + 3.090_232_306_167_813_5).abs() < 1e-11);
        for p in [1e-12, 0.01, 0.3, 0.7, 0.99] {
            let x = inverse_normal_cdf(p);
            assert!((0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p).abs() < 1e-14 * p.max(1e-3) * 1e3);
        }
    }

    #[test]
    fn stratified_draws_hit_every_stratum() {
        let n = 1000;
        let z = latin_hypercube_normals(n, 2, 5);
        for j in 0..2 {
            let mut strata: Vec<usize> = (0..n)
                .map(|i| {
                    let u = 0.5 * libm::erfc(-z[i * 2 + j] / core::f64::consts::SQRT_2);
                    (u * n as f64) as usize
                })
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec_1d(&[0.0, 1.0], &[0.5, 0.5], 1);
        let json = serde_json::to_string(&s).unwrap();
        let back: GaussianProcessSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<GaussianProcessSpec>(
            r#"{"means":[[0.0]],"variances":[[-1.0]],"obs_variance_c":0.1,"lags":1}"#
        )
        .is_err());
    }
}
