//! Information rates and the dependency-testing bound by Monte Carlo.
//!
//! Inputs are i.i.d. uniform DPSK increments. Coherent densities use the
//! memoryless per-symbol formula with the reference phase known; Wiener
//! densities run the discretized-phase forward recursion twice, once with the
//! true increments and once with uniform ones.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, ChannelMode, ChannelParams};
use crate::detector::{Detector, DetectorWorkspace};
use crate::error::{Error, Result};
use crate::receiver::{mix_seed, write_csv, ChannelConfig};

/// Information density evaluator for one channel configuration and noise level.
pub struct DensityEvaluator {
    mode: ChannelMode,
    order: usize,
    params: ChannelParams,
    detector: Option<Detector>,
}

/// One random-coding block and its information density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfoDensitySample {
    /// `log2 p(r|s) - log2 p(r)`.
    pub bits: f64,
    /// Increments in the block (the block has one more transmitted symbol).
    pub symbols: usize,
}

impl DensityEvaluator {
    pub fn new(channel: &ChannelConfig, params: ChannelParams) -> Result<DensityEvaluator> {
        let order = 1usize << channel.p;
        let detector = match channel.mode {
            ChannelMode::Coherent => None,
            ChannelMode::Wiener => Some(channel.detector.build(ChannelMode::Wiener, order, params.sigma2)?),
        };
        Ok(DensityEvaluator {
            mode: channel.mode,
            order,
            params,
            detector,
        })
    }

    pub fn at_ebn0(channel: &ChannelConfig, ebn0_db: f64, code_rate: f64) -> Result<DensityEvaluator> {
        let params = ChannelParams::from_ebn0(channel.mode, ebn0_db, code_rate, channel.p, channel.sigma_delta_deg)?;
        DensityEvaluator::new(channel, params)
    }

    /// Draws `n` uniform increments, transmits the `n + 1` phases and returns
    /// the increments with the received samples.
    pub fn draw_block<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<usize>, Vec<Complex64>) {
        let m = self.order;
        let increments: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let mut phases = Vec::with_capacity(n + 1);
        let mut acc = 0;
        phases.push(0.0);
        for &a in &increments {
            acc = (acc + a) % m;
            phases.push(std::f64::consts::TAU * acc as f64 / m as f64);
        }
        let out = transmit(&phases, &self.params, rng);
        (increments, out.samples)
    }

    /// Information density of `increments` given the `increments.len() + 1` samples.
    pub fn info_density(&self, increments: &[usize], samples: &[Complex64], ws: &mut DetectorWorkspace) -> Result<InfoDensitySample> {
        if samples.len() != increments.len() + 1 {
            return Err(Error::LengthMismatch {
                expected: increments.len() + 1,
                found: samples.len(),
            });
        }
        let m = self.order;
        if let Some(&a) = increments.iter().find(|&&a| a >= m) {
            return Err(Error::InvalidParameter(format!("increment {a} outside 0..{m}")));
        }
        let nats = match (&self.mode, &self.detector) {
            (ChannelMode::Wiener, Some(det)) => {
                det.load(samples, ws);
                let uniform = vec![1.0 / m as f64; increments.len() * m];
                let mut known = vec![0.0; increments.len() * m];
                for (i, &a) in increments.iter().enumerate() {
                    known[i * m + a] = 1.0;
                }
                det.log_evidence(ws, &known) - det.log_evidence(ws, &uniform)
            }
            _ => self.coherent_nats(increments, samples),
        };
        Ok(InfoDensitySample {
            bits: nats / std::f64::consts::LN_2,
            symbols: increments.len(),
        })
    }

    fn coherent_nats(&self, increments: &[usize], samples: &[Complex64]) -> f64 {
        let m = self.order;
        let inv = 1.0 / self.params.sigma2;
        let points: Vec<Complex64> = (0..m)
            .map(|x| Complex64::from_polar(1.0, std::f64::consts::TAU * x as f64 / m as f64))
            .collect();
        let mut acc = 0;
        let mut total = 0.0;
        let mut metric = vec![0.0; m];
        for (&a, r) in increments.iter().zip(&samples[1..]) {
            acc = (acc + a) % m;
            for (x, p) in metric.iter_mut().zip(&points) {
                *x = (r.re * p.re + r.im * p.im) * inv;
            }
            let mx = metric.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + metric.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            total += metric[acc] - lse + (m as f64).ln();
        }
        total
    }

    /// Information density of a fresh block.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, ws: &mut DetectorWorkspace) -> Result<InfoDensitySample> {
        let (inc, samples) = self.draw_block(n, rng);
        self.info_density(&inc, &samples, ws)
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Samples `blocks` densities in parallel; block `b` uses its own seeded stream.
fn sample_blocks(eval: &DensityEvaluator, n: usize, blocks: usize, seed: u64) -> Result<Vec<f64>> {
    (0..blocks as u64)
        .into_par_iter()
        .map_init(DetectorWorkspace::default, |ws, b| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, b]));
            eval.sample(n, &mut rng, ws).map(|s| s.bits)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub ebn0_db: f64,
    /// Bits per channel use.
    pub info_rate_bits: f64,
    pub stderr: f64,
}

/// Monte Carlo information rate at `ebn0_db`, with `Eb` referred to `code_rate`.
///
/// Streams depend on `seed` and the block index only, so rates at different
/// Eb/N0 values are paired.
pub fn information_rate(
    channel: &ChannelConfig,
    ebn0_db: f64,
    code_rate: f64,
    block_len: usize,
    blocks: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if block_len == 0 || blocks == 0 {
        return Err(Error::InvalidParameter("block length and block count must be positive".into()));
    }
    let eval = DensityEvaluator::at_ebn0(channel, ebn0_db, code_rate)?;
    let per_use: Vec<f64> = sample_blocks(&eval, block_len, blocks, seed)?
        .into_iter()
        .map(|b| b / block_len as f64)
        .collect();
    let (mean, se) = mean_and_stderr(&per_use);
    Ok(RateEstimate {
        ebn0_db,
        info_rate_bits: mean,
        stderr: se,
    })
}

/// Settings for locating the Eb/N0 at which the information rate reaches `code_rate * p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub block_len: usize,
    pub blocks: usize,
    pub low_db: f64,
    pub high_db: f64,
    pub tol_db: f64,
    pub seed: u64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            block_len: 10_000,
            blocks: 20,
            low_db: -2.0,
            high_db: 15.0,
            tol_db: 0.02,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub limit_db: f64,
    pub target_bits: f64,
    pub code_rate: f64,
    pub channel: ChannelConfig,
    pub config: LimitConfig,
    pub probes: Vec<RateEstimate>,
}

/// Smallest Eb/N0 supporting `code_rate * p` bits per use, by bisection.
pub fn rate_limit(channel: &ChannelConfig, code_rate: f64, cfg: &LimitConfig) -> Result<LimitResult> {
    if !(cfg.tol_db > 0.0 && cfg.low_db < cfg.high_db) {
        return Err(Error::InvalidParameter("need tol_db > 0 and low_db < high_db".into()));
    }
    let target = code_rate * channel.p as f64;
    let probe = |db: f64| information_rate(channel, db, code_rate, cfg.block_len, cfg.blocks, cfg.seed);
    let (mut lo, mut hi) = (cfg.low_db, cfg.high_db);
    let mut probes = vec![probe(hi)?, probe(lo)?];
    if probes[0].info_rate_bits < target || probes[1].info_rate_bits >= target {
        return Err(Error::NonConvergent { low_db: lo, high_db: hi });
    }
    while hi - lo > cfg.tol_db {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid)?;
        probes.push(p);
        if p.info_rate_bits >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LimitResult {
        limit_db: 0.5 * (lo + hi),
        target_bits: target,
        code_rate,
        channel: *channel,
        config: *cfg,
        probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtBoundResult {
    pub ebn0_db: f64,
    /// Information symbols.
    pub k: usize,
    /// Code symbols; blocks carry `n + 1` transmitted symbols.
    pub n: usize,
    pub m: usize,
    /// Monte Carlo samples.
    pub samples: usize,
    pub dt_bound: f64,
    pub stderr: f64,
}

/// Dependency-testing bound on the block error probability of a random
/// `(n, k)` code over the DPSK channel at `ebn0_db`.
pub fn dt_bound(channel: &ChannelConfig, ebn0_db: f64, k: usize, n: usize, samples: usize, seed: u64) -> Result<DtBoundResult> {
    if n == 0 || k > n || samples == 0 {
        return Err(Error::InvalidParameter(format!("need 0 <= k <= n, n > 0 and samples > 0 (k = {k}, n = {n})")));
    }
    let m = 1usize << channel.p;
    // K = 0 has no rate to refer Eb to; any positive rate gives the same threshold
    let code_rate = if k == 0 { 1.0 / n as f64 } else { k as f64 / n as f64 };
    let eval = DensityEvaluator::at_ebn0(channel, ebn0_db, code_rate)?;
    let threshold = k as f64 * channel.p as f64 - 1.0;
    let terms: Vec<f64> = sample_blocks(&eval, n, samples, seed)?
        .into_iter()
        .map(|i| (-(i - threshold).max(0.0)).exp2())
        .collect();
    let (mean, se) = mean_and_stderr(&terms);
    Ok(DtBoundResult {
        ebn0_db,
        k,
        n,
        m,
        samples,
        dt_bound: mean.clamp(0.0, 1.0),
        stderr: se,
    })
}

/// Eb/N0 where a decreasing curve crosses `target`, interpolating `log10(y)`
/// linearly between the bracketing points. `None` if the curve never drops to `target`.
pub fn crossing_db(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= target && y1 <= target {
            if y1 <= 0.0 || y0 == y1 {
                return Some(x1);
            }
            let (l0, l1, lt) = (y0.log10(), y1.log10(), target.log10());
            return Some(x0 + (x1 - x0) * (l0 - lt) / (l0 - l1));
        }
    }
    None
}

pub fn write_dt_csv<W: Write>(results: &[DtBoundResult], w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        ebn0_db: f64,
        dt_bound: f64,
        stderr: f64,
    }
    let rows: Vec<Row> = results
        .iter()
        .map(|r| Row {
            ebn0_db: r.ebn0_db,
            dt_bound: r.dt_bound,
            stderr: r.stderr,
        })
        .collect();
    write_csv(&rows, w)
}

pub fn write_rate_csv<W: Write>(results: &[RateEstimate], w: W) -> Result<()> {
    write_csv(results, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{likelihood_table, PhaseGrid, TransitionModel};
    use crate::receiver::DetectorConfig;

    fn wiener(p: u32, sigma_delta_deg: f64) -> ChannelConfig {
        ChannelConfig {
            p,
            mode: ChannelMode::Wiener,
            sigma_delta_deg,
            detector: DetectorConfig::default(),
        }
    }

    fn coherent(p: u32) -> ChannelConfig {
        ChannelConfig {
            mode: ChannelMode::Coherent,
            ..wiener(p, 0.0)
        }
    }

    #[test]
    fn forward_evidence_equals_exhaustive_sum() {
        let (l, m) = (8usize, 4usize);
        let s = l / m;
        let p_delta = 0.1;
        let kernel = |d: usize| match d % l {
            0 => 1.0 - p_delta,
            1 => p_delta / 2.0,
            x if x == l - 1 => p_delta / 2.0,
            _ => 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let sigma2 = 0.1 + rng.random::<f64>();
            let grid = PhaseGrid::new(l, m).unwrap();
            let det = Detector::new(grid, &TransitionModel::ThreePoint { p_delta }, sigma2).unwrap();
            let samples: Vec<Complex64> = (0..3)
                .map(|_| Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
                .collect();
            let lik = likelihood_table(&samples, &grid, sigma2);
            let mut ws = DetectorWorkspace::default();
            det.load(&samples, &mut ws);
            let known = [rng.random_range(0..m), rng.random_range(0..m)];
            let mut joint = 0.0;
            let mut cond = 0.0;
            for p0 in 0..l {
                for p1 in 0..l {
                    for p2 in 0..l {
                        for a1 in 0..m {
                            for a2 in 0..m {
                                let w = lik[p0]
                                    * lik[l + p1]
                                    * lik[2 * l + p2]
                                    * kernel(p1 + 2 * l - p0 - a1 * s)
                                    * kernel(p2 + 2 * l - p1 - a2 * s)
                                    / l as f64;
                                joint += w / (m * m) as f64;
                                if [a1, a2] == known {
                                    cond += w;
                                }
                            }
                        }
                    }
                }
            }
            let uniform = vec![0.25; 2 * m];
            let mut delta = vec![0.0; 2 * m];
            delta[known[0]] = 1.0;
            delta[m + known[1]] = 1.0;
            let ours_joint = det.log_evidence(&ws, &uniform).exp();
            let ours_cond = det.log_evidence(&ws, &delta).exp();
            assert!((ours_joint / joint - 1.0).abs() < 1e-9, "{ours_joint} vs {joint}");
            assert!((ours_cond / cond - 1.0).abs() < 1e-9, "{ours_cond} vs {cond}");
        }
    }

    #[test]
    fn coherent_density_at_high_snr_is_full_rate() {
        let params = ChannelParams::new(ChannelMode::Coherent, 1e-4, 0.0).unwrap();
        let eval = DensityEvaluator::new(&coherent(3), params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = eval.sample(100, &mut rng, &mut DetectorWorkspace::default()).unwrap();
        assert!((s.bits - 300.0).abs() < 1e-6, "{}", s.bits);
        assert_eq!(s.symbols, 100);
    }

    #[test]
    fn wiener_density_at_high_snr_is_full_rate() {
        let params = ChannelParams::new(ChannelMode::Wiener, 1e-3, 0.0).unwrap();
        let eval = DensityEvaluator::new(&wiener(2, 0.0), params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = eval.sample(200, &mut rng, &mut DetectorWorkspace::default()).unwrap();
        // the per-step three-point kernel costs a little against the noiseless rate
        assert!(s.bits > 0.9 * 400.0 && s.bits < 400.0 + 1e-6, "{}", s.bits);
    }

    #[test]
    fn density_vanishes_at_low_snr() {
        for ch in [coherent(3), wiener(3, 2.0)] {
            let r = information_rate(&ch, -30.0, 0.5, 500, 20, 4).unwrap();
            assert!(r.info_rate_bits.abs() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn rate_is_monotone_and_coherent_dominates() {
        let mut last = f64::NEG_INFINITY;
        for db in [0.0, 2.0, 4.0] {
            let w = information_rate(&wiener(3, 2.0), db, 0.5, 2000, 8, 5).unwrap();
            let c = information_rate(&coherent(3), db, 0.5, 2000, 8, 5).unwrap();
            assert!(w.info_rate_bits >= last - 3.0 * w.stderr);
            assert!(w.info_rate_bits <= c.info_rate_bits + 3.0 * (w.stderr + c.stderr), "{w:?} {c:?}");
            last = w.info_rate_bits;
        }
    }

    #[test]
    fn coherent_limit_for_rate_half_8psk() {
        let cfg = LimitConfig {
            block_len: 5000,
            blocks: 10,
            tol_db: 0.05,
            ..LimitConfig::default()
        };
        let r = rate_limit(&coherent(3), 0.5, &cfg).unwrap();
        assert!((r.limit_db - 1.28).abs() < 0.15, "{}", r.limit_db);
        assert_eq!(r.target_bits, 1.5);
    }

    #[test]
    fn dt_bound_edge_cases() {
        // K = 0: threshold -1, so the bound is at most 1/2 when the density is non-negative
        let r = dt_bound(&coherent(3), 10.0, 0, 20, 1000, 6).unwrap();
        assert!(r.dt_bound <= 0.5 + 1e-12);
        // very high SNR: density far above the threshold
        let r = dt_bound(&coherent(3), 40.0, 10, 20, 1000, 6).unwrap();
        assert!(r.dt_bound < 1e-9);
        assert!(dt_bound(&coherent(3), 1.0, 30, 20, 1000, 6).is_err());
    }

    #[test]
    fn dt_bound_is_stable_in_sample_count() {
        let ch = wiener(3, 2.0);
        let a = dt_bound(&ch, 2.5, 40, 80, 1000, 7).unwrap();
        let b = dt_bound(&ch, 2.5, 40, 80, 2000, 8).unwrap();
        assert!((a.dt_bound - b.dt_bound).abs() <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(), "{a:?} {b:?}");
        assert!(a.dt_bound > 0.0 && a.dt_bound < 1.0);
    }

    #[test]
    fn crossing_interpolates_in_log_domain() {
        let pts = [(1.0, 1e-1), (2.0, 1e-3), (3.0, 1e-5)];
        assert!((crossing_db(&pts, 1e-2).unwrap() - 1.5).abs() < 1e-12);
        assert!((crossing_db(&pts, 1e-3).unwrap() - 2.0).abs() < 1e-12);
        assert!(crossing_db(&pts, 1e-6).is_none());
        assert_eq!(crossing_db(&[(1.0, 0.1), (2.0, 0.0)], 1e-3), Some(2.0));
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_dt_csv(
            &[DtBoundResult {
                ebn0_db: 1.0,
                k: 1,
                n: 2,
                m: 8,
                samples: 10,
                dt_bound: 0.5,
                stderr: 0.1,
            }],
            &mut buf,
        )
        .unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("ebn0_db,dt_bound,stderr\n"));
        let mut buf = Vec::new();
        write_rate_csv(
            &[RateEstimate {
                ebn0_db: 1.0,
                info_rate_bits: 1.2,
                stderr: 0.01,
            }],
            &mut buf,
        )
        .unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("ebn0_db,info_rate_bits,stderr\n"));
    }

    #[test]
    fn mismatched_inputs() {
        let eval = DensityEvaluator::at_ebn0(&wiener(3, 2.0), 3.0, 0.5).unwrap();
        let mut ws = DetectorWorkspace::default();
        assert!(eval.info_density(&[0, 1], &[Complex64::new(1.0, 0.0); 2], &mut ws).is_err());
        assert!(eval.info_density(&[9], &[Complex64::new(1.0, 0.0); 2], &mut ws).is_err());
    }
}
