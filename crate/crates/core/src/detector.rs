//! Symbol detection over a discretized channel phase.
//!
//! The channel phase (carrier plus accumulated modulation phase) is
//! restricted to `L` levels `2 pi j / L`. A forward/backward recursion over
//! these levels yields, for every position, the extrinsic pmf of the phase
//! increment. With `L = m` and an indicator kernel this is exactly the BCJR
//! algorithm on the differential modulator trellis.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::dpsk::Mapping;
use crate::error::{Error, Result};
use crate::galois::{normalize_in_place, Pmf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseGrid {
    levels: usize,
    order: usize,
}

impl PhaseGrid {
    pub fn new(levels: usize, order: usize) -> Result<PhaseGrid> {
        if order == 0 || levels < order || levels % order != 0 {
            return Err(Error::GridMismatch { levels, order });
        }
        Ok(PhaseGrid { levels, order })
    }

    /// `8m` levels.
    pub fn standard(order: usize) -> PhaseGrid {
        PhaseGrid {
            levels: 8 * order,
            order,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Grid steps per modulation phase step.
    pub fn step(&self) -> usize {
        self.levels / self.order
    }

    pub fn angle(&self, j: usize) -> f64 {
        TAU * j as f64 / self.levels as f64
    }
}

/// Distribution of the phase-noise increment on the grid.
#[derive(Clone, Debug, PartialEq)]
pub enum TransitionModel {
    /// No phase noise.
    Indicator,
    /// Stay with probability `1 - p_delta`, move one level either way with `p_delta / 2`.
    ThreePoint { p_delta: f64 },
    /// Arbitrary kernel, `weights[d]` for an increment of `d` levels (mod L).
    Tabulated(Vec<f64>),
}

impl TransitionModel {
    pub const DEFAULT_P_DELTA: f64 = 0.1;

    fn taps(&self, levels: usize) -> Result<Vec<(usize, f64)>> {
        match self {
            TransitionModel::Indicator => Ok(vec![(0, 1.0)]),
            TransitionModel::ThreePoint { p_delta } => {
                if !(*p_delta > 0.0 && *p_delta < 1.0) {
                    return Err(Error::InvalidParameter(format!("P_delta = {p_delta} outside (0, 1)")));
                }
                if levels < 3 {
                    return Err(Error::InvalidParameter("three-point kernel needs at least 3 levels".into()));
                }
                Ok(vec![(0, 1.0 - p_delta), (1, p_delta / 2.0), (levels - 1, p_delta / 2.0)])
            }
            TransitionModel::Tabulated(w) => {
                if w.len() != levels || w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(Error::InvalidParameter("tabulated kernel must have L nonnegative weights".into()));
                }
                Ok(w.iter().copied().enumerate().filter(|&(_, x)| x > 0.0).collect())
            }
        }
    }
}

/// Wrapped Gaussian increment density sampled on the grid and normalized.
/// Entry `d` is the weight of an increment of `d` levels (mod L).
pub fn gaussian_kernel_reference(sigma_delta: f64, grid: &PhaseGrid) -> Vec<f64> {
    let l = grid.levels();
    let mut w: Vec<f64> = (0..l)
        .map(|d| {
            let x = grid.angle(d);
            (-4..=4)
                .map(|k| {
                    let y = x - TAU * k as f64;
                    (-y * y / (2.0 * sigma_delta * sigma_delta)).exp()
                })
                .sum()
        })
        .collect();
    if !normalize_in_place(&mut w) {
        // narrower than the grid resolution
        w.fill(0.0);
        w[0] = 1.0;
    }
    w
}

/// Likelihoods `exp(-|r_i - e^{j psi_j}|^2 / (2 sigma2))`, one row of `L` per sample,
/// each row scaled so its maximum is 1.
pub fn likelihood_table(samples: &[Complex64], grid: &PhaseGrid, sigma2: f64) -> Vec<f64> {
    let points = grid_points(grid);
    let mut table = vec![0.0; samples.len() * grid.levels()];
    fill_likelihoods(samples, &points, sigma2, &mut table);
    table
}

/// Divides by the sum and returns it.
fn rescale_sum(w: &mut [f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    total
}

fn grid_points(grid: &PhaseGrid) -> Vec<Complex64> {
    (0..grid.levels()).map(|j| Complex64::from_polar(1.0, grid.angle(j))).collect()
}

fn fill_likelihoods(samples: &[Complex64], points: &[Complex64], sigma2: f64, table: &mut [f64]) {
    let l = points.len();
    let scale = 1.0 / (2.0 * sigma2);
    for (row, r) in table.chunks_exact_mut(l).zip(samples) {
        // |r - p|^2 = |r|^2 + 1 - 2 Re(r conj p); only the cross term varies
        for (x, p) in row.iter_mut().zip(points) {
            *x = 2.0 * (r.re * p.re + r.im * p.im) * scale;
        }
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
        }
    }
}

/// Forward/backward detector for one channel configuration.
#[derive(Clone, Debug)]
pub struct Detector {
    grid: PhaseGrid,
    taps: Vec<(usize, f64)>,
    points: Vec<Complex64>,
    sigma2: f64,
}

/// Per-frame buffers.
#[derive(Clone, Debug, Default)]
pub struct DetectorWorkspace {
    n: usize,
    lik: Vec<f64>,
    alpha: Vec<f64>,
    ext: Vec<f64>,
    beta: Vec<f64>,
    delta: Vec<f64>,
}

impl DetectorWorkspace {
    /// Forward metrics, `L` per sample (for inspection).
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn likelihoods(&self) -> &[f64] {
        &self.lik
    }
}

impl Detector {
    pub fn new(grid: PhaseGrid, model: &TransitionModel, sigma2: f64) -> Result<Detector> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise variance {sigma2} must be positive")));
        }
        let taps = model.taps(grid.levels())?;
        Ok(Detector {
            grid,
            taps,
            points: grid_points(&grid),
            sigma2,
        })
    }

    /// Trellis detector for a channel without phase noise: `L = m`, indicator kernel.
    pub fn coherent(order: usize, sigma2: f64) -> Result<Detector> {
        Detector::new(PhaseGrid::new(order, order)?, &TransitionModel::Indicator, sigma2)
    }

    /// `8m` levels with the three-point kernel.
    pub fn wiener(order: usize, sigma2: f64, p_delta: f64) -> Result<Detector> {
        Detector::new(PhaseGrid::standard(order), &TransitionModel::ThreePoint { p_delta }, sigma2)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// Computes the likelihood table for `N + 1` received samples.
    pub fn load(&self, samples: &[Complex64], ws: &mut DetectorWorkspace) {
        let l = self.grid.levels();
        let n = samples.len().saturating_sub(1);
        ws.n = n;
        ws.lik.resize(samples.len() * l, 0.0);
        ws.alpha.resize(samples.len() * 2 * l, 0.0);
        ws.beta.resize(2 * l, 0.0);
        ws.delta.resize(2 * l, 0.0);
        ws.ext.resize(l, 0.0);
        fill_likelihoods(samples, &self.points, self.sigma2, &mut ws.lik);
    }

    /// Extrinsic pmfs over phase increments given priors over phase increments.
    ///
    /// `priors` and `out` hold `m` weights for each of the `N` symbol positions;
    /// the workspace must have been loaded with the frame's samples.
    pub fn detect_flat(&self, ws: &mut DetectorWorkspace, priors: &[f64], out: &mut [f64]) {
        let l = self.grid.levels();
        let m = self.grid.order();
        let s = self.grid.step();
        let n = ws.n;
        assert_eq!(priors.len(), n * m, "one prior per symbol");
        assert_eq!(out.len(), n * m, "one output per symbol");
        let DetectorWorkspace {
            lik,
            alpha,
            ext,
            beta,
            delta,
            ..
        } = ws;

        // alpha rows are stored twice over (length 2L) so shifted reads need no modulo
        {
            let a0 = &mut alpha[..2 * l];
            a0[..l].copy_from_slice(&lik[..l]);
            normalize_in_place(&mut a0[..l]);
            a0.copy_within(..l, l);
        }
        for i in 1..=n {
            let (prev, cur) = alpha[(i - 1) * 2 * l..(i + 1) * 2 * l].split_at_mut(2 * l);
            // gamma[k] = sum_d K(d) alpha_{i-1}[k - d]
            let gamma = &mut delta[..];
            for k in 0..l {
                let mut acc = 0.0;
                for &(d, w) in &self.taps {
                    acc += w * prev[k + l - d];
                }
                gamma[k] = acc;
                gamma[k + l] = acc;
            }
            let pri = &priors[(i - 1) * m..i * m];
            let row = &lik[i * l..(i + 1) * l];
            for j in 0..l {
                let mut acc = 0.0;
                for (a, &p) in pri.iter().enumerate() {
                    acc += p * gamma[j + l - a * s];
                }
                cur[j] = row[j] * acc;
            }
            normalize_in_place(&mut cur[..l]);
            cur.copy_within(..l, l);
        }

        beta[..l].copy_from_slice(&lik[n * l..(n + 1) * l]);
        normalize_in_place(&mut beta[..l]);
        for i in (1..=n).rev() {
            // delta[k] = sum_d K(d) beta_i[k + d]
            beta.copy_within(..l, l);
            for k in 0..l {
                let mut acc = 0.0;
                for &(d, w) in &self.taps {
                    acc += w * beta[k + d];
                }
                delta[k] = acc;
                delta[k + l] = acc;
            }
            let prev = &alpha[(i - 1) * 2 * l..(i - 1) * 2 * l + l];
            let e = &mut out[(i - 1) * m..i * m];
            for (a, x) in e.iter_mut().enumerate() {
                let off = a * s;
                let mut acc = 0.0;
                for k in 0..l {
                    acc += prev[k] * delta[k + off];
                }
                *x = acc;
            }
            normalize_in_place(e);

            let pri = &priors[(i - 1) * m..i * m];
            let row = &lik[(i - 1) * l..i * l];
            for k in 0..l {
                let mut acc = 0.0;
                for (a, &p) in pri.iter().enumerate() {
                    acc += p * delta[k + a * s];
                }
                ext[k] = row[k] * acc;
            }
            beta[..l].copy_from_slice(ext);
            normalize_in_place(&mut beta[..l]);
        }
    }

    /// Natural log of the forward path mass: the sum over initial levels
    /// (weight `1/L`), increments (weighted by `priors`) and phase-noise steps
    /// of the product of the loaded likelihood rows.
    ///
    /// Rows are the max-normalized ones from [`likelihood_table`], so only
    /// differences between two calls on the same workspace are meaningful.
    pub fn log_evidence(&self, ws: &DetectorWorkspace, priors: &[f64]) -> f64 {
        let l = self.grid.levels();
        let m = self.grid.order();
        let s = self.grid.step();
        let n = ws.n;
        assert_eq!(priors.len(), n * m, "one prior per symbol");
        let mut prev = vec![0.0; 2 * l];
        let mut gamma = vec![0.0; 2 * l];
        prev[..l].copy_from_slice(&ws.lik[..l]);
        let mut log_mass = -(l as f64).ln();
        log_mass += rescale_sum(&mut prev[..l]).ln();
        prev.copy_within(..l, l);
        for i in 1..=n {
            for k in 0..l {
                let mut acc = 0.0;
                for &(d, w) in &self.taps {
                    acc += w * prev[k + l - d];
                }
                gamma[k] = acc;
                gamma[k + l] = acc;
            }
            let pri = &priors[(i - 1) * m..i * m];
            let row = &ws.lik[i * l..(i + 1) * l];
            for j in 0..l {
                let mut acc = 0.0;
                for (a, &p) in pri.iter().enumerate() {
                    if p != 0.0 {
                        acc += p * gamma[j + l - a * s];
                    }
                }
                prev[j] = row[j] * acc;
            }
            log_mass += rescale_sum(&mut prev[..l]).ln();
            prev.copy_within(..l, l);
        }
        log_mass
    }

    /// Extrinsic pmfs over field symbols, given priors over field symbols.
    pub fn detect(&self, samples: &[Complex64], priors: &[Pmf], mapping: &Mapping) -> Result<Vec<Pmf>> {
        let m = self.grid.order();
        if mapping.order() != m {
            return Err(Error::GridMismatch {
                levels: self.grid.levels(),
                order: mapping.order(),
            });
        }
        let n = samples.len().saturating_sub(1);
        if priors.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: priors.len(),
            });
        }
        let mut phase_priors = vec![0.0; n * m];
        for (p, chunk) in priors.iter().zip(phase_priors.chunks_exact_mut(m)) {
            mapping.to_phase_weights(p.weights(), chunk);
        }
        let mut ws = DetectorWorkspace::default();
        self.load(samples, &mut ws);
        let mut out = vec![0.0; n * m];
        self.detect_flat(&mut ws, &phase_priors, &mut out);
        Ok(out
            .chunks_exact(m)
            .map(|c| {
                let mut w = vec![0.0; m];
                mapping.to_field_weights(c, &mut w);
                Pmf::normalized(w)
            })
            .collect())
    }
}
