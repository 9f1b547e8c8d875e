//! Iterative detection and decoding, and Monte Carlo error-rate campaigns.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, ChannelMode, ChannelParams};
use crate::codec::{Code, Decoder, DecoderState};
use crate::detector::{Detector, DetectorWorkspace, PhaseGrid, TransitionModel};
use crate::dpsk::{apply_adapter, deadapt_flat, modulate, AdapterSequence, Interleaver, Mapping};
use crate::error::{Error, Result};
use crate::galois::{argmax, FieldElement};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurboConfig {
    /// Detector/decoder exchanges, one BP iteration each.
    pub max_iterations: usize,
    /// Stop once the hard decision satisfies all checks.
    pub early_stop: bool,
    /// Further iterations the same codeword decision must persist before an early stop.
    pub confirmations: usize,
}

impl Default for TurboConfig {
    fn default() -> Self {
        TurboConfig {
            max_iterations: 200,
            early_stop: true,
            confirmations: 1,
        }
    }
}

/// How the detector models the channel phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Phase levels per constellation point (the grid has `levels_per_symbol * m` levels).
    pub levels_per_symbol: usize,
    pub p_delta: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            levels_per_symbol: 8,
            p_delta: TransitionModel::DEFAULT_P_DELTA,
        }
    }
}

impl DetectorConfig {
    /// Coherent channels get the `m`-state trellis; Wiener channels the discretized-phase model.
    pub fn build(&self, mode: ChannelMode, order: usize, sigma2: f64) -> Result<Detector> {
        match mode {
            ChannelMode::Coherent => Detector::coherent(order, sigma2),
            ChannelMode::Wiener => Detector::new(
                PhaseGrid::new(self.levels_per_symbol * order, order)?,
                &TransitionModel::ThreePoint { p_delta: self.p_delta },
                sigma2,
            ),
        }
    }
}

/// Modulation order, channel and detector model shared by the analysis tools.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Field exponent; the constellation has `2^p` points.
    pub p: u32,
    pub mode: ChannelMode,
    pub sigma_delta_deg: f64,
    pub detector: DetectorConfig,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            p: 3,
            mode: ChannelMode::Wiener,
            sigma_delta_deg: 2.0,
            detector: DetectorConfig::default(),
        }
    }
}

/// Outcome of receiving one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub symbols: Vec<FieldElement>,
    pub iterations: usize,
    pub syndrome_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameVerdict {
    pub decoded: Vec<FieldElement>,
    pub iterations: usize,
    pub codeword_error: bool,
    pub symbol_errors: usize,
}

impl FrameVerdict {
    pub fn compare(decoded: Decoded, truth: &[FieldElement]) -> FrameVerdict {
        let symbol_errors = decoded.symbols.iter().zip(truth).filter(|(a, b)| a != b).count();
        FrameVerdict {
            codeword_error: symbol_errors > 0,
            symbol_errors,
            iterations: decoded.iterations,
            decoded: decoded.symbols,
        }
    }
}

/// Turbo receiver with reusable buffers.
pub struct TurboReceiver<'a> {
    decoder: &'a Decoder,
    mapping: &'a Mapping,
    turbo: TurboConfig,
    det_ws: DetectorWorkspace,
    dec_state: DecoderState,
    det_prior: Vec<f64>,
    det_ext: Vec<f64>,
    field_buf: Vec<f64>,
    dec_prior: Vec<f64>,
    dec_ext: Vec<f64>,
    decision: Vec<FieldElement>,
}

impl<'a> TurboReceiver<'a> {
    pub fn new(decoder: &'a Decoder, mapping: &'a Mapping, turbo: TurboConfig) -> TurboReceiver<'a> {
        let n = decoder.code().n();
        let m = decoder.code().field().order();
        TurboReceiver {
            decoder,
            mapping,
            turbo,
            det_ws: DetectorWorkspace::default(),
            dec_state: decoder.new_state(),
            det_prior: vec![0.0; n * m],
            det_ext: vec![0.0; n * m],
            field_buf: vec![0.0; n * m],
            dec_prior: vec![0.0; n * m],
            dec_ext: vec![0.0; n * m],
            decision: vec![FieldElement::ZERO; n],
        }
    }

    /// Runs the detector/decoder loop on `N + 1` received samples.
    ///
    /// `adapters` are the offsets added before interleaving, if any.
    pub fn receive(
        &mut self,
        detector: &Detector,
        samples: &[num_complex::Complex64],
        interleaver: &Interleaver,
        adapters: Option<&AdapterSequence>,
    ) -> Result<Decoded> {
        let code = self.decoder.code();
        let n = code.n();
        let m = code.field().order();
        if samples.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n + 1,
                found: samples.len(),
            });
        }
        if interleaver.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: interleaver.len(),
            });
        }
        if let Some(t) = adapters {
            if t.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: t.len() });
            }
        }
        if detector.grid().order() != m || self.mapping.order() != m {
            return Err(Error::GridMismatch {
                levels: detector.grid().levels(),
                order: m,
            });
        }
        detector.load(samples, &mut self.det_ws);
        self.dec_state.reset();
        self.det_prior.fill(1.0 / m as f64);
        let mut syndrome_ok = false;
        let mut iterations = 0;
        let mut streak = 0;
        for it in 1..=self.turbo.max_iterations {
            iterations = it;
            detector.detect_flat(&mut self.det_ws, &self.det_prior, &mut self.det_ext);
            for (src, dst) in self.det_ext.chunks_exact(m).zip(self.field_buf.chunks_exact_mut(m)) {
                self.mapping.to_field_weights(src, dst);
            }
            interleaver.deinterleave_flat(&self.field_buf, m, &mut self.dec_prior);
            if let Some(t) = adapters {
                deadapt_flat(&mut self.dec_prior, m, t);
            }
            self.decoder.iterate_flat(&mut self.dec_state, &self.dec_prior);
            let mut changed = it == 1;
            let mut channel_agrees = true;
            for ((d, app), pri) in self
                .decision
                .iter_mut()
                .zip(self.dec_state.app_flat().chunks_exact(m))
                .zip(self.dec_prior.chunks_exact(m))
            {
                let x = FieldElement(argmax(app) as u8);
                changed |= *d != x;
                channel_agrees &= argmax(pri) == x.index();
                *d = x;
            }
            syndrome_ok = code.parity_check().is_codeword(&self.decision);
            streak = match (syndrome_ok, changed) {
                (false, _) => 0,
                (true, true) => 1,
                (true, false) => streak + 1,
            };
            // a codeword the detector alone already points at needs no confirmation
            if self.turbo.early_stop && (streak > self.turbo.confirmations || (syndrome_ok && channel_agrees)) {
                break;
            }
            if it == self.turbo.max_iterations {
                break;
            }
            self.dec_ext.copy_from_slice(self.dec_state.extrinsic_flat());
            if let Some(t) = adapters {
                deadapt_flat(&mut self.dec_ext, m, t);
            }
            interleaver.interleave_flat(&self.dec_ext, m, &mut self.field_buf);
            for (src, dst) in self.field_buf.chunks_exact(m).zip(self.det_prior.chunks_exact_mut(m)) {
                self.mapping.to_phase_weights(src, dst);
            }
        }
        Ok(Decoded {
            symbols: self.decision.clone(),
            iterations,
            syndrome_ok,
        })
    }
}

/// Receives one frame and compares against the transmitted codeword.
#[allow(clippy::too_many_arguments)]
pub fn run_frame(
    samples: &[num_complex::Complex64],
    decoder: &Decoder,
    interleaver: &Interleaver,
    mapping: &Mapping,
    adapters: Option<&AdapterSequence>,
    detector: &Detector,
    turbo: TurboConfig,
    truth: &[FieldElement],
) -> Result<FrameVerdict> {
    let mut rx = TurboReceiver::new(decoder, mapping, turbo);
    let decoded = rx.receive(detector, samples, interleaver, adapters)?;
    Ok(FrameVerdict::compare(decoded, truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterleaverMode {
    /// One seeded interleaver for the whole campaign.
    Fixed,
    /// A fresh interleaver per frame.
    PerFrame,
}

/// Monte Carlo error-rate campaign settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub ebn0_db: Vec<f64>,
    pub mode: ChannelMode,
    pub sigma_delta_deg: f64,
    pub detector: DetectorConfig,
    pub turbo: TurboConfig,
    /// Frames per point at most.
    pub max_frames: u64,
    /// Stop a point after this many codeword errors; 0 disables.
    pub error_target: u64,
    pub interleaver: InterleaverMode,
    pub adapters: bool,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            ebn0_db: Vec::new(),
            mode: ChannelMode::Wiener,
            sigma_delta_deg: 2.0,
            detector: DetectorConfig::default(),
            turbo: TurboConfig::default(),
            max_frames: 100_000,
            error_target: 100,
            interleaver: InterleaverMode::Fixed,
            adapters: false,
            seed: 1,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ebn0_db.is_empty() {
            return Err(Error::InvalidParameter("Eb/N0 grid is empty".into()));
        }
        if self.ebn0_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("Eb/N0 values must be finite".into()));
        }
        if self.max_frames == 0 {
            return Err(Error::InvalidParameter("max_frames must be positive".into()));
        }
        if self.turbo.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.sigma_delta_deg >= 0.0 && self.sigma_delta_deg.is_finite()) {
            return Err(Error::InvalidParameter("sigma_delta_deg must be >= 0".into()));
        }
        if self.detector.levels_per_symbol == 0 {
            return Err(Error::InvalidParameter("levels_per_symbol must be positive".into()));
        }
        if !(self.detector.p_delta > 0.0 && self.detector.p_delta < 1.0) {
            return Err(Error::InvalidParameter("p_delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub ebn0_db: f64,
    pub frames: u64,
    pub cw_errors: u64,
    pub cer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub avg_iters: f64,
    pub symbol_errors: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeSummary {
    pub n: usize,
    pub k: usize,
    pub field_order: usize,
    pub rate: f64,
}

impl CodeSummary {
    pub fn of(code: &Code) -> CodeSummary {
        CodeSummary {
            n: code.n(),
            k: code.k(),
            field_order: code.field().order(),
            rate: code.rate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub code: CodeSummary,
    pub points: Vec<PointResult>,
}

impl CampaignResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(&self.points, w)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))
    }
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Output(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::Output(e.to_string()))
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Mixes integers into a well-spread 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= splitmix64(p.wrapping_add(h));
        h = splitmix64(h);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const INTERLEAVER_STREAM: u64 = 0x1e7e_a1e5;

/// Everything needed to simulate frames at one operating point.
pub struct FrameSimulator<'a> {
    pub decoder: &'a Decoder,
    pub mapping: &'a Mapping,
    pub detector: Detector,
    pub params: ChannelParams,
    pub config: &'a CampaignConfig,
    pub fixed_interleaver: Interleaver,
}

impl<'a> FrameSimulator<'a> {
    pub fn new(decoder: &'a Decoder, mapping: &'a Mapping, config: &'a CampaignConfig, ebn0_db: f64) -> Result<Self> {
        let code = decoder.code();
        let p = code.field().exponent();
        let params = ChannelParams::from_ebn0(config.mode, ebn0_db, code.rate(), p, config.sigma_delta_deg)?;
        let detector = config.detector.build(config.mode, code.field().order(), params.sigma2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, INTERLEAVER_STREAM]));
        let fixed_interleaver = Interleaver::random(code.n(), &mut rng);
        Ok(FrameSimulator {
            decoder,
            mapping,
            detector,
            params,
            config,
            fixed_interleaver,
        })
    }

    /// Simulates frame number `frame`. The random stream depends only on the
    /// campaign seed and the frame number, so every Eb/N0 point sees the same
    /// information words, phase walks and (scaled) noise.
    pub fn run(&self, rx: &mut TurboReceiver<'_>, frame: u64) -> Result<FrameVerdict> {
        let code = self.decoder.code();
        let m = code.field().order();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.config.seed, frame]));
        let info: Vec<FieldElement> = (0..code.k()).map(|_| FieldElement(rng.random_range(0..m) as u8)).collect();
        let v = code.encode(&info)?;
        let adapters = self.config.adapters.then(|| AdapterSequence::random(code.n(), m, &mut rng));
        let fresh;
        let interleaver = match self.config.interleaver {
            InterleaverMode::Fixed => &self.fixed_interleaver,
            InterleaverMode::PerFrame => {
                fresh = Interleaver::random(code.n(), &mut rng);
                &fresh
            }
        };
        let w = match &adapters {
            Some(t) => apply_adapter(&v, t)?,
            None => v.clone(),
        };
        let phases = modulate(&w, interleaver, self.mapping)?;
        let out = transmit(&phases, &self.params, &mut rng);
        let decoded = rx.receive(&self.detector, &out.samples, interleaver, adapters.as_ref())?;
        Ok(FrameVerdict::compare(decoded, &v))
    }
}

/// Simulates every Eb/N0 point of `config`.
///
/// Frames are simulated in parallel batches but accounted in frame order, so
/// the result depends only on the configuration, not on the thread count.
pub fn run_campaign(code: &Code, mapping: &Mapping, config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    if code.k() == 0 {
        return Err(Error::InvalidParameter("code has no information symbols".into()));
    }
    let decoder = Decoder::new(code.clone());
    let batch = (rayon::current_num_threads() as u64 * 16).max(32);
    let mut points = Vec::with_capacity(config.ebn0_db.len());
    for &ebn0 in &config.ebn0_db {
        let sim = FrameSimulator::new(&decoder, mapping, config, ebn0)?;
        let (mut frames, mut errors, mut sym_errors, mut iters) = (0u64, 0u64, 0u64, 0u64);
        let mut next = 0u64;
        'point: while frames < config.max_frames {
            let end = (next + batch).min(config.max_frames);
            let verdicts: Vec<Result<FrameVerdict>> = (next..end)
                .into_par_iter()
                .map_init(
                    || TurboReceiver::new(&decoder, mapping, config.turbo),
                    |rx, f| sim.run(rx, f),
                )
                .collect();
            next = end;
            for v in verdicts {
                let v = v?;
                frames += 1;
                iters += v.iterations as u64;
                sym_errors += v.symbol_errors as u64;
                if v.codeword_error {
                    errors += 1;
                    if config.error_target > 0 && errors >= config.error_target {
                        break 'point;
                    }
                }
            }
        }
        let (ci_low, ci_high) = wilson_interval(errors, frames);
        points.push(PointResult {
            ebn0_db: ebn0,
            frames,
            cw_errors: errors,
            cer: errors as f64 / frames as f64,
            ci_low,
            ci_high,
            avg_iters: iters as f64 / frames as f64,
            symbol_errors: sym_errors,
        });
    }
    Ok(CampaignResult {
        config: config.clone(),
        code: CodeSummary::of(code),
        points,
    })
}
