//! Protograph ensemble thresholds by Monte Carlo density evolution, and the
//! two-step protograph search built on them.
//!
//! A threshold probe decodes one long frame on a lifted protograph whose
//! edge permutations and labels are redrawn at every iteration, so the
//! decoder sees ensemble-average rather than code-specific behaviour. The
//! all-zero codeword is sent through random channel adapters.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, ChannelParams};
use crate::codec::{Code, MulTables, NodeKernel};
use crate::detector::{Detector, DetectorWorkspace};
use crate::dpsk::{deadapt_flat, modulate, AdapterSequence, Interleaver, Mapping};
use crate::error::{Error, Result};
use crate::galois::{argmax, Field};
use crate::protograph::{enumerate_candidates, expand_peg, refine_candidates, BaseMatrix};
use crate::receiver::{mix_seed, run_campaign, CampaignConfig, ChannelConfig, PointResult};

/// Density-evolution settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    /// Copies of every protograph node.
    pub lifting: usize,
    pub max_iterations: usize,
    /// A probe succeeds when the symbol error rate falls below this.
    pub ser_target: f64,
    /// Final bracket width.
    pub tol_db: f64,
    pub low_db: f64,
    pub high_db: f64,
    /// Independent frames per probe; their error rates are averaged.
    pub attempts: usize,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            lifting: 2000,
            max_iterations: 200,
            ser_target: 1e-4,
            tol_db: 0.05,
            low_db: -1.0,
            high_db: 12.0,
            attempts: 1,
            seed: 1,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lifting == 0 || self.max_iterations == 0 || self.attempts == 0 {
            return Err(Error::InvalidParameter("lifting, max_iterations and attempts must be positive".into()));
        }
        if !(self.tol_db > 0.0) || !(self.low_db < self.high_db) {
            return Err(Error::InvalidParameter("need tol_db > 0 and low_db < high_db".into()));
        }
        if !(self.ser_target > 0.0 && self.ser_target < 1.0) {
            return Err(Error::InvalidParameter("ser_target must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One density-evolution run at a fixed Eb/N0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub ebn0_db: f64,
    pub ser: f64,
    /// Mean iterations used.
    pub iterations: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub base: BaseMatrix,
    pub threshold_db: f64,
    /// Final bracket: fails at the low end, succeeds at the high end.
    pub bracket: (f64, f64),
    pub channel: ChannelConfig,
    pub de: DeConfig,
    pub probes: Vec<Probe>,
}

/// Lifted protograph with redrawable edge permutations and labels.
struct DeGraph {
    m: usize,
    /// Variable-side edge ids of each variable node.
    var_edges: Vec<Vec<usize>>,
    /// Edge classes: (check type, variable type, multiplicity, first edge id).
    classes: Vec<(usize, usize, usize, usize)>,
    lifting: usize,
    check_ptr: Vec<usize>,
    /// Slot offset of each class inside a check of its type.
    class_slot: Vec<usize>,
    check_edges: Vec<usize>,
    check_labels: Vec<u8>,
    labels: Vec<u8>,
    perm: Vec<usize>,
}

impl DeGraph {
    fn new(base: &BaseMatrix, lifting: usize, m: usize) -> DeGraph {
        let (mb, nb) = (base.rows(), base.cols());
        let mut classes = Vec::new();
        let mut class_slot = Vec::new();
        let mut next = 0;
        for i in 0..mb {
            let mut slot = 0;
            for j in 0..nb {
                let b = base.get(i, j) as usize;
                if b > 0 {
                    classes.push((i, j, b, next));
                    class_slot.push(slot);
                    next += b * lifting;
                    slot += b;
                }
            }
        }
        let edges = next;
        let mut var_edges = vec![Vec::new(); nb * lifting];
        for &(_, j, b, off) in &classes {
            for copy in 0..lifting {
                for t in 0..b {
                    var_edges[j * lifting + copy].push(off + copy * b + t);
                }
            }
        }
        let mut check_ptr = vec![0];
        for i in 0..mb {
            let d = base.row_weight(i) as usize;
            for _ in 0..lifting {
                check_ptr.push(check_ptr.last().unwrap() + d);
            }
        }
        DeGraph {
            m,
            var_edges,
            classes,
            lifting,
            check_ptr,
            class_slot,
            check_edges: vec![0; edges],
            check_labels: vec![0; edges],
            labels: vec![1; edges],
            perm: Vec::new(),
        }
    }

    fn edges(&self) -> usize {
        self.labels.len()
    }

    /// Draws fresh permutations inside every edge class and fresh labels.
    fn redraw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.lifting;
        for (k, &(i, _, b, off)) in self.classes.iter().enumerate() {
            let count = b * l;
            self.perm.clear();
            self.perm.extend(0..count);
            self.perm.shuffle(rng);
            for (e, &socket) in self.perm.iter().enumerate() {
                let check = i * l + socket / b;
                let slot = self.check_ptr[check] + self.class_slot[k] + socket % b;
                self.check_edges[slot] = off + e;
            }
        }
        for x in self.labels.iter_mut() {
            *x = rng.random_range(1..self.m) as u8;
        }
        for (slot, &e) in self.check_edges.iter().enumerate() {
            self.check_labels[slot] = self.labels[e];
        }
    }
}

/// Reusable state for repeated probes of one ensemble.
pub struct DensityEvolution {
    base: BaseMatrix,
    channel: ChannelConfig,
    de: DeConfig,
    mapping: Mapping,
    tables: MulTables,
    rate: f64,
}

impl DensityEvolution {
    pub fn new(base: &BaseMatrix, channel: &ChannelConfig, de: &DeConfig) -> Result<DensityEvolution> {
        base.check_rate()?;
        if base.is_expurgated() {
            return Err(Error::InvalidBaseMatrix(format!("{base} is expurgated")));
        }
        de.validate()?;
        let field = Field::with_default_polynomial(channel.p)?;
        Ok(DensityEvolution {
            base: base.clone(),
            channel: *channel,
            de: *de,
            mapping: Mapping::builtin(&field),
            tables: MulTables::new(&field),
            rate: base.design_rate(),
        })
    }

    /// Symbol error rate after decoding one frame at `ebn0_db` (attempt `attempt`).
    ///
    /// The random stream depends on the seed and attempt only, so successive
    /// Eb/N0 values see the same adapters, interleaver, graph draws and noise shape.
    pub fn attempt(&self, ebn0_db: f64, attempt: u64) -> Result<(f64, usize)> {
        let m = 1usize << self.channel.p;
        let params = ChannelParams::from_ebn0(
            self.channel.mode,
            ebn0_db,
            self.rate,
            self.channel.p,
            self.channel.sigma_delta_deg,
        )?;
        let detector: Detector = self.channel.detector.build(self.channel.mode, m, params.sigma2)?;
        let mut graph = DeGraph::new(&self.base, self.de.lifting, m);
        let n = graph.var_edges.len();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.de.seed, attempt]));
        let adapters = AdapterSequence::random(n, m, &mut rng);
        let interleaver = Interleaver::random(n, &mut rng);
        let phases = modulate(adapters.values(), &interleaver, &self.mapping)?;
        let out = transmit(&phases, &params, &mut rng);

        let mut ws = DetectorWorkspace::default();
        detector.load(&out.samples, &mut ws);
        let e = graph.edges();
        let uniform = 1.0 / m as f64;
        let mut vc = vec![uniform; e * m];
        let mut cv = vec![uniform; e * m];
        let mut det_prior = vec![uniform; n * m];
        let mut det_ext = vec![0.0; n * m];
        let mut field_buf = vec![0.0; n * m];
        let mut dec_prior = vec![0.0; n * m];
        let mut app = vec![0.0; n * m];
        let mut ext = vec![0.0; n * m];
        let mut kernel = NodeKernel::new(m);
        let mut scratch_app = vec![0.0; m];
        let mut scratch_ext = vec![0.0; m];
        let mut errors = n;
        for it in 1..=self.de.max_iterations {
            detector.detect_flat(&mut ws, &det_prior, &mut det_ext);
            for (src, dst) in det_ext.chunks_exact(m).zip(field_buf.chunks_exact_mut(m)) {
                self.mapping.to_field_weights(src, dst);
            }
            interleaver.deinterleave_flat(&field_buf, m, &mut dec_prior);
            deadapt_flat(&mut dec_prior, m, &adapters);

            for (v, edges) in graph.var_edges.iter().enumerate() {
                kernel.variable_update(
                    &dec_prior[v * m..(v + 1) * m],
                    edges,
                    &cv,
                    &mut vc,
                    &mut scratch_app,
                    &mut scratch_ext,
                );
            }
            graph.redraw(&mut rng);
            for c in 0..graph.check_ptr.len() - 1 {
                let (lo, hi) = (graph.check_ptr[c], graph.check_ptr[c + 1]);
                kernel.check_update(&self.tables, &graph.check_edges[lo..hi], &graph.check_labels[lo..hi], &vc, &mut cv);
            }
            for (v, edges) in graph.var_edges.iter().enumerate() {
                let (a, x) = (&mut app[v * m..(v + 1) * m], &mut ext[v * m..(v + 1) * m]);
                kernel.variable_update(&dec_prior[v * m..(v + 1) * m], edges, &cv, &mut vc, a, x);
            }
            errors = app.chunks_exact(m).filter(|p| argmax(p) != 0).count();
            if errors == 0 {
                return Ok((0.0, it));
            }
            deadapt_flat(&mut ext, m, &adapters);
            interleaver.interleave_flat(&ext, m, &mut field_buf);
            for (src, dst) in field_buf.chunks_exact(m).zip(det_prior.chunks_exact_mut(m)) {
                self.mapping.to_phase_weights(src, dst);
            }
        }
        Ok((errors as f64 / n as f64, self.de.max_iterations))
    }

    /// Averages `attempts` frames at `ebn0_db`.
    pub fn probe(&self, ebn0_db: f64) -> Result<Probe> {
        let runs: Vec<(f64, usize)> = (0..self.de.attempts as u64)
            .into_par_iter()
            .map(|a| self.attempt(ebn0_db, a))
            .collect::<Result<_>>()?;
        let k = runs.len() as f64;
        let ser = runs.iter().map(|r| r.0).sum::<f64>() / k;
        Ok(Probe {
            ebn0_db,
            ser,
            iterations: runs.iter().map(|r| r.1 as f64).sum::<f64>() / k,
            converged: ser < self.de.ser_target,
        })
    }

    /// Bisects Eb/N0 between the configured limits.
    pub fn threshold(&self) -> Result<ThresholdResult> {
        let mut probes = Vec::new();
        let (mut lo, mut hi) = (self.de.low_db, self.de.high_db);
        let top = self.probe(hi)?;
        probes.push(top);
        if !top.converged {
            return Err(Error::NonConvergent { low_db: lo, high_db: hi });
        }
        let bottom = self.probe(lo)?;
        probes.push(bottom);
        if bottom.converged {
            return Err(Error::NonConvergent { low_db: lo, high_db: hi });
        }
        while hi - lo > self.de.tol_db {
            let mid = 0.5 * (lo + hi);
            let p = self.probe(mid)?;
            probes.push(p);
            if p.converged {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(ThresholdResult {
            base: self.base.clone(),
            threshold_db: 0.5 * (lo + hi),
            bracket: (lo, hi),
            channel: self.channel,
            de: self.de,
            probes,
        })
    }
}

/// Iterative decoding threshold of the ensemble described by `base`.
pub fn mc_de_threshold(base: &BaseMatrix, channel: &ChannelConfig, de: &DeConfig) -> Result<ThresholdResult> {
    DensityEvolution::new(base, channel, de)?.threshold()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub base: BaseMatrix,
    pub threshold_db: Option<f64>,
    pub result: Option<ThresholdResult>,
    pub error: Option<String>,
}

/// Ascending threshold; failed evaluations last; ties by fewer edges, then canonical form.
fn rank_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    let key = |c: &RankedCandidate| c.threshold_db.unwrap_or(f64::INFINITY);
    key(a)
        .partial_cmp(&key(b))
        .unwrap_or(Ordering::Equal)
        .then(a.base.total_edges().cmp(&b.base.total_edges()))
        .then(a.base.canonical_form().cmp(&b.base.canonical_form()))
}

/// Evaluates and ranks candidates with `evaluate`, in parallel.
pub fn rank_candidates<F>(candidates: &[BaseMatrix], evaluate: F) -> Vec<RankedCandidate>
where
    F: Fn(&BaseMatrix) -> Result<ThresholdResult> + Sync,
{
    let mut ranked: Vec<RankedCandidate> = candidates
        .par_iter()
        .map(|b| match evaluate(b) {
            Ok(r) => RankedCandidate {
                base: b.clone(),
                threshold_db: Some(r.threshold_db),
                result: Some(r),
                error: None,
            },
            Err(e) => RankedCandidate {
                base: b.clone(),
                threshold_db: None,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked
}

/// Error-rate check of one refined candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorCheck {
    pub base: BaseMatrix,
    pub points: Vec<PointResult>,
    pub floor: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// A candidate without a visible floor was found.
    FloorFree,
    /// Every candidate showed a floor above the target.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrail {
    pub start: BaseMatrix,
    pub lifting: usize,
    pub expanded: BaseMatrix,
    pub checks: Vec<FloorCheck>,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub candidates: Vec<RankedCandidate>,
    pub selected: Option<BaseMatrix>,
    pub refinement: Option<RefinementTrail>,
}

impl SearchReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))
    }

    /// Threshold table rows: base matrix text, threshold (empty if not found).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            base: String,
            threshold_db: Option<f64>,
            edges: u32,
        }
        let rows: Vec<Row> = self
            .candidates
            .iter()
            .map(|c| Row {
                base: c.base.to_string(),
                threshold_db: c.threshold_db,
                edges: c.base.total_edges(),
            })
            .collect();
        crate::receiver::write_csv(&rows, w)
    }

    /// The selected matrix, or `Exhausted` if the refinement found none.
    pub fn selection(&self) -> Result<&BaseMatrix> {
        if let Some(t) = &self.refinement {
            if t.stop == StopReason::Exhausted {
                return Err(Error::Exhausted);
            }
        }
        self.selected.as_ref().ok_or(Error::Exhausted)
    }
}

/// Step 1: thresholds for the expurgated minimal set of `m_b x n_b` matrices with entries below `p_max`.
pub fn search_step1(m_b: usize, n_b: usize, p_max: u32, channel: &ChannelConfig, de: &DeConfig) -> Result<SearchReport> {
    if n_b <= m_b || m_b == 0 {
        return Err(Error::InvalidBaseMatrix(format!("{m_b} x {n_b} base matrices have no positive rate")));
    }
    if p_max < 2 {
        return Err(Error::InvalidParameter("p_max must be at least 2".into()));
    }
    let candidates = enumerate_candidates(m_b, n_b, p_max);
    let ranked = rank_candidates(&candidates, |b| mc_de_threshold(b, channel, de));
    let selected = ranked.first().filter(|c| c.threshold_db.is_some()).map(|c| c.base.clone());
    Ok(SearchReport {
        candidates: ranked,
        selected,
        refinement: None,
    })
}

/// Floor rule: over the last three points, a least-squares slope of
/// `log10(CER)` flatter than 0.5 decades per dB while the last CER is still
/// above `target`. Points are `(Eb/N0 dB, CER)`, sorted by Eb/N0.
pub fn shows_floor(points: &[(f64, f64)], target: f64) -> bool {
    if points.len() < 3 {
        return false;
    }
    let tail = &points[points.len() - 3..];
    let last = tail[2].1;
    if last <= target || tail.iter().any(|p| p.1 <= 0.0) {
        return false;
    }
    let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.log10()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return true;
    }
    (sxy / sxx).abs() < 0.5
}

/// Finite-length check used by step 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloorProbeConfig {
    /// Target block length in symbols.
    pub n: usize,
    pub target_cer: f64,
    pub expansion_seed: u64,
    pub campaign: CampaignConfig,
}

impl Default for FloorProbeConfig {
    fn default() -> Self {
        FloorProbeConfig {
            n: 160,
            target_cer: 1e-3,
            expansion_seed: 1,
            campaign: CampaignConfig {
                ebn0_db: (0..=16).map(|i| 2.0 + 0.25 * i as f64).collect(),
                ..CampaignConfig::default()
            },
        }
    }
}

/// Step 2 with caller-supplied threshold evaluation and error-rate probe.
pub fn refine_with<F, P>(b_star: &BaseMatrix, evaluate: F, mut probe: P, target_cer: f64) -> Result<SearchReport>
where
    F: Fn(&BaseMatrix) -> Result<ThresholdResult> + Sync,
    P: FnMut(&BaseMatrix) -> Result<Vec<PointResult>>,
{
    let refinement = refine_candidates(b_star)?;
    let ranked = rank_candidates(&refinement.candidates, evaluate);
    let mut checks = Vec::new();
    let mut selected = None;
    for cand in ranked.iter().filter(|c| c.threshold_db.is_some()) {
        let points = probe(&cand.base)?;
        let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.ebn0_db, p.cer)).collect();
        let floor = shows_floor(&curve, target_cer);
        checks.push(FloorCheck {
            base: cand.base.clone(),
            points,
            floor,
        });
        if !floor {
            selected = Some(cand.base.clone());
            break;
        }
    }
    let stop = if selected.is_some() { StopReason::FloorFree } else { StopReason::Exhausted };
    Ok(SearchReport {
        candidates: ranked,
        selected,
        refinement: Some(RefinementTrail {
            start: b_star.clone(),
            lifting: refinement.lifting,
            expanded: refinement.expanded,
            checks,
            stop,
        }),
    })
}

/// Expands `base` to the probe length and simulates upward over the probe grid,
/// stopping at the first point at or below the target or once a floor shows.
pub fn floor_probe(base: &BaseMatrix, channel: &ChannelConfig, probe: &FloorProbeConfig) -> Result<FloorCheck> {
    let field = Field::with_default_polynomial(channel.p)?;
    let mapping = Mapping::builtin(&field);
    let (h, _) = expand_peg(base, probe.n, &field, probe.expansion_seed)?;
    let code = Code::new(h);
    let mut grid = probe.campaign.ebn0_db.clone();
    grid.sort_by(f64::total_cmp);
    let mut points: Vec<PointResult> = Vec::new();
    let mut floor = false;
    for db in grid {
        let single = CampaignConfig {
            ebn0_db: vec![db],
            mode: channel.mode,
            sigma_delta_deg: channel.sigma_delta_deg,
            detector: channel.detector,
            ..probe.campaign.clone()
        };
        points.push(run_campaign(&code, &mapping, &single)?.points.remove(0));
        let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.ebn0_db, p.cer)).collect();
        floor = shows_floor(&curve, probe.target_cer);
        if floor || points.last().is_some_and(|p| p.cer <= probe.target_cer) {
            break;
        }
    }
    Ok(FloorCheck {
        base: base.clone(),
        points,
        floor,
    })
}

/// Step 2: refine `b_star`, rank the refinements by threshold, and accept the
/// first whose expanded code shows no error floor above the target.
pub fn search_step2(b_star: &BaseMatrix, channel: &ChannelConfig, de: &DeConfig, probe: &FloorProbeConfig) -> Result<SearchReport> {
    refine_with(
        b_star,
        |b| mc_de_threshold(b, channel, de),
        |b| floor_probe(b, channel, probe).map(|c| c.points),
        probe.target_cer,
    )
}
