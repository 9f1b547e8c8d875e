//! Run configuration: TOML sections, defaults and cross-checks.

use std::fmt;
use std::path::{Path, PathBuf};

use nbdpsk::bounds::LimitConfig;
use nbdpsk::channel::ChannelMode;
use nbdpsk::codec::Code;
use nbdpsk::dpsk::Mapping;
use nbdpsk::ensemble::{DeConfig, FloorProbeConfig};
use nbdpsk::galois::Field;
use nbdpsk::protograph::{BaseMatrix, ParityCheckMatrix};
use nbdpsk::receiver::{CampaignConfig, ChannelConfig, DetectorConfig, InterleaverMode, TurboConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Threshold,
    Design,
    Bound,
    Codegen,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Simulate => "simulate",
            Command::Threshold => "threshold",
            Command::Design => "design",
            Command::Bound => "bound",
            Command::Codegen => "codegen",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// Field exponent, `m = 2^p`.
    pub p: u32,
    /// Mapping file; the built-in Gray-ordered mapping when absent.
    pub mapping: Option<PathBuf>,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection { p: 3, mapping: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    /// Base matrix rows, inline.
    pub base: Option<Vec<Vec<u32>>>,
    /// Base matrix in text form ("m_b n_b" header, then rows).
    pub base_file: Option<PathBuf>,
    /// Ready-made parity-check matrix in alist form.
    pub alist: Option<PathBuf>,
    /// Code length in symbols.
    pub n: usize,
    pub expansion_seed: u64,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            base: None,
            base_file: None,
            alist: None,
            n: 160,
            expansion_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub mode: ChannelMode,
    pub sigma_delta_deg: f64,
    pub ebn0_db: Vec<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            mode: ChannelMode::Wiener,
            sigma_delta_deg: 2.0,
            ebn0_db: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// Phase levels; `8 m` when absent.
    pub levels: Option<usize>,
    pub p_delta: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            levels: None,
            p_delta: DetectorConfig::default().p_delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub seed: u64,
    pub max_frames: u64,
    pub error_target: u64,
    pub interleaver: InterleaverMode,
    pub adapters: bool,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let c = CampaignConfig::default();
        MonteCarloSection {
            seed: c.seed,
            max_frames: c.max_frames,
            error_target: c.error_target,
            interleaver: c.interleaver,
            adapters: c.adapters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub lifting: usize,
    pub max_iterations: usize,
    pub ser_target: f64,
    pub tol_db: f64,
    pub low_db: f64,
    pub high_db: f64,
    pub attempts: usize,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let d = DeConfig::default();
        ThresholdSection {
            lifting: d.lifting,
            max_iterations: d.max_iterations,
            ser_target: d.ser_target,
            tol_db: d.tol_db,
            low_db: d.low_db,
            high_db: d.high_db,
            attempts: d.attempts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub rows: usize,
    pub cols: usize,
    /// Entries range over `0..entry_alphabet`.
    pub entry_alphabet: u32,
    /// Refine the best matrix and check for error floors.
    pub step2: bool,
    pub target_cer: f64,
    /// Eb/N0 points of the floor probes, swept upwards until the target is met.
    pub probe_ebn0_db: Vec<f64>,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            rows: 1,
            cols: 2,
            entry_alphabet: 4,
            step2: false,
            target_cer: 1e-3,
            probe_ebn0_db: FloorProbeConfig::default().campaign.ebn0_db,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    /// Information symbols; `n / 2` when absent.
    pub k: Option<usize>,
    /// Monte Carlo blocks per DT point.
    pub samples: usize,
    /// Also locate the information-rate limit for rate `k / n`.
    pub limit: bool,
    pub block_len: usize,
    pub blocks: usize,
    pub low_db: f64,
    pub high_db: f64,
    pub tol_db: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        let l = LimitConfig::default();
        BoundSection {
            k: None,
            samples: 100_000,
            limit: true,
            block_len: l.block_len,
            blocks: l.blocks,
            low_db: l.low_db,
            high_db: l.high_db,
            tol_db: l.tol_db,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub field: FieldSection,
    pub code: CodeSection,
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub turbo: TurboConfig,
    pub monte_carlo: MonteCarloSection,
    pub threshold: ThresholdSection,
    pub design: DesignSection,
    pub bound: BoundSection,
}

/// Where the code comes from.
#[derive(Clone, Debug)]
pub enum CodeSource {
    Base(BaseMatrix),
    Matrix(ParityCheckMatrix),
}

/// A validated configuration with its inputs loaded.
pub struct Plan {
    pub command: Command,
    pub config: RunConfig,
    pub field: Field,
    pub mapping: Mapping,
    pub channel: ChannelConfig,
    pub code: Option<CodeSource>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    /// Makes file references relative to `dir` absolute.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = dir.join(&*x);
                }
            }
        };
        fix(&mut self.field.mapping);
        fix(&mut self.code.base_file);
        fix(&mut self.code.alist);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let m = 1usize << self.field.p;
        DetectorConfig {
            levels_per_symbol: self.detector.levels.map_or(8, |l| l / m),
            p_delta: self.detector.p_delta,
        }
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            p: self.field.p,
            mode: self.channel.mode,
            sigma_delta_deg: self.channel.sigma_delta_deg,
            detector: self.detector_config(),
        }
    }

    pub fn campaign(&self, ebn0_db: Vec<f64>) -> CampaignConfig {
        CampaignConfig {
            ebn0_db,
            mode: self.channel.mode,
            sigma_delta_deg: self.channel.sigma_delta_deg,
            detector: self.detector_config(),
            turbo: self.turbo,
            max_frames: self.monte_carlo.max_frames,
            error_target: self.monte_carlo.error_target,
            interleaver: self.monte_carlo.interleaver,
            adapters: self.monte_carlo.adapters,
            seed: self.monte_carlo.seed,
        }
    }

    pub fn de_config(&self) -> DeConfig {
        let t = &self.threshold;
        DeConfig {
            lifting: t.lifting,
            max_iterations: t.max_iterations,
            ser_target: t.ser_target,
            tol_db: t.tol_db,
            low_db: t.low_db,
            high_db: t.high_db,
            attempts: t.attempts,
            seed: self.monte_carlo.seed,
        }
    }

    pub fn floor_probe(&self) -> FloorProbeConfig {
        FloorProbeConfig {
            n: self.code.n,
            target_cer: self.design.target_cer,
            expansion_seed: self.code.expansion_seed,
            campaign: self.campaign(self.design.probe_ebn0_db.clone()),
        }
    }

    pub fn bound_k(&self) -> usize {
        self.bound.k.unwrap_or(self.code.n / 2)
    }

    pub fn limit_config(&self) -> LimitConfig {
        let b = &self.bound;
        LimitConfig {
            block_len: b.block_len,
            blocks: b.blocks,
            low_db: b.low_db,
            high_db: b.high_db,
            tol_db: b.tol_db,
            seed: self.monte_carlo.seed,
        }
    }

    /// Checks every cross-reference for `command` and loads the referenced files.
    pub fn validate(self, command: Command) -> Result<Plan, String> {
        if let Some(c) = self.command {
            if c != command {
                return Err(format!("configuration is for `{c}`, not `{command}`"));
            }
        }
        let field = Field::with_default_polynomial(self.field.p).map_err(|e| e.to_string())?;
        let m = field.order();
        let mapping = match &self.field.mapping {
            None => Mapping::builtin(&field),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("mapping {}: {e}", path.display()))?;
                Mapping::parse(&text, &field).map_err(|e| format!("mapping {}: {e}", path.display()))?
            }
        };
        if let Some(l) = self.detector.levels {
            if l < m || l % m != 0 {
                return Err(format!("detector.levels = {l} must be a positive multiple of m = {m}"));
            }
        }
        let channel = self.channel_config();
        if self.channel.mode == ChannelMode::Wiener {
            channel
                .detector
                .build(ChannelMode::Wiener, m, 1.0)
                .map_err(|e| format!("detector: {e}"))?;
        }
        if !(self.channel.sigma_delta_deg >= 0.0 && self.channel.sigma_delta_deg.is_finite()) {
            return Err("channel.sigma_delta_deg must be finite and non-negative".into());
        }
        if self.turbo.max_iterations == 0 {
            return Err("turbo.max_iterations must be positive".into());
        }

        let code = match command {
            Command::Simulate | Command::Codegen | Command::Threshold => Some(self.load_code(command, &field)?),
            Command::Design | Command::Bound => None,
        };
        match command {
            Command::Simulate => {
                self.campaign(self.channel.ebn0_db.clone()).validate().map_err(|e| e.to_string())?;
            }
            Command::Threshold => {
                self.de_config().validate().map_err(|e| e.to_string())?;
                if let Some(CodeSource::Base(b)) = &code {
                    b.check_rate().map_err(|e| e.to_string())?;
                    if b.is_expurgated() {
                        return Err(format!("base matrix {b} is expurgated"));
                    }
                }
            }
            Command::Design => {
                let d = &self.design;
                if d.rows == 0 || d.cols <= d.rows {
                    return Err(format!("design needs cols > rows > 0, got {} x {}", d.rows, d.cols));
                }
                if d.entry_alphabet < 2 {
                    return Err("design.entry_alphabet must be at least 2".into());
                }
                self.de_config().validate().map_err(|e| e.to_string())?;
                if d.step2 {
                    if !(d.target_cer > 0.0 && d.target_cer < 1.0) {
                        return Err("design.target_cer must lie in (0, 1)".into());
                    }
                    self.floor_probe().campaign.validate().map_err(|e| e.to_string())?;
                    // the refined matrices have twice the columns
                    let cols = 2 * d.cols;
                    if self.code.n % cols != 0 || self.code.n < cols {
                        return Err(format!("code.n = {} is not a multiple of the {cols} refined base columns", self.code.n));
                    }
                }
            }
            Command::Bound => {
                let (n, k) = (self.code.n, self.bound_k());
                if n == 0 || k > n {
                    return Err(format!("bound needs 0 <= k <= n and n > 0 (k = {k}, n = {n})"));
                }
                if self.bound.samples == 0 {
                    return Err("bound.samples must be positive".into());
                }
                if self.channel.ebn0_db.is_empty() && !self.bound.limit {
                    return Err("nothing to compute: empty channel.ebn0_db and bound.limit = false".into());
                }
                if self.channel.ebn0_db.iter().any(|x| !x.is_finite()) {
                    return Err("Eb/N0 values must be finite".into());
                }
                if self.bound.limit {
                    if k == 0 {
                        return Err("the rate limit needs k > 0".into());
                    }
                    let l = self.limit_config();
                    if l.block_len == 0 || l.blocks == 0 || !(l.tol_db > 0.0) || !(l.low_db < l.high_db) {
                        return Err("invalid rate-limit search settings".into());
                    }
                }
            }
            Command::Codegen => {}
        }
        Ok(Plan {
            command,
            config: self,
            field,
            mapping,
            channel,
            code,
        })
    }

    fn load_code(&self, command: Command, field: &Field) -> Result<CodeSource, String> {
        let c = &self.code;
        let given = [c.base.is_some(), c.base_file.is_some(), c.alist.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err("give exactly one of code.base, code.base_file and code.alist".into());
        }
        if let Some(path) = &c.alist {
            if command != Command::Simulate {
                return Err(format!("`{command}` needs a base matrix, not an alist file"));
            }
            let text = std::fs::read_to_string(path).map_err(|e| format!("alist {}: {e}", path.display()))?;
            let h = ParityCheckMatrix::from_alist(&text, field).map_err(|e| format!("alist {}: {e}", path.display()))?;
            if Code::new(h.clone()).k() == 0 {
                return Err("the alist code has no information symbols".into());
            }
            return Ok(CodeSource::Matrix(h));
        }
        let base = match (&c.base, &c.base_file) {
            (Some(rows), _) => BaseMatrix::from_rows(rows).map_err(|e| format!("code.base: {e}"))?,
            (_, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("base file {}: {e}", path.display()))?;
                BaseMatrix::parse(&text).map_err(|e| format!("base file {}: {e}", path.display()))?
            }
            _ => unreachable!(),
        };
        if command != Command::Threshold {
            let nb = base.cols();
            if c.n < nb || c.n % nb != 0 {
                return Err(format!("code.n = {} is not a multiple of the {nb} base columns", c.n));
            }
            let lifting = c.n / nb;
            if (base.max_entry() as usize) > lifting {
                return Err(format!("entry {} exceeds the lifting factor {lifting}", base.max_entry()));
            }
        }
        Ok(CodeSource::Base(base))
    }
}
