//! Command implementations and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nbdpsk::bounds::{dt_bound, rate_limit, write_dt_csv, write_rate_csv, DtBoundResult};
use nbdpsk::codec::Code;
use nbdpsk::ensemble::{mc_de_threshold, search_step1, search_step2, SearchReport};
use nbdpsk::protograph::{expand_peg, ParityCheckMatrix};
use nbdpsk::receiver::{run_campaign, write_csv, CampaignResult};
use nbdpsk::Error;
use serde::Serialize;

use crate::config::{CodeSource, Command, Plan, RunConfig};

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    NonConvergent(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::NonConvergent(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::NonConvergent(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::NonConvergent { .. } | Error::Exhausted => Failure::NonConvergent(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub seed: u64,
    pub workers: usize,
    pub started_unix: u64,
    pub wall_clock_s: f64,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

/// Collects output files for one run.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Outputs, Failure> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> nbdpsk::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }
}

fn build_code(plan: &Plan) -> Result<(ParityCheckMatrix, Option<nbdpsk::protograph::CirculantLifting>), Failure> {
    match plan.code.as_ref().expect("command needs a code") {
        CodeSource::Matrix(h) => Ok((h.clone(), None)),
        CodeSource::Base(b) => {
            let (h, lifting) = expand_peg(b, plan.config.code.n, &plan.field, plan.config.code.expansion_seed)
                .map_err(|e| Failure::Config(format!("expansion: {e}")))?;
            Ok((h, Some(lifting)))
        }
    }
}

/// Runs `plan`, writing results, the resolved configuration and a manifest into `out_dir`.
pub fn execute(plan: &Plan, out_dir: &Path, workers: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut out = Outputs::new(out_dir)?;
    out.write("config.toml", plan.config.to_toml().as_bytes())?;
    let mut timings = Vec::new();
    let status = match plan.command {
        Command::Simulate => simulate(plan, &mut out, &mut timings),
        Command::Threshold => threshold(plan, &mut out, &mut timings),
        Command::Design => design(plan, &mut out, &mut timings),
        Command::Bound => bound(plan, &mut out, &mut timings),
        Command::Codegen => codegen(plan, &mut out),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: plan.command,
        seed: plan.config.monte_carlo.seed,
        workers,
        started_unix,
        wall_clock_s: started.elapsed().as_secs_f64(),
        timings,
        outputs: out.written.clone(),
        config: plan.config.clone(),
    };
    out.json("manifest.json", &manifest)?;
    status
}

fn simulate(plan: &Plan, out: &mut Outputs, timings: &mut Vec<Timing>) -> Result<(), Failure> {
    let (h, _) = build_code(plan)?;
    let code = Code::new(h);
    if code.k() == 0 {
        return Err(Failure::Config("the code has no information symbols".into()));
    }
    let mut result: Option<CampaignResult> = None;
    for &db in &plan.config.channel.ebn0_db {
        let t = Instant::now();
        let r = run_campaign(&code, &plan.mapping, &plan.config.campaign(vec![db]))?;
        let p = &r.points[0];
        eprintln!(
            "Eb/N0 {db:.2} dB: {} errors in {} frames, CER {:.3e} [{:.3e}, {:.3e}]",
            p.cw_errors, p.frames, p.cer, p.ci_low, p.ci_high
        );
        timings.push(Timing {
            label: format!("ebn0_db={db}"),
            seconds: t.elapsed().as_secs_f64(),
        });
        match &mut result {
            None => result = Some(r),
            Some(acc) => acc.points.extend(r.points),
        }
    }
    let mut result = result.expect("non-empty grid");
    result.config.ebn0_db = plan.config.channel.ebn0_db.clone();
    out.csv("cer.csv", |w| result.write_csv(w))?;
    out.write("campaign.json", result.to_json()?.as_bytes())
}

fn threshold(plan: &Plan, out: &mut Outputs, timings: &mut Vec<Timing>) -> Result<(), Failure> {
    let Some(CodeSource::Base(base)) = &plan.code else {
        return Err(Failure::Config("threshold needs a base matrix".into()));
    };
    let t = Instant::now();
    let r = mc_de_threshold(base, &plan.channel, &plan.config.de_config())?;
    timings.push(Timing {
        label: "threshold".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    eprintln!("{base}: threshold {:.3} dB", r.threshold_db);
    out.csv("threshold_probes.csv", |w| write_csv(&r.probes, w))?;
    out.json("threshold.json", &r)
}

#[derive(Serialize)]
struct DesignReport<'a> {
    step1: &'a SearchReport,
    step2: Option<&'a SearchReport>,
}

fn design(plan: &Plan, out: &mut Outputs, timings: &mut Vec<Timing>) -> Result<(), Failure> {
    let d = &plan.config.design;
    let de = plan.config.de_config();
    let t = Instant::now();
    let step1 = search_step1(d.rows, d.cols, d.entry_alphabet, &plan.channel, &de)?;
    timings.push(Timing {
        label: "step1".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    for c in &step1.candidates {
        match c.threshold_db {
            Some(x) => eprintln!("{}: {x:.3} dB", c.base),
            None => eprintln!("{}: {}", c.base, c.error.as_deref().unwrap_or("failed")),
        }
    }
    out.csv("ranking.csv", |w| step1.write_csv(w))?;
    let best = step1.selection().cloned();
    let mut step2 = None;
    if d.step2 {
        if let Ok(b) = &best {
            let t = Instant::now();
            let r = search_step2(b, &plan.channel, &de, &plan.config.floor_probe())?;
            timings.push(Timing {
                label: "step2".into(),
                seconds: t.elapsed().as_secs_f64(),
            });
            out.csv("refinement.csv", |w| r.write_csv(w))?;
            step2 = Some(r);
        }
    }
    out.json(
        "design.json",
        &DesignReport {
            step1: &step1,
            step2: step2.as_ref(),
        },
    )?;
    best.map_err(|_| Failure::NonConvergent("no candidate converged in the threshold range".into()))?;
    if let Some(r) = &step2 {
        let chosen = r.selection()?;
        eprintln!("selected {chosen}");
    }
    Ok(())
}

fn bound(plan: &Plan, out: &mut Outputs, timings: &mut Vec<Timing>) -> Result<(), Failure> {
    let cfg = &plan.config;
    let (n, k) = (cfg.code.n, cfg.bound_k());
    let mut curve: Vec<DtBoundResult> = Vec::new();
    for &db in &cfg.channel.ebn0_db {
        let t = Instant::now();
        let r = dt_bound(&plan.channel, db, k, n, cfg.bound.samples, cfg.monte_carlo.seed)?;
        eprintln!("Eb/N0 {db:.2} dB: DT bound {:.3e} (se {:.1e})", r.dt_bound, r.stderr);
        timings.push(Timing {
            label: format!("dt ebn0_db={db}"),
            seconds: t.elapsed().as_secs_f64(),
        });
        curve.push(r);
    }
    if !curve.is_empty() {
        out.csv("dt_bound.csv", |w| write_dt_csv(&curve, w))?;
        out.json("dt_bound.json", &curve)?;
    }
    if cfg.bound.limit {
        let t = Instant::now();
        let rate = k as f64 / n as f64;
        let r = rate_limit(&plan.channel, rate, &cfg.limit_config())?;
        timings.push(Timing {
            label: "rate limit".into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        eprintln!("rate {rate:.4}: limit {:.3} dB", r.limit_db);
        out.csv("info_rate.csv", |w| write_rate_csv(&r.probes, w))?;
        out.json("limit.json", &r)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CodeReport {
    n: usize,
    k: usize,
    rank: usize,
    field_order: usize,
    girth: Option<usize>,
    lifting: Option<nbdpsk::protograph::CirculantLifting>,
}

fn codegen(plan: &Plan, out: &mut Outputs) -> Result<(), Failure> {
    let (h, lifting) = build_code(plan)?;
    let girth = h.girth();
    let code = Code::new(h.clone());
    eprintln!("({}, {}) code, girth {girth:?}", code.n(), code.k());
    out.write("code.alist", h.to_alist().as_bytes())?;
    out.json(
        "code.json",
        &CodeReport {
            n: code.n(),
            k: code.k(),
            rank: code.rank(),
            field_order: plan.field.order(),
            girth,
            lifting,
        },
    )
}
