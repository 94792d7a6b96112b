//! Command pipeline behind the `dimers` binary.

use crate::config::{parse_config, RunConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::output::{diverging, fmt_f64, svg_grid, svg_height, svg_polylines, to_json, write_file, Csv, F17};
use crate::ronkin::{Ronkin, RonkinOptions};
use crate::sampler::{init_region, kasteleyn_partition, run_chain, ChainSpec, RNG_ALGORITHM};
use crate::surface::{HarnackData, Surface};
use crate::weights::{kasteleyn_check, FockModel, PatchMap, Site, SquareLattice, WeightField, WeightOptions};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Amoeba,
    Ronkin,
    Weights,
    Sample,
    Selftest,
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "validate" => Command::Validate,
            "amoeba" => Command::Amoeba,
            "ronkin" => Command::Ronkin,
            "weights" => Command::Weights,
            "sample" => Command::Sample,
            "selftest" => Command::Selftest,
            _ => return Err(Error::Config(format!("unknown command {s:?}"))),
        })
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Amoeba => "amoeba",
            Command::Ronkin => "ronkin",
            Command::Weights => "weights",
            Command::Sample => "sample",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CliOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub require_periodic: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    /// Largest component of the shift accumulated over one period of the lattice.
    pub periodicity: F17,
    /// `|sign + 1|` maximised over the two face types (0 when both signs are -1).
    pub kasteleyn: F17,
    pub fay: F17,
    pub dirac: F17,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Failing checks that are not required do not change the exit code.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub sweeps: u64,
    pub proposals: u64,
    pub accepted: u64,
    pub samples: u64,
    pub drive_flips: u64,
    pub initial_volume: F17,
    pub final_volume: F17,
    pub volume_target: Option<F17>,
}

/// Same schema for every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'static str,
    pub genus: usize,
    pub seed: u64,
    pub rng: &'static str,
    pub residuals: Residuals,
    pub checks: Vec<Check>,
    pub acceptance_rate: Option<F17>,
    pub chain: Option<ChainReport>,
    /// Seconds per pipeline stage.
    pub wall_times: BTreeMap<String, F17>,
    /// Artifacts relative to the output directory.
    pub files: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub summary: RunSummary,
    pub out_dir: Option<PathBuf>,
}

struct Timer(BTreeMap<String, F17>);

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let v = f();
        self.0.insert(name.into(), F17(t.elapsed().as_secs_f64()));
        v
    }
}

/// Everything derived from a validated configuration.
pub struct Pipeline {
    pub config: RunConfig,
    pub harnack: HarnackData,
    pub model: FockModel,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        let harnack = config.harnack_data();
        let surface = Surface::new(config.schottky_data(), config.max_letters)?;
        let opts = WeightOptions { d: config.d.clone(), theta_tol: config.theta_tol, characteristic: None };
        let model = FockModel::new(surface, SquareLattice::new(harnack.clone())?, opts)?;
        Ok(Pipeline { config, harnack, model })
    }

    pub fn surface(&self) -> &Surface {
        self.model.surface()
    }

    /// Fixed pseudo-random point of the upper half-plane away from the discs.
    fn spot_point(&self, rng: &mut ChaCha8Rng) -> C64 {
        let (lo, hi) = self.config.grid_range();
        loop {
            let p = C64::new(rng.random_range(lo..hi), rng.random_range(0.05..3.0));
            if self.surface().data().disc_clearance(p) > 0.05 {
                return p;
            }
        }
    }

    fn spot_real(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.config.grid_range();
        loop {
            let x = rng.random_range(lo..hi);
            if self.surface().data().disc_clearance(C64::new(x, 0.0)) > 0.05 {
                return x;
            }
        }
    }

    /// Residual report and the checks behind `validate`.
    pub fn checks(&self, require_periodic: bool) -> Result<(Residuals, Vec<Check>)> {
        let cfg = &self.config;
        let mut checks = vec![
            Check { name: "schottky_u2".into(), pass: true, required: true, detail: "generators admissible, discs disjoint".into() },
            Check { name: "harnack_clusters".into(), pass: true, required: true, detail: "beta- < alpha+ < beta+ < alpha-".into() },
        ];
        let report = kasteleyn_check(self.model.lattice());
        let kast = report.faces.iter().map(|f| (f.sign as f64 + 1.0).abs()).fold(0.0, f64::max);
        let signs: Vec<String> = report.faces.iter().map(|f| format!("{:?}: {}", f.face_type, f.sign)).collect();
        checks.push(Check { name: "kasteleyn".into(), pass: report.pass(), required: true, detail: signs.join(", ") });

        let per = self.model.periodicity_residual().iter().cloned().fold(0.0, f64::max);
        checks.push(Check {
            name: "periodicity".into(),
            pass: per <= cfg.checks.periodicity_tol,
            required: require_periodic,
            detail: format!("residual {} vs tolerance {}", fmt_f64(per), fmt_f64(cfg.checks.periodicity_tol)),
        });

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let (mut fay, mut dirac) = (0.0f64, 0.0f64);
        for _ in 0..cfg.checks.spot_checks {
            let p = self.spot_point(&mut rng);
            let a: Vec<f64> = (0..3).map(|_| self.spot_real(&mut rng)).collect();
            fay = fay.max(self.model.fay_residual(p, a[0], a[1], a[2])?);
            let w = Site::new(2 * rng.random_range(-4..4) + 1, 2 * rng.random_range(-4..4) + 1);
            dirac = dirac.max(self.model.dirac_residual(w, p)?);
        }
        checks.push(Check {
            name: "fay".into(),
            pass: fay <= cfg.checks.fay_tol,
            required: true,
            detail: format!("max relative residual {} over {} points", fmt_f64(fay), cfg.checks.spot_checks),
        });
        checks.push(Check {
            name: "dirac".into(),
            pass: dirac <= cfg.checks.dirac_tol,
            required: true,
            detail: format!("max relative residual {} over {} points", fmt_f64(dirac), cfg.checks.spot_checks),
        });
        Ok((Residuals { periodicity: F17(per), kasteleyn: F17(kast), fay: F17(fay), dirac: F17(dirac) }, checks))
    }

    /// Upper half-plane sample grid, skipping points too close to a disc.
    pub fn grid_points(&self) -> Vec<(usize, usize, C64)> {
        let g = &self.config.grid;
        let (lo, hi) = self.config.grid_range();
        let mut out = Vec::new();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = lo + (hi - lo) * i as f64 / (g.nx - 1) as f64;
                let y = g.im_max * (j + 1) as f64 / g.ny as f64;
                let z = C64::new(x, y);
                if self.surface().data().disc_clearance(z) > 1e-2 {
                    out.push((g.ny - 1 - j, i, z));
                }
            }
        }
        out
    }

    pub fn weight_field(&self) -> Result<WeightField> {
        let (rows, cols) = self.config.region()?.dims();
        self.model.weight_field(rows, cols, &PatchMap::default())
    }
}

/// Map `f` over `items` on all available cores, keeping the order.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len().max(1));
    let chunk = items.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<U>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

struct Artifacts<'a> {
    dir: &'a Path,
    config: &'a RunConfig,
    files: Vec<String>,
}

impl Artifacts<'_> {
    fn put(&mut self, format: &str, name: &str, contents: &str) -> Result<()> {
        if self.config.wants(format) {
            write_file(&self.dir.join(name), contents)?;
            self.files.push(name.into());
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Run one command; errors map to exit codes through [`Error::exit_code`].
pub fn run(cmd: Command, config: Option<RunConfig>, opts: &CliOptions) -> Result<Outcome> {
    let mut timer = Timer(BTreeMap::new());
    if cmd == Command::Selftest {
        return selftest(config, opts, timer);
    }
    let mut config = config.ok_or_else(|| Error::Config(format!("{} needs a config file", cmd.name())))?;
    if let Some(seed) = opts.seed {
        config.chain.seed = seed;
    }
    let pipe = timer.time("setup", || Pipeline::new(config.clone()))?;
    let (residuals, checks) = timer.time("checks", || pipe.checks(opts.require_periodic))?;
    let pass = checks.iter().all(|c| c.pass || !c.required);
    let mut summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        genus: pipe.model.genus(),
        seed: config.chain.seed,
        rng: RNG_ALGORITHM,
        residuals,
        checks,
        acceptance_rate: None,
        chain: None,
        wall_times: BTreeMap::new(),
        files: Vec::new(),
        pass,
    };
    let out_dir = match (&opts.out, cmd) {
        (Some(d), _) => Some(d.clone()),
        (None, Command::Validate) => None,
        (None, _) => Some(PathBuf::from(&config.outputs.directory)),
    };
    if cmd == Command::Validate || !pass {
        summary.wall_times = timer.0;
        if let Some(dir) = &out_dir {
            let mut art = Artifacts { dir, config: &config, files: Vec::new() };
            art.put("json", "summary.json", &to_json(&summary)?)?;
            summary.files = art.files;
        }
        return Ok(Outcome { code: if pass { 0 } else { 2 }, summary, out_dir });
    }
    let dir = out_dir.clone().expect("output directory");
    let mut art = Artifacts { dir: &dir, config: &config, files: Vec::new() };
    match cmd {
        Command::Amoeba => timer.time("amoeba", || amoeba(&pipe, &mut art))?,
        Command::Ronkin => timer.time("ronkin", || ronkin(&pipe, &mut art))?,
        Command::Weights => timer.time("weights", || weights(&pipe, &mut art))?,
        Command::Sample => {
            let w = timer.time("weights", || pipe.weight_field())?;
            timer.time("sample", || sample(&pipe, &w, &mut art, &mut summary))?
        }
        Command::Validate | Command::Selftest => unreachable!(),
    }
    summary.wall_times = timer.0;
    art.files.push("summary.json".into());
    summary.files = art.files.clone();
    if !config.wants("json") {
        summary.files.pop();
    } else {
        write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
    }
    Ok(Outcome { code: 0, summary, out_dir })
}

fn amoeba(pipe: &Pipeline, art: &mut Artifacts) -> Result<()> {
    let g = &pipe.config.grid;
    let curves = pipe.surface().trace_amoeba_boundary(&pipe.harnack, g.boundary_samples, g.clip)?;
    let mut csv = Csv::new(&["component", "x1", "x2", "s1", "s2"]);
    for c in &curves {
        for (_, s) in &c.points {
            csv.row(&[c.component.to_string(), fmt_f64(s.x1), fmt_f64(s.x2), fmt_f64(s.s1), fmt_f64(s.s2)]);
        }
    }
    art.put("csv", "amoeba_boundary.csv", csv.as_str())?;
    let pts = pipe.grid_points();
    let samples = par_map(&pts, |&(_, _, z)| pipe.surface().amoeba_map(&pipe.harnack, z));
    let mut grid = Csv::new(&["re_z", "im_z", "x1", "x2", "s1", "s2"]);
    for (&(_, _, z), s) in pts.iter().zip(samples) {
        let s = s?;
        grid.floats(&[z.re, z.im, s.x1, s.x2, s.s1, s.s2]);
    }
    art.put("csv", "amoeba_grid.csv", grid.as_str())?;
    let amoeba: Vec<(String, Vec<(f64, f64)>)> =
        curves.iter().map(|c| (c.component.to_string(), c.points.iter().map(|p| (p.1.x1, p.1.x2)).collect())).collect();
    art.put("svg", "amoeba.svg", &svg_polylines("amoeba boundary (x1, x2)", &amoeba))?;
    let polygon: Vec<(String, Vec<(f64, f64)>)> =
        curves.iter().map(|c| (c.component.to_string(), c.points.iter().map(|p| (p.1.s1, p.1.s2)).collect())).collect();
    art.put("svg", "polygon.svg", &svg_polylines("Newton polygon image (s1, s2)", &polygon))
}

fn ronkin(pipe: &Pipeline, art: &mut Artifacts) -> Result<()> {
    let opts = RonkinOptions { quad_tol: pipe.config.quad_tol, ..Default::default() };
    let r = Ronkin::new(pipe.surface(), &pipe.harnack, opts)?;
    let pts = pipe.grid_points();
    let samples = par_map(&pts, |&(_, _, z)| r.sample(z));
    let header = [
        "re_z", "im_z", "x1", "x2", "y1", "y2", "s1", "s2", "rho", "sigma", "h", "re_r", "im_r", "hess11", "hess12", "hess21", "hess22",
    ];
    let mut csv = Csv::new(&header);
    let g = &pipe.config.grid;
    let mut rho = vec![f64::NAN; g.nx * g.ny];
    for (&(row, col, z), s) in pts.iter().zip(samples) {
        let s = s?;
        rho[row * g.nx + col] = s.rho;
        csv.floats(&[
            z.re, z.im, s.x1, s.x2, s.y1, s.y2, s.s1, s.s2, s.rho, s.sigma, s.h, s.r.re, s.r.im, s.hess[0][0], s.hess[0][1], s.hess[1][0], s.hess[1][1],
        ]);
    }
    art.put("csv", "ronkin.csv", csv.as_str())?;
    let (lo, hi) = finite_range(&rho);
    let svg = svg_grid("Ronkin function on the upper half-domain", g.ny, g.nx, &|r, c| {
        let v = rho[r * g.nx + c];
        v.is_finite().then(|| diverging((v - lo) / (hi - lo).max(1e-300)))
    });
    art.put("svg", "ronkin.svg", &svg)
}

fn finite_range(v: &[f64]) -> (f64, f64) {
    v.iter().filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn weights(pipe: &Pipeline, art: &mut Artifacts) -> Result<()> {
    let w = pipe.weight_field()?;
    let region = pipe.config.region()?;
    let init = init_region(region, pipe.config.pattern()?)?;
    let mut csv = Csv::new(&["row", "col", "active", "face_weight"]);
    let mut logs = vec![f64::NAN; w.rows * w.cols];
    for r in 0..w.rows {
        for c in 0..w.cols {
            let v = w.face(r, c);
            let active = init.face_active(r, c);
            if active {
                logs[r * w.cols + c] = v.ln();
            }
            csv.row(&[r.to_string(), c.to_string(), (active as u8).to_string(), fmt_f64(v)]);
        }
    }
    art.put("csv", "weights.csv", csv.as_str())?;
    let (lo, hi) = finite_range(&logs);
    let m = lo.abs().max(hi.abs()).max(1e-300);
    let svg = svg_grid("log face weight", w.rows, w.cols, &|r, c| {
        let v = logs[r * w.cols + c];
        v.is_finite().then(|| diverging(0.5 + 0.5 * v / m))
    });
    art.put("svg", "weights.svg", &svg)
}

fn sample(pipe: &Pipeline, w: &WeightField, art: &mut Artifacts, summary: &mut RunSummary) -> Result<()> {
    let cfg = &pipe.config;
    let init = init_region(cfg.region()?, cfg.pattern()?)?;
    let spec = ChainSpec {
        sweeps: cfg.chain.sweeps,
        seed: cfg.chain.seed,
        volume_target: cfg.chain.volume_target,
        record_interval: cfg.chain.record_interval,
    };
    let res = run_chain(&spec, w, &init)?;
    art.put("hex", "config.hex", &res.final_config.to_hex())?;
    let h = &res.mean_height;
    let mut csv = Csv::new(&["row", "col", "height"]);
    for r in 0..h.rows {
        for c in 0..h.cols {
            csv.row(&[r.to_string(), c.to_string(), fmt_f64(h.get(r, c))]);
        }
    }
    art.put("csv", "height.csv", csv.as_str())?;
    art.put("svg", "height.svg", &svg_height("mean height coloured by local slope", h, 2))?;
    summary.acceptance_rate = Some(F17(res.acceptance_rate));
    summary.chain = Some(ChainReport {
        sweeps: spec.sweeps,
        proposals: res.proposals,
        accepted: res.accepted,
        samples: res.samples,
        drive_flips: res.drive_flips,
        initial_volume: F17(res.initial_volume),
        final_volume: F17(res.final_volume),
        volume_target: spec.volume_target.map(F17),
    });
    Ok(())
}

/// Built-in checks with fixed data, plus the residual checks of `config` when given.
fn selftest(config: Option<RunConfig>, opts: &CliOptions, mut timer: Timer) -> Result<Outcome> {
    use crate::schottky::{Generator, SchottkyData};
    use crate::theta::theta_real;
    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| checks.push(Check { name: name.into(), pass, required: true, detail });

    let s1 = Surface::new(SchottkyData::new(vec![Generator::new(0.25, 0.9, 0.015)]), 8)?;
    let (b, _) = s1.period_matrix()?;
    let exact = C64::new(0.015f64.ln(), 0.0) / C64::new(0.0, 2.0 * std::f64::consts::PI);
    let err = (b.matrix()[(0, 0)] - exact).norm();
    push("genus1_period_matrix", err < 1e-12, format!("error {}", fmt_f64(err)));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut min_theta = f64::INFINITY;
    for _ in 0..100 {
        min_theta = min_theta.min(theta_real(&[rng.random_range(-3.0..3.0)], &b, 1e-12)?);
    }
    push("theta_positive", min_theta > 0.0, format!("min theta {}", fmt_f64(min_theta)));

    let square = HarnackData::square(-2.4, -0.4, 0.4, 2.4);
    let ok = kasteleyn_check(&SquareLattice::unchecked(square.clone())).pass();
    let bad = kasteleyn_check(&SquareLattice::unchecked(HarnackData::square(-2.4, 0.4, -0.4, 2.4))).pass();
    push("kasteleyn_signs", ok && !bad, format!("clustered {ok}, permuted {bad}"));

    let z = kasteleyn_partition(&WeightField::uniform(3, 3))?;
    push("uniform_4x4_partition", (z - 36.0).abs() < 1e-9, format!("Z = {}", fmt_f64(z)));

    let m = FockModel::new(s1, SquareLattice::new(square)?, WeightOptions::default())?;
    let fay = m.fay_residual(C64::new(0.7, 1.9), -1.0, 0.3, 4.0)?;
    push("fay_genus1", fay < 1e-9, format!("residual {}", fmt_f64(fay)));

    let mut residuals = Residuals { periodicity: F17(0.0), kasteleyn: F17(0.0), fay: F17(fay), dirac: F17(0.0) };
    let mut genus = 1;
    let mut seed = 0;
    if let Some(cfg) = config {
        seed = opts.seed.unwrap_or(cfg.chain.seed);
        let pipe = timer.time("setup", || Pipeline::new(cfg))?;
        let (r, c) = timer.time("checks", || pipe.checks(opts.require_periodic))?;
        residuals = r;
        genus = pipe.model.genus();
        checks.extend(c);
    }
    let pass = checks.iter().all(|c| c.pass || !c.required);
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        command: "selftest",
        genus,
        seed,
        rng: RNG_ALGORITHM,
        residuals,
        checks,
        acceptance_rate: None,
        chain: None,
        wall_times: timer.0,
        files: Vec::new(),
        pass,
    };
    Ok(Outcome { code: if pass { 0 } else { 3 }, summary, out_dir: opts.out.clone() })
}
