//! Configuration-driven experiment runner and report writer.
//!
//! A run executes the requested stages in the order
//! sample → lyapunov → branches → dimension → verify, writes one artifact per
//! stage into the output directory and a `report.json` record that refers to
//! them by file name. Wall times go to `timings.json` so that every other
//! artifact is byte-identical across runs with the same config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::branches::{certify_orbits, summarize_certificates, CertificationSummary, Exponents, DEFAULT_EPS};
use crate::catalog;
use crate::dimension::{
    aggregate_dimension, verify_theorem, BoundsVerdict, DimensionEstimate, DimensionMethod, RadiiSchedule,
};
use crate::error::{Error, Result};
use crate::lyapunov::{
    cocycle_spectrum, exponent_inequality_check, log_integrability, InequalityReport, IntegrabilityCheck,
    LyapunovEstimate, REPORTED_BLOCK_LENGTHS,
};
use crate::map_model::MapModel;
use crate::sampler::{orbits_from_cloud, sample_backward_cloud, BackwardOrbit, SampleCloud};
use crate::ProjectivePoint;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "EQUIDIM_OUTPUT_ROOT";

pub const CLOUD_CSV: &str = "cloud.csv";
pub const ORBITS_CSV: &str = "orbits.csv";
pub const LYAPUNOV_JSON: &str = "lyapunov.json";
pub const CERTIFICATES_JSONL: &str = "certificates.jsonl";
pub const MASS_PROFILES_CSV: &str = "mass_profiles.csv";
pub const VERDICT_JSON: &str = "verdict.json";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const TIMINGS_JSON: &str = "timings.json";

/// Bins of the exported local-dimension histogram over `[0, 2k]`.
const HISTOGRAM_BINS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Sample,
    Lyapunov,
    Branches,
    Dimension,
    Verify,
}

impl StageName {
    pub const ALL: [StageName; 5] = [
        StageName::Sample,
        StageName::Lyapunov,
        StageName::Branches,
        StageName::Dimension,
        StageName::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageName::Sample => "sample",
            StageName::Lyapunov => "lyapunov",
            StageName::Branches => "branches",
            StageName::Dimension => "dimension",
            StageName::Verify => "verify",
        }
    }

    pub fn requires(self) -> &'static [StageName] {
        match self {
            StageName::Sample => &[],
            StageName::Lyapunov | StageName::Dimension => &[StageName::Sample],
            StageName::Branches => &[StageName::Sample, StageName::Lyapunov],
            StageName::Verify => &[StageName::Lyapunov, StageName::Dimension],
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_stages() -> Vec<StageName> {
    StageName::ALL.to_vec()
}
fn default_depth() -> usize {
    30
}
fn default_count() -> usize {
    10_000
}
fn default_block_length() -> usize {
    20
}
fn default_block_lengths() -> Vec<usize> {
    REPORTED_BLOCK_LENGTHS.to_vec()
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_n_orbits() -> usize {
    100
}
fn default_orbit_depth() -> usize {
    20
}
fn default_n_centers() -> usize {
    500
}
fn default_methods() -> Vec<DimensionMethod> {
    DimensionMethod::ALL.to_vec()
}

/// Optional overrides of the default radii `ρ_0 = 0.2 · diameter, h = 0.25, 16 radii`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiConfig {
    pub rho0: Option<f64>,
    pub h: Option<f64>,
    pub n_radii: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Path to a map definition file (relative to the config file), or the
    /// id of a bundled map.
    pub map: String,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageName>,
    /// Backward walk length of each cloud point.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Block length of the main exponent estimate.
    #[serde(default = "default_block_length")]
    pub block_length: usize,
    /// Additional block lengths reported in `lyapunov.json`.
    #[serde(default = "default_block_lengths")]
    pub block_lengths: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub radii: RadiiConfig,
    #[serde(default = "default_n_orbits")]
    pub n_orbits: usize,
    #[serde(default = "default_orbit_depth")]
    pub orbit_depth: usize,
    #[serde(default = "default_n_centers")]
    pub n_centers: usize,
    /// Dimension estimators; the first one feeds the verdict.
    #[serde(default = "default_methods")]
    pub methods: Vec<DimensionMethod>,
    pub rng_seed: u64,
    /// Starting point of the backward walks as `[[re, im], …]`; the map's
    /// default seed when absent.
    #[serde(default)]
    pub seed_point: Option<ProjectivePoint>,
    /// Relative paths resolve against `EQUIDIM_OUTPUT_ROOT` when set.
    pub output_dir: PathBuf,
    /// Directory of the config file, used to resolve `map`.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal config running every stage with defaults.
    pub fn new(map: impl Into<String>, rng_seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            map: map.into(),
            stages: default_stages(),
            depth: default_depth(),
            count: default_count(),
            block_length: default_block_length(),
            block_lengths: default_block_lengths(),
            eps: default_eps(),
            radii: RadiiConfig::default(),
            n_orbits: default_n_orbits(),
            orbit_depth: default_orbit_depth(),
            n_centers: default_n_centers(),
            methods: default_methods(),
            rng_seed,
            seed_point: None,
            output_dir: output_dir.into(),
            base_dir: None,
        }
    }

    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for s in &self.stages {
            for dep in s.requires() {
                if !self.stages.contains(dep) {
                    return bad(format!("stage `{s}` requires stage `{dep}`"));
                }
            }
        }
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if self.block_length == 0 || self.block_lengths.contains(&0) {
            return bad("block lengths must be positive".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        if self.has(StageName::Branches) && (self.n_orbits < 2 || self.orbit_depth == 0) {
            return bad("branches needs at least 2 orbits of positive depth".into());
        }
        if self.has(StageName::Dimension) {
            if self.methods.is_empty() {
                return bad("at least one dimension method is needed".into());
            }
            self.schedule_for(1.0)?;
        }
        Ok(())
    }

    pub fn has(&self, stage: StageName) -> bool {
        self.stages.contains(&stage)
    }

    /// Radii schedule for a support of the given diameter.
    pub fn schedule_for(&self, diameter: f64) -> Result<RadiiSchedule> {
        let d = RadiiSchedule::for_diameter(diameter);
        RadiiSchedule::new(
            self.radii.rho0.unwrap_or(d.rho0),
            self.radii.h.unwrap_or(d.h),
            self.radii.n_radii.unwrap_or(d.n_radii),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads the map from a file next to the config, or from the bundled set.
    pub fn load_map(&self) -> Result<MapModel> {
        let path = match &self.base_dir {
            Some(dir) => dir.join(&self.map),
            None => PathBuf::from(&self.map),
        };
        if path.is_file() {
            MapModel::from_file(&path)
        } else if catalog::ids().any(|id| id == self.map) {
            catalog::load(&self.map)
        } else {
            Err(Error::Config(format!("map `{}` is neither a file nor a bundled map", self.map)))
        }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Counters {
    pub cloud_points: usize,
    pub walks_attempted: usize,
    pub walks_discarded: usize,
    pub lyapunov_discards: usize,
    pub orbits_skipped: usize,
    pub orbits_rejected: usize,
    pub orbits_certified: usize,
    pub slow_decay_violations: usize,
    pub centers_dropped: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapInfo {
    pub id: String,
    pub description: String,
    pub k: usize,
    pub degree: u32,
    pub d_t: u64,
    pub lambda_below_top: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovSection {
    pub main: LyapunovEstimate,
    pub by_block_length: Vec<LyapunovEstimate>,
    pub inequalities: InequalityReport,
    pub log_integrability: IntegrabilityCheck,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub method: DimensionMethod,
    pub dim_hat: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub dropped: usize,
    pub artifact: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportRecord {
    pub schema_version: u32,
    pub map: MapInfo,
    pub config: ExperimentConfig,
    pub stages_run: Vec<StageName>,
    /// Artifact file names relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub counters: Counters,
    pub lyapunov: Option<LyapunovSection>,
    pub certification: Option<CertificationSummary>,
    pub dimension: Vec<DimensionSummary>,
    pub verdict: Option<BoundsVerdict>,
    /// Seconds per stage; written to `timings.json` only.
    #[serde(skip)]
    pub wall_times: BTreeMap<String, f64>,
}

impl ReportRecord {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Opens and parses every referenced artifact in `dir`.
    pub fn check_artifacts(&self, dir: &Path) -> Result<()> {
        for name in self.artifacts.values() {
            let path = dir.join(name);
            if name.ends_with(".json") {
                let _: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(&path)?))?;
            } else if name.ends_with(".jsonl") {
                for line in BufReader::new(File::open(&path)?).lines() {
                    let _: serde_json::Value = serde_json::from_str(&line?)?;
                }
            } else if name.ends_with(".csv") {
                let mut rdr = csv_reader(&path)?;
                for row in rdr.records() {
                    row.map_err(csv_error)?;
                }
            }
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)
}

/// CSV writer whose first line is a `# key=value …` provenance comment.
fn csv_writer(path: &Path, comment: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# {comment}")?;
    Ok(csv::Writer::from_writer(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn point_fields(p: &ProjectivePoint) -> Vec<String> {
    let (chart, aff) = p.affine();
    let mut row = vec![chart.to_string()];
    for z in aff {
        row.push(z.re.to_string());
        row.push(z.im.to_string());
    }
    row
}

fn coordinate_headers(k: usize) -> Vec<String> {
    let mut h = vec!["chart".to_string()];
    for i in 0..k {
        h.push(format!("re{i}"));
        h.push(format!("im{i}"));
    }
    h
}

fn seed_string(p: &ProjectivePoint) -> String {
    let parts: Vec<String> = p.coords().iter().map(|c| format!("{}{:+}i", c.re, c.im)).collect();
    format!("[{}]", parts.join(":"))
}

/// Cloud points as affine coordinates in their largest-coordinate chart.
pub fn write_cloud_csv(path: &Path, cloud: &SampleCloud) -> Result<()> {
    let comment = format!(
        "map_id={} seed={} depth={} rng_seed={}",
        cloud.map_id,
        seed_string(&cloud.seed_point),
        cloud.depth,
        cloud.rng_seed
    );
    let mut w = csv_writer(path, &comment)?;
    let mut header = vec!["index".to_string()];
    header.extend(coordinate_headers(cloud.dim()));
    w.write_record(&header).map_err(csv_error)?;
    for (i, p) in cloud.points.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(point_fields(p));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the points of a cloud CSV back.
pub fn read_cloud_csv(path: &Path) -> Result<Vec<ProjectivePoint>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad field {i} in {}", path.display())))
        };
        let chart = parse(1)? as usize;
        let k = (row.len() - 2) / 2;
        let mut coords = Vec::with_capacity(k + 1);
        let mut a = 0;
        for i in 0..=k {
            if i == chart {
                coords.push(num_complex::Complex64::new(1.0, 0.0));
            } else {
                coords.push(num_complex::Complex64::new(parse(2 + 2 * a)?, parse(3 + 2 * a)?));
                a += 1;
            }
        }
        out.push(ProjectivePoint::new(&coords)?);
    }
    Ok(out)
}

pub fn write_orbits_csv(path: &Path, orbits: &[BackwardOrbit], depth: usize, rng_seed: u64) -> Result<()> {
    let map_id = orbits.first().map_or("", |o| o.map_id.as_str());
    let comment = format!("map_id={map_id} seed=cloud depth={depth} rng_seed={rng_seed}");
    let mut w = csv_writer(path, &comment)?;
    let k = orbits.first().map_or(1, |o| o.points[0].dim());
    let mut header = vec!["orbit".to_string(), "depth".to_string()];
    header.extend(coordinate_headers(k));
    header.push("residual".to_string());
    w.write_record(&header).map_err(csv_error)?;
    for o in orbits {
        for (j, p) in o.points.iter().enumerate() {
            let mut row = vec![o.index.to_string(), j.to_string()];
            row.extend(point_fields(p));
            // residual of the step landing on this point: dist(f(x_-(j+1)), x_-j)
            row.push(o.residuals.get(j).map_or(String::new(), |r| r.to_string()));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<usize>,
}

#[derive(Serialize)]
struct DimensionExport<'a> {
    map_id: &'a str,
    method: DimensionMethod,
    dim_hat: f64,
    ci: (f64, f64),
    radii_schedule: RadiiSchedule,
    reference_count: usize,
    n_centers: usize,
    dropped: usize,
    local_dims_histogram: Histogram,
    fit: Option<crate::stats::LinearFit>,
    scale_points: &'a [(f64, f64)],
}

fn write_dimension_json(path: &Path, est: &DimensionEstimate, k: usize) -> Result<()> {
    let hi = 2.0 * k as f64;
    write_json(
        path,
        &DimensionExport {
            map_id: &est.map_id,
            method: est.method,
            dim_hat: est.dim_hat,
            ci: est.ci,
            radii_schedule: est.radii_schedule,
            reference_count: est.reference_count,
            n_centers: est.n_centers,
            dropped: est.dropped,
            local_dims_histogram: Histogram {
                lo: 0.0,
                hi,
                counts: est.histogram(0.0, hi, HISTOGRAM_BINS),
            },
            fit: est.fit,
            scale_points: &est.scale_points,
        },
    )
}

fn write_mass_profiles(path: &Path, est: &DimensionEstimate) -> Result<()> {
    let comment = format!(
        "map_id={} method={} rho0={} h={} n_radii={}",
        est.map_id, est.method, est.radii_schedule.rho0, est.radii_schedule.h, est.radii_schedule.n_radii
    );
    let mut w = csv_writer(path, &comment)?;
    w.write_record(["center", "log_rho", "log_mass"]).map_err(csv_error)?;
    for p in &est.profiles {
        for (r, m) in p.log_rho.iter().zip(&p.log_mass) {
            w.write_record([p.center.to_string(), r.to_string(), m.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CertificateLine<'a> {
    Depth {
        orbit_index: u64,
        #[serde(flatten)]
        record: &'a crate::branches::DepthRecord,
    },
    Orbit {
        orbit_index: u64,
        orbit_seed: u64,
        a1_hat: f64,
        c: f64,
        max_certified_depth: usize,
        truncated: bool,
        rho_hat: f64,
        eta_hat: f64,
        decay_slope: f64,
        composed: Option<&'a crate::branches::ComposedCheck>,
    },
    Rejected {
        orbit_index: u64,
        error: String,
    },
    Summary(&'a CertificationSummary),
}

fn write_certificates(
    path: &Path,
    orbits: &[BackwardOrbit],
    results: &[Result<crate::branches::InverseBranchCertificate>],
    summary: &CertificationSummary,
) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    let mut line = |l: &CertificateLine| -> Result<()> {
        serde_json::to_writer(&mut f, l)?;
        writeln!(f)?;
        Ok(())
    };
    for (o, r) in orbits.iter().zip(results) {
        match r {
            Ok(c) => {
                for rec in &c.schedule {
                    line(&CertificateLine::Depth {
                        orbit_index: o.index,
                        record: rec,
                    })?;
                }
                line(&CertificateLine::Orbit {
                    orbit_index: o.index,
                    orbit_seed: c.orbit_seed,
                    a1_hat: c.a1_hat,
                    c: c.c,
                    max_certified_depth: c.max_certified_depth,
                    truncated: c.truncated,
                    rho_hat: c.rho_hat,
                    eta_hat: c.eta_hat,
                    decay_slope: c.decay_slope,
                    composed: c.composed.as_ref(),
                })?;
            }
            Err(e) => line(&CertificateLine::Rejected {
                orbit_index: o.index,
                error: e.to_string(),
            })?,
        }
    }
    line(&CertificateLine::Summary(summary))?;
    f.flush()?;
    Ok(())
}

fn stage<T>(name: StageName, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::StageFailure {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// Runs the configured stages and writes all artifacts, `report.json`,
/// `summary.md` and `timings.json` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportRecord> {
    config.validate()?;
    let map = config.load_map()?;
    let out = config.resolved_output_dir();
    fs::create_dir_all(&out)?;

    let mut record = ReportRecord {
        schema_version: SCHEMA_VERSION,
        map: MapInfo {
            id: map.id().to_string(),
            description: map.definition().description.clone(),
            k: map.dim(),
            degree: map.degree(),
            d_t: map.topological_degree(),
            lambda_below_top: map.lambda_below_top(),
        },
        config: config.clone(),
        stages_run: Vec::new(),
        artifacts: BTreeMap::new(),
        counters: Counters::default(),
        lyapunov: None,
        certification: None,
        dimension: Vec::new(),
        verdict: None,
        wall_times: BTreeMap::new(),
    };
    let mut cloud: Option<SampleCloud> = None;
    let mut main_dim: Option<DimensionEstimate> = None;

    for s in StageName::ALL.into_iter().filter(|s| config.has(*s)) {
        let t = Instant::now();
        match s {
            StageName::Sample => {
                let seed = match config.seed_point.or_else(|| map.default_seed()) {
                    Some(p) => p,
                    None => return Err(Error::Config("no seed point given and the map has no default".into())),
                };
                let c = stage(s, sample_backward_cloud(&map, &seed, config.depth, config.count, config.rng_seed))?;
                stage(s, write_cloud_csv(&out.join(CLOUD_CSV), &c))?;
                record.artifacts.insert("cloud".into(), CLOUD_CSV.into());
                record.counters.cloud_points = c.count();
                record.counters.walks_attempted = c.attempted;
                record.counters.walks_discarded = c.discarded;
                cloud = Some(c);
            }
            StageName::Lyapunov => {
                let c = cloud.as_ref().expect("sample stage runs first");
                let main = stage(s, cocycle_spectrum(&map, c, config.block_length))?;
                let by_block_length = stage(
                    s,
                    config.block_lengths.iter().map(|&n| cocycle_spectrum(&map, c, n)).collect(),
                )?;
                let section = LyapunovSection {
                    inequalities: exponent_inequality_check(&map, &main),
                    log_integrability: log_integrability(&map, c),
                    main,
                    by_block_length,
                };
                stage(s, write_json(&out.join(LYAPUNOV_JSON), &section))?;
                record.artifacts.insert("lyapunov".into(), LYAPUNOV_JSON.into());
                record.counters.lyapunov_discards = section.main.discards;
                record.lyapunov = Some(section);
            }
            StageName::Branches => {
                let c = cloud.as_ref().expect("sample stage runs first");
                let lyap = &record.lyapunov.as_ref().expect("lyapunov stage runs first").main;
                let exps = Exponents::from(lyap);
                let (orbits, skipped) =
                    stage(s, orbits_from_cloud(&map, c, config.n_orbits, config.orbit_depth, config.rng_seed))?;
                let results = certify_orbits(&map, &orbits, config.eps, &exps);
                let summary = summarize_certificates(map.id(), config.eps, config.orbit_depth, &results);
                stage(s, write_orbits_csv(&out.join(ORBITS_CSV), &orbits, config.orbit_depth, config.rng_seed))?;
                stage(s, write_certificates(&out.join(CERTIFICATES_JSONL), &orbits, &results, &summary))?;
                record.artifacts.insert("orbits".into(), ORBITS_CSV.into());
                record.artifacts.insert("certificates".into(), CERTIFICATES_JSONL.into());
                record.counters.orbits_skipped = skipped;
                record.counters.orbits_rejected = summary.rejected;
                record.counters.orbits_certified = summary.certified;
                record.counters.slow_decay_violations = summary.slow_decay_violations;
                record.certification = Some(summary);
            }
            StageName::Dimension => {
                let c = cloud.as_ref().expect("sample stage runs first");
                let diameter = crate::dimension::support_diameter(c);
                let schedule = config.schedule_for(diameter)?;
                for (i, &m) in config.methods.iter().enumerate() {
                    match aggregate_dimension(c, config.n_centers, &schedule, m) {
                        Ok(est) => {
                            let name = format!("dimension_{m}.json");
                            stage(s, write_dimension_json(&out.join(&name), &est, map.dim()))?;
                            record.artifacts.insert(format!("dimension_{m}"), name.clone());
                            if m == DimensionMethod::LocalSlope {
                                stage(s, write_mass_profiles(&out.join(MASS_PROFILES_CSV), &est))?;
                                record.artifacts.insert("mass_profiles".into(), MASS_PROFILES_CSV.into());
                            }
                            if i == 0 {
                                record.counters.centers_dropped = est.dropped;
                            }
                            record.dimension.push(DimensionSummary {
                                method: m,
                                dim_hat: Some(est.dim_hat),
                                ci: Some(est.ci),
                                dropped: est.dropped,
                                artifact: Some(name),
                                error: None,
                            });
                            if i == 0 {
                                main_dim = Some(est);
                            }
                        }
                        // the first method feeds the verdict; the others are diagnostics
                        Err(e) if i > 0 => record.dimension.push(DimensionSummary {
                            method: m,
                            dim_hat: None,
                            ci: None,
                            dropped: 0,
                            artifact: None,
                            error: Some(e.to_string()),
                        }),
                        Err(e) => return stage(s, Err(e)),
                    }
                }
            }
            StageName::Verify => {
                let lyap = &record.lyapunov.as_ref().expect("lyapunov stage runs first").main;
                let dim = main_dim.as_ref().expect("dimension stage runs first");
                let rho = record.certification.as_ref().map(|c| c.rho_hat_median);
                let verdict = stage(s, verify_theorem(&map, lyap, dim, rho))?;
                stage(s, write_json(&out.join(VERDICT_JSON), &verdict))?;
                record.artifacts.insert("verdict".into(), VERDICT_JSON.into());
                record.verdict = Some(verdict);
            }
        }
        record.stages_run.push(s);
        record.wall_times.insert(s.to_string(), t.elapsed().as_secs_f64());
    }

    record.artifacts.insert("report".into(), REPORT_JSON.into());
    record.artifacts.insert("summary".into(), SUMMARY_MD.into());
    emit_report(&record, ReportFormat::Json, &out)?;
    emit_report(&record, ReportFormat::MarkdownSummary, &out)?;
    write_json(&out.join(TIMINGS_JSON), &record.wall_times)?;
    Ok(record)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    CsvBundle,
    MarkdownSummary,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv_bundle" => Ok(ReportFormat::CsvBundle),
            "markdown_summary" => Ok(ReportFormat::MarkdownSummary),
            _ => Err(Error::InvalidArgument(format!("unknown report format `{s}`"))),
        }
    }
}

/// Writes `record` into `dir` and returns the paths written.
pub fn emit_report(record: &ReportRecord, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Json => {
            let p = dir.join(REPORT_JSON);
            write_json(&p, record)?;
            Ok(vec![p])
        }
        ReportFormat::MarkdownSummary => {
            let p = dir.join(SUMMARY_MD);
            fs::write(&p, markdown_summary(std::slice::from_ref(record)))?;
            Ok(vec![p])
        }
        ReportFormat::CsvBundle => write_csv_bundle(record, dir),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Markdown with one bounds-table row per record.
pub fn markdown_summary(records: &[ReportRecord]) -> String {
    let mut s = String::from("# equidim summary\n\n## Maps\n\n| map | k | degree | d_t | λ_{k-1} | stages |\n|---|---|---|---|---|---|\n");
    for r in records {
        let stages: Vec<&str> = r.stages_run.iter().map(|s| s.name()).collect();
        s += &format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.map.id,
            r.map.k,
            r.map.degree,
            r.map.d_t,
            r.map.lambda_below_top,
            stages.join(", ")
        );
    }
    if records.iter().any(|r| r.verdict.is_some()) {
        s += "\n## Dimension bounds\n\n| map | lower | dim_hat | upper | slack | pass |\n|---|---|---|---|---|---|\n";
        for r in records {
            if let Some(v) = &r.verdict {
                s += &format!(
                    "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |\n",
                    r.map.id,
                    v.lower,
                    v.dim_hat,
                    v.upper,
                    v.slack,
                    if v.pass() { "pass" } else { "FAIL" }
                );
            }
        }
    }
    if records.iter().any(|r| r.lyapunov.is_some()) {
        s += "\n## Lyapunov exponents\n\n| map | χ | Σ | 2Σ ≥ log d_t | χ_1 bound |\n|---|---|---|---|---|\n";
        for r in records {
            if let Some(l) = &r.lyapunov {
                let chi: Vec<String> = l.main.chi.iter().map(|c| format!("{c:.4}")).collect();
                s += &format!(
                    "| {} | {} | {:.4} ± {:.4} | {} | {} |\n",
                    r.map.id,
                    chi.join(", "),
                    l.main.sigma,
                    l.main.sigma_stderr,
                    l.inequalities.two_sigma_ok,
                    l.inequalities.chi1_ok
                );
            }
        }
    }
    if records.iter().any(|r| !r.dimension.is_empty()) {
        s += "\n## Dimension estimators\n\n| map | method | dim_hat | ci | note |\n|---|---|---|---|---|\n";
        for r in records {
            for d in &r.dimension {
                let ci = d.ci.map_or("-".to_string(), |(a, b)| format!("[{a:.4}, {b:.4}]"));
                s += &format!(
                    "| {} | {} | {} | {} | {} |\n",
                    r.map.id,
                    d.method,
                    fmt_opt(d.dim_hat),
                    ci,
                    d.error.as_deref().unwrap_or("")
                );
            }
        }
    }
    if records.iter().any(|r| r.certification.is_some()) {
        s += "\n## Inverse branches\n\n| map | orbits | certified | depth | identity error | slow-decay violations |\n|---|---|---|---|---|---|\n";
        for r in records {
            if let Some(c) = &r.certification {
                s += &format!(
                    "| {} | {} | {} | {} | {:.2e} | {} |\n",
                    r.map.id, c.orbits, c.certified, c.target_depth, c.max_identity_error, c.slow_decay_violations
                );
            }
        }
    }
    let profiles: Vec<&str> = records
        .iter()
        .filter(|r| r.artifacts.contains_key("mass_profiles"))
        .map(|r| r.map.id.as_str())
        .collect();
    if !profiles.is_empty() {
        s += &format!(
            "\nPer-center `(log ρ, log mass)` pairs are in `{MASS_PROFILES_CSV}` (maps: {}).\n",
            profiles.join(", ")
        );
    }
    s
}

fn write_csv_bundle(record: &ReportRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let comment = format!("map_id={} rng_seed={}", record.map.id, record.config.rng_seed);
    let mut written = Vec::new();
    for s in &record.stages_run {
        let path = dir.join(format!("{s}.csv"));
        let mut w = csv_writer(&path, &comment)?;
        let mut row = |r: Vec<String>| w.write_record(&r).map_err(csv_error);
        match s {
            StageName::Sample => {
                row(vec!["count".into(), "depth".into(), "attempted".into(), "discarded".into()])?;
                row(vec![
                    record.counters.cloud_points.to_string(),
                    record.config.depth.to_string(),
                    record.counters.walks_attempted.to_string(),
                    record.counters.walks_discarded.to_string(),
                ])?;
            }
            StageName::Lyapunov => {
                row(vec!["n_cocycle".into(), "index".into(), "chi".into(), "stderr".into()])?;
                if let Some(l) = &record.lyapunov {
                    for est in std::iter::once(&l.main).chain(&l.by_block_length) {
                        for (i, (c, e)) in est.chi.iter().zip(&est.stderr).enumerate() {
                            row(vec![est.n_cocycle.to_string(), (i + 1).to_string(), c.to_string(), e.to_string()])?;
                        }
                        row(vec![est.n_cocycle.to_string(), "sigma".into(), est.sigma.to_string(), est.sigma_stderr.to_string()])?;
                    }
                }
            }
            StageName::Branches => {
                row(
                    ["orbits", "rejected", "certified", "target_depth", "eps", "max_identity_error", "slow_decay_violations", "rho_hat_median"]
                        .map(String::from)
                        .to_vec(),
                )?;
                if let Some(c) = &record.certification {
                    row(vec![
                        c.orbits.to_string(),
                        c.rejected.to_string(),
                        c.certified.to_string(),
                        c.target_depth.to_string(),
                        c.eps.to_string(),
                        c.max_identity_error.to_string(),
                        c.slow_decay_violations.to_string(),
                        c.rho_hat_median.to_string(),
                    ])?;
                }
            }
            StageName::Dimension => {
                row(["method", "dim_hat", "ci_lo", "ci_hi", "dropped", "error"].map(String::from).to_vec())?;
                for d in &record.dimension {
                    let (lo, hi) = d.ci.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                    row(vec![
                        d.method.to_string(),
                        d.dim_hat.map_or(String::new(), |v| v.to_string()),
                        lo,
                        hi,
                        d.dropped.to_string(),
                        d.error.clone().unwrap_or_default(),
                    ])?;
                }
            }
            StageName::Verify => {
                row(["lower", "dim_hat", "upper", "slack", "pass_lower", "pass_upper"].map(String::from).to_vec())?;
                if let Some(v) = &record.verdict {
                    row(vec![
                        v.lower.to_string(),
                        v.dim_hat.to_string(),
                        v.upper.to_string(),
                        v.slack.to_string(),
                        v.pass_lower.to_string(),
                        v.pass_upper.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_needs_dimension() {
        let mut cfg = ExperimentConfig::new("z2", 1, "out");
        cfg.stages = vec![StageName::Sample, StageName::Lyapunov, StageName::Verify];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toml_defaults() {
        let cfg = ExperimentConfig::from_toml_str("map = \"z2\"\nrng_seed = 5\noutput_dir = \"out\"\n").unwrap();
        assert_eq!(cfg.stages, StageName::ALL.to_vec());
        assert_eq!(cfg.count, 10_000);
        assert_eq!(cfg.depth, 30);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_config_error() {
        let r = ExperimentConfig::from_toml_str("map = \"z2\"\nrng_seed = 5\noutput_dir = \"o\"\ncount_typo = 3\n");
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_map_is_config_error() {
        let cfg = ExperimentConfig::new("no_such_map", 1, "out");
        assert!(matches!(cfg.load_map(), Err(Error::Config(_))));
    }

    #[test]
    fn format_names() {
        assert_eq!("csv_bundle".parse::<ReportFormat>().unwrap(), ReportFormat::CsvBundle);
        assert!("pdf".parse::<ReportFormat>().is_err());
    }
}
