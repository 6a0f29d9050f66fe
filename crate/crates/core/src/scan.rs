//! Configuration-driven parameter scans and their CSV/JSON output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{analytic_moments, ChannelParams};
use crate::constellation::Modulation;
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::estimation::{displaced_moments_from_samples, estimate_t_xi, worst_case, MomentEstimate, SampleSet, WorstCaseParams};
use crate::finite_size::{acceptance_mu, energy_test_plan, SecurityBudget, Throughput};
use crate::keyrate::{evaluate, KeyRateConfig, KeyRateReport, MomentSource, TestCountPolicy};
use crate::region::RegionCache;
use crate::sdp::{FwConfig, MomentBounds};
use crate::sim::{acceptance_test, energy_test, simulate, AcceptanceOutcome, EnergyOutcome, SimConfig, SimOutput};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMode {
    Analytic,
    Simulated,
}

/// Security parameters; every field defaults to the standard budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonConfig {
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub eps_at: f64,
    pub eps_et: f64,
    pub eps_bar: f64,
    pub eps_pe: f64,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        let b = SecurityBudget::standard(2.0, 1.0, 1);
        Self { eps_ec: b.eps_ec, eps_pa: b.eps_pa, eps_at: b.eps_at, eps_et: b.eps_et, eps_bar: b.eps_bar, eps_pe: b.eps_pe }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub distance_km: Vec<f64>,
    pub v_a_snu: Vec<f64>,
    pub delta0_nu: Vec<f64>,
    pub n_total: Vec<f64>,
}

impl SweepAxes {
    fn active(&self) -> Vec<(&'static str, &Vec<f64>)> {
        [("distance_km", &self.distance_km), ("v_a_snu", &self.v_a_snu), ("delta0_nu", &self.delta0_nu), ("n_total", &self.n_total)]
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: None, format: OutputFormat::Csv }
    }
}

/// A run description. Physical quantities carry their unit in the key name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub protocol: Modulation,
    pub shaping_nu: f64,
    pub v_a_snu: f64,
    pub distance_km: f64,
    /// Overrides the distance-derived transmittance when set.
    pub transmittance: Option<f64>,
    pub loss_db_per_km: f64,
    pub xi_snu: f64,
    pub eta_d: f64,
    pub nu_el_snu: f64,
    pub range_m_nu: Option<f64>,
    pub delta0_nu: f64,
    pub n_total: f64,
    pub test_ratio: f64,
    /// Overrides `test_ratio · N` when set.
    pub m_test: Option<f64>,
    pub cutoff: usize,
    pub test_count: TestCountPolicy,
    pub beta: f64,
    pub epsilon: EpsilonConfig,
    pub rep_rate_hz: f64,
    pub training_ratio: f64,
    pub fer: f64,
    pub moments: MomentMode,
    pub sim_rounds: usize,
    pub fw_max_iters: usize,
    pub fw_tol_bits: f64,
    pub sweep: SweepAxes,
    pub output: OutputConfig,
    pub threads: usize,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    /// Heterodyne records for `estimate` and `keyrate`.
    pub samples_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            protocol: Modulation::Qam16,
            shaping_nu: 0.2,
            v_a_snu: 2.0,
            distance_km: 25.0,
            transmittance: None,
            loss_db_per_km: 0.2,
            xi_snu: 0.01,
            eta_d: 1.0,
            nu_el_snu: 0.0,
            range_m_nu: None,
            delta0_nu: 0.0,
            n_total: 1e10,
            test_ratio: 0.1,
            m_test: None,
            cutoff: 10,
            test_count: TestCountPolicy::default(),
            beta: 0.95,
            epsilon: EpsilonConfig::default(),
            rep_rate_hz: 1e9,
            training_ratio: 0.25,
            fer: 0.15,
            moments: MomentMode::Analytic,
            sim_rounds: 1_000_000,
            fw_max_iters: 25,
            fw_tol_bits: 1e-4,
            sweep: SweepAxes::default(),
            output: OutputConfig::default(),
            threads: 1,
            seed: 1,
            cache_dir: None,
            samples_path: None,
        }
    }
}

/// One grid point: the swept values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub distance_km: f64,
    pub v_a_snu: f64,
    pub delta0_nu: f64,
    pub n_total: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return cfg(format!("unsupported schema version {}", self.schema_version));
        }
        let active = self.sweep.active();
        if active.len() > 2 {
            return cfg(format!("at most two sweep axes are allowed, got {}", active.len()));
        }
        if self.transmittance.is_some() && !self.sweep.distance_km.is_empty() {
            return cfg("a fixed transmittance cannot be combined with a distance sweep".into());
        }
        if self.threads == 0 {
            return cfg("threads must be at least 1".into());
        }
        // Every grid point must map to valid module inputs.
        for p in self.points() {
            self.key_rate_config(&p).map_err(|e| Error::Config(e.to_string()))?.budget.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Grid in row-major order of the active axes.
    pub fn points(&self) -> Vec<ScanPoint> {
        let base = ScanPoint { distance_km: self.distance_km, v_a_snu: self.v_a_snu, delta0_nu: self.delta0_nu, n_total: self.n_total };
        let mut pts = vec![base];
        for (name, values) in self.sweep.active() {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p;
                        match name {
                            "distance_km" => q.distance_km = v,
                            "v_a_snu" => q.v_a_snu = v,
                            "delta0_nu" => q.delta0_nu = v,
                            _ => q.n_total = v,
                        }
                        q
                    })
                })
                .collect();
        }
        pts
    }

    pub fn channel(&self, p: &ScanPoint) -> Result<ChannelParams> {
        match self.transmittance {
            Some(t) => ChannelParams::from_transmittance(t, self.xi_snu, self.loss_db_per_km),
            None => ChannelParams::from_distance(p.distance_km, self.loss_db_per_km, self.xi_snu),
        }
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        DetectorModel::with_range(self.eta_d, self.nu_el_snu, self.range_m_nu.unwrap_or(f64::INFINITY))
    }

    pub fn budget(&self, n_total: f64) -> SecurityBudget {
        let e = &self.epsilon;
        SecurityBudget {
            eps_ec: e.eps_ec,
            eps_pa: e.eps_pa,
            eps_at: e.eps_at,
            eps_et: e.eps_et,
            eps_bar: e.eps_bar,
            eps_pe: e.eps_pe,
            n_total,
            m_test: self.m_test.unwrap_or((self.test_ratio * n_total).round()),
            cutoff: self.cutoff,
        }
    }

    pub fn key_rate_config(&self, p: &ScanPoint) -> Result<KeyRateConfig> {
        let fw = FwConfig { max_iters: self.fw_max_iters, tol: self.fw_tol_bits, ..FwConfig::default() };
        Ok(KeyRateConfig {
            modulation: self.protocol,
            shaping_nu: self.shaping_nu,
            v_a_snu: p.v_a_snu,
            channel: self.channel(p)?,
            detector: self.detector()?,
            delta0_nu: p.delta0_nu,
            budget: self.budget(p.n_total),
            beta: self.beta,
            throughput: Throughput { rep_rate_hz: self.rep_rate_hz, training_ratio: self.training_ratio, fer: self.fer },
            fw,
            test_count: self.test_count,
        })
    }

    pub fn sim_config(&self, p: &ScanPoint) -> Result<SimConfig> {
        let k = self.key_rate_config(p)?;
        let c = k.constellation()?;
        let geometry = k.geometry(&c)?;
        Ok(SimConfig {
            constellation: c,
            channel: k.channel,
            detector: k.detector,
            geometry,
            rounds: self.sim_rounds,
            seed: self.seed,
            test_fraction: self.test_ratio,
        })
    }

    /// Hex SHA-256 of the canonical JSON serialisation.
    /// Digest of the canonical JSON with the output destination and thread
    /// count cleared, so it identifies what was computed rather than where.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output.path = None;
        canon.threads = 0;
        let text = serde_json::to_string(&canon).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub config_hash: String,
    pub status: String,
    pub error: Option<String>,
    pub point: ScanPoint,
    pub eta_t: Option<f64>,
    pub report: Option<KeyRateReport>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn evaluate_point(cfg: &RunConfig, p: &ScanPoint, cache: Option<&RegionCache>) -> Result<(f64, KeyRateReport)> {
    let k = cfg.key_rate_config(p)?;
    let source = match cfg.moments {
        MomentMode::Analytic => MomentSource::Analytic,
        MomentMode::Simulated => {
            let out = simulate(&cfg.sim_config(p)?)?;
            MomentSource::Estimated(displaced_moments_from_samples(&out.test_samples(), &k.detector)?)
        }
    };
    Ok((k.channel.eta_t, evaluate(&k, &source, cache)?))
}

/// Evaluates every grid point; failures are recorded and the scan continues.
/// Records come back in grid order whatever the completion order.
pub fn run_scan(cfg: &RunConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let hash = cfg.hash();
    let cache = cfg.cache_dir.as_ref().map(RegionCache::new);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(|e| Error::Config(e.to_string()))?;
    let points = cfg.points();
    let records = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, p)| {
                let t = Instant::now();
                let res = evaluate_point(cfg, p, cache.as_ref());
                let wall_time_s = t.elapsed().as_secs_f64();
                match res {
                    Ok((eta_t, report)) => RunRecord {
                        index,
                        config_hash: hash.clone(),
                        status: "ok".into(),
                        error: None,
                        point: *p,
                        eta_t: Some(eta_t),
                        report: Some(report),
                        wall_time_s,
                    },
                    Err(e) => RunRecord {
                        index,
                        config_hash: hash.clone(),
                        status: "failed".into(),
                        error: Some(e.to_string()),
                        point: *p,
                        eta_t: None,
                        report: None,
                        wall_time_s,
                    },
                }
            })
            .collect()
    });
    Ok(records)
}

/// Flat CSV row; numerics are empty for failed points.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    index: usize,
    config_hash: &'a str,
    status: &'a str,
    protocol: &'a str,
    distance_km: f64,
    v_a_snu: f64,
    delta0_nu: f64,
    n_total: f64,
    eta_t: Option<f64>,
    ell_over_n: Option<f64>,
    ell_over_n_raw: Option<f64>,
    rate_bps: Option<f64>,
    sdp_primal_bits: Option<f64>,
    certified_bound_bits: Option<f64>,
    delta_w_bits: Option<f64>,
    delta_eps_bar_bits: Option<f64>,
    ec_leak_per_n_bits: Option<f64>,
    p_pass: Option<f64>,
    h_z_bits: Option<f64>,
    h_z_given_x_bits: Option<f64>,
    w: Option<f64>,
    mu_n: Option<f64>,
    fw_iterations: Option<usize>,
    fw_gap_bits: Option<f64>,
    error: &'a str,
    wall_time_s: f64,
}

/// Column order of the CSV output.
pub const CSV_COLUMNS: &[&str] = &[
    "index", "config_hash", "status", "protocol", "distance_km", "v_a_snu", "delta0_nu", "n_total", "eta_t", "ell_over_n", "ell_over_n_raw",
    "rate_bps", "sdp_primal_bits", "certified_bound_bits", "delta_w_bits", "delta_eps_bar_bits", "ec_leak_per_n_bits", "p_pass", "h_z_bits",
    "h_z_given_x_bits", "w", "mu_n", "fw_iterations", "fw_gap_bits", "error", "wall_time_s",
];

pub fn write_csv(cfg: &RunConfig, records: &[RunRecord], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let protocol = match cfg.protocol {
        Modulation::Qpsk => "qpsk",
        Modulation::Qam16 => "16qam",
    };
    for r in records {
        let rep = r.report.as_ref();
        let res = rep.map(|x| &x.result);
        w.serialize(CsvRow {
            index: r.index,
            config_hash: &r.config_hash,
            status: &r.status,
            protocol,
            distance_km: r.point.distance_km,
            v_a_snu: r.point.v_a_snu,
            delta0_nu: r.point.delta0_nu,
            n_total: r.point.n_total,
            eta_t: r.eta_t,
            ell_over_n: res.map(|x| x.ell_over_n),
            ell_over_n_raw: res.map(|x| x.ell_over_n_raw),
            rate_bps: res.map(|x| x.rate_bps),
            sdp_primal_bits: res.map(|x| x.sdp_value),
            certified_bound_bits: res.map(|x| x.certified_lower_bound),
            delta_w_bits: res.map(|x| x.delta_w),
            delta_eps_bar_bits: res.map(|x| x.delta_eps_bar),
            ec_leak_per_n_bits: res.map(|x| x.ec_leak_per_n),
            p_pass: rep.map(|x| x.p_pass),
            h_z_bits: rep.map(|x| x.h_z),
            h_z_given_x_bits: rep.map(|x| x.h_z_given_x),
            w: res.map(|x| x.w),
            mu_n: rep.map(|x| x.mu_n),
            fw_iterations: rep.map(|x| x.fw_iterations),
            fw_gap_bits: rep.map(|x| x.fw_gap),
            error: r.error.as_deref().unwrap_or(""),
            wall_time_s: r.wall_time_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct JsonOutput {
    pub config: RunConfig,
    pub config_hash: String,
    pub records: Vec<RunRecord>,
}

pub fn write_json(cfg: &RunConfig, records: &[RunRecord], out: impl std::io::Write) -> Result<()> {
    let doc = JsonOutput { config: cfg.clone(), config_hash: cfg.hash(), records: records.to_vec() };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

/// Writes records to `path` (or stdout when `None`) in the requested format.
pub fn emit(cfg: &RunConfig, records: &[RunRecord], path: Option<&Path>, format: OutputFormat) -> Result<()> {
    let sink: Box<dyn std::io::Write> = match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        OutputFormat::Csv => write_csv(cfg, records, sink),
        OutputFormat::Json => write_json(cfg, records, sink),
    }
}

/// Outcome of the `simulate` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config_hash: String,
    pub rounds: usize,
    pub test_rounds: usize,
    pub energy: EnergyOutcome,
    pub acceptance: AcceptanceOutcome,
    pub p_pass: f64,
    pub histogram: Vec<Vec<u64>>,
    pub moments: Vec<MomentEstimate>,
}

/// Simulates the first grid point and runs the energy and acceptance tests on
/// its test rounds.
pub fn run_simulation(cfg: &RunConfig) -> Result<(SimOutput, SimSummary)> {
    cfg.validate()?;
    let p = cfg.points()[0];
    let sim = cfg.sim_config(&p)?;
    let out = simulate(&sim)?;
    let test = out.test_samples();
    let m = test.len().max(1) as f64;
    let plan = energy_test_plan(&sim.constellation, &sim.channel, &sim.detector, cfg.epsilon.eps_et, m)?;
    let energy = energy_test(&test.records, plan.beta_test, plan.l_t);
    let moments = displaced_moments_from_samples(&test, &sim.detector)?;
    // Expected moments under the configured channel with slack from the
    // simulated per-state test counts.
    let (n, n2) = analytic_moments(&sim.channel);
    let nc = cfg.cutoff as f64;
    let counts = test.counts();
    let expected: Vec<MomentBounds> = counts
        .iter()
        .map(|&c| {
            let k_t = (c as f64).max(1.0);
            let mu_n = acceptance_mu(nc, k_t, cfg.epsilon.eps_at)?;
            let mu_n2 = acceptance_mu(nc * nc, k_t, cfg.epsilon.eps_at)?;
            Ok(MomentBounds { n, n2, mu_n, mu_n2, norm_n: nc, norm_n2: nc * nc })
        })
        .collect::<Result<_>>()?;
    let acceptance = acceptance_test(&moments, &expected, 0.0)?;
    let summary = SimSummary {
        config_hash: cfg.hash(),
        rounds: sim.rounds,
        test_rounds: out.num_test,
        energy,
        acceptance,
        p_pass: out.key.p_pass,
        histogram: out.key.histogram.clone(),
        moments,
    };
    Ok((out, summary))
}

/// Outcome of the `estimate` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub records: usize,
    pub counts: Vec<u64>,
    pub gaussian: WorstCaseParams,
    pub k_t: f64,
    pub moments: Vec<MomentEstimate>,
}

/// Gaussian-channel and displaced-moment estimates from heterodyne records,
/// interpreted with the configured constellation and detector.
pub fn run_estimation(cfg: &RunConfig, samples: &SampleSet) -> Result<EstimateSummary> {
    let p = cfg.points()[0];
    let k = cfg.key_rate_config(&p)?;
    let c = k.constellation()?;
    let counts = samples.counts();
    let k_t = counts.iter().copied().min().unwrap_or(0) as f64;
    let (t, xi) = estimate_t_xi(samples, &c, &k.detector)?;
    let gaussian = worst_case(t, xi, cfg.epsilon.eps_pe, &k.detector, c.modulation_variance, k_t.max(1.0))?;
    let moments = displaced_moments_from_samples(samples, &k.detector)?;
    Ok(EstimateSummary { records: samples.len(), counts, gaussian, k_t, moments })
}

/// Key rate of a single-point configuration; moments come from `samples` when
/// given.
pub fn run_keyrate(cfg: &RunConfig, samples: Option<&SampleSet>) -> Result<Vec<RunRecord>> {
    if !cfg.sweep.active().is_empty() {
        return Err(Error::Config("keyrate evaluates a single point; use scan for sweeps".into()));
    }
    let Some(samples) = samples else { return run_scan(cfg) };
    cfg.validate()?;
    let p = cfg.points()[0];
    let k = cfg.key_rate_config(&p)?;
    let t = Instant::now();
    let res = displaced_moments_from_samples(samples, &k.detector).and_then(|m| {
        let cache = cfg.cache_dir.as_ref().map(RegionCache::new);
        evaluate(&k, &MomentSource::Estimated(m), cache.as_ref())
    });
    let wall_time_s = t.elapsed().as_secs_f64();
    let (status, error, report) = match res {
        Ok(r) => ("ok", None, Some(r)),
        Err(e) => ("failed", Some(e.to_string()), None),
    };
    Ok(vec![RunRecord {
        index: 0,
        config_hash: cfg.hash(),
        status: status.into(),
        error,
        point: p,
        eta_t: Some(k.channel.eta_t),
        report,
        wall_time_s,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig { protocol: Modulation::Qpsk, v_a_snu: 0.49, distance_km: 10.0, cutoff: 4, fw_max_iters: 8, ..RunConfig::default() }
    }

    #[test]
    fn empty_sweep_gives_one_point() {
        assert_eq!(small().points().len(), 1);
    }

    #[test]
    fn grid_is_row_major() {
        let cfg = RunConfig { sweep: SweepAxes { distance_km: vec![5.0, 10.0, 15.0], v_a_snu: vec![0.4, 0.5], ..Default::default() }, ..small() };
        let pts = cfg.points();
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[1].distance_km, pts[1].v_a_snu), (5.0, 0.5));
        assert_eq!((pts[2].distance_km, pts[2].v_a_snu), (10.0, 0.4));
    }

    #[test]
    fn too_many_axes_rejected() {
        let cfg = RunConfig {
            sweep: SweepAxes { distance_km: vec![1.0], v_a_snu: vec![1.0], delta0_nu: vec![0.0], ..Default::default() },
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"unknown_key": 1}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"eta_d": 1.5}"#), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = small();
        let mut b = small();
        assert_eq!(a.hash(), b.hash());
        b.xi_snu = 0.02;
        assert_ne!(a.hash(), b.hash());
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap().hash(), a.hash());
    }

    #[test]
    fn failed_points_are_kept() {
        // A post-selection band wider than the grid spacing is rejected per point.
        let cfg = RunConfig { protocol: Modulation::Qam16, v_a_snu: 2.0, sweep: SweepAxes { distance_km: vec![10.0], ..Default::default() }, ..small() };
        let bad = ScanPoint { delta0_nu: 100.0, ..cfg.points()[0] };
        let rec = match evaluate_point(&cfg, &bad, None) {
            Err(e) => RunRecord { index: 0, config_hash: cfg.hash(), status: "failed".into(), error: Some(e.to_string()), point: bad, eta_t: None, report: None, wall_time_s: 0.0 },
            Ok(_) => panic!("expected failure"),
        };
        let mut buf = Vec::new();
        write_csv(&cfg, &[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let row = lines.next().unwrap();
        assert!(row.contains(",failed,") && row.contains(",,,"));
    }

    #[test]
    fn scan_rows_and_json_round_trip() {
        let cfg = RunConfig { sweep: SweepAxes { distance_km: vec![5.0, 10.0, 15.0], ..Default::default() }, ..small() };
        let records = run_scan(&cfg).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.ok() && r.config_hash == cfg.hash()));
        let mut csv_buf = Vec::new();
        write_csv(&cfg, &records, &mut csv_buf).unwrap();
        assert_eq!(String::from_utf8(csv_buf).unwrap().lines().count(), 4);
        let mut json_buf = Vec::new();
        write_json(&cfg, &records, &mut json_buf).unwrap();
        let back: JsonOutput = serde_json::from_slice(&json_buf).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.records.len(), 3);
        for (a, b) in back.records.iter().zip(&records) {
            let (x, y) = (a.report.as_ref().unwrap(), b.report.as_ref().unwrap());
            assert!((x.result.rate_bps - y.result.rate_bps).abs() <= 1e-9 * y.result.rate_bps.abs().max(1.0));
        }
    }
}
