//! Experiment configuration, sweep drivers and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::capacity::{
    achieved_capacity, capacity_near_r_closed_form, capacity_near_s_or_d_closed_form,
    geometric_grid, mean_rician_capacity, multi_capacity_lower_bound, multi_capacity_upper_bound,
    rho_grid, scaling_order_estimate, ChannelSource, Edge, RicianSpec, Strategy,
};
use crate::error::{Error, Result};
use crate::geometry::{Deployment, Scenario};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Everything a report run needs. Powers and gains are linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario<f64>,
    pub deployments: Vec<Deployment>,
    pub m_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub strategy: Strategy,
    /// Rician factors in dB; `inf` means pure LoS.
    pub tau_list_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Element counts for slope fits.
    pub scaling_grid: Vec<usize>,
    /// Split step for the allocation report.
    pub rho_step: f64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            deployments: Deployment::ALL.to_vec(),
            m_grid: vec![50, 100, 150, 200, 300, 400, 500, 700, 1000, 1500, 2000],
            rho_grid: vec![0.25],
            strategy: Strategy::ClosedForm,
            tau_list_db: vec![0.0, 10.0, 20.0],
            trials: 1000,
            seed: 1,
            scaling_grid: geometric_grid(12, 18),
            rho_step: 0.01,
            output_path: None,
        }
    }
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

/// Parses a deployment list; `all` expands to every deployment.
pub fn parse_deployments(value: &str) -> Result<Vec<Deployment>> {
    if value.trim() == "all" {
        return Ok(Deployment::ALL.to_vec());
    }
    let mut out: Vec<Deployment> = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let d: Deployment = part
            .parse()
            .map_err(|_| Error::Config(format!("unknown deployment '{part}'")))?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let grids: [(&str, bool, bool); 5] = [
            ("deployments", self.deployments.is_empty(), true),
            ("m_grid", self.m_grid.is_empty(), strictly_increasing(&self.m_grid)),
            ("rho_grid", self.rho_grid.is_empty(), strictly_increasing(&self.rho_grid)),
            ("tau_db", self.tau_list_db.is_empty(), strictly_increasing(&self.tau_list_db)),
            (
                "scaling_grid",
                self.scaling_grid.is_empty(),
                strictly_increasing(&self.scaling_grid),
            ),
        ];
        for (name, empty, increasing) in grids {
            if empty {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if !increasing {
                return Err(Error::Config(format!("{name} must be strictly increasing")));
            }
        }
        if let Some(r) = self.rho_grid.iter().find(|&&r| !(r > 0.0 && r < 0.5)) {
            return Err(Error::InvalidSplit(*r));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Keys ending in `_dbm` / `_db`
    /// are converted to linear units here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.scenario;
        let f = |v: &str| parse_one::<f64>(key, v);
        match key {
            "half_distance_m" => s.half_distance = f(value)?,
            "altitude_relay_panel_m" => s.altitude_relay_panel = f(value)?,
            "altitude_edge_panel_m" => s.altitude_edge_panel = f(value)?,
            "downtilt_rad" => s.downtilt = f(value)?,
            "downtilt_deg" => s.downtilt = f(value)?.to_radians(),
            "wavelength_m" => s.wavelength = f(value)?,
            "ref_gain" => s.ref_gain = f(value)?,
            "ref_gain_db" => s.ref_gain = db_to_linear(f(value)?),
            "pathloss_exponent" => s.pathloss_exponent = f(value)?,
            "power_source_w" => s.power_source = f(value)?,
            "power_source_dbm" => s.power_source = dbm_to_watts(f(value)?),
            "power_relay_w" => s.power_relay = f(value)?,
            "power_relay_dbm" => s.power_relay = dbm_to_watts(f(value)?),
            "power_dbm" => {
                s.power_source = dbm_to_watts(f(value)?);
                s.power_relay = s.power_source;
            }
            "noise_power_w" => s.noise_power = f(value)?,
            "noise_power_dbm" => s.noise_power = dbm_to_watts(f(value)?),
            "element_spacing_m" => s.element_spacing = f(value)?,
            "deployments" => self.deployments = parse_deployments(value)?,
            "m_grid" => self.m_grid = parse_list(key, value)?,
            "rho_grid" => self.rho_grid = parse_list(key, value)?,
            "strategy" => self.strategy = value.trim().parse()?,
            "tau_db" => self.tau_list_db = parse_list(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "scaling_grid" => self.scaling_grid = parse_list(key, value)?,
            "rho_step" => self.rho_step = f(value)?,
            "output" => {
                let v = value.trim();
                self.output_path = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses the `key = value` text format; `#` starts a comment.
    /// Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, &e))?;
        Self::parse(&text)
    }

    /// Text form with linear units; `parse(emit())` reproduces `self`.
    pub fn emit(&self) -> String {
        fn list<T: std::fmt::Debug>(v: &[T]) -> String {
            v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
        }
        let s = &self.scenario;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("half_distance_m", format!("{:?}", s.half_distance));
        kv("altitude_relay_panel_m", format!("{:?}", s.altitude_relay_panel));
        kv("altitude_edge_panel_m", format!("{:?}", s.altitude_edge_panel));
        kv("downtilt_rad", format!("{:?}", s.downtilt));
        kv("wavelength_m", format!("{:?}", s.wavelength));
        kv("ref_gain", format!("{:?}", s.ref_gain));
        kv("pathloss_exponent", format!("{:?}", s.pathloss_exponent));
        kv("power_source_w", format!("{:?}", s.power_source));
        kv("power_relay_w", format!("{:?}", s.power_relay));
        kv("noise_power_w", format!("{:?}", s.noise_power));
        kv("element_spacing_m", format!("{:?}", s.element_spacing));
        kv(
            "deployments",
            self.deployments
                .iter()
                .map(|d| d.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("m_grid", list(&self.m_grid));
        kv("rho_grid", list(&self.rho_grid));
        kv("strategy", self.strategy.as_str().to_string());
        kv("tau_db", list(&self.tau_list_db));
        kv("trials", self.trials.to_string());
        kv("seed", self.seed.to_string());
        kv("scaling_grid", list(&self.scaling_grid));
        kv("rho_step", format!("{:?}", self.rho_step));
        if let Some(p) = &self.output_path {
            kv("output", p.display().to_string());
        }
        out
    }
}

fn io_error(path: &Path, e: &dyn std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub deployment: Deployment,
    pub m: usize,
    pub rho: Option<f64>,
    pub tau_db: Option<f64>,
    pub trial_count: usize,
    pub rate_sr: f64,
    pub rate_rd: f64,
    pub capacity: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub alignment_dev_rad: Option<f64>,
    pub seed: Option<u64>,
}

pub const CSV_HEADER: [&str; 12] = [
    "deployment",
    "M",
    "rho",
    "tau_db",
    "trial_count",
    "rate_SR",
    "rate_RD",
    "capacity",
    "lower_bound",
    "upper_bound",
    "alignment_dev_rad",
    "seed",
];

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.9e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl ResultRow {
    fn fields(&self) -> [String; 12] {
        [
            self.deployment.as_str().to_string(),
            self.m.to_string(),
            opt_num(self.rho),
            opt_num(self.tau_db),
            self.trial_count.to_string(),
            num(self.rate_sr),
            num(self.rate_rd),
            num(self.capacity),
            opt_num(self.lower_bound),
            opt_num(self.upper_bound),
            opt_num(self.alignment_dev_rad),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("malformed CSV field {what}"));
        let get = |i: usize| rec.get(i).ok_or_else(|| bad(CSV_HEADER[i]));
        let f = |i: usize| -> Result<f64> { get(i)?.parse().map_err(|_| bad(CSV_HEADER[i])) };
        let opt = |i: usize| -> Result<Option<f64>> {
            let v = get(i)?;
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(CSV_HEADER[i]))
            }
        };
        Ok(Self {
            deployment: get(0)?.parse().map_err(|_| bad("deployment"))?,
            m: get(1)?.parse().map_err(|_| bad("M"))?,
            rho: opt(2)?,
            tau_db: opt(3)?,
            trial_count: get(4)?.parse().map_err(|_| bad("trial_count"))?,
            rate_sr: f(5)?,
            rate_rd: f(6)?,
            capacity: f(7)?,
            lower_bound: opt(8)?,
            upper_bound: opt(9)?,
            alignment_dev_rad: opt(10)?,
            seed: match get(11)? {
                "" => None,
                v => Some(v.parse().map_err(|_| bad("seed"))?),
            },
        })
    }

    /// Whether `capacity` recomputes as half the smaller rate, allowing for
    /// the 10-digit rounding of the written fields.
    pub fn is_consistent(&self) -> bool {
        let expect = 0.5 * self.rate_sr.min(self.rate_rd);
        (self.capacity - expect).abs() <= 1e-9 * expect.abs().max(1e-30)
    }
}

/// Serializes rows with the header.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows)?).map_err(|e| io_error(path, &e))
}

/// Parses CSV text and rejects rows whose capacity does not follow from
/// their rates.
pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd
        .headers()
        .map_err(|e| Error::Config(format!("CSV: {e}")))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("CSV: {e}")))?;
        let row = ResultRow::from_record(&rec)?;
        if !row.is_consistent() {
            return Err(Error::Config(format!(
                "row {}: capacity {} is not half the smaller rate",
                i + 1,
                row.capacity
            )));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, &e))?;
    rows_from_csv(&text)
}

/// `(deployment, M, rho)` tuples in output order; multi expands over the
/// split grid.
fn grid_points(cfg: &ExperimentConfig) -> Vec<(Deployment, usize, Option<f64>)> {
    let mut pts = Vec::new();
    for &d in &cfg.deployments {
        for &m in &cfg.m_grid {
            if d == Deployment::Multi {
                pts.extend(cfg.rho_grid.iter().map(|&r| (d, m, Some(r))));
            } else {
                pts.push((d, m, None));
            }
        }
    }
    pts
}

fn scenario_at(cfg: &ExperimentConfig, m: usize, rho: Option<f64>) -> Scenario<f64> {
    let s = cfg.scenario.clone().with_elements(m);
    match rho {
        Some(r) => s.with_split(r),
        None => s,
    }
}

fn skippable(e: &Error) -> bool {
    matches!(e, Error::EmptyPanel { .. } | Error::InvalidSplit(_))
}

/// LoS comparison of every deployment over the element grid.
pub fn run_deployment_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let rows: Vec<Option<ResultRow>> = grid_points(cfg)
        .into_par_iter()
        .map(|(d, m, rho)| {
            let s = scenario_at(cfg, m, rho);
            let r = match achieved_capacity(&s, d, cfg.strategy, &ChannelSource::Los) {
                Ok(r) => r,
                Err(e) if skippable(&e) => {
                    warn!("skipping {d} M={m}: {e}");
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            Ok(Some(ResultRow {
                deployment: d,
                m,
                rho: r.rho,
                tau_db: None,
                trial_count: 1,
                rate_sr: r.rate_sr,
                rate_rd: r.rate_rd,
                capacity: r.capacity,
                lower_bound: r.lower_bound,
                upper_bound: r.upper_bound,
                alignment_dev_rad: r.favorable.map(|f| f.alignment),
                seed: None,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Mean rates over seeded Rician draws for every grid point and factor.
/// Every point uses the configured seed, so factors share their draws.
pub fn run_rician_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut pts = Vec::new();
    for (d, m, rho) in grid_points(cfg) {
        pts.extend(cfg.tau_list_db.iter().map(|&t| (d, m, rho, t)));
    }
    let mut rows = Vec::with_capacity(pts.len());
    // trials already run in parallel inside each point
    for (d, m, rho, tau_db) in pts {
        let s = scenario_at(cfg, m, rho);
        let spec = RicianSpec::new(db_to_linear(tau_db), cfg.seed);
        let summary = match mean_rician_capacity(&s, d, cfg.strategy, &spec, cfg.trials) {
            Ok(v) => v,
            Err(e) if skippable(&e) => {
                warn!("skipping {d} M={m}: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let multi = d == Deployment::Multi;
        let alignment = if multi {
            achieved_capacity(&s, d, cfg.strategy, &ChannelSource::Los)?
                .favorable
                .map(|f| f.alignment)
        } else {
            None
        };
        rows.push(ResultRow {
            deployment: d,
            m,
            rho,
            tau_db: Some(tau_db),
            trial_count: cfg.trials,
            rate_sr: summary.mean_rate_sr,
            rate_rd: summary.mean_rate_rd,
            capacity: summary.capacity,
            lower_bound: multi.then(|| multi_capacity_lower_bound(&s, m, s.split)),
            upper_bound: multi.then(|| multi_capacity_upper_bound(&s, m, s.split)),
            alignment_dev_rad: alignment,
            seed: Some(cfg.seed),
        });
    }
    Ok(rows)
}

/// One fitted slope against its expected scaling order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingLine {
    pub quantity: &'static str,
    pub slope: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl ScalingLine {
    pub fn passes(&self) -> bool {
        (self.slope - self.expected).abs() < self.tolerance
    }
}

/// Slopes of the closed-form capacities and the cooperative bounds
/// (split 1/4) against `log2 M` over the scaling grid.
pub fn run_scaling_report(cfg: &ExperimentConfig) -> Result<Vec<ScalingLine>> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let g = &cfg.scaling_grid;
    let fit = |f: &dyn Fn(usize) -> f64| scaling_order_estimate(|m| Ok(f(m)), g);
    let line = |quantity, slope, expected, tolerance| ScalingLine {
        quantity,
        slope,
        expected,
        tolerance,
    };
    Ok(vec![
        line(
            "near-r",
            fit(&|m| capacity_near_r_closed_form(s, m).capacity)?,
            1.0,
            0.02,
        ),
        line(
            "near-s",
            fit(&|m| capacity_near_s_or_d_closed_form(s, m, Edge::Source).capacity)?,
            0.0,
            0.01,
        ),
        line(
            "near-d",
            fit(&|m| capacity_near_s_or_d_closed_form(s, m, Edge::Destination).capacity)?,
            0.0,
            0.01,
        ),
        line(
            "multi-upper",
            fit(&|m| multi_capacity_upper_bound(s, m, 0.25))?,
            2.0,
            0.05,
        ),
        line(
            "multi-lower",
            fit(&|m| multi_capacity_lower_bound(s, m, 0.25))?,
            2.0,
            0.05,
        ),
    ])
}

pub fn scaling_to_csv(lines: &[ScalingLine]) -> String {
    let mut out = String::from("quantity,slope,expected,tolerance,pass\n");
    for l in lines {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            l.quantity,
            num(l.slope),
            l.expected,
            l.tolerance,
            l.passes()
        );
    }
    out
}

/// Best split per element count.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoOptimum {
    pub m: usize,
    pub achieved: f64,
    pub upper_bound: f64,
}

/// Cooperative deployment over the split grid `rho_step, 2 rho_step, ...`
/// for every element count; rows plus the argmax of each objective.
pub fn run_rho_report(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<RhoOptimum>)> {
    cfg.validate()?;
    let grid = rho_grid(cfg.rho_step)?;
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.deployments = vec![Deployment::Multi];
    sweep_cfg.rho_grid = grid;
    let rows = run_deployment_sweep(&sweep_cfg)?;
    let optima = cfg
        .m_grid
        .iter()
        .filter_map(|&m| {
            let of = |key: fn(&ResultRow) -> f64| {
                rows.iter()
                    .filter(|r| r.m == m)
                    .fold(None, |best: Option<(f64, f64)>, r| {
                        let v = key(r);
                        match best {
                            Some((_, bv)) if bv >= v => best,
                            _ => Some((r.rho.unwrap_or(f64::NAN), v)),
                        }
                    })
                    .map(|(rho, _)| rho)
            };
            Some(RhoOptimum {
                m,
                achieved: of(|r| r.capacity)?,
                upper_bound: of(|r| r.upper_bound.unwrap_or(f64::NAN))?,
            })
        })
        .collect();
    Ok((rows, optima))
}

/// Where the cooperative deployment overtakes the single panel near R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    /// Smallest grid point from which multi stays at or above near-R.
    pub grid_m: usize,
    /// Previous grid point (or `grid_m` itself when it is the first).
    pub bracket_low: usize,
    /// Smallest element count in `(bracket_low, grid_m]` where multi is at
    /// least near-R, found by bisection.
    pub refined_m: usize,
}

/// Locates the crossover of the achieved cooperative capacity (split
/// `rho`) over the near-R closed form on a grid, then bisects inside the
/// bracketing interval. `None` if multi never stays ahead.
pub fn find_crossover(
    s: &Scenario<f64>,
    grid: &[usize],
    rho: f64,
    strategy: Strategy,
) -> Result<Option<Crossover>> {
    let ahead = |m: usize| -> Result<Option<bool>> {
        let sc = s.clone().with_elements(m).with_split(rho);
        match achieved_capacity(&sc, Deployment::Multi, strategy, &ChannelSource::Los) {
            Ok(r) => Ok(Some(r.capacity >= capacity_near_r_closed_form(s, m).capacity)),
            Err(e) if skippable(&e) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let flags = grid
        .par_iter()
        .map(|&m| ahead(m))
        .collect::<Result<Vec<_>>>()?;
    let mut idx = None;
    for i in (0..grid.len()).rev() {
        if flags[i] == Some(true) {
            idx = Some(i);
        } else {
            break;
        }
    }
    let Some(i) = idx else { return Ok(None) };
    let hi = grid[i];
    if i == 0 {
        return Ok(Some(Crossover {
            grid_m: hi,
            bracket_low: hi,
            refined_m: hi,
        }));
    }
    let (mut lo, mut hi_b) = (grid[i - 1], hi);
    while hi_b - lo > 1 {
        let mid = lo + (hi_b - lo) / 2;
        if ahead(mid)? == Some(true) {
            hi_b = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(Crossover {
        grid_m: hi,
        bracket_low: grid[i - 1],
        refined_m: hi_b,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_link() {
        let c = ExperimentConfig::default();
        let s = &c.scenario;
        assert_eq!(s.half_distance, 500.0);
        assert!((s.ref_gain - db_to_linear(-30.0)).abs() < 1e-18);
        assert!((s.power_source - dbm_to_watts(30.0)).abs() < 1e-15);
        assert!((s.noise_power - dbm_to_watts(-90.0)).abs() < 1e-27);
        assert_eq!(s.element_spacing, s.wavelength / 4.0);
        c.validate().unwrap();
    }

    #[test]
    fn units_convert_at_parse_time() {
        let c = ExperimentConfig::parse("power_dbm = 20\nref_gain_db = -20 # comment\n").unwrap();
        assert!((c.scenario.power_source - 0.1).abs() < 1e-15);
        assert!((c.scenario.power_relay - 0.1).abs() < 1e-15);
        assert!((c.scenario.ref_gain - 0.01).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse("m_grid = 100, 50").is_err());
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("rho_grid = 0.6").is_err());
        assert!(ExperimentConfig::parse("deployments = near-x").is_err());
    }

    #[test]
    fn csv_blank_fields_and_header() {
        let row = ResultRow {
            deployment: Deployment::NearR,
            m: 10,
            rho: None,
            tau_db: None,
            trial_count: 1,
            rate_sr: 12.0,
            rate_rd: 13.0,
            capacity: 6.0,
            lower_bound: None,
            upper_bound: None,
            alignment_dev_rad: None,
            seed: None,
        };
        let text = rows_to_csv(std::slice::from_ref(&row)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "near-r,10,,,1,1.200000000e1,1.300000000e1,6.000000000e0,,,,"
        );
        assert_eq!(rows_from_csv(&text).unwrap(), vec![row.clone()]);
        let bad = text.replace("6.000000000e0", "7.000000000e0");
        assert!(rows_from_csv(&bad).is_err());
    }
}
