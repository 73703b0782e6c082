//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comment
//! grid.n_points = 128
//! [time]
//! dt = 5e-4
//! ```
//! A `[section]` header prefixes the keys that follow it. Every key may
//! appear at most once; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use cssigma::dynamics::{Model, Scheme, SourceForm, CFL_FACTOR};
use cssigma::fields::{check_coupling, DEFAULT_SPHERE_TOL};
use cssigma::initdata::{PresetParams, PRESETS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn at(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        msg: msg.into(),
    }
}

/// Raw parsed entries: key -> (value, line number).
#[derive(Debug, Clone, Default)]
pub struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    pub fn parse(text: &str) -> Result<Entries, ConfigError> {
        let mut map = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, "unterminated section header"))?
                    .trim();
                if !valid_key(name) {
                    return Err(at(line, format!("bad section name '{name}'")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| at(line, format!("expected 'key = value', got '{body}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(at(line, format!("bad key '{k}'")));
            }
            if v.is_empty() {
                return Err(at(line, format!("missing value for '{k}'")));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let v = v.trim_matches('"').to_string();
            if let Some((_, first)) = map.insert(key.clone(), (v, line)) {
                return Err(at(
                    line,
                    format!("duplicate key '{key}' (first on line {first})"),
                ));
            }
        }
        Ok(Entries { map })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<(T, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(|x| Some((x, line)))
                .map_err(|_| at(line, format!("cannot parse '{v}' for {key}"))),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "on" => Ok(Some(true)),
                "false" | "no" | "off" => Ok(Some(false)),
                _ => Err(at(line, format!("expected a boolean for {key}, got '{v}'"))),
            },
        }
    }
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.')
            .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Preset { name: String, params: PresetParams },
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_points: usize,
    pub side_length: f64,
    pub dt: f64,
    pub duration: f64,
    pub scheme: Scheme,
    pub kappa: f64,
    pub m_bound: f64,
    /// Allowed `max ||φ|² − 1|` and tangency defect of the initial data.
    pub sphere_tol: f64,
    pub data: DataSource,
    pub output_dir: PathBuf,
    /// Steps between snapshots; 0 writes only the final state.
    pub snapshot_stride: usize,
    pub diagnostics_stride: usize,
    pub s: f64,
    pub seed: u64,
    pub model: Model,
    pub picard_max_iterations: usize,
    pub picard_tol: f64,
    /// Non-fatal notes gathered during validation.
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_points: 128,
            side_length: 20.0,
            dt: 5e-4,
            duration: 1.0,
            scheme: Scheme::Rk4,
            kappa: 1.0,
            m_bound: 1.0,
            sphere_tol: DEFAULT_SPHERE_TOL,
            data: DataSource::Preset {
                name: "bump".into(),
                params: PresetParams::default(),
            },
            output_dir: PathBuf::from("out"),
            snapshot_stride: 0,
            diagnostics_stride: 100,
            s: 1.5,
            seed: 0,
            model: Model::default(),
            picard_max_iterations: 30,
            picard_tol: 1e-10,
            warnings: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Relative paths in the file are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_text(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::Snapshot(p) = &mut cfg.data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut e = Entries::parse(text)?;
        let mut c = RunConfig::default();

        let n_line = e.num::<usize>("grid.n_points")?.map(|(n, l)| {
            c.n_points = n;
            l
        });
        if let Some((v, _)) = e.num("grid.side_length")? {
            c.side_length = v;
        }
        let dt_line = e.num::<f64>("time.dt")?.map(|(v, l)| {
            c.dt = v;
            l
        });
        let t_line = e.num::<f64>("time.T")?.map(|(v, l)| {
            c.duration = v;
            l
        });
        if let Some((v, line)) = e.take("time.scheme") {
            c.scheme = match v.as_str() {
                "rk4" => Scheme::Rk4,
                "trig" => Scheme::Trig,
                _ => return Err(at(line, format!("unknown scheme '{v}' (rk4 or trig)"))),
            };
        }
        let kappa_line = e.num::<f64>("physics.kappa")?.map(|(v, l)| {
            c.kappa = v;
            l
        });
        if let Some((v, _)) = e.num("physics.m_bound")? {
            c.m_bound = v;
        }
        if let Some((v, line)) = e.num::<f64>("physics.sphere_tol")? {
            if !(v > 0.0 && v.is_finite()) {
                return Err(at(line, "sphere_tol must be positive"));
            }
            c.sphere_tol = v;
        }

        let mut params = PresetParams::default();
        if let Some((v, line)) = e.num::<f64>("data.amplitude")? {
            if !v.is_finite() {
                return Err(at(line, "amplitude must be finite"));
            }
            params.amplitude = v;
        }
        if let Some((v, _)) = e.num("data.width")? {
            params.width = Some(v);
        }
        let cx = e.num::<f64>("data.center_x")?;
        let cy = e.num::<f64>("data.center_y")?;
        match (cx, cy) {
            (Some((x, _)), Some((y, _))) => params.center = Some((x, y)),
            (None, None) => {}
            (Some((_, l)), None) | (None, Some((_, l))) => {
                return Err(at(
                    l,
                    "data.center_x and data.center_y must be given together",
                ))
            }
        }
        if let Some((v, _)) = e.num("data.spin")? {
            params.spin = v;
        }
        if let Some((v, _)) = e.num("seeds.data")? {
            c.seed = v;
        }
        params.rng_seed = c.seed;
        let preset = e.take("data.preset");
        let snapshot = e.take("data.snapshot");
        c.data = match (preset, snapshot) {
            (Some(_), Some((_, line))) => {
                return Err(at(
                    line,
                    "data.preset and data.snapshot are mutually exclusive",
                ))
            }
            (None, Some((p, _))) => DataSource::Snapshot(PathBuf::from(p)),
            (Some((name, line)), None) => {
                if !PRESETS.contains(&name.as_str()) {
                    return Err(at(
                        line,
                        format!("unknown preset '{name}' (known: {})", PRESETS.join(", ")),
                    ));
                }
                DataSource::Preset { name, params }
            }
            (None, None) => DataSource::Preset {
                name: "bump".into(),
                params,
            },
        };

        if let Some((v, _)) = e.take("output.directory") {
            c.output_dir = PathBuf::from(v);
        }
        if let Some((v, _)) = e.num("output.snapshot_stride")? {
            c.snapshot_stride = v;
        }
        if let Some((v, line)) = e.num::<usize>("output.diagnostics_stride")? {
            if v == 0 {
                return Err(at(line, "diagnostics_stride must be at least 1"));
            }
            c.diagnostics_stride = v;
        }
        let s_line = e.num::<f64>("norms.s")?.map(|(v, l)| {
            c.s = v;
            l
        });

        if let Some(v) = e.boolean("model.nonlinear")? {
            c.model.nonlinear = v;
        }
        if let Some(v) = e.boolean("model.dealias")? {
            c.model.dealias = v;
        }
        if let Some((v, line)) = e.take("model.source_form") {
            c.model.source_form = match v.as_str() {
                "derived" => SourceForm::Derived,
                "as_printed" => SourceForm::AsPrinted,
                _ => return Err(at(line, format!("unknown source form '{v}'"))),
            };
        }
        if let Some((v, _)) = e.num("picard.max_iterations")? {
            c.picard_max_iterations = v;
        }
        if let Some((v, _)) = e.num("picard.tol")? {
            c.picard_tol = v;
        }

        if let Some((k, (_, line))) = e.map.into_iter().next() {
            return Err(at(line, format!("unknown key '{k}'")));
        }

        let line_or = |l: Option<usize>, msg: String| match l {
            Some(line) => ConfigError::Line { line, msg },
            None => ConfigError::Invalid(msg),
        };
        if !(c.n_points >= 8 && c.n_points % 2 == 0) {
            return Err(line_or(
                n_line,
                format!("n_points must be even and >= 8, got {}", c.n_points),
            ));
        }
        if !(c.side_length > 0.0 && c.side_length.is_finite()) {
            return Err(ConfigError::Invalid("side_length must be positive".into()));
        }
        if !(c.dt > 0.0 && c.dt.is_finite()) {
            return Err(line_or(
                dt_line,
                format!("dt must be positive, got {}", c.dt),
            ));
        }
        if !(c.duration > 0.0 && c.duration.is_finite()) {
            return Err(line_or(
                t_line,
                format!("T must be positive, got {}", c.duration),
            ));
        }
        if c.scheme == Scheme::Rk4 {
            let limit = CFL_FACTOR * c.side_length / c.n_points as f64;
            if c.dt > limit {
                return Err(line_or(
                    dt_line,
                    format!("dt = {} violates the CFL limit {limit:.6e} for rk4", c.dt),
                ));
            }
        }
        check_coupling(c.kappa, c.m_bound).map_err(|e| line_or(kappa_line, e.to_string()))?;
        if !(c.picard_tol > 0.0) {
            return Err(ConfigError::Invalid("picard.tol must be positive".into()));
        }
        if !c.s.is_finite() {
            return Err(line_or(s_line, "s must be finite".into()));
        }
        if c.s <= 1.0 {
            c.warnings.push(format!(
                "s = {} is at or below the critical regularity 1; results are exploratory",
                c.s
            ));
        }
        Ok(c)
    }

    /// Config text that parses back to `self` (warnings excepted).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("grid.n_points", self.n_points.to_string());
        kv("grid.side_length", self.side_length.to_string());
        kv("time.dt", self.dt.to_string());
        kv("time.T", self.duration.to_string());
        kv(
            "time.scheme",
            match self.scheme {
                Scheme::Rk4 => "rk4",
                Scheme::Trig => "trig",
            }
            .into(),
        );
        kv("physics.kappa", self.kappa.to_string());
        kv("physics.m_bound", self.m_bound.to_string());
        kv("physics.sphere_tol", self.sphere_tol.to_string());
        match &self.data {
            DataSource::Preset { name, params } => {
                kv("data.preset", name.clone());
                kv("data.amplitude", params.amplitude.to_string());
                if let Some(w) = params.width {
                    kv("data.width", w.to_string());
                }
                if let Some((x, y)) = params.center {
                    kv("data.center_x", x.to_string());
                    kv("data.center_y", y.to_string());
                }
                kv("data.spin", params.spin.to_string());
            }
            DataSource::Snapshot(p) => kv("data.snapshot", p.display().to_string()),
        }
        kv("output.directory", self.output_dir.display().to_string());
        kv("output.snapshot_stride", self.snapshot_stride.to_string());
        kv(
            "output.diagnostics_stride",
            self.diagnostics_stride.to_string(),
        );
        kv("norms.s", self.s.to_string());
        kv("seeds.data", self.seed.to_string());
        kv("model.nonlinear", self.model.nonlinear.to_string());
        kv("model.dealias", self.model.dealias.to_string());
        kv(
            "model.source_form",
            match self.model.source_form {
                SourceForm::Derived => "derived",
                SourceForm::AsPrinted => "as_printed",
            }
            .into(),
        );
        kv(
            "picard.max_iterations",
            self.picard_max_iterations.to_string(),
        );
        kv("picard.tol", self.picard_tol.to_string());
        out
    }
}
