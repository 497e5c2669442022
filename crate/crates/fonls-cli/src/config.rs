//! Flat key=value run configuration: defaults, file parsing with unknown-key
//! rejection, flag overrides, range validation, and a stable content hash.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Spellings accepted for `stability.family`.
pub const FAMILIES: [&str; 4] = ["even", "odd", "random-bandlimited", "mass-preserving"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// One resolved run: grid, integrator, sweep parameters, seed, tolerances.
/// Every randomized check draws from `seed`; nothing reads the clock.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid_l: f64,
    pub grid_n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub record_every: usize,
    pub stability_t_max: f64,
    pub stability_record_every: usize,
    pub stability_amplitudes: Vec<f64>,
    pub stability_family: String,
    /// orbit neighborhood radius as a fraction of the wave's H2 norm
    pub lyapunov_rho_rel: f64,
    pub lyapunov_samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tolerances: BTreeMap<String, f64>,
}

fn default_tolerances() -> BTreeMap<String, f64> {
    let entries: [(&str, f64); 25] = [
        ("wave_residual", 1e-9),
        ("wave_sensitivity_min", 1e-3),
        ("functional_match", 1e-11),
        ("kernel_residual", 1e-9),
        ("spectral_gap_min", 1e-2),
        ("stheta_unit_eigenvalue", 1e-4),
        ("stheta_cosine_gap", 1e-6),
        ("stheta_crossing_rel", 1e-3),
        ("weinstein_refine_rel", 1e-4),
        ("weinstein_series_rel", 0.10),
        ("gamma_abs", 5e-6),
        ("garding_c_max", 1.24),
        ("mass_drift", 1e-10),
        ("energy_drift", 1e-8),
        ("phase_rate_abs", 1e-5),
        ("strang_ratio_lo", 3.6),
        ("strang_ratio_hi", 4.4),
        ("reversibility", 1e-8),
        ("orbit_recovery", 1e-10),
        ("orbit_invariance", 1e-9),
        ("orbit_orthogonality", 1e-8),
        ("lyapunov_on_orbit", 1e-12),
        ("symmetry_pairing", 1e-8),
        ("lyapunov_drift", 1e-7),
        ("spearman_min", 0.9),
    ];
    entries.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_l: 64.0,
            grid_n: 2048,
            dt: 1e-3,
            t_max: 50.0,
            record_every: 500,
            stability_t_max: 100.0,
            stability_record_every: 500,
            stability_amplitudes: vec![1e-3, 3e-3, 1e-2, 3e-2],
            stability_family: "random-bandlimited".to_string(),
            lyapunov_rho_rel: 0.05,
            lyapunov_samples: 40,
            seed: 7,
            out_dir: PathBuf::from("."),
            tolerances: default_tolerances(),
        }
    }
}

/// Command-line values layered on top of the file (or default) config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub grid_l: Option<f64>,
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected key = value, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            seen.push(key.to_string());
            cfg.set(key, value)
                .map_err(|e| ConfigError(format!("line {}: {}", lineno + 1, e.0)))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| ConfigError(format!("key `{key}`: cannot parse `{v}`")))
        }
        match key {
            "grid.l" => self.grid_l = num(key, value)?,
            "grid.n" => self.grid_n = num(key, value)?,
            "integrator.dt" => self.dt = num(key, value)?,
            "integrator.t_max" => self.t_max = num(key, value)?,
            "integrator.record_every" => self.record_every = num(key, value)?,
            "stability.t_max" => self.stability_t_max = num(key, value)?,
            "stability.record_every" => self.stability_record_every = num(key, value)?,
            "stability.amplitudes" => {
                self.stability_amplitudes = value
                    .split(',')
                    .map(|s| num::<f64>(key, s.trim()))
                    .collect::<Result<Vec<f64>>>()?;
            }
            "stability.family" => self.stability_family = value.to_string(),
            "lyapunov.rho_rel" => self.lyapunov_rho_rel = num(key, value)?,
            "lyapunov.samples" => self.lyapunov_samples = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out.dir" => self.out_dir = PathBuf::from(value),
            _ => {
                if let Some(name) = key.strip_prefix("tol.") {
                    if !self.tolerances.contains_key(name) {
                        return Err(ConfigError(format!("unknown tolerance `{name}`")));
                    }
                    self.tolerances.insert(name.to_string(), num(key, value)?);
                } else {
                    return Err(ConfigError(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.grid_l {
            self.grid_l = v;
        }
        if let Some(v) = o.grid_n {
            self.grid_n = v;
        }
        if let Some(v) = o.dt {
            self.dt = v;
        }
        if let Some(v) = o.t_max {
            // one flag steers both the plain evolution and the sweep horizon
            self.t_max = v;
            self.stability_t_max = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
            if !v.is_finite() || v < lo || v > hi {
                return Err(ConfigError(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        range("grid.l", self.grid_l, 16.0, 512.0)?;
        // refinement checks double N internally, so cap at half the largest
        // dense eigensolve the toolkit is prepared to run
        if self.grid_n < 32 || self.grid_n > 8192 || self.grid_n % 2 != 0 {
            return Err(ConfigError(format!(
                "grid.n = {} must be even and within [32, 8192]",
                self.grid_n
            )));
        }
        range("integrator.dt", self.dt, 1e-6, 0.1)?;
        range("integrator.t_max", self.t_max, self.dt, 1e4)?;
        range("stability.t_max", self.stability_t_max, self.dt, 1e4)?;
        for (name, v) in [
            ("integrator.record_every", self.record_every),
            ("stability.record_every", self.stability_record_every),
        ] {
            if v == 0 || v > 1_000_000 {
                return Err(ConfigError(format!("{name} = {v} outside [1, 1000000]")));
            }
        }
        if self.stability_amplitudes.is_empty() || self.stability_amplitudes.len() > 16 {
            return Err(ConfigError("stability.amplitudes needs 1 to 16 entries".into()));
        }
        for &a in &self.stability_amplitudes {
            range("stability.amplitudes entry", a, 1e-6, 0.1)?;
        }
        if self.stability_amplitudes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError("stability.amplitudes must be strictly ascending".into()));
        }
        if !FAMILIES.contains(&self.stability_family.as_str()) {
            return Err(ConfigError(format!(
                "stability.family `{}` not one of {FAMILIES:?}",
                self.stability_family
            )));
        }
        range("lyapunov.rho_rel", self.lyapunov_rho_rel, 1e-4, 0.2)?;
        if self.lyapunov_samples == 0 || self.lyapunov_samples > 10_000 {
            return Err(ConfigError(format!(
                "lyapunov.samples = {} outside [1, 10000]",
                self.lyapunov_samples
            )));
        }
        for (name, &v) in &self.tolerances {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError(format!("tol.{name} = {v} must be positive")));
            }
        }
        if self.tolerances["strang_ratio_lo"] >= self.tolerances["strang_ratio_hi"] {
            return Err(ConfigError("strang ratio window is empty".into()));
        }
        if self.tolerances["spearman_min"] > 1.0 {
            return Err(ConfigError("tol.spearman_min cannot exceed 1".into()));
        }
        Ok(())
    }

    pub fn tol(&self, name: &str) -> f64 {
        *self
            .tolerances
            .get(name)
            .unwrap_or_else(|| panic!("tolerance `{name}` missing from table"))
    }

    /// Canonical serialization of every key that feeds a computation, sorted,
    /// one per line. Re-parsing it reproduces the numerical config; the
    /// report hash is taken over these bytes. `out.dir` only routes
    /// artifacts, so it stays out of the hash.
    pub fn canonical_text(&self) -> String {
        let mut lines: Vec<String> = vec![
            format!("grid.l = {:?}", self.grid_l),
            format!("grid.n = {}", self.grid_n),
            format!("integrator.dt = {:?}", self.dt),
            format!("integrator.t_max = {:?}", self.t_max),
            format!("integrator.record_every = {}", self.record_every),
            format!("lyapunov.rho_rel = {:?}", self.lyapunov_rho_rel),
            format!("lyapunov.samples = {}", self.lyapunov_samples),
            format!("seed = {}", self.seed),
            format!(
                "stability.amplitudes = {}",
                self.stability_amplitudes
                    .iter()
                    .map(|a| format!("{a:?}"))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("stability.family = {}", self.stability_family),
            format!("stability.record_every = {}", self.stability_record_every),
            format!("stability.t_max = {:?}", self.stability_t_max),
        ];
        for (k, v) in &self.tolerances {
            lines.push(format!("tol.{k} = {v:?}"));
        }
        lines.sort();
        lines.join("\n") + "\n"
    }

    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_text().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
