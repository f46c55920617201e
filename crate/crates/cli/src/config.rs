//! Flat `key=value` run configuration.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use defence_core::classifier::{KernelKind, DEFAULT_C, DEFAULT_GAMMA};
use defence_core::cnn::TrainConfig;
use defence_core::evalsynth::{parse_shifts, FenceSpec};
use defence_core::fusion::{EnergyParams, RelabelMode, Schedule};
use defence_core::lattice::DetectorConfig;
use defence_core::motion::{RegistrationConfig, RegistrationMode};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub width: usize,
    pub height: usize,
    pub fence: FenceSpec,
    pub shifts: Vec<(i64, i64)>,
    pub sigma: f64,

    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: f64,
    /// 0 or 1 disables cross-validation.
    pub cv_folds: usize,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub jitter: usize,
    pub negatives: usize,
    pub negative_distance: f64,
    pub cnn: TrainConfig,
    pub flip: bool,
    pub probes: usize,
    pub probe_step: f64,

    pub detector: DetectorConfig,
    pub match_radius: f64,

    pub registration: RegistrationConfig,

    pub energy: EnergyParams,
    pub relabel: RelabelMode,
    pub reference: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 96,
            height: 96,
            fence: FenceSpec::default(),
            shifts: vec![(0, 0), (5, 0), (0, 5), (5, 5)],
            sigma: 1.0,
            kernel: KernelKind::Linear,
            c: DEFAULT_C,
            gamma: DEFAULT_GAMMA,
            cv_folds: 5,
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_grid: vec![DEFAULT_GAMMA],
            jitter: 1,
            negatives: 60,
            negative_distance: 5.0,
            cnn: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            flip: false,
            probes: 200,
            probe_step: 1e-5,
            detector: DetectorConfig::default(),
            match_radius: 5.0,
            registration: RegistrationConfig::default(),
            energy: EnergyParams::default(),
            relabel: RelabelMode::All,
            reference: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("config key {key}: cannot parse {value:?}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("config key {key}: expected true or false, got {value:?}"),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v = value
        .split(',')
        .map(|t| parse::<f64>(key, t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        bail!("config key {key}: need a list of positive numbers, got {value:?}");
    }
    Ok(v)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("config key {key}: must be positive, got {v}");
    }
    Ok(v)
}

/// Every key [`RunConfig::set`] accepts.
pub const KEYS: &[&str] = &[
    "seed",
    "width",
    "height",
    "spacing",
    "bar_width",
    "shape",
    "intensity",
    "offset",
    "shifts",
    "sigma",
    "kernel",
    "c",
    "gamma",
    "cv_folds",
    "c_grid",
    "gamma_grid",
    "jitter",
    "negatives",
    "negative_distance",
    "cnn_epochs",
    "cnn_batch",
    "cnn_learning_rate",
    "flip",
    "probes",
    "probe_step",
    "stride",
    "scale_ratio",
    "min_scale",
    "max_scale",
    "score_threshold",
    "dominance_radius_factor",
    "link_tolerance",
    "detect_bar_width",
    "match_radius",
    "registration",
    "max_shift",
    "max_corners",
    "corner_distance",
    "patch",
    "search_radius",
    "ransac_threshold",
    "ransac_iterations",
    "lambda",
    "labels",
    "iterations",
    "schedule",
    "relabel",
    "reference",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        Ok(cfg)
    }

    /// One `key=value` per line; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_pair(line)
                .with_context(|| format!("line {}", n + 1))?;
        }
        self.validate()
    }

    pub fn apply_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got {pair:?}"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "spacing" => self.fence.spacing = parse(key, v)?,
            "bar_width" => self.fence.bar_width = parse(key, v)?,
            "shape" => self.fence.shape = parse(key, v)?,
            "intensity" => self.fence.intensity = parse(key, v)?,
            "offset" => self.fence.offset = parse(key, v)?,
            "shifts" => {
                self.shifts = parse_shifts(v)?;
                if self.shifts.is_empty() {
                    bail!("config key shifts: need at least one shift");
                }
            }
            "sigma" => {
                self.sigma = parse(key, v)?;
                if !(self.sigma >= 0.0) {
                    bail!("config key sigma: must be >= 0");
                }
            }
            "kernel" => {
                self.kernel = match v {
                    "linear" => KernelKind::Linear,
                    "rbf" => KernelKind::Rbf,
                    _ => bail!("config key kernel: expected linear or rbf, got {v:?}"),
                }
            }
            "c" => self.c = positive(key, parse(key, v)?)?,
            "gamma" => self.gamma = positive(key, parse(key, v)?)?,
            "cv_folds" => self.cv_folds = parse(key, v)?,
            "c_grid" => self.c_grid = parse_list(key, v)?,
            "gamma_grid" => self.gamma_grid = parse_list(key, v)?,
            "jitter" => self.jitter = parse(key, v)?,
            "negatives" => self.negatives = parse(key, v)?,
            "negative_distance" => self.negative_distance = positive(key, parse(key, v)?)?,
            "cnn_epochs" => self.cnn.epochs = parse(key, v)?,
            "cnn_batch" => self.cnn.batch_size = parse(key, v)?,
            "cnn_learning_rate" => self.cnn.learning_rate = positive(key, parse(key, v)?)?,
            "flip" => self.flip = parse_bool(key, v)?,
            "probes" => self.probes = parse(key, v)?,
            "probe_step" => self.probe_step = positive(key, parse(key, v)?)?,
            "stride" => self.detector.stride = parse(key, v)?,
            "scale_ratio" => self.detector.scale_ratio = parse(key, v)?,
            "min_scale" => self.detector.min_scale = parse(key, v)?,
            "max_scale" => self.detector.max_scale = parse(key, v)?,
            "score_threshold" => self.detector.score_threshold = parse(key, v)?,
            "dominance_radius_factor" => self.detector.dominance_radius_factor = parse(key, v)?,
            "link_tolerance" => self.detector.link_tolerance = parse(key, v)?,
            "detect_bar_width" => {
                let bw: usize = parse(key, v)?;
                self.detector.bar_width = (bw > 0).then_some(bw);
            }
            "match_radius" => self.match_radius = positive(key, parse(key, v)?)?,
            "registration" => {
                self.registration.mode = v.parse::<RegistrationMode>()?;
            }
            "max_shift" => self.registration.max_shift = parse(key, v)?,
            "max_corners" => self.registration.max_corners = parse(key, v)?,
            "corner_distance" => self.registration.corner_distance = parse(key, v)?,
            "patch" => self.registration.patch = parse(key, v)?,
            "search_radius" => self.registration.search_radius = parse(key, v)?,
            "ransac_threshold" => {
                self.registration.ransac.inlier_threshold = positive(key, parse(key, v)?)?
            }
            "ransac_iterations" => self.registration.ransac.iterations = parse(key, v)?,
            "lambda" => self.energy.lambda = parse(key, v)?,
            "labels" => self.energy.labels = parse(key, v)?,
            "iterations" => self.energy.iterations = parse(key, v)?,
            "schedule" => self.energy.schedule = v.parse::<Schedule>()?,
            "relabel" => self.relabel = v.parse::<RelabelMode>()?,
            "reference" => self.reference = parse(key, v)?,
            _ => bail!("unknown config key {key:?}; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            bail!("width and height must be positive");
        }
        self.fence.validate()?;
        self.detector.validate()?;
        self.energy.validate()?;
        if self.cnn.epochs == 0 || self.cnn.batch_size == 0 {
            bail!("cnn_epochs and cnn_batch must be positive");
        }
        if self.registration.patch < 5 || self.registration.patch % 2 == 0 {
            bail!("patch must be odd and at least 5");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let mut cfg = RunConfig::default();
        let sample = |k: &str| match k {
            "shape" => "rectangular",
            "shifts" => "0,0;1,1",
            "kernel" => "linear",
            "c_grid" | "gamma_grid" => "1,2",
            "flip" => "false",
            "registration" => "global",
            "schedule" => "checkerboard",
            "relabel" => "all",
            "scale_ratio" => "1.2",
            "link_tolerance" | "dominance_radius_factor" => "0.25",
            "patch" => "11",
            "labels" => "256",
            "spacing" => "20",
            "bar_width" => "2",
            _ => "1",
        };
        for k in KEYS {
            cfg.set(k, sample(k)).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("lamda=3\n").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\nlambda = 4.5\nschedule=synchronous\n")
            .unwrap();
        assert_eq!(cfg.energy.lambda, 4.5);
        assert_eq!(cfg.energy.schedule, Schedule::Synchronous);
    }

    #[test]
    fn ranges_checked_at_parse_time() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("spacing=2\nbar_width=2\n").is_err());
        assert!(RunConfig::default().set("sigma", "-1").is_err());
        assert!(RunConfig::default().set("c", "0").is_err());
        assert!(RunConfig::default().apply_text("link_tolerance=1.5").is_err());
    }
}
