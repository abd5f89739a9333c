//! Flat `key=value` run configuration covering every tunable of the pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hrvbrake_core::agent::{AgentConfig, Variant};
use hrvbrake_core::capsule::{Anchor, CapsuleConfig, WindowParams, C_RANGE_S, N_RANGE};
use hrvbrake_core::detector::{DetectorConfig, DEFAULT_WINDOW_OVERLAP};
use hrvbrake_core::env::EnvConfig;
use hrvbrake_core::textio;
use hrvbrake_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("expected f32 or f64, got {other:?}")),
        }
    }
}

/// Parameters of the built-in synthetic recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub events: usize,
    pub spacing_s: f64,
    pub lead_s: f64,
    pub sample_rate_hz: u32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            events: 8,
            spacing_s: 400.0,
            lead_s: 150.0,
            sample_rate_hz: 128,
        }
    }
}

/// Typed view of the run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub precision: Precision,
    pub window_s: u32,
    pub window: WindowParams,
    pub n_range: (usize, usize),
    pub c_range_s: (u32, u32),
    pub capsule: String,
    pub detector: DetectorConfig,
    pub folds: usize,
    pub window_overlap: f64,
    pub variant: Variant,
    pub episodes: usize,
    pub agent: AgentConfig,
    pub env: EnvConfig,
    pub eval_episodes: usize,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            precision: Precision::F64,
            window_s: 120,
            window: WindowParams::default(),
            n_range: N_RANGE,
            c_range_s: C_RANGE_S,
            capsule: "C6400_N6_M72".into(),
            detector: DetectorConfig::default(),
            folds: 5,
            window_overlap: DEFAULT_WINDOW_OVERLAP,
            variant: Variant::DoubleDuelingDqn,
            episodes: 500,
            agent: AgentConfig::default(),
            env: EnvConfig::default(),
            eval_episodes: 200,
            synth: SynthSettings::default(),
        }
    }
}

type Setter = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;

struct Field {
    key: &'static str,
    doc: &'static str,
    get: fn(&RunConfig) -> String,
    set: Setter,
}

fn parse<V: FromStr>(v: &str) -> std::result::Result<V, String>
where
    V::Err: std::fmt::Display,
{
    v.parse::<V>().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse(x.trim())).collect()
}

macro_rules! field {
    ($key:literal, $doc:literal, $($p:tt).+ : $t:ty) => {
        Field {
            key: $key,
            doc: $doc,
            get: |c| c.$($p).+.to_string(),
            set: |c, v| {
                c.$($p).+ = parse::<$t>(v)?;
                Ok(())
            },
        }
    };
}

fn fields() -> Vec<Field> {
    vec![
        Field {
            key: "run.precision",
            doc: "floating-point type for networks (f32 or f64)",
            get: |c| c.precision.as_str().into(),
            set: |c, v| {
                c.precision = parse(v)?;
                Ok(())
            },
        },
        field!("capsule.window_s", "DEW/NSRW length in seconds", window_s: u32),
        field!("capsule.min_gap_s", "minimum spacing between qualifying events", window.min_gap_s: f64),
        Field {
            key: "capsule.anchor",
            doc: "event position in a DEW (end or centered)",
            get: |c| c.window.anchor.as_str().into(),
            set: |c, v| {
                c.window.anchor = Anchor::parse(v).ok_or_else(|| format!("expected end or centered, got {v:?}"))?;
                Ok(())
            },
        },
        field!("capsule.n_min", "smallest capsule count", n_range.0: usize),
        field!("capsule.n_max", "largest capsule count", n_range.1: usize),
        field!("capsule.c_min_s", "smallest capsule size in seconds", c_range_s.0: u32),
        field!("capsule.c_max_s", "largest capsule size in seconds", c_range_s.1: u32),
        Field {
            key: "capsule.config",
            doc: "capsule configuration used by train-detector",
            get: |c| c.capsule.clone(),
            set: |c, v| {
                CapsuleConfig::parse_label(v).map_err(|e| e.to_string())?;
                c.capsule = v.to_string();
                Ok(())
            },
        },
        field!("detector.units", "recurrent units per layer", detector.units: usize),
        field!("detector.recurrent_layers", "stacked recurrent layers", detector.recurrent_layers: usize),
        field!("detector.dropout", "dropout rate on recurrent outputs", detector.dropout: f64),
        field!("detector.l2", "L2 penalty on the output weights", detector.l2: f64),
        field!("detector.learning_rate", "Adam step size", detector.learning_rate: f64),
        field!("detector.batch_size", "minibatch size", detector.batch_size: usize),
        field!("detector.max_epochs", "epoch cap", detector.max_epochs: usize),
        field!("detector.early_stop_patience", "epochs without improvement before stopping", detector.early_stop_patience: usize),
        field!("detector.decision_threshold", "probability above which a window is drowsy", detector.decision_threshold: f64),
        field!("detector.validation_fraction", "training share held back for early stopping", detector.validation_fraction: f64),
        field!("detector.folds", "cross-validation folds", folds: usize),
        field!("detector.window_overlap", "overlap of consecutive windows at inference", window_overlap: f64),
        Field {
            key: "agent.variant",
            doc: "dqn, double, dueling or dddqn",
            get: |c| c.variant.to_string(),
            set: |c, v| {
                c.variant = parse(v)?;
                Ok(())
            },
        },
        field!("agent.episodes", "training episodes", episodes: usize),
        field!("agent.gamma", "discount factor", agent.gamma: f64),
        field!("agent.eps_start", "initial exploration rate", agent.eps_start: f64),
        field!("agent.eps_end", "exploration floor", agent.eps_end: f64),
        field!("agent.eps_decay", "per-episode exponential decay rate of exploration", agent.eps_decay: f64),
        field!("agent.guided_episodes", "episodes of guided exploration", agent.guided_episodes: usize),
        field!("agent.guided_accel_prob", "throttle probability while guided", agent.guided_accel_prob: f64),
        field!("agent.batch_size", "replay minibatch size", agent.batch_size: usize),
        field!("agent.target_sync_period", "gradient steps between target copies", agent.target_sync_period: usize),
        field!("agent.learning_rate", "Adam step size", agent.learning_rate: f64),
        field!("agent.buffer_capacity", "replay memory size", agent.buffer_capacity: usize),
        field!("agent.warmup", "transitions stored before learning starts", agent.warmup: usize),
        field!("agent.train_interval", "environment steps per gradient step", agent.train_interval: usize),
        Field {
            key: "agent.trunk",
            doc: "shared hidden layer widths",
            get: |c| list(&c.agent.shape.trunk),
            set: |c, v| {
                c.agent.shape.trunk = parse_list(v)?;
                Ok(())
            },
        },
        Field {
            key: "agent.stream",
            doc: "hidden widths of each dueling stream",
            get: |c| list(&c.agent.shape.stream),
            set: |c, v| {
                c.agent.shape.stream = parse_list(v)?;
                Ok(())
            },
        },
        field!("env.dt", "simulation step (s)", env.dt: f64),
        field!("env.max_accel", "acceleration at full throttle (m/s^2)", env.max_accel: f64),
        field!("env.max_decel", "deceleration at full brake (m/s^2)", env.max_decel: f64),
        field!("env.max_speed", "ego speed cap (m/s)", env.max_speed: f64),
        field!("env.collision_distance", "gap counted as a collision (m)", env.collision_distance: f64),
        field!("env.delay", "actuation delay while drowsy (s)", env.delay: f64),
        field!("env.horizon", "episode length (s)", env.horizon: f64),
        field!("env.spacing_min", "smallest initial gap (m)", env.spacing_min: f64),
        field!("env.spacing_max", "largest initial gap (m)", env.spacing_max: f64),
        field!("env.smooth_brake_threshold", "brake level regarded as smooth", env.smooth_brake_threshold: f64),
        field!("env.following_tolerance", "closing speed bound of the following phase (m/s)", env.following_tolerance: f64),
        field!("env.mean_alert_s", "mean alert interval (s)", env.mean_alert_s: f64),
        field!("env.mean_drowsy_s", "mean drowsy interval (s)", env.mean_drowsy_s: f64),
        field!("reward.alpha", "collision penalty", env.reward.alpha: f64),
        field!("reward.beta", "safe-band bonus", env.reward.beta: f64),
        field!("reward.kappa", "smooth braking bonus", env.reward.kappa: f64),
        field!("reward.delta", "unsafe distance penalty", env.reward.delta: f64),
        field!("reward.epsilon_r", "speed tracking weight", env.reward.epsilon_r: f64),
        field!("lead.min_segments", "fewest lead speed segments", env.lead.min_segments: usize),
        field!("lead.max_segments", "most lead speed segments", env.lead.max_segments: usize),
        field!("lead.min_speed", "slowest lead target (m/s)", env.lead.min_speed: f64),
        field!("lead.max_speed", "fastest lead target (m/s)", env.lead.max_speed: f64),
        field!("lead.accel", "lead acceleration (m/s^2)", env.lead.accel: f64),
        field!("lead.decel", "lead deceleration (m/s^2)", env.lead.decel: f64),
        field!("radar.rate_hz", "detection points per second", env.radar.rate_hz: f64),
        field!("radar.sigma_depth", "range noise (m)", env.radar.sigma_depth: f64),
        field!("radar.sigma_velocity", "velocity noise (m/s)", env.radar.sigma_velocity: f64),
        field!("radar.clutter_fraction", "share of clutter points", env.radar.clutter_fraction: f64),
        field!("radar.max_range", "detection range (m)", env.radar.max_range: f64),
        field!("radar.pitch_deg", "mounting pitch (deg)", env.radar.pitch_deg: f64),
        field!("radar.dbscan_eps", "DBSCAN neighbourhood radius", env.radar.dbscan.eps: f64),
        field!("radar.dbscan_min_points", "DBSCAN core point threshold", env.radar.dbscan.min_points: usize),
        field!("radar.dbscan_velocity_scale", "velocity weight in the DBSCAN metric", env.radar.dbscan.velocity_scale: f64),
        field!("eval.episodes", "paired evaluation scenarios", eval_episodes: usize),
        field!("synth.events", "button presses in the synthetic recording", synth.events: usize),
        field!("synth.spacing_s", "seconds between synthetic events", synth.spacing_s: f64),
        field!("synth.lead_s", "drowsy stretch before each synthetic event (s)", synth.lead_s: f64),
        field!("synth.sample_rate_hz", "synthetic sampling rate", synth.sample_rate_hz: u32),
    ]
}

impl RunConfig {
    /// Sets one key; unknown keys and unparsable values are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let fields = fields();
        let f = fields
            .iter()
            .find(|f| f.key == key)
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        (f.set)(self, value).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (line, key, value) in textio::key_values(text, path)? {
            self.set(&key, &value)
                .map_err(|e| Error::Config(format!("{}:{line}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(&textio::read_to_string(path)?, path)?;
        Ok(c)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        fields().into_iter().map(|f| (f.key, (f.get)(self))).collect()
    }

    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Every key with its default and a short description, as a commented config file.
    pub fn documented_defaults() -> String {
        let d = RunConfig::default();
        let mut out = String::new();
        for f in fields() {
            let _ = writeln!(out, "# {}\n{}={}", f.doc, f.key, (f.get)(&d));
        }
        out
    }

    pub fn window_params(&self, sample_rate_hz: u32) -> WindowParams {
        WindowParams {
            length_samples: self.window_s as usize * sample_rate_hz as usize,
            ..self.window
        }
    }

    pub fn capsule_config(&self) -> Result<CapsuleConfig> {
        CapsuleConfig::parse_label(&self.capsule)
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.agent.validate()?;
        self.env.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.window_s == 0 {
            return bad("capsule.window_s must be positive".into());
        }
        if self.n_range.0 > self.n_range.1 || self.c_range_s.0 > self.c_range_s.1 {
            return bad("capsule ranges must have min <= max".into());
        }
        if self.folds < 2 {
            return bad(format!("detector.folds must be at least 2, got {}", self.folds));
        }
        if !(0.0..1.0).contains(&self.window_overlap) {
            return bad(format!("detector.window_overlap {} outside [0, 1)", self.window_overlap));
        }
        if self.synth.sample_rate_hz == 0 || self.synth.spacing_s <= self.synth.lead_s {
            return bad("synth.spacing_s must exceed synth.lead_s and the rate must be positive".into());
        }
        self.capsule_config()?;
        Ok(())
    }
}
