//! Run configuration. Settings are layered: built-in defaults, then a config
//! file, then command-line flags. Both sources produce the same raw
//! [`Settings`], which are validated once into a [`RunConfig`].

use std::fmt;
use std::path::{Path, PathBuf};

use plasmodyn::params::{HOURS_PER_DAY, PARAM_NAMES};
use plasmodyn::{default_params, ModelKind, ModelParams, ObjectiveScale};

/// A configuration problem; always reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Compare,
    Regress,
    Survival,
    R0,
}

/// Unvalidated settings, as written on the command line or in a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub model: Option<String>,
    pub k: Option<String>,
    pub t_end: Option<String>,
    pub dt: Option<String>,
    pub da: Option<String>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<String>,
    pub objective: Option<String>,
    pub at: Option<String>,
    pub lag: Option<String>,
    pub noise: Option<String>,
    pub trajectory: Option<PathBuf>,
    /// `name=value` parameter overrides in the order given.
    pub set: Vec<String>,
}

impl Settings {
    /// `self` wins over `lower`; overrides from `lower` are applied first.
    pub fn over(self, lower: Settings) -> Settings {
        let mut set = lower.set;
        set.extend(self.set);
        Settings {
            model: self.model.or(lower.model),
            k: self.k.or(lower.k),
            t_end: self.t_end.or(lower.t_end),
            dt: self.dt.or(lower.dt),
            da: self.da.or(lower.da),
            data: self.data.or(lower.data),
            out: self.out.or(lower.out),
            seed: self.seed.or(lower.seed),
            objective: self.objective.or(lower.objective),
            at: self.at.or(lower.at),
            lag: self.lag.or(lower.lag),
            noise: self.noise.or(lower.noise),
            trajectory: self.trajectory.or(lower.trajectory),
            set,
        }
    }

    /// Parses a config file: one `key = value` per line, keys named after the
    /// long flags (`t-end` or `t_end`), `#` comments. `set` may repeat, and a
    /// bare model parameter name is shorthand for `set`. Relative paths are
    /// taken relative to the file's directory.
    pub fn parse_file(text: &str, origin: &Path) -> Result<Settings, ConfigError> {
        let base = origin.parent().unwrap_or(Path::new(""));
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", origin.display(), n + 1);
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("{}: expected `key = value`", at()));
            };
            let key = key.trim().replace('-', "_");
            let value = value.trim().to_string();
            let path = || base.join(&value);
            let slot = match key.as_str() {
                "model" => &mut s.model,
                "k" => &mut s.k,
                "t_end" => &mut s.t_end,
                "dt" => &mut s.dt,
                "da" => &mut s.da,
                "seed" => &mut s.seed,
                "objective" => &mut s.objective,
                "at" => &mut s.at,
                "lag" => &mut s.lag,
                "noise" => &mut s.noise,
                "data" => {
                    s.data = Some(path());
                    continue;
                }
                "out" => {
                    s.out = Some(path());
                    continue;
                }
                "trajectory" => {
                    s.trajectory = Some(path());
                    continue;
                }
                "set" => {
                    s.set.push(value);
                    continue;
                }
                name if PARAM_NAMES.contains(&name) => {
                    s.set.push(format!("{name}={value}"));
                    continue;
                }
                other => return err(format!("{}: unknown key `{other}`", at())),
            };
            if slot.is_some() {
                return err(format!("{}: `{key}` given twice", at()));
            }
            *slot = Some(value);
        }
        Ok(s)
    }
}

/// Validated configuration for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    /// `None` when the command should cover both models.
    pub model: Option<ModelKind>,
    /// Stage counts; empty means the command's own default.
    pub k: Vec<usize>,
    /// Hours.
    pub t_end: f64,
    /// Hours; `None` means the model's default step.
    pub dt: Option<f64>,
    /// Age step (hours).
    pub da: f64,
    pub params: ModelParams,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub objective: ObjectiveScale,
    /// Ages (hours) for the survival table.
    pub at: Vec<f64>,
    /// Regression lag (days).
    pub lag: f64,
    /// Noise coefficient of variation for synthetic fit data.
    pub noise: Option<f64>,
    pub trajectory: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_settings(command: Command, s: Settings) -> Result<RunConfig, ConfigError> {
        let mut params = default_params();
        for item in &s.set {
            let Some((name, value)) = item.split_once('=') else {
                return err(format!("override `{item}` is not of the form name=value"));
            };
            params
                .apply_override(name, value)
                .map_err(|e| ConfigError(e.to_string()))?;
        }
        params.validate().map_err(|e| ConfigError(e.to_string()))?;

        let model = s
            .model
            .as_deref()
            .map(|m| m.parse::<ModelKind>().map_err(|e| ConfigError(e.to_string())))
            .transpose()?;
        let k = s.k.as_deref().map(parse_k_list).transpose()?.unwrap_or_default();
        if command == Command::Compare && s.k.is_some() && k.is_empty() {
            return err("compare needs a nonempty K list");
        }
        let t_end = s
            .t_end
            .as_deref()
            .map(parse_duration)
            .transpose()?
            .unwrap_or(40.0 * HOURS_PER_DAY);
        let dt = s.dt.as_deref().map(parse_duration).transpose()?;
        let da = s.da.as_deref().map(parse_duration).transpose()?.unwrap_or(0.05);
        if t_end <= 0.0 {
            return err("--t-end must be positive");
        }
        if dt.is_some_and(|v| v <= 0.0) || da <= 0.0 {
            return err("--dt and --da must be positive");
        }
        let seed = match s.seed.as_deref() {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("--seed `{v}` is not a u64")))?,
            None => 0,
        };
        let objective = match s.objective.as_deref() {
            Some(v) => v.parse().map_err(|e: plasmodyn::Error| ConfigError(e.to_string()))?,
            None => ObjectiveScale::default(),
        };
        let at =
            s.at.as_deref()
                .map(parse_duration_list)
                .transpose()?
                .unwrap_or_default();
        let lag = match s.lag.as_deref() {
            Some(v) => parse_duration(v)? / HOURS_PER_DAY,
            None => 2.0,
        };
        if !(lag >= 0.0) {
            return err("--lag must be >= 0");
        }
        let noise = s.noise.as_deref().map(parse_number).transpose()?;
        Ok(RunConfig {
            command,
            model,
            k,
            t_end,
            dt,
            da,
            params,
            data: s.data,
            out: s.out,
            seed,
            objective,
            at,
            lag,
            noise,
            trajectory: s.trajectory,
        })
    }
}

fn parse_number(v: &str) -> Result<f64, ConfigError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("`{v}` is not a finite number")),
    }
}

/// `40d`, `12h` or a bare number of hours.
pub fn parse_duration(v: &str) -> Result<f64, ConfigError> {
    let v = v.trim();
    let (num, scale) = if let Some(x) = v.strip_suffix('d') {
        (x, HOURS_PER_DAY)
    } else if let Some(x) = v.strip_suffix('h') {
        (x, 1.0)
    } else {
        (v, 1.0)
    };
    parse_number(num)
        .map(|x| x * scale)
        .map_err(|_| ConfigError(format!("`{v}` is not a duration (use e.g. 40d, 12h)")))
}

fn parse_duration_list(v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(parse_duration).collect()
}

/// Comma-separated stage counts and inclusive ranges: `1,10,40-60`.
pub fn parse_k_list(v: &str) -> Result<Vec<usize>, ConfigError> {
    let one = |x: &str| match x.trim().parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => err(format!("`{x}` is not a stage count >= 1")),
    };
    let mut out = Vec::new();
    for item in v.split(',').filter(|x| !x.trim().is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (one(a)?, one(b)?);
                if a > b {
                    return err(format!("empty K range `{item}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(one(item)?),
        }
    }
    Ok(out)
}

/// Rewrites `--<param> <value>` and `--<param>=<value>` for model parameter
/// names into `--set <param>=<value>`, so parameters read like flags.
pub fn expand_param_flags(args: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !PARAM_NAMES.contains(&name.as_str()) {
            out.push(arg);
            continue;
        }
        match inline.or_else(|| it.next()) {
            Some(value) => {
                out.push("--set".into());
                out.push(format!("{name}={value}"));
            }
            None => out.push(arg),
        }
    }
    out
}
