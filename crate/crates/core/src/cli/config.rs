//! Flat `key = value` run configuration with per-experiment defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    ForwardDemo,
    Converge,
    Inverse1d,
    AllenCahn,
}

impl Experiment {
    pub const ALL: [Experiment; 4] =
        [Experiment::ForwardDemo, Experiment::Converge, Experiment::Inverse1d, Experiment::AllenCahn];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ForwardDemo => "forward-demo",
            Experiment::Converge => "converge",
            Experiment::Inverse1d => "inverse-1d",
            Experiment::AllenCahn => "allen-cahn",
        }
    }

    /// Every accepted key with its default value.
    pub fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::ForwardDemo => &[
                ("m_list", "10,40"),
                ("kernel", "sqexp"),
                ("ell", "0.2"),
                ("quadrature_nodes", "256"),
                ("design", "nested"),
                ("theta", "1.0"),
                ("n_eval", "201"),
                ("n_samples", "20"),
            ],
            Experiment::Converge => &[
                ("m_list", "5,10,20,40,80"),
                ("kernel", "sqexp"),
                ("ell", "0.2"),
                ("quadrature_nodes", "256"),
                ("design", "nested"),
                ("theta", "1.0"),
                ("n_eval", "512"),
            ],
            Experiment::Inverse1d => &[
                ("m_list", "4,8,16"),
                ("kernel", "sqexp"),
                ("ell", "0.2"),
                ("quadrature_nodes", "256"),
                ("design", "nested"),
                ("theta0", "1.0"),
                ("sigma", "0.01"),
                ("data_x", "0.25,0.75"),
                ("theta_min", "0.25"),
                ("theta_max", "4.0"),
                ("grid_n", "751"),
            ],
            Experiment::AllenCahn => &[
                ("delta0", "0.04"),
                ("truth_branch", "1"),
                ("fine_n", "63"),
                ("coarse_n", "31"),
                ("sigma", "0.05"),
                ("obs_side", "4"),
                ("design_side", "5"),
                ("particles", "32"),
                ("proposal_variance", "1.0"),
                ("n_steps", "5000"),
                ("burn_in", "1000"),
                ("delta_init", "0.085"),
                ("ell_init", "0.3"),
                ("delta_step", "0.004"),
                ("log_ell_step", "0.3"),
                ("j_reproposal_prob", "0.2"),
                ("cache_resolution", "0.002"),
                ("plugin_chain", "true"),
                ("credible_level", "0.9"),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Fully resolved configuration: every key of the experiment is present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    values: BTreeMap<String, String>,
}

fn normalise_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got '{raw}'", no + 1)))?;
        out.push((normalise_key(k), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults overlaid with `pairs` in order. Unknown keys are rejected
    /// and every value is type-checked before returning.
    pub fn build(experiment: Experiment, pairs: &[(String, String)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            experiment.defaults().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut seed = 0u64;
        let mut output_dir = PathBuf::from(format!("out/{}", experiment.name()));
        for (k, v) in pairs {
            let k = normalise_key(k);
            match k.as_str() {
                "seed" => seed = parse_one(&k, v)?,
                "output_dir" => output_dir = PathBuf::from(v),
                "experiment" => {
                    if v.parse::<Experiment>()? != experiment {
                        return Err(CliError::Config(format!("config is for '{v}', not '{experiment}'")));
                    }
                }
                _ if values.contains_key(&k) => {
                    values.insert(k, v.clone());
                }
                _ => return Err(CliError::Config(format!("unknown key '{k}' for {experiment}"))),
            }
        }
        let cfg = Self { experiment, seed, output_dir, values };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults(experiment: Experiment) -> Self {
        Self::build(experiment, &[]).expect("defaults are valid")
    }

    /// Returns a copy with one value replaced (validated).
    pub fn with(&self, key: &str, value: impl ToString) -> Result<Self, CliError> {
        let mut pairs = self.pairs();
        pairs.push((key.to_string(), value.to_string()));
        Self::build(self.experiment, &pairs)
    }

    /// All settings as key/value pairs, including seed and output directory.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("output_dir".to_string(), self.output_dir.display().to_string()),
        ];
        v.extend(self.values.iter().map(|(k, v)| (k.clone(), v.clone())));
        v
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no key '{key}' for {}", self.experiment))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        parse_one(key, self.raw(key))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(key);
        let v = raw.split(',').map(|s| parse_one(key, s.trim())).collect::<Result<Vec<T>, _>>()?;
        if v.is_empty() {
            return Err(CliError::Config(format!("{key}: empty list")));
        }
        Ok(v)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |k: &str| -> Result<(), CliError> {
            let v: f64 = self.get(k)?;
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{k} must be positive, got {v}")))
            }
        };
        let at_least = |k: &str, lo: usize| -> Result<(), CliError> {
            let v: usize = self.get(k)?;
            if v >= lo {
                Ok(())
            } else {
                Err(CliError::Config(format!("{k} must be at least {lo}, got {v}")))
            }
        };
        match self.experiment {
            Experiment::ForwardDemo | Experiment::Converge | Experiment::Inverse1d => {
                let ms: Vec<usize> = self.get_list("m_list")?;
                if ms.contains(&0) || ms.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::Config("m_list must be strictly increasing positive sizes".into()));
                }
                let kernel: String = self.get("kernel")?;
                if kernel != "sqexp" && kernel != "greens" {
                    return Err(CliError::Config(format!("kernel must be 'sqexp' or 'greens', got '{kernel}'")));
                }
                let design: String = self.get("design")?;
                match design.as_str() {
                    "uniform" => {}
                    "nested" => {
                        let finest = *ms.last().unwrap();
                        if let Some(m) = ms.iter().find(|&&m| !finest.is_multiple_of(m)) {
                            return Err(CliError::Config(format!("nested design: {m} does not divide {finest}")));
                        }
                    }
                    _ => return Err(CliError::Config(format!("design must be 'nested' or 'uniform', got '{design}'"))),
                }
                positive("ell")?;
                at_least("quadrature_nodes", 4)?;
            }
            Experiment::AllenCahn => {}
        }
        match self.experiment {
            Experiment::ForwardDemo => {
                positive("theta")?;
                at_least("n_eval", 2)?;
                at_least("n_samples", 1)?;
            }
            Experiment::Converge => {
                positive("theta")?;
                at_least("n_eval", 2)?;
            }
            Experiment::Inverse1d => {
                positive("theta0")?;
                positive("sigma")?;
                positive("theta_min")?;
                let (lo, hi): (f64, f64) = (self.get("theta_min")?, self.get("theta_max")?);
                if hi <= lo {
                    return Err(CliError::Config("theta_max must exceed theta_min".into()));
                }
                at_least("grid_n", 50)?;
                let xs: Vec<f64> = self.get_list("data_x")?;
                if xs.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                    return Err(CliError::Config("data_x must lie in (0, 1)".into()));
                }
            }
            Experiment::AllenCahn => {
                let d0: f64 = self.get("delta0")?;
                let di: f64 = self.get("delta_init")?;
                for (k, d) in [("delta0", d0), ("delta_init", di)] {
                    if !(d > 0.02 && d < 0.15) {
                        return Err(CliError::Config(format!("{k} must lie in (0.02, 0.15), got {d}")));
                    }
                }
                let j: usize = self.get("truth_branch")?;
                if !(1..=3).contains(&j) {
                    return Err(CliError::Config(format!("truth_branch must be 1, 2 or 3, got {j}")));
                }
                at_least("fine_n", 16)?;
                at_least("coarse_n", 16)?;
                at_least("obs_side", 1)?;
                at_least("design_side", 2)?;
                at_least("particles", 1)?;
                at_least("n_steps", 1)?;
                for k in ["sigma", "proposal_variance", "ell_init", "delta_step", "log_ell_step", "cache_resolution"] {
                    positive(k)?;
                }
                let burn: usize = self.get("burn_in")?;
                let steps: usize = self.get("n_steps")?;
                if burn >= steps {
                    return Err(CliError::Config("burn_in must be smaller than n_steps".into()));
                }
                let p: f64 = self.get("j_reproposal_prob")?;
                let level: f64 = self.get("credible_level")?;
                if !(0.0..=1.0).contains(&p) || !(level > 0.0 && level < 1.0) {
                    return Err(CliError::Config("probabilities must lie in [0, 1]".into()));
                }
                self.get::<bool>("plugin_chain")?;
            }
        }
        Ok(())
    }
}

fn parse_one<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{raw}' as {}", std::any::type_name::<T>())))
}
