//! `key=value` configuration files merged with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use hilbert_gfd::{DimensionLaw, LambdaKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Heat,
    Hjb,
    Verify,
}

impl Experiment {
    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Heat | Self::Hjb => &[
                "experiment",
                "seed",
                "iterations",
                "step",
                "law",
                "c",
                "lambda",
                "nu",
                "eta",
                "gram-nodes",
                "interior-nodes",
                "boundary-nodes",
                "grid",
                "cadence",
                "out",
            ],
            Self::Verify => &["experiment", "seed", "replications", "fourth-moment-samples", "lambda", "rate", "out"],
        }
    }
}

impl Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Heat => "heat",
            Self::Hjb => "hjb",
            Self::Verify => "verify",
        })
    }
}

/// Raw settings: file entries overlaid by flags.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value, got {line:?}", lineno + 1))?;
            values.insert(key.trim().replace('_', "-"), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    fn get<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            Some(raw) => raw.parse().map_err(|e| anyhow!("invalid value {raw:?} for {key}: {e}")),
            None => Ok(default),
        }
    }

    fn check_keys(&self, experiment: Experiment) -> Result<()> {
        if let Some(raw) = self.values.get("experiment") {
            if raw != &experiment.to_string() {
                bail!("config is for experiment {raw:?} but the {experiment} command was run");
            }
        }
        let allowed = experiment.keys();
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                bail!("unknown key {key:?} for {experiment}; allowed keys: {}", allowed.join(", "));
            }
        }
        Ok(())
    }
}

fn positive<T: PartialOrd + Default + Display>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        bail!("{key} must be positive, got {v}")
    }
}

/// Fully resolved configuration of a heat or HJB run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub iterations: usize,
    pub step: f64,
    pub law: DimensionLaw,
    pub c: f64,
    pub lambda: LambdaKind,
    pub nu: f64,
    pub eta: f64,
    pub gram_nodes: usize,
    pub interior_nodes: usize,
    pub boundary_nodes: usize,
    pub grid: usize,
    pub cadence: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn resolve(experiment: Experiment, s: &Settings) -> Result<Self> {
        s.check_keys(experiment)?;
        let (step, law, c) = match experiment {
            Experiment::Heat => (0.6, "shifted_poisson:100", 2.0),
            _ => (0.2, "shifted_poisson:100", 1.5),
        };
        let law: DimensionLaw = s.get("law", law.parse()?)?;
        if !law.has_infinite_support() {
            bail!("law must have infinite support, got {law}");
        }
        let cfg = Self {
            experiment,
            seed: s.get("seed", 1)?,
            iterations: positive("iterations", s.get("iterations", if experiment == Experiment::Heat { 200 } else { 400 })?)?,
            step: positive("step", s.get("step", step)?)?,
            law,
            c: positive("c", s.get("c", c)?)?,
            lambda: s.get("lambda", LambdaKind::Tail)?,
            nu: positive("nu", s.get("nu", 2.5)?)?,
            eta: positive("eta", s.get("eta", 20.0)?)?,
            gram_nodes: positive("gram-nodes", s.get("gram-nodes", 1 << 14)?)?,
            interior_nodes: positive("interior-nodes", s.get("interior-nodes", 1 << 14)?)?,
            boundary_nodes: positive("boundary-nodes", s.get("boundary-nodes", 1 << 11)?)?,
            grid: s.get("grid", 101)?,
            cadence: positive("cadence", s.get("cadence", 1)?)?,
            out: s.get("out", PathBuf::from(format!("hgfd-{experiment}")))?,
        };
        if cfg.grid < 2 {
            bail!("grid must be at least 2, got {}", cfg.grid);
        }
        Ok(cfg)
    }

    /// `key=value` lines that reproduce this configuration.
    pub fn to_settings(&self) -> String {
        let entries: [(&str, String); 15] = [
            ("experiment", self.experiment.to_string()),
            ("seed", self.seed.to_string()),
            ("iterations", self.iterations.to_string()),
            ("step", self.step.to_string()),
            ("law", self.law.to_string()),
            ("c", self.c.to_string()),
            ("lambda", self.lambda.to_string()),
            ("nu", self.nu.to_string()),
            ("eta", self.eta.to_string()),
            ("gram-nodes", self.gram_nodes.to_string()),
            ("interior-nodes", self.interior_nodes.to_string()),
            ("boundary-nodes", self.boundary_nodes.to_string()),
            ("grid", self.grid.to_string()),
            ("cadence", self.cadence.to_string()),
            ("out", self.out.display().to_string()),
        ];
        entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Fully resolved configuration of the verification suite.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    pub replications: usize,
    pub fourth_moment_samples: usize,
    pub lambda: LambdaKind,
    pub rate: bool,
    pub out: PathBuf,
}

impl VerifyConfig {
    pub fn resolve(s: &Settings) -> Result<Self> {
        s.check_keys(Experiment::Verify)?;
        let replications = s.get("replications", 100_000)?;
        if replications < 1000 {
            bail!("replications must be at least 1000, got {replications}");
        }
        Ok(Self {
            seed: s.get("seed", 2024)?,
            replications,
            fourth_moment_samples: positive("fourth-moment-samples", s.get("fourth-moment-samples", 1_000_000)?)?,
            lambda: s.get("lambda", LambdaKind::Tail)?,
            rate: s.get("rate", true)?,
            out: s.get("out", PathBuf::from("hgfd-verify"))?,
        })
    }

    pub fn to_settings(&self) -> String {
        format!(
            "experiment=verify\nseed={}\nreplications={}\nfourth-moment-samples={}\nlambda={}\nrate={}\nout={}\n",
            self.seed,
            self.replications,
            self.fourth_moment_samples,
            self.lambda,
            self.rate,
            self.out.display()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let s = Settings::parse("# comment\nseed = 7\ngram_nodes=512 # trailing\n\n").unwrap();
        let cfg = RunConfig::resolve(Experiment::Heat, &s).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.gram_nodes, 512);
        assert_eq!(cfg.step, 0.6);
    }

    #[test]
    fn defaults_differ_by_experiment() {
        let s = Settings::default();
        let heat = RunConfig::resolve(Experiment::Heat, &s).unwrap();
        let hjb = RunConfig::resolve(Experiment::Hjb, &s).unwrap();
        assert_eq!((heat.iterations, heat.c), (200, 2.0));
        assert_eq!((hjb.iterations, hjb.step, hjb.c), (400, 0.2, 1.5));
    }

    #[test]
    fn settings_round_trip() {
        let mut s = Settings::default();
        s.set("law", Some("geometric:0.5"));
        s.set("lambda", Some("unit"));
        let cfg = RunConfig::resolve(Experiment::Hjb, &s).unwrap();
        let again = RunConfig::resolve(Experiment::Hjb, &Settings::parse(&cfg.to_settings()).unwrap()).unwrap();
        assert_eq!(cfg.to_settings(), again.to_settings());
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["bogus=1", "step=-1", "iterations=0", "law=deterministic:3", "lambda=none", "seed", "experiment=hjb"] {
            let s = Settings::parse(text);
            assert!(s.and_then(|s| RunConfig::resolve(Experiment::Heat, &s)).is_err(), "{text}");
        }
        let s = Settings::parse("replications=10").unwrap();
        assert!(VerifyConfig::resolve(&s).is_err());
    }
}
