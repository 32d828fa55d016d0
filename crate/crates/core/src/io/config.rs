//! Flat sectioned key-value run configuration.
//!
//! ```text
//! [case]
//! name = vortex
//!
//! [adapt]
//! h_min = 0.125
//! ```
//!
//! Every run is fully described by its serialized configuration; re-running
//! the same text at the same thread count reproduces outputs bitwise.

use crate::cases::CaseDefinition;
use crate::{Error, Real, Result};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub case: CaseDefinition<T>,
    pub out_dir: Option<PathBuf>,
    /// Snapshot cadence in steps.
    pub output_every: usize,
    pub threads: usize,
    /// Seed recorded for randomized tooling; the solver itself is
    /// deterministic and never draws from it.
    pub seed: u64,
}

impl<T: Real> RunConfig<T> {
    pub fn from_case_name(name: &str) -> Result<Self> {
        Ok(Self {
            case: CaseDefinition::from_name(name)?,
            out_dir: None,
            output_every: 10,
            threads: 1,
            seed: 0,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, source: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: lineno + 1,
                    msg: format!("expected 'key = value', got '{line}'"),
                });
            };
            let full_key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.push((full_key, value.trim().to_string(), lineno + 1));
        }

        let name = entries
            .iter()
            .find(|(k, _, _)| k == "case.name")
            .map(|(_, v, _)| v.clone())
            .ok_or_else(|| Error::Config(format!("{source}: missing case.name")))?;
        let mut config = Self::from_case_name(&name)?;
        for (key, value, line) in entries {
            if key == "case.name" {
                continue;
            }
            config.set(&key, &value).map_err(|e| Error::Parse {
                path: source.to_string(),
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(config)
    }

    /// Applies one dotted-key override (also used by the CLI flags).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        let parse_t = |v: &str| -> Result<T> {
            v.parse::<f64>()
                .map(T::cst)
                .map_err(|_| bad(key))
        };
        match key {
            "case.data_dir" => self.case.data_dir = PathBuf::from(value),
            "scheme.order" => {
                let order: usize = value.parse().map_err(|_| bad(key))?;
                if !(1..=2).contains(&order) {
                    return Err(Error::Config(format!("scheme.order must be 1 or 2, got {order}")));
                }
                self.case.scheme.order = order;
                if order == 1 {
                    self.case.scheme.stabilization = false;
                }
            }
            "scheme.stabilization" => {
                self.case.scheme.stabilization = value.parse().map_err(|_| bad(key))?
            }
            "scheme.cfl0" => self.case.scheme.cfl0 = parse_t(value)?,
            "scheme.cfl_max" => self.case.scheme.cfl_max = parse_t(value)?,
            "scheme.max_iterations" => {
                self.case.scheme.max_iterations = value.parse().map_err(|_| bad(key))?
            }
            "scheme.tol_rel" => self.case.scheme.tol_rel = parse_t(value)?,
            "scheme.tol_abs" => self.case.scheme.tol_abs = parse_t(value)?,
            "adapt.every" => self.case.adapt_every = value.parse().map_err(|_| bad(key))?,
            "adapt.h_min" => self.case.metric.h_min = parse_t(value)?,
            "adapt.h_max" => self.case.metric.h_max = parse_t(value)?,
            "adapt.gradation" => self.case.metric.gradation = parse_t(value)?,
            "time.steps" => {
                let steps: usize = value.parse().map_err(|_| bad(key))?;
                if steps == 0 {
                    return Err(Error::Config("time.steps must be positive".into()));
                }
                if !self.case.is_steady() {
                    // keep the final time of the case fixed
                    let t_final = self.case.t_final();
                    self.case.dt = t_final / T::from_usize(steps).unwrap();
                }
                self.case.n_steps = steps;
            }
            "time.dt" => self.case.dt = parse_t(value)?,
            "run.out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "run.output_every" => {
                let cadence: usize = value.parse().map_err(|_| bad(key))?;
                if cadence == 0 {
                    return Err(Error::Config("run.output_every must be >= 1".into()));
                }
                self.output_every = cadence;
            }
            "run.threads" => {
                let threads: usize = value.parse().map_err(|_| bad(key))?;
                if threads == 0 {
                    return Err(Error::Config("run.threads must be >= 1".into()));
                }
                self.threads = threads;
            }
            "run.seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Complete serialization; parsing it back reproduces the run.
    pub fn to_config_string(&self) -> String {
        let f = |v: T| super::fmt_full(v);
        let mut s = String::new();
        s.push_str("[case]\n");
        s.push_str(&format!("name = {}\n", self.case.name()));
        s.push_str(&format!("data_dir = {}\n", self.case.data_dir.display()));
        s.push_str("\n[scheme]\n");
        s.push_str(&format!("order = {}\n", self.case.scheme.order));
        s.push_str(&format!("stabilization = {}\n", self.case.scheme.stabilization));
        s.push_str(&format!("cfl0 = {}\n", f(self.case.scheme.cfl0)));
        s.push_str(&format!("cfl_max = {}\n", f(self.case.scheme.cfl_max)));
        s.push_str(&format!("max_iterations = {}\n", self.case.scheme.max_iterations));
        s.push_str(&format!("tol_rel = {}\n", f(self.case.scheme.tol_rel)));
        s.push_str(&format!("tol_abs = {}\n", f(self.case.scheme.tol_abs)));
        s.push_str("\n[adapt]\n");
        s.push_str(&format!("every = {}\n", self.case.adapt_every));
        s.push_str(&format!("h_min = {}\n", f(self.case.metric.h_min)));
        s.push_str(&format!("h_max = {}\n", f(self.case.metric.h_max)));
        s.push_str(&format!("gradation = {}\n", f(self.case.metric.gradation)));
        s.push_str("\n[time]\n");
        s.push_str(&format!("steps = {}\n", self.case.n_steps));
        s.push_str(&format!("dt = {}\n", f(self.case.dt)));
        s.push_str("\n[run]\n");
        if let Some(dir) = &self.out_dir {
            s.push_str(&format!("out_dir = {}\n", dir.display()));
        }
        s.push_str(&format!("output_every = {}\n", self.output_every));
        s.push_str(&format!("threads = {}\n", self.threads));
        s.push_str(&format!("seed = {}\n", self.seed));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let mut config = RunConfig::<f64>::from_case_name("vortex").unwrap();
        config.set("adapt.h_min", "0.0625").unwrap();
        config.set("run.out_dir", "out/v").unwrap();
        config.set("scheme.order", "1").unwrap();
        let text = config.to_config_string();
        let back = RunConfig::<f64>::parse_str(&text, "mem").unwrap();
        assert_eq!(back.case.metric.h_min, 0.0625);
        assert_eq!(back.case.scheme.order, 1);
        assert_eq!(back.out_dir.as_deref(), Some(Path::new("out/v")));
        assert_eq!(back.to_config_string(), text);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = "[case]\nname = gcl\n[run]\nwarp = 9\n";
        match RunConfig::<f64>::parse_str(text, "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn steps_override_keeps_final_time() {
        let mut config = RunConfig::<f64>::from_case_name("gcl").unwrap();
        let t_final = config.case.t_final();
        config.set("time.steps", "240").unwrap();
        assert_eq!(config.case.n_steps, 240);
        assert!((config.case.t_final() - t_final).abs() < 1e-12);
    }
}
