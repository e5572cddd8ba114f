//! Run configuration: command-line flags over an optional JSON file over defaults.

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use cluster_qec::errorsim::ErrorModel;
use cluster_qec::pipeline::{DecodeMode, TrialConfig};
use cluster_qec::LatticeDims;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Parallel,
    Both,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Global => DecodeMode::Global,
            Mode::Parallel => DecodeMode::Parallel,
            Mode::Both => DecodeMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// `20` for a cube or `nx,ny,nt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSpec {
    Cube(i32),
    Axes([i32; 3]),
}

impl DimsSpec {
    pub fn dims(self) -> cluster_qec::Result<LatticeDims> {
        match self {
            DimsSpec::Cube(n) => LatticeDims::cube(n),
            DimsSpec::Axes([x, y, t]) => LatticeDims::new(x, y, t),
        }
    }
}

fn parse_dims(s: &str) -> Result<DimsSpec, String> {
    let parts: Vec<_> = s.split([',', 'x']).map(|t| t.trim().parse::<i32>()).collect();
    match parts.as_slice() {
        [Ok(n)] => Ok(DimsSpec::Cube(*n)),
        [Ok(x), Ok(y), Ok(t)] => Ok(DimsSpec::Axes([*x, *y, *t])),
        _ => Err(format!("expected N or NX,NY,NT, got `{s}`")),
    }
}

/// Flags shared by every command. Each may also come from `LD_<FLAG>`.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON file with any of the fields below; flags take precedence.
    #[arg(long, env = "LD_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LD_SEED")]
    pub seed: Option<u64>,
    /// Phase-error probability per qubit.
    #[arg(long = "p", env = "LD_P")]
    pub p: Option<f64>,
    /// Heralded loss probability per qubit.
    #[arg(long, env = "LD_PLOSS")]
    pub ploss: Option<f64>,
    /// Code distance; sets the default edge cutoff to d/2.
    #[arg(long, env = "LD_D")]
    pub d: Option<u32>,
    /// Edge cutoff of the bounded matching graph.
    #[arg(long, env = "LD_ME")]
    pub me: Option<u32>,
    /// Window edge for parallel decoding.
    #[arg(long, env = "LD_N")]
    pub n: Option<i32>,
    /// Lattice size in cells.
    #[arg(long, env = "LD_DIMS", value_parser = parse_dims)]
    pub dims: Option<DimsSpec>,
    #[arg(long, env = "LD_TRIALS")]
    pub trials: Option<u64>,
    #[arg(long, env = "LD_MODE", value_enum)]
    pub mode: Option<Mode>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "LD_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, env = "LD_FORMAT", value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output if absent.
    #[arg(short, long, env = "LD_OUT")]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    p: Option<f64>,
    ploss: Option<f64>,
    d: Option<u32>,
    me: Option<u32>,
    n: Option<i32>,
    dims: Option<DimsSpec>,
    trials: Option<u64>,
    mode: Option<Mode>,
    jobs: Option<usize>,
    format: Option<Format>,
}

/// Fully resolved configuration, echoed into output headers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub dims: [i32; 3],
    pub p: f64,
    pub ploss: f64,
    pub d: u32,
    pub me: u32,
    pub n: Option<i32>,
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    pub jobs: Option<usize>,
    pub format: Format,
}

pub const DEFAULT_D: u32 = 12;
pub const DEFAULT_EDGE: i32 = 20;
pub const DEFAULT_P: f64 = 1e-4;

impl Common {
    pub fn resolve(&self, command: &'static str, default_trials: u64) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<FileConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let me = self.me.or(file.me);
        let d = self.d.or(file.d).or(me.map(|m| 2 * m)).unwrap_or(DEFAULT_D);
        let me = me.unwrap_or(d / 2);
        let dims = self.dims.or(file.dims).unwrap_or(DimsSpec::Cube(DEFAULT_EDGE)).dims()?;
        let cfg = RunConfig {
            command,
            dims: dims.extents(),
            p: self.p.or(file.p).unwrap_or(DEFAULT_P),
            ploss: self.ploss.or(file.ploss).unwrap_or(0.0),
            d,
            me,
            n: self.n.or(file.n),
            trials: self.trials.or(file.trials).unwrap_or(default_trials),
            seed: self.seed.or(file.seed).unwrap_or(0),
            mode: self.mode.or(file.mode).unwrap_or(Mode::Global),
            jobs: self.jobs.or(file.jobs),
            format: self.format.or(file.format).unwrap_or(Format::Csv),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        ErrorModel::new(self.p, self.ploss, self.seed)?;
        if self.me < 1 {
            bail!("the edge cutoff must be at least 1 (got --me {}, --d {})", self.me, self.d);
        }
        if self.trials < 1 {
            bail!("--trials must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }

    pub fn lattice(&self) -> LatticeDims {
        let [x, y, t] = self.dims;
        LatticeDims::new(x, y, t).expect("validated on resolve")
    }

    pub fn trial_config(&self) -> Result<TrialConfig> {
        let mut c = TrialConfig::new(self.lattice(), self.p, self.me, self.trials, self.seed);
        c.p_loss = self.ploss;
        c.n = self.n;
        c.mode = self.mode.into();
        c.validate()?;
        Ok(c)
    }

    /// One-line JSON echo for output headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse_both_forms() {
        assert_eq!(parse_dims("20"), Ok(DimsSpec::Cube(20)));
        assert_eq!(parse_dims("4,22,22"), Ok(DimsSpec::Axes([4, 22, 22])));
        assert_eq!(parse_dims("4x5x6"), Ok(DimsSpec::Axes([4, 5, 6])));
        assert!(parse_dims("4,5").is_err());
        assert!(parse_dims("a").is_err());
    }

    #[test]
    fn cutoff_follows_distance() {
        let c = Common { d: Some(9), ..Default::default() }.resolve("t", 1).unwrap();
        assert_eq!((c.d, c.me), (9, 4));
        let c = Common { me: Some(7), ..Default::default() }.resolve("t", 1).unwrap();
        assert_eq!((c.d, c.me), (14, 7));
        let c = Common::default().resolve("t", 3).unwrap();
        assert_eq!((c.d, c.me, c.trials, c.dims), (DEFAULT_D, DEFAULT_D / 2, 3, [DEFAULT_EDGE; 3]));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "p": 0.001, "dims": [4, 6, 8], "mode": "both"}"#).unwrap();
        let common = Common { config: Some(path.clone()), seed: Some(9), ..Default::default() };
        let c = common.resolve("t", 1).unwrap();
        assert_eq!((c.seed, c.p, c.dims, c.mode), (9, 0.001, [4, 6, 8], Mode::Both));

        std::fs::write(&path, r#"{"sed": 5}"#).unwrap();
        assert!(Common { config: Some(path), ..Default::default() }.resolve("t", 1).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Common { p: Some(1.5), ..Default::default() }.resolve("t", 1).is_err());
        assert!(Common { d: Some(1), ..Default::default() }.resolve("t", 1).is_err());
        assert!(Common { dims: Some(DimsSpec::Cube(1)), ..Default::default() }.resolve("t", 1).is_err());
        assert!(Common { trials: Some(0), ..Default::default() }.resolve("t", 1).is_err());
    }
}
