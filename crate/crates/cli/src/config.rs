//! Run configuration shared by every subcommand: defaults, an optional TOML
//! file, and command-line flags, merged in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use extsource_core::{SourceSpec, WeightSpec};

use crate::CliError;

pub const DEFAULT_POTENTIAL: [f64; 3] = [0.0, 0.0, 1.0];
pub const DEFAULT_N: usize = 6;
pub const DEFAULT_SOURCE: [f64; 2] = [1.0, -0.5];
pub const DEFAULT_GRID: &str = "-4:6:21";
pub const DEFAULT_S_GRID: &str = "0:6:13";
pub const DEFAULT_COUNT: usize = 1000;
pub const DEFAULT_SEED: u64 = 0;

/// Evenly spaced points `lo, ..., hi`; a single point when `count = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + i as f64 * step })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid '{s}' must have the form lo:hi:count"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("grid '{s}': '{p}' is not a number"));
        let (lo, hi) = (num(parts[0])?, num(parts[1])?);
        let count: usize = parts[2].trim().parse().map_err(|_| format!("grid '{s}': count '{}' is not a positive integer", parts[2]))?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err(format!("grid '{s}': endpoints must be finite"));
        }
        if count == 0 {
            return Err(format!("grid '{s}': count must be at least 1"));
        }
        if count > 1 && !(lo < hi) {
            return Err(format!("grid '{s}': lo must be below hi when count > 1"));
        }
        Ok(Self { lo, hi, count })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.count)
    }
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Flags accepted by every subcommand. Each one overrides the same key in
/// the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the keys below
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Ascending coefficients v_0,v_1,...,v_d of V(x) (even degree, positive leading term)
    #[arg(long, global = true, value_name = "LIST", allow_hyphen_values = true)]
    pub potential: Option<String>,

    /// Matrix dimension
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// Distinct nonzero source eigenvalues, comma separated
    #[arg(long, global = true, value_name = "LIST", allow_hyphen_values = true)]
    pub source: Option<String>,

    /// Kernel grid lo:hi:count, used on both axes
    #[arg(long, global = true, value_name = "LO:HI:COUNT", allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// Evaluation points s for the largest-eigenvalue law
    #[arg(long = "s-grid", global = true, value_name = "LO:HI:COUNT", allow_hyphen_values = true)]
    pub s_grid: Option<String>,

    /// Starting size of the shared quadrature rule (doubled until stable)
    #[arg(long, global = true, value_name = "NODES")]
    pub quadrature: Option<usize>,

    /// Number of sampled matrices
    #[arg(long, global = true)]
    pub count: Option<usize>,

    /// Sampling seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output CSV; a JSON summary is written next to it
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Keys of the TOML config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub potential: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub source: Option<Vec<f64>>,
    pub grid: Option<String>,
    pub s_grid: Option<String>,
    pub quadrature: Option<usize>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub oracle: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }
}

/// Validated configuration, echoed verbatim into the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub potential: Vec<f64>,
    pub n: usize,
    pub source: Vec<f64>,
    pub grid: Grid,
    pub s_grid: Grid,
    pub quadrature: Option<usize>,
    pub count: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub oracle: bool,
    #[serde(skip)]
    pub weight: WeightSpec,
}

fn parse_list(field: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("--{field}: '{}' is not a number", p.trim())))
        })
        .collect()
}

fn parse_grid(field: &str, text: &str) -> Result<Grid, CliError> {
    text.parse().map_err(|e| CliError::Config(format!("--{field}: {e}")))
}

impl RunConfig {
    /// Merge defaults, `file` and `args`; `oracle` is the verify flag.
    pub fn resolve(args: &RunArgs, file: Option<FileConfig>, oracle: bool) -> Result<Self, CliError> {
        let file = file.unwrap_or_default();
        let potential = match &args.potential {
            Some(p) => parse_list("potential", p)?,
            None => file.potential.unwrap_or_else(|| DEFAULT_POTENTIAL.to_vec()),
        };
        let source = match &args.source {
            Some(s) => parse_list("source", s)?,
            None => file.source.unwrap_or_else(|| DEFAULT_SOURCE.to_vec()),
        };
        let grid = parse_grid("grid", args.grid.as_deref().or(file.grid.as_deref()).unwrap_or(DEFAULT_GRID))?;
        let s_grid = parse_grid("s-grid", args.s_grid.as_deref().or(file.s_grid.as_deref()).unwrap_or(DEFAULT_S_GRID))?;
        let n = args.n.or(file.n).unwrap_or(DEFAULT_N);
        let quadrature = args.quadrature.or(file.quadrature);
        let count = args.count.or(file.count).unwrap_or(DEFAULT_COUNT);
        let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let out = args.out.clone().or(file.out);
        let oracle = oracle || file.oracle.unwrap_or(false);

        if n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if count == 0 {
            return Err(CliError::Config("count must be at least 1".into()));
        }
        if let Some(q) = quadrature {
            if q < 2 {
                return Err(CliError::Config(format!("quadrature size must be at least 2 (got {q})")));
            }
        }
        let weight = WeightSpec::new(potential.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { potential, n, source, grid, s_grid, quadrature, count, seed, out, oracle, weight })
    }

    /// The validated source; not needed by every subcommand.
    pub fn source_spec(&self) -> Result<SourceSpec, CliError> {
        SourceSpec::new(self.n, self.source.clone()).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(f: impl FnOnce(&mut RunArgs)) -> RunArgs {
        let mut a = RunArgs::default();
        f(&mut a);
        a
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&RunArgs::default(), None, false).unwrap();
        assert_eq!(c.potential, vec![0.0, 0.0, 1.0]);
        assert_eq!((c.n, c.source.clone()), (6, vec![1.0, -0.5]));
        assert_eq!(c.grid, Grid { lo: -4.0, hi: 6.0, count: 21 });
        assert!(c.weight.is_standard_gaussian());
        assert!(c.source_spec().is_ok());
    }

    #[test]
    fn flag_example() {
        let a = args(|a| {
            a.potential = Some("0,0,1".into());
            a.n = Some(4);
            a.source = Some("1.0".into());
        });
        let c = RunConfig::resolve(&a, None, false).unwrap();
        let spec = c.source_spec().unwrap();
        assert!(c.weight.is_standard_gaussian());
        assert_eq!((spec.n(), spec.r()), (4, 1));
    }

    #[test]
    fn rejects_invariants() {
        let dup = RunConfig::resolve(&args(|a| a.source = Some("1.0,1.0".into())), None, false).unwrap();
        let msg = dup.source_spec().unwrap_err().to_string();
        assert!(msg.contains("source eigenvalues must be distinct"), "{msg}");

        let odd = RunConfig::resolve(&args(|a| a.potential = Some("0,0,0,1".into())), None, false).unwrap_err();
        assert!(odd.to_string().contains("degree must be even"), "{odd}");
        assert!(RunConfig::resolve(&args(|a| a.grid = Some("1:0:3".into())), None, false).is_err());
        assert!(RunConfig::resolve(&args(|a| a.source = Some("1,x".into())), None, false).is_err());
    }

    #[test]
    fn file_then_flags() {
        let file = FileConfig::parse("potential = [0.0, 0.0, 0.0, 0.0, 1.0]\nn = 4\nsource = [2.0]\nseed = 9\n").unwrap();
        let c = RunConfig::resolve(&args(|a| a.n = Some(2)), Some(file.clone()), false).unwrap();
        assert_eq!((c.n, c.seed, c.source.clone()), (2, 9, vec![2.0]));
        assert_eq!(c.weight.degree(), 4);

        // the same values as flags parse to the same config
        let flags = args(|a| {
            a.potential = Some("0,0,0,0,1".into());
            a.n = Some(4);
            a.source = Some("2".into());
            a.seed = Some(9);
        });
        let from_flags = RunConfig::resolve(&flags, None, false).unwrap();
        let from_file = RunConfig::resolve(&RunArgs::default(), Some(file), false).unwrap();
        assert_eq!(serde_json::to_string(&from_flags).unwrap(), serde_json::to_string(&from_file).unwrap());
        assert!(FileConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn grid_points() {
        assert_eq!("0:0:1".parse::<Grid>().unwrap().points(), vec![0.0]);
        let g: Grid = "-4:6:21".parse().unwrap();
        let p = g.points();
        assert_eq!((p.len(), p[0], p[20]), (21, -4.0, 6.0));
        assert!((p[1] + 3.5).abs() < 1e-15);
        assert!("1:2".parse::<Grid>().is_err());
        assert!("0:1:0".parse::<Grid>().is_err());
    }
}
