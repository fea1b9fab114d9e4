use std::fmt;
use std::path::{Path, PathBuf};

use mvcolor::optimizer::FreezeSet;
use mvcolor::{AdamConfig, DistanceMode, Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_ECHO: &str = "run_config.toml";

/// Which images of the dataset to process.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Targets {
    #[default]
    All,
    Ids(Vec<u32>),
}

impl Targets {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(Targets::All);
        }
        let ids = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| Error::InvalidArgument(format!("bad target id '{t}' (expected 'all' or a list of ids)")))
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty target list".into()));
        }
        Ok(Targets::Ids(ids))
    }

    pub fn explicit(&self) -> bool {
        matches!(self, Targets::Ids(_))
    }
}

impl fmt::Display for Targets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Targets::All => f.write_str("all"),
            Targets::Ids(ids) => {
                let parts: Vec<String> = ids.iter().map(u32::to_string).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl TryFrom<String> for Targets {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Targets::parse(&s)
    }
}

impl From<Targets> for String {
    fn from(t: Targets) -> String {
        t.to_string()
    }
}

/// Everything a `restore` or `stitch` run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub targets: Targets,
    /// Only views with `|id - target| <= window` are paired.
    pub window: Option<u32>,
    pub low_pct: f64,
    pub high_pct: f64,
    pub distance_mode: DistanceMode,
    /// Comma-separated groups among `J`, `beta`, `B`, `gamma`.
    pub freeze: String,
    pub tied: bool,
    /// Parameter file used as the starting point instead of 0.1 everywhere.
    pub init_params: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub adam: AdamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            out: PathBuf::new(),
            targets: Targets::All,
            window: None,
            low_pct: 1.0,
            high_pct: 99.0,
            distance_mode: DistanceMode::Range,
            freeze: String::new(),
            tied: false,
            init_params: None,
            seed: 0,
            jobs: 1,
            adam: AdamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::InvalidArgument(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn freeze_set(&self) -> Result<FreezeSet> {
        FreezeSet::parse(&self.freeze)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("no dataset given".into()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::InvalidArgument("no output directory given".into()));
        }
        if !(0.0..=100.0).contains(&self.low_pct) || !(0.0..=100.0).contains(&self.high_pct) || self.low_pct >= self.high_pct {
            return Err(Error::InvalidArgument(format!(
                "percentiles must satisfy 0 <= low < high <= 100 (got {}, {})",
                self.low_pct, self.high_pct
            )));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        if self.freeze_set()?.all() {
            return Err(Error::NoFreeParameters);
        }
        self.adam.validate()
    }
}
