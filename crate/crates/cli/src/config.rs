//! Run configuration: built-in defaults, then a TOML file, then `--set`
//! overrides, each layer a deep merge over the previous one.

use std::path::{Path, PathBuf};

use clmds::kernel::KernelConfig;
use clmds::{ClmdsConfig, HierarchySpec, Metric};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{read_to_string, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Square dissimilarity matrix.
    Distances,
    /// Vectors compared by Euclidean distance.
    Features,
    /// Vectors compared through the polynomial kernel.
    Descriptors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub kind: InputKind,
    pub path: PathBuf,
    /// First field of each row is a point id.
    pub id_column: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub zeta: f64,
    pub eta: u32,
    pub normalize: bool,
    /// Medoid-weighted distances in the anchor MDS.
    pub weighted: bool,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        Self { zeta: k.zeta, eta: k.eta, normalize: k.normalize, weighted: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub kernel: KernelSection,
    pub clmds: ClmdsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig { kind: InputKind::Features, path: PathBuf::new(), id_column: false },
            kernel: KernelSection::default(),
            clmds: ClmdsConfig::new(HierarchySpec::flat(10).expect("non-empty hierarchy")),
            output: OutputConfig { dir: PathBuf::from("out"), plot: false },
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with the file at `path` (if any) and then `sets`
    /// (`dotted.key=value`). Relative paths in the file are resolved against
    /// its directory; those given with `--set` against the working directory.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut value = Value::try_from(RunConfig::default()).map_err(|e| CliError::config(e.to_string()))?;
        if let Some(path) = path {
            let text = read_to_string(path)?;
            let mut user: Table =
                toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for (section, key) in [("input", "path"), ("output", "dir")] {
                if let Some(Value::String(p)) = user.get_mut(section).and_then(|s| s.get_mut(key)) {
                    *p = base.join(&*p).to_string_lossy().into_owned();
                }
            }
            merge(&mut value, Value::Table(user));
        }
        for s in sets {
            let (key, raw) =
                s.split_once('=').ok_or_else(|| CliError::config(format!("--set {s:?}: expected key=value")))?;
            set_path(&mut value, key.trim(), parse_override(raw.trim()))?;
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.input.path.as_os_str().is_empty() {
            return Err(CliError::config("input.path is not set"));
        }
        if !self.input.path.is_file() {
            return Err(CliError::config(format!("input file {} does not exist", self.input.path.display())));
        }
        self.metric().map(drop)
    }

    /// Vector metric for `features` and `descriptors` input, `None` for distances.
    pub fn metric(&self) -> Result<Option<Metric>, CliError> {
        Ok(match self.input.kind {
            InputKind::Distances => None,
            InputKind::Features => Some(Metric::Euclidean),
            InputKind::Descriptors => {
                let k = &self.kernel;
                let kernel = KernelConfig { zeta: k.zeta, eta: k.eta, normalize: k.normalize };
                kernel.validate()?;
                Some(Metric::Kernel { kernel, weighted: k.weighted })
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A TOML value, or the raw text as a string when it is not one.
fn parse_override(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("--set: bad key {key:?}")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let Value::Table(t) = cur else {
            return Err(CliError::config(format!("--set {key}: {p} is not a table")));
        };
        cur = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
    }
    let Value::Table(t) = cur else {
        return Err(CliError::config(format!("--set {key}: parent is not a table")));
    };
    let last = parts[parts.len() - 1].to_string();
    match t.get_mut(&last) {
        Some(slot) => merge(slot, v),
        None => {
            t.insert(last, v);
        }
    }
    Ok(())
}
