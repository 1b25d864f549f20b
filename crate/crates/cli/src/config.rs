use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use bao::estimate::BaoConfig;
use bao::features::BalanceSpec;
use bao::panel::{load_panel, ColumnSchema, PanelDataset};
use bao::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;

/// Command-line flags merged over the JSON config. This is echoed into
/// every artifact, so output paths are left out of the serialized form.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<ColumnSchema>,
    pub balance: Option<BalanceSpec>,
    pub msm: Option<String>,
    pub method: Option<String>,
    pub bao: BaoConfig,
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))
}

impl RunConfig {
    /// Reads a run config; a file holding only a balance spec is accepted too.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(open(path)?))?;
        if value.get("transforms").is_some() {
            return Ok(Self { balance: Some(serde_json::from_value(value)?), ..Self::default() });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn load_data(&self) -> Result<PanelDataset> {
        let path = self.data.as_deref().ok_or_else(|| Error::Argument("no --data given".into()))?;
        load_panel(BufReader::new(open(path)?), self.schema.as_ref())
    }

    /// The configured balance spec, identity features otherwise; `delta`
    /// replaces every tolerance.
    pub fn resolve_balance(&mut self, data: &PanelDataset, delta: Option<f64>) -> Result<BalanceSpec> {
        let spec = match (&self.balance, delta) {
            (Some(s), Some(d)) => s.with_uniform_delta(d),
            (Some(s), None) => s.clone(),
            (None, d) => BalanceSpec::identity(data, d),
        };
        spec.validate(data)?;
        self.balance = Some(spec.clone());
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// CSV with the effective config as a leading `#` comment line.
pub fn write_csv_with_config(path: &Path, config: &serde_json::Value, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# config: {config}")?;
        body(w)
    })
}
