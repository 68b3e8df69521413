use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use ichea::timetabling::{canonical_name, dataset_paths, documented_counts, parse_instance, read_metadata};
use ichea::Instance;

/// Where an instance's `.crs`/`.stu` files and slot count come from.
#[derive(Args, Clone, Debug)]
pub struct InstanceArgs {
    /// Dataset name (e.g. `sta-f-83`, `Sta83`) or a path stem such that
    /// `<stem>.crs` and `<stem>.stu` exist.
    #[arg(long)]
    pub instance: String,
    /// Number of timeslots; looked up in the metadata file when omitted.
    #[arg(long)]
    pub slots: Option<u16>,
    /// Dataset directory; defaults to `$ICHEA_DATA_DIR`, then `data`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// `name T` metadata file; defaults to `<data-dir>/instances.txt`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

pub fn data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("ICHEA_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

impl InstanceArgs {
    pub fn files(&self) -> (PathBuf, PathBuf) {
        let stem = PathBuf::from(&self.instance);
        let crs = stem.with_extension("crs");
        let stu = stem.with_extension("stu");
        if crs.is_file() && stu.is_file() {
            return (crs, stu);
        }
        dataset_paths(&data_dir(self.data_dir.as_deref()), &self.instance)
    }

    pub fn slots(&self) -> anyhow::Result<u16> {
        if let Some(t) = self.slots {
            return Ok(t);
        }
        let name = canonical_name(
            Path::new(&self.instance)
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or(&self.instance),
        );
        let metadata = self
            .metadata
            .clone()
            .unwrap_or_else(|| data_dir(self.data_dir.as_deref()).join("instances.txt"));
        if metadata.is_file() {
            let entries = read_metadata(&metadata)?;
            if let Some((_, t)) = entries.iter().find(|(n, _)| canonical_name(n) == name) {
                return Ok(*t);
            }
        }
        match documented_counts(&name) {
            Some((_, _, t)) => Ok(t),
            None => bail!("no slot count known for {:?}; pass --slots", self.instance),
        }
    }

    pub fn load(&self) -> anyhow::Result<Instance> {
        let (crs, stu) = self.files();
        let slots = self.slots()?;
        if slots == 0 {
            bail!("--slots must be positive");
        }
        parse_instance(&crs, &stu, slots)
            .with_context(|| format!("loading instance {:?}", self.instance))
    }
}

/// Loads `name` from `dir` with slot count `slots`, for suite runs.
pub fn load_named(dir: &Path, name: &str, slots: u16) -> anyhow::Result<Instance> {
    let (crs, stu) = dataset_paths(dir, name);
    Ok(parse_instance(&crs, &stu, slots)?)
}
