pub mod attr;
pub mod baseline;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod train;
pub mod translate;

use std::path::{Path, PathBuf};

/// Default manifest location: alongside the primary output.
pub fn manifest_path(primary_output: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = primary_output
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        name.push_str(".manifest.json");
        primary_output.with_file_name(name)
    })
}
