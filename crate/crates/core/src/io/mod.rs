//! File formats: PGM images, kernel text files, GMMPRIOR model files,
//! library manifests and label-map exports.

mod bundle;
mod model;
mod pgm;

pub use bundle::{
    load_library, parse_manifest, read_kernel, read_legend, save_library, write_kernel, write_label_map, write_legend,
    ManifestEntry,
};
pub use model::{
    load_model, model_from_bytes, model_from_text, model_to_bytes, model_to_text, save_model, save_model_text,
    MODEL_MAGIC,
};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
