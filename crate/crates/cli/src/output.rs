use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dwmtj::pipeline::write_atomic;
use serde::Serialize;

use crate::commands::CliError;

/// Output directory plus a timestamped log. Timestamps only ever go to the log,
/// so result files stay byte-identical across repeated runs.
pub struct Out {
    dir: PathBuf,
    log: File,
    quiet: bool,
}

impl Out {
    pub fn open(dir: &Path, quiet: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("run.log");
        let log = File::options().create(true).append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { dir: dir.to_path_buf(), log, quiet })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Progress line: log file always, stderr unless quiet.
    pub fn info(&mut self, msg: &str) {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let _ = writeln!(self.log, "[{t:.3}] {msg}");
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Result line on stdout, also logged.
    pub fn result(&mut self, msg: &str) {
        let _ = writeln!(self.log, "{msg}");
        if !self.quiet {
            println!("{msg}");
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.info(&format!("wrote {}", path.display()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}
