//! Video decoding and encoding, delegated to an external ffmpeg binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Command;

use deidpose_core::ingest::frame_file_name;

use crate::error::PipelineError;

const FRAME_PATTERN: &str = "frame_%06d.png";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcoder {
    pub program: PathBuf,
}

impl Default for Transcoder {
    fn default() -> Self {
        let program = std::env::var_os("DEIDPOSE_FFMPEG").map_or_else(|| PathBuf::from("ffmpeg"), PathBuf::from);
        Self { program }
    }
}

impl Transcoder {
    /// Arguments that decode `source` to numbered upright RGB frames starting
    /// at 0, dropping audio, optionally scaled to `height`.
    pub fn decode_args(&self, source: &Path, frame_dir: &Path, height: Option<u32>) -> Vec<OsString> {
        let mut args: Vec<OsString> = ["-hide_banner", "-loglevel", "error", "-nostdin", "-y", "-i"]
            .map(OsString::from)
            .into();
        args.push(source.into());
        args.push("-an".into());
        if let Some(h) = height {
            args.push("-vf".into());
            args.push(format!("scale=-2:{h}").into());
        }
        args.extend(["-pix_fmt", "rgb24", "-start_number", "0"].map(OsString::from));
        args.push(frame_dir.join(FRAME_PATTERN).into());
        args
    }

    pub fn encode_args(&self, frame_dir: &Path, fps: f64, dest: &Path) -> Vec<OsString> {
        let mut args: Vec<OsString> = ["-hide_banner", "-loglevel", "error", "-nostdin", "-y", "-framerate"]
            .map(OsString::from)
            .into();
        args.push(fps.to_string().into());
        args.extend(["-start_number", "0", "-i"].map(OsString::from));
        args.push(frame_dir.join(FRAME_PATTERN).into());
        args.extend(["-c:v", "libx264", "-pix_fmt", "yuv420p"].map(OsString::from));
        args.push(dest.into());
        args
    }

    fn run(&self, args: Vec<OsString>) -> Result<(), PipelineError> {
        let out = Command::new(&self.program).args(&args).output().map_err(|e| {
            PipelineError::Input(format!("cannot run {}: {e}", self.program.display()))
        })?;
        if out.status.success() {
            Ok(())
        } else {
            Err(PipelineError::Input(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )))
        }
    }

    pub fn decode(&self, source: &Path, frame_dir: &Path, height: Option<u32>) -> Result<(), PipelineError> {
        std::fs::create_dir_all(frame_dir).map_err(crate::error::io_err(frame_dir))?;
        self.run(self.decode_args(source, frame_dir, height))?;
        if !frame_dir.join(frame_file_name(0)).is_file() {
            return Err(PipelineError::Input(format!("decoding {} produced no frames", source.display())));
        }
        Ok(())
    }

    pub fn encode(&self, frame_dir: &Path, fps: f64, dest: &Path) -> Result<(), PipelineError> {
        self.run(self.encode_args(frame_dir, fps, dest))
    }
}
