#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use endofuse::synth::SynthJob;
use endofuse_core::geometry::CameraIntrinsics;
use endofuse_io::manifest::DatasetManifest;
use endofuse_synth::Motion;

/// Default scene and arc on a smaller sensor.
pub fn small_job(frames: usize) -> SynthJob {
    let mut job = SynthJob::default();
    job.path.frames = frames;
    job.path.intrinsics = CameraIntrinsics::new(120.0, 120.0, 63.5, 47.5, 128, 96).unwrap();
    job.path.motion = Motion::Arc { step_deg: 1.0 };
    job
}

pub fn synth(job: &SynthJob, out: &Path) -> DatasetManifest {
    job.run(out).unwrap()
}

pub fn endofuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endofuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
