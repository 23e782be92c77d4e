use std::path::Path;

use endofuse_core::geometry::CameraIntrinsics;
use endofuse_io::manifest::DatasetManifest;
use endofuse_synth::{
    render_sequence, CameraPathSpec, LightingSpec, Motion, RenderOptions, SceneSpec, Surface, SynthError,
};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

/// Scene, camera path and output options for the `synth` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthJob {
    pub scene: SceneSpec,
    pub path: CameraPathSpec,
    #[serde(default)]
    pub options: RenderOptions,
}

impl Default for SynthJob {
    /// A 30-frame orbit over a bumpy textured surface half a meter away,
    /// lit uniformly.
    fn default() -> Self {
        let mut scene = SceneSpec::new(Surface::Heightfield {
            amplitude: 0.03,
            frequency: 9.0,
            offset: 0.5,
        });
        scene.lighting = LightingSpec::ambient_only();
        Self {
            scene,
            path: CameraPathSpec {
                frames: 30,
                intrinsics: CameraIntrinsics::new(150.0, 150.0, 79.5, 63.5, 160, 128).expect("valid intrinsics"),
                eye: [0.0, 0.0, 0.0],
                target: [0.0, 0.0, 0.5],
                motion: Motion::Arc { step_deg: 1.0 },
            },
            options: RenderOptions::default(),
        }
    }
}

impl SynthJob {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::BadInput(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::BadInput(format!("{}: {e}", path.display())))
    }

    pub fn run(&self, out: &Path) -> Result<DatasetManifest, PipelineError> {
        render_sequence(&self.scene, &self.path, out, &self.options).map_err(|e| match e {
            SynthError::Io(io) => io.into(),
            other => PipelineError::BadInput(other.to_string()),
        })
    }
}
