#![allow(dead_code)]

use endofuse_core::geometry::CameraIntrinsics;
use endofuse_core::tracking::PseudoRGBDFrame;
use endofuse_synth::{CameraPathSpec, LightingSpec, Motion, RenderedFrame, SceneSpec, Surface};

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(90.0, 90.0, 47.5, 35.5, 96, 72).unwrap()
}

pub fn plane(z: f64) -> SceneSpec {
    SceneSpec::new(Surface::Plane {
        normal: [0.0, 0.0, 1.0],
        offset: z,
    })
}

pub fn bumpy() -> SceneSpec {
    SceneSpec::new(Surface::Heightfield {
        amplitude: 0.03,
        frequency: 9.0,
        offset: 0.5,
    })
}

/// The headlight falloff is fixed to the camera and drags direct alignment
/// with it, so tracking scenes keep brightness constant.
pub fn bumpy_unlit() -> SceneSpec {
    SceneSpec {
        lighting: LightingSpec::ambient_only(),
        ..bumpy()
    }
}

pub fn path(frames: usize, motion: Motion) -> CameraPathSpec {
    CameraPathSpec {
        frames,
        intrinsics: camera(),
        eye: [0.0, 0.0, 0.0],
        target: [0.0, 0.0, 0.5],
        motion,
    }
}

pub fn tracker_frame(index: usize, f: &RenderedFrame, k: CameraIntrinsics) -> PseudoRGBDFrame {
    PseudoRGBDFrame::new(index, f.gray.clone(), f.depth.clone(), k).unwrap()
}

/// Large enough for a four-level pyramid with a 20×16 top.
pub fn tracking_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(150.0, 150.0, 79.5, 63.5, 160, 128).unwrap()
}
