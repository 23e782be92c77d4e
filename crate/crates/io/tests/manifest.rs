use std::path::Path;

use endofuse_core::geometry::{CameraIntrinsics, DepthMap, ImageGray};
use endofuse_core::refine::FlowField;
use endofuse_io::manifest::{validate_manifest, DatasetManifest, FrameEntry};
use endofuse_io::{flo, image, pfm};

const W: usize = 8;
const H: usize = 6;

fn dataset(dir: &Path, frames: usize) -> DatasetManifest {
    let k = CameraIntrinsics::new(10.0, 10.0, 3.5, 2.5, W, H).unwrap();
    let mut entries = Vec::new();
    for i in 0..frames {
        let img = format!("images/{i:06}.png");
        let depth = format!("depth/{i:06}.pfm");
        image::write_gray8(&dir.join(&img), &ImageGray::constant(W, H, 0.5)).unwrap();
        pfm::write_map(&dir.join(&depth), &DepthMap::constant(W, H, 1.0)).unwrap();
        let mut e = FrameEntry::new(img);
        e.depth = Some(depth.into());
        if i > 0 {
            let f = format!("flow/{i:06}.flo");
            flo::write(&dir.join(&f), &FlowField::zero(W, H)).unwrap();
            e.flow = Some(f.into());
        }
        entries.push(e);
    }
    let m = DatasetManifest::new(k, entries);
    m.save(&dir.join("manifest.json")).unwrap();
    m
}

fn messages(dir: &Path) -> Vec<String> {
    validate_manifest(&dir.join("manifest.json"))
        .unwrap_err()
        .iter()
        .map(ToString::to_string)
        .collect()
}

#[test]
fn well_formed_dataset_validates() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 3);
    let m = validate_manifest(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.frames.len(), 3);
    assert_eq!(m.timestamps(), vec![0.0, 1.0 / 30.0, 2.0 / 30.0]);
}

#[test]
fn truncated_flow_names_file_and_magic() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 3);
    let p = dir.path().join("flow/000002.flo");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..3]).unwrap();
    let msgs = messages(dir.path());
    assert_eq!(msgs.len(), 1, "{msgs:?}");
    assert!(
        msgs[0].contains("000002.flo") && msgs[0].contains("202021.25"),
        "{msgs:?}"
    );
}

#[test]
fn size_mismatch_names_both_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 2);
    pfm::write_map(&dir.path().join("depth/000001.pfm"), &DepthMap::constant(5, 4, 1.0)).unwrap();
    let msgs = messages(dir.path());
    assert!(
        msgs.iter()
            .any(|m| m.contains("5x4") && m.contains("8x6") && m.contains("frame 1")),
        "{msgs:?}"
    );
}

#[test]
fn errors_are_aggregated() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = dataset(dir.path(), 3);
    std::fs::remove_file(dir.path().join("images/000000.png")).unwrap();
    m.frames[2].disparity = Some("disp/missing.pfm".into());
    m.frames[1].timestamp = Some(1.0);
    m.save(&dir.path().join("manifest.json")).unwrap();
    let msgs = messages(dir.path());
    assert!(
        msgs.iter()
            .any(|m| m.contains("000000.png") && m.contains("does not exist")),
        "{msgs:?}"
    );
    assert!(msgs.iter().any(|m| m.contains("f_pred")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("missing.pfm")), "{msgs:?}");
    assert!(msgs.iter().any(|m| m.contains("every frame or for none")), "{msgs:?}");
}

#[test]
fn unknown_keys_and_png_signature() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 2);
    std::fs::write(dir.path().join("images/000001.png"), b"GIF89a-not-a-png-file-xx").unwrap();
    let msgs = messages(dir.path());
    assert!(
        msgs.iter().any(|m| m.contains("000001.png") && m.contains("signature")),
        "{msgs:?}"
    );

    let p = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&p).unwrap().replacen("\"fps\"", "\"fsp\"", 1);
    std::fs::write(&p, text).unwrap();
    let msgs = messages(dir.path());
    assert!(msgs[0].contains("fsp"), "{msgs:?}");
}

#[test]
fn first_frame_cannot_have_flow() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = dataset(dir.path(), 2);
    m.frames[0].flow = m.frames[1].flow.clone();
    m.save(&dir.path().join("manifest.json")).unwrap();
    assert!(messages(dir.path()).iter().any(|m| m.contains("frame 0")));
}
