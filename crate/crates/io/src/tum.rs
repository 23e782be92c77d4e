//! TUM trajectories: `timestamp tx ty tz qx qy qz qw` per line, `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use endofuse_core::geometry::{PoseSE3, RotationSO3, Vector3};
use endofuse_core::metrics::Trajectory;
use nalgebra::{Quaternion, Rotation3, UnitQuaternion};

use crate::{read_bytes, write_bytes, IoError};

/// Unit quaternion `[x, y, z, w]` with `w ≥ 0`.
pub fn quaternion(pose: &PoseSE3) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*pose.rotation().matrix()));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [q.i * s, q.j * s, q.k * s, q.w * s]
}

pub fn pose_from_quaternion(t: [f64; 3], q: [f64; 4]) -> Result<PoseSE3, String> {
    let raw = Quaternion::new(q[3], q[0], q[1], q[2]);
    let n = raw.norm();
    if !(n.is_finite() && n > 1e-6) {
        return Err(format!("degenerate quaternion {q:?}"));
    }
    let r = UnitQuaternion::from_quaternion(raw).to_rotation_matrix();
    Ok(PoseSE3::new(RotationSO3::project_matrix(r.matrix()), Vector3::from(t)))
}

pub fn format(trajectory: &Trajectory) -> String {
    let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in trajectory.stamps().iter().zip(trajectory.poses()) {
        let [x, y, z] = [0, 1, 2].map(|i| p.translation()[i]);
        let [qx, qy, qz, qw] = quaternion(p);
        // Shortest round-trip decimals keep re-read poses exact.
        writeln!(s, "{t:.6} {x} {y} {z} {qx} {qy} {qz} {qw}").expect("write to String");
    }
    s
}

pub fn write(path: &Path, trajectory: &Trajectory) -> Result<(), IoError> {
    write_bytes(path, format(trajectory).as_bytes())
}

pub fn parse(path: &Path, text: &str) -> Result<Trajectory, IoError> {
    let mut stamps = Vec::new();
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| IoError::format(path, format!("line {}: {m}", n + 1));
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad number {v:?}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(err(format!("{} columns, expected 8", vals.len())));
        }
        stamps.push(vals[0]);
        poses.push(
            pose_from_quaternion([vals[1], vals[2], vals[3]], [vals[4], vals[5], vals[6], vals[7]]).map_err(err)?,
        );
    }
    Trajectory::new(stamps, poses).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read(path: &Path) -> Result<Trajectory, IoError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| IoError::format(path, "not UTF-8 text"))?;
    parse(path, &text)
}
