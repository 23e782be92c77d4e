//! Trajectory and depth-consistency evaluation.

mod depth;
mod trajectory;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use depth::{
    correspondences_from_flow, depth_consistency_stats, Correspondence, DisplacementStats, MIN_CORRESPONDENCES,
};
pub use trajectory::{
    absolute_errors, associate, path_length, proportion_below_mean, relative_pose_error, rigid_alignment,
    trajectory_length_ratio, AbsoluteErrors, PairedTrajectory, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no timestamps could be paired")]
    NoMatches,
    #[error("need at least {needed} poses, found {found}")]
    TooShort { needed: usize, found: usize },
    #[error("ground-truth trajectory has zero length")]
    ZeroLengthGroundTruth,
    #[error("frame pair {pair} has {found} usable correspondences, need {MIN_CORRESPONDENCES}")]
    InsufficientCorrespondences { pair: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Seconds.
    pub max_dt: f64,
    /// Frames.
    pub rpe_delta: usize,
    /// Rigidly align the estimate to the ground truth before scoring.
    pub align: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            max_dt: 0.02,
            rpe_delta: 1,
            align: false,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(series: &[f64]) -> (f64, f64) {
    if series.is_empty() {
        return (0.0, 0.0);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn max(series: &[f64]) -> f64 {
    series.iter().copied().fold(0.0, f64::max)
}

/// Translations in mm, rotations in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub frames: usize,
    pub aligned: bool,
    pub t_avg: f64,
    pub t_std: f64,
    pub r_avg: f64,
    pub r_std: f64,
    pub rmse: f64,
    pub t_fin: f64,
    pub r_fin: f64,
    pub rpe_avg: f64,
    pub rpe_std: f64,
    pub t_max: f64,
    pub r_max: f64,
    pub pct_t_below_avg: f64,
    pub pct_r_below_avg: f64,
    pub tlr: f64,
    /// Mean `|Δt|` along x, y, z.
    pub axis_mean: [f64; 3],
}

pub fn report(est: &Trajectory, gt: &Trajectory, config: &ReportConfig) -> Result<PoseErrorReport, MetricsError> {
    let mut pairs = associate(est, gt, config.max_dt)?;
    if config.align {
        let a = rigid_alignment(&pairs);
        pairs.est.iter_mut().for_each(|p| *p = a * *p);
    }
    let abs = absolute_errors(&pairs);
    let rpe = relative_pose_error(&pairs, config.rpe_delta)?;
    let tlr = trajectory_length_ratio(&pairs.est, &pairs.gt)?;
    let (t_avg, t_std) = mean_std(&abs.translation);
    let (r_avg, r_std) = mean_std(&abs.rotation);
    let (rpe_avg, rpe_std) = mean_std(&rpe);
    let n = pairs.len() as f64;
    let axis_mean = [0, 1, 2].map(|d| abs.per_axis.iter().map(|a| a[d]).sum::<f64>() / n);
    Ok(PoseErrorReport {
        frames: pairs.len(),
        aligned: config.align,
        t_avg,
        t_std,
        r_avg,
        r_std,
        rmse: (abs.translation.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        t_fin: *abs.translation.last().expect("non-empty"),
        r_fin: *abs.rotation.last().expect("non-empty"),
        rpe_avg,
        rpe_std,
        t_max: max(&abs.translation),
        r_max: max(&abs.rotation),
        pct_t_below_avg: proportion_below_mean(&abs.translation),
        pct_r_below_avg: proportion_below_mean(&abs.rotation),
        tlr,
        axis_mean,
    })
}

const FLOAT_COLUMNS: [&str; 17] = [
    "t_avg_mm",
    "t_std_mm",
    "r_avg_deg",
    "r_std_deg",
    "rmse_mm",
    "t_fin_mm",
    "r_fin_deg",
    "rpe_avg_mm",
    "rpe_std_mm",
    "t_max_mm",
    "r_max_deg",
    "pct_t_below_avg",
    "pct_r_below_avg",
    "tlr",
    "axis_x_mm",
    "axis_y_mm",
    "axis_z_mm",
];

impl PoseErrorReport {
    fn floats(&self) -> [f64; 17] {
        [
            self.t_avg,
            self.t_std,
            self.r_avg,
            self.r_std,
            self.rmse,
            self.t_fin,
            self.r_fin,
            self.rpe_avg,
            self.rpe_std,
            self.t_max,
            self.r_max,
            self.pct_t_below_avg,
            self.pct_r_below_avg,
            self.tlr,
            self.axis_mean[0],
            self.axis_mean[1],
            self.axis_mean[2],
        ]
    }

    pub fn csv_header() -> String {
        format!("sequence,frames,aligned,{}", FLOAT_COLUMNS.join(","))
    }

    /// One row, floats at 9 significant digits. Commas in `sequence` become
    /// underscores.
    pub fn to_csv_row(&self, sequence: &str) -> String {
        let mut row = format!("{},{},{}", sequence.replace(',', "_"), self.frames, self.aligned);
        for v in self.floats() {
            write!(row, ",{v:.8e}").expect("write to String");
        }
        row
    }

    pub fn from_csv_row(row: &str) -> Result<(String, Self), MetricsError> {
        let cells: Vec<&str> = row.trim_end().split(',').collect();
        if cells.len() != 3 + FLOAT_COLUMNS.len() {
            return Err(MetricsError::Invalid(format!(
                "expected {} columns, found {}",
                3 + FLOAT_COLUMNS.len(),
                cells.len()
            )));
        }
        let bad = |c: &str| MetricsError::Invalid(format!("bad cell {c:?}"));
        let frames = cells[1].parse().map_err(|_| bad(cells[1]))?;
        let aligned = cells[2].parse().map_err(|_| bad(cells[2]))?;
        let mut f = [0.0; 17];
        for (slot, c) in f.iter_mut().zip(&cells[3..]) {
            *slot = c.parse().map_err(|_| bad(c))?;
        }
        Ok((
            cells[0].to_string(),
            Self {
                frames,
                aligned,
                t_avg: f[0],
                t_std: f[1],
                r_avg: f[2],
                r_std: f[3],
                rmse: f[4],
                t_fin: f[5],
                r_fin: f[6],
                rpe_avg: f[7],
                rpe_std: f[8],
                t_max: f[9],
                r_max: f[10],
                pct_t_below_avg: f[11],
                pct_r_below_avg: f[12],
                tlr: f[13],
                axis_mean: [f[14], f[15], f[16]],
            },
        ))
    }

    /// Aligned text table in the usual column order.
    pub fn to_text(&self, sequence: &str) -> String {
        let head = [
            "Sequence",
            "T_avg(mm)",
            "R_avg(deg)",
            "RMSE(mm)",
            "T_fin(mm)",
            "R_fin(deg)",
            "RPE(mm)",
            "T_max(mm)",
            "R_max(deg)",
            "T<T_avg(%)",
            "R<R_avg(%)",
            "TLR",
        ];
        let pm = |m: f64, s: f64| format!("{m:.3} ± {s:.3}");
        let cells = [
            sequence.to_string(),
            pm(self.t_avg, self.t_std),
            pm(self.r_avg, self.r_std),
            format!("{:.3}", self.rmse),
            format!("{:.3}", self.t_fin),
            format!("{:.3}", self.r_fin),
            pm(self.rpe_avg, self.rpe_std),
            format!("{:.3}", self.t_max),
            format!("{:.3}", self.r_max),
            format!("{:.1}", self.pct_t_below_avg),
            format!("{:.1}", self.pct_r_below_avg),
            format!("{:.3}", self.tlr),
        ];
        let widths: Vec<usize> = head
            .iter()
            .zip(&cells)
            .map(|(h, c)| h.chars().count().max(c.chars().count()))
            .collect();
        let line = |xs: &mut dyn Iterator<Item = &str>| {
            xs.zip(&widths)
                .map(|(x, w)| format!("{x:>w$}", w = *w))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(&mut head.iter().copied());
        out.push('\n');
        out.push_str(&line(&mut cells.iter().map(String::as_str)));
        writeln!(
            out,
            "\nper-axis |dt| (mm): x {:.3}  y {:.3}  z {:.3}{}",
            self.axis_mean[0],
            self.axis_mean[1],
            self.axis_mean[2],
            if self.aligned { "  (rigidly aligned)" } else { "" }
        )
        .expect("write to String");
        out
    }
}
