//! Validation metrics, regular field grids, error maps and their files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FieldSample, Polygon};
use crate::network::{Field, FieldNetworkSet, FieldValues};
use crate::physics::{FlowState, RefScales};

/// Floor added to absolute errors before taking the logarithm.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("empty validation set")]
    EmptyValidation,
    #[error("grid needs at least 2x2 nodes, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid bounds are degenerate")]
    DegenerateBounds,
    #[error("every grid cell is masked")]
    AllMasked,
    #[error("grid file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("metrics serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Relative L2 error per field over a validation cloud. Fields whose true
/// values are all zero report the absolute RMSE instead and are listed in
/// `absolute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub n_points: usize,
    pub rel_err_u: f64,
    pub rel_err_v: f64,
    pub rel_err_p: f64,
    pub rel_err_k: f64,
    pub rel_err_eps: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absolute: Vec<String>,
}

impl ValidationMetrics {
    pub fn get(&self, field: Field) -> f64 {
        match field {
            Field::U => self.rel_err_u,
            Field::V => self.rel_err_v,
            Field::P => self.rel_err_p,
            Field::K => self.rel_err_k,
            Field::Eps => self.rel_err_eps,
        }
    }
}

fn truth(s: &FieldSample, field: Field) -> f64 {
    match field {
        Field::U => s.u,
        Field::V => s.v,
        Field::P => s.p,
        Field::K => s.k,
        Field::Eps => s.eps,
    }
}

/// Metrics from predictions already evaluated at the validation points.
pub fn metrics_from_predictions(
    pred: &[FieldValues],
    points: &[FieldSample],
) -> Result<ValidationMetrics, ReportError> {
    if points.is_empty() {
        return Err(ReportError::EmptyValidation);
    }
    let mut errs = [0.0; 5];
    let mut absolute = Vec::new();
    for field in Field::ALL {
        let (mut num, mut den) = (0.0, 0.0);
        for (f, s) in pred.iter().zip(points) {
            let t = truth(s, field);
            let e = f.get(field) - t;
            num += e * e;
            den += t * t;
        }
        errs[field.index()] = if den > 0.0 {
            (num / den).sqrt()
        } else {
            absolute.push(field.name().to_string());
            (num / points.len() as f64).sqrt()
        };
    }
    Ok(ValidationMetrics {
        n_points: points.len(),
        rel_err_u: errs[0],
        rel_err_v: errs[1],
        rel_err_p: errs[2],
        rel_err_k: errs[3],
        rel_err_eps: errs[4],
        absolute,
    })
}

/// `‖φ_pred − φ_true‖₂ / ‖φ_true‖₂` for each field at Reynolds number `re`.
pub fn validation_errors(
    net: &FieldNetworkSet,
    points: &[FieldSample],
    re: f64,
) -> Result<ValidationMetrics, ReportError> {
    let coords: Vec<[f64; 3]> = points.iter().map(|s| [s.x, s.y, re]).collect();
    metrics_from_predictions(&net.predict_batch(&coords), points)
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Names ordered from lowest to highest error.
pub fn rank_by_error(entries: &[(String, f64)]) -> Vec<String> {
    let mut e = entries.to_vec();
    e.sort_by(|a, b| a.1.total_cmp(&b.1));
    e.into_iter().map(|(n, _)| n).collect()
}

/// Quantity sampled on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridVariable {
    Field(Field),
    SpeedMagnitude,
}

impl GridVariable {
    pub fn name(self) -> String {
        match self {
            GridVariable::Field(f) => f.name().to_string(),
            GridVariable::SpeedMagnitude => "speed".to_string(),
        }
    }

    fn of(self, s: &FlowState) -> f64 {
        match self {
            GridVariable::Field(Field::U) => s.u,
            GridVariable::Field(Field::V) => s.v,
            GridVariable::Field(Field::P) => s.p,
            GridVariable::Field(Field::K) => s.k,
            GridVariable::Field(Field::Eps) => s.eps,
            GridVariable::SpeedMagnitude => s.u.hypot(s.v),
        }
    }
}

/// Node counts and bounds of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(ReportError::GridTooSmall {
                nx: self.nx,
                ny: self.ny,
            });
        }
        let ok = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite())
            && self.xmax > self.xmin
            && self.ymax > self.ymin;
        if ok {
            Ok(())
        } else {
            Err(ReportError::DegenerateBounds)
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xmin + (self.xmax - self.xmin) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.ymin + (self.ymax - self.ymin) * j as f64 / (self.ny - 1) as f64
    }

    /// Nearest node of a point inside the bounds.
    pub fn nearest(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.xmin) / (self.xmax - self.xmin) * (self.nx - 1) as f64;
        let fy = (y - self.ymin) / (self.ymax - self.ymin) * (self.ny - 1) as f64;
        let (i, j) = (fx.round(), fy.round());
        if i < 0.0
            || j < 0.0
            || i > (self.nx - 1) as f64
            || j > (self.ny - 1) as f64
            || !(fx.is_finite() && fy.is_finite())
        {
            return None;
        }
        Some((i as usize, j as usize))
    }

    fn scaled(&self, length: f64) -> Self {
        Self {
            xmin: self.xmin * length,
            xmax: self.xmax * length,
            ymin: self.ymin * length,
            ymax: self.ymax * length,
            ..*self
        }
    }
}

/// Values on the nodes of a regular grid, row-major with `y` varying
/// slowest. Masked nodes hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub variable: String,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_nan()
    }

    /// Node of the largest unmasked value.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (n, &v) in self.values.iter().enumerate() {
            if !v.is_nan() && best.is_none_or(|(_, b)| v > b) {
                best = Some((n, v));
            }
        }
        best.map(|(n, _)| (n % self.spec.nx, n / self.spec.nx))
    }

    /// Exact comparison treating masked nodes as equal.
    pub fn same_as(&self, other: &FieldGrid, tol: f64) -> bool {
        self.spec == other.spec
            && self.variable == other.variable
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0))
    }
}

/// Network prediction of `variable` on the grid nodes, in dimensional units.
/// `spec` is given in nondimensional coordinates; nodes inside `obstacle`
/// are masked.
pub fn field_grid(
    net: &FieldNetworkSet,
    spec: &GridSpec,
    variable: GridVariable,
    re: f64,
    scales: &RefScales,
    obstacle: Option<&Polygon>,
) -> Result<FieldGrid, ReportError> {
    spec.validate()?;
    let nodes: Vec<(usize, usize)> = (0..spec.ny).flat_map(|j| (0..spec.nx).map(move |i| (i, j))).collect();
    let coords: Vec<[f64; 3]> = nodes.iter().map(|&(i, j)| [spec.x(i), spec.y(j), re]).collect();
    let pred = net.predict_batch(&coords);
    let values = nodes
        .par_iter()
        .zip(pred.par_iter())
        .map(|(&(i, j), f)| {
            let (x, y) = (spec.x(i), spec.y(j));
            if obstacle.is_some_and(|p| p.contains(x, y)) {
                return f64::NAN;
            }
            let state = FlowState {
                x,
                y,
                u: f.u,
                v: f.v,
                p: f.p,
                k: f.k,
                eps: f.eps,
            };
            variable.of(&scales.denormalize(&state))
        })
        .collect();
    Ok(FieldGrid {
        spec: spec.scaled(scales.length),
        variable: variable.name(),
        values,
    })
}

/// Error map from scattered absolute errors: each node takes the largest
/// error among the points nearest to it, then `log(err + δ)` is min-max
/// normalized to `[0, 1]` over nodes that received points. Nodes without
/// points are masked.
pub fn error_map_from(errors: &[(f64, f64, f64)], spec: &GridSpec, variable: &str) -> Result<FieldGrid, ReportError> {
    spec.validate()?;
    let mut cells = vec![f64::NAN; spec.nx * spec.ny];
    for &(x, y, e) in errors {
        if let Some((i, j)) = spec.nearest(x, y) {
            let c = &mut cells[j * spec.nx + i];
            let e = e.abs();
            if c.is_nan() || e > *c {
                *c = e;
            }
        }
    }
    let logs: Vec<f64> = cells
        .iter()
        .map(|&c| if c.is_nan() { c } else { (c + ERROR_FLOOR).ln() })
        .collect();
    let live = logs.iter().filter(|v| !v.is_nan());
    let lo = live.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = live.cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(ReportError::AllMasked);
    }
    let span = hi - lo;
    let values = logs
        .iter()
        .map(|&v| {
            if v.is_nan() {
                v
            } else if span > 0.0 {
                (v - lo) / span
            } else {
                0.0
            }
        })
        .collect();
    Ok(FieldGrid {
        spec: *spec,
        variable: format!("log_error_{variable}"),
        values,
    })
}

/// Normalized log-error map of one field over a cloud with known values.
pub fn error_map(
    net: &FieldNetworkSet,
    cloud: &[FieldSample],
    field: Field,
    spec: &GridSpec,
    re: f64,
) -> Result<FieldGrid, ReportError> {
    let coords: Vec<[f64; 3]> = cloud.iter().map(|s| [s.x, s.y, re]).collect();
    let pred = net.predict_batch(&coords);
    let errors: Vec<(f64, f64, f64)> = cloud
        .iter()
        .zip(&pred)
        .map(|(s, f)| (s.x, s.y, f.get(field) - truth(s, field)))
        .collect();
    error_map_from(&errors, spec, field.name())
}

fn grid_header(g: &FieldGrid) -> String {
    let s = &g.spec;
    format!(
        "nx={},ny={},xmin={:e},xmax={:e},ymin={:e},ymax={:e},variable={}",
        s.nx, s.ny, s.xmin, s.xmax, s.ymin, s.ymax, g.variable
    )
}

/// Grid as text: one header line with the grid spec, then `ny` rows of `nx`
/// values (row `j` at `y_j`), masked nodes written as `nan`.
pub fn grid_to_string(g: &FieldGrid) -> String {
    let mut out = grid_header(g);
    out.push('\n');
    for j in 0..g.spec.ny {
        for i in 0..g.spec.nx {
            if i > 0 {
                out.push(',');
            }
            let v = g.get(i, j);
            if v.is_nan() {
                out.push_str("nan");
            } else {
                write!(out, "{v:e}").expect("write to string");
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_grid(text: &str) -> Result<FieldGrid, ReportError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(ReportError::Format {
        line: 1,
        message: "missing header".into(),
    })?;
    let fmt = |line: usize, message: String| ReportError::Format { line, message };
    let mut kv = std::collections::HashMap::new();
    for part in header.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| fmt(1, format!("expected key=value, got `{part}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| fmt(1, format!("missing `{k}`")));
    let num =
        |k: &str| -> Result<f64, ReportError> { get(k)?.parse().map_err(|_| fmt(1, format!("bad number for `{k}`"))) };
    let count =
        |k: &str| -> Result<usize, ReportError> { get(k)?.parse().map_err(|_| fmt(1, format!("bad count for `{k}`"))) };
    let spec = GridSpec {
        nx: count("nx")?,
        ny: count("ny")?,
        xmin: num("xmin")?,
        xmax: num("xmax")?,
        ymin: num("ymin")?,
        ymax: num("ymax")?,
    };
    let variable = get("variable")?.to_string();
    let mut values = Vec::with_capacity(spec.nx * spec.ny);
    for (r, line) in lines.enumerate() {
        let row: Vec<&str> = line.split(',').collect();
        if row.len() != spec.nx {
            return Err(fmt(r + 2, format!("expected {} values, got {}", spec.nx, row.len())));
        }
        for tok in row {
            let v = if tok.trim() == "nan" {
                f64::NAN
            } else {
                tok.trim()
                    .parse()
                    .map_err(|_| fmt(r + 2, format!("bad value `{tok}`")))?
            };
            values.push(v);
        }
    }
    if values.len() != spec.nx * spec.ny {
        return Err(fmt(spec.ny + 1, format!("expected {} rows", spec.ny)));
    }
    Ok(FieldGrid { spec, variable, values })
}

pub fn export_grid(g: &FieldGrid, path: &Path) -> Result<(), ReportError> {
    fs::write(path, grid_to_string(g)).map_err(io_err(path))
}

pub fn read_grid(path: &Path) -> Result<FieldGrid, ReportError> {
    parse_grid(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Writes `<stem>.py` next to a grid CSV; running it renders the grid with
/// matplotlib.
pub fn write_plot_script(grid_csv: &Path) -> Result<PathBuf, ReportError> {
    let name = grid_csv
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let script = format!(
        r#"import sys
import numpy as np
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{name}"
with open(path) as f:
    spec = dict(kv.split("=") for kv in f.readline().strip().split(","))
values = np.genfromtxt(path, delimiter=",", skip_header=1, missing_values="nan")
extent = [float(spec[k]) for k in ("xmin", "xmax", "ymin", "ymax")]
plt.imshow(np.ma.masked_invalid(values), origin="lower", extent=extent, aspect="equal", cmap="viridis")
plt.colorbar(label=spec["variable"])
plt.title(spec["variable"])
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150, bbox_inches="tight")
"#
    );
    let out = grid_csv.with_extension("py");
    fs::write(&out, script).map_err(io_err(&out))?;
    Ok(out)
}

/// One metrics row of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub case: String,
    pub re: f64,
    pub metrics: ValidationMetrics,
}

/// Pretty JSON without timestamps, so repeated evaluations are
/// byte-identical.
pub fn write_metrics(path: &Path, entries: &[MetricsEntry]) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(entries)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsEntry>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
