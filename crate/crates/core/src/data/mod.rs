//! Point clouds, sampling, boundary generation and manufactured cases.
//!
//! All coordinates and field values stored here are nondimensional. Raw CSV
//! files are normalized on load through [`RefScales`].

mod config;
mod csv_io;
mod geometry;
pub mod mms;
mod sampling;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{FlowState, FluidProps, PhysicsError, RefScales, TurbConstants};

pub use config::{CaseConfig, CaseSource, SplitConfig};
pub use csv_io::{load_csv, read_samples, write_csv, PointCloud};
pub use geometry::{boundary_points, Domain, Geometry, Polygon, SideKind};
pub use mms::{Forcing, MmsCase, MmsFamily};
pub use sampling::{sample_indices, sample_points, stream_rng};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: non-finite value in column `{column}`")]
    NonFinite { line: u64, column: String },
    #[error("line {line}: negative k ({value})")]
    NegativeK { line: u64, value: f64 },
    #[error("line {line}: eps must be positive on interior rows, got {value}")]
    NonPositiveEps { line: u64, value: f64 },
    #[error("line {line}: unknown boundary tag `{tag}`")]
    UnknownTag { line: u64, tag: String },
    #[error("line {line}: Re differs from earlier rows ({value} vs {expected})")]
    MixedRe { line: u64, value: f64, expected: f64 },
    #[error("requested {requested} points but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{0}")]
    OutOfRange(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("case config: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    #[default]
    Interior,
    Inlet,
    Outlet,
    Wall,
    Symmetry,
}

impl BoundaryTag {
    pub const BOUNDARY: [BoundaryTag; 4] = [
        BoundaryTag::Inlet,
        BoundaryTag::Outlet,
        BoundaryTag::Wall,
        BoundaryTag::Symmetry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::Inlet => "inlet",
            BoundaryTag::Outlet => "outlet",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Symmetry => "symmetry",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "interior" => Some(BoundaryTag::Interior),
            "inlet" => Some(BoundaryTag::Inlet),
            "outlet" => Some(BoundaryTag::Outlet),
            "wall" => Some(BoundaryTag::Wall),
            "symmetry" => Some(BoundaryTag::Symmetry),
            _ => None,
        }
    }
}

/// One point of a field cloud.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub k: f64,
    pub eps: f64,
    pub tag: BoundaryTag,
}

impl FieldSample {
    pub fn from_state(s: FlowState, tag: BoundaryTag) -> Self {
        Self {
            x: s.x,
            y: s.y,
            u: s.u,
            v: s.v,
            p: s.p,
            k: s.k,
            eps: s.eps,
            tag,
        }
    }

    pub fn state(&self) -> FlowState {
        FlowState {
            x: self.x,
            y: self.y,
            u: self.u,
            v: self.v,
            p: self.p,
            k: self.k,
            eps: self.eps,
        }
    }

    pub fn is_boundary(&self) -> bool {
        self.tag != BoundaryTag::Interior
    }
}

/// A point where PDE residuals are penalized. The forcing is zero for real
/// flow data and the manufactured source for synthetic cases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CollocationPoint {
    pub x: f64,
    pub y: f64,
    pub forcing: Forcing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Csv { path: String },
    Mms { family: MmsFamily, s: f64 },
}

/// A normalized case ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDataset {
    pub name: String,
    pub re: f64,
    pub scales: RefScales,
    pub props: FluidProps,
    pub domain: Domain,
    pub obstacle: Option<Polygon>,
    pub data_points: Vec<FieldSample>,
    pub collocation_points: Vec<CollocationPoint>,
    pub boundary_points: Vec<FieldSample>,
    pub validation_points: Vec<FieldSample>,
    pub provenance: Provenance,
}

/// Case-level metadata attached when splitting a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseMeta {
    pub name: String,
    pub re: f64,
    pub scales: RefScales,
    pub domain: Domain,
    pub obstacle: Option<Polygon>,
    pub provenance: Provenance,
}

impl CaseDataset {
    /// Splits a cloud into validation, data and collocation subsets.
    ///
    /// Boundary-tagged rows become boundary points. Interior rows are split
    /// as follows: unless `validation` is given, a random
    /// `split.validation_fraction` is held out; data points are drawn from the
    /// rest, and collocation points from what remains after that, each with
    /// its own seed stream, so all three sets are pairwise disjoint.
    pub fn from_cloud(
        cloud: &PointCloud,
        validation: Option<Vec<FieldSample>>,
        split: &SplitConfig,
        meta: CaseMeta,
        forcing: &dyn Fn(f64, f64) -> Forcing,
    ) -> Result<Self, DataError> {
        split.validate()?;
        let props = FluidProps::from_reynolds(meta.re)?;
        let (interior, boundary): (Vec<FieldSample>, Vec<FieldSample>) =
            cloud.samples.iter().partition(|s| !s.is_boundary());

        let (validation_points, pool) = match validation {
            Some(v) => (v, interior),
            None => {
                let n_val = (split.validation_fraction * interior.len() as f64).round() as usize;
                let order = sample_indices(interior.len(), interior.len(), stream_rng(split.seed, 0))?;
                let val = order[..n_val].iter().map(|&i| interior[i]).collect();
                let rest = order[n_val..].iter().map(|&i| interior[i]).collect();
                (val, rest)
            }
        };

        let data_idx = sample_indices(pool.len(), split.n_data, stream_rng(split.seed, 1))?;
        let mut taken = vec![false; pool.len()];
        for &i in &data_idx {
            taken[i] = true;
        }
        let data_points: Vec<FieldSample> = data_idx.iter().map(|&i| pool[i]).collect();
        let remaining: Vec<usize> = (0..pool.len()).filter(|&i| !taken[i]).collect();
        let colloc_idx = sample_indices(remaining.len(), split.n_collocation, stream_rng(split.seed, 2))?;
        let collocation_points = colloc_idx
            .iter()
            .map(|&j| {
                let s = pool[remaining[j]];
                CollocationPoint {
                    x: s.x,
                    y: s.y,
                    forcing: forcing(s.x, s.y),
                }
            })
            .collect();

        Ok(Self {
            name: meta.name,
            re: meta.re,
            scales: meta.scales,
            props,
            domain: meta.domain,
            obstacle: meta.obstacle,
            data_points,
            collocation_points,
            boundary_points: boundary,
            validation_points,
            provenance: meta.provenance,
        })
    }
}

/// Options for synthesizing a manufactured case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmsOptions {
    /// Interior points in the synthetic cloud (before splitting).
    pub n_cloud: usize,
    /// Boundary points per rectangle edge.
    pub n_per_boundary: usize,
    pub split: SplitConfig,
    pub consts: TurbConstants,
}

impl Default for MmsOptions {
    fn default() -> Self {
        Self {
            n_cloud: 10_000,
            n_per_boundary: 100,
            split: SplitConfig::default(),
            consts: TurbConstants::default(),
        }
    }
}

/// Uniform interior cloud plus tagged edge points carrying exact values.
pub fn mms_cloud(case: &MmsCase, n_cloud: usize, n_per_boundary: usize, seed: u64) -> PointCloud {
    use rand::Rng;
    let d = case.domain();
    let mut rng = stream_rng(seed, 7);
    let mut samples = Vec::with_capacity(n_cloud + 4 * n_per_boundary);
    for _ in 0..n_cloud {
        let x = rng.random_range(d.xmin..d.xmax);
        let y = rng.random_range(d.ymin..d.ymax);
        samples.push(FieldSample::from_state(case.state(x, y), BoundaryTag::Interior));
    }
    let [left, right, bottom, top] = case.family.edge_tags();
    for i in 0..n_per_boundary {
        let t = (i as f64 + 0.5) / n_per_boundary as f64;
        let x = d.xmin + t * d.width();
        let y = d.ymin + t * d.height();
        samples.push(case.boundary_sample(d.xmin, y, left));
        samples.push(case.boundary_sample(d.xmax, y, right));
        samples.push(case.boundary_sample(x, d.ymin, bottom));
        samples.push(case.boundary_sample(x, d.ymax, top));
    }
    PointCloud {
        samples,
        re: Some(case.s),
    }
}

/// Builds a manufactured case and its split dataset.
pub fn make_mms_case(family: MmsFamily, s: f64, opts: &MmsOptions) -> Result<(MmsCase, CaseDataset), DataError> {
    let case = MmsCase::new(family, s, opts.consts)?;
    let cloud = mms_cloud(&case, opts.n_cloud, opts.n_per_boundary, opts.split.seed);
    let meta = CaseMeta {
        name: format!("{}-s{}", family.name(), s),
        re: s,
        scales: RefScales::default(),
        domain: case.domain(),
        obstacle: None,
        provenance: Provenance::Mms { family, s },
    };
    let ds = CaseDataset::from_cloud(&cloud, None, &opts.split, meta, &|x, y| case.forcing(x, y))?;
    Ok((case, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn key(x: f64, y: f64) -> (u64, u64) {
        (x.to_bits(), y.to_bits())
    }

    fn small_opts() -> MmsOptions {
        MmsOptions {
            n_cloud: 2000,
            n_per_boundary: 20,
            split: SplitConfig {
                n_data: 500,
                n_collocation: 500,
                ..SplitConfig::default()
            },
            ..MmsOptions::default()
        }
    }

    #[test]
    fn mms_split_is_disjoint_and_sized() {
        let (_, ds) = make_mms_case(MmsFamily::TrigVortex, 5600.0, &small_opts()).unwrap();
        assert_eq!(ds.validation_points.len(), 400);
        assert_eq!(ds.data_points.len(), 500);
        assert_eq!(ds.collocation_points.len(), 500);
        assert_eq!(ds.boundary_points.len(), 80);
        let val: HashSet<_> = ds.validation_points.iter().map(|s| key(s.x, s.y)).collect();
        let data: HashSet<_> = ds.data_points.iter().map(|s| key(s.x, s.y)).collect();
        let col: HashSet<_> = ds.collocation_points.iter().map(|c| key(c.x, c.y)).collect();
        assert!(val.is_disjoint(&data));
        assert!(col.is_disjoint(&data));
        assert!(col.is_disjoint(&val));
    }

    #[test]
    fn mms_samples_are_exact() {
        let (case, ds) = make_mms_case(MmsFamily::PolyChannel, 3140.0, &small_opts()).unwrap();
        for s in ds.data_points.iter().chain(&ds.boundary_points) {
            assert_eq!(s.state(), case.state(s.x, s.y));
        }
        for c in &ds.collocation_points {
            assert_eq!(c.forcing, case.forcing(c.x, c.y));
        }
    }

    #[test]
    fn mms_edge_tags() {
        let (_, ds) = make_mms_case(MmsFamily::TrigVortex, 100.0, &small_opts()).unwrap();
        for s in &ds.boundary_points {
            match s.tag {
                BoundaryTag::Inlet => assert_eq!(s.x, 0.0),
                BoundaryTag::Outlet => assert_eq!(s.x, 1.0),
                BoundaryTag::Symmetry => {
                    assert!(s.y == 0.0 || s.y == 1.0);
                    assert!(s.v.abs() < 1e-15);
                }
                other => panic!("unexpected tag {other:?}"),
            }
        }
    }

    #[test]
    fn split_is_deterministic() {
        let a = make_mms_case(MmsFamily::TrigVortex, 4200.0, &small_opts()).unwrap().1;
        let b = make_mms_case(MmsFamily::TrigVortex, 4200.0, &small_opts()).unwrap().1;
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_split_rejected() {
        let mut opts = small_opts();
        opts.split.n_collocation = 2000;
        assert!(matches!(
            make_mms_case(MmsFamily::TrigVortex, 4200.0, &opts),
            Err(DataError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn explicit_validation_keeps_whole_pool() {
        let case = MmsCase::new(MmsFamily::TrigVortex, 10.0, TurbConstants::default()).unwrap();
        let cloud = mms_cloud(&case, 300, 0, 1);
        let val = mms_cloud(&case, 50, 0, 2).samples;
        let split = SplitConfig {
            n_data: 150,
            n_collocation: 150,
            ..SplitConfig::default()
        };
        let meta = CaseMeta {
            name: "t".into(),
            re: 10.0,
            scales: RefScales::default(),
            domain: case.domain(),
            obstacle: None,
            provenance: Provenance::Mms {
                family: case.family,
                s: 10.0,
            },
        };
        let ds = CaseDataset::from_cloud(&cloud, Some(val), &split, meta, &|_, _| Forcing::default()).unwrap();
        assert_eq!(ds.validation_points.len(), 50);
        assert_eq!(ds.data_points.len() + ds.collocation_points.len(), 300);
    }
}
