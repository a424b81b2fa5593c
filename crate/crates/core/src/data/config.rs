//! Case configuration (TOML) and dataset assembly from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    boundary_points, load_csv, make_mms_case, CaseDataset, CaseMeta, DataError, Domain, Forcing, Geometry, MmsFamily,
    MmsOptions, Provenance,
};
use crate::physics::{RefScales, TurbConstants};

/// Subset sizes and seed for splitting a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub n_data: usize,
    pub n_collocation: usize,
    /// Held-out fraction when no separate validation file is given.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_data: 3000,
            n_collocation: 3000,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DataError::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CaseSource {
    Csv {
        data: PathBuf,
        #[serde(default)]
        validation: Option<PathBuf>,
        /// Overrides the file's `Re` column when both are present.
        #[serde(default)]
        re: Option<f64>,
    },
    Mms {
        family: MmsFamily,
        s: f64,
        #[serde(default = "default_cloud")]
        n_cloud: usize,
    },
}

fn default_cloud() -> usize {
    MmsOptions::default().n_cloud
}

/// One flow case: where its points come from and how to split them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub source: CaseSource,
    #[serde(default)]
    pub scales: RefScales,
    /// Used to generate boundary points for CSV clouds and to define the
    /// plotting domain; inferred from the cloud when absent.
    #[serde(default)]
    pub geometry: Option<Geometry>,
    #[serde(default = "default_per_boundary")]
    pub n_per_boundary: usize,
    #[serde(default)]
    pub split: SplitConfig,
}

fn default_per_boundary() -> usize {
    100
}

impl CaseConfig {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))
    }

    /// Builds the dataset. Relative paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path, consts: &TurbConstants) -> Result<CaseDataset, DataError> {
        match &self.source {
            CaseSource::Mms { family, s, n_cloud } => {
                let opts = MmsOptions {
                    n_cloud: *n_cloud,
                    n_per_boundary: self.n_per_boundary,
                    split: self.split,
                    consts: *consts,
                };
                let (_, mut ds) = make_mms_case(*family, *s, &opts)?;
                ds.name = self.name.clone();
                Ok(ds)
            }
            CaseSource::Csv { data, validation, re } => {
                let resolve = |p: &Path| {
                    if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        base_dir.join(p)
                    }
                };
                let data_path = resolve(data);
                let mut cloud = load_csv(&data_path, &self.scales)?;
                let re = re
                    .or(cloud.re)
                    .ok_or_else(|| DataError::Config("Reynolds number missing: set `re` or add an Re column".into()))?;
                let validation = match validation {
                    Some(p) => Some(load_csv(&resolve(p), &self.scales)?.samples),
                    None => None,
                };
                let (domain, obstacle) = match &self.geometry {
                    Some(g) => {
                        let has_boundary = cloud.samples.iter().any(|s| s.is_boundary());
                        if !has_boundary && self.n_per_boundary > 0 {
                            cloud
                                .samples
                                .extend(boundary_points(g, self.n_per_boundary, self.split.seed)?);
                        }
                        (g.domain, g.obstacle.clone())
                    }
                    None => {
                        let d = Domain::bounding(cloud.samples.iter().map(|s| (s.x, s.y)))
                            .ok_or_else(|| DataError::Config(format!("{} has no rows", data_path.display())))?;
                        d.validate()?;
                        (d, None)
                    }
                };
                let meta = CaseMeta {
                    name: self.name.clone(),
                    re,
                    scales: self.scales,
                    domain,
                    obstacle,
                    provenance: Provenance::Csv {
                        path: data_path.display().to_string(),
                    },
                };
                CaseDataset::from_cloud(&cloud, validation, &self.split, meta, &|_, _| Forcing::default())
            }
        }
    }
}
