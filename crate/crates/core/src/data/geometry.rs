//! Rectangular domains with an optional obstacle, and boundary sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, BoundaryTag, DataError, FieldSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Domain {
    pub const fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Self { xmin, xmax, ymin, ymax }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.xmin..=self.xmax).contains(&x) && (self.ymin..=self.ymax).contains(&y)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(DataError::DegenerateGeometry(format!(
                "domain [{}, {}] x [{}, {}] has no area",
                self.xmin, self.xmax, self.ymin, self.ymax
            )));
        }
        Ok(())
    }

    /// Bounding box of a set of points.
    pub fn bounding<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let mut d = Domain::new(x0, x0, y0, y0);
        for (x, y) in it {
            d.xmin = d.xmin.min(x);
            d.xmax = d.xmax.max(x);
            d.ymin = d.ymin.min(y);
            d.ymax = d.ymax.max(y);
        }
        Some(d)
    }
}

/// Closed polygon given by its vertices (last edge joins back to the first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<[f64; 2]>);

impl Polygon {
    /// Twice the signed area.
    fn signed_area2(&self) -> f64 {
        let v = &self.0;
        (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.0.len() < 3 {
            return Err(DataError::DegenerateGeometry(format!(
                "obstacle has {} vertices",
                self.0.len()
            )));
        }
        if self.0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::DegenerateGeometry("obstacle vertex is not finite".into()));
        }
        if self.signed_area2().abs() < 1e-14 {
            return Err(DataError::DegenerateGeometry("obstacle has zero area".into()));
        }
        Ok(())
    }

    pub fn perimeter(&self) -> f64 {
        let v = &self.0;
        (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let v = &self.0;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Point at arc length `s ∈ [0, perimeter)` along the boundary.
    fn point_at(&self, mut s: f64) -> [f64; 2] {
        let v = &self.0;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if s <= len || i + 1 == v.len() {
                let t = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            s -= len;
        }
        v[0]
    }
}

/// Treatment of the top and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideKind {
    #[default]
    Symmetry,
    Wall,
}

impl SideKind {
    fn tag(self) -> BoundaryTag {
        match self {
            SideKind::Symmetry => BoundaryTag::Symmetry,
            SideKind::Wall => BoundaryTag::Wall,
        }
    }
}

/// Channel-like rectangle: inlet on the left, outlet on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub domain: Domain,
    #[serde(default)]
    pub top: SideKind,
    #[serde(default)]
    pub bottom: SideKind,
    /// Normalized inlet velocity.
    #[serde(default = "unit_velocity")]
    pub inlet_velocity: f64,
    #[serde(default)]
    pub obstacle: Option<Polygon>,
}

fn unit_velocity() -> f64 {
    1.0
}

impl Geometry {
    pub fn rectangle(domain: Domain) -> Self {
        Self {
            domain,
            top: SideKind::Symmetry,
            bottom: SideKind::Symmetry,
            inlet_velocity: 1.0,
            obstacle: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.domain.validate()?;
        if let Some(poly) = &self.obstacle {
            poly.validate()?;
            if poly.0.iter().any(|v| !self.domain.contains(v[0], v[1])) {
                return Err(DataError::DegenerateGeometry("obstacle leaves the domain".into()));
            }
        }
        Ok(())
    }

    /// Whether `(x, y)` lies in the fluid region.
    pub fn in_fluid(&self, x: f64, y: f64) -> bool {
        self.domain.contains(x, y) && !self.obstacle.as_ref().is_some_and(|p| p.contains(x, y))
    }
}

fn target(x: f64, y: f64, tag: BoundaryTag, inlet_velocity: f64) -> FieldSample {
    let u = if tag == BoundaryTag::Inlet { inlet_velocity } else { 0.0 };
    FieldSample {
        x,
        y,
        u,
        tag,
        ..FieldSample::default()
    }
}

/// `n_per_boundary` tagged points on each rectangle edge (and on the
/// obstacle outline, tagged as wall), uniformly placed with seeded jitter.
///
/// Targets: inlet `(u, v) = (U, 0)`, outlet `p = 0`, wall `(u, v) = 0`,
/// symmetry `v = 0` together with a zero normal derivative of `u`. Only the
/// components relevant to each tag are meaningful.
pub fn boundary_points(geom: &Geometry, n_per_boundary: usize, seed: u64) -> Result<Vec<FieldSample>, DataError> {
    geom.validate()?;
    if n_per_boundary == 0 {
        return Err(DataError::DegenerateGeometry("zero points per boundary".into()));
    }
    let d = geom.domain;
    let mut rng = stream_rng(seed, 3);
    let n = n_per_boundary;
    let mut out = Vec::with_capacity(5 * n);
    let mut jittered = |i: usize| (i as f64 + rng.random::<f64>()) / n as f64;
    let u_in = geom.inlet_velocity;
    for i in 0..n {
        let y = d.ymin + jittered(i) * d.height();
        out.push(target(d.xmin, y, BoundaryTag::Inlet, u_in));
    }
    for i in 0..n {
        let y = d.ymin + jittered(i) * d.height();
        out.push(target(d.xmax, y, BoundaryTag::Outlet, u_in));
    }
    for i in 0..n {
        let x = d.xmin + jittered(i) * d.width();
        out.push(target(x, d.ymin, geom.bottom.tag(), u_in));
    }
    for i in 0..n {
        let x = d.xmin + jittered(i) * d.width();
        out.push(target(x, d.ymax, geom.top.tag(), u_in));
    }
    if let Some(poly) = &geom.obstacle {
        let per = poly.perimeter();
        for i in 0..n {
            let [x, y] = poly.point_at(jittered(i) * per);
            out.push(target(x, y, BoundaryTag::Wall, u_in));
        }
    }
    Ok(out)
}
