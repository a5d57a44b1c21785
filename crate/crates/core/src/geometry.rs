//! Lattice atom arrays partitioned into independent subarrays.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::{LATTICE_CONSTANT, MIN_SUBARRAY_GAP};
use crate::{Error, Result};

/// Integer lattice coordinates of one occupied site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub ix: i64,
    pub iy: i64,
}

impl Site {
    pub fn new(ix: i64, iy: i64) -> Self {
        Site { ix, iy }
    }
}

/// Subarray label; displayed as `A`, `B`, `C`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubarrayLabel(pub u16);

impl fmt::Display for SubarrayLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0 as u8) as char)
        } else {
            write!(f, "S{}", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    lattice_constant: f64,
    sites: Vec<Site>,
    labels: Vec<SubarrayLabel>,
}

/// Shape of a tiled subarray layout, in lattice units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayLayout {
    pub rows: u32,
    pub cols: u32,
    pub spacing_x: u32,
    pub spacing_y: u32,
    pub n_subarrays: u32,
    pub gap: u32,
}

impl SubarrayLayout {
    pub fn new(rows: u32, cols: u32, spacing_x: u32, spacing_y: u32, n_subarrays: u32, gap: u32) -> Self {
        SubarrayLayout { rows, cols, spacing_x, spacing_y, n_subarrays, gap }
    }

    /// Single `rows × cols` block with the same spacing along both axes.
    pub fn single(rows: u32, cols: u32, spacing: u32) -> Self {
        SubarrayLayout::new(rows, cols, spacing, spacing, 1, MIN_SUBARRAY_GAP)
    }
}

impl ArrayGeometry {
    /// Build a geometry from explicit sites. Sites must be distinct and each
    /// needs a label.
    pub fn from_sites(lattice_constant: f64, sites: Vec<Site>, labels: Vec<SubarrayLabel>) -> Result<Self> {
        if !(lattice_constant > 0.0 && lattice_constant.is_finite()) {
            return Err(Error::invalid(format!("lattice constant must be positive, got {lattice_constant}")));
        }
        if sites.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} sites but {} labels",
                sites.len(),
                labels.len()
            )));
        }
        if sites.is_empty() {
            return Err(Error::invalid("geometry has no sites"));
        }
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate lattice site"));
        }
        Ok(ArrayGeometry { lattice_constant, sites, labels })
    }

    /// Tile `n_subarrays` blocks of `rows × cols` atoms along x. Within a block,
    /// columns run along x with `spacing_x` and rows along y with `spacing_y`;
    /// consecutive blocks are separated by `gap` lattice sites.
    ///
    /// Gaps below the independence threshold are rejected; use
    /// [`ArrayGeometry::build_subarrays_unchecked_gap`] to override.
    pub fn build_subarrays(layout: SubarrayLayout) -> Result<Self> {
        if layout.gap < MIN_SUBARRAY_GAP && layout.n_subarrays > 1 {
            return Err(Error::invalid(format!(
                "subarray gap {} is below the independence threshold of {} lattice sites",
                layout.gap, MIN_SUBARRAY_GAP
            )));
        }
        Self::build_subarrays_unchecked_gap(layout, LATTICE_CONSTANT)
    }

    pub fn build_subarrays_unchecked_gap(layout: SubarrayLayout, lattice_constant: f64) -> Result<Self> {
        let SubarrayLayout { rows, cols, spacing_x, spacing_y, n_subarrays, gap } = layout;
        if rows == 0 || cols == 0 || n_subarrays == 0 {
            return Err(Error::invalid(format!(
                "array dimensions must be positive (rows={rows}, cols={cols}, subarrays={n_subarrays})"
            )));
        }
        if spacing_x == 0 || spacing_y == 0 {
            return Err(Error::invalid("atom spacing must be at least one lattice site"));
        }
        if gap == 0 && n_subarrays > 1 {
            return Err(Error::invalid("subarray gap must be at least one lattice site"));
        }
        if n_subarrays > u16::MAX as u32 {
            return Err(Error::invalid("too many subarrays"));
        }
        let width = (cols as i64 - 1) * spacing_x as i64;
        let n = (rows * cols * n_subarrays) as usize;
        let mut sites = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for b in 0..n_subarrays as i64 {
            let x0 = b * (width + gap as i64);
            for r in 0..rows as i64 {
                for c in 0..cols as i64 {
                    sites.push(Site::new(x0 + c * spacing_x as i64, r * spacing_y as i64));
                    labels.push(SubarrayLabel(b as u16));
                }
            }
        }
        Self::from_sites(lattice_constant, sites, labels)
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn labels(&self) -> &[SubarrayLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Distinct labels in order of first appearance.
    pub fn subarray_labels(&self) -> Vec<SubarrayLabel> {
        let mut out: Vec<SubarrayLabel> = Vec::new();
        for l in &self.labels {
            if !out.contains(l) {
                out.push(*l);
            }
        }
        out
    }

    /// The sites carrying `label`, as a standalone geometry.
    pub fn subarray(&self, label: SubarrayLabel) -> Result<ArrayGeometry> {
        let (sites, labels): (Vec<_>, Vec<_>) = self
            .sites
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(s, l)| (*s, *l))
            .unzip();
        if sites.is_empty() {
            return Err(Error::invalid(format!("no subarray labelled {label}")));
        }
        ArrayGeometry::from_sites(self.lattice_constant, sites, labels)
    }

    pub fn same_subarray(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Displacement from site `i` to site `j`, in lattice units.
    pub fn displacement(&self, i: usize, j: usize) -> (i64, i64) {
        let (a, b) = (self.sites[i], self.sites[j]);
        (b.ix - a.ix, b.iy - a.iy)
    }

    /// Euclidean distance in lattice units.
    pub fn distance_lattice(&self, i: usize, j: usize) -> f64 {
        let (dx, dy) = self.displacement(i, j);
        ((dx * dx + dy * dy) as f64).sqrt()
    }

    /// Euclidean distance in meters.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distance_lattice(i, j) * self.lattice_constant
    }

    /// Largest pairwise distance (m); zero for a single site.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }

    pub fn pair_distances(&self) -> PairDistances {
        let n = self.len();
        let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(self.distance(i, j));
            }
        }
        PairDistances { n, d }
    }

    /// Smallest distance (m) between sites in different subarrays, if any.
    pub fn min_inter_subarray_distance(&self) -> Option<f64> {
        let n = self.len();
        let mut best: Option<f64> = None;
        for i in 0..n {
            for j in i + 1..n {
                if !self.same_subarray(i, j) {
                    let d = self.distance(i, j);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }
}

/// Symmetric distances between distinct sites, stored as an upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistances {
    n: usize,
    d: Vec<f64>,
}

impl PairDistances {
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// Distance between distinct sites `i` and `j` (m); `None` for `i == j`.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j || i >= self.n || j >= self.n {
            None
        } else {
            Some(self.d[self.index(i, j)])
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Unordered pairs `(i, j, r_ij)` with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))).zip(self.d.iter()).map(|((i, j), &r)| (i, j, r))
    }
}

/// Per-axis or uniform spacing in a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spacing {
    Uniform(u32),
    PerAxis([u32; 2]),
}

impl Spacing {
    pub fn xy(self) -> (u32, u32) {
        match self {
            Spacing::Uniform(s) => (s, s),
            Spacing::PerAxis([x, y]) => (x, y),
        }
    }
}

/// Serialized geometry section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_lattice_nm")]
    pub lattice_constant_nm: f64,
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
    #[serde(default = "default_one")]
    pub n_subarrays: u32,
    #[serde(default = "default_gap")]
    pub gap: u32,
    /// Permit gaps below the independence threshold.
    #[serde(default)]
    pub allow_small_gap: bool,
}

fn default_lattice_nm() -> f64 {
    LATTICE_CONSTANT * 1e9
}
fn default_spacing() -> Spacing {
    Spacing::Uniform(2)
}
fn default_one() -> u32 {
    1
}
fn default_gap() -> u32 {
    MIN_SUBARRAY_GAP
}

impl GeometryConfig {
    pub fn layout(&self) -> SubarrayLayout {
        let (sx, sy) = self.spacing.xy();
        SubarrayLayout::new(self.rows, self.cols, sx, sy, self.n_subarrays, self.gap)
    }

    pub fn build(&self) -> Result<ArrayGeometry> {
        let layout = self.layout();
        if !self.allow_small_gap && layout.n_subarrays > 1 && layout.gap < MIN_SUBARRAY_GAP {
            return ArrayGeometry::build_subarrays(layout);
        }
        ArrayGeometry::build_subarrays_unchecked_gap(layout, self.lattice_constant_nm * 1e-9)
    }
}
