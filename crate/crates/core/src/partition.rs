//! The `(ℓ, r)` robust randomized partition of the bounding box.
//!
//! The box `[-b, b]^2` is cut into square cells of side `ℓ`, anchored at the
//! lower-left corner `(-b, -b)`. Along each axis, the closed band of
//! half-width `r` around every grid line is a *boundary band*; the rest of a
//! cell is its *interior slot*. Combining the two axes gives four region kinds:
//!
//! | x slot   | y slot   | region             | candidate clusters |
//! |----------|----------|--------------------|--------------------|
//! | interior | interior | interior `(i, j)`  | `C(i, j)`          |
//! | band `g` | interior | vertical strip     | `C(g-1, j)`, `C(g, j)` |
//! | interior | band `g` | horizontal strip   | `C(i, g-1)`, `C(i, g)` |
//! | band     | band     | quad `(g, h)`      | the four cells at the corner |
//!
//! Bands are closed and take precedence over interiors, so a point on a band
//! edge belongs to the band (quad > strip > interior). Candidates that fall
//! outside the cell grid are dropped and the remaining ones drawn uniformly,
//! which makes edge strips deterministic.
//!
//! In [`ClusteringMode::Simplified`] every point simply belongs to the cell
//! that contains it and nothing is random.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, UnitUniverse};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusteringMode {
    /// Strips and quads are attached to a random neighbouring cell.
    #[default]
    Robust,
    /// Plain uniform square clustering.
    Simplified,
}

/// Geometry of a robust randomized partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    cell_side: f64,
    margin: f64,
    half_width: f64,
    #[serde(default)]
    mode: ClusteringMode,
}

impl PartitionSpec {
    /// Requires `ℓ > 0`, `r >= 0` and `2r < ℓ`.
    pub fn new(cell_side: f64, margin: f64, half_width: f64) -> Result<Self> {
        if !(cell_side.is_finite() && cell_side > 0.0) {
            return Err(Error::InvalidArgument(format!("cell side must be positive, got {cell_side}")));
        }
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::InvalidArgument(format!("margin must be non-negative, got {margin}")));
        }
        if !(2.0 * margin < cell_side) {
            return Err(Error::Precondition(format!(
                "need 2r < ℓ, got r = {margin}, ℓ = {cell_side}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self { cell_side, margin, half_width, mode: ClusteringMode::Robust })
    }

    pub fn for_universe(universe: &UnitUniverse, cell_side: f64, margin: f64) -> Result<Self> {
        Self::new(cell_side, margin, universe.half_width())
    }

    pub fn with_mode(mut self, mode: ClusteringMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn mode(&self) -> ClusteringMode {
        self.mode
    }

    /// Cells per axis: `ceil(2b / ℓ)`, at least one.
    pub fn cells_per_axis(&self) -> usize {
        ((2.0 * self.half_width / self.cell_side).ceil() as usize).max(1)
    }

    pub fn cluster_count(&self) -> usize {
        let n = self.cells_per_axis();
        n * n
    }

    fn slots_per_axis(&self) -> usize {
        2 * self.cells_per_axis() + 1
    }

    pub fn region_count(&self) -> usize {
        let s = self.slots_per_axis();
        s * s
    }

    fn check_inside(&self, p: Point) -> Result<()> {
        let b = self.half_width;
        if p.x.is_finite() && p.y.is_finite() && p.x.abs() <= b && p.y.abs() <= b {
            Ok(())
        } else {
            Err(Error::OutsideBox { x: p.x, y: p.y, half_width: b })
        }
    }

    fn axis_slot(&self, coord: f64) -> Slot {
        let n = self.cells_per_axis();
        let s = coord + self.half_width;
        let g = ((s / self.cell_side).round().max(0.0) as usize).min(n);
        if (s - g as f64 * self.cell_side).abs() <= self.margin {
            Slot::Band(g)
        } else {
            Slot::Cell(self.axis_cell(coord))
        }
    }

    fn axis_cell(&self, coord: f64) -> usize {
        let n = self.cells_per_axis();
        let s = coord + self.half_width;
        ((s / self.cell_side).floor().max(0.0) as usize).min(n - 1)
    }

    fn slot_options(&self, slot: Slot) -> Vec<usize> {
        let n = self.cells_per_axis();
        match slot {
            Slot::Cell(c) => vec![c],
            Slot::Band(g) => [g.checked_sub(1), Some(g)]
                .into_iter()
                .flatten()
                .filter(|&c| c < n)
                .collect(),
        }
    }

    fn region_index(&self, sx: Slot, sy: Slot) -> usize {
        sy.index() * self.slots_per_axis() + sx.index()
    }

    fn region_slots(&self, index: usize) -> (Slot, Slot) {
        let s = self.slots_per_axis();
        (Slot::from_index(index % s), Slot::from_index(index / s))
    }

    /// Candidate clusters of region `index`, each equally likely.
    fn region_options(&self, index: usize) -> Vec<ClusterId> {
        let (sx, sy) = self.region_slots(index);
        let xs = self.slot_options(sx);
        let ys = self.slot_options(sy);
        ys.iter()
            .flat_map(|&j| xs.iter().map(move |&i| ClusterId { i, j }))
            .collect()
    }

    /// Region index that decides the cluster of `p` under this spec's mode.
    fn effective_region(&self, p: Point) -> usize {
        match self.mode {
            ClusteringMode::Robust => self.region_index(self.axis_slot(p.x), self.axis_slot(p.y)),
            ClusteringMode::Simplified => self.region_index(
                Slot::Cell(self.axis_cell(p.x)),
                Slot::Cell(self.axis_cell(p.y)),
            ),
        }
    }

    fn region_id(&self, index: usize) -> RegionId {
        let (sx, sy) = self.region_slots(index);
        let (kind, i, j) = match (sx, sy) {
            (Slot::Cell(i), Slot::Cell(j)) => (RegionKind::Interior, i, j),
            (Slot::Band(i), Slot::Cell(j)) => (RegionKind::VerticalStrip, i, j),
            (Slot::Cell(i), Slot::Band(j)) => (RegionKind::HorizontalStrip, i, j),
            (Slot::Band(i), Slot::Band(j)) => (RegionKind::Quad, i, j),
        };
        RegionId { kind, i, j }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Band(usize),
    Cell(usize),
}

impl Slot {
    fn index(self) -> usize {
        match self {
            Slot::Band(g) => 2 * g,
            Slot::Cell(c) => 2 * c + 1,
        }
    }

    fn from_index(i: usize) -> Self {
        if i.is_multiple_of(2) {
            Slot::Band(i / 2)
        } else {
            Slot::Cell(i / 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Interior,
    VerticalStrip,
    HorizontalStrip,
    Quad,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::Interior => "interior",
            RegionKind::VerticalStrip => "vertical-strip",
            RegionKind::HorizontalStrip => "horizontal-strip",
            RegionKind::Quad => "quad",
        }
    }
}

/// Region identifier. `i` indexes columns and `j` rows; for a strip or quad
/// the band coordinate is the grid-line index (line `g` separates cells
/// `g-1` and `g`), otherwise it is the 0-based cell index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId {
    pub kind: RegionKind,
    pub i: usize,
    pub j: usize,
}

/// 0-based cell `(column, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterId {
    pub i: usize,
    pub j: usize,
}

impl ClusterId {
    pub fn linear(&self, cells_per_axis: usize) -> usize {
        self.j * cells_per_axis + self.i
    }
}

pub fn classify_region(p: Point, spec: &PartitionSpec) -> Result<RegionId> {
    spec.check_inside(p)?;
    Ok(spec.region_id(spec.region_index(spec.axis_slot(p.x), spec.axis_slot(p.y))))
}

/// One realised partition: a cluster for every region.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    spec: PartitionSpec,
    assignment: Vec<ClusterId>,
}

/// Draws every strip and quad independently and uniformly among its
/// candidates, consuming the generator in region-index order.
pub fn sample_partition<R: Rng + ?Sized>(spec: &PartitionSpec, rng: &mut R) -> Partition {
    let assignment = (0..spec.region_count())
        .map(|idx| {
            let options = spec.region_options(idx);
            match spec.mode {
                ClusteringMode::Robust if options.len() > 1 => options[rng.gen_range(0..options.len())],
                _ => options[0],
            }
        })
        .collect();
    Partition { spec: *spec, assignment }
}

impl Partition {
    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn cluster_of(&self, p: Point) -> Result<ClusterId> {
        self.spec.check_inside(p)?;
        Ok(self.assignment[self.spec.effective_region(p)])
    }

    pub(crate) fn cluster_of_region(&self, region: usize) -> ClusterId {
        self.assignment[region]
    }

    /// `(region-kind, i, j, assigned-cluster-i, assigned-cluster-j)` rows.
    /// Simplified partitions only list interiors since nothing else is used.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["region_kind", "i", "j", "cluster_i", "cluster_j"])?;
        for (idx, c) in self.assignment.iter().enumerate() {
            let id = self.spec.region_id(idx);
            if self.spec.mode == ClusteringMode::Simplified && id.kind != RegionKind::Interior {
                continue;
            }
            w.write_record([
                id.kind.as_str().to_string(),
                id.i.to_string(),
                id.j.to_string(),
                c.i.to_string(),
                c.j.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Per-unit region lookup for a fixed `(spec, universe)` pair.
#[derive(Debug, Clone)]
pub struct UnitLayout {
    spec: PartitionSpec,
    unit_region: Vec<usize>,
}

impl UnitLayout {
    pub fn new(spec: &PartitionSpec, universe: &UnitUniverse) -> Result<Self> {
        if universe.half_width() > spec.half_width {
            return Err(Error::InvalidArgument(format!(
                "universe half-width {} exceeds partition box {}",
                universe.half_width(),
                spec.half_width
            )));
        }
        let unit_region = universe.units().iter().map(|&p| spec.effective_region(p)).collect();
        Ok(Self { spec: *spec, unit_region })
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn cluster_of_unit(&self, partition: &Partition, u: usize) -> ClusterId {
        partition.cluster_of_region(self.unit_region[u])
    }

    /// The distinct regions touched by `units`, each with its candidate clusters.
    pub fn cover(&self, units: &[usize]) -> BallCover {
        let regions: BTreeSet<usize> = units.iter().map(|&u| self.unit_region[u]).collect();
        BallCover {
            options: regions.into_iter().map(|idx| self.spec.region_options(idx)).collect(),
        }
    }

    pub fn region_ids(&self, units: &[usize]) -> Vec<RegionId> {
        let regions: BTreeSet<usize> = units.iter().map(|&u| self.unit_region[u]).collect();
        regions.into_iter().map(|idx| self.spec.region_id(idx)).collect()
    }
}

/// The random regions a ball touches and their candidate clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallCover {
    options: Vec<Vec<ClusterId>>,
}

impl BallCover {
    pub fn region_count(&self) -> usize {
        self.options.len()
    }

    /// Mass of the joint region draws by number of distinct clusters: entry
    /// `j` is the probability that the ball meets exactly `j` clusters.
    pub fn cluster_count_distribution(&self) -> Vec<f64> {
        let mut dist = vec![0.0; self.options.len() + 1];
        let mut chosen = Vec::with_capacity(self.options.len());
        enumerate(&self.options, 1.0, &mut chosen, &mut dist);
        dist
    }

    /// Translation-invariant key: two covers with equal keys have equal
    /// cluster-count distributions.
    pub fn canonical_key(&self) -> Vec<Vec<(usize, usize)>> {
        let min_i = self.options.iter().flatten().map(|c| c.i).min().unwrap_or(0);
        let min_j = self.options.iter().flatten().map(|c| c.j).min().unwrap_or(0);
        let mut key: Vec<Vec<(usize, usize)>> = self
            .options
            .iter()
            .map(|opts| opts.iter().map(|c| (c.i - min_i, c.j - min_j)).collect())
            .collect();
        key.sort();
        key
    }
}

fn enumerate(options: &[Vec<ClusterId>], weight: f64, chosen: &mut Vec<ClusterId>, dist: &mut [f64]) {
    match options.split_first() {
        None => {
            let mut distinct = chosen.clone();
            distinct.sort_unstable();
            distinct.dedup();
            dist[distinct.len()] += weight;
        }
        Some((first, rest)) => {
            let w = weight / first.len() as f64;
            for &c in first {
                chosen.push(c);
                enumerate(rest, w, chosen, dist);
                chosen.pop();
            }
        }
    }
}

fn check_radius(spec: &PartitionSpec, r: f64) -> Result<()> {
    if !(r >= 0.0 && 2.0 * r < spec.cell_side) {
        return Err(Error::Precondition(format!(
            "need 0 <= 2r < ℓ, got r = {r}, ℓ = {}",
            spec.cell_side
        )));
    }
    Ok(())
}

/// Clusters meeting `B(u, r)` in a realised partition.
pub fn ball_cluster_set(
    partition: &Partition,
    universe: &UnitUniverse,
    u: usize,
    r: f64,
) -> Result<BTreeSet<ClusterId>> {
    check_radius(&partition.spec, r)?;
    let ball = universe.ball(u, r)?;
    ball.iter()
        .map(|&v| partition.cluster_of(universe.units()[v]))
        .collect()
}

/// Exact cluster-count distribution of `B(u, r)` over partition draws.
pub fn ball_cluster_count_distribution(
    spec: &PartitionSpec,
    universe: &UnitUniverse,
    u: usize,
    r: f64,
) -> Result<Vec<f64>> {
    check_radius(spec, r)?;
    let ball = universe.ball(u, r)?;
    let layout = UnitLayout::new(spec, universe)?;
    Ok(layout.cover(&ball).cluster_count_distribution())
}

/// Exact `P[B(u, r) ⊆ C[u]]`, enumerating the joint draws of every region the
/// ball touches.
pub fn containment_probability(
    spec: &PartitionSpec,
    universe: &UnitUniverse,
    u: usize,
    r: f64,
) -> Result<f64> {
    let dist = ball_cluster_count_distribution(spec, universe, u, r)?;
    // An empty ball is trivially contained.
    Ok(dist.iter().take(2).sum())
}
