//! Planar unit universes under the sup-norm.
//!
//! Units are identified by dense ids `0..N`. Lattice universes use row-major
//! order: unit `row * side + col` sits at `(col - (side-1)/2, row - (side-1)/2)`
//! and the bounding box has half-width `side / 2`, so every cell edge of an
//! integer-sided grid anchored at the box corner falls strictly between units.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default constant in the scaling bound `b_N <= C * sqrt(N)`.
pub const DEFAULT_SCALE_CONSTANT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// `max(|a.x - b.x|, |a.y - b.y|)`.
pub fn sup_distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).abs().max((a.y - b.y).abs())
}

/// Row-major lattice bookkeeping for universes built by [`UnitUniverse::lattice`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeShape {
    pub side: usize,
}

impl LatticeShape {
    pub fn id(&self, col: isize, row: isize) -> Option<usize> {
        let side = self.side as isize;
        if (0..side).contains(&col) && (0..side).contains(&row) {
            Some((row * side + col) as usize)
        } else {
            None
        }
    }

    pub fn col_row(&self, id: usize) -> (isize, isize) {
        ((id % self.side) as isize, (id / self.side) as isize)
    }
}

/// A finite set of planar units inside `[-b, b]^2` with pairwise
/// sup-distance at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitUniverse {
    units: Vec<Point>,
    half_width: f64,
    lattice: Option<LatticeShape>,
}

impl UnitUniverse {
    /// Validates the box, spacing and scaling invariants with the default
    /// scaling constant.
    pub fn new(units: Vec<Point>, half_width: f64) -> Result<Self> {
        Self::with_scale_constant(units, half_width, DEFAULT_SCALE_CONSTANT)
    }

    pub fn with_scale_constant(units: Vec<Point>, half_width: f64, scale: f64) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("universe must contain at least one unit".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "half-width must be positive and finite, got {half_width}"
            )));
        }
        for p in &units {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite coordinate ({}, {})", p.x, p.y)));
            }
            if p.x.abs() > half_width || p.y.abs() > half_width {
                return Err(Error::OutsideBox { x: p.x, y: p.y, half_width });
            }
        }
        let bound = scale * (units.len() as f64).sqrt();
        if half_width > bound {
            return Err(Error::InvalidArgument(format!(
                "half-width {half_width} exceeds {scale} * sqrt(N) = {bound}"
            )));
        }
        check_spacing(&units)?;
        Ok(Self { units, half_width, lattice: None })
    }

    /// `sqrt(n) x sqrt(n)` unit-spaced grid centred at the origin.
    pub fn lattice(n: usize) -> Result<Self> {
        let side = exact_sqrt(n).ok_or_else(|| {
            Error::InvalidArgument(format!("lattice size {n} is not a positive perfect square"))
        })?;
        Ok(Self::lattice_with_side(side))
    }

    pub fn lattice_with_side(side: usize) -> Self {
        assert!(side > 0, "lattice side must be positive");
        let offset = (side as f64 - 1.0) / 2.0;
        let units = (0..side * side)
            .map(|id| Point::new((id % side) as f64 - offset, (id / side) as f64 - offset))
            .collect();
        Self {
            units,
            half_width: side as f64 / 2.0,
            lattice: Some(LatticeShape { side }),
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn units(&self) -> &[Point] {
        &self.units
    }

    pub fn lattice_shape(&self) -> Option<LatticeShape> {
        self.lattice
    }

    pub fn point(&self, u: usize) -> Result<Point> {
        self.units
            .get(u)
            .copied()
            .ok_or(Error::InvalidUnit { id: u, len: self.units.len() })
    }

    pub(crate) fn check_unit(&self, u: usize) -> Result<()> {
        self.point(u).map(|_| ())
    }

    /// Units strictly within sup-distance `r` of `u`, in increasing id order.
    pub fn ball(&self, u: usize, r: f64) -> Result<Vec<usize>> {
        let center = self.point(u)?;
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be non-negative, got {r}")));
        }
        if r == 0.0 {
            return Ok(Vec::new());
        }
        if let Some(shape) = self.lattice {
            // Only offsets below ceil(r) can be strictly closer than r.
            let reach = (r.ceil() as isize).min(shape.side as isize);
            let (c, w) = shape.col_row(u);
            let mut out = Vec::new();
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    if let Some(v) = shape.id(c + dc, w + dr) {
                        if sup_distance(center, self.units[v]) < r {
                            out.push(v);
                        }
                    }
                }
            }
            out.sort_unstable();
            return Ok(out);
        }
        Ok((0..self.units.len())
            .filter(|&v| sup_distance(center, self.units[v]) < r)
            .collect())
    }

    /// Writes `id,x,y` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "x", "y"])?;
        for (id, p) in self.units.iter().enumerate() {
            w.write_record([id.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Reads `id,x,y` rows. Ids must be exactly `0..N` in order. Without an
    /// explicit half-width the box is the tightest one leaving half a unit of
    /// margin, matching the lattice convention.
    pub fn read_csv<R: Read>(reader: R, half_width: Option<f64>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            id: usize,
            x: f64,
            y: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut units = Vec::new();
        for (expected, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.id != expected {
                return Err(Error::InvalidArgument(format!(
                    "unit ids must be dense and ordered: expected {expected}, found {}",
                    row.id
                )));
            }
            units.push(Point::new(row.x, row.y));
        }
        let b = match half_width {
            Some(b) => b,
            None => units.iter().fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs())) + 0.5,
        };
        Self::new(units, b)
    }
}

pub(crate) fn exact_sqrt(n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

/// Pairwise sup-distance >= 1, checked with unit buckets so only
/// neighbouring buckets are compared.
fn check_spacing(units: &[Point]) -> Result<()> {
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (id, p) in units.iter().enumerate() {
        buckets
            .entry((p.x.floor() as i64, p.y.floor() as i64))
            .or_default()
            .push(id);
    }
    for (id, p) in units.iter().enumerate() {
        let (bx, by) = (p.x.floor() as i64, p.y.floor() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(others) = buckets.get(&(bx + dx, by + dy)) else { continue };
                for &v in others {
                    if v > id && sup_distance(*p, units[v]) < 1.0 {
                        return Err(Error::InvalidArgument(format!(
                            "units {id} and {v} are closer than 1 in sup-norm"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}
