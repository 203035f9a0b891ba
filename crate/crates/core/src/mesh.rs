//! Meshes: equal-mass intervals in 1D, quadtree or equal-mass bisection
//! rectangles in 2D, and uniform refinement with parent/child bookkeeping.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Cdf1d, DensitySpec, Domain};
use crate::error::{Error, Result};

/// Geometric cell of an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    /// `[lo, hi]`.
    Interval {
        /// Left end.
        lo: f64,
        /// Right end.
        hi: f64,
    },
    /// `[x0, x1] x [y0, y1]`.
    Rect {
        /// Left.
        x0: f64,
        /// Right.
        x1: f64,
        /// Bottom.
        y0: f64,
        /// Top.
        y1: f64,
    },
}

impl Cell {
    /// Length or area.
    pub fn volume(&self) -> f64 {
        match *self {
            Cell::Interval { lo, hi } => hi - lo,
            Cell::Rect { x0, x1, y0, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    /// Geometric center, padded with 0 in 1D.
    pub fn center(&self) -> [f64; 2] {
        match *self {
            Cell::Interval { lo, hi } => [0.5 * (lo + hi), 0.0],
            Cell::Rect { x0, x1, y0, y1 } => [0.5 * (x0 + x1), 0.5 * (y0 + y1)],
        }
    }

    /// Bounds as a flat list: `[lo, hi]` or `[x0, x1, y0, y1]`.
    pub fn bounds(&self) -> Vec<f64> {
        match *self {
            Cell::Interval { lo, hi } => vec![lo, hi],
            Cell::Rect { x0, x1, y0, y1 } => vec![x0, x1, y0, y1],
        }
    }

    /// Rebuilds a cell from [`Cell::bounds`] output.
    pub fn from_bounds(b: &[f64]) -> Option<Cell> {
        match *b {
            [lo, hi] => Some(Cell::Interval { lo, hi }),
            [x0, x1, y0, y1] => Some(Cell::Rect { x0, x1, y0, y1 }),
            _ => None,
        }
    }

    /// True when the interiors intersect.
    pub fn overlaps(&self, other: &Cell) -> bool {
        match (*self, *other) {
            (Cell::Interval { lo: a, hi: b }, Cell::Interval { lo: c, hi: d }) => a < d && c < b,
            (
                Cell::Rect { x0, x1, y0, y1 },
                Cell::Rect {
                    x0: u0,
                    x1: u1,
                    y0: v0,
                    y1: v1,
                },
            ) => x0 < u1 && u0 < x1 && y0 < v1 && v0 < y1,
            _ => false,
        }
    }
}

/// Mesh element.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Position in the mesh.
    pub id: usize,
    /// Geometry.
    pub cell: Cell,
    /// `int_cell rho`.
    pub mass: f64,
    /// Parent id on the previous level.
    pub parent: Option<usize>,
    /// Refinement depth (0 on the initial mesh).
    pub depth: u32,
}

impl Element {
    /// Length or area.
    pub fn volume(&self) -> f64 {
        self.cell.volume()
    }

    /// Average density `mass / volume`.
    pub fn density(&self) -> f64 {
        self.mass / self.volume()
    }

    /// Cell center.
    pub fn barycenter(&self) -> [f64; 2] {
        self.cell.center()
    }
}

/// A partition of the domain into elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    elements: Vec<Element>,
    dim: usize,
}

impl Mesh {
    /// Wraps elements after checking ids, positive volumes and dimension.
    pub fn from_elements(elements: Vec<Element>) -> Result<Self> {
        let dim = match elements.first() {
            Some(Element {
                cell: Cell::Interval { .. },
                ..
            }) => 1,
            Some(_) => 2,
            None => return Err(Error::param("mesh", "no elements")),
        };
        for (i, e) in elements.iter().enumerate() {
            if e.id != i {
                return Err(Error::ContractViolation(alloc::format!("element {i} carries id {}", e.id)));
            }
            let d = if matches!(e.cell, Cell::Interval { .. }) { 1 } else { 2 };
            if d != dim {
                return Err(Error::ContractViolation("mixed element dimensions".to_string()));
            }
            if !(e.volume() > 0.0) || !(e.mass >= 0.0) {
                return Err(Error::ContractViolation(alloc::format!(
                    "element {i} has volume {} and mass {}",
                    e.volume(),
                    e.mass
                )));
            }
        }
        Ok(Self { elements, dim })
    }

    /// Number of elements `K`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Never true for a constructed mesh.
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Elements in id order.
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Element volumes.
    pub fn volumes(&self) -> Vec<f64> {
        self.elements.iter().map(Element::volume).collect()
    }

    /// Element masses.
    pub fn masses(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.mass).collect()
    }

    /// Average densities.
    pub fn densities(&self) -> Vec<f64> {
        self.elements.iter().map(Element::density).collect()
    }

    /// Cell centers.
    pub fn barycenters(&self) -> Vec<[f64; 2]> {
        self.elements.iter().map(Element::barycenter).collect()
    }

    /// Sum of masses.
    pub fn total_mass(&self) -> f64 {
        self.elements.iter().map(|e| e.mass).sum()
    }
}

/// Parent to children lists between two consecutive levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementMap {
    children: Vec<Vec<usize>>,
}

impl RefinementMap {
    /// From explicit child lists.
    pub fn new(children: Vec<Vec<usize>>) -> Self {
        Self { children }
    }

    /// Reconstructs the map from the `parent` fields of a fine mesh.
    pub fn from_fine(fine: &Mesh, coarse_len: usize) -> Result<Self> {
        let mut children = vec![Vec::new(); coarse_len];
        for e in fine.elements() {
            let p = e
                .parent
                .filter(|&p| p < coarse_len)
                .ok_or_else(|| Error::ContractViolation(alloc::format!("element {} has no valid parent", e.id)))?;
            children[p].push(e.id);
        }
        Ok(Self { children })
    }

    /// Children of coarse element `j`.
    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    /// Number of coarse elements.
    pub fn coarse_len(&self) -> usize {
        self.children.len()
    }

    /// Number of fine elements.
    pub fn fine_len(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }
}

/// How a cell is split during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Geometric halving (quadrants in 2D).
    #[default]
    Midpoint,
    /// Halving at the mass median (median in x, then medians in y in 2D).
    EqualMass,
}

/// Initial 2D mesher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mesher2d {
    /// Quadtree: split into quadrants until every leaf has mass at most `N / K`.
    Quadtree,
    /// Recursive bisection of the longer side at mass quantiles; exactly `K`
    /// equal-mass rectangles.
    #[default]
    EqualMassKd,
}

/// `K` intervals of mass `N / K` each, breakpoints at the inverse CDF.
pub fn partition_equal_mass_1d(spec: &DensitySpec, k: usize) -> Result<Mesh> {
    if k < 2 {
        return Err(Error::param("K", "need at least two elements"));
    }
    let cdf = spec.cdf()?;
    partition_with_cdf(&cdf, k)
}

/// As [`partition_equal_mass_1d`] with a prebuilt CDF table.
pub fn partition_with_cdf(cdf: &Cdf1d, k: usize) -> Result<Mesh> {
    let n = cdf.total();
    let (lo, hi) = cdf.bounds();
    let mut pts = Vec::with_capacity(k + 1);
    pts.push(lo);
    for j in 1..k {
        pts.push(cdf.inverse(n * j as f64 / k as f64)?);
    }
    pts.push(hi);
    let mut elements = Vec::with_capacity(k);
    for j in 0..k {
        let (a, b) = (pts[j], pts[j + 1]);
        if !(b > a) {
            return Err(Error::DegenerateDensity(alloc::format!(
                "equal-mass breakpoints collapse at x = {a}"
            )));
        }
        elements.push(Element {
            id: j,
            cell: Cell::Interval { lo: a, hi: b },
            mass: cdf.mass(b) - cdf.mass(a),
            parent: None,
            depth: 0,
        });
    }
    Mesh::from_elements(elements)
}

fn rect_of(spec: &DensitySpec) -> Result<Cell> {
    match spec.domain() {
        Domain::Rect { x, y } => Ok(Cell::Rect {
            x0: x.0,
            x1: x.1,
            y0: y.0,
            y1: y.1,
        }),
        Domain::Interval { .. } => Err(Error::ContractViolation("2D mesher needs a 2D density".to_string())),
    }
}

fn cell_mass(spec: &DensitySpec, c: &Cell) -> Result<f64> {
    match *c {
        Cell::Interval { lo, hi } => spec.interval_mass(lo, hi),
        Cell::Rect { x0, x1, y0, y1 } => spec.rect_mass((x0, x1), (y0, y1)),
    }
}

fn quadrants(c: &Cell) -> [Cell; 4] {
    let Cell::Rect { x0, x1, y0, y1 } = *c else {
        unreachable!("quadrants of an interval")
    };
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    [
        Cell::Rect { x0, x1: xm, y0, y1: ym },
        Cell::Rect { x0: xm, x1, y0, y1: ym },
        Cell::Rect { x0, x1: xm, y0: ym, y1 },
        Cell::Rect { x0: xm, x1, y0: ym, y1 },
    ]
}

const MAX_QUADTREE_DEPTH: u32 = 24;

/// Quadtree mesh: quadrant splitting until each leaf holds at most `N / k_target`.
pub fn build_quadtree_mesh_2d(spec: &DensitySpec, k_target: usize) -> Result<Mesh> {
    if k_target < 2 {
        return Err(Error::param("K", "need at least two elements"));
    }
    let root = rect_of(spec)?;
    let cap = spec.electrons() as f64 / k_target as f64 * (1.0 + 1e-12);
    let mut leaves = Vec::new();
    let mut stack = vec![(root, cell_mass(spec, &root)?, 0u32)];
    while let Some((c, m, d)) = stack.pop() {
        if m <= cap || d >= MAX_QUADTREE_DEPTH {
            leaves.push((c, m));
            continue;
        }
        let q = quadrants(&c);
        // reversed so that leaves come out in SW, SE, NW, NE order
        for child in q.iter().rev() {
            stack.push((*child, cell_mass(spec, child)?, d + 1));
        }
    }
    let elements = leaves
        .into_iter()
        .enumerate()
        .map(|(id, (cell, mass))| Element {
            id,
            cell,
            mass,
            parent: None,
            depth: 0,
        })
        .collect();
    Mesh::from_elements(elements)
}

/// Coordinate `c` such that the part of `cell` below `c` along `axis` has
/// mass `target`.
fn mass_cut(spec: &DensitySpec, cell: &Cell, axis: usize, target: f64) -> Result<f64> {
    let Cell::Rect { x0, x1, y0, y1 } = *cell else {
        return Err(Error::ContractViolation("mass cut needs a rectangle".to_string()));
    };
    let (mut a, mut b) = if axis == 0 { (x0, x1) } else { (y0, y1) };
    let width = b - a;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a <= 1e-14 * width {
            break;
        }
        let m = if axis == 0 {
            spec.rect_mass((x0, mid), (y0, y1))?
        } else {
            spec.rect_mass((x0, x1), (y0, mid))?
        };
        if m < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

fn split_at(cell: &Cell, axis: usize, c: f64) -> (Cell, Cell) {
    let Cell::Rect { x0, x1, y0, y1 } = *cell else {
        unreachable!("split of an interval")
    };
    if axis == 0 {
        (Cell::Rect { x0, x1: c, y0, y1 }, Cell::Rect { x0: c, x1, y0, y1 })
    } else {
        (Cell::Rect { x0, x1, y0, y1: c }, Cell::Rect { x0, x1, y0: c, y1 })
    }
}

/// Exactly `k` rectangles of mass `N / k`, by recursive bisection of the longer
/// side at mass quantiles.
pub fn build_equal_mass_kd_2d(spec: &DensitySpec, k: usize) -> Result<Mesh> {
    if k < 2 {
        return Err(Error::param("K", "need at least two elements"));
    }
    let root = rect_of(spec)?;
    let unit = spec.electrons() as f64 / k as f64;
    let mut leaves = Vec::with_capacity(k);
    let mut stack = vec![(root, k)];
    while let Some((c, n)) = stack.pop() {
        if n == 1 {
            leaves.push(c);
            continue;
        }
        let Cell::Rect { x0, x1, y0, y1 } = c else { unreachable!() };
        let axis = if x1 - x0 >= y1 - y0 { 0 } else { 1 };
        let n1 = n / 2;
        let lower_mass = cell_mass(spec, &c)? * n1 as f64 / n as f64;
        let cut = mass_cut(spec, &c, axis, lower_mass)?;
        let (lo, hi) = split_at(&c, axis, cut);
        if !(lo.volume() > 0.0 && hi.volume() > 0.0) {
            return Err(Error::DegenerateDensity("mass quantile cut produced an empty cell".to_string()));
        }
        stack.push((hi, n - n1));
        stack.push((lo, n1));
    }
    let elements = leaves
        .into_iter()
        .enumerate()
        .map(|(id, cell)| {
            let _ = unit;
            Ok(Element {
                id,
                cell,
                mass: cell_mass(spec, &cell)?,
                parent: None,
                depth: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Mesh::from_elements(elements)
}

/// Initial mesh for either dimension.
pub fn build_initial_mesh(spec: &DensitySpec, k: usize, mesher: Mesher2d) -> Result<Mesh> {
    match spec.dim() {
        1 => partition_equal_mass_1d(spec, k),
        _ => match mesher {
            Mesher2d::Quadtree => build_quadtree_mesh_2d(spec, k),
            Mesher2d::EqualMassKd => build_equal_mass_kd_2d(spec, k),
        },
    }
}

/// Splits every element (2 children in 1D, 4 in 2D). Children of element `j`
/// are contiguous and ordered left to right (SW, SE, NW, NE in 2D).
pub fn refine(mesh: &Mesh, spec: &DensitySpec, rule: SplitRule) -> Result<(Mesh, RefinementMap)> {
    let cdf = if mesh.dim() == 1 { Some(spec.cdf()?) } else { None };
    let mut elements = Vec::with_capacity(mesh.len() * if mesh.dim() == 1 { 2 } else { 4 });
    let mut children = Vec::with_capacity(mesh.len());
    for e in mesh.elements() {
        let cells: Vec<Cell> = match (e.cell, rule) {
            (Cell::Interval { lo, hi }, SplitRule::Midpoint) => {
                let m = 0.5 * (lo + hi);
                vec![Cell::Interval { lo, hi: m }, Cell::Interval { lo: m, hi }]
            }
            (Cell::Interval { lo, hi }, SplitRule::EqualMass) => {
                let cdf = cdf.as_ref().expect("1D mesh has a cdf");
                let m = cdf.inverse(0.5 * (cdf.mass(lo) + cdf.mass(hi)))?.clamp(lo, hi);
                vec![Cell::Interval { lo, hi: m }, Cell::Interval { lo: m, hi }]
            }
            (Cell::Rect { .. }, SplitRule::Midpoint) => quadrants(&e.cell).to_vec(),
            (c @ Cell::Rect { .. }, SplitRule::EqualMass) => {
                let half = 0.5 * cell_mass(spec, &c)?;
                let (left, right) = split_at(&c, 0, mass_cut(spec, &c, 0, half)?);
                let mut out = Vec::with_capacity(4);
                let lm = cell_mass(spec, &left)?;
                let rm = cell_mass(spec, &right)?;
                let (ll, lu) = split_at(&left, 1, mass_cut(spec, &left, 1, 0.5 * lm)?);
                let (rl, ru) = split_at(&right, 1, mass_cut(spec, &right, 1, 0.5 * rm)?);
                out.extend([ll, rl, lu, ru]);
                out
            }
        };
        let mut ids = Vec::with_capacity(cells.len());
        for c in cells {
            if !(c.volume() > 0.0) {
                return Err(Error::DegenerateDensity(alloc::format!("refinement of element {} collapsed", e.id)));
            }
            let mass = match (&cdf, c) {
                (Some(t), Cell::Interval { lo, hi }) => t.mass(hi) - t.mass(lo),
                _ => cell_mass(spec, &c)?,
            };
            let id = elements.len();
            ids.push(id);
            elements.push(Element {
                id,
                cell: c,
                mass,
                parent: Some(e.id),
                depth: e.depth + 1,
            });
        }
        children.push(ids);
    }
    Ok((Mesh::from_elements(elements)?, RefinementMap::new(children)))
}
