//! Uniform square-cell meshes over unions of axis-aligned rectangles.
//!
//! The domain is an active-cell mask on a bounding lattice. Cells are
//! numbered lexicographically with x fastest. Interior faces point from the
//! cell at the lower coordinate to the one at the higher coordinate (for
//! wrap faces of a periodic axis this means from the last lattice column to
//! the first); boundary faces carry the outward normal of their cell.

use crate::error::{Error, Result};
use crate::euler::{HyperbolicBc, ParabolicBc};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Rect { lo, hi }
    }

    pub fn interval(x0: f64, x1: f64) -> Self {
        Rect { lo: [x0, 0.0], hi: [x1, 0.0] }
    }
}

#[derive(Debug, Clone)]
pub struct FaceTag {
    pub hyperbolic: HyperbolicBc,
    pub parabolic: ParabolicBc,
}

/// Boundary piece lying on the line x[axis] = coord, spanning [lo, hi]
/// along the other axis (the span is ignored in 1D).
#[derive(Debug, Clone)]
pub struct BoundarySegment {
    pub axis: usize,
    pub coord: f64,
    pub lo: f64,
    pub hi: f64,
    pub tag: FaceTag,
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub dim: usize,
    pub rects: Vec<Rect>,
    pub segments: Vec<BoundarySegment>,
    pub periodic: [bool; 2],
}

impl DomainSpec {
    pub fn new(dim: usize, rects: Vec<Rect>) -> Self {
        DomainSpec { dim, rects, segments: Vec::new(), periodic: [false; 2] }
    }

    pub fn periodic(mut self, axis: usize) -> Self {
        self.periodic[axis] = true;
        self
    }

    pub fn segment(mut self, axis: usize, coord: f64, span: [f64; 2], hyperbolic: HyperbolicBc, parabolic: ParabolicBc) -> Self {
        self.segments.push(BoundarySegment { axis, coord, lo: span[0], hi: span[1], tag: FaceTag { hyperbolic, parabolic } });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior { right: usize },
    Boundary { segment: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub left: usize,
    pub kind: FaceKind,
    pub normal: [f64; 2],
    /// Face corner with the smallest tangential coordinate.
    pub origin: [f64; 2],
    /// Local face index (2*axis + side) of the face within each cell.
    pub left_local: usize,
    pub right_local: usize,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, FaceKind::Boundary { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Cell(usize),
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub dx: f64,
    pub origin: [f64; 2],
    pub shape: [usize; 2],
    /// Lattice coordinates of each active cell.
    pub cells: Vec<[usize; 2]>,
    lattice: Vec<usize>,
    pub faces: Vec<Face>,
    /// Face ids of each cell, indexed by local face 2*axis + side.
    pub cell_faces: Vec<[usize; 4]>,
    pub segments: Vec<BoundarySegment>,
    pub periodic: [bool; 2],
}

const SNAP_TOL: f64 = 1e-8;

fn snap(v: f64, origin: f64, dx: f64, what: &str) -> Result<usize> {
    let r = (v - origin) / dx;
    let n = r.round();
    if (r - n).abs() > SNAP_TOL * n.abs().max(1.0) || n < 0.0 {
        return Err(Error::Snap(format!("{what} = {v} is not a multiple of dx = {dx} from {origin}")));
    }
    Ok(n as usize)
}

pub fn build_mesh(spec: &DomainSpec, dx: f64) -> Result<Mesh> {
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(Error::Config(format!("dx must be positive, got {dx}")));
    }
    let dim = spec.dim;
    if dim != 1 && dim != 2 {
        return Err(Error::Config(format!("dimension must be 1 or 2, got {dim}")));
    }
    if spec.rects.is_empty() {
        return Err(Error::Config("domain has no rectangles".into()));
    }
    let mut origin = [0.0; 2];
    let mut top = [0.0; 2];
    for a in 0..dim {
        origin[a] = spec.rects.iter().map(|r| r.lo[a]).fold(f64::INFINITY, f64::min);
        top[a] = spec.rects.iter().map(|r| r.hi[a]).fold(f64::NEG_INFINITY, f64::max);
    }
    let mut shape = [1usize; 2];
    let mut rect_idx = Vec::new();
    for a in 0..dim {
        shape[a] = snap(top[a], origin[a], dx, "domain extent")?;
    }
    for r in &spec.rects {
        let mut lo = [0usize; 2];
        let mut hi = [1usize; 2];
        for a in 0..dim {
            lo[a] = snap(r.lo[a], origin[a], dx, "rectangle corner")?;
            hi[a] = snap(r.hi[a], origin[a], dx, "rectangle corner")?;
            if hi[a] <= lo[a] {
                return Err(Error::Config(format!("degenerate rectangle {r:?}")));
            }
        }
        rect_idx.push((lo, hi));
    }
    for s in &spec.segments {
        if s.axis >= dim {
            return Err(Error::Config(format!("segment axis {} exceeds dimension", s.axis)));
        }
        snap(s.coord, origin[s.axis], dx, "boundary segment position")?;
        if dim == 2 {
            let t = 1 - s.axis;
            snap(s.lo, origin[t], dx, "boundary segment end")?;
            snap(s.hi, origin[t], dx, "boundary segment end")?;
        }
    }

    let mut lattice = vec![usize::MAX; shape[0] * shape[1]];
    let mut cells = Vec::new();
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let inside = rect_idx
                .iter()
                .any(|(lo, hi)| i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1]);
            if inside {
                lattice[i + shape[0] * j] = cells.len();
                cells.push([i, j]);
            }
        }
    }

    let mut mesh = Mesh {
        dim,
        dx,
        origin,
        shape,
        cells,
        lattice,
        faces: Vec::new(),
        cell_faces: Vec::new(),
        segments: spec.segments.clone(),
        periodic: spec.periodic,
    };
    mesh.cell_faces = vec![[usize::MAX; 4]; mesh.cells.len()];

    for c in 0..mesh.cells.len() {
        let lc = mesh.cells[c];
        for axis in 0..dim {
            for side in 0..2 {
                let (nb, wrapped) = mesh.lattice_neighbor(lc, axis, side);
                let local = 2 * axis + side;
                match nb {
                    Some(n) if side == 1 => {
                        let fid = mesh.faces.len();
                        let face = Face {
                            axis,
                            left: c,
                            kind: FaceKind::Interior { right: n },
                            normal: unit(axis, 1.0),
                            origin: mesh.face_origin(lc, axis, 1),
                            left_local: 2 * axis + 1,
                            right_local: 2 * axis,
                        };
                        mesh.faces.push(face);
                        mesh.cell_faces[c][local] = fid;
                        mesh.cell_faces[n][2 * axis] = fid;
                    }
                    Some(_) => {
                        let _ = wrapped;
                    }
                    None => {
                        let fo = mesh.face_origin(lc, axis, side);
                        let segment = mesh.find_segment(axis, fo)?;
                        let fid = mesh.faces.len();
                        mesh.faces.push(Face {
                            axis,
                            left: c,
                            kind: FaceKind::Boundary { segment },
                            normal: unit(axis, if side == 0 { -1.0 } else { 1.0 }),
                            origin: fo,
                            left_local: local,
                            right_local: local,
                        });
                        mesh.cell_faces[c][local] = fid;
                    }
                }
            }
        }
    }
    Ok(mesh)
}

fn unit(axis: usize, s: f64) -> [f64; 2] {
    let mut n = [0.0; 2];
    n[axis] = s;
    n
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Mesh diameter used by the penalty terms: sqrt(d) dx.
    pub fn h(&self) -> f64 {
        (self.dim as f64).sqrt() * self.dx
    }

    pub fn cell_at(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.shape[0] || j >= self.shape[1] {
            return None;
        }
        let c = self.lattice[i + self.shape[0] * j];
        (c != usize::MAX).then_some(c)
    }

    fn lattice_neighbor(&self, lc: [usize; 2], axis: usize, side: usize) -> (Option<usize>, bool) {
        let n = self.shape[axis] as isize;
        let mut p = [lc[0] as isize, lc[1] as isize];
        p[axis] += if side == 0 { -1 } else { 1 };
        let mut wrapped = false;
        if p[axis] < 0 || p[axis] >= n {
            if !self.periodic[axis] {
                return (None, false);
            }
            p[axis] = p[axis].rem_euclid(n);
            wrapped = true;
        }
        (self.cell_at(p[0] as usize, p[1] as usize), wrapped)
    }

    fn face_origin(&self, lc: [usize; 2], axis: usize, side: usize) -> [f64; 2] {
        let mut o = self.cell_lower(lc);
        o[axis] += side as f64 * self.dx;
        o
    }

    fn cell_lower(&self, lc: [usize; 2]) -> [f64; 2] {
        let mut o = [0.0; 2];
        for a in 0..self.dim {
            o[a] = self.origin[a] + lc[a] as f64 * self.dx;
        }
        o
    }

    fn find_segment(&self, axis: usize, fo: [f64; 2]) -> Result<usize> {
        let tol = 1e-8 * self.dx;
        let t = 1 - axis;
        let hits: Vec<usize> = self
            .segments
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.axis == axis
                    && (s.coord - fo[axis]).abs() <= tol
                    && (self.dim == 1 || (s.lo <= fo[t] + tol && fo[t] + self.dx <= s.hi + tol))
            })
            .map(|(i, _)| i)
            .collect();
        match hits.len() {
            1 => Ok(hits[0]),
            0 => Err(Error::Coverage(format!("no boundary segment covers the face at {fo:?} (axis {axis})"))),
            _ => Err(Error::Coverage(format!("face at {fo:?} (axis {axis}) is covered by segments {hits:?}"))),
        }
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, c: usize) -> [f64; 2] {
        self.cell_lower(self.cells[c])
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let o = self.cell_origin(c);
        let mut x = o;
        for a in 0..self.dim {
            x[a] += 0.5 * self.dx;
        }
        x
    }

    /// Physical point of reference coordinate xh in [-1/2,1/2]^d.
    #[inline]
    pub fn map_point(&self, c: usize, xh: [f64; 2]) -> [f64; 2] {
        let o = self.cell_origin(c);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = o[a] + self.dx * (xh[a] + 0.5);
        }
        x
    }

    /// Physical point on a face for tangential reference coordinate s.
    pub fn face_point(&self, f: usize, s: f64) -> [f64; 2] {
        let face = &self.faces[f];
        let mut x = face.origin;
        if self.dim == 2 {
            x[1 - face.axis] += self.dx * (s + 0.5);
        }
        x
    }

    pub fn face_tag(&self, f: usize) -> Option<&FaceTag> {
        match self.faces[f].kind {
            FaceKind::Boundary { segment } => Some(&self.segments[segment].tag),
            FaceKind::Interior { .. } => None,
        }
    }

    pub fn face_neighbors(&self, f: usize) -> (usize, Neighbor, [f64; 2]) {
        let face = &self.faces[f];
        let nb = match face.kind {
            FaceKind::Interior { right } => Neighbor::Cell(right),
            FaceKind::Boundary { segment } => Neighbor::Boundary(segment),
        };
        (face.left, nb, face.normal)
    }

    pub fn n_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn n_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Face measure: dx in 2D, one in 1D.
    pub fn face_measure(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            self.dx
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }
}
