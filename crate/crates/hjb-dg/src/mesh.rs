//! Axis-aligned quadrilateral meshes on the unit square, with 1-irregular
//! (single hanging node) refinement toward the boundary and face extraction.
//!
//! Faces are flat segments. Every interior face carries a fixed normal
//! pointing in `+x` or `+y`; boundary faces carry the outward normal. With
//! hanging nodes, the faces are the fine-side facets, so the coarse element's
//! trace is evaluated separately on each sub-facet.

use crate::{Error, Result};
use std::collections::HashMap;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Element diameter `h_K = diam K` (the diagonal).
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn centroid(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Mesh element: corner indices in counter-clockwise order starting at the
/// bottom-left, plus the dyadic refinement depth (cell width `2^-level` for
/// square cells).
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub corners: [usize; 4],
    pub level: u32,
}

/// 2D quadrilateral mesh of the unit square.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
}

impl Mesh2D {
    /// Rectangle spanned by element `k`.
    pub fn bounds(&self, k: usize) -> Rect {
        let e = &self.elements[k];
        let bl = self.vertices[e.corners[0]];
        let tr = self.vertices[e.corners[2]];
        Rect {
            x0: bl[0],
            y0: bl[1],
            x1: tr[0],
            y1: tr[1],
        }
    }

    /// `h_K` for element `k`.
    pub fn diameter(&self, k: usize) -> f64 {
        self.bounds(k).diameter()
    }

    /// `h = max_K h_K`.
    pub fn mesh_size(&self) -> f64 {
        (0..self.elements.len())
            .map(|k| self.diameter(k))
            .fold(0.0, f64::max)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// FNV-1a fingerprint of the mesh geometry, used by checkpoint headers.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in &self.vertices {
            eat(&v[0].to_bits().to_le_bytes());
            eat(&v[1].to_bits().to_le_bytes());
        }
        for e in &self.elements {
            for c in e.corners {
                eat(&(c as u64).to_le_bytes());
            }
            eat(&(e.level as u64).to_le_bytes());
        }
        h
    }

    /// Single-element mesh of the unit square, mostly used by tests.
    pub fn unit_square() -> Self {
        let mut b = MeshBuilder::new();
        b.push_rect(
            Rect {
                x0: 0.0,
                y0: 0.0,
                x1: 1.0,
                y1: 1.0,
            },
            0,
        );
        b.finish()
    }
}

struct MeshBuilder {
    vertices: Vec<[f64; 2]>,
    lookup: HashMap<(u64, u64), usize>,
    elements: Vec<Element>,
}

impl MeshBuilder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            lookup: HashMap::new(),
            elements: Vec::new(),
        }
    }

    fn vertex(&mut self, p: [f64; 2]) -> usize {
        let key = (p[0].to_bits(), p[1].to_bits());
        *self.lookup.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }

    fn push_rect(&mut self, r: Rect, level: u32) {
        let corners = [
            self.vertex([r.x0, r.y0]),
            self.vertex([r.x1, r.y0]),
            self.vertex([r.x1, r.y1]),
            self.vertex([r.x0, r.y1]),
        ];
        self.elements.push(Element { corners, level });
    }

    fn finish(self) -> Mesh2D {
        Mesh2D {
            vertices: self.vertices,
            elements: self.elements,
        }
    }
}

/// Regular subdivision of the unit square into `4^k` squares of width `2^-k`.
pub fn build_uniform_quad_mesh(k: u32) -> Mesh2D {
    assert!(k >= 1, "uniform mesh needs k >= 1");
    let n = 1usize << k;
    let mut b = MeshBuilder::new();
    let coord = |i: usize| i as f64 / n as f64;
    for j in 0..n {
        for i in 0..n {
            b.push_rect(
                Rect {
                    x0: coord(i),
                    y0: coord(j),
                    x1: coord(i + 1),
                    y1: coord(j + 1),
                },
                k,
            );
        }
    }
    b.finish()
}

/// Geometrically graded mesh: starting from the 2x2 partition, each pass
/// splits every element touching the boundary of the unit square into four.
/// `levels = 1` is the base partition. The result is 1-irregular.
pub fn build_graded_quad_mesh(levels: u32) -> Mesh2D {
    assert!(levels >= 1, "graded mesh needs levels >= 1");
    let mut rects: Vec<(Rect, u32)> = Vec::new();
    for j in 0..2 {
        for i in 0..2 {
            rects.push((
                Rect {
                    x0: i as f64 * 0.5,
                    y0: j as f64 * 0.5,
                    x1: (i + 1) as f64 * 0.5,
                    y1: (j + 1) as f64 * 0.5,
                },
                1,
            ));
        }
    }
    for _pass in 1..levels {
        let mut next = Vec::with_capacity(rects.len() * 2);
        for (r, level) in rects {
            let touches_boundary =
                r.x0 == 0.0 || r.y0 == 0.0 || r.x1 == 1.0 || r.y1 == 1.0;
            if touches_boundary {
                let xm = 0.5 * (r.x0 + r.x1);
                let ym = 0.5 * (r.y0 + r.y1);
                for (cy0, cy1) in [(r.y0, ym), (ym, r.y1)] {
                    for (cx0, cx1) in [(r.x0, xm), (xm, r.x1)] {
                        next.push((
                            Rect {
                                x0: cx0,
                                y0: cy0,
                                x1: cx1,
                                y1: cy1,
                            },
                            level + 1,
                        ));
                    }
                }
            } else {
                next.push((r, level));
            }
        }
        rects = next;
    }
    let mut b = MeshBuilder::new();
    for (r, level) in rects {
        b.push_rect(r, level);
    }
    b.finish()
}

/// Face kind: interior (two adjacent elements) or boundary (one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// Flat mesh face with a fixed unit normal. The normal points outward for
/// `k_ext` and inward for `k_int`.
#[derive(Debug, Clone)]
pub struct Face {
    pub kind: FaceKind,
    pub normal: [f64; 2],
    pub k_ext: usize,
    pub k_int: Option<usize>,
    pub endpoints: [[f64; 2]; 2],
    pub length: f64,
}

impl Face {
    /// Unit tangent, the normal rotated by +90 degrees. The same tangent is
    /// used for both one-sided traces of the face.
    pub fn tangent(&self) -> [f64; 2] {
        [-self.normal[1], self.normal[0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Axis {
    X,
    Y,
}

// One element side lying on the line `axis = coord`. `minus` means the element
// sits on the negative side of the line (the side is the element's maximal
// coordinate along `axis`).
#[derive(Debug, Clone, Copy)]
struct Side {
    elem: usize,
    lo: f64,
    hi: f64,
}

/// Extract all faces of the mesh as fine-side facets. Interior normals are
/// `+x` or `+y`; boundary normals point outward. The returned order is
/// deterministic: lines sorted by (axis, coordinate), facets by position.
pub fn extract_faces(mesh: &Mesh2D) -> Result<Vec<Face>> {
    // group element sides by the supporting line
    let mut lines: HashMap<(Axis, u64), (Vec<Side>, Vec<Side>)> = HashMap::new();
    for k in 0..mesh.n_elements() {
        let r = mesh.bounds(k);
        let mut add = |axis: Axis, coord: f64, lo: f64, hi: f64, minus: bool| {
            let entry = lines
                .entry((axis, coord.to_bits()))
                .or_insert_with(|| (Vec::new(), Vec::new()));
            let side = Side { elem: k, lo, hi };
            if minus {
                entry.0.push(side);
            } else {
                entry.1.push(side);
            }
        };
        add(Axis::X, r.x0, r.y0, r.y1, false);
        add(Axis::X, r.x1, r.y0, r.y1, true);
        add(Axis::Y, r.y0, r.x0, r.x1, false);
        add(Axis::Y, r.y1, r.x0, r.x1, true);
    }

    let mut keys: Vec<(Axis, u64)> = lines.keys().copied().collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1)))
    });

    let mut faces = Vec::new();
    for key in keys {
        let (axis, coord_bits) = key;
        let coord = f64::from_bits(coord_bits);
        let (mut minus, mut plus) = lines.remove(&key).unwrap();
        minus.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        plus.sort_by(|a, b| a.lo.total_cmp(&b.lo));

        let make_face = |kind, normal, k_ext, k_int, lo: f64, hi: f64| {
            let endpoints = match axis {
                Axis::X => [[coord, lo], [coord, hi]],
                Axis::Y => [[lo, coord], [hi, coord]],
            };
            Face {
                kind,
                normal,
                k_ext,
                k_int,
                endpoints,
                length: hi - lo,
            }
        };

        let on_domain_boundary = coord == 0.0 || coord == 1.0;
        if on_domain_boundary {
            // Outward normal: -axis at 0, +axis at 1. Exactly one of the two
            // side lists is populated.
            let outward = match (axis, coord == 0.0) {
                (Axis::X, true) => [-1.0, 0.0],
                (Axis::X, false) => [1.0, 0.0],
                (Axis::Y, true) => [0.0, -1.0],
                (Axis::Y, false) => [0.0, 1.0],
            };
            let sides = if coord == 0.0 { &plus } else { &minus };
            let other = if coord == 0.0 { &minus } else { &plus };
            if !other.is_empty() {
                return Err(Error::MeshTopology(format!(
                    "element side beyond the domain boundary at {axis:?} = {coord}"
                )));
            }
            for s in sides {
                faces.push(make_face(FaceKind::Boundary, outward, s.elem, None, s.lo, s.hi));
            }
            continue;
        }

        // Interior line: both sides must cover the same union; the facets are
        // the common (fine-side) subdivision.
        let normal = match axis {
            Axis::X => [1.0, 0.0],
            Axis::Y => [0.0, 1.0],
        };
        let mut cuts: Vec<f64> = minus
            .iter()
            .chain(plus.iter())
            .flat_map(|s| [s.lo, s.hi])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let find = |sides: &[Side], lo: f64, hi: f64| -> Option<usize> {
            sides
                .iter()
                .find(|s| s.lo <= lo && hi <= s.hi)
                .map(|s| s.elem)
        };
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let m = find(&minus, lo, hi);
            let p = find(&plus, lo, hi);
            match (m, p) {
                (Some(me), Some(pe)) => {
                    // normal (+axis) is outward for the minus-side element
                    faces.push(make_face(FaceKind::Interior, normal, me, Some(pe), lo, hi));
                }
                (None, None) => {
                    // gap on this line (no element abuts here); fine
                }
                _ => {
                    return Err(Error::MeshTopology(format!(
                        "non-matching facet [{lo}, {hi}] on interior line {axis:?} = {coord}"
                    )));
                }
            }
        }
    }
    Ok(faces)
}

/// Penalty geometry of a face per the jump-stabilisation rule: interior faces
/// take `h~ = min(h_K, h_K')` and `p~ = max(p_K, p_K')`; boundary faces take
/// the single element's values.
pub fn face_penalty_geometry(mesh: &Mesh2D, face: &Face, degrees: &[usize]) -> (f64, usize) {
    let h_ext = mesh.diameter(face.k_ext);
    let p_ext = degrees[face.k_ext];
    match face.k_int {
        Some(k_int) => {
            let h_int = mesh.diameter(k_int);
            let p_int = degrees[k_int];
            (h_ext.min(h_int), p_ext.max(p_int))
        }
        None => (h_ext, p_ext),
    }
}

/// Plain-text debug dump: one element per line `id x0 y0 x1 y1 level`, then
/// one face per line `id kind kext kint nx ny x0 y0 x1 y1`.
pub fn dump_mesh(mesh: &Mesh2D, faces: &[Face]) -> String {
    let mut out = String::new();
    for k in 0..mesh.n_elements() {
        let r = mesh.bounds(k);
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            k, r.x0, r.y0, r.x1, r.y1, mesh.elements[k].level
        ));
    }
    for (i, f) in faces.iter().enumerate() {
        let kind = match f.kind {
            FaceKind::Interior => "interior",
            FaceKind::Boundary => "boundary",
        };
        let k_int = f.k_int.map(|k| k as i64).unwrap_or(-1);
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {}\n",
            i,
            kind,
            f.k_ext,
            k_int,
            f.normal[0],
            f.normal[1],
            f.endpoints[0][0],
            f.endpoints[0][1],
            f.endpoints[1][0],
            f.endpoints[1][1],
        ));
    }
    out
}
