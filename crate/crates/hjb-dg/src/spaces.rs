//! Discrete spaces and tabulations.
//!
//! The spatial space is the discontinuous tensor-product Legendre space of
//! per-element degree `p_K >= 2`, L2-orthonormal on each element (element mass
//! matrices are identity). Temporal slabs carry Legendre bases of degree `q_n`
//! normalised on the reference interval. All quadrature is Gauss-Legendre.

use crate::basis::{orthonormal_legendre, orthonormal_legendre_endpoint};
use crate::mesh::{extract_faces, Face, Mesh2D};
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

/// Discontinuous Galerkin space over a quadrilateral mesh.
#[derive(Debug, Clone)]
pub struct DGSpace {
    pub mesh: Mesh2D,
    pub faces: Vec<Face>,
    pub degrees: Vec<usize>,
    offsets: Vec<usize>,
    n_dofs: usize,
}

impl DGSpace {
    pub fn new(mesh: Mesh2D, degrees: Vec<usize>) -> Result<Self> {
        if degrees.len() != mesh.n_elements() {
            return Err(Error::InvalidArgument(
                "degree vector length must match element count".into(),
            ));
        }
        if let Some(&p) = degrees.iter().find(|&&p| p < 2) {
            return Err(Error::InvalidArgument(format!(
                "element degrees must be >= 2, got {p}"
            )));
        }
        let faces = extract_faces(&mesh)?;
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        let mut acc = 0;
        for &p in &degrees {
            offsets.push(acc);
            acc += (p + 1) * (p + 1);
        }
        offsets.push(acc);
        Ok(Self {
            mesh,
            faces,
            degrees,
            offsets,
            n_dofs: acc,
        })
    }

    pub fn uniform(mesh: Mesh2D, p: usize) -> Result<Self> {
        let degrees = vec![p; mesh.n_elements()];
        Self::new(mesh, degrees)
    }

    /// Degrees increasing linearly away from the boundary: the finest
    /// (boundary) cells get `base`, each coarser refinement ring one more.
    pub fn graded_degrees(mesh: &Mesh2D, base: usize) -> Vec<usize> {
        let max_level = mesh.elements.iter().map(|e| e.level).max().unwrap_or(0);
        mesh.elements
            .iter()
            .map(|e| base + (max_level - e.level) as usize)
            .collect()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn elem_n_dofs(&self, k: usize) -> usize {
        let p = self.degrees[k];
        (p + 1) * (p + 1)
    }

    pub fn max_degree(&self) -> usize {
        *self.degrees.iter().max().unwrap()
    }

    /// Largest ratio `max(p_K, p_K') / min(p_K, p_K')` over interior faces.
    pub fn degree_ratio(&self) -> f64 {
        self.faces
            .iter()
            .filter_map(|f| {
                f.k_int.map(|k_int| {
                    let (a, b) = (self.degrees[f.k_ext] as f64, self.degrees[k_int] as f64);
                    a.max(b) / a.min(b)
                })
            })
            .fold(1.0, f64::max)
    }

    /// FNV-1a fingerprint of mesh geometry and degree vector, used by the
    /// solution checkpoint format.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in &self.mesh.vertices {
            eat(&v[0].to_bits().to_le_bytes());
            eat(&v[1].to_bits().to_le_bytes());
        }
        for e in &self.mesh.elements {
            for c in e.corners {
                eat(&(c as u64).to_le_bytes());
            }
            eat(&(e.level as u64).to_le_bytes());
        }
        for &p in &self.degrees {
            eat(&(p as u64).to_le_bytes());
        }
        h
    }
}

/// Number of 1D quadrature points per axis for assembly on degree-`p`
/// elements: exactness `2p + 5`, leaving margin for the variable coefficients.
pub fn assembly_points(p: usize) -> usize {
    p + 3
}

/// Quadrature for error integrands runs one order above the assembly rule.
pub fn error_points(p: usize) -> usize {
    p + 4
}

/// Per-element tabulation of basis values, gradients and Hessian components
/// at the tensor-product Gauss points, in physical coordinates. Storage is
/// `dof * nq + q`.
#[derive(Debug, Clone)]
pub struct ElementTab {
    pub elem: usize,
    pub n_dofs: usize,
    pub nq: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub val: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub hxx: Vec<f64>,
    pub hxy: Vec<f64>,
    pub hyy: Vec<f64>,
}

impl ElementTab {
    #[inline]
    pub fn laplacian(&self, dof: usize, q: usize) -> f64 {
        let idx = dof * self.nq + q;
        self.hxx[idx] + self.hyy[idx]
    }
}

/// Tabulate element `k` on the tensor Gauss rule with `n1d` points per axis.
pub fn tabulate_element(space: &DGSpace, k: usize, n1d: usize) -> ElementTab {
    let p = space.degrees[k];
    let r = space.mesh.bounds(k);
    let rule = gauss_legendre(n1d);
    let (hx, hy) = (r.width(), r.height());
    let scale = 2.0 / (hx * hy).sqrt();
    let (dx, dy) = (2.0 / hx, 2.0 / hy);

    // 1D tables per axis: [dof_1d][point]
    let lx: Vec<Vec<[f64; 3]>> = rule.nodes.iter().map(|&s| orthonormal_legendre(p, s)).collect();

    let n_dofs = (p + 1) * (p + 1);
    let nq = n1d * n1d;
    let mut tab = ElementTab {
        elem: k,
        n_dofs,
        nq,
        points: Vec::with_capacity(nq),
        weights: Vec::with_capacity(nq),
        val: vec![0.0; n_dofs * nq],
        gx: vec![0.0; n_dofs * nq],
        gy: vec![0.0; n_dofs * nq],
        hxx: vec![0.0; n_dofs * nq],
        hxy: vec![0.0; n_dofs * nq],
        hyy: vec![0.0; n_dofs * nq],
    };
    let jac = 0.25 * hx * hy;
    for b in 0..n1d {
        for a in 0..n1d {
            let xi = rule.nodes[a];
            let eta = rule.nodes[b];
            tab.points.push([
                r.x0 + 0.5 * (xi + 1.0) * hx,
                r.y0 + 0.5 * (eta + 1.0) * hy,
            ]);
            tab.weights.push(rule.weights[a] * rule.weights[b] * jac);
        }
    }
    for j in 0..=p {
        for i in 0..=p {
            let dof = j * (p + 1) + i;
            for b in 0..n1d {
                let fy = lx[b][j];
                for a in 0..n1d {
                    let fx = lx[a][i];
                    let q = b * n1d + a;
                    let idx = dof * nq + q;
                    tab.val[idx] = scale * fx[0] * fy[0];
                    tab.gx[idx] = scale * fx[1] * fy[0] * dx;
                    tab.gy[idx] = scale * fx[0] * fy[1] * dy;
                    tab.hxx[idx] = scale * fx[2] * fy[0] * dx * dx;
                    tab.hxy[idx] = scale * fx[1] * fy[1] * dx * dy;
                    tab.hyy[idx] = scale * fx[0] * fy[2] * dy * dy;
                }
            }
        }
    }
    tab
}

/// One-sided trace tables on a face: values, normal derivative, tangential
/// derivative, second tangential derivative, and the tangential derivative of
/// the normal derivative. Storage is `dof * nq + q`.
#[derive(Debug, Clone)]
pub struct FaceSideTab {
    pub elem: usize,
    pub n_dofs: usize,
    pub val: Vec<f64>,
    pub dn: Vec<f64>,
    pub dt: Vec<f64>,
    pub dtt: Vec<f64>,
    pub dnt: Vec<f64>,
}

/// Face tabulation; `sides[0]` is the exterior element (normal outward),
/// `sides[1]`, when present, the interior one.
#[derive(Debug, Clone)]
pub struct FaceTab {
    pub face: usize,
    pub nq: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub sides: Vec<FaceSideTab>,
}

/// Tabulate one-sided traces of the adjacent elements on face `f` with an
/// `n1d`-point Gauss rule along the face.
pub fn tabulate_face(space: &DGSpace, f: usize, n1d: usize) -> FaceTab {
    let face = &space.faces[f];
    let rule = gauss_legendre(n1d);
    let [a, b] = face.endpoints;
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let half = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
    let points: Vec<[f64; 2]> = rule
        .nodes
        .iter()
        .map(|&s| [mid[0] + s * half[0], mid[1] + s * half[1]])
        .collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| w * 0.5 * face.length).collect();

    let n = face.normal;
    let t = face.tangent();
    let mut sides = Vec::new();
    let mut elems = vec![face.k_ext];
    if let Some(k_int) = face.k_int {
        elems.push(k_int);
    }
    for elem in elems {
        let p = space.degrees[elem];
        let r = space.mesh.bounds(elem);
        let (hx, hy) = (r.width(), r.height());
        let scale = 2.0 / (hx * hy).sqrt();
        let (dx, dy) = (2.0 / hx, 2.0 / hy);
        let n_dofs = (p + 1) * (p + 1);
        let nq = points.len();
        let mut side = FaceSideTab {
            elem,
            n_dofs,
            val: vec![0.0; n_dofs * nq],
            dn: vec![0.0; n_dofs * nq],
            dt: vec![0.0; n_dofs * nq],
            dtt: vec![0.0; n_dofs * nq],
            dnt: vec![0.0; n_dofs * nq],
        };
        for (q, pt) in points.iter().enumerate() {
            // the face lies on an element side, so one reference coordinate
            // is exactly +-1 and the endpoint recurrences stay valid
            let xi = (2.0 * (pt[0] - r.x0) - hx) / hx;
            let eta = (2.0 * (pt[1] - r.y0) - hy) / hy;
            let fx = orthonormal_legendre(p, xi.clamp(-1.0, 1.0));
            let fy = orthonormal_legendre(p, eta.clamp(-1.0, 1.0));
            for j in 0..=p {
                for i in 0..=p {
                    let dof = j * (p + 1) + i;
                    let idx = dof * nq + q;
                    let v = scale * fx[i][0] * fy[j][0];
                    let gx = scale * fx[i][1] * fy[j][0] * dx;
                    let gy = scale * fx[i][0] * fy[j][1] * dy;
                    let hxx = scale * fx[i][2] * fy[j][0] * dx * dx;
                    let hxy = scale * fx[i][1] * fy[j][1] * dx * dy;
                    let hyy = scale * fx[i][0] * fy[j][2] * dy * dy;
                    side.val[idx] = v;
                    side.dn[idx] = gx * n[0] + gy * n[1];
                    side.dt[idx] = gx * t[0] + gy * t[1];
                    // t.H.t and t.H.n with H symmetric
                    side.dtt[idx] = t[0] * (hxx * t[0] + hxy * t[1]) + t[1] * (hxy * t[0] + hyy * t[1]);
                    side.dnt[idx] = t[0] * (hxx * n[0] + hxy * n[1]) + t[1] * (hxy * n[0] + hyy * n[1]);
                }
            }
        }
        sides.push(side);
    }
    FaceTab {
        face: f,
        nq: points.len(),
        points,
        weights,
        sides,
    }
}

/// Temporal grading of the partition of `(0, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeGrading {
    Uniform { n: usize },
    /// `t_n = sigma^(N-n) T`, concentrating intervals near `t = 0`.
    Geometric { sigma: f64, n: usize },
}

/// Rule assigning the temporal degree of each interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeRule {
    Constant { q: usize },
    /// `q_n = n + 1` (1-based interval index).
    Linear,
}

/// Partition of `(0, T]` into half-open intervals `(t_{n-1}, t_n]` with a
/// temporal polynomial degree per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    pub points: Vec<f64>,
    pub degrees: Vec<usize>,
}

impl TimePartition {
    pub fn n_slabs(&self) -> usize {
        self.degrees.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Interval length of slab `n` (0-based).
    pub fn tau(&self, n: usize) -> f64 {
        self.points[n + 1] - self.points[n]
    }

    pub fn interval(&self, n: usize) -> (f64, f64) {
        (self.points[n], self.points[n + 1])
    }

    /// Temporal degrees of freedom `sum_n (q_n + 1)`.
    pub fn dof_tau(&self) -> usize {
        self.degrees.iter().map(|q| q + 1).sum()
    }
}

pub fn build_time_partition(
    grading: TimeGrading,
    horizon: f64,
    q_rule: DegreeRule,
) -> Result<TimePartition> {
    if horizon <= 0.0 {
        return Err(Error::Config("time horizon must be positive".into()));
    }
    let points = match grading {
        TimeGrading::Uniform { n } => {
            if n < 1 {
                return Err(Error::Config("need at least one time interval".into()));
            }
            (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
        }
        TimeGrading::Geometric { sigma, n } => {
            if n < 1 {
                return Err(Error::Config("need at least one time interval".into()));
            }
            if !(0.0 < sigma && sigma < 1.0) {
                return Err(Error::Config(format!(
                    "geometric grading needs sigma in (0, 1), got {sigma}"
                )));
            }
            let mut pts = vec![0.0];
            pts.extend((1..=n).map(|i| sigma.powi((n - i) as i32) * horizon));
            pts
        }
    };
    let n = points.len() - 1;
    let degrees = match q_rule {
        DegreeRule::Constant { q } => {
            if q < 1 {
                return Err(Error::Config("temporal degree must be >= 1".into()));
            }
            vec![q; n]
        }
        DegreeRule::Linear => (1..=n).map(|i| i + 1).collect(),
    };
    Ok(TimePartition { points, degrees })
}

/// Temporal basis tables on one slab: values and time derivatives of the
/// reference-orthonormal Legendre basis at the Gauss points and at the
/// interval endpoints, plus the small Gram matrices used by the assembly.
#[derive(Debug, Clone)]
pub struct TemporalTab {
    pub q: usize,
    pub t0: f64,
    pub t1: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `val[m][g]`, `dval[m][g]` with `d/dt` scaling applied.
    pub val: Vec<Vec<f64>>,
    pub dval: Vec<Vec<f64>>,
    /// Basis values at `t0+` and at `t1` (exact endpoint formulas).
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// `t_mass[a][b] = int psi_a psi_b dt` and friends, by quadrature.
    pub t_mass: Vec<Vec<f64>>,
    /// `t_dm[a][b] = int dpsi_a psi_b dt`.
    pub t_dm: Vec<Vec<f64>>,
    pub t_dd: Vec<Vec<f64>>,
}

/// Build the temporal tables for degree `q` on `(t0, t1]` with `q + extra`
/// Gauss points (`extra >= 2` keeps products of degree `2q` exact with
/// margin).
pub fn temporal_basis(q: usize, t0: f64, t1: f64, extra: usize) -> TemporalTab {
    assert!(q >= 1);
    let tau = t1 - t0;
    let rule = gauss_legendre(q + extra);
    let nm = q + 1;
    let ng = rule.len();
    let nodes: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&s| t0 + 0.5 * (s + 1.0) * tau)
        .collect();
    let weights: Vec<f64> = rule.weights.iter().map(|&w| w * 0.5 * tau).collect();
    let mut val = vec![vec![0.0; ng]; nm];
    let mut dval = vec![vec![0.0; ng]; nm];
    for (g, &s) in rule.nodes.iter().enumerate() {
        let l = orthonormal_legendre(q, s);
        for m in 0..nm {
            val[m][g] = l[m][0];
            dval[m][g] = l[m][1] * 2.0 / tau;
        }
    }
    let left = orthonormal_legendre_endpoint(q, false);
    let right = orthonormal_legendre_endpoint(q, true);
    let mut t_mass = vec![vec![0.0; nm]; nm];
    let mut t_dm = vec![vec![0.0; nm]; nm];
    let mut t_dd = vec![vec![0.0; nm]; nm];
    for g in 0..ng {
        let w = weights[g];
        for a in 0..nm {
            for b in 0..nm {
                t_mass[a][b] += w * val[a][g] * val[b][g];
                t_dm[a][b] += w * dval[a][g] * val[b][g];
                t_dd[a][b] += w * dval[a][g] * dval[b][g];
            }
        }
    }
    TemporalTab {
        q,
        t0,
        t1,
        nodes,
        weights,
        val,
        dval,
        left,
        right,
        t_mass,
        t_dm,
        t_dd,
    }
}

/// Temporal jump and average at partition point `n` of `N`:
/// at `n = 0` they are `-v(0+)` and `v(0+)`; at `n = N` both are `v(T)`;
/// in between `v(t_n) - v(t_n+)` and the arithmetic mean. Applied
/// componentwise to coefficient vectors.
pub fn temporal_jump_avg(
    end_left: Option<&[f64]>,
    start_right: Option<&[f64]>,
    n: usize,
    n_total: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
    if n == 0 {
        let Some(r) = start_right else {
            return bad("jump at n = 0 needs the right limit");
        };
        Ok((r.iter().map(|v| -v).collect(), r.to_vec()))
    } else if n == n_total {
        let Some(l) = end_left else {
            return bad("jump at n = N needs the left limit");
        };
        Ok((l.to_vec(), l.to_vec()))
    } else {
        let (Some(l), Some(r)) = (end_left, start_right) else {
            return bad("interior jump needs both one-sided limits");
        };
        if l.len() != r.len() {
            return bad("one-sided limits must have equal length");
        }
        let jump = l.iter().zip(r).map(|(a, b)| a - b).collect();
        let avg = l.iter().zip(r).map(|(a, b)| 0.5 * (a + b)).collect();
        Ok((jump, avg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_quad_mesh, FaceKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn space_dimension() {
        let mesh = build_uniform_quad_mesh(2);
        let space = DGSpace::uniform(mesh, 3).unwrap();
        assert_eq!(space.n_dofs(), 16 * 16);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let mesh = build_uniform_quad_mesh(1);
        let space = DGSpace::uniform(mesh, 4).unwrap();
        let tab = tabulate_element(&space, 2, assembly_points(4));
        for i in 0..tab.n_dofs {
            for j in 0..tab.n_dofs {
                let mut g = 0.0;
                for q in 0..tab.nq {
                    g += tab.weights[q] * tab.val[i * tab.nq + q] * tab.val[j * tab.nq + q];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-12, "({i},{j}): {g}");
            }
        }
    }

    #[test]
    fn constant_mode_value_and_gradient() {
        let mesh = build_uniform_quad_mesh(1);
        let space = DGSpace::uniform(mesh, 2).unwrap();
        let tab = tabulate_element(&space, 0, 3);
        let area = space.mesh.bounds(0).area();
        for q in 0..tab.nq {
            assert!((tab.val[q] - 1.0 / area.sqrt()).abs() < 1e-14);
            assert_eq!(tab.gx[q], 0.0);
            assert_eq!(tab.gy[q], 0.0);
        }
    }

    #[test]
    fn x_linear_mode_gradient_scaling() {
        // reference x-Legendre degree 1 on a square of width 0.5: the
        // physical x-derivative carries the chain-rule factor 2/h = 4
        let mesh = build_uniform_quad_mesh(1);
        let space = DGSpace::uniform(mesh, 2).unwrap();
        let tab = tabulate_element(&space, 0, 3);
        let scale = 2.0 / space.mesh.bounds(0).area().sqrt();
        // dof (i=1, j=0): value = scale * L1(xi) * L0(eta)
        let dof = 1;
        for q in 0..tab.nq {
            let expect = scale * (1.5f64).sqrt() * (0.5f64).sqrt() * 4.0;
            assert!((tab.gx[dof * tab.nq + q] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_of_projected_quadratic_is_constant() {
        let mesh = build_uniform_quad_mesh(2);
        let space = DGSpace::uniform(mesh, 2).unwrap();
        let k = 5;
        let tab = tabulate_element(&space, k, assembly_points(2));
        // project v = 3x^2 - xy + 0.5y^2 onto the element basis
        let v = |x: f64, y: f64| 3.0 * x * x - x * y + 0.5 * y * y;
        let mut coeffs = vec![0.0; tab.n_dofs];
        for (i, c) in coeffs.iter_mut().enumerate() {
            for q in 0..tab.nq {
                let [x, y] = tab.points[q];
                *c += tab.weights[q] * v(x, y) * tab.val[i * tab.nq + q];
            }
        }
        for q in 0..tab.nq {
            let mut h = [0.0; 3];
            for i in 0..tab.n_dofs {
                h[0] += coeffs[i] * tab.hxx[i * tab.nq + q];
                h[1] += coeffs[i] * tab.hxy[i * tab.nq + q];
                h[2] += coeffs[i] * tab.hyy[i * tab.nq + q];
            }
            assert!((h[0] - 6.0).abs() < 1e-12);
            assert!((h[1] + 1.0).abs() < 1e-12);
            assert!((h[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn face_trace_matches_direct_evaluation() {
        let mesh = build_uniform_quad_mesh(2);
        let space = DGSpace::uniform(mesh, 3).unwrap();
        let v = |x: f64, y: f64| (3.0 * x - 1.0) * (y * y + 0.5 * x);
        for (f, face) in space.faces.iter().enumerate() {
            let ftab = tabulate_face(&space, f, 6);
            for side in &ftab.sides {
                let etab = tabulate_element(&space, side.elem, assembly_points(3));
                let mut coeffs = vec![0.0; etab.n_dofs];
                for (i, c) in coeffs.iter_mut().enumerate() {
                    for q in 0..etab.nq {
                        let [x, y] = etab.points[q];
                        *c += etab.weights[q] * v(x, y) * etab.val[i * etab.nq + q];
                    }
                }
                for q in 0..ftab.nq {
                    let [x, y] = ftab.points[q];
                    let mut tr = 0.0;
                    for i in 0..side.n_dofs {
                        tr += coeffs[i] * side.val[i * ftab.nq + q];
                    }
                    assert!(
                        (tr - v(x, y)).abs() < 1e-13 * v(x, y).abs().max(1.0),
                        "face {f} ({:?})",
                        face.kind
                    );
                }
            }
        }
    }

    #[test]
    fn tangential_derivatives_of_x_squared_on_vertical_face() {
        // v = x^2 on a face with normal +x: the face direction is y, so both
        // tangential derivatives vanish
        let mesh = build_uniform_quad_mesh(1);
        let space = DGSpace::uniform(mesh, 2).unwrap();
        let f = space
            .faces
            .iter()
            .position(|f| f.kind == FaceKind::Interior && f.normal == [1.0, 0.0])
            .unwrap();
        let ftab = tabulate_face(&space, f, 5);
        let side = &ftab.sides[0];
        let etab = tabulate_element(&space, side.elem, 5);
        let mut coeffs = vec![0.0; etab.n_dofs];
        for (i, c) in coeffs.iter_mut().enumerate() {
            for q in 0..etab.nq {
                let [x, _] = etab.points[q];
                *c += etab.weights[q] * x * x * etab.val[i * etab.nq + q];
            }
        }
        for q in 0..ftab.nq {
            let (mut dt, mut dtt) = (0.0, 0.0);
            for i in 0..side.n_dofs {
                dt += coeffs[i] * side.dt[i * ftab.nq + q];
                dtt += coeffs[i] * side.dtt[i * ftab.nq + q];
            }
            assert!(dt.abs() < 1e-12);
            assert!(dtt.abs() < 1e-12);
        }
    }

    #[test]
    fn jumps_of_globally_linear_function_vanish() {
        let mesh = build_uniform_quad_mesh(2);
        let space = DGSpace::uniform(mesh, 2).unwrap();
        let v = |x: f64, y: f64| 0.75 * x - 1.25 * y + 0.3;
        let grad = [0.75, -1.25];
        for f in 0..space.faces.len() {
            let face = &space.faces[f];
            if face.kind != FaceKind::Interior {
                continue;
            }
            let ftab = tabulate_face(&space, f, 4);
            let t = face.tangent();
            let gt = grad[0] * t[0] + grad[1] * t[1];
            let gn = grad[0] * face.normal[0] + grad[1] * face.normal[1];
            let mut per_side: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
            for side in &ftab.sides {
                let etab = tabulate_element(&space, side.elem, 4);
                let mut coeffs = vec![0.0; etab.n_dofs];
                for (i, c) in coeffs.iter_mut().enumerate() {
                    for q in 0..etab.nq {
                        let [x, y] = etab.points[q];
                        *c += etab.weights[q] * v(x, y) * etab.val[i * etab.nq + q];
                    }
                }
                let mut vals = vec![0.0; ftab.nq];
                let mut dns = vec![0.0; ftab.nq];
                let mut dts = vec![0.0; ftab.nq];
                for q in 0..ftab.nq {
                    for i in 0..side.n_dofs {
                        vals[q] += coeffs[i] * side.val[i * ftab.nq + q];
                        dns[q] += coeffs[i] * side.dn[i * ftab.nq + q];
                        dts[q] += coeffs[i] * side.dt[i * ftab.nq + q];
                    }
                }
                per_side.push((vals, dns, dts));
            }
            for q in 0..ftab.nq {
                assert!((per_side[0].0[q] - per_side[1].0[q]).abs() < 1e-13);
                assert!((per_side[0].1[q] - per_side[1].1[q]).abs() < 1e-13);
                assert!((per_side[0].2[q] - per_side[1].2[q]).abs() < 1e-13);
                assert!((per_side[0].1[q] - gn).abs() < 1e-13);
                assert!((per_side[0].2[q] - gt).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn time_partition_geometric() {
        let p = build_time_partition(
            TimeGrading::Geometric { sigma: 0.2, n: 3 },
            0.05,
            DegreeRule::Linear,
        )
        .unwrap();
        let expect = [0.0, 0.002, 0.01, 0.05];
        for (a, b) in p.points.iter().zip(expect) {
            assert!((a - b).abs() < 1e-16, "{a} vs {b}");
        }
        assert_eq!(p.degrees, vec![2, 3, 4]);
        assert_eq!(p.dof_tau(), 3 + 4 + 5);
    }

    #[test]
    fn time_partition_uniform_and_errors() {
        let p = build_time_partition(
            TimeGrading::Uniform { n: 4 },
            1.0,
            DegreeRule::Constant { q: 1 },
        )
        .unwrap();
        for n in 0..4 {
            assert!((p.tau(n) - 0.25).abs() < 1e-15);
        }
        assert!(build_time_partition(
            TimeGrading::Geometric { sigma: 1.5, n: 3 },
            1.0,
            DegreeRule::Constant { q: 1 },
        )
        .is_err());
    }

    #[test]
    fn temporal_endpoint_values_exact() {
        let tab = temporal_basis(3, 0.25, 0.75, 2);
        for m in 0..=3 {
            let c = (m as f64 + 0.5).sqrt();
            assert_eq!(tab.right[m], c);
            assert_eq!(tab.left[m], if m % 2 == 0 { c } else { -c });
        }
    }

    #[test]
    fn temporal_derivative_energy() {
        // for the degree-1 mode, int (d/dt psi_1)^2 dt = (4 / tau) * (3/2)
        let tau = 0.4;
        let tab = temporal_basis(1, 0.1, 0.1 + tau, 2);
        let expect = 4.0 / tau * 1.5;
        assert!((tab.t_dd[1][1] - expect).abs() < 1e-12 * expect);
        // derivative of the constant mode vanishes
        for g in 0..tab.nodes.len() {
            assert_eq!(tab.dval[0][g], 0.0);
        }
        // temporal mass is (identity): reference-orthonormal basis scaled by tau/2
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 0.5 * tau } else { 0.0 };
                assert!((tab.t_mass[a][b] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jump_avg_three_cases() {
        let (j, a) = temporal_jump_avg(Some(&[2.0]), Some(&[0.5]), 1, 3).unwrap();
        assert_eq!((j[0], a[0]), (1.5, 1.25));
        let (j, a) = temporal_jump_avg(None, Some(&[3.0]), 0, 3).unwrap();
        assert_eq!((j[0], a[0]), (-3.0, 3.0));
        let (j, a) = temporal_jump_avg(Some(&[7.0]), None, 3, 3).unwrap();
        assert_eq!((j[0], a[0]), (7.0, 7.0));
        // equal one-sided limits: zero jump
        let (j, _) = temporal_jump_avg(Some(&[1.5, -2.0]), Some(&[1.5, -2.0]), 1, 2).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_monomial_exactness_on_elements() {
        let mesh = build_uniform_quad_mesh(1);
        let space = DGSpace::uniform(mesh, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n1d = 5; // exactness 9 per axis
        for _ in 0..100 {
            let k = rng.gen_range(0..4);
            let tab = tabulate_element(&space, k, n1d);
            let a = rng.gen_range(0..=9u32);
            let b = rng.gen_range(0..=9u32);
            let got: f64 = (0..tab.nq)
                .map(|q| {
                    let [x, y] = tab.points[q];
                    tab.weights[q] * x.powi(a as i32) * y.powi(b as i32)
                })
                .sum();
            let r = space.mesh.bounds(k);
            let ix = (r.x1.powi(a as i32 + 1) - r.x0.powi(a as i32 + 1)) / (a as f64 + 1.0);
            let iy = (r.y1.powi(b as i32 + 1) - r.y0.powi(b as i32 + 1)) / (b as f64 + 1.0);
            assert!((got - ix * iy).abs() < 1e-13 * (ix * iy).abs().max(1.0));
        }
    }
}
