//! Reference solutions, scheme norms, error computation, EOC tables and
//! exponential-rate fits for the verification experiments.

use crate::forms::{a_h_norm_callback_minus_discrete, Discretization};
use crate::mesh::{face_penalty_geometry, FaceKind};
use crate::problem::HJBProblem;
use crate::slab::{jump_vectors, start_trace, states_on, SpaceTimeCoeffs};
use crate::spaces::{error_points, tabulate_element, tabulate_face, temporal_basis, TimePartition};
use crate::{Error, Result};

/// Value and derivatives of a reference solution at one space-time point.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefPoint {
    pub v: f64,
    pub vt: f64,
    pub grad: [f64; 2],
    /// Symmetric Hessian `(v_xx, v_xy, v_yy)`.
    pub hess: [f64; 3],
}

/// Reference solution callbacks for error computation.
pub struct ReferenceSolution {
    eval: Box<dyn Fn(f64, f64, f64) -> RefPoint + Send + Sync>,
    pub label: String,
}

impl ReferenceSolution {
    pub fn new(
        label: impl Into<String>,
        eval: Box<dyn Fn(f64, f64, f64) -> RefPoint + Send + Sync>,
    ) -> Self {
        Self {
            eval,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, t: f64) -> RefPoint {
        (self.eval)(x, y, t)
    }
}

/// Exact solution of the first experiment:
/// `u = (1 - e^{-t}) e^{xy} sin(pi x) sin(pi y)`.
pub fn exp1_point(x: f64, y: f64, t: f64) -> RefPoint {
    let pi = std::f64::consts::PI;
    let g = 1.0 - (-t).exp();
    let gt = (-t).exp();
    let e = (x * y).exp();
    let (sx, cx) = (pi * x).sin_cos();
    let (sy, cy) = (pi * y).sin_cos();
    let w = e * sx * sy;
    let wx = e * sy * (y * sx + pi * cx);
    let wy = e * sx * (x * sy + pi * cy);
    let wxx = e * sy * (y * y * sx + 2.0 * pi * y * cx - pi * pi * sx);
    let wyy = e * sx * (x * x * sy + 2.0 * pi * x * cy - pi * pi * sy);
    let wxy = e * ((y * sx + pi * cx) * (x * sy + pi * cy) + sx * sy);
    RefPoint {
        v: g * w,
        vt: gt * w,
        grad: [g * wx, g * wy],
        hess: [g * wxx, g * wxy, g * wyy],
    }
}

/// Truncated Fourier series solution of the second experiment (heat equation
/// with `u_0 = x (1 - x) sin(pi y)`):
/// `u = (4 / pi^3) sum_k (1 - (-1)^k) / k^3 e^{-(k^2+1) pi^2 t} sin(k pi x) sin(pi y)`.
/// Derivatives are summed term by term up to `k_max`.
pub fn exp2_point(x: f64, y: f64, t: f64, k_max: usize) -> RefPoint {
    let pi = std::f64::consts::PI;
    // x-dependent partial sums; the y factor separates as sin(pi y)
    let (mut sv, mut sdx, mut sdxx, mut sdt) = (0.0, 0.0, 0.0, 0.0);
    let mut k = 1;
    while k <= k_max {
        let kf = k as f64;
        let ck = 8.0 / (pi * pi * pi) / (kf * kf * kf);
        let mu = (kf * kf + 1.0) * pi * pi;
        let decay = (-mu * t).exp();
        if decay == 0.0 {
            break;
        }
        let (skx, ckx) = (kf * pi * x).sin_cos();
        sv += ck * decay * skx;
        sdx += ck * decay * kf * pi * ckx;
        sdxx -= ck * decay * kf * kf * pi * pi * skx;
        sdt -= ck * decay * mu * skx;
        k += 2;
    }
    let (sy, cy) = (pi * y).sin_cos();
    RefPoint {
        v: sv * sy,
        vt: sdt * sy,
        grad: [sdx * sy, sv * pi * cy],
        hess: [sdxx * sy, sdx * pi * cy, -sv * pi * pi * sy],
    }
}

/// Truncation order for the experiment-2 series at time `t > 0`, together
/// with the conservative bound on the discarded terms (valid for the value
/// and all derivatives up to second order). The default order 4000 covers
/// `t >= 1e-5`; for smaller `t` the order is raised until the bound drops
/// below `1e-10`.
pub fn exp2_truncation(t: f64) -> (usize, f64) {
    assert!(t > 0.0, "adaptive truncation needs t > 0");
    let mut k = 4000usize;
    loop {
        let bound = exp2_tail_bound(k, t);
        if bound <= 1e-10 || k >= 1 << 22 {
            return (k, bound);
        }
        k *= 2;
    }
}

/// Bound on the tail `sum_{k > K}` of the worst derivative series (the
/// second x-derivative, whose terms are `(8/pi) k^{-1} e^{-(k^2+1) pi^2 t}`):
/// integral comparison gives `(8/pi) e^{-K^2 pi^2 t} / (2 K^2 pi^2 t)`.
pub fn exp2_tail_bound(k: usize, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let kf = k as f64;
    let a = pi * pi * t;
    8.0 / pi * (-kf * kf * a).exp() / (2.0 * kf * kf * a)
}

/// Exact solution of the `heat-singleton` registry problem:
/// `u = e^{-2 pi^2 t} sin(pi x) sin(pi y)`.
pub fn heat_singleton_point(x: f64, y: f64, t: f64) -> RefPoint {
    let pi = std::f64::consts::PI;
    let g = (-2.0 * pi * pi * t).exp();
    let (sx, cx) = (pi * x).sin_cos();
    let (sy, cy) = (pi * y).sin_cos();
    RefPoint {
        v: g * sx * sy,
        vt: -2.0 * pi * pi * g * sx * sy,
        grad: [g * pi * cx * sy, g * pi * sx * cy],
        hess: [
            -g * pi * pi * sx * sy,
            g * pi * pi * cx * cy,
            -g * pi * pi * sx * sy,
        ],
    }
}

/// The manufactured polynomial solution `u = t x (1 - x) y (1 - y)`.
pub fn poly_point(x: f64, y: f64, t: f64) -> RefPoint {
    let (fx, fy) = (x * (1.0 - x), y * (1.0 - y));
    let (dfx, dfy) = (1.0 - 2.0 * x, 1.0 - 2.0 * y);
    RefPoint {
        v: t * fx * fy,
        vt: fx * fy,
        grad: [t * dfx * fy, t * fx * dfy],
        hess: [-2.0 * t * fy, t * dfx * dfy, -2.0 * t * fx],
    }
}

/// Reference solutions paired with the problem registry keys.
pub fn reference_for(key: &str) -> Option<ReferenceSolution> {
    match key {
        "exp1-anisotropic-sup" => Some(ReferenceSolution::new(
            key,
            Box::new(|x, y, t| exp1_point(x, y, t)),
        )),
        "exp2-heat" => Some(ReferenceSolution::new(
            key,
            Box::new(|x, y, t| {
                let (k, _) = exp2_truncation(t);
                exp2_point(x, y, t, k)
            }),
        )),
        "heat-singleton" => Some(ReferenceSolution::new(
            key,
            Box::new(|x, y, t| heat_singleton_point(x, y, t)),
        )),
        "poly-exact" => Some(ReferenceSolution::new(
            key,
            Box::new(|x, y, t| poly_point(x, y, t)),
        )),
        _ => None,
    }
}

/// Absolute scheme-norm errors of a discrete solution against a reference,
/// together with the reference norms used for relative errors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorSummary {
    pub err_x: f64,
    pub err_e: f64,
    pub err_h1_t: f64,
    pub err_l2h1: f64,
    pub ref_x: f64,
    pub ref_e: f64,
    pub ref_h1_t: f64,
    pub ref_l2h1: f64,
}

impl ErrorSummary {
    fn rel(err: f64, reference: f64) -> f64 {
        if reference > 0.0 {
            err / reference
        } else {
            err
        }
    }

    /// Errors relative to the same norm of the reference solution.
    pub fn rel_x(&self) -> f64 {
        Self::rel(self.err_x, self.ref_x)
    }

    pub fn rel_e(&self) -> f64 {
        Self::rel(self.err_e, self.ref_e)
    }

    pub fn rel_h1_t(&self) -> f64 {
        Self::rel(self.err_h1_t, self.ref_h1_t)
    }

    pub fn rel_l2h1(&self) -> f64 {
        Self::rel(self.err_l2h1, self.ref_l2h1)
    }
}

/// Compute all scheme-norm errors of `u_h` against the reference in one
/// space-time sweep with quadrature one order above the assembly rule.
///
/// The X norm integrates `omega^2 |d_t v|^2 + ||v||^2_{H^2(K)}` (full H^2
/// norm); the triple norm additionally carries the jump seminorm and the
/// temporal jumps, which for `v = u - u_h` reduce to the jumps of `u_h` and
/// the initial mismatch `a_h(u_0 - u_h(0+), .)`.
pub fn compute_errors(
    disc: &Discretization,
    problem: &HJBProblem,
    partition: &TimePartition,
    u_h: &SpaceTimeCoeffs,
    reference: &ReferenceSolution,
) -> ErrorSummary {
    let space = &disc.space;
    let omega = problem.omega;
    let lambda = disc.lambda();
    let s = space.n_dofs();
    let horizon = partition.horizon();

    let elem_tabs: Vec<_> = (0..space.n_elements())
        .map(|k| tabulate_element(space, k, error_points(space.degrees[k])))
        .collect();
    let face_tabs: Vec<_> = (0..space.faces.len())
        .map(|f| {
            let (_, p) = face_penalty_geometry(&space.mesh, &space.faces[f], &space.degrees);
            tabulate_face(space, f, error_points(p))
        })
        .collect();

    let mut sum = ErrorSummary::default();
    let mut states = Vec::new();
    let temporal_tabs: Vec<_> = (0..partition.n_slabs())
        .map(|n| {
            let (t0, t1) = partition.interval(n);
            temporal_basis(partition.degrees[n], t0, t1, 3)
        })
        .collect();

    for (n, tmp) in temporal_tabs.iter().enumerate() {
        let block = &u_h.blocks[n];
        // volume terms
        for tab in &elem_tabs {
            states_on(space, tab, tmp, block, &mut states);
            for (g, &t) in tmp.nodes.iter().enumerate() {
                let wg = tmp.weights[g];
                for q in 0..tab.nq {
                    let [x, y] = tab.points[q];
                    let r = reference.eval(x, y, t);
                    let st = &states[g * tab.nq + q];
                    let w = wg * tab.weights[q];
                    let dv = r.v - st.v;
                    let dvt = r.vt - st.vt;
                    let dg = [r.grad[0] - st.grad[0], r.grad[1] - st.grad[1]];
                    let dh = [
                        r.hess[0] - st.hess[0],
                        r.hess[1] - st.hess[1],
                        r.hess[2] - st.hess[2],
                    ];
                    let dg2 = dg[0] * dg[0] + dg[1] * dg[1];
                    let dh2 = dh[0] * dh[0] + 2.0 * dh[1] * dh[1] + dh[2] * dh[2];
                    sum.err_x += w * (omega * omega * dvt * dvt + dv * dv + dg2 + dh2);
                    sum.err_e +=
                        w * (omega * omega * dvt * dvt + dh2 + 2.0 * lambda * dg2
                            + lambda * lambda * dv * dv);
                    sum.err_l2h1 += w * (dv * dv + dg2);
                    let rg2 = r.grad[0] * r.grad[0] + r.grad[1] * r.grad[1];
                    let rh2 = r.hess[0] * r.hess[0]
                        + 2.0 * r.hess[1] * r.hess[1]
                        + r.hess[2] * r.hess[2];
                    sum.ref_x += w * (omega * omega * r.vt * r.vt + r.v * r.v + rg2 + rh2);
                    sum.ref_e += w
                        * (omega * omega * r.vt * r.vt + rh2 + 2.0 * lambda * rg2
                            + lambda * lambda * r.v * r.v);
                    sum.ref_l2h1 += w * (r.v * r.v + rg2);
                }
            }
        }
        // jump seminorm of the error in time: the reference is continuous, so
        // interior jumps reduce to those of u_h; boundary jumps measure the
        // deviation of the trace from the reference trace
        for (f, ftab) in face_tabs.iter().enumerate() {
            let face = &space.faces[f];
            let interior = face.kind == FaceKind::Interior;
            let (mu, eta) = (disc.penalties.mu[f], disc.penalties.eta[f]);
            let nm = tmp.q + 1;
            for (g, &t) in tmp.nodes.iter().enumerate() {
                let wg = tmp.weights[g];
                for q in 0..ftab.nq {
                    let [x, y] = ftab.points[q];
                    let r = reference.eval(x, y, t);
                    let rn = r.grad[0] * face.normal[0] + r.grad[1] * face.normal[1];
                    let tangent = face.tangent();
                    let rt = r.grad[0] * tangent[0] + r.grad[1] * tangent[1];
                    let mut tr = [[0.0; 3]; 2];
                    for (si, side) in ftab.sides.iter().enumerate() {
                        let off = space.offset(side.elem);
                        let (mut v, mut dn, mut dt) = (0.0, 0.0, 0.0);
                        for m in 0..nm {
                            let tv = tmp.val[m][g];
                            for i in 0..side.n_dofs {
                                let c = tv * block[m * s + off + i];
                                let idx = i * ftab.nq + q;
                                v += c * side.val[idx];
                                dn += c * side.dn[idx];
                                dt += c * side.dt[idx];
                            }
                        }
                        tr[si] = [r.v - v, rn - dn, rt - dt];
                    }
                    let (jv, jn, jt) = if interior {
                        (
                            tr[0][0] - tr[1][0],
                            tr[0][1] - tr[1][1],
                            tr[0][2] - tr[1][2],
                        )
                    } else {
                        (tr[0][0], tr[0][1], tr[0][2])
                    };
                    let w = wg * ftab.weights[q];
                    let mut j = mu * jt * jt + eta * jv * jv;
                    if interior {
                        j += mu * jn * jn;
                    }
                    sum.err_e += w * j;
                }
            }
        }
    }

    // temporal jump terms of the triple norm
    let jumps = jump_vectors(&temporal_tabs, u_h, s);
    for jump in jumps.iter().take(partition.n_slabs()).skip(1) {
        sum.err_e += omega * disc.ops.a_h.quadratic(jump, jump);
    }
    let u_h0 = start_trace(&temporal_tabs[0], &u_h.blocks[0], s);
    sum.err_e += omega * a_h_norm_callback_minus_discrete(disc, &|x, y| problem.u0(x, y), &u_h0);

    // end-time broken H^1 norms
    let u_h_t = crate::slab::end_trace(
        &temporal_tabs[partition.n_slabs() - 1],
        &u_h.blocks[partition.n_slabs() - 1],
        s,
    );
    for tab in &elem_tabs {
        let off = space.offset(tab.elem);
        for q in 0..tab.nq {
            let [x, y] = tab.points[q];
            let r = reference.eval(x, y, horizon);
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for i in 0..tab.n_dofs {
                let idx = i * tab.nq + q;
                let c = u_h_t[off + i];
                v += c * tab.val[idx];
                gx += c * tab.gx[idx];
                gy += c * tab.gy[idx];
            }
            let (dv, dgx, dgy) = (r.v - v, r.grad[0] - gx, r.grad[1] - gy);
            let w = tab.weights[q];
            sum.err_h1_t += w * (dv * dv + dgx * dgx + dgy * dgy);
            sum.ref_h1_t +=
                w * (r.v * r.v + r.grad[0] * r.grad[0] + r.grad[1] * r.grad[1]);
        }
    }

    ErrorSummary {
        err_x: sum.err_x.sqrt(),
        err_e: sum.err_e.sqrt(),
        err_h1_t: sum.err_h1_t.sqrt(),
        err_l2h1: sum.err_l2h1.sqrt(),
        ref_x: sum.ref_x.sqrt(),
        ref_e: sum.ref_e.sqrt(),
        ref_h1_t: sum.ref_h1_t.sqrt(),
        ref_l2h1: sum.ref_l2h1.sqrt(),
    }
}

/// Experimental orders of convergence: `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "eoc needs two sequences of equal length >= 2".into(),
        ));
    }
    if errors.iter().chain(hs).any(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(
            "eoc needs strictly positive entries".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

/// Least-squares fit of `log(error)` against `dofs^exponent`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Set when the fit is meaningless (fewer than 3 points or no variance).
    pub degenerate: bool,
}

pub fn exp_rate_fit(errors: &[f64], dofs: &[f64], exponent: f64) -> Result<RateFit> {
    if errors.len() != dofs.len() || errors.is_empty() {
        return Err(Error::InvalidArgument(
            "fit needs equal-length nonempty sequences".into(),
        ));
    }
    if errors.iter().any(|&e| e <= 0.0) || dofs.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidArgument(
            "fit needs strictly positive entries".into(),
        ));
    }
    let xs: Vec<f64> = dofs.iter().map(|&d| d.powf(exponent)).collect();
    let ys: Vec<f64> = errors.iter().map(|&e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if xs.len() < 3 || sxx == 0.0 {
        return Ok(RateFit {
            slope: 0.0,
            intercept: my,
            r_squared: 0.0,
            degenerate: true,
        });
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        // all errors equal: slope 0 fits exactly
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        degenerate: false,
    })
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy)]
pub struct ErrorRow {
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub p: usize,
    pub q: usize,
    pub dof_x: usize,
    pub dof_t: usize,
    pub err_x: f64,
    pub err_e: f64,
    pub err_h1_t: f64,
}

/// Convergence table with EOC columns between consecutive rows.
#[derive(Debug, Clone, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const CSV_HEADER: &'static str =
        "level,h,tau,p,q,dof_x,dof_t,err_X,err_E,err_H1_T,eoc_X,eoc_H1T";

    pub fn push(&mut self, row: ErrorRow) {
        self.rows.push(row);
    }

    /// EOC of the `err_X` column against `h`; the first entry is NaN.
    pub fn eoc_x(&self) -> Vec<f64> {
        self.eoc_of(|r| r.err_x)
    }

    pub fn eoc_h1(&self) -> Vec<f64> {
        self.eoc_of(|r| r.err_h1_t)
    }

    fn eoc_of(&self, field: impl Fn(&ErrorRow) -> f64) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.rows.len()];
        for i in 1..self.rows.len() {
            let (e0, e1) = (field(&self.rows[i - 1]), field(&self.rows[i]));
            let (h0, h1) = (self.rows[i - 1].h, self.rows[i].h);
            if e0 > 0.0 && e1 > 0.0 && h0 != h1 {
                out[i] = (e0 / e1).ln() / (h0 / h1).ln();
            }
        }
        out
    }

    /// Serialise with the fixed header; EOC cells of the first row are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let eoc_x = self.eoc_x();
        let eoc_h1 = self.eoc_h1();
        for (i, r) in self.rows.iter().enumerate() {
            let fmt_eoc = |v: f64| {
                if v.is_nan() {
                    String::new()
                } else {
                    format!("{v:.6}")
                }
            };
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{},{},{},{},{:.12e},{:.12e},{:.12e},{},{}\n",
                r.level,
                r.h,
                r.tau,
                r.p,
                r.q,
                r.dof_x,
                r.dof_t,
                r.err_x,
                r.err_e,
                r.err_h1_t,
                fmt_eoc(eoc_x[i]),
                fmt_eoc(eoc_h1[i]),
            ));
        }
        out
    }
}
