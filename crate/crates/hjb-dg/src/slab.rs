//! Per-slab space-time algebra: the nonlinear slab system of the
//! time-stepping scheme (policy-frozen matrix, right side and true residual),
//! plus evaluation of the global forms `C_h`, `A_h` and the scheme norms on
//! discrete space-time functions.
//!
//! Slab unknowns are ordered temporal-mode major: `u[m * S + i]` where `S` is
//! the spatial dimension, so the spatial sparsity pattern repeats per mode
//! block.

use crate::forms::Discretization;
use crate::problem::{CoeffSample, HJBProblem, PointState};
use crate::sparse::{CooBuilder, CsrMatrix};
use crate::spaces::{temporal_basis, temporal_jump_avg, TemporalTab, TimePartition};

/// Coefficient blocks of a discrete space-time function, one block of length
/// `(q_n + 1) * S` per slab.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeCoeffs {
    pub blocks: Vec<Vec<f64>>,
}

impl SpaceTimeCoeffs {
    pub fn zeros(partition: &TimePartition, n_dofs: usize) -> Self {
        let blocks = partition
            .degrees
            .iter()
            .map(|&q| vec![0.0; (q + 1) * n_dofs])
            .collect();
        Self { blocks }
    }
}

/// Temporal tables for every slab of a partition.
pub fn build_temporal_tabs(partition: &TimePartition, extra: usize) -> Vec<TemporalTab> {
    (0..partition.n_slabs())
        .map(|n| {
            let (t0, t1) = partition.interval(n);
            temporal_basis(partition.degrees[n], t0, t1, extra)
        })
        .collect()
}

/// Spatial trace of a slab block at the right endpoint `t_n`.
pub fn end_trace(tab: &TemporalTab, block: &[f64], n_dofs: usize) -> Vec<f64> {
    trace_with(&tab.right, block, n_dofs)
}

/// Spatial trace of a slab block at the left endpoint `t_{n-1}^+`.
pub fn start_trace(tab: &TemporalTab, block: &[f64], n_dofs: usize) -> Vec<f64> {
    trace_with(&tab.left, block, n_dofs)
}

fn trace_with(endpoint: &[f64], block: &[f64], n_dofs: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_dofs];
    for (m, &e) in endpoint.iter().enumerate() {
        let mode = &block[m * n_dofs..(m + 1) * n_dofs];
        for i in 0..n_dofs {
            out[i] += e * mode[i];
        }
    }
    out
}

/// Temporal jump vectors `(v)_n` of a discrete function for `n = 0..=N`,
/// applied componentwise to the spatial coefficient vectors.
pub fn jump_vectors(
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    n_dofs: usize,
) -> Vec<Vec<f64>> {
    let n_slabs = u.blocks.len();
    let mut jumps = Vec::with_capacity(n_slabs + 1);
    for n in 0..=n_slabs {
        let left = (n >= 1).then(|| end_trace(&tabs[n - 1], &u.blocks[n - 1], n_dofs));
        let right = (n < n_slabs).then(|| start_trace(&tabs[n], &u.blocks[n], n_dofs));
        let (jump, _) = temporal_jump_avg(left.as_deref(), right.as_deref(), n, n_slabs)
            .expect("consistent slab traces");
        jumps.push(jump);
    }
    jumps
}

fn avg_vectors(tabs: &[TemporalTab], u: &SpaceTimeCoeffs, n_dofs: usize) -> Vec<Vec<f64>> {
    let n_slabs = u.blocks.len();
    let mut avgs = Vec::with_capacity(n_slabs + 1);
    for n in 0..=n_slabs {
        let left = (n >= 1).then(|| end_trace(&tabs[n - 1], &u.blocks[n - 1], n_dofs));
        let right = (n < n_slabs).then(|| start_trace(&tabs[n], &u.blocks[n], n_dofs));
        let (_, avg) = temporal_jump_avg(left.as_deref(), right.as_deref(), n, n_slabs)
            .expect("consistent slab traces");
        avgs.push(avg);
    }
    avgs
}

/// Frozen control field of one slab: per element, the argmax control at each
/// (time point, space point) pair of the assembly quadrature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub controls: Vec<Vec<u32>>,
}

/// One slab's algebraic system. Holds the policy-independent linear skeleton
/// (in-slab volume couplings of `B_h,1/2`, the temporal flux terms, the
/// initial-trace coupling) together with the coefficient caches used by the
/// nonlinear volume term.
pub struct SlabSystem<'a> {
    pub disc: &'a Discretization,
    pub problem: &'a HJBProblem,
    pub slab: usize,
    pub temporal: TemporalTab,
    /// `omega a_h(u_prev(t_{n-1}), .)` as a spatial vector.
    prev_vec: Vec<f64>,
    /// Coefficient samples per element: `[(g * nq + q) * n_ctrl + c]`.
    coeff: Vec<Vec<CoeffSample>>,
    gamma: Vec<Vec<f64>>,
    skeleton: CsrMatrix,
    rhs_coupling: Vec<f64>,
    n_modes: usize,
}

impl<'a> SlabSystem<'a> {
    /// Build the slab context. `prev_vec` is the spatial load vector
    /// `i -> a_h(u_h(t_{n-1}), phi_i)` (from the previous end trace, or from
    /// the initial-datum callback on the first slab).
    pub fn new(
        disc: &'a Discretization,
        problem: &'a HJBProblem,
        slab: usize,
        temporal: TemporalTab,
        prev_vec: Vec<f64>,
    ) -> Self {
        let s = disc.n_dofs();
        let n_modes = temporal.q + 1;
        let nc = problem.n_controls();
        let ng = temporal.nodes.len();

        // coefficient caches at the space-time quadrature points
        let mut coeff = Vec::with_capacity(disc.elem_tabs.len());
        let mut gamma = Vec::with_capacity(disc.elem_tabs.len());
        for tab in &disc.elem_tabs {
            let mut cs = vec![CoeffSample::default(); ng * tab.nq * nc];
            let mut gs = vec![0.0; ng * tab.nq * nc];
            for (g, &t) in temporal.nodes.iter().enumerate() {
                for q in 0..tab.nq {
                    let [x, y] = tab.points[q];
                    let base = (g * tab.nq + q) * nc;
                    problem.sample(x, y, t, &mut cs[base..base + nc]);
                    for c in 0..nc {
                        gs[base + c] = problem.gamma(&cs[base + c]);
                    }
                }
            }
            coeff.push(cs);
            gamma.push(gs);
        }

        let skeleton = assemble_skeleton(disc, problem.omega, &temporal);
        let mut rhs_coupling = vec![0.0; n_modes * s];
        for (m, &e) in temporal.left.iter().enumerate() {
            for i in 0..s {
                rhs_coupling[m * s + i] = problem.omega * e * prev_vec[i];
            }
        }

        Self {
            disc,
            problem,
            slab,
            temporal,
            prev_vec,
            coeff,
            gamma,
            skeleton,
            rhs_coupling,
            n_modes,
        }
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_modes * self.disc.n_dofs()
    }

    pub fn prev_vec(&self) -> &[f64] {
        &self.prev_vec
    }

    /// Evaluate the states of a coefficient block at every volume quadrature
    /// point of one element; `out` has length `ng * nq`.
    fn element_states(&self, elem: usize, coeffs: &[f64], out: &mut Vec<PointState>) {
        let tab = &self.disc.elem_tabs[elem];
        let s = self.disc.n_dofs();
        let off = self.disc.space.offset(tab.elem);
        let ng = self.temporal.nodes.len();
        out.clear();
        out.resize(ng * tab.nq, PointState::default());
        let nd = tab.n_dofs;
        let mut c = vec![0.0; nd];
        let mut cdot = vec![0.0; nd];
        for g in 0..ng {
            for i in 0..nd {
                let (mut a, mut b) = (0.0, 0.0);
                for m in 0..self.n_modes {
                    let u = coeffs[m * s + off + i];
                    a += self.temporal.val[m][g] * u;
                    b += self.temporal.dval[m][g] * u;
                }
                c[i] = a;
                cdot[i] = b;
            }
            for q in 0..tab.nq {
                let mut st = PointState::default();
                for i in 0..nd {
                    let idx = i * tab.nq + q;
                    st.v += c[i] * tab.val[idx];
                    st.grad[0] += c[i] * tab.gx[idx];
                    st.grad[1] += c[i] * tab.gy[idx];
                    st.hess[0] += c[i] * tab.hxx[idx];
                    st.hess[1] += c[i] * tab.hxy[idx];
                    st.hess[2] += c[i] * tab.hyy[idx];
                    st.vt += cdot[i] * tab.val[idx];
                }
                out[g * tab.nq + q] = st;
            }
        }
    }

    /// Argmax control field for the states of `coeffs`, together with the
    /// largest relative optimality gap of `prev` at the new states (zero when
    /// the policy is unchanged up to ties).
    pub fn update_policy(&self, coeffs: &[f64], prev: Option<&Policy>) -> (Policy, f64) {
        let nc = self.problem.n_controls();
        let mut controls = Vec::with_capacity(self.disc.elem_tabs.len());
        let mut gap: f64 = 0.0;
        let mut states = Vec::new();
        for elem in 0..self.disc.elem_tabs.len() {
            self.element_states(elem, coeffs, &mut states);
            let mut ctrl = vec![0u32; states.len()];
            for (pt, st) in states.iter().enumerate() {
                let base = pt * nc;
                let samples = &self.coeff[elem][base..base + nc];
                let gammas = &self.gamma[elem][base..base + nc];
                let mut best = f64::INFINITY;
                let mut arg = 0u32;
                for ci in 0..nc {
                    let s = &samples[ci];
                    let val = gammas[ci] * (st.vt - self.problem.l_alpha(s, st) + s.f);
                    if val < best {
                        best = val;
                        arg = ci as u32;
                    }
                }
                ctrl[pt] = arg;
                if let Some(prev) = prev {
                    let pc = prev.controls[elem][pt] as usize;
                    if pc != arg as usize {
                        let s = &samples[pc];
                        let val = gammas[pc] * (st.vt - self.problem.l_alpha(s, st) + s.f);
                        gap = gap.max((val - best) / (1.0 + best.abs()));
                    }
                }
            }
            controls.push(ctrl);
        }
        (Policy { controls }, gap)
    }

    /// Warm-start policy from a time-constant spatial state (the previous
    /// slab's end trace, or the initial-datum lift on the first slab).
    pub fn policy_from_spatial(&self, spatial: &[f64]) -> Policy {
        let mut coeffs = vec![0.0; self.n_unknowns()];
        // constant-in-time extension: only mode 0 is populated
        let scale = 1.0 / self.temporal.val[0][0];
        let s = self.disc.n_dofs();
        for i in 0..s {
            coeffs[i] = spatial[i] * scale;
        }
        self.update_policy(&coeffs, None).0
    }

    /// Assemble the policy-frozen linear system `(matrix, rhs)`.
    pub fn assemble(&self, policy: &Policy) -> (CsrMatrix, Vec<f64>) {
        let s = self.disc.n_dofs();
        let n = self.n_unknowns();
        let nm = self.n_modes;
        let omega = self.problem.omega;
        let lambda = self.disc.lambda();
        let tmp = &self.temporal;
        let ng = tmp.nodes.len();
        let nc = self.problem.n_controls();

        let mut b = CooBuilder::with_capacity(
            n,
            n,
            self.skeleton.nnz() + self.disc.elem_tabs.iter().map(|t| (nm * t.n_dofs).pow(2)).sum::<usize>(),
        );
        // policy-independent couplings
        for r in 0..n {
            for k in self.skeleton.row_ptr[r]..self.skeleton.row_ptr[r + 1] {
                b.push(r, self.skeleton.cols[k] as usize, self.skeleton.vals[k]);
            }
        }

        let mut rhs = self.rhs_coupling.clone();

        // policy-frozen volume term: (gamma (u_t - L u), L_omega v) and the
        // forcing (gamma f, L_omega v) on the right side
        let max_nd = self.disc.elem_tabs.iter().map(|t| t.n_dofs).max().unwrap_or(0);
        let mut s11 = vec![0.0; max_nd * max_nd];
        let mut s12 = vec![0.0; max_nd * max_nd];
        let mut s21 = vec![0.0; max_nd * max_nd];
        let mut s22 = vec![0.0; max_nd * max_nd];
        let mut u1 = vec![0.0; max_nd];
        let mut u2 = vec![0.0; max_nd];
        let mut t1 = vec![0.0; max_nd];
        let mut t2 = vec![0.0; max_nd];
        let mut v1 = vec![0.0; max_nd];
        let mut v2 = vec![0.0; max_nd];
        let mut local = Vec::new();

        for (elem, tab) in self.disc.elem_tabs.iter().enumerate() {
            let nd = tab.n_dofs;
            let off = self.disc.space.offset(tab.elem);
            local.clear();
            local.resize(nm * nd * nm * nd, 0.0);
            let mut fv1 = vec![0.0; nm * nd];
            for g in 0..ng {
                let wg = tmp.weights[g];
                s11[..nd * nd].fill(0.0);
                s12[..nd * nd].fill(0.0);
                s21[..nd * nd].fill(0.0);
                s22[..nd * nd].fill(0.0);
                v1[..nd].fill(0.0);
                v2[..nd].fill(0.0);
                for q in 0..tab.nq {
                    let wq = tab.weights[q];
                    let pt = g * tab.nq + q;
                    let ci = policy.controls[elem][pt] as usize;
                    let sample = &self.coeff[elem][pt * nc + ci];
                    let gam = self.gamma[elem][pt * nc + ci];
                    for i in 0..nd {
                        let idx = i * tab.nq + q;
                        let val = tab.val[idx];
                        let lap = tab.hxx[idx] + tab.hyy[idx];
                        let l_lambda = lap - lambda * val;
                        // L^alpha phi = a : D2 phi + b . grad phi - c phi
                        let l_alpha = sample.a[0] * tab.hxx[idx]
                            + 2.0 * sample.a[1] * tab.hxy[idx]
                            + sample.a[2] * tab.hyy[idx]
                            + sample.b[0] * tab.gx[idx]
                            + sample.b[1] * tab.gy[idx]
                            - sample.c * val;
                        t1[i] = val;
                        t2[i] = -l_lambda;
                        u1[i] = gam * val;
                        u2[i] = -gam * l_alpha;
                    }
                    for i in 0..nd {
                        let w1 = wq * t1[i];
                        let w2 = wq * t2[i];
                        let row1 = &mut s11[i * nd..(i + 1) * nd];
                        let row2 = &mut s12[i * nd..(i + 1) * nd];
                        for j in 0..nd {
                            row1[j] += w1 * u1[j];
                            row2[j] += w1 * u2[j];
                        }
                        let row3 = &mut s21[i * nd..(i + 1) * nd];
                        let row4 = &mut s22[i * nd..(i + 1) * nd];
                        for j in 0..nd {
                            row3[j] += w2 * u1[j];
                            row4[j] += w2 * u2[j];
                        }
                        let gf = gam * sample.f;
                        v1[i] += wq * gf * t1[i];
                        v2[i] += wq * gf * t2[i];
                    }
                }
                // combine temporal factors: test (a) carries L_omega, trial
                // (b) carries gamma (psi_b' u1 + psi_b u2)
                for a in 0..nm {
                    let fa1 = wg * omega * tmp.dval[a][g];
                    let fa2 = wg * tmp.val[a][g];
                    for bm in 0..nm {
                        let gb1 = tmp.dval[bm][g];
                        let gb2 = tmp.val[bm][g];
                        let (c11, c12, c21, c22) =
                            (fa1 * gb1, fa1 * gb2, fa2 * gb1, fa2 * gb2);
                        for i in 0..nd {
                            let lrow =
                                &mut local[((a * nd + i) * nm + bm) * nd..((a * nd + i) * nm + bm) * nd + nd];
                            let r1 = &s11[i * nd..(i + 1) * nd];
                            let r2 = &s12[i * nd..(i + 1) * nd];
                            let r3 = &s21[i * nd..(i + 1) * nd];
                            let r4 = &s22[i * nd..(i + 1) * nd];
                            for j in 0..nd {
                                lrow[j] += c11 * r1[j] + c12 * r2[j] + c21 * r3[j] + c22 * r4[j];
                            }
                        }
                    }
                }
                for a in 0..nm {
                    let fa1 = wg * omega * tmp.dval[a][g];
                    let fa2 = wg * tmp.val[a][g];
                    for i in 0..nd {
                        fv1[a * nd + i] += fa1 * v1[i] + fa2 * v2[i];
                    }
                }
            }
            for a in 0..nm {
                for i in 0..nd {
                    let row = a * s + off + i;
                    for bm in 0..nm {
                        let lrow = &local[((a * nd + i) * nm + bm) * nd..((a * nd + i) * nm + bm) * nd + nd];
                        for j in 0..nd {
                            b.push(row, bm * s + off + j, lrow[j]);
                        }
                    }
                    rhs[row] -= fv1[a * nd + i];
                }
            }
        }
        (b.into_csr(), rhs)
    }

    /// True nonlinear residual of the slab equations at `coeffs` (volume term
    /// evaluated through the pointwise minimum over controls).
    pub fn residual(&self, coeffs: &[f64]) -> Vec<f64> {
        let s = self.disc.n_dofs();
        let nm = self.n_modes;
        let omega = self.problem.omega;
        let lambda = self.disc.lambda();
        let tmp = &self.temporal;
        let ng = tmp.nodes.len();
        let nc = self.problem.n_controls();

        let mut r = self.skeleton.matvec(coeffs);
        for (a, b) in r.iter_mut().zip(&self.rhs_coupling) {
            *a -= b;
        }

        let mut states = Vec::new();
        for (elem, tab) in self.disc.elem_tabs.iter().enumerate() {
            let nd = tab.n_dofs;
            let off = self.disc.space.offset(tab.elem);
            self.element_states(elem, coeffs, &mut states);
            for g in 0..ng {
                let wg = tmp.weights[g];
                for q in 0..tab.nq {
                    let pt = g * tab.nq + q;
                    let st = &states[pt];
                    let base = pt * nc;
                    let mut best = f64::INFINITY;
                    for ci in 0..nc {
                        let sample = &self.coeff[elem][base + ci];
                        let val = self.gamma[elem][base + ci]
                            * (st.vt - self.problem.l_alpha(sample, st) + sample.f);
                        if val < best {
                            best = val;
                        }
                    }
                    let w = wg * tab.weights[q] * best;
                    for a in 0..nm {
                        let fa1 = omega * tmp.dval[a][g];
                        let fa2 = tmp.val[a][g];
                        for i in 0..nd {
                            let idx = i * tab.nq + q;
                            let val = tab.val[idx];
                            let l_lambda = tab.hxx[idx] + tab.hyy[idx] - lambda * val;
                            r[a * s + off + i] += w * (fa1 * val - fa2 * l_lambda);
                        }
                    }
                }
            }
        }
        r
    }
}

/// Policy-independent part of the slab matrix:
/// `int_In [B_h,1/2 - LL]` (tensor `t_mass`), the temporal flux coupling
/// `omega int_In G(u, dv/dt)` (tensor `t_dm`), and the initial-trace term
/// `omega a_h(u(t+), v(t+))`.
fn assemble_skeleton(disc: &Discretization, omega: f64, tmp: &TemporalTab) -> CsrMatrix {
    let s = disc.n_dofs();
    let nm = tmp.q + 1;
    let d = disc.ops.d_matrix();
    let mut b = CooBuilder::with_capacity(nm * s, nm * s, nm * nm * (d.nnz() + disc.ops.cf.nnz() + disc.ops.a_h.nnz()));
    for a in 0..nm {
        for bm in 0..nm {
            let w_mass = tmp.t_mass[a][bm];
            let w_dm = omega * tmp.t_dm[a][bm];
            let w_ah = omega * tmp.left[a] * tmp.left[bm];
            for r in 0..s {
                for k in d.row_ptr[r]..d.row_ptr[r + 1] {
                    b.push(a * s + r, bm * s + d.cols[k] as usize, w_mass * d.vals[k]);
                }
                // G(u, dv/dt): the test derivative lives on mode a
                for k in disc.ops.cf.row_ptr[r]..disc.ops.cf.row_ptr[r + 1] {
                    b.push(
                        a * s + r,
                        bm * s + disc.ops.cf.cols[k] as usize,
                        w_dm * disc.ops.cf.vals[k],
                    );
                }
                for k in disc.ops.a_h.row_ptr[r]..disc.ops.a_h.row_ptr[r + 1] {
                    b.push(
                        a * s + r,
                        bm * s + disc.ops.a_h.cols[k] as usize,
                        w_ah * disc.ops.a_h.vals[k],
                    );
                }
            }
        }
    }
    b.into_csr()
}

// ---------------------------------------------------------------------------
// Global form evaluation on discrete space-time functions
// ---------------------------------------------------------------------------

/// `sum_n int_In sum_K (L_omega u, L_omega v)_K dt` by quadrature.
fn l_omega_product(
    disc: &Discretization,
    omega: f64,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    v: &SpaceTimeCoeffs,
) -> f64 {
    let lambda = disc.lambda();
    let mut acc = 0.0;
    for (n, tmp) in tabs.iter().enumerate() {
        let mut su = Vec::new();
        let mut sv = Vec::new();
        for elem in 0..disc.elem_tabs.len() {
            element_states_of(disc, tmp, elem, &u.blocks[n], &mut su);
            element_states_of(disc, tmp, elem, &v.blocks[n], &mut sv);
            let tab = &disc.elem_tabs[elem];
            for g in 0..tmp.nodes.len() {
                let wg = tmp.weights[g];
                for q in 0..tab.nq {
                    let a = &su[g * tab.nq + q];
                    let b = &sv[g * tab.nq + q];
                    let lu = omega * a.vt - (a.hess[0] + a.hess[2] - lambda * a.v);
                    let lv = omega * b.vt - (b.hess[0] + b.hess[2] - lambda * b.v);
                    acc += wg * tab.weights[q] * lu * lv;
                }
            }
        }
    }
    acc
}

/// States of one slab block on one element's assembly tabulation.
pub fn element_states_of(
    disc: &Discretization,
    tmp: &TemporalTab,
    elem: usize,
    block: &[f64],
    out: &mut Vec<PointState>,
) {
    states_on(&disc.space, &disc.elem_tabs[elem], tmp, block, out);
}

/// States of one slab block at the quadrature points of an arbitrary element
/// tabulation (used with elevated rules for error integrands).
pub fn states_on(
    space: &crate::spaces::DGSpace,
    tab: &crate::spaces::ElementTab,
    tmp: &TemporalTab,
    block: &[f64],
    out: &mut Vec<PointState>,
) {
    let s = space.n_dofs();
    let off = space.offset(tab.elem);
    let nm = tmp.q + 1;
    let ng = tmp.nodes.len();
    out.clear();
    out.resize(ng * tab.nq, PointState::default());
    let nd = tab.n_dofs;
    for g in 0..ng {
        for q in 0..tab.nq {
            let mut st = PointState::default();
            for i in 0..nd {
                let idx = i * tab.nq + q;
                let (mut c, mut cdot) = (0.0, 0.0);
                for m in 0..nm {
                    let uc = block[m * s + off + i];
                    c += tmp.val[m][g] * uc;
                    cdot += tmp.dval[m][g] * uc;
                }
                st.v += c * tab.val[idx];
                st.grad[0] += c * tab.gx[idx];
                st.grad[1] += c * tab.gy[idx];
                st.hess[0] += c * tab.hxx[idx];
                st.hess[1] += c * tab.hxy[idx];
                st.hess[2] += c * tab.hyy[idx];
                st.vt += cdot * tab.val[idx];
            }
            out[g * tab.nq + q] = st;
        }
    }
}

/// Pair slab modes of `u` and `v` against a spatial matrix with a temporal
/// weight table: `sum_ab t[a][b] (v_a, M u_b)`.
fn mode_pairing(
    m: &CsrMatrix,
    t: &dyn Fn(usize, usize) -> f64,
    nm_v: usize,
    nm_u: usize,
    v: &[f64],
    u: &[f64],
    s: usize,
) -> f64 {
    let mut acc = 0.0;
    for a in 0..nm_v {
        let va = &v[a * s..(a + 1) * s];
        for b in 0..nm_u {
            let w = t(a, b);
            if w == 0.0 {
                continue;
            }
            acc += w * m.quadratic(va, &u[b * s..(b + 1) * s]);
        }
    }
    acc
}

/// `C_h^F(u, v)`: the temporal flux form, using the spatial `G` matrix and
/// the `int psi_a' psi_b` pairing (test derivative on `v`).
pub fn eval_cf(
    disc: &Discretization,
    omega: f64,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    v: &SpaceTimeCoeffs,
) -> f64 {
    let s = disc.n_dofs();
    let mut acc = 0.0;
    for (n, tmp) in tabs.iter().enumerate() {
        let nm = tmp.q + 1;
        acc += omega
            * mode_pairing(
                &disc.ops.cf,
                &|a, b| tmp.t_dm[a][b],
                nm,
                nm,
                &v.blocks[n],
                &u.blocks[n],
                s,
            );
    }
    acc
}

/// `C_h(u, v)` by its definition: `sum_n int (L_omega u, L_omega v)
/// + C_h^F(u, v) + sum_n int [B_h,1/2 - LL](u, v)
/// - omega sum_{n=0}^{N-1} a_h((u)_n, <v>_n)
/// + omega/2 sum_{n=1}^{N-1} a_h((u)_n, (v)_n)`.
pub fn eval_c_h(
    disc: &Discretization,
    omega: f64,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    v: &SpaceTimeCoeffs,
) -> f64 {
    let s = disc.n_dofs();
    let n_slabs = tabs.len();
    let d = disc.ops.d_matrix();
    let mut acc = l_omega_product(disc, omega, tabs, u, v);
    acc += eval_cf(disc, omega, tabs, u, v);
    for (n, tmp) in tabs.iter().enumerate() {
        let nm = tmp.q + 1;
        acc += mode_pairing(
            &d,
            &|a, b| tmp.t_mass[a][b],
            nm,
            nm,
            &v.blocks[n],
            &u.blocks[n],
            s,
        );
    }
    let ju = jump_vectors(tabs, u, s);
    let jv = jump_vectors(tabs, v, s);
    let av = avg_vectors(tabs, v, s);
    for n in 0..n_slabs {
        acc -= omega * disc.ops.a_h.quadratic(&ju[n], &av[n]);
    }
    for n in 1..n_slabs {
        acc += 0.5 * omega * disc.ops.a_h.quadratic(&ju[n], &jv[n]);
    }
    acc
}

/// `C_h(u, v)` by the integrated-by-parts expansion used in the stability
/// analysis; agreement with `eval_c_h` exercises the discrete integration by
/// parts across every face and time interval.
pub fn eval_c_h_expanded(
    disc: &Discretization,
    omega: f64,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    v: &SpaceTimeCoeffs,
) -> f64 {
    let s = disc.n_dofs();
    let n_slabs = tabs.len();
    // B_h,1 + J_h = B_h* + 2 J_h
    let b1j = CsrMatrix::linear_combination(&[(1.0, &disc.ops.b_star), (2.0, &disc.ops.j_h)]);
    let mut acc = 0.5 * l_omega_product(disc, omega, tabs, u, v);
    for (n, tmp) in tabs.iter().enumerate() {
        let nm = tmp.q + 1;
        acc += 0.5
            * omega
            * omega
            * mode_pairing(
                &disc.ops.mass,
                &|a, b| tmp.t_dd[a][b],
                nm,
                nm,
                &v.blocks[n],
                &u.blocks[n],
                s,
            );
        acc += 0.5
            * mode_pairing(
                &b1j,
                &|a, b| tmp.t_mass[a][b],
                nm,
                nm,
                &v.blocks[n],
                &u.blocks[n],
                s,
            );
    }
    acc += 0.5 * eval_cf(disc, omega, tabs, u, v);
    acc -= 0.5 * eval_cf(disc, omega, tabs, v, u);
    let ju = jump_vectors(tabs, u, s);
    let jv = jump_vectors(tabs, v, s);
    let au = avg_vectors(tabs, u, s);
    let av = avg_vectors(tabs, v, s);
    for n in 1..=n_slabs {
        acc += 0.5 * omega * disc.ops.a_h.quadratic(&au[n], &jv[n]);
    }
    for n in 0..n_slabs {
        acc -= 0.5 * omega * disc.ops.a_h.quadratic(&ju[n], &av[n]);
    }
    for n in 1..n_slabs {
        acc += 0.5 * omega * disc.ops.a_h.quadratic(&ju[n], &jv[n]);
    }
    acc
}

/// The nonlinear form `A_h(u; v)` evaluated through the pointwise minimum
/// over controls.
pub fn eval_a_h_form(
    disc: &Discretization,
    problem: &HJBProblem,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
    v: &SpaceTimeCoeffs,
) -> f64 {
    let omega = problem.omega;
    let lambda = disc.lambda();
    let mut acc = eval_c_h(disc, omega, tabs, u, v);
    let mut su = Vec::new();
    let mut sv = Vec::new();
    let mut scratch = Vec::new();
    for (n, tmp) in tabs.iter().enumerate() {
        for elem in 0..disc.elem_tabs.len() {
            element_states_of(disc, tmp, elem, &u.blocks[n], &mut su);
            element_states_of(disc, tmp, elem, &v.blocks[n], &mut sv);
            let tab = &disc.elem_tabs[elem];
            for (g, &t) in tmp.nodes.iter().enumerate() {
                let wg = tmp.weights[g];
                for q in 0..tab.nq {
                    let a = &su[g * tab.nq + q];
                    let b = &sv[g * tab.nq + q];
                    let [x, y] = tab.points[q];
                    let (f_gamma, _) = problem.f_gamma_pointwise(a, x, y, t, &mut scratch);
                    let lu = omega * a.vt - (a.hess[0] + a.hess[2] - lambda * a.v);
                    let lv = omega * b.vt - (b.hess[0] + b.hess[2] - lambda * b.v);
                    acc += wg * tab.weights[q] * (f_gamma - lu) * lv;
                }
            }
        }
    }
    acc
}

/// Norm pieces of a discrete space-time function.
pub struct DiscreteNorms {
    /// `sum_n int [omega^2 |v_t|^2 + |v|^2_{H2,lambda}] dt`.
    pub volume_sq: f64,
    /// `sum_n int |v|_J^2 dt`.
    pub jump_j_sq: f64,
    /// `omega || (v)_n ||_a^2` for `n = 0..=N`.
    pub jump_a_sq: Vec<f64>,
}

impl DiscreteNorms {
    /// `|||v|||^2`: volume + J + temporal jumps up to `N - 1`.
    pub fn norm_e_sq(&self) -> f64 {
        let n = self.jump_a_sq.len() - 1;
        self.volume_sq + self.jump_j_sq + self.jump_a_sq[..n].iter().sum::<f64>()
    }

    /// `||v||_{h,1}^2 = |||v|||^2 + omega ||(v)_N||_a^2`.
    pub fn norm_h1_sq(&self) -> f64 {
        self.volume_sq + self.jump_j_sq + self.jump_a_sq.iter().sum::<f64>()
    }
}

pub fn discrete_norms(
    disc: &Discretization,
    omega: f64,
    tabs: &[TemporalTab],
    u: &SpaceTimeCoeffs,
) -> DiscreteNorms {
    let s = disc.n_dofs();
    let mut volume_sq = 0.0;
    let mut jump_j_sq = 0.0;
    for (n, tmp) in tabs.iter().enumerate() {
        let nm = tmp.q + 1;
        volume_sq += omega
            * omega
            * mode_pairing(
                &disc.ops.mass,
                &|a, b| tmp.t_dd[a][b],
                nm,
                nm,
                &u.blocks[n],
                &u.blocks[n],
                s,
            );
        volume_sq += mode_pairing(
            &disc.ops.h2_lambda_gram,
            &|a, b| tmp.t_mass[a][b],
            nm,
            nm,
            &u.blocks[n],
            &u.blocks[n],
            s,
        );
        jump_j_sq += mode_pairing(
            &disc.ops.j_h,
            &|a, b| tmp.t_mass[a][b],
            nm,
            nm,
            &u.blocks[n],
            &u.blocks[n],
            s,
        );
    }
    let jumps = jump_vectors(tabs, u, s);
    let jump_a_sq = jumps
        .iter()
        .map(|j| omega * disc.ops.a_h.quadratic(j, j))
        .collect();
    DiscreteNorms {
        volume_sq,
        jump_j_sq,
        jump_a_sq,
    }
}
