//! Exact minimization of the convexified CCCP objective for linear models.
//!
//! The inner objective is
//! `L(θ) + λ (ℓ·θ + k + Σ_base c_j (a_j·θ - b_j)+ + μ max(G(θ), H(θ)))`
//! with `G`, `H` sums of the same ReLU form. It is convex but not smooth.
//! Near an iterate the objective is the smooth loss plus a polyhedral term
//! built from the kinks the iterate sits on. Each iteration minimizes the
//! second-order model of the loss plus that polyhedral term exactly (through
//! its dual, a small QP over kink weights) and walks towards the minimizer,
//! stopping at the first kink crossed. Stationarity is the norm of the
//! minimum-norm subgradient over the same kinks.

use nalgebra::{DMatrix, DVector};

use crate::nn::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Tag {
    Base,
    G,
    H,
}

#[derive(Debug, Clone)]
pub(super) struct Relu {
    pub a: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub tag: Tag,
}

#[derive(Debug, Clone)]
pub(super) struct Problem {
    /// Rows `(x, 1)`.
    pub xt: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub lin: Vec<f64>,
    pub konst: f64,
    pub lambda: f64,
    pub relus: Vec<Relu>,
    /// Weight `μ` of `max(G, H)`; zero when there is no max term.
    pub mu: f64,
}

const KINK_TOL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct State {
    r: Vec<f64>,
    gv: f64,
    hv: f64,
}

impl Problem {
    fn dim(&self) -> usize {
        self.lin.len()
    }

    fn state(&self, th: &[f64]) -> State {
        let r: Vec<f64> = self.relus.iter().map(|q| dot(&q.a, th) - q.b).collect();
        let mut gv = 0.0;
        let mut hv = 0.0;
        for (q, &rj) in self.relus.iter().zip(&r) {
            match q.tag {
                Tag::G => gv += q.c * rj.max(0.0),
                Tag::H => hv += q.c * rj.max(0.0),
                Tag::Base => {}
            }
        }
        State { r, gv, hv }
    }

    pub fn value(&self, th: &[f64]) -> f64 {
        let n = self.xt.len() as f64;
        let loss: f64 = self
            .xt
            .iter()
            .zip(&self.y)
            .map(|(x, y)| softplus(-y * dot(x, th)))
            .sum::<f64>()
            / n;
        let st = self.state(th);
        let base: f64 = self
            .relus
            .iter()
            .zip(&st.r)
            .filter(|(q, _)| q.tag == Tag::Base)
            .map(|(q, r)| q.c * r.max(0.0))
            .sum();
        loss + self.lambda * (dot(&self.lin, th) + self.konst + base + self.mu * st.gv.max(st.hv))
    }

    fn loss_grad(&self, th: &[f64]) -> Vec<f64> {
        let n = self.xt.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for (x, &y) in self.xt.iter().zip(&self.y) {
            axpy(&mut g, -y * sigmoid(-y * dot(x, th)) / n, x);
        }
        g
    }

    fn loss_grad_hess(&self, th: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let p = self.dim();
        let n = self.xt.len() as f64;
        let mut g = vec![0.0; p];
        let mut h = DMatrix::<f64>::zeros(p, p);
        for (x, &y) in self.xt.iter().zip(&self.y) {
            let f = dot(x, th);
            axpy(&mut g, -y * sigmoid(-y * f) / n, x);
            let s = sigmoid(f);
            let w = s * (1.0 - s) / n;
            for a in 0..p {
                for b in 0..p {
                    h[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        (g, h)
    }

    fn tie_tol(&self, st: &State) -> f64 {
        KINK_TOL * (1.0 + st.gv.abs() + st.hv.abs())
    }
}

/// Upper bound of a kink weight: 1, `β` or `1 - β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    One,
    BelowBeta,
    BelowOneMinusBeta,
}

/// Point of `{g0 + Σ z_i col_i}` minimizing `⟨x, ·⟩` over the kink weights
/// `0 ≤ z_i ≤ bound_i` (and `β ∈ [0, 1]` stored as the last column).
fn extreme_point(
    g0: &[f64],
    cols: &[Vec<f64>],
    bounds: &[Bound],
    with_beta: bool,
    x: &[f64],
) -> Vec<f64> {
    let mut v = g0.to_vec();
    let mut on_g = g0.iter().map(|_| 0.0).collect::<Vec<_>>();
    let mut on_h = on_g.clone();
    let (mut sg, mut sh) = (0.0, 0.0);
    for (col, b) in cols.iter().zip(bounds) {
        let s = dot(col, x);
        if s >= 0.0 {
            continue;
        }
        match b {
            Bound::One => axpy(&mut v, 1.0, col),
            Bound::BelowBeta => {
                sg += s;
                axpy(&mut on_g, 1.0, col);
            }
            Bound::BelowOneMinusBeta => {
                sh += s;
                axpy(&mut on_h, 1.0, col);
            }
        }
    }
    if with_beta {
        let beta_col = cols.last().expect("beta column");
        if dot(beta_col, x) + sg < sh {
            axpy(&mut v, 1.0, beta_col);
            axpy(&mut v, 1.0, &on_g);
        } else {
            axpy(&mut v, 1.0, &on_h);
        }
    }
    v
}

/// Minimum-norm point of `{g0 + Σ z_i col_i}` over the kink weights, by
/// Wolfe's algorithm: the polytope only enters through [`extreme_point`].
fn min_norm_point(g0: &[f64], cols: &[Vec<f64>], bounds: &[Bound], with_beta: bool) -> Vec<f64> {
    let p = g0.len();
    let lmo = |x: &[f64]| extreme_point(g0, cols, bounds, with_beta, x);
    let mut pts: Vec<Vec<f64>> = vec![lmo(g0)];
    let mut wts: Vec<f64> = vec![1.0];
    let mut x = pts[0].clone();
    let scale = 1.0 + norm(g0) + cols.iter().map(|c| norm(c)).sum::<f64>();
    for _ in 0..1000 {
        let v = lmo(&x);
        let gap = dot(&x, &x) - dot(&x, &v);
        if gap <= 1e-16 * scale * scale || pts.contains(&v) {
            break;
        }
        pts.push(v);
        wts.push(0.0);
        while let Some(alpha) = affine_min_norm(&pts) {
            if alpha.iter().all(|&a| a > 1e-14) {
                wts = alpha;
                break;
            }
            let mut theta: f64 = 1.0;
            for (w, a) in wts.iter().zip(&alpha) {
                if *a <= 1e-14 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in wts.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let keep: Vec<bool> = wts.iter().map(|w| *w > 1e-14).collect();
            let mut k = 0;
            pts.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            wts.retain(|w| *w > 1e-14);
            let total: f64 = wts.iter().sum();
            wts.iter_mut().for_each(|w| *w /= total);
            if pts.len() == 1 {
                wts = vec![1.0];
                break;
            }
        }
        x = vec![0.0; p];
        for (q, w) in pts.iter().zip(&wts) {
            axpy(&mut x, *w, q);
        }
    }
    x
}

/// Affine weights of the minimum-norm point in the affine hull of `pts`.
fn affine_min_norm(pts: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = pts.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = dot(&pts[i], &pts[j]);
        }
        a[(i, m)] = 1.0;
        a[(m, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = a.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some(sol.as_slice()[..m].to_vec())
}

/// Local model at an iterate: `g0 + Σ z_i col_i` ranges over the
/// subdifferential as the kink weights `z` range over their bounds.
struct Local {
    g0: Vec<f64>,
    cols: Vec<Vec<f64>>,
    bounds: Vec<Bound>,
    tie: bool,
}

impl Problem {
    fn relevant(&self, tag: Tag, tie: bool, g_active: bool) -> bool {
        match tag {
            Tag::Base => true,
            _ if self.mu == 0.0 || tie => true,
            Tag::G => g_active,
            Tag::H => !g_active,
        }
    }

    fn local(&self, th: &[f64], st: &State) -> Local {
        let p = self.dim();
        let lam = self.lambda;
        let lm = lam * self.mu;
        let diff = st.gv - st.hv;
        let tie = self.mu > 0.0 && diff.abs() <= self.tie_tol(st);
        let g_active = diff > 0.0;
        let mut g0 = self.loss_grad(th);
        axpy(&mut g0, lam, &self.lin);
        let mut dg = vec![0.0; p];
        let mut dh = vec![0.0; p];
        let mut kinks: Vec<usize> = Vec::new();
        for (j, q) in self.relus.iter().enumerate() {
            if !self.relevant(q.tag, tie, g_active) {
                continue;
            }
            if st.r[j].abs() <= KINK_TOL {
                kinks.push(j);
            } else if st.r[j] > 0.0 {
                match q.tag {
                    Tag::Base => axpy(&mut g0, lam * q.c, &q.a),
                    Tag::G => axpy(&mut dg, q.c, &q.a),
                    Tag::H => axpy(&mut dh, q.c, &q.a),
                }
            }
        }
        axpy(&mut g0, lm, if g_active && !tie { &dg } else { &dh });
        let mut cols = Vec::with_capacity(kinks.len() + 1);
        let mut bounds = Vec::with_capacity(kinks.len());
        for &j in &kinks {
            let q = &self.relus[j];
            let scale = if q.tag == Tag::Base {
                lam * q.c
            } else {
                lm * q.c
            };
            cols.push(q.a.iter().map(|v| v * scale).collect());
            bounds.push(match q.tag {
                Tag::G if tie => Bound::BelowBeta,
                Tag::H if tie => Bound::BelowOneMinusBeta,
                _ => Bound::One,
            });
        }
        if tie {
            cols.push(dg.iter().zip(&dh).map(|(a, b)| lm * (a - b)).collect());
        }
        Local {
            g0,
            cols,
            bounds,
            tie,
        }
    }

    /// First `t` in `(0, limit]` at which a relevant relu outside the local
    /// kink set, or the side of the max, changes.
    fn first_break(&self, th: &[f64], dir: &[f64], st: &State, local: &Local, limit: f64) -> f64 {
        let diff = st.gv - st.hv;
        let mut t_break = limit;
        for (j, q) in self.relus.iter().enumerate() {
            if st.r[j].abs() <= KINK_TOL || !self.relevant(q.tag, local.tie, diff > 0.0) {
                continue;
            }
            let tb = -st.r[j] / dot(&q.a, dir);
            if tb > 0.0 && tb < t_break {
                t_break = tb;
            }
        }
        if self.mu > 0.0 && !local.tie {
            if let Some(tb) = self.max_crossing(th, dir, st, diff > 0.0, t_break) {
                t_break = t_break.min(tb);
            }
        }
        t_break
    }

    /// First `t` in `(0, limit]` where the active side of the max changes.
    fn max_crossing(
        &self,
        th: &[f64],
        dir: &[f64],
        st: &State,
        g_active: bool,
        limit: f64,
    ) -> Option<f64> {
        let sign = if g_active { 1.0 } else { -1.0 };
        let diff_at = |t: f64| {
            let x: Vec<f64> = th.iter().zip(dir).map(|(a, d)| a + t * d).collect();
            let s = self.state(&x);
            sign * (s.gv - s.hv)
        };
        let mut bps: Vec<f64> = self
            .relus
            .iter()
            .enumerate()
            .filter(|(_, q)| q.tag != Tag::Base)
            .filter_map(|(j, q)| {
                let tb = -st.r[j] / dot(&q.a, dir);
                (tb > 0.0 && tb < limit).then_some(tb)
            })
            .collect();
        bps.push(limit);
        bps.sort_by(f64::total_cmp);
        let tol = self.tie_tol(st);
        let mut t0 = 0.0;
        let mut d0 = sign * (st.gv - st.hv);
        for t1 in bps {
            let d1 = diff_at(t1);
            if d1 < -tol {
                return Some(if d0 > 0.0 {
                    t0 + (t1 - t0) * d0 / (d0 - d1)
                } else {
                    t0
                });
            }
            t0 = t1;
            d0 = d1;
        }
        None
    }
}

/// Solve to a subgradient of norm `<= grad_tol`, starting from `th0`.
/// Returns the solution, its value and the minimum subgradient norm there.
pub(super) fn solve(
    problem: &Problem,
    th0: &[f64],
    grad_tol: f64,
    max_iters: usize,
) -> (Vec<f64>, f64, f64) {
    let p = problem.dim();
    let mut th = th0.to_vec();
    // Starting on many kinks at once (e.g. all scores zero) makes the first
    // QPs large; the problem is convex, so nudge the start.
    let on_kink = problem
        .state(&th)
        .r
        .iter()
        .filter(|r| r.abs() <= KINK_TOL)
        .count();
    if on_kink > 2 * p {
        for (i, t) in th.iter_mut().enumerate() {
            *t += 1e-3 * (1.0 + i as f64) / p as f64;
        }
    }
    let mut val = problem.value(&th);
    let mut dnorm = f64::INFINITY;
    for _ in 0..max_iters {
        let st = problem.state(&th);
        let local = problem.local(&th, &st);
        dnorm = norm(&min_norm_point(
            &local.g0,
            &local.cols,
            &local.bounds,
            local.tie,
        ));
        if dnorm <= grad_tol {
            break;
        }

        // Minimizer of the quadratic loss model plus the polyhedral term,
        // through its dual: the same QP in the metric of the inverse Hessian.
        let (_, hess) = problem.loss_grad_hess(&th);
        let ridge = 1e-6 * (1.0 + hess.trace() / p as f64);
        let hess = hess + DMatrix::identity(p, p) * ridge;
        let Some(chol) = hess.cholesky() else { break };
        let l = chol.l();
        let whiten = |v: &[f64]| -> Vec<f64> {
            l.solve_lower_triangular(&DVector::from_column_slice(v))
                .expect("cholesky factor is invertible")
                .as_slice()
                .to_vec()
        };
        let wg0 = whiten(&local.g0);
        let wcols: Vec<Vec<f64>> = local.cols.iter().map(|c| whiten(c)).collect();
        let w = DVector::from_column_slice(&min_norm_point(&wg0, &wcols, &local.bounds, local.tie));
        let dir: Vec<f64> = l
            .transpose()
            .solve_upper_triangular(&w)
            .expect("cholesky factor is invertible")
            .iter()
            .map(|v| -v)
            .collect();
        let curv = w.norm_squared();
        if curv.is_nan() || curv <= 0.0 {
            break;
        }

        let t_break = problem.first_break(&th, &dir, &st, &local, 1.0);
        if curv * t_break <= 64.0 * f64::EPSILON * (1.0 + val.abs()) {
            // The predicted decrease is below the rounding noise of the
            // objective; judge the step by stationarity instead.
            let trial: Vec<f64> = th.iter().zip(&dir).map(|(a, d)| a + t_break * d).collect();
            let st_trial = problem.state(&trial);
            let lt = problem.local(&trial, &st_trial);
            let dn_trial = norm(&min_norm_point(&lt.g0, &lt.cols, &lt.bounds, lt.tie));
            if dn_trial < dnorm {
                th = trial;
                val = problem.value(&th);
                dnorm = dn_trial;
                continue;
            }
            break;
        }
        let mut step = t_break;
        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = th.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let v = problem.value(&trial);
            if v <= val - 1e-4 * step * curv {
                th = trial;
                val = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (th, val, dnorm)
}
