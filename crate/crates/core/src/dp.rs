//! Min-plus kernels shared by the metric, solver and cell-problem code.
//!
//! All dynamic programs in the crate are built from one update on a uniform
//! 1D grid,
//!
//! ```text
//! out[i] = post[i] + min_{|j| ≤ w} ( prev[i + j] + kern[j] ),
//! ```
//!
//! where `kern` is a convex velocity cost sampled at the grid offsets
//! `j = -w..=w` and `post` an additive per-node term. On a line the window is
//! clipped at the ends, which coincides with a constant extension of `prev`
//! beyond the domain because `kern` is nondecreasing in `|j|`. On the torus
//! indices wrap.

use crate::par::{self, Exec};
use crate::{Error, Result};

/// Grid boundary handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Clamp,
    Periodic,
}

/// Velocity cost sampled at grid offsets: `costs[j + w]` is the cost of moving
/// `j` nodes in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub half_width: usize,
    pub costs: Vec<f64>,
}

impl Kernel {
    /// Samples `cost(offset)` for offsets `-w..=w`.
    pub fn from_fn(half_width: usize, cost: impl Fn(isize) -> f64) -> Self {
        let w = half_width as isize;
        Kernel {
            half_width,
            costs: (-w..=w).map(cost).collect(),
        }
    }

    #[inline]
    pub fn at(&self, j: isize) -> f64 {
        self.costs[(j + self.half_width as isize) as usize]
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

/// Outcome counters of one min-plus step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Nodes whose minimum is attained only at the window edge `|j| = w`.
    pub saturated: usize,
    pub updated: usize,
}

impl std::ops::AddAssign for StepStats {
    fn add_assign(&mut self, o: Self) {
        self.saturated += o.saturated;
        self.updated += o.updated;
    }
}

const BLOCK: usize = 2048;

/// One clamped min-plus step over the node range `lo..hi`; entries of `out`
/// outside the range are left untouched.
///
/// Values only; the interior of the window is reduced first so that edge
/// saturation can be detected without tracking arg-minima.
pub fn min_plus_step(
    exec: Exec,
    prev: &[f64],
    post: &[f64],
    kern: &Kernel,
    lo: usize,
    hi: usize,
    out: &mut [f64],
) -> StepStats {
    let n = prev.len();
    assert_eq!(post.len(), n);
    assert_eq!(out.len(), n);
    assert!(lo <= hi && hi <= n);
    let w = kern.half_width as isize;
    let range = &mut out[lo..hi];
    let sat = par::map_chunks(exec, range, BLOCK, |start, chunk| {
        let base = lo + start;
        let mut edge = [f64::INFINITY; BLOCK];
        let edge = &mut edge[..chunk.len()];
        for v in chunk.iter_mut() {
            *v = f64::INFINITY;
        }
        for j in -w..=w {
            let kj = kern.at(j);
            let target: &mut [f64] = if j.abs() == w && w > 0 { edge } else { chunk };
            // nodes whose neighbor base + k + j lies inside [0, n)
            let k_lo = (-(base as isize) - j).max(0) as usize;
            let k_hi = ((n as isize - base as isize - j).max(0) as usize).min(target.len());
            if k_lo >= k_hi {
                continue;
            }
            let src_start = (base as isize + k_lo as isize + j) as usize;
            let src = &prev[src_start..src_start + (k_hi - k_lo)];
            for (t, &s) in target[k_lo..k_hi].iter_mut().zip(src) {
                let c = s + kj;
                if c < *t {
                    *t = c;
                }
            }
        }
        let mut s = 0usize;
        for (k, v) in chunk.iter_mut().enumerate() {
            if w > 0 && edge[k] < *v {
                *v = edge[k];
                s += 1;
            }
            *v += post[base + k];
        }
        s
    });
    StepStats {
        saturated: sat.iter().sum(),
        updated: hi - lo,
    }
}

/// Min-plus step over the node range `lo..hi` that also returns the arg-min
/// offset of every updated node, breaking ties toward the smallest source
/// index. Infinite entries of `prev` mark unreachable nodes; `out` and `arg`
/// outside the range are left untouched.
#[allow(clippy::too_many_arguments)]
pub fn min_plus_step_argmin(
    exec: Exec,
    prev: &[f64],
    post: &[f64],
    kern: &Kernel,
    boundary: Boundary,
    lo: usize,
    hi: usize,
    out: &mut [f64],
    arg: &mut [i32],
) {
    let n = prev.len();
    let w = kern.half_width as isize;
    let mut pairs = vec![(0.0f64, 0i32); hi - lo];
    par::fill_indexed(exec, &mut pairs, |q| {
        let i = lo + q;
        let mut best = f64::INFINITY;
        let mut best_j = 0i32;
        for j in -w..=w {
            let Some(idx) = neighbor(i, j, n, boundary) else {
                continue;
            };
            let c = prev[idx] + kern.at(j);
            if c < best {
                best = c;
                best_j = j as i32;
            }
        }
        (best + post[i], best_j)
    });
    for (q, (v, j)) in pairs.into_iter().enumerate() {
        out[lo + q] = v;
        arg[lo + q] = j;
    }
}

/// Discounted fixed point `v = T v`,
///
/// ```text
/// (T v)[i] = post[i] + min_{|j| ≤ w} ( kern[j] + pre[i + j] + β · v[i + j] ),   β = exp(log_beta),
/// ```
///
/// with `pre ≡ 0` when absent.
/// solved by Howard policy iteration. Each policy is a functional graph, so it
/// is evaluated exactly in `O(n)` by resolving its cycles in closed form. The
/// loop stops when the policy is stable; the returned residual is
/// `‖T v - v‖_∞` of the final iterate.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub policy: Vec<i32>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn discounted_fixed_point(
    exec: Exec,
    post: &[f64],
    pre: Option<&[f64]>,
    kern: &Kernel,
    log_beta: f64,
    boundary: Boundary,
    max_iterations: usize,
) -> Result<FixedPoint> {
    assert!(log_beta < 0.0, "discount factor must be < 1");
    let n = post.len();
    let beta = log_beta.exp();
    let mut policy = vec![0i32; n];
    let mut values = evaluate_policy(post, pre, kern, &policy, log_beta, boundary);
    for it in 1..=max_iterations {
        // switch only on improvements above the rounding of a policy evaluation
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let margin = 1024.0 * f64::EPSILON * scale;
        let mut next = vec![0i32; n];
        let cur = &policy;
        let vals = &values;
        par::fill_indexed(exec, &mut next, |i| {
            let j_cur = cur[i];
            let k = neighbor(i, j_cur as isize, n, boundary).unwrap();
            let q_cur = kern.at(j_cur as isize) + pre.map_or(0.0, |p| p[k]) + beta * vals[k];
            let (q, j) = best_action(i, vals, pre, kern, beta, boundary);
            if q < q_cur - margin {
                j
            } else {
                j_cur
            }
        });
        let changed = next != policy;
        policy = next;
        if changed {
            values = evaluate_policy(post, pre, kern, &policy, log_beta, boundary);
        }
        if !changed {
            let residual = bellman_residual(exec, &values, post, pre, kern, beta, boundary);
            return Ok(FixedPoint {
                values,
                policy,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::Numerical(format!(
        "policy iteration did not stabilize within {max_iterations} iterations"
    )))
}

#[inline]
fn neighbor(i: usize, j: isize, n: usize, boundary: Boundary) -> Option<usize> {
    let s = i as isize + j;
    match boundary {
        Boundary::Clamp => (s >= 0 && s < n as isize).then_some(s as usize),
        Boundary::Periodic => Some(s.rem_euclid(n as isize) as usize),
    }
}

#[inline]
fn best_action(
    i: usize,
    v: &[f64],
    pre: Option<&[f64]>,
    kern: &Kernel,
    beta: f64,
    boundary: Boundary,
) -> (f64, i32) {
    let n = v.len();
    let w = kern.half_width as isize;
    let mut best = f64::INFINITY;
    let mut best_j = 0i32;
    for j in -w..=w {
        if let Some(k) = neighbor(i, j, n, boundary) {
            let q = kern.at(j) + pre.map_or(0.0, |p| p[k]) + beta * v[k];
            if q < best {
                best = q;
                best_j = j as i32;
            }
        }
    }
    (best, best_j)
}

/// `‖T v - v‖_∞` for the discounted operator.
pub fn bellman_residual(
    exec: Exec,
    v: &[f64],
    post: &[f64],
    pre: Option<&[f64]>,
    kern: &Kernel,
    beta: f64,
    boundary: Boundary,
) -> f64 {
    let mut r = vec![0.0f64; v.len()];
    par::fill_indexed(exec, &mut r, |i| {
        let (q, _) = best_action(i, v, pre, kern, beta, boundary);
        (post[i] + q - v[i]).abs()
    });
    r.into_iter().fold(0.0, f64::max)
}

/// Exact value of a fixed policy: `v[i] = post[i] + kern[π(i)] + pre[s] + β v[s]`
/// with `s = i + π(i)`.
fn evaluate_policy(
    post: &[f64],
    pre: Option<&[f64]>,
    kern: &Kernel,
    policy: &[i32],
    log_beta: f64,
    boundary: Boundary,
) -> Vec<f64> {
    let n = post.len();
    let beta = log_beta.exp();
    let succ: Vec<usize> = (0..n)
        .map(|i| neighbor(i, policy[i] as isize, n, boundary).expect("policy leaves the grid"))
        .collect();
    let cost: Vec<f64> = (0..n)
        .map(|i| post[i] + kern.at(policy[i] as isize) + pre.map_or(0.0, |p| p[succ[i]]))
        .collect();

    const NEW: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let mut state = vec![NEW; n];
    let mut pos = vec![0usize; n];
    let mut v = vec![0.0f64; n];
    let mut path: Vec<usize> = Vec::new();

    for start in 0..n {
        if state[start] != NEW {
            continue;
        }
        path.clear();
        let mut k = start;
        while state[k] == NEW {
            state[k] = ON_PATH;
            pos[k] = path.len();
            path.push(k);
            k = succ[k];
        }
        let mut tail_end = path.len();
        if state[k] == ON_PATH {
            // cycle path[pos[k]..]
            let c0 = pos[k];
            let cyc = &path[c0..];
            let len = cyc.len();
            let mut acc = 0.0;
            let mut disc = 1.0;
            for &m in cyc {
                acc += disc * cost[m];
                disc *= beta;
            }
            let denom = -(len as f64 * log_beta).exp_m1();
            v[cyc[0]] = acc / denom;
            for idx in (1..len).rev() {
                let m = cyc[idx];
                v[m] = cost[m] + beta * v[succ[m]];
            }
            // the first node re-evaluated through its successor for consistency
            let m0 = cyc[0];
            if len > 1 {
                v[m0] = cost[m0] + beta * v[succ[m0]];
            }
            for &m in cyc {
                state[m] = DONE;
            }
            tail_end = c0;
        }
        for idx in (0..tail_end).rev() {
            let m = path[idx];
            v[m] = cost[m] + beta * v[succ[m]];
            state[m] = DONE;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_step(prev: &[f64], post: &[f64], kern: &Kernel) -> Vec<f64> {
        let n = prev.len() as isize;
        let w = kern.half_width as isize;
        (0..n)
            .map(|i| {
                let mut m = f64::INFINITY;
                for j in -w..=w {
                    let s = i + j;
                    if s >= 0 && s < n {
                        m = m.min(prev[s as usize] + kern.at(j));
                    }
                }
                m + post[i as usize]
            })
            .collect()
    }

    proptest! {
        #[test]
        fn blocked_step_matches_brute_force(
            prev in proptest::collection::vec(-3.0f64..3.0, 1..5000),
            w in 0usize..12,
            exec_par in any::<bool>(),
        ) {
            let n = prev.len();
            let post: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).cos()).collect();
            let kern = Kernel::from_fn(w, |j| 0.3 * (j * j) as f64);
            let mut out = vec![0.0; n];
            let exec = if exec_par { Exec::Parallel } else { Exec::Sequential };
            min_plus_step(exec, &prev, &post, &kern, 0, n, &mut out);
            let want = brute_step(&prev, &post, &kern);
            prop_assert_eq!(out.clone(), want);

            let mut out2 = vec![0.0; n];
            let mut arg = vec![0; n];
            min_plus_step_argmin(exec, &prev, &post, &kern, Boundary::Clamp, 0, n, &mut out2, &mut arg);
            prop_assert_eq!(out2, out);
        }
    }

    #[test]
    fn saturation_is_detected() {
        // steep decreasing data: every node wants to jump as far right as allowed
        let n = 100;
        let prev: Vec<f64> = (0..n).map(|i| -10.0 * i as f64).collect();
        let post = vec![0.0; n];
        let kern = Kernel::from_fn(2, |j| 0.1 * (j * j) as f64);
        let mut out = vec![0.0; n];
        let st = min_plus_step(Exec::Sequential, &prev, &post, &kern, 0, n, &mut out);
        assert_eq!(st.updated, n);
        assert!(st.saturated >= n - 2);

        let flat = vec![0.0; n];
        let st = min_plus_step(Exec::Sequential, &flat, &post, &kern, 0, n, &mut out);
        assert_eq!(st.saturated, 0);
    }

    #[test]
    fn argmin_ties_break_to_smallest_index() {
        let prev = vec![0.0; 9];
        let post = vec![0.0; 9];
        let kern = Kernel::from_fn(2, |_| 1.0);
        let mut out = vec![0.0; 9];
        let mut arg = vec![0; 9];
        min_plus_step_argmin(Exec::Sequential, &prev, &post, &kern, Boundary::Clamp, 0, 9, &mut out, &mut arg);
        assert_eq!(arg[4], -2);
        assert_eq!(arg[0], 0);
        min_plus_step_argmin(Exec::Sequential, &prev, &post, &kern, Boundary::Periodic, 0, 9, &mut out, &mut arg);
        assert_eq!(arg[0], -2);
    }

    fn value_iteration(post: &[f64], kern: &Kernel, beta: f64, boundary: Boundary) -> Vec<f64> {
        let mut v = vec![0.0; post.len()];
        for _ in 0..20_000 {
            let next: Vec<f64> = (0..post.len())
                .map(|i| post[i] + best_action(i, &v, None, kern, beta, boundary).0)
                .collect();
            let d = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if d < 1e-13 {
                break;
            }
        }
        v
    }

    #[test]
    fn policy_iteration_matches_value_iteration() {
        for boundary in [Boundary::Clamp, Boundary::Periodic] {
            let n = 64;
            let post: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.31).sin()).collect();
            let kern = Kernel::from_fn(3, |j| 0.2 * (j * j) as f64 - 0.05 * j as f64);
            let log_beta = -0.05;
            let fp = discounted_fixed_point(Exec::Sequential, &post, None, &kern, log_beta, boundary, 500)
                .unwrap();
            let vi = value_iteration(&post, &kern, log_beta.exp(), boundary);
            for (a, b) in fp.values.iter().zip(&vi) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            assert!(fp.residual < 1e-10);
        }
    }

    #[test]
    fn sitting_still_value() {
        let post = vec![0.5; 10];
        let kern = Kernel::from_fn(1, |j| (j * j) as f64);
        let log_beta = -0.1f64;
        let fp = discounted_fixed_point(Exec::Sequential, &post, None, &kern, log_beta, Boundary::Clamp, 10)
            .unwrap();
        let want = 0.5 / (1.0 - log_beta.exp());
        for v in fp.values {
            assert!((v - want).abs() < 1e-12);
        }
    }
}
