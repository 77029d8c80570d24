// SPDX-License-Identifier: MIT OR Apache-2.0

//! Direct scalar-loop evaluations of the quantities under test, written
//! without sharing code with the library.

#![allow(dead_code)]

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `-log(exp(pos) / Σ exp(all))` with the positive included in `all`.
fn nll(pos: f64, all: &[f64]) -> f64 {
    let mut z = 0.0;
    for &v in all {
        z += v.exp();
    }
    z.ln() - pos
}

/// Row `(i, s)` of a `(b, t, c)` buffer.
fn row(x: &[f64], t: usize, c: usize, i: usize, s: usize) -> &[f64] {
    &x[(i * t + s) * c..(i * t + s + 1) * c]
}

pub fn instance_loss(h: &[f64], g: &[f64], b: usize, t: usize, c: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let anchor = row(h, t, c, i, s);
            let mut all = Vec::new();
            for j in 0..b {
                all.push(dot(anchor, row(g, t, c, j, s)));
                if j != i {
                    all.push(dot(anchor, row(h, t, c, j, s)));
                }
            }
            total += nll(dot(anchor, row(g, t, c, i, s)), &all);
        }
    }
    total / (b * t) as f64
}

pub fn temporal_loss(h: &[f64], g: &[f64], b: usize, t: usize, c: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..b {
        for s in 0..t {
            let anchor = row(h, t, c, i, s);
            let mut all = Vec::new();
            for u in 0..t {
                all.push(dot(anchor, row(g, t, c, i, u)));
                if u != s {
                    all.push(dot(anchor, row(h, t, c, i, u)));
                }
            }
            total += nll(dot(anchor, row(g, t, c, i, s)), &all);
        }
    }
    total / (b * t) as f64
}

/// Max over disjoint time pairs; an odd trailing timestamp is dropped.
pub fn pool_pairs(x: &[f64], b: usize, t: usize, c: usize) -> Vec<f64> {
    let half = t / 2;
    let mut out = vec![0.0; b * half * c];
    for i in 0..b {
        for p in 0..half {
            for k in 0..c {
                let l = x[(i * t + 2 * p) * c + k];
                let r = x[(i * t + 2 * p + 1) * c + k];
                out[(i * half + p) * c + k] = if l >= r { l } else { r };
            }
        }
    }
    out
}

pub fn hierarchical_loss(h: &[f64], g: &[f64], b: usize, t: usize, c: usize) -> f64 {
    let (mut h, mut g, mut t) = (h.to_vec(), g.to_vec(), t);
    let mut sum = 0.0;
    let mut levels = 0;
    while t > 1 {
        sum += 0.5 * (instance_loss(&h, &g, b, t, c) + temporal_loss(&h, &g, b, t, c));
        levels += 1;
        h = pool_pairs(&h, b, t, c);
        g = pool_pairs(&g, b, t, c);
        t /= 2;
    }
    sum += 0.5 * instance_loss(&h, &g, b, t, c);
    levels += 1;
    sum / levels as f64
}

pub fn byol_loss(p: &[f64], z: &[f64], b: usize, d: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..b {
        let (x, y) = (&p[i * d..(i + 1) * d], &z[i * d..(i + 1) * d]);
        total += 2.0 - 2.0 * dot(x, y) / (dot(x, x).sqrt() * dot(y, y).sqrt());
    }
    total / b as f64
}

pub fn rbf(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..x.len() {
        d2 += (x[i] - y[i]) * (x[i] - y[i]);
    }
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Biased squared MMD over rows of two `m x d` buffers.
pub fn mmd_biased(z: &[f64], xi: &[f64], m: usize, d: usize, sigma: f64) -> f64 {
    let r = |buf: &[f64], i: usize| buf[i * d..(i + 1) * d].to_vec();
    let (mut kzz, mut kzx, mut kxx) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            kzz += rbf(&r(z, i), &r(z, j), sigma);
            kzx += rbf(&r(z, i), &r(xi, j), sigma);
            kxx += rbf(&r(xi, i), &r(xi, j), sigma);
        }
    }
    let mm = (m * m) as f64;
    kzz / mm - 2.0 * kzx / mm + kxx / mm
}

/// Gaussian elimination with partial pivoting: returns `(A⁻¹ b, log|det A|)`.
pub fn solve(a: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(rhs)
        .map(|(r, &v)| {
            let mut r = r.clone();
            r.push(v);
            r
        })
        .collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        logdet += m[col][col].abs().ln();
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for k in col..=n {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = m[r][n];
        for k in r + 1..n {
            s -= m[r][k] * x[k];
        }
        x[r] = s / m[r][r];
    }
    (x, logdet)
}

/// Log density of `vec(X)` under `N(vec(M), V ⊗ U)` for a `t x d` sample
/// with row covariance `u` (`t x t`) and column covariance `v` (`d x d`),
/// vectorizing column by column.
pub fn kronecker_logpdf(x: &[Vec<f64>], mean: &[Vec<f64>], u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    let (t, d) = (u.len(), v.len());
    let n = t * d;
    let idx = |r: usize, c: usize| c * t + r;
    let mut cov = vec![vec![0.0; n]; n];
    for r1 in 0..t {
        for c1 in 0..d {
            for r2 in 0..t {
                for c2 in 0..d {
                    cov[idx(r1, c1)][idx(r2, c2)] = v[c1][c2] * u[r1][r2];
                }
            }
        }
    }
    let mut diff = vec![0.0; n];
    for r in 0..t {
        for c in 0..d {
            diff[idx(r, c)] = x[r][c] - mean[r][c];
        }
    }
    let (sol, logdet) = solve(&cov, &diff);
    let quad = dot(&diff, &sol);
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Margin F1 over all samples: a change point is a hit when an alarm lies
/// within `margin` of it, points with no sample in reach are ignored, and
/// each maximal run of consecutive alarms that hit nothing is one false
/// positive.
pub fn margin_f1(indices: &[usize], alarms: &[bool], cps: &[usize], margin: usize) -> f64 {
    let close = |i: usize, c: usize| (i as i64 - c as i64).abs() <= margin as i64;
    let mut tp = 0;
    let mut covered = 0;
    for &c in cps {
        let mut reachable = false;
        let mut hit = false;
        for k in 0..indices.len() {
            if close(indices[k], c) {
                reachable = true;
                if alarms[k] {
                    hit = true;
                }
            }
        }
        if reachable {
            covered += 1;
            if hit {
                tp += 1;
            }
        }
    }
    let mut fp = 0;
    let mut previous = false;
    for k in 0..indices.len() {
        let stray = alarms[k] && cps.iter().all(|&c| !close(indices[k], c));
        if stray && !previous {
            fp += 1;
        }
        previous = stray;
    }
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if covered == 0 {
        0.0
    } else {
        tp as f64 / covered as f64
    };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Exhaustive threshold search. Every distinct statistic value is tried as
/// a threshold; the optimal alarm set of the smallest winning value is kept
/// and the returned threshold is the geometric (arithmetic for
/// non-positive values) mean of the winning value and the next larger
/// statistic that changes the alarm set, or just above the maximum.
pub fn sweep(indices: &[usize], stats: &[f64], cps: &[usize], margin: usize) -> (f64, f64) {
    let mut values = stats.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let f1_at = |u: f64| {
        let alarms: Vec<bool> = stats.iter().map(|&s| s > u).collect();
        margin_f1(indices, &alarms, cps, margin)
    };
    let scores: Vec<f64> = values.iter().map(|&u| f1_at(u)).collect();
    let mut best = scores[0];
    for &s in &scores {
        if s > best {
            best = s;
        }
    }
    let mut a = 0;
    while scores[a] != best {
        a += 1;
    }
    let mut b = a;
    while b + 1 < scores.len() && scores[b + 1] == best {
        b += 1;
    }
    let threshold = if b + 1 == values.len() {
        let top = values[b];
        top + 1e-9 * if top.abs() > 1.0 { top.abs() } else { 1.0 }
    } else if values[a] > 0.0 {
        (values[a] * values[b + 1]).sqrt()
    } else {
        (values[a] + values[b + 1]) / 2.0
    };
    (threshold, best)
}
