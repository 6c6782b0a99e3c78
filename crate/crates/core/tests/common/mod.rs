#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sur_ess::dist::standard_normal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]`: `panels` panels of `order` nodes.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log ∫∫ N(y | Xβ, σ² I) N(β | 0, σ² w I) IG(σ² | a, b) dβ dσ²` by nested
/// quadrature over `log σ²` and each coordinate of β (at most two).
pub fn nig_log_marginal_quadrature(y: &DVector<f64>, x: &DMatrix<f64>, w: f64, a: f64, b: f64) -> f64 {
    let n = y.len() as f64;
    let q = x.ncols();
    assert!(q <= 2);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    // Centre and scale of β given σ² (used only to place the quadrature box).
    let prec = x.transpose() * x + DMatrix::identity(q, q) / w;
    let cov = prec.clone().try_inverse().unwrap();
    let centre = &cov * x.transpose() * y;
    let sd: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();

    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let yty = y.norm_squared();
    let log_joint = |beta: &[f64], s2: f64| -> f64 {
        let mut rss = yty;
        for i in 0..q {
            rss -= 2.0 * beta[i] * xty[i];
            for j in 0..q {
                rss += beta[i] * xtx[(i, j)] * beta[j];
            }
        }
        let ll = -0.5 * n * (ln2pi + s2.ln()) - 0.5 * rss / s2;
        let lp: f64 = beta
            .iter()
            .map(|bj| -0.5 * (ln2pi + (s2 * w).ln()) - 0.5 * bj * bj / (s2 * w))
            .sum();
        ll + lp
    };
    let inner = |s2: f64| -> f64 {
        let half = 12.0;
        let rules: Vec<Vec<(f64, f64)>> = (0..q)
            .map(|i| {
                let h = half * sd[i] * s2.sqrt();
                composite_rule(centre[i] - h, centre[i] + h, 4, 16)
            })
            .collect();
        let mut terms = Vec::new();
        match q {
            0 => terms.push(log_joint(&[], s2)),
            1 => {
                for &(b0, w0) in &rules[0] {
                    terms.push(w0.ln() + log_joint(&[b0], s2));
                }
            }
            _ => {
                // β₁ nodes follow the conditional location given β₀ so that
                // strongly correlated designs stay resolved.
                let slope = cov[(1, 0)] / cov[(0, 0)];
                let cond_sd = (cov[(1, 1)] - slope * cov[(1, 0)]).sqrt() * s2.sqrt();
                for &(b0, w0) in &rules[0] {
                    let c1 = centre[1] + slope * (b0 - centre[0]);
                    for (b1, w1) in composite_rule(c1 - half * cond_sd, c1 + half * cond_sd, 4, 16) {
                        terms.push(w0.ln() + w1.ln() + log_joint(&[b0, b1], s2));
                    }
                }
            }
        }
        log_sum_exp(&terms)
    };
    let ln_gamma_a = statrs::function::gamma::ln_gamma(a);
    let log_ig = |s2: f64| a * b.ln() - ln_gamma_a - (a + 1.0) * s2.ln() - b / s2;
    // Integrate over t = log σ² around the posterior mode of σ².
    let a_post = a + 0.5 * n;
    let rough = (b + 0.5 * y.norm_squared()) / (a_post + 1.0);
    let t0 = rough.ln();
    let rule = composite_rule(t0 - 25.0, t0 + 50.0 / a_post.min(4.0) + 10.0, 30, 16);
    let terms: Vec<f64> = rule
        .iter()
        .map(|&(t, wt)| {
            let s2 = t.exp();
            wt.ln() + t + log_ig(s2) + inner(s2)
        })
        .collect();
    log_sum_exp(&terms)
}

/// `log N(U; 0, I ⊗ C)` for the rows of `u`.
pub fn matrix_normal_log_density(u: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let (n, s) = u.shape();
    let chol = c.clone().cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let inv = chol.inverse();
    let quad: f64 = (0..n)
        .map(|i| {
            let r = u.row(i).transpose();
            (r.transpose() * &inv * &r)[(0, 0)]
        })
        .sum();
    -0.5 * (n as f64 * (s as f64 * (2.0 * std::f64::consts::PI).ln() + log_det) + quad)
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Brute-force chordality: some ordering eliminates every vertex while its
/// later neighbours form a clique.
pub fn has_perfect_elimination_order(adj: &[Vec<bool>], perms: &[Vec<usize>]) -> bool {
    let n = adj.len();
    perms.iter().any(|order| {
        let mut pos = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        order.iter().all(|&v| {
            let later: Vec<usize> = (0..n).filter(|&u| adj[v][u] && pos[u] > pos[v]).collect();
            later
                .iter()
                .enumerate()
                .all(|(i, &a)| later[i + 1..].iter().all(|&b| adj[a][b]))
        })
    })
}

/// Adjacency of graph number `code` over the upper-triangle pairs in
/// lexicographic order.
pub fn adjacency_from_code(s: usize, code: u64) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; s]; s];
    let mut bit = 0;
    for i in 0..s {
        for j in i + 1..s {
            if code >> bit & 1 == 1 {
                adj[i][j] = true;
                adj[j][i] = true;
            }
            bit += 1;
        }
    }
    adj
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_mean_se(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Mean and standard error of independent draws.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
