//! Synthetic data: the small quick-start regression and eQTL-style
//! multi-response data with a sparse Γ and correlated noise whose precision
//! is G-Wishart over a decomposable response graph.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{sample_gamma, standard_normal};
use crate::error::{Error, Result};
use crate::graphs::DecomposableGraph;
use crate::linalg::{cholesky, select};
use crate::model::{Dataset, Indicators, MrfEdge};
use crate::rng::RngStream;

/// A generated dataset together with the truth it was generated from.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub b_true: DMatrix<f64>,
    pub gamma_true: Indicators,
    pub graph_true: DecomposableGraph,
    /// Precision of the noise rows (identity-scaled for the quick start).
    pub precision: DMatrix<f64>,
    /// `mean_k Var(Xβ_k) / Var(u_k)` on the realised data.
    pub snr: f64,
}

/// Nonzero positions `(predictor, response)` of the quick-start coefficients.
pub const QUICKSTART_SUPPORT: [(usize, usize); 6] = [(0, 2), (1, 0), (1, 1), (2, 0), (2, 1), (3, 2)];

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = v.mean();
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn empirical_snr(signal: &DMatrix<f64>, noise: &DMatrix<f64>) -> f64 {
    let s = signal.ncols();
    (0..s)
        .map(|k| {
            let vs = sample_variance(&signal.column(k).into_owned());
            let vn = sample_variance(&noise.column(k).into_owned());
            if vn > 0.0 {
                vs / vn
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / s as f64
}

/// n = 10, s = 3, p = 15; `X ~ N(2, 1)`, `E ~ N(0, 0.2²)`, unit coefficients
/// on [`QUICKSTART_SUPPORT`].
pub fn simulate_quickstart(seed: u64) -> SimulatedData {
    let (n, s, p) = (10, 3, 15);
    let mut rng = RngStream::new(seed, 0);
    let x = DMatrix::from_fn(n, p, |_, _| 2.0 + standard_normal(&mut rng));
    let e = DMatrix::from_fn(n, s, |_, _| 0.2 * standard_normal(&mut rng));
    let mut b = DMatrix::zeros(p, s);
    for &(j, k) in &QUICKSTART_SUPPORT {
        b[(j, k)] = 1.0;
    }
    let signal = &x * &b;
    let y = &signal + &e;
    let gamma_true = Indicators::from_fn(p, s, |j, k| b[(j, k)] != 0.0);
    SimulatedData {
        dataset: Dataset::new(y, x, None).expect("consistent shapes"),
        snr: empirical_snr(&signal, &e),
        b_true: b,
        gamma_true,
        graph_true: DecomposableGraph::empty(s).expect("small graph"),
        precision: DMatrix::identity(s, s) / 0.04,
    }
}

/// Inputs of the eQTL simulator.
#[derive(Debug, Clone)]
pub struct SimulationRecipe {
    pub n: usize,
    pub gamma_true: Indicators,
    pub graph_true: DecomposableGraph,
    pub beta_sd: f64,
    pub noise_sd: f64,
    /// Allele frequencies are drawn uniformly from this range.
    pub maf_range: (f64, f64),
    /// G-Wishart degrees of freedom.
    pub delta: f64,
    /// Off-diagonal value of the G-Wishart scale matrix (unit diagonal).
    pub scale_offdiag: f64,
    /// When set, all coefficients are multiplied by one common factor so the
    /// realised mean SNR equals this value.
    pub target_snr: Option<f64>,
    pub seed: u64,
}

fn block_gamma(p: usize, s: usize, blocks: &[(std::ops::Range<usize>, &[usize])]) -> Indicators {
    let mut g = Indicators::zeros(p, s);
    for (rows, cols) in blocks {
        for j in rows.clone() {
            for &k in cols.iter() {
                g.set(j, k, true);
            }
        }
    }
    g
}

fn clique_edges(groups: &[&[usize]]) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for g in groups {
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                e.push((i, j));
            }
        }
    }
    e
}

impl SimulationRecipe {
    fn with(n: usize, gamma_true: Indicators, graph_true: DecomposableGraph, seed: u64) -> Self {
        Self {
            n,
            gamma_true,
            graph_true,
            beta_sd: 1.0,
            noise_sd: 0.5,
            maf_range: (0.05, 0.5),
            delta: 2.0,
            scale_offdiag: 0.9,
            target_snr: Some(25.0),
            seed,
        }
    }

    /// p = 50 SNPs, s = 5 responses, n = 100. Graph: a triangle {0,1,2} and
    /// an edge {3,4}. Γ: SNPs 0–3 drive responses 0–2, SNPs 10–13 drive 3–4,
    /// SNPs 20–23 drive every response.
    pub fn desk(seed: u64) -> Self {
        let gamma = block_gamma(50, 5, &[(0..4, &[0, 1, 2]), (10..14, &[3, 4]), (20..24, &[0, 1, 2, 3, 4])]);
        let graph = DecomposableGraph::from_edges(5, &clique_edges(&[&[0, 1, 2], &[3, 4]]))
            .expect("fixture graph is decomposable");
        Self::with(100, gamma, graph, seed)
    }

    /// p = 150 SNPs, s = 10 responses, n = 100, in two connected response
    /// groups {0..5} and {6..9}.
    pub fn paper_scale(seed: u64) -> Self {
        let gamma = block_gamma(
            150,
            10,
            &[(0..5, &[0, 1, 2, 3, 4, 5]), (30..35, &[6, 7, 8, 9]), (60..63, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9])],
        );
        let graph = DecomposableGraph::from_edges(10, &clique_edges(&[&[0, 1, 2, 3], &[0, 4, 5], &[6, 7, 8], &[8, 9]]))
            .expect("fixture graph is decomposable");
        Self::with(100, gamma, graph, seed)
    }

    pub fn p(&self) -> usize {
        self.gamma_true.p()
    }

    pub fn s(&self) -> usize {
        self.gamma_true.s()
    }
}

/// Standard Wishart draw with `df` degrees of freedom and scale `psi`
/// (mean `df·psi`), by the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, psi: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = psi.nrows();
    let l = cholesky(psi)?.l();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        a[(i, i)] = (2.0 * sample_gamma(rng, 0.5 * (df - i as f64), 1.0)).sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let la = l * a;
    Ok(&la * la.transpose())
}

fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(m)?.inverse())
}

/// Precision `K ~ W_G(δ, M)` (density ∝ |K|^{(δ−2)/2} exp(−tr(KM)/2) on
/// matrices with zeros at non-edges) for decomposable `G`.
///
/// Clique marginals of `Σ = K⁻¹` are generated along the perfect sequence:
/// the first clique as `Σ_C ~ IW(δ+|C|−1, M_C)`, later ones through
/// `Σ_{R·S} ~ IW(δ+|C|−1, M_{R·S})` and `Σ_SS⁻¹Σ_SR ~ MN(M_SS⁻¹M_SR,
/// M_SS⁻¹ ⊗ Σ_{R·S})`. Then `K = Σ_C [Σ_C⁻¹]⁰ − Σ_S [Σ_S⁻¹]⁰`. For the
/// complete graph this is a Wishart(δ+s−1, M⁻¹) draw.
pub fn sample_gwishart_decomposable<R: Rng + ?Sized>(
    graph: &DecomposableGraph,
    delta: f64,
    m: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let s = graph.s();
    if m.shape() != (s, s) {
        return Err(Error::Dimension("scale matrix does not match the graph".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Config("G-Wishart degrees of freedom must be positive".into()));
    }
    let mut sigma = DMatrix::zeros(s, s);
    let mut k = DMatrix::zeros(s, s);
    for comp in graph.components() {
        let (r, sep) = (&comp.residual, &comp.separator);
        let c_size = (r.len() + sep.len()) as f64;
        let df = delta + c_size - 1.0;
        let m_rr = select(m, r, r);
        if sep.is_empty() {
            let w = sample_wishart(df, &inverse_spd(&m_rr)?, rng)?;
            let s_rr = inverse_spd(&w)?;
            for (a, &i) in r.iter().enumerate() {
                for (b, &j) in r.iter().enumerate() {
                    sigma[(i, j)] = s_rr[(a, b)];
                }
            }
        } else {
            let m_ss = select(m, sep, sep);
            let m_sr = select(m, sep, r);
            let m_ss_inv = inverse_spd(&m_ss)?;
            let m_rs_cond = &m_rr - m_sr.transpose() * &m_ss_inv * &m_sr;
            let w = sample_wishart(df, &inverse_spd(&m_rs_cond)?, rng)?;
            let s_cond = inverse_spd(&w)?;
            let l_u = cholesky(&m_ss_inv)?.l();
            let l_v = cholesky(&s_cond)?.l();
            let z = DMatrix::from_fn(sep.len(), r.len(), |_, _| standard_normal(rng));
            let a = &m_ss_inv * &m_sr + l_u * z * l_v.transpose();
            let s_ss = select(&sigma, sep, sep);
            let s_sr = &s_ss * &a;
            let s_rr = &s_cond + a.transpose() * &s_ss * &a;
            for (x, &i) in sep.iter().enumerate() {
                for (y, &j) in r.iter().enumerate() {
                    sigma[(i, j)] = s_sr[(x, y)];
                    sigma[(j, i)] = s_sr[(x, y)];
                }
            }
            for (x, &i) in r.iter().enumerate() {
                for (y, &j) in r.iter().enumerate() {
                    sigma[(i, j)] = s_rr[(x, y)];
                }
            }
            let s_inv = inverse_spd(&s_ss)?;
            for (x, &i) in sep.iter().enumerate() {
                for (y, &j) in sep.iter().enumerate() {
                    k[(i, j)] -= s_inv[(x, y)];
                }
            }
        }
        let mut clique: Vec<usize> = sep.iter().chain(r.iter()).copied().collect();
        clique.sort_unstable();
        let c_inv = inverse_spd(&select(&sigma, &clique, &clique))?;
        for (x, &i) in clique.iter().enumerate() {
            for (y, &j) in clique.iter().enumerate() {
                k[(i, j)] += c_inv[(x, y)];
            }
        }
    }
    // Exact structural zeros and symmetry.
    for i in 0..s {
        for j in 0..s {
            if i != j && !graph.has_edge(i, j) {
                k[(i, j)] = 0.0;
            }
        }
    }
    Ok((&k + k.transpose()) * 0.5)
}

/// Generates SNPs, coefficients and correlated noise from a recipe.
pub fn simulate_eqtl(recipe: &SimulationRecipe) -> Result<SimulatedData> {
    let (n, p, s) = (recipe.n, recipe.p(), recipe.s());
    if recipe.graph_true.s() != s {
        return Err(Error::Dimension("graph and Γ disagree on s".into()));
    }
    let mut rng = RngStream::new(recipe.seed, 0);
    let (lo, hi) = recipe.maf_range;
    let freqs: Vec<f64> = (0..p).map(|_| rng.random_range(lo..hi)).collect();
    let x = DMatrix::from_fn(n, p, |_, j| {
        (rng.random::<f64>() < freqs[j]) as u8 as f64 + (rng.random::<f64>() < freqs[j]) as u8 as f64
    });
    let b = DMatrix::from_fn(p, s, |j, k| {
        let v = recipe.beta_sd * standard_normal(&mut rng);
        if recipe.gamma_true.get(j, k) {
            v
        } else {
            0.0
        }
    });
    let u_tilde = DMatrix::from_fn(n, s, |_, _| recipe.noise_sd * standard_normal(&mut rng));
    let m = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 } else { recipe.scale_offdiag });
    let precision = sample_gwishart_decomposable(&recipe.graph_true, recipe.delta, &m, &mut rng)?;
    let cov = inverse_spd(&precision)?;
    let upper = cholesky(&cov)?.l().transpose();
    let u = &u_tilde * upper;
    let mut b = b;
    let mut signal = &x * &b;
    let raw = empirical_snr(&signal, &u);
    if let Some(target) = recipe.target_snr.filter(|_| raw > 0.0) {
        let c = (target / raw).sqrt();
        b *= c;
        signal *= c;
    }
    let y = &signal + &u;
    Ok(SimulatedData {
        dataset: Dataset::new(y, x, None)?,
        snr: empirical_snr(&signal, &u),
        b_true: b,
        gamma_true: recipe.gamma_true.clone(),
        graph_true: recipe.graph_true.clone(),
        precision,
    })
}

/// MRF edges linking, within each group, every pair of flattened indicators
/// `j + k·p` with `j` in the predictor set and `k` in the response set.
/// Duplicate edges across groups are merged; all weights are 1.
pub fn build_mrf_graph(groups: &[(Vec<usize>, Vec<usize>)], p: usize, s: usize) -> Result<Vec<MrfEdge>> {
    let mut set = std::collections::BTreeSet::new();
    for (preds, resps) in groups {
        let mut nodes = Vec::new();
        for &k in resps {
            if k >= s {
                return Err(Error::OutOfRange { index: k, limit: s });
            }
            for &j in preds {
                if j >= p {
                    return Err(Error::OutOfRange { index: j, limit: p });
                }
                nodes.push(j + k * p);
            }
        }
        nodes.sort_unstable();
        nodes.dedup();
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                set.insert((i, j));
            }
        }
    }
    Ok(set.into_iter().map(|(i, j)| MrfEdge { i, j, weight: 1.0 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quickstart_shape_and_support() {
        let sim = simulate_quickstart(1);
        assert_eq!(sim.dataset.n(), 10);
        assert_eq!(sim.dataset.p(), 15);
        assert_eq!(sim.dataset.s(), 3);
        assert_eq!(sim.b_true.iter().filter(|&&v| v != 0.0).count(), 6);
        assert_eq!(sim.gamma_true.count(), 6);
    }

    #[test]
    fn mrf_builder_counts() {
        // predictors {2,3} × responses {1,2} and {1,4} × {3}, 1-based
        let e = build_mrf_graph(&[(vec![1, 2], vec![0, 1]), (vec![0, 3], vec![2])], 15, 3).unwrap();
        assert_eq!(e.len(), 7);
        assert!(build_mrf_graph(&[(vec![0], vec![0])], 15, 3).unwrap().is_empty());
        assert!(build_mrf_graph(&[(vec![20], vec![0])], 15, 3).is_err());
    }

    #[test]
    fn gwishart_zero_pattern() {
        let g = DecomposableGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.9 });
        let mut rng = RngStream::new(4, 0);
        for _ in 0..100 {
            let k = sample_gwishart_decomposable(&g, 2.0, &m, &mut rng).unwrap();
            assert_eq!(k[(0, 2)], 0.0);
            assert_eq!(k[(0, 3)], 0.0);
            assert_eq!(k[(2, 3)], 0.0);
            assert!(cholesky(&k).is_ok());
        }
    }

    #[test]
    fn empty_gamma_gives_pure_noise() {
        let mut r = SimulationRecipe::desk(3);
        r.gamma_true = Indicators::zeros(50, 5);
        let sim = simulate_eqtl(&r).unwrap();
        assert_eq!(sim.snr, 0.0);
    }
}
