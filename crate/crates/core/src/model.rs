//! Data model shared by every other module: the dataset, the selection
//! indicator matrix, model configuration and hyperparameter resolution.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Responses `Y` (n×s), selectable predictors `X` (n×p) and mandatory
/// predictors `X0` (n×p0, possibly empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    x0: DMatrix<f64>,
    y_names: Vec<String>,
    x_names: Vec<String>,
    x0_names: Vec<String>,
}

fn default_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

impl Dataset {
    /// Builds a dataset with generated column names (`Y1.., X1.., X0_1..`).
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, x0: Option<DMatrix<f64>>) -> Result<Self> {
        let n = y.nrows();
        let x0 = x0.unwrap_or_else(|| DMatrix::zeros(n, 0));
        let y_names = default_names("Y", y.ncols());
        let x_names = default_names("X", x.ncols());
        let x0_names = default_names("X0_", x0.ncols());
        Self::with_names(y, x, x0, y_names, x_names, x0_names)
    }

    pub fn with_names(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        x0: DMatrix<f64>,
        y_names: Vec<String>,
        x_names: Vec<String>,
        x0_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.nrows();
        if x.nrows() != n || x0.nrows() != n {
            return Err(Error::Dimension(format!(
                "row counts differ: Y has {n}, X has {}, X0 has {}",
                x.nrows(),
                x0.nrows()
            )));
        }
        if y_names.len() != y.ncols() || x_names.len() != x.ncols() || x0_names.len() != x0.ncols()
        {
            return Err(Error::Dimension("column name count does not match matrix width".into()));
        }
        for (label, m) in [("Y", &y), ("X", &x), ("X0", &x0)] {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "{label} contains a non-finite value at entry {pos}; missing values are not supported"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in x_names.iter().chain(x0_names.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate predictor column name '{name}'")));
            }
        }
        Ok(Self {
            y,
            x,
            x0,
            y_names,
            x_names,
            x0_names,
        })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn x0(&self) -> &DMatrix<f64> {
        &self.x0
    }
    pub fn y_names(&self) -> &[String] {
        &self.y_names
    }
    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }
    pub fn x0_names(&self) -> &[String] {
        &self.x0_names
    }
    pub fn n(&self) -> usize {
        self.y.nrows()
    }
    pub fn s(&self) -> usize {
        self.y.ncols()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn p0(&self) -> usize {
        self.x0.ncols()
    }

    /// `[X0, X]`, the design used internally (mandatory columns first).
    pub fn full_design(&self) -> DMatrix<f64> {
        let (n, p0, p) = (self.n(), self.p0(), self.p());
        let mut d = DMatrix::zeros(n, p0 + p);
        d.columns_mut(0, p0).copy_from(&self.x0);
        d.columns_mut(p0, p).copy_from(&self.x);
        d
    }
}

/// Binary p×s selection matrix Γ, stored column-major so that the flat
/// index `j + k·p` matches vec(Γ).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Indicators {
    p: usize,
    s: usize,
    data: Vec<bool>,
}

impl Indicators {
    pub fn zeros(p: usize, s: usize) -> Self {
        Self {
            p,
            s,
            data: vec![false; p * s],
        }
    }

    pub fn ones(p: usize, s: usize) -> Self {
        Self {
            p,
            s,
            data: vec![true; p * s],
        }
    }

    pub fn from_fn(p: usize, s: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = Self::zeros(p, s);
        for k in 0..s {
            for j in 0..p {
                g.data[j + k * p] = f(j, k);
            }
        }
        g
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn s(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn flat_index(&self, j: usize, k: usize) -> usize {
        j + k * self.p
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> bool {
        self.data[j + k * self.p]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, value: bool) {
        self.data[j + k * self.p] = value;
    }

    #[inline]
    pub fn flip(&mut self, j: usize, k: usize) {
        let i = j + k * self.p;
        self.data[i] = !self.data[i];
    }

    pub fn as_flat(&self) -> &[bool] {
        &self.data
    }

    pub fn column(&self, k: usize) -> &[bool] {
        &self.data[k * self.p..(k + 1) * self.p]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [bool] {
        &mut self.data[k * self.p..(k + 1) * self.p]
    }

    /// Indices of selected predictors in column `k`, ascending.
    pub fn selected(&self, k: usize) -> Vec<usize> {
        self.column(k)
            .iter()
            .enumerate()
            .filter_map(|(j, &g)| g.then_some(j))
            .collect()
    }

    pub fn column_count(&self, k: usize) -> usize {
        self.column(k).iter().filter(|&&g| g).count()
    }

    pub fn row_count(&self, j: usize) -> usize {
        (0..self.s).filter(|&k| self.get(j, k)).count()
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&g| g).count()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.s, |j, k| if self.get(j, k) { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovariancePrior {
    /// Independent inverse-gamma variances (HRR).
    Ig,
    /// Inverse Wishart (dense SUR).
    Iw,
    /// Hyper-inverse Wishart over a decomposable response graph (sparse SUR).
    Hiw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GammaPrior {
    Hierarchical,
    Hotspot,
    Mrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GammaSampler {
    Mc3,
    Bandit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GammaInit {
    Zeros,
    Ones,
    Mle,
    Random,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($variant:path => [$canonical:literal $(, $alias:literal)*]),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $(
                    if s.eq_ignore_ascii_case($canonical) $(|| s.eq_ignore_ascii_case($alias))* {
                        return Ok($variant);
                    }
                )+
                Err(Error::Config(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $($variant => f.write_str($canonical),)+
                }
            }
        }
    };
}

keyword_enum!(CovariancePrior, "covariancePrior", {
    CovariancePrior::Ig => ["IG", "HRR"],
    CovariancePrior::Iw => ["IW", "dSUR"],
    CovariancePrior::Hiw => ["HIW", "SSUR"],
});

keyword_enum!(GammaPrior, "gammaPrior", {
    GammaPrior::Hierarchical => ["hierarchical", "B", "bernoulli"],
    GammaPrior::Hotspot => ["hotspot", "H"],
    GammaPrior::Mrf => ["MRF", "M"],
});

keyword_enum!(GammaSampler, "gammaSampler", {
    GammaSampler::Mc3 => ["MC3"],
    GammaSampler::Bandit => ["bandit"],
});

keyword_enum!(GammaInit, "gammaInit", {
    GammaInit::Zeros => ["0", "zeros"],
    GammaInit::Ones => ["1", "ones"],
    GammaInit::Mle => ["MLE"],
    GammaInit::Random => ["R", "random"],
});

/// One undirected MRF edge between two flattened indicator indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

macro_rules! hyperparameters {
    ($($field:ident),+ $(,)?) => {
        /// Fully resolved prior hyperparameters.
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct Hyperparameters {
            $(pub $field: f64,)+
        }

        /// User-supplied hyperparameters; `None` means "use the default".
        #[derive(Debug, Clone, Copy, Default, PartialEq)]
        pub struct HyperparameterOverrides {
            $(pub $field: Option<f64>,)+
        }

        impl Hyperparameters {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),+];

            pub fn entries(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($field), self.$field)),+]
            }

            fn fill(o: &HyperparameterOverrides, d: &Hyperparameters) -> Self {
                Self { $($field: o.$field.unwrap_or(d.$field),)+ }
            }
        }

        impl HyperparameterOverrides {
            pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
                match name {
                    $(stringify!($field) => self.$field = Some(value),)+
                    other => return Err(Error::Config(format!("unknown hyperparameter '{other}'"))),
                }
                Ok(())
            }

            fn from_resolved(h: &Hyperparameters) -> Self {
                Self { $($field: Some(h.$field),)+ }
            }
        }
    };
}

hyperparameters!(
    a_w, b_w, a_sigma, b_sigma, a_omega, b_omega, a_o, b_o, a_pi, b_pi, nu, a_tau, b_tau, a_eta,
    b_eta, mrf_d, mrf_e,
);

impl Hyperparameters {
    /// Defaults for a problem with `p` selectable predictors and `s` responses.
    pub fn defaults(p: usize, s: usize) -> Self {
        let ps = (p * s) as f64;
        Self {
            a_w: 2.0,
            b_w: 5.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
            a_omega: 2.0,
            b_omega: (ps - 2.0).max(1.0),
            a_o: 2.0,
            b_o: (p as f64 - 2.0).max(1.0),
            a_pi: 2.0,
            b_pi: 1.0,
            nu: s as f64 + 3.0,
            a_tau: 0.1,
            b_tau: 10.0,
            a_eta: 0.1,
            b_eta: 1.0,
            mrf_d: -3.0,
            mrf_e: 0.03,
        }
    }

    fn check(&self, s: usize) -> Result<()> {
        let positive = [
            ("a_w", self.a_w),
            ("b_w", self.b_w),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_omega", self.a_omega),
            ("b_omega", self.b_omega),
            ("a_o", self.a_o),
            ("b_o", self.b_o),
            ("a_pi", self.a_pi),
            ("b_pi", self.b_pi),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidHyperparameter {
                    name,
                    requirement: "strictly positive",
                    value,
                });
            }
        }
        if !(self.nu > s as f64 + 1.0) || !self.nu.is_finite() {
            return Err(Error::InvalidHyperparameter {
                name: "nu",
                requirement: "greater than s + 1",
                value: self.nu,
            });
        }
        if !(self.mrf_e >= 0.0) || !self.mrf_e.is_finite() {
            return Err(Error::InvalidHyperparameter {
                name: "mrf_e",
                requirement: "non-negative",
                value: self.mrf_e,
            });
        }
        if !self.mrf_d.is_finite() {
            return Err(Error::InvalidHyperparameter {
                name: "mrf_d",
                requirement: "finite",
                value: self.mrf_d,
            });
        }
        Ok(())
    }
}

/// Model identity plus MCMC schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub covariance_prior: CovariancePrior,
    pub gamma_prior: GammaPrior,
    pub mrf_edges: Option<Vec<MrfEdge>>,
    pub hyperparameters: HyperparameterOverrides,
    pub n_iter: usize,
    pub burnin: usize,
    pub n_chains: usize,
    pub gamma_sampler: GammaSampler,
    pub gamma_init: GammaInit,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            covariance_prior: CovariancePrior::Hiw,
            gamma_prior: GammaPrior::Hotspot,
            mrf_edges: None,
            hyperparameters: HyperparameterOverrides::default(),
            n_iter: 10_000,
            burnin: 5_000,
            n_chains: 2,
            gamma_sampler: GammaSampler::Bandit,
            gamma_init: GammaInit::Random,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(covariance_prior: CovariancePrior, gamma_prior: GammaPrior) -> Self {
        Self {
            covariance_prior,
            gamma_prior,
            ..Self::default()
        }
    }

    /// Short model name such as `SSUR-H`.
    pub fn identity(&self) -> String {
        let c = match self.covariance_prior {
            CovariancePrior::Ig => "HRR",
            CovariancePrior::Iw => "dSUR",
            CovariancePrior::Hiw => "SSUR",
        };
        let g = match self.gamma_prior {
            GammaPrior::Hierarchical => "B",
            GammaPrior::Hotspot => "H",
            GammaPrior::Mrf => "M",
        };
        format!("{c}-{g}")
    }
}

/// A spec that passed validation, with every hyperparameter resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
}

/// Checks `spec` against `data` and fills absent hyperparameters with their
/// defaults. Applying it to an already validated spec is a no-op.
pub fn validate_spec(spec: &ModelSpec, data: &Dataset) -> Result<ValidatedSpec> {
    let (p, s) = (data.p(), data.s());
    if s == 0 {
        return Err(Error::Dimension("at least one response column is required".into()));
    }
    if p == 0 {
        return Err(Error::Dimension("at least one selectable predictor is required".into()));
    }
    if data.n() == 0 {
        return Err(Error::Dimension("dataset has no rows".into()));
    }
    if spec.n_iter == 0 {
        return Err(Error::Config("nIter must be positive".into()));
    }
    if spec.burnin >= spec.n_iter {
        return Err(Error::Burnin {
            burnin: spec.burnin,
            n_iter: spec.n_iter,
        });
    }
    if spec.n_chains == 0 {
        return Err(Error::Config("nChains must be positive".into()));
    }
    if spec.gamma_prior == GammaPrior::Mrf {
        let edges = spec.mrf_edges.as_ref().ok_or(Error::MissingMrfGraph)?;
        let limit = p * s;
        for e in edges {
            for index in [e.i, e.j] {
                if index >= limit {
                    return Err(Error::OutOfRange { index, limit });
                }
            }
            if e.i == e.j {
                return Err(Error::Config(format!("MRF edge ({}, {}) is a self-loop", e.i, e.j)));
            }
            if !e.weight.is_finite() {
                return Err(Error::Config("MRF edge weight must be finite".into()));
            }
        }
    }
    let hyper = Hyperparameters::fill(&spec.hyperparameters, &Hyperparameters::defaults(p, s));
    hyper.check(s)?;
    let mut resolved = spec.clone();
    resolved.hyperparameters = HyperparameterOverrides::from_resolved(&hyper);
    Ok(ValidatedSpec {
        spec: resolved,
        hyper,
    })
}
