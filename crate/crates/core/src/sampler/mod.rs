//! Evolutionary stochastic search: several tempered chains, each updated by a
//! Metropolis-within-Gibbs sweep, with exchange and crossover moves between
//! them. Only the untempered main chain (slot 0) is recorded.

mod moves;
mod output;
mod state;
mod tempering;

use rand::Rng;
use rayon::prelude::*;

pub use moves::{
    fitted_values, propose_mc3, refresh_hrr_coefficients, sweep, BanditStats, Chain, ColumnProposal,
    MoveStats, Tuning,
};
pub use output::{McmcOutput, PointwiseAccumulator, PointwiseSummary, StoredDraws};
pub use state::{mle_screen, ChainState, CovarianceModel, SamplerContext};
pub use tempering::{
    adapt_temperature, crossover_log_ratio, crossover_move, exchange_accepts, exchange_log_ratio,
    exchange_move, swap_columns, TemperatureController, CROSSOVER_RATE,
};

use crate::error::{Error, Result};
use crate::model::{Dataset, GammaInit, Indicators, ValidatedSpec};
use crate::rng::RngStream;

/// Fraction of indicators switched on by random initialisation.
pub const RANDOM_INIT_RATE: f64 = 0.1;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for chain sweeps; `None` reads `SUR_ESS_THREADS`, then
    /// falls back to 1.
    pub threads: Option<usize>,
    /// Print a progress line to stderr every this many iterations.
    pub progress_interval: Option<usize>,
    /// Keep per-draw snapshots of the main chain.
    pub keep_draws: bool,
}

pub fn resolve_threads(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var("SUR_ESS_THREADS").ok()?.parse().ok())
        .unwrap_or(1)
        .max(1)
}

/// Starting indicators for one chain.
pub fn initial_gamma(init: GammaInit, data: &Dataset, rng: &mut RngStream) -> Indicators {
    let (p, s) = (data.p(), data.s());
    match init {
        GammaInit::Zeros => Indicators::zeros(p, s),
        GammaInit::Ones => Indicators::ones(p, s),
        GammaInit::Mle => mle_screen(data),
        GammaInit::Random => Indicators::from_fn(p, s, |_, _| rng.random::<f64>() < RANDOM_INIT_RATE),
    }
}

/// Builds the chains of a run: slot 0 at temperature 1, the rest at the
/// initial shared temperature.
pub fn initial_chains(spec: &ValidatedSpec, data: &Dataset, ctx: &SamplerContext) -> Result<Vec<Chain>> {
    let sp = &spec.spec;
    (0..sp.n_chains)
        .map(|i| {
            let mut rng = RngStream::for_chain(sp.seed, i);
            let gamma = initial_gamma(sp.gamma_init, data, &mut rng);
            Ok(Chain {
                state: ChainState::new(ctx, gamma)?,
                temperature: if i == 0 { 1.0 } else { TemperatureController::INITIAL },
                rng,
                tuning: Tuning::new(sp.gamma_sampler, data.p(), data.s()),
                stats: MoveStats::default(),
            })
        })
        .collect()
}

fn pair_mut(chains: &mut [Chain], a: usize, b: usize) -> (&mut Chain, &mut Chain) {
    debug_assert!(a < b);
    let (lo, hi) = chains.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn random_pair(n: usize, rng: &mut RngStream) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b), a.max(b))
}

pub fn run(spec: &ValidatedSpec, data: &Dataset) -> Result<McmcOutput> {
    run_with(spec, data, &RunOptions::default())
}

pub fn run_with(spec: &ValidatedSpec, data: &Dataset, opts: &RunOptions) -> Result<McmcOutput> {
    let ctx = SamplerContext::new(spec, data)?;
    let sp = &spec.spec;
    let mut chains = initial_chains(spec, data, &ctx)?;
    let mut master = RngStream::master(sp.seed);
    let mut controller = TemperatureController::new(TemperatureController::INITIAL);
    let mut out = McmcOutput::new(&ctx, opts.keep_draws);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(opts.threads))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let n = chains.len();

    for it in 0..sp.n_iter {
        let burn_in = it < sp.burnin;
        pool.install(|| {
            chains
                .par_iter_mut()
                .map(|c| sweep(c, &ctx, burn_in))
                .collect::<Result<Vec<()>>>()
        })?;

        if n > 1 {
            let (a, b) = if master.random::<bool>() {
                (0, 1 + master.random_range(0..n - 1))
            } else {
                random_pair(n, &mut master)
            };
            let (ca, cb) = pair_mut(&mut chains, a, b);
            let accepted = exchange_move(ca, cb, &mut master);
            if a == 0 {
                out.exchange_attempts += 1;
                out.exchange_accepts += accepted as u64;
                if let Some(t) = controller.record(accepted, burn_in) {
                    for c in chains.iter_mut().skip(1) {
                        c.temperature = t;
                    }
                }
            }
            if master.random::<f64>() < CROSSOVER_RATE {
                let (a, b) = random_pair(n, &mut master);
                let (ca, cb) = pair_mut(&mut chains, a, b);
                out.crossover_attempts += 1;
                out.crossover_accepts += crossover_move(ca, cb, &ctx, &mut master)? as u64;
            }
        }

        let main = &mut chains[0];
        if !burn_in {
            out.record(main, &ctx)?;
        }
        let log_p = main.state.log_posterior(&ctx)?;
        out.log_posterior.push(log_p);
        out.model_size.push(main.state.model_size());
        out.temperature_trace.push(chains.get(1).map_or(1.0, |c| c.temperature));

        if let Some(every) = opts.progress_interval.filter(|&e| e > 0) {
            if (it + 1) % every == 0 {
                let rate = if out.exchange_attempts > 0 {
                    out.exchange_accepts as f64 / out.exchange_attempts as f64
                } else {
                    0.0
                };
                eprintln!(
                    "iter {:>8}  logP {:>14.4}  size {:>5}  temp {:.3}  exch {:.3}",
                    it + 1,
                    log_p,
                    chains[0].state.model_size(),
                    out.temperature_trace[it],
                    rate
                );
            }
        }
    }
    out.gamma_attempts = chains[0].stats.gamma_attempts;
    out.gamma_accepts = chains[0].stats.gamma_accepts;
    Ok(out)
}
