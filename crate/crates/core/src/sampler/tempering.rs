use rand::Rng;

use super::moves::Chain;
use super::state::{ChainState, SamplerContext};
use crate::dist::metropolis_accept;
use crate::error::Result;

/// Probability of attempting a crossover in an iteration.
pub const CROSSOVER_RATE: f64 = 0.1;

/// `log` of the exchange acceptance ratio for swapping the states held at
/// temperatures `t_a` and `t_b`.
pub fn exchange_log_ratio(t_a: f64, t_b: f64, log_l_a: f64, log_l_b: f64) -> f64 {
    let d = 1.0 / t_a - 1.0 / t_b;
    if d == 0.0 {
        return 0.0;
    }
    d * (log_l_b - log_l_a)
}

/// Accept/reject an exchange of states between two temperature slots.
pub fn exchange_accepts<R: Rng + ?Sized>(t_a: f64, t_b: f64, log_l_a: f64, log_l_b: f64, rng: &mut R) -> bool {
    metropolis_accept(rng, exchange_log_ratio(t_a, t_b, log_l_a, log_l_b))
}

/// Swaps the states of two chains (temperatures, streams and tuning stay
/// with their slots) when the tempered ratio accepts.
pub fn exchange_move<R: Rng + ?Sized>(a: &mut Chain, b: &mut Chain, rng: &mut R) -> bool {
    let ok = exchange_accepts(
        a.temperature,
        b.temperature,
        a.state.log_likelihood,
        b.state.log_likelihood,
        rng,
    );
    if ok {
        std::mem::swap(&mut a.state, &mut b.state);
    }
    ok
}

/// Swaps the `(γ_k, β_k)` columns listed in `columns` between two states and
/// refreshes their caches.
pub fn swap_columns(a: &ChainState, b: &ChainState, columns: &[usize], ctx: &SamplerContext) -> Result<(ChainState, ChainState)> {
    let mut na = a.clone();
    let mut nb = b.clone();
    for &k in columns {
        na.gamma.column_mut(k).copy_from_slice(b.gamma.column(k));
        nb.gamma.column_mut(k).copy_from_slice(a.gamma.column(k));
        na.beta.column_mut(k).copy_from(&b.beta.column(k));
        nb.beta.column_mut(k).copy_from(&a.beta.column(k));
    }
    na.refresh(ctx)?;
    nb.refresh(ctx)?;
    Ok((na, nb))
}

/// Log acceptance ratio of replacing `(a, b)` by `(na, nb)` under the two
/// tempered targets.
pub fn crossover_log_ratio(
    a: &ChainState,
    b: &ChainState,
    na: &ChainState,
    nb: &ChainState,
    t_a: f64,
    t_b: f64,
    ctx: &SamplerContext,
) -> Result<f64> {
    let (la, lb) = (1.0 / t_a, 1.0 / t_b);
    Ok(na.coefficient_log_target(ctx, la)? + nb.coefficient_log_target(ctx, lb)?
        - a.coefficient_log_target(ctx, la)?
        - b.coefficient_log_target(ctx, lb)?)
}

/// Uniform-subset column crossover between two chains. Returns whether the
/// proposal was accepted (an empty subset counts as accepted).
pub fn crossover_move<R: Rng + ?Sized>(a: &mut Chain, b: &mut Chain, ctx: &SamplerContext, rng: &mut R) -> Result<bool> {
    let columns: Vec<usize> = (0..ctx.s()).filter(|_| rng.random::<bool>()).collect();
    if columns.is_empty() {
        return Ok(true);
    }
    let (na, nb) = swap_columns(&a.state, &b.state, &columns, ctx)?;
    let log_ratio = crossover_log_ratio(&a.state, &b.state, &na, &nb, a.temperature, b.temperature, ctx)?;
    let ok = metropolis_accept(rng, log_ratio);
    if ok {
        a.state = na;
        b.state = nb;
    }
    Ok(ok)
}

/// Shared temperature of the auxiliary chains, adapted during burn-in from
/// windows of exchange attempts that involve the main chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureController {
    pub temperature: f64,
    attempts: u32,
    accepts: u32,
}

impl TemperatureController {
    pub const WINDOW: u32 = 50;
    pub const INITIAL: f64 = 2.0;

    pub fn new(temperature: f64) -> Self {
        Self {
            temperature,
            attempts: 0,
            accepts: 0,
        }
    }

    /// Records one main-chain exchange attempt; returns the new temperature
    /// when a window closes.
    pub fn record(&mut self, accepted: bool, burn_in: bool) -> Option<f64> {
        if !burn_in {
            return None;
        }
        self.attempts += 1;
        self.accepts += accepted as u32;
        if self.attempts < Self::WINDOW {
            return None;
        }
        let rate = self.accepts as f64 / self.attempts as f64;
        self.attempts = 0;
        self.accepts = 0;
        self.temperature = adapt_temperature(rate, self.temperature);
        Some(self.temperature)
    }
}

/// `< 0.20` acceptance cools by 10% (never below 1), `> 0.35` heats by 10%.
pub fn adapt_temperature(rate: f64, t: f64) -> f64 {
    if rate < 0.20 {
        (t * 0.9).max(1.0)
    } else if rate > 0.35 {
        t * 1.1
    } else {
        t
    }
}
