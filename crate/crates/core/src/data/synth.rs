//! Seeded synthetic sessions.
//!
//! The mid price (in price steps) is a slowly tethered random walk with two
//! embedded, partially predictable components, both scaled by the signal
//! strength `beta`:
//!
//! * momentum: a persistent latent trend `m` (AR(1), unit variance, time scale
//!   `momentum_rows`) adds a drift of `sigma * beta * m / sqrt(momentum_rows)`
//!   per row;
//! * mean reversion: a transient excursion `j` (AR(1), unit variance, time
//!   scale `reversion_rows`) is added to the mid with amplitude
//!   `sigma * beta * sqrt(reversion_rows)`, so recent swings tend to unwind.
//!
//! Displayed levels sit at consecutive ticks around the rounded value. Each
//! level holds a Poisson(`mean_size`) size, redrawn with probability
//! `event_rate` per row; size removed at the touch by a redraw is reported as
//! an execution, as are levels swept by a moving price. A resting order at the
//! deepest level of one side pins the size-weighted average price to the
//! unrounded value, so with `beta = 0` the ten-second SWA change is a pure
//! random-walk increment, independent of the trailing window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Day, ExecutionEvent};
use crate::book::{BookSeriesBuilder, LevelEntry, Price, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Rows (centiseconds) per session.
    pub session_rows: usize,
    /// Starting mid price in ticks of $0.0001.
    pub base_price: u64,
    /// Ticks between adjacent price levels ($0.01 = 100).
    pub tick_size: u64,
    /// Bid-ask spread in price steps.
    pub spread: u64,
    /// Pull of the mid back to its opening level, per row.
    pub kappa: f64,
    /// Mid volatility in price steps per sqrt(row).
    pub sigma: f64,
    /// Mean size per level, in shares.
    pub mean_size: f64,
    /// Probability per level and row that the level's size is redrawn.
    pub event_rate: f64,
    /// Strength of the embedded predictable components.
    pub beta: f64,
    pub momentum_rows: f64,
    pub reversion_rows: f64,
    pub levels: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            session_rows: 60_000,
            base_price: 90_000,
            tick_size: 100,
            spread: 1,
            kappa: 1e-5,
            sigma: 0.03,
            mean_size: 100.0,
            event_rate: 0.02,
            beta: 1.0,
            momentum_rows: 4_000.0,
            reversion_rows: 1_000.0,
            levels: crate::book::DEFAULT_LEVELS,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |what: &str| Err(DataError::InvalidParams(what.to_string()));
        if self.session_rows == 0 {
            return bad("session_rows must be positive");
        }
        if self.levels == 0 {
            return bad("levels must be positive");
        }
        if self.tick_size == 0 || self.spread == 0 {
            return bad("tick_size and spread must be positive");
        }
        let reach = (self.levels as u64 + self.spread) * self.tick_size;
        if self.base_price <= 4 * reach {
            return bad("base_price too close to zero for the requested depth");
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("sigma", self.sigma),
            ("event_rate", self.event_rate),
            ("beta", self.beta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if self.kappa >= 1.0 || self.event_rate > 1.0 {
            return bad("kappa must be < 1 and event_rate <= 1");
        }
        if !(self.mean_size > 0.0) || !(self.momentum_rows >= 1.0) || !(self.reversion_rows >= 1.0) {
            return bad("mean_size must be positive and time scales at least one row");
        }
        Ok(())
    }

    /// Same process with a different seed.
    pub fn with_seed(&self, seed: u64) -> SynthParams {
        SynthParams { seed, ..self.clone() }
    }
}

fn draw_size<R: Rng>(rng: &mut R, poisson: &Poisson<f64>) -> u32 {
    (poisson.sample(rng) as u32).max(1)
}

/// Side and size of the deepest-level order that moves the SWA of the
/// visible book to `value`, in price steps above the best bid.
fn pin_order(bid_sizes: &[u32], ask_sizes: &[u32], spread: i64, value: f64, cap: f64) -> (Side, u32) {
    let l = bid_sizes.len() as i64;
    let mut total = 0.0;
    let mut moment = 0.0;
    for (k, (&b, &a)) in bid_sizes.iter().zip(ask_sizes).enumerate() {
        let k = k as f64;
        total += (b + a) as f64;
        moment += -k * b as f64 + (spread as f64 + k) * a as f64;
    }
    let gap = value * total - moment;
    let (side, far) = if gap >= 0.0 {
        (Side::Ask, (spread + l - 1) as f64)
    } else {
        (Side::Bid, -(l - 1) as f64)
    };
    let dist = (far - value).abs();
    let q = if dist > 0.0 { gap.abs() / dist } else { cap };
    (side, q.min(cap).round() as u32)
}

/// Generates one session.
pub fn generate_day(params: &SynthParams) -> Result<Day, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let poisson = Poisson::new(params.mean_size).map_err(|e| DataError::InvalidParams(format!("mean_size: {e}")))?;
    let l = params.levels;
    let n = params.session_rows;
    let step = params.tick_size as i64;

    let phi_m = 1.0 - 1.0 / params.momentum_rows;
    let phi_j = 1.0 - 1.0 / params.reversion_rows;
    let innov_m = (1.0 - phi_m * phi_m).sqrt();
    let innov_j = (1.0 - phi_j * phi_j).sqrt();
    let drift_scale = params.sigma * params.beta / params.momentum_rows.sqrt();
    let transient_scale = params.sigma * params.beta * params.reversion_rows.sqrt();

    let mut trend: f64 = rng.sample(StandardNormal);
    let mut transient: f64 = rng.sample(StandardNormal);
    let mut walk = 0.0f64;
    let half_spread = params.spread as f64 / 2.0;
    let bid_step =
        |walk: f64, transient: f64| -> i64 { (walk + transient_scale * transient - half_spread).round() as i64 };

    // sizes per level, level 1 first
    let mut bid_sizes: Vec<u32> = (0..l).map(|_| draw_size(&mut rng, &poisson)).collect();
    let mut ask_sizes: Vec<u32> = (0..l).map(|_| draw_size(&mut rng, &poisson)).collect();
    let mut best_bid = bid_step(walk, transient);

    let base = params.base_price as i64;
    let price_of = |steps: i64| -> Result<Price, DataError> {
        let ticks = base + steps * step;
        if ticks <= 0 {
            return Err(DataError::InvalidParams(
                "price walk reached zero; raise base_price or lower sigma".into(),
            ));
        }
        Ok(Price::new(ticks as u64)?)
    };

    let mut builder = BookSeriesBuilder::new(l, 0)?.with_capacity(n);
    let mut events = Vec::new();
    let mut bids = Vec::with_capacity(l);
    let mut asks = Vec::with_capacity(l);
    let spread = params.spread as i64;
    let pin_cap = (params.mean_size * l as f64 * 10.0).max(1.0);

    for row in 0..n {
        if row > 0 {
            let eps: f64 = rng.sample(StandardNormal);
            walk += -params.kappa * walk + params.sigma * eps + drift_scale * trend;
            let xi_m: f64 = rng.sample(StandardNormal);
            let xi_j: f64 = rng.sample(StandardNormal);
            trend = phi_m * trend + innov_m * xi_m;
            transient = phi_j * transient + innov_j * xi_j;

            let new_bid = bid_step(walk, transient);
            let moved = new_bid - best_bid;
            if moved > 0 {
                // asks at the old prices the bid now reaches were taken out
                let gone = (moved as usize).min(l);
                for k in 0..gone {
                    events.push(ExecutionEvent {
                        row,
                        price: price_of(best_bid + spread + k as i64)?,
                        size: ask_sizes[k],
                        side: Side::Ask,
                    });
                }
                ask_sizes.drain(..gone);
                while ask_sizes.len() < l {
                    ask_sizes.push(draw_size(&mut rng, &poisson));
                }
                for _ in 0..gone {
                    bid_sizes.insert(0, draw_size(&mut rng, &poisson));
                }
                bid_sizes.truncate(l);
            } else if moved < 0 {
                let gone = ((-moved) as usize).min(l);
                for k in 0..gone {
                    events.push(ExecutionEvent {
                        row,
                        price: price_of(best_bid - k as i64)?,
                        size: bid_sizes[k],
                        side: Side::Bid,
                    });
                }
                bid_sizes.drain(..gone);
                while bid_sizes.len() < l {
                    bid_sizes.push(draw_size(&mut rng, &poisson));
                }
                for _ in 0..gone {
                    ask_sizes.insert(0, draw_size(&mut rng, &poisson));
                }
                ask_sizes.truncate(l);
            }
            best_bid = new_bid;

            if params.event_rate > 0.0 {
                for (side, sizes) in [(Side::Bid, &mut bid_sizes), (Side::Ask, &mut ask_sizes)] {
                    for k in 0..l {
                        if rng.random::<f64>() < params.event_rate {
                            let fresh = draw_size(&mut rng, &poisson);
                            if k == 0 && fresh < sizes[0] {
                                let price = match side {
                                    Side::Bid => price_of(best_bid)?,
                                    Side::Ask => price_of(best_bid + spread)?,
                                };
                                events.push(ExecutionEvent {
                                    row,
                                    price,
                                    size: sizes[0] - fresh,
                                    side,
                                });
                            }
                            sizes[k] = fresh;
                        }
                    }
                }
            }
        }

        let (pin_side, pin) = pin_order(
            &bid_sizes,
            &ask_sizes,
            spread,
            walk + transient_scale * transient - best_bid as f64,
            pin_cap,
        );
        bids.clear();
        asks.clear();
        for k in 0..l {
            let extra = |side| if k == l - 1 && side == pin_side { pin } else { 0 };
            bids.push(LevelEntry::new(
                price_of(best_bid - k as i64)?,
                bid_sizes[k] + extra(Side::Bid),
            ));
            asks.push(LevelEntry::new(
                price_of(best_bid + spread + k as i64)?,
                ask_sizes[k] + extra(Side::Ask),
            ));
        }
        builder.push(&bids, &asks)?;
    }
    Ok(Day::new(builder.finish(), events))
}

/// Generates `train_days + test_days` sessions with per-day seeds derived
/// from `params.seed`.
pub fn generate_dataset(params: &SynthParams, train_days: usize, test_days: usize) -> Result<Dataset, DataError> {
    params.validate()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..train_days + test_days).map(|_| seeder.random()).collect();
    let days = seeds
        .iter()
        .map(|&s| generate_day(&params.with_seed(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut days = days.into_iter();
    let train = days.by_ref().take(train_days).collect();
    let test = days.collect();
    Ok(Dataset {
        train,
        test,
        params: Some(params.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::clean_swa;

    fn small() -> SynthParams {
        SynthParams {
            session_rows: 3_000,
            seed: 5,
            ..SynthParams::default()
        }
    }

    #[test]
    fn same_seed_same_day() {
        let a = generate_day(&small()).unwrap();
        let b = generate_day(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_day(&small().with_seed(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_market_is_constant() {
        let p = SynthParams {
            sigma: 0.0,
            event_rate: 0.0,
            ..small()
        };
        let day = generate_day(&p).unwrap();
        let first = day.series.row(0);
        assert!(day
            .series
            .rows()
            .all(|r| r.prices() == first.prices() && r.sizes() == first.sizes()));
        assert!(day.events.is_empty());
    }

    #[test]
    fn rows_follow_the_level_grid() {
        let day = generate_day(&small()).unwrap();
        for r in day.series.rows() {
            let spread = r.best_ask().ticks() - r.best_bid().ticks();
            assert_eq!(spread, 100);
            for w in r.prices()[..10].windows(2) {
                assert_eq!(w[0].ticks() - w[1].ticks(), 100);
            }
        }
        // executions are sorted and reference rows of the day
        assert!(day.events.windows(2).all(|w| w[0].row <= w[1].row));
        assert!(day.events.iter().all(|e| e.row < day.series.len() && e.size > 0));
        assert!(!day.events.is_empty());
        let swa = clean_swa(&day.series);
        assert!(swa.iter().all(|v| (v - 9.0).abs() < 0.5));
    }

    #[test]
    fn price_sweeps_emit_executions_at_the_swept_level() {
        let p = SynthParams {
            sigma: 0.5,
            event_rate: 0.0,
            ..small()
        };
        let day = generate_day(&p).unwrap();
        for e in &day.events {
            let before = day.series.row(e.row - 1);
            let after = day.series.row(e.row);
            match e.side {
                Side::Bid => assert!(e.price <= before.best_bid() && e.price > after.best_bid()),
                Side::Ask => assert!(e.price >= before.best_ask() && e.price < after.best_ask()),
            }
        }
    }

    #[test]
    fn swa_changes_are_uncorrelated_without_signal() {
        let p = SynthParams {
            beta: 0.0,
            session_rows: 200_000,
            ..small()
        };
        let swa = clean_swa(&generate_day(&p).unwrap().series);
        let h = 500;
        let d: Vec<f64> = (0..swa.len() / h - 1).map(|i| swa[(i + 1) * h] - swa[i * h]).collect();
        let (mut xy, mut xx) = (0.0, 0.0);
        for w in d.windows(2) {
            xy += w[0] * w[1];
            xx += w[0] * w[0];
        }
        let rho = xy / xx;
        assert!(rho.abs() < 4.0 / (d.len() as f64).sqrt(), "{rho}");
        // the pin keeps the SWA on a continuum rather than the tick grid
        let on_grid = swa
            .iter()
            .filter(|v| ((*v * 200.0).round() - *v * 200.0).abs() < 1e-6)
            .count();
        assert!(on_grid < swa.len() / 10);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(generate_day(&SynthParams { sigma: -1.0, ..small() }).is_err());
        assert!(generate_day(&SynthParams {
            base_price: 500,
            ..small()
        })
        .is_err());
        assert!(generate_day(&SynthParams {
            session_rows: 0,
            ..small()
        })
        .is_err());
    }
}
