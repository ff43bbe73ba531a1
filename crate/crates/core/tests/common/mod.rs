#![allow(dead_code)]

use flair::channel::{sample_channels, ChannelSet, SystemConfig};
use flair::seed::rng_for;
use flair::C64;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cn<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector(n: usize, seed: u64) -> DVector<C64> {
    let mut rng = rng_for(seed, &[0xAB]);
    DVector::from_fn(n, |_, _| cn(&mut rng))
}

pub fn random_channels(k: usize, n: usize, seed: u64) -> Vec<DVector<C64>> {
    let mut rng = rng_for(seed, &[0xAC]);
    (0..k).map(|_| DVector::from_fn(n, |_, _| cn(&mut rng))).collect()
}

/// Unit-variance links without path loss.
pub fn unit_channel_set(k: usize, n: usize, m: usize, seed: u64) -> ChannelSet {
    let mut rng = rng_for(seed, &[0xAD]);
    ChannelSet {
        direct: (0..k).map(|_| DVector::from_fn(n, |_, _| cn(&mut rng))).collect(),
        device_to_ris: (0..k).map(|_| DVector::from_fn(m, |_, _| cn(&mut rng))).collect(),
        ris_to_server: DMatrix::from_fn(n, m, |_, _| cn(&mut rng)),
    }
}

pub fn default_system(k: usize, n: usize, m: usize, seed: u64) -> SystemConfig {
    SystemConfig::with_default_geometry(k, n, m, 0.1, 1e-8, seed ^ 0x5EED)
}

pub fn default_channels(k: usize, n: usize, m: usize, seed: u64) -> ChannelSet {
    sample_channels(&default_system(k, n, m, seed), seed).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Best `min_k |m^H h_k|^2 / ||m||^2` over a grid of unit vectors
/// `m = (cos a, sin a e^{jb})` in C^2. The global phase does not affect the
/// objective, so two angles cover the sphere.
pub fn grid_max_min_gain(h: &[DVector<C64>], steps: usize) -> f64 {
    let mut best = 0.0f64;
    let trig: Vec<(f64, f64)> = (0..steps)
        .map(|j| {
            let b = std::f64::consts::TAU * j as f64 / steps as f64;
            (b.cos(), b.sin())
        })
        .collect();
    for i in 0..=steps {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / steps as f64;
        let (ca, sa) = (a.cos(), a.sin());
        for &(cb, sb) in &trig {
            let m1 = c(sa * cb, sa * sb);
            let mut worst = f64::INFINITY;
            for hk in h {
                let g = (hk[0] * ca + m1.conj() * hk[1]).norm_sqr();
                worst = worst.min(g);
            }
            best = best.max(worst);
        }
    }
    best
}

/// Exhaustive selection oracle for two-antenna instances: for every nonempty
/// subset (bitmask), the grid-optimal `sigma^2 / (P * max_m min_k gain)`.
pub fn subset_oracle_mse(h: &[DVector<C64>], steps: usize, noise: f64, power: f64) -> Vec<f64> {
    let k = h.len();
    let subsets = 1usize << k;
    let mut best = vec![0.0f64; subsets];
    let mut gains = vec![0.0f64; k];
    for i in 0..=steps {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / steps as f64;
        let (ca, sa) = (a.cos(), a.sin());
        for j in 0..steps {
            let b = std::f64::consts::TAU * j as f64 / steps as f64;
            let m1 = c(sa * b.cos(), sa * b.sin());
            for (g, hk) in gains.iter_mut().zip(h) {
                *g = (hk[0] * ca + m1.conj() * hk[1]).norm_sqr();
            }
            for mask in 1..subsets {
                let worst = (0..k)
                    .filter(|&d| mask & (1 << d) != 0)
                    .map(|d| gains[d])
                    .fold(f64::INFINITY, f64::min);
                if worst > best[mask] {
                    best[mask] = worst;
                }
            }
        }
    }
    best.into_iter()
        .map(|g| if g > 0.0 { noise / (power * g) } else { f64::INFINITY })
        .collect()
}
