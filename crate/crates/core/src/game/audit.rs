//! Finite-difference checks of the assembled operator against the costs
//! evaluated step by step.

use super::GameQP;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientAudit {
    /// Relative error of `F(z)` against differences of each prosumer's own cost.
    pub pseudo_gradient: f64,
    /// Relative error of `F(z)` against differences of the potential; `None` without one.
    pub potential: Option<f64>,
}

/// Central differences of each prosumer's own cost over its own block.
pub fn fd_pseudo_gradient(game: &GameQP, z: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    let mut zp = z.to_vec();
    for v in 0..game.prosumers() {
        for i in game.layout.block(v) {
            zp[i] = z[i] + h;
            let up = game.player_cost(v, &zp);
            zp[i] = z[i] - h;
            let dn = game.player_cost(v, &zp);
            zp[i] = z[i];
            out[i] = (up - dn) / (2.0 * h);
        }
    }
    out
}

pub fn fd_potential_gradient(game: &GameQP, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|i| {
            zp[i] = z[i] + h;
            let up = game.potential_from_stage_terms(&zp);
            zp[i] = z[i] - h;
            let dn = game.potential_from_stage_terms(&zp);
            zp[i] = z[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max(|b|, 1e-12)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-12f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Compares `F(z)` with central differences of step `h`. The costs are
/// quadratic, so the differences are exact up to rounding for any `h`.
pub fn gradient_audit(game: &GameQP, z: &[f64], h: f64) -> crate::Result<GradientAudit> {
    let f = game.pseudo_gradient(z)?;
    let pseudo_gradient = rel_err(&fd_pseudo_gradient(game, z, h), f.as_slice());
    let potential = game
        .symmetric_pricing
        .then(|| rel_err(&fd_potential_gradient(game, z, h), f.as_slice()));
    Ok(GradientAudit {
        pseudo_gradient,
        potential,
    })
}

/// `count` points with every coordinate drawn from `[-scale, scale]`.
pub fn random_points(game: &GameQP, count: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..game.dim()).map(|_| rng.random_range(-scale..=scale)).collect())
        .collect()
}

/// Worst audit over `points`.
pub fn audit_points(game: &GameQP, points: &[Vec<f64>], h: f64) -> crate::Result<GradientAudit> {
    let mut worst = GradientAudit {
        pseudo_gradient: 0.0,
        potential: game.symmetric_pricing.then_some(0.0),
    };
    for z in points {
        let a = gradient_audit(game, z, h)?;
        worst.pseudo_gradient = worst.pseudo_gradient.max(a.pseudo_gradient);
        worst.potential = worst.potential.zip(a.potential).map(|(x, y)| x.max(y));
    }
    Ok(worst)
}
