//! Prediction with expert advice by reduction to exponential weights:
//! the KT estimator, iProd, Squint and coin betting.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, EwError, Result};

/// Tolerance for simplex membership of emitted weights.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Krichevsky-Trofimov forecast `(ones + 1/2) / t` for round `t`, after
/// `ones` ones among the first `t - 1` outcomes.
pub fn kt_predict(ones: usize, t: usize) -> Result<f64> {
    if t == 0 || ones + 1 > t {
        return Err(invalid("kt", format!("need t >= 1 and ones <= t - 1, got ones = {ones}, t = {t}")));
    }
    Ok((ones as f64 + 0.5) / t as f64)
}

/// `r_i = <w, g> - g_i`.
pub fn instantaneous_regrets(weights: &DVector<f64>, losses: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(weights.len(), losses.len())?;
    let mixed = weights.dot(losses);
    Ok(losses.map(|g| mixed - g))
}

/// One round of the experts game.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRound {
    pub weights: DVector<f64>,
    pub losses: DVector<f64>,
    pub regrets: DVector<f64>,
}

impl ExpertRound {
    /// Validates `weights` (simplex) and `losses` (in `[0, 1]`).
    pub fn new(weights: DVector<f64>, losses: DVector<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        if losses.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(invalid("losses", "expert losses must lie in [0, 1]"));
        }
        let regrets = instantaneous_regrets(&weights, &losses)?;
        Ok(Self {
            weights,
            losses,
            regrets,
        })
    }

    pub fn learner_loss(&self) -> f64 {
        self.weights.dot(&self.losses)
    }
}

pub fn check_simplex(w: &DVector<f64>) -> Result<()> {
    if w.is_empty() {
        return Err(invalid("weights", "empty weight vector"));
    }
    if w.iter().any(|x| !(*x >= -SIMPLEX_TOL)) || (w.sum() - 1.0).abs() > SIMPLEX_TOL {
        return Err(invalid("weights", "not a probability vector"));
    }
    Ok(())
}

fn check_regrets(r: &DVector<f64>) -> Result<()> {
    match r.iter().find(|x| !(x.abs() <= 1.0)) {
        Some(x) => Err(invalid("regret", format!("instantaneous regret {x} outside [-1, 1]"))),
        None => Ok(()),
    }
}

/// The learning-rate grid `2^-K, ..., 1/4, 1/2` (ascending) with
/// `K = max(1, floor(log2 sqrt(T)))`, so that the smallest rate is at least
/// `1/sqrt(T)`.
pub fn eta_grid(horizon: usize) -> Vec<f64> {
    let k_max = ((horizon.max(1) as f64).log2() / 2.0).floor().max(1.0) as i32;
    (1..=k_max).rev().map(|k| 2f64.powi(-k)).collect()
}

/// A joint distribution over `(eta, i)` on a finite grid of learning rates,
/// stored as log-weights with a tracked log-potential.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaGridPosterior {
    grid: Vec<f64>,
    grid_prior: Vec<f64>,
    /// `ln P_t(eta_k, i)`, normalized; rows index the grid.
    log_weights: DMatrix<f64>,
    log_potential: f64,
}

impl EtaGridPosterior {
    /// Product prior `gamma x pi`. The grid must be ascending in `(0, 1/2]`.
    pub fn new(grid: Vec<f64>, grid_prior: Vec<f64>, expert_prior: &DVector<f64>) -> Result<Self> {
        check_dim(grid.len(), grid_prior.len())?;
        if grid.is_empty() {
            return Err(invalid("grid", "needs at least one learning rate"));
        }
        if grid.iter().any(|e| !(*e > 0.0 && *e <= 0.5)) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("grid", "learning rates must be ascending in (0, 1/2]"));
        }
        let gamma = normalized("grid prior", &grid_prior)?;
        let pi = normalized("expert prior", expert_prior.as_slice())?;
        let log_weights = DMatrix::from_fn(grid.len(), pi.len(), |k, i| gamma[k].ln() + pi[i].ln());
        Ok(Self {
            grid,
            grid_prior: gamma,
            log_weights,
            log_potential: 0.0,
        })
    }

    /// The grid of [`eta_grid`] with equal mass on every grid point, which
    /// is the density `1/eta` integrated over the cells `[eta/2, eta]`.
    pub fn for_horizon(horizon: usize, expert_prior: &DVector<f64>) -> Result<Self> {
        let grid = eta_grid(horizon);
        let k = grid.len();
        Self::new(grid, vec![1.0; k], expert_prior)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_prior(&self) -> &[f64] {
        &self.grid_prior
    }

    pub fn experts(&self) -> usize {
        self.log_weights.ncols()
    }

    /// `P_t(eta_k, i)`.
    pub fn weights(&self) -> DMatrix<f64> {
        self.log_weights.map(f64::exp)
    }

    /// `Phi_t = sum P_1(eta, i) exp(-sum_s loss_s(eta, i))`.
    pub fn potential(&self) -> f64 {
        self.log_potential.exp()
    }

    pub fn log_potential(&self) -> f64 {
        self.log_potential
    }

    /// Prior mass `gamma([lo, hi])` of the grid points in the closed interval.
    pub fn prior_mass(&self, lo: f64, hi: f64) -> f64 {
        let slack = 1e-12 * hi.abs().max(1.0);
        self.grid
            .iter()
            .zip(&self.grid_prior)
            .filter(|(e, _)| **e >= lo - slack && **e <= hi + slack)
            .map(|(_, g)| g)
            .sum()
    }

    /// The eta-tilted marginal `E[eta e_i] / E[eta]`.
    pub fn iprod_weights(&self) -> Result<DVector<f64>> {
        let mut w = DVector::<f64>::zeros(self.experts());
        for (k, eta) in self.grid.iter().enumerate() {
            for i in 0..self.experts() {
                w[i] += eta * self.log_weights[(k, i)].exp();
            }
        }
        let total = w.sum();
        if !(total > 0.0) {
            return Err(EwError::ZeroWeights);
        }
        Ok(w / total)
    }

    /// Multiplies each weight by `1 + eta r_i` (EW with rate 1 on
    /// `-ln(1 + eta r_i)`).
    pub fn iprod_update(&mut self, r: &DVector<f64>) -> Result<()> {
        check_dim(self.experts(), r.len())?;
        check_regrets(r)?;
        let mut log_factors = DMatrix::zeros(self.grid.len(), self.experts());
        for (k, eta) in self.grid.iter().enumerate() {
            for i in 0..self.experts() {
                let factor = 1.0 + eta * r[i];
                if !(factor > 0.0) {
                    return Err(EwError::NonPositiveProdFactor(factor));
                }
                log_factors[(k, i)] = factor.ln();
            }
        }
        self.apply(&log_factors);
        Ok(())
    }

    /// Multiplies each weight by `exp(eta r_i - eta^2 r_i^2)`.
    pub fn squint_update(&mut self, r: &DVector<f64>) -> Result<()> {
        check_dim(self.experts(), r.len())?;
        check_regrets(r)?;
        let log_factors = DMatrix::from_fn(self.grid.len(), self.experts(), |k, i| {
            let x = self.grid[k] * r[i];
            x - x * x
        });
        self.apply(&log_factors);
        Ok(())
    }

    fn apply(&mut self, log_factors: &DMatrix<f64>) {
        let logs = &self.log_weights + log_factors;
        let max = logs.max();
        let log_total = max + logs.map(|l| (l - max).exp()).sum().ln();
        self.log_weights = logs.map(|l| l - log_total);
        self.log_potential += log_total;
    }
}

fn normalized(name: &'static str, v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(invalid(name, "masses must be positive and finite"));
    }
    let total: f64 = v.iter().sum();
    Ok(v.iter().map(|x| x / total).collect())
}

/// `max(R / (t - 1 + 2a), 0)`: the lazy-EW mean under a symmetric
/// `Beta(a, a)` prior on `[-1, 1]`, clipped to be nonnegative.
pub fn coinbetting_eta(regret_prev: f64, t: usize, a: f64) -> f64 {
    (regret_prev / (t as f64 - 1.0 + 2.0 * a)).max(0.0)
}

/// Coin betting for experts: each expert bets a fraction `eta_t^i` of its
/// wealth `p_t(i)` on its own instantaneous regret.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinBetting {
    prior: DVector<f64>,
    wealth: DVector<f64>,
    regret: DVector<f64>,
    shape: f64,
    round: usize,
    clip_regrets: bool,
}

impl CoinBetting {
    /// Shape `a = T/4 + 1/2`.
    pub fn new(prior: &DVector<f64>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        Self::with_shape(prior, horizon as f64 / 4.0 + 0.5)
    }

    pub fn with_shape(prior: &DVector<f64>, shape: f64) -> Result<Self> {
        if !(shape >= 0.5) {
            return Err(invalid("shape", format!("a = {shape} must be at least 1/2")));
        }
        let prior = DVector::from_vec(normalized("expert prior", prior.as_slice())?);
        Ok(Self {
            wealth: prior.clone(),
            regret: DVector::zeros(prior.len()),
            prior,
            shape,
            round: 0,
            clip_regrets: false,
        })
    }

    /// Clip `r_t(i)` to `max(r_t(i), 0)` whenever `R_{t-1}(i) < 0`.
    pub fn clipping_regrets(mut self, on: bool) -> Self {
        self.clip_regrets = on;
        self
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn prior(&self) -> &DVector<f64> {
        &self.prior
    }

    /// `p_t(i)`.
    pub fn wealth(&self) -> &DVector<f64> {
        &self.wealth
    }

    /// `R_{t-1}(i)` as tracked by the learner.
    pub fn regret(&self) -> &DVector<f64> {
        &self.regret
    }

    /// `eta_t^i` for the round about to be played.
    pub fn etas(&self) -> DVector<f64> {
        let t = self.round + 1;
        self.regret.map(|r| coinbetting_eta(r, t, self.shape))
    }

    /// Normalized bets `p_t(i) eta_t^i`, or the prior when nothing is bet.
    pub fn weights(&self) -> DVector<f64> {
        let bets = self.wealth.component_mul(&self.etas());
        let total = bets.sum();
        if total > 0.0 {
            bets / total
        } else {
            self.prior.clone()
        }
    }

    /// Plays one round against `losses` and returns the weights used and
    /// the instantaneous regrets.
    pub fn step(&mut self, losses: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let weights = self.weights();
        let round = ExpertRound::new(weights, losses.clone())?;
        let etas = self.etas();
        let r = if self.clip_regrets {
            round
                .regrets
                .zip_map(&self.regret, |ri, big| if big < 0.0 { ri.max(0.0) } else { ri })
        } else {
            round.regrets.clone()
        };
        let bets = self.wealth.component_mul(&etas);
        self.wealth += bets.component_mul(&r);
        self.regret += &r;
        self.round += 1;
        Ok((round.weights, round.regrets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn kt_examples() {
        assert_eq!(kt_predict(0, 1).unwrap(), 0.5);
        assert_eq!(kt_predict(1, 2).unwrap(), 0.75);
        assert_abs_diff_eq!(kt_predict(0, 3).unwrap(), 1.0 / 6.0, epsilon = 1e-16);
        assert!(kt_predict(3, 3).is_err());
    }

    #[test]
    fn grid_has_rates_at_least_inverse_sqrt_horizon() {
        for t in [1, 2, 4, 100, 1000, 10_000, 12_345] {
            let g = eta_grid(t);
            assert_eq!(*g.last().unwrap(), 0.5);
            assert!(g[0] >= 1.0 / (t as f64).sqrt() || g.len() == 1);
        }
        assert_eq!(eta_grid(1000).len(), 4);
    }

    #[test]
    fn iprod_weights_examples() {
        let post = EtaGridPosterior {
            grid: vec![0.25, 0.5],
            grid_prior: vec![0.5, 0.5],
            log_weights: DMatrix::from_row_slice(2, 2, &[f64::NEG_INFINITY, 0.5_f64.ln(), 0.5_f64.ln(), f64::NEG_INFINITY]),
            log_potential: 0.0,
        };
        assert_abs_diff_eq!(post.iprod_weights().unwrap(), dv(&[2.0 / 3.0, 1.0 / 3.0]), epsilon = 1e-15);

        let indep = EtaGridPosterior::new(vec![0.125, 0.25, 0.5], vec![1.0, 2.0, 3.0], &dv(&[0.1, 0.3, 0.6])).unwrap();
        assert_abs_diff_eq!(indep.iprod_weights().unwrap(), dv(&[0.1, 0.3, 0.6]), epsilon = 1e-15);
    }

    #[test]
    fn iprod_update_example() {
        let mut post = EtaGridPosterior::new(vec![0.5], vec![1.0], &dv(&[1.0, 1.0])).unwrap();
        post.iprod_update(&dv(&[1.0, -1.0])).unwrap();
        let w = post.weights();
        assert_abs_diff_eq!(w[(0, 0)], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 1)], 0.25, epsilon = 1e-15);
        let before = post.clone();
        post.iprod_update(&dv(&[0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(post.weights(), before.weights(), epsilon = 1e-15);
    }

    #[test]
    fn squint_factor_example() {
        let mut post = EtaGridPosterior::new(vec![0.5], vec![1.0], &dv(&[1.0, 1.0])).unwrap();
        post.squint_update(&dv(&[1.0, 0.0])).unwrap();
        let w = post.weights();
        assert_abs_diff_eq!(w[(0, 0)] / w[(0, 1)], 0.25_f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(0.25_f64.exp(), 1.2840, epsilon = 1e-4);
    }

    #[test]
    fn regrets_outside_unit_interval_rejected() {
        let mut post = EtaGridPosterior::for_horizon(100, &dv(&[1.0, 1.0])).unwrap();
        assert!(post.iprod_update(&dv(&[1.5, 0.0])).is_err());
    }

    #[test]
    fn coinbetting_eta_examples() {
        assert_eq!(coinbetting_eta(-0.3, 5, 1.0), 0.0);
        assert_abs_diff_eq!(coinbetting_eta(0.5, 2, 1.0), 1.0 / 6.0, epsilon = 1e-16);
        assert_eq!(coinbetting_eta(0.0, 1, 1.5), 0.0);
    }

    #[test]
    fn coinbetting_hand_recursion() {
        let mut cb = CoinBetting::new(&dv(&[1.0, 1.0]), 2).unwrap();
        assert_eq!(cb.shape(), 1.0);
        // Round 1: no bets, so the prior is played.
        let (w, r) = cb.step(&dv(&[0.0, 1.0])).unwrap();
        assert_eq!(w, dv(&[0.5, 0.5]));
        assert_abs_diff_eq!(r, dv(&[0.5, -0.5]), epsilon = 1e-16);
        assert_abs_diff_eq!(cb.wealth(), &dv(&[0.5, 0.5]), epsilon = 1e-16);
        assert_abs_diff_eq!(cb.etas(), dv(&[0.5 / 3.0, 0.0]), epsilon = 1e-16);
        assert_abs_diff_eq!(cb.weights(), dv(&[1.0, 0.0]), epsilon = 1e-16);
    }
}
