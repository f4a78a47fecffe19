//! Aggregation of filtered pairs into the `p`-dimensional information
//! system `U_σ = Y_σ θ + Ξ_σ`.
//!
//! Each pair contributes the normalized summands
//! `Y_fᵀ U_f / (1 + ‖Y_f‖²)` and `Y_fᵀ Y_f / (1 + ‖Y_f‖²)` (Frobenius norm),
//! either through a concurrent-learning history stack or through
//! exponentially weighted running integrals.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::linalg::{lambda_min, vectorize};
use crate::signals::FilteredPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationVariant {
    /// Concurrent-learning history stack.
    HistoryStack,
    /// Exponentially weighted integrals.
    ExponentialWeighting,
}

/// Normalized summands of one pair: `(Y_fᵀU_f, Y_fᵀY_f, Y_fᵀΞ_f) / (1 + ‖Y_f‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summand {
    pub u: DVector<f64>,
    pub y: DMatrix<f64>,
    pub xi: Option<DVector<f64>>,
}

impl Summand {
    pub fn of(pair: &FilteredPair) -> Self {
        let scale = 1.0 / (1.0 + pair.y_f.norm_squared());
        let yt = pair.y_f.transpose();
        Self {
            u: &yt * &pair.u_f * scale,
            y: &yt * &pair.y_f * scale,
            xi: pair.xi_f.as_ref().map(|xi| &yt * xi * scale),
        }
    }
}

/// One stored history-stack entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    pub pair: FilteredPair,
    pub summand: Summand,
}

/// Record of a successful admission.
#[derive(Debug, Clone, PartialEq)]
pub struct Admission {
    pub t: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
    /// Number of entries added by this admission (more than 1 for a block admission).
    pub added: usize,
    /// Entries evicted to make room.
    pub replaced: usize,
}

/// Concurrent-learning history stack with eigenvalue-gated admission.
///
/// A pair is admitted when it raises `λ_min(Y_σ)` by more than the threshold.
/// When the stack is full, the entry whose removal leaves the largest
/// `λ_min` is replaced (oldest first on ties). Small or rank-deficient pairs
/// (e.g. a single nonzero regressor row) rarely clear the threshold alone, so
/// rejected pairs wait in a pool and the new pair may instead be admitted
/// together with a greedily chosen block of pooled pairs, as long as the
/// block as a whole clears the same threshold and fits in the free slots.
#[derive(Debug, Clone)]
pub struct HistoryStack {
    capacity: usize,
    lambda_threshold: f64,
    n: usize,
    p: usize,
    entries: Vec<StackEntry>,
    pool: VecDeque<StackEntry>,
    u_sigma: DVector<f64>,
    y_sigma: DMatrix<f64>,
    xi_sigma: Option<DVector<f64>>,
    lambda: f64,
}

impl HistoryStack {
    pub fn new(capacity: usize, lambda_threshold: f64, n: usize, p: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(SimError::InvalidInput("history stack capacity must be positive".into()));
        }
        if !(lambda_threshold >= 0.0 && lambda_threshold.is_finite()) {
            return Err(SimError::InvalidInput(format!(
                "admission threshold must be nonnegative, got {lambda_threshold}"
            )));
        }
        Ok(Self {
            capacity,
            lambda_threshold,
            n,
            p,
            entries: Vec::with_capacity(capacity),
            pool: VecDeque::with_capacity(4 * capacity),
            u_sigma: DVector::zeros(p),
            y_sigma: DMatrix::zeros(p, p),
            xi_sigma: Some(DVector::zeros(p)),
            lambda: 0.0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn lambda_threshold(&self) -> f64 {
        self.lambda_threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn u_sigma(&self) -> &DVector<f64> {
        &self.u_sigma
    }

    pub fn y_sigma(&self) -> &DMatrix<f64> {
        &self.y_sigma
    }

    pub fn xi_sigma(&self) -> Option<&DVector<f64>> {
        self.xi_sigma.as_ref()
    }

    /// `λ_min(Y_σ)`, cached at the last mutation.
    pub fn lambda_min(&self) -> f64 {
        self.lambda
    }

    /// Empties the stack at the start of a GPS-available interval.
    pub fn reset(&mut self) {
        self.entries.clear();
        self.pool.clear();
        self.u_sigma.fill(0.0);
        self.y_sigma.fill(0.0);
        self.xi_sigma = Some(DVector::zeros(self.p));
        self.lambda = 0.0;
    }

    /// `(U_σ, Y_σ)` recomputed from the stored entries.
    pub fn aggregate(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut u = DVector::zeros(self.p);
        let mut y = DMatrix::zeros(self.p, self.p);
        for e in &self.entries {
            u += &e.summand.u;
            y += &e.summand.y;
        }
        (u, y)
    }

    fn recompute(&mut self) {
        let (u, y) = self.aggregate();
        let mut xi = Some(DVector::zeros(self.p));
        for e in &self.entries {
            xi = match (xi, &e.summand.xi) {
                (Some(acc), Some(s)) => Some(acc + s),
                _ => None,
            };
        }
        self.u_sigma = u;
        self.y_sigma = y;
        self.xi_sigma = xi;
        self.lambda = lambda_min(&self.y_sigma);
    }

    /// Best candidate `Y_σ` (and index of the entry to drop) after adding `extra`
    /// on top of the current stack, dropping entries as needed to stay within capacity.
    fn best_candidate(&self, extra: &[&Summand]) -> (f64, Vec<usize>) {
        let mut base = self.y_sigma.clone();
        for s in extra {
            base += &s.y;
        }
        let overflow = (self.entries.len() + extra.len()).saturating_sub(self.capacity);
        match overflow {
            0 => (lambda_min(&base), Vec::new()),
            1 => {
                let mut best = (f64::NEG_INFINITY, Vec::new());
                for (j, e) in self.entries.iter().enumerate() {
                    let lam = lambda_min(&(&base - &e.summand.y));
                    if lam > best.0 {
                        best = (lam, vec![j]);
                    }
                }
                best
            }
            _ => {
                // Joint admissions into a nearly full stack drop the oldest entries.
                let drop: Vec<usize> = (0..overflow).collect();
                let mut cand = base;
                for &j in &drop {
                    cand -= &self.entries[j].summand.y;
                }
                (lambda_min(&cand), drop)
            }
        }
    }

    fn commit(&mut self, new: Vec<StackEntry>, mut drop: Vec<usize>) {
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for j in drop {
            self.entries.remove(j);
        }
        self.entries.extend(new);
        self.recompute();
    }

    fn pool_capacity(&self) -> usize {
        4 * self.capacity
    }

    /// Greedily grows a block of pooled pairs around `entry` until the block
    /// clears the threshold or the free slots run out.
    fn try_block(&mut self, entry: &StackEntry, before: f64) -> Option<Admission> {
        let free = self.capacity - self.entries.len();
        if free < 2 || self.pool.is_empty() {
            return None;
        }
        let mut chosen: Vec<usize> = Vec::new();
        let mut acc = &self.y_sigma + &entry.summand.y;
        let mut lam = lambda_min(&acc);
        while lam - before <= self.lambda_threshold && chosen.len() + 1 < free {
            let mut best: Option<(f64, usize)> = None;
            for (k, cand) in self.pool.iter().enumerate() {
                if chosen.contains(&k) {
                    continue;
                }
                let l = lambda_min(&(&acc + &cand.summand.y));
                if best.is_none_or(|b| l > b.0) {
                    best = Some((l, k));
                }
            }
            let (l, k) = best?;
            acc += &self.pool[k].summand.y;
            lam = l;
            chosen.push(k);
        }
        if lam - before <= self.lambda_threshold {
            return None;
        }
        chosen.sort_unstable_by(|a, b| b.cmp(a));
        let mut block: Vec<StackEntry> = chosen
            .into_iter()
            .map(|k| self.pool.remove(k).expect("pool index in range"))
            .collect();
        block.sort_by(|a, b| a.pair.t.total_cmp(&b.pair.t));
        block.push(entry.clone());
        let added = block.len();
        self.commit(block, Vec::new());
        Some(Admission {
            t: entry.pair.t,
            lambda_before: before,
            lambda_after: self.lambda,
            added,
            replaced: 0,
        })
    }

    /// Attempts to admit `pair`; returns the admission record when accepted.
    pub fn try_admit(&mut self, pair: &FilteredPair) -> Option<Admission> {
        if pair.y_f.nrows() != self.n || pair.y_f.ncols() != self.p || pair.u_f.len() != self.n {
            return None;
        }
        let entry = StackEntry { pair: pair.clone(), summand: Summand::of(pair) };
        if entry.summand.y.norm() == 0.0 {
            return None;
        }
        let before = self.lambda;

        let (lam, drop) = self.best_candidate(&[&entry.summand]);
        if lam - before > self.lambda_threshold {
            let replaced = drop.len();
            self.commit(vec![entry], drop);
            return Some(Admission {
                t: pair.t,
                lambda_before: before,
                lambda_after: self.lambda,
                added: 1,
                replaced,
            });
        }

        if let Some(adm) = self.try_block(&entry, before) {
            return Some(adm);
        }

        if self.pool.len() == self.pool_capacity() {
            self.pool.pop_front();
        }
        self.pool.push_back(entry);
        None
    }

    /// Writes one CSV row per entry: `t_i`, vectorized `U_f^i`, vectorized `Y_f^i`
    /// (column-major).
    pub fn dump<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n).map(|i| format!("uf{}", i + 1)));
        for c in 0..self.p {
            for r in 0..self.n {
                header.push(format!("yf{}{}", r + 1, c + 1));
            }
        }
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.pair.t.to_string()];
            row.extend(e.pair.u_f.iter().map(|v| v.to_string()));
            row.extend(vectorize(&e.pair.y_f).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exponentially weighted running integrals
/// `U_σ(t) = ∫_{t_a}^{t} e^{−α(τ − t_a)} Y_fᵀU_f / (1 + ‖Y_f‖²) dτ` (and likewise `Y_σ`),
/// advanced by the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct EwState {
    alpha: f64,
    anchor: f64,
    u_sigma: DVector<f64>,
    y_sigma: DMatrix<f64>,
    xi_sigma: Option<DVector<f64>>,
    last: Option<(f64, Summand)>,
}

impl EwState {
    pub fn new(alpha: f64, p: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(SimError::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            alpha,
            anchor: 0.0,
            u_sigma: DVector::zeros(p),
            y_sigma: DMatrix::zeros(p, p),
            xi_sigma: Some(DVector::zeros(p)),
            last: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn reset(&mut self, anchor: f64) {
        self.anchor = anchor;
        self.u_sigma.fill(0.0);
        self.y_sigma.fill(0.0);
        self.xi_sigma = Some(DVector::zeros(self.u_sigma.len()));
        self.last = None;
    }

    pub fn u_sigma(&self) -> &DVector<f64> {
        &self.u_sigma
    }

    pub fn y_sigma(&self) -> &DMatrix<f64> {
        &self.y_sigma
    }

    pub fn xi_sigma(&self) -> Option<&DVector<f64>> {
        self.xi_sigma.as_ref()
    }

    /// Advances the integrals to `pair.t`; `dt` is the step since the previous pair.
    pub fn ew_update(&mut self, pair: &FilteredPair, dt: f64) -> (DVector<f64>, DMatrix<f64>) {
        let w = (-self.alpha * (pair.t - self.anchor)).exp();
        let mut s = Summand::of(pair);
        s.u *= w;
        s.y *= w;
        if let Some(xi) = s.xi.as_mut() {
            *xi *= w;
        }
        if let Some((_, prev)) = &self.last {
            let half = 0.5 * dt;
            self.u_sigma += (&prev.u + &s.u) * half;
            self.y_sigma += (&prev.y + &s.y) * half;
            self.xi_sigma = match (self.xi_sigma.take(), &prev.xi, &s.xi) {
                (Some(acc), Some(a), Some(b)) => Some(acc + (a + b) * half),
                _ => None,
            };
        }
        self.last = Some((pair.t, s));
        (self.u_sigma.clone(), self.y_sigma.clone())
    }
}

/// Anything exposing an information matrix `Y_σ`.
pub trait InformationMatrix {
    fn information(&self) -> &DMatrix<f64>;
}

impl InformationMatrix for HistoryStack {
    fn information(&self) -> &DMatrix<f64> {
        &self.y_sigma
    }
}

impl InformationMatrix for EwState {
    fn information(&self) -> &DMatrix<f64> {
        &self.y_sigma
    }
}

/// Tracks `T_σ`, the first time in the current interval with `λ_min(Y_σ) > λ_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationMonitor {
    lambda_y: f64,
    t_sigma: Option<f64>,
}

impl ExcitationMonitor {
    pub fn new(lambda_y: f64) -> Self {
        Self { lambda_y, t_sigma: None }
    }

    pub fn lambda_y(&self) -> f64 {
        self.lambda_y
    }

    pub fn reset(&mut self) {
        self.t_sigma = None;
    }

    pub fn t_sigma(&self) -> Option<f64> {
        self.t_sigma
    }

    /// Checks the source at time `t` and returns `T_σ` if it has been reached.
    pub fn excitation_time<S: InformationMatrix + ?Sized>(&mut self, source: &S, t: f64) -> Option<f64> {
        if self.t_sigma.is_none() && lambda_min(source.information()) > self.lambda_y {
            self.t_sigma = Some(t);
        }
        self.t_sigma
    }
}
