//! Concentration model `K⁺w⁺ + K⁻w⁻ ≤ b` for renewable deviations.
//!
//! Deviation coordinates are indexed period-major: coordinate `t * n + r` is
//! the deviation of renewable `r` in period `t`, where `n` is the number of
//! renewables. Deviations are average MW over the period.
//!
//! Because `K⁺` and `K⁻` are nonnegative, the set is closed under shrinking
//! magnitudes with signs kept, and its intersection with any fixed-sign orthant
//! is a polyhedron. Both facts are what the separation oracles rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack (MW scale) allowed when testing membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

const BURN_IN: usize = 100;
const THINNING: usize = 50;
const SAMPLES_PER_CHAIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn both() -> [Sign; 2] {
        [Sign::Pos, Sign::Neg]
    }
}

/// One row of the concentration model, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub plus: Vec<(usize, f64)>,
    pub minus: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationModel {
    dim: usize,
    rows: Vec<ConcentrationRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// `b - (K⁺w⁺ + K⁻w⁻)` per row.
    pub slack: Vec<f64>,
}

/// A deviation vector together with its (renewable, period) shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationVector {
    renewables: usize,
    values: Vec<f64>,
}

impl DeviationVector {
    pub fn new(renewables: usize, values: Vec<f64>) -> Result<Self> {
        if renewables == 0 && !values.is_empty() {
            return Err(Error::Argument("deviation vector without renewables".into()));
        }
        if renewables > 0 && !values.len().is_multiple_of(renewables) {
            return Err(Error::Dimension {
                expected: renewables * (values.len() / renewables + 1),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("deviation entries must be finite".into()));
        }
        Ok(Self { renewables, values })
    }

    pub fn zeros(renewables: usize, periods: usize) -> Self {
        Self {
            renewables,
            values: vec![0.0; renewables * periods],
        }
    }

    pub fn renewables(&self) -> usize {
        self.renewables
    }

    pub fn periods(&self) -> usize {
        if self.renewables == 0 {
            0
        } else {
            self.values.len() / self.renewables
        }
    }

    pub fn get(&self, renewable: usize, period: usize) -> f64 {
        self.values[period * self.renewables + renewable]
    }

    pub fn period(&self, period: usize) -> &[f64] {
        &self.values[period * self.renewables..(period + 1) * self.renewables]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Magnitude polytope of one orthant: variables `u ≥ 0` with `w_c = σ_c u_c`.
///
/// Rows touching a single variable are folded into its upper bound; rows that
/// touch none of the included coordinates are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthantPolytope {
    pub coords: Vec<usize>,
    pub signs: Vec<Sign>,
    pub upper: Vec<f64>,
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl OrthantPolytope {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Deviation vector (full dimension) for the magnitudes `u`.
    pub fn deviation(&self, dim: usize, u: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for ((&c, &s), &m) in self.coords.iter().zip(&self.signs).zip(u) {
            w[c] = s.value() * m.max(0.0);
        }
        w
    }
}

impl ConcentrationModel {
    pub fn new(dim: usize, rows: Vec<ConcentrationRow>) -> Result<Self> {
        for (k, row) in rows.iter().enumerate() {
            for &(c, v) in row.plus.iter().chain(&row.minus) {
                if c >= dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        got: c + 1,
                    });
                }
                if !v.is_finite() {
                    return Err(Error::Scenario(format!("row {k}: non-finite coefficient")));
                }
                if v < 0.0 {
                    return Err(Error::Scenario(
                        "concentration model requires nonnegative matrices".into(),
                    ));
                }
            }
            if !(row.rhs.is_finite() && row.rhs >= 0.0) {
                return Err(Error::Scenario(format!(
                    "row {k}: right-hand side must be finite and nonnegative so that 0 is admissible"
                )));
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn from_dense(k_plus: &[Vec<f64>], k_minus: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        if k_plus.len() != b.len() || k_minus.len() != b.len() {
            return Err(Error::Dimension {
                expected: b.len(),
                got: k_plus.len().max(k_minus.len()),
            });
        }
        let dim = k_plus.first().map_or(0, Vec::len);
        let sparse = |row: &[f64]| -> Result<Vec<(usize, f64)>> {
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: row.len(),
                });
            }
            Ok(row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(c, v)| (c, *v))
                .collect())
        };
        let rows = k_plus
            .iter()
            .zip(k_minus)
            .zip(b)
            .map(|((p, m), &rhs)| {
                Ok(ConcentrationRow {
                    plus: sparse(p)?,
                    minus: sparse(m)?,
                    rhs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, rows)
    }

    /// Uncertainty budgets: `|w_{r,t}| ≤ γ_{r,t}` and
    /// `Σ_r |w_{r,t}| / γ_{r,t} ≤ Γ_t`. `gamma` is indexed `[renewable][period]`.
    pub fn from_budgets(gamma: &[Vec<f64>], budget: &[f64]) -> Result<Self> {
        let n = gamma.len();
        let periods = budget.len();
        let dim = n * periods;
        let mut rows = Vec::with_capacity(2 * dim + periods);
        for (r, g) in gamma.iter().enumerate() {
            if g.len() != periods {
                return Err(Error::Dimension {
                    expected: periods,
                    got: g.len(),
                });
            }
            if g.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Scenario(format!(
                    "gamma for renewable {r} must be positive"
                )));
            }
        }
        if budget.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Scenario("Gamma must be positive".into()));
        }
        for t in 0..periods {
            for (r, g) in gamma.iter().enumerate() {
                let c = t * n + r;
                rows.push(ConcentrationRow {
                    plus: vec![(c, 1.0)],
                    minus: vec![],
                    rhs: g[t],
                });
                rows.push(ConcentrationRow {
                    plus: vec![],
                    minus: vec![(c, 1.0)],
                    rhs: g[t],
                });
            }
        }
        for (t, &cap) in budget.iter().enumerate() {
            let entries: Vec<(usize, f64)> = gamma
                .iter()
                .enumerate()
                .map(|(r, g)| (t * n + r, 1.0 / g[t]))
                .collect();
            rows.push(ConcentrationRow {
                plus: entries.clone(),
                minus: entries,
                rhs: cap,
            });
        }
        Self::new(dim, rows)
    }

    /// The degenerate set `W = {0}`.
    pub fn zero(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|c| ConcentrationRow {
                plus: vec![(c, 1.0)],
                minus: vec![(c, 1.0)],
                rhs: 0.0,
            })
            .collect();
        Self { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[ConcentrationRow] {
        &self.rows
    }

    /// Dense `(K⁺, K⁻, b)`.
    pub fn to_dense(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut kp = vec![vec![0.0; self.dim]; self.rows.len()];
        let mut km = vec![vec![0.0; self.dim]; self.rows.len()];
        for (k, row) in self.rows.iter().enumerate() {
            for &(c, v) in &row.plus {
                kp[k][c] += v;
            }
            for &(c, v) in &row.minus {
                km[k][c] += v;
            }
        }
        (kp, km, self.rows.iter().map(|r| r.rhs).collect())
    }

    pub fn membership(&self, w: &[f64]) -> Result<Membership> {
        if w.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: w.len(),
            });
        }
        let slack: Vec<f64> = self
            .rows
            .iter()
            .map(|row| {
                let lhs: f64 = row
                    .plus
                    .iter()
                    .map(|&(c, v)| v * w[c].max(0.0))
                    .chain(row.minus.iter().map(|&(c, v)| v * (-w[c]).max(0.0)))
                    .sum();
                row.rhs - lhs
            })
            .collect();
        let inside = slack.iter().all(|&s| s >= -MEMBERSHIP_TOL);
        Ok(Membership { inside, slack })
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        self.membership(w).map(|m| m.inside).unwrap_or(false)
    }

    /// Largest magnitude each coordinate reaches on its own, per sign, as
    /// `(max w⁻, max w⁺)`. Exact because of down-closure; may be infinite.
    pub fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::INFINITY); self.dim];
        for row in &self.rows {
            for &(c, v) in &row.minus {
                if v > 0.0 {
                    bounds[c].0 = bounds[c].0.min(row.rhs / v);
                }
            }
            for &(c, v) in &row.plus {
                if v > 0.0 {
                    bounds[c].1 = bounds[c].1.min(row.rhs / v);
                }
            }
        }
        bounds
    }

    /// Every coordinate can move away from zero in at least one direction.
    /// Coordinates are independent in this respect, so some orthant then has
    /// nonempty interior.
    pub fn is_full_dimensional(&self) -> bool {
        self.coordinate_bounds()
            .iter()
            .all(|&(neg, pos)| neg > 0.0 || pos > 0.0)
    }

    /// Magnitude polytope of the orthant given by `signs`; `None` pins a
    /// coordinate to zero.
    pub fn orthant(&self, signs: &[Option<Sign>]) -> Result<OrthantPolytope> {
        if signs.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: signs.len(),
            });
        }
        let mut var_of = vec![usize::MAX; self.dim];
        let mut coords = Vec::new();
        let mut sign_list = Vec::new();
        for (c, s) in signs.iter().enumerate() {
            if let Some(s) = s {
                var_of[c] = coords.len();
                coords.push(c);
                sign_list.push(*s);
            }
        }
        let mut upper = vec![f64::INFINITY; coords.len()];
        let mut rows = Vec::new();
        for row in &self.rows {
            let mut entries: Vec<(usize, f64)> = Vec::new();
            let mut add = |c: usize, v: f64, want: Sign| {
                if var_of[c] != usize::MAX && sign_list[var_of[c]] == want && v > 0.0 {
                    match entries.iter_mut().find(|(j, _)| *j == var_of[c]) {
                        Some(e) => e.1 += v,
                        None => entries.push((var_of[c], v)),
                    }
                }
            };
            for &(c, v) in &row.plus {
                add(c, v, Sign::Pos);
            }
            for &(c, v) in &row.minus {
                add(c, v, Sign::Neg);
            }
            match entries.len() {
                0 => {}
                1 => {
                    let (j, v) = entries[0];
                    upper[j] = upper[j].min(row.rhs / v);
                }
                _ => rows.push((entries, row.rhs)),
            }
        }
        Ok(OrthantPolytope {
            coords,
            signs: sign_list,
            upper,
            rows,
        })
    }

    /// Draws `count` deviation vectors from `W`.
    ///
    /// Each chain picks a sign pattern uniformly, restricts to that orthant's
    /// magnitude polytope and runs hit-and-run from an interior point, emitting
    /// samples after a burn-in and at a fixed thinning interval. Every sample
    /// is checked with [`membership`](Self::membership) before it is returned.
    pub fn sample_deviation(&self, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let signs: Vec<Option<Sign>> = (0..self.dim)
                .map(|_| Some(if rng.gen::<bool>() { Sign::Pos } else { Sign::Neg }))
                .collect();
            let poly = self.orthant(&signs)?;
            let mut chain = HitAndRun::new(&poly)?;
            for _ in 0..BURN_IN {
                chain.step(&mut rng);
            }
            for k in 0..SAMPLES_PER_CHAIN {
                if out.len() == count {
                    break;
                }
                if k > 0 {
                    for _ in 0..THINNING {
                        chain.step(&mut rng);
                    }
                }
                let w = poly.deviation(self.dim, &chain.point());
                if !self.contains(&w) {
                    return Err(Error::Validation(
                        "sampled deviation left the uncertainty set".into(),
                    ));
                }
                out.push(w);
            }
        }
        Ok(out)
    }
}

/// Hit-and-run over the free variables of an orthant polytope.
struct HitAndRun<'a> {
    poly: &'a OrthantPolytope,
    free: Vec<usize>,
    u: Vec<f64>,
    activity: Vec<f64>,
}

impl<'a> HitAndRun<'a> {
    fn new(poly: &'a OrthantPolytope) -> Result<Self> {
        // A variable is pinned at zero by its own bound or by a row with zero
        // right-hand side.
        let mut pinned: Vec<bool> = poly.upper.iter().map(|&u| u <= 0.0).collect();
        for (entries, rhs) in &poly.rows {
            if *rhs <= 0.0 {
                for &(j, _) in entries {
                    pinned[j] = true;
                }
            }
        }
        let free: Vec<usize> = (0..poly.len()).filter(|&j| !pinned[j]).collect();

        // Start halfway along the diagonal of the free variables.
        let mut reach = f64::INFINITY;
        for &j in &free {
            reach = reach.min(poly.upper[j]);
        }
        for (entries, rhs) in &poly.rows {
            let load: f64 = entries
                .iter()
                .filter(|(j, _)| !pinned[*j])
                .map(|(_, v)| v)
                .sum();
            if load > 0.0 {
                reach = reach.min(rhs / load);
            }
        }
        if !free.is_empty() && !reach.is_finite() {
            return Err(Error::Validation("uncertainty set is unbounded".into()));
        }
        let mut u = vec![0.0; poly.len()];
        for &j in &free {
            u[j] = 0.5 * reach;
        }
        let activity = poly
            .rows
            .iter()
            .map(|(entries, _)| entries.iter().map(|&(j, v)| v * u[j]).sum())
            .collect();
        Ok(Self {
            poly,
            free,
            u,
            activity,
        })
    }

    fn step(&mut self, rng: &mut impl Rng) {
        if self.free.is_empty() {
            return;
        }
        let mut d = vec![0.0; self.poly.len()];
        let mut norm = 0.0;
        for &j in &self.free {
            let g: f64 = rng.sample(StandardNormal);
            d[j] = g;
            norm += g * g;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return;
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut clip = |slack: f64, rate: f64| {
            if rate > 1e-15 {
                hi = hi.min(slack / rate);
            } else if rate < -1e-15 {
                lo = lo.max(slack / rate);
            }
        };
        for &j in &self.free {
            d[j] /= norm;
            clip(self.u[j], -d[j]);
            if self.poly.upper[j].is_finite() {
                clip(self.poly.upper[j] - self.u[j], d[j]);
            }
        }
        let rates: Vec<f64> = self
            .poly
            .rows
            .iter()
            .map(|(entries, _)| entries.iter().map(|&(j, v)| v * d[j]).sum())
            .collect();
        for ((rate, act), (_, rhs)) in rates.iter().zip(&self.activity).zip(&self.poly.rows) {
            clip((rhs - act).max(0.0), *rate);
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return;
        }
        let t = rng.gen_range(lo..=hi);
        for &j in &self.free {
            self.u[j] = (self.u[j] + t * d[j]).max(0.0);
        }
        for (act, rate) in self.activity.iter_mut().zip(&rates) {
            *act += t * rate;
        }
    }

    fn point(&self) -> Vec<f64> {
        self.u.clone()
    }
}
