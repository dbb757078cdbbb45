//! Piecewise-linear battery model.
//!
//! Two coordinates describe the state of a battery:
//!
//! * the *chemical* charge `y` (MWh-equivalent), which must stay in
//!   `[e_min, e_max]`;
//! * the *electrical* coordinate `x = C⁻¹(y)` of the charging function, in which
//!   electrical energy input is additive.
//!
//! Discharging is described by a separate curve `D` mapping chemical charge to
//! the electrical energy that can still be extracted before reaching `e_min`.
//! Charging by `Σ ≥ 0` moves the state to `C(C⁻¹(y) + Σ)`; withdrawing
//! `Σ ≥ 0` moves it to `D⁻¹(D(y) − Σ)`. Nothing is clamped: leaving the
//! operating range is reported as a violation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding whether a value sits inside a curve domain.
const DOMAIN_TOL: f64 = 1e-9;

/// Violations at or below this magnitude are treated as round-off.
const REPORT_FLOOR: f64 = 1e-12;

/// A strictly increasing piecewise-linear function given by its breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::Scenario(
                "a curve needs at least two breakpoints".into(),
            ));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Scenario("curve breakpoints must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Scenario(
                "curve breakpoints not strictly increasing".into(),
            ));
        }
        if y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Scenario(
                "curve values must be strictly increasing".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn segments(&self) -> usize {
        self.x.len() - 1
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.x
            .windows(2)
            .zip(self.y.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn range(&self) -> (f64, f64) {
        (self.y[0], self.y[self.y.len() - 1])
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        let v = within(v, self.domain())?;
        Ok(interpolate(&self.x, &self.y, v))
    }

    pub fn inverse(&self, v: f64) -> Result<f64> {
        let v = within(v, self.range())?;
        Ok(interpolate(&self.y, &self.x, v))
    }

    /// Evaluation with the end segments extended linearly.
    pub fn eval_extended(&self, v: f64) -> f64 {
        interpolate(&self.x, &self.y, v)
    }

    pub fn inverse_extended(&self, v: f64) -> f64 {
        interpolate(&self.y, &self.x, v)
    }
}

fn within(v: f64, (lo, hi): (f64, f64)) -> Result<f64> {
    let tol = DOMAIN_TOL * (1.0 + lo.abs().max(hi.abs()));
    if !(v >= lo - tol && v <= hi + tol) {
        return Err(Error::Domain { value: v, lo, hi });
    }
    Ok(v.clamp(lo, hi))
}

/// Linear interpolation over sorted `xs`, extrapolating with the end slopes.
fn interpolate(xs: &[f64], ys: &[f64], v: f64) -> f64 {
    let n = xs.len();
    let seg = match xs.iter().position(|&b| v <= b) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => n - 2,
    };
    let (x0, x1, y0, y1) = (xs[seg], xs[seg + 1], ys[seg], ys[seg + 1]);
    y0 + (y1 - y0) * (v - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Charging function `C`: electrical coordinate → chemical charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeCurve(PiecewiseLinear);

impl ChargeCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let curve = PiecewiseLinear::new(x, y)?;
        check_efficiencies(&curve, "charging")?;
        Ok(Self(curve))
    }

    /// A single segment with constant efficiency `eta` spanning `[e_min, e_max]`.
    pub fn linear(e_min: f64, e_max: f64, eta: f64) -> Result<Self> {
        Self::new(vec![0.0, (e_max - e_min) / eta], vec![e_min, e_max])
    }

    pub fn curve(&self) -> &PiecewiseLinear {
        &self.0
    }

    pub fn eval(&self, x: f64, direction: Direction) -> Result<f64> {
        match direction {
            Direction::Forward => self.0.eval(x),
            Direction::Inverse => self.0.inverse(x),
        }
    }
}

/// Discharge function `D`: chemical charge → extractable electrical energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DischargeCurve(PiecewiseLinear);

impl DischargeCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let curve = PiecewiseLinear::new(x, y)?;
        check_efficiencies(&curve, "discharging")?;
        if curve.values()[0].abs() > DOMAIN_TOL {
            return Err(Error::Scenario(
                "discharge curve must start at zero extractable energy".into(),
            ));
        }
        Ok(Self(curve))
    }

    pub fn linear(e_min: f64, e_max: f64, eta: f64) -> Result<Self> {
        Self::new(vec![e_min, e_max], vec![0.0, (e_max - e_min) * eta])
    }

    pub fn curve(&self) -> &PiecewiseLinear {
        &self.0
    }

    pub fn eval(&self, x: f64, direction: Direction) -> Result<f64> {
        match direction {
            Direction::Forward => self.0.eval(x),
            Direction::Inverse => self.0.inverse(x),
        }
    }
}

fn check_efficiencies(curve: &PiecewiseLinear, what: &str) -> Result<()> {
    for eta in curve.slopes() {
        if !(eta > 0.0 && eta <= 1.0 + 1e-12) {
            return Err(Error::Scenario(format!(
                "{what} efficiency {eta} outside (0, 1]"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeSide {
    Above,
    Below,
}

/// The battery left `[e_min, e_max]`; `magnitude` is in chemical MWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeViolation {
    pub side: RangeSide,
    pub magnitude: f64,
}

impl fmt::Display for RangeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            RangeSide::Above => write!(f, "overshoot of {} MWh above e_max", self.magnitude),
            RangeSide::Below => write!(f, "undershoot of {} MWh below e_min", self.magnitude),
        }
    }
}

impl std::error::Error for RangeViolation {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentInfo {
    pub index: usize,
    /// Maximum electrical energy per period in this segment (MWh).
    pub speed: f64,
    /// `[C(e_s), C(e_{s+1})]` in chemical MWh.
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryViolationKind {
    /// Charge outside `[e_min, e_max]` at a period boundary.
    Range,
    /// Cumulative input over a same-sign run exceeds the segment bound.
    RunBound,
    /// Energy in one period exceeds the segment speed limit.
    Speed,
    /// Energy in one period exceeds the instantaneous power limit times Δ.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryViolation {
    pub kind: BatteryViolationKind,
    /// Zero-based period index.
    pub period: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Charge at every period boundary, `T + 1` entries starting with `E_0`.
    pub charge: Vec<f64>,
    pub violations: Vec<BatteryViolation>,
}

impl Trajectory {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.violations.iter().all(|v| v.magnitude <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub bus: usize,
    pub charge: ChargeCurve,
    pub discharge: DischargeCurve,
    pub e_min: f64,
    pub e_max: f64,
    pub initial: f64,
    /// Speed limit per charging segment, MWh per period.
    pub speed: Vec<f64>,
    pub max_power_mw: f64,
}

impl BatterySpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bus: usize,
        charge: ChargeCurve,
        discharge: DischargeCurve,
        e_min: f64,
        e_max: f64,
        initial: f64,
        speed: Vec<f64>,
        max_power_mw: f64,
    ) -> Result<Self> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        if !(e_min < e_max) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: e_min {e_min} must be below e_max {e_max}"
            )));
        }
        let (c_lo, c_hi) = charge.curve().range();
        if !close(c_lo, e_min) || !close(c_hi, e_max) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: charge curve must map onto [{e_min}, {e_max}]"
            )));
        }
        let (d_lo, d_hi) = discharge.curve().domain();
        if !close(d_lo, e_min) || !close(d_hi, e_max) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: discharge curve must span [{e_min}, {e_max}]"
            )));
        }
        if !(initial >= e_min && initial <= e_max) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: initial charge {initial} outside [{e_min}, {e_max}]"
            )));
        }
        if speed.len() != charge.curve().segments() {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: {} speed limits for {} charging segments",
                speed.len(),
                charge.curve().segments()
            )));
        }
        if speed.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: speed limits must be positive"
            )));
        }
        if !(max_power_mw > 0.0) {
            return Err(Error::Scenario(format!(
                "battery at bus {bus}: max power must be positive"
            )));
        }
        Ok(Self {
            bus,
            charge,
            discharge,
            e_min,
            e_max,
            initial,
            speed,
            max_power_mw,
        })
    }

    pub fn segments(&self) -> usize {
        self.charge.curve().segments()
    }

    /// Electrical coordinate `C⁻¹(y)`.
    pub fn electrical(&self, y: f64) -> Result<f64> {
        self.charge.curve().inverse(y)
    }

    /// Extractable energy `D(y)`.
    pub fn extractable(&self, y: f64) -> Result<f64> {
        self.discharge.curve().eval(y)
    }

    /// Charge-curve breakpoints `e_0 < … < e_K` in the electrical coordinate.
    pub fn charge_breakpoints(&self) -> &[f64] {
        self.charge.curve().breakpoints()
    }

    /// Segment boundaries `C(e_0) < … < C(e_K)` in chemical MWh.
    pub fn chemical_breakpoints(&self) -> &[f64] {
        self.charge.curve().values()
    }

    /// Charge after feeding `energy_in` MWh of electrical energy (negative
    /// values withdraw).
    pub fn step_state(&self, y: f64, energy_in: f64) -> Result<f64> {
        within(y, (self.e_min, self.e_max))?;
        let next = self.step_extended(y, energy_in);
        let tol = DOMAIN_TOL * (1.0 + self.e_max.abs());
        if next > self.e_max + tol {
            return Err(Error::Range(RangeViolation {
                side: RangeSide::Above,
                magnitude: next - self.e_max,
            }));
        }
        if next < self.e_min - tol {
            return Err(Error::Range(RangeViolation {
                side: RangeSide::Below,
                magnitude: self.e_min - next,
            }));
        }
        Ok(next.clamp(self.e_min, self.e_max))
    }

    /// State update with both curves extended linearly past their ends, so a
    /// trajectory can be followed after it leaves the operating range.
    fn step_extended(&self, y: f64, energy_in: f64) -> f64 {
        if energy_in >= 0.0 {
            let c = self.charge.curve();
            c.eval_extended(c.inverse_extended(y) + energy_in)
        } else {
            let d = self.discharge.curve();
            d.inverse_extended(d.eval_extended(y) + energy_in)
        }
    }

    /// Charging segment containing `y`; interior breakpoints belong to the
    /// lower segment.
    pub fn segment_and_speed(&self, y: f64) -> Result<SegmentInfo> {
        let y = within(y, (self.e_min, self.e_max))?;
        let bounds = self.chemical_breakpoints();
        let index = (0..self.segments())
            .find(|&s| y <= bounds[s + 1])
            .unwrap_or(self.segments() - 1);
        Ok(SegmentInfo {
            index,
            speed: self.speed[index],
            bracket: (bounds[index], bounds[index + 1]),
        })
    }

    /// Replays per-period electrical energies and checks range, run-bound,
    /// speed and power limits.
    pub fn simulate_trajectory(&self, energies: &[f64], delta_hours: f64) -> Trajectory {
        let mut charge = Vec::with_capacity(energies.len() + 1);
        let mut violations = Vec::new();
        let mut push = |kind, period, magnitude: f64| {
            if magnitude > REPORT_FLOOR {
                violations.push(BatteryViolation {
                    kind,
                    period,
                    magnitude,
                });
            }
        };

        let mut y = self.initial;
        charge.push(y);
        for (t, &e) in energies.iter().enumerate() {
            let lookup = y.clamp(self.e_min, self.e_max);
            let seg = self
                .segment_and_speed(lookup)
                .expect("clamped charge lies in range");
            push(BatteryViolationKind::Speed, t, e.abs() - seg.speed);
            push(
                BatteryViolationKind::Power,
                t,
                e.abs() - self.max_power_mw * delta_hours,
            );

            y = self.step_extended(y, e);
            charge.push(y);
            push(BatteryViolationKind::Range, t, y - self.e_max);
            push(BatteryViolationKind::Range, t, self.e_min - y);
        }

        // Same-sign runs starting after the first period. The starting segment
        // bounds the total energy that may be moved without reversing.
        let breakpoints = self.charge_breakpoints();
        let e_top = breakpoints[breakpoints.len() - 1];
        for t in 1..energies.len() {
            let start = charge[t];
            if start < self.e_min || start > self.e_max {
                continue;
            }
            let seg = self
                .segment_and_speed(start)
                .expect("start charge checked in range");
            if energies[t] >= 0.0 {
                let (end, total) = run_sum(&energies[t..], |e| e >= 0.0);
                let bound = e_top - breakpoints[seg.index];
                push(BatteryViolationKind::RunBound, t + end, total - bound);
            }
            if energies[t] <= 0.0 {
                let (end, total) = run_sum(&energies[t..], |e| e <= 0.0);
                let top = self
                    .extractable(seg.bracket.1)
                    .expect("breakpoint lies in range");
                push(BatteryViolationKind::RunBound, t + end, -total - top);
            }
        }

        Trajectory { charge, violations }
    }
}

/// Sum over the maximal prefix whose entries satisfy `keep`; returns the index
/// of the last entry in the run and the sum.
fn run_sum(energies: &[f64], keep: impl Fn(f64) -> bool) -> (usize, f64) {
    let mut total = 0.0;
    let mut last = 0;
    for (i, &e) in energies.iter().enumerate() {
        if !keep(e) {
            break;
        }
        total += e;
        last = i;
    }
    (last, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Case9 battery: unit charging efficiency, 0.8 discharging, starts at 80.
    fn case9_battery() -> BatterySpec {
        BatterySpec::new(
            9,
            ChargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
            DischargeCurve::linear(0.0, 100.0, 0.8).unwrap(),
            0.0,
            100.0,
            80.0,
            vec![100.0],
            100.0,
        )
        .unwrap()
    }

    fn two_segment() -> BatterySpec {
        BatterySpec::new(
            1,
            ChargeCurve::new(vec![0.0, 50.0, 100.0], vec![0.0, 45.0, 80.0]).unwrap(),
            DischargeCurve::linear(0.0, 80.0, 0.9).unwrap(),
            0.0,
            80.0,
            40.0,
            vec![30.0, 10.0],
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_curve() {
        let c = ChargeCurve::new(vec![0.0, 100.0], vec![0.0, 100.0]).unwrap();
        assert_eq!(c.eval(40.0, Direction::Forward).unwrap(), 40.0);
    }

    #[test]
    fn two_segment_curve_evaluation() {
        // Second segment slope (80-45)/50 = 0.7: C(60) = 45 + 0.7*10 = 52.
        let c = ChargeCurve::new(vec![0.0, 50.0, 100.0], vec![0.0, 45.0, 80.0]).unwrap();
        assert!(close(c.eval(60.0, Direction::Forward).unwrap(), 52.0, 1e-12));
        assert!(close(c.eval(52.0, Direction::Inverse).unwrap(), 60.0, 1e-12));
    }

    #[test]
    fn curve_domain_error() {
        let c = ChargeCurve::new(vec![0.0, 100.0], vec![0.0, 100.0]).unwrap();
        assert!(matches!(
            c.eval(120.0, Direction::Forward),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(ChargeCurve::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        // Efficiency above one.
        assert!(ChargeCurve::new(vec![0.0, 10.0], vec![0.0, 20.0]).is_err());
        assert!(DischargeCurve::new(vec![0.0, 10.0], vec![1.0, 5.0]).is_err());
    }

    #[test]
    fn unit_efficiency_charging() {
        let b = BatterySpec::new(
            1,
            ChargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
            DischargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
            0.0,
            100.0,
            80.0,
            vec![50.0],
            50.0,
        )
        .unwrap();
        assert!(close(b.step_state(80.0, 10.0).unwrap(), 90.0, 1e-12));
    }

    #[test]
    fn case9_battery_drains_completely() {
        let b = case9_battery();
        let y = b.step_state(80.0, -64.0).unwrap();
        assert!(close(y, 0.0, 1e-9));
    }

    #[test]
    fn over_withdrawal_reports_undershoot() {
        let b = case9_battery();
        match b.step_state(80.0, -65.0) {
            Err(Error::Range(v)) => {
                assert_eq!(v.side, RangeSide::Below);
                // 65 / 0.8 = 81.25 MWh chemical against 80 available.
                assert!(close(v.magnitude, 1.25, 1e-9));
            }
            other => panic!("expected range violation, got {other:?}"),
        }
    }

    #[test]
    fn segment_lookup() {
        let one = case9_battery();
        assert_eq!(one.segment_and_speed(0.0).unwrap().index, 0);
        assert_eq!(one.segment_and_speed(100.0).unwrap().index, 0);

        let two = two_segment();
        assert_eq!(two.segment_and_speed(45.0).unwrap().index, 0);
        let s = two.segment_and_speed(60.0).unwrap();
        assert_eq!(s.index, 1);
        assert_eq!(s.speed, 10.0);
        assert_eq!(s.bracket, (45.0, 80.0));
        assert!(two.segment_and_speed(81.0).is_err());
    }

    #[test]
    fn zero_inputs_leave_charge_constant() {
        let b = two_segment();
        let tr = b.simulate_trajectory(&[0.0; 4], 1.0);
        assert!(tr.charge.iter().all(|&y| y == 40.0));
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn case9_worst_case_trajectory() {
        let b = case9_battery();
        let tr = b.simulate_trajectory(&[-64.0], 1.0);
        assert!(close(tr.charge[0], 80.0, 1e-12));
        assert!(close(tr.charge[1], 0.0, 1e-9));
        assert!(tr.is_feasible(1e-9), "{:?}", tr.violations);
    }

    #[test]
    fn repeated_full_speed_charging_overflows() {
        // E_0 = 80, v_0 = 15, unit efficiency: 80 + 2*15 = 110 > 100.
        let b = BatterySpec::new(
            1,
            ChargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
            DischargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
            0.0,
            100.0,
            80.0,
            vec![15.0],
            15.0,
        )
        .unwrap();
        let tr = b.simulate_trajectory(&[15.0, 15.0], 1.0);
        let range: Vec<_> = tr
            .violations
            .iter()
            .filter(|v| v.kind == BatteryViolationKind::Range)
            .collect();
        assert_eq!(range.len(), 1);
        assert_eq!(range[0].period, 1);
        assert!(close(range[0].magnitude, 10.0, 1e-9));
    }

    #[test]
    fn speed_limit_depends_on_segment() {
        let b = two_segment();
        // Start at 40 (segment 0, speed 30): 20 MWh is fine. Charge is then
        // C(C⁻¹(40) + 20) which sits in segment 1 (speed 10), so 20 is too much.
        let tr = b.simulate_trajectory(&[20.0, 20.0], 1.0);
        let speed: Vec<_> = tr
            .violations
            .iter()
            .filter(|v| v.kind == BatteryViolationKind::Speed)
            .collect();
        assert_eq!(speed.len(), 1);
        assert_eq!(speed[0].period, 1);
        assert!(close(speed[0].magnitude, 10.0, 1e-9));
    }

    #[test]
    fn run_bound_uses_start_segment() {
        let b = two_segment();
        // C⁻¹(40) = 44.4; +6 lands just past e_1 = 50, i.e. in segment 1, so the
        // following run may move at most 100 - 50 = 50 MWh.
        let tr = b.simulate_trajectory(&[6.0, 60.0], 1.0);
        let run: Vec<_> = tr
            .violations
            .iter()
            .filter(|v| v.kind == BatteryViolationKind::RunBound)
            .collect();
        assert_eq!(run.len(), 1);
        assert_eq!(run[0].period, 1);
        assert!(close(run[0].magnitude, 10.0, 1e-9));
    }

    proptest! {
        #[test]
        fn step_is_monotone_in_energy(y in 0.0f64..80.0, a in -60.0f64..60.0, b in -60.0f64..60.0) {
            let bat = two_segment();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bat.step_extended(y, lo) <= bat.step_extended(y, hi) + 1e-12);
        }

        #[test]
        fn charging_composes_additively(y in 0.0f64..80.0, s1 in 0.0f64..20.0, s2 in 0.0f64..20.0) {
            let bat = two_segment();
            let two_steps = bat.step_extended(bat.step_extended(y, s1), s2);
            let one_step = bat.step_extended(y, s1 + s2);
            prop_assert!((two_steps - one_step).abs() <= 1e-9);
        }

        #[test]
        fn charge_discharge_round_trip(y in 10.0f64..60.0, s in 0.0f64..10.0, eta_c in 0.5f64..1.0, eta_d in 0.5f64..1.0) {
            let bat = BatterySpec::new(
                1,
                ChargeCurve::linear(0.0, 100.0, eta_c).unwrap(),
                DischargeCurve::linear(0.0, 100.0, eta_d).unwrap(),
                0.0, 100.0, y, vec![100.0], 100.0,
            ).unwrap();
            let up = bat.step_state(y, s).unwrap();
            let back = bat.step_state(up, -s * eta_c * eta_d).unwrap();
            prop_assert!((back - y).abs() <= 1e-9);
        }

        #[test]
        fn run_bound_from_start_matches_upper_range(
            e0 in 0.0f64..100.0,
            inputs in proptest::collection::vec(0.0f64..30.0, 1..6),
        ) {
            // One segment, nonnegative inputs from the first period: the
            // cumulative bound C⁻¹(E_max) - C⁻¹(E_0) is the upper range limit.
            let bat = BatterySpec::new(
                1,
                ChargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
                DischargeCurve::linear(0.0, 100.0, 1.0).unwrap(),
                0.0, 100.0, e0, vec![1e6], 1e6,
            ).unwrap();
            let total: f64 = inputs.iter().sum();
            let bound_violated = total > bat.electrical(100.0).unwrap() - bat.electrical(e0).unwrap() + 1e-9;
            let tr = bat.simulate_trajectory(&inputs, 1.0);
            let range_violated = tr.violations.iter()
                .any(|v| v.kind == BatteryViolationKind::Range && v.magnitude > 1e-9);
            prop_assert_eq!(bound_violated, range_violated);
        }
    }
}
