use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr};

/// An autonomous ODE system `d(state)/dt = rhs(state; params)`.
#[derive(Clone, Debug)]
pub struct OdeSystem {
    pub name: String,
    pub states: Vec<String>,
    pub rhs: Vec<Expr>,
    pub params: BTreeMap<String, f64>,
    /// Characteristic oscillation period, used to space samples.
    pub period: f64,
    /// Starting state; a transient is discarded before sampling.
    pub initial: Vec<f64>,
}

impl OdeSystem {
    fn build(name: &str, states: &[&str], rhs: &[&str], params: &[(&str, f64)], period: f64, initial: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            states: states.iter().map(|s| s.to_string()).collect(),
            rhs: rhs.iter().map(|s| parse(s).expect("embedded system parses")).collect(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            period,
            initial: initial.to_vec(),
        }
    }

    pub fn shimizu_morioka() -> Self {
        Self::build(
            "ShimizuMorioka",
            &["x", "y", "z"],
            &["y", "x - a*y - x*z", "-b*z + x^2"],
            &[("a", 0.85), ("b", 0.5)],
            15.0,
            &[0.1, 0.0, 0.0],
        )
    }

    pub fn genesio_tesi() -> Self {
        Self::build(
            "GenesioTesi",
            &["x", "y", "z"],
            &["y", "z", "-c*x - b*y - a*z + x^2"],
            &[("a", 0.44), ("b", 1.1), ("c", 1.0)],
            6.0,
            &[0.1, 0.0, 0.0],
        )
    }

    pub fn rucklidge() -> Self {
        Self::build(
            "Rucklidge",
            &["x", "y", "z"],
            &["-a*x + b*y - y*z", "x", "-z + y^2"],
            &[("a", 2.0), ("b", 6.7)],
            11.0,
            &[1.0, 0.0, 4.5],
        )
    }

    pub fn sprott_jerk() -> Self {
        Self::build(
            "SprottJerk",
            &["x", "y", "z"],
            &["y", "z", "-x + y^2 - mu*z"],
            &[("mu", 2.017)],
            12.0,
            &[0.02, 0.0, 0.0],
        )
    }

    pub fn all() -> Vec<OdeSystem> {
        vec![Self::shimizu_morioka(), Self::genesio_tesi(), Self::rucklidge(), Self::sprott_jerk()]
    }

    pub fn by_name(name: &str) -> Result<OdeSystem> {
        Self::all()
            .into_iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown system `{name}`")))
    }

    /// Right-hand sides with parameter values substituted as constants.
    pub fn equations(&self) -> Vec<Expr> {
        self.rhs
            .iter()
            .map(|e| e.substitute(&|v| self.params.get(v).map(|&c| Expr::constant(c))))
            .collect()
    }

    pub fn derivative(&self, state: &[f64], out: &mut [f64]) {
        let lookup = |name: &str| {
            self.states
                .iter()
                .position(|s| s == name)
                .map(|i| state[i])
                .or_else(|| self.params.get(name).copied())
        };
        for (o, e) in out.iter_mut().zip(&self.rhs) {
            *o = e.eval_scalar(&lookup).unwrap_or(f64::NAN);
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Periods integrated and discarded before the first sample.
    pub transient_periods: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, transient_periods: 10.0 }
    }
}

/// Sampled states: `states[k][i]` is state `k` at `t[i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }
}

/// Samples `n_points` states, `points_per_period` per system period, after
/// the default transient.
pub fn simulate(system: &OdeSystem, initial: &[f64], n_points: usize, points_per_period: usize) -> Result<Trajectory> {
    simulate_with(system, initial, n_points, points_per_period, &SimOptions::default())
}

pub fn simulate_with(
    system: &OdeSystem,
    initial: &[f64],
    n_points: usize,
    points_per_period: usize,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if n_points < 2 || points_per_period == 0 {
        return Err(Error::InvalidArgument("need n_points >= 2 and points_per_period >= 1".into()));
    }
    if initial.len() != system.states.len() {
        return Err(Error::LengthMismatch { expected: system.states.len(), got: initial.len() });
    }
    let dt = system.period / points_per_period as f64;
    let t0 = opts.transient_periods * system.period;
    let times: Vec<f64> = (0..n_points).map(|i| t0 + i as f64 * dt).collect();
    let f = |y: &[f64], out: &mut [f64]| system.derivative(y, out);
    let samples = dopri5(&f, initial, &times, opts.rtol, opts.atol)?;
    let dim = initial.len();
    let states = (0..dim).map(|k| samples.iter().map(|s| s[k]).collect()).collect();
    Ok(Trajectory {
        names: system.states.clone(),
        t: times.iter().map(|t| t - t0).collect(),
        states,
    })
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// dense output
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Dormand–Prince 5(4) from `t = 0`, returning the state at each of the
/// ascending `times` via the 4th-order continuous extension.
pub fn dopri5(
    f: &impl Fn(&[f64], &mut [f64]),
    y0: &[f64],
    times: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<Vec<f64>>> {
    let dim = y0.len();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; dim]; 7];
    f(&y, &mut k[0]);
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut h = (t_end.abs() * 1e-3).clamp(1e-6, 1e-2);
    let mut next = 0;
    while next < times.len() && times[next] <= t {
        out.push(y.clone());
        next += 1;
    }
    let mut stage = vec![0.0; dim];
    let mut y1 = vec![0.0; dim];
    let mut steps = 0usize;
    while next < times.len() {
        steps += 1;
        if steps > 50_000_000 || h < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::IntegrationBlowUp { time: t });
        }
        for s in 1..7 {
            for d in 0..dim {
                let mut acc = y[d];
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += h * a * k[j][d];
                }
                stage[d] = acc;
            }
            f(&stage, &mut k[s]);
        }
        // stage 7 was evaluated at the 5th-order solution
        y1.copy_from_slice(&stage);
        let mut err = 0.0;
        for d in 0..dim {
            let e: f64 = (0..7).map(|j| E[j] * k[j][d]).sum::<f64>() * h;
            let sc = atol + rtol * y[d].abs().max(y1[d].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / dim as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let t1 = t + h;
            while next < times.len() && times[next] <= t1 {
                let theta = (times[next] - t) / h;
                let th1 = 1.0 - theta;
                let v: Vec<f64> = (0..dim)
                    .map(|d| {
                        let diff = y1[d] - y[d];
                        let bspl = h * k[0][d] - diff;
                        let r4 = diff - h * k[6][d] - bspl;
                        let r5: f64 = h * (0..7).map(|j| D[j] * k[j][d]).sum::<f64>();
                        y[d] + theta * (diff + th1 * (bspl + theta * (r4 + th1 * r5)))
                    })
                    .collect();
                out.push(v);
                next += 1;
            }
            t = t1;
            y.copy_from_slice(&y1);
            let last = k[6].clone();
            k[0] = last;
            if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
                return Err(Error::IntegrationBlowUp { time: t });
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let f = |y: &[f64], o: &mut [f64]| o[0] = -y[0];
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys = dopri5(&f, &[1.0], &times, 1e-10, 1e-12).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn zero_rhs_is_constant() {
        let f = |_: &[f64], o: &mut [f64]| o.iter_mut().for_each(|v| *v = 0.0);
        let ys = dopri5(&f, &[1.5, -2.0], &[0.0, 1.0, 10.0], 1e-9, 1e-12).unwrap();
        assert!(ys.iter().all(|y| y == &vec![1.5, -2.0]));
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let f = |y: &[f64], o: &mut [f64]| {
            o[0] = y[1];
            o[1] = -y[0];
        };
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.037).collect();
        let ys = dopri5(&f, &[1.0, 0.0], &times, 1e-10, 1e-12).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |y: &[f64], o: &mut [f64]| o[0] = y[0] * y[0];
        let err = dopri5(&f, &[1.0], &[0.5, 2.0], 1e-9, 1e-12).unwrap_err();
        match err {
            Error::IntegrationBlowUp { time } => assert!(time < 1.0 + 1e-6 && time > 0.9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn systems_stay_bounded() {
        for sys in OdeSystem::all() {
            let tr = simulate(&sys, &sys.initial, 1000, 100).unwrap();
            assert_eq!(tr.t.len(), 1000);
            for col in &tr.states {
                let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(max < 100.0 && max > 1e-3, "{} max {max}", sys.name);
            }
        }
    }

    #[test]
    fn tightening_tolerance_barely_moves_samples() {
        // measured from the initial state; chaos amplifies differences over long transients
        let sys = OdeSystem::sprott_jerk();
        let base = SimOptions { transient_periods: 0.0, ..SimOptions::default() };
        let a = simulate_with(&sys, &sys.initial, 200, 100, &base).unwrap();
        let opts = SimOptions { rtol: 5e-10, atol: 5e-13, ..base };
        let b = simulate_with(&sys, &sys.initial, 200, 100, &opts).unwrap();
        for (ca, cb) in a.states.iter().zip(&b.states) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }
}
