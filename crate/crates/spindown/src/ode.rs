//! Explicit Runge-Kutta 5(4) integration with dense output and event location.
//!
//! The tableau is the Dormand-Prince pair; error control uses a PI controller
//! on the embedded fourth-order estimate, and each accepted step stores a
//! quintic interpolant so trajectories can be sampled continuously and events
//! can be located by bisection on the interpolant.

use nalgebra::DVector;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Difference between the fifth and fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Weights of the quintic interpolant's leading coefficient.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    /// Record the crossing and keep integrating.
    Record,
    /// Record the crossing, truncate the trajectory there and stop.
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    Any,
    /// Fire only when the event function goes from positive to negative.
    Falling,
    /// Fire only when the event function goes from negative to positive.
    Rising,
}

/// A scalar event function g(t, y). A root inside an accepted step is located
/// by bisection on the dense interpolant. Returning a non-finite value
/// disables detection on the affected sub-interval.
pub struct Event<'a> {
    pub name: String,
    pub action: EventAction,
    pub direction: CrossingDirection,
    pub func: Box<dyn Fn(f64, &DVector<f64>) -> f64 + 'a>,
}

#[derive(Debug, Clone)]
pub struct EventHit {
    pub name: String,
    pub t: f64,
    pub y: DVector<f64>,
    pub halted: bool,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            max_steps: 20_000_000,
        }
    }
}

/// One accepted step's interpolant: u(theta) for theta in [0, 1] spanning
/// [t0, t0 + h].
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [DVector<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - theta;
        let [c1, c2, c3, c4, c5] = &self.cont;
        // c1 + theta*(c2 + th1*(c3 + theta*(c4 + th1*c5)))
        let mut acc = c5 * th1;
        acc += c4;
        acc *= theta;
        acc += c3;
        acc *= th1;
        acc += c2;
        acc *= theta;
        acc += c1;
        acc
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub dense: Vec<DenseStep>,
    pub events: Vec<EventHit>,
    /// Name of the event that stopped the integration, if any.
    pub halted_by: Option<String>,
    pub n_steps: usize,
    pub n_rejected: usize,
}

impl Solution {
    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn y_end(&self) -> &DVector<f64> {
        self.y.last().unwrap()
    }

    /// Sample the dense interpolant at time t (clamped to the covered span).
    pub fn sample(&self, t: f64) -> DVector<f64> {
        if self.dense.is_empty() {
            return self.y[0].clone();
        }
        let seg = self.locate(t);
        self.dense[seg].eval(t)
    }

    fn locate(&self, t: f64) -> usize {
        let forward = self.dense[0].h > 0.0;
        let mut lo = 0usize;
        let mut hi = self.dense.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let t1 = self.dense[mid].t1();
            let past = if forward { t > t1 } else { t < t1 };
            if past {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Integrate a scalar function of the state over [a, b] with a composite
    /// Simpson rule on the dense interpolant, four panels per stored step.
    pub fn quadrature<F: Fn(f64, &DVector<f64>) -> f64>(&self, a: f64, b: f64, g: F) -> f64 {
        if self.dense.is_empty() || a == b {
            return 0.0;
        }
        let (lo_req, hi_req) = (a.min(b), a.max(b));
        let mut total = 0.0;
        for seg in &self.dense {
            let (s0, s1) = (seg.t0, seg.t1());
            let (lo, hi) = if s1 >= s0 { (s0, s1) } else { (s1, s0) };
            let clo = lo.max(lo_req);
            let chi = hi.min(hi_req);
            if chi <= clo {
                continue;
            }
            let panels = 4;
            let h = (chi - clo) / panels as f64;
            for p in 0..panels {
                let x0 = clo + p as f64 * h;
                let x2 = x0 + h;
                let x1 = 0.5 * (x0 + x2);
                total += h / 6.0
                    * (g(x0, &seg.eval(x0)) + 4.0 * g(x1, &seg.eval(x1)) + g(x2, &seg.eval(x2)));
            }
        }
        if b >= a {
            total
        } else {
            -total
        }
    }
}

/// Integrate dy/dt = f(t, y) from t_span.0 to t_span.1.
///
/// The field may fail (a chart degeneracy, say); a failure during a trial
/// step rejects the step and retries with half the size, and only an
/// unrecoverable failure is returned as an error.
pub fn integrate<F>(
    f: F,
    t_span: (f64, f64),
    y0: &DVector<f64>,
    opts: &SolverOptions,
    events: &[Event],
) -> Result<Solution>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    let (t0, t1) = t_span;
    let dim = y0.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(Solution {
            t: vec![t0],
            y: vec![y0.clone()],
            dense: vec![],
            events: vec![],
            halted_by: None,
            n_steps: 0,
            n_rejected: 0,
        });
    }
    let dir = span.signum();

    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut y = y0.clone();
    let mut t = t0;
    f(t, &y, &mut k[0])?;

    let h_max = opts.h_max.unwrap_or(span.abs());
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(&f, t, &y, &k[0], opts, dir))
        .abs()
        .clamp(1e-300, h_max)
        * dir;

    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0.clone()],
        dense: Vec::new(),
        events: Vec::new(),
        halted_by: None,
        n_steps: 0,
        n_rejected: 0,
    };

    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.func)(t, &y)).collect();
    let mut err_prev: f64 = 1e-4;
    let mut y_stage = DVector::zeros(dim);
    let h_floor = span.abs() * 1e-14;

    loop {
        if sol.n_steps + sol.n_rejected > opts.max_steps {
            return Err(Error::StepFailure {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let mut last = false;
        if (t + h - t1) * dir >= 0.0 {
            h = t1 - t;
            last = true;
        }

        // Stages 2..7; stage 7 sits at the proposed endpoint (FSAL pair).
        let mut stage_err: Option<Error> = None;
        for s in 1..7 {
            y_stage.copy_from(&y);
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    y_stage.axpy(h * A[s][j], kj, 1.0);
                }
            }
            if let Err(e) = f(t + C[s] * h, &y_stage, &mut k[s]) {
                stage_err = Some(e);
                break;
            }
        }
        if let Some(e) = stage_err {
            sol.n_rejected += 1;
            h *= 0.5;
            if h.abs() < h_floor {
                return Err(Error::StepFailure {
                    t,
                    reason: format!("field evaluation kept failing as the step shrank: {e}"),
                });
            }
            continue;
        }
        // y_stage now holds the fifth-order endpoint (row 7 of the tableau is b).
        let y_new = y_stage.clone();

        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                if E[s] != 0.0 {
                    e += E[s] * ks[i];
                }
            }
            e *= h;
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / dim as f64).sqrt();

        if !err.is_finite() {
            sol.n_rejected += 1;
            h *= 0.1;
            if h.abs() < h_floor {
                return Err(Error::StepFailure {
                    t,
                    reason: "error estimate became non-finite".into(),
                });
            }
            continue;
        }

        if err > 1.0 {
            sol.n_rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            if h.abs() < h_floor {
                return Err(Error::StepFailure {
                    t,
                    reason: format!("required step size below floor (error {err:.3e})"),
                });
            }
            continue;
        }

        // Accepted: build the interpolant for this step.
        let dy = &y_new - &y;
        let mut c5 = DVector::zeros(dim);
        for (s, ks) in k.iter().enumerate() {
            if D[s] != 0.0 {
                c5.axpy(h * D[s], ks, 1.0);
            }
        }
        let c3 = &k[0] * h - &dy;
        let c4 = &dy - &k[6] * h - &c3;
        let dense = DenseStep {
            t0: t,
            h,
            cont: [y.clone(), dy, c3, c4, c5],
        };

        let t_new = t + h;
        sol.n_steps += 1;

        // Event sweep: endpoints plus three interior samples, so a double
        // crossing inside one step is unlikely to slip through.
        let mut halt_at: Option<(usize, f64, DVector<f64>)> = None;
        for (ie, ev) in events.iter().enumerate() {
            let g_end = (ev.func)(t_new, &y_new);
            let mut nodes: Vec<(f64, f64)> = vec![(t, g_prev[ie])];
            for &th in &[0.25, 0.5, 0.75] {
                let ts = t + th * h;
                nodes.push((ts, (ev.func)(ts, &dense.eval(ts))));
            }
            nodes.push((t_new, g_end));
            for w in 1..nodes.len() {
                let (ta, ga) = nodes[w - 1];
                let (tb, gb) = nodes[w];
                if !ga.is_finite() || !gb.is_finite() {
                    continue;
                }
                if crossed(ga, gb, ev.direction) {
                    let (te, ye) = bisect(&dense, ev, ta, tb, ga);
                    let halted = ev.action == EventAction::Halt;
                    sol.events.push(EventHit {
                        name: ev.name.clone(),
                        t: te,
                        y: ye.clone(),
                        halted,
                    });
                    if halted {
                        let earlier = halt_at
                            .as_ref()
                            .map_or(true, |(_, th, _)| (te - th) * dir < 0.0);
                        if earlier {
                            halt_at = Some((ie, te, ye));
                        }
                        break;
                    }
                }
            }
            g_prev[ie] = g_end;
        }

        if let Some((ie, te, ye)) = halt_at {
            sol.events.retain(|e| (e.t - te) * dir <= 1e-30);
            sol.dense.push(dense);
            sol.t.push(te);
            sol.y.push(ye);
            sol.halted_by = Some(events[ie].name.clone());
            return Ok(sol);
        }

        sol.dense.push(dense);
        sol.t.push(t_new);
        sol.y.push(y_new.clone());

        if last {
            return Ok(sol);
        }

        // PI controller for the next step size.
        let err_cl = err.max(1e-10);
        let fac = 0.9 * err_cl.powf(-0.17) * err_prev.powf(0.04);
        h *= fac.clamp(0.2, 5.0);
        if h.abs() > h_max {
            h = h_max * dir;
        }
        err_prev = err_cl;

        t = t_new;
        y = y_new;
        k.swap(0, 6); // FSAL
    }
}

fn crossed(g0: f64, g1: f64, dir: CrossingDirection) -> bool {
    let sign_change =
        (g0 > 0.0 && g1 <= 0.0) || (g0 < 0.0 && g1 >= 0.0) || (g0 == 0.0 && g1 != 0.0);
    if !sign_change {
        return false;
    }
    match dir {
        CrossingDirection::Any => true,
        CrossingDirection::Falling => g0 > g1,
        CrossingDirection::Rising => g1 > g0,
    }
}

fn bisect(dense: &DenseStep, ev: &Event, mut ta: f64, mut tb: f64, ga: f64) -> (f64, DVector<f64>) {
    let mut sa = ga.signum();
    if sa == 0.0 {
        sa = -(ev.func)(tb, &dense.eval(tb)).signum();
    }
    for _ in 0..80 {
        let tm = 0.5 * (ta + tb);
        if tm == ta || tm == tb {
            break;
        }
        let gm = (ev.func)(tm, &dense.eval(tm));
        if !gm.is_finite() || gm.signum() == sa {
            ta = tm;
        } else {
            tb = tm;
        }
    }
    let te = 0.5 * (ta + tb);
    (te, dense.eval(te))
}

fn initial_step<F>(
    f: &F,
    t0: f64,
    y0: &DVector<f64>,
    k0: &DVector<f64>,
    opts: &SolverOptions,
    dir: f64,
) -> f64
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    // Startup heuristic: scale from the first derivative, then refine with
    // one Euler probe of the second derivative.
    let weighted = |v: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            let w = opts.atol + opts.rtol * y0[i].abs();
            s += (v[i] / w) * (v[i] / w);
        }
        (s / v.len() as f64).sqrt()
    };
    let d0 = weighted(y0);
    let d1 = weighted(k0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = y0 + k0 * (h0 * dir);
    let mut k1 = DVector::zeros(y0.len());
    if f(t0 + h0 * dir, &y1, &mut k1).is_err() {
        return 1e-6;
    }
    let d2 = weighted(&(&k1 - k0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
