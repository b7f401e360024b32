//! Phase-space state, Hamilton's equations, and the RK4 reference integrator
//! used as numerical ground truth.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::RandomPotential;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        PhaseState { x, y, px, py }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        PhaseState {
            x: a[0],
            y: a[1],
            px: a[2],
            py: a[3],
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.px.is_finite() && self.py.is_finite()
    }
}

/// Plane-wave initial condition: full state (0, y0, 1, 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub y0: f64,
}

impl InitialCondition {
    pub fn new(y0: f64) -> Self {
        InitialCondition { y0 }
    }

    pub fn state(self) -> PhaseState {
        PhaseState::new(0.0, self.y0, 1.0, 0.0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<PhaseState> {
        self.states.last().copied()
    }

    /// CSV with header `t,x,y,px,py`, 17 significant digits per value.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,x,y,px,py")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t, s.x, s.y, s.px, s.py
            )?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut traj = Trajectory::default();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}: bad csv row {}: {e}", path.display(), i)))?;
            if fields.len() != 5 {
                return Err(Error::Config(format!(
                    "{}: row {} has {} fields, expected 5",
                    path.display(),
                    i,
                    fields.len()
                )));
            }
            traj.times.push(fields[0]);
            traj.states
                .push(PhaseState::new(fields[1], fields[2], fields[3], fields[4]));
        }
        Ok(traj)
    }
}

/// Right-hand side of Hamilton's equations: (px, py, -dV/dx, -dV/dy).
pub fn rhs(state: PhaseState, potential: &RandomPotential) -> [f64; 4] {
    let g = potential.grad([state.x, state.y]);
    [state.px, state.py, -g[0], -g[1]]
}

/// H = |p|^2 / 2 + V(x, y).
pub fn hamiltonian_energy(state: PhaseState, potential: &RandomPotential) -> f64 {
    0.5 * (state.px * state.px + state.py * state.py) + potential.value([state.x, state.y])
}

fn rk4_step(state: PhaseState, potential: &RandomPotential, dt: f64) -> PhaseState {
    let add = |s: [f64; 4], k: [f64; 4], h: f64| {
        PhaseState::from_array([
            s[0] + h * k[0],
            s[1] + h * k[1],
            s[2] + h * k[2],
            s[3] + h * k[3],
        ])
    };
    let s = state.to_array();
    let k1 = rhs(state, potential);
    let k2 = rhs(add(s, k1, dt / 2.0), potential);
    let k3 = rhs(add(s, k2, dt / 2.0), potential);
    let k4 = rhs(add(s, k3, dt), potential);
    PhaseState::from_array([
        s[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        s[2] + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        s[3] + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ])
}

/// Fixed-step RK4 from an arbitrary state over [0, t_end]. The final step is
/// shortened so the trajectory lands exactly on t_end.
pub fn rk4_integrate_state(
    initial: PhaseState,
    potential: &RandomPotential,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if t_end <= 0.0 || dt <= 0.0 || dt > t_end {
        return Err(Error::Config(format!(
            "rk4: need t_end > 0 and 0 < dt <= t_end, got t_end={t_end}, dt={dt}"
        )));
    }
    let mut traj = Trajectory::default();
    let mut state = initial;
    traj.times.push(0.0);
    traj.states.push(state);
    // index-based grid avoids accumulation drift near the final step
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let mut t_prev = 0.0;
    for i in 1..=steps {
        let t = if i == steps { t_end } else { i as f64 * dt };
        state = rk4_step(state, potential, t - t_prev);
        if !state.is_finite() {
            return Err(Error::IntegrationDiverged { t });
        }
        traj.times.push(t);
        traj.states.push(state);
        t_prev = t;
    }
    Ok(traj)
}

pub fn rk4_integrate(
    ic: InitialCondition,
    potential: &RandomPotential,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    rk4_integrate_state(ic.state(), potential, t_end, dt)
}
