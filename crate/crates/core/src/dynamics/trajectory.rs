use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::model::State;

/// Energies recorded at every sample (J).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    /// Open-loop Hamiltonian.
    pub h: f64,
    /// Closed-loop Hamiltonian (equal to `h` without feedback).
    pub h_d: f64,
    /// Storage function `H_d - q^T tau_ext`.
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Clamp policy zeroed a negative raw tension.
    Saturation { u1: f64, u2: f64 },
    /// Monitor policy applied a negative raw tension.
    ConstraintViolation { u1: f64, u2: f64 },
    /// A joint left `|q_i| <= pi/2` (one-based index).
    Boundary { index: usize },
    NonFinite,
    SolverWarning(String),
}

impl EventKind {
    /// Integer code written to the `event_flag` column.
    pub fn flag(&self) -> u8 {
        match self {
            EventKind::Saturation { .. } => 1,
            EventKind::ConstraintViolation { .. } => 2,
            EventKind::Boundary { .. } => 3,
            EventKind::NonFinite => 4,
            EventKind::SolverWarning(_) => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Sample index the event belongs to.
    pub step: usize,
    pub t: f64,
    pub kind: EventKind,
}

/// Time-indexed record of a simulation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<State>,
    /// Applied tensions `(u1, u2)` (N).
    pub inputs: Vec<[f64; 2]>,
    pub energies: Vec<Energies>,
    pub events: Vec<Event>,
    /// Per-sample minimal pretension, only filled under feedback.
    pub tau2_min_required: Vec<f64>,
}

impl Trajectory {
    pub fn with_capacity(cap: usize) -> Self {
        Trajectory {
            t: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap),
            inputs: Vec::with_capacity(cap),
            energies: Vec::with_capacity(cap),
            events: Vec::new(),
            tau2_min_required: Vec::with_capacity(cap),
        }
    }

    pub(crate) fn push(&mut self, t: f64, state: State, u: [f64; 2], e: Energies) {
        self.t.push(t);
        self.states.push(state);
        self.inputs.push(u);
        self.energies.push(e);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// Mean joint angle `q_sum / n` at every sample (rad).
    pub fn mean_angles(&self) -> Vec<f64> {
        self.states.iter().map(State::mean_angle).collect()
    }

    /// Mean and population standard deviation of the mean angle over `[t0, t1]`.
    pub fn mean_angle_stats(&self, t0: f64, t1: f64) -> Option<(f64, f64)> {
        let xs: Vec<f64> = self
            .t
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
            .map(|(_, s)| s.mean_angle())
            .collect();
        if xs.is_empty() {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        Some((mean, var.sqrt()))
    }

    pub fn count_events(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    pub fn max_tau2_min_required(&self) -> Option<f64> {
        self.tau2_min_required.iter().copied().reduce(f64::max)
    }

    /// CSV with columns `t, q_1..q_n, p_1..p_n, u1, u2, H, H_d, V, event_flag`.
    ///
    /// Floats carry 17 significant digits. `event_flag` is the largest
    /// [`EventKind::flag`] logged at that sample, or 0.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, State::n);
        let mut out = String::new();
        out.push('t');
        for i in 1..=n {
            let _ = write!(out, ",q_{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",p_{i}");
        }
        out.push_str(",u1,u2,H,H_d,V,event_flag\n");

        let mut flags = vec![0u8; self.len()];
        for e in &self.events {
            if let Some(f) = flags.get_mut(e.step) {
                *f = (*f).max(e.kind.flag());
            }
        }
        for (k, flag) in flags.iter().enumerate() {
            let s = &self.states[k];
            let e = &self.energies[k];
            let _ = write!(out, "{:.16e}", self.t[k]);
            for v in s.q.iter().chain(s.p.iter()) {
                let _ = write!(out, ",{v:.16e}");
            }
            let [u1, u2] = self.inputs[k];
            let _ = writeln!(
                out,
                ",{u1:.16e},{u2:.16e},{:.16e},{:.16e},{:.16e},{}",
                e.h, e.h_d, e.v, flag
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}
