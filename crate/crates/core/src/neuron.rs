//! Compartment dynamics and the gamma clock.
//!
//! Every compartment integrates with explicit Euler on a fixed grid of
//! `dt_ms` inside a gamma cycle, spikes at most once per cycle and is
//! reset at the cycle boundary. Spike times are the linearly interpolated
//! threshold crossing inside the step that crossed, so they are continuous
//! values in `[0, cycle_period_ms)` rather than grid indices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timing and compartment constants shared by every neuron in a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronConfig {
    pub dt_ms: f64,
    pub cycle_period_ms: f64,
    pub cycles_per_sniff: usize,
    /// Apical dendrite membrane time constant.
    pub apical_tau_ms: f64,
    /// Peak-to-trough amplitude of the apical conductance oscillation.
    pub g_base: f64,
    /// Conductance floor as a fraction of `g_base`.
    pub g_floor_frac: f64,
    pub soma_c_mem: f64,
    pub soma_v_th: f64,
    pub gc_tau_ms: f64,
    pub gc_g_const: f64,
    pub gc_tau_1_ms: f64,
    pub gc_tau_2_ms: f64,
    pub gc_e_nernst: f64,
    /// Strong soma pulse, as a multiple of the maximum regularized input.
    pub pulse_factor: f64,
    pub max_input_current: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            dt_ms: 0.025,
            cycle_period_ms: 25.0,
            cycles_per_sniff: 8,
            apical_tau_ms: 5.0,
            g_base: 1.0,
            g_floor_frac: 0.05,
            soma_c_mem: 1.0,
            soma_v_th: 1.0,
            gc_tau_ms: 5.0,
            gc_g_const: 1.0,
            gc_tau_1_ms: 2.0,
            gc_tau_2_ms: 1.0,
            gc_e_nernst: 70.0,
            pulse_factor: 10.0,
            max_input_current: 20.0,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_ms", self.dt_ms),
            ("cycle_period_ms", self.cycle_period_ms),
            ("apical_tau_ms", self.apical_tau_ms),
            ("g_base", self.g_base),
            ("soma_c_mem", self.soma_c_mem),
            ("soma_v_th", self.soma_v_th),
            ("gc_tau_ms", self.gc_tau_ms),
            ("gc_g_const", self.gc_g_const),
            ("gc_tau_1_ms", self.gc_tau_1_ms),
            ("gc_tau_2_ms", self.gc_tau_2_ms),
            ("pulse_factor", self.pulse_factor),
            ("max_input_current", self.max_input_current),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.g_floor_frac < 0.0 || !self.g_floor_frac.is_finite() {
            return Err(Error::Config("g_floor_frac must be >= 0".into()));
        }
        if self.cycles_per_sniff == 0 {
            return Err(Error::Config("cycles_per_sniff must be >= 1".into()));
        }
        if self.dt_ms >= self.cycle_period_ms {
            return Err(Error::Config("dt_ms must be smaller than one gamma cycle".into()));
        }
        if (self.gc_tau_1_ms - self.gc_tau_2_ms).abs() < 1e-12 {
            return Err(Error::Config("gc_tau_1_ms and gc_tau_2_ms must differ".into()));
        }
        Ok(())
    }

    pub fn steps_per_cycle(&self) -> usize {
        (self.cycle_period_ms / self.dt_ms).round() as usize
    }

    /// Soma drive pulse amplitude.
    pub fn pulse_current(&self) -> f64 {
        self.pulse_factor * self.max_input_current
    }

    /// Delay between pulse onset and the soma crossing threshold.
    pub fn pulse_latency_ms(&self) -> f64 {
        self.soma_v_th * self.soma_c_mem / self.pulse_current()
    }

    /// Apical conductance over the gamma cycle: highest at the cycle start,
    /// falling to `g_floor` at mid-cycle and rising again.
    pub fn apical_conductance(&self, t_ms: f64) -> f64 {
        let phase = 2.0 * PI * t_ms / self.cycle_period_ms;
        self.g_base * (1.0 + phase.cos()) / 2.0 + self.g_floor_frac * self.g_base
    }
}

/// Double-exponential synaptic kernel `τ1τ2/(τ1−τ2)(e^{−s/τ1} − e^{−s/τ2})`.
pub fn double_exponential(elapsed_ms: f64, tau_1: f64, tau_2: f64) -> f64 {
    if elapsed_ms < 0.0 {
        return 0.0;
    }
    tau_1 * tau_2 / (tau_1 - tau_2) * ((-elapsed_ms / tau_1).exp() - (-elapsed_ms / tau_2).exp())
}

/// Time at which the double-exponential kernel peaks.
pub fn double_exponential_peak_ms(tau_1: f64, tau_2: f64) -> f64 {
    (tau_1 / tau_2).ln() * tau_1 * tau_2 / (tau_1 - tau_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaClock {
    pub cycle_period_ms: f64,
    pub cycles_per_sniff: usize,
    pub dt_ms: f64,
    pub current_cycle: usize,
    step_in_cycle: usize,
    steps_per_cycle: usize,
}

impl GammaClock {
    pub fn new(config: &NeuronConfig) -> Self {
        Self {
            cycle_period_ms: config.cycle_period_ms,
            cycles_per_sniff: config.cycles_per_sniff,
            dt_ms: config.dt_ms,
            current_cycle: 0,
            step_in_cycle: 0,
            steps_per_cycle: config.steps_per_cycle(),
        }
    }

    pub fn current_time_in_cycle(&self) -> f64 {
        self.step_in_cycle as f64 * self.dt_ms
    }

    pub fn step_in_cycle(&self) -> usize {
        self.step_in_cycle
    }

    pub fn steps_per_cycle(&self) -> usize {
        self.steps_per_cycle
    }

    pub fn sniff_duration_ms(&self) -> f64 {
        self.cycle_period_ms * self.cycles_per_sniff as f64
    }

    /// Advances one step. Returns `true` when the step completed a cycle;
    /// the caller is then expected to reset its compartments.
    pub fn tick(&mut self) -> bool {
        self.step_in_cycle += 1;
        if self.step_in_cycle == self.steps_per_cycle {
            self.step_in_cycle = 0;
            self.current_cycle += 1;
            true
        } else {
            false
        }
    }

    pub fn sniff_finished(&self) -> bool {
        self.current_cycle >= self.cycles_per_sniff
    }
}

fn crossing_time(t0: f64, dt: f64, v0: f64, v1: f64, v_th: f64) -> f64 {
    if v1 <= v0 {
        return t0 + dt;
    }
    let frac = ((v_th - v0) / (v1 - v0)).clamp(0.0, 1.0);
    t0 + frac * dt
}

/// Mitral cell apical dendrite: a leaky integrator whose conductance
/// oscillates with the gamma cycle, turning input level into spike phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ApicalDendrite {
    pub v: f64,
    pub tau_m: f64,
    pub g_base: f64,
    pub v_th: f64,
    pub input_current: f64,
    pub has_spiked_this_cycle: bool,
    pub spike_time: Option<f64>,
}

impl ApicalDendrite {
    pub fn new(config: &NeuronConfig, v_th: f64, input_current: f64) -> Self {
        Self {
            v: 0.0,
            tau_m: config.apical_tau_ms,
            g_base: config.g_base,
            v_th,
            input_current,
            has_spiked_this_cycle: false,
            spike_time: None,
        }
    }

    pub fn step(&mut self, clock: &GammaClock, config: &NeuronConfig) -> Result<Option<f64>> {
        if self.has_spiked_this_cycle {
            return Ok(None);
        }
        let t = clock.current_time_in_cycle();
        let g = config.apical_conductance(t);
        let v0 = self.v;
        let v1 = v0 + clock.dt_ms / self.tau_m * (-v0 + self.input_current / g);
        if !v1.is_finite() {
            return Err(Error::NonFinite {
                compartment: "apical dendrite",
                time_ms: t,
            });
        }
        if v1 >= self.v_th {
            let t_spike = crossing_time(t, clock.dt_ms, v0, v1, self.v_th);
            self.v = 0.0;
            self.has_spiked_this_cycle = true;
            self.spike_time = Some(t_spike);
            return Ok(Some(t_spike));
        }
        self.v = v1;
        Ok(None)
    }

    pub fn reset(&mut self) {
        self.v = 0.0;
        self.has_spiked_this_cycle = false;
        self.spike_time = None;
    }

    /// Spike time of a fresh dendrite over one full cycle. The apical input is
    /// constant over a sniff, so this is the same for every cycle.
    pub fn cycle_spike_time(config: &NeuronConfig, v_th: f64, input_current: f64) -> Result<Option<f64>> {
        if input_current <= 0.0 {
            return Ok(None);
        }
        let mut cell = Self::new(config, v_th, input_current);
        let mut clock = GammaClock::new(config);
        loop {
            if let Some(t) = cell.step(&clock, config)? {
                return Ok(Some(t));
            }
            if clock.tick() {
                return Ok(None);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveMode {
    FollowApical,
    InhibitoryDrive,
}

/// Mitral cell soma: a perfect integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct MitralSoma {
    pub v: f64,
    pub c_mem: f64,
    pub v_th: f64,
    pub spike_time: Option<f64>,
    pub drive_mode: DriveMode,
}

impl MitralSoma {
    pub fn new(config: &NeuronConfig) -> Self {
        Self {
            v: 0.0,
            c_mem: config.soma_c_mem,
            v_th: config.soma_v_th,
            spike_time: None,
            drive_mode: DriveMode::FollowApical,
        }
    }

    /// Drive mode for a 1-based cycle index.
    pub fn mode_for_cycle(cycle: usize, drive_start_cycle: usize) -> DriveMode {
        if cycle >= drive_start_cycle {
            DriveMode::InhibitoryDrive
        } else {
            DriveMode::FollowApical
        }
    }

    pub fn step(&mut self, drive_current: f64, clock: &GammaClock) -> Result<Option<f64>> {
        if self.spike_time.is_some() {
            return Ok(None);
        }
        let t = clock.current_time_in_cycle();
        let v0 = self.v;
        let v1 = v0 + clock.dt_ms * drive_current / self.c_mem;
        if !v1.is_finite() {
            return Err(Error::NonFinite {
                compartment: "mitral soma",
                time_ms: t,
            });
        }
        if v1 >= self.v_th {
            let t_spike = crossing_time(t, clock.dt_ms, v0, v1, self.v_th);
            self.v = 0.0;
            self.spike_time = Some(t_spike);
            return Ok(Some(t_spike));
        }
        self.v = v1;
        Ok(None)
    }

    pub fn reset(&mut self) {
        self.v = 0.0;
        self.spike_time = None;
    }
}

/// Granule cell: conductance-based leaky integrator driven by
/// double-exponential synapses.
#[derive(Debug, Clone, PartialEq)]
pub struct GranuleCell {
    pub v: f64,
    pub v_th: f64,
    pub tau_m: f64,
    pub g_const: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    pub g_max: f64,
    pub e_nernst: f64,
    pub column: usize,
    pub is_learning: bool,
    pub is_differentiated: bool,
    pub has_spiked_this_cycle: bool,
}

impl GranuleCell {
    pub fn new(config: &NeuronConfig, v_th: f64, g_max: f64, column: usize, is_learning: bool) -> Self {
        Self {
            v: 0.0,
            v_th,
            tau_m: config.gc_tau_ms,
            g_const: config.gc_g_const,
            tau_1: config.gc_tau_1_ms,
            tau_2: config.gc_tau_2_ms,
            g_max,
            e_nernst: config.gc_e_nernst,
            column,
            is_learning,
            is_differentiated: false,
            has_spiked_this_cycle: false,
        }
    }

    /// Total synaptic conductance at `t_ms` from `(weight, spike_time)` pairs.
    pub fn conductance(&self, presyn_spikes: &[(f64, f64)], t_ms: f64) -> f64 {
        presyn_spikes
            .iter()
            .filter(|(_, t_i)| *t_i <= t_ms)
            .map(|(w, t_i)| w * self.g_max * double_exponential(t_ms - t_i, self.tau_1, self.tau_2))
            .sum()
    }

    pub fn step(&mut self, presyn_spikes: &[(f64, f64)], clock: &GammaClock) -> Result<Option<f64>> {
        if self.has_spiked_this_cycle {
            return Ok(None);
        }
        let t = clock.current_time_in_cycle();
        let g_w = self.conductance(presyn_spikes, t);
        let v0 = self.v;
        let current = g_w * (self.e_nernst - v0);
        let v1 = v0 + clock.dt_ms / self.tau_m * (-v0 + current / self.g_const);
        if !v1.is_finite() {
            return Err(Error::NonFinite {
                compartment: "granule cell",
                time_ms: t,
            });
        }
        if v1 >= self.v_th {
            let t_spike = crossing_time(t, clock.dt_ms, v0, v1, self.v_th);
            self.v = 0.0;
            self.has_spiked_this_cycle = true;
            return Ok(Some(t_spike));
        }
        self.v = v1;
        Ok(None)
    }

    pub fn reset(&mut self) {
        self.v = 0.0;
        self.has_spiked_this_cycle = false;
    }
}

/// Constants for the event-driven granule cell integrator.
#[derive(Debug, Clone, Copy)]
pub struct GcKernel {
    pub dt: f64,
    pub steps: usize,
    pub tau_m: f64,
    pub g_const: f64,
    pub g_max: f64,
    pub e_nernst: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    decay_1: f64,
    decay_2: f64,
    kernel_scale: f64,
    peak_ms: f64,
}

impl GcKernel {
    pub fn new(config: &NeuronConfig, g_max: f64) -> Self {
        let (t1, t2) = (config.gc_tau_1_ms, config.gc_tau_2_ms);
        Self {
            dt: config.dt_ms,
            steps: config.steps_per_cycle(),
            tau_m: config.gc_tau_ms,
            g_const: config.gc_g_const,
            g_max,
            e_nernst: config.gc_e_nernst,
            tau_1: t1,
            tau_2: t2,
            decay_1: (-config.dt_ms / t1).exp(),
            decay_2: (-config.dt_ms / t2).exp(),
            kernel_scale: t1 * t2 / (t1 - t2),
            peak_ms: double_exponential_peak_ms(t1, t2),
        }
    }

    /// Integrates one granule cell over a gamma cycle given its presynaptic
    /// events sorted by time. Produces the same trajectory as stepping
    /// [`GranuleCell::step`] over the whole cycle, but keeps the two kernel
    /// exponentials as running traces and stops once the cell can no longer
    /// reach threshold.
    pub fn spike_time(&self, events: &[(f64, f64)], v_th: f64) -> Option<f64> {
        self.run(events, v_th).0
    }

    /// Like [`GcKernel::spike_time`] but also returns the membrane potential
    /// where integration stopped.
    pub fn run(&self, events: &[(f64, f64)], v_th: f64) -> (Option<f64>, f64) {
        let Some(first) = events.first() else {
            return (None, 0.0);
        };
        let last_t = events.last().map(|e| e.1).unwrap_or(first.1);
        let mut k = (first.1 / self.dt).ceil() as usize;
        let mut next = 0;
        let (mut a, mut b) = (0.0_f64, 0.0_f64);
        let mut v = 0.0_f64;
        while k < self.steps {
            let t = k as f64 * self.dt;
            while next < events.len() && events[next].1 <= t {
                let (w, t_i) = events[next];
                let s = t - t_i;
                a += w * (-s / self.tau_1).exp();
                b += w * (-s / self.tau_2).exp();
                next += 1;
            }
            let g_w = self.g_max * self.kernel_scale * (a - b);
            let dv = self.dt / self.tau_m * (-v + g_w * (self.e_nernst - v) / self.g_const);
            let v1 = v + dv;
            if v1 >= v_th {
                return (Some(crossing_time(t, self.dt, v, v1, v_th)), v1);
            }
            if next == events.len() && dv <= 0.0 && t > last_t + self.peak_ms {
                return (None, v1);
            }
            v = v1;
            a *= self.decay_1;
            b *= self.decay_2;
            k += 1;
        }
        (None, v)
    }

    /// Peak membrane potential reached by a single input of weight `w`.
    pub fn single_input_peak(&self, w: f64) -> f64 {
        let mut a = w;
        let mut b = w;
        let mut v = 0.0_f64;
        let mut peak = 0.0_f64;
        for _ in 0..self.steps {
            let g_w = self.g_max * self.kernel_scale * (a - b);
            v += self.dt / self.tau_m * (-v + g_w * (self.e_nernst - v) / self.g_const);
            peak = peak.max(v);
            a *= self.decay_1;
            b *= self.decay_2;
        }
        peak
    }
}

/// Finds `g_max` such that a single input of weight `w` peaks at exactly
/// `v_target` millivolts.
pub fn calibrate_g_max(config: &NeuronConfig, w: f64, v_target: f64) -> f64 {
    let peak = |g: f64| GcKernel::new(config, g).single_input_peak(w);
    let (mut lo, mut hi) = (0.0_f64, 1e-3_f64);
    while peak(hi) < v_target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if peak(mid) < v_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
