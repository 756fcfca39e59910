//! The recurrent mitral/granule layer.
//!
//! Within a gamma cycle the mitral somata fire first (their times are fixed
//! at cycle start, either copied from the apical dendrites or imposed by
//! granule-cell drive), then every granule cell integrates the somatic
//! spikes it receives. Drive for cycle `c` is selected from the granule
//! spikes of cycle `c - 1`.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{calibrate_g_max, ApicalDendrite, GcKernel, NeuronConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StdpConfig {
    pub a_p: f64,
    pub a_n: f64,
    pub tau_p: f64,
    pub tau_n: f64,
    pub w_scale: f64,
}

impl Default for StdpConfig {
    fn default() -> Self {
        Self {
            a_p: 0.05,
            a_n: 9.0,
            tau_p: 5.0,
            tau_n: 25.0,
            w_scale: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EplConfig {
    pub neuron: NeuronConfig,
    pub mc_vth_min: f64,
    pub mc_vth_max: f64,
    pub gc_vth_min: f64,
    pub gc_vth_max: f64,
    pub k_cp: f64,
    pub k_vth: f64,
    pub conv_min: f64,
    pub conv_max: f64,
    pub n_learning_gc_per_column: usize,
    pub n_nonlearning_gc_per_column: usize,
    /// Absolute MC fan-in of non-learning GCs. `None` derives it from the
    /// convergence ratio at the reference dimension, capped by the number
    /// of MCs.
    pub nonlearning_fan_in: Option<usize>,
    pub w_init: f64,
    /// Upper bound of the per-synapse cap, as a multiple of `w_init`.
    pub w_cap_factor: f64,
    pub stdp: StdpConfig,
    /// 1-based cycle from which granule cells drive the somata.
    pub drive_start_cycle: usize,
    /// Fixed synaptic conductance scale; `None` calibrates it.
    pub g_max: Option<f64>,
    /// Peak depolarization of one `w_init` input, as a fraction of
    /// `gc_vth_min`, used when calibrating `g_max`.
    pub single_input_peak: f64,
    pub neurogenesis: bool,
    /// Whether stored drive vectors shape the somata while a new odor is
    /// being learned. Off keeps each stored pattern equal to the odor's own
    /// apical code.
    pub drive_during_training: bool,
    pub vote_rule: VoteRule,
    /// Per-entry tolerance when comparing stored drive vectors; defaults to dt.
    pub drive_tolerance_ms: Option<f64>,
    pub rng_seed: u64,
}

impl Default for EplConfig {
    fn default() -> Self {
        Self {
            neuron: NeuronConfig::default(),
            mc_vth_min: 0.8,
            mc_vth_max: 12.8,
            gc_vth_min: 0.8,
            gc_vth_max: 2.4,
            k_cp: 0.45,
            k_vth: 0.9,
            conv_min: 0.4,
            conv_max: 0.8,
            n_learning_gc_per_column: 50,
            n_nonlearning_gc_per_column: 75,
            nonlearning_fan_in: None,
            w_init: 18.0,
            w_cap_factor: 1.5,
            stdp: StdpConfig::default(),
            drive_start_cycle: 3,
            g_max: None,
            single_input_peak: 0.036,
            neurogenesis: true,
            drive_during_training: false,
            vote_rule: VoteRule::Jaccard,
            drive_tolerance_ms: None,
            rng_seed: 0,
        }
    }
}

impl EplConfig {
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        let open_unit = |k: f64| k > -1.0 && k < 1.0;
        if !open_unit(self.k_cp) || !open_unit(self.k_vth) {
            return Err(Error::Config("k_cp and k_vth must lie in (-1, 1)".into()));
        }
        if !(self.conv_min > 0.0 && self.conv_min <= self.conv_max && self.conv_max <= 1.0) {
            return Err(Error::Config("need 0 < conv_min <= conv_max <= 1".into()));
        }
        if !(self.mc_vth_min > 0.0 && self.mc_vth_min <= self.mc_vth_max) {
            return Err(Error::Config("need 0 < mc_vth_min <= mc_vth_max".into()));
        }
        if !(self.gc_vth_min > 0.0 && self.gc_vth_min <= self.gc_vth_max) {
            return Err(Error::Config("need 0 < gc_vth_min <= gc_vth_max".into()));
        }
        if !(self.w_init > 0.0 && self.w_cap_factor >= 1.0) {
            return Err(Error::Config("need w_init > 0 and w_cap_factor >= 1".into()));
        }
        if self.drive_start_cycle == 0 {
            return Err(Error::Config("drive_start_cycle is 1-based".into()));
        }
        if let Some(g) = self.g_max {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config("g_max must be positive".into()));
            }
        }
        if !(self.single_input_peak > 0.0) {
            return Err(Error::Config("single_input_peak must be positive".into()));
        }
        let s = &self.stdp;
        if !(s.tau_p > 0.0 && s.tau_n > 0.0 && s.a_p >= 0.0 && s.a_n >= 0.0 && s.w_scale >= 0.0) {
            return Err(Error::Config("STDP constants must be non-negative with positive time constants".into()));
        }
        Ok(())
    }

    pub fn drive_tolerance(&self) -> f64 {
        self.drive_tolerance_ms.unwrap_or(self.neuron.dt_ms)
    }

    pub fn resolved_g_max(&self) -> f64 {
        self.g_max.unwrap_or_else(|| {
            calibrate_g_max(&self.neuron, self.w_init, self.single_input_peak * self.gc_vth_min)
        })
    }
}

/// How spiking granule cells elect a drive vector in their column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    /// Raw number of spiking cells per stored vector.
    Count,
    /// Spiking cells per stored vector divided by the number of cells
    /// holding that vector.
    Fraction,
    /// Jaccard overlap between the spiking cells and the cells holding
    /// each stored vector.
    #[default]
    Jaccard,
}

/// Layer sizes: `columns` glomeruli with `sisters` MCs each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub columns: usize,
    pub sisters: usize,
    pub reference_dimension: usize,
}

impl Topology {
    pub fn n_mc(&self) -> usize {
        self.columns * self.sisters
    }
}

/// Normalized tunable sigmoid on `[0, 1]`; `k = 0` is the identity,
/// positive `k` pushes mass toward 0, negative toward 1.
pub fn tunable_sigmoid(x: f64, k: f64) -> f64 {
    (x - k * x) / (k - 2.0 * k * x.abs() + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub mc: u32,
    pub weight: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GcRole {
    NonLearning,
    Learning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveWeights {
    /// Learned sister-soma spike times; `None` where the sister was silent.
    pub times: Vec<Option<f64>>,
    pub memory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Granule {
    pub column: usize,
    pub v_th: f64,
    pub convergence: f64,
    pub role: GcRole,
    pub locked: bool,
    pub synapses: Vec<Synapse>,
    pub drive: Option<DriveWeights>,
    /// Drive memories a non-learning cell was grouped with during training.
    pub groups: Vec<usize>,
}

impl Granule {
    pub fn is_learning(&self) -> bool {
        self.role == GcRole::Learning
    }

    pub fn is_plastic(&self) -> bool {
        self.role == GcRole::Learning && !self.locked
    }
}

/// A distinct sister-time vector learned in one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveMemory {
    pub column: usize,
    pub times: Vec<Option<f64>>,
}

/// Mitral soma spike times: one optional time per MC per gamma cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePattern {
    pub cycles: Vec<Vec<Option<f64>>>,
    pub label: Option<String>,
}

impl SpikePattern {
    pub fn last_cycle(&self) -> &[Option<f64>] {
        self.cycles.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPattern {
    pub label: String,
    pub pattern: Vec<Option<f64>>,
}

/// Everything observed during one sniff.
#[derive(Debug, Clone, PartialEq)]
pub struct SniffRecord {
    pub apical: Vec<Option<f64>>,
    pub pattern: SpikePattern,
    /// Per cycle, the indices of granule cells that spiked.
    pub gc_spikes: Vec<Vec<usize>>,
    /// Learning GCs locked at the end of a training sniff.
    pub newly_locked: Vec<usize>,
    /// Granule cells added by neurogenesis at the end of a training sniff.
    pub born: usize,
}

impl SniffRecord {
    /// Union of granule cells that spiked in any cycle.
    pub fn active_granules(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.gc_spikes.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Ephemeral membrane state of one gamma cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleActivity {
    pub soma_v: Vec<f64>,
    pub soma_spike: Vec<Option<f64>>,
    pub gc_v: Vec<f64>,
    pub gc_spike: Vec<Option<f64>>,
}

impl CycleActivity {
    pub fn new(n_mc: usize, n_gc: usize) -> Self {
        Self {
            soma_v: vec![0.0; n_mc],
            soma_spike: vec![None; n_mc],
            gc_v: vec![0.0; n_gc],
            gc_spike: vec![None; n_gc],
        }
    }

    /// Clears potentials and spike flags at a gamma-cycle boundary.
    pub fn reset_cycle(&mut self, n_gc: usize) {
        self.soma_v.iter_mut().for_each(|v| *v = 0.0);
        self.soma_spike.iter_mut().for_each(|s| *s = None);
        self.gc_v.clear();
        self.gc_v.resize(n_gc, 0.0);
        self.gc_spike.clear();
        self.gc_spike.resize(n_gc, None);
    }
}

/// STDP on one granule cell's afferents at the end of a cycle in which it
/// spiked at `gc_time`.
pub fn stdp_update(synapses: &mut [Synapse], mc_times: &[Option<f64>], gc_time: f64, stdp: &StdpConfig) {
    for syn in synapses.iter_mut() {
        syn.weight = match mc_times[syn.mc as usize] {
            Some(v) if v <= gc_time => (syn.weight + stdp.a_p * ((v - gc_time) / stdp.tau_p).exp()).min(syn.cap),
            None => (syn.weight - stdp.w_scale).max(0.0),
            Some(v) => (syn.weight - stdp.a_n * (-(v - gc_time) / stdp.tau_n).exp()).max(0.0),
        };
    }
}

fn vectors_match(a: &[Option<f64>], b: &[Option<f64>], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => (x - y).abs() <= tol,
            (None, None) => true,
            _ => false,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EplState {
    pub config: EplConfig,
    pub topology: Topology,
    pub g_max: f64,
    /// Apical thresholds, one per MC.
    pub mc_thresholds: Vec<f64>,
    pub granules: Vec<Granule>,
    pub memories: Vec<DriveMemory>,
    pub store: Vec<TrainedPattern>,
    pub odors_trained: usize,
}

impl EplState {
    pub fn build(config: EplConfig, topology: Topology) -> Result<Self> {
        config.validate()?;
        if topology.columns == 0 || topology.sisters == 0 || topology.reference_dimension == 0 {
            return Err(Error::Build("topology sizes must be >= 1".into()));
        }
        let n_mc = topology.n_mc();
        let q = topology.sisters;
        let sister_thresholds: Vec<f64> = (0..q)
            .map(|s| {
                if q == 1 {
                    config.mc_vth_min
                } else {
                    config.mc_vth_min + (config.mc_vth_max - config.mc_vth_min) * s as f64 / (q - 1) as f64
                }
            })
            .collect();
        let mc_thresholds = (0..n_mc).map(|m| sister_thresholds[m % q]).collect();

        let ladder = Self::ladder(&config, &topology);
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut granules = Vec::with_capacity(ladder.len() * topology.columns);
        for column in 0..topology.columns {
            for rung in &ladder {
                let fan_in = rung.fan_in;
                if fan_in > n_mc {
                    return Err(Error::Build(format!(
                        "granule fan-in {fan_in} exceeds the {n_mc} available mitral cells"
                    )));
                }
                granules.push(Granule {
                    column,
                    v_th: rung.v_th,
                    convergence: rung.convergence,
                    role: rung.role,
                    locked: false,
                    synapses: draw_synapses(&mut rng, n_mc, fan_in, &config),
                    drive: None,
                    groups: Vec::new(),
                });
            }
        }
        let g_max = config.resolved_g_max();
        Ok(Self {
            config,
            topology,
            g_max,
            mc_thresholds,
            granules,
            memories: Vec::new(),
            store: Vec::new(),
            odors_trained: 0,
        })
    }

    /// Per-column threshold ladder, lowest thresholds first.
    fn ladder(config: &EplConfig, topology: &Topology) -> Vec<Rung> {
        let n_nl = config.n_nonlearning_gc_per_column;
        let n = n_nl + config.n_learning_gc_per_column;
        let scale = topology.columns as f64 / topology.reference_dimension as f64;
        let learning_max = config.gc_vth_max * scale;
        let nl_reference_mcs = topology.reference_dimension * topology.sisters;
        (0..n)
            .map(|i| {
                let x = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let y_th = tunable_sigmoid(x, config.k_vth);
                let y_cp = tunable_sigmoid(x, config.k_cp);
                let convergence = config.conv_min + y_cp * (config.conv_max - config.conv_min);
                if i < n_nl {
                    Rung {
                        v_th: config.gc_vth_min + y_th * (config.gc_vth_max - config.gc_vth_min),
                        convergence,
                        role: GcRole::NonLearning,
                        fan_in: config
                            .nonlearning_fan_in
                            .unwrap_or_else(|| {
                                let conserved = (convergence * nl_reference_mcs as f64).round() as usize;
                                conserved.min(topology.n_mc())
                            })
                            .max(1),
                    }
                } else {
                    Rung {
                        v_th: config.gc_vth_min + y_th * (learning_max - config.gc_vth_min),
                        convergence,
                        role: GcRole::Learning,
                        fan_in: ((convergence * topology.n_mc() as f64).round() as usize).max(1),
                    }
                }
            })
            .collect()
    }

    pub fn n_mc(&self) -> usize {
        self.topology.n_mc()
    }

    pub fn n_gc(&self) -> usize {
        self.granules.len()
    }

    pub fn column_of_mc(&self, mc: usize) -> usize {
        mc / self.topology.sisters
    }

    pub fn is_trained(&self, label: &str) -> bool {
        self.store.iter().any(|p| p.label == label)
    }

    fn kernel(&self) -> GcKernel {
        GcKernel::new(&self.config.neuron, self.g_max)
    }

    /// Apical spike times for a sniff; constant input gives the same time
    /// every cycle.
    pub fn apical_times(&self, mc_input: &[f64]) -> Result<Vec<Option<f64>>> {
        if mc_input.len() != self.n_mc() {
            return Err(Error::DimensionMismatch {
                expected: self.n_mc(),
                actual: mc_input.len(),
            });
        }
        mc_input
            .iter()
            .zip(&self.mc_thresholds)
            .map(|(&current, &v_th)| ApicalDendrite::cycle_spike_time(&self.config.neuron, v_th, current))
            .collect()
    }

    fn follow_apical(&self, apical: Option<f64>) -> Option<f64> {
        let neuron = &self.config.neuron;
        apical
            .map(|t| t + neuron.pulse_latency_ms())
            .filter(|&t| t < neuron.cycle_period_ms)
    }

    /// Picks the drive vector for `column` by plurality over the stored
    /// vectors of the granule cells that spiked. Non-learning cells vote for
    /// every memory they were grouped with. Ties go to the earliest memory.
    pub fn select_drive(&self, column: usize, spiked: &[usize]) -> Option<&DriveMemory> {
        let mut votes: Vec<(usize, f64)> = Vec::new();
        let tally = |votes: &mut Vec<(usize, f64)>, memory: usize, amount: f64| {
            match votes.iter_mut().find(|(m, _)| *m == memory) {
                Some(entry) => entry.1 += amount,
                None => votes.push((memory, amount)),
            }
        };
        for &j in spiked {
            let gc = &self.granules[j];
            if gc.column != column {
                continue;
            }
            match gc.role {
                GcRole::Learning => {
                    if let Some(drive) = &gc.drive {
                        tally(&mut votes, drive.memory, 1.0);
                    }
                }
                GcRole::NonLearning => gc.groups.iter().for_each(|&m| tally(&mut votes, m, 1.0)),
            }
        }
        if self.config.vote_rule != VoteRule::Count {
            let mut sizes: Vec<(usize, f64)> = Vec::new();
            for gc in self.granules.iter().filter(|g| g.column == column) {
                match (&gc.role, &gc.drive) {
                    (GcRole::Learning, Some(drive)) => tally(&mut sizes, drive.memory, 1.0),
                    (GcRole::NonLearning, _) => gc.groups.iter().for_each(|&m| tally(&mut sizes, m, 1.0)),
                    _ => {}
                }
            }
            let n_voters = spiked
                .iter()
                .filter(|&&j| {
                    let gc = &self.granules[j];
                    gc.column == column
                        && match gc.role {
                            GcRole::Learning => gc.drive.is_some(),
                            GcRole::NonLearning => !gc.groups.is_empty(),
                        }
                })
                .count() as f64;
            for (m, v) in votes.iter_mut() {
                let size = sizes.iter().find(|(k, _)| k == m).map_or(1.0, |e| e.1);
                *v = match self.config.vote_rule {
                    VoteRule::Fraction => *v / size,
                    _ => *v / (n_voters + size - *v),
                };
            }
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(m, _)| &self.memories[m])
    }

    /// Soma spike times of every MC for a 1-based cycle, given the granule
    /// cells that spiked in the previous cycle.
    pub fn apply_inhibitory_drive(&self, apical: &[Option<f64>], cycle: usize, prev_spiked: &[usize]) -> Vec<Option<f64>> {
        let q = self.topology.sisters;
        let mut soma: Vec<Option<f64>> = apical.iter().map(|&t| self.follow_apical(t)).collect();
        if cycle < self.config.drive_start_cycle || prev_spiked.is_empty() {
            return soma;
        }
        let mut by_column: Vec<Vec<usize>> = vec![Vec::new(); self.topology.columns];
        for &j in prev_spiked {
            by_column[self.granules[j].column].push(j);
        }
        for (column, spiked) in by_column.iter().enumerate() {
            if spiked.is_empty() {
                continue;
            }
            if let Some(memory) = self.select_drive(column, spiked) {
                soma[column * q..(column + 1) * q].copy_from_slice(&memory.times);
            }
        }
        soma
    }

    fn register_memory(&mut self, column: usize, times: &[Option<f64>]) -> usize {
        let tol = self.config.drive_tolerance();
        if let Some(idx) = self
            .memories
            .iter()
            .position(|m| m.column == column && vectors_match(&m.times, times, tol))
        {
            return idx;
        }
        self.memories.push(DriveMemory {
            column,
            times: times.to_vec(),
        });
        self.memories.len() - 1
    }

    /// Stores the sister-soma times of `column` in every plastic learning
    /// granule cell of that column that spiked, and groups the column's
    /// spiking non-learning cells with the same memory.
    pub fn learn_inhibitory_drive(&mut self, column: usize, sister_times: &[Option<f64>], spiked: &[usize]) {
        let learners: Vec<usize> = spiked
            .iter()
            .copied()
            .filter(|&j| self.granules[j].column == column && self.granules[j].is_plastic())
            .collect();
        if learners.is_empty() {
            return;
        }
        let memory = self.register_memory(column, sister_times);
        for j in learners {
            self.granules[j].drive = Some(DriveWeights {
                times: sister_times.to_vec(),
                memory,
            });
        }
        for &j in spiked {
            let gc = &mut self.granules[j];
            if gc.column == column && gc.role == GcRole::NonLearning && !gc.groups.contains(&memory) {
                gc.groups.push(memory);
            }
        }
    }

    /// Replaces the granule cells in `replaced` (all from `column`) with
    /// naive newborns that copy their threshold and convergence ratio.
    pub fn neurogenesis(&mut self, column: usize, replaced: &[usize]) -> usize {
        let cap = self.config.n_learning_gc_per_column;
        let n_mc = self.n_mc();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config
                .rng_seed
                .wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul((self.odors_trained as u64 + 1) << 16 | column as u64)),
        );
        let mut born = 0;
        for &j in replaced.iter().take(cap) {
            let template = &self.granules[j];
            debug_assert_eq!(template.column, column);
            let fan_in = ((template.convergence * n_mc as f64).round() as usize).clamp(1, n_mc);
            let newborn = Granule {
                column,
                v_th: template.v_th,
                convergence: template.convergence,
                role: GcRole::Learning,
                locked: false,
                synapses: draw_synapses(&mut rng, n_mc, fan_in, &self.config),
                drive: None,
                groups: Vec::new(),
            };
            self.granules.push(newborn);
            born += 1;
        }
        born
    }

    /// Somatic spike times and the granule cells that spike in one cycle
    /// without drive or plasticity.
    pub fn naive_cycle(&self, mc_input: &[f64]) -> Result<(Vec<Option<f64>>, Vec<usize>)> {
        let apical = self.apical_times(mc_input)?;
        let soma: Vec<Option<f64>> = apical.iter().map(|&t| self.follow_apical(t)).collect();
        let mut activity = CycleActivity::new(self.n_mc(), self.n_gc());
        self.simulate_granules(&soma, &mut activity, &self.kernel());
        let spiked = (0..self.n_gc()).filter(|&j| activity.gc_spike[j].is_some()).collect();
        Ok((soma, spiked))
    }

    fn simulate_granules(&self, soma: &[Option<f64>], activity: &mut CycleActivity, kernel: &GcKernel) {
        let mut events: Vec<(f64, f64)> = Vec::with_capacity(128);
        for (j, gc) in self.granules.iter().enumerate() {
            events.clear();
            events.extend(
                gc.synapses
                    .iter()
                    .filter(|s| s.weight > 0.0)
                    .filter_map(|s| soma[s.mc as usize].map(|t| (s.weight, t))),
            );
            events.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (spike, v) = kernel.run(&events, gc.v_th);
            activity.gc_spike[j] = spike;
            activity.gc_v[j] = v;
        }
    }

    fn sniff(&mut self, mc_input: &[f64], phase: Phase) -> Result<SniffRecord> {
        let apical = self.apical_times(mc_input)?;
        let kernel = self.kernel();
        let q = self.topology.sisters;
        let n_cycles = self.config.neuron.cycles_per_sniff;
        let mut activity = CycleActivity::new(self.n_mc(), self.n_gc());
        let mut cycles = Vec::with_capacity(n_cycles);
        let mut gc_spikes: Vec<Vec<usize>> = Vec::with_capacity(n_cycles);
        let mut spiked_in_sniff = vec![false; self.n_gc()];
        let mut prev: Vec<usize> = Vec::new();
        let mut prev_gc_spike: Vec<Option<f64>> = Vec::new();
        for cycle in 1..=n_cycles {
            let driving = phase == Phase::Test || self.config.drive_during_training;
            let soma = self.apply_inhibitory_drive(&apical, cycle, if driving { &prev } else { &[] });
            // Without plasticity a repeated somatic pattern repeats the granule response.
            if phase == Phase::Test && cycles.last() == Some(&soma) {
                activity.gc_spike.copy_from_slice(&prev_gc_spike);
            } else {
                activity.soma_spike.copy_from_slice(&soma);
                self.simulate_granules(&soma, &mut activity, &kernel);
            }
            let spiked: Vec<usize> = (0..self.n_gc()).filter(|&j| activity.gc_spike[j].is_some()).collect();
            if phase == Phase::Train {
                let stdp = self.config.stdp.clone();
                for &j in &spiked {
                    spiked_in_sniff[j] = true;
                    let gc = &mut self.granules[j];
                    if gc.is_plastic() {
                        let u = activity.gc_spike[j].expect("spiked");
                        stdp_update(&mut gc.synapses, &soma, u, &stdp);
                    }
                }
                for column in 0..self.topology.columns {
                    self.learn_inhibitory_drive(column, &soma[column * q..(column + 1) * q], &spiked);
                }
            }
            cycles.push(soma);
            gc_spikes.push(spiked.clone());
            prev = spiked;
            if phase == Phase::Test {
                prev_gc_spike.clone_from(&activity.gc_spike);
            }
            activity.reset_cycle(self.n_gc());
        }
        let pattern = SpikePattern { cycles, label: None };
        let mut record = SniffRecord {
            apical,
            pattern,
            gc_spikes,
            newly_locked: Vec::new(),
            born: 0,
        };
        if phase == Phase::Train {
            record.newly_locked = self.lock_differentiated(&spiked_in_sniff);
            if self.config.neurogenesis {
                for column in 0..self.topology.columns {
                    let replaced: Vec<usize> = record
                        .newly_locked
                        .iter()
                        .copied()
                        .filter(|&j| self.granules[j].column == column)
                        .collect();
                    record.born += self.neurogenesis(column, &replaced);
                }
            }
        }
        Ok(record)
    }

    /// Locks plastic learning cells that spiked and hold at least one synapse
    /// at its cap, pruning their zero-weight afferents.
    fn lock_differentiated(&mut self, spiked_in_sniff: &[bool]) -> Vec<usize> {
        let mut locked = Vec::new();
        for (j, gc) in self.granules.iter_mut().enumerate() {
            if !spiked_in_sniff[j] || !gc.is_plastic() {
                continue;
            }
            if gc.synapses.iter().any(|s| s.weight >= s.cap) {
                gc.locked = true;
                gc.synapses.retain(|s| s.weight > 0.0);
                locked.push(j);
            }
        }
        locked
    }

    /// One training sniff: STDP and drive learning on, then locking,
    /// neurogenesis and storage of the last-cycle pattern under `label`.
    pub fn train_one_shot(&mut self, mc_input: &[f64], label: &str) -> Result<SniffRecord> {
        if self.is_trained(label) {
            return Err(Error::AlreadyTrained(label.to_string()));
        }
        let mut record = self.sniff(mc_input, Phase::Train)?;
        record.pattern.label = Some(label.to_string());
        self.store.push(TrainedPattern {
            label: label.to_string(),
            pattern: record.pattern.last_cycle().to_vec(),
        });
        self.odors_trained += 1;
        Ok(record)
    }

    /// Presents a sample without any plasticity.
    pub fn test(&self, mc_input: &[f64]) -> Result<SniffRecord> {
        let mut view = self.clone();
        view.sniff(mc_input, Phase::Test)
    }
}

struct Rung {
    v_th: f64,
    convergence: f64,
    role: GcRole,
    fan_in: usize,
}

fn draw_synapses(rng: &mut ChaCha8Rng, n_mc: usize, fan_in: usize, config: &EplConfig) -> Vec<Synapse> {
    let mut mcs = sample_indices(rng, n_mc, fan_in).into_vec();
    mcs.sort_unstable();
    mcs.into_iter()
        .map(|mc| Synapse {
            mc: mc as u32,
            weight: config.w_init,
            cap: config.w_init * (1.0 + (config.w_cap_factor - 1.0) * rng.random::<f64>()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EplConfig {
        EplConfig {
            n_learning_gc_per_column: 4,
            n_nonlearning_gc_per_column: 6,
            ..EplConfig::default()
        }
    }

    fn topo(columns: usize) -> Topology {
        Topology {
            columns,
            sisters: 5,
            reference_dimension: columns,
        }
    }

    #[test]
    fn sigmoid_examples() {
        for x in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!((tunable_sigmoid(x, 0.0) - x).abs() < 1e-15);
        }
        for k in [-0.9, -0.3, 0.45, 0.9] {
            assert_eq!(tunable_sigmoid(0.0, k), 0.0);
            assert!((tunable_sigmoid(1.0, k) - 1.0).abs() < 1e-12);
        }
        assert!((tunable_sigmoid(0.5, 0.9) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn network_sizes() {
        let s = EplState::build(EplConfig::default(), topo(20)).unwrap();
        assert_eq!(s.n_mc(), 100);
        assert_eq!(s.n_gc(), 2500);
        assert_eq!(s.granules.iter().filter(|g| g.is_learning()).count(), 1000);
        let sisters: Vec<f64> = s.mc_thresholds[..5].to_vec();
        assert_eq!(sisters, vec![0.8, 3.8, 6.8, 9.8, 12.8]);
        for g in &s.granules {
            for syn in &g.synapses {
                assert_eq!(syn.weight, 18.0);
                assert!(syn.cap >= 18.0 && syn.cap <= 27.0);
            }
        }
    }

    #[test]
    fn uniform_ladder_when_k_is_zero() {
        let c = EplConfig {
            k_vth: 0.0,
            n_learning_gc_per_column: 0,
            n_nonlearning_gc_per_column: 5,
            ..EplConfig::default()
        };
        let s = EplState::build(c, topo(2)).unwrap();
        let th: Vec<f64> = s.granules[..5].iter().map(|g| g.v_th).collect();
        for (i, t) in th.iter().enumerate() {
            assert!((t - (0.8 + 0.4 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn fan_in_follows_threshold_within_each_role() {
        let s = EplState::build(EplConfig::default(), topo(20)).unwrap();
        for role in [GcRole::NonLearning, GcRole::Learning] {
            let mut col: Vec<&Granule> = s.granules.iter().filter(|g| g.column == 3 && g.role == role).collect();
            col.sort_by(|a, b| a.v_th.total_cmp(&b.v_th));
            for w in col.windows(2) {
                assert!(w[0].synapses.len() <= w[1].synapses.len());
            }
        }
        let max_nl = s.granules.iter().filter(|g| !g.is_learning()).map(|g| g.v_th).fold(0.0, f64::max);
        let min_l = s.granules.iter().filter(|g| g.is_learning()).map(|g| g.v_th).fold(f64::INFINITY, f64::min);
        assert!(max_nl <= min_l);
    }

    #[test]
    fn fan_in_larger_than_network_is_an_error() {
        let c = EplConfig {
            nonlearning_fan_in: Some(11),
            ..small_config()
        };
        assert!(matches!(EplState::build(c, topo(2)), Err(Error::Build(_))));
    }

    fn syn(mc: u32, weight: f64) -> Synapse {
        Synapse { mc, weight, cap: 20.0 }
    }

    #[test]
    fn stdp_rules() {
        let stdp = StdpConfig {
            a_p: 1.0,
            a_n: 0.5,
            tau_p: 5.0,
            tau_n: 5.0,
            w_scale: 2.0,
        };
        let mut s = vec![syn(0, 18.0), syn(1, 18.0), syn(2, 1.0), syn(3, 19.5), syn(4, 18.0)];
        let times = vec![Some(10.0), None, None, Some(9.0), Some(15.0)];
        stdp_update(&mut s, &times, 10.0, &stdp);
        assert_eq!(s[0].weight, 19.0);
        assert_eq!(s[1].weight, 16.0);
        assert_eq!(s[2].weight, 0.0);
        assert_eq!(s[3].weight, 20.0);
        assert!((s[4].weight - (18.0 - 0.5 * (-1.0_f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn drive_copies_times_and_skips_silent_cells() {
        let mut s = EplState::build(small_config(), topo(2)).unwrap();
        let learners: Vec<usize> = (0..s.n_gc()).filter(|&j| s.granules[j].is_learning() && s.granules[j].column == 0).collect();
        let nl = (0..s.n_gc()).find(|&j| !s.granules[j].is_learning() && s.granules[j].column == 0).unwrap();
        let times = vec![Some(3.1), Some(4.2), None, Some(2.0), Some(5.5)];
        s.learn_inhibitory_drive(0, &times, &[learners[0], learners[1], nl]);
        for &j in &learners[..2] {
            assert_eq!(s.granules[j].drive.as_ref().unwrap().times, times);
        }
        assert!(s.granules[learners[2]].drive.is_none());
        assert_eq!(s.granules[nl].groups, vec![0]);
        assert_eq!(s.memories.len(), 1);
        assert_eq!(s.select_drive(0, &[learners[0]]).unwrap().times, times);
        assert!(s.select_drive(1, &[learners[0]]).is_none());
    }

    #[test]
    fn near_identical_vectors_share_a_memory() {
        let mut s = EplState::build(small_config(), topo(1)).unwrap();
        let learners: Vec<usize> = (0..s.n_gc()).filter(|&j| s.granules[j].is_learning()).collect();
        s.learn_inhibitory_drive(0, &[Some(1.0); 5], &[learners[0]]);
        s.learn_inhibitory_drive(0, &[Some(1.02); 5], &[learners[1]]);
        s.learn_inhibitory_drive(0, &[Some(2.0); 5], &[learners[2]]);
        assert_eq!(s.memories.len(), 2);
        let all = [learners[0], learners[1], learners[2]];
        assert_eq!(s.select_drive(0, &all).unwrap().times, vec![Some(1.0); 5]);
    }

    #[test]
    fn drive_ties_go_to_the_earliest_memory() {
        let c = EplConfig {
            vote_rule: VoteRule::Count,
            ..small_config()
        };
        let mut s = EplState::build(c, topo(1)).unwrap();
        let learners: Vec<usize> = (0..s.n_gc()).filter(|&j| s.granules[j].is_learning()).collect();
        s.learn_inhibitory_drive(0, &[Some(1.0); 5], &[learners[0]]);
        s.learn_inhibitory_drive(0, &[Some(2.0); 5], &[learners[1]]);
        assert_eq!(s.select_drive(0, &[learners[1], learners[0]]).unwrap().times, vec![Some(1.0); 5]);
    }

    #[test]
    fn neurogenesis_copies_parameters_and_is_capped() {
        let mut s = EplState::build(small_config(), topo(2)).unwrap();
        let before = s.n_gc();
        assert_eq!(s.neurogenesis(0, &[]), 0);
        let replaced: Vec<usize> = (0..s.n_gc()).filter(|&j| s.granules[j].column == 0).collect();
        let born = s.neurogenesis(0, &replaced);
        assert_eq!(born, 4);
        assert_eq!(s.n_gc(), before + 4);
        for (k, g) in s.granules[before..].iter().enumerate() {
            let t = &s.granules[replaced[k]];
            assert_eq!((g.v_th, g.convergence, g.column), (t.v_th, t.convergence, 0));
            assert!(g.is_plastic() && g.drive.is_none());
        }
    }

    #[test]
    fn naive_network_follows_apical_code() {
        let s = EplState::build(EplConfig::default(), topo(4)).unwrap();
        let input: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let r = s.test(&input).unwrap();
        let apical: Vec<Option<f64>> = r.apical.iter().map(|&t| s.follow_apical(t)).collect();
        for c in &r.pattern.cycles {
            assert_eq!(c, &apical);
        }
    }

    #[test]
    fn self_recall_is_a_fixed_point_and_training_locks() {
        let mut s = EplState::build(EplConfig::default(), topo(4)).unwrap();
        let a: Vec<f64> = (0..20).map(|i| 0.1 * ((i * 7) % 20) as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| 0.1 * ((i * 3 + 5) % 20) as f64).collect();
        s.train_one_shot(&a, "a").unwrap();
        assert!(matches!(s.train_one_shot(&a, "a"), Err(Error::AlreadyTrained(_))));
        let locked: Vec<(usize, Vec<Synapse>)> = (0..s.n_gc())
            .filter(|&j| s.granules[j].locked)
            .map(|j| (j, s.granules[j].synapses.clone()))
            .collect();
        s.train_one_shot(&b, "b").unwrap();
        for (j, w) in &locked {
            assert!(s.granules[*j].locked);
            assert_eq!(&s.granules[*j].synapses, w);
        }
        for (input, idx) in [(&a, 0), (&b, 1)] {
            let r = s.test(input).unwrap();
            for c in &r.pattern.cycles[2..] {
                assert_eq!(c, &s.store[idx].pattern);
            }
        }
    }
}
