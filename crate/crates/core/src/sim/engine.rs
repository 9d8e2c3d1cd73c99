use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::event::{EventKind, SimEvent};
use super::model::*;
use super::SimError;
use crate::telemetry::{load_collectors, CollectorSpec, Labels, TelemetrySample};
use crate::{secs, JobId, Millis, NodeId, MS_PER_HOUR};

/// Log channel that receives `Manifestation::LogPattern` text.
pub const DRIVER_LOG: &str = "driver-log";

const TELEMETRY_STREAM: u64 = 0;

#[derive(Debug, Clone)]
pub struct ActiveFault {
    pub uid: u64,
    pub model: Arc<FaultModel>,
    pub since: Millis,
    pub active: bool,
    /// Job peers that echo the fault's log line.
    pub echo_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub state: NodeState,
    pub state_since: Millis,
    pub job: Option<JobId>,
    pub last_validation: Option<Millis>,
    pub faults: Vec<ActiveFault>,
    pub component_rates: BTreeMap<ComponentClass, f64>,
}

/// Aggregate effect of a node's currently active faults.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHealth {
    pub crashed: bool,
    pub hung: bool,
    /// Minimum degrade factor; 1.0 when not degraded.
    pub factor: f64,
    pub classes: BTreeSet<ComponentClass>,
}

impl NodeHealth {
    pub fn is_healthy(&self) -> bool {
        !self.crashed && !self.hung && self.factor >= 1.0 && self.classes.is_empty()
    }
}

impl Node {
    pub fn health(&self) -> NodeHealth {
        let mut h = NodeHealth { crashed: false, hung: false, factor: 1.0, classes: BTreeSet::new() };
        for f in self.faults.iter().filter(|f| f.active) {
            h.classes.insert(f.model.component_class);
            match f.model.manifestation {
                Manifestation::Crash => h.crashed = true,
                Manifestation::Hang => h.hung = true,
                Manifestation::Degrade(x) => h.factor = h.factor.min(x),
                Manifestation::LogPattern(_) => {}
            }
        }
        h
    }

    /// Whether any fault (active or dormant) is present.
    pub fn has_faults(&self) -> bool {
        !self.faults.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub id: JobId,
    pub spec: JobSpec,
    pub assigned_nodes: Vec<NodeId>,
    pub state: JobState,
    /// Completed steps, fractional between step boundaries.
    pub progress: f64,
    /// Training start of the current run segment.
    pub segment_start: Option<Millis>,
    /// When the job last left normal training (hang, degradation, interruption).
    pub disrupted_at: Option<Millis>,
    pub ratio: f64,
    pub submitted_at: Millis,
    accrued_at: Millis,
    epoch: u64,
}

impl Job {
    pub fn last_checkpoint(&self) -> u64 {
        let c = self.spec.checkpoint_interval.max(1);
        (self.progress.floor() as u64 / c) * c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recovery {
    pub resumed_at_step: u64,
    pub lost_steps: u64,
    /// From the disruption to the moment training resumes.
    pub downtime: Millis,
    pub resume_at: Millis,
}

#[derive(Debug, Clone)]
enum Ev {
    Arrival { node: usize, model: usize },
    Inject { node: usize, model: Arc<FaultModel> },
    Toggle { node: usize, uid: u64 },
    Tick,
    Loaded { job: JobId, epoch: u64 },
    Finish { job: JobId, epoch: u64 },
}

#[derive(Debug)]
struct Queued {
    t: Millis,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.seq) == (o.t, o.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.t, self.seq).cmp(&(o.t, o.seq))
    }
}

struct Channel {
    spec: CollectorSpec,
    interval: Millis,
    labels: Labels,
    names: Vec<Arc<str>>,
    channel: Arc<str>,
}

pub struct Simulator {
    cfg: SimConfig,
    models: Vec<Arc<FaultModel>>,
    now: Millis,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    nodes: Vec<Node>,
    jobs: BTreeMap<JobId, Job>,
    next_job: u32,
    next_uid: u64,
    node_rngs: Vec<ChaCha8Rng>,
    tel_rng: ChaCha8Rng,
    channels: Vec<Channel>,
    interval: Millis,
    buffer: Vec<TelemetrySample>,
    log: Vec<SimEvent>,
    fresh: Vec<SimEvent>,
}

fn exp_ms(rng: &mut ChaCha8Rng, rate_per_hour: f64) -> Millis {
    let hours: f64 = Exp::new(rate_per_hour).expect("positive rate").sample(rng);
    (hours * MS_PER_HOUR as f64).round().max(1.0) as Millis
}

fn draw(rng: &mut ChaCha8Rng, level: Level) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (level.mean + level.sd * z).max(0.0)
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        if cfg.node_count == 0 {
            return Err(SimError::InvalidConfig("node_count must be >= 1".into()));
        }
        if !(cfg.telemetry_interval > 0.0) {
            return Err(SimError::InvalidConfig("telemetry_interval must be > 0".into()));
        }
        if cfg.accelerators_per_node == 0 {
            return Err(SimError::InvalidConfig("accelerators_per_node must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.comm_fraction) {
            return Err(SimError::InvalidConfig("comm_fraction must be in [0,1)".into()));
        }
        for m in &cfg.fault_models {
            m.validate().map_err(SimError::InvalidConfig)?;
        }
        let specs = load_collectors(&cfg.collectors).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let interval = secs(cfg.telemetry_interval).max(1);
        let channels = specs
            .into_iter()
            .map(|spec| Channel {
                interval: (secs(spec.interval_s).max(interval) / interval) * interval,
                labels: Arc::new(spec.labels.clone()),
                names: spec.metrics.iter().map(|m| Arc::from(m.as_str())).collect(),
                channel: Arc::from(spec.name.as_str()),
                spec,
            })
            .collect();

        let mut rates: BTreeMap<ComponentClass, f64> = BTreeMap::new();
        for m in &cfg.fault_models {
            *rates.entry(m.component_class).or_default() += m.rate;
        }
        let nodes = (0..cfg.node_count)
            .map(|i| Node {
                id: NodeId(i),
                state: NodeState::Available,
                state_since: 0,
                job: None,
                last_validation: cfg.prevalidated.then_some(0),
                faults: Vec::new(),
                component_rates: rates.clone(),
            })
            .collect();
        let node_rngs = (0..cfg.node_count as u64)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
                r.set_stream(i + 1);
                r
            })
            .collect();
        let mut tel_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        tel_rng.set_stream(TELEMETRY_STREAM);

        let mut sim = Simulator {
            models: cfg.fault_models.iter().cloned().map(Arc::new).collect(),
            cfg,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes,
            jobs: BTreeMap::new(),
            next_job: 0,
            next_uid: 0,
            node_rngs,
            tel_rng,
            channels,
            interval,
            buffer: Vec::new(),
            log: Vec::new(),
            fresh: Vec::new(),
        };
        for n in 0..sim.nodes.len() {
            for m in 0..sim.models.len() {
                sim.schedule_arrival(n, m);
            }
        }
        if sim.cfg.telemetry && !sim.channels.is_empty() {
            sim.push(interval, Ev::Tick);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, SimError> {
        self.nodes.get(id.0 as usize).ok_or(SimError::UnknownNode(id))
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn job(&self, id: JobId) -> Result<&Job, SimError> {
        self.jobs.get(&id).ok_or(SimError::UnknownJob(id))
    }

    pub fn collectors(&self) -> Vec<CollectorSpec> {
        self.channels.iter().map(|c| c.spec.clone()).collect()
    }

    /// Every event recorded since the simulation started.
    pub fn event_log(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn telemetry_interval(&self) -> Millis {
        self.interval
    }

    fn push(&mut self, t: Millis, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse(Queued { t, seq: self.seq, ev }));
    }

    fn record(&mut self, e: SimEvent) {
        self.log.push(e.clone());
        self.fresh.push(e);
    }

    /// Adds an externally produced event (control plane) to the log.
    pub fn note(&mut self, e: SimEvent) {
        self.record(e);
    }

    fn schedule_arrival(&mut self, node: usize, model: usize) {
        let rate = self.models[model].rate;
        if rate > 0.0 {
            let dt = exp_ms(&mut self.node_rngs[node], rate);
            self.push(self.now + dt, Ev::Arrival { node, model });
        }
    }

    /// Runs the event loop for `duration_s` seconds and returns the events produced.
    pub fn advance(&mut self, duration_s: f64) -> Result<Vec<SimEvent>, SimError> {
        if !(duration_s > 0.0) {
            return Err(SimError::InvalidDuration);
        }
        let end = self.now + secs(duration_s).max(1);
        self.run_until(end);
        Ok(std::mem::take(&mut self.fresh))
    }

    /// Advances to absolute time `end` (no-op when already past it).
    pub fn run_until(&mut self, end: Millis) {
        while let Some(Reverse(top)) = self.queue.peek() {
            if top.t > end {
                break;
            }
            let Reverse(q) = self.queue.pop().expect("peeked");
            self.now = q.t;
            self.handle(q.ev);
        }
        self.now = self.now.max(end);
    }

    /// Runs until the next queued event has been processed or `limit` is reached.
    pub fn step_until(&mut self, limit: Millis) -> bool {
        match self.queue.peek() {
            Some(Reverse(top)) if top.t <= limit => {
                let Reverse(q) = self.queue.pop().expect("peeked");
                self.now = q.t;
                self.handle(q.ev);
                true
            }
            _ => {
                self.now = self.now.max(limit);
                false
            }
        }
    }

    /// Drains events produced by direct operations since the last drain.
    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.fresh)
    }

    /// Drains the telemetry produced by ticks processed so far.
    pub fn emit_telemetry(&mut self) -> Vec<TelemetrySample> {
        std::mem::take(&mut self.buffer)
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Arrival { node, model } => {
                if self.nodes[node].state.in_service() {
                    let m = self.models[model].clone();
                    self.activate(node, m);
                }
                self.schedule_arrival(node, model);
            }
            Ev::Inject { node, model } => self.activate(node, model),
            Ev::Toggle { node, uid } => self.toggle(node, uid),
            Ev::Tick => {
                self.tick();
                self.push(self.now + self.interval, Ev::Tick);
            }
            Ev::Loaded { job, epoch } => self.loaded(job, epoch),
            Ev::Finish { job, epoch } => self.finish(job, epoch),
        }
    }

    /// Schedules `fault` to strike `node` at absolute time `at`.
    pub fn inject_fault(&mut self, node: NodeId, fault: FaultModel, at: Millis) -> Result<SimEvent, SimError> {
        self.node(node)?;
        if at < self.now {
            return Err(SimError::PastTime(at));
        }
        fault.validate().map_err(SimError::InvalidConfig)?;
        let e = SimEvent::new(at, EventKind::FaultScheduled).node(node).detail(format!(
            "{} {}",
            fault.label(),
            manifestation_str(&fault.manifestation)
        ));
        self.push(at, Ev::Inject { node: node.0 as usize, model: Arc::new(fault) });
        Ok(e)
    }

    fn activate(&mut self, idx: usize, model: Arc<FaultModel>) {
        let uid = self.next_uid;
        self.next_uid += 1;
        let now = self.now;
        let node_id = self.nodes[idx].id;
        let job = self.nodes[idx].job;
        let mut echo = Vec::new();
        if let (Some(log), Some(j)) = (&model.log, job) {
            if log.peers > 0 {
                let mut peers: Vec<NodeId> =
                    self.jobs[&j].assigned_nodes.iter().copied().filter(|&n| n != node_id).collect();
                let rng = &mut self.node_rngs[idx];
                for i in 0..peers.len().min(log.peers) {
                    let k = rng.random_range(i..peers.len());
                    peers.swap(i, k);
                }
                peers.truncate(log.peers);
                echo = peers;
            }
        }
        if let Some(d) = model.duty_cycle {
            self.push(now + secs(d.on_s).max(1), Ev::Toggle { node: idx, uid });
        }
        let mut e = SimEvent::new(now, EventKind::FaultArrived).node(node_id).detail(format!(
            "{} {} {}",
            model.component_class,
            model.label(),
            manifestation_str(&model.manifestation)
        ));
        if let Some(j) = job {
            e = e.job(j);
        }
        let disruptive = model.manifestation.is_disruptive();
        self.nodes[idx].faults.push(ActiveFault { uid, model, since: now, active: true, echo_nodes: echo });
        self.record(e);
        if disruptive && self.nodes[idx].state == NodeState::Available && self.nodes[idx].last_validation.is_some() {
            self.nodes[idx].last_validation = None;
            self.record(SimEvent::new(now, EventKind::NodeUnhealthy).node(node_id).detail("health probe failed"));
        }
        if let Some(j) = job {
            self.refresh_job(j);
        }
    }

    fn toggle(&mut self, idx: usize, uid: u64) {
        let now = self.now;
        let node = &mut self.nodes[idx];
        let Some(f) = node.faults.iter_mut().find(|f| f.uid == uid) else {
            return;
        };
        let d = f.model.duty_cycle.expect("toggle without duty cycle");
        f.active = !f.active;
        let (kind, next) =
            if f.active { (EventKind::FaultReactivated, d.on_s) } else { (EventKind::FaultDormant, d.off_s) };
        let label = f.model.label();
        let id = node.id;
        let job = node.job;
        self.push(now + secs(next).max(1), Ev::Toggle { node: idx, uid });
        self.record(SimEvent::new(now, kind).node(id).detail(label));
        if let Some(j) = job {
            self.refresh_job(j);
        }
    }

    /// Clears faults on a node. Returns how many were removed.
    fn clear_faults(&mut self, idx: usize, keep_persistent: bool, why: &str) -> usize {
        let before = self.nodes[idx].faults.len();
        self.nodes[idx].faults.retain(|f| keep_persistent && f.model.persistent);
        let removed = before - self.nodes[idx].faults.len();
        if removed > 0 {
            let id = self.nodes[idx].id;
            self.record(
                SimEvent::new(self.now, EventKind::FaultCleared).node(id).detail(format!("{removed} by {why}")),
            );
        }
        removed
    }

    /// Reboots a cordoned node, clearing faults that do not survive a reboot.
    /// Returns whether the node is fault-free afterwards.
    pub fn reboot(&mut self, node: NodeId) -> Result<bool, SimError> {
        self.node(node)?;
        let idx = node.0 as usize;
        self.clear_faults(idx, true, "reboot");
        self.record(SimEvent::new(self.now, EventKind::NodeRebooted).node(node));
        Ok(self.nodes[idx].faults.is_empty())
    }

    pub fn set_validated(&mut self, node: NodeId, at: Option<Millis>) -> Result<(), SimError> {
        self.node(node)?;
        self.nodes[node.0 as usize].last_validation = at;
        Ok(())
    }

    /// Moves a node along one edge of the lifecycle graph.
    pub fn transition(&mut self, node: NodeId, to: NodeState, cause: &str) -> Result<SimEvent, SimError> {
        let from = self.node(node)?.state;
        if !from.can_transition(to) {
            return Err(SimError::IllegalTransition { node, from, to });
        }
        let idx = node.0 as usize;
        let now = self.now;
        self.nodes[idx].state = to;
        self.nodes[idx].state_since = now;
        let job = if from == NodeState::Allocated { self.nodes[idx].job.take() } else { None };
        if to == NodeState::Migrated {
            self.clear_faults(idx, false, "migration");
        }
        if !to.in_service() {
            self.nodes[idx].last_validation = None;
        }
        let mut e = SimEvent::new(now, EventKind::NodeTransition).node(node).detail(format!(
            "{}->{} cause={cause}",
            state_str(from),
            state_str(to)
        ));
        if let Some(j) = job {
            e = e.job(j);
        }
        self.record(e.clone());
        if let Some(j) = job {
            self.refresh_job(j);
        }
        Ok(e)
    }

    /// Validated, fault-probe-passing nodes the scheduler may hand out.
    pub fn schedulable(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.state == NodeState::Available && n.last_validation.is_some())
            .map(|n| n.id)
            .collect()
    }

    pub fn submit_job(&mut self, spec: JobSpec) -> Result<JobId, SimError> {
        let apn = self.cfg.accelerators_per_node;
        if spec.requested_accelerators == 0 || spec.requested_accelerators % apn != 0 {
            return Err(SimError::InvalidConfig(format!(
                "requested_accelerators {} not a positive multiple of {apn}",
                spec.requested_accelerators
            )));
        }
        if !(spec.step_time_s > 0.0 && spec.peak_throughput > 0.0) {
            return Err(SimError::InvalidConfig("step_time_s and peak_throughput must be positive".into()));
        }
        let needed = (spec.requested_accelerators / apn) as usize;
        let free = self.schedulable();
        if free.len() < needed {
            return Err(SimError::InsufficientCapacity { needed, available: free.len() });
        }
        let id = JobId(self.next_job);
        self.next_job += 1;
        let assigned: Vec<NodeId> = free[..needed].to_vec();
        let now = self.now;
        self.jobs.insert(
            id,
            Job {
                id,
                spec,
                assigned_nodes: assigned.clone(),
                state: JobState::Pending,
                progress: 0.0,
                segment_start: None,
                disrupted_at: None,
                ratio: 1.0,
                submitted_at: now,
                accrued_at: now,
                epoch: 0,
            },
        );
        self.record(SimEvent::new(now, EventKind::JobSubmitted).job(id).detail(format!("nodes={}", assigned.len())));
        for n in &assigned {
            self.allocate(*n, id);
        }
        self.start_loading(id, JobState::Loading);
        Ok(id)
    }

    fn allocate(&mut self, node: NodeId, job: JobId) {
        let idx = node.0 as usize;
        self.nodes[idx].state = NodeState::Allocated;
        self.nodes[idx].state_since = self.now;
        self.nodes[idx].job = Some(job);
        self.record(
            SimEvent::new(self.now, EventKind::NodeTransition)
                .node(node)
                .job(job)
                .detail("available->allocated cause=scheduler"),
        );
    }

    fn start_loading(&mut self, id: JobId, state: JobState) {
        let now = self.now;
        let job = self.jobs.get_mut(&id).expect("job");
        job.state = state;
        job.epoch += 1;
        job.accrued_at = now;
        let epoch = job.epoch;
        let load = secs(job.spec.load_time_s);
        let kind = if state == JobState::Recovering { EventKind::JobRecovering } else { EventKind::JobLoading };
        self.record(SimEvent::new(now, kind).job(id));
        if load == 0 {
            self.loaded(id, epoch);
        } else {
            self.push(now + load, Ev::Loaded { job: id, epoch });
        }
    }

    fn loaded(&mut self, id: JobId, epoch: u64) {
        let now = self.now;
        let Some(job) = self.jobs.get_mut(&id) else { return };
        if job.epoch != epoch || !matches!(job.state, JobState::Loading | JobState::Recovering) {
            return;
        }
        job.state = JobState::Training;
        job.segment_start = Some(now);
        job.disrupted_at = None;
        job.ratio = 1.0;
        job.accrued_at = now;
        job.epoch += 1;
        let step = job.progress.floor() as u64;
        self.record(SimEvent::new(now, EventKind::JobTraining).job(id).detail(format!("step={step}")));
        self.refresh_job(id);
        self.schedule_finish(id);
    }

    fn accrue(&mut self, id: JobId) {
        let now = self.now;
        let job = self.jobs.get_mut(&id).expect("job");
        if job.state.is_running() {
            let dt = (now - job.accrued_at) as f64 / 1000.0;
            job.progress += dt * job.ratio / job.spec.step_time_s;
            if let Some(total) = job.spec.total_steps {
                job.progress = job.progress.min(total as f64);
            }
        }
        job.accrued_at = now;
    }

    fn schedule_finish(&mut self, id: JobId) {
        let job = &self.jobs[&id];
        let (Some(total), true) = (job.spec.total_steps, job.state.is_running()) else { return };
        let remaining = (total as f64 - job.progress).max(0.0);
        let dt = remaining * job.spec.step_time_s / job.ratio;
        let at = self.now + secs(dt);
        let epoch = job.epoch;
        self.push(at, Ev::Finish { job: id, epoch });
    }

    fn finish(&mut self, id: JobId, epoch: u64) {
        if self.jobs.get(&id).is_none_or(|j| j.epoch != epoch || !j.state.is_running()) {
            return;
        }
        self.accrue(id);
        let now = self.now;
        let nodes = {
            let job = self.jobs.get_mut(&id).expect("job");
            job.state = JobState::Completed;
            job.epoch += 1;
            job.assigned_nodes.clone()
        };
        self.record(SimEvent::new(now, EventKind::JobCompleted).job(id));
        for n in nodes {
            let idx = n.0 as usize;
            if self.nodes[idx].state == NodeState::Allocated && self.nodes[idx].job == Some(id) {
                self.nodes[idx].job = None;
                self.nodes[idx].state = NodeState::Available;
                self.nodes[idx].state_since = now;
                self.record(
                    SimEvent::new(now, EventKind::NodeTransition)
                        .node(n)
                        .job(id)
                        .detail("allocated->available cause=job-completed"),
                );
            }
        }
    }

    /// Throughput ratio of a synchronous step whose compute part is gated by
    /// the slowest node: `1 / ((1 − c)/f_min + c)`.
    pub fn throughput_ratio(&self, f_min: f64) -> f64 {
        let c = self.cfg.comm_fraction;
        1.0 / ((1.0 - c) / f_min + c)
    }

    /// Re-derives the job state from its nodes (weakest link).
    fn refresh_job(&mut self, id: JobId) {
        let Some(job) = self.jobs.get(&id) else { return };
        let state = job.state;
        if matches!(state, JobState::Pending | JobState::Completed | JobState::Interrupted) {
            return;
        }
        let mut lost = false;
        let mut hung = false;
        let mut f_min: f64 = 1.0;
        for n in &job.assigned_nodes {
            let node = &self.nodes[n.0 as usize];
            if node.state != NodeState::Allocated || node.job != Some(id) {
                lost = true;
                continue;
            }
            let h = node.health();
            lost |= h.crashed;
            hung |= h.hung;
            f_min = f_min.min(h.factor);
        }
        let loading = matches!(state, JobState::Loading | JobState::Recovering);
        let next = if lost {
            JobState::Interrupted
        } else if loading {
            state
        } else if hung {
            JobState::Hung
        } else if f_min < 1.0 {
            JobState::Degraded
        } else {
            JobState::Training
        };
        let ratio = if next == JobState::Degraded { self.throughput_ratio(f_min) } else { 1.0 };
        if next == state && (ratio - job.ratio).abs() < 1e-15 {
            return;
        }
        self.accrue(id);
        let now = self.now;
        let job = self.jobs.get_mut(&id).expect("job");
        job.state = next;
        job.ratio = ratio;
        job.epoch += 1;
        if next != JobState::Training && job.disrupted_at.is_none() {
            job.disrupted_at = Some(now);
        }
        if next == JobState::Training {
            job.disrupted_at = None;
        }
        let step = job.progress.floor() as u64;
        let kind = match next {
            JobState::Interrupted => EventKind::JobInterrupted,
            JobState::Hung => EventKind::JobHung,
            JobState::Degraded => EventKind::JobDegraded,
            _ => EventKind::JobTraining,
        };
        if next != state {
            self.record(SimEvent::new(now, kind).job(id).detail(format!("step={step} ratio={ratio:.4}")));
        }
        self.schedule_finish(id);
    }

    /// Restarts a disrupted job from its last checkpoint, replacing nodes that
    /// left the allocation with validated spares.
    pub fn restart_job(&mut self, id: JobId) -> Result<Recovery, SimError> {
        let state = self.job(id)?.state;
        if !matches!(state, JobState::Interrupted | JobState::Hung | JobState::Degraded) {
            return Err(SimError::NotRecoverable { job: id, state });
        }
        let keep: Vec<NodeId> = self.jobs[&id]
            .assigned_nodes
            .iter()
            .copied()
            .filter(|n| {
                let node = &self.nodes[n.0 as usize];
                node.state == NodeState::Allocated && node.job == Some(id)
            })
            .collect();
        let missing = self.jobs[&id].assigned_nodes.len() - keep.len();
        let spares = self.schedulable();
        if spares.len() < missing {
            return Err(SimError::NoSpareCapacity(id));
        }
        self.accrue(id);
        let now = self.now;
        let (resumed, lost, disrupted_at, load) = {
            let job = self.jobs.get_mut(&id).expect("job");
            let ckpt = job.last_checkpoint();
            let lost = job.progress.floor() as u64 - ckpt;
            job.progress = ckpt as f64;
            let mut nodes = keep;
            nodes.extend_from_slice(&spares[..missing]);
            nodes.sort();
            job.assigned_nodes = nodes;
            job.ratio = 1.0;
            job.segment_start = None;
            (ckpt, lost, job.disrupted_at.unwrap_or(now), secs(job.spec.load_time_s))
        };
        for n in &spares[..missing] {
            self.allocate(*n, id);
        }
        self.start_loading(id, JobState::Recovering);
        let resume_at = now + load;
        Ok(Recovery { resumed_at_step: resumed, lost_steps: lost, downtime: resume_at - disrupted_at, resume_at })
    }

    /// Test hook: the job fails for reasons unrelated to hardware; `node`
    /// logs `line` once.
    pub fn inject_user_error(&mut self, job: JobId, node: NodeId, line: &str) -> Result<(), SimError> {
        let j = self.job(job)?;
        if !j.assigned_nodes.contains(&node) {
            return Err(SimError::UnknownNode(node));
        }
        let now = self.now;
        if let Some(ch) = self.channels.iter().find(|c| c.spec.name == DRIVER_LOG) {
            self.buffer.push(TelemetrySample {
                metric: ch.channel.clone(),
                t: now,
                node_id: node,
                job_id: Some(job),
                value: crate::telemetry::SampleValue::Line(line.to_string()),
                labels: ch.labels.clone(),
            });
        }
        self.record(SimEvent::new(now, EventKind::UserError).job(job).node(node).detail(line.to_string()));
        if self.jobs[&job].state.is_running() || self.jobs[&job].state == JobState::Hung {
            self.accrue(job);
            let jb = self.jobs.get_mut(&job).expect("job");
            jb.state = JobState::Interrupted;
            jb.disrupted_at = Some(now);
            jb.epoch += 1;
            let step = jb.progress.floor() as u64;
            self.record(
                SimEvent::new(now, EventKind::JobInterrupted).job(job).detail(format!("step={step} user-error")),
            );
        }
        Ok(())
    }

    fn tick(&mut self) {
        let t = self.now;
        let noise = self.cfg.noise.clone();
        // job KPI values are drawn once per job per tick, in job order
        let mut kpi: BTreeMap<JobId, f64> = BTreeMap::new();
        for job in self.jobs.values() {
            if job.state.emits_kpi() {
                let v = if job.state == JobState::Hung {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(&mut self.tel_rng);
                    (job.spec.peak_throughput * job.ratio * (1.0 + noise.throughput_rel_sd * z)).max(0.0)
                };
                kpi.insert(job.id, v);
            }
        }
        let mut out = std::mem::take(&mut self.buffer);
        let interval = self.interval;
        for idx in 0..self.nodes.len() {
            let node = &self.nodes[idx];
            if matches!(node.state, NodeState::InRepair | NodeState::Migrated) {
                continue;
            }
            let job = node.job.and_then(|j| self.jobs.get(&j));
            let busy = job.is_some_and(|j| !matches!(j.state, JobState::Pending | JobState::Completed));
            let health = node.health();
            let dead = health.crashed || health.hung;
            for ch in &self.channels {
                if t % ch.interval != 0 {
                    continue;
                }
                if ch.spec.source.is_log() {
                    for line in lines_for(&self.nodes, interval, t, idx, &ch.spec.name) {
                        out.push(TelemetrySample {
                            metric: ch.channel.clone(),
                            t,
                            node_id: node.id,
                            job_id: node.job,
                            value: crate::telemetry::SampleValue::Line(line),
                            labels: ch.labels.clone(),
                        });
                    }
                    continue;
                }
                for name in &ch.names {
                    let value = if &**name == "job_throughput" {
                        match node.job.and_then(|j| kpi.get(&j)) {
                            Some(v) => *v,
                            None => continue,
                        }
                    } else {
                        let (busy_l, idle_l) = noise.levels(name);
                        let mut v = draw(&mut self.tel_rng, if busy { busy_l } else { idle_l });
                        if &**name == "accel_util" {
                            v = if dead { 0.0 } else { (v * health.factor).min(1.0) };
                        }
                        for f in node.faults.iter().filter(|f| f.active) {
                            for e in f.model.effects.iter().filter(|e| e.metric == **name) {
                                v = match e.mode {
                                    EffectMode::Scale => v * e.value,
                                    EffectMode::Add => v + e.value,
                                    EffectMode::Set => e.value,
                                };
                            }
                        }
                        v.max(0.0)
                    };
                    out.push(TelemetrySample {
                        metric: name.clone(),
                        t,
                        node_id: node.id,
                        job_id: node.job,
                        value: crate::telemetry::SampleValue::Number(value),
                        labels: ch.labels.clone(),
                    });
                }
            }
        }
        self.buffer = out;
    }
}

fn lines_for(nodes: &[Node], interval: Millis, t: Millis, idx: usize, channel: &str) -> Vec<String> {
    let node = &nodes[idx];
    let mut lines = Vec::new();
    let mut hex_seed = t ^ ((node.id.0 as u64) << 40);
    let mut render = |text: &str| {
        let mut s = text.replace("{node}", &node.id.0.to_string());
        while s.contains("{hex}") {
            hex_seed = hex_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            s = s.replacen("{hex}", &format!("{:08x}", (hex_seed >> 32) as u32), 1);
        }
        s
    };
    for f in node.faults.iter().filter(|f| f.active) {
        if let Manifestation::LogPattern(text) = &f.model.manifestation {
            if channel == DRIVER_LOG {
                lines.push(render(text));
            }
        }
        if let Some(log) = &f.model.log {
            if log.channel == channel {
                lines.push(render(&log.text));
            }
        }
    }
    // echoes of faults on job peers, one tick after onset
    if node.job.is_some() {
        for other in nodes {
            for f in other.faults.iter().filter(|f| f.active && f.echo_nodes.contains(&node.id)) {
                let Some(log) = &f.model.log else { continue };
                if log.channel == channel && t >= f.since + interval {
                    lines.push(render(&log.text));
                }
            }
        }
    }
    lines
}

fn manifestation_str(m: &Manifestation) -> String {
    match m {
        Manifestation::Crash => "crash".into(),
        Manifestation::Hang => "hang".into(),
        Manifestation::Degrade(f) => format!("degrade({f})"),
        Manifestation::LogPattern(_) => "log-pattern".into(),
    }
}

pub(crate) fn state_str(s: NodeState) -> &'static str {
    match s {
        NodeState::Available => "available",
        NodeState::Allocated => "allocated",
        NodeState::Suspect => "suspect",
        NodeState::Cordoned => "cordoned",
        NodeState::InRepair => "in-repair",
        NodeState::Migrated => "migrated",
        NodeState::Validating => "validating",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_metric(nodes: u32) -> SimConfig {
        let mut c = SimConfig::new(1, nodes);
        c.collectors =
            "collectors:\n  - {name: accel, source: accelerator, metrics: [accel_util], interval_s: 60}\n".into();
        c
    }

    #[test]
    fn empty_cluster_has_no_events() {
        let mut sim = Simulator::new(SimConfig::new(3, 4)).unwrap();
        assert!(sim.advance(3600.0).unwrap().is_empty());
    }

    #[test]
    fn nonpositive_duration_rejected() {
        let mut sim = Simulator::new(SimConfig::new(3, 1)).unwrap();
        assert_eq!(sim.advance(0.0), Err(SimError::InvalidDuration));
    }

    #[test]
    fn one_tick_one_sample_per_node() {
        let mut sim = Simulator::new(one_metric(4)).unwrap();
        sim.advance(60.0).unwrap();
        let s = sim.emit_telemetry();
        assert_eq!(s.len(), 4);
        let nodes: BTreeSet<_> = s.iter().map(|x| x.node_id).collect();
        assert_eq!(nodes.len(), 4);
    }

    #[test]
    fn submit_uses_validated_nodes_only() {
        let mut c = SimConfig::new(1, 2);
        c.prevalidated = false;
        let mut sim = Simulator::new(c).unwrap();
        sim.set_validated(NodeId(0), Some(0)).unwrap();
        assert_eq!(sim.submit_job(JobSpec::new(16)), Err(SimError::InsufficientCapacity { needed: 2, available: 1 }));
        sim.set_validated(NodeId(1), Some(0)).unwrap();
        let j = sim.submit_job(JobSpec::new(16)).unwrap();
        assert_eq!(sim.job(j).unwrap().assigned_nodes, vec![NodeId(0), NodeId(1)]);
        assert_eq!(sim.job(j).unwrap().state, JobState::Training);
    }

    #[test]
    fn cordoned_node_untouched_by_scheduler() {
        let mut sim = Simulator::new(SimConfig::new(1, 11)).unwrap();
        sim.transition(NodeId(4), NodeState::Suspect, "test").unwrap();
        sim.transition(NodeId(4), NodeState::Cordoned, "test").unwrap();
        let j = sim.submit_job(JobSpec::new(80)).unwrap();
        let assigned = &sim.job(j).unwrap().assigned_nodes;
        assert_eq!(assigned.len(), 10);
        assert!(!assigned.contains(&NodeId(4)));
        assert_eq!(sim.node(NodeId(4)).unwrap().state, NodeState::Cordoned);
    }

    #[test]
    fn hang_flatlines_throughput() {
        let mut sim = Simulator::new(SimConfig::new(5, 32)).unwrap();
        let j = sim.submit_job(JobSpec::new(256)).unwrap();
        sim.inject_fault(NodeId(7), FaultModel::new(ComponentClass::SilentHang, Manifestation::Hang), 600_000).unwrap();
        sim.advance(1800.0).unwrap();
        assert_eq!(sim.job(j).unwrap().state, JobState::Hung);
        let kpi: Vec<_> = sim.emit_telemetry().into_iter().filter(|s| &*s.metric == "job_throughput").collect();
        assert!(kpi.iter().filter(|s| s.t < 600_000).all(|s| s.value.as_number().unwrap() > 0.0));
        assert!(kpi.iter().filter(|s| s.t >= 600_000).all(|s| s.value.as_number().unwrap() == 0.0));
    }

    #[test]
    fn degrade_throughput_strictly_between() {
        let mut sim = Simulator::new(SimConfig::new(5, 32).without_telemetry()).unwrap();
        let j = sim.submit_job(JobSpec::new(256)).unwrap();
        sim.inject_fault(
            NodeId(3),
            FaultModel::new(ComponentClass::ThroughputDegradation, Manifestation::Degrade(0.5)),
            1,
        )
        .unwrap();
        sim.advance(10.0).unwrap();
        let r = sim.job(j).unwrap().ratio;
        // oracle: compute share 0.8 runs at half speed, communication unaffected
        assert!((r - 1.0 / (0.8 / 0.5 + 0.2)).abs() < 1e-12);
        assert!(r > 0.5 && r < 1.0);
        assert_eq!(sim.job(j).unwrap().state, JobState::Degraded);
    }

    #[test]
    fn log_pattern_verbatim() {
        let mut sim = Simulator::new(SimConfig::new(5, 10)).unwrap();
        let text = "Memory access fault by Node-9";
        sim.inject_fault(
            NodeId(9),
            FaultModel::new(ComponentClass::AcceleratorMemory, Manifestation::LogPattern(text.into())),
            1_000,
        )
        .unwrap();
        sim.advance(120.0).unwrap();
        let lines: Vec<_> = sim.emit_telemetry().into_iter().filter(|s| s.value.as_line().is_some()).collect();
        assert!(!lines.is_empty());
        assert!(lines.iter().all(|s| s.node_id == NodeId(9) && s.value.as_line() == Some(text)));
    }

    #[test]
    fn kpi_only_while_training() {
        let mut sim = Simulator::new(SimConfig::new(5, 4)).unwrap();
        let mut spec = JobSpec::new(16);
        spec.load_time_s = 300.0;
        let j = sim.submit_job(spec).unwrap();
        sim.advance(240.0).unwrap();
        assert!(sim.emit_telemetry().iter().all(|s| &*s.metric != "job_throughput"));
        sim.advance(240.0).unwrap();
        let kpi = sim.emit_telemetry().into_iter().filter(|s| &*s.metric == "job_throughput").count();
        assert_eq!(kpi, 4 * 2);
        assert_eq!(sim.job(j).unwrap().state, JobState::Training);
    }

    #[test]
    fn crash_interrupts_and_recovery_rolls_back() {
        let mut sim = Simulator::new(SimConfig::new(5, 3).without_telemetry()).unwrap();
        let mut spec = JobSpec::new(16);
        spec.step_time_s = 1.0;
        spec.checkpoint_interval = 500;
        let j = sim.submit_job(spec).unwrap();
        sim.inject_fault(NodeId(1), FaultModel::crash(ComponentClass::HostOs), 1_234_000).unwrap();
        sim.advance(2000.0).unwrap();
        let job = sim.job(j).unwrap();
        assert_eq!(job.state, JobState::Interrupted);
        assert_eq!(job.progress.floor() as u64, 1234);
        sim.transition(NodeId(1), NodeState::Suspect, "t").unwrap();
        sim.transition(NodeId(1), NodeState::Cordoned, "t").unwrap();
        let r = sim.restart_job(j).unwrap();
        assert_eq!((r.resumed_at_step, r.lost_steps), (1000, 234));
        assert_eq!(r.downtime, 2_000_000 - 1_234_000);
        assert_eq!(sim.job(j).unwrap().assigned_nodes, vec![NodeId(0), NodeId(2)]);
        assert_eq!(sim.job(j).unwrap().state, JobState::Training);
    }

    #[test]
    fn illegal_transition_rejected() {
        let mut sim = Simulator::new(SimConfig::new(5, 1)).unwrap();
        assert!(matches!(
            sim.transition(NodeId(0), NodeState::Validating, "t"),
            Err(SimError::IllegalTransition { .. })
        ));
    }

    #[test]
    fn seed_determines_everything() {
        let cfg = SimConfig::new(42, 8).with_fault(FaultModel::crash(ComponentClass::HostOs).with_rate(0.01));
        let run = || {
            let mut sim = Simulator::new(cfg.clone()).unwrap();
            sim.submit_job(JobSpec::new(32)).unwrap();
            let ev = sim.advance(86_400.0).unwrap();
            (ev, sim.emit_telemetry())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn degrade_halves_utilization() {
        let mut sim = Simulator::new(one_metric(8)).unwrap();
        sim.submit_job(JobSpec::new(64)).unwrap();
        sim.inject_fault(
            NodeId(2),
            FaultModel::new(ComponentClass::ThroughputDegradation, Manifestation::Degrade(0.5)),
            0,
        )
        .unwrap();
        sim.advance(1200.0 * 60.0).unwrap();
        let s = sim.emit_telemetry();
        let mean = |n: u32| {
            let v: Vec<f64> =
                s.iter().filter(|x| x.node_id == NodeId(n)).map(|x| x.value.as_number().unwrap()).collect();
            assert!(v.len() >= 1000);
            v.iter().sum::<f64>() / v.len() as f64
        };
        let healthy = (0..8).filter(|&n| n != 2).map(mean).sum::<f64>() / 7.0;
        assert!((mean(2) / healthy - 0.5).abs() < 0.01);
    }
}
