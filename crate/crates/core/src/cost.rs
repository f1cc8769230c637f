//! Resource accounting, a cycle-level pipeline simulation and the weighted
//! objective used to rank implementation variants.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, NoProbe};
use crate::stream::Transaction;

/// Cycles charged per abstract operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleCostTable {
    pub table_lookup: u64,
    pub memory_write: u64,
    pub int_add: u64,
    pub int_mul: u64,
    pub float_add: u64,
    pub float_mul: u64,
    pub float_div: u64,
    pub compare: u64,
}

impl Default for CycleCostTable {
    fn default() -> Self {
        Self {
            table_lookup: 1,
            memory_write: 1,
            int_add: 1,
            int_mul: 3,
            float_add: 4,
            float_mul: 6,
            float_div: 30,
            compare: 1,
        }
    }
}

impl CycleCostTable {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.table_lookup,
            self.memory_write,
            self.int_add,
            self.int_mul,
            self.float_add,
            self.float_mul,
            self.float_div,
            self.compare,
        ];
        if all.contains(&0) {
            return Err(Error::BadParams("every operation must cost at least one cycle".into()));
        }
        Ok(())
    }
}

/// Memory footprint of a pipeline. `fast_bytes` is the constrained quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub fast_bytes: u64,
    pub slow_bytes: u64,
    pub total_table_entries: u64,
    /// Table sizes at their reported entry width.
    pub table_bytes: u64,
    pub buffer_bytes: u64,
    pub meta_bytes: u64,
}

impl ResourceReport {
    pub fn memory(&self) -> u64 {
        self.fast_bytes
    }
}

/// Sums table placements, kernel buffers and metadata use over the stages.
pub fn measure_resources(stages: &[Box<dyn Kernel>]) -> ResourceReport {
    let mut r = ResourceReport::default();
    for k in stages {
        for t in k.tables() {
            r.fast_bytes += t.placement.fast_bytes();
            r.slow_bytes += t.placement.slow_bytes();
            r.total_table_entries += t.table.entry_count();
            r.table_bytes += t.table.byte_size();
        }
        r.buffer_bytes += k.buffer_bytes();
        r.meta_bytes += k.meta_bytes();
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub compute_cycles: u64,
    pub busy_cycles: u64,
    pub blocked_cycles: u64,
    pub memory_stall_cycles: u64,
    pub utilization: f64,
    pub fast_hits: u64,
    pub slow_hits: u64,
    pub out_txns: u64,
    pub first_output_cycle: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub total_cycles: u64,
    pub stall_cycles: u64,
    pub first_output_latency_cycles: u64,
    /// Valid output bytes per cycle.
    pub throughput: f64,
    pub compute_cycles: u64,
    pub output_bytes: u64,
    pub stages: Vec<StageReport>,
}

/// Inter-stage queue depth in transactions.
pub const DEFAULT_QUEUE_DEPTH: usize = 4;

enum Item {
    Txn(Transaction),
    Flush,
}

struct StageSim {
    queue: VecDeque<(u64, Item)>,
    // outputs of the last push, each usable downstream from its time
    holding: VecDeque<(u64, Item)>,
    free_at: u64,
    flushed: bool,
    report: StageReport,
}

/// Discrete-event simulation of `stages` fed one input transaction per cycle.
///
/// A stage takes the next queued transaction once its issue slot is free and
/// its previous results have moved on. A push costing `c` cycles makes its
/// outputs available `max(1, c)` cycles after it starts and frees the stage
/// after `ceil(c / pipeline_stages)`. Queues between stages hold `queue_depth`
/// transactions; a full queue blocks the producer.
pub fn simulate_pipeline(
    stages: &mut [Box<dyn Kernel>],
    input: &[Transaction],
    costs: &CycleCostTable,
    queue_depth: usize,
) -> Result<PerfReport> {
    check_chain(stages)?;
    if stages.is_empty() {
        return Err(Error::PipelineTypeError("pipeline has no stages".into()));
    }
    let depth = queue_depth.max(1);
    let n = stages.len();
    let mut sims: Vec<StageSim> = stages
        .iter()
        .map(|k| StageSim {
            queue: VecDeque::new(),
            holding: VecDeque::new(),
            free_at: 0,
            flushed: false,
            report: StageReport { name: k.name().to_string(), ..Default::default() },
        })
        .collect();
    let mut next_src = 0usize;
    let mut src_flushed = false;
    // cycle of the last delivery: one transaction per cycle
    let mut src_time = 0u64;
    let mut t: u64 = 0;
    let mut last_output = 0u64;
    let mut output_bytes = 0u64;
    let mut first_output: Option<u64> = None;

    loop {
        let mut changed = true;
        while changed {
            changed = false;
            for i in (0..n).rev() {
                // results move downstream
                while let Some(&(ready, _)) = sims[i].holding.front() {
                    if ready > t {
                        break;
                    }
                    if i + 1 < n && sims[i + 1].queue.len() >= depth {
                        break;
                    }
                    let (_, item) = sims[i].holding.pop_front().unwrap();
                    if i + 1 < n {
                        sims[i + 1].queue.push_back((t, item));
                    } else if let Item::Txn(txn) = item {
                        output_bytes += txn.valid_bytes as u64;
                        first_output.get_or_insert(ready);
                        last_output = last_output.max(ready);
                    }
                    changed = true;
                }
                // take the next item
                let sim = &mut sims[i];
                let Some(&(arrived, _)) = sim.queue.front() else { continue };
                if arrived > t || sim.free_at > t {
                    continue;
                }
                if sim.holding.front().is_some_and(|&(ready, _)| ready <= t) {
                    continue;
                }
                let (_, item) = sim.queue.pop_front().unwrap();
                let kernel = &mut stages[i];
                let (out, is_flush) = match item {
                    Item::Txn(txn) => (kernel.push(&txn, &mut NoProbe)?, false),
                    Item::Flush => (kernel.flush(&mut NoProbe)?, true),
                };
                let compute = out.ops.compute_cycles(costs);
                let service = if is_flush { compute } else { compute.max(1) };
                let issue = service.div_ceil(kernel.pipeline_stages().max(1)).max(u64::from(!is_flush));
                sim.free_at = t + issue;
                sim.report.compute_cycles += compute;
                sim.report.busy_cycles += issue;
                sim.report.memory_stall_cycles += out.stall_cycles;
                let done = t + service;
                if !out.out_txns.is_empty() {
                    sim.report.first_output_cycle.get_or_insert(done);
                }
                sim.report.out_txns += out.out_txns.len() as u64;
                sim.holding.extend(out.out_txns.into_iter().map(|o| (done, Item::Txn(o))));
                if is_flush {
                    sim.flushed = true;
                    sim.holding.push_back((done, Item::Flush));
                }
                changed = true;
            }
            // the bus presents transaction k at cycle k; it reaches stage 0 one cycle later
            if sims[0].queue.len() < depth {
                if next_src < input.len() && (next_src as u64) < t && src_time < t {
                    sims[0].queue.push_back((t, Item::Txn(input[next_src].clone())));
                    next_src += 1;
                    src_time = t;
                    changed = true;
                } else if next_src == input.len() && !src_flushed {
                    sims[0].queue.push_back((t, Item::Flush));
                    src_flushed = true;
                    changed = true;
                }
            }
        }
        if sims.iter().all(|s| s.flushed && s.holding.is_empty()) {
            break;
        }
        let src_next = (next_src < input.len()).then(|| (next_src as u64 + 1).max(src_time + 1));
        let next = next_event(&sims, t, src_next);
        // blocked: stage free, results stuck behind a full queue
        for s in &mut sims {
            let stuck = s.holding.front().is_some_and(|&(ready, _)| ready <= t);
            if stuck && s.free_at <= t {
                s.report.blocked_cycles += next - t;
            }
        }
        t = next;
    }

    let total = last_output.max(sims.iter().map(|s| s.free_at).max().unwrap_or(0));
    let mut report = PerfReport {
        total_cycles: total,
        first_output_latency_cycles: first_output.unwrap_or(total),
        throughput: if total == 0 { 0.0 } else { output_bytes as f64 / total as f64 },
        output_bytes,
        ..Default::default()
    };
    for (sim, k) in sims.into_iter().zip(stages.iter()) {
        let mut s = sim.report;
        for tt in k.tables() {
            s.fast_hits += tt.placement.fast_hits;
            s.slow_hits += tt.placement.slow_hits;
        }
        s.utilization = if total == 0 { 0.0 } else { s.busy_cycles as f64 / total as f64 };
        report.compute_cycles += s.compute_cycles;
        report.stall_cycles = report.stall_cycles.max(s.blocked_cycles + s.memory_stall_cycles);
        report.stages.push(s);
    }
    report.stall_cycles = report.stall_cycles.min(report.total_cycles);
    Ok(report)
}

fn next_event(sims: &[StageSim], t: u64, src_next: Option<u64>) -> u64 {
    let mut next = u64::MAX;
    let mut consider = |x: u64| {
        if x > t {
            next = next.min(x);
        }
    };
    for s in sims {
        consider(s.free_at);
        if let Some(&(ready, _)) = s.holding.front() {
            consider(ready);
        }
        if let Some(&(arrived, _)) = s.queue.front() {
            consider(arrived);
        }
    }
    if let Some(x) = src_next {
        consider(x);
    }
    if next == u64::MAX {
        // only blocked work left; a stuck result frees up next cycle
        t + 1
    } else {
        next
    }
}

fn check_chain(stages: &[Box<dyn Kernel>]) -> Result<()> {
    for w in stages.windows(2) {
        if w[0].output_kind() != w[1].input_kind() {
            return Err(Error::PipelineTypeError(format!(
                "{} emits {} but {} expects {}",
                w[0].name(),
                w[0].output_kind(),
                w[1].name(),
                w[1].input_kind()
            )));
        }
    }
    Ok(())
}

/// Weights and the fast-memory bound of `E = α·Memory/normR + β·cycles/normPerf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Objective {
    pub alpha: f64,
    pub beta: f64,
    /// Fast-tier byte bound B.
    pub budget_bytes: u64,
    /// Defaults to the first variant's memory when unset.
    pub norm_memory: Option<f64>,
    /// Defaults to the first variant's total cycles when unset.
    pub norm_cycles: Option<f64>,
}

impl Default for Objective {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, budget_bytes: 4 << 20, norm_memory: None, norm_cycles: None }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::BadParams("alpha and beta must be non-negative".into()));
        }
        if self.budget_bytes == 0 {
            return Err(Error::BadParams("memory bound must be positive".into()));
        }
        for n in [self.norm_memory, self.norm_cycles].into_iter().flatten() {
            if n.is_nan() || n <= 0.0 {
                return Err(Error::BadParams("normalizers must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub e: f64,
    pub memory_term: f64,
    pub perf_term: f64,
    pub feasible: bool,
}

pub fn evaluate_objective(r: &ResourceReport, perf: &PerfReport, obj: &Objective) -> Evaluation {
    let memory_term = obj.alpha * r.memory() as f64 / obj.norm_memory.unwrap_or(1.0);
    let perf_term = obj.beta * perf.total_cycles as f64 / obj.norm_cycles.unwrap_or(1.0);
    Evaluation { e: memory_term + perf_term, memory_term, perf_term, feasible: r.memory() <= obj.budget_bytes }
}

/// One implementation candidate: kernels plus the stream they consume.
pub struct Variant {
    pub name: String,
    pub stages: Vec<Box<dyn Kernel>>,
    pub input: Vec<Transaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub rank: Option<usize>,
    pub resources: ResourceReport,
    pub perf: PerfReport,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub objective: Objective,
    pub ranked: Vec<VariantReport>,
    pub infeasible: Vec<VariantReport>,
}

/// Simulates every variant (in parallel), then ranks the feasible ones by E.
pub fn compare_impls(
    variants: Vec<Variant>,
    obj: &Objective,
    costs: &CycleCostTable,
    queue_depth: usize,
) -> Result<Comparison> {
    if variants.is_empty() {
        return Err(Error::NoVariants);
    }
    obj.validate()?;
    let measured: Vec<Result<(String, ResourceReport, PerfReport)>> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .into_iter()
            .map(|mut v| {
                s.spawn(move || {
                    let resources = measure_resources(&v.stages);
                    let perf = simulate_pipeline(&mut v.stages, &v.input, costs, queue_depth)?;
                    Ok((v.name, resources, perf))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let measured = measured.into_iter().collect::<Result<Vec<_>>>()?;
    let mut obj = *obj;
    let (_, r0, p0) = &measured[0];
    obj.norm_memory.get_or_insert((r0.memory() as f64).max(1.0));
    obj.norm_cycles.get_or_insert((p0.total_cycles as f64).max(1.0));
    let (mut ranked, infeasible): (Vec<_>, Vec<_>) = measured
        .into_iter()
        .map(|(name, resources, perf)| {
            let evaluation = evaluate_objective(&resources, &perf, &obj);
            VariantReport { name, rank: None, resources, perf, evaluation }
        })
        .partition(|v| v.evaluation.feasible);
    ranked.sort_by(|a, b| a.evaluation.e.total_cmp(&b.evaluation.e));
    for (i, v) in ranked.iter_mut().enumerate() {
        v.rank = Some(i + 1);
    }
    Ok(Comparison { objective: obj, ranked, infeasible })
}

/// Ranking by name, for checking order invariance.
pub fn ranking(c: &Comparison) -> Vec<&str> {
    c.ranked.iter().map(|v| v.name.as_str()).collect()
}
