//! The calibrated forwarder model: one consumer, one producer, two input
//! threads (client face 0, server face 1), `n` forwarding threads each with
//! a bounded queue, and two output threads.
//!
//! Interests travel consumer → input0 → fwd_k → output1 → producer and
//! Data travel producer → input1 → fwd_k → output0 → consumer, where `k`
//! comes from the name dispatch table for Interests and from the token for
//! Data. Interactions on the Data path have priority over the Interest
//! path, so a Data that arrives in the same tick as an Interest gets a
//! freed queue slot first.

mod components;
mod counters;

pub use components::Vars;
pub use counters::{Counters, Outcomes};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, CalibrationProfile, Placement, Role};
use crate::dist::Distribution;
use crate::kernel::{KernelError, Model, ModelBuilder, Participants, RunOptions, Trace, Transfer};
use crate::ndn::{Fib, Name, Ndt, Pcct, PcctConfig, CLIENT_FACE, SERVER_FACE};

#[derive(Debug, Error)]
pub enum ForwarderError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("simulation aborted: {0}")]
    Kernel(#[from] KernelError),
    #[error("no Interests were sent inside the measurement window")]
    NoInterests,
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub n_forwarding_threads: u8,
    /// Components per Interest name, at least 2.
    pub name_length: usize,
    pub payload_len: u32,
    /// Ticks (ns) between Interests.
    pub send_interval: u64,
    pub queue_capacity: usize,
    pub numa_placement: Placement,
    pub n_name_prefixes: usize,
    pub horizon: u64,
    /// Interests sent before this tick are not measured. Default: 10% of
    /// the horizon.
    pub warmup: Option<u64>,
    /// Interests sent in the last `cooldown` ticks are not measured.
    /// Default: 10% of the horizon.
    pub cooldown: Option<u64>,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            n_forwarding_threads: 1,
            name_length: 3,
            payload_len: 0,
            send_interval: 1000,
            queue_capacity: 4096,
            numa_placement: Placement::P1,
            n_name_prefixes: 255,
            horizon: 10_000_000,
            warmup: None,
            cooldown: None,
        }
    }
}

impl FactorConfig {
    pub fn warmup_ticks(&self) -> u64 {
        self.warmup.unwrap_or(self.horizon / 10)
    }

    pub fn cooldown_ticks(&self) -> u64 {
        self.cooldown.unwrap_or(self.horizon / 10)
    }

    /// Send ticks `[start, end)` of measured Interests.
    pub fn window(&self) -> (u64, u64) {
        (self.warmup_ticks(), self.horizon - self.cooldown_ticks())
    }

    pub fn validate(&self) -> Result<(), ForwarderError> {
        let bad = |m: &str| Err(ForwarderError::Config(m.to_string()));
        if self.n_forwarding_threads == 0 {
            return bad("n_forwarding_threads must be at least 1");
        }
        if self.name_length < 2 {
            return bad("name_length must be at least 2 (prefix and sequence number)");
        }
        if self.send_interval == 0 {
            return bad("send_interval must be positive");
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be positive");
        }
        if self.n_name_prefixes == 0 {
            return bad("n_name_prefixes must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.warmup_ticks().saturating_add(self.cooldown_ticks()) >= self.horizon {
            return bad("warmup + cooldown must be shorter than the horizon");
        }
        Ok(())
    }
}

/// Structural knobs that are not experiment factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Receive ring of each input thread.
    pub rx_capacity: usize,
    pub pcct: PcctConfig,
    /// Prefixes `p0..` routed to the producer; defaults to all consumer
    /// prefixes.
    pub fib_prefixes: Option<usize>,
    /// Record which thread processed each packet.
    pub audit: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { rx_capacity: 4096, pcct: PcctConfig::default(), fib_prefixes: None, audit: false }
    }
}

/// A built model plus what is needed to read its counters.
#[derive(Debug, Clone)]
pub struct ForwarderModel {
    model: Model<Vars>,
    cfg: FactorConfig,
}

pub fn build_model(cfg: &FactorConfig, cal: &CalibrationProfile) -> Result<ForwarderModel, ForwarderError> {
    build_model_with(cfg, cal, &ModelOptions::default())
}

pub fn build_model_with(
    cfg: &FactorConfig,
    cal: &CalibrationProfile,
    opts: &ModelOptions,
) -> Result<ForwarderModel, ForwarderError> {
    cfg.validate()?;
    if opts.rx_capacity == 0 {
        return Err(ForwarderError::Config("rx_capacity must be positive".into()));
    }
    let n = cfg.n_forwarding_threads;
    let (len, pl) = (cfg.name_length, cfg.numa_placement);
    let dist = |role| cal.resolve(role, len, pl, n).cloned();
    let f_i = dist(Role::Interest)?;
    let f_d = dist(Role::Data)?;
    let fp_i = dist(Role::DispatchInterest)?;
    let fp_d = dist(Role::DispatchData)?;

    let mut fib = Fib::new();
    for p in 0..opts.fib_prefixes.unwrap_or(cfg.n_name_prefixes) {
        fib.insert(&Name::new([format!("p{p}")]).expect("one component"), SERVER_FACE);
    }
    let fib = Arc::new(fib);
    let ndt = Arc::new(Ndt::uniform(n));

    let mut b = ModelBuilder::new();
    b.component(components::consumer(Distribution::dirac(cfg.send_interval as f64), len, cfg.n_name_prefixes));
    b.component(components::producer(cfg.payload_len));
    b.component(components::input_thread("input0", CLIENT_FACE, opts.rx_capacity, ndt.clone(), fp_i));
    b.component(components::input_thread("input1", SERVER_FACE, opts.rx_capacity, ndt, fp_d));
    for k in 0..n {
        b.component(components::forwarding_thread(
            k,
            cfg.queue_capacity,
            Pcct::new(opts.pcct),
            fib.clone(),
            f_i.clone(),
            f_d.clone(),
            opts.audit,
        ));
    }
    b.component(components::output_thread("output0", CLIENT_FACE));
    b.component(components::output_thread("output1", SERVER_FACE));
    wire(&mut b, n)?;
    Ok(ForwarderModel { model: b.build()?, cfg: cfg.clone() })
}

fn transfer(f: impl Fn(&mut Participants<'_, Vars>) -> Option<u64> + Send + Sync + 'static) -> Option<Transfer<Vars>> {
    Some(Arc::new(f))
}

/// Output slot → consumer inbox / producer.
fn from_output(to_consumer: bool) -> Option<Transfer<Vars>> {
    transfer(move |p| {
        let pkt = p.vars(0).output_mut().slot.take()?;
        let id = pkt.id;
        if to_consumer {
            p.vars(1).consumer_mut().inbox = Some(pkt);
        } else {
            p.vars(1).producer_mut().current = Some(pkt);
        }
        Some(id)
    })
}

/// Input thread's current packet → forwarding-thread queue.
fn to_queue(k: u8) -> Option<Transfer<Vars>> {
    transfer(move |p| {
        let input = p.vars(0).input_mut();
        let (pkt, _) = input.current.take()?;
        input.dispatched[k as usize] += 1;
        let id = pkt.id;
        p.vars(1).fwd_mut().enqueue(pkt);
        Some(id)
    })
}

/// Forwarding-thread result → output slot.
fn to_output() -> Option<Transfer<Vars>> {
    transfer(|p| {
        let (pkt, _) = p.vars(0).fwd_mut().out.take()?;
        let id = pkt.id;
        p.vars(1).output_mut().slot = Some(pkt);
        Some(id)
    })
}

fn to_ring(input: &mut components::InputVars, pkt: crate::ndn::Packet) {
    if input.ring.len() < input.capacity {
        input.ring.push_back(pkt);
    } else {
        input.rx_drops.push(pkt.origin);
    }
}

fn wire(b: &mut ModelBuilder<Vars>, n: u8) -> Result<(), KernelError> {
    b.connect("deliver", &[("output0", "send_pkt"), ("consumer", "recv")], from_output(true))?;
    for k in 0..n {
        let fwd = format!("fwd{k}");
        b.connect(&format!("in1_to_fwd{k}"), &[("input1", &format!("to_fwd{k}")), (&fwd, "enq")], to_queue(k))?;
    }
    b.connect(
        "send_D",
        &[("producer", "send_D"), ("input1", "recv")],
        transfer(|p| {
            let pkt = p.vars(0).producer_mut().current.take()?;
            let id = pkt.id;
            to_ring(p.vars(1).input_mut(), pkt);
            Some(id)
        }),
    )?;
    b.connect("recv_I", &[("output1", "send_pkt"), ("producer", "recv_I")], from_output(false))?;
    for k in 0..n {
        let fwd = format!("fwd{k}");
        b.connect(&format!("fw_I{k}"), &[(&fwd, "fw_I"), ("output1", "recv_pkt")], to_output())?;
        b.connect(&format!("fw_D{k}"), &[(&fwd, "fw_D"), ("output0", "recv_pkt")], to_output())?;
        b.connect(&format!("fw_N{k}"), &[(&fwd, "fw_N"), ("output0", "recv_pkt")], to_output())?;
    }
    for k in 0..n {
        let fwd = format!("fwd{k}");
        b.connect(&format!("in0_to_fwd{k}"), &[("input0", &format!("to_fwd{k}")), (&fwd, "enq")], to_queue(k))?;
    }
    b.connect(
        "send_I",
        &[("consumer", "send_I"), ("input0", "recv")],
        transfer(|p| {
            let now = p.now();
            let c = p.vars(0).consumer_mut();
            let mut pkt = c.next.take()?;
            pkt.created_at = now;
            c.sent_at.push(now);
            c.outcome.push(components::Outcome::Pending);
            let id = pkt.id;
            to_ring(p.vars(1).input_mut(), pkt);
            Some(id)
        }),
    )?;
    Ok(())
}

impl ForwarderModel {
    pub fn config(&self) -> &FactorConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model<Vars> {
        &self.model
    }

    /// Runs the configured horizon without recording events.
    pub fn run(mut self, seed: u64) -> Result<Counters, ForwarderError> {
        self.model.run(self.cfg.horizon, seed, RunOptions { record: false, skip: true })?;
        Ok(self.counters())
    }

    /// Runs the configured horizon keeping the full event trace.
    pub fn run_traced(mut self, seed: u64) -> Result<(Counters, Trace, Self), ForwarderError> {
        let trace = self.model.run(self.cfg.horizon, seed, RunOptions::default())?;
        Ok((self.counters(), trace, self))
    }

    pub fn counters(&self) -> Counters {
        counters::collect(&self.model, &self.cfg)
    }

    /// For every packet processed by some forwarding thread, the thread
    /// that processed its Interest; `None` without auditing.
    pub fn token_audit(&self) -> Option<Vec<(u64, u8, bool)>> {
        let mut all = Vec::new();
        for c in self.model.components() {
            if let Vars::Fwd(f) = c.vars() {
                for (origin, interest) in f.audit.as_ref()? {
                    all.push((*origin, f.index, *interest));
                }
            }
        }
        Some(all)
    }
}

/// Builds a fresh model and runs one trace.
pub fn simulate(
    cfg: &FactorConfig,
    cal: &CalibrationProfile,
    opts: &ModelOptions,
    seed: u64,
) -> Result<Counters, ForwarderError> {
    build_model_with(cfg, cal, opts)?.run(seed)
}
