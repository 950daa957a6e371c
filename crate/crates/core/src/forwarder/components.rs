//! Component definitions of the forwarder model. All components share the
//! [`Vars`] type; each only ever sees its own variant.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::dist::Distribution;
use crate::kernel::{Component, Transition};
use crate::ndn::{
    dispatch_data, dispatch_interest, process_data, process_interest, Decision, DropReason, Face, Fib, NackReason,
    Name, Ndt, Packet, PacketKind, Pcct, CLIENT_FACE, SERVER_FACE,
};

/// Bit set on the ids of Data and Nacks; the low bits are the Interest id.
pub(crate) const RESPONSE_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Pending,
    Satisfied,
    Nacked,
}

#[derive(Debug, Clone)]
pub struct ConsumerVars {
    pub(crate) name_length: usize,
    pub(crate) prefixes: usize,
    /// Interest prepared for the next `send_I`.
    pub(crate) next: Option<Packet>,
    pub(crate) seq: u64,
    /// Send tick and outcome, indexed by Interest id − 1.
    pub(crate) sent_at: Vec<u64>,
    pub(crate) outcome: Vec<Outcome>,
    pub(crate) inbox: Option<Packet>,
    pub(crate) nacks_duplicate: u64,
    pub(crate) nacks_no_route: u64,
    /// Responses whose Interest was already answered; stays 0 when the
    /// model is sound.
    pub(crate) stray: u64,
}

impl ConsumerVars {
    fn prepare(&mut self, nonce: u32) {
        self.seq += 1;
        let seq = self.seq;
        let prefix = format!("p{}", (seq - 1) % self.prefixes as u64);
        let mut comps: Vec<Vec<u8>> = Vec::with_capacity(self.name_length);
        comps.push(prefix.into_bytes());
        for i in 1..self.name_length - 1 {
            comps.push(format!("c{i}").into_bytes());
        }
        comps.push(format!("{seq:08}").into_bytes());
        let name = Name::new(comps).expect("name_length ≥ 2");
        self.next = Some(Packet::interest(seq, name, nonce, 0));
    }

    fn settle(&mut self) {
        let Some(p) = self.inbox.take() else { return };
        let idx = (p.origin - 1) as usize;
        if self.outcome[idx] != Outcome::Pending {
            self.stray += 1;
            return;
        }
        match p.kind {
            PacketKind::Data => self.outcome[idx] = Outcome::Satisfied,
            PacketKind::Nack(reason) => {
                self.outcome[idx] = Outcome::Nacked;
                match reason {
                    NackReason::Duplicate => self.nacks_duplicate += 1,
                    NackReason::NoRoute => self.nacks_no_route += 1,
                }
            }
            PacketKind::Interest => self.stray += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProducerVars {
    pub(crate) payload_len: u32,
    pub(crate) current: Option<Packet>,
    pub(crate) served: u64,
}

#[derive(Debug, Clone)]
pub struct InputVars {
    pub(crate) face: Face,
    pub(crate) ring: VecDeque<Packet>,
    pub(crate) capacity: usize,
    pub(crate) ndt: Arc<Ndt>,
    /// Packet being dispatched and its target thread; `None` target means
    /// malformed.
    pub(crate) current: Option<(Packet, Option<u8>)>,
    pub(crate) rx_drops: Vec<u64>,
    pub(crate) malformed: Vec<u64>,
    /// Packets handed to each forwarding thread.
    pub(crate) dispatched: Vec<u64>,
}

impl InputVars {
    fn target(&self) -> Option<Option<u8>> {
        self.current.as_ref().map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone)]
pub struct FwdVars {
    pub(crate) index: u8,
    pub(crate) queue: VecDeque<Packet>,
    pub(crate) capacity: usize,
    pub(crate) max_occupancy: usize,
    pub(crate) queue_drops: Vec<u64>,
    pub(crate) current: Option<Packet>,
    /// Result of the last processing step and the face it leaves on.
    pub(crate) out: Option<(Packet, Face)>,
    pub(crate) pcct: Pcct,
    pub(crate) fib: Arc<Fib>,
    pub(crate) unsolicited: Vec<u64>,
    pub(crate) pit_full: Vec<u64>,
    /// (Interest id, was an Interest) for every processed packet, when
    /// auditing.
    pub(crate) audit: Option<Vec<(u64, bool)>>,
}

impl FwdVars {
    pub(crate) fn enqueue(&mut self, p: Packet) {
        if self.queue.len() < self.capacity {
            self.queue.push_back(p);
            self.max_occupancy = self.max_occupancy.max(self.queue.len());
        } else {
            self.queue_drops.push(p.origin);
        }
    }

    fn handle_interest(&mut self, now: u64) {
        let mut p = self.current.take().expect("fetched packet");
        p.token = self.index;
        if let Some(a) = self.audit.as_mut() {
            a.push((p.origin, true));
        }
        self.out = match process_interest(&mut self.pcct, &self.fib, &p, CLIENT_FACE, now) {
            Decision::Forward(face) => Some((p, face)),
            Decision::ReplyData { face, payload_len } => {
                Some((Packet::data_for(&p, p.origin | RESPONSE_BIT, payload_len, now), face))
            }
            Decision::ReplyNack { face, reason } => {
                Some((Packet::nack_for(&p, p.origin | RESPONSE_BIT, reason, now), face))
            }
            Decision::SendDownstream(_) => unreachable!("Interest processing never sends Data downstream"),
            Decision::Drop(_) => {
                self.pit_full.push(p.origin);
                None
            }
        };
    }

    fn handle_data(&mut self, now: u64) {
        let p = self.current.take().expect("fetched packet");
        if let Some(a) = self.audit.as_mut() {
            a.push((p.origin, false));
        }
        let decision = if p.kind == PacketKind::Data {
            process_data(&mut self.pcct, &p, now)
        } else {
            Decision::Drop(DropReason::Unsolicited)
        };
        self.out = match decision {
            Decision::SendDownstream(faces) => {
                // one consumer, so at most the client face is pending
                debug_assert_eq!(faces, vec![CLIENT_FACE]);
                Some((p, faces[0]))
            }
            _ => {
                self.unsolicited.push(p.origin);
                None
            }
        };
    }

    fn out_face(&self) -> Option<Face> {
        self.out.as_ref().map(|(_, f)| *f)
    }
}

#[derive(Debug, Clone)]
pub struct OutputVars {
    pub(crate) face: Face,
    pub(crate) slot: Option<Packet>,
}

impl OutputVars {
    /// Face this relay transmits on.
    pub fn face(&self) -> Face {
        self.face
    }
}

#[derive(Debug, Clone)]
pub enum Vars {
    Consumer(ConsumerVars),
    Producer(ProducerVars),
    Input(InputVars),
    Fwd(Box<FwdVars>),
    Output(OutputVars),
}

macro_rules! accessors {
    ($get:ident, $get_mut:ident, $variant:ident, $ty:ty) => {
        pub fn $get(&self) -> &$ty {
            match self {
                Vars::$variant(v) => v,
                _ => panic!(concat!("not a ", stringify!($variant), " component")),
            }
        }

        pub fn $get_mut(&mut self) -> &mut $ty {
            match self {
                Vars::$variant(v) => v,
                _ => panic!(concat!("not a ", stringify!($variant), " component")),
            }
        }
    };
}

impl Vars {
    accessors!(consumer, consumer_mut, Consumer, ConsumerVars);
    accessors!(producer, producer_mut, Producer, ProducerVars);
    accessors!(input, input_mut, Input, InputVars);
    accessors!(fwd, fwd_mut, Fwd, FwdVars);
    accessors!(output, output_mut, Output, OutputVars);

    /// Packets held by this component.
    pub(crate) fn live_packets(&self) -> usize {
        match self {
            Vars::Consumer(c) => c.inbox.is_some() as usize,
            Vars::Producer(p) => p.current.is_some() as usize,
            Vars::Input(i) => i.ring.len() + i.current.is_some() as usize,
            Vars::Fwd(f) => f.queue.len() + f.current.is_some() as usize + f.out.is_some() as usize,
            Vars::Output(o) => o.slot.is_some() as usize,
        }
    }
}

/// Sends an Interest every `interval` ticks and counts the answers.
pub(crate) fn consumer(interval: Distribution, name_length: usize, prefixes: usize) -> Component<Vars> {
    let mut c = Component::new(
        "consumer",
        Vars::Consumer(ConsumerVars {
            name_length,
            prefixes,
            next: None,
            seq: 0,
            sent_at: Vec::new(),
            outcome: Vec::new(),
            inbox: None,
            nacks_duplicate: 0,
            nacks_no_route: 0,
            stray: 0,
        }),
    );
    let s0 = c.location("s0");
    let s1 = c.location("s1");
    let s2 = c.location("s2");
    let delta = c.delay("delta");
    let send = c.port("send_I");
    let recv = c.port("recv");
    c.add(Transition::internal("wait", s0, s1).sample(delta, interval).action(|v: &mut Vars, f| {
        let nonce = f.rng().random::<u32>();
        v.consumer_mut().prepare(nonce);
    }));
    c.add(Transition::tick(s1).before(delta));
    c.add(Transition::on(send, "send_I", s1, s0).at(delta));
    c.add(Transition::on(recv, "recv_D", s1, s2));
    c.add(Transition::internal("count", s2, s1).action(|v: &mut Vars, _| v.consumer_mut().settle()));
    c
}

/// Answers every Interest with a Data of the same name.
pub(crate) fn producer(payload_len: u32) -> Component<Vars> {
    let mut c = Component::new("producer", Vars::Producer(ProducerVars { payload_len, current: None, served: 0 }));
    let s0 = c.location("s0");
    let s1 = c.location("s1");
    let s2 = c.location("s2");
    let recv = c.port("recv_I");
    let send = c.port("send_D");
    c.add(Transition::tick(s0));
    c.add(Transition::on(recv, "recv_I", s0, s1));
    c.add(Transition::internal("gen_D", s1, s2).action(|v: &mut Vars, f| {
        let p = v.producer_mut();
        let i = p.current.take().expect("received Interest");
        p.current = Some(Packet::data_for(&i, i.origin | RESPONSE_BIT, p.payload_len, f.now()));
        p.served += 1;
    }));
    c.add(Transition::on(send, "send_D", s2, s0));
    c
}

/// Receives into a bounded ring, spends `dispatch` ticks per packet, then
/// hands it to the forwarding thread chosen by name or token.
pub(crate) fn input_thread(
    name: &str,
    face: Face,
    capacity: usize,
    ndt: Arc<Ndt>,
    dispatch: Distribution,
) -> Component<Vars> {
    let threads = ndt.threads();
    let mut c = Component::new(
        name,
        Vars::Input(InputVars {
            face,
            ring: VecDeque::new(),
            capacity,
            ndt,
            current: None,
            rx_drops: Vec::new(),
            malformed: Vec::new(),
            dispatched: vec![0; threads as usize],
        }),
    );
    let f0 = c.location("f0");
    let f1 = c.location("f1");
    let w = c.location("w");
    let fp = c.delay("fp");
    let recv = c.port("recv");
    for loc in [f0, f1, w] {
        c.add(Transition::on(recv, "recv", loc, loc));
    }
    c.add(Transition::tick(f0));
    c.add(Transition::internal("decode", f0, f1).when(|v: &Vars| !v.input().ring.is_empty()).action(
        |v: &mut Vars, f| {
            let i = v.input_mut();
            let p = i.ring.pop_front().expect("non-empty ring");
            let target = if p.is_interest() {
                Some(dispatch_interest(&i.ndt, &p.name))
            } else {
                dispatch_data(&p, i.ndt.threads()).ok()
            };
            f.observe(p.id);
            i.current = Some((p, target));
        },
    ));
    c.add(
        Transition::internal("in", f1, w)
            .when(|v: &Vars| matches!(v.input().target(), Some(Some(_))))
            .sample(fp, dispatch),
    );
    c.add(Transition::internal("drop_malformed", f1, f0).when(|v: &Vars| v.input().target() == Some(None)).action(
        |v: &mut Vars, _| {
            let i = v.input_mut();
            let (p, _) = i.current.take().expect("current packet");
            i.malformed.push(p.origin);
        },
    ));
    c.add(Transition::tick(w).before(fp));
    for k in 0..threads {
        let port = c.port(&format!("to_fwd{k}"));
        c.add(
            Transition::on(port, &format!("to_fwd{k}"), w, f0)
                .at(fp)
                .when(move |v: &Vars| v.input().target() == Some(Some(k))),
        );
    }
    c
}

/// Forwarding thread `index` with its own bounded queue and PIT/CS.
pub(crate) fn forwarding_thread(
    index: u8,
    capacity: usize,
    pcct: Pcct,
    fib: Arc<Fib>,
    f_i: Distribution,
    f_d: Distribution,
    audit: bool,
) -> Component<Vars> {
    let mut c = Component::new(
        &format!("fwd{index}"),
        Vars::Fwd(Box::new(FwdVars {
            index,
            queue: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
            max_occupancy: 0,
            queue_drops: Vec::new(),
            current: None,
            out: None,
            pcct,
            fib,
            unsolicited: Vec::new(),
            pit_full: Vec::new(),
            audit: audit.then(Vec::new),
        })),
    );
    let f0 = c.location("f0");
    let f1 = c.location("f1");
    let f2 = c.location("f2");
    let f3 = c.location("f3");
    let d_i = c.delay("f_I");
    let d_d = c.delay("f_D");
    let enq = c.port("enq");
    let fw_i = c.port("fw_I");
    let fw_n = c.port("fw_N");
    let fw_d = c.port("fw_D");
    for loc in [f0, f1, f2, f3] {
        c.add(Transition::on(enq, "enq", loc, loc));
    }
    c.add(Transition::tick(f0));
    c.add(Transition::internal("fetch", f0, f1).when(|v: &Vars| !v.fwd().queue.is_empty()).action(
        |v: &mut Vars, f| {
            let w = v.fwd_mut();
            let p = w.queue.pop_front().expect("non-empty queue");
            f.observe(p.id);
            w.current = Some(p);
        },
    ));
    c.add(
        Transition::internal("fwd_I", f1, f3)
            .when(|v: &Vars| v.fwd().current.as_ref().is_some_and(Packet::is_interest))
            .sample(d_i, f_i)
            .action(|v: &mut Vars, f| v.fwd_mut().handle_interest(f.now())),
    );
    c.add(
        Transition::internal("fwd_D", f1, f2)
            .when(|v: &Vars| v.fwd().current.as_ref().is_some_and(|p| !p.is_interest()))
            .sample(d_d, f_d)
            .action(|v: &mut Vars, f| v.fwd_mut().handle_data(f.now())),
    );
    c.add(Transition::tick(f3).before(d_i));
    c.add(Transition::on(fw_i, "fw_I", f3, f0).at(d_i).when(|v: &Vars| v.fwd().out_face() == Some(SERVER_FACE)));
    c.add(Transition::on(fw_n, "fw_N", f3, f0).at(d_i).when(|v: &Vars| v.fwd().out_face() == Some(CLIENT_FACE)));
    c.add(Transition::internal("drop_I", f3, f0).at(d_i).when(|v: &Vars| v.fwd().out.is_none()));
    c.add(Transition::tick(f2).before(d_d));
    c.add(Transition::on(fw_d, "fw_D", f2, f0).at(d_d).when(|v: &Vars| v.fwd().out.is_some()));
    c.add(Transition::internal("drop_D", f2, f0).at(d_d).when(|v: &Vars| v.fwd().out.is_none()));
    c
}

/// Single-slot store-and-forward relay.
pub(crate) fn output_thread(name: &str, face: Face) -> Component<Vars> {
    let mut c = Component::new(name, Vars::Output(OutputVars { face, slot: None }));
    let s0 = c.location("s0");
    let s1 = c.location("s1");
    let recv = c.port("recv_pkt");
    let send = c.port("send_pkt");
    c.add(Transition::tick(s0));
    c.add(Transition::tick(s1));
    c.add(Transition::on(recv, "recv_pkt", s0, s1));
    c.add(Transition::on(send, "send_pkt", s1, s0));
    c
}
