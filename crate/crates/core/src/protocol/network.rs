//! Simulated line network.
//!
//! Node `i` and node `i + 1` share link `i`. Each link carries two reliable
//! FIFO queues, one per direction. Nodes are state machines that react to
//! delivered messages by queueing more; they never see each other's state.

use std::collections::VecDeque;
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::message::{Direction, Message};
use crate::error::ProtocolError;
use crate::instance::AgentId;
use crate::price::Price;

/// Messages a node wants sent, tagged with their direction of travel.
#[derive(Debug, Default)]
pub struct Outbox {
    pending: Vec<(Direction, Message)>,
}

impl Outbox {
    pub fn up(&mut self, msg: Message) {
        self.pending.push((Direction::Upstream, msg));
    }

    pub fn down(&mut self, msg: Message) {
        self.pending.push((Direction::Downstream, msg));
    }

    fn drain(&mut self) -> std::vec::Drain<'_, (Direction, Message)> {
        self.pending.drain(..)
    }
}

/// What one market decided.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarketReport {
    pub trade_size: usize,
    pub winners: Vec<AgentId>,
    /// Winners' transfers (positive = agent pays).
    pub transfers: Vec<(AgentId, Price)>,
    pub coin: Option<bool>,
}

pub trait Node: Send {
    fn start(&mut self, out: &mut Outbox);
    /// `travel` is the direction the message was moving when it arrived.
    fn receive(&mut self, travel: Direction, msg: Message, out: &mut Outbox);
    fn is_done(&self) -> bool;
    fn report(&self) -> MarketReport;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Single-threaded, global send order.
    Fifo,
    /// Single-threaded; at each step a seeded generator picks which
    /// non-empty link queue delivers next.
    Shuffled(u64),
    /// One OS thread per node, channels between them.
    Threaded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub link_id: usize,
    pub direction: Direction,
    /// Position among messages on the same link and direction.
    pub seq: usize,
    pub variant: &'static str,
    pub entries: usize,
    pub bytes: usize,
}

/// Every message sent during one run, in canonical order (link, direction,
/// sequence), so the trace does not depend on delivery scheduling.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub links: usize,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    fn canonical(links: usize, mut records: Vec<TraceRecord>) -> Self {
        records.sort_by_key(|r| (r.link_id, r.direction, r.seq));
        Trace { links, records }
    }

    pub fn messages_on_link(&self, link: usize) -> usize {
        self.records.iter().filter(|r| r.link_id == link).count()
    }

    pub fn entries_on_link(&self, link: usize) -> usize {
        self.records.iter().filter(|r| r.link_id == link).map(|r| r.entries).sum()
    }

    pub fn max_messages_per_link(&self) -> usize {
        (0..self.links).map(|l| self.messages_on_link(l)).max().unwrap_or(0)
    }

    pub fn max_entries_per_link(&self) -> usize {
        (0..self.links).map(|l| self.entries_on_link(l)).max().unwrap_or(0)
    }

    pub fn total_messages(&self) -> usize {
        self.records.len()
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }

    /// CSV with columns `link_id,direction,variant,entries,bytes`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["link_id", "direction", "variant", "entries", "bytes"])
            .expect("in-memory write");
        for r in &self.records {
            let dir = match r.direction {
                Direction::Upstream => "upstream",
                Direction::Downstream => "downstream",
            };
            w.write_record([
                r.link_id.to_string(),
                dir.to_string(),
                r.variant.to_string(),
                r.entries.to_string(),
                r.bytes.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Link a message from `node` travelling in `dir` uses, and its receiver.
fn route(node: usize, dir: Direction, nodes: usize) -> (usize, usize) {
    match dir {
        Direction::Downstream => {
            assert!(node + 1 < nodes, "node {node} has no downstream neighbour");
            (node, node + 1)
        }
        Direction::Upstream => {
            assert!(node > 0, "node 0 has no upstream neighbour");
            (node - 1, node - 1)
        }
    }
}

struct Recorder {
    goods: usize,
    /// Per link: next sequence number for (upstream, downstream).
    seq: Vec<[usize; 2]>,
}

impl Recorder {
    fn new(links: usize, goods: usize) -> Self {
        Recorder {
            goods,
            seq: vec![[0, 0]; links],
        }
    }

    fn record(&mut self, link: usize, dir: Direction, msg: &Message) -> TraceRecord {
        let slot = &mut self.seq[link][dir as usize];
        let seq = *slot;
        *slot += 1;
        TraceRecord {
            link_id: link,
            direction: dir,
            seq,
            variant: msg.variant(),
            entries: msg.entries(),
            bytes: msg.byte_size(self.goods),
        }
    }
}

/// Runs the nodes to completion and returns the message trace.
pub fn run_nodes<N: Node>(nodes: &mut [N], goods: usize, schedule: Schedule) -> Result<Trace, ProtocolError> {
    match schedule {
        Schedule::Fifo => run_event_loop(nodes, goods, None),
        Schedule::Shuffled(seed) => run_event_loop(nodes, goods, Some(ChaCha8Rng::seed_from_u64(seed))),
        Schedule::Threaded => run_threaded(nodes, goods),
    }
}

fn run_event_loop<N: Node>(nodes: &mut [N], goods: usize, mut rng: Option<ChaCha8Rng>) -> Result<Trace, ProtocolError> {
    let count = nodes.len();
    let links = count - 1;
    let mut recorder = Recorder::new(links, goods);
    let mut records = Vec::new();
    // queues[link][dir]; `order` remembers global send order for FIFO mode.
    let mut queues: Vec<[VecDeque<Message>; 2]> = (0..links).map(|_| [VecDeque::new(), VecDeque::new()]).collect();
    let mut order: VecDeque<(usize, Direction)> = VecDeque::new();
    let mut out = Outbox::default();

    let mut flush = |from: usize,
                     out: &mut Outbox,
                     queues: &mut Vec<[VecDeque<Message>; 2]>,
                     order: &mut VecDeque<(usize, Direction)>,
                     records: &mut Vec<TraceRecord>| {
        for (dir, msg) in out.drain() {
            let (link, _) = route(from, dir, count);
            records.push(recorder.record(link, dir, &msg));
            queues[link][dir as usize].push_back(msg);
            order.push_back((link, dir));
        }
    };

    for (i, node) in nodes.iter_mut().enumerate() {
        node.start(&mut out);
        flush(i, &mut out, &mut queues, &mut order, &mut records);
    }
    loop {
        let next = match rng.as_mut() {
            None => order.pop_front(),
            Some(rng) => {
                let ready: Vec<(usize, Direction)> = (0..links)
                    .flat_map(|l| [(l, Direction::Upstream), (l, Direction::Downstream)])
                    .filter(|&(l, d)| !queues[l][d as usize].is_empty())
                    .collect();
                if ready.is_empty() {
                    None
                } else {
                    Some(ready[rng.random_range(0..ready.len())])
                }
            }
        };
        let Some((link, dir)) = next else { break };
        let msg = queues[link][dir as usize].pop_front().expect("queued message");
        let target = match dir {
            Direction::Downstream => link + 1,
            Direction::Upstream => link,
        };
        nodes[target].receive(dir, msg, &mut out);
        flush(target, &mut out, &mut queues, &mut order, &mut records);
    }
    if let Some(stuck) = nodes.iter().position(|n| !n.is_done()) {
        return Err(ProtocolError::Stalled(stuck));
    }
    Ok(Trace::canonical(links, records))
}

fn run_threaded<N: Node>(nodes: &mut [N], goods: usize) -> Result<Trace, ProtocolError> {
    let count = nodes.len();
    let links = count - 1;
    let records = Mutex::new(Vec::new());
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..count).map(|_| mpsc::channel::<(Direction, Message)>()).unzip();
    let stalled = Mutex::new(None);

    std::thread::scope(|scope| {
        for (i, (node, inbox)) in nodes.iter_mut().zip(receivers).enumerate() {
            let senders = senders.clone();
            let records = &records;
            let stalled = &stalled;
            scope.spawn(move || {
                // Each (link, direction) has exactly one sender, so local
                // sequence numbers match the event-loop ones.
                let mut recorder = Recorder::new(links, goods);
                let mut out = Outbox::default();
                let mut send = |out: &mut Outbox| {
                    for (dir, msg) in out.drain() {
                        let (link, target) = route(i, dir, count);
                        let rec = recorder.record(link, dir, &msg);
                        records.lock().expect("trace lock").push(rec);
                        // A finished receiver has dropped its inbox; nothing
                        // it could still need is lost.
                        let _ = senders[target].send((dir, msg));
                    }
                };
                node.start(&mut out);
                send(&mut out);
                while !node.is_done() {
                    match inbox.recv_timeout(Duration::from_secs(10)) {
                        Ok((dir, msg)) => {
                            node.receive(dir, msg, &mut out);
                            send(&mut out);
                        }
                        Err(_) => {
                            stalled.lock().expect("stall lock").get_or_insert(i);
                            break;
                        }
                    }
                }
            });
        }
    });
    if let Some(i) = stalled.into_inner().expect("stall lock") {
        return Err(ProtocolError::Stalled(i));
    }
    Ok(Trace::canonical(links, records.into_inner().expect("trace lock")))
}
