//! Packets, FIFO buffers with drop-oldest, and the per-episode packet ledger.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

pub const PACKET_BYTES: u32 = 1456;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    /// Shared by every copy of the same generated packet.
    pub lineage: u64,
    pub origin: usize,
    pub created_at: u64,
    /// Spray-and-Wait copy counter L.
    pub copies: Option<u32>,
    pub hops: u32,
    /// First step at which the holder may forward this packet.
    pub ready_at: u64,
}

impl Packet {
    pub fn size_bytes(&self) -> u32 {
        PACKET_BYTES
    }
}

/// True when a packet is due at `step` with generation interval `interval`.
pub fn generation_due(step: u64, interval: u64) -> bool {
    assert!(interval >= 1, "generation interval must be at least 1");
    step % interval == 0
}

/// Hands out globally unique packet ids.
#[derive(Debug, Clone, Default)]
pub struct PacketFactory {
    next_id: u64,
}

impl PacketFactory {
    pub fn original(&mut self, origin: usize, step: u64, copies: Option<u32>) -> Packet {
        let id = self.next_id;
        self.next_id += 1;
        Packet { id, lineage: id, origin, created_at: step, copies, hops: 0, ready_at: step }
    }

    /// A fresh copy of `parent` in the same lineage.
    pub fn copy_of(&mut self, parent: &Packet, copies: u32) -> Packet {
        let id = self.next_id;
        self.next_id += 1;
        Packet { id, copies: Some(copies), ..parent.clone() }
    }

    pub fn issued(&self) -> u64 {
        self.next_id
    }
}

/// FIFO queue; `capacity: None` is the lander's unbounded sink.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Buffer {
    queue: VecDeque<Packet>,
    capacity: Option<usize>,
}

impl Buffer {
    pub fn bounded(capacity: usize) -> Self {
        assert!(capacity >= 1, "buffer capacity must be at least 1");
        Self { queue: VecDeque::new(), capacity: Some(capacity) }
    }

    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity.is_some_and(|c| self.queue.len() >= c)
    }

    /// Fill fraction in `[0, 1]`; 0 for the unbounded sink.
    pub fn occupancy(&self) -> f64 {
        self.capacity.map_or(0.0, |c| self.queue.len() as f64 / c as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.queue.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Packet> {
        self.queue.iter_mut()
    }

    pub fn holds_lineage(&self, lineage: u64) -> bool {
        self.queue.iter().any(|p| p.lineage == lineage)
    }

    /// Appends `packet`; if the buffer was full the oldest packet is removed
    /// and returned.
    pub fn enqueue(&mut self, packet: Packet) -> Option<Packet> {
        let dropped = if self.is_full() { self.queue.pop_front() } else { None };
        self.queue.push_back(packet);
        dropped
    }

    /// Removes the `min(k, len)` oldest packets.
    pub fn dequeue_batch(&mut self, k: usize) -> Vec<Packet> {
        let n = k.min(self.queue.len());
        self.queue.drain(..n).collect()
    }

    /// Number of packets forwardable at `step`. Packets are enqueued in
    /// non-decreasing `ready_at` order, so these form a prefix.
    pub fn ready_count(&self, step: u64) -> usize {
        self.queue.iter().take_while(|p| p.ready_at <= step).count()
    }

    /// Removes the packet at `index`.
    pub fn remove(&mut self, index: usize) -> Option<Packet> {
        self.queue.remove(index)
    }
}

/// Moves up to `k` head packets from `src` to `dst`; returns the moved packets
/// and whatever `dst` dropped to make room.
pub fn transfer(src: &mut Buffer, dst: &mut Buffer, k: usize, step: u64) -> (Vec<Packet>, Vec<Packet>) {
    let mut moved = Vec::new();
    let mut dropped = Vec::new();
    for mut p in src.dequeue_batch(k) {
        p.hops += 1;
        p.ready_at = step + 1;
        moved.push(p.clone());
        dropped.extend(dst.enqueue(p));
    }
    (moved, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fate {
    Delivered,
    Dropped,
    Buffered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerRow {
    pub id: u64,
    pub lineage: u64,
    pub origin: usize,
    pub created_at: u64,
    pub fate: Fate,
    pub fate_step: u64,
    pub hops: u32,
}

/// Final fate of every packet copy in an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PacketLedger {
    pub rows: Vec<LedgerRow>,
}

impl PacketLedger {
    pub fn record(&mut self, p: &Packet, fate: Fate, step: u64) {
        self.rows.push(LedgerRow {
            id: p.id,
            lineage: p.lineage,
            origin: p.origin,
            created_at: p.created_at,
            fate,
            fate_step: step,
            hops: p.hops,
        });
    }

    /// CSV with header `id,lineage,origin,created_at,fate,fate_step,hops`,
    /// rows sorted by id.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut rows = self.rows.clone();
        rows.sort_by_key(|r| r.id);
        let mut w = csv::Writer::from_writer(out);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
