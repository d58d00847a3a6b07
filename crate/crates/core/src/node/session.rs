//! Drivers that run a drone0/drone1 pair through a handshake.

use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{Node, NodeConfig, Phase, Progress, Reception};
use crate::bus::Bus;
use crate::error::{Error, Result};

/// Upper bound on scheduler rounds; a handshake needs a few dozen.
const MAX_ROUNDS: usize = 10_000;

/// Seeds for every random choice in one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionSeeds {
    pub initiator: u64,
    pub responder: u64,
    pub scheduler: u64,
}

impl SessionSeeds {
    /// Derive all seeds from one value.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        use rand::RngCore;
        SessionSeeds { initiator: rng.next_u64(), responder: rng.next_u64(), scheduler: rng.next_u64() }
    }
}

#[derive(Debug)]
pub struct NodePair {
    pub initiator: Node,
    pub responder: Node,
    scheduler: ChaCha20Rng,
}

impl NodePair {
    /// Create both nodes (and their subscriptions) before any traffic flows.
    pub fn new(bus: &Bus, initiator: NodeConfig, responder: NodeConfig, seeds: SessionSeeds) -> Result<Self> {
        if initiator.node_id != responder.peer_id || responder.node_id != initiator.peer_id {
            return Err(Error::Config("initiator and responder must name each other as peers".into()));
        }
        Ok(NodePair {
            initiator: Node::new(initiator, bus, ChaCha20Rng::seed_from_u64(seeds.initiator))?,
            responder: Node::new(responder, bus, ChaCha20Rng::seed_from_u64(seeds.responder))?,
            scheduler: ChaCha20Rng::seed_from_u64(seeds.scheduler),
        })
    }

    /// Single-threaded handshake: step nodes in seeded order and release
    /// bus traffic only when neither can advance. A stall with nothing left
    /// on the bus times out every unfinished node.
    pub fn handshake(&mut self, bus: &Bus) {
        for _ in 0..MAX_ROUNDS {
            let mut order = [0usize, 1];
            order.shuffle(&mut self.scheduler);
            let mut progressed = false;
            let mut finished = 0;
            for i in order {
                let node = if i == 0 { &mut self.initiator } else { &mut self.responder };
                match node.step() {
                    Progress::Advanced => progressed = true,
                    Progress::Finished => finished += 1,
                    Progress::Waiting => {}
                }
            }
            if finished == 2 {
                return;
            }
            if !progressed && !bus.deliver_next() {
                break;
            }
        }
        for node in [&mut self.initiator, &mut self.responder] {
            if !node.phase().is_terminal() {
                node.fail_timeout();
            }
        }
    }

    /// Run both handshakes concurrently on their own threads.
    pub fn handshake_threaded(self) -> Self {
        let NodePair { mut initiator, mut responder, scheduler } = self;
        let (initiator, responder) = thread::scope(|s| {
            let a = s.spawn(move || {
                initiator.run_handshake();
                initiator
            });
            let b = s.spawn(move || {
                responder.run_handshake();
                responder
            });
            (a.join().expect("initiator thread panicked"), b.join().expect("responder thread panicked"))
        });
        NodePair { initiator, responder, scheduler }
    }

    pub fn established(&self) -> bool {
        self.initiator.phase() == Phase::SessionEstablished && self.responder.phase() == Phase::SessionEstablished
    }

    /// Both nodes established with byte-identical session keys.
    pub fn keys_agree(&self) -> bool {
        match (self.initiator.session_key(), self.responder.session_key()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Initiator sends `payload`; the responder verifies it and sends it
    /// back; the initiator verifies the echo. Returns both receptions.
    pub fn round_trip(&mut self, payload: &[u8], timeout: Duration) -> Result<(Reception, Reception)> {
        self.initiator.send_authenticated(payload)?;
        let forward = self.responder.recv_data(timeout)?;
        let echo = forward.payload.clone().unwrap_or_default();
        self.responder.send_authenticated(&echo)?;
        let back = self.initiator.recv_data(timeout)?;
        Ok((forward, back))
    }
}
