//! Link abstraction shared by the simulator and UDP backends.

use std::net::SocketAddr;

/// Address of a peer on a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkAddr {
    /// Simulated endpoint id.
    Sim(u32),
    /// Real datagram socket address.
    Udp(SocketAddr),
}

/// A datagram link. Both backends present this interface; the protocol
/// engine above is identical either way.
pub trait Link: Send {
    fn local_addr(&self) -> LinkAddr;

    /// The explicit/seed peer set used to bootstrap discovery. Learned
    /// peers are tracked by the protocol engine, not the link.
    fn bootstrap_peers(&self) -> Vec<LinkAddr>;

    /// Fire-and-forget datagram send. `now_ms` drives the simulator's
    /// virtual schedule; the UDP backend ignores it.
    fn send(&mut self, to: LinkAddr, bytes: &[u8], now_ms: u64);

    /// Drains every datagram available at `now_ms`, with sender addresses.
    fn poll(&mut self, now_ms: u64) -> Vec<(LinkAddr, Vec<u8>)>;
}
