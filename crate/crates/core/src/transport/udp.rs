//! Plain datagram backend for real-network (loopback/LAN) runs.
//!
//! One socket per participant. The first participant on a host binds the
//! domain's well-known port (`base_port + domain_id`); later ones fall back
//! to an ephemeral port and announce to the well-known port, which is
//! enough for peers to learn each other's source addresses. Additional
//! peers can be given explicitly.

use crate::transport::link::{Link, LinkAddr};
use crate::transport::MAX_MESSAGE_SIZE;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};

pub const DEFAULT_BASE_PORT: u16 = 7400;

#[derive(Debug, Clone)]
pub struct UdpConfig {
    pub base_port: u16,
    pub bind_ip: IpAddr,
    /// Explicit peers beyond the domain's well-known port.
    pub peers: Vec<SocketAddr>,
}

impl Default for UdpConfig {
    fn default() -> Self {
        UdpConfig {
            base_port: DEFAULT_BASE_PORT,
            bind_ip: IpAddr::V4(Ipv4Addr::LOCALHOST),
            peers: Vec::new(),
        }
    }
}

pub struct UdpLink {
    socket: UdpSocket,
    local: SocketAddr,
    peers: Vec<SocketAddr>,
    recv_buf: Box<[u8; MAX_MESSAGE_SIZE]>,
}

impl UdpLink {
    pub fn open(domain_id: u8, config: &UdpConfig) -> io::Result<UdpLink> {
        let well_known = SocketAddr::new(
            config.bind_ip,
            config.base_port.saturating_add(domain_id as u16),
        );
        let socket = match UdpSocket::bind(well_known) {
            Ok(s) => s,
            Err(e) if e.kind() == io::ErrorKind::AddrInUse => {
                UdpSocket::bind(SocketAddr::new(config.bind_ip, 0))?
            }
            Err(e) => return Err(e),
        };
        socket.set_nonblocking(true)?;
        let local = socket.local_addr()?;
        let mut peers = config.peers.clone();
        if local != well_known && !peers.contains(&well_known) {
            peers.push(well_known);
        }
        Ok(UdpLink {
            socket,
            local,
            peers,
            recv_buf: Box::new([0u8; MAX_MESSAGE_SIZE]),
        })
    }
}

impl Link for UdpLink {
    fn local_addr(&self) -> LinkAddr {
        LinkAddr::Udp(self.local)
    }

    fn bootstrap_peers(&self) -> Vec<LinkAddr> {
        self.peers.iter().copied().map(LinkAddr::Udp).collect()
    }

    fn send(&mut self, to: LinkAddr, bytes: &[u8], _now_ms: u64) {
        let LinkAddr::Udp(addr) = to else {
            return;
        };
        // Datagram sends are best-effort by contract; reliability lives in
        // the protocol layer above.
        let _ = self.socket.send_to(bytes, addr);
    }

    fn poll(&mut self, _now_ms: u64) -> Vec<(LinkAddr, Vec<u8>)> {
        let mut out = Vec::new();
        loop {
            match self.socket.recv_from(&mut self.recv_buf[..]) {
                Ok((len, from)) => {
                    out.push((LinkAddr::Udp(from), self.recv_buf[..len].to_vec()));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                Err(_) => break,
            }
        }
        out
    }
}
