use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::chainkit::{build_proof, Address, Block, Chain, ChainError, Hash256, Transaction};

use super::identity::EndpointIdentity;
use super::messages::{explorer_signing_input, ExplorerMessage, PeerMessage};
use super::transport::{connect, Conn, Endpoint, Listener, TransportError, DEFAULT_TIMEOUT};

/// How a simulated full node answers.
#[derive(Clone, Debug)]
pub enum PeerBehavior {
    Honest(Arc<Chain>),
    /// Serves a chain whose blocks after the fork point were forged.
    Forked { view: Arc<Chain>, fork_height: u64 },
    /// Replies with the scripted messages in order, then `NotFound`.
    Lying(Vec<PeerMessage>),
    Unavailable,
}

impl PeerBehavior {
    /// Honest prefix up to `fork_height` followed by `suffix`.
    pub fn forked(base: &Chain, fork_height: u64, suffix: Vec<Block>) -> Result<PeerBehavior, ChainError> {
        let mut view = base.truncated(fork_height);
        for b in suffix {
            view.push(b)?;
        }
        Ok(PeerBehavior::Forked { view: Arc::new(view), fork_height })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PeerBehavior::Honest(_) => "honest",
            PeerBehavior::Forked { .. } => "forked",
            PeerBehavior::Lying(_) => "lying",
            PeerBehavior::Unavailable => "unavailable",
        }
    }
}

/// Answers chain queries from a snapshot.
pub fn answer_from_chain(chain: &Chain, req: &PeerMessage) -> PeerMessage {
    match req {
        PeerMessage::GetHeaders { from } => match chain.headers_after(from) {
            Some(hs) => PeerMessage::Headers(hs.to_vec()),
            None => PeerMessage::NotFound,
        },
        PeerMessage::GetMerkleBlock { txid } => {
            let Some((height, tx)) = chain.find_tx(txid) else { return PeerMessage::NotFound };
            let block = chain.block_at(height).expect("height from index");
            let proof = build_proof(&block.txs, txid, block.hash()).expect("tx is in its block");
            PeerMessage::MerkleBlock { header: block.header, proof, tx: tx.clone() }
        }
        _ => PeerMessage::NotFound,
    }
}

/// Request handler for one simulated node.
#[derive(Clone, Debug)]
pub struct PeerService {
    behavior: PeerBehavior,
    script_pos: usize,
}

impl PeerService {
    pub fn new(behavior: PeerBehavior) -> Self {
        PeerService { behavior, script_pos: 0 }
    }

    pub fn behavior(&self) -> &PeerBehavior {
        &self.behavior
    }

    /// `None` models a node that does not answer at all.
    pub fn respond(&mut self, req: &PeerMessage) -> Option<PeerMessage> {
        match &self.behavior {
            PeerBehavior::Honest(chain) => Some(answer_from_chain(chain, req)),
            PeerBehavior::Forked { view, .. } => Some(answer_from_chain(view, req)),
            PeerBehavior::Lying(script) => {
                let m = script.get(self.script_pos).cloned().unwrap_or(PeerMessage::NotFound);
                self.script_pos += 1;
                Some(m)
            }
            PeerBehavior::Unavailable => None,
        }
    }
}

/// How a simulated explorer answers.
#[derive(Clone, Debug)]
pub enum ExplorerBehavior {
    Honest(Arc<Chain>),
    /// Claims the scripted (transaction, confirmations) pairs regardless of
    /// any chain.
    Lying(Vec<(Transaction, u64)>),
    Unavailable,
}

impl ExplorerBehavior {
    pub fn name(&self) -> &'static str {
        match self {
            ExplorerBehavior::Honest(_) => "honest",
            ExplorerBehavior::Lying(_) => "lying",
            ExplorerBehavior::Unavailable => "unavailable",
        }
    }
}

/// Per-session explorer state machine: `Hello` first, then `GetTx` requests.
#[derive(Clone, Debug)]
pub struct ExplorerService {
    behavior: ExplorerBehavior,
    identity: EndpointIdentity,
    challenge: Option<[u8; 32]>,
}

impl ExplorerService {
    pub fn new(behavior: ExplorerBehavior, identity: EndpointIdentity) -> Self {
        ExplorerService { behavior, identity, challenge: None }
    }

    /// Starts a fresh session.
    pub fn reset(&mut self) {
        self.challenge = None;
    }

    fn signed(&self, challenge: &[u8; 32], mut msg: ExplorerMessage) -> ExplorerMessage {
        let sig = self.identity.sign(&explorer_signing_input(challenge, &msg));
        match &mut msg {
            ExplorerMessage::ServerHello { signature, .. }
            | ExplorerMessage::TxInfo { signature, .. }
            | ExplorerMessage::TxNotFound { signature } => *signature = sig,
            _ => {}
        }
        msg
    }

    fn lookup(&self, wallet: &Address, txid: &Hash256) -> Option<(Transaction, u64)> {
        match &self.behavior {
            ExplorerBehavior::Honest(chain) => {
                let (_, tx) = chain.find_tx(txid)?;
                tx.pays(wallet).then(|| (tx.clone(), chain.confirmations(txid)))
            }
            ExplorerBehavior::Lying(script) => script.iter().find(|(tx, _)| tx.txid() == *txid).cloned(),
            ExplorerBehavior::Unavailable => None,
        }
    }

    /// Protocol errors end the session.
    pub fn respond(&mut self, req: &ExplorerMessage) -> Result<Option<ExplorerMessage>, TransportError> {
        if matches!(self.behavior, ExplorerBehavior::Unavailable) {
            return Ok(None);
        }
        match req {
            ExplorerMessage::Hello { challenge } => {
                self.challenge = Some(*challenge);
                let hello = ExplorerMessage::ServerHello {
                    certificate: self.identity.certificate.clone(),
                    signature: [0; 64],
                };
                Ok(Some(self.signed(challenge, hello)))
            }
            ExplorerMessage::GetTx { wallet, txid } => {
                let challenge = self.challenge.ok_or_else(|| TransportError::Protocol("gettx before hello".into()))?;
                let reply = match self.lookup(wallet, txid) {
                    Some((tx, confirmations)) => ExplorerMessage::TxInfo { tx, confirmations, signature: [0; 64] },
                    None => ExplorerMessage::TxNotFound { signature: [0; 64] },
                };
                Ok(Some(self.signed(&challenge, reply)))
            }
            other => Err(TransportError::Protocol(format!("unexpected {} from client", other.name()))),
        }
    }
}

/// Running service; stopping is idempotent and also happens on drop.
pub struct ServiceHandle {
    endpoint: Endpoint,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Endpoint that refuses connections: nothing is registered under a local
/// name, and an ephemeral TCP port is bound and released immediately.
fn dead_endpoint(endpoint: &Endpoint) -> Result<Endpoint, TransportError> {
    match endpoint {
        Endpoint::Local(_) => Ok(endpoint.clone()),
        Endpoint::Tcp(addr) if addr.port() == 0 => {
            let l = TcpListener::bind(addr).map_err(TransportError::from)?;
            Ok(Endpoint::Tcp(l.local_addr().map_err(TransportError::from)?))
        }
        Endpoint::Tcp(_) => Ok(endpoint.clone()),
    }
}

fn spawn_service<F>(endpoint: &Endpoint, mut session: F) -> Result<ServiceHandle, TransportError>
where
    F: FnMut(&mut dyn Conn) + Send + 'static,
{
    let listener = Listener::bind(endpoint)?;
    let bound = listener.endpoint();
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = std::thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept_timeout(Duration::from_millis(20)) {
                Ok(Some(mut conn)) => session(conn.as_mut()),
                Ok(None) => {}
                Err(_) => break,
            }
        }
    });
    Ok(ServiceHandle { endpoint: bound, stop, thread: Some(thread) })
}

/// Serves peer requests on `endpoint`, one connection at a time.
pub fn serve_peer(behavior: PeerBehavior, endpoint: &Endpoint) -> Result<ServiceHandle, TransportError> {
    if matches!(behavior, PeerBehavior::Unavailable) {
        let endpoint = dead_endpoint(endpoint)?;
        return Ok(ServiceHandle { endpoint, stop: Arc::new(AtomicBool::new(true)), thread: None });
    }
    let mut service = PeerService::new(behavior);
    spawn_service(endpoint, move |conn| loop {
        let Ok(frame) = conn.recv() else { return };
        let Ok(req) = PeerMessage::decode(&frame) else { return };
        let Some(resp) = service.respond(&req) else { return };
        if conn.send(&resp.encode()).is_err() {
            return;
        }
    })
}

/// Serves explorer sessions on `endpoint`, authenticated by `identity`.
pub fn serve_explorer(
    behavior: ExplorerBehavior,
    identity: EndpointIdentity,
    endpoint: &Endpoint,
) -> Result<ServiceHandle, TransportError> {
    if matches!(behavior, ExplorerBehavior::Unavailable) {
        let endpoint = dead_endpoint(endpoint)?;
        return Ok(ServiceHandle { endpoint, stop: Arc::new(AtomicBool::new(true)), thread: None });
    }
    let mut service = ExplorerService::new(behavior, identity);
    spawn_service(endpoint, move |conn| {
        service.reset();
        loop {
            let Ok(frame) = conn.recv() else { return };
            let Ok(req) = ExplorerMessage::decode(&frame) else { return };
            let Ok(Some(resp)) = service.respond(&req) else { return };
            if conn.send(&resp.encode()).is_err() {
                return;
            }
        }
    })
}

/// Client side of the peer protocol.
pub trait PeerClient {
    fn request(&mut self, msg: &PeerMessage) -> Result<PeerMessage, TransportError>;
}

/// Client side of the explorer protocol.
pub trait ExplorerClient {
    fn exchange(&mut self, msg: &ExplorerMessage) -> Result<ExplorerMessage, TransportError>;
}

impl PeerClient for PeerService {
    fn request(&mut self, msg: &PeerMessage) -> Result<PeerMessage, TransportError> {
        self.respond(msg).ok_or_else(|| TransportError::Refused("in-process peer".into()))
    }
}

impl ExplorerClient for ExplorerService {
    fn exchange(&mut self, msg: &ExplorerMessage) -> Result<ExplorerMessage, TransportError> {
        self.respond(msg)?.ok_or_else(|| TransportError::Refused("in-process explorer".into()))
    }
}

/// Peer client over a transport connection, opened lazily.
pub struct RemotePeer {
    endpoint: Endpoint,
    conn: Option<Box<dyn Conn>>,
    timeout: Duration,
}

impl RemotePeer {
    pub fn new(endpoint: Endpoint) -> Self {
        RemotePeer { endpoint, conn: None, timeout: DEFAULT_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

fn round_trip(
    endpoint: &Endpoint,
    slot: &mut Option<Box<dyn Conn>>,
    timeout: Duration,
    frame: &[u8],
) -> Result<Vec<u8>, TransportError> {
    if slot.is_none() {
        *slot = Some(connect(endpoint, timeout)?);
    }
    let conn = slot.as_mut().unwrap();
    let r = conn.send(frame).and_then(|_| conn.recv());
    if r.is_err() {
        *slot = None;
    }
    r
}

impl PeerClient for RemotePeer {
    fn request(&mut self, msg: &PeerMessage) -> Result<PeerMessage, TransportError> {
        let frame = round_trip(&self.endpoint, &mut self.conn, self.timeout, &msg.encode())?;
        PeerMessage::decode(&frame).map_err(|e| TransportError::Protocol(e.to_string()))
    }
}

/// Explorer client over a transport connection, opened lazily.
pub struct RemoteExplorer {
    endpoint: Endpoint,
    conn: Option<Box<dyn Conn>>,
    timeout: Duration,
}

impl RemoteExplorer {
    pub fn new(endpoint: Endpoint) -> Self {
        RemoteExplorer { endpoint, conn: None, timeout: DEFAULT_TIMEOUT }
    }
}

impl ExplorerClient for RemoteExplorer {
    fn exchange(&mut self, msg: &ExplorerMessage) -> Result<ExplorerMessage, TransportError> {
        let frame = round_trip(&self.endpoint, &mut self.conn, self.timeout, &msg.encode())?;
        ExplorerMessage::decode(&frame).map_err(|e| TransportError::Protocol(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainkit::{SimClock, BITS_ALWAYS};
    use crate::nodesim::identity::AnchorKey;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chain(n: u64) -> Chain {
        let mut clock = SimClock::default();
        let mut c = Chain::genesis(BITS_ALWAYS, &mut clock).unwrap();
        c.mine_empty(n, Address([1; 20]), &mut clock).unwrap();
        c
    }

    #[test]
    fn honest_peer_serves_exact_suffix() {
        let c = Arc::new(chain(12));
        let mut svc = PeerService::new(PeerBehavior::Honest(c.clone()));
        let from = c.hash_at(2).unwrap();
        match svc.request(&PeerMessage::GetHeaders { from }).unwrap() {
            PeerMessage::Headers(hs) => assert_eq!(hs, c.headers()[3..].to_vec()),
            other => panic!("{other:?}"),
        }
        assert_eq!(svc.request(&PeerMessage::GetHeaders { from: Hash256([9; 32]) }).unwrap(), PeerMessage::NotFound);
    }

    #[test]
    fn unavailable_peer_refuses_over_both_transports() {
        for ep in ["local:svc-unavailable", "tcp:127.0.0.1:0"] {
            let h = serve_peer(PeerBehavior::Unavailable, &ep.parse().unwrap()).unwrap();
            let mut client = RemotePeer::new(h.endpoint().clone());
            let r = client.request(&PeerMessage::GetHeaders { from: Hash256::ZERO });
            assert!(matches!(r, Err(TransportError::Refused(_))), "{ep}: {r:?}");
        }
    }

    #[test]
    fn remote_peer_over_tcp_and_idempotent_stop() {
        let c = Arc::new(chain(3));
        let mut h = serve_peer(PeerBehavior::Honest(c.clone()), &"tcp:127.0.0.1:0".parse().unwrap()).unwrap();
        let mut client = RemotePeer::new(h.endpoint().clone());
        let r = client.request(&PeerMessage::GetHeaders { from: c.hash_at(0).unwrap() }).unwrap();
        assert_eq!(r, PeerMessage::Headers(c.headers()[1..].to_vec()));
        h.stop();
        h.stop();
    }

    #[test]
    fn non_loopback_bind_is_refused() {
        let ep = Endpoint::Tcp("0.0.0.0:0".parse().unwrap());
        assert!(matches!(serve_peer(PeerBehavior::Honest(Arc::new(chain(0))), &ep), Err(TransportError::NonLoopback(_))));
    }

    #[test]
    fn explorer_requires_hello() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let id = AnchorKey::generate(&mut rng).issue("explorer", &mut rng);
        let mut svc = ExplorerService::new(ExplorerBehavior::Honest(Arc::new(chain(1))), id);
        let r = svc.exchange(&ExplorerMessage::GetTx { wallet: Address([0; 20]), txid: Hash256::ZERO });
        assert!(matches!(r, Err(TransportError::Protocol(_))));
    }
}
