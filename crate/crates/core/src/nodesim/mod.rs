//! Simulated network services for the release verifiers: full-node peers
//! serving headers and Merkle proofs, and block explorers answering over a
//! channel authenticated by pinned anchors. Services run in process or on
//! loopback TCP, and can be honest, forked, lying or unavailable.

pub mod identity;
pub mod messages;
pub mod scenario;
pub mod services;
pub mod transport;

pub use identity::{
    verify_signature, AnchorKey, CertError, Certificate, EndpointIdentity, TrustAnchors, KEY_LEN, SIG_LEN,
};
pub use messages::{explorer_signing_input, DecodeError, ExplorerMessage, PeerMessage};
pub use services::{
    answer_from_chain, serve_explorer, serve_peer, ExplorerBehavior, ExplorerClient, ExplorerService, PeerBehavior,
    PeerClient, PeerService, RemoteExplorer, RemotePeer, ServiceHandle,
};
pub use transport::{connect, Conn, Endpoint, Listener, TransportError, DEFAULT_TIMEOUT, MAX_FRAME};
pub use scenario::{
    fake_chain_cost, run_scenario, CostPoint, Exchange, ExplorerSetup, FakeChainCost, PeerSetup, ScenarioError,
    ScenarioScheme, ScenarioScript, Transcript, Wiring, World, SCENARIO_BITS,
};
