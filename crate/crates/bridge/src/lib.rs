//! Service side of the bridge: HTTP endpoints, the OpenID provider, the
//! session store, outbound resolution, plus the wallet and client
//! simulators used for end-to-end runs.

pub mod client;
pub mod clock;
pub mod config;
pub mod provider;
pub mod resolver;
pub mod rp;
pub mod server;
pub mod statuslist;
pub mod store;
pub mod transcript;
pub mod wallet;
