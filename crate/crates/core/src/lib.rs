//! Coalition-game engine and packet-forwarding simulator for selfish
//! wireless networks with cooperative (amplify-and-forward) transmission.

pub mod channel;
pub mod config;
pub mod coopgame;
pub mod experiment;
pub mod fairness;
pub mod geom;
pub mod market;
pub mod netsim;
