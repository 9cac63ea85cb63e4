//! The canonical five-switch test network.
//!
//! ```text
//!  denver                          new york
//!    |4                               |4
//!   s1 --1--(10ms,1000)--1-- s2 --2--(10ms,100)--1-- s3 --3--(1ms,1000)--1-- s5 --4-- chicago
//!    2                       3                        2
//!    |                       |                        |
//!  (30ms,1000)           (2ms,10)                 (5ms,1000)
//!    |                       |                        |
//!    1 --------------------- s4 ----------------------2
//!                            (3)
//! ```

use crate::topo::{parse_topology, Topology};

pub const TOPO5_JSON: &str = include_str!("../fixtures/topo5.json");

pub fn topo5() -> Topology {
    parse_topology(TOPO5_JSON.as_bytes()).expect("TOPO5 fixture is valid")
}
