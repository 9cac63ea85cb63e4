//! Random connected topologies and wire messages for property tests and
//! benchmarks.

pub mod strategies;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use crate::topo::{parse_topology, Topology};

/// Port every generated endpoint attaches to.
pub const ENDPOINT_PORT: u16 = 100;

#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub max_switches: usize,
    pub max_links: usize,
    /// Integer latencies in this inclusive range, so equal sums tie exactly.
    pub latency_ms: (u32, u32),
    pub capacities: &'static [f64],
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_switches: 8,
            max_links: 14,
            latency_ms: (1, 100),
            capacities: &[10.0, 100.0, 1000.0],
        }
    }
}

/// A connected topology with 2..=`max_switches` switches named `s1..`, a
/// random spanning tree plus extra links up to `max_links`, and one endpoint
/// per switch: city `c<i>` on port [`ENDPOINT_PORT`] with prefix `10.<i>.0.0/24`.
pub fn random_topology<R: Rng>(rng: &mut R, params: &GenParams) -> Topology {
    let n = rng.gen_range(2..=params.max_switches.max(2));
    let max_pairs = n * (n - 1) / 2;
    let m = rng.gen_range(n - 1..=params.max_links.min(max_pairs).max(n - 1));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        pairs.push((parent, order[i]));
    }
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !pairs.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)))
        .collect();
    rest.shuffle(rng);
    pairs.extend(rest.into_iter().take(m - (n - 1)));

    let mut next_port = vec![1u16; n];
    let links: Vec<_> = pairs
        .iter()
        .map(|&(a, b)| {
            let (pa, pb) = (next_port[a], next_port[b]);
            next_port[a] += 1;
            next_port[b] += 1;
            json!({
                "a": format!("s{}", a + 1), "a_port": pa,
                "b": format!("s{}", b + 1), "b_port": pb,
                "latency_ms": rng.gen_range(params.latency_ms.0..=params.latency_ms.1) as f64,
                "capacity_mbps": *params.capacities.choose(rng).expect("capacities"),
            })
        })
        .collect();
    let doc = json!({
        "version": 1,
        "switches": (0..n).map(|i| json!({
            "dpid": format!("00:00:00:00:00:00:00:{:02x}", i + 1),
            "name": format!("s{}", i + 1),
        })).collect::<Vec<_>>(),
        "links": links,
        "endpoints": (0..n).map(|i| json!({
            "city": format!("c{}", i + 1),
            "switch": format!("s{}", i + 1),
            "port": ENDPOINT_PORT,
            "prefix": format!("10.{}.0.0/24", i + 1),
        })).collect::<Vec<_>>(),
    });
    parse_topology(doc.to_string().as_bytes()).expect("generated topology is valid")
}
