//! Node/edge view of one proxy's neighbourhood for graph rendering.

use std::collections::{BTreeMap, VecDeque};

use evochain_core::classify::ChangeCategory;
use evochain_core::graph::{GraphStore, ProxyNode, VersionKey, VersionNode};
use evochain_core::types::Address;
use serde::Serialize;

pub const DEFAULT_DEPTH: u32 = 2;
pub const MAX_DEPTH: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Proxy {
        id: String,
        label: String,
        address: Address,
        proxy_type: String,
        created_at: u64,
        total_versions: u32,
    },
    Version {
        id: String,
        label: String,
        proxy: Address,
        version_number: u32,
        contract_address: Address,
        creation_timestamp: Option<u64>,
        last_tx_timestamp: Option<u64>,
        total_transactions: u64,
        vulnerabilities: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Implements,
    ObservedChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    pub categories: Vec<ChangeCategory>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    pub root: String,
    pub depth: u32,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

pub fn proxy_id(address: &Address) -> String {
    format!("proxy:{address}")
}

pub fn version_id(key: &VersionKey) -> String {
    format!("version:{}:{}", key.proxy, key.version_number)
}

fn proxy_node(p: &ProxyNode) -> Node {
    Node::Proxy {
        id: proxy_id(&p.address),
        label: p.address.to_string(),
        address: p.address,
        proxy_type: p.proxy_type.clone(),
        created_at: p.created_at,
        total_versions: p.total_versions,
    }
}

fn version_node(v: &VersionNode) -> Node {
    Node::Version {
        id: version_id(&v.key()),
        label: format!("v{}", v.version_number),
        proxy: v.proxy,
        version_number: v.version_number,
        contract_address: v.contract_address,
        creation_timestamp: v.creation_timestamp,
        last_tx_timestamp: v.last_tx_timestamp,
        total_transactions: v.total_transactions,
        vulnerabilities: v.vulnerabilities.clone(),
    }
}

/// Breadth-first neighbourhood of `proxy`, treating edges as undirected.
///
/// A node is kept when it lies within `depth` hops of the root; an edge is
/// kept when it is traversed by that search, i.e. its nearer endpoint is at
/// most `depth - 1` hops away. Returns `None` for an unknown proxy.
pub fn neighbourhood(store: &GraphStore, proxy: &Address, depth: u32) -> Option<Subgraph> {
    let root = store.proxy(proxy)?;

    // adjacency restricted to this proxy: versions never link across proxies
    let versions: Vec<&VersionNode> = store.versions_of(proxy).collect();
    let mut all_edges: Vec<(String, String, Edge)> = Vec::new();
    for v in &versions {
        let (s, t) = (proxy_id(proxy), version_id(&v.key()));
        all_edges.push((s.clone(), t.clone(), Edge {
            source: s,
            target: t,
            kind: EdgeKind::Implements,
            categories: Vec::new(),
            evidence: Vec::new(),
        }));
    }
    for c in store.changes().filter(|c| c.to.proxy == *proxy) {
        let (s, t) = (version_id(&c.from), version_id(&c.to));
        all_edges.push((s.clone(), t.clone(), Edge {
            source: s,
            target: t,
            kind: EdgeKind::ObservedChange,
            categories: c.categories.clone(),
            evidence: c.evidence.clone(),
        }));
    }

    let mut dist: BTreeMap<String, u32> = BTreeMap::new();
    let root_id = proxy_id(proxy);
    dist.insert(root_id.clone(), 0);
    let mut queue = VecDeque::from([root_id.clone()]);
    while let Some(id) = queue.pop_front() {
        let d = dist[&id];
        if d == depth {
            continue;
        }
        for (s, t, _) in &all_edges {
            let other = if *s == id {
                t
            } else if *t == id {
                s
            } else {
                continue;
            };
            if !dist.contains_key(other) {
                dist.insert(other.clone(), d + 1);
                queue.push_back(other.clone());
            }
        }
    }

    let mut nodes = vec![proxy_node(root)];
    nodes.extend(
        versions
            .iter()
            .filter(|v| dist.contains_key(&version_id(&v.key())))
            .map(|v| version_node(v)),
    );
    let edges = all_edges
        .into_iter()
        .filter(|(s, t, _)| {
            let near = dist.get(s).into_iter().chain(dist.get(t)).min();
            near.is_some_and(|d| d + 1 <= depth)
        })
        .map(|(_, _, e)| e)
        .collect();
    Some(Subgraph {
        root: root_id,
        depth,
        nodes,
        edges,
    })
}
