use std::collections::{BTreeMap, BTreeSet};

use crate::codec::NodeId;
use crate::node::{NodeKind, NodeProfile};
use crate::scenario::Diagnostic;

/// Who put a frame on air. The attacker sits outside the NodeId space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transmitter {
    Node(NodeId),
    Attacker,
}

/// Who receives a delivery. The tap is the attacker's receiver, which
/// doubles as the passive sniffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Listener {
    Node(NodeId),
    Tap,
}

/// Radio reachability. Links are stored as ordered pairs `(low, high)`, so
/// adjacency is symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: BTreeMap<NodeId, NodeProfile>,
    links: BTreeSet<(NodeId, NodeId)>,
    pub attacker_hears: BTreeSet<NodeId>,
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl Topology {
    /// Every node hears every other node and the attacker hears all.
    pub fn full_mesh(nodes: Vec<NodeProfile>) -> Self {
        let nodes: BTreeMap<_, _> = nodes.into_iter().map(|p| (p.node_id, p)).collect();
        let ids: Vec<NodeId> = nodes.keys().copied().collect();
        let links = ids
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&b| (a, b)))
            .collect();
        Self {
            attacker_hears: ids.iter().copied().collect(),
            nodes,
            links,
        }
    }

    /// Replaces the adjacency; pairs may be given in either order.
    pub fn set_links(&mut self, links: impl IntoIterator<Item = (NodeId, NodeId)>) {
        self.links = links.into_iter().map(|(a, b)| ordered(a, b)).collect();
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.links.iter().copied()
    }

    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.links.contains(&ordered(a, b))
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .keys()
            .copied()
            .filter(|&other| other != id && self.in_range(id, other))
            .collect()
    }

    pub fn gateway(&self) -> Option<&NodeProfile> {
        self.nodes.values().find(|p| p.kind == NodeKind::Gateway)
    }

    pub fn node_ids(&self) -> BTreeSet<NodeId> {
        self.nodes.keys().copied().collect()
    }

    /// Everyone in range of `from`, in a fixed order: nodes ascending, then
    /// the tap. A transmitter never hears itself.
    pub fn listeners(&self, from: Transmitter) -> Vec<Listener> {
        match from {
            Transmitter::Node(id) => {
                let mut out: Vec<Listener> = self.neighbors(id).into_iter().map(Listener::Node).collect();
                if self.attacker_hears.contains(&id) {
                    out.push(Listener::Tap);
                }
                out
            }
            Transmitter::Attacker => self
                .attacker_hears
                .iter()
                .filter(|id| self.nodes.contains_key(id))
                .map(|&id| Listener::Node(id))
                .collect(),
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut problems = Vec::new();
        let gateways = self.nodes.values().filter(|p| p.kind == NodeKind::Gateway).count();
        match gateways {
            0 => problems.push(Diagnostic::new("topology.gateway", "no node has kind = gateway")),
            1 => {}
            n => problems.push(Diagnostic::new("topology.gateway", format!("{n} gateways declared, need one"))),
        }
        for (&id, profile) in &self.nodes {
            if !id.is_addressable() {
                problems.push(Diagnostic::new(format!("node {}", id.0), "id must be within 1..=232"));
            }
            if profile.node_id != id {
                problems.push(Diagnostic::new(format!("node {}", id.0), "profile id does not match its key"));
            }
            if profile.heartbeat_interval_ms == Some(0) {
                problems.push(Diagnostic::new(
                    format!("node {}.heartbeat_interval_ms", id.0),
                    "must be positive",
                ));
            }
        }
        for &(a, b) in &self.links {
            if a == b {
                problems.push(Diagnostic::new("radio.links", format!("self link {}-{}", a.0, b.0)));
            } else if !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
                problems.push(Diagnostic::new("radio.links", format!("link {}-{} names an undeclared node", a.0, b.0)));
            }
        }
        for id in &self.attacker_hears {
            if !self.nodes.contains_key(id) {
                problems.push(Diagnostic::new("radio.attacker_hears", format!("undeclared node {}", id.0)));
            }
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> Topology {
        let nodes = vec![
            NodeProfile::gateway(NodeId(1)),
            NodeProfile::device(NodeId(2)),
            NodeProfile::device(NodeId(3)),
            NodeProfile::device(NodeId(4)),
            NodeProfile::device(NodeId(9)),
        ];
        let mut topology = Topology::full_mesh(nodes);
        topology.set_links([(NodeId(2), NodeId(1)), (NodeId(1), NodeId(3)), (NodeId(1), NodeId(4))]);
        topology
    }

    #[test]
    fn gateway_fan_out() {
        let topology = star();
        let listeners = topology.listeners(Transmitter::Node(NodeId(1)));
        assert_eq!(
            listeners,
            [Listener::Node(NodeId(2)), Listener::Node(NodeId(3)), Listener::Node(NodeId(4)), Listener::Tap]
        );
    }

    #[test]
    fn isolated_node_reaches_nobody() {
        let mut topology = star();
        topology.attacker_hears.remove(&NodeId(9));
        assert!(topology.listeners(Transmitter::Node(NodeId(9))).is_empty());
    }

    #[test]
    fn symmetric_and_attacker_reach() {
        let mut topology = star();
        assert!(topology.in_range(NodeId(2), NodeId(1)) && topology.in_range(NodeId(1), NodeId(2)));
        topology.attacker_hears = BTreeSet::from([NodeId(1)]);
        assert_eq!(topology.listeners(Transmitter::Attacker), [Listener::Node(NodeId(1))]);
    }

    #[test]
    fn validation_messages() {
        let mut topology = star();
        assert!(topology.validate().is_empty());
        topology.set_links([(NodeId(1), NodeId(1)), (NodeId(1), NodeId(50))]);
        topology.nodes.remove(&NodeId(1));
        let fields: Vec<_> = topology.validate().into_iter().map(|d| d.field).collect();
        assert_eq!(fields, ["topology.gateway", "radio.links", "radio.links", "radio.attacker_hears"]);
    }
}
