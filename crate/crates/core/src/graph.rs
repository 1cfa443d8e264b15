//! Conversation graphs for threaded discussions.
//!
//! A conversation is a DAG with two typed edge kinds: `par` edges run
//! from a parent utterance to each direct reply, and `pre` edges run
//! between same-parent siblings in chronological order. Every vertex
//! has at most one incoming edge of each kind, so ancestor chains and
//! preceding-peer chains are unique. Queries are pure and the graph is
//! immutable once built.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single post or comment in a threaded conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub conversation_id: String,
    pub community: String,
    /// Seconds since the epoch; never negative.
    pub timestamp: i64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_hash: Option<String>,
    /// Present on initial posts only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// One line of a corpus dump before graph construction.
///
/// `parent_id` is `None` for the initial post. The `subreddit` key maps
/// onto [`Utterance::community`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawUtterance {
    pub id: String,
    pub conversation_id: String,
    pub subreddit: String,
    pub timestamp: i64,
    pub text: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// Edge type in a conversation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Parent-to-reply edge.
    Par,
    /// Chronological edge between adjacent same-parent siblings.
    Pre,
}

/// How to treat replies whose parent is absent from the record set
/// (typically deleted upstream).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrphanPolicy {
    /// Fail construction, naming the missing parent.
    #[default]
    Reject,
    /// Attach the orphan directly under the conversation root and flag it.
    ReattachToRoot,
}

#[derive(Debug, Clone)]
struct Node {
    utterance: Utterance,
    parent: Option<String>,
    prev_peer: Option<String>,
    children: Vec<String>,
    reattached: bool,
}

/// Immutable DAG over the utterances of one conversation.
#[derive(Debug, Clone)]
pub struct ConversationGraph {
    conversation_id: String,
    root_id: String,
    nodes: BTreeMap<String, Node>,
}

/// Browsing context for one utterance: what a reader is assumed to have
/// seen before reading it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow<'a> {
    /// The utterance whose browsing context this is.
    pub target: &'a Utterance,
    /// Root of the conversation (may also appear in `ancestors`).
    pub initial_post: &'a Utterance,
    /// Up to `k_anc` nearest ancestors, root-side first.
    pub ancestors: Vec<&'a Utterance>,
    /// Up to `k_peer` nearest earlier same-parent siblings, oldest first.
    pub prior_peers: Vec<&'a Utterance>,
    pub k_anc: usize,
    pub k_peer: usize,
}

/// Size and shape digest of a built graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub conversation_id: String,
    pub vertex_count: usize,
    pub par_edge_count: usize,
    pub pre_edge_count: usize,
    /// Longest root-to-leaf path measured in `par` edges.
    pub max_depth: usize,
    /// Ids reattached under the root by [`OrphanPolicy::ReattachToRoot`].
    pub reattached: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed corpus record: {message}")]
    Parse { line: usize, message: String },
    #[error("utterance {0:?} appears more than once")]
    DuplicateId(String),
    #[error("utterance with empty id")]
    EmptyId,
    #[error("utterance {0:?} has empty text")]
    EmptyText(String),
    #[error("utterance {id:?} has negative timestamp {timestamp}")]
    NegativeTimestamp { id: String, timestamp: i64 },
    #[error("utterance {id:?} belongs to conversation {found:?}, expected {expected:?}")]
    MixedConversations {
        id: String,
        found: String,
        expected: String,
    },
    #[error("utterance {child:?} replies to missing parent {parent:?}")]
    MissingParent { child: String, parent: String },
    #[error("conversation {0:?} has no root utterance")]
    NoRoot(String),
    #[error("conversation {conversation:?} has multiple roots, e.g. {first:?} and {second:?}")]
    MultipleRoots {
        conversation: String,
        first: String,
        second: String,
    },
    #[error("reply cycle detected through utterance {0:?}")]
    Cycle(String),
    #[error("unknown utterance {0:?}")]
    UnknownUtterance(String),
    #[error("no records supplied")]
    Empty,
}

impl ConversationGraph {
    /// Builds the graph for a single conversation.
    ///
    /// Records may arrive in any order; the result is identical for any
    /// permutation of the same records. Sibling (`pre`) edges are
    /// derived by sorting each parent's replies by `(timestamp, id)`.
    pub fn build(records: &[RawUtterance], policy: OrphanPolicy) -> Result<Self, GraphError> {
        if records.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut sorted: Vec<&RawUtterance> = records.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));

        let conversation_id = sorted[0].conversation_id.clone();
        for pair in sorted.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GraphError::DuplicateId(pair[0].id.clone()));
            }
        }
        let mut root_id: Option<String> = None;
        for rec in &sorted {
            if rec.id.is_empty() {
                return Err(GraphError::EmptyId);
            }
            if rec.text.is_empty() {
                return Err(GraphError::EmptyText(rec.id.clone()));
            }
            if rec.timestamp < 0 {
                return Err(GraphError::NegativeTimestamp {
                    id: rec.id.clone(),
                    timestamp: rec.timestamp,
                });
            }
            if rec.conversation_id != conversation_id {
                return Err(GraphError::MixedConversations {
                    id: rec.id.clone(),
                    found: rec.conversation_id.clone(),
                    expected: conversation_id.clone(),
                });
            }
            if rec.parent_id.is_none() {
                match &root_id {
                    None => root_id = Some(rec.id.clone()),
                    Some(first) => {
                        return Err(GraphError::MultipleRoots {
                            conversation: conversation_id,
                            first: first.clone(),
                            second: rec.id.clone(),
                        })
                    }
                }
            }
        }
        let root_id = root_id.ok_or_else(|| GraphError::NoRoot(conversation_id.clone()))?;

        let mut nodes: BTreeMap<String, Node> = BTreeMap::new();
        for rec in &sorted {
            nodes.insert(
                rec.id.clone(),
                Node {
                    utterance: Utterance {
                        id: rec.id.clone(),
                        conversation_id: rec.conversation_id.clone(),
                        community: rec.subreddit.clone(),
                        timestamp: rec.timestamp,
                        text: rec.text.clone(),
                        author_hash: rec.author_hash.clone(),
                        title: rec.title.clone(),
                    },
                    parent: rec.parent_id.clone(),
                    prev_peer: None,
                    children: Vec::new(),
                    reattached: false,
                },
            );
        }

        // Resolve parents that are absent from the record set.
        let ids: Vec<String> = nodes.keys().cloned().collect();
        for id in &ids {
            let parent = nodes[id].parent.clone();
            if let Some(parent) = parent {
                if !nodes.contains_key(&parent) {
                    match policy {
                        OrphanPolicy::Reject => {
                            return Err(GraphError::MissingParent {
                                child: id.clone(),
                                parent,
                            })
                        }
                        OrphanPolicy::ReattachToRoot => {
                            let node = nodes.get_mut(id).expect("id came from the map");
                            node.parent = Some(root_id.clone());
                            node.reattached = true;
                        }
                    }
                }
            }
        }

        // Every non-root must reach the root through parent links; a
        // vertex that cannot lies on or below a reply cycle.
        let mut state: BTreeMap<String, u8> = ids.iter().map(|id| (id.clone(), 0)).collect();
        for id in &ids {
            if state[id] != 0 {
                continue;
            }
            let mut path = vec![id.clone()];
            state.insert(id.clone(), 1);
            loop {
                let current = path.last().expect("path is never empty").clone();
                match nodes[&current].parent.clone() {
                    None => break,
                    Some(parent) => match state[&parent] {
                        1 => return Err(GraphError::Cycle(parent)),
                        2 => break,
                        _ => {
                            state.insert(parent.clone(), 1);
                            path.push(parent);
                        }
                    },
                }
            }
            for visited in path {
                state.insert(visited, 2);
            }
        }

        // Child lists sorted by (timestamp, id) define sibling order;
        // adjacent siblings are linked with pre edges.
        let mut children_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in &ids {
            if let Some(parent) = nodes[id].parent.clone() {
                children_of.entry(parent).or_default().push(id.clone());
            }
        }
        for (parent, mut children) in children_of {
            children.sort_by(|a, b| {
                let ka = (nodes[a].utterance.timestamp, a.as_str());
                let kb = (nodes[b].utterance.timestamp, b.as_str());
                ka.cmp(&kb)
            });
            for pair in children.windows(2) {
                let later = nodes.get_mut(&pair[1]).expect("id came from the map");
                later.prev_peer = Some(pair[0].clone());
            }
            nodes
                .get_mut(&parent)
                .expect("parents were verified present")
                .children = children;
        }

        Ok(ConversationGraph {
            conversation_id,
            root_id,
            nodes,
        })
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation_id
    }

    /// The initial post of the conversation.
    pub fn root(&self) -> &Utterance {
        &self.nodes[&self.root_id].utterance
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&Utterance, GraphError> {
        self.nodes
            .get(id)
            .map(|n| &n.utterance)
            .ok_or_else(|| GraphError::UnknownUtterance(id.to_string()))
    }

    /// Iterates utterances in id order.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.nodes.values().map(|n| &n.utterance)
    }

    /// Direct replies to `id` in sibling order.
    pub fn replies(&self, id: &str) -> Result<Vec<&Utterance>, GraphError> {
        let node = self
            .nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownUtterance(id.to_string()))?;
        Ok(node
            .children
            .iter()
            .map(|c| &self.nodes[c].utterance)
            .collect())
    }

    /// All typed edges, in (from, to) id order per kind.
    pub fn edges(&self) -> Vec<(String, String, EdgeKind)> {
        let mut edges = Vec::new();
        for (id, node) in &self.nodes {
            if let Some(parent) = &node.parent {
                edges.push((parent.clone(), id.clone(), EdgeKind::Par));
            }
            if let Some(prev) = &node.prev_peer {
                edges.push((prev.clone(), id.clone(), EdgeKind::Pre));
            }
        }
        edges.sort();
        edges
    }

    /// Ids reattached under the root, in id order.
    pub fn reattached(&self) -> Vec<&str> {
        self.nodes
            .values()
            .filter(|n| n.reattached)
            .map(|n| n.utterance.id.as_str())
            .collect()
    }

    /// Chain of ancestors of `id`, starting at the root and ending at
    /// the direct parent. The root itself has no ancestors.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&Utterance>, GraphError> {
        let mut node = self
            .nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownUtterance(id.to_string()))?;
        let mut chain = Vec::new();
        while let Some(parent) = &node.parent {
            node = &self.nodes[parent];
            chain.push(&node.utterance);
        }
        chain.reverse();
        Ok(chain)
    }

    /// Same-parent siblings that precede `id` in `(timestamp, id)`
    /// order, oldest first.
    pub fn preceding_peers(&self, id: &str) -> Result<Vec<&Utterance>, GraphError> {
        let mut node = self
            .nodes
            .get(id)
            .ok_or_else(|| GraphError::UnknownUtterance(id.to_string()))?;
        let mut chain = Vec::new();
        while let Some(prev) = &node.prev_peer {
            node = &self.nodes[prev];
            chain.push(&node.utterance);
        }
        chain.reverse();
        Ok(chain)
    }

    /// Browsing context for `id`: the initial post, the `k_anc` nearest
    /// ancestors, and the `k_peer` nearest preceding peers. Truncation
    /// drops the entries furthest from `id`.
    pub fn select_context(
        &self,
        id: &str,
        k_anc: usize,
        k_peer: usize,
    ) -> Result<ContextWindow<'_>, GraphError> {
        let mut ancestors = self.ancestors(id)?;
        let mut peers = self.preceding_peers(id)?;
        let initial_post = ancestors.first().copied().unwrap_or(self.get(id)?);
        fn keep_last<T>(list: &mut Vec<T>, k: usize) {
            if list.len() > k {
                list.drain(..list.len() - k);
            }
        }
        keep_last(&mut ancestors, k_anc);
        keep_last(&mut peers, k_peer);
        Ok(ContextWindow {
            target: self.get(id)?,
            initial_post,
            ancestors,
            prior_peers: peers,
            k_anc,
            k_peer,
        })
    }

    pub fn summary(&self) -> GraphSummary {
        let mut par = 0;
        let mut pre = 0;
        for node in self.nodes.values() {
            par += usize::from(node.parent.is_some());
            pre += usize::from(node.prev_peer.is_some());
        }
        let max_depth = self
            .nodes
            .keys()
            .map(|id| {
                self.ancestors(id)
                    .expect("iterating known ids")
                    .len()
            })
            .max()
            .unwrap_or(0);
        GraphSummary {
            conversation_id: self.conversation_id.clone(),
            vertex_count: self.nodes.len(),
            par_edge_count: par,
            pre_edge_count: pre,
            max_depth,
            reattached: self.reattached().iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Parses a JSONL corpus dump, reporting the 1-based line number of the
/// first malformed record.
pub fn read_corpus_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawUtterance>, GraphError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GraphError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawUtterance =
            serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Groups corpus records by conversation id, preserving input order
/// within each group.
pub fn group_by_conversation(records: Vec<RawUtterance>) -> BTreeMap<String, Vec<RawUtterance>> {
    let mut groups: BTreeMap<String, Vec<RawUtterance>> = BTreeMap::new();
    for record in records {
        groups
            .entry(record.conversation_id.clone())
            .or_default()
            .push(record);
    }
    groups
}
