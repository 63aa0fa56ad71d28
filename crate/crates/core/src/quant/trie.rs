use super::SemanticIdTable;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    /// Sorted by code.
    children: Vec<(u32, usize)>,
    count: usize,
    depth: usize,
    parent: usize,
    item: Option<usize>,
}

/// Prefix trie over the code sequences of a [`SemanticIdTable`].
///
/// Node 0 is the root. Every node records how many items lie beneath it; leaves sit at
/// depth L and point back to the item's row in the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTrie {
    nodes: Vec<Node>,
    depth: usize,
}

pub type NodeId = usize;

impl PrefixTrie {
    pub const ROOT: NodeId = 0;

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.item.is_some()).count()
    }

    pub fn children(&self, node: NodeId) -> &[(u32, NodeId)] {
        &self.nodes[node].children
    }

    pub fn child(&self, node: NodeId, code: u32) -> Option<NodeId> {
        let kids = &self.nodes[node].children;
        kids.binary_search_by_key(&code, |c| c.0).ok().map(|i| kids[i].1)
    }

    pub fn count(&self, node: NodeId) -> usize {
        self.nodes[node].count
    }

    pub fn node_depth(&self, node: NodeId) -> usize {
        self.nodes[node].depth
    }

    /// Table row of the item at a leaf.
    pub fn item(&self, node: NodeId) -> Option<usize> {
        self.nodes[node].item
    }

    pub fn walk(&self, prefix: &[u32]) -> Option<NodeId> {
        prefix.iter().try_fold(Self::ROOT, |n, &c| self.child(n, c))
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        (node != Self::ROOT).then(|| self.nodes[node].parent)
    }

    /// Every non-root node as `(depth, parent, node)`, sorted.
    pub fn edges(&self) -> Vec<(usize, NodeId, NodeId)> {
        let mut out: Vec<_> = (1..self.nodes.len())
            .map(|n| (self.nodes[n].depth, self.nodes[n].parent, n))
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn build_trie(ids: &SemanticIdTable) -> PrefixTrie {
    let mut nodes = vec![Node {
        children: Vec::new(),
        count: 0,
        depth: 0,
        parent: 0,
        item: None,
    }];
    for (row, (_, codes)) in ids.iter().enumerate() {
        let mut cur = 0;
        nodes[0].count += 1;
        for (depth, &code) in codes.iter().enumerate() {
            let next = match nodes[cur].children.binary_search_by_key(&code, |c| c.0) {
                Ok(i) => nodes[cur].children[i].1,
                Err(i) => {
                    let id = nodes.len();
                    nodes.push(Node {
                        children: Vec::new(),
                        count: 0,
                        depth: depth + 1,
                        parent: cur,
                        item: None,
                    });
                    nodes[cur].children.insert(i, (code, id));
                    id
                }
            };
            nodes[next].count += 1;
            cur = next;
        }
        nodes[cur].item = Some(row);
    }
    PrefixTrie {
        nodes,
        depth: ids.layers(),
    }
}
