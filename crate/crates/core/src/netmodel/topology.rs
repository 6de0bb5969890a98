use std::collections::VecDeque;

use super::case::NetworkCase;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("graph not connected: unreachable nodes {0:?}")]
    Disconnected(Vec<usize>),
    #[error("graph not radial: branch {branch} closes a loop")]
    NotRadial { branch: usize },
}

/// Radial tree rooted at the slack node, in dense node indices.
///
/// Branch `k` always runs from `up[k]` (slack side) to `down[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_nodes: usize,
    pub slack: usize,
    pub up: Vec<usize>,
    pub down: Vec<usize>,
    /// Whether branch `k` is stored reversed relative to the case file.
    pub reversed: Vec<bool>,
    /// Branch feeding each node; `None` at the slack.
    pub parent_branch: Vec<Option<usize>>,
    /// Branches leaving each node downstream.
    pub children: Vec<Vec<usize>>,
    /// Nodes in breadth-first order from the slack.
    pub order: Vec<usize>,
}

impl Topology {
    pub fn build(case: &NetworkCase) -> Result<Self, TopologyError> {
        let n = case.nodes.len();
        let idx = |id: usize| case.node_index(id).ok_or(TopologyError::UnknownNode(id));
        let slack = idx(case.slack.node)?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in case.branches.iter().enumerate() {
            let (a, b) = (idx(br.from)?, idx(br.to)?);
            adj[a].push((k, b));
            adj[b].push((k, a));
        }

        let nb = case.branches.len();
        let mut up = vec![usize::MAX; nb];
        let mut down = vec![usize::MAX; nb];
        let mut reversed = vec![false; nb];
        let mut parent_branch = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &(k, j) in &adj[i] {
                if parent_branch[i] == Some(k) {
                    continue;
                }
                if seen[j] {
                    return Err(TopologyError::NotRadial { branch: k });
                }
                seen[j] = true;
                up[k] = i;
                down[k] = j;
                reversed[k] = case.branches[k].from != case.nodes[i];
                parent_branch[j] = Some(k);
                children[i].push(k);
                queue.push_back(j);
            }
        }
        let unreachable: Vec<usize> = (0..n).filter(|&i| !seen[i]).map(|i| case.nodes[i]).collect();
        if !unreachable.is_empty() {
            // a loop among unreachable nodes is reported as disconnection first
            return Err(TopologyError::Disconnected(unreachable));
        }
        Ok(Topology {
            n_nodes: n,
            slack,
            up,
            down,
            reversed,
            parent_branch,
            children,
            order,
        })
    }

    pub fn n_branches(&self) -> usize {
        self.up.len()
    }

    /// Non-slack nodes in breadth-first order.
    pub fn load_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied().filter(move |&i| i != self.slack)
    }
}

#[cfg(test)]
mod tests {
    use crate::netmodel::builtin;

    #[test]
    fn feeder_is_a_chain() {
        let case = builtin("feeder5").unwrap();
        let t = case.topology().unwrap();
        assert_eq!(t.order, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.up, vec![0, 1, 2, 3]);
        assert_eq!(t.down, vec![1, 2, 3, 4]);
        assert!(t.parent_branch[0].is_none());
    }

    #[test]
    fn reversed_branch_is_reoriented() {
        let mut case = builtin("feeder5").unwrap();
        let br = &mut case.branches[2];
        std::mem::swap(&mut br.from, &mut br.to);
        let t = case.topology().unwrap();
        assert_eq!((t.up[2], t.down[2]), (2, 3));
        assert!(t.reversed[2]);
    }

    #[test]
    fn ieee33_tree() {
        let case = builtin("ieee33_bipolar").unwrap();
        let t = case.topology().unwrap();
        assert_eq!(t.n_nodes, 33);
        assert_eq!(t.n_branches(), 32);
        assert_eq!(t.order.len(), 33);
    }
}
