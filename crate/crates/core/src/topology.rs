//! Connectivity of the in-service branch graph.

use std::collections::BTreeSet;

use crate::model::NetworkModel;

/// Undirected multigraph over bus positions.
pub struct Graph {
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Graph of the branches that are in service and not listed in `out`
    /// (branch positions).
    pub fn of_model(model: &NetworkModel, out: &[usize]) -> Graph {
        let mut adj = vec![Vec::new(); model.buses.len()];
        for (k, br) in model.branches.iter().enumerate() {
            if !br.in_service || out.contains(&k) {
                continue;
            }
            let f = model.bus_index(br.from_bus).unwrap();
            let t = model.bus_index(br.to_bus).unwrap();
            adj[f].push((t, k));
            adj[t].push((f, k));
        }
        Graph { adj }
    }

    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Graph {
        let mut adj = vec![Vec::new(); nodes];
        for (k, &(a, b)) in edges.iter().enumerate() {
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        Graph { adj }
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.adj.len();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            label[s] = id;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        members.push(w);
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Edge keys whose removal increases the number of components.
    /// Parallel edges share a cycle and are never bridges.
    pub fn bridges(&self) -> BTreeSet<usize> {
        let n = self.adj.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut found = BTreeSet::new();
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, edge used to enter it, next adjacency position)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.last_mut() {
                let (v, via, pos) = *top;
                if pos < self.adj[v].len() {
                    top.2 += 1;
                    let (w, e) = self.adj[v][pos];
                    if e == via {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, e, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(parent, _, _)) = stack.last() {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            found.insert(via);
                        }
                    }
                }
            }
        }
        found
    }
}

/// Islands of the in-service network with the branches at positions `out`
/// additionally removed. Each island lists bus positions.
pub fn islands(model: &NetworkModel, out: &[usize]) -> Vec<Vec<usize>> {
    Graph::of_model(model, out).components()
}

/// Ids of branches whose outage splits their island.
pub fn find_radial_branches(model: &NetworkModel) -> BTreeSet<usize> {
    Graph::of_model(model, &[]).bridges().into_iter().map(|k| model.branches[k].id).collect()
}

/// Bus positions connected to `root` after removing the branches at `out`.
pub fn reachable(model: &NetworkModel, out: &[usize], root: usize) -> Vec<bool> {
    let g = Graph::of_model(model, out);
    let mut seen = vec![false; model.buses.len()];
    seen[root] = true;
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &(w, _) in &g.adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}
