//! Fill-reducing ordering: level-structure nested dissection with exact
//! minimum degree on the small leaf subgraphs.

use std::collections::VecDeque;

const LEAF: usize = 96;

/// Symmetric adjacency without self loops, in compressed form.
pub(crate) struct Graph {
    pub xadj: Vec<usize>,
    pub adj: Vec<usize>,
}

impl Graph {
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Graph {
        let mut xadj = Vec::with_capacity(lists.len() + 1);
        let mut adj = Vec::new();
        xadj.push(0);
        for l in lists {
            adj.extend(l);
            xadj.push(adj.len());
        }
        Graph { xadj, adj }
    }

    pub fn len(&self) -> usize {
        self.xadj.len() - 1
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }
}

/// Elimination order of the vertices of an undirected graph given by sorted
/// adjacency lists. `order[k]` is the vertex eliminated `k`-th.
pub fn nested_dissection(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let g = Graph::from_lists(adjacency.to_vec());
    order_graph(&g)
}

pub(crate) fn order_graph(g: &Graph) -> Vec<usize> {
    let n = g.len();
    let mut state = State {
        tag: vec![0; n],
        next_tag: 0,
        level: vec![usize::MAX; n],
        out: Vec::with_capacity(n),
    };
    let all: Vec<usize> = (0..n).collect();
    state.dissect(g, all);
    debug_assert_eq!(state.out.len(), n);
    state.out
}

struct State {
    tag: Vec<u32>,
    next_tag: u32,
    level: Vec<usize>,
    out: Vec<usize>,
}

impl State {
    fn fresh_tag(&mut self, nodes: &[usize]) -> u32 {
        self.next_tag += 1;
        for &v in nodes {
            self.tag[v] = self.next_tag;
        }
        self.next_tag
    }

    fn dissect(&mut self, g: &Graph, nodes: Vec<usize>) {
        let mut stack = vec![Task::Split(nodes)];
        while let Some(task) = stack.pop() {
            match task {
                Task::Emit(sep) => self.out.extend(sep),
                Task::Split(nodes) => {
                    if nodes.len() <= LEAF {
                        self.minimum_degree(g, &nodes);
                        continue;
                    }
                    let comps = self.components(g, &nodes);
                    if comps.len() > 1 {
                        // Later components are popped first; order among them is irrelevant.
                        stack.extend(comps.into_iter().map(Task::Split));
                        continue;
                    }
                    match self.bisect(g, &nodes) {
                        Some((a, b, sep)) => {
                            stack.push(Task::Emit(sep));
                            stack.push(Task::Split(b));
                            stack.push(Task::Split(a));
                        }
                        None => self.minimum_degree(g, &nodes),
                    }
                }
            }
        }
    }

    fn components(&mut self, g: &Graph, nodes: &[usize]) -> Vec<Vec<usize>> {
        let t = self.fresh_tag(nodes);
        let done = t + 1;
        self.next_tag += 1;
        let mut comps = Vec::new();
        for &s in nodes {
            if self.tag[s] != t {
                continue;
            }
            let mut comp = vec![s];
            self.tag[s] = done;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &w in g.neighbors(v) {
                    if self.tag[w] == t {
                        self.tag[w] = done;
                        comp.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// BFS levels from `root` restricted to vertices carrying tag `t`.
    fn levels(&mut self, g: &Graph, nodes: &[usize], root: usize, t: u32) -> Vec<Vec<usize>> {
        for &v in nodes {
            self.level[v] = usize::MAX;
        }
        let mut levels = vec![vec![root]];
        self.level[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let lv = self.level[v];
            for &w in g.neighbors(v) {
                if self.tag[w] == t && self.level[w] == usize::MAX {
                    self.level[w] = lv + 1;
                    if levels.len() == lv + 1 {
                        levels.push(Vec::new());
                    }
                    levels[lv + 1].push(w);
                    queue.push_back(w);
                }
            }
        }
        levels
    }

    fn bisect(&mut self, g: &Graph, nodes: &[usize]) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let t = self.fresh_tag(nodes);
        let degree = |v: usize, tag: &[u32]| g.neighbors(v).iter().filter(|&&w| tag[w] == t).count();
        let mut root = *nodes.iter().min_by_key(|&&v| (degree(v, &self.tag), v))?;
        let mut depth = self.levels(g, nodes, root, t).len();
        for _ in 0..4 {
            let last: Vec<usize> = nodes.iter().copied().filter(|&v| self.level[v] == depth - 1).collect();
            let cand = *last.iter().min_by_key(|&&v| (degree(v, &self.tag), v))?;
            let trial = self.levels(g, nodes, cand, t).len();
            if trial <= depth {
                break;
            }
            root = cand;
            depth = trial;
        }
        let levels = self.levels(g, nodes, root, t);
        if levels.len() < 3 {
            return None;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut m = 1;
        for (i, l) in levels.iter().enumerate() {
            if acc + l.len() > half {
                m = i;
                break;
            }
            acc += l.len();
        }
        let m = m.clamp(1, levels.len() - 2);
        let a: Vec<usize> = levels[..m].concat();
        let b: Vec<usize> = levels[m + 1..].concat();
        // Separator vertices with no neighbor beyond the separator move to `a`.
        let mut a = a;
        let mut sep = Vec::new();
        for &v in &levels[m] {
            if g.neighbors(v).iter().any(|&w| self.tag[w] == t && self.level[w] == m + 1) {
                sep.push(v);
            } else {
                a.push(v);
            }
        }
        Some((a, b, sep))
    }

    /// Exact minimum degree on the subgraph induced by `nodes`.
    fn minimum_degree(&mut self, g: &Graph, nodes: &[usize]) {
        let k = nodes.len();
        if k == 0 {
            return;
        }
        let t = self.fresh_tag(nodes);
        let mut local = std::collections::HashMap::with_capacity(k);
        for (i, &v) in nodes.iter().enumerate() {
            local.insert(v, i);
        }
        let mut adj = vec![false; k * k];
        for (i, &v) in nodes.iter().enumerate() {
            for &w in g.neighbors(v) {
                if self.tag[w] == t {
                    let j = local[&w];
                    adj[i * k + j] = true;
                    adj[j * k + i] = true;
                }
            }
        }
        let mut alive = vec![true; k];
        let mut deg: Vec<usize> = (0..k).map(|i| (0..k).filter(|&j| adj[i * k + j]).count()).collect();
        for _ in 0..k {
            let p = (0..k)
                .filter(|&i| alive[i])
                .min_by_key(|&i| (deg[i], nodes[i]))
                .expect("a vertex remains");
            alive[p] = false;
            self.out.push(nodes[p]);
            let nb: Vec<usize> = (0..k).filter(|&j| alive[j] && adj[p * k + j]).collect();
            for &a in &nb {
                for &b in &nb {
                    if a != b && !adj[a * k + b] {
                        adj[a * k + b] = true;
                        deg[a] += 1;
                    }
                }
                deg[a] -= 1;
            }
        }
    }
}

enum Task {
    Split(Vec<usize>),
    Emit(Vec<usize>),
}
