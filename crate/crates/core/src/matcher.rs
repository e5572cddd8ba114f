//! Layer 3: minimum-weight perfect matching of one component.
//!
//! Nodes are numbered events first (in problem order), then one virtual
//! boundary node per boundary-adjacent event (by owner), then a spare
//! virtual node when needed for parity. Virtual nodes pair with each other
//! at zero cost. Among all minimum-weight matchings the one with the
//! lexicographically smallest sorted pair list is returned.

use crate::blossom::{max_weight_matching, Solution};
use crate::error::{Error, Result};
use crate::matchprep::MatchProblem;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchNode {
    Event(usize),
    /// Boundary node owned by the given event.
    Virtual(usize),
    Spare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Sorted, each pair with its smaller node first.
    pub pairs: Vec<(MatchNode, MatchNode)>,
    pub total_weight: u64,
}

struct Layout {
    k: usize,
    owners: Vec<usize>,
    spare: bool,
    edges: Vec<(usize, usize, i64)>,
    adj: Vec<Vec<(usize, i64)>>,
}

impl Layout {
    fn new(p: &MatchProblem) -> Result<Self> {
        let k = p.events.len();
        let owners: Vec<usize> = (0..k).filter(|&e| p.boundary[e].is_some()).collect();
        let b = owners.len();
        if b == 0 && k % 2 == 1 {
            return Err(Error::Unmatchable { events: k });
        }
        let spare = (k + b) % 2 == 1;
        let mut edges: Vec<(usize, usize, i64)> = p.edges.iter().map(|&(u, v, w)| (u, v, w as i64)).collect();
        for (r, &o) in owners.iter().enumerate() {
            edges.push((o, k + r, p.boundary[o].unwrap() as i64));
        }
        for r in 0..b {
            for s in r + 1..b {
                edges.push((k + r, k + s, 0));
            }
            if spare {
                edges.push((k + r, k + b, 0));
            }
        }
        let n = k + b + spare as usize;
        let mut adj = vec![Vec::new(); n];
        for &(u, v, w) in &edges {
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(Self { k, owners, spare, edges, adj })
    }

    fn len(&self) -> usize {
        self.k + self.owners.len() + self.spare as usize
    }

    fn node(&self, id: usize) -> MatchNode {
        if id < self.k {
            MatchNode::Event(id)
        } else if id < self.k + self.owners.len() {
            MatchNode::Virtual(self.owners[id - self.k])
        } else {
            MatchNode::Spare
        }
    }

    fn weight(&self, u: usize, v: usize) -> Option<i64> {
        self.adj[u].iter().find(|&&(x, _)| x == v).map(|&(_, w)| w)
    }

    /// Minimum-weight perfect matching on the active nodes.
    fn solve(&self, active: &[bool]) -> Option<(Vec<usize>, i64, Solution, Vec<usize>)> {
        let ids: Vec<usize> = (0..self.len()).filter(|&v| active[v]).collect();
        let mut local = vec![usize::MAX; self.len()];
        for (l, &g) in ids.iter().enumerate() {
            local[g] = l;
        }
        let sub: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(u, v, _)| active[u] && active[v])
            .map(|&(u, v, w)| (local[u], local[v], w))
            .collect();
        let c = sub.iter().map(|e| e.2).max().unwrap_or(0) + 1;
        let flipped: Vec<_> = sub.iter().map(|&(u, v, w)| (u, v, c - w)).collect();
        let sol = max_weight_matching(ids.len(), &flipped, true);
        let mut mate = vec![usize::MAX; self.len()];
        let mut total = 0;
        for (l, m) in sol.mate.iter().enumerate() {
            let m = (*m)?;
            mate[ids[l]] = ids[m];
            if l < m {
                total += self.weight(ids[l], ids[m]).unwrap();
            }
        }
        Some((mate, total, sol, local))
    }

    fn finish(&self, mate: &[usize]) -> Matching {
        let mut pairs = Vec::with_capacity(mate.len() / 2);
        let mut total = 0u64;
        for (u, &v) in mate.iter().enumerate() {
            if u < v {
                pairs.push((self.node(u), self.node(v)));
                total += self.weight(u, v).unwrap() as u64;
            }
        }
        pairs.sort_unstable();
        Matching { pairs, total_weight: total }
    }
}

/// Exact minimum-weight perfect matching with lexicographic tie-breaking.
pub fn minimum_weight_matching(problem: &MatchProblem) -> Result<Matching> {
    let layout = Layout::new(problem)?;
    let n = layout.len();
    if n == 0 {
        return Ok(Matching { pairs: Vec::new(), total_weight: 0 });
    }
    let unmatchable = || Error::Unmatchable { events: layout.k };
    let all = vec![true; n];
    let (mut mate, w_star, sol, _) = layout.solve(&all).ok_or_else(unmatchable)?;
    let c = layout.edges.iter().map(|e| e.2).max().unwrap_or(0) + 1;

    // Fix partners in node order. An edge with positive reduced cost under
    // the optimal duals is in no minimum matching, so only tight edges to a
    // smaller node than the current partner are worth testing.
    let mut fixed = vec![false; n];
    let mut fixed_weight = 0;
    for u in 0..layout.k {
        if fixed[u] {
            continue;
        }
        for &(v, w) in &layout.adj[u] {
            if v >= mate[u] {
                break;
            }
            if fixed[v] || sol.slack(u, v, c - w) != 0 {
                continue;
            }
            let mut active: Vec<bool> = fixed.iter().map(|f| !f).collect();
            active[u] = false;
            active[v] = false;
            if let Some((m2, w2, _, _)) = layout.solve(&active) {
                if fixed_weight + w + w2 == w_star {
                    for (x, &y) in m2.iter().enumerate() {
                        if active[x] {
                            mate[x] = y;
                        }
                    }
                    mate[u] = v;
                    mate[v] = u;
                    break;
                }
            }
        }
        let v = mate[u];
        fixed[u] = true;
        fixed[v] = true;
        fixed_weight += layout.weight(u, v).unwrap();
    }
    // Only virtual nodes remain; all pairings among them cost nothing.
    let rest: Vec<usize> = (layout.k..n).filter(|&v| !fixed[v]).collect();
    for pair in rest.chunks(2) {
        mate[pair[0]] = pair[1];
        mate[pair[1]] = pair[0];
    }
    Ok(layout.finish(&mate))
}

/// Largest event count accepted by [`brute_force_matching`].
pub const BRUTE_FORCE_MAX: usize = 12;

/// Exhaustive oracle: every assignment of each event to another event or to
/// its boundary node, leftover boundary nodes paired in order.
pub fn brute_force_matching(problem: &MatchProblem) -> Result<Matching> {
    let k = problem.events.len();
    if k > BRUTE_FORCE_MAX {
        return Err(Error::TooManyNodes { n: k, max: BRUTE_FORCE_MAX });
    }
    let layout = Layout::new(problem)?;
    let mut w = vec![vec![None; k]; k];
    for &(u, v, x) in &problem.edges {
        w[u][v] = Some(x as u64);
        w[v][u] = Some(x as u64);
    }
    struct Search<'a> {
        k: usize,
        w: &'a [Vec<Option<u64>>],
        boundary: &'a [Option<u32>],
        partner: Vec<usize>,
        best: Option<(u64, Vec<usize>)>,
    }
    impl Search<'_> {
        // Options are tried in increasing partner order (the boundary node
        // last), so the first optimum reached is the lexicographic minimum.
        fn go(&mut self, weight: u64) {
            if self.best.as_ref().is_some_and(|(b, _)| weight >= *b) {
                return;
            }
            let Some(u) = (0..self.k).find(|&u| self.partner[u] == usize::MAX) else {
                self.best = Some((weight, self.partner.clone()));
                return;
            };
            for v in u + 1..self.k {
                if self.partner[v] != usize::MAX {
                    continue;
                }
                if let Some(x) = self.w[u][v] {
                    self.partner[u] = v;
                    self.partner[v] = u;
                    self.go(weight + x);
                    self.partner[v] = usize::MAX;
                }
            }
            if let Some(b) = self.boundary[u] {
                self.partner[u] = self.k + u;
                self.go(weight + b as u64);
            }
            self.partner[u] = usize::MAX;
        }
    }
    let mut s = Search { k, w: &w, boundary: &problem.boundary, partner: vec![usize::MAX; k], best: None };
    s.go(0);
    let (_, partner) = s.best.ok_or(Error::Unmatchable { events: k })?;

    let n = layout.len();
    let mut mate = vec![usize::MAX; n];
    let vid = |owner: usize| k + layout.owners.binary_search(&owner).unwrap();
    for u in 0..k {
        let p = partner[u];
        let v = if p >= k { vid(p - k) } else { p };
        mate[u] = v;
        mate[v] = u;
    }
    let rest: Vec<usize> = (k..n).filter(|&v| mate[v] == usize::MAX).collect();
    for pair in rest.chunks(2) {
        mate[pair[0]] = pair[1];
        mate[pair[1]] = pair[0];
    }
    Ok(layout.finish(&mate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{l1, CellCoord, LatticeDims};
    use crate::matchprep::{build_bounded_graph, connected_components};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn interior_problem(events: &[(i32, i32, i32)], m_e: u32) -> MatchProblem {
        let d = LatticeDims::cube(200).unwrap();
        let cells: Vec<_> = events.iter().map(|&(i, j, t)| CellCoord::primal(i + 100, j + 100, t + 100)).collect();
        let g = build_bounded_graph(&d, &cells, m_e).unwrap();
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 1);
        g.problem(&comps[0])
    }

    fn ev(pairs: &[(usize, usize)]) -> Vec<(MatchNode, MatchNode)> {
        pairs.iter().map(|&(a, b)| (MatchNode::Event(a), MatchNode::Event(b))).collect()
    }

    #[test]
    fn adjacent_pair() {
        let m = minimum_weight_matching(&interior_problem(&[(0, 0, 0), (0, 0, 1)], 4)).unwrap();
        assert_eq!(m.pairs, ev(&[(0, 1)]));
        assert_eq!(m.total_weight, 1);
    }

    #[test]
    fn collinear_four() {
        let p = interior_problem(&[(0, 0, 0), (0, 0, 2), (0, 0, 3), (0, 0, 5)], 10);
        let m = minimum_weight_matching(&p).unwrap();
        assert_eq!((m.pairs.clone(), m.total_weight), (ev(&[(0, 1), (2, 3)]), 4));
        assert_eq!(brute_force_matching(&p).unwrap(), m);
    }

    #[test]
    fn greedy_trap() {
        let p = interior_problem(&[(0, 0, 0), (0, 0, 2), (0, 0, 3), (0, 0, 6)], 10);
        let m = minimum_weight_matching(&p).unwrap();
        assert_eq!((m.pairs.clone(), m.total_weight), (ev(&[(0, 1), (2, 3)]), 5));
    }

    #[test]
    fn single_event_goes_to_boundary() {
        let d = LatticeDims::cube(20).unwrap();
        let g = build_bounded_graph(&d, &[CellCoord::primal(1, 10, 10)], 4).unwrap();
        let p = g.problem(&connected_components(&g)[0]);
        let m = minimum_weight_matching(&p).unwrap();
        assert_eq!(m.pairs, vec![(MatchNode::Event(0), MatchNode::Virtual(0))]);
        assert_eq!(m.total_weight, 2);
        assert_eq!(brute_force_matching(&p).unwrap(), m);
    }

    #[test]
    fn odd_without_boundary_is_unmatchable() {
        let p = interior_problem(&[(0, 0, 0), (0, 0, 1), (0, 0, 2)], 4);
        assert_eq!(minimum_weight_matching(&p), Err(Error::Unmatchable { events: 3 }));
        assert_eq!(brute_force_matching(&p), Err(Error::Unmatchable { events: 3 }));
        let empty = MatchProblem { events: vec![], edges: vec![], boundary: vec![] };
        assert_eq!(minimum_weight_matching(&empty).unwrap().pairs, vec![]);
    }

    #[test]
    fn brute_force_limit() {
        let cells: Vec<_> = (0..13).map(|k| (k, 0, 0)).collect();
        let p = interior_problem(&cells, 1);
        assert_eq!(brute_force_matching(&p), Err(Error::TooManyNodes { n: 13, max: 12 }));
    }

    #[test]
    fn spare_node_and_virtual_pairs() {
        let d = LatticeDims::cube(10).unwrap();
        // two events near the same face, far apart from each other
        let cells = [CellCoord::primal(0, 2, 5), CellCoord::primal(0, 7, 5), CellCoord::primal(1, 2, 5)];
        let g = build_bounded_graph(&d, &cells, 2).unwrap();
        for c in connected_components(&g) {
            let p = g.problem(&c);
            let m = minimum_weight_matching(&p).unwrap();
            assert_eq!(m, brute_force_matching(&p).unwrap());
            let real = p.events.len() + p.boundary.iter().flatten().count();
            assert_eq!(m.pairs.len() * 2, real + real % 2);
        }
    }

    /// Random component of `k` events in an `edge`-sized lattice.
    pub(crate) fn random_problem(rng: &mut impl Rng, k: usize, edge: i32, m_e: u32) -> MatchProblem {
        let d = LatticeDims::cube(edge).unwrap();
        let mut cells = Vec::new();
        while cells.len() < k {
            let c = CellCoord::primal(rng.gen_range(0..edge), rng.gen_range(0..edge), rng.gen_range(0..edge));
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let g = build_bounded_graph(&d, &cells, m_e).unwrap();
        let comp = crate::matchprep::Component { nodes: (0..k).collect() };
        g.problem(&comp)
    }

    #[test]
    fn agrees_with_oracle_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        for round in 0..3000 {
            let k = 2 + round % 11;
            let m_e = [2, 3, 4, 6][round % 4];
            let p = random_problem(&mut rng, k, 8, m_e);
            match (minimum_weight_matching(&p), brute_force_matching(&p)) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a, b, "{p:?}");
                    checked += 1;
                }
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("{a:?} vs {b:?} on {p:?}"),
            }
        }
        assert!(checked > 2000);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn translation_invariant(seed in any::<u64>(), k in 2usize..10, shift in prop::array::uniform3(-3i32..4)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // interior placement so boundary nodes stay put under translation
            let base: Vec<_> = (0..k).map(|_| (rng.gen_range(0..6), rng.gen_range(0..6), rng.gen_range(0..6))).collect();
            let mut a = base.clone();
            a.sort();
            a.dedup();
            if a.len() % 2 == 1 { a.pop(); }
            let moved: Vec<_> = a.iter().map(|&(i, j, t)| (i + shift[0], j + shift[1], t + shift[2])).collect();
            let d = LatticeDims::cube(200).unwrap();
            let cells = |v: &[(i32, i32, i32)]| v.iter().map(|&(i, j, t)| CellCoord::primal(i + 100, j + 100, t + 100)).collect::<Vec<_>>();
            let w = |v: &[(i32, i32, i32)]| {
                let g = build_bounded_graph(&d, &cells(v), 30).unwrap();
                let comp = crate::matchprep::Component { nodes: (0..v.len()).collect() };
                minimum_weight_matching(&g.problem(&comp)).map(|m| m.total_weight)
            };
            prop_assert_eq!(w(&a), w(&moved));
        }

        #[test]
        fn removing_edges_never_helps(seed in any::<u64>(), k in 2usize..9, drop in any::<prop::sample::Index>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, k, 10, 5);
            let Ok(full) = minimum_weight_matching(&p) else { return Ok(()) };
            let mut cut = p.clone();
            if !cut.edges.is_empty() {
                cut.edges.remove(drop.index(cut.edges.len()));
            }
            if let Ok(m) = minimum_weight_matching(&cut) {
                prop_assert!(m.total_weight >= full.total_weight);
            }
            let mut more = p.clone();
            for (e, b) in more.boundary.iter_mut().enumerate() {
                if b.is_none() { *b = Some(5 + e as u32); }
            }
            let m = minimum_weight_matching(&more).unwrap();
            prop_assert!(m.total_weight <= full.total_weight);
        }
    }

    #[test]
    fn duals_certify_optimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let k = rng.gen_range(2..16);
            let p = random_problem(&mut rng, k, 12, 4);
            let Ok(layout) = Layout::new(&p) else { continue };
            let all = vec![true; layout.len()];
            let Some((mate, _, sol, _)) = layout.solve(&all) else { continue };
            let c = layout.edges.iter().map(|e| e.2).max().unwrap() + 1;
            for &(u, v, w) in &layout.edges {
                let s = sol.slack(u, v, c - w);
                assert!(s >= 0);
                if mate[u] == v {
                    assert_eq!(s, 0);
                }
            }
        }
    }

    #[test]
    fn weight_is_sum_of_pair_distances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let p = random_problem(&mut rng, 8, 10, 6);
            let Ok(m) = minimum_weight_matching(&p) else { continue };
            let mut sum = 0;
            for (a, b) in &m.pairs {
                sum += match (a, b) {
                    (MatchNode::Event(x), MatchNode::Event(y)) => l1(&p.events[*x], &p.events[*y]),
                    (MatchNode::Event(x), MatchNode::Virtual(o)) => {
                        assert_eq!(x, o);
                        p.boundary[*x].unwrap()
                    }
                    _ => 0,
                } as u64;
            }
            assert_eq!(sum, m.total_weight);
        }
    }
}
