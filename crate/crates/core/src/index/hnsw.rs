//! Hierarchical navigable small-world graph over the entry table.
//!
//! Construction is sequential in entry order with a seeded level generator,
//! so the same table and parameters always produce the same graph.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::distance::{squared_l2, Scored};
use super::store::{AnnParams, EntryTable};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct HnswGraph {
    pub(crate) params: AnnParams,
    pub(crate) entry: u32,
    pub(crate) max_level: usize,
    pub(crate) levels: Vec<u8>,
    /// `links[node][level]`, level 0 first.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

/// Visited marks reset by bumping a generation counter.
struct Visited {
    marks: Vec<u32>,
    generation: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            marks: vec![0; n],
            generation: 0,
        }
    }

    fn reset(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.marks.fill(0);
            self.generation = 1;
        }
    }

    /// Marks `id`; returns false if it was already marked.
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.marks[id as usize];
        if *slot == self.generation {
            false
        } else {
            *slot = self.generation;
            true
        }
    }
}

fn greedy_closest<'a, F>(query: &[f32], mut current: Scored, table: &EntryTable, neighbors: F) -> Scored
where
    F: Fn(u32) -> &'a [u32],
{
    loop {
        let mut improved = false;
        for &n in neighbors(current.id) {
            let d = squared_l2(query, table.vector(n as usize));
            let cand = Scored { dist: d, id: n };
            if cand < current {
                current = cand;
                improved = true;
            }
        }
        if !improved {
            return current;
        }
    }
}

/// Beam search restricted to one layer; returns up to `ef` results, closest first.
fn search_layer<'a, F>(
    query: &[f32],
    entry_points: &[Scored],
    ef: usize,
    table: &EntryTable,
    visited: &mut Visited,
    neighbors: F,
) -> Vec<Scored>
where
    F: Fn(u32) -> &'a [u32],
{
    visited.reset();
    let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::with_capacity(ef * 2);
    let mut results: BinaryHeap<Scored> = BinaryHeap::with_capacity(ef + 1);
    for &ep in entry_points {
        if visited.insert(ep.id) {
            candidates.push(Reverse(ep));
            results.push(ep);
            if results.len() > ef {
                results.pop();
            }
        }
    }
    while let Some(Reverse(c)) = candidates.pop() {
        let worst = results.peek().expect("results never empty here");
        if c > *worst && results.len() >= ef {
            break;
        }
        for &n in neighbors(c.id) {
            if !visited.insert(n) {
                continue;
            }
            let cand = Scored {
                dist: squared_l2(query, table.vector(n as usize)),
                id: n,
            };
            if results.len() < ef || cand < *results.peek().expect("non-empty") {
                candidates.push(Reverse(cand));
                results.push(cand);
                if results.len() > ef {
                    results.pop();
                }
            }
        }
    }
    results.into_sorted_vec()
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every neighbor already kept, and not identical to one of them.
fn select_neighbors(table: &EntryTable, sorted: &[Scored], m: usize) -> Vec<Scored> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let cv = table.vector(c.id as usize);
        let diverse = kept.iter().all(|k| {
            let d = squared_l2(cv, table.vector(k.id as usize));
            d >= c.dist && d > 0.0
        });
        if diverse {
            kept.push(c);
        }
    }
    kept
}

struct Builder<'t> {
    table: &'t EntryTable,
    params: AnnParams,
    /// Per node, per level: neighbors with cached squared distances.
    links: Vec<Vec<Vec<Scored>>>,
    /// Neighbor ids mirrored from `links` for the search closures.
    ids: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
    visited: Visited,
}

impl<'t> Builder<'t> {
    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        self.ids.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(node);
            self.max_level = level;
            return;
        };
        let table = self.table;
        let query = table.vector(node as usize);
        let mut ep = Scored {
            dist: squared_l2(query, table.vector(entry as usize)),
            id: entry,
        };
        for lc in (level + 1..=self.max_level).rev() {
            let ids = &self.ids;
            ep = greedy_closest(query, ep, table, |n| ids[n as usize][lc].as_slice());
        }
        let mut entry_points = vec![ep];
        for lc in (0..=level.min(self.max_level)).rev() {
            let ids = &self.ids;
            let found = search_layer(
                query,
                &entry_points,
                self.params.ef_construction,
                table,
                &mut self.visited,
                |n| ids[n as usize].get(lc).map_or(&[][..], |v| v.as_slice()),
            );
            let chosen = select_neighbors(table, &found, self.params.m);
            self.set_links(node, lc, chosen.clone());
            for nb in chosen {
                self.link_back(nb.id, lc, Scored { dist: nb.dist, id: node });
            }
            entry_points = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(node);
        }
    }

    fn set_links(&mut self, node: u32, level: usize, list: Vec<Scored>) {
        self.ids[node as usize][level] = list.iter().map(|s| s.id).collect();
        self.links[node as usize][level] = list;
    }

    fn link_back(&mut self, node: u32, level: usize, new: Scored) {
        let cap = self.max_links(level);
        let list = &mut self.links[node as usize][level];
        list.push(new);
        if list.len() <= cap {
            self.ids[node as usize][level].push(new.id);
            return;
        }
        let mut sorted = std::mem::take(list);
        sorted.sort();
        let kept = select_neighbors(self.table, &sorted, cap);
        self.set_links(node, level, kept);
    }
}

impl HnswGraph {
    pub fn build(table: &EntryTable, params: AnnParams) -> Self {
        let n = table.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let levels: Vec<u8> = (0..n)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL) as u8
            })
            .collect();
        let mut builder = Builder {
            table,
            params,
            links: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            entry: None,
            max_level: 0,
            visited: Visited::new(n),
        };
        for (i, &l) in levels.iter().enumerate() {
            builder.insert(i as u32, l as usize);
        }
        HnswGraph {
            params,
            entry: builder.entry.unwrap_or(0),
            max_level: builder.max_level,
            levels,
            links: builder.ids,
        }
    }

    fn neighbors(&self, node: u32, level: usize) -> &[u32] {
        self.links[node as usize]
            .get(level)
            .map_or(&[][..], |v| v.as_slice())
    }

    /// Approximate `k` nearest entries as `(squared distance, entry)`, closest first.
    pub(crate) fn search(&self, table: &EntryTable, query: &[f32], k: usize) -> Vec<Scored> {
        if self.levels.is_empty() {
            return Vec::new();
        }
        let mut ep = Scored {
            dist: squared_l2(query, table.vector(self.entry as usize)),
            id: self.entry,
        };
        for lc in (1..=self.max_level).rev() {
            ep = greedy_closest(query, ep, table, |n| self.neighbors(n, lc));
        }
        let ef = self.params.ef_search.max(k);
        let mut visited = Visited::new(table.len());
        let mut found = search_layer(query, &[ep], ef, table, &mut visited, |n| self.neighbors(n, 0));
        found.truncate(k);
        found
    }
}
