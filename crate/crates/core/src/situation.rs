//! User situations over per-dimension concept taxonomies.
//!
//! A situation is a `(location, time, social)` triple of concept ids. Two
//! concepts are compared with Wu-Palmer similarity, and two situations by the
//! unweighted sum over the three dimensions, so scores lie in `(0, 3]`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum similarity for reusing a stored situation's state.
pub const DEFAULT_SIMILARITY_FLOOR: f64 = 2.4;

/// File names expected by [`SituationSpace::load_dir`].
pub const ONTOLOGY_FILES: [&str; 3] = ["location.tsv", "time.tsv", "social.tsv"];

/// A single-rooted concept tree. Depth counts nodes on the path to the root,
/// inclusive, so the root has depth 1.
#[derive(Debug, Clone)]
pub struct Ontology {
    ids: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<u32>,
    index: HashMap<String, usize>,
}

impl Ontology {
    /// Builds a tree from `(child, parent)` pairs; `None` marks the root.
    pub fn from_edges<I, S>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Option<S>)>,
        S: Into<String>,
    {
        let edges: Vec<(String, Option<String>)> = edges
            .into_iter()
            .map(|(c, p)| (c.into(), p.map(Into::into)))
            .collect();
        let mut index = HashMap::with_capacity(edges.len());
        let mut ids = Vec::with_capacity(edges.len());
        for (child, _) in &edges {
            if index.insert(child.clone(), ids.len()).is_some() {
                return Err(Error::Ontology(format!("concept `{child}` listed twice")));
            }
            ids.push(child.clone());
        }

        let mut parent = Vec::with_capacity(edges.len());
        let mut roots = 0;
        for (child, p) in &edges {
            match p {
                None => {
                    roots += 1;
                    parent.push(None);
                }
                Some(p) => {
                    let idx = *index.get(p).ok_or_else(|| {
                        Error::Ontology(format!("parent `{p}` of `{child}` is not defined"))
                    })?;
                    parent.push(Some(idx));
                }
            }
        }
        if roots != 1 {
            return Err(Error::Ontology(format!("expected exactly one root, found {roots}")));
        }

        // 0 = unvisited, otherwise the resolved depth
        let mut depth = vec![0u32; ids.len()];
        let mut path = Vec::new();
        for start in 0..ids.len() {
            let mut cur = start;
            while depth[cur] == 0 {
                if path.len() > ids.len() {
                    return Err(Error::Ontology(format!("cycle through `{}`", ids[start])));
                }
                path.push(cur);
                match parent[cur] {
                    Some(p) => cur = p,
                    None => {
                        depth[cur] = 1;
                        path.pop();
                        break;
                    }
                }
            }
            while let Some(node) = path.pop() {
                let p = parent[node].expect("only the root lacks a parent");
                depth[node] = depth[p] + 1;
            }
        }
        Ok(Self {
            ids,
            parent,
            depth,
            index,
        })
    }

    /// Parses `child<TAB>parent` lines, with `-` as the root's parent.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let child = fields.next().unwrap_or_default().trim();
            let parent = fields.next().map(str::trim);
            let bad = |field: &str, reason: &str| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                field: field.to_string(),
                reason: reason.to_string(),
            };
            if child.is_empty() {
                return Err(bad("child_id", "empty concept id"));
            }
            let parent = match parent {
                None | Some("") => return Err(bad("parent_id", "missing tab-separated parent")),
                Some("-") => None,
                Some(p) => Some(p.to_string()),
            };
            if fields.next().is_some() {
                return Err(bad("parent_id", "trailing fields"));
            }
            edges.push((child.to_string(), parent));
        }
        Self::from_edges(edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Complete tree with `branching` children per node and `levels` levels
    /// below the root. Ids are `{prefix}` for the root and `{prefix}.i.j…`.
    pub fn balanced(prefix: &str, branching: usize, levels: usize) -> Self {
        let mut edges: Vec<(String, Option<String>)> = vec![(prefix.to_string(), None)];
        let mut frontier = vec![prefix.to_string()];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(frontier.len() * branching);
            for p in &frontier {
                for i in 0..branching {
                    let id = format!("{p}.{i}");
                    edges.push((id.clone(), Some(p.clone())));
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::from_edges(edges).expect("balanced tree is well formed")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            let parent = self.parent[i].map_or("-", |p| self.ids[p].as_str());
            let _ = writeln!(out, "{id}\t{parent}");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    pub fn parent(&self, id: &str) -> Result<Option<&str>> {
        Ok(self.parent[self.idx(id)?].map(|p| self.ids[p].as_str()))
    }

    pub fn depth(&self, id: &str) -> Result<u32> {
        Ok(self.depth[self.idx(id)?])
    }

    fn lcs_idx(&self, mut x: usize, mut y: usize) -> usize {
        while self.depth[x] > self.depth[y] {
            x = self.parent[x].expect("non-root");
        }
        while self.depth[y] > self.depth[x] {
            y = self.parent[y].expect("non-root");
        }
        while x != y {
            x = self.parent[x].expect("non-root");
            y = self.parent[y].expect("non-root");
        }
        x
    }

    fn similarity_idx(&self, x: usize, y: usize) -> f64 {
        let lcs = self.lcs_idx(x, y);
        2.0 * self.depth[lcs] as f64 / (self.depth[x] + self.depth[y]) as f64
    }

    /// Deepest common ancestor; a node is its own ancestor.
    pub fn lcs(&self, x: &str, y: &str) -> Result<&str> {
        let l = self.lcs_idx(self.idx(x)?, self.idx(y)?);
        Ok(&self.ids[l])
    }

    /// `2·depth(lcs) / (depth(x) + depth(y))`
    pub fn wu_palmer(&self, x: &str, y: &str) -> Result<f64> {
        Ok(self.similarity_idx(self.idx(x)?, self.idx(y)?))
    }
}

pub fn lcs<'a>(ontology: &'a Ontology, x: &str, y: &str) -> Result<&'a str> {
    ontology.lcs(x, y)
}

pub fn wu_palmer_sim(ontology: &Ontology, x: &str, y: &str) -> Result<f64> {
    ontology.wu_palmer(x, y)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Situation {
    pub location: String,
    pub time: String,
    pub social: String,
}

impl Situation {
    pub fn new(location: impl Into<String>, time: impl Into<String>, social: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            time: time.into(),
            social: social.into(),
        }
    }
}

/// A situation whose concepts were checked against a [`SituationSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResolvedSituation([usize; 3]);

/// The three dimension ontologies.
#[derive(Debug, Clone)]
pub struct SituationSpace {
    dims: [Arc<Ontology>; 3],
}

impl SituationSpace {
    pub fn new(location: Ontology, time: Ontology, social: Ontology) -> Self {
        Self {
            dims: [Arc::new(location), Arc::new(time), Arc::new(social)],
        }
    }

    /// Loads `location.tsv`, `time.tsv` and `social.tsv` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let [l, t, s] = ONTOLOGY_FILES.map(|f| Ontology::load(dir.join(f)));
        Ok(Self::new(l?, t?, s?))
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, ont) in ONTOLOGY_FILES.iter().zip(&self.dims) {
            let path = dir.join(name);
            std::fs::write(&path, ont.to_tsv()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn location(&self) -> &Ontology {
        &self.dims[0]
    }

    pub fn time(&self) -> &Ontology {
        &self.dims[1]
    }

    pub fn social(&self) -> &Ontology {
        &self.dims[2]
    }

    pub fn resolve(&self, s: &Situation) -> Result<ResolvedSituation> {
        Ok(ResolvedSituation([
            self.dims[0].idx(&s.location)?,
            self.dims[1].idx(&s.time)?,
            self.dims[2].idx(&s.social)?,
        ]))
    }

    /// Sum of the per-dimension Wu-Palmer similarities, each weighted 1.
    pub fn similarity(&self, a: &ResolvedSituation, b: &ResolvedSituation) -> f64 {
        (0..3)
            .map(|j| self.dims[j].similarity_idx(a.0[j], b.0[j]))
            .sum()
    }
}

/// Past situations, each owning one piece of state (typically a policy).
#[derive(Debug, Clone)]
pub struct SituationStore<T> {
    space: SituationSpace,
    entries: Vec<(Situation, ResolvedSituation, T)>,
}

impl<T> SituationStore<T> {
    pub fn new(space: SituationSpace) -> Self {
        Self {
            space,
            entries: Vec::new(),
        }
    }

    pub fn space(&self) -> &SituationSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn situations(&self) -> impl Iterator<Item = &Situation> {
        self.entries.iter().map(|e| &e.0)
    }

    pub fn insert(&mut self, situation: Situation, state: T) -> Result<usize> {
        let resolved = self.space.resolve(&situation)?;
        self.entries.push((situation, resolved, state));
        Ok(self.entries.len() - 1)
    }

    pub fn state(&self, index: usize) -> Option<&T> {
        self.entries.get(index).map(|e| &e.2)
    }

    /// Index and score of the most similar stored situation; ties go to the
    /// most recently stored one.
    pub fn retrieve(&self, current: &ResolvedSituation) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, r, _)) in self.entries.iter().enumerate() {
            let score = self.space.similarity(current, r);
            if best.is_none_or(|(_, b)| score >= b) {
                best = Some((i, score));
            }
        }
        best
    }

    pub fn state_mut(&mut self, index: usize) -> Option<&mut T> {
        self.entries.get_mut(index).map(|e| &mut e.2)
    }

    /// Index of the best match when its score reaches `floor`; otherwise
    /// registers `current` with a state from `fresh` (given the new index).
    pub fn situation_index(
        &mut self,
        current: &Situation,
        floor: f64,
        fresh: impl FnOnce(usize) -> Result<T>,
    ) -> Result<usize> {
        let resolved = self.space.resolve(current)?;
        match self.retrieve(&resolved) {
            Some((i, score)) if score >= floor => Ok(i),
            _ => {
                let i = self.entries.len();
                let state = fresh(i)?;
                self.entries.push((current.clone(), resolved, state));
                Ok(i)
            }
        }
    }

    pub fn situation_state(
        &mut self,
        current: &Situation,
        floor: f64,
        fresh: impl FnOnce(usize) -> Result<T>,
    ) -> Result<&mut T> {
        let idx = self.situation_index(current, floor, fresh)?;
        Ok(&mut self.entries[idx].2)
    }
}

/// Best stored situation for `current` and its score.
pub fn retrieve_situation<'a, T>(
    store: &'a SituationStore<T>,
    current: &Situation,
) -> Result<Option<(&'a Situation, f64)>> {
    let resolved = store.space.resolve(current)?;
    Ok(store
        .retrieve(&resolved)
        .map(|(i, score)| (&store.entries[i].0, score)))
}
