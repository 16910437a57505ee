//! Heterogeneous user/object graph, dataset loaders, role views and
//! train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    User,
    Object,
}

impl NodeType {
    pub const ALL: [NodeType; 2] = [NodeType::User, NodeType::Object];

    pub fn index(self) -> usize {
        match self {
            NodeType::User => 0,
            NodeType::Object => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Trustor,
    Trustee,
}

/// Typed graph of users and objects.
///
/// Node ids are dense: users occupy `0..num_users`, objects occupy
/// `num_users..num_users + num_objects`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    num_users: usize,
    num_objects: usize,
    trust_edges: Vec<(usize, usize)>,
    interaction_edges: Vec<(usize, usize)>,
    object_edges: Vec<(usize, usize)>,
}

impl HeteroGraph {
    /// Builds a graph, rejecting any edge that violates the typing rules or
    /// repeats an earlier edge. Interaction edges are `(user, object)` node
    /// ids; object edges are stored with the smaller id first.
    pub fn new(
        num_users: usize,
        num_objects: usize,
        trust_edges: Vec<(usize, usize)>,
        interaction_edges: Vec<(usize, usize)>,
        object_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = num_users + num_objects;
        let is_user = |v: usize| v < num_users;
        let is_object = |v: usize| v >= num_users && v < n;

        let mut seen = HashSet::new();
        for &(a, b) in &trust_edges {
            if !is_user(a) || !is_user(b) {
                return Err(Error::InvalidArgument(format!(
                    "trust edge ({a}, {b}) must connect two users"
                )));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-trust edge on user {a}")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::InvalidArgument(format!("duplicate trust edge ({a}, {b})")));
            }
        }

        seen.clear();
        for &(u, o) in &interaction_edges {
            if !is_user(u) || !is_object(o) {
                return Err(Error::InvalidArgument(format!(
                    "interaction edge ({u}, {o}) must be (user, object)"
                )));
            }
            if !seen.insert((u, o)) {
                return Err(Error::InvalidArgument(format!("duplicate interaction edge ({u}, {o})")));
            }
        }

        seen.clear();
        let mut objs = Vec::with_capacity(object_edges.len());
        for (a, b) in object_edges {
            if !is_object(a) || !is_object(b) || a == b {
                return Err(Error::InvalidArgument(format!(
                    "object edge ({a}, {b}) must connect two distinct objects"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidArgument(format!("duplicate object edge ({a}, {b})")));
            }
            objs.push(e);
        }

        Ok(Self {
            num_users,
            num_objects,
            trust_edges,
            interaction_edges,
            object_edges: objs,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_objects
    }

    pub fn node_type(&self, v: usize) -> NodeType {
        if v < self.num_users {
            NodeType::User
        } else {
            NodeType::Object
        }
    }

    pub fn node_types(&self) -> Vec<NodeType> {
        (0..self.num_nodes()).map(|v| self.node_type(v)).collect()
    }

    /// Node id of the `idx`-th object.
    pub fn object_node(&self, idx: usize) -> usize {
        self.num_users + idx
    }

    pub fn trust_edges(&self) -> &[(usize, usize)] {
        &self.trust_edges
    }

    pub fn interaction_edges(&self) -> &[(usize, usize)] {
        &self.interaction_edges
    }

    pub fn object_edges(&self) -> &[(usize, usize)] {
        &self.object_edges
    }

    /// Same nodes and non-trust edges, with the trust edge set replaced.
    /// Used to hide held-out trust edges from the message-passing graph.
    pub fn with_trust_edges(&self, trust_edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(
            self.num_users,
            self.num_objects,
            trust_edges,
            self.interaction_edges.clone(),
            self.object_edges.clone(),
        )
    }

    /// Outgoing trust adjacency over users only.
    pub fn trust_adjacency(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_users];
        for &(a, b) in &self.trust_edges {
            out[a].push(b);
        }
        for row in &mut out {
            row.sort_unstable();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Ordered user pair with a binary trust label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrustSample {
    pub trustor: usize,
    pub trustee: usize,
    pub label: bool,
    pub split: Split,
}

impl TrustSample {
    pub fn positive(trustor: usize, trustee: usize) -> Self {
        Self {
            trustor,
            trustee,
            label: true,
            split: Split::Train,
        }
    }
}

/// Symmetrically normalized adjacency of one role, in CSR form.
///
/// Row `i` lists the nodes that `i` aggregates from, including itself.
#[derive(Clone, Debug)]
pub struct GraphView {
    role: Role,
    node_types: Vec<NodeType>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl GraphView {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_nodes();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }

    /// All stored entries as `(target, neighbor, value)` triples, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

/// Builds the normalized view for `role` from the graph's trust edges plus
/// the augmented user pairs, all with unit weight.
pub fn build_view(graph: &HeteroGraph, augmented: &[(usize, usize)], role: Role) -> GraphView {
    let weighted: Vec<(usize, usize, f64)> = augmented.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    build_view_weighted(graph, &weighted, role)
}

/// Like [`build_view`], but augmented pairs carry a weight. Observed trust
/// edges have weight 1; a pair present in both sets keeps the larger weight.
pub fn build_view_weighted(graph: &HeteroGraph, augmented: &[(usize, usize, f64)], role: Role) -> GraphView {
    let n = graph.num_nodes();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];

    let put = |rows: &mut Vec<BTreeMap<usize, f64>>, i: usize, j: usize, w: f64| {
        let e = rows[i].entry(j).or_insert(0.0);
        if w > *e {
            *e = w;
        }
    };

    let trust = graph
        .trust_edges()
        .iter()
        .map(|&(a, b)| (a, b, 1.0))
        .chain(augmented.iter().copied());
    for (a, b, w) in trust {
        debug_assert!(a < graph.num_users() && b < graph.num_users());
        if a == b {
            continue;
        }
        match role {
            Role::Trustor => put(&mut rows, a, b, w),
            Role::Trustee => put(&mut rows, b, a, w),
        }
    }
    for &(u, o) in graph.interaction_edges().iter().chain(graph.object_edges()) {
        put(&mut rows, u, o, 1.0);
        put(&mut rows, o, u, 1.0);
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row.insert(i, 1.0);
    }

    let degree: Vec<f64> = rows.iter().map(|r| r.values().sum()).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, row) in rows.iter().enumerate() {
        for (&j, &w) in row {
            indices.push(j);
            values.push(w / (degree[i] * degree[j]).sqrt());
        }
        indptr.push(indices.len());
    }

    GraphView {
        role,
        node_types: graph.node_types(),
        indptr,
        indices,
        values,
    }
}

/// A parsed dataset with the original identifiers of every node.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub positives: Vec<TrustSample>,
    pub user_names: Vec<String>,
    pub object_names: Vec<String>,
    pub skipped_self_trust: usize,
    pub skipped_duplicates: usize,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn parse_triplet_file(path: &Path) -> Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let a = fields[0]
            .parse::<u64>()
            .map_err(|_| bad(format!("invalid id {:?}", fields[0])))?;
        let b = fields[1]
            .parse::<u64>()
            .map_err(|_| bad(format!("invalid id {:?}", fields[1])))?;
        fields[2]
            .parse::<f64>()
            .map_err(|_| bad(format!("invalid value {:?}", fields[2])))?;
        out.push((a, b));
    }
    Ok(out)
}

/// Loads the FilmTrust text format: `user item rating` and
/// `trustor trustee value` lines. Users from both files are merged and
/// relabelled in ascending order of their original id.
pub fn load_filmtrust(ratings_path: &Path, trust_path: &Path) -> Result<Dataset> {
    let ratings = parse_triplet_file(ratings_path)?;
    let trust = parse_triplet_file(trust_path)?;

    let users: BTreeSet<u64> = ratings
        .iter()
        .map(|r| r.0)
        .chain(trust.iter().flat_map(|t| [t.0, t.1]))
        .collect();
    let objects: BTreeSet<u64> = ratings.iter().map(|r| r.1).collect();
    let user_id: HashMap<u64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let num_users = users.len();
    let object_id: HashMap<u64, usize> = objects.iter().enumerate().map(|(i, &o)| (o, num_users + i)).collect();

    let mut skipped_duplicates = 0;
    let mut seen = HashSet::new();
    let mut interactions = Vec::new();
    for (u, o) in ratings {
        let e = (user_id[&u], object_id[&o]);
        if seen.insert(e) {
            interactions.push(e);
        } else {
            skipped_duplicates += 1;
        }
    }

    let mut skipped_self_trust = 0;
    seen.clear();
    let mut trust_edges = Vec::new();
    for (a, b) in trust {
        if a == b {
            skipped_self_trust += 1;
            continue;
        }
        let e = (user_id[&a], user_id[&b]);
        if seen.insert(e) {
            trust_edges.push(e);
        } else {
            skipped_duplicates += 1;
        }
    }
    if skipped_self_trust > 0 {
        log::warn!(
            "skipped {skipped_self_trust} self-trust edges in {}",
            trust_path.display()
        );
    }

    let positives = trust_edges.iter().map(|&(a, b)| TrustSample::positive(a, b)).collect();
    let graph = HeteroGraph::new(num_users, objects.len(), trust_edges, interactions, Vec::new())?;
    Ok(Dataset {
        graph,
        positives,
        user_names: users.iter().map(u64::to_string).collect(),
        object_names: objects.iter().map(u64::to_string).collect(),
        skipped_self_trust,
        skipped_duplicates,
    })
}

/// Dataset plus the side information the embedding layer needs.
#[derive(Clone, Debug)]
pub struct SiotDataset {
    pub data: Dataset,
    /// Comments per surviving user, indexed by dense user id.
    pub corpus: Vec<Vec<String>>,
    /// Knowledge-graph entity name per object, indexed by object index.
    pub alignment: Vec<Option<String>>,
}

#[derive(Deserialize)]
struct TrustRow {
    trustor: String,
    trustee: String,
}

#[derive(Deserialize)]
struct InteractionRow {
    user: String,
    object: String,
    comment: String,
}

#[derive(Deserialize)]
struct ObjectRow {
    object: String,
    entity_name: String,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required file is missing"),
        ));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Loads a CSV bundle (`trust.csv`, `interactions.csv`, `objects.csv`, and
/// optionally `object_edges.csv` with columns `object_a,object_b`).
///
/// Users with at most `min_user_comments` comments and objects with at most
/// `min_object_comments` comments are dropped; the counts are taken over the
/// raw interaction rows.
pub fn load_siot_csv(dir: &Path, min_user_comments: usize, min_object_comments: usize) -> Result<SiotDataset> {
    let trust: Vec<TrustRow> = read_csv(&dir.join("trust.csv"))?;
    let interactions: Vec<InteractionRow> = read_csv(&dir.join("interactions.csv"))?;
    let objects: Vec<ObjectRow> = read_csv(&dir.join("objects.csv"))?;
    let object_edges_path: PathBuf = dir.join("object_edges.csv");
    let object_edge_rows: Vec<(String, String)> = if object_edges_path.exists() {
        let mut rdr = csv::Reader::from_path(&object_edges_path).map_err(|e| Error::csv(&object_edges_path, e))?;
        rdr.deserialize()
            .collect::<std::result::Result<Vec<(String, String)>, _>>()
            .map_err(|e| Error::csv(&object_edges_path, e))?
    } else {
        Vec::new()
    };

    let mut user_count: HashMap<&str, usize> = HashMap::new();
    let mut object_count: HashMap<&str, usize> = HashMap::new();
    for row in &interactions {
        *user_count.entry(&row.user).or_default() += 1;
        *object_count.entry(&row.object).or_default() += 1;
    }
    let users: BTreeSet<&str> = user_count
        .iter()
        .filter(|(_, &c)| c > min_user_comments)
        .map(|(&u, _)| u)
        .collect();
    let kept_objects: BTreeSet<&str> = object_count
        .iter()
        .filter(|(_, &c)| c > min_object_comments)
        .map(|(&o, _)| o)
        .collect();

    let num_users = users.len();
    let user_id: HashMap<&str, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let object_id: HashMap<&str, usize> = kept_objects
        .iter()
        .enumerate()
        .map(|(i, &o)| (o, num_users + i))
        .collect();

    let mut corpus = vec![Vec::new(); num_users];
    let mut interaction_edges = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped_duplicates = 0;
    for row in &interactions {
        let Some(&u) = user_id.get(row.user.as_str()) else {
            continue;
        };
        corpus[u].push(row.comment.clone());
        if let Some(&o) = object_id.get(row.object.as_str()) {
            if seen.insert((u, o)) {
                interaction_edges.push((u, o));
            } else {
                skipped_duplicates += 1;
            }
        }
    }

    let mut trust_edges = Vec::new();
    let mut skipped_self_trust = 0;
    seen.clear();
    for row in &trust {
        let (Some(&a), Some(&b)) = (user_id.get(row.trustor.as_str()), user_id.get(row.trustee.as_str())) else {
            continue;
        };
        if a == b {
            skipped_self_trust += 1;
        } else if seen.insert((a, b)) {
            trust_edges.push((a, b));
        } else {
            skipped_duplicates += 1;
        }
    }

    let entity_of: HashMap<&str, &str> = objects
        .iter()
        .map(|r| (r.object.as_str(), r.entity_name.as_str()))
        .collect();
    let alignment: Vec<Option<String>> = kept_objects
        .iter()
        .map(|o| entity_of.get(o).filter(|e| !e.is_empty()).map(|e| e.to_string()))
        .collect();

    let mut object_edges = Vec::new();
    seen.clear();
    for (a, b) in &object_edge_rows {
        if let (Some(&x), Some(&y)) = (object_id.get(a.as_str()), object_id.get(b.as_str())) {
            if x != y && seen.insert((x.min(y), x.max(y))) {
                object_edges.push((x, y));
            }
        }
    }

    let positives = trust_edges.iter().map(|&(a, b)| TrustSample::positive(a, b)).collect();
    let graph = HeteroGraph::new(
        num_users,
        kept_objects.len(),
        trust_edges,
        interaction_edges,
        object_edges,
    )?;
    Ok(SiotDataset {
        data: Dataset {
            graph,
            positives,
            user_names: users.iter().map(|s| s.to_string()).collect(),
            object_names: kept_objects.iter().map(|s| s.to_string()).collect(),
            skipped_self_trust,
            skipped_duplicates,
        },
        corpus,
        alignment,
    })
}

/// Number of held-out positives for a given train ratio.
///
/// The test share is floored; the remainder stays in training.
pub fn test_count(total: usize, ratio: f64) -> usize {
    (((1.0 - ratio) * total as f64) + 1e-9).floor() as usize
}

/// Splits observed trust edges into train/test and pairs each split with an
/// equal number of negatives drawn from unlinked ordered user pairs.
pub fn split_samples(
    graph: &HeteroGraph,
    positives: &[TrustSample],
    ratio: f64,
    seed: u64,
) -> Result<Vec<TrustSample>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<TrustSample> = positives.to_vec();
    pos.shuffle(&mut rng);
    let n_test = test_count(pos.len(), ratio);
    let n_train = pos.len() - n_test;

    let n = graph.num_users();
    let linked: HashSet<(usize, usize)> = graph
        .trust_edges()
        .iter()
        .copied()
        .chain(positives.iter().map(|s| (s.trustor, s.trustee)))
        .collect();
    let needed = pos.len();
    let available = (n * n.saturating_sub(1)).saturating_sub(linked.len());
    if needed > available {
        return Err(Error::InsufficientNegatives { needed, available });
    }

    let negatives: Vec<(usize, usize)> = if 2 * needed > available {
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && !linked.contains(&(a, b)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(needed);
        all
    } else {
        let mut chosen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && !linked.contains(&(a, b)) && chosen.insert((a, b)) {
                out.push((a, b));
            }
        }
        out
    };

    let mut samples = Vec::with_capacity(2 * needed);
    for (i, s) in pos.iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        samples.push(TrustSample { split, ..*s });
    }
    for (i, &(a, b)) in negatives.iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        samples.push(TrustSample {
            trustor: a,
            trustee: b,
            label: false,
            split,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn dense_normalized(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j) in edges {
            a[i][j] = 1.0;
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = a[i][j] / (d[i] * d[j]).sqrt();
            }
        }
        out
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(HeteroGraph::new(2, 1, vec![(0, 0)], vec![], vec![]).is_err());
        assert!(HeteroGraph::new(2, 1, vec![(0, 2)], vec![], vec![]).is_err());
        assert!(HeteroGraph::new(2, 1, vec![(0, 1), (0, 1)], vec![], vec![]).is_err());
        assert!(HeteroGraph::new(2, 1, vec![], vec![(0, 1)], vec![]).is_err());
        assert!(HeteroGraph::new(2, 2, vec![], vec![], vec![(2, 3), (3, 2)]).is_err());
        assert!(HeteroGraph::new(2, 2, vec![(1, 0)], vec![(0, 2)], vec![(3, 2)]).is_ok());
    }

    #[test]
    fn filmtrust_minimal_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "ratings.txt", "5 10 2.0\n7 10 3.5\n7 11 1\n");
        let t = write(dir.path(), "trust.txt", "");
        let ds = load_filmtrust(&r, &t).unwrap();
        assert_eq!(ds.graph.num_users(), 2);
        assert_eq!(ds.graph.num_objects(), 2);
        assert_eq!(ds.graph.trust_edges().len(), 0);
        assert!(ds.positives.is_empty());

        let t = write(dir.path(), "trust2.txt", "0 0 1\n1 0 1\n");
        let ds = load_filmtrust(&r, &t).unwrap();
        // users {0, 1, 5, 7} after merging both files
        assert_eq!(ds.graph.num_users(), 4);
        assert_eq!(ds.skipped_self_trust, 1);
        assert_eq!(ds.graph.trust_edges(), &[(1, 0)]);
        assert_eq!(ds.positives.len(), 1);
    }

    #[test]
    fn filmtrust_parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "ratings.txt", "1 1 1\n1 x 2\n");
        let t = write(dir.path(), "trust.txt", "");
        match load_filmtrust(&r, &t) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let r = write(dir.path(), "ratings2.txt", "1 1\n");
        assert!(matches!(load_filmtrust(&r, &t), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn siot_threshold_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let mut inter = String::from("user,object,comment\n");
        for i in 0..15 {
            inter.push_str(&format!("a,o1,comment {i}\n"));
        }
        for i in 0..16 {
            inter.push_str(&format!("b,o1,other {i}\n"));
        }
        write(dir.path(), "interactions.csv", &inter);
        write(dir.path(), "trust.csv", "trustor,trustee\na,b\nb,a\n");
        write(dir.path(), "objects.csv", "object,entity_name\n");
        let ds = load_siot_csv(dir.path(), 15, 10).unwrap();
        assert_eq!(ds.data.user_names, vec!["b".to_string()]);
        assert_eq!(ds.data.graph.trust_edges().len(), 0);
        assert_eq!(ds.corpus[0].len(), 16);
        // o1 is referenced but missing from objects.csv: kept, unaligned
        assert_eq!(ds.alignment, vec![None]);
    }

    #[test]
    fn siot_missing_file_is_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "trust.csv", "trustor,trustee\n");
        let err = load_siot_csv(dir.path(), 15, 10).unwrap_err();
        assert!(err.to_string().contains("interactions.csv"), "{err}");
    }

    #[test]
    fn siot_no_op_filter() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "interactions.csv",
            "user,object,comment\nu2,o1,x\nu1,o1,y\nu1,o2,z\n",
        );
        write(dir.path(), "trust.csv", "trustor,trustee\nu1,u2\n");
        write(dir.path(), "objects.csv", "object,entity_name\no1,Paris\no2,\n");
        let ds = load_siot_csv(dir.path(), 0, 0).unwrap();
        assert_eq!(ds.data.graph.num_users(), 2);
        assert_eq!(ds.data.graph.num_objects(), 2);
        assert_eq!(ds.data.graph.trust_edges(), &[(0, 1)]);
        assert_eq!(ds.data.graph.interaction_edges().len(), 3);
        assert_eq!(ds.alignment, vec![Some("Paris".to_string()), None]);
    }

    #[test]
    fn isolated_node_view() {
        let g = HeteroGraph::new(1, 0, vec![], vec![], vec![]).unwrap();
        let v = build_view(&g, &[], Role::Trustor);
        assert_eq!(v.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn trustee_view_reverses() {
        let g = HeteroGraph::new(2, 0, vec![(0, 1)], vec![], vec![]).unwrap();
        let tor = build_view(&g, &[], Role::Trustor);
        let tee = build_view(&g, &[], Role::Trustee);
        assert!(tor.get(0, 1) > 0.0 && tor.get(1, 0) == 0.0);
        assert!(tee.get(1, 0) > 0.0 && tee.get(0, 1) == 0.0);
    }

    #[test]
    fn view_matches_dense_oracle() {
        // users 0,1 and object 2; trust 0->1, interaction 1-2
        let g = HeteroGraph::new(2, 1, vec![(0, 1)], vec![(1, 2)], vec![]).unwrap();
        let v = build_view(&g, &[], Role::Trustor);
        let oracle = dense_normalized(3, &[(0, 1), (1, 2), (2, 1)]);
        let got = v.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - oracle[i][j]).abs() < 1e-15);
            }
        }
        // 0 -> {0, 1}: d0 = 2; 1 -> {1, 2}: d1 = 2
        assert!((got[0][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn augmented_pairs_are_deduplicated() {
        let g = HeteroGraph::new(3, 0, vec![(0, 1)], vec![], vec![]).unwrap();
        let a = build_view(&g, &[], Role::Trustor);
        let b = build_view(&g, &[(0, 1), (0, 1)], Role::Trustor);
        assert_eq!(a.to_dense(), b.to_dense());
        let c = build_view(&g, &[(0, 2)], Role::Trustor);
        assert_eq!(c.row(0).count(), 3);
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        assert_eq!(1853 - test_count(1853, 0.9), 1668);
        assert_eq!(test_count(1853, 0.9), 185);
        assert_eq!(test_count(10, 0.5), 5);
        assert_eq!(test_count(10, 0.8), 2);

        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        let g = HeteroGraph::new(10, 0, edges, vec![], vec![]).unwrap();
        let pos: Vec<_> = g
            .trust_edges()
            .iter()
            .map(|&(a, b)| TrustSample::positive(a, b))
            .collect();
        let s = split_samples(&g, &pos, 0.5, 7).unwrap();
        let count = |label: bool, split: Split| s.iter().filter(|x| x.label == label && x.split == split).count();
        assert_eq!(count(true, Split::Train), 5);
        assert_eq!(count(true, Split::Test), 5);
        assert_eq!(count(false, Split::Train), 5);
        assert_eq!(count(false, Split::Test), 5);
        assert_eq!(s, split_samples(&g, &pos, 0.5, 7).unwrap());
        assert_ne!(s, split_samples(&g, &pos, 0.5, 8).unwrap());
    }

    #[test]
    fn split_errors_when_graph_is_saturated() {
        let g = HeteroGraph::new(2, 0, vec![(0, 1)], vec![], vec![]).unwrap();
        let pos = vec![TrustSample::positive(0, 1)];
        assert!(split_samples(&g, &pos, 0.5, 0).is_ok());
        let g = HeteroGraph::new(2, 0, vec![(0, 1), (1, 0)], vec![], vec![]).unwrap();
        let pos = vec![TrustSample::positive(0, 1), TrustSample::positive(1, 0)];
        assert!(matches!(
            split_samples(&g, &pos, 0.5, 0),
            Err(Error::InsufficientNegatives { .. })
        ));
        assert!(split_samples(&g, &pos, 1.0, 0).is_err());
    }
}
