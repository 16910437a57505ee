//! Synthetic datasets in the on-disk formats the loaders accept.
//!
//! Users and objects are split into communities. Trust forms inside a
//! community at a per-community density, plus optional links across.
//! Users mostly comment on objects of their own community, and each
//! object's knowledge-graph triples name its community's category and
//! makers. Comment words come from a shared vocabulary, with an optional
//! share drawn from a per-community topic block.
//!
//! The default SIoT fixture keeps every source of community evidence weak
//! on its own: a handful of comments per user, a modest topic share and
//! sparse trust. Whether two users trust each other depends only on whether
//! they share a community, so a model has to pool comments, objects and
//! trust neighborhoods to tell.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiotFixture {
    pub num_users: usize,
    pub num_objects: usize,
    pub communities: usize,
    /// Within-community trust probability of each community, repeated
    /// cyclically when shorter than `communities`.
    pub trust_density: Vec<f64>,
    pub cross_trust: f64,
    /// Inclusive range of comments per user.
    pub comments_per_user: (usize, usize),
    /// Probability that a comment targets an object of the user's own
    /// community.
    pub locality: f64,
    pub words_per_comment: usize,
    pub vocabulary: usize,
    /// Probability that a comment word comes from the author's community
    /// topic block rather than the whole vocabulary.
    pub topic_rate: f64,
    /// Fraction of objects without a knowledge-graph entity.
    pub unaligned: f64,
    pub makers_per_community: usize,
    pub seed: u64,
}

impl Default for SiotFixture {
    /// Use with both comment filters at 0; users have 4 to 8 comments.
    fn default() -> Self {
        Self {
            num_users: 800,
            num_objects: 400,
            communities: 4,
            trust_density: vec![0.012],
            cross_trust: 0.0,
            comments_per_user: (4, 8),
            locality: 0.8,
            words_per_comment: 8,
            vocabulary: 400,
            topic_rate: 0.2,
            unaligned: 0.1,
            makers_per_community: 3,
            seed: 0,
        }
    }
}

impl SiotFixture {
    /// 50 users and 80 objects with comment counts straddling the default
    /// filter thresholds. Communities differ in trust density.
    pub fn small() -> Self {
        Self {
            num_users: 50,
            num_objects: 80,
            communities: 4,
            trust_density: vec![0.02, 0.05, 0.08, 0.12, 0.15, 0.18, 0.22, 0.25],
            cross_trust: 0.002,
            comments_per_user: (10, 24),
            topic_rate: 0.0,
            ..Self::default()
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `trust.csv`, `interactions.csv`, `objects.csv` and `triples.csv`
/// into `dir`.
pub fn write_siot_fixture(dir: &Path, spec: &SiotFixture) -> Result<()> {
    if spec.communities == 0 || spec.num_users < 2 || spec.num_objects == 0 || spec.vocabulary == 0 {
        return Err(Error::InvalidArgument(
            "fixture needs users, objects, communities and words".into(),
        ));
    }
    if spec.trust_density.is_empty() {
        return Err(Error::InvalidArgument(
            "fixture needs at least one trust density".into(),
        ));
    }
    let probs = [spec.cross_trust, spec.locality, spec.topic_rate, spec.unaligned];
    if probs
        .iter()
        .chain(&spec.trust_density)
        .any(|p| !(0.0..=1.0).contains(p))
    {
        return Err(Error::InvalidArgument(
            "fixture probabilities must lie in [0, 1]".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.communities;
    let user_comm: Vec<usize> = (0..spec.num_users).map(|u| u % c).collect();
    let object_comm: Vec<usize> = (0..spec.num_objects).map(|o| o % c).collect();
    let density = |k: usize| spec.trust_density[k % spec.trust_density.len()];

    let mut trust = String::from("trustor,trustee\n");
    for a in 0..spec.num_users {
        for b in 0..spec.num_users {
            if a == b {
                continue;
            }
            let p = if user_comm[a] == user_comm[b] {
                density(user_comm[a])
            } else {
                spec.cross_trust
            };
            if rng.random_bool(p) {
                let _ = writeln!(trust, "u{a},u{b}");
            }
        }
    }

    let by_comm: Vec<Vec<usize>> = (0..c)
        .map(|k| (0..spec.num_objects).filter(|&o| object_comm[o] == k).collect())
        .collect();
    let words: Vec<String> = (0..spec.vocabulary).map(|w| format!("w{w}")).collect();
    let mut interactions = String::from("user,object,comment\n");
    for u in 0..spec.num_users {
        let (lo, hi) = spec.comments_per_user;
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            let own = &by_comm[user_comm[u]];
            let o = if !own.is_empty() && rng.random_bool(spec.locality) {
                *own.choose(&mut rng).expect("nonempty")
            } else {
                rng.random_range(0..spec.num_objects)
            };
            let text: Vec<&str> = (0..spec.words_per_comment)
                .map(|_| {
                    let w = if rng.random_bool(spec.topic_rate) {
                        // block k holds the words with index ≡ k (mod c)
                        let per = spec.vocabulary.div_ceil(c);
                        (rng.random_range(0..per) * c + user_comm[u]).min(spec.vocabulary - 1)
                    } else {
                        rng.random_range(0..spec.vocabulary)
                    };
                    words[w].as_str()
                })
                .collect();
            let _ = writeln!(interactions, "u{u},o{o},{}", csv_field(&text.join(" ")));
        }
    }

    let mut objects = String::from("object,entity_name\n");
    let mut triples = String::from("head_entity,relation,tail_entity\n");
    for o in 0..spec.num_objects {
        if rng.random_bool(spec.unaligned) {
            let _ = writeln!(objects, "o{o},");
            continue;
        }
        let k = object_comm[o];
        let _ = writeln!(objects, "o{o},entity_{o}");
        let _ = writeln!(triples, "entity_{o},category,category_{k}");
        let maker = rng.random_range(0..spec.makers_per_community.max(1));
        let _ = writeln!(triples, "entity_{o},made_by,maker_{k}_{maker}");
    }
    for k in 0..c {
        let _ = writeln!(triples, "category_{k},related_to,category_{}", (k + 1) % c);
    }

    for (name, body) in [
        ("trust.csv", trust),
        ("interactions.csv", interactions),
        ("objects.csv", objects),
        ("triples.csv", triples),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilmTrustFixture {
    pub num_users: usize,
    pub num_objects: usize,
    pub communities: usize,
    pub trust_density: (f64, f64),
    pub cross_trust: f64,
    pub ratings_per_user: (usize, usize),
    pub locality: f64,
    pub seed: u64,
}

impl Default for FilmTrustFixture {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_objects: 150,
            communities: 6,
            trust_density: (0.02, 0.2),
            cross_trust: 0.002,
            ratings_per_user: (5, 25),
            locality: 0.8,
            seed: 0,
        }
    }
}

/// Writes `ratings.txt` and `trust.txt` with numeric ids starting at 1.
pub fn write_filmtrust_fixture(dir: &Path, spec: &FilmTrustFixture) -> Result<()> {
    if spec.communities == 0 || spec.num_users < 2 || spec.num_objects == 0 {
        return Err(Error::InvalidArgument(
            "fixture needs users, objects and communities".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.communities;
    let density = |k: usize| {
        let (lo, hi) = spec.trust_density;
        if c == 1 {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (c - 1) as f64
        }
    };
    let mut trust = String::new();
    for a in 0..spec.num_users {
        for b in 0..spec.num_users {
            if a == b {
                continue;
            }
            let p = if a % c == b % c {
                density(a % c)
            } else {
                spec.cross_trust
            };
            if rng.random_bool(p) {
                let _ = writeln!(trust, "{} {} 1", a + 1, b + 1);
            }
        }
    }
    let mut ratings = String::new();
    for u in 0..spec.num_users {
        let (lo, hi) = spec.ratings_per_user;
        let n = rng.random_range(lo..=hi);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..n {
            let o = if rng.random_bool(spec.locality) {
                let per = spec.num_objects.div_ceil(c);
                ((rng.random_range(0..per) * c) + u % c).min(spec.num_objects - 1)
            } else {
                rng.random_range(0..spec.num_objects)
            };
            if seen.insert(o) {
                let r = rng.random_range(1..=8) as f64 * 0.5;
                let _ = writeln!(ratings, "{} {} {r}", u + 1, o + 1);
            }
        }
    }
    for (name, body) in [("ratings.txt", ratings), ("trust.txt", trust)] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}
