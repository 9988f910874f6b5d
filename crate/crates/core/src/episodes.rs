//! Meta-task construction: language subsets for support and query, then
//! example draws by one of three strategies (random, covering, parallel).

use std::collections::{BTreeSet, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Bags;
use crate::error::{Error, Result};
use crate::example::Example;
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Random,
    Covering,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "covering" => Ok(Strategy::Covering),
            other => Err(Error::config("strategy", format!("expected `random` or `covering`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Support,
    Query,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    /// Per-role overrides of `strategy`.
    pub support_strategy: Option<Strategy>,
    pub query_strategy: Option<Strategy>,
    pub parallel: bool,
    pub support_subset: usize,
    pub query_subset: usize,
    pub k: usize,
    pub n: usize,
    /// Languages that feed the support set.
    pub support_pool: Vec<String>,
    /// Languages that feed the query set.
    pub query_pool: Vec<String>,
    /// Support languages are forced equal to the query languages, both drawn
    /// from `query_pool`; `support_pool` is ignored.
    pub tied: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            strategy: Strategy::Random,
            support_strategy: None,
            query_strategy: None,
            parallel: false,
            support_subset: 1,
            query_subset: 1,
            k: 8,
            n: 8,
            support_pool: vec!["en".into()],
            query_pool: Vec::new(),
            tied: false,
        }
    }
}

impl SamplerConfig {
    pub fn strategy_for(&self, role: Role) -> Strategy {
        match role {
            Role::Support => self.support_strategy.unwrap_or(self.strategy),
            Role::Query => self.query_strategy.unwrap_or(self.strategy),
        }
    }

    fn effective_support_pool(&self) -> &[String] {
        if self.tied {
            &self.query_pool
        } else {
            &self.support_pool
        }
    }

    pub fn validate(&self, bags: &Bags) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::config("k", "support and query sizes must be >= 1"));
        }
        if self.parallel && self.k != self.n {
            return Err(Error::config(
                "parallel",
                format!("parallel episodes need k = n, got {} and {}", self.k, self.n),
            ));
        }
        if self.tied && self.support_subset != self.query_subset {
            return Err(Error::config("support_subset", "tied languages need equal subset sizes"));
        }
        for (field, pool, size) in [
            ("support_pool", self.effective_support_pool(), self.support_subset),
            ("query_pool", &self.query_pool[..], self.query_subset),
        ] {
            if pool.is_empty() {
                return Err(Error::config(field, "language pool is empty"));
            }
            if size == 0 || size > pool.len() {
                return Err(Error::config(field, format!("subset size {size} outside 1..={}", pool.len())));
            }
            if let Some(missing) = pool.iter().find(|l| !bags.contains_key(*l)) {
                return Err(Error::config(field, format!("no data for language `{missing}`")));
            }
        }
        if self.parallel {
            for lang in self.effective_support_pool().iter().chain(&self.query_pool) {
                if !bags[lang].has_latent_ids() {
                    return Err(Error::config("parallel", format!("language `{lang}` has no latent ids")));
                }
            }
        }
        Ok(())
    }
}

/// An example tagged with the language bag it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub language: String,
    pub example: Example,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub support: Vec<Sampled>,
    pub query: Vec<Sampled>,
    pub support_languages: Vec<String>,
    pub query_languages: Vec<String>,
}

impl Episode {
    pub fn support_examples(&self) -> Vec<&Example> {
        self.support.iter().map(|s| &s.example).collect()
    }

    pub fn query_examples(&self) -> Vec<&Example> {
        self.query.iter().map(|s| &s.example).collect()
    }
}

fn choose_subset<R: Rng>(pool: &[String], size: usize, rng: &mut R) -> Result<Vec<String>> {
    if size > pool.len() {
        return Err(Error::Sampling(format!("subset size {size} exceeds pool of {}", pool.len())));
    }
    let mut chosen: Vec<String> = pool.choose_multiple(rng, size).cloned().collect();
    chosen.sort();
    Ok(chosen)
}

/// Uniform without-replacement subsets from each pool, returned sorted.
pub fn sample_language_subsets<R: Rng>(
    support_pool: &[String],
    query_pool: &[String],
    sizes: (usize, usize),
    rng: &mut R,
) -> Result<(Vec<String>, Vec<String>)> {
    if support_pool.is_empty() || query_pool.is_empty() {
        return Err(Error::Sampling("language pools must be nonempty".into()));
    }
    Ok((choose_subset(support_pool, sizes.0, rng)?, choose_subset(query_pool, sizes.1, rng)?))
}

/// `(language, index)` pairs of the union of `langs`' bags, in language order.
fn union_pool(bags: &Bags, langs: &[String]) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for l in langs {
        let bag = bags.get(l).ok_or_else(|| Error::Sampling(format!("no bag for language `{l}`")))?;
        out.extend((0..bag.len()).map(|i| (l.clone(), i)));
    }
    Ok(out)
}

fn materialize(bags: &Bags, picks: &[(String, usize)]) -> Vec<Sampled> {
    picks.iter().map(|(l, i)| Sampled { language: l.clone(), example: bags[l].examples[*i].clone() }).collect()
}

fn draw<R: Rng>(bags: &Bags, langs: &[String], count: usize, rng: &mut R) -> Result<Vec<Sampled>> {
    let pool = union_pool(bags, langs)?;
    if pool.len() < count {
        return Err(Error::Sampling(format!("need {count} examples from {langs:?} but only {} available", pool.len())));
    }
    let picks: Vec<(String, usize)> = pool.choose_multiple(rng, count).cloned().collect();
    Ok(materialize(bags, &picks))
}

/// Without-replacement uniform draw of `k` support examples from the union
/// of the support bags and `n` query examples from the union of the query bags.
pub fn sample_episode_random<R: Rng>(
    bags: &Bags,
    subsets: &(Vec<String>, Vec<String>),
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Episode> {
    Ok(Episode {
        support: draw(bags, &subsets.0, k, rng)?,
        query: draw(bags, &subsets.1, n, rng)?,
        support_languages: subsets.0.clone(),
        query_languages: subsets.1.clone(),
    })
}

/// A shuffled pass over `0..len` served in consecutive chunks. A pass never
/// spills into the next: its last chunk may be short.
#[derive(Clone, Debug)]
pub struct Cover {
    order: Vec<usize>,
    pos: usize,
    passes: u64,
}

impl Cover {
    pub fn new(len: usize) -> Self {
        Cover { order: (0..len).collect(), pos: len, passes: 0 }
    }

    /// Completed-or-started passes so far.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn next_chunk<R: Rng>(&mut self, size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.order.is_empty() || size == 0 {
            return Err(Error::Sampling("covering needs a nonempty pool and chunk size".into()));
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
            self.passes += 1;
            if self.passes > 1 {
                log::debug!("covering pass {} begins ({} items)", self.passes, self.order.len());
            }
        }
        let end = (self.pos + size).min(self.order.len());
        let chunk = self.order[self.pos..end].to_vec();
        self.pos = end;
        Ok(chunk)
    }
}

/// Covering draws for plain (non-parallel) episodes. One [`Cover`] per
/// role and language subset, so differently sized pools advance independently.
#[derive(Clone, Debug, Default)]
pub struct CoveringSampler {
    covers: HashMap<(Role, Vec<String>), Cover>,
}

impl CoveringSampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn draw<R: Rng>(
        &mut self,
        bags: &Bags,
        role: Role,
        langs: &[String],
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<Sampled>> {
        let pool = union_pool(bags, langs)?;
        if pool.len() < size {
            return Err(Error::Sampling(format!(
                "need {size} examples from {langs:?} but only {} available",
                pool.len()
            )));
        }
        let cover = self.covers.entry((role, langs.to_vec())).or_insert_with(|| Cover::new(pool.len()));
        let chunk = cover.next_chunk(size, rng)?;
        Ok(materialize(bags, &chunk.iter().map(|&i| pool[i].clone()).collect::<Vec<_>>()))
    }

    pub fn episode<R: Rng>(
        &mut self,
        bags: &Bags,
        subsets: &(Vec<String>, Vec<String>),
        k: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Episode> {
        Ok(Episode {
            support: self.draw(bags, Role::Support, &subsets.0, k, rng)?,
            query: self.draw(bags, Role::Query, &subsets.1, n, rng)?,
            support_languages: subsets.0.clone(),
            query_languages: subsets.1.clone(),
        })
    }

    pub fn passes(&self, role: Role, langs: &[String]) -> u64 {
        self.covers.get(&(role, langs.to_vec())).map_or(0, Cover::passes)
    }
}

/// Per-bag `latent_id → index` lookup.
#[derive(Clone, Debug, Default)]
pub struct LatentIndex {
    by_lang: HashMap<String, HashMap<u64, usize>>,
}

impl LatentIndex {
    pub fn build(bags: &Bags) -> Result<Self> {
        let mut by_lang = HashMap::new();
        for (lang, bag) in bags {
            let mut ids = HashMap::with_capacity(bag.len());
            for (i, ex) in bag.examples.iter().enumerate() {
                if let Some(id) = ex.latent_id {
                    if ids.insert(id, i).is_some() {
                        return Err(Error::Sampling(format!("latent id {id} repeats in `{lang}`")));
                    }
                }
            }
            by_lang.insert(lang.clone(), ids);
        }
        Ok(LatentIndex { by_lang })
    }

    /// Sorted latent ids present in every language of `langs`.
    pub fn shared_ids(&self, langs: &[String]) -> Result<Vec<u64>> {
        let mut shared: Option<BTreeSet<u64>> = None;
        for l in langs {
            let ids = self.by_lang.get(l).ok_or_else(|| Error::Sampling(format!("no bag for language `{l}`")))?;
            let set: BTreeSet<u64> = ids.keys().copied().collect();
            shared = Some(match shared {
                Some(s) => s.intersection(&set).copied().collect(),
                None => set,
            });
        }
        Ok(shared.unwrap_or_default().into_iter().collect())
    }

    fn lookup(&self, lang: &str, id: u64) -> Result<usize> {
        self.by_lang
            .get(lang)
            .and_then(|m| m.get(&id))
            .copied()
            .ok_or_else(|| Error::Sampling(format!("latent id {id} missing from `{lang}`")))
    }
}

fn all_languages(subsets: &(Vec<String>, Vec<String>)) -> Vec<String> {
    let set: BTreeSet<&String> = subsets.0.iter().chain(&subsets.1).collect();
    set.into_iter().cloned().collect()
}

/// Renders each id in a uniformly chosen language of `langs`.
fn render_ids<R: Rng>(
    bags: &Bags,
    index: &LatentIndex,
    langs: &[String],
    ids: &[u64],
    rng: &mut R,
) -> Result<Vec<Sampled>> {
    ids.iter()
        .map(|&id| {
            let lang = langs.choose(rng).expect("nonempty subset");
            let i = index.lookup(lang, id)?;
            Ok(Sampled { language: lang.clone(), example: bags[lang].examples[i].clone() })
        })
        .collect()
}

fn parallel_from_ids<R: Rng>(
    bags: &Bags,
    index: &LatentIndex,
    subsets: &(Vec<String>, Vec<String>),
    ids: &[u64],
    rng: &mut R,
) -> Result<Episode> {
    Ok(Episode {
        support: render_ids(bags, index, &subsets.0, ids, rng)?,
        query: render_ids(bags, index, &subsets.1, ids, rng)?,
        support_languages: subsets.0.clone(),
        query_languages: subsets.1.clone(),
    })
}

/// Draws `k` latent ids shared by every chosen language; support and query
/// are the same ids rendered in support and query languages respectively.
pub fn sample_episode_parallel<R: Rng>(
    bags: &Bags,
    index: &LatentIndex,
    subsets: &(Vec<String>, Vec<String>),
    k: usize,
    rng: &mut R,
) -> Result<Episode> {
    let shared = index.shared_ids(&all_languages(subsets))?;
    if shared.len() < k {
        return Err(Error::Sampling(format!(
            "parallel episode needs {k} aligned latent ids, languages {:?} share {}",
            all_languages(subsets),
            shared.len()
        )));
    }
    let ids: Vec<u64> = shared.choose_multiple(rng, k).copied().collect();
    parallel_from_ids(bags, index, subsets, &ids, rng)
}

/// Stateful episode stream for one training run.
#[derive(Debug)]
pub struct EpisodeSampler<'a> {
    bags: &'a Bags,
    config: SamplerConfig,
    rng: ChaCha8Rng,
    covering: CoveringSampler,
    parallel_covers: HashMap<Vec<String>, (Vec<u64>, Cover)>,
    index: Option<LatentIndex>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(bags: &'a Bags, config: SamplerConfig, seed: u64) -> Result<Self> {
        config.validate(bags)?;
        let index = if config.parallel { Some(LatentIndex::build(bags)?) } else { None };
        Ok(EpisodeSampler {
            bags,
            config,
            rng: seed::rng(seed),
            covering: CoveringSampler::new(),
            parallel_covers: HashMap::new(),
            index,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn next_episode(&mut self) -> Result<Episode> {
        let cfg = &self.config;
        let subsets = if cfg.tied {
            let langs = choose_subset(&cfg.query_pool, cfg.query_subset, &mut self.rng)?;
            (langs.clone(), langs)
        } else {
            sample_language_subsets(
                &cfg.support_pool,
                &cfg.query_pool,
                (cfg.support_subset, cfg.query_subset),
                &mut self.rng,
            )?
        };
        if let Some(index) = &self.index {
            if cfg.strategy == Strategy::Random {
                return sample_episode_parallel(self.bags, index, &subsets, cfg.k, &mut self.rng);
            }
            let key = all_languages(&subsets);
            if !self.parallel_covers.contains_key(&key) {
                let ids = index.shared_ids(&key)?;
                if ids.len() < cfg.k {
                    return Err(Error::Sampling(format!(
                        "parallel episode needs {} aligned latent ids, languages {key:?} share {}",
                        cfg.k,
                        ids.len()
                    )));
                }
                let cover = Cover::new(ids.len());
                self.parallel_covers.insert(key.clone(), (ids, cover));
            }
            let (ids, cover) = self.parallel_covers.get_mut(&key).expect("inserted above");
            let chunk: Vec<u64> = cover.next_chunk(cfg.k, &mut self.rng)?.into_iter().map(|i| ids[i]).collect();
            return parallel_from_ids(self.bags, index, &subsets, &chunk, &mut self.rng);
        }
        let mut pick = |role: Role, langs: &[String], size: usize| match cfg.strategy_for(role) {
            Strategy::Random => draw(self.bags, langs, size, &mut self.rng),
            Strategy::Covering => self.covering.draw(self.bags, role, langs, size, &mut self.rng),
        };
        let support = pick(Role::Support, &subsets.0, cfg.k)?;
        let query = pick(Role::Query, &subsets.1, cfg.n)?;
        Ok(Episode { support, query, support_languages: subsets.0, query_languages: subsets.1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LanguageBag, Split};
    use crate::example::{Input, Label};

    fn bag(lang: &str, n: usize, id_offset: u64) -> LanguageBag {
        LanguageBag {
            language: lang.into(),
            split: Split::Dev,
            examples: (0..n)
                .map(|i| Example {
                    x: Input::Features(vec![i as f64]),
                    y: Label::Class(i % 3),
                    latent_id: Some(id_offset + i as u64),
                })
                .collect(),
        }
    }

    fn bags(specs: &[(&str, usize)]) -> Bags {
        specs.iter().map(|(l, n)| (l.to_string(), bag(l, *n, 0))).collect()
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn subsets_forced_and_errors() {
        let mut rng = seed::rng(1);
        let (a, b) = sample_language_subsets(&s(&["en"]), &s(&["hi"]), (1, 1), &mut rng).unwrap();
        assert_eq!((a, b), (s(&["en"]), s(&["hi"])));
        assert!(sample_language_subsets(&s(&["en"]), &s(&["hi"]), (2, 1), &mut rng).is_err());
        assert!(sample_language_subsets(&[], &s(&["hi"]), (1, 1), &mut rng).is_err());
    }

    #[test]
    fn random_whole_bag_and_shortage() {
        let b = bags(&[("en", 8), ("hi", 20)]);
        let subsets = (s(&["en"]), s(&["hi"]));
        let mut rng = seed::rng(2);
        let ep = sample_episode_random(&b, &subsets, 8, 8, &mut rng).unwrap();
        let mut ids: Vec<u64> = ep.support.iter().map(|x| x.example.latent_id.unwrap()).collect();
        ids.sort();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
        assert!(ep.query.iter().all(|x| x.language == "hi"));
        assert!(sample_episode_random(&b, &subsets, 9, 8, &mut rng).is_err());
    }

    #[test]
    fn random_draw_frequencies_are_uniform() {
        let b = bags(&[("en", 10)]);
        let subsets = (s(&["en"]), s(&["en"]));
        let mut rng = seed::rng(3);
        let mut counts = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            let ep = sample_episode_random(&b, &subsets, 1, 1, &mut rng).unwrap();
            counts[ep.support[0].example.latent_id.unwrap() as usize] += 1;
        }
        let p: f64 = 0.1;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn covering_chunks_and_passes() {
        let mut cover = Cover::new(10);
        let mut rng = seed::rng(4);
        let sizes: Vec<usize> = (0..3).map(|_| cover.next_chunk(4, &mut rng).unwrap().len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut c = Cover::new(10);
        let first: Vec<usize> = (0..3).flat_map(|_| c.next_chunk(4, &mut rng).unwrap()).collect();
        let second: Vec<usize> = (0..3).flat_map(|_| c.next_chunk(4, &mut rng).unwrap()).collect();
        let mut seen = [0usize; 10];
        for &i in first.iter().chain(&second) {
            seen[i] += 1;
        }
        assert_eq!(seen, [2; 10]);
        assert_ne!(first, second);
        assert_eq!(c.passes(), 2);
    }

    #[test]
    fn parallel_episodes_are_translations() {
        let b: Bags = [("en", 0), ("hi", 0), ("de", 0)].iter().map(|(l, o)| (l.to_string(), bag(l, 50, *o))).collect();
        let index = LatentIndex::build(&b).unwrap();
        let subsets = (s(&["en"]), s(&["de", "hi"]));
        let mut rng = seed::rng(5);
        let ep = sample_episode_parallel(&b, &index, &subsets, 8, &mut rng).unwrap();
        for (a, q) in ep.support.iter().zip(&ep.query) {
            assert_eq!(a.example.latent_id, q.example.latent_id);
            assert_eq!(a.example.y, q.example.y);
        }
        // misaligned bags share nothing
        let mut b2 = b.clone();
        b2.insert("zh".into(), bag("zh", 50, 1000));
        let index = LatentIndex::build(&b2).unwrap();
        let err = sample_episode_parallel(&b2, &index, &(s(&["en"]), s(&["zh"])), 8, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }

    #[test]
    fn sampler_config_validation() {
        let b = bags(&[("en", 20), ("hi", 20)]);
        let ok = SamplerConfig { query_pool: s(&["hi"]), ..SamplerConfig::default() };
        assert!(EpisodeSampler::new(&b, ok.clone(), 0).is_ok());
        let bad = SamplerConfig { parallel: true, n: 4, ..ok.clone() };
        assert!(EpisodeSampler::new(&b, bad, 0).is_err());
        let bad = SamplerConfig { query_pool: s(&["xx"]), ..ok.clone() };
        assert!(EpisodeSampler::new(&b, bad, 0).is_err());
        let bad = SamplerConfig { query_subset: 2, ..ok };
        assert!(EpisodeSampler::new(&b, bad, 0).is_err());
    }

    #[test]
    fn tied_sampler_uses_same_languages() {
        let b = bags(&[("en", 20), ("hi", 20), ("de", 20)]);
        let cfg = SamplerConfig { query_pool: s(&["hi", "de"]), tied: true, ..SamplerConfig::default() };
        let mut sampler = EpisodeSampler::new(&b, cfg, 9).unwrap();
        for _ in 0..20 {
            let ep = sampler.next_episode().unwrap();
            assert_eq!(ep.support_languages, ep.query_languages);
            assert!(ep.support.iter().all(|x| ep.support_languages.contains(&x.language)));
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let b = bags(&[("en", 30), ("hi", 30), ("de", 30)]);
        for (strategy, parallel) in [(Strategy::Random, false), (Strategy::Covering, false), (Strategy::Covering, true)]
        {
            let cfg = SamplerConfig { strategy, parallel, query_pool: s(&["hi", "de"]), ..SamplerConfig::default() };
            let run = |seed| {
                let mut sm = EpisodeSampler::new(&b, cfg.clone(), seed).unwrap();
                (0..10).map(|_| sm.next_episode().unwrap()).collect::<Vec<_>>()
            };
            assert_eq!(run(1), run(1));
            assert_ne!(run(1), run(2));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn episode_invariants(
                sizes in proptest::collection::vec(8usize..40, 3),
                k in 1usize..8,
                n in 1usize..8,
                covering in any::<bool>(),
                parallel in any::<bool>(),
                seed in 0u64..1000,
            ) {
                let b: Bags = ["en", "hi", "de"].iter().zip(&sizes).map(|(l, &n)| (l.to_string(), bag(l, n, 0))).collect();
                let cfg = SamplerConfig {
                    strategy: if covering { super::Strategy::Covering } else { super::Strategy::Random },
                    parallel,
                    k,
                    n: if parallel { k } else { n },
                    query_pool: s(&["hi", "de"]),
                    query_subset: 1 + (seed as usize % 2),
                    ..SamplerConfig::default()
                };
                let mut sampler = EpisodeSampler::new(&b, cfg.clone(), seed).unwrap();
                for _ in 0..10 {
                    let ep = sampler.next_episode().unwrap();
                    prop_assert!(!ep.support.is_empty() && ep.support.len() <= cfg.k);
                    prop_assert!(!ep.query.is_empty() && ep.query.len() <= cfg.n);
                    if !covering {
                        prop_assert_eq!(ep.support.len(), cfg.k);
                        prop_assert_eq!(ep.query.len(), cfg.n);
                    }
                    prop_assert!(ep.support.iter().all(|x| ep.support_languages.contains(&x.language)));
                    prop_assert!(ep.query.iter().all(|x| ep.query_languages.contains(&x.language)));
                }
            }
        }
    }
}
