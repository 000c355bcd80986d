//! Reference implementations, data generators and fixtures shared by the
//! integration tests. The reference implementations never call the library
//! code they are used to check.

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use cgintent::augment::{AugmentError, ParaphraseSet, ParaphraseSource, PROMPT_VERSION};
use cgintent::corpus::{LabeledDataset, LabeledUtterance, SplitTag, SplitTriple};
use cgintent::openset::{make_open_task, OpenTask, OpenTaskConfig};
use cgintent::simgraph::{PoolMode, PruneConfig, PruneReport, RemainingPools, StopRule};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// LCS by top-down memoised recursion over (i, j) suffixes.
pub fn lcs_memo<T: Eq>(a: &[T], b: &[T]) -> usize {
    fn go<T: Eq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Every sequence over `0..alphabet` of length `0..=max_len`, shortest first,
/// lexicographic within a length.
pub struct SeqUniverse {
    pub alphabet: u8,
    pub seqs: Vec<Vec<u8>>,
    offsets: Vec<usize>,
}

impl SeqUniverse {
    pub fn new(alphabet: u8, max_len: usize) -> Self {
        let mut seqs = Vec::new();
        let mut offsets = Vec::new();
        for len in 0..=max_len {
            offsets.push(seqs.len());
            let count = (alphabet as usize).pow(len as u32);
            for mut code in 0..count {
                let mut s = vec![0u8; len];
                for slot in s.iter_mut().rev() {
                    *slot = (code % alphabet as usize) as u8;
                    code /= alphabet as usize;
                }
                seqs.push(s);
            }
        }
        SeqUniverse {
            alphabet,
            seqs,
            offsets,
        }
    }

    pub fn index(&self, s: &[u8]) -> usize {
        let code = s
            .iter()
            .fold(0usize, |acc, &c| acc * self.alphabet as usize + c as usize);
        self.offsets[s.len()] + code
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }
}

fn subsequences(s: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    (0u32..1 << s.len()).map(move |mask| {
        s.iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &c)| c)
            .collect()
    })
}

/// LCS for every pair in a [`SeqUniverse`], defined as the length of the
/// longest sequence that both members contain as a subsequence. Subsequences
/// are enumerated exhaustively over all 2^n index masks.
pub struct BruteLcs {
    words: usize,
    /// `supersets[s]` has bit `b` set when sequence `s` is a subsequence of `b`.
    supersets: Vec<Vec<u64>>,
    /// Distinct subsequences of each sequence, grouped by length.
    subs_by_len: Vec<Vec<Vec<usize>>>,
}

impl BruteLcs {
    pub fn new(u: &SeqUniverse) -> Self {
        let n = u.len();
        let words = n.div_ceil(64);
        let mut supersets = vec![vec![0u64; words]; n];
        let mut subs_by_len = Vec::with_capacity(n);
        for (b, seq) in u.seqs.iter().enumerate() {
            let distinct: BTreeSet<usize> = subsequences(seq).map(|s| u.index(&s)).collect();
            let mut by_len = vec![Vec::new(); seq.len() + 1];
            for &s in &distinct {
                supersets[s][b / 64] |= 1 << (b % 64);
                by_len[u.seqs[s].len()].push(s);
            }
            subs_by_len.push(by_len);
        }
        BruteLcs {
            words,
            supersets,
            subs_by_len,
        }
    }

    /// LCS of sequence `a` against every sequence in the universe.
    pub fn row(&self, a: usize) -> Vec<u8> {
        let n = self.supersets.len();
        let mut best = vec![0u8; n];
        let mut covered = vec![0u64; self.words];
        for (len, subs) in self.subs_by_len[a].iter().enumerate().rev() {
            let mut level = vec![0u64; self.words];
            for &s in subs {
                for (l, w) in level.iter_mut().zip(&self.supersets[s]) {
                    *l |= w;
                }
            }
            for (w, (l, c)) in level.iter().zip(covered.iter_mut()).enumerate() {
                let mut fresh = l & !*c;
                *c |= l;
                while fresh != 0 {
                    let bit = fresh.trailing_zeros() as usize;
                    best[w * 64 + bit] = len as u8;
                    fresh &= fresh - 1;
                }
            }
        }
        best
    }
}

/// Straightforward pruning: rebuild every degree from the live edge list on
/// each step and scan all nodes for the maximum key.
pub fn naive_prune(
    edges: &[(String, String)],
    split_of: impl Fn(&str) -> SplitTag,
    config: &PruneConfig,
    initial: RemainingPools,
) -> PruneReport {
    let unique: BTreeSet<(String, String)> = edges.iter().cloned().collect();
    let mut live: Vec<(String, String)> = unique.into_iter().collect();
    let edges_initial = live.len();
    let mut pools = initial;
    let weight = |pools: &RemainingPools, split: SplitTag| -> u64 {
        (match (split, config.pool_mode) {
            (SplitTag::Train, _) => pools.train,
            (SplitTag::Dev, PoolMode::PerSplit) => pools.dev,
            (SplitTag::Test, PoolMode::PerSplit) => pools.test,
            (_, PoolMode::PerSide) => pools.dev + pools.test,
        }) as u64
    };
    let degrees = |live: &[(String, String)]| {
        let mut d: BTreeMap<String, usize> = BTreeMap::new();
        for (t, e) in live {
            *d.entry(t.clone()).or_default() += 1;
            *d.entry(e.clone()).or_default() += 1;
        }
        d
    };
    let max_eval = |d: &BTreeMap<String, usize>| {
        d.iter()
            .filter(|(id, _)| split_of(id) != SplitTag::Train)
            .map(|(_, &v)| v)
            .max()
            .unwrap_or(0)
    };

    let mut sequence = Vec::new();
    let (mut pt, mut pd, mut ps) = (Vec::new(), Vec::new(), Vec::new());
    loop {
        let d = degrees(&live);
        let stop = match config.stop_rule {
            StopRule::AllEdgesRemoved => live.is_empty(),
            StopRule::MaxEvalDegree { limit } => max_eval(&d) <= limit as usize,
        };
        if stop {
            break;
        }
        let mut best: Option<(u64, usize, bool, std::cmp::Reverse<String>)> = None;
        for (id, &deg) in &d {
            let split = split_of(id);
            let key = (
                deg as u64 * weight(&pools, split),
                deg,
                split != SplitTag::Train,
                std::cmp::Reverse(id.clone()),
            );
            if best.as_ref().is_none_or(|b| key > *b) {
                best = Some(key);
            }
        }
        let victim = best.unwrap().3 .0;
        live.retain(|(t, e)| *t != victim && *e != victim);
        let split = split_of(&victim);
        match split {
            SplitTag::Train => {
                pools.train -= 1;
                pt.push(victim.clone())
            }
            SplitTag::Dev => {
                pools.dev -= 1;
                pd.push(victim.clone())
            }
            SplitTag::Test => {
                pools.test -= 1;
                ps.push(victim.clone())
            }
        }
        sequence.push(victim);
    }
    let d = degrees(&live);
    PruneReport {
        config: *config,
        pruned_train_ids: pt,
        pruned_dev_ids: pd,
        pruned_test_ids: ps,
        iterations: sequence.len(),
        sequence,
        final_max_eval_degree: max_eval(&d),
        edges_initial,
        edges_final: live.len(),
        remaining_final: pools,
        train_emptied: initial.train > 0 && pools.train == 0,
    }
}

const WORDS: &[&str] = &[
    "card", "top", "up", "pending", "transfer", "account", "money", "refund", "cash", "atm", "fee", "charge", "why",
    "is", "my", "the", "not", "how", "do", "i", "can", "get", "still", "was", "declined", "payment", "exchange",
    "rate", "verify", "identity", "pin", "blocked", "lost", "stolen", "arrive", "when", "will", "wrong", "amount",
    "received",
];

/// A random sentence of `len` words drawn from a small banking vocabulary.
pub fn sentence(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rewrites about a third of the words of `s` at random.
pub fn perturb(rng: &mut impl Rng, s: &str) -> String {
    s.split(' ')
        .map(|w| {
            if rng.random_bool(0.3) {
                *WORDS.choose(rng).unwrap()
            } else {
                w
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A random triple with `n_train` training rows and `n_eval` rows split
/// evenly between dev and test, over `n_intents` intents. Some eval rows are
/// perturbed copies of training rows so the similarity graph is dense.
pub fn random_triple(seed: u64, n_train: usize, n_eval: usize, n_intents: usize) -> SplitTriple {
    let mut r = rng(seed);
    let intent = |r: &mut ChaCha8Rng| format!("intent_{:02}", r.random_range(0..n_intents));
    let train: Vec<(String, String)> = (0..n_train)
        .map(|_| {
            let len = r.random_range(4..12);
            (sentence(&mut r, len), intent(&mut r))
        })
        .collect();
    let mut eval = Vec::new();
    for _ in 0..n_eval {
        if r.random_bool(0.4) {
            let (text, label) = train.choose(&mut r).unwrap().clone();
            eval.push((perturb(&mut r, &text), label));
        } else {
            let len = r.random_range(4..12);
            eval.push((sentence(&mut r, len), intent(&mut r)));
        }
    }
    let dev = eval[..n_eval / 2].to_vec();
    let test = eval[n_eval / 2..].to_vec();
    SplitTriple::new(
        LabeledDataset::from_rows(SplitTag::Train, train).unwrap(),
        LabeledDataset::from_rows(SplitTag::Dev, dev).unwrap(),
        LabeledDataset::from_rows(SplitTag::Test, test).unwrap(),
    )
    .unwrap()
}

/// Random bipartite edges over at most `max_nodes` ids, with pools large
/// enough to cover every node plus a few isolated instances.
pub fn random_graph(seed: u64, max_nodes: usize) -> (Vec<(String, String)>, RemainingPools) {
    let mut r = rng(seed);
    let n_train = r.random_range(1..max_nodes / 2);
    let n_dev = r.random_range(0..max_nodes / 4);
    let n_test = r.random_range(1..max_nodes / 4);
    let density = r.random_range(0.005..0.08);
    let evals: Vec<String> = (0..n_dev)
        .map(|i| SplitTag::Dev.instance_id(i))
        .chain((0..n_test).map(|i| SplitTag::Test.instance_id(i)))
        .collect();
    let mut edges = Vec::new();
    for t in 0..n_train {
        for e in &evals {
            if r.random_bool(density) {
                edges.push((SplitTag::Train.instance_id(t), e.clone()));
            }
        }
    }
    let pools = RemainingPools::new(
        n_train + r.random_range(0..20),
        n_dev + r.random_range(0..10),
        n_test + r.random_range(0..10),
    );
    (edges, pools)
}

/// Node split from an id prefix.
pub fn split_of(id: &str) -> SplitTag {
    SplitTag::of_id(id).expect("generated ids carry a split prefix")
}

/// Paraphrases `text` as `text alt<i>` and records which ids were asked for.
#[derive(Default)]
pub struct EchoSource {
    pub requested: RefCell<Vec<Vec<String>>>,
}

impl ParaphraseSource for EchoSource {
    fn paraphrase(&self, instances: &[LabeledUtterance], k: usize) -> Result<Vec<ParaphraseSet>, AugmentError> {
        self.requested
            .borrow_mut()
            .push(instances.iter().map(|u| u.id.clone()).collect());
        Ok(instances
            .iter()
            .map(|u| ParaphraseSet {
                source_id: u.id.clone(),
                source_text: u.text.clone(),
                paraphrases: (0..k).map(|i| format!("{} alt{i}", u.text)).collect(),
                model: "echo".into(),
                prompt_version: PROMPT_VERSION.into(),
            })
            .collect())
    }
}

/// Four intents, half of them known, so train ids are not contiguous.
pub fn toy_task() -> OpenTask {
    let intents = ["balance", "block_card", "refund", "top_up"];
    let phrases = [
        "how do i check my {}",
        "i need help with {} today",
        "what about my {} please",
        "{} is not working",
    ];
    let rows = |offset: usize| -> Vec<(String, String)> {
        let mut rows = Vec::new();
        for (i, intent) in intents.iter().enumerate() {
            for (j, p) in phrases.iter().enumerate() {
                if !(i + j + offset).is_multiple_of(3) {
                    rows.push((p.replace("{}", &intent.replace('_', " ")), intent.to_string()));
                }
            }
        }
        rows
    };
    let split = SplitTriple::new(
        LabeledDataset::from_rows(SplitTag::Train, rows(0)).unwrap(),
        LabeledDataset::from_rows(SplitTag::Dev, rows(1)).unwrap(),
        LabeledDataset::from_rows(SplitTag::Test, rows(2)).unwrap(),
    )
    .unwrap();
    make_open_task(&split, &OpenTaskConfig::new(0.5, 0).unwrap()).unwrap()
}
