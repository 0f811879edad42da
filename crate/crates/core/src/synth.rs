//! Generated data for verification and smoke tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{Instance, PhenomenonLabel};
use crate::text::{Document, Sentence};

const TOY_WORDS: [&str; 12] = [
    "ann", "bob", "cat", "dog", "ran", "saw", "red", "big", "box", "sun", "hat", "map",
];
const TOY_PUNCT: [&str; 2] = [".", ","];

const NAMES: [&str; 40] = [
    "Anna", "Boris", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Irene", "Jonas", "Karla", "Leon", "Mona",
    "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tara", "Ulric", "Vera", "Walt", "Xenia", "Yusuf", "Zora",
    "Arlo", "Bea", "Cyril", "Dora", "Emil", "Fern", "Gus", "Hana", "Ivo", "Jade", "Kurt", "Lena", "Milo", "Nora",
];

const ROLES: [&str; 24] = [
    "baker", "captain", "doctor", "farmer", "gardener", "hunter", "judge", "knight", "lawyer", "miner", "nurse",
    "painter", "pilot", "poet", "priest", "sailor", "singer", "smith", "soldier", "tailor", "teacher", "trader",
    "weaver", "writer",
];

const PLACES: [&str; 10] = [
    "market", "harbor", "library", "station", "garden", "castle", "bridge", "tavern", "chapel", "square",
];

const THINGS: [&str; 10] = [
    "letter", "lantern", "basket", "ribbon", "compass", "ledger", "violin", "blanket", "kettle", "saddle",
];

const VERBS: [&str; 8] = [
    "greeted", "thanked", "called", "followed", "warned", "praised", "visited", "answered",
];

/// A small random instance (at most 20 tokens) whose answer occurs in the
/// context.
pub fn toy_instance<R: Rng>(rng: &mut R, id: impl Into<String>) -> Instance {
    let mut context = Vec::new();
    let sentences = rng.gen_range(2..=3);
    for _ in 0..sentences {
        let len = rng.gen_range(2..=4);
        let mut s: Sentence = (0..len)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    TOY_PUNCT[rng.gen_range(0..TOY_PUNCT.len())].to_string()
                } else {
                    TOY_WORDS[rng.gen_range(0..TOY_WORDS.len())].to_string()
                }
            })
            .collect();
        s.push(".".to_string());
        context.push(s);
    }
    let words: Vec<String> = context
        .iter()
        .flatten()
        .filter(|t| !TOY_PUNCT.contains(&t.as_str()))
        .cloned()
        .collect();
    if words.is_empty() {
        context[0][0] = TOY_WORDS[0].to_string();
    }
    let pool: Vec<&String> = context
        .iter()
        .flatten()
        .filter(|t| !TOY_PUNCT.contains(&t.as_str()))
        .collect();
    let answer = pool[rng.gen_range(0..pool.len())].clone();
    let mut target: Sentence = (0..rng.gen_range(1..=3))
        .map(|_| TOY_WORDS[rng.gen_range(0..TOY_WORDS.len())].to_string())
        .collect();
    target.push(answer);
    Instance::new(id, context, target).expect("toy instances are well formed")
}

pub fn toy_instances(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| toy_instance(&mut rng, format!("toy:{i}"))).collect()
}

fn words(s: &str) -> Sentence {
    s.split_whitespace().map(String::from).collect()
}

/// Name-selection stories: several people are introduced with a role, one
/// distractor is mentioned repeatedly, and the target sentence ends with
/// "the <role> <Name>" for a person introduced earlier with that role.
pub fn name_selection(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| name_selection_instance(&mut rng, format!("names:{i}")))
        .collect()
}

fn name_selection_instance<R: Rng>(rng: &mut R, id: String) -> Instance {
    let people: Vec<&str> = NAMES.choose_multiple(rng, 3).copied().collect();
    let roles: Vec<&str> = ROLES.choose_multiple(rng, 3).copied().collect();
    let place = PLACES.choose(rng).expect("non-empty");
    let thing = THINGS.choose(rng).expect("non-empty");
    let answer = rng.gen_range(0..3);
    let (a, b, c) = (people[0], people[1], people[2]);
    let (ra, rb, rc) = (roles[0], roles[1], roles[2]);

    let mut context = vec![
        words(&format!(
            "at the {place} the {ra} {a} met the {rb} {b} and the {rc} {c} ."
        )),
        words(&format!("{b} carried a {thing} while {c} watched the crowd .")),
        words(&format!("{b} asked {c} about the old {thing} .")),
        words(&format!("{c} told {b} a long story about the {place} .")),
    ];
    if rng.gen_bool(0.5) {
        context.push(words(&format!("then {b} laughed and {c} smiled at {a} .")));
    }
    // Keep the introduction first.
    context[1..].shuffle(rng);
    let (name, role) = (people[answer], roles[answer]);
    let verb = VERBS.choose(rng).expect("non-empty");
    let asker = people[(answer + 1) % 3];
    let target = words(&format!(
        "before leaving the {place} , {asker} {verb} the {role} {name}"
    ));
    let mut inst = Instance::new(id, context, target).expect("stories are well formed");
    inst.labels = Some(vec![PhenomenonLabel::SingleNameCue]);
    inst
}

/// Plain-text documents of long generated sentences, suitable as builder or
/// control-sampling input.
pub fn story_corpus(docs: usize, sentences_per_doc: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let cast: Vec<&str> = NAMES.choose_multiple(&mut rng, 4).copied().collect();
            let sentences = (0..sentences_per_doc)
                .map(|_| {
                    let who = cast.choose(&mut rng).expect("non-empty");
                    let whom = if rng.gen_bool(0.7) {
                        cast.choose(&mut rng).expect("non-empty")
                    } else {
                        NAMES.choose(&mut rng).expect("non-empty")
                    };
                    let role = ROLES.choose(&mut rng).expect("non-empty");
                    let place = PLACES.choose(&mut rng).expect("non-empty");
                    let thing = THINGS.choose(&mut rng).expect("non-empty");
                    let verb = VERBS.choose(&mut rng).expect("non-empty");
                    words(&format!(
                        "in the {place} the {role} {who} {verb} {whom} and took the {thing} ."
                    ))
                })
                .collect();
            Document {
                id: format!("story{d}"),
                sentences,
            }
        })
        .collect()
}
