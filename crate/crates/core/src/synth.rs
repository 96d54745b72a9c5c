//! Seeded kinship world used as a bundled fixture corpus.
//!
//! Each family has two spouses and one or more children. The rule
//! `spouse(x,y) ∧ father(x,z) ⇒ mother(y,z)` holds for a child with
//! probability `mother_rate`; otherwise the child's mother is another person.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{EntityId, Triple, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct KinshipConfig {
    pub families: usize,
    pub max_children: usize,
    pub cities: usize,
    pub mother_rate: f64,
    /// Probability that a child is born in the family's home city.
    pub birthplace_rate: f64,
    /// Fraction of world triples withheld from the observed corpus.
    pub hidden_fraction: f64,
    pub seed: u64,
}

impl Default for KinshipConfig {
    fn default() -> Self {
        Self {
            families: 300,
            max_children: 4,
            cities: 40,
            mother_rate: 0.95,
            birthplace_rate: 0.8,
            hidden_fraction: 0.1,
            seed: 42,
        }
    }
}

/// The full world (the reference corpus) and the observed part of it.
#[derive(Clone, Debug)]
pub struct KinshipWorld {
    pub vocab: Vocabulary,
    pub world: Vec<Triple>,
    pub observed: Vec<Triple>,
}

struct Builder {
    vocab: Vocabulary,
    triples: Vec<Triple>,
    people: usize,
}

impl Builder {
    fn person(&mut self) -> EntityId {
        self.people += 1;
        self.vocab.intern_entity(&format!("person_{}", self.people))
    }

    fn add(&mut self, head: EntityId, relation: &str, tail: EntityId) {
        let r = self.vocab.intern_relation(relation);
        self.triples.push(Triple::new(head, r, tail));
    }
}

pub fn kinship_world(config: &KinshipConfig) -> KinshipWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut b = Builder { vocab: Vocabulary::default(), triples: Vec::new(), people: 0 };
    let cities: Vec<EntityId> = (0..config.cities.max(1)).map(|c| b.vocab.intern_entity(&format!("city_{c}"))).collect();

    for _ in 0..config.families {
        let (father, mother) = (b.person(), b.person());
        let home = *cities.choose(&mut rng).expect("at least one city");
        b.add(father, "spouse", mother);
        b.add(mother, "spouse", father);
        for parent in [father, mother] {
            b.add(parent, "livesIn", home);
            b.add(parent, "bornIn", *cities.choose(&mut rng).expect("at least one city"));
        }

        let count = rng.random_range(1..=config.max_children.max(1));
        let children: Vec<EntityId> = (0..count).map(|_| b.person()).collect();
        for &child in &children {
            let birth_mother = if rng.random_bool(config.mother_rate) {
                mother
            } else {
                let other = b.person();
                b.add(other, "bornIn", *cities.choose(&mut rng).expect("at least one city"));
                other
            };
            b.add(father, "father", child);
            b.add(child, "hasFather", father);
            b.add(birth_mother, "mother", child);
            b.add(child, "hasMother", birth_mother);
            b.add(father, "parent", child);
            b.add(birth_mother, "parent", child);
            let city = if rng.random_bool(config.birthplace_rate) {
                home
            } else {
                *cities.choose(&mut rng).expect("at least one city")
            };
            b.add(child, "bornIn", city);
        }
        for &x in &children {
            for &y in &children {
                if x != y {
                    b.add(x, "sibling", y);
                }
            }
        }
    }

    let observed = b.triples.iter().copied().filter(|_| !rng.random_bool(config.hidden_fraction)).collect();
    KinshipWorld { vocab: b.vocab, world: b.triples, observed }
}
