//! Per-customer feature blocks: mean topic distribution over purchased
//! books, mean book-type vector, and a one-hot demographic code.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{CustomerProfileRecord, Gender};

/// Age bucket lower bounds; the last bucket is open-ended.
pub const AGE_BUCKETS: [u32; 4] = [0, 20, 40, 60];

/// Mean of the purchased books' topic distributions. An empty purchase list
/// gives the uniform distribution.
pub fn build_topic_preference(purchases: &[&[f64]], num_topics: usize) -> Vec<f64> {
    if purchases.is_empty() {
        return vec![1.0 / num_topics as f64; num_topics];
    }
    mean(purchases, num_topics)
}

/// Mean of the purchased books' type vectors. An empty purchase list gives
/// the zero vector.
pub fn build_type_preference(purchases: &[&[f64]], dim: usize) -> Vec<f64> {
    if purchases.is_empty() {
        return vec![0.0; dim];
    }
    mean(purchases, dim)
}

fn mean(rows: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for row in rows {
        debug_assert_eq!(row.len(), dim);
        for (a, x) in acc.iter_mut().zip(row.iter()) {
            *a += x;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Category layout for the demographic one-hot blocks. Each categorical block
/// lists the known values in sorted order followed by an "unknown" slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DemographicRegistry {
    pub card_types: Vec<String>,
    pub contacts: Vec<String>,
}

/// Active category index inside each of the four blocks:
/// card type, age bucket, gender, contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemographicCode(pub [u32; 4]);

impl DemographicCode {
    /// Number of blocks whose active category matches.
    pub fn matches(&self, other: &DemographicCode) -> usize {
        self.0.iter().zip(other.0.iter()).filter(|(a, b)| a == b).count()
    }
}

impl DemographicRegistry {
    pub fn from_profiles<'a, I>(profiles: I) -> Self
    where
        I: IntoIterator<Item = &'a CustomerProfileRecord>,
    {
        let mut cards = BTreeSet::new();
        let mut contacts = BTreeSet::new();
        for p in profiles {
            if let Some(c) = &p.card_type {
                cards.insert(c.clone());
            }
            if let Some(c) = &p.contact {
                contacts.insert(c.clone());
            }
        }
        DemographicRegistry {
            card_types: cards.into_iter().collect(),
            contacts: contacts.into_iter().collect(),
        }
    }

    /// Sizes of the four blocks, unknown slots included.
    pub fn block_sizes(&self) -> [usize; 4] {
        [
            self.card_types.len() + 1,
            AGE_BUCKETS.len() + 1,
            3,
            self.contacts.len() + 1,
        ]
    }

    pub fn width(&self) -> usize {
        self.block_sizes().iter().sum()
    }

    pub fn encode(&self, profile: &CustomerProfileRecord) -> DemographicCode {
        let category = |known: &[String], value: &Option<String>| -> u32 {
            value
                .as_ref()
                .and_then(|v| known.binary_search(v).ok())
                .unwrap_or(known.len()) as u32
        };
        let age = match profile.age {
            Some(a) => AGE_BUCKETS
                .iter()
                .rposition(|&lo| a >= lo)
                .expect("bucket 0 starts at 0") as u32,
            None => AGE_BUCKETS.len() as u32,
        };
        let gender = match profile.gender {
            Gender::Male => 0,
            Gender::Female => 1,
            Gender::Unknown => 2,
        };
        DemographicCode([
            category(&self.card_types, &profile.card_type),
            age,
            gender,
            category(&self.contacts, &profile.contact),
        ])
    }

    /// Concatenated one-hot vector for a code.
    pub fn one_hot(&self, code: &DemographicCode) -> Vec<f64> {
        let sizes = self.block_sizes();
        let mut v = vec![0.0; self.width()];
        let mut offset = 0;
        for (size, &active) in sizes.iter().zip(code.0.iter()) {
            v[offset + active as usize] = 1.0;
            offset += size;
        }
        v
    }

    pub fn encode_one_hot(&self, profile: &CustomerProfileRecord) -> Vec<f64> {
        self.one_hot(&self.encode(profile))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerFeatureSet {
    pub customer_id: String,
    pub topic_pref: Vec<f64>,
    pub type_pref: Vec<f64>,
    pub demographics: DemographicCode,
    pub purchase_count: usize,
}

/// Lookups the feature builder needs for each purchased book.
pub struct BookFeatures<'a> {
    pub topics: &'a BTreeMap<String, Vec<f64>>,
    pub type_vectors: &'a BTreeMap<String, Vec<f64>>,
    pub num_topics: usize,
    pub dim: usize,
}

/// Builds one feature set per customer, in ascending customer-id order.
/// Purchases of books without features are skipped.
pub fn build_feature_sets(
    customers: &BTreeSet<String>,
    purchases: &BTreeMap<String, Vec<String>>,
    profiles: &BTreeMap<String, CustomerProfileRecord>,
    registry: &DemographicRegistry,
    books: &BookFeatures<'_>,
) -> Vec<CustomerFeatureSet> {
    let empty = Vec::new();
    customers
        .iter()
        .map(|c| {
            let bought = purchases.get(c).unwrap_or(&empty);
            let topics: Vec<&[f64]> = bought
                .iter()
                .filter_map(|b| books.topics.get(b).map(Vec::as_slice))
                .collect();
            let types: Vec<&[f64]> = bought
                .iter()
                .filter_map(|b| books.type_vectors.get(b).map(Vec::as_slice))
                .collect();
            let profile = profiles
                .get(c)
                .cloned()
                .unwrap_or_else(|| CustomerProfileRecord::unknown(c));
            CustomerFeatureSet {
                customer_id: c.clone(),
                topic_pref: build_topic_preference(&topics, books.num_topics),
                type_pref: build_type_preference(&types, books.dim),
                demographics: registry.encode(&profile),
                purchase_count: topics.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(card: Option<&str>, age: Option<u32>, gender: Gender, contact: Option<&str>) -> CustomerProfileRecord {
        CustomerProfileRecord {
            customer_id: "c".into(),
            card_type: card.map(String::from),
            age,
            gender,
            contact: contact.map(String::from),
        }
    }

    #[test]
    fn topic_mean_examples() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert_eq!(build_topic_preference(&[&a, &b], 2), vec![0.5, 0.5]);
        assert_eq!(build_topic_preference(&[&a], 2), vec![1.0, 0.0]);
        assert_eq!(build_topic_preference(&[], 4), vec![0.25; 4]);
    }

    #[test]
    fn duplicate_purchase_counts_twice() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let p = build_topic_preference(&[&a, &a, &b], 2);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn type_mean_examples() {
        let a = [2.0, 0.0];
        let b = [0.0, 2.0];
        assert_eq!(build_type_preference(&[&a, &b], 2), vec![1.0, 1.0]);
        let t = [0.3, -0.7, 0.1];
        let m = build_type_preference(&[&t, &t, &t], 3);
        assert!(m.iter().zip(&t).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(build_type_preference(&[], 3), vec![0.0; 3]);
    }

    fn registry() -> DemographicRegistry {
        DemographicRegistry {
            card_types: vec!["gift".into(), "member".into()],
            contacts: vec!["email".into(), "phone".into()],
        }
    }

    #[test]
    fn age_buckets_are_half_open() {
        let r = registry();
        let age = |a| r.encode(&profile(None, Some(a), Gender::Unknown, None)).0[1];
        assert_eq!(age(0), 0);
        assert_eq!(age(19), 0);
        assert_eq!(age(20), 1);
        assert_eq!(age(35), 1);
        assert_eq!(age(40), 2);
        assert_eq!(age(60), 3);
        assert_eq!(age(120), 3);
        assert_eq!(r.encode(&profile(None, None, Gender::Unknown, None)).0[1], 4);
    }

    #[test]
    fn one_hot_layout() {
        let r = registry();
        let p = profile(Some("member"), Some(35), Gender::Female, None);
        let v = r.encode_one_hot(&p);
        // blocks: card 3, age 5, gender 3, contact 3
        assert_eq!(v.len(), 14);
        let active: Vec<usize> = v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(active, vec![1, 3 + 1, 8 + 1, 11 + 2]);
        // missing gender lands on the unknown slot
        let g = r.encode(&profile(None, None, Gender::Unknown, None));
        assert_eq!(g.0[2], 2);
        // unseen category maps to unknown
        let u = r.encode(&profile(Some("vip"), None, Gender::Male, Some("fax")));
        assert_eq!(u.0[0], 2);
        assert_eq!(u.0[3], 2);
    }

    #[test]
    fn registry_from_profiles_is_sorted() {
        let ps = [
            profile(Some("store"), None, Gender::Male, Some("phone")),
            profile(Some("gift"), None, Gender::Male, None),
            profile(None, None, Gender::Male, Some("email")),
        ];
        let r = DemographicRegistry::from_profiles(ps.iter());
        assert_eq!(r.card_types, ["gift", "store"]);
        assert_eq!(r.contacts, ["email", "phone"]);
    }

    #[test]
    fn feature_sets_for_cold_and_warm_customers() {
        let topics = BTreeMap::from([("b1".to_string(), vec![0.2, 0.8]), ("b2".to_string(), vec![0.6, 0.4])]);
        let types = BTreeMap::from([("b1".to_string(), vec![1.0]), ("b2".to_string(), vec![3.0])]);
        let books = BookFeatures {
            topics: &topics,
            type_vectors: &types,
            num_topics: 2,
            dim: 1,
        };
        let customers = BTreeSet::from(["a".to_string(), "z".to_string()]);
        let purchases = BTreeMap::from([("a".to_string(), vec!["b1".to_string(), "b2".to_string()])]);
        let sets = build_feature_sets(&customers, &purchases, &BTreeMap::new(), &registry(), &books);
        assert_eq!(sets[0].purchase_count, 2);
        assert!((sets[0].topic_pref[0] - 0.4).abs() < 1e-15);
        assert_eq!(sets[0].type_pref, vec![2.0]);
        assert_eq!(sets[1].topic_pref, vec![0.5, 0.5]);
        assert_eq!(sets[1].type_pref, vec![0.0]);
        assert_eq!(sets[1].demographics, DemographicCode([2, 4, 2, 2]));
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn topic_mean_stays_on_simplex_and_ignores_order(rows in prop::collection::vec(simplex(5), 1..10)) {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let p = build_topic_preference(&refs, 5);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut rev = refs.clone();
            rev.reverse();
            let q = build_topic_preference(&rev, 5);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn encoding_is_injective(
            a in (0usize..4, prop::option::of(0u32..150), 0usize..3, 0usize..4),
            b in (0usize..4, prop::option::of(0u32..150), 0usize..3, 0usize..4),
        ) {
            let r = registry();
            let cards = [Some("gift"), Some("member"), None, Some("other")];
            let genders = [Gender::Male, Gender::Female, Gender::Unknown];
            let contacts = [Some("email"), Some("phone"), None, Some("fax")];
            let pa = profile(cards[a.0], a.1, genders[a.2], contacts[a.3]);
            let pb = profile(cards[b.0], b.1, genders[b.2], contacts[b.3]);
            // registered view of a profile: unregistered values collapse to unknown
            let key = |c: usize, age: Option<u32>, g: usize, k: usize| {
                let bucket = age.map(|a| if a < 20 { 0 } else if a < 40 { 1 } else if a < 60 { 2 } else { 3 });
                (c.min(2), bucket, g, k.min(2))
            };
            let (va, vb) = (r.encode_one_hot(&pa), r.encode_one_hot(&pb));
            prop_assert_eq!(key(a.0, a.1, a.2, a.3) == key(b.0, b.1, b.2, b.3), va == vb);
            for v in [va, vb] {
                prop_assert_eq!(v.iter().sum::<f64>(), 4.0);
            }
        }
    }
}
