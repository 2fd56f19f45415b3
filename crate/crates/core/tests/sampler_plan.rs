use evkit_core::sampler::{
    parse_plan, parse_sequence_index, plan_epoch, write_plan, EntryKind, SamplerError,
    SequenceIndex,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset() -> impl Strategy<Value = Vec<SequenceIndex>> {
    prop::collection::vec(1usize..60, 1..12).prop_map(|counts| {
        counts
            .into_iter()
            .enumerate()
            .map(|(i, n)| SequenceIndex::new(format!("s{i}"), n))
            .collect()
    })
}

proptest! {
    #[test]
    fn sequential_slots_cover_each_frame_once(
        data in dataset(),
        clip_len in 1usize..25,
        n_random in 0usize..4,
        n_seq in 1usize..5,
        seed in any::<u64>(),
    ) {
        let batches = plan_epoch(&data, clip_len, n_random, n_seq, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut covered: Vec<Vec<u32>> = data.iter().map(|s| vec![0; s.frame_count]).collect();
        let mut owner: Vec<Option<usize>> = vec![None; data.len()];
        for b in &batches {
            prop_assert_eq!(b.entries.len(), n_random + n_seq);
            for (slot, e) in b.entries.iter().enumerate() {
                prop_assert_eq!(e.slot, slot);
                prop_assert_eq!(e.len, clip_len);
                match e.kind {
                    EntryKind::Random => {
                        prop_assert!(slot < n_random);
                        prop_assert!(e.reset_memory);
                        let s = e.sequence.unwrap();
                        prop_assert!(e.start + e.valid_len <= data[s].frame_count);
                        prop_assert!(e.valid_len == clip_len || e.start == 0);
                    }
                    EntryKind::Sequential => {
                        let s = e.sequence.unwrap();
                        prop_assert!(slot >= n_random);
                        prop_assert_eq!(*owner[s].get_or_insert(slot), slot);
                        prop_assert_eq!(e.reset_memory, e.start == 0);
                        prop_assert_eq!(e.valid_len, clip_len.min(data[s].frame_count - e.start));
                        for f in &mut covered[s][e.start..e.start + e.valid_len] {
                            *f += 1;
                        }
                    }
                    EntryKind::Idle => {
                        prop_assert!(e.sequence.is_none() && e.valid_len == 0 && e.reset_memory);
                    }
                }
            }
        }
        prop_assert!(covered.iter().flatten().all(|&c| c == 1));
        // The last batch still has real work in some slot.
        let last = batches.last().unwrap();
        prop_assert!(last.entries.iter().any(|e| e.kind == EntryKind::Sequential));
    }

    #[test]
    fn plans_are_reproducible_and_serializable(data in dataset(), seed in any::<u64>()) {
        let a = plan_epoch(&data, 5, 2, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = plan_epoch(&data, 5, 2, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let text = write_plan(&a, &data);
        let records = parse_plan(&text).unwrap();
        prop_assert_eq!(records.len(), a.iter().map(|b| b.entries.len()).sum::<usize>());
        prop_assert_eq!(write_plan(&a, &data), text);
    }

    #[test]
    fn random_only_epoch_draws_the_dataset_size(data in dataset(), clip_len in 1usize..10, n_random in 1usize..5) {
        let batches = plan_epoch(&data, clip_len, n_random, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let total: usize = data.iter().map(|s| s.frame_count).sum();
        prop_assert_eq!(batches.len(), total.div_ceil(n_random * clip_len));
    }
}

#[test]
fn errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(plan_epoch(&[], 4, 1, 1, &mut rng), Err(SamplerError::EmptyDataset));
    let data = vec![SequenceIndex::new("a", 3)];
    assert!(plan_epoch(&data, 0, 1, 1, &mut rng).is_err());
    assert!(plan_epoch(&data, 2, 0, 0, &mut rng).is_err());
    assert!(parse_sequence_index("seq=a frames=3 labels=10").is_err());
    assert!(parse_sequence_index("seq=a frames=x").is_err());
    let parsed = parse_sequence_index("# comment\nseq=a frames=3 labels=101\n").unwrap();
    assert_eq!(parsed[0].labeled, vec![true, false, true]);
}
