use std::collections::{HashMap, VecDeque};

use plrefine::maskops::{connected_components, filter_components, BinaryMask};
use plrefine::RngStream;

/// Independent BFS flood fill, 4-connectivity. Ids start at 1, 0 = unset.
fn flood_fill_partition(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut ids = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.get_index(start) || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut nbrs = Vec::with_capacity(4);
            if x > 0 {
                nbrs.push(i - 1);
            }
            if x + 1 < w {
                nbrs.push(i + 1);
            }
            if y > 0 {
                nbrs.push(i - w);
            }
            if y + 1 < h {
                nbrs.push(i + w);
            }
            for j in nbrs {
                if mask.get_index(j) && ids[j] == 0 {
                    ids[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (ids, next as usize)
}

fn random_mask(rng: &mut RngStream) -> BinaryMask {
    let w = 1 + rng.below(128);
    let h = 1 + rng.below(128);
    let density = rng.uniform_range(0.05, 0.95);
    let bits = (0..w * h).map(|_| rng.bernoulli(density)).collect();
    BinaryMask::new(w, h, bits)
}

/// The two labelings induce the same partition iff the id map is a bijection.
fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        (x == 0) == (y == 0) && *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x
    })
}

#[test]
fn union_find_matches_flood_fill_on_random_masks() {
    let mut rng = RngStream::new(2024).fork("ccl");
    for case in 0..200 {
        let mask = random_mask(&mut rng);
        let labeling = connected_components(&mask);
        let (oracle, count) = flood_fill_partition(&mask);
        assert_eq!(labeling.count(), count, "case {case}");
        assert!(same_partition(labeling.ids(), &oracle), "case {case}");
        let total: usize = labeling.areas().iter().sum();
        assert_eq!(total, mask.area(), "case {case}");
    }
}

#[test]
fn comb_joined_at_the_bottom_is_one_component() {
    // Teeth are only linked through the last row, so every tooth starts as
    // its own provisional label and merges late.
    let (w, h) = (63, 40);
    let mut mask = BinaryMask::empty(w, h);
    for x in (0..w).step_by(2) {
        for y in 0..h {
            mask.set(x, y, true);
        }
    }
    for x in 0..w {
        mask.set(x, h - 1, true);
    }
    let labeling = connected_components(&mask);
    assert_eq!(labeling.count(), 1);
    assert_eq!(labeling.areas()[0], mask.area());
    let (oracle, _) = flood_fill_partition(&mask);
    assert!(same_partition(labeling.ids(), &oracle));
}

#[test]
fn diagonal_neighbours_stay_apart() {
    let mask = BinaryMask::new(3, 3, vec![true, false, false, false, true, false, false, false, true]);
    assert_eq!(connected_components(&mask).count(), 3);
}

#[test]
fn filtering_matches_oracle_areas() {
    let mut rng = RngStream::new(9).fork("filter");
    for _ in 0..50 {
        let mask = random_mask(&mut rng);
        let tau = rng.below(12);
        let (oracle, count) = flood_fill_partition(&mask);
        let mut areas = vec![0usize; count + 1];
        for &id in &oracle {
            areas[id as usize] += 1;
        }
        let expected = (1..=count).filter(|&id| areas[id] >= tau).count();
        let kept = filter_components(&connected_components(&mask), tau);
        assert_eq!(kept.count(), expected);
        for (i, &id) in kept.ids().iter().enumerate() {
            let o = oracle[i] as usize;
            assert_eq!(id != 0, o != 0 && areas[o] >= tau);
        }
    }
}
