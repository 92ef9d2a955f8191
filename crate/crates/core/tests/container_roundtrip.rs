use leafx::container::FeatureContainer;
use proptest::prelude::*;

fn container() -> impl Strategy<Value = FeatureContainer> {
    (0usize..4, 1usize..6, 1usize..9).prop_flat_map(|(c, m, l)| {
        let n = m * l;
        (
            proptest::collection::vec("[a-z0-9.*]{0,12}", c),
            proptest::collection::vec(proptest::collection::vec(any::<f32>(), n), c),
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), c),
        )
            .prop_map(move |(names, planes, masks)| FeatureContainer { bins: m, frames: l, names, planes, masks })
    })
}

proptest! {
    #[test]
    fn write_then_read_is_exact(c in container()) {
        let bytes = c.to_bytes().unwrap();
        let n = c.bins * c.frames;
        let names: usize = c.names.iter().map(|s| 4 + s.len()).sum();
        prop_assert_eq!(bytes.len(), 18 + names + c.num_channels() * (4 * n + n.div_ceil(8)));
        let back = FeatureContainer::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.names, c.names.clone());
        prop_assert_eq!(back.masks, c.masks.clone());
        for (p, q) in back.planes.iter().zip(&c.planes) {
            prop_assert!(p.iter().zip(q).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn truncation_is_always_detected(c in container(), cut in 1usize..40) {
        let bytes = c.to_bytes().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(FeatureContainer::from_bytes(&bytes[..keep]).is_err());
    }
}
