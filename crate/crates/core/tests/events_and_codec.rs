use evkit_core::codec::{decode_dat, decode_evs, decode_recording, encode_dat, encode_evs};
use evkit_core::event::{partition_windows, validate_stream};
use evkit_core::representation::{
    histogram2d, stacked_histogram, stacked_histogram_events, StackedHistogramConfig,
};
use evkit_core::{Event, EventStream, SensorGeometry, TimeWindow};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = SensorGeometry> {
    (1u32..40, 1u32..30).prop_map(|(w, h)| SensorGeometry::new(w, h).unwrap())
}

/// Sorted random events inside `geometry`, timestamps below `t_max`.
fn stream_in(g: SensorGeometry, t_max: u64, max_len: usize) -> impl Strategy<Value = EventStream> {
    prop::collection::vec(
        (0..t_max, 0..g.width() as u16, 0..g.height() as u16, 0u8..2),
        0..max_len,
    )
    .prop_map(move |mut raw| {
        raw.sort_by_key(|e| e.0);
        let events = raw.into_iter().map(|(t, x, y, p)| Event::new(t, x, y, p)).collect();
        validate_stream(events, g).unwrap()
    })
}

fn any_stream() -> impl Strategy<Value = EventStream> {
    geometry().prop_flat_map(|g| stream_in(g, 1_000_000, 300))
}

proptest! {
    #[test]
    fn partition_covers_every_event_once(s in any_stream(), t_frame in 1u64..200_000) {
        let slices = partition_windows(&s, t_frame, 0).unwrap();
        let mut next = 0;
        for (k, w) in slices.iter().enumerate() {
            prop_assert_eq!(w.range.start, next);
            prop_assert_eq!(w.window.t0(), k as u64 * t_frame);
            prop_assert_eq!(w.window.duration(), t_frame);
            for e in &s.events()[w.range.clone()] {
                prop_assert!(w.window.contains(e.t));
            }
            prop_assert_eq!(w.partial, k + 1 == slices.len() && s.last_timestamp().unwrap() + 1 < w.window.t1());
            next = w.range.end;
        }
        prop_assert_eq!(next, s.len());
    }

    #[test]
    fn evs_roundtrip(s in any_stream()) {
        let bytes = encode_evs(&s);
        prop_assert_eq!(bytes.len(), 20 + 16 * s.len());
        prop_assert_eq!(&decode_evs(&bytes).unwrap(), &s);
        prop_assert_eq!(&decode_recording(&bytes, None).unwrap(), &s);
    }

    #[test]
    fn dat_roundtrip(s in any_stream()) {
        let bytes = encode_dat(&s).unwrap();
        prop_assert_eq!(&decode_dat(&bytes, None).unwrap(), &s);
    }

    #[test]
    fn dat_decoder_survives_garbage(body in prop::collection::vec(any::<u8>(), 0..200), with_header in any::<bool>()) {
        let mut bytes = if with_header { b"% Width 8\n% Height 8\n".to_vec() } else { Vec::new() };
        bytes.extend_from_slice(&body);
        let _ = decode_dat(&bytes, Some(SensorGeometry::GEN1));
        let _ = decode_recording(&bytes, None);
    }

    #[test]
    fn evs_decoder_survives_truncation(s in any_stream(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_evs(&s);
        let n = cut.index(bytes.len());
        prop_assert!(n == bytes.len() || decode_evs(&bytes[..n]).is_err());
    }

    #[test]
    fn histogram_conserves_counts_and_refines(
        s in geometry().prop_flat_map(|g| stream_in(g, 50_000, 400)),
        bins in prop::sample::select(vec![1u32, 2, 5, 10, 25]),
    ) {
        let cfg = StackedHistogramConfig { t_frame: 50_000, n_bins: bins, clip_limit: None };
        let window = TimeWindow::new(0, 50_000).unwrap();
        let stacked = stacked_histogram(&s, window, &cfg).unwrap();
        prop_assert_eq!(stacked.total(), s.len() as u64);

        let two = histogram2d(&s, window).unwrap();
        let (_, h, w) = stacked.shape();
        for p in 0..2 {
            for y in 0..h {
                for x in 0..w {
                    let sum: u32 = (0..bins as usize).map(|i| stacked.get(p * bins as usize + i, y, x) as u32).sum();
                    prop_assert_eq!(sum, two.get(p, y, x) as u32);
                }
            }
        }
    }

    #[test]
    fn clip_limit_caps_every_cell(
        s in geometry().prop_flat_map(|g| stream_in(g, 5_000, 400)),
        limit in 0u16..4,
    ) {
        let window = TimeWindow::new(0, 5_000).unwrap();
        let cfg = StackedHistogramConfig { t_frame: 5_000, n_bins: 5, clip_limit: Some(limit) };
        let clipped = stacked_histogram(&s, window, &cfg).unwrap();
        let raw = stacked_histogram(&s, window, &StackedHistogramConfig { clip_limit: None, ..cfg }).unwrap();
        for (c, r) in clipped.data().iter().zip(raw.data()) {
            prop_assert_eq!(*c, (*r).min(limit));
        }
    }
}

#[test]
fn polarity_and_bin_select_the_channel() {
    let g = SensorGeometry::new(4, 3).unwrap();
    let cfg = StackedHistogramConfig {
        t_frame: 100,
        n_bins: 4,
        clip_limit: None,
    };
    let window = TimeWindow::new(1000, 1100).unwrap();
    let events = [
        Event::new(1000, 1, 2, 0),
        Event::new(1024, 1, 2, 0),
        Event::new(1025, 3, 0, 1),
        Event::new(1099, 0, 0, 1),
    ];
    let f = stacked_histogram_events(&events, g, window, &cfg).unwrap();
    assert_eq!(f.shape(), (8, 3, 4));
    assert_eq!(f.get(0, 2, 1), 2);
    assert_eq!(f.get(4 + 1, 0, 3), 1);
    assert_eq!(f.get(4 + 3, 0, 0), 1);
    assert_eq!(f.total(), 4);
}

#[test]
fn saturating_counts_do_not_wrap() {
    let g = SensorGeometry::new(1, 1).unwrap();
    let events = vec![Event::new(0, 0, 0, 1); 70_000];
    let window = TimeWindow::new(0, 10).unwrap();
    let cfg = StackedHistogramConfig {
        t_frame: 10,
        n_bins: 1,
        clip_limit: None,
    };
    let f = stacked_histogram_events(&events, g, window, &cfg).unwrap();
    assert_eq!(f.get(1, 0, 0), u16::MAX);
}
