use rc_core::analytics::{length_response_correlation, normalized_avg, usage_table};
use rc_core::reference::{self, COURSE};
use rc_core::{ResponseType, Store, VideoId};

fn fixture() -> Store {
    let store = Store::in_memory();
    reference::populate(&store, 2018).unwrap();
    store
}

#[test]
fn counts_are_reproduced_exactly() {
    let store = fixture();
    let rows = usage_table(&store.snapshot()).unwrap();
    assert_eq!(rows.len(), COURSE.len());
    for (row, v) in rows.iter().zip(&COURSE) {
        assert_eq!(row.video_id, v.video_id());
        assert_eq!(row.length_s, f64::from(v.length_s));
        assert_eq!(
            (row.played, row.responded, row.sum as usize),
            (v.played, v.responded, v.sum)
        );
        for t in ResponseType::ALL {
            assert_eq!(
                row.count(t) as usize,
                v.count(t),
                "video {} {t:?}",
                v.ordinal
            );
        }
        assert!(
            (row.avg.unwrap() - v.avg).abs() <= 0.05,
            "video {} avg {:?}",
            v.ordinal,
            row.avg
        );
        assert!(
            (row.std.unwrap() - v.std).abs() < 0.1,
            "video {} std {:?}",
            v.ordinal,
            row.std
        );
    }
}

#[test]
fn different_seeds_change_positions_not_counts() {
    let (a, b) = (fixture(), Store::in_memory());
    reference::populate(&b, 99).unwrap();
    let (ta, tb) = (
        usage_table(&a.snapshot()).unwrap(),
        usage_table(&b.snapshot()).unwrap(),
    );
    assert_eq!(ta, tb);
    let id = VideoId::from("v03");
    let pos = |s: &Store| -> Vec<f64> {
        s.snapshot()
            .video_responses(&id)
            .unwrap()
            .iter()
            .map(|r| r.position_s)
            .collect()
    };
    assert_ne!(pos(&a), pos(&b));
}

#[test]
fn normalized_rates_and_length_correlation() {
    let store = fixture();
    let snap = store.snapshot();
    let norm = |o: u32| normalized_avg(&snap, &VideoId::new(format!("v{o:02}"))).unwrap();
    // avg / (length / 10 min), computed by hand from the row counts.
    assert!((norm(1) - (127.0 / 42.0) / (1362.0 / 600.0)).abs() < 1e-12);
    assert!((norm(1) - 1.3).abs() <= 0.1);
    assert!((norm(2) - 1.1).abs() <= 0.1);
    let rc_mean = (3..=10).map(norm).sum::<f64>() / 8.0;
    assert!((rc_mean - 3.0).abs() <= 0.1, "{rc_mean}");

    let ids: Vec<VideoId> = (3..=10).map(|o| VideoId::new(format!("v{o:02}"))).collect();
    let fit = length_response_correlation(&snap, &ids).unwrap();
    assert_eq!(fit.n, 8);
    assert!((0.65..=0.80).contains(&fit.r_squared), "{}", fit.r_squared);
    assert!(fit.slope > 0.0);
}
