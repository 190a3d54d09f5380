use evball::evstream::{read_events, write_events, Event, EventFormat, Polarity, StreamHeader};
use evball::Error;
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u16..640, 0u16..480, 0u64..5_000, any::<bool>()), 1000).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(x, y, dt, on)| {
                t += dt;
                Event::new(x, y, t, if on { Polarity::On } else { Polarity::Off })
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn round_trip_both_formats(events in stream()) {
        let dir = tempfile::tempdir().unwrap();
        let header = StreamHeader::new(640, 480, "cam_x").unwrap();
        for format in [EventFormat::Bin, EventFormat::Csv] {
            let path = dir.path().join(format!("s.{}", format.extension()));
            write_events(&header, &events, &path, format).unwrap();
            let (h, back) = read_events(&path, format).unwrap();
            prop_assert_eq!(&h, &header);
            prop_assert_eq!(&back, &events);
        }
    }
}

#[test]
fn empty_stream_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let header = StreamHeader::new(32, 16, "empty").unwrap();
    for format in [EventFormat::Bin, EventFormat::Csv] {
        let path = dir.path().join(format!("e.{}", format.extension()));
        write_events(&header, &[], &path, format).unwrap();
        let (h, back) = read_events(&path, format).unwrap();
        assert_eq!(h, header);
        assert!(back.is_empty());
    }
}

#[test]
fn writer_rejects_bad_streams() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.evb");
    let header = StreamHeader::new(10, 10, "c").unwrap();
    let out = [Event::new(10, 0, 0, Polarity::On)];
    assert!(matches!(
        write_events(&header, &out, &path, EventFormat::Bin),
        Err(Error::OutOfBounds { .. })
    ));
    let back = [Event::new(1, 1, 5, Polarity::On), Event::new(1, 1, 4, Polarity::Off)];
    assert!(matches!(
        write_events(&header, &back, &path, EventFormat::Bin),
        Err(Error::TimestampRegression { prev: 5, t: 4 })
    ));
}

#[test]
fn reader_rejects_corrupt_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "10,10,c\n0,1,2,1\n5,20,2,1\n").unwrap();
    assert!(matches!(read_events(&csv, EventFormat::Csv), Err(Error::OutOfBounds { .. })));
    std::fs::write(&csv, "10,10,c\n0,1,2,3\n").unwrap();
    assert!(read_events(&csv, EventFormat::Csv).is_err());
    std::fs::write(&csv, "10,10,c\n9,1,2,1\n3,1,2,-1\n").unwrap();
    assert!(matches!(
        read_events(&csv, EventFormat::Csv),
        Err(Error::TimestampRegression { .. })
    ));

    let bin = dir.path().join("bad.evb");
    std::fs::write(&bin, b"NOPE").unwrap();
    assert!(read_events(&bin, EventFormat::Bin).is_err());

    let header = StreamHeader::new(8, 8, "c").unwrap();
    write_events(&header, &[Event::new(1, 1, 1, Polarity::On)], &bin, EventFormat::Bin).unwrap();
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.pop();
    std::fs::write(&bin, bytes).unwrap();
    assert!(read_events(&bin, EventFormat::Bin).is_err());

    assert!(matches!(
        read_events(&dir.path().join("missing.evb"), EventFormat::Bin),
        Err(Error::Io { .. })
    ));
}
