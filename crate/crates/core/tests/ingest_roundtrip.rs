use mergekit::geometry::Vec2;
use mergekit::ingest::{
    parse_recording, write_recording_meta, write_tracks, write_tracks_meta, NeighborIds,
    RecordingMeta, Track, TrackFields, TrackFrame, TrackMeta, VehicleClass,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4..1e4f64, Just(0.0), Just(-0.0), (-1e-300..1e-300f64)]
}

fn frame_strategy() -> impl Strategy<Value = TrackFrame> {
    (
        (finite(), finite(), -180.0..180.0f64),
        (finite(), finite(), finite(), finite()),
        prop::collection::vec(1i64..5000, 0..3),
        any::<bool>(),
        prop::collection::vec(prop::option::of(1i64..400), 8),
    )
        .prop_flat_map(|(pose, kin, lanelets, lc, nb)| {
            let n = lanelets.len();
            (
                Just((pose, kin, lanelets, lc, nb)),
                prop::collection::vec(finite(), n),
            )
        })
        .prop_map(|(((x, y, h), (vx, vy, ax, ay), lanelets, lc, nb), offsets)| TrackFrame {
            frame: 0,
            center: Vec2::new(x, y),
            heading_deg: h,
            velocity: Vec2::new(vx, vy),
            acceleration: Vec2::new(ax, ay),
            lanelet_id: lanelets.first().copied(),
            lat_lane_center_offset: offsets.first().copied(),
            lanelet_ids: lanelets,
            lat_offsets: offsets,
            lane_change: lc,
            neighbors: NeighborIds {
                lead: nb[0],
                rear: nb[1],
                left_lead: nb[2],
                right_lead: nb[3],
                left_alongside: nb[4],
                right_alongside: nb[5],
                left_rear: nb[6],
                right_rear: nb[7],
            },
        })
}

fn track_strategy(id: i64) -> impl Strategy<Value = Track> {
    (
        -50i64..500,
        prop::collection::vec(frame_strategy(), 1..12),
        0.5..20.0f64,
        0.5..3.0f64,
        prop_oneof![Just(VehicleClass::Car), Just(VehicleClass::Truck), Just(VehicleClass::Van)],
    )
        .prop_map(move |(first, mut frames, length, width, class)| {
            for (i, f) in frames.iter_mut().enumerate() {
                f.frame = first + i as i64;
            }
            Track {
                meta: TrackMeta {
                    track_id: id,
                    vehicle_class: class,
                    length,
                    width,
                    first_frame: first,
                    last_frame: first + frames.len() as i64 - 1,
                },
                frames,
                fields: TrackFields {
                    heading: true,
                    velocity: true,
                    acceleration: true,
                    lanelet: true,
                    offset: true,
                    lane_change: true,
                    neighbors: true,
                },
                kinematics_incomplete: false,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_parse_is_bit_exact(
        a in track_strategy(3),
        b in track_strategy(11),
        rate in prop_oneof![Just(25.0f64), 1.0..100.0f64],
    ) {
        let meta = RecordingMeta {
            recording_id: 42,
            location_id: 2,
            frame_rate: rate,
            timestep: 1.0 / rate,
            origin_offset: Vec2::new(123.25, -7.5),
        };
        let tracks = vec![a, b];
        let (mut rec, mut tm, mut tr) = (Vec::new(), Vec::new(), Vec::new());
        write_recording_meta(&mut rec, &meta).unwrap();
        write_tracks_meta(&mut tm, meta.recording_id, &tracks).unwrap();
        write_tracks(&mut tr, meta.recording_id, &tracks).unwrap();
        let (meta2, tracks2) = parse_recording(&rec, &tm, &tr).unwrap();
        prop_assert_eq!(meta2, meta);
        prop_assert_eq!(tracks2.len(), tracks.len());
        for (x, y) in tracks.iter().zip(&tracks2) {
            prop_assert_eq!(&x.meta, &y.meta);
            prop_assert_eq!(x.frames.len(), y.frames.len());
            for (f, g) in x.frames.iter().zip(&y.frames) {
                prop_assert_eq!(f.center.x.to_bits(), g.center.x.to_bits());
                prop_assert_eq!(f.center.y.to_bits(), g.center.y.to_bits());
                prop_assert_eq!(f.heading_deg.to_bits(), g.heading_deg.to_bits());
                prop_assert_eq!(f.velocity.x.to_bits(), g.velocity.x.to_bits());
                prop_assert_eq!(f.acceleration.y.to_bits(), g.acceleration.y.to_bits());
                prop_assert_eq!(f, g);
            }
        }
    }
}

#[test]
fn single_frame_track_is_flagged_not_rejected() {
    let rec = b"recordingId,locationId,frameRate\n1,2,25\n";
    let meta = b"trackId,initialFrame,finalFrame,width,length,class\n9,5,5,2,4.5,van\n";
    let tracks = b"trackId,frame,xCenter,yCenter\n9,5,10,1\n";
    let (_, ts) = parse_recording(rec, meta, tracks).unwrap();
    assert!(ts[0].kinematics_incomplete);
    assert_eq!(ts[0].frames[0].velocity, Vec2::ZERO);
    assert_eq!(ts[0].meta.vehicle_class, VehicleClass::Van);
}
