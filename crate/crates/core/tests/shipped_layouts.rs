use std::path::Path;

use mergekit::map::LayoutFile;

#[test]
fn shipped_exid_layouts_parse() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../conf/layouts.toml");
    let layout = LayoutFile::load(&path).unwrap();
    assert_eq!(layout.location_ids().unwrap(), [2, 3, 5, 6]);
    for id in [2, 3, 5, 6] {
        let loc = layout.location(id).unwrap();
        assert_eq!(loc.areas.len(), 5, "location {id}");
        for (area, cfg) in &loc.areas {
            let lengths = cfg.lengths.as_ref().unwrap();
            assert_eq!(lengths.len(), cfg.lanelets.len(), "location {id} area {area}");
        }
    }
    let loc2 = layout.location(2).unwrap();
    assert_eq!(loc2.areas["4"].lanelets, [1489, 1493, 1499]);
    let loc6 = layout.location(6).unwrap();
    assert!(loc6.areas["1"].lanelets.contains(&1459) && loc6.areas["4"].lanelets.contains(&1459));
}
