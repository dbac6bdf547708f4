use camcal::io::{load_dir, LoadOptions};
use camcal::metrics::report;
use camcal::{
    build_consensus, calibrate_stack, save_image, scenes, synthesize_stack, BitDepth, CalibratorKind, ConsensusMethod,
    FitOptions, ImageStack, Severity,
};

#[test]
fn files_to_scores() {
    let truth = scenes::builtin("terrain", 48).unwrap();
    let synthetic = synthesize_stack(&truth, 7, 9, Severity::PaperLike).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for (i, img) in synthetic.stack.images().iter().enumerate() {
        save_image(img, tmp.path().join(format!("cam{i:02}.png")), BitDepth::Eight).unwrap();
    }
    let loaded = load_dir(tmp.path(), LoadOptions::default()).unwrap();
    let names: Vec<_> = loaded.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["cam00.png", "cam01.png", "cam02.png", "cam03.png", "cam04.png", "cam05.png", "cam06.png"]);
    let stack = ImageStack::new("terrain", loaded.into_iter().map(|(_, img)| img).collect()).unwrap();

    let reference = build_consensus(&stack, ConsensusMethod::Median).unwrap();
    for kind in CalibratorKind::DEFAULTS {
        let out = calibrate_stack(&stack, &reference.image, &kind, &FitOptions::default()).unwrap();
        let (before, after) = report(&stack, &out.images, &truth).unwrap();
        assert_eq!(after.per_camera.len(), 7);
        assert!(after.histogram_spread < before.histogram_spread, "{kind}");
    }
}
