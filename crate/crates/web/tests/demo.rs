use fcn_cascade::nn::{arch, net_geometry};
use fcn_cascade_web::demo::{parse_layers, preset_layers, receptive_field, ProposalKnobs, SceneState};

const CLEAN: ProposalKnobs = ProposalKnobs {
    noise: 0.0,
    threshold: 225.0,
    min_cell_score: 0.5,
};

#[test]
fn presets_reproduce_stage_geometry() {
    for stage in 1..=3 {
        let text = preset_layers(stage).unwrap();
        let report = receptive_field(&text, 600, 450).unwrap();
        let g = net_geometry(&arch::for_stage(stage).unwrap());
        assert_eq!((report.stride, report.window, report.offset), (g.stride, g.window, g.offset), "stage {stage}");
        assert!(report.heatmap.is_some());
    }
    assert!(preset_layers(4).is_none());
}

#[test]
fn calculator_handles_worked_stack_and_errors() {
    let r = receptive_field("conv 3; pool 2 s2; conv 5; pool 2 s2; head 1", 14, 14).unwrap();
    assert_eq!((r.stride, r.window, r.offset, r.heatmap), (4, 14, 0, Some((1, 1))));
    assert_eq!(receptive_field("conv 3\nhead 1", 2, 2).unwrap().heatmap, None);
    assert!(parse_layers("conv").unwrap_err().contains("kernel"));
    assert!(parse_layers("conv 3 q7").unwrap_err().contains("q7"));
    assert!(parse_layers("dense 3").unwrap_err().contains("dense"));
    assert!(parse_layers("").is_err());
}

#[test]
fn clean_scene_proposes_every_face() {
    let mut scene = SceneState::new(7);
    let proposals = scene.propose(CLEAN).unwrap();
    assert!(!proposals.is_empty());
    for face in &scene.faces {
        let hit = proposals.iter().any(|p| {
            let b = fcn_cascade::BBox::new(p.bbox[0], p.bbox[1], p.bbox[2], p.bbox[3]);
            b.iou(face) >= 0.5
        });
        assert!(hit, "face {face:?} has no proposal");
    }
    assert!(proposals.iter().all(|p| p.omega >= CLEAN.threshold));
}

#[test]
fn dragged_box_scores_higher_on_a_face() {
    let mut scene = SceneState::new(7);
    scene.propose(CLEAN).unwrap();
    let face = scene.faces[0];
    let on = scene.inspect_box(face.x, face.y, face.w, face.h).unwrap();
    assert!(on.best_iou > 0.9);
    // dragging right-to-left gives the same rectangle
    let flipped = scene.inspect_box(face.right(), face.bottom(), -face.w, -face.h).unwrap();
    assert_eq!(on, flipped);
    let empty = SceneState::new(7).inspect_box(face.x, face.y, face.w, face.h).unwrap();
    assert_eq!(empty.omega, 0.0);
    assert!(on.omega > 0.0);
}

#[test]
fn scenes_are_seeded_and_buffers_sized() {
    let mut a = SceneState::new(3);
    let mut b = SceneState::new(3);
    assert_eq!(a.image_rgba(), b.image_rgba());
    let knobs = ProposalKnobs { noise: 0.3, ..CLEAN };
    assert_eq!(a.propose(knobs).unwrap(), b.propose(knobs).unwrap());
    let pixels = a.image.width() * a.image.height() * 4;
    assert_eq!(a.image_rgba().len(), pixels);
    assert_eq!(a.map_rgba().len(), pixels);
    assert_ne!(a.image_rgba(), SceneState::new(4).image_rgba());
}
