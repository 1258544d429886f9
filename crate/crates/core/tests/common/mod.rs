#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use groundcue::backends::{spawn_mock_backend, MockBehavior, MockConfig, MockServer, Role};
use groundcue::cues::RedCueParams;
use groundcue::eval::TaskRecord;
use groundcue::geometry::BBox;
use groundcue::imaging::ImageBuffer;
use groundcue::pipeline::{GroundingTask, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: u32 = 256;

/// Green-gray texture; no pixel comes near the red-cue predicate, before or
/// after enhancement.
pub fn terrain(rng: &mut impl Rng, width: u32, height: u32) -> ImageBuffer {
    let mut px = Vec::with_capacity((width * height * 3) as usize);
    for y in 0..height {
        for x in 0..width {
            let base = 90 + ((x / 16 + y / 16) % 4) as i32 * 15;
            let n = rng.random_range(-12..=12);
            px.push((base - 20 + n).clamp(0, 255) as u8);
            px.push((base + 30 + n).clamp(0, 255) as u8);
            px.push((base + n).clamp(0, 255) as u8);
        }
    }
    ImageBuffer::new(width, height, px).unwrap()
}

/// Random box whose sides are multiples of `step`, at least `min_side`.
pub fn random_box(rng: &mut impl Rng, side: u32, min_side: i64, max_side: i64, step: i64) -> BBox {
    let w = rng.random_range(min_side / step..=max_side / step) * step;
    let h = rng.random_range(min_side / step..=max_side / step) * step;
    let x = rng.random_range(0..=side as i64 - w);
    let y = rng.random_range(0..=side as i64 - h);
    BBox::new(x, y, x + w, y + h).unwrap()
}

pub struct Scene {
    pub task: GroundingTask,
    pub truth: BBox,
}

/// `n` tasks on `SIDE`x`SIDE` rasters with a visible target patch at the truth box.
pub fn scenes(n: usize, seed: u64, step: i64) -> Vec<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut img = terrain(&mut rng, SIDE, SIDE);
            let truth = random_box(&mut rng, SIDE, 15, 150, step);
            img.fill_rect(&truth, [150, 160, 190]);
            let task = GroundingTask {
                task_id: format!("t{i:03}"),
                image: Arc::new(img),
                query: format!("The roof on the left side, number {i}."),
                ground_truth: Some(truth),
            };
            Scene { task, truth }
        })
        .collect()
}

pub fn truth_table(scenes: &[Scene]) -> BTreeMap<String, BBox> {
    scenes.iter().map(|s| (s.task.task_id.clone(), s.truth)).collect()
}

pub fn mock(behavior: MockBehavior, shrink: f64, truth: BTreeMap<String, BBox>, roles: &[Role]) -> MockServer {
    let cfg = MockConfig {
        behavior,
        shrink,
        seed: 7,
        truth_table: truth,
        ..MockConfig::default()
    };
    spawn_mock_backend(cfg, roles, "127.0.0.1:0").unwrap()
}

/// Editor and rewriter on one server, both segmenters on another, so the
/// two halves can misbehave independently.
pub struct Backends {
    pub editor: MockServer,
    pub segmenters: MockServer,
}

impl Backends {
    pub fn new(editor: MockBehavior, segmenters: MockBehavior, shrink: f64, truth: BTreeMap<String, BBox>) -> Self {
        Self {
            editor: mock(editor, 1.0, truth.clone(), &[Role::Editor, Role::Rewriter]),
            segmenters: mock(segmenters, shrink, truth, &[Role::SegmenterSmall, Role::SegmenterLarge]),
        }
    }

    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.set_endpoint(Role::Editor, &self.editor.base_url());
        cfg.set_endpoint(Role::Rewriter, &self.editor.base_url());
        cfg.set_endpoint(Role::SegmenterSmall, &self.segmenters.base_url());
        cfg.set_endpoint(Role::SegmenterLarge, &self.segmenters.base_url());
        cfg
    }
}

pub fn count_red(img: &ImageBuffer) -> usize {
    let p = RedCueParams::default();
    (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| p.is_red(img.get(x, y)))
        .count()
}

/// Writes every scene's image under `dir` and returns the canonical records.
pub fn write_task_files(scenes: &[Scene], dir: &Path) -> Vec<TaskRecord> {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    scenes
        .iter()
        .map(|s| {
            let rel = format!("images/{}.png", s.task.task_id);
            s.task.image.save_png(&dir.join(&rel)).unwrap();
            TaskRecord {
                task_id: s.task.task_id.clone(),
                image_path: rel.into(),
                query: s.task.query.clone(),
                truth_box: s.truth,
                dataset_tag: "synthetic".into(),
                obb_converted: false,
            }
        })
        .collect()
}
