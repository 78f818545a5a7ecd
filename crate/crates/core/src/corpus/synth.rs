use std::path::Path;

use rand::Rng as _;

use super::{Dataset, DatasetItem, Split};
use crate::error::{Error, Result};
use crate::imagecore::{encode_ppm, Image};
use crate::nncore::{seeded_rng, Rng};
use crate::persist::write_atomic;

pub const MIN_SYNTHETIC: usize = 10;
const SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    Grass,
    Water,
    Sand,
    Gray,
}

impl Background {
    const ALL: [Background; 4] = [Background::Grass, Background::Water, Background::Sand, Background::Gray];

    fn color(self) -> [f64; 3] {
        match self {
            Background::Grass => [0.25, 0.55, 0.20],
            Background::Water => [0.10, 0.30, 0.60],
            Background::Sand => [0.85, 0.75, 0.50],
            Background::Gray => [0.55, 0.55, 0.55],
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Background::Grass => "the grass",
            Background::Water => "the water",
            Background::Sand => "the sand",
            Background::Gray => "the gray ground",
        }
    }
}

/// Object classes in caption order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectKind {
    Building,
    Tank,
    Road,
    Runway,
}

impl ObjectKind {
    const ALL: [ObjectKind; 4] = [ObjectKind::Building, ObjectKind::Tank, ObjectKind::Road, ObjectKind::Runway];

    fn noun(self) -> &'static str {
        match self {
            ObjectKind::Building => "building",
            ObjectKind::Tank => "tank",
            ObjectKind::Road => "road",
            ObjectKind::Runway => "runway",
        }
    }

    fn color(self) -> [f64; 3] {
        match self {
            ObjectKind::Building => [0.55, 0.12, 0.10],
            ObjectKind::Tank => [0.97, 0.97, 0.97],
            ObjectKind::Road => [0.25, 0.25, 0.25],
            ObjectKind::Runway => [0.92, 0.92, 0.88],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SceneObject {
    Building { x: usize, y: usize, w: usize, h: usize },
    Tank { cx: usize, cy: usize, r: usize },
    /// A stripe across the image; `vertical` stripes are centred on column `at`.
    Road { vertical: bool, at: usize },
    Runway { vertical: bool, at: usize },
}

impl SceneObject {
    pub fn kind(&self) -> ObjectKind {
        match self {
            SceneObject::Building { .. } => ObjectKind::Building,
            SceneObject::Tank { .. } => ObjectKind::Tank,
            SceneObject::Road { .. } => ObjectKind::Road,
            SceneObject::Runway { .. } => ObjectKind::Runway,
        }
    }

    fn covers(&self, px: usize, py: usize) -> bool {
        let stripe = |vertical: bool, at: usize, half: usize, lo: usize, hi: usize| {
            let (across, along) = if vertical { (px, py) } else { (py, px) };
            across + half >= at && across <= at + half && (lo..hi).contains(&along)
        };
        match *self {
            SceneObject::Building { x, y, w, h } => (x..x + w).contains(&px) && (y..y + h).contains(&py),
            SceneObject::Tank { cx, cy, r } => {
                let (dx, dy) = (px as f64 - cx as f64, py as f64 - cy as f64);
                dx * dx + dy * dy <= (r * r) as f64
            }
            SceneObject::Road { vertical, at } => stripe(vertical, at, 3, 0, SIZE),
            SceneObject::Runway { vertical, at } => stripe(vertical, at, 1, 6, SIZE - 6),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub background: Background,
    /// Drawn in order; stripes come first.
    pub objects: Vec<SceneObject>,
}

impl Scene {
    fn counts(&self) -> Vec<(ObjectKind, usize)> {
        ObjectKind::ALL
            .iter()
            .map(|&k| (k, self.objects.iter().filter(|o| o.kind() == k).count()))
            .filter(|(_, n)| *n > 0)
            .collect()
    }

    /// Five paraphrases naming every object class and the background.
    pub fn captions(&self) -> Vec<String> {
        let groups: Vec<String> = self
            .counts()
            .into_iter()
            .map(|(k, n)| match n {
                1 => format!("a {}", k.noun()),
                2 => format!("two {}s", k.noun()),
                _ => format!("three {}s", k.noun()),
            })
            .collect();
        let objs = match groups.as_slice() {
            [a] => a.clone(),
            [a, b] => format!("{a} near {b}"),
            [a, rest @ ..] => format!("{a} near {}", rest.join(" and ")),
            [] => "nothing".to_string(),
        };
        let verb = if self.counts().first().is_some_and(|(_, n)| *n > 1) {
            "are"
        } else {
            "is"
        };
        let bg = self.background.phrase();
        vec![
            format!("there {verb} {objs} on {bg}"),
            format!("{objs} {verb} on {bg}"),
            format!("we can see {objs} on {bg}"),
            format!("an aerial view of {objs} on {bg}"),
            format!("this image shows {objs} on {bg}"),
        ]
    }
}

pub fn render_scene(scene: &Scene) -> Image {
    let mut data = Vec::with_capacity(SIZE * SIZE * 3);
    for y in 0..SIZE {
        for x in 0..SIZE {
            let color = scene
                .objects
                .iter()
                .rev()
                .find(|o| o.covers(x, y))
                .map(|o| o.kind().color())
                .unwrap_or(scene.background.color());
            data.extend_from_slice(&color);
        }
    }
    Image::new(SIZE, SIZE, 3, data).expect("scene colors are in range")
}

fn sample_scene(rng: &mut Rng) -> Scene {
    let background = Background::ALL[rng.random_range(0..4)];
    let n = rng.random_range(1..=3);
    let mut kinds = Vec::with_capacity(n);
    for _ in 0..n {
        let mut k = ObjectKind::ALL[rng.random_range(0..4)];
        if matches!(k, ObjectKind::Road | ObjectKind::Runway) && kinds.contains(&k) {
            k = if rng.random_bool(0.5) { ObjectKind::Building } else { ObjectKind::Tank };
        }
        kinds.push(k);
    }
    kinds.sort_by_key(|k| match k {
        ObjectKind::Road => 0,
        ObjectKind::Runway => 1,
        _ => 2,
    });

    let mut objects: Vec<SceneObject> = Vec::with_capacity(n);
    for k in kinds {
        let placed = match k {
            ObjectKind::Road => Some(SceneObject::Road {
                vertical: rng.random_bool(0.5),
                at: rng.random_range(8..SIZE - 8),
            }),
            ObjectKind::Runway => {
                // Keep the runway off an existing road.
                let mut found = None;
                for _ in 0..50 {
                    let cand = SceneObject::Runway {
                        vertical: rng.random_bool(0.5),
                        at: rng.random_range(8..SIZE - 8),
                    };
                    if !overlaps(&cand, &objects) {
                        found = Some(cand);
                        break;
                    }
                }
                found
            }
            ObjectKind::Building | ObjectKind::Tank => {
                let mut found = None;
                for _ in 0..200 {
                    let cand = if k == ObjectKind::Building {
                        let (w, h) = (rng.random_range(10..=16), rng.random_range(10..=16));
                        SceneObject::Building {
                            x: rng.random_range(2..SIZE - w - 2),
                            y: rng.random_range(2..SIZE - h - 2),
                            w,
                            h,
                        }
                    } else {
                        let r = rng.random_range(4..=6);
                        SceneObject::Tank {
                            cx: rng.random_range(r + 2..SIZE - r - 2),
                            cy: rng.random_range(r + 2..SIZE - r - 2),
                            r,
                        }
                    };
                    if !overlaps(&cand, &objects) {
                        found = Some(cand);
                        break;
                    }
                }
                found
            }
        };
        objects.extend(placed);
    }
    if objects.is_empty() {
        objects.push(SceneObject::Tank { cx: 32, cy: 32, r: 5 });
    }
    Scene { background, objects }
}

/// True when `cand`, grown by a one-pixel margin, touches any placed object.
fn overlaps(cand: &SceneObject, placed: &[SceneObject]) -> bool {
    for y in 0..SIZE {
        for x in 0..SIZE {
            if !cand.covers(x, y) {
                continue;
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(SIZE - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(SIZE - 1) {
                    if placed.iter().any(|o| o.covers(nx, ny)) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn split_for(i: usize, n: usize) -> Split {
    if i < n * 8 / 10 {
        Split::Train
    } else if i < n * 9 / 10 {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generates `n` scenes under `out_dir/images` plus `out_dir/dataset.json`.
/// Output is a pure function of `(n, seed)`.
pub fn gen_synthetic(n: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    if n < MIN_SYNTHETIC {
        return Err(Error::Param(format!(
            "synthetic corpus needs at least {MIN_SYNTHETIC} images, got {n}"
        )));
    }
    let out_dir = out_dir.as_ref();
    let image_root = out_dir.join("images");
    std::fs::create_dir_all(&image_root).map_err(|e| Error::io(&image_root, e))?;
    let mut rng = seeded_rng(seed);
    let width = n.to_string().len().max(4);
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let scene = sample_scene(&mut rng);
        let filename = format!("scene_{i:0width$}.ppm");
        let path = image_root.join(&filename);
        std::fs::write(&path, encode_ppm(&render_scene(&scene))).map_err(|e| Error::io(&path, e))?;
        items.push(DatasetItem {
            filename,
            split: split_for(i, n),
            captions: scene.captions(),
        });
    }
    let ds = Dataset { image_root, items };
    write_atomic(&out_dir.join("dataset.json"), super::dataset_to_json(&ds).as_bytes())?;
    Ok(ds)
}
