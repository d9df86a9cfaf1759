use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BBox, GroundTruthObject};
use crate::seed;

/// One component of the object-height mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBand {
    pub weight: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Objects of this band may join a cluster; otherwise they are uniform.
    #[serde(default = "yes")]
    pub clustered: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub min_objects: u32,
    pub max_objects: u32,
    pub size_bands: Vec<SizeBand>,
    /// Width-to-height ratio of objects.
    pub aspect_ratio: f64,
    /// Relative half-range of the aspect ratio jitter.
    pub aspect_jitter: f64,
    /// 0 places objects uniformly.
    pub cluster_count: u32,
    /// Standard deviation of object centers around their cluster center, pixels.
    pub cluster_spread: f64,
    /// Fraction of objects that belong to a cluster when clustering is on.
    pub clustered_fraction: f64,
    /// Largest zoom window the scene must accommodate, `[w, h]`.
    pub largest_window: [u32; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 640,
            height: 480,
            min_objects: 4,
            max_objects: 12,
            size_bands: vec![
                SizeBand { weight: 0.55, min_height: 20.0, max_height: 44.0, clustered: true },
                SizeBand { weight: 0.38, min_height: 44.0, max_height: 140.0, clustered: false },
                SizeBand { weight: 0.07, min_height: 170.0, max_height: 240.0, clustered: false },
            ],
            aspect_ratio: 0.41,
            aspect_jitter: 0.15,
            cluster_count: 1,
            cluster_spread: 22.0,
            clustered_fraction: 1.0,
            largest_window: [320, 240],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("frame must be non-empty, got {}x{}", self.width, self.height));
        }
        let [ww, wh] = self.largest_window;
        if self.width < ww || self.height < wh {
            return bad(format!(
                "frame {}x{} is smaller than the largest zoom window {}x{}",
                self.width, self.height, ww, wh
            ));
        }
        if self.min_objects > self.max_objects {
            return bad(format!("min_objects {} exceeds max_objects {}", self.min_objects, self.max_objects));
        }
        if self.max_objects > 0 {
            if self.size_bands.is_empty() {
                return bad("size_bands is empty".into());
            }
            let total: f64 = self.size_bands.iter().map(|b| b.weight).sum();
            if !(total > 0.0) || self.size_bands.iter().any(|b| !(b.weight >= 0.0)) {
                return bad("size band weights must be nonnegative with a positive sum".into());
            }
            for b in &self.size_bands {
                if !(b.min_height > 0.0 && b.min_height <= b.max_height && b.max_height <= self.height as f64) {
                    return bad(format!("invalid size band {b:?}"));
                }
            }
        }
        if !(self.aspect_ratio > 0.0) || !(0.0..1.0).contains(&self.aspect_jitter) {
            return bad("aspect_ratio must be positive and aspect_jitter in [0, 1)".into());
        }
        if !(self.cluster_spread >= 0.0) || !(0.0..=1.0).contains(&self.clustered_fraction) {
            return bad("cluster_spread must be >= 0 and clustered_fraction in [0, 1]".into());
        }
        Ok(())
    }
}

/// A high-resolution frame and its groundtruth objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GroundTruthObject>,
    pub seed: u64,
}

impl Scene {
    pub fn frame(&self) -> BBox {
        BBox::frame(self.width, self.height)
    }

    pub fn pixels(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Draws a scene. The result depends only on `(config, seed)`.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = seed::stage_rng(seed, "scene");
    let (fw, fh) = (config.width as f64, config.height as f64);

    let count = rng.random_range(config.min_objects..=config.max_objects) as usize;
    let centers: Vec<(f64, f64)> = (0..config.cluster_count)
        .map(|_| (rng.random_range(0.1 * fw..0.9 * fw), rng.random_range(0.1 * fh..0.9 * fh)))
        .collect();
    let spread = Normal::new(0.0, config.cluster_spread.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;
    let total_weight: f64 = config.size_bands.iter().map(|b| b.weight).sum();

    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let mut pick = rng.random::<f64>() * total_weight;
        let band = config
            .size_bands
            .iter()
            .find(|b| {
                pick -= b.weight;
                pick < 0.0
            })
            .unwrap_or_else(|| config.size_bands.last().expect("validated non-empty"));
        let h = if band.max_height > band.min_height {
            rng.random_range(band.min_height..band.max_height)
        } else {
            band.min_height
        };
        let jitter = if config.aspect_jitter > 0.0 {
            rng.random_range(-config.aspect_jitter..config.aspect_jitter)
        } else {
            0.0
        };
        let w = (h * config.aspect_ratio * (1.0 + jitter)).min(fw);

        let clustered = rng.random::<f64>() < config.clustered_fraction && band.clustered && !centers.is_empty();
        let (cx, cy) = if clustered {
            let (ccx, ccy) = centers[rng.random_range(0..centers.len())];
            (ccx + spread.sample(&mut rng), ccy + spread.sample(&mut rng))
        } else {
            (rng.random_range(0.0..fw), rng.random_range(0.0..fh))
        };
        let x = (cx - 0.5 * w).clamp(0.0, fw - w);
        let y = (cy - 0.5 * h).clamp(0.0, fh - h);
        objects.push(GroundTruthObject { bbox: BBox::new(x, y, w, h)?, object_class: "pedestrian".into() });
    }

    Ok(Scene { width: config.width, height: config.height, objects, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_objects_gives_empty_scene() {
        let cfg = SceneConfig { min_objects: 0, max_objects: 0, ..SceneConfig::default() };
        let scene = generate_scene(&cfg, 7).unwrap();
        assert!(scene.objects.is_empty());
        assert_eq!((scene.width, scene.height), (640, 480));
    }

    #[test]
    fn same_seed_gives_identical_scene() {
        let cfg = SceneConfig::default();
        let a = serde_json::to_string(&generate_scene(&cfg, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scene(&cfg, 42).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_scene(&cfg, 43).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn objects_stay_inside_frame() {
        let cfg = SceneConfig { cluster_spread: 300.0, ..SceneConfig::default() };
        for seed in 0..200 {
            let scene = generate_scene(&cfg, seed).unwrap();
            for o in &scene.objects {
                assert!(scene.frame().encloses(&o.bbox), "{:?}", o.bbox);
            }
        }
    }

    #[test]
    fn rejects_frame_smaller_than_window() {
        let cfg = SceneConfig { width: 300, largest_window: [320, 240], ..SceneConfig::default() };
        assert!(matches!(generate_scene(&cfg, 0), Err(Error::Config(_))));
    }

    /// Plain Lloyd iterations with farthest-point seeding.
    fn kmeans(points: &[(f64, f64)], k: usize) -> (Vec<(f64, f64)>, Vec<usize>) {
        let mut cents = vec![points[0]];
        while cents.len() < k {
            let far = points
                .iter()
                .copied()
                .max_by(|a, b| {
                    let da = cents.iter().map(|c| (a.0 - c.0).powi(2) + (a.1 - c.1).powi(2)).fold(f64::MAX, f64::min);
                    let db = cents.iter().map(|c| (b.0 - c.0).powi(2) + (b.1 - c.1).powi(2)).fold(f64::MAX, f64::min);
                    da.total_cmp(&db)
                })
                .unwrap();
            cents.push(far);
        }
        let mut assign = vec![0; points.len()];
        for _ in 0..50 {
            for (i, p) in points.iter().enumerate() {
                assign[i] = (0..k)
                    .min_by(|&a, &b| {
                        let da = (p.0 - cents[a].0).powi(2) + (p.1 - cents[a].1).powi(2);
                        let db = (p.0 - cents[b].0).powi(2) + (p.1 - cents[b].1).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap();
            }
            for (c, cent) in cents.iter_mut().enumerate() {
                let members: Vec<_> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
                if !members.is_empty() {
                    let n = members.len() as f64;
                    *cent = (members.iter().map(|p| p.0).sum::<f64>() / n, members.iter().map(|p| p.1).sum::<f64>() / n);
                }
            }
        }
        (cents, assign)
    }

    #[test]
    fn two_clusters_are_recovered_by_kmeans() {
        let cfg = SceneConfig {
            min_objects: 40,
            max_objects: 40,
            cluster_count: 2,
            cluster_spread: 12.0,
            clustered_fraction: 1.0,
            size_bands: vec![SizeBand { weight: 1.0, min_height: 20.0, max_height: 24.0, clustered: true }],
            ..SceneConfig::default()
        };
        let mut checked = 0;
        for seed in 0..20 {
            let scene = generate_scene(&cfg, seed).unwrap();
            let pts: Vec<_> = scene.objects.iter().map(|o| o.bbox.center()).collect();
            let (cents, assign) = kmeans(&pts, 2);
            let sep = ((cents[0].0 - cents[1].0).powi(2) + (cents[0].1 - cents[1].1).powi(2)).sqrt();
            if sep < 150.0 {
                // Cluster centers landed close together; not separable.
                continue;
            }
            checked += 1;
            for (p, &a) in pts.iter().zip(&assign) {
                let d = ((p.0 - cents[a].0).powi(2) + (p.1 - cents[a].1).powi(2)).sqrt();
                assert!(d < 60.0, "seed {seed}: point {p:?} is {d:.1}px from its centroid");
            }
            assert!(assign.contains(&0) && assign.contains(&1));
        }
        assert!(checked >= 10);
    }
}
