//! Line-oriented JSON records, one object per line tagged by `kind`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BBox, Detection, GroundTruthObject};
use crate::matching::Correspondence;
use crate::policy::{EpisodeResult, ZoomAction};
use crate::sim::{CostLedger, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Record {
    Scene {
        id: usize,
        width: u32,
        height: u32,
        seed: u64,
    },
    Object {
        scene: usize,
        #[serde(rename = "box")]
        bbox: BBox,
        class: String,
    },
    Detection {
        scene: usize,
        #[serde(flatten)]
        detection: Detection,
    },
    Correspondence {
        scene: usize,
        coarse: Detection,
        fine: Option<Detection>,
        label_g: u8,
        gain_target: f64,
    },
    Episode {
        scene: usize,
        strategy: String,
        actions: Vec<ZoomAction>,
        rewards: Vec<f64>,
        ledger: CostLedger,
    },
}

pub fn scene_records(id: usize, scene: &Scene) -> Vec<Record> {
    let mut out = vec![Record::Scene { id, width: scene.width, height: scene.height, seed: scene.seed }];
    out.extend(scene.objects.iter().map(|o| Record::Object {
        scene: id,
        bbox: o.bbox,
        class: o.object_class.clone(),
    }));
    out
}

/// Rebuilds the scene from its `scene` record and the `object` records that
/// follow it.
pub fn scene_from_records(records: &[Record]) -> Result<(usize, Scene)> {
    let Some(Record::Scene { id, width, height, seed }) = records.first() else {
        return Err(Error::Record("scene file must start with a scene record".into()));
    };
    let mut objects = Vec::new();
    for r in &records[1..] {
        match r {
            Record::Object { scene, bbox, class } if scene == id => {
                objects.push(GroundTruthObject { bbox: *bbox, object_class: class.clone() })
            }
            Record::Object { scene, .. } => {
                return Err(Error::Record(format!("object of scene {scene} inside scene {id}")));
            }
            _ => {}
        }
    }
    Ok((*id, Scene { width: *width, height: *height, objects, seed: *seed }))
}

pub fn correspondence_record(scene: usize, c: &Correspondence) -> Record {
    Record::Correspondence {
        scene,
        coarse: c.coarse.clone(),
        fine: c.fine.clone(),
        label_g: c.label_g,
        gain_target: c.gain_target,
    }
}

pub fn episode_record(scene: usize, strategy: &str, r: &EpisodeResult) -> Record {
    Record::Episode {
        scene,
        strategy: strategy.to_string(),
        actions: r.zoom_trail.clone(),
        rewards: r.rewards.clone(),
        ledger: CostLedger { wall_time: 0.0, ..r.ledger.clone() },
    }
}

pub fn write_records<W: Write>(records: &[Record], w: &mut W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_records(records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<Record>> {
    read_records(BufReader::new(File::open(path)?))
}
