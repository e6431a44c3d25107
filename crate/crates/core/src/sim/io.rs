//! Scene and episode files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::Episode;
use super::plane::Segment;
use super::scene::{Landmark, Scene, SceneMeta};
use crate::error::{Error, Result};

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format_version: u32,
    id: String,
    walls: Vec<Segment>,
    landmarks: Vec<Landmark>,
    camera_height: f64,
    agent_radius: f64,
    #[serde(default)]
    meta: SceneMeta,
}

pub fn scene_to_json(scene: &Scene) -> Result<String> {
    let file = SceneFile {
        format_version: SCENE_FORMAT_VERSION,
        id: scene.id.clone(),
        walls: scene.walls.clone(),
        landmarks: scene.landmarks.clone(),
        camera_height: scene.camera_height,
        agent_radius: scene.agent_radius,
        meta: scene.meta.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Io(e.to_string()))
}

pub fn scene_from_json(text: &str, location: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("{location}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.format_version != SCENE_FORMAT_VERSION {
        return Err(Error::Parse {
            location: format!("{location}: format_version"),
            message: format!("unsupported format_version {} (expected {SCENE_FORMAT_VERSION})", file.format_version),
        });
    }
    Scene::new(file.id, file.walls, file.landmarks, file.camera_height, file.agent_radius, file.meta)
        .map_err(|e| Error::Parse { location: location.into(), message: e.to_string() })
}

pub fn write_scenes(dir: &Path, scenes: &[Scene]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in scenes {
        fs::write(dir.join(format!("{}.json", s.id)), scene_to_json(s)? + "\n")?;
    }
    Ok(())
}

/// Every `*.json` scene in `dir`, sorted by file name.
pub fn read_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            scene_from_json(&text, &p.display().to_string())
        })
        .collect()
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for e in episodes {
        let line = serde_json::to_string(e).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        out.push(ep);
    }
    Ok(out)
}
