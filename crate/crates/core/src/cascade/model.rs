//! Model directory: `manifest.json` plus one weight file per stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CascadeModel, StageThresholds, VerifyConfig};
use crate::error::{Error, Result};
use crate::nn::weights::{decode_network, encode_network};
use crate::nn::NetworkSpec;
use crate::pyramid::PyramidConfig;
use crate::score_map::ProposalConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "fcn-cascade-model";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub name: String,
    pub weights: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub stages: Vec<StageEntry>,
    pub thresholds: StageThresholds,
    pub proposal: ProposalConfig,
    pub pyramid: PyramidConfig,
    pub verify: VerifyConfig,
}

impl Default for ModelManifest {
    fn default() -> Self {
        Self {
            format: FORMAT.into(),
            version: 1,
            stages: Vec::new(),
            thresholds: StageThresholds::default(),
            proposal: ProposalConfig::default(),
            pyramid: PyramidConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ModelManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(Error::at_path(&path))?;
        let manifest: ModelManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT || manifest.version != 1 {
            return Err(Error::Manifest(format!(
                "unsupported format {:?} version {}",
                manifest.format, manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    fn entry(&self, stage: usize) -> Option<&StageEntry> {
        let name = stage_name(stage);
        self.stages.iter().find(|e| e.name == name)
    }
}

fn stage_name(stage: usize) -> String {
    format!("stage{stage}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(Error::at_path(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::at_path(path))
}

fn read_stage(dir: &Path, entry: &StageEntry) -> Result<NetworkSpec> {
    let path = dir.join(&entry.weights);
    let bytes = fs::read(&path).map_err(Error::at_path(&path))?;
    decode_network(&bytes, &entry.name).map_err(|e| match e {
        Error::CorruptWeights(msg) => Error::CorruptWeights(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes all three stages and the manifest.
pub fn save_model(model: &CascadeModel, dir: &Path) -> Result<()> {
    model.validate()?;
    fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    let mut manifest = ModelManifest {
        thresholds: model.thresholds,
        proposal: model.proposal.clone(),
        pyramid: model.pyramid.clone(),
        verify: model.verify.clone(),
        ..ModelManifest::default()
    };
    for (i, net) in [&model.stage1, &model.stage2, &model.stage3].into_iter().enumerate() {
        let name = stage_name(i + 1);
        let file = format!("{name}.fcnw");
        write_atomic(&dir.join(&file), &encode_network(net))?;
        manifest.stages.push(StageEntry { name, weights: file });
    }
    manifest.write(dir)
}

/// Adds or replaces one stage in a (possibly partial) model directory,
/// creating the manifest if needed. `update` may adjust the manifest's
/// configuration before it is written.
pub fn save_stage(dir: &Path, stage: usize, net: &NetworkSpec, update: impl FnOnce(&mut ModelManifest)) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    let mut manifest = match ModelManifest::read(dir) {
        Ok(m) => m,
        Err(Error::Path { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => ModelManifest::default(),
        Err(e) => return Err(e),
    };
    let name = stage_name(stage);
    let file = format!("{name}.fcnw");
    write_atomic(&dir.join(&file), &encode_network(net))?;
    manifest.stages.retain(|e| e.name != name);
    manifest.stages.push(StageEntry { name, weights: file });
    manifest.stages.sort_by(|a, b| a.name.cmp(&b.name));
    update(&mut manifest);
    manifest.write(dir)
}

/// Loads whichever stages the manifest lists, keyed by stage number.
pub fn load_stages(dir: &Path) -> Result<(ModelManifest, BTreeMap<usize, NetworkSpec>)> {
    let manifest = ModelManifest::read(dir)?;
    let mut nets = BTreeMap::new();
    for stage in 1..=3 {
        if let Some(entry) = manifest.entry(stage) {
            nets.insert(stage, read_stage(dir, entry)?);
        }
    }
    Ok((manifest, nets))
}

/// Loads a complete three-stage model. Nothing is returned unless every
/// file parses.
pub fn load_model(dir: &Path) -> Result<CascadeModel> {
    let manifest = ModelManifest::read(dir)?;
    if let Some(extra) = manifest.stages.iter().find(|e| !["stage1", "stage2", "stage3"].contains(&e.name.as_str())) {
        return Err(Error::Manifest(format!("unknown stage {:?}", extra.name)));
    }
    if manifest.stages.len() > 3 {
        return Err(Error::Manifest(format!("expected 3 stages, found {}", manifest.stages.len())));
    }
    let mut nets = Vec::with_capacity(3);
    for stage in 1..=3 {
        let entry = manifest.entry(stage).ok_or_else(|| Error::MissingStage(stage_name(stage)))?;
        nets.push(read_stage(dir, entry)?);
    }
    let stage3 = nets.pop().expect("three stages");
    let stage2 = nets.pop().expect("three stages");
    let stage1 = nets.pop().expect("three stages");
    let model = CascadeModel {
        stage1,
        stage2,
        stage3,
        thresholds: manifest.thresholds,
        proposal: manifest.proposal,
        pyramid: manifest.pyramid,
        verify: manifest.verify,
    };
    model.validate()?;
    Ok(model)
}
