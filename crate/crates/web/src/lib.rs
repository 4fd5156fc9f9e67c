//! WebAssembly bindings for the browser demo in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

use demo::{ProposalKnobs, SceneState};

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub struct Scene {
    state: SceneState,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Scene {
        Scene {
            state: SceneState::new(seed as u64),
        }
    }

    pub fn width(&self) -> usize {
        self.state.image.width()
    }

    pub fn height(&self) -> usize {
        self.state.image.height()
    }

    /// Planted faces as a JSON array of `[x, y, w, h]`.
    pub fn faces(&self) -> Result<String, JsValue> {
        let boxes: Vec<[f64; 4]> = self.state.faces.iter().map(|b| [b.x, b.y, b.w, b.h]).collect();
        to_json(&boxes)
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        self.state.image_rgba()
    }

    pub fn score_map_rgba(&self) -> Vec<u8> {
        self.state.map_rgba()
    }

    /// Recomputes the score map and returns the proposals as JSON.
    pub fn propose(&mut self, noise: f64, threshold: f64, min_cell_score: f64) -> Result<String, JsValue> {
        let knobs = ProposalKnobs {
            noise,
            threshold,
            min_cell_score,
        };
        let proposals = self.state.propose(knobs).map_err(|e| JsValue::from_str(&e))?;
        to_json(&proposals)
    }

    pub fn inspect_box(&self, x: f64, y: f64, w: f64, h: f64) -> Result<String, JsValue> {
        let view = self.state.inspect_box(x, y, w, h).map_err(|e| JsValue::from_str(&e))?;
        to_json(&view)
    }
}

#[wasm_bindgen]
pub fn receptive_field(layers: &str, width: usize, height: usize) -> Result<String, JsValue> {
    let report = demo::receptive_field(layers, width, height).map_err(|e| JsValue::from_str(&e))?;
    to_json(&report)
}

#[wasm_bindgen]
pub fn preset_layers(stage: usize) -> Option<String> {
    demo::preset_layers(stage)
}
