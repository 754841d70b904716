use wasm_bindgen::prelude::*;

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fermiSeries)]
pub fn fermi_series(profile: &str, eps: f64, x: f64, v: f64, horizon: f64) -> Result<Vec<f64>, JsValue> {
    js(crate::fermi_series(profile, eps, x, v, horizon))
}

#[wasm_bindgen(js_name = rayPath)]
pub fn ray_path(
    profile: &str,
    eps: f64,
    y: f64,
    angle: f64,
    horizon: f64,
    max_bounces: usize,
) -> Result<Vec<f64>, JsValue> {
    js(crate::ray_path(profile, eps, y, angle, horizon, max_bounces))
}

#[wasm_bindgen(js_name = pistonTracks)]
pub fn piston_tracks(eps: f64, x0: f64, left: f64, right: f64, horizon: f64) -> Result<Vec<f64>, JsValue> {
    js(crate::piston_tracks(eps, x0, left, right, horizon))
}
